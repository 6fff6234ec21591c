//! Scenario-driven checks of the a-priori estimates.
//!
//! A [`Scenario`] fixes a symbol, weights, a time measure, exponents, a
//! smoothness sequence and a family of initial data. [`verify_estimate`]
//! solves for every datum, integrates the left-hand side in time on the
//! measure's quadrature nodes and compares it with the right-hand side.
//! The empirical constant is the largest ratio over the family.

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::{fractional_laplacian, require_elliptic, solve_inhomogeneous, Forcing, Propagator};
use crate::littlewood_paley::{Flavor, LpFrame, NormSpec, SmoothnessSpec};
use crate::measures::{DyadicSequence, MeasureSpec, TimeMeasure};
use crate::numerics::{pairwise_sum, regression_slope};
use crate::spectral::{weighted_lp_norm_of, SpectralField, SpectralGrid};
use crate::symbols::{Symbol, SymbolSpec};
use crate::weights::{Weight, WeightSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub n: usize,
    pub half_width: f64,
}

impl GridSpec {
    pub fn build(&self) -> Result<SpectralGrid> {
        SpectralGrid::new(self.dim, self.n, self.half_width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateKind {
    /// `int ||u||^q_{H^r_p(w)} t^a mu(c dt) <= N (1 + mu_{a,T}) ||u0||^q_{B^{r - mu/q}}`.
    HomogeneousBessel,
    /// `int || |psi u| + |Delta^{gamma/2} u| ||^q_{H^{r - gamma}} t^a mu(c dt) <= N ||u0||^q_{dot B^{r - mu/q}}`.
    Gradient,
    /// `(int ||u||^q_{H^gamma} t^a mu(dt))^{1/q} <= N (1 + mu_{a,T}^{1/q}) ||u0||_{B^{gamma - mu_a/q}}`.
    PowerCase,
    /// `int ||u||^{p v 2}_{H^{2(a+1)/(p v 2)}_p(w)} t^a dt <= N int |u0|^p w`.
    SecondOrder,
    /// `int ||u||^q_{H^r} w'(t) dt <= N (1 + T)^q (||u0||^q_{B^{r - w'/q}} + int ||f||^q_{H^{r - gamma}} w'(t) dt)`.
    Inhomogeneous,
}

/// Initial-data family. Every datum is normalized to unit `L_p(w)` norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataFamily {
    /// `exp(-|x|^2 / w^2)` per width.
    Gaussian { widths: Vec<f64> },
    /// `exp(-|lambda x|^2 / width^2)` per dilation.
    Dilation { width: f64, lambdas: Vec<f64> },
    /// Spectrum equal to the block multiplier at each level.
    SingleBlock { levels: Vec<i32> },
    /// Uniform random spectra on the resolved band.
    Random { seed: u64, count: usize },
    /// `u0 = 0`, only meaningful with a forcing term.
    Zero,
}

/// Time-constant forcing `amplitude * cos(xi . x)` at a lattice mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingSpec {
    pub wavenumber: Vec<i64>,
    #[serde(default = "one")]
    pub amplitude: f64,
}

fn one() -> f64 {
    1.0
}

impl ForcingSpec {
    pub fn field(&self, grid: SpectralGrid) -> SpectralField {
        let mut k = [0i64; 3];
        for (slot, v) in k.iter_mut().zip(&self.wavenumber) {
            *slot = *v;
        }
        let step = grid.freq_step();
        let amp = self.amplitude;
        SpectralField::from_fn(grid, move |x| {
            let phase = step * (k[0] as f64 * x[0] + k[1] as f64 * x[1] + k[2] as f64 * x[2]);
            Complex64::new(amp * phase.cos(), 0.0)
        })
    }
}

fn default_panels() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub kind: EstimateKind,
    pub symbol: SymbolSpec,
    #[serde(default)]
    pub weight: WeightSpec,
    #[serde(default = "MeasureSpec::lebesgue")]
    pub measure: MeasureSpec,
    #[serde(default)]
    pub a: f64,
    pub p: f64,
    pub q: f64,
    /// Smoothness sequence; defaults to `gamma j`.
    #[serde(default)]
    pub r: Option<SmoothnessSpec>,
    pub grid: GridSpec,
    pub horizon: f64,
    pub data: Vec<DataFamily>,
    #[serde(default)]
    pub forcing: Option<ForcingSpec>,
    /// Geometric time panels of the first pre-flight pass.
    #[serde(default = "default_panels")]
    pub time_panels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatumResult {
    pub id: String,
    /// Block level for single-block data.
    pub level: Option<i32>,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeDiagnostics {
    pub levels: Vec<i32>,
    /// Slope of `log2` of the norm-level left-hand side against the level.
    pub lhs_slope: f64,
    pub rhs_slope: f64,
    /// Slope of the smoothness sequence.
    pub r_slope: f64,
    /// `r_slope - lhs_slope`: derivatives gained over unit-norm data.
    pub smoothing_exponent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Soft,
    Fail,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Soft => "soft",
            Verdict::Fail => "fail",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub scenario: String,
    pub kind: EstimateKind,
    pub data: Vec<DatumResult>,
    pub max_ratio: f64,
    /// `int_0^T t^a` against the measure used on the left-hand side.
    pub mu_at: f64,
    pub time_panels: usize,
    pub slope_diagnostics: Option<SlopeDiagnostics>,
    /// Largest `||psi u|| / ||Delta^{gamma/2} u||` over sampled times (gradient kind).
    pub gradient_split_max: Option<f64>,
    pub flags: Vec<String>,
    pub verdict: Verdict,
}

#[derive(Serialize)]
struct Summary<'a> {
    scenario: &'a str,
    max_ratio: f64,
    #[serde(rename = "mu_aT")]
    mu_at: f64,
    time_panels: usize,
    slope_diagnostics: &'a Option<SlopeDiagnostics>,
    gradient_split_max: Option<f64>,
    flags: &'a [String],
    verdict: Verdict,
}

impl EstimateReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("datum_id,lhs,rhs,ratio,flags\n");
        for d in &self.data {
            let _ = writeln!(out, "{},{:.12e},{:.12e},{:.12e},{}", d.id, d.lhs, d.rhs, d.ratio, d.flags.join("|"));
        }
        out
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::to_value(Summary {
            scenario: &self.scenario,
            max_ratio: self.max_ratio,
            mu_at: self.mu_at,
            time_panels: self.time_panels,
            slope_diagnostics: &self.slope_diagnostics,
            gradient_split_max: self.gradient_split_max,
            flags: &self.flags,
            verdict: self.verdict,
        })
        .expect("summary is serializable")
    }

    /// One-line human summary.
    pub fn line(&self) -> String {
        format!(
            "{}: {} max_ratio={:.6e} data={} verdict={}",
            self.scenario,
            serde_json::to_value(self.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
            self.max_ratio,
            self.data.len(),
            self.verdict
        )
    }
}

/// A datum with its id.
#[derive(Debug, Clone)]
pub struct Datum {
    pub id: String,
    pub level: Option<i32>,
    pub field: SpectralField,
}

fn gaussian(grid: SpectralGrid, width: f64) -> SpectralField {
    SpectralField::from_fn(grid, move |x| {
        let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
        Complex64::new((-r2 / (width * width)).exp(), 0.0)
    })
}

/// Materializes the data families, normalized in `L_p(w)`.
pub fn build_data(families: &[DataFamily], frame: &LpFrame, p: f64, w: &[f64]) -> Result<Vec<Datum>> {
    let grid = *frame.grid();
    let mut out = Vec::new();
    for fam in families {
        match fam {
            DataFamily::Gaussian { widths } => {
                for &wd in widths {
                    if !(wd > 0.0) {
                        return Err(invalid("widths", format!("must be positive, got {wd}")));
                    }
                    out.push(Datum {
                        id: format!("gaussian:w={wd}"),
                        level: None,
                        field: gaussian(grid, wd),
                    });
                }
            }
            DataFamily::Dilation { width, lambdas } => {
                for &l in lambdas {
                    if !(l > 0.0 && *width > 0.0) {
                        return Err(invalid("lambdas", "width and dilations must be positive"));
                    }
                    out.push(Datum {
                        id: format!("dilation:lambda={l}"),
                        level: None,
                        field: gaussian(grid, width / l),
                    });
                }
            }
            DataFamily::SingleBlock { levels } => {
                for &j in levels {
                    let m = frame.block_multiplier(j)?;
                    let spec = m.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                    out.push(Datum {
                        id: format!("block:J={j}"),
                        level: Some(j),
                        field: SpectralField::from_spectrum(grid, spec)?,
                    });
                }
            }
            DataFamily::Random { seed, count } => {
                let mask = frame.resolved_mask();
                for k in 0..*count {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
                    let spec = mask
                        .iter()
                        .map(|&on| {
                            let (re, im) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                            if on {
                                Complex64::new(re, im)
                            } else {
                                Complex64::new(0.0, 0.0)
                            }
                        })
                        .collect();
                    out.push(Datum {
                        id: format!("random:seed={}", seed.wrapping_add(k as u64)),
                        level: None,
                        field: SpectralField::from_spectrum(grid, spec)?,
                    });
                }
            }
            DataFamily::Zero => out.push(Datum {
                id: "zero".into(),
                level: None,
                field: SpectralField::zeros(grid),
            }),
        }
    }
    for d in &mut out {
        let n = weighted_lp_norm_of(d.field.values(), &grid, p, Some(w))?;
        if n > 0.0 {
            d.field = d.field.scale(Complex64::new(1.0 / n, 0.0));
        }
    }
    Ok(out)
}

/// Spatial norm evaluated at every time node.
enum LhsNorm {
    /// `||u||_{H^r_p(w)}` through the dyadic frame.
    Frame(NormSpec),
    /// `|| |psi u| + |Delta^{gamma/2} u| ||_{H^{r - gamma}}`.
    Gradient(NormSpec),
    /// `||(1 - Delta)^{s/2} u||_{L_p(w)}`.
    Classical(f64),
}

enum RhsNorm {
    Besov(NormSpec),
    /// `||u0||^p_{L_p(w)}`.
    LpPower,
}

struct Context {
    name: String,
    kind: EstimateKind,
    grid: SpectralGrid,
    frame: LpFrame,
    symbol: Symbol,
    w: Vec<f64>,
    p: f64,
    /// Power of the spatial norm inside the time integral.
    q_time: f64,
    /// Power relating the displayed sides to norms (1 for the root form).
    display_power: f64,
    measure: TimeMeasure,
    a_lhs: f64,
    horizon: f64,
    lhs_norm: LhsNorm,
    rhs_norm: RhsNorm,
    /// Multiplies the data term on the right-hand side.
    rhs_factor: f64,
    mu_at: f64,
    r_slope: f64,
    forcing: Option<(Forcing, NormSpec)>,
    data: Vec<Datum>,
    panels: usize,
}

fn sequence_slope(r: &DyadicSequence) -> f64 {
    let xs: Vec<f64> = (r.j_lo..=r.j_hi()).map(|j| j as f64).collect();
    if xs.len() < 2 {
        return 0.0;
    }
    regression_slope(&xs, &r.values)
}

impl Context {
    fn new(s: &Scenario) -> Result<Self> {
        if !(s.p > 1.0 && s.p.is_finite()) {
            return Err(invalid("p", format!("must lie in (1, inf), got {}", s.p)));
        }
        if !(s.q > 0.0 && s.q.is_finite()) {
            return Err(invalid("q", format!("must lie in (0, inf), got {}", s.q)));
        }
        if !(s.horizon > 0.0 && s.horizon.is_finite()) {
            return Err(invalid("horizon", format!("must be positive, got {}", s.horizon)));
        }
        match s.kind {
            EstimateKind::HomogeneousBessel | EstimateKind::Gradient | EstimateKind::PowerCase if !(s.a > 0.0) => {
                return Err(invalid("a", format!("must be positive for {:?}, got {}", s.kind, s.a)));
            }
            EstimateKind::SecondOrder if !(s.a > -1.0) => {
                return Err(invalid("a", format!("must exceed -1 for second_order, got {}", s.a)));
            }
            _ => {}
        }
        if s.data.is_empty() {
            return Err(invalid("data", "at least one data family required"));
        }
        if s.time_panels == 0 {
            return Err(invalid("time_panels", "must be positive"));
        }
        if s.forcing.is_some() && s.kind != EstimateKind::Inhomogeneous {
            return Err(invalid("forcing", "only the inhomogeneous kind takes a forcing term"));
        }
        let grid = s.grid.build()?;
        let frame = LpFrame::new(&grid);
        let symbol = s.symbol.build(grid.dim(), Some(&grid))?;
        require_elliptic(&symbol, &grid)?;
        let gamma = symbol.gamma();
        let weight = Weight::from(&s.weight);
        let w = weight.node_values(&grid)?;
        if let Some((index, &value)) = w.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::WeightUndefined { index, value });
        }
        let (lo, hi) = grid.band();
        let (lo, hi) = (lo - 2, hi + 2);
        let r = match &s.r {
            Some(spec) => spec.sequence(lo, hi),
            None => DyadicSequence::linear(gamma, 0.0, lo, hi),
        };
        let gamma_seq = DyadicSequence::linear(gamma, 0.0, lo, hi);
        let base = s.measure.build()?;
        let norm_spec = |r: DyadicSequence, flavor: Flavor, homogeneous: bool, q: f64| NormSpec {
            p: s.p,
            q,
            flavor,
            homogeneous,
            r,
            weight: weight.clone(),
        };
        let data = build_data(&s.data, &frame, s.p, &w)?;

        let c_theorem = s.q.min(1.0) * symbol.kappa() / 16f64.powf(gamma);
        let (measure, a_lhs, q_time, display_power, lhs_norm, rhs_norm, r_slope) = match s.kind {
            EstimateKind::HomogeneousBessel | EstimateKind::Gradient | EstimateKind::PowerCase => {
                let mu = base.control_sequence(gamma, s.a, lo, hi)?.sequence;
                let data_r = r.minus_scaled(&mu, 1.0 / s.q)?;
                let measure = if s.kind == EstimateKind::PowerCase {
                    base.clone()
                } else {
                    base.scaled(c_theorem)?
                };
                let lhs = match s.kind {
                    EstimateKind::Gradient => {
                        LhsNorm::Gradient(norm_spec(r.minus_scaled(&gamma_seq, 1.0)?, Flavor::Bessel, false, 2.0))
                    }
                    _ => LhsNorm::Frame(norm_spec(r.clone(), Flavor::Bessel, false, 2.0)),
                };
                let homogeneous_besov = s.kind == EstimateKind::Gradient;
                let rhs = RhsNorm::Besov(norm_spec(data_r, Flavor::Besov, homogeneous_besov, s.q));
                let dp = if s.kind == EstimateKind::PowerCase { 1.0 } else { s.q };
                (measure, s.a, s.q, dp, lhs, rhs, sequence_slope(&r))
            }
            EstimateKind::SecondOrder => {
                if (gamma - 2.0).abs() > 1e-12 {
                    return Err(invalid("symbol", format!("second_order needs a symbol of order 2, got {gamma}")));
                }
                // t^a dt written as t^{a0} (t^{a - a0} dt) with a0 > 0.
                let a0 = (s.a + 1.0) / 2.0;
                let measure = TimeMeasure::power(s.a - a0);
                let qq = s.p.max(2.0);
                let smooth = 2.0 * (s.a + 1.0) / qq;
                (measure, a0, qq, qq, LhsNorm::Classical(smooth), RhsNorm::LpPower, smooth)
            }
            EstimateKind::Inhomogeneous => {
                let wp: Vec<f64> = (lo..=hi)
                    .map(|j| -(base.mass_below(2f64.powf(-(j as f64) * gamma))).log2())
                    .collect();
                if let Some(k) = wp.iter().position(|v| !v.is_finite()) {
                    return Err(Error::Overflow(lo + k as i32));
                }
                let wp = DyadicSequence::new(lo, wp);
                let data_r = r.minus_scaled(&wp, 1.0 / s.q)?;
                (
                    base.clone(),
                    0.0,
                    s.q,
                    s.q,
                    LhsNorm::Frame(norm_spec(r.clone(), Flavor::Bessel, false, 2.0)),
                    RhsNorm::Besov(norm_spec(data_r, Flavor::Besov, false, s.q)),
                    sequence_slope(&r),
                )
            }
        };
        let mu_at = pairwise_sum(
            &measure
                .quadrature_nodes(a_lhs, s.horizon, s.time_panels)?
                .iter()
                .map(|n| n.1)
                .collect::<Vec<_>>(),
        );
        let rhs_factor = match s.kind {
            EstimateKind::HomogeneousBessel => 1.0 + mu_at,
            EstimateKind::PowerCase => 1.0 + mu_at.powf(1.0 / s.q),
            EstimateKind::Inhomogeneous => (1.0 + s.horizon).powf(s.q),
            _ => 1.0,
        };
        let forcing = match (&s.forcing, s.kind) {
            (Some(f), EstimateKind::Inhomogeneous) => {
                let field = f.field(grid);
                let spec = norm_spec(r.minus_scaled(&gamma_seq, 1.0)?, Flavor::Bessel, false, 2.0);
                Some((Forcing::constant(field), spec))
            }
            _ => None,
        };
        Ok(Context {
            name: s.name.clone(),
            kind: s.kind,
            grid,
            frame,
            symbol,
            w,
            p: s.p,
            q_time,
            display_power,
            measure,
            a_lhs,
            horizon: s.horizon,
            lhs_norm,
            rhs_norm,
            rhs_factor,
            mu_at,
            r_slope,
            forcing,
            data,
            panels: s.time_panels,
        })
    }

    fn spatial_norm(&self, u: &SpectralField, t: f64) -> Result<(f64, Option<f64>)> {
        match &self.lhs_norm {
            LhsNorm::Frame(spec) => Ok((self.frame.space_norm_with(u, spec, &self.w)?.value, None)),
            LhsNorm::Gradient(spec) => {
                let psi_u = u.apply_multiplier(|xi| self.symbol.eval(t, xi));
                let lap = fractional_laplacian(u, self.symbol.gamma() / 2.0);
                let sum: Vec<Complex64> = psi_u
                    .values()
                    .iter()
                    .zip(lap.values())
                    .map(|(a, b)| Complex64::new(a.norm() + b.norm(), 0.0))
                    .collect();
                let v = SpectralField::from_values(self.grid, sum)?;
                let total = self.frame.space_norm_with(&v, spec, &self.w)?.value;
                let a = self.frame.space_norm_with(&psi_u, spec, &self.w)?.value;
                let b = self.frame.space_norm_with(&lap, spec, &self.w)?.value;
                let split = if b > 0.0 { Some(a / b) } else { None };
                Ok((total, split))
            }
            LhsNorm::Classical(s) => {
                let lifted = u.apply_multiplier(|xi| {
                    let r2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
                    Complex64::new((1.0 + r2).powf(s / 2.0), 0.0)
                });
                Ok((weighted_lp_norm_of(lifted.values(), &self.grid, self.p, Some(&self.w))?, None))
            }
        }
    }

    fn data_norm(&self, u0: &SpectralField) -> Result<f64> {
        match &self.rhs_norm {
            RhsNorm::Besov(spec) => Ok(self.frame.space_norm_with(u0, spec, &self.w)?.value.powf(self.q_time)),
            RhsNorm::LpPower => Ok(weighted_lp_norm_of(u0.values(), &self.grid, self.p, Some(&self.w))?.powf(self.p)),
        }
    }

    /// Left-hand sides (time integrals at `q_time` level) for every datum,
    /// the forcing integral, and the largest gradient split.
    fn integrate(&self, panels: usize) -> Result<(Vec<f64>, f64, Option<f64>)> {
        let nodes = self.measure.quadrature_nodes(self.a_lhs, self.horizon, panels)?;
        let duhamel = match &self.forcing {
            Some((f, _)) => {
                let mut order: Vec<usize> = (0..nodes.len()).collect();
                order.sort_by(|&i, &j| nodes[i].0.total_cmp(&nodes[j].0));
                let times: Vec<f64> = order.iter().map(|&i| nodes[i].0).collect();
                let traj = solve_inhomogeneous(&self.symbol, f, &times, true)?;
                let mut states = vec![None; nodes.len()];
                for (k, &i) in order.iter().enumerate() {
                    states[i] = Some(traj.states[k].clone());
                }
                Some(states.into_iter().map(|s| s.unwrap()).collect::<Vec<_>>())
            }
            None => None,
        };
        let forcing_term = match &self.forcing {
            Some((f, spec)) => {
                let terms = nodes
                    .par_iter()
                    .map(|&(t, wt)| Ok(wt * self.frame.space_norm_with(&f.at(t), spec, &self.w)?.value.powf(self.q_time)))
                    .collect::<Result<Vec<f64>>>()?;
                pairwise_sum(&terms)
            }
            None => 0.0,
        };
        let mut split_max: Option<f64> = None;
        let mut lhs = Vec::with_capacity(self.data.len());
        for d in &self.data {
            let terms = nodes
                .par_iter()
                .enumerate()
                .map(|(k, &(t, wt))| {
                    let mut u = Propagator::new(&self.symbol, &self.grid, 0.0, t)?.apply(&d.field);
                    if let Some(states) = &duhamel {
                        u = u.combine(Complex64::new(1.0, 0.0), &states[k], Complex64::new(1.0, 0.0));
                    }
                    let (n, split) = self.spatial_norm(&u, t)?;
                    Ok((wt * n.powf(self.q_time), split))
                })
                .collect::<Result<Vec<(f64, Option<f64>)>>>()?;
            for s in terms.iter().filter_map(|t| t.1) {
                split_max = Some(split_max.map_or(s, |m: f64| m.max(s)));
            }
            lhs.push(pairwise_sum(&terms.iter().map(|t| t.0).collect::<Vec<_>>()));
        }
        Ok((lhs, forcing_term, split_max))
    }

    fn run(&self) -> Result<EstimateReport> {
        let mut flags = Vec::new();
        // Pre-flight: double the panel count until every datum's left-hand
        // side moves by less than 1%, up to 512 panels.
        let mut panels = self.panels;
        let mut current = self.integrate(panels)?;
        loop {
            if panels * 2 > 512 {
                if panels < 512 || self.panels >= 512 {
                    break;
                }
            }
            let next = self.integrate(panels * 2)?;
            let moved = current
                .0
                .iter()
                .zip(&next.0)
                .chain(std::iter::once((&current.1, &next.1)))
                .any(|(a, b)| (a - b).abs() > 0.01 * a.abs().max(b.abs()));
            panels *= 2;
            current = next;
            if !moved {
                break;
            }
            if panels >= 512 {
                flags.push("time_quadrature_unconverged".to_string());
                break;
            }
        }
        let (lhs_raw, forcing_term, split_max) = current;

        let data_norms = self
            .data
            .par_iter()
            .map(|d| self.data_norm(&d.field))
            .collect::<Result<Vec<f64>>>()?;
        let root = self.display_power;
        let mut data = Vec::with_capacity(self.data.len());
        for ((d, &l), &dn) in self.data.iter().zip(&lhs_raw).zip(&data_norms) {
            // Displayed sides: q-th power level unless the root form applies.
            let to_display = |v: f64| if root == 1.0 { v.powf(1.0 / self.q_time) } else { v };
            let lhs = to_display(l);
            let rhs = match self.kind {
                EstimateKind::PowerCase => self.rhs_factor * dn.powf(1.0 / self.q_time),
                EstimateKind::Inhomogeneous => self.rhs_factor * (dn + forcing_term),
                _ => self.rhs_factor * dn,
            };
            let mut dflags = Vec::new();
            let ratio = if rhs > 0.0 {
                lhs / rhs
            } else if lhs > 0.0 {
                return Err(Error::EstimateViolation(lhs));
            } else {
                dflags.push("zero_datum".to_string());
                0.0
            };
            if !ratio.is_finite() {
                dflags.push("non_finite".to_string());
            }
            data.push(DatumResult {
                id: d.id.clone(),
                level: d.level,
                lhs,
                rhs,
                ratio,
                flags: dflags,
            });
        }
        let max_ratio = data.iter().map(|d| d.ratio).fold(0.0, f64::max);
        let slope_diagnostics = self.slopes(&data, &data_norms);
        if let Some(s) = split_max {
            if s > self.symbol.m() / self.symbol.kappa() * (1.0 + 1e-9) {
                flags.push("gradient_split_exceeds_M_over_kappa".to_string());
            }
        }
        let verdict = if data.iter().any(|d| d.flags.iter().any(|f| f == "non_finite")) {
            Verdict::Fail
        } else if flags.is_empty() && data.iter().all(|d| d.flags.is_empty()) {
            Verdict::Pass
        } else {
            Verdict::Soft
        };
        Ok(EstimateReport {
            scenario: self.name.clone(),
            kind: self.kind,
            data,
            max_ratio,
            mu_at: self.mu_at,
            time_panels: panels,
            slope_diagnostics,
            gradient_split_max: split_max,
            flags,
            verdict,
        })
    }

    fn slopes(&self, data: &[DatumResult], data_norms: &[f64]) -> Option<SlopeDiagnostics> {
        let blocks: Vec<(i32, f64, f64)> = data
            .iter()
            .zip(data_norms)
            .filter_map(|(d, &dn)| {
                let lhs_norm = if self.display_power == 1.0 { d.lhs } else { d.lhs.powf(1.0 / self.q_time) };
                d.level.map(|j| (j, lhs_norm, dn.powf(1.0 / self.q_time)))
            })
            .collect();
        if blocks.len() < 2 {
            return None;
        }
        let xs: Vec<f64> = blocks.iter().map(|b| b.0 as f64).collect();
        let lhs_slope = regression_slope(&xs, &blocks.iter().map(|b| b.1.log2()).collect::<Vec<_>>());
        let rhs_slope = regression_slope(&xs, &blocks.iter().map(|b| b.2.log2()).collect::<Vec<_>>());
        Some(SlopeDiagnostics {
            levels: blocks.iter().map(|b| b.0).collect(),
            lhs_slope,
            rhs_slope,
            r_slope: self.r_slope,
            smoothing_exponent: self.r_slope - lhs_slope,
        })
    }
}

/// Runs one scenario.
pub fn verify_estimate(scenario: &Scenario) -> Result<EstimateReport> {
    Context::new(scenario)?.run()
}

/// Runs an inhomogeneous scenario: `u = u1 + u2` with `u1` the homogeneous
/// solution and `u2` the Duhamel term from zero data.
pub fn verify_inhomogeneous(scenario: &Scenario) -> Result<EstimateReport> {
    if scenario.kind != EstimateKind::Inhomogeneous {
        return Err(invalid("kind", "verify_inhomogeneous needs kind = inhomogeneous"));
    }
    verify_estimate(scenario)
}

/// `t0^a ||u(t0)||^q_{H^r}` evaluated directly, for single-atom checks.
pub fn single_time_lhs(scenario: &Scenario, datum: &SpectralField, t0: f64) -> Result<f64> {
    let ctx = Context::new(scenario)?;
    let u = Propagator::new(&ctx.symbol, &ctx.grid, 0.0, t0)?.apply(datum);
    let (n, _) = ctx.spatial_norm(&u, t0)?;
    Ok(t0.powf(ctx.a_lhs) * n.powf(ctx.q_time))
}

/// The normalized data of a scenario.
pub fn scenario_data(scenario: &Scenario) -> Result<Vec<Datum>> {
    Ok(Context::new(scenario)?.data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::DensitySpec;

    fn heat_power_case() -> Scenario {
        Scenario {
            name: "heat-power".into(),
            kind: EstimateKind::PowerCase,
            symbol: SymbolSpec::heat(),
            weight: WeightSpec::Unit,
            measure: MeasureSpec::lebesgue(),
            a: 0.5,
            p: 2.0,
            q: 2.0,
            r: None,
            grid: GridSpec {
                dim: 1,
                n: 256,
                half_width: 16.0,
            },
            horizon: 1.0,
            data: vec![DataFamily::SingleBlock { levels: vec![2, 3] }],
            forcing: None,
            time_panels: 64,
        }
    }

    #[test]
    fn rejects_bad_scenarios() {
        let mut s = heat_power_case();
        s.a = 0.0;
        assert!(verify_estimate(&s).is_err());
        let mut s = heat_power_case();
        s.q = 0.0;
        assert!(verify_estimate(&s).is_err());
        let mut s = heat_power_case();
        s.data.clear();
        assert!(verify_estimate(&s).is_err());
        let mut s = heat_power_case();
        s.symbol = SymbolSpec {
            kind: crate::symbols::SymbolKindName::AntiDissipative,
            gamma: Some(2.0),
            ..SymbolSpec::heat()
        };
        assert!(matches!(verify_estimate(&s), Err(Error::NotElliptic { .. })));
    }

    #[test]
    fn report_shape() {
        let rep = verify_estimate(&heat_power_case()).unwrap();
        assert_eq!(rep.data.len(), 2);
        assert!(rep.max_ratio.is_finite() && rep.max_ratio > 0.0);
        assert!(rep.data.iter().all(|d| d.lhs >= 0.0 && d.rhs > 0.0));
        let csv = rep.to_csv();
        assert!(csv.starts_with("datum_id,lhs,rhs,ratio,flags\n"));
        assert_eq!(csv.lines().count(), 3);
        let js = rep.summary_json();
        for key in ["max_ratio", "mu_aT", "slope_diagnostics", "verdict"] {
            assert!(js.get(key).is_some(), "{key}");
        }
        // mu_{a,T} for t^{1/2} dt on [0, 1].
        assert!((rep.mu_at - 2.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn second_order_shift_matches_direct_power() {
        let m = TimeMeasure::power(-0.25);
        let shifted = pairwise_sum(&m.quadrature_nodes(0.5, 1.0, 64).unwrap().iter().map(|n| n.1).collect::<Vec<_>>());
        // int_0^1 t^{1/4} dt
        assert!((shifted - 0.8).abs() < 1e-12);
        let s = Scenario {
            kind: EstimateKind::SecondOrder,
            a: -0.5,
            data: vec![DataFamily::Gaussian { widths: vec![1.0] }],
            measure: MeasureSpec {
                density: Some(DensitySpec::Lebesgue),
                atoms: vec![],
                scale: 1.0,
            },
            ..heat_power_case()
        };
        let rep = verify_estimate(&s).unwrap();
        assert!(rep.max_ratio.is_finite());
        assert!((rep.mu_at - 2.0).abs() < 1e-10);
    }

    fn block_power_case(n: usize, half_width: f64, levels: Vec<i32>) -> Scenario {
        Scenario {
            grid: GridSpec { dim: 1, n, half_width },
            data: vec![DataFamily::SingleBlock { levels }],
            ..heat_power_case()
        }
    }

    #[test]
    fn power_case_recovers_smoothing_exponent() {
        let rep = verify_estimate(&block_power_case(1024, 16.0, vec![2, 3, 4, 5])).unwrap();
        let sd = rep.slope_diagnostics.unwrap();
        assert_eq!(sd.levels, vec![2, 3, 4, 5]);
        assert!((sd.smoothing_exponent - 1.5).abs() <= 0.05, "{sd:?}");
    }

    #[test]
    fn dirac_atom_matches_single_time_evaluation() {
        let s = Scenario {
            a: 1.0,
            measure: MeasureSpec {
                density: None,
                atoms: vec![(0.25, 1.0)],
                scale: 1.0,
            },
            ..block_power_case(1024, 16.0, vec![2, 3, 4, 5])
        };
        let rep = verify_estimate(&s).unwrap();
        let data = scenario_data(&s).unwrap();
        for (d, r) in data.iter().zip(&rep.data) {
            let direct = single_time_lhs(&s, &d.field, 0.25).unwrap();
            let lhs_q = r.lhs.powf(s.q);
            assert!((lhs_q - direct).abs() <= 1e-10 * direct, "{} {lhs_q} {direct}", d.id);
            assert!(r.ratio.is_finite() && r.ratio > 0.0);
        }
    }

    fn heat_inhomogeneous(forcing: Option<ForcingSpec>, data: Vec<DataFamily>) -> Scenario {
        Scenario {
            name: "heat-inhom".into(),
            kind: EstimateKind::Inhomogeneous,
            a: 0.0,
            grid: GridSpec {
                dim: 1,
                n: 256,
                half_width: 16.0,
            },
            data,
            forcing,
            ..heat_power_case()
        }
    }

    #[test]
    fn zero_forcing_reduces_to_homogeneous() {
        let data = vec![DataFamily::Gaussian { widths: vec![1.0, 2.0] }];
        let plain = verify_inhomogeneous(&heat_inhomogeneous(None, data.clone())).unwrap();
        let zero = ForcingSpec {
            wavenumber: vec![16],
            amplitude: 0.0,
        };
        let forced = verify_inhomogeneous(&heat_inhomogeneous(Some(zero), data)).unwrap();
        for (a, b) in plain.data.iter().zip(&forced.data) {
            assert_eq!(a.lhs, b.lhs);
            assert_eq!(a.rhs, b.rhs);
            assert_eq!(a.ratio, b.ratio);
        }
    }

    #[test]
    fn single_mode_duhamel_matches_closed_form() {
        // xi = pi, f = cos(pi x): u(t) = (1 - e^{-lambda t}) / lambda f with lambda = pi^2.
        let f = ForcingSpec {
            wavenumber: vec![16],
            amplitude: 1.0,
        };
        let s = heat_inhomogeneous(Some(f), vec![DataFamily::Zero]);
        let rep = verify_inhomogeneous(&s).unwrap();
        let grid = s.grid.build().unwrap();
        let frame = LpFrame::new(&grid);
        let mode = SpectralField::from_fn(grid, |x| Complex64::new((std::f64::consts::PI * x[0]).cos(), 0.0));
        let (lo, hi) = grid.band();
        let spec = |slope: f64| NormSpec {
            p: 2.0,
            q: 2.0,
            flavor: Flavor::Bessel,
            homogeneous: false,
            r: DyadicSequence::linear(slope, 0.0, lo - 2, hi + 2),
            weight: Weight::unit(),
        };
        let h_r = frame.space_norm(&mode, &spec(2.0)).unwrap().value;
        let h_0 = frame.space_norm(&mode, &spec(0.0)).unwrap().value;
        let lambda = std::f64::consts::PI.powi(2);
        let t = s.horizon;
        let c2 = (t - 2.0 * (1.0 - (-lambda * t).exp()) / lambda + (1.0 - (-2.0 * lambda * t).exp()) / (2.0 * lambda))
            / (lambda * lambda);
        let lhs = h_r * h_r * c2;
        let rhs = (1.0 + t).powi(2) * t * h_0 * h_0;
        let d = &rep.data[0];
        assert!((d.lhs - lhs).abs() <= 1e-6 * lhs, "{} {lhs}", d.lhs);
        assert!((d.rhs - rhs).abs() <= 1e-6 * rhs, "{} {rhs}", d.rhs);
        assert!((d.ratio - lhs / rhs).abs() <= 1e-6 * lhs / rhs);
    }

    #[test]
    fn joint_left_side_is_subadditive() {
        let f = ForcingSpec {
            wavenumber: vec![16],
            amplitude: 1.0,
        };
        let data = vec![DataFamily::Gaussian { widths: vec![1.0] }];
        let homog = verify_inhomogeneous(&heat_inhomogeneous(None, data.clone())).unwrap();
        let duhamel = verify_inhomogeneous(&heat_inhomogeneous(Some(f.clone()), vec![DataFamily::Zero])).unwrap();
        let joint = verify_inhomogeneous(&heat_inhomogeneous(Some(f), data)).unwrap();
        // Norm level: (int ||u1 + u2||^q)^{1/q} <= C ((int ||u1||^q)^{1/q} + (int ||u2||^q)^{1/q}).
        let q: f64 = 2.0;
        let c = 2f64.powf(1.0 / q - 1.0).max(1.0);
        let lhs = joint.data[0].lhs.powf(1.0 / q);
        let bound = c * (homog.data[0].lhs.powf(1.0 / q) + duhamel.data[0].lhs.powf(1.0 / q));
        assert!(lhs <= bound * (1.0 + 1e-12), "{lhs} {bound}");
    }

    #[test]
    fn csv_is_independent_of_worker_count() {
        let s = block_power_case(256, 16.0, vec![1, 2, 3]);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| verify_estimate(&s).unwrap().to_csv())
        };
        let one = run(1);
        assert_eq!(one, run(4));
        assert_eq!(one, run(8));
    }
}
