//! Borel measures on `(0, inf)`: a density with a declared endpoint
//! exponent, point masses, and a scale `c` giving the scaled measure
//! `mu(c dt)` with `int f(t) mu(c dt) = int f(t / c) mu(dt)`.
//!
//! Density integrals use composite 16-point Gauss-Legendre on geometric
//! panels, split at density breakpoints.

use std::f64::consts::LN_2;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::{gauss16, log_sum_exp, pairwise_sum};

type DensityFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

const MAX_PANELS: usize = 20_000;
const TAIL_RTOL: f64 = 1e-16;
const UPPER_CUTOFF: f64 = 1e-18;
const LOG_SWITCH: f64 = 1e-300;

#[derive(Clone)]
pub enum Density {
    /// `t^a`.
    Power(f64),
    /// `sum_i t^{b_i}`.
    SumOfPowers(Vec<f64>),
    /// `low` on `[2^k, 2^{k+1})` for even `k`, `high` for odd `k`.
    DyadicBlocks { low: f64, high: f64 },
    /// Callable with declared endpoint exponent and smoothness breakpoints.
    Custom {
        name: String,
        f: DensityFn,
        e0: f64,
        breakpoints: Vec<f64>,
    },
}

impl fmt::Debug for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Density::Power(a) => write!(f, "Power({a})"),
            Density::SumOfPowers(b) => write!(f, "SumOfPowers({b:?})"),
            Density::DyadicBlocks { low, high } => write!(f, "DyadicBlocks({low}, {high})"),
            Density::Custom { name, e0, .. } => write!(f, "Custom({name}, e0 = {e0})"),
        }
    }
}

impl Density {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Density::Power(a) => t.powf(*a),
            Density::SumOfPowers(bs) => bs.iter().map(|b| t.powf(*b)).sum(),
            Density::DyadicBlocks { low, high } => {
                if t.log2().floor().rem_euclid(2.0) == 0.0 {
                    *low
                } else {
                    *high
                }
            }
            Density::Custom { f, .. } => f(t),
        }
    }

    /// Exponent `e0` with `rho(t) ~ t^{e0}` as `t -> 0`.
    pub fn endpoint_exponent(&self) -> f64 {
        match self {
            Density::Power(a) => *a,
            Density::SumOfPowers(bs) => bs.iter().cloned().fold(f64::INFINITY, f64::min),
            Density::DyadicBlocks { .. } => 0.0,
            Density::Custom { e0, .. } => *e0,
        }
    }

    fn breakpoints_in(&self, a: f64, b: f64) -> Vec<f64> {
        match self {
            Density::DyadicBlocks { .. } => {
                let mut k = a.log2().floor() as i32 + 1;
                let mut out = Vec::new();
                while 2f64.powi(k) < b {
                    if 2f64.powi(k) > a {
                        out.push(2f64.powi(k));
                    }
                    k += 1;
                }
                out
            }
            Density::Custom { breakpoints, .. } => breakpoints.iter().copied().filter(|&x| x > a && x < b).collect(),
            _ => Vec::new(),
        }
    }

    /// `rho^e`.
    pub fn powered(&self, e: f64) -> Density {
        match self {
            Density::Power(a) => Density::Power(a * e),
            Density::DyadicBlocks { low, high } => Density::DyadicBlocks {
                low: low.powf(e),
                high: high.powf(e),
            },
            other => {
                let base = other.clone();
                let e0 = other.endpoint_exponent() * e;
                let breakpoints = match other {
                    Density::Custom { breakpoints, .. } => breakpoints.clone(),
                    _ => Vec::new(),
                };
                Density::Custom {
                    name: format!("{other:?}^{e}"),
                    f: Arc::new(move |t| base.eval(t).powf(e)),
                    e0,
                    breakpoints,
                }
            }
        }
    }
}

/// `density(t) dt + sum_i m_i delta_{t_i}`, then scaled by `c`.
#[derive(Debug, Clone)]
pub struct TimeMeasure {
    density: Option<Density>,
    atoms: Vec<(f64, f64)>,
    scale: f64,
}

/// JSON form of a density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    Lebesgue,
    Power { a: f64 },
    SumOfPowers { b: Vec<f64> },
    AinftyBlocks {
        #[serde(default = "one")]
        low: f64,
        #[serde(default = "two")]
        high: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

/// JSON form of a measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    #[serde(default)]
    pub density: Option<DensitySpec>,
    #[serde(default)]
    pub atoms: Vec<(f64, f64)>,
    #[serde(default = "one")]
    pub scale: f64,
}

impl MeasureSpec {
    pub fn lebesgue() -> Self {
        MeasureSpec {
            density: Some(DensitySpec::Lebesgue),
            atoms: Vec::new(),
            scale: 1.0,
        }
    }

    pub fn build(&self) -> Result<TimeMeasure> {
        let density = self.density.as_ref().map(|d| match d {
            DensitySpec::Lebesgue => Density::Power(0.0),
            DensitySpec::Power { a } => Density::Power(*a),
            DensitySpec::SumOfPowers { b } => Density::SumOfPowers(b.clone()),
            DensitySpec::AinftyBlocks { low, high } => Density::DyadicBlocks { low: *low, high: *high },
        });
        TimeMeasure::new(density, self.atoms.clone(), self.scale)
    }
}

/// A dyadic sequence `j -> r(j)` on `[j_lo, j_hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadicSequence {
    pub j_lo: i32,
    pub values: Vec<f64>,
}

impl DyadicSequence {
    pub fn new(j_lo: i32, values: Vec<f64>) -> Self {
        DyadicSequence { j_lo, values }
    }

    /// `r(j) = slope * j + offset` on `[lo, hi]`.
    pub fn linear(slope: f64, offset: f64, lo: i32, hi: i32) -> Self {
        DyadicSequence {
            j_lo: lo,
            values: (lo..=hi).map(|j| slope * j as f64 + offset).collect(),
        }
    }

    pub fn zero(lo: i32, hi: i32) -> Self {
        Self::linear(0.0, 0.0, lo, hi)
    }

    pub fn j_hi(&self) -> i32 {
        self.j_lo + self.values.len() as i32 - 1
    }

    pub fn covers(&self, lo: i32, hi: i32) -> bool {
        lo >= self.j_lo && hi <= self.j_hi()
    }

    pub fn get(&self, j: i32) -> Option<f64> {
        if j < self.j_lo || j > self.j_hi() {
            return None;
        }
        Some(self.values[(j - self.j_lo) as usize])
    }

    /// `sup_j |r(j+1) - r(j)|`.
    pub fn diff_seminorm(&self) -> f64 {
        self.values.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max)
    }

    pub fn differences(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// `self - c * other` on the common range.
    pub fn minus_scaled(&self, other: &DyadicSequence, c: f64) -> Result<DyadicSequence> {
        let lo = self.j_lo.max(other.j_lo);
        let hi = self.j_hi().min(other.j_hi());
        if lo > hi {
            return Err(Error::SequenceCoverage { lo: self.j_lo, hi: self.j_hi() });
        }
        Ok(DyadicSequence {
            j_lo: lo,
            values: (lo..=hi).map(|j| self.get(j).unwrap() - c * other.get(j).unwrap()).collect(),
        })
    }

    pub fn negated(&self) -> DyadicSequence {
        DyadicSequence {
            j_lo: self.j_lo,
            values: self.values.iter().map(|v| -v).collect(),
        }
    }
}

/// Laplace control data: `L_mu(2^{gamma j}) <= N 2^{j gamma a} 2^{-mu(j)}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaplaceControl {
    pub gamma: f64,
    pub a: f64,
    pub sequence: DyadicSequence,
    pub constant: f64,
    pub diff_seminorm: f64,
}

/// Sampled supremum with bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoublingReport {
    pub value: f64,
    pub infinite: bool,
    pub intervals: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakScaling {
    pub k: f64,
    pub b_k: f64,
    pub big_b_k: f64,
    pub skipped: usize,
    pub pass: bool,
}

/// Default sample endpoints `2^{i/4}`, `i in [-80, 80]`.
pub fn dyadic_samples() -> Vec<f64> {
    (-80..=80).map(|i| 2f64.powf(i as f64 / 4.0)).collect()
}

impl TimeMeasure {
    pub fn new(density: Option<Density>, atoms: Vec<(f64, f64)>, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(invalid("scale", format!("must be positive, got {scale}")));
        }
        if let Some(d) = &density {
            let e0 = d.endpoint_exponent();
            if !(e0 > -1.0) {
                return Err(Error::NotIntegrable(e0));
            }
        }
        if atoms.iter().any(|&(t, m)| !(t > 0.0 && m > 0.0 && t.is_finite() && m.is_finite())) {
            return Err(invalid("atoms", "locations and masses must be positive and finite"));
        }
        let mu = TimeMeasure { density, atoms, scale };
        let unit = mu.mass_below(1.0);
        if !unit.is_finite() {
            return Err(invalid("density", format!("mu((0, 1)) = {unit} is not finite")));
        }
        Ok(mu)
    }

    pub fn lebesgue() -> Self {
        Self::power(0.0)
    }

    pub fn power(a: f64) -> Self {
        Self::new(Some(Density::Power(a)), Vec::new(), 1.0).expect("a > -1 required")
    }

    pub fn dirac(t0: f64) -> Self {
        Self::new(None, vec![(t0, 1.0)], 1.0).expect("t0 > 0 required")
    }

    /// The same measure with scale multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.density.clone(), self.atoms.clone(), self.scale * c)
    }

    /// `t^{-a0} mu(dt)`, the scale kept.
    pub fn tilted(&self, a0: f64) -> Result<Self> {
        // t^{-a0} nu(dt) with nu = mu(c dt) corresponds to c^{a0} s^{-a0} mu(ds).
        let c = self.scale;
        let density = self.density.as_ref().map(|d| {
            let base = d.clone();
            Density::Custom {
                name: format!("{d:?} t^-{a0}"),
                f: Arc::new(move |s| c.powf(a0) * s.powf(-a0) * base.eval(s)),
                e0: d.endpoint_exponent() - a0,
                breakpoints: match d {
                    Density::Custom { breakpoints, .. } => breakpoints.clone(),
                    _ => Vec::new(),
                },
            }
        });
        let blocks = matches!(self.density, Some(Density::DyadicBlocks { .. }));
        let density = match (density, blocks) {
            (Some(Density::Custom { name, f, e0, .. }), true) => Some(Density::Custom {
                name,
                f,
                e0,
                breakpoints: (-200..=200).map(|k| 2f64.powi(k)).collect(),
            }),
            (d, _) => d,
        };
        let atoms = self.atoms.iter().map(|&(t, m)| (t, m * (t / c).powf(-a0))).collect();
        Self::new(density, atoms, c)
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn density(&self) -> Option<&Density> {
        self.density.as_ref()
    }

    /// Point masses of the scaled measure.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        self.atoms.iter().map(|&(t, m)| (t / self.scale, m)).collect()
    }

    /// Density of the scaled measure at `t`.
    pub fn density_at(&self, t: f64) -> f64 {
        match &self.density {
            Some(d) => self.scale * d.eval(self.scale * t),
            None => 0.0,
        }
    }

    pub fn endpoint_exponent(&self) -> Option<f64> {
        self.density.as_ref().map(|d| d.endpoint_exponent())
    }

    fn breaks(&self, a: f64, b: f64) -> Vec<f64> {
        match &self.density {
            Some(d) => d
                .breakpoints_in(a * self.scale, b * self.scale)
                .into_iter()
                .map(|x| x / self.scale)
                .collect(),
            None => Vec::new(),
        }
    }

    /// 16-point Gauss-Legendre nodes of the density part on `[a, b]`,
    /// split at breakpoints: `(t, w * rho(t))`.
    fn panel_nodes(&self, a: f64, b: f64, out: &mut Vec<(f64, f64)>) {
        let mut cuts = vec![a];
        cuts.extend(self.breaks(a, b));
        cuts.push(b);
        for w in cuts.windows(2) {
            for (t, wt) in gauss16().mapped(w[0], w[1]) {
                out.push((t, wt * self.density_at(t)));
            }
        }
    }

    /// `int_0^hi f(t) rho(t) dt` on dyadic panels graded towards 0, stopped
    /// when the geometric tail estimate falls below `1e-16` of the total.
    fn graded_below(&self, hi: f64, extra_exponent: f64, f: &dyn Fn(f64) -> f64) -> f64 {
        let e = match self.endpoint_exponent() {
            Some(e0) => e0 + extra_exponent,
            None => return 0.0,
        };
        let q = 2f64.powf(e + 1.0) - 1.0;
        let mut total = 0.0;
        let mut b = hi;
        let mut nodes = Vec::new();
        for _ in 0..MAX_PANELS {
            let a = b / 2.0;
            nodes.clear();
            self.panel_nodes(a, b, &mut nodes);
            let terms: Vec<f64> = nodes.iter().map(|&(t, w)| w * f(t)).collect();
            let contrib = pairwise_sum(&terms);
            total += contrib;
            if contrib.abs() / q <= TAIL_RTOL * total.abs() || a < f64::MIN_POSITIVE * 1e10 {
                break;
            }
            b = a;
        }
        total
    }

    /// `mu((0, theta))` of the scaled measure (open at `theta`).
    pub fn mass_below(&self, theta: f64) -> f64 {
        if theta <= 0.0 {
            return 0.0;
        }
        let dens = self.graded_below(theta, 0.0, &|_| 1.0);
        let atoms: f64 = self.atoms().iter().filter(|(t, _)| *t < theta).map(|(_, m)| m).sum();
        dens + atoms
    }

    /// `mu((s, e))` for `0 <= s < e`.
    pub fn interval_mass(&self, s: f64, e: f64) -> f64 {
        if e <= s {
            return 0.0;
        }
        let dens = if self.density.is_none() {
            0.0
        } else if s == 0.0 {
            self.graded_below(e, 0.0, &|_| 1.0)
        } else {
            let mut nodes = Vec::new();
            // Geometric panels of ratio at most 2 between s and e.
            let mut a = s;
            while a < e {
                let b = (2.0 * a).min(e);
                self.panel_nodes(a, b, &mut nodes);
                a = b;
            }
            pairwise_sum(&nodes.iter().map(|n| n.1).collect::<Vec<_>>())
        };
        let atoms: f64 = self.atoms().iter().filter(|(t, _)| *t > s && *t < e).map(|(_, m)| m).sum();
        dens + atoms
    }

    /// All density log-terms `ln(w rho(t)) - lambda t` of the Laplace
    /// quadrature, panel by panel.
    fn laplace_density_terms(&self, lambda: f64, extra: f64) -> Vec<(f64, f64)> {
        let mut terms = Vec::new();
        if self.density.is_none() {
            return terms;
        }
        let t0 = 1.0 / lambda;
        let mut nodes = Vec::new();
        // Upward from 1/lambda until e^{-lambda t} is negligible.
        let mut a = t0;
        while (-lambda * a).exp() >= UPPER_CUTOFF {
            nodes.clear();
            self.panel_nodes(a, 2.0 * a, &mut nodes);
            terms.extend(nodes.iter().map(|&(t, w)| (t, w * t.powf(extra))));
            a *= 2.0;
        }
        // Downward from 1/lambda with the tail criterion.
        let e = self.endpoint_exponent().unwrap() + extra;
        let q = 2f64.powf(e + 1.0) - 1.0;
        let mut running: f64 = terms.iter().map(|&(t, w)| w * (-lambda * t).exp()).sum();
        let mut b = t0;
        for _ in 0..MAX_PANELS {
            let a = b / 2.0;
            nodes.clear();
            self.panel_nodes(a, b, &mut nodes);
            let contrib: f64 = nodes.iter().map(|&(t, w)| w * t.powf(extra) * (-lambda * t).exp()).sum();
            terms.extend(nodes.iter().map(|&(t, w)| (t, w * t.powf(extra))));
            running += contrib;
            if contrib.abs() / q <= TAIL_RTOL * running.abs() || a < f64::MIN_POSITIVE * 1e10 {
                break;
            }
            b = a;
        }
        terms
    }

    fn laplace_with(&self, lambda: f64, extra: f64) -> Result<f64> {
        if !(lambda > 0.0) {
            return Err(invalid("lambda", format!("must be positive, got {lambda}")));
        }
        if let Some(e0) = self.endpoint_exponent() {
            if !(e0 + extra > -1.0) {
                return Err(Error::NotIntegrable(e0 + extra));
            }
        }
        let dens: Vec<f64> = self
            .laplace_density_terms(lambda, extra)
            .iter()
            .map(|&(t, w)| w * (-lambda * t).exp())
            .collect();
        let atoms: Vec<f64> = self
            .atoms()
            .iter()
            .map(|&(t, m)| m * t.powf(extra) * (-lambda * t).exp())
            .collect();
        Ok(pairwise_sum(&dens) + pairwise_sum(&atoms))
    }

    /// `int_0^inf e^{-lambda t} mu(dt)`.
    pub fn laplace(&self, lambda: f64) -> Result<f64> {
        self.laplace_with(lambda, 0.0)
    }

    /// `ln L_mu(lambda)`, accumulated in the log domain when the direct
    /// value drops below `1e-300`.
    pub fn log_laplace(&self, lambda: f64) -> Result<f64> {
        let direct = self.laplace(lambda)?;
        if direct >= LOG_SWITCH {
            return Ok(direct.ln());
        }
        let mut logs: Vec<f64> = self
            .laplace_density_terms(lambda, 0.0)
            .iter()
            .filter(|(_, w)| *w > 0.0)
            .map(|&(t, w)| w.ln() - lambda * t)
            .collect();
        logs.extend(self.atoms().iter().map(|&(t, m)| m.ln() - lambda * t));
        Ok(log_sum_exp(&logs))
    }

    /// `mu(j) = gamma j a - log2 L_mu(2^{gamma j})` with `N = 1`.
    pub fn control_sequence(&self, gamma: f64, a: f64, lo: i32, hi: i32) -> Result<LaplaceControl> {
        if lo > hi {
            return Err(invalid("j_range", format!("empty range [{lo}, {hi}]")));
        }
        let mut values = Vec::with_capacity((hi - lo + 1) as usize);
        for j in lo..=hi {
            let lam = 2f64.powf(gamma * j as f64);
            let log2l = self.log_laplace(lam)? / LN_2;
            if !log2l.is_finite() {
                return Err(Error::Overflow(j));
            }
            values.push(gamma * j as f64 * a - log2l);
        }
        let sequence = DyadicSequence::new(lo, values);
        Ok(LaplaceControl {
            gamma,
            a,
            diff_seminorm: sequence.diff_seminorm(),
            sequence,
            constant: 1.0,
        })
    }

    /// Sampled `sup_I mu(kI) / mu(I)` over open intervals with endpoints in
    /// `samples` (plus 0), `kI` scaled about the origin.
    pub fn doubling_constant(&self, k: f64, samples: &[f64]) -> Result<DoublingReport> {
        if !(k > 1.0) {
            return Err(invalid("k", format!("must exceed 1, got {k}")));
        }
        let mut pts: Vec<f64> = vec![0.0];
        pts.extend(samples.iter().copied().filter(|&s| s > 0.0));
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let cum = CumulativeDensity::new(self, &pts, k);
        let mut value: f64 = 0.0;
        let mut infinite = false;
        let mut skipped = 0;
        let mut intervals = 0;
        for (i, &s) in pts.iter().enumerate() {
            for &e in &pts[i + 1..] {
                intervals += 1;
                let m = cum.open(s, e);
                let km = cum.open(k * s, k * e);
                if m == 0.0 {
                    if km == 0.0 {
                        skipped += 1;
                    } else {
                        infinite = true;
                    }
                    continue;
                }
                let r = km / m;
                if r > 1e12 {
                    infinite = true;
                }
                value = value.max(r);
            }
        }
        Ok(DoublingReport {
            value: if infinite { f64::INFINITY } else { value },
            infinite,
            intervals,
            skipped,
        })
    }

    /// `(min, max)` of `mu((0, theta)) / mu((0, k theta))` over samples.
    pub fn weak_scaling(&self, k: f64, thetas: &[f64]) -> Result<WeakScaling> {
        if !(k > 1.0) {
            return Err(invalid("k", format!("must exceed 1, got {k}")));
        }
        let mut pts: Vec<f64> = vec![0.0];
        pts.extend(thetas.iter().copied().filter(|&s| s > 0.0));
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let cum = CumulativeDensity::new(self, &pts, k);
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        let mut skipped = 0;
        for &th in &pts[1..] {
            let den = cum.open(0.0, k * th);
            if den == 0.0 {
                skipped += 1;
                continue;
            }
            let r = cum.open(0.0, th) / den;
            lo = lo.min(r);
            hi = hi.max(r);
        }
        Ok(WeakScaling {
            k,
            b_k: lo,
            big_b_k: hi,
            skipped,
            pass: lo > 0.0 && hi < 1.0,
        })
    }

    /// `(min, max)` over `lambdas` of `L_{mu^{-a0}}(lambda) / (lambda^{a0} mu((0, 1/lambda)))`.
    pub fn laplace_equivalence_check(&self, a0: f64, lambdas: &[f64]) -> Result<(f64, f64)> {
        let ws = self.weak_scaling(2.0, &dyadic_samples())?;
        if !ws.pass {
            return Err(invalid("measure", "weak scaling fails, the equivalence is not claimed"));
        }
        let top = -ws.big_b_k.log2();
        if !(a0 >= 0.0 && a0 < top) {
            return Err(invalid("a0", format!("must lie in [0, {top}), got {a0}")));
        }
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for &lam in lambdas {
            let num = self.laplace_with(lam, -a0)?;
            let den = lam.powf(a0) * self.mass_below(1.0 / lam);
            let r = num / den;
            lo = lo.min(r);
            hi = hi.max(r);
        }
        Ok((lo, hi))
    }

    /// Quadrature nodes `(t, w)` with `sum w g(t) ~ int_0^T g(t) t^a mu(dt)`
    /// for the scaled measure: `panels` geometric panels on `[T 1e-4, T]`,
    /// dyadic panels graded towards 0 below that, and one node per atom in
    /// `(0, T]`.
    pub fn quadrature_nodes(&self, a: f64, horizon: f64, panels: usize) -> Result<Vec<(f64, f64)>> {
        if let Some(e0) = self.endpoint_exponent() {
            if !(e0 + a > -1.0) {
                return Err(Error::NotIntegrable(e0 + a));
            }
        }
        if !(horizon > 0.0) || panels == 0 {
            return Err(invalid("horizon", "needs T > 0 and at least one panel"));
        }
        let mut out = Vec::new();
        if self.density.is_some() {
            let floor = horizon * 1e-4;
            let ratio = (horizon / floor).powf(1.0 / panels as f64);
            let mut nodes = Vec::new();
            let mut lo = floor;
            for i in 0..panels {
                let hi = if i + 1 == panels { horizon } else { lo * ratio };
                self.panel_nodes(lo, hi, &mut nodes);
                lo = hi;
            }
            let e = self.endpoint_exponent().unwrap() + a;
            let q = 2f64.powf(e + 1.0) - 1.0;
            let mut running: f64 = nodes.iter().map(|&(t, w)| w * t.powf(a)).sum();
            let mut b = floor;
            let mut below = Vec::new();
            for _ in 0..MAX_PANELS {
                let start = below.len();
                self.panel_nodes(b / 2.0, b, &mut below);
                let contrib: f64 = below[start..].iter().map(|&(t, w)| w * t.powf(a)).sum();
                running += contrib;
                if contrib.abs() / q <= TAIL_RTOL * running.abs() {
                    break;
                }
                b /= 2.0;
            }
            below.reverse();
            out.extend(below.into_iter().map(|(t, w)| (t, w * t.powf(a))));
            out.extend(nodes.into_iter().map(|(t, w)| (t, w * t.powf(a))));
        }
        for (t, m) in self.atoms() {
            if t <= horizon {
                out.push((t, m * t.powf(a)));
            }
        }
        Ok(out)
    }

    /// `int_0^T g(t) t^a mu(c dt)` with `c` applied on top of the measure's
    /// own scale.
    pub fn weighted_time_integral(&self, a: f64, c: f64, g: impl Fn(f64) -> f64, horizon: f64) -> Result<f64> {
        let nu = self.scaled(c)?;
        let nodes = nu.quadrature_nodes(a, horizon, 32)?;
        let terms: Vec<f64> = nodes.iter().map(|&(t, w)| w * g(t)).collect();
        Ok(pairwise_sum(&terms))
    }

    /// 1-D `A_nu` estimate of the density, sampled over intervals with
    /// endpoints `2^{i/4}`, `|i| <= 40`.
    pub fn density_ap_estimate(&self, nu: f64) -> Result<f64> {
        let d = self
            .density
            .as_ref()
            .ok_or_else(|| invalid("measure", "needs a density"))?;
        if !(nu > 1.0) {
            return Err(invalid("nu", format!("must exceed 1, got {nu}")));
        }
        let dual = TimeMeasure::new(Some(d.powered(-1.0 / (nu - 1.0))), Vec::new(), self.scale)?;
        let base = TimeMeasure::new(Some(d.clone()), Vec::new(), self.scale)?;
        let pts: Vec<f64> = (-40..=40).map(|i| 2f64.powf(i as f64 / 4.0)).collect();
        let cw = CumulativeDensity::new(&base, &pts, 1.0);
        let cd = CumulativeDensity::new(&dual, &pts, 1.0);
        let mut best: f64 = 0.0;
        for (i, &s) in pts.iter().enumerate() {
            for &e in &pts[i + 1..] {
                let len = e - s;
                let v = cw.open(s, e) / len * (cd.open(s, e) / len).powf(nu - 1.0);
                best = best.max(v);
            }
        }
        Ok(best)
    }
}

/// Density masses at a fixed set of points (and their `k`-multiples),
/// accumulated left to right, plus exact atom bookkeeping.
struct CumulativeDensity {
    points: Vec<f64>,
    values: Vec<f64>,
    atoms: Vec<(f64, f64)>,
}

impl CumulativeDensity {
    fn new(mu: &TimeMeasure, pts: &[f64], k: f64) -> Self {
        let mut points: Vec<f64> = pts.iter().flat_map(|&p| [p, k * p]).collect();
        points.push(0.0);
        points.sort_by(f64::total_cmp);
        points.dedup();
        let mut values = Vec::with_capacity(points.len());
        values.push(0.0);
        let mut acc = 0.0;
        for w in points.windows(2) {
            let seg = if mu.density.is_none() {
                0.0
            } else if w[0] == 0.0 {
                mu.graded_below(w[1], 0.0, &|_| 1.0)
            } else {
                mu.interval_mass(w[0], w[1]) - mu.atoms().iter().filter(|(t, _)| *t > w[0] && *t < w[1]).map(|(_, m)| m).sum::<f64>()
            };
            acc += seg;
            values.push(acc);
        }
        CumulativeDensity {
            points,
            values,
            atoms: mu.atoms(),
        }
    }

    fn at(&self, x: f64) -> f64 {
        let i = self
            .points
            .binary_search_by(|p| p.total_cmp(&x))
            .expect("point was precomputed");
        self.values[i]
    }

    /// `mu((s, e))`.
    fn open(&self, s: f64, e: f64) -> f64 {
        let dens = (self.at(e) - self.at(s)).max(0.0);
        let atoms: f64 = self.atoms.iter().filter(|(t, _)| *t > s && *t < e).map(|(_, m)| m).sum();
        dens + atoms
    }
}
