//! Propagators, homogeneous and Duhamel solves, kernel slices and the
//! kernel-decay sweep.
//!
//! All operators are defined at multiplier level: `u_hat(t) = m(t, s) u_hat(s)`
//! with `m(t, s, xi) = exp(int_s^t psi(r, xi) dr)`. Kernels are materialized
//! with an extra `(2 pi)^{-d/2}` so that convolution against a slice equals
//! the multiplier operator.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::littlewood_paley::{chi, LpFrame};
use crate::numerics::{gauss8, pairwise_sum, pairwise_sum_complex, regression_slope};
use crate::spectral::{norm, SpectralField, SpectralGrid};
use crate::symbols::{check_ellipticity, Symbol};

/// `int_s^t psi(r, xi) dr`.
pub fn symbol_time_integral(symbol: &Symbol, s: f64, t: f64, xi: &[f64; 3]) -> Result<Complex64> {
    if s < 0.0 {
        return Err(invalid("s", format!("must be >= 0, got {s}")));
    }
    symbol.time_integral(s, t, xi)
}

/// Multiplier table `m(t, s, xi)` over one grid.
#[derive(Debug, Clone)]
pub struct Propagator {
    s: f64,
    t: f64,
    multiplier: Vec<Complex64>,
}

impl Propagator {
    pub fn new(symbol: &Symbol, grid: &SpectralGrid, s: f64, t: f64) -> Result<Self> {
        if s < 0.0 || t < s {
            return Err(invalid("t", format!("need 0 <= s <= t, got s = {s}, t = {t}")));
        }
        let multiplier = (0..grid.len())
            .into_par_iter()
            .map(|i| symbol.time_integral_unchecked(s, t, &grid.frequency(i)).exp())
            .collect();
        Ok(Propagator { s, t, multiplier })
    }

    pub fn times(&self) -> (f64, f64) {
        (self.s, self.t)
    }

    pub fn multiplier(&self) -> &[Complex64] {
        &self.multiplier
    }

    pub fn apply(&self, field: &SpectralField) -> SpectralField {
        field.apply_table(&self.multiplier)
    }
}

/// Sampled solution `u(t_k)`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SpectralField>,
}

impl Trajectory {
    pub fn grid(&self) -> &SpectralGrid {
        self.states[0].grid()
    }

    pub fn combine(&self, a: Complex64, other: &Trajectory, b: Complex64) -> Result<Trajectory> {
        if self.times != other.times {
            return Err(invalid("other", "trajectories sampled at different times"));
        }
        let states = self.states.iter().zip(&other.states).map(|(x, y)| x.combine(a, y, b)).collect();
        Ok(Trajectory {
            times: self.times.clone(),
            states,
        })
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(invalid("times", "at least one sample time required"));
    }
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("times", "must be finite, nonnegative and sorted"));
    }
    Ok(())
}

/// Fails unless `Re[-psi] >= kappa |xi|^gamma` holds on the lattice at the
/// symbol's default sample times.
pub fn require_elliptic(symbol: &Symbol, grid: &SpectralGrid) -> Result<()> {
    let report = check_ellipticity(symbol, grid, &symbol.default_time_samples());
    if report.elliptic {
        Ok(())
    } else {
        Err(Error::NotElliptic {
            ratio: report.min_ellipticity_ratio,
            kappa: symbol.kappa(),
        })
    }
}

/// `u_hat(t) = m(t, 0) u0_hat` at every sample time. Non-elliptic symbols
/// are rejected unless `force` is set.
pub fn solve_homogeneous(symbol: &Symbol, u0: &SpectralField, times: &[f64], force: bool) -> Result<Trajectory> {
    check_times(times)?;
    if !force {
        require_elliptic(symbol, u0.grid())?;
    }
    let states = times
        .par_iter()
        .map(|&t| Propagator::new(symbol, u0.grid(), 0.0, t).map(|p| p.apply(u0)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        times: times.to_vec(),
        states,
    })
}

type ForcingFn = Arc<dyn Fn(f64) -> SpectralField + Send + Sync>;

/// Time-dependent forcing `f(s, .)` known on a closed time interval.
#[derive(Clone)]
pub struct Forcing {
    support: (f64, f64),
    f: ForcingFn,
}

impl Forcing {
    pub fn new(support: (f64, f64), f: impl Fn(f64) -> SpectralField + Send + Sync + 'static) -> Self {
        Forcing {
            support,
            f: Arc::new(f),
        }
    }

    /// Time-constant forcing on `[0, inf)`.
    pub fn constant(field: SpectralField) -> Self {
        Forcing::new((0.0, f64::INFINITY), move |_| field.clone())
    }

    pub fn zero(grid: SpectralGrid) -> Self {
        Forcing::constant(SpectralField::zeros(grid))
    }

    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    pub fn at(&self, s: f64) -> SpectralField {
        (self.f)(s)
    }
}

/// Duhamel panels on `(0, t)`: the symbol's breakpoints refined 4x, with
/// 8-point Gauss-Legendre nodes on each panel.
pub fn duhamel_nodes(symbol: &Symbol, t: f64) -> Vec<(f64, f64)> {
    let mut breaks = vec![0.0];
    breaks.extend(symbol.breakpoints_in(0.0, t));
    breaks.push(t);
    let rule = gauss8();
    breaks
        .windows(2)
        .flat_map(|w| {
            let step = (w[1] - w[0]) / 4.0;
            (0..4).flat_map(move |k| {
                let a = w[0] + k as f64 * step;
                rule.mapped(a, a + step).collect::<Vec<_>>()
            })
        })
        .collect()
}

/// `u_hat(t) = int_0^t m(t, s) f_hat(s) ds` from zero initial data.
pub fn solve_inhomogeneous(symbol: &Symbol, forcing: &Forcing, times: &[f64], force: bool) -> Result<Trajectory> {
    check_times(times)?;
    let t_max = *times.last().unwrap();
    let (lo, hi) = forcing.support();
    if lo > 0.0 || hi < t_max {
        return Err(invalid("forcing", format!("support [{lo}, {hi}] does not cover (0, {t_max})")));
    }
    let grid = *forcing.at(0.0).grid();
    if !force {
        require_elliptic(symbol, &grid)?;
    }
    let states = times
        .par_iter()
        .map(|&t| {
            let nodes = duhamel_nodes(symbol, t);
            let spectra: Vec<Vec<Complex64>> = nodes.iter().map(|&(s, _)| forcing.at(s).spectrum().to_vec()).collect();
            let out: Vec<Complex64> = (0..grid.len())
                .map(|i| {
                    let xi = grid.frequency(i);
                    let terms: Vec<Complex64> = nodes
                        .iter()
                        .zip(&spectra)
                        .map(|(&(s, w), f)| symbol.time_integral_unchecked(s, t, &xi).exp() * f[i] * w)
                        .collect();
                    pairwise_sum_complex(&terms)
                })
                .collect();
            SpectralField::from_spectrum(grid, out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        times: times.to_vec(),
        states,
    })
}

/// `psi(t, -i grad) u`.
pub fn apply_operator(symbol: &Symbol, field: &SpectralField, t: f64) -> SpectralField {
    field.apply_multiplier(|xi| symbol.eval(t, xi))
}

/// Multiplier `-|xi|^{2 sigma}`.
pub fn fractional_laplacian(field: &SpectralField, sigma: f64) -> SpectralField {
    field.apply_multiplier(|xi| Complex64::new(-norm(xi).powf(2.0 * sigma), 0.0))
}

/// Frequency localization of a kernel slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SliceLevel {
    /// The low-pass `chi(xi)`.
    S0,
    Block(i32),
}

impl std::fmt::Display for SliceLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SliceLevel::S0 => f.write_str("S0"),
            SliceLevel::Block(j) => write!(f, "{j}"),
        }
    }
}

/// `Delta_j d_t^m D^alpha P_eps(t, s, .)` in physical normalization.
#[derive(Debug, Clone)]
pub struct KernelSlice {
    pub epsilon: f64,
    pub level: SliceLevel,
    pub m_t: u32,
    pub alpha: [usize; 3],
    pub field: SpectralField,
}

#[allow(clippy::too_many_arguments)]
pub fn kernel_slice(
    symbol: &Symbol,
    frame: &LpFrame,
    epsilon: f64,
    level: SliceLevel,
    m_t: u32,
    alpha: [usize; 3],
    t: f64,
    s: f64,
) -> Result<KernelSlice> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(invalid("epsilon", format!("{epsilon} not in [0, 1]")));
    }
    if m_t > 1 {
        return Err(invalid("m", format!("time-derivative order {m_t} not in {{0, 1}}")));
    }
    if alpha.iter().sum::<usize>() > 2 {
        return Err(invalid("alpha", format!("{alpha:?} has order > 2")));
    }
    let grid = *frame.grid();
    let localizer: Vec<f64> = match level {
        SliceLevel::S0 => (0..grid.len()).map(|i| chi(grid.frequency_norm(i))).collect(),
        SliceLevel::Block(j) => frame.block_multiplier(j)?.to_vec(),
    };
    let prop = Propagator::new(symbol, &grid, s, t)?;
    let phys = (2.0 * std::f64::consts::PI).powf(-(grid.dim() as f64) / 2.0);
    let gamma = symbol.gamma();
    let spectrum: Vec<Complex64> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            if localizer[i] == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            let xi = grid.frequency(i);
            let mut v = prop.multiplier()[i] * localizer[i] * phys;
            for (a, x) in alpha.iter().zip(xi) {
                v *= Complex64::new(0.0, x).powu(*a as u32);
            }
            if m_t == 1 {
                v *= symbol.eval(t, &xi);
            }
            if epsilon != 0.0 {
                v *= norm(&xi).powf(epsilon * gamma);
            }
            v
        })
        .collect();
    Ok(KernelSlice {
        epsilon,
        level,
        m_t,
        alpha,
        field: SpectralField::from_spectrum(grid, spectrum)?,
    })
}

/// Torus distance from the origin in the fundamental domain.
fn origin_distance(grid: &SpectralGrid, idx: usize) -> f64 {
    norm(&grid.point(idx))
}

/// `||| . |^n K||_{L_p}` and the fraction of mass on nodes with `|x| > 3L/4`.
pub fn moment_norm(field: &SpectralField, n: u32, p: f64) -> (f64, f64) {
    let grid = field.grid();
    let cut = 0.75 * grid.half_width();
    let vals: Vec<(f64, bool)> = (0..grid.len())
        .map(|i| {
            let r = origin_distance(grid, i);
            (r.powi(n as i32) * field.values()[i].norm(), r > cut)
        })
        .collect();
    // Tail mass is measured in L_p for finite p and in L_1 for the sup norm.
    let q = if p.is_infinite() { 1.0 } else { p };
    let all: Vec<f64> = vals.iter().map(|v| v.0.powf(q)).collect();
    let tail: Vec<f64> = vals.iter().filter(|v| v.1).map(|v| v.0.powf(q)).collect();
    let total = pairwise_sum(&all);
    let frac = if total > 0.0 { pairwise_sum(&tail) / total } else { 0.0 };
    if p.is_infinite() {
        return (vals.iter().map(|v| v.0).fold(0.0, f64::max), frac);
    }
    ((total * grid.cell_volume()).powf(1.0 / p), frac)
}

/// One `(n, m, alpha)` combination of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Derivatives {
    pub n: u32,
    pub m: u32,
    pub alpha: [usize; 3],
}

fn default_delta() -> f64 {
    0.5
}

/// Kernel-decay sweep. Block rows use `t = s + tau 2^{-j gamma}`; S0 rows
/// use `t = s + tau` and skip moments `n > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSweep {
    pub epsilons: Vec<f64>,
    pub levels: Vec<i32>,
    #[serde(default)]
    pub include_s0: bool,
    pub tau: Vec<f64>,
    #[serde(with = "crate::config::exponent::vec")]
    pub ps: Vec<f64>,
    pub derivatives: Vec<Derivatives>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelRow {
    pub epsilon: f64,
    pub level: SliceLevel,
    pub tau: f64,
    pub t: f64,
    pub p: f64,
    pub n: u32,
    pub m: u32,
    pub alpha: [usize; 3],
    pub lhs: f64,
    pub shape: f64,
    pub log2_n_hat: f64,
    /// `tail` when the moment integral is truncation dominated,
    /// `underflow` when the measured norm is below 1e-250.
    pub flags: Vec<&'static str>,
}

impl KernelRow {
    pub fn excluded(&self) -> bool {
        !self.flags.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub epsilon: f64,
    pub p: f64,
    pub n: u32,
    pub m: u32,
    pub alpha: [usize; 3],
    pub s0: bool,
    pub rows: usize,
    pub excluded: usize,
    pub max_log2_n_hat: f64,
    pub spread: f64,
    /// Largest spread across levels at a fixed `tau`.
    pub spread_across_j: f64,
    /// Mean of `log2 N_hat` over the cell.
    pub fitted_log2: f64,
    /// Largest `N_hat / 2^fitted_log2` in the cell.
    pub worst_excess: f64,
    /// Regression slope of `ln lhs` against `ln t` (S0 cells).
    pub slope_vs_t: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelBoundReport {
    pub normalization: String,
    pub delta: f64,
    pub rows: Vec<KernelRow>,
    pub cells: Vec<CellSummary>,
}

pub const UNDERFLOW: f64 = 1e-250;
const TAIL_FRACTION: f64 = 0.01;

fn alpha_code(alpha: &[usize; 3], dim: usize) -> String {
    alpha[..dim].iter().map(|a| a.to_string()).collect()
}

fn fmt_p(p: f64) -> String {
    if p.is_infinite() {
        "inf".into()
    } else {
        format!("{p}")
    }
}

impl KernelBoundReport {
    pub fn to_csv(&self, dim: usize) -> String {
        let mut out = String::from("epsilon,j,t,p,n,m,alpha_code,lhs,shape,log2_N_hat,flags\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:.12e},{},{},{},{},{:.12e},{:.12e},{:.12e},{}",
                r.epsilon,
                r.level,
                r.t,
                fmt_p(r.p),
                r.n,
                r.m,
                alpha_code(&r.alpha, dim),
                r.lhs,
                r.shape,
                r.log2_n_hat,
                r.flags.join("|")
            );
        }
        out
    }

    /// True when every cell has spread within `max_spread`, no row exceeds
    /// its fitted constant by more than `max_excess`, and S0 cells show no
    /// growth in `t` beyond `max_slope`.
    pub fn within(&self, max_spread: f64, max_excess: f64, max_slope: f64) -> bool {
        self.cells.iter().all(|c| {
            c.spread <= max_spread && c.worst_excess <= max_excess && c.slope_vs_t.is_none_or(|s| s <= max_slope)
        })
    }
}

/// Measures `||| . |^n d_t^m D^alpha Delta_j P_eps(t, s, .)||_{L_p}` against
/// `exp(-kappa (t - s) 2^{j gamma} (1 - delta) / 2^gamma) 2^{j((m + eps) gamma + |alpha| - n + d/p')}`.
pub fn kernel_bound_report(symbol: &Symbol, frame: &LpFrame, sweep: &KernelSweep) -> Result<KernelBoundReport> {
    let grid = *frame.grid();
    let d = grid.dim() as f64;
    for der in &sweep.derivatives {
        for &p in &sweep.ps {
            if p < 2.0 && der.n != 0 {
                return Err(invalid("derivatives", format!("moment n = {} requires p >= 2, got p = {p}", der.n)));
            }
            if der.n as usize > grid.dim() / 2 + 1 {
                return Err(invalid("derivatives", format!("moment n = {} exceeds floor(d/2) + 1", der.n)));
            }
        }
    }
    if sweep.ps.iter().any(|&p| p < 1.0) {
        return Err(invalid("ps", "exponents must be >= 1"));
    }
    if !(0.0..1.0).contains(&sweep.delta) {
        return Err(invalid("delta", format!("{} not in [0, 1)", sweep.delta)));
    }
    let gamma = symbol.gamma();
    let kappa = symbol.kappa();
    let mut levels: Vec<SliceLevel> = Vec::new();
    if sweep.include_s0 {
        levels.push(SliceLevel::S0);
    }
    levels.extend(sweep.levels.iter().map(|&j| SliceLevel::Block(j)));

    let mut jobs = Vec::new();
    for &eps in &sweep.epsilons {
        for &level in &levels {
            for &tau in &sweep.tau {
                for der in &sweep.derivatives {
                    // The low-pass bound carries no moment weight.
                    if level == SliceLevel::S0 && der.n > 0 {
                        continue;
                    }
                    jobs.push((eps, level, tau, *der));
                }
            }
        }
    }
    let rows: Vec<Vec<KernelRow>> = jobs
        .par_iter()
        .map(|&(eps, level, tau, der)| {
            let (t, jf) = match level {
                SliceLevel::S0 => (sweep.s + tau, None),
                SliceLevel::Block(j) => (sweep.s + tau * 2f64.powf(-(j as f64) * gamma), Some(j as f64)),
            };
            let slice = kernel_slice(symbol, frame, eps, level, der.m, der.alpha, t, sweep.s)?;
            let order = der.alpha.iter().sum::<usize>() as f64;
            Ok(sweep
                .ps
                .iter()
                .map(|&p| {
                    let (lhs, tail) = moment_norm(&slice.field, der.n, p);
                    let shape = match jf {
                        None => 1.0,
                        Some(j) => {
                            let dp = if p.is_infinite() { d } else { d * (1.0 - 1.0 / p) };
                            let decay = -kappa * (t - sweep.s) * 2f64.powf(j * gamma) * (1.0 - sweep.delta) / 2f64.powf(gamma);
                            decay.exp() * 2f64.powf(j * ((der.m as f64 + eps) * gamma + order - der.n as f64 + dp))
                        }
                    };
                    let mut flags = Vec::new();
                    if tail >= TAIL_FRACTION {
                        flags.push("tail");
                    }
                    if lhs < UNDERFLOW {
                        flags.push("underflow");
                    }
                    KernelRow {
                        epsilon: eps,
                        level,
                        tau,
                        t,
                        p,
                        n: der.n,
                        m: der.m,
                        alpha: der.alpha,
                        lhs,
                        shape,
                        log2_n_hat: (lhs / shape).log2(),
                        flags,
                    }
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<KernelRow> = rows.into_iter().flatten().collect();
    let cells = summarize(&rows);
    Ok(KernelBoundReport {
        normalization: "kernels carry (2 pi)^{-d/2} so that convolution equals the multiplier operator".into(),
        delta: sweep.delta,
        rows,
        cells,
    })
}

type CellKey = (u64, u64, u32, u32, [usize; 3], bool);

fn summarize(rows: &[KernelRow]) -> Vec<CellSummary> {
    let mut groups: BTreeMap<CellKey, Vec<&KernelRow>> = BTreeMap::new();
    for r in rows {
        let key = (
            r.epsilon.to_bits(),
            r.p.to_bits(),
            r.n,
            r.m,
            r.alpha,
            r.level == SliceLevel::S0,
        );
        groups.entry(key).or_default().push(r);
    }
    groups
        .into_values()
        .map(|g| {
            let first = g[0];
            let kept: Vec<&KernelRow> = g.iter().copied().filter(|r| !r.excluded()).collect();
            let logs: Vec<f64> = kept.iter().map(|r| r.log2_n_hat).collect();
            let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = logs.iter().cloned().fold(f64::INFINITY, f64::min);
            let fitted = if logs.is_empty() { f64::NAN } else { logs.iter().sum::<f64>() / logs.len() as f64 };
            let s0 = first.level == SliceLevel::S0;
            let mut by_tau: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
            for r in &kept {
                let e = by_tau.entry(r.tau.to_bits()).or_insert((f64::INFINITY, f64::NEG_INFINITY));
                *e = (e.0.min(r.log2_n_hat), e.1.max(r.log2_n_hat));
            }
            let spread_across_j = by_tau.values().map(|(lo, hi)| hi - lo).fold(0.0, f64::max);
            let slope_vs_t = (s0 && kept.len() >= 2).then(|| {
                let xs: Vec<f64> = kept.iter().map(|r| r.t.ln()).collect();
                let ys: Vec<f64> = kept.iter().map(|r| r.lhs.ln()).collect();
                regression_slope(&xs, &ys)
            });
            CellSummary {
                epsilon: first.epsilon,
                p: first.p,
                n: first.n,
                m: first.m,
                alpha: first.alpha,
                s0,
                rows: g.len(),
                excluded: g.len() - kept.len(),
                max_log2_n_hat: max,
                spread: if logs.is_empty() { 0.0 } else { max - min },
                spread_across_j,
                fitted_log2: fitted,
                worst_excess: if logs.is_empty() { 1.0 } else { 2f64.powf(max - fitted) },
                slope_vs_t,
            }
        })
        .collect()
}

type PhiFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Separable test function `theta(t) g(x)`.
#[derive(Clone)]
pub struct TestFunction {
    theta: PhiFn,
    theta_dot: PhiFn,
    profile: SpectralField,
}

impl TestFunction {
    pub fn new(
        theta: impl Fn(f64) -> f64 + Send + Sync + 'static,
        theta_dot: impl Fn(f64) -> f64 + Send + Sync + 'static,
        profile: SpectralField,
    ) -> Self {
        TestFunction {
            theta: Arc::new(theta),
            theta_dot: Arc::new(theta_dot),
            profile,
        }
    }

    /// Smooth bump `exp(-1 / (1 - s^2))` on `(t0, t1)` times `profile`.
    pub fn bump(t0: f64, t1: f64, profile: SpectralField) -> Self {
        let c = 0.5 * (t0 + t1);
        let h = 0.5 * (t1 - t0);
        let theta = move |t: f64| {
            let s = (t - c) / h;
            if s.abs() < 1.0 {
                (-1.0 / (1.0 - s * s)).exp()
            } else {
                0.0
            }
        };
        let theta_dot = move |t: f64| {
            let s = (t - c) / h;
            if s.abs() < 1.0 {
                let q = 1.0 - s * s;
                (-1.0 / q).exp() * (-2.0 * s / (q * q)) / h
            } else {
                0.0
            }
        };
        TestFunction::new(theta, theta_dot, profile)
    }
}

fn inner(a: &SpectralField, b: &SpectralField) -> Complex64 {
    let terms: Vec<Complex64> = a.values().iter().zip(b.values()).map(|(x, y)| x * y.conj()).collect();
    pairwise_sum_complex(&terms) * a.grid().cell_volume()
}

const RESIDUAL_FLOOR: f64 = 1e-300;

/// Relative defect of `-int int u d_t phi = int int u conj(psi)(t, -i grad) phi`,
/// both sides by the trapezoid rule on the trajectory times.
pub fn weak_residual(symbol: &Symbol, trajectory: &Trajectory, phi: &TestFunction) -> Result<f64> {
    let times = &trajectory.times;
    if times.len() < 2 {
        return Err(invalid("trajectory", "needs at least two samples"));
    }
    let (t0, t1) = (times[0], *times.last().unwrap());
    let end = (phi.theta)(t0).abs().max((phi.theta)(t1).abs());
    if end > 1e-14 {
        return Err(invalid("phi", format!("test function does not vanish at the sampled endpoints ({end:e})")));
    }
    let terms: Vec<(Complex64, Complex64)> = times
        .par_iter()
        .zip(&trajectory.states)
        .map(|(&t, u)| {
            let adj = phi.profile.apply_multiplier(|xi| symbol.eval(t, xi).conj());
            let lhs = -inner(u, &phi.profile) * (phi.theta_dot)(t);
            let rhs = inner(u, &adj) * (phi.theta)(t);
            (lhs, rhs)
        })
        .collect();
    let weights: Vec<f64> = (0..times.len())
        .map(|k| {
            let left = if k > 0 { times[k] - times[k - 1] } else { 0.0 };
            let right = if k + 1 < times.len() { times[k + 1] - times[k] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect();
    let lhs = pairwise_sum_complex(&terms.iter().zip(&weights).map(|(t, w)| t.0 * w).collect::<Vec<_>>());
    let rhs = pairwise_sum_complex(&terms.iter().zip(&weights).map(|(t, w)| t.1 * w).collect::<Vec<_>>());
    Ok((lhs - rhs).norm() / lhs.norm().max(rhs.norm()).max(RESIDUAL_FLOOR))
}

/// Scales the states at the later half of the sample times by `factor`.
pub fn corrupt_second_half(trajectory: &Trajectory, factor: f64) -> Trajectory {
    let half = trajectory.times.len() / 2;
    let states = trajectory
        .states
        .iter()
        .enumerate()
        .map(|(k, s)| if k >= half { s.scale(Complex64::new(factor, 0.0)) } else { s.clone() })
        .collect();
    Trajectory {
        times: trajectory.times.clone(),
        states,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbols::TimePartition;
    use std::f64::consts::PI;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn flat(grid: SpectralGrid) -> SpectralField {
        let amp = (2.0 * PI).powf(-(grid.dim() as f64) / 2.0);
        SpectralField::from_spectral_fn(grid, move |_| c(amp))
    }

    fn alternating() -> Symbol {
        let p = TimePartition::new(vec![0.0, 1.0, 2.0], true).unwrap();
        Symbol::scalar_piecewise(2.0, p, vec![1.0, 3.0]).unwrap()
    }

    #[test]
    fn time_integral_examples() {
        let heat = Symbol::heat();
        assert_eq!(symbol_time_integral(&heat, 0.0, 2.0, &[3.0, 0.0, 0.0]).unwrap(), c(-18.0));
        let v = symbol_time_integral(&alternating(), 0.0, 2.0, &[1.0, 0.0, 0.0]).unwrap();
        assert!((v - c(-4.0)).norm() < 1e-15);
        assert_eq!(symbol_time_integral(&heat, 0.7, 0.7, &[3.0, 0.0, 0.0]).unwrap(), c(0.0));
        assert!(symbol_time_integral(&heat, 1.0, 0.5, &[1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn heat_kernel_oracle() {
        let g = SpectralGrid::new(1, 1024, 32.0).unwrap();
        let traj = solve_homogeneous(&Symbol::heat(), &flat(g), &[1.0], false).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..g.len() {
            let x = g.point(i)[0];
            if x.abs() <= 8.0 {
                let exact = (4.0 * PI).powf(-0.5) * (-x * x / 4.0).exp();
                worst = worst.max((traj.states[0].values()[i].re - exact).abs() / exact);
            }
        }
        assert!(worst <= 1e-6, "{worst}");
    }

    #[test]
    fn linearity_and_rejection() {
        let g = SpectralGrid::new(1, 256, 16.0).unwrap();
        let f = SpectralField::from_fn(g, |x| c((-x[0] * x[0]).exp()));
        let h = SpectralField::from_fn(g, |x| c(x[0].sin() / (1.0 + x[0] * x[0])));
        let sym = alternating();
        let times = [0.3, 1.5, 2.7];
        let (a, b) = (c(2.5), Complex64::new(-0.5, 1.0));
        let lhs = solve_homogeneous(&sym, &f.combine(a, &h, b), &times, false).unwrap();
        let rhs = solve_homogeneous(&sym, &f, &times, false)
            .unwrap()
            .combine(a, &solve_homogeneous(&sym, &h, &times, false).unwrap(), b)
            .unwrap();
        for (x, y) in lhs.states.iter().zip(&rhs.states) {
            let d = x.combine(c(1.0), y, c(-1.0)).sup_norm();
            assert!(d <= 1e-13 * x.sup_norm().max(1.0));
        }
        let bad = Symbol::anti_dissipative(2.0).unwrap();
        assert!(matches!(solve_homogeneous(&bad, &f, &[1.0], false), Err(Error::NotElliptic { .. })));
        assert!(solve_homogeneous(&bad, &f, &[0.01], true).is_ok());
    }

    #[test]
    fn propagator_composition_and_modulus() {
        let g = SpectralGrid::new(1, 256, 8.0).unwrap();
        for sym in [alternating(), Symbol::oscillating_complex(2.0, 0.7).unwrap(), Symbol::fractional_laplacian(1.3).unwrap()] {
            let (r, s, t) = (0.13, 0.91, 2.37);
            let a = Propagator::new(&sym, &g, s, t).unwrap();
            let b = Propagator::new(&sym, &g, r, s).unwrap();
            let ab = Propagator::new(&sym, &g, r, t).unwrap();
            for i in 0..g.len() {
                let prod = a.multiplier()[i] * b.multiplier()[i];
                let exact = ab.multiplier()[i];
                if exact.norm() > 1e-290 {
                    assert!((prod - exact).norm() <= 1e-13 * exact.norm());
                }
                let bound = (-sym.kappa() * (t - s) * g.frequency_norm(i).powf(sym.gamma())).exp();
                assert!(a.multiplier()[i].norm() <= bound * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn semigroup_on_aligned_partition() {
        let g = SpectralGrid::new(1, 256, 8.0).unwrap();
        let sym = alternating();
        let u0 = SpectralField::from_fn(g, |x| c((-x[0] * x[0]).exp()));
        let one = solve_homogeneous(&sym, &u0, &[2.0], false).unwrap();
        let two = solve_homogeneous(&sym, &one.states[0], &[2.0], false).unwrap();
        let direct = solve_homogeneous(&sym, &u0, &[4.0], false).unwrap();
        let d = two.states[0].combine(c(1.0), &direct.states[0], c(-1.0)).sup_norm();
        assert!(d <= 1e-13 * direct.states[0].sup_norm().max(1e-300) + 1e-300);
    }

    #[test]
    fn duhamel_scalar_closed_form() {
        let g = SpectralGrid::new(1, 256, 8.0 * PI).unwrap();
        let xi0 = 1.5;
        let f = SpectralField::from_fn(g, |x| c((xi0 * x[0]).cos()));
        let idx = g.spectral_index([12, 0, 0]).unwrap();
        assert!((g.frequency(idx)[0] - xi0).abs() < 1e-14);
        let t = 0.8;
        let u = solve_inhomogeneous(&Symbol::heat(), &Forcing::constant(f.clone()), &[t], false).unwrap();
        let exact = f.spectrum()[idx] * (1.0 - (-t * xi0 * xi0).exp()) / (xi0 * xi0);
        assert!((u.states[0].spectrum()[idx] - exact).norm() <= 1e-8 * exact.norm());

        let z = solve_inhomogeneous(&Symbol::heat(), &Forcing::zero(g), &[0.5, 1.0], false).unwrap();
        assert!(z.states.iter().all(|s| s.sup_norm() == 0.0));

        let short = Forcing::new((0.0, 0.5), move |_| SpectralField::zeros(g));
        assert!(solve_inhomogeneous(&Symbol::heat(), &short, &[1.0], false).is_err());
    }

    #[test]
    fn duhamel_piecewise_symbol() {
        // a(t) = 1 on [0, 1), 3 on [1, 2): closed form at one mode.
        let g = SpectralGrid::new(1, 64, PI).unwrap();
        let f = SpectralField::from_fn(g, |x| c(x[0].cos()));
        let idx = g.spectral_index([1, 0, 0]).unwrap();
        let u = solve_inhomogeneous(&alternating(), &Forcing::constant(f.clone()), &[1.5], false).unwrap();
        // int_0^1 e^{-(1 - s) - 1.5} ds + int_1^1.5 e^{-3(1.5 - s)} ds
        let exact = (-1.5f64).exp() * (1.0 - (-1.0f64).exp()) + (1.0 - (-1.5f64).exp()) / 3.0;
        assert!((u.states[0].spectrum()[idx] / f.spectrum()[idx] - c(exact)).norm() <= 1e-12);
    }

    #[test]
    fn operator_examples() {
        let g = SpectralGrid::new(1, 256, 8.0 * PI).unwrap();
        let xi0 = 1.5;
        let f = SpectralField::from_fn(g, |x| c((xi0 * x[0]).cos()));
        let d = apply_operator(&Symbol::heat(), &f, 0.3).combine(c(1.0), &f, c(xi0 * xi0)).sup_norm();
        assert!(d < 1e-12);
        let d = fractional_laplacian(&f, 0.5).combine(c(1.0), &f, c(xi0)).sup_norm();
        assert!(d < 1e-12);
    }

    #[test]
    fn time_derivative_consistency() {
        let g = SpectralGrid::new(1, 256, 16.0).unwrap();
        let sym = Symbol::heat();
        let u0 = SpectralField::from_fn(g, |x| c((-x[0] * x[0]).exp()));
        let (t, eta) = (0.5, 1e-5);
        let tr = solve_homogeneous(&sym, &u0, &[t, t + eta], false).unwrap();
        let fd = tr.states[1].combine(c(1.0 / eta), &tr.states[0], c(-1.0 / eta));
        let op = apply_operator(&sym, &tr.states[0], t);
        let err = fd.combine(c(1.0), &op, c(-1.0)).sup_norm() / op.sup_norm();
        assert!(err <= 1e-4, "{err}");
    }

    fn heat_frame() -> LpFrame {
        LpFrame::new(&SpectralGrid::new(1, 1024, 32.0).unwrap())
    }

    #[test]
    fn slice_examples() {
        let frame = heat_frame();
        let heat = Symbol::heat();
        let low = kernel_slice(&heat, &frame, 0.0, SliceLevel::S0, 0, [0; 3], 1e-6, 0.0).unwrap();
        let mass = low.field.values().iter().map(|v| v.re).sum::<f64>() * frame.grid().cell_volume();
        assert!((mass - 1.0).abs() <= 1e-4);

        let s0 = kernel_slice(&heat, &frame, 0.0, SliceLevel::Block(2), 0, [0; 3], 0.1, 0.0).unwrap();
        let s1 = kernel_slice(&heat, &frame, 1.0, SliceLevel::Block(2), 0, [0; 3], 0.1, 0.0).unwrap();
        let composed = fractional_laplacian(&s0.field, 1.0).scale(c(-1.0));
        assert!(composed.combine(c(1.0), &s1.field, c(-1.0)).sup_norm() <= 1e-13 * s1.field.sup_norm());

        let m1 = kernel_slice(&heat, &frame, 0.0, SliceLevel::Block(2), 1, [0; 3], 0.1, 0.0).unwrap();
        let via = apply_operator(&heat, &s0.field, 0.1);
        assert!(via.combine(c(1.0), &m1.field, c(-1.0)).sup_norm() <= 1e-13 * m1.field.sup_norm());

        let block = frame.block_multiplier(2).unwrap();
        assert!(s0.field.spectrum().iter().zip(block).all(|(v, b)| *b > 0.0 || v.norm() == 0.0));
        assert!(kernel_slice(&heat, &frame, 0.0, SliceLevel::Block(40), 0, [0; 3], 0.1, 0.0).is_err());
    }

    #[test]
    fn parabolic_rescaling() {
        let frame = heat_frame();
        let heat = Symbol::heat();
        for p in [1.0, 2.0, 4.0, f64::INFINITY] {
            let a = kernel_slice(&heat, &frame, 0.0, SliceLevel::Block(1), 0, [0; 3], 0.4, 0.0).unwrap();
            let b = kernel_slice(&heat, &frame, 0.0, SliceLevel::Block(2), 0, [0; 3], 0.1, 0.0).unwrap();
            let ratio = moment_norm(&b.field, 0, p).0 / moment_norm(&a.field, 0, p).0;
            let dp = if p.is_infinite() { 1.0 } else { 1.0 - 1.0 / p };
            assert!((ratio / 2f64.powf(dp) - 1.0).abs() <= 0.01, "p = {p}: {ratio}");
        }
    }

    #[test]
    fn plancherel_row() {
        let frame = heat_frame();
        let slice = kernel_slice(&Symbol::heat(), &frame, 0.0, SliceLevel::Block(1), 0, [0; 3], 0.25, 0.0).unwrap();
        let (lhs, _) = moment_norm(&slice.field, 0, 2.0);
        let spectral = slice.field.spectral_l2_norm();
        assert!((lhs - spectral).abs() <= 1e-10 * spectral);
    }

    fn sweep() -> KernelSweep {
        KernelSweep {
            epsilons: vec![0.0],
            levels: (0..=4).collect(),
            include_s0: true,
            tau: vec![1.0],
            ps: vec![f64::INFINITY],
            derivatives: vec![Derivatives { n: 0, m: 0, alpha: [0; 3] }],
            delta: 0.5,
            s: 0.0,
        }
    }

    #[test]
    fn heat_sweep_self_similar() {
        let frame = heat_frame();
        let rep = kernel_bound_report(&Symbol::heat(), &frame, &sweep()).unwrap();
        let cell = rep.cells.iter().find(|c| !c.s0).unwrap();
        assert!(cell.spread <= 1.0, "{cell:?}");
        assert!(rep.rows.iter().all(|r| r.log2_n_hat.is_finite()));
        let csv = rep.to_csv(1);
        assert!(csv.starts_with("epsilon,j,t,p,n,m,alpha_code,lhs,shape,log2_N_hat,flags\n"));
        assert_eq!(csv.lines().count(), 1 + 6);
    }

    #[test]
    fn heat_decay_dominates_shape() {
        let frame = heat_frame();
        let mut sw = sweep();
        sw.include_s0 = false;
        sw.levels = vec![1];
        sw.tau = vec![4.0, 6.0, 8.0, 12.0, 16.0];
        let rep = kernel_bound_report(&Symbol::heat(), &frame, &sw).unwrap();
        for w in rep.rows.windows(2) {
            assert!(w[1].log2_n_hat <= w[0].log2_n_hat + 1e-12);
        }
    }

    #[test]
    fn sweep_preconditions() {
        let frame = heat_frame();
        let mut sw = sweep();
        sw.ps = vec![1.5];
        sw.derivatives = vec![Derivatives { n: 1, m: 0, alpha: [0; 3] }];
        assert!(kernel_bound_report(&Symbol::heat(), &frame, &sw).is_err());
        sw.ps = vec![2.0];
        sw.derivatives = vec![Derivatives { n: 2, m: 0, alpha: [0; 3] }];
        assert!(kernel_bound_report(&Symbol::heat(), &frame, &sw).is_err());
    }

    fn heat_trajectory(samples: usize) -> (SpectralGrid, Trajectory) {
        let g = SpectralGrid::new(1, 256, 8.0 * PI).unwrap();
        let u0 = SpectralField::from_fn(g, |x| c((-x[0] * x[0] / 4.0).exp()));
        let times: Vec<f64> = (0..=samples).map(|k| k as f64 / samples as f64).collect();
        (g, solve_homogeneous(&Symbol::heat(), &u0, &times, false).unwrap())
    }

    #[test]
    fn weak_residual_examples() {
        let (g, traj) = heat_trajectory(128);
        let phi = TestFunction::bump(0.0, 1.0, SpectralField::from_fn(g, |x| c((0.5 * x[0]).cos())));
        let r = weak_residual(&Symbol::heat(), &traj, &phi).unwrap();
        assert!(r <= 1e-5, "{r}");

        let corrupted = corrupt_second_half(&traj, 1.01);
        let rc = weak_residual(&Symbol::heat(), &corrupted, &phi).unwrap();
        assert!(rc >= 1e-3, "{rc}");

        let zero = Trajectory {
            times: traj.times.clone(),
            states: vec![SpectralField::zeros(g); traj.times.len()],
        };
        assert_eq!(weak_residual(&Symbol::heat(), &zero, &phi).unwrap(), 0.0);

        let bad = TestFunction::new(|_| 1.0, |_| 0.0, SpectralField::zeros(g));
        assert!(weak_residual(&Symbol::heat(), &traj, &bad).is_err());
    }
}
