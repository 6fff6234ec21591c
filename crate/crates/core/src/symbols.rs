//! Time-measurable symbols `psi(t, xi)` and their empirical certificates.
//!
//! Time dependence is either absent, piecewise constant on a finite
//! (optionally periodic) partition, or a smooth callable integrated with
//! 8-point Gauss-Legendre per declared subinterval. Declared constants
//! `kappa` and `M` are validated, never inferred silently.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numerics::gauss8;
use crate::spectral::{norm, SpectralGrid};
use crate::weights::{regularity_constant, Weight};

type SymbolFn = Arc<dyn Fn(f64, &[f64; 3]) -> Complex64 + Send + Sync>;

/// Breakpoints `0 = t_0 < ... < t_K`; piece `k` covers `[t_k, t_{k+1})`.
/// Periodic partitions repeat with period `t_K`, otherwise the last piece
/// extends to infinity.
#[derive(Debug, Clone, PartialEq)]
pub struct TimePartition {
    breaks: Vec<f64>,
    periodic: bool,
}

impl TimePartition {
    pub fn new(breaks: Vec<f64>, periodic: bool) -> Result<Self> {
        if breaks.len() < 2 || breaks[0] != 0.0 {
            return Err(invalid("time_partition", "needs at least two breakpoints starting at 0"));
        }
        if breaks.windows(2).any(|w| !(w[1] > w[0])) || !breaks.iter().all(|b| b.is_finite()) {
            return Err(invalid("time_partition", "breakpoints must be finite and strictly increasing"));
        }
        Ok(TimePartition { breaks, periodic })
    }

    pub fn pieces(&self) -> usize {
        self.breaks.len() - 1
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    fn period(&self) -> f64 {
        *self.breaks.last().unwrap()
    }

    /// Piece active at time `t` (right-continuous).
    pub fn piece_at(&self, t: f64) -> usize {
        let t = if self.periodic {
            t.rem_euclid(self.period())
        } else {
            t
        };
        match self.breaks.iter().rposition(|&b| b <= t) {
            Some(k) => k.min(self.pieces() - 1),
            None => 0,
        }
    }

    /// Time spent in each piece over `[0, t]`.
    fn occupation_from_zero(&self, t: f64) -> Vec<f64> {
        let k = self.pieces();
        let lens: Vec<f64> = self.breaks.windows(2).map(|w| w[1] - w[0]).collect();
        let (full, rem) = if self.periodic {
            let cycles = (t / self.period()).floor();
            (cycles, t - cycles * self.period())
        } else {
            (0.0, t)
        };
        (0..k)
            .map(|i| {
                let lo = self.breaks[i];
                let hi = if !self.periodic && i == k - 1 {
                    f64::INFINITY
                } else {
                    self.breaks[i + 1]
                };
                full * lens[i] + (rem.min(hi) - lo).max(0.0)
            })
            .collect()
    }

    /// Time spent in each piece over `[s, t]`.
    pub fn occupation(&self, s: f64, t: f64) -> Vec<f64> {
        let a = self.occupation_from_zero(s);
        let b = self.occupation_from_zero(t);
        a.iter().zip(&b).map(|(x, y)| y - x).collect()
    }

    /// Breakpoints and midpoints over one period (or the finite span).
    pub fn sample_times(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for w in self.breaks.windows(2) {
            out.push(w[0]);
            out.push(0.5 * (w[0] + w[1]));
        }
        out.push(self.period());
        out
    }

    /// All breakpoints inside `(s, t)` including periodic repeats.
    pub fn breakpoints_in(&self, s: f64, t: f64) -> Vec<f64> {
        let mut out = Vec::new();
        if self.periodic {
            let p = self.period();
            let mut cycle = (s / p).floor();
            'outer: loop {
                for &b in &self.breaks[..self.breaks.len() - 1] {
                    let x = cycle * p + b;
                    if x >= t {
                        break 'outer;
                    }
                    if x > s {
                        out.push(x);
                    }
                }
                cycle += 1.0;
            }
        } else {
            out.extend(self.breaks.iter().copied().filter(|&b| b > s && b < t));
        }
        out
    }
}

#[derive(Clone)]
enum Core {
    /// `-c_k |xi|^gamma` per piece; a single piece means time independent.
    ScaledPower(Vec<f64>),
    /// `-xi^T A_k xi` per piece.
    Quadratic(Vec<[[f64; 3]; 3]>),
    /// `-((1 + |xi|^2)^{gamma/2} - 1)`.
    Relativistic,
    /// `-(1 + i rho sigma_k) |xi|^gamma` with `sigma = (+1, -1)`.
    OscillatingComplex(f64),
    /// `+|xi|^gamma`.
    AntiDissipative,
    Custom(SymbolFn),
}

#[derive(Clone)]
enum Timing {
    Constant,
    Piecewise(TimePartition),
    Smooth(Vec<f64>),
}

/// A symbol of order `gamma` with declared constants.
#[derive(Clone)]
pub struct Symbol {
    name: String,
    gamma: f64,
    kappa: f64,
    m: f64,
    core: Core,
    timing: Timing,
    dilation: f64,
    time_scale: f64,
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Symbol")
            .field("name", &self.name)
            .field("gamma", &self.gamma)
            .field("kappa", &self.kappa)
            .field("M", &self.m)
            .field("dilation", &self.dilation)
            .field("time_scale", &self.time_scale)
            .finish()
    }
}

fn check_constants(gamma: f64, kappa: f64, m: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(invalid("gamma", format!("order must be positive, got {gamma}")));
    }
    if !(kappa > 0.0) {
        return Err(invalid("kappa", format!("must be positive, got {kappa}")));
    }
    if !(m > 0.0) {
        return Err(invalid("M", format!("must be positive, got {m}")));
    }
    Ok(())
}

/// Unit directions used to validate quadratic-form bounds.
fn sample_directions(dim: usize) -> Vec<[f64; 3]> {
    match dim {
        1 => vec![[1.0, 0.0, 0.0]],
        2 => (0..64)
            .map(|k| {
                let th = std::f64::consts::PI * k as f64 / 64.0;
                [th.cos(), th.sin(), 0.0]
            })
            .collect(),
        _ => {
            let n = 256;
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                    let r = (1.0 - z * z).sqrt();
                    let th = golden * k as f64;
                    [r * th.cos(), r * th.sin(), z]
                })
                .collect()
        }
    }
}

fn quad_form(a: &[[f64; 3]; 3], xi: &[f64; 3]) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            s += a[i][j] * xi[i] * xi[j];
        }
    }
    s
}

impl Symbol {
    /// `-|xi|^gamma`.
    pub fn fractional_laplacian(gamma: f64) -> Result<Self> {
        check_constants(gamma, 1.0, 1.0)?;
        Ok(Symbol {
            name: format!("fractional_laplacian({gamma})"),
            gamma,
            kappa: 1.0,
            m: 1.0,
            core: Core::ScaledPower(vec![1.0]),
            timing: Timing::Constant,
            dilation: 1.0,
            time_scale: 1.0,
        })
    }

    pub fn heat() -> Self {
        Self::fractional_laplacian(2.0).expect("valid order")
    }

    /// `-c(t)|xi|^gamma` with `c` piecewise constant; `kappa = min c`, `M = max c`.
    pub fn scalar_piecewise(gamma: f64, partition: TimePartition, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != partition.pieces() {
            return Err(invalid(
                "pieces",
                format!("{} coefficients for {} pieces", coeffs.len(), partition.pieces()),
            ));
        }
        let kappa = coeffs.iter().cloned().fold(f64::INFINITY, f64::min);
        let m = coeffs.iter().cloned().fold(0.0, f64::max);
        check_constants(gamma, kappa, m)?;
        Ok(Symbol {
            name: "scalar_piecewise".into(),
            gamma,
            kappa,
            m,
            core: Core::ScaledPower(coeffs),
            timing: Timing::Piecewise(partition),
            dilation: 1.0,
            time_scale: 1.0,
        })
    }

    /// `-a^{ij}(t) xi_i xi_j` with piecewise-constant symmetric matrices.
    ///
    /// With `declared = None` the bounds are the sampled extremes of the
    /// quadratic form; declared bounds are checked against the samples.
    pub fn second_order(
        dim: usize,
        partition: TimePartition,
        matrices: Vec<Vec<Vec<f64>>>,
        declared: Option<(f64, f64)>,
    ) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(invalid("dim", format!("{dim} not in 1..=3")));
        }
        if matrices.len() != partition.pieces() {
            return Err(invalid(
                "pieces",
                format!("{} matrices for {} pieces", matrices.len(), partition.pieces()),
            ));
        }
        let mut mats = Vec::with_capacity(matrices.len());
        for (k, m) in matrices.iter().enumerate() {
            if m.len() != dim || m.iter().any(|row| row.len() != dim) {
                return Err(invalid("pieces", format!("piece {k} is not a {dim}x{dim} matrix")));
            }
            let mut a = [[0.0; 3]; 3];
            for i in 0..dim {
                for j in 0..dim {
                    a[i][j] = m[i][j];
                }
            }
            mats.push(a);
        }
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for a in &mats {
            for u in sample_directions(dim) {
                let v = quad_form(a, &u);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        let (kappa, m) = match declared {
            Some((k, m)) => {
                if lo < k * (1.0 - 1e-12) || hi > m * (1.0 + 1e-12) {
                    return Err(invalid(
                        "pieces",
                        format!("coefficients violate kappa|xi|^2 <= a xi xi <= M|xi|^2: sampled range [{lo}, {hi}], declared [{k}, {m}]"),
                    ));
                }
                (k, m)
            }
            None => (lo, hi),
        };
        check_constants(2.0, kappa, m)?;
        Ok(Symbol {
            name: "second_order".into(),
            gamma: 2.0,
            kappa,
            m,
            core: Core::Quadratic(mats),
            timing: Timing::Piecewise(partition),
            dilation: 1.0,
            time_scale: 1.0,
        })
    }

    /// `-((1 + |xi|^2)^{gamma/2} - 1)`. The ratio to `|xi|^gamma` is
    /// monotone in `|xi|`, so the constants are declared relative to the
    /// lowest frequency `xi_min` the symbol has to serve.
    pub fn relativistic(gamma: f64, xi_min: f64) -> Result<Self> {
        if !(xi_min > 0.0) {
            return Err(invalid("xi_min", format!("must be positive, got {xi_min}")));
        }
        let g = ((1.0 + xi_min * xi_min).powf(gamma / 2.0) - 1.0) / xi_min.powf(gamma);
        let (kappa, m) = (g.min(1.0), g.max(1.0));
        check_constants(gamma, kappa, m)?;
        Ok(Symbol {
            name: format!("relativistic({gamma})"),
            gamma,
            kappa,
            m,
            core: Core::Relativistic,
            timing: Timing::Constant,
            dilation: 1.0,
            time_scale: 1.0,
        })
    }

    /// `-(1 + i rho sigma(t))|xi|^gamma` with `sigma = +1` on `[2k, 2k+1)`
    /// and `-1` on `[2k+1, 2k+2)`.
    pub fn oscillating_complex(gamma: f64, rho: f64) -> Result<Self> {
        if !rho.is_finite() {
            return Err(invalid("rho", "must be finite"));
        }
        check_constants(gamma, 1.0, 1.0)?;
        Ok(Symbol {
            name: format!("oscillating_complex({gamma}, {rho})"),
            gamma,
            kappa: 1.0,
            m: (1.0 + rho * rho).sqrt(),
            core: Core::OscillatingComplex(rho),
            timing: Timing::Piecewise(TimePartition::new(vec![0.0, 1.0, 2.0], true)?),
            dilation: 1.0,
            time_scale: 1.0,
        })
    }

    /// `+|xi|^gamma`, declared as if elliptic; exists to exhibit failures.
    pub fn anti_dissipative(gamma: f64) -> Result<Self> {
        check_constants(gamma, 1.0, 1.0)?;
        Ok(Symbol {
            name: format!("anti_dissipative({gamma})"),
            gamma,
            kappa: 1.0,
            m: 1.0,
            core: Core::AntiDissipative,
            timing: Timing::Constant,
            dilation: 1.0,
            time_scale: 1.0,
        })
    }

    /// Arbitrary callable, smooth on the intervals between `breakpoints`.
    pub fn custom(
        name: impl Into<String>,
        gamma: f64,
        kappa: f64,
        m: f64,
        breakpoints: Vec<f64>,
        f: impl Fn(f64, &[f64; 3]) -> Complex64 + Send + Sync + 'static,
    ) -> Result<Self> {
        check_constants(gamma, kappa, m)?;
        Ok(Symbol {
            name: name.into(),
            gamma,
            kappa,
            m,
            core: Core::Custom(Arc::new(f)),
            timing: Timing::Smooth(breakpoints),
            dilation: 1.0,
            time_scale: 1.0,
        })
    }

    /// `lambda^{-gamma} psi(t, lambda xi)`.
    pub fn dilated(&self, lambda: f64) -> Self {
        let mut s = self.clone();
        s.dilation *= lambda;
        s
    }

    /// When `kappa > 1`, the time rescale `psi(t / kappa, xi) / kappa`
    /// which has `kappa = 1`; otherwise a clone. The factor is in
    /// [`Symbol::time_scale`].
    pub fn normalized(&self) -> Self {
        let mut s = self.clone();
        if self.kappa > 1.0 {
            s.time_scale *= self.kappa;
            s.m = self.m / self.kappa;
            s.kappa = 1.0;
        }
        s
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn time_scale(&self) -> f64 {
        self.time_scale
    }

    pub fn is_piecewise_constant(&self) -> bool {
        !matches!(self.timing, Timing::Smooth(_))
    }

    fn core_piece(&self, k: usize, xi: &[f64; 3]) -> Complex64 {
        let r = norm(xi);
        let g = self.gamma;
        match &self.core {
            Core::ScaledPower(c) => Complex64::new(-c[k] * r.powf(g), 0.0),
            Core::Quadratic(a) => Complex64::new(-quad_form(&a[k], xi), 0.0),
            Core::Relativistic => Complex64::new(-((1.0 + r * r).powf(g / 2.0) - 1.0), 0.0),
            Core::OscillatingComplex(rho) => {
                let sigma = if k == 0 { 1.0 } else { -1.0 };
                -Complex64::new(1.0, rho * sigma) * r.powf(g)
            }
            Core::AntiDissipative => Complex64::new(r.powf(g), 0.0),
            Core::Custom(_) => unreachable!("custom symbols are evaluated directly"),
        }
    }

    fn core_eval(&self, t: f64, xi: &[f64; 3]) -> Complex64 {
        match (&self.core, &self.timing) {
            (Core::Custom(f), _) => f(t, xi),
            (_, Timing::Piecewise(p)) => self.core_piece(p.piece_at(t), xi),
            _ => self.core_piece(0, xi),
        }
    }

    fn scaled_xi(&self, xi: &[f64; 3]) -> [f64; 3] {
        [xi[0] * self.dilation, xi[1] * self.dilation, xi[2] * self.dilation]
    }

    /// `psi(t, xi)`.
    pub fn eval(&self, t: f64, xi: &[f64; 3]) -> Complex64 {
        let lam = self.dilation.powf(-self.gamma);
        self.core_eval(t / self.time_scale, &self.scaled_xi(xi)) * (lam / self.time_scale)
    }

    /// `int_s^t psi(r, xi) dr`: exact piece sums for piecewise-constant
    /// symbols, 8-point Gauss-Legendre per subinterval otherwise.
    pub fn time_integral(&self, s: f64, t: f64, xi: &[f64; 3]) -> Result<Complex64> {
        if t < s {
            return Err(invalid("t", format!("t = {t} < s = {s}")));
        }
        Ok(self.time_integral_unchecked(s, t, xi))
    }

    pub(crate) fn time_integral_unchecked(&self, s: f64, t: f64, xi: &[f64; 3]) -> Complex64 {
        if s == t {
            return Complex64::new(0.0, 0.0);
        }
        let lam = self.dilation.powf(-self.gamma);
        let (u0, u1) = (s / self.time_scale, t / self.time_scale);
        let x = self.scaled_xi(xi);
        let raw = match &self.timing {
            Timing::Constant => self.core_piece(0, &x) * (u1 - u0),
            Timing::Piecewise(p) => p
                .occupation(u0, u1)
                .iter()
                .enumerate()
                .filter(|(_, len)| **len != 0.0)
                .map(|(k, len)| self.core_piece(k, &x) * *len)
                .sum(),
            Timing::Smooth(breaks) => {
                let mut nodes = vec![u0];
                nodes.extend(breaks.iter().copied().filter(|&b| b > u0 && b < u1));
                nodes.push(u1);
                let rule = gauss8();
                nodes
                    .windows(2)
                    .map(|w| {
                        rule.mapped(w[0], w[1])
                            .map(|(r, wt)| self.core_eval(r, &x) * wt)
                            .sum::<Complex64>()
                    })
                    .sum()
            }
        };
        raw * lam
    }

    /// Times where the symbol may change character: breakpoints inside
    /// `(s, t)`.
    pub fn breakpoints_in(&self, s: f64, t: f64) -> Vec<f64> {
        let ts = self.time_scale;
        match &self.timing {
            Timing::Constant => Vec::new(),
            Timing::Piecewise(p) => p.breakpoints_in(s / ts, t / ts).into_iter().map(|b| b * ts).collect(),
            Timing::Smooth(b) => b.iter().map(|x| x * ts).filter(|&x| x > s && x < t).collect(),
        }
    }

    /// Default time samples: partition endpoints and midpoints.
    pub fn default_time_samples(&self) -> Vec<f64> {
        let ts = self.time_scale;
        match &self.timing {
            Timing::Constant => vec![0.0],
            Timing::Piecewise(p) => p.sample_times().into_iter().map(|t| t * ts).collect(),
            Timing::Smooth(b) => {
                let mut pts = vec![0.0];
                pts.extend(b.iter().copied());
                let mut out = Vec::new();
                for w in pts.windows(2) {
                    out.push(w[0] * ts);
                    out.push(0.5 * (w[0] + w[1]) * ts);
                }
                out.push(pts.last().unwrap() * ts);
                out
            }
        }
    }
}

// ---------------------------------------------------------------------------
// JSON form

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolKindName {
    FractionalLaplacian,
    Heat,
    SecondOrder,
    ScalarPiecewise,
    Relativistic,
    OscillatingComplex,
    AntiDissipative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Piece {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

/// JSON form of a builtin symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolSpec {
    pub kind: SymbolKindName,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default, rename = "M")]
    pub m: Option<f64>,
    #[serde(default)]
    pub time_partition: Vec<f64>,
    #[serde(default)]
    pub pieces: Vec<Piece>,
    #[serde(default)]
    pub periodic: bool,
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub xi_min: Option<f64>,
    #[serde(default)]
    pub dilation: Option<f64>,
}

impl SymbolSpec {
    pub fn heat() -> Self {
        SymbolSpec {
            kind: SymbolKindName::Heat,
            gamma: None,
            kappa: None,
            m: None,
            time_partition: Vec::new(),
            pieces: Vec::new(),
            periodic: false,
            rho: None,
            xi_min: None,
            dilation: None,
        }
    }

    /// Builds the symbol for a grid of dimension `dim`; `xi_min` defaults to
    /// `freq_step` of `grid` when given.
    pub fn build(&self, dim: usize, grid: Option<&SpectralGrid>) -> Result<Symbol> {
        let gamma = self.gamma.unwrap_or(2.0);
        let partition = || TimePartition::new(self.time_partition.clone(), self.periodic);
        let scalars = || -> Result<Vec<f64>> {
            self.pieces
                .iter()
                .map(|p| match p {
                    Piece::Scalar(c) => Ok(*c),
                    Piece::Matrix(_) => Err(invalid("pieces", "expected scalar coefficients")),
                })
                .collect()
        };
        let declared = match (self.kappa, self.m) {
            (Some(k), Some(m)) => Some((k, m)),
            _ => None,
        };
        let mut sym = match self.kind {
            SymbolKindName::Heat => Symbol::heat(),
            SymbolKindName::FractionalLaplacian => Symbol::fractional_laplacian(gamma)?,
            SymbolKindName::ScalarPiecewise => Symbol::scalar_piecewise(gamma, partition()?, scalars()?)?,
            SymbolKindName::SecondOrder => {
                let mats = self
                    .pieces
                    .iter()
                    .map(|p| match p {
                        Piece::Scalar(c) => (0..dim)
                            .map(|i| (0..dim).map(|j| if i == j { *c } else { 0.0 }).collect())
                            .collect(),
                        Piece::Matrix(m) => m.clone(),
                    })
                    .collect();
                Symbol::second_order(dim, partition()?, mats, declared)?
            }
            SymbolKindName::Relativistic => {
                let xi_min = self
                    .xi_min
                    .or(grid.map(|g| g.freq_step()))
                    .ok_or_else(|| invalid("xi_min", "required without a grid"))?;
                Symbol::relativistic(gamma, xi_min)?
            }
            SymbolKindName::OscillatingComplex => Symbol::oscillating_complex(gamma, self.rho.unwrap_or(0.0))?,
            SymbolKindName::AntiDissipative => Symbol::anti_dissipative(gamma)?,
        };
        if !matches!(self.kind, SymbolKindName::SecondOrder) {
            if let Some(k) = self.kappa {
                sym.kappa = k;
            }
            if let Some(m) = self.m {
                sym.m = m;
            }
            check_constants(sym.gamma, sym.kappa, sym.m)?;
        }
        if let Some(l) = self.dilation {
            sym = sym.dilated(l);
        }
        Ok(sym)
    }
}

// ---------------------------------------------------------------------------
// Certificates

const VERDICT_RTOL: f64 = 1e-9;
const OCTAVE_SPREAD: f64 = 16.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeRatio {
    pub order: usize,
    pub max_ratio: f64,
    /// Max over the sampled octaves divided by min, for scale uniformity.
    pub octave_spread: f64,
}

/// Empirical certificate for ellipticity and regular upper bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymbolReport {
    pub symbol: String,
    pub declared_kappa: f64,
    pub declared_m: f64,
    pub time_rescale: f64,
    pub min_ellipticity_ratio: f64,
    pub max_derivative_ratios: Vec<DerivativeRatio>,
    pub samples_used: usize,
    pub elliptic: bool,
    /// `|psi| <= M |xi|^gamma` on samples.
    pub bounded: bool,
    /// Every derivative ratio stays within a fixed factor across octaves.
    pub scale_uniform: Option<bool>,
    pub warnings: Vec<String>,
}

impl SymbolReport {
    pub fn passed(&self) -> bool {
        self.elliptic && self.bounded && self.scale_uniform.unwrap_or(true)
    }
}

fn nonzero_frequencies(grid: &SpectralGrid, cap: usize) -> Vec<[f64; 3]> {
    let stride = grid.len().div_ceil(cap).max(1);
    (0..grid.len())
        .step_by(stride)
        .map(|i| grid.frequency(i))
        .filter(|xi| norm(xi) > 0.0)
        .collect()
}

/// Min over lattice `xi != 0` and `times` of `Re[-psi] / |xi|^gamma`.
pub fn check_ellipticity(symbol: &Symbol, grid: &SpectralGrid, times: &[f64]) -> SymbolReport {
    let xis = nonzero_frequencies(grid, usize::MAX);
    let g = symbol.gamma();
    let (lo, hi) = xis
        .par_iter()
        .map(|xi| {
            let r = norm(xi).powf(g);
            times.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &t| {
                let v = symbol.eval(t, xi);
                (lo.min(-v.re / r), hi.max(v.norm() / r))
            })
        })
        .reduce(|| (f64::INFINITY, 0.0), |a, b| (a.0.min(b.0), a.1.max(b.1)));
    SymbolReport {
        symbol: symbol.name().to_string(),
        declared_kappa: symbol.kappa(),
        declared_m: symbol.m(),
        time_rescale: symbol.time_scale(),
        min_ellipticity_ratio: lo,
        max_derivative_ratios: vec![DerivativeRatio {
            order: 0,
            max_ratio: hi,
            octave_spread: 1.0,
        }],
        samples_used: xis.len() * times.len(),
        elliptic: lo >= symbol.kappa() * (1.0 - VERDICT_RTOL),
        bounded: hi <= symbol.m() * (1.0 + VERDICT_RTOL),
        scale_uniform: None,
        warnings: Vec::new(),
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Multi-indices of total order `k` in `dim` variables.
pub fn multi_indices(dim: usize, k: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for a in 0..=k {
        for b in 0..=(k - a) {
            let c = k - a - b;
            let alpha = [a, b, c];
            if (dim < 2 && b > 0) || (dim < 3 && c > 0) {
                continue;
            }
            out.push(alpha);
        }
    }
    out
}

/// Finite-difference step for derivatives of total order `k`.
pub fn fd_step(k: usize, xi: &[f64; 3]) -> f64 {
    10f64.powi(k as i32 - 6) * norm(xi).max(1.0)
}

/// Centered tensor-product difference of `f` at `xi` with step `eta`.
/// Returns the estimate and a roundoff bound.
fn tensor_difference(
    f: &(dyn Fn(&[f64; 3]) -> Complex64 + Sync),
    xi: &[f64; 3],
    alpha: [usize; 3],
    eta: f64,
) -> (Complex64, f64) {
    let total: usize = alpha.iter().sum();
    let mut acc = Complex64::new(0.0, 0.0);
    let mut fmax: f64 = 0.0;
    for i0 in 0..=alpha[0] {
        for i1 in 0..=alpha[1] {
            for i2 in 0..=alpha[2] {
                let idx = [i0, i1, i2];
                let mut coef = 1.0;
                let mut x = *xi;
                for a in 0..3 {
                    coef *= binomial(alpha[a], idx[a]) * if idx[a] % 2 == 0 { 1.0 } else { -1.0 };
                    x[a] += (alpha[a] as f64 / 2.0 - idx[a] as f64) * eta;
                }
                let v = f(&x);
                fmax = fmax.max(v.norm());
                acc += v * coef;
            }
        }
    }
    let scale = eta.powi(total as i32);
    let roundoff = f64::EPSILON * fmax * 2f64.powi(total as i32) / scale;
    (acc / scale, roundoff)
}

/// `D^alpha f(xi)` by centered differences with the step policy of
/// [`fd_step`]; the second value is a Richardson truncation plus roundoff
/// error estimate.
pub fn fd_derivative(
    f: &(dyn Fn(&[f64; 3]) -> Complex64 + Sync),
    xi: &[f64; 3],
    alpha: [usize; 3],
) -> (Complex64, f64) {
    let k: usize = alpha.iter().sum();
    if k == 0 {
        return (f(xi), 0.0);
    }
    let eta = fd_step(k, xi);
    let (d1, r1) = tensor_difference(f, xi, alpha, eta);
    let (d2, _) = tensor_difference(f, xi, alpha, 2.0 * eta);
    (d1, (d1 - d2).norm() / 3.0 + r1)
}

/// Derivative ratios `|D^alpha psi| |xi|^{|alpha| - gamma}` for `|alpha| <= n`.
///
/// The declared `M` is validated at `|alpha| = 0`; higher orders report
/// the effective constant and whether it is uniform across octaves.
pub fn check_regular_upper_bound(symbol: &Symbol, n: usize, grid: &SpectralGrid, times: &[f64]) -> Result<SymbolReport> {
    if n > 4 {
        return Err(invalid("n", format!("derivatives limited to order 4, got {n}")));
    }
    let mut report = check_ellipticity(symbol, grid, times);
    let xis = nonzero_frequencies(grid, 4096);
    let g = symbol.gamma();
    let mut ratios = Vec::new();
    let mut warnings = Vec::new();
    let (jlo, jhi) = grid.band();
    let octaves = (jhi - jlo + 1) as usize;
    for k in 0..=n {
        let alphas = multi_indices(grid.dim(), k);
        let rows: Vec<(f64, usize, bool)> = xis
            .par_iter()
            .map(|xi| {
                let r = norm(xi);
                let mut best: f64 = 0.0;
                let mut warn = false;
                for &t in times {
                    let f = |x: &[f64; 3]| symbol.eval(t, x);
                    for &alpha in &alphas {
                        let (d, err) = fd_derivative(&f, xi, alpha);
                        let scale = d.norm().max(r.powf(g - k as f64));
                        if err > 1e-3 * scale {
                            warn = true;
                        }
                        best = best.max(d.norm() * r.powf(k as f64 - g));
                    }
                }
                let oct = (r.log2().floor() as i32 - jlo).clamp(0, octaves as i32 - 1) as usize;
                (best, oct, warn)
            })
            .collect();
        let mut per_oct = vec![0.0f64; octaves];
        let mut max: f64 = 0.0;
        let mut cond_warn = 0;
        for (v, oct, w) in &rows {
            per_oct[*oct] = per_oct[*oct].max(*v);
            max = max.max(*v);
            cond_warn += *w as usize;
        }
        if cond_warn > 0 {
            warnings.push(format!(
                "order {k}: finite-difference error above 1e-3 of the ratio at {cond_warn} samples"
            ));
        }
        let floor = 1e-4 * max.max(1.0);
        let occupied: Vec<f64> = per_oct.iter().copied().filter(|&v| v > 0.0).map(|v| v.max(floor)).collect();
        let spread = if occupied.is_empty() || max <= floor {
            1.0
        } else {
            occupied.iter().cloned().fold(0.0, f64::max) / occupied.iter().cloned().fold(f64::INFINITY, f64::min)
        };
        ratios.push(DerivativeRatio {
            order: k,
            max_ratio: if k == 0 { report.max_derivative_ratios[0].max_ratio } else { max },
            octave_spread: spread,
        });
    }
    report.scale_uniform = Some(ratios.iter().all(|r| r.octave_spread <= OCTAVE_SPREAD));
    report.max_derivative_ratios = ratios;
    report.samples_used = report.samples_used.max(xis.len() * times.len());
    report.warnings = warnings;
    Ok(report)
}

/// `floor(d / R) + 2` with `R` the regularity constant of the weight.
pub fn required_order(weight: &Weight, p: f64, dim: usize) -> Result<usize> {
    let r = regularity_constant(weight, p, dim)?;
    Ok((dim as f64 / r).floor() as usize + 2)
}

/// Candidate orders: two of them when `d / R` sits within `1e-6` of an
/// integer, where the floor is numerically ambiguous.
pub fn required_order_candidates(weight: &Weight, p: f64, dim: usize) -> Result<Vec<usize>> {
    let r = regularity_constant(weight, p, dim)?;
    let x = dim as f64 / r;
    let nearest = x.round();
    if (x - nearest).abs() < 1e-6 {
        let k = nearest as usize;
        Ok(vec![k + 1, k + 2])
    } else {
        Ok(vec![x.floor() as usize + 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid() -> SpectralGrid {
        SpectralGrid::new(1, 1024, 32.0).unwrap()
    }

    fn alternating_1_3() -> Symbol {
        let part = TimePartition::new(vec![0.0, 1.0, 2.0], true).unwrap();
        Symbol::second_order(1, part, vec![vec![vec![1.0]], vec![vec![3.0]]], None).unwrap()
    }

    #[test]
    fn builtin_constants() {
        let h = Symbol::heat();
        assert_eq!((h.kappa(), h.m()), (1.0, 1.0));
        assert_eq!(h.eval(0.3, &[3.0, 0.0, 0.0]), Complex64::new(-9.0, 0.0));
        let s = alternating_1_3();
        assert_eq!((s.kappa(), s.m()), (1.0, 3.0));
        let o = Symbol::oscillating_complex(1.0, 0.5).unwrap();
        assert_eq!(o.eval(0.5, &[2.0, 0.0, 0.0]), Complex64::new(-2.0, -1.0));
        assert_eq!(o.eval(1.5, &[2.0, 0.0, 0.0]), Complex64::new(-2.0, 1.0));
        let r = check_ellipticity(&o, &grid(), &o.default_time_samples());
        assert!((r.min_ellipticity_ratio - 1.0).abs() < 1e-15);
    }

    #[test]
    fn second_order_rejects_violations() {
        let part = TimePartition::new(vec![0.0, 1.0], false).unwrap();
        let err = Symbol::second_order(1, part.clone(), vec![vec![vec![0.5]]], Some((1.0, 3.0)));
        assert!(err.is_err());
        let mats = vec![vec![vec![2.0, 0.0], vec![0.0, 0.5]]];
        assert!(Symbol::second_order(2, part.clone(), mats.clone(), Some((0.5, 2.0))).is_ok());
        assert!(Symbol::second_order(2, part, mats, Some((0.6, 2.0))).is_err());
    }

    #[test]
    fn ellipticity_examples() {
        let g = grid();
        let h = Symbol::heat();
        let r = check_ellipticity(&h, &g, &h.default_time_samples());
        assert_eq!(r.min_ellipticity_ratio, 1.0);
        assert!(r.elliptic && r.bounded);

        let breaks: Vec<f64> = (0..=8).map(|k| k as f64).collect();
        let coeffs: Vec<f64> = (0..8).map(|k| 1.0 + 0.5 * (2.0 * PI * k as f64 / 8.0).sin()).collect();
        let lo = coeffs.iter().cloned().fold(f64::INFINITY, f64::min);
        let s = Symbol::scalar_piecewise(2.0, TimePartition::new(breaks, true).unwrap(), coeffs).unwrap();
        let r = check_ellipticity(&s, &g, &s.default_time_samples());
        assert!((r.min_ellipticity_ratio - lo).abs() < 1e-14);
        assert!((lo - 0.5).abs() < 1e-12);

        let bad = Symbol::anti_dissipative(2.0).unwrap();
        let r = check_ellipticity(&bad, &g, &bad.default_time_samples());
        assert_eq!(r.min_ellipticity_ratio, -1.0);
        assert!(!r.elliptic);
    }

    #[test]
    fn heat_derivative_ratios() {
        let g = grid();
        let h = Symbol::heat();
        let r = check_regular_upper_bound(&h, 2, &g, &[0.0]).unwrap();
        let expect = [1.0, 2.0, 2.0];
        for (d, e) in r.max_derivative_ratios.iter().zip(expect) {
            assert!((d.max_ratio - e).abs() <= 1e-6 * e, "order {}: {}", d.order, d.max_ratio);
        }
        assert!(r.warnings.is_empty(), "{:?}", r.warnings);
        assert_eq!(r.scale_uniform, Some(true));
    }

    #[test]
    fn heat_derivatives_match_analytic_pointwise() {
        let f = |x: &[f64; 3]| Complex64::new(-x[0] * x[0], 0.0);
        for xi in [0.1, 1.0, 7.3, 50.0] {
            let x = [xi, 0.0, 0.0];
            let (d1, _) = fd_derivative(&f, &x, [1, 0, 0]);
            let (d2, _) = fd_derivative(&f, &x, [2, 0, 0]);
            assert!((d1.re + 2.0 * xi).abs() <= 1e-6 * 2.0 * xi);
            assert!((d2.re + 2.0).abs() <= 1e-6 * 2.0);
        }
        // Mixed partials of -|xi|^2 in 2-D vanish.
        let g = |x: &[f64; 3]| Complex64::new(-(x[0] * x[0] + x[1] * x[1]), 0.0);
        let (d, _) = fd_derivative(&g, &[1.3, -0.7, 0.0], [1, 1, 0]);
        assert!(d.norm() < 1e-6);
    }

    #[test]
    fn fractional_first_derivative_ratio() {
        let s = Symbol::fractional_laplacian(1.0).unwrap();
        let r = check_regular_upper_bound(&s, 1, &grid(), &[0.0]).unwrap();
        assert!((r.max_derivative_ratios[1].max_ratio - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zeroth_order_is_max_modulus() {
        let s = Symbol::oscillating_complex(1.5, 0.3).unwrap();
        let g = grid();
        let r = check_regular_upper_bound(&s, 0, &g, &s.default_time_samples()).unwrap();
        assert!((r.max_derivative_ratios[0].max_ratio - (1.09f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn time_integral_examples() {
        let h = Symbol::heat();
        assert_eq!(h.time_integral(0.0, 2.0, &[3.0, 0.0, 0.0]).unwrap(), Complex64::new(-18.0, 0.0));
        let part = TimePartition::new(vec![0.0, 1.0, 2.0], false).unwrap();
        let s = Symbol::second_order(1, part, vec![vec![vec![1.0]], vec![vec![3.0]]], None).unwrap();
        assert_eq!(s.time_integral(0.0, 2.0, &[1.0, 0.0, 0.0]).unwrap(), Complex64::new(-4.0, 0.0));
        assert_eq!(s.time_integral(1.5, 1.5, &[1.0, 0.0, 0.0]).unwrap(), Complex64::new(0.0, 0.0));
        assert!(s.time_integral(2.0, 1.0, &[1.0, 0.0, 0.0]).is_err());
        // Periodic repetition: [0, 5] holds 3 units of a = 1 and 2 of a = 3.
        let p = alternating_1_3();
        assert!((p.time_integral(0.0, 5.0, &[1.0, 0.0, 0.0]).unwrap().re + 9.0).abs() < 1e-14);
    }

    #[test]
    fn smooth_symbols_use_gauss_legendre() {
        let s = Symbol::custom("cos", 2.0, 0.5, 1.5, vec![1.0, 2.0], |t, xi| {
            Complex64::new(-(1.0 + 0.5 * t.cos()) * xi[0] * xi[0], 0.0)
        })
        .unwrap();
        let v = s.time_integral(0.0, 3.0, &[2.0, 0.0, 0.0]).unwrap();
        let exact = -4.0 * (3.0 + 0.5 * 3f64.sin());
        assert!((v.re - exact).abs() < 1e-12);
    }

    #[test]
    fn scaling_covariance_is_pointwise() {
        let g = grid();
        let syms = [
            Symbol::heat(),
            Symbol::fractional_laplacian(1.0).unwrap(),
            Symbol::relativistic(1.0, g.freq_step()).unwrap(),
            Symbol::oscillating_complex(1.0, 0.5).unwrap(),
            alternating_1_3(),
        ];
        for s in &syms {
            for lam in [2.0, 4.0] {
                let d = s.dilated(lam);
                for &t in &s.default_time_samples() {
                    for xi in [0.2, 1.0, 3.7] {
                        let x = [xi, 0.0, 0.0];
                        let lx = [lam * xi, 0.0, 0.0];
                        let a = -d.eval(t, &x).re / xi.powf(s.gamma());
                        let b = -s.eval(t, &lx).re / (lam * xi).powf(s.gamma());
                        assert!((a - b).abs() <= 1e-12 * b.abs(), "{}: {a} vs {b}", s.name());
                    }
                }
            }
        }
    }

    #[test]
    fn every_builtin_passes_its_own_ellipticity() {
        let g = grid();
        let syms = [
            Symbol::heat(),
            Symbol::fractional_laplacian(0.5).unwrap(),
            Symbol::relativistic(1.0, g.freq_step()).unwrap(),
            Symbol::relativistic(3.0, g.freq_step()).unwrap(),
            Symbol::oscillating_complex(1.0, 0.5).unwrap(),
            alternating_1_3(),
        ];
        for s in &syms {
            let r = check_ellipticity(s, &g, &s.default_time_samples());
            assert!(r.elliptic && r.bounded, "{}: {r:?}", s.name());
        }
    }

    #[test]
    fn normalization_when_kappa_exceeds_one() {
        let part = TimePartition::new(vec![0.0, 1.0, 2.0], true).unwrap();
        let s = Symbol::second_order(1, part, vec![vec![vec![2.0]], vec![vec![6.0]]], None).unwrap();
        assert_eq!(s.kappa(), 2.0);
        let n = s.normalized();
        assert_eq!((n.kappa(), n.m(), n.time_scale()), (1.0, 3.0, 2.0));
        let r = check_ellipticity(&n, &grid(), &n.default_time_samples());
        assert!(r.elliptic && r.bounded);
        // Integral over the rescaled period equals the original over one period.
        let a = n.time_integral(0.0, 4.0, &[1.0, 0.0, 0.0]).unwrap();
        let b = s.time_integral(0.0, 2.0, &[1.0, 0.0, 0.0]).unwrap();
        assert!((a - b).norm() < 1e-14);
    }

    #[test]
    fn required_order_examples() {
        assert_eq!(required_order(&Weight::power(0.5), 2.0, 1).unwrap(), 2);
        assert_eq!(required_order(&Weight::unit(), 2.0, 1).unwrap(), 2);
        assert_eq!(required_order(&Weight::power(1.0), 2.0, 2).unwrap(), 3);
        for p in [1.5, 2.0, 3.0, 5.0] {
            for d in [1, 2] {
                assert_eq!(required_order(&Weight::unit(), p, d).unwrap(), d / 2 + 2);
            }
        }
        assert!(required_order(&Weight::power(3.0), 2.0, 1).is_err());
        // d / R = 1 exactly for the unit weight at d = 2.
        assert_eq!(required_order_candidates(&Weight::unit(), 2.0, 2).unwrap(), vec![2, 3]);
    }

    #[test]
    fn spec_json_round_trip() {
        let json = r#"{"kind": "second_order", "time_partition": [0, 1, 2], "pieces": [1, 3], "periodic": true}"#;
        let spec: SymbolSpec = serde_json::from_str(json).unwrap();
        let s = spec.build(1, None).unwrap();
        assert_eq!((s.kappa(), s.m()), (1.0, 3.0));
        let bad = r#"{"kind": "heat", "gama": 2}"#;
        assert!(serde_json::from_str::<SymbolSpec>(bad).is_err());
    }
}
