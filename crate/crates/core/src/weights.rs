//! Spatial weights, Muckenhoupt constant estimates, the regularity
//! constant and the maximal and sharp maximal operators.
//!
//! All window computations use cubes on the periodic grid (wrap-around)
//! instead of balls. Every sampled supremum here is a lower bound of the
//! true one.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::gauss16;
use crate::spectral::{norm, SpectralField, SpectralGrid};

type WeightFn = Arc<dyn Fn(&[f64; 3]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum WeightKind {
    Unit,
    /// `|x|^b`.
    Power(f64),
    /// `prod_i |x_i|^{b_i}`.
    Product(Vec<f64>),
    Custom { name: String, f: WeightFn },
}

impl fmt::Debug for WeightKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightKind::Unit => write!(f, "Unit"),
            WeightKind::Power(b) => write!(f, "Power({b})"),
            WeightKind::Product(bs) => write!(f, "Product({bs:?})"),
            WeightKind::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

/// A spatial weight `w(x) >= 0`.
#[derive(Debug, Clone)]
pub struct Weight {
    kind: WeightKind,
}

/// JSON form of a weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSpec {
    Unit,
    Power { b: f64 },
    Product { b: Vec<f64> },
}

impl From<&WeightSpec> for Weight {
    fn from(spec: &WeightSpec) -> Self {
        match spec {
            WeightSpec::Unit => Weight::unit(),
            WeightSpec::Power { b } => Weight::power(*b),
            WeightSpec::Product { b } => Weight::product(b.clone()),
        }
    }
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec::Unit
    }
}

impl Weight {
    pub fn unit() -> Self {
        Weight {
            kind: WeightKind::Unit,
        }
    }

    pub fn power(b: f64) -> Self {
        if b == 0.0 {
            return Self::unit();
        }
        Weight {
            kind: WeightKind::Power(b),
        }
    }

    pub fn product(bs: Vec<f64>) -> Self {
        Weight {
            kind: WeightKind::Product(bs),
        }
    }

    pub fn custom(name: impl Into<String>, f: impl Fn(&[f64; 3]) -> f64 + Send + Sync + 'static) -> Self {
        Weight {
            kind: WeightKind::Custom {
                name: name.into(),
                f: Arc::new(f),
            },
        }
    }

    pub fn kind(&self) -> &WeightKind {
        &self.kind
    }

    /// Short label used in reports: the exponent for power weights.
    pub fn label(&self) -> String {
        match &self.kind {
            WeightKind::Unit => "0".into(),
            WeightKind::Power(b) => format!("{b}"),
            WeightKind::Product(bs) => bs.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(";"),
            WeightKind::Custom { name, .. } => name.clone(),
        }
    }

    /// `w^e`, keeping closed-form structure where there is one.
    pub fn powered(&self, e: f64) -> Weight {
        match &self.kind {
            WeightKind::Unit => Weight::unit(),
            WeightKind::Power(b) => Weight::power(b * e),
            WeightKind::Product(bs) => Weight::product(bs.iter().map(|b| b * e).collect()),
            WeightKind::Custom { name, f } => {
                let f = f.clone();
                Weight::custom(format!("({name})^{e}"), move |x| f(x).powf(e))
            }
        }
    }

    /// Pointwise value; singular points give `inf` (or `0` for positive powers).
    pub fn eval(&self, x: &[f64; 3]) -> f64 {
        match &self.kind {
            WeightKind::Unit => 1.0,
            WeightKind::Power(b) => norm(x).powf(*b),
            WeightKind::Product(bs) => bs.iter().zip(x).map(|(b, xi)| xi.abs().powf(*b)).product(),
            WeightKind::Custom { f, .. } => f(x),
        }
    }

    /// Weight value attached to every node.
    ///
    /// Power weights use the exact cell average on the cell containing the
    /// origin (product weights on every cell meeting a coordinate plane), so
    /// Riemann sums stay convergent for integrable singularities. A
    /// non-integrable singularity yields `+inf` there. Custom weights must be
    /// finite and nonnegative at every node.
    pub fn node_values(&self, grid: &SpectralGrid) -> Result<Vec<f64>> {
        let h = grid.spacing();
        let d = grid.dim();
        match &self.kind {
            WeightKind::Unit => Ok(vec![1.0; grid.len()]),
            WeightKind::Power(b) => {
                let origin = grid.origin_index();
                let cell = power_cell_average(*b, d, h);
                Ok((0..grid.len())
                    .into_par_iter()
                    .map(|i| if i == origin { cell } else { norm(&grid.point(i)).powf(*b) })
                    .collect())
            }
            WeightKind::Product(bs) => {
                if bs.len() != d {
                    return Err(invalid(
                        "weight",
                        format!("product weight has {} exponents for dimension {d}", bs.len()),
                    ));
                }
                let axis: Vec<Vec<f64>> = bs
                    .iter()
                    .map(|&b| {
                        (0..grid.points_per_axis())
                            .map(|m| {
                                let x = -grid.half_width() + m as f64 * h;
                                if m == grid.points_per_axis() / 2 {
                                    power_cell_average(b, 1, h)
                                } else {
                                    x.abs().powf(b)
                                }
                            })
                            .collect()
                    })
                    .collect();
                Ok((0..grid.len())
                    .map(|i| {
                        let m = grid.unravel(i);
                        (0..d).map(|a| axis[a][m[a]]).product()
                    })
                    .collect())
            }
            WeightKind::Custom { f, .. } => {
                let vals: Vec<f64> = (0..grid.len()).into_par_iter().map(|i| f(&grid.point(i))).collect();
                if let Some((index, &value)) = vals.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
                    return Err(Error::WeightUndefined { index, value });
                }
                Ok(vals)
            }
        }
    }

    /// Closed-form A_p membership for power-type weights; `None` for custom.
    pub fn in_ap_closed_form(&self, p: f64, dim: usize) -> Option<bool> {
        let d = dim as f64;
        match &self.kind {
            WeightKind::Unit => Some(p > 1.0),
            WeightKind::Power(b) => Some(p > 1.0 && -d < *b && *b < d * (p - 1.0)),
            WeightKind::Product(bs) => Some(p > 1.0 && bs.iter().all(|b| -1.0 < *b && *b < p - 1.0)),
            WeightKind::Custom { .. } => None,
        }
    }
}

/// `h^{-d} int_{[-h/2, h/2]^d} |x|^b dx`.
///
/// By homogeneity this is `(h/2)^b I_d(b)` with `I_d(b)` the integral over
/// the unit cube; `I_d` follows from the non-singular shell
/// `[0,1]^d \ [0,1/2]^d` via `I_d (1 - 2^{-(d+b)}) = shell`.
pub fn power_cell_average(b: f64, dim: usize, h: f64) -> f64 {
    let d = dim as f64;
    if b + d <= 0.0 {
        return f64::INFINITY;
    }
    let unit = if dim == 1 {
        1.0 / (b + 1.0)
    } else {
        unit_cube_power_integral(b, dim)
    };
    (h / 2.0).powf(b) * unit
}

fn unit_cube_power_integral(b: f64, dim: usize) -> f64 {
    let rule = gauss16();
    let half: Vec<(f64, f64)> = rule.mapped(0.0, 0.5).collect();
    let mut shell = 0.0;
    for corner in 1..(1usize << dim) {
        let offsets: Vec<f64> = (0..dim).map(|a| if corner >> a & 1 == 1 { 0.5 } else { 0.0 }).collect();
        let mut idx = vec![0usize; dim];
        let mut sum = 0.0;
        loop {
            let mut r2 = 0.0;
            let mut w = 1.0;
            for a in 0..dim {
                let (x, wx) = half[idx[a]];
                let x = x + offsets[a];
                r2 += x * x;
                w *= wx;
            }
            sum += w * r2.powf(b / 2.0);
            let mut a = 0;
            while a < dim {
                idx[a] += 1;
                if idx[a] < half.len() {
                    break;
                }
                idx[a] = 0;
                a += 1;
            }
            if a == dim {
                break;
            }
        }
        shell += sum;
    }
    shell / (1.0 - 2f64.powf(-(dim as f64 + b)))
}

// ---------------------------------------------------------------------------
// Window machinery

/// Applies a circular line operation along every axis in turn.
fn along_axes(data: &[f64], grid: &SpectralGrid, op: impl Fn(&[f64]) -> Vec<f64> + Sync) -> Vec<f64> {
    let n = grid.points_per_axis();
    let dim = grid.dim();
    let mut cur = data.to_vec();
    for axis in 0..dim {
        let stride = n.pow((dim - 1 - axis) as u32);
        let lines = cur.len() / n;
        let done: Vec<Vec<f64>> = (0..lines)
            .into_par_iter()
            .map(|l| {
                let start = (l / stride) * n * stride + l % stride;
                let line: Vec<f64> = (0..n).map(|k| cur[start + k * stride]).collect();
                op(&line)
            })
            .collect();
        for (l, line) in done.into_iter().enumerate() {
            let start = (l / stride) * n * stride + l % stride;
            for (k, v) in line.into_iter().enumerate() {
                cur[start + k * stride] = v;
            }
        }
    }
    cur
}

/// `out[s] = sum_{k < w} line[(s + k) mod n]` via prefix sums.
fn circular_box_sum(line: &[f64], w: usize) -> Vec<f64> {
    let n = line.len();
    let mut prefix = Vec::with_capacity(2 * n + 1);
    prefix.push(0.0);
    for k in 0..2 * n {
        let last = prefix[k];
        prefix.push(last + line[k % n]);
    }
    (0..n).map(|s| prefix[s + w] - prefix[s]).collect()
}

/// `out[i] = max_{k < w} line[(i - k) mod n]`: the best window start among
/// the `w` windows of width `w` containing node `i`. Monotone deque.
fn circular_window_max(line: &[f64], w: usize) -> Vec<f64> {
    let n = line.len();
    let mut out = vec![f64::NEG_INFINITY; n];
    let mut deque: std::collections::VecDeque<usize> = std::collections::VecDeque::new();
    // positions t in [0, n + w - 1) stand for start (t - (w - 1)) mod n.
    for t in 0..n + w - 1 {
        let v = line[(t + n - (w - 1) % n) % n];
        while let Some(&back) = deque.back() {
            let bv = line[(back + n - (w - 1) % n) % n];
            if bv <= v {
                deque.pop_back();
            } else {
                break;
            }
        }
        deque.push_back(t);
        while let Some(&front) = deque.front() {
            if front + w <= t {
                deque.pop_front();
            } else {
                break;
            }
        }
        if t + 1 >= w {
            let i = t + 1 - w;
            let front = deque[0];
            out[i] = line[(front + n - (w - 1) % n) % n];
        }
    }
    out
}

/// Window sums over cubes of `w` nodes per axis, indexed by window start.
/// Infinite entries are counted separately so `inf - inf` never appears.
fn cube_sums(values: &[f64], grid: &SpectralGrid, w: usize) -> (Vec<f64>, Vec<f64>) {
    let finite: Vec<f64> = values.iter().map(|&v| if v.is_finite() { v } else { 0.0 }).collect();
    let infinite: Vec<f64> = values.iter().map(|&v| if v.is_finite() { 0.0 } else { 1.0 }).collect();
    let s = along_axes(&finite, grid, |l| circular_box_sum(l, w));
    let c = along_axes(&infinite, grid, |l| circular_box_sum(l, w));
    (s, c)
}

fn cube_averages(values: &[f64], grid: &SpectralGrid, w: usize) -> Vec<f64> {
    let (s, c) = cube_sums(values, grid, w);
    let vol = (w as f64).powi(grid.dim() as i32);
    s.iter()
        .zip(&c)
        .map(|(s, c)| if *c > 0.0 { f64::INFINITY } else { s / vol })
        .collect()
}

// ---------------------------------------------------------------------------
// A_p estimates

/// Which window centers participate in an estimate.
#[derive(Debug, Clone, PartialEq)]
pub enum Centers {
    All,
    Indices(Vec<usize>),
}

/// Cubes of half-width `2^l h` (`2^{l+1}+1` nodes per axis) for `l` in
/// `levels`, centered at the chosen nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct BallFamily {
    pub levels: std::ops::RangeInclusive<u32>,
    pub centers: Centers,
}

impl BallFamily {
    /// Every node, levels `0..=log2 N - 2`.
    pub fn full(grid: &SpectralGrid) -> Self {
        BallFamily {
            levels: 0..=grid.points_per_axis().trailing_zeros() - 2,
            centers: Centers::All,
        }
    }

    pub fn width(level: u32) -> usize {
        (1usize << (level + 1)) + 1
    }
}

/// Per-radius maxima of the A_p functional.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelEstimate {
    pub level: u32,
    /// Max over all windows at this radius, `inf` if any window has an
    /// infinite average.
    pub max: f64,
    /// Max over windows whose averages are finite.
    pub finite_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApEstimate {
    /// Sampled supremum, a lower bound of `[w]_{A_p}`.
    pub value: f64,
    pub levels: Vec<LevelEstimate>,
}

impl ApEstimate {
    /// Growth of the finite per-level maxima from the smallest radius to the
    /// radius `span - 1` levels up. Non-integrable singularities show up as
    /// growth measured in mesh units.
    pub fn divergence_ratio(&self, span: usize) -> f64 {
        let k = self.levels.len().min(span);
        if k < 2 {
            return 1.0;
        }
        self.levels[k - 1].finite_max / self.levels[0].finite_max
    }
}

/// `max (avg_Q w)(avg_Q w^{-1/(p-1)})^{p-1}` over the sampled cubes.
pub fn ap_constant_estimate(weight: &Weight, p: f64, grid: &SpectralGrid, family: &BallFamily) -> Result<ApEstimate> {
    if !(p > 1.0) {
        return Err(invalid("p", format!("A_p requires p > 1, got {p}")));
    }
    let w = weight.node_values(grid)?;
    let dual = weight.powered(-1.0 / (p - 1.0)).node_values(grid)?;
    let n = grid.points_per_axis();
    let mut levels = Vec::new();
    for level in family.levels.clone() {
        let width = BallFamily::width(level);
        if width > n {
            break;
        }
        let aw = cube_averages(&w, grid, width);
        let ad = cube_averages(&dual, grid, width);
        let shift = 1usize << level;
        let starts: Vec<usize> = match &family.centers {
            Centers::All => (0..grid.len()).collect(),
            Centers::Indices(cs) => cs
                .iter()
                .map(|&c| {
                    let m = grid.unravel(c);
                    let mut s = [0usize; 3];
                    for a in 0..grid.dim() {
                        s[a] = (m[a] + n - shift) % n;
                    }
                    grid.ravel(s)
                })
                .collect(),
        };
        let mut max: f64 = 0.0;
        let mut finite_max: f64 = 0.0;
        for s in starts {
            let v = aw[s] * ad[s].powf(p - 1.0);
            max = max.max(v);
            if v.is_finite() {
                finite_max = finite_max.max(v);
            }
        }
        levels.push(LevelEstimate {
            level,
            max,
            finite_max,
        });
    }
    if levels.is_empty() {
        return Err(invalid("family", "no ball fits on the grid"));
    }
    let value = levels.iter().map(|l| l.max).fold(0.0, f64::max);
    Ok(ApEstimate { value, levels })
}

/// Outcome of the divergence heuristic for one exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Membership {
    Member,
    NotMember,
    Undecided,
}

const HEURISTIC_LEVELS: usize = 7;

/// Heuristic A_q membership on a grid: an infinite singular-cell average or
/// a per-radius growth ratio above 4 across seven dyadic levels means "not
/// in class", a ratio in `[2, 4]` is undecided.
pub fn ap_membership(weight: &Weight, q: f64, grid: &SpectralGrid) -> Result<(Membership, f64)> {
    let est = ap_constant_estimate(weight, q, grid, &BallFamily::full(grid))?;
    if !est.value.is_finite() {
        return Ok((Membership::NotMember, f64::INFINITY));
    }
    let ratio = est.divergence_ratio(HEURISTIC_LEVELS);
    let verdict = if ratio > 4.0 {
        Membership::NotMember
    } else if ratio >= 2.0 {
        Membership::Undecided
    } else {
        Membership::Member
    };
    Ok((verdict, ratio))
}

/// `sup { p0 in (1, 2] : w in A_{p/p0} }`.
///
/// Power-type weights use the closed form `min(2, p, d p / (d + b))`
/// (per-axis for products); the cap at `p` keeps `p / p0 > 1`. Custom
/// weights are bisected with [`ap_membership`] on a reference grid.
pub fn regularity_constant(weight: &Weight, p: f64, dim: usize) -> Result<f64> {
    if !(p > 1.0) {
        return Err(invalid("p", format!("requires p > 1, got {p}")));
    }
    if weight.in_ap_closed_form(p, dim) == Some(false) {
        return Err(invalid("weight", format!("{} is not in A_{p} in dimension {dim}", weight.label())));
    }
    let d = dim as f64;
    let cap = 2f64.min(p);
    match weight.kind() {
        WeightKind::Unit => Ok(cap),
        WeightKind::Power(b) => Ok(cap.min(d * p / (d + b))),
        WeightKind::Product(bs) => Ok(bs.iter().fold(cap, |r, b| r.min(p / (1.0 + b)))),
        WeightKind::Custom { .. } => {
            let n = match dim {
                1 => 1024,
                2 => 256,
                _ => 64,
            };
            let grid = SpectralGrid::new(dim, n, 1.0)?;
            regularity_constant_bisection(weight, p, &grid)
        }
    }
}

/// Bisection on `p0` using the membership heuristic on `grid`.
pub fn regularity_constant_bisection(weight: &Weight, p: f64, grid: &SpectralGrid) -> Result<f64> {
    let cap = 2f64.min(p);
    let decide = |p0: f64| -> Result<bool> {
        let q = (p / p0).max(1.0 + 1e-9);
        match ap_membership(weight, q, grid)? {
            (Membership::Member, _) => Ok(true),
            (Membership::NotMember, _) => Ok(false),
            (Membership::Undecided, r) => Err(Error::Undecided(r)),
        }
    };
    if decide(cap)? {
        return Ok(cap);
    }
    let (mut lo, mut hi) = (1.0, cap);
    if !decide(lo)? {
        return Err(invalid("weight", format!("{} is not in A_{p}", weight.label())));
    }
    while hi - lo > 1e-5 {
        let mid = 0.5 * (lo + hi);
        if decide(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

// ---------------------------------------------------------------------------
// Maximal operators

fn moduli(field: &SpectralField) -> Vec<f64> {
    field.values().iter().map(|v| v.norm()).collect()
}

fn real_field(grid: &SpectralGrid, values: Vec<f64>) -> SpectralField {
    SpectralField::from_values(*grid, values.into_iter().map(|v| Complex64::new(v, 0.0)).collect())
        .expect("length matches grid")
}

/// Pointwise max over all windows of a given width containing each node.
fn containing_max(per_start: &[f64], grid: &SpectralGrid, w: usize) -> Vec<f64> {
    along_axes(per_start, grid, |l| circular_window_max(l, w))
}

/// Uncentered Hardy-Littlewood maximal function of `|f|` over cubes of
/// every width from 1 to `N/2 + 1` nodes.
pub fn maximal_function(field: &SpectralField) -> SpectralField {
    let grid = *field.grid();
    let vals = maximal_values(&moduli(field), &grid);
    real_field(&grid, vals)
}

pub(crate) fn maximal_values(m: &[f64], grid: &SpectralGrid) -> Vec<f64> {
    let n = grid.points_per_axis();
    let per_width: Vec<Vec<f64>> = (1..=n / 2 + 1)
        .into_par_iter()
        .map(|w| containing_max(&cube_averages(m, grid, w), grid, w))
        .collect();
    let mut out = vec![0.0f64; m.len()];
    for layer in &per_width {
        for (o, v) in out.iter_mut().zip(layer) {
            *o = o.max(*v);
        }
    }
    out
}

/// Mean oscillation `avg_W |f - avg_W f|` of every window of width `w`,
/// indexed by window start.
fn window_oscillations(values: &[Complex64], grid: &SpectralGrid, w: usize) -> Vec<f64> {
    let n = grid.points_per_axis();
    let dim = grid.dim();
    let count = w.pow(dim as u32);
    (0..grid.len())
        .into_par_iter()
        .map(|s| {
            let base = grid.unravel(s);
            let cells: Vec<usize> = (0..count)
                .map(|k| {
                    let mut m = [0usize; 3];
                    let mut r = k;
                    for a in (0..dim).rev() {
                        m[a] = (base[a] + r % w) % n;
                        r /= w;
                    }
                    grid.ravel(m)
                })
                .collect();
            let avg = cells.iter().map(|&c| values[c]).sum::<Complex64>() / count as f64;
            cells.iter().map(|&c| (values[c] - avg).norm()).sum::<f64>() / count as f64
        })
        .collect()
}

/// Sharp maximal function: max over windows of widths `2^{l+1} + 1`
/// containing each node of the single-average mean oscillation.
pub fn sharp_function(field: &SpectralField) -> SpectralField {
    let grid = *field.grid();
    let n = grid.points_per_axis();
    let top = n.trailing_zeros() - 2;
    let mut out = vec![0.0f64; grid.len()];
    for l in 0..=top {
        let w = BallFamily::width(l);
        let osc = window_oscillations(field.values(), &grid, w);
        let layer = containing_max(&osc, &grid, w);
        for (o, v) in out.iter_mut().zip(layer) {
            *o = o.max(v);
        }
    }
    real_field(&grid, out)
}

/// `avg |f - avg f|` over a set of samples.
pub fn single_oscillation(values: &[Complex64]) -> f64 {
    let n = values.len() as f64;
    let avg = values.iter().sum::<Complex64>() / n;
    values.iter().map(|v| (v - avg).norm()).sum::<f64>() / n
}

/// `avg avg |f(y0) - f(y1)|` over all ordered pairs.
pub fn double_oscillation(values: &[Complex64]) -> f64 {
    let n = values.len() as f64;
    let total: f64 = values
        .iter()
        .map(|a| values.iter().map(|b| (a - b).norm()).sum::<f64>())
        .sum();
    total / (n * n)
}

/// Mean oscillation of a single window of `width` nodes starting at node `start` (1-D).
pub fn window_oscillation_1d(field: &SpectralField, start: usize, width: usize) -> f64 {
    let n = field.grid().points_per_axis();
    let vals: Vec<Complex64> = (0..width).map(|k| field.values()[(start + k) % n]).collect();
    single_oscillation(&vals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;
    use rand_chacha::ChaCha8Rng;

    fn grid1(n: usize, l: f64) -> SpectralGrid {
        SpectralGrid::new(1, n, l).unwrap()
    }

    #[test]
    fn cell_average_matches_one_dimensional_closed_form() {
        for b in [-0.5, 0.5, 2.0] {
            let h = 0.1;
            let v = power_cell_average(b, 1, h);
            let oracle = (h / 2.0f64).powf(b) / (b + 1.0);
            assert!((v - oracle).abs() < 1e-15);
        }
        assert!(power_cell_average(-1.0, 1, 0.1).is_infinite());
    }

    #[test]
    fn cell_average_in_two_dimensions() {
        // b = 2: |x|^2 over [-1/2,1/2]^2 averages to 2 * (1/12).
        let v = power_cell_average(2.0, 2, 1.0);
        assert!((v - 1.0 / 6.0).abs() < 1e-13, "{v}");
        // b = -1 in d = 2: the singular integral int_{[0,1]^2} 1/|x| = 2 asinh(1).
        let v = power_cell_average(-1.0, 2, 2.0);
        assert!((v - 2.0 * 1f64.asinh()).abs() < 1e-6, "{v}");
        // b = 2 in d = 3: 3 * (1/12).
        let v = power_cell_average(2.0, 3, 1.0);
        assert!((v - 0.25).abs() < 1e-13, "{v}");
    }

    #[test]
    fn window_max_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let line: Vec<f64> = (0..16).map(|_| rng.gen()).collect();
        for w in 1..=9 {
            let fast = circular_window_max(&line, w);
            for i in 0..16 {
                let brute = (0..w).map(|k| line[(i + 16 - k) % 16]).fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(fast[i], brute, "w = {w}, i = {i}");
            }
        }
    }

    #[test]
    fn unit_weight_has_constant_one() {
        let g = grid1(256, 1.0);
        let est = ap_constant_estimate(&Weight::unit(), 2.0, &g, &BallFamily::full(&g)).unwrap();
        assert_eq!(est.value, 1.0);
        assert!(est.levels.iter().all(|l| l.max == 1.0));
    }

    #[test]
    fn half_power_weight_estimate_is_stable() {
        let w = Weight::power(0.5);
        let mut vals = Vec::new();
        for n in [256, 1024] {
            let g = grid1(n, 1.0);
            let est = ap_constant_estimate(&w, 2.0, &g, &BallFamily::full(&g)).unwrap();
            assert!((1.15..=1.5).contains(&est.value), "N = {n}: {}", est.value);
            vals.push(est.value);
        }
        assert!((vals[1] / vals[0] - 1.0).abs() <= 0.05);
    }

    #[test]
    fn quadratic_weight_diverges() {
        let g = grid1(1024, 1.0);
        let est = ap_constant_estimate(&Weight::power(2.0), 2.0, &g, &BallFamily::full(&g)).unwrap();
        assert!(est.value.is_infinite());
        // Off-origin cubes grow like r^{b - d(p-1)} = r as the radius shrinks
        // towards the singular cell.
        for l in 1..=4 {
            let small = est.levels[l].finite_max;
            let large = est.levels[l + 4].finite_max;
            assert!(large / small > 10.0, "level {l}: {small} vs {large}");
        }
    }

    #[test]
    fn rejects_p_at_most_one() {
        let g = grid1(64, PI);
        assert!(ap_constant_estimate(&Weight::unit(), 1.0, &g, &BallFamily::full(&g)).is_err());
    }

    #[test]
    fn nested_families_are_monotone() {
        let g = grid1(512, 1.0);
        let w = Weight::power(-0.3);
        let mut last = 0.0;
        for top in 0..=7 {
            let fam = BallFamily {
                levels: 0..=top,
                centers: Centers::All,
            };
            let v = ap_constant_estimate(&w, 2.0, &g, &fam).unwrap().value;
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn regularity_closed_forms() {
        assert_eq!(regularity_constant(&Weight::unit(), 2.0, 1).unwrap(), 2.0);
        assert!((regularity_constant(&Weight::power(0.5), 2.0, 1).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(regularity_constant(&Weight::power(-0.5), 2.0, 1).unwrap(), 2.0);
        assert!((regularity_constant(&Weight::power(1.0), 2.0, 2).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert!(regularity_constant(&Weight::power(3.0), 2.0, 1).is_err());
    }

    #[test]
    fn bisection_reproduces_closed_form() {
        let g = grid1(1024, 1.0);
        for (b, p) in [(0.5, 2.0), (0.25, 3.0), (-0.5, 2.0)] {
            let w = Weight::power(b);
            let closed = regularity_constant(&w, p, 1).unwrap();
            let bis = regularity_constant_bisection(&w, p, &g).unwrap();
            assert!((bis - closed).abs() <= 1e-3, "b = {b}, p = {p}: {bis} vs {closed}");
        }
    }

    #[test]
    fn custom_weight_bisection_runs() {
        let w = Weight::custom("one-plus-abs", |x| 1.0 + x[0].abs());
        let r = regularity_constant(&w, 2.0, 1).unwrap();
        assert_eq!(r, 2.0);
        let bad = Weight::custom("neg", |x| x[0]);
        let g = grid1(64, PI);
        assert!(matches!(bad.node_values(&g), Err(Error::WeightUndefined { .. })));
    }

    #[test]
    fn maximal_of_constant_is_constant() {
        let g = grid1(128, 2.0);
        let f = SpectralField::from_fn(g, |_| Complex64::new(1.0, 0.0));
        let m = maximal_function(&f);
        assert!(m.values().iter().all(|v| (v.re - 1.0).abs() < 1e-12));
    }

    #[test]
    fn maximal_of_indicator_at_four() {
        let g = grid1(1024, 32.0);
        let f = SpectralField::from_fn(g, |x| Complex64::new(if x[0].abs() <= 1.0 { 1.0 } else { 0.0 }, 0.0));
        let m = maximal_function(&f);
        let i = (0..g.len()).find(|&i| (g.point(i)[0] - 4.0).abs() < 1e-12).unwrap();
        assert!((m.values()[i].re - 0.4).abs() <= 1e-2, "{}", m.values()[i].re);
    }

    #[test]
    fn maximal_dominates_modulus() {
        let g = grid1(64, PI);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let vals: Vec<Complex64> = (0..64).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let f = SpectralField::from_values(g, vals).unwrap();
            let m = maximal_function(&f);
            for (a, b) in m.values().iter().zip(f.values()) {
                assert!(a.re >= b.norm() * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn sharp_of_constant_vanishes() {
        let g = grid1(64, PI);
        let f = SpectralField::from_fn(g, |_| Complex64::new(3.0, 0.0));
        assert!(sharp_function(&f).values().iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn single_and_double_oscillations_are_comparable() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let f: Vec<Complex64> = (0..8).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), 0.0)).collect();
            for start in 0..8 {
                for w in 1..=8 - start {
                    let win = &f[start..start + w];
                    let s = single_oscillation(win);
                    let d = double_oscillation(win);
                    assert!(s <= d + 1e-15 && d <= 2.0 * s + 1e-15);
                }
            }
        }
    }

    #[test]
    fn sign_function_oscillation_at_origin() {
        let g = grid1(256, 1.0);
        let f = SpectralField::from_fn(g, |x| Complex64::new(x[0].signum() * (x[0] != 0.0) as i32 as f64, 0.0));
        let origin = g.origin_index();
        let w = 129;
        let osc = window_oscillation_1d(&f, origin - 64, w);
        assert!((osc - (w as f64 - 1.0) / w as f64).abs() < 1e-14);
        let sharp = sharp_function(&f).values()[origin].re;
        assert!(sharp <= 1.0 && sharp >= 1.0 - 1.0 / 64.0, "{sharp}");
    }
}
