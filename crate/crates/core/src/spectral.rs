//! Periodic grids, spectral fields and weighted Riemann-sum norms.
//!
//! The physical domain is `[-L, L)^d` sampled at `x_m = -L + m h` with
//! `h = 2L / N`. The frequency lattice is `xi_k = (pi / L) k` for
//! `k in [-N/2, N/2)^d`, stored in FFT order (index `i` carries `k = i`
//! for `i < N/2` and `k = i - N` otherwise).
//!
//! Transforms use the symmetric convention
//! `F[f](xi) = (2 pi)^{-d/2} \int e^{-i xi x} f(x) dx`, approximated by
//! `h^d (2 pi)^{-d/2} sum_m e^{-i xi_k x_m} f(x_m)`.

use std::f64::consts::PI;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::pairwise_sum;
use crate::weights::Weight;

/// Uniform periodic grid on `[-L, L)^dim`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralGrid {
    dim: usize,
    n: usize,
    half_width: f64,
}

impl SpectralGrid {
    /// Builds a grid, rejecting non-power-of-two sizes and grids whose
    /// resolved dyadic band spans fewer than three levels.
    pub fn new(dim: usize, points_per_axis: usize, half_width: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in 1..=3")));
        }
        if !points_per_axis.is_power_of_two() || points_per_axis < 64 {
            return Err(Error::InvalidGrid(format!(
                "points per axis {points_per_axis} must be a power of two >= 64"
            )));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidGrid(format!("half width {half_width} must be positive")));
        }
        let grid = SpectralGrid {
            dim,
            n: points_per_axis,
            half_width,
        };
        let (lo, hi) = grid.band();
        if hi - lo < 3 {
            return Err(Error::InvalidGrid(format!(
                "resolved band [{lo}, {hi}] narrower than 3 dyadic levels"
            )));
        }
        Ok(grid)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Total number of nodes, `N^dim`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn freq_step(&self) -> f64 {
        PI / self.half_width
    }

    pub fn nyquist(&self) -> f64 {
        PI * self.n as f64 / (2.0 * self.half_width)
    }

    /// Resolved dyadic band `[j_min, j_max]`.
    pub fn band(&self) -> (i32, i32) {
        let lo = self.freq_step().log2().ceil() as i32 + 1;
        let hi = self.nyquist().log2().floor() as i32 - 1;
        (lo, hi)
    }

    /// Splits a flat index into per-axis indices (axis 0 slowest).
    pub fn unravel(&self, mut idx: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        for axis in (0..self.dim).rev() {
            out[axis] = idx % self.n;
            idx /= self.n;
        }
        out
    }

    pub fn ravel(&self, multi: [usize; 3]) -> usize {
        (0..self.dim).fold(0, |acc, a| acc * self.n + multi[a])
    }

    /// Physical coordinates of a node; unused axes are zero.
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let m = self.unravel(idx);
        let h = self.spacing();
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = -self.half_width + m[a] as f64 * h;
        }
        x
    }

    /// Signed lattice index of an FFT-ordered axis index.
    pub fn wavenumber(&self, i: usize) -> i64 {
        if i < self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// Frequency vector at a flat spectral index; unused axes are zero.
    pub fn frequency(&self, idx: usize) -> [f64; 3] {
        let m = self.unravel(idx);
        let step = self.freq_step();
        let mut xi = [0.0; 3];
        for a in 0..self.dim {
            xi[a] = step * self.wavenumber(m[a]) as f64;
        }
        xi
    }

    pub fn frequency_norm(&self, idx: usize) -> f64 {
        norm(&self.frequency(idx))
    }

    /// Flat index of the node at the origin.
    pub fn origin_index(&self) -> usize {
        self.ravel([self.n / 2; 3])
    }

    /// Flat spectral index of the lattice point with the given signed wavenumbers.
    pub fn spectral_index(&self, k: [i64; 3]) -> Option<usize> {
        let half = (self.n / 2) as i64;
        let mut multi = [0usize; 3];
        for a in 0..self.dim {
            if k[a] < -half || k[a] >= half {
                return None;
            }
            multi[a] = k[a].rem_euclid(self.n as i64) as usize;
        }
        Some(self.ravel(multi))
    }
}

pub(crate) fn norm(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn planner() -> &'static Mutex<FftPlanner<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()))
}

fn plan(n: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    let mut p = planner().lock().expect("fft planner poisoned");
    if forward {
        p.plan_fft_forward(n)
    } else {
        p.plan_fft_inverse(n)
    }
}

/// Unnormalized multi-dimensional DFT, one axis at a time.
fn dft_in_place(data: &mut [Complex64], n: usize, dim: usize, forward: bool) {
    let fft = plan(n, forward);
    for axis in 0..dim {
        let stride = n.pow((dim - 1 - axis) as u32);
        let lines = data.len() / n;
        if stride == 1 {
            data.par_chunks_mut(n).for_each(|line| fft.process(line));
            continue;
        }
        let gathered: Vec<Vec<Complex64>> = (0..lines)
            .into_par_iter()
            .map(|l| {
                let start = (l / stride) * n * stride + l % stride;
                let mut line: Vec<Complex64> = (0..n).map(|k| data[start + k * stride]).collect();
                fft.process(&mut line);
                line
            })
            .collect();
        for (l, line) in gathered.into_iter().enumerate() {
            let start = (l / stride) * n * stride + l % stride;
            for (k, v) in line.into_iter().enumerate() {
                data[start + k * stride] = v;
            }
        }
    }
}

fn parity_sign(grid: &SpectralGrid, idx: usize) -> f64 {
    let m = grid.unravel(idx);
    let s: usize = m[..grid.dim].iter().sum();
    if s % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Forward transform of node values into the FFT-ordered spectrum.
pub fn transform(grid: &SpectralGrid, values: &[Complex64]) -> Vec<Complex64> {
    let mut data = values.to_vec();
    dft_in_place(&mut data, grid.n, grid.dim, true);
    let scale = grid.cell_volume() * (2.0 * PI).powf(-(grid.dim as f64) / 2.0);
    data.par_iter_mut()
        .enumerate()
        .for_each(|(i, v)| *v *= scale * parity_sign(grid, i));
    data
}

/// Inverse of [`transform`].
pub fn inverse_transform(grid: &SpectralGrid, spectrum: &[Complex64]) -> Vec<Complex64> {
    let scale = (2.0 * PI).powf(grid.dim as f64 / 2.0) / grid.cell_volume() / grid.len() as f64;
    let mut data: Vec<Complex64> = spectrum
        .par_iter()
        .enumerate()
        .map(|(i, v)| v * (scale * parity_sign(grid, i)))
        .collect();
    dft_in_place(&mut data, grid.n, grid.dim, false);
    data
}

/// A complex field on a grid together with its spectrum.
#[derive(Debug, Clone)]
pub struct SpectralField {
    grid: SpectralGrid,
    values: Vec<Complex64>,
    spectrum: Vec<Complex64>,
}

impl SpectralField {
    pub fn from_values(grid: SpectralGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(invalid(
                "values",
                format!("expected {} nodes, got {}", grid.len(), values.len()),
            ));
        }
        let spectrum = transform(&grid, &values);
        Ok(SpectralField {
            grid,
            values,
            spectrum,
        })
    }

    pub fn from_spectrum(grid: SpectralGrid, spectrum: Vec<Complex64>) -> Result<Self> {
        if spectrum.len() != grid.len() {
            return Err(invalid(
                "spectrum",
                format!("expected {} modes, got {}", grid.len(), spectrum.len()),
            ));
        }
        let values = inverse_transform(&grid, &spectrum);
        Ok(SpectralField {
            grid,
            values,
            spectrum,
        })
    }

    /// Samples a function of position at every node.
    pub fn from_fn(grid: SpectralGrid, f: impl Fn(&[f64; 3]) -> Complex64 + Sync) -> Self {
        let values: Vec<Complex64> = (0..grid.len())
            .into_par_iter()
            .map(|i| f(&grid.point(i)))
            .collect();
        Self::from_values(grid, values).expect("length matches grid")
    }

    /// Field whose spectrum is `f(xi)` at each lattice frequency.
    pub fn from_spectral_fn(grid: SpectralGrid, f: impl Fn(&[f64; 3]) -> Complex64 + Sync) -> Self {
        let spectrum: Vec<Complex64> = (0..grid.len())
            .into_par_iter()
            .map(|i| f(&grid.frequency(i)))
            .collect();
        Self::from_spectrum(grid, spectrum).expect("length matches grid")
    }

    pub fn zeros(grid: SpectralGrid) -> Self {
        let zero = vec![Complex64::new(0.0, 0.0); grid.len()];
        SpectralField {
            grid,
            values: zero.clone(),
            spectrum: zero,
        }
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn spectrum(&self) -> &[Complex64] {
        &self.spectrum
    }

    /// Multiplies the spectrum pointwise by `m(xi)`.
    pub fn apply_multiplier(&self, m: impl Fn(&[f64; 3]) -> Complex64 + Sync) -> Self {
        let grid = self.grid;
        let spectrum: Vec<Complex64> = self
            .spectrum
            .par_iter()
            .enumerate()
            .map(|(i, s)| s * m(&grid.frequency(i)))
            .collect();
        Self::from_spectrum(grid, spectrum).expect("length matches grid")
    }

    /// Multiplies the spectrum by a tabulated lattice multiplier.
    pub fn apply_table(&self, table: &[Complex64]) -> Self {
        let spectrum: Vec<Complex64> = self
            .spectrum
            .par_iter()
            .zip(table.par_iter())
            .map(|(s, m)| s * m)
            .collect();
        Self::from_spectrum(self.grid, spectrum).expect("length matches grid")
    }

    pub fn scale(&self, c: Complex64) -> Self {
        SpectralField {
            grid: self.grid,
            values: self.values.iter().map(|v| v * c).collect(),
            spectrum: self.spectrum.iter().map(|v| v * c).collect(),
        }
    }

    /// `a * self + b * other`, combined in both representations.
    pub fn combine(&self, a: Complex64, other: &SpectralField, b: Complex64) -> Self {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        SpectralField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
            spectrum: self
                .spectrum
                .iter()
                .zip(&other.spectrum)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        }
    }

    /// Integer dilation `f(lambda x)` by relabelling lattice modes.
    ///
    /// Modes mapped beyond the lattice are dropped.
    pub fn dilate(&self, lambda: usize) -> Self {
        let grid = self.grid;
        let mut spectrum = vec![Complex64::new(0.0, 0.0); grid.len()];
        for (i, s) in self.spectrum.iter().enumerate() {
            let m = grid.unravel(i);
            let mut k = [0i64; 3];
            for a in 0..grid.dim {
                k[a] = grid.wavenumber(m[a]) * lambda as i64;
            }
            if let Some(target) = grid.spectral_index(k) {
                spectrum[target] += s;
            }
        }
        Self::from_spectrum(grid, spectrum).expect("length matches grid")
    }

    /// Discrete `L_2` norm of the node values, `(sum |f|^2 h^d)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        let terms: Vec<f64> = self.values.iter().map(|v| v.norm_sqr()).collect();
        (pairwise_sum(&terms) * self.grid.cell_volume()).sqrt()
    }

    /// Discrete `L_2` norm of the spectrum, `(sum |F|^2 (pi/L)^d)^{1/2}`.
    pub fn spectral_l2_norm(&self) -> f64 {
        let terms: Vec<f64> = self.spectrum.iter().map(|v| v.norm_sqr()).collect();
        (pairwise_sum(&terms) * self.grid.freq_step().powi(self.grid.dim as i32)).sqrt()
    }

    /// `sum_m f(x_m) g(x_m) h^d` without conjugation.
    pub fn bilinear(&self, other: &SpectralField) -> Complex64 {
        let re: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a * b).re)
            .collect();
        let im: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a * b).im)
            .collect();
        Complex64::new(pairwise_sum(&re), pairwise_sum(&im)) * self.grid.cell_volume()
    }

    /// Maximum modulus over nodes.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// `(sum_m w(x_m) |f(x_m)|^p h^d)^{1/p}`; `p = inf` gives the sup over nodes
/// with positive weight.
pub fn weighted_lp_norm(field: &SpectralField, p: f64, weight: Option<&Weight>) -> Result<f64> {
    let w = match weight {
        Some(w) => Some(w.node_values(field.grid())?),
        None => None,
    };
    weighted_lp_norm_of(field.values(), field.grid(), p, w.as_deref())
}

/// Weighted norm of raw node moduli with precomputed node weights.
pub fn weighted_lp_norm_of(
    values: &[Complex64],
    grid: &SpectralGrid,
    p: f64,
    weights: Option<&[f64]>,
) -> Result<f64> {
    let moduli: Vec<f64> = values.iter().map(|v| v.norm()).collect();
    weighted_lp_norm_real(&moduli, grid, p, weights)
}

pub(crate) fn weighted_lp_norm_real(
    moduli: &[f64],
    grid: &SpectralGrid,
    p: f64,
    weights: Option<&[f64]>,
) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(invalid("p", format!("{p} < 1")));
    }
    if p.is_infinite() {
        let sup = moduli
            .iter()
            .enumerate()
            .filter(|(i, _)| weights.map_or(true, |w| w[*i] > 0.0))
            .map(|(_, v)| *v)
            .fold(0.0, f64::max);
        return Ok(sup);
    }
    let terms: Vec<f64> = match weights {
        Some(w) => moduli.iter().zip(w).map(|(v, wi)| wi * v.powf(p)).collect(),
        None => moduli.iter().map(|v| v.powf(p)).collect(),
    };
    Ok((pairwise_sum(&terms) * grid.cell_volume()).powf(1.0 / p))
}

/// What a dump file holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DumpKind {
    Values,
    Spectrum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpHeader {
    pub dim: usize,
    pub n: usize,
    pub half_width: f64,
    pub kind: DumpKind,
}

fn sidecar_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

/// Writes `path` as raw little-endian interleaved `(re, im)` f64 pairs in
/// row-major order, plus a JSON sidecar next to it.
///
/// Spectra are written in FFT order.
pub fn write_dump(field: &SpectralField, path: &Path, kind: DumpKind) -> Result<()> {
    let data = match kind {
        DumpKind::Values => field.values(),
        DumpKind::Spectrum => field.spectrum(),
    };
    let mut bytes = Vec::with_capacity(data.len() * 16);
    for v in data {
        bytes.extend_from_slice(&v.re.to_le_bytes());
        bytes.extend_from_slice(&v.im.to_le_bytes());
    }
    fs::File::create(path)?.write_all(&bytes)?;
    let header = DumpHeader {
        dim: field.grid().dim(),
        n: field.grid().points_per_axis(),
        half_width: field.grid().half_width(),
        kind,
    };
    fs::write(sidecar_path(path), serde_json::to_vec(&header)?)?;
    Ok(())
}

pub fn read_dump(path: &Path) -> Result<SpectralField> {
    let header: DumpHeader = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
    let grid = SpectralGrid::new(header.dim, header.n, header.half_width)?;
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() != grid.len() * 16 {
        return Err(invalid(
            "dump",
            format!("expected {} bytes, found {}", grid.len() * 16, bytes.len()),
        ));
    }
    let data: Vec<Complex64> = bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect();
    match header.kind {
        DumpKind::Values => SpectralField::from_values(grid, data),
        DumpKind::Spectrum => SpectralField::from_spectrum(grid, data),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn grid_examples() {
        let g = SpectralGrid::new(1, 1024, 32.0).unwrap();
        assert!((g.freq_step() - PI / 32.0).abs() < 1e-15);
        assert!((g.nyquist() - 16.0 * PI).abs() < 1e-12);
        assert_eq!(g.band(), (-2, 4));

        let g = SpectralGrid::new(1, 64, PI).unwrap();
        assert!((g.freq_step() - 1.0).abs() < 1e-15);
        assert!((g.nyquist() - 32.0).abs() < 1e-12);
        assert_eq!(g.band(), (1, 4));

        let g = SpectralGrid::new(2, 256, 16.0).unwrap();
        assert_eq!(g.len(), 256 * 256);
        assert_eq!(g.spacing(), 0.125);
    }

    #[test]
    fn grid_rejections() {
        assert!(matches!(SpectralGrid::new(1, 1000, 1.0), Err(Error::InvalidGrid(_))));
        assert!(matches!(SpectralGrid::new(1, 32, 1.0), Err(Error::InvalidGrid(_))));
        assert!(matches!(SpectralGrid::new(4, 64, 1.0), Err(Error::InvalidGrid(_))));
        // 64 points on a huge domain: nyquist 2, freq step ~ 0.003 -> band [-7, 0] is fine,
        // but a tiny domain squeezes the band.
        assert!(matches!(SpectralGrid::new(1, 64, 0.1), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn origin_node_is_zero() {
        let g = SpectralGrid::new(2, 64, PI).unwrap();
        assert_eq!(g.point(g.origin_index()), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn gaussian_is_self_dual() {
        let g = SpectralGrid::new(1, 1024, 32.0).unwrap();
        let f = SpectralField::from_fn(g, |x| c((-x[0] * x[0] / 2.0).exp()));
        let err = (0..g.len())
            .map(|i| {
                let xi = g.frequency(i)[0];
                (f.spectrum()[i] - c((-xi * xi / 2.0).exp())).norm()
            })
            .fold(0.0, f64::max);
        assert!(err <= 1e-10, "max abs error {err}");
    }

    #[test]
    fn constant_concentrates_at_zero() {
        let g = SpectralGrid::new(1, 256, 4.0).unwrap();
        let f = SpectralField::from_fn(g, |_| c(1.0));
        let expected = 2.0 * 4.0 / (2.0 * PI).sqrt();
        assert!((f.spectrum()[0] - c(expected)).norm() < 1e-12);
        let rest = f.spectrum()[1..].iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(rest < 1e-12);
    }

    #[test]
    fn delta_has_flat_modulus() {
        let g = SpectralGrid::new(1, 128, 2.0).unwrap();
        let mut v = vec![c(0.0); g.len()];
        v[17] = c(1.0);
        let f = SpectralField::from_values(g, v).unwrap();
        let m0 = f.spectrum()[0].norm();
        assert!(f.spectrum().iter().all(|s| (s.norm() - m0).abs() < 1e-14));
    }

    #[test]
    fn norm_examples() {
        let g = SpectralGrid::new(1, 256, 3.0).unwrap();
        let one = SpectralField::from_fn(g, |_| c(1.0));
        assert!((weighted_lp_norm(&one, 2.0, None).unwrap() - 6f64.sqrt()).abs() < 1e-12);

        let g = SpectralGrid::new(1, 1024, 32.0).unwrap();
        let gauss = SpectralField::from_fn(g, |x| c((-x[0] * x[0] / 2.0).exp()));
        let v = weighted_lp_norm(&gauss, 2.0, None).unwrap();
        assert!((v / PI.powf(0.25) - 1.0).abs() <= 1e-8);

        let g = SpectralGrid::new(1, 256, 1.0).unwrap();
        let one = SpectralField::from_fn(g, |_| c(1.0));
        let w = Weight::power(0.5);
        let v = weighted_lp_norm(&one, 2.0, Some(&w)).unwrap();
        assert!((v / (4.0f64 / 3.0).sqrt() - 1.0).abs() <= 1e-3, "{v}");
    }

    #[test]
    fn rejects_p_below_one() {
        let g = SpectralGrid::new(1, 64, PI).unwrap();
        let f = SpectralField::zeros(g);
        assert!(weighted_lp_norm(&f, 0.5, None).is_err());
    }

    #[test]
    fn dilation_moves_modes() {
        let g = SpectralGrid::new(1, 128, PI).unwrap();
        let f = SpectralField::from_fn(g, |x| c(x[0].cos()));
        let d = f.dilate(3);
        for i in 0..g.len() {
            let x = g.point(i)[0];
            assert!((d.values()[i] - c((3.0 * x).cos())).norm() < 1e-12);
        }
    }

    #[test]
    fn dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = SpectralGrid::new(2, 64, PI).unwrap();
        let f = SpectralField::from_fn(g, |x| Complex64::new(x[0], -x[1]));
        for kind in [DumpKind::Values, DumpKind::Spectrum] {
            let path = dir.path().join("f.bin");
            write_dump(&f, &path, kind).unwrap();
            let bytes = fs::read(&path).unwrap();
            assert_eq!(bytes.len(), g.len() * 16);
            let back = read_dump(&path).unwrap();
            let err = back
                .values()
                .iter()
                .zip(f.values())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(err < 1e-12);
            let header: serde_json::Value =
                serde_json::from_slice(&fs::read(dir.path().join("f.json")).unwrap()).unwrap();
            assert_eq!(header["n"], 64);
        }
    }
}
