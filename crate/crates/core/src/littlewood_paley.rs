//! Littlewood-Paley frame on the frequency lattice, the four weighted
//! Bessel/Besov norms, the square function, lift operators and a Mikhlin
//! constant checker.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::measures::DyadicSequence;
use crate::numerics::{gauss16, pairwise_sum};
use crate::spectral::{norm, weighted_lp_norm, weighted_lp_norm_real, SpectralField, SpectralGrid};
use crate::symbols::{fd_derivative, multi_indices};
use crate::weights::{Weight, WeightSpec};

fn phi(s: f64) -> f64 {
    if s > 0.0 {
        (-1.0 / s).exp()
    } else {
        0.0
    }
}

/// Smooth step `phi(s) / (phi(s) + phi(1 - s))`: 0 for `s <= 0`, 1 for `s >= 1`.
pub fn bump_quotient(s: f64) -> f64 {
    let a = phi(s);
    let b = phi(1.0 - s);
    a / (a + b)
}

/// Radial cutoff: 1 on `[0, 1]`, 0 on `[2, inf)`, `h(2 - r)` between.
pub fn chi(r: f64) -> f64 {
    if r <= 1.0 {
        1.0
    } else if r >= 2.0 {
        0.0
    } else {
        bump_quotient(2.0 - r)
    }
}

/// `chi(2^{-j} r) - chi(2^{-j+1} r)`, clamped at 0.
pub fn block(j: i32, r: f64) -> f64 {
    let s = 2f64.powi(-j);
    (chi(s * r) - chi(2.0 * s * r)).max(0.0)
}

/// Tabulated dyadic blocks for one grid.
#[derive(Debug, Clone)]
pub struct LpFrame {
    grid: SpectralGrid,
    band: (i32, i32),
    radii: Vec<f64>,
    /// Blocks for `j` in `[j_min - 1, j_max + 1]`.
    blocks: Vec<Vec<f64>>,
    clamped: usize,
}

impl LpFrame {
    pub fn new(grid: &SpectralGrid) -> Self {
        let band = grid.band();
        let radii: Vec<f64> = (0..grid.len()).map(|i| grid.frequency_norm(i)).collect();
        let mut clamped = 0;
        let blocks = (band.0 - 1..=band.1 + 1)
            .map(|j| {
                let s = 2f64.powi(-j);
                radii
                    .iter()
                    .map(|&r| {
                        let v = chi(s * r) - chi(2.0 * s * r);
                        if v < 0.0 {
                            clamped += 1;
                            0.0
                        } else {
                            v
                        }
                    })
                    .collect()
            })
            .collect();
        LpFrame {
            grid: *grid,
            band,
            radii,
            blocks,
            clamped,
        }
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn band(&self) -> (i32, i32) {
        self.band
    }

    /// Count of block values below zero that were clamped.
    pub fn clamped(&self) -> usize {
        self.clamped
    }

    /// Split level used by inhomogeneous norms: 0 when resolved, else `j_min`.
    pub fn split_level(&self) -> i32 {
        if self.band.0 <= 0 && 0 <= self.band.1 {
            0
        } else {
            self.band.0
        }
    }

    fn check_level(&self, j: i32) -> Result<()> {
        let (lo, hi) = (self.band.0 - 1, self.band.1 + 1);
        if j < lo || j > hi {
            return Err(Error::LevelOutOfBand { j, lo, hi });
        }
        Ok(())
    }

    /// Block multiplier at level `j` over the lattice.
    pub fn block_multiplier(&self, j: i32) -> Result<&[f64]> {
        self.check_level(j)?;
        Ok(&self.blocks[(j - self.band.0 + 1) as usize])
    }

    /// `chi(2^{-j0} xi)` over the lattice.
    pub fn low_multiplier(&self, j0: i32) -> Result<Vec<f64>> {
        self.check_level(j0)?;
        let s = 2f64.powi(-j0);
        Ok(self.radii.iter().map(|&r| chi(s * r)).collect())
    }

    fn apply_real(&self, field: &SpectralField, m: &[f64]) -> SpectralField {
        let spectrum: Vec<Complex64> = field.spectrum().iter().zip(m).map(|(s, v)| s * v).collect();
        SpectralField::from_spectrum(self.grid, spectrum).expect("length matches grid")
    }

    /// `Delta_j f`.
    pub fn project(&self, field: &SpectralField, j: i32) -> Result<SpectralField> {
        Ok(self.apply_real(field, self.block_multiplier(j)?))
    }

    /// `S_{j0} f`, the telescoped low-pass `chi(2^{-j0} xi)`.
    pub fn low_projection(&self, field: &SpectralField, j0: i32) -> Result<SpectralField> {
        Ok(self.apply_real(field, &self.low_multiplier(j0)?))
    }

    fn levels(&self, homogeneous: bool) -> (i32, i32) {
        if homogeneous {
            self.band
        } else {
            (self.split_level() + 1, self.band.1)
        }
    }

    /// Weighted norm of the selected flavor; see [`NormSpec`].
    pub fn space_norm(&self, field: &SpectralField, spec: &NormSpec) -> Result<NormReport> {
        let w = spec.weight.node_values(&self.grid)?;
        if let Some((index, &value)) = w.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::WeightUndefined { index, value });
        }
        self.space_norm_with(field, spec, &w)
    }

    /// [`LpFrame::space_norm`] with precomputed node weights.
    pub fn space_norm_with(&self, field: &SpectralField, spec: &NormSpec, w: &[f64]) -> Result<NormReport> {
        if !(spec.q > 0.0) || !(spec.p >= 1.0) {
            return Err(invalid("spec", format!("needs p >= 1 and q > 0, got p = {}, q = {}", spec.p, spec.q)));
        }
        let (lo, hi) = self.levels(spec.homogeneous);
        if lo <= hi && !spec.r.covers(lo, hi) {
            return Err(Error::SequenceCoverage { lo, hi });
        }
        let split = (!spec.homogeneous).then(|| self.split_level());
        let low = match split {
            Some(j0) => {
                let s0 = self.low_projection(field, j0)?;
                weighted_lp_norm_real(&moduli(&s0), &self.grid, spec.p, Some(w))?
            }
            None => 0.0,
        };
        let blocks: Vec<(f64, SpectralField)> = (lo..=hi)
            .into_par_iter()
            .map(|j| {
                let amp = 2f64.powf(spec.r.get(j).unwrap());
                let b = self.apply_real(field, &self.blocks[(j - self.band.0 + 1) as usize]);
                (amp, b)
            })
            .collect();
        if let Some((i, _)) = blocks.iter().enumerate().find(|(_, (a, _))| !a.is_finite()) {
            return Err(Error::Overflow(lo + i as i32));
        }
        let value = match spec.flavor {
            Flavor::Bessel => {
                let mut sq = vec![0.0f64; self.grid.len()];
                for (amp, b) in &blocks {
                    for (acc, v) in sq.iter_mut().zip(b.values()) {
                        *acc += amp * amp * v.norm_sqr();
                    }
                }
                let sf: Vec<f64> = sq.iter().map(|v| v.sqrt()).collect();
                low + weighted_lp_norm_real(&sf, &self.grid, spec.p, Some(w))?
            }
            Flavor::Besov => {
                let mut terms = Vec::with_capacity(blocks.len());
                for (amp, b) in &blocks {
                    let n = weighted_lp_norm_real(&moduli(b), &self.grid, spec.p, Some(w))?;
                    terms.push((amp * n).powf(spec.q));
                }
                low + pairwise_sum(&terms).powf(1.0 / spec.q)
            }
        };
        Ok(NormReport {
            value,
            split_level: split,
            levels: (lo, hi),
        })
    }

    /// `(sum_{j in band} |Delta_j f|^2)^{1/2}` pointwise.
    pub fn square_function(&self, field: &SpectralField) -> SpectralField {
        let (lo, hi) = self.band;
        let blocks: Vec<SpectralField> = (lo..=hi)
            .into_par_iter()
            .map(|j| self.project(field, j).expect("band level"))
            .collect();
        let mut sq = vec![0.0f64; self.grid.len()];
        for b in &blocks {
            for (acc, v) in sq.iter_mut().zip(b.values()) {
                *acc += v.norm_sqr();
            }
        }
        let vals = sq.into_iter().map(|v| Complex64::new(v.sqrt(), 0.0)).collect();
        SpectralField::from_values(self.grid, vals).expect("length matches grid")
    }

    /// Lift multiplier `sum 2^{r(j)} Psi_j`, plus the low-pass below the
    /// split level when inhomogeneous.
    pub fn lift_multiplier(&self, r: &DyadicSequence, homogeneous: bool) -> Result<Vec<f64>> {
        let (lo, hi) = self.levels(homogeneous);
        if lo <= hi && !r.covers(lo, hi) {
            return Err(Error::SequenceCoverage { lo, hi });
        }
        let mut m = if homogeneous {
            vec![0.0; self.grid.len()]
        } else {
            self.low_multiplier(self.split_level())?
        };
        for j in lo..=hi {
            let amp = 2f64.powf(r.get(j).unwrap());
            if !amp.is_finite() {
                return Err(Error::Overflow(j));
            }
            for (acc, b) in m.iter_mut().zip(self.block_multiplier(j)?) {
                *acc += amp * b;
            }
        }
        Ok(m)
    }

    pub fn lift(&self, field: &SpectralField, r: &DyadicSequence, homogeneous: bool) -> Result<SpectralField> {
        Ok(self.apply_real(field, &self.lift_multiplier(r, homogeneous)?))
    }

    /// Inverse of [`LpFrame::lift`] on the support of its multiplier.
    pub fn lift_inverse(&self, field: &SpectralField, r: &DyadicSequence, homogeneous: bool) -> Result<SpectralField> {
        let m: Vec<f64> = self
            .lift_multiplier(r, homogeneous)?
            .into_iter()
            .map(|v| if v > 0.0 { 1.0 / v } else { 0.0 })
            .collect();
        Ok(self.apply_real(field, &m))
    }

    /// True where the lattice frequency lies in `[2^{j_min}, 2^{j_max}]`.
    pub fn resolved_mask(&self) -> Vec<bool> {
        let (lo, hi) = (2f64.powi(self.band.0), 2f64.powi(self.band.1));
        self.radii.iter().map(|&r| r >= lo && r <= hi).collect()
    }
}

fn moduli(f: &SpectralField) -> Vec<f64> {
    f.values().iter().map(|v| v.norm()).collect()
}

/// `||(1 + |xi|^2)^{s/2} f||_{L_p(w)}`.
pub fn classical_bessel_norm(field: &SpectralField, s: f64, p: f64, weight: Option<&Weight>) -> Result<f64> {
    if s == 0.0 {
        return weighted_lp_norm(field, p, weight);
    }
    let lifted = field.apply_multiplier(|xi| {
        let r2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
        Complex64::new((1.0 + r2).powf(s / 2.0), 0.0)
    });
    weighted_lp_norm(&lifted, p, weight)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    Bessel,
    Besov,
}

/// Norm selection. Homogeneous flavors sum over the resolved band;
/// inhomogeneous ones sum over levels above the split level and add
/// `||S_{j0} f||` outside the sum.
#[derive(Debug, Clone)]
pub struct NormSpec {
    pub p: f64,
    pub q: f64,
    pub flavor: Flavor,
    pub homogeneous: bool,
    pub r: DyadicSequence,
    pub weight: Weight,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormReport {
    pub value: f64,
    /// Level of the low-pass projection for inhomogeneous flavors.
    pub split_level: Option<i32>,
    pub levels: (i32, i32),
}

/// JSON smoothness sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SmoothnessSpec {
    Linear {
        slope: f64,
        #[serde(default)]
        offset: f64,
    },
    Table { j_lo: i32, values: Vec<f64> },
}

impl SmoothnessSpec {
    /// Materializes the sequence over `[lo, hi]` (tables as given).
    pub fn sequence(&self, lo: i32, hi: i32) -> DyadicSequence {
        match self {
            SmoothnessSpec::Linear { slope, offset } => DyadicSequence::linear(*slope, *offset, lo, hi),
            SmoothnessSpec::Table { j_lo, values } => DyadicSequence::new(*j_lo, values.clone()),
        }
    }
}

/// JSON form of [`NormSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormSpecJson {
    pub p: f64,
    pub q: f64,
    pub flavor: Flavor,
    pub homogeneous: bool,
    pub r: SmoothnessSpec,
    #[serde(default)]
    pub weight: WeightSpec,
}

impl NormSpecJson {
    pub fn build(&self, grid: &SpectralGrid) -> NormSpec {
        let (lo, hi) = grid.band();
        NormSpec {
            p: self.p,
            q: self.q,
            flavor: self.flavor,
            homogeneous: self.homogeneous,
            r: self.r.sequence(lo - 2, hi + 2),
            weight: Weight::from(&self.weight),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MikhlinReport {
    pub constant: f64,
    /// `(R, max over |alpha| <= d of the annulus quantity)`.
    pub per_radius: Vec<(f64, f64)>,
    pub warnings: Vec<String>,
}

/// Annulus integral `int_{R < |xi| < 2R} g(xi) d xi` with radial
/// Gauss-Legendre and an angular rule (trapezoid in angle, Gauss in the
/// polar cosine for d = 3).
fn annulus_integral(dim: usize, r: f64, g: &(dyn Fn(&[f64; 3]) -> f64 + Sync)) -> f64 {
    let radial: Vec<(f64, f64)> = (0..4)
        .flat_map(|k| {
            let a = r * (1.0 + k as f64 / 4.0);
            let b = r * (1.0 + (k + 1) as f64 / 4.0);
            gauss16().mapped(a, b).collect::<Vec<_>>()
        })
        .collect();
    let terms: Vec<f64> = radial
        .par_iter()
        .map(|&(rho, wr)| match dim {
            1 => wr * (g(&[rho, 0.0, 0.0]) + g(&[-rho, 0.0, 0.0])),
            2 => {
                let n = 128;
                let s: f64 = (0..n)
                    .map(|k| {
                        let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                        g(&[rho * th.cos(), rho * th.sin(), 0.0])
                    })
                    .sum();
                wr * rho * s * 2.0 * std::f64::consts::PI / n as f64
            }
            _ => {
                let n = 64;
                let mut s = 0.0;
                for (c, wc) in gauss16().mapped(-1.0, 1.0) {
                    let sn = (1.0 - c * c).sqrt();
                    for k in 0..n {
                        let ph = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                        s += wc * g(&[rho * sn * ph.cos(), rho * sn * ph.sin(), rho * c]);
                    }
                }
                wr * rho * rho * s * 2.0 * std::f64::consts::PI / n as f64
            }
        })
        .collect();
    pairwise_sum(&terms)
}

/// `sup_R max_{|alpha| <= d} (R^{2|alpha| - d} int_{R<|xi|<2R} |D^alpha m|^2)^{1/2}`
/// over `R = 2^j`, `j` in `levels`.
pub fn mikhlin_constant(
    multiplier: &(dyn Fn(&[f64; 3]) -> Complex64 + Sync),
    dim: usize,
    levels: std::ops::RangeInclusive<i32>,
) -> Result<MikhlinReport> {
    if !(1..=3).contains(&dim) {
        return Err(invalid("dim", format!("{dim} not in 1..=3")));
    }
    let mut per_radius = Vec::new();
    let mut warnings = Vec::new();
    for j in levels {
        let r = 2f64.powi(j);
        let mut best: f64 = 0.0;
        for k in 0..=dim {
            for alpha in multi_indices(dim, k) {
                let warn = std::sync::atomic::AtomicBool::new(false);
                let integrand = |xi: &[f64; 3]| {
                    let (d, err) = fd_derivative(multiplier, xi, alpha);
                    let scale = d.norm().max(norm(xi).powi(-(k as i32)));
                    if k > 0 && err > 1e-3 * scale {
                        warn.store(true, std::sync::atomic::Ordering::Relaxed);
                    }
                    d.norm_sqr()
                };
                let v = (r.powi(2 * k as i32 - dim as i32) * annulus_integral(dim, r, &integrand)).sqrt();
                if warn.load(std::sync::atomic::Ordering::Relaxed) {
                    warnings.push(format!("R = {r}, alpha = {alpha:?}: finite-difference conditioning"));
                }
                best = best.max(v);
            }
        }
        per_radius.push((r, best));
    }
    let constant = per_radius.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok(MikhlinReport {
        constant,
        per_radius,
        warnings,
    })
}
