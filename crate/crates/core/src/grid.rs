//! Periodic square grids, FFT plans and model parameters.
//!
//! A grid of `n × n` points covers the box `[-L/2, L/2)²`. Values are stored
//! row-major with the first index running along `x₁`: entry `i1 * n + i2`
//! sits at `(x₁, x₂) = (-L/2 + i1·Δx, -L/2 + i2·Δx)`.
//!
//! Spectral coefficients use the same layout in FFT index order. Index `i`
//! maps to the lattice integer `m = i` for `i < n/2` and `m = i - n`
//! otherwise, so `m ∈ [-n/2, n/2)` and `k = (2π/L)·m`. Coefficients are
//! normalized so that
//!
//! ```text
//! f(x) = Σ_k c_k e^{i k·x},     c_k = (1/n²) Σ_j f(x_j) e^{-i k·x_j}
//! ```
//!
//! which makes `c_0 · L²` the integral of `f` over the box and `c_k ≈ f̂(k)/L²`
//! for fields that decay inside the box.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Resolution and side length of a periodic square grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    pub box_length: f64,
}

impl GridSpec {
    pub const MIN_POINTS: usize = 16;

    pub fn new(n: usize, box_length: f64) -> Result<Self> {
        let spec = GridSpec { n, box_length };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < Self::MIN_POINTS || !self.n.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "n = {} must be even and at least {}",
                self.n,
                Self::MIN_POINTS
            )));
        }
        if !(self.box_length.is_finite() && self.box_length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "box_length = {} must be positive",
                self.box_length
            )));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        self.box_length / self.n as f64
    }

    /// Lattice spacing `2π/L` in wavenumber space.
    pub fn dk(&self) -> f64 {
        2.0 * PI / self.box_length
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

/// Dissipation exponent and dealiasing cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    alpha: f64,
    dealias_fraction: f64,
}

impl ModelParams {
    pub const DEFAULT_DEALIAS_FRACTION: f64 = 2.0 / 3.0;

    /// Sub-critical model, `1 < alpha < 2`.
    pub fn new(alpha: f64) -> Result<Self> {
        Self::with_dealias(alpha, Self::DEFAULT_DEALIAS_FRACTION)
    }

    pub fn with_dealias(alpha: f64, dealias_fraction: f64) -> Result<Self> {
        if !(alpha > 1.0 && alpha < 2.0) {
            return Err(Error::InvalidParams(format!(
                "alpha = {alpha} outside the sub-critical range (1, 2)"
            )));
        }
        if !(dealias_fraction > 0.0 && dealias_fraction <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "dealias_fraction = {dealias_fraction} must lie in (0, 1]"
            )));
        }
        Ok(ModelParams {
            alpha,
            dealias_fraction,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dealias_fraction(&self) -> f64 {
        self.dealias_fraction
    }
}

impl<'de> Deserialize<'de> for ModelParams {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            alpha: f64,
            #[serde(default = "default_fraction")]
            dealias_fraction: f64,
        }
        fn default_fraction() -> f64 {
            ModelParams::DEFAULT_DEALIAS_FRACTION
        }
        let raw = Raw::deserialize(de)?;
        ModelParams::with_dealias(raw.alpha, raw.dealias_fraction).map_err(serde::de::Error::custom)
    }
}

/// A grid together with its FFT plans and wavenumber tables.
///
/// Shared between fields through an `Arc`; everything here is immutable.
pub struct Grid {
    spec: GridSpec,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Lattice integer `m` for each FFT index.
    modes: Vec<i64>,
    /// `k = (2π/L)·m` for each FFT index.
    wavenumbers: Vec<f64>,
    /// Wavenumbers used by odd-order derivatives: the Nyquist entry is zeroed
    /// since it has no conjugate partner.
    derivative_wavenumbers: Vec<f64>,
    /// Physical coordinates `-L/2 + i·Δx`.
    coords: Vec<f64>,
    /// `|k|` at every flat spectral index.
    abs_k: Vec<f64>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("spec", &self.spec).finish()
    }
}

impl Grid {
    pub fn new(spec: GridSpec) -> Result<Arc<Grid>> {
        spec.validate()?;
        let n = spec.n;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let modes: Vec<i64> = (0..n)
            .map(|i| {
                if i < n / 2 {
                    i as i64
                } else {
                    i as i64 - n as i64
                }
            })
            .collect();
        let dk = spec.dk();
        let wavenumbers: Vec<f64> = modes.iter().map(|&m| dk * m as f64).collect();
        let derivative_wavenumbers = modes
            .iter()
            .map(|&m| {
                if m == -(n as i64) / 2 {
                    0.0
                } else {
                    dk * m as f64
                }
            })
            .collect();
        let dx = spec.dx();
        let coords = (0..n)
            .map(|i| -0.5 * spec.box_length + dx * i as f64)
            .collect();
        let abs_k = (0..n * n)
            .map(|i| wavenumbers[i / n].hypot(wavenumbers[i % n]))
            .collect();
        Ok(Arc::new(Grid {
            spec,
            forward,
            inverse,
            modes,
            wavenumbers,
            derivative_wavenumbers,
            coords,
            abs_k,
        }))
    }

    pub fn with_size(n: usize, box_length: f64) -> Result<Arc<Grid>> {
        Grid::new(GridSpec::new(n, box_length)?)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn len(&self) -> usize {
        self.spec.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spec.is_empty()
    }

    pub fn box_length(&self) -> f64 {
        self.spec.box_length
    }

    pub fn dx(&self) -> f64 {
        self.spec.dx()
    }

    /// Area element `Δx²` of the uniform quadrature.
    pub fn cell_area(&self) -> f64 {
        let dx = self.dx();
        dx * dx
    }

    pub fn modes(&self) -> &[i64] {
        &self.modes
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    pub fn derivative_wavenumbers(&self) -> &[f64] {
        &self.derivative_wavenumbers
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// `|k|` for every flat spectral index.
    pub fn abs_k(&self) -> &[f64] {
        &self.abs_k
    }

    /// Wavevector at flat spectral index `idx`.
    #[inline]
    pub fn k_at(&self, idx: usize) -> (f64, f64) {
        let n = self.spec.n;
        (self.wavenumbers[idx / n], self.wavenumbers[idx % n])
    }

    /// Physical position at flat index `idx`.
    #[inline]
    pub fn x_at(&self, idx: usize) -> (f64, f64) {
        let n = self.spec.n;
        (self.coords[idx / n], self.coords[idx % n])
    }

    /// Flat spectral index of the conjugate wavevector `-k`.
    #[inline]
    pub fn conjugate_index(&self, idx: usize) -> usize {
        let n = self.spec.n;
        let (i1, i2) = (idx / n, idx % n);
        ((n - i1) % n) * n + (n - i2) % n
    }

    /// Flat spectral index of lattice integers `(m1, m2)`, if representable.
    pub fn index_of_mode(&self, m1: i64, m2: i64) -> Option<usize> {
        let n = self.spec.n as i64;
        let half = n / 2;
        if m1 < -half || m1 >= half || m2 < -half || m2 >= half {
            return None;
        }
        let wrap = |m: i64| if m < 0 { (m + n) as usize } else { m as usize };
        Some(wrap(m1) * self.spec.n + wrap(m2))
    }

    /// Whether the Chebyshev lattice norm `max(|m1|,|m2|)` at `idx` survives
    /// a sharp cutoff at `fraction · n/2`.
    #[inline]
    pub fn within_cutoff(&self, idx: usize, fraction: f64) -> bool {
        let n = self.spec.n;
        let cutoff = fraction * (n / 2) as f64;
        let m1 = self.modes[idx / n].unsigned_abs() as f64;
        let m2 = self.modes[idx % n].unsigned_abs() as f64;
        m1.max(m2) <= cutoff
    }

    /// Real samples to normalized spectral coefficients.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        assert_eq!(values.len(), self.len(), "field length does not match grid");
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft2(&mut buf, &self.forward);
        let scale = 1.0 / self.len() as f64;
        self.apply_shift(&mut buf, scale);
        buf
    }

    /// Spectral coefficients to complex samples (the imaginary part carries
    /// only round-off for Hermitian input).
    pub fn inverse(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(
            coeffs.len(),
            self.len(),
            "coefficient length does not match grid"
        );
        let mut buf = coeffs.to_vec();
        self.apply_shift(&mut buf, 1.0);
        self.fft2(&mut buf, &self.inverse);
        buf
    }

    /// Spectral coefficients to real samples.
    pub fn inverse_real(&self, coeffs: &[Complex64]) -> Vec<f64> {
        self.inverse(coeffs).into_iter().map(|c| c.re).collect()
    }

    /// Two Hermitian spectra to their real fields with a single transform,
    /// using `ifft(a + i·b) = a(x) + i·b(x)`.
    pub fn inverse_real_pair(&self, a: &[Complex64], b: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
        assert_eq!(
            a.len(),
            self.len(),
            "coefficient length does not match grid"
        );
        assert_eq!(
            b.len(),
            self.len(),
            "coefficient length does not match grid"
        );
        let i = Complex64::new(0.0, 1.0);
        let packed: Vec<Complex64> = a
            .par_iter()
            .zip(b.par_iter())
            .map(|(x, y)| x + i * y)
            .collect();
        let out = self.inverse(&packed);
        (
            out.iter().map(|z| z.re).collect(),
            out.iter().map(|z| z.im).collect(),
        )
    }

    /// Multiply by `(-1)^(m1+m2)`, the phase from the `-L/2` origin offset.
    fn apply_shift(&self, buf: &mut [Complex64], scale: f64) {
        let n = self.spec.n;
        let modes = &self.modes;
        buf.par_chunks_mut(n).enumerate().for_each(|(i1, row)| {
            let s1 = if modes[i1] % 2 == 0 { scale } else { -scale };
            for (i2, c) in row.iter_mut().enumerate() {
                *c *= if modes[i2] % 2 == 0 { s1 } else { -s1 };
            }
        });
    }

    fn fft2(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.spec.n;
        let mut tmp = vec![Complex64::new(0.0, 0.0); n * n];
        fft_rows(buf, plan, n);
        transpose::transpose(buf, &mut tmp, n, n);
        fft_rows(&mut tmp, plan, n);
        transpose::transpose(&tmp, buf, n, n);
    }
}

/// Row FFTs, batched into a few contiguous blocks per thread.
fn fft_rows(data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>, n: usize) {
    let scratch_len = plan.get_inplace_scratch_len();
    let rows_per_block = n.div_ceil(rayon::current_num_threads() * 4).max(1);
    data.par_chunks_mut(n * rows_per_block).for_each_init(
        || vec![Complex64::new(0.0, 0.0); scratch_len],
        |scratch, block| plan.process_with_scratch(block, scratch),
    );
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_specs() {
        assert!(GridSpec::new(15, 1.0).is_err());
        assert!(GridSpec::new(8, 1.0).is_err());
        assert!(GridSpec::new(32, 0.0).is_err());
        assert!(GridSpec::new(32, -1.0).is_err());
        assert!(GridSpec::new(32, 2.0).is_ok());
    }

    #[test]
    fn alpha_must_be_subcritical() {
        assert!(ModelParams::new(1.0).is_err());
        assert!(ModelParams::new(2.0).is_err());
        assert!(ModelParams::new(0.5).is_err());
        assert!(ModelParams::new(1.5).is_ok());
        assert!(ModelParams::with_dealias(1.5, 0.0).is_err());
    }

    #[test]
    fn coordinates_cover_centered_box() {
        let g = Grid::with_size(16, 4.0).unwrap();
        assert_eq!(g.coords()[0], -2.0);
        assert!((g.coords()[15] - (2.0 - 0.25)).abs() < 1e-15);
        assert_eq!(g.coords()[8], 0.0);
    }

    #[test]
    fn conjugate_index_is_involution() {
        let g = Grid::with_size(16, 1.0).unwrap();
        for idx in 0..g.len() {
            assert_eq!(g.conjugate_index(g.conjugate_index(idx)), idx);
        }
        assert_eq!(g.index_of_mode(0, 0), Some(0));
        assert_eq!(g.index_of_mode(-1, 2), Some(15 * 16 + 2));
        assert_eq!(g.index_of_mode(8, 0), None);
    }

    #[test]
    fn single_mode_transform() {
        let g = Grid::with_size(16, 2.0 * PI).unwrap();
        let vals: Vec<f64> = (0..g.len()).map(|i| (2.0 * g.x_at(i).0).cos()).collect();
        let c = g.forward(&vals);
        let plus = g.index_of_mode(2, 0).unwrap();
        let minus = g.index_of_mode(-2, 0).unwrap();
        for (i, ci) in c.iter().enumerate() {
            let expect = if i == plus || i == minus { 0.5 } else { 0.0 };
            assert!(
                (ci.re - expect).abs() < 1e-14 && ci.im.abs() < 1e-14,
                "{i}: {ci}"
            );
        }
    }

    #[test]
    fn paired_inverse_matches_separate_ones() {
        let g = Grid::with_size(16, 3.0).unwrap();
        let a: Vec<f64> = (0..g.len()).map(|i| (g.x_at(i).0 * 2.0).sin()).collect();
        let b: Vec<f64> = (0..g.len()).map(|i| g.x_at(i).1.cos() + 0.5).collect();
        let (ra, rb) = g.inverse_real_pair(&g.forward(&a), &g.forward(&b));
        for i in 0..g.len() {
            assert!((ra[i] - a[i]).abs() < 1e-14 && (rb[i] - b[i]).abs() < 1e-14);
        }
    }
}
