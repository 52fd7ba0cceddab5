//! Small steady states of the forced equation
//!
//! ```text
//! Λ^α θ̃ + u_θ̃·∇θ̃ = f
//! ```
//!
//! found by the Picard map `θ̃ ↦ Λ^{-α} f - Λ^{-α} P(u_θ̃·∇θ̃)`, where `P` is the
//! dealiasing projection.

use std::f64::consts::PI;
use std::sync::Arc;

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{lp_norm, weighted_l2m};
use crate::error::{Error, Result};
use crate::field::{Field, VectorField};
use crate::grid::{Grid, ModelParams};
use crate::spectral::{advection, ensure_mean_zero, fractional_power, gradient, scale_by_power};
use crate::Complex64;

/// One explicitly prescribed Fourier coefficient of the forcing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralMode {
    pub m1: i64,
    pub m2: i64,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// Forcing recipes. All realized forcings have zero mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingSpec {
    Zero,
    /// Smooth non-radial spectrum supported in `k_lo < |k| < k_hi`, scaled to
    /// `max |f| = amplitude`.
    Ring {
        amplitude: f64,
        k_lo: f64,
        k_hi: f64,
        #[serde(default)]
        seed: u64,
    },
    /// `f̂(ξ) ∝ |ξ|^{1+δ}(1 + ½cos 2φ) e^{-|ξ|²}`, scaled to `max |f| = amplitude`.
    AlgebraicCutoff {
        amplitude: f64,
        delta: f64,
    },
    /// Coefficients given per lattice mode; conjugates are filled in.
    ExplicitSpectral {
        modes: Vec<SpectralMode>,
    },
}

impl ForcingSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ForcingSpec::Zero => Ok(()),
            ForcingSpec::Ring {
                amplitude,
                k_lo,
                k_hi,
                ..
            } => {
                if !amplitude.is_finite() {
                    return Err(Error::config("forcing.amplitude", "must be finite"));
                }
                if !(*k_lo >= 0.0 && k_lo < k_hi) {
                    return Err(Error::config("forcing.k_lo", "need 0 <= k_lo < k_hi"));
                }
                Ok(())
            }
            ForcingSpec::AlgebraicCutoff { amplitude, delta } => {
                if !amplitude.is_finite() {
                    return Err(Error::config("forcing.amplitude", "must be finite"));
                }
                if !(*delta > 0.0) {
                    return Err(Error::config("forcing.delta", "must be positive"));
                }
                Ok(())
            }
            ForcingSpec::ExplicitSpectral { modes } => {
                if modes.iter().any(|m| m.m1 == 0 && m.m2 == 0) {
                    return Err(Error::config(
                        "forcing.modes",
                        "the zero mode must not be forced",
                    ));
                }
                Ok(())
            }
        }
    }

    /// The same recipe with its amplitude multiplied by `s`.
    pub fn scaled(&self, s: f64) -> ForcingSpec {
        let mut out = self.clone();
        match &mut out {
            ForcingSpec::Zero => {}
            ForcingSpec::Ring { amplitude, .. }
            | ForcingSpec::AlgebraicCutoff { amplitude, .. } => *amplitude *= s,
            ForcingSpec::ExplicitSpectral { modes } => {
                for m in modes {
                    m.re *= s;
                    m.im *= s;
                }
            }
        }
        out
    }
}

/// Build the forcing field on `grid`.
pub fn realize_forcing(spec: &ForcingSpec, grid: &Arc<Grid>) -> Result<Field> {
    spec.validate()?;
    let field = match spec {
        ForcingSpec::Zero => Field::zeros(grid),
        ForcingSpec::Ring {
            amplitude,
            k_lo,
            k_hi,
            seed,
        } => {
            let (lo, hi) = (*k_lo, *k_hi);
            let resolved = (0..grid.len()).any(|i| {
                let (k1, k2) = grid.k_at(i);
                let r = k1.hypot(k2);
                r > lo && r < hi
            });
            if !resolved {
                return Err(Error::BandEmpty { k_lo: lo, k_hi: hi });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let harmonics: Vec<(f64, f64)> = (0..4)
                .map(|_| (rng.random_range(0.5..1.0), rng.random_range(0.0..2.0 * PI)))
                .collect();
            let mid = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo);
            let shape = Field::from_transform(grid, |k1, k2| {
                let r = k1.hypot(k2);
                let u = (r - mid) / half;
                if u.abs() >= 1.0 {
                    return Complex64::new(0.0, 0.0);
                }
                let bump = (-1.0 / (1.0 - u * u)).exp();
                let phi = k2.atan2(k1);
                let angular: Complex64 = harmonics
                    .iter()
                    .enumerate()
                    .map(|(j, &(a, p))| Complex64::from_polar(a, j as f64 * phi + p))
                    .sum();
                angular * bump
            });
            normalize_peak(shape, *amplitude)
        }
        ForcingSpec::AlgebraicCutoff { amplitude, delta } => {
            let shape = Field::from_transform(grid, |k1, k2| {
                let r2 = k1 * k1 + k2 * k2;
                if r2 == 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                let phi = k2.atan2(k1);
                let v =
                    r2.powf(0.5 * (1.0 + delta)) * (1.0 + 0.5 * (2.0 * phi).cos()) * (-r2).exp();
                Complex64::new(v, 0.0)
            });
            normalize_peak(shape, *amplitude)
        }
        ForcingSpec::ExplicitSpectral { modes } => {
            let mut c = vec![Complex64::new(0.0, 0.0); grid.len()];
            for m in modes {
                let idx = grid.index_of_mode(m.m1, m.m2).ok_or_else(|| {
                    Error::config(
                        "forcing.modes",
                        format!("mode ({}, {}) not on the grid", m.m1, m.m2),
                    )
                })?;
                let conj = grid.conjugate_index(idx);
                if conj == idx {
                    c[idx] += m.re;
                } else {
                    let z = Complex64::new(m.re, m.im);
                    c[idx] += z;
                    c[conj] += z.conj();
                }
            }
            Field::from_coefficients(grid, c)?
        }
    };
    let mut c = field.into_coefficients();
    c[0] = Complex64::new(0.0, 0.0);
    Field::from_coefficients(grid, c)
}

fn normalize_peak(shape: Field, amplitude: f64) -> Field {
    let peak = lp_norm(&shape, f64::INFINITY);
    if peak == 0.0 {
        shape
    } else {
        shape.scaled(amplitude / peak)
    }
}

/// Result of the fixed-point iteration.
#[derive(Debug, Clone)]
pub struct SteadyState {
    pub theta_tilde: Field,
    /// Residual of each iterate, starting from `θ̃₀ = Λ^{-α} f`.
    pub residual_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub tol: f64,
}

impl SteadyState {
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(0.0)
    }

    /// Ratios `r_{n+1}/r_n` of consecutive residuals.
    pub fn contraction_ratios(&self) -> Vec<f64> {
        self.residual_history
            .windows(2)
            .map(|w| w[1] / w[0])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PicardOptions {
    /// Absolute residual tolerance; `None` means `1e-12·‖Λ^{-α} f‖₂`.
    pub tol: Option<f64>,
    pub max_iter: usize,
    /// Consecutive residual increases treated as divergence.
    pub divergence_window: usize,
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions {
            tol: None,
            max_iter: 200,
            divergence_window: 5,
        }
    }
}

/// Relative default tolerance.
pub const DEFAULT_RELATIVE_TOL: f64 = 1e-12;

/// `‖Λ^α θ̃ + P(u_θ̃·∇θ̃) - f‖₂`.
pub fn residual(theta_tilde: &Field, f: &Field, params: &ModelParams) -> f64 {
    let grid = theta_tilde.grid();
    let mut lam = theta_tilde.coefficients().into_owned();
    scale_by_power(grid, &mut lam, params.alpha());
    let adv = advection(theta_tilde, params);
    let adv = adv.coefficients();
    let fc = f.coefficients();
    let s: f64 = lam
        .iter()
        .zip(adv.iter())
        .zip(fc.iter())
        .map(|((a, b), c)| (a + b - c).norm_sqr())
        .sum();
    grid.box_length() * s.sqrt()
}

pub fn picard_solve(f: &Field, params: &ModelParams, opts: &PicardOptions) -> Result<SteadyState> {
    ensure_mean_zero(f)?;
    let grid = f.grid().clone();
    let alpha = params.alpha();
    let mut base = f.coefficients().into_owned();
    base[0] = Complex64::new(0.0, 0.0);
    scale_by_power(&grid, &mut base, -alpha);
    let base_field = Field::from_coefficients(&grid, base.clone())?;
    let tol = opts
        .tol
        .unwrap_or(DEFAULT_RELATIVE_TOL * base_field.l2_norm());

    let mut theta = base_field;
    let mut history = Vec::new();
    let mut increases = 0usize;
    for it in 1..=opts.max_iter.max(1) {
        let r = residual(&theta, f, params);
        debug!("picard iteration {it}: residual {r:.3e}");
        if !r.is_finite() {
            return Err(Error::Diverged {
                iterations: it,
                residual: r,
            });
        }
        if let Some(&prev) = history.last() {
            if r > prev {
                increases += 1;
            } else {
                increases = 0;
            }
        }
        history.push(r);
        if r <= tol {
            return Ok(SteadyState {
                theta_tilde: theta,
                residual_history: history,
                iterations: it,
                converged: true,
                tol,
            });
        }
        if increases >= opts.divergence_window {
            return Err(Error::Diverged {
                iterations: it,
                residual: r,
            });
        }
        if it == opts.max_iter {
            break;
        }
        let mut next = advection(&theta, params).into_coefficients();
        scale_by_power(&grid, &mut next, -alpha);
        for (n, b) in next.iter_mut().zip(base.iter()) {
            *n = b - *n;
        }
        next[0] = Complex64::new(0.0, 0.0);
        theta = Field::from_coefficients(&grid, next)?;
    }
    Ok(SteadyState {
        theta_tilde: theta,
        iterations: history.len(),
        residual_history: history,
        converged: false,
        tol,
    })
}

/// A pair `(lhs, rhs)` with its ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormPair {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

impl NormPair {
    fn new(lhs: f64, rhs: f64) -> Self {
        let ratio = if rhs == 0.0 {
            if lhs == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            lhs / rhs
        };
        NormPair { lhs, rhs, ratio }
    }
}

/// Norm comparisons for a converged steady state.
///
/// Only `bound` carries a pass flag; the other two have unknown constants
/// and are reported as ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AposterioriReport {
    /// `‖θ̃‖_{L^{2/(α-1)}}` against `2‖Λ^{-α} f‖_{L^{2/(α-1)}}`.
    pub bound: NormPair,
    pub bound_pass: bool,
    /// `‖∇θ̃‖_{L^{2/α}}` over `‖Λ^{1-α} f‖_{L^{2/α}}`.
    pub gradient_ratio: NormPair,
    /// `‖∇θ̃‖_{L²(m)}` over `‖Λ^{1-α} f‖_{L²(m)} + ‖f‖_{W^{1-α,2}} + ‖f‖²_{W^{-α,2}}`;
    /// absent when a weighted norm fails the tail guard.
    pub weighted_ratio: Option<NormPair>,
    pub m: f64,
}

fn vector_lp(u: &VectorField, p: f64) -> f64 {
    lp_norm(&u.magnitude(), p)
}

pub fn aposteriori_report(
    ss: &SteadyState,
    f: &Field,
    params: &ModelParams,
    m: f64,
) -> Result<AposterioriReport> {
    if !ss.converged {
        return Err(Error::NotConverged);
    }
    let alpha = params.alpha();
    let theta = &ss.theta_tilde;
    let p1 = 2.0 / (alpha - 1.0);
    let lhs = lp_norm(theta, p1);
    let rhs = 2.0 * lp_norm(&fractional_power(f, -alpha)?, p1);
    let bound = NormPair::new(lhs, rhs);

    let grad = gradient(theta);
    let q = 2.0 / alpha;
    let f1 = fractional_power(f, 1.0 - alpha)?;
    let gradient_ratio = NormPair::new(vector_lp(&grad, q), lp_norm(&f1, q));

    let weighted = || -> Result<NormPair> {
        let g1 = weighted_l2m(&grad.u1, m)?;
        let g2 = weighted_l2m(&grad.u2, m)?;
        let w_f1 = weighted_l2m(&f1, m)?;
        let f_l2 = lp_norm(f, 2.0);
        let w1 = f_l2 + lp_norm(&f1, 2.0);
        let w0 = f_l2 + lp_norm(&fractional_power(f, -alpha)?, 2.0);
        Ok(NormPair::new(g1.hypot(g2), w_f1 + w1 + w0 * w0))
    };
    let weighted_ratio = match weighted() {
        Ok(pair) => Some(pair),
        Err(Error::TailMassExceeded { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(AposterioriReport {
        bound_pass: bound.lhs <= bound.rhs,
        bound,
        gradient_ratio,
        weighted_ratio,
        m,
    })
}
