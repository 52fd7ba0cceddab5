//! Self-similar variables `τ = ln(1+t)`, `η = x/(1+t)^{1/α}`.
//!
//! In these variables the linearized perturbation equation is `V_τ = LV` with
//!
//! ```text
//! L = -Λ^α + (1/α) η·∇ + (1 - 1/α)
//! ```
//!
//! whose top eigenfunction is the profile `G`, `Ĝ(ξ) = e^{-|ξ|^α}`, with
//! eigenvalue `1 - 3/α`. The semigroup has the closed form
//!
//! ```text
//! (e^{τL} f)^(ξ) = e^{(1-3/α)τ} e^{-a(τ)|ξ|^α} f̂(e^{-τ/α} ξ),   a(τ) = 1 - e^{-τ}
//! ```

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::tail_mass;
use crate::error::{Error, Result};
use crate::field::{Field, VectorField};
use crate::grid::{Grid, ModelParams};
use crate::spectral::{grad_physical, gradient, scale_by_power};
use crate::Complex64;

/// Refuses fields whose energy near the box edge is not negligible.
///
/// `η·∇` and the `(1+|x|²)^m` weights grow toward the boundary, where the
/// periodic box no longer resembles the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TailGuard {
    /// Radius, as a fraction of `L/2`, outside which energy is counted.
    pub radius_fraction: f64,
    /// Largest admissible fraction of `∫|f|²` outside that radius.
    pub limit: f64,
}

impl Default for TailGuard {
    fn default() -> Self {
        TailGuard {
            radius_fraction: 0.8,
            limit: 1e-6,
        }
    }
}

impl TailGuard {
    pub fn check(&self, field: &Field) -> Result<()> {
        let fraction = tail_mass(field, self.radius_fraction);
        if fraction > self.limit {
            return Err(Error::TailMassExceeded {
                fraction,
                limit: self.limit,
            });
        }
        Ok(())
    }
}

/// The profile `G` sampled on a grid.
#[derive(Debug, Clone)]
pub struct Profile {
    pub g: Field,
    pub alpha: f64,
}

/// Inverse transform of the gridded symbol `e^{-|k|^α}`.
///
/// Accepts `0 < α ≤ 2` so the heat (`α = 2`) and Poisson (`α = 1`) kernels
/// can serve as closed-form checks.
pub fn profile_g(grid: &Arc<Grid>, alpha: f64) -> Result<Profile> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::InvalidParams(format!(
            "profile needs 0 < alpha <= 2, got {alpha}"
        )));
    }
    let g = Field::from_transform(grid, |k1, k2| {
        Complex64::new((-(k1 * k1 + k2 * k2).powf(0.5 * alpha)).exp(), 0.0)
    })
    .into_physical();
    Ok(Profile { g, alpha })
}

/// `ψ̂_μ(ξ) = |ξ|^{-αμ} e^{-|ξ|^α}` for `μ ≤ 0`, eigenvalue `1 + μ - 3/α`.
pub fn psi_mu(grid: &Arc<Grid>, alpha: f64, mu: f64) -> Field {
    assert!(mu <= 0.0, "psi_mu is singular at the origin for mu > 0");
    Field::from_transform(grid, |k1, k2| {
        let r2 = k1 * k1 + k2 * k2;
        let weight = if mu == 0.0 {
            1.0
        } else {
            r2.powf(-0.5 * alpha * mu)
        };
        Complex64::new(weight * (-r2.powf(0.5 * alpha)).exp(), 0.0)
    })
}

/// Eigenvalue of `ψ_μ` under `L`.
pub fn psi_eigenvalue(alpha: f64, mu: f64) -> f64 {
    1.0 + mu - 3.0 / alpha
}

/// Scaled time `τ`, with `t = e^τ - 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ScaledTime {
    tau: f64,
}

impl ScaledTime {
    pub fn from_tau(tau: f64) -> Result<Self> {
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "tau = {tau} must be finite and >= 0"
            )));
        }
        Ok(ScaledTime { tau })
    }

    pub fn from_t(t: f64) -> Result<Self> {
        if !(t >= 0.0) {
            return Err(Error::InvalidParams(format!("t = {t} must be >= 0")));
        }
        Self::from_tau(t.ln_1p())
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn t(&self) -> f64 {
        self.tau.exp_m1()
    }

    /// `a(τ) = 1 - e^{-τ}`.
    pub fn a(&self) -> f64 {
        -(-self.tau).exp_m1()
    }
}

/// `LV` under the default tail guard.
pub fn apply_l(v: &Field, params: &ModelParams) -> Result<Field> {
    apply_l_guarded(v, params.alpha(), Some(&TailGuard::default()))
}

/// `LV`, with `η·∇V` formed as the spectral gradient times the physical
/// coordinate.
pub fn apply_l_guarded(v: &Field, alpha: f64, guard: Option<&TailGuard>) -> Result<Field> {
    if let Some(g) = guard {
        g.check(v)?;
    }
    let grid = v.grid();
    let c = v.coefficients();
    let mut lam = c.to_vec();
    scale_by_power(grid, &mut lam, alpha);
    let lam = grid.inverse_real(&lam);
    let (g1, g2) = grad_physical(grid, &c);
    let vals = v.values();
    let out = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let (e1, e2) = grid.x_at(i);
            -lam[i] + (e1 * g1[i] + e2 * g2[i]) / alpha + (1.0 - 1.0 / alpha) * vals[i]
        })
        .collect();
    Field::from_physical(grid, out)
}

/// Relative residuals of `LV - λV`, over the whole box and over
/// `|η| ≤ mask_fraction·L/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenResidual {
    pub unmasked: f64,
    pub masked: f64,
    pub mask_fraction: f64,
}

pub fn eigen_residual(
    v: &Field,
    lambda: f64,
    alpha: f64,
    guard: Option<&TailGuard>,
    mask_fraction: f64,
) -> Result<EigenResidual> {
    let lv = apply_l_guarded(v, alpha, guard)?;
    let grid = v.grid();
    let r = mask_fraction * 0.5 * grid.box_length();
    let lv = lv.values();
    let vals = v.values();
    let (mut num, mut den, mut num_in, mut den_in) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..grid.len() {
        let d = lv[i] - lambda * vals[i];
        let (d2, v2) = (d * d, vals[i] * vals[i]);
        num += d2;
        den += v2;
        let (x1, x2) = grid.x_at(i);
        if x1.hypot(x2) <= r {
            num_in += d2;
            den_in += v2;
        }
    }
    Ok(EigenResidual {
        unmasked: (num / den).sqrt(),
        masked: (num_in / den_in).sqrt(),
        mask_fraction,
    })
}

/// The symbol of `e^{τL} f` as a closure.
pub fn semigroup_symbol<F>(fhat: F, tau: f64, alpha: f64) -> impl Fn(f64, f64) -> Complex64 + Sync
where
    F: Fn(f64, f64) -> Complex64 + Sync,
{
    let a = -(-tau).exp_m1();
    let growth = ((1.0 - 3.0 / alpha) * tau).exp();
    let shrink = (-tau / alpha).exp();
    move |k1, k2| {
        let r2 = k1 * k1 + k2 * k2;
        let damp = if a == 0.0 {
            1.0
        } else {
            (-a * r2.powf(0.5 * alpha)).exp()
        };
        fhat(shrink * k1, shrink * k2) * (growth * damp)
    }
}

/// `e^{τL} f` sampled on the lattice, for an analytic symbol `f̂`.
pub fn semigroup_apply<F>(fhat: F, tau: f64, grid: &Arc<Grid>, params: &ModelParams) -> Field
where
    F: Fn(f64, f64) -> Complex64 + Sync,
{
    Field::from_transform(grid, semigroup_symbol(fhat, tau, params.alpha()))
}

/// `e^{τL} f` for a gridded field, reading `f̂` off the lattice by bilinear
/// interpolation. The interpolation error is `O(Δk²)`.
pub fn semigroup_apply_gridded(field: &Field, tau: f64, params: &ModelParams) -> Field {
    let grid = field.grid().clone();
    let c = field.coefficients().into_owned();
    let area = grid.box_length() * grid.box_length();
    let dk = grid.spec().dk();
    let lookup = |m1: i64, m2: i64| match grid.index_of_mode(m1, m2) {
        Some(i) => c[i],
        None => Complex64::new(0.0, 0.0),
    };
    let fhat = |k1: f64, k2: f64| {
        let (x, y) = (k1 / dk, k2 / dk);
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let (m1, m2) = (x0 as i64, y0 as i64);
        let v = lookup(m1, m2) * ((1.0 - fx) * (1.0 - fy))
            + lookup(m1 + 1, m2) * (fx * (1.0 - fy))
            + lookup(m1, m2 + 1) * ((1.0 - fx) * fy)
            + lookup(m1 + 1, m2 + 1) * (fx * fy);
        v * area
    };
    semigroup_apply(fhat, tau, &grid, params)
}

/// `P₀V = (∫V dη)·G`.
pub fn project_p0(v: &Field, profile: &Profile) -> Field {
    profile.g.scaled(v.integral())
}

/// `Q₀V = V - P₀V`.
pub fn project_q0(v: &Field, profile: &Profile) -> Field {
    v - &project_p0(v, profile)
}

/// Size of `e^{τL}∇f - e^{-τ/α}∇e^{τL}f` and of `e^{τL}∇f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommutationDefect {
    pub defect: f64,
    pub scale: f64,
}

impl CommutationDefect {
    pub fn relative(&self) -> f64 {
        if self.scale == 0.0 {
            self.defect
        } else {
            self.defect / self.scale
        }
    }
}

pub fn commutation_check<F>(
    fhat: F,
    tau: f64,
    grid: &Arc<Grid>,
    params: &ModelParams,
) -> CommutationDefect
where
    F: Fn(f64, f64) -> Complex64 + Sync,
{
    let i = Complex64::new(0.0, 1.0);
    let lhs1 = semigroup_apply(|k1, k2| i * k1 * fhat(k1, k2), tau, grid, params);
    let lhs2 = semigroup_apply(|k1, k2| i * k2 * fhat(k1, k2), tau, grid, params);
    // compare on the modes where differentiation is unambiguous
    let lhs = VectorField {
        u1: drop_nyquist(&lhs1),
        u2: drop_nyquist(&lhs2),
    };
    let g = gradient(&semigroup_apply(&fhat, tau, grid, params));
    let g = VectorField {
        u1: drop_nyquist(&g.u1),
        u2: drop_nyquist(&g.u2),
    };
    let shrink = (-tau / params.alpha()).exp();
    let diff = lhs.axpy(-shrink, &g);
    CommutationDefect {
        defect: diff.l2_norm(),
        scale: lhs.l2_norm(),
    }
}

fn drop_nyquist(field: &Field) -> Field {
    let grid = field.grid();
    let n = grid.n();
    let nyq = (n / 2) as i64;
    let modes = grid.modes();
    let mut c = field.coefficients().into_owned();
    for (i, z) in c.iter_mut().enumerate() {
        if modes[i / n].abs() == nyq || modes[i % n].abs() == nyq {
            *z = Complex64::new(0.0, 0.0);
        }
    }
    Field::from_coefficients(grid, c).expect("grid length")
}

/// `α₀ (1+t)^{-2/α} G(x/(1+t)^{1/α})`, built from its spectrum
/// `α₀ e^{-(1+t)|ξ|^α}`.
pub fn comparison_profile(alpha0: f64, t: f64, grid: &Arc<Grid>, params: &ModelParams) -> Field {
    let alpha = params.alpha();
    let s = 1.0 + t;
    Field::from_transform(grid, |k1, k2| {
        Complex64::new(
            alpha0 * (-s * (k1 * k1 + k2 * k2).powf(0.5 * alpha)).exp(),
            0.0,
        )
    })
}

/// Exponent `1 - 1/α - 2/(αp)` relating `‖V(τ)‖_{L^p}` to `‖v(t)‖_{L^p}`.
pub fn norm_transport_exponent(p: f64, alpha: f64) -> f64 {
    if p.is_infinite() {
        1.0 - 1.0 / alpha
    } else {
        1.0 - 1.0 / alpha - 2.0 / (alpha * p)
    }
}

/// `‖V(τ)‖_{L^p} = (1+t)^{1-1/α-2/(αp)} ‖v(t)‖_{L^p}`.
pub fn norm_transport(norm_v_at_t: f64, t: f64, p: f64, params: &ModelParams) -> f64 {
    (1.0 + t).powf(norm_transport_exponent(p, params.alpha())) * norm_v_at_t
}
