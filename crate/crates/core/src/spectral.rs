//! Fourier multipliers, the perpendicular velocity map and dealiased transport.
//!
//! Every operator here is a pure function of its inputs. The coefficient-level
//! helpers (`*_coeffs`) are used by the time stepper to avoid rebuilding
//! `Field` values inside the inner loop.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{Field, VectorField};
use crate::grid::{Grid, ModelParams};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Relative size of the mean below which a field counts as mean-zero.
pub const ZERO_MODE_TOL: f64 = 1e-12;

/// Spectral representation of `field`.
pub fn forward_transform(field: &Field) -> Field {
    field.to_spectral()
}

/// `Λ^a f`, the multiplier `|k|^a` with the zero mode sent to zero.
///
/// Negative powers require a mean-zero input.
pub fn fractional_power(field: &Field, a: f64) -> Result<Field> {
    if a == 0.0 {
        return Ok(field.to_spectral());
    }
    if a < 0.0 {
        ensure_mean_zero(field)?;
    }
    let grid = field.grid();
    let mut c = field.coefficients().into_owned();
    scale_by_power(grid, &mut c, a);
    Field::from_coefficients(grid, c)
}

/// Fails with `ZeroModeViolation` unless `|c₀|·L ≤ 1e-12·‖f‖₂`.
pub fn ensure_mean_zero(field: &Field) -> Result<()> {
    let mean_l2 = field.mean_component_l2();
    let field_l2 = field.l2_norm();
    if mean_l2 > ZERO_MODE_TOL * field_l2 {
        return Err(Error::ZeroModeViolation { mean_l2, field_l2 });
    }
    Ok(())
}

/// Spectral gradient `(∂₁f, ∂₂f)`.
pub fn gradient(field: &Field) -> VectorField {
    let grid = field.grid();
    let (g1, g2) = grad_coeffs(grid, &field.coefficients());
    VectorField {
        u1: Field::from_coefficients(grid, g1).expect("grid length"),
        u2: Field::from_coefficients(grid, g2).expect("grid length"),
    }
}

/// Spectral divergence `∂₁u₁ + ∂₂u₂`.
pub fn divergence(u: &VectorField) -> Field {
    let grid = u.grid().clone();
    let c1 = u.u1.coefficients();
    let c2 = u.u2.coefficients();
    let kd = grid.derivative_wavenumbers();
    let n = grid.n();
    let out = (0..grid.len())
        .into_par_iter()
        .map(|i| I * (c1[i] * kd[i / n] + c2[i] * kd[i % n]))
        .collect();
    Field::from_coefficients(&grid, out).expect("grid length")
}

/// `u = Λ^{-1}(-∂₂θ, ∂₁θ)`.
pub fn perp_velocity(theta: &Field) -> VectorField {
    let grid = theta.grid();
    let (u1, u2) = perp_coeffs(grid, &theta.coefficients());
    VectorField {
        u1: Field::from_coefficients(grid, u1).expect("grid length"),
        u2: Field::from_coefficients(grid, u2).expect("grid length"),
    }
}

/// Zero every coefficient with `max(|m₁|,|m₂|) > fraction·n/2`.
pub fn dealias(field: &Field, fraction: f64) -> Field {
    let grid = field.grid();
    let mut c = field.coefficients().into_owned();
    dealias_in_place(grid, &mut c, fraction);
    Field::from_coefficients(grid, c).expect("grid length")
}

/// Dealiased `u_θ·∇θ`.
pub fn advection(theta: &Field, params: &ModelParams) -> Field {
    let grid = theta.grid();
    let frac = params.dealias_fraction();
    let mut c = theta.coefficients().into_owned();
    dealias_in_place(grid, &mut c, frac);
    let u = perp_physical(grid, &c);
    let g = grad_physical(grid, &c);
    let out = transport_coeffs(grid, frac, (&u.0, &u.1), (&g.0, &g.1));
    Field::from_coefficients(grid, out).expect("grid length")
}

/// Dealiased `u·∇w` for a given velocity field.
pub fn transport(u: &VectorField, w: &Field, params: &ModelParams) -> Result<Field> {
    u.u1.check_same_grid(w)?;
    let grid = w.grid();
    let frac = params.dealias_fraction();
    let mut cu1 = u.u1.coefficients().into_owned();
    let mut cu2 = u.u2.coefficients().into_owned();
    let mut cw = w.coefficients().into_owned();
    dealias_in_place(grid, &mut cu1, frac);
    dealias_in_place(grid, &mut cu2, frac);
    dealias_in_place(grid, &mut cw, frac);
    let u1 = grid.inverse_real(&cu1);
    let u2 = grid.inverse_real(&cu2);
    let g = grad_physical(grid, &cw);
    let mut out = transport_coeffs(grid, frac, (&u1, &u2), (&g.0, &g.1));
    // u·∇w only integrates to zero when u is divergence-free
    let (g1, g2) = (&g.0, &g.1);
    let mean: f64 = u1
        .iter()
        .zip(u2.iter())
        .zip(g1.iter().zip(g2.iter()))
        .map(|((a, b), (c, d))| a * c + b * d)
        .sum::<f64>()
        / grid.len() as f64;
    out[0] = Complex64::new(mean, 0.0);
    Field::from_coefficients(grid, out)
}

/// Quadrature of `|f|^{p-2} f · Λ^α f` over the box.
pub fn coercivity_probe(field: &Field, p: f64, alpha: f64) -> f64 {
    let grid = field.grid();
    let c = field.coefficients();
    let lam = fractional_power(field, alpha).expect("positive power is total");
    let lam = lam.values();
    let f = grid.inverse_real(&c);
    let sum: f64 = f
        .iter()
        .zip(lam.iter())
        .map(|(&v, &l)| {
            let w = if p == 2.0 { 1.0 } else { v.abs().powf(p - 2.0) };
            w * v * l
        })
        .sum();
    sum * grid.cell_area()
}

pub(crate) fn dealias_in_place(grid: &Grid, coeffs: &mut [Complex64], fraction: f64) {
    if fraction >= 1.0 {
        return;
    }
    let n = grid.n();
    let cutoff = (fraction * (n / 2) as f64).floor() as u64;
    let modes = grid.modes();
    coeffs.par_chunks_mut(n).enumerate().for_each(|(i1, row)| {
        if modes[i1].unsigned_abs() > cutoff {
            row.fill(ZERO);
            return;
        }
        for (i2, c) in row.iter_mut().enumerate() {
            if modes[i2].unsigned_abs() > cutoff {
                *c = ZERO;
            }
        }
    });
}

pub(crate) fn grad_coeffs(grid: &Grid, c: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
    let kd = grid.derivative_wavenumbers();
    let n = grid.n();
    let g1 = (0..c.len())
        .into_par_iter()
        .map(|i| I * kd[i / n] * c[i])
        .collect();
    let g2 = (0..c.len())
        .into_par_iter()
        .map(|i| I * kd[i % n] * c[i])
        .collect();
    (g1, g2)
}

pub(crate) fn perp_coeffs(grid: &Grid, c: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
    let kd = grid.derivative_wavenumbers();
    let ak = grid.abs_k();
    let n = grid.n();
    let inv = |i: usize| if ak[i] == 0.0 { 0.0 } else { 1.0 / ak[i] };
    let u1 = (0..c.len())
        .into_par_iter()
        .map(|i| -I * (kd[i % n] * inv(i)) * c[i])
        .collect();
    let u2 = (0..c.len())
        .into_par_iter()
        .map(|i| I * (kd[i / n] * inv(i)) * c[i])
        .collect();
    (u1, u2)
}

pub(crate) fn perp_physical(grid: &Grid, c: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
    let (u1, u2) = perp_coeffs(grid, c);
    grid.inverse_real_pair(&u1, &u2)
}

pub(crate) fn grad_physical(grid: &Grid, c: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
    let (g1, g2) = grad_coeffs(grid, c);
    grid.inverse_real_pair(&g1, &g2)
}

/// Forward transform of `u·g`, dealiased, with the zero mode set to zero.
///
/// Inputs must be band-limited below the cutoff and `u` divergence-free, so
/// the zero mode of the exact product vanishes.
pub(crate) fn transport_coeffs(
    grid: &Grid,
    fraction: f64,
    u: (&[f64], &[f64]),
    g: (&[f64], &[f64]),
) -> Vec<Complex64> {
    let prod: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| u.0[i] * g.0[i] + u.1[i] * g.1[i])
        .collect();
    let mut out = grid.forward(&prod);
    dealias_in_place(grid, &mut out, fraction);
    out[0] = ZERO;
    out
}

/// Multiply coefficients by `|k|^a` in place, zero mode to zero.
pub(crate) fn scale_by_power(grid: &Arc<Grid>, c: &mut [Complex64], a: f64) {
    let ak = grid.abs_k();
    c.par_iter_mut().zip(ak.par_iter()).for_each(|(z, &k)| {
        *z = if k == 0.0 { ZERO } else { *z * k.powf(a) };
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Arc<Grid> {
        Grid::with_size(n, 2.0 * PI).unwrap()
    }

    fn params() -> ModelParams {
        ModelParams::new(1.5).unwrap()
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn constant_has_only_zero_mode() {
        let g = grid(16);
        let f = Field::from_fn(&g, |_, _| 2.5);
        let c = forward_transform(&f).into_coefficients();
        assert!((c[0].re - 2.5).abs() < 1e-15);
        assert!(c[1..].iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn power_of_a_single_mode() {
        let g = grid(32);
        let f = Field::from_fn(&g, |x, y| (2.0 * x).cos() + 0.0 * y);
        let out = fractional_power(&f, 1.5).unwrap();
        let expect: Vec<f64> = f.values().iter().map(|v| v * 2f64.powf(1.5)).collect();
        assert!(max_diff(&out.values(), &expect) < 1e-12);
    }

    #[test]
    fn negative_power_rejects_mean() {
        let g = grid(16);
        let f = Field::from_fn(&g, |_, _| 1.0);
        assert!(matches!(
            fractional_power(&f, -1.5),
            Err(Error::ZeroModeViolation { .. })
        ));
        assert!(fractional_power(&f, 1.5).is_ok());
    }

    #[test]
    fn velocity_of_unit_modes() {
        let g = grid(32);
        let u = perp_velocity(&Field::from_fn(&g, |x, _| x.sin()));
        let cos1: Vec<f64> = (0..g.len()).map(|i| g.x_at(i).0.cos()).collect();
        assert!(max_diff(&u.u1.values(), &vec![0.0; g.len()]) < 1e-13);
        assert!(max_diff(&u.u2.values(), &cos1) < 1e-13);

        let u = perp_velocity(&Field::from_fn(&g, |_, y| y.sin()));
        let mcos2: Vec<f64> = (0..g.len()).map(|i| -g.x_at(i).1.cos()).collect();
        assert!(max_diff(&u.u1.values(), &mcos2) < 1e-13);
        assert!(max_diff(&u.u2.values(), &vec![0.0; g.len()]) < 1e-13);

        let u = perp_velocity(&Field::from_fn(&g, |_, _| 3.0));
        assert!(u.max_magnitude() < 1e-15);
    }

    #[test]
    fn single_mode_advection_vanishes() {
        let g = grid(32);
        let f = Field::from_fn(&g, |x, _| x.sin());
        assert!(advection(&f, &params()).l2_norm() < 1e-13);
        assert!(advection(&Field::zeros(&g), &params()).l2_norm() == 0.0);
    }

    #[test]
    fn two_mode_advection_matches_expansion() {
        // θ = sin x₁ + cos x₂: u = (sin x₂, cos x₁), ∇θ = (cos x₁, -sin x₂),
        // so u·∇θ = sin x₂ cos x₁ - cos x₁ sin x₂ = 0.
        // θ = sin x₁ + cos 2x₂ gives a non-trivial product instead.
        let g = grid(32);
        let f = Field::from_fn(&g, |x, y| x.sin() + y.cos());
        assert!(advection(&f, &params()).l2_norm() < 1e-13);

        let f = Field::from_fn(&g, |x, y| x.sin() + (2.0 * y).cos());
        // u = Λ^{-1}(-∂₂θ, ∂₁θ) = (sin 2x₂, cos x₁), ∇θ = (cos x₁, -2 sin 2x₂)
        // u·∇θ = sin 2x₂ cos x₁ - 2 cos x₁ sin 2x₂ = -cos x₁ sin 2x₂
        let expect: Vec<f64> = (0..g.len())
            .map(|i| {
                let (x, y) = g.x_at(i);
                -x.cos() * (2.0 * y).sin()
            })
            .collect();
        assert!(max_diff(&advection(&f, &params()).values(), &expect) < 1e-13);
    }

    #[test]
    fn dealias_kills_top_mode_and_is_idempotent() {
        let g = grid(32);
        let top = Field::from_fn(&g, |x, _| (15.0 * x).cos());
        assert!(dealias(&top, 2.0 / 3.0).l2_norm() < 1e-13);
        let low = Field::from_fn(&g, |x, y| (3.0 * x).cos() * y.sin());
        assert!((&dealias(&low, 2.0 / 3.0) - &low).l2_norm() < 1e-13);
    }

    #[test]
    fn coercivity_of_cosine() {
        let g = grid(32);
        let f = Field::from_fn(&g, |x, _| x.cos());
        let expect = 0.5 * (2.0 * PI) * (2.0 * PI);
        assert!((coercivity_probe(&f, 2.0, 1.3) - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn general_transport_matches_advection() {
        let g = grid(32);
        let f = Field::from_fn(&g, |x, y| (x + y).sin() + 0.5 * (2.0 * x - y).cos());
        let u = perp_velocity(&f);
        let a = advection(&f, &params());
        let b = transport(&u, &f, &params()).unwrap();
        assert!((&a - &b).l2_norm() < 1e-12);
    }
}
