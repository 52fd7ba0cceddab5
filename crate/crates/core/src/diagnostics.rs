//! Norms, rate fits and the leading-term residual.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::ModelParams;
use crate::scaled::{comparison_profile, TailGuard};
use crate::spectral::fractional_power;

/// `(∫|f|^p dx)^{1/p}` by uniform quadrature; `p = ∞` gives `max |f|`.
pub fn lp_norm(field: &Field, p: f64) -> f64 {
    assert!(p >= 1.0, "lp_norm needs p >= 1, got {p}");
    let v = field.values();
    if p.is_infinite() {
        return v.iter().fold(0.0, |m, x| m.max(x.abs()));
    }
    let da = field.grid().cell_area();
    let s: f64 = if p == 2.0 {
        v.iter().map(|x| x * x).sum()
    } else if p == 1.0 {
        v.iter().map(|x| x.abs()).sum()
    } else {
        v.iter().map(|x| x.abs().powf(p)).sum()
    };
    (s * da).powf(1.0 / p)
}

/// `(∫(1+|x|²)^m |f|² dx)^{1/2}` after checking the tail-mass guard.
pub fn weighted_l2m(field: &Field, m: f64) -> Result<f64> {
    weighted_l2m_guarded(field, m, Some(&TailGuard::default()))
}

/// As [`weighted_l2m`], with an explicit guard or none at all.
pub fn weighted_l2m_guarded(field: &Field, m: f64, guard: Option<&TailGuard>) -> Result<f64> {
    assert!(m >= 0.0, "weight exponent must be nonnegative");
    if let Some(g) = guard {
        g.check(field)?;
    }
    let grid = field.grid();
    let v = field.values();
    let s: f64 = v
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let (x1, x2) = grid.x_at(i);
            let w = if m == 0.0 {
                1.0
            } else {
                (1.0 + x1 * x1 + x2 * x2).powf(m)
            };
            w * x * x
        })
        .sum();
    Ok((s * grid.cell_area()).sqrt())
}

/// `‖Λ^s f‖_{L^p}`.
pub fn sobolev_seminorm(field: &Field, s: f64, p: f64) -> Result<f64> {
    Ok(lp_norm(&fractional_power(field, s)?, p))
}

/// Inhomogeneous `‖f‖_{L^p} + ‖Λ^s f‖_{L^p}`.
pub fn sobolev_norm(field: &Field, s: f64, p: f64) -> Result<f64> {
    Ok(lp_norm(field, p) + sobolev_seminorm(field, s, p)?)
}

/// Fraction of `∫|f|²` lying outside `|x| > radius_fraction·L/2`.
pub fn tail_mass(field: &Field, radius_fraction: f64) -> f64 {
    let grid = field.grid();
    let r = radius_fraction * 0.5 * grid.box_length();
    let r2 = r * r;
    let v = field.values();
    let mut total = 0.0;
    let mut outside = 0.0;
    for (i, x) in v.iter().enumerate() {
        let (x1, x2) = grid.x_at(i);
        let e = x * x;
        total += e;
        if x1 * x1 + x2 * x2 > r2 {
            outside += e;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        outside / total
    }
}

/// `∫(θ₀ - θ̃) dx`.
pub fn alpha0(theta0: &Field, theta_tilde: &Field) -> Result<f64> {
    theta0.check_same_grid(theta_tilde)?;
    Ok(theta0.integral() - theta_tilde.integral())
}

/// `‖v(t) - α₀·(1+t)^{-2/α} G(·/(1+t)^{1/α})‖_{L^p}`.
pub fn leading_term_residual(v: &Field, alpha0: f64, t: f64, p: f64, params: &ModelParams) -> f64 {
    let main = comparison_profile(alpha0, t, v.grid(), params);
    lp_norm(&(v - &main), p)
}

/// Pass criteria for [`fit_rate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub tolerance: f64,
    pub min_r_squared: f64,
    pub min_samples: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tolerance: 0.05,
            min_r_squared: 0.99,
            min_samples: 10,
        }
    }
}

/// Least-squares power law `value ≈ C·(1+t)^{exponent}` over a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub quantity: String,
    pub fit_window: [f64; 2],
    pub samples: usize,
    pub fitted_exponent: f64,
    pub predicted_exponent: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Fit `log(value)` against `log(1+t)` for samples with `t` in `window`.
pub fn fit_rate(
    quantity: &str,
    series: &[(f64, f64)],
    window: (f64, f64),
    predicted: f64,
    opts: &FitOptions,
) -> Result<RateReport> {
    let (lo, hi) = window;
    if !(lo < hi) {
        return Err(Error::InvalidParams(format!(
            "empty fit window [{lo}, {hi}]"
        )));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(t, v) in series.iter().filter(|(t, _)| *t >= lo && *t <= hi) {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::NonpositiveValues { time: t, value: v });
        }
        xs.push((1.0 + t).ln());
        ys.push(v.ln());
    }
    if xs.len() < opts.min_samples.max(2) {
        return Err(Error::InsufficientData {
            found: xs.len(),
            required: opts.min_samples.max(2),
        });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let r_squared = if ss_tot <= f64::EPSILON * f64::EPSILON * n * my * my {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    let pass = (slope - predicted).abs() <= opts.tolerance && r_squared >= opts.min_r_squared;
    Ok(RateReport {
        quantity: quantity.to_string(),
        fit_window: [lo, hi],
        samples: xs.len(),
        fitted_exponent: slope,
        predicted_exponent: predicted,
        intercept,
        r_squared,
        tolerance: opts.tolerance,
        pass,
    })
}

/// Decay exponent of `‖θ(t) - θ̃‖_{L^p}`: `-(2/α)(1 - 1/p)`.
pub fn relaxation_exponent(alpha: f64, p: f64) -> f64 {
    -(2.0 / alpha) * (1.0 - 1.0 / p)
}

/// Decay exponent of the leading-term residual in `L^p` for weight `m`.
pub fn leading_residual_exponent(alpha: f64, m: f64, p: f64) -> f64 {
    -((m + 3.0) / alpha - 1.0 - 2.0 / (alpha * p))
}

/// Default weight `min(1.4, 3 - α - 0.1)`.
pub fn default_weight(alpha: f64) -> f64 {
    1.4_f64.min(3.0 - alpha - 0.1)
}
