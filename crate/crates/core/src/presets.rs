//! Initial-data and test-field presets.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::field::Field;
use crate::grid::Grid;
use crate::Complex64;

/// `A e^{-|x|²/w²}`, total mass `A π w²`.
pub fn gaussian(grid: &Arc<Grid>, amplitude: f64, width: f64) -> Field {
    let s = 1.0 / (width * width);
    Field::from_fn(grid, |x, y| amplitude * (-(x * x + y * y) * s).exp())
}

/// `A (1 - |x|²/w²) e^{-|x|²/w²}`, which integrates to zero.
pub fn mean_zero_ring(grid: &Arc<Grid>, amplitude: f64, width: f64) -> Field {
    let s = 1.0 / (width * width);
    Field::from_fn(grid, |x, y| {
        let r2 = (x * x + y * y) * s;
        amplitude * (1.0 - r2) * (-r2).exp()
    })
}

/// Mass of [`gaussian`].
pub fn gaussian_mass(amplitude: f64, width: f64) -> f64 {
    amplitude * PI * width * width
}

/// Random real field on lattice modes with `max(|m₁|,|m₂|) ≤ max_mode`,
/// coefficients damped like `1/(1+|m|²)`. Deterministic in `seed`.
pub fn random_smooth(grid: &Arc<Grid>, seed: u64, max_mode: i64, mean_zero: bool) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.n();
    let half = (n / 2) as i64 - 1;
    let top = max_mode.min(half);
    let mut c = vec![Complex64::new(0.0, 0.0); grid.len()];
    for m1 in -top..=top {
        for m2 in -top..=top {
            let re: f64 = rng.random_range(-1.0..1.0);
            let im: f64 = rng.random_range(-1.0..1.0);
            let damp = 1.0 / (1.0 + (m1 * m1 + m2 * m2) as f64);
            let idx = grid.index_of_mode(m1, m2).expect("mode in range");
            c[idx] = Complex64::new(re, im) * damp;
        }
    }
    if mean_zero {
        c[0] = Complex64::new(0.0, 0.0);
    }
    let sym = crate::field::hermitian_part(grid, &c);
    Field::from_coefficients(grid, sym).expect("grid length")
}
