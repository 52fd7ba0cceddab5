//! Shared fixtures for the criterion benches.

use std::sync::Arc;

use sqg_core::{Field, Grid};

/// Smooth localized test field on an `n × n` grid of side 60.
pub fn bump(n: usize) -> Field {
    let grid: Arc<Grid> = Grid::with_size(n, 60.0).expect("valid grid");
    Field::from_fn(&grid, |x, y| {
        (-(x * x + y * y) / 4.0).exp() * (1.0 + 0.3 * (x - 0.5 * y).sin())
    })
}
