//! Real scalar fields with a physical or spectral representation.

use std::borrow::Cow;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridSpec};

#[derive(Clone, Debug)]
enum Repr {
    Physical(Vec<f64>),
    Spectral(Vec<Complex64>),
}

/// A real scalar field on a periodic grid.
///
/// Exactly one representation is held at a time; conversions produce a new
/// value and never mutate a shared field.
#[derive(Clone, Debug)]
pub struct Field {
    grid: Arc<Grid>,
    repr: Repr,
}

impl Field {
    pub fn zeros(grid: &Arc<Grid>) -> Field {
        Field {
            grid: grid.clone(),
            repr: Repr::Spectral(vec![Complex64::new(0.0, 0.0); grid.len()]),
        }
    }

    pub fn from_physical(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Field> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(Field {
            grid: grid.clone(),
            repr: Repr::Physical(values),
        })
    }

    /// Sample `f(x₁, x₂)` on the grid points.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64, f64) -> f64 + Sync) -> Field {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let (x1, x2) = grid.x_at(i);
                f(x1, x2)
            })
            .collect();
        Field {
            grid: grid.clone(),
            repr: Repr::Physical(values),
        }
    }

    /// Wrap raw spectral coefficients. The caller is responsible for
    /// Hermitian symmetry.
    pub fn from_coefficients(grid: &Arc<Grid>, coeffs: Vec<Complex64>) -> Result<Field> {
        if coeffs.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "{} coefficients for a grid of {} points",
                coeffs.len(),
                grid.len()
            )));
        }
        Ok(Field {
            grid: grid.clone(),
            repr: Repr::Spectral(coeffs),
        })
    }

    /// Field whose continuous Fourier transform is `fhat(ξ₁, ξ₂)`, sampled on
    /// the lattice as `c_k = fhat(k)/L²` and projected onto Hermitian
    /// symmetric coefficients.
    pub fn from_transform(grid: &Arc<Grid>, fhat: impl Fn(f64, f64) -> Complex64 + Sync) -> Field {
        let area = grid.box_length() * grid.box_length();
        let coeffs: Vec<Complex64> = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let (k1, k2) = grid.k_at(i);
                fhat(k1, k2) / area
            })
            .collect();
        Field {
            grid: grid.clone(),
            repr: Repr::Spectral(hermitian_part(grid, &coeffs)),
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn spec(&self) -> &GridSpec {
        self.grid.spec()
    }

    pub fn is_spectral(&self) -> bool {
        matches!(self.repr, Repr::Spectral(_))
    }

    pub fn same_grid(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || self.grid.spec() == other.grid.spec()
    }

    pub fn check_same_grid(&self, other: &Field) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Physical samples, transforming if necessary.
    pub fn values(&self) -> Cow<'_, [f64]> {
        match &self.repr {
            Repr::Physical(v) => Cow::Borrowed(v),
            Repr::Spectral(c) => Cow::Owned(self.grid.inverse_real(c)),
        }
    }

    /// Spectral coefficients, transforming if necessary.
    pub fn coefficients(&self) -> Cow<'_, [Complex64]> {
        match &self.repr {
            Repr::Physical(v) => Cow::Owned(self.grid.forward(v)),
            Repr::Spectral(c) => Cow::Borrowed(c),
        }
    }

    pub fn to_spectral(&self) -> Field {
        Field {
            grid: self.grid.clone(),
            repr: Repr::Spectral(self.coefficients().into_owned()),
        }
    }

    pub fn into_spectral(self) -> Field {
        match self.repr {
            Repr::Spectral(_) => self,
            Repr::Physical(v) => {
                let c = self.grid.forward(&v);
                Field {
                    grid: self.grid,
                    repr: Repr::Spectral(c),
                }
            }
        }
    }

    pub fn to_physical(&self) -> Field {
        Field {
            grid: self.grid.clone(),
            repr: Repr::Physical(self.values().into_owned()),
        }
    }

    pub fn into_physical(self) -> Field {
        match self.repr {
            Repr::Physical(_) => self,
            Repr::Spectral(c) => {
                let v = self.grid.inverse_real(&c);
                Field {
                    grid: self.grid,
                    repr: Repr::Physical(v),
                }
            }
        }
    }

    pub fn into_values(self) -> Vec<f64> {
        match self.into_physical().repr {
            Repr::Physical(v) => v,
            Repr::Spectral(_) => unreachable!(),
        }
    }

    pub fn into_coefficients(self) -> Vec<Complex64> {
        match self.into_spectral().repr {
            Repr::Spectral(c) => c,
            Repr::Physical(_) => unreachable!(),
        }
    }

    /// Coefficient of lattice mode `(m1, m2)`; zero for unrepresented modes.
    pub fn coefficient(&self, m1: i64, m2: i64) -> Complex64 {
        match self.grid.index_of_mode(m1, m2) {
            Some(idx) => self.coefficients()[idx],
            None => Complex64::new(0.0, 0.0),
        }
    }

    /// `∫ f dx` over the box, read off the zero mode.
    pub fn integral(&self) -> f64 {
        let l = self.grid.box_length();
        match &self.repr {
            Repr::Spectral(c) => c[0].re * l * l,
            Repr::Physical(v) => v.iter().sum::<f64>() * self.grid.cell_area(),
        }
    }

    /// L² norm of the constant (zero-mode) component, `|c₀|·L`.
    pub fn mean_component_l2(&self) -> f64 {
        let c0 = match &self.repr {
            Repr::Spectral(c) => c[0],
            Repr::Physical(v) => Complex64::new(v.iter().sum::<f64>() / v.len() as f64, 0.0),
        };
        c0.norm() * self.grid.box_length()
    }

    /// L² norm via Parseval, `L·(Σ|c_k|²)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        match &self.repr {
            Repr::Spectral(c) => {
                let s: f64 = c.iter().map(|z| z.norm_sqr()).sum();
                self.grid.box_length() * s.sqrt()
            }
            Repr::Physical(v) => {
                let s: f64 = v.iter().map(|x| x * x).sum();
                (s * self.grid.cell_area()).sqrt()
            }
        }
    }

    /// Largest violation of `c(-k) = conj(c(k))`, relative to `max |c|`.
    pub fn hermitian_defect(&self) -> f64 {
        let c = self.coefficients();
        let scale = c.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        let worst = (0..c.len())
            .map(|i| (c[i] - c[self.grid.conjugate_index(i)].conj()).norm())
            .fold(0.0, f64::max);
        worst / scale
    }

    /// Largest imaginary part produced by the inverse transform.
    pub fn imaginary_residue(&self) -> f64 {
        match &self.repr {
            Repr::Physical(_) => 0.0,
            Repr::Spectral(c) => self
                .grid
                .inverse(c)
                .iter()
                .map(|z| z.im.abs())
                .fold(0.0, f64::max),
        }
    }

    /// Apply a Fourier multiplier `m(k₁, k₂, c_k)`, returning a spectral field.
    pub fn map_spectral(&self, f: impl Fn(f64, f64, Complex64) -> Complex64 + Sync) -> Field {
        let grid = &self.grid;
        let c = self.coefficients();
        let out = c
            .par_iter()
            .enumerate()
            .map(|(i, &z)| {
                let (k1, k2) = grid.k_at(i);
                f(k1, k2, z)
            })
            .collect();
        Field {
            grid: grid.clone(),
            repr: Repr::Spectral(out),
        }
    }

    /// Apply `f` to every physical sample.
    pub fn map_values(&self, f: impl Fn(f64) -> f64 + Sync) -> Field {
        let out = self.values().par_iter().map(|&v| f(v)).collect();
        Field {
            grid: self.grid.clone(),
            repr: Repr::Physical(out),
        }
    }

    pub fn scaled(&self, s: f64) -> Field {
        match &self.repr {
            Repr::Physical(v) => Field {
                grid: self.grid.clone(),
                repr: Repr::Physical(v.iter().map(|x| x * s).collect()),
            },
            Repr::Spectral(c) => Field {
                grid: self.grid.clone(),
                repr: Repr::Spectral(c.iter().map(|z| z * s).collect()),
            },
        }
    }

    /// `self + s·other`, computed in the representation of `self`.
    pub fn axpy(&self, s: f64, other: &Field) -> Field {
        assert!(self.same_grid(other), "axpy on fields from different grids");
        match &self.repr {
            Repr::Physical(v) => {
                let w = other.values();
                Field {
                    grid: self.grid.clone(),
                    repr: Repr::Physical(v.iter().zip(w.iter()).map(|(a, b)| a + s * b).collect()),
                }
            }
            Repr::Spectral(c) => {
                let d = other.coefficients();
                Field {
                    grid: self.grid.clone(),
                    repr: Repr::Spectral(c.iter().zip(d.iter()).map(|(a, b)| a + b * s).collect()),
                }
            }
        }
    }
}

impl Add for &Field {
    type Output = Field;
    fn add(self, rhs: &Field) -> Field {
        self.axpy(1.0, rhs)
    }
}

impl Sub for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        self.axpy(-1.0, rhs)
    }
}

impl Mul<f64> for &Field {
    type Output = Field;
    fn mul(self, s: f64) -> Field {
        self.scaled(s)
    }
}

impl Neg for &Field {
    type Output = Field;
    fn neg(self) -> Field {
        self.scaled(-1.0)
    }
}

/// Two field components on a shared grid.
#[derive(Clone, Debug)]
pub struct VectorField {
    pub u1: Field,
    pub u2: Field,
}

impl VectorField {
    pub fn new(u1: Field, u2: Field) -> Result<Self> {
        u1.check_same_grid(&u2)?;
        Ok(VectorField { u1, u2 })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.u1.grid()
    }

    /// Pointwise Euclidean magnitude.
    pub fn magnitude(&self) -> Field {
        let a = self.u1.values();
        let b = self.u2.values();
        let m = a.iter().zip(b.iter()).map(|(x, y)| x.hypot(*y)).collect();
        Field::from_physical(self.grid(), m).expect("components share a grid")
    }

    pub fn max_magnitude(&self) -> f64 {
        let a = self.u1.values();
        let b = self.u2.values();
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.hypot(*y))
            .fold(0.0, f64::max)
    }

    /// `(‖u₁‖² + ‖u₂‖²)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        self.u1.l2_norm().hypot(self.u2.l2_norm())
    }

    pub fn axpy(&self, s: f64, other: &VectorField) -> VectorField {
        VectorField {
            u1: self.u1.axpy(s, &other.u1),
            u2: self.u2.axpy(s, &other.u2),
        }
    }
}

/// `(c(k) + conj(c(-k)))/2` for every lattice point.
pub(crate) fn hermitian_part(grid: &Grid, coeffs: &[Complex64]) -> Vec<Complex64> {
    (0..coeffs.len())
        .into_par_iter()
        .map(|i| 0.5 * (coeffs[i] + coeffs[grid.conjugate_index(i)].conj()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid() -> Arc<Grid> {
        Grid::with_size(32, 2.0 * PI).unwrap()
    }

    #[test]
    fn integral_from_either_representation() {
        let g = grid();
        let f = Field::from_fn(&g, |x, y| 3.0 + x.sin() * y.cos());
        let expect = 3.0 * 4.0 * PI * PI;
        assert!((f.integral() - expect).abs() < 1e-12 * expect);
        assert!((f.to_spectral().integral() - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn parseval_agrees_between_representations() {
        let g = grid();
        let f = Field::from_fn(&g, |x, y| (x + 2.0 * y).sin() + 0.3 * (3.0 * x).cos());
        let a = f.l2_norm();
        let b = f.to_spectral().l2_norm();
        assert!((a - b).abs() < 1e-13 * a);
    }

    #[test]
    fn from_transform_symmetrizes() {
        let g = grid();
        let f = Field::from_transform(&g, |k1, k2| Complex64::new(k1, k2 * k2));
        assert!(f.hermitian_defect() < 1e-15);
        assert!(f.imaginary_residue() < 1e-9);
    }

    #[test]
    fn arithmetic_mixes_representations() {
        let g = grid();
        let a = Field::from_fn(&g, |x, _| x.cos());
        let b = a.to_spectral();
        let d = &a - &b;
        assert!(d.l2_norm() < 1e-13);
        let s = &(&b + &a) * 0.5;
        assert!((&s - &a).l2_norm() < 1e-13);
    }
}
