//! Time integration of the forced equation and of the perturbation equation
//!
//! ```text
//! θ_t + Λ^α θ = f - u_θ·∇θ
//! v_t + Λ^α v = -(u_θ̃·∇v + u_v·∇θ̃ + u_v·∇v)
//! ```
//!
//! Both are advanced with the second-order exponential Heun scheme (ETD2RK),
//! which treats `Λ^α` exactly and the transport terms explicitly:
//!
//! ```text
//! a      = E w + φ₁ N(w)
//! w(t+h) = a + φ₂ (N(a) - N(w))
//! E = e^{-λh},  φ₁ = (1 - E)/λ,  φ₂ = (E - 1 + λh)/(λ²h),  λ = |k|^α
//! ```
//!
//! The scheme is exact whenever `N` is constant, so a steady state stays put
//! up to its own residual.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{lp_norm, tail_mass, weighted_l2m_guarded};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::{Grid, ModelParams};
use crate::scaled::{comparison_profile, TailGuard};
use crate::spectral::{dealias_in_place, grad_physical, perp_physical};
use crate::Complex64;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Exponential Heun stepper for `w_t = -Λ^α w + N(w)` at a fixed step.
pub struct ExpHeun {
    dt: f64,
    e: Vec<f64>,
    phi1: Vec<f64>,
    phi2: Vec<f64>,
}

impl ExpHeun {
    pub fn new(grid: &Grid, alpha: f64, dt: f64) -> Self {
        assert!(dt > 0.0, "time step must be positive");
        let n = grid.n();
        let ak = grid.abs_k();
        let mut e = vec![0.0; grid.len()];
        let mut phi1 = vec![0.0; grid.len()];
        let mut phi2 = vec![0.0; grid.len()];
        e.par_chunks_mut(n)
            .zip(phi1.par_chunks_mut(n))
            .zip(phi2.par_chunks_mut(n))
            .enumerate()
            .for_each(|(i1, ((er, p1), p2))| {
                for i2 in 0..n {
                    let lam = ak[i1 * n + i2].powf(alpha);
                    let (a, b, c) = etd_coefficients(lam, dt);
                    er[i2] = a;
                    p1[i2] = b;
                    p2[i2] = c;
                }
            });
        ExpHeun { dt, e, phi1, phi2 }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// One step from coefficients `w`.
    pub fn step<N>(&self, w: &[Complex64], rhs: N) -> Vec<Complex64>
    where
        N: Fn(&[Complex64]) -> Vec<Complex64>,
    {
        let nw = rhs(w);
        let a: Vec<Complex64> = (0..w.len())
            .into_par_iter()
            .map(|i| w[i] * self.e[i] + nw[i] * self.phi1[i])
            .collect();
        let na = rhs(&a);
        (0..w.len())
            .into_par_iter()
            .map(|i| a[i] + (na[i] - nw[i]) * self.phi2[i])
            .collect()
    }
}

/// `(E, φ₁, φ₂)` for decay rate `λ` and step `h`, with series for small `λh`.
pub fn etd_coefficients(lam: f64, h: f64) -> (f64, f64, f64) {
    let x = lam * h;
    let e = (-x).exp();
    if x < 1e-3 {
        let phi1 = h * (1.0 - x / 2.0 + x * x / 6.0 - x * x * x / 24.0);
        let phi2 = h * (0.5 - x / 6.0 + x * x / 24.0 - x * x * x / 120.0);
        (e, phi1, phi2)
    } else {
        let one_minus_e = -(-x).exp_m1();
        (e, one_minus_e / lam, (x - one_minus_e) / (lam * x))
    }
}

/// `f - P(u_w·∇w)` in coefficient space.
struct ThetaRhs<'a> {
    grid: &'a Grid,
    frac: f64,
    forcing: Option<Vec<Complex64>>,
}

impl ThetaRhs<'_> {
    fn eval(&self, w: &[Complex64]) -> Vec<Complex64> {
        let mut c = w.to_vec();
        dealias_in_place(self.grid, &mut c, self.frac);
        let u = perp_physical(self.grid, &c);
        let g = grad_physical(self.grid, &c);
        let mut out =
            crate::spectral::transport_coeffs(self.grid, self.frac, (&u.0, &u.1), (&g.0, &g.1));
        match &self.forcing {
            Some(f) => out
                .par_iter_mut()
                .zip(f.par_iter())
                .for_each(|(o, fi)| *o = fi - *o),
            None => out.par_iter_mut().for_each(|o| *o = -*o),
        }
        out
    }
}

/// `-P(u_θ̃·∇v + u_v·∇θ̃ + u_v·∇v)` with the steady-state factors cached.
struct PerturbationRhs<'a> {
    grid: &'a Grid,
    frac: f64,
    u_tilde: (Vec<f64>, Vec<f64>),
    g_tilde: (Vec<f64>, Vec<f64>),
}

impl<'a> PerturbationRhs<'a> {
    fn new(grid: &'a Grid, frac: f64, theta_tilde: &Field) -> Self {
        let mut c = theta_tilde.coefficients().into_owned();
        dealias_in_place(grid, &mut c, frac);
        PerturbationRhs {
            grid,
            frac,
            u_tilde: perp_physical(grid, &c),
            g_tilde: grad_physical(grid, &c),
        }
    }

    fn eval(&self, w: &[Complex64]) -> Vec<Complex64> {
        let mut c = w.to_vec();
        dealias_in_place(self.grid, &mut c, self.frac);
        let (uv1, uv2) = perp_physical(self.grid, &c);
        let (gv1, gv2) = grad_physical(self.grid, &c);
        let (ut1, ut2) = (&self.u_tilde.0, &self.u_tilde.1);
        let (gt1, gt2) = (&self.g_tilde.0, &self.g_tilde.1);
        let prod: Vec<f64> = (0..self.grid.len())
            .into_par_iter()
            .map(|i| {
                (ut1[i] + uv1[i]) * gv1[i]
                    + (ut2[i] + uv2[i]) * gv2[i]
                    + uv1[i] * gt1[i]
                    + uv2[i] * gt2[i]
            })
            .collect();
        let mut out = self.grid.forward(&prod);
        dealias_in_place(self.grid, &mut out, self.frac);
        out[0] = ZERO;
        out.par_iter_mut().for_each(|o| *o = -*o);
        out
    }

    fn max_speed(&self, w: &[Complex64]) -> f64 {
        let (uv1, uv2) = perp_physical(self.grid, w);
        (0..self.grid.len())
            .map(|i| (self.u_tilde.0[i] + uv1[i]).hypot(self.u_tilde.1[i] + uv2[i]))
            .fold(0.0, f64::max)
    }
}

/// One step of the forced equation. `f = None` means no forcing.
pub fn step_theta(
    theta: &Field,
    f: Option<&Field>,
    params: &ModelParams,
    dt: f64,
) -> Result<Field> {
    if let Some(f) = f {
        theta.check_same_grid(f)?;
    }
    let grid = theta.grid();
    let rhs = ThetaRhs {
        grid,
        frac: params.dealias_fraction(),
        forcing: f.map(|f| f.coefficients().into_owned()),
    };
    let stepper = ExpHeun::new(grid, params.alpha(), dt);
    let out = stepper.step(&theta.coefficients(), |w| rhs.eval(w));
    Field::from_coefficients(grid, out)
}

/// One step of the perturbation equation around `theta_tilde`.
pub fn step_perturbation(
    v: &Field,
    theta_tilde: &Field,
    params: &ModelParams,
    dt: f64,
) -> Result<Field> {
    v.check_same_grid(theta_tilde)?;
    let grid = v.grid();
    let rhs = PerturbationRhs::new(grid, params.dealias_fraction(), theta_tilde);
    let stepper = ExpHeun::new(grid, params.alpha(), dt);
    let out = stepper.step(&v.coefficients(), |w| rhs.eval(w));
    Field::from_coefficients(grid, out)
}

/// Floor on the velocity scale in the CFL rule.
pub const SPEED_FLOOR: f64 = 1e-8;

/// `min(cfl·Δx / max(|u|_∞, 1e-8), cfl)`.
pub fn cfl_dt_for_speed(max_speed: f64, dx: f64, cfl_number: f64) -> f64 {
    (cfl_number * dx / max_speed.max(SPEED_FLOOR)).min(cfl_number)
}

/// Transport-limited step for the velocity of `theta`.
pub fn cfl_dt(theta: &Field, params: &ModelParams, cfl_number: f64) -> f64 {
    let grid = theta.grid();
    let mut c = theta.coefficients().into_owned();
    dealias_in_place(grid, &mut c, params.dealias_fraction());
    let (u1, u2) = perp_physical(grid, &c);
    let speed = u1
        .iter()
        .zip(&u2)
        .map(|(a, b)| a.hypot(*b))
        .fold(0.0, f64::max);
    cfl_dt_for_speed(speed, grid.dx(), cfl_number)
}

/// Step control and output schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepperConfig {
    /// Fixed step. Exactly one of `dt` and `cfl_number` must be set.
    #[serde(default)]
    pub dt: Option<f64>,
    /// Adaptive step through [`cfl_dt`].
    #[serde(default)]
    pub cfl_number: Option<f64>,
    pub t_end: f64,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    /// Record diagnostics every this many steps (and always at `t_end`).
    #[serde(default = "default_stride")]
    pub diagnostic_stride: usize,
}

fn default_stride() -> usize {
    1
}

impl StepperConfig {
    pub fn fixed(dt: f64, t_end: f64) -> Self {
        StepperConfig {
            dt: Some(dt),
            cfl_number: None,
            t_end,
            snapshot_times: Vec::new(),
            diagnostic_stride: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.dt, self.cfl_number) {
            (Some(dt), None) if dt > 0.0 && dt.is_finite() => {}
            (Some(_), None) => return Err(Error::config("stepper.dt", "must be positive")),
            (None, Some(c)) if c > 0.0 && c <= 1.0 => {}
            (None, Some(_)) => {
                return Err(Error::config("stepper.cfl_number", "must lie in (0, 1]"))
            }
            _ => {
                return Err(Error::config(
                    "stepper",
                    "set exactly one of `dt` and `cfl_number`",
                ))
            }
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::config("stepper.t_end", "must be positive"));
        }
        if self.diagnostic_stride == 0 {
            return Err(Error::config(
                "stepper.diagnostic_stride",
                "must be at least 1",
            ));
        }
        if self
            .snapshot_times
            .iter()
            .any(|&s| !(s >= 0.0 && s <= self.t_end))
        {
            return Err(Error::config(
                "stepper.snapshot_times",
                "must lie in [0, t_end]",
            ));
        }
        Ok(())
    }
}

/// Which norms to record along a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsConfig {
    /// Finite Lᵖ exponents; `linf` is always recorded.
    pub p_list: Vec<f64>,
    /// Weight exponent for `L²(m)`, if wanted.
    pub m: Option<f64>,
    pub tail_radius_fraction: f64,
    /// Guard for the weighted norm; a failing guard records NaN.
    pub guard: TailGuard,
    /// Record the leading-term residual for each `p ∈ (1, 2]` in `p_list`.
    pub leading_term: bool,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            p_list: vec![2.0],
            m: None,
            tail_radius_fraction: 0.8,
            guard: TailGuard::default(),
            leading_term: false,
        }
    }
}

impl DiagnosticsConfig {
    fn lead_ps(&self) -> Vec<f64> {
        if self.leading_term {
            self.p_list
                .iter()
                .copied()
                .filter(|&p| p > 1.0 && p <= 2.0)
                .collect()
        } else {
            Vec::new()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRecord {
    pub time: f64,
    pub lp: Vec<f64>,
    pub linf: f64,
    pub l2m: Option<f64>,
    /// `∫w dx`, read off the zero mode.
    pub mean: f64,
    pub tail_mass: f64,
    pub lead: Vec<f64>,
}

/// Time series of diagnostics, plus requested snapshots.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub p_list: Vec<f64>,
    pub m: Option<f64>,
    pub lead_p: Vec<f64>,
    /// Mass of the initial diagnosed field, the coefficient of the leading term.
    pub alpha0: f64,
    pub records: Vec<DiagnosticRecord>,
    pub snapshots: Vec<(f64, Field)>,
    pub final_state: Field,
    pub steps: usize,
    /// Reason the run stopped before `t_end`, if it did.
    pub halted: Option<String>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.time).collect()
    }

    pub fn final_time(&self) -> f64 {
        self.records.last().map(|r| r.time).unwrap_or(0.0)
    }

    pub fn lp_series(&self, p: f64) -> Option<Vec<(f64, f64)>> {
        let j = self.p_list.iter().position(|&q| q == p)?;
        Some(self.records.iter().map(|r| (r.time, r.lp[j])).collect())
    }

    pub fn linf_series(&self) -> Vec<(f64, f64)> {
        self.records.iter().map(|r| (r.time, r.linf)).collect()
    }

    pub fn lead_series(&self, p: f64) -> Option<Vec<(f64, f64)>> {
        let j = self.lead_p.iter().position(|&q| q == p)?;
        Some(self.records.iter().map(|r| (r.time, r.lead[j])).collect())
    }

    pub fn mean_series(&self) -> Vec<(f64, f64)> {
        self.records.iter().map(|r| (r.time, r.mean)).collect()
    }

    pub fn l2m_series(&self) -> Vec<(f64, f64)> {
        self.records
            .iter()
            .map(|r| (r.time, r.l2m.unwrap_or(f64::NAN)))
            .collect()
    }

    /// Turn a halted run into an `Instability` error.
    pub fn into_result(self) -> Result<Self> {
        match &self.halted {
            Some(q) => Err(Error::Instability {
                time: self.final_time(),
                quantity: q.clone(),
            }),
            None => Ok(self),
        }
    }

    pub fn csv_header(&self) -> Vec<String> {
        let mut cols = vec!["time".to_string(), "one_plus_t".to_string()];
        cols.extend(self.p_list.iter().map(|p| format!("l{p}")));
        cols.push("linf".into());
        if let Some(m) = self.m {
            cols.push(format!("l2m_{m}"));
        }
        cols.push("mean".into());
        cols.push("tail_mass".into());
        cols.extend(self.lead_p.iter().map(|p| format!("lead_l{p}")));
        cols
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.csv_header().join(",");
        s.push('\n');
        for r in &self.records {
            let _ = write!(s, "{},{}", r.time, 1.0 + r.time);
            for v in &r.lp {
                let _ = write!(s, ",{v}");
            }
            let _ = write!(s, ",{}", r.linf);
            if self.m.is_some() {
                let _ = write!(s, ",{}", r.l2m.unwrap_or(f64::NAN));
            }
            let _ = write!(s, ",{},{}", r.mean, r.tail_mass);
            for v in &r.lead {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(self.to_csv().as_bytes())?;
        f.flush()?;
        Ok(())
    }
}

/// What to integrate.
#[derive(Debug, Clone)]
pub enum Mode {
    /// The forced equation. Diagnostics are taken of `θ - reference`.
    Theta {
        forcing: Option<Field>,
        reference: Option<Field>,
    },
    /// The perturbation equation around a steady state.
    Perturbation { theta_tilde: Field },
}

/// Multiple of the initial value at which a norm trips the blow-up guard.
pub const BLOWUP_FACTOR: f64 = 1e6;

pub fn evolve(
    init: &Field,
    params: &ModelParams,
    cfg: &StepperConfig,
    diag: &DiagnosticsConfig,
    mode: &Mode,
) -> Result<Trajectory> {
    cfg.validate()?;
    let grid = init.grid().clone();
    let alpha = params.alpha();
    let frac = params.dealias_fraction();

    let (theta_rhs, pert_rhs, reference) = match mode {
        Mode::Theta { forcing, reference } => {
            if let Some(f) = forcing {
                init.check_same_grid(f)?;
            }
            if let Some(r) = reference {
                init.check_same_grid(r)?;
            }
            let rhs = ThetaRhs {
                grid: &grid,
                frac,
                forcing: forcing.as_ref().map(|f| f.coefficients().into_owned()),
            };
            (
                Some(rhs),
                None,
                reference.as_ref().map(|r| r.coefficients().into_owned()),
            )
        }
        Mode::Perturbation { theta_tilde } => {
            init.check_same_grid(theta_tilde)?;
            (
                None,
                Some(PerturbationRhs::new(&grid, frac, theta_tilde)),
                None,
            )
        }
    };
    let rhs = |w: &[Complex64]| match (&theta_rhs, &pert_rhs) {
        (Some(r), _) => r.eval(w),
        (_, Some(r)) => r.eval(w),
        _ => unreachable!(),
    };

    let lead_p = diag.lead_ps();
    let mut w = init.coefficients().into_owned();
    let diagnosed = |w: &[Complex64]| -> Vec<Complex64> {
        match &reference {
            Some(r) => w.iter().zip(r).map(|(a, b)| a - b).collect(),
            None => w.to_vec(),
        }
    };
    let area = grid.box_length() * grid.box_length();
    let alpha0 = diagnosed(&w)[0].re * area;

    let record = |t: f64, w: &[Complex64]| -> DiagnosticRecord {
        let d = diagnosed(w);
        let phys = Field::from_coefficients(&grid, d.clone())
            .expect("grid")
            .into_physical();
        let lp = diag.p_list.iter().map(|&p| lp_norm(&phys, p)).collect();
        let linf = lp_norm(&phys, f64::INFINITY);
        let l2m = diag
            .m
            .map(|m| weighted_l2m_guarded(&phys, m, Some(&diag.guard)).unwrap_or(f64::NAN));
        let lead = if lead_p.is_empty() {
            Vec::new()
        } else {
            let main = comparison_profile(alpha0, t, &grid, params).into_coefficients();
            let diff: Vec<Complex64> = d.iter().zip(&main).map(|(a, b)| a - b).collect();
            let diff = Field::from_coefficients(&grid, diff)
                .expect("grid")
                .into_physical();
            lead_p.iter().map(|&p| lp_norm(&diff, p)).collect()
        };
        DiagnosticRecord {
            time: t,
            lp,
            linf,
            l2m,
            mean: d[0].re * area,
            tail_mass: tail_mass(&phys, diag.tail_radius_fraction),
            lead,
        }
    };

    let mut snapshot_times: Vec<f64> = cfg.snapshot_times.clone();
    snapshot_times.sort_by(f64::total_cmp);
    snapshot_times.dedup();
    let mut snapshots = Vec::new();
    let mut next_snap = 0usize;
    while next_snap < snapshot_times.len() && snapshot_times[next_snap] <= 0.0 {
        snapshots.push((0.0, init.clone()));
        next_snap += 1;
    }

    let first = record(0.0, &w);
    let initial: Vec<f64> = first.lp.iter().copied().chain([first.linf]).collect();
    let mut records = vec![first];
    let mut t = 0.0;
    let mut steps = 0usize;
    let mut halted = None;
    let mut stepper: Option<ExpHeun> = None;
    let eps = 1e-12 * cfg.t_end;

    while t < cfg.t_end - eps {
        let mut dt = match (cfg.dt, cfg.cfl_number) {
            (Some(dt), _) => dt,
            (None, Some(cfl)) => {
                let speed = match (&theta_rhs, &pert_rhs) {
                    (_, Some(p)) => p.max_speed(&w),
                    _ => {
                        let (u1, u2) = perp_physical(&grid, &w);
                        u1.iter()
                            .zip(&u2)
                            .map(|(a, b)| a.hypot(*b))
                            .fold(0.0, f64::max)
                    }
                };
                cfl_dt_for_speed(speed, grid.dx(), cfl)
            }
            _ => unreachable!("validated"),
        };
        let stop = snapshot_times
            .get(next_snap)
            .copied()
            .unwrap_or(cfg.t_end)
            .min(cfg.t_end);
        let mut landing = false;
        if t + dt >= stop - eps {
            dt = stop - t;
            landing = true;
        }
        if stepper.as_ref().map(|s| s.dt() != dt).unwrap_or(true) {
            stepper = Some(ExpHeun::new(&grid, alpha, dt));
        }
        w = stepper.as_ref().unwrap().step(&w, rhs);
        t = if landing { stop } else { t + dt };
        steps += 1;

        if landing && next_snap < snapshot_times.len() && stop == snapshot_times[next_snap] {
            snapshots.push((t, Field::from_coefficients(&grid, w.clone())?));
            next_snap += 1;
        }
        let at_end = t >= cfg.t_end - eps;
        if steps.is_multiple_of(cfg.diagnostic_stride) || at_end {
            let r = record(t, &w);
            let current: Vec<f64> = r.lp.iter().copied().chain([r.linf]).collect();
            let tripped = current.iter().zip(&initial).find_map(|(&c, &i)| {
                if !c.is_finite() {
                    Some(format!("non-finite norm {c}"))
                } else if i > 0.0 && c > BLOWUP_FACTOR * i {
                    Some(format!("norm grew from {i:.3e} to {c:.3e}"))
                } else {
                    None
                }
            });
            debug!("t = {t:.4}: l = {:?}", r.lp);
            records.push(r);
            if let Some(q) = tripped {
                warn!("blow-up guard tripped at t = {t}: {q}");
                halted = Some(q);
                break;
            }
        }
    }

    Ok(Trajectory {
        p_list: diag.p_list.clone(),
        m: diag.m,
        lead_p,
        alpha0,
        records,
        snapshots,
        final_state: Field::from_coefficients(&grid, w)?,
        steps,
        halted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::gaussian;
    use crate::spectral::advection;
    use std::f64::consts::PI;

    fn params() -> ModelParams {
        ModelParams::new(1.5).unwrap()
    }

    #[test]
    fn etd_coefficients_are_continuous() {
        let h = 0.1;
        for lam in [0.0, 1e-9, 9.99e-3, 1.001e-2, 1.0, 50.0] {
            let (e, p1, p2) = etd_coefficients(lam, h);
            let x: f64 = lam * h;
            assert!((e - (-x).exp()).abs() < 1e-15);
            if lam > 0.0 {
                assert!((p1 + (-x).exp_m1() / lam).abs() < 1e-12 * h);
            }
            assert!(p2 > 0.0 && p2 <= 0.5 * h + 1e-18);
        }
        let (_, a, b) = etd_coefficients(0.0, h);
        assert_eq!(a, h);
        assert_eq!(b, 0.5 * h);
    }

    #[test]
    fn single_mode_decays_exactly() {
        let g = Grid::with_size(32, 2.0 * PI).unwrap();
        let theta = Field::from_fn(&g, |x, y| (2.0 * x + y).cos());
        let dt = 0.1;
        let out = step_theta(&theta, None, &params(), dt).unwrap();
        let decay = (-(5f64).powf(0.75) * dt).exp();
        let expect = theta.scaled(decay);
        assert!((&out - &expect).l2_norm() < 1e-12 * theta.l2_norm());
    }

    #[test]
    fn zero_stays_zero() {
        let g = Grid::with_size(32, 10.0).unwrap();
        let z = Field::zeros(&g);
        assert_eq!(step_theta(&z, None, &params(), 0.1).unwrap().l2_norm(), 0.0);
        assert_eq!(
            step_perturbation(&z, &z, &params(), 0.1).unwrap().l2_norm(),
            0.0
        );
    }

    #[test]
    fn perturbation_without_steady_state_matches_theta() {
        let g = Grid::with_size(64, 20.0).unwrap();
        let v = gaussian(&g, 0.3, 1.5);
        let zero = Field::zeros(&g);
        let a = step_theta(&v, None, &params(), 0.05).unwrap();
        let b = step_perturbation(&v, &zero, &params(), 0.05).unwrap();
        assert!((&a - &b).l2_norm() < 1e-12 * v.l2_norm());
    }

    #[test]
    fn cfl_rule() {
        let g = Grid::with_size(64, 2.0 * PI).unwrap();
        let z = Field::zeros(&g);
        assert_eq!(cfl_dt(&z, &params(), 0.5), 0.5);
        let s = Field::from_fn(&g, |x, _| x.sin());
        let dt = cfl_dt(&s, &params(), 0.5);
        assert!((dt - 0.5 * (2.0 * PI / 64.0)).abs() < 1e-12);
        let dt2 = cfl_dt(&s.scaled(2.0), &params(), 0.5);
        assert!((dt2 - 0.5 * dt).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let mut c = StepperConfig::fixed(0.1, 1.0);
        assert!(c.validate().is_ok());
        c.cfl_number = Some(0.5);
        assert!(c.validate().is_err());
        c.dt = None;
        assert!(c.validate().is_ok());
        c.cfl_number = Some(1.5);
        assert!(c.validate().is_err());
        let mut c = StepperConfig::fixed(0.1, 1.0);
        c.diagnostic_stride = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn unforced_run_dissipates_and_conserves_mass() {
        let g = Grid::with_size(64, 30.0).unwrap();
        let init = gaussian(&g, 1.0, 1.5);
        let mut cfg = StepperConfig::fixed(0.1, 3.0);
        cfg.snapshot_times = vec![1.05, 3.0];
        let diag = DiagnosticsConfig {
            p_list: vec![1.5, 2.0],
            leading_term: true,
            ..Default::default()
        };
        let traj = evolve(
            &init,
            &params(),
            &cfg,
            &diag,
            &Mode::Theta {
                forcing: None,
                reference: None,
            },
        )
        .unwrap();
        assert!(traj.halted.is_none());
        let l2 = traj.lp_series(2.0).unwrap();
        assert!(l2.windows(2).all(|w| w[1].1 <= w[0].1));
        let m0 = traj.alpha0;
        assert!(traj
            .mean_series()
            .iter()
            .all(|(_, m)| (m - m0).abs() <= 1e-12 * m0.abs()));
        assert_eq!(traj.snapshots.len(), 2);
        assert_eq!(traj.snapshots[0].0, 1.05);
        assert_eq!(traj.final_time(), 3.0);
        let csv = traj.to_csv();
        assert!(csv.starts_with("time,one_plus_t,l1.5,l2,linf,mean,tail_mass,lead_l1.5,lead_l2\n"));
        assert_eq!(csv.lines().count(), traj.records.len() + 1);
    }

    #[test]
    fn blowup_guard_trips_on_huge_steps() {
        let g = Grid::with_size(32, 2.0 * PI).unwrap();
        let init = Field::from_fn(&g, |x, y| {
            50.0 * ((x + y).sin() + (2.0 * x).cos() * y.sin())
        });
        let traj = evolve(
            &init,
            &params(),
            &StepperConfig::fixed(5.0, 500.0),
            &DiagnosticsConfig::default(),
            &Mode::Theta {
                forcing: None,
                reference: None,
            },
        )
        .unwrap();
        assert!(traj.halted.is_some());
        assert!(matches!(traj.into_result(), Err(Error::Instability { .. })));
    }

    #[test]
    fn nonlinear_step_is_second_order() {
        // reference: RK4 on the Duhamel-free spectral ODE at a much finer step
        let g = Grid::with_size(32, 2.0 * PI).unwrap();
        let p = params();
        let theta = Field::from_fn(&g, |x, y| 0.3 * (x.sin() + (2.0 * y).cos() + (x - y).cos()));
        let rk4 = |w: &Field, h: f64, steps: usize| {
            let lam = |f: &Field| crate::spectral::fractional_power(f, 1.5).unwrap();
            let rhs = |f: &Field| -&(&lam(f) + &advection(f, &p));
            let mut w = w.to_spectral();
            for _ in 0..steps {
                let k1 = rhs(&w);
                let k2 = rhs(&w.axpy(0.5 * h, &k1));
                let k3 = rhs(&w.axpy(0.5 * h, &k2));
                let k4 = rhs(&w.axpy(h, &k3));
                w = w
                    .axpy(h / 6.0, &k1)
                    .axpy(h / 3.0, &k2)
                    .axpy(h / 3.0, &k3)
                    .axpy(h / 6.0, &k4);
            }
            w
        };
        let errs: Vec<f64> = [0.04, 0.02]
            .iter()
            .map(|&dt| {
                let exact = rk4(&theta, dt / 100.0, 100);
                (&step_theta(&theta, None, &p, dt).unwrap() - &exact).l2_norm()
            })
            .collect();
        let order = (errs[0] / errs[1]).log2();
        assert!(order > 2.5, "local error order {order}");
    }
}
