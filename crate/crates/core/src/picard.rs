//! Successive approximations `v_{n+1} = v_1 + G v_n` for the perturbation
//! equation around a background flow, with the weighted norms that control
//! them.

use alloc::vec;
use alloc::vec::Vec;

use crate::duhamel::{DuhamelIntegrator, Quadrature};
use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::ops;
use crate::solver::{
    diagnostics, gradient_sup, ns_rhs, Background, SolverConfig, Stage, Trajectory,
};

#[derive(Debug, Clone, PartialEq)]
pub struct PicardConfig {
    /// Exponential weight rate; `None` picks `4 M (1 + T*)`.
    pub l: Option<f64>,
    pub t_star: f64,
    pub gammas: Vec<f64>,
    /// Holder exponent `p > 2` of the recurrence bound.
    pub holder_p: f64,
    pub max_iter: usize,
    /// Smallness threshold for `|v0|_3`.
    pub eps: f64,
    pub quadrature: Quadrature,
    /// Iteration stops once `W_n <= tolerance W_1`.
    pub tolerance: f64,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            l: None,
            t_star: 1.0,
            gammas: vec![0.25, 0.5, 0.75, 1.0],
            holder_p: 4.0,
            max_iter: 12,
            eps: 1e-2,
            quadrature: Quadrature::Trapezoid,
            tolerance: 1e-13,
        }
    }
}

impl PicardConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gammas.is_empty() || self.gammas.iter().any(|&g| !(g > 0.0 && g <= 1.0)) {
            return Err(Error::InvalidParameter {
                name: "gammas",
                reason: "every gamma must lie in (0, 1]",
            });
        }
        if !(self.holder_p > 2.0) {
            return Err(Error::InvalidParameter {
                name: "holder_p",
                reason: "Holder exponent must exceed 2",
            });
        }
        if !(self.t_star > 0.0) {
            return Err(Error::InvalidParameter {
                name: "T_star",
                reason: "horizon must be positive",
            });
        }
        if let Some(l) = self.l {
            if !(l > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "L",
                    reason: "weight rate must be positive",
                });
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidParameter {
                name: "eps",
                reason: "smallness threshold must be positive",
            });
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter {
                name: "max_iter",
                reason: "need at least one iteration",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardIterate {
    pub n: usize,
    pub k: f64,
    pub k_prime: f64,
    /// Weighted norm of `v_n - v_{n-1}` (with `v_0 = 0`).
    pub w: f64,
    /// `W_{n+1} / W_n`, absent for the last iterate.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardReport {
    pub iterations: Vec<PicardIterate>,
    pub l: f64,
    /// `sup_t |phi(t)|_{1,inf}` over the time grid.
    pub m_bound: f64,
    pub initial_l3: f64,
    pub within_smallness: bool,
    /// Smallest `C` with `K_{n+1} <= C rhs_n` for every recorded `n`.
    pub fitted_constant: f64,
    /// Right-hand side of the `K` recurrence (without `C`) per iterate.
    pub recurrence_rhs: Vec<f64>,
    pub converged: bool,
}

impl PicardReport {
    pub fn ratios(&self) -> Vec<f64> {
        self.iterations.iter().filter_map(|it| it.ratio).collect()
    }

    pub fn max_ratio(&self) -> f64 {
        self.ratios().into_iter().fold(0.0, f64::max)
    }
}

/// `|grad v|_p` with the Frobenius norm of the gradient tensor.
pub fn gradient_lp_norm(v: &SpectralField, p: f64) -> Result<f64> {
    let grad = ops::gradient_physical(v);
    let n = v.grid().len();
    let mut mag = vec![0.0; n];
    for comp in &grad {
        for (m, g) in mag.iter_mut().zip(comp) {
            *m += g * g;
        }
    }
    for m in mag.iter_mut() {
        *m = libm::sqrt(*m);
    }
    ops::lp_norm_of_magnitude(v.grid(), &mag, p)
}

fn weight(t: f64, exponent: f64, l: f64) -> f64 {
    libm::exp(-l * t) * libm::pow(t, exponent)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "gamma",
            reason: "gamma must lie in (0, 1]",
        })
    }
}

/// `sup_t e^{-L t} t^{(1-gamma)/2} |v(t)|_{3/gamma}` over samples (samples
/// at `t = 0` are skipped when `gamma < 1`).
pub fn weighted_norm_samples(
    times: &[f64],
    states: &[SpectralField],
    gamma: f64,
    l: f64,
) -> Result<f64> {
    check_gamma(gamma)?;
    let exponent = (1.0 - gamma) / 2.0;
    let mut best = 0.0f64;
    for (&t, v) in times.iter().zip(states) {
        if gamma < 1.0 && t <= 0.0 {
            continue;
        }
        best = best.max(weight(t, exponent, l) * ops::lp_norm(v, 3.0 / gamma)?);
    }
    Ok(best)
}

/// [`weighted_norm_samples`] over a trajectory's stored states.
pub fn weighted_norm(traj: &Trajectory, gamma: f64, l: f64) -> Result<f64> {
    if traj.states.len() != traj.times.len() {
        return Err(Error::InvalidParameter {
            name: "trajectory",
            reason: "states were not retained",
        });
    }
    weighted_norm_samples(&traj.times, &traj.states, gamma, l)
}

/// Per-sample norms of one iterate, reduced into `K` and `K'`.
struct IterateNorms {
    /// `K`: sup over gammas of the weighted norms.
    k: f64,
    k_prime: f64,
}

fn iterate_norms(
    times: &[f64],
    states: &[SpectralField],
    gammas: &[f64],
    l: f64,
) -> Result<IterateNorms> {
    let mut k = 0.0f64;
    let mut k_prime = 0.0f64;
    for (&t, v) in times.iter().zip(states) {
        let mag = v.pointwise_magnitude();
        for &g in gammas {
            if g < 1.0 && t <= 0.0 {
                continue;
            }
            let lp = ops::lp_norm_of_magnitude(v.grid(), &mag, 3.0 / g)?;
            k = k.max(weight(t, (1.0 - g) / 2.0, l) * lp);
        }
        if t > 0.0 {
            k_prime = k_prime.max(weight(t, 0.5, l) * gradient_lp_norm(v, 3.0)?);
        }
    }
    Ok(IterateNorms { k, k_prime })
}

fn increment_norm(
    times: &[f64],
    a: &[SpectralField],
    b: Option<&[SpectralField]>,
    gammas: &[f64],
    l: f64,
) -> Result<f64> {
    let mut best = 0.0f64;
    for (j, &t) in times.iter().enumerate() {
        let w = match b {
            Some(b) => a[j].minus(&b[j])?,
            None => a[j].clone(),
        };
        let mag = w.pointwise_magnitude();
        for &g in gammas {
            if g < 1.0 && t <= 0.0 {
                continue;
            }
            let lp = ops::lp_norm_of_magnitude(w.grid(), &mag, 3.0 / g)?;
            best = best.max(weight(t, (1.0 - g) / 2.0, l) * lp);
        }
    }
    Ok(best)
}

/// `K_1 + e^{L T*} K K' + T*^{(2-p')/(2p')} M K' / (pL)^{1/p} + T*^{1/p'} M K / (pL)^{1/p}`
pub fn recurrence_rhs(k1: f64, k: f64, k_prime: f64, m: f64, l: f64, t_star: f64, p: f64) -> f64 {
    let pp = p / (p - 1.0);
    let denom = libm::pow(p * l, 1.0 / p);
    k1 + libm::exp(l * t_star) * k * k_prime
        + libm::pow(t_star, (2.0 - pp) / (2.0 * pp)) * m * k_prime / denom
        + libm::pow(t_star, 1.0 / pp) * m * k / denom
}

/// Runs the successive approximations on the stepping grid of `cfg` up to
/// `T*` and returns the last iterate with its report.
pub fn picard_solve<B: Background + ?Sized>(
    v0: &SpectralField,
    phi: &B,
    pcfg: &PicardConfig,
    cfg: &SolverConfig,
) -> Result<(Trajectory, PicardReport)> {
    pcfg.validate()?;
    cfg.validate()?;
    if !v0.grid().same_as(phi.grid()) {
        return Err(Error::ShapeMismatch(
            "perturbation and background grids differ",
        ));
    }
    if ((cfg.dt - phi.dt()) / phi.dt()).abs() > 1e-12 {
        return Err(Error::InvalidParameter {
            name: "dt",
            reason: "Picard samples must match the background step",
        });
    }
    let grid = v0.grid().clone();
    let run = SolverConfig {
        horizon: pcfg.t_star,
        ..cfg.clone()
    };
    let steps = run.steps();
    if steps == 0 {
        return Err(Error::TooFewSamples {
            found: 1,
            needed: 2,
        });
    }
    if steps > phi.steps() {
        return Err(Error::HorizonMismatch {
            t: run.time(steps),
            horizon: phi.horizon(),
        });
    }
    let times: Vec<f64> = (0..=steps).map(|j| run.time(j)).collect();

    let mut phi_phys = Vec::with_capacity(steps + 1);
    let mut m_bound = 0.0f64;
    for j in 0..=steps {
        let s = phi.stage_state(j, Stage::Start)?;
        let sup = s
            .pointwise_magnitude()
            .iter()
            .fold(0.0f64, |m, &x| m.max(x));
        m_bound = m_bound.max(sup + gradient_sup(&s));
        phi_phys.push(s.to_physical_real());
    }
    let l = pcfg
        .l
        .unwrap_or(4.0 * m_bound * (1.0 + pcfg.t_star))
        .max(f64::MIN_POSITIVE);

    let v1: Vec<SpectralField> = times
        .iter()
        .map(|&t| ops::heat_semigroup(v0, t, cfg.nu))
        .collect::<Result<_>>()?;
    let integ = DuhamelIntegrator::new(&grid, cfg.nu, cfg.dt, pcfg.quadrature)?;

    let first = iterate_norms(&times, &v1, &pcfg.gammas, l)?;
    let k1 = first.k;
    let mut iterations = vec![PicardIterate {
        n: 1,
        k: first.k,
        k_prime: first.k_prime,
        w: increment_norm(&times, &v1, None, &pcfg.gammas, l)?,
        ratio: None,
    }];
    let mut rhs = Vec::new();
    let mut current = v1.clone();
    let mut converged = iterations[0].w == 0.0;
    let mut growing = 0usize;
    while !converged && iterations.len() < pcfg.max_iter {
        let mut next: Vec<SpectralField> = Vec::with_capacity(times.len());
        integ.run(
            times.len(),
            v0.components(),
            true,
            |j| Ok(ns_rhs(&current[j], Some(&phi_phys[j])).0),
            |j, g| {
                next.push(v1[j].plus(g)?);
                Ok(())
            },
        )?;
        if next.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite { t: pcfg.t_star });
        }
        let norms = iterate_norms(&times, &next, &pcfg.gammas, l)?;
        let w = increment_norm(&times, &next, Some(&current), &pcfg.gammas, l)?;
        let last = iterations.last_mut().expect("nonempty");
        rhs.push(recurrence_rhs(
            k1,
            last.k,
            last.k_prime,
            m_bound,
            l,
            pcfg.t_star,
            pcfg.holder_p,
        ));
        let ratio = if last.w > 0.0 { w / last.w } else { 0.0 };
        last.ratio = Some(ratio);
        let n = last.n + 1;
        if !w.is_finite() {
            return Err(Error::PicardDiverged {
                iteration: n,
                ratio,
            });
        }
        growing = if ratio > 1.0 { growing + 1 } else { 0 };
        if growing >= 2 {
            return Err(Error::PicardDiverged {
                iteration: n,
                ratio,
            });
        }
        iterations.push(PicardIterate {
            n,
            k: norms.k,
            k_prime: norms.k_prime,
            w,
            ratio: None,
        });
        current = next;
        converged = w <= pcfg.tolerance * iterations[0].w;
    }

    let fitted_constant = iterations
        .iter()
        .skip(1)
        .zip(&rhs)
        .map(|(it, r)| if *r > 0.0 { it.k / r } else { 0.0 })
        .fold(0.0, f64::max);
    let initial_l3 = ops::lp_norm(v0, 3.0)?;

    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        diagnostics: Vec::new(),
        p_set: cfg.diagnostics.p_set.clone(),
        nu: cfg.nu,
        nonlinear: cfg.nonlinear,
        duhamel_residual: None,
    };
    for (j, (t, s)) in times.iter().zip(current).enumerate() {
        if j % cfg.snapshot_stride == 0 || j == steps {
            traj.diagnostics
                .push(diagnostics(&s, *t, &cfg.diagnostics)?);
            traj.times.push(*t);
            if cfg.keep_states {
                traj.states.push(s);
            }
        }
    }
    let report = PicardReport {
        iterations,
        l,
        m_bound,
        initial_l3,
        within_smallness: initial_l3 <= pcfg.eps,
        fitted_constant,
        recurrence_rhs: rhs,
        converged,
    };
    Ok((traj, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, GridSpec};
    use crate::solver::ZeroBackground;

    #[test]
    fn zero_data_gives_zero_iterates() {
        let grid = Grid::new(GridSpec::cube(3, 8)).unwrap();
        let cfg = SolverConfig::new(0.05, 0.2);
        let bg = ZeroBackground::new(&grid, &cfg);
        let pcfg = PicardConfig {
            t_star: 0.2,
            ..PicardConfig::default()
        };
        let (traj, rep) =
            picard_solve(&SpectralField::zero_vector(&grid), &bg, &pcfg, &cfg).unwrap();
        assert!(rep.iterations.iter().all(|it| it.w == 0.0 && it.k == 0.0));
        assert!(traj.states.iter().all(|s| s.max_coeff() == 0.0));
    }

    #[test]
    fn weighted_norm_of_constant_single_mode() {
        let grid = Grid::new(GridSpec::cube(3, 8)).unwrap();
        let v = SpectralField::from_fn(&grid, 3, |x, o| {
            o[0] = libm::sin(x[2]);
            o[1] = 0.0;
            o[2] = 0.0;
        })
        .unwrap();
        let times = [0.0, 0.1, 0.2, 0.5, 1.0];
        let states = vec![v.clone(); times.len()];
        let l = 2.0;
        for &g in &[0.25, 0.5, 1.0] {
            let lp = ops::lp_norm(&v, 3.0 / g).unwrap();
            let expected = times
                .iter()
                .filter(|&&t| g == 1.0 || t > 0.0)
                .map(|&t| libm::exp(-l * t) * libm::pow(t, (1.0 - g) / 2.0) * lp)
                .fold(0.0, f64::max);
            let got = weighted_norm_samples(&times, &states, g, l).unwrap();
            assert!((got - expected).abs() < 1e-12 * expected);
        }
        assert!(weighted_norm_samples(&times, &states, 0.0, l).is_err());
        let gamma_one = weighted_norm_samples(&times, &states, 1.0, l).unwrap();
        assert!((gamma_one - ops::lp_norm(&v, 3.0).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn config_validation() {
        assert!(PicardConfig {
            gammas: vec![1.5],
            ..PicardConfig::default()
        }
        .validate()
        .is_err());
        assert!(PicardConfig {
            holder_p: 2.0,
            ..PicardConfig::default()
        }
        .validate()
        .is_err());
        assert!(PicardConfig::default().validate().is_ok());
    }
}
