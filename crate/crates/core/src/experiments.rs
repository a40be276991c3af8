//! Stability runs around plane waves, power-law fits, heat-kernel estimates
//! and the contraction diagnostic for the restarted Duhamel map.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::duhamel::{DuhamelIntegrator, Quadrature};
use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::grid::{Grid, GridSpec};
use crate::ops;
use crate::planewave::{PlaneWaveLattice, WaveProfile};
use crate::solver::{
    diagnostics, ns_rhs, DiagnosticsConfig, NsStepper, PerturbationStepper, SolverConfig, Stage,
    Trajectory,
};

pub const MIN_FIT_SAMPLES: usize = 8;

/// Least-squares power law `value ~ t^slope`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub p: Option<f64>,
    pub slope: f64,
    pub theoretical: Option<f64>,
    /// RMS residual of the log-log fit.
    pub residual: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

/// `-(1 - 3/p)/2`
pub fn theoretical_slope(p: f64) -> f64 {
    if p.is_infinite() {
        -0.5
    } else {
        -(1.0 - 3.0 / p) / 2.0
    }
}

pub fn fit_decay(series: &[(f64, f64)], window: (f64, f64)) -> Result<DecayFit> {
    let (ta, tb) = window;
    if !(ta > 0.0 && tb > ta) {
        return Err(Error::InvalidParameter {
            name: "window",
            reason: "need 0 < t_a < t_b",
        });
    }
    let mut pts = Vec::new();
    for &(t, v) in series {
        if t < ta || t > tb {
            continue;
        }
        if !(v > 0.0) {
            return Err(Error::NonPositiveSeries { t, value: v });
        }
        pts.push((libm::log(t), libm::log(v)));
    }
    if pts.len() < MIN_FIT_SAMPLES {
        return Err(Error::TooFewSamples {
            found: pts.len(),
            needed: MIN_FIT_SAMPLES,
        });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    Ok(DecayFit {
        p: None,
        slope,
        theoretical: None,
        residual: libm::sqrt(ss / n),
        window,
        samples: pts.len(),
    })
}

/// Settings of the Gaussian family used by [`heat_estimate_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct HeatEstimateConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub times: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub sigmas: usize,
}

impl Default for HeatEstimateConfig {
    fn default() -> Self {
        Self {
            t_min: 0.1,
            t_max: 100.0,
            times: 61,
            sigma_min: 1e-4,
            sigma_max: 1e5,
            sigmas: 1801,
        }
    }
}

/// `|A exp(-|x|^2 / (2 s2))|_p` on `R^d`.
pub fn gaussian_lp_norm(amplitude: f64, s2: f64, p: f64, d: u32) -> f64 {
    if p.is_infinite() {
        return amplitude;
    }
    let d = d as f64;
    amplitude * libm::pow(2.0 * core::f64::consts::PI * s2 / p, d / (2.0 * p))
}

/// `|grad (A exp(-|x|^2 / (2 s2)))|_p` on `R^d`.
pub fn gaussian_gradient_lp_norm(amplitude: f64, s2: f64, p: f64, d: u32) -> f64 {
    if p.is_infinite() {
        return amplitude * libm::exp(-0.5) / libm::sqrt(s2);
    }
    let df = d as f64;
    let pi = core::f64::consts::PI;
    let a = p / (2.0 * s2);
    // int |x|^p exp(-a |x|^2) dx over R^d
    let sphere = 2.0 * libm::pow(pi, df / 2.0) / libm::tgamma(df / 2.0);
    let radial = libm::tgamma((p + df) / 2.0) / (2.0 * libm::pow(a, (p + df) / 2.0));
    amplitude / s2 * libm::pow(sphere * radial, 1.0 / p)
}

/// `exp(t Delta)` of a unit Gaussian of variance `sigma2`: amplitude and
/// variance of the evolved Gaussian.
pub fn evolved_gaussian(sigma2: f64, t: f64, d: u32) -> (f64, f64) {
    let s2 = sigma2 + 2.0 * t;
    (libm::pow(sigma2 / s2, d as f64 / 2.0), s2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatEstimateReport {
    pub q: f64,
    pub p: f64,
    pub d: u32,
    pub exponent: f64,
    pub gradient_exponent: f64,
    pub times: Vec<f64>,
    /// `sup_sigma |e^{t Delta} g|_p t^{exponent} / |g|_q`
    pub ratios: Vec<f64>,
    pub gradient_ratios: Vec<f64>,
    /// `(max - min)/max` of the ratios over the last decade of times.
    pub last_decade_variation: f64,
    pub gradient_last_decade_variation: f64,
    pub max_ratio: f64,
}

impl HeatEstimateReport {
    pub fn flat_within(&self, tol: f64) -> bool {
        self.last_decade_variation <= tol && self.gradient_last_decade_variation <= tol
    }
}

fn log_space(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let (la, lb) = (libm::log(a), libm::log(b));
    (0..n)
        .map(|i| libm::exp(la + (lb - la) * i as f64 / (n - 1) as f64))
        .collect()
}

fn variation(times: &[f64], values: &[f64], from: f64) -> f64 {
    let tail: Vec<f64> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= from * (1.0 - 1e-12))
        .map(|(_, v)| *v)
        .collect();
    let max = tail.iter().cloned().fold(f64::MIN, f64::max);
    let min = tail.iter().cloned().fold(f64::MAX, f64::min);
    if max > 0.0 {
        (max - min) / max
    } else {
        0.0
    }
}

/// Ratios of the heat-kernel `L^q -> L^p` estimates for Gaussian data, taken
/// as a sup over a family of widths (the operator norm restricted to
/// Gaussians), with closed-form norms.
pub fn heat_estimate_check(q: f64, p: f64, d: u32) -> Result<HeatEstimateReport> {
    heat_estimate_check_with(q, p, d, &HeatEstimateConfig::default())
}

pub fn heat_estimate_check_with(
    q: f64,
    p: f64,
    d: u32,
    cfg: &HeatEstimateConfig,
) -> Result<HeatEstimateReport> {
    if !(q > 1.0 && p >= q) || q.is_infinite() {
        return Err(Error::InvalidParameter {
            name: "q, p",
            reason: "need 1 < q <= p",
        });
    }
    if d == 0 {
        return Err(Error::InvalidParameter {
            name: "d",
            reason: "dimension must be positive",
        });
    }
    let df = d as f64;
    let inv = |x: f64| if x.is_infinite() { 0.0 } else { 1.0 / x };
    let exponent = 0.5 * (df / q - df * inv(p));
    let gradient_exponent = 0.5 * (1.0 + df / q - df * inv(p));
    let times = log_space(cfg.t_min, cfg.t_max, cfg.times);
    let sigmas = log_space(cfg.sigma_min, cfg.sigma_max, cfg.sigmas);
    let mut ratios = Vec::with_capacity(times.len());
    let mut gradient_ratios = Vec::with_capacity(times.len());
    for &t in &times {
        let mut best = 0.0f64;
        let mut best_grad = 0.0f64;
        for &sigma in &sigmas {
            let sigma2 = sigma * sigma;
            let norm0 = gaussian_lp_norm(1.0, sigma2, q, d);
            let (amp, s2) = evolved_gaussian(sigma2, t, d);
            best = best.max(gaussian_lp_norm(amp, s2, p, d) * libm::pow(t, exponent) / norm0);
            best_grad = best_grad.max(
                gaussian_gradient_lp_norm(amp, s2, p, d) * libm::pow(t, gradient_exponent) / norm0,
            );
        }
        ratios.push(best);
        gradient_ratios.push(best_grad);
    }
    let from = cfg.t_max / 10.0;
    Ok(HeatEstimateReport {
        q,
        p,
        d,
        exponent,
        gradient_exponent,
        last_decade_variation: variation(&times, &ratios, from),
        gradient_last_decade_variation: variation(&times, &gradient_ratios, from),
        max_ratio: ratios.iter().cloned().fold(0.0, f64::max),
        times,
        ratios,
        gradient_ratios,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BumpShape {
    /// `v = curl(psi e)` with `psi = (1 - r^2/R^2)^4`.
    Polynomial,
    /// `v = g(r) (x x e)` with `g = -chi(r)/(r^2 + core^2)`, a regularized
    /// `1/|x|` profile; `chi = 1` up to `inner * R`, then tapers to 0 at `R`.
    CriticalCore { core: f64, inner: f64 },
}

/// Compactly supported, divergence-free perturbation.
#[derive(Debug, Clone, PartialEq)]
pub struct BumpSpec {
    /// Support radius `R`.
    pub radius: f64,
    /// `None` centers the bump in the box.
    pub center: Option<[f64; 3]>,
    pub direction: [f64; 3],
    pub shape: BumpShape,
}

impl BumpSpec {
    pub fn polynomial(radius: f64) -> Self {
        Self {
            radius,
            center: None,
            direction: [1.0, 1.0, 1.0],
            shape: BumpShape::Polynomial,
        }
    }
}

/// The bump on `grid`, projected and de-meaned; `|v|_3 = eps` when `eps`
/// is given.
pub fn bump_field(
    grid: &alloc::sync::Arc<Grid>,
    spec: &BumpSpec,
    eps: Option<f64>,
) -> Result<SpectralField> {
    if grid.dim() != 3 {
        return Err(Error::ShapeMismatch("bump needs a 3D grid"));
    }
    if !(spec.radius > 0.0) {
        return Err(Error::InvalidParameter {
            name: "radius",
            reason: "bump radius must be positive",
        });
    }
    if spec.radius < 2.0 * grid.min_spacing() {
        return Err(Error::InvalidParameter {
            name: "radius",
            reason: "bump must span at least two grid cells",
        });
    }
    let periods = [grid.periods()[0], grid.periods()[1], grid.periods()[2]];
    let center = spec
        .center
        .unwrap_or([periods[0] / 2.0, periods[1] / 2.0, periods[2] / 2.0]);
    let norm = libm::sqrt(spec.direction.iter().map(|x| x * x).sum::<f64>());
    if !(norm > 0.0) {
        return Err(Error::InvalidParameter {
            name: "direction",
            reason: "direction must be nonzero",
        });
    }
    let e = [
        spec.direction[0] / norm,
        spec.direction[1] / norm,
        spec.direction[2] / norm,
    ];
    let r_sup = spec.radius;
    let shape = spec.shape;
    let mut v = SpectralField::from_fn(grid, 3, |x, o| {
        let mut d = [0.0; 3];
        for a in 0..3 {
            let mut delta = x[a] - center[a];
            delta -= periods[a] * libm::round(delta / periods[a]);
            d[a] = delta;
        }
        let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
        let g = if r2 >= r_sup * r_sup {
            0.0
        } else {
            match shape {
                BumpShape::Polynomial => {
                    let s = 1.0 - r2 / (r_sup * r_sup);
                    -8.0 / (r_sup * r_sup) * s * s * s
                }
                BumpShape::CriticalCore { core, inner } => {
                    let r = libm::sqrt(r2);
                    let rin = inner * r_sup;
                    let chi = if r <= rin {
                        1.0
                    } else {
                        let q = (r - rin) / (r_sup - rin);
                        let w = 1.0 - q * q;
                        w * w * w
                    };
                    -chi / (r2 + core * core)
                }
            }
        };
        o[0] = g * (d[1] * e[2] - d[2] * e[1]);
        o[1] = g * (d[2] * e[0] - d[0] * e[2]);
        o[2] = g * (d[0] * e[1] - d[1] * e[0]);
    })?;
    ops::leray_project_in_place(&mut v)?;
    v.remove_mean();
    if let Some(eps) = eps {
        let n3 = ops::lp_norm(&v, 3.0)?;
        if n3 > 0.0 {
            v.scale(eps / n3);
        }
    }
    Ok(v)
}

#[derive(Debug, Clone)]
pub struct StabilityRunConfig {
    pub profile: WaveProfile,
    pub bump: BumpSpec,
    /// Target `|v0|_3`.
    pub eps: f64,
    /// Profile smallness threshold on `|h|_2` before injection.
    pub delta: f64,
    pub p_set: Vec<f64>,
    /// Length of the joint run after injection.
    pub horizon: f64,
    pub dt: f64,
    /// Step of the profile-only phase.
    pub profile_dt: f64,
    /// Give up when the profile has not reached `delta` by this time.
    pub max_profile_time: f64,
    pub grid3: GridSpec,
    pub window: (f64, f64),
    pub snapshot_stride: usize,
    pub nu: f64,
}

impl StabilityRunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::InvalidParameter {
                name: "eps",
                reason: "eps must be positive",
            });
        }
        if !(self.window.0 > 0.0 && self.window.1 > self.window.0) {
            return Err(Error::InvalidParameter {
                name: "window",
                reason: "need 0 < t_a < t_b",
            });
        }
        if self.p_set.iter().any(|&p| p < 3.0) {
            return Err(Error::InvalidParameter {
                name: "p_set",
                reason: "exponents must be >= 3",
            });
        }
        let min_period = self
            .grid3
            .periods
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if 2.0 * self.bump.radius > min_period / 8.0 * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter {
                name: "bump.radius",
                reason: "support diameter must be <= box/8",
            });
        }
        if !(self.delta > 0.0) {
            return Err(Error::InvalidParameter {
                name: "delta",
                reason: "delta must be positive",
            });
        }
        Ok(())
    }

    fn solver(&self, dt: f64, horizon: f64) -> SolverConfig {
        SolverConfig {
            nu: self.nu,
            dt,
            horizon,
            snapshot_stride: self.snapshot_stride,
            keep_states: false,
            diagnostics: DiagnosticsConfig {
                p_set: self.p_set.clone(),
                sobolev_index: 1.0,
                gradient_bound: false,
            },
            ..SolverConfig::default()
        }
    }

    /// Diffusive time after which the periodic images of the bump interact.
    pub fn t_box(&self) -> f64 {
        let min_period = self
            .grid3
            .periods
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let gap = (min_period / 2.0 - self.bump.radius).max(0.0);
        gap * gap / (4.0 * self.nu)
    }
}

/// Evolves the profile alone until `|h|_2 <= delta`.
pub fn advance_profile_to_delta(
    prof: &WaveProfile,
    delta: f64,
    dt: f64,
    max_time: f64,
    nu: f64,
) -> Result<(WaveProfile, f64)> {
    let mut h = prof.h.clone();
    if h.l2_norm() <= delta {
        return Ok((prof.clone(), 0.0));
    }
    let cfg = SolverConfig {
        nu,
        dt,
        horizon: max_time,
        ..SolverConfig::default()
    };
    let stepper = NsStepper::new(prof.grid(), &cfg)?;
    for n in 0..cfg.steps() {
        h = stepper.step_with_stages(&h, cfg.time(n), None)?;
        if h.l2_norm() <= delta {
            return Ok((
                WaveProfile {
                    h,
                    c: prof.c,
                    s: prof.s,
                },
                cfg.time(n + 1),
            ));
        }
    }
    Err(Error::InvalidParameter {
        name: "delta",
        reason: "profile did not reach delta within max_profile_time",
    })
}

#[derive(Debug, Clone)]
pub struct StabilityOutcome {
    /// Diagnostics of `v`; times are measured from the injection at `t_delta`.
    pub trajectory: Trajectory,
    pub fits: Vec<DecayFit>,
    pub t_delta: f64,
    pub t_box: f64,
    pub window: (f64, f64),
    /// Window shorter than a decade: slopes are replaced by envelopes.
    pub degraded: bool,
    /// `(p, sup_t t^{(1-3/p)/2} |v(t)|_p)` over the window.
    pub envelopes: Vec<(f64, f64)>,
    pub initial_l3: f64,
    pub profile_l2_at_injection: f64,
}

/// Joint evolution of the profile (2D) and the perturbation (3D), stepped in
/// lockstep so no background trajectory is stored.
pub fn stability_run(cfg: &StabilityRunConfig) -> Result<StabilityOutcome> {
    cfg.validate()?;
    let grid3 = Grid::new(cfg.grid3.clone())?;
    let (prof, t_delta) = advance_profile_to_delta(
        &cfg.profile,
        cfg.delta,
        cfg.profile_dt,
        cfg.max_profile_time,
        cfg.nu,
    )?;
    let lattice = PlaneWaveLattice::new(prof.c, prof.grid(), &grid3)?;
    let v0 = bump_field(&grid3, &cfg.bump, Some(cfg.eps))?;
    let initial_l3 = ops::lp_norm(&v0, 3.0)?;
    let solver = cfg.solver(cfg.dt, cfg.horizon);
    let profile_stepper = NsStepper::new(prof.grid(), &solver)?;
    let stepper = PerturbationStepper::new(&grid3, &solver)?;

    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        diagnostics: Vec::new(),
        p_set: cfg.p_set.clone(),
        nu: cfg.nu,
        nonlinear: true,
        duhamel_residual: None,
    };
    let mut v = v0;
    let mut h = prof.h.clone();
    traj.times.push(0.0);
    traj.diagnostics
        .push(diagnostics(&v, 0.0, &solver.diagnostics)?);
    let steps = solver.steps();
    let zero = initial_l3 == 0.0;
    for n in 0..steps {
        if zero {
            break;
        }
        let t = solver.time(n);
        let mut stages = Vec::with_capacity(4);
        let h_next = profile_stepper.step_with_stages(&h, t_delta + t, Some(&mut stages))?;
        // a rejected step means the perturbation left the small-data regime
        v = match stepper.step(&v, t, |stage: Stage| {
            lattice.physical(&stages[stage.index()])
        }) {
            Ok(next) => next,
            Err(Error::CflViolation { t, .. } | Error::NonFinite { t }) => {
                return Err(Error::SmallnessViolated {
                    t,
                    norm: f64::INFINITY,
                    limit: 10.0 * initial_l3,
                })
            }
            Err(e) => return Err(e),
        };
        h = h_next;
        if (n + 1) % solver.snapshot_stride == 0 || n + 1 == steps {
            let tn = solver.time(n + 1);
            let row = diagnostics(&v, tn, &solver.diagnostics)?;
            if !row.is_finite() {
                return Err(Error::NonFinite { t: tn });
            }
            let l3 = ops::lp_norm(&v, 3.0)?;
            if l3 > 10.0 * initial_l3 {
                return Err(Error::SmallnessViolated {
                    t: tn,
                    norm: l3,
                    limit: 10.0 * initial_l3,
                });
            }
            traj.times.push(tn);
            traj.diagnostics.push(row);
        }
    }

    let t_box = cfg.t_box();
    let window = (cfg.window.0, cfg.window.1.min(t_box));
    let degraded = window.1 < 10.0 * window.0;
    let mut fits = Vec::new();
    let mut envelopes = Vec::new();
    if !zero {
        for &p in &cfg.p_set {
            let series = traj.lp_series(p).expect("p in set");
            let exponent = -theoretical_slope(p);
            let env = series
                .iter()
                .filter(|(t, _)| *t >= window.0 && *t <= window.1)
                .map(|(t, v)| libm::pow(*t, exponent) * v)
                .fold(0.0, f64::max);
            envelopes.push((p, env));
            if !degraded {
                let mut fit = fit_decay(&series, window)?;
                fit.p = Some(p);
                fit.theoretical = Some(theoretical_slope(p));
                fits.push(fit);
            }
        }
    }
    Ok(StabilityOutcome {
        trajectory: traj,
        fits,
        t_delta,
        t_box,
        window,
        degraded,
        envelopes,
        initial_l3,
        profile_l2_at_injection: prof.h.l2_norm(),
    })
}

/// One sampled pair in the contraction check.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRecord {
    pub distance_in: f64,
    pub distance_out: f64,
    pub ratio: f64,
    pub norm_v: f64,
    pub norm_w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    pub pairs: Vec<PairRecord>,
    pub max_ratio: f64,
    pub t_delta: f64,
    /// `sup_t |phi(t)|_inf` over the sampled horizon.
    pub phi_sup: f64,
    pub radius: f64,
    pub seed: u64,
    /// Pairs with ratio >= 1.
    pub failures: Vec<PairRecord>,
}

impl ContractionReport {
    pub fn is_contraction(&self) -> bool {
        self.failures.is_empty()
    }
}

/// `sup_{p > 3, t > 0} t^{1/2 - 3/(2p)} |f(t)|_p + sup_t |f(t)|_3` over the
/// sampled times.
pub fn stability_distance(times: &[f64], fields: &[SpectralField], p_set: &[f64]) -> Result<f64> {
    let mut weighted = 0.0f64;
    let mut l3 = 0.0f64;
    for (&t, f) in times.iter().zip(fields) {
        let mag = f.pointwise_magnitude();
        l3 = l3.max(ops::lp_norm_of_magnitude(f.grid(), &mag, 3.0)?);
        if t <= 0.0 {
            continue;
        }
        for &p in p_set.iter().filter(|&&p| p > 3.0) {
            let w = libm::pow(t, -theoretical_slope(p));
            weighted = weighted.max(w * ops::lp_norm_of_magnitude(f.grid(), &mag, p)?);
        }
    }
    Ok(weighted + l3)
}

/// Empirical Lipschitz ratio of the Duhamel map `Phi` around the restarted
/// background on random pairs in the ball of radius `radius`.
pub fn phi_contraction_check(
    cfg: &StabilityRunConfig,
    trial_pairs: usize,
    radius: f64,
    seed: u64,
) -> Result<ContractionReport> {
    let grid3 = Grid::new(cfg.grid3.clone())?;
    let (prof, t_delta) = advance_profile_to_delta(
        &cfg.profile,
        cfg.delta,
        cfg.profile_dt,
        cfg.max_profile_time,
        cfg.nu,
    )?;
    let lattice = PlaneWaveLattice::new(prof.c, prof.grid(), &grid3)?;
    let solver = cfg.solver(cfg.dt, cfg.horizon);
    let steps = solver.steps();
    if steps == 0 {
        return Err(Error::TooFewSamples {
            found: 1,
            needed: 2,
        });
    }
    let times: Vec<f64> = (0..=steps).map(|j| solver.time(j)).collect();
    let profile_stepper = NsStepper::new(prof.grid(), &solver)?;
    let mut h = prof.h.clone();
    let mut phi = Vec::with_capacity(times.len());
    let mut phi_sup = 0.0f64;
    for j in 0..=steps {
        let p = lattice.physical(&h)?;
        for x in 0..grid3.len() {
            let s = p[0][x] * p[0][x] + p[1][x] * p[1][x] + p[2][x] * p[2][x];
            phi_sup = phi_sup.max(libm::sqrt(s));
        }
        phi.push(p);
        if j < steps {
            h = profile_stepper.step_with_stages(&h, t_delta + solver.time(j), None)?;
        }
    }
    let integ = DuhamelIntegrator::new(&grid3, cfg.nu, cfg.dt, Quadrature::Trapezoid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let band = 4;

    let sample = |rng: &mut ChaCha8Rng| -> Result<Vec<SpectralField>> {
        let mut xi = SpectralField::random_band_limited(&grid3, 3, band, rng);
        ops::leray_project_in_place(&mut xi)?;
        let path: Vec<SpectralField> = times
            .iter()
            .map(|&t| ops::heat_semigroup(&xi, t, cfg.nu))
            .collect::<Result<_>>()?;
        let norm = stability_distance(&times, &path, &cfg.p_set)?;
        let target = radius * rng.gen_range(0.5..1.0);
        Ok(path.into_iter().map(|f| f.scaled(target / norm)).collect())
    };
    let apply_g = |path: &[SpectralField]| -> Result<Vec<SpectralField>> {
        let mut out = Vec::with_capacity(path.len());
        integ.run(
            path.len(),
            3,
            true,
            |j| Ok(ns_rhs(&path[j], Some(&phi[j])).0),
            |_, g| {
                out.push(g.clone());
                Ok(())
            },
        )?;
        Ok(out)
    };

    let mut pairs = Vec::with_capacity(trial_pairs);
    for _ in 0..trial_pairs {
        let v = sample(&mut rng)?;
        let w = sample(&mut rng)?;
        let diff: Vec<SpectralField> = v
            .iter()
            .zip(&w)
            .map(|(a, b)| a.minus(b))
            .collect::<Result<_>>()?;
        let distance_in = stability_distance(&times, &diff, &cfg.p_set)?;
        // e^{t Delta} v0 cancels in Phi(v) - Phi(w)
        let (gv, gw) = (apply_g(&v)?, apply_g(&w)?);
        let out: Vec<SpectralField> = gv
            .iter()
            .zip(&gw)
            .map(|(a, b)| a.minus(b))
            .collect::<Result<_>>()?;
        let distance_out = stability_distance(&times, &out, &cfg.p_set)?;
        let ratio = if distance_in > 0.0 {
            distance_out / distance_in
        } else {
            0.0
        };
        pairs.push(PairRecord {
            distance_in,
            distance_out,
            ratio,
            norm_v: stability_distance(&times, &v, &cfg.p_set)?,
            norm_w: stability_distance(&times, &w, &cfg.p_set)?,
        });
    }
    let max_ratio = pairs.iter().map(|p| p.ratio).fold(0.0, f64::max);
    let failures = pairs.iter().filter(|p| p.ratio >= 1.0).cloned().collect();
    Ok(ContractionReport {
        pairs,
        max_ratio,
        t_delta,
        phi_sup,
        radius,
        seed,
        failures,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanEntry {
    pub amplitude: f64,
    /// `(t, t^{1/2} |u(t)|_inf)`
    pub envelope: Vec<(f64, f64)>,
    pub completed: bool,
    /// Envelope at the end does not exceed its maximum over the first half.
    pub bounded: bool,
    /// Envelope nonincreasing after its maximum.
    pub settles: bool,
    pub failure: Option<alloc::string::String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanReport {
    pub entries: Vec<ScanEntry>,
    /// Largest amplitude whose run stayed bounded, below the first failure.
    pub frontier: Option<f64>,
}

/// Pure `L^3` data (a bump with `|u0|_3 = amplitude`) run without a wave.
pub fn kato_smallness_scan(
    grid3: &GridSpec,
    amplitudes: &[f64],
    bump: &BumpSpec,
    cfg: &SolverConfig,
) -> Result<ScanReport> {
    let grid = Grid::new(grid3.clone())?;
    let mut entries = Vec::with_capacity(amplitudes.len());
    let run_cfg = SolverConfig {
        keep_states: false,
        track_duhamel: false,
        ..cfg.clone()
    };
    for &amplitude in amplitudes {
        let u0 = bump_field(&grid, bump, Some(amplitude))?;
        let stepper = NsStepper::new(&grid, &run_cfg)?;
        let mut u = u0.clone();
        let sup = |f: &SpectralField| {
            f.pointwise_magnitude()
                .iter()
                .fold(0.0f64, |m, &x| m.max(x))
        };
        let mut envelope = vec![(0.0, 0.0)];
        let mut failure = None;
        for n in 0..run_cfg.steps() {
            match stepper.step_with_stages(&u, run_cfg.time(n), None) {
                Ok(next) => u = next,
                Err(e) => {
                    failure = Some(alloc::format!("{e}"));
                    break;
                }
            }
            if (n + 1) % run_cfg.snapshot_stride == 0 || n + 1 == run_cfg.steps() {
                let t = run_cfg.time(n + 1);
                envelope.push((t, libm::sqrt(t) * sup(&u)));
            }
        }
        let completed = failure.is_none();
        let half = envelope.len() / 2;
        let first_half_max = envelope[..half.max(1)]
            .iter()
            .map(|e| e.1)
            .fold(0.0, f64::max);
        let last = envelope.last().map(|e| e.1).unwrap_or(0.0);
        let bounded = completed && last.is_finite() && last <= first_half_max.max(0.0) + 1e-300;
        let peak = envelope
            .iter()
            .enumerate()
            .fold(
                (0, f64::MIN),
                |b, (i, e)| if e.1 > b.1 { (i, e.1) } else { b },
            )
            .0;
        let settles = envelope[peak..]
            .windows(2)
            .all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-9));
        entries.push(ScanEntry {
            amplitude,
            envelope,
            completed,
            bounded: bounded || amplitude == 0.0,
            settles,
            failure,
        });
    }
    let mut frontier = None;
    for e in &entries {
        if e.bounded {
            frontier = Some(e.amplitude);
        } else {
            break;
        }
    }
    Ok(ScanReport { entries, frontier })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_power_laws() {
        let series: Vec<(f64, f64)> = (1..50)
            .map(|i| (i as f64, libm::pow(i as f64, -0.5)))
            .collect();
        let fit = fit_decay(&series, (1.0, 49.0)).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-10);
        let flat: Vec<(f64, f64)> = (1..50).map(|i| (i as f64, 3.0)).collect();
        assert!(fit_decay(&flat, (1.0, 49.0)).unwrap().slope.abs() < 1e-12);
        assert!(matches!(
            fit_decay(&series[..5], (1.0, 5.0)),
            Err(Error::TooFewSamples { .. })
        ));
        let mut bad = series.clone();
        bad[10].1 = 0.0;
        assert!(matches!(
            fit_decay(&bad, (1.0, 49.0)),
            Err(Error::NonPositiveSeries { .. })
        ));
    }

    #[test]
    fn gaussian_sup_norm_decay_slope() {
        // |e^{t Delta} g|_inf for a narrow Gaussian in 3D behaves like t^{-3/2}
        let sigma2 = 0.25 * 0.25;
        let series: Vec<(f64, f64)> = log_space(5.0, 50.0, 40)
            .into_iter()
            .map(|t| (t, evolved_gaussian(sigma2, t, 3).0))
            .collect();
        let fit = fit_decay(&series, (5.0, 50.0)).unwrap();
        assert!((fit.slope + 1.5).abs() < 0.02, "{}", fit.slope);
    }

    #[test]
    fn gaussian_norms_match_quadrature() {
        // 1D radial check through d = 1
        let s2 = 0.7;
        let h = 1e-3;
        let mut lp = 0.0;
        let mut glp = 0.0;
        let p = 3.0;
        let mut x = -20.0;
        while x < 20.0 {
            let g = libm::exp(-x * x / (2.0 * s2));
            lp += libm::pow(g, p) * h;
            glp += libm::pow((x / s2 * g).abs(), p) * h;
            x += h;
        }
        assert!((libm::pow(lp, 1.0 / p) - gaussian_lp_norm(1.0, s2, p, 1)).abs() < 1e-8);
        assert!((libm::pow(glp, 1.0 / p) - gaussian_gradient_lp_norm(1.0, s2, p, 1)).abs() < 1e-8);
    }

    #[test]
    fn heat_ratios_are_flat() {
        for (q, p, d) in [
            (2.0, f64::INFINITY, 3),
            (3.0, 3.0, 3),
            (3.0, 6.0, 3),
            (2.0, 2.0, 2),
        ] {
            let rep = heat_estimate_check(q, p, d).unwrap();
            assert!(
                rep.flat_within(0.01),
                "{q} {p} {d}: {} {}",
                rep.last_decade_variation,
                rep.gradient_last_decade_variation
            );
            if q == p {
                assert!(rep.max_ratio <= 1.0 + 1e-12);
            }
        }
        assert!(heat_estimate_check(1.0, 2.0, 3).is_err());
        assert!(heat_estimate_check(3.0, 2.0, 3).is_err());
    }

    #[test]
    fn bump_is_solenoidal_and_scaled() {
        let grid = Grid::new(GridSpec::new(&[32, 32, 32], &[32.0; 3])).unwrap();
        let v = bump_field(&grid, &BumpSpec::polynomial(3.0), Some(0.01)).unwrap();
        assert!((ops::lp_norm(&v, 3.0).unwrap() - 0.01).abs() < 1e-14);
        assert!(ops::divergence_residual(&v).unwrap() < 1e-12);
        assert!(v.mean().iter().all(|m| m.norm() == 0.0));
    }

    #[test]
    fn distance_of_identical_paths_is_zero() {
        let grid = Grid::new(GridSpec::cube(3, 8)).unwrap();
        let z = vec![SpectralField::zero_vector(&grid); 3];
        assert_eq!(
            stability_distance(&[0.0, 0.1, 0.2], &z, &[3.0, 6.0]).unwrap(),
            0.0
        );
    }
}
