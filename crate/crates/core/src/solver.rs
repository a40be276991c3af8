//! Integrating-factor RK4 time stepping for the projected Navier-Stokes
//! equation, trajectories with diagnostics, and the perturbation equation
//! around a prescribed background flow.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::duhamel::OnlineResidual;
use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::grid::Grid;
use crate::ops::{self, projected_divergence_sym, sym_len};

/// Tolerance on the relative divergence residual accepted for initial data.
pub const INITIAL_DIVERGENCE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    IntegratingFactorRk4,
}

/// What gets measured at every stored sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsConfig {
    pub p_set: Vec<f64>,
    pub sobolev_index: f64,
    /// `M_bound` needs the full velocity gradient; large runs may skip it.
    pub gradient_bound: bool,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            p_set: vec![3.0, 6.0, f64::INFINITY],
            sobolev_index: 1.0,
            gradient_bound: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub nu: f64,
    pub dt: f64,
    pub horizon: f64,
    pub scheme: Scheme,
    pub snapshot_stride: usize,
    pub cfl: f64,
    /// Disabling the nonlinearity turns every run into projected heat flow.
    pub nonlinear: bool,
    pub keep_states: bool,
    /// Track the Duhamel residual of the run on the stepping grid.
    pub track_duhamel: bool,
    pub diagnostics: DiagnosticsConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            nu: 1.0,
            dt: 1e-3,
            horizon: 1.0,
            scheme: Scheme::IntegratingFactorRk4,
            snapshot_stride: 1,
            cfl: 0.5,
            nonlinear: true,
            keep_states: true,
            track_duhamel: false,
            diagnostics: DiagnosticsConfig::default(),
        }
    }
}

impl SolverConfig {
    pub fn new(dt: f64, horizon: f64) -> Self {
        Self {
            dt,
            horizon,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "nu",
                reason: "viscosity must be positive",
            });
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: "time step must be positive",
            });
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "T",
                reason: "horizon must be nonnegative",
            });
        }
        if self.snapshot_stride == 0 {
            return Err(Error::InvalidParameter {
                name: "snapshot_stride",
                reason: "stride must be >= 1",
            });
        }
        if !(self.cfl > 0.0) {
            return Err(Error::InvalidParameter {
                name: "cfl",
                reason: "CFL number must be positive",
            });
        }
        Ok(())
    }

    /// Number of steps covering the horizon.
    pub fn steps(&self) -> usize {
        let raw = self.horizon / self.dt;
        let r = libm::round(raw);
        if (raw - r).abs() <= 1e-9 * raw.max(1.0) {
            r as usize
        } else {
            libm::ceil(raw) as usize
        }
    }

    /// Time of step index `n`.
    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }
}

/// One row of per-sample measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRow {
    pub t: f64,
    /// `L^p` norms, aligned with the configured `p_set`.
    pub lp: Vec<f64>,
    pub hs: f64,
    pub divergence_residual: f64,
    /// `1/2 |u|_2^2`
    pub energy: f64,
    /// `|u|_inf + |grad u|_inf`
    pub m_bound: f64,
}

impl DiagnosticsRow {
    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.lp.iter().all(|x| !x.is_nan())
            && self.hs.is_finite()
            && self.divergence_residual.is_finite()
            && self.energy.is_finite()
            && self.m_bound.is_finite()
    }

    pub fn lp_for(&self, p_set: &[f64], p: f64) -> Option<f64> {
        p_set.iter().position(|&q| q == p).map(|i| self.lp[i])
    }
}

pub fn diagnostics(u: &SpectralField, t: f64, cfg: &DiagnosticsConfig) -> Result<DiagnosticsRow> {
    let mag = u.pointwise_magnitude();
    let lp = cfg
        .p_set
        .iter()
        .map(|&p| ops::lp_norm_of_magnitude(u.grid(), &mag, p))
        .collect::<Result<Vec<_>>>()?;
    let sup = mag.iter().fold(0.0f64, |m, &x| m.max(x));
    let hs = ops::hs_norm(u, cfg.sobolev_index)?;
    let divergence_residual = if u.is_vector() && u.is_real() {
        ops::divergence_residual(u)?
    } else {
        0.0
    };
    let l2 = u.l2_norm();
    let m_bound = if cfg.gradient_bound {
        sup + gradient_sup(u)
    } else {
        sup
    };
    Ok(DiagnosticsRow {
        t,
        lp,
        hs,
        divergence_residual,
        energy: 0.5 * l2 * l2,
        m_bound,
    })
}

/// `sup_x |grad u(x)|` with the Frobenius norm of the gradient tensor.
pub fn gradient_sup(u: &SpectralField) -> f64 {
    let n = u.grid().len();
    let mut acc = vec![0.0; n];
    if u.is_real() {
        for comp in ops::gradient_physical(u) {
            for (a, g) in acc.iter_mut().zip(&comp) {
                *a += g * g;
            }
        }
    } else {
        let dim = u.grid().dim();
        for c in 0..u.components() {
            let scalar = SpectralField::from_coeffs(u.grid(), 1, false, u.component(c).to_vec())
                .expect("component slice");
            let grad = ops::gradient(&scalar).expect("scalar");
            for comp in grad.to_physical_complex().iter().take(dim) {
                for (a, g) in acc.iter_mut().zip(comp) {
                    *a += g.norm_sqr();
                }
            }
        }
    }
    libm::sqrt(acc.iter().fold(0.0f64, |m, &x| m.max(x)))
}

/// Time samples of a run with their diagnostics and (optionally) states.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Empty when the run did not retain states; otherwise one per time.
    pub states: Vec<SpectralField>,
    pub diagnostics: Vec<DiagnosticsRow>,
    pub p_set: Vec<f64>,
    pub nu: f64,
    pub nonlinear: bool,
    /// Largest Duhamel residual over the stepping grid, when tracked.
    pub duhamel_residual: Option<f64>,
}

impl Trajectory {
    fn new(cfg: &SolverConfig) -> Self {
        Self {
            times: Vec::new(),
            states: Vec::new(),
            diagnostics: Vec::new(),
            p_set: cfg.diagnostics.p_set.clone(),
            nu: cfg.nu,
            nonlinear: cfg.nonlinear,
            duhamel_residual: None,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn record(&mut self, u: &SpectralField, t: f64, cfg: &SolverConfig) -> Result<()> {
        let row = diagnostics(u, t, &cfg.diagnostics)?;
        if !row.is_finite() {
            return Err(Error::NonFinite { t });
        }
        self.times.push(t);
        self.diagnostics.push(row);
        if cfg.keep_states {
            self.states.push(u.clone());
        }
        Ok(())
    }

    /// Series of one configured `L^p` norm.
    pub fn lp_series(&self, p: f64) -> Option<Vec<(f64, f64)>> {
        let i = self.p_set.iter().position(|&q| q == p)?;
        Some(
            self.times
                .iter()
                .zip(&self.diagnostics)
                .map(|(&t, d)| (t, d.lp[i]))
                .collect(),
        )
    }

    pub fn energy_series(&self) -> Vec<(f64, f64)> {
        self.times
            .iter()
            .zip(&self.diagnostics)
            .map(|(&t, d)| (t, d.energy))
            .collect()
    }

    pub fn max_divergence_residual(&self) -> f64 {
        self.diagnostics
            .iter()
            .map(|d| d.divergence_residual)
            .fold(0.0, f64::max)
    }

    pub fn final_state(&self) -> Option<&SpectralField> {
        self.states.last()
    }
}

/// The four RK4 stage evaluation points of one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// `t_n`
    Start,
    /// first evaluation at `t_n + dt/2`
    HalfA,
    /// second evaluation at `t_n + dt/2`
    HalfB,
    /// `t_n + dt`
    End,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Start, Stage::HalfA, Stage::HalfB, Stage::End];

    pub fn offset(self, dt: f64) -> f64 {
        match self {
            Stage::Start => 0.0,
            Stage::HalfA | Stage::HalfB => 0.5 * dt,
            Stage::End => dt,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Stage::Start => 0,
            Stage::HalfA => 1,
            Stage::HalfB => 2,
            Stage::End => 3,
        }
    }
}

/// Exact linear propagators `exp(L dt/2)` and `exp(L dt)` for a diagonal
/// linear operator `L`.
#[derive(Debug, Clone)]
pub(crate) struct LinearPropagator {
    half: Vec<Complex64>,
    full: Vec<Complex64>,
}

impl LinearPropagator {
    /// `L = nu Delta`
    pub(crate) fn heat(grid: &Grid, nu: f64, dt: f64) -> Self {
        let half = grid
            .k2()
            .iter()
            .map(|&k2| Complex64::new(libm::exp(-nu * k2 * 0.5 * dt), 0.0))
            .collect();
        let full = grid
            .k2()
            .iter()
            .map(|&k2| Complex64::new(libm::exp(-nu * k2 * dt), 0.0))
            .collect();
        Self { half, full }
    }

    /// `L = symbol(|k|^2)` for a complex symbol.
    pub(crate) fn from_symbol<F: Fn(f64) -> Complex64>(grid: &Grid, dt: f64, symbol: F) -> Self {
        let half = grid
            .k2()
            .iter()
            .map(|&k2| (symbol(k2) * (0.5 * dt)).exp())
            .collect();
        let full = grid
            .k2()
            .iter()
            .map(|&k2| (symbol(k2) * dt).exp())
            .collect();
        Self { half, full }
    }

    fn apply(&self, f: &mut SpectralField, full: bool) {
        let factors = if full { &self.full } else { &self.half };
        let n = factors.len();
        for c in 0..f.components() {
            for (z, e) in f.coeffs_mut()[c * n..(c + 1) * n].iter_mut().zip(factors) {
                *z *= e;
            }
        }
    }
}

/// One integrating-factor RK4 step of `u' = L u + N(u)`. The closure gets
/// each stage state together with its stage label.
pub(crate) fn if_rk4_step<F>(
    u: &SpectralField,
    dt: f64,
    prop: &LinearPropagator,
    mut rhs: F,
) -> Result<SpectralField>
where
    F: FnMut(&SpectralField, Stage) -> Result<SpectralField>,
{
    let mut eh_u = u.clone();
    prop.apply(&mut eh_u, false);
    let mut ef_u = eh_u.clone();
    prop.apply(&mut ef_u, false);

    let k1 = rhs(u, Stage::Start)?;
    let mut acc = ef_u.clone();
    let mut t = k1.clone();
    prop.apply(&mut t, true);
    acc.axpy(dt / 6.0, &t)?;

    let mut ua = u.clone();
    ua.axpy(0.5 * dt, &k1)?;
    drop(k1);
    prop.apply(&mut ua, false);
    let mut sum23 = rhs(&ua, Stage::HalfA)?;
    drop(ua);

    let mut ub = eh_u;
    ub.axpy(0.5 * dt, &sum23)?;
    let k3 = rhs(&ub, Stage::HalfB)?;
    drop(ub);

    let mut uc = ef_u;
    t = k3.clone();
    prop.apply(&mut t, false);
    uc.axpy(dt, &t)?;
    sum23.axpy(1.0, &k3)?;
    drop(k3);
    prop.apply(&mut sum23, false);
    acc.axpy(dt / 3.0, &sum23)?;
    drop(sum23);

    let k4 = rhs(&uc, Stage::End)?;
    acc.axpy(dt / 6.0, &k4)?;
    Ok(acc)
}

/// Largest pointwise speed of physical velocity components.
fn max_speed(vel: &[Vec<f64>]) -> f64 {
    let n = vel[0].len();
    let mut best = 0.0f64;
    for i in 0..n {
        let s: f64 = vel.iter().map(|c| c[i] * c[i]).sum();
        best = best.max(s);
    }
    libm::sqrt(best)
}

/// `-P div((v + phi)(x)(v + phi) - phi (x) phi)` with the tensor expanded as
/// `v(x)v + v(x)phi + phi(x)v`, plus the largest speed of `v + phi`.
pub(crate) fn ns_rhs(v: &SpectralField, background: Option<&[Vec<f64>]>) -> (SpectralField, f64) {
    let grid = v.grid().clone();
    let dim = grid.dim();
    let n = grid.len();
    let pv = v.to_physical_real();
    let mut t: Vec<Vec<f64>> = Vec::with_capacity(sym_len(dim));
    let speed;
    match background {
        None => {
            for i in 0..dim {
                for j in i..dim {
                    t.push(pv[i].iter().zip(&pv[j]).map(|(a, b)| a * b).collect());
                }
            }
            speed = max_speed(&pv);
        }
        Some(phi) => {
            for i in 0..dim {
                for j in i..dim {
                    let mut row = vec![0.0; n];
                    for x in 0..n {
                        row[x] = pv[i][x] * pv[j][x] + pv[i][x] * phi[j][x] + phi[i][x] * pv[j][x];
                    }
                    t.push(row);
                }
            }
            let total: Vec<Vec<f64>> = pv
                .iter()
                .zip(phi)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
                .collect();
            speed = max_speed(&total);
        }
    }
    let mut out = projected_divergence_sym(&grid, &t);
    out.scale(-1.0);
    (out, speed)
}

/// `P((v . grad) v + (phi . grad) v + (v . grad) phi)`, evaluated as
/// `P div((v + phi)(x)(v + phi) - phi (x) phi)`.
pub fn perturbation_rhs(v: &SpectralField, phi: &SpectralField) -> Result<SpectralField> {
    v.check_compatible(phi)?;
    if !v.is_vector() {
        return Err(Error::ShapeMismatch("perturbation needs vector fields"));
    }
    let pphi = phi.to_physical_real();
    let (mut out, _) = ns_rhs(v, Some(&pphi));
    out.scale(-1.0);
    Ok(out)
}

fn check_initial(u0: &SpectralField) -> Result<()> {
    if !(u0.is_vector() && u0.is_real()) {
        return Err(Error::ShapeMismatch(
            "initial velocity must be a real vector field",
        ));
    }
    let scale = u0.max_coeff();
    if u0
        .mean()
        .iter()
        .any(|m| m.norm() * u0.grid().len() as f64 > 1e-12 * scale.max(1e-300))
    {
        return Err(Error::InvalidParameter {
            name: "u0",
            reason: "initial data must have zero mean",
        });
    }
    if ops::divergence_residual(u0)? > INITIAL_DIVERGENCE_TOLERANCE {
        return Err(Error::InvalidParameter {
            name: "u0",
            reason: "initial data must be divergence free",
        });
    }
    Ok(())
}

fn cfl_check(speed: f64, grid: &Grid, cfg: &SolverConfig, t: f64) -> Result<()> {
    if !speed.is_finite() {
        return Err(Error::NonFinite { t });
    }
    if speed > 0.0 {
        let bound = cfg.cfl * grid.min_spacing() / speed;
        if cfg.dt > bound {
            return Err(Error::CflViolation {
                t,
                dt: cfg.dt,
                bound,
            });
        }
    }
    Ok(())
}

/// Stepper for the full equation; also usable as a background recorder.
pub struct NsStepper {
    cfg: SolverConfig,
    prop: LinearPropagator,
    grid: Arc<Grid>,
}

impl NsStepper {
    pub fn new(grid: &Arc<Grid>, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg: cfg.clone(),
            prop: LinearPropagator::heat(grid, cfg.nu, cfg.dt),
            grid: grid.clone(),
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    /// Advances `u` from `t` by one step; `stages` receives the four stage
    /// states when supplied.
    pub fn step_with_stages(
        &self,
        u: &SpectralField,
        t: f64,
        mut stages: Option<&mut Vec<SpectralField>>,
    ) -> Result<SpectralField> {
        if !u.grid().same_as(&self.grid) {
            return Err(Error::ShapeMismatch("state lives on a different grid"));
        }
        let cfg = &self.cfg;
        let grid = &self.grid;
        let out = if_rk4_step(u, cfg.dt, &self.prop, |s, stage| {
            if let Some(store) = stages.as_deref_mut() {
                store.push(s.clone());
            }
            if !cfg.nonlinear {
                return Ok(SpectralField::zeros(grid, s.components(), true));
            }
            let (rhs, speed) = ns_rhs(s, None);
            if stage == Stage::Start {
                cfl_check(speed, grid, cfg, t)?;
            }
            Ok(rhs)
        })?;
        if !out.is_finite() {
            return Err(Error::NonFinite { t: t + cfg.dt });
        }
        Ok(out)
    }
}

/// One integrating-factor RK4 step.
pub fn step(u: &SpectralField, cfg: &SolverConfig) -> Result<SpectralField> {
    NsStepper::new(u.grid(), cfg)?.step_with_stages(u, 0.0, None)
}

/// Runs the full equation from `u0` over `[0, cfg.horizon]`.
pub fn evolve(u0: &SpectralField, cfg: &SolverConfig) -> Result<Trajectory> {
    check_initial(u0)?;
    let stepper = NsStepper::new(u0.grid(), cfg)?;
    let mut traj = Trajectory::new(cfg);
    let mut online = if cfg.track_duhamel {
        Some(OnlineResidual::new(u0, cfg.nu, cfg.dt, cfg.nonlinear)?)
    } else {
        None
    };
    let steps = cfg.steps();
    let mut u = u0.clone();
    traj.record(&u, 0.0, cfg)?;
    for n in 0..steps {
        u = stepper.step_with_stages(&u, cfg.time(n), None)?;
        let t = cfg.time(n + 1);
        if let Some(o) = online.as_mut() {
            o.push(&u)?;
        }
        if (n + 1) % cfg.snapshot_stride == 0 || n + 1 == steps {
            traj.record(&u, t, cfg)?;
        }
    }
    traj.duhamel_residual = online.map(|o| o.max_residual());
    Ok(traj)
}

/// A background flow available at every RK4 stage of its own stepping grid
/// and, by interpolation, at intermediate times.
pub trait Background {
    /// Grid on which the background is evaluated (the perturbation's grid).
    fn grid(&self) -> &Arc<Grid>;
    fn dt(&self) -> f64;
    fn steps(&self) -> usize;
    fn nu(&self) -> f64;
    /// Spectral state at `step`/`stage`.
    fn stage_state(&self, step: usize, stage: Stage) -> Result<SpectralField>;

    /// Physical components at `step`/`stage`.
    fn stage_physical(&self, step: usize, stage: Stage) -> Result<Vec<Vec<f64>>> {
        Ok(self.stage_state(step, stage)?.to_physical_real())
    }

    fn horizon(&self) -> f64 {
        self.steps() as f64 * self.dt()
    }

    /// State at an arbitrary time, linear in the integrating-factor
    /// variable `exp(-t nu Delta) phi(t)` between stored samples.
    fn at_time(&self, t: f64) -> Result<SpectralField> {
        let dt = self.dt();
        let horizon = self.horizon();
        if t < -1e-12 * dt || t > horizon + 1e-9 * dt {
            return Err(Error::HorizonMismatch { t, horizon });
        }
        let pos = (t / dt).max(0.0);
        let n = (libm::floor(pos) as usize).min(self.steps().saturating_sub(1));
        let theta = (pos - n as f64).clamp(0.0, 1.0);
        let a = self.stage_state(n, Stage::Start)?;
        if theta < 1e-12 || self.steps() == 0 {
            return Ok(a);
        }
        let b = self.stage_state(n, Stage::End)?;
        if theta > 1.0 - 1e-12 {
            return Ok(b);
        }
        let grid = a.grid().clone();
        let nu = self.nu();
        let n_modes = grid.len();
        let mut out = a.clone();
        let tau = theta * dt;
        for c in 0..out.components() {
            let oc = &mut out.coeffs_mut()[c * n_modes..(c + 1) * n_modes];
            let bc = b.component(c);
            for (idx, z) in oc.iter_mut().enumerate() {
                let lam = nu * grid.k2()[idx];
                *z = *z * ((1.0 - theta) * libm::exp(-lam * tau))
                    + bc[idx] * (theta * libm::exp(lam * (dt - tau)));
            }
        }
        Ok(out)
    }
}

/// Background recorded densely: every step's four stage states.
#[derive(Debug, Clone)]
pub struct DenseTrajectory {
    grid: Arc<Grid>,
    dt: f64,
    nu: f64,
    /// `stages[n]` holds the four stage states of step `n`.
    stages: Vec<[SpectralField; 4]>,
    /// Final state after the last step.
    last: SpectralField,
}

impl DenseTrajectory {
    /// Runs `u0` for `cfg.steps()` steps recording every stage state.
    pub fn record(u0: &SpectralField, cfg: &SolverConfig) -> Result<Self> {
        check_initial(u0)?;
        let stepper = NsStepper::new(u0.grid(), cfg)?;
        let mut stages = Vec::with_capacity(cfg.steps());
        let mut u = u0.clone();
        for n in 0..cfg.steps() {
            let mut store = Vec::with_capacity(4);
            u = stepper.step_with_stages(&u, cfg.time(n), Some(&mut store))?;
            let arr: [SpectralField; 4] = store
                .try_into()
                .map_err(|_| Error::ShapeMismatch("stage count"))?;
            stages.push(arr);
        }
        Ok(Self {
            grid: u0.grid().clone(),
            dt: cfg.dt,
            nu: cfg.nu,
            stages,
            last: u,
        })
    }

    pub fn from_parts(
        grid: &Arc<Grid>,
        dt: f64,
        nu: f64,
        stages: Vec<[SpectralField; 4]>,
        last: SpectralField,
    ) -> Self {
        Self {
            grid: grid.clone(),
            dt,
            nu,
            stages,
            last,
        }
    }

    /// State at sample `n` (`t = n dt`).
    pub fn sample(&self, n: usize) -> Result<&SpectralField> {
        if n < self.stages.len() {
            Ok(&self.stages[n][0])
        } else if n == self.stages.len() {
            Ok(&self.last)
        } else {
            Err(Error::HorizonMismatch {
                t: n as f64 * self.dt,
                horizon: self.stages.len() as f64 * self.dt,
            })
        }
    }

    pub fn last(&self) -> &SpectralField {
        &self.last
    }
}

impl Background for DenseTrajectory {
    fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn steps(&self) -> usize {
        self.stages.len()
    }

    fn nu(&self) -> f64 {
        self.nu
    }

    fn stage_state(&self, step: usize, stage: Stage) -> Result<SpectralField> {
        // the End stage of step n is an RK4 stage value, not the next state
        if step < self.stages.len() {
            Ok(self.stages[step][stage.index()].clone())
        } else if step == self.stages.len() && stage == Stage::Start {
            Ok(self.last.clone())
        } else {
            Err(Error::HorizonMismatch {
                t: (step as f64) * self.dt,
                horizon: self.horizon(),
            })
        }
    }
}

/// Zero background (the perturbation equation reduces to the full one).
pub struct ZeroBackground {
    grid: Arc<Grid>,
    dt: f64,
    steps: usize,
    nu: f64,
}

impl ZeroBackground {
    pub fn new(grid: &Arc<Grid>, cfg: &SolverConfig) -> Self {
        Self {
            grid: grid.clone(),
            dt: cfg.dt,
            steps: cfg.steps(),
            nu: cfg.nu,
        }
    }
}

impl Background for ZeroBackground {
    fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
    fn dt(&self) -> f64 {
        self.dt
    }
    fn steps(&self) -> usize {
        self.steps
    }
    fn nu(&self) -> f64 {
        self.nu
    }
    fn stage_state(&self, _step: usize, _stage: Stage) -> Result<SpectralField> {
        Ok(SpectralField::zero_vector(&self.grid))
    }
}

/// Steps the perturbation `v = u - phi` given background stage values.
pub struct PerturbationStepper {
    cfg: SolverConfig,
    prop: LinearPropagator,
    grid: Arc<Grid>,
}

impl PerturbationStepper {
    pub fn new(grid: &Arc<Grid>, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg: cfg.clone(),
            prop: LinearPropagator::heat(grid, cfg.nu, cfg.dt),
            grid: grid.clone(),
        })
    }

    /// Advances `v` by one step; `phi(stage)` yields the physical background
    /// at each stage.
    pub fn step<F>(&self, v: &SpectralField, t: f64, mut phi: F) -> Result<SpectralField>
    where
        F: FnMut(Stage) -> Result<Vec<Vec<f64>>>,
    {
        let cfg = &self.cfg;
        let grid = &self.grid;
        let out = if_rk4_step(v, cfg.dt, &self.prop, |s, stage| {
            let bg = phi(stage)?;
            if !cfg.nonlinear {
                return Ok(SpectralField::zeros(grid, s.components(), true));
            }
            let (rhs, speed) = ns_rhs(s, Some(&bg));
            if stage == Stage::Start {
                cfl_check(speed, grid, cfg, t)?;
            }
            Ok(rhs)
        })?;
        if !out.is_finite() {
            return Err(Error::NonFinite { t: t + cfg.dt });
        }
        Ok(out)
    }
}

/// Solves the perturbation equation around `phi` from `v0`.
///
/// When the step matches the background's own step the recorded stage
/// values are used directly; otherwise the background is interpolated in
/// the integrating-factor variable.
pub fn evolve_perturbation<B: Background + ?Sized>(
    v0: &SpectralField,
    phi: &B,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    check_initial(v0)?;
    if !v0.grid().same_as(phi.grid()) {
        return Err(Error::ShapeMismatch(
            "perturbation and background grids differ",
        ));
    }
    let steps = cfg.steps();
    let horizon = cfg.time(steps);
    if horizon > phi.horizon() * (1.0 + 1e-12) + 1e-12 {
        return Err(Error::HorizonMismatch {
            t: horizon,
            horizon: phi.horizon(),
        });
    }
    let aligned = ((cfg.dt - phi.dt()) / phi.dt()).abs() < 1e-12;
    let stepper = PerturbationStepper::new(v0.grid(), cfg)?;
    let mut traj = Trajectory::new(cfg);
    let mut v = v0.clone();
    traj.record(&v, 0.0, cfg)?;
    for n in 0..steps {
        let t = cfg.time(n);
        v = stepper.step(&v, t, |stage| {
            if aligned {
                phi.stage_physical(n, stage)
            } else {
                Ok(phi.at_time(t + stage.offset(cfg.dt))?.to_physical_real())
            }
        })?;
        if (n + 1) % cfg.snapshot_stride == 0 || n + 1 == steps {
            traj.record(&v, cfg.time(n + 1), cfg)?;
        }
    }
    Ok(traj)
}
