//! Complex Ginzburg–Landau equation `u_t = (eps + i) Delta u + (i - k)|u|^2 u`
//! on the same spectral infrastructure, with its plane waves and the
//! perturbation experiment around them.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::experiments::{fit_decay, theoretical_slope, BumpShape, BumpSpec, DecayFit};
use crate::field::SpectralField;
use crate::grid::{Grid, GridSpec};
use crate::ops;
use crate::planewave::{PlaneWaveLattice, Speed};
use crate::solver::{if_rk4_step, LinearPropagator, Stage};

/// The energy identity is checked with `|grad f|_2^2`; the squared form is
/// the one consistent with Parseval.
pub const ENERGY_IDENTITY_HEADER: &str =
    "1/2 d/dt |f|_2^2 = -eps |grad f|_2^2 - k |f|_4^4 (gradient norm squared)";

/// Keeping `|m| < N/4` makes cubic products alias free.
pub const CUBIC_DEALIAS_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct CglConfig {
    pub eps: f64,
    pub k: f64,
    pub dt: f64,
    pub horizon: f64,
    pub snapshot_stride: usize,
    /// Bound on `dt |i - k| |u|_inf^2`.
    pub cfl: f64,
    pub nonlinear: bool,
    pub keep_states: bool,
    pub p_set: Vec<f64>,
}

impl Default for CglConfig {
    fn default() -> Self {
        Self {
            eps: 1.0,
            k: 1.0,
            dt: 1e-3,
            horizon: 1.0,
            snapshot_stride: 1,
            cfl: 0.5,
            nonlinear: true,
            keep_states: true,
            p_set: vec![2.0, 4.0, f64::INFINITY],
        }
    }
}

impl CglConfig {
    pub fn new(eps: f64, k: f64, dt: f64, horizon: f64) -> Self {
        Self {
            eps,
            k,
            dt,
            horizon,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "eps",
                reason: "eps must be positive",
            });
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "k",
                reason: "k must be positive",
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

    pub fn steps(&self) -> usize {
        let raw = self.horizon / self.dt;
        let r = libm::round(raw);
        if (raw - r).abs() <= 1e-9 * raw.max(1.0) {
            r as usize
        } else {
            libm::ceil(raw) as usize
        }
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    fn coupling(&self) -> Complex64 {
        if self.nonlinear {
            Complex64::new(-self.k, 1.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    }
}

fn check_cgl_field(f: &SpectralField) -> Result<()> {
    if f.is_real() || f.components() != 1 {
        return Err(Error::ShapeMismatch("CGL fields are complex scalars"));
    }
    if !f.is_finite() {
        return Err(Error::NonFinite { t: 0.0 });
    }
    Ok(())
}

/// Complex scalar field from physical samples.
pub fn cgl_field_from_fn<F>(grid: &Arc<Grid>, f: F) -> Result<SpectralField>
where
    F: Fn(&[f64; 3]) -> Complex64,
{
    let data: Vec<Complex64> = (0..grid.len()).map(|i| f(&grid.coordinate(i))).collect();
    let mut out = SpectralField::from_physical_complex(grid, &[data])?;
    out.dealias();
    Ok(out)
}

/// `S(t) f`, each mode multiplied by `exp(-(eps + i)|k|^2 t)`.
pub fn cgl_semigroup(f: &SpectralField, t: f64, eps: f64) -> Result<SpectralField> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "t",
            reason: "semigroup time must be nonnegative",
        });
    }
    check_cgl_field(f)?;
    let mut out = f.clone();
    for (z, &k2) in out.coeffs_mut().iter_mut().zip(f.grid().k2()) {
        *z *= Complex64::new(-eps * k2 * t, -k2 * t).exp();
    }
    Ok(out)
}

/// `|grad f|_2^2` by Parseval.
pub fn gradient_l2_squared(f: &SpectralField) -> f64 {
    let grid = f.grid();
    let n = grid.len() as f64;
    let mut sum = 0.0;
    for c in 0..f.components() {
        sum += f
            .component(c)
            .iter()
            .zip(grid.k2())
            .map(|(z, k2)| k2 * z.norm_sqr())
            .sum::<f64>();
    }
    sum * grid.volume() / (n * n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CglRow {
    pub t: f64,
    pub energy: f64,
    pub gradient_l2_squared: f64,
    /// `|f|_4^4`
    pub l4_fourth: f64,
    pub lp: Vec<f64>,
}

fn cgl_row(f: &SpectralField, t: f64, p_set: &[f64]) -> Result<CglRow> {
    let mag = f.pointwise_magnitude();
    let lp = p_set
        .iter()
        .map(|&p| ops::lp_norm_of_magnitude(f.grid(), &mag, p))
        .collect::<Result<Vec<_>>>()?;
    let l4_fourth = mag.iter().map(|m| (m * m) * (m * m)).sum::<f64>() * f.grid().cell_volume();
    let l2 = f.l2_norm();
    let row = CglRow {
        t,
        energy: 0.5 * l2 * l2,
        gradient_l2_squared: gradient_l2_squared(f),
        l4_fourth,
        lp,
    };
    if !(row.energy.is_finite() && row.l4_fourth.is_finite() && row.gradient_l2_squared.is_finite())
    {
        return Err(Error::NonFinite { t });
    }
    Ok(row)
}

#[derive(Debug, Clone)]
pub struct CglTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<SpectralField>,
    pub rows: Vec<CglRow>,
    pub last: SpectralField,
    pub eps: f64,
    pub k: f64,
    pub nonlinear: bool,
    pub dt: f64,
    pub snapshot_stride: usize,
    pub p_set: Vec<f64>,
}

impl CglTrajectory {
    pub fn lp_series(&self, p: f64) -> Option<Vec<(f64, f64)>> {
        let i = self.p_set.iter().position(|&q| q == p)?;
        Some(self.rows.iter().map(|r| (r.t, r.lp[i])).collect())
    }

    pub fn energy_series(&self) -> Vec<(f64, f64)> {
        self.rows.iter().map(|r| (r.t, r.energy)).collect()
    }
}

/// Nonlinear term `(i - k)(|phi + v|^2 (phi + v) - |phi|^2 phi)`, expanded as
/// `|phi|^2 v + (2 Re(conj(phi) v) + |v|^2)(phi + v)`, plus `|phi + v|_inf`.
fn cgl_rhs(
    v: &SpectralField,
    phi: Option<&[Complex64]>,
    coupling: Complex64,
) -> Result<(SpectralField, f64)> {
    let pv = v.to_physical_complex().swap_remove(0);
    let mut sup = 0.0f64;
    let out: Vec<Complex64> = match phi {
        None => pv
            .iter()
            .map(|&u| {
                let m = u.norm_sqr();
                sup = sup.max(m);
                coupling * u * m
            })
            .collect(),
        Some(phi) => pv
            .iter()
            .zip(phi)
            .map(|(&v, &p)| {
                let u = p + v;
                sup = sup.max(u.norm_sqr());
                let cross = 2.0 * (p.conj() * v).re + v.norm_sqr();
                coupling * (v * p.norm_sqr() + u * cross)
            })
            .collect(),
    };
    let mut f = SpectralField::from_physical_complex(v.grid(), &[out])?;
    f.dealias();
    Ok((f, libm::sqrt(sup)))
}

pub struct CglStepper {
    prop: LinearPropagator,
    dt: f64,
    cfl: f64,
    coupling: Complex64,
}

impl CglStepper {
    pub fn new(grid: &Grid, cfg: &CglConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.nonlinear && grid.spec().dealias_fraction > CUBIC_DEALIAS_FRACTION + 1e-12 {
            return Err(Error::InvalidParameter {
                name: "dealias",
                reason: "the cubic term needs a dealias fraction <= 1/2",
            });
        }
        let eps = cfg.eps;
        let prop = LinearPropagator::from_symbol(grid, cfg.dt, |k2| Complex64::new(-eps * k2, -k2));
        Ok(Self {
            prop,
            dt: cfg.dt,
            cfl: cfg.cfl,
            coupling: cfg.coupling(),
        })
    }

    fn check_cfl(&self, sup: f64, t: f64) -> Result<()> {
        let rate = self.coupling.norm() * sup * sup;
        if rate * self.dt > self.cfl {
            return Err(Error::CflViolation {
                t,
                dt: self.dt,
                bound: self.cfl / rate,
            });
        }
        Ok(())
    }

    /// One step; stage states go to `stages` in [`Stage::ALL`] order.
    pub fn step_with_stages(
        &self,
        u: &SpectralField,
        t: f64,
        mut stages: Option<&mut Vec<SpectralField>>,
    ) -> Result<SpectralField> {
        if let Some(s) = stages.as_deref_mut() {
            s.clear();
        }
        let next = if_rk4_step(u, self.dt, &self.prop, |state, stage| {
            if let Some(s) = stages.as_deref_mut() {
                s.push(state.clone());
            }
            let (n, sup) = cgl_rhs(state, None, self.coupling)?;
            if stage == Stage::Start {
                self.check_cfl(sup, t)?;
            }
            Ok(n)
        })?;
        if !next.is_finite() {
            return Err(Error::NonFinite { t: t + self.dt });
        }
        Ok(next)
    }

    /// Step of the perturbation `v = u - phi` given physical `phi` per stage.
    pub fn step_perturbation<F>(
        &self,
        v: &SpectralField,
        t: f64,
        mut phi: F,
    ) -> Result<SpectralField>
    where
        F: FnMut(Stage) -> Result<Vec<Complex64>>,
    {
        let next = if_rk4_step(v, self.dt, &self.prop, |state, stage| {
            let p = phi(stage)?;
            let (n, sup) = cgl_rhs(state, Some(&p), self.coupling)?;
            if stage == Stage::Start {
                self.check_cfl(sup, t)?;
            }
            Ok(n)
        })?;
        if !next.is_finite() {
            return Err(Error::NonFinite { t: t + self.dt });
        }
        Ok(next)
    }
}

pub fn cgl_evolve(f0: &SpectralField, cfg: &CglConfig) -> Result<CglTrajectory> {
    check_cgl_field(f0)?;
    let stepper = CglStepper::new(f0.grid(), cfg)?;
    let mut traj = CglTrajectory {
        times: vec![0.0],
        states: Vec::new(),
        rows: vec![cgl_row(f0, 0.0, &cfg.p_set)?],
        last: f0.clone(),
        eps: cfg.eps,
        k: cfg.k,
        nonlinear: cfg.nonlinear,
        dt: cfg.dt,
        snapshot_stride: cfg.snapshot_stride,
        p_set: cfg.p_set.clone(),
    };
    if cfg.keep_states {
        traj.states.push(f0.clone());
    }
    let steps = cfg.steps();
    let mut u = f0.clone();
    for n in 0..steps {
        u = stepper.step_with_stages(&u, cfg.time(n), None)?;
        if (n + 1) % cfg.snapshot_stride == 0 || n + 1 == steps {
            let t = cfg.time(n + 1);
            traj.times.push(t);
            traj.rows.push(cgl_row(&u, t, &cfg.p_set)?);
            if cfg.keep_states {
                traj.states.push(u.clone());
            }
        }
    }
    traj.last = u;
    Ok(traj)
}

/// `a(t)` for spatially constant data, `a' = (i - k)|a|^2 a`.
pub fn constant_mode_solution(a0: Complex64, k: f64, t: f64) -> Complex64 {
    let m0 = a0.norm_sqr();
    let growth = 1.0 + 2.0 * k * m0 * t;
    let modulus = libm::sqrt(m0 / growth);
    let phase = if k > 0.0 {
        libm::log(growth) / (2.0 * k)
    } else {
        m0 * t
    };
    if m0 == 0.0 {
        return a0;
    }
    a0 / libm::sqrt(m0) * modulus * Complex64::new(libm::cos(phase), libm::sin(phase))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyIdentityReport {
    pub header: &'static str,
    /// `(t, lhs, rhs)` per interior step.
    pub samples: Vec<(f64, f64, f64)>,
    pub max_defect: f64,
}

/// Compares a sixth-order central difference of `|f|_2^2 / 2` with
/// `-eps |grad f|_2^2 - k |f|_4^4` at every interior step. The defect is
/// relative to the dissipation at that step.
pub fn cgl_energy_identity_check(traj: &CglTrajectory) -> Result<EnergyIdentityReport> {
    if traj.snapshot_stride != 1 {
        return Err(Error::InvalidParameter {
            name: "snapshot_stride",
            reason: "energy check needs every step",
        });
    }
    const W: [f64; 7] = [-1.0, 9.0, -45.0, 0.0, 45.0, -9.0, 1.0];
    let rows = &traj.rows;
    if rows.len() < W.len() {
        return Err(Error::TooFewSamples {
            found: rows.len(),
            needed: W.len(),
        });
    }
    let h = traj.dt;
    let k = if traj.nonlinear { traj.k } else { 0.0 };
    let mut samples = Vec::with_capacity(rows.len() - 6);
    let mut max_defect = 0.0f64;
    for j in 3..rows.len() - 3 {
        let lhs = W
            .iter()
            .enumerate()
            .map(|(i, w)| w * rows[j + i - 3].energy)
            .sum::<f64>()
            / (60.0 * h);
        let rhs = -traj.eps * rows[j].gradient_l2_squared - k * rows[j].l4_fourth;
        let defect = if rhs == 0.0 {
            lhs.abs()
        } else {
            (lhs - rhs).abs() / rhs.abs()
        };
        max_defect = max_defect.max(defect);
        samples.push((rows[j].t, lhs, rhs));
    }
    Ok(EnergyIdentityReport {
        header: ENERGY_IDENTITY_HEADER,
        samples,
        max_defect,
    })
}

/// `u(x, y, z) = f((x - c y)/sqrt(1 + c^2), z)`
pub fn cgl_embed_planewave(
    f2d: &SpectralField,
    c: Speed,
    grid3: &GridSpec,
) -> Result<SpectralField> {
    check_cgl_field(f2d)?;
    PlaneWaveLattice::for_spec(c, f2d.grid(), grid3)?.lift_components(f2d)
}

pub fn cgl_extract_profile(
    u: &SpectralField,
    c: Speed,
    profile_grid: &Arc<Grid>,
) -> Result<SpectralField> {
    check_cgl_field(u)?;
    PlaneWaveLattice::new(c, profile_grid, u.grid())?.restrict_components(u)
}

/// Relative `L^2` distance between the embedded 2D evolution and the 3D
/// evolution of the embedded data at the final time.
pub fn cgl_commutation_check(
    f2d: &SpectralField,
    c: Speed,
    cfg: &CglConfig,
    grid3: &GridSpec,
) -> Result<f64> {
    let lattice = PlaneWaveLattice::for_spec(c, f2d.grid(), grid3)?;
    let run = CglConfig {
        keep_states: false,
        snapshot_stride: cfg.steps().max(1),
        ..cfg.clone()
    };
    let flat = cgl_evolve(f2d, &run)?;
    let u0 = lattice.lift_components(f2d)?;
    let full = cgl_evolve(&u0, &run)?;
    let lifted = lattice.lift_components(&flat.last)?;
    if lifted.l2_norm() == 0.0 && full.last.l2_norm() == 0.0 {
        return Ok(0.0);
    }
    full.last.relative_distance(&lifted)
}

/// Complex scalar bump on a 3D grid; `|v|_3 = norm` when given. Polynomial
/// shapes give `(1 - r^2/R^2)^4`, critical cores `chi(r)/sqrt(r^2 + a^2)`.
pub fn cgl_bump(grid: &Arc<Grid>, spec: &BumpSpec, norm: Option<f64>) -> Result<SpectralField> {
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
    let r_sup = spec.radius;
    let mut v = cgl_field_from_fn(grid, |x| {
        let mut r2 = 0.0;
        for a in 0..3 {
            let mut d = x[a] - center[a];
            d -= periods[a] * libm::round(d / periods[a]);
            r2 += d * d;
        }
        if r2 >= r_sup * r_sup {
            return Complex64::new(0.0, 0.0);
        }
        let value = match spec.shape {
            BumpShape::Polynomial => {
                let s = 1.0 - r2 / (r_sup * r_sup);
                (s * s) * (s * s)
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
                chi / libm::sqrt(r2 + core * core)
            }
        };
        Complex64::new(value, 0.0)
    })?;
    if let Some(target) = norm {
        let n3 = ops::lp_norm(&v, 3.0)?;
        if n3 > 0.0 {
            v.scale(target / n3);
        }
    }
    Ok(v)
}

#[derive(Debug, Clone)]
pub struct CglStabilityConfig {
    pub cgl: CglConfig,
    pub profile: SpectralField,
    pub c: Speed,
    pub bump: BumpSpec,
    /// Target `|v0|_3`.
    pub v0_norm: f64,
    /// Profile smallness threshold on `|f|_2` before injection.
    pub delta: f64,
    pub profile_dt: f64,
    pub max_profile_time: f64,
    pub grid3: GridSpec,
    pub window: (f64, f64),
}

#[derive(Debug, Clone)]
pub struct CglStabilityOutcome {
    /// Rows of `v = u - phi`, times from the injection.
    pub rows: Vec<CglRow>,
    pub p_set: Vec<f64>,
    pub fits: Vec<DecayFit>,
    pub degraded: bool,
    pub envelopes: Vec<(f64, f64)>,
    pub window: (f64, f64),
    pub t_delta: f64,
    pub initial_l3: f64,
}

impl CglStabilityOutcome {
    pub fn fit_for(&self, p: f64) -> Option<&DecayFit> {
        self.fits.iter().find(|f| f.p == Some(p))
    }
}

fn advance_to_delta(
    f0: &SpectralField,
    cfg: &CglConfig,
    delta: f64,
    dt: f64,
    max_time: f64,
) -> Result<(SpectralField, f64)> {
    let mut f = f0.clone();
    if f.l2_norm() <= delta {
        return Ok((f, 0.0));
    }
    let run = CglConfig {
        dt,
        horizon: max_time,
        ..cfg.clone()
    };
    let stepper = CglStepper::new(f.grid(), &run)?;
    for n in 0..run.steps() {
        f = stepper.step_with_stages(&f, run.time(n), None)?;
        if f.l2_norm() <= delta {
            return Ok((f, run.time(n + 1)));
        }
    }
    Err(Error::InvalidParameter {
        name: "delta",
        reason: "profile did not reach delta within max_profile_time",
    })
}

/// Same protocol as the Navier–Stokes stability run: evolve the profile to
/// `|f|_2 <= delta`, inject the bump and step profile and perturbation in
/// lockstep.
pub fn cgl_stability_run(cfg: &CglStabilityConfig) -> Result<CglStabilityOutcome> {
    cfg.cgl.validate()?;
    check_cgl_field(&cfg.profile)?;
    if !(cfg.v0_norm >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "v0_norm",
            reason: "perturbation size must be nonnegative",
        });
    }
    if !(cfg.window.0 > 0.0 && cfg.window.1 > cfg.window.0) {
        return Err(Error::InvalidParameter {
            name: "window",
            reason: "need 0 < t_a < t_b",
        });
    }
    let min_period = cfg
        .grid3
        .periods
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if 2.0 * cfg.bump.radius > min_period / 8.0 * (1.0 + 1e-12) {
        return Err(Error::InvalidParameter {
            name: "bump.radius",
            reason: "support diameter must be <= box/8",
        });
    }
    let (f, t_delta) = advance_to_delta(
        &cfg.profile,
        &cfg.cgl,
        cfg.delta,
        cfg.profile_dt,
        cfg.max_profile_time,
    )?;
    let lattice = PlaneWaveLattice::for_spec(cfg.c, f.grid(), &cfg.grid3)?;
    let grid3 = lattice.target_grid().clone();
    let v0 = cgl_bump(&grid3, &cfg.bump, Some(cfg.v0_norm))?;
    let initial_l3 = ops::lp_norm(&v0, 3.0)?;
    let profile_stepper = CglStepper::new(f.grid(), &cfg.cgl)?;
    let stepper = CglStepper::new(&grid3, &cfg.cgl)?;
    let p_set = cfg.cgl.p_set.clone();
    let mut rows = vec![cgl_row(&v0, 0.0, &p_set)?];
    let steps = cfg.cgl.steps();
    let (mut v, mut h) = (v0, f);
    let limit = 10.0 * initial_l3;
    for n in 0..steps {
        if initial_l3 == 0.0 {
            break;
        }
        let t = cfg.cgl.time(n);
        let mut stages = Vec::with_capacity(4);
        let h_next = profile_stepper.step_with_stages(&h, t_delta + t, Some(&mut stages))?;
        let lift = |stage: Stage| -> Result<Vec<Complex64>> {
            Ok(lattice
                .lift_components(&stages[stage.index()])?
                .to_physical_complex()
                .swap_remove(0))
        };
        v = match stepper.step_perturbation(&v, t, lift) {
            Ok(next) => next,
            Err(Error::CflViolation { t, .. } | Error::NonFinite { t }) => {
                return Err(Error::SmallnessViolated {
                    t,
                    norm: f64::INFINITY,
                    limit,
                })
            }
            Err(e) => return Err(e),
        };
        h = h_next;
        if (n + 1) % cfg.cgl.snapshot_stride == 0 || n + 1 == steps {
            let tn = cfg.cgl.time(n + 1);
            let row = cgl_row(&v, tn, &p_set)?;
            let l3 = ops::lp_norm(&v, 3.0)?;
            if l3 > limit {
                return Err(Error::SmallnessViolated {
                    t: tn,
                    norm: l3,
                    limit,
                });
            }
            rows.push(row);
        }
    }
    let window = cfg.window;
    let degraded = window.1 < 10.0 * window.0;
    let mut fits = Vec::new();
    let mut envelopes = Vec::new();
    if initial_l3 > 0.0 {
        for (i, &p) in p_set.iter().enumerate() {
            let series: Vec<(f64, f64)> = rows.iter().map(|r| (r.t, r.lp[i])).collect();
            let exponent = -theoretical_slope(p);
            let env = series
                .iter()
                .filter(|(t, _)| *t >= window.0 && *t <= window.1)
                .map(|(t, x)| libm::pow(*t, exponent) * x)
                .fold(0.0, f64::max);
            envelopes.push((p, env));
            if !degraded && p >= 3.0 {
                let mut fit = fit_decay(&series, window)?;
                fit.p = Some(p);
                fit.theoretical = Some(theoretical_slope(p));
                fits.push(fit);
            }
        }
    }
    Ok(CglStabilityOutcome {
        rows,
        p_set,
        fits,
        degraded,
        envelopes,
        window,
        t_delta,
        initial_l3,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileEnvelope {
    pub p: f64,
    /// `sup_t t^{1/2 - 1/p} |f(t)|_p`
    pub sup: f64,
    pub last: f64,
}

/// Weighted norms `t^{1/2 - 1/p} |f(t)|_p` of a 2D run.
pub fn cgl_profile_envelope(f0: &SpectralField, cfg: &CglConfig) -> Result<Vec<ProfileEnvelope>> {
    if f0.grid().dim() != 2 {
        return Err(Error::ShapeMismatch("profile envelope needs a 2D field"));
    }
    let run = CglConfig {
        keep_states: false,
        ..cfg.clone()
    };
    let traj = cgl_evolve(f0, &run)?;
    let mut out = Vec::with_capacity(run.p_set.len());
    for &p in &run.p_set {
        let w = if p.is_infinite() { 0.5 } else { 0.5 - 1.0 / p };
        let series = traj.lp_series(p).expect("p in set");
        let weighted: Vec<f64> = series.iter().map(|(t, x)| libm::pow(*t, w) * x).collect();
        out.push(ProfileEnvelope {
            p,
            sup: weighted.iter().cloned().fold(0.0, f64::max),
            last: *weighted.last().unwrap_or(&0.0),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid2(n: usize) -> Arc<Grid> {
        Grid::new(GridSpec::cube(2, n).with_dealias(CUBIC_DEALIAS_FRACTION)).unwrap()
    }

    #[test]
    fn semigroup_multiplier() {
        let g = grid2(16);
        let f =
            cgl_field_from_fn(&g, |x| Complex64::new(libm::cos(x[0]), libm::sin(x[0]))).unwrap();
        assert_eq!(cgl_semigroup(&f, 0.0, 0.5).unwrap(), f);
        let s = cgl_semigroup(&f, 1.0, 0.5).unwrap();
        let idx = g.flatten(&[1, 0]);
        let ratio = s.coeffs()[idx] / f.coeffs()[idx];
        assert!((ratio.norm() - libm::exp(-0.5)).abs() < 1e-15);
        assert!((ratio.arg() + 1.0).abs() < 1e-14);
        assert!(cgl_semigroup(&f, -1.0, 0.5).is_err());
    }

    #[test]
    fn zero_stays_zero() {
        let g = grid2(16);
        let z = SpectralField::zeros(&g, 1, false);
        let traj = cgl_evolve(&z, &CglConfig::new(1.0, 1.0, 1e-2, 0.1)).unwrap();
        assert!(traj.last.l2_norm() == 0.0);
        let rep = cgl_energy_identity_check(&traj).unwrap();
        assert_eq!(rep.max_defect, 0.0);
    }

    #[test]
    fn constant_mode_follows_ode() {
        let g = grid2(8);
        let a0 = Complex64::new(0.8, -0.3);
        let f = cgl_field_from_fn(&g, |_| a0).unwrap();
        let cfg = CglConfig::new(1.0, 0.7, 1e-3, 1.0);
        let traj = cgl_evolve(&f, &cfg).unwrap();
        let exact = constant_mode_solution(a0, 0.7, 1.0);
        let got = traj.last.mean()[0];
        assert!((got - exact).norm() < 1e-8, "{got} vs {exact}");
    }

    #[test]
    fn rejects_real_fields_and_bad_parameters() {
        let g = grid2(8);
        let f = SpectralField::zeros(&g, 1, true);
        assert!(cgl_evolve(&f, &CglConfig::default()).is_err());
        let c = SpectralField::zeros(&g, 1, false);
        assert!(cgl_evolve(&c, &CglConfig::new(0.0, 1.0, 1e-3, 1.0)).is_err());
        assert!(cgl_evolve(&c, &CglConfig::new(1.0, 0.0, 1e-3, 1.0)).is_err());
    }

    #[test]
    fn gauge_covariance() {
        let g = grid2(16);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = SpectralField::random_complex_band_limited(&g, 3, &mut rng);
        let theta = Complex64::new(0.0, 0.7).exp();
        let mut rotated = f.clone();
        rotated.scale_complex(theta);
        let cfg = CglConfig::new(0.5, 1.0, 1e-3, 0.1);
        let a = cgl_evolve(&f, &cfg).unwrap().last;
        let mut a_rot = a.clone();
        a_rot.scale_complex(theta);
        let b = cgl_evolve(&rotated, &cfg).unwrap().last;
        assert!(a_rot.relative_distance(&b).unwrap() < 1e-12);
    }

    #[test]
    fn l2_norm_strictly_decreases() {
        let g = grid2(16);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut f = SpectralField::random_complex_band_limited(&g, 3, &mut rng);
        f.scale(2.0 / f.l2_norm());
        let traj = cgl_evolve(&f, &CglConfig::new(0.5, 1.0, 1e-3, 0.2)).unwrap();
        assert!(traj.rows.windows(2).all(|w| w[1].energy < w[0].energy));
    }

    #[test]
    fn embed_extract_round_trip() {
        let g = Grid::new(
            GridSpec::new(&[16, 16], &[2.0 * core::f64::consts::PI; 2])
                .with_dealias(CUBIC_DEALIAS_FRACTION),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let f = SpectralField::random_complex_band_limited(&g, 3, &mut rng);
        for c in [Speed::zero(), Speed::integer(1), Speed::new(1, 2).unwrap()] {
            let b = crate::planewave::minimal_box(c, g.periods()[0], g.periods()[1]);
            let spec = GridSpec::new(&[16, 32, 16], &b).with_dealias(CUBIC_DEALIAS_FRACTION);
            let u = cgl_embed_planewave(&f, c, &spec).unwrap();
            let back = cgl_extract_profile(&u, c, &g).unwrap();
            assert!(back.relative_distance(&f).unwrap() < 1e-13);
        }
    }
}
