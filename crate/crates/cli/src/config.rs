//! Run configuration: TOML with dotted keys, every section optional except
//! where a run cannot be defined without it. Unknown keys are errors.

use std::f64::consts::PI;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use nsplane_core::duhamel::Quadrature;
use nsplane_core::experiments::{BumpShape, BumpSpec};
use nsplane_core::planewave::{minimal_box, PlaneWaveLattice, Speed};
use nsplane_core::solver::{DiagnosticsConfig, SolverConfig};
use nsplane_core::{Grid, GridSpec};
use serde::{Deserialize, Serialize};

use crate::Subcommand;

fn two_thirds() -> f64 {
    2.0 / 3.0
}
fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_p_set() -> Vec<f64> {
    vec![3.0, 6.0, f64::INFINITY]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub points: Vec<usize>,
    /// Defaults to `2 pi` on every axis.
    #[serde(default)]
    pub periods: Option<Vec<f64>>,
    #[serde(default = "two_thirds")]
    pub dealias: f64,
}

impl GridSection {
    pub fn spec(&self) -> GridSpec {
        let periods = self
            .periods
            .clone()
            .unwrap_or_else(|| vec![2.0 * PI; self.points.len()]);
        GridSpec::new(&self.points, &periods).with_dealias(self.dealias)
    }

    fn resolve(&mut self) -> Result<()> {
        if self.periods.is_none() {
            self.periods = Some(vec![2.0 * PI; self.points.len()]);
        }
        self.spec().validate().map_err(|e| anyhow!("grid: {e}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "one")]
    pub nu: f64,
    #[serde(default = "SolverSection::default_dt")]
    pub dt: f64,
    #[serde(default = "one")]
    pub t_end: f64,
    #[serde(default = "SolverSection::default_stride")]
    pub snapshot_stride: usize,
    #[serde(default = "SolverSection::default_cfl")]
    pub cfl: f64,
    #[serde(default = "yes")]
    pub nonlinear: bool,
    #[serde(default = "default_p_set")]
    pub p_set: Vec<f64>,
    #[serde(default = "one")]
    pub sobolev_index: f64,
    #[serde(default = "yes")]
    pub track_duhamel: bool,
    /// Write spectral states to `snapshots/`.
    #[serde(default)]
    pub snapshots: bool,
}

impl SolverSection {
    fn default_dt() -> f64 {
        1e-3
    }
    fn default_stride() -> usize {
        1
    }
    fn default_cfl() -> f64 {
        0.5
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            nu: self.nu,
            dt: self.dt,
            horizon: self.t_end,
            snapshot_stride: self.snapshot_stride,
            cfl: self.cfl,
            nonlinear: self.nonlinear,
            keep_states: self.snapshots,
            track_duhamel: self.track_duhamel,
            diagnostics: DiagnosticsConfig {
                p_set: self.p_set.clone(),
                sobolev_index: self.sobolev_index,
                gradient_bound: true,
            },
            ..SolverConfig::default()
        }
    }
}

impl Default for SolverSection {
    fn default() -> Self {
        toml::from_str("").expect("all solver keys have defaults")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    TaylorGreen,
    Random,
    Zero,
    /// Spatially constant complex value (CGL only).
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    #[serde(default = "InitialSection::default_kind")]
    pub kind: InitialKind,
    /// Taylor–Green amplitude, or the sup norm of random data.
    #[serde(default = "one")]
    pub amplitude: f64,
    /// Largest lattice index of random modes.
    #[serde(default = "InitialSection::default_band")]
    pub band: i64,
    /// Phase of constant CGL data.
    #[serde(default)]
    pub phase: f64,
}

impl InitialSection {
    fn default_kind() -> InitialKind {
        InitialKind::Random
    }
    fn default_band() -> i64 {
        3
    }
}

impl Default for InitialSection {
    fn default() -> Self {
        toml::from_str("").expect("all initial keys have defaults")
    }
}

/// Plane-wave geometry: profile grid on `(w, z)` and the 3D box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneWaveSection {
    /// Rational speed, e.g. `"1/2"` or `"-1"`.
    pub c: String,
    /// `w` period of the profile.
    #[serde(default = "PlaneWaveSection::default_period")]
    pub lambda: f64,
    /// `z` period shared by profile and box.
    #[serde(default = "PlaneWaveSection::default_period")]
    pub lz: f64,
    pub profile_points: [usize; 2],
    pub box_points: [usize; 3],
    /// Defaults to the smallest commensurable box.
    #[serde(default)]
    pub box_periods: Option<[f64; 3]>,
    #[serde(default = "two_thirds")]
    pub dealias: f64,
}

impl PlaneWaveSection {
    fn default_period() -> f64 {
        2.0 * PI
    }

    pub fn speed(&self) -> Result<Speed> {
        parse_speed(&self.c)
    }

    pub fn profile_spec(&self) -> GridSpec {
        GridSpec::new(&self.profile_points, &[self.lambda, self.lz]).with_dealias(self.dealias)
    }

    pub fn box_spec(&self) -> Result<GridSpec> {
        let periods = match self.box_periods {
            Some(p) => p,
            None => minimal_box(self.speed()?, self.lambda, self.lz),
        };
        Ok(GridSpec::new(&self.box_points, &periods).with_dealias(self.dealias))
    }

    pub fn lattice(&self) -> Result<PlaneWaveLattice> {
        let profile =
            Grid::new(self.profile_spec()).map_err(|e| anyhow!("planewave profile grid: {e}"))?;
        let spec = self.box_spec()?;
        PlaneWaveLattice::for_spec(self.speed()?, &profile, &spec).map_err(|e| {
            anyhow!(
                "planewave: {e} (rule: L_x/(sqrt(1+c^2) lambda) must be a positive integer, \
                 c L_y/(sqrt(1+c^2) lambda) a nonzero integer when c != 0, and L_z = lz)"
            )
        })
    }

    fn resolve(&mut self) -> Result<()> {
        let s = self.speed()?;
        self.c = s.to_string();
        if self.box_periods.is_none() {
            self.box_periods = Some(minimal_box(s, self.lambda, self.lz));
        }
        self.lattice()?;
        Ok(())
    }
}

pub fn parse_speed(text: &str) -> Result<Speed> {
    let text = text.trim();
    let (num, den) = match text.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (text, "1"),
    };
    let num: i64 = num
        .parse()
        .with_context(|| format!("wave speed `{text}` is not a rational number"))?;
    let den: i64 = den
        .parse()
        .with_context(|| format!("wave speed `{text}` is not a rational number"))?;
    Speed::new(num, den).map_err(|e| anyhow!("{e}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BumpKind {
    Polynomial,
    CriticalCore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpSection {
    pub radius: f64,
    #[serde(default = "BumpSection::default_kind")]
    pub shape: BumpKind,
    #[serde(default)]
    pub center: Option<[f64; 3]>,
    #[serde(default = "BumpSection::default_direction")]
    pub direction: [f64; 3],
    #[serde(default = "BumpSection::default_core")]
    pub core: f64,
    #[serde(default = "BumpSection::default_inner")]
    pub inner: f64,
}

impl BumpSection {
    fn default_kind() -> BumpKind {
        BumpKind::Polynomial
    }
    fn default_direction() -> [f64; 3] {
        [1.0, 1.0, 1.0]
    }
    fn default_core() -> f64 {
        0.125
    }
    fn default_inner() -> f64 {
        0.6
    }

    pub fn spec(&self) -> BumpSpec {
        let shape = match self.shape {
            BumpKind::Polynomial => BumpShape::Polynomial,
            BumpKind::CriticalCore => BumpShape::CriticalCore {
                core: self.core,
                inner: self.inner,
            },
        };
        BumpSpec {
            radius: self.radius,
            center: self.center,
            direction: self.direction,
            shape,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Simulate {
    pub grid: GridSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub initial: InitialSection,
    /// Tolerance of the Taylor–Green and energy checks.
    #[serde(default = "Simulate::default_exact_tol")]
    pub exact_tolerance: f64,
    #[serde(default = "Simulate::default_duhamel_tol")]
    pub duhamel_tolerance: f64,
    #[serde(default = "Simulate::default_div_tol")]
    pub divergence_tolerance: f64,
}

impl Simulate {
    fn default_exact_tol() -> f64 {
        1e-8
    }
    fn default_duhamel_tol() -> f64 {
        1e-6
    }
    fn default_div_tol() -> f64 {
        1e-12
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneWaveCheck {
    pub planewave: PlaneWaveSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default = "PlaneWaveCheck::default_tol")]
    pub tolerance: f64,
}

impl PlaneWaveCheck {
    fn default_tol() -> f64 {
        1e-6
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardSection {
    /// Weight `L`; defaults to `4 M (1 + T*)`.
    #[serde(default)]
    pub l: Option<f64>,
    #[serde(default = "one")]
    pub t_star: f64,
    #[serde(default = "PicardSection::default_gammas")]
    pub gammas: Vec<f64>,
    #[serde(default = "PicardSection::default_holder")]
    pub holder_p: f64,
    #[serde(default = "PicardSection::default_iter")]
    pub max_iter: usize,
    /// Smallness threshold on `|v0|_3` reported against.
    #[serde(default = "PicardSection::default_eps")]
    pub eps: f64,
    #[serde(default = "PicardSection::default_quadrature")]
    pub quadrature: String,
    #[serde(default = "PicardSection::default_tolerance")]
    pub tolerance: f64,
    /// Run the iteration; otherwise only the local bound is checked.
    #[serde(default = "yes")]
    pub solve: bool,
}

impl PicardSection {
    fn default_gammas() -> Vec<f64> {
        vec![0.25, 0.5, 0.75, 1.0]
    }
    fn default_holder() -> f64 {
        4.0
    }
    fn default_iter() -> usize {
        12
    }
    fn default_eps() -> f64 {
        1e-2
    }
    fn default_quadrature() -> String {
        "trapezoid".into()
    }
    fn default_tolerance() -> f64 {
        1e-13
    }

    pub fn quadrature(&self) -> Result<Quadrature> {
        match self.quadrature.as_str() {
            "trapezoid" => Ok(Quadrature::Trapezoid),
            "cubic" => Ok(Quadrature::Cubic),
            other => bail!("picard.quadrature: unknown rule `{other}` (trapezoid or cubic)"),
        }
    }
}

impl Default for PicardSection {
    fn default() -> Self {
        toml::from_str("").expect("all picard keys have defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Picard {
    pub planewave: PlaneWaveSection,
    #[serde(default)]
    pub solver: SolverSection,
    /// The profile.
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub picard: PicardSection,
    /// `|v0|_3` of the random perturbation.
    pub v0_norm: f64,
    #[serde(default = "Picard::default_band")]
    pub v0_band: i64,
    #[serde(default = "Picard::default_ratio")]
    pub max_ratio: f64,
    #[serde(default = "Picard::default_checked")]
    pub checked_iterations: usize,
    #[serde(default = "Picard::default_fixed_tol")]
    pub fixed_point_tolerance: f64,
}

impl Picard {
    fn default_band() -> i64 {
        3
    }
    fn default_ratio() -> f64 {
        0.6
    }
    fn default_checked() -> usize {
        8
    }
    fn default_fixed_tol() -> f64 {
        1e-6
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilitySection {
    /// Target `|v0|_3`.
    pub eps: f64,
    pub delta: f64,
    #[serde(default = "default_p_set")]
    pub p_set: Vec<f64>,
    pub t_end: f64,
    pub dt: f64,
    #[serde(default = "StabilitySection::default_profile_dt")]
    pub profile_dt: f64,
    #[serde(default = "StabilitySection::default_max_profile_time")]
    pub max_profile_time: f64,
    pub window: [f64; 2],
    #[serde(default = "StabilitySection::default_stride")]
    pub snapshot_stride: usize,
    #[serde(default = "one")]
    pub nu: f64,
}

impl StabilitySection {
    fn default_profile_dt() -> f64 {
        0.05
    }
    fn default_max_profile_time() -> f64 {
        1e4
    }
    fn default_stride() -> usize {
        1
    }
}

/// Accepted slope band per exponent: `[p, low, high]`.
fn default_slope_bands() -> Vec<[f64; 3]> {
    vec![
        [3.0, -0.10, 0.05],
        [6.0, -0.35, -0.15],
        [f64::INFINITY, -0.65, -0.35],
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stability {
    pub planewave: PlaneWaveSection,
    #[serde(default)]
    pub initial: InitialSection,
    pub bump: BumpSection,
    pub stability: StabilitySection,
    #[serde(default = "default_slope_bands")]
    pub slope_bands: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Contraction {
    pub planewave: PlaneWaveSection,
    #[serde(default)]
    pub initial: InitialSection,
    pub bump: BumpSection,
    pub stability: StabilitySection,
    #[serde(default = "Contraction::default_pairs")]
    pub pairs: usize,
    pub radius: f64,
    #[serde(default = "Contraction::default_ratio")]
    pub max_ratio: f64,
}

impl Contraction {
    fn default_pairs() -> usize {
        20
    }
    fn default_ratio() -> f64 {
        0.5
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatCase {
    pub q: f64,
    pub p: f64,
    pub d: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatDecay {
    #[serde(default = "HeatDecay::default_cases")]
    pub cases: Vec<HeatCase>,
    #[serde(default = "HeatDecay::default_t")]
    pub t_range: [f64; 2],
    #[serde(default = "HeatDecay::default_times")]
    pub times: usize,
    #[serde(default = "HeatDecay::default_sigma")]
    pub sigma_range: [f64; 2],
    #[serde(default = "HeatDecay::default_sigmas")]
    pub sigmas: usize,
    #[serde(default = "HeatDecay::default_tol")]
    pub tolerance: f64,
}

impl HeatDecay {
    fn default_cases() -> Vec<HeatCase> {
        [
            (2.0, f64::INFINITY, 3),
            (3.0, 3.0, 3),
            (3.0, 6.0, 3),
            (2.0, 2.0, 2),
        ]
        .into_iter()
        .map(|(q, p, d)| HeatCase { q, p, d })
        .collect()
    }
    fn default_t() -> [f64; 2] {
        [0.1, 100.0]
    }
    fn default_times() -> usize {
        61
    }
    fn default_sigma() -> [f64; 2] {
        [1e-4, 1e5]
    }
    fn default_sigmas() -> usize {
        1801
    }
    fn default_tol() -> f64 {
        0.01
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scan {
    pub grid: GridSection,
    #[serde(default)]
    pub solver: SolverSection,
    pub bump: BumpSection,
    pub amplitudes: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CglMode {
    Evolve,
    PlanewaveCheck,
    Stability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CglSection {
    #[serde(default = "one")]
    pub eps: f64,
    #[serde(default = "one")]
    pub k: f64,
    #[serde(default = "SolverSection::default_dt")]
    pub dt: f64,
    #[serde(default = "one")]
    pub t_end: f64,
    #[serde(default = "SolverSection::default_stride")]
    pub snapshot_stride: usize,
    #[serde(default = "SolverSection::default_cfl")]
    pub cfl: f64,
    #[serde(default = "yes")]
    pub nonlinear: bool,
    #[serde(default = "CglSection::default_p_set")]
    pub p_set: Vec<f64>,
    #[serde(default)]
    pub snapshots: bool,
}

impl CglSection {
    fn default_p_set() -> Vec<f64> {
        vec![2.0, 3.0, 6.0, f64::INFINITY]
    }

    pub fn config(&self) -> nsplane_core::cgl::CglConfig {
        nsplane_core::cgl::CglConfig {
            eps: self.eps,
            k: self.k,
            dt: self.dt,
            horizon: self.t_end,
            snapshot_stride: self.snapshot_stride,
            cfl: self.cfl,
            nonlinear: self.nonlinear,
            keep_states: self.snapshots,
            p_set: self.p_set.clone(),
        }
    }
}

impl Default for CglSection {
    fn default() -> Self {
        toml::from_str("").expect("all cgl keys have defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CglStabilitySection {
    pub v0_norm: f64,
    pub delta: f64,
    #[serde(default = "StabilitySection::default_profile_dt")]
    pub profile_dt: f64,
    #[serde(default = "StabilitySection::default_max_profile_time")]
    pub max_profile_time: f64,
    pub window: [f64; 2],
}

fn default_cgl_bands() -> Vec<[f64; 3]> {
    vec![[6.0, -0.35, -0.15]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cgl {
    pub mode: CglMode,
    #[serde(default)]
    pub cgl: CglSection,
    /// Evolve mode grid.
    #[serde(default)]
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub planewave: Option<PlaneWaveSection>,
    #[serde(default)]
    pub bump: Option<BumpSection>,
    #[serde(default)]
    pub stability: Option<CglStabilitySection>,
    #[serde(default = "Cgl::default_ode_tol")]
    pub ode_tolerance: f64,
    #[serde(default = "Cgl::default_energy_tol")]
    pub energy_tolerance: f64,
    #[serde(default = "PlaneWaveCheck::default_tol")]
    pub commutation_tolerance: f64,
    #[serde(default = "default_cgl_bands")]
    pub slope_bands: Vec<[f64; 3]>,
}

impl Cgl {
    fn default_ode_tol() -> f64 {
        1e-8
    }
    fn default_energy_tol() -> f64 {
        1e-6
    }
}

/// A fully resolved configuration for one subcommand.
#[derive(Debug, Clone, PartialEq)]
pub enum RunConfig {
    Simulate2d(Simulate),
    Simulate3d(Simulate),
    PlaneWaveCheck(PlaneWaveCheck),
    Picard(Picard),
    Stability(Stability),
    HeatDecay(HeatDecay),
    Contraction(Contraction),
    Scan(Scan),
    Cgl(Cgl),
}

fn cubic_dealias(dealias: &mut f64, explicit: bool) {
    if !explicit {
        *dealias = nsplane_core::cgl::CUBIC_DEALIAS_FRACTION;
    }
}

impl RunConfig {
    pub fn subcommand(&self) -> Subcommand {
        match self {
            RunConfig::Simulate2d(_) => Subcommand::Simulate2d,
            RunConfig::Simulate3d(_) => Subcommand::Simulate3d,
            RunConfig::PlaneWaveCheck(_) => Subcommand::PlanewaveCheck,
            RunConfig::Picard(_) => Subcommand::Picard,
            RunConfig::Stability(_) => Subcommand::Stability,
            RunConfig::HeatDecay(_) => Subcommand::Heatdecay,
            RunConfig::Contraction(_) => Subcommand::Contraction,
            RunConfig::Scan(_) => Subcommand::Scan,
            RunConfig::Cgl(_) => Subcommand::Cgl,
        }
    }

    /// Parses `text` for `sub`, materializes every default and validates.
    pub fn parse(sub: Subcommand, text: &str) -> Result<Self> {
        let raw: toml::Table = toml::from_str(text).context("config is not valid TOML")?;
        let mut cfg = match sub {
            Subcommand::Simulate2d => RunConfig::Simulate2d(decode(text)?),
            Subcommand::Simulate3d => RunConfig::Simulate3d(decode(text)?),
            Subcommand::PlanewaveCheck => RunConfig::PlaneWaveCheck(decode(text)?),
            Subcommand::Picard => RunConfig::Picard(decode(text)?),
            Subcommand::Stability => RunConfig::Stability(decode(text)?),
            Subcommand::Heatdecay => RunConfig::HeatDecay(decode(text)?),
            Subcommand::Contraction => RunConfig::Contraction(decode(text)?),
            Subcommand::Scan => RunConfig::Scan(decode(text)?),
            Subcommand::Cgl => RunConfig::Cgl(decode(text)?),
        };
        cfg.resolve(&raw)?;
        Ok(cfg)
    }

    pub fn from_path(sub: Subcommand, path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(sub, &text)
    }

    fn resolve(&mut self, raw: &toml::Table) -> Result<()> {
        let explicit = |section: &str, key: &str| {
            raw.get(section)
                .and_then(|s| s.as_table())
                .is_some_and(|t| t.contains_key(key))
        };
        match self {
            RunConfig::Simulate2d(s) => resolve_simulate(s, 2)?,
            RunConfig::Simulate3d(s) => resolve_simulate(s, 3)?,
            RunConfig::PlaneWaveCheck(s) => {
                s.planewave.resolve()?;
                s.solver
                    .solver()
                    .validate()
                    .map_err(|e| anyhow!("solver: {e}"))?;
            }
            RunConfig::Picard(s) => {
                s.planewave.resolve()?;
                s.picard.quadrature()?;
                s.solver
                    .solver()
                    .validate()
                    .map_err(|e| anyhow!("solver: {e}"))?;
            }
            RunConfig::Stability(s) => {
                s.planewave.resolve()?;
                bands_monitored(&s.slope_bands, &s.stability.p_set, "stability.p_set")?;
            }
            RunConfig::Contraction(s) => s.planewave.resolve()?,
            RunConfig::HeatDecay(_) => {}
            RunConfig::Scan(s) => {
                if s.grid.points.len() != 3 {
                    bail!("grid.points: the scan runs on a 3D grid");
                }
                s.grid.resolve()?;
            }
            RunConfig::Cgl(s) => {
                s.cgl.config().validate().map_err(|e| anyhow!("cgl: {e}"))?;
                if let Some(g) = s.grid.as_mut() {
                    cubic_dealias(&mut g.dealias, explicit("grid", "dealias"));
                    g.resolve()?;
                }
                if let Some(p) = s.planewave.as_mut() {
                    cubic_dealias(&mut p.dealias, explicit("planewave", "dealias"));
                    p.resolve()?;
                }
                match s.mode {
                    CglMode::Evolve if s.grid.is_none() => {
                        bail!("missing key: grid (required by cgl evolve)")
                    }
                    CglMode::PlanewaveCheck if s.planewave.is_none() => {
                        bail!("missing key: planewave (required by cgl planewave-check)")
                    }
                    CglMode::Stability
                        if s.planewave.is_none() || s.bump.is_none() || s.stability.is_none() =>
                    {
                        bail!("missing key: cgl stability needs planewave, bump and stability sections")
                    }
                    CglMode::Stability => {
                        bands_monitored(&s.slope_bands, &s.cgl.p_set, "cgl.p_set")?
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// The resolved configuration as TOML, readable by [`RunConfig::parse`].
    pub fn to_toml(&self) -> Result<String> {
        Ok(match self {
            RunConfig::Simulate2d(s) | RunConfig::Simulate3d(s) => toml::to_string(s)?,
            RunConfig::PlaneWaveCheck(s) => toml::to_string(s)?,
            RunConfig::Picard(s) => toml::to_string(s)?,
            RunConfig::Stability(s) => toml::to_string(s)?,
            RunConfig::HeatDecay(s) => toml::to_string(s)?,
            RunConfig::Contraction(s) => toml::to_string(s)?,
            RunConfig::Scan(s) => toml::to_string(s)?,
            RunConfig::Cgl(s) => toml::to_string(s)?,
        })
    }
}

fn resolve_simulate(s: &mut Simulate, dim: usize) -> Result<()> {
    if s.grid.points.len() != dim {
        bail!(
            "grid.points: expected {dim} entries, found {}",
            s.grid.points.len()
        );
    }
    s.grid.resolve()?;
    s.solver
        .solver()
        .validate()
        .map_err(|e| anyhow!("solver: {e}"))
}

fn bands_monitored(bands: &[[f64; 3]], p_set: &[f64], key: &str) -> Result<()> {
    for b in bands {
        if !p_set.contains(&b[0]) {
            bail!("slope_bands: p = {} is not in {key}", b[0]);
        }
    }
    Ok(())
}

fn decode<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| anyhow!("config: {}", e.message()))
}
