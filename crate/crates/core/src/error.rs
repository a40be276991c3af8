use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(&'static str),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(&'static str),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
    },
    #[error("CFL violation at t = {t}: dt = {dt} exceeds bound {bound}")]
    CflViolation { t: f64, dt: f64, bound: f64 },
    #[error("non-finite value detected at t = {t}")]
    NonFinite { t: f64 },
    #[error("incommensurable plane wave: {0}")]
    Incommensurable(&'static str),
    #[error("field is not a plane wave for this speed: off-lattice energy fraction {fraction:e}")]
    NotPlaneWave { fraction: f64 },
    #[error("background trajectory does not cover t = {t} (horizon {horizon})")]
    HorizonMismatch { t: f64, horizon: f64 },
    #[error("Picard iterates diverge: W ratio {ratio} at iteration {iteration}")]
    PicardDiverged { iteration: usize, ratio: f64 },
    #[error("smallness violated at t = {t}: |v|_3 = {norm} exceeds {limit}")]
    SmallnessViolated { t: f64, norm: f64, limit: f64 },
    #[error("nonpositive value {value} at t = {t} inside the fit window")]
    NonPositiveSeries { t: f64, value: f64 },
    #[error("fit window holds {found} samples, at least {needed} required")]
    TooFewSamples { found: usize, needed: usize },
}
