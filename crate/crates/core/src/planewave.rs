//! Spatial plane waves `phi(x, y, z) = W[h](x, y, z)` built from a
//! two-dimensional profile `h(w, z)` with `w = (x - c y)/sqrt(1 + c^2)`.
//!
//! The embedding is a lattice map: every profile mode lands on exactly one
//! mode of the three-dimensional box, so it is exact up to rounding.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::grid::{signed_index, slot_of, Grid, GridSpec};
use crate::ops;
use crate::solver::{Background, DenseTrajectory, NsStepper, SolverConfig, Stage};

/// Largest fraction of energy allowed off the plane-wave lattice.
pub const OFF_LATTICE_TOLERANCE: f64 = 1e-10;

const COMMENSURABILITY_TOLERANCE: f64 = 1e-9;

/// Rational wave speed `c = num/den` in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Speed {
    num: i64,
    den: i64,
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

impl Speed {
    pub fn new(num: i64, den: i64) -> Result<Self> {
        if den == 0 {
            return Err(Error::InvalidParameter {
                name: "c",
                reason: "denominator must be nonzero",
            });
        }
        let g = gcd(num, den).max(1);
        let sign = if den < 0 { -1 } else { 1 };
        Ok(Self {
            num: sign * num / g,
            den: sign * den / g,
        })
    }

    pub fn zero() -> Self {
        Self { num: 0, den: 1 }
    }

    pub fn integer(c: i64) -> Self {
        Self { num: c, den: 1 }
    }

    pub fn num(&self) -> i64 {
        self.num
    }

    pub fn den(&self) -> i64 {
        self.den
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `sqrt(1 + c^2)`
    pub fn stretch(&self) -> f64 {
        let c = self.value();
        libm::sqrt(1.0 + c * c)
    }
}

impl core::fmt::Display for Speed {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// A profile `h(w, z)` on a two-dimensional grid with axes `(w, z)`.
#[derive(Debug, Clone)]
pub struct WaveProfile {
    pub h: SpectralField,
    pub c: Speed,
    /// Sobolev index used when reporting norms.
    pub s: f64,
}

impl WaveProfile {
    pub fn new(h: SpectralField, c: Speed) -> Result<Self> {
        if h.grid().dim() != 2 || h.components() != 2 || !h.is_real() {
            return Err(Error::ShapeMismatch(
                "profile must be a real 2D field with 2 components",
            ));
        }
        Ok(Self { h, c, s: 1.0 })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.h.grid()
    }

    /// Period `Lambda` of the `w` axis.
    pub fn w_period(&self) -> f64 {
        self.grid().periods()[0]
    }

    pub fn hs_norm(&self) -> Result<f64> {
        ops::hs_norm(&self.h, self.s)
    }
}

/// Smallest 3D periods on which a profile with `w`-period `lambda` and
/// `z`-period `lz` is periodic: `L_x = S lambda`, `L_y = S lambda / |c|`
/// (`L_y = L_x` when `c = 0`).
pub fn minimal_box(c: Speed, lambda: f64, lz: f64) -> [f64; 3] {
    let lx = c.stretch() * lambda;
    let ly = if c.num() == 0 {
        lx
    } else {
        lx / c.value().abs()
    };
    [lx, ly, lz]
}

/// Precomputed lattice map from profile modes to box modes.
#[derive(Debug, Clone)]
pub struct PlaneWaveLattice {
    c: Speed,
    profile: Arc<Grid>,
    target: Arc<Grid>,
    /// `L_x / (S Lambda)`
    px: i64,
    /// `c L_y / (S Lambda)`, zero when `c = 0`.
    qy: i64,
    /// For each flat profile mode, the flat box mode (if representable).
    map: Vec<Option<usize>>,
}

fn integer_ratio(x: f64, what: &'static str) -> Result<i64> {
    let r = libm::round(x);
    if r == 0.0 || (x - r).abs() > COMMENSURABILITY_TOLERANCE * x.abs().max(1.0) {
        return Err(Error::Incommensurable(what));
    }
    Ok(r as i64)
}

impl PlaneWaveLattice {
    /// Checks the commensurability rule: `L_x / (S Lambda)` must be a
    /// positive integer, `c L_y / (S Lambda)` a nonzero integer when
    /// `c != 0`, and the `z` periods must agree.
    pub fn new(c: Speed, profile: &Arc<Grid>, target: &Arc<Grid>) -> Result<Self> {
        if profile.dim() != 2 || target.dim() != 3 {
            return Err(Error::ShapeMismatch(
                "plane waves map 2D profiles to 3D boxes",
            ));
        }
        let lambda = profile.periods()[0];
        let s = c.stretch();
        let [lx, ly, lz] = [
            target.periods()[0],
            target.periods()[1],
            target.periods()[2],
        ];
        if (lz - profile.periods()[1]).abs() > COMMENSURABILITY_TOLERANCE * lz {
            return Err(Error::Incommensurable(
                "z periods of profile and box must agree",
            ));
        }
        let px = integer_ratio(
            lx / (s * lambda),
            "L_x must be an integer multiple of sqrt(1+c^2) * Lambda",
        )?;
        if px < 0 {
            return Err(Error::Incommensurable("L_x must be positive"));
        }
        let qy = if c.num() == 0 {
            0
        } else {
            integer_ratio(
                c.value() * ly / (s * lambda),
                "c * L_y must be an integer multiple of sqrt(1+c^2) * Lambda",
            )?
        };
        let pw = profile.points()[0];
        let pz = profile.points()[1];
        let (nx, ny, nz) = (target.points()[0], target.points()[1], target.points()[2]);
        let mut map = vec![None; profile.len()];
        for ia in 0..pw {
            let a = signed_index(ia, pw);
            for ib in 0..pz {
                let b = signed_index(ib, pz);
                let slot = (|| {
                    let i = slot_of(a * px, nx)?;
                    let j = slot_of(-a * qy, ny)?;
                    let l = slot_of(b, nz)?;
                    Some(target.flatten(&[i, j, l]))
                })();
                map[profile.flatten(&[ia, ib])] = slot;
            }
        }
        Ok(Self {
            c,
            profile: profile.clone(),
            target: target.clone(),
            px,
            qy,
            map,
        })
    }

    /// Lattice for a box built from `spec`.
    pub fn for_spec(c: Speed, profile: &Arc<Grid>, spec: &GridSpec) -> Result<Self> {
        let target = Grid::new(spec.clone())?;
        Self::new(c, profile, &target)
    }

    pub fn speed(&self) -> Speed {
        self.c
    }

    pub fn profile_grid(&self) -> &Arc<Grid> {
        &self.profile
    }

    pub fn target_grid(&self) -> &Arc<Grid> {
        &self.target
    }

    pub fn factors(&self) -> (i64, i64) {
        (self.px, self.qy)
    }

    /// `L_extra = L_x L_y / Lambda`, the ratio of squared `L^2` norms
    /// between `W[h]` and `h`.
    pub fn transverse_length(&self) -> f64 {
        self.target.periods()[0] * self.target.periods()[1] / self.profile.periods()[0]
    }

    fn scale(&self) -> f64 {
        self.target.len() as f64 / self.profile.len() as f64
    }

    /// Lifts each component of a 2D field as a function of `(w, z)`.
    pub fn lift_components(&self, f: &SpectralField) -> Result<SpectralField> {
        if !f.grid().same_as(&self.profile) {
            return Err(Error::ShapeMismatch("field is not on the profile grid"));
        }
        let comps = f.components();
        let n3 = self.target.len();
        let mut out = SpectralField::zeros(&self.target, comps, f.is_real());
        let scale = self.scale();
        // unrepresentable slots (Nyquist) may hold rounding noise only
        let noise = 1e-13 * f.max_coeff();
        for c in 0..comps {
            let src = f.component(c);
            let dst = &mut out.coeffs_mut()[c * n3..(c + 1) * n3];
            for (idx, z) in src.iter().enumerate() {
                match self.map[idx] {
                    Some(t) => dst[t] = *z * scale,
                    None if z.norm() <= noise => {}
                    None => {
                        return Err(Error::Incommensurable(
                            "profile mode is not representable on the box",
                        ))
                    }
                }
            }
        }
        Ok(out)
    }

    /// Left inverse of [`PlaneWaveLattice::lift_components`].
    pub fn restrict_components(&self, f: &SpectralField) -> Result<SpectralField> {
        if !f.grid().same_as(&self.target) {
            return Err(Error::ShapeMismatch("field is not on the box grid"));
        }
        let comps = f.components();
        let n2 = self.profile.len();
        let inv = 1.0 / self.scale();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); comps * n2];
        let mut on = 0.0;
        let mut total = 0.0;
        for c in 0..comps {
            let src = f.component(c);
            total += src.iter().map(|z| z.norm_sqr()).sum::<f64>();
            for (idx, slot) in self.map.iter().enumerate() {
                if let Some(t) = *slot {
                    coeffs[c * n2 + idx] = src[t] * inv;
                    on += src[t].norm_sqr();
                }
            }
        }
        if total > 0.0 && (total - on) / total > OFF_LATTICE_TOLERANCE {
            return Err(Error::NotPlaneWave {
                fraction: (total - on) / total,
            });
        }
        SpectralField::from_coeffs(&self.profile, comps, f.is_real(), coeffs)
    }

    /// `W[h] = (h_1/S, -c h_1/S, h_2)`
    pub fn embed(&self, h: &SpectralField) -> Result<SpectralField> {
        if h.components() != 2 {
            return Err(Error::ShapeMismatch("profile must have 2 components"));
        }
        let lifted = self.lift_components(h)?;
        let n3 = self.target.len();
        let s = self.c.stretch();
        let cv = self.c.value();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); 3 * n3];
        let (h1, h2) = (lifted.component(0), lifted.component(1));
        for i in 0..n3 {
            coeffs[i] = h1[i] / s;
            coeffs[n3 + i] = h1[i] * (-cv / s);
            coeffs[2 * n3 + i] = h2[i];
        }
        SpectralField::from_coeffs(&self.target, 3, h.is_real(), coeffs)
    }

    /// True when every box point sits on a profile grid point, so physical
    /// values can be copied instead of transformed.
    fn broadcast_compatible(&self) -> bool {
        let pw = self.profile.points()[0] as i64;
        let (nx, ny, nz) = (
            self.target.points()[0] as i64,
            self.target.points()[1] as i64,
            self.target.points()[2],
        );
        let y_ok = if self.qy == 0 {
            true
        } else {
            ny == self.qy.abs() * pw
        };
        nx == self.px * pw && y_ok && nz == self.profile.points()[1]
    }

    /// Physical values of `W[h]` on the box.
    pub fn physical(&self, h: &SpectralField) -> Result<Vec<Vec<f64>>> {
        if !self.broadcast_compatible() {
            return Ok(self.embed(h)?.to_physical_real());
        }
        if !h.grid().same_as(&self.profile) || h.components() != 2 {
            return Err(Error::ShapeMismatch(
                "profile must be a 2-component field on the profile grid",
            ));
        }
        let hp = h.to_physical_real();
        let s = self.c.stretch();
        let cv = self.c.value();
        let pw = self.profile.points()[0] as i64;
        let pz = self.profile.points()[1];
        let (nx, ny, nz) = (
            self.target.points()[0],
            self.target.points()[1],
            self.target.points()[2],
        );
        let n3 = self.target.len();
        let mut out = vec![vec![0.0; n3]; 3];
        for i in 0..nx {
            for j in 0..ny {
                // x_i = S Lambda i / N_w and c y_j = sign(q_y) S Lambda j / N_w
                let w = (i as i64 - self.qy.signum() * j as i64).rem_euclid(pw) as usize;
                let base3 = (i * ny + j) * nz;
                let base2 = w * pz;
                for l in 0..nz {
                    let h1 = hp[0][base2 + l];
                    out[0][base3 + l] = h1 / s;
                    out[1][base3 + l] = -cv * h1 / s;
                    out[2][base3 + l] = hp[1][base2 + l];
                }
            }
        }
        Ok(out)
    }

    /// Left inverse of [`PlaneWaveLattice::embed`].
    pub fn extract(&self, phi: &SpectralField) -> Result<SpectralField> {
        if !phi.grid().same_as(&self.target) || phi.components() != 3 {
            return Err(Error::ShapeMismatch("field must be a 3D vector on the box"));
        }
        let n3 = self.target.len();
        let n2 = self.profile.len();
        let s = self.c.stretch();
        let cv = self.c.value();
        let (p1, p2, p3) = (phi.component(0), phi.component(1), phi.component(2));
        let mut on_lattice = vec![false; n3];
        let mut coeffs = vec![Complex64::new(0.0, 0.0); 2 * n2];
        let inv = 1.0 / self.scale();
        let mut off = 0.0;
        for (idx, slot) in self.map.iter().enumerate() {
            if let Some(t) = *slot {
                on_lattice[t] = true;
                coeffs[idx] = (p1[t] - p2[t] * cv) * (inv / s);
                coeffs[n2 + idx] = p3[t] * inv;
                // component transverse to the wave direction
                off += ((p1[t] * cv + p2[t]) / s).norm_sqr();
            }
        }
        let mut total = 0.0;
        for t in 0..n3 {
            let e = p1[t].norm_sqr() + p2[t].norm_sqr() + p3[t].norm_sqr();
            total += e;
            if !on_lattice[t] {
                off += e;
            }
        }
        if total > 0.0 && off / total > OFF_LATTICE_TOLERANCE {
            return Err(Error::NotPlaneWave {
                fraction: off / total,
            });
        }
        SpectralField::from_coeffs(&self.profile, 2, phi.is_real(), coeffs)
    }
}

/// `embed_W` for a profile and a box specification.
pub fn embed_w(prof: &WaveProfile, grid3: &GridSpec) -> Result<SpectralField> {
    PlaneWaveLattice::for_spec(prof.c, prof.grid(), grid3)?.embed(&prof.h)
}

/// Recovers the profile of a plane wave on `profile_grid`.
pub fn extract_profile(
    phi: &SpectralField,
    c: Speed,
    profile_grid: &Arc<Grid>,
) -> Result<WaveProfile> {
    let lattice = PlaneWaveLattice::new(c, profile_grid, phi.grid())?;
    WaveProfile::new(lattice.extract(phi)?, c)
}

/// Turns data `g0(xi, z)`, `xi = x - c y`, into the profile
/// `h = ((g1 - c g2)/S, g3)(S w, z)`; the rescaling of the first argument is
/// a relabeling of the axis period.
pub fn change_of_variables_g_to_h(g0: &SpectralField, c: Speed) -> Result<WaveProfile> {
    if g0.grid().dim() != 2 || g0.components() != 3 || !g0.is_real() {
        return Err(Error::ShapeMismatch(
            "g0 must be a real 2D field with 3 components",
        ));
    }
    let s = c.stretch();
    let cv = c.value();
    let spec = g0.grid().spec();
    let new_spec = GridSpec {
        points: spec.points.clone(),
        periods: vec![spec.periods[0] / s, spec.periods[1]],
        dealias_fraction: spec.dealias_fraction,
    };
    let grid = Grid::new(new_spec)?;
    let n = grid.len();
    let mut coeffs = vec![Complex64::new(0.0, 0.0); 2 * n];
    let (g1, g2, g3) = (g0.component(0), g0.component(1), g0.component(2));
    for i in 0..n {
        coeffs[i] = (g1[i] - g2[i] * cv) / s;
        coeffs[n + i] = g3[i];
    }
    WaveProfile::new(SpectralField::from_coeffs(&grid, 2, true, coeffs)?, c)
}

/// The 3D field `g(x - c y, z)` for data on the `(xi, z)` grid.
pub fn lift_xi_data(g0: &SpectralField, c: Speed, grid3: &Arc<Grid>) -> Result<SpectralField> {
    // a function of xi with period S Lambda is a function of w with period Lambda
    let spec = g0.grid().spec();
    let relabeled = Grid::new(GridSpec {
        points: spec.points.clone(),
        periods: vec![spec.periods[0] / c.stretch(), spec.periods[1]],
        dealias_fraction: spec.dealias_fraction,
    })?;
    let g = SpectralField::from_coeffs(
        &relabeled,
        g0.components(),
        g0.is_real(),
        g0.coeffs().to_vec(),
    )?;
    PlaneWaveLattice::new(c, &relabeled, grid3)?.lift_components(&g)
}

/// `W[h] = W[P h] + grad Psi~` with `Psi~(x, y, z) = Psi(w, z)`.
#[derive(Debug, Clone)]
pub struct XcsDecomposition {
    pub solenoidal_profile: WaveProfile,
    /// `Psi` on the profile grid, with `h - P h = grad Psi`.
    pub potential: SpectralField,
}

impl XcsDecomposition {
    /// `Psi~` on the box.
    pub fn potential_3d(&self, lattice: &PlaneWaveLattice) -> Result<SpectralField> {
        lattice.lift_components(&self.potential)
    }

    /// `W[P h] + grad Psi~`
    pub fn recompose(&self, lattice: &PlaneWaveLattice) -> Result<SpectralField> {
        let mut phi = lattice.embed(&self.solenoidal_profile.h)?;
        let grad = ops::gradient(&self.potential_3d(lattice)?)?;
        phi.axpy(1.0, &grad)?;
        Ok(phi)
    }
}

/// 2D Helmholtz potential: `Psi^ = -i k . h^ / |k|^2`.
fn helmholtz_potential(h: &SpectralField) -> SpectralField {
    let grid = h.grid().clone();
    let n = grid.len();
    let mut out = SpectralField::zeros(&grid, 1, h.is_real());
    let (h1, h2) = (h.component(0), h.component(1));
    ops::for_each_wavevector(&grid, |idx, k| {
        let k2 = grid.k2()[idx];
        if k2 == 0.0 {
            return;
        }
        let dot = h1[idx] * k[0] + h2[idx] * k[1];
        out.coeffs_mut()[idx] = Complex64::new(0.0, -1.0) * dot / k2;
    });
    debug_assert_eq!(out.coeffs().len(), n);
    out
}

pub fn decompose_xcs(
    phi: &SpectralField,
    c: Speed,
    profile_grid: &Arc<Grid>,
) -> Result<XcsDecomposition> {
    let prof = extract_profile(phi, c, profile_grid)?;
    let solenoidal = ops::leray_project(&prof.h)?;
    let potential = helmholtz_potential(&prof.h);
    Ok(XcsDecomposition {
        solenoidal_profile: WaveProfile {
            h: solenoidal,
            c,
            s: prof.s,
        },
        potential,
    })
}

/// Background `W[h(t)]` driven by a recorded profile trajectory.
pub struct PlaneWaveBackground {
    profile: DenseTrajectory,
    lattice: PlaneWaveLattice,
}

impl PlaneWaveBackground {
    pub fn new(profile: DenseTrajectory, lattice: PlaneWaveLattice) -> Result<Self> {
        if !profile.grid().same_as(lattice.profile_grid()) {
            return Err(Error::ShapeMismatch(
                "profile trajectory grid differs from the lattice",
            ));
        }
        Ok(Self { profile, lattice })
    }

    /// Records the profile evolution from `prof0`.
    pub fn record(
        prof0: &WaveProfile,
        lattice: PlaneWaveLattice,
        cfg: &SolverConfig,
    ) -> Result<Self> {
        Self::new(DenseTrajectory::record(&prof0.h, cfg)?, lattice)
    }

    pub fn lattice(&self) -> &PlaneWaveLattice {
        &self.lattice
    }

    pub fn profile(&self) -> &DenseTrajectory {
        &self.profile
    }
}

impl Background for PlaneWaveBackground {
    fn grid(&self) -> &Arc<Grid> {
        self.lattice.target_grid()
    }
    fn dt(&self) -> f64 {
        self.profile.dt()
    }
    fn steps(&self) -> usize {
        self.profile.steps()
    }
    fn nu(&self) -> f64 {
        self.profile.nu()
    }
    fn stage_state(&self, step: usize, stage: Stage) -> Result<SpectralField> {
        self.lattice.embed(&self.profile.stage_state(step, stage)?)
    }
    fn stage_physical(&self, step: usize, stage: Stage) -> Result<Vec<Vec<f64>>> {
        self.lattice
            .physical(&self.profile.stage_state(step, stage)?)
    }
}

/// Largest relative `L^2` distance between the 3D evolution of `W[h0]` and
/// `W` of the 2D evolution of `h0`, over the sampled times.
pub fn commutation_check(prof0: &WaveProfile, cfg: &SolverConfig, grid3: &GridSpec) -> Result<f64> {
    let lattice = PlaneWaveLattice::for_spec(prof0.c, prof0.grid(), grid3)?;
    let mut u3 = lattice.embed(&prof0.h)?;
    let mut h = prof0.h.clone();
    let stepper2 = NsStepper::new(prof0.grid(), cfg)?;
    let stepper3 = NsStepper::new(lattice.target_grid(), cfg)?;
    let mut worst = 0.0f64;
    let steps = cfg.steps();
    for n in 0..steps {
        let t = cfg.time(n);
        h = stepper2.step_with_stages(&h, t, None)?;
        u3 = stepper3.step_with_stages(&u3, t, None)?;
        if (n + 1) % cfg.snapshot_stride == 0 || n + 1 == steps {
            let embedded = lattice.embed(&h)?;
            worst = worst.max(u3.relative_distance(&embedded)?);
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileDecayReport {
    /// `(t, |h(t)|_2, |h(t)|_inf)` per sample.
    pub samples: Vec<(f64, f64, f64)>,
    pub strictly_decreasing: bool,
    /// First time at which `|h|_2` reaches `delta`, interpolated
    /// log-linearly between samples.
    pub t0: Option<f64>,
    /// `max_{t > t0} |h(t)|_inf (t - t0)^{1/2} / (2 delta)`
    pub envelope_ratio: Option<f64>,
}

/// Evolves the profile and reports the energy decay and the time it drops
/// below `delta`.
pub fn profile_l2_decay_check(
    prof0: &WaveProfile,
    cfg: &SolverConfig,
    delta: f64,
) -> Result<ProfileDecayReport> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter {
            name: "delta",
            reason: "threshold must be positive",
        });
    }
    let stepper = NsStepper::new(prof0.grid(), cfg)?;
    let mut h = prof0.h.clone();
    let sup = |f: &SpectralField| {
        f.pointwise_magnitude()
            .iter()
            .fold(0.0f64, |m, &x| m.max(x))
    };
    let mut samples = vec![(0.0, h.l2_norm(), sup(&h))];
    let steps = cfg.steps();
    for n in 0..steps {
        h = stepper.step_with_stages(&h, cfg.time(n), None)?;
        if (n + 1) % cfg.snapshot_stride == 0 || n + 1 == steps {
            samples.push((cfg.time(n + 1), h.l2_norm(), sup(&h)));
        }
    }
    let strictly_decreasing = samples.windows(2).all(|w| w[1].1 < w[0].1 || w[0].1 == 0.0);
    let mut t0 = None;
    for (i, s) in samples.iter().enumerate() {
        if s.1 <= delta {
            t0 = Some(if i == 0 || s.1 == 0.0 {
                s.0
            } else {
                let (ta, ea) = (samples[i - 1].0, samples[i - 1].1);
                let (tb, eb) = (s.0, s.1);
                let r = libm::log(ea / delta) / libm::log(ea / eb);
                ta + r * (tb - ta)
            });
            break;
        }
    }
    let envelope_ratio = t0.map(|t0| {
        samples
            .iter()
            .filter(|s| s.0 > t0)
            .map(|s| s.2 * libm::sqrt(s.0 - t0) / (2.0 * delta))
            .fold(0.0, f64::max)
    });
    Ok(ProfileDecayReport {
        samples,
        strictly_decreasing,
        t0,
        envelope_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn profile_grid(n: usize, lambda: f64, lz: f64) -> Arc<Grid> {
        Grid::new(GridSpec::new(&[n, n], &[lambda, lz])).unwrap()
    }

    fn random_profile(grid: &Arc<Grid>, seed: u64, c: Speed) -> WaveProfile {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut h = SpectralField::random_band_limited(grid, 2, 3, &mut rng);
        ops::leray_project_in_place(&mut h).unwrap();
        WaveProfile::new(h, c).unwrap()
    }

    fn box_for(c: Speed, grid: &Arc<Grid>, n: usize) -> GridSpec {
        GridSpec::new(
            &[n, n, n],
            &minimal_box(c, grid.periods()[0], grid.periods()[1]),
        )
    }

    #[test]
    fn speeds_reduce() {
        let s = Speed::new(2, -4).unwrap();
        assert_eq!((s.num(), s.den()), (-1, 2));
        assert!(Speed::new(1, 0).is_err());
        assert!((Speed::integer(1).stretch() - libm::sqrt(2.0)).abs() < 1e-15);
    }

    #[test]
    fn zero_speed_degenerates() {
        let g = profile_grid(8, 2.0 * PI, 2.0 * PI);
        let prof = random_profile(&g, 1, Speed::zero());
        let spec = GridSpec::cube(3, 8);
        let phi = embed_w(&prof, &spec).unwrap();
        let h = prof.h.to_physical_real();
        let p = phi.to_physical_real();
        let grid3 = phi.grid().clone();
        for idx in 0..grid3.len() {
            let mut s = [0usize; 3];
            grid3.unflatten(idx, &mut s);
            let k = g.flatten(&[s[0], s[2]]);
            assert!((p[0][idx] - h[0][k]).abs() < 1e-13);
            assert!(p[1][idx].abs() < 1e-13);
            assert!((p[2][idx] - h[1][k]).abs() < 1e-13);
        }
    }

    #[test]
    fn pointwise_agreement_for_unit_speed() {
        let c = Speed::integer(1);
        let g = profile_grid(16, 2.0 * PI, 2.0 * PI);
        let prof = random_profile(&g, 2, c);
        let phi = embed_w(&prof, &box_for(c, &g, 16)).unwrap();
        let s = c.stretch();
        let p = phi.to_physical_real();
        let grid3 = phi.grid().clone();
        // evaluate the profile's Fourier series directly at w = (x - y)/S
        let h = &prof.h;
        for idx in (0..grid3.len()).step_by(97) {
            let x = grid3.coordinate(idx);
            let w = (x[0] - x[1]) / s;
            let mut val = [0.0; 2];
            for m in 0..g.len() {
                let k = g.wavevector(m);
                let e = Complex64::new(0.0, k[0] * w + k[1] * x[2]).exp();
                for (comp, v) in val.iter_mut().enumerate() {
                    *v += (h.component(comp)[m] * e).re / g.len() as f64;
                }
            }
            assert!((p[0][idx] - val[0] / s).abs() < 1e-12);
            assert!((p[1][idx] + val[0] / s).abs() < 1e-12);
            assert!((p[2][idx] - val[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn single_mode_coefficients() {
        let c = Speed::integer(1);
        let g = profile_grid(8, 2.0 * PI, 2.0 * PI);
        let h = SpectralField::from_fn(&g, 2, |x, o| {
            o[0] = libm::cos(x[1]);
            o[1] = 0.0;
        })
        .unwrap();
        let lattice = PlaneWaveLattice::for_spec(c, &g, &box_for(c, &g, 8)).unwrap();
        let phi = lattice.embed(&h).unwrap();
        let scale = lattice.target_grid().len() as f64 / g.len() as f64;
        let src = g.flatten(&[0, 1]);
        let dst = lattice.target_grid().flatten(&[0, 0, 1]);
        let r = 1.0 / libm::sqrt(2.0);
        assert!((phi.component(0)[dst] - h.component(0)[src] * (r * scale)).norm() < 1e-13);
        assert!((phi.component(1)[dst] + h.component(0)[src] * (r * scale)).norm() < 1e-13);
    }

    #[test]
    fn round_trip_and_divergence() {
        for (num, den) in [(0, 1), (1, 1), (1, 2)] {
            let c = Speed::new(num, den).unwrap();
            let g = profile_grid(16, 3.0, 5.0);
            let prof = random_profile(&g, 3, c);
            let lattice = PlaneWaveLattice::for_spec(c, &g, &box_for(c, &g, 16)).unwrap();
            let phi = lattice.embed(&prof.h).unwrap();
            assert!(ops::divergence_residual(&phi).unwrap() < 1e-13);
            let back = lattice.extract(&phi).unwrap();
            assert!(back.relative_distance(&prof.h).unwrap() < 1e-13);
            // isometry
            let ratio = phi.l2_norm() / prof.h.l2_norm();
            assert!((ratio - libm::sqrt(lattice.transverse_length())).abs() < 1e-12 * ratio);
            // projection compatibility on a field with a gradient part
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let mixed = SpectralField::random_band_limited(&g, 2, 3, &mut rng);
            let a = ops::leray_project(&lattice.embed(&mixed).unwrap()).unwrap();
            let b = lattice.embed(&ops::leray_project(&mixed).unwrap()).unwrap();
            assert!(a.relative_distance(&b).unwrap() < 1e-13);
        }
    }

    #[test]
    fn broadcast_matches_transform() {
        for (num, den, n3) in [(0, 1, 16), (1, 1, 16), (1, 2, 16), (-1, 1, 16), (1, 1, 32)] {
            let c = Speed::new(num, den).unwrap();
            let g = profile_grid(16, 3.0, 5.0);
            let prof = random_profile(&g, 4, c);
            let lattice = PlaneWaveLattice::for_spec(c, &g, &box_for(c, &g, n3)).unwrap();
            let fast = lattice.physical(&prof.h).unwrap();
            let slow = lattice.embed(&prof.h).unwrap().to_physical_real();
            for (a, b) in fast.iter().zip(&slow) {
                for (x, y) in a.iter().zip(b) {
                    assert!((x - y).abs() < 1e-12, "c={num}/{den}");
                }
            }
        }
    }

    #[test]
    fn generic_field_is_rejected() {
        let c = Speed::integer(1);
        let g = profile_grid(8, 2.0 * PI, 2.0 * PI);
        let spec = box_for(c, &g, 8);
        let grid3 = Grid::new(spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = SpectralField::random_band_limited(&grid3, 3, 2, &mut rng);
        match extract_profile(&f, c, &g) {
            Err(Error::NotPlaneWave { fraction }) => assert!(fraction > 0.5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn incommensurable_box_is_rejected() {
        let c = Speed::new(1, 3).unwrap();
        let g = profile_grid(8, 2.0 * PI, 2.0 * PI);
        assert!(matches!(
            PlaneWaveLattice::for_spec(c, &g, &GridSpec::cube(3, 8)),
            Err(Error::Incommensurable(_))
        ));
    }

    #[test]
    fn change_of_variables_examples() {
        let g = profile_grid(8, 2.0 * PI, 2.0 * PI);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g0 = SpectralField::random_band_limited(&g, 3, 2, &mut rng);
        let h = change_of_variables_g_to_h(&g0, Speed::zero()).unwrap();
        assert_eq!(h.h.component(0), g0.component(0));
        assert_eq!(h.h.component(1), g0.component(2));
        assert_eq!(h.grid().periods(), g.periods());

        // slaved first component: g1 = -c g2... i.e. (g1, g2) parallel to (1, -c)
        let c = Speed::new(1, 2).unwrap();
        let a = SpectralField::random_band_limited(&g, 1, 2, &mut rng);
        let b = SpectralField::random_band_limited(&g, 1, 2, &mut rng);
        let n = g.len();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); 3 * n];
        for i in 0..n {
            coeffs[i] = a.coeffs()[i];
            coeffs[n + i] = a.coeffs()[i] * -c.value();
            coeffs[2 * n + i] = b.coeffs()[i];
        }
        let gs = SpectralField::from_coeffs(&g, 3, true, coeffs).unwrap();
        let prof = change_of_variables_g_to_h(&gs, c).unwrap();
        let spec = box_for(c, prof.grid(), 8);
        let phi = embed_w(&prof, &spec).unwrap();
        let lifted = lift_xi_data(&gs, c, phi.grid()).unwrap();
        assert!(phi.relative_distance(&lifted).unwrap() < 1e-13);

        // g1 = c g2 cancels h1
        let mut coeffs = vec![Complex64::new(0.0, 0.0); 3 * n];
        for i in 0..n {
            coeffs[i] = a.coeffs()[i] * c.value();
            coeffs[n + i] = a.coeffs()[i];
        }
        let gc = SpectralField::from_coeffs(&g, 3, true, coeffs).unwrap();
        let prof = change_of_variables_g_to_h(&gc, c).unwrap();
        assert!(prof.h.component(0).iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn xcs_decomposition() {
        let c = Speed::integer(1);
        let g = profile_grid(16, 2.0 * PI, 2.0 * PI);
        let lattice = PlaneWaveLattice::for_spec(c, &g, &box_for(c, &g, 16)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mixed = SpectralField::random_band_limited(&g, 2, 3, &mut rng);
        let phi = lattice.embed(&mixed).unwrap();
        let d = decompose_xcs(&phi, c, &g).unwrap();
        assert!(
            d.recompose(&lattice)
                .unwrap()
                .relative_distance(&phi)
                .unwrap()
                < 1e-13
        );

        let sol = random_profile(&g, 8, c);
        let d = decompose_xcs(&lattice.embed(&sol.h).unwrap(), c, &g).unwrap();
        assert!(d.potential.max_coeff() < 1e-12 * sol.h.max_coeff());

        // hand split of two modes: h = (cos x, 0) is a pure gradient of sin x,
        // h = (sin z, 0) is solenoidal
        let h = SpectralField::from_fn(&g, 2, |x, o| {
            o[0] = libm::cos(x[0]) + libm::sin(x[1]);
            o[1] = 0.0;
        })
        .unwrap();
        let d = decompose_xcs(&lattice.embed(&h).unwrap(), c, &g).unwrap();
        let psi = SpectralField::from_fn(&g, 1, |x, o| o[0] = libm::sin(x[0])).unwrap();
        assert!(d.potential.relative_distance(&psi).unwrap() < 1e-13);
        let sol = SpectralField::from_fn(&g, 2, |x, o| {
            o[0] = libm::sin(x[1]);
            o[1] = 0.0;
        })
        .unwrap();
        assert!(d.solenoidal_profile.h.relative_distance(&sol).unwrap() < 1e-13);
    }

    #[test]
    fn zero_profile_commutes_trivially() {
        let c = Speed::integer(1);
        let g = profile_grid(8, 2.0 * PI, 2.0 * PI);
        let prof = WaveProfile::new(SpectralField::zero_vector(&g), c).unwrap();
        let d =
            commutation_check(&prof, &SolverConfig::new(0.01, 0.05), &box_for(c, &g, 8)).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn taylor_green_profile_decay_time() {
        let g = profile_grid(16, 2.0 * PI, 2.0 * PI);
        let h = SpectralField::from_fn(&g, 2, |x, o| {
            o[0] = libm::cos(x[0]) * libm::sin(x[1]);
            o[1] = -libm::sin(x[0]) * libm::cos(x[1]);
        })
        .unwrap();
        let h0 = h.l2_norm();
        let delta = h0 * 0.1;
        let prof = WaveProfile::new(h, Speed::zero()).unwrap();
        let mut cfg = SolverConfig::new(1e-2, 2.0);
        cfg.snapshot_stride = 10;
        let rep = profile_l2_decay_check(&prof, &cfg, delta).unwrap();
        assert!(rep.strictly_decreasing);
        let expected = libm::log(h0 / delta) / 2.0;
        assert!((rep.t0.unwrap() - expected).abs() < 1e-8);

        let zero = WaveProfile::new(SpectralField::zero_vector(&g), Speed::zero()).unwrap();
        let rep = profile_l2_decay_check(&zero, &cfg, 1e-3).unwrap();
        assert_eq!(rep.t0, Some(0.0));
    }
}
