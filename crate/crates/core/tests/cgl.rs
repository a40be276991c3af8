use std::sync::Arc;

use nsplane_core::cgl::{
    cgl_commutation_check, cgl_energy_identity_check, cgl_evolve, cgl_profile_envelope,
    cgl_semigroup, cgl_stability_run, CglConfig, CglStabilityConfig, CUBIC_DEALIAS_FRACTION,
};
use nsplane_core::error::Error;
use nsplane_core::experiments::{BumpShape, BumpSpec};
use nsplane_core::planewave::{minimal_box, Speed};
use nsplane_core::{Grid, GridSpec, SpectralField};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_profile(grid: &Arc<Grid>, amp: f64, seed: u64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = SpectralField::random_complex_band_limited(grid, 3, &mut rng);
    let n = f.l2_norm();
    f.scale(amp / n);
    f
}

#[test]
fn energy_identity_linear_and_nonlinear() {
    let grid = Grid::new(GridSpec::cube(2, 32).with_dealias(CUBIC_DEALIAS_FRACTION)).unwrap();
    let f0 = random_profile(&grid, 3.0, 1);
    let mut cfg = CglConfig::new(0.5, 1.0, 1e-3, 0.05);
    cfg.nonlinear = false;
    let linear = cgl_energy_identity_check(&cgl_evolve(&f0, &cfg).unwrap()).unwrap();
    assert!(linear.max_defect < 1e-10, "{}", linear.max_defect);
    cfg.nonlinear = true;
    let full = cgl_energy_identity_check(&cgl_evolve(&f0, &cfg).unwrap()).unwrap();
    assert!(full.max_defect < 1e-6, "{}", full.max_defect);
    assert!(full.header.contains("squared"));
}

#[test]
fn small_mode_follows_linear_semigroup() {
    let grid = Grid::new(GridSpec::cube(2, 16).with_dealias(CUBIC_DEALIAS_FRACTION)).unwrap();
    let a = 1e-3;
    let f0 = SpectralField::from_modes(&grid, 1, false, |k, _| {
        if k[0] == 1.0 && k[1] == 2.0 {
            Complex64::new(a, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let cfg = CglConfig::new(0.5, 1.0, 1e-3, 0.5);
    let u = cgl_evolve(&f0, &cfg).unwrap().last;
    let lin = cgl_semigroup(&f0, 0.5, 0.5).unwrap();
    let amp = nsplane_core::ops::lp_norm(&f0, f64::INFINITY).unwrap();
    // cubic correction of size |a|^3 t
    assert!(u.minus(&lin).unwrap().l2_norm() / f0.l2_norm() < 2.0 * amp * amp * 0.5);
}

#[test]
fn planewave_commutation() {
    let profile = Grid::new(GridSpec::cube(2, 16).with_dealias(CUBIC_DEALIAS_FRACTION)).unwrap();
    let f0 = random_profile(&profile, 1.0, 2);
    let cfg = CglConfig::new(0.5, 1.0, 2e-3, 0.1);
    for c in [Speed::zero(), Speed::integer(1), Speed::new(1, 2).unwrap()] {
        let b = minimal_box(c, profile.periods()[0], profile.periods()[1]);
        let spec = GridSpec::new(&[16, 32, 16], &b).with_dealias(CUBIC_DEALIAS_FRACTION);
        let d = cgl_commutation_check(&f0, c, &cfg, &spec).unwrap();
        assert!(d < 1e-12, "c = {c}: {d}");
    }
}

#[test]
fn constant_in_y_for_zero_speed() {
    let profile = Grid::new(GridSpec::cube(2, 8).with_dealias(CUBIC_DEALIAS_FRACTION)).unwrap();
    let f0 = random_profile(&profile, 1.0, 3);
    let spec = GridSpec::cube(3, 8).with_dealias(CUBIC_DEALIAS_FRACTION);
    let u = nsplane_core::cgl::cgl_embed_planewave(&f0, Speed::zero(), &spec).unwrap();
    let pu = u.to_physical_complex().swap_remove(0);
    let pf = f0.to_physical_complex().swap_remove(0);
    for i in 0..8 {
        for j in 0..8 {
            for l in 0..8 {
                assert!((pu[(i * 8 + j) * 8 + l] - pf[i * 8 + l]).norm() < 1e-13);
            }
        }
    }
}

fn stability(v0_norm: f64) -> CglStabilityConfig {
    let profile =
        Grid::new(GridSpec::new(&[16, 16], &[16.0, 16.0]).with_dealias(CUBIC_DEALIAS_FRACTION))
            .unwrap();
    let mut cgl = CglConfig::new(0.5, 1.0, 0.01, 0.5);
    cgl.p_set = vec![3.0, 6.0, f64::INFINITY];
    CglStabilityConfig {
        cgl,
        profile: random_profile(&profile, 0.5, 4),
        c: Speed::zero(),
        bump: BumpSpec {
            radius: 1.0,
            center: None,
            direction: [0.0, 0.0, 1.0],
            shape: BumpShape::Polynomial,
        },
        v0_norm,
        delta: 0.2,
        profile_dt: 0.05,
        max_profile_time: 100.0,
        grid3: GridSpec::cube(3, 32)
            .with_periods(&[16.0; 3])
            .with_dealias(CUBIC_DEALIAS_FRACTION),
        window: (0.05, 0.5),
    }
}

#[test]
fn stability_run_small_box() {
    let out = cgl_stability_run(&stability(1e-3)).unwrap();
    assert!(out.t_delta > 0.0);
    assert!(!out.degraded);
    let p6 = out.fit_for(6.0).unwrap();
    assert!(p6.slope < 0.0);
    let zero = cgl_stability_run(&stability(0.0)).unwrap();
    assert!(zero.rows.iter().all(|r| r.energy == 0.0));
    assert!(matches!(
        cgl_stability_run(&stability(1e4)),
        Err(Error::SmallnessViolated { .. })
    ));
}

#[test]
fn profile_envelopes_are_bounded() {
    let grid = Grid::new(GridSpec::cube(2, 32).with_dealias(CUBIC_DEALIAS_FRACTION)).unwrap();
    let f0 = random_profile(&grid, 0.1, 5);
    let env = cgl_profile_envelope(&f0, &CglConfig::new(0.5, 1.0, 1e-2, 2.0)).unwrap();
    assert_eq!(env.len(), 3);
    for e in env {
        assert!(e.sup.is_finite() && e.last <= e.sup);
    }
}
