use std::sync::Arc;

use nsplane_core::error::Error;
use nsplane_core::experiments::{
    bump_field, evolved_gaussian, gaussian_lp_norm, kato_smallness_scan, phi_contraction_check,
    stability_run, BumpSpec, StabilityRunConfig,
};
use nsplane_core::ops;
use nsplane_core::planewave::{Speed, WaveProfile};
use nsplane_core::solver::SolverConfig;
use nsplane_core::{Grid, GridSpec, SpectralField};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn profile(n: usize, period: f64, amp: f64, c: Speed, seed: u64) -> WaveProfile {
    let grid = Grid::new(GridSpec::new(&[n, n], &[period, period])).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = SpectralField::random_band_limited(&grid, 2, 2, &mut rng);
    ops::leray_project_in_place(&mut h).unwrap();
    let norm = h.l2_norm();
    h.scale(amp / norm);
    WaveProfile::new(h, c).unwrap()
}

fn small_run(eps: f64) -> StabilityRunConfig {
    StabilityRunConfig {
        profile: profile(16, 16.0, 0.5, Speed::zero(), 3),
        bump: BumpSpec::polynomial(1.0),
        eps,
        delta: 0.2,
        p_set: vec![3.0, 6.0, f64::INFINITY],
        horizon: 1.0,
        dt: 0.05,
        profile_dt: 0.05,
        max_profile_time: 100.0,
        grid3: GridSpec::cube(3, 32).with_periods(&[16.0; 3]),
        window: (0.1, 1.0),
        snapshot_stride: 1,
        nu: 1.0,
    }
}

#[test]
fn closed_form_gaussian_matches_spectral_heat_flow() {
    // Gaussian narrow enough to be periodic to rounding on a box of side 40
    let grid = Grid::new(GridSpec::cube(3, 64).with_periods(&[40.0; 3])).unwrap();
    let sigma2 = 2.0;
    let g = SpectralField::from_fn(&grid, 1, |x, o| {
        let r2: f64 = x.iter().map(|&xi| (xi - 20.0) * (xi - 20.0)).sum();
        o[0] = (-r2 / (2.0 * sigma2)).exp();
    })
    .unwrap();
    for t in [0.5, 2.0, 4.0] {
        let evolved = ops::heat_semigroup(&g, t, 1.0).unwrap();
        let (amp, s2) = evolved_gaussian(sigma2, t, 3);
        for p in [2.0, 3.0, 6.0, f64::INFINITY] {
            let numeric = ops::lp_norm(&evolved, p).unwrap();
            let exact = gaussian_lp_norm(amp, s2, p, 3);
            assert!(
                (numeric - exact).abs() < 1e-6 * exact,
                "t={t} p={p}: {numeric} vs {exact}"
            );
        }
    }
}

#[test]
fn stability_run_on_a_small_box() {
    let cfg = small_run(1e-3);
    let out = stability_run(&cfg).unwrap();
    assert!(out.t_delta > 0.0);
    assert!(out.profile_l2_at_injection <= cfg.delta);
    assert!(!out.degraded);
    assert_eq!(out.fits.len(), 3);
    assert!((out.initial_l3 - 1e-3).abs() < 1e-15);
    // decay, never growth, in every monitored norm
    for fit in &out.fits {
        assert!(fit.slope < 0.0, "{fit:?}");
    }
    assert!(out.envelopes.iter().all(|e| e.1.is_finite() && e.1 > 0.0));
}

#[test]
fn stability_run_rejects_oversized_bumps_and_large_eps() {
    let mut cfg = small_run(1e-3);
    cfg.bump.radius = 2.0;
    assert!(matches!(
        stability_run(&cfg),
        Err(Error::InvalidParameter { .. })
    ));
    let cfg = small_run(1e4);
    assert!(matches!(
        stability_run(&cfg),
        Err(Error::SmallnessViolated { .. })
    ));
}

#[test]
fn short_windows_fall_back_to_envelopes() {
    let mut cfg = small_run(1e-3);
    cfg.window = (0.2, 1.0);
    let out = stability_run(&cfg).unwrap();
    assert!(out.degraded);
    assert!(out.fits.is_empty());
    assert_eq!(out.envelopes.len(), 3);
}

#[test]
fn duhamel_map_contracts_on_a_small_ball() {
    let mut cfg = small_run(1e-3);
    cfg.grid3 = GridSpec::cube(3, 16).with_periods(&[16.0; 3]);
    cfg.horizon = 0.5;
    let rep = phi_contraction_check(&cfg, 4, 1e-2, 11).unwrap();
    assert_eq!(rep.pairs.len(), 4);
    assert!(rep.is_contraction(), "{:?}", rep.pairs);
    assert!(rep.max_ratio < 0.5);
    let again = phi_contraction_check(&cfg, 4, 1e-2, 11).unwrap();
    assert_eq!(rep, again);
}

#[test]
fn kato_scan_small_amplitudes_stay_bounded() {
    let grid = GridSpec::cube(3, 32).with_periods(&[16.0; 3]);
    let mut cfg = SolverConfig::new(0.05, 1.0);
    cfg.snapshot_stride = 2;
    let rep = kato_smallness_scan(&grid, &[1e-3, 1e-2], &BumpSpec::polynomial(1.0), &cfg).unwrap();
    assert_eq!(rep.entries.len(), 2);
    assert!(rep.entries.iter().all(|e| e.completed));
    assert_eq!(rep.frontier, Some(1e-2));
    // nontrivial data, smaller envelope for the smaller amplitude
    let start: Vec<f64> = rep.entries.iter().map(|e| e.envelope[1].1).collect();
    assert!(start[0] > 0.0 && start[0] < start[1]);
}

#[test]
fn bump_respects_minimum_image() {
    let grid: Arc<Grid> = Grid::new(GridSpec::cube(3, 32).with_periods(&[16.0; 3])).unwrap();
    let mut spec = BumpSpec::polynomial(1.0);
    let centered = bump_field(&grid, &spec, None).unwrap();
    spec.center = Some([0.0, 0.0, 0.0]);
    let cornered = bump_field(&grid, &spec, None).unwrap();
    // same field up to a shift, so every norm agrees
    for p in [2.0, 3.0, f64::INFINITY] {
        let a = ops::lp_norm(&centered, p).unwrap();
        let b = ops::lp_norm(&cornered, p).unwrap();
        assert!((a - b).abs() < 1e-12 * a);
    }
}
