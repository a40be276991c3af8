use nsplane_core::fft::FftNd;
use nsplane_core::ops;
use nsplane_core::planewave::{PlaneWaveLattice, Speed};
use nsplane_core::{Grid, GridSpec, SpectralField};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn size() -> impl Strategy<Value = usize> {
    prop::sample::select(vec![1usize, 2, 3, 4, 6, 8, 9, 12, 16, 18, 24, 27])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fft_round_trips(shape in prop::collection::vec(size(), 1..=3), seed in any::<u64>()) {
        let plan = FftNd::new(&shape).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Complex64> = (0..plan.total())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let mut y = x.clone();
        plan.forward(&mut y);
        // Parseval
        let ex: f64 = x.iter().map(|z| z.norm_sqr()).sum();
        let ey: f64 = y.iter().map(|z| z.norm_sqr()).sum::<f64>() / plan.total() as f64;
        prop_assert!((ex - ey).abs() <= 1e-12 * ex.max(1.0));
        plan.inverse(&mut y);
        for (a, b) in x.iter().zip(&y) {
            prop_assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn leray_is_an_idempotent_solenoidal_projection(
        n in prop::sample::select(vec![8usize, 12, 16]),
        band in 1i64..4,
        seed in any::<u64>(),
    ) {
        let grid = Grid::new(GridSpec::cube(3, n)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = SpectralField::random_band_limited(&grid, 3, band, &mut rng);
        let p = ops::leray_project(&f).unwrap();
        prop_assert!(ops::divergence_residual(&p).unwrap() < 1e-13);
        let pp = ops::leray_project(&p).unwrap();
        prop_assert!(pp.minus(&p).unwrap().l2_norm() <= 1e-14 * p.l2_norm().max(1.0));
        // orthogonal projection never increases the norm
        prop_assert!(p.l2_norm() <= f.l2_norm() * (1.0 + 1e-14));
    }

    #[test]
    fn plane_wave_embedding_is_exact(num in -2i64..=2, den in 1i64..=2, seed in any::<u64>()) {
        let c = Speed::new(num, den).unwrap();
        let profile = Grid::new(GridSpec::cube(2, 12)).unwrap();
        let box_periods = nsplane_core::planewave::minimal_box(c, profile.periods()[0], profile.periods()[1]);
        let ny = if c.den() == 2 { 24 } else { 12 };
        let spec = GridSpec::new(&[12, ny, 12], &box_periods);
        let lattice = PlaneWaveLattice::for_spec(c, &profile, &spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut h = SpectralField::random_band_limited(&profile, 2, 3, &mut rng);
        ops::leray_project_in_place(&mut h).unwrap();
        let u = lattice.embed(&h).unwrap();
        prop_assert!(ops::divergence_residual(&u).unwrap() < 1e-13);
        let back = lattice.extract(&u).unwrap();
        prop_assert!(back.minus(&h).unwrap().l2_norm() <= 1e-13 * h.l2_norm().max(1.0));
    }
}
