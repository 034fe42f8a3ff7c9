use frac::bench::score;
use frac::codec::{bits_from_hex, bits_to_hex, perm_rank, perm_unrank, subset_rank, subset_unrank, FrameSelection};
use frac::crlb::fisher;
use frac::linalg::{CMat, C64};
use frac::signal::{build_selection, noiseless_snapshot, reference_matrix, reshape_xprime, unshape_xprime};
use frac::{Estimate, EstimateSet, RadarConfig, Scene, Target};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_scene(cfg: &RadarConfig, seed: u64, count: usize) -> Scene {
    use rand::Rng;
    let (rmax, vmax) = cfg.ambiguity_limits();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let targets = (0..count)
        .map(|_| {
            Target::new(
                rng.random_range(0.0..rmax),
                rng.random_range(-vmax..vmax),
                rng.random_range(-1.2..1.2),
                C64::from_polar(rng.random_range(0.5..1.5), rng.random_range(0.0..std::f64::consts::TAU)),
            )
        })
        .collect();
    Scene::new(targets, 0.0, seed)
}

fn as_estimates(targets: &[Target]) -> EstimateSet {
    EstimateSet::new(targets.iter().map(|t| Estimate { r: t.r, v: t.v, theta: t.theta, beta: t.beta }).collect(), 0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn selection_times_reference_is_the_snapshot(seed in any::<u64>(), count in 1usize..4) {
        let cfg = RadarConfig::standard();
        let scene = random_scene(&cfg, seed, count);
        let frame = FrameSelection::random(&cfg, 2, &mut ChaCha8Rng::seed_from_u64(seed ^ 1)).unwrap();
        let y = noiseless_snapshot(&scene, &cfg, &frame);
        let sx = build_selection(&frame, &cfg).unwrap().apply(&reference_matrix(&scene, &cfg));
        prop_assert!((&y - &sx).norm() <= 1e-12 * y.norm().max(1.0));
    }

    #[test]
    fn decoupled_reshape_round_trips(seed in any::<u64>()) {
        use rand::Rng;
        let cfg = RadarConfig::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = CMat::from_fn(cfg.reference_rows(), cfg.qr, |_, _| C64::new(rng.random(), rng.random()));
        let back = unshape_xprime(&reshape_xprime(&x, &cfg).unwrap(), &cfg).unwrap();
        prop_assert_eq!(back, x);
    }

    #[test]
    fn fisher_scales_inversely_with_noise(seed in any::<u64>(), sigma2 in 0.01f64..10.0) {
        let cfg = RadarConfig::standard();
        let scene = random_scene(&cfg, seed, 2);
        let frame = FrameSelection::random(&cfg, 2, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let unit = fisher(&scene, &cfg, &frame, 1.0).unwrap();
        let scaled = fisher(&scene, &cfg, &frame, sigma2).unwrap();
        prop_assert!((&scaled.f * sigma2 - &unit.f).norm() <= 1e-9 * unit.f.norm());
    }

    #[test]
    fn exact_estimates_score_zero_in_any_order(seed in any::<u64>(), count in 1usize..4, shift in 0usize..3) {
        let cfg = RadarConfig::standard();
        let scene = random_scene(&cfg, seed, count);
        let mut shuffled = scene.targets.clone();
        shuffled.rotate_left(shift % count);
        let scored = score(&scene.targets, &as_estimates(&shuffled), &cfg);
        for err in scored {
            let err = err.expect("exact estimate must be assigned");
            prop_assert!(err.iter().all(|e| e.abs() < 1e-9));
        }
    }

    #[test]
    fn scoring_ignores_ambiguity_wraps(seed in any::<u64>(), laps in -2i32..3) {
        let cfg = RadarConfig::standard();
        let (rmax, vmax) = cfg.ambiguity_limits();
        let scene = random_scene(&cfg, seed, 1);
        let mut est = as_estimates(&scene.targets);
        est.estimates[0].r += 1.0 + laps as f64 * rmax;
        est.estimates[0].v += 0.5 + laps as f64 * 2.0 * vmax;
        let err = score(&scene.targets, &est, &cfg)[0].expect("within one cell");
        prop_assert!((err[0] - 1.0).abs() < 1e-9 && (err[2] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn combinatorial_ranks_round_trip(k in 1usize..7, seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pool: Vec<usize> = (0..12).collect();
        pool.shuffle(&mut rng);
        let mut subset = pool[..k].to_vec();
        subset.sort_unstable();
        prop_assert_eq!(subset_unrank(subset_rank(&subset), k), subset);
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(&mut rng);
        prop_assert_eq!(perm_unrank(perm_rank(&perm), k), perm);
    }

    #[test]
    fn hex_round_trips(bits in proptest::collection::vec(any::<bool>(), 1..300)) {
        let hex = bits_to_hex(&bits);
        prop_assert_eq!(bits_from_hex(&hex, bits.len()).unwrap(), bits);
    }
}
