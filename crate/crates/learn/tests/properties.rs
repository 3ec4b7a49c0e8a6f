use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use swarmgame_core::RegionGraph;
use swarmgame_learn::dqn::{decode_action, encode_action, ACTIONS};
use swarmgame_learn::pinn::{PinnConfig, ValueProblem};
use swarmgame_learn::sampling::{curriculum_times, sample_simplex};

fn graph(m: usize) -> RegionGraph {
    RegionGraph::cycle(m).unwrap()
}

proptest! {
    #[test]
    fn simplex_samples_are_distributions(regions in 2usize..12, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for x in sample_simplex(regions, 20, &mut rng) {
            prop_assert_eq!(x.len(), regions);
            prop_assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(x.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn curriculum_stays_in_window(itr in 0usize..2000, epochs in 1usize..1000, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let upper = 2.5 * itr.min(epochs) as f64 / epochs as f64;
        for t in curriculum_times(2.5, itr, epochs, 50, &mut rng) {
            prop_assert!((0.0..=upper + 1e-12).contains(&t));
        }
    }

    #[test]
    fn encoding_round_trips(regions in 2usize..8, reduced in any::<bool>(), tau in 0.0f64..2.5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let problem = ValueProblem::new(graph(regions), 1.0, reduced, 2.5).unwrap();
        let x = sample_simplex(regions, 2, &mut rng);
        let z = problem.coords.encode(&x[0], &x[1], tau);
        prop_assert_eq!(z.len(), problem.coords.input_dim());
        let (a, b, t) = problem.decode(&z);
        prop_assert!(a.iter().zip(&x[0]).all(|(p, q)| (p - q).abs() < 1e-12));
        prop_assert!(b.iter().zip(&x[1]).all(|(p, q)| (p - q).abs() < 1e-12));
        prop_assert_eq!(t, tau);
    }

    #[test]
    fn learning_rate_decays_between_bounds(a in 0usize..30_000, b in 0usize..30_000) {
        let cfg = PinnConfig { num_epoch: 20_000, lr_start: 1e-3, lr_end: 1e-5, ..PinnConfig::default() };
        let (lo, hi) = (a.min(b), a.max(b));
        let (r_lo, r_hi) = (cfg.learning_rate(lo), cfg.learning_rate(hi));
        prop_assert!(r_hi <= r_lo);
        let band = (1e-5 - 1e-18)..=(1e-3 + 1e-18);
        prop_assert!(band.contains(&r_hi) && band.contains(&r_lo));
    }

    #[test]
    fn action_codes_are_bijective(a in 0usize..ACTIONS) {
        prop_assert_eq!(encode_action(decode_action(a)), a);
    }
}
