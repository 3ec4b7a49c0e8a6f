use proptest::prelude::*;
use swarmgame_core::bimatrix::{is_epsilon_nash, solve, support_enumeration, BimatrixGame};
use swarmgame_core::dynamics::{drift, rk4_step_raw};
use swarmgame_core::payoff::{boltzmann, terminal_payoff, PayoffParams, Player};
use swarmgame_core::pmp::optimal_controls;
use swarmgame_core::RegionGraph;

/// A point on the simplex from positive weights.
fn simplex(m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, m).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w.into_iter().map(|v| v / s).collect()
    })
}

/// A cycle on 2..=5 regions or a complete digraph on 2..=4 regions, with a state and controls.
fn graph_state() -> impl Strategy<Value = (RegionGraph, Vec<f64>, Vec<f64>)> {
    (2usize..=5, any::<bool>()).prop_flat_map(|(m, complete)| {
        // complete graphs stay small enough for exhaustive control enumeration
        let g = if complete && m <= 4 {
            let pairs: Vec<_> = (0..m).flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j))).collect();
            RegionGraph::from_pairs(m, &pairs).unwrap()
        } else {
            RegionGraph::cycle(m).unwrap()
        };
        let e = g.num_edges();
        (Just(g), simplex(m), prop::collection::vec(0.0f64..=1.0, e))
    })
}

fn matrix(m: usize, n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-5.0f64..5.0, n), m)
}

proptest! {
    #[test]
    fn drift_conserves_mass((g, x, u) in graph_state()) {
        let f = drift(&g, &x, &u).unwrap();
        prop_assert!(f.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn rk4_keeps_the_simplex((g, x, u) in graph_state(), dt in 0.001f64..0.05) {
        let next = rk4_step_raw(&g, &x, &u, dt);
        prop_assert!(next.iter().all(|v| *v > -1e-9));
        prop_assert!((next.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bang_bang_maximizes_the_hamiltonian((g, x, _u) in graph_state(), l in prop::collection::vec(-1.0f64..1.0, 5)) {
        let l = &l[..g.num_regions()];
        let h = |u: &[f64]| drift(&g, &x, u).unwrap().iter().zip(l).map(|(a, b)| a * b).sum::<f64>();
        let best = h(&optimal_controls(&g, &x, l));
        for mask in 0..1usize << g.num_edges() {
            let u: Vec<f64> = (0..g.num_edges()).map(|k| (mask >> k & 1) as f64).collect();
            prop_assert!(h(&u) <= best + 1e-15);
        }
    }

    #[test]
    fn boltzmann_lies_between_mean_and_max(v in prop::collection::vec(-1.0f64..1.0, 1..12), alpha in 0.1f64..50.0) {
        let s = boltzmann(&v, alpha).unwrap();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(s <= max + 1e-12 && s >= mean - 1e-12);
    }

    #[test]
    fn payoffs_swap_with_players(x1 in simplex(4), x2 in simplex(4), alpha in 0.5f64..20.0) {
        let p = PayoffParams::new(alpha).unwrap();
        let a = terminal_payoff(Player::One, &x1, &x2, &p).unwrap();
        let b = terminal_payoff(Player::Two, &x2, &x1, &p).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn enumerated_profiles_are_equilibria(a in matrix(4, 4), b in matrix(4, 4)) {
        let game = BimatrixGame::new(a, b).unwrap();
        let all = support_enumeration(&game).unwrap();
        prop_assert!(!all.is_empty());
        for p in &all {
            prop_assert!(is_epsilon_nash(&game, p, 1e-6));
            prop_assert!((p.row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!((p.col.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let chosen = solve(&game).unwrap();
        prop_assert!(all.iter().all(|p| p.welfare() <= chosen.welfare() + 1e-12));
    }
}
