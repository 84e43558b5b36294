mod common;

use common::{corpus_instance, Instance};
use physarum_core::graph::NodeSet;
use physarum_core::harmonic::{
    check_inf_harmonic, extension_for, is_dually_feasible, partial_field, HarmonicExtension,
};
use physarum_core::oracle::solve_exact;
use proptest::prelude::*;

/// Extension of a corpus instance whose optimal set is connected.
fn connected_case(seed: u64) -> Option<(Instance, HarmonicExtension<f64>)> {
    let inst = corpus_instance(seed);
    let opt = solve_exact(&inst.graph, &inst.sources).unwrap();
    if !inst.graph.arcs_connected(&opt.optimal_arcs) {
        return None;
    }
    let ext = extension_for(&inst.graph, &inst.sources).unwrap();
    Some((inst, ext))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn slopes_decrease_below_one(seed in 0u64..100_000) {
        let Some((_, ext)) = connected_case(seed) else { return Ok(()) };
        let slopes: Vec<f64> = ext.trajectories.iter().map(|t| t.slope).collect();
        prop_assert!(slopes.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        prop_assert!(slopes.iter().all(|&r| r > 0.0 && r < 1.0));
        prop_assert_eq!(ext.slopes[0], 1.0);
        prop_assert!(ext.slopes.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn level_sets_are_made_of_trajectories(seed in 0u64..100_000) {
        let Some((inst, ext)) = connected_case(seed) else { return Ok(()) };
        let g = &inst.graph;
        let opt = solve_exact(g, &inst.sources).unwrap();
        let field = partial_field(g, &ext.potential);
        prop_assert!(opt.optimal_arcs.is_subset(&ext.level_sets[0]));

        let mut reached: NodeSet = g.nodes_of(&opt.optimal_arcs);
        for t in &ext.trajectories {
            prop_assert!(reached.contains(t.nodes.first().unwrap()));
            prop_assert!(reached.contains(t.nodes.last().unwrap()));
            prop_assert!(t.nodes[1..t.nodes.len() - 1].iter().all(|v| !reached.contains(v)));
            let level = ext.level_set(t.slope).unwrap();
            for &e in &t.arcs {
                prop_assert!(level.contains(&e));
                prop_assert!((field[e].unwrap() - t.slope).abs() <= 1e-9);
            }
            reached.extend(t.nodes.iter().copied());
        }
        for (r, level) in ext.slopes.iter().zip(&ext.level_sets) {
            for &e in level {
                prop_assert!((field[e].unwrap() - r).abs() <= 1e-9);
                let a = g.arc(e);
                prop_assert!(*r == 1.0 || ext.trajectories.iter().any(|t| t.arcs.contains(&e)), "arc {} ({}→{})", e, a.tail, a.head);
            }
        }
        prop_assert_eq!(reached, ext.nodes());
    }

    #[test]
    fn extension_is_harmonic_and_feasible(seed in 0u64..100_000) {
        let Some((inst, ext)) = connected_case(seed) else { return Ok(()) };
        let g = &inst.graph;
        let check = check_inf_harmonic(g, &ext.arcs, &ext.potential, &inst.sources.support());
        prop_assert!(check.violators.is_empty(), "{:?}", check.violators);
        prop_assert!(is_dually_feasible(g, &ext.potential, 1e-9));
        let low = ext.potential.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(low, 0.0);
    }

    #[test]
    fn time_reversal(seed in 0u64..100_000) {
        let Some((inst, ext)) = connected_case(seed) else { return Ok(()) };
        let tie_free = ext.trajectories.windows(2).all(|w| w[0].slope - w[1].slope > 1e-9);
        prop_assume!(tie_free);
        let back = extension_for(&inst.graph.reversed(), &inst.sources.negated()).unwrap();
        let high = ext.potential.iter().flatten().copied().fold(0.0, f64::max);
        for v in 0..inst.graph.node_count() {
            match (ext.potential[v], back.potential[v]) {
                (Some(x), Some(y)) => prop_assert!((high - x - y).abs() <= 1e-9, "node {}", v),
                (None, None) => {}
                other => prop_assert!(false, "node {} covered on one side only: {:?}", v, other),
            }
        }
    }
}
