use proptest::prelude::*;

use baker_core::bakermap::BakerParams;
use baker_core::bitcore::{CellLabel, CoarseGrainingSpec};
use baker_core::histories::{
    analyze, diagonal_probabilities, run_engine_tree, AnalysisSettings, BranchEngine, EngineOptions,
};
use baker_core::partitions::{build_partition, initial_ensemble};
use baker_core::refcheck::{compare_engines, dense_decoherence_functional, HistorySelection, OracleLimits};

/// Small valid specs: N ≤ 7, at most 4 specified bits.
fn small_spec() -> impl Strategy<Value = CoarseGrainingSpec> {
    (1usize..=2, 0usize..=2, 0usize..=2, 1usize..=2, 1usize..=2, 0usize..=1, any::<u64>()).prop_filter_map(
        "needs a valid n",
        |(lambda, l, r, s1, s2, m1, pick)| {
            let (s, m) = if lambda == 1 { (vec![s1 + s2], vec![]) } else { (vec![s1, s2], vec![m1]) };
            let n_qubits = l + r + s.iter().sum::<usize>() + m.iter().sum::<usize>();
            if n_qubits > 7 || l + 1 > n_qubits - r - 1 {
                return None;
            }
            let choices = n_qubits - r - 1 - l;
            let n = l + 1 + (pick as usize % choices);
            CoarseGrainingSpec::new(n_qubits, n, l, r, &s, &m).ok()
        },
    )
}

fn engine(spec: &CoarseGrainingSpec, prune_tol: f64) -> BranchEngine {
    let partition = build_partition(spec).unwrap();
    let params = BakerParams::new(spec.n_qubits(), spec.n()).unwrap();
    BranchEngine::new(&partition, &params, EngineOptions { prune_tol, ..Default::default() }).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn engine_matches_dense_oracle(spec in small_spec(), x_pick in any::<u64>(), k in 0usize..=2) {
        let x = CellLabel::from_id(&spec, x_pick % (1 << spec.specified_bits())).unwrap();
        let params = BakerParams::new(spec.n_qubits(), spec.n()).unwrap();
        let cmp = compare_engines(&spec, &x, &params, k, 0.0).unwrap();
        prop_assert!(cmp.max_abs_dev <= 1e-10, "{cmp:?}");
        prop_assert!(cmp.dressed_vs_reduced <= 1e-12, "{cmp:?}");
    }

    #[test]
    fn dense_diagonal_is_a_distribution(spec in small_spec(), x_pick in any::<u64>(), k in 0usize..=2) {
        let x = CellLabel::from_id(&spec, x_pick % (1 << spec.specified_bits())).unwrap();
        let params = BakerParams::new(spec.n_qubits(), spec.n()).unwrap();
        let d = dense_decoherence_functional(&spec, &x, &params, k, &HistorySelection::All, &OracleLimits::default())
            .unwrap();
        prop_assert!((d.trace() - 1.0).abs() <= 1e-10);
        prop_assert!(d.max_hermiticity_error() <= 1e-12);
    }

    #[test]
    fn mass_is_conserved(spec in small_spec(), x_pick in any::<u64>(), k in 0usize..=4, tol in prop::sample::select(vec![0.0, 1e-9, 1e-4])) {
        let x = CellLabel::from_id(&spec, x_pick % (1 << spec.specified_bits())).unwrap();
        let init = initial_ensemble(&spec, &x).unwrap();
        let reports = analyze(&engine(&spec, tol), &init, k, &AnalysisSettings::default()).unwrap();
        for r in &reports {
            prop_assert!((r.total_probability + r.pruned_mass - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn pruning_is_sound(spec in small_spec(), x_pick in any::<u64>(), k in 1usize..=3) {
        let x = CellLabel::from_id(&spec, x_pick % (1 << spec.specified_bits())).unwrap();
        let init = initial_ensemble(&spec, &x).unwrap();
        let exact = diagonal_probabilities(&run_engine_tree(&engine(&spec, 0.0), &init, k).unwrap());
        for tol in [1e-9, 1e-3] {
            let tree = run_engine_tree(&engine(&spec, tol), &init, k).unwrap();
            let pruned = tree.pruned_mass();
            let approx = diagonal_probabilities(&tree);
            for (h, p) in &exact {
                let q = approx.get(h).copied().unwrap_or(0.0);
                prop_assert!((p - q).abs() <= pruned + 1e-12, "history {h:?}: {p} vs {q}, pruned {pruned}");
            }
        }
    }
}

/// The local closed form is the same for every initial label; the global
/// bit-complement symmetry of the map makes x and its complement agree
/// exactly.
#[test]
fn complementary_initial_cells_agree() {
    let spec = CoarseGrainingSpec::new(10, 5, 3, 2, &[5], &[]).unwrap();
    let engine = engine(&spec, 1e-9);
    for (a, b) in [("01101", "10010"), ("00000", "11111"), ("01000", "10111")] {
        let run = |label: &str| {
            let init = initial_ensemble(&spec, &CellLabel::parse(&spec, label).unwrap()).unwrap();
            analyze(&engine, &init, 3, &AnalysisSettings::default()).unwrap()
        };
        for (ra, rb) in run(a).iter().zip(run(b).iter()) {
            assert!((ra.entropy_bits - rb.entropy_bits).abs() <= 1e-6, "{a} vs {b} at k = {}", ra.k);
            assert_eq!(ra.support_size, rb.support_size);
        }
    }
}
