use cubeshap::cube_map::{map_patterns_to_cube, MaskCube};
use cubeshap::engine::{
    background_frequencies, build_contribution_matrices, build_score_vectors,
    path_dependent_frequencies, Subset,
};
use cubeshap::formula::pair_index;
use cubeshap::oracle::{self, CharacteristicFunction};
use cubeshap::patterns::{calc_decision_patterns, calc_decision_patterns_blocked, pattern_along_path};
use cubeshap::synth::{self, EnsembleSpec};
use cubeshap::*;
use proptest::prelude::*;

const TOL: f64 = 1e-9;

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

fn formula(seed: u64, vars: usize, cubes: usize, form: Form) -> WeightedFormula {
    synth::random_formula(&mut synth::rng(seed), vars, cubes, form).preprocess()
}

fn form_of(b: bool) -> Form {
    if b {
        Form::Wcnf
    } else {
        Form::Wdnf
    }
}

fn small_instance(seed: u64) -> (TreeEnsemble, DataMatrix, DataMatrix) {
    let mut rng = synth::rng(seed);
    let spec = EnsembleSpec::new(1 + (seed % 3) as usize, 1 + (seed % 4) as usize, 2 + (seed % 6) as usize);
    let e = synth::random_ensemble(&mut rng, spec);
    let c = synth::random_data(&mut rng, 4, spec.features);
    let b = synth::random_data(&mut rng, 1 + (seed % 5) as usize, spec.features);
    (e, c, b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn formula_metrics_match_oracles(seed: u64, vars in 1usize..=8, cubes in 0usize..=20, cnf: bool) {
        let f = formula(seed, vars, cubes, form_of(cnf));
        let v = CharacteristicFunction::from_formula(&f).unwrap();
        for kind in MetricKind::ALL {
            let d = f.metric(kind).max_abs_diff(&oracle::metric_exact(&v, kind));
            prop_assert!(d <= TOL, "{kind:?}: {d}");
        }
    }

    #[test]
    fn metrics_are_linear(s1: u64, s2: u64, vars in 1usize..=6, a in -3.0f64..3.0, b in -3.0f64..3.0, cnf: bool) {
        let f = formula(s1, vars, 8, form_of(cnf));
        let g = formula(s2, vars, 8, form_of(cnf));
        let combo = f.scaled(a).concat(&g.scaled(b)).unwrap();
        for kind in MetricKind::ALL {
            let (mf, mg, mc) = (f.metric(kind), g.metric(kind), combo.metric(kind));
            let expect: Vec<f64> = match (&mf.values, &mg.values) {
                (Values::Singles(x), Values::Singles(y)) => x.iter().zip(y).map(|(x, y)| a * x + b * y).collect(),
                (Values::Pairs(x), Values::Pairs(y)) => x.as_slice().iter().zip(y.as_slice()).map(|(x, y)| a * x + b * y).collect(),
                _ => unreachable!(),
            };
            let got = match &mc.values {
                Values::Singles(x) => x.clone(),
                Values::Pairs(x) => x.as_slice().to_vec(),
            };
            prop_assert!(close(&got, &expect, 1e-9), "{kind:?}");
        }
    }

    #[test]
    fn shapley_is_efficient_on_formulas(seed: u64, vars in 1usize..=10, cnf: bool) {
        let f = formula(seed, vars, 15, form_of(cnf));
        let sum: f64 = f.shapley().singles().iter().sum();
        let gap = f.evaluate(&vec![true; vars]).unwrap() - f.evaluate(&vec![false; vars]).unwrap();
        prop_assert!((sum - gap).abs() <= TOL);
    }

    #[test]
    fn cnf_rewrite_preserves_values(seed: u64, vars in 1usize..=6) {
        let f = formula(seed, vars, 10, Form::Wcnf);
        let g = f.wcnf_to_wdnf().unwrap();
        for s in 0..1u32 << vars {
            let x: Vec<bool> = (0..vars).map(|i| s >> i & 1 == 1).collect();
            prop_assert!((f.evaluate(&x).unwrap() - g.evaluate(&x).unwrap()).abs() <= 1e-9);
        }
        for kind in MetricKind::ALL {
            prop_assert!(f.metric(kind).max_abs_diff(&g.metric(kind)) <= 1e-9);
        }
    }

    #[test]
    fn shapley_oracle_axioms(table in prop::collection::vec(-10.0f64..10.0, 16)) {
        let mut table = table;
        // player 3 is null: v(S ∪ {3}) = v(S)
        for s in 0..8 { table[s | 8] = table[s]; }
        let v = CharacteristicFunction::from_fn(4, |s| table[s as usize]).unwrap();
        let phi = oracle::shapley_exact(&v);
        let beta = oracle::banzhaf_exact(&v);
        prop_assert!((phi.iter().sum::<f64>() - (v.value(15) - v.value(0))).abs() <= TOL);
        prop_assert!(phi[3].abs() <= TOL && beta[3].abs() <= TOL);
        prop_assert!(close(&beta, &oracle::banzhaf_expectation(&v), TOL));
        // swapping players 0 and 1 in the game swaps their values
        let swap = |s: u32| (s & !3) | (s & 1) << 1 | (s >> 1 & 1);
        let w = CharacteristicFunction::from_fn(4, |s| table[swap(s) as usize]).unwrap();
        let psi = oracle::shapley_exact(&w);
        prop_assert!((psi[0] - phi[1]).abs() <= TOL && (psi[1] - phi[0]).abs() <= TOL);
        let bw = oracle::banzhaf_exact(&w);
        prop_assert!((bw[0] - beta[1]).abs() <= TOL);
        for (i, j) in [(0, 1), (1, 2), (0, 3)] {
            prop_assert!((oracle::shapley_iv_exact(&v, i, j) - oracle::shapley_iv_exact(&v, j, i)).abs() <= TOL);
        }
    }

    #[test]
    fn oracle_values_are_linear(t1 in prop::collection::vec(-5.0f64..5.0, 8), t2 in prop::collection::vec(-5.0f64..5.0, 8), a in -2.0f64..2.0) {
        let v1 = CharacteristicFunction::from_fn(3, |s| t1[s as usize]).unwrap();
        let v2 = CharacteristicFunction::from_fn(3, |s| t2[s as usize]).unwrap();
        let v = CharacteristicFunction::from_fn(3, |s| a * t1[s as usize] + t2[s as usize]).unwrap();
        for f in [oracle::shapley_exact, oracle::banzhaf_exact] {
            let expect: Vec<f64> = f(&v1).iter().zip(f(&v2)).map(|(x, y)| a * x + y).collect();
            prop_assert!(close(&f(&v), &expect, TOL));
        }
    }

    #[test]
    fn bfs_patterns_match_path_walk(seed: u64) {
        let (e, c, _) = small_instance(seed);
        for tree in e.trees() {
            let table = calc_decision_patterns::<u32>(tree, &c);
            let blocked = calc_decision_patterns_blocked::<u32>(tree, &c, 3);
            for (l, path) in tree.leaf_paths().iter().enumerate() {
                for r in 0..c.rows() {
                    let direct = pattern_along_path(tree, path, c.row(r));
                    prop_assert_eq!(table.get(r, l), direct);
                    prop_assert_eq!(blocked.get(r, l), direct);
                }
            }
        }
    }

    #[test]
    fn histograms_match_recount(seed: u64) {
        let (e, _, b) = small_instance(seed);
        for tree in e.trees() {
            let f = background_frequencies(tree, &b).unwrap();
            for (l, path) in tree.leaf_paths().iter().enumerate() {
                let mut counts = vec![0.0; 1 << path.len()];
                for row in b.iter_rows() {
                    counts[pattern_along_path(tree, path, row) as usize] += 1.0;
                }
                let expect: Vec<f64> = counts.iter().map(|c| c / b.rows() as f64).collect();
                prop_assert_eq!(f[l].as_slice(), &expect[..]);
            }
        }
    }

    /// The dictionary cube at (consumer pattern, baseline pattern) is satisfied
    /// by a coalition exactly when the row mixing consumer (inside) and
    /// baseline (outside) reaches the leaf.
    #[test]
    fn dictionary_cubes_replay_paths(seed: u64) {
        let (e, c, b) = small_instance(seed);
        let h = e.num_features();
        for tree in e.trees() {
            for path in tree.leaf_paths() {
                let features: Vec<usize> = path.inner.iter().map(|&n| tree.feature(n).unwrap()).collect();
                let dict = map_patterns_to_cube(&features);
                for (cr, br) in c.iter_rows().zip(b.iter_rows().cycle()) {
                    let pc = pattern_along_path(tree, &path, cr);
                    let pb = pattern_along_path(tree, &path, br);
                    let cube = dict.get(pc, pb);
                    for s in 0..1u32 << h {
                        let row: Vec<f64> = (0..h).map(|f| if s >> f & 1 == 1 { cr[f] } else { br[f] }).collect();
                        let reaches = tree.leaf_for(&row) == path.leaf;
                        let present = dict.variables().iter().enumerate()
                            .filter(|(_, &f)| s >> f & 1 == 1)
                            .fold(0u32, |m, (o, _)| m | 1 << o);
                        let satisfied = cube.is_some_and(|k: MaskCube| k.satisfied_by(present));
                        prop_assert_eq!(reaches, satisfied);
                    }
                }
            }
        }
    }

    #[test]
    fn sparse_scores_match_dense(seed: u64, depth in 1usize..=6) {
        let mut rng = synth::rng(seed);
        let e = synth::random_ensemble(&mut rng, EnsembleSpec::new(1, depth, 5));
        let b = synth::random_data(&mut rng, 7, 5);
        let tree = &e.trees()[0];
        let fs = background_frequencies(tree, &b).unwrap();
        for (path, f) in tree.leaf_paths().iter().zip(&fs) {
            let features: Vec<usize> = path.inner.iter().map(|&n| tree.feature(n).unwrap()).collect();
            let mats = build_contribution_matrices(&map_patterns_to_cube(&features), &MetricKind::Shapley);
            let w = tree.leaf_weight(path.leaf);
            let scores = build_score_vectors(&mats, f, w).unwrap();
            for ((_, m), (_, s)) in mats.iter().zip(&scores) {
                let d = m.dim();
                let dense = m.to_dense();
                let expect: Vec<f64> = (0..d).map(|pc| w * (0..d).map(|pb| dense[pc * d + pb] * f.as_slice()[pb]).sum::<f64>()).collect();
                prop_assert!(close(s, &expect, 1e-12));
            }
        }
    }

    /// Stage 4 against a per-row loop over leaves that looks up each score
    /// at the directly walked pattern.
    #[test]
    fn gather_matches_scalar_loop(seed: u64, iv: bool) {
        let (e, c, b) = small_instance(seed);
        let kind = if iv { MetricKind::BanzhafIv } else { MetricKind::Shapley };
        let h = e.num_features();
        let fast = attribute(&e, &c, Some(&b), &kind).unwrap();
        for r in 0..c.rows() {
            let mut acc = vec![0.0; fast.values(r).len()];
            for tree in e.trees() {
                let fs = background_frequencies(tree, &b).unwrap();
                for (path, f) in tree.leaf_paths().iter().zip(&fs) {
                    let features: Vec<usize> = path.inner.iter().map(|&n| tree.feature(n).unwrap()).collect();
                    let dict = map_patterns_to_cube(&features);
                    let mats = build_contribution_matrices(&dict, &kind);
                    let scores = build_score_vectors(&mats, f, tree.leaf_weight(path.leaf)).unwrap();
                    let pc = pattern_along_path(tree, path, c.row(r)) as usize;
                    let vars = dict.variables();
                    for (subset, s) in scores {
                        let slot = match subset {
                            Subset::Single(o) => vars[o as usize],
                            Subset::Pair(a, b2) => pair_index(h, vars[a as usize], vars[b2 as usize]),
                            Subset::Empty => unreachable!(),
                        };
                        acc[slot] += s[pc];
                    }
                }
            }
            prop_assert!(close(fast.values(r), &acc, 1e-12));
        }
    }

    #[test]
    fn background_is_mean_of_baselines(seed: u64) {
        let (e, c, b) = small_instance(seed);
        for kind in MetricKind::ALL {
            let bg = attribute(&e, &c, Some(&b), &kind).unwrap();
            let runs: Vec<Attributions> = b.iter_rows().map(|row| baseline_attributions(&e, &c, row, &kind).unwrap()).collect();
            prop_assert!(bg.max_abs_diff(&Attributions::mean(&runs).unwrap()) <= TOL);
        }
    }

    #[test]
    fn background_shapley_is_efficient(seed: u64) {
        let (e, c, b) = small_instance(seed);
        let phi = attribute(&e, &c, Some(&b), &MetricKind::Shapley).unwrap();
        let base = e.mean_prediction(&b).unwrap();
        for r in 0..c.rows() {
            let sum: f64 = phi.values(r).iter().sum();
            prop_assert!((sum - (e.predict(c.row(r)).unwrap() - base)).abs() <= TOL);
        }
    }

    #[test]
    fn path_dependent_matches_grid_background(seed: u64, depth in 1usize..=3) {
        let mut rng = synth::rng(seed);
        let features = 7;
        let e = synth::grid_ensemble(&mut rng, 2, depth, features);
        let grid = synth::grid_background(features);
        let c = synth::random_data(&mut rng, 5, features);
        for tree in e.trees() {
            let pd = path_dependent_frequencies(tree).unwrap();
            let bg = background_frequencies(tree, &grid).unwrap();
            for (x, y) in pd.iter().zip(&bg) {
                prop_assert!(close(x.as_slice(), y.as_slice(), 1e-12));
            }
        }
        for kind in MetricKind::ALL {
            let pd = attribute(&e, &c, None, &kind).unwrap();
            let bg = attribute(&e, &c, Some(&grid), &kind).unwrap();
            prop_assert!(pd.max_abs_diff(&bg) <= TOL, "{kind:?}");
        }
    }

    #[test]
    fn frequencies_sum_to_one(seed: u64) {
        let (e, _, b) = small_instance(seed);
        for tree in e.trees() {
            for f in background_frequencies(tree, &b).unwrap().iter().chain(&path_dependent_frequencies(tree).unwrap()) {
                prop_assert!((f.as_slice().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                prop_assert!(f.as_slice().iter().all(|&x| x >= 0.0));
            }
        }
    }
}

/// `v(cube) = {∅: 1}` when the cube holds with every feature present.
struct ReachedByConsumer;

impl Metric for ReachedByConsumer {
    fn order(&self) -> Order {
        Order::Singles
    }

    fn apply(&self, cube: MaskCube, emit: &mut dyn FnMut(Subset, f64)) {
        if cube.negative == 0 {
            emit(Subset::Empty, 1.0);
        }
    }
}

#[test]
fn custom_metric_flows_through_pipeline() {
    for seed in 0..20 {
        let (e, c, b) = small_instance(seed);
        let r = attribute(&e, &c, Some(&b), &ReachedByConsumer).unwrap();
        for row in 0..c.rows() {
            let expect = e.predict(c.row(row)).unwrap() - e.base_offset;
            assert!((r.constant(row) - expect).abs() <= 1e-12);
            assert!(r.values(row).iter().all(|&v| v == 0.0));
        }
    }
}

#[test]
fn output_is_identical_across_thread_counts() {
    let mut rng = synth::rng(11);
    let e = synth::random_ensemble(&mut rng, EnsembleSpec::new(5, 5, 8));
    let c = synth::random_data(&mut rng, 3000, 8);
    let b = synth::random_data(&mut rng, 500, 8);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| attribute(&e, &c, Some(&b), &MetricKind::ShapleyIv).unwrap())
    };
    let one = run(1);
    for t in [2, 4, 7] {
        assert_eq!(one, run(t));
    }
}

#[test]
fn interaction_pairs_are_symmetric() {
    let (e, c, b) = small_instance(5);
    let r = attribute(&e, &c, Some(&b), &MetricKind::ShapleyIv).unwrap();
    let h = e.num_features();
    for i in 0..h {
        for j in 0..h {
            if i != j {
                assert_eq!(r.pair(0, i, j), r.pair(0, j, i));
            }
        }
    }
}

#[test]
fn unique_paths_share_one_dictionary() {
    let mut rng = synth::rng(2);
    let e = synth::random_ensemble(&mut rng, EnsembleSpec::new(4, 3, 7).full().distinct_features());
    let mut ex = Explainer::new(&e, Baseline::PathDependent, &MetricKind::Shapley).unwrap();
    assert_eq!(ex.dictionary_count(), 1);
    let c = synth::random_data(&mut rng, 2, 7);
    assert_eq!(ex.explain(&c).unwrap().rows(), 2);
}
