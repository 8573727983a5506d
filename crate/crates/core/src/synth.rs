//! Seeded random models, data and formulas for tests, benchmarks and the
//! CLI's self-checks.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::formula::{Cube, Form, WeightedFormula};
use crate::tree::{DataMatrix, FeatureId, NodeKind, Tree, TreeEnsemble, TreeNode};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy)]
pub struct EnsembleSpec {
    pub trees: usize,
    /// Maximum depth in edges.
    pub depth: usize,
    pub features: usize,
    /// Every leaf at exactly `depth`.
    pub full: bool,
    /// No feature repeats within a tree. Needs `features >= 2^depth − 1` for
    /// full trees.
    pub distinct_features: bool,
}

impl EnsembleSpec {
    pub fn new(trees: usize, depth: usize, features: usize) -> Self {
        EnsembleSpec {
            trees,
            depth,
            features,
            full: false,
            distinct_features: false,
        }
    }

    pub fn full(mut self) -> Self {
        self.full = true;
        self
    }

    pub fn distinct_features(mut self) -> Self {
        self.distinct_features = true;
        self
    }
}

/// Random ensemble with thresholds in `[0.1, 0.9)`, leaf weights in
/// `[−5, 5)` and consistent covers (children sum to their parent).
pub fn random_ensemble(rng: &mut impl Rng, spec: EnsembleSpec) -> TreeEnsemble {
    let trees = (0..spec.trees)
        .map(|i| random_tree(rng, &spec, i, |rng| rng.gen_range(0.1..0.9)))
        .collect();
    let offset = rng.gen_range(-1.0..1.0);
    TreeEnsemble::new(trees, spec.features, None, offset).expect("generated ensemble is valid")
}

fn random_tree(
    rng: &mut impl Rng,
    spec: &EnsembleSpec,
    index: usize,
    mut threshold: impl FnMut(&mut dyn rand::RngCore) -> f64,
) -> Tree {
    let mut pool: Vec<FeatureId> = (0..spec.features).collect();
    pool.shuffle(rng);
    let mut nodes = Vec::new();
    // (slot, depth, cover)
    let mut stack = vec![(0usize, 0usize, rng.gen_range(50.0..1000.0))];
    nodes.push(TreeNode::leaf(0.0));
    while let Some((slot, d, cover)) = stack.pop() {
        let split = d < spec.depth && (spec.full || d == 0 || rng.gen_bool(0.75));
        let split = split && (!spec.distinct_features || !pool.is_empty());
        if !split {
            nodes[slot] = TreeNode::leaf(rng.gen_range(-5.0..5.0)).with_cover(cover);
            continue;
        }
        let feature = if spec.distinct_features {
            pool.pop().expect("checked")
        } else {
            rng.gen_range(0..spec.features)
        };
        let (left, right) = (nodes.len(), nodes.len() + 1);
        nodes.push(TreeNode::leaf(0.0));
        nodes.push(TreeNode::leaf(0.0));
        let share = rng.gen_range(0.05..0.95);
        nodes[slot] = TreeNode::inner(feature, threshold(rng), left, right).with_cover(cover);
        stack.push((right, d + 1, cover * (1.0 - share)));
        stack.push((left, d + 1, cover * share));
    }
    Tree::new(nodes, 0, index).expect("generated tree is valid")
}

/// Uniform values in `[0, 1)`.
pub fn random_data(rng: &mut impl Rng, rows: usize, cols: usize) -> DataMatrix {
    let values = (0..rows * cols).map(|_| rng.gen::<f64>()).collect();
    DataMatrix::new(rows, cols, values).expect("shape matches")
}

/// Random formula whose terms each draw 0..=4 literals (possibly
/// contradictory) and a weight in `[−10, 10)`.
pub fn random_formula(rng: &mut impl Rng, num_vars: usize, num_cubes: usize, form: Form) -> WeightedFormula {
    let cubes = (0..num_cubes)
        .map(|_| {
            let len = rng.gen_range(0..=4.min(num_vars));
            let (mut pos, mut neg) = (Vec::new(), Vec::new());
            for _ in 0..len {
                let v = rng.gen_range(0..num_vars);
                if rng.gen_bool(0.5) {
                    pos.push(v);
                } else {
                    neg.push(v);
                }
            }
            Cube::new(pos, neg, rng.gen_range(-10.0..10.0))
        })
        .collect();
    WeightedFormula::new(form, num_vars, cubes).expect("variables in range")
}

/// Grid levels used by [`grid_background`].
pub const GRID_LEVELS: [f64; 3] = [0.2, 0.5, 0.8];
const GRID_THRESHOLDS: [f64; 2] = [0.35, 0.65];

/// Ensemble whose thresholds separate [`GRID_LEVELS`], with distinct
/// features per tree and covers counted over `grid_background(features)`.
/// Against that background, path-dependent and background attributions
/// coincide.
pub fn grid_ensemble(rng: &mut impl Rng, trees: usize, depth: usize, features: usize) -> TreeEnsemble {
    let spec = EnsembleSpec::new(trees, depth, features).distinct_features();
    let trees: Vec<Tree> = (0..trees)
        .map(|i| {
            random_tree(rng, &spec, i, |rng| {
                GRID_THRESHOLDS[rng.gen_range(0..GRID_THRESHOLDS.len())]
            })
        })
        .collect();
    let e = TreeEnsemble::new(trees, features, None, 0.0).expect("valid");
    covers_from_data(&e, &grid_background(features))
}

/// Every combination of [`GRID_LEVELS`] over `features` columns.
pub fn grid_background(features: usize) -> DataMatrix {
    let k = GRID_LEVELS.len();
    let rows = k.pow(features as u32);
    let mut values = Vec::with_capacity(rows * features);
    for r in 0..rows {
        let mut code = r;
        for _ in 0..features {
            values.push(GRID_LEVELS[code % k]);
            code /= k;
        }
    }
    DataMatrix::new(rows, features, values).expect("shape matches")
}

/// Copy of the ensemble with every cover replaced by the number of `data`
/// rows reaching the node.
pub fn covers_from_data(ensemble: &TreeEnsemble, data: &DataMatrix) -> TreeEnsemble {
    let trees = ensemble
        .trees()
        .iter()
        .enumerate()
        .map(|(i, tree)| {
            let mut counts = vec![0.0; tree.nodes().len()];
            for row in data.iter_rows() {
                let mut id = tree.root();
                loop {
                    counts[id] += 1.0;
                    match tree.node(id).kind {
                        NodeKind::Leaf { .. } => break,
                        NodeKind::Inner {
                            feature,
                            threshold,
                            left,
                            right,
                        } => id = if row[feature] < threshold { left } else { right },
                    }
                }
            }
            let nodes = tree
                .nodes()
                .iter()
                .zip(counts)
                .map(|(n, c)| n.clone().with_cover(c))
                .collect();
            Tree::new(nodes, tree.root(), i).expect("same structure")
        })
        .collect();
    TreeEnsemble::new(
        trees,
        ensemble.num_features(),
        Some(ensemble.feature_names().to_vec()),
        ensemble.base_offset,
    )
    .expect("same structure")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_generation_is_reproducible() {
        let spec = EnsembleSpec::new(3, 4, 6);
        let a = random_ensemble(&mut rng(7), spec);
        let b = random_ensemble(&mut rng(7), spec);
        assert_eq!(a, b);
    }

    #[test]
    fn full_trees_have_all_leaves_at_depth() {
        let e = random_ensemble(&mut rng(1), EnsembleSpec::new(2, 5, 4).full());
        for t in e.trees() {
            assert_eq!(t.num_leaves(), 32);
            assert!(t.leaf_paths().iter().all(|p| p.len() == 5));
            t.check_covers(0).unwrap();
        }
    }

    #[test]
    fn distinct_features_never_repeat_on_a_path() {
        let e = random_ensemble(&mut rng(3), EnsembleSpec::new(4, 3, 7).full().distinct_features());
        for t in e.trees() {
            let mut seen: Vec<_> = t.nodes().iter().filter_map(|n| match n.kind {
                NodeKind::Inner { feature, .. } => Some(feature),
                _ => None,
            }).collect();
            let n = seen.len();
            seen.sort_unstable();
            seen.dedup();
            assert_eq!(seen.len(), n);
        }
    }

    #[test]
    fn grid_covers_are_positive() {
        let e = grid_ensemble(&mut rng(5), 2, 3, 7);
        for (i, t) in e.trees().iter().enumerate() {
            t.check_covers(i).unwrap();
            assert_eq!(t.node(t.root()).cover, Some(3f64.powi(7)));
        }
    }
}
