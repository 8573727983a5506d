//! Workloads shared by the criterion benchmarks.

use cubeshap::synth::{self, EnsembleSpec};
use cubeshap::{DataMatrix, Form, TreeEnsemble, WeightedFormula};

/// Full-depth random ensemble with consumer and background data.
pub struct Workload {
    pub ensemble: TreeEnsemble,
    pub consumers: DataMatrix,
    pub background: DataMatrix,
}

pub fn workload(trees: usize, depth: usize, features: usize, n: usize, m: usize, seed: u64) -> Workload {
    let mut rng = synth::rng(seed);
    let ensemble = synth::random_ensemble(&mut rng, EnsembleSpec::new(trees, depth, features).full());
    let consumers = synth::random_data(&mut rng, n, features);
    let background = synth::random_data(&mut rng, m, features);
    Workload {
        ensemble,
        consumers,
        background,
    }
}

pub fn formula(vars: usize, cubes: usize, seed: u64) -> WeightedFormula {
    synth::random_formula(&mut synth::rng(seed), vars, cubes, Form::Wdnf).preprocess()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn workload_shapes() {
        let w = workload(2, 3, 4, 10, 5, 0);
        assert_eq!(w.ensemble.trees().len(), 2);
        assert_eq!(w.ensemble.max_depth(), 3);
        assert_eq!((w.consumers.rows(), w.background.rows()), (10, 5));
    }
}
