//! Attribution pipeline for tree ensembles.
//!
//! For one tree the pipeline runs four stages:
//!
//! 1. a frequency vector per leaf: the distribution of baseline patterns,
//!    either counted over a background dataset or derived from node covers
//!    (path-dependent mode);
//! 2. sparse contribution matrices per leaf and feature subset, holding the
//!    metric's value for every cube of the leaf's dictionary (unit weight);
//! 3. score vectors `w_l · M · f`, indexed by consumer pattern;
//! 4. for every consumer row, a lookup of the score at the row's pattern for
//!    every leaf, summed over leaves and trees.
//!
//! Stages 1–3 never look at consumers, so [`Explainer`] runs them once and
//! can then explain any number of consumer batches. Every stage is linear in
//! the characteristic function, which is all the pipeline relies on, so any
//! [`Metric`] with that property can be plugged in.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, RwLock};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::cube_map::{ordinals, CubeDictionary, DictionaryCache, MaskCube};
use crate::error::{Error, Result};
use crate::formula::{
    banzhaf_iv_of_cube, banzhaf_of_cube, pair_count, pair_index, shapley_iv_of_cube,
    shapley_of_cube, AttributionResult, MetricKind, PairMatrix, Values,
};
use crate::patterns::{
    calc_decision_patterns, pattern_width_for_depth, sibling_leaf_pairs, LeafPatternTable,
    PatternTable, PatternWidth, PatternWord,
};
use crate::tree::{DataMatrix, FeatureId, Tree, TreeEnsemble};

/// Group of players a metric assigns a value to, as ordinals of a path's
/// distinct features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Subset {
    Empty,
    Single(u32),
    Pair(u32, u32),
}

/// Whether a metric produces per-feature or per-pair values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Singles,
    Pairs,
}

/// A value defined on cubes that is linear in the cube's weight.
///
/// `apply` receives a unit-weight, non-contradictory cube and reports values
/// for subsets of its variables. It may also report [`Subset::Empty`], which
/// lands in a per-row constant column.
pub trait Metric: Sync {
    fn order(&self) -> Order;
    fn apply(&self, cube: MaskCube, emit: &mut dyn FnMut(Subset, f64));
}

impl Metric for MetricKind {
    fn order(&self) -> Order {
        if self.is_interaction() {
            Order::Pairs
        } else {
            Order::Singles
        }
    }

    fn apply(&self, cube: MaskCube, emit: &mut dyn FnMut(Subset, f64)) {
        if cube.is_contradictory() {
            return;
        }
        let (mut pbuf, mut nbuf) = ([0; 32], [0; 32]);
        let pos = ordinals(cube.positive, &mut pbuf);
        let neg = ordinals(cube.negative, &mut nbuf);
        match self {
            MetricKind::Shapley => {
                shapley_of_cube(pos, neg, 1.0, &mut |v, x| emit(Subset::Single(v), x))
            }
            MetricKind::Banzhaf => {
                banzhaf_of_cube(pos, neg, 1.0, &mut |v, x| emit(Subset::Single(v), x))
            }
            MetricKind::ShapleyIv => {
                shapley_iv_of_cube(pos, neg, 1.0, &mut |i, j, x| emit(Subset::Pair(i, j), x))
            }
            MetricKind::BanzhafIv => {
                banzhaf_iv_of_cube(pos, neg, 1.0, &mut |i, j, x| emit(Subset::Pair(i, j), x))
            }
        }
    }
}

/// Distribution of baseline patterns at one leaf; sums to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyVector(pub Vec<f64>);

impl FrequencyVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Sparse `2^k × 2^k` matrix in coordinate form, rows indexed by consumer
/// pattern and columns by baseline pattern.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContributionMatrix {
    pub path_len: usize,
    pub consumer: Vec<u32>,
    pub baseline: Vec<u32>,
    pub values: Vec<f64>,
}

impl ContributionMatrix {
    pub fn dim(&self) -> usize {
        1 << self.path_len
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `scale · M · f`, touching only the stored entries.
    pub fn mul_vec(&self, f: &[f64], scale: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.mul_vec_into(f, scale, &mut out, 1, 0)?;
        Ok(out)
    }

    fn mul_vec_into(
        &self,
        f: &[f64],
        scale: f64,
        out: &mut [f64],
        stride: usize,
        offset: usize,
    ) -> Result<()> {
        if f.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                actual: f.len(),
                context: "frequency vector vs contribution matrix",
            });
        }
        for ((&pc, &pb), &v) in self.consumer.iter().zip(&self.baseline).zip(&self.values) {
            let fb = f[pb as usize];
            if fb != 0.0 {
                out[pc as usize * stride + offset] += scale * v * fb;
            }
        }
        Ok(())
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; d * d];
        for ((&pc, &pb), &v) in self.consumer.iter().zip(&self.baseline).zip(&self.values) {
            out[pc as usize * d + pb as usize] += v;
        }
        out
    }
}

/// Contribution matrices of one dictionary, ordered by subset.
pub fn build_contribution_matrices<M: Metric + ?Sized>(
    dictionary: &CubeDictionary,
    metric: &M,
) -> Vec<(Subset, ContributionMatrix)> {
    let mut by_subset: BTreeMap<Subset, ContributionMatrix> = BTreeMap::new();
    for entry in dictionary.entries() {
        if entry.cube.is_contradictory() {
            continue;
        }
        metric.apply(entry.cube, &mut |subset, value| {
            if value == 0.0 {
                return;
            }
            let subset = match subset {
                Subset::Pair(i, j) if i > j => Subset::Pair(j, i),
                s => s,
            };
            let m = by_subset.entry(subset).or_insert_with(|| ContributionMatrix {
                path_len: dictionary.path_len(),
                ..Default::default()
            });
            m.consumer.push(entry.consumer);
            m.baseline.push(entry.baseline);
            m.values.push(value);
        });
    }
    by_subset.into_iter().collect()
}

/// `w_l · M · f` for every subset.
pub fn build_score_vectors(
    matrices: &[(Subset, ContributionMatrix)],
    f: &FrequencyVector,
    leaf_weight: f64,
) -> Result<Vec<(Subset, Vec<f64>)>> {
    matrices
        .iter()
        .map(|(s, m)| Ok((*s, m.mul_vec(f.as_slice(), leaf_weight)?)))
        .collect()
}

/// Per-leaf baseline-pattern frequencies over a background dataset, leaves
/// in breadth-first order.
pub fn background_frequencies(tree: &Tree, background: &DataMatrix) -> Result<Vec<FrequencyVector>> {
    if background.rows() == 0 {
        return Err(Error::EmptyBackground);
    }
    Ok(match pattern_width_for_depth(tree.depth())? {
        PatternWidth::U8 => histograms(tree, &calc_decision_patterns::<u8>(tree, background)),
        PatternWidth::U16 => histograms(tree, &calc_decision_patterns::<u16>(tree, background)),
        PatternWidth::U32 => histograms(tree, &calc_decision_patterns::<u32>(tree, background)),
    })
}

fn histograms<W: PatternWord>(tree: &Tree, table: &LeafPatternTable<W>) -> Vec<FrequencyVector> {
    let slot: HashMap<usize, usize> = table
        .leaves()
        .iter()
        .enumerate()
        .map(|(i, &l)| (l, i))
        .collect();
    // right sibling's histogram is the left one's with the last bit flipped
    let derived: HashMap<usize, usize> = sibling_leaf_pairs(tree)
        .into_iter()
        .map(|(l, r)| (slot[&r], slot[&l]))
        .collect();
    let m = table.rows() as f64;
    let mut out: Vec<Option<FrequencyVector>> = vec![None; table.num_leaves()];
    for leaf in 0..table.num_leaves() {
        if derived.contains_key(&leaf) {
            continue;
        }
        let mut counts = vec![0u64; 1 << table.path_length(leaf)];
        for p in table.leaf_column(leaf) {
            counts[p.index()] += 1;
        }
        out[leaf] = Some(FrequencyVector(counts.into_iter().map(|c| c as f64 / m).collect()));
    }
    for (&right, &left) in &derived {
        let src = out[left].as_ref().expect("left sibling histogram").as_slice();
        let flipped = (0..src.len()).map(|p| src[p ^ 1]).collect();
        out[right] = Some(FrequencyVector(flipped));
    }
    out.into_iter().map(|f| f.expect("every leaf covered")).collect()
}

/// Per-leaf frequencies from cover ratios: each edge on the path is taken
/// with probability `cover(child) / cover(parent)`, independently.
pub fn path_dependent_frequencies(tree: &Tree) -> Result<Vec<FrequencyVector>> {
    tree.check_covers(0)?;
    let cover = |id: usize| tree.node(id).cover.expect("checked");
    Ok(tree
        .leaf_paths()
        .iter()
        .map(|path| {
            let mut f = vec![1.0];
            for (k, &node) in path.inner.iter().enumerate() {
                let next = path.inner.get(k + 1).copied().unwrap_or(path.leaf);
                let ratio = cover(next) / cover(node);
                f = f
                    .iter()
                    .flat_map(|&x| [x * (1.0 - ratio), x * ratio])
                    .collect();
            }
            FrequencyVector(f)
        })
        .collect())
}

/// Where missing features take their values from.
#[derive(Debug, Clone, Copy)]
pub enum Baseline<'a> {
    /// Cover-ratio branching.
    PathDependent,
    /// Averaging over the rows of a background dataset.
    Background(&'a DataMatrix),
}

/// Scores of one leaf, laid out `table[pattern * slots.len() + j]`.
#[derive(Debug, Clone)]
struct LeafScores {
    slots: Vec<usize>,
    table: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TreeScores {
    leaves: Vec<LeafScores>,
}

type MatrixSet = Arc<Vec<(Subset, ContributionMatrix)>>;

#[derive(Debug, Clone, Copy, Default)]
pub struct StageTimings {
    pub frequencies: Duration,
    pub matrices: Duration,
    pub scores: Duration,
    pub consumer_patterns: Duration,
    pub gather: Duration,
}

/// Precomputed score vectors for an ensemble, ready to explain consumers.
pub struct Explainer<'a> {
    ensemble: &'a TreeEnsemble,
    order: Order,
    width: usize,
    trees: Vec<TreeScores>,
    dictionaries: DictionaryCache,
    timings: StageTimings,
}

impl<'a> Explainer<'a> {
    pub fn new<M: Metric + ?Sized>(
        ensemble: &'a TreeEnsemble,
        baseline: Baseline<'_>,
        metric: &M,
    ) -> Result<Self> {
        let h = ensemble.num_features();
        let order = metric.order();
        let width = 1 + match order {
            Order::Singles => h,
            Order::Pairs => pair_count(h),
        };
        let mut timings = StageTimings::default();

        let t = Instant::now();
        let freqs: Vec<Vec<FrequencyVector>> = match baseline {
            Baseline::Background(data) => {
                ensemble.check_data(data)?;
                ensemble
                    .trees()
                    .par_iter()
                    .map(|tree| background_frequencies(tree, data))
                    .collect::<Result<_>>()?
            }
            Baseline::PathDependent => ensemble
                .trees()
                .par_iter()
                .enumerate()
                .map(|(i, tree)| {
                    tree.check_covers(i)?;
                    path_dependent_frequencies(tree)
                })
                .collect::<Result<_>>()?,
        };
        timings.frequencies = t.elapsed();

        let t = Instant::now();
        let dictionaries = DictionaryCache::new();
        let matrix_cache: RwLock<HashMap<Vec<u8>, MatrixSet>> = RwLock::default();
        let leaf_matrices: Vec<Vec<(MatrixSet, Vec<FeatureId>)>> = ensemble
            .trees()
            .par_iter()
            .map(|tree| {
                tree.leaf_paths()
                    .iter()
                    .map(|path| {
                        let features: Vec<FeatureId> =
                            path.inner.iter().map(|&n| tree.feature(n).expect("inner")).collect();
                        let (dictionary, rename) = dictionaries.get(&features);
                        let key = crate::cube_map::canonicalize(&features).0;
                        let cached = matrix_cache.read().expect("lock").get(&key).cloned();
                        let set = cached.unwrap_or_else(|| {
                            let built = Arc::new(build_contribution_matrices(&dictionary, metric));
                            Arc::clone(
                                matrix_cache.write().expect("lock").entry(key).or_insert(built),
                            )
                        });
                        (set, rename)
                    })
                    .collect()
            })
            .collect();
        timings.matrices = t.elapsed();

        let t = Instant::now();
        let trees = ensemble
            .trees()
            .par_iter()
            .zip(leaf_matrices.par_iter().zip(freqs.par_iter()))
            .map(|(tree, (mats, fs))| {
                let leaves = tree
                    .leaf_paths()
                    .iter()
                    .zip(mats.iter().zip(fs))
                    .map(|(path, ((set, rename), f))| {
                        leaf_scores(set, rename, f, tree.leaf_weight(path.leaf), h, order)
                    })
                    .collect::<Result<_>>()?;
                Ok(TreeScores { leaves })
            })
            .collect::<Result<_>>()?;
        timings.scores = t.elapsed();

        Ok(Explainer {
            ensemble,
            order,
            width,
            trees,
            dictionaries,
            timings,
        })
    }

    pub fn timings(&self) -> StageTimings {
        self.timings
    }

    /// Distinct canonical dictionaries built so far.
    pub fn dictionary_count(&self) -> usize {
        self.dictionaries.len()
    }

    pub fn tree_scores(&self) -> &[TreeScores] {
        &self.trees
    }

    /// Attributions for every consumer row.
    pub fn explain(&mut self, consumers: &DataMatrix) -> Result<Attributions> {
        self.ensemble.check_data(consumers)?;
        let n = consumers.rows();
        let mut data = vec![0.0; n * self.width];
        let (mut patterns_time, mut gather_time) = (Duration::ZERO, Duration::ZERO);
        for (tree, scores) in self.ensemble.trees().iter().zip(&self.trees) {
            let t = Instant::now();
            let patterns = PatternTable::compute(tree, consumers)?;
            patterns_time += t.elapsed();
            let t = Instant::now();
            gather_attributions(scores, &patterns, self.width, &mut data);
            gather_time += t.elapsed();
        }
        self.timings.consumer_patterns = patterns_time;
        self.timings.gather = gather_time;
        Ok(Attributions {
            order: self.order,
            num_features: self.ensemble.num_features(),
            rows: n,
            width: self.width,
            data,
        })
    }
}

fn leaf_scores(
    matrices: &[(Subset, ContributionMatrix)],
    rename: &[FeatureId],
    f: &FrequencyVector,
    weight: f64,
    h: usize,
    order: Order,
) -> Result<LeafScores> {
    let k = matrices.len();
    let dim = f.0.len();
    let mut table = vec![0.0; dim * k];
    let mut slots = Vec::with_capacity(k);
    for (j, (subset, m)) in matrices.iter().enumerate() {
        slots.push(output_slot(*subset, rename, h, order));
        m.mul_vec_into(f.as_slice(), weight, &mut table, k, j)?;
    }
    Ok(LeafScores { slots, table })
}

fn output_slot(subset: Subset, rename: &[FeatureId], h: usize, order: Order) -> usize {
    match (subset, order) {
        (Subset::Empty, _) => 0,
        (Subset::Single(o), Order::Singles) => 1 + rename[o as usize],
        (Subset::Pair(a, b), Order::Pairs) => {
            1 + pair_index(h, rename[a as usize], rename[b as usize])
        }
        (s, o) => panic!("metric declared {o:?} but produced {s:?}"),
    }
}

/// Adds every leaf's score at each row's pattern into `out`
/// (row-major, `width` values per row).
pub fn gather_attributions(scores: &TreeScores, patterns: &PatternTable, width: usize, out: &mut [f64]) {
    match patterns {
        PatternTable::U8(t) => gather_typed(scores, t, width, out),
        PatternTable::U16(t) => gather_typed(scores, t, width, out),
        PatternTable::U32(t) => gather_typed(scores, t, width, out),
    }
}

const GATHER_BLOCK_ROWS: usize = 1024;

fn gather_typed<W: PatternWord>(
    scores: &TreeScores,
    patterns: &LeafPatternTable<W>,
    width: usize,
    out: &mut [f64],
) {
    debug_assert_eq!(patterns.num_leaves(), scores.leaves.len());
    out.par_chunks_mut(GATHER_BLOCK_ROWS * width)
        .enumerate()
        .for_each(|(b, chunk)| {
            let start = b * GATHER_BLOCK_ROWS;
            for (r, acc) in chunk.chunks_exact_mut(width).enumerate() {
                for (leaf, &p) in scores.leaves.iter().zip(patterns.row(start + r)) {
                    let k = leaf.slots.len();
                    let p = p.index();
                    for (&slot, &v) in leaf.slots.iter().zip(&leaf.table[p * k..(p + 1) * k]) {
                        acc[slot] += v;
                    }
                }
            }
        });
}

/// Per-row results of a pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct Attributions {
    order: Order,
    num_features: usize,
    rows: usize,
    width: usize,
    data: Vec<f64>,
}

impl Attributions {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn order(&self) -> Order {
        self.order
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    /// Values a metric assigned to the empty subset.
    pub fn constant(&self, row: usize) -> f64 {
        self.data[row * self.width]
    }

    /// Per-feature values (singles) or packed upper-triangle pair values.
    pub fn values(&self, row: usize) -> &[f64] {
        &self.data[row * self.width + 1..(row + 1) * self.width]
    }

    pub fn pair(&self, row: usize, i: usize, j: usize) -> f64 {
        assert_eq!(self.order, Order::Pairs);
        self.values(row)[pair_index(self.num_features, i, j)]
    }

    pub fn result(&self, row: usize, metric: MetricKind) -> AttributionResult {
        let v = self.values(row).to_vec();
        AttributionResult {
            metric,
            values: match self.order {
                Order::Singles => Values::Singles(v),
                Order::Pairs => Values::Pairs(PairMatrix::from_packed(self.num_features, v)),
            },
        }
    }

    /// Largest absolute difference over all rows and values.
    pub fn max_abs_diff(&self, other: &Attributions) -> f64 {
        if self.width != other.width || self.rows != other.rows {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Elementwise mean of several runs with identical shape.
    pub fn mean(runs: &[Attributions]) -> Option<Attributions> {
        let first = runs.first()?;
        let mut data = vec![0.0; first.data.len()];
        for r in runs {
            for (acc, v) in data.iter_mut().zip(&r.data) {
                *acc += v;
            }
        }
        let k = runs.len() as f64;
        data.iter_mut().for_each(|v| *v /= k);
        Some(Attributions {
            data,
            ..first.clone()
        })
    }
}

/// Attributions under a background dataset, or path-dependent when
/// `background` is `None`.
pub fn attribute<M: Metric + ?Sized>(
    ensemble: &TreeEnsemble,
    consumers: &DataMatrix,
    background: Option<&DataMatrix>,
    metric: &M,
) -> Result<Attributions> {
    let baseline = match background {
        Some(b) => Baseline::Background(b),
        None => Baseline::PathDependent,
    };
    Explainer::new(ensemble, baseline, metric)?.explain(consumers)
}

/// Attributions with every missing feature taken from one fixed row.
pub fn baseline_attributions<M: Metric + ?Sized>(
    ensemble: &TreeEnsemble,
    consumers: &DataMatrix,
    baseline_row: &[f64],
    metric: &M,
) -> Result<Attributions> {
    let background = DataMatrix::new(1, baseline_row.len(), baseline_row.to_vec())?;
    attribute(ensemble, consumers, Some(&background), metric)
}
