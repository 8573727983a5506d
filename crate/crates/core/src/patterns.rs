//! Decision patterns: for each leaf and each data row, one bit per edge of
//! the root-to-leaf path telling whether the row would take that edge.
//!
//! Bits accumulate by left shift from the root, so the first edge ends up in
//! the most significant populated bit and a row that actually reaches the
//! leaf has the all-ones pattern.

use std::collections::VecDeque;
use std::fmt::Debug;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tree::{DataMatrix, LeafPath, NodeKind, Tree, MAX_DEPTH_CAP};

pub const DEFAULT_BLOCK_ROWS: usize = 4096;

/// Unsigned integer holding one decision pattern.
pub trait PatternWord: Copy + Default + Eq + Debug + Send + Sync + 'static {
    const BITS: u32;
    /// `(self << 1) | bit`
    fn push(self, bit: bool) -> Self;
    fn flip_last(self) -> Self;
    fn index(self) -> usize;
}

macro_rules! pattern_word {
    ($($t:ty),*) => {$(
        impl PatternWord for $t {
            const BITS: u32 = <$t>::BITS;
            #[inline]
            fn push(self, bit: bool) -> Self {
                (self << 1) | bit as $t
            }
            #[inline]
            fn flip_last(self) -> Self {
                self ^ 1
            }
            #[inline]
            fn index(self) -> usize {
                self as usize
            }
        }
    )*};
}

pattern_word!(u8, u16, u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternWidth {
    U8,
    U16,
    U32,
}

impl PatternWidth {
    pub fn bits(self) -> u32 {
        match self {
            PatternWidth::U8 => 8,
            PatternWidth::U16 => 16,
            PatternWidth::U32 => 32,
        }
    }
}

/// Narrowest word that holds a pattern for a tree of the given depth.
pub fn pattern_width_for_depth(depth: usize) -> Result<PatternWidth> {
    match depth {
        d if d > MAX_DEPTH_CAP => Err(Error::DepthExceeded {
            tree: 0,
            depth: d,
            cap: MAX_DEPTH_CAP,
        }),
        0..=8 => Ok(PatternWidth::U8),
        9..=16 => Ok(PatternWidth::U16),
        _ => Ok(PatternWidth::U32),
    }
}

/// Patterns of every row at every leaf, stored row-major
/// (`data[row * num_leaves + leaf]`).
#[derive(Debug, Clone, PartialEq)]
pub struct LeafPatternTable<W> {
    leaves: Vec<usize>,
    path_lengths: Vec<usize>,
    rows: usize,
    data: Vec<W>,
}

impl<W: PatternWord> LeafPatternTable<W> {
    /// Leaf node ids, breadth-first.
    pub fn leaves(&self) -> &[usize] {
        &self.leaves
    }

    pub fn num_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn path_length(&self, leaf_idx: usize) -> usize {
        self.path_lengths[leaf_idx]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn get(&self, row: usize, leaf_idx: usize) -> W {
        self.data[row * self.leaves.len() + leaf_idx]
    }

    /// Patterns of one row at all leaves.
    #[inline]
    pub fn row(&self, row: usize) -> &[W] {
        let l = self.leaves.len();
        &self.data[row * l..(row + 1) * l]
    }

    /// Patterns of all rows at one leaf.
    pub fn leaf_column(&self, leaf_idx: usize) -> impl Iterator<Item = W> + '_ {
        self.data
            .iter()
            .skip(leaf_idx)
            .step_by(self.leaves.len().max(1))
            .copied()
    }
}

/// Breadth-first pattern computation over row blocks.
pub fn calc_decision_patterns<W: PatternWord>(tree: &Tree, data: &DataMatrix) -> LeafPatternTable<W> {
    calc_decision_patterns_blocked(tree, data, DEFAULT_BLOCK_ROWS)
}

pub fn calc_decision_patterns_blocked<W: PatternWord>(
    tree: &Tree,
    data: &DataMatrix,
    block_rows: usize,
) -> LeafPatternTable<W> {
    assert!(
        tree.depth() <= W::BITS as usize,
        "pattern word too narrow for depth {}",
        tree.depth()
    );
    let paths = tree.leaf_paths();
    let num_leaves = paths.len();
    let mut leaf_slot = vec![usize::MAX; tree.nodes().len()];
    for (i, p) in paths.iter().enumerate() {
        leaf_slot[p.leaf] = i;
    }
    let rows = data.rows();
    let block_rows = block_rows.max(1);
    let mut out = vec![W::default(); rows * num_leaves];
    out.par_chunks_mut(block_rows * num_leaves)
        .enumerate()
        .for_each(|(b, chunk)| {
            let start = b * block_rows;
            let n = chunk.len() / num_leaves;
            fill_block(tree, data, start, n, &leaf_slot, num_leaves, chunk);
        });
    LeafPatternTable {
        leaves: paths.iter().map(|p| p.leaf).collect(),
        path_lengths: paths.iter().map(LeafPath::len).collect(),
        rows,
        data: out,
    }
}

fn fill_block<W: PatternWord>(
    tree: &Tree,
    data: &DataMatrix,
    start: usize,
    n: usize,
    leaf_slot: &[usize],
    num_leaves: usize,
    out: &mut [W],
) {
    let mut queue = VecDeque::new();
    queue.push_back((tree.root(), vec![W::default(); n]));
    // Inner-node patterns are dropped as soon as both children are queued.
    while let Some((id, pattern)) = queue.pop_front() {
        match tree.node(id).kind {
            NodeKind::Leaf { .. } => {
                let slot = leaf_slot[id];
                for (r, p) in pattern.into_iter().enumerate() {
                    out[r * num_leaves + slot] = p;
                }
            }
            NodeKind::Inner {
                feature,
                threshold,
                left,
                right,
            } => {
                let left_pattern: Vec<W> = pattern
                    .iter()
                    .enumerate()
                    .map(|(r, &p)| p.push(data.row(start + r)[feature] < threshold))
                    .collect();
                // the right child's agreement bit is the complement of the left's
                let right_pattern = left_pattern.iter().map(|p| p.flip_last()).collect();
                queue.push_back((left, left_pattern));
                queue.push_back((right, right_pattern));
            }
        }
    }
}

/// Width-erased pattern table.
#[derive(Debug, Clone, PartialEq)]
pub enum PatternTable {
    U8(LeafPatternTable<u8>),
    U16(LeafPatternTable<u16>),
    U32(LeafPatternTable<u32>),
}

impl PatternTable {
    /// Computes patterns in the narrowest word the tree's depth allows.
    pub fn compute(tree: &Tree, data: &DataMatrix) -> Result<Self> {
        Ok(match pattern_width_for_depth(tree.depth())? {
            PatternWidth::U8 => PatternTable::U8(calc_decision_patterns(tree, data)),
            PatternWidth::U16 => PatternTable::U16(calc_decision_patterns(tree, data)),
            PatternWidth::U32 => PatternTable::U32(calc_decision_patterns(tree, data)),
        })
    }

    pub fn width(&self) -> PatternWidth {
        match self {
            PatternTable::U8(_) => PatternWidth::U8,
            PatternTable::U16(_) => PatternWidth::U16,
            PatternTable::U32(_) => PatternWidth::U32,
        }
    }

    pub fn get(&self, row: usize, leaf_idx: usize) -> usize {
        match self {
            PatternTable::U8(t) => t.get(row, leaf_idx).index(),
            PatternTable::U16(t) => t.get(row, leaf_idx).index(),
            PatternTable::U32(t) => t.get(row, leaf_idx).index(),
        }
    }
}

/// Direct per-row evaluation of the pattern definition along one path.
pub fn pattern_along_path(tree: &Tree, path: &LeafPath, row: &[f64]) -> u32 {
    path.inner
        .iter()
        .zip(&path.goes_left)
        .fold(0u32, |acc, (&node, &goes_left)| {
            let went_left = tree.node(node).split(row).expect("inner node");
            (acc << 1) | (went_left == goes_left) as u32
        })
}

/// Pairs of leaves `(left, right)` that share a parent; their patterns
/// differ only in the last bit.
pub fn sibling_leaf_pairs(tree: &Tree) -> Vec<(usize, usize)> {
    tree.nodes()
        .iter()
        .filter_map(|n| match n.kind {
            NodeKind::Inner { left, right, .. }
                if tree.node(left).is_leaf() && tree.node(right).is_leaf() =>
            {
                Some((left, right))
            }
            _ => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::TreeNode;

    /// age < 50 ? (sugar < 5 ? 0 : 4) : 1
    fn age_sugar_tree() -> Tree {
        Tree::new(
            vec![
                TreeNode::inner(0, 50.0, 1, 2),
                TreeNode::inner(1, 5.0, 3, 4),
                TreeNode::leaf(1.0),
                TreeNode::leaf(0.0),
                TreeNode::leaf(4.0),
            ],
            0,
            0,
        )
        .unwrap()
    }

    #[test]
    fn consumer_and_baseline_patterns_at_a_leaf() {
        let tree = age_sugar_tree();
        // consumer: age 40 follows the age edge, sugar 3 leaves the sugar>=5 edge
        // baseline: age 60 misses the age edge, sugar 9 follows the sugar edge
        let data = DataMatrix::from_rows(&[vec![40.0, 3.0], vec![60.0, 9.0]]).unwrap();
        let t: LeafPatternTable<u8> = calc_decision_patterns(&tree, &data);
        let leaf = t.leaves().iter().position(|&l| l == 4).unwrap();
        assert_eq!(t.get(0, leaf), 0b10);
        assert_eq!(t.get(1, leaf), 0b01);
    }

    #[test]
    fn single_leaf_tree_has_empty_patterns() {
        let data = DataMatrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let t: LeafPatternTable<u8> = calc_decision_patterns(&Tree::stump(3.0), &data);
        assert_eq!(t.num_leaves(), 1);
        assert_eq!(t.path_length(0), 0);
        assert_eq!(t.leaf_column(0).collect::<Vec<_>>(), vec![0, 0]);
    }

    #[test]
    fn reached_leaf_is_all_ones() {
        let tree = age_sugar_tree();
        let data = DataMatrix::from_rows(&[vec![40.0, 7.0]]).unwrap();
        let t: LeafPatternTable<u16> = calc_decision_patterns(&tree, &data);
        let reached = tree.leaf_for(data.row(0));
        for (i, &leaf) in t.leaves().iter().enumerate() {
            let all_ones = (1u16 << t.path_length(i)) - 1;
            assert_eq!(t.get(0, i) == all_ones, leaf == reached);
        }
    }

    #[test]
    fn widths() {
        assert_eq!(pattern_width_for_depth(6).unwrap(), PatternWidth::U8);
        assert_eq!(pattern_width_for_depth(9).unwrap(), PatternWidth::U16);
        assert_eq!(pattern_width_for_depth(17).unwrap(), PatternWidth::U32);
        assert_eq!(pattern_width_for_depth(30).unwrap(), PatternWidth::U32);
        assert!(pattern_width_for_depth(31).is_err());
    }

    #[test]
    fn sibling_pairs_full_and_chain() {
        let full = Tree::new(
            vec![
                TreeNode::inner(0, 0.0, 1, 2),
                TreeNode::inner(1, 0.0, 3, 4),
                TreeNode::inner(1, 0.0, 5, 6),
                TreeNode::leaf(0.0),
                TreeNode::leaf(1.0),
                TreeNode::leaf(2.0),
                TreeNode::leaf(3.0),
            ],
            0,
            0,
        )
        .unwrap();
        assert_eq!(sibling_leaf_pairs(&full).len(), 2);

        // every right child a leaf, depth 3: only the bottom parent has two leaves
        let chain = Tree::new(
            vec![
                TreeNode::inner(0, 0.0, 1, 2),
                TreeNode::inner(1, 0.0, 3, 4),
                TreeNode::leaf(0.0),
                TreeNode::inner(2, 0.0, 5, 6),
                TreeNode::leaf(1.0),
                TreeNode::leaf(2.0),
                TreeNode::leaf(3.0),
            ],
            0,
            0,
        )
        .unwrap();
        assert_eq!(sibling_leaf_pairs(&chain), vec![(5, 6)]);
    }

    #[test]
    fn blocking_does_not_change_output() {
        let tree = age_sugar_tree();
        let rows: Vec<Vec<f64>> = (0..37)
            .map(|i| vec![(i * 7 % 100) as f64, (i % 11) as f64])
            .collect();
        let data = DataMatrix::from_rows(&rows).unwrap();
        let a: LeafPatternTable<u8> = calc_decision_patterns_blocked(&tree, &data, 5);
        let b: LeafPatternTable<u8> = calc_decision_patterns_blocked(&tree, &data, 1000);
        assert_eq!(a, b);
    }
}
