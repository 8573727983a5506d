//! Decision-tree ensembles, data matrices, and their file formats.
//!
//! Every inner node routes a row left when `row[feature] < threshold`
//! (strict) and right otherwise. Importers normalize child order to this
//! convention so pattern computation never needs to branch on it.

use std::collections::{HashMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type FeatureId = usize;

/// Default maximum root-to-leaf depth (edges).
pub const DEFAULT_DEPTH_CAP: usize = 16;
/// Depth is never allowed above this; decision patterns fit in 32 bits.
pub const MAX_DEPTH_CAP: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Inner {
        feature: FeatureId,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        weight: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub kind: NodeKind,
    /// (Possibly weighted) count of training rows that reached this node.
    pub cover: Option<f64>,
}

impl TreeNode {
    pub fn inner(feature: FeatureId, threshold: f64, left: usize, right: usize) -> Self {
        TreeNode {
            kind: NodeKind::Inner {
                feature,
                threshold,
                left,
                right,
            },
            cover: None,
        }
    }

    pub fn leaf(weight: f64) -> Self {
        TreeNode {
            kind: NodeKind::Leaf { weight },
            cover: None,
        }
    }

    pub fn with_cover(mut self, cover: f64) -> Self {
        self.cover = Some(cover);
        self
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf { .. })
    }

    /// `true` iff the row goes left: `row[feature] < threshold`.
    pub fn split(&self, row: &[f64]) -> Option<bool> {
        match self.kind {
            NodeKind::Inner {
                feature, threshold, ..
            } => Some(row[feature] < threshold),
            NodeKind::Leaf { .. } => None,
        }
    }
}

/// A root-to-leaf path.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafPath {
    pub leaf: usize,
    /// Inner nodes from the root down to the leaf's parent.
    pub inner: Vec<usize>,
    /// For each inner node, whether the path continues to its left child.
    pub goes_left: Vec<bool>,
}

impl LeafPath {
    pub fn len(&self) -> usize {
        self.inner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.is_empty()
    }
}

/// A validated binary tree stored as a node arena.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<TreeNode>,
    root: usize,
    depth: usize,
}

impl Tree {
    /// Checks that `nodes` form a single binary tree rooted at `root`.
    /// `index` only labels diagnostics.
    pub fn new(nodes: Vec<TreeNode>, root: usize, index: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Schema(format!("tree {index} has no nodes")));
        }
        if root >= nodes.len() {
            return Err(Error::Schema(format!(
                "tree {index}: root {root} out of range"
            )));
        }
        let mut seen = vec![false; nodes.len()];
        let mut depth = 0;
        let mut stack = vec![(root, 0usize)];
        while let Some((id, d)) = stack.pop() {
            if seen[id] {
                return Err(Error::Cycle {
                    tree: index,
                    node: id,
                });
            }
            seen[id] = true;
            depth = depth.max(d);
            if let NodeKind::Inner { left, right, .. } = nodes[id].kind {
                for child in [left, right] {
                    if child >= nodes.len() {
                        return Err(Error::Schema(format!(
                            "tree {index}, node {id}: child {child} out of range"
                        )));
                    }
                    stack.push((child, d + 1));
                }
            }
        }
        if let Some(orphan) = seen.iter().position(|s| !s) {
            return Err(Error::Schema(format!(
                "tree {index}: node {orphan} is unreachable from the root"
            )));
        }
        Ok(Tree { nodes, root, depth })
    }

    /// A tree with a single leaf.
    pub fn stump(weight: f64) -> Self {
        Tree {
            nodes: vec![TreeNode::leaf(weight)],
            root: 0,
            depth: 0,
        }
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn root(&self) -> usize {
        self.root
    }

    /// Longest root-to-leaf path, in edges.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn split(&self, node: usize, row: &[f64]) -> Result<bool> {
        self.nodes[node].split(row).ok_or(Error::NotInner { node })
    }

    /// The leaf a row reaches.
    pub fn leaf_for(&self, row: &[f64]) -> usize {
        let mut id = self.root;
        loop {
            match self.nodes[id].kind {
                NodeKind::Inner {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if row[feature] < threshold { left } else { right },
                NodeKind::Leaf { .. } => return id,
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.leaf_weight(self.leaf_for(row))
    }

    pub fn leaf_weight(&self, id: usize) -> f64 {
        match self.nodes[id].kind {
            NodeKind::Leaf { weight } => weight,
            NodeKind::Inner { .. } => panic!("node {id} is not a leaf"),
        }
    }

    pub fn feature(&self, id: usize) -> Option<FeatureId> {
        match self.nodes[id].kind {
            NodeKind::Inner { feature, .. } => Some(feature),
            NodeKind::Leaf { .. } => None,
        }
    }

    /// Leaves in breadth-first order, each with its root-to-leaf path.
    pub fn leaf_paths(&self) -> Vec<LeafPath> {
        let mut out = Vec::new();
        let mut queue = VecDeque::from([(self.root, Vec::new(), Vec::new())]);
        while let Some((id, inner, goes_left)) = queue.pop_front() {
            match self.nodes[id].kind {
                NodeKind::Leaf { .. } => out.push(LeafPath {
                    leaf: id,
                    inner,
                    goes_left,
                }),
                NodeKind::Inner { left, right, .. } => {
                    let mut inner = inner;
                    inner.push(id);
                    let mut l = goes_left.clone();
                    l.push(true);
                    let mut r = goes_left;
                    r.push(false);
                    queue.push_back((left, inner.clone(), l));
                    queue.push_back((right, inner, r));
                }
            }
        }
        out
    }

    /// Covers must be present, positive, and never grow from parent to child.
    pub fn check_covers(&self, index: usize) -> Result<()> {
        for (id, node) in self.nodes.iter().enumerate() {
            let cover = node.cover.ok_or(Error::Cover {
                tree: index,
                node: id,
                reason: "missing cover",
            })?;
            if !(cover > 0.0) || !cover.is_finite() {
                return Err(Error::Cover {
                    tree: index,
                    node: id,
                    reason: "cover must be positive",
                });
            }
            if let NodeKind::Inner { left, right, .. } = node.kind {
                for child in [left, right] {
                    if let Some(c) = self.nodes[child].cover {
                        if c > cover * (1.0 + 1e-12) {
                            return Err(Error::Cover {
                                tree: index,
                                node: child,
                                reason: "child cover exceeds parent cover",
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Knobs applied while loading or validating a model.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadOptions {
    pub depth_cap: usize,
    /// Reject models without usable covers (path-dependent mode needs them).
    pub require_covers: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            depth_cap: DEFAULT_DEPTH_CAP,
            require_covers: false,
        }
    }
}

/// A sum of trees plus a constant bias.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeEnsemble {
    trees: Vec<Tree>,
    num_features: usize,
    feature_names: Vec<String>,
    pub base_offset: f64,
}

impl TreeEnsemble {
    pub fn new(
        trees: Vec<Tree>,
        num_features: usize,
        feature_names: Option<Vec<String>>,
        base_offset: f64,
    ) -> Result<Self> {
        let feature_names =
            feature_names.unwrap_or_else(|| (0..num_features).map(|i| format!("f{i}")).collect());
        if feature_names.len() != num_features {
            return Err(Error::Schema(format!(
                "{} feature names for {num_features} features",
                feature_names.len()
            )));
        }
        let ensemble = TreeEnsemble {
            trees,
            num_features,
            feature_names,
            base_offset,
        };
        ensemble.validate(&LoadOptions {
            depth_cap: MAX_DEPTH_CAP,
            require_covers: false,
        })?;
        Ok(ensemble)
    }

    pub fn validate(&self, opts: &LoadOptions) -> Result<()> {
        if opts.depth_cap > MAX_DEPTH_CAP {
            return Err(Error::InvalidDepthCap(opts.depth_cap));
        }
        if self.trees.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        for (t, tree) in self.trees.iter().enumerate() {
            if tree.depth > opts.depth_cap {
                return Err(Error::DepthExceeded {
                    tree: t,
                    depth: tree.depth,
                    cap: opts.depth_cap,
                });
            }
            for (id, node) in tree.nodes.iter().enumerate() {
                match node.kind {
                    NodeKind::Inner {
                        feature, threshold, ..
                    } => {
                        if feature >= self.num_features {
                            return Err(Error::Schema(format!(
                                "tree {t}, node {id}: feature {feature} >= num_features {}",
                                self.num_features
                            )));
                        }
                        if threshold.is_nan() {
                            return Err(Error::Schema(format!(
                                "tree {t}, node {id}: threshold is NaN"
                            )));
                        }
                    }
                    NodeKind::Leaf { weight } => {
                        if !weight.is_finite() {
                            return Err(Error::Schema(format!(
                                "tree {t}, node {id}: leaf weight is not finite"
                            )));
                        }
                    }
                }
            }
            if opts.require_covers {
                tree.check_covers(t)?;
            }
        }
        Ok(())
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn max_depth(&self) -> usize {
        self.trees.iter().map(Tree::depth).max().unwrap_or(0)
    }

    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.num_features {
            return Err(Error::Dimension {
                expected: self.num_features,
                actual: row.len(),
                context: "row length vs num_features",
            });
        }
        Ok(self.predict_unchecked(row))
    }

    pub(crate) fn predict_unchecked(&self, row: &[f64]) -> f64 {
        self.base_offset + self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }

    /// Mean prediction over all rows of `data`.
    pub fn mean_prediction(&self, data: &DataMatrix) -> Result<f64> {
        self.check_data(data)?;
        Ok(data.iter_rows().map(|r| self.predict_unchecked(r)).sum::<f64>() / data.rows() as f64)
    }

    pub fn check_data(&self, data: &DataMatrix) -> Result<()> {
        if data.cols() != self.num_features {
            return Err(Error::Dimension {
                expected: self.num_features,
                actual: data.cols(),
                context: "data columns vs num_features",
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&NativeModel::from(self)).expect("model serializes")
    }

    pub fn from_json(text: &str, opts: &LoadOptions) -> Result<Self> {
        let raw: NativeModel = serde_json::from_str(text)
            .map_err(|e| Error::Schema(format!("native model: {e}")))?;
        raw.into_ensemble(opts)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Dense row-major matrix of feature values; NaN is never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DataMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Dimension {
                expected: rows * cols,
                actual: values.len(),
                context: "matrix value count",
            });
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::Schema("data matrix contains NaN".into()));
        }
        Ok(DataMatrix { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::Dimension {
                expected: cols,
                actual: bad.len(),
                context: "ragged rows",
            });
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + Clone + '_ {
        // chunks_exact with cols == 0 would panic
        (0..self.rows).map(move |i| self.row(i))
    }

    /// Rows `[start, end)` as a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> DataMatrix {
        DataMatrix {
            rows: end - start,
            cols: self.cols,
            values: self.values[start * self.cols..end * self.cols].to_vec(),
        }
    }

    pub fn select_rows(&self, idx: &[usize]) -> DataMatrix {
        let mut values = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        DataMatrix {
            rows: idx.len(),
            cols: self.cols,
            values,
        }
    }

    /// Reads a headered CSV, keeping only `features` in that order.
    pub fn load_csv(path: impl AsRef<Path>, features: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, path, features)
    }

    pub fn read_csv(reader: impl std::io::Read, path: &Path, features: &[String]) -> Result<Self> {
        let csv_err = |e: csv::Error| match e.kind() {
            csv::ErrorKind::UnequalLengths {
                pos,
                expected_len,
                len,
            } => Error::RaggedRow {
                path: path.to_path_buf(),
                row: pos.as_ref().map_or(0, |p| p.record() as usize),
                expected: *expected_len as usize,
                actual: *len as usize,
            },
            _ => Error::Csv {
                path: path.to_path_buf(),
                message: e.to_string(),
            },
        };
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr.headers().map_err(csv_err)?.clone();
        let positions = features
            .iter()
            .map(|name| {
                header
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| Error::MissingColumn {
                        path: path.to_path_buf(),
                        column: name.clone(),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut values = Vec::new();
        let mut rows = 0;
        for record in rdr.records() {
            let record = record.map_err(csv_err)?;
            rows += 1;
            for (&pos, name) in positions.iter().zip(features) {
                let cell = &record[pos];
                let bad = |reason: String| Error::BadCell {
                    path: path.to_path_buf(),
                    row: rows,
                    column: name.clone(),
                    reason,
                };
                let v: f64 = cell
                    .parse()
                    .map_err(|_| bad(format!("`{cell}` is not a number")))?;
                if v.is_nan() {
                    return Err(bad("missing value (NaN)".into()));
                }
                values.push(v);
            }
        }
        Ok(DataMatrix {
            rows,
            cols: features.len(),
            values,
        })
    }
}

// ---------------------------------------------------------------------------
// File formats

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFormat {
    /// This crate's JSON schema.
    Native,
    /// A boosted-tree JSON dump (`split: "f<k>"`, `yes`/`no`, `cover`).
    XgboostDump,
}

pub fn load_model(path: impl AsRef<Path>, format: ModelFormat, opts: &LoadOptions) -> Result<TreeEnsemble> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let loaded = match format {
        ModelFormat::Native => TreeEnsemble::from_json(&text, opts),
        ModelFormat::XgboostDump => import_xgboost_dump(&text, opts),
    };
    loaded.map_err(|e| match e {
        Error::Schema(m) => Error::Schema(format!("{}: {m}", path.display())),
        e => e,
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NativeModel {
    num_features: usize,
    #[serde(default)]
    feature_names: Vec<String>,
    #[serde(default)]
    base_offset: f64,
    trees: Vec<NativeTree>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NativeTree {
    nodes: Vec<NativeNode>,
    #[serde(default)]
    root: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum NativeNode {
    Inner {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cover: Option<f64>,
    },
    Leaf {
        leaf_weight: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cover: Option<f64>,
    },
}

impl From<&TreeEnsemble> for NativeModel {
    fn from(e: &TreeEnsemble) -> Self {
        NativeModel {
            num_features: e.num_features,
            feature_names: e.feature_names.clone(),
            base_offset: e.base_offset,
            trees: e
                .trees
                .iter()
                .map(|t| NativeTree {
                    root: t.root,
                    nodes: t
                        .nodes
                        .iter()
                        .map(|n| match n.kind {
                            NodeKind::Inner {
                                feature,
                                threshold,
                                left,
                                right,
                            } => NativeNode::Inner {
                                feature,
                                threshold,
                                left,
                                right,
                                cover: n.cover,
                            },
                            NodeKind::Leaf { weight } => NativeNode::Leaf {
                                leaf_weight: weight,
                                cover: n.cover,
                            },
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

impl NativeModel {
    fn into_ensemble(self, opts: &LoadOptions) -> Result<TreeEnsemble> {
        let trees = self
            .trees
            .into_iter()
            .enumerate()
            .map(|(t, raw)| {
                let nodes = raw
                    .nodes
                    .into_iter()
                    .map(|n| match n {
                        NativeNode::Inner {
                            feature,
                            threshold,
                            left,
                            right,
                            cover,
                        } => TreeNode {
                            kind: NodeKind::Inner {
                                feature,
                                threshold,
                                left,
                                right,
                            },
                            cover,
                        },
                        NativeNode::Leaf { leaf_weight, cover } => TreeNode {
                            kind: NodeKind::Leaf {
                                weight: leaf_weight,
                            },
                            cover,
                        },
                    })
                    .collect();
                Tree::new(nodes, raw.root, t)
            })
            .collect::<Result<Vec<_>>>()?;
        let names = (!self.feature_names.is_empty()).then_some(self.feature_names);
        finish(trees, self.num_features, names, self.base_offset, opts)
    }
}

fn finish(
    trees: Vec<Tree>,
    num_features: usize,
    names: Option<Vec<String>>,
    base_offset: f64,
    opts: &LoadOptions,
) -> Result<TreeEnsemble> {
    if trees.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let ensemble = TreeEnsemble::new(trees, num_features, names, base_offset)?;
    ensemble.validate(opts)?;
    Ok(ensemble)
}

#[derive(Debug, Deserialize)]
struct XgbNode {
    nodeid: usize,
    #[serde(default)]
    split: Option<String>,
    #[serde(default)]
    split_condition: Option<f64>,
    #[serde(default)]
    yes: Option<usize>,
    #[serde(default)]
    no: Option<usize>,
    #[serde(default)]
    leaf: Option<f64>,
    #[serde(default)]
    cover: Option<f64>,
    #[serde(default)]
    children: Vec<XgbNode>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum XgbDump {
    Trees(Vec<XgbNode>),
    Wrapped {
        trees: Vec<XgbNode>,
        #[serde(default)]
        base_score: f64,
        #[serde(default)]
        feature_names: Vec<String>,
        #[serde(default)]
        num_features: Option<usize>,
    },
}

/// Parses a boosted-tree JSON dump: either a bare array of nested trees or
/// `{"trees": [...], "base_score": .., "feature_names": [..]}`.
///
/// Splits read `x[f] < split_condition` → `yes`, which is already the
/// strict-`<`, true-goes-left convention, so `yes` becomes the left child.
/// Features are `f<k>` indices unless `feature_names` is given.
pub fn import_xgboost_dump(text: &str, opts: &LoadOptions) -> Result<TreeEnsemble> {
    let dump: XgbDump =
        serde_json::from_str(text).map_err(|e| Error::Schema(format!("tree dump: {e}")))?;
    let (roots, base_offset, names, declared) = match dump {
        XgbDump::Trees(t) => (t, 0.0, Vec::new(), None),
        XgbDump::Wrapped {
            trees,
            base_score,
            feature_names,
            num_features,
        } => (trees, base_score, feature_names, num_features),
    };
    let lookup: HashMap<&str, usize> = names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let mut max_feature = None::<usize>;
    let mut trees = Vec::with_capacity(roots.len());
    for (t, root) in roots.iter().enumerate() {
        let mut flat = Vec::new();
        flatten_xgb(root, &mut flat);
        let index: HashMap<usize, usize> =
            flat.iter().enumerate().map(|(i, n)| (n.nodeid, i)).collect();
        if index.len() != flat.len() {
            return Err(Error::Schema(format!("tree {t}: duplicate nodeid")));
        }
        let resolve = |id: Option<usize>, what: &str, node: usize| {
            id.and_then(|id| index.get(&id).copied()).ok_or_else(|| {
                Error::Schema(format!("tree {t}, node {node}: missing or dangling `{what}`"))
            })
        };
        let mut nodes = Vec::with_capacity(flat.len());
        for n in &flat {
            let kind = if let Some(weight) = n.leaf {
                NodeKind::Leaf { weight }
            } else {
                let split = n.split.as_deref().ok_or_else(|| {
                    Error::Schema(format!("tree {t}, node {}: neither leaf nor split", n.nodeid))
                })?;
                let feature = match lookup.get(split) {
                    Some(&i) => i,
                    None => split
                        .strip_prefix('f')
                        .and_then(|k| k.parse().ok())
                        .ok_or_else(|| {
                            Error::Schema(format!("tree {t}: unknown split feature `{split}`"))
                        })?,
                };
                max_feature = max_feature.max(Some(feature));
                NodeKind::Inner {
                    feature,
                    threshold: n.split_condition.ok_or_else(|| {
                        Error::Schema(format!("tree {t}, node {}: missing split_condition", n.nodeid))
                    })?,
                    left: resolve(n.yes, "yes", n.nodeid)?,
                    right: resolve(n.no, "no", n.nodeid)?,
                }
            };
            nodes.push(TreeNode {
                kind,
                cover: n.cover,
            });
        }
        trees.push(Tree::new(nodes, 0, t)?);
    }
    let num_features = if !names.is_empty() {
        names.len()
    } else {
        declared.unwrap_or(max_feature.map_or(0, |f| f + 1))
    };
    let names = (!names.is_empty()).then_some(names);
    finish(trees, num_features, names, base_offset, opts)
}

fn flatten_xgb<'a>(node: &'a XgbNode, out: &mut Vec<&'a XgbNode>) {
    out.push(node);
    for child in &node.children {
        flatten_xgb(child, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// f1 < 4 ? (f2 < 3 ? 1 : 2) : 3, with covers.
    pub(crate) fn small_tree() -> Tree {
        Tree::new(
            vec![
                TreeNode::inner(0, 4.0, 1, 2).with_cover(100.0),
                TreeNode::inner(1, 3.0, 3, 4).with_cover(60.0),
                TreeNode::leaf(3.0).with_cover(40.0),
                TreeNode::leaf(1.0).with_cover(30.0),
                TreeNode::leaf(2.0).with_cover(30.0),
            ],
            0,
            0,
        )
        .unwrap()
    }

    #[test]
    fn split_is_strict() {
        let n = TreeNode::inner(0, 4.0, 1, 2);
        assert_eq!(n.split(&[2.0]), Some(true));
        assert_eq!(n.split(&[4.0]), Some(false));
        let n = TreeNode::inner(0, 3.0, 1, 2);
        assert_eq!(n.split(&[5.0]), Some(false));
        assert!(matches!(small_tree().split(2, &[0.0, 0.0]), Err(Error::NotInner { node: 2 })));
    }

    #[test]
    fn predict_follows_splits() {
        let e = TreeEnsemble::new(vec![small_tree()], 2, None, 0.0).unwrap();
        assert_eq!(e.predict(&[2.0, 1.0]).unwrap(), 1.0);
        assert_eq!(e.predict(&[2.0, 3.0]).unwrap(), 2.0);
        assert_eq!(e.predict(&[9.0, 1.0]).unwrap(), 3.0);
        assert!(e.predict(&[1.0]).is_err());
    }

    #[test]
    fn stump_and_additivity() {
        let e = TreeEnsemble::new(vec![Tree::stump(1.5)], 2, None, 0.25).unwrap();
        assert_eq!(e.predict(&[7.0, -1.0]).unwrap(), 1.75);
        let both = TreeEnsemble::new(vec![small_tree(), small_tree()], 2, None, 0.0).unwrap();
        assert_eq!(both.predict(&[2.0, 5.0]).unwrap(), 4.0);
    }

    #[test]
    fn cycle_is_rejected() {
        let nodes = vec![TreeNode::inner(0, 1.0, 1, 0), TreeNode::leaf(1.0)];
        assert!(matches!(Tree::new(nodes, 0, 3), Err(Error::Cycle { tree: 3, .. })));
    }

    #[test]
    fn shared_child_is_rejected() {
        let nodes = vec![TreeNode::inner(0, 1.0, 1, 1), TreeNode::leaf(1.0)];
        assert!(matches!(Tree::new(nodes, 0, 0), Err(Error::Cycle { .. })));
    }

    #[test]
    fn orphan_node_is_schema_error() {
        let nodes = vec![TreeNode::leaf(1.0), TreeNode::leaf(2.0)];
        assert!(matches!(Tree::new(nodes, 0, 0), Err(Error::Schema(_))));
    }

    #[test]
    fn empty_ensemble_rejected() {
        let err = TreeEnsemble::from_json(
            r#"{"num_features": 1, "trees": []}"#,
            &LoadOptions::default(),
        )
        .unwrap_err();
        assert_eq!(err.to_string(), "ensemble has no trees");
    }

    #[test]
    fn depth_cap_enforced() {
        let e = TreeEnsemble::new(vec![small_tree()], 2, None, 0.0).unwrap();
        let opts = LoadOptions {
            depth_cap: 1,
            ..Default::default()
        };
        assert!(matches!(
            e.validate(&opts),
            Err(Error::DepthExceeded { depth: 2, cap: 1, .. })
        ));
        let opts = LoadOptions {
            depth_cap: 31,
            ..Default::default()
        };
        assert!(matches!(e.validate(&opts), Err(Error::InvalidDepthCap(31))));
    }

    #[test]
    fn covers_required_on_request() {
        let tree = Tree::new(
            vec![TreeNode::inner(0, 1.0, 1, 2), TreeNode::leaf(0.0), TreeNode::leaf(1.0)],
            0,
            0,
        )
        .unwrap();
        let e = TreeEnsemble::new(vec![tree], 1, None, 0.0).unwrap();
        let opts = LoadOptions {
            require_covers: true,
            ..Default::default()
        };
        assert!(matches!(
            e.validate(&opts),
            Err(Error::Cover { reason: "missing cover", .. })
        ));
        assert!(e.validate(&LoadOptions::default()).is_ok());
    }

    #[test]
    fn growing_cover_rejected() {
        let tree = Tree::new(
            vec![
                TreeNode::inner(0, 1.0, 1, 2).with_cover(10.0),
                TreeNode::leaf(0.0).with_cover(12.0),
                TreeNode::leaf(1.0).with_cover(5.0),
            ],
            0,
            0,
        )
        .unwrap();
        assert!(tree.check_covers(0).is_err());
    }

    #[test]
    fn native_json_of_small_tree() {
        let json = r#"{
            "num_features": 2,
            "feature_names": ["f1", "f2"],
            "base_offset": 0.0,
            "trees": [{"root": 0, "nodes": [
                {"feature": 0, "threshold": 4, "left": 1, "right": 2, "cover": 100},
                {"feature": 1, "threshold": 3, "left": 3, "right": 4, "cover": 60},
                {"leaf_weight": 3, "cover": 40},
                {"leaf_weight": 1, "cover": 30},
                {"leaf_weight": 2, "cover": 30}
            ]}]
        }"#;
        let e = TreeEnsemble::from_json(json, &LoadOptions::default()).unwrap();
        let t = &e.trees()[0];
        assert_eq!(t.nodes().iter().filter(|n| !n.is_leaf()).count(), 2);
        assert_eq!(t.num_leaves(), 3);
        assert_eq!(t.depth(), 2);
        assert_eq!(e.feature_names(), &["f1", "f2"]);
        assert_eq!(t, &small_tree());
    }

    #[test]
    fn json_round_trip() {
        let e = TreeEnsemble::new(vec![small_tree(), Tree::stump(2.0)], 3, None, 0.5).unwrap();
        let back = TreeEnsemble::from_json(&e.to_json(), &LoadOptions::default()).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn xgboost_dump_import() {
        let dump = r#"[
          {"nodeid": 0, "depth": 0, "split": "f1", "split_condition": 4, "yes": 1, "no": 2,
           "missing": 1, "gain": 9.5, "cover": 100, "children": [
             {"nodeid": 1, "depth": 1, "split": "f0", "split_condition": 3, "yes": 3, "no": 4,
              "missing": 3, "cover": 60, "children": [
                {"nodeid": 3, "leaf": 0.5, "cover": 20},
                {"nodeid": 4, "leaf": -0.25, "cover": 40}
             ]},
             {"nodeid": 2, "leaf": 1.5, "cover": 40}
          ]}
        ]"#;
        let opts = LoadOptions {
            require_covers: true,
            ..Default::default()
        };
        let e = import_xgboost_dump(dump, &opts).unwrap();
        assert_eq!(e.num_features(), 2);
        assert_eq!(e.predict(&[1.0, 1.0]).unwrap(), 0.5);
        assert_eq!(e.predict(&[3.0, 1.0]).unwrap(), -0.25);
        assert_eq!(e.predict(&[3.0, 4.0]).unwrap(), 1.5);
    }

    #[test]
    fn xgboost_dump_with_names() {
        let dump = r#"{"base_score": 0.5, "feature_names": ["age", "sugar"], "trees": [
          {"nodeid": 0, "split": "sugar", "split_condition": 2, "yes": 1, "no": 2, "children": [
            {"nodeid": 1, "leaf": 1}, {"nodeid": 2, "leaf": 2}]}
        ]}"#;
        let e = import_xgboost_dump(dump, &LoadOptions::default()).unwrap();
        assert_eq!(e.feature_names(), &["age", "sugar"]);
        assert_eq!(e.predict(&[0.0, 1.0]).unwrap(), 1.5);
    }

    #[test]
    fn xgboost_dump_bad_feature() {
        let dump = r#"[{"nodeid": 0, "split": "age", "split_condition": 2, "yes": 1, "no": 2,
          "children": [{"nodeid": 1, "leaf": 1}, {"nodeid": 2, "leaf": 2}]}]"#;
        assert!(matches!(
            import_xgboost_dump(dump, &LoadOptions::default()),
            Err(Error::Schema(_))
        ));
    }

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn csv_loads_and_reorders() {
        let text = "b,extra,a\n1,9,2\n3,9,4\n5,9,6\n";
        let m = DataMatrix::read_csv(text.as_bytes(), Path::new("x.csv"), &names(&["a", "b"]))
            .unwrap();
        assert_eq!(m.rows(), 3);
        assert_eq!(m.row(0), &[2.0, 1.0]);
        assert_eq!(m.row(2), &[6.0, 5.0]);
    }

    #[test]
    fn csv_missing_column_named() {
        let err = DataMatrix::read_csv("a\n1\n".as_bytes(), Path::new("x.csv"), &names(&["a", "b"]))
            .unwrap_err();
        assert!(matches!(&err, Error::MissingColumn { column, .. } if column == "b"));
        assert!(err.to_string().contains("`b`"));
    }

    #[test]
    fn csv_rejects_nan_and_garbage_and_ragged() {
        let p = Path::new("x.csv");
        let f = names(&["a"]);
        assert!(matches!(
            DataMatrix::read_csv("a\nNaN\n".as_bytes(), p, &f),
            Err(Error::BadCell { .. })
        ));
        assert!(matches!(
            DataMatrix::read_csv("a\n\n".as_bytes(), p, &f).map(|m| m.rows()),
            Ok(0)
        ));
        assert!(matches!(
            DataMatrix::read_csv("a\nxyz\n".as_bytes(), p, &f),
            Err(Error::BadCell { .. })
        ));
        assert!(matches!(
            DataMatrix::read_csv("a,b\n1,2\n3\n".as_bytes(), p, &f),
            Err(Error::RaggedRow { .. })
        ));
    }

    #[test]
    fn leaf_paths_are_bfs_ordered() {
        let paths = small_tree().leaf_paths();
        let leaves: Vec<_> = paths.iter().map(|p| p.leaf).collect();
        assert_eq!(leaves, vec![2, 3, 4]);
        assert_eq!(paths[1].inner, vec![0, 1]);
        assert_eq!(paths[1].goes_left, vec![true, true]);
        assert_eq!(paths[2].goes_left, vec![true, false]);
    }
}
