//! Golden-value suite and comparison against externally produced
//! reference attributions.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use crate::engine::{attribute, baseline_attributions, Attributions, Order};
use crate::error::{Error, Result};
use crate::formula::{pair_index, Cube, Form, MetricKind, WeightedFormula};
use crate::oracle::{self, CharacteristicFunction};
use crate::synth::{self, EnsembleSpec};
use crate::tree::{DataMatrix, Tree, TreeEnsemble, TreeNode};

/// Tolerance for comparisons against this crate's own oracles.
pub const INTERNAL_TOLERANCE: f64 = 1e-9;
/// Tolerance for comparisons against values produced by other software.
pub const EXTERNAL_TOLERANCE: f64 = 1e-5;
/// Tolerance for hand-derived closed-form values.
pub const GOLDEN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    /// Passes when the deviation is at most the tolerance.
    AtMost,
    /// Passes when the deviation exceeds the tolerance (the values must differ).
    Exceeds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub metric: Option<MetricKind>,
    pub deviation: f64,
    pub tolerance: f64,
    pub bound: Bound,
}

impl Check {
    pub fn at_most(name: impl Into<String>, metric: Option<MetricKind>, deviation: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            metric,
            deviation,
            tolerance,
            bound: Bound::AtMost,
        }
    }

    pub fn passed(&self) -> bool {
        match self.bound {
            // NaN deviations fail both ways
            Bound::AtMost => self.deviation <= self.tolerance,
            Bound::Exceeds => self.deviation > self.tolerance,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed())
    }

    /// Largest `AtMost` deviation per metric, in [`MetricKind::ALL`] order.
    pub fn max_deviation_by_metric(&self) -> Vec<(MetricKind, f64)> {
        MetricKind::ALL
            .into_iter()
            .filter_map(|m| {
                self.checks
                    .iter()
                    .filter(|c| c.metric == Some(m) && c.bound == Bound::AtMost)
                    .map(|c| c.deviation)
                    .reduce(f64::max)
                    .map(|d| (m, d))
            })
            .collect()
    }

    pub fn extend(&mut self, other: Report) {
        self.checks.extend(other.checks);
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        for c in &self.checks {
            let op = match c.bound {
                Bound::AtMost => "<=",
                Bound::Exceeds => "> ",
            };
            writeln!(
                f,
                "{}  {:width$}  dev {:.3e} {op} {:.0e}",
                if c.passed() { "PASS" } else { "FAIL" },
                c.name,
                c.deviation,
                c.tolerance,
            )?;
        }
        writeln!(f, "max deviation by metric:")?;
        for (m, d) in self.max_deviation_by_metric() {
            writeln!(f, "  {:<11} {d:.3e}", m.name())?;
        }
        let failed = self.failures().count();
        write!(f, "{} checks, {failed} failed", self.checks.len())
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, |m, d| if d.is_nan() { f64::NAN } else { m.max(d) })
}

/// `3(¬x1) + 5(x1 ∧ ¬x3) + 2(x2 ∧ x3 ∧ ¬x1)`.
pub fn worked_example() -> WeightedFormula {
    WeightedFormula::wdnf(
        3,
        vec![
            Cube::new([], [0], 3.0),
            Cube::new([0], [2], 5.0),
            Cube::new([1, 2], [0], 2.0),
        ],
    )
    .expect("valid")
}

/// A different WDNF with the same truth table as [`worked_example`]:
/// `5(x1) − 5(x3) + 3(¬x1∧¬x3) + 10(¬x1∧x3) − 2(¬x1∧¬x2∧x3)`.
pub fn equivalent_example() -> WeightedFormula {
    WeightedFormula::wdnf(
        3,
        vec![
            Cube::new([0], [], 5.0),
            Cube::new([2], [], -5.0),
            Cube::new([], [0, 2], 3.0),
            Cube::new([2], [0], 10.0),
            Cube::new([2], [0, 1], -2.0),
        ],
    )
    .expect("valid")
}

pub const WORKED_SHAPLEY: [f64; 3] = [-7.0 / 6.0, 1.0 / 3.0, -13.0 / 6.0];
pub const WORKED_BANZHAF: [f64; 3] = [-1.0, 0.5, -2.0];

/// Leaf weights of [`worked_example_tree`] in node order.
pub const WORKED_TREE_LEAVES: [f64; 5] = [3.0, 3.0, 5.0, 5.0, 0.0];

/// A tree equal to [`worked_example`] on 0/1 inputs (split at 0.5), so
/// consumer `(1,1,1)` against baseline `(0,0,0)` reproduces its values.
pub fn worked_example_tree(leaves: [f64; 5]) -> TreeEnsemble {
    let nodes = vec![
        TreeNode::inner(0, 0.5, 1, 2),
        TreeNode::inner(1, 0.5, 3, 4),
        TreeNode::inner(2, 0.5, 7, 8),
        TreeNode::leaf(leaves[0]),
        TreeNode::inner(2, 0.5, 5, 6),
        TreeNode::leaf(leaves[1]),
        TreeNode::leaf(leaves[2]),
        TreeNode::leaf(leaves[3]),
        TreeNode::leaf(leaves[4]),
    ];
    let tree = Tree::new(nodes, 0, 0).expect("valid");
    TreeEnsemble::new(vec![tree], 3, None, 0.0).expect("valid")
}

/// Closed-form values of one formula against the worked-example goldens.
pub fn formula_golden_checks(formula: &WeightedFormula) -> Report {
    let shap = formula.shapley();
    let banz = formula.banzhaf();
    let ones = formula.evaluate(&[true; 3]).unwrap_or(f64::NAN);
    let zeros = formula.evaluate(&[false; 3]).unwrap_or(f64::NAN);
    let sum: f64 = shap.singles().iter().sum();
    Report {
        checks: vec![
            Check::at_most(
                "worked example: shapley",
                Some(MetricKind::Shapley),
                max_abs_diff(shap.singles(), &WORKED_SHAPLEY),
                GOLDEN_TOLERANCE,
            ),
            Check::at_most(
                "worked example: banzhaf",
                Some(MetricKind::Banzhaf),
                max_abs_diff(banz.singles(), &WORKED_BANZHAF),
                GOLDEN_TOLERANCE,
            ),
            Check::at_most(
                "worked example: shapley sum = F(1,1,1) - F(0,0,0) = -3",
                Some(MetricKind::Shapley),
                (sum + 3.0).abs().max((ones - zeros + 3.0).abs()),
                GOLDEN_TOLERANCE,
            ),
        ],
    }
}

/// The tree pipeline on [`worked_example_tree`] against the goldens.
pub fn tree_golden_checks(ensemble: &TreeEnsemble) -> Result<Report> {
    let consumer = DataMatrix::from_rows(&[vec![1.0; 3]])?;
    let mut checks = Vec::new();
    for (kind, golden) in [
        (MetricKind::Shapley, WORKED_SHAPLEY),
        (MetricKind::Banzhaf, WORKED_BANZHAF),
    ] {
        let r = baseline_attributions(ensemble, &consumer, &[0.0; 3], &kind)?;
        checks.push(Check::at_most(
            format!("worked example tree: {}", kind.name()),
            Some(kind),
            max_abs_diff(r.values(0), &golden),
            INTERNAL_TOLERANCE,
        ));
    }
    Ok(Report { checks })
}

/// Equal values for two equivalent formulas while ΔW tells them apart.
pub fn robustness_checks() -> Report {
    let (a, b) = (worked_example(), equivalent_example());
    let mut checks = Vec::new();
    for kind in [MetricKind::Shapley, MetricKind::Banzhaf] {
        checks.push(Check::at_most(
            format!("equivalent formulas: {}", kind.name()),
            Some(kind),
            a.metric(kind).max_abs_diff(&b.metric(kind)),
            GOLDEN_TOLERANCE,
        ));
    }
    checks.push(Check {
        name: "equivalent formulas: weight difference differs".into(),
        metric: None,
        deviation: max_abs_diff(&oracle::weight_difference(&a), &oracle::weight_difference(&b)),
        tolerance: INTERNAL_TOLERANCE,
        bound: Bound::Exceeds,
    });
    Report { checks }
}

/// Fast formula metrics against the exponential oracles on seeded random
/// formulas, one check per metric.
pub fn formula_oracle_checks(seed: u64, formulas: usize) -> Result<Report> {
    let mut rng = synth::rng(seed);
    let mut worst = [0.0f64; 4];
    for k in 0..formulas {
        let num_vars = 1 + k % 8;
        let form = if k % 2 == 0 { Form::Wdnf } else { Form::Wcnf };
        let f = synth::random_formula(&mut rng, num_vars, 10, form).preprocess();
        let v = CharacteristicFunction::from_formula(&f)?;
        for (slot, kind) in MetricKind::ALL.into_iter().enumerate() {
            let d = f.metric(kind).max_abs_diff(&oracle::metric_exact(&v, kind));
            worst[slot] = nan_max(worst[slot], d);
        }
    }
    Ok(Report {
        checks: MetricKind::ALL
            .into_iter()
            .zip(worst)
            .map(|(kind, d)| {
                Check::at_most(format!("formula oracle: {}", kind.name()), Some(kind), d, INTERNAL_TOLERANCE)
            })
            .collect(),
    })
}

fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

/// Largest deviation of the pipeline from the oracles over every row of
/// `consumers`, for background mode (when given) or path-dependent mode.
pub fn pipeline_deviation(
    ensemble: &TreeEnsemble,
    consumers: &DataMatrix,
    background: Option<&DataMatrix>,
    kind: MetricKind,
) -> Result<f64> {
    let fast = attribute(ensemble, consumers, background, &kind)?;
    let mut worst = 0.0f64;
    for (r, row) in consumers.iter_rows().enumerate() {
        let v = match background {
            Some(b) => oracle::tree_characteristic(ensemble, row, b)?,
            None => oracle::pd_characteristic(ensemble, row)?,
        };
        let exact = oracle::metric_exact(&v, kind);
        worst = nan_max(worst, fast.result(r, kind).max_abs_diff(&exact));
    }
    Ok(worst)
}

/// The pipeline against the oracles on seeded random ensembles.
pub fn pipeline_oracle_checks(seed: u64, instances: usize) -> Result<Report> {
    let mut rng = synth::rng(seed);
    let mut worst = [[0.0f64; 4]; 2];
    for k in 0..instances {
        let spec = EnsembleSpec::new(1 + k % 3, 1 + k % 4, 2 + k % 5);
        let e = synth::random_ensemble(&mut rng, spec);
        let consumers = synth::random_data(&mut rng, 3, spec.features);
        let background = synth::random_data(&mut rng, 1 + k % 5, spec.features);
        for (slot, kind) in MetricKind::ALL.into_iter().enumerate() {
            worst[0][slot] = nan_max(worst[0][slot], pipeline_deviation(&e, &consumers, Some(&background), kind)?);
            worst[1][slot] = nan_max(worst[1][slot], pipeline_deviation(&e, &consumers, None, kind)?);
        }
    }
    let mut checks = Vec::new();
    for (mode, row) in ["background", "path-dependent"].iter().zip(worst) {
        for (kind, d) in MetricKind::ALL.into_iter().zip(row) {
            checks.push(Check::at_most(
                format!("pipeline oracle ({mode}): {}", kind.name()),
                Some(kind),
                d,
                INTERNAL_TOLERANCE,
            ));
        }
    }
    Ok(Report { checks })
}

/// The whole built-in suite.
pub fn golden_suite() -> Result<Report> {
    let mut report = formula_golden_checks(&worked_example());
    report.extend(tree_golden_checks(&worked_example_tree(WORKED_TREE_LEAVES))?);
    report.extend(robustness_checks());
    report.extend(formula_oracle_checks(0x5eed, 40)?);
    report.extend(pipeline_oracle_checks(0x7eee, 12)?);
    Ok(report)
}

/// Reads reference attributions in the CLI's CSV layout: `row_id` plus one
/// column per feature for single values, or long rows
/// `row_id,feature_i,feature_j,value` for pairs, where absent pairs are
/// zero. Returns values in the
/// layout of [`Attributions::values`], row after row.
pub fn load_reference(path: impl AsRef<Path>, features: &[String], order: Order, rows: usize) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let headers = reader.headers().map_err(csv_err)?.clone();
    let column = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: name.to_string(),
        })
    };
    let h = features.len();
    let width = match order {
        Order::Singles => h,
        Order::Pairs => h * h.saturating_sub(1) / 2,
    };
    // pairs the file leaves out are zero; single-value cells are all required
    let fill = match order {
        Order::Singles => f64::NAN,
        Order::Pairs => 0.0,
    };
    let mut out = vec![fill; rows * width];
    let row_col = column("row_id")?;
    let cell = |rec: &csv::StringRecord, line: usize, col: usize| -> Result<String> {
        rec.get(col).map(str::to_string).ok_or_else(|| Error::BadCell {
            path: path.to_path_buf(),
            row: line,
            column: headers.get(col).unwrap_or("?").to_string(),
            reason: "missing cell".into(),
        })
    };
    let number = |text: &str, line: usize, col: usize| -> Result<f64> {
        text.parse::<f64>().map_err(|_| Error::BadCell {
            path: path.to_path_buf(),
            row: line,
            column: headers.get(col).unwrap_or("?").to_string(),
            reason: format!("`{text}` is not a number"),
        })
    };
    let row_index = |text: &str, line: usize| -> Result<usize> {
        match text.parse::<usize>() {
            Ok(r) if r < rows => Ok(r),
            _ => Err(Error::BadCell {
                path: path.to_path_buf(),
                row: line,
                column: "row_id".into(),
                reason: format!("`{text}` is not a row id below {rows}"),
            }),
        }
    };
    match order {
        Order::Singles => {
            let cols: Vec<usize> = features.iter().map(|f| column(f)).collect::<Result<_>>()?;
            for (line, rec) in reader.records().enumerate() {
                let rec = rec.map_err(csv_err)?;
                let r = row_index(&cell(&rec, line, row_col)?, line)?;
                for (f, &c) in cols.iter().enumerate() {
                    out[r * width + f] = number(&cell(&rec, line, c)?, line, c)?;
                }
            }
        }
        Order::Pairs => {
            let index: HashMap<&str, usize> = features.iter().enumerate().map(|(i, f)| (f.as_str(), i)).collect();
            let (ci, cj, cv) = (column("feature_i")?, column("feature_j")?, column("value")?);
            for (line, rec) in reader.records().enumerate() {
                let rec = rec.map_err(csv_err)?;
                let r = row_index(&cell(&rec, line, row_col)?, line)?;
                let feature = |c: usize| -> Result<usize> {
                    let name = cell(&rec, line, c)?;
                    index.get(name.as_str()).copied().ok_or_else(|| Error::BadCell {
                        path: path.to_path_buf(),
                        row: line,
                        column: headers.get(c).unwrap_or("?").to_string(),
                        reason: format!("unknown feature `{name}`"),
                    })
                };
                let (i, j) = (feature(ci)?, feature(cj)?);
                if i == j {
                    return Err(Error::BadCell {
                        path: path.to_path_buf(),
                        row: line,
                        column: "feature_j".into(),
                        reason: "a pair needs two different features".into(),
                    });
                }
                out[r * width + pair_index(h, i, j)] = number(&cell(&rec, line, cv)?, line, cv)?;
            }
        }
    }
    Ok(out)
}

/// Computed attributions against reference values at [`EXTERNAL_TOLERANCE`].
/// Values missing from the reference count as infinitely far off.
pub fn reference_check(name: &str, metric: MetricKind, computed: &Attributions, reference: &[f64]) -> Check {
    let values: Vec<f64> = (0..computed.rows()).flat_map(|r| computed.values(r).to_vec()).collect();
    let deviation = if values.len() != reference.len() {
        f64::INFINITY
    } else {
        values
            .iter()
            .zip(reference)
            .map(|(a, b)| if b.is_nan() { f64::INFINITY } else { (a - b).abs() })
            .fold(0.0, f64::max)
    };
    Check::at_most(name, Some(metric), deviation, EXTERNAL_TOLERANCE)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equivalent_example_has_same_truth_table() {
        let (a, b) = (worked_example(), equivalent_example());
        for s in 0..8u32 {
            let x: Vec<bool> = (0..3).map(|i| s >> i & 1 == 1).collect();
            assert!((a.evaluate(&x).unwrap() - b.evaluate(&x).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn worked_tree_matches_formula() {
        let e = worked_example_tree(WORKED_TREE_LEAVES);
        let f = worked_example();
        for s in 0..8u32 {
            let x: Vec<bool> = (0..3).map(|i| s >> i & 1 == 1).collect();
            let row: Vec<f64> = x.iter().map(|&b| b as u8 as f64).collect();
            assert_eq!(e.predict(&row).unwrap(), f.evaluate(&x).unwrap());
        }
    }

    #[test]
    fn suite_is_green() {
        let r = golden_suite().unwrap();
        assert!(r.passed(), "{r}");
        assert_eq!(r.max_deviation_by_metric().len(), 4);
    }

    #[test]
    fn corrupted_leaf_fails_tree_golden() {
        let mut leaves = WORKED_TREE_LEAVES;
        leaves[2] += 0.5;
        let r = tree_golden_checks(&worked_example_tree(leaves)).unwrap();
        assert!(!r.passed());
    }

    #[test]
    fn corrupted_weight_fails_formula_golden() {
        let mut f = worked_example();
        f = f.concat(&WeightedFormula::wdnf(3, vec![Cube::new([1], [], 0.01)]).unwrap()).unwrap();
        assert!(!formula_golden_checks(&f).passed());
    }

    #[test]
    fn nan_fails() {
        assert!(!Check::at_most("x", None, f64::NAN, 1.0).passed());
    }
}
