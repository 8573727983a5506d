//! Exponential-time reference implementations of every value computed by
//! the library. They enumerate all coalitions directly and are meant for
//! testing and spot checks on small inputs only.

use crate::error::{Error, Result};
use crate::formula::{AttributionResult, MetricKind, PairMatrix, Values, WeightedFormula};
use crate::tree::{DataMatrix, NodeKind, Tree, TreeEnsemble};

/// Largest number of players an oracle accepts (2^20 coalitions).
pub const MAX_PLAYERS: usize = 20;

/// A cooperative game, tabulated over all coalitions. Coalition `S` is the
/// bitmask with bit `i` set when player `i` participates.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicFunction {
    players: usize,
    values: Vec<f64>,
}

impl CharacteristicFunction {
    pub fn from_fn(players: usize, mut f: impl FnMut(u32) -> f64) -> Result<Self> {
        if players > MAX_PLAYERS {
            return Err(Error::TooManyPlayers {
                players,
                cap: MAX_PLAYERS,
            });
        }
        let values = (0..1u32 << players).map(&mut f).collect();
        Ok(CharacteristicFunction { players, values })
    }

    /// The formula's value with the coalition's variables set to 1.
    pub fn from_formula(formula: &WeightedFormula) -> Result<Self> {
        let n = formula.num_vars();
        let mut x = vec![false; n];
        Self::from_fn(n, |s| {
            for (i, xi) in x.iter_mut().enumerate() {
                *xi = s >> i & 1 == 1;
            }
            formula.evaluate(&x).expect("assignment has num_vars entries")
        })
    }

    pub fn players(&self) -> usize {
        self.players
    }

    pub fn value(&self, coalition: u32) -> f64 {
        self.values[coalition as usize]
    }

    /// Game on the other players with `player` fixed in or out, players
    /// above it shifted down by one.
    pub fn restricted(&self, player: usize, present: bool) -> Self {
        let low = (1u32 << player) - 1;
        let fixed = if present { 1u32 << player } else { 0 };
        let values = (0..1u32 << (self.players - 1))
            .map(|s| {
                let full = (s & low) | ((s & !low) << 1) | fixed;
                self.values[full as usize]
            })
            .collect();
        CharacteristicFunction {
            players: self.players - 1,
            values,
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// φ_i = Σ_{S ⊆ N∖{i}} |S|!(n−|S|−1)!/n! · (v(S∪{i}) − v(S)).
pub fn shapley_exact(v: &CharacteristicFunction) -> Vec<f64> {
    let n = v.players;
    (0..n)
        .map(|i| {
            let bit = 1u32 << i;
            (0..1u32 << n)
                .filter(|s| s & bit == 0)
                .map(|s| {
                    let k = s.count_ones() as usize;
                    (v.value(s | bit) - v.value(s)) / (n as f64 * binomial(n - 1, k))
                })
                .sum()
        })
        .collect()
}

/// β_i = Σ_{S ⊆ N∖{i}} (v(S∪{i}) − v(S)) / 2^{n−1}.
pub fn banzhaf_exact(v: &CharacteristicFunction) -> Vec<f64> {
    let n = v.players;
    let scale = 2f64.powi(n as i32 - 1);
    (0..n)
        .map(|i| {
            let bit = 1u32 << i;
            (0..1u32 << n)
                .filter(|s| s & bit == 0)
                .map(|s| v.value(s | bit) - v.value(s))
                .sum::<f64>()
                / scale
        })
        .collect()
}

/// Banzhaf value as E[v(S) | i ∈ S] − E[v(S) | i ∉ S] over uniform coalitions.
pub fn banzhaf_expectation(v: &CharacteristicFunction) -> Vec<f64> {
    let n = v.players;
    (0..n)
        .map(|i| {
            let (mut with, mut without) = (Vec::new(), Vec::new());
            for s in 0..1u32 << n {
                if s >> i & 1 == 1 {
                    with.push(v.value(s));
                } else {
                    without.push(v.value(s));
                }
            }
            mean(&with) - mean(&without)
        })
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// φ_{j|i=1} − φ_{j|i=0}: Shapley value of `j` in the games with `i` forced
/// present and forced absent.
pub fn shapley_iv_exact(v: &CharacteristicFunction, i: usize, j: usize) -> f64 {
    assert!(i != j && i < v.players && j < v.players);
    let jj = if j > i { j - 1 } else { j };
    let on = shapley_exact(&v.restricted(i, true));
    let off = shapley_exact(&v.restricted(i, false));
    on[jj] - off[jj]
}

/// E[v | i,j ∈ S] − E[v | i ∈ S, j ∉ S] − E[v | i ∉ S, j ∈ S] + E[v | i,j ∉ S]
/// over uniform coalitions.
pub fn banzhaf_iv_exact(v: &CharacteristicFunction, i: usize, j: usize) -> f64 {
    assert!(i != j && i < v.players && j < v.players);
    let mut classes: [Vec<f64>; 4] = Default::default();
    for s in 0..1u32 << v.players {
        let class = (s >> i & 1) << 1 | (s >> j & 1);
        classes[class as usize].push(v.value(s));
    }
    mean(&classes[3]) - mean(&classes[2]) - mean(&classes[1]) + mean(&classes[0])
}

/// Any of the four metrics over all players (all unordered pairs for
/// interaction metrics).
pub fn metric_exact(v: &CharacteristicFunction, kind: MetricKind) -> AttributionResult {
    let n = v.players;
    let pairs = |f: fn(&CharacteristicFunction, usize, usize) -> f64| {
        let mut m = PairMatrix::zeros(n);
        for i in 0..n {
            for j in i + 1..n {
                m.add(i, j, f(v, i, j));
            }
        }
        Values::Pairs(m)
    };
    let values = match kind {
        MetricKind::Shapley => Values::Singles(shapley_exact(v)),
        MetricKind::Banzhaf => Values::Singles(banzhaf_exact(v)),
        MetricKind::ShapleyIv => pairs(shapley_iv_exact),
        MetricKind::BanzhafIv => pairs(banzhaf_iv_exact),
    };
    AttributionResult { metric: kind, values }
}

fn hybrid(consumer: &[f64], baseline: &[f64], s: u32, out: &mut [f64]) {
    for (f, x) in out.iter_mut().enumerate() {
        *x = if s >> f & 1 == 1 { consumer[f] } else { baseline[f] };
    }
}

/// M(S) = mean over background rows `b` of the prediction on the row taking
/// features in `S` from the consumer and the rest from `b`.
pub fn tree_characteristic(
    ensemble: &TreeEnsemble,
    consumer: &[f64],
    background: &DataMatrix,
) -> Result<CharacteristicFunction> {
    let h = ensemble.num_features();
    if consumer.len() != h {
        return Err(Error::Dimension {
            expected: h,
            actual: consumer.len(),
            context: "consumer row",
        });
    }
    ensemble.check_data(background)?;
    if background.rows() == 0 {
        return Err(Error::EmptyBackground);
    }
    let mut row = vec![0.0; h];
    CharacteristicFunction::from_fn(h, |s| {
        let total: f64 = background
            .iter_rows()
            .map(|b| {
                hybrid(consumer, b, s, &mut row);
                ensemble.predict_unchecked(&row)
            })
            .sum();
        total / background.rows() as f64
    })
}

/// Expected prediction when present features route the consumer and each
/// missing-feature split sends it left with probability
/// `cover(left) / cover(node)`.
pub fn pd_characteristic(ensemble: &TreeEnsemble, consumer: &[f64]) -> Result<CharacteristicFunction> {
    let h = ensemble.num_features();
    if consumer.len() != h {
        return Err(Error::Dimension {
            expected: h,
            actual: consumer.len(),
            context: "consumer row",
        });
    }
    for (i, t) in ensemble.trees().iter().enumerate() {
        t.check_covers(i)?;
    }
    CharacteristicFunction::from_fn(h, |s| {
        ensemble.base_offset
            + ensemble
                .trees()
                .iter()
                .map(|t| expected_value(t, t.root(), consumer, s))
                .sum::<f64>()
    })
}

fn expected_value(tree: &Tree, node: usize, row: &[f64], present: u32) -> f64 {
    match tree.node(node).kind {
        NodeKind::Leaf { weight } => weight,
        NodeKind::Inner {
            feature,
            threshold,
            left,
            right,
        } => {
            if present >> feature & 1 == 1 {
                let next = if row[feature] < threshold { left } else { right };
                expected_value(tree, next, row, present)
            } else {
                let cover = |n: usize| tree.node(n).cover.expect("covers checked");
                let p = cover(left) / cover(node);
                p * expected_value(tree, left, row, present)
                    + (1.0 - p) * expected_value(tree, right, row, present)
            }
        }
    }
}

/// ΔW_i: total weight of terms with `x_i` minus total weight of terms with
/// `¬x_i`. Not invariant under rewriting the formula.
pub fn weight_difference(formula: &WeightedFormula) -> Vec<f64> {
    let mut out = vec![0.0; formula.num_vars()];
    for c in formula.cubes() {
        for &v in c.positive() {
            out[v] += c.weight;
        }
        for &v in c.negative() {
            out[v] -= c.weight;
        }
    }
    out
}
