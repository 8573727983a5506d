//! Weighted DNF/CNF pseudo-Boolean formulas and their linear-time
//! Shapley, Banzhaf and pairwise interaction values.
//!
//! A formula is a weighted sum of cubes (WDNF) or clauses (WCNF) over
//! variables `0..num_vars`. Viewing each variable as a player whose
//! participation sets it to 1, every metric here decomposes over the terms
//! of the formula, so a single pass that adds each term's closed-form share
//! to its own variables produces the values of all players at once.

use crate::error::{Error, Result};

/// Identifier of a Boolean variable (a player). Dense in `0..num_vars`.
pub type VarId = usize;

/// Whether a formula sums conjunctions or disjunctions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Form {
    /// Weighted sum of cubes (conjunctions of literals).
    Wdnf,
    /// Weighted sum of clauses (disjunctions of literals).
    Wcnf,
}

/// Which game-theoretic value to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricKind {
    Shapley,
    Banzhaf,
    ShapleyIv,
    BanzhafIv,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [
        MetricKind::Shapley,
        MetricKind::Banzhaf,
        MetricKind::ShapleyIv,
        MetricKind::BanzhafIv,
    ];

    pub fn is_interaction(self) -> bool {
        matches!(self, MetricKind::ShapleyIv | MetricKind::BanzhafIv)
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Shapley => "shapley",
            MetricKind::Banzhaf => "banzhaf",
            MetricKind::ShapleyIv => "shapley-iv",
            MetricKind::BanzhafIv => "banzhaf-iv",
        }
    }
}

impl std::str::FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        MetricKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown metric `{s}`"))
    }
}

/// A weighted term: a conjunction (in a WDNF) or disjunction (in a WCNF) of
/// literals. Variables in `positive` appear as `x`, those in `negative` as `¬x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cube {
    positive: Vec<VarId>,
    negative: Vec<VarId>,
    pub weight: f64,
}

impl Cube {
    /// Builds a term, collapsing repeated literals of the same polarity.
    pub fn new(
        positive: impl IntoIterator<Item = VarId>,
        negative: impl IntoIterator<Item = VarId>,
        weight: f64,
    ) -> Self {
        let mut positive: Vec<_> = positive.into_iter().collect();
        let mut negative: Vec<_> = negative.into_iter().collect();
        positive.sort_unstable();
        positive.dedup();
        negative.sort_unstable();
        negative.dedup();
        Cube {
            positive,
            negative,
            weight,
        }
    }

    /// A term without literals.
    pub fn constant(weight: f64) -> Self {
        Cube::new([], [], weight)
    }

    pub fn positive(&self) -> &[VarId] {
        &self.positive
    }

    pub fn negative(&self) -> &[VarId] {
        &self.negative
    }

    /// `|S_k|`, the number of distinct variables (after preprocessing).
    pub fn len(&self) -> usize {
        self.positive.len() + self.negative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positive.is_empty() && self.negative.is_empty()
    }

    /// True when some variable occurs both plain and negated.
    pub fn is_contradictory(&self) -> bool {
        // both lists are sorted
        let (mut i, mut j) = (0, 0);
        while i < self.positive.len() && j < self.negative.len() {
            match self.positive[i].cmp(&self.negative[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => return true,
            }
        }
        false
    }

    fn conjunction_holds(&self, x: &[bool]) -> bool {
        self.positive.iter().all(|&v| x[v]) && self.negative.iter().all(|&v| !x[v])
    }

    fn disjunction_holds(&self, x: &[bool]) -> bool {
        self.positive.iter().any(|&v| x[v]) || self.negative.iter().any(|&v| !x[v])
    }

    fn max_var(&self) -> Option<VarId> {
        self.positive
            .last()
            .copied()
            .max(self.negative.last().copied())
    }
}

/// `F(x) = offset + Σ_k w_k · c_k(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedFormula {
    cubes: Vec<Cube>,
    form: Form,
    num_vars: usize,
    /// Constant term. Constants never receive attribution.
    pub offset: f64,
}

impl WeightedFormula {
    pub fn new(form: Form, num_vars: usize, cubes: Vec<Cube>) -> Result<Self> {
        for cube in &cubes {
            if let Some(v) = cube.max_var() {
                if v >= num_vars {
                    return Err(Error::Dimension {
                        expected: num_vars,
                        actual: v + 1,
                        context: "variable id beyond num_vars",
                    });
                }
            }
        }
        Ok(WeightedFormula {
            cubes,
            form,
            num_vars,
            offset: 0.0,
        })
    }

    pub fn wdnf(num_vars: usize, cubes: Vec<Cube>) -> Result<Self> {
        Self::new(Form::Wdnf, num_vars, cubes)
    }

    pub fn wcnf(num_vars: usize, cubes: Vec<Cube>) -> Result<Self> {
        Self::new(Form::Wcnf, num_vars, cubes)
    }

    pub fn cubes(&self) -> &[Cube] {
        &self.cubes
    }

    pub fn form(&self) -> Form {
        self.form
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    /// Concatenates the terms of two formulas of the same form.
    pub fn concat(&self, other: &WeightedFormula) -> Result<Self> {
        if self.form != other.form {
            return Err(Error::Form {
                expected: match self.form {
                    Form::Wdnf => "WDNF",
                    Form::Wcnf => "WCNF",
                },
            });
        }
        let mut cubes = self.cubes.clone();
        cubes.extend_from_slice(&other.cubes);
        let mut out = Self::new(self.form, self.num_vars.max(other.num_vars), cubes)?;
        out.offset = self.offset + other.offset;
        Ok(out)
    }

    /// Multiplies every weight (and the offset) by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        for cube in &mut out.cubes {
            cube.weight *= alpha;
        }
        out.offset *= alpha;
        out
    }

    /// Drops terms containing both `x` and `¬x`. In a WDNF such a cube is
    /// identically false; in a WCNF such a clause is identically true and its
    /// weight moves into `offset`.
    pub fn preprocess(&self) -> Self {
        let mut offset = self.offset;
        let cubes = self
            .cubes
            .iter()
            .filter(|c| {
                if !c.is_contradictory() {
                    return true;
                }
                if self.form == Form::Wcnf {
                    offset += c.weight;
                }
                false
            })
            .cloned()
            .collect();
        WeightedFormula {
            cubes,
            form: self.form,
            num_vars: self.num_vars,
            offset,
        }
    }

    fn is_preprocessed(&self) -> bool {
        self.cubes.iter().all(|c| !c.is_contradictory())
    }

    pub fn evaluate(&self, assignment: &[bool]) -> Result<f64> {
        if assignment.len() != self.num_vars {
            return Err(Error::Dimension {
                expected: self.num_vars,
                actual: assignment.len(),
                context: "assignment length",
            });
        }
        let holds = match self.form {
            Form::Wdnf => Cube::conjunction_holds,
            Form::Wcnf => Cube::disjunction_holds,
        };
        Ok(self.offset
            + self
                .cubes
                .iter()
                .filter(|c| holds(c, assignment))
                .map(|c| c.weight)
                .sum::<f64>())
    }

    /// Rewrites each clause `w·ψ` as `w − w·(¬ψ)`; the negated clause is a cube
    /// with flipped polarities and the constant `w` accumulates into `offset`.
    pub fn wcnf_to_wdnf(&self) -> Result<Self> {
        if self.form != Form::Wcnf {
            return Err(Error::Form { expected: "WCNF" });
        }
        let mut offset = self.offset;
        let cubes = self
            .cubes
            .iter()
            .map(|c| {
                offset += c.weight;
                Cube {
                    positive: c.negative.clone(),
                    negative: c.positive.clone(),
                    weight: -c.weight,
                }
            })
            .collect();
        Ok(WeightedFormula {
            cubes,
            form: Form::Wdnf,
            num_vars: self.num_vars,
            offset,
        })
    }

    pub fn shapley(&self) -> AttributionResult {
        self.singles(MetricKind::Shapley, shapley_of_cube)
    }

    pub fn banzhaf(&self) -> AttributionResult {
        self.singles(MetricKind::Banzhaf, banzhaf_of_cube)
    }

    pub fn shapley_iv(&self) -> AttributionResult {
        self.pairs(MetricKind::ShapleyIv, shapley_iv_of_cube)
    }

    pub fn banzhaf_iv(&self) -> AttributionResult {
        self.pairs(MetricKind::BanzhafIv, banzhaf_iv_of_cube)
    }

    pub fn metric(&self, kind: MetricKind) -> AttributionResult {
        match kind {
            MetricKind::Shapley => self.shapley(),
            MetricKind::Banzhaf => self.banzhaf(),
            MetricKind::ShapleyIv => self.shapley_iv(),
            MetricKind::BanzhafIv => self.banzhaf_iv(),
        }
    }

    // Single-player values need no sign change for clauses: the De Morgan
    // rewrite negates the weight and swaps |S⁺| with |S⁻|, which cancel.
    fn singles(
        &self,
        kind: MetricKind,
        per_cube: fn(&[VarId], &[VarId], f64, &mut dyn FnMut(VarId, f64)),
    ) -> AttributionResult {
        debug_assert!(self.is_preprocessed(), "preprocess() before computing metrics");
        let mut values = vec![0.0; self.num_vars];
        for cube in self.cubes.iter().filter(|c| !c.is_contradictory()) {
            per_cube(&cube.positive, &cube.negative, cube.weight, &mut |v, x| {
                values[v] += x
            });
        }
        AttributionResult {
            metric: kind,
            values: Values::Singles(values),
        }
    }

    // For clauses, interaction outputs flip sign: the weight negation survives
    // because the pair cells are symmetric in the polarity swap.
    fn pairs(
        &self,
        kind: MetricKind,
        per_cube: fn(&[VarId], &[VarId], f64, &mut dyn FnMut(VarId, VarId, f64)),
    ) -> AttributionResult {
        debug_assert!(self.is_preprocessed(), "preprocess() before computing metrics");
        let sign = match self.form {
            Form::Wdnf => 1.0,
            Form::Wcnf => -1.0,
        };
        let mut pairs = PairMatrix::zeros(self.num_vars);
        for cube in self.cubes.iter().filter(|c| !c.is_contradictory()) {
            per_cube(&cube.positive, &cube.negative, sign * cube.weight, &mut |i, j, x| {
                pairs.add(i, j, x)
            });
        }
        AttributionResult {
            metric: kind,
            values: Values::Pairs(pairs),
        }
    }
}

/// Values per player or per unordered pair of players.
#[derive(Debug, Clone, PartialEq)]
pub enum Values {
    Singles(Vec<f64>),
    Pairs(PairMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributionResult {
    pub metric: MetricKind,
    pub values: Values,
}

impl AttributionResult {
    /// Per-player values; empty for interaction metrics.
    pub fn singles(&self) -> &[f64] {
        match &self.values {
            Values::Singles(v) => v,
            Values::Pairs(_) => &[],
        }
    }

    pub fn pairs(&self) -> Option<&PairMatrix> {
        match &self.values {
            Values::Singles(_) => None,
            Values::Pairs(p) => Some(p),
        }
    }

    /// Largest absolute elementwise difference; `inf` if shapes differ.
    pub fn max_abs_diff(&self, other: &AttributionResult) -> f64 {
        let (a, b) = match (&self.values, &other.values) {
            (Values::Singles(a), Values::Singles(b)) => (a.as_slice(), b.as_slice()),
            (Values::Pairs(a), Values::Pairs(b)) if a.n == b.n => {
                (a.as_slice(), b.as_slice())
            }
            _ => return f64::INFINITY,
        };
        if a.len() != b.len() {
            return f64::INFINITY;
        }
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }
}

/// Symmetric matrix stored as its strict upper triangle, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PairMatrix {
    n: usize,
    data: Vec<f64>,
}

impl PairMatrix {
    pub fn zeros(n: usize) -> Self {
        PairMatrix {
            n,
            data: vec![0.0; pair_count(n)],
        }
    }

    pub fn from_packed(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), pair_count(n));
        PairMatrix { n, data }
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[pair_index(self.n, i, j)]
    }

    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        self.data[pair_index(self.n, i, j)] += value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `(i, j, value)` for all `i < j`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n)
            .flat_map(move |i| (i + 1..self.n).map(move |j| (i, j)))
            .zip(self.data.iter().copied())
            .map(|((i, j), v)| (i, j, v))
    }
}

pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Position of unordered pair `{i, j}` in the packed strict upper triangle.
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    assert!(i != j, "interaction values are defined for distinct players");
    let (i, j) = if i < j { (i, j) } else { (j, i) };
    debug_assert!(j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

/// `C(n, k)` by the multiplicative recurrence, in floating point.
pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for t in 1..=k {
        acc = acc * (n - k + t) as f64 / t as f64;
    }
    acc
}

// Per-term closed forms. Shared by the formula API above and by the tree
// pipeline's built-in metrics, so each factor is computed once per term.

pub(crate) fn shapley_of_cube<V: Copy>(
    positive: &[V],
    negative: &[V],
    w: f64,
    emit: &mut dyn FnMut(V, f64),
) {
    let (a, b) = (positive.len(), negative.len());
    let s = a + b;
    if a > 0 {
        let share = w / (a as f64 * binomial(s, a));
        positive.iter().for_each(|&v| emit(v, share));
    }
    if b > 0 {
        let share = -w / (b as f64 * binomial(s, b));
        negative.iter().for_each(|&v| emit(v, share));
    }
}

pub(crate) fn banzhaf_of_cube<V: Copy>(
    positive: &[V],
    negative: &[V],
    w: f64,
    emit: &mut dyn FnMut(V, f64),
) {
    let s = positive.len() + negative.len();
    if s == 0 {
        return;
    }
    let share = w / 2f64.powi(s as i32 - 1);
    positive.iter().for_each(|&v| emit(v, share));
    negative.iter().for_each(|&v| emit(v, -share));
}

pub(crate) fn shapley_iv_of_cube<V: Copy>(
    positive: &[V],
    negative: &[V],
    w: f64,
    emit: &mut dyn FnMut(V, V, f64),
) {
    let (a, b) = (positive.len(), negative.len());
    let s = a + b;
    if s < 2 {
        return;
    }
    if a >= 2 {
        let share = w / ((a - 1) as f64 * binomial(s - 1, a - 1));
        for_each_pair(positive, |i, j| emit(i, j, share));
    }
    if b >= 2 {
        let share = w / ((b - 1) as f64 * binomial(s - 1, b - 1));
        for_each_pair(negative, |i, j| emit(i, j, share));
    }
    if a >= 1 && b >= 1 {
        // a·C(s−1, a) = b·C(s−1, b), so the mixed cell is symmetric in i, j.
        let share = -w / (a as f64 * binomial(s - 1, a));
        for &i in positive {
            for &j in negative {
                emit(i, j, share);
            }
        }
    }
}

pub(crate) fn banzhaf_iv_of_cube<V: Copy>(
    positive: &[V],
    negative: &[V],
    w: f64,
    emit: &mut dyn FnMut(V, V, f64),
) {
    let s = positive.len() + negative.len();
    if s < 2 {
        return;
    }
    let share = w / 2f64.powi(s as i32 - 2);
    for_each_pair(positive, |i, j| emit(i, j, share));
    for_each_pair(negative, |i, j| emit(i, j, share));
    for &i in positive {
        for &j in negative {
            emit(i, j, -share);
        }
    }
}

fn for_each_pair<V: Copy>(vars: &[V], mut f: impl FnMut(V, V)) {
    for (k, &i) in vars.iter().enumerate() {
        for &j in &vars[k + 1..] {
            f(i, j);
        }
    }
}
