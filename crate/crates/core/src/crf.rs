//! Log-linear distribution over non-projective dependency trees.
//!
//! The partition function and arc marginals come from the directed
//! Matrix-Tree Theorem: with arc potentials `A[h][m] = Σ_l exp(s[h][m][l])`
//! and in-degree Laplacian `L = D - A`, the total weight of all
//! arborescences rooted at node 0 is the determinant of `L` with row and
//! column 0 removed, and arc marginals follow from the inverse of that
//! minor.

use thiserror::Error;

use crate::numerics::{lu_factorize, Matrix, NumericsError};
use crate::tree::{for_each_tree, DependencyTree};

/// Largest sentence length accepted by the enumeration oracles.
pub const MAX_BRUTE_FORCE_LEN: usize = 8;

/// Marginals may leave `[0, 1]` by this much before clamping is considered
/// suspicious.
pub const CLAMP_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum CrfError {
    #[error("sentence has no tokens")]
    Empty,
    #[error("at least one label is required")]
    NoLabels,
    #[error("non-finite score at (head {head}, modifier {modifier}, label {label})")]
    NonFinite {
        head: usize,
        modifier: usize,
        label: usize,
    },
    #[error("gold tree has {gold} tokens but the scores cover {scores}")]
    LengthMismatch { gold: usize, scores: usize },
    #[error("gold label {label} of token {token} is outside 0..{labels}")]
    LabelOutOfRange {
        token: usize,
        label: usize,
        labels: usize,
    },
    #[error("Laplacian minor of a {n}-token sentence is not positive definite ({source})")]
    Inference { n: usize, source: NumericsError },
    #[error("brute-force enumeration refused for n = {n} (limit {MAX_BRUTE_FORCE_LEN})")]
    TooLarge { n: usize },
}

/// Dense arc scores `s[h][m][l]` for heads `0..=n`, modifiers `0..=n` and
/// labels `0..L`. Entries with `m == 0` or `h == m` are not arcs and are
/// ignored by every consumer.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeScores {
    n: usize,
    labels: usize,
    data: Vec<f64>,
}

impl EdgeScores {
    pub fn zeros(n: usize, labels: usize) -> Self {
        assert!(labels >= 1, "at least one label is required");
        EdgeScores {
            n,
            labels,
            data: vec![0.0; (n + 1) * (n + 1) * labels],
        }
    }

    /// Builds scores from `f(h, m, l)`, evaluated on arcs only.
    pub fn from_fn<F>(n: usize, labels: usize, mut f: F) -> Result<Self, CrfError>
    where
        F: FnMut(usize, usize, usize) -> f64,
    {
        if labels == 0 {
            return Err(CrfError::NoLabels);
        }
        let mut scores = Self::zeros(n, labels);
        for (h, m) in arcs(n) {
            for l in 0..labels {
                let v = f(h, m, l);
                if !v.is_finite() {
                    return Err(CrfError::NonFinite {
                        head: h,
                        modifier: m,
                        label: l,
                    });
                }
                scores.set(h, m, l, v);
            }
        }
        Ok(scores)
    }

    /// Single-label scores from an `(n+1) x (n+1)` head-by-modifier matrix.
    pub fn unlabeled(arc_scores: &Matrix) -> Result<Self, CrfError> {
        let n = arc_scores.rows().saturating_sub(1);
        Self::from_fn(n, 1, |h, m, _| arc_scores[(h, m)])
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn num_labels(&self) -> usize {
        self.labels
    }

    #[inline]
    fn offset(&self, h: usize, m: usize, l: usize) -> usize {
        debug_assert!(h <= self.n && m <= self.n && l < self.labels);
        (h * (self.n + 1) + m) * self.labels + l
    }

    #[inline]
    pub fn get(&self, h: usize, m: usize, l: usize) -> f64 {
        self.data[self.offset(h, m, l)]
    }

    #[inline]
    pub fn set(&mut self, h: usize, m: usize, l: usize, v: f64) {
        let i = self.offset(h, m, l);
        self.data[i] = v;
    }

    #[inline]
    pub fn add(&mut self, h: usize, m: usize, l: usize, v: f64) {
        let i = self.offset(h, m, l);
        self.data[i] += v;
    }

    /// Label scores of arc `h -> m`.
    pub fn arc(&self, h: usize, m: usize) -> &[f64] {
        let i = self.offset(h, m, 0);
        &self.data[i..i + self.labels]
    }

    pub fn arc_mut(&mut self, h: usize, m: usize) -> &mut [f64] {
        let i = self.offset(h, m, 0);
        &mut self.data[i..i + self.labels]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Arcs `(h, m)` with `m >= 1` and `h != m`.
    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize)> {
        arcs(self.n)
    }

    /// Largest score over all arcs and labels.
    pub fn max_score(&self) -> f64 {
        self.arcs()
            .flat_map(|(h, m)| self.arc(h, m).iter().copied())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Copy with `c` added to every arc score.
    pub fn shifted(&self, c: f64) -> Self {
        let mut out = self.clone();
        for (h, m) in arcs(self.n) {
            out.arc_mut(h, m).iter_mut().for_each(|v| *v += c);
        }
        out
    }

    /// Total score of a labeled tree.
    pub fn tree_score(&self, tree: &DependencyTree) -> f64 {
        tree.arcs().map(|(h, m, l)| self.get(h, m, l)).sum()
    }

    fn validate(&self) -> Result<(), CrfError> {
        if self.n == 0 {
            return Err(CrfError::Empty);
        }
        for (h, m) in self.arcs() {
            for (l, v) in self.arc(h, m).iter().enumerate() {
                if !v.is_finite() {
                    return Err(CrfError::NonFinite {
                        head: h,
                        modifier: m,
                        label: l,
                    });
                }
            }
        }
        Ok(())
    }

    fn check_gold(&self, gold: &DependencyTree) -> Result<(), CrfError> {
        if gold.len() != self.n {
            return Err(CrfError::LengthMismatch {
                gold: gold.len(),
                scores: self.n,
            });
        }
        for (_, m, l) in gold.arcs() {
            if l >= self.labels {
                return Err(CrfError::LabelOutOfRange {
                    token: m,
                    label: l,
                    labels: self.labels,
                });
            }
        }
        Ok(())
    }
}

fn arcs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..=n).flat_map(move |h| (1..=n).filter(move |&m| m != h).map(move |m| (h, m)))
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Arc marginals `μ[h][m][l]` together with their label sums `μ[h][m]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalTable {
    n: usize,
    labels: usize,
    arc: Vec<f64>,
    labeled: Vec<f64>,
}

impl MarginalTable {
    fn zeros(n: usize, labels: usize) -> Self {
        MarginalTable {
            n,
            labels,
            arc: vec![0.0; (n + 1) * (n + 1)],
            labeled: vec![0.0; (n + 1) * (n + 1) * labels],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn num_labels(&self) -> usize {
        self.labels
    }

    /// Probability that arc `h -> m` is in the tree, summed over labels.
    pub fn arc(&self, h: usize, m: usize) -> f64 {
        self.arc[h * (self.n + 1) + m]
    }

    pub fn labeled(&self, h: usize, m: usize, l: usize) -> f64 {
        self.labeled[(h * (self.n + 1) + m) * self.labels + l]
    }

    fn labeled_mut(&mut self, h: usize, m: usize, l: usize) -> &mut f64 {
        &mut self.labeled[(h * (self.n + 1) + m) * self.labels + l]
    }

    fn arc_mut(&mut self, h: usize, m: usize) -> &mut f64 {
        &mut self.arc[h * (self.n + 1) + m]
    }

    /// Labeled marginals in the layout of [`EdgeScores`].
    pub fn to_edge_tensor(&self) -> EdgeScores {
        EdgeScores {
            n: self.n,
            labels: self.labels,
            data: self.labeled.clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LogPartitionResult {
    pub log_z: f64,
    /// Constant subtracted from every score before exponentiation.
    pub shift: f64,
    pub marginals: MarginalTable,
    /// Largest distance by which a raw marginal fell outside `[0, 1]`.
    pub clamp_violation: f64,
}

/// Weighted adjacency matrix of the complete arc graph.
#[derive(Clone, Debug)]
pub struct Adjacency {
    pub matrix: Matrix,
    pub shift: f64,
}

/// `A[h][m] = Σ_l exp(s[h][m][l] - shift)` with `shift` the largest arc
/// score. Column 0 and the diagonal are zero.
pub fn build_adjacency(scores: &EdgeScores) -> Result<Adjacency, CrfError> {
    scores.validate()?;
    let n = scores.n;
    let shift = scores.max_score();
    let mut matrix = Matrix::zeros(n + 1, n + 1);
    for (h, m) in scores.arcs() {
        matrix[(h, m)] = scores.arc(h, m).iter().map(|s| (s - shift).exp()).sum();
    }
    Ok(Adjacency { matrix, shift })
}

/// Log-partition function and arc marginals via the Matrix-Tree Theorem.
pub fn log_partition(scores: &EdgeScores) -> Result<LogPartitionResult, CrfError> {
    let Adjacency { matrix: adj, shift } = build_adjacency(scores)?;
    let n = scores.n;
    let labels = scores.labels;

    // Laplacian with the root row and column removed; index i is node i+1.
    let mut minor = Matrix::zeros(n, n);
    for m in 1..=n {
        let in_weight: f64 = (0..=n).map(|h| adj[(h, m)]).sum();
        minor[(m - 1, m - 1)] = in_weight;
        for h in 1..=n {
            if h != m {
                minor[(h - 1, m - 1)] = -adj[(h, m)];
            }
        }
    }

    let inference = |source| CrfError::Inference { n, source };
    let lu = lu_factorize(&minor).map_err(inference)?;
    let (sign, log_det) = lu.sign_log_det();
    if sign <= 0 {
        let pivot = lu.singular_pivot().unwrap_or(n - 1);
        return Err(inference(NumericsError::Singular { pivot }));
    }
    let inv = lu.inverse().map_err(inference)?;

    let mut marginals = MarginalTable::zeros(n, labels);
    let mut clamp_violation: f64 = 0.0;
    let mut label_post = vec![0.0; labels];
    for (h, m) in scores.arcs() {
        let weight = adj[(h, m)];
        let raw = if h == 0 {
            weight * inv[(m - 1, m - 1)]
        } else {
            weight * (inv[(m - 1, m - 1)] - inv[(m - 1, h - 1)])
        };
        clamp_violation = clamp_violation.max(-raw).max(raw - 1.0);
        let mu = raw.clamp(0.0, 1.0);
        *marginals.arc_mut(h, m) = mu;

        let arc = scores.arc(h, m);
        let lse = log_sum_exp(arc);
        for (p, s) in label_post.iter_mut().zip(arc) {
            *p = (s - lse).exp();
        }
        for (l, p) in label_post.iter().enumerate() {
            *marginals.labeled_mut(h, m, l) = mu * p;
        }
    }
    if clamp_violation > CLAMP_TOLERANCE {
        log::warn!(
            "arc marginals of a {n}-token sentence left [0, 1] by {clamp_violation:e}; clamped"
        );
    }

    Ok(LogPartitionResult {
        log_z: log_det + n as f64 * shift,
        shift,
        marginals,
        clamp_violation: clamp_violation.max(0.0),
    })
}

/// Gradient of `log Z` with respect to every score: the labeled marginals.
pub fn marginal_gradient_of_log_z(scores: &EdgeScores) -> Result<EdgeScores, CrfError> {
    Ok(log_partition(scores)?.marginals.to_edge_tensor())
}

/// Negative log-likelihood of `gold` and its gradient `μ - 1[gold]`.
pub fn nll_loss_and_grad(
    scores: &EdgeScores,
    gold: &DependencyTree,
) -> Result<(f64, EdgeScores), CrfError> {
    scores.check_gold(gold)?;
    let result = log_partition(scores)?;
    let loss = result.log_z - scores.tree_score(gold);
    let mut grad = result.marginals.to_edge_tensor();
    for (h, m, l) in gold.arcs() {
        grad.add(h, m, l, -1.0);
    }
    Ok((loss, grad))
}

/// Cross-entropy of independently selecting each token's `(head, label)`
/// with a softmax over all candidate heads and labels. No tree constraint.
pub fn head_selection_loss(
    scores: &EdgeScores,
    gold: &DependencyTree,
) -> Result<(f64, EdgeScores), CrfError> {
    scores.validate()?;
    scores.check_gold(gold)?;
    let n = scores.n;
    let labels = scores.labels;
    let mut grad = EdgeScores::zeros(n, labels);
    let mut loss = 0.0;
    let mut column = Vec::with_capacity(n * labels);
    for m in 1..=n {
        column.clear();
        for h in (0..=n).filter(|&h| h != m) {
            column.extend_from_slice(scores.arc(h, m));
        }
        let lse = log_sum_exp(&column);
        loss += lse - scores.get(gold.head(m), m, gold.label(m));
        for h in (0..=n).filter(|&h| h != m) {
            for l in 0..labels {
                grad.set(h, m, l, (scores.get(h, m, l) - lse).exp());
            }
        }
        grad.add(gold.head(m), m, gold.label(m), -1.0);
    }
    Ok((loss, grad))
}

/// Exact log-partition function and marginals by enumerating every
/// arborescence rooted at node 0. Refuses `n > MAX_BRUTE_FORCE_LEN`.
pub fn brute_force_partition(scores: &EdgeScores) -> Result<(f64, MarginalTable), CrfError> {
    scores.validate()?;
    let n = scores.n;
    if n > MAX_BRUTE_FORCE_LEN {
        return Err(CrfError::TooLarge { n });
    }
    let labels = scores.labels;

    // Labels of distinct arcs are chosen independently, so the label sum
    // of a fixed head vector factorizes into per-arc log-sum-exps.
    let mut arc_lse = vec![0.0; (n + 1) * (n + 1)];
    for (h, m) in scores.arcs() {
        arc_lse[h * (n + 1) + m] = log_sum_exp(scores.arc(h, m));
    }

    let mut trees: Vec<(Vec<usize>, f64)> = Vec::new();
    for_each_tree(n, false, |heads| {
        let total = heads
            .iter()
            .enumerate()
            .map(|(i, &h)| arc_lse[h * (n + 1) + i + 1])
            .sum();
        trees.push((heads.to_vec(), total));
    });
    let totals: Vec<f64> = trees.iter().map(|t| t.1).collect();
    let log_z = log_sum_exp(&totals);

    let mut marginals = MarginalTable::zeros(n, labels);
    for (heads, total) in &trees {
        let p = (total - log_z).exp();
        for (i, &h) in heads.iter().enumerate() {
            let m = i + 1;
            *marginals.arc_mut(h, m) += p;
            let lse = arc_lse[h * (n + 1) + m];
            for l in 0..labels {
                *marginals.labeled_mut(h, m, l) += p * (scores.get(h, m, l) - lse).exp();
            }
        }
    }
    Ok((log_z, marginals))
}
