//! Maximum spanning arborescence decoding (Chu-Liu-Edmonds).

use thiserror::Error;

use crate::crf::{EdgeScores, MAX_BRUTE_FORCE_LEN};
use crate::numerics::Matrix;
use crate::tree::{for_each_tree, DependencyTree};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum DecodeError {
    #[error("cannot decode an empty sentence")]
    Empty,
    #[error("non-finite score for arc {head} -> {modifier}")]
    NonFinite { head: usize, modifier: usize },
    #[error("brute-force decoding refused for n = {n} (limit {MAX_BRUTE_FORCE_LEN})")]
    TooLarge { n: usize },
}

/// Best label of every arc and its score.
#[derive(Clone, Debug, PartialEq)]
pub struct CollapsedScores {
    n: usize,
    score: Vec<f64>,
    label: Vec<usize>,
}

impl CollapsedScores {
    /// Unlabeled arc scores from an `(n+1) x (n+1)` head-by-modifier matrix;
    /// every arc gets label 0.
    pub fn from_matrix(m: &Matrix) -> Self {
        let n = m.rows().saturating_sub(1);
        let mut out = CollapsedScores {
            n,
            score: vec![f64::NEG_INFINITY; (n + 1) * (n + 1)],
            label: vec![0; (n + 1) * (n + 1)],
        };
        for h in 0..=n {
            for dep in 1..=n {
                if h != dep {
                    out.score[h * (n + 1) + dep] = m[(h, dep)];
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn score(&self, h: usize, m: usize) -> f64 {
        self.score[h * (self.n + 1) + m]
    }

    pub fn label(&self, h: usize, m: usize) -> usize {
        self.label[h * (self.n + 1) + m]
    }

    /// Sum of arc scores of a head vector, accumulated in token order.
    pub fn total(&self, heads: &[usize]) -> f64 {
        heads
            .iter()
            .enumerate()
            .map(|(i, &h)| self.score(h, i + 1))
            .sum()
    }

    /// Copy with `c` added to every arc score.
    pub fn shifted(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.score.iter_mut().for_each(|s| *s += c);
        out
    }

    fn dense(&self) -> Vec<Vec<f64>> {
        let n = self.n;
        (0..=n)
            .map(|h| {
                (0..=n)
                    .map(|m| {
                        if m == 0 || m == h {
                            f64::NEG_INFINITY
                        } else {
                            self.score(h, m)
                        }
                    })
                    .collect()
            })
            .collect()
    }

    fn tree(&self, heads: Vec<usize>) -> DependencyTree {
        let labels = heads
            .iter()
            .enumerate()
            .map(|(i, &h)| self.label(h, i + 1))
            .collect();
        DependencyTree::new(heads, labels).expect("decoder produced an invalid tree")
    }

    fn validate(&self) -> Result<(), DecodeError> {
        if self.n == 0 {
            return Err(DecodeError::Empty);
        }
        for h in 0..=self.n {
            for m in (1..=self.n).filter(|&m| m != h) {
                if !self.score(h, m).is_finite() {
                    return Err(DecodeError::NonFinite { head: h, modifier: m });
                }
            }
        }
        Ok(())
    }
}

/// Collapses labeled scores to `max_l s[h][m][l]`, keeping the first
/// maximizing label.
pub fn best_label_per_edge(scores: &EdgeScores) -> CollapsedScores {
    let n = scores.len();
    let mut out = CollapsedScores {
        n,
        score: vec![f64::NEG_INFINITY; (n + 1) * (n + 1)],
        label: vec![0; (n + 1) * (n + 1)],
    };
    for (h, m) in scores.arcs() {
        let (best, score) = scores
            .arc(h, m)
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (l, &s)| if s > acc.1 { (l, s) } else { acc });
        out.score[h * (n + 1) + m] = score;
        out.label[h * (n + 1) + m] = best;
    }
    out
}

/// Maximum-score arborescence rooted at node 0.
///
/// With `single_root`, the root gets exactly one child: every candidate root
/// child is tried with the other root arcs removed and the best tree kept
/// (earliest candidate on ties).
pub fn decode_mst(scores: &CollapsedScores, single_root: bool) -> Result<DependencyTree, DecodeError> {
    scores.validate()?;
    let dense = scores.dense();
    if !single_root {
        let parents = chu_liu_edmonds(&dense);
        return Ok(scores.tree(parents[1..].to_vec()));
    }

    let mut best: Option<(f64, Vec<usize>)> = None;
    for child in 1..=scores.n {
        let mut masked = dense.clone();
        for m in (1..=scores.n).filter(|&m| m != child) {
            masked[0][m] = f64::NEG_INFINITY;
        }
        let heads = chu_liu_edmonds(&masked)[1..].to_vec();
        let total = scores.total(&heads);
        if best.as_ref().is_none_or(|(b, _)| total > *b) {
            best = Some((total, heads));
        }
    }
    let (_, heads) = best.expect("at least one candidate root child");
    Ok(scores.tree(heads))
}

/// Labeled decoding: best label per arc, then maximum spanning arborescence.
pub fn decode(scores: &EdgeScores, single_root: bool) -> Result<DependencyTree, DecodeError> {
    decode_mst(&best_label_per_edge(scores), single_root)
}

/// Exhaustive argmax over all trees; ties go to the lexicographically
/// smallest head vector.
pub fn brute_force_argmax(
    scores: &CollapsedScores,
    single_root: bool,
) -> Result<DependencyTree, DecodeError> {
    scores.validate()?;
    if scores.n > MAX_BRUTE_FORCE_LEN {
        return Err(DecodeError::TooLarge { n: scores.n });
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for_each_tree(scores.n, single_root, |heads| {
        let total = scores.total(heads);
        if best.as_ref().is_none_or(|(b, _)| total > *b) {
            best = Some((total, heads.to_vec()));
        }
    });
    let (_, heads) = best.expect("every non-empty sentence has a tree");
    Ok(scores.tree(heads))
}

/// Chu-Liu-Edmonds on a dense score matrix (`scores[h][m]`, `-inf` marks a
/// missing arc). Returns the parent of every node; entry 0 is unused.
fn chu_liu_edmonds(scores: &[Vec<f64>]) -> Vec<usize> {
    let size = scores.len();
    let mut parent = vec![0; size];
    for v in 1..size {
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for (u, row) in scores.iter().enumerate() {
            // Strict comparison keeps the smallest head on ties.
            if u != v && (best.0 == usize::MAX || row[v] > best.1) {
                best = (u, row[v]);
            }
        }
        parent[v] = best.0;
    }

    let cycle = match find_cycle(&parent) {
        Some(cycle) => cycle,
        None => return parent,
    };
    let mut in_cycle = vec![false; size];
    for &v in &cycle {
        in_cycle[v] = true;
    }

    // Contracted graph: surviving nodes keep their order, the cycle becomes
    // the last node.
    let kept: Vec<usize> = (0..size).filter(|&v| !in_cycle[v]).collect();
    let cnode = kept.len();
    let mut new_index = vec![usize::MAX; size];
    for (i, &v) in kept.iter().enumerate() {
        new_index[v] = i;
    }

    let mut contracted = vec![vec![f64::NEG_INFINITY; cnode + 1]; cnode + 1];
    let mut enter = vec![usize::MAX; cnode + 1];
    let mut leave = vec![usize::MAX; cnode + 1];
    for (i, &u) in kept.iter().enumerate() {
        for (j, &v) in kept.iter().enumerate() {
            if u != v {
                contracted[i][j] = scores[u][v];
            }
        }
        for &v in &cycle {
            let s = scores[u][v];
            let adjusted = if s == f64::NEG_INFINITY {
                s
            } else {
                s - scores[parent[v]][v]
            };
            if enter[i] == usize::MAX || adjusted > contracted[i][cnode] {
                contracted[i][cnode] = adjusted;
                enter[i] = v;
            }
        }
    }
    for (j, &v) in kept.iter().enumerate().skip(1) {
        for &u in &cycle {
            if leave[j] == usize::MAX || scores[u][v] > contracted[cnode][j] {
                contracted[cnode][j] = scores[u][v];
                leave[j] = u;
            }
        }
    }

    let sub = chu_liu_edmonds(&contracted);
    for (j, &v) in kept.iter().enumerate().skip(1) {
        parent[v] = if sub[j] == cnode { leave[j] } else { kept[sub[j]] };
    }
    let from = sub[cnode];
    parent[enter[from]] = kept[from];
    parent
}

/// A cycle among the parent pointers of nodes `1..`, if any.
fn find_cycle(parent: &[usize]) -> Option<Vec<usize>> {
    let size = parent.len();
    // 0 = unvisited, 1 = on current walk, 2 = done.
    let mut state = vec![0u8; size];
    state[0] = 2;
    for start in 1..size {
        let mut v = start;
        let mut walk = Vec::new();
        while state[v] == 0 {
            state[v] = 1;
            walk.push(v);
            v = parent[v];
        }
        if state[v] == 1 {
            let pos = walk.iter().position(|&w| w == v).unwrap();
            return Some(walk[pos..].to_vec());
        }
        for w in walk {
            state[w] = 2;
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_collapsed(rng: &mut ChaCha8Rng, n: usize) -> CollapsedScores {
        let rows: Vec<Vec<f64>> = (0..=n)
            .map(|_| (0..=n).map(|_| rng.gen_range(-5.0..5.0)).collect())
            .collect();
        CollapsedScores::from_matrix(&Matrix::from_rows(&rows).unwrap())
    }

    #[test]
    fn label_collapse() {
        let scores = EdgeScores::from_fn(1, 2, |_, _, l| [0.1, 0.9][l]).unwrap();
        let c = best_label_per_edge(&scores);
        assert_eq!(c.score(0, 1), 0.9);
        assert_eq!(c.label(0, 1), 1);

        let ties = best_label_per_edge(&EdgeScores::zeros(2, 3));
        assert_eq!(ties.label(1, 2), 0);

        let one = EdgeScores::from_fn(2, 1, |h, m, _| (h * 3 + m) as f64).unwrap();
        let c = best_label_per_edge(&one);
        for (h, m) in one.arcs() {
            assert_eq!(c.score(h, m), one.get(h, m, 0));
        }
    }

    #[test]
    fn empty_sentence() {
        let c = best_label_per_edge(&EdgeScores::zeros(0, 1));
        assert_eq!(decode_mst(&c, false).unwrap_err(), DecodeError::Empty);
    }

    #[test]
    fn single_token() {
        let c = best_label_per_edge(&EdgeScores::zeros(1, 1));
        assert_eq!(decode_mst(&c, false).unwrap().heads(), &[0]);
        assert_eq!(decode_mst(&c, true).unwrap().heads(), &[0]);
        assert_eq!(brute_force_argmax(&c, false).unwrap().heads(), &[0]);
    }

    #[test]
    fn two_token_example() {
        let m = Matrix::from_rows(&[
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 2.0],
            vec![0.0, 0.0, 0.0],
        ])
        .unwrap();
        let c = CollapsedScores::from_matrix(&m);
        let tree = decode_mst(&c, false).unwrap();
        assert_eq!(tree.heads(), &[0, 1]);
        assert_eq!(c.total(tree.heads()), 3.0);
    }

    #[test]
    fn brute_force_tie_break() {
        let c = best_label_per_edge(&EdgeScores::zeros(2, 1));
        assert_eq!(brute_force_argmax(&c, false).unwrap().heads(), &[0, 0]);
        assert_eq!(
            brute_force_argmax(&best_label_per_edge(&EdgeScores::zeros(9, 1)), false).unwrap_err(),
            DecodeError::TooLarge { n: 9 }
        );
    }

    #[test]
    fn contraction_is_needed() {
        // Best incoming arcs form the cycle 1 <-> 2.
        let m = Matrix::from_rows(&[
            vec![0.0, 1.0, 2.0, 0.0],
            vec![0.0, 0.0, 10.0, 3.0],
            vec![0.0, 9.0, 0.0, 1.0],
            vec![0.0, 0.0, 0.0, 0.0],
        ])
        .unwrap();
        let c = CollapsedScores::from_matrix(&m);
        let tree = decode_mst(&c, false).unwrap();
        let oracle = brute_force_argmax(&c, false).unwrap();
        assert_eq!(tree, oracle);
        assert_eq!(tree.heads(), &[0, 1, 1]);
    }

    #[test]
    fn matches_brute_force_on_random_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..300 {
            let n = rng.gen_range(1..=6);
            let c = random_collapsed(&mut rng, n);
            for single_root in [false, true] {
                let fast = decode_mst(&c, single_root).unwrap();
                let slow = brute_force_argmax(&c, single_root).unwrap();
                assert_eq!(c.total(fast.heads()), c.total(slow.heads()));
                if single_root {
                    assert_eq!(fast.root_children(), 1);
                }
            }
        }
    }
}
