//! Rooted dependency trees over tokens `1..=n` with the artificial root `0`.

use thiserror::Error;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("a dependency tree needs at least one token")]
    Empty,
    #[error("{heads} heads but {labels} labels")]
    LengthMismatch { heads: usize, labels: usize },
    #[error("token {token} has head {head}, outside 0..={n}")]
    HeadOutOfRange { token: usize, head: usize, n: usize },
    #[error("token {token} is its own head")]
    SelfLoop { token: usize },
    #[error("token {token} lies on a cycle and is not reachable from the root")]
    Cycle { token: usize },
}

/// Head and label of every token. Tokens are numbered from 1; index 0 is the
/// root symbol, which has neither head nor label.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DependencyTree {
    heads: Vec<usize>,
    labels: Vec<usize>,
}

impl DependencyTree {
    pub fn new(heads: Vec<usize>, labels: Vec<usize>) -> Result<Self, TreeError> {
        if heads.len() != labels.len() {
            return Err(TreeError::LengthMismatch {
                heads: heads.len(),
                labels: labels.len(),
            });
        }
        check_heads(&heads)?;
        Ok(DependencyTree { heads, labels })
    }

    /// Tree whose arcs all carry label 0.
    pub fn unlabeled(heads: Vec<usize>) -> Result<Self, TreeError> {
        let labels = vec![0; heads.len()];
        Self::new(heads, labels)
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    /// Head of token `m` (1-based).
    pub fn head(&self, m: usize) -> usize {
        self.heads[m - 1]
    }

    /// Label of the arc entering token `m` (1-based).
    pub fn label(&self, m: usize) -> usize {
        self.labels[m - 1]
    }

    /// Heads of tokens `1..=n`, in token order.
    pub fn heads(&self) -> &[usize] {
        &self.heads
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// `(head, modifier, label)` triples in modifier order.
    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.heads
            .iter()
            .zip(&self.labels)
            .enumerate()
            .map(|(i, (&h, &l))| (h, i + 1, l))
    }

    pub fn root_children(&self) -> usize {
        self.heads.iter().filter(|&&h| h == 0).count()
    }
}

/// Checks that `heads` (heads of tokens `1..=n`) forms an arborescence rooted
/// at node 0.
pub fn check_heads(heads: &[usize]) -> Result<(), TreeError> {
    let n = heads.len();
    if n == 0 {
        return Err(TreeError::Empty);
    }
    for (i, &h) in heads.iter().enumerate() {
        let token = i + 1;
        if h > n {
            return Err(TreeError::HeadOutOfRange { token, head: h, n });
        }
        if h == token {
            return Err(TreeError::SelfLoop { token });
        }
    }

    // 0 = unvisited, 1 = on the current path, 2 = known to reach the root.
    let mut state = vec![0u8; n + 1];
    state[0] = 2;
    let mut path = Vec::with_capacity(n);
    for start in 1..=n {
        let mut node = start;
        while state[node] == 0 {
            state[node] = 1;
            path.push(node);
            node = heads[node - 1];
        }
        if state[node] == 1 {
            return Err(TreeError::Cycle { token: node });
        }
        for &p in &path {
            state[p] = 2;
        }
        path.clear();
    }
    Ok(())
}

/// Calls `visit` with the head vector of every arborescence over `n` tokens
/// rooted at node 0, in lexicographic order of head vectors. With
/// `single_root` only trees with exactly one root child are visited.
///
/// The number of trees is `(n+1)^(n-1)`, so this is for small `n` only.
pub fn for_each_tree<F: FnMut(&[usize])>(n: usize, single_root: bool, mut visit: F) {
    fn assign<F: FnMut(&[usize])>(
        heads: &mut Vec<usize>,
        n: usize,
        single_root: bool,
        root_children: usize,
        visit: &mut F,
    ) {
        let m = heads.len() + 1;
        if m > n {
            if !single_root || root_children == 1 {
                visit(heads);
            }
            return;
        }
        for h in 0..=n {
            if h == m || (single_root && h == 0 && root_children == 1) {
                continue;
            }
            // Only the new arc can close a cycle; follow assigned heads from h.
            let mut node = h;
            let mut closes_cycle = false;
            while node != 0 && node < m {
                node = heads[node - 1];
                if node == m {
                    closes_cycle = true;
                    break;
                }
            }
            if closes_cycle {
                continue;
            }
            // h > m is not yet assigned; its chain is checked when it is.
            heads.push(h);
            assign(heads, n, single_root, root_children + usize::from(h == 0), visit);
            heads.pop();
        }
    }

    if n == 0 {
        return;
    }
    let mut heads = Vec::with_capacity(n);
    assign(&mut heads, n, single_root, 0, &mut visit);
}
