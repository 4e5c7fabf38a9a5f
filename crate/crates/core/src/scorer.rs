//! Bilinear arc scorer
//! `s(h, m, l) = φ_hᵀ W_l φ_m + U_lᵀ φ_h + V_lᵀ φ_m + b_l`.

use ndarray::{s, Array1, Array2, Array3, ArrayViewD, ArrayViewMutD, Axis};
use thiserror::Error;

use crate::crf::EdgeScores;
use crate::params::ParamSet;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ScorerError {
    #[error("representation dimension {got} does not match scorer dimension {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("score gradient covers {got_n} tokens and {got_labels} labels, expected {n} and {labels}")]
    GradientShape {
        n: usize,
        labels: usize,
        got_n: usize,
        got_labels: usize,
    },
    #[error("a sentence representation needs the root and at least one token")]
    Empty,
}

/// Per-label bilinear, head, modifier and bias parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ScorerParams {
    /// `labels x dim x dim`
    pub w: Array3<f64>,
    /// `labels x dim`, applied to the head
    pub u: Array2<f64>,
    /// `labels x dim`, applied to the modifier
    pub v: Array2<f64>,
    pub b: Array1<f64>,
}

impl ScorerParams {
    pub fn zeros(labels: usize, dim: usize) -> Self {
        ScorerParams {
            w: Array3::zeros((labels, dim, dim)),
            u: Array2::zeros((labels, dim)),
            v: Array2::zeros((labels, dim)),
            b: Array1::zeros(labels),
        }
    }

    pub fn num_labels(&self) -> usize {
        self.b.len()
    }

    pub fn dim(&self) -> usize {
        self.u.ncols()
    }
}

impl ParamSet for ScorerParams {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, ArrayViewD<'a, f64>)) {
        f("scorer.w", self.w.view().into_dyn());
        f("scorer.u", self.u.view().into_dyn());
        f("scorer.v", self.v.view().into_dyn());
        f("scorer.b", self.b.view().into_dyn());
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, f64>)) {
        f("scorer.w", self.w.view_mut().into_dyn());
        f("scorer.u", self.u.view_mut().into_dyn());
        f("scorer.v", self.v.view_mut().into_dyn());
        f("scorer.b", self.b.view_mut().into_dyn());
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.num_labels(), self.dim())
    }
}

/// Token representations, one row per position; row 0 is the root symbol.
#[derive(Clone, Debug, PartialEq)]
pub struct SentenceRepr(pub Array2<f64>);

impl SentenceRepr {
    /// Number of real tokens (excluding the root).
    pub fn len(&self) -> usize {
        self.0.nrows().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }
}

fn check(repr: &SentenceRepr, params: &ScorerParams) -> Result<(), ScorerError> {
    if repr.0.nrows() < 2 {
        return Err(ScorerError::Empty);
    }
    if repr.dim() != params.dim() {
        return Err(ScorerError::Dimension {
            expected: params.dim(),
            got: repr.dim(),
        });
    }
    Ok(())
}

pub fn score_all_edges(repr: &SentenceRepr, params: &ScorerParams) -> Result<EdgeScores, ScorerError> {
    check(repr, params)?;
    let phi = &repr.0;
    let n = repr.len();
    let labels = params.num_labels();
    let mut scores = EdgeScores::zeros(n, labels);
    for l in 0..labels {
        let w = params.w.index_axis(Axis(0), l);
        let bilinear = phi.dot(&w).dot(&phi.t());
        let head = phi.dot(&params.u.row(l));
        let modifier = phi.dot(&params.v.row(l));
        let bias = params.b[l];
        for (h, m) in scores.arcs().collect::<Vec<_>>() {
            scores.set(h, m, l, bilinear[[h, m]] + head[h] + modifier[m] + bias);
        }
    }
    Ok(scores)
}

/// Gradients of `Σ grad[h][m][l] * s[h][m][l]` with respect to the
/// representations and every scorer parameter.
pub fn score_backward(
    repr: &SentenceRepr,
    params: &ScorerParams,
    grad: &EdgeScores,
) -> Result<(Array2<f64>, ScorerParams), ScorerError> {
    check(repr, params)?;
    let n = repr.len();
    let labels = params.num_labels();
    if grad.len() != n || grad.num_labels() != labels {
        return Err(ScorerError::GradientShape {
            n,
            labels,
            got_n: grad.len(),
            got_labels: grad.num_labels(),
        });
    }

    let phi = &repr.0;
    let mut d_phi = Array2::zeros(phi.raw_dim());
    let mut d_params = params.zeros_like();
    let mut g = Array2::<f64>::zeros((n + 1, n + 1));
    for l in 0..labels {
        for (h, m) in grad.arcs() {
            g[[h, m]] = grad.get(h, m, l);
        }
        let w = params.w.index_axis(Axis(0), l);
        let head_sums = g.sum_axis(Axis(1));
        let mod_sums = g.sum_axis(Axis(0));

        d_params
            .w
            .slice_mut(s![l, .., ..])
            .assign(&phi.t().dot(&g).dot(phi));
        d_params.u.row_mut(l).assign(&phi.t().dot(&head_sums));
        d_params.v.row_mut(l).assign(&phi.t().dot(&mod_sums));
        d_params.b[l] = g.sum();

        d_phi += &g.dot(&phi.dot(&w.t()));
        d_phi += &g.t().dot(&phi.dot(&w));
        for (t, mut row) in d_phi.axis_iter_mut(Axis(0)).enumerate() {
            row.scaled_add(head_sums[t], &params.u.row(l));
            row.scaled_add(mod_sums[t], &params.v.row(l));
        }
    }
    Ok((d_phi, d_params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::testing::{get, nudge};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(rng: &mut ChaCha8Rng, labels: usize, dim: usize) -> ScorerParams {
        let mut p = ScorerParams::zeros(labels, dim);
        p.visit_mut(&mut |_, mut t| t.mapv_inplace(|_| rng.gen_range(-1.0..1.0)));
        p
    }

    fn random_repr(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> SentenceRepr {
        SentenceRepr(Array2::from_shape_fn((n + 1, dim), |_| rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn bias_only() {
        let mut p = ScorerParams::zeros(2, 3);
        p.b.fill(1.5);
        let repr = SentenceRepr(Array2::ones((4, 3)));
        let scores = score_all_edges(&repr, &p).unwrap();
        for (h, m) in scores.arcs() {
            assert_eq!(scores.arc(h, m), &[1.5, 1.5]);
        }
    }

    #[test]
    fn identity_bilinear_is_dot_product() {
        let mut p = ScorerParams::zeros(1, 3);
        p.w.slice_mut(s![0, .., ..]).assign(&Array2::eye(3));
        let repr = SentenceRepr(array![[1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]);
        let scores = score_all_edges(&repr, &p).unwrap();
        assert_eq!(scores.get(0, 1, 0), 1.0);
        assert_eq!(scores.get(0, 2, 0), 0.0);
    }

    #[test]
    fn matches_hand_expansion() {
        // Dyadic values keep every product and sum exact.
        let mut p = ScorerParams::zeros(1, 2);
        p.w.slice_mut(s![0, .., ..])
            .assign(&array![[0.5, -1.25], [2.0, 0.75]]);
        p.u.row_mut(0).assign(&array![0.25, -0.5]);
        p.v.row_mut(0).assign(&array![1.5, 0.125]);
        p.b[0] = -0.375;
        let repr = SentenceRepr(array![[1.0, 0.5], [-0.25, 2.0], [0.75, -1.5]]);
        let scores = score_all_edges(&repr, &p).unwrap();
        let x = &repr.0;
        for (h, m) in scores.arcs() {
            let (a0, a1, c0, c1) = (x[[h, 0]], x[[h, 1]], x[[m, 0]], x[[m, 1]]);
            let expected = a0 * 0.5 * c0 + a0 * -1.25 * c1 + a1 * 2.0 * c0 + a1 * 0.75 * c1
                + (0.25 * a0 - 0.5 * a1)
                + (1.5 * c0 + 0.125 * c1)
                - 0.375;
            assert_eq!(scores.get(h, m, 0), expected);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let p = ScorerParams::zeros(1, 3);
        let repr = SentenceRepr(Array2::zeros((3, 2)));
        assert_eq!(
            score_all_edges(&repr, &p).unwrap_err(),
            ScorerError::Dimension { expected: 3, got: 2 }
        );
        let repr = SentenceRepr(Array2::zeros((3, 3)));
        let grad = EdgeScores::zeros(4, 1);
        assert!(matches!(
            score_backward(&repr, &p, &grad),
            Err(ScorerError::GradientShape { .. })
        ));
    }

    #[test]
    fn modifier_term_matters() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_params(&mut rng, 1, 4);
        let repr = random_repr(&mut rng, 3, 4);
        let mut no_v = p.clone();
        no_v.v.fill(0.0);
        let a = score_all_edges(&repr, &p).unwrap();
        let b = score_all_edges(&repr, &no_v).unwrap();
        for (h, m) in a.arcs() {
            assert_ne!(a.get(h, m, 0), b.get(h, m, 0));
        }
    }

    #[test]
    fn zero_upstream_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_params(&mut rng, 2, 3);
        let repr = random_repr(&mut rng, 3, 3);
        let (d_phi, d_p) = score_backward(&repr, &p, &EdgeScores::zeros(3, 2)).unwrap();
        assert!(d_phi.iter().all(|&v| v == 0.0));
        assert!(d_p.to_flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bias_gradient_is_sum_of_upstream() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_params(&mut rng, 2, 3);
        let repr = random_repr(&mut rng, 3, 3);
        let grad = EdgeScores::from_fn(3, 2, |_, _, _| rng.gen_range(-1.0..1.0)).unwrap();
        let (_, d_p) = score_backward(&repr, &p, &grad).unwrap();
        for l in 0..2 {
            let expected: f64 = grad.arcs().map(|(h, m)| grad.get(h, m, l)).sum();
            assert!((d_p.b[l] - expected).abs() < 1e-12);
        }
    }

    fn objective(repr: &SentenceRepr, p: &ScorerParams, grad: &EdgeScores) -> f64 {
        let s = score_all_edges(repr, p).unwrap();
        s.as_slice().iter().zip(grad.as_slice()).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn finite_difference_agreement() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let step = 1e-5;
        for _ in 0..100 {
            let (n, labels, dim) = (3, 2, 3);
            let p = random_params(&mut rng, labels, dim);
            let repr = random_repr(&mut rng, n, dim);
            let grad = EdgeScores::from_fn(n, labels, |_, _, _| rng.gen_range(-1.0..1.0)).unwrap();
            let (d_phi, d_p) = score_backward(&repr, &p, &grad).unwrap();

            for (name, shape) in p.census() {
                let len: usize = shape.iter().product();
                for i in 0..len {
                    let mut plus = p.clone();
                    nudge(&mut plus, &name, i, step);
                    let mut minus = p.clone();
                    nudge(&mut minus, &name, i, -step);
                    let fd = (objective(&repr, &plus, &grad) - objective(&repr, &minus, &grad))
                        / (2.0 * step);
                    assert!((fd - get(&d_p, &name, i)).abs() < 1e-6, "{name}[{i}]");
                }
            }
            for idx in 0..d_phi.len() {
                let (r, c) = (idx / dim, idx % dim);
                let mut plus = repr.clone();
                plus.0[[r, c]] += step;
                let mut minus = repr.clone();
                minus.0[[r, c]] -= step;
                let fd = (objective(&plus, &p, &grad) - objective(&minus, &p, &grad)) / (2.0 * step);
                assert!((fd - d_phi[[r, c]]).abs() < 1e-6);
            }
        }
    }
}
