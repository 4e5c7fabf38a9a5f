//! Peephole LSTM with element-wise (Hadamard) peephole weights.
//!
//! Gate pre-activations are stacked in the order input, forget, candidate,
//! output. The input and forget gates peek at `c_{t-1}`, the output gate at
//! `c_t`. Recurrent dropout multiplies `h_{t-1}` by a per-sequence mask
//! before it enters the recurrent product.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Weights of one LSTM direction.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    /// `4H x input`
    pub w_x: Array2<f64>,
    /// `4H x H`
    pub w_h: Array2<f64>,
    /// Peephole vectors for the input, forget and output gates (`3 x H`).
    pub peep: Array2<f64>,
    /// `4H`
    pub bias: Array1<f64>,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmParams {
            w_x: Array2::zeros((4 * hidden, input)),
            w_h: Array2::zeros((4 * hidden, hidden)),
            peep: Array2::zeros((3, hidden)),
            bias: Array1::zeros(4 * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_h.ncols()
    }

    pub fn input(&self) -> usize {
        self.w_x.ncols()
    }
}

/// Gate activations and states of one time step.
#[derive(Clone, Debug)]
pub struct CellState {
    /// `[i, f, g, o]` after their nonlinearities, `4H`.
    pub gates: Array1<f64>,
    pub c: Array1<f64>,
    pub h: Array1<f64>,
}

/// Applies the gate nonlinearities to stacked pre-activations `pre`
/// (without peephole terms).
fn cell_from_preactivation(
    pre: ArrayView1<f64>,
    c_prev: ArrayView1<f64>,
    peep: &Array2<f64>,
) -> CellState {
    let hidden = c_prev.len();
    let mut gates = Array1::zeros(4 * hidden);
    let mut c = Array1::zeros(hidden);
    let mut h = Array1::zeros(hidden);
    for j in 0..hidden {
        let i = sigmoid(pre[j] + peep[[0, j]] * c_prev[j]);
        let f = sigmoid(pre[hidden + j] + peep[[1, j]] * c_prev[j]);
        let g = pre[2 * hidden + j].tanh();
        let cj = f * c_prev[j] + i * g;
        let o = sigmoid(pre[3 * hidden + j] + peep[[2, j]] * cj);
        gates[j] = i;
        gates[hidden + j] = f;
        gates[2 * hidden + j] = g;
        gates[3 * hidden + j] = o;
        c[j] = cj;
        h[j] = o * cj.tanh();
    }
    CellState { gates, c, h }
}

/// One LSTM step from input `x` and the previous state.
pub fn lstm_cell_step(
    x: ArrayView1<f64>,
    h_prev: ArrayView1<f64>,
    c_prev: ArrayView1<f64>,
    params: &LstmParams,
) -> CellState {
    let pre = params.w_x.dot(&x) + params.w_h.dot(&h_prev) + &params.bias;
    cell_from_preactivation(pre.view(), c_prev, &params.peep)
}

/// Everything the backward pass needs from a forward run over a sequence.
#[derive(Clone, Debug)]
pub struct LstmTrace {
    input: Array2<f64>,
    /// Recurrent input of each step: `h_{t-1} ⊙ mask` (zero at t = 0).
    h_in: Array2<f64>,
    gates: Array2<f64>,
    c: Array2<f64>,
    h: Array2<f64>,
    mask: Option<Array1<f64>>,
}

impl LstmTrace {
    /// Hidden states, one row per time step.
    pub fn hidden(&self) -> &Array2<f64> {
        &self.h
    }
}

/// Runs one direction over the rows of `input` starting from zero state.
pub fn lstm_forward(params: &LstmParams, input: Array2<f64>, mask: Option<&Array1<f64>>) -> LstmTrace {
    let steps = input.nrows();
    let hidden = params.hidden();
    let projected = input.dot(&params.w_x.t()) + &params.bias;
    let mut h_in = Array2::zeros((steps, hidden));
    let mut gates = Array2::zeros((steps, 4 * hidden));
    let mut c = Array2::zeros((steps, hidden));
    let mut h = Array2::zeros((steps, hidden));
    let mut c_prev = Array1::zeros(hidden);
    let mut h_prev = Array1::<f64>::zeros(hidden);
    for t in 0..steps {
        let recurrent = match mask {
            Some(m) => &h_prev * m,
            None => h_prev.clone(),
        };
        let pre = &projected.row(t) + &params.w_h.dot(&recurrent);
        let state = cell_from_preactivation(pre.view(), c_prev.view(), &params.peep);
        h_in.row_mut(t).assign(&recurrent);
        gates.row_mut(t).assign(&state.gates);
        c.row_mut(t).assign(&state.c);
        h.row_mut(t).assign(&state.h);
        c_prev = state.c;
        h_prev = state.h;
    }
    LstmTrace {
        input,
        h_in,
        gates,
        c,
        h,
        mask: mask.cloned(),
    }
}

/// Backpropagates `d_h` (gradient w.r.t. every hidden state) through the
/// sequence, accumulating parameter gradients into `grads` and returning the
/// gradient w.r.t. the input rows.
pub fn lstm_backward(
    params: &LstmParams,
    trace: &LstmTrace,
    d_h: ArrayView2<f64>,
    grads: &mut LstmParams,
) -> Array2<f64> {
    let steps = trace.h.nrows();
    let hidden = params.hidden();
    let mut d_pre = Array2::<f64>::zeros((steps, 4 * hidden));
    let mut dh_next = Array1::<f64>::zeros(hidden);
    let mut dc_next = Array1::<f64>::zeros(hidden);
    let zeros = Array1::<f64>::zeros(hidden);
    let peep = &params.peep;
    // Row-major copy so the per-step product runs over contiguous rows.
    let w_h_t = params.w_h.t().as_standard_layout().into_owned();

    for t in (0..steps).rev() {
        let gates = trace.gates.row(t);
        let c = trace.c.row(t);
        let c_prev = if t > 0 { trace.c.row(t - 1) } else { zeros.view() };
        let mut dz = d_pre.row_mut(t);
        for j in 0..hidden {
            let (i, f, g, o) = (
                gates[j],
                gates[hidden + j],
                gates[2 * hidden + j],
                gates[3 * hidden + j],
            );
            let dh = d_h[[t, j]] + dh_next[j];
            let tc = c[j].tanh();
            let dzo = dh * tc * o * (1.0 - o);
            let dc = dc_next[j] + dh * o * (1.0 - tc * tc) + dzo * peep[[2, j]];
            let dzf = dc * c_prev[j] * f * (1.0 - f);
            let dzi = dc * g * i * (1.0 - i);
            let dzg = dc * i * (1.0 - g * g);
            grads.peep[[0, j]] += dzi * c_prev[j];
            grads.peep[[1, j]] += dzf * c_prev[j];
            grads.peep[[2, j]] += dzo * c[j];
            dc_next[j] = dc * f + dzi * peep[[0, j]] + dzf * peep[[1, j]];
            dz[j] = dzi;
            dz[hidden + j] = dzf;
            dz[2 * hidden + j] = dzg;
            dz[3 * hidden + j] = dzo;
        }
        dh_next.assign(&w_h_t.dot(&d_pre.row(t)));
        if let Some(m) = &trace.mask {
            dh_next *= m;
        }
    }

    general_mat_mul(1.0, &d_pre.t(), &trace.input, 1.0, &mut grads.w_x);
    general_mat_mul(1.0, &d_pre.t(), &trace.h_in, 1.0, &mut grads.w_h);
    grads.bias += &d_pre.sum_axis(Axis(0));
    d_pre.dot(&params.w_x)
}

/// Forward and backward directions of one bidirectional layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BiLstmParams {
    pub forward: LstmParams,
    pub backward: LstmParams,
}

impl BiLstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        BiLstmParams {
            forward: LstmParams::zeros(input, hidden),
            backward: LstmParams::zeros(input, hidden),
        }
    }
}

/// Recurrent dropout masks of one layer, one per direction.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentMasks {
    pub forward: Array1<f64>,
    pub backward: Array1<f64>,
}

fn reversed(a: &Array2<f64>) -> Array2<f64> {
    a.slice(s![..;-1, ..]).to_owned()
}

/// Forward trace of one bidirectional layer.
#[derive(Clone, Debug)]
pub struct BiLstmTrace {
    forward: LstmTrace,
    /// Trace of the backward direction over the reversed sequence.
    backward: LstmTrace,
}

impl BiLstmTrace {
    /// `[h_forward, h_backward]` per position (`T x 2H`).
    pub fn output(&self) -> Array2<f64> {
        let fwd = self.forward.hidden();
        let bwd = reversed(self.backward.hidden());
        ndarray::concatenate![Axis(1), *fwd, bwd]
    }
}

pub fn bilstm_forward(
    params: &BiLstmParams,
    input: Array2<f64>,
    masks: Option<&RecurrentMasks>,
) -> BiLstmTrace {
    let rev = reversed(&input);
    BiLstmTrace {
        forward: lstm_forward(&params.forward, input, masks.map(|m| &m.forward)),
        backward: lstm_forward(&params.backward, rev, masks.map(|m| &m.backward)),
    }
}

/// Backpropagates a `T x 2H` output gradient; returns the input gradient.
pub fn bilstm_backward(
    params: &BiLstmParams,
    trace: &BiLstmTrace,
    d_out: ArrayView2<f64>,
    grads: &mut BiLstmParams,
) -> Array2<f64> {
    let hidden = params.forward.hidden();
    let d_fwd = d_out.slice(s![.., ..hidden]);
    let d_bwd = d_out.slice(s![..;-1, hidden..]).to_owned();
    let mut d_in = lstm_backward(&params.forward, &trace.forward, d_fwd, &mut grads.forward);
    let d_in_rev = lstm_backward(&params.backward, &trace.backward, d_bwd.view(), &mut grads.backward);
    d_in += &d_in_rev.slice(s![..;-1, ..]);
    d_in
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_lstm(rng: &mut ChaCha8Rng, input: usize, hidden: usize) -> LstmParams {
        let mut p = LstmParams::zeros(input, hidden);
        for a in [&mut p.w_x, &mut p.w_h, &mut p.peep] {
            a.mapv_inplace(|_| rng.gen_range(-0.8..0.8));
        }
        p.bias.mapv_inplace(|_| rng.gen_range(-0.5..0.5));
        p
    }

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn zero_weights_and_input_give_zero_state() {
        let p = LstmParams::zeros(3, 4);
        let z = Array1::zeros(4);
        let state = lstm_cell_step(Array1::zeros(3).view(), z.view(), z.view(), &p);
        assert!(state.h.iter().all(|&v| v == 0.0));
        assert!(state.c.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_forget_gate_keeps_cell() {
        let mut p = LstmParams::zeros(2, 3);
        p.bias.slice_mut(s![0..3]).fill(-1e3);
        p.bias.slice_mut(s![3..6]).fill(1e3);
        let c_prev = ndarray::array![0.3, -1.2, 2.0];
        let state = lstm_cell_step(
            ndarray::array![0.5, -0.5].view(),
            Array1::zeros(3).view(),
            c_prev.view(),
            &p,
        );
        for j in 0..3 {
            assert!((state.c[j] - c_prev[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn sequence_matches_repeated_cell_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_lstm(&mut rng, 3, 4);
        let x = random_matrix(&mut rng, 5, 3);
        let trace = lstm_forward(&p, x.clone(), None);
        let mut h = Array1::zeros(4);
        let mut c = Array1::zeros(4);
        for t in 0..5 {
            let s = lstm_cell_step(x.row(t), h.view(), c.view(), &p);
            for j in 0..4 {
                assert!((s.h[j] - trace.hidden()[[t, j]]).abs() < 1e-14);
            }
            h = s.h;
            c = s.c;
        }
    }

    fn weighted_loss(out: &Array2<f64>, weights: &Array2<f64>) -> f64 {
        (out * weights).sum()
    }

    #[test]
    fn lstm_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (steps, input, hidden) = (4, 3, 3);
        let p = random_lstm(&mut rng, input, hidden);
        let x = random_matrix(&mut rng, steps, input);
        let weights = random_matrix(&mut rng, steps, hidden);
        let mask = Array1::from_shape_fn(hidden, |j| if j == 1 { 0.0 } else { 1.0 / 0.75 });

        let trace = lstm_forward(&p, x.clone(), Some(&mask));
        let mut grads = LstmParams::zeros(input, hidden);
        let d_x = lstm_backward(&p, &trace, weights.view(), &mut grads);

        let loss = |p: &LstmParams, x: &Array2<f64>| {
            weighted_loss(lstm_forward(p, x.clone(), Some(&mask)).hidden(), &weights)
        };
        let step = 1e-6;
        let check = |analytic: f64, plus: f64, minus: f64| {
            let fd = (plus - minus) / (2.0 * step);
            assert!(
                (fd - analytic).abs() <= 1e-6 * fd.abs().max(1.0),
                "fd {fd} vs analytic {analytic}"
            );
        };
        macro_rules! check_block {
            ($field:ident) => {
                for idx in 0..p.$field.len() {
                    let mut plus = p.clone();
                    plus.$field.as_slice_mut().unwrap()[idx] += step;
                    let mut minus = p.clone();
                    minus.$field.as_slice_mut().unwrap()[idx] -= step;
                    check(
                        grads.$field.as_slice().unwrap()[idx],
                        loss(&plus, &x),
                        loss(&minus, &x),
                    );
                }
            };
        }
        check_block!(w_x);
        check_block!(w_h);
        check_block!(peep);
        check_block!(bias);
        for idx in 0..x.len() {
            let mut plus = x.clone();
            plus.as_slice_mut().unwrap()[idx] += step;
            let mut minus = x.clone();
            minus.as_slice_mut().unwrap()[idx] -= step;
            check(d_x.as_slice().unwrap()[idx], loss(&p, &plus), loss(&p, &minus));
        }
    }

    #[test]
    fn single_step_sequence_directions_share_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let fwd = random_lstm(&mut rng, 2, 3);
        let params = BiLstmParams {
            forward: fwd.clone(),
            backward: fwd,
        };
        let out = bilstm_forward(&params, random_matrix(&mut rng, 1, 2), None).output();
        for j in 0..3 {
            assert_eq!(out[[0, j]], out[[0, 3 + j]]);
        }
    }

    #[test]
    fn palindrome_with_tied_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let fwd = random_lstm(&mut rng, 2, 3);
        let params = BiLstmParams {
            forward: fwd.clone(),
            backward: fwd,
        };
        let half = random_matrix(&mut rng, 2, 2);
        let x = ndarray::concatenate![Axis(0), half, half.slice(s![..;-1, ..])];
        let out = bilstm_forward(&params, x, None).output();
        let steps = out.nrows();
        for t in 0..steps {
            for j in 0..3 {
                assert_eq!(out[[t, j]], out[[steps - 1 - t, 3 + j]]);
            }
        }
    }

    #[test]
    fn bilstm_input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let params = BiLstmParams {
            forward: random_lstm(&mut rng, 2, 3),
            backward: random_lstm(&mut rng, 2, 3),
        };
        let x = random_matrix(&mut rng, 4, 2);
        let weights = random_matrix(&mut rng, 4, 6);
        let trace = bilstm_forward(&params, x.clone(), None);
        let mut grads = BiLstmParams::zeros(2, 3);
        let d_x = bilstm_backward(&params, &trace, weights.view(), &mut grads);
        let step = 1e-6;
        for idx in 0..x.len() {
            let mut plus = x.clone();
            plus.as_slice_mut().unwrap()[idx] += step;
            let mut minus = x.clone();
            minus.as_slice_mut().unwrap()[idx] -= step;
            let fd = (weighted_loss(&bilstm_forward(&params, plus, None).output(), &weights)
                - weighted_loss(&bilstm_forward(&params, minus, None).output(), &weights))
                / (2.0 * step);
            assert!((fd - d_x.as_slice().unwrap()[idx]).abs() < 1e-6);
        }
    }
}
