//! Character-level CNN: character embeddings, a 1-d convolution over a
//! fixed window and max-over-time pooling.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayViewD, ArrayViewMutD, Axis};

use crate::params::ParamSet;
use crate::data::vocab::{PAD, UNK};

#[derive(Clone, Debug, PartialEq)]
pub struct CharCnnParams {
    /// `chars x char_dim`
    pub embedding: Array2<f64>,
    /// `filters x (window * char_dim)`
    pub filters: Array2<f64>,
    pub bias: Array1<f64>,
}

impl CharCnnParams {
    pub fn zeros(chars: usize, char_dim: usize, window: usize, filters: usize) -> Self {
        CharCnnParams {
            embedding: Array2::zeros((chars, char_dim)),
            filters: Array2::zeros((filters, window * char_dim)),
            bias: Array1::zeros(filters),
        }
    }

    pub fn char_dim(&self) -> usize {
        self.embedding.ncols()
    }

    pub fn window(&self) -> usize {
        self.filters.ncols() / self.char_dim()
    }

    pub fn num_filters(&self) -> usize {
        self.filters.nrows()
    }
}

impl ParamSet for CharCnnParams {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, ArrayViewD<'a, f64>)) {
        f("char.embedding", self.embedding.view().into_dyn());
        f("char.filters", self.filters.view().into_dyn());
        f("char.bias", self.bias.view().into_dyn());
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, f64>)) {
        f("char.embedding", self.embedding.view_mut().into_dyn());
        f("char.filters", self.filters.view_mut().into_dyn());
        f("char.bias", self.bias.view_mut().into_dyn());
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(
            self.embedding.nrows(),
            self.char_dim(),
            self.window(),
            self.num_filters(),
        )
    }
}

/// Character ids of a word, padded with `(window - 1) / 2` PAD ids on each
/// side so every character is the centre of one window. Ids outside the
/// table map to UNK.
pub fn padded_ids(chars: &[usize], window: usize, table_size: usize) -> Vec<usize> {
    let pad = (window - 1) / 2;
    let mut ids = vec![PAD; pad];
    if chars.is_empty() {
        ids.push(PAD);
    }
    ids.extend(chars.iter().map(|&c| if c < table_size { c } else { UNK }));
    ids.extend(std::iter::repeat_n(PAD, pad));
    ids
}

/// Forward state of one word.
#[derive(Clone, Debug)]
pub struct CharCnnTrace {
    ids: Vec<usize>,
    /// Flattened (masked) embedding window at every position.
    windows: Array2<f64>,
    /// Position achieving the maximum for every filter.
    argmax: Vec<usize>,
    mask: Option<Array2<f64>>,
}

/// Convolution + max pooling for one word. `mask`, when present, multiplies
/// the padded character embedding matrix element-wise.
pub fn char_cnn_forward(
    params: &CharCnnParams,
    chars: &[usize],
    mask: Option<&Array2<f64>>,
) -> (Array1<f64>, CharCnnTrace) {
    let window = params.window();
    let dim = params.char_dim();
    let ids = padded_ids(chars, window, params.embedding.nrows());
    let mut embedded = Array2::zeros((ids.len(), dim));
    for (row, &id) in embedded.axis_iter_mut(Axis(0)).zip(&ids) {
        let mut row = row;
        row.assign(&params.embedding.row(id));
    }
    if let Some(m) = mask {
        embedded *= m;
    }
    let positions = ids.len() + 1 - window;
    let mut windows = Array2::zeros((positions, window * dim));
    for p in 0..positions {
        for k in 0..window {
            windows
                .row_mut(p)
                .slice_mut(ndarray::s![k * dim..(k + 1) * dim])
                .assign(&embedded.row(p + k));
        }
    }
    let conv = windows.dot(&params.filters.t()) + &params.bias;
    let filters = params.num_filters();
    let mut out = Array1::zeros(filters);
    let mut argmax = vec![0; filters];
    for f in 0..filters {
        let (best, value) = conv
            .column(f)
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (p, &v)| if v > acc.1 { (p, v) } else { acc });
        out[f] = value;
        argmax[f] = best;
    }
    (
        out,
        CharCnnTrace {
            ids,
            windows,
            argmax,
            mask: mask.cloned(),
        },
    )
}

/// Accumulates gradients of one word given `d_out` w.r.t. its pooled output.
pub fn char_cnn_backward(
    params: &CharCnnParams,
    trace: &CharCnnTrace,
    d_out: ArrayView1<f64>,
    grads: &mut CharCnnParams,
) {
    let dim = params.char_dim();
    let window = params.window();
    let mut d_conv = Array2::zeros((trace.windows.nrows(), params.num_filters()));
    for (f, &p) in trace.argmax.iter().enumerate() {
        d_conv[[p, f]] = d_out[f];
    }
    general_mat_mul(1.0, &d_conv.t(), &trace.windows, 1.0, &mut grads.filters);
    grads.bias += &d_out;
    let d_windows = d_conv.dot(&params.filters);
    let mut d_embedded = Array2::<f64>::zeros((trace.ids.len(), dim));
    for p in 0..d_windows.nrows() {
        for k in 0..window {
            let src = d_windows.row(p);
            let mut dst = d_embedded.row_mut(p + k);
            dst += &src.slice(ndarray::s![k * dim..(k + 1) * dim]);
        }
    }
    if let Some(m) = &trace.mask {
        d_embedded *= m;
    }
    for (row, &id) in d_embedded.axis_iter(Axis(0)).zip(&trace.ids) {
        let mut dst = grads.embedding.row_mut(id);
        dst += &row;
    }
}
