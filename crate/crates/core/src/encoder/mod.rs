//! BLSTM-CNN token encoder: word, character and tag embeddings, a stack of
//! bidirectional LSTMs and a one-layer elu perceptron.

pub mod cnn;
pub mod embeddings;
pub mod lstm;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::vocab::TokenIds;
use crate::params::ParamSet;
use crate::scorer::SentenceRepr;
use cnn::{char_cnn_backward, char_cnn_forward, padded_ids, CharCnnParams, CharCnnTrace};
use lstm::{bilstm_backward, bilstm_forward, BiLstmParams, BiLstmTrace, RecurrentMasks};

pub use embeddings::{load_embeddings, Embeddings};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("{table} id {id} is outside a table of {size} rows")]
    Vocabulary {
        table: &'static str,
        id: usize,
        size: usize,
    },
    #[error("backward pass needs the forward cache, which was not kept")]
    MissingCache,
    #[error("gradient has shape {got:?}, expected {expected:?}")]
    GradientShape {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("invalid encoder configuration: {0}")]
    Config(String),
    #[error("embedding file line {line}: {message}")]
    Embedding { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub word_dim: usize,
    pub char_dim: usize,
    pub pos_dim: usize,
    pub cnn_window: usize,
    pub cnn_filters: usize,
    pub lstm_layers: usize,
    pub lstm_state: usize,
    pub mlp_dim: usize,
    /// Character embeddings and the concatenated token input.
    pub dropout_embed: f64,
    /// Recurrent connections.
    pub dropout_hidden: f64,
    /// Between stacked layers and on the final BLSTM output.
    pub dropout_layer: f64,
    pub use_char: bool,
    pub use_pos: bool,
    /// Probability of replacing a singleton training word by UNK.
    pub unk_replace: f64,
    /// Lowercase word forms and collapse digit runs before lookup.
    pub normalize: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            word_dim: 100,
            char_dim: 50,
            pos_dim: 50,
            cnn_window: 3,
            cnn_filters: 50,
            lstm_layers: 2,
            lstm_state: 256,
            mlp_dim: 100,
            dropout_embed: 0.15,
            dropout_hidden: 0.25,
            dropout_layer: 0.33,
            use_char: true,
            use_pos: true,
            unk_replace: 0.5,
            normalize: true,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        let dims = [
            ("word_dim", self.word_dim),
            ("char_dim", self.char_dim),
            ("pos_dim", self.pos_dim),
            ("cnn_window", self.cnn_window),
            ("cnn_filters", self.cnn_filters),
            ("lstm_layers", self.lstm_layers),
            ("lstm_state", self.lstm_state),
            ("mlp_dim", self.mlp_dim),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(EncoderError::Config(format!("{name} must be at least 1")));
            }
        }
        if self.cnn_window.is_multiple_of(2) {
            return Err(EncoderError::Config("cnn_window must be odd".into()));
        }
        let rates = [
            ("dropout_embed", self.dropout_embed),
            ("dropout_hidden", self.dropout_hidden),
            ("dropout_layer", self.dropout_layer),
        ];
        for (name, p) in rates {
            if !(0.0..1.0).contains(&p) {
                return Err(EncoderError::Config(format!("{name} must lie in [0, 1), got {p}")));
            }
        }
        if !(0.0..=1.0).contains(&self.unk_replace) {
            return Err(EncoderError::Config(format!(
                "unk_replace must lie in [0, 1], got {}",
                self.unk_replace
            )));
        }
        Ok(())
    }

    /// Width of the concatenated token input.
    pub fn input_dim(&self) -> usize {
        self.word_dim
            + if self.use_char { self.cnn_filters } else { 0 }
            + if self.use_pos { self.pos_dim } else { 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub word_emb: Array2<f64>,
    pub char_cnn: Option<CharCnnParams>,
    pub pos_emb: Option<Array2<f64>>,
    pub lstm: Vec<BiLstmParams>,
    /// `mlp_dim x 2H`
    pub mlp_w: Array2<f64>,
    pub mlp_b: Array1<f64>,
}

impl EncoderParams {
    pub fn zeros(config: &EncoderConfig, words: usize, chars: usize, tags: usize) -> Self {
        let hidden = config.lstm_state;
        let lstm = (0..config.lstm_layers)
            .map(|k| {
                let input = if k == 0 { config.input_dim() } else { 2 * hidden };
                BiLstmParams::zeros(input, hidden)
            })
            .collect();
        EncoderParams {
            word_emb: Array2::zeros((words, config.word_dim)),
            char_cnn: config.use_char.then(|| {
                CharCnnParams::zeros(chars, config.char_dim, config.cnn_window, config.cnn_filters)
            }),
            pos_emb: config.use_pos.then(|| Array2::zeros((tags, config.pos_dim))),
            lstm,
            mlp_w: Array2::zeros((config.mlp_dim, 2 * hidden)),
            mlp_b: Array1::zeros(config.mlp_dim),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.word_emb.ncols()
            + self.char_cnn.as_ref().map_or(0, |c| c.num_filters())
            + self.pos_emb.as_ref().map_or(0, |p| p.ncols())
    }

    pub fn hidden(&self) -> usize {
        self.lstm[0].forward.hidden()
    }

    pub fn output_dim(&self) -> usize {
        self.mlp_w.nrows()
    }
}

impl ParamSet for EncoderParams {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, ArrayViewD<'a, f64>)) {
        f("word.embedding", self.word_emb.view().into_dyn());
        if let Some(c) = &self.char_cnn {
            c.visit(f);
        }
        if let Some(p) = &self.pos_emb {
            f("pos.embedding", p.view().into_dyn());
        }
        for (k, layer) in self.lstm.iter().enumerate() {
            for (dir, p) in [("fwd", &layer.forward), ("bwd", &layer.backward)] {
                f(&format!("lstm.{k}.{dir}.w_x"), p.w_x.view().into_dyn());
                f(&format!("lstm.{k}.{dir}.w_h"), p.w_h.view().into_dyn());
                f(&format!("lstm.{k}.{dir}.peep"), p.peep.view().into_dyn());
                f(&format!("lstm.{k}.{dir}.bias"), p.bias.view().into_dyn());
            }
        }
        f("mlp.w", self.mlp_w.view().into_dyn());
        f("mlp.b", self.mlp_b.view().into_dyn());
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, f64>)) {
        f("word.embedding", self.word_emb.view_mut().into_dyn());
        if let Some(c) = &mut self.char_cnn {
            c.visit_mut(f);
        }
        if let Some(p) = &mut self.pos_emb {
            f("pos.embedding", p.view_mut().into_dyn());
        }
        for (k, layer) in self.lstm.iter_mut().enumerate() {
            for (dir, p) in [("fwd", &mut layer.forward), ("bwd", &mut layer.backward)] {
                f(&format!("lstm.{k}.{dir}.w_x"), p.w_x.view_mut().into_dyn());
                f(&format!("lstm.{k}.{dir}.w_h"), p.w_h.view_mut().into_dyn());
                f(&format!("lstm.{k}.{dir}.peep"), p.peep.view_mut().into_dyn());
                f(&format!("lstm.{k}.{dir}.bias"), p.bias.view_mut().into_dyn());
            }
        }
        f("mlp.w", self.mlp_w.view_mut().into_dyn());
        f("mlp.b", self.mlp_b.view_mut().into_dyn());
    }

    fn zeros_like(&self) -> Self {
        EncoderParams {
            word_emb: Array2::zeros(self.word_emb.raw_dim()),
            char_cnn: self.char_cnn.as_ref().map(|c| c.zeros_like()),
            pos_emb: self.pos_emb.as_ref().map(|p| Array2::zeros(p.raw_dim())),
            lstm: self
                .lstm
                .iter()
                .map(|l| BiLstmParams::zeros(l.forward.input(), l.forward.hidden()))
                .collect(),
            mlp_w: Array2::zeros(self.mlp_w.raw_dim()),
            mlp_b: Array1::zeros(self.mlp_b.len()),
        }
    }
}

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

/// Inverted-dropout mask: `1 / (1 - p)` with probability `1 - p`, else 0.
pub fn dropout_mask<R: Rng + ?Sized>(rng: &mut R, shape: (usize, usize), p: f64) -> Array2<f64> {
    if p == 0.0 {
        return Array2::ones(shape);
    }
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_simple_fn(shape, || if rng.gen::<f64>() < p { 0.0 } else { keep })
}

fn dropout_vector<R: Rng + ?Sized>(rng: &mut R, len: usize, p: f64) -> Array1<f64> {
    dropout_mask(rng, (1, len), p).row(0).to_owned()
}

/// Every multiplicative dropout mask of one sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMasks {
    /// Per position, over the padded character embedding matrix.
    pub chars: Vec<Array2<f64>>,
    /// Per position, over the concatenated token input (`T x input_dim`).
    pub embed: Array2<f64>,
    /// Per layer, on `h_{t-1}`.
    pub recurrent: Vec<RecurrentMasks>,
    /// Per layer above the first, on its input; shared by all positions.
    pub between: Vec<Array1<f64>>,
    /// On the final BLSTM output; shared by all positions.
    pub output: Array1<f64>,
}

impl DropoutMasks {
    pub fn sample<R: Rng + ?Sized>(
        params: &EncoderParams,
        config: &EncoderConfig,
        ids: &TokenIds,
        rng: &mut R,
    ) -> Self {
        let steps = ids.len();
        let hidden = params.hidden();
        let chars = match &params.char_cnn {
            Some(c) => ids
                .chars
                .iter()
                .map(|w| {
                    let len = padded_ids(w, c.window(), c.embedding.nrows()).len();
                    dropout_mask(rng, (len, c.char_dim()), config.dropout_embed)
                })
                .collect(),
            None => Vec::new(),
        };
        let embed = dropout_mask(rng, (steps, params.input_dim()), config.dropout_embed);
        let recurrent = params
            .lstm
            .iter()
            .map(|_| RecurrentMasks {
                forward: dropout_vector(rng, hidden, config.dropout_hidden),
                backward: dropout_vector(rng, hidden, config.dropout_hidden),
            })
            .collect();
        let between = (1..params.lstm.len())
            .map(|_| dropout_vector(rng, 2 * hidden, config.dropout_layer))
            .collect();
        let output = dropout_vector(rng, 2 * hidden, config.dropout_layer);
        DropoutMasks {
            chars,
            embed,
            recurrent,
            between,
            output,
        }
    }
}

/// Forward state kept for the backward pass.
#[derive(Clone, Debug)]
pub struct EncoderCache {
    words: Vec<usize>,
    tags: Vec<usize>,
    chars: Vec<CharCnnTrace>,
    masks: Option<DropoutMasks>,
    layers: Vec<BiLstmTrace>,
    /// Final BLSTM output after dropout.
    top: Array2<f64>,
    /// MLP pre-activations.
    pre: Array2<f64>,
}

#[derive(Clone, Debug)]
pub struct Encoding {
    pub repr: SentenceRepr,
    pub cache: Option<EncoderCache>,
}

fn check_ids(ids: &[usize], table: &'static str, size: usize) -> Result<(), EncoderError> {
    match ids.iter().find(|&&id| id >= size) {
        Some(&id) => Err(EncoderError::Vocabulary { table, id, size }),
        None => Ok(()),
    }
}

/// Runs the encoder with fixed dropout masks (`None` means no dropout).
pub fn encoder_forward(
    params: &EncoderParams,
    ids: &TokenIds,
    masks: Option<&DropoutMasks>,
) -> Result<(SentenceRepr, EncoderCache), EncoderError> {
    let steps = ids.len();
    check_ids(&ids.words, "word", params.word_emb.nrows())?;
    if let Some(p) = &params.pos_emb {
        check_ids(&ids.tags, "tag", p.nrows())?;
    }
    if let Some(c) = &params.char_cnn {
        for w in &ids.chars {
            check_ids(w, "character", c.embedding.nrows())?;
        }
    }

    let mut input = Array2::zeros((steps, params.input_dim()));
    let word_dim = params.word_emb.ncols();
    let mut char_traces = Vec::new();
    for t in 0..steps {
        let mut row = input.row_mut(t);
        row.slice_mut(s![..word_dim])
            .assign(&params.word_emb.row(ids.words[t]));
        let mut offset = word_dim;
        if let Some(c) = &params.char_cnn {
            let mask = masks.map(|m| &m.chars[t]);
            let (out, trace) = char_cnn_forward(c, &ids.chars[t], mask);
            row.slice_mut(s![offset..offset + out.len()]).assign(&out);
            offset += out.len();
            char_traces.push(trace);
        }
        if let Some(p) = &params.pos_emb {
            row.slice_mut(s![offset..]).assign(&p.row(ids.tags[t]));
        }
    }
    if let Some(m) = masks {
        input *= &m.embed;
    }

    let mut layers = Vec::with_capacity(params.lstm.len());
    let mut x = input;
    for (k, layer) in params.lstm.iter().enumerate() {
        if k > 0 {
            if let Some(m) = masks {
                x *= &m.between[k - 1];
            }
        }
        let trace = bilstm_forward(layer, x, masks.map(|m| &m.recurrent[k]));
        x = trace.output();
        layers.push(trace);
    }
    if let Some(m) = masks {
        x *= &m.output;
    }
    let pre = x.dot(&params.mlp_w.t()) + &params.mlp_b;
    let repr = pre.mapv(elu);
    Ok((
        SentenceRepr(repr),
        EncoderCache {
            words: ids.words.clone(),
            tags: ids.tags.clone(),
            chars: char_traces,
            masks: masks.cloned(),
            layers,
            top: x,
            pre,
        },
    ))
}

/// Encodes one sentence. With `training` set, fresh dropout masks are drawn
/// from `rng` and the cache for [`encoder_backward`] is kept.
pub fn encode_sentence<R: Rng + ?Sized>(
    params: &EncoderParams,
    config: &EncoderConfig,
    ids: &TokenIds,
    training: bool,
    rng: &mut R,
) -> Result<Encoding, EncoderError> {
    if training {
        let masks = DropoutMasks::sample(params, config, ids, rng);
        let (repr, cache) = encoder_forward(params, ids, Some(&masks))?;
        Ok(Encoding {
            repr,
            cache: Some(cache),
        })
    } else {
        let (repr, _) = encoder_forward(params, ids, None)?;
        Ok(Encoding { repr, cache: None })
    }
}

/// Accumulates into `grads` the gradient of a loss whose gradient w.r.t. the
/// encoder output is `d_repr`.
pub fn encoder_backward(
    params: &EncoderParams,
    cache: Option<&EncoderCache>,
    d_repr: ArrayView2<f64>,
    grads: &mut EncoderParams,
) -> Result<(), EncoderError> {
    let cache = cache.ok_or(EncoderError::MissingCache)?;
    if d_repr.dim() != cache.pre.dim() {
        return Err(EncoderError::GradientShape {
            expected: cache.pre.dim(),
            got: d_repr.dim(),
        });
    }
    let masks = cache.masks.as_ref();
    let d_pre = &d_repr * &cache.pre.mapv(elu_grad);
    general_mat_mul(1.0, &d_pre.t(), &cache.top, 1.0, &mut grads.mlp_w);
    grads.mlp_b += &d_pre.sum_axis(Axis(0));
    let mut d_x = d_pre.dot(&params.mlp_w);
    if let Some(m) = masks {
        d_x *= &m.output;
    }
    for k in (0..params.lstm.len()).rev() {
        d_x = bilstm_backward(&params.lstm[k], &cache.layers[k], d_x.view(), &mut grads.lstm[k]);
        if k > 0 {
            if let Some(m) = masks {
                d_x *= &m.between[k - 1];
            }
        }
    }
    if let Some(m) = masks {
        d_x *= &m.embed;
    }

    let word_dim = params.word_emb.ncols();
    for (t, row) in d_x.axis_iter(Axis(0)).enumerate() {
        let mut dst = grads.word_emb.row_mut(cache.words[t]);
        dst += &row.slice(s![..word_dim]);
        let mut offset = word_dim;
        if let (Some(c), Some(gc)) = (&params.char_cnn, &mut grads.char_cnn) {
            let f = c.num_filters();
            char_cnn_backward(c, &cache.chars[t], row.slice(s![offset..offset + f]), gc);
            offset += f;
        }
        if let Some(gp) = &mut grads.pos_emb {
            let mut dst = gp.row_mut(cache.tags[t]);
            dst += &row.slice(s![offset..]);
        }
    }
    Ok(())
}
