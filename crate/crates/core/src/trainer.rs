//! Parameter initialization, Adam with step-wise annealing, gradient
//! clipping and the epoch loop.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2, ArrayViewMut2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::crf::{head_selection_loss, nll_loss_and_grad};
use crate::data::vocab::UNK;
use crate::data::{evaluate, PunctuationPolicy, Sentence, TokenIds, Vocab};
use crate::encoder::{encode_sentence, encoder_backward, EncoderConfig, Embeddings};
use crate::error::{Error, Result};
use crate::model::{ModelParams, Parser};
use crate::params::ParamSet;
use crate::scorer::{score_all_edges, score_backward};
use crate::tree::DependencyTree;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Negative log-likelihood of the gold tree under the tree CRF.
    #[default]
    GlobalLikelihood,
    /// Independent per-token head selection.
    CrossEntropy,
}

impl FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "global_likelihood" => Ok(Self::GlobalLikelihood),
            "cross_entropy" => Ok(Self::CrossEntropy),
            other => Err(format!(
                "unknown objective {other:?} (expected global_likelihood or cross_entropy)"
            )),
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::GlobalLikelihood => "global_likelihood",
            Self::CrossEntropy => "cross_entropy",
        })
    }
}

/// Which token inputs feed the BLSTM besides word embeddings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Ablation {
    Basic,
    Char,
    Pos,
    Full,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::Basic, Ablation::Char, Ablation::Pos, Ablation::Full];

    pub fn uses_char(self) -> bool {
        matches!(self, Ablation::Char | Ablation::Full)
    }

    pub fn uses_pos(self) -> bool {
        matches!(self, Ablation::Pos | Ablation::Full)
    }

    pub fn apply(self, config: &mut EncoderConfig) {
        config.use_char = self.uses_char();
        config.use_pos = self.uses_pos();
    }
}

impl FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "basic" => Ok(Self::Basic),
            "+char" | "char" => Ok(Self::Char),
            "+pos" | "pos" => Ok(Self::Pos),
            "full" => Ok(Self::Full),
            _ => Err(format!("unknown ablation {s:?} (expected Basic, +Char, +POS or Full)")),
        }
    }
}

impl TryFrom<String> for Ablation {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Ablation> for String {
    fn from(a: Ablation) -> Self {
        a.to_string()
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Basic => "Basic",
            Self::Char => "+Char",
            Self::Pos => "+POS",
            Self::Full => "Full",
        })
    }
}

/// What to do with training sentences whose gold heads do not form a tree.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidGoldPolicy {
    #[default]
    Abort,
    Skip,
}

impl FromStr for InvalidGoldPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "abort" => Ok(Self::Abort),
            "skip" => Ok(Self::Skip),
            other => Err(format!("unknown invalid-gold policy {other:?} (expected abort or skip)")),
        }
    }
}

impl fmt::Display for InvalidGoldPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Abort => "abort",
            Self::Skip => "skip",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub objective: Objective,
    /// Overrides the encoder's `use_char` / `use_pos` when set.
    pub ablation: Option<Ablation>,
    pub batch_size: usize,
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub decay: f64,
    /// Epoch counts after which the learning rate is multiplied by `decay`.
    pub schedule: Vec<usize>,
    pub clip: f64,
    pub min_freq: usize,
    /// Training sentences longer than this are dropped.
    pub max_len: Option<usize>,
    pub invalid_gold: InvalidGoldPolicy,
    /// Evaluate on the dev set every this many epochs.
    pub dev_every: usize,
    pub single_root: bool,
    pub punctuation: PunctuationPolicy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            objective: Objective::GlobalLikelihood,
            ablation: None,
            batch_size: 32,
            seed: 1,
            epochs: 120,
            learning_rate: 0.002,
            beta1: 0.9,
            beta2: 0.9,
            epsilon: 1e-8,
            decay: 0.5,
            schedule: vec![10, 30, 50, 70, 100],
            clip: 5.0,
            min_freq: 1,
            max_len: None,
            invalid_gold: InvalidGoldPolicy::Abort,
            dev_every: 1,
            single_root: false,
            punctuation: PunctuationPolicy::IncludeAll,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if self.dev_every == 0 {
            return fail("dev_every must be at least 1");
        }
        if !(self.learning_rate > 0.0) {
            return fail("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return fail("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return fail("epsilon must be positive");
        }
        if !(self.decay > 0.0) {
            return fail("decay must be positive");
        }
        if !(self.clip > 0.0) {
            return fail("clip must be positive");
        }
        Ok(())
    }

    /// Learning rate used during `epoch` (1-based).
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let passed = self.schedule.iter().filter(|&&e| e < epoch).count();
        self.learning_rate * self.decay.powi(passed as i32)
    }
}

fn uniform<R: Rng + ?Sized>(mut a: ArrayViewMut2<f64>, bound: f64, rng: &mut R) {
    a.mapv_inplace(|_| rng.gen_range(-bound..=bound));
}

fn glorot<R: Rng + ?Sized>(a: ArrayViewMut2<f64>, rng: &mut R) {
    let (r, c) = a.dim();
    let bound = (6.0 / (r + c) as f64).sqrt();
    uniform(a, bound, rng);
}

fn embedding<R: Rng + ?Sized>(a: &mut Array2<f64>, rng: &mut R) {
    let bound = (3.0 / a.ncols() as f64).sqrt();
    uniform(a.view_mut(), bound, rng);
}

/// Random initial parameters. Weight matrices (per LSTM gate block and per
/// scorer label) are Glorot-uniform, embeddings uniform in `±sqrt(3 / dim)`,
/// biases and peepholes zero except the forget-gate bias, which is 1.
/// Pretrained vectors replace the rows of words they cover.
pub fn init_params<R: Rng + ?Sized>(
    config: &EncoderConfig,
    vocab: &Vocab,
    pretrained: Option<&Embeddings>,
    rng: &mut R,
) -> Result<ModelParams> {
    config.validate()?;
    let mut p = ModelParams::zeros(config, vocab);
    let enc = &mut p.encoder;

    embedding(&mut enc.word_emb, rng);
    if let Some(e) = pretrained {
        if e.dim() != config.word_dim {
            return Err(Error::Config(format!(
                "pretrained vectors have dimension {}, word_dim is {}",
                e.dim(),
                config.word_dim
            )));
        }
        let mut filled = vec![false; vocab.words.len()];
        for (i, w) in e.words.iter().enumerate() {
            let id = vocab.words.get(w).or_else(|| vocab.words.get(&vocab.normalized(w)));
            if let Some(id) = id {
                // An exact match wins over a normalized one.
                let exact = vocab.words.get(w) == Some(id);
                if !filled[id] || exact {
                    enc.word_emb.row_mut(id).assign(&e.vectors.row(i));
                    filled[id] = true;
                }
            }
        }
    }
    if let Some(c) = &mut enc.char_cnn {
        embedding(&mut c.embedding, rng);
        glorot(c.filters.view_mut(), rng);
    }
    if let Some(pos) = &mut enc.pos_emb {
        embedding(pos, rng);
    }
    for layer in &mut enc.lstm {
        for dir in [&mut layer.forward, &mut layer.backward] {
            let h = dir.hidden();
            for g in 0..4 {
                glorot(dir.w_x.slice_mut(s![g * h..(g + 1) * h, ..]), rng);
                glorot(dir.w_h.slice_mut(s![g * h..(g + 1) * h, ..]), rng);
            }
            dir.bias.slice_mut(s![h..2 * h]).fill(1.0);
        }
    }
    glorot(enc.mlp_w.view_mut(), rng);

    let sc = &mut p.scorer;
    for l in 0..sc.num_labels() {
        glorot(sc.w.slice_mut(s![l, .., ..]), rng);
    }
    glorot(sc.u.view_mut(), rng);
    glorot(sc.v.view_mut(), rng);
    Ok(p)
}

/// Global L2 norm over every tensor.
pub fn global_norm(grads: &impl ParamSet) -> f64 {
    let mut sum = 0.0;
    grads.visit(&mut |_, t| sum += t.iter().map(|v| v * v).sum::<f64>());
    sum.sqrt()
}

/// Rescales `grads` to norm `threshold` when their global norm exceeds it.
/// Returns the norm before clipping.
pub fn clip_gradients(grads: &mut impl ParamSet, threshold: f64) -> Result<f64> {
    let mut bad = None;
    grads.visit(&mut |name, t| {
        if bad.is_none() && t.iter().any(|v| !v.is_finite()) {
            bad = Some(name.to_string());
        }
    });
    if let Some(param) = bad {
        return Err(Error::Divergence { param });
    }
    let norm = global_norm(grads);
    if norm > threshold {
        grads.scale(threshold / norm);
    }
    Ok(norm)
}

/// Adam moments, flattened in parameter visiting order.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(params: &impl ParamSet, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let n = params.num_scalars();
        Adam {
            beta1,
            beta2,
            epsilon,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// One bias-corrected update at rate `lr`.
    pub fn step<P: ParamSet>(&mut self, params: &mut P, grads: &P, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let mut views = Vec::new();
        grads.visit(&mut |_, g| views.push(g));
        let (m, v) = (&mut self.m, &mut self.v);
        let mut offset = 0;
        let mut k = 0;
        params.visit_mut(&mut |_, mut p| {
            for (x, &g) in p.iter_mut().zip(views[k].iter()) {
                let i = offset;
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                *x -= lr * m_hat / (v_hat.sqrt() + eps);
                offset += 1;
            }
            k += 1;
        });
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean loss per training sentence.
    pub loss: f64,
    pub dev_uas: Option<f64>,
    pub dev_las: Option<f64>,
    pub learning_rate: f64,
}

impl fmt::Display for EpochLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "epoch={} loss={:.6}", self.epoch, self.loss)?;
        if let (Some(u), Some(l)) = (self.dev_uas, self.dev_las) {
            write!(f, " dev_uas={u:.2} dev_las={l:.2}")?;
        }
        write!(f, " lr={}", self.learning_rate)
    }
}

#[derive(Clone, Debug)]
struct Example {
    index: usize,
    ids: TokenIds,
    tree: DependencyTree,
    /// Training counts of each token's word form (position 0 is the root).
    counts: Vec<usize>,
}

fn gold_tree(vocab: &Vocab, s: &Sentence, index: usize) -> Result<DependencyTree> {
    let mut heads = Vec::with_capacity(s.len());
    let mut labels = Vec::with_capacity(s.len());
    for (i, t) in s.tokens.iter().enumerate() {
        let token = i + 1;
        heads.push(t.head.ok_or_else(|| Error::GoldToken {
            sentence: index,
            token,
            message: "no gold head".into(),
        })?);
        let label = match &t.deprel {
            Some(l) => vocab.label_id(l).ok_or_else(|| Error::GoldToken {
                sentence: index,
                token,
                message: format!("label {l:?} is not in the label inventory"),
            })?,
            None if vocab.num_labels() == 0 => 0,
            None => {
                return Err(Error::GoldToken {
                    sentence: index,
                    token,
                    message: "no gold label".into(),
                })
            }
        };
        labels.push(label);
    }
    DependencyTree::new(heads, labels).map_err(|source| Error::InvalidGold {
        sentence: index,
        source,
    })
}

/// Epoch-by-epoch training driver. [`Trainer::finish`] returns the
/// checkpoint with the best dev LAS (UAS breaks ties, earlier epochs win
/// remaining ties), or the last epoch when there is no dev set.
pub struct Trainer {
    config: TrainConfig,
    parser: Parser,
    examples: Vec<Example>,
    dev: Option<Vec<Sentence>>,
    adam: Adam,
    rng: ChaCha8Rng,
    log: Vec<EpochLog>,
    best: Option<(usize, f64, f64, ModelParams)>,
}

impl Trainer {
    pub fn new(
        train: &[Sentence],
        dev: Option<&[Sentence]>,
        mut encoder_config: EncoderConfig,
        config: TrainConfig,
        pretrained: Option<&Embeddings>,
    ) -> Result<Self> {
        config.validate()?;
        if let Some(a) = config.ablation {
            a.apply(&mut encoder_config);
        }
        encoder_config.validate()?;
        let train: Vec<&Sentence> = train
            .iter()
            .filter(|s| !s.is_empty() && config.max_len.is_none_or(|max| s.len() <= max))
            .collect();
        if train.is_empty() {
            return Err(Error::Config("the training set is empty".into()));
        }
        let owned: Vec<Sentence> = train.iter().map(|&s| s.clone()).collect();
        let words = pretrained.map(|e| e.words.as_slice());
        let vocab = Vocab::build(&owned, words, config.min_freq, encoder_config.normalize);

        let mut examples = Vec::with_capacity(owned.len());
        for (index, s) in owned.iter().enumerate() {
            match gold_tree(&vocab, s, index) {
                Ok(tree) => examples.push(Example {
                    index,
                    ids: vocab.token_ids(s),
                    tree,
                    counts: std::iter::once(0)
                        .chain(s.tokens.iter().map(|t| vocab.word_count(&t.form)))
                        .collect(),
                }),
                Err(e @ Error::InvalidGold { .. }) if config.invalid_gold == InvalidGoldPolicy::Skip => {
                    log::warn!("skipping training sentence: {e}");
                }
                Err(e) => return Err(e),
            }
        }
        if examples.is_empty() {
            return Err(Error::Config("no usable training sentences".into()));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = init_params(&encoder_config, &vocab, pretrained, &mut rng)?;
        let adam = Adam::new(&params, config.beta1, config.beta2, config.epsilon);
        Ok(Trainer {
            config,
            parser: Parser {
                config: encoder_config,
                vocab,
                params,
            },
            examples,
            dev: dev.map(<[Sentence]>::to_vec),
            adam,
            rng,
            log: Vec::new(),
            best: None,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// The model with the current (latest) parameters.
    pub fn parser(&self) -> &Parser {
        &self.parser
    }

    pub fn epochs_done(&self) -> usize {
        self.log.len()
    }

    pub fn is_finished(&self) -> bool {
        self.log.len() >= self.config.epochs
    }

    pub fn log(&self) -> &[EpochLog] {
        &self.log
    }

    pub fn num_examples(&self) -> usize {
        self.examples.len()
    }

    /// Loss and accumulated (unscaled) gradients of one sentence.
    fn sentence_gradient(&mut self, k: usize, grads: &mut ModelParams) -> Result<f64> {
        let ex = &self.examples[k];
        let cfg = &self.parser.config;
        let mut ids = ex.ids.clone();
        if cfg.unk_replace > 0.0 {
            for (w, &c) in ids.words.iter_mut().zip(&ex.counts).skip(1) {
                if c == 1 && self.rng.gen::<f64>() < cfg.unk_replace {
                    *w = UNK;
                }
            }
        }
        let params = &self.parser.params;
        let enc = encode_sentence(&params.encoder, cfg, &ids, true, &mut self.rng)?;
        let scores = score_all_edges(&enc.repr, &params.scorer)?;
        let (loss, d_scores) = match self.config.objective {
            Objective::GlobalLikelihood => nll_loss_and_grad(&scores, &ex.tree)?,
            Objective::CrossEntropy => head_selection_loss(&scores, &ex.tree)?,
        };
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { sentence: ex.index });
        }
        let (d_repr, d_scorer) = score_backward(&enc.repr, &params.scorer, &d_scores)?;
        grads.scorer.add_scaled(&d_scorer, 1.0);
        encoder_backward(&params.encoder, enc.cache.as_ref(), d_repr.view(), &mut grads.encoder)?;
        Ok(loss)
    }

    /// Runs one epoch: shuffle, mini-batch updates, dev evaluation.
    pub fn run_epoch(&mut self) -> Result<&EpochLog> {
        let epoch = self.log.len() + 1;
        let lr = self.config.learning_rate_at(epoch);
        let mut order: Vec<usize> = (0..self.examples.len()).collect();
        order.shuffle(&mut self.rng);
        let mut grads = self.parser.params.zeros_like();
        let mut total = 0.0;
        for batch in order.chunks(self.config.batch_size) {
            grads.fill_zero();
            for &k in batch {
                total += self.sentence_gradient(k, &mut grads)?;
            }
            grads.scale(1.0 / batch.len() as f64);
            clip_gradients(&mut grads, self.config.clip)?;
            self.adam.step(&mut self.parser.params, &grads, lr);
        }

        let mut entry = EpochLog {
            epoch,
            loss: total / self.examples.len() as f64,
            dev_uas: None,
            dev_las: None,
            learning_rate: lr,
        };
        let evaluate_now = epoch.is_multiple_of(self.config.dev_every) || epoch == self.config.epochs;
        match &self.dev {
            Some(dev) if evaluate_now => {
                let pred = self.parser.parse_all(dev, self.config.single_root)?;
                let e = evaluate(dev, &pred, self.config.punctuation)?;
                entry.dev_uas = Some(e.uas);
                entry.dev_las = Some(e.las);
                let better = match &self.best {
                    None => true,
                    Some((_, uas, las, _)) => e.las > *las || (e.las == *las && e.uas > *uas),
                };
                if better {
                    self.best = Some((epoch, e.uas, e.las, self.parser.params.clone()));
                }
            }
            Some(_) => {}
            None => {}
        }
        log::info!("{entry}");
        self.log.push(entry);
        Ok(self.log.last().expect("just pushed"))
    }

    /// Epoch of the retained parameters so far.
    pub fn best_epoch(&self) -> Option<usize> {
        match &self.best {
            Some((e, ..)) => Some(*e),
            None => self.log.last().map(|l| l.epoch),
        }
    }

    pub fn finish(self) -> Checkpoint {
        let best_epoch = self.best_epoch();
        let mut parser = self.parser;
        if let Some((_, _, _, params)) = self.best {
            parser.params = params;
        }
        Checkpoint {
            parser,
            train_config: Some(self.config),
            log: self.log,
            best_epoch,
        }
    }
}

/// Trains for the configured number of epochs.
pub fn train(
    train: &[Sentence],
    dev: Option<&[Sentence]>,
    encoder_config: EncoderConfig,
    config: TrainConfig,
    pretrained: Option<&Embeddings>,
) -> Result<Checkpoint> {
    let mut trainer = Trainer::new(train, dev, encoder_config, config, pretrained)?;
    while !trainer.is_finished() {
        trainer.run_epoch()?;
    }
    Ok(trainer.finish())
}
