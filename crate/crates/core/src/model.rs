//! A complete parser: vocabulary, encoder and arc scorer.

use ndarray::{ArrayViewD, ArrayViewMutD};
use rand::rngs::mock::StepRng;

use crate::crf::EdgeScores;
use crate::data::{Sentence, Vocab};
use crate::decoder::{best_label_per_edge, decode_mst};
use crate::encoder::{encode_sentence, EncoderConfig, EncoderParams};
use crate::error::Result;
use crate::params::ParamSet;
use crate::scorer::{score_all_edges, ScorerParams};

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub encoder: EncoderParams,
    pub scorer: ScorerParams,
}

impl ModelParams {
    pub fn zeros(config: &EncoderConfig, vocab: &Vocab) -> Self {
        ModelParams {
            encoder: EncoderParams::zeros(config, vocab.words.len(), vocab.chars.len(), vocab.tags.len()),
            scorer: ScorerParams::zeros(vocab.num_labels().max(1), config.mlp_dim),
        }
    }
}

impl ParamSet for ModelParams {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, ArrayViewD<'a, f64>)) {
        self.encoder.visit(f);
        self.scorer.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, f64>)) {
        self.encoder.visit_mut(f);
        self.scorer.visit_mut(f);
    }

    fn zeros_like(&self) -> Self {
        ModelParams {
            encoder: self.encoder.zeros_like(),
            scorer: self.scorer.zeros_like(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Parser {
    pub config: EncoderConfig,
    pub vocab: Vocab,
    pub params: ModelParams,
}

impl Parser {
    /// Labeled arc scores of `sentence` in inference mode.
    pub fn edge_scores(&self, sentence: &Sentence) -> Result<EdgeScores> {
        let ids = self.vocab.token_ids(sentence);
        // Inference draws no dropout masks, so the generator is never used.
        let mut rng = StepRng::new(0, 0);
        let enc = encode_sentence(&self.params.encoder, &self.config, &ids, false, &mut rng)?;
        Ok(score_all_edges(&enc.repr, &self.params.scorer)?)
    }

    /// Copy of `sentence` with predicted heads and labels.
    pub fn parse(&self, sentence: &Sentence, single_root: bool) -> Result<Sentence> {
        let scores = self.edge_scores(sentence)?;
        let collapsed = best_label_per_edge(&scores);
        let tree = decode_mst(&collapsed, single_root)?;
        let mut out = sentence.clone();
        for (h, m, l) in tree.arcs() {
            let t = &mut out.tokens[m - 1];
            t.head = Some(h);
            t.deprel = self.vocab.labels.name(l).map(str::to_string);
        }
        Ok(out)
    }

    pub fn parse_all(&self, sentences: &[Sentence], single_root: bool) -> Result<Vec<Sentence>> {
        sentences.iter().map(|s| self.parse(s, single_root)).collect()
    }
}
