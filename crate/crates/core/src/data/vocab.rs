//! Vocabularies for words, characters, tags and dependency labels.

use std::collections::{BTreeMap, HashMap};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::conllx::Sentence;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const ROOT: usize = 2;

/// Surface form of the artificial root token.
pub const ROOT_FORM: &str = "<ROOT>";

const RESERVED: [&str; 3] = ["<PAD>", "<UNK>", ROOT_FORM];

/// Lowercases and replaces every run of digits by `0`.
pub fn normalize_form(form: &str) -> String {
    static DIGITS: OnceLock<Regex> = OnceLock::new();
    let digits = DIGITS.get_or_init(|| Regex::new(r"\d+").unwrap());
    digits.replace_all(&form.to_lowercase(), "0").into_owned()
}

/// Bijection between strings and dense ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Index {
    items: Vec<String>,
    ids: HashMap<String, usize>,
}

impl From<Vec<String>> for Index {
    fn from(items: Vec<String>) -> Self {
        let ids = items
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Index { items, ids }
    }
}

impl From<Index> for Vec<String> {
    fn from(index: Index) -> Self {
        index.items
    }
}

impl Index {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, s: &str) -> Option<usize> {
        self.ids.get(s).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.items.get(id).map(String::as_str)
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }
}

/// Orders by descending count, then lexicographically.
fn ranked(counts: HashMap<String, usize>) -> Vec<String> {
    let mut entries: Vec<(String, usize)> = counts.into_iter().collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    entries.into_iter().map(|(s, _)| s).collect()
}

fn with_reserved(items: Vec<String>) -> Index {
    let mut all: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
    all.extend(items.into_iter().filter(|s| !RESERVED.contains(&s.as_str())));
    Index::from(all)
}

/// Token ids of one sentence including the root at position 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenIds {
    pub words: Vec<usize>,
    pub tags: Vec<usize>,
    pub chars: Vec<Vec<usize>>,
}

impl TokenIds {
    /// Number of positions including the root.
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    pub words: Index,
    pub chars: Index,
    pub tags: Index,
    pub labels: Index,
    /// Training counts of normalized word forms.
    pub word_counts: BTreeMap<String, usize>,
    pub normalize: bool,
}

impl Vocab {
    /// Builds vocabularies from training sentences. Words seen fewer than
    /// `min_freq` times are left out unless listed in `pretrained`.
    pub fn build(
        sentences: &[Sentence],
        pretrained: Option<&[String]>,
        min_freq: usize,
        normalize: bool,
    ) -> Self {
        let norm = |s: &str| if normalize { normalize_form(s) } else { s.to_string() };
        let mut word_counts: BTreeMap<String, usize> = BTreeMap::new();
        let mut char_counts: HashMap<String, usize> = HashMap::new();
        let mut tag_counts: HashMap<String, usize> = HashMap::new();
        let mut label_counts: HashMap<String, usize> = HashMap::new();

        for c in ROOT_FORM.chars() {
            *char_counts.entry(c.to_string()).or_default() += 1;
        }
        for sentence in sentences {
            for t in &sentence.tokens {
                *word_counts.entry(norm(&t.form)).or_default() += 1;
                for c in t.form.chars() {
                    *char_counts.entry(c.to_string()).or_default() += 1;
                }
                if let Some(tag) = t.tag() {
                    *tag_counts.entry(tag.to_string()).or_default() += 1;
                }
                if let Some(label) = &t.deprel {
                    *label_counts.entry(label.clone()).or_default() += 1;
                }
            }
        }

        let mut word_rank: HashMap<String, usize> = word_counts
            .iter()
            .filter(|(_, &c)| c >= min_freq)
            .map(|(w, &c)| (w.clone(), c))
            .collect();
        for w in pretrained.unwrap_or_default() {
            word_rank.entry(norm(w)).or_insert(0);
        }

        Vocab {
            words: with_reserved(ranked(word_rank)),
            chars: with_reserved(ranked(char_counts)),
            tags: with_reserved(ranked(tag_counts)),
            labels: Index::from(ranked(label_counts)),
            word_counts,
            normalize,
        }
    }

    pub fn normalized(&self, form: &str) -> String {
        if self.normalize {
            normalize_form(form)
        } else {
            form.to_string()
        }
    }

    pub fn word_id(&self, form: &str) -> usize {
        self.words.get(&self.normalized(form)).unwrap_or(UNK)
    }

    /// Training count of the normalized form.
    pub fn word_count(&self, form: &str) -> usize {
        self.word_counts
            .get(&self.normalized(form))
            .copied()
            .unwrap_or(0)
    }

    pub fn tag_id(&self, tag: Option<&str>) -> usize {
        tag.and_then(|t| self.tags.get(t)).unwrap_or(UNK)
    }

    pub fn char_ids(&self, form: &str) -> Vec<usize> {
        form.chars()
            .map(|c| self.chars.get(c.encode_utf8(&mut [0; 4])).unwrap_or(UNK))
            .collect()
    }

    pub fn label_id(&self, label: &str) -> Option<usize> {
        self.labels.get(label)
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    /// Ids of the root followed by every token of `sentence`.
    pub fn token_ids(&self, sentence: &Sentence) -> TokenIds {
        let mut ids = TokenIds {
            words: vec![ROOT],
            tags: vec![ROOT],
            chars: vec![self.char_ids(ROOT_FORM)],
        };
        for t in &sentence.tokens {
            ids.words.push(self.word_id(&t.form));
            ids.tags.push(self.tag_id(t.tag()));
            ids.chars.push(self.char_ids(&t.form));
        }
        ids
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::conllx::Token;

    fn sentence(words: &[(&str, &str, &str)]) -> Sentence {
        Sentence::new(
            words
                .iter()
                .enumerate()
                .map(|(i, (w, p, l))| Token {
                    pos: Some(p.to_string()),
                    head: Some(i),
                    deprel: Some(l.to_string()),
                    ..Token::new(*w)
                })
                .collect(),
        )
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_form("Year-2019"), "year-0");
        assert_eq!(normalize_form("3.14"), "0.0");
    }

    #[test]
    fn order_independent() {
        let a = sentence(&[("the", "DT", "det"), ("dog", "NN", "root")]);
        let b = sentence(&[("dog", "NN", "nsubj"), ("the", "DT", "det")]);
        let v1 = Vocab::build(&[a.clone(), b.clone()], None, 1, true);
        let v2 = Vocab::build(&[b, a], None, 1, true);
        assert_eq!(v1, v2);
    }

    #[test]
    fn min_freq_drops_hapax() {
        let s = sentence(&[("the", "DT", "det"), ("dog", "NN", "root"), ("the", "DT", "det")]);
        let v = Vocab::build(&[s], None, 2, true);
        assert_ne!(v.word_id("the"), UNK);
        assert_eq!(v.word_id("dog"), UNK);
        let v = Vocab::build(
            &[sentence(&[("dog", "NN", "root")])],
            Some(&["cat".to_string()]),
            2,
            true,
        );
        assert_eq!(v.word_id("dog"), UNK);
        assert_ne!(v.word_id("Cat"), UNK);
    }

    #[test]
    fn label_inventory() {
        let s = sentence(&[("a", "X", "det"), ("b", "X", "root"), ("c", "X", "det")]);
        let v = Vocab::build(&[s], None, 1, true);
        assert_eq!(v.num_labels(), 2);
        assert_eq!(v.label_id("det"), Some(0));
        assert_eq!(v.label_id("nope"), None);
    }

    #[test]
    fn reserved_ids_and_root() {
        let v = Vocab::build(&[sentence(&[("Dog", "NN", "root")])], None, 1, true);
        assert_eq!(v.words.get("<PAD>"), Some(PAD));
        assert_eq!(v.words.get("<UNK>"), Some(UNK));
        assert_eq!(v.words.get(ROOT_FORM), Some(ROOT));
        let ids = v.token_ids(&sentence(&[("dog", "NN", "root"), ("zebra", "QQ", "x")]));
        assert_eq!(ids.words[0], ROOT);
        assert_eq!(ids.tags[0], ROOT);
        assert!(ids.chars[0].iter().all(|&c| c != UNK));
        assert_eq!(ids.words[2], UNK);
        assert_eq!(ids.tags[2], UNK);
        assert_eq!(ids.chars[1].len(), 3);
    }

    #[test]
    fn serde_round_trip() {
        let v = Vocab::build(&[sentence(&[("a", "X", "det"), ("b", "Y", "root")])], None, 1, true);
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocab = serde_json::from_str(&json).unwrap();
        assert_eq!(v, back);
    }
}
