//! Unlabeled and labeled attachment scores.

use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::conllx::Sentence;
use super::DataError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PunctuationPolicy {
    #[default]
    IncludeAll,
    /// Skip tokens whose form is made only of Unicode punctuation.
    ExcludeUnicodePunct,
}

impl FromStr for PunctuationPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "include_all" => Ok(Self::IncludeAll),
            "exclude_unicode_punct" => Ok(Self::ExcludeUnicodePunct),
            other => Err(format!(
                "unknown punctuation policy {other:?} (expected include_all or exclude_unicode_punct)"
            )),
        }
    }
}

impl std::fmt::Display for PunctuationPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::IncludeAll => "include_all",
            Self::ExcludeUnicodePunct => "exclude_unicode_punct",
        })
    }
}

pub fn is_punctuation(form: &str) -> bool {
    static PUNCT: OnceLock<Regex> = OnceLock::new();
    PUNCT
        .get_or_init(|| Regex::new(r"^\p{P}+$").unwrap())
        .is_match(form)
}

/// Token counts for one sentence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counts {
    pub scored: usize,
    pub heads: usize,
    pub labeled: usize,
}

impl Counts {
    pub fn uas(&self) -> f64 {
        percent(self.heads, self.scored)
    }

    pub fn las(&self) -> f64 {
        percent(self.labeled, self.scored)
    }
}

/// With nothing to score every metric is 100.
fn percent(num: usize, den: usize) -> f64 {
    if den == 0 {
        100.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub uas: f64,
    pub las: f64,
    pub total: Counts,
    pub per_sentence: Vec<Counts>,
}

pub fn evaluate(
    gold: &[Sentence],
    pred: &[Sentence],
    policy: PunctuationPolicy,
) -> Result<Evaluation, DataError> {
    if gold.len() != pred.len() {
        return Err(DataError::CorpusMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    let mut total = Counts::default();
    let mut per_sentence = Vec::with_capacity(gold.len());
    for (s, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.len() {
            return Err(DataError::LengthMismatch {
                sentence: s,
                gold: g.len(),
                pred: p.len(),
            });
        }
        let mut c = Counts::default();
        for (i, (gt, pt)) in g.tokens.iter().zip(&p.tokens).enumerate() {
            let gold_head = gt.head.ok_or(DataError::MissingGold {
                sentence: s,
                token: i + 1,
            })?;
            let pred_head = pt.head.ok_or(DataError::MissingPrediction {
                sentence: s,
                token: i + 1,
            })?;
            if policy == PunctuationPolicy::ExcludeUnicodePunct && is_punctuation(&gt.form) {
                continue;
            }
            c.scored += 1;
            if gold_head == pred_head {
                c.heads += 1;
                if gt.deprel == pt.deprel {
                    c.labeled += 1;
                }
            }
        }
        total.scored += c.scored;
        total.heads += c.heads;
        total.labeled += c.labeled;
        per_sentence.push(c);
    }
    Ok(Evaluation {
        uas: total.uas(),
        las: total.las(),
        total,
        per_sentence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::conllx::Token;

    fn sent(forms: &[&str], heads: &[usize], labels: &[&str]) -> Sentence {
        Sentence::new(
            forms
                .iter()
                .zip(heads)
                .zip(labels)
                .map(|((f, &h), l)| Token {
                    head: Some(h),
                    deprel: Some(l.to_string()),
                    ..Token::new(*f)
                })
                .collect(),
        )
    }

    fn economic() -> Sentence {
        sent(
            &["Economic", "news", "had", "little", "effect", "on", "financial", "markets", "."],
            &[2, 3, 0, 5, 3, 5, 8, 6, 3],
            &["amod", "nsubj", "root", "amod", "dobj", "prep", "amod", "pobj", "punct"],
        )
    }

    #[test]
    fn identical_is_perfect() {
        let g = vec![economic()];
        let e = evaluate(&g, &g, PunctuationPolicy::IncludeAll).unwrap();
        assert_eq!((e.uas, e.las), (100.0, 100.0));
    }

    #[test]
    fn ratio_definition() {
        let forms = ["a"; 10];
        let gold = sent(&forms, &[0, 1, 1, 1, 1, 1, 1, 1, 1, 1], &["x"; 10]);
        let mut pred = gold.clone();
        pred.tokens[9].head = Some(2);
        pred.tokens[8].deprel = Some("y".into());
        let e = evaluate(&[gold], &[pred], PunctuationPolicy::IncludeAll).unwrap();
        assert_eq!(e.uas, 90.0);
        assert_eq!(e.las, 80.0);
    }

    #[test]
    fn punctuation_excluded_from_denominator() {
        let g = vec![economic()];
        let e = evaluate(&g, &g, PunctuationPolicy::ExcludeUnicodePunct).unwrap();
        assert_eq!(e.total.scored, 8);
        let e = evaluate(&g, &g, PunctuationPolicy::IncludeAll).unwrap();
        assert_eq!(e.total.scored, 9);
    }

    #[test]
    fn punctuation_detection() {
        assert!(is_punctuation("."));
        assert!(is_punctuation("\u{201c}"));
        assert!(is_punctuation("..."));
        assert!(!is_punctuation("U.S."));
        assert!(!is_punctuation("$"));
    }

    #[test]
    fn mismatch_names_sentence() {
        let g = vec![economic(), economic()];
        let mut p = g.clone();
        p[1].tokens.pop();
        assert!(matches!(
            evaluate(&g, &p, PunctuationPolicy::IncludeAll),
            Err(DataError::LengthMismatch { sentence: 1, gold: 9, pred: 8 })
        ));
    }

    #[test]
    fn empty_corpus_is_vacuously_perfect() {
        let e = evaluate(&[], &[], PunctuationPolicy::IncludeAll).unwrap();
        assert_eq!((e.uas, e.las), (100.0, 100.0));
    }
}
