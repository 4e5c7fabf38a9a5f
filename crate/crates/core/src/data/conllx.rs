//! CoNLL-X reading and writing.
//!
//! Every token line has ten tab-separated columns: ID, FORM, LEMMA, CPOSTAG,
//! POSTAG, FEATS, HEAD, DEPREL, PHEAD, PDEPREL. `_` marks a missing value
//! and sentences are separated by blank lines.

use std::io::{BufRead, Write};

use super::DataError;

/// One token. String columns other than FORM are `None` when the file has
/// `_`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Token {
    pub form: String,
    pub lemma: Option<String>,
    pub cpos: Option<String>,
    pub pos: Option<String>,
    pub feats: Option<String>,
    pub head: Option<usize>,
    pub deprel: Option<String>,
    pub phead: Option<String>,
    pub pdeprel: Option<String>,
}

impl Token {
    pub fn new(form: impl Into<String>) -> Self {
        Token {
            form: form.into(),
            ..Token::default()
        }
    }

    /// Fine-grained tag, falling back to the coarse tag.
    pub fn tag(&self) -> Option<&str> {
        self.pos.as_deref().or(self.cpos.as_deref())
    }
}

/// Tokens `1..=n`; position 0 is the implicit root symbol.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn new(tokens: Vec<Token>) -> Self {
        Sentence { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Token `i` (1-based).
    pub fn token(&self, i: usize) -> &Token {
        &self.tokens[i - 1]
    }

    /// Gold heads, if every token has one.
    pub fn heads(&self) -> Option<Vec<usize>> {
        self.tokens.iter().map(|t| t.head).collect()
    }
}

fn field(s: &str) -> Option<String> {
    if s == "_" {
        None
    } else {
        Some(s.to_string())
    }
}

fn parse_index(s: &str, column: &str, line: usize) -> Result<usize, DataError> {
    s.parse().map_err(|_| DataError::Parse {
        line,
        message: format!("{column} column is not a non-negative integer: {s:?}"),
    })
}

/// Reads all sentences. Lines starting with `#` are skipped.
pub fn read_conllx<R: BufRead>(reader: R) -> Result<Vec<Sentence>, DataError> {
    let mut sentences = Vec::new();
    let mut tokens: Vec<Token> = Vec::new();
    let mut head_lines: Vec<usize> = Vec::new();

    let finish = |tokens: &mut Vec<Token>, head_lines: &mut Vec<usize>, out: &mut Vec<Sentence>| {
        let n = tokens.len();
        for (t, &line) in tokens.iter().zip(head_lines.iter()) {
            if let Some(h) = t.head {
                if h > n {
                    return Err(DataError::Parse {
                        line,
                        message: format!("HEAD {h} is outside 0..={n}"),
                    });
                }
            }
        }
        if n > 0 {
            out.push(Sentence::new(std::mem::take(tokens)));
        }
        head_lines.clear();
        Ok(())
    };

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            finish(&mut tokens, &mut head_lines, &mut sentences)?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(DataError::Parse {
                line: line_no,
                message: format!("expected 10 tab-separated columns, found {}", cols.len()),
            });
        }
        let id = parse_index(cols[0], "ID", line_no)?;
        if id != tokens.len() + 1 {
            return Err(DataError::Parse {
                line: line_no,
                message: format!("expected token ID {}, found {id}", tokens.len() + 1),
            });
        }
        let head = match cols[6] {
            "_" => None,
            s => Some(parse_index(s, "HEAD", line_no)?),
        };
        tokens.push(Token {
            form: cols[1].to_string(),
            lemma: field(cols[2]),
            cpos: field(cols[3]),
            pos: field(cols[4]),
            feats: field(cols[5]),
            head,
            deprel: field(cols[7]),
            phead: field(cols[8]),
            pdeprel: field(cols[9]),
        });
        head_lines.push(line_no);
    }
    finish(&mut tokens, &mut head_lines, &mut sentences)?;
    Ok(sentences)
}

/// Writes sentences; every token must have a head.
pub fn write_conllx<W: Write>(mut writer: W, sentences: &[Sentence]) -> Result<(), DataError> {
    let opt = |v: &Option<String>| v.clone().unwrap_or_else(|| "_".to_string());
    for (s_idx, sentence) in sentences.iter().enumerate() {
        for (i, t) in sentence.tokens.iter().enumerate() {
            let head = t.head.ok_or(DataError::MissingPrediction {
                sentence: s_idx,
                token: i + 1,
            })?;
            writeln!(
                writer,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                i + 1,
                t.form,
                opt(&t.lemma),
                opt(&t.cpos),
                opt(&t.pos),
                opt(&t.feats),
                head,
                opt(&t.deprel),
                opt(&t.phead),
                opt(&t.pdeprel),
            )?;
        }
        writeln!(writer)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const ECONOMIC: &str = "1\tEconomic\t_\tJJ\tJJ\t_\t2\tamod\t_\t_\n\
        2\tnews\t_\tNN\tNN\t_\t3\tnsubj\t_\t_\n\
        3\thad\t_\tVBD\tVBD\t_\t0\troot\t_\t_\n\
        4\tlittle\t_\tJJ\tJJ\t_\t5\tamod\t_\t_\n\
        5\teffect\t_\tNN\tNN\t_\t3\tdobj\t_\t_\n\
        6\ton\t_\tIN\tIN\t_\t5\tprep\t_\t_\n\
        7\tfinancial\t_\tJJ\tJJ\t_\t8\tamod\t_\t_\n\
        8\tmarkets\t_\tNNS\tNNS\t_\t6\tpobj\t_\t_\n\
        9\t.\t_\t.\t.\t_\t3\tpunct\t_\t_\n\n";

    #[test]
    fn column_mapping() {
        let s = read_conllx("1\tEconomic\t_\tJJ\tJJ\t_\t0\tamod\t_\t_\n".as_bytes()).unwrap();
        let t = s[0].token(1);
        assert_eq!(t.form, "Economic");
        assert_eq!(t.tag(), Some("JJ"));
        assert_eq!(t.head, Some(0));
        assert_eq!(t.deprel.as_deref(), Some("amod"));
        assert_eq!(t.lemma, None);
    }

    #[test]
    fn reads_figure_sentence() {
        let s = read_conllx(ECONOMIC.as_bytes()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].len(), 9);
        assert_eq!(s[0].heads().unwrap(), vec![2, 3, 0, 5, 3, 5, 8, 6, 3]);
    }

    #[test]
    fn empty_input() {
        assert!(read_conllx("".as_bytes()).unwrap().is_empty());
        assert!(read_conllx("\n\n# comment\n\n".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn coarse_tag_fallback() {
        let s = read_conllx("1\ta\t_\tDT\t_\t_\t0\tdet\t_\t_\n".as_bytes()).unwrap();
        assert_eq!(s[0].token(1).tag(), Some("DT"));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let bad_id = "1\ta\t_\tX\tX\t_\t0\tr\t_\t_\n3\tb\t_\tX\tX\t_\t1\tr\t_\t_\n";
        assert!(matches!(
            read_conllx(bad_id.as_bytes()),
            Err(DataError::Parse { line: 2, .. })
        ));
        let bad_head = "1\ta\t_\tX\tX\t_\tx\tr\t_\t_\n";
        assert!(matches!(
            read_conllx(bad_head.as_bytes()),
            Err(DataError::Parse { line: 1, .. })
        ));
        let out_of_range = "# c\n1\ta\t_\tX\tX\t_\t0\tr\t_\t_\n2\tb\t_\tX\tX\t_\t7\tr\t_\t_\n";
        assert!(matches!(
            read_conllx(out_of_range.as_bytes()),
            Err(DataError::Parse { line: 3, .. })
        ));
        let short = "1\ta\tb\n";
        assert!(matches!(
            read_conllx(short.as_bytes()),
            Err(DataError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn write_is_byte_stable() {
        let s = read_conllx(ECONOMIC.as_bytes()).unwrap();
        let mut out = Vec::new();
        write_conllx(&mut out, &s).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), ECONOMIC);
    }

    #[test]
    fn single_token_sentence() {
        let s = vec![Sentence::new(vec![Token {
            head: Some(0),
            ..Token::new("Hi")
        }])];
        let mut out = Vec::new();
        write_conllx(&mut out, &s).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "1\tHi\t_\t_\t_\t_\t0\t_\t_\t_\n\n");
    }

    #[test]
    fn missing_head_is_an_error() {
        let s = vec![Sentence::new(vec![Token::new("a")])];
        assert!(matches!(
            write_conllx(Vec::new(), &s),
            Err(DataError::MissingPrediction { sentence: 0, token: 1 })
        ));
    }
}
