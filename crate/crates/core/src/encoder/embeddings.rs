//! Pretrained word vectors in whitespace-separated text format.

use std::io::BufRead;

use ndarray::Array2;

use super::EncoderError;

#[derive(Clone, Debug, PartialEq)]
pub struct Embeddings {
    pub words: Vec<String>,
    /// One row per word.
    pub vectors: Array2<f64>,
}

impl Embeddings {
    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Reads `word v1 v2 ...` lines. The dimension comes from the first vector
/// line; a leading `count dim` header line is skipped.
pub fn load_embeddings<R: BufRead>(reader: R) -> Result<Embeddings, EncoderError> {
    let mut words = Vec::new();
    let mut values = Vec::new();
    let mut dim = None;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else { continue };
        let rest: Vec<&str> = fields.collect();
        if idx == 0 && rest.len() == 1 && word.parse::<usize>().is_ok() && rest[0].parse::<usize>().is_ok() {
            continue;
        }
        let vector = rest
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| EncoderError::Embedding {
                line: line_no,
                message: e.to_string(),
            })?;
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(EncoderError::Embedding {
                line: line_no,
                message: "non-finite value".into(),
            });
        }
        match dim {
            None if vector.is_empty() => {
                return Err(EncoderError::Embedding {
                    line: line_no,
                    message: "no vector values".into(),
                })
            }
            None => dim = Some(vector.len()),
            Some(d) if d != vector.len() => {
                return Err(EncoderError::Embedding {
                    line: line_no,
                    message: format!("expected {d} values, found {}", vector.len()),
                })
            }
            Some(_) => {}
        }
        words.push(word.to_string());
        values.extend(vector);
    }
    let dim = dim.unwrap_or(0);
    let vectors = Array2::from_shape_vec((words.len(), dim), values)
        .expect("row lengths were checked while reading");
    Ok(Embeddings { words, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_vectors() {
        let e = load_embeddings("the 0.1 0.2\ncat -1 2.5\n".as_bytes()).unwrap();
        assert_eq!(e.words, vec!["the", "cat"]);
        assert_eq!(e.dim(), 2);
        assert_eq!(e.vectors[[1, 1]], 2.5);
    }

    #[test]
    fn skips_count_header() {
        let e = load_embeddings("2 3\na 1 2 3\nb 4 5 6\n".as_bytes()).unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e.dim(), 3);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let err = load_embeddings("a 1 2 3\nb 4 5\n".as_bytes()).unwrap_err();
        assert!(matches!(err, EncoderError::Embedding { line: 2, .. }));
    }

    #[test]
    fn bad_number_is_an_error() {
        assert!(load_embeddings("a 1 x\n".as_bytes()).is_err());
    }
}
