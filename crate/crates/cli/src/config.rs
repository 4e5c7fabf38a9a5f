//! `key = value` run configuration shared by every subcommand.

use std::fmt::{self, Display, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use mtparse::data::PunctuationPolicy;
use mtparse::encoder::EncoderConfig;
use mtparse::TrainConfig;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown configuration key {0:?}")]
    UnknownKey(String),
    #[error("bad value {value:?} for {key}: {message}")]
    Value {
        key: String,
        value: String,
        message: String,
    },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Paths {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub paths: Paths,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value {
        key: key.into(),
        value: value.into(),
        message: e.to_string(),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(ConfigError::Value {
            key: key.into(),
            value: value.into(),
            message: "expected true or false".into(),
        }),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>, ConfigError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>, ConfigError>
where
    T::Err: Display,
{
    if value == "none" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

impl RunConfig {
    /// Parses a config file. Blank lines and `#` comments are ignored.
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut config = RunConfig::default();
        config.apply_text(text)?;
        Ok(config)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Applies one `key=value` assignment.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), ConfigError> {
        let (key, value) = pair.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: 0,
            text: pair.to_string(),
        })?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let (p, e, t) = (&mut self.paths, &mut self.encoder, &mut self.train);
        let path = || Some(PathBuf::from(value));
        match key {
            "train" => p.train = path(),
            "dev" => p.dev = path(),
            "test" => p.test = path(),
            "embeddings" => p.embeddings = path(),
            "checkpoint" => p.checkpoint = path(),
            "output" => p.output = path(),

            "word_dim" => e.word_dim = parse(key, value)?,
            "char_dim" => e.char_dim = parse(key, value)?,
            "pos_dim" => e.pos_dim = parse(key, value)?,
            "cnn_window" => e.cnn_window = parse(key, value)?,
            "cnn_filters" => e.cnn_filters = parse(key, value)?,
            "lstm_layers" => e.lstm_layers = parse(key, value)?,
            "lstm_state" => e.lstm_state = parse(key, value)?,
            "mlp_dim" => e.mlp_dim = parse(key, value)?,
            "dropout_embed" => e.dropout_embed = parse(key, value)?,
            "dropout_hidden" => e.dropout_hidden = parse(key, value)?,
            "dropout_layer" => e.dropout_layer = parse(key, value)?,
            "use_char" => e.use_char = parse_bool(key, value)?,
            "use_pos" => e.use_pos = parse_bool(key, value)?,
            "unk_replace" => e.unk_replace = parse(key, value)?,
            "normalize" => e.normalize = parse_bool(key, value)?,

            "objective" => t.objective = parse(key, value)?,
            "ablation" => t.ablation = optional(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "epochs" => t.epochs = parse(key, value)?,
            "learning_rate" => t.learning_rate = parse(key, value)?,
            "beta1" => t.beta1 = parse(key, value)?,
            "beta2" => t.beta2 = parse(key, value)?,
            "epsilon" => t.epsilon = parse(key, value)?,
            "decay" => t.decay = parse(key, value)?,
            "schedule" => t.schedule = parse_list(key, value)?,
            "clip" => t.clip = parse(key, value)?,
            "min_freq" => t.min_freq = parse(key, value)?,
            "max_len" => t.max_len = optional(key, value)?,
            "invalid_gold" => t.invalid_gold = parse(key, value)?,
            "dev_every" => t.dev_every = parse(key, value)?,
            "single_root" => t.single_root = parse_bool(key, value)?,
            "punctuation" => t.punctuation = parse::<PunctuationPolicy>(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Every setting as `key = value` lines; unset paths are left out.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: &dyn Display| {
            let _ = writeln!(out, "{k} = {v}");
        };
        let p = &self.paths;
        for (k, v) in [
            ("train", &p.train),
            ("dev", &p.dev),
            ("test", &p.test),
            ("embeddings", &p.embeddings),
            ("checkpoint", &p.checkpoint),
            ("output", &p.output),
        ] {
            if let Some(v) = v {
                line(k, &v.display());
            }
        }
        let e = &self.encoder;
        line("word_dim", &e.word_dim);
        line("char_dim", &e.char_dim);
        line("pos_dim", &e.pos_dim);
        line("cnn_window", &e.cnn_window);
        line("cnn_filters", &e.cnn_filters);
        line("lstm_layers", &e.lstm_layers);
        line("lstm_state", &e.lstm_state);
        line("mlp_dim", &e.mlp_dim);
        line("dropout_embed", &e.dropout_embed);
        line("dropout_hidden", &e.dropout_hidden);
        line("dropout_layer", &e.dropout_layer);
        line("use_char", &e.use_char);
        line("use_pos", &e.use_pos);
        line("unk_replace", &e.unk_replace);
        line("normalize", &e.normalize);
        let t = &self.train;
        line("objective", &t.objective);
        line("ablation", &OrNone(t.ablation));
        line("batch_size", &t.batch_size);
        line("seed", &t.seed);
        line("epochs", &t.epochs);
        line("learning_rate", &t.learning_rate);
        line("beta1", &t.beta1);
        line("beta2", &t.beta2);
        line("epsilon", &t.epsilon);
        line("decay", &t.decay);
        let schedule: Vec<String> = t.schedule.iter().map(usize::to_string).collect();
        line("schedule", &schedule.join(","));
        line("clip", &t.clip);
        line("min_freq", &t.min_freq);
        line("max_len", &OrNone(t.max_len));
        line("invalid_gold", &t.invalid_gold);
        line("dev_every", &t.dev_every);
        line("single_root", &t.single_root);
        line("punctuation", &t.punctuation);
        out
    }
}

struct OrNone<T>(Option<T>);

impl<T: Display> Display for OrNone<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0 {
            Some(v) => v.fmt(f),
            None => f.write_str("none"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mtparse::{Ablation, Objective};

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_text(&c.to_text()).unwrap(), c);
        assert!(c.to_text().contains("lstm_state = 256\n"));
        assert!(c.to_text().contains("schedule = 10,30,50,70,100\n"));
    }

    #[test]
    fn edited_round_trip() {
        let text = "# experiment\ntrain = a.conll\nlstm_state = 8\nablation = +Char\n\
                    objective = cross_entropy\nschedule = 2, 4\nmax_len = 40\nlearning_rate = 0.001\n\
                    punctuation = exclude_unicode_punct\n";
        let c = RunConfig::from_text(text).unwrap();
        assert_eq!(c.train.ablation, Some(Ablation::Char));
        assert_eq!(c.train.objective, Objective::CrossEntropy);
        assert_eq!(c.train.schedule, vec![2, 4]);
        assert_eq!(c.paths.train, Some(PathBuf::from("a.conll")));
        assert_eq!(RunConfig::from_text(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(
            RunConfig::from_text("lstm_size = 3"),
            Err(ConfigError::UnknownKey("lstm_size".into()))
        );
        assert!(matches!(RunConfig::from_text("epochs"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(RunConfig::from_text("epochs = many"), Err(ConfigError::Value { .. })));
        assert!(matches!(RunConfig::from_text("use_pos = maybe"), Err(ConfigError::Value { .. })));
    }
}
