mod config;

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser as ClapParser, Subcommand};
use log::info;
use mtparse::data::{evaluate, read_conllx, write_conllx, PunctuationPolicy, Sentence};
use mtparse::encoder::{load_embeddings, EncoderError};
use mtparse::params::ParamSet;
use mtparse::trainer::Trainer;
use mtparse::{Ablation, Checkpoint, Error, Objective};

use config::{ConfigError, RunConfig};

#[derive(ClapParser)]
#[command(name = "mtparse", version, about = "Graph-based dependency parser with tree-CRF training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// `key = value` configuration file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Extra `key=value` assignment, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Where to write the model.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Basic, +Char, +POS or Full.
        #[arg(long)]
        ablation: Option<Ablation>,
        /// global_likelihood or cross_entropy.
        #[arg(long)]
        objective: Option<Objective>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Decode dev sentences with exactly one root child.
        #[arg(long)]
        single_root: bool,
    },
    /// Parse a CoNLL-X file with a trained model.
    Parse {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Input sentences; gold columns are ignored.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Output file; standard output if absent.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        single_root: bool,
    },
    /// Score predictions against gold annotation.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// include_all or exclude_unicode_punct.
        #[arg(long)]
        punctuation: Option<PunctuationPolicy>,
    },
    /// Print a summary of a checkpoint.
    Inspect {
        checkpoint: PathBuf,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Run(#[from] Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Run(Error::Config(_) | Error::Encoder(EncoderError::Config(_))) => 1,
            CliError::Run(e) if e.is_numerical() => 3,
            CliError::Run(_) => 2,
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn load_config(common: &Common) -> CliResult<RunConfig> {
    let mut config = match &common.config {
        Some(path) => RunConfig::from_text(&fs::read_to_string(path).map_err(|e| {
            CliError::Usage(format!("cannot read config {}: {e}", path.display()))
        })?)?,
        None => RunConfig::default(),
    };
    for pair in &common.set {
        config.set_pair(pair)?;
    }
    Ok(config)
}

fn required<'a>(path: &'a Option<PathBuf>, what: &str) -> CliResult<&'a Path> {
    let path = path
        .as_deref()
        .ok_or_else(|| CliError::Usage(format!("no {what} given (flag --{what} or key `{what}`)")))?;
    if !path.exists() {
        return Err(CliError::Usage(format!("{what} file {} does not exist", path.display())));
    }
    Ok(path)
}

fn read_corpus(path: &Path) -> CliResult<Vec<Sentence>> {
    let file = File::open(path).map_err(Error::from)?;
    Ok(read_conllx(BufReader::new(file)).map_err(Error::from)?)
}

fn cmd_train(mut config: RunConfig) -> CliResult {
    let train_path = required(&config.paths.train, "train")?.to_path_buf();
    if config.paths.dev.is_some() {
        required(&config.paths.dev, "dev")?;
    }
    let checkpoint_path = config
        .paths
        .checkpoint
        .clone()
        .ok_or_else(|| CliError::Usage("no checkpoint path given (flag --checkpoint or key `checkpoint`)".into()))?;
    if let Some(a) = config.train.ablation {
        a.apply(&mut config.encoder);
    }
    config.encoder.validate().map_err(Error::from)?;
    config.train.validate()?;

    info!("configuration:");
    for line in config.to_text().lines() {
        info!("  {line}");
    }

    let train = read_corpus(&train_path)?;
    let dev = match &config.paths.dev {
        Some(p) => Some(read_corpus(p)?),
        None => None,
    };
    let pretrained = match &config.paths.embeddings {
        Some(_) => {
            let path = required(&config.paths.embeddings, "embeddings")?;
            let file = File::open(path).map_err(Error::from)?;
            Some(load_embeddings(BufReader::new(file)).map_err(Error::from)?)
        }
        None => None,
    };

    let mut trainer = Trainer::new(
        &train,
        dev.as_deref(),
        config.encoder.clone(),
        config.train.clone(),
        pretrained.as_ref(),
    )?;
    info!(
        "{} training sentences, {} parameters",
        trainer.num_examples(),
        trainer.parser().params.num_scalars()
    );
    while !trainer.is_finished() {
        trainer.run_epoch()?;
    }
    let checkpoint = trainer.finish();
    checkpoint.save(&checkpoint_path)?;
    info!("wrote {}", checkpoint_path.display());

    let best = checkpoint
        .best_epoch
        .and_then(|e| checkpoint.log.iter().find(|l| l.epoch == e));
    match best {
        Some(l) if l.dev_uas.is_some() => println!(
            "best epoch {}: dev UAS {:.2} LAS {:.2}",
            l.epoch,
            l.dev_uas.unwrap_or_default(),
            l.dev_las.unwrap_or_default()
        ),
        _ => println!(
            "trained {} epochs (no dev set), final loss {:.6}",
            checkpoint.log.len(),
            checkpoint.log.last().map_or(0.0, |l| l.loss)
        ),
    }
    Ok(())
}

fn cmd_parse(config: RunConfig) -> CliResult {
    let checkpoint = Checkpoint::load(required(&config.paths.checkpoint, "checkpoint")?)?;
    let input = read_corpus(required(&config.paths.test, "input")?)?;
    let parsed = checkpoint.parser.parse_all(&input, config.train.single_root)?;
    match &config.paths.output {
        Some(path) => {
            let file = File::create(path).map_err(Error::from)?;
            write_conllx(BufWriter::new(file), &parsed).map_err(Error::from)?;
            info!("wrote {} sentences to {}", parsed.len(), path.display());
        }
        None => write_conllx(io::stdout().lock(), &parsed).map_err(Error::from)?,
    }
    Ok(())
}

fn cmd_eval(gold: &Path, pred: &Path, policy: PunctuationPolicy) -> CliResult {
    let check = |p: &Path, what: &str| {
        if p.exists() {
            Ok(())
        } else {
            Err(CliError::Usage(format!("{what} file {} does not exist", p.display())))
        }
    };
    check(gold, "gold")?;
    check(pred, "pred")?;
    let e = evaluate(&read_corpus(gold)?, &read_corpus(pred)?, policy).map_err(Error::from)?;
    println!("punctuation: {policy}");
    println!("tokens: {}", e.total.scored);
    println!("UAS: {} ({}/{})", e.uas, e.total.heads, e.total.scored);
    println!("LAS: {} ({}/{})", e.las, e.total.labeled, e.total.scored);
    Ok(())
}

fn cmd_inspect(path: &Path) -> CliResult {
    if !path.exists() {
        return Err(CliError::Usage(format!("checkpoint {} does not exist", path.display())));
    }
    let c = Checkpoint::load(path)?;
    let p = &c.parser;
    let mut out = io::stdout().lock();
    let mut w = || -> io::Result<()> {
        writeln!(out, "checkpoint: {}", path.display())?;
        writeln!(out, "parameters: {}", p.params.num_scalars())?;
        writeln!(out, "words: {}", p.vocab.words.len())?;
        writeln!(out, "chars: {}", p.vocab.chars.len())?;
        writeln!(out, "tags: {}", p.vocab.tags.len())?;
        writeln!(out, "labels: {} ({})", p.vocab.num_labels(), p.vocab.labels.items().join(" "))?;
        writeln!(out, "[configuration]")?;
        let run = RunConfig {
            encoder: p.config.clone(),
            train: c.train_config.clone().unwrap_or_default(),
            ..RunConfig::default()
        };
        write!(out, "{}", run.to_text())?;
        writeln!(out, "[training]")?;
        writeln!(out, "epochs: {}", c.log.len())?;
        if let Some(first) = c.log.first() {
            writeln!(out, "first: {first}")?;
        }
        if let Some(last) = c.log.last() {
            writeln!(out, "last: {last}")?;
        }
        match c.best_epoch.and_then(|e| c.log.iter().find(|l| l.epoch == e)) {
            Some(best) => writeln!(out, "kept: {best}")?,
            None => writeln!(out, "kept: none")?,
        }
        Ok(())
    };
    w().map_err(Error::from)?;
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Train {
            common,
            train,
            dev,
            embeddings,
            checkpoint,
            ablation,
            objective,
            seed,
            epochs,
            batch_size,
            single_root,
        } => {
            let mut config = load_config(&common)?;
            let p = &mut config.paths;
            p.train = train.or(p.train.take());
            p.dev = dev.or(p.dev.take());
            p.embeddings = embeddings.or(p.embeddings.take());
            p.checkpoint = checkpoint.or(p.checkpoint.take());
            let t = &mut config.train;
            t.ablation = ablation.or(t.ablation);
            t.objective = objective.unwrap_or(t.objective);
            t.seed = seed.unwrap_or(t.seed);
            t.epochs = epochs.unwrap_or(t.epochs);
            t.batch_size = batch_size.unwrap_or(t.batch_size);
            t.single_root |= single_root;
            cmd_train(config)
        }
        Command::Parse {
            common,
            checkpoint,
            input,
            output,
            single_root,
        } => {
            let mut config = load_config(&common)?;
            let p = &mut config.paths;
            p.checkpoint = checkpoint.or(p.checkpoint.take());
            p.test = input.or(p.test.take());
            p.output = output.or(p.output.take());
            config.train.single_root |= single_root;
            cmd_parse(config)
        }
        Command::Eval {
            common,
            gold,
            pred,
            punctuation,
        } => {
            let config = load_config(&common)?;
            cmd_eval(&gold, &pred, punctuation.unwrap_or(config.train.punctuation))
        }
        Command::Inspect { checkpoint } => cmd_inspect(&checkpoint),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
