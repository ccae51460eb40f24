//! The `ses` command line: `train`, `eval`, `count-params`, `mock-embed` and
//! `inspect-data`.
//!
//! Run settings are layered as built-in defaults < `--config` file < flags.
//! Each run-setting flag is the config key with `-` for `_`.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::adapter::count_parameters;
use crate::checkpoint;
use crate::config::{load_config, RunConfig};
use crate::data::{self, load_split, make_batches, mock_embed, parse_fasta, Dataset};
use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::trainer::{self, LabelStats};
use crate::vocab::{encode, StreamKind};

#[derive(Debug, Parser)]
#[command(name = "ses", about = "Structure-aware adapter over frozen PLM embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train an adapter; writes checkpoint and logs into a run directory.
    Train {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Evaluate a checkpoint on one split and print its metrics.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Print the number of trainable adapter parameters.
    CountParams {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Write deterministic mock embeddings for every FASTA record.
    MockEmbed {
        #[arg(long)]
        fasta: PathBuf,
        #[arg(long, default_value = "embeddings")]
        out_dir: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Load and validate the configured splits and summarize them.
    InspectData {
        #[command(flatten)]
        run: RunArgs,
    },
}

/// Flags that override run-configuration keys.
#[derive(Debug, Args, Default)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    learning_rate: Option<String>,
    #[arg(long)]
    weight_decay: Option<String>,
    #[arg(long)]
    adam_beta1: Option<String>,
    #[arg(long)]
    adam_beta2: Option<String>,
    #[arg(long)]
    adam_eps: Option<String>,
    #[arg(long)]
    dropout: Option<String>,
    #[arg(long)]
    token_budget: Option<String>,
    #[arg(long)]
    max_epochs: Option<String>,
    #[arg(long)]
    patience: Option<String>,
    #[arg(long)]
    monitor: Option<String>,
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    dim: Option<String>,
    #[arg(long)]
    heads: Option<String>,
    #[arg(long)]
    rope_base: Option<String>,
    #[arg(long, overrides_with = "no_use_foldseek")]
    use_foldseek: bool,
    #[arg(long, overrides_with = "use_foldseek")]
    no_use_foldseek: bool,
    #[arg(long, overrides_with = "no_use_dssp")]
    use_dssp: bool,
    #[arg(long, overrides_with = "use_dssp")]
    no_use_dssp: bool,
    #[arg(long, overrides_with = "no_use_rope")]
    use_rope: bool,
    #[arg(long, overrides_with = "use_rope")]
    no_use_rope: bool,
    #[arg(long)]
    task_type: Option<String>,
    #[arg(long)]
    num_labels: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    train_data: Option<String>,
    #[arg(long)]
    valid_data: Option<String>,
    #[arg(long)]
    test_data: Option<String>,
    #[arg(long)]
    embeddings_dir: Option<String>,
    #[arg(long)]
    output_dir: Option<String>,
}

fn toggle(on: bool, off: bool) -> Option<&'static str> {
    match (on, off) {
        (true, _) => Some("true"),
        (_, true) => Some("false"),
        _ => None,
    }
}

impl RunArgs {
    fn overrides(&self) -> Vec<(&'static str, &str)> {
        let values: [(&'static str, Option<&str>); 25] = [
            ("learning_rate", self.learning_rate.as_deref()),
            ("weight_decay", self.weight_decay.as_deref()),
            ("adam_beta1", self.adam_beta1.as_deref()),
            ("adam_beta2", self.adam_beta2.as_deref()),
            ("adam_eps", self.adam_eps.as_deref()),
            ("dropout", self.dropout.as_deref()),
            ("token_budget", self.token_budget.as_deref()),
            ("max_epochs", self.max_epochs.as_deref()),
            ("patience", self.patience.as_deref()),
            ("monitor", self.monitor.as_deref()),
            ("profile", self.profile.as_deref()),
            ("dim", self.dim.as_deref()),
            ("heads", self.heads.as_deref()),
            ("rope_base", self.rope_base.as_deref()),
            ("use_foldseek", toggle(self.use_foldseek, self.no_use_foldseek)),
            ("use_dssp", toggle(self.use_dssp, self.no_use_dssp)),
            ("use_rope", toggle(self.use_rope, self.no_use_rope)),
            ("task_type", self.task_type.as_deref()),
            ("num_labels", self.num_labels.as_deref()),
            ("seed", self.seed.as_deref()),
            ("train_data", self.train_data.as_deref()),
            ("valid_data", self.valid_data.as_deref()),
            ("test_data", self.test_data.as_deref()),
            ("embeddings_dir", self.embeddings_dir.as_deref()),
            ("output_dir", self.output_dir.as_deref()),
        ];
        values.into_iter().filter_map(|(k, v)| v.map(|v| (k, v))).collect()
    }

    fn resolve(&self) -> Result<RunConfig> {
        let cfg = self.layered()?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults, file and flags without cross-field validation.
    fn layered(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => RunConfig::default(),
        };
        for (key, value) in self.overrides() {
            cfg.set(key, value, 0).map_err(|e| match e {
                Error::Parse { msg, .. } => Error::Usage(format!("--{}: {msg}", key.replace('_', "-"))),
                other => other,
            })?;
        }
        Ok(cfg)
    }
}

/// Parses `argv` (including the program name) and runs the command, writing
/// results to `out`.
pub fn run<I, T>(argv: I, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if e.kind() == clap::error::ErrorKind::DisplayHelp => {
            return write!(out, "{}", e.render()).map_err(|e| Error::io("<stdout>", e));
        }
        Err(e) => return Err(Error::Usage(e.render().to_string())),
    };
    match cli.command {
        Command::Train { run } => cmd_train(&run.resolve()?, out),
        Command::Eval { checkpoint, split, run } => cmd_eval(&run.resolve()?, &checkpoint, &split, out),
        Command::CountParams { run } => {
            let cfg = run.resolve()?;
            let dim = cfg.dim.ok_or_else(|| Error::Usage("count-params requires --dim".into()))?;
            let adapter = cfg.adapter(dim);
            adapter.validate()?;
            writeln!(out, "{}", count_parameters(&adapter)).map_err(|e| Error::io("<stdout>", e))
        }
        Command::MockEmbed { fasta, out_dir, run } => {
            let cfg = run.layered()?;
            let dim = cfg.dim.ok_or_else(|| Error::Usage("mock-embed requires --dim".into()))?;
            let n = mock_embed_fasta(&fasta, &out_dir, dim, cfg.seed)?;
            writeln!(out, "wrote {n} embeddings (d = {dim}) to {}", out_dir.display())
                .map_err(|e| Error::io("<stdout>", e))
        }
        Command::InspectData { run } => cmd_inspect(&run.resolve()?, out),
    }
}

pub fn mock_embed_fasta(fasta: &Path, out_dir: &Path, dim: usize, seed: u64) -> Result<usize> {
    if dim == 0 {
        return Err(Error::Usage("--dim must be at least 1".into()));
    }
    let text = std::fs::read_to_string(fasta).map_err(|e| Error::io(fasta, e))?;
    let records = parse_fasta(&text)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for (id, seq) in &records {
        let aa = encode(seq, StreamKind::AminoAcid)?;
        data::write_embedding_file(out_dir.join(format!("{id}.emb")), &mock_embed(&aa, dim, seed))?;
    }
    Ok(records.len())
}

/// Rejects flag combinations whose structural files are absent.
fn check_stream_files(cfg: &RunConfig, split: &str) -> Result<()> {
    let paths = cfg.split_paths(split)?;
    if !paths.dir.is_dir() {
        return Err(Error::Config(format!("{split} split directory {} does not exist", paths.dir.display())));
    }
    for (enabled, file, flag) in [
        (cfg.use_foldseek, data::FOLDSEEK_FILE, "--use-foldseek"),
        (cfg.use_dssp, data::DSSP_FILE, "--use-dssp"),
    ] {
        let p = paths.dir.join(file);
        if enabled && !p.exists() {
            return Err(Error::Usage(format!(
                "{flag} is set but {} does not exist (disable it with --no-{})",
                p.display(),
                &flag[2..]
            )));
        }
    }
    Ok(())
}

fn infer_dim(cfg: &RunConfig, split: &str) -> Result<usize> {
    if let Some(d) = cfg.dim {
        return Ok(d);
    }
    let paths = cfg.split_paths(split)?;
    let text = std::fs::read_to_string(paths.dir.join(data::SEQUENCES_FILE))
        .map_err(|e| Error::io(paths.dir.join(data::SEQUENCES_FILE), e))?;
    let first = parse_fasta(&text)?
        .into_iter()
        .next()
        .ok_or_else(|| Error::EmptySequence(format!("{split} split has no sequences")))?;
    Ok(data::read_embedding_file(paths.embedding_path(&first.0))?.cols())
}

fn load(cfg: &RunConfig, split: &str, dim: usize) -> Result<Dataset> {
    check_stream_files(cfg, split)?;
    load_split(&cfg.split_paths(split)?, &cfg.adapter(dim))
}

fn write_file(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn cmd_train(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let dim = infer_dim(cfg, "train")?;
    let train_set = load(cfg, "train", dim)?;
    let valid_set = load(cfg, "valid", dim)?;
    let dir = cfg.run_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_file(&dir.join("run.cfg"), cfg.to_text())?;

    let mut run_log = String::new();
    let outcome = trainer::train_with(cfg, &train_set, &valid_set, |e| {
        let metrics: Vec<String> = e.valid.entries().iter().map(|(k, v)| format!("{k}={v:.6}")).collect();
        run_log.push_str(&format!(
            "epoch {} step {} train_loss={:.6} {}\n",
            e.epoch,
            e.step,
            e.train_loss,
            metrics.join(" ")
        ));
    })?;
    let adapter = cfg.adapter(dim);
    checkpoint::save(dir.join("checkpoint.bin"), &outcome.params)?;
    write_file(&dir.join("train_log.tsv"), outcome.log.to_lines())?;
    if let Some(stats) = &outcome.label_stats {
        write_file(&dir.join("label_stats.txt"), stats.to_text())?;
    }

    let mut summary = trainer::evaluate(&outcome.params, &adapter, &valid_set, outcome.label_stats.as_ref())?;
    let mut block = format!("split=valid\nbest_epoch={}\n{summary}", outcome.log.best_epoch);
    if cfg.test_data.is_some() {
        let test_set = load(cfg, "test", dim)?;
        summary = trainer::evaluate(&outcome.params, &adapter, &test_set, outcome.label_stats.as_ref())?;
        block.push_str(&format!("split=test\n{summary}"));
    }
    run_log.push_str(&block);
    write_file(&dir.join("metrics.txt"), &block)?;
    write_file(&dir.join("run.log"), &run_log)?;
    writeln!(out, "run_dir={}\n{block}", dir.display()).map_err(|e| Error::io("<stdout>", e))
}

fn cmd_eval(cfg: &RunConfig, ckpt: &Path, split: &str, out: &mut dyn Write) -> Result<()> {
    let dim = infer_dim(cfg, split)?;
    let adapter = cfg.adapter(dim);
    let params = checkpoint::load(ckpt, &adapter)?;
    let data = load(cfg, split, dim)?;
    let stats_path = ckpt.with_file_name("label_stats.txt");
    let stats = if stats_path.exists() {
        Some(LabelStats::from_text(
            &std::fs::read_to_string(&stats_path).map_err(|e| Error::io(&stats_path, e))?,
        )?)
    } else {
        None
    };
    let report = trainer::evaluate(&params, &adapter, &data, stats.as_ref())?;
    write!(out, "split={split}\n{report}").map_err(|e| Error::io("<stdout>", e))
}

fn cmd_inspect(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let mut text = String::new();
    let mut dim = cfg.dim;
    for split in ["train", "valid", "test"] {
        if cfg.split_paths(split).is_err() {
            continue;
        }
        let d = match dim {
            Some(d) => d,
            None => infer_dim(cfg, split)?,
        };
        dim = Some(d);
        let data = load(cfg, split, d)?;
        let lengths: Vec<usize> = data.records().iter().map(|r| r.len()).collect();
        let batches = make_batches(data.records(), cfg.token_budget, Stream::new(cfg.seed, "batches").split(1))?;
        let padded: usize = batches.iter().map(|b| b.tokens()).sum();
        let real: usize = lengths.iter().sum();
        text.push_str(&format!(
            "split={split}\nrecords={}\ndim={d}\nmin_len={}\nmax_len={}\nmean_len={:.2}\nbatches={}\npadding_fraction={:.4}\n",
            data.len(),
            lengths.iter().min().unwrap_or(&0),
            lengths.iter().max().unwrap_or(&0),
            real as f64 / data.len().max(1) as f64,
            batches.len(),
            1.0 - real as f64 / padded.max(1) as f64,
        ));
    }
    if text.is_empty() {
        return Err(Error::Usage("no splits configured (set train_data/valid_data/test_data)".into()));
    }
    write!(out, "{text}").map_err(|e| Error::io("<stdout>", e))
}
