//! Run configuration: built-in defaults, overridden by a flat `key=value`
//! file, overridden by command-line flags.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::adapter::{AdapterConfig, TaskType};
use crate::data::SplitPaths;
use crate::error::{Error, Result};
use crate::optim::AdamWConfig;

/// Early-stopping defaults depend on the kind of task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskProfile {
    Solubility,
    Annotation,
    General,
}

impl TaskProfile {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskProfile::Solubility => "solubility",
            TaskProfile::Annotation => "annotation",
            TaskProfile::General => "general",
        }
    }

    /// `(max_epochs, patience)`
    pub fn early_stop_defaults(self) -> (usize, usize) {
        match self {
            TaskProfile::Solubility => (10, 3),
            TaskProfile::Annotation => (50, 5),
            TaskProfile::General => (15, 5),
        }
    }
}

impl std::str::FromStr for TaskProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "solubility" => Ok(TaskProfile::Solubility),
            "annotation" => Ok(TaskProfile::Annotation),
            "general" => Ok(TaskProfile::General),
            other => Err(Error::Config(format!("unknown profile {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub dropout: f64,
    pub token_budget: usize,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub monitor: Option<String>,
    pub profile: TaskProfile,
    pub dim: Option<usize>,
    pub heads: usize,
    pub rope_base: f64,
    pub use_foldseek: bool,
    pub use_dssp: bool,
    pub use_rope: bool,
    pub task_type: TaskType,
    pub num_labels: usize,
    pub seed: u64,
    pub train_data: Option<PathBuf>,
    pub valid_data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub embeddings_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            learning_rate: 5e-4,
            weight_decay: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            dropout: 0.1,
            token_budget: 60_000,
            max_epochs: None,
            patience: None,
            monitor: None,
            profile: TaskProfile::General,
            dim: None,
            heads: 8,
            rope_base: crate::rope::DEFAULT_BASE,
            use_foldseek: true,
            use_dssp: true,
            use_rope: true,
            task_type: TaskType::SingleLabel,
            num_labels: 2,
            seed: 0,
            train_data: None,
            valid_data: None,
            test_data: None,
            embeddings_dir: None,
            output_dir: PathBuf::from("runs"),
        }
    }
}

pub const KEYS: &[&str] = &[
    "learning_rate",
    "weight_decay",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "dropout",
    "token_budget",
    "max_epochs",
    "patience",
    "monitor",
    "profile",
    "dim",
    "heads",
    "rope_base",
    "use_foldseek",
    "use_dssp",
    "use_rope",
    "task_type",
    "num_labels",
    "seed",
    "train_data",
    "valid_data",
    "test_data",
    "embeddings_dir",
    "output_dir",
];

fn parse_bool(v: &str) -> Option<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Some(true),
        "false" | "0" | "no" | "off" => Some(false),
        _ => None,
    }
}

impl RunConfig {
    /// Sets one key from its text form. `line` is used in diagnostics (0 for
    /// command-line values).
    pub fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
            value.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("{key}: cannot parse {value:?}"),
            })
        }
        let flag = |v: &str| {
            parse_bool(v).ok_or_else(|| Error::Parse {
                line,
                msg: format!("{key}: expected a boolean, got {v:?}"),
            })
        };
        match key {
            "learning_rate" => self.learning_rate = num(key, value, line)?,
            "weight_decay" => self.weight_decay = num(key, value, line)?,
            "adam_beta1" => self.adam_beta1 = num(key, value, line)?,
            "adam_beta2" => self.adam_beta2 = num(key, value, line)?,
            "adam_eps" => self.adam_eps = num(key, value, line)?,
            "dropout" => self.dropout = num(key, value, line)?,
            "token_budget" => self.token_budget = num(key, value, line)?,
            "max_epochs" => self.max_epochs = Some(num(key, value, line)?),
            "patience" => self.patience = Some(num(key, value, line)?),
            "monitor" => self.monitor = Some(value.to_string()),
            "profile" => {
                self.profile = value.parse().map_err(|e: Error| Error::Parse { line, msg: e.to_string() })?
            }
            "dim" => self.dim = Some(num(key, value, line)?),
            "heads" => self.heads = num(key, value, line)?,
            "rope_base" => self.rope_base = num(key, value, line)?,
            "use_foldseek" => self.use_foldseek = flag(value)?,
            "use_dssp" => self.use_dssp = flag(value)?,
            "use_rope" => self.use_rope = flag(value)?,
            "task_type" => {
                self.task_type = value.parse().map_err(|e: Error| Error::Parse { line, msg: e.to_string() })?
            }
            "num_labels" => self.num_labels = num(key, value, line)?,
            "seed" => self.seed = num(key, value, line)?,
            "train_data" => self.train_data = Some(PathBuf::from(value)),
            "valid_data" => self.valid_data = Some(PathBuf::from(value)),
            "test_data" => self.test_data = Some(PathBuf::from(value)),
            "embeddings_dir" => self.embeddings_dir = Some(PathBuf::from(value)),
            "output_dir" => self.output_dir = PathBuf::from(value),
            other => {
                return Err(Error::Parse {
                    line,
                    msg: format!("unknown key {other:?}"),
                })
            }
        }
        Ok(())
    }

    /// Applies a `key=value` file body on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected key=value, got {line:?}"),
            })?;
            self.set(key.trim(), value.trim(), i + 1)?;
        }
        Ok(())
    }

    pub fn max_epochs(&self) -> usize {
        self.max_epochs.unwrap_or(self.profile.early_stop_defaults().0)
    }

    pub fn patience(&self) -> usize {
        self.patience.unwrap_or(self.profile.early_stop_defaults().1)
    }

    pub fn monitor(&self) -> &str {
        match &self.monitor {
            Some(m) => m,
            None => default_monitor(self.task_type),
        }
    }

    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }

    pub fn adapter(&self, dim: usize) -> AdapterConfig {
        AdapterConfig {
            dim,
            heads: self.heads,
            use_foldseek: self.use_foldseek,
            use_dssp: self.use_dssp,
            use_rope: self.use_rope,
            dropout: self.dropout,
            num_labels: self.num_labels,
            task_type: self.task_type,
            rope_base: self.rope_base,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !monitors_for(self.task_type, self.num_labels).contains(&self.monitor()) {
            return Err(Error::Config(format!(
                "monitor {:?} is not produced by {} tasks (choose from {:?})",
                self.monitor(),
                self.task_type,
                monitors_for(self.task_type, self.num_labels)
            )));
        }
        if self.token_budget == 0 {
            return Err(Error::Config("token_budget must be positive".into()));
        }
        if self.max_epochs() == 0 {
            return Err(Error::Config("max_epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || self.weight_decay < 0.0 {
            return Err(Error::Config("learning_rate must be positive and weight_decay >= 0".into()));
        }
        if let Some(d) = self.dim {
            self.adapter(d).validate()?;
        }
        Ok(())
    }

    pub fn split_paths(&self, split: &str) -> Result<SplitPaths> {
        let dir = match split {
            "train" => &self.train_data,
            "valid" => &self.valid_data,
            "test" => &self.test_data,
            other => return Err(Error::Config(format!("unknown split {other:?}"))),
        };
        let dir = dir
            .clone()
            .ok_or_else(|| Error::Config(format!("{split}_data is not set")))?;
        let embeddings_dir = self.embeddings_dir.clone().unwrap_or_else(|| dir.join("embeddings"));
        Ok(SplitPaths { dir, embeddings_dir })
    }

    /// Every key, one `key=value` per line, in a fixed order. Unset optional
    /// values are written with their effective default.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let opt_path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let entries: Vec<(&str, Option<String>)> = vec![
            ("learning_rate", Some(self.learning_rate.to_string())),
            ("weight_decay", Some(self.weight_decay.to_string())),
            ("adam_beta1", Some(self.adam_beta1.to_string())),
            ("adam_beta2", Some(self.adam_beta2.to_string())),
            ("adam_eps", Some(self.adam_eps.to_string())),
            ("dropout", Some(self.dropout.to_string())),
            ("token_budget", Some(self.token_budget.to_string())),
            ("max_epochs", Some(self.max_epochs().to_string())),
            ("patience", Some(self.patience().to_string())),
            ("monitor", Some(self.monitor().to_string())),
            ("profile", Some(self.profile.as_str().to_string())),
            ("dim", self.dim.map(|d| d.to_string())),
            ("heads", Some(self.heads.to_string())),
            ("rope_base", Some(self.rope_base.to_string())),
            ("use_foldseek", Some(self.use_foldseek.to_string())),
            ("use_dssp", Some(self.use_dssp.to_string())),
            ("use_rope", Some(self.use_rope.to_string())),
            ("task_type", Some(self.task_type.to_string())),
            ("num_labels", Some(self.num_labels.to_string())),
            ("seed", Some(self.seed.to_string())),
            ("train_data", opt_path(&self.train_data)),
            ("valid_data", opt_path(&self.valid_data)),
            ("test_data", opt_path(&self.test_data)),
            ("embeddings_dir", opt_path(&self.embeddings_dir)),
            ("output_dir", Some(self.output_dir.display().to_string())),
        ];
        for (k, v) in entries {
            if let Some(v) = v {
                let _ = writeln!(s, "{k}={v}");
            }
        }
        s
    }

    /// Short digest of every setting except the seed and output location.
    pub fn hash(&self) -> String {
        let body: String = self
            .to_text()
            .lines()
            .filter(|l| !l.starts_with("seed=") && !l.starts_with("output_dir="))
            .map(|l| format!("{l}\n"))
            .collect();
        let digest = Sha256::digest(body.as_bytes());
        digest[..6].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(format!("run-{}-seed{}", self.hash(), self.seed))
    }
}

pub fn default_monitor(task: TaskType) -> &'static str {
    match task {
        TaskType::SingleLabel => "acc",
        TaskType::MultiLabel => "fmax",
        TaskType::Regression => "spearman",
    }
}

pub fn monitors_for(task: TaskType, num_labels: usize) -> Vec<&'static str> {
    match task {
        TaskType::SingleLabel if num_labels == 2 => vec!["acc", "f1", "mcc", "loss"],
        TaskType::SingleLabel => vec!["acc", "loss"],
        TaskType::MultiLabel => vec!["fmax", "loss"],
        TaskType::Regression => vec!["spearman", "loss"],
    }
}

/// Metrics where lower is better.
pub fn is_minimized(monitor: &str) -> bool {
    monitor == "loss"
}

/// Defaults, then the file at `path`.
pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = RunConfig::default();
    cfg.apply_text(&text)?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("").unwrap();
        assert_eq!(cfg.learning_rate, 0.0005);
        assert_eq!(cfg.weight_decay, 0.01);
        assert_eq!(cfg.dropout, 0.1);
        assert_eq!(cfg.token_budget, 60_000);
        assert_eq!((cfg.max_epochs(), cfg.patience()), (15, 5));
        assert_eq!(cfg.monitor(), "acc");
    }

    #[test]
    fn profile_defaults() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("profile=solubility\n").unwrap();
        assert_eq!((cfg.max_epochs(), cfg.patience()), (10, 3));
        cfg.apply_text("profile=annotation\ntask_type=multi_label\n").unwrap();
        assert_eq!((cfg.max_epochs(), cfg.patience()), (50, 5));
        assert_eq!(cfg.monitor(), "fmax");
        cfg.apply_text("patience=2").unwrap();
        assert_eq!(cfg.patience(), 2);
    }

    #[test]
    fn command_line_overrides_file() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("patience=3 # from file\n").unwrap();
        cfg.set("patience", "5", 0).unwrap();
        assert_eq!(cfg.patience(), 5);
    }

    #[test]
    fn bad_values_name_key_and_line() {
        let mut cfg = RunConfig::default();
        let err = cfg.apply_text("# header\nlearning_rate=abc\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2") && msg.contains("learning_rate"), "{msg}");
        let err = cfg.apply_text("colour=blue").unwrap_err();
        assert!(err.to_string().contains("unknown key"));
        assert!(cfg.apply_text("use_rope=maybe").is_err());
        assert!(cfg.apply_text("just words").is_err());
    }

    #[test]
    fn monitor_must_match_task() {
        let mut cfg = RunConfig::default();
        cfg.monitor = Some("fmax".into());
        assert!(cfg.validate().is_err());
        cfg.task_type = TaskType::MultiLabel;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn canonical_text_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("dim=16\nheads=2\nuse_dssp=false\ntrain_data=/tmp/x\nseed=4").unwrap();
        let mut again = RunConfig::default();
        again.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(again.to_text(), cfg.to_text());
        assert_eq!(again.hash(), cfg.hash());
    }

    #[test]
    fn run_dir_depends_on_settings_and_seed() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.seed = 1;
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.run_dir(), b.run_dir());
        b.use_rope = false;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn every_key_is_settable() {
        let mut cfg = RunConfig::default();
        for line in cfg.to_text().lines() {
            let (k, v) = line.split_once('=').unwrap();
            assert!(KEYS.contains(&k));
            cfg.set(k, v, 0).unwrap();
        }
    }
}
