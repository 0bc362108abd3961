use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::augment::{AugmentationPair, DEFAULT_REPLACE_K};
use crate::encoder::Tier;
use crate::error::{Error, Result};
use crate::objectives::LossConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Teacher,
    Student,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LossKind {
    Bpr,
    Npair,
    Fnd,
    FndCl,
}

impl LossKind {
    pub fn needs_teacher(self) -> bool {
        matches!(self, LossKind::Fnd | LossKind::FndCl)
    }
}

/// How negatives are drawn for a batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NegativePool {
    /// `N` fresh negatives for every pair.
    PerPair,
    /// One pool of `N` negatives shared by every pair of the batch.
    Shared,
}

macro_rules! keyword_enum {
    ($ty:ident, $what:literal, $($variant:ident => $name:literal),+) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $name),+ })
            }
        }
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($ty::$variant),)+
                    other => Err(Error::Config(format!(concat!("unknown ", $what, " `{}`"), other))),
                }
            }
        }
    };
}

keyword_enum!(Mode, "mode", Teacher => "teacher", Student => "student");
keyword_enum!(LossKind, "loss", Bpr => "bpr", Npair => "npair", Fnd => "fnd", FndCl => "fnd_cl");
keyword_enum!(NegativePool, "negative pool", PerPair => "per_pair", Shared => "shared");

/// Everything that determines one training or evaluation run.
///
/// Mirrors a flat `key = value` file; [`RunConfig::set`] accepts the same keys as the file.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub mode: Mode,
    pub loss: LossKind,
    pub tau_fnd: f64,
    pub tau_cl: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub tier: Tier,
    pub d: usize,
    pub heads: usize,
    pub sab_count: usize,
    pub augment: AugmentationPair,
    pub replace_k: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub seed: u64,
    pub hard_negatives: bool,
    pub negative_pool: NegativePool,
    pub teacher: Option<PathBuf>,
    pub eval_ratio: usize,
    pub eval_seed: u64,
    pub ae_epochs: usize,
    pub ae_latent: usize,
    /// Forces every false-negativeness value; only meaningful for the reduction checks.
    pub signal_override: Option<f64>,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: None,
            mode: Mode::Teacher,
            loss: LossKind::Npair,
            tau_fnd: 0.1,
            tau_cl: 0.1,
            alpha: 1.25,
            lambda: 0.2,
            tier: Tier::TeacherLarge,
            d: 128,
            heads: 8,
            sab_count: 2,
            augment: AugmentationPair::default(),
            replace_k: DEFAULT_REPLACE_K,
            batch_size: 32,
            epochs: 30,
            lr: 0.05,
            momentum: 0.9,
            seed: 0,
            hard_negatives: false,
            negative_pool: NegativePool::PerPair,
            teacher: None,
            eval_ratio: 10,
            eval_seed: 7,
            ae_epochs: 30,
            ae_latent: 32,
            signal_override: None,
            out_dir: None,
        }
    }
}

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean `{value}` for `{key}`"))),
    }
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty() && value != "-").then(|| PathBuf::from(value))
}

impl RunConfig {
    /// Defaults for a student run with the given loss.
    pub fn student(loss: LossKind) -> Self {
        RunConfig {
            mode: Mode::Student,
            loss,
            tier: Tier::StudentS,
            ..RunConfig::default()
        }
    }

    pub const KEYS: [&'static str; 27] = [
        "dataset",
        "mode",
        "loss",
        "tau_fnd",
        "tau_cl",
        "alpha",
        "lambda",
        "tier",
        "d",
        "heads",
        "sab_count",
        "augment",
        "replace_k",
        "batch_size",
        "epochs",
        "lr",
        "momentum",
        "seed",
        "hard_negatives",
        "negative_pool",
        "teacher",
        "eval_ratio",
        "eval_seed",
        "ae_epochs",
        "ae_latent",
        "signal_override",
        "out_dir",
    ];

    /// Sets one key; dashes in `key` are read as underscores.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        match key.as_str() {
            "dataset" => self.dataset = optional_path(value),
            "mode" => self.mode = value.parse()?,
            "loss" => self.loss = value.parse()?,
            "tau_fnd" => self.tau_fnd = parse(&key, value)?,
            "tau_cl" => self.tau_cl = parse(&key, value)?,
            "alpha" => self.alpha = parse(&key, value)?,
            "lambda" => self.lambda = parse(&key, value)?,
            "tier" => self.tier = value.parse()?,
            "d" => self.d = parse(&key, value)?,
            "heads" => self.heads = parse(&key, value)?,
            "sab_count" => self.sab_count = parse(&key, value)?,
            "augment" => self.augment = value.parse()?,
            "replace_k" => self.replace_k = parse(&key, value)?,
            "batch_size" => self.batch_size = parse(&key, value)?,
            "epochs" => self.epochs = parse(&key, value)?,
            "lr" => self.lr = parse(&key, value)?,
            "momentum" => self.momentum = parse(&key, value)?,
            "seed" => self.seed = parse(&key, value)?,
            "hard_negatives" => self.hard_negatives = parse_bool(&key, value)?,
            "negative_pool" => self.negative_pool = value.parse()?,
            "teacher" => self.teacher = optional_path(value),
            "eval_ratio" => self.eval_ratio = parse(&key, value)?,
            "eval_seed" => self.eval_seed = parse(&key, value)?,
            "ae_epochs" => self.ae_epochs = parse(&key, value)?,
            "ae_latent" => self.ae_latent = parse(&key, value)?,
            "signal_override" => {
                self.signal_override = if value.is_empty() || value == "-" {
                    None
                } else {
                    Some(parse(&key, value)?)
                }
            }
            "out_dir" => self.out_dir = optional_path(value),
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let path = |p: &Option<PathBuf>| p.as_ref().map_or("-".to_string(), |p| p.display().to_string());
        Some(match key {
            "dataset" => path(&self.dataset),
            "mode" => self.mode.to_string(),
            "loss" => self.loss.to_string(),
            "tau_fnd" => self.tau_fnd.to_string(),
            "tau_cl" => self.tau_cl.to_string(),
            "alpha" => self.alpha.to_string(),
            "lambda" => self.lambda.to_string(),
            "tier" => self.tier.to_string(),
            "d" => self.d.to_string(),
            "heads" => self.heads.to_string(),
            "sab_count" => self.sab_count.to_string(),
            "augment" => self.augment.to_string(),
            "replace_k" => self.replace_k.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "epochs" => self.epochs.to_string(),
            "lr" => self.lr.to_string(),
            "momentum" => self.momentum.to_string(),
            "seed" => self.seed.to_string(),
            "hard_negatives" => self.hard_negatives.to_string(),
            "negative_pool" => self.negative_pool.to_string(),
            "teacher" => path(&self.teacher),
            "eval_ratio" => self.eval_ratio.to_string(),
            "eval_seed" => self.eval_seed.to_string(),
            "ae_epochs" => self.ae_epochs.to_string(),
            "ae_latent" => self.ae_latent.to_string(),
            "signal_override" => self.signal_override.map_or("-".to_string(), |v| v.to_string()),
            "out_dir" => path(&self.out_dir),
            _ => return None,
        })
    }

    /// Parses `key = value` lines on top of `self`; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("config line {}: expected `key = value`", i + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        Self::KEYS
            .iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("listed key")))
            .collect()
    }

    pub fn loss_config(&self) -> LossConfig<f32> {
        LossConfig {
            tau_fnd: self.tau_fnd as f32,
            tau_cl: self.tau_cl as f32,
            alpha: self.alpha as f32,
            lambda: self.lambda as f32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.lr >= 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("lr must be nonnegative and momentum in [0, 1)".into()));
        }
        if self.eval_ratio == 0 {
            return Err(Error::Config("eval_ratio must be at least 1".into()));
        }
        self.loss_config().validate()?;
        match self.mode {
            Mode::Teacher => {
                if self.loss != LossKind::Npair {
                    return Err(Error::Config("the teacher is trained with the npair loss".into()));
                }
                if !self.tier.is_teacher() {
                    return Err(Error::Config(format!("teacher runs need the teacher tier, got {}", self.tier)));
                }
            }
            Mode::Student => {
                if self.tier.is_teacher() {
                    return Err(Error::Config("student runs need a student tier".into()));
                }
            }
        }
        Ok(())
    }
}
