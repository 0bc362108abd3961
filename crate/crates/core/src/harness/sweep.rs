use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::augment::{AugmentationPair, SimilarityIndex};
use crate::datagen::Dataset;
use crate::encoder::Tier;
use crate::error::{Error, Result};
use crate::objectives::TeacherCache;
use crate::Real;

use super::train::{build_similarity_index, train_student, train_teacher};
use super::{ExperimentReport, LossKind, Mode, RunConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    Alpha,
    Augment,
    Tier,
    BatchSize,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Alpha => "alpha",
            SweepAxis::Augment => "augment",
            SweepAxis::Tier => "tier",
            SweepAxis::BatchSize => "batch_size",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(SweepAxis::Alpha),
            "augment" => Ok(SweepAxis::Augment),
            "tier" => Ok(SweepAxis::Tier),
            "batch_size" | "batch-size" | "batch" => Ok(SweepAxis::BatchSize),
            other => Err(Error::Config(format!("unknown sweep axis `{other}`"))),
        }
    }
}

impl SweepAxis {
    /// Grid used when none is given on the command line.
    pub fn default_values(self) -> Vec<String> {
        let v: Vec<String> = match self {
            SweepAxis::Alpha => ["0.5", "1.0", "1.25", "1.5", "2.0"].map(String::from).to_vec(),
            SweepAxis::Augment => AugmentationPair::all().iter().map(ToString::to_string).collect(),
            SweepAxis::Tier => Tier::ALL.iter().map(ToString::to_string).collect(),
            SweepAxis::BatchSize => ["8", "16", "32", "64"].map(String::from).to_vec(),
        };
        v
    }
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub entries: Vec<(String, ExperimentReport)>,
}

impl SweepResult {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<16} {:>9} {:>9} {:>10} {:>6}", self.axis.to_string(), "val_auc", "test_auc", "test_ndcg", "best");
        for (label, r) in &self.entries {
            let m = |k| r.metric(k).unwrap_or(f64::NAN);
            let _ = writeln!(
                s,
                "{label:<16} {:>9.4} {:>9.4} {:>10.4} {:>6}",
                m("val_auc"),
                m("test_auc"),
                m("test_ndcg"),
                r.best_epoch
            );
        }
        s
    }

    /// Entry with the highest validation AUC; ties keep the earlier entry.
    pub fn best(&self) -> Option<&(String, ExperimentReport)> {
        self.entries.iter().fold(None, |best: Option<&(String, ExperimentReport)>, e| match best {
            Some(b) if b.1.metric("val_auc") >= e.1.metric("val_auc") => Some(b),
            _ => Some(e),
        })
    }
}

/// Runs one training per value of `axis`, starting each from `base`.
///
/// Teacher-tier points of a tier sweep train a teacher; every other point trains a student
/// with `base.loss`. Batch-size points scale the learning rate linearly from `base`.
pub fn run_sweep(
    base: &RunConfig,
    dataset: &Dataset,
    axis: SweepAxis,
    values: &[String],
    cache: Option<&TeacherCache<Real>>,
) -> Result<SweepResult> {
    if values.is_empty() {
        return Err(Error::Config("empty sweep grid".into()));
    }
    let needs_index = |c: &RunConfig| c.loss == LossKind::FndCl && c.augment.needs_index();
    let index: Option<SimilarityIndex> = if axis == SweepAxis::Augment || needs_index(base) {
        Some(build_similarity_index(base, dataset)?)
    } else {
        None
    };
    let mut entries = Vec::with_capacity(values.len());
    for value in values {
        let mut cfg = base.clone();
        match axis {
            SweepAxis::Alpha => cfg.set("alpha", value)?,
            SweepAxis::Augment => cfg.set("augment", value)?,
            SweepAxis::Tier => {
                cfg.set("tier", value)?;
                if cfg.tier.is_teacher() {
                    cfg.mode = Mode::Teacher;
                    cfg.loss = LossKind::Npair;
                } else {
                    cfg.mode = Mode::Student;
                }
            }
            SweepAxis::BatchSize => {
                cfg.set("batch_size", value)?;
                cfg.lr = base.lr * cfg.batch_size as f64 / base.batch_size as f64;
            }
        }
        if let Some(dir) = &base.out_dir {
            cfg.out_dir = Some(dir.join(format!("{axis}_{}", value.replace(',', "-"))));
        }
        log::info!("sweep {axis} = {value}");
        let outcome = match cfg.mode {
            Mode::Teacher => train_teacher(&cfg, dataset)?,
            Mode::Student => train_student(&cfg, dataset, cache, index.as_ref())?,
        };
        if let Some(dir) = &cfg.out_dir {
            outcome.report.save(dir, "report")?;
        }
        entries.push((value.clone(), outcome.report));
    }
    Ok(SweepResult { axis, entries })
}
