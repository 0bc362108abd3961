use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::Result;

use super::RunConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auc: f64,
}

/// Outcome of one run: config snapshot, learning curve, final metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub title: String,
    pub config: RunConfig,
    /// Epoch 0 is the initialisation, evaluated before any update.
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub metrics: Vec<(String, f64)>,
    pub notes: Vec<(String, String)>,
    pub wall_clock_secs: f64,
}

impl ExperimentReport {
    pub fn new(title: impl Into<String>, config: RunConfig) -> Self {
        ExperimentReport {
            title: title.into(),
            config,
            epochs: Vec::new(),
            best_epoch: 0,
            metrics: Vec::new(),
            notes: Vec::new(),
            wall_clock_secs: 0.0,
        }
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }

    pub fn set_metric(&mut self, name: &str, value: f64) {
        match self.metrics.iter_mut().find(|(k, _)| k == name) {
            Some(slot) => slot.1 = value,
            None => self.metrics.push((name.to_string(), value)),
        }
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.notes.push((key.to_string(), value.to_string()));
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "== {} ==", self.title);
        let _ = writeln!(s, "seed {}  loss {}  tier {}  epochs {}", self.config.seed, self.config.loss, self.config.tier, self.config.epochs);
        if !self.epochs.is_empty() {
            let _ = writeln!(s, "{:>6}  {:>12}  {:>8}", "epoch", "train_loss", "val_auc");
            for e in &self.epochs {
                let mark = if e.epoch == self.best_epoch { " *" } else { "" };
                let _ = writeln!(s, "{:>6}  {:>12.6}  {:>8.4}{mark}", e.epoch, e.train_loss, e.val_auc);
            }
        }
        for (k, v) in &self.metrics {
            let _ = writeln!(s, "{k:<24} {v:.6}");
        }
        for (k, v) in &self.notes {
            let _ = writeln!(s, "{k:<24} {v}");
        }
        let _ = writeln!(s, "{:<24} {:.1}", "wall_clock_secs", self.wall_clock_secs);
        s
    }

    /// One `key value` record per line: config, curve, metrics, notes.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "title {}", self.title);
        for k in RunConfig::KEYS {
            let _ = writeln!(s, "config.{k} {}", self.config.get(k).expect("listed key"));
        }
        for e in &self.epochs {
            let _ = writeln!(s, "epoch.{}.train_loss {:e}", e.epoch, e.train_loss);
            let _ = writeln!(s, "epoch.{}.val_auc {:e}", e.epoch, e.val_auc);
        }
        let _ = writeln!(s, "best_epoch {}", self.best_epoch);
        for (k, v) in &self.metrics {
            let _ = writeln!(s, "metric.{k} {v:e}");
        }
        for (k, v) in &self.notes {
            let _ = writeln!(s, "note.{k} {v}");
        }
        let _ = writeln!(s, "wall_clock_secs {:.3}", self.wall_clock_secs);
        s
    }

    /// Writes `<stem>.txt` (table) and `<stem>.kv` (records) into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("{stem}.txt")), self.to_table())?;
        fs::write(dir.join(format!("{stem}.kv")), self.to_kv())?;
        Ok(())
    }
}
