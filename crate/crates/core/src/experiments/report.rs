use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;

use super::train::EpochRecord;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};

/// Summary of one experiment run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub experiment: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_train_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_test_accuracy: Option<f64>,
    /// Scalar results specific to the experiment.
    pub metrics: BTreeMap<String, f64>,
    /// Emitted files, relative to the output directory. The report itself
    /// is last.
    pub files: Vec<String>,
    pub epochs: Vec<EpochRecord>,
    pub config: ExperimentConfig,
    /// Kept out of the written report so reruns stay byte-identical.
    #[serde(skip)]
    pub wall_clock: Duration,
    #[serde(skip)]
    pub out_dir: PathBuf,
}

impl RunReport {
    pub fn new(config: &ExperimentConfig, out_dir: &Path) -> Self {
        Self {
            experiment: config.name.clone(),
            seed: config.seed,
            initial_loss: None,
            final_train_accuracy: None,
            final_test_accuracy: None,
            metrics: BTreeMap::new(),
            files: Vec::new(),
            epochs: Vec::new(),
            config: config.clone(),
            wall_clock: Duration::ZERO,
            out_dir: out_dir.to_path_buf(),
        }
    }

    pub fn metric(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).copied()
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.out_dir.join(file)
    }

    /// Write `contents` to `<out_dir>/<prefix><suffix>` and record it.
    pub fn emit(&mut self, suffix: &str, contents: &str) -> Result<PathBuf> {
        let name = format!("{}{suffix}", self.config.file_prefix());
        let path = self.out_dir.join(&name);
        std::fs::create_dir_all(&self.out_dir).map_err(|e| Error::io(&self.out_dir, e))?;
        std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.files.push(name);
        Ok(path)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("report serialises")
    }

    /// Write the report as `<prefix>report.toml`, listing itself last.
    pub fn finish(&mut self) -> Result<PathBuf> {
        for e in &self.epochs {
            if !e.train_loss.is_finite() {
                return Err(Error::NonFinite(format!("epoch {} loss", e.epoch)));
            }
        }
        self.files
            .push(format!("{}report.toml", self.config.file_prefix()));
        let text = self.to_toml_string();
        self.files.pop();
        self.emit("report.toml", &text)
    }
}

/// `epoch,train_loss,train_accuracy[,test_accuracy]`.
pub fn epochs_to_csv(epochs: &[EpochRecord]) -> String {
    use std::fmt::Write as _;
    let with_test = epochs.iter().any(|e| e.test_accuracy.is_some());
    let mut out = String::from("epoch,train_loss,train_accuracy");
    out.push_str(if with_test { ",test_accuracy\n" } else { "\n" });
    for e in epochs {
        let _ = write!(out, "{},{},{}", e.epoch, e.train_loss, e.train_accuracy);
        if let Some(t) = e.test_accuracy {
            let _ = write!(out, ",{t}");
        }
        out.push('\n');
    }
    out
}

/// `z,g` curve CSV.
pub fn curve_to_csv(points: &[(f64, f64)]) -> String {
    use std::fmt::Write as _;
    let mut out = String::from("z,g\n");
    for (z, g) in points {
        let _ = writeln!(out, "{z},{g}");
    }
    out
}
