use std::path::{Path, PathBuf};
use std::time::Instant;

use super::afu_curve;
use super::report::{curve_to_csv, epochs_to_csv, RunReport};
use super::train::{train, EpochRecord};
use crate::config::ExperimentConfig;
use crate::data::{load_mnist_idx, Dataset};
use crate::error::{Error, Result};
use crate::loss::LossSpec;
use crate::network::{AfuSettings, Network};
use crate::rng::derived;

/// Consulted when the config names no data directory.
pub const MNIST_DIR_ENV: &str = "AFU_MNIST_DIR";

pub const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

const DOWNLOAD_HINT: &str = "download the four MNIST IDX files (train-images-idx3-ubyte, \
    train-labels-idx1-ubyte, t10k-images-idx3-ubyte, t10k-labels-idx1-ubyte), \
    decompress them into one directory, and pass it with --mnist-dir or AFU_MNIST_DIR";

/// The configured directory, else the environment variable. Every file
/// must be present.
pub fn resolve_mnist_dir(configured: Option<&Path>) -> Result<PathBuf> {
    let dir = match configured {
        Some(d) => d.to_path_buf(),
        None => match std::env::var_os(MNIST_DIR_ENV) {
            Some(d) => PathBuf::from(d),
            None => {
                return Err(Error::Config(format!(
                    "no MNIST directory given; {DOWNLOAD_HINT}"
                )))
            }
        },
    };
    for f in MNIST_FILES {
        let p = dir.join(f);
        if !p.is_file() {
            return Err(Error::Config(format!(
                "MNIST file {} not found; {DOWNLOAD_HINT}",
                p.display()
            )));
        }
    }
    Ok(dir)
}

/// `(train, test)` sets from a directory holding the IDX files.
pub fn load_mnist_dir(dir: &Path) -> Result<(Dataset, Dataset)> {
    let train = load_mnist_idx(&dir.join(MNIST_FILES[0]), &dir.join(MNIST_FILES[1]))?;
    let test = load_mnist_idx(&dir.join(MNIST_FILES[2]), &dir.join(MNIST_FILES[3]))?;
    Ok((train, test))
}

pub fn run_mnist(cfg: &ExperimentConfig, on_epoch: impl FnMut(&EpochRecord)) -> Result<RunReport> {
    cfg.validate()?;
    let dir = resolve_mnist_dir(cfg.mnist.data_dir.as_deref())?;
    let (train_set, test_set) = load_mnist_dir(&dir)?;
    run_mnist_on(cfg, &train_set, &test_set, on_epoch)
}

/// Train on seeded subsets of already loaded sets and emit the loss curve
/// and one curve plus parameter file per AFU.
pub fn run_mnist_on(
    cfg: &ExperimentConfig,
    full_train: &Dataset,
    full_test: &Dataset,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<RunReport> {
    let start = Instant::now();
    cfg.validate()?;
    if cfg.loss != LossSpec::NegativeLogLikelihood {
        return Err(Error::Config(
            "the MNIST experiment trains with NLL loss".into(),
        ));
    }
    let train_set = full_train.subset(cfg.mnist.train_subset, cfg.seed)?;
    let test_set = full_test.subset(cfg.mnist.test_subset, cfg.seed ^ 1)?;
    let specs = cfg.layer_specs()?;
    let settings = cfg.uses_afu().then(|| AfuSettings::from(cfg.afu));
    let mut net = Network::build(
        train_set.feature_dim(),
        &specs,
        settings.as_ref(),
        &mut derived(cfg.seed, 1),
    )?;
    if net.output_dim() != train_set.num_classes() {
        return Err(Error::Config(format!(
            "output layer has {} units for {} classes",
            net.output_dim(),
            train_set.num_classes()
        )));
    }

    let history = train(
        &mut net,
        &train_set,
        Some(&test_set),
        &cfg.train_settings(),
        on_epoch,
    )?;
    let mut report = RunReport::new(cfg, &cfg.out_dir);
    report.initial_loss = Some(history.initial_loss);
    report.final_train_accuracy = Some(history.last().train_accuracy);
    report.final_test_accuracy = history.last().test_accuracy;
    report.epochs = history.epochs.clone();
    report.emit("loss.csv", &epochs_to_csv(&history.epochs))?;

    let afus = net.afus();
    for (k, afu) in afus.iter().enumerate() {
        report.emit(
            &format!("afu{k}.csv"),
            &curve_to_csv(&afu_curve(afu, &cfg.grid)?),
        )?;
        report.emit(&format!("afu{k}.toml"), &afu.to_toml_string())?;
    }
    for a in 0..afus.len() {
        for b in a + 1..afus.len() {
            let diff = afus[a]
                .flat_parameters()
                .iter()
                .zip(afus[b].flat_parameters())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            report.metrics.insert(format!("afu_max_diff_{a}_{b}"), diff);
        }
    }

    report.wall_clock = start.elapsed();
    report.finish()?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::afu::{Afu, SharingScope};
    use crate::data::{LabelDomain, Sample};

    /// Ten well separated 16-pixel "digits".
    fn synthetic(n: usize, seed: u64) -> Dataset {
        use rand::Rng;
        let mut rng = derived(seed, 0);
        let samples = (0..n)
            .map(|i| {
                let label = (i % 10) as i64;
                let features = (0..16)
                    .map(|p| {
                        let on = p == label as usize || p == 15 - label as usize;
                        (if on { 0.9 } else { 0.0 }) + 0.1 * rng.random::<f64>()
                    })
                    .collect();
                Sample { features, label }
            })
            .collect();
        Dataset::new(samples, LabelDomain::Classes(10), 16).unwrap()
    }

    fn small(dir: &Path, scope: SharingScope) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::mnist();
        cfg.network.layers[0].units = 12;
        cfg.network.layers[1].units = 12;
        cfg.afu.scope = scope;
        cfg.mnist.train_subset = 300;
        cfg.mnist.test_subset = 100;
        cfg.batch_size = Some(16);
        cfg.grid.curve_points = 11;
        cfg.out_dir = dir.to_path_buf();
        cfg
    }

    #[test]
    fn per_layer_run_emits_three_distinct_afus() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(dir.path(), SharingScope::PerLayer);
        cfg.network.layers[2].activation = "afu".into();
        let r = run_mnist_on(&cfg, &synthetic(400, 0), &synthetic(150, 1), |_| {}).unwrap();
        let mut loaded = Vec::new();
        for k in 0..3 {
            assert!(dir.path().join(format!("mnist_s0_afu{k}.csv")).exists());
            loaded.push(Afu::load(&dir.path().join(format!("mnist_s0_afu{k}.toml"))).unwrap());
        }
        assert!(!dir.path().join("mnist_s0_afu3.csv").exists());
        for key in ["afu_max_diff_0_1", "afu_max_diff_0_2", "afu_max_diff_1_2"] {
            assert!(r.metric(key).unwrap() > 1e-6, "{key}");
        }
        assert_ne!(loaded[0], loaded[1]);
        let acc = r.final_test_accuracy.unwrap();
        assert!((0.0..=1.0).contains(&acc));
        assert_eq!(r.epochs.len(), 3);
        assert!(r.epochs.iter().all(|e| e.test_accuracy.is_some()));
    }

    #[test]
    fn initial_nll_near_log_ten_and_learning_happens() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(dir.path(), SharingScope::Network);
        for l in &mut cfg.network.layers {
            l.activation = "relu".into();
        }
        cfg.network.layers[2].activation = "linear".into();
        cfg.epochs = 6;
        let r = run_mnist_on(&cfg, &synthetic(400, 0), &synthetic(150, 1), |_| {}).unwrap();
        let l0 = r.initial_loss.unwrap();
        assert!((l0 - 10f64.ln()).abs() <= 0.3, "{l0}");
        assert!(
            r.final_test_accuracy.unwrap() > 0.3,
            "{:?}",
            r.final_test_accuracy
        );
        assert!(r.files.iter().all(|f| !f.contains("afu")));
    }

    #[test]
    fn missing_directory_gives_hint() {
        let dir = tempfile::tempdir().unwrap();
        let err = resolve_mnist_dir(Some(dir.path())).unwrap_err().to_string();
        assert!(
            err.contains("train-images-idx3-ubyte") && err.contains("AFU_MNIST_DIR"),
            "{err}"
        );
    }

    #[test]
    fn oversized_subset_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(dir.path(), SharingScope::Network);
        assert!(matches!(
            run_mnist_on(&cfg, &synthetic(100, 0), &synthetic(150, 1), |_| {}),
            Err(Error::Size { .. })
        ));
    }
}
