//! End-to-end acceptance checks. Each test prints one `[PASS]` or `[FAIL]`
//! line for its criterion before asserting, so `--nocapture` gives a
//! scoreboard.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use afu_core::autograd::grad_check;
use afu_core::config::ExperimentConfig;
use afu_core::data::{
    encode_idx_images, encode_idx_labels, gen_xor_toy, parse_idx_images, parse_idx_labels, Dataset,
    ToyConfig,
};
use afu_core::experiments::report::RunReport;
use afu_core::experiments::{load_mnist_dir, run_mnist_on, run_toy, smoothness_analysis, GridSpec};
use afu_core::loss::LossSpec;
use afu_core::network::{ActivationChoice, AfuSettings, DenseLayer, LayerActivation, LayerSpec};
use afu_core::optim::LrSchedule;
use afu_core::rng::{seeded, symmetric_uniform};
use afu_core::{ActivationSpec, Afu, Error, Mode, Network, SharingScope, Tape, Tensor, TensorRef};
use rand::Rng;

/// Argmin of the trained toy AFU on the default seed, frozen after the
/// first verified run.
const GOLDEN_TOY_ARGMIN: f64 = 0.05;
/// `(roughness_relu, roughness_afu)` for the default smoothness config using
/// the trained toy AFU.
const GOLDEN_ROUGHNESS: (f64, f64) = (0.20258149416556587, 315.7903597629926);

fn verdict(criterion: u32, ok: bool, detail: &str) {
    let tag = if ok { "PASS" } else { "FAIL" };
    println!("[{tag}] criterion {criterion}: {detail}");
    assert!(ok, "criterion {criterion} failed: {detail}");
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn shipped_config(file: &str, out_dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::load(&workspace_root().join("configs").join(file))
        .unwrap_or_else(|e| panic!("{file}: {e}"));
    cfg.out_dir = out_dir.to_path_buf();
    cfg
}

fn read_curve(path: &Path) -> Vec<(f64, f64)> {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    text.lines()
        .skip(1)
        .map(|l| {
            let (z, g) = l.split_once(',').unwrap();
            (z.parse().unwrap(), g.parse().unwrap())
        })
        .collect()
}

// ---------------------------------------------------------------- gradients

/// Architecture variant `k` of the oracle suite: the seven fixed activations,
/// then AFUs with N in {1, 8} on ReLU and sigmoid bases.
fn oracle_net(i: usize, rng: &mut afu_core::rng::SeededRng) -> (Network, LossSpec, String) {
    let k = i % 11;
    let (out, loss) = if i.is_multiple_of(2) {
        (1, LossSpec::Hinge)
    } else {
        (3, LossSpec::NegativeLogLikelihood)
    };
    let linear = ActivationChoice::Fixed(ActivationSpec::Linear);
    let (specs, settings, label) = if k < 7 {
        let a = ActivationSpec::ALL[k];
        let hidden = ActivationChoice::Fixed(a);
        (
            vec![
                LayerSpec::new(3, hidden),
                LayerSpec::new(3, hidden),
                LayerSpec::new(out, linear),
            ],
            None,
            a.name().to_string(),
        )
    } else {
        let hidden_units = if k < 9 { 1 } else { 8 };
        let base = if k % 2 == 1 {
            ActivationSpec::Relu
        } else {
            ActivationSpec::Sigmoid
        };
        let scope = if hidden_units == 1 {
            [
                SharingScope::Network,
                SharingScope::PerLayer,
                SharingScope::PerNeuron,
            ][i % 3]
        } else {
            SharingScope::Network
        };
        let s = AfuSettings {
            hidden_units,
            base,
            scope,
        };
        (
            vec![
                LayerSpec::new(3, ActivationChoice::Afu),
                LayerSpec::new(out, linear),
            ],
            Some(s),
            format!("afu_n{hidden_units}_{}", base.name()),
        )
    };
    let mut net = Network::build(2, &specs, settings.as_ref(), rng).unwrap();
    for p in net.parameters_mut() {
        for v in p.data_mut() {
            *v = symmetric_uniform(rng, 1.0);
        }
    }
    (net, loss, label)
}

#[test]
fn criterion_1_gradient_oracle_suite() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut worst_net = String::new();
    let mut covered = std::collections::BTreeSet::new();
    let mut largest = 0;
    for i in 0..100 {
        let mut rng = seeded(10_000 + i as u64);
        let (net, loss, label) = oracle_net(i, &mut rng);
        largest = largest.max(net.param_count());
        covered.insert(label.clone());
        let x = Tensor::matrix(
            5,
            2,
            (0..10).map(|_| symmetric_uniform(&mut rng, 2.0)).collect(),
        )
        .unwrap();
        let labels: Vec<i64> = (0..5)
            .map(|_| match loss {
                LossSpec::Hinge => {
                    if rng.random::<bool>() {
                        1
                    } else {
                        -1
                    }
                }
                LossSpec::NegativeLogLikelihood => rng.random_range(0..3),
            })
            .collect();
        let params: Vec<Tensor> = net.parameters().into_iter().cloned().collect();
        let f = |t: &mut Tape, p: &[TensorRef]| {
            let bound = net.rebind(p)?;
            let xr = t.constant(x.clone())?;
            let outs = net.forward_on_tape(t, &bound, &xr, Mode::Eval, &mut seeded(0))?;
            loss.on_tape(t, outs.last().unwrap(), &labels)
        };
        let err = grad_check(f, &params, 1e-5).unwrap();
        if err > worst {
            worst = err;
            worst_net = format!("net {i} ({label})");
        }
    }
    let elapsed = start.elapsed();
    let ok =
        worst <= 1e-4 && largest <= 50 && covered.len() == 11 && elapsed < Duration::from_secs(30);
    verdict(
        1,
        ok,
        &format!(
            "100 networks, {} variants, <= {largest} params, max rel err {worst:.2e} at {worst_net}, {:.1} s",
            covered.len(),
            elapsed.as_secs_f64()
        ),
    );
}

// ------------------------------------------------------- shared accumulation

fn site_inputs(k: usize) -> (Vec<Tensor>, Vec<f64>) {
    let mut rng = seeded(77 + k as u64);
    let zs = (0..k)
        .map(|_| Tensor::vector((0..6).map(|_| symmetric_uniform(&mut rng, 3.0)).collect()))
        .collect();
    let cs = (0..k).map(|_| symmetric_uniform(&mut rng, 1.0)).collect();
    (zs, cs)
}

fn site_term(
    tape: &mut Tape,
    afu: &Afu,
    z: &Tensor,
    c: f64,
    kappa: &afu_core::autograd::AfuKappa,
) -> TensorRef {
    let zr = tape.constant(z.clone()).unwrap();
    let g = afu.apply(tape, &zr, kappa).unwrap();
    let s = tape.sum(&g).unwrap();
    tape.scale(&s, c).unwrap()
}

fn kappa_refs(k: &afu_core::autograd::AfuKappa) -> [TensorRef; 4] {
    [k.w0.clone(), k.b0.clone(), k.w1.clone(), k.b1.clone()]
}

#[test]
fn criterion_2_shared_parameter_accumulation() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for base in [ActivationSpec::Relu, ActivationSpec::Sigmoid] {
        for n in [1, 8] {
            let mut afu = Afu::with_default_init(n, base, &mut seeded(5)).unwrap();
            let mut rng = seeded(6);
            for v in afu.parameters_mut()[1].data_mut() {
                *v = symmetric_uniform(&mut rng, 0.5);
            }
            for k in [2, 4, 16] {
                let (zs, cs) = site_inputs(k);

                let mut tape = Tape::new();
                let kappa = afu.bind(&mut tape).unwrap();
                let mut total = site_term(&mut tape, &afu, &zs[0], cs[0], &kappa);
                for s in 1..k {
                    let term = site_term(&mut tape, &afu, &zs[s], cs[s], &kappa);
                    total = tape.add(&total, &term).unwrap();
                }
                let shared = tape.backward(&total).unwrap().collect(&kappa_refs(&kappa));

                let mut oracle: Vec<Vec<f64>> = afu
                    .parameters()
                    .iter()
                    .map(|t| vec![0.0; t.len()])
                    .collect();
                for s in 0..k {
                    let mut tape = Tape::new();
                    let copy = afu.bind(&mut tape).unwrap();
                    let term = site_term(&mut tape, &afu, &zs[s], cs[s], &copy);
                    let g = tape.backward(&term).unwrap().collect(&kappa_refs(&copy));
                    for (acc, t) in oracle.iter_mut().zip(&g) {
                        for (a, v) in acc.iter_mut().zip(t.data()) {
                            *a += v;
                        }
                    }
                }
                for (got, want) in shared.iter().zip(&oracle) {
                    for (g, w) in got.data().iter().zip(want) {
                        worst = worst.max((g - w).abs() / w.abs().max(1.0));
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let ok = worst <= 1e-12 && elapsed < Duration::from_secs(5);
    verdict(
        2,
        ok,
        &format!(
            "k in {{2,4,16}}, N in {{1,8}}, relu/sigmoid bases: max rel err {worst:.2e}, {:.3} s",
            elapsed.as_secs_f64()
        ),
    );
}

// ------------------------------------------------------------------- counts

#[test]
fn criterion_3_afu_parameter_count() {
    let mut counts = Vec::new();
    let mut ok = true;
    for n in [1, 8, 128] {
        let afu = Afu::with_default_init(n, ActivationSpec::Relu, &mut seeded(0)).unwrap();
        ok &= afu.param_count() == 3 * n + 1 && afu.flat_parameters().len() == 3 * n + 1;
        counts.push(afu.param_count());
    }
    verdict(
        3,
        ok && counts == [4, 25, 385],
        &format!("N = 1, 8, 128 give {counts:?}"),
    );
}

// ---------------------------------------------------------------------- toy

struct ToyRuns {
    afu: RunReport,
    relu: RunReport,
    afu_dir: tempfile::TempDir,
    elapsed: Duration,
}

fn toy_runs() -> &'static ToyRuns {
    static RUNS: OnceLock<ToyRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let start = Instant::now();
        let afu_dir = tempfile::tempdir().unwrap();
        let relu_dir = tempfile::tempdir().unwrap();
        let afu = run_toy(&shipped_config("toy_afu.toml", afu_dir.path()), |_| {}).unwrap();
        let relu = run_toy(&shipped_config("toy_relu.toml", relu_dir.path()), |_| {}).unwrap();
        ToyRuns {
            afu,
            relu,
            afu_dir,
            elapsed: start.elapsed(),
        }
    })
}

#[test]
fn criterion_4_toy_parity() {
    let runs = toy_runs();
    let a = runs.afu.final_train_accuracy.unwrap();
    let r = runs.relu.final_train_accuracy.unwrap();
    let cfg = &runs.afu.config;
    let setup_ok = cfg.afu.hidden_units == 8
        && cfg.afu.base == ActivationSpec::Relu
        && cfg.batch_size.is_none()
        && cfg.toy.n_per_cluster * 4 == 2000
        && runs.afu.epochs.len() <= 500
        && runs.relu.epochs.len() <= 500;
    let ok = setup_ok
        && a >= 0.95
        && r >= 0.95
        && (a - r).abs() <= 0.02
        && runs.elapsed < Duration::from_secs(60);
    verdict(
        4,
        ok,
        &format!(
            "train accuracy afu {a:.4} ({} epochs), relu {r:.4} ({} epochs), gap {:.2} points, {:.1} s",
            runs.afu.epochs.len(),
            runs.relu.epochs.len(),
            100.0 * (a - r).abs(),
            runs.elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_5_toy_afu_shape() {
    let runs = toy_runs();
    let curve = read_curve(&runs.afu_dir.path().join("toy_s0_afu_after.csv"));
    let (argmin, _) = curve
        .iter()
        .copied()
        .fold((f64::NAN, f64::INFINITY), |best, p| {
            if p.1 < best.1 {
                p
            } else {
                best
            }
        });
    let rising = curve.windows(2).all(|w| w[1].1 >= w[0].1);
    let falling = curve.windows(2).all(|w| w[1].1 <= w[0].1);
    let grid_ok = curve.len() == 201 && curve[0].0 == -5.0 && curve[200].0 == 5.0;
    let ok = grid_ok
        && !rising
        && !falling
        && argmin.abs() < 1.0
        && (argmin - GOLDEN_TOY_ARGMIN).abs() < 1e-12;
    verdict(
        5,
        ok,
        &format!(
            "{} samples on [-5, 5], monotone: {}, argmin z = {argmin} (golden {GOLDEN_TOY_ARGMIN})",
            curve.len(),
            rising || falling
        ),
    );
}

// -------------------------------------------------------------------- mnist

struct MnistRuns {
    relu: RunReport,
    shared: RunReport,
    per_layer: RunReport,
    per_layer_dir: tempfile::TempDir,
    elapsed: Duration,
}

fn mnist_dir() -> PathBuf {
    std::env::var_os("AFU_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| workspace_root().join("data/mnist"))
}

fn mnist_runs() -> &'static Result<MnistRuns, String> {
    static RUNS: OnceLock<Result<MnistRuns, String>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let dir = mnist_dir();
        let (train, test): (Dataset, Dataset) = load_mnist_dir(&dir)
            .map_err(|e| format!("MNIST not available in {}: {e}", dir.display()))?;
        let start = Instant::now();
        let run = |file: &str, out: &Path| {
            run_mnist_on(&shipped_config(file, out), &train, &test, |_| {})
                .map_err(|e| e.to_string())
        };
        let (d1, d2, d3) = (
            tempfile::tempdir().unwrap(),
            tempfile::tempdir().unwrap(),
            tempfile::tempdir().unwrap(),
        );
        Ok(MnistRuns {
            relu: run("mnist_relu.toml", d1.path())?,
            shared: run("mnist_shared.toml", d2.path())?,
            per_layer: run("mnist_per_layer.toml", d3.path())?,
            per_layer_dir: d3,
            elapsed: start.elapsed(),
        })
    })
}

#[test]
fn criterion_6_mnist_parity() {
    let runs = match mnist_runs() {
        Ok(r) => r,
        Err(e) => return verdict(6, false, e),
    };
    let r = runs.relu.final_test_accuracy.unwrap();
    let s = runs.shared.final_test_accuracy.unwrap();
    let cfg = &runs.shared.config;
    let units: Vec<usize> = cfg.network.layers.iter().map(|l| l.units).collect();
    let setup_ok = units == [256, 128, 10]
        && cfg.afu.scope == SharingScope::Network
        && cfg.epochs == 3
        && cfg.mnist.train_subset == 10_000
        && cfg.mnist.test_subset == 2_000;
    let ok = setup_ok
        && r >= 0.93
        && s >= 0.93
        && (r - s).abs() <= 0.02
        && runs.elapsed < Duration::from_secs(600);
    verdict(
        6,
        ok,
        &format!(
            "test accuracy relu {r:.4}, shared afu {s:.4} (need both >= 0.93, gap {:.2} <= 2 points), {:.0} s",
            100.0 * (r - s).abs(),
            runs.elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_7_per_layer_divergence() {
    let runs = match mnist_runs() {
        Ok(r) => r,
        Err(e) => return verdict(7, false, e),
    };
    let dir = runs.per_layer_dir.path();
    let prefix = runs.per_layer.config.file_prefix();
    let afus: Vec<Afu> = (0..3)
        .map(|k| Afu::load(&dir.join(format!("{prefix}afu{k}.toml"))).unwrap())
        .collect();
    let curves: Vec<Vec<u8>> = (0..3)
        .map(|k| std::fs::read(dir.join(format!("{prefix}afu{k}.csv"))).unwrap_or_default())
        .collect();
    let mut diffs = Vec::new();
    for a in 0..3 {
        for b in a + 1..3 {
            let d = afus[a]
                .flat_parameters()
                .iter()
                .zip(afus[b].flat_parameters())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            diffs.push(d);
        }
    }
    let distinct_files = !curves.iter().any(Vec::is_empty)
        && curves[0] != curves[1]
        && curves[0] != curves[2]
        && curves[1] != curves[2];
    let no_extra = !dir.join(format!("{prefix}afu3.csv")).exists();
    let ok = diffs.iter().all(|&d| d > 1e-6) && distinct_files && no_extra;
    verdict(
        7,
        ok,
        &format!("pairwise max kappa differences {diffs:.3?}, three distinct curve files: {distinct_files}"),
    );
}

// ----------------------------------------------------------------- schedule

#[test]
fn criterion_8_schedule_law() {
    let schedule = ExperimentConfig::mnist().schedule;
    let explicit = LrSchedule::new(1.0, 0.7).unwrap();
    let got: Vec<f64> = (0..4).map(|e| schedule.lr(e)).collect();
    let ok = got == [1.0, 0.7, 0.49, 0.343] && (0..4).all(|e| explicit.lr(e) == schedule.lr(e));
    verdict(8, ok, &format!("multipliers for epochs 0..3: {got:?}"));
}

// --------------------------------------------------------------- smoothness

fn hand_built(w: [f64; 2], b: f64, act: ActivationSpec) -> Network {
    let layer = DenseLayer::new(
        Tensor::matrix(1, 2, w.to_vec()).unwrap(),
        Tensor::vector(vec![b]),
        LayerActivation::Fixed(act),
        0.0,
    )
    .unwrap();
    Network::from_parts(2, vec![layer], vec![], None).unwrap()
}

#[test]
fn criterion_9_smoothness_tool() {
    let start = Instant::now();
    let toy = toy_runs();
    let afu_file = toy.afu_dir.path().join("toy_s0_afu.toml");
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let run = |dir: &Path| {
        let mut cfg = shipped_config("smoothness.toml", dir);
        cfg.smoothness.afu_file = Some(afu_file.clone());
        cfg.smoothness.random_afu = false;
        smoothness_analysis(&cfg).unwrap()
    };
    let ra = run(a.path());
    let rb = run(b.path());
    let elapsed = start.elapsed();

    let prefix = ra.config.file_prefix();
    let mut fields_ok = true;
    let mut identical = ra.files == rb.files;
    for f in ["relu_scores.csv", "afu_scores.csv", "afu.toml"] {
        let name = format!("{prefix}{f}");
        let x = std::fs::read(a.path().join(&name)).unwrap_or_default();
        let y = std::fs::read(b.path().join(&name)).unwrap_or_default();
        identical &= !x.is_empty() && x == y;
        if f.ends_with(".csv") {
            fields_ok &= String::from_utf8_lossy(&x).lines().count() == 1 + 201 * 201;
        }
    }
    let pair = (
        ra.metric("roughness_relu").unwrap_or(f64::NAN),
        ra.metric("roughness_afu").unwrap_or(f64::NAN),
    );
    identical &= pair.0 == rb.metric("roughness_relu").unwrap_or(f64::NAN)
        && pair.1 == rb.metric("roughness_afu").unwrap_or(f64::NAN);
    let golden = (pair.0 - GOLDEN_ROUGHNESS.0).abs() <= 1e-9 * GOLDEN_ROUGHNESS.0
        && (pair.1 - GOLDEN_ROUGHNESS.1).abs() <= 1e-9 * GOLDEN_ROUGHNESS.1;

    let grid = GridSpec::square(-3.0, 3.0, 201).unwrap();
    let constant = hand_built([0.0, 0.0], 0.4, ActivationSpec::Relu)
        .score_field(&grid)
        .unwrap()
        .roughness();
    let linear = hand_built([0.7, -1.3], 0.2, ActivationSpec::Linear)
        .score_field(&grid)
        .unwrap()
        .roughness();

    let ok = fields_ok
        && identical
        && golden
        && constant == 0.0
        && linear == 0.0
        && elapsed < Duration::from_secs(60);
    verdict(
        9,
        ok,
        &format!(
            "201x201 fields: {fields_ok}, byte-identical rerun: {identical}, roughness relu {} afu {} \
             (golden match: {golden}), constant {constant}, linear {linear}, {:.1} s",
            pair.0,
            pair.1,
            elapsed.as_secs_f64()
        ),
    );
}

// --------------------------------------------------------------------- data

fn idx_fixture() -> (Vec<u8>, Vec<u8>) {
    let mut images = vec![0, 0, 8, 3, 0, 0, 0, 3, 0, 0, 0, 2, 0, 0, 0, 2];
    images.extend([0, 255, 17, 128, 1, 2, 3, 4, 250, 0, 0, 9]);
    let labels = vec![0, 0, 8, 1, 0, 0, 0, 3, 7, 0, 9];
    (images, labels)
}

#[test]
fn criterion_10_data_layer() {
    let mut balanced = true;
    let seeds: Vec<u64> = (0..32).chain([u64::MAX, 0xDEAD_BEEF, 1 << 40]).collect();
    for &seed in &seeds {
        let ds = gen_xor_toy(&ToyConfig {
            n_per_cluster: 500,
            sigma: 0.5,
            seed,
        })
        .unwrap();
        let pos = ds.samples().iter().filter(|s| s.label == 1).count();
        let neg = ds.samples().iter().filter(|s| s.label == -1).count();
        balanced &= pos == 1000 && neg == 1000;
    }

    let (img_bytes, lbl_bytes) = idx_fixture();
    let images = parse_idx_images(&img_bytes, "fixture-images").unwrap();
    let labels = parse_idx_labels(&lbl_bytes, "fixture-labels").unwrap();
    let round_trip = images.count == 3
        && images.rows == 2
        && images.cols == 2
        && labels == [7, 0, 9]
        && encode_idx_images(&images) == img_bytes
        && encode_idx_labels(&labels) == lbl_bytes;

    let mut bad = img_bytes.clone();
    bad[3] = 1;
    let bad_images = matches!(parse_idx_images(&bad, "bad"), Err(Error::Format { .. }));
    let mut bad = lbl_bytes.clone();
    bad[2] = 9;
    let bad_labels = matches!(parse_idx_labels(&bad, "bad"), Err(Error::Format { .. }));

    let ok = balanced && round_trip && bad_images && bad_labels;
    verdict(
        10,
        ok,
        &format!(
            "toy labels 1000/1000 over {} seeds: {balanced}, IDX round trip: {round_trip}, \
             bad magic rejected: {}",
            seeds.len(),
            bad_images && bad_labels
        ),
    );
}
