//! Experiment commands behind the command-line interface.
//!
//! Every training run writes a self-contained directory:
//!
//! | file                  | content                                            |
//! |-----------------------|----------------------------------------------------|
//! | `config.toml`         | resolved configuration of this run                 |
//! | `seed.txt`            | the run seed                                       |
//! | `metrics.json`        | run report: metrics, epochs, parameter count       |
//! | `metrics.csv`         | per-variable metrics                               |
//! | `training_curve.csv`  | epoch, train loss, validation loss, learning rate  |
//! | `predictions.csv`     | test-set actual and predicted values               |
//! | `model.ckpt`          | restored best-validation weights                   |
//! | `timing.json`         | wall-clock training time                           |
//!
//! Wall-clock time lives in its own file so `metrics.json` and `model.ckpt`
//! are bit-identical across repeated runs with the same seed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;

use crate::checkpoint::TensorArchive;
use crate::config::{ExperimentConfig, Phase};
use crate::data::{ingest_csv, prepare, PreprocessSummary, WindowedDataset};
use crate::literature::{self, LiteratureValue};
use crate::metrics::{evaluate, MetricsReport};
use crate::model::{Model, NeuronKind};
use crate::neuron::qlif_update;
use crate::qsim::{measure_p1, qlif_circuit, sample_shots};
use crate::tensor::Matrix;
use crate::train::{train, TrainOutcome};
use crate::{Error, Result};

pub const DATASET_CACHE: &str = "dataset.qlds";
pub const THREADS_ENV: &str = "RUN_THREADS";

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub phase: Phase,
    pub neuron_kind: NeuronKind,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub param_count: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub metrics: MetricsReport,
    pub literature: Vec<LiteratureValue>,
}

#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub report: RunReport,
    pub train_seconds: f64,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Loads the windowed dataset from the cache when configured, otherwise
/// preprocesses the raw CSV.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<WindowedDataset> {
    if let Some(cache) = &cfg.dataset.cache {
        if cfg.device_scale != 1.0 {
            log::warn!("device_scale is ignored when loading a dataset cache");
        }
        return WindowedDataset::load(cache);
    }
    Ok(preprocess(cfg)?.0)
}

fn preprocess(cfg: &ExperimentConfig) -> Result<(WindowedDataset, PreprocessSummary)> {
    let csv = cfg
        .dataset
        .csv
        .as_deref()
        .ok_or_else(|| Error::Config("dataset.csv is not set".into()))?;
    let schema = cfg.schema()?;
    let series = ingest_csv(csv, &schema)?;
    let prepared = prepare(&series, &schema, cfg.device_scale)?;
    log::info!(
        "{}: {} train / {} test windows",
        schema.name,
        prepared.summary.n_train,
        prepared.summary.n_test
    );
    Ok((prepared.dataset, prepared.summary))
}

/// Writes the dataset cache and a JSON summary into `out_dir`.
pub fn cmd_preprocess(cfg: &ExperimentConfig) -> Result<PreprocessSummary> {
    let (dataset, summary) = preprocess(cfg)?;
    create_dir(&cfg.out_dir)?;
    dataset.save(&cfg.out_dir.join(DATASET_CACHE))?;
    write(
        &cfg.out_dir.join("preprocess_summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(summary)
}

fn curve_csv(outcome: &TrainOutcome) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,lr\n");
    for r in &outcome.records {
        let _ = writeln!(out, "{},{},{},{}", r.epoch, r.train_loss, r.val_loss, r.lr);
    }
    out
}

fn predictions_csv(names: &[String], actual: &Matrix, pred: &Matrix) -> String {
    let mut out = String::from("timestep");
    for n in names {
        let _ = write!(out, ",actual_{n},predicted_{n}");
    }
    out.push('\n');
    for (i, (a, p)) in actual.rows().into_iter().zip(pred.rows()).enumerate() {
        let _ = write!(out, "{i}");
        for (av, pv) in a.iter().zip(p.iter()) {
            let _ = write!(out, ",{av},{pv}");
        }
        out.push('\n');
    }
    out
}

/// Predicts the test windows and returns `(metrics, predictions CSV)` in
/// original units.
pub fn evaluate_model(model: &Model, dataset: &WindowedDataset) -> Result<(MetricsReport, String)> {
    let (x_test, y_test) = dataset.test();
    let pred = model.predict(&x_test)?;
    let metrics = evaluate(&pred, &y_test, &dataset.target_scaler)?;
    let csv = predictions_csv(
        &dataset.target_scaler.names,
        &dataset.target_scaler.inverse(&y_test)?,
        &dataset.target_scaler.inverse(&pred)?,
    );
    Ok((metrics, csv))
}

/// Metrics of always predicting the training-target mean.
pub fn mean_predictor(dataset: &WindowedDataset) -> Result<MetricsReport> {
    let (_, y_test) = dataset.test();
    evaluate(&Matrix::zeros(y_test.raw_dim()), &y_test, &dataset.target_scaler)
}

/// Trains one model and writes its run directory.
pub fn train_run(
    cfg: &ExperimentConfig,
    dataset: &WindowedDataset,
    kind: NeuronKind,
    seed: u64,
    dir: &Path,
) -> Result<RunArtifacts> {
    let spec = cfg
        .model_spec(dataset.n_features(), dataset.n_targets(), dataset.window)
        .with_kind(kind);
    let mut model = Model::build(&spec, seed)?;
    let (x_train, y_train) = dataset.train();
    let start = Instant::now();
    let outcome = train(&mut model, &x_train, &y_train, &cfg.training, seed)?;
    let train_seconds = start.elapsed().as_secs_f64();
    let (metrics, predictions) = evaluate_model(&model, dataset)?;

    let report = RunReport {
        phase: cfg.phase,
        neuron_kind: kind,
        seed,
        n_train: dataset.n_train,
        n_test: dataset.n_test(),
        param_count: model.param_count(),
        epochs_run: outcome.records.len(),
        best_epoch: outcome.best_epoch,
        stopped_early: outcome.stopped_early,
        metrics,
        literature: literature::ALL.to_vec(),
    };
    let mut snapshot = cfg.clone();
    snapshot.seeds = vec![seed];
    snapshot.model.neuron_kind = kind;

    create_dir(dir)?;
    write(&dir.join("config.toml"), snapshot.to_toml()?)?;
    write(&dir.join("seed.txt"), format!("{seed}\n"))?;
    write(&dir.join("metrics.json"), serde_json::to_string_pretty(&report)?)?;
    write(&dir.join("metrics.csv"), report.metrics.to_csv())?;
    write(&dir.join("training_curve.csv"), curve_csv(&outcome))?;
    write(&dir.join("predictions.csv"), predictions)?;
    model.to_archive()?.save(&dir.join("model.ckpt"))?;
    write(
        &dir.join("timing.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "train_seconds": train_seconds,
            "epochs_run": report.epochs_run,
        }))?,
    )?;
    log::info!(
        "{kind} seed {seed}: test MSE {:.4}, {} epochs, {train_seconds:.1} s",
        report.metrics.aggregate.mse,
        report.epochs_run
    );
    Ok(RunArtifacts {
        dir: dir.to_path_buf(),
        report,
        train_seconds,
    })
}

pub fn run_dir(out_dir: &Path, kind: NeuronKind, seed: u64) -> PathBuf {
    out_dir.join(format!("{kind}_seed{seed}"))
}

/// Single-model training with the first configured seed.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    let dataset = load_dataset(cfg)?;
    let seed = cfg.seeds[0];
    let kind = cfg.model.neuron_kind;
    train_run(cfg, &dataset, kind, seed, &run_dir(&cfg.out_dir, kind, seed))
}

/// Evaluates a saved checkpoint on the test split; defaults to the checkpoint
/// `cmd_train` writes for the same config.
pub fn cmd_evaluate(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<MetricsReport> {
    let default_ckpt = run_dir(&cfg.out_dir, cfg.model.neuron_kind, cfg.seeds[0]).join("model.ckpt");
    let path = checkpoint.unwrap_or(&default_ckpt);
    let model = Model::from_archive(&TensorArchive::load(path)?)?;
    let dataset = load_dataset(cfg)?;
    let spec = model.spec();
    if spec.n_features != dataset.n_features() || spec.n_targets != dataset.n_targets() || spec.window != dataset.window
    {
        return Err(Error::Shape(format!(
            "checkpoint expects {} features, {} targets, window {}; dataset has {}, {}, {}",
            spec.n_features,
            spec.n_targets,
            spec.window,
            dataset.n_features(),
            dataset.n_targets(),
            dataset.window
        )));
    }
    let (metrics, predictions) = evaluate_model(&model, &dataset)?;
    let dir = cfg.out_dir.join("evaluation");
    create_dir(&dir)?;
    write(&dir.join("metrics.json"), metrics.to_json()?)?;
    write(&dir.join("metrics.csv"), metrics.to_csv())?;
    write(&dir.join("predictions.csv"), predictions)?;
    Ok(metrics)
}

/// Worker count for `cmd_compare`: `RUN_THREADS` if set, else the number of
/// available cores.
pub fn worker_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

#[derive(Clone, Debug, Serialize)]
pub struct PairedResult {
    pub seed: u64,
    pub qlif_mse: f64,
    pub lif_mse: f64,
    pub qlif_mae: f64,
    pub lif_mae: f64,
    pub qlif_train_seconds: f64,
    pub lif_train_seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonSummary {
    pub seeds: Vec<u64>,
    pub param_count: usize,
    pub median_mse_qlif: f64,
    pub median_mse_lif: f64,
    /// `(qlif - lif) / lif` of the median MSE, in percent.
    pub mse_change_pct: f64,
    pub baseline_mse: f64,
    pub qlif_beats_baseline: usize,
    pub lif_beats_baseline: usize,
    pub pairs: Vec<PairedResult>,
}

#[derive(Clone, Debug)]
pub struct ComparisonReport {
    pub summary: ComparisonSummary,
    pub baseline: MetricsReport,
    pub runs: Vec<(RunArtifacts, RunArtifacts)>,
    pub dir: PathBuf,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn pct_change(new: f64, reference: f64) -> f64 {
    (new - reference) / reference * 100.0
}

/// Checks that QLIF and LIF builds agree in every tensor shape and count
/// outside the spiking layer.
pub fn check_structural_identity(qlif: &Model, lif: &Model) -> Result<()> {
    let outside = |m: &Model| -> Vec<(String, Vec<usize>)> {
        m.structure().into_iter().filter(|(n, _)| !n.starts_with("l2.")).collect()
    };
    if outside(qlif) != outside(lif) {
        return Err(Error::Shape("QLIF and LIF models differ outside the spiking layer".into()));
    }
    if qlif.param_count() != lif.param_count() {
        return Err(Error::Shape(format!(
            "parameter counts differ: QLIF {}, LIF {}",
            qlif.param_count(),
            lif.param_count()
        )));
    }
    Ok(())
}

/// Trains QLIF and LIF for every seed on the same data and writes the paired
/// comparison.
pub fn cmd_compare(cfg: &ExperimentConfig) -> Result<ComparisonReport> {
    let dataset = load_dataset(cfg)?;
    let spec = cfg.model_spec(dataset.n_features(), dataset.n_targets(), dataset.window);
    let qlif = Model::build(&spec.with_kind(NeuronKind::Qlif), cfg.seeds[0])?;
    let lif = Model::build(&spec.with_kind(NeuronKind::Lif), cfg.seeds[0])?;
    check_structural_identity(&qlif, &lif)?;
    let param_count = qlif.param_count();

    let dir = cfg.out_dir.join("compare");
    create_dir(&dir)?;
    let jobs: Vec<(u64, NeuronKind)> = cfg
        .seeds
        .iter()
        .flat_map(|&s| [(s, NeuronKind::Qlif), (s, NeuronKind::Lif)])
        .collect();
    let results: Vec<Mutex<Option<Result<RunArtifacts>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let threads = worker_threads().min(jobs.len());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(seed, kind)) = jobs.get(i) else { break };
                let r = train_run(cfg, &dataset, kind, seed, &run_dir(&dir, kind, seed));
                *results[i].lock().expect("result slot") = Some(r);
            });
        }
    });
    let mut finished = Vec::with_capacity(jobs.len());
    for slot in results {
        finished.push(slot.into_inner().expect("result slot").expect("every job ran")?);
    }

    let baseline = mean_predictor(&dataset)?;
    let mut runs = Vec::new();
    let mut pairs = Vec::new();
    let mut it = finished.into_iter();
    while let (Some(q), Some(l)) = (it.next(), it.next()) {
        let (qm, lm) = (&q.report.metrics.aggregate, &l.report.metrics.aggregate);
        pairs.push(PairedResult {
            seed: q.report.seed,
            qlif_mse: qm.mse,
            lif_mse: lm.mse,
            qlif_mae: qm.mae,
            lif_mae: lm.mae,
            qlif_train_seconds: q.train_seconds,
            lif_train_seconds: l.train_seconds,
        });
        runs.push((q, l));
    }
    let median_mse_qlif = median(&mut pairs.iter().map(|p| p.qlif_mse).collect::<Vec<_>>());
    let median_mse_lif = median(&mut pairs.iter().map(|p| p.lif_mse).collect::<Vec<_>>());
    let baseline_mse = baseline.aggregate.mse;
    let summary = ComparisonSummary {
        seeds: cfg.seeds.clone(),
        param_count,
        median_mse_qlif,
        median_mse_lif,
        mse_change_pct: pct_change(median_mse_qlif, median_mse_lif),
        baseline_mse,
        qlif_beats_baseline: pairs.iter().filter(|p| p.qlif_mse < baseline_mse).count(),
        lif_beats_baseline: pairs.iter().filter(|p| p.lif_mse < baseline_mse).count(),
        pairs,
    };

    write(&dir.join("comparison.json"), serde_json::to_string_pretty(&summary)?)?;
    write(&dir.join("comparison.csv"), comparison_csv(&runs))?;
    write(&dir.join("per_variable_deltas.csv"), deltas_csv(&runs))?;
    write(&dir.join("baseline_metrics.json"), baseline.to_json()?)?;
    Ok(ComparisonReport {
        summary,
        baseline,
        runs,
        dir,
    })
}

fn comparison_csv(runs: &[(RunArtifacts, RunArtifacts)]) -> String {
    let mut out = String::from("seed,model,mse,mae,rmse,r2_mean,r2_pooled,epochs,best_epoch,train_seconds,params\n");
    for run in runs.iter().flat_map(|(q, l)| [q, l]) {
        let r = &run.report;
        let a = &r.metrics.aggregate;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{:.3},{}",
            r.seed,
            r.neuron_kind,
            a.mse,
            a.mae,
            a.rmse,
            a.r2_mean.map(|v| v.to_string()).unwrap_or_default(),
            a.r2_pooled.map(|v| v.to_string()).unwrap_or_default(),
            r.epochs_run,
            r.best_epoch,
            run.train_seconds,
            r.param_count
        );
    }
    out
}

fn deltas_csv(runs: &[(RunArtifacts, RunArtifacts)]) -> String {
    let mut out = String::from("seed,variable,qlif_mae,lif_mae,mae_change_pct,qlif_mse,lif_mse,mse_change_pct\n");
    for (q, l) in runs {
        for (qv, lv) in q.report.metrics.per_variable.iter().zip(&l.report.metrics.per_variable) {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.4},{},{},{:.4}",
                q.report.seed,
                qv.name,
                qv.mae,
                lv.mae,
                pct_change(qv.mae, lv.mae),
                qv.mse,
                lv.mse,
                pct_change(qv.mse, lv.mse)
            );
        }
    }
    out
}

/// Reference measurements of the single-qubit circuit on hardware, quoted for
/// comparison only.
pub const QPU_REFERENCE: [(&str, f64, f64, f64); 3] =
    [("low", 0.5, 0.3, 0.1590), ("medium", 1.2, 0.8, 0.6850), ("high", 2.0, 1.5, 0.9620)];

pub const VERIFY_SHOTS: u64 = 1_000;
pub const VERIFY_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, Serialize)]
pub struct CircuitCheck {
    pub case: String,
    pub phi: f64,
    pub theta: f64,
    pub analytic: f64,
    pub state_vector: f64,
    pub sampled: f64,
    pub qpu_reference: f64,
}

impl CircuitCheck {
    pub fn exact_deviation(&self) -> f64 {
        (self.analytic - self.state_vector).abs()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct QsimReport {
    pub shots: u64,
    pub seed: u64,
    pub rows: Vec<CircuitCheck>,
}

impl QsimReport {
    pub fn max_exact_deviation(&self) -> f64 {
        self.rows.iter().map(CircuitCheck::exact_deviation).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_exact_deviation() <= VERIFY_TOLERANCE
    }

    fn mean(&self, f: impl Fn(&CircuitCheck) -> f64) -> f64 {
        self.rows.iter().map(f).sum::<f64>() / self.rows.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "case,phi,theta,analytic,state_vector,sampled,qpu_reference,dev_exact,dev_sampled,dev_qpu\n",
        );
        let mut row = |case: &str, phi: String, theta: String, a: f64, sv: f64, s: f64, q: f64| {
            let _ = writeln!(
                out,
                "{case},{phi},{theta},{a:.6},{sv:.6},{s:.4},{q:.4},{:.3e},{:.4},{:.4}",
                (a - sv).abs(),
                (s - a).abs(),
                (q - a).abs()
            );
        };
        for r in &self.rows {
            row(&r.case, r.phi.to_string(), r.theta.to_string(), r.analytic, r.state_vector, r.sampled, r.qpu_reference);
        }
        row(
            "average",
            String::new(),
            String::new(),
            self.mean(|r| r.analytic),
            self.mean(|r| r.state_vector),
            self.mean(|r| r.sampled),
            self.mean(|r| r.qpu_reference),
        );
        out
    }
}

/// Runs the three reference circuits analytically, by state vector and by
/// seeded shot sampling.
pub fn cmd_qsim_verify(shots: u64, seed: u64) -> Result<QsimReport> {
    let mut rows = Vec::with_capacity(QPU_REFERENCE.len());
    for (i, &(case, phi, theta, qpu)) in QPU_REFERENCE.iter().enumerate() {
        let state = qlif_circuit(phi, theta);
        let sampled = sample_shots(&state, shots, seed.wrapping_add(i as u64))?;
        rows.push(CircuitCheck {
            case: case.to_string(),
            phi,
            theta,
            analytic: qlif_update(phi, theta),
            state_vector: measure_p1(&state),
            sampled: sampled.p1_hat,
            qpu_reference: qpu,
        });
    }
    Ok(QsimReport { shots, seed, rows })
}
