use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use log::info;
use serde::{Deserialize, Serialize};
use serde_json::json;
use turbo_core::data::{generate_synthetic, load_pairs, save_pairs, Dataset, Split};
use turbo_core::encoder::TurboModel;
use turbo_core::metrics::{kde_density_2d, normalize_rows, KdeGrid, MetricsReport};
use turbo_core::trainer::{
    evaluate_split, metrics_from, represent, run, run_comparison, ComparisonReport, Method,
    RunReport, TrainConfig,
};

use crate::config::{load_config, RunConfig};
use crate::{CliError, Command, SplitArg};

pub const DATASET_FILE: &str = "dataset.jsonl";
pub const MODEL_FILE: &str = "model.json";
pub const REPORT_FILE: &str = "report.json";
pub const METADATA_FILE: &str = "metadata.json";
pub const COMPARISON_FILE: &str = "comparison.json";
pub const COMPARISON_CSV: &str = "comparison.csv";

/// Best model of the first fold together with the split it was fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub config: TrainConfig,
    pub fold: usize,
    pub samples: usize,
    pub split: Split,
    pub model: TurboModel,
}

#[derive(Debug, Serialize)]
pub struct TrainReport<'a> {
    pub config: serde_json::Value,
    pub run: &'a RunReport,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_metadata(dir: &Path, command: &str, started: Instant) -> Result<(), CliError> {
    let now = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    write_json(
        &dir.join(METADATA_FILE),
        &json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "finished_unix": now,
            "elapsed_seconds": started.elapsed().as_secs_f64(),
        }),
    )
}

/// The configured embedding file, or the synthetic dataset.
pub fn resolve_dataset(cfg: &RunConfig) -> Result<Dataset, CliError> {
    match &cfg.data_path {
        Some(p) => Ok(load_pairs(p)?),
        None => Ok(generate_synthetic(&cfg.data)?),
    }
}

pub fn load_snapshot(model_dir: &Path) -> Result<ModelSnapshot, CliError> {
    let path = model_dir.join(MODEL_FILE);
    if !path.is_file() {
        return Err(CliError::Precondition(format!(
            "no model snapshot found in {}",
            model_dir.display()
        )));
    }
    read_json(&path)
}

fn snapshot_indices(
    snap: &ModelSnapshot,
    ds: &Dataset,
    split: SplitArg,
) -> Result<Vec<usize>, CliError> {
    if ds.len() != snap.samples {
        return Err(CliError::Precondition(format!(
            "model was trained on {} samples but the data file has {}",
            snap.samples,
            ds.len()
        )));
    }
    Ok(match split {
        SplitArg::Train => snap.split.train.clone(),
        SplitArg::Test => snap.split.test.clone(),
    })
}

fn check_compatible(model: &TurboModel, ds: &Dataset) -> Result<(), CliError> {
    let (d1, d2) = (model.audio.config.input_dim, model.text.config.input_dim);
    if (d1, d2, model.classes()) != (ds.d1, ds.d2, ds.classes) {
        return Err(CliError::Precondition(format!(
            "model expects d1={d1}, d2={d2}, C={} but data has d1={}, d2={}, C={}",
            model.classes(),
            ds.d1,
            ds.d2,
            ds.classes
        )));
    }
    Ok(())
}

fn print_json<T: Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("report serializes")
    );
}

/// Trains one method and writes the model snapshot, report and metadata.
pub fn train(cfg: &RunConfig, out: &Path) -> Result<RunReport, CliError> {
    let started = Instant::now();
    ensure_dir(out)?;
    let ds = resolve_dataset(cfg)?;
    let splits = turbo_core::trainer::plan_splits(ds.len(), &cfg.train)?;
    let (report, models) = run(&ds, &cfg.train)?;
    let snapshot = ModelSnapshot {
        config: cfg.train.clone(),
        fold: 0,
        samples: ds.len(),
        split: splits[0].clone(),
        model: models.into_iter().next().expect("at least one fold"),
    };
    write_json(&out.join(MODEL_FILE), &snapshot)?;
    write_json(
        &out.join(REPORT_FILE),
        &TrainReport {
            config: cfg.to_json(),
            run: &report,
        },
    )?;
    write_metadata(out, "train", started)?;
    info!(
        "{}: mean test WA {:.4}, UA {:.4} over {} fold(s)",
        report.method,
        report.mean.wa,
        report.mean.ua,
        report.folds.len()
    );
    Ok(report)
}

pub fn compare(cfg: &RunConfig, out: &Path, seeds: u64) -> Result<ComparisonReport, CliError> {
    let started = Instant::now();
    ensure_dir(out)?;
    let ds = resolve_dataset(cfg)?;
    let seeds: Vec<u64> = (0..seeds).map(|s| cfg.train.seed + s).collect();
    let report = run_comparison(&ds, &cfg.train, &seeds)?;
    write_json(
        &out.join(COMPARISON_FILE),
        &json!({ "config": cfg.to_json(), "comparison": &report }),
    )?;
    write_comparison_csv(&out.join(COMPARISON_CSV), &report)?;
    write_metadata(out, "compare", started)?;
    Ok(report)
}

#[derive(Serialize)]
struct CsvRow {
    method: Method,
    #[serde(rename = "WA")]
    wa: f64,
    #[serde(rename = "UA")]
    ua: f64,
    #[serde(rename = "ACC")]
    acc: f64,
    #[serde(rename = "EER")]
    eer: Option<f64>,
    alignment: f64,
    uniformity_audio: f64,
    uniformity_text: f64,
}

pub fn write_comparison_csv(path: &Path, report: &ComparisonReport) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in &report.rows {
        w.serialize(CsvRow {
            method: r.method,
            wa: r.wa,
            ua: r.ua,
            acc: r.acc,
            eer: r.eer,
            alignment: r.alignment,
            uniformity_audio: r.uniformity_audio,
            uniformity_text: r.uniformity_text,
        })?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn eval(model_dir: &Path, data: &Path) -> Result<MetricsReport, CliError> {
    let snap = load_snapshot(model_dir)?;
    let ds = load_pairs(data)?;
    check_compatible(&snap.model, &ds)?;
    let all: Vec<usize> = (0..ds.len()).collect();
    Ok(evaluate_split(&snap.model, &ds, &all)?)
}

pub fn repr_metrics(
    model_dir: &Path,
    data: &Path,
    split: SplitArg,
) -> Result<MetricsReport, CliError> {
    let snap = load_snapshot(model_dir)?;
    let ds = load_pairs(data)?;
    check_compatible(&snap.model, &ds)?;
    let idx = snapshot_indices(&snap, &ds, split)?;
    let reps = represent(&snap.model, &ds, &idx)?;
    Ok(metrics_from(&reps, &ds.labels(&idx), ds.classes)?)
}

/// Writes `kde_audio.csv` and `kde_text.csv` into the model directory.
pub fn kde_export(
    model_dir: &Path,
    data: &Path,
    grid: usize,
    bandwidth: Option<f64>,
    split: SplitArg,
) -> Result<Vec<PathBuf>, CliError> {
    let snap = load_snapshot(model_dir)?;
    if snap.model.joint_dim() != 2 {
        return Err(CliError::Precondition(format!(
            "kde-export needs a model with joint_dim = 2, this one has {}; retrain with \"joint_dim\": 2",
            snap.model.joint_dim()
        )));
    }
    let ds = load_pairs(data)?;
    check_compatible(&snap.model, &ds)?;
    let idx = snapshot_indices(&snap, &ds, split)?;
    let reps = represent(&snap.model, &ds, &idx)?;
    let mut written = Vec::new();
    for (name, h) in [("audio", &reps.h_a), ("text", &reps.h_t)] {
        let z = normalize_rows(h)?;
        let points: Vec<[f64; 2]> = (0..z.rows()).map(|i| [z.at(i, 0), z.at(i, 1)]).collect();
        let field = kde_density_2d(&points, KdeGrid::new(grid), bandwidth)?;
        let path = model_dir.join(format!("kde_{name}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["x", "y", "density"])?;
        for (x, y, d) in field.rows() {
            w.serialize((x, y, d))?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        info!(
            "{name}: bandwidth {:.5}, wrote {}",
            field.bandwidth,
            path.display()
        );
        written.push(path);
    }
    Ok(written)
}

pub fn run_command(command: &Command) -> Result<(), CliError> {
    match command {
        Command::GenData { config, out } => {
            let cfg = load_config(config)?;
            ensure_dir(out)?;
            let ds = generate_synthetic(&cfg.data)?;
            let path = out.join(DATASET_FILE);
            save_pairs(&ds, &path)?;
            info!("wrote {} samples to {}", ds.len(), path.display());
        }
        Command::Train {
            config,
            out,
            seed,
            method,
        } => {
            let mut cfg = load_config(config)?;
            if let Some(s) = seed {
                cfg.train.seed = *s;
            }
            if let Some(m) = method {
                cfg.train.method = m.parse()?;
            }
            train(&cfg, out)?;
        }
        Command::Eval { model, data } => print_json(&eval(model, data)?),
        Command::Compare { config, out, seeds } => {
            let cfg = load_config(config)?;
            let report = compare(&cfg, out, *seeds)?;
            println!("method     WA      UA      ACC     EER     align   unif_a  unif_t");
            for r in &report.rows {
                let eer = r
                    .eer
                    .map(|e| format!("{e:.4}"))
                    .unwrap_or_else(|| "-".into());
                println!(
                    "{:<10} {:.4}  {:.4}  {:.4}  {:<6}  {:.4}  {:.4}  {:.4}",
                    r.method.as_str(),
                    r.wa,
                    r.ua,
                    r.acc,
                    eer,
                    r.alignment,
                    r.uniformity_audio,
                    r.uniformity_text
                );
            }
        }
        Command::ReprMetrics { model, data, split } => {
            print_json(&repr_metrics(model, data, *split)?)
        }
        Command::KdeExport {
            model,
            data,
            grid,
            bandwidth,
            split,
        } => {
            for p in kde_export(model, data, *grid, *bandwidth, *split)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}
