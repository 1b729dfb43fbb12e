//! End-to-end stages. Each stage reads its inputs from and writes its outputs
//! to the run's output directory, so stages can be rerun individually.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::classical::{fit_gbm, GbmModel};
use crate::config::{ClassicalFeatures, DataSource, ExperimentConfig};
use crate::dataset::{self, CountyWeekRecord, FeatureMatrix};
use crate::error::{Error, Result};
use crate::eval::{self, EvalReport};
use crate::preprocess::PreprocessModel;
use crate::qmodel::{self, QsmCheckpoint};
use crate::synth;

pub const COUNTY_WEEK_FILE: &str = "county_week.csv";
pub const PREPROCESS_FILE: &str = "preprocess_model.json";
pub const GBM_FILE: &str = "gbm_model.json";
pub const QSM_FILE: &str = "qsm_model.json";
pub const GBM_TRACE_FILE: &str = "gbm_trace.csv";
pub const QSM_TRACE_FILE: &str = "qsm_trace.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const REPORT_FILE: &str = "report.csv";
pub const REPORT_TEXT_FILE: &str = "report.txt";
pub const CONFIG_FILE: &str = "resolved_config.txt";
pub const MANIFEST_FILE: &str = "run_manifest.txt";
/// Manifest lines starting with this prefix vary between otherwise identical runs.
pub const MANIFEST_TIMESTAMP_KEY: &str = "timestamp";

pub const MODEL_NAMES: [&str; 2] = ["gbm", "qsm"];

/// ISO weeks treated as summer by [`regions_in_summer_tmax_band`].
pub const SUMMER_WEEKS: std::ops::RangeInclusive<u32> = 23..=35;

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn file_sha256(path: &Path) -> Result<String> {
    std::fs::read(path).map(|b| sha256_hex(&b)).map_err(|e| Error::io(path, e))
}

fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e))?;
    eval::write_text(path, &text)
}

fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}

/// Mean `t_max` over [`SUMMER_WEEKS`] per region.
pub fn summer_mean_tmax(records: &[CountyWeekRecord]) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| SUMMER_WEEKS.contains(&r.week)) {
        acc.entry(r.region_id.as_str()).or_default().push(r.t_max);
    }
    acc.into_iter()
        .map(|(region, mut v)| {
            v.sort_by(f64::total_cmp);
            (region.to_string(), v.iter().sum::<f64>() / v.len() as f64)
        })
        .collect()
}

/// Regions whose mean summer `t_max` lies in `[lo, hi]`.
///
/// A transparent stand-in for choosing "climatically comparable" training
/// regions; it does not claim to be any particular published criterion.
pub fn regions_in_summer_tmax_band(records: &[CountyWeekRecord], band: (f64, f64)) -> BTreeSet<String> {
    summer_mean_tmax(records)
        .into_iter()
        .filter(|(_, t)| band.0 <= *t && *t <= band.1)
        .map(|(r, _)| r)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSummary {
    pub path: PathBuf,
    pub rows: usize,
    /// Fraction of labelled rows with a zero target.
    pub zero_fraction: f64,
}

fn join_targets(records: &mut [CountyWeekRecord], path: &Path) -> Result<()> {
    #[derive(serde::Deserialize)]
    struct Target {
        county_id: String,
        year: i32,
        week: u32,
        target: u64,
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::format(path, e))?;
    let headers = reader.headers().map_err(|e| Error::format(path, e))?.clone();
    let expected = ["county_id", "year", "week", "target"];
    if headers.iter().ne(expected) {
        return Err(Error::format(path, format!("expected header `{}`", expected.join(","))));
    }
    let mut targets = BTreeMap::new();
    for row in reader.deserialize::<Target>() {
        let t = row.map_err(|e| Error::format(path, e))?;
        if targets.insert((t.county_id.clone(), t.year, t.week), t.target).is_some() {
            return Err(Error::InvalidRecord(format!("duplicate target for {} {}-W{}", t.county_id, t.year, t.week)));
        }
    }
    for r in records {
        r.target = targets.get(&(r.county_id.clone(), r.year, r.week)).copied();
    }
    Ok(())
}

/// Builds the county-week panel and writes `county_week.csv`.
pub fn run_synth(cfg: &ExperimentConfig, out_dir: &Path) -> Result<SynthSummary> {
    ensure_dir(out_dir)?;
    let records = match &cfg.data {
        DataSource::Synthetic => synth::generate_dataset(&cfg.synth)?,
        DataSource::Raw { daily_climate, demographics, targets } => {
            let daily = dataset::read_daily_climate(daily_climate)?;
            let demo = dataset::read_demographics(demographics)?;
            let mut records = dataset::build_county_weeks(&daily, &demo, &cfg.synth.features)?;
            if let Some(path) = targets {
                join_targets(&mut records, path)?;
            }
            records
        }
        DataSource::CountyWeek(path) => dataset::read_county_weeks(path)?,
    };
    let path = out_dir.join(COUNTY_WEEK_FILE);
    dataset::write_county_weeks(&path, &records)?;
    let labelled: Vec<u64> = records.iter().filter_map(|r| r.target).collect();
    let zeros = labelled.iter().filter(|&&t| t == 0).count();
    let zero_fraction = if labelled.is_empty() { f64::NAN } else { zeros as f64 / labelled.len() as f64 };
    Ok(SynthSummary { path, rows: records.len(), zero_fraction })
}

/// Rows of the given regions, in file order.
fn select_regions(records: &[CountyWeekRecord], regions: &BTreeSet<String>) -> Vec<CountyWeekRecord> {
    records.iter().filter(|r| regions.contains(&r.region_id)).cloned().collect()
}

fn training_regions(cfg: &ExperimentConfig, records: &[CountyWeekRecord]) -> BTreeSet<String> {
    let mut regions: BTreeSet<String> = cfg.split.train_regions.iter().cloned().collect();
    if let Some(band) = cfg.split.summer_tmax_band {
        let in_band = regions_in_summer_tmax_band(records, band);
        regions.retain(|r| in_band.contains(r));
    }
    regions
}

fn targets_of(records: &[CountyWeekRecord]) -> Result<Vec<f64>> {
    records
        .iter()
        .map(|r| {
            r.target.map(|t| t as f64).ok_or_else(|| {
                Error::InvalidRecord(format!("row {} {}-W{:02} has no target", r.county_id, r.year, r.week))
            })
        })
        .collect()
}

/// The two model inputs derived from one feature matrix.
struct ModelInputs {
    classical: Vec<Vec<f64>>,
    quantum: Vec<Vec<f64>>,
}

fn model_inputs(
    cfg: &ExperimentConfig,
    pre: &PreprocessModel,
    x: &FeatureMatrix,
    n_qubits: usize,
) -> Result<ModelInputs> {
    let filtered = pre.filtered(x)?;
    let compressed = pre.pca.transform(&filtered)?;
    let quantum = compressed.rows.iter().map(|r| r[..n_qubits].to_vec()).collect();
    let classical = match cfg.preprocess.classical_features {
        ClassicalFeatures::Filtered => filtered.rows,
        ClassicalFeatures::Pca => compressed.rows,
    };
    Ok(ModelInputs { classical, quantum })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub train_rows: usize,
    pub train_regions: Vec<String>,
    pub kept_features: Vec<String>,
    pub pca_components: usize,
    pub retained_variance_ratio: f64,
    pub n_qubits: usize,
    /// Training MSE before the first round and after each round.
    pub gbm_trace: Vec<f64>,
    /// Training MSE before the first epoch and after each epoch.
    pub qsm_trace: Vec<f64>,
    pub gbm_train_mae: f64,
    pub mean_predictor_mae: f64,
    pub qsm_duration: Duration,
}

fn write_trace(path: &Path, index_name: &str, trace: &[f64]) -> Result<()> {
    let mut s = format!("{index_name},train_mse\n");
    for (i, v) in trace.iter().enumerate() {
        writeln!(s, "{i},{v}").unwrap();
    }
    eval::write_text(path, &s)
}

fn read_panel(out_dir: &Path) -> Result<Vec<CountyWeekRecord>> {
    dataset::read_county_weeks(&out_dir.join(COUNTY_WEEK_FILE))
}

/// Fits preprocessing on training-region rows only, then both models on the
/// same processed rows.
pub fn run_train(cfg: &ExperimentConfig, out_dir: &Path) -> Result<TrainSummary> {
    let records = read_panel(out_dir)?;
    let regions = training_regions(cfg, &records);
    let train = select_regions(&records, &regions);
    if train.is_empty() {
        return Err(Error::Empty(format!("training split (regions {:?})", cfg.split.train_regions)));
    }
    let y = targets_of(&train)?;
    let x = FeatureMatrix::from_records(&train)?;
    let pre = PreprocessModel::fit(&x, cfg.preprocess.correlation_threshold, cfg.preprocess.variance_target)?;
    let qsm_cfg = cfg.qsm.resolve(pre.pca.k())?;
    let inputs = model_inputs(cfg, &pre, &x, qsm_cfg.n_qubits)?;

    let gbm = fit_gbm(&inputs.classical, &y, &cfg.gbm)?;
    let started = Instant::now();
    let qsm = qmodel::train(&qsm_cfg, &cfg.train, &inputs.quantum, &y)?;
    let qsm_duration = started.elapsed();

    pre.save(&out_dir.join(PREPROCESS_FILE))?;
    save_json(&out_dir.join(GBM_FILE), &gbm.model)?;
    save_json(&out_dir.join(QSM_FILE), &QsmCheckpoint { config: qsm_cfg, params: qsm.params.clone() })?;
    write_trace(&out_dir.join(GBM_TRACE_FILE), "round", &gbm.mse_trace)?;
    write_trace(&out_dir.join(QSM_TRACE_FILE), "epoch", &qsm.loss_trace)?;

    let mean = y.iter().sum::<f64>() / y.len() as f64;
    Ok(TrainSummary {
        train_rows: train.len(),
        train_regions: regions.into_iter().collect(),
        kept_features: pre.filter.kept_names(),
        pca_components: pre.pca.k(),
        retained_variance_ratio: pre.pca.retained_variance_ratio,
        n_qubits: qsm_cfg.n_qubits,
        gbm_trace: gbm.mse_trace,
        qsm_trace: qsm.loss_trace,
        gbm_train_mae: eval::mae(&y, &gbm.model.predict(&inputs.classical)?)?,
        mean_predictor_mae: eval::mae(&y, &vec![mean; y.len()])?,
        qsm_duration,
    })
}

/// One test-region row with both predictions.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Prediction {
    pub county_id: String,
    pub region_id: String,
    pub year: i32,
    pub week: u32,
    pub target: Option<u64>,
    pub gbm: f64,
    pub qsm: f64,
}

pub fn load_models(out_dir: &Path) -> Result<(PreprocessModel, GbmModel, QsmCheckpoint)> {
    let pre = PreprocessModel::load(&out_dir.join(PREPROCESS_FILE))?;
    let gbm: GbmModel = load_json(&out_dir.join(GBM_FILE))?;
    let qsm: QsmCheckpoint = load_json(&out_dir.join(QSM_FILE))?;
    qsm.config.validate()?;
    qsm.params.check(&qsm.config)?;
    Ok((pre, gbm, qsm))
}

/// Applies the frozen preprocessing and both checkpoints to test-region rows
/// and writes `predictions.csv`.
pub fn run_predict(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<Prediction>> {
    let records = read_panel(out_dir)?;
    let regions: BTreeSet<String> = cfg.split.test_regions.iter().cloned().collect();
    let test = select_regions(&records, &regions);
    if test.is_empty() {
        return Err(Error::Empty(format!("test split (regions {:?})", cfg.split.test_regions)));
    }
    let (pre, gbm, qsm) = load_models(out_dir)?;
    let x = FeatureMatrix::from_records(&test)?;
    let inputs = model_inputs(cfg, &pre, &x, qsm.config.n_qubits)?;
    let gbm_pred = gbm.predict(&inputs.classical)?;
    let qsm_pred = qmodel::predict(&qsm.config, &qsm.params, &inputs.quantum)?;
    let predictions: Vec<Prediction> = test
        .iter()
        .zip(gbm_pred.into_iter().zip(qsm_pred))
        .map(|(r, (g, q))| Prediction {
            county_id: r.county_id.clone(),
            region_id: r.region_id.clone(),
            year: r.year,
            week: r.week,
            target: r.target,
            gbm: g,
            qsm: q,
        })
        .collect();
    let path = out_dir.join(PREDICTIONS_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::format(&path, e))?;
    for p in &predictions {
        w.serialize(p).map_err(|e| Error::format(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(predictions)
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::format(path, e))?;
    reader.deserialize().map(|r| r.map_err(|e| Error::format(path, e))).collect()
}

/// Scores `predictions.csv` against the observed targets and writes
/// `report.csv` plus the per-model residual, tolerance and histogram files.
pub fn run_evaluate(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<EvalReport>> {
    let predictions = read_predictions(&out_dir.join(PREDICTIONS_FILE))?;
    let y: Vec<f64> = predictions
        .iter()
        .map(|p| {
            p.target.map(|t| t as f64).ok_or_else(|| {
                Error::InvalidRecord(format!("test row {} {}-W{:02} has no target", p.county_id, p.year, p.week))
            })
        })
        .collect::<Result<_>>()?;
    let gbm: Vec<f64> = predictions.iter().map(|p| p.gbm).collect();
    let qsm: Vec<f64> = predictions.iter().map(|p| p.qsm).collect();
    let reports = vec![
        EvalReport::compute(MODEL_NAMES[0], &y, &gbm, &cfg.taus)?,
        EvalReport::compute(MODEL_NAMES[1], &y, &qsm, &cfg.taus)?,
    ];
    for r in &reports {
        r.write_files(out_dir)?;
    }
    eval::write_report(&out_dir.join(REPORT_FILE), &reports)?;
    Ok(reports)
}

/// Renders `report.csv` as a table and writes it to `report.txt`.
pub fn run_report(out_dir: &Path) -> Result<String> {
    let rows = eval::read_report(&out_dir.join(REPORT_FILE))?;
    let mut s = format!("{:<6} {:>10} {:>10} {:>7}\n", "model", "mae", "r2", "rows");
    for r in &rows {
        writeln!(s, "{:<6} {:>10.4} {:>10.4} {:>7}", r.model, r.mae, r.r2, r.n_rows).unwrap();
    }
    if let [a, b] = rows.as_slice() {
        let (better, worse) = if a.mae < b.mae { (a, b) } else { (b, a) };
        writeln!(s, "lower test MAE: {} ({:.4} vs {:.4})", better.model, better.mae, worse.mae).unwrap();
    }
    eval::write_text(&out_dir.join(REPORT_TEXT_FILE), &s)?;
    Ok(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub synth: SynthSummary,
    pub train: TrainSummary,
    pub reports: Vec<EvalReport>,
    pub report_text: String,
}

/// All stages in sequence, plus `resolved_config.txt` and `run_manifest.txt`.
///
/// The fitted preprocessing is hashed after training and again after
/// evaluation; a difference aborts the run.
pub fn run_all(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    ensure_dir(out_dir)?;
    eval::write_text(&out_dir.join(CONFIG_FILE), &cfg.to_text())?;
    let synth = run_synth(cfg, out_dir)?;
    let train = run_train(cfg, out_dir)?;
    let pre_path = out_dir.join(PREPROCESS_FILE);
    let fitted_hash = file_sha256(&pre_path)?;
    run_predict(cfg, out_dir)?;
    let reports = run_evaluate(cfg, out_dir)?;
    let report_text = run_report(out_dir)?;
    let after = file_sha256(&pre_path)?;
    if after != fitted_hash {
        return Err(Error::Numerical("fitted preprocessing changed during evaluation".into()));
    }
    write_manifest(cfg, out_dir, &fitted_hash)?;
    Ok(RunSummary { synth, train, reports, report_text })
}

pub fn write_manifest(cfg: &ExperimentConfig, out_dir: &Path, preprocess_sha256: &str) -> Result<()> {
    let timestamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut s = String::new();
    writeln!(s, "version = heatbench {}", env!("CARGO_PKG_VERSION")).unwrap();
    writeln!(s, "seed = {}", cfg.seed).unwrap();
    writeln!(s, "config_sha256 = {}", cfg.hash()).unwrap();
    writeln!(s, "preprocess_sha256 = {preprocess_sha256}").unwrap();
    writeln!(s, "rng = ChaCha20 (rand_chacha 0.9.0)").unwrap();
    writeln!(s, "{MANIFEST_TIMESTAMP_KEY} = {timestamp}").unwrap();
    eval::write_text(&out_dir.join(MANIFEST_FILE), &s)
}
