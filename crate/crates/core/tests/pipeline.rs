use std::path::Path;

use heatbench::classical::{fit_gbm, GbmModel, GbmParams};
use heatbench::config::ExperimentConfig;
use heatbench::dataset::{read_county_weeks, week_midpoint, write_county_weeks};
use heatbench::eval::EvalReport;
use heatbench::experiment::{self, *};
use heatbench::qmodel::{initial_params, QsmCheckpoint};
use heatbench::synth::{g_season, sample_negbin};
use heatbench::ErrorKind;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

const SMALL: &str = "\
run.seed = 11
synth.regions = a:2:0.0, b:2:3.0
synth.years = 2021
split.train_regions = a
split.test_regions = b
qsm.n_qubits = 2
qsm.n_layers = 1
train.epochs = 2
train.batch_size = 32
gbm.rounds = 20
";

/// `SMALL` with the keys in `extra` replaced.
fn small(extra: &str) -> ExperimentConfig {
    let key = |l: &str| l.split('=').next().unwrap().trim().to_string();
    let overridden: Vec<String> = extra.lines().map(key).collect();
    let base: String = SMALL.lines().filter(|l| !overridden.contains(&key(l))).map(|l| format!("{l}\n")).collect();
    ExperimentConfig::parse(&format!("{base}{extra}")).unwrap()
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

#[test]
fn synth_cardinality_and_rerun() {
    let cfg = small("");
    let dir = tempfile::tempdir().unwrap();
    let first = run_synth(&cfg, dir.path()).unwrap();
    assert_eq!(first.rows, 4 * 52);
    assert!((0.0..=1.0).contains(&first.zero_fraction));
    let bytes = read(&first.path);
    run_synth(&cfg, dir.path()).unwrap();
    assert_eq!(read(&first.path), bytes);
}

#[test]
fn seasonal_only_zero_fraction_matches_monte_carlo() {
    let cfg = ExperimentConfig::parse("synth.alpha = 0\nsynth.beta.t_max = 0\n").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let summary = run_synth(&cfg, dir.path()).unwrap();
    let rows = read_county_weeks(&summary.path).unwrap();

    let mut rng = ChaCha20Rng::seed_from_u64(99);
    let draws_per_row = 400;
    let mut zeros = 0usize;
    for r in &rows {
        let w = g_season(week_midpoint(r.year, r.week).unwrap(), &cfg.synth.season);
        for _ in 0..draws_per_row {
            zeros += usize::from(sample_negbin(w, &cfg.synth.negbin, &mut rng).unwrap() == 0);
        }
    }
    let n = rows.len() as f64;
    let mc = zeros as f64 / (n * draws_per_row as f64);
    let se = (mc * (1.0 - mc) / n).sqrt();
    assert!(
        (summary.zero_fraction - mc).abs() <= 3.0 * se,
        "observed {} vs Monte Carlo {mc} (SE {se})",
        summary.zero_fraction
    );
}

#[test]
fn zero_rounds_and_epochs_keep_initializations() {
    let cfg = small("gbm.rounds = 0\ntrain.epochs = 0\n");
    let dir = tempfile::tempdir().unwrap();
    run_synth(&cfg, dir.path()).unwrap();
    let summary = run_train(&cfg, dir.path()).unwrap();
    assert_eq!(summary.gbm_trace.len(), 1);
    assert_eq!(summary.qsm_trace.len(), 1);

    let panel = read_county_weeks(&dir.path().join(COUNTY_WEEK_FILE)).unwrap();
    let y: Vec<f64> = panel.iter().filter(|r| r.region_id == "a").map(|r| r.target.unwrap() as f64).collect();
    let (_, gbm, qsm) = load_models(dir.path()).unwrap();
    assert!(gbm.trees.is_empty());
    assert_eq!(gbm.init_value, y.iter().sum::<f64>() / y.len() as f64);
    assert_eq!(qsm.params, initial_params(&qsm.config, &cfg.train, &y));

    // Both models are now constant at the training mean, so on the shifted
    // test region neither can beat that region's own mean.
    run_predict(&cfg, dir.path()).unwrap();
    for r in run_evaluate(&cfg, dir.path()).unwrap() {
        assert!(r.r2.is_none_or(|v| v <= 0.0), "{}: {:?}", r.model_name, r.r2);
    }
}

#[test]
fn same_seed_same_checkpoints() {
    let files = [PREPROCESS_FILE, GBM_FILE, QSM_FILE, GBM_TRACE_FILE, QSM_TRACE_FILE];
    let run = |cfg: &ExperimentConfig| {
        let dir = tempfile::tempdir().unwrap();
        run_synth(cfg, dir.path()).unwrap();
        run_train(cfg, dir.path()).unwrap();
        files.map(|f| read(&dir.path().join(f)))
    };
    let a = run(&small(""));
    assert_eq!(a, run(&small("")));
    let mut other = small("");
    other.set_seed(12);
    assert_ne!(a[2], run(&other)[2]);
}

#[test]
fn perfect_fit_scores_zero_error() {
    // A step function with a dyadic mean, so one exact tree reproduces it.
    let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, (i % 7) as f64]).collect();
    let y: Vec<f64> = (0..40).map(|i| if i < 10 { 4.0 } else if i < 20 { 8.0 } else { 2.0 }).collect();
    let params = GbmParams { rounds: 1, shrinkage: 1.0, max_depth: 2, min_samples_leaf: 1 };
    let model: GbmModel = fit_gbm(&x, &y, &params).unwrap().model;
    let report = EvalReport::compute("gbm", &y, &model.predict(&x).unwrap(), &[0.0]).unwrap();
    assert_eq!(report.mae, 0.0);
    assert_eq!(report.tolerance_curve, vec![(0.0, 1.0)]);
}

#[test]
fn schema_mismatch_names_the_column() {
    let cfg = small("");
    let dir = tempfile::tempdir().unwrap();
    run_synth(&cfg, dir.path()).unwrap();
    run_train(&cfg, dir.path()).unwrap();
    let path = dir.path().join(COUNTY_WEEK_FILE);
    let text = std::fs::read_to_string(&path).unwrap().replacen(",rh,", ",humidity,", 1);
    std::fs::write(&path, text).unwrap();
    let err = run_predict(&cfg, dir.path()).unwrap_err();
    assert!(matches!(err.kind(), ErrorKind::Data));
    assert!(err.to_string().contains("humidity") || err.to_string().contains("rh"), "{err}");
}

#[test]
fn test_regions_do_not_touch_fitted_state() {
    let cfg = small("");
    let dir = tempfile::tempdir().unwrap();
    run_synth(&cfg, dir.path()).unwrap();
    run_train(&cfg, dir.path()).unwrap();
    let fitted = [PREPROCESS_FILE, GBM_FILE, QSM_FILE].map(|f| read(&dir.path().join(f)));

    let path = dir.path().join(COUNTY_WEEK_FILE);
    let mut rows = read_county_weeks(&path).unwrap();
    for r in rows.iter_mut().filter(|r| r.region_id == "b") {
        r.t_max += 10.0;
        r.target = Some(r.target.unwrap() * 3 + 1);
    }
    write_county_weeks(&path, &rows).unwrap();
    run_train(&cfg, dir.path()).unwrap();
    assert_eq!(fitted, [PREPROCESS_FILE, GBM_FILE, QSM_FILE].map(|f| read(&dir.path().join(f))));

    run_predict(&cfg, dir.path()).unwrap();
    run_evaluate(&cfg, dir.path()).unwrap();
    assert_eq!(fitted[0], read(&dir.path().join(PREPROCESS_FILE)));
}

#[test]
fn empty_train_split_is_an_error() {
    let cfg = small("split.summer_tmax_band = 100, 200\n");
    let dir = tempfile::tempdir().unwrap();
    run_synth(&cfg, dir.path()).unwrap();
    let err = run_train(&cfg, dir.path()).unwrap_err();
    assert!(matches!(err.kind(), ErrorKind::Data), "{err}");
}

#[test]
fn summer_band_orders_regions_by_offset() {
    let cfg = small("");
    let dir = tempfile::tempdir().unwrap();
    let s = run_synth(&cfg, dir.path()).unwrap();
    let rows = read_county_weeks(&s.path).unwrap();
    let means = summer_mean_tmax(&rows);
    assert!(means["b"] > means["a"] + 1.5, "{means:?}");
    let mid = (means["a"] + means["b"]) / 2.0;
    let hot: Vec<String> = regions_in_summer_tmax_band(&rows, (mid, f64::INFINITY)).into_iter().collect();
    assert_eq!(hot, vec!["b".to_string()]);
}

#[test]
fn full_run_writes_every_artifact() {
    let cfg = small("");
    let dir = tempfile::tempdir().unwrap();
    let run = run_all(&cfg, dir.path()).unwrap();
    assert_eq!(run.reports.len(), 2);
    for name in [
        COUNTY_WEEK_FILE,
        PREPROCESS_FILE,
        GBM_FILE,
        QSM_FILE,
        GBM_TRACE_FILE,
        QSM_TRACE_FILE,
        PREDICTIONS_FILE,
        REPORT_FILE,
        REPORT_TEXT_FILE,
        CONFIG_FILE,
        MANIFEST_FILE,
        "residuals_gbm.csv",
        "tolerance_qsm.csv",
        "residual_hist_qsm.csv",
    ] {
        assert!(dir.path().join(name).is_file(), "missing {name}");
    }
    let manifest = std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
    assert!(manifest.contains(&format!("config_sha256 = {}", cfg.hash())));
    assert!(manifest.contains("seed = 11"));
    let resolved = std::fs::read_to_string(dir.path().join(CONFIG_FILE)).unwrap();
    assert_eq!(ExperimentConfig::parse(&resolved).unwrap().hash(), cfg.hash());

    let report = heatbench::eval::read_report(&dir.path().join(REPORT_FILE)).unwrap();
    let predictions = experiment::read_predictions(&dir.path().join(PREDICTIONS_FILE)).unwrap();
    assert!(report.iter().all(|r| r.n_rows == predictions.len()));
    let ckpt: QsmCheckpoint = serde_json::from_str(&std::fs::read_to_string(dir.path().join(QSM_FILE)).unwrap()).unwrap();
    assert_eq!(ckpt.config.n_qubits, 2);
}

#[test]
fn shipped_default_config_is_the_default() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.conf");
    let cfg = ExperimentConfig::load(&path).unwrap();
    assert_eq!(cfg, ExperimentConfig::default());
}
