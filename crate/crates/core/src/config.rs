//! Flat `section.key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key must be
//! known and appear at most once; anything else is a config error. Keys not
//! present keep their defaults, so an empty file is the default benchmark.
//! [`ExperimentConfig::to_text`] renders every key in a fixed order and is
//! what gets hashed into the run manifest. `run.out_dir` says where results
//! go, not what they are, so it is left out of that text.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::classical::GbmParams;
use crate::error::{Error, Result};
use crate::qmodel::{QsmConfig, Topology, TrainConfig};
use crate::synth::{RegionSpec, SynthConfig};

/// Mixed into the global seed to derive the optimizer's shuffling/init stream,
/// so that it never coincides with the data generator's seed.
pub const TRAIN_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataSource {
    /// Generate the panel from [`SynthConfig`].
    Synthetic,
    /// Build the panel from `daily_climate.csv`, `demographics.csv` and an
    /// optional `county_id,year,week,target` file.
    Raw { daily_climate: PathBuf, demographics: PathBuf, targets: Option<PathBuf> },
    /// Use an existing `county_week.csv` as is.
    CountyWeek(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassicalFeatures {
    /// Standardized features after the correlation filter.
    Filtered,
    /// The same PCA coordinates the circuit sees.
    Pca,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitConfig {
    pub train_regions: Vec<String>,
    pub test_regions: Vec<String>,
    /// When set, training regions are further restricted to those whose mean
    /// summer `t_max` lies in this closed band (°C).
    pub summer_tmax_band: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    pub correlation_threshold: f64,
    pub variance_target: f64,
    pub classical_features: ClassicalFeatures,
}

/// Circuit shape; `n_qubits` leading PCA coordinates are embedded.
#[derive(Debug, Clone, PartialEq)]
pub struct QsmSection {
    /// `None` uses every retained component.
    pub n_qubits: Option<usize>,
    pub n_layers: usize,
    pub topology: Topology,
    /// `None` reads out every wire.
    pub n_observables: Option<usize>,
    pub clip_embedding: bool,
}

impl QsmSection {
    /// Resolves the circuit for `k` available PCA coordinates.
    pub fn resolve(&self, k: usize) -> Result<QsmConfig> {
        let n = self.n_qubits.unwrap_or(k);
        if n > k {
            return Err(Error::Config(format!("qsm.n_qubits = {n} but preprocessing retained only {k} components")));
        }
        let cfg = QsmConfig {
            n_qubits: n,
            n_layers: self.n_layers,
            topology: self.topology,
            n_observables: self.n_observables.unwrap_or(n),
            clip_embedding: self.clip_embedding,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataSource,
    pub synth: SynthConfig,
    pub preprocess: PreprocessConfig,
    pub split: SplitConfig,
    pub qsm: QsmSection,
    pub train: TrainConfig,
    pub gbm: GbmParams,
    pub taus: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let seed = SynthConfig::default().rng_seed;
        let mut cfg = ExperimentConfig {
            seed,
            out_dir: PathBuf::from("out"),
            data: DataSource::Synthetic,
            synth: SynthConfig::default(),
            preprocess: PreprocessConfig {
                correlation_threshold: 0.95,
                variance_target: 0.98,
                classical_features: ClassicalFeatures::Filtered,
            },
            split: SplitConfig {
                train_regions: vec!["north".into(), "south".into()],
                test_regions: vec!["coast".into()],
                summer_tmax_band: None,
            },
            qsm: QsmSection {
                n_qubits: Some(5),
                n_layers: 3,
                topology: Topology::Ring,
                n_observables: None,
                clip_embedding: false,
            },
            train: TrainConfig::default(),
            gbm: GbmParams::default(),
            taus: crate::eval::DEFAULT_TAUS.to_vec(),
        };
        cfg.set_seed(seed);
        cfg
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!("`{key}` must be true or false, got `{value}`"))),
    }
}

fn parse_list(value: &str) -> Vec<String> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

fn parse_num_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    parse_list(value).iter().map(|v| parse_num(key, v)).collect()
}

fn parse_pair<T: FromStr + Copy>(key: &str, value: &str) -> Result<(T, T)> {
    match parse_num_list::<T>(key, value)?.as_slice() {
        &[a, b] => Ok((a, b)),
        _ => Err(Error::Config(format!("`{key}` expects two comma-separated values"))),
    }
}

fn parse_auto(key: &str, value: &str) -> Result<Option<usize>> {
    if value == "auto" {
        Ok(None)
    } else {
        parse_num(key, value).map(Some)
    }
}

fn parse_regions(key: &str, value: &str) -> Result<Vec<RegionSpec>> {
    parse_list(value)
        .iter()
        .map(|item| {
            let parts: Vec<&str> = item.split(':').collect();
            match parts.as_slice() {
                [id, n, offset] => Ok(RegionSpec {
                    region_id: id.trim().to_string(),
                    counties: parse_num(key, n.trim())?,
                    climate_offset: parse_num(key, offset.trim())?,
                }),
                _ => Err(Error::Config(format!("`{key}` entries look like `id:counties:offset`, got `{item}`"))),
            }
        })
        .collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

fn auto_or(v: Option<usize>) -> String {
    v.map_or_else(|| "auto".to_string(), |n| n.to_string())
}

impl ExperimentConfig {
    /// Sets the global seed: the generator uses it directly, the optimizer a
    /// salted copy.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.synth.rng_seed = seed;
        self.train.rng_seed = seed ^ TRAIN_SEED_SALT;
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected `section.key = value`", lineno + 1)));
            };
            let key = key.trim().to_string();
            if !key.contains('.') {
                return Err(Error::Config(format!("line {}: key `{key}` has no section", lineno + 1)));
            }
            if entries.insert(key.clone(), (lineno + 1, value.trim().to_string())).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
        }

        let mut cfg = ExperimentConfig::default();
        // A beta block in the file replaces the default coefficients wholesale.
        if entries.keys().any(|k| k.starts_with("synth.beta.")) {
            cfg.synth.vulnerability.beta.clear();
        }
        let mut seed = cfg.seed;
        let mut data_source = "synthetic".to_string();
        let mut paths: BTreeMap<&str, PathBuf> = BTreeMap::new();

        for (key, (lineno, value)) in &entries {
            let v = value.as_str();
            let k = key.as_str();
            let result: Result<()> = (|| {
                match k {
                    "run.seed" => seed = parse_num(k, v)?,
                    "run.out_dir" => cfg.out_dir = PathBuf::from(v),
                    "data.source" => data_source = v.to_string(),
                    "data.daily_climate" => drop(paths.insert("daily_climate", PathBuf::from(v))),
                    "data.demographics" => drop(paths.insert("demographics", PathBuf::from(v))),
                    "data.targets" => drop(paths.insert("targets", PathBuf::from(v))),
                    "data.county_week" => drop(paths.insert("county_week", PathBuf::from(v))),
                    "synth.mu" => cfg.synth.season.mu = parse_num(k, v)?,
                    "synth.sigma" => cfg.synth.season.sigma = parse_num(k, v)?,
                    "synth.alpha" => cfg.synth.hw.alpha = parse_num(k, v)?,
                    "synth.lambda" => cfg.synth.hw.lambda = parse_num(k, v)?,
                    "synth.theta" => cfg.synth.negbin.theta = parse_num(k, v)?,
                    "synth.regions" => cfg.synth.regions = parse_regions(k, v)?,
                    "synth.years" => cfg.synth.years = parse_num_list(k, v)?,
                    "synth.heatwaves_per_year" => cfg.synth.heatwaves.per_year = parse_num(k, v)?,
                    "synth.heatwave_days" => cfg.synth.heatwaves.duration_days = parse_num(k, v)?,
                    "synth.heatwave_boost" => cfg.synth.heatwaves.boost = parse_num(k, v)?,
                    "synth.heatwave_window" => cfg.synth.heatwaves.window = parse_pair(k, v)?,
                    "features.mu" => cfg.synth.features.season.mu = parse_num(k, v)?,
                    "features.sigma" => cfg.synth.features.season.sigma = parse_num(k, v)?,
                    "features.alpha" => cfg.synth.features.hw.alpha = parse_num(k, v)?,
                    "features.lambda" => cfg.synth.features.hw.lambda = parse_num(k, v)?,
                    "preprocess.correlation_threshold" => cfg.preprocess.correlation_threshold = parse_num(k, v)?,
                    "preprocess.variance_target" => cfg.preprocess.variance_target = parse_num(k, v)?,
                    "preprocess.classical_features" => {
                        cfg.preprocess.classical_features = match v {
                            "filtered" => ClassicalFeatures::Filtered,
                            "pca" => ClassicalFeatures::Pca,
                            _ => return Err(Error::Config(format!("`{k}` must be filtered or pca, got `{v}`"))),
                        }
                    }
                    "split.train_regions" => cfg.split.train_regions = parse_list(v),
                    "split.test_regions" => cfg.split.test_regions = parse_list(v),
                    "split.summer_tmax_band" => {
                        cfg.split.summer_tmax_band = if v == "none" { None } else { Some(parse_pair(k, v)?) }
                    }
                    "qsm.n_qubits" => cfg.qsm.n_qubits = parse_auto(k, v)?,
                    "qsm.n_layers" => cfg.qsm.n_layers = parse_num(k, v)?,
                    "qsm.topology" => cfg.qsm.topology = v.parse()?,
                    "qsm.n_observables" => cfg.qsm.n_observables = parse_auto(k, v)?,
                    "qsm.clip_embedding" => cfg.qsm.clip_embedding = parse_bool(k, v)?,
                    "train.epochs" => cfg.train.epochs = parse_num(k, v)?,
                    "train.batch_size" => cfg.train.batch_size = parse_num(k, v)?,
                    "train.learning_rate" => cfg.train.learning_rate = parse_num(k, v)?,
                    "train.beta1" => cfg.train.beta1 = parse_num(k, v)?,
                    "train.beta2" => cfg.train.beta2 = parse_num(k, v)?,
                    "train.epsilon" => cfg.train.epsilon = parse_num(k, v)?,
                    "gbm.rounds" => cfg.gbm.rounds = parse_num(k, v)?,
                    "gbm.shrinkage" => cfg.gbm.shrinkage = parse_num(k, v)?,
                    "gbm.max_depth" => cfg.gbm.max_depth = parse_num(k, v)?,
                    "gbm.min_samples_leaf" => cfg.gbm.min_samples_leaf = parse_num(k, v)?,
                    "eval.taus" => cfg.taus = parse_num_list(k, v)?,
                    _ => {
                        if let Some(name) = k.strip_prefix("synth.beta.") {
                            cfg.synth.vulnerability.beta.insert(name.to_string(), parse_num(k, v)?);
                        } else {
                            return Err(Error::Config(format!("unknown key `{k}`")));
                        }
                    }
                }
                Ok(())
            })();
            result.map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("line {lineno}: {msg}")),
                other => other,
            })?;
        }

        let mut take = |name: &str| paths.remove(name);
        cfg.data = match data_source.as_str() {
            "synthetic" => DataSource::Synthetic,
            "raw" => DataSource::Raw {
                daily_climate: take("daily_climate")
                    .ok_or_else(|| Error::Config("data.source = raw needs data.daily_climate".into()))?,
                demographics: take("demographics")
                    .ok_or_else(|| Error::Config("data.source = raw needs data.demographics".into()))?,
                targets: take("targets"),
            },
            "county_week" => DataSource::CountyWeek(
                take("county_week").ok_or_else(|| Error::Config("data.source = county_week needs data.county_week".into()))?,
            ),
            other => {
                return Err(Error::Config(format!("data.source must be synthetic, raw or county_week, got `{other}`")))
            }
        };
        if let Some(unused) = paths.keys().next() {
            return Err(Error::Config(format!("data.{unused} is not used by data.source = {data_source}")));
        }
        cfg.set_seed(seed);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.train.validate()?;
        let p = &self.preprocess;
        if !(p.correlation_threshold > 0.0 && p.correlation_threshold <= 1.0) {
            return Err(Error::Config("preprocess.correlation_threshold must be in (0, 1]".into()));
        }
        if !(p.variance_target > 0.0 && p.variance_target <= 1.0) {
            return Err(Error::Config("preprocess.variance_target must be in (0, 1]".into()));
        }
        if self.split.train_regions.is_empty() || self.split.test_regions.is_empty() {
            return Err(Error::Config("train and test region lists must be nonempty".into()));
        }
        if let Some(r) = self.split.train_regions.iter().find(|r| self.split.test_regions.contains(r)) {
            return Err(Error::Config(format!("region `{r}` is in both train and test sets")));
        }
        if let Some((lo, hi)) = self.split.summer_tmax_band {
            if !(lo <= hi) {
                return Err(Error::Config("split.summer_tmax_band must be `lo, hi` with lo ≤ hi".into()));
            }
        }
        if self.qsm.n_layers == 0 {
            return Err(Error::Config("qsm.n_layers must be positive".into()));
        }
        if self.qsm.n_qubits == Some(0) || self.qsm.n_qubits.is_some_and(|n| n > crate::qsim::MAX_QUBITS) {
            return Err(Error::QubitCount(self.qsm.n_qubits.unwrap_or(0)));
        }
        if !(self.gbm.shrinkage > 0.0 && self.gbm.shrinkage.is_finite()) || self.gbm.min_samples_leaf == 0 {
            return Err(Error::Config("gbm.shrinkage must be positive and gbm.min_samples_leaf ≥ 1".into()));
        }
        if self.taus.iter().any(|t| !(*t >= 0.0)) || self.taus.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("eval.taus must be non-negative and ascending".into()));
        }
        Ok(())
    }

    /// Every key except `run.out_dir` in a fixed order; `parse(to_text())`
    /// round-trips up to the output directory.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        line("run.seed", self.seed.to_string());
        match &self.data {
            DataSource::Synthetic => line("data.source", "synthetic".into()),
            DataSource::Raw { daily_climate, demographics, targets } => {
                line("data.source", "raw".into());
                line("data.daily_climate", daily_climate.display().to_string());
                line("data.demographics", demographics.display().to_string());
                if let Some(t) = targets {
                    line("data.targets", t.display().to_string());
                }
            }
            DataSource::CountyWeek(p) => {
                line("data.source", "county_week".into());
                line("data.county_week", p.display().to_string());
            }
        }
        let sc = &self.synth;
        line("synth.mu", sc.season.mu.to_string());
        line("synth.sigma", sc.season.sigma.to_string());
        line("synth.alpha", sc.hw.alpha.to_string());
        line("synth.lambda", sc.hw.lambda.to_string());
        line("synth.theta", sc.negbin.theta.to_string());
        for (name, b) in &sc.vulnerability.beta {
            line(&format!("synth.beta.{name}"), b.to_string());
        }
        let regions: Vec<String> =
            sc.regions.iter().map(|r| format!("{}:{}:{}", r.region_id, r.counties, r.climate_offset)).collect();
        line("synth.regions", regions.join(", "));
        line("synth.years", join(&sc.years));
        line("synth.heatwaves_per_year", sc.heatwaves.per_year.to_string());
        line("synth.heatwave_days", sc.heatwaves.duration_days.to_string());
        line("synth.heatwave_boost", sc.heatwaves.boost.to_string());
        line("synth.heatwave_window", format!("{}, {}", sc.heatwaves.window.0, sc.heatwaves.window.1));
        line("features.mu", sc.features.season.mu.to_string());
        line("features.sigma", sc.features.season.sigma.to_string());
        line("features.alpha", sc.features.hw.alpha.to_string());
        line("features.lambda", sc.features.hw.lambda.to_string());
        let p = &self.preprocess;
        line("preprocess.correlation_threshold", p.correlation_threshold.to_string());
        line("preprocess.variance_target", p.variance_target.to_string());
        let cf = match p.classical_features {
            ClassicalFeatures::Filtered => "filtered",
            ClassicalFeatures::Pca => "pca",
        };
        line("preprocess.classical_features", cf.into());
        line("split.train_regions", self.split.train_regions.join(", "));
        line("split.test_regions", self.split.test_regions.join(", "));
        line(
            "split.summer_tmax_band",
            self.split.summer_tmax_band.map_or_else(|| "none".to_string(), |(lo, hi)| format!("{lo}, {hi}")),
        );
        line("qsm.n_qubits", auto_or(self.qsm.n_qubits));
        line("qsm.n_layers", self.qsm.n_layers.to_string());
        let topo = match self.qsm.topology {
            Topology::Chain => "chain",
            Topology::Ring => "ring",
        };
        line("qsm.topology", topo.into());
        line("qsm.n_observables", auto_or(self.qsm.n_observables));
        line("qsm.clip_embedding", self.qsm.clip_embedding.to_string());
        let t = &self.train;
        line("train.epochs", t.epochs.to_string());
        line("train.batch_size", t.batch_size.to_string());
        line("train.learning_rate", t.learning_rate.to_string());
        line("train.beta1", t.beta1.to_string());
        line("train.beta2", t.beta2.to_string());
        line("train.epsilon", t.epsilon.to_string());
        let g = &self.gbm;
        line("gbm.rounds", g.rounds.to_string());
        line("gbm.shrinkage", g.shrinkage.to_string());
        line("gbm.max_depth", g.max_depth.to_string());
        line("gbm.min_samples_leaf", g.min_samples_leaf.to_string());
        line("eval.taus", join(&self.taus));
        s
    }

    /// Hex SHA-256 of [`Self::to_text`].
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_text().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}
