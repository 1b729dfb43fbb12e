//! Generative latent-intensity model for weekly heat-illness counts.
//!
//! The expected count for a county-week is
//!
//! ```text
//! w(t) = g_season(t) · exp(βᵀx) + Σᵢ g_hw(t − tᵢ)
//! ```
//!
//! with a Gaussian seasonal kernel, a log-linear vulnerability term over
//! named covariates, and exponentially decaying heatwave shocks. Observed
//! counts are negative binomial with mean `w` and dispersion `θ`, drawn as a
//! Gamma–Poisson mixture.
//!
//! # Reproducibility
//!
//! All randomness comes from ChaCha20 (`rand_chacha::ChaCha20Rng`) seeded
//! with `seed_from_u64(rng_seed)`. County `i` (in region order) draws its
//! covariates from stream `2i` and its counts from stream `2i + 1`, so
//! regenerating with the same [`SynthConfig`] is bit-identical. The Gamma and
//! Poisson samplers are those of `rand_distr` 0.5.1, pinned in the manifest.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};

use crate::dataset::{
    build_county_weeks, day_of_year_in, iso_weeks_in_year, week_midpoint, CountyWeekRecord, DailyClimateRecord, Demographics,
    FeatureParams, FEATURE_NAMES,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeasonParams {
    /// Peak day-of-year.
    pub mu: f64,
    /// Spread in days.
    pub sigma: f64,
}

impl Default for SeasonParams {
    /// Mid-July peak; σ = 43 puts ~92% of the seasonal mass in May–September.
    fn default() -> Self {
        SeasonParams { mu: 196.0, sigma: 43.0 }
    }
}

impl SeasonParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) || !(1.0..=366.0).contains(&self.mu) {
            return Err(Error::Config(format!("invalid season parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HwKernelParams {
    pub alpha: f64,
    /// Decay rate per day.
    pub lambda: f64,
}

impl HwKernelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) || !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("invalid heatwave kernel parameters {self:?}")));
        }
        Ok(())
    }
}

/// Log-linear vulnerability coefficients keyed by covariate name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VulnerabilityParams {
    pub beta: BTreeMap<String, f64>,
}

impl VulnerabilityParams {
    pub fn validate(&self) -> Result<()> {
        for (name, b) in &self.beta {
            if !FEATURE_NAMES.contains(&name.as_str()) {
                return Err(Error::Config(format!("unknown covariate `{name}` in beta")));
            }
            if !b.is_finite() {
                return Err(Error::Config(format!("beta for `{name}` is not finite")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegBinParams {
    pub theta: f64,
}

/// Anything that can look up a covariate value by column name.
pub trait Covariates {
    fn covariate(&self, name: &str) -> Option<f64>;
}

impl Covariates for BTreeMap<String, f64> {
    fn covariate(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl Covariates for [(&str, f64)] {
    fn covariate(&self, name: &str) -> Option<f64> {
        self.iter().find(|(n, _)| *n == name).map(|&(_, v)| v)
    }
}

pub fn g_season(t: f64, p: &SeasonParams) -> f64 {
    let z = t - p.mu;
    (-(z * z) / (2.0 * p.sigma * p.sigma)).exp()
}

pub fn g_hw(dt: f64, p: &HwKernelParams) -> f64 {
    if dt < 0.0 {
        0.0
    } else {
        p.alpha * (-p.lambda * dt).exp()
    }
}

pub fn vulnerability<X: Covariates + ?Sized>(x: &X, p: &VulnerabilityParams) -> Result<f64> {
    let mut dot = 0.0;
    for (name, b) in &p.beta {
        let v = x.covariate(name).ok_or_else(|| Error::MissingCovariate(name.clone()))?;
        dot += b * v;
    }
    Ok(dot.exp())
}

pub fn latent_intensity<X: Covariates + ?Sized>(t: f64, x: &X, onsets: &[f64], cfg: &SynthConfig) -> Result<f64> {
    let shocks: f64 = onsets.iter().map(|&ti| g_hw(t - ti, &cfg.hw)).sum();
    Ok(g_season(t, &cfg.season) * vulnerability(x, &cfg.vulnerability)? + shocks)
}

/// One negative binomial draw with mean `w` and variance `w + w²/θ`.
pub fn sample_negbin<R: Rng + ?Sized>(w: f64, p: &NegBinParams, rng: &mut R) -> Result<u64> {
    if !(w >= 0.0 && w.is_finite()) {
        return Err(Error::Numerical(format!("negative binomial mean {w} is not a finite non-negative number")));
    }
    if !(p.theta > 0.0 && p.theta.is_finite()) {
        return Err(Error::Config(format!("dispersion {} must be positive", p.theta)));
    }
    if w == 0.0 {
        return Ok(0);
    }
    let gamma = Gamma::new(p.theta, w / p.theta).map_err(|e| Error::Numerical(e.to_string()))?;
    let rate: f64 = gamma.sample(rng);
    if rate <= 0.0 {
        return Ok(0);
    }
    let poisson = Poisson::new(rate).map_err(|e| Error::Numerical(e.to_string()))?;
    let count: f64 = poisson.sample(rng);
    Ok(count as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionSpec {
    pub region_id: String,
    pub counties: usize,
    /// Added to every temperature of the region's counties, in °C.
    pub climate_offset: f64,
}

/// How heatwave episodes are scheduled in the synthetic weather.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatwaveSchedule {
    /// Mean number of episodes per county-year (Poisson).
    pub per_year: f64,
    pub duration_days: u32,
    /// Temperature boost during an episode, °C.
    pub boost: f64,
    /// Onsets are drawn uniformly in this day-of-year window.
    pub window: (u32, u32),
}

impl Default for HeatwaveSchedule {
    fn default() -> Self {
        HeatwaveSchedule { per_year: 2.0, duration_days: 4, boost: 7.0, window: (152, 243) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub season: SeasonParams,
    pub hw: HwKernelParams,
    pub vulnerability: VulnerabilityParams,
    pub negbin: NegBinParams,
    pub regions: Vec<RegionSpec>,
    pub years: Vec<i32>,
    pub heatwaves: HeatwaveSchedule,
    /// Kernels used for the `season_gaussian` and `hw_kernel` feature columns.
    pub features: FeatureParams,
    pub rng_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let beta = [
            ("t_max", 0.06),
            ("days_p95", 0.1),
            ("ratio_age_65_plus", 4.0),
            ("sector_agriculture", 4.0),
            ("sector_construction", 3.0),
            ("sector_services", -3.0),
        ];
        SynthConfig {
            season: SeasonParams::default(),
            hw: HwKernelParams { alpha: 3.0, lambda: 0.15 },
            vulnerability: VulnerabilityParams { beta: beta.iter().map(|&(k, v)| (k.to_string(), v)).collect() },
            negbin: NegBinParams { theta: 3.0 },
            regions: vec![
                RegionSpec { region_id: "north".into(), counties: 8, climate_offset: 0.0 },
                RegionSpec { region_id: "south".into(), counties: 8, climate_offset: 3.0 },
                RegionSpec { region_id: "coast".into(), counties: 6, climate_offset: 1.5 },
            ],
            years: vec![2019, 2020, 2021],
            heatwaves: HeatwaveSchedule::default(),
            features: FeatureParams::default(),
            rng_seed: 20_240_717,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        self.season.validate()?;
        self.hw.validate()?;
        self.vulnerability.validate()?;
        self.features.season.validate()?;
        self.features.hw.validate()?;
        if !(self.negbin.theta > 0.0 && self.negbin.theta.is_finite()) {
            return Err(Error::Config(format!("theta {} must be positive", self.negbin.theta)));
        }
        if self.regions.iter().map(|r| r.counties).sum::<usize>() == 0 {
            return Err(Error::Config("at least one county is required".into()));
        }
        if self.years.is_empty() {
            return Err(Error::Config("at least one year is required".into()));
        }
        let mut ids: Vec<&str> = self.regions.iter().map(|r| r.region_id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("duplicate region id".into()));
        }
        let (lo, hi) = self.heatwaves.window;
        if !(1 <= lo && lo <= hi && hi <= 365) || self.heatwaves.per_year < 0.0 {
            return Err(Error::Config("invalid heatwave schedule".into()));
        }
        Ok(())
    }

    /// County ids in generation order, with their region.
    pub fn counties(&self) -> Vec<(String, &RegionSpec)> {
        self.regions
            .iter()
            .flat_map(|r| (0..r.counties).map(move |i| (format!("{}-{:03}", r.region_id, i), r)))
            .collect()
    }

    fn county_rng(&self, county_index: usize, stream: u64) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.rng_seed);
        rng.set_stream(2 * county_index as u64 + stream);
        rng
    }
}

/// Raw synthetic inputs in the ingestion schemas, plus the scheduled onsets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynthRaw {
    pub daily: Vec<DailyClimateRecord>,
    pub demographics: Vec<Demographics>,
    /// Scheduled onset days-of-year keyed by (county, year).
    pub onsets: BTreeMap<(String, i32), Vec<f64>>,
}

/// Saturation vapour pressure in Pa (Magnus form) at temperature `t` °C.
fn saturation_vapour_pressure(t: f64) -> f64 {
    610.94 * (17.625 * t / (t + 243.04)).exp()
}

fn draw_demographics<R: Rng>(county_id: &str, years: &[i32], rng: &mut R) -> Vec<Demographics> {
    let pop0 = (rng.random_range(5e3f64.ln()..5e5f64.ln())).exp();
    let male = rng.random_range(0.48..0.52);
    let young = rng.random_range(0.16..0.26);
    let old = rng.random_range(0.12..0.28);
    let agriculture = rng.random_range(0.01..0.15);
    let construction = rng.random_range(0.04..0.12);
    let industry = rng.random_range(0.08..0.25);
    let growth: f64 = rng.random_range(-0.01..0.02);
    years
        .iter()
        .enumerate()
        .map(|(k, &year)| {
            let total = (pop0 * (1.0 + growth).powi(k as i32)).round().max(1.0) as u64;
            let pop_male = (total as f64 * male).round() as u64;
            let pop_age_0_17 = (total as f64 * young).round() as u64;
            let pop_age_65_plus = (total as f64 * (old + 0.003 * k as f64)).round() as u64;
            Demographics {
                county_id: county_id.to_string(),
                year,
                pop_total: total,
                pop_male,
                pop_female: total - pop_male,
                pop_age_0_17,
                pop_age_18_64: total - pop_age_0_17 - pop_age_65_plus,
                pop_age_65_plus,
                sector_agriculture: agriculture,
                sector_construction: construction,
                sector_industry: industry,
                sector_services: 1.0 - agriculture - construction - industry,
            }
        })
        .collect()
}

fn iso_year_days(year: i32) -> Vec<NaiveDate> {
    let start = NaiveDate::from_isoywd_opt(year, 1, Weekday::Mon).expect("ISO week 1 exists");
    (0..7 * iso_weeks_in_year(year) as u64).map(|i| start + Days::new(i)).collect()
}

/// Draws per-county weather, demographics, and heatwave schedules.
///
/// Daily mean temperature follows an annual cosine peaking at day 200, shifted
/// by region and county offsets, with AR(1) anomalies. Scheduled heatwaves add
/// `boost` °C for `duration_days`; these scheduled onsets are the `tᵢ` of the
/// latent intensity, while the `hw_kernel` feature is computed from the
/// episodes the dataset builder detects in the resulting series.
pub fn generate_raw(cfg: &SynthConfig) -> Result<SynthRaw> {
    cfg.validate()?;
    let mut raw = SynthRaw::default();
    let anomaly = Normal::new(0.0, 2.0).expect("valid normal");
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    for (index, (county_id, region)) in cfg.counties().into_iter().enumerate() {
        let mut rng = cfg.county_rng(index, 0);
        raw.demographics.extend(draw_demographics(&county_id, &cfg.years, &mut rng));
        let county_offset = region.climate_offset + 0.8 * unit.sample(&mut rng);
        let humidity_bias = rng.random_range(-0.08..0.08);
        let mut a = 0.0;
        for &year in &cfg.years {
            let n_events = Poisson::new(cfg.heatwaves.per_year.max(1e-12))
                .map(|p| p.sample(&mut rng) as usize)
                .unwrap_or(0);
            let (lo, hi) = cfg.heatwaves.window;
            let mut onsets: Vec<f64> = (0..n_events).map(|_| rng.random_range(lo..=hi) as f64).collect();
            onsets.sort_by(f64::total_cmp);
            for date in iso_year_days(year) {
                let doy = day_of_year_in(date, year);
                let heat = onsets.iter().any(|&o| doy >= o && doy < o + cfg.heatwaves.duration_days as f64);
                let boost = if heat { cfg.heatwaves.boost } else { 0.0 };
                a = 0.7 * a + anomaly.sample(&mut rng);
                let cycle = (2.0 * PI * (date.ordinal() as f64 - 200.0) / 365.25).cos();
                let tmean = 11.0 + county_offset + 11.0 * cycle + a + boost;
                let range = (9.0 + 1.5 * unit.sample(&mut rng)).max(2.0);
                let rh = (0.65 + humidity_bias - 0.12 * cycle + 0.08 * unit.sample(&mut rng) - 0.02 * boost)
                    .clamp(0.05, 1.0);
                let vp_sat = saturation_vapour_pressure(tmean);
                raw.daily.push(DailyClimateRecord {
                    county_id: county_id.clone(),
                    region_id: region.region_id.clone(),
                    date,
                    tmax: tmean + 0.5 * range,
                    tmean,
                    tmin: tmean - 0.5 * range,
                    vp: rh * vp_sat,
                    vp_sat,
                    rh,
                });
            }
            raw.onsets.insert((county_id.clone(), year), onsets);
        }
    }
    Ok(raw)
}

/// Labels county-week rows with negative binomial counts around the latent
/// intensity evaluated at each week's Thursday.
pub fn label_records(records: &mut [CountyWeekRecord], raw: &SynthRaw, cfg: &SynthConfig) -> Result<()> {
    let index: BTreeMap<String, usize> =
        cfg.counties().into_iter().enumerate().map(|(i, (id, _))| (id, i)).collect();
    let mut rngs: BTreeMap<usize, ChaCha20Rng> = BTreeMap::new();
    for rec in records.iter_mut() {
        let &i = index
            .get(&rec.county_id)
            .ok_or_else(|| Error::InvalidRecord(format!("county {} not in config", rec.county_id)))?;
        let rng = rngs.entry(i).or_insert_with(|| cfg.county_rng(i, 1));
        let t = week_midpoint(rec.year, rec.week)?;
        let onsets = raw.onsets.get(&(rec.county_id.clone(), rec.year)).map(Vec::as_slice).unwrap_or(&[]);
        let w = latent_intensity(t, &*rec, onsets, cfg)?;
        rec.target = Some(sample_negbin(w, &cfg.negbin, rng)?);
    }
    Ok(())
}

/// Fully labelled synthetic county-week panel, deterministic in `cfg`.
pub fn generate_dataset(cfg: &SynthConfig) -> Result<Vec<CountyWeekRecord>> {
    let raw = generate_raw(cfg)?;
    let mut records = build_county_weeks(&raw.daily, &raw.demographics, &cfg.features)?;
    label_records(&mut records, &raw, cfg)?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use proptest::prelude::*;

    fn season() -> SeasonParams {
        SeasonParams { mu: 196.0, sigma: 43.0 }
    }

    #[test]
    fn seasonal_kernel() {
        let p = season();
        assert_eq!(g_season(p.mu, &p), 1.0);
        assert!((g_season(p.mu + 2.0 * p.sigma, &p) - (-2.0f64).exp()).abs() < 1e-15);
        assert!((g_season(p.mu + 2.0 * p.sigma, &p) - 0.135335).abs() < 1e-6);
    }

    #[test]
    fn default_sigma_covers_may_to_september() {
        // May 1 is day 121 and September 30 day 273 in a common year.
        let p = SeasonParams::default();
        let inside: f64 = (121..=273).map(|d| g_season(d as f64, &p)).sum();
        let total: f64 = (-400..=800).map(|d| g_season(d as f64, &p)).sum();
        assert!((inside / total - 0.92).abs() < 0.01, "{}", inside / total);
    }

    #[test]
    fn heatwave_kernel() {
        let p = HwKernelParams { alpha: 1.0, lambda: 0.5 };
        assert_eq!(g_hw(-1.0, &p), 0.0);
        assert_eq!(g_hw(0.0, &HwKernelParams { alpha: 2.0, lambda: 0.5 }), 2.0);
        assert!((g_hw(2.0, &p) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((g_hw(2.0, &p) - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn vulnerability_values() {
        let zero = VulnerabilityParams { beta: [("a".to_string(), 0.0)].into() };
        assert_eq!(vulnerability(&[("a", 3.0)][..], &zero).unwrap(), 1.0);
        let one = VulnerabilityParams { beta: [("a".to_string(), 1.0)].into() };
        assert!((vulnerability(&[("a", 2f64.ln())][..], &one).unwrap() - 2.0).abs() < 1e-15);
        assert!(matches!(vulnerability(&[("b", 1.0)][..], &one), Err(Error::MissingCovariate(n)) if n == "a"));
    }

    #[test]
    fn vulnerability_matches_product_of_exponentials() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let names = ["a", "b", "c", "d", "e"];
        let beta: BTreeMap<String, f64> = names.iter().map(|n| (n.to_string(), rng.random_range(-1.0..1.0))).collect();
        let x: BTreeMap<String, f64> = names.iter().map(|n| (n.to_string(), rng.random_range(-2.0..2.0))).collect();
        let oracle: f64 = names.iter().map(|n| (beta[*n] * x[*n]).exp()).product();
        let got = vulnerability(&x, &VulnerabilityParams { beta }).unwrap();
        assert!((got - oracle).abs() < 1e-12 * oracle);
    }

    fn flat_config() -> SynthConfig {
        SynthConfig {
            hw: HwKernelParams { alpha: 0.0, lambda: 0.15 },
            vulnerability: VulnerabilityParams::default(),
            ..SynthConfig::default()
        }
    }

    #[test]
    fn intensity_reductions() {
        let cfg = flat_config();
        let x: BTreeMap<String, f64> = BTreeMap::new();
        assert_eq!(latent_intensity(cfg.season.mu, &x, &[], &cfg).unwrap(), 1.0);
        let t = 150.0;
        assert_eq!(latent_intensity(t, &x, &[], &cfg).unwrap(), g_season(t, &cfg.season));
    }

    #[test]
    fn intensity_matches_explicit_three_term_sum() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let cfg = SynthConfig {
            season: SeasonParams { mu: rng.random_range(150.0..220.0), sigma: rng.random_range(20.0..60.0) },
            hw: HwKernelParams { alpha: rng.random_range(0.5..4.0), lambda: rng.random_range(0.05..0.5) },
            vulnerability: VulnerabilityParams { beta: [("t_max".to_string(), 0.05), ("rh".to_string(), -0.7)].into() },
            ..SynthConfig::default()
        };
        let x: BTreeMap<String, f64> = [("t_max".to_string(), 31.0), ("rh".to_string(), 0.4)].into();
        let t = 200.0;
        let onsets = [170.0, 195.0, 230.0];
        let (mu, s) = (cfg.season.mu, cfg.season.sigma);
        let (a, l) = (cfg.hw.alpha, cfg.hw.lambda);
        let season = (-(t - mu) * (t - mu) / (2.0 * s * s)).exp();
        let m = (0.05f64 * 31.0 - 0.7 * 0.4).exp();
        let shock = |ti: f64| if t - ti >= 0.0 { a * (-l * (t - ti)).exp() } else { 0.0 };
        let oracle = season * m + shock(170.0) + shock(195.0) + shock(230.0);
        let got = latent_intensity(t, &x, &onsets, &cfg).unwrap();
        assert!((got - oracle).abs() < 1e-12);
    }

    fn moments(w: f64, theta: f64, n: usize, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let p = NegBinParams { theta };
        let draws: Vec<f64> = (0..n).map(|_| sample_negbin(w, &p, &mut rng).unwrap() as f64).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        (mean, var)
    }

    #[test]
    fn negbin_moments() {
        let n = 100_000;
        let (mean, var) = moments(3.0, 2.0, n, 1);
        let se = (7.5f64 / n as f64).sqrt();
        assert!((mean - 3.0).abs() < 3.0 * se, "mean {mean}");
        assert!((var - 7.5).abs() < 0.05 * 7.5, "var {var}");
    }

    #[test]
    fn negbin_is_overdispersed() {
        let (_, var) = moments(5.0, 1.0, 100_000, 2);
        assert!(var > 5.0);
    }

    #[test]
    fn negbin_degenerate_and_deterministic() {
        let p = NegBinParams { theta: 2.0 };
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        assert_eq!(sample_negbin(0.0, &p, &mut rng).unwrap(), 0);
        let draw = |seed| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            (0..50).map(|_| sample_negbin(2.5, &p, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
        assert!(sample_negbin(-1.0, &p, &mut rng).is_err());
    }

    fn small_config() -> SynthConfig {
        SynthConfig {
            regions: vec![RegionSpec { region_id: "r".into(), counties: 2, climate_offset: 0.0 }],
            years: vec![2020],
            ..SynthConfig::default()
        }
    }

    #[test]
    fn cardinality() {
        let rows = generate_dataset(&small_config()).unwrap();
        assert_eq!(rows.len(), 2 * 53);
        assert!(rows.iter().all(|r| r.target.is_some()));
        let cfg = SynthConfig { years: vec![2021], ..small_config() };
        assert_eq!(generate_dataset(&cfg).unwrap().len(), 2 * 52);
    }

    #[test]
    fn regeneration_is_identical() {
        let cfg = small_config();
        assert_eq!(generate_dataset(&cfg).unwrap(), generate_dataset(&cfg).unwrap());
        let other = SynthConfig { rng_seed: cfg.rng_seed + 1, ..cfg.clone() };
        assert_ne!(generate_dataset(&cfg).unwrap(), generate_dataset(&other).unwrap());
    }

    #[test]
    fn region_offset_shifts_temperatures() {
        let mut cfg = small_config();
        cfg.regions = vec![
            RegionSpec { region_id: "cold".into(), counties: 3, climate_offset: 0.0 },
            RegionSpec { region_id: "hot".into(), counties: 3, climate_offset: 6.0 },
        ];
        let rows = generate_dataset(&cfg).unwrap();
        let mean = |id: &str| {
            let v: Vec<f64> = rows.iter().filter(|r| r.region_id == id).map(|r| r.t_mean).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(mean("hot") - mean("cold") > 3.0);
    }

    #[test]
    fn peak_weeks_concentrate_near_one_without_covariates() {
        // beta = 0, alpha = 0, theta huge: counts are essentially Poisson(g_season(t)).
        // The oracle is the mean of g_season over the sampled weeks, which is
        // near 1 around the peak.
        let cfg = SynthConfig {
            negbin: NegBinParams { theta: 1e6 },
            regions: vec![RegionSpec { region_id: "r".into(), counties: 40, climate_offset: 0.0 }],
            years: vec![2019, 2020, 2021],
            ..flat_config()
        };
        let rows = generate_dataset(&cfg).unwrap();
        let peak: Vec<(f64, f64)> = rows
            .iter()
            .filter_map(|r| {
                let t = week_midpoint(r.year, r.week).unwrap();
                ((t - cfg.season.mu).abs() <= 3.5).then(|| (r.target.unwrap() as f64, g_season(t, &cfg.season)))
            })
            .collect();
        assert!(peak.len() >= 100);
        let n = peak.len() as f64;
        let mean = peak.iter().map(|p| p.0).sum::<f64>() / n;
        let expected = peak.iter().map(|p| p.1).sum::<f64>() / n;
        assert!(expected > 0.99);
        let se = (expected / n).sqrt();
        assert!((mean - expected).abs() < 3.0 * se, "mean {mean} expected {expected}");
    }

    #[test]
    fn config_validation() {
        let mut cfg = SynthConfig::default();
        cfg.years.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = SynthConfig::default();
        cfg.vulnerability.beta.insert("nope".into(), 1.0);
        assert!(cfg.validate().is_err());
        let mut cfg = SynthConfig::default();
        cfg.season.sigma = 0.0;
        assert!(cfg.validate().is_err());
    }

    proptest! {
        #[test]
        fn season_is_even_and_peaks_at_mu(x in 0.0f64..200.0, mu in 1.0f64..366.0, sigma in 1.0f64..90.0) {
            let p = SeasonParams { mu, sigma };
            let d = (g_season(mu + x, &p) - g_season(mu - x, &p)).abs();
            prop_assert!(d <= 1e-15);
            prop_assert!(g_season(mu + x, &p) <= g_season(mu, &p));
        }

        #[test]
        fn intensity_monotone_in_alpha(
            a1 in 0.0f64..5.0,
            extra in 0.0f64..5.0,
            t in 1.0f64..366.0,
            onsets in proptest::collection::vec(1.0f64..366.0, 0..4),
        ) {
            let x: BTreeMap<String, f64> = BTreeMap::new();
            let mut lo = flat_config();
            lo.hw.alpha = a1;
            let mut hi = lo.clone();
            hi.hw.alpha = a1 + extra;
            prop_assert!(latent_intensity(t, &x, &onsets, &lo).unwrap() <= latent_intensity(t, &x, &onsets, &hi).unwrap());
        }
    }
}
