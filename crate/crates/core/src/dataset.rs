//! County-week feature construction.
//!
//! Daily climate rows are aggregated to ISO weeks, joined with yearly
//! demographic and labour-sector tables, and augmented with two seasonal
//! kernels. [`CountyWeekRecord`] fixes the canonical column order used by
//! every downstream stage.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::{g_hw, g_season, Covariates, HwKernelParams, SeasonParams};

/// Minimum number of daily values needed for a climatological percentile.
pub const MIN_HISTORY: usize = 100;
/// Consecutive days above the percentile that make up a heatwave episode.
pub const HEATWAVE_RUN: usize = 3;
/// Weeks truncated by the ends of a series are kept only with this many days.
pub const MIN_DAYS_PER_WEEK: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyClimateRecord {
    pub county_id: String,
    pub region_id: String,
    pub date: NaiveDate,
    pub tmax: f64,
    pub tmean: f64,
    pub tmin: f64,
    pub vp: f64,
    pub vp_sat: f64,
    pub rh: f64,
}

impl DailyClimateRecord {
    pub fn validate(&self) -> Result<()> {
        let fields = [self.tmax, self.tmean, self.tmin, self.vp, self.vp_sat, self.rh];
        let what = || format!("{} {}", self.county_id, self.date);
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidRecord(format!("{}: non-finite field", what())));
        }
        if !(self.tmin <= self.tmean && self.tmean <= self.tmax) {
            return Err(Error::InvalidRecord(format!("{}: expected tmin <= tmean <= tmax", what())));
        }
        if !(0.0..=1.0).contains(&self.rh) {
            return Err(Error::InvalidRecord(format!("{}: rh {} outside [0, 1]", what(), self.rh)));
        }
        if self.vp > self.vp_sat {
            return Err(Error::InvalidRecord(format!("{}: vp exceeds vp_sat", what())));
        }
        Ok(())
    }
}

/// Climate part of a county-week row.
#[derive(Debug, Clone, PartialEq)]
pub struct WeeklyClimate {
    pub county_id: String,
    pub region_id: String,
    pub year: i32,
    pub week: u32,
    pub t_max: f64,
    pub t_mean: f64,
    pub t_min: f64,
    pub vp: f64,
    pub vp_sat: f64,
    pub rh: f64,
}

/// Mean computed over the sorted sample so the result does not depend on
/// input order.
fn order_free_mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn aggregate_daily_to_weekly(days: &[DailyClimateRecord]) -> Result<WeeklyClimate> {
    let first = days.first().ok_or(Error::EmptyWeek)?;
    if days.len() > 7 {
        return Err(Error::InconsistentGrouping(format!("{} days in one week", days.len())));
    }
    let key = first.date.iso_week();
    for d in days {
        if d.county_id != first.county_id || d.region_id != first.region_id {
            return Err(Error::InconsistentGrouping(format!(
                "counties {} and {} in one week",
                first.county_id, d.county_id
            )));
        }
        if d.date.iso_week() != key {
            return Err(Error::InconsistentGrouping(format!(
                "dates {} and {} fall in different ISO weeks",
                first.date, d.date
            )));
        }
    }
    Ok(WeeklyClimate {
        county_id: first.county_id.clone(),
        region_id: first.region_id.clone(),
        year: key.year(),
        week: key.week(),
        t_max: days.iter().map(|d| d.tmax).fold(f64::NEG_INFINITY, f64::max),
        t_min: days.iter().map(|d| d.tmin).fold(f64::INFINITY, f64::min),
        t_mean: order_free_mean(days.iter().map(|d| d.tmean)),
        vp: order_free_mean(days.iter().map(|d| d.vp)),
        vp_sat: order_free_mean(days.iter().map(|d| d.vp_sat)),
        rh: order_free_mean(days.iter().map(|d| d.rh)),
    })
}

/// Number of days in a week whose maximum temperature is strictly above the
/// threshold.
pub fn compute_days_p95(week_tmax: &[f64], threshold_p95: f64) -> Result<u8> {
    if !threshold_p95.is_finite() || threshold_p95.abs() >= f64::MAX / 2.0 {
        return Err(Error::InvalidRecord(format!("threshold {threshold_p95} is not a usable temperature")));
    }
    if week_tmax.len() > 7 {
        return Err(Error::InconsistentGrouping(format!("{} days in one week", week_tmax.len())));
    }
    Ok(week_tmax.iter().filter(|&&t| t > threshold_p95).count() as u8)
}

/// Nearest-rank 95th percentile: the value at 1-based rank ⌈0.95·N⌉ of the
/// sorted sample.
pub fn climatological_p95(history: &[f64]) -> Result<f64> {
    if history.len() < MIN_HISTORY {
        return Err(Error::InsufficientHistory { got: history.len(), need: MIN_HISTORY });
    }
    if history.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidRecord("non-finite value in temperature history".into()));
    }
    let mut sorted = history.to_vec();
    sorted.sort_by(f64::total_cmp);
    // Integer form of ⌈0.95·N⌉ avoids rounding 0.95·100 to 95.00000000000001.
    let rank = (95 * sorted.len()).div_ceil(100);
    Ok(sorted[rank - 1])
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HeatwaveScan {
    /// ISO (year, week) pairs containing at least one episode day.
    pub weeks: BTreeSet<(i32, u32)>,
    /// First day of each episode.
    pub onsets: Vec<NaiveDate>,
}

/// Detects runs of at least [`HEATWAVE_RUN`] consecutive calendar days with
/// tmax above `p95`. The series must be sorted by strictly increasing date;
/// gaps break a run.
pub fn heatwave_weeks(daily: &[(NaiveDate, f64)], p95: f64) -> Result<HeatwaveScan> {
    if let Some(w) = daily.windows(2).find(|w| w[1].0 <= w[0].0) {
        return Err(Error::InvalidRecord(format!("daily series not strictly increasing at {}", w[1].0)));
    }
    let mut scan = HeatwaveScan::default();
    let flush = |run: &[NaiveDate], scan: &mut HeatwaveScan| {
        if run.len() >= HEATWAVE_RUN {
            scan.onsets.push(run[0]);
            for d in run {
                let iw = d.iso_week();
                scan.weeks.insert((iw.year(), iw.week()));
            }
        }
    };
    let mut run: Vec<NaiveDate> = Vec::new();
    for &(date, tmax) in daily {
        let continues = run.last().is_some_and(|last| last.succ_opt() == Some(date));
        if !continues {
            flush(&run, &mut scan);
            run.clear();
        }
        if tmax > p95 {
            run.push(date);
        } else {
            flush(&run, &mut scan);
            run.clear();
        }
    }
    flush(&run, &mut scan);
    Ok(scan)
}

/// Raw yearly demographic counts and labour-sector shares for one county.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demographics {
    pub county_id: String,
    pub year: i32,
    pub pop_total: u64,
    pub pop_male: u64,
    pub pop_female: u64,
    pub pop_age_0_17: u64,
    pub pop_age_18_64: u64,
    pub pop_age_65_plus: u64,
    pub sector_agriculture: f64,
    pub sector_construction: f64,
    pub sector_industry: f64,
    pub sector_services: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemographicRatios {
    pub male: f64,
    pub female: f64,
    pub age_0_17: f64,
    pub age_18_64: f64,
    pub age_65_plus: f64,
}

pub fn demographic_ratios(d: &Demographics) -> Result<DemographicRatios> {
    if d.pop_total == 0 {
        return Err(Error::EmptyPopulation(d.county_id.clone()));
    }
    let parts = [d.pop_male, d.pop_female, d.pop_age_0_17, d.pop_age_18_64, d.pop_age_65_plus];
    if parts.iter().any(|&c| c > d.pop_total) {
        return Err(Error::InvalidRecord(format!("{} {}: component count exceeds total", d.county_id, d.year)));
    }
    let total = d.pop_total as f64;
    Ok(DemographicRatios {
        male: d.pop_male as f64 / total,
        female: d.pop_female as f64 / total,
        age_0_17: d.pop_age_0_17 as f64 / total,
        age_18_64: d.pop_age_18_64 as f64 / total,
        age_65_plus: d.pop_age_65_plus as f64 / total,
    })
}

/// Kernel parameters for the two seasonal feature columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureParams {
    pub season: SeasonParams,
    pub hw: HwKernelParams,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams { season: SeasonParams::default(), hw: HwKernelParams { alpha: 1.0, lambda: 0.15 } }
    }
}

/// `(season_gaussian, hw_kernel)` at day-of-year `t` given heatwave onset
/// days expressed on the same axis.
pub fn seasonal_features(t: f64, season: &SeasonParams, onsets: &[f64], hw: &HwKernelParams) -> (f64, f64) {
    let kernel = onsets.iter().map(|&ti| g_hw(t - ti, hw)).sum();
    (g_season(t, season), kernel)
}

/// Day-of-year of the Thursday of an ISO week. The Thursday always lies in
/// the calendar year equal to the ISO year.
pub fn week_midpoint(year: i32, week: u32) -> Result<f64> {
    NaiveDate::from_isoywd_opt(year, week, Weekday::Thu)
        .map(|d| d.ordinal() as f64)
        .ok_or_else(|| Error::InvalidRecord(format!("no ISO week {week} in {year}")))
}

/// Offset of `date` on the day-of-year axis of `year` (may be ≤ 0 or > 366
/// for dates in neighbouring years).
pub fn day_of_year_in(date: NaiveDate, year: i32) -> f64 {
    let jan1 = NaiveDate::from_ymd_opt(year, 1, 1).expect("January 1st exists");
    (date - jan1).num_days() as f64 + 1.0
}

/// Number of ISO weeks (52 or 53) in an ISO year.
pub fn iso_weeks_in_year(year: i32) -> u32 {
    if NaiveDate::from_isoywd_opt(year, 53, Weekday::Mon).is_some() {
        53
    } else {
        52
    }
}

/// Canonical numeric feature columns, in output order.
pub const FEATURE_NAMES: [&str; 20] = [
    "t_max",
    "t_mean",
    "t_min",
    "vp",
    "vp_sat",
    "rh",
    "heatwave_indicator",
    "days_p95",
    "pop_total",
    "ratio_male",
    "ratio_female",
    "ratio_age_0_17",
    "ratio_age_18_64",
    "ratio_age_65_plus",
    "sector_agriculture",
    "sector_construction",
    "sector_industry",
    "sector_services",
    "season_gaussian",
    "hw_kernel",
];

/// One county × ISO-week row. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountyWeekRecord {
    pub county_id: String,
    pub region_id: String,
    pub year: i32,
    pub week: u32,
    pub t_max: f64,
    pub t_mean: f64,
    pub t_min: f64,
    pub vp: f64,
    pub vp_sat: f64,
    pub rh: f64,
    pub heatwave_indicator: u8,
    pub days_p95: u8,
    pub pop_total: f64,
    pub ratio_male: f64,
    pub ratio_female: f64,
    pub ratio_age_0_17: f64,
    pub ratio_age_18_64: f64,
    pub ratio_age_65_plus: f64,
    pub sector_agriculture: f64,
    pub sector_construction: f64,
    pub sector_industry: f64,
    pub sector_services: f64,
    pub season_gaussian: f64,
    pub hw_kernel: f64,
    pub target: Option<u64>,
}

impl CountyWeekRecord {
    pub fn features(&self) -> [f64; 20] {
        [
            self.t_max,
            self.t_mean,
            self.t_min,
            self.vp,
            self.vp_sat,
            self.rh,
            self.heatwave_indicator as f64,
            self.days_p95 as f64,
            self.pop_total,
            self.ratio_male,
            self.ratio_female,
            self.ratio_age_0_17,
            self.ratio_age_18_64,
            self.ratio_age_65_plus,
            self.sector_agriculture,
            self.sector_construction,
            self.sector_industry,
            self.sector_services,
            self.season_gaussian,
            self.hw_kernel,
        ]
    }

    pub fn key(&self) -> RowKey {
        RowKey { county_id: self.county_id.clone(), year: self.year, week: self.week }
    }

    pub fn validate(&self) -> Result<()> {
        let what = || format!("{} {}-W{:02}", self.county_id, self.year, self.week);
        if !(1..=53).contains(&self.week) {
            return Err(Error::InvalidRecord(format!("{}: week out of range", what())));
        }
        if self.features().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidRecord(format!("{}: non-finite feature", what())));
        }
        if self.heatwave_indicator > 1 || self.days_p95 > 7 {
            return Err(Error::InvalidRecord(format!("{}: heatwave fields out of range", what())));
        }
        if (self.ratio_male + self.ratio_female - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidRecord(format!("{}: sex ratios do not sum to 1", what())));
        }
        let ages = self.ratio_age_0_17 + self.ratio_age_18_64 + self.ratio_age_65_plus;
        if (ages - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidRecord(format!("{}: age ratios do not sum to 1", what())));
        }
        let sectors = [self.sector_agriculture, self.sector_construction, self.sector_industry, self.sector_services];
        if sectors.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::InvalidRecord(format!("{}: sector share outside [0, 1]", what())));
        }
        if !(0.0..=1.0).contains(&self.season_gaussian) || self.hw_kernel < 0.0 {
            return Err(Error::InvalidRecord(format!("{}: seasonal feature out of range", what())));
        }
        Ok(())
    }
}

impl Covariates for CountyWeekRecord {
    fn covariate(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES.iter().position(|&n| n == name).map(|i| self.features()[i])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RowKey {
    pub county_id: String,
    pub year: i32,
    pub week: u32,
}

/// Dense row-major feature table with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Vec<Vec<f64>>,
    pub column_names: Vec<String>,
    pub row_keys: Vec<RowKey>,
}

impl FeatureMatrix {
    pub fn new(rows: Vec<Vec<f64>>, column_names: Vec<String>, row_keys: Vec<RowKey>) -> Result<Self> {
        let d = column_names.len();
        if row_keys.len() != rows.len() {
            return Err(Error::DimensionMismatch { expected: rows.len(), found: row_keys.len() });
        }
        for row in &rows {
            if row.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: row.len() });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidRecord("non-finite entry in feature matrix".into()));
            }
        }
        Ok(FeatureMatrix { rows, column_names, row_keys })
    }

    /// Builds the matrix with the canonical feature columns.
    pub fn from_records(records: &[CountyWeekRecord]) -> Result<Self> {
        Self::new(
            records.iter().map(|r| r.features().to_vec()).collect(),
            FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            records.iter().map(CountyWeekRecord::key).collect(),
        )
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }
}

/// Joins daily climate and yearly demographics into county-week rows.
///
/// Per county: the climatological p95 is taken over the county's whole daily
/// history, heatwave episodes are detected on the full series, and weeks with
/// fewer than [`MIN_DAYS_PER_WEEK`] days are dropped. Output is sorted by
/// county, ISO year and week.
pub fn build_county_weeks(
    daily: &[DailyClimateRecord],
    demographics: &[Demographics],
    params: &FeatureParams,
) -> Result<Vec<CountyWeekRecord>> {
    let mut by_county: BTreeMap<&str, Vec<&DailyClimateRecord>> = BTreeMap::new();
    for d in daily {
        d.validate()?;
        by_county.entry(d.county_id.as_str()).or_default().push(d);
    }
    let mut demo: BTreeMap<(&str, i32), &Demographics> = BTreeMap::new();
    for d in demographics {
        if demo.insert((d.county_id.as_str(), d.year), d).is_some() {
            return Err(Error::InvalidRecord(format!("duplicate demographics for {} {}", d.county_id, d.year)));
        }
    }

    let mut out = Vec::new();
    for (county, mut days) in by_county {
        days.sort_by_key(|d| d.date);
        if days.iter().any(|d| d.region_id != days[0].region_id) {
            return Err(Error::InconsistentGrouping(format!("county {county} listed under several regions")));
        }
        let tmax: Vec<f64> = days.iter().map(|d| d.tmax).collect();
        let p95 = climatological_p95(&tmax)?;
        let series: Vec<(NaiveDate, f64)> = days.iter().map(|d| (d.date, d.tmax)).collect();
        let scan = heatwave_weeks(&series, p95)?;

        let mut weeks: BTreeMap<(i32, u32), Vec<DailyClimateRecord>> = BTreeMap::new();
        for d in &days {
            let iw = d.date.iso_week();
            weeks.entry((iw.year(), iw.week())).or_default().push((*d).clone());
        }
        for ((year, week), week_days) in weeks {
            if week_days.len() < MIN_DAYS_PER_WEEK {
                continue;
            }
            let climate = aggregate_daily_to_weekly(&week_days)?;
            let week_tmax: Vec<f64> = week_days.iter().map(|d| d.tmax).collect();
            let days_p95 = compute_days_p95(&week_tmax, p95)?;
            let dem = demo
                .get(&(county, year))
                .ok_or_else(|| Error::InvalidRecord(format!("no demographics for {county} {year}")))?;
            let ratios = demographic_ratios(dem)?;
            let t = week_midpoint(year, week)?;
            let onsets: Vec<f64> = scan.onsets.iter().map(|&o| day_of_year_in(o, year)).collect();
            let (season_gaussian, hw_kernel) = seasonal_features(t, &params.season, &onsets, &params.hw);
            let record = CountyWeekRecord {
                county_id: climate.county_id,
                region_id: climate.region_id,
                year,
                week,
                t_max: climate.t_max,
                t_mean: climate.t_mean,
                t_min: climate.t_min,
                vp: climate.vp,
                vp_sat: climate.vp_sat,
                rh: climate.rh,
                heatwave_indicator: scan.weeks.contains(&(year, week)) as u8,
                days_p95,
                pop_total: dem.pop_total as f64,
                ratio_male: ratios.male,
                ratio_female: ratios.female,
                ratio_age_0_17: ratios.age_0_17,
                ratio_age_18_64: ratios.age_18_64,
                ratio_age_65_plus: ratios.age_65_plus,
                sector_agriculture: dem.sector_agriculture,
                sector_construction: dem.sector_construction,
                sector_industry: dem.sector_industry,
                sector_services: dem.sector_services,
                season_gaussian,
                hw_kernel,
                target: None,
            };
            record.validate()?;
            out.push(record);
        }
    }
    Ok(out)
}

fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::format(path, e))?;
    reader.deserialize().map(|row| row.map_err(|e| Error::format(path, e))).collect()
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::format(path, e))?;
    for row in rows {
        writer.serialize(row).map_err(|e| Error::format(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

const DAILY_HEADER: &str = "county_id,region_id,date,tmax,tmean,tmin,vp,vp_sat,rh";
const DEMOGRAPHICS_HEADER: &str = "county_id,year,pop_total,pop_male,pop_female,pop_age_0_17,pop_age_18_64,\
pop_age_65_plus,sector_agriculture,sector_construction,sector_industry,sector_services";

fn check_header(path: &Path, expected: &str) -> Result<()> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::format(path, e))?;
    let found = reader.headers().map_err(|e| Error::format(path, e))?.iter().collect::<Vec<_>>().join(",");
    if found != expected {
        return Err(Error::ColumnMismatch { expected: expected.to_string(), found });
    }
    Ok(())
}

pub fn read_daily_climate(path: &Path) -> Result<Vec<DailyClimateRecord>> {
    check_header(path, DAILY_HEADER)?;
    read_csv(path)
}

pub fn write_daily_climate(path: &Path, rows: &[DailyClimateRecord]) -> Result<()> {
    write_csv(path, rows)
}

pub fn read_demographics(path: &Path) -> Result<Vec<Demographics>> {
    check_header(path, DEMOGRAPHICS_HEADER)?;
    read_csv(path)
}

pub fn write_demographics(path: &Path, rows: &[Demographics]) -> Result<()> {
    write_csv(path, rows)
}

pub fn county_week_header() -> String {
    let mut cols = vec!["county_id", "region_id", "year", "week"];
    cols.extend(FEATURE_NAMES);
    cols.push("target");
    cols.join(",")
}

pub fn write_county_weeks(path: &Path, rows: &[CountyWeekRecord]) -> Result<()> {
    write_csv(path, rows)
}

pub fn read_county_weeks(path: &Path) -> Result<Vec<CountyWeekRecord>> {
    check_header(path, &county_week_header())?;
    let rows: Vec<CountyWeekRecord> = read_csv(path)?;
    for r in &rows {
        r.validate()?;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn day(date: NaiveDate, tmax: f64, tmean: f64, tmin: f64, rh: f64) -> DailyClimateRecord {
        DailyClimateRecord {
            county_id: "c1".into(),
            region_id: "r1".into(),
            date,
            tmax,
            tmean,
            tmin,
            vp: 1000.0,
            vp_sat: 2000.0,
            rh,
        }
    }

    fn monday() -> NaiveDate {
        NaiveDate::from_isoywd_opt(2021, 28, Weekday::Mon).unwrap()
    }

    fn week(tmax: &[f64]) -> Vec<DailyClimateRecord> {
        tmax.iter()
            .enumerate()
            .map(|(i, &t)| day(monday() + chrono::Days::new(i as u64), t, t - 5.0, t - 10.0, 0.5))
            .collect()
    }

    #[test]
    fn weekly_max_min_and_means() {
        let w = aggregate_daily_to_weekly(&week(&[30., 31., 35., 33., 29., 28., 30.])).unwrap();
        assert_eq!(w.t_max, 35.0);
        assert_eq!(w.t_min, 18.0);
        assert_eq!(w.rh, 0.5);
        assert_eq!((w.year, w.week), (2021, 28));

        let single = aggregate_daily_to_weekly(&[day(monday(), 25.0, 20.0, 15.0, 0.3)]).unwrap();
        assert_eq!(single.t_mean, 20.0);
    }

    #[test]
    fn aggregation_errors() {
        assert!(matches!(aggregate_daily_to_weekly(&[]), Err(Error::EmptyWeek)));
        let mut days = week(&[30.0; 2]);
        days[1].county_id = "c2".into();
        assert!(matches!(aggregate_daily_to_weekly(&days), Err(Error::InconsistentGrouping(_))));
        let mut days = week(&[30.0; 2]);
        days[1].date = monday() + chrono::Days::new(7);
        assert!(matches!(aggregate_daily_to_weekly(&days), Err(Error::InconsistentGrouping(_))));
    }

    #[test]
    fn days_above_threshold() {
        assert_eq!(compute_days_p95(&[30., 31., 35., 33., 29., 28., 30.], 32.0).unwrap(), 2);
        assert_eq!(compute_days_p95(&[30.0; 7], 30.0).unwrap(), 0);
        assert!(compute_days_p95(&[30.0; 7], f64::INFINITY).is_err());
        assert!(compute_days_p95(&[30.0; 7], f64::MAX).is_err());
        assert!(compute_days_p95(&[30.0; 7], f64::NAN).is_err());
    }

    #[test]
    fn nearest_rank_percentile() {
        let grid: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(climatological_p95(&grid).unwrap(), 95.0);
        assert_eq!(climatological_p95(&[25.0; 200]).unwrap(), 25.0);
        assert!(matches!(
            climatological_p95(&[1.0; 99]),
            Err(Error::InsufficientHistory { got: 99, need: 100 })
        ));
    }

    #[test]
    fn nearest_rank_on_shuffled_grid_matches_sort_and_index() {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut values: Vec<f64> = (1..=1000).map(f64::from).collect();
        values.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(7));
        // Oracle: sort, then 1-based rank ceil(0.95 * 1000) = 950.
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let expected = sorted[950 - 1];
        assert_eq!(expected, 950.0);
        assert_eq!(climatological_p95(&values).unwrap(), expected);
    }

    fn series(start: NaiveDate, tmax: &[f64]) -> Vec<(NaiveDate, f64)> {
        tmax.iter().enumerate().map(|(i, &t)| (start + chrono::Days::new(i as u64), t)).collect()
    }

    #[test]
    fn three_day_run_flags_week() {
        let s = series(monday(), &[20., 36., 36., 36., 20., 20., 20.]);
        let scan = heatwave_weeks(&s, 35.0).unwrap();
        assert_eq!(scan.weeks.into_iter().collect::<Vec<_>>(), vec![(2021, 28)]);
        assert_eq!(scan.onsets, vec![monday() + chrono::Days::new(1)]);
    }

    #[test]
    fn two_day_run_is_not_a_heatwave() {
        let s = series(monday(), &[20., 36., 36., 20., 36., 36., 20.]);
        let scan = heatwave_weeks(&s, 35.0).unwrap();
        assert!(scan.weeks.is_empty());
        assert!(scan.onsets.is_empty());
    }

    /// Brute-force oracle: for each day, look for any window of three
    /// consecutive hot days containing it.
    fn brute_force_weeks(s: &[(NaiveDate, f64)], p95: f64) -> (BTreeSet<(i32, u32)>, usize) {
        let hot: Vec<bool> = s.iter().map(|&(_, t)| t > p95).collect();
        let mut weeks = BTreeSet::new();
        for i in 0..s.len() {
            let in_run = (0..HEATWAVE_RUN).any(|off| {
                i >= off && i - off + HEATWAVE_RUN <= s.len() && hot[i - off..i - off + HEATWAVE_RUN].iter().all(|&h| h)
            });
            if in_run {
                let iw = s[i].0.iso_week();
                weeks.insert((iw.year(), iw.week()));
            }
        }
        let mut onsets = 0;
        for i in 0..s.len() {
            let starts = hot[i] && (i == 0 || !hot[i - 1]);
            let long = i + HEATWAVE_RUN <= s.len() && hot[i..i + HEATWAVE_RUN].iter().all(|&h| h);
            if starts && long {
                onsets += 1;
            }
        }
        (weeks, onsets)
    }

    #[test]
    fn five_day_episode_across_week_boundary() {
        // Friday to Tuesday.
        let start = monday();
        let mut tmax = vec![20.0; 14];
        for t in tmax.iter_mut().skip(4).take(5) {
            *t = 38.0;
        }
        let s = series(start, &tmax);
        let scan = heatwave_weeks(&s, 35.0).unwrap();
        let (weeks, onsets) = brute_force_weeks(&s, 35.0);
        assert_eq!(scan.weeks, weeks);
        assert_eq!(scan.weeks.len(), 2);
        assert_eq!(scan.onsets.len(), onsets);
        assert_eq!(scan.onsets.len(), 1);
    }

    #[test]
    fn gaps_break_runs_and_unsorted_input_is_rejected() {
        let a = monday();
        let s = vec![(a, 40.0), (a + chrono::Days::new(1), 40.0), (a + chrono::Days::new(3), 40.0)];
        assert!(heatwave_weeks(&s, 35.0).unwrap().onsets.is_empty());
        let rev = vec![(a + chrono::Days::new(1), 40.0), (a, 40.0)];
        assert!(heatwave_weeks(&rev, 35.0).is_err());
    }

    #[test]
    fn ratios() {
        let d = Demographics {
            county_id: "c".into(),
            year: 2020,
            pop_total: 1000,
            pop_male: 500,
            pop_female: 500,
            pop_age_0_17: 200,
            pop_age_18_64: 600,
            pop_age_65_plus: 200,
            sector_agriculture: 0.1,
            sector_construction: 0.1,
            sector_industry: 0.2,
            sector_services: 0.6,
        };
        let r = demographic_ratios(&d).unwrap();
        assert_eq!(r.male, 0.5);
        assert_eq!((r.age_0_17, r.age_18_64, r.age_65_plus), (0.2, 0.6, 0.2));
        let empty = Demographics { pop_total: 0, ..d.clone() };
        assert!(matches!(demographic_ratios(&empty), Err(Error::EmptyPopulation(_))));
        let too_many = Demographics { pop_male: 1001, ..d };
        assert!(demographic_ratios(&too_many).is_err());
    }

    #[test]
    fn seasonal_feature_values() {
        let season = SeasonParams { mu: 196.0, sigma: 43.0 };
        let hw = HwKernelParams { alpha: 1.0, lambda: 0.15 };
        assert_eq!(seasonal_features(196.0, &season, &[], &hw), (1.0, 0.0));
        let (g, _) = seasonal_features(196.0 + 43.0, &season, &[], &hw);
        assert!((g - (-0.5f64).exp()).abs() < 1e-15);
        assert!((g - 0.606531).abs() < 1e-6);
        assert_eq!(seasonal_features(150.0, &season, &[150.0], &hw).1, 1.0);
    }

    #[test]
    fn thursday_midpoint() {
        // 2021-W01 runs Mon 4 Jan to Sun 10 Jan.
        assert_eq!(week_midpoint(2021, 1).unwrap(), 7.0);
        // 2020-W53 Thursday is 31 Dec 2020.
        assert_eq!(week_midpoint(2020, 53).unwrap(), 366.0);
        assert!(week_midpoint(2021, 53).is_err());
        assert_eq!(iso_weeks_in_year(2020), 53);
        assert_eq!(iso_weeks_in_year(2021), 52);
        assert_eq!(day_of_year_in(NaiveDate::from_ymd_opt(2020, 12, 31).unwrap(), 2021), 0.0);
    }

    #[test]
    fn header_matches_field_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cw.csv");
        write_county_weeks(&path, &[]).unwrap();
        // An empty serialization writes no header; write one record instead.
        let rec = CountyWeekRecord {
            county_id: "c".into(),
            region_id: "r".into(),
            year: 2021,
            week: 1,
            t_max: 1.0,
            t_mean: 0.5,
            t_min: 0.0,
            vp: 1.0,
            vp_sat: 2.0,
            rh: 0.5,
            heatwave_indicator: 0,
            days_p95: 0,
            pop_total: 10.0,
            ratio_male: 0.5,
            ratio_female: 0.5,
            ratio_age_0_17: 0.25,
            ratio_age_18_64: 0.5,
            ratio_age_65_plus: 0.25,
            sector_agriculture: 0.1,
            sector_construction: 0.2,
            sector_industry: 0.3,
            sector_services: 0.4,
            season_gaussian: 0.1,
            hw_kernel: 0.0,
            target: None,
        };
        write_county_weeks(&path, std::slice::from_ref(&rec)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), county_week_header());
        assert!(text.lines().nth(1).unwrap().ends_with(','));
        assert_eq!(read_county_weeks(&path).unwrap(), vec![rec]);
    }

    proptest! {
        #[test]
        fn aggregation_is_order_free(
            temps in proptest::collection::vec((-10.0f64..40.0, 0.0f64..8.0, 0.0f64..8.0, 0.0f64..1.0), 1..=7),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let days: Vec<DailyClimateRecord> = temps
                .iter()
                .enumerate()
                .map(|(i, &(mean, up, down, rh))| {
                    day(monday() + chrono::Days::new(i as u64), mean + up, mean, mean - down, rh)
                })
                .collect();
            let mut shuffled = days.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = aggregate_daily_to_weekly(&days).unwrap();
            let b = aggregate_daily_to_weekly(&shuffled).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(a.t_min <= a.t_mean && a.t_mean <= a.t_max);
        }

        #[test]
        fn heatwave_scan_survives_split_at_week_boundary(
            tmax in proptest::collection::vec(prop_oneof![Just(20.0f64), Just(40.0f64)], 28),
            cut_week in 1usize..4,
        ) {
            let s = series(monday(), &tmax);
            let whole = heatwave_weeks(&s, 35.0).unwrap();
            let (head, tail) = s.split_at(cut_week * 7);
            let rejoined: Vec<_> = head.iter().chain(tail.iter()).copied().collect();
            prop_assert_eq!(&whole, &heatwave_weeks(&rejoined, 35.0).unwrap());
            let (weeks, onsets) = brute_force_weeks(&s, 35.0);
            prop_assert_eq!(&whole.weeks, &weeks);
            prop_assert_eq!(whole.onsets.len(), onsets);
        }

        #[test]
        fn seasonal_features_stay_in_range(
            t in -400.0f64..800.0,
            mu in 1.0f64..366.0,
            sigma in 0.5f64..100.0,
            onsets in proptest::collection::vec(-50.0f64..400.0, 0..5),
            alpha in 0.0f64..5.0,
            lambda in 0.01f64..2.0,
        ) {
            let (g, k) = seasonal_features(
                t,
                &SeasonParams { mu, sigma },
                &onsets,
                &HwKernelParams { alpha, lambda },
            );
            prop_assert!(g >= 0.0 && g <= 1.0);
            prop_assert!(k >= 0.0);
        }
    }
}
