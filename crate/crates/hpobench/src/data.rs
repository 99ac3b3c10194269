//! Loading, deduplicating, scaling, and summarizing hourly demand data, plus
//! a seeded synthetic generator used when no real CSV is supplied.

use chrono::{Datelike, NaiveDateTime, Timelike};

use crate::error::{Error, Result};
use crate::rng::{randn, seeded_rng};

/// Hourly demand series with exogenous columns, stored row-major.
#[derive(Debug, Clone)]
pub struct TimeSeriesFrame {
    pub timestamps: Vec<NaiveDateTime>,
    /// Demand in MWh (or scaled units once `scaling` is set).
    pub target: Vec<f64>,
    /// Row-major `n x d` exogenous matrix, `d = feature_names.len()`.
    pub features: Vec<f64>,
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub scaling: Option<ScalingParams>,
}

impl TimeSeriesFrame {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature(&self, row: usize, col: usize) -> f64 {
        self.features[row * self.n_features() + col]
    }
}

/// Per-column min/max captured when scaling, kept for inverse transforms.
#[derive(Debug, Clone)]
pub struct ScalingParams {
    pub target_min: f64,
    pub target_max: f64,
    pub feature_min: Vec<f64>,
    pub feature_max: Vec<f64>,
}

impl ScalingParams {
    /// True when the target column had no spread and was scaled to 0.
    pub fn target_constant(&self) -> bool {
        self.target_max <= self.target_min
    }

    pub fn feature_constant(&self, col: usize) -> bool {
        self.feature_max[col] <= self.feature_min[col]
    }

    /// Maps a scaled target value back to original units.
    pub fn inverse_target(&self, y: f64) -> f64 {
        if self.target_constant() {
            self.target_min
        } else {
            y * (self.target_max - self.target_min) + self.target_min
        }
    }
}

/// Column summary in original units.
#[derive(Debug, Clone)]
pub struct ColumnStats {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone)]
pub struct DescriptiveStats {
    pub columns: Vec<ColumnStats>,
}

/// Expected CSV column names; everything else is matched by prefix.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub datetime_col: String,
    pub target_col: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema { datetime_col: "datetime".into(), target_col: "nat_demand".into() }
    }
}

const DATETIME_FORMATS: &[&str] = &[
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M",
    "%d-%m-%Y %H:%M",
    "%d-%m-%Y %H:%M:%S",
];

fn parse_datetime(s: &str) -> Option<NaiveDateTime> {
    DATETIME_FORMATS.iter().find_map(|f| NaiveDateTime::parse_from_str(s.trim(), f).ok())
}

/// Column-name filter for exogenous inputs: per-station weather series and
/// the calendar flags.
fn is_exogenous(name: &str) -> bool {
    ["T2M_", "QV2M_", "W2M_", "TQL_"].iter().any(|p| name.starts_with(p))
        || name == "holiday"
        || name == "school"
}

/// Reads a demand CSV into a frame, in file order, unscaled.
pub fn load_csv(path: &std::path::Path, schema: &CsvSchema) -> Result<TimeSeriesFrame> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.to_string()).collect();

    let dt_col = headers
        .iter()
        .position(|h| h == &schema.datetime_col)
        .ok_or_else(|| Error::Schema(format!("missing datetime column `{}`", schema.datetime_col)))?;
    let target_col = headers
        .iter()
        .position(|h| h == &schema.target_col)
        .ok_or_else(|| Error::Schema(format!("missing target column `{}`", schema.target_col)))?;
    let exog_cols: Vec<usize> = (0..headers.len())
        .filter(|&i| i != dt_col && i != target_col && is_exogenous(&headers[i]))
        .collect();
    let feature_names: Vec<String> = exog_cols.iter().map(|&i| headers[i].clone()).collect();

    let mut timestamps = Vec::new();
    let mut target = Vec::new();
    let mut features = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2; // 1-based, after the header row
        let rec = rec?;
        let raw_ts = rec.get(dt_col).unwrap_or("");
        let ts = parse_datetime(raw_ts).ok_or_else(|| Error::ParseRow {
            line,
            msg: format!("unparsable datetime `{raw_ts}`"),
        })?;
        let parse_num = |col: usize| -> Result<f64> {
            let raw = rec.get(col).unwrap_or("");
            raw.parse::<f64>().map_err(|_| Error::ParseRow {
                line,
                msg: format!("unparsable numeric `{raw}` in column `{}`", headers[col]),
            })
        };
        timestamps.push(ts);
        target.push(parse_num(target_col)?);
        for &c in &exog_cols {
            features.push(parse_num(c)?);
        }
    }

    Ok(TimeSeriesFrame {
        timestamps,
        target,
        features,
        feature_names,
        target_name: schema.target_col.clone(),
        scaling: None,
    })
}

/// Sorts chronologically and keeps the first occurrence of each timestamp.
pub fn dedup_by_index(frame: &TimeSeriesFrame) -> TimeSeriesFrame {
    let d = frame.n_features();
    let mut order: Vec<usize> = (0..frame.len()).collect();
    order.sort_by_key(|&i| frame.timestamps[i]); // stable: ties keep file order
    let mut out = TimeSeriesFrame {
        timestamps: Vec::with_capacity(frame.len()),
        target: Vec::with_capacity(frame.len()),
        features: Vec::with_capacity(frame.features.len()),
        feature_names: frame.feature_names.clone(),
        target_name: frame.target_name.clone(),
        scaling: frame.scaling.clone(),
    };
    for &i in &order {
        if out.timestamps.last() == Some(&frame.timestamps[i]) {
            continue;
        }
        out.timestamps.push(frame.timestamps[i]);
        out.target.push(frame.target[i]);
        out.features.extend_from_slice(&frame.features[i * d..(i + 1) * d]);
    }
    out
}

fn minmax(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

fn scale(v: f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        0.0 // constant column: defined as 0 rather than dividing by zero
    } else {
        (v - lo) / (hi - lo)
    }
}

/// Min-max scales every numeric column into `[0,1]` and returns the
/// parameters needed to undo the target transform.
pub fn fit_apply_minmax(frame: &TimeSeriesFrame) -> Result<(TimeSeriesFrame, ScalingParams)> {
    if frame.is_empty() {
        return Err(Error::Bounds("cannot scale an empty frame".into()));
    }
    let d = frame.n_features();
    let (target_min, target_max) = minmax(frame.target.iter().copied());
    let mut feature_min = vec![f64::INFINITY; d];
    let mut feature_max = vec![f64::NEG_INFINITY; d];
    for row in 0..frame.len() {
        for col in 0..d {
            let v = frame.feature(row, col);
            feature_min[col] = feature_min[col].min(v);
            feature_max[col] = feature_max[col].max(v);
        }
    }
    let params = ScalingParams { target_min, target_max, feature_min, feature_max };

    let mut scaled = frame.clone();
    for y in &mut scaled.target {
        *y = scale(*y, target_min, target_max);
    }
    for row in 0..frame.len() {
        for col in 0..d {
            scaled.features[row * d + col] =
                scale(frame.feature(row, col), params.feature_min[col], params.feature_max[col]);
        }
    }
    scaled.scaling = Some(params.clone());
    Ok((scaled, params))
}

fn column_stats(name: &str, values: impl Iterator<Item = f64> + Clone) -> ColumnStats {
    let n = values.clone().count();
    let (min, max) = minmax(values.clone());
    let mean = values.clone().sum::<f64>() / n as f64;
    let sd = if n < 2 {
        0.0
    } else {
        (values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    ColumnStats { name: name.to_string(), min, max, mean, sd }
}

/// Per-column min/max/mean/sd with the sample (n-1) standard deviation.
///
/// Meant to run before scaling so the summary is in original units.
pub fn describe(frame: &TimeSeriesFrame) -> Result<DescriptiveStats> {
    if frame.is_empty() {
        return Err(Error::Bounds("cannot describe an empty frame".into()));
    }
    let mut columns =
        vec![column_stats(&frame.target_name, frame.target.iter().copied())];
    for (col, name) in frame.feature_names.iter().enumerate() {
        columns.push(column_stats(name, (0..frame.len()).map(|row| frame.feature(row, col))));
    }
    Ok(DescriptiveStats { columns })
}

/// First `size` chronologically ordered rows.
pub fn take_sample(frame: &TimeSeriesFrame, size: usize) -> Result<TimeSeriesFrame> {
    if size == 0 || size > frame.len() {
        return Err(Error::Bounds(format!(
            "sample size {size} outside 1..={}",
            frame.len()
        )));
    }
    let d = frame.n_features();
    Ok(TimeSeriesFrame {
        timestamps: frame.timestamps[..size].to_vec(),
        target: frame.target[..size].to_vec(),
        features: frame.features[..size * d].to_vec(),
        feature_names: frame.feature_names.clone(),
        target_name: frame.target_name.clone(),
        scaling: frame.scaling.clone(),
    })
}

/// Fixed day-of-year holidays used by the synthetic calendar.
const SYNTH_HOLIDAYS: &[u32] = &[1, 50, 121, 185, 244, 306, 359];

/// Deterministic synthetic demand series, schema-compatible with the real
/// CSV: hourly timestamps, `nat_demand`, one temperature station, and
/// holiday/school flags.
///
/// Demand combines a daily sinusoid, a weekly sinusoid, a cooling term
/// coupled to the temperature anomaly (an AR(1) process riding on the daily
/// cycle), calendar-flag shifts, and Gaussian noise. Thermal inertia delays
/// the cooling response: demand at hour `t` tracks the anomaly from
/// `RESPONSE_LAG` hours earlier. That delay is what makes the temperature
/// column genuinely informative — the anomaly steps inside the response
/// window have already been printed in the temperature readings but have not
/// yet reached demand, so demand lags alone cannot see them coming.
pub fn synth_demand(n: usize, seed: u64) -> Result<TimeSeriesFrame> {
    if n == 0 {
        return Err(Error::Bounds("synthetic series needs n > 0".into()));
    }
    let mut rng = seeded_rng(seed);
    let start = NaiveDateTime::parse_from_str("2015-01-01 00:00:00", "%Y-%m-%d %H:%M:%S")
        .expect("literal timestamp");

    const RESPONSE_LAG: usize = 2; // hours for buildings to feel a temperature swing

    let phi = 0.85; // hourly persistence of the temperature anomaly
    let innovation_sd = 0.8;
    let mut anomaly = 0.0;
    let mut pipeline = [0.0; RESPONSE_LAG]; // anomalies still travelling towards demand
    for _ in 0..48 {
        anomaly = phi * anomaly + innovation_sd * randn(&mut rng); // burn-in
        pipeline.rotate_left(1);
        pipeline[RESPONSE_LAG - 1] = anomaly;
    }

    let mut timestamps = Vec::with_capacity(n);
    let mut target = Vec::with_capacity(n);
    let mut features = Vec::with_capacity(n * 3);
    for t in 0..n {
        let ts = start + chrono::Duration::hours(t as i64);
        let hour = ts.hour() as f64;
        let hour_of_week =
            ts.weekday().num_days_from_monday() as f64 * 24.0 + hour;
        anomaly = phi * anomaly + innovation_sd * randn(&mut rng);
        let felt_anomaly = pipeline[0];
        pipeline.rotate_left(1);
        pipeline[RESPONSE_LAG - 1] = anomaly;

        let daily = (std::f64::consts::TAU * (hour - 9.0) / 24.0).sin();
        let weekly = (std::f64::consts::TAU * (hour_of_week - 60.0) / 168.0).sin();
        let holiday = SYNTH_HOLIDAYS.contains(&ts.ordinal()) as u32;
        let school = matches!(ts.month(), 2..=5 | 9..=11) as u32;

        let temperature = 27.0 + 3.0 * daily + anomaly;
        let demand = (1180.0 + 120.0 * daily + 45.0 * weekly + 40.0 * felt_anomaly
            - 95.0 * holiday as f64
            + 25.0 * school as f64
            + 12.0 * randn(&mut rng))
        .max(100.0);

        timestamps.push(ts);
        target.push(demand);
        features.push(temperature);
        features.push(holiday as f64);
        features.push(school as f64);
    }

    Ok(TimeSeriesFrame {
        timestamps,
        target,
        features,
        feature_names: vec!["T2M_toc".into(), "holiday".into(), "school".into()],
        target_name: "nat_demand".into(),
        scaling: None,
    })
}
