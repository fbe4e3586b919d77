//! Raw-data ingestion and preparation: CSV loading, day-level cleaning,
//! imputation, hourly downsampling, chronological splits, and sliding
//! windows for both forecasting tasks.

mod windows;

pub use windows::{to_task2, NoiseSpec, TaskKind, WindowSample, Windows};

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use chrono::{Duration, NaiveDate, NaiveDateTime, Timelike};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("duplicate timestamp {0}")]
    DuplicateTimestamp(NaiveDateTime),
    #[error("empty file")]
    EmptyFile,
    #[error("header does not match expected schema: {0}")]
    SchemaMismatch(String),
    #[error("all days removed by cleaning")]
    EmptyResult,
    #[error("unimputable gap in column {column} around {at}")]
    UnimputableGap { column: String, at: NaiveDateTime },
    #[error("split ratios invalid: {0}")]
    InvalidSplit(String),
    #[error("partition too small: {partition} has {rows} rows, need {min}")]
    TooSmall {
        partition: &'static str,
        rows: usize,
        min: usize,
    },
    #[error("source frame lacks the {0} future rows required for task 2")]
    MissingFuture(usize),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Timestamped multivariate series; rows are time points, columns features.
#[derive(Debug, Clone)]
pub struct TimeSeriesFrame {
    timestamps: Vec<NaiveDateTime>,
    values: Vec<f64>,
    missing: Vec<bool>,
    feature_names: Vec<String>,
    target_index: usize,
}

/// Chronological train/val/test ratios.
#[derive(Debug, Clone, Copy)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitSpec {
    /// Standard 60/20/20 chronological split.
    pub const DEFAULT: SplitSpec = SplitSpec {
        train: 0.6,
        val: 0.2,
        test: 0.2,
    };

    pub fn validate(&self) -> Result<(), DatasetError> {
        let all_in_range = [self.train, self.val, self.test]
            .iter()
            .all(|&r| r > 0.0 && r < 1.0);
        if !all_in_range {
            return Err(DatasetError::InvalidSplit(
                "each ratio must lie in (0, 1)".into(),
            ));
        }
        let sum = self.train + self.val + self.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DatasetError::InvalidSplit(format!("ratios sum to {sum}")));
        }
        Ok(())
    }
}

impl TimeSeriesFrame {
    pub fn new(
        timestamps: Vec<NaiveDateTime>,
        values: Vec<f64>,
        missing: Vec<bool>,
        feature_names: Vec<String>,
        target_index: usize,
    ) -> Self {
        let d = feature_names.len();
        assert_eq!(values.len(), timestamps.len() * d);
        assert_eq!(missing.len(), values.len());
        assert!(target_index < d);
        assert!(
            timestamps.windows(2).all(|w| w[0] < w[1]),
            "timestamps must be strictly increasing"
        );
        Self {
            timestamps,
            values,
            missing,
            feature_names,
            target_index,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.timestamps.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn target_index(&self) -> usize {
        self.target_index
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn timestamps(&self) -> &[NaiveDateTime] {
        &self.timestamps
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_features() + col]
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.missing[row * self.n_features() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let d = self.n_features();
        &self.values[row * d..(row + 1) * d]
    }

    pub fn any_missing(&self) -> bool {
        self.missing.iter().any(|&m| m)
    }

    /// Sample step, inferred from the smallest timestamp delta.
    pub fn granularity(&self) -> Duration {
        self.timestamps
            .windows(2)
            .map(|w| w[1] - w[0])
            .min()
            .unwrap_or_else(|| Duration::hours(1))
    }

    /// Per-feature standard deviation (population), ignoring missing cells.
    pub fn feature_std(&self) -> Vec<f64> {
        let d = self.n_features();
        let mut out = vec![0.0; d];
        for j in 0..d {
            let vals: Vec<f64> = (0..self.n_rows())
                .filter(|&i| !self.is_missing(i, j))
                .map(|i| self.value(i, j))
                .collect();
            if vals.is_empty() {
                continue;
            }
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            out[j] = var.sqrt();
        }
        out
    }

    fn day_ranges(&self) -> Vec<(NaiveDate, std::ops::Range<usize>)> {
        let mut out: Vec<(NaiveDate, std::ops::Range<usize>)> = Vec::new();
        for (i, ts) in self.timestamps.iter().enumerate() {
            let date = ts.date();
            match out.last_mut() {
                Some((d, r)) if *d == date => r.end = i + 1,
                _ => out.push((date, i..i + 1)),
            }
        }
        out
    }

    fn select_rows(&self, keep: &[std::ops::Range<usize>]) -> Self {
        let d = self.n_features();
        let mut timestamps = Vec::new();
        let mut values = Vec::new();
        let mut missing = Vec::new();
        for r in keep {
            timestamps.extend_from_slice(&self.timestamps[r.clone()]);
            values.extend_from_slice(&self.values[r.start * d..r.end * d]);
            missing.extend_from_slice(&self.missing[r.start * d..r.end * d]);
        }
        Self {
            timestamps,
            values,
            missing,
            feature_names: self.feature_names.clone(),
            target_index: self.target_index,
        }
    }

    pub fn slice_rows(&self, range: std::ops::Range<usize>) -> Self {
        self.select_rows(&[range])
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), DatasetError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "timestamp,{}", self.feature_names.join(","))?;
        for i in 0..self.n_rows() {
            write!(f, "{}", self.timestamps[i].format("%Y-%m-%dT%H:%M:%S"))?;
            for j in 0..self.n_features() {
                if self.is_missing(i, j) {
                    write!(f, ",")?;
                } else {
                    write!(f, ",{}", self.value(i, j))?;
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S"))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M"))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M"))
        .ok()
}

/// Load a `timestamp,<features...>` CSV. Empty or non-numeric cells become
/// missing; rows are sorted by timestamp. `schema`, when given, must match
/// the header's feature names exactly.
pub fn load_csv(path: &Path, schema: Option<&[&str]>) -> Result<TimeSeriesFrame, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| DatasetError::MalformedRow {
            line: 0,
            reason: e.to_string(),
        })?;
    let headers = rdr
        .headers()
        .map_err(|e| DatasetError::MalformedRow {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    if headers.len() < 2 || headers.get(0) != Some("timestamp") {
        return Err(DatasetError::SchemaMismatch(
            "first column must be 'timestamp'".into(),
        ));
    }
    let feature_names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    if let Some(expected) = schema {
        if feature_names.len() != expected.len()
            || feature_names.iter().zip(expected).any(|(a, b)| a != b)
        {
            return Err(DatasetError::SchemaMismatch(format!(
                "expected features {:?}, got {:?}",
                expected, feature_names
            )));
        }
    }
    let d = feature_names.len();
    let mut rows: Vec<(NaiveDateTime, Vec<f64>, Vec<bool>)> = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let line = idx + 2;
        let rec = rec.map_err(|e| DatasetError::MalformedRow {
            line,
            reason: e.to_string(),
        })?;
        if rec.len() != d + 1 {
            return Err(DatasetError::MalformedRow {
                line,
                reason: format!("expected {} fields, got {}", d + 1, rec.len()),
            });
        }
        let ts = parse_timestamp(rec.get(0).unwrap().trim()).ok_or_else(|| {
            DatasetError::MalformedRow {
                line,
                reason: format!("unparseable timestamp {:?}", rec.get(0).unwrap()),
            }
        })?;
        let mut vals = Vec::with_capacity(d);
        let mut miss = Vec::with_capacity(d);
        for cell in rec.iter().skip(1) {
            match cell.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => {
                    vals.push(v);
                    miss.push(false);
                }
                _ => {
                    vals.push(0.0);
                    miss.push(true);
                }
            }
        }
        rows.push((ts, vals, miss));
    }
    if rows.is_empty() {
        return Err(DatasetError::EmptyFile);
    }
    rows.sort_by_key(|(ts, _, _)| *ts);
    let mut seen = HashSet::new();
    for (ts, _, _) in &rows {
        if !seen.insert(*ts) {
            return Err(DatasetError::DuplicateTimestamp(*ts));
        }
    }
    let mut timestamps = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len() * d);
    let mut missing = Vec::with_capacity(rows.len() * d);
    for (ts, vals, miss) in rows {
        timestamps.push(ts);
        values.extend(vals);
        missing.extend(miss);
    }
    Ok(TimeSeriesFrame::new(
        timestamps,
        values,
        missing,
        feature_names,
        0,
    ))
}

fn median(sorted: &mut Vec<f64>) -> f64 {
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Remove abnormal days: days whose missing+zero ratio at the target column
/// exceeds `zero_ratio_limit`, and days containing a run of
/// `outlier_run_limit` or more consecutive identical outlier values.
///
/// A target value is an outlier when it deviates from the day median by more
/// than 5 day-MADs, or is negative.
pub fn clean_days(
    frame: &TimeSeriesFrame,
    zero_ratio_limit: f64,
    outlier_run_limit: usize,
) -> Result<TimeSeriesFrame, DatasetError> {
    let tgt = frame.target_index();
    let mut keep = Vec::new();
    for (_, range) in frame.day_ranges() {
        let rows = range.len();
        let bad_count = range
            .clone()
            .filter(|&i| frame.is_missing(i, tgt) || frame.value(i, tgt) == 0.0)
            .count();
        if bad_count as f64 / rows as f64 > zero_ratio_limit {
            continue;
        }

        let mut present: Vec<f64> = range
            .clone()
            .filter(|&i| !frame.is_missing(i, tgt))
            .map(|i| frame.value(i, tgt))
            .collect();
        let med = median(&mut present);
        let mut devs: Vec<f64> = present.iter().map(|v| (v - med).abs()).collect();
        let mad = median(&mut devs);
        // exact zeros are ordinary night readings, covered by the ratio rule
        let is_outlier = |v: f64| v < 0.0 || (v != 0.0 && (v - med).abs() > 5.0 * mad);

        let mut run_len = 0usize;
        let mut run_val = f64::NAN;
        let mut has_bad_run = false;
        for i in range.clone() {
            if frame.is_missing(i, tgt) {
                run_len = 0;
                continue;
            }
            let v = frame.value(i, tgt);
            if is_outlier(v) {
                if v.to_bits() == run_val.to_bits() {
                    run_len += 1;
                } else {
                    run_val = v;
                    run_len = 1;
                }
                if run_len >= outlier_run_limit {
                    has_bad_run = true;
                    break;
                }
            } else {
                run_len = 0;
            }
        }
        if has_bad_run {
            continue;
        }
        keep.push(range);
    }
    if keep.is_empty() {
        return Err(DatasetError::EmptyResult);
    }
    Ok(frame.select_rows(&keep))
}

/// Hours with no solar irradiation; PV power is forced to exactly zero here.
pub const NIGHT_ZERO_HOURS: [u32; 6] = [21, 22, 23, 0, 1, 2];

/// Fill missing cells: first force the target to 0 in the no-irradiation
/// night hours, then replace each missing cell with the mean of its
/// non-missing neighbors in a centered window of 3 within the same day.
/// Scans left-to-right, then right-to-left, iterating to a fixpoint.
pub fn impute(frame: &TimeSeriesFrame) -> Result<TimeSeriesFrame, DatasetError> {
    let mut out = frame.clone();
    let d = out.n_features();
    let tgt = out.target_index;
    for i in 0..out.n_rows() {
        if NIGHT_ZERO_HOURS.contains(&out.timestamps[i].time().hour()) {
            out.values[i * d + tgt] = 0.0;
            out.missing[i * d + tgt] = false;
        }
    }
    let days = out.day_ranges();
    for (_, range) in &days {
        for j in 0..d {
            for _pass in 0..10 {
                let mut progressed = false;
                let fill = |i: usize, out: &mut TimeSeriesFrame| {
                    if !out.missing[i * d + j] {
                        return false;
                    }
                    let mut acc = 0.0;
                    let mut cnt = 0;
                    if i > range.start && !out.missing[(i - 1) * d + j] {
                        acc += out.values[(i - 1) * d + j];
                        cnt += 1;
                    }
                    if i + 1 < range.end && !out.missing[(i + 1) * d + j] {
                        acc += out.values[(i + 1) * d + j];
                        cnt += 1;
                    }
                    if cnt == 0 {
                        return false;
                    }
                    out.values[i * d + j] = acc / cnt as f64;
                    out.missing[i * d + j] = false;
                    true
                };
                for i in range.clone() {
                    progressed |= fill(i, &mut out);
                }
                for i in range.clone().rev() {
                    progressed |= fill(i, &mut out);
                }
                let any_left = range.clone().any(|i| out.missing[i * d + j]);
                if !any_left {
                    break;
                }
                if !progressed {
                    let at = range.clone().find(|&i| out.missing[i * d + j]).unwrap();
                    return Err(DatasetError::UnimputableGap {
                        column: out.feature_names[j].clone(),
                        at: out.timestamps[at],
                    });
                }
            }
        }
    }
    if out.any_missing() {
        let i = (0..out.n_rows() * d).find(|&k| out.missing[k]).unwrap();
        return Err(DatasetError::UnimputableGap {
            column: out.feature_names[i % d].clone(),
            at: out.timestamps[i / d],
        });
    }
    Ok(out)
}

/// Downsample to one row per hour; each hourly value is the mean of that
/// hour's rows.
pub fn downsample_hourly(frame: &TimeSeriesFrame) -> TimeSeriesFrame {
    let d = frame.n_features();
    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    let mut current: Option<NaiveDateTime> = None;
    let mut acc = vec![0.0; d];
    let mut count = 0usize;
    let flush =
        |ts: Option<NaiveDateTime>, acc: &mut Vec<f64>, count: &mut usize,
         timestamps: &mut Vec<NaiveDateTime>, values: &mut Vec<f64>| {
            if let Some(ts) = ts {
                if *count > 0 {
                    timestamps.push(ts);
                    values.extend(acc.iter().map(|v| v / *count as f64));
                }
            }
            acc.iter_mut().for_each(|v| *v = 0.0);
            *count = 0;
        };
    for i in 0..frame.n_rows() {
        let ts = frame.timestamps[i];
        let hour_start = ts
            .date()
            .and_hms_opt(ts.time().hour(), 0, 0)
            .expect("valid hour");
        if current != Some(hour_start) {
            flush(current, &mut acc, &mut count, &mut timestamps, &mut values);
            current = Some(hour_start);
        }
        for j in 0..d {
            acc[j] += frame.value(i, j);
        }
        count += 1;
    }
    flush(current, &mut acc, &mut count, &mut timestamps, &mut values);
    let missing = vec![false; values.len()];
    TimeSeriesFrame::new(
        timestamps,
        values,
        missing,
        frame.feature_names.clone(),
        frame.target_index,
    )
}

/// Contiguous chronological 3-way split. Train and validation sizes round
/// down; the remainder goes to test.
pub fn split(
    frame: &TimeSeriesFrame,
    spec: &SplitSpec,
    min_rows: usize,
) -> Result<(TimeSeriesFrame, TimeSeriesFrame, TimeSeriesFrame), DatasetError> {
    spec.validate()?;
    let n = frame.n_rows();
    let n_train = (n as f64 * spec.train).floor() as usize;
    let n_val = (n as f64 * spec.val).floor() as usize;
    let n_test = n - n_train - n_val;
    for (name, rows) in [("train", n_train), ("val", n_val), ("test", n_test)] {
        if rows < min_rows {
            return Err(DatasetError::TooSmall {
                partition: if name == "train" {
                    "train"
                } else if name == "val" {
                    "val"
                } else {
                    "test"
                },
                rows,
                min: min_rows,
            });
        }
    }
    Ok((
        frame.slice_rows(0..n_train),
        frame.slice_rows(n_train..n_train + n_val),
        frame.slice_rows(n_train + n_val..n),
    ))
}

/// Lazy sliding-window index over a frame; see [`Windows`].
pub fn make_windows(frame: Arc<TimeSeriesFrame>, t_s: usize, t_p: usize, step: usize) -> Windows {
    Windows::new(frame, t_s, t_p, step)
}
