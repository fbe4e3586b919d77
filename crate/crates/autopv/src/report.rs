//! Run artifacts: Pareto front CSV, iteration history JSONL, best
//! architecture JSON, flat weight dumps, and hand-emitted SVG plots.

use std::io::{BufRead, Write};
use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocks::{FeatureMask, ParamManifest, ParamStore};
use crate::dataset::TaskKind;
use crate::evaluator::EvalRecord;
use crate::search_space::{Genotype, GENE_NAMES};
use crate::searcher::{non_dominated_sort, IterationStat};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("row {row}: {why}")]
    MalformedRow { row: usize, why: String },
    #[error("pareto row {row} is dominated by row {by}")]
    DominatedRow { row: usize, by: usize },
    #[error("weights file holds {have} values but the manifest needs {need}")]
    WeightCount { have: usize, need: usize },
}

/// One reloaded `pareto.csv` row.
#[derive(Debug, Clone)]
pub struct ParetoRow {
    pub genotype: Genotype,
    pub measured_error: f64,
    pub param_count: usize,
}

/// Write the front as CSV: hash key, the 12 genes by label, then objectives.
pub fn write_pareto_csv(path: &Path, front: &[EvalRecord]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["key".to_string()];
    header.extend(GENE_NAMES.iter().map(|s| s.to_string()));
    header.push("measured_error".into());
    header.push("param_count".into());
    w.write_record(&header)?;
    for r in front {
        let genes = serde_json::to_value(r.genotype)?;
        let mut row = vec![format!("{:016x}", r.key())];
        for name in GENE_NAMES {
            row.push(genes[name].as_str().expect("gene labels are strings").to_string());
        }
        row.push(format!("{}", r.measured_error));
        row.push(format!("{}", r.param_count));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reload `pareto.csv`, revalidating the hash key of each genotype and the
/// mutual non-domination of the rows.
pub fn load_pareto_csv(path: &Path) -> Result<Vec<ParetoRow>, ReportError> {
    let mut rd = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let row_no = i + 1;
        let bad = |why: String| ReportError::MalformedRow { row: row_no, why };
        if rec.len() != GENE_NAMES.len() + 3 {
            return Err(bad(format!("expected {} fields", GENE_NAMES.len() + 3)));
        }
        let mut obj = serde_json::Map::new();
        for (g, name) in GENE_NAMES.iter().enumerate() {
            obj.insert(name.to_string(), serde_json::Value::String(rec[g + 1].to_string()));
        }
        let genotype: Genotype = serde_json::from_value(serde_json::Value::Object(obj))
            .map_err(|e| bad(e.to_string()))?;
        let key = u64::from_str_radix(&rec[0], 16).map_err(|e| bad(e.to_string()))?;
        if key != genotype.key() {
            return Err(bad(format!(
                "key {key:016x} does not match genotype key {:016x}",
                genotype.key()
            )));
        }
        let measured_error: f64 = rec[GENE_NAMES.len() + 1]
            .parse()
            .map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?;
        let param_count: usize = rec[GENE_NAMES.len() + 2]
            .parse()
            .map_err(|e: std::num::ParseIntError| bad(e.to_string()))?;
        rows.push(ParetoRow {
            genotype,
            measured_error,
            param_count,
        });
    }
    // Mutual non-domination: every row must land in the first front.
    let recs: Vec<EvalRecord> = rows
        .iter()
        .map(|r| EvalRecord {
            genotype: r.genotype,
            measured_error: r.measured_error,
            param_count: r.param_count,
            epochs_run: 0,
            history: Vec::new(),
            wall_seconds: 0.0,
        })
        .collect();
    let fronts = non_dominated_sort(&recs);
    if fronts.len() > 1 {
        let dominated = fronts[1][0];
        let by = fronts[0][0];
        return Err(ReportError::DominatedRow {
            row: dominated + 1,
            by: by + 1,
        });
    }
    Ok(rows)
}

/// Append-free full rewrite of the iteration history as JSON lines.
pub fn write_history(path: &Path, history: &[IterationStat]) -> Result<(), ReportError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for h in history {
        serde_json::to_writer(&mut f, h)?;
        writeln!(f)?;
    }
    f.flush()?;
    Ok(())
}

pub fn load_history(path: &Path) -> Result<Vec<IterationStat>, ReportError> {
    let f = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for line in std::io::BufReader::new(f).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// Everything needed to rebuild and run the winning model outside the
/// search pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BestArch {
    pub genotype: Genotype,
    pub task_kind: TaskKind,
    pub t_s: usize,
    pub t_p: usize,
    /// Expected input schema; predict data must match it.
    pub feature_names: Vec<String>,
    pub target_index: usize,
    /// Feature-selection outcome recorded from the training split.
    pub mask_keep: Vec<bool>,
    pub mask_scores: Vec<f64>,
    /// Per-kept-column training-split std, for noise scaling.
    pub feature_std: Vec<f64>,
    /// Run seed; parameter init and retraining derive from it.
    pub seed: u64,
    #[serde(with = "crate::evaluator::inf_as_null")]
    pub measured_error: f64,
    pub param_count: usize,
}

impl BestArch {
    pub fn mask(&self) -> FeatureMask {
        FeatureMask {
            keep: self.mask_keep.clone(),
            scores: self.mask_scores.clone(),
        }
    }
}

pub fn write_best_arch(path: &Path, arch: &BestArch) -> Result<(), ReportError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut f, arch)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

pub fn load_best_arch(path: &Path) -> Result<BestArch, ReportError> {
    Ok(serde_json::from_reader(std::fs::File::open(path)?)?)
}

/// Flat little-endian f64 dump next to a JSON shape manifest at
/// `<path>.manifest.json`.
pub fn write_weights(path: &Path, params: &ParamStore) -> Result<(), ReportError> {
    let flat = params.flatten();
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for v in &flat {
        f.write_all(&v.to_le_bytes())?;
    }
    f.flush()?;
    let manifest_path = manifest_path(path);
    let mut f = std::io::BufWriter::new(std::fs::File::create(manifest_path)?);
    serde_json::to_writer_pretty(&mut f, &params.manifest())?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

pub fn manifest_path(weights: &Path) -> std::path::PathBuf {
    let mut os = weights.as_os_str().to_os_string();
    os.push(".manifest.json");
    std::path::PathBuf::from(os)
}

pub fn load_weights(path: &Path) -> Result<ParamStore, ReportError> {
    let manifest: ParamManifest =
        serde_json::from_reader(std::fs::File::open(manifest_path(path))?)?;
    let bytes = std::fs::read(path)?;
    if bytes.len() % 8 != 0 {
        return Err(ReportError::WeightCount {
            have: bytes.len(),
            need: bytes.len() / 8 * 8,
        });
    }
    let flat: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let need: usize = manifest
        .entries
        .iter()
        .map(|(_, s)| s.iter().product::<usize>())
        .sum();
    ParamStore::from_flat(&manifest, &flat).ok_or(ReportError::WeightCount {
        have: flat.len(),
        need,
    })
}

const SVG_W: f64 = 720.0;
const SVG_H: f64 = 420.0;
const MARGIN: f64 = 50.0;

fn svg_open(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_W}\" height=\"{SVG_H}\" \
         viewBox=\"0 0 {SVG_W} {SVG_H}\">\n\
         <rect width=\"{SVG_W}\" height=\"{SVG_H}\" fill=\"white\"/>\n\
         <text x=\"{x}\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"14\">{title}</text>\n\
         <line x1=\"{MARGIN}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{MARGIN}\" y1=\"{MARGIN}\" x2=\"{MARGIN}\" y2=\"{y0}\" stroke=\"black\"/>\n",
        x = SVG_W / 2.0,
        y0 = SVG_H - MARGIN,
        x1 = SVG_W - MARGIN,
    )
}

/// Map a series onto plot coordinates and emit one polyline. The exact data
/// values ride along in a `data-series` attribute so the plotted series can
/// be checked against its source without reversing the affine transform.
fn svg_polyline(values: &[f64], lo: f64, hi: f64, color: &str) -> String {
    let n = values.len();
    let span = if hi > lo { hi - lo } else { 1.0 };
    let pts: Vec<String> = values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let x = MARGIN
                + (SVG_W - 2.0 * MARGIN) * if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
            let y = (SVG_H - MARGIN) - (SVG_H - 2.0 * MARGIN) * ((v - lo) / span);
            format!("{x:.2},{y:.2}")
        })
        .collect();
    let series: Vec<String> = values.iter().map(|v| format!("{v}")).collect();
    format!(
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" \
         data-series=\"{}\" points=\"{}\"/>\n",
        series.join(","),
        pts.join(" "),
    )
}

fn svg_axis_labels(lo: f64, hi: f64, n: usize) -> String {
    format!(
        "<text x=\"{m}\" y=\"{yb}\" font-family=\"sans-serif\" font-size=\"11\">0</text>\n\
         <text x=\"{xr}\" y=\"{yb}\" text-anchor=\"end\" font-family=\"sans-serif\" \
         font-size=\"11\">{last}</text>\n\
         <text x=\"{xl}\" y=\"{yt}\" text-anchor=\"end\" font-family=\"sans-serif\" \
         font-size=\"11\">{hi}</text>\n\
         <text x=\"{xl}\" y=\"{ybt}\" text-anchor=\"end\" font-family=\"sans-serif\" \
         font-size=\"11\">{lo}</text>\n",
        m = MARGIN,
        yb = SVG_H - MARGIN + 16.0,
        xr = SVG_W - MARGIN,
        last = n.saturating_sub(1),
        xl = MARGIN - 4.0,
        yt = MARGIN + 4.0,
        ybt = SVG_H - MARGIN,
        hi = format_args!("{hi:.4}"),
        lo = format_args!("{lo:.4}"),
    )
}

/// Best-error-per-iteration convergence plot.
pub fn write_convergence_svg(path: &Path, history: &[IterationStat]) -> Result<(), ReportError> {
    let series: Vec<f64> = history
        .iter()
        .map(|h| {
            if h.best_error.is_finite() {
                h.best_error
            } else {
                0.0
            }
        })
        .collect();
    let lo = series.iter().copied().fold(f64::INFINITY, f64::min).min(0.0);
    let hi = series.iter().copied().fold(0.0f64, f64::max);
    let mut svg = svg_open("Best measured error per iteration");
    svg.push_str(&svg_axis_labels(lo, hi, series.len()));
    svg.push_str(&svg_polyline(&series, lo, hi, "#1f77b4"));
    svg.push_str("</svg>\n");
    std::fs::write(path, svg)?;
    Ok(())
}

/// Forecast-vs-truth CSV: one row per forecast point.
pub fn write_forecast_csv(
    path: &Path,
    rows: &[(NaiveDateTime, f64, f64)],
) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["timestamp", "prediction", "truth"])?;
    for (ts, pred, truth) in rows {
        w.write_record([
            ts.format("%Y-%m-%dT%H:%M:%S").to_string(),
            format!("{pred}"),
            format!("{truth}"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Overlayed prediction and ground-truth lines.
pub fn write_forecast_svg(
    path: &Path,
    rows: &[(NaiveDateTime, f64, f64)],
) -> Result<(), ReportError> {
    let pred: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let truth: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let all = pred.iter().chain(&truth);
    let lo = all.clone().copied().fold(f64::INFINITY, f64::min).min(0.0);
    let hi = all.copied().fold(0.0f64, f64::max);
    let mut svg = svg_open("Forecast (blue) vs ground truth (orange)");
    svg.push_str(&svg_axis_labels(lo, hi, rows.len()));
    svg.push_str(&svg_polyline(&truth, lo, hi, "#ff7f0e"));
    svg.push_str(&svg_polyline(&pred, lo, hi, "#1f77b4"));
    svg.push_str("</svg>\n");
    std::fs::write(path, svg)?;
    Ok(())
}

/// Extract the `data-series` values of every polyline in an SVG, in
/// document order. Used to verify plots against their source series.
pub fn svg_series(svg: &str) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut rest = svg;
    while let Some(p) = rest.find("data-series=\"") {
        rest = &rest[p + "data-series=\"".len()..];
        let end = rest.find('"').expect("attribute closes");
        let vals = rest[..end]
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().expect("series values are f64"))
            .collect();
        out.push(vals);
        rest = &rest[end..];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search_space::{random_genotype, SpaceSpec};
    use crate::searcher::FrontPoint;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn record(g: Genotype, error: f64, params: usize) -> EvalRecord {
        EvalRecord {
            genotype: g,
            measured_error: error,
            param_count: params,
            epochs_run: 1,
            history: Vec::new(),
            wall_seconds: 0.0,
        }
    }

    fn genotypes(n: usize, seed: u64) -> Vec<Genotype> {
        let space = SpaceSpec::full();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| random_genotype(&space, &mut rng)).collect()
    }

    #[test]
    fn pareto_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pareto.csv");
        let gs = genotypes(3, 1);
        let front = vec![
            record(gs[0], 1.25, 900),
            record(gs[1], 2.5, 500),
            record(gs[2], 4.0, 100),
        ];
        write_pareto_csv(&path, &front).unwrap();
        let rows = load_pareto_csv(&path).unwrap();
        assert_eq!(rows.len(), 3);
        for (row, rec) in rows.iter().zip(&front) {
            assert_eq!(row.genotype, rec.genotype.canonical());
            assert_eq!(row.measured_error, rec.measured_error);
            assert_eq!(row.param_count, rec.param_count);
        }
    }

    #[test]
    fn pareto_csv_rejects_dominated_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pareto.csv");
        let gs = genotypes(2, 2);
        let front = vec![record(gs[0], 1.0, 100), record(gs[1], 2.0, 200)];
        write_pareto_csv(&path, &front).unwrap();
        let err = load_pareto_csv(&path).unwrap_err();
        assert!(matches!(err, ReportError::DominatedRow { row: 2, by: 1 }));
    }

    #[test]
    fn pareto_csv_rejects_tampered_key() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pareto.csv");
        let gs = genotypes(1, 3);
        write_pareto_csv(&path, &[record(gs[0], 1.0, 100)]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let tampered = text.replacen(&format!("{:016x}", gs[0].key()), "00000000deadbeef", 1);
        std::fs::write(&path, tampered).unwrap();
        let err = load_pareto_csv(&path).unwrap_err();
        assert!(matches!(err, ReportError::MalformedRow { row: 1, .. }));
    }

    fn history_fixture(seed: u64) -> Vec<IterationStat> {
        let gs = genotypes(2, seed);
        vec![
            IterationStat {
                iteration: 0,
                best_error: 3.5,
                evaluations: 10,
                front: vec![FrontPoint {
                    genotype: gs[0],
                    measured_error: 3.5,
                    param_count: 400,
                }],
            },
            IterationStat {
                iteration: 1,
                best_error: 2.0,
                evaluations: 20,
                front: vec![FrontPoint {
                    genotype: gs[1],
                    measured_error: 2.0,
                    param_count: 300,
                }],
            },
        ]
    }

    #[test]
    fn history_round_trips_and_is_byte_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.jsonl");
        let p2 = dir.path().join("b.jsonl");
        let h = history_fixture(4);
        write_history(&p1, &h).unwrap();
        write_history(&p2, &h).unwrap();
        assert_eq!(
            std::fs::read(&p1).unwrap(),
            std::fs::read(&p2).unwrap(),
            "identical history must serialize identically"
        );
        let back = load_history(&p1).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].best_error, 2.0);
        assert_eq!(back[1].front[0].param_count, 300);
    }

    #[test]
    fn convergence_svg_series_matches_history_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("convergence.svg");
        let h = history_fixture(5);
        write_convergence_svg(&path, &h).unwrap();
        let svg = std::fs::read_to_string(&path).unwrap();
        let series = svg_series(&svg);
        assert_eq!(series.len(), 1);
        let want: Vec<f64> = h.iter().map(|s| s.best_error).collect();
        assert_eq!(series[0], want);
    }

    #[test]
    fn weights_round_trip_bitwise() {
        use crate::autodiff::Tensor;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("weights.bin");
        let mut p = ParamStore::new();
        p.add("a.w", Tensor::new(vec![2, 3], vec![1.0, -2.5, 3.25, 0.0, 1e-300, f64::MIN_POSITIVE]).unwrap());
        p.add("a.b", Tensor::new(vec![1, 3], vec![0.1, 0.2, 0.3]).unwrap());
        write_weights(&path, &p).unwrap();
        let q = load_weights(&path).unwrap();
        assert_eq!(p.names(), q.names());
        assert_eq!(p.flatten(), q.flatten());

        // Truncated dump is rejected.
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(
            load_weights(&path),
            Err(ReportError::WeightCount { .. })
        ));
    }

    #[test]
    fn best_arch_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("best_arch.json");
        let g = genotypes(1, 6)[0];
        let arch = BestArch {
            genotype: g,
            task_kind: TaskKind::Task2,
            t_s: 96,
            t_p: 24,
            feature_names: vec!["power".into(), "ghi".into()],
            target_index: 0,
            mask_keep: vec![true, false],
            mask_scores: vec![1.0, 0.2],
            feature_std: vec![3.0],
            seed: 7,
            measured_error: 1.5,
            param_count: 1234,
        };
        write_best_arch(&path, &arch).unwrap();
        let back = load_best_arch(&path).unwrap();
        assert_eq!(back.genotype, g.canonical());
        assert_eq!(back.task_kind, TaskKind::Task2);
        assert_eq!(back.mask_keep, vec![true, false]);
        assert_eq!(back.measured_error, 1.5);
    }

    #[test]
    fn forecast_outputs_parse_back() {
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("forecast.csv");
        let svg_path = dir.path().join("forecast.svg");
        let t0 = chrono::NaiveDate::from_ymd_opt(2020, 1, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        let rows: Vec<(NaiveDateTime, f64, f64)> = (0..5)
            .map(|i| (t0 + chrono::Duration::hours(i), i as f64 * 1.5, i as f64))
            .collect();
        write_forecast_csv(&csv_path, &rows).unwrap();
        write_forecast_svg(&svg_path, &rows).unwrap();

        let mut rd = csv::Reader::from_path(&csv_path).unwrap();
        let back: Vec<(f64, f64)> = rd
            .records()
            .map(|r| {
                let r = r.unwrap();
                (r[1].parse().unwrap(), r[2].parse().unwrap())
            })
            .collect();
        assert_eq!(back.len(), 5);
        assert_eq!(back[3], (4.5, 3.0));

        let svg = std::fs::read_to_string(&svg_path).unwrap();
        let series = svg_series(&svg);
        assert_eq!(series.len(), 2, "truth and prediction polylines");
        assert_eq!(series[1], vec![0.0, 1.5, 3.0, 4.5, 6.0]);
    }
}
