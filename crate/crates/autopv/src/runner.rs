//! End-to-end orchestration: dataset pipeline, search execution, artifact
//! emission, and standalone prediction from saved artifacts.

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::autodiff::Tape;
use crate::config::{DataSource, RunConfig};
use crate::dataset::{
    clean_days, downsample_hourly, impute, load_csv, make_windows, split, DatasetError, NoiseSpec,
    SplitSpec, TaskKind, TimeSeriesFrame, Windows,
};
use crate::evaluator::{
    append_record, load_records, CandidateEvaluator, EvalError, EvalRecord, TrainingEvaluator,
};
use crate::report::{
    load_best_arch, load_weights, write_best_arch, write_convergence_svg, write_forecast_csv,
    write_forecast_svg, write_history, write_pareto_csv, write_weights, BestArch, ReportError,
};
use crate::search_space::{assemble_with_mask, Genotype, TaskSpec};
use crate::searcher::{mobananas_search, SearchOutcome};
use crate::synth::synth_pv;

/// Day-removal threshold on missing+zero ratio at the target column.
pub const ZERO_RATIO_LIMIT: f64 = 0.8;
/// Day-removal threshold on consecutive identical outliers.
pub const OUTLIER_RUN_LIMIT: usize = 10;
/// Evaluation record log inside the output directory, used for resume.
pub const EVAL_LOG: &str = "eval_log.jsonl";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Dataset(#[from] DatasetError),
    #[error("{0}")]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Report(#[from] ReportError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("data has features {have:?} but the architecture expects {want:?}")]
    SchemaMismatch {
        have: Vec<String>,
        want: Vec<String>,
    },
    #[error("horizon {given} does not match the architecture's horizon {expected}")]
    HorizonMismatch { given: usize, expected: usize },
    #[error("weight manifest does not match the assembled architecture: {0}")]
    WeightMismatch(String),
    #[error("search produced no finite candidate; nothing to report")]
    NoFiniteCandidate,
}

/// Load and prepare the hourly frame for a run. CSV input runs the full
/// minute-resolution cleaning pipeline; synthetic input is already hourly.
pub fn prepare_frame(cfg: &RunConfig) -> Result<TimeSeriesFrame, RunError> {
    match &cfg.data {
        DataSource::Csv(path) => {
            let raw = load_csv(path, None)?;
            let cleaned = clean_days(&raw, ZERO_RATIO_LIMIT, OUTLIER_RUN_LIMIT)?;
            let imputed = impute(&cleaned)?;
            Ok(downsample_hourly(&imputed))
        }
        DataSource::Synth { days, seed } => Ok(synth_pv(*days, *seed)),
    }
}

/// Wraps an evaluator with an append-only JSONL record log so interrupted
/// runs can resume without re-training.
struct LoggingEvaluator<'a> {
    inner: &'a TrainingEvaluator,
    log: Mutex<(std::collections::HashSet<u64>, PathBuf)>,
}

impl<'a> LoggingEvaluator<'a> {
    fn new(inner: &'a TrainingEvaluator, path: PathBuf, preloaded: &[EvalRecord]) -> Self {
        let seen = preloaded.iter().map(|r| r.key()).collect();
        Self {
            inner,
            log: Mutex::new((seen, path)),
        }
    }
}

impl CandidateEvaluator for LoggingEvaluator<'_> {
    fn evaluate(&self, g: Genotype) -> EvalRecord {
        let record = self.inner.evaluate(g);
        let mut log = self.log.lock().unwrap();
        if log.0.insert(record.key()) {
            let path = log.1.clone();
            // Log failures must not lose the computed record; surface late.
            if let Err(e) = append_record(&path, &record) {
                eprintln!("warning: could not append to {}: {e}", path.display());
            }
        }
        record
    }

    fn param_count(&self, g: Genotype) -> usize {
        self.inner.param_count(g)
    }

    fn trainer_calls(&self) -> usize {
        self.inner.trainer_calls()
    }
}

pub struct RunSummary {
    pub outcome: SearchOutcome,
    pub best: BestArch,
    pub trainer_calls: usize,
}

/// Execute a configured search and write all artifacts into
/// `cfg.output_dir`: `pareto.csv`, `history.jsonl`, `best_arch.json`,
/// `convergence.svg`, `weights.bin` (+ manifest), and the resumable
/// evaluation log.
pub fn run_search(cfg: &RunConfig, workers: Option<usize>, resume: bool) -> Result<RunSummary, RunError> {
    std::fs::create_dir_all(&cfg.output_dir).map_err(|source| RunError::Io {
        path: cfg.output_dir.clone(),
        source,
    })?;
    let frame = prepare_frame(cfg)?;
    let min_rows = cfg.t_s + cfg.t_p;
    let (train, val, _test) = split(&frame, &SplitSpec::DEFAULT, min_rows)?;
    let train_w = make_windows(Arc::new(train), cfg.t_s, cfg.t_p, 1);
    let val_w = make_windows(Arc::new(val), cfg.t_s, cfg.t_p, 1);
    let task = TaskSpec {
        task_kind: cfg.task_kind,
        t_s: cfg.t_s,
        t_p: cfg.t_p,
    };
    let evaluator = TrainingEvaluator::new(
        train_w.clone(),
        val_w,
        task,
        cfg.noise,
        cfg.max_epochs,
        cfg.patience,
        cfg.seed,
    );

    let log_path = cfg.output_dir.join(EVAL_LOG);
    let preloaded = if resume && log_path.exists() {
        let records = load_records(&log_path)?;
        evaluator.preload(records.iter().cloned());
        records
    } else {
        // A fresh run starts a fresh log.
        if log_path.exists() {
            std::fs::remove_file(&log_path).map_err(|source| RunError::Io {
                path: log_path.clone(),
                source,
            })?;
        }
        Vec::new()
    };
    let logging = LoggingEvaluator::new(&evaluator, log_path, &preloaded);

    let outcome = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(|| mobananas_search(&logging, &cfg.space, &cfg.search)),
        None => mobananas_search(&logging, &cfg.space, &cfg.search),
    };

    write_pareto_csv(&cfg.output_dir.join("pareto.csv"), &outcome.front)?;
    write_history(&cfg.output_dir.join("history.jsonl"), &outcome.history)?;
    write_convergence_svg(&cfg.output_dir.join("convergence.svg"), &outcome.history)?;

    let best_rec = outcome
        .front
        .iter()
        .filter(|r| r.is_finite())
        .min_by(|a, b| a.measured_error.partial_cmp(&b.measured_error).unwrap())
        .ok_or(RunError::NoFiniteCandidate)?;
    // Deterministic retrain of the winner to materialize its weights; the
    // evaluator trains from the same seeds, so this reproduces the
    // measured model exactly.
    let (model, _outcome) = evaluator.train_genotype(best_rec.genotype);
    let best = BestArch {
        genotype: best_rec.genotype,
        task_kind: cfg.task_kind,
        t_s: cfg.t_s,
        t_p: cfg.t_p,
        feature_names: train_w.frame().feature_names().to_vec(),
        target_index: train_w.frame().target_index(),
        mask_keep: model.mask.keep.clone(),
        mask_scores: model.mask.scores.clone(),
        feature_std: frame_std_masked(&model.mask.keep, train_w.frame()),
        seed: cfg.seed,
        measured_error: best_rec.measured_error,
        param_count: best_rec.param_count,
    };
    write_best_arch(&cfg.output_dir.join("best_arch.json"), &best)?;
    write_weights(&cfg.output_dir.join("weights.bin"), &model.params)?;

    Ok(RunSummary {
        trainer_calls: logging.trainer_calls(),
        outcome,
        best,
    })
}

fn frame_std_masked(keep: &[bool], frame: &TimeSeriesFrame) -> Vec<f64> {
    let all = frame.feature_std();
    keep.iter()
        .zip(all)
        .filter_map(|(&k, s)| k.then_some(s))
        .collect()
}

#[derive(Debug)]
pub struct PredictSummary {
    pub windows: usize,
    pub mae: f64,
}

/// Rebuild a searched architecture from its JSON description and weight
/// dump, run it over every window of `data_path`, and write
/// `forecast.csv` / `forecast.svg` into `out_dir`.
pub fn run_predict(
    arch_path: &Path,
    weights_path: &Path,
    data_path: &Path,
    horizon: usize,
    out_dir: &Path,
) -> Result<PredictSummary, RunError> {
    let arch = load_best_arch(arch_path)?;
    if horizon != arch.t_p {
        return Err(RunError::HorizonMismatch {
            given: horizon,
            expected: arch.t_p,
        });
    }
    let schema: Vec<&str> = arch.feature_names.iter().map(String::as_str).collect();
    let frame = load_csv(data_path, Some(&schema)).map_err(|e| match e {
        DatasetError::SchemaMismatch(found) => RunError::SchemaMismatch {
            have: vec![found],
            want: arch.feature_names.clone(),
        },
        other => RunError::Dataset(other),
    })?;

    let task = TaskSpec {
        task_kind: arch.task_kind,
        t_s: arch.t_s,
        t_p: arch.t_p,
    };
    let mut model = assemble_with_mask(
        arch.genotype,
        task,
        arch.mask(),
        arch.feature_std.clone(),
        arch.target_index,
        arch.seed,
    )
    .map_err(|e| RunError::WeightMismatch(e.to_string()))?;
    let loaded = load_weights(weights_path)?;
    if loaded.manifest().entries != model.params.manifest().entries {
        return Err(RunError::WeightMismatch(format!(
            "expected tensors {:?}",
            model.params.manifest().entries
        )));
    }
    model.params = loaded;

    let windows = make_windows(Arc::new(frame), arch.t_s, arch.t_p, arch.t_p);
    let noiseless = NoiseSpec {
        sigma0: 0.0,
        gamma: 1.0,
        seed: 0,
    };
    let rows = forecast_rows(&model, &windows, &noiseless);
    let n = rows.len();
    let mae = if n == 0 {
        f64::NAN
    } else {
        rows.iter().map(|r| (r.1 - r.2).abs()).sum::<f64>() / n as f64
    };
    std::fs::create_dir_all(out_dir).map_err(|source| RunError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    write_forecast_csv(&out_dir.join("forecast.csv"), &rows)?;
    write_forecast_svg(&out_dir.join("forecast.svg"), &rows)?;
    Ok(PredictSummary {
        windows: windows.len(),
        mae,
    })
}

/// Forward every window in eval mode; one output row per forecast point.
fn forecast_rows(
    model: &crate::search_space::AssembledModel,
    windows: &Windows,
    noise: &NoiseSpec,
) -> Vec<(chrono::NaiveDateTime, f64, f64)> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0); // eval mode ignores it
    let mut rows = Vec::new();
    for i in 0..windows.len() {
        let sample = match model.task().task_kind {
            TaskKind::Task1 => windows.get(i),
            TaskKind::Task2 => windows.get_task2(i, noise),
        };
        let mut tape = Tape::new(false);
        let x = tape.constant(sample.input.clone());
        let bound = model.bind(&mut tape);
        let pred = model
            .forward(&mut tape, &bound, x, &sample.input_times, &mut rng)
            .expect("assembled shapes are consistent");
        let values = tape.data(pred).to_vec();
        for (h, (p, t)) in values.iter().zip(&sample.target).enumerate() {
            let ts = sample.t_anchor + chrono::Duration::hours(h as i64 + 1);
            rows.push((ts, *p, *t));
        }
    }
    rows
}
