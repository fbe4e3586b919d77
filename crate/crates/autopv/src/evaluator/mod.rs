//! Candidate evaluation: trains an assembled model, scores validation MAE,
//! and caches results by canonical genotype so no structure is trained twice.

mod train;

pub use train::{
    fetch_sample, score, train, EarlyStopper, Optimizer, TrainConfig, TrainOutcome, ADAM_BETA1,
    ADAM_BETA2, ADAM_EPS,
};

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{NoiseSpec, Windows};
use crate::search_space::{assemble, AssembledModel, Genotype, TaskSpec};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: pred {pred} vs truth {truth}")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("all-zero truth: WMAPE undefined")]
    AllZeroTruth,
    #[error("record log: {0}")]
    Io(#[from] std::io::Error),
    #[error("record log line {line}: {source}")]
    MalformedRecord {
        line: usize,
        source: serde_json::Error,
    },
}

/// Mean absolute error.
pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    let n = pred.len() as f64;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / n)
}

/// Weighted MAPE with weights |y_n|: sum |y||y_hat - y| / sum y^2.
pub fn wmape(pred: &[f64], truth: &[f64]) -> Result<f64, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    let den: f64 = truth.iter().map(|y| y * y).sum();
    if den <= 0.0 {
        return Err(EvalError::AllZeroTruth);
    }
    let num: f64 = pred
        .iter()
        .zip(truth)
        .map(|(p, y)| y.abs() * (p - y).abs())
        .sum();
    Ok(num / den)
}

/// Serde adapter: non-finite f64 as JSON null (the divergence sentinel).
pub mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Outcome of one candidate evaluation. A diverged training run carries the
/// +infinity sentinel, serialized as JSON null.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRecord {
    pub genotype: Genotype,
    #[serde(with = "inf_as_null")]
    pub measured_error: f64,
    pub param_count: usize,
    pub epochs_run: usize,
    /// Per-epoch (train loss, validation MAE).
    pub history: Vec<(f64, f64)>,
    pub wall_seconds: f64,
}

impl EvalRecord {
    pub fn key(&self) -> u64 {
        self.genotype.key()
    }

    pub fn is_finite(&self) -> bool {
        self.measured_error.is_finite()
    }
}

/// Anything the search can query for candidate quality. The production
/// implementation trains models; tests may substitute closed-form objectives.
pub trait CandidateEvaluator: Sync {
    fn evaluate(&self, g: Genotype) -> EvalRecord;

    /// Exact parameter count from shape arithmetic, no training.
    fn param_count(&self, g: Genotype) -> usize;

    /// Number of actual training invocations (cache misses).
    fn trainer_calls(&self) -> usize;
}

/// Evaluator backed by real training on dataset splits, with an insert-once
/// cache keyed by canonical genotype.
pub struct TrainingEvaluator {
    train_w: Windows,
    val_w: Windows,
    task: TaskSpec,
    noise: NoiseSpec,
    max_epochs: usize,
    patience: usize,
    run_seed: u64,
    cache: Mutex<HashMap<u64, EvalRecord>>,
    calls: AtomicUsize,
}

impl TrainingEvaluator {
    pub fn new(
        train_w: Windows,
        val_w: Windows,
        task: TaskSpec,
        noise: NoiseSpec,
        max_epochs: usize,
        patience: usize,
        run_seed: u64,
    ) -> Self {
        Self {
            train_w,
            val_w,
            task,
            noise,
            max_epochs,
            patience,
            run_seed,
            cache: Mutex::new(HashMap::new()),
            calls: AtomicUsize::new(0),
        }
    }

    /// Per-genotype training seed, stable across runs with the same run seed.
    fn train_seed(&self, g: Genotype) -> u64 {
        self.run_seed ^ g.key().wrapping_mul(0xD1B54A32D192ED03)
    }

    /// Assemble and train `g`; used for evaluation and for reproducing the
    /// weights of a chosen architecture after the search.
    pub fn train_genotype(&self, g: Genotype) -> (AssembledModel, TrainOutcome) {
        let g = g.canonical();
        let mut model = assemble(g, self.task, self.train_w.frame(), self.run_seed)
            .expect("genotype options are in range");
        let cfg = TrainConfig::from_genotype(g, self.max_epochs, self.patience, self.train_seed(g));
        let outcome = train(&mut model, &self.train_w, &self.val_w, &self.noise, &cfg);
        (model, outcome)
    }

    /// Seed the cache with previously logged records (crash resume).
    pub fn preload(&self, records: impl IntoIterator<Item = EvalRecord>) {
        let mut cache = self.cache.lock().unwrap();
        for r in records {
            cache.entry(r.key()).or_insert(r);
        }
    }

    pub fn cache_len(&self) -> usize {
        self.cache.lock().unwrap().len()
    }

    pub fn records(&self) -> Vec<EvalRecord> {
        self.cache.lock().unwrap().values().cloned().collect()
    }
}

impl CandidateEvaluator for TrainingEvaluator {
    fn evaluate(&self, g: Genotype) -> EvalRecord {
        let g = g.canonical();
        if let Some(hit) = self.cache.lock().unwrap().get(&g.key()) {
            return hit.clone();
        }
        let started = Instant::now();
        self.calls.fetch_add(1, Ordering::SeqCst);
        let (model, outcome) = self.train_genotype(g);
        let record = EvalRecord {
            genotype: g,
            measured_error: outcome.best_val,
            param_count: model.param_count(),
            epochs_run: outcome.epochs_run,
            history: outcome.history,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        self.cache
            .lock()
            .unwrap()
            .entry(g.key())
            .or_insert(record)
            .clone()
    }

    fn param_count(&self, g: Genotype) -> usize {
        assemble(g.canonical(), self.task, self.train_w.frame(), self.run_seed)
            .expect("genotype options are in range")
            .param_count()
    }

    fn trainer_calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

/// Append one record as a JSON line (crash-safe search resumption log).
pub fn append_record(path: &Path, record: &EvalRecord) -> Result<(), EvalError> {
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    let line = serde_json::to_string(record).expect("record serializes");
    writeln!(f, "{line}")?;
    f.flush()?;
    Ok(())
}

pub fn load_records(path: &Path) -> Result<Vec<EvalRecord>, EvalError> {
    let f = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|source| EvalError::MalformedRecord {
                line: i + 1,
                source,
            })?,
        );
    }
    Ok(out)
}
