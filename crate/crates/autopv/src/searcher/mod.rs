//! Multi-objective architecture search: surrogate-assisted evolutionary
//! loop with non-dominated sorting and Thompson-sampling candidate selection
//! over (measured error, parameter count).

mod surrogate;

pub use surrogate::{fit_surrogate, SurrogateConfig, SurrogateEnsemble};

use std::collections::HashSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluator::{CandidateEvaluator, EvalRecord};
use crate::search_space::{mutate, random_genotype, Genotype, SpaceSpec};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("insufficient data to fit the surrogate: have {have}, need {need}")]
    InsufficientData { have: usize, need: usize },
}

/// Search loop settings. Defaults follow the published run configuration.
#[derive(Debug, Clone, Copy)]
pub struct SearchConfig {
    pub k_ini: usize,
    pub k_p: usize,
    pub k_m: usize,
    pub k_l: usize,
    pub t_max: usize,
    pub p_m: f64,
    pub surrogate: SurrogateConfig,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            k_ini: 10,
            k_p: 10,
            k_m: 5,
            k_l: 10,
            t_max: 120,
            p_m: 0.2,
            surrogate: SurrogateConfig::default(),
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) {
        assert!(self.k_ini >= 1 && self.k_p >= 1 && self.k_m >= 1 && self.k_l >= 1);
        assert!(self.t_max >= 1);
        assert!((0.0..=1.0).contains(&self.p_m));
    }
}

/// Mutation retries before a duplicate candidate is discarded.
const DUPLICATE_RETRIES: usize = 20;

fn dominates(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 <= b.0 && a.1 <= b.1 && (a.0 < b.0 || a.1 < b.1)
}

/// Non-dominated sorting of (error, param_count, tie_key) points, both
/// objectives minimized. Returns fronts of input indices; within a front the
/// order is ascending error, then param count, then tie key.
fn sort_points(points: &[(f64, f64, u64)]) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut fronts = Vec::new();
    while !remaining.is_empty() {
        let mut front: Vec<usize> = remaining
            .iter()
            .copied()
            .filter(|&i| {
                !remaining
                    .iter()
                    .any(|&j| j != i && dominates((points[j].0, points[j].1), (points[i].0, points[i].1)))
            })
            .collect();
        front.sort_by(|&a, &b| {
            points[a]
                .0
                .partial_cmp(&points[b].0)
                .unwrap()
                .then(points[a].1.partial_cmp(&points[b].1).unwrap())
                .then(points[a].2.cmp(&points[b].2))
        });
        remaining.retain(|i| !front.contains(i));
        fronts.push(front);
    }
    fronts
}

/// Fronts of record indices on (measured_error, param_count).
pub fn non_dominated_sort(records: &[EvalRecord]) -> Vec<Vec<usize>> {
    let points: Vec<(f64, f64, u64)> = records
        .iter()
        .map(|r| (r.measured_error, r.param_count as f64, r.key()))
        .collect();
    sort_points(&points)
}

/// First front of `records`, in within-front order.
pub fn pareto_front(records: &[EvalRecord]) -> Vec<EvalRecord> {
    match non_dominated_sort(records).into_iter().next() {
        Some(front) => front.into_iter().map(|i| records[i].clone()).collect(),
        None => Vec::new(),
    }
}

/// 2-D hypervolume of a front against a reference point (both minimized).
pub fn hypervolume(records: &[EvalRecord], reference: (f64, f64)) -> f64 {
    let mut front: Vec<(f64, f64)> = pareto_front(records)
        .iter()
        .filter(|r| r.measured_error <= reference.0 && (r.param_count as f64) <= reference.1)
        .map(|r| (r.measured_error, r.param_count as f64))
        .collect();
    front.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut hv = 0.0;
    let mut prev_p = reference.1;
    for (e, p) in front {
        hv += (reference.0 - e) * (prev_p - p).max(0.0);
        prev_p = prev_p.min(p);
    }
    hv
}

/// One uniformly drawn ensemble member scores each candidate; the `k_l`
/// picks fill by non-dominated front on (sampled error, param count), a
/// final partial front by ascending sampled error.
pub fn thompson_select<R: Rng>(
    ensemble: &SurrogateEnsemble,
    candidates: &[(Genotype, usize)],
    k_l: usize,
    rng: &mut R,
) -> Vec<Genotype> {
    if candidates.len() <= k_l {
        return candidates.iter().map(|&(g, _)| g).collect();
    }
    let points: Vec<(f64, f64, u64)> = candidates
        .iter()
        .map(|&(g, pc)| {
            let member = rng.gen_range(0..ensemble.len());
            (ensemble.predict_member(member, g), pc as f64, g.key())
        })
        .collect();
    let mut selected = Vec::with_capacity(k_l);
    for front in sort_points(&points) {
        for i in front {
            if selected.len() == k_l {
                return selected;
            }
            // fronts are already sorted by ascending sampled error
            selected.push(candidates[i].0);
        }
    }
    selected
}

/// Compact front entry for per-iteration history snapshots.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrontPoint {
    pub genotype: Genotype,
    #[serde(with = "crate::evaluator::inf_as_null")]
    pub measured_error: f64,
    pub param_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationStat {
    pub iteration: usize,
    #[serde(with = "crate::evaluator::inf_as_null")]
    pub best_error: f64,
    /// Cumulative evaluation count.
    pub evaluations: usize,
    pub front: Vec<FrontPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Completed,
    /// Candidate generation could not produce any unevaluated genotype.
    BudgetExhausted,
}

pub struct SearchOutcome {
    /// Every evaluated record, in evaluation order.
    pub records: Vec<EvalRecord>,
    pub front: Vec<EvalRecord>,
    pub history: Vec<IterationStat>,
    /// Wall seconds per history entry, kept out of the history itself so the
    /// history serialization stays byte-deterministic.
    pub timings: Vec<f64>,
    pub stop: StopReason,
}

fn best_error(records: &[EvalRecord]) -> f64 {
    records
        .iter()
        .map(|r| r.measured_error)
        .fold(f64::INFINITY, f64::min)
}

fn snapshot(records: &[EvalRecord]) -> Vec<FrontPoint> {
    pareto_front(records)
        .into_iter()
        .map(|r| FrontPoint {
            genotype: r.genotype,
            measured_error: r.measured_error,
            param_count: r.param_count,
        })
        .collect()
}

/// Draw unevaluated genotypes uniformly at random, up to `retries` rejection
/// rounds per draw.
fn sample_unevaluated<R: Rng>(
    space: &SpaceSpec,
    seen: &HashSet<u64>,
    count: usize,
    retries: usize,
    rng: &mut R,
) -> Vec<Genotype> {
    let mut out = Vec::with_capacity(count);
    let mut batch_seen = seen.clone();
    for _ in 0..count {
        for _ in 0..retries {
            let g = random_genotype(space, rng);
            if batch_seen.insert(g.key()) {
                out.push(g);
                break;
            }
        }
    }
    out
}

/// Surrogate-assisted evolutionary search over `space`.
///
/// Initializes `k_ini` random genotypes, then iterates: fit the ensemble on
/// all records, pick the top `k_p` parents by front rank, spawn `k_m`
/// mutants per parent at per-gene rate `p_m` (duplicates re-mutated, then
/// discarded), Thompson-select `k_l`, evaluate, absorb; until `t_max`
/// iterations or the space is exhausted.
pub fn mobananas_search<E: CandidateEvaluator + ?Sized>(
    evaluator: &E,
    space: &SpaceSpec,
    cfg: &SearchConfig,
) -> SearchOutcome {
    cfg.validate();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records: Vec<EvalRecord> = Vec::new();
    let mut seen: HashSet<u64> = HashSet::new();
    let mut history = Vec::new();
    let mut timings = Vec::new();
    let started = Instant::now();

    let evaluate_batch = |batch: &[Genotype]| -> Vec<EvalRecord> {
        batch.par_iter().map(|&g| evaluator.evaluate(g)).collect()
    };

    let init = sample_unevaluated(space, &seen, cfg.k_ini, DUPLICATE_RETRIES, &mut rng);
    for r in evaluate_batch(&init) {
        seen.insert(r.key());
        records.push(r);
    }
    history.push(IterationStat {
        iteration: 0,
        best_error: best_error(&records),
        evaluations: records.len(),
        front: snapshot(&records),
    });
    timings.push(started.elapsed().as_secs_f64());

    let mut stop = StopReason::Completed;
    for iteration in 1..=cfg.t_max {
        // parents: flatten fronts in rank order, take the top k_p
        let mut parents: Vec<Genotype> = Vec::with_capacity(cfg.k_p);
        'outer: for front in non_dominated_sort(&records) {
            for i in front {
                parents.push(records[i].genotype);
                if parents.len() == cfg.k_p {
                    break 'outer;
                }
            }
        }

        let mut candidates: Vec<Genotype> = Vec::new();
        let mut candidate_keys = seen.clone();
        for &parent in &parents {
            for _ in 0..cfg.k_m {
                let mut child = mutate(parent, space, cfg.p_m, &mut rng);
                let mut ok = candidate_keys.insert(child.key());
                let mut tries = 0;
                while !ok && tries < DUPLICATE_RETRIES {
                    child = mutate(parent, space, cfg.p_m, &mut rng);
                    ok = candidate_keys.insert(child.key());
                    tries += 1;
                }
                if ok {
                    candidates.push(child);
                }
            }
        }
        if candidates.is_empty() {
            stop = StopReason::BudgetExhausted;
            break;
        }

        let selected = match fit_surrogate(&records, &cfg.surrogate, cfg.seed ^ iteration as u64) {
            Ok(ensemble) => {
                let with_counts: Vec<(Genotype, usize)> = candidates
                    .iter()
                    .map(|&g| (g, evaluator.param_count(g)))
                    .collect();
                thompson_select(&ensemble, &with_counts, cfg.k_l, &mut rng)
            }
            // too few finite records to model: fall back to the first k_l
            Err(SearchError::InsufficientData { .. }) => {
                candidates.into_iter().take(cfg.k_l).collect()
            }
        };

        for r in evaluate_batch(&selected) {
            seen.insert(r.key());
            records.push(r);
        }
        history.push(IterationStat {
            iteration,
            best_error: best_error(&records),
            evaluations: records.len(),
            front: snapshot(&records),
        });
        timings.push(started.elapsed().as_secs_f64());
    }

    SearchOutcome {
        front: pareto_front(&records),
        history,
        timings,
        records,
        stop,
    }
}

/// Uniform random search baseline: evaluate unseen random genotypes until
/// `budget` evaluations, returning records in evaluation order.
pub fn random_search<E: CandidateEvaluator + ?Sized>(
    evaluator: &E,
    space: &SpaceSpec,
    budget: usize,
    seed: u64,
) -> Vec<EvalRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(budget);
    while records.len() < budget {
        let batch = sample_unevaluated(space, &seen, 1, DUPLICATE_RETRIES, &mut rng);
        if batch.is_empty() {
            break;
        }
        for g in batch {
            seen.insert(g.key());
            records.push(evaluator.evaluate(g));
        }
    }
    records
}

/// Closed-form separable objective over the one-hot encoding: each gene
/// option carries a positive cost, the error of a genotype is the sum of its
/// chosen options' costs. Substitutes for training in search diagnostics.
pub struct PlantedEvaluator {
    costs: Vec<f64>,
    calls: std::sync::atomic::AtomicUsize,
}

impl PlantedEvaluator {
    pub fn new(seed: u64) -> Self {
        use crate::search_space::ENCODING_LEN;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let costs = (0..ENCODING_LEN).map(|_| rng.gen_range(0.1..1.0)).collect();
        Self {
            costs,
            calls: std::sync::atomic::AtomicUsize::new(0),
        }
    }

    pub fn error_of(&self, g: Genotype) -> f64 {
        g.canonical()
            .features()
            .iter()
            .zip(&self.costs)
            .map(|(b, c)| b * c)
            .sum()
    }

    /// Exhaustive canonical minimum.
    pub fn optimum(&self) -> Genotype {
        SpaceSpec::full()
            .enumerate()
            .into_iter()
            .min_by(|a, b| self.error_of(*a).partial_cmp(&self.error_of(*b)).unwrap())
            .expect("nonempty space")
    }
}

impl CandidateEvaluator for PlantedEvaluator {
    fn evaluate(&self, g: Genotype) -> EvalRecord {
        self.calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        let g = g.canonical();
        EvalRecord {
            genotype: g,
            measured_error: self.error_of(g),
            param_count: 1,
            epochs_run: 0,
            history: Vec::new(),
            wall_seconds: 0.0,
        }
    }

    fn param_count(&self, _g: Genotype) -> usize {
        1
    }

    fn trainer_calls(&self) -> usize {
        self.calls.load(std::sync::atomic::Ordering::SeqCst)
    }
}
