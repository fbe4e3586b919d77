use std::sync::Arc;

use chrono::NaiveDateTime;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;

use super::{DatasetError, TimeSeriesFrame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Task1,
    Task2,
}

/// One (input, target) training pair.
///
/// Task 1 inputs are `t_s x d`; Task 2 inputs are `(t_s + t_p) x d` with the
/// future power column zero-padded and future weather perturbed by
/// horizon-growing Gaussian noise.
#[derive(Debug, Clone)]
pub struct WindowSample {
    pub input: Tensor,
    pub target: Vec<f64>,
    pub t_anchor: NaiveDateTime,
    pub task_kind: TaskKind,
    /// Timestamps covering the input rows, for time-feature channels.
    pub input_times: Vec<NaiveDateTime>,
}

/// Task-2 noise settings: sigma(h) = sigma0 * exp(gamma * h / t_p) * feature_std.
#[derive(Debug, Clone, Copy)]
pub struct NoiseSpec {
    pub sigma0: f64,
    pub gamma: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            sigma0: 0.05,
            gamma: 1.0,
            seed: 0,
        }
    }
}

/// Sliding windows over a frame, materialized on demand.
///
/// Only continuous stretches are indexed: every emitted window spans
/// `t_s + t_p` rows whose consecutive timestamps differ by exactly one
/// granularity step.
#[derive(Clone)]
pub struct Windows {
    frame: Arc<TimeSeriesFrame>,
    starts: Vec<usize>,
    t_s: usize,
    t_p: usize,
    feature_std: Arc<Vec<f64>>,
}

impl Windows {
    pub fn new(frame: Arc<TimeSeriesFrame>, t_s: usize, t_p: usize, step: usize) -> Self {
        assert!(t_s >= 1 && t_p >= 1 && step >= 1);
        let span = t_s + t_p;
        let n = frame.n_rows();
        let g = frame.granularity();
        // gap[i] = discontinuity between row i and i+1
        let mut starts = Vec::new();
        if n >= span {
            let ts = frame.timestamps();
            let mut run_start = 0usize;
            let mut i = 0usize;
            while i + 1 <= n {
                let end_of_run = i + 1 == n || ts[i + 1] - ts[i] != g;
                if end_of_run {
                    let run_len = i + 1 - run_start;
                    if run_len >= span {
                        let mut s = run_start;
                        while s + span <= i + 1 {
                            starts.push(s);
                            s += step;
                        }
                    }
                    run_start = i + 1;
                }
                i += 1;
            }
        }
        let feature_std = Arc::new(frame.feature_std());
        Self {
            frame,
            starts,
            t_s,
            t_p,
            feature_std,
        }
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn frame(&self) -> &Arc<TimeSeriesFrame> {
        &self.frame
    }

    pub fn t_s(&self) -> usize {
        self.t_s
    }

    pub fn t_p(&self) -> usize {
        self.t_p
    }

    pub fn start(&self, i: usize) -> usize {
        self.starts[i]
    }

    /// Materialize window `i` as a Task-1 sample.
    pub fn get(&self, i: usize) -> WindowSample {
        let start = self.starts[i];
        let d = self.frame.n_features();
        let tgt = self.frame.target_index();
        let mut input = Vec::with_capacity(self.t_s * d);
        for r in start..start + self.t_s {
            input.extend_from_slice(self.frame.row(r));
        }
        let target: Vec<f64> = (start + self.t_s..start + self.t_s + self.t_p)
            .map(|r| self.frame.value(r, tgt))
            .collect();
        WindowSample {
            input: Tensor::new(vec![self.t_s, d], input).expect("window shape"),
            target,
            t_anchor: self.frame.timestamps()[start + self.t_s - 1],
            task_kind: TaskKind::Task1,
            input_times: self.frame.timestamps()[start..start + self.t_s].to_vec(),
        }
    }

    /// Materialize window `i` as a Task-2 sample, deterministic per
    /// (noise.seed, window start).
    pub fn get_task2(&self, i: usize, noise: &NoiseSpec) -> WindowSample {
        let start = self.starts[i];
        to_task2(
            &self.frame,
            start,
            self.t_s,
            self.t_p,
            noise,
            &self.feature_std,
        )
        .expect("window start validated at construction")
    }
}

/// Extend a Task-1 window into a Task-2 input: append the `t_p` future rows
/// with true weather plus Gaussian noise whose standard deviation grows
/// exponentially with the horizon, keeping the future power column at 0.
pub fn to_task2(
    frame: &TimeSeriesFrame,
    start: usize,
    t_s: usize,
    t_p: usize,
    noise: &NoiseSpec,
    feature_std: &[f64],
) -> Result<WindowSample, DatasetError> {
    use rand_distr::{Distribution, StandardNormal};
    let d = frame.n_features();
    let tgt = frame.target_index();
    if start + t_s + t_p > frame.n_rows() {
        return Err(DatasetError::MissingFuture(t_p));
    }
    let mut input = Vec::with_capacity((t_s + t_p) * d);
    for r in start..start + t_s {
        input.extend_from_slice(frame.row(r));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed ^ (start as u64).wrapping_mul(0x9E3779B97F4A7C15));
    for h in 1..=t_p {
        let r = start + t_s + h - 1;
        let sigma_h = noise.sigma0 * (noise.gamma * h as f64 / t_p as f64).exp();
        for j in 0..d {
            if j == tgt {
                input.push(0.0);
            } else {
                let eps: f64 = StandardNormal.sample(&mut rng);
                input.push(frame.value(r, j) + sigma_h * feature_std[j] * eps);
            }
        }
    }
    let target: Vec<f64> = (start + t_s..start + t_s + t_p)
        .map(|r| frame.value(r, tgt))
        .collect();
    Ok(WindowSample {
        input: Tensor::new(vec![t_s + t_p, d], input).expect("window shape"),
        target,
        t_anchor: frame.timestamps()[start + t_s - 1],
        task_kind: TaskKind::Task2,
        input_times: frame.timestamps()[start..start + t_s + t_p].to_vec(),
    })
}
