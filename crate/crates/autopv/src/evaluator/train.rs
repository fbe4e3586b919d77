use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Gradients, Tape, Tensor};
use crate::blocks::{BoundParams, ParamStore};
use crate::dataset::{NoiseSpec, TaskKind, WindowSample, Windows};
use crate::search_space::{AssembledModel, Genotype, Of};

/// Stage-4 training settings extracted from a genotype plus run-level knobs.
#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub lr: f64,
    pub optimizer: Of,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn from_genotype(g: Genotype, max_epochs: usize, patience: usize, seed: u64) -> Self {
        assert!(max_epochs >= 1 && patience >= 1);
        Self {
            lr: g.lr.value(),
            optimizer: g.of,
            batch_size: g.bs.value(),
            max_epochs,
            patience,
            seed,
        }
    }
}

/// First-order optimizer over a [`ParamStore`], state aligned by entry index.
pub struct Optimizer {
    kind: Of,
    lr: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u32,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: Of, lr: f64, params: &ParamStore) -> Self {
        let sizes: Vec<usize> = (0..params.len())
            .map(|i| params.tensor_at(i).numel())
            .collect();
        Self {
            kind,
            lr,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut ParamStore, bound: &BoundParams, grads: &Gradients) {
        self.t += 1;
        let names: Vec<String> = params.names().to_vec();
        for (i, name) in names.iter().enumerate() {
            let Some(g) = grads.wrt(bound.get(name)) else {
                continue;
            };
            let g = g.to_vec();
            let data = params.tensor_at_mut(i).data_mut();
            match self.kind {
                Of::Sgd => {
                    for (p, gi) in data.iter_mut().zip(&g) {
                        *p -= self.lr * gi;
                    }
                }
                Of::Adam => {
                    let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
                    let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
                    for (j, (p, gi)) in data.iter_mut().zip(&g).enumerate() {
                        let m = &mut self.m[i][j];
                        let v = &mut self.v[i][j];
                        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * gi;
                        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * gi * gi;
                        let mh = *m / bc1;
                        let vh = *v / bc2;
                        *p -= self.lr * mh / (vh.sqrt() + ADAM_EPS);
                    }
                }
            }
        }
    }
}

/// Early stopping on validation error with strict-improvement tracking.
pub struct EarlyStopper {
    patience: usize,
    pub best: f64,
    pub best_epoch: usize,
    stale: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        assert!(patience >= 1);
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    /// Returns (improved, stop) for the validation value of `epoch`.
    pub fn observe(&mut self, epoch: usize, val: f64) -> (bool, bool) {
        if val < self.best {
            self.best = val;
            self.best_epoch = epoch;
            self.stale = 0;
            (true, false)
        } else {
            self.stale += 1;
            (false, self.stale >= self.patience)
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Per-epoch (train loss, validation MAE).
    pub history: Vec<(f64, f64)>,
    pub epochs_run: usize,
    pub best_val: f64,
    pub diverged: bool,
}

pub fn fetch_sample(w: &Windows, task: TaskKind, noise: &NoiseSpec, i: usize) -> WindowSample {
    match task {
        TaskKind::Task1 => w.get(i),
        TaskKind::Task2 => w.get_task2(i, noise),
    }
}

/// Mean absolute error of `model` over every window of `w`, equal weight
/// per forecast point.
pub fn score(model: &AssembledModel, w: &Windows, noise: &NoiseSpec) -> f64 {
    let task = model.task().task_kind;
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(0); // eval mode ignores it
    for i in 0..w.len() {
        let sample = fetch_sample(w, task, noise, i);
        let mut tape = Tape::new(false);
        let x = tape.constant(sample.input.clone());
        let bound = model.bind(&mut tape);
        let Ok(pred) = model.forward(&mut tape, &bound, x, &sample.input_times, &mut rng) else {
            return f64::INFINITY;
        };
        for (p, t) in tape.data(pred).iter().zip(&sample.target) {
            sum += (p - t).abs();
            count += 1;
        }
    }
    if count == 0 || !sum.is_finite() {
        f64::INFINITY
    } else {
        sum / count as f64
    }
}

/// Minimize L1 loss with shuffled mini-batches; stop when validation MAE has
/// not improved for `patience` epochs and restore the best-epoch parameters.
/// Divergence (non-finite loss) aborts with `diverged = true`.
pub fn train(
    model: &mut AssembledModel,
    train_w: &Windows,
    val_w: &Windows,
    noise: &NoiseSpec,
    cfg: &TrainConfig,
) -> TrainOutcome {
    assert!(train_w.len() > 0 && val_w.len() > 0, "nonempty window sets");
    let task = model.task().task_kind;
    let n = train_w.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr, &model.params);
    let mut stopper = EarlyStopper::new(cfg.patience);
    let mut best_params = model.params.clone();
    let mut history = Vec::new();
    let mut diverged = false;

    'epochs: for epoch in 0..cfg.max_epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut tape = Tape::new(true);
            let bound = model.bind(&mut tape);
            let mut losses = Vec::with_capacity(batch.len());
            for &i in batch {
                let sample = fetch_sample(train_w, task, noise, i);
                let x = tape.constant(sample.input.clone());
                let pred = model
                    .forward(&mut tape, &bound, x, &sample.input_times, &mut rng)
                    .expect("assembled shapes are consistent");
                let t_p = sample.target.len();
                let tgt = tape.constant(
                    Tensor::new(vec![t_p, 1], sample.target.clone()).expect("target shape"),
                );
                let diff = tape.sub(pred, tgt).expect("same shape");
                let ad = tape.abs(diff);
                losses.push(tape.mean_all(ad));
            }
            let mut acc = losses[0];
            for &l in &losses[1..] {
                acc = tape.add(acc, l).expect("scalars");
            }
            let batch_loss = tape.scale(acc, 1.0 / batch.len() as f64);
            let lv = tape.data(batch_loss)[0];
            if !lv.is_finite() {
                diverged = true;
                break 'epochs;
            }
            loss_sum += lv * batch.len() as f64;
            let grads = tape.backward(batch_loss).expect("scalar loss");
            opt.step(&mut model.params, &bound, &grads);
        }
        let train_loss = loss_sum / n as f64;
        let val_mae = score(model, val_w, noise);
        if !val_mae.is_finite() {
            diverged = true;
            break;
        }
        history.push((train_loss, val_mae));
        let (improved, stop) = stopper.observe(epoch, val_mae);
        if improved {
            best_params.copy_from(&model.params);
        }
        if stop {
            break;
        }
    }

    if !diverged && !history.is_empty() {
        model.params.copy_from(&best_params);
    }
    TrainOutcome {
        epochs_run: history.len(),
        best_val: if diverged { f64::INFINITY } else { stopper.best },
        history,
        diverged,
    }
}
