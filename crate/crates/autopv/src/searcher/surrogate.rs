use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Tensor};
use crate::blocks::{uniform_fan_in, ParamStore};
use crate::evaluator::{EvalRecord, Optimizer};
use crate::search_space::{Genotype, Of, ENCODING_LEN};

use super::SearchError;

/// Settings for the error-predicting ensemble.
#[derive(Debug, Clone, Copy)]
pub struct SurrogateConfig {
    pub ensemble_size: usize,
    pub width: usize,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            ensemble_size: 5,
            width: 64,
            epochs: 200,
            lr: 0.001,
        }
    }
}

/// Ensemble of small feed-forward regressors mapping the one-hot genotype
/// encoding to predicted measured error. Targets are standardized during
/// fitting; predictions are mapped back.
pub struct SurrogateEnsemble {
    members: Vec<ParamStore>,
    width: usize,
    y_mean: f64,
    y_std: f64,
}

fn member_params(width: usize, seed: u64) -> ParamStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ParamStore::new();
    p.add("w1", uniform_fan_in(vec![ENCODING_LEN, width], ENCODING_LEN, &mut rng));
    p.add("b1", uniform_fan_in(vec![1, width], ENCODING_LEN, &mut rng));
    p.add("w2", uniform_fan_in(vec![width, 1], width, &mut rng));
    p.add("b2", uniform_fan_in(vec![1, 1], width, &mut rng));
    p
}

/// Train each member from a distinct random init on all finite records.
pub fn fit_surrogate(
    records: &[EvalRecord],
    cfg: &SurrogateConfig,
    seed: u64,
) -> Result<SurrogateEnsemble, SearchError> {
    assert!(cfg.ensemble_size >= 2, "Thompson sampling needs diversity");
    let finite: Vec<&EvalRecord> = records.iter().filter(|r| r.is_finite()).collect();
    if finite.len() < 2 {
        return Err(SearchError::InsufficientData {
            have: finite.len(),
            need: 2,
        });
    }
    let n = finite.len();
    let mut x_data = Vec::with_capacity(n * ENCODING_LEN);
    for r in &finite {
        x_data.extend_from_slice(&r.genotype.features());
    }
    let x = Tensor::new(vec![n, ENCODING_LEN], x_data).expect("feature matrix");
    let ys: Vec<f64> = finite.iter().map(|r| r.measured_error).collect();
    let y_mean = ys.iter().sum::<f64>() / n as f64;
    let var = ys.iter().map(|y| (y - y_mean) * (y - y_mean)).sum::<f64>() / n as f64;
    let y_std = if var > 0.0 { var.sqrt() } else { 1.0 };
    let targets: Vec<f64> = ys.iter().map(|y| (y - y_mean) / y_std).collect();
    let y = Tensor::new(vec![n, 1], targets).expect("target column");

    let mut members = Vec::with_capacity(cfg.ensemble_size);
    for m in 0..cfg.ensemble_size {
        let mut params = member_params(
            cfg.width,
            seed.wrapping_add((m as u64).wrapping_mul(0x9E3779B97F4A7C15)),
        );
        let mut opt = Optimizer::new(Of::Adam, cfg.lr, &params);
        for _ in 0..cfg.epochs {
            let mut tape = Tape::new(true);
            let bound = params.bind(&mut tape);
            let xb = tape.constant(x.clone());
            let yb = tape.constant(y.clone());
            let h = tape.matmul(xb, bound.get("w1")).expect("shapes");
            let b1 = tape.expand_row(bound.get("b1"), n).expect("shapes");
            let h = tape.add(h, b1).expect("shapes");
            let h = tape.relu(h);
            let p = tape.matmul(h, bound.get("w2")).expect("shapes");
            let b2 = tape.expand_row(bound.get("b2"), n).expect("shapes");
            let p = tape.add(p, b2).expect("shapes");
            let diff = tape.sub(p, yb).expect("shapes");
            let sq = tape.mul(diff, diff).expect("shapes");
            let loss = tape.mean_all(sq);
            let grads = tape.backward(loss).expect("scalar loss");
            opt.step(&mut params, &bound, &grads);
        }
        members.push(params);
    }
    Ok(SurrogateEnsemble {
        members,
        width: cfg.width,
        y_mean,
        y_std,
    })
}

impl SurrogateEnsemble {
    #[cfg(test)]
    pub(crate) fn with_members(members: Vec<ParamStore>, width: usize, y_mean: f64, y_std: f64) -> Self {
        Self {
            members,
            width,
            y_mean,
            y_std,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Prediction of one member, in original error units.
    pub fn predict_member(&self, member: usize, g: Genotype) -> f64 {
        let p = &self.members[member];
        let x = g.features();
        let w1 = p.get("w1").data();
        let b1 = p.get("b1").data();
        let w2 = p.get("w2").data();
        let b2 = p.get("b2").data();
        let w = self.width;
        let mut out = b2[0];
        for j in 0..w {
            let mut h = b1[j];
            for (i, &xi) in x.iter().enumerate() {
                if xi != 0.0 {
                    h += xi * w1[i * w + j];
                }
            }
            if h > 0.0 {
                out += h * w2[j];
            }
        }
        out * self.y_std + self.y_mean
    }

    pub fn predict_mean(&self, g: Genotype) -> f64 {
        let s: f64 = (0..self.members.len())
            .map(|m| self.predict_member(m, g))
            .sum();
        s / self.members.len() as f64
    }

    /// Sample variance of member predictions.
    pub fn predict_variance(&self, g: Genotype) -> f64 {
        let preds: Vec<f64> = (0..self.members.len())
            .map(|m| self.predict_member(m, g))
            .collect();
        let mean = preds.iter().sum::<f64>() / preds.len() as f64;
        preds.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / preds.len() as f64
    }

    /// Flat weight dump per member, for determinism checks.
    pub fn member_weights(&self, member: usize) -> Vec<f64> {
        self.members[member].flatten()
    }
}
