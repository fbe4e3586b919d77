use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{AutodiffError, NodeId, Tape, Tensor};

use super::params::{constant, identity, BoundParams, ParamStore};

/// Training-time Gaussian noise: x + N(0, (sigma_frac * feature_std_j)^2).
/// Identity in eval mode or when sigma_frac = 0.
pub fn gaussian_augment<R: Rng>(
    tape: &mut Tape,
    x: NodeId,
    sigma_frac: f64,
    feature_std: &[f64],
    rng: &mut R,
) -> Result<NodeId, AutodiffError> {
    assert!(sigma_frac >= 0.0);
    if !tape.is_train() || sigma_frac == 0.0 {
        return Ok(x);
    }
    let shape = tape.shape(x).to_vec();
    let (t, d) = (shape[0], shape[1]);
    assert_eq!(d, feature_std.len());
    let mut noise = Vec::with_capacity(t * d);
    for _ in 0..t {
        for s in feature_std {
            let eps: f64 = StandardNormal.sample(rng);
            noise.push(sigma_frac * s * eps);
        }
    }
    let n = tape.constant(Tensor::new(shape, noise).expect("noise shape"));
    tape.add(x, n)
}

/// Per-instance stats captured by [`revin_norm`] for later denormalization.
pub struct RevinStats {
    pub mean: NodeId,
    pub sigma: NodeId,
}

pub fn revin_init(store: &mut ParamStore, prefix: &str, d: usize) {
    store.add(&format!("{prefix}.gain"), constant(vec![1, d], 1.0));
    store.add(&format!("{prefix}.bias"), constant(vec![1, d], 0.0));
}

/// Per-instance standardization with learnable affine.
/// sigma = sqrt(var + 1e-10) + 1e-5 guards zero-variance features.
pub fn revin_norm(
    tape: &mut Tape,
    params: &BoundParams,
    prefix: &str,
    x: NodeId,
) -> Result<(NodeId, RevinStats), AutodiffError> {
    let t = tape.shape(x)[0];
    let mean = tape.mean_axis0(x)?;
    let mean_e = tape.expand_row(mean, t)?;
    let centered = tape.sub(x, mean_e)?;
    let sq = tape.mul(centered, centered)?;
    let var = tape.mean_axis0(sq)?;
    let var_g = tape.add_scalar(var, 1e-10);
    let sd = tape.sqrt(var_g);
    let sigma = tape.add_scalar(sd, 1e-5);
    let sigma_e = tape.expand_row(sigma, t)?;
    let z = tape.div(centered, sigma_e)?;
    let gain = tape.expand_row(params.get(&format!("{prefix}.gain")), t)?;
    let bias = tape.expand_row(params.get(&format!("{prefix}.bias")), t)?;
    let scaled = tape.mul(z, gain)?;
    let out = tape.add(scaled, bias)?;
    Ok((out, RevinStats { mean, sigma }))
}

/// Invert [`revin_norm`] on the output sequence using the stored stats of
/// the target feature: y -> sigma_t * (y - bias_t) / gain_t + mean_t.
pub fn revin_denorm(
    tape: &mut Tape,
    params: &BoundParams,
    prefix: &str,
    y: NodeId,
    stats: &RevinStats,
    target_col: usize,
) -> Result<NodeId, AutodiffError> {
    let t = tape.shape(y)[0];
    let col = [target_col];
    let gain = tape.select_cols(params.get(&format!("{prefix}.gain")), &col)?;
    let bias = tape.select_cols(params.get(&format!("{prefix}.bias")), &col)?;
    let mean = tape.select_cols(stats.mean, &col)?;
    let sigma = tape.select_cols(stats.sigma, &col)?;
    let bias_e = tape.expand_row(bias, t)?;
    let gain_e = tape.expand_row(gain, t)?;
    let mean_e = tape.expand_row(mean, t)?;
    let sigma_e = tape.expand_row(sigma, t)?;
    let shifted = tape.sub(y, bias_e)?;
    let z = tape.div(shifted, gain_e)?;
    let scaled = tape.mul(z, sigma_e)?;
    tape.add(scaled, mean_e)
}

/// Identity-behavior initialization: shift and scale maps start as the
/// identity matrix, the gate starts fully open (weights 0, bias +8).
pub fn dain_init(store: &mut ParamStore, prefix: &str, d: usize) {
    store.add(&format!("{prefix}.wa"), identity(d));
    store.add(&format!("{prefix}.wb"), identity(d));
    store.add(&format!("{prefix}.wc"), Tensor::zeros(vec![d, d]));
    store.add(&format!("{prefix}.bc"), constant(vec![1, d], 8.0));
}

/// Adaptive shift, scale, and gating; at init this is plain per-instance
/// standardization with a near-1 gate.
pub fn dain_transform(
    tape: &mut Tape,
    params: &BoundParams,
    prefix: &str,
    x: NodeId,
) -> Result<NodeId, AutodiffError> {
    let t = tape.shape(x)[0];
    let mean = tape.mean_axis0(x)?;
    let shift = tape.matmul(mean, params.get(&format!("{prefix}.wa")))?;
    let shift_e = tape.expand_row(shift, t)?;
    let x1 = tape.sub(x, shift_e)?;

    let sq = tape.mul(x1, x1)?;
    let var = tape.mean_axis0(sq)?;
    let var_g = tape.add_scalar(var, 1e-10);
    let sd = tape.sqrt(var_g);
    let scale = tape.matmul(sd, params.get(&format!("{prefix}.wb")))?;
    let scale_g = tape.add_scalar(scale, 1e-8);
    let scale_e = tape.expand_row(scale_g, t)?;
    let x2 = tape.div(x1, scale_e)?;

    let summary = tape.mean_axis0(x2)?;
    let pre = tape.matmul(summary, params.get(&format!("{prefix}.wc")))?;
    let pre_b = tape.add(pre, params.get(&format!("{prefix}.bc")))?;
    let gate = tape.sigmoid(pre_b);
    let gate_e = tape.expand_row(gate, t)?;
    tape.mul(x2, gate_e)
}
