use chrono::{Datelike, NaiveDateTime, Timelike};
use rand::Rng;

use crate::autodiff::{AutodiffError, NodeId, Tape, Tensor};

use super::params::{uniform_fan_in, BoundParams, ParamStore};

/// Dropout rate inside the mixing blocks (FEM time/feature mixers).
pub const MIX_DROPOUT: f64 = 0.1;

/// Append 4 calendar channels, each affinely scaled to [-0.5, 0.5]:
/// hour-of-day, day-of-week, day-of-month, month.
pub fn add_time_features(
    tape: &mut Tape,
    x: NodeId,
    timestamps: &[NaiveDateTime],
) -> Result<NodeId, AutodiffError> {
    let t = tape.shape(x)[0];
    assert_eq!(t, timestamps.len());
    let mut data = Vec::with_capacity(t * 4);
    for ts in timestamps {
        data.push(ts.hour() as f64 / 23.0 - 0.5);
        data.push(ts.weekday().num_days_from_monday() as f64 / 6.0 - 0.5);
        data.push((ts.day() - 1) as f64 / 30.0 - 0.5);
        data.push((ts.month() - 1) as f64 / 11.0 - 0.5);
    }
    let feats = tape.constant(Tensor::new(vec![t, 4], data).expect("calendar shape"));
    tape.concat(&[x, feats], 1)
}

/// Moving-average trend plus residual seasonal part; seasonal + trend == x.
pub fn decompose(
    tape: &mut Tape,
    x: NodeId,
    kernel: usize,
) -> Result<(NodeId, NodeId), AutodiffError> {
    let trend = tape.moving_average(x, kernel)?;
    let seasonal = tape.sub(x, trend)?;
    Ok((seasonal, trend))
}

/// Trend = mean of moving averages over all kernels; seasonal = x - trend.
pub fn multi_scale_decompose(
    tape: &mut Tape,
    x: NodeId,
    kernels: &[usize],
) -> Result<(NodeId, NodeId), AutodiffError> {
    assert!(kernels.len() >= 2, "need at least two kernels");
    let mut acc = tape.moving_average(x, kernels[0])?;
    for &k in &kernels[1..] {
        let ma = tape.moving_average(x, k)?;
        acc = tape.add(acc, ma)?;
    }
    let trend = tape.scale(acc, 1.0 / kernels.len() as f64);
    let seasonal = tape.sub(x, trend)?;
    Ok((seasonal, trend))
}

pub fn linear_embed_init<R: Rng>(
    store: &mut ParamStore,
    prefix: &str,
    d: usize,
    hidden: usize,
    rng: &mut R,
) {
    store.add(&format!("{prefix}.w1"), uniform_fan_in(vec![d, hidden], d, rng));
    store.add(&format!("{prefix}.b1"), uniform_fan_in(vec![1, hidden], d, rng));
    store.add(&format!("{prefix}.w2"), uniform_fan_in(vec![hidden, d], hidden, rng));
    store.add(&format!("{prefix}.b2"), uniform_fan_in(vec![1, d], hidden, rng));
}

/// Linear embedding on the feature axis: D -> hidden -> D, no activation.
pub fn linear_embed(
    tape: &mut Tape,
    params: &BoundParams,
    prefix: &str,
    x: NodeId,
) -> Result<NodeId, AutodiffError> {
    let t = tape.shape(x)[0];
    let h = tape.matmul(x, params.get(&format!("{prefix}.w1")))?;
    let b1 = tape.expand_row(params.get(&format!("{prefix}.b1")), t)?;
    let h = tape.add(h, b1)?;
    let out = tape.matmul(h, params.get(&format!("{prefix}.w2")))?;
    let b2 = tape.expand_row(params.get(&format!("{prefix}.b2")), t)?;
    tape.add(out, b2)
}

pub fn time_feature_mix_init<R: Rng>(
    store: &mut ParamStore,
    prefix: &str,
    t: usize,
    d: usize,
    hidden: usize,
    rng: &mut R,
) {
    store.add(&format!("{prefix}.time.w1"), uniform_fan_in(vec![t, hidden], t, rng));
    store.add(&format!("{prefix}.time.b1"), uniform_fan_in(vec![1, hidden], t, rng));
    store.add(&format!("{prefix}.time.w2"), uniform_fan_in(vec![hidden, t], hidden, rng));
    store.add(&format!("{prefix}.time.b2"), uniform_fan_in(vec![1, t], hidden, rng));
    store.add(&format!("{prefix}.feat.w1"), uniform_fan_in(vec![d, hidden], d, rng));
    store.add(&format!("{prefix}.feat.b1"), uniform_fan_in(vec![1, hidden], d, rng));
    store.add(&format!("{prefix}.feat.w2"), uniform_fan_in(vec![hidden, d], hidden, rng));
    store.add(&format!("{prefix}.feat.b2"), uniform_fan_in(vec![1, d], hidden, rng));
}

fn mix_mlp<R: Rng>(
    tape: &mut Tape,
    params: &BoundParams,
    w1: &str,
    b1: &str,
    w2: &str,
    b2: &str,
    x: NodeId,
    rng: &mut R,
) -> Result<NodeId, AutodiffError> {
    let rows = tape.shape(x)[0];
    let h = tape.matmul(x, params.get(w1))?;
    let b = tape.expand_row(params.get(b1), rows)?;
    let h = tape.add(h, b)?;
    let h = tape.relu(h);
    let h = tape.dropout(h, MIX_DROPOUT, rng);
    let out = tape.matmul(h, params.get(w2))?;
    let b = tape.expand_row(params.get(b2), rows)?;
    tape.add(out, b)
}

/// Residual mixing along the time axis, then along the feature axis.
pub fn time_feature_mix<R: Rng>(
    tape: &mut Tape,
    params: &BoundParams,
    prefix: &str,
    x: NodeId,
    rng: &mut R,
) -> Result<NodeId, AutodiffError> {
    let xt = tape.transpose(x)?;
    let mixed_t = mix_mlp(
        tape,
        params,
        &format!("{prefix}.time.w1"),
        &format!("{prefix}.time.b1"),
        &format!("{prefix}.time.w2"),
        &format!("{prefix}.time.b2"),
        xt,
        rng,
    )?;
    let mixed_t = tape.transpose(mixed_t)?;
    let r1 = tape.add(x, mixed_t)?;

    let mixed_f = mix_mlp(
        tape,
        params,
        &format!("{prefix}.feat.w1"),
        &format!("{prefix}.feat.b1"),
        &format!("{prefix}.feat.w2"),
        &format!("{prefix}.feat.b2"),
        r1,
        rng,
    )?;
    tape.add(r1, mixed_f)
}

pub fn frequency_mix_init<R: Rng>(
    store: &mut ParamStore,
    prefix: &str,
    t: usize,
    d: usize,
    rng: &mut R,
) {
    let f = t / 2 + 1;
    store.add(&format!("{prefix}.ch.wr"), uniform_fan_in(vec![d, d], d, rng));
    store.add(&format!("{prefix}.ch.wi"), uniform_fan_in(vec![d, d], d, rng));
    store.add(&format!("{prefix}.fr.wr"), uniform_fan_in(vec![f, f], f, rng));
    store.add(&format!("{prefix}.fr.wi"), uniform_fan_in(vec![f, f], f, rng));
}

/// Frequency-domain mixing: rfft, complex linear maps across channels and
/// then across frequency bins, irfft back. No activation, so a complex
/// identity mix reduces to the FFT roundtrip.
pub fn frequency_mix(
    tape: &mut Tape,
    params: &BoundParams,
    prefix: &str,
    x: NodeId,
) -> Result<NodeId, AutodiffError> {
    let t = tape.shape(x)[0];
    let f = t / 2 + 1;
    let spec = tape.rfft(x)?;
    let xr = tape.slice(spec, 0, 0, f)?;
    let xi = tape.slice(spec, 0, f, f)?;

    // channel mix: Y = X * (Wr + i Wi)
    let wr = params.get(&format!("{prefix}.ch.wr"));
    let wi = params.get(&format!("{prefix}.ch.wi"));
    let rr = tape.matmul(xr, wr)?;
    let ii = tape.matmul(xi, wi)?;
    let yr = tape.sub(rr, ii)?;
    let ri = tape.matmul(xr, wi)?;
    let ir = tape.matmul(xi, wr)?;
    let yi = tape.add(ri, ir)?;

    // frequency-bin mix: Z = (Vr + i Vi) * Y
    let vr = params.get(&format!("{prefix}.fr.wr"));
    let vi = params.get(&format!("{prefix}.fr.wi"));
    let rr = tape.matmul(vr, yr)?;
    let ii = tape.matmul(vi, yi)?;
    let zr = tape.sub(rr, ii)?;
    let ri = tape.matmul(vi, yr)?;
    let ir = tape.matmul(vr, yi)?;
    let zi = tape.add(ri, ir)?;

    let stacked = tape.concat(&[zr, zi], 0)?;
    tape.irfft(stacked, t)
}
