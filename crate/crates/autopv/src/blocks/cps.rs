use rand::Rng;

use crate::autodiff::{AutodiffError, NodeId, Tape};

use super::params::{uniform_fan_in, BoundParams, ParamStore};
use super::BlockError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CpsKind {
    Lstm,
    Mlp,
    Cnn,
    Tcn,
}

/// Core predictive structure: maps T_in x D to per-feature forecasts T_out x D.
#[derive(Debug, Clone)]
pub struct CpsBlock {
    kind: CpsKind,
    layers: usize,
    hidden: usize,
    t_in: usize,
    t_out: usize,
    d_in: usize,
    prefix: String,
}

pub const CONV_KERNEL: usize = 3;

pub fn build_cps(
    kind: CpsKind,
    layers: usize,
    hidden: usize,
    t_in: usize,
    t_out: usize,
    d_in: usize,
    prefix: &str,
) -> Result<CpsBlock, BlockError> {
    if !(1..=3).contains(&layers) {
        return Err(BlockError::InvalidOption {
            what: "cps layers",
            option: layers.to_string(),
        });
    }
    if ![64, 128, 256, 512].contains(&hidden) {
        return Err(BlockError::InvalidOption {
            what: "cps hidden size",
            option: hidden.to_string(),
        });
    }
    assert!(t_in >= 1 && t_out >= 1 && d_in >= 1);
    Ok(CpsBlock {
        kind,
        layers,
        hidden,
        t_in,
        t_out,
        d_in,
        prefix: prefix.to_string(),
    })
}

impl CpsBlock {
    pub fn t_out(&self) -> usize {
        self.t_out
    }

    /// Per-layer (in, out) sizes of the MLP time maps; a 1-layer MLP is a
    /// single linear map with no activation.
    fn mlp_dims(&self) -> Vec<(usize, usize)> {
        match self.layers {
            1 => vec![(self.t_in, self.t_out)],
            2 => vec![(self.t_in, self.hidden), (self.hidden, self.t_out)],
            _ => vec![
                (self.t_in, self.hidden),
                (self.hidden, self.hidden),
                (self.hidden, self.t_out),
            ],
        }
    }

    pub fn init<R: Rng>(&self, store: &mut ParamStore, rng: &mut R) {
        let p = &self.prefix;
        match self.kind {
            CpsKind::Mlp => {
                for (l, (a, b)) in self.mlp_dims().into_iter().enumerate() {
                    store.add(&format!("{p}.l{l}.w"), uniform_fan_in(vec![a, b], a, rng));
                    store.add(&format!("{p}.l{l}.b"), uniform_fan_in(vec![1, b], a, rng));
                }
            }
            CpsKind::Lstm => {
                for l in 0..self.layers {
                    let din = if l == 0 { self.d_in } else { self.hidden };
                    let fan = din + self.hidden;
                    store.add(
                        &format!("{p}.l{l}.w"),
                        uniform_fan_in(vec![fan, 4 * self.hidden], fan, rng),
                    );
                    store.add(
                        &format!("{p}.l{l}.b"),
                        uniform_fan_in(vec![1, 4 * self.hidden], fan, rng),
                    );
                }
                let out = self.t_out * self.d_in;
                store.add(
                    &format!("{p}.head.w"),
                    uniform_fan_in(vec![self.hidden, out], self.hidden, rng),
                );
                store.add(
                    &format!("{p}.head.b"),
                    uniform_fan_in(vec![1, out], self.hidden, rng),
                );
            }
            CpsKind::Cnn | CpsKind::Tcn => {
                for l in 0..self.layers {
                    let cin = if l == 0 { self.d_in } else { self.hidden };
                    let fan = CONV_KERNEL * cin;
                    store.add(
                        &format!("{p}.l{l}.w"),
                        uniform_fan_in(vec![CONV_KERNEL, cin, self.hidden], fan, rng),
                    );
                    store.add(
                        &format!("{p}.l{l}.b"),
                        uniform_fan_in(vec![1, self.hidden], fan, rng),
                    );
                }
                store.add(
                    &format!("{p}.time.w"),
                    uniform_fan_in(vec![self.t_in, self.t_out], self.t_in, rng),
                );
                store.add(
                    &format!("{p}.time.b"),
                    uniform_fan_in(vec![1, self.t_out], self.t_in, rng),
                );
                store.add(
                    &format!("{p}.chan.w"),
                    uniform_fan_in(vec![self.hidden, self.d_in], self.hidden, rng),
                );
                store.add(
                    &format!("{p}.chan.b"),
                    uniform_fan_in(vec![1, self.d_in], self.hidden, rng),
                );
            }
        }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &BoundParams,
        x: NodeId,
    ) -> Result<NodeId, AutodiffError> {
        debug_assert_eq!(tape.shape(x), &[self.t_in, self.d_in]);
        match self.kind {
            CpsKind::Mlp => self.forward_mlp(tape, params, x),
            CpsKind::Lstm => self.forward_lstm(tape, params, x),
            CpsKind::Cnn => self.forward_conv(tape, params, x, false),
            CpsKind::Tcn => self.forward_conv(tape, params, x, true),
        }
    }

    fn forward_mlp(
        &self,
        tape: &mut Tape,
        params: &BoundParams,
        x: NodeId,
    ) -> Result<NodeId, AutodiffError> {
        let p = &self.prefix;
        let dims = self.mlp_dims();
        let mut z = tape.transpose(x)?;
        for (l, _) in dims.iter().enumerate() {
            let w = params.get(&format!("{p}.l{l}.w"));
            let b = params.get(&format!("{p}.l{l}.b"));
            z = tape.matmul(z, w)?;
            let be = tape.expand_row(b, self.d_in)?;
            z = tape.add(z, be)?;
            if l + 1 < dims.len() {
                z = tape.relu(z);
            }
        }
        tape.transpose(z)
    }

    fn forward_lstm(
        &self,
        tape: &mut Tape,
        params: &BoundParams,
        x: NodeId,
    ) -> Result<NodeId, AutodiffError> {
        let p = &self.prefix;
        let hs = self.hidden;
        let mut seq = x;
        let mut last_h = None;
        for l in 0..self.layers {
            let w = params.get(&format!("{p}.l{l}.w"));
            let b = params.get(&format!("{p}.l{l}.b"));
            let mut h = tape.constant(crate::autodiff::Tensor::zeros(vec![1, hs]));
            let mut c = tape.constant(crate::autodiff::Tensor::zeros(vec![1, hs]));
            let mut outputs = Vec::with_capacity(self.t_in);
            for t in 0..self.t_in {
                let xt = tape.slice(seq, 0, t, 1)?;
                let zin = tape.concat(&[xt, h], 1)?;
                let g = tape.matmul(zin, w)?;
                let g = tape.add(g, b)?;
                let i_pre = tape.slice(g, 1, 0, hs)?;
                let f_pre = tape.slice(g, 1, hs, hs)?;
                let g_pre = tape.slice(g, 1, 2 * hs, hs)?;
                let o_pre = tape.slice(g, 1, 3 * hs, hs)?;
                let i = tape.sigmoid(i_pre);
                let f = tape.sigmoid(f_pre);
                let gg = tape.tanh(g_pre);
                let o = tape.sigmoid(o_pre);
                let fc = tape.mul(f, c)?;
                let ig = tape.mul(i, gg)?;
                c = tape.add(fc, ig)?;
                let ct = tape.tanh(c);
                h = tape.mul(o, ct)?;
                outputs.push(h);
            }
            seq = tape.concat(&outputs, 0)?;
            last_h = Some(h);
        }
        let w = params.get(&format!("{p}.head.w"));
        let b = params.get(&format!("{p}.head.b"));
        let y = tape.matmul(last_h.expect("at least one layer"), w)?;
        let y = tape.add(y, b)?;
        tape.reshape(y, vec![self.t_out, self.d_in])
    }

    fn forward_conv(
        &self,
        tape: &mut Tape,
        params: &BoundParams,
        x: NodeId,
        causal: bool,
    ) -> Result<NodeId, AutodiffError> {
        let p = &self.prefix;
        let mut z = x;
        for l in 0..self.layers {
            let w = params.get(&format!("{p}.l{l}.w"));
            let b = params.get(&format!("{p}.l{l}.b"));
            let dilation = if causal { 1 << l } else { 1 };
            z = tape.conv1d(z, w, dilation, causal)?;
            let be = tape.expand_row(b, self.t_in)?;
            z = tape.add(z, be)?;
            z = tape.relu(z);
        }
        // time head T_in -> T_out, then channel head hidden -> D
        let zt = tape.transpose(z)?;
        let tw = params.get(&format!("{p}.time.w"));
        let tb = params.get(&format!("{p}.time.b"));
        let zt = tape.matmul(zt, tw)?;
        let tbe = tape.expand_row(tb, self.hidden)?;
        let zt = tape.add(zt, tbe)?;
        let z = tape.transpose(zt)?;
        let cw = params.get(&format!("{p}.chan.w"));
        let cb = params.get(&format!("{p}.chan.b"));
        let y = tape.matmul(z, cw)?;
        let cbe = tape.expand_row(cb, self.t_out)?;
        tape.add(y, cbe)
    }
}

pub fn aggregate_head_init<R: Rng>(store: &mut ParamStore, prefix: &str, d: usize, rng: &mut R) {
    store.add(&format!("{prefix}.w"), uniform_fan_in(vec![d, 1], d, rng));
    store.add(&format!("{prefix}.b"), uniform_fan_in(vec![1, 1], d, rng));
}

/// One fully connected map across the feature dimension, shared over
/// timesteps: T_p x D -> T_p x 1.
pub fn aggregate_head(
    tape: &mut Tape,
    params: &BoundParams,
    prefix: &str,
    y: NodeId,
) -> Result<NodeId, AutodiffError> {
    let t = tape.shape(y)[0];
    let w = params.get(&format!("{prefix}.w"));
    let b = params.get(&format!("{prefix}.b"));
    let out = tape.matmul(y, w)?;
    let be = tape.expand_row(b, t)?;
    tape.add(out, be)
}

pub fn time_map_init<R: Rng>(
    store: &mut ParamStore,
    prefix: &str,
    t_in: usize,
    t_out: usize,
    rng: &mut R,
) {
    store.add(&format!("{prefix}.w"), uniform_fan_in(vec![t_in, t_out], t_in, rng));
    store.add(&format!("{prefix}.b"), uniform_fan_in(vec![1, t_out], t_in, rng));
}

/// Fully connected map along the time axis, shared across features:
/// T_in x D -> T_out x D.
pub fn time_map(
    tape: &mut Tape,
    params: &BoundParams,
    prefix: &str,
    x: NodeId,
) -> Result<NodeId, AutodiffError> {
    let d = tape.shape(x)[1];
    let w = params.get(&format!("{prefix}.w"));
    let b = params.get(&format!("{prefix}.b"));
    let zt = tape.transpose(x)?;
    let zt = tape.matmul(zt, w)?;
    let be = tape.expand_row(b, d)?;
    let zt = tape.add(zt, be)?;
    tape.transpose(zt)
}
