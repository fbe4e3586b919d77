use chrono::NaiveDateTime;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{AutodiffError, NodeId, Tape};
use crate::blocks::{
    add_time_features, aggregate_head, aggregate_head_init, build_cps, dain_init, dain_transform,
    decompose, frequency_mix, frequency_mix_init, gaussian_augment, linear_embed,
    linear_embed_init, mrmr_select, multi_scale_decompose, pearson_select, revin_denorm,
    revin_init, revin_norm, time_feature_mix, time_feature_mix_init, time_map, time_map_init,
    BlockError, BoundParams, CpsBlock, CpsKind, FeatureMask, ParamStore,
};
use crate::dataset::{TaskKind, TimeSeriesFrame};

use super::genotype::{Cps, Dgm, Fam, Fem, Fsm, Genotype, Sm};

/// Forecasting task geometry: the input covers `t_s` historical rows, plus
/// `t_p` future-weather rows in Task-2 mode.
#[derive(Debug, Clone, Copy)]
pub struct TaskSpec {
    pub task_kind: TaskKind,
    pub t_s: usize,
    pub t_p: usize,
}

impl TaskSpec {
    pub fn t_in(&self) -> usize {
        match self.task_kind {
            TaskKind::Task1 => self.t_s,
            TaskKind::Task2 => self.t_s + self.t_p,
        }
    }
}

/// Default moving-average kernel of the decomposing extractors.
pub const DECOMP_KERNEL: usize = 25;
pub const MULTI_SCALE_KERNELS: [usize; 3] = [13, 17, 25];
/// Training-time noise fraction of the Gaussian augmentation gene.
pub const DGM_SIGMA_FRAC: f64 = 0.01;

/// A genotype wired into a trainable pipeline with initialized parameters.
pub struct AssembledModel {
    pub genotype: Genotype,
    pub mask: FeatureMask,
    pub params: ParamStore,
    /// Moving-average kernel for the single-scale decomposition.
    pub decomp_kernel: usize,
    /// Kernels for the multi-scale decomposition.
    pub multi_scale_kernels: Vec<usize>,
    task: TaskSpec,
    cps: CpsBlock,
    /// Index of the power column inside the masked feature set.
    target_col: usize,
    /// Per-masked-column std of the training split, for noise scaling.
    feature_std: Vec<f64>,
    d_masked: usize,
    d_eff: usize,
}

fn cps_kind(c: Cps) -> CpsKind {
    match c {
        Cps::Lstm => CpsKind::Lstm,
        Cps::Mlp => CpsKind::Mlp,
        Cps::Cnn => CpsKind::Cnn,
        Cps::Tcn => CpsKind::Tcn,
    }
}

/// Build the full pipeline for `g`: feature mask fitted on the training
/// split, then parameters for stationarization, feature extraction, the core
/// predictive structure, the trend branch (decomposing extractors only), and
/// the aggregation head. Initialization is deterministic per (genotype, seed).
pub fn assemble(
    g: Genotype,
    task: TaskSpec,
    train_frame: &TimeSeriesFrame,
    seed: u64,
) -> Result<AssembledModel, BlockError> {
    let g = g.canonical();
    let mask = match g.fsm {
        Fsm::NoFilter => FeatureMask::keep_all(train_frame.n_features()),
        Fsm::Pearson => pearson_select(train_frame, g.fst.value()),
        Fsm::Mrmr => mrmr_select(train_frame, g.fst.value()),
    };
    let kept = mask.kept_indices();
    let all_std = train_frame.feature_std();
    let feature_std: Vec<f64> = kept.iter().map(|&j| all_std[j]).collect();
    assemble_with_mask(g, task, mask, feature_std, train_frame.target_index(), seed)
}

/// Assemble from a precomputed feature mask and per-kept-column stds, for
/// rebuilding a searched model outside the training pipeline.
/// `target_index` is the power column in the unmasked feature set.
pub fn assemble_with_mask(
    g: Genotype,
    task: TaskSpec,
    mask: FeatureMask,
    feature_std: Vec<f64>,
    target_index: usize,
    seed: u64,
) -> Result<AssembledModel, BlockError> {
    let g = g.canonical();
    let kept = mask.kept_indices();
    let d_masked = kept.len();
    assert_eq!(feature_std.len(), d_masked);
    let target_col = kept
        .iter()
        .position(|&j| j == target_index)
        .expect("target always kept");

    let d_eff = d_masked + if g.fam == Fam::TimeFeatures { 4 } else { 0 };
    let t_in = task.t_in();
    let hs = g.hs.value();

    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E3779B97F4A7C15) ^ g.key());
    let mut params = ParamStore::new();
    match g.sm {
        Sm::None => {}
        Sm::RevIn => revin_init(&mut params, "sm", d_masked),
        Sm::Dain => dain_init(&mut params, "sm", d_masked),
    }
    match g.fem {
        Fem::None => {}
        Fem::LinearEmbed => linear_embed_init(&mut params, "fem", d_eff, hs, &mut rng),
        Fem::Decomp | Fem::MultiScaleDecomp => {
            time_map_init(&mut params, "trend", t_in, task.t_p, &mut rng)
        }
        Fem::TimeFeatureMix => time_feature_mix_init(&mut params, "fem", t_in, d_eff, hs, &mut rng),
        Fem::FreqMix => frequency_mix_init(&mut params, "fem", t_in, d_eff, &mut rng),
    }
    let cps = build_cps(
        cps_kind(g.cps),
        g.ln.value(),
        hs,
        t_in,
        task.t_p,
        d_eff,
        "cps",
    )?;
    cps.init(&mut params, &mut rng);
    aggregate_head_init(&mut params, "head", d_eff, &mut rng);

    Ok(AssembledModel {
        genotype: g,
        mask,
        params,
        decomp_kernel: DECOMP_KERNEL,
        multi_scale_kernels: MULTI_SCALE_KERNELS.to_vec(),
        task,
        cps,
        target_col,
        feature_std,
        d_masked,
        d_eff,
    })
}

impl AssembledModel {
    pub fn param_count(&self) -> usize {
        self.params.param_count()
    }

    pub fn task(&self) -> TaskSpec {
        self.task
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        self.params.bind(tape)
    }

    /// Run the pipeline on a raw input window `x` (t_in rows, unmasked
    /// feature count) with its row timestamps. `rng` drives training-time
    /// noise and dropout; eval-mode tapes ignore it.
    pub fn forward<R: Rng>(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        x: NodeId,
        times: &[NaiveDateTime],
        rng: &mut R,
    ) -> Result<NodeId, AutodiffError> {
        let g = &self.genotype;
        let mut z = tape.select_cols(x, &self.mask.kept_indices())?;
        debug_assert_eq!(tape.shape(z), &[self.task.t_in(), self.d_masked]);

        if g.dgm == Dgm::Gaussian {
            z = gaussian_augment(tape, z, DGM_SIGMA_FRAC, &self.feature_std, rng)?;
        }

        let mut revin_stats = None;
        match g.sm {
            Sm::None => {}
            Sm::RevIn => {
                let (zn, stats) = revin_norm(tape, bound, "sm", z)?;
                z = zn;
                revin_stats = Some(stats);
            }
            Sm::Dain => z = dain_transform(tape, bound, "sm", z)?,
        }

        if g.fam == Fam::TimeFeatures {
            z = add_time_features(tape, z, times)?;
        }
        debug_assert_eq!(tape.shape(z)[1], self.d_eff);

        let mut trend_branch = None;
        match g.fem {
            Fem::None => {}
            Fem::LinearEmbed => z = linear_embed(tape, bound, "fem", z)?,
            Fem::Decomp => {
                let (seasonal, trend) = decompose(tape, z, self.decomp_kernel)?;
                z = seasonal;
                trend_branch = Some(time_map(tape, bound, "trend", trend)?);
            }
            Fem::MultiScaleDecomp => {
                let (seasonal, trend) = multi_scale_decompose(tape, z, &self.multi_scale_kernels)?;
                z = seasonal;
                trend_branch = Some(time_map(tape, bound, "trend", trend)?);
            }
            Fem::TimeFeatureMix => z = time_feature_mix(tape, bound, "fem", z, rng)?,
            Fem::FreqMix => z = frequency_mix(tape, bound, "fem", z)?,
        }

        let mut y = self.cps.forward(tape, bound, z)?;
        if let Some(trend) = trend_branch {
            y = tape.add(y, trend)?;
        }
        let mut out = aggregate_head(tape, bound, "head", y)?;
        if let Some(stats) = revin_stats {
            out = revin_denorm(tape, bound, "sm", out, &stats, self.target_col)?;
        }
        debug_assert_eq!(tape.shape(out), &[self.task.t_p, 1]);
        Ok(out)
    }
}
