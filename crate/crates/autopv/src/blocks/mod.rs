//! Composable building blocks of the searchable architectures: feature
//! selection, noise augmentation, normalization, time features, feature
//! extraction methods, core predictive structures, and the aggregation head.

mod cps;
mod fem;
mod norm;
mod params;
mod select;

pub use cps::{
    aggregate_head, aggregate_head_init, build_cps, time_map, time_map_init, CpsBlock, CpsKind,
    CONV_KERNEL,
};
pub use fem::{
    add_time_features, decompose, frequency_mix, frequency_mix_init, linear_embed,
    linear_embed_init, multi_scale_decompose, time_feature_mix, time_feature_mix_init,
    MIX_DROPOUT,
};
pub use norm::{
    dain_init, dain_transform, gaussian_augment, revin_denorm, revin_init, revin_norm, RevinStats,
};
pub use params::{
    constant, identity, uniform_fan_in, BoundParams, ParamManifest, ParamStore,
};
pub use select::{mrmr_select, pearson, pearson_select, FeatureMask};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BlockError {
    #[error("invalid option {option} for {what}")]
    InvalidOption { what: &'static str, option: String },
    #[error(transparent)]
    Autodiff(#[from] crate::autodiff::AutodiffError),
}
