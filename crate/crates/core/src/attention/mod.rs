//! Attention strategies: learned scaled dot-product attention and the
//! parameter-free Gaussian, convolution and indexing variants.

pub mod conv;
pub mod gaussian;
pub mod learned;
pub mod spec;

pub use conv::{causal_kernel, conv_attention, gaussian_kernel, index_attention, one_hot_kernel};
pub use gaussian::{
    cross_center, cross_centers, gaussian_row, gaussian_weight, hard_cross_attention, hard_cross_weights,
    hard_self_attention, hard_self_weights, round_robin_cross_offsets, std_normal_pdf, CrossGeometry, GaussianRow,
};
pub use learned::scaled_dot_attention;
pub use spec::{AttentionSpec, CenterMode, GammaSource, IndexBase, Site, Truncation, DEFAULT_SIGMA};
