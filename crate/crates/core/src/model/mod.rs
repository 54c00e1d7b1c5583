//! Encoder-decoder Transformer with configurable attention per site.

pub mod checkpoint;
pub mod config;
pub mod count;
pub mod network;
pub mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{duplicate_heads, Dims, ModelConfig, Positional, Preset, PresetKind};
pub use count::{param_count, ParamCount, SiteCount};
pub use network::{AttentionRecord, Model, Pass};
pub use params::ParamStore;
