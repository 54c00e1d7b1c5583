pub mod analyze;
pub mod evaluate;
pub mod gen_data;
pub mod param_count;
pub mod profile;
pub mod sweep;
pub mod train;
pub mod translate;
