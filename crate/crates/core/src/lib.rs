pub mod corpus;
pub mod dsp;
pub mod eval;
pub mod hed;
pub mod intensity;
pub mod nn;
pub mod ttscore;
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
