//! Objective metrics: distortions, controllability, MIG, trajectory
//! summaries, disentanglement/explicitness and prosody trends.

mod control;
mod disentangle;
mod distortion;
mod mig;
mod report;
mod stats;
mod trajectory;
mod trend;

use thiserror::Error;

pub use control::{controllability_score, ControllabilityReport};
pub use disentangle::{
    auc, disentanglement_explicitness, importance_disentanglement, ClassifierKind,
    ClassifierScores, ForestConfig, LassoConfig, MIN_PER_CLASS,
};
pub use distortion::{
    dtw, mcd, mcd_constant, mcd_unaligned, mel_cepstrum, pitch_distortion, pitch_energy_distortion,
    secs, DtwPath, ProsodyDistortion, N_MCEP,
};
pub use mig::{entropy, equal_frequency_bins, mig, mutual_information, MIG_BINS};
pub use report::{
    write_controllability_csv, write_json, write_metric_csv, write_sweep_csv, write_trend_csv,
    DisentanglementReport, Estimate, MetricReport, PairMetrics,
};
pub use stats::{mean, pearson, percentile_sorted, ranks, spearman, std_dev};
pub use trajectory::{
    lag1_autocorr, peaks, slope, summarize_series, summarize_trajectory, TrajectorySummary,
    STATS_PER_EMOTION, STAT_NAMES,
};
pub use trend::{
    expected_trends, prosody_trend_analysis, ExpectedTrends, ProsodyFeatures, TrendRow,
    PROSODY_FEATURES,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty input")]
    EmptyInput,
    #[error("no voiced frames")]
    AllUnvoiced,
    #[error("zero-norm vector")]
    ZeroVector,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("factor has a single value")]
    DegenerateFactor,
    #[error("labels contain a single class")]
    SingleClass,
    #[error("need at least {needed} samples, found {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error("synthesis failed: {0}")]
    Synthesis(String),
    #[error("report: {0}")]
    Report(String),
    #[error(transparent)]
    Dsp(#[from] crate::dsp::DspError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
