//! Signal processing: log-mel spectrograms, builtin frame features,
//! segment functionals, normalization and phase reconstruction.

mod features;
mod functionals;
mod mel;
mod norm;
mod stft;
mod vocoder;

use thiserror::Error;

pub use features::{
    compute_frame_features, estimate_pitch, frame_rms, FeatureProvider, FrameFeatures,
    PitchEstimate, COL_F0, COL_LOG_ENERGY, COL_VOICING, FRAME_RATE, N_FRAME_FEATURES,
};
pub use functionals::{compute_segment_functionals, functionals_of_rows, SegmentFunctionals};
pub use mel::{
    compute_mel, hz_to_mel, mel_to_hz, mel_to_linear_power, MelFilterbank, MelSpectrogram, N_MELS,
    POWER_FLOOR,
};
pub use norm::{NormStats, STD_FLOOR};
pub use stft::{frame_count, Stft, FFT_SIZE, HOP};
pub use vocoder::{griffin_lim, GRIFFIN_LIM_ITERS};

#[derive(Debug, Error, PartialEq)]
pub enum DspError {
    #[error("audio has {samples} samples; at least {required} are required")]
    TooShort { samples: usize, required: usize },
    #[error("segment [{start}, {end}) contains no frames")]
    EmptySegment { start: f64, end: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("normalization needs at least 2 vectors, got {0}")]
    NotEnoughVectors(usize),
}
