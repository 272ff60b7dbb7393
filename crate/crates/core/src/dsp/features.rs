//! Builtin frame-level acoustic features (22 per frame, hop 256).
//!
//! | cols  | feature                              |
//! |-------|--------------------------------------|
//! | 0     | log energy of the frame centre       |
//! | 1     | F0 in Hz (0 when unvoiced)           |
//! | 2     | voicing flag                         |
//! | 3     | zero-crossing rate                   |
//! | 4     | spectral centroid (kHz)              |
//! | 5     | spectral flux                        |
//! | 6..22 | 16 mel-band log energies             |

use serde::{Deserialize, Serialize};

use super::mel::MelFilterbank;
use super::stft::{frame, frame_count, Stft, FFT_SIZE, HOP};
use super::DspError;
use crate::corpus::{MatrixFile, Waveform, SAMPLE_RATE};
use crate::nn::Matrix;

pub const N_FRAME_FEATURES: usize = 22;
pub const FRAME_RATE: f64 = SAMPLE_RATE as f64 / HOP as f64;

pub const COL_LOG_ENERGY: usize = 0;
pub const COL_F0: usize = 1;
pub const COL_VOICING: usize = 2;

const F0_MIN: f64 = 50.0;
const F0_MAX: f64 = 500.0;
const VOICING_THRESHOLD: f64 = 0.3;
/// Centre region used for energy and zero crossings.
const CENTRE: usize = 512;
const SILENCE_RMS: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureProvider {
    BuiltinDsp,
    External,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameFeatures {
    /// `T x D`.
    pub matrix: Matrix,
    pub frame_rate: f64,
    pub provider: FeatureProvider,
}

impl FrameFeatures {
    pub fn n_frames(&self) -> usize {
        self.matrix.rows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    /// Frames whose hop block overlaps `[start, end)` seconds.
    pub fn frame_range(&self, start: f64, end: f64) -> Option<std::ops::Range<usize>> {
        let n = self.n_frames();
        if n == 0 || end <= start {
            return None;
        }
        let first = (start * self.frame_rate).floor().max(0.0) as usize;
        let last = ((end * self.frame_rate).ceil() as usize).min(n);
        if first >= last {
            return None;
        }
        Some(first..last)
    }

    pub fn from_external(file: &MatrixFile) -> Self {
        Self {
            matrix: file.matrix.clone(),
            frame_rate: file.header.frame_rate,
            provider: FeatureProvider::External,
        }
    }

    pub fn to_matrix_file(&self, utterance_id: &str) -> MatrixFile {
        MatrixFile::new(utterance_id, self.frame_rate, self.matrix.clone())
    }
}

/// Result of the autocorrelation pitch tracker on one frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PitchEstimate {
    pub f0: f64,
    pub voiced: bool,
    pub peak: f64,
}

/// Normalized-autocorrelation F0 estimate over 50–500 Hz; voiced when the
/// normalized peak exceeds 0.3.
pub fn estimate_pitch(frame: &[f64]) -> PitchEstimate {
    let unvoiced = PitchEstimate {
        f0: 0.0,
        voiced: false,
        peak: 0.0,
    };
    let n = frame.len();
    let mean = frame.iter().sum::<f64>() / n as f64;
    let x: Vec<f64> = frame.iter().map(|v| v - mean).collect();
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if rms < SILENCE_RMS {
        return unvoiced;
    }
    let sr = SAMPLE_RATE as f64;
    let min_lag = (sr / F0_MAX).floor() as usize;
    let max_lag = ((sr / F0_MIN).ceil() as usize).min(n - 2);
    // Lags are evaluated one past each end so interior peaks can be detected.
    let lo = min_lag.saturating_sub(1).max(1);
    let hi = max_lag + 1;
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + x[i] * x[i];
    }
    let r: Vec<f64> = (lo..=hi)
        .map(|lag| {
            let m = n - lag;
            let num: f64 = (0..m).map(|i| x[i] * x[i + lag]).sum();
            let e0 = prefix[m];
            let e1 = prefix[n] - prefix[lag];
            let d = (e0 * e1).sqrt();
            if d > 0.0 {
                num / d
            } else {
                0.0
            }
        })
        .collect();
    let at = |lag: usize| r[lag - lo];
    let best = (min_lag..=max_lag)
        .map(at)
        .fold(f64::NEG_INFINITY, f64::max);
    if best < VOICING_THRESHOLD {
        return PitchEstimate {
            peak: best.max(0.0),
            ..unvoiced
        };
    }
    // First local maximum close to the global one avoids octave-down errors.
    let Some(lag) = (min_lag..=max_lag)
        .find(|&l| at(l) >= 0.9 * best && at(l) >= at(l - 1) && at(l) >= at(l + 1))
    else {
        return unvoiced;
    };
    let (a, b, c) = (at(lag - 1), at(lag), at(lag + 1));
    let denom = a - 2.0 * b + c;
    let offset = if denom.abs() > 1e-12 {
        (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    PitchEstimate {
        f0: sr / (lag as f64 + offset),
        voiced: true,
        peak: b,
    }
}

/// The 22 builtin features for every hop-256 frame.
pub fn compute_frame_features(audio: &Waveform) -> Result<FrameFeatures, DspError> {
    if audio.samples.len() < FFT_SIZE {
        return Err(DspError::TooShort {
            samples: audio.samples.len(),
            required: FFT_SIZE,
        });
    }
    let stft = Stft::new();
    let bands = MelFilterbank::new(16, 0.0, 8000.0);
    let power = stft.power(&audio.samples);
    let t_count = frame_count(audio.samples.len());
    let bin_hz = SAMPLE_RATE as f64 / FFT_SIZE as f64;
    let mut out = Matrix::zeros(t_count, N_FRAME_FEATURES);
    let mut prev_mag: Option<Vec<f64>> = None;
    for t in 0..t_count {
        let f = frame(&audio.samples, t);
        let centre = &f[(FFT_SIZE - CENTRE) / 2..(FFT_SIZE + CENTRE) / 2];
        let energy = centre.iter().map(|v| v * v).sum::<f64>() / CENTRE as f64;
        let zcr = centre
            .windows(2)
            .filter(|w| (w[0] >= 0.0) != (w[1] >= 0.0))
            .count() as f64
            / (CENTRE - 1) as f64;
        let pitch = estimate_pitch(&f);

        let p = &power[t];
        let total: f64 = p.iter().sum();
        let centroid = if total > 0.0 {
            p.iter()
                .enumerate()
                .map(|(k, v)| k as f64 * bin_hz * v)
                .sum::<f64>()
                / total
                / 1000.0
        } else {
            0.0
        };
        let mag: Vec<f64> = p.iter().map(|v| v.sqrt()).collect();
        let mag_norm = mag.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mag: Vec<f64> = if mag_norm > 0.0 {
            mag.iter().map(|v| v / mag_norm).collect()
        } else {
            mag
        };
        let flux = match &prev_mag {
            Some(prev) => prev
                .iter()
                .zip(&mag)
                .map(|(a, b)| (b - a) * (b - a))
                .sum::<f64>()
                .sqrt(),
            None => 0.0,
        };
        prev_mag = Some(mag);

        let row = out.row_mut(t);
        row[COL_LOG_ENERGY] = (energy + 1e-10).ln();
        row[COL_F0] = pitch.f0;
        row[COL_VOICING] = if pitch.voiced { 1.0 } else { 0.0 };
        row[3] = zcr;
        row[4] = centroid;
        row[5] = flux;
        for (b, v) in bands.apply(p).into_iter().enumerate() {
            row[6 + b] = (v + 1e-10).ln();
        }
    }
    Ok(FrameFeatures {
        matrix: out,
        frame_rate: FRAME_RATE,
        provider: FeatureProvider::BuiltinDsp,
    })
}

/// Per-frame RMS of the frame centre, aligned with [`compute_frame_features`].
pub fn frame_rms(audio: &Waveform) -> Vec<f64> {
    (0..frame_count(audio.samples.len()))
        .map(|t| {
            let f = frame(&audio.samples, t);
            let centre = &f[(FFT_SIZE - CENTRE) / 2..(FFT_SIZE + CENTRE) / 2];
            (centre.iter().map(|v| v * v).sum::<f64>() / CENTRE as f64).sqrt()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sine(freq: f64, n: usize) -> Waveform {
        Waveform::new(
            (0..n)
                .map(|i| 0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / 16000.0).sin())
                .collect(),
            SAMPLE_RATE,
        )
    }

    fn median(mut v: Vec<f64>) -> f64 {
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }

    #[test]
    fn silence_is_unvoiced() {
        let ff = compute_frame_features(&Waveform::new(vec![0.0; 8000], SAMPLE_RATE)).unwrap();
        assert_eq!(ff.dim(), 22);
        assert!(ff.matrix.column(COL_F0).iter().all(|&v| v == 0.0));
        assert!(ff.matrix.column(COL_VOICING).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tone_pitch_is_recovered() {
        // oracle: the period of a 220 Hz tone is 16000 / 220 samples
        let ff = compute_frame_features(&sine(220.0, 16000)).unwrap();
        let voiced: Vec<f64> = ff
            .matrix
            .column(COL_F0)
            .into_iter()
            .filter(|&f| f > 0.0)
            .collect();
        assert!(voiced.len() > 50);
        let m = median(voiced);
        assert!((m - 220.0).abs() <= 5.0, "median f0 {m}");
    }

    #[test]
    fn white_noise_is_mostly_unvoiced() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise: Vec<f64> = (0..16000).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let ff = compute_frame_features(&Waveform::new(noise, SAMPLE_RATE)).unwrap();
        let frac = ff.matrix.column(COL_VOICING).iter().sum::<f64>() / ff.n_frames() as f64;
        assert!(frac < 0.2, "voicing fraction {frac}");
    }

    #[test]
    fn frame_range_covers_overlapping_blocks() {
        let ff = compute_frame_features(&sine(220.0, 16000)).unwrap();
        assert_eq!(ff.frame_range(0.0, 0.016), Some(0..1));
        assert_eq!(ff.frame_range(0.0, 0.017), Some(0..2));
        assert_eq!(ff.frame_range(0.5, 0.5), None);
        assert_eq!(ff.frame_range(0.99, 5.0), Some(61..63));
    }
}
