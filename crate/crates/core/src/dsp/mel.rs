use serde::{Deserialize, Serialize};

use super::stft::{frame_count, Stft, FFT_SIZE};
use super::DspError;
use crate::corpus::{Waveform, SAMPLE_RATE};
use crate::nn::Matrix;

pub const N_MELS: usize = 100;
pub const POWER_FLOOR: f64 = 1e-10;
pub const F_MAX: f64 = 8000.0;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular HTK-scale filterbank with unit peaks.
#[derive(Clone, Debug)]
pub struct MelFilterbank {
    /// `n_mels x n_bins`.
    pub weights: Matrix,
    /// Band edges in Hz, `n_mels + 2` points.
    pub edges_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, f_min: f64, f_max: f64) -> Self {
        let n_bins = FFT_SIZE / 2 + 1;
        let (lo, hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
        let edges_hz: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let bin_hz = SAMPLE_RATE as f64 / FFT_SIZE as f64;
        let weights = Matrix::from_fn(n_mels, n_bins, |b, k| {
            triangle(
                k as f64 * bin_hz,
                edges_hz[b],
                edges_hz[b + 1],
                edges_hz[b + 2],
            )
        });
        Self { weights, edges_hz }
    }

    pub fn standard() -> Self {
        Self::new(N_MELS, 0.0, F_MAX)
    }

    pub fn n_mels(&self) -> usize {
        self.weights.rows()
    }

    /// Filterbank response of band `b` at frequency `hz`.
    pub fn response(&self, b: usize, hz: f64) -> f64 {
        triangle(
            hz,
            self.edges_hz[b],
            self.edges_hz[b + 1],
            self.edges_hz[b + 2],
        )
    }

    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        (0..self.n_mels())
            .map(|b| {
                self.weights
                    .row(b)
                    .iter()
                    .zip(power)
                    .map(|(w, p)| w * p)
                    .sum()
            })
            .collect()
    }
}

fn triangle(f: f64, left: f64, centre: f64, right: f64) -> f64 {
    if f <= left || f >= right {
        0.0
    } else if f <= centre {
        (f - left) / (centre - left)
    } else {
        (right - f) / (right - centre)
    }
}

/// Log-mel spectrogram stored time-major: `frames` is `T x 100`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MelSpectrogram {
    pub frames: Matrix,
}

impl MelSpectrogram {
    pub fn new(frames: Matrix) -> Self {
        Self { frames }
    }

    pub fn n_frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn n_bands(&self) -> usize {
        self.frames.cols()
    }

    /// Band `b` as a time series.
    pub fn band(&self, b: usize) -> Vec<f64> {
        self.frames.column(b)
    }

    pub fn mean_log_energy(&self) -> f64 {
        self.frames.mean()
    }
}

/// 100-band log-mel spectrogram, `log(max(power, 1e-10))`, hop 256, FFT 1024.
pub fn compute_mel(audio: &Waveform) -> Result<MelSpectrogram, DspError> {
    if audio.samples.len() < FFT_SIZE {
        return Err(DspError::TooShort {
            samples: audio.samples.len(),
            required: FFT_SIZE,
        });
    }
    let stft = Stft::new();
    let fb = MelFilterbank::standard();
    let power = stft.power(&audio.samples);
    debug_assert_eq!(power.len(), frame_count(audio.samples.len()));
    let mut frames = Matrix::zeros(power.len(), N_MELS);
    for (t, p) in power.iter().enumerate() {
        for (b, v) in fb.apply(p).into_iter().enumerate() {
            frames.set(t, b, v.max(POWER_FLOOR).ln());
        }
    }
    Ok(MelSpectrogram { frames })
}

/// Non-negative least-squares estimate of the linear power spectrum behind
/// each mel frame (multiplicative updates).
pub fn mel_to_linear_power(
    mel: &MelSpectrogram,
    fb: &MelFilterbank,
    iterations: usize,
) -> Vec<Vec<f64>> {
    let w = &fb.weights;
    let n_bins = w.cols();
    // W^T W, dense but small (513 x 513 is avoided by applying W then W^T).
    (0..mel.n_frames())
        .map(|t| {
            let target: Vec<f64> = mel.frames.row(t).iter().map(|v| v.exp()).collect();
            let wt_m: Vec<f64> = (0..n_bins)
                .map(|k| (0..fb.n_mels()).map(|b| w.get(b, k) * target[b]).sum())
                .collect();
            let col_mass: Vec<f64> = (0..n_bins)
                .map(|k| (0..fb.n_mels()).map(|b| w.get(b, k)).sum::<f64>())
                .collect();
            let mut x: Vec<f64> = wt_m
                .iter()
                .zip(&col_mass)
                .map(|(v, m)| {
                    if *m > 0.0 {
                        v / (m * m).max(1e-12)
                    } else {
                        0.0
                    }
                })
                .collect();
            for _ in 0..iterations {
                let wx = fb.apply(&x);
                for k in 0..n_bins {
                    if col_mass[k] == 0.0 {
                        continue;
                    }
                    let denom: f64 = (0..fb.n_mels()).map(|b| w.get(b, k) * wx[b]).sum();
                    x[k] *= wt_m[k] / (denom + 1e-20);
                }
            }
            x
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, n: usize) -> Waveform {
        Waveform::new(
            (0..n)
                .map(|i| 0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / 16000.0).sin())
                .collect(),
            SAMPLE_RATE,
        )
    }

    #[test]
    fn one_second_gives_63_frames() {
        let mel = compute_mel(&sine(440.0, 16000)).unwrap();
        assert_eq!((mel.n_bands(), mel.n_frames()), (100, 63));
    }

    #[test]
    fn silence_hits_the_floor() {
        let mel = compute_mel(&Waveform::new(vec![0.0; 4000], SAMPLE_RATE)).unwrap();
        assert!(mel.frames.data().iter().all(|&v| v == POWER_FLOOR.ln()));
    }

    #[test]
    fn too_short_input() {
        let err = compute_mel(&Waveform::new(vec![0.0; 1000], SAMPLE_RATE)).unwrap_err();
        assert!(matches!(err, DspError::TooShort { .. }));
    }

    #[test]
    fn sine_energy_peaks_in_the_band_covering_its_frequency() {
        let fb = MelFilterbank::standard();
        // analytic oracle: band whose triangle responds most at 440 Hz
        let expected = (0..N_MELS)
            .max_by(|&a, &b| fb.response(a, 440.0).total_cmp(&fb.response(b, 440.0)))
            .unwrap();
        assert!(fb.edges_hz[expected] < 440.0 && 440.0 < fb.edges_hz[expected + 2]);
        let mel = compute_mel(&sine(440.0, 16000)).unwrap();
        let mid = mel.frames.row(30);
        let argmax = (0..N_MELS)
            .max_by(|&a, &b| mid[a].total_cmp(&mid[b]))
            .unwrap();
        assert_eq!(argmax, expected);
    }

    #[test]
    fn hop_shift_moves_columns_by_one() {
        let base: Vec<f64> = (0..8000)
            .map(|i| ((i as f64) * 0.013).sin() * ((i as f64) * 0.0007).cos())
            .collect();
        let mut shifted = vec![0.0; 256];
        shifted.extend_from_slice(&base);
        let a = compute_mel(&Waveform::new(base, SAMPLE_RATE)).unwrap();
        let b = compute_mel(&Waveform::new(shifted, SAMPLE_RATE)).unwrap();
        for t in 3..a.n_frames() - 3 {
            for k in 0..N_MELS {
                assert!((a.frames.get(t, k) - b.frames.get(t + 1, k)).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn htk_scale_round_trip() {
        for hz in [0.0, 100.0, 440.0, 8000.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
    }
}
