use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

pub const FFT_SIZE: usize = 1024;
pub const HOP: usize = 256;
/// Left padding so frame `t` is centred on hop block `t`.
pub const LEFT_PAD: usize = (FFT_SIZE - HOP) / 2;

/// `ceil(n / hop)`.
pub fn frame_count(num_samples: usize) -> usize {
    num_samples.div_ceil(HOP)
}

pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// The `FFT_SIZE` samples of frame `t`, zero outside the signal.
pub fn frame(samples: &[f64], t: usize) -> Vec<f64> {
    let start = (t * HOP) as isize - LEFT_PAD as isize;
    (0..FFT_SIZE as isize)
        .map(|i| {
            let idx = start + i;
            if idx < 0 || idx >= samples.len() as isize {
                0.0
            } else {
                samples[idx as usize]
            }
        })
        .collect()
}

/// Short-time Fourier transform with a periodic Hann window.
pub struct Stft {
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Default for Stft {
    fn default() -> Self {
        Self::new()
    }
}

impl Stft {
    pub fn new() -> Self {
        let mut planner = FftPlanner::new();
        Self {
            window: hann(FFT_SIZE),
            forward: planner.plan_fft_forward(FFT_SIZE),
            inverse: planner.plan_fft_inverse(FFT_SIZE),
        }
    }

    pub fn bins(&self) -> usize {
        FFT_SIZE / 2 + 1
    }

    /// One-sided spectrum per frame: `T x (FFT_SIZE/2 + 1)`.
    pub fn analyze(&self, samples: &[f64]) -> Vec<Vec<Complex<f64>>> {
        (0..frame_count(samples.len()))
            .map(|t| {
                let mut buf: Vec<Complex<f64>> = frame(samples, t)
                    .iter()
                    .zip(&self.window)
                    .map(|(&x, &w)| Complex::new(x * w, 0.0))
                    .collect();
                self.forward.process(&mut buf);
                buf.truncate(self.bins());
                buf
            })
            .collect()
    }

    pub fn power(&self, samples: &[f64]) -> Vec<Vec<f64>> {
        self.analyze(samples)
            .into_iter()
            .map(|frame| frame.iter().map(|c| c.norm_sqr()).collect())
            .collect()
    }

    /// Weighted overlap-add inverse of [`Stft::analyze`].
    pub fn synthesize(&self, spectrum: &[Vec<Complex<f64>>], num_samples: usize) -> Vec<f64> {
        let padded_len = spectrum.len() * HOP + FFT_SIZE;
        let mut out = vec![0.0; padded_len];
        let mut norm = vec![0.0; padded_len];
        let scale = 1.0 / FFT_SIZE as f64;
        for (t, half) in spectrum.iter().enumerate() {
            let mut buf = vec![Complex::new(0.0, 0.0); FFT_SIZE];
            buf[..half.len()].copy_from_slice(half);
            for k in 1..FFT_SIZE / 2 {
                buf[FFT_SIZE - k] = half[k].conj();
            }
            self.inverse.process(&mut buf);
            let start = t * HOP;
            for i in 0..FFT_SIZE {
                let w = self.window[i];
                out[start + i] += buf[i].re * scale * w;
                norm[start + i] += w * w;
            }
        }
        (0..num_samples)
            .map(|n| {
                let i = n + LEFT_PAD;
                if i < padded_len && norm[i] > 1e-8 {
                    out[i] / norm[i]
                } else {
                    0.0
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_counts() {
        assert_eq!(frame_count(16000), 63);
        assert_eq!(frame_count(256), 1);
        assert_eq!(frame_count(257), 2);
    }

    #[test]
    fn analysis_synthesis_round_trip() {
        let x: Vec<f64> = (0..4000).map(|i| (i as f64 * 0.031).sin() * 0.3).collect();
        let stft = Stft::new();
        let y = stft.synthesize(&stft.analyze(&x), x.len());
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
