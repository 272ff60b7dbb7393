//! Classical phase reconstruction (Griffin–Lim) from log-mel spectrograms.

use rustfft::num_complex::Complex;

use super::mel::{mel_to_linear_power, MelFilterbank, MelSpectrogram};
use super::stft::{Stft, HOP};
use crate::corpus::{Waveform, SAMPLE_RATE};

pub const GRIFFIN_LIM_ITERS: usize = 64;
const NNLS_ITERS: usize = 30;

/// Inverts a log-mel spectrogram to audio. Starts from zero phase, so the
/// output is a pure function of the input.
pub fn griffin_lim(mel: &MelSpectrogram, iterations: usize) -> Waveform {
    let fb = MelFilterbank::standard();
    let magnitude: Vec<Vec<f64>> = mel_to_linear_power(mel, &fb, NNLS_ITERS)
        .into_iter()
        .map(|p| p.into_iter().map(|v| v.max(0.0).sqrt()).collect())
        .collect();
    let num_samples = mel.n_frames() * HOP;
    let stft = Stft::new();
    let mut spectrum: Vec<Vec<Complex<f64>>> = magnitude
        .iter()
        .map(|m| m.iter().map(|&a| Complex::new(a, 0.0)).collect())
        .collect();
    let mut signal = stft.synthesize(&spectrum, num_samples);
    for _ in 0..iterations {
        let estimate = stft.analyze(&signal);
        for (t, frame) in estimate.iter().enumerate() {
            for (k, c) in frame.iter().enumerate() {
                let norm = c.norm();
                let phase = if norm > 1e-12 {
                    c / norm
                } else {
                    Complex::new(1.0, 0.0)
                };
                spectrum[t][k] = phase * magnitude[t][k];
            }
        }
        signal = stft.synthesize(&spectrum, num_samples);
    }
    let peak = signal.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 1.0 {
        signal.iter_mut().for_each(|v| *v /= peak);
    }
    Waveform::new(signal, SAMPLE_RATE)
}
