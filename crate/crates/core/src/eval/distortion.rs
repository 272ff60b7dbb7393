//! Reference-vs-synthesis distortions: MCD, pitch/energy, SECS.

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corpus::Waveform;
use crate::dsp::{compute_frame_features, frame_rms, MelSpectrogram, COL_F0, COL_VOICING};

pub const N_MCEP: usize = 13;

/// `10 * sqrt(2) / ln 10`.
pub fn mcd_constant() -> f64 {
    10.0 * std::f64::consts::SQRT_2 / std::f64::consts::LN_10
}

#[derive(Clone, Debug, PartialEq)]
pub struct DtwPath {
    pub pairs: Vec<(usize, usize)>,
    pub total: f64,
}

impl DtwPath {
    pub fn mean_cost(&self) -> f64 {
        self.total / self.pairs.len() as f64
    }
}

/// Dynamic time warping with unit steps (match, insert, delete) over a
/// pairwise cost. Ties prefer the diagonal.
pub fn dtw(n: usize, m: usize, cost: impl Fn(usize, usize) -> f64) -> Result<DtwPath, EvalError> {
    if n == 0 || m == 0 {
        return Err(EvalError::EmptyInput);
    }
    let mut acc = vec![f64::INFINITY; n * m];
    let at = |i: usize, j: usize| i * m + j;
    for i in 0..n {
        for j in 0..m {
            let c = cost(i, j);
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let d = if i > 0 && j > 0 {
                    acc[at(i - 1, j - 1)]
                } else {
                    f64::INFINITY
                };
                let u = if i > 0 {
                    acc[at(i - 1, j)]
                } else {
                    f64::INFINITY
                };
                let l = if j > 0 {
                    acc[at(i, j - 1)]
                } else {
                    f64::INFINITY
                };
                d.min(u).min(l)
            };
            acc[at(i, j)] = best + c;
        }
    }
    let mut pairs = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while i > 0 || j > 0 {
        let (ni, nj) = if i == 0 {
            (0, j - 1)
        } else if j == 0 {
            (i - 1, 0)
        } else {
            let d = acc[at(i - 1, j - 1)];
            let u = acc[at(i - 1, j)];
            let l = acc[at(i, j - 1)];
            if d <= u && d <= l {
                (i - 1, j - 1)
            } else if u <= l {
                (i - 1, j)
            } else {
                (i, j - 1)
            }
        };
        i = ni;
        j = nj;
        pairs.push((i, j));
    }
    pairs.reverse();
    Ok(DtwPath {
        pairs,
        total: acc[at(n - 1, m - 1)],
    })
}

/// Orthonormal DCT-II of a log-mel frame, coefficients 1..=13.
pub fn mel_cepstrum(frame: &[f64]) -> [f64; N_MCEP] {
    let n = frame.len() as f64;
    let mut out = [0.0; N_MCEP];
    for (k, o) in out.iter_mut().enumerate() {
        let k = k + 1;
        let s: f64 = frame
            .iter()
            .enumerate()
            .map(|(i, &v)| v * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / n).cos())
            .sum();
        *o = s * (2.0 / n).sqrt();
    }
    out
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn mceps(mel: &MelSpectrogram) -> Vec<[f64; N_MCEP]> {
    (0..mel.n_frames())
        .map(|t| mel_cepstrum(mel.frames.row(t)))
        .collect()
}

/// DTW-aligned mel-cepstral distortion in dB.
pub fn mcd(reference: &MelSpectrogram, synthesized: &MelSpectrogram) -> Result<f64, EvalError> {
    if reference.n_bands() != synthesized.n_bands() {
        return Err(EvalError::DimensionMismatch {
            expected: reference.n_bands(),
            found: synthesized.n_bands(),
        });
    }
    let a = mceps(reference);
    let b = mceps(synthesized);
    let path = dtw(a.len(), b.len(), |i, j| euclid(&a[i], &b[j]))?;
    Ok(mcd_constant() * path.mean_cost())
}

/// Frame-wise distortion over the common prefix, without alignment.
pub fn mcd_unaligned(
    reference: &MelSpectrogram,
    synthesized: &MelSpectrogram,
) -> Result<f64, EvalError> {
    let a = mceps(reference);
    let b = mceps(synthesized);
    let n = a.len().min(b.len());
    if n == 0 {
        return Err(EvalError::EmptyInput);
    }
    Ok(mcd_constant() * (0..n).map(|i| euclid(&a[i], &b[i])).sum::<f64>() / n as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProsodyDistortion {
    /// Hz; `None` when either side has no voiced frames.
    pub pitch: Option<f64>,
    pub energy: f64,
}

fn voiced_f0(audio: &Waveform) -> Result<Vec<f64>, EvalError> {
    let ff = compute_frame_features(audio)?;
    Ok((0..ff.n_frames())
        .filter(|&t| ff.matrix.get(t, COL_VOICING) > 0.5)
        .map(|t| ff.matrix.get(t, COL_F0))
        .collect())
}

/// Pitch distortion: mean |ΔF0| along a DTW path on log-F0 over the voiced
/// frames of each side. Energy distortion: mean |ΔRMS| along a DTW path,
/// with both tracks divided by their joint peak RMS.
pub fn pitch_energy_distortion(
    reference: &Waveform,
    synthesized: &Waveform,
) -> Result<ProsodyDistortion, EvalError> {
    let fa = voiced_f0(reference)?;
    let fb = voiced_f0(synthesized)?;
    let pitch = if fa.is_empty() || fb.is_empty() {
        None
    } else {
        let path = dtw(fa.len(), fb.len(), |i, j| (fa[i].ln() - fb[j].ln()).abs())?;
        Some(
            path.pairs
                .iter()
                .map(|&(i, j)| (fa[i] - fb[j]).abs())
                .sum::<f64>()
                / path.pairs.len() as f64,
        )
    };
    let ea = frame_rms(reference);
    let eb = frame_rms(synthesized);
    let peak = ea.iter().chain(&eb).cloned().fold(0.0, f64::max);
    let scale = if peak > 0.0 { 1.0 / peak } else { 0.0 };
    let ea: Vec<f64> = ea.iter().map(|v| v * scale).collect();
    let eb: Vec<f64> = eb.iter().map(|v| v * scale).collect();
    let path = dtw(ea.len(), eb.len(), |i, j| (ea[i] - eb[j]).abs())?;
    Ok(ProsodyDistortion {
        pitch,
        energy: path.mean_cost(),
    })
}

/// Pitch distortion alone, failing with `AllUnvoiced` when undefined.
pub fn pitch_distortion(reference: &Waveform, synthesized: &Waveform) -> Result<f64, EvalError> {
    pitch_energy_distortion(reference, synthesized)?
        .pitch
        .ok_or(EvalError::AllUnvoiced)
}

/// Cosine similarity of two speaker embeddings.
pub fn secs(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(EvalError::ZeroVector);
    }
    Ok((a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SAMPLE_RATE;
    use crate::nn::Matrix;

    fn tone(freq: f64, secs: f64) -> Waveform {
        let n = (secs * SAMPLE_RATE as f64) as usize;
        Waveform::new(
            (0..n)
                .map(|i| {
                    0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / SAMPLE_RATE as f64).sin()
                })
                .collect(),
            SAMPLE_RATE,
        )
    }

    fn toy_mel(frames: usize, shift: usize) -> MelSpectrogram {
        MelSpectrogram::new(Matrix::from_fn(frames, 100, |t, b| {
            let t = t + shift;
            ((t as f64 * 0.7).sin() + (b as f64 * 0.05 * (1.0 + (t % 5) as f64)).cos()) * 2.0
        }))
    }

    #[test]
    fn mcd_identity_symmetry_and_alignment() {
        let a = toy_mel(40, 0);
        assert_eq!(mcd(&a, &a).unwrap(), 0.0);
        let b = toy_mel(40, 3);
        let ab = mcd(&a, &b).unwrap();
        assert!((ab - mcd(&b, &a).unwrap()).abs() < 1e-9);
        assert!(ab < mcd_unaligned(&a, &b).unwrap());
        assert!(matches!(
            mcd(&MelSpectrogram::new(Matrix::zeros(0, 100)), &a),
            Err(EvalError::EmptyInput)
        ));
    }

    #[test]
    fn dtw_never_exceeds_the_diagonal() {
        let a: Vec<f64> = (0..30).map(|i| (i as f64 * 0.3).sin()).collect();
        let b: Vec<f64> = (0..30).map(|i| ((i + 4) as f64 * 0.3).sin()).collect();
        let path = dtw(30, 30, |i, j| (a[i] - b[j]).abs()).unwrap();
        let naive: f64 = (0..30).map(|i| (a[i] - b[i]).abs()).sum();
        assert!(path.total <= naive);
        assert_eq!(path.pairs[0], (0, 0));
        assert_eq!(*path.pairs.last().unwrap(), (29, 29));
    }

    #[test]
    fn tone_pitch_distortion() {
        let d = pitch_energy_distortion(&tone(200.0, 0.5), &tone(210.0, 0.5)).unwrap();
        let p = d.pitch.unwrap();
        assert!((p - 10.0).abs() <= 1.0, "{p}");
        let same = pitch_energy_distortion(&tone(200.0, 0.5), &tone(200.0, 0.5)).unwrap();
        assert_eq!(same.pitch, Some(0.0));
        assert_eq!(same.energy, 0.0);
    }

    #[test]
    fn silence_is_unvoiced() {
        let s = Waveform::new(vec![0.0; 8000], SAMPLE_RATE);
        let d = pitch_energy_distortion(&s, &s).unwrap();
        assert_eq!(d.pitch, None);
        assert_eq!(d.energy, 0.0);
        assert!(matches!(
            pitch_distortion(&s, &s),
            Err(EvalError::AllUnvoiced)
        ));
    }

    #[test]
    fn secs_cases() {
        let v = [0.3, -1.0, 2.0];
        assert!((secs(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert!((secs(&v, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert!(secs(&[1.0, 1.0, 0.0], &[1.0, -1.0, 5.0]).unwrap().abs() < 1e-12);
        assert!(matches!(secs(&v, &[0.0; 3]), Err(EvalError::ZeroVector)));
    }
}
