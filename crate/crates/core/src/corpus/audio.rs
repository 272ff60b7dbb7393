use std::path::Path;

use super::CorpusError;

pub const SAMPLE_RATE: u32 = 16_000;

/// Mono waveform with samples nominally in [-1, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Reads a WAV file as mono (channel average). Non-16 kHz input is an error
/// unless `resample` is set.
pub fn read_wav(path: &Path, resample: bool) -> Result<Waveform, CorpusError> {
    if !path.is_file() {
        return Err(CorpusError::MissingAudio(path.to_path_buf()));
    }
    let wav_err = |source| CorpusError::Wav {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(wav_err)?,
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<Result<_, _>>()
                .map_err(wav_err)?
        }
    };
    let channels = spec.channels.max(1) as usize;
    let mono: Vec<f64> = interleaved
        .chunks(channels)
        .map(|c| c.iter().sum::<f64>() / channels as f64)
        .collect();
    if mono.is_empty() {
        return Err(CorpusError::EmptyAudio(path.to_path_buf()));
    }
    let wave = Waveform::new(mono, spec.sample_rate);
    if spec.sample_rate == SAMPLE_RATE {
        Ok(wave)
    } else if resample {
        Ok(resample_linear(&wave, SAMPLE_RATE))
    } else {
        Err(CorpusError::BadSampleRate {
            path: path.to_path_buf(),
            rate: spec.sample_rate,
        })
    }
}

/// Writes 16-bit PCM mono. Samples are clipped to [-1, 1].
pub fn write_wav(path: &Path, wave: &Waveform) -> Result<(), CorpusError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let wav_err = |source| CorpusError::Wav {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for &s in &wave.samples {
        let v = (s.clamp(-1.0, 1.0) * i16::MAX as f64).round() as i16;
        writer.write_sample(v).map_err(wav_err)?;
    }
    writer.finalize().map_err(wav_err)
}

/// Linear-interpolation resampler.
pub fn resample_linear(wave: &Waveform, target_rate: u32) -> Waveform {
    if wave.sample_rate == target_rate || wave.samples.is_empty() {
        return Waveform::new(wave.samples.clone(), target_rate);
    }
    let n_out = ((wave.samples.len() as u64 * target_rate as u64) / wave.sample_rate as u64).max(1)
        as usize;
    let ratio = wave.sample_rate as f64 / target_rate as f64;
    let last = wave.samples.len() - 1;
    let samples = (0..n_out)
        .map(|i| {
            let pos = i as f64 * ratio;
            let i0 = (pos.floor() as usize).min(last);
            let i1 = (i0 + 1).min(last);
            let frac = pos - i0 as f64;
            wave.samples[i0] * (1.0 - frac) + wave.samples[i1] * frac
        })
        .collect();
    Waveform::new(samples, target_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wav_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        let w = Waveform::new(
            (0..400).map(|i| (i as f64 / 400.0) - 0.5).collect(),
            SAMPLE_RATE,
        );
        write_wav(&path, &w).unwrap();
        let r = read_wav(&path, false).unwrap();
        assert_eq!(r.samples.len(), 400);
        for (a, b) in w.samples.iter().zip(&r.samples) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn resampling_preserves_duration() {
        let w = Waveform::new(vec![0.5; 44100], 44100);
        let r = resample_linear(&w, SAMPLE_RATE);
        assert_eq!(r.samples.len(), 16000);
        assert!(r.samples.iter().all(|&s| (s - 0.5).abs() < 1e-12));
    }
}
