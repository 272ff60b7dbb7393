use serde::{Deserialize, Serialize};

use super::features::FrameFeatures;
use super::DspError;
use crate::nn::Matrix;

/// Per-segment statistics of the frame features laid out as
/// `[mean x D, std x D, min x D, max x D]` (88 values for the builtin set).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentFunctionals {
    pub vector: Vec<f64>,
}

pub fn compute_segment_functionals(
    ff: &FrameFeatures,
    start: f64,
    end: f64,
) -> Result<SegmentFunctionals, DspError> {
    let range = ff
        .frame_range(start, end)
        .ok_or(DspError::EmptySegment { start, end })?;
    Ok(functionals_of_rows(
        &ff.matrix.slice_rows(range.start, range.end),
    ))
}

pub fn functionals_of_rows(frames: &Matrix) -> SegmentFunctionals {
    let d = frames.cols();
    let n = frames.rows() as f64;
    let mut vector = vec![0.0; 4 * d];
    for c in 0..d {
        let col = frames.column(c);
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        vector[c] = mean;
        vector[d + c] = var.sqrt();
        vector[2 * d + c] = col.iter().copied().fold(f64::INFINITY, f64::min);
        vector[3 * d + c] = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    }
    SegmentFunctionals { vector }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::features::FeatureProvider;

    fn features(matrix: Matrix) -> FrameFeatures {
        FrameFeatures {
            matrix,
            frame_rate: 62.5,
            provider: FeatureProvider::BuiltinDsp,
        }
    }

    #[test]
    fn constant_column() {
        let ff = features(Matrix::filled(10, 22, 3.0));
        let f = compute_segment_functionals(&ff, 0.0, 0.16).unwrap();
        assert_eq!(f.vector.len(), 88);
        assert_eq!(f.vector[0], 3.0);
        assert_eq!(f.vector[22], 0.0);
        assert_eq!(f.vector[44], 3.0);
        assert_eq!(f.vector[66], 3.0);
    }

    #[test]
    fn one_frame_segment() {
        let ff = features(Matrix::from_fn(10, 22, |r, c| (r * 100 + c) as f64));
        let f = compute_segment_functionals(&ff, 0.05, 0.06).unwrap();
        // frame 3 only: block [0.048, 0.064)
        assert_eq!(f.vector[5], 305.0);
        assert_eq!(f.vector[22 + 5], 0.0);
        assert_eq!(f.vector[44 + 5], 305.0);
        assert_eq!(f.vector[66 + 5], 305.0);
    }

    #[test]
    fn ramp_mean_is_half() {
        let t = 25;
        let ff = features(Matrix::from_fn(t, 22, |r, _| r as f64 / (t - 1) as f64));
        let f = compute_segment_functionals(&ff, 0.0, t as f64 / 62.5).unwrap();
        assert!((f.vector[0] - 0.5).abs() <= 1.0 / (2.0 * t as f64));
    }

    #[test]
    fn locality() {
        let mut a = Matrix::from_fn(20, 22, |r, c| ((r * 7 + c * 3) % 11) as f64);
        let f1 = compute_segment_functionals(&features(a.clone()), 0.1, 0.2).unwrap();
        for r in (0..6).chain(13..20) {
            a.row_mut(r).iter_mut().for_each(|v| *v = -99.0);
        }
        let f2 = compute_segment_functionals(&features(a), 0.1, 0.2).unwrap();
        assert_eq!(f1, f2);
    }

    #[test]
    fn empty_segment() {
        let ff = features(Matrix::zeros(5, 22));
        assert!(matches!(
            compute_segment_functionals(&ff, 1.0, 1.0),
            Err(DspError::EmptySegment { .. })
        ));
        assert!(compute_segment_functionals(&ff, 5.0, 6.0).is_err());
    }
}
