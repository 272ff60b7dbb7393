use serde::{Deserialize, Serialize};

use super::DspError;

pub const STD_FLOOR: f64 = 1e-8;

/// Per-dimension standardization statistics fitted on the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub count: usize,
}

impl NormStats {
    pub fn fit<'a>(vectors: impl IntoIterator<Item = &'a [f64]>) -> Result<Self, DspError> {
        let mut count = 0usize;
        let mut mean: Vec<f64> = Vec::new();
        let mut m2: Vec<f64> = Vec::new();
        // Welford
        for v in vectors {
            if count == 0 {
                mean = vec![0.0; v.len()];
                m2 = vec![0.0; v.len()];
            } else if v.len() != mean.len() {
                return Err(DspError::DimensionMismatch {
                    expected: mean.len(),
                    found: v.len(),
                });
            }
            count += 1;
            for (i, &x) in v.iter().enumerate() {
                let d = x - mean[i];
                mean[i] += d / count as f64;
                m2[i] += d * (x - mean[i]);
            }
        }
        if count < 2 {
            return Err(DspError::NotEnoughVectors(count));
        }
        let std = m2
            .iter()
            .map(|s| (s / count as f64).sqrt().max(STD_FLOOR))
            .collect();
        Ok(Self { mean, std, count })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub fn apply_in_place(&self, v: &mut [f64]) {
        for (x, (m, s)) in v.iter_mut().zip(self.mean.iter().zip(&self.std)) {
            *x = (*x - m) / s;
        }
    }

    pub fn invert(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| x * s + m)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_point_fit() {
        let s = NormStats::fit([&[0.0][..], &[2.0][..]]).unwrap();
        assert_eq!((s.mean[0], s.std[0]), (1.0, 1.0));
        assert_eq!(s.apply(&[2.0]), vec![1.0]);
    }

    #[test]
    fn constant_dimension_maps_to_zero() {
        let s = NormStats::fit([&[5.0, 1.0][..], &[5.0, 3.0][..]]).unwrap();
        assert_eq!(s.std[0], STD_FLOOR);
        assert_eq!(s.apply(&[5.0, 2.0])[0], 0.0);
    }

    #[test]
    fn single_vector_is_rejected() {
        assert!(matches!(
            NormStats::fit([&[1.0][..]]),
            Err(DspError::NotEnoughVectors(1))
        ));
    }

    proptest! {
        #[test]
        fn round_trip_and_idempotent_refit(rows in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 3), 2..40)) {
            let s = NormStats::fit(rows.iter().map(|r| r.as_slice())).unwrap();
            let normed: Vec<Vec<f64>> = rows.iter().map(|r| s.apply(r)).collect();
            for (r, n) in rows.iter().zip(&normed) {
                for (a, b) in r.iter().zip(s.invert(n)) {
                    prop_assert!((a - b).abs() < 1e-6);
                }
            }
            let refit = NormStats::fit(normed.iter().map(|r| r.as_slice())).unwrap();
            for d in 0..3 {
                prop_assert!(refit.mean[d].abs() < 1e-6);
                if s.std[d] > 1e-6 {
                    prop_assert!((refit.std[d] - 1.0).abs() < 1e-6);
                }
            }
        }
    }
}
