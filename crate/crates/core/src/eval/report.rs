//! Aggregate reports and their JSON / CSV emission.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::control::ControllabilityReport;
use super::disentangle::ClassifierScores;
use super::trend::TrendRow;
use super::{mean, std_dev, EvalError};
use crate::corpus::Emotion;

/// Mean with a 95% normal-approximation half-width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: f64,
    pub count: usize,
}

impl Estimate {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let half_width = if n > 1 {
            1.96 * std_dev(values) * (n as f64 / (n - 1) as f64).sqrt() / (n as f64).sqrt()
        } else {
            0.0
        };
        Some(Self {
            mean: mean(values),
            half_width,
            count: n,
        })
    }
}

/// Per-pair metric values before aggregation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    pub utterance_id: String,
    pub mcd: Option<f64>,
    pub pitch_distortion: Option<f64>,
    pub energy_distortion: Option<f64>,
    pub secs: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mcd: Option<Estimate>,
    pub pitch_distortion: Option<Estimate>,
    pub energy_distortion: Option<Estimate>,
    pub secs: Option<Estimate>,
    pub pairs: usize,
    /// Pairs whose pitch distortion was undefined.
    pub unvoiced_pairs: usize,
}

impl MetricReport {
    pub fn aggregate(pairs: &[PairMetrics]) -> Self {
        let col = |f: fn(&PairMetrics) -> Option<f64>| -> Vec<f64> {
            pairs.iter().filter_map(f).collect()
        };
        Self {
            mcd: Estimate::of(&col(|p| p.mcd)),
            pitch_distortion: Estimate::of(&col(|p| p.pitch_distortion)),
            energy_distortion: Estimate::of(&col(|p| p.energy_distortion)),
            secs: Estimate::of(&col(|p| p.secs)),
            pairs: pairs.len(),
            unvoiced_pairs: pairs
                .iter()
                .filter(|p| p.pitch_distortion.is_none())
                .count(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisentanglementReport {
    /// MIG per bin count.
    pub mig: BTreeMap<usize, f64>,
    pub classifiers: Vec<ClassifierScores>,
}

impl DisentanglementReport {
    /// Disentanglement flipped so lower means less speaker leakage.
    pub fn leakage_oriented(&self) -> Vec<(String, f64)> {
        self.classifiers
            .iter()
            .map(|c| (format!("{:?}", c.kind), 1.0 - c.disentanglement))
            .collect()
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), EvalError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| EvalError::Report(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> EvalError {
    EvalError::Report(e.to_string())
}

pub fn write_metric_csv(path: &Path, report: &MetricReport) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["metric", "mean", "half_width", "count"])
        .map_err(csv_err)?;
    for (name, e) in [
        ("mcd", report.mcd),
        ("pitch_distortion", report.pitch_distortion),
        ("energy_distortion", report.energy_distortion),
        ("secs", report.secs),
    ] {
        match e {
            Some(e) => w.write_record([
                name,
                &e.mean.to_string(),
                &e.half_width.to_string(),
                &e.count.to_string(),
            ]),
            None => w.write_record([name, "", "", "0"]),
        }
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_controllability_csv(
    path: &Path,
    report: &ControllabilityReport,
) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec!["target".to_string()];
    header.extend(
        Emotion::INTENSITY_ORDER
            .iter()
            .map(|e| e.name().to_string()),
    );
    w.write_record(&header).map_err(csv_err)?;
    for (t, e) in Emotion::INTENSITY_ORDER.iter().enumerate() {
        let mut row = vec![e.name().to_string()];
        row.extend(report.correlation[t].iter().map(|v| opt(*v)));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.write_record(["positive", &report.positive.to_string(), "", "", ""])
        .map_err(csv_err)?;
    w.write_record(["negative", &report.negative.to_string(), "", "", ""])
        .map_err(csv_err)?;
    w.write_record(["score", &report.score.to_string(), "", "", ""])
        .map_err(csv_err)?;
    w.flush()?;
    Ok(())
}

pub fn write_trend_csv(path: &Path, rows: &[TrendRow]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["emotion", "feature", "spearman", "expected_sign", "matches"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.emotion.name().to_string(),
            r.feature.clone(),
            opt(r.correlation),
            r.expected_sign.map(|s| s.to_string()).unwrap_or_default(),
            r.matches.map(|m| m.to_string()).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per sweep point: commanded value and the probe's four outputs.
pub fn write_sweep_csv(
    path: &Path,
    values: &[f64],
    predictions: &[[f64; 4]],
) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec!["intensity".to_string()];
    header.extend(
        Emotion::INTENSITY_ORDER
            .iter()
            .map(|e| e.name().to_string()),
    );
    w.write_record(&header).map_err(csv_err)?;
    for (v, p) in values.iter().zip(predictions) {
        let mut row = vec![v.to_string()];
        row.extend(p.iter().map(|x| x.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_and_write() {
        let pairs = vec![
            PairMetrics {
                utterance_id: "a".into(),
                mcd: Some(4.0),
                pitch_distortion: None,
                energy_distortion: Some(0.1),
                secs: Some(0.8),
            },
            PairMetrics {
                utterance_id: "b".into(),
                mcd: Some(6.0),
                pitch_distortion: Some(12.0),
                energy_distortion: Some(0.3),
                secs: Some(0.6),
            },
        ];
        let r = MetricReport::aggregate(&pairs);
        assert_eq!(r.mcd.unwrap().mean, 5.0);
        assert_eq!(r.pitch_distortion.unwrap().count, 1);
        assert_eq!(r.unvoiced_pairs, 1);
        let dir = tempfile::tempdir().unwrap();
        write_metric_csv(&dir.path().join("m.csv"), &r).unwrap();
        write_json(&dir.path().join("m.json"), &r).unwrap();
        let text = std::fs::read_to_string(dir.path().join("m.csv")).unwrap();
        assert!(text.starts_with("metric,mean,half_width,count\nmcd,5,"));
    }
}
