//! Disentanglement (importance-entropy) and explicitness (held-out AUC)
//! of summary features with respect to a categorical label, using a small
//! random forest and an L1-regularized logistic regression.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ranks, EvalError};
use crate::dsp::NormStats;
use crate::nn::Matrix;

pub const MIN_PER_CLASS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    RandomForest,
    Lasso,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            trees: 25,
            max_depth: 6,
            min_leaf: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LassoConfig {
    pub lambda: f64,
    pub iterations: usize,
    pub step: f64,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            iterations: 400,
            step: 0.1,
        }
    }
}

enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Node::Leaf(p) => *p,
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if x[*feature] <= *threshold {
                    left.predict(x)
                } else {
                    right.predict(x)
                }
            }
        }
    }
}

fn gini(pos: f64, n: f64) -> f64 {
    if n == 0.0 {
        return 0.0;
    }
    let p = pos / n;
    2.0 * p * (1.0 - p)
}

struct TreeBuilder<'a> {
    x: &'a Matrix,
    y: &'a [bool],
    cfg: &'a ForestConfig,
    n_total: f64,
    importance: Vec<f64>,
}

impl TreeBuilder<'_> {
    fn build(&mut self, idx: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> Node {
        let n = idx.len() as f64;
        let pos = idx.iter().filter(|&&i| self.y[i]).count() as f64;
        let parent = gini(pos, n);
        if depth >= self.cfg.max_depth || idx.len() < 2 * self.cfg.min_leaf || parent == 0.0 {
            return Node::Leaf(pos / n);
        }
        let f = self.x.cols();
        let k = ((f as f64).sqrt().ceil() as usize).max(1);
        let mut feats: Vec<usize> = (0..f).collect();
        feats.shuffle(rng);
        let mut best: Option<(f64, usize, f64)> = None;
        for &feat in &feats[..k] {
            idx.sort_by(|&a, &b| self.x.get(a, feat).total_cmp(&self.x.get(b, feat)));
            let mut left_pos = 0.0;
            for split in 1..idx.len() {
                if self.y[idx[split - 1]] {
                    left_pos += 1.0;
                }
                let (a, b) = (
                    self.x.get(idx[split - 1], feat),
                    self.x.get(idx[split], feat),
                );
                if a == b || split < self.cfg.min_leaf || idx.len() - split < self.cfg.min_leaf {
                    continue;
                }
                let nl = split as f64;
                let nr = n - nl;
                let child = (nl * gini(left_pos, nl) + nr * gini(pos - left_pos, nr)) / n;
                let gain = parent - child;
                if best.map_or(true, |b| gain > b.0) {
                    best = Some((gain, feat, 0.5 * (a + b)));
                }
            }
        }
        let Some((gain, feature, threshold)) = best.filter(|b| b.0 > 0.0) else {
            return Node::Leaf(pos / n);
        };
        self.importance[feature] += gain * n / self.n_total;
        let mid = partition_in_place(idx, |i| self.x.get(i, feature) <= threshold);
        let (l, r) = idx.split_at_mut(mid);
        let left = Box::new(self.build(l, depth + 1, rng));
        let right = Box::new(self.build(r, depth + 1, rng));
        Node::Split {
            feature,
            threshold,
            left,
            right,
        }
    }
}

fn partition_in_place(v: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let mut mid = 0;
    for i in 0..v.len() {
        if pred(v[i]) {
            v.swap(i, mid);
            mid += 1;
        }
    }
    mid
}

/// Binary bagged forest; returns per-row probability and normalized
/// mean-decrease-impurity importances.
struct Forest {
    trees: Vec<Node>,
    importance: Vec<f64>,
}

impl Forest {
    fn fit(x: &Matrix, y: &[bool], cfg: &ForestConfig, rng: &mut ChaCha8Rng) -> Self {
        let n = x.rows();
        let mut importance = vec![0.0; x.cols()];
        let mut trees = Vec::with_capacity(cfg.trees);
        for _ in 0..cfg.trees {
            let mut idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let mut b = TreeBuilder {
                x,
                y,
                cfg,
                n_total: n as f64,
                importance: vec![0.0; x.cols()],
            };
            trees.push(b.build(&mut idx, 0, rng));
            for (a, v) in importance.iter_mut().zip(&b.importance) {
                *a += v / cfg.trees as f64;
            }
        }
        Self { trees, importance }
    }

    fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

/// L1 logistic regression by proximal gradient (ISTA) on standardized features.
struct Lasso {
    w: Vec<f64>,
    b: f64,
}

impl Lasso {
    fn fit(x: &Matrix, y: &[bool], cfg: &LassoConfig) -> Self {
        let (n, f) = x.shape();
        let mut w = vec![0.0; f];
        let mut b = 0.0;
        for _ in 0..cfg.iterations {
            let mut gw = vec![0.0; f];
            let mut gb = 0.0;
            for r in 0..n {
                let row = x.row(r);
                let z = b + row.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
                let err = crate::nn::sigmoid(z) - if y[r] { 1.0 } else { 0.0 };
                gb += err;
                for (g, v) in gw.iter_mut().zip(row) {
                    *g += err * v;
                }
            }
            b -= cfg.step * gb / n as f64;
            let t = cfg.step * cfg.lambda;
            for (wi, g) in w.iter_mut().zip(&gw) {
                let v = *wi - cfg.step * g / n as f64;
                *wi = v.signum() * (v.abs() - t).max(0.0);
            }
        }
        Self { w, b }
    }

    fn predict(&self, x: &[f64]) -> f64 {
        crate::nn::sigmoid(self.b + x.iter().zip(&self.w).map(|(a, c)| a * c).sum::<f64>())
    }
}

/// Area under the ROC curve via the rank-sum statistic; `None` if a class is absent.
pub fn auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let r = ranks(scores);
    let sum: f64 = r
        .iter()
        .zip(positive)
        .filter(|(_, &p)| p)
        .map(|(v, _)| v)
        .sum();
    Some((sum - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos * n_neg) as f64)
}

/// `1 - H(p)` with entropy base `k`, per feature, weighted by each
/// feature's share of total importance. `importance` is `features x classes`.
pub fn importance_disentanglement(importance: &Matrix) -> f64 {
    let (f, k) = importance.shape();
    let total: f64 = importance.data().iter().map(|v| v.abs()).sum();
    if total <= 0.0 || k < 2 {
        return 0.0;
    }
    let mut score = 0.0;
    for i in 0..f {
        let row: Vec<f64> = importance.row(i).iter().map(|v| v.abs()).collect();
        let s: f64 = row.iter().sum();
        if s <= 0.0 {
            continue;
        }
        let h: f64 = -row
            .iter()
            .map(|v| v / s)
            .filter(|&p| p > 0.0)
            .map(|p| p * p.ln() / (k as f64).ln())
            .sum::<f64>();
        score += (s / total) * (1.0 - h);
    }
    score
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierScores {
    pub kind: ClassifierKind,
    pub disentanglement: f64,
    /// Mean one-vs-rest held-out AUC.
    pub explicitness: f64,
}

fn stratified_split(
    labels: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    if by_class.len() < 2 {
        return Err(EvalError::SingleClass);
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for idx in by_class.values_mut() {
        if idx.len() < MIN_PER_CLASS {
            return Err(EvalError::TooFewSamples {
                needed: MIN_PER_CLASS,
                found: idx.len(),
            });
        }
        idx.shuffle(rng);
        let n_test = (idx.len() * 3 / 10).max(1);
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Scores features against labels with one classifier family.
pub fn disentanglement_explicitness(
    features: &Matrix,
    labels: &[usize],
    kind: ClassifierKind,
    seed: u64,
) -> Result<ClassifierScores, EvalError> {
    if labels.len() != features.rows() {
        return Err(EvalError::DimensionMismatch {
            expected: features.rows(),
            found: labels.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (train, test) = stratified_split(labels, &mut rng)?;
    let classes: Vec<usize> = labels
        .iter()
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let norm = NormStats::fit(train.iter().map(|&i| features.row(i)))?;
    let standardize = |rows: &[usize]| {
        Matrix::from_rows(
            &rows
                .iter()
                .map(|&i| norm.apply(features.row(i)))
                .collect::<Vec<_>>(),
        )
    };
    let xtr = standardize(&train);
    let xte = standardize(&test);
    let mut importance = Matrix::zeros(features.cols(), classes.len());
    let mut aucs = Vec::new();
    for (k, &c) in classes.iter().enumerate() {
        let ytr: Vec<bool> = train.iter().map(|&i| labels[i] == c).collect();
        let yte: Vec<bool> = test.iter().map(|&i| labels[i] == c).collect();
        let (imp, scores): (Vec<f64>, Vec<f64>) = match kind {
            ClassifierKind::RandomForest => {
                let forest = Forest::fit(&xtr, &ytr, &ForestConfig::default(), &mut rng);
                let s = (0..xte.rows())
                    .map(|r| forest.predict(xte.row(r)))
                    .collect();
                (forest.importance, s)
            }
            ClassifierKind::Lasso => {
                let model = Lasso::fit(&xtr, &ytr, &LassoConfig::default());
                let s = (0..xte.rows()).map(|r| model.predict(xte.row(r))).collect();
                (model.w.iter().map(|v| v.abs()).collect(), s)
            }
        };
        for (f, v) in imp.into_iter().enumerate() {
            importance.set(f, k, v);
        }
        if let Some(a) = auc(&scores, &yte) {
            aucs.push(a);
        }
    }
    Ok(ClassifierScores {
        kind,
        disentanglement: importance_disentanglement(&importance),
        explicitness: super::mean(&aucs),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn data(n: usize, informative: bool, seed: u64) -> (Matrix, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..n).map(|i| i % 4).collect();
        let x = Matrix::from_fn(n, 6, |r, c| {
            let noise: f64 = rng.sample(StandardNormal);
            if informative && c < 4 {
                f64::from(u8::from(labels[r] == c)) * 2.0 + 0.3 * noise
            } else {
                noise
            }
        });
        (x, labels)
    }

    #[test]
    fn auc_cases() {
        assert_eq!(
            auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]),
            Some(1.0)
        );
        assert_eq!(
            auc(&[0.9, 0.8, 0.2, 0.1], &[false, false, true, true]),
            Some(0.0)
        );
        assert_eq!(auc(&[0.5; 4], &[false, true, false, true]), Some(0.5));
        assert_eq!(auc(&[0.5; 2], &[true, true]), None);
    }

    #[test]
    fn informative_vs_null() {
        for kind in [ClassifierKind::RandomForest, ClassifierKind::Lasso] {
            let (x, y) = data(400, true, 1);
            let good = disentanglement_explicitness(&x, &y, kind, 0).unwrap();
            let (x, y) = data(400, false, 2);
            let null = disentanglement_explicitness(&x, &y, kind, 0).unwrap();
            assert!(good.explicitness > 0.85, "{kind:?} {good:?}");
            assert!((null.explicitness - 0.5).abs() < 0.1, "{kind:?} {null:?}");
        }
    }

    #[test]
    fn importance_entropy() {
        // each feature explains exactly one class
        let diag = Matrix::from_fn(3, 3, |r, c| if r == c { 1.0 } else { 0.0 });
        assert!((importance_disentanglement(&diag) - 1.0).abs() < 1e-12);
        let flat = Matrix::filled(3, 3, 1.0);
        assert!(importance_disentanglement(&flat).abs() < 1e-12);
    }

    #[test]
    fn contracts() {
        let x = Matrix::zeros(10, 2);
        assert!(matches!(
            disentanglement_explicitness(&x, &[0; 10], ClassifierKind::Lasso, 0),
            Err(EvalError::SingleClass)
        ));
        let y: Vec<usize> = (0..10).map(|i| usize::from(i < 2)).collect();
        assert!(matches!(
            disentanglement_explicitness(&x, &y, ClassifierKind::Lasso, 0),
            Err(EvalError::TooFewSamples { .. })
        ));
    }
}
