//! Reverse-mode automatic differentiation over [`Matrix`] values.
//!
//! A [`Graph`] records every operation of one forward pass on a tape.
//! [`Graph::backward`] walks the tape in reverse and returns one gradient
//! per parameter of the [`ParamStore`] the graph was built against.

use super::matrix::Matrix;
use super::params::{ParamId, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Silu(Var),
    Tanh(Var),
    Square(Var),
    Transpose(Var),
    SoftmaxRows(Var),
    MeanRows(Var),
    MeanAll(Var),
    SumAll(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize, usize),
    GatherRows(Var, Vec<usize>),
    AvgPool2(Var),
    Unfold(Var, usize),
    LayerNorm(Var, Vec<f64>),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        weights: Vec<f64>,
        probs: Matrix,
    },
    GradReverse(Var, f64),
    SegmentMean(Var, Vec<std::ops::Range<usize>>),
}

struct Node {
    value: Matrix,
    op: Op,
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).get(0, 0)
    }

    pub fn constant(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Constant)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let value = self.params.get(id).clone();
        self.push(value, Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    /// Adds a `1 x C` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row);
        assert_eq!(r.rows(), 1, "add_row expects a row vector");
        let mut v = self.value(a).clone();
        let cols = v.cols();
        assert_eq!(cols, r.cols(), "add_row width mismatch");
        for i in 0..v.rows() {
            for (x, &b) in v.row_mut(i).iter_mut().zip(self.value(row).row(0)) {
                *x += b;
            }
        }
        self.push(v, Op::AddRow(a, row))
    }

    /// Multiplies every row of `a` elementwise by a `1 x C` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row).clone();
        assert_eq!(r.rows(), 1, "mul_row expects a row vector");
        let mut v = self.value(a).clone();
        assert_eq!(v.cols(), r.cols(), "mul_row width mismatch");
        for i in 0..v.rows() {
            for (x, &b) in v.row_mut(i).iter_mut().zip(r.row(0)) {
                *x *= b;
            }
        }
        self.push(v, Op::MulRow(a, row))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).scale(s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * sigmoid(x));
        self.push(v, Op::Silu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut v = x.clone();
        for r in 0..v.rows() {
            softmax_in_place(v.row_mut(r));
        }
        self.push(v, Op::SoftmaxRows(a))
    }

    /// Mean over rows: `T x C -> 1 x C`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let v = self.value(a).mean_rows();
        self.push(v, Op::MeanRows(a))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let v = Matrix::filled(1, 1, self.value(a).mean());
        self.push(v, Op::MeanAll(a))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let v = Matrix::filled(1, 1, self.value(a).sum());
        self.push(v, Op::SumAll(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let mats: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Matrix::concat_cols(&mats);
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let x = self.value(a);
        let v = Matrix::from_fn(x.rows(), end - start, |r, c| x.get(r, start + c));
        self.push(v, Op::SliceCols(a, start))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a).slice_rows(start, end);
        self.push(v, Op::SliceRows(a, start, end))
    }

    /// Row gather; repeated indices replicate rows and their gradients accumulate.
    pub fn gather_rows(&mut self, a: Var, indices: Vec<usize>) -> Var {
        let v = self.value(a).gather_rows(&indices);
        self.push(v, Op::GatherRows(a, indices))
    }

    /// Averages consecutive row pairs. Requires an even row count.
    pub fn avg_pool2(&mut self, a: Var) -> Var {
        let x = self.value(a);
        assert!(x.rows() % 2 == 0, "avg_pool2 needs an even number of rows");
        let v = Matrix::from_fn(x.rows() / 2, x.cols(), |r, c| {
            0.5 * (x.get(2 * r, c) + x.get(2 * r + 1, c))
        });
        self.push(v, Op::AvgPool2(a))
    }

    /// im2col for a "same"-padded 1-D convolution with odd kernel size:
    /// `T x C -> T x (k*C)`, block `j` holding the input shifted by `j - k/2`.
    pub fn unfold(&mut self, a: Var, kernel: usize) -> Var {
        assert!(kernel % 2 == 1, "kernel size must be odd");
        let x = self.value(a);
        let (t, c) = x.shape();
        let pad = kernel / 2;
        let mut v = Matrix::zeros(t, kernel * c);
        for r in 0..t {
            for j in 0..kernel {
                let src = r as isize + j as isize - pad as isize;
                if src < 0 || src >= t as isize {
                    continue;
                }
                v.row_mut(r)[j * c..(j + 1) * c].copy_from_slice(x.row(src as usize));
            }
        }
        self.push(v, Op::Unfold(a, kernel))
    }

    /// Per-row normalization to zero mean and unit variance (no affine part).
    pub fn layer_norm(&mut self, a: Var) -> Var {
        const EPS: f64 = 1e-5;
        let x = self.value(a);
        let mut v = x.clone();
        let mut inv_std = Vec::with_capacity(x.rows());
        for r in 0..x.rows() {
            let row = v.row_mut(r);
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
            let is = 1.0 / (var + EPS).sqrt();
            row.iter_mut().for_each(|y| *y = (*y - mean) * is);
            inv_std.push(is);
        }
        self.push(v, Op::LayerNorm(a, inv_std))
    }

    /// Weighted mean cross-entropy of row-wise logits against class targets.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], weights: &[f64]) -> Var {
        let z = self.value(logits);
        assert_eq!(z.rows(), targets.len(), "one target per logit row");
        assert_eq!(targets.len(), weights.len(), "one weight per target");
        let mut probs = z.clone();
        let total_w: f64 = weights.iter().sum();
        let mut loss = 0.0;
        for (r, (&t, &w)) in targets.iter().zip(weights).enumerate() {
            let row = probs.row_mut(r);
            softmax_in_place(row);
            loss -= w * row[t].max(f64::MIN_POSITIVE).ln();
        }
        let loss = if total_w > 0.0 { loss / total_w } else { 0.0 };
        self.push(
            Matrix::filled(1, 1, loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
                probs,
            },
        )
    }

    /// Mean squared error against a constant target.
    pub fn mse(&mut self, a: Var, target: &Matrix) -> Var {
        let t = self.constant(target.clone());
        let d = self.sub(a, t);
        let sq = self.square(d);
        self.mean_all(sq)
    }

    /// Gradient reversal: identity forward, `-scale * grad` backward.
    pub fn grad_reverse(&mut self, a: Var, scale: f64) -> Var {
        let v = self.value(a).clone();
        self.push(v, Op::GradReverse(a, scale))
    }

    /// Stops gradient flow into `a`.
    pub fn detach(&mut self, a: Var) -> Var {
        self.grad_reverse(a, 0.0)
    }

    /// Mean over each row range: `T x C -> ranges.len() x C`.
    pub fn segment_mean(&mut self, a: Var, ranges: Vec<std::ops::Range<usize>>) -> Var {
        let x = self.value(a);
        let mut v = Matrix::zeros(ranges.len(), x.cols());
        for (i, r) in ranges.iter().enumerate() {
            assert!(!r.is_empty(), "segment_mean over an empty range");
            let inv = 1.0 / r.len() as f64;
            for t in r.clone() {
                for (o, &y) in v.row_mut(i).iter_mut().zip(x.row(t)) {
                    *o += y * inv;
                }
            }
        }
        self.push(v, Op::SegmentMean(a, ranges))
    }

    /// Gradients of the scalar `loss` with respect to every parameter.
    pub fn backward(&self, loss: Var) -> Vec<Matrix> {
        let mut grads = self.backward_nodes(loss);
        let mut out: Vec<Matrix> = self
            .params
            .iter()
            .map(|(_, m)| Matrix::zeros(m.rows(), m.cols()))
            .collect();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Param(id) = node.op {
                if let Some(g) = grads[i].take() {
                    out[id.index()].add_assign(&g);
                }
            }
        }
        out
    }

    /// Gradient of `loss` with respect to an arbitrary node.
    pub fn grad_of(&self, loss: Var, wrt: Var) -> Matrix {
        let mut grads = self.backward_nodes(loss);
        grads[wrt.0].take().unwrap_or_else(|| {
            let v = self.value(wrt);
            Matrix::zeros(v.rows(), v.cols())
        })
    }

    fn backward_nodes(&self, loss: Var) -> Vec<Option<Matrix>> {
        assert_eq!(self.value(loss).shape(), (1, 1), "loss must be scalar");
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        grads
    }

    fn propagate(&self, i: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Constant | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                accumulate(grads, *a, g.matmul_t(val(*b)));
                accumulate(grads, *b, val(*a).t_matmul(g));
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                accumulate(grads, *a, g.zip_map(val(*b), |x, y| x * y));
                accumulate(grads, *b, g.zip_map(val(*a), |x, y| x * y));
            }
            Op::AddRow(a, row) => {
                accumulate(grads, *a, g.clone());
                let mut gr = Matrix::zeros(1, g.cols());
                for t in 0..g.rows() {
                    for (o, &d) in gr.data_mut().iter_mut().zip(g.row(t)) {
                        *o += d;
                    }
                }
                accumulate(grads, *row, gr);
            }
            Op::MulRow(a, row) => {
                let r = val(*row);
                let x = val(*a);
                let mut ga = g.clone();
                let mut gr = Matrix::zeros(1, r.cols());
                for t in 0..g.rows() {
                    for c in 0..g.cols() {
                        ga.set(t, c, g.get(t, c) * r.get(0, c));
                        gr.data_mut()[c] += g.get(t, c) * x.get(t, c);
                    }
                }
                accumulate(grads, *a, ga);
                accumulate(grads, *row, gr);
            }
            Op::Scale(a, s) => accumulate(grads, *a, g.scale(*s)),
            Op::Relu(a) => {
                accumulate(
                    grads,
                    *a,
                    g.zip_map(val(*a), |d, x| if x > 0.0 { d } else { 0.0 }),
                );
            }
            Op::Silu(a) => {
                accumulate(
                    grads,
                    *a,
                    g.zip_map(val(*a), |d, x| {
                        let s = sigmoid(x);
                        d * (s + x * s * (1.0 - s))
                    }),
                );
            }
            Op::Tanh(a) => {
                accumulate(grads, *a, g.zip_map(&node.value, |d, y| d * (1.0 - y * y)));
            }
            Op::Square(a) => {
                accumulate(grads, *a, g.zip_map(val(*a), |d, x| 2.0 * d * x));
            }
            Op::Transpose(a) => accumulate(grads, *a, g.transpose()),
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let mut ga = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(d, p)| d * p).sum();
                    for c in 0..y.cols() {
                        ga.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                    }
                }
                accumulate(grads, *a, ga);
            }
            Op::MeanRows(a) => {
                let x = val(*a);
                let inv = 1.0 / x.rows() as f64;
                let ga = Matrix::from_fn(x.rows(), x.cols(), |_, c| g.get(0, c) * inv);
                accumulate(grads, *a, ga);
            }
            Op::MeanAll(a) => {
                let x = val(*a);
                let d = g.get(0, 0) / x.len() as f64;
                accumulate(grads, *a, Matrix::filled(x.rows(), x.cols(), d));
            }
            Op::SumAll(a) => {
                let x = val(*a);
                accumulate(grads, *a, Matrix::filled(x.rows(), x.cols(), g.get(0, 0)));
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let w = val(*p).cols();
                    let gp = Matrix::from_fn(g.rows(), w, |r, c| g.get(r, offset + c));
                    accumulate(grads, *p, gp);
                    offset += w;
                }
            }
            Op::SliceCols(a, start) => {
                let x = val(*a);
                let mut ga = Matrix::zeros(x.rows(), x.cols());
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        ga.set(r, start + c, g.get(r, c));
                    }
                }
                accumulate(grads, *a, ga);
            }
            Op::SliceRows(a, start, end) => {
                let x = val(*a);
                let mut ga = Matrix::zeros(x.rows(), x.cols());
                for r in *start..*end {
                    ga.row_mut(r).copy_from_slice(g.row(r - start));
                }
                accumulate(grads, *a, ga);
            }
            Op::GatherRows(a, indices) => {
                let x = val(*a);
                let mut ga = Matrix::zeros(x.rows(), x.cols());
                for (r, &src) in indices.iter().enumerate() {
                    for (o, &d) in ga.row_mut(src).iter_mut().zip(g.row(r)) {
                        *o += d;
                    }
                }
                accumulate(grads, *a, ga);
            }
            Op::AvgPool2(a) => {
                let x = val(*a);
                let ga = Matrix::from_fn(x.rows(), x.cols(), |r, c| 0.5 * g.get(r / 2, c));
                accumulate(grads, *a, ga);
            }
            Op::Unfold(a, kernel) => {
                let x = val(*a);
                let (t, c) = x.shape();
                let pad = kernel / 2;
                let mut ga = Matrix::zeros(t, c);
                for r in 0..t {
                    for j in 0..*kernel {
                        let src = r as isize + j as isize - pad as isize;
                        if src < 0 || src >= t as isize {
                            continue;
                        }
                        let src = src as usize;
                        for k in 0..c {
                            let d = g.get(r, j * c + k);
                            ga.row_mut(src)[k] += d;
                        }
                    }
                }
                accumulate(grads, *a, ga);
            }
            Op::LayerNorm(a, inv_std) => {
                let y = &node.value;
                let mut ga = Matrix::zeros(y.rows(), y.cols());
                let n = y.cols() as f64;
                for r in 0..y.rows() {
                    let gr = g.row(r);
                    let yr = y.row(r);
                    let mean_g = gr.iter().sum::<f64>() / n;
                    let mean_gy = gr.iter().zip(yr).map(|(d, v)| d * v).sum::<f64>() / n;
                    for c in 0..y.cols() {
                        ga.set(r, c, inv_std[r] * (gr[c] - mean_g - yr[c] * mean_gy));
                    }
                }
                accumulate(grads, *a, ga);
            }
            Op::CrossEntropy {
                logits,
                targets,
                weights,
                probs,
            } => {
                let total_w: f64 = weights.iter().sum();
                let mut ga = probs.clone();
                let scale = if total_w > 0.0 {
                    g.get(0, 0) / total_w
                } else {
                    0.0
                };
                for (r, (&t, &w)) in targets.iter().zip(weights).enumerate() {
                    let row = ga.row_mut(r);
                    row[t] -= 1.0;
                    row.iter_mut().for_each(|x| *x *= w * scale);
                }
                accumulate(grads, *logits, ga);
            }
            Op::GradReverse(a, s) => accumulate(grads, *a, g.scale(-*s)),
            Op::SegmentMean(a, ranges) => {
                let x = val(*a);
                let mut ga = Matrix::zeros(x.rows(), x.cols());
                for (i, r) in ranges.iter().enumerate() {
                    let inv = 1.0 / r.len() as f64;
                    for t in r.clone() {
                        for (o, &d) in ga.row_mut(t).iter_mut().zip(g.row(i)) {
                            *o += d * inv;
                        }
                    }
                }
                accumulate(grads, *a, ga);
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    row.iter_mut().for_each(|x| *x /= sum);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    /// Checks d(loss)/d(param 0) against central differences.
    fn check(build: impl Fn(&mut Graph, Var) -> Var, shape: (usize, usize)) {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = ParamStore::new();
        let id = store.add("p", random_matrix(&mut rng, shape.0, shape.1));
        let analytic = {
            let mut g = Graph::new(&store);
            let p = g.param(id);
            let loss = build(&mut g, p);
            g.backward(loss).remove(0)
        };
        let h = 1e-6;
        for k in 0..store.get(id).len() {
            let mut plus = store.clone();
            plus.get_mut(id).data_mut()[k] += h;
            let mut minus = store.clone();
            minus.get_mut(id).data_mut()[k] -= h;
            let eval = |s: &ParamStore| {
                let mut g = Graph::new(s);
                let p = g.param(id);
                let loss = build(&mut g, p);
                g.scalar(loss)
            };
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let a = analytic.data()[k];
            assert!(
                (a - numeric).abs() <= 1e-6 * (1.0 + numeric.abs()),
                "entry {k}: analytic {a} vs numeric {numeric}"
            );
        }
    }

    #[test]
    fn matmul_and_softmax_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = random_matrix(&mut rng, 4, 3);
        check(
            move |g, p| {
                let wc = g.constant(w.clone());
                let y = g.matmul(p, wc);
                let s = g.softmax_rows(y);
                let sq = g.square(s);
                g.sum_all(sq)
            },
            (2, 4),
        );
    }

    #[test]
    fn layer_norm_and_silu_gradients() {
        check(
            |g, p| {
                let n = g.layer_norm(p);
                let s = g.silu(n);
                let t = g.tanh(s);
                let sq = g.square(t);
                g.mean_all(sq)
            },
            (3, 5),
        );
    }

    #[test]
    fn unfold_pool_gather_gradients() {
        check(
            |g, p| {
                let u = g.unfold(p, 3);
                let pooled = g.avg_pool2(u);
                let up = g.gather_rows(pooled, vec![0, 0, 1, 1, 1]);
                let r = g.slice_cols(up, 1, 5);
                let sq = g.square(r);
                g.sum_all(sq)
            },
            (4, 2),
        );
    }

    #[test]
    fn segment_mean_gradient() {
        check(
            |g, p| {
                let m = g.segment_mean(p, vec![0..2, 1..4, 3..4]);
                let sq = g.square(m);
                g.sum_all(sq)
            },
            (4, 3),
        );
    }

    #[test]
    fn cross_entropy_gradient() {
        check(
            |g, p| g.cross_entropy(p, &[0, 2, 1], &[1.0, 0.5, 2.0]),
            (3, 3),
        );
    }

    #[test]
    fn broadcast_row_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_matrix(&mut rng, 5, 3);
        check(
            move |g, p| {
                let xc = g.constant(x.clone());
                let a = g.mul_row(xc, p);
                let b = g.add_row(a, p);
                let m = g.mean_rows(b);
                let sq = g.square(m);
                g.sum_all(sq)
            },
            (1, 3),
        );
    }

    #[test]
    fn grad_reverse_is_identity_forward_and_negated_backward() {
        let mut store = ParamStore::new();
        let id = store.add("p", Matrix::from_vec(1, 2, vec![0.3, -1.2]));
        let mut g = Graph::new(&store);
        let p = g.param(id);
        let r = g.grad_reverse(p, 0.5);
        assert_eq!(g.value(r), g.value(p));
        let loss = g.sum_all(r);
        let grads = g.backward(loss);
        assert_eq!(grads[0].data(), &[-0.5, -0.5]);
    }
}
