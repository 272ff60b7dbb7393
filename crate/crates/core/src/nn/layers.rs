use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::matrix::Matrix;
use super::params::{ParamId, ParamStore};

/// `y = x W + b`, `W: in x out`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let weight = store.add_glorot(format!("{name}.weight"), in_dim, out_dim, rng);
        let bias = store.add(format!("{name}.bias"), Matrix::zeros(1, out_dim));
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let y = g.matmul(x, w);
        g.add_row(y, b)
    }

    /// Graph-free evaluation for inference paths.
    pub fn apply(&self, store: &ParamStore, x: &Matrix) -> Matrix {
        let mut y = x.matmul(store.get(self.weight));
        let b = store.get(self.bias);
        for r in 0..y.rows() {
            for (v, &bb) in y.row_mut(r).iter_mut().zip(b.row(0)) {
                *v += bb;
            }
        }
        y
    }
}

/// "Same"-padded 1-D convolution over time-major `T x C_in` input.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Conv1d {
    pub kernel: usize,
    pub proj: Linear,
}

impl Conv1d {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            kernel,
            proj: Linear::new(store, name, in_ch * kernel, out_ch, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let cols = g.unfold(x, self.kernel);
        self.proj.forward(g, cols)
    }
}

/// Layer normalization with learned gain and shift.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub shift: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        Self {
            gain: store.add(format!("{name}.gain"), Matrix::filled(1, dim, 1.0)),
            shift: store.add(format!("{name}.shift"), Matrix::zeros(1, dim)),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let n = g.layer_norm(x);
        let gain = g.param(self.gain);
        let shift = g.param(self.shift);
        let y = g.mul_row(n, gain);
        g.add_row(y, shift)
    }
}

/// Multi-head self-attention.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SelfAttention {
    pub heads: usize,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub out: Linear,
}

impl SelfAttention {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(dim % heads == 0, "model dim must divide evenly into heads");
        Self {
            heads,
            query: Linear::new(store, &format!("{name}.q"), dim, dim, rng),
            key: Linear::new(store, &format!("{name}.k"), dim, dim, rng),
            value: Linear::new(store, &format!("{name}.v"), dim, dim, rng),
            out: Linear::new(store, &format!("{name}.o"), dim, dim, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let dim = self.query.out_dim;
        let head_dim = dim / self.heads;
        let q = self.query.forward(g, x);
        let k = self.key.forward(g, x);
        let v = self.value.forward(g, x);
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (s, e) = (h * head_dim, (h + 1) * head_dim);
            let qh = g.slice_cols(q, s, e);
            let kh = g.slice_cols(k, s, e);
            let vh = g.slice_cols(v, s, e);
            let kt = g.transpose(kh);
            let scores = g.matmul(qh, kt);
            let scores = g.scale(scores, 1.0 / (head_dim as f64).sqrt());
            let attn = g.softmax_rows(scores);
            outs.push(g.matmul(attn, vh));
        }
        let cat = g.concat_cols(&outs);
        self.out.forward(g, cat)
    }
}

/// Sinusoidal features of position (or flow time) `pos`, `dim` even.
pub fn sinusoidal_embedding(pos: f64, dim: usize, max_period: f64) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for i in 0..half {
        let freq = (-(max_period.ln()) * i as f64 / half as f64).exp();
        out[i] = (pos * freq).sin();
        out[half + i] = (pos * freq).cos();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_apply_matches_graph() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let lin = Linear::new(&mut store, "l", 3, 2, &mut rng);
        store.get_mut(lin.bias).data_mut()[1] = 0.25;
        let x = Matrix::from_fn(4, 3, |r, c| (r * 3 + c) as f64 * 0.1);
        let mut g = Graph::new(&store);
        let xv = g.constant(x.clone());
        let y = lin.forward(&mut g, xv);
        assert_eq!(g.value(y), &lin.apply(&store, &x));
    }

    #[test]
    fn conv_with_identity_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let conv = Conv1d::new(&mut store, "c", 2, 2, 3, &mut rng);
        // centre tap = identity, side taps = 0
        let w = Matrix::from_fn(6, 2, |r, c| {
            if r >= 2 && r < 4 && r - 2 == c {
                1.0
            } else {
                0.0
            }
        });
        *store.get_mut(conv.proj.weight) = w;
        let x = Matrix::from_fn(5, 2, |r, c| (r + 10 * c) as f64);
        let mut g = Graph::new(&store);
        let xv = g.constant(x.clone());
        let y = conv.forward(&mut g, xv);
        assert_eq!(g.value(y), &x);
    }

    #[test]
    fn sinusoidal_embedding_is_bounded() {
        let e = sinusoidal_embedding(0.37, 16, 10_000.0);
        assert_eq!(e.len(), 16);
        assert!(e.iter().all(|v| v.abs() <= 1.0));
        assert_eq!(
            sinusoidal_embedding(0.0, 4, 100.0),
            vec![0.0, 0.0, 1.0, 1.0]
        );
    }
}
