use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{sinusoidal_embedding, Conv1d, Graph, Linear, Matrix, ParamStore, Var};

/// Row count multiple required by the two pooling stages.
pub const TIME_MULTIPLE: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub mel_dim: usize,
    pub width: usize,
    pub time_dim: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ResBlock {
    conv1: Conv1d,
    time: Linear,
    conv2: Conv1d,
}

impl ResBlock {
    fn new(
        store: &mut ParamStore,
        name: &str,
        width: usize,
        time_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            conv1: Conv1d::new(store, &format!("{name}.conv1"), width, width, 3, rng),
            time: Linear::new(store, &format!("{name}.time"), time_dim, width, rng),
            conv2: Conv1d::new(store, &format!("{name}.conv2"), width, width, 3, rng),
        }
    }

    fn forward(&self, g: &mut Graph, x: Var, temb: Var) -> Var {
        let h = self.conv1.forward(g, x);
        let tb = self.time.forward(g, temb);
        let h = g.add_row(h, tb);
        let h = g.silu(h);
        let h = self.conv2.forward(g, h);
        g.add(x, h)
    }
}

/// 1-D U-Net over time-major `T x C` sequences with two pooling stages.
/// Predicts the flow field from `(x_t, t, mu)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UNetDecoder {
    pub config: DecoderConfig,
    input: Conv1d,
    time_mlp: Linear,
    down0: ResBlock,
    down1: ResBlock,
    mid: ResBlock,
    up1: Conv1d,
    up0: Conv1d,
    out: Linear,
}

fn upsample2(g: &mut Graph, x: Var) -> Var {
    let n = g.value(x).rows();
    g.gather_rows(x, (0..2 * n).map(|i| i / 2).collect())
}

impl UNetDecoder {
    pub fn new(store: &mut ParamStore, config: DecoderConfig, rng: &mut impl Rng) -> Self {
        let (m, w, td) = (config.mel_dim, config.width, config.time_dim);
        Self {
            input: Conv1d::new(store, "dec.input", 2 * m, w, 3, rng),
            time_mlp: Linear::new(store, "dec.time", td, td, rng),
            down0: ResBlock::new(store, "dec.down0", w, td, rng),
            down1: ResBlock::new(store, "dec.down1", w, td, rng),
            mid: ResBlock::new(store, "dec.mid", w, td, rng),
            up1: Conv1d::new(store, "dec.up1", 2 * w, w, 3, rng),
            up0: Conv1d::new(store, "dec.up0", 2 * w, w, 3, rng),
            out: Linear::new(store, "dec.out", w, m, rng),
            config,
        }
    }

    /// `x_t` and `mu` must have a row count divisible by [`TIME_MULTIPLE`].
    pub fn forward(&self, g: &mut Graph, x_t: Var, t: f64, mu: Var) -> Var {
        let rows = g.value(x_t).rows();
        assert!(
            rows % TIME_MULTIPLE == 0,
            "decoder input rows must be a multiple of 4"
        );
        let temb = g.constant(Matrix::row_vector(&sinusoidal_embedding(
            1000.0 * t,
            self.config.time_dim,
            10_000.0,
        )));
        let temb = self.time_mlp.forward(g, temb);
        let temb = g.silu(temb);

        let x = g.concat_cols(&[x_t, mu]);
        let h0 = self.input.forward(g, x);
        let h0 = g.silu(h0);
        let h0 = self.down0.forward(g, h0, temb);
        let h1 = g.avg_pool2(h0);
        let h1 = self.down1.forward(g, h1, temb);
        let h2 = g.avg_pool2(h1);
        let h2 = self.mid.forward(g, h2, temb);

        let u1 = upsample2(g, h2);
        let u1 = g.concat_cols(&[u1, h1]);
        let u1 = self.up1.forward(g, u1);
        let u1 = g.silu(u1);
        let u0 = upsample2(g, u1);
        let u0 = g.concat_cols(&[u0, h0]);
        let u0 = self.up0.forward(g, u0);
        let u0 = g.silu(u0);
        self.out.forward(g, u0)
    }
}

/// Rounds `t` up to a multiple of [`TIME_MULTIPLE`].
pub fn padded_len(t: usize) -> usize {
    t.div_ceil(TIME_MULTIPLE) * TIME_MULTIPLE
}
