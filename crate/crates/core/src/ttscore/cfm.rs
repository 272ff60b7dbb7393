//! Optimal-transport conditional flow matching.

use rand::Rng;
use rand_distr::StandardNormal;

use super::decoder::UNetDecoder;
use crate::nn::{Graph, Matrix, Var};

pub const SIGMA_MIN: f64 = 1e-4;

/// `x_t = (1 - (1 - sigma) t) x0 + t x1`.
pub fn ot_path(x0: &Matrix, x1: &Matrix, t: f64, sigma: f64) -> Matrix {
    let a = 1.0 - (1.0 - sigma) * t;
    x0.zip_map(x1, |p, q| a * p + t * q)
}

/// `u = x1 - (1 - sigma) x0`, the time-independent target field.
pub fn ot_target(x0: &Matrix, x1: &Matrix, sigma: f64) -> Matrix {
    x1.zip_map(x0, |q, p| q - (1.0 - sigma) * p)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Flow-matching loss on the graph: MSE between the decoder field at
/// `(x_t, t, mu)` and the OT target, over the first `valid` rows.
pub fn cfm_loss(
    g: &mut Graph,
    decoder: &UNetDecoder,
    x0: &Matrix,
    x1: &Matrix,
    t: f64,
    mu: Var,
    valid: usize,
) -> Var {
    let xt = g.constant(ot_path(x0, x1, t, SIGMA_MIN));
    let pred = decoder.forward(g, xt, t, mu);
    let pred = g.slice_rows(pred, 0, valid);
    g.mse(pred, &ot_target(x0, x1, SIGMA_MIN).slice_rows(0, valid))
}

/// Euler integration of the learned field from `t = 0` to `t = 1`.
pub fn euler_sample(
    decoder: &UNetDecoder,
    params: &crate::nn::ParamStore,
    mu: &Matrix,
    x0: Matrix,
    steps: usize,
) -> Matrix {
    let steps = steps.max(1);
    let dt = 1.0 / steps as f64;
    let mut x = x0;
    for i in 0..steps {
        let t = i as f64 * dt;
        let v = {
            let mut g = Graph::new(params);
            let xv = g.constant(x.clone());
            let mv = g.constant(mu.clone());
            let out = decoder.forward(&mut g, xv, t, mv);
            g.value(out).clone()
        };
        x = x.zip_map(&v, |a, b| a + dt * b);
    }
    x
}
