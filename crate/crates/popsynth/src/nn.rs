//! Minimal feed-forward building blocks with closed-form backpropagation.
//!
//! The networks in this crate are small and fixed, so layers carry their own
//! parameter, gradient, and optimizer-moment buffers, and every layer
//! provides an exact analytic backward pass (verified against finite
//! differences in the test suites).

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// A trainable parameter matrix with its gradient and Adam moments.
/// Vectors are stored as 1×n matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PTensor {
    pub value: Array2<f64>,
    #[serde(skip)]
    pub grad: Array2<f64>,
    #[serde(skip)]
    m: Array2<f64>,
    #[serde(skip)]
    v: Array2<f64>,
}

impl PTensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            value: Array2::zeros((rows, cols)),
            grad: Array2::zeros((rows, cols)),
            m: Array2::zeros((rows, cols)),
            v: Array2::zeros((rows, cols)),
        }
    }

    pub fn constant(rows: usize, cols: usize, c: f64) -> Self {
        let mut t = Self::zeros(rows, cols);
        t.value.fill(c);
        t
    }

    /// Uniform init in ±1/sqrt(fan_in).
    pub fn uniform_fan_in<R: Rng>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Self {
        let lim = 1.0 / (fan_in as f64).sqrt();
        let mut t = Self::zeros(rows, cols);
        for v in t.value.iter_mut() {
            *v = rng.random_range(-lim..lim);
        }
        t
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    /// Restores gradient/moment buffers after deserialization.
    pub fn sync_aux(&mut self) {
        let dim = self.value.raw_dim();
        if self.grad.raw_dim() != dim {
            self.grad = Array2::zeros(dim.clone());
            self.m = Array2::zeros(dim.clone());
            self.v = Array2::zeros(dim);
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Adam with a shared step counter across the tensors it updates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            t: 0,
        }
    }

    pub fn step(&mut self, params: Vec<&mut PTensor>) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for p in params {
            azip_adam(p, self.lr, self.beta1, self.beta2, self.eps, bc1, bc2);
            p.zero_grad();
        }
    }
}

fn azip_adam(p: &mut PTensor, lr: f64, b1: f64, b2: f64, eps: f64, bc1: f64, bc2: f64) {
    let g = &p.grad;
    ndarray::Zip::from(&mut p.m).and(g).for_each(|m, &g| {
        *m = b1 * *m + (1.0 - b1) * g;
    });
    ndarray::Zip::from(&mut p.v).and(g).for_each(|v, &g| {
        *v = b2 * *v + (1.0 - b2) * g * g;
    });
    ndarray::Zip::from(&mut p.value)
        .and(&p.m)
        .and(&p.v)
        .for_each(|w, &m, &v| {
            *w -= lr * (m / bc1) / ((v / bc2).sqrt() + eps);
        });
}

/// Fully connected layer, `y = x W + b`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dense {
    pub w: PTensor,
    pub b: PTensor,
    #[serde(skip)]
    cache_x: Option<Array2<f64>>,
}

impl Dense {
    pub fn new<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        Self {
            w: PTensor::uniform_fan_in(in_dim, out_dim, in_dim, rng),
            b: PTensor::zeros(1, out_dim),
            cache_x: None,
        }
    }

    pub fn forward(&mut self, x: &Array2<f64>) -> Array2<f64> {
        self.cache_x = Some(x.clone());
        self.forward_infer(x)
    }

    pub fn forward_infer(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w.value) + &self.b.value
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Array2<f64> {
        let x = self.cache_x.as_ref().expect("forward before backward");
        self.w.grad += &x.t().dot(dy);
        self.b.grad += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        dy.dot(&self.w.value.t())
    }

    pub fn params_mut(&mut self) -> Vec<&mut PTensor> {
        vec![&mut self.w, &mut self.b]
    }

    pub fn sync_aux(&mut self) {
        self.w.sync_aux();
        self.b.sync_aux();
    }
}

/// Batch normalization over the batch axis with running statistics for
/// inference.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: PTensor,
    pub beta: PTensor,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
    #[serde(skip)]
    cache: Option<BnCache>,
}

#[derive(Debug, Clone)]
struct BnCache {
    x_hat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl BatchNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: PTensor::constant(1, dim, 1.0),
            beta: PTensor::zeros(1, dim),
            running_mean: Array1::zeros(dim),
            running_var: Array1::ones(dim),
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }

    pub fn forward_train(&mut self, x: &Array2<f64>) -> Array2<f64> {
        let n = x.nrows() as f64;
        let mean = x.mean_axis(Axis(0)).unwrap();
        let var = x
            .map_axis(Axis(0), |col| {
                let m = col.sum() / n;
                col.iter().map(|&v| (v - m).powi(2)).sum::<f64>() / n
            });
        let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        let x_hat = (x - &mean) * &inv_std;
        let y = &x_hat * &self.gamma.value.row(0) + &self.beta.value.row(0);
        self.running_mean = &self.running_mean * (1.0 - self.momentum) + &mean * self.momentum;
        self.running_var = &self.running_var * (1.0 - self.momentum) + &var * self.momentum;
        self.cache = Some(BnCache { x_hat, inv_std });
        y
    }

    pub fn forward_infer(&self, x: &Array2<f64>) -> Array2<f64> {
        let inv_std = self.running_var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        let x_hat = (x - &self.running_mean) * &inv_std;
        &x_hat * &self.gamma.value.row(0) + &self.beta.value.row(0)
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Array2<f64> {
        let cache = self.cache.as_ref().expect("forward before backward");
        let n = dy.nrows() as f64;
        let x_hat = &cache.x_hat;

        let dgamma = (dy * x_hat).sum_axis(Axis(0));
        let dbeta = dy.sum_axis(Axis(0));
        self.gamma.grad += &dgamma.clone().insert_axis(Axis(0));
        self.beta.grad += &dbeta.clone().insert_axis(Axis(0));

        // dx = gamma*inv_std/n * (n*dy - sum(dy) - x_hat * sum(dy*x_hat))
        let term = dy * n - &dbeta - x_hat * &dgamma;
        term * &self.gamma.value.row(0) * &cache.inv_std / n
    }

    pub fn params_mut(&mut self) -> Vec<&mut PTensor> {
        vec![&mut self.gamma, &mut self.beta]
    }

    pub fn sync_aux(&mut self) {
        self.gamma.sync_aux();
        self.beta.sync_aux();
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Relu {
    #[serde(skip)]
    mask: Option<Array2<f64>>,
}

impl Relu {
    pub fn forward(&mut self, x: &Array2<f64>) -> Array2<f64> {
        let mask = x.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let y = x * &mask;
        self.mask = Some(mask);
        y
    }

    pub fn forward_infer(x: &Array2<f64>) -> Array2<f64> {
        x.mapv(|v| v.max(0.0))
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Array2<f64> {
        dy * self.mask.as_ref().expect("forward before backward")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeakyRelu {
    pub alpha: f64,
    #[serde(skip)]
    mask: Option<Array2<f64>>,
}

impl LeakyRelu {
    pub fn new(alpha: f64) -> Self {
        Self { alpha, mask: None }
    }

    pub fn forward(&mut self, x: &Array2<f64>) -> Array2<f64> {
        let alpha = self.alpha;
        let mask = x.mapv(|v| if v > 0.0 { 1.0 } else { alpha });
        let y = x * &mask;
        self.mask = Some(mask);
        y
    }

    pub fn forward_infer(&self, x: &Array2<f64>) -> Array2<f64> {
        let alpha = self.alpha;
        x.mapv(|v| if v > 0.0 { v } else { alpha * v })
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Array2<f64> {
        dy * self.mask.as_ref().expect("forward before backward")
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable ln(1 + e^x).
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Row-wise softmax.
pub fn softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut y = x.clone();
    for mut row in y.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    y
}

/// Gated recurrent cell (standard LSTM equations, gate order i,f,g,o).
/// Input projections are split from recurrent projections so the input half
/// can be computed for all timesteps in one matrix product.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LstmCell {
    pub w_x: PTensor, // in_dim × 4*hid
    pub w_h: PTensor, // hid × 4*hid
    pub b: PTensor,   // 1 × 4*hid
    pub in_dim: usize,
    pub hid: usize,
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone)]
pub struct LstmStep {
    pub i: Array2<f64>,
    pub f: Array2<f64>,
    pub g: Array2<f64>,
    pub o: Array2<f64>,
    pub c_prev: Array2<f64>,
    pub c: Array2<f64>,
    pub tanh_c: Array2<f64>,
    pub h: Array2<f64>,
}

impl LstmCell {
    pub fn new<R: Rng>(in_dim: usize, hid: usize, rng: &mut R) -> Self {
        let mut b = PTensor::zeros(1, 4 * hid);
        // Forget-gate bias starts at 1.
        for j in hid..2 * hid {
            b.value[[0, j]] = 1.0;
        }
        Self {
            w_x: PTensor::uniform_fan_in(in_dim, 4 * hid, in_dim.max(1), rng),
            w_h: PTensor::uniform_fan_in(hid, 4 * hid, hid, rng),
            b,
            in_dim,
            hid,
        }
    }

    /// Input-side projection for a whole (batch*T) stack of inputs.
    pub fn project_inputs(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w_x.value)
    }

    /// One timestep given the precomputed input projection `zx` for this step.
    pub fn step(&self, zx: &Array2<f64>, h_prev: &Array2<f64>, c_prev: &Array2<f64>) -> LstmStep {
        let hid = self.hid;
        let z = zx + &h_prev.dot(&self.w_h.value) + &self.b.value;
        let i = z.slice(ndarray::s![.., 0..hid]).mapv(sigmoid);
        let f = z.slice(ndarray::s![.., hid..2 * hid]).mapv(sigmoid);
        let g = z.slice(ndarray::s![.., 2 * hid..3 * hid]).mapv(f64::tanh);
        let o = z.slice(ndarray::s![.., 3 * hid..4 * hid]).mapv(sigmoid);
        let c = &f * c_prev + &i * &g;
        let tanh_c = c.mapv(f64::tanh);
        let h = &o * &tanh_c;
        LstmStep {
            i,
            f,
            g,
            o,
            c_prev: c_prev.clone(),
            c,
            tanh_c,
            h,
        }
    }

    /// Backward through one step. `dh`/`dc` are the gradients flowing into
    /// h_t and c_t. Returns (dz, dh_prev, dc_prev); the caller accumulates
    /// weight gradients from the stacked dz and inputs.
    pub fn backward_step(
        &self,
        step: &LstmStep,
        dh: &Array2<f64>,
        dc_in: &Array2<f64>,
    ) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let hid = self.hid;
        let d_o = dh * &step.tanh_c;
        let dc = dc_in + &(dh * &step.o * &step.tanh_c.mapv(|t| 1.0 - t * t));
        let d_i = &dc * &step.g;
        let d_f = &dc * &step.c_prev;
        let d_g = &dc * &step.i;
        let dc_prev = &dc * &step.f;

        let batch = dh.nrows();
        let mut dz = Array2::zeros((batch, 4 * hid));
        {
            let mut s = dz.slice_mut(ndarray::s![.., 0..hid]);
            s.assign(&(&d_i * &step.i * &step.i.mapv(|v| 1.0 - v)));
            let mut s = dz.slice_mut(ndarray::s![.., hid..2 * hid]);
            s.assign(&(&d_f * &step.f * &step.f.mapv(|v| 1.0 - v)));
            let mut s = dz.slice_mut(ndarray::s![.., 2 * hid..3 * hid]);
            s.assign(&(&d_g * &step.g.mapv(|v| 1.0 - v * v)));
            let mut s = dz.slice_mut(ndarray::s![.., 3 * hid..4 * hid]);
            s.assign(&(&d_o * &step.o * &step.o.mapv(|v| 1.0 - v)));
        }
        let dh_prev = dz.dot(&self.w_h.value.t());
        (dz, dh_prev, dc_prev)
    }

    pub fn params_mut(&mut self) -> Vec<&mut PTensor> {
        vec![&mut self.w_x, &mut self.w_h, &mut self.b]
    }

    pub fn sync_aux(&mut self) {
        self.w_x.sync_aux();
        self.w_h.sync_aux();
        self.b.sync_aux();
    }
}

/// Token embedding table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Embedding {
    pub table: PTensor, // vocab × dim
}

impl Embedding {
    pub fn new<R: Rng>(vocab: usize, dim: usize, rng: &mut R) -> Self {
        Self {
            table: PTensor::uniform_fan_in(vocab, dim, dim, rng),
        }
    }

    pub fn lookup(&self, ids: &[usize]) -> Array2<f64> {
        let dim = self.table.value.ncols();
        let mut out = Array2::zeros((ids.len(), dim));
        for (r, &id) in ids.iter().enumerate() {
            out.row_mut(r).assign(&self.table.value.row(id));
        }
        out
    }

    pub fn backward(&mut self, ids: &[usize], dy: &Array2<f64>) {
        for (r, &id) in ids.iter().enumerate() {
            let mut grad_row = self.table.grad.row_mut(id);
            grad_row += &dy.row(r);
        }
    }

    pub fn sync_aux(&mut self) {
        self.table.sync_aux();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn dense_forward_shape_and_bias() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mut layer = Dense::new(3, 2, &mut rng);
        layer.w.value.fill(0.0);
        layer.b.value[[0, 0]] = 1.5;
        layer.b.value[[0, 1]] = -0.5;
        let x = Array2::zeros((4, 3));
        let y = layer.forward(&x);
        assert_eq!(y.dim(), (4, 2));
        assert_eq!(y[[0, 0]], 1.5);
        assert_eq!(y[[3, 1]], -0.5);
    }

    #[test]
    fn batchnorm_train_normalizes() {
        let mut bn = BatchNorm::new(1);
        let x = ndarray::arr2(&[[1.0], [2.0], [3.0], [4.0]]);
        let y = bn.forward_train(&x);
        let mean = y.mean().unwrap();
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-4);
    }

    #[test]
    fn batchnorm_infer_is_pure() {
        let mut bn = BatchNorm::new(2);
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let x = Array2::from_shape_fn((8, 2), |_| rng.random_range(-1.0..1.0));
        bn.forward_train(&x);
        let a = bn.forward_infer(&x);
        let b = bn.forward_infer(&x);
        assert_eq!(a, b);
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut t = PTensor::zeros(1, 1);
        t.grad[[0, 0]] = 1.0;
        let mut opt = Adam::new(0.1, 0.9, 0.999);
        opt.step(vec![&mut t]);
        assert!(t.value[[0, 0]] < 0.0);
    }

    #[test]
    fn softplus_stable_at_extremes() {
        assert!((softplus(800.0) - 800.0).abs() < 1e-9);
        assert!(softplus(-800.0).abs() < 1e-9);
        assert!((softplus(0.0) - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn lstm_step_shapes() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let cell = LstmCell::new(4, 6, &mut rng);
        let x = Array2::from_shape_fn((2, 4), |_| rng.random_range(-1.0..1.0));
        let h = Array2::zeros((2, 6));
        let c = Array2::zeros((2, 6));
        let zx = cell.project_inputs(&x);
        let step = cell.step(&zx, &h, &c);
        assert_eq!(step.h.dim(), (2, 6));
        assert_eq!(step.c.dim(), (2, 6));
    }
}
