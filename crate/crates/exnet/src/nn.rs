//! Hand-differentiated layers: dense, ReLU, dropout, input batch
//! normalization and embedding tables.
//!
//! Each layer caches what its backward pass needs during the training-mode
//! forward, and accumulates parameter gradients into its own grad buffers.
//! The layer set is fixed; there is no generic autodiff graph.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::Mat;

/// Named view over one parameter (or state) tensor of a model.
///
/// `grad` is `Some` for trainable tensors and `None` for pure state such as
/// batch-norm running statistics.
pub struct TensorRef<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a mut [f64],
    pub grad: Option<&'a mut [f64]>,
}

/// Affine layer `y = xW + b`.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub w: Mat,
    pub b: Vec<f64>,
    pub gw: Mat,
    pub gb: Vec<f64>,
    cache_x: Option<Mat>,
}

impl DenseLayer {
    /// Glorot-uniform weights, zero bias.
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut SeededRng) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let mut w = Mat::zeros(in_dim, out_dim);
        for v in w.data_mut() {
            *v = rng.uniform_range(-limit, limit);
        }
        DenseLayer {
            w,
            b: vec![0.0; out_dim],
            gw: Mat::zeros(in_dim, out_dim),
            gb: vec![0.0; out_dim],
            cache_x: None,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn forward(&mut self, x: &Mat, training: bool) -> Result<Mat> {
        if x.cols() != self.w.rows() {
            return Err(Error::ShapeMismatch(format!(
                "dense: input width {} vs weight rows {}",
                x.cols(),
                self.w.rows()
            )));
        }
        let mut y = crate::math::matmul(x, &self.w)?;
        for r in 0..y.rows() {
            let row = y.row_mut(r);
            for (v, b) in row.iter_mut().zip(self.b.iter()) {
                *v += b;
            }
        }
        if training {
            self.cache_x = Some(x.clone());
        }
        Ok(y)
    }

    /// Forward pass without caching, for inference.
    pub fn forward_inference(&self, x: &Mat) -> Result<Mat> {
        if x.cols() != self.w.rows() {
            return Err(Error::ShapeMismatch(format!(
                "dense: input width {} vs weight rows {}",
                x.cols(),
                self.w.rows()
            )));
        }
        let mut y = crate::math::matmul(x, &self.w)?;
        for r in 0..y.rows() {
            let row = y.row_mut(r);
            for (v, b) in row.iter_mut().zip(self.b.iter()) {
                *v += b;
            }
        }
        Ok(y)
    }

    /// Accumulates parameter gradients; returns the gradient w.r.t. the input.
    pub fn backward(&mut self, grad_out: &Mat) -> Result<Mat> {
        let x = self
            .cache_x
            .as_ref()
            .expect("dense backward without forward");
        if grad_out.rows() != x.rows() || grad_out.cols() != self.w.cols() {
            return Err(Error::ShapeMismatch(format!(
                "dense backward: grad {}x{}, expected {}x{}",
                grad_out.rows(),
                grad_out.cols(),
                x.rows(),
                self.w.cols()
            )));
        }
        // dW = x^T g
        let gw = crate::math::matmul(&x.transpose(), grad_out)?;
        for (a, b) in self.gw.data_mut().iter_mut().zip(gw.data().iter()) {
            *a += b;
        }
        for r in 0..grad_out.rows() {
            for (gb, g) in self.gb.iter_mut().zip(grad_out.row(r).iter()) {
                *gb += g;
            }
        }
        crate::math::matmul(grad_out, &self.w.transpose())
    }

    pub fn tensors(&mut self, prefix: &str) -> Vec<TensorRef<'_>> {
        let (wr, wc) = self.w.shape();
        vec![
            TensorRef {
                name: format!("{prefix}.w"),
                shape: vec![wr, wc],
                data: self.w.data_mut(),
                grad: Some(self.gw.data_mut()),
            },
            TensorRef {
                name: format!("{prefix}.b"),
                shape: vec![self.b.len()],
                data: &mut self.b,
                grad: Some(&mut self.gb),
            },
        ]
    }
}

/// Elementwise `max(x, 0)`; the subgradient at exactly 0 is 0.
#[derive(Debug, Clone, Default)]
pub struct ReluLayer {
    cache_x: Option<Mat>,
}

impl ReluLayer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, x: &Mat, training: bool) -> Mat {
        let y = x.map(|v| v.max(0.0));
        if training {
            self.cache_x = Some(x.clone());
        }
        y
    }

    pub fn backward(&mut self, grad_out: &Mat) -> Mat {
        let x = self.cache_x.as_ref().expect("relu backward without forward");
        let mut g = grad_out.clone();
        for (gv, &xv) in g.data_mut().iter_mut().zip(x.data().iter()) {
            if xv <= 0.0 {
                *gv = 0.0;
            }
        }
        g
    }
}

/// Inverted dropout: kept entries scaled by `1/(1-rate)` at train time,
/// identity at inference.
#[derive(Debug, Clone)]
pub struct DropoutLayer {
    pub rate: f64,
    mask: Option<Mat>,
}

impl DropoutLayer {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate must be in [0, 1), got {rate}"
            )));
        }
        Ok(DropoutLayer { rate, mask: None })
    }

    pub fn forward(&mut self, x: &Mat, training: bool, rng: &mut SeededRng) -> Mat {
        if !training || self.rate == 0.0 {
            self.mask = None;
            return x.clone();
        }
        let keep = 1.0 - self.rate;
        let scale = 1.0 / keep;
        let mut mask = Mat::zeros(x.rows(), x.cols());
        for m in mask.data_mut() {
            *m = if rng.uniform() < keep { scale } else { 0.0 };
        }
        let mut y = x.clone();
        for (v, m) in y.data_mut().iter_mut().zip(mask.data().iter()) {
            *v *= m;
        }
        self.mask = Some(mask);
        y
    }

    pub fn backward(&mut self, grad_out: &Mat) -> Mat {
        match &self.mask {
            None => grad_out.clone(),
            Some(mask) => {
                let mut g = grad_out.clone();
                for (v, m) in g.data_mut().iter_mut().zip(mask.data().iter()) {
                    *v *= m;
                }
                g
            }
        }
    }
}

/// Per-feature batch normalization applied to a layer input.
#[derive(Debug, Clone)]
pub struct InputBatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub ggamma: Vec<f64>,
    pub gbeta: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<BnCache>,
}

#[derive(Debug, Clone)]
struct BnCache {
    x_hat: Mat,
    inv_std: Vec<f64>,
}

impl InputBatchNorm {
    pub fn new(dim: usize, momentum: f64, eps: f64) -> Self {
        InputBatchNorm {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            ggamma: vec![0.0; dim],
            gbeta: vec![0.0; dim],
            momentum,
            eps,
            cache: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    /// Training-mode forward. `update_stats` is disabled during gradient
    /// checks so repeated evaluations see identical running statistics.
    pub fn forward_train(&mut self, x: &Mat, update_stats: bool) -> Result<Mat> {
        let (batch, dim) = x.shape();
        if dim != self.dim() {
            return Err(Error::ShapeMismatch(format!(
                "batchnorm: input width {} vs {}",
                dim,
                self.dim()
            )));
        }
        if batch < 2 {
            return Err(Error::InvalidArgument(
                "batchnorm training requires batch size >= 2".into(),
            ));
        }
        let bf = batch as f64;
        let mut mean = vec![0.0; dim];
        let mut var = vec![0.0; dim];
        for r in 0..batch {
            for (m, &v) in mean.iter_mut().zip(x.row(r).iter()) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= bf;
        }
        for r in 0..batch {
            for c in 0..dim {
                let d = x.get(r, c) - mean[c];
                var[c] += d * d;
            }
        }
        for v in var.iter_mut() {
            *v /= bf;
        }
        if update_stats {
            let m = self.momentum;
            // running variance uses the unbiased estimate
            let unbias = bf / (bf - 1.0);
            for c in 0..dim {
                self.running_mean[c] = m * self.running_mean[c] + (1.0 - m) * mean[c];
                self.running_var[c] = m * self.running_var[c] + (1.0 - m) * var[c] * unbias;
            }
        }
        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut x_hat = Mat::zeros(batch, dim);
        let mut y = Mat::zeros(batch, dim);
        for r in 0..batch {
            for c in 0..dim {
                let xh = (x.get(r, c) - mean[c]) * inv_std[c];
                x_hat.set(r, c, xh);
                y.set(r, c, self.gamma[c] * xh + self.beta[c]);
            }
        }
        self.cache = Some(BnCache { x_hat, inv_std });
        Ok(y)
    }

    /// Inference-mode forward using running statistics only.
    pub fn forward_inference(&self, x: &Mat) -> Result<Mat> {
        let (batch, dim) = x.shape();
        if dim != self.dim() {
            return Err(Error::ShapeMismatch(format!(
                "batchnorm: input width {} vs {}",
                dim,
                self.dim()
            )));
        }
        let mut y = Mat::zeros(batch, dim);
        for r in 0..batch {
            for c in 0..dim {
                let xh = (x.get(r, c) - self.running_mean[c])
                    / (self.running_var[c] + self.eps).sqrt();
                y.set(r, c, self.gamma[c] * xh + self.beta[c]);
            }
        }
        Ok(y)
    }

    /// Full backward including the batch mean/variance coupling terms.
    pub fn backward(&mut self, grad_out: &Mat) -> Result<Mat> {
        let cache = self
            .cache
            .as_ref()
            .expect("batchnorm backward without forward");
        let (batch, dim) = grad_out.shape();
        let bf = batch as f64;
        let mut gx = Mat::zeros(batch, dim);
        for c in 0..dim {
            let mut sum_g = 0.0;
            let mut sum_g_xhat = 0.0;
            for r in 0..batch {
                let g = grad_out.get(r, c);
                sum_g += g;
                sum_g_xhat += g * cache.x_hat.get(r, c);
            }
            self.gbeta[c] += sum_g;
            self.ggamma[c] += sum_g_xhat;
            let k = self.gamma[c] * cache.inv_std[c] / bf;
            for r in 0..batch {
                let g = grad_out.get(r, c);
                let xh = cache.x_hat.get(r, c);
                gx.set(r, c, k * (bf * g - sum_g - xh * sum_g_xhat));
            }
        }
        Ok(gx)
    }

    pub fn tensors(&mut self, prefix: &str) -> Vec<TensorRef<'_>> {
        let d = self.gamma.len();
        vec![
            TensorRef {
                name: format!("{prefix}.gamma"),
                shape: vec![d],
                data: &mut self.gamma,
                grad: Some(&mut self.ggamma),
            },
            TensorRef {
                name: format!("{prefix}.beta"),
                shape: vec![d],
                data: &mut self.beta,
                grad: Some(&mut self.gbeta),
            },
            TensorRef {
                name: format!("{prefix}.running_mean"),
                shape: vec![d],
                data: &mut self.running_mean,
                grad: None,
            },
            TensorRef {
                name: format!("{prefix}.running_var"),
                shape: vec![d],
                data: &mut self.running_var,
                grad: None,
            },
        ]
    }
}

/// Trainable per-entity embedding rows, initialized from `N(0, init_std^2)`.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub table: Mat,
    pub grad: Mat,
}

impl EmbeddingTable {
    pub fn new(num_entities: usize, dim: usize, init_std: f64, rng: &mut SeededRng) -> Result<Self> {
        Ok(EmbeddingTable {
            table: rng.normal_matrix(num_entities, dim, 0.0, init_std)?,
            grad: Mat::zeros(num_entities, dim),
        })
    }

    pub fn num_entities(&self) -> usize {
        self.table.rows()
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    pub fn lookup(&self, ids: &[usize]) -> Result<Mat> {
        for &id in ids {
            if id >= self.num_entities() {
                return Err(Error::EntityOutOfRange(id, self.num_entities()));
            }
        }
        Ok(self.table.gather_rows(ids))
    }

    /// Accumulates `grad_out` rows into the table gradient; repeated ids sum.
    pub fn backward(&mut self, ids: &[usize], grad_out: &Mat) -> Result<()> {
        if grad_out.rows() != ids.len() || grad_out.cols() != self.dim() {
            return Err(Error::ShapeMismatch(format!(
                "embedding backward: grad {}x{}, expected {}x{}",
                grad_out.rows(),
                grad_out.cols(),
                ids.len(),
                self.dim()
            )));
        }
        for (i, &id) in ids.iter().enumerate() {
            if id >= self.num_entities() {
                return Err(Error::EntityOutOfRange(id, self.num_entities()));
            }
            let grow = self.grad.row_mut(id);
            for (g, &v) in grow.iter_mut().zip(grad_out.row(i).iter()) {
                *g += v;
            }
        }
        Ok(())
    }

    pub fn tensors(&mut self, prefix: &str) -> Vec<TensorRef<'_>> {
        let (r, c) = self.table.shape();
        vec![TensorRef {
            name: format!("{prefix}.table"),
            shape: vec![r, c],
            data: self.table.data_mut(),
            grad: Some(self.grad.data_mut()),
        }]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finite_diff_grad(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        let mut xp = x.to_vec();
        for i in 0..x.len() {
            xp[i] = x[i] + h;
            let fp = f(&xp);
            xp[i] = x[i] - h;
            let fm = f(&xp);
            xp[i] = x[i];
            g[i] = (fp - fm) / (2.0 * h);
        }
        g
    }

    fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y).abs() / (x.abs().max(y.abs())).max(1e-8))
            .fold(0.0, f64::max)
    }

    #[test]
    fn dense_identity_forward() {
        let mut rng = SeededRng::new(0);
        let mut layer = DenseLayer::new(3, 3, &mut rng);
        layer.w = Mat::identity(3);
        layer.b = vec![0.0; 3];
        let x = Mat::from_vec(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.0, 4.0]);
        let y = layer.forward(&x, false).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn dense_zero_grad_out() {
        let mut rng = SeededRng::new(1);
        let mut layer = DenseLayer::new(4, 3, &mut rng);
        let x: Mat = SeededRng::new(2).normal_matrix(5, 4, 0.0, 1.0).unwrap();
        layer.forward(&x, true).unwrap();
        let gin = layer.backward(&Mat::zeros(5, 3)).unwrap();
        assert!(gin.data().iter().all(|&v| v == 0.0));
        assert!(layer.gw.data().iter().all(|&v| v == 0.0));
        assert!(layer.gb.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dense_gradient_matches_finite_differences() {
        let mut rng = SeededRng::new(3);
        let mut layer = DenseLayer::new(3, 4, &mut rng);
        let x: Mat = rng.normal_matrix(4, 3, 0.0, 1.0).unwrap();
        // loss = sum of squares of output / 2
        let y = layer.forward(&x, true).unwrap();
        let gin = layer.backward(&y).unwrap();

        let w0: Vec<f64> = layer.w.data().to_vec();
        let x0: Vec<f64> = x.data().to_vec();
        let loss_of_w = |w: &[f64]| {
            let mut l = layer.clone();
            l.w = Mat::from_vec(3, 4, w.to_vec());
            let y = l.forward(&x, false).unwrap();
            0.5 * y.data().iter().map(|v| v * v).sum::<f64>()
        };
        let fd_w = finite_diff_grad(loss_of_w, &w0, 1e-5);
        assert!(max_rel_err(layer.gw.data(), &fd_w) < 1e-6);

        let loss_of_x = |xv: &[f64]| {
            let mut l = layer.clone();
            let xm = Mat::from_vec(4, 3, xv.to_vec());
            let y = l.forward(&xm, false).unwrap();
            0.5 * y.data().iter().map(|v| v * v).sum::<f64>()
        };
        let fd_x = finite_diff_grad(loss_of_x, &x0, 1e-5);
        assert!(max_rel_err(gin.data(), &fd_x) < 1e-6);
    }

    #[test]
    fn relu_all_negative_and_positive() {
        let mut relu = ReluLayer::new();
        let x = Mat::from_vec(1, 3, vec![-1.0, -2.0, -0.5]);
        let y = relu.forward(&x, true);
        assert!(y.data().iter().all(|&v| v == 0.0));
        let g = relu.backward(&Mat::from_vec(1, 3, vec![1.0, 1.0, 1.0]));
        assert!(g.data().iter().all(|&v| v == 0.0));

        let x = Mat::from_vec(1, 3, vec![1.0, 2.0, 0.5]);
        let y = relu.forward(&x, true);
        assert_eq!(y, x);
        let g = relu.backward(&Mat::from_vec(1, 3, vec![0.3, 0.7, -1.0]));
        assert_eq!(g.data(), &[0.3, 0.7, -1.0]);
    }

    #[test]
    fn relu_finite_difference_away_from_zero() {
        let x: Mat = SeededRng::new(11).normal_matrix(3, 5, 0.0, 1.0).unwrap();
        // keep |x| > 1e-3 so the kink is not straddled
        let x = x.map(|v| if v.abs() < 1e-3 { v + 0.1 } else { v });
        let mut relu = ReluLayer::new();
        let y = relu.forward(&x, true);
        let gin = relu.backward(&y);
        let fd = finite_diff_grad(
            |xv| {
                let xm = Mat::from_vec(3, 5, xv.to_vec());
                let y = ReluLayer::new().forward(&xm, false);
                0.5 * y.data().iter().map(|v| v * v).sum::<f64>()
            },
            x.data(),
            1e-5,
        );
        assert!(max_rel_err(gin.data(), &fd) < 1e-6);
    }

    #[test]
    fn dropout_rate_zero_and_inference_are_identity() {
        let mut rng = SeededRng::new(4);
        let x: Mat = rng.normal_matrix(3, 3, 0.0, 1.0).unwrap();
        let mut d0 = DropoutLayer::new(0.0).unwrap();
        assert_eq!(d0.forward(&x, true, &mut rng), x);
        let mut d = DropoutLayer::new(0.7).unwrap();
        assert_eq!(d.forward(&x, false, &mut rng), x);
    }

    #[test]
    fn dropout_invalid_rate() {
        assert!(DropoutLayer::new(1.0).is_err());
        assert!(DropoutLayer::new(-0.1).is_err());
    }

    #[test]
    fn dropout_keep_fraction_and_mean() {
        let mut rng = SeededRng::new(5);
        let x = Mat::from_vec(100, 1000, vec![1.0; 100_000]);
        let mut d = DropoutLayer::new(0.4).unwrap();
        let y = d.forward(&x, true, &mut rng);
        let kept = y.data().iter().filter(|&&v| v != 0.0).count() as f64 / 100_000.0;
        assert!((0.59..=0.61).contains(&kept), "keep fraction {kept}");
        let mean = y.data().iter().sum::<f64>() / 100_000.0;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn batchnorm_train_normalizes() {
        let mut rng = SeededRng::new(6);
        let x: Mat = rng.normal_matrix(64, 5, 3.0, 2.0).unwrap();
        let mut bn = InputBatchNorm::new(5, 0.99, 1e-5);
        let y = bn.forward_train(&x, true).unwrap();
        for c in 0..5 {
            let col = y.col(c);
            let mean: f64 = col.iter().sum::<f64>() / 64.0;
            let var: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 64.0;
            assert!(mean.abs() < 1e-9, "mean {mean}");
            assert!((var - 1.0).abs() < 1e-4, "var {var}");
        }
    }

    #[test]
    fn batchnorm_small_batch_errors() {
        let mut bn = InputBatchNorm::new(2, 0.99, 1e-5);
        let x = Mat::from_vec(1, 2, vec![1.0, 2.0]);
        assert!(bn.forward_train(&x, true).is_err());
    }

    #[test]
    fn batchnorm_converged_inference_is_near_identity() {
        let mut bn = InputBatchNorm::new(3, 0.0, 1e-12);
        // momentum 0: running stats equal the last batch stats
        let x: Mat = SeededRng::new(7).normal_matrix(1000, 3, 0.0, 1.0).unwrap();
        bn.forward_train(&x, true).unwrap();
        let probe: Mat = SeededRng::new(8).normal_matrix(4, 3, 0.0, 1.0).unwrap();
        let y = bn.forward_inference(&probe).unwrap();
        for (a, b) in y.data().iter().zip(probe.data().iter()) {
            assert!((a - b).abs() < 0.1, "{a} vs {b}");
        }
    }

    #[test]
    fn batchnorm_backward_matches_finite_differences() {
        let x: Mat = SeededRng::new(9).normal_matrix(8, 5, 0.5, 1.5).unwrap();
        let mut bn = InputBatchNorm::new(5, 0.99, 1e-5);
        bn.gamma = vec![1.2, 0.8, -0.5, 2.0, 1.0];
        bn.beta = vec![0.1, -0.2, 0.3, 0.0, -1.0];

        let loss = |bn: &mut InputBatchNorm, x: &Mat| {
            let y = bn.forward_train(x, false).unwrap();
            y.data().iter().enumerate().map(|(i, v)| v * v * (1.0 + 0.01 * i as f64)).sum::<f64>()
        };

        let y = bn.forward_train(&x, false).unwrap();
        let grad_out = Mat::from_vec(
            8,
            5,
            y.data()
                .iter()
                .enumerate()
                .map(|(i, v)| 2.0 * v * (1.0 + 0.01 * i as f64))
                .collect(),
        );
        let gx = bn.backward(&grad_out).unwrap();

        let fd_x = finite_diff_grad(
            |xv| {
                let xm = Mat::from_vec(8, 5, xv.to_vec());
                loss(&mut bn.clone(), &xm)
            },
            x.data(),
            1e-5,
        );
        assert!(max_rel_err(gx.data(), &fd_x) < 1e-5);

        let g0 = bn.gamma.clone();
        let fd_gamma = finite_diff_grad(
            |gv| {
                let mut b2 = bn.clone();
                b2.gamma = gv.to_vec();
                loss(&mut b2, &x)
            },
            &g0,
            1e-5,
        );
        assert!(max_rel_err(&bn.ggamma, &fd_gamma) < 1e-5);
    }

    #[test]
    fn embedding_lookup_and_repeated_id_grad() {
        let mut rng = SeededRng::new(10);
        let mut table = EmbeddingTable::new(4, 3, 0.05, &mut rng).unwrap();
        let ids = [2usize, 0, 2];
        let out = table.lookup(&ids).unwrap();
        assert_eq!(out.row(0), table.table.row(2));
        assert_eq!(out.row(1), table.table.row(0));

        let grad = Mat::from_vec(3, 3, vec![1.0, 2.0, 3.0, 10.0, 20.0, 30.0, 0.5, 0.5, 0.5]);
        table.backward(&ids, &grad).unwrap();
        assert_eq!(table.grad.row(2), &[1.5, 2.5, 3.5]);
        assert_eq!(table.grad.row(0), &[10.0, 20.0, 30.0]);
        assert!(table.grad.row(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn embedding_out_of_range() {
        let mut rng = SeededRng::new(10);
        let table = EmbeddingTable::new(4, 3, 0.05, &mut rng).unwrap();
        let err = table.lookup(&[4]).unwrap_err().to_string();
        assert!(err.contains('4'), "{err}");
    }

    #[test]
    fn embedding_dense_composite_gradient_check() {
        // lookup -> dense -> squared loss
        let mut rng = SeededRng::new(12);
        let mut table = EmbeddingTable::new(5, 3, 0.5, &mut rng).unwrap();
        let mut dense = DenseLayer::new(3, 2, &mut rng);
        let ids = [1usize, 3, 1, 0];

        let emb = table.lookup(&ids).unwrap();
        let y = dense.forward(&emb, true).unwrap();
        let gemb = dense.backward(&y).unwrap();
        table.backward(&ids, &gemb).unwrap();

        let t0: Vec<f64> = table.table.data().to_vec();
        let fd = finite_diff_grad(
            |tv| {
                let mut t = table.clone();
                t.table = Mat::from_vec(5, 3, tv.to_vec());
                let emb = t.lookup(&ids).unwrap();
                let y = dense.clone().forward(&emb, false).unwrap();
                0.5 * y.data().iter().map(|v| v * v).sum::<f64>()
            },
            &t0,
            1e-5,
        );
        assert!(max_rel_err(table.grad.data(), &fd) < 1e-6);
    }
}
