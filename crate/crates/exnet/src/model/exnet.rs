//! The experts network: a gating block routing entities to `n` independent
//! expert sub-networks whose post-softmax outputs are convexly combined.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::losses::{self, LossBundle};
use crate::math::softmax_rows;
use crate::model::Model;
use crate::nn::{DenseLayer, DropoutLayer, EmbeddingTable, InputBatchNorm, ReluLayer, TensorRef};
use crate::optim::{train_loop, OptimConfig, TrainHistory};
use crate::rng::SeededRng;
use crate::Mat;

/// Task loss selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TaskLoss {
    #[default]
    CrossEntropy,
    Focal {
        gamma: f64,
    },
}

impl TaskLoss {
    pub fn loss(&self, pred: &Mat, labels: &[usize]) -> Result<f64> {
        match self {
            TaskLoss::CrossEntropy => losses::cross_entropy(pred, labels),
            TaskLoss::Focal { gamma } => losses::focal_loss(pred, labels, *gamma),
        }
    }

    pub fn grad(&self, pred: &Mat, labels: &[usize]) -> Result<Mat> {
        match self {
            TaskLoss::CrossEntropy => losses::cross_entropy_grad(pred, labels),
            TaskLoss::Focal { gamma } => losses::focal_loss_grad(pred, labels, *gamma),
        }
    }
}

/// Architecture and loss hyperparameters of an experts network.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExNetConfig {
    pub n_experts: usize,
    pub embed_dim: usize,
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub input_batchnorm: bool,
    pub classes: usize,
    pub lambda_spec: f64,
    pub lambda_entropy: f64,
    pub top_l: usize,
    pub rescale_spec: bool,
    pub task: TaskLoss,
    pub embed_init_std: f64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for ExNetConfig {
    fn default() -> Self {
        ExNetConfig {
            n_experts: 3,
            embed_dim: 64,
            hidden: Vec::new(),
            dropout: 0.0,
            input_batchnorm: true,
            classes: 2,
            lambda_spec: 7e-3,
            lambda_entropy: 1e-3,
            top_l: 1,
            rescale_spec: true,
            task: TaskLoss::CrossEntropy,
            embed_init_std: 0.05,
            bn_momentum: 0.99,
            bn_eps: 1e-5,
        }
    }
}

impl ExNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_experts == 0 {
            return Err(Error::InvalidConfig("n_experts must be >= 1".into()));
        }
        if self.embed_dim == 0 {
            return Err(Error::InvalidConfig("embed_dim must be >= 1".into()));
        }
        if self.classes < 2 {
            return Err(Error::InvalidConfig("classes must be >= 2".into()));
        }
        if self.top_l == 0 || self.top_l > self.n_experts {
            return Err(Error::InvalidConfig(format!(
                "top_l {} must be in [1, n_experts = {}]",
                self.top_l, self.n_experts
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig("dropout must be in [0, 1)".into()));
        }
        if self.lambda_spec < 0.0 || self.lambda_entropy < 0.0 {
            return Err(Error::InvalidConfig("loss weights must be >= 0".into()));
        }
        if let TaskLoss::Focal { gamma } = self.task {
            if gamma < 0.0 {
                return Err(Error::InvalidConfig("focal gamma must be >= 0".into()));
            }
        }
        Ok(())
    }
}

/// Gating block: softmax over inner products of entity and expert embeddings.
#[derive(Debug, Clone)]
pub struct GatingBlock {
    pub entity_embeddings: EmbeddingTable,
    /// One row per expert, `n x d`.
    pub expert_embeddings: Mat,
    pub expert_grad: Mat,
    cache_ids: Vec<usize>,
    cache_emb: Option<Mat>,
    cache_probs: Option<Mat>,
}

impl GatingBlock {
    fn new(num_entities: usize, n: usize, d: usize, init_std: f64, rng: &mut SeededRng) -> Result<Self> {
        Ok(GatingBlock {
            entity_embeddings: EmbeddingTable::new(num_entities, d, init_std, rng)?,
            expert_embeddings: rng.normal_matrix(n, d, 0.0, init_std)?,
            expert_grad: Mat::zeros(n, d),
            cache_ids: Vec::new(),
            cache_emb: None,
            cache_probs: None,
        })
    }

    pub fn n_experts(&self) -> usize {
        self.expert_embeddings.rows()
    }

    /// Attribution rows `softmax(W_experts . embedding(id))`.
    pub fn forward(&self, ids: &[usize]) -> Result<Mat> {
        let emb = self.entity_embeddings.lookup(ids)?;
        let mut logits = crate::math::matmul(&emb, &self.expert_embeddings.transpose())?;
        softmax_rows(&mut logits);
        Ok(logits)
    }

    fn forward_cached(&mut self, ids: &[usize]) -> Result<Mat> {
        let emb = self.entity_embeddings.lookup(ids)?;
        let mut logits = crate::math::matmul(&emb, &self.expert_embeddings.transpose())?;
        softmax_rows(&mut logits);
        self.cache_ids = ids.to_vec();
        self.cache_emb = Some(emb);
        self.cache_probs = Some(logits.clone());
        Ok(logits)
    }

    /// Backward from a gradient on the attribution probabilities.
    fn backward(&mut self, grad_probs: &Mat) -> Result<()> {
        let probs = self.cache_probs.as_ref().expect("gating backward without forward");
        let emb = self.cache_emb.as_ref().unwrap();
        let (batch, n) = probs.shape();
        // softmax backward per row
        let mut grad_logits = Mat::zeros(batch, n);
        for r in 0..batch {
            let p = probs.row(r);
            let g = grad_probs.row(r);
            let dot: f64 = p.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
            for c in 0..n {
                grad_logits.set(r, c, p[c] * (g[c] - dot));
            }
        }
        // logits = emb . W^T
        let grad_emb = crate::math::matmul(&grad_logits, &self.expert_embeddings)?;
        let gw = crate::math::matmul(&grad_logits.transpose(), emb)?;
        for (a, b) in self.expert_grad.data_mut().iter_mut().zip(gw.data().iter()) {
            *a += b;
        }
        let ids = self.cache_ids.clone();
        self.entity_embeddings.backward(&ids, &grad_emb)
    }
}

/// One expert: optional input batch norm, dense+ReLU+dropout hidden stack,
/// dense output, softmax over classes.
#[derive(Debug, Clone)]
struct Expert {
    batchnorm: Option<InputBatchNorm>,
    hidden: Vec<(DenseLayer, ReluLayer, DropoutLayer)>,
    output: DenseLayer,
    cache_probs: Option<Mat>,
}

impl Expert {
    fn new(cfg: &ExNetConfig, num_features: usize, rng: &mut SeededRng) -> Result<Self> {
        let batchnorm = if cfg.input_batchnorm {
            Some(InputBatchNorm::new(num_features, cfg.bn_momentum, cfg.bn_eps))
        } else {
            None
        };
        let mut hidden = Vec::new();
        let mut width = num_features;
        for &h in &cfg.hidden {
            hidden.push((
                DenseLayer::new(width, h, rng),
                ReluLayer::new(),
                DropoutLayer::new(cfg.dropout)?,
            ));
            width = h;
        }
        Ok(Expert {
            batchnorm,
            hidden,
            output: DenseLayer::new(width, cfg.classes, rng),
            cache_probs: None,
        })
    }

    fn forward_train(
        &mut self,
        x: &Mat,
        dropout_rng: Option<&mut SeededRng>,
        update_stats: bool,
    ) -> Result<Mat> {
        let mut cur = match &mut self.batchnorm {
            Some(bn) => bn.forward_train(x, update_stats)?,
            None => x.clone(),
        };
        let mut rng = dropout_rng;
        for (dense, relu, dropout) in &mut self.hidden {
            cur = dense.forward(&cur, true)?;
            cur = relu.forward(&cur, true);
            cur = match rng.as_deref_mut() {
                Some(r) => dropout.forward(&cur, true, r),
                None => dropout.forward(&cur, false, &mut SeededRng::new(0)),
            };
        }
        let mut logits = self.output.forward(&cur, true)?;
        softmax_rows(&mut logits);
        self.cache_probs = Some(logits.clone());
        Ok(logits)
    }

    fn forward_inference(&self, x: &Mat) -> Result<Mat> {
        let mut cur = match &self.batchnorm {
            Some(bn) => bn.forward_inference(x)?,
            None => x.clone(),
        };
        for (dense, _, _) in &self.hidden {
            cur = dense.forward_inference(&cur)?;
            cur = cur.map(|v| v.max(0.0));
        }
        let mut logits = self.output.forward_inference(&cur)?;
        softmax_rows(&mut logits);
        Ok(logits)
    }

    /// Backward from a gradient on the post-softmax probabilities.
    fn backward(&mut self, grad_probs: &Mat) -> Result<()> {
        let probs = self.cache_probs.as_ref().expect("expert backward without forward");
        let (batch, c) = probs.shape();
        let mut grad_logits = Mat::zeros(batch, c);
        for r in 0..batch {
            let p = probs.row(r);
            let g = grad_probs.row(r);
            let dot: f64 = p.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
            for j in 0..c {
                grad_logits.set(r, j, p[j] * (g[j] - dot));
            }
        }
        let mut grad = self.output.backward(&grad_logits)?;
        for (dense, relu, dropout) in self.hidden.iter_mut().rev() {
            grad = dropout.backward(&grad);
            grad = relu.backward(&grad);
            grad = dense.backward(&grad)?;
        }
        if let Some(bn) = &mut self.batchnorm {
            bn.backward(&grad)?;
        }
        Ok(())
    }

    fn tensors(&mut self, prefix: &str) -> Vec<TensorRef<'_>> {
        let mut out = Vec::new();
        if let Some(bn) = &mut self.batchnorm {
            out.extend(bn.tensors(&format!("{prefix}.bn")));
        }
        for (i, (dense, _, _)) in self.hidden.iter_mut().enumerate() {
            out.extend(dense.tensors(&format!("{prefix}.hidden{i}")));
        }
        out.extend(self.output.tensors(&format!("{prefix}.out")));
        out
    }
}

/// A trained (or training) experts network.
#[derive(Debug, Clone)]
pub struct ExNetModel {
    pub config: ExNetConfig,
    pub num_features: usize,
    pub gating: GatingBlock,
    experts: Vec<Expert>,
}

/// Per-entity attribution distributions and embeddings, extracted from the
/// gating block in one pass.
#[derive(Debug, Clone)]
pub struct AttributionReport {
    /// One row per entity, `num_entities x n`.
    pub attributions: Mat,
    /// One row per entity, `num_entities x d`.
    pub embeddings: Mat,
}

impl AttributionReport {
    /// Argmax expert per entity.
    pub fn dominant_experts(&self) -> Vec<usize> {
        (0..self.attributions.rows())
            .map(|r| {
                let row = self.attributions.row(r);
                let mut best = 0;
                for (i, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = i;
                    }
                }
                best
            })
            .collect()
    }

    /// Attribution mass on the dominant expert, per entity.
    pub fn dominant_strengths(&self) -> Vec<f64> {
        self.dominant_experts()
            .iter()
            .enumerate()
            .map(|(r, &e)| self.attributions.get(r, e))
            .collect()
    }
}

impl ExNetModel {
    pub fn new(
        config: ExNetConfig,
        num_features: usize,
        num_entities: usize,
        rng: &SeededRng,
    ) -> Result<Self> {
        config.validate()?;
        let mut init_rng = rng.stream("init");
        let gating = GatingBlock::new(
            num_entities,
            config.n_experts,
            config.embed_dim,
            config.embed_init_std,
            &mut init_rng,
        )?;
        let mut experts = Vec::with_capacity(config.n_experts);
        for _ in 0..config.n_experts {
            experts.push(Expert::new(&config, num_features, &mut init_rng)?);
        }
        Ok(ExNetModel {
            config,
            num_features,
            gating,
            experts,
        })
    }

    pub fn n_experts(&self) -> usize {
        self.experts.len()
    }

    pub fn num_entities(&self) -> usize {
        self.gating.entity_embeddings.num_entities()
    }

    /// Attribution rows for the given entity ids (inference path).
    pub fn gate_forward(&self, ids: &[usize]) -> Result<Mat> {
        self.gating.forward(ids)
    }

    /// Each expert's inference output on the shared feature batch.
    pub fn experts_forward(&self, x: &Mat) -> Result<Vec<Mat>> {
        if x.cols() != self.num_features {
            return Err(Error::ShapeMismatch(format!(
                "feature width {} vs model width {}",
                x.cols(),
                self.num_features
            )));
        }
        self.experts.iter().map(|e| e.forward_inference(x)).collect()
    }

    /// Convex combination of expert outputs under the attribution rows.
    pub fn combine(attributions: &Mat, expert_outputs: &[Mat]) -> Result<Mat> {
        if expert_outputs.is_empty() {
            return Err(Error::EmptyInput);
        }
        let (batch, classes) = expert_outputs[0].shape();
        if attributions.rows() != batch || attributions.cols() != expert_outputs.len() {
            return Err(Error::ShapeMismatch(format!(
                "attributions {}x{} vs {} experts over batch {}",
                attributions.rows(),
                attributions.cols(),
                expert_outputs.len(),
                batch
            )));
        }
        let mut out = Mat::zeros(batch, classes);
        for (i, eo) in expert_outputs.iter().enumerate() {
            for r in 0..batch {
                let w = attributions.get(r, i);
                let orow = out.row_mut(r);
                for (o, &v) in orow.iter_mut().zip(eo.row(r).iter()) {
                    *o += w * v;
                }
            }
        }
        Ok(out)
    }

    /// One pass of every entity through the gating block.
    pub fn extract_attributions(&self) -> Result<AttributionReport> {
        let ids: Vec<usize> = (0..self.num_entities()).collect();
        let attributions = self.gate_forward(&ids)?;
        let embeddings = self.gating.entity_embeddings.lookup(&ids)?;
        Ok(AttributionReport {
            attributions,
            embeddings,
        })
    }

    fn zero_grads(&mut self) {
        for t in self.tensors() {
            if let Some(g) = t.grad {
                g.fill(0.0);
            }
        }
    }

    /// Shared forward (+ optional backward) in training mode.
    fn forward_backward(
        &mut self,
        ids: &[usize],
        x: &Mat,
        labels: &[usize],
        mut dropout_rng: Option<&mut SeededRng>,
        update_stats: bool,
        do_backward: bool,
    ) -> Result<LossBundle> {
        if x.cols() != self.num_features {
            return Err(Error::ShapeMismatch(format!(
                "feature width {} vs model width {}",
                x.cols(),
                self.num_features
            )));
        }
        let attributions = self.gating.forward_cached(ids)?;
        let mut expert_outputs = Vec::with_capacity(self.experts.len());
        for expert in &mut self.experts {
            expert_outputs.push(expert.forward_train(x, dropout_rng.as_deref_mut(), update_stats)?);
        }
        let combined = Self::combine(&attributions, &expert_outputs)?;

        let task = self.config.task.loss(&combined, labels)?;
        let entropy = losses::entropy_loss(&attributions);
        let spec = losses::spec_loss(
            &expert_outputs,
            &attributions,
            self.config.top_l,
            self.config.rescale_spec,
        )?;
        let bundle = LossBundle::assemble(
            task,
            entropy,
            spec.raw,
            spec.used,
            self.config.lambda_spec,
            self.config.lambda_entropy,
        );
        if !do_backward {
            return Ok(bundle);
        }

        self.zero_grads();
        let grad_combined = self.config.task.grad(&combined, labels)?;
        let spec_grads = spec.input_grads(self.config.lambda_spec);
        let (batch, n) = attributions.shape();

        // gradient on each expert's probabilities
        for (i, expert) in self.experts.iter_mut().enumerate() {
            let mut g = spec_grads[i].clone();
            for r in 0..batch {
                let w = attributions.get(r, i);
                let grow = g.row_mut(r);
                for (gv, &gc) in grow.iter_mut().zip(grad_combined.row(r).iter()) {
                    *gv += w * gc;
                }
            }
            expert.backward(&g)?;
        }

        // gradient on the attribution rows: task mixing + entropy term
        let mut grad_attr = losses::entropy_loss_grad(&attributions);
        for v in grad_attr.data_mut() {
            *v *= self.config.lambda_entropy;
        }
        for i in 0..n {
            for r in 0..batch {
                let dot: f64 = grad_combined
                    .row(r)
                    .iter()
                    .zip(expert_outputs[i].row(r).iter())
                    .map(|(a, b)| a * b)
                    .sum();
                let cur = grad_attr.get(r, i);
                grad_attr.set(r, i, cur + dot);
            }
        }
        self.gating.backward(&grad_attr)?;
        Ok(bundle)
    }

    /// Training-mode total loss with frozen dropout and running statistics;
    /// the evaluation target for finite-difference gradient checks.
    pub fn loss_for_gradcheck(&mut self, ids: &[usize], x: &Mat, labels: &[usize]) -> Result<f64> {
        Ok(self
            .forward_backward(ids, x, labels, None, false, false)?
            .total)
    }

    /// As [`Self::loss_for_gradcheck`] but also fills the gradient buffers.
    pub fn backward_for_gradcheck(
        &mut self,
        ids: &[usize],
        x: &Mat,
        labels: &[usize],
    ) -> Result<LossBundle> {
        self.forward_backward(ids, x, labels, None, false, true)
    }
}

impl Model for ExNetModel {
    fn train_batch(
        &mut self,
        ids: &[usize],
        x: &Mat,
        labels: &[usize],
        dropout_rng: &mut SeededRng,
    ) -> Result<LossBundle> {
        self.forward_backward(ids, x, labels, Some(dropout_rng), true, true)
    }

    fn predict(&self, ids: &[usize], x: &Mat) -> Result<Mat> {
        let attributions = self.gate_forward(ids)?;
        let outputs = self.experts_forward(x)?;
        Self::combine(&attributions, &outputs)
    }

    fn task_loss(&self, pred: &Mat, labels: &[usize]) -> Result<f64> {
        self.config.task.loss(pred, labels)
    }

    fn tensors(&mut self) -> Vec<TensorRef<'_>> {
        let mut out = Vec::new();
        out.extend(self.gating.entity_embeddings.tensors("gating.entity"));
        let (n, d) = self.gating.expert_embeddings.shape();
        out.push(TensorRef {
            name: "gating.experts".into(),
            shape: vec![n, d],
            data: self.gating.expert_embeddings.data_mut(),
            grad: Some(self.gating.expert_grad.data_mut()),
        });
        for (i, e) in self.experts.iter_mut().enumerate() {
            out.extend(e.tensors(&format!("expert{i}")));
        }
        out
    }
}

/// Build and train an experts network on a dataset's train/val splits.
pub fn exnet_train(
    data: &Dataset,
    cfg: &ExNetConfig,
    opt: &OptimConfig,
    seed: u64,
) -> Result<(ExNetModel, TrainHistory)> {
    cfg.validate()?;
    let root = SeededRng::new(seed);
    let mut model = ExNetModel::new(cfg.clone(), data.num_features(), data.num_entities(), &root)?;
    let history = train_loop(&mut model, data, opt, &root.stream("train"))?;
    Ok((model, history))
}
