//! Baseline multilayer perceptron over the features concatenated with a
//! trainable entity embedding. No gating, no regularizers.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::losses::LossBundle;
use crate::math::softmax_rows;
use crate::model::exnet::TaskLoss;
use crate::model::Model;
use crate::nn::{DenseLayer, DropoutLayer, EmbeddingTable, InputBatchNorm, ReluLayer, TensorRef};
use crate::optim::{train_loop, OptimConfig, TrainHistory};
use crate::rng::SeededRng;
use crate::Mat;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedMlpConfig {
    /// Embedding size; 0 degrades to a plain MLP on the features.
    pub embed_dim: usize,
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub input_batchnorm: bool,
    pub classes: usize,
    pub task: TaskLoss,
    pub embed_init_std: f64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for EmbedMlpConfig {
    fn default() -> Self {
        EmbedMlpConfig {
            embed_dim: 64,
            hidden: vec![128, 64],
            dropout: 0.15,
            input_batchnorm: false,
            classes: 2,
            task: TaskLoss::CrossEntropy,
            embed_init_std: 0.05,
            bn_momentum: 0.99,
            bn_eps: 1e-5,
        }
    }
}

impl EmbedMlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::InvalidConfig("classes must be >= 2".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig("dropout must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EmbedMlpModel {
    pub config: EmbedMlpConfig,
    pub num_features: usize,
    pub embeddings: Option<EmbeddingTable>,
    batchnorm: Option<InputBatchNorm>,
    hidden: Vec<(DenseLayer, ReluLayer, DropoutLayer)>,
    output: DenseLayer,
    cache_probs: Option<Mat>,
    cache_ids: Vec<usize>,
}

impl EmbedMlpModel {
    pub fn new(
        config: EmbedMlpConfig,
        num_features: usize,
        num_entities: usize,
        rng: &SeededRng,
    ) -> Result<Self> {
        config.validate()?;
        let mut init_rng = rng.stream("init");
        let embeddings = if config.embed_dim > 0 {
            Some(EmbeddingTable::new(
                num_entities,
                config.embed_dim,
                config.embed_init_std,
                &mut init_rng,
            )?)
        } else {
            None
        };
        let batchnorm = if config.input_batchnorm {
            Some(InputBatchNorm::new(
                num_features,
                config.bn_momentum,
                config.bn_eps,
            ))
        } else {
            None
        };
        let mut hidden = Vec::new();
        let mut width = num_features + config.embed_dim;
        for &h in &config.hidden {
            hidden.push((
                DenseLayer::new(width, h, &mut init_rng),
                ReluLayer::new(),
                DropoutLayer::new(config.dropout)?,
            ));
            width = h;
        }
        let output = DenseLayer::new(width, config.classes, &mut init_rng);
        Ok(EmbedMlpModel {
            config,
            num_features,
            embeddings,
            batchnorm,
            hidden,
            output,
            cache_probs: None,
            cache_ids: Vec::new(),
        })
    }

    pub fn num_entities(&self) -> usize {
        self.embeddings.as_ref().map_or(0, |e| e.num_entities())
    }

    fn concat_input(&self, ids: &[usize], x: &Mat) -> Result<Mat> {
        if x.cols() != self.num_features {
            return Err(Error::ShapeMismatch(format!(
                "feature width {} vs model width {}",
                x.cols(),
                self.num_features
            )));
        }
        match &self.embeddings {
            None => Ok(x.clone()),
            Some(table) => {
                let emb = table.lookup(ids)?;
                let mut out = Mat::zeros(x.rows(), x.cols() + emb.cols());
                for r in 0..x.rows() {
                    let row = out.row_mut(r);
                    row[..x.cols()].copy_from_slice(x.row(r));
                    row[x.cols()..].copy_from_slice(emb.row(r));
                }
                Ok(out)
            }
        }
    }
}

impl Model for EmbedMlpModel {
    fn train_batch(
        &mut self,
        ids: &[usize],
        x: &Mat,
        labels: &[usize],
        dropout_rng: &mut SeededRng,
    ) -> Result<LossBundle> {
        for t in self.tensors() {
            if let Some(g) = t.grad {
                g.fill(0.0);
            }
        }
        let input = self.concat_input(ids, x)?;
        let mut cur = match &mut self.batchnorm {
            Some(bn) => {
                // normalize only the feature block, embeddings pass through
                let feats = Mat::from_fn(input.rows(), self.num_features, |r, c| input.get(r, c));
                let normed = bn.forward_train(&feats, true)?;
                let mut out = input.clone();
                for r in 0..out.rows() {
                    out.row_mut(r)[..self.num_features].copy_from_slice(normed.row(r));
                }
                out
            }
            None => input,
        };
        for (dense, relu, dropout) in &mut self.hidden {
            cur = dense.forward(&cur, true)?;
            cur = relu.forward(&cur, true);
            cur = dropout.forward(&cur, true, dropout_rng);
        }
        let mut probs = self.output.forward(&cur, true)?;
        softmax_rows(&mut probs);
        self.cache_probs = Some(probs.clone());
        self.cache_ids = ids.to_vec();

        let task = self.config.task.loss(&probs, labels)?;
        let grad_probs = self.config.task.grad(&probs, labels)?;
        // softmax backward
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
            let gfeat = Mat::from_fn(grad.rows(), self.num_features, |r, c| grad.get(r, c));
            bn.backward(&gfeat)?;
        }
        if let Some(table) = &mut self.embeddings {
            let d = table.dim();
            let p = self.num_features;
            let gemb = Mat::from_fn(grad.rows(), d, |r, c| grad.get(r, p + c));
            table.backward(ids, &gemb)?;
        }
        Ok(LossBundle::assemble(task, 0.0, 0.0, 0.0, 0.0, 0.0))
    }

    fn predict(&self, ids: &[usize], x: &Mat) -> Result<Mat> {
        let input = self.concat_input(ids, x)?;
        let mut cur = match &self.batchnorm {
            Some(bn) => {
                let feats = Mat::from_fn(input.rows(), self.num_features, |r, c| input.get(r, c));
                let normed = bn.forward_inference(&feats)?;
                let mut out = input.clone();
                for r in 0..out.rows() {
                    out.row_mut(r)[..self.num_features].copy_from_slice(normed.row(r));
                }
                out
            }
            None => input,
        };
        for (dense, _, _) in &self.hidden {
            cur = dense.forward_inference(&cur)?;
            cur = cur.map(|v| v.max(0.0));
        }
        let mut probs = self.output.forward_inference(&cur)?;
        softmax_rows(&mut probs);
        Ok(probs)
    }

    fn task_loss(&self, pred: &Mat, labels: &[usize]) -> Result<f64> {
        self.config.task.loss(pred, labels)
    }

    fn tensors(&mut self) -> Vec<TensorRef<'_>> {
        let mut out = Vec::new();
        if let Some(e) = &mut self.embeddings {
            out.extend(e.tensors("embed"));
        }
        if let Some(bn) = &mut self.batchnorm {
            out.extend(bn.tensors("bn"));
        }
        for (i, (dense, _, _)) in self.hidden.iter_mut().enumerate() {
            out.extend(dense.tensors(&format!("hidden{i}")));
        }
        out.extend(self.output.tensors("out"));
        out
    }
}

/// Build and train the baseline on a dataset's train/val splits.
pub fn embed_mlp_train(
    data: &Dataset,
    cfg: &EmbedMlpConfig,
    opt: &OptimConfig,
    seed: u64,
) -> Result<(EmbedMlpModel, TrainHistory)> {
    cfg.validate()?;
    let root = SeededRng::new(seed);
    let mut model =
        EmbedMlpModel::new(cfg.clone(), data.num_features(), data.num_entities(), &root)?;
    let history = train_loop(&mut model, data, opt, &root.stream("train"))?;
    Ok((model, history))
}
