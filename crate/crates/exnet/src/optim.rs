//! Optimizers and the training schedule: Nadam, the Lookahead wrapper,
//! the mini-batch loop and early stopping.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::model::{restore, snapshot, Model};
use crate::nn::TensorRef;
use crate::rng::SeededRng;

/// Nadam: Adam with a Nesterov-style lookahead on the first moment.
#[derive(Debug, Clone)]
pub struct Nadam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Nesterov correction on; turning it off gives plain Adam.
    pub nesterov: bool,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Nadam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Nadam {
            lr,
            beta1,
            beta2,
            eps,
            nesterov: true,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn with_defaults(lr: f64) -> Self {
        Self::new(lr, 0.9, 0.999, 1e-8)
    }

    /// One update over every trainable tensor. Moment buffers are allocated
    /// on first use; the block order must stay stable across calls.
    pub fn step(&mut self, blocks: &mut [TensorRef]) -> Result<()> {
        let trainable: Vec<usize> = blocks
            .iter()
            .enumerate()
            .filter(|(_, b)| b.grad.is_some())
            .map(|(i, _)| i)
            .collect();
        if self.m.is_empty() {
            for &i in &trainable {
                self.m.push(vec![0.0; blocks[i].data.len()]);
                self.v.push(vec![0.0; blocks[i].data.len()]);
            }
        }
        self.t += 1;
        let t = self.t as i32;
        let b1 = self.beta1;
        let b2 = self.beta2;
        let bc1 = 1.0 - b1.powi(t);
        let bc1_next = 1.0 - b1.powi(t + 1);
        let bc2 = 1.0 - b2.powi(t);
        for (slot, &bi) in trainable.iter().enumerate() {
            let block = &mut blocks[bi];
            let grad = block.grad.as_deref().unwrap();
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient(block.name.clone()));
            }
            let m = &mut self.m[slot];
            let v = &mut self.v[slot];
            for k in 0..grad.len() {
                let g = grad[k];
                m[k] = b1 * m[k] + (1.0 - b1) * g;
                v[k] = b2 * v[k] + (1.0 - b2) * g * g;
                let m_hat = if self.nesterov {
                    b1 * m[k] / bc1_next + (1.0 - b1) * g / bc1
                } else {
                    m[k] / bc1
                };
                let v_hat = v[k] / bc2;
                block.data[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Lookahead wrapper: keeps a slow copy of the trainable parameters and
/// every `k` inner steps moves it towards the fast weights, then resets the
/// fast weights onto it.
#[derive(Debug, Clone)]
pub struct Lookahead {
    pub k: usize,
    pub alpha: f64,
    inner_step: u64,
    slow: Option<Vec<Vec<f64>>>,
}

impl Lookahead {
    pub fn new(k: usize, alpha: f64) -> Result<Self> {
        if k < 1 {
            return Err(Error::InvalidArgument("lookahead k must be >= 1".into()));
        }
        if !(0.0 < alpha && alpha <= 1.0) {
            return Err(Error::InvalidArgument(
                "lookahead alpha must be in (0, 1]".into(),
            ));
        }
        Ok(Lookahead {
            k,
            alpha,
            inner_step: 0,
            slow: None,
        })
    }

    fn trainable_copy(blocks: &[TensorRef]) -> Vec<Vec<f64>> {
        blocks
            .iter()
            .filter(|b| b.grad.is_some())
            .map(|b| b.data.to_vec())
            .collect()
    }

    /// Capture the initial fast weights as the slow copy.
    pub fn init(&mut self, blocks: &[TensorRef]) {
        self.slow = Some(Self::trainable_copy(blocks));
        self.inner_step = 0;
    }

    /// Called after each inner optimizer step; interpolates on every k-th.
    pub fn maybe_sync(&mut self, blocks: &mut [TensorRef]) {
        if self.slow.is_none() {
            self.init(blocks);
        }
        self.inner_step += 1;
        if self.inner_step % self.k as u64 != 0 {
            return;
        }
        let slow = self.slow.as_mut().unwrap();
        let mut si = 0;
        for block in blocks.iter_mut().filter(|b| b.grad.is_some()) {
            let s = &mut slow[si];
            for (sv, fv) in s.iter_mut().zip(block.data.iter_mut()) {
                *sv += self.alpha * (*fv - *sv);
                *fv = *sv;
            }
            si += 1;
        }
    }
}

/// Early stopping on a minimized validation metric with parameter snapshots.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    pub patience: usize,
    best: f64,
    best_epoch: usize,
    best_snapshot: Option<Vec<Vec<f64>>>,
    since_best: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        EarlyStopper {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            best_snapshot: None,
            since_best: 0,
        }
    }

    /// Record an epoch's metric (lower is better). Returns true when the
    /// patience budget is exhausted and training should stop.
    pub fn observe(&mut self, epoch: usize, metric: f64, state: Vec<Vec<f64>>) -> bool {
        if metric < self.best {
            self.best = metric;
            self.best_epoch = epoch;
            self.best_snapshot = Some(state);
            self.since_best = 0;
            false
        } else {
            self.since_best += 1;
            self.since_best > self.patience
        }
    }

    pub fn best_metric(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn take_best_snapshot(&mut self) -> Option<Vec<Vec<f64>>> {
        self.best_snapshot.take()
    }
}

/// Which validation quantity drives early stopping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StopMetric {
    #[default]
    Loss,
    Accuracy,
}

/// Optimizer and schedule settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lookahead: bool,
    pub lookahead_k: usize,
    pub lookahead_alpha: f64,
    pub stop_metric: StopMetric,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lr: 1e-3,
            batch_size: 64,
            max_epochs: 200,
            patience: 20,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lookahead: true,
            lookahead_k: 5,
            lookahead_alpha: 0.5,
            stop_metric: StopMetric::Loss,
        }
    }
}

/// One epoch of the training history.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_task: f64,
    pub train_entropy: f64,
    pub train_spec: f64,
    pub train_total: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_metric: f64,
}

fn argmax_row(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Validation task loss and accuracy, evaluated in chunks.
fn evaluate<M: Model + ?Sized>(model: &M, data: &Dataset, rows: &[usize]) -> Result<(f64, f64)> {
    let chunk = 4096;
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for rows in rows.chunks(chunk) {
        let (ids, x, y) = data.batch(rows);
        let pred = model.predict(&ids, &x)?;
        loss_sum += model.task_loss(&pred, &y)? * rows.len() as f64;
        for (r, &label) in y.iter().enumerate() {
            if argmax_row(pred.row(r)) == label {
                correct += 1;
            }
        }
    }
    let n = rows.len() as f64;
    Ok((loss_sum / n, correct as f64 / n))
}

/// Seeded mini-batch training with Nadam (+ optional Lookahead) and early
/// stopping. On return the model holds the best-validation snapshot.
pub fn train_loop<M: Model + ?Sized>(
    model: &mut M,
    data: &Dataset,
    cfg: &OptimConfig,
    rng: &SeededRng,
) -> Result<TrainHistory> {
    if cfg.batch_size < 1 {
        return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
    }
    let train_rows = data.indices_of(Split::Train);
    let val_rows = data.indices_of(Split::Val);
    if train_rows.is_empty() {
        return Err(Error::InvalidConfig("empty training split".into()));
    }
    if val_rows.is_empty() {
        return Err(Error::InvalidConfig("empty validation split".into()));
    }

    let mut shuffle_rng = rng.stream("shuffle");
    let mut dropout_rng = rng.stream("dropout");
    let mut nadam = Nadam::new(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
    let mut lookahead = if cfg.lookahead {
        let mut la = Lookahead::new(cfg.lookahead_k, cfg.lookahead_alpha)?;
        la.init(&model.tensors());
        Some(la)
    } else {
        None
    };
    let mut stopper = EarlyStopper::new(cfg.patience);
    let mut history = TrainHistory::default();
    let mut order = train_rows.clone();

    for epoch in 0..cfg.max_epochs {
        shuffle_rng.shuffle(&mut order);
        let mut task = 0.0;
        let mut entropy = 0.0;
        let mut spec = 0.0;
        let mut total = 0.0;
        // last incomplete batch is kept
        for batch_rows in order.chunks(cfg.batch_size) {
            let (ids, x, y) = data.batch(batch_rows);
            let bundle = model.train_batch(&ids, &x, &y, &mut dropout_rng)?;
            let w = batch_rows.len() as f64;
            task += bundle.task_loss * w;
            entropy += bundle.entropy_loss * w;
            spec += bundle.spec_loss_used * w;
            total += bundle.total * w;
            let mut blocks = model.tensors();
            nadam.step(&mut blocks)?;
            if let Some(la) = lookahead.as_mut() {
                la.maybe_sync(&mut blocks);
            }
        }
        let n = order.len() as f64;
        let (val_loss, val_accuracy) = evaluate(model, data, &val_rows)?;
        history.epochs.push(EpochRecord {
            epoch,
            train_task: task / n,
            train_entropy: entropy / n,
            train_spec: spec / n,
            train_total: total / n,
            val_loss,
            val_accuracy,
        });
        let metric = match cfg.stop_metric {
            StopMetric::Loss => val_loss,
            StopMetric::Accuracy => -val_accuracy,
        };
        if stopper.observe(epoch, metric, snapshot(model)) {
            break;
        }
    }
    history.best_epoch = stopper.best_epoch();
    history.best_val_metric = stopper.best_metric();
    if let Some(best) = stopper.take_best_snapshot() {
        restore(model, &best);
    }
    Ok(history)
}
