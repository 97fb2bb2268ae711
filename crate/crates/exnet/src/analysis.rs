//! Evaluation and interpretation: accuracy, average precision, cluster
//! recovery scoring, permutation feature importance and report exports.

use std::path::Path;

use serde::Serialize;

use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::model::exnet::AttributionReport;
use crate::model::Model;
use crate::optim::TrainHistory;
use crate::rng::SeededRng;
use crate::Mat;

/// Argmax with ties resolved to the lower index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows whose argmax prediction equals the label.
pub fn accuracy(pred: &Mat, labels: &[usize]) -> Result<f64> {
    if pred.rows() != labels.len() {
        return Err(Error::DimMismatch {
            left: pred.rows().to_string(),
            right: labels.len().to_string(),
        });
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    let correct = labels
        .iter()
        .enumerate()
        .filter(|&(r, &y)| argmax(pred.row(r)) == y)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Average precision of a score ranking against binary relevance, using the
/// step-wise (non-interpolated) sum: AP = sum_k precision@k * rel_k / P.
///
/// Score ties rank the lower original index first, deterministically.
pub fn average_precision(scores: &[f64], relevant: &[bool]) -> Result<f64> {
    if scores.len() != relevant.len() {
        return Err(Error::DimMismatch {
            left: scores.len().to_string(),
            right: relevant.len().to_string(),
        });
    }
    if scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    let positives = relevant.iter().filter(|&&r| r).count();
    if positives == 0 {
        return Err(Error::InvalidArgument(
            "average precision needs at least one positive".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut hits = 0usize;
    let mut ap = 0.0;
    for (k, &idx) in order.iter().enumerate() {
        if relevant[idx] {
            hits += 1;
            ap += hits as f64 / (k + 1) as f64;
        }
    }
    Ok(ap / positives as f64)
}

/// Mean one-vs-rest average precision over the classes present in `labels`.
pub fn macro_ap(pred: &Mat, labels: &[usize]) -> Result<f64> {
    if pred.rows() != labels.len() {
        return Err(Error::DimMismatch {
            left: pred.rows().to_string(),
            right: labels.len().to_string(),
        });
    }
    let classes = pred.cols();
    let mut sum = 0.0;
    let mut used = 0usize;
    for c in 0..classes {
        let relevant: Vec<bool> = labels.iter().map(|&y| y == c).collect();
        if !relevant.iter().any(|&r| r) {
            continue;
        }
        let scores: Vec<f64> = (0..pred.rows()).map(|r| pred.get(r, c)).collect();
        sum += average_precision(&scores, &relevant)?;
        used += 1;
    }
    if used == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(sum / used as f64)
}

fn comb2(n: usize) -> f64 {
    (n as f64) * (n as f64 - 1.0) / 2.0
}

/// Adjusted Rand index between two partitions of the same items, via the
/// pair-counting contingency form. Degenerate denominators (both partitions
/// trivial) score 1.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch {
            left: a.len().to_string(),
            right: b.len().to_string(),
        });
    }
    if a.is_empty() {
        return Err(Error::EmptyInput);
    }
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut table = vec![vec![0usize; kb]; ka];
    for (&x, &y) in a.iter().zip(b.iter()) {
        table[x][y] += 1;
    }
    let row_sums: Vec<usize> = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<usize> = (0..kb).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let index: f64 = table.iter().flatten().map(|&n| comb2(n)).sum();
    let sum_a: f64 = row_sums.iter().map(|&n| comb2(n)).sum();
    let sum_b: f64 = col_sums.iter().map(|&n| comb2(n)).sum();
    let total = comb2(a.len());
    let expected = sum_a * sum_b / total;
    let max_index = 0.5 * (sum_a + sum_b);
    if (max_index - expected).abs() < 1e-12 {
        return Ok(1.0);
    }
    Ok((index - expected) / (max_index - expected))
}

/// How well gate attributions recover a ground-truth entity partition.
#[derive(Debug, Clone, Serialize)]
pub struct ClusterRecovery {
    /// ARI between the dominant-expert partition and the true clusters.
    pub ari: f64,
    /// Fraction of entities whose dominant attribution exceeds 0.99.
    pub strong_fraction: f64,
    /// Mean attribution mass on the dominant expert.
    pub mean_dominant: f64,
    /// Number of experts that are dominant for at least one entity.
    pub experts_used: usize,
}

pub fn cluster_recovery(report: &AttributionReport, truth: &[String]) -> Result<ClusterRecovery> {
    let n = report.attributions.rows();
    if truth.len() != n {
        return Err(Error::DimMismatch {
            left: truth.len().to_string(),
            right: n.to_string(),
        });
    }
    let dominant = report.dominant_experts();
    let strengths = report.dominant_strengths();
    // map cluster names to dense labels by first appearance
    let mut names: Vec<&String> = Vec::new();
    let truth_ids: Vec<usize> = truth
        .iter()
        .map(|t| {
            if let Some(i) = names.iter().position(|n| *n == t) {
                i
            } else {
                names.push(t);
                names.len() - 1
            }
        })
        .collect();
    let ari = adjusted_rand_index(&dominant, &truth_ids)?;
    let strong = strengths.iter().filter(|&&s| s > 0.99).count();
    let mut used: Vec<usize> = dominant.clone();
    used.sort_unstable();
    used.dedup();
    Ok(ClusterRecovery {
        ari,
        strong_fraction: strong as f64 / n as f64,
        mean_dominant: strengths.iter().sum::<f64>() / n as f64,
        experts_used: used.len(),
    })
}

/// Chunked argmax predictions over the given rows.
fn predict_rows(model: &dyn Model, data: &Dataset, rows: &[usize], features: &Mat) -> Result<Mat> {
    let mut out = Mat::zeros(rows.len(), 0);
    let mut first = true;
    let mut offset = 0;
    for chunk in rows.chunks(4096) {
        let ids: Vec<usize> = chunk.iter().map(|&r| data.entity_ids[r]).collect();
        let x = features.gather_rows(chunk);
        let pred = model.predict(&ids, &x)?;
        if first {
            out = Mat::zeros(rows.len(), pred.cols());
            first = false;
        }
        for (i, r) in (0..chunk.len()).enumerate() {
            out.row_mut(offset + r).copy_from_slice(pred.row(i));
        }
        offset += chunk.len();
    }
    Ok(out)
}

/// Accuracy and macro average precision of a model on one split.
#[derive(Debug, Clone, Serialize)]
pub struct SplitMetrics {
    pub split: String,
    pub n: usize,
    pub accuracy: f64,
    pub macro_ap: f64,
}

pub fn evaluate_split(model: &dyn Model, data: &Dataset, split: Split) -> Result<SplitMetrics> {
    let rows = data.indices_of(split);
    if rows.is_empty() {
        return Err(Error::Dataset(format!("empty split '{}'", split.as_str())));
    }
    let pred = predict_rows(model, data, &rows, &data.features)?;
    let labels: Vec<usize> = rows.iter().map(|&r| data.labels[r]).collect();
    Ok(SplitMetrics {
        split: split.as_str().to_string(),
        n: rows.len(),
        accuracy: accuracy(&pred, &labels)?,
        macro_ap: macro_ap(&pred, &labels)?,
    })
}

/// Per-cluster accuracy and macro average precision on one split.
#[derive(Debug, Clone, Serialize)]
pub struct ClusterMetrics {
    pub cluster: String,
    pub n: usize,
    pub accuracy: f64,
    pub macro_ap: f64,
}

pub fn per_cluster_metrics(
    model: &dyn Model,
    data: &Dataset,
    split: Split,
) -> Result<Vec<ClusterMetrics>> {
    let cluster = data
        .cluster
        .as_ref()
        .ok_or_else(|| Error::Dataset("dataset has no cluster column".into()))?;
    let rows = data.indices_of(split);
    let mut names: Vec<&String> = Vec::new();
    for &r in &rows {
        if !names.contains(&&cluster[r]) {
            names.push(&cluster[r]);
        }
    }
    let mut out = Vec::new();
    for name in names {
        let sub: Vec<usize> = rows
            .iter()
            .copied()
            .filter(|&r| &cluster[r] == name)
            .collect();
        let pred = predict_rows(model, data, &sub, &data.features)?;
        let labels: Vec<usize> = sub.iter().map(|&r| data.labels[r]).collect();
        out.push(ClusterMetrics {
            cluster: name.clone(),
            n: sub.len(),
            accuracy: accuracy(&pred, &labels)?,
            macro_ap: macro_ap(&pred, &labels)?,
        });
    }
    Ok(out)
}

/// A named group of feature columns shuffled jointly.
#[derive(Debug, Clone, Serialize)]
pub struct FeatureGroup {
    pub name: String,
    pub cols: Vec<usize>,
}

/// One feature (or feature group) importance estimate: the drop in accuracy
/// when its columns are jointly shuffled across the evaluation rows.
#[derive(Debug, Clone, Serialize)]
pub struct ImportanceRecord {
    pub name: String,
    pub cols: Vec<usize>,
    pub baseline_accuracy: f64,
    pub mean_drop: f64,
    pub std_drop: f64,
    pub repeats: usize,
}

/// Permutation feature importance on one split.
///
/// Within a repeat every group is scored under the same row permutation so
/// group scores are comparable; repeats use independent permutations derived
/// from `seed`.
pub fn permutation_importance(
    model: &dyn Model,
    data: &Dataset,
    split: Split,
    groups: &[FeatureGroup],
    repeats: usize,
    seed: u64,
) -> Result<Vec<ImportanceRecord>> {
    if repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be >= 1".into()));
    }
    for g in groups {
        if g.cols.is_empty() {
            return Err(Error::InvalidArgument(format!("empty group '{}'", g.name)));
        }
        for &c in &g.cols {
            if c >= data.num_features() {
                return Err(Error::InvalidArgument(format!(
                    "group '{}' column {} out of range (p = {})",
                    g.name,
                    c,
                    data.num_features()
                )));
            }
        }
    }
    let rows = data.indices_of(split);
    if rows.is_empty() {
        return Err(Error::Dataset(format!("empty split '{}'", split.as_str())));
    }
    let labels: Vec<usize> = rows.iter().map(|&r| data.labels[r]).collect();
    let baseline_pred = predict_rows(model, data, &rows, &data.features)?;
    let baseline = accuracy(&baseline_pred, &labels)?;

    let root = SeededRng::new(seed);
    let mut drops: Vec<Vec<f64>> = vec![Vec::with_capacity(repeats); groups.len()];
    for rep in 0..repeats {
        let mut rng = root.stream(&format!("repeat{rep}"));
        let mut perm: Vec<usize> = (0..rows.len()).collect();
        rng.shuffle(&mut perm);
        for (gi, group) in groups.iter().enumerate() {
            let mut features = data.features.clone();
            for (i, &r) in rows.iter().enumerate() {
                let src = rows[perm[i]];
                for &c in &group.cols {
                    features.set(r, c, data.features.get(src, c));
                }
            }
            let pred = predict_rows(model, data, &rows, &features)?;
            drops[gi].push(baseline - accuracy(&pred, &labels)?);
        }
    }
    Ok(groups
        .iter()
        .enumerate()
        .map(|(gi, g)| {
            let d = &drops[gi];
            let mean = d.iter().sum::<f64>() / d.len() as f64;
            let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d.len() as f64;
            ImportanceRecord {
                name: g.name.clone(),
                cols: g.cols.clone(),
                baseline_accuracy: baseline,
                mean_drop: mean,
                std_drop: var.sqrt(),
                repeats,
            }
        })
        .collect())
}

/// Write per-entity attribution rows: `investor_id,cluster?,dominant,strength,a0..a{n-1}`.
pub fn write_attributions_csv(
    path: &Path,
    report: &AttributionReport,
    entity_names: &[String],
    clusters: Option<&[String]>,
) -> Result<()> {
    let n = report.attributions.cols();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["investor_id".to_string()];
    if clusters.is_some() {
        header.push("cluster".into());
    }
    header.push("dominant_expert".into());
    header.push("dominant_strength".into());
    for i in 0..n {
        header.push(format!("a{i}"));
    }
    w.write_record(&header)?;
    let dominant = report.dominant_experts();
    let strengths = report.dominant_strengths();
    for e in 0..report.attributions.rows() {
        let mut rec = vec![entity_names[e].clone()];
        if let Some(cl) = clusters {
            rec.push(cl[e].clone());
        }
        rec.push(format!("{}", dominant[e]));
        rec.push(format!("{}", strengths[e]));
        for i in 0..n {
            rec.push(format!("{}", report.attributions.get(e, i)));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Write per-entity embedding rows: `investor_id,e0..e{d-1}`.
pub fn write_embeddings_csv(
    path: &Path,
    report: &AttributionReport,
    entity_names: &[String],
) -> Result<()> {
    let d = report.embeddings.cols();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["investor_id".to_string()];
    for i in 0..d {
        header.push(format!("e{i}"));
    }
    w.write_record(&header)?;
    for e in 0..report.embeddings.rows() {
        let mut rec = vec![entity_names[e].clone()];
        for i in 0..d {
            rec.push(format!("{}", report.embeddings.get(e, i)));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Write the per-epoch training history.
pub fn write_history_csv(path: &Path, history: &TrainHistory) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "epoch",
        "train_task",
        "train_entropy",
        "train_spec",
        "train_total",
        "val_loss",
        "val_accuracy",
    ])?;
    for e in &history.epochs {
        w.write_record(&[
            e.epoch.to_string(),
            format!("{}", e.train_task),
            format!("{}", e.train_entropy),
            format!("{}", e.train_spec),
            format!("{}", e.train_total),
            format!("{}", e.val_loss),
            format!("{}", e.val_accuracy),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Serialize any metrics value as pretty JSON.
pub fn write_metrics_json<T: Serialize>(path: &Path, metrics: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(metrics)?)?;
    Ok(())
}
