//! Synthetic market generator: clusters of investors with distinct linear
//! decision rules, ground-truth cluster labels and true event probabilities,
//! plus the perfect-model oracle those probabilities admit.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;

use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::math::{pearson_corr, sigmoid};
use crate::rng::SeededRng;
use crate::Mat;

/// One investor cluster: its decision-rule weights and its shares of the
/// samples and of the investor population.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub name: String,
    pub weights: Vec<f64>,
    pub sample_share: f64,
    pub investor_share: f64,
}

/// Generator settings. `alpha` controls the spread of the per-investor bias
/// around the cluster weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub clusters: Vec<ClusterSpec>,
    pub n_samples: usize,
    pub n_investors: usize,
    pub n_features: usize,
    pub alpha: f64,
    /// When true (default) `alpha` is the standard deviation of the investor
    /// bias; when false it is a variance (std = sqrt(alpha)).
    pub alpha_is_std: bool,
    /// When false (default) the investor bias is one scalar added to every
    /// component of the cluster weights; when true it is a per-component
    /// vector draw.
    pub bias_per_component: bool,
    pub split_fractions: [f64; 3],
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            clusters: vec![
                ClusterSpec {
                    name: "high".into(),
                    weights: vec![5.0, 5.0, 0.0, 0.0, -5.0],
                    sample_share: 0.7,
                    investor_share: 0.1,
                },
                ClusterSpec {
                    name: "low".into(),
                    weights: vec![-5.0, 0.0, 5.0, 0.0, 5.0],
                    sample_share: 0.1,
                    investor_share: 0.5,
                },
                ClusterSpec {
                    name: "medium".into(),
                    weights: vec![-5.0, 0.0, 5.0, 5.0, 0.0],
                    sample_share: 0.2,
                    investor_share: 0.4,
                },
            ],
            n_samples: 100_000,
            n_investors: 500,
            n_features: 5,
            alpha: 0.5,
            alpha_is_std: true,
            bias_per_component: false,
            split_fractions: [0.7, 0.2, 0.1],
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clusters.is_empty() {
            return Err(Error::InvalidConfig("no clusters".into()));
        }
        let sample_sum: f64 = self.clusters.iter().map(|c| c.sample_share).sum();
        let investor_sum: f64 = self.clusters.iter().map(|c| c.investor_share).sum();
        if (sample_sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "cluster sample shares sum to {sample_sum}, expected 1"
            )));
        }
        if (investor_sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "cluster investor shares sum to {investor_sum}, expected 1"
            )));
        }
        for c in &self.clusters {
            if c.weights.len() != self.n_features {
                return Err(Error::InvalidConfig(format!(
                    "cluster '{}' has {} weights, expected {}",
                    c.name,
                    c.weights.len(),
                    self.n_features
                )));
            }
        }
        if self.alpha < 0.0 {
            return Err(Error::InvalidConfig("alpha must be >= 0".into()));
        }
        let split_sum: f64 = self.split_fractions.iter().sum();
        if (split_sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "split fractions sum to {split_sum}, expected 1"
            )));
        }
        if self.n_samples == 0 || self.n_investors == 0 || self.n_features == 0 {
            return Err(Error::InvalidConfig("sizes must be positive".into()));
        }
        Ok(())
    }

    fn bias_std(&self) -> f64 {
        if self.alpha_is_std {
            self.alpha
        } else {
            self.alpha.sqrt()
        }
    }
}

/// Sidecar metadata written next to the dataset CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticMeta {
    pub seed: u64,
    pub config: GeneratorConfig,
    /// Per-investor cluster name, indexed by raw investor id.
    pub investor_cluster: Vec<String>,
    /// Per-investor decision weights, indexed by raw investor id.
    pub investor_weights: Vec<Vec<f64>>,
}

impl SyntheticMeta {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<SyntheticMeta> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Partition `n` items into cluster counts by largest-remainder rounding.
pub fn partition_counts(shares: &[f64], n: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = shares.iter().map(|s| (s * n as f64).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut remainders: Vec<(usize, f64)> = shares
        .iter()
        .enumerate()
        .map(|(i, s)| (i, s * n as f64 - counts[i] as f64))
        .collect();
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for k in 0..(n - assigned) {
        counts[remainders[k % shares.len()].0] += 1;
    }
    counts
}

/// Generate a synthetic dataset and its ground-truth metadata.
pub fn generate(config: &GeneratorConfig, seed: u64) -> Result<(Dataset, SyntheticMeta)> {
    config.validate()?;
    let root = SeededRng::new(seed);
    let n_clusters = config.clusters.len();
    let p = config.n_features;

    // investors per cluster, largest-remainder rounding
    let investor_shares: Vec<f64> = config.clusters.iter().map(|c| c.investor_share).collect();
    let counts = partition_counts(&investor_shares, config.n_investors);
    let mut investor_cluster_idx = Vec::with_capacity(config.n_investors);
    let mut cluster_members: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
    for (ci, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            cluster_members[ci].push(investor_cluster_idx.len());
            investor_cluster_idx.push(ci);
        }
    }

    // per-investor decision weights w_a = w_c + b_a
    let mut bias_rng = root.stream("investor_bias");
    let std = config.bias_std();
    let mut investor_weights: Vec<Vec<f64>> = Vec::with_capacity(config.n_investors);
    for &ci in &investor_cluster_idx {
        let base = &config.clusters[ci].weights;
        let w = if config.bias_per_component {
            base.iter()
                .map(|&wc| wc + std * bias_rng.standard_normal())
                .collect()
        } else {
            let b = std * bias_rng.standard_normal();
            base.iter().map(|&wc| wc + b).collect()
        };
        investor_weights.push(w);
    }

    // rows
    let mut row_rng = root.stream("rows");
    let sample_cum: Vec<f64> = config
        .clusters
        .iter()
        .scan(0.0, |acc, c| {
            *acc += c.sample_share;
            Some(*acc)
        })
        .collect();
    let n = config.n_samples;
    let mut features = Mat::zeros(n, p);
    let mut labels = Vec::with_capacity(n);
    let mut true_prob = Vec::with_capacity(n);
    let mut row_investor = Vec::with_capacity(n);
    for r in 0..n {
        let u = row_rng.uniform();
        let ci = sample_cum.iter().position(|&c| u < c).unwrap_or(n_clusters - 1);
        let members = &cluster_members[ci];
        let inv = members[row_rng.below(members.len())];
        let row = features.row_mut(r);
        for v in row.iter_mut() {
            *v = row_rng.standard_normal();
        }
        let z: f64 = features
            .row(r)
            .iter()
            .zip(investor_weights[inv].iter())
            .map(|(x, w)| x * w)
            .sum();
        let prob = sigmoid(z);
        let uu = row_rng.uniform();
        labels.push(usize::from(prob > uu));
        true_prob.push(prob);
        row_investor.push(inv);
    }

    // contiguous split blocks in generation order
    let n_train = (n as f64 * config.split_fractions[0]).round() as usize;
    let n_val = (n as f64 * config.split_fractions[1]).round() as usize;
    let mut split = Vec::with_capacity(n);
    for r in 0..n {
        split.push(if r < n_train {
            Split::Train
        } else if r < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        });
    }

    // dense entity ids by first appearance, training split first (the same
    // rule the CSV loader applies, so in-memory and reloaded datasets agree)
    let mut map: HashMap<usize, usize> = HashMap::new();
    let mut names: Vec<String> = Vec::new();
    let mut raw_of_dense: Vec<usize> = Vec::new();
    for target in Split::ALL {
        for r in 0..n {
            if split[r] == target && !map.contains_key(&row_investor[r]) {
                map.insert(row_investor[r], names.len());
                names.push(row_investor[r].to_string());
                raw_of_dense.push(row_investor[r]);
            }
        }
    }
    let entity_ids: Vec<usize> = row_investor.iter().map(|raw| map[raw]).collect();
    let cluster: Vec<String> = row_investor
        .iter()
        .map(|&raw| config.clusters[investor_cluster_idx[raw]].name.clone())
        .collect();

    let dataset = Dataset {
        features,
        entity_ids,
        entity_names: names,
        labels,
        split,
        true_prob: Some(true_prob),
        cluster: Some(cluster),
    };
    let meta = SyntheticMeta {
        seed,
        config: config.clone(),
        investor_cluster: investor_cluster_idx
            .iter()
            .map(|&ci| config.clusters[ci].name.clone())
            .collect(),
        investor_weights,
    };
    Ok((dataset, meta))
}

/// Accuracy of the oracle predicting `label = 1` iff `true_prob > 0.5`.
#[derive(Debug, Clone, Serialize)]
pub struct PerfectModelReport {
    /// Overall accuracy per split.
    pub accuracy: Vec<(String, f64)>,
    /// Per-cluster accuracy on each split, `(split, cluster, accuracy)`.
    pub per_cluster: Vec<(String, String, f64)>,
}

pub fn perfect_model_metrics(data: &Dataset) -> Result<PerfectModelReport> {
    let probs = data
        .true_prob
        .as_ref()
        .ok_or_else(|| Error::Dataset("dataset has no true_prob column".into()))?;
    let mut accuracy = Vec::new();
    let mut per_cluster = Vec::new();
    for split in Split::ALL {
        let rows = data.indices_of(split);
        if rows.is_empty() {
            continue;
        }
        let correct = rows
            .iter()
            .filter(|&&r| usize::from(probs[r] > 0.5) == data.labels[r])
            .count();
        accuracy.push((split.as_str().to_string(), correct as f64 / rows.len() as f64));
        if let Some(cluster) = &data.cluster {
            let mut names: Vec<&String> = Vec::new();
            for r in &rows {
                if !names.contains(&&cluster[*r]) {
                    names.push(&cluster[*r]);
                }
            }
            for name in names {
                let sub: Vec<usize> = rows.iter().copied().filter(|&r| &cluster[r] == name).collect();
                let c = sub
                    .iter()
                    .filter(|&&r| usize::from(probs[r] > 0.5) == data.labels[r])
                    .count();
                per_cluster.push((
                    split.as_str().to_string(),
                    name.clone(),
                    c as f64 / sub.len() as f64,
                ));
            }
        }
    }
    Ok(PerfectModelReport {
        accuracy,
        per_cluster,
    })
}

/// Pairwise Pearson correlations of the cluster weight vectors.
pub fn cluster_weight_correlations(clusters: &[ClusterSpec]) -> Result<Mat> {
    if clusters.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 clusters".into()));
    }
    let k = clusters.len();
    let mut m = Mat::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let (r, _) = pearson_corr(&clusters[i].weights, &clusters[j].weights)?;
            m.set(i, j, r);
        }
    }
    Ok(m)
}
