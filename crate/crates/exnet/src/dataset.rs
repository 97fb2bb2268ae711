//! Row-indexed datasets: feature matrix, gating category column, binary
//! labels and split tags, with optional ground-truth cluster and true
//! event-probability columns for synthetic data.
//!
//! CSV schema: `investor_id,f0..f{p-1},label,true_prob,cluster,split`.
//! The `true_prob` and `cluster` columns are optional so externally prepared
//! feature matrices can be trained on with the same loader.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Split> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Dataset(format!("unknown split tag '{other}'"))),
        }
    }

    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

/// In-memory dataset. Entity ids are dense `0..num_entities`, assigned by
/// first appearance in the training split (then validation, then test), and
/// `entity_names` maps them back to the raw category values.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Mat,
    pub entity_ids: Vec<usize>,
    pub entity_names: Vec<String>,
    pub labels: Vec<usize>,
    pub split: Vec<Split>,
    pub true_prob: Option<Vec<f64>>,
    pub cluster: Option<Vec<String>>,
}

impl Dataset {
    pub fn num_rows(&self) -> usize {
        self.features.rows()
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    pub fn num_entities(&self) -> usize {
        self.entity_names.len()
    }

    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        (0..self.num_rows()).filter(|&r| self.split[r] == split).collect()
    }

    /// Gather a batch view for the given row indices.
    pub fn batch(&self, rows: &[usize]) -> (Vec<usize>, Mat, Vec<usize>) {
        let ids = rows.iter().map(|&r| self.entity_ids[r]).collect();
        let x = self.features.gather_rows(rows);
        let y = rows.iter().map(|&r| self.labels[r]).collect();
        (ids, x, y)
    }

    /// Ground-truth cluster per dense entity id, when the column is present.
    ///
    /// Every row of an entity must agree on the cluster.
    pub fn entity_clusters(&self) -> Option<Vec<String>> {
        let cluster = self.cluster.as_ref()?;
        let mut per_entity: Vec<Option<&str>> = vec![None; self.num_entities()];
        for r in 0..self.num_rows() {
            let e = self.entity_ids[r];
            match per_entity[e] {
                None => per_entity[e] = Some(&cluster[r]),
                Some(c) => debug_assert_eq!(c, cluster[r]),
            }
        }
        Some(
            per_entity
                .into_iter()
                .map(|c| c.unwrap_or("").to_string())
                .collect(),
        )
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let p = self.num_features();
        let mut header = vec!["investor_id".to_string()];
        for i in 0..p {
            header.push(format!("f{i}"));
        }
        header.push("label".into());
        if self.true_prob.is_some() {
            header.push("true_prob".into());
        }
        if self.cluster.is_some() {
            header.push("cluster".into());
        }
        header.push("split".into());
        w.write_record(&header)?;
        for r in 0..self.num_rows() {
            let mut rec = vec![self.entity_names[self.entity_ids[r]].clone()];
            for c in 0..p {
                rec.push(format!("{}", self.features.get(r, c)));
            }
            rec.push(format!("{}", self.labels[r]));
            if let Some(tp) = &self.true_prob {
                rec.push(format!("{}", tp[r]));
            }
            if let Some(cl) = &self.cluster {
                rec.push(cl[r].clone());
            }
            rec.push(self.split[r].as_str().to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Dataset> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        let cols: Vec<&str> = header.iter().collect();
        let idx = |name: &str| cols.iter().position(|c| *c == name);
        let id_col = idx("investor_id")
            .ok_or_else(|| Error::Dataset("missing 'investor_id' column".into()))?;
        let label_col =
            idx("label").ok_or_else(|| Error::Dataset("missing 'label' column".into()))?;
        let split_col =
            idx("split").ok_or_else(|| Error::Dataset("missing 'split' column".into()))?;
        let prob_col = idx("true_prob");
        let cluster_col = idx("cluster");
        let mut feature_cols = Vec::new();
        for (i, c) in cols.iter().enumerate() {
            if c.starts_with('f') && c[1..].chars().all(|ch| ch.is_ascii_digit()) && c.len() > 1 {
                feature_cols.push(i);
            }
        }
        if feature_cols.is_empty() {
            return Err(Error::Dataset("no feature columns f0..fN found".into()));
        }

        struct RawRow {
            name: String,
            features: Vec<f64>,
            label: usize,
            split: Split,
            prob: Option<f64>,
            cluster: Option<String>,
        }
        let mut rows: Vec<RawRow> = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse_f64 = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| Error::Dataset("short record".into()))?
                    .parse()
                    .map_err(|e| Error::Dataset(format!("bad number: {e}")))
            };
            let features: Vec<f64> = feature_cols
                .iter()
                .map(|&i| parse_f64(i))
                .collect::<Result<_>>()?;
            let label: usize = rec
                .get(label_col)
                .unwrap()
                .parse()
                .map_err(|e| Error::Dataset(format!("bad label: {e}")))?;
            rows.push(RawRow {
                name: rec.get(id_col).unwrap().to_string(),
                features,
                label,
                split: Split::parse(rec.get(split_col).unwrap())?,
                prob: prob_col.map(parse_f64).transpose()?,
                cluster: cluster_col.map(|i| rec.get(i).unwrap().to_string()),
            });
        }
        if rows.is_empty() {
            return Err(Error::Dataset("empty dataset".into()));
        }

        // dense entity ids by first appearance, training split first
        let mut map: HashMap<String, usize> = HashMap::new();
        let mut names: Vec<String> = Vec::new();
        for split in Split::ALL {
            for row in rows.iter().filter(|r| r.split == split) {
                if !map.contains_key(&row.name) {
                    map.insert(row.name.clone(), names.len());
                    names.push(row.name.clone());
                }
            }
        }

        let p = feature_cols.len();
        let mut features = Mat::zeros(rows.len(), p);
        let mut entity_ids = Vec::with_capacity(rows.len());
        let mut labels = Vec::with_capacity(rows.len());
        let mut split = Vec::with_capacity(rows.len());
        let mut probs = Vec::new();
        let mut clusters = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            features.row_mut(i).copy_from_slice(&row.features);
            entity_ids.push(map[&row.name]);
            labels.push(row.label);
            split.push(row.split);
            if let Some(pr) = row.prob {
                probs.push(pr);
            }
            if let Some(cl) = &row.cluster {
                clusters.push(cl.clone());
            }
        }
        Ok(Dataset {
            features,
            entity_ids,
            entity_names: names,
            labels,
            split,
            true_prob: if probs.len() == rows.len() {
                Some(probs)
            } else {
                None
            },
            cluster: if clusters.len() == rows.len() {
                Some(clusters)
            } else {
                None
            },
        })
    }
}
