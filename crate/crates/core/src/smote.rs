//! Synthetic minority oversampling.
//!
//! Each synthetic row is `x + λ·(x_nn − x)` where `x` is a minority row,
//! `x_nn` one of its `k` nearest minority neighbours (Euclidean), and
//! `λ ~ U[0, 1)`. Parents are visited in row order, cycling as many passes
//! as needed; one random neighbour and one `λ` are drawn per synthetic row.

use std::cmp::Ordering;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{FlowDataset, ATTACK, BENIGN};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seeded;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmoteConfig {
    pub k: usize,
    pub seed: u64,
    /// Minority/majority ratio to reach.
    pub target_ratio: f64,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        Self {
            k: 5,
            seed: 42,
            target_ratio: 1.0,
        }
    }
}

impl SmoteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("smote.k must be at least 1"));
        }
        if !(self.target_ratio > 0.0 && self.target_ratio <= 1.0) {
            return Err(Error::config(format!(
                "smote.target_ratio must lie in (0, 1], got {}",
                self.target_ratio
            )));
        }
        Ok(())
    }
}

/// One synthesized row and how it was made. Indices refer to rows of the
/// dataset passed to [`oversample`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub vector: Vec<f64>,
    pub parent_index: usize,
    pub neighbor_index: usize,
    pub lambda_interp: f64,
}

/// `k` nearest neighbours of each query row, nearest first.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborTable {
    pub k: usize,
    pub neighbors: Vec<Vec<usize>>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn effective_k(rows: usize, k: usize) -> Result<usize> {
    if rows < 2 {
        return Err(Error::data("SMOTE requires ≥2 minority samples"));
    }
    if k > rows - 1 {
        log::warn!(
            "SMOTE k={k} exceeds minority count − 1; clamping to {}",
            rows - 1
        );
        return Ok(rows - 1);
    }
    Ok(k)
}

fn nearest(points: &Matrix, query: usize, k: usize) -> Vec<usize> {
    let q = points.row(query);
    let mut cand: Vec<(f64, usize)> = (0..points.rows())
        .filter(|&j| j != query)
        .map(|j| (sq_dist(q, points.row(j)), j))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
        a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
    };
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, cmp);
        cand.truncate(k);
    }
    cand.sort_unstable_by(cmp);
    cand.into_iter().map(|(_, j)| j).collect()
}

/// For each row of `x_min`, its `k` nearest other rows; ties go to the lower
/// index. `k` is clamped to `rows − 1`.
pub fn minority_neighbors(x_min: &Matrix, k: usize) -> Result<NeighborTable> {
    let k = effective_k(x_min.rows(), k)?;
    let neighbors = (0..x_min.rows())
        .into_par_iter()
        .map(|i| nearest(x_min, i, k))
        .collect();
    Ok(NeighborTable { k, neighbors })
}

/// `x_i + λ·(x_zi − x_i)`.
pub fn synthesize(x_i: &[f64], x_zi: &[f64], lambda_interp: f64) -> Result<Vec<f64>> {
    if x_i.len() != x_zi.len() {
        return Err(Error::shape(format!(
            "cannot interpolate between {}- and {}-dimensional rows",
            x_i.len(),
            x_zi.len()
        )));
    }
    if !(0.0..1.0).contains(&lambda_interp) {
        return Err(Error::config(format!(
            "interpolation factor must lie in [0, 1), got {lambda_interp}"
        )));
    }
    Ok(x_i
        .iter()
        .zip(x_zi)
        .map(|(&a, &b)| a + lambda_interp * (b - a))
        .collect())
}

#[derive(Debug, Clone)]
pub struct SmoteOutcome {
    /// Original rows first and unchanged, then the synthetic rows.
    pub dataset: FlowDataset,
    pub synthetic: Vec<SyntheticSample>,
    /// Neighbour count actually used after clamping.
    pub k_used: usize,
}

/// Raises the minority class to `round(target_ratio × majority)` rows.
pub fn oversample(ds: &FlowDataset, cfg: &SmoteConfig) -> Result<SmoteOutcome> {
    cfg.validate()?;
    let (benign, attack) = ds.class_counts();
    if benign == 0 || attack == 0 {
        return Err(Error::data(format!(
            "SMOTE needs both classes present (benign {benign}, attack {attack})"
        )));
    }
    let (minority_label, n_min, n_maj) = if attack <= benign {
        (ATTACK, attack, benign)
    } else {
        (BENIGN, benign, attack)
    };
    let target = (cfg.target_ratio * n_maj as f64).round() as usize;
    if n_min >= target {
        return Ok(SmoteOutcome {
            dataset: ds.clone(),
            synthetic: Vec::new(),
            k_used: 0,
        });
    }
    let quota = target - n_min;

    let min_rows: Vec<usize> = (0..ds.n_rows())
        .filter(|&i| ds.labels()[i] == minority_label)
        .collect();
    let x_min = ds.features().select_rows(&min_rows);
    let k = effective_k(n_min, cfg.k)?;

    // Only the first `quota` minority rows are ever parents.
    let n_parents = quota.min(n_min);
    let table: Vec<Vec<usize>> = (0..n_parents)
        .into_par_iter()
        .map(|i| nearest(&x_min, i, k))
        .collect();

    let mut rng = seeded::rng(cfg.seed, 0);
    let mut synthetic = Vec::with_capacity(quota);
    for s in 0..quota {
        let p = s % n_min;
        let nb = table[p][seeded::index_below(&mut rng, k)];
        let lambda = seeded::unit(&mut rng);
        let vector = synthesize(x_min.row(p), x_min.row(nb), lambda)?;
        synthetic.push(SyntheticSample {
            vector,
            parent_index: min_rows[p],
            neighbor_index: min_rows[nb],
            lambda_interp: lambda,
        });
    }

    let (names, mut features, mut labels) = ds.clone().into_parts();
    for s in &synthetic {
        features.push_row(&s.vector)?;
        labels.push(minority_label);
    }
    Ok(SmoteOutcome {
        dataset: FlowDataset::new(names, features, labels)?,
        synthetic,
        k_used: k,
    })
}

/// `parent_index,neighbor_index,lambda_interp` per synthetic row.
pub fn write_audit_csv(samples: &[SyntheticSample], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f =
        std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let mut body = String::from("parent_index,neighbor_index,lambda_interp\n");
    for s in samples {
        body.push_str(&format!(
            "{},{},{:?}\n",
            s.parent_index, s.neighbor_index, s.lambda_interp
        ));
    }
    f.write_all(body.as_bytes())
        .map_err(|e| Error::io(path, e))?;
    f.flush().map_err(|e| Error::io(path, e))
}
