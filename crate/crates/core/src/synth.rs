//! Seeded generator for flow-shaped CSVs with two Gaussian classes.
//!
//! Both classes share an isotropic noise of scale `noise_scale`; the class
//! means are `separation × noise_scale` apart along the all-ones diagonal.
//! Each feature column is then stretched and shifted by its own fixed factor
//! so the raw file has the wildly different magnitudes of real flow records.

use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::LabelSpec;
use crate::error::{Error, Result};
use crate::seeded;

const FLOW_NAMES: [&str; 16] = [
    "Flow Duration",
    "Total Fwd Packets",
    "Total Backward Packets",
    "Total Length of Fwd Packets",
    "Total Length of Bwd Packets",
    "Fwd Packet Length Max",
    "Bwd Packet Length Mean",
    "Flow Bytes/s",
    "Flow Packets/s",
    "Flow IAT Mean",
    "Fwd IAT Total",
    "Bwd IAT Std",
    "Packet Length Variance",
    "Average Packet Size",
    "Init_Win_bytes_forward",
    "Idle Mean",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub n_majority: usize,
    pub n_minority: usize,
    pub n_features: usize,
    /// Distance between the class means in units of `noise_scale`.
    pub separation: f64,
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_majority: 1000,
            n_minority: 50,
            n_features: 8,
            separation: 6.0,
            noise_scale: 1.0,
            seed: 42,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_minority < 2 {
            return Err(Error::config("synth.n_minority must be at least 2"));
        }
        if self.n_majority == 0 || self.n_features == 0 {
            return Err(Error::config(
                "synth.n_majority and synth.n_features must be positive",
            ));
        }
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return Err(Error::config("synth.separation must be positive"));
        }
        if !(self.noise_scale > 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::config("synth.noise_scale must be positive"));
        }
        Ok(())
    }

    pub fn feature_names(&self) -> Vec<String> {
        (0..self.n_features)
            .map(|j| match FLOW_NAMES.get(j) {
                Some(n) => (*n).to_string(),
                None => format!("Feature {j}"),
            })
            .collect()
    }
}

/// Raw column `j` is `offset_j + scale_j · v`.
fn column_scale(j: usize) -> (f64, f64) {
    let scale = 10f64.powi((j % 5) as i32) * (1.0 + 0.25 * (j % 3) as f64);
    (3.0 * scale, scale)
}

/// The CSV text: an ID and a timestamp column (non-numeric), the feature
/// columns, then the label column. Majority rows are benign.
pub fn generate_csv(spec: &SyntheticSpec, label: &LabelSpec) -> Result<String> {
    spec.validate()?;
    let d = spec.n_features;
    let offset = spec.separation * spec.noise_scale / (d as f64).sqrt() / 2.0;
    let noise = Normal::new(0.0, spec.noise_scale).map_err(|e| Error::config(e.to_string()))?;
    let mut rng = seeded::rng(spec.seed, 0);

    let n = spec.n_majority + spec.n_minority;
    let mut rows: Vec<(Vec<f64>, bool)> = Vec::with_capacity(n);
    for i in 0..n {
        let attack = i >= spec.n_majority;
        let centre = if attack { offset } else { -offset };
        let v = (0..d)
            .map(|j| {
                let (shift, scale) = column_scale(j);
                shift + scale * (centre + noise.sample(&mut rng))
            })
            .collect();
        rows.push((v, attack));
    }
    let mut order_rng = seeded::rng(spec.seed, 1);
    seeded::shuffle(&mut rows, &mut order_rng);

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["Flow ID".to_string(), "Timestamp".to_string()];
    header.extend(spec.feature_names());
    header.push(label.column.clone());
    w.write_record(&header)?;
    for (i, (v, attack)) in rows.iter().enumerate() {
        let mut rec = vec![
            format!("10.0.{}.{}-192.168.1.1-{}-80-6", i / 250, i % 250, 1024 + i),
            format!("7/7/2017 3:{:02}:{:02}", (i / 60) % 60, i % 60),
        ];
        rec.extend(v.iter().map(|x| x.to_string()));
        rec.push(
            if *attack {
                &label.attack_token
            } else {
                &label.benign_token
            }
            .clone(),
        );
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::data(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::data(e.to_string()))
}

pub fn write_synthetic_csv(
    spec: &SyntheticSpec,
    label: &LabelSpec,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let text = generate_csv(spec, label)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{apply_scaler, fit_scaler, load_flow_csv};
    use crate::nn::{ArchConfig, AttentionPlacement, ModelParams};
    use crate::train::{classify, predict_proba, train_phase1, TrainConfig};

    #[test]
    fn counts_and_labels() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_synthetic_csv(&SyntheticSpec::default(), &LabelSpec::default(), &p).unwrap();
        let loaded = load_flow_csv(&p, &LabelSpec::default()).unwrap();
        assert_eq!(loaded.dataset.n_rows(), 1050);
        assert_eq!(loaded.dataset.class_counts(), (1000, 50));
        assert_eq!(loaded.dataset.n_features(), 8);
        assert_eq!(loaded.dropped_columns, vec!["Flow ID", "Timestamp"]);
    }

    #[test]
    fn same_seed_same_bytes() {
        let s = SyntheticSpec::default();
        let l = LabelSpec::default();
        assert_eq!(generate_csv(&s, &l).unwrap(), generate_csv(&s, &l).unwrap());
        let other = SyntheticSpec {
            seed: 43,
            ..s.clone()
        };
        assert_ne!(
            generate_csv(&s, &l).unwrap(),
            generate_csv(&other, &l).unwrap()
        );
    }

    #[test]
    fn invalid_specs() {
        assert!(SyntheticSpec {
            n_minority: 1,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(SyntheticSpec {
            separation: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert_eq!(
            SyntheticSpec {
                n_features: 20,
                ..Default::default()
            }
            .feature_names()[19],
            "Feature 19"
        );
    }

    #[test]
    fn linear_probe_separates_the_classes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_synthetic_csv(&SyntheticSpec::default(), &LabelSpec::default(), &p).unwrap();
        let ds = load_flow_csv(&p, &LabelSpec::default()).unwrap().dataset;
        let ds = apply_scaler(&ds, &fit_scaler(&ds).unwrap()).unwrap();
        let arch = ArchConfig {
            input_width: 1,
            block_widths: vec![],
            attention: AttentionPlacement::None,
            init_seed: 1,
            ..Default::default()
        };
        let mut m = ModelParams::init(8, &arch).unwrap();
        let cfg = TrainConfig {
            epochs_phase1: 60,
            batch_size: 64,
            eta: 0.1,
            ..Default::default()
        };
        train_phase1(&mut m, &ds, &cfg).unwrap();
        let pred = classify(&predict_proba(&m, ds.features()).unwrap(), 0.5);
        let acc = pred.iter().zip(ds.labels()).filter(|(a, b)| a == b).count() as f64
            / ds.n_rows() as f64;
        assert!(acc >= 0.99, "linear probe accuracy {acc}");
    }
}
