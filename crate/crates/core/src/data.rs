//! Flow-CSV ingestion and preprocessing.
//!
//! The loader accepts CICFlowMeter-style exports: a header row, one flow per
//! line, numeric flow statistics mixed with identifier columns (flow ID,
//! addresses, timestamp) and a textual label. Identifier columns are
//! dropped; labels are encoded benign → 0, attack → 1.
//!
//! Preprocessing order is fixed: rows with any NaN are removed, then
//! remaining ±inf cells are replaced by the mean of the finite values in
//! their column. Standard scaling is fitted on training rows only.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seeded;

pub const BENIGN: u8 = 0;
pub const ATTACK: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowDataset {
    feature_names: Vec<String>,
    features: Matrix,
    labels: Vec<u8>,
}

impl FlowDataset {
    pub fn new(feature_names: Vec<String>, features: Matrix, labels: Vec<u8>) -> Result<Self> {
        if feature_names.len() != features.cols() {
            return Err(Error::shape(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                features.cols()
            )));
        }
        if labels.len() != features.rows() {
            return Err(Error::shape(format!(
                "{} labels for {} rows",
                labels.len(),
                features.rows()
            )));
        }
        let mut seen = HashSet::new();
        for n in &feature_names {
            if !seen.insert(n.as_str()) {
                return Err(Error::data(format!("duplicate feature name {n:?}")));
            }
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::data(format!("label {bad} is not 0 or 1")));
        }
        Ok(Self {
            feature_names,
            features,
            labels,
        })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn n_rows(&self) -> usize {
        self.features.rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows() == 0
    }

    /// (benign, attack) row counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let attack = self.labels.iter().filter(|&&l| l == ATTACK).count();
        (self.labels.len() - attack, attack)
    }

    pub fn select_rows(&self, indices: &[usize]) -> FlowDataset {
        FlowDataset {
            feature_names: self.feature_names.clone(),
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn into_parts(self) -> (Vec<String>, Matrix, Vec<u8>) {
        (self.feature_names, self.features, self.labels)
    }

    /// Reorders columns to `names`. Errors list every missing and unexpected column.
    pub fn align_to(&self, names: &[String]) -> Result<FlowDataset> {
        if names == self.feature_names.as_slice() {
            return Ok(self.clone());
        }
        let have: HashSet<&str> = self.feature_names.iter().map(String::as_str).collect();
        let want: HashSet<&str> = names.iter().map(String::as_str).collect();
        let missing: Vec<&str> = names
            .iter()
            .map(String::as_str)
            .filter(|n| !have.contains(n))
            .collect();
        let extra: Vec<&str> = self
            .feature_names
            .iter()
            .map(String::as_str)
            .filter(|n| !want.contains(n))
            .collect();
        if !missing.is_empty() || !extra.is_empty() {
            return Err(Error::data(format!(
                "feature columns differ from model: missing {missing:?}, unexpected {extra:?}"
            )));
        }
        let order: Vec<usize> = names
            .iter()
            .map(|n| self.feature_names.iter().position(|m| m == n).unwrap())
            .collect();
        Ok(FlowDataset {
            feature_names: names.to_vec(),
            features: self.features.select_cols(&order),
            labels: self.labels.clone(),
        })
    }
}

/// How the label column is found and decoded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabelSpec {
    pub column: String,
    pub benign_token: String,
    pub attack_token: String,
}

impl Default for LabelSpec {
    fn default() -> Self {
        Self {
            column: "Label".into(),
            benign_token: "BENIGN".into(),
            attack_token: "DDoS".into(),
        }
    }
}

impl LabelSpec {
    fn encode(&self, raw: &str) -> Option<u8> {
        let t = raw.trim();
        if t.eq_ignore_ascii_case(self.benign_token.trim()) {
            Some(BENIGN)
        } else if t.eq_ignore_ascii_case(self.attack_token.trim()) {
            Some(ATTACK)
        } else {
            None
        }
    }

    pub fn decode(&self, label: u8) -> &str {
        if label == ATTACK {
            &self.attack_token
        } else {
            &self.benign_token
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedFlows {
    pub dataset: FlowDataset,
    /// Columns dropped because their cells are not numeric.
    pub dropped_columns: Vec<String>,
}

/// Feature table without labels, as read for prediction.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    pub feature_names: Vec<String>,
    pub features: Matrix,
    pub dropped_columns: Vec<String>,
}

/// Loads and label-encodes a flow CSV. Unparseable cells in numeric columns
/// become NaN so that [`clean`] removes their rows.
pub fn load_flow_csv(path: impl AsRef<Path>, label: &LabelSpec) -> Result<LoadedFlows> {
    let path = path.as_ref();
    let raw = read_table(path, Some(&label.column), true)?;
    let label_cells = raw.label_cells.expect("label column required");
    let mut labels = Vec::with_capacity(label_cells.len());
    for (i, cell) in label_cells.iter().enumerate() {
        match label.encode(cell) {
            Some(l) => labels.push(l),
            None => {
                return Err(Error::data(format!(
                    "{}: data row {} has label {cell:?}, expected {:?} or {:?}",
                    path.display(),
                    i + 1,
                    label.benign_token,
                    label.attack_token
                )))
            }
        }
    }
    let dataset = FlowDataset::new(raw.table.feature_names, raw.table.features, labels)?;
    Ok(LoadedFlows {
        dataset,
        dropped_columns: raw.table.dropped_columns,
    })
}

/// Loads the numeric feature columns of a flow CSV, ignoring `label_column`
/// if it is present.
pub fn load_feature_csv(path: impl AsRef<Path>, label_column: &str) -> Result<FeatureTable> {
    Ok(read_table(path.as_ref(), Some(label_column), false)?.table)
}

struct RawTable {
    table: FeatureTable,
    label_cells: Option<Vec<String>>,
}

fn parse_cell(cell: &str) -> Option<f64> {
    if cell.is_empty() {
        return Some(f64::NAN);
    }
    // Accepts "Infinity"/"inf"/"NaN" in any case, as CICIDS exports contain them.
    cell.parse::<f64>().ok()
}

fn read_table(path: &Path, label_column: Option<&str>, require_label: bool) -> Result<RawTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(std::io::BufReader::new(file));

    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(Error::data(format!(
            "{}: missing header row",
            path.display()
        )));
    }
    let label_idx = label_column.and_then(|want| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(want.trim()))
    });
    if require_label && label_idx.is_none() {
        return Err(Error::data(format!(
            "{}: label column {:?} not found",
            path.display(),
            label_column.unwrap_or_default()
        )));
    }

    let ncols = headers.len();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); ncols];
    let mut failures = vec![0usize; ncols];
    let mut nonempty = vec![0usize; ncols];
    let mut label_cells = label_idx.map(|_| Vec::new());

    let mut n_rows = 0usize;
    let mut record = csv::StringRecord::new();
    while reader.read_record(&mut record)? {
        n_rows += 1;
        for (c, cell) in record.iter().enumerate() {
            if Some(c) == label_idx {
                if let Some(cells) = label_cells.as_mut() {
                    cells.push(cell.to_string());
                }
                continue;
            }
            if !cell.is_empty() {
                nonempty[c] += 1;
            }
            let v = parse_cell(cell).unwrap_or_else(|| {
                failures[c] += 1;
                f64::NAN
            });
            columns[c].push(v);
        }
    }
    if n_rows == 0 {
        return Err(Error::data(format!("{}: no data rows", path.display())));
    }

    // A column is numeric when most of its non-empty cells parse; stray bad
    // cells in a numeric column surface as NaN instead of dropping the column.
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    for c in 0..ncols {
        if Some(c) == label_idx {
            continue;
        }
        if nonempty[c] > 0 && failures[c] * 2 >= nonempty[c] {
            dropped.push(headers[c].clone());
        } else {
            keep.push(c);
        }
    }
    if !dropped.is_empty() {
        log::info!("dropping non-numeric columns: {dropped:?}");
    }
    if keep.is_empty() {
        return Err(Error::data(format!(
            "{}: no numeric feature columns",
            path.display()
        )));
    }

    let feature_names = dedupe_names(keep.iter().map(|&c| headers[c].clone()));
    let mut data = Vec::with_capacity(n_rows * keep.len());
    for r in 0..n_rows {
        data.extend(keep.iter().map(|&c| columns[c][r]));
    }
    let features = Matrix::from_vec(n_rows, keep.len(), data)?;
    Ok(RawTable {
        table: FeatureTable {
            feature_names,
            features,
            dropped_columns: dropped,
        },
        label_cells,
    })
}

/// Repeated header names get `.1`, `.2`, ... suffixes.
fn dedupe_names(names: impl Iterator<Item = String>) -> Vec<String> {
    let mut seen: HashSet<String> = HashSet::new();
    let mut out = Vec::new();
    for name in names {
        let mut candidate = name.clone();
        let mut k = 1;
        while seen.contains(&candidate) {
            candidate = format!("{name}.{k}");
            k += 1;
        }
        seen.insert(candidate.clone());
        out.push(candidate);
    }
    out
}

/// Drops NaN rows, then replaces ±inf with finite column means.
pub fn clean(ds: &FlowDataset) -> Result<FlowDataset> {
    clean_indexed(ds).map(|(d, _)| d)
}

/// As [`clean`], also returning the original index of each surviving row.
pub fn clean_indexed(ds: &FlowDataset) -> Result<(FlowDataset, Vec<usize>)> {
    let kept: Vec<usize> = ds
        .features
        .iter_rows()
        .enumerate()
        .filter(|(_, r)| !r.iter().any(|v| v.is_nan()))
        .map(|(i, _)| i)
        .collect();
    if kept.is_empty() {
        return Err(Error::data("empty dataset after cleaning"));
    }
    let mut out = ds.select_rows(&kept);
    let dropped = ds.n_rows() - kept.len();
    if dropped > 0 {
        log::info!("removed {dropped} rows containing NaN");
    }
    replace_infinities(&mut out.features, &out.feature_names)?;
    Ok((out, kept))
}

fn replace_infinities(m: &mut Matrix, names: &[String]) -> Result<()> {
    let (rows, cols) = m.shape();
    for c in 0..cols {
        let mut has_inf = false;
        let mut sum = 0.0;
        let mut n = 0usize;
        for r in 0..rows {
            let v = m[(r, c)];
            if v.is_finite() {
                sum += v;
                n += 1;
            } else {
                has_inf = true;
            }
        }
        if !has_inf {
            continue;
        }
        if n == 0 {
            return Err(Error::data(format!(
                "column {:?} has no finite values",
                names[c]
            )));
        }
        let mean = sum / n as f64;
        for r in 0..rows {
            if m[(r, c)].is_infinite() {
                m[(r, c)] = mean;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub seed: u64,
    /// Shuffle and split each class separately. Off by default.
    pub stratify: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            seed: 42,
            stratify: false,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::config(format!(
                "split.test_fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        Ok(())
    }
}

fn test_count(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).round() as usize).clamp(1, n - 1)
}

/// Seeded shuffle split into (train, test).
pub fn train_test_split(ds: &FlowDataset, cfg: &SplitConfig) -> Result<(FlowDataset, FlowDataset)> {
    cfg.validate()?;
    let n = ds.n_rows();
    if n < 2 {
        return Err(Error::data(format!("cannot split {n} rows")));
    }
    let mut rng = seeded::rng(cfg.seed, 0);
    let (train_idx, test_idx) = if cfg.stratify {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for class in [BENIGN, ATTACK] {
            let mut idx: Vec<usize> = (0..n).filter(|&i| ds.labels[i] == class).collect();
            seeded::shuffle(&mut idx, &mut rng);
            let k = if idx.len() < 2 {
                0
            } else {
                test_count(idx.len(), cfg.test_fraction)
            };
            test.extend_from_slice(&idx[..k]);
            train.extend_from_slice(&idx[k..]);
        }
        if test.is_empty() {
            // Both classes too small to stratify; fall back to a single row.
            test.push(train.pop().expect("n >= 2"));
        }
        (train, test)
    } else {
        let perm = seeded::permutation(n, &mut rng);
        let k = test_count(n, cfg.test_fraction);
        (perm[k..].to_vec(), perm[..k].to_vec())
    };
    Ok((ds.select_rows(&train_idx), ds.select_rows(&test_idx)))
}

/// Per-column standard-scaling parameters (population std).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub fitted_on: usize,
}

pub fn fit_scaler(train: &FlowDataset) -> Result<ScalerParams> {
    if train.is_empty() {
        return Err(Error::data("cannot fit a scaler on zero rows"));
    }
    let cols = train.n_features();
    // Welford's recurrence, one column at a time.
    let mut means = vec![0.0; cols];
    let mut stds = vec![0.0; cols];
    for c in 0..cols {
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for (k, row) in train.features.iter_rows().enumerate() {
            let x = row[c];
            let delta = x - mean;
            mean += delta / (k + 1) as f64;
            m2 += delta * (x - mean);
        }
        means[c] = mean;
        stds[c] = (m2 / train.n_rows() as f64).max(0.0).sqrt();
    }
    Ok(ScalerParams {
        means,
        stds,
        fitted_on: train.n_rows(),
    })
}

impl ScalerParams {
    pub fn n_features(&self) -> usize {
        self.means.len()
    }

    /// `(x − μ)/σ`, or 0 where σ = 0.
    pub fn transform(&self, m: &Matrix) -> Result<Matrix> {
        if m.cols() != self.n_features() {
            return Err(Error::shape(format!(
                "scaler fitted on {} columns, data has {}",
                self.n_features(),
                m.cols()
            )));
        }
        let mut out = m.clone();
        for r in 0..out.rows() {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                let s = self.stds[c];
                *v = if s == 0.0 {
                    0.0
                } else {
                    (*v - self.means[c]) / s
                };
            }
        }
        Ok(out)
    }
}

pub fn apply_scaler(ds: &FlowDataset, s: &ScalerParams) -> Result<FlowDataset> {
    Ok(FlowDataset {
        feature_names: ds.feature_names.clone(),
        features: s.transform(&ds.features)?,
        labels: ds.labels.clone(),
    })
}

/// Writes the dataset with its header and a 0/1 label column.
pub fn write_flow_csv(ds: &FlowDataset, path: impl AsRef<Path>, label_column: &str) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = ds.feature_names.iter().map(String::as_str).collect();
    header.push(label_column);
    w.write_record(&header)?;
    for (row, &label) in ds.features.iter_rows().zip(&ds.labels) {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(label.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn ds(rows: &[Vec<f64>], labels: &[u8]) -> FlowDataset {
        let names = (0..rows[0].len()).map(|i| format!("f{i}")).collect();
        FlowDataset::new(names, Matrix::from_rows(rows).unwrap(), labels.to_vec()).unwrap()
    }

    fn csv_file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn labels_are_encoded() {
        let f = csv_file("a,b,Label\n1,2,BENIGN\n3,4,DDoS\n5,6,BENIGN\n");
        let loaded = load_flow_csv(f.path(), &LabelSpec::default()).unwrap();
        assert_eq!(loaded.dataset.labels(), &[0, 1, 0]);
        assert_eq!(loaded.dataset.feature_names(), &["a", "b"]);
    }

    #[test]
    fn label_matching_ignores_case_and_padding() {
        let f = csv_file("a, Label\n1, benign \n2,  ddos\n");
        let loaded = load_flow_csv(f.path(), &LabelSpec::default()).unwrap();
        assert_eq!(loaded.dataset.labels(), &[0, 1]);
    }

    #[test]
    fn all_zero_cells_give_zero_matrix() {
        let f = csv_file("a,b,Label\n0,0,BENIGN\n0,0,DDoS\n");
        let loaded = load_flow_csv(f.path(), &LabelSpec::default()).unwrap();
        assert!(loaded
            .dataset
            .features()
            .as_slice()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn unparseable_cell_becomes_nan_and_is_cleaned() {
        let f = csv_file("a,b,Label\n1,2,BENIGN\n3,abc,DDoS\n5,6,BENIGN\n7,8,DDoS\n9,10,BENIGN\n");
        let loaded = load_flow_csv(f.path(), &LabelSpec::default()).unwrap();
        assert_eq!(loaded.dataset.n_rows(), 5);
        assert!(loaded.dataset.features()[(1, 1)].is_nan());
        let cleaned = clean(&loaded.dataset).unwrap();
        assert_eq!(cleaned.n_rows(), 4);
        assert_eq!(cleaned.labels(), &[0, 0, 1, 0]);
    }

    #[test]
    fn identifier_columns_are_dropped_and_reported() {
        let f = csv_file(
            "Flow ID,Source IP,Flow Duration,Timestamp,Label\n\
             a-b-1,10.0.0.1,100,7/7/2017 3:30,BENIGN\n\
             a-b-2,10.0.0.2,Infinity,7/7/2017 3:31,DDoS\n",
        );
        let loaded = load_flow_csv(f.path(), &LabelSpec::default()).unwrap();
        assert_eq!(loaded.dataset.feature_names(), &["Flow Duration"]);
        assert_eq!(
            loaded.dropped_columns,
            vec!["Flow ID", "Source IP", "Timestamp"]
        );
        assert!(loaded.dataset.features()[(1, 0)].is_infinite());
    }

    #[test]
    fn duplicate_headers_are_suffixed() {
        let f = csv_file("x,x,Label\n1,2,BENIGN\n");
        let loaded = load_flow_csv(f.path(), &LabelSpec::default()).unwrap();
        assert_eq!(loaded.dataset.feature_names(), &["x", "x.1"]);
    }

    #[test]
    fn load_errors() {
        let spec = LabelSpec::default();
        assert!(matches!(
            load_flow_csv("/nonexistent/flows.csv", &spec),
            Err(Error::Io { .. })
        ));
        let f = csv_file("a,b\n1,2\n");
        assert!(load_flow_csv(f.path(), &spec)
            .unwrap_err()
            .to_string()
            .contains("label column"));
        let f = csv_file("a,Label\n1,BENIGN\n2,PortScan\n");
        let msg = load_flow_csv(f.path(), &spec).unwrap_err().to_string();
        assert!(msg.contains("row 2") && msg.contains("PortScan"), "{msg}");
        let f = csv_file("ip,Label\n1.2.3.4,BENIGN\n");
        assert!(load_flow_csv(f.path(), &spec)
            .unwrap_err()
            .to_string()
            .contains("no numeric"));
        let f = csv_file("a,Label\n");
        assert!(load_flow_csv(f.path(), &spec).is_err());
    }

    #[test]
    fn clean_drops_nan_rows() {
        let d = ds(
            &[vec![1.0, 2.0], vec![f64::NAN, 3.0], vec![4.0, 5.0]],
            &[0, 1, 0],
        );
        let c = clean(&d).unwrap();
        assert_eq!(c.features().as_slice(), &[1.0, 2.0, 4.0, 5.0]);
        assert_eq!(c.labels(), &[0, 0]);
    }

    #[test]
    fn clean_replaces_infinity_with_finite_mean() {
        let d = ds(&[vec![1.0], vec![f64::INFINITY], vec![3.0]], &[0, 1, 0]);
        assert_eq!(clean(&d).unwrap().features().as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn clean_drops_nan_before_computing_means() {
        // Row 1 carries the NaN and a large finite value in column 1 that must
        // not leak into column 1's mean.
        let d = ds(
            &[
                vec![1.0, 10.0],
                vec![f64::NAN, 1000.0],
                vec![f64::NEG_INFINITY, 20.0],
                vec![5.0, f64::INFINITY],
            ],
            &[0, 1, 0, 1],
        );
        // Manual: keep rows 0,2,3; col0 finite {1,5} → 3; col1 finite {10,20} → 15.
        let c = clean(&d).unwrap();
        assert_eq!(c.features().as_slice(), &[1.0, 10.0, 3.0, 20.0, 5.0, 15.0]);
        assert_eq!(c.labels(), &[0, 0, 1]);
    }

    #[test]
    fn clean_errors() {
        let d = ds(&[vec![f64::NAN], vec![f64::NAN]], &[0, 1]);
        assert_eq!(
            clean(&d).unwrap_err().to_string(),
            "empty dataset after cleaning"
        );
        let d = ds(
            &[vec![1.0, f64::INFINITY], vec![2.0, f64::NEG_INFINITY]],
            &[0, 1],
        );
        assert!(clean(&d).unwrap_err().to_string().contains("\"f1\""));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let d = ds(&rows, &[0, 1, 0, 1, 0, 1, 0, 1, 0, 1]);
        let cfg = SplitConfig::default();
        let (tr, te) = train_test_split(&d, &cfg).unwrap();
        assert_eq!((tr.n_rows(), te.n_rows()), (8, 2));
        let (tr2, te2) = train_test_split(&d, &cfg).unwrap();
        assert_eq!(tr, tr2);
        assert_eq!(te, te2);
    }

    #[test]
    fn tiny_split_keeps_a_test_row() {
        let d = ds(&[vec![1.0], vec![2.0]], &[0, 1]);
        let cfg = SplitConfig {
            test_fraction: 0.01,
            ..Default::default()
        };
        let (tr, te) = train_test_split(&d, &cfg).unwrap();
        assert_eq!((tr.n_rows(), te.n_rows()), (1, 1));
        assert!(train_test_split(&ds(&[vec![1.0]], &[0]), &cfg).is_err());
        let bad = SplitConfig {
            test_fraction: 1.0,
            ..Default::default()
        };
        assert!(train_test_split(&d, &bad).is_err());
    }

    #[test]
    fn stratified_split_preserves_class_ratio() {
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64]).collect();
        let labels: Vec<u8> = (0..100).map(|i| u8::from(i < 10)).collect();
        let d = ds(&rows, &labels);
        let cfg = SplitConfig {
            stratify: true,
            ..Default::default()
        };
        let (tr, te) = train_test_split(&d, &cfg).unwrap();
        assert_eq!(te.class_counts(), (18, 2));
        assert_eq!(tr.class_counts(), (72, 8));
    }

    #[test]
    fn scaler_matches_two_pass_population_stats() {
        let d = ds(
            &[vec![2.0, 5.0], vec![4.0, 5.0], vec![6.0, 5.0]],
            &[0, 1, 0],
        );
        let s = fit_scaler(&d).unwrap();
        assert_eq!(s.fitted_on, 3);
        // Two-pass oracle.
        let col = [2.0, 4.0, 6.0];
        let mean: f64 = col.iter().sum::<f64>() / 3.0;
        let var: f64 = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 3.0;
        assert!((s.means[0] - mean).abs() < 1e-12);
        assert!((s.stds[0] - var.sqrt()).abs() < 1e-12);
        assert!((s.stds[0] - 1.632993161855452).abs() < 1e-12);
        assert_eq!((s.means[1], s.stds[1]), (5.0, 0.0));

        let t = apply_scaler(&d, &s).unwrap();
        assert!(t.features().column(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn apply_scaler_arithmetic_and_identity() {
        let s = ScalerParams {
            means: vec![4.0, 0.0],
            stds: vec![2.0, 1.0],
            fitted_on: 1,
        };
        let d = ds(&[vec![6.0, -0.3]], &[0]);
        let t = apply_scaler(&d, &s).unwrap();
        assert_eq!(t.features().as_slice(), &[1.0, -0.3]);
        let wrong = ds(&[vec![1.0]], &[0]);
        assert!(matches!(apply_scaler(&wrong, &s), Err(Error::Shape(_))));
    }

    #[test]
    fn align_reorders_or_reports_differences() {
        let d = ds(&[vec![1.0, 2.0]], &[0]);
        let names = vec!["f1".to_string(), "f0".to_string()];
        assert_eq!(
            d.align_to(&names).unwrap().features().as_slice(),
            &[2.0, 1.0]
        );
        let names = vec!["f0".to_string(), "g".to_string()];
        let msg = d.align_to(&names).unwrap_err().to_string();
        assert!(msg.contains("\"g\"") && msg.contains("\"f1\""), "{msg}");
    }

    #[test]
    fn write_then_load_round_trips() {
        let d = ds(&[vec![1.5, -2.0], vec![0.1, 3.0]], &[1, 0]);
        let f = tempfile::NamedTempFile::new().unwrap();
        write_flow_csv(&d, f.path(), "Label").unwrap();
        let spec = LabelSpec {
            benign_token: "0".into(),
            attack_token: "1".into(),
            ..Default::default()
        };
        let back = load_flow_csv(f.path(), &spec).unwrap().dataset;
        assert_eq!(back, d);
    }
}
