//! End-to-end commands: synthesize, train, evaluate, predict, gradcheck.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{
    apply_scaler, clean, clean_indexed, fit_scaler, load_feature_csv, load_flow_csv,
    train_test_split, FlowDataset, LabelSpec, SplitConfig,
};
use crate::error::{Error, Result, StageExt};
use crate::matrix::Matrix;
use crate::metrics::EvalReport;
use crate::nn::{
    gradient_check, ArchConfig, AttentionPlacement, LossKind, Mode, ModelParams, Objective,
};
use crate::persist::ModelBundle;
use crate::seeded;
use crate::smote::{oversample, write_audit_csv, SmoteConfig};
use crate::synth::{write_synthetic_csv, SyntheticSpec};
use crate::train::{classify, predict_proba, TrainConfig, TrainReport, Trainer};

/// Settings for the finite-difference check of a small network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradCheckConfig {
    pub width: usize,
    pub n_blocks: usize,
    pub attention: AttentionPlacement,
    pub n_features: usize,
    pub batch: usize,
    pub step: f64,
    pub tolerance: f64,
    /// Weight of the anchor penalty in the anchored-loss check.
    pub lambda_anchor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            width: 8,
            n_blocks: 2,
            attention: AttentionPlacement::EveryBlock,
            n_features: 8,
            batch: 16,
            step: 1e-5,
            tolerance: 1e-4,
            lambda_anchor: 0.5,
            seed: 42,
        }
    }
}

impl GradCheckConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.n_features == 0 || self.batch < 2 {
            return Err(Error::config(
                "gradcheck.width and gradcheck.n_features must be positive, gradcheck.batch at least 2",
            ));
        }
        if !(self.step > 0.0) || !(self.tolerance > 0.0) || !(self.lambda_anchor >= 0.0) {
            return Err(Error::config(
                "gradcheck.step and gradcheck.tolerance must be positive, gradcheck.lambda_anchor >= 0",
            ));
        }
        Ok(())
    }
}

/// Default file locations; command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub data: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// The whole run configuration as one JSON document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub label: LabelSpec,
    pub split: SplitConfig,
    pub smote: SmoteConfig,
    pub model: ArchConfig,
    pub train: TrainConfig,
    pub synth: SyntheticSpec,
    pub gradcheck: GradCheckConfig,
    pub paths: PathsConfig,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| Error::config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        self.smote.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.synth.validate()?;
        self.gradcheck.validate()
    }

    pub fn set_all_seeds(&mut self, seed: u64) {
        self.split.seed = seed;
        self.smote.seed = seed;
        self.model.init_seed = seed;
        self.train.seed = seed;
        self.synth.seed = seed;
        self.gradcheck.seed = seed;
    }
}

pub fn cmd_synth(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    write_synthetic_csv(&cfg.synth, &cfg.label, out)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub bundle: ModelBundle,
    pub report: TrainReport,
    pub eval: EvalReport,
    /// Class counts `(benign, attack)` of the training split before and after
    /// SMOTE, and of the test split.
    pub train_counts: (usize, usize),
    pub balanced_counts: (usize, usize),
    pub test_counts: (usize, usize),
    pub smote_audit: Vec<crate::smote::SyntheticSample>,
    /// Mean |ŷ² − ŷ¹| over the balanced training set.
    pub anchor_drift: f64,
    pub dropped_columns: Vec<String>,
}

/// load → clean → split → scale (fitted on train) → phase 1 → SMOTE on the
/// training split → anchors → phase 2 → evaluate on the test split.
pub fn run_training(cfg: &PipelineConfig, data: &Path) -> Result<TrainOutcome> {
    cfg.validate()?;
    let loaded = load_flow_csv(data, &cfg.label).stage("load")?;
    let ds = clean(&loaded.dataset).stage("clean")?;
    let (train_raw, test_raw) = train_test_split(&ds, &cfg.split).stage("split")?;
    let scaler = fit_scaler(&train_raw).stage("scale")?;
    let train = apply_scaler(&train_raw, &scaler).stage("scale")?;
    let test = apply_scaler(&test_raw, &scaler).stage("scale")?;

    let mut model = ModelParams::init(train.n_features(), &cfg.model).stage("init")?;
    let mut trainer = Trainer::new(&cfg.train)?;
    let mut report = trainer.phase1(&mut model, &train).stage("phase 1")?;

    let smote = oversample(&train, &cfg.smote).stage("smote")?;
    let balanced = smote.dataset;
    let anchors = predict_proba(&model, balanced.features()).stage("anchors")?;
    report.extend(
        trainer
            .phase2(&mut model, &balanced, &anchors)
            .stage("phase 2")?,
    );

    let after = predict_proba(&model, balanced.features()).stage("evaluate")?;
    let anchor_drift = after
        .iter()
        .zip(&anchors)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / after.len() as f64;
    let scores = predict_proba(&model, test.features()).stage("evaluate")?;
    let eval =
        EvalReport::from_scores(&scores, test.labels(), cfg.train.threshold).stage("evaluate")?;

    Ok(TrainOutcome {
        bundle: ModelBundle {
            model,
            scaler,
            feature_names: ds.feature_names().to_vec(),
            label: cfg.label.clone(),
            threshold: cfg.train.threshold,
            seed: cfg.train.seed,
        },
        report,
        eval,
        train_counts: train.class_counts(),
        balanced_counts: balanced.class_counts(),
        test_counts: test.class_counts(),
        smote_audit: smote.synthetic,
        anchor_drift,
        dropped_columns: loaded.dropped_columns,
    })
}

/// Files written next to the model by [`cmd_train`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainArtifacts {
    pub model: PathBuf,
    pub train_report: PathBuf,
    pub eval_report: PathBuf,
    pub smote_audit: PathBuf,
}

impl TrainArtifacts {
    /// Reports go in `out_dir` when given, else beside the model file.
    pub fn new(model: &Path, out_dir: Option<&Path>) -> Self {
        let stem = model
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "model".into());
        let dir = out_dir
            .map(Path::to_path_buf)
            .or_else(|| model.parent().map(Path::to_path_buf))
            .unwrap_or_default();
        Self {
            model: model.to_path_buf(),
            train_report: dir.join(format!("{stem}.train.csv")),
            eval_report: dir.join(format!("{stem}.eval.txt")),
            smote_audit: dir.join(format!("{stem}.smote.csv")),
        }
    }
}

pub fn cmd_train(
    cfg: &PipelineConfig,
    data: &Path,
    artifacts: &TrainArtifacts,
) -> Result<TrainOutcome> {
    let outcome = run_training(cfg, data)?;
    let write = |p: &Path, text: &str| std::fs::write(p, text).map_err(|e| Error::io(p, e));
    for dir in [&artifacts.train_report, &artifacts.model]
        .iter()
        .filter_map(|p| p.parent())
        .filter(|d| !d.as_os_str().is_empty())
    {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    outcome.bundle.save(&artifacts.model).stage("save")?;
    write(&artifacts.train_report, &outcome.report.to_csv()).stage("save")?;
    write(&artifacts.eval_report, &outcome.eval.to_key_value()).stage("save")?;
    write_audit_csv(&outcome.smote_audit, &artifacts.smote_audit).stage("save")?;
    Ok(outcome)
}

/// Scores a labelled CSV with a saved model.
pub fn cmd_evaluate(model: &Path, data: &Path, threshold: Option<f64>) -> Result<EvalReport> {
    let bundle = ModelBundle::load(model).stage("load model")?;
    let threshold = check_threshold(threshold.unwrap_or(bundle.threshold))?;
    let loaded = load_flow_csv(data, &bundle.label).stage("load")?;
    let ds = loaded
        .dataset
        .align_to(&bundle.feature_names)
        .stage("features")?;
    let ds = clean(&ds).stage("clean")?;
    let x = bundle.scaler.transform(ds.features()).stage("scale")?;
    let scores = predict_proba(&bundle.model, &x).stage("predict")?;
    EvalReport::from_scores(&scores, ds.labels(), threshold).stage("evaluate")
}

/// `row,probability,label` for every row that survives cleaning; `row` is the
/// 0-based data row of the input file.
pub fn cmd_predict(model: &Path, data: &Path, threshold: Option<f64>) -> Result<String> {
    let bundle = ModelBundle::load(model).stage("load model")?;
    let threshold = check_threshold(threshold.unwrap_or(bundle.threshold))?;
    let table = load_feature_csv(data, &bundle.label.column).stage("load")?;
    let n = table.features.rows();
    let ds = FlowDataset::new(table.feature_names, table.features, vec![0; n]).stage("load")?;
    let ds = ds.align_to(&bundle.feature_names).stage("features")?;
    let (ds, kept) = clean_indexed(&ds).stage("clean")?;
    if kept.len() < n {
        log::warn!("{} rows with missing values were skipped", n - kept.len());
    }
    let x = bundle.scaler.transform(ds.features()).stage("scale")?;
    let proba = predict_proba(&bundle.model, &x).stage("predict")?;
    let labels = classify(&proba, threshold);
    let mut out = String::from("row,probability,label\n");
    for ((row, p), l) in kept.iter().zip(&proba).zip(&labels) {
        let _ = writeln!(out, "{row},{p:?},{}", bundle.label.decode(*l));
    }
    Ok(out)
}

fn check_threshold(t: f64) -> Result<f64> {
    if t > 0.0 && t < 1.0 {
        Ok(t)
    } else {
        Err(Error::config(format!(
            "threshold must lie in (0, 1), got {t}"
        )))
    }
}

/// One row of the gradient-check table: worst relative error per loss.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckRow {
    pub name: String,
    pub len: usize,
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckSummary {
    pub losses: Vec<String>,
    pub rows: Vec<GradCheckRow>,
    pub tolerance: f64,
    pub n_params: usize,
}

impl GradCheckSummary {
    pub fn passed(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.errors.iter().all(|&e| e < self.tolerance))
    }

    pub fn worst(&self) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| r.errors.iter().copied())
            .fold(0.0, f64::max)
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("{:<28} {:>6}", "tensor", "size");
        for l in &self.losses {
            let _ = write!(s, " {l:>12}");
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(s, "{:<28} {:>6}", r.name, r.len);
            for e in &r.errors {
                let _ = write!(s, " {e:>12.3e}");
            }
            let ok = r.errors.iter().all(|&e| e < self.tolerance);
            let _ = writeln!(s, "  {}", if ok { "ok" } else { "FAIL" });
        }
        let _ = writeln!(
            s,
            "{} parameters, worst relative error {:.3e}, tolerance {:e}: {}",
            self.n_params,
            self.worst(),
            self.tolerance,
            if self.passed() { "PASS" } else { "FAIL" }
        );
        s
    }
}

/// Central-difference check of BCE, Dice and anchored losses on a small
/// seeded network, batch norm in inference mode.
pub fn cmd_gradcheck(cfg: &GradCheckConfig) -> Result<GradCheckSummary> {
    cfg.validate()?;
    let arch = ArchConfig {
        input_width: cfg.width,
        block_widths: vec![cfg.width; cfg.n_blocks],
        attention: cfg.attention,
        init_seed: cfg.seed,
        ..Default::default()
    };
    let model = ModelParams::init(cfg.n_features, &arch)?;
    let mut rng = seeded::rng(cfg.seed, 1);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let x = Matrix::from_vec(
        cfg.batch,
        cfg.n_features,
        (0..cfg.batch * cfg.n_features)
            .map(|_| normal.sample(&mut rng))
            .collect(),
    )?;
    let labels: Vec<u8> = (0..cfg.batch).map(|i| (i % 2) as u8).collect();
    let anchors: Vec<f64> = (0..cfg.batch)
        .map(|_| 0.05 + 0.9 * seeded::unit(&mut rng))
        .collect();

    let objectives = [
        ("bce", Objective::plain(LossKind::Bce, 1.0)),
        ("dice", Objective::plain(LossKind::Dice, 1.0)),
        (
            "anchored",
            Objective::anchored(LossKind::Dice, 1.0, &anchors, cfg.lambda_anchor),
        ),
    ];
    let mut rows: Vec<GradCheckRow> = Vec::new();
    for (k, (_, obj)) in objectives.iter().enumerate() {
        let r = gradient_check(
            &model,
            &x,
            &labels,
            obj,
            Mode::Infer,
            cfg.step,
            cfg.tolerance,
        )?;
        if k == 0 {
            rows = r
                .tensors
                .iter()
                .map(|t| GradCheckRow {
                    name: t.name.clone(),
                    len: t.len,
                    errors: Vec::new(),
                })
                .collect();
        }
        for (row, t) in rows.iter_mut().zip(&r.tensors) {
            row.errors.push(t.max_rel_error);
        }
    }
    Ok(GradCheckSummary {
        losses: objectives.iter().map(|(n, _)| n.to_string()).collect(),
        rows,
        tolerance: cfg.tolerance,
        n_params: model.n_trainable(),
    })
}
