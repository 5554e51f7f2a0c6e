use std::path::Path;

use flowguard::data::{load_flow_csv, LabelSpec};
use flowguard::pipeline::{
    cmd_evaluate, cmd_predict, cmd_synth, cmd_train, PipelineConfig, TrainArtifacts,
};

fn synth(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("flows.csv");
    cmd_synth(&PipelineConfig::default(), &p).unwrap();
    p
}

#[test]
fn desk_pipeline_trains_evaluates_and_predicts() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let cfg = PipelineConfig::default();
    let art = TrainArtifacts::new(&dir.path().join("m.model"), None);
    let out = cmd_train(&cfg, &data, &art).unwrap();

    assert!(out.eval.accuracy >= 0.99, "{}", out.eval);
    assert!(out.eval.roc_auc.unwrap() >= 0.99, "{}", out.eval);
    assert_eq!(out.report.records.len(), 100);
    assert!(out.report.records.iter().all(|r| r.loss.is_finite()));

    // SMOTE touched only the training split.
    let (b, a) = out.balanced_counts;
    assert_eq!(a, b);
    assert_eq!(b, out.train_counts.0);
    let (tb, ta) = out.test_counts;
    assert_eq!(tb + ta, 210);
    assert_eq!(out.train_counts.0 + out.train_counts.1 + tb + ta, 1050);
    assert_eq!(out.bundle.scaler.fitted_on, 840);

    let on_train_file = cmd_evaluate(&art.model, &data, None).unwrap();
    assert!(on_train_file.accuracy >= 0.99, "{on_train_file}");
    let r = &on_train_file;
    assert!((r.f1 - 2.0 * r.precision * r.recall / (r.precision + r.recall)).abs() < 1e-12);

    let pred = cmd_predict(&art.model, &data, None).unwrap();
    let lines: Vec<&str> = pred.lines().collect();
    assert_eq!(lines[0], "row,probability,label");
    assert_eq!(lines.len(), 1051);
    let truth = load_flow_csv(&data, &LabelSpec::default()).unwrap().dataset;
    let flagged = lines[1..].iter().filter(|l| l.ends_with(",DDoS")).count();
    let (_, attacks) = truth.class_counts();
    assert!(
        flagged.abs_diff(attacks) <= 10,
        "{flagged} flagged vs {attacks}"
    );

    for p in [&art.train_report, &art.eval_report, &art.smote_audit] {
        assert!(p.exists(), "{}", p.display());
    }
}

#[test]
fn training_twice_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let mut cfg = PipelineConfig::default();
    cfg.train.epochs_phase1 = 5;
    cfg.train.epochs_phase2 = 5;
    let a = TrainArtifacts::new(&dir.path().join("a.model"), None);
    let b = TrainArtifacts::new(&dir.path().join("b.model"), None);
    cmd_train(&cfg, &data, &a).unwrap();
    cmd_train(&cfg, &data, &b).unwrap();
    for (x, y) in [
        (&a.model, &b.model),
        (&a.train_report, &b.train_report),
        (&a.eval_report, &b.eval_report),
        (&a.smote_audit, &b.smote_audit),
    ] {
        assert_eq!(
            std::fs::read(x).unwrap(),
            std::fs::read(y).unwrap(),
            "{}",
            x.display()
        );
    }
}

#[test]
fn evaluate_rejects_mismatched_or_empty_data() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let mut cfg = PipelineConfig::default();
    cfg.train.epochs_phase1 = 1;
    cfg.train.epochs_phase2 = 1;
    let art = TrainArtifacts::new(&dir.path().join("m.model"), None);
    cmd_train(&cfg, &data, &art).unwrap();

    let renamed = dir.path().join("renamed.csv");
    let text = std::fs::read_to_string(&data)
        .unwrap()
        .replacen("Flow Duration", "Flow Length", 1);
    std::fs::write(&renamed, text).unwrap();
    let err = cmd_evaluate(&art.model, &renamed, None)
        .unwrap_err()
        .to_string();
    assert!(
        err.contains("Flow Duration") && err.contains("Flow Length"),
        "{err}"
    );

    let empty = dir.path().join("empty.csv");
    let header = std::fs::read_to_string(&data)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    std::fs::write(&empty, format!("{header}\n")).unwrap();
    assert!(cmd_evaluate(&art.model, &empty, None).is_err());
}

#[test]
fn stage_names_appear_in_errors() {
    let dir = tempfile::tempdir().unwrap();
    let art = TrainArtifacts::new(&dir.path().join("m.model"), None);
    let err = cmd_train(
        &PipelineConfig::default(),
        &dir.path().join("missing.csv"),
        &art,
    )
    .unwrap_err();
    assert!(err.to_string().starts_with("load:"), "{err}");

    let one_class = dir.path().join("benign.csv");
    std::fs::write(
        &one_class,
        "a,b,Label\n1,2,BENIGN\n3,4,BENIGN\n5,6,BENIGN\n7,8,BENIGN\n",
    )
    .unwrap();
    let mut cfg = PipelineConfig::default();
    cfg.train.epochs_phase1 = 1;
    let err = cmd_train(&cfg, &one_class, &art).unwrap_err();
    assert!(err.to_string().starts_with("smote:"), "{err}");
}
