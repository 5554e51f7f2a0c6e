//! Binary classification metrics. The positive class is 1 (attack).

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(pred: &[u8], truth: &[u8]) -> Result<ConfusionCounts> {
    if pred.len() != truth.len() {
        return Err(Error::shape(format!(
            "{} predictions vs {} labels",
            pred.len(),
            truth.len()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.iter().zip(truth) {
        match (p == 1, t == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// A ratio whose denominator may be zero. Degenerate ratios read as 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ratio {
    pub value: f64,
    pub degenerate: bool,
}

impl Ratio {
    fn of(num: u64, den: u64) -> Self {
        if den == 0 {
            Ratio {
                value: 0.0,
                degenerate: true,
            }
        } else {
            Ratio {
                value: num as f64 / den as f64,
                degenerate: false,
            }
        }
    }
}

/// `tp / (tp + fp)`
pub fn precision(c: &ConfusionCounts) -> Ratio {
    Ratio::of(c.tp, c.tp + c.fp)
}

/// `tp / (tp + fn)`
pub fn recall(c: &ConfusionCounts) -> Ratio {
    Ratio::of(c.tp, c.tp + c.fn_)
}

pub fn accuracy(c: &ConfusionCounts) -> Ratio {
    Ratio::of(c.tp + c.tn, c.total())
}

/// Harmonic mean `2PR/(P + R)`.
pub fn f1(p: f64, r: f64) -> Ratio {
    if p + r == 0.0 {
        Ratio {
            value: 0.0,
            degenerate: true,
        }
    } else {
        Ratio {
            value: 2.0 * p * r / (p + r),
            degenerate: false,
        }
    }
}

/// Area under the ROC curve: a threshold sweep over the distinct scores,
/// highest first, integrated with the trapezoid rule. Tied scores form one
/// diagonal segment, which is what makes the result equal the Mann–Whitney
/// statistic with ties counted half.
pub fn roc_auc(scores: &[f64], truth: &[u8]) -> Result<f64> {
    if scores.len() != truth.len() {
        return Err(Error::shape(format!(
            "{} scores vs {} labels",
            scores.len(),
            truth.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::data("AUC undefined: NaN score"));
    }
    let pos = truth.iter().filter(|&&t| t == 1).count() as u64;
    let neg = truth.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::data("AUC undefined: only one class present"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    // Twice the area, in units of one (pos × neg) cell, kept in integers.
    let mut area2: u128 = 0;
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (prev_tp, prev_fp) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if truth[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area2 += u128::from(fp - prev_fp) * u128::from(tp + prev_tp);
    }
    Ok(area2 as f64 / (2.0 * pos as f64 * neg as f64))
}

/// Every reported metric, with flags for zero-denominator cases.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub counts: ConfusionCounts,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `None` when the evaluated labels contain a single class.
    pub roc_auc: Option<f64>,
    pub threshold: f64,
    pub degenerate: Vec<&'static str>,
}

impl EvalReport {
    pub fn from_scores(scores: &[f64], truth: &[u8], threshold: f64) -> Result<Self> {
        let pred: Vec<u8> = scores.iter().map(|&s| u8::from(s > threshold)).collect();
        let counts = confusion(&pred, truth)?;
        let acc = accuracy(&counts);
        let p = precision(&counts);
        let r = recall(&counts);
        let f = f1(p.value, r.value);
        let mut degenerate = Vec::new();
        for (name, ratio) in [
            ("accuracy", acc),
            ("precision", p),
            ("recall", r),
            ("f1", f),
        ] {
            if ratio.degenerate {
                degenerate.push(name);
            }
        }
        let roc_auc = match roc_auc(scores, truth) {
            Ok(a) => Some(a),
            Err(_) => {
                degenerate.push("roc_auc");
                None
            }
        };
        Ok(Self {
            counts,
            accuracy: acc.value,
            precision: p.value,
            recall: r.value,
            f1: f.value,
            roc_auc,
            threshold,
            degenerate,
        })
    }

    /// `key=value` lines.
    pub fn to_key_value(&self) -> String {
        let c = &self.counts;
        let mut s = String::new();
        s.push_str(&format!("samples={}\n", c.total()));
        s.push_str(&format!(
            "tp={}\nfp={}\ntn={}\nfn={}\n",
            c.tp, c.fp, c.tn, c.fn_
        ));
        s.push_str(&format!("threshold={:?}\n", self.threshold));
        s.push_str(&format!("accuracy={:?}\n", self.accuracy));
        s.push_str(&format!("precision={:?}\n", self.precision));
        s.push_str(&format!("recall={:?}\n", self.recall));
        s.push_str(&format!("f1={:?}\n", self.f1));
        match self.roc_auc {
            Some(a) => s.push_str(&format!("roc_auc={a:?}\n")),
            None => s.push_str("roc_auc=undefined\n"),
        }
        s.push_str(&format!("degenerate={}\n", self.degenerate.join(",")));
        s
    }

    /// Parses the output of [`EvalReport::to_key_value`].
    pub fn from_key_value(text: &str) -> Result<Self> {
        let mut map = std::collections::HashMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::data(format!("bad report line {line:?}")))?;
            map.insert(k.trim(), v.trim());
        }
        let get = |k: &str| {
            map.get(k)
                .copied()
                .ok_or_else(|| Error::data(format!("report is missing {k}")))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| Error::data(format!("report field {k} is not a number")))
        };
        let int = |k: &str| -> Result<u64> {
            get(k)?
                .parse()
                .map_err(|_| Error::data(format!("report field {k} is not an integer")))
        };
        const KNOWN: [&str; 5] = ["accuracy", "precision", "recall", "f1", "roc_auc"];
        let degenerate = get("degenerate")?
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| {
                KNOWN
                    .iter()
                    .find(|k| **k == s)
                    .copied()
                    .ok_or_else(|| Error::data(format!("unknown degenerate metric {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            counts: ConfusionCounts {
                tp: int("tp")?,
                fp: int("fp")?,
                tn: int("tn")?,
                fn_: int("fn")?,
            },
            accuracy: num("accuracy")?,
            precision: num("precision")?,
            recall: num("recall")?,
            f1: num("f1")?,
            roc_auc: match get("roc_auc")? {
                "undefined" => None,
                _ => Some(num("roc_auc")?),
            },
            threshold: num("threshold")?,
            degenerate,
        })
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.counts;
        let pct = |v: f64| format!("{:.2}", 100.0 * v);
        writeln!(f, "{:<10} {:>8}", "Metric", "Value(%)")?;
        writeln!(f, "{:<10} {:>8}", "Accuracy", pct(self.accuracy))?;
        writeln!(f, "{:<10} {:>8}", "Precision", pct(self.precision))?;
        writeln!(f, "{:<10} {:>8}", "Recall", pct(self.recall))?;
        writeln!(f, "{:<10} {:>8}", "F1-Score", pct(self.f1))?;
        match self.roc_auc {
            Some(a) => writeln!(f, "{:<10} {:>8.2}", "ROC-AUC", a)?,
            None => writeln!(f, "{:<10} {:>8}", "ROC-AUC", "n/a")?,
        }
        writeln!(
            f,
            "confusion: tp={} fp={} tn={} fn={} (threshold {})",
            c.tp, c.fp, c.tn, c.fn_, self.threshold
        )?;
        if !self.degenerate.is_empty() {
            writeln!(
                f,
                "degenerate (reported as 0): {}",
                self.degenerate.join(", ")
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_examples() {
        let t = [1, 0, 1, 1, 0];
        let c = confusion(&t, &t).unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));
        let inv: Vec<u8> = t.iter().map(|v| 1 - v).collect();
        let c = confusion(&inv, &t).unwrap();
        assert_eq!((c.tp, c.tn), (0, 0));
        let c = confusion(&[1, 1, 0, 0], &[1, 0, 0, 1]).unwrap();
        assert_eq!(
            c,
            ConfusionCounts {
                tp: 1,
                fp: 1,
                tn: 1,
                fn_: 1
            }
        );
        assert!(confusion(&[1], &[1, 0]).is_err());
    }

    #[test]
    fn ratio_examples() {
        let c = ConfusionCounts {
            tp: 3,
            fp: 1,
            tn: 0,
            fn_: 0,
        };
        assert_eq!(precision(&c).value, 0.75);
        let c = ConfusionCounts {
            tp: 0,
            fp: 0,
            tn: 5,
            fn_: 2,
        };
        let p = precision(&c);
        assert_eq!((p.value, p.degenerate), (0.0, true));
        assert_eq!(recall(&c).value, 0.0);
        assert!(!recall(&c).degenerate);
        assert!(f1(0.0, 0.0).degenerate);
    }

    #[test]
    fn f1_rounds_at_four_places() {
        let f = f1(0.9998, 0.9996).value;
        assert_eq!(format!("{f:.4}"), "0.9997");
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.9, 0.8, 0.1, 0.2], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.4; 6], &[1, 0, 1, 0, 0, 1]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.9, 0.8, 0.3], &[1, 0, 1]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.1, 0.9], &[1, 0]).unwrap(), 0.0);
        let err = roc_auc(&[0.1, 0.2], &[1, 1]).unwrap_err();
        assert!(err.to_string().contains("AUC undefined"));
        assert!(roc_auc(&[f64::NAN, 0.2], &[1, 0]).is_err());
    }

    #[test]
    fn report_is_consistent_and_round_trips() {
        let scores = [0.9, 0.2, 0.6, 0.4, 0.55, 0.1];
        let truth = [1, 0, 1, 1, 0, 0];
        let r = EvalReport::from_scores(&scores, &truth, 0.5).unwrap();
        assert_eq!(
            r.counts,
            ConfusionCounts {
                tp: 2,
                fp: 1,
                tn: 2,
                fn_: 1
            }
        );
        let hm = 2.0 * r.precision * r.recall / (r.precision + r.recall);
        assert!((r.f1 - hm).abs() < 1e-12);
        assert_eq!(EvalReport::from_key_value(&r.to_key_value()).unwrap(), r);
        assert!(r.to_string().contains("F1-Score"));
    }

    #[test]
    fn single_class_report_flags_auc() {
        let r = EvalReport::from_scores(&[0.1, 0.2], &[0, 0], 0.5).unwrap();
        assert_eq!(r.roc_auc, None);
        assert!(r.degenerate.contains(&"roc_auc") && r.degenerate.contains(&"precision"));
        assert_eq!(EvalReport::from_key_value(&r.to_key_value()).unwrap(), r);
    }
}
