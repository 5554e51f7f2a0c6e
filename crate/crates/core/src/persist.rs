//! Plain-text model files.
//!
//! ```text
//! flowguard-model 1
//! seed 42
//! threshold 5e-1
//! arch {"input_width":64,...}
//! label {"column":"Label",...}
//! features ["Flow Duration",...]
//! scaler_fitted_on 840
//! tensor scaler.mean 8
//! <values>
//! tensor input.weight 64,8
//! <values>
//! ...
//! end
//! ```
//!
//! Values are written in shortest round-trip exponent form, so loading and
//! saving again reproduces the file byte for byte.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::{LabelSpec, ScalerParams};
use crate::error::{Error, Result};
use crate::nn::{ArchConfig, ModelParams};

const MAGIC: &str = "flowguard-model 1";

/// Everything needed to score a raw flow CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub model: ModelParams,
    pub scaler: ScalerParams,
    pub feature_names: Vec<String>,
    pub label: LabelSpec,
    pub threshold: f64,
    pub seed: u64,
}

impl ModelBundle {
    pub fn validate(&self) -> Result<()> {
        let n = self.feature_names.len();
        if self.model.n_inputs() != n
            || self.scaler.n_features() != n
            || self.scaler.stds.len() != n
        {
            return Err(Error::ModelFormat(format!(
                "{n} feature names, model takes {}, scaler has {}",
                self.model.n_inputs(),
                self.scaler.n_features()
            )));
        }
        self.model.validate()
    }

    pub fn to_text(&self) -> Result<String> {
        self.validate()?;
        let mut s = String::new();
        let _ = writeln!(s, "{MAGIC}");
        let _ = writeln!(s, "seed {}", self.seed);
        let _ = writeln!(s, "threshold {:e}", self.threshold);
        let _ = writeln!(s, "arch {}", to_json(&self.model.arch)?);
        let _ = writeln!(s, "label {}", to_json(&self.label)?);
        let _ = writeln!(s, "features {}", to_json(&self.feature_names)?);
        let _ = writeln!(s, "scaler_fitted_on {}", self.scaler.fitted_on);
        write_tensor(
            &mut s,
            "scaler.mean",
            &[self.scaler.means.len()],
            &self.scaler.means,
        );
        write_tensor(
            &mut s,
            "scaler.std",
            &[self.scaler.stds.len()],
            &self.scaler.stds,
        );
        for t in self.model.tensors() {
            write_tensor(&mut s, &t.name, &t.shape, t.data);
        }
        s.push_str("end\n");
        Ok(s)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::ModelFormat(format!("file ends before {what}")))
        };
        if next("header")? != MAGIC {
            return Err(Error::ModelFormat(format!(
                "not a model file (expected {MAGIC:?})"
            )));
        }
        let seed: u64 = parse(field(next("seed")?, "seed")?, "seed")?;
        let threshold: f64 = parse(field(next("threshold")?, "threshold")?, "threshold")?;
        let arch: ArchConfig = from_json(field(next("arch")?, "arch")?, "arch")?;
        let label: LabelSpec = from_json(field(next("label")?, "label")?, "label")?;
        let feature_names: Vec<String> =
            from_json(field(next("features")?, "features")?, "features")?;
        let fitted_on: usize = parse(
            field(next("scaler_fitted_on")?, "scaler_fitted_on")?,
            "scaler_fitted_on",
        )?;

        let n = feature_names.len();
        let means = read_tensor(&mut next, "scaler.mean", &[n])?;
        let stds = read_tensor(&mut next, "scaler.std", &[n])?;
        let mut model =
            ModelParams::init(n, &arch).map_err(|e| Error::ModelFormat(e.to_string()))?;
        for t in model.tensors_mut() {
            let values = read_tensor(&mut next, &t.name, &t.shape)?;
            t.data.copy_from_slice(&values);
        }
        if next("end")? != "end" {
            return Err(Error::ModelFormat(
                "unexpected content after the last tensor".into(),
            ));
        }
        let bundle = Self {
            model,
            scaler: ScalerParams {
                means,
                stds,
                fitted_on,
            },
            feature_names,
            label,
            threshold,
            seed,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(|e| Error::ModelFormat(e.to_string()))
}

fn write_tensor(s: &mut String, name: &str, shape: &[usize], data: &[f64]) {
    let dims: Vec<String> = shape.iter().map(usize::to_string).collect();
    let _ = writeln!(s, "tensor {name} {}", dims.join(","));
    let values: Vec<String> = data.iter().map(|v| format!("{v:e}")).collect();
    let _ = writeln!(s, "{}", values.join(" "));
}

fn read_tensor<'a>(
    next: &mut impl FnMut(&str) -> Result<&'a str>,
    name: &str,
    shape: &[usize],
) -> Result<Vec<f64>> {
    let head = next(name)?;
    let mut parts = head.split(' ');
    let (tag, got_name, dims) = (parts.next(), parts.next(), parts.next());
    if tag != Some("tensor") || got_name != Some(name) || parts.next().is_some() {
        return Err(Error::ModelFormat(format!(
            "expected tensor {name}, found {head:?}"
        )));
    }
    let dims: Vec<usize> = dims
        .unwrap_or("")
        .split(',')
        .map(|d| parse(d, name))
        .collect::<Result<_>>()?;
    if dims != shape {
        return Err(Error::ModelFormat(format!(
            "tensor {name} has shape {dims:?}, architecture needs {shape:?}"
        )));
    }
    let body = next(name)?;
    let values: Vec<f64> = body
        .split_whitespace()
        .map(|v| parse(v, name))
        .collect::<Result<_>>()?;
    let expected: usize = shape.iter().product();
    if values.len() != expected {
        return Err(Error::ModelFormat(format!(
            "tensor {name} has {} values, expected {expected}",
            values.len()
        )));
    }
    Ok(values)
}

fn field<'a>(line: &'a str, key: &str) -> Result<&'a str> {
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| Error::ModelFormat(format!("expected {key:?} line, found {line:?}")))
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::ModelFormat(format!("bad value {s:?} in {what}")))
}

fn from_json<T: serde::de::DeserializeOwned>(s: &str, what: &str) -> Result<T> {
    serde_json::from_str(s).map_err(|e| Error::ModelFormat(format!("{what}: {e}")))
}
