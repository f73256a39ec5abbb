//! File formats: versioned JSON for models, CSV for datasets.
//!
//! Dataset CSV starts with a header `d=<d>,n=<n>`, then one row per point
//! holding its `d` coordinates followed by the label (`1` or `-1`).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Label, LabeledDataset, NetworkParams, Neuron};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NeuronRecord {
    w: Vec<f64>,
    b: f64,
    v: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    linear: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    input_dim: usize,
    width: usize,
    neurons: Vec<NeuronRecord>,
}

pub fn model_to_json(net: &NetworkParams) -> String {
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        input_dim: net.input_dim(),
        width: net.width(),
        neurons: net
            .neurons()
            .map(|n| NeuronRecord {
                w: n.w,
                b: n.b,
                v: n.v,
                linear: n.linear,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("model serialization cannot fail")
}

pub fn model_from_json(text: &str) -> Result<NetworkParams> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::format("model", e.to_string()))?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::format(
            "model",
            format!("unsupported format_version {}", file.format_version),
        ));
    }
    if file.neurons.len() != file.width {
        return Err(Error::format(
            "model",
            format!("width {} but {} neurons", file.width, file.neurons.len()),
        ));
    }
    if let Some(n) = file.neurons.iter().find(|n| n.w.len() != file.input_dim) {
        return Err(Error::format(
            "model",
            format!("input_dim {} but a neuron has {} weights", file.input_dim, n.w.len()),
        ));
    }
    if file.width == 0 {
        return NetworkParams::zeros(file.input_dim, 0);
    }
    let neurons: Vec<Neuron> = file
        .neurons
        .into_iter()
        .map(|r| Neuron {
            w: r.w,
            b: r.b,
            v: r.v,
            linear: r.linear,
        })
        .collect();
    NetworkParams::from_neurons(&neurons)
}

pub fn read_model(path: &Path) -> Result<NetworkParams> {
    model_from_json(&fs::read_to_string(path)?)
}

pub fn write_model(path: &Path, net: &NetworkParams) -> Result<()> {
    fs::write(path, model_to_json(net))?;
    Ok(())
}

pub fn dataset_to_csv(data: &LabeledDataset) -> String {
    let mut out = format!("d={},n={}\n", data.dim(), data.len());
    for i in 0..data.len() {
        for v in data.point(i) {
            let _ = write!(out, "{v},");
        }
        let _ = writeln!(out, "{}", data.label(i).sign());
    }
    out
}

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let bad = || Error::format("dataset", format!("expected header 'd=<d>,n=<n>', got '{line}'"));
    let (d, n) = line.trim().split_once(',').ok_or_else(bad)?;
    let d = d
        .trim()
        .strip_prefix("d=")
        .and_then(|s| s.parse().ok())
        .ok_or_else(bad)?;
    let n = n
        .trim()
        .strip_prefix("n=")
        .and_then(|s| s.parse().ok())
        .ok_or_else(bad)?;
    Ok((d, n))
}

pub fn dataset_from_csv(text: &str) -> Result<LabeledDataset> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::format("dataset", "empty file"))?;
    let (d, n) = parse_header(header)?;
    let mut values = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for (row, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != d + 1 {
            return Err(Error::format(
                "dataset",
                format!("row {} has {} fields, expected {}", row + 1, fields.len(), d + 1),
            ));
        }
        for f in &fields[..d] {
            let v: f64 = f
                .parse()
                .map_err(|_| Error::format("dataset", format!("row {}: bad number '{f}'", row + 1)))?;
            values.push(v);
        }
        let y: f64 = fields[d]
            .parse()
            .map_err(|_| Error::format("dataset", format!("row {}: bad label '{}'", row + 1, fields[d])))?;
        labels.push(Label::from_sign(y).map_err(|e| Error::format("dataset", format!("row {}: {e}", row + 1)))?);
    }
    if labels.len() != n {
        return Err(Error::format(
            "dataset",
            format!("header declares n={n} but {} rows follow", labels.len()),
        ));
    }
    let x = Array2::from_shape_vec((n, d), values).map_err(|e| Error::format("dataset", e.to_string()))?;
    LabeledDataset::new(x, &labels)
}

pub fn read_dataset(path: &Path) -> Result<LabeledDataset> {
    dataset_from_csv(&fs::read_to_string(path)?)
}

pub fn write_dataset(path: &Path, data: &LabeledDataset) -> Result<()> {
    fs::write(path, dataset_to_csv(data))?;
    Ok(())
}

/// Reads a header-less list of points: one comma-separated row per point.
/// A trailing label column is not expected.
pub fn points_from_csv(text: &str) -> Result<Array2<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row: std::result::Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        rows.push(row.map_err(|_| Error::format("points", format!("line {}: not numeric", i + 1)))?);
    }
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::format("points", "rows have different lengths"));
    }
    let n = rows.len();
    Array2::from_shape_vec((n, d), rows.concat()).map_err(|e| Error::format("points", e.to_string()))
}
