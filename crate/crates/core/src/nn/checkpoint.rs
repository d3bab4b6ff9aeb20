//! Plain-text parameter checkpoints.
//!
//! ```text
//! smoothgnn-checkpoint v1
//! kind gin
//! input_dim 7
//! ...model config lines...
//! params 17
//! embed.weight 7 64
//! 3fb999999999999a bf847ae147ae147b ...   (IEEE-754 bits, hex, row-major)
//! ...
//! ```
//! Values are stored as raw bit patterns so a round trip is bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use super::model::{LayerKind, Model, ModelConfig, Propagation};
use super::tape::PoolMode;
use crate::error::{CoreError, Result};

const MAGIC: &str = "smoothgnn-checkpoint v1";

pub fn to_string(model: &Model) -> String {
    let c = &model.config;
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "kind {}", match c.kind { LayerKind::Gcn => "gcn", LayerKind::Gin => "gin" });
    let _ = writeln!(out, "input_dim {}", c.input_dim);
    let _ = writeln!(out, "hidden {}", c.hidden);
    let _ = writeln!(out, "layers {}", c.layers);
    let _ = writeln!(out, "num_classes {}", c.num_classes);
    let _ = writeln!(out, "readout {}", match c.readout { PoolMode::Sum => "sum", PoolMode::Mean => "mean" });
    let _ = writeln!(
        out,
        "propagation {}",
        match c.propagation {
            Propagation::NormAdjacency => "norm_adjacency",
            Propagation::Laplacian => "laplacian",
        }
    );
    let _ = writeln!(out, "epsilon {:016x}", c.epsilon.to_bits());
    let _ = writeln!(out, "train_epsilon {}", c.train_epsilon);
    let params = model.named_parameters();
    let _ = writeln!(out, "params {}", params.len());
    for (name, t) in params {
        let _ = writeln!(out, "{} {} {}", name, t.values.nrows(), t.values.ncols());
        let line: Vec<String> = t.values.iter().map(|v| format!("{:016x}", v.to_bits())).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    out
}

pub fn save(model: &Model, path: &Path) -> Result<()> {
    std::fs::write(path, to_string(model))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Model> {
    from_str(&std::fs::read_to_string(path)?)
}

fn bad(msg: impl Into<String>) -> CoreError {
    CoreError::Checkpoint(msg.into())
}

pub fn from_str(text: &str) -> Result<Model> {
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(bad("missing or unsupported header"));
    }
    let mut field = |key: &str| -> Result<String> {
        let line = lines.next().ok_or_else(|| bad(format!("missing {key}")))?;
        let (k, v) = line.split_once(' ').ok_or_else(|| bad(format!("malformed line {line:?}")))?;
        if k != key {
            return Err(bad(format!("expected {key}, found {k}")));
        }
        Ok(v.to_string())
    };
    let num = |s: String| s.parse::<usize>().map_err(|e| bad(e.to_string()));
    let kind = match field("kind")?.as_str() {
        "gcn" => LayerKind::Gcn,
        "gin" => LayerKind::Gin,
        k => return Err(bad(format!("unknown kind {k}"))),
    };
    let input_dim = num(field("input_dim")?)?;
    let hidden = num(field("hidden")?)?;
    let layers = num(field("layers")?)?;
    let num_classes = num(field("num_classes")?)?;
    let readout = match field("readout")?.as_str() {
        "sum" => PoolMode::Sum,
        "mean" => PoolMode::Mean,
        r => return Err(bad(format!("unknown readout {r}"))),
    };
    let propagation = match field("propagation")?.as_str() {
        "norm_adjacency" => Propagation::NormAdjacency,
        "laplacian" => Propagation::Laplacian,
        p => return Err(bad(format!("unknown propagation {p}"))),
    };
    let epsilon = f64::from_bits(u64::from_str_radix(&field("epsilon")?, 16).map_err(|e| bad(e.to_string()))?);
    let train_epsilon = field("train_epsilon")? == "true";
    let count = num(field("params")?)?;
    let config = ModelConfig {
        kind,
        input_dim,
        hidden,
        layers,
        num_classes,
        readout,
        propagation,
        epsilon,
        train_epsilon,
    };
    let mut model = Model::new(config, 0)?;
    let names: Vec<String> = model.named_parameters().into_iter().map(|(n, _)| n).collect();
    if names.len() != count {
        return Err(bad(format!("expected {} parameters, file lists {count}", names.len())));
    }
    for (name, p) in names.iter().zip(model.parameters_mut()) {
        let header = lines.next().ok_or_else(|| bad("truncated parameter list"))?;
        let parts: Vec<&str> = header.split(' ').collect();
        if parts.len() != 3 || parts[0] != name {
            return Err(bad(format!("expected parameter {name}, found {header:?}")));
        }
        let rows = num(parts[1].to_string())?;
        let cols = num(parts[2].to_string())?;
        if [rows, cols] != p.shape() {
            return Err(bad(format!("shape of {name} is {rows}x{cols}, model expects {:?}", p.shape())));
        }
        let data = lines.next().ok_or_else(|| bad(format!("missing values for {name}")))?;
        let values = data
            .split_whitespace()
            .map(|h| u64::from_str_radix(h, 16).map(f64::from_bits).map_err(|e| bad(e.to_string())))
            .collect::<Result<Vec<f64>>>()?;
        p.values = Array2::from_shape_vec((rows, cols), values).map_err(|e| bad(format!("{name}: {e}")))?;
        p.zero_grad();
    }
    Ok(model)
}
