//! Text checkpoint format:
//!
//! ```text
//! adgan-checkpoint 1
//! # optional comment lines
//! arch survey_groups = 18,17,17
//! ...
//! params 14
//! gen.cm.g0.w 3 16 v v v ...
//! ...
//! end
//! ```
//!
//! Values are written with 17 significant digits, which round-trips every
//! `f64` exactly.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adgan::{Architecture, ParameterSet};
use crate::diffnet::Matrix;
use crate::error::{Error, Result};

const MAGIC: &str = "adgan-checkpoint 1";

pub fn checkpoint_text(params: &ParameterSet) -> String {
    checkpoint_text_with(params, None)
}

/// Checkpoint text with a `# comment` line after the format header.
pub fn checkpoint_text_with(params: &ParameterSet, comment: Option<&str>) -> String {
    let mut out = format!("{MAGIC}\n");
    if let Some(c) = comment {
        out.push_str(&format!("# {c}\n"));
    }
    for (k, v) in params.arch.to_kv() {
        out.push_str(&format!("arch {k} = {v}\n"));
    }
    out.push_str(&format!("params {}\n", params.store.len()));
    for (_, name, m) in params.store.iter() {
        out.push_str(&format!("{name} {} {}", m.rows(), m.cols()));
        for v in m.data() {
            out.push_str(&format!(" {v:.16e}"));
        }
        out.push('\n');
    }
    out.push_str("end\n");
    out
}

pub fn checkpoint_save(params: &ParameterSet, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint_text(params)).map_err(|e| Error::io(path, e))
}

pub fn checkpoint_save_with(params: &ParameterSet, path: &Path, comment: &str) -> Result<()> {
    std::fs::write(path, checkpoint_text_with(params, Some(comment))).map_err(|e| Error::io(path, e))
}

fn schema(msg: impl Into<String>) -> Error {
    Error::Schema(msg.into())
}

pub fn parse_checkpoint(text: &str) -> Result<ParameterSet> {
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(schema("missing checkpoint header"));
    }
    let mut arch = Architecture::default();
    let count = loop {
        let line = lines.next().ok_or_else(|| schema("truncated before parameter block"))?;
        if line.starts_with('#') {
            continue;
        }
        if let Some(kv) = line.strip_prefix("arch ") {
            let (k, v) = kv
                .split_once(" = ")
                .ok_or_else(|| schema(format!("bad arch line {line:?}")))?;
            if !arch.apply_kv(k, v)? {
                return Err(schema(format!("unknown arch key {k:?}")));
            }
        } else if let Some(n) = line.strip_prefix("params ") {
            break n
                .parse::<usize>()
                .map_err(|_| schema(format!("bad parameter count {n:?}")))?;
        } else {
            return Err(schema(format!("unexpected line {line:?}")));
        }
    };
    arch.validate()?;

    // A fresh initialisation fixes the expected names, order and shapes.
    let mut params = ParameterSet::init(arch, &mut ChaCha8Rng::seed_from_u64(0))?;
    if count != params.store.len() {
        return Err(schema(format!(
            "checkpoint lists {count} parameters, architecture has {}",
            params.store.len()
        )));
    }
    let ids: Vec<_> = params.store.ids().collect();
    for id in ids {
        let expected = params.store.name(id).to_string();
        let line = lines
            .next()
            .ok_or_else(|| schema(format!("truncated at parameter {expected}")))?;
        let mut fields = line.split(' ');
        let name = fields.next().unwrap_or("");
        if name != expected {
            return Err(schema(format!("expected parameter {expected}, found {name:?}")));
        }
        let mut dim = || -> Result<usize> {
            fields
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| schema(format!("{expected}: bad shape")))
        };
        let (rows, cols) = (dim()?, dim()?);
        if (rows, cols) != params.store.get(id).shape() {
            return Err(schema(format!(
                "{expected}: shape {rows}x{cols}, expected {:?}",
                params.store.get(id).shape()
            )));
        }
        let values = fields
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| schema(format!("{expected}: bad value {v:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != rows * cols {
            return Err(schema(format!(
                "{expected}: {} values, expected {}",
                values.len(),
                rows * cols
            )));
        }
        *params.store.get_mut(id) = Matrix::new(rows, cols, values)?;
    }
    if lines.next() != Some("end") {
        return Err(schema("missing end marker"));
    }
    Ok(params)
}

pub fn checkpoint_load(path: &Path) -> Result<ParameterSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&text)
}
