//! Text checkpoints:
//!
//! ```text
//! treecalc-checkpoint 1
//! config cell=mtree_lstm
//! meta seed=7
//! param add.i.W 25,25 0.013 -0.2 ...
//! ```
//!
//! Values use the shortest representation that parses back to the same
//! `f64`, so a save/load cycle is bit-exact.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::autodiff::Tensor;
use crate::cells::ParamBank;

use super::{Model, ModelConfig, ModelError};

pub const CHECKPOINT_MAGIC: &str = "treecalc-checkpoint 1";

/// A loaded checkpoint: the model plus free-form metadata.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Model,
    pub meta: BTreeMap<String, String>,
}

pub fn write_checkpoint(mut w: impl Write, model: &Model, meta: &BTreeMap<String, String>) -> std::io::Result<()> {
    writeln!(w, "{CHECKPOINT_MAGIC}")?;
    for (k, v) in model.config().pairs() {
        writeln!(w, "config {k}={v}")?;
    }
    for (k, v) in meta {
        writeln!(w, "meta {k}={v}")?;
    }
    for (_, name, t) in model.bank().iter() {
        let shape: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        write!(w, "param {name} {}", shape.join(","))?;
        for v in t.data() {
            write!(w, " {v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_checkpoint(r: impl BufRead) -> Result<Checkpoint, ModelError> {
    let mut config = ModelConfig::default();
    let mut meta = BTreeMap::new();
    let mut bank = ParamBank::new();
    let mut saw_magic = false;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let bad = |message: String| ModelError::Checkpoint { line: i + 1, message };
        if !saw_magic {
            if line != CHECKPOINT_MAGIC {
                return Err(bad(format!("expected `{CHECKPOINT_MAGIC}`")));
            }
            saw_magic = true;
            continue;
        }
        let (kind, rest) = line.split_once(' ').ok_or_else(|| bad("malformed line".into()))?;
        match kind {
            "config" | "meta" => {
                let (k, v) = rest.split_once('=').ok_or_else(|| bad("expected key=value".into()))?;
                if kind == "meta" {
                    meta.insert(k.to_string(), v.to_string());
                } else if !config.set(k, v).map_err(|e| bad(e.to_string()))? {
                    return Err(bad(format!("unknown config key `{k}`")));
                }
            }
            "param" => {
                let mut fields = rest.split(' ');
                let name = fields.next().ok_or_else(|| bad("missing name".into()))?;
                let shape = fields
                    .next()
                    .ok_or_else(|| bad("missing shape".into()))?
                    .split(',')
                    .map(|d| d.parse::<usize>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| bad(format!("bad shape: {e}")))?;
                let data = fields
                    .map(|v| v.parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| bad(format!("bad value: {e}")))?;
                let t = Tensor::new(shape, data).map_err(|e| bad(e.to_string()))?;
                bank.insert(name, t).map_err(|e| bad(e.to_string()))?;
            }
            other => return Err(bad(format!("unknown record `{other}`"))),
        }
    }
    if !saw_magic {
        return Err(ModelError::Checkpoint {
            line: 1,
            message: "empty checkpoint".into(),
        });
    }
    Ok(Checkpoint {
        model: Model::from_bank(config, bank)?,
        meta,
    })
}
