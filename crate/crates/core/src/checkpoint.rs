//! Parameter checkpoints.
//!
//! A checkpoint is a UTF-8 JSON document:
//!
//! ```text
//! {
//!   "format": "kes-checkpoint",
//!   "version": 1,
//!   "dims": { "word_dim": .., "text_dim": .., "graph_dim": .., "gcn_layers": ..,
//!             "hidden_dim": .., "num_classes": .., "use_graph": .., "post_linear": .. },
//!   "tensors": [ { "name": "text.projection", "shape": [rows, cols], "data": [..] }, .. ]
//! }
//! ```
//!
//! Tensors appear in [`ModelParams::tensors`] order with row-major data.
//! Floats are written in shortest round-trip form, so save followed by load
//! reproduces every bit, and equal parameters give byte-identical files.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{KesError, Result};
use crate::model::{ModelDims, ModelParams};

pub const CHECKPOINT_FORMAT: &str = "kes-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: [usize; 2],
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Container {
    format: String,
    version: u32,
    dims: ModelDims,
    tensors: Vec<TensorRecord>,
}

pub fn to_json(params: &ModelParams) -> Result<String> {
    params.check()?;
    let tensors = params
        .tensors()
        .into_iter()
        .map(|(name, t)| {
            if let Some(bad) = t.iter().find(|x| !x.is_finite()) {
                return Err(KesError::Data(format!(
                    "tensor {name} holds non-finite value {bad}"
                )));
            }
            Ok(TensorRecord {
                name,
                shape: [t.nrows(), t.ncols()],
                data: t.iter().copied().collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let container = Container {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        dims: params.dims,
        tensors,
    };
    let mut text = serde_json::to_string(&container).map_err(|e| KesError::Internal(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub fn from_json(text: &str, origin: &str) -> Result<ModelParams> {
    let bad = |message: String| KesError::Parse {
        path: origin.into(),
        line: 1,
        message,
    };
    let container: Container = serde_json::from_str(text).map_err(|e| KesError::Parse {
        path: origin.into(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if container.format != CHECKPOINT_FORMAT {
        return Err(bad(format!("not a checkpoint (format {:?})", container.format)));
    }
    if container.version != CHECKPOINT_VERSION {
        return Err(bad(format!(
            "unsupported checkpoint version {}",
            container.version
        )));
    }
    container.dims.validate()?;
    let mut params = ModelParams::zeros(container.dims);
    let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
    if names.len() != container.tensors.len() {
        return Err(bad(format!(
            "expected {} tensors, found {}",
            names.len(),
            container.tensors.len()
        )));
    }
    for ((slot, name), rec) in params
        .tensors_mut()
        .into_iter()
        .zip(&names)
        .zip(container.tensors)
    {
        if &rec.name != name {
            return Err(bad(format!("expected tensor {name}, found {}", rec.name)));
        }
        if [slot.nrows(), slot.ncols()] != rec.shape {
            return Err(bad(format!(
                "tensor {name} has shape {:?}, dims require [{}, {}]",
                rec.shape,
                slot.nrows(),
                slot.ncols()
            )));
        }
        *slot = Array2::from_shape_vec((rec.shape[0], rec.shape[1]), rec.data)
            .map_err(|e| bad(format!("tensor {name}: {e}")))?;
    }
    Ok(params)
}

pub fn save(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = to_json(params)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| KesError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| KesError::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<ModelParams> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| KesError::io(path, e))?;
    from_json(&text, &path.display().to_string())
}

/// Loads a checkpoint and requires its dims to equal `expected`.
pub fn load_compatible(path: impl AsRef<Path>, expected: &ModelDims) -> Result<ModelParams> {
    let params = load(path.as_ref())?;
    if &params.dims != expected {
        return Err(KesError::Config(format!(
            "checkpoint {} has dims {:?}, configuration requires {:?}",
            path.as_ref().display(),
            params.dims,
            expected
        )));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::tiny_dims;

    #[test]
    fn round_trip_is_bit_exact() {
        let p = ModelParams::random(tiny_dims(), 3);
        let text = to_json(&p).unwrap();
        let q = from_json(&text, "mem").unwrap();
        assert_eq!(p, q);
        for ((_, a), (_, b)) in p.tensors().iter().zip(q.tensors()) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert_eq!(text, to_json(&q).unwrap());
    }

    #[test]
    fn text_only_round_trip() {
        let dims = ModelDims {
            use_graph: false,
            ..tiny_dims()
        };
        let p = ModelParams::random(dims, 1);
        assert_eq!(from_json(&to_json(&p).unwrap(), "mem").unwrap(), p);
    }

    #[test]
    fn rejects_tampered_shapes_and_names() {
        let p = ModelParams::random(tiny_dims(), 3);
        let text = to_json(&p).unwrap();
        let renamed = text.replace("graph.readout", "graph.readin");
        assert!(matches!(from_json(&renamed, "x"), Err(KesError::Parse { .. })));
        let versioned = text.replace("\"version\":1", "\"version\":9");
        assert!(from_json(&versioned, "x").is_err());
        assert!(from_json("{", "x").is_err());
    }

    #[test]
    fn incompatible_dims_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        save(&ModelParams::random(tiny_dims(), 0), &path).unwrap();
        let other = ModelDims {
            hidden_dim: 5,
            ..tiny_dims()
        };
        assert!(matches!(load_compatible(&path, &other), Err(KesError::Config(_))));
        assert!(load_compatible(&path, &tiny_dims()).is_ok());
    }
}
