//! Versioned JSON serialization for networks.
//!
//! Weights are stored row-major per layer. serde_json prints doubles with
//! shortest round-trip precision, so save → load is bit-exact for finite
//! values.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::path::Path;

use super::{ActivationKind, Mlp};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    layer_sizes: Vec<usize>,
    activations: Vec<ActivationKind>,
    /// Row-major entries of each weight matrix.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            layer_sizes: self.layer_sizes.clone(),
            activations: self.activations.clone(),
            weights: self
                .weights
                .iter()
                .map(|w| w.iter().copied().collect())
                .collect(),
            biases: self.biases.iter().map(|b| b.to_vec()).collect(),
        };
        serde_json::to_string_pretty(&file).expect("model serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Mlp> {
        let file: ModelFile = serde_json::from_str(text)
            .map_err(|e| Error::format("<json>", e.to_string()))?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::format(
                "<json>",
                format!(
                    "unsupported format_version {} (expected {MODEL_FORMAT_VERSION})",
                    file.format_version
                ),
            ));
        }
        if file.layer_sizes.len() < 2 {
            return Err(Error::format("<json>", "layer_sizes too short"));
        }
        let n_layers = file.layer_sizes.len() - 1;
        if file.weights.len() != n_layers || file.biases.len() != n_layers {
            return Err(Error::format(
                "<json>",
                format!(
                    "expected {n_layers} weight/bias layers, got {}/{}",
                    file.weights.len(),
                    file.biases.len()
                ),
            ));
        }
        let mut weights = Vec::with_capacity(n_layers);
        let mut biases = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let (rows, cols) = (file.layer_sizes[l + 1], file.layer_sizes[l]);
            let w = Array2::from_shape_vec((rows, cols), file.weights[l].clone())
                .map_err(|_| {
                    Error::format(
                        "<json>",
                        format!("weight layer {l} is not {rows}x{cols} entries"),
                    )
                })?;
            weights.push(w);
            if file.biases[l].len() != rows {
                return Err(Error::format(
                    "<json>",
                    format!("bias layer {l} has wrong length"),
                ));
            }
            biases.push(Array1::from_vec(file.biases[l].clone()));
        }
        Mlp::from_parts(file.layer_sizes, weights, biases, file.activations)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Mlp> {
        let text = std::fs::read_to_string(path)?;
        Mlp::from_json(&text).map_err(|e| match e {
            Error::Format { detail, .. } => Error::format(path.display().to_string(), detail),
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::ActivationKind;

    #[test]
    fn json_round_trip_is_bit_exact() {
        let mlp = Mlp::init(
            &[5, 3, 2],
            &[ActivationKind::Tanh, ActivationKind::Logistic],
            99,
        )
        .unwrap();
        let restored = Mlp::from_json(&mlp.to_json()).unwrap();
        assert_eq!(mlp, restored);
    }

    #[test]
    fn file_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let mlp = Mlp::init(&[4, 2, 4], &[ActivationKind::Tanh, ActivationKind::Identity], 5)
            .unwrap();
        mlp.save(&path).unwrap();
        assert_eq!(Mlp::load(&path).unwrap(), mlp);
    }

    #[test]
    fn rejects_wrong_version_and_bad_shapes() {
        let mlp = Mlp::init(&[2, 2], &[ActivationKind::Identity], 1).unwrap();
        let good = mlp.to_json();
        let bad_version = good.replace("\"format_version\": 1", "\"format_version\": 9");
        assert!(Mlp::from_json(&bad_version).is_err());
        let bad_shape = good.replace("\"layer_sizes\": [\n    2,\n    2\n  ]", "\"layer_sizes\": [\n    2,\n    3\n  ]");
        assert!(Mlp::from_json(&bad_shape).is_err());
        assert!(Mlp::from_json("{}").is_err());
    }
}
