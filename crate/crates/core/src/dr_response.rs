//! Response-space dimensionality reduction: the symmetric 200-…-m-…-200
//! autoencoder, its encoder/decoder halves, and the bottleneck sweep.

use ndarray::{Array1, Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nnet::{self, ActivationKind, Mlp, Samples, TrainConfig, TrainReport};
use crate::surrogate::{ResponseSpectrum, RESPONSE_DIM};

/// A trained symmetric autoencoder over reflectance spectra. The bottleneck
/// (the unique minimum-width layer) defines the reduced response space.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseAutoencoder {
    mlp: Mlp,
    bottleneck: usize,
}

/// Validates an autoencoder architecture: symmetric layer sizes, spectrum
/// width at both ends, and a unique strict minimum strictly inside.
/// Returns the bottleneck layer index.
fn validate_architecture(layer_sizes: &[usize]) -> Result<usize> {
    if layer_sizes.len() < 3 {
        return Err(Error::InvalidConfig(
            "autoencoder needs at least one hidden layer".into(),
        ));
    }
    if layer_sizes.first() != layer_sizes.last() {
        return Err(Error::InvalidConfig(format!(
            "autoencoder input and output sizes differ: {layer_sizes:?}"
        )));
    }
    if *layer_sizes.first().unwrap() != RESPONSE_DIM {
        return Err(Error::InvalidConfig(format!(
            "response autoencoder must start and end at {RESPONSE_DIM}, got {layer_sizes:?}"
        )));
    }
    if layer_sizes.iter().rev().ne(layer_sizes.iter()) {
        return Err(Error::InvalidConfig(format!(
            "autoencoder layer sizes must be symmetric, got {layer_sizes:?}"
        )));
    }
    let (bottleneck, &m) = layer_sizes
        .iter()
        .enumerate()
        .min_by_key(|(_, &s)| s)
        .expect("non-empty");
    if layer_sizes.iter().filter(|&&s| s == m).count() != 1 {
        return Err(Error::InvalidConfig(format!(
            "bottleneck must be the unique minimum layer, got {layer_sizes:?}"
        )));
    }
    Ok(bottleneck)
}

/// Activation policy for all reconstruction networks: tanh hidden layers,
/// identity at the bottleneck (unbounded reduced coordinates), logistic on
/// the reflectance output.
fn activations_for(layer_sizes: &[usize], bottleneck: usize) -> Vec<ActivationKind> {
    let last = layer_sizes.len() - 1;
    (1..layer_sizes.len())
        .map(|i| {
            if i == bottleneck {
                ActivationKind::Identity
            } else if i == last {
                ActivationKind::Logistic
            } else {
                ActivationKind::Tanh
            }
        })
        .collect()
}

impl ResponseAutoencoder {
    /// Wraps a trained network, recomputing and validating the bottleneck.
    pub fn from_mlp(mlp: Mlp) -> Result<ResponseAutoencoder> {
        let bottleneck = validate_architecture(mlp.layer_sizes())?;
        Ok(ResponseAutoencoder { mlp, bottleneck })
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    /// Reduced-response dimensionality m.
    pub fn bottleneck_dim(&self) -> usize {
        self.mlp.layer_sizes()[self.bottleneck]
    }

    pub fn bottleneck_index(&self) -> usize {
        self.bottleneck
    }

    /// The encoder half as a standalone network (bit-identical parameters).
    pub fn encoder(&self) -> Mlp {
        self.mlp.sub_network(0..self.bottleneck).expect("valid split")
    }

    /// The decoder half as a standalone network (bit-identical parameters).
    pub fn decoder(&self) -> Mlp {
        self.mlp
            .sub_network(self.bottleneck..self.mlp.num_layers())
            .expect("valid split")
    }

    /// Reduced coordinates of one spectrum: the forward pass truncated at
    /// the bottleneck.
    pub fn encode(&self, spectrum: &ResponseSpectrum) -> Result<Array1<f64>> {
        let row = Array2::from_shape_vec((1, spectrum.len()), spectrum.values().to_vec())
            .expect("row shape");
        Ok(self.encode_batch(row.view())?.row(0).to_owned())
    }

    /// Encodes a batch of spectra (one per row).
    pub fn encode_batch(&self, spectra: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.mlp.forward_rows_stable(spectra, 0..self.bottleneck)
    }

    /// Reconstructs a spectrum from reduced coordinates. Logistic output
    /// keeps every sample in (0, 1).
    pub fn decode(&self, code: &Array1<f64>) -> Result<ResponseSpectrum> {
        let view = code.view();
        let row = view.to_shape((1, code.len())).expect("row shape");
        let out = self
            .mlp
            .forward_rows_stable(row.view(), self.bottleneck..self.mlp.num_layers())?;
        ResponseSpectrum::new(out.row(0).to_vec())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.mlp.save(path)
    }

    pub fn load(path: &Path) -> Result<ResponseAutoencoder> {
        ResponseAutoencoder::from_mlp(Mlp::load(path)?)
    }
}

/// Trains the response autoencoder on spectra alone (one spectrum per row).
pub fn train_response_autoencoder(
    train_spectra: &Array2<f64>,
    val_spectra: &Array2<f64>,
    layer_sizes: &[usize],
    config: &TrainConfig,
) -> Result<(ResponseAutoencoder, TrainReport)> {
    let bottleneck = validate_architecture(layer_sizes)?;
    let activations = activations_for(layer_sizes, bottleneck);
    let mlp = Mlp::init(layer_sizes, &activations, config.seed)?;
    let train_set = Samples::autoencoding(train_spectra.clone())?;
    let val_set = Samples::autoencoding(val_spectra.clone())?;
    let (trained, report) = nnet::train(mlp, &train_set, &val_set, config)?;
    Ok((
        ResponseAutoencoder {
            mlp: trained,
            bottleneck,
        },
        report,
    ))
}

/// Standard architecture 200-50-m-50-200 built from the half-template
/// `[200, 50]` mirrored around the bottleneck m.
pub fn symmetric_architecture(outer_template: &[usize], m: usize) -> Vec<usize> {
    let mut sizes: Vec<usize> = outer_template.to_vec();
    sizes.push(m);
    sizes.extend(outer_template.iter().rev());
    sizes
}

/// Trains one autoencoder per bottleneck dimension (same seed policy) and
/// reports (m, best validation MSE) per dimension.
pub fn sweep_bottleneck(
    train_spectra: &Array2<f64>,
    val_spectra: &Array2<f64>,
    dims: &[usize],
    outer_template: &[usize],
    config: &TrainConfig,
) -> Result<Vec<(usize, f64)>> {
    if dims.is_empty() {
        return Err(Error::Empty("bottleneck sweep dims".into()));
    }
    dims.par_iter()
        .map(|&m| {
            let sizes = symmetric_architecture(outer_template, m);
            let (_, report) =
                train_response_autoencoder(train_spectra, val_spectra, &sizes, config)?;
            Ok((m, report.final_val_mse))
        })
        .collect()
}

/// One row of a bottleneck-sweep result file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub m: usize,
    pub seed: u64,
    pub val_mse: f64,
}
