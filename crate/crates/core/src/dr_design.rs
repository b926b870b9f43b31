//! Design-space dimensionality reduction via the pseudo-encoder, and the
//! assembled forward model.
//!
//! The pseudo-encoder maps scaled design vectors (10) to reduced response
//! codes (m) through a bottleneck of width k < 10; its first half is the
//! design encoder defining the reduced design space. Cascading the
//! pseudo-encoder with the frozen decoder of a trained response autoencoder
//! yields a complete design → spectrum forward model.

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::dataset::{Dataset, DesignRanges, Scaler};
use crate::dr_response::ResponseAutoencoder;
use crate::error::{Error, Result};
use crate::nnet::{self, mse, ActivationKind, Mlp, Samples, TrainConfig, TrainReport};
use crate::surrogate::{DesignVector, ResponseSpectrum, DESIGN_DIM};

pub const PSEUDO_ENCODER_FORMAT_VERSION: u32 = 1;

/// Default pseudo-encoder layer sizes for a given bottleneck k and reduced
/// response dimension m: design encoder 10-20-15-k, mapper k-20-30-20-m.
pub fn default_architecture(k: usize, m: usize) -> Vec<usize> {
    vec![DESIGN_DIM, 20, 15, k, 20, 30, 20, m]
}

/// Validates pseudo-encoder layer sizes: input width 10, an interior
/// bottleneck that is the unique strict minimum, and k < 10.
/// Returns the bottleneck index.
fn validate_architecture(layer_sizes: &[usize]) -> Result<usize> {
    if layer_sizes.len() < 3 {
        return Err(Error::InvalidConfig(
            "pseudo-encoder needs at least one interior layer".into(),
        ));
    }
    if layer_sizes[0] != DESIGN_DIM {
        return Err(Error::InvalidConfig(format!(
            "pseudo-encoder input must be {DESIGN_DIM} design parameters, got {layer_sizes:?}"
        )));
    }
    let interior = &layer_sizes[1..layer_sizes.len() - 1];
    let (offset, &k) = interior
        .iter()
        .enumerate()
        .min_by_key(|(_, &s)| s)
        .expect("non-empty interior");
    let bottleneck = offset + 1;
    if layer_sizes.iter().filter(|&&s| s == k).count() != 1 {
        return Err(Error::InvalidConfig(format!(
            "bottleneck must be the unique minimum layer, got {layer_sizes:?}"
        )));
    }
    if k >= DESIGN_DIM {
        return Err(Error::InvalidConfig(format!(
            "reduced design dimension k = {k} must be < {DESIGN_DIM}"
        )));
    }
    Ok(bottleneck)
}

fn activations_for(layer_sizes: &[usize], bottleneck: usize) -> Vec<ActivationKind> {
    let last = layer_sizes.len() - 1;
    (1..layer_sizes.len())
        .map(|i| {
            if i == bottleneck || i == last {
                // codes on both sides are unbounded
                ActivationKind::Identity
            } else {
                ActivationKind::Tanh
            }
        })
        .collect()
}

/// A trained pseudo-encoder with the scaler that normalizes raw designs.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoEncoder {
    mlp: Mlp,
    bottleneck: usize,
    ranges: DesignRanges,
    scaler: Scaler,
}

impl PseudoEncoder {
    pub fn from_parts(mlp: Mlp, ranges: DesignRanges) -> Result<PseudoEncoder> {
        let bottleneck = validate_architecture(mlp.layer_sizes())?;
        ranges.validate()?;
        Ok(PseudoEncoder {
            mlp,
            bottleneck,
            scaler: Scaler::from_ranges(&ranges),
            ranges,
        })
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn ranges(&self) -> &DesignRanges {
        &self.ranges
    }

    pub fn scaler(&self) -> &Scaler {
        &self.scaler
    }

    /// Reduced design dimensionality k.
    pub fn reduced_design_dim(&self) -> usize {
        self.mlp.layer_sizes()[self.bottleneck]
    }

    /// Reduced response dimensionality m (the output width).
    pub fn reduced_response_dim(&self) -> usize {
        self.mlp.output_dim()
    }

    pub fn bottleneck_index(&self) -> usize {
        self.bottleneck
    }

    /// The design-encoder half (10 → k) as a standalone network.
    pub fn design_encoder(&self) -> Mlp {
        self.mlp.sub_network(0..self.bottleneck).expect("valid split")
    }

    /// Reduced design coordinates of one design (scaling applied
    /// internally).
    pub fn encode_design(&self, design: &DesignVector) -> Result<Array1<f64>> {
        let scaled = self.scaler.scale(design);
        let row = Array2::from_shape_vec((1, DESIGN_DIM), scaled.to_vec()).expect("row shape");
        Ok(self
            .mlp
            .forward_rows_stable(row.view(), 0..self.bottleneck)?
            .row(0)
            .to_owned())
    }

    /// Reduced design coordinates for pre-scaled rows. Row results are
    /// independent of the batching, so search scoring and its brute-force
    /// oracle agree exactly.
    pub fn encode_scaled_rows(&self, scaled: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.mlp.forward_rows_stable(scaled, 0..self.bottleneck)
    }

    /// Full pseudo-encoder pass: scaled design rows → predicted reduced
    /// response codes.
    pub fn predict_codes(&self, scaled: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.mlp.forward_rows_stable(scaled, 0..self.mlp.num_layers())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = PseudoEncoderFile {
            format_version: PSEUDO_ENCODER_FORMAT_VERSION,
            ranges: self.ranges,
            model: serde_json::from_str(&self.mlp.to_json()).expect("model json round-trips"),
        };
        std::fs::write(
            path,
            serde_json::to_string_pretty(&file).expect("pseudo-encoder serializes"),
        )?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<PseudoEncoder> {
        let text = std::fs::read_to_string(path)?;
        let file: PseudoEncoderFile = serde_json::from_str(&text)
            .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
        if file.format_version != PSEUDO_ENCODER_FORMAT_VERSION {
            return Err(Error::format(
                path.display().to_string(),
                format!("unsupported format_version {}", file.format_version),
            ));
        }
        let mlp = Mlp::from_json(&file.model.to_string())
            .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
        PseudoEncoder::from_parts(mlp, file.ranges)
    }
}

#[derive(Serialize, Deserialize)]
struct PseudoEncoderFile {
    format_version: u32,
    ranges: DesignRanges,
    model: serde_json::Value,
}

/// Trains the pseudo-encoder against reduced-response targets computed once
/// with the frozen response encoder.
pub fn train_pseudo_encoder(
    train: &Dataset,
    val: &Dataset,
    response_ae: &ResponseAutoencoder,
    layer_sizes: &[usize],
    config: &TrainConfig,
) -> Result<(PseudoEncoder, TrainReport)> {
    let bottleneck = validate_architecture(layer_sizes)?;
    let m = *layer_sizes.last().unwrap();
    if m != response_ae.bottleneck_dim() {
        return Err(Error::shape(
            format!(
                "output width {} (response bottleneck)",
                response_ae.bottleneck_dim()
            ),
            format!("{m}"),
        ));
    }
    let ranges = train.manifest.ranges;
    let scaler = Scaler::from_ranges(&ranges);

    let train_inputs = scaler.scale_matrix(&train.design_matrix());
    let val_inputs = scaler.scale_matrix(&val.design_matrix());
    let train_targets = response_ae.encode_batch(train.spectrum_matrix().view())?;
    let val_targets = response_ae.encode_batch(val.spectrum_matrix().view())?;

    let activations = activations_for(layer_sizes, bottleneck);
    let mlp = Mlp::init(layer_sizes, &activations, config.seed)?;
    let (trained, report) = nnet::train(
        mlp,
        &Samples::new(train_inputs, train_targets)?,
        &Samples::new(val_inputs, val_targets)?,
        config,
    )?;
    Ok((
        PseudoEncoder {
            mlp: trained,
            bottleneck,
            scaler,
            ranges,
        },
        report,
    ))
}

/// The pseudo-encoder cascaded with the frozen decoder half of the response
/// autoencoder: a full design → spectrum model.
#[derive(Debug, Clone)]
pub struct FullForwardModel {
    pseudo_encoder: PseudoEncoder,
    decoder: Mlp,
}

impl FullForwardModel {
    pub fn new(
        pseudo_encoder: PseudoEncoder,
        response_ae: &ResponseAutoencoder,
    ) -> Result<FullForwardModel> {
        if pseudo_encoder.reduced_response_dim() != response_ae.bottleneck_dim() {
            return Err(Error::shape(
                format!("reduced response dim {}", response_ae.bottleneck_dim()),
                format!("{}", pseudo_encoder.reduced_response_dim()),
            ));
        }
        Ok(FullForwardModel {
            pseudo_encoder,
            decoder: response_ae.decoder(),
        })
    }

    pub fn pseudo_encoder(&self) -> &PseudoEncoder {
        &self.pseudo_encoder
    }

    /// The frozen decoder half (bit-identical to the autoencoder's).
    pub fn decoder(&self) -> &Mlp {
        &self.decoder
    }

    /// Predicted spectrum of one design.
    pub fn predict(&self, design: &DesignVector) -> Result<ResponseSpectrum> {
        let scaled = self.pseudo_encoder.scaler.scale(design);
        let row = Array2::from_shape_vec((1, DESIGN_DIM), scaled.to_vec()).expect("row shape");
        let out = self.predict_scaled_rows(row.view())?;
        ResponseSpectrum::new(out.row(0).to_vec())
    }

    /// Predicted spectra for pre-scaled design rows.
    pub fn predict_scaled_rows(&self, scaled: ArrayView2<f64>) -> Result<Array2<f64>> {
        let codes = self.pseudo_encoder.predict_codes(scaled)?;
        self.decoder
            .forward_rows_stable(codes.view(), 0..self.decoder.num_layers())
    }

    /// Validation spectral MSE of the composed model on a dataset.
    pub fn spectral_mse(&self, data: &Dataset) -> Result<f64> {
        let scaled = self
            .pseudo_encoder
            .scaler
            .scale_matrix(&data.design_matrix());
        let predicted = self.predict_scaled_rows(scaled.view())?;
        mse(predicted.view(), data.spectrum_matrix().view())
    }
}

/// One cell of the (k, m) sweep grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridPoint {
    pub k: usize,
    pub m: usize,
    pub spectral_mse: f64,
}

/// Trains one pseudo-encoder per (k, autoencoder) pair and reports the
/// validation spectral MSE of the assembled forward model for each cell.
pub fn sweep_design_dim(
    train: &Dataset,
    val: &Dataset,
    autoencoders: &[ResponseAutoencoder],
    k_values: &[usize],
    config: &TrainConfig,
) -> Result<Vec<GridPoint>> {
    if k_values.is_empty() || autoencoders.is_empty() {
        return Err(Error::Empty("design-dimension sweep grid".into()));
    }
    let mut grid = Vec::new();
    for ae in autoencoders {
        let m = ae.bottleneck_dim();
        for &k in k_values {
            let sizes = default_architecture(k, m);
            let (pe, _) = train_pseudo_encoder(train, val, ae, &sizes, config)?;
            let model = FullForwardModel::new(pe, ae)?;
            grid.push(GridPoint {
                k,
                m,
                spectral_mse: model.spectral_mse(val)?,
            });
        }
    }
    Ok(grid)
}

/// Mean squared deviation of targets from their mean — the loss of the best
/// constant predictor, used as a sanity baseline for trained models.
pub fn constant_predictor_baseline(targets: ArrayView2<f64>) -> Result<f64> {
    if targets.nrows() == 0 {
        return Err(Error::Empty("baseline over zero instances".into()));
    }
    let mean = targets.mean_axis(ndarray::Axis(0)).expect("non-empty");
    let broadcast = Array2::from_shape_fn(targets.dim(), |(_, j)| mean[j]);
    mse(broadcast.view(), targets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate;
    use crate::dr_response::train_response_autoencoder;
    use crate::materials::MaterialDb;

    fn quick_pipeline() -> (Dataset, Dataset, ResponseAutoencoder) {
        let ds = generate(160, 33, &DesignRanges::default(), &MaterialDb::default(), "t").unwrap();
        let (train, val) = ds.split(0.75, 1).unwrap();
        let config = TrainConfig {
            max_epochs: 30,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let (ae, _) = train_response_autoencoder(
            &train.spectrum_matrix(),
            &val.spectrum_matrix(),
            &[200, 20, 4, 20, 200],
            &config,
        )
        .unwrap();
        (train, val, ae)
    }

    #[test]
    fn architecture_validation_rules() {
        assert_eq!(
            validate_architecture(&[10, 20, 15, 5, 20, 30, 20, 10]).unwrap(),
            3
        );
        assert_eq!(validate_architecture(&[10, 4, 10, 50, 20, 10]).unwrap(), 1);
        // k must be < 10: a 10-wide interior minimum is rejected
        assert!(validate_architecture(&[10, 20, 15, 10, 20, 30, 20, 12]).is_err());
        // duplicated minimum is ambiguous
        assert!(validate_architecture(&[10, 5, 5, 10]).is_err());
        // wrong input width
        assert!(validate_architecture(&[8, 4, 10]).is_err());
    }

    #[test]
    fn default_architecture_matches_chosen_chain() {
        assert_eq!(
            default_architecture(5, 10),
            vec![10, 20, 15, 5, 20, 30, 20, 10]
        );
    }

    #[test]
    fn trained_pe_beats_constant_baseline_and_is_deterministic() {
        let (train, val, ae) = quick_pipeline();
        let config = TrainConfig {
            learning_rate: 5e-3,
            max_epochs: 600,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let sizes = default_architecture(3, 4);
        let (pe, report) = train_pseudo_encoder(&train, &val, &ae, &sizes, &config).unwrap();
        assert_eq!(pe.reduced_design_dim(), 3);
        assert_eq!(pe.reduced_response_dim(), 4);

        let val_targets = ae.encode_batch(val.spectrum_matrix().view()).unwrap();
        let baseline = constant_predictor_baseline(val_targets.view()).unwrap();
        assert!(report.final_val_mse.is_finite());
        assert!(
            report.final_val_mse < baseline,
            "trained {} vs baseline {}",
            report.final_val_mse,
            baseline
        );

        let (pe2, report2) = train_pseudo_encoder(&train, &val, &ae, &sizes, &config).unwrap();
        assert_eq!(pe.mlp(), pe2.mlp());
        assert_eq!(report.val_loss, report2.val_loss);
    }

    #[test]
    fn encode_design_contract() {
        let (train, val, ae) = quick_pipeline();
        let config = TrainConfig {
            max_epochs: 5,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let (pe, _) =
            train_pseudo_encoder(&train, &val, &ae, &default_architecture(3, 4), &config).unwrap();
        let d = &train.pairs[0].0;
        let code = pe.encode_design(d).unwrap();
        assert_eq!(code.len(), 3);
        assert_eq!(pe.encode_design(d).unwrap(), code);
        // encoder half is a bit-identical slice
        let enc = pe.design_encoder();
        assert_eq!(enc.layer_sizes(), &[10, 20, 15, 3]);
        assert_eq!(enc.weights()[0], pe.mlp().weights()[0]);
    }

    #[test]
    fn forward_model_is_exact_composition_with_frozen_decoder() {
        let (train, val, ae) = quick_pipeline();
        let config = TrainConfig {
            max_epochs: 10,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let (pe, _) =
            train_pseudo_encoder(&train, &val, &ae, &default_architecture(3, 4), &config).unwrap();
        let model = FullForwardModel::new(pe.clone(), &ae).unwrap();

        // decoder is bit-identical to the autoencoder's decoder half
        assert_eq!(model.decoder(), &ae.decoder());

        // prediction equals decode(predict_codes(scale(design))) exactly
        let d = &val.pairs[0].0;
        let predicted = model.predict(d).unwrap();
        let scaled = pe.scaler().scale(d);
        let row = Array2::from_shape_vec((1, DESIGN_DIM), scaled.to_vec()).unwrap();
        let codes = pe.predict_codes(row.view()).unwrap();
        let via_parts = ae.decode(&codes.row(0).to_owned()).unwrap();
        assert_eq!(predicted, via_parts);
        assert!(predicted.values().iter().all(|v| (0.0..=1.0).contains(v)));

        // repeatability
        assert_eq!(model.predict(d).unwrap(), predicted);
    }

    #[test]
    fn sweep_grid_has_one_row_per_cell() {
        let (train, val, ae) = quick_pipeline();
        let config = TrainConfig {
            max_epochs: 3,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let grid = sweep_design_dim(&train, &val, &[ae.clone()], &[2, 3], &config).unwrap();
        assert_eq!(grid.len(), 2);
        assert_eq!((grid[0].k, grid[0].m), (2, 4));
        assert_eq!((grid[1].k, grid[1].m), (3, 4));
        let again = sweep_design_dim(&train, &val, &[ae], &[2, 3], &config).unwrap();
        assert_eq!(grid[0].spectral_mse, again[0].spectral_mse);
    }

    #[test]
    fn mismatched_reduced_response_dimension_is_rejected() {
        let (train, val, ae) = quick_pipeline();
        let config = TrainConfig {
            max_epochs: 1,
            batch_size: 8,
            ..TrainConfig::default()
        };
        // ae bottleneck is 4; ask for m = 6
        let err = train_pseudo_encoder(&train, &val, &ae, &default_architecture(3, 6), &config);
        assert!(err.is_err());
    }
}
