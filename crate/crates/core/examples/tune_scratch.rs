// scratch harness: inspect pseudo-encoder training on a tiny dataset
use msdr_core::dataset::{generate, DesignRanges};
use msdr_core::dr_design::{constant_predictor_baseline, default_architecture, train_pseudo_encoder};
use msdr_core::dr_response::train_response_autoencoder;
use msdr_core::materials::MaterialDb;
use msdr_core::nnet::TrainConfig;

fn main() {
    let ds = generate(24, 33, &DesignRanges::default(), &MaterialDb::default(), "t").unwrap();
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
    let val_targets = ae.encode_batch(val.spectrum_matrix().view()).unwrap();
    println!("val targets:\n{:?}", val_targets);
    println!(
        "baseline: {}",
        constant_predictor_baseline(val_targets.view()).unwrap()
    );

    let config = TrainConfig {
        learning_rate: 5e-3,
        max_epochs: 600,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let (_, report) =
        train_pseudo_encoder(&train, &val, &ae, &default_architecture(3, 4), &config).unwrap();
    let show: Vec<String> = report
        .val_loss
        .iter()
        .step_by((report.val_loss.len() / 15).max(1))
        .map(|v| format!("{v:.3e}"))
        .collect();
    println!("val curve: {}", show.join(" "));
    println!(
        "best {:.4e} at {} ({} run); train last {:.4e}",
        report.final_val_mse,
        report.best_epoch,
        report.val_loss.len(),
        report.train_loss.last().unwrap()
    );
}
