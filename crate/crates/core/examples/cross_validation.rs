//! Movie-grouped cross-validation of the mother detector for all three
//! detector modes.
//!
//!     cargo run --release --example cross_validation

use hough_mitosis::pipeline::{cross_validate_target, EvalTarget};
use hough_mitosis::synth::generate_dataset;
use hough_mitosis::{DetectorMode, PipelineConfig};

fn main() -> anyhow::Result<()> {
    let cfg = PipelineConfig {
        tree_count: 2,
        features_per_split: 60,
        background_ratio: 4.0,
        folds: "3".into(),
        ..Default::default()
    };
    let ds = generate_dataset(&cfg.synth, 6)?;
    for mode in DetectorMode::ALL {
        let cv = cross_validate_target(&ds, &cfg, mode, EvalTarget::Mother)?;
        let folds: Vec<String> = cv.fold_aucs.iter().map(|a| format!("{a:.3}")).collect();
        println!("{:<6} mean AUC {:.3}  folds [{}]", mode.name(), cv.mean_auc, folds.join(", "));
    }
    Ok(())
}
