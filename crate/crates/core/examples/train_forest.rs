//! Train a small Hough forest and inspect it.
//!
//!     cargo run --release --example train_forest

use hough_mitosis::dataset::training_set;
use hough_mitosis::forest::{read_model, train_forest, write_model, ClassLabel};
use hough_mitosis::synth::generate_dataset;
use hough_mitosis::PipelineConfig;

fn main() -> anyhow::Result<()> {
    let cfg = PipelineConfig { tree_count: 2, features_per_split: 50, background_ratio: 3.0, ..Default::default() };
    let ds = generate_dataset(&cfg.synth, 4)?;
    let set = training_set(&ds, &ds.movies(), &cfg)?;
    println!("{} samples, {} foreground, pixel counts {:?}", set.samples.len(), set.foreground_count(), set.pixel_counts);

    let model = train_forest(&set, &cfg.forest_params(cfg.mode), &cfg.patch())?;
    println!("priors {:?}", model.priors.as_slice());
    for (i, t) in model.trees.iter().enumerate() {
        let leaves: Vec<_> = t.leaves().collect();
        let votes: usize = leaves.iter().map(|l| l.votes(ClassLabel::Mother).len() + l.votes(ClassLabel::Daughter).len()).sum();
        println!("tree {i}: depth {}, {} leaves, {votes} stored votes", t.depth(), leaves.len());
    }

    let bytes = write_model(&model);
    assert_eq!(read_model(&bytes)?, model);
    println!("serialized model: {} bytes", bytes.len());
    Ok(())
}
