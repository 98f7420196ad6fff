//! Generate a small synthetic data set and write it to disk.
//!
//!     cargo run --example synthesize -- [out_dir]

use hough_mitosis::synth::{generate_dataset, SynthConfig};
use hough_mitosis::Dataset;

fn main() -> anyhow::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "synth_out".into());
    let cfg = SynthConfig { seed: 42, ..Default::default() };
    let ds = generate_dataset(&cfg, 3)?;
    ds.save(dir.as_ref())?;

    for e in &ds.ground_truth.events {
        let (m, d) = ds.ground_truth.event_centers(e).expect("annotated");
        println!("{} -> {}: mother ({:.1}, {:.1}), pair midpoint ({:.1}, {:.1}), distance {:.2}", e.frame_t, e.frame_t1, m.x, m.y, d.x, d.y, m.distance(d));
    }
    let back = Dataset::load(dir.as_ref())?;
    println!("wrote {} frames to {dir}, reloaded {}", ds.frames.len(), back.frames.len());
    Ok(())
}
