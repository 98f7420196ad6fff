//! Train on 20 synthetic movies, test on 5 held-out ones, and report every
//! detector mode and association model.
//!
//!     cargo run --release --example synthetic_benchmark [config.json]

use std::time::Instant;

use hough_mitosis::pipeline::run_benchmark;
use hough_mitosis::synth::generate_dataset;
use hough_mitosis::PipelineConfig;

fn main() -> anyhow::Result<()> {
    let cfg = match std::env::args().nth(1) {
        Some(p) => PipelineConfig::load(p.as_ref())?,
        None => PipelineConfig::default(),
    };
    let t0 = Instant::now();
    let ds = generate_dataset(&cfg.synth, 25)?;
    let movies = ds.movies();
    let (train, test) = movies.split_at(20);
    println!("{} frames, {} events", ds.frames.len(), ds.ground_truth.events.len());

    let report = run_benchmark(&ds, train, test, &cfg)?;
    println!("{:<10} {:>8} {:>8}", "detector", "mother", "daughter");
    for (mode, [m, d]) in &report.cells {
        println!("{:<10} {:>8.3} {:>8.3}", mode.name(), m, d);
    }
    println!("{:<20} {:>8}", "association", "mitosis");
    for (name, a) in &report.mitosis {
        println!("{:<20} {:>8.3}", name, a);
    }
    println!("elapsed {:.1} s", t0.elapsed().as_secs_f64());
    Ok(())
}
