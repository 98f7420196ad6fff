//! Full two-phase detection: train the cell detector and the association
//! weights, then list mitosis events in an unseen movie.
//!
//!     cargo run --release --example mitosis_pipeline

use hough_mitosis::crf::CrfComponents;
use hough_mitosis::pipeline::{detect_mitosis, train_association, train_detector};
use hough_mitosis::synth::{generate_dataset, generate_movies};
use hough_mitosis::PipelineConfig;

fn main() -> anyhow::Result<()> {
    let cfg = PipelineConfig { tree_count: 3, features_per_split: 80, background_ratio: 4.0, ..Default::default() };
    let train = generate_dataset(&cfg.synth, 8)?;
    let movies = train.movies();
    let model = train_detector(&train, &movies, &cfg, cfg.mode)?;
    let weights = train_association(&model, &train, &movies, &cfg)?;
    let full = weights.iter().find(|(n, _)| *n == CrfComponents::ABLATIONS[0].0).expect("full model").1;
    println!("w_m {:.3}  w_d {:.3}  w_md {:.3}  bias {:.3}", full.w_m, full.w_d, full.w_md, full.bias);

    let test = generate_movies(&cfg.synth, [500])?;
    let movie = &test.movies()[0];
    for (t, t1) in test.ground_truth.frame_pairs(movie) {
        let events = detect_mitosis(&model, &full, test.image(&t.frame_id).unwrap(), test.image(&t1.frame_id).unwrap(), &cfg)?;
        let truth = test.ground_truth.events_between(&t.frame_id, &t1.frame_id);
        println!("{} -> {}: {} annotated", t.frame_id, t1.frame_id, truth.len());
        for e in &truth {
            let (m, d) = test.ground_truth.event_centers(e).unwrap();
            println!("    truth  mother ({:.0}, {:.0})  pair ({:.0}, {:.0})", m.x, m.y, d.x, d.y);
        }
        for e in events.iter().take(3) {
            let (m, d) = (e.mother.position, e.daughter_pair.position);
            println!("    found  mother ({}, {})  pair ({}, {})  score {:+.2}", m.x, m.y, d.x, d.y, e.score);
        }
    }
    Ok(())
}
