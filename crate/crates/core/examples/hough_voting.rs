//! Hough voting, smoothing and non-maximum suppression on a held-out frame.
//!
//!     cargo run --release --example hough_voting -- [out_dir]

use hough_mitosis::pipeline::train_detector;
use hough_mitosis::synth::{generate_dataset, generate_movies};
use hough_mitosis::voting::{cast_votes, nms, smooth, write_map_pgm};
use hough_mitosis::PipelineConfig;

fn main() -> anyhow::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "voting_out".into());
    std::fs::create_dir_all(&dir)?;
    let cfg = PipelineConfig { tree_count: 3, features_per_split: 80, background_ratio: 4.0, ..Default::default() };
    let train = generate_dataset(&cfg.synth, 6)?;
    let model = train_detector(&train, &train.movies(), &cfg, cfg.mode)?;

    // the frame just before a division of an unseen movie
    let test = generate_movies(&cfg.synth, [100])?;
    let event = &test.ground_truth.events[0];
    let (mother, _) = test.ground_truth.event_centers(event).expect("annotated");
    let [m, d] = cast_votes(&model, test.image(&event.frame_t).expect("frame"))?;
    println!("vote mass: mother {:.1}, daughter {:.1}", m.total(), d.total());

    let sm = smooth(&m, cfg.smoothing_sigma);
    println!("annotated mother at ({:.1}, {:.1})", mother.x, mother.y);
    for p in nms(&sm, cfg.nms_radius, 0.1 * sm.max()).iter().take(5) {
        let off = p.position.to_vec2().distance(mother);
        println!("peak ({:>3}, {:>3}) score {:.3}  {:.1} px from the mother", p.position.x, p.position.y, p.score, off);
    }
    write_map_pgm(&sm, format!("{dir}/mother_map.pgm").as_ref())?;
    println!("wrote {dir}/mother_map.pgm");
    Ok(())
}
