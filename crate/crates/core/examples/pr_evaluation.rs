//! Matching detections against annotations, precision-recall curves and AUC.
//!
//!     cargo run --example pr_evaluation -- [out_dir]

use hough_mitosis::evaluation::{auc, match_detections, pr_curve, write_curve_csv, write_curve_svg, RegionRule};
use hough_mitosis::forest::ClassLabel;
use hough_mitosis::geometry::Pixel;
use hough_mitosis::synth::generate_dataset;
use hough_mitosis::voting::Detection;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "pr_out".into());
    std::fs::create_dir_all(&dir)?;
    let ds = generate_dataset(&Default::default(), 1)?;
    let frame = ds.ground_truth.frames.iter().find(|f| !f.object_ids(ClassLabel::Mother).is_empty()).expect("a mother");

    // a fake detector: one hit per mother plus scattered false alarms
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut dets = Vec::new();
    for id in frame.object_ids(ClassLabel::Mother) {
        let c = frame.object_center(id).unwrap();
        dets.push(Detection { position: Pixel::new(c.x.round() as usize, c.y.round() as usize), score: 0.7, class: ClassLabel::Mother });
    }
    for _ in 0..6 {
        let p = Pixel::new(rng.random_range(0..ds.ground_truth.width), rng.random_range(0..ds.ground_truth.height));
        dets.push(Detection { position: p, score: rng.random_range(0.0..1.0), class: ClassLabel::Mother });
    }

    let m = match_detections(&dets, frame, ClassLabel::Mother, RegionRule::Hull);
    println!("all detections: {} TP, {} FP, {} FN", m.true_positives, m.false_positives, m.false_negatives);

    let scores: Vec<f64> = dets.iter().map(|d| d.score).collect();
    let curve = pr_curve(&scores, |t| {
        let kept: Vec<Detection> = dets.iter().copied().filter(|d| d.score >= t).collect();
        match_detections(&kept, frame, ClassLabel::Mother, RegionRule::Hull)
    })?;
    for p in &curve {
        println!("t {:.3}  recall {:.2}  precision {:.2}", p.threshold, p.recall, p.precision);
    }
    println!("AUC {:.3}", auc(&curve)?);
    write_curve_csv(&curve, format!("{dir}/pr.csv").as_ref())?;
    write_curve_svg(&[("fake detector".into(), curve)], "Mother detection", format!("{dir}/pr.svg").as_ref())?;
    Ok(())
}
