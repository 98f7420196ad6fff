//! Mother/daughter-pair association on hand-made detections.
//!
//!     cargo run --example crf_association

use hough_mitosis::crf::{enumerate_candidates, fit_weights, select_events, CrfComponents, CrfFeatures, DistanceStats};
use hough_mitosis::forest::ClassLabel;
use hough_mitosis::geometry::Pixel;
use hough_mitosis::voting::Detection;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn det(x: usize, y: usize, score: f64, class: ClassLabel) -> Detection {
    Detection { position: Pixel::new(x, y), score, class }
}

fn main() -> anyhow::Result<()> {
    let stats = DistanceStats::new(6.0, 1.5)?;

    // true events: strong maps at a typical distance; decoys: anything else
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut examples = Vec::new();
    for _ in 0..200 {
        let event = rng.random_bool(0.3);
        let (lo, hi) = if event { (0.5, 1.0) } else { (0.0, 0.7) };
        let f = CrfFeatures {
            h_m: rng.random_range(lo..hi),
            h_d: rng.random_range(lo..hi),
            p_dist: if event { rng.random_range(0.5..1.0) } else { rng.random_range(0.0..1.0) },
        };
        examples.push((f, event));
    }
    let fit = fit_weights(&examples, CrfComponents::FULL, stats)?;
    let w = fit.weights;
    println!("w_m {:.3}  w_d {:.3}  w_md {:.3}  bias {:.3}", w.w_m, w.w_d, w.w_md, w.bias);
    println!("training loss {:.4} -> {:.4}", fit.losses[0], fit.losses.last().unwrap());

    let mothers = [det(20, 20, 0.9, ClassLabel::Mother), det(60, 20, 0.6, ClassLabel::Mother)];
    let daughters = [
        det(25, 23, 0.7, ClassLabel::Daughter),
        det(62, 26, 0.8, ClassLabel::Daughter),
        det(30, 40, 0.9, ClassLabel::Daughter),
    ];
    let candidates = enumerate_candidates(&mothers, &daughters, w.max_radius(3.0), &stats);
    println!("{} candidates within {:.1} px", candidates.len(), w.max_radius(3.0));
    for (name, c) in CrfComponents::ABLATIONS {
        let events = select_events(&candidates, &w.restricted(c));
        let desc: Vec<String> = events
            .iter()
            .map(|e| format!("{:?}->{:?} ({:.2})", e.mother.position, e.daughter_pair.position, e.score))
            .collect();
        println!("{name:<18} {}", desc.join(", "));
    }
    Ok(())
}
