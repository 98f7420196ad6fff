//! Integral images and randomized Haar-like features.
//!
//!     cargo run --example haar_features

use hough_mitosis::features::{sample_feature, PatchSpec};
use hough_mitosis::geometry::Rect;
use hough_mitosis::image::{build_integral, MultiChannelImage};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    // a 32x32 two-channel ramp: channel 0 grows along x, channel 1 along y
    let (w, h) = (32, 32);
    let ramp = |f: fn(usize, usize) -> f64| (0..w * h).map(|i| f(i % w, i / w)).collect::<Vec<_>>();
    let img = MultiChannelImage::new(w, h, vec![ramp(|x, _| x as f64 / 31.0), ramp(|_, y| y as f64 / 31.0)])?;

    let ii = build_integral(&img, 0)?;
    let r = Rect::new(4, 4, 12, 8);
    println!("sum over {r:?} = {:.4} (area {})", ii.rect_sum(r), r.area());

    let integrals = img.integrals();
    let spec = PatchSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let f = sample_feature(&mut rng, &spec);
        println!(
            "ch{} {:?} a={:?} b={:?} -> {:+.4} at (16,16), {:+.4} at (2,2)",
            f.channel,
            f.mode,
            f.rect_a,
            f.rect_b,
            f.evaluate(&integrals, 16, 16),
            f.evaluate(&integrals, 2, 2)
        );
    }
    Ok(())
}
