//! Randomized Haar-like split tests evaluated through integral images.

use rand::Rng;

use crate::geometry::Rect;
use crate::image::IntegralImage;

/// Window geometry the features are drawn from.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct PatchSpec {
    /// Half-size of the square window; the window spans `[-r, r]` in both axes.
    pub patch_radius: i32,
    pub channel_count: usize,
}

impl Default for PatchSpec {
    fn default() -> Self {
        PatchSpec { patch_radius: 12, channel_count: 2 }
    }
}

impl PatchSpec {
    pub fn is_valid(&self) -> bool {
        self.patch_radius >= 1 && self.channel_count >= 1
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum FeatureMode {
    /// Mean intensity of `rect_a`.
    SingleRectMean = 0,
    /// Mean of `rect_a` minus mean of `rect_b`.
    TwoRectMeanDifference = 1,
}

/// Rectangles are relative to the pixel being classified.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct HaarFeature {
    pub channel: usize,
    pub rect_a: Rect,
    pub rect_b: Rect,
    pub mode: FeatureMode,
}

fn sample_rect<R: Rng + ?Sized>(rng: &mut R, radius: i32) -> Rect {
    let side = 2 * radius + 1;
    let w = rng.random_range(1..=side);
    let h = rng.random_range(1..=side);
    let x0 = rng.random_range(-radius..=radius + 1 - w);
    let y0 = rng.random_range(-radius..=radius + 1 - h);
    Rect::new(x0, y0, x0 + w, y0 + h)
}

pub fn sample_feature<R: Rng + ?Sized>(rng: &mut R, spec: &PatchSpec) -> HaarFeature {
    let channel = rng.random_range(0..spec.channel_count);
    let mode = if rng.random_bool(0.5) {
        FeatureMode::SingleRectMean
    } else {
        FeatureMode::TwoRectMeanDifference
    };
    let rect_a = sample_rect(rng, spec.patch_radius);
    let rect_b = sample_rect(rng, spec.patch_radius);
    HaarFeature { channel, rect_a, rect_b, mode }
}

#[inline]
fn clipped_mean(ii: &IntegralImage, rect: Rect, x: i32, y: i32) -> f64 {
    let r = rect.translate(x, y).clip(ii.width(), ii.height());
    let area = r.area();
    if area == 0 {
        0.0
    } else {
        ii.rect_sum(r) / area as f64
    }
}

impl HaarFeature {
    /// Response at pixel `(x, y)`; `integrals` holds one table per channel.
    #[inline]
    pub fn evaluate(&self, integrals: &[IntegralImage], x: usize, y: usize) -> f64 {
        let ii = &integrals[self.channel];
        let (x, y) = (x as i32, y as i32);
        let a = clipped_mean(ii, self.rect_a, x, y);
        match self.mode {
            FeatureMode::SingleRectMean => a,
            FeatureMode::TwoRectMeanDifference => a - clipped_mean(ii, self.rect_b, x, y),
        }
    }

    pub fn is_within(&self, spec: &PatchSpec) -> bool {
        let r = spec.patch_radius;
        let inside = |q: &Rect| q.x0 >= -r && q.y0 >= -r && q.x1 <= r + 1 && q.y1 <= r + 1 && q.area() > 0;
        self.channel < spec.channel_count && inside(&self.rect_a) && inside(&self.rect_b)
    }
}
