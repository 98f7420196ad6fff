use rand::Rng;

use super::{entropy, weighted_posterior_into, ClassPriors, ForestParams, TrainingSet, CLASS_COUNT};
use crate::features::{sample_feature, HaarFeature, PatchSpec};
use crate::geometry::Vec2;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum SplitObjective {
    /// Sample-weighted entropy of the children's prior-weighted posteriors.
    Classification,
    /// Per-class vote scatter of the foreground samples, summed over both children.
    Uniformity,
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct SplitCandidate {
    pub feature: HaarFeature,
    pub threshold: f64,
    /// Objective value; lower is better.
    pub score: f64,
}

/// The samples currently sitting at a node.
#[derive(Copy, Clone, Debug)]
pub struct NodeSamples<'a> {
    pub set: &'a TrainingSet,
    pub indices: &'a [usize],
}

impl NodeSamples<'_> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn feature_value(&self, f: &HaarFeature, i: usize) -> f64 {
        let s = &self.set.samples[i];
        f.evaluate(&self.set.integrals[s.image], s.position.x, s.position.y)
    }
}

/// `count` thresholds evenly spaced strictly between `min` and `max`.
pub fn threshold_grid(min: f64, max: f64, count: usize) -> Vec<f64> {
    let step = (max - min) / (count + 1) as f64;
    (1..=count).map(|k| min + step * k as f64).collect()
}

/// Draws `features_per_split` random features and returns the best split among
/// them, or `None` when no candidate leaves both children with at least
/// `min_leaf_samples` samples.
pub fn best_split<R: Rng + ?Sized>(
    node: NodeSamples<'_>,
    priors: &ClassPriors,
    patch: &PatchSpec,
    params: &ForestParams,
    objective: SplitObjective,
    rng: &mut R,
) -> Option<SplitCandidate> {
    if node.len() < 2 * params.min_leaf_samples {
        return None;
    }
    let candidates: Vec<HaarFeature> = (0..params.features_per_split).map(|_| sample_feature(rng, patch)).collect();
    best_split_over(node, &candidates, priors, params.thresholds_per_feature, params.min_leaf_samples, objective)
}

/// Scans every `(feature, threshold)` pair of the offered candidates. Ties keep
/// the earliest candidate in feature-then-threshold order.
pub fn best_split_over(
    node: NodeSamples<'_>,
    candidates: &[HaarFeature],
    priors: &ClassPriors,
    thresholds_per_feature: usize,
    min_leaf: usize,
    objective: SplitObjective,
) -> Option<SplitCandidate> {
    let n = node.len();
    if n < 2 * min_leaf {
        return None;
    }
    let mut scan = Scan::new(node, thresholds_per_feature);
    let mut best: Option<SplitCandidate> = None;
    for f in candidates {
        let Some(thresholds) = scan.bin(f) else { continue };
        let scores = match objective {
            SplitObjective::Classification => scan.classification_scores(priors, min_leaf),
            SplitObjective::Uniformity => scan.uniformity_scores(min_leaf),
        };
        for (k, score) in scores.into_iter().enumerate() {
            let Some(score) = score else { continue };
            if best.as_ref().is_none_or(|b| score < b.score) {
                best = Some(SplitCandidate { feature: *f, threshold: thresholds[k], score });
            }
        }
    }
    best
}

struct Scan<'a> {
    node: NodeSamples<'a>,
    thresholds: usize,
    values: Vec<f64>,
    bins: Vec<usize>,
    /// Per-bin class counts; bin `b` holds values in `[t_{b-1}, t_b)`.
    hist: Vec<[u64; CLASS_COUNT]>,
    grid: Vec<f64>,
}

impl<'a> Scan<'a> {
    fn new(node: NodeSamples<'a>, thresholds: usize) -> Self {
        Scan {
            node,
            thresholds,
            values: Vec::with_capacity(node.len()),
            bins: Vec::with_capacity(node.len()),
            hist: vec![[0; CLASS_COUNT]; thresholds + 1],
            grid: Vec::new(),
        }
    }

    /// Evaluates the feature on all samples and assigns each to a threshold bin.
    /// Returns the threshold grid, or `None` if the feature is constant.
    fn bin(&mut self, f: &HaarFeature) -> Option<Vec<f64>> {
        self.values.clear();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &i in self.node.indices {
            let v = self.node.feature_value(f, i);
            lo = lo.min(v);
            hi = hi.max(v);
            self.values.push(v);
        }
        if !(hi > lo) {
            return None;
        }
        self.grid = threshold_grid(lo, hi, self.thresholds);
        self.bins.clear();
        self.hist.iter_mut().for_each(|h| *h = [0; CLASS_COUNT]);
        for (&v, &i) in self.values.iter().zip(self.node.indices) {
            // number of thresholds <= v; the sample goes left for thresholds with index >= b
            let b = self.grid.partition_point(|t| *t <= v);
            self.bins.push(b);
            self.hist[b][self.node.set.samples[i].label.index()] += 1;
        }
        Some(self.grid.clone())
    }

    fn left_counts(&self) -> Vec<[u64; CLASS_COUNT]> {
        let mut acc = [0u64; CLASS_COUNT];
        (0..self.thresholds)
            .map(|k| {
                for c in 0..CLASS_COUNT {
                    acc[c] += self.hist[k][c];
                }
                acc
            })
            .collect()
    }

    fn classification_scores(&self, priors: &ClassPriors, min_leaf: usize) -> Vec<Option<f64>> {
        let n = self.node.len() as u64;
        let mut total = [0u64; CLASS_COUNT];
        for h in &self.hist {
            for c in 0..CLASS_COUNT {
                total[c] += h[c];
            }
        }
        let mut post = [0.0; CLASS_COUNT];
        self.left_counts()
            .into_iter()
            .map(|left| {
                let right: [u64; CLASS_COUNT] = std::array::from_fn(|c| total[c] - left[c]);
                let (nl, nr) = (left.iter().sum::<u64>(), right.iter().sum::<u64>());
                if nl < min_leaf as u64 || nr < min_leaf as u64 {
                    return None;
                }
                weighted_posterior_into(&left.map(|v| v as f64), priors.as_slice(), &mut post).ok()?;
                let hl = entropy(&post);
                weighted_posterior_into(&right.map(|v| v as f64), priors.as_slice(), &mut post).ok()?;
                let hr = entropy(&post);
                Some((nl as f64 * hl + nr as f64 * hr) / n as f64)
            })
            .collect()
    }

    fn uniformity_scores(&self, min_leaf: usize) -> Vec<Option<f64>> {
        let n = self.node.len() as u64;
        // foreground votes per class, stably ordered by bin, with bin boundaries
        let mut order: [Vec<(usize, Vec2)>; CLASS_COUNT] = Default::default();
        for (&i, &b) in self.node.indices.iter().zip(&self.bins) {
            let s = &self.node.set.samples[i];
            if let Some(d) = s.displacement {
                order[s.label.index()].push((b, d));
            }
        }
        let mut sorted: [Vec<Vec2>; CLASS_COUNT] = Default::default();
        // ends[c][k] = number of class-c votes with bin <= k
        let mut ends: [Vec<usize>; CLASS_COUNT] = Default::default();
        for c in 1..CLASS_COUNT {
            let mut counts = vec![0usize; self.thresholds + 1];
            for &(b, _) in &order[c] {
                counts[b] += 1;
            }
            let mut start = vec![0usize; self.thresholds + 2];
            for b in 0..=self.thresholds {
                start[b + 1] = start[b] + counts[b];
            }
            ends[c] = start[1..].to_vec();
            let mut out = vec![Vec2::ZERO; order[c].len()];
            let mut next = start;
            for &(b, d) in &order[c] {
                out[next[b]] = d;
                next[b] += 1;
            }
            sorted[c] = out;
        }
        let scatter = |votes: &[Vec2]| -> f64 {
            if votes.is_empty() {
                return 0.0;
            }
            let (mut sx, mut sy) = (0.0, 0.0);
            for v in votes {
                sx += v.x;
                sy += v.y;
            }
            let (mx, my) = (sx / votes.len() as f64, sy / votes.len() as f64);
            votes.iter().map(|v| ((v.x - mx) * (v.x - mx) + (v.y - my) * (v.y - my)).sqrt()).sum()
        };
        let mut previous: Option<(usize, f64)> = None;
        self.left_counts()
            .into_iter()
            .enumerate()
            .map(|(k, left)| {
                let nl = left.iter().sum::<u64>();
                if nl < min_leaf as u64 || n - nl < min_leaf as u64 {
                    return None;
                }
                // an empty bin leaves both children unchanged
                let key: usize = (1..CLASS_COUNT).map(|c| ends[c][k]).sum();
                if let Some((pk, score)) = previous {
                    if pk == key {
                        return Some(score);
                    }
                }
                let mut total = 0.0;
                for c in 1..CLASS_COUNT {
                    let (l, r) = sorted[c].split_at(ends[c][k]);
                    total += scatter(l);
                    total += scatter(r);
                }
                previous = Some((key, total));
                Some(total)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureMode;
    use crate::forest::{ClassLabel, TrainingSample};
    use crate::geometry::{Pixel, Rect};
    use crate::image::MultiChannelImage;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn set_from(img: MultiChannelImage, samples: Vec<TrainingSample>) -> TrainingSet {
        TrainingSet::new(vec![img.integrals()], samples, [100, 10, 10]).unwrap()
    }

    #[test]
    fn perfect_separator_found() {
        // bright left half holds mothers, dark right half background
        let (w, h) = (10usize, 4usize);
        let px = (0..w * h).map(|i| if i % w < 5 { 1.0 } else { 0.0 }).collect();
        let img = MultiChannelImage::new(w, h, vec![px]).unwrap();
        let mut samples = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let label = if x < 5 { ClassLabel::Mother } else { ClassLabel::Background };
                let d = (x < 5).then_some(Vec2::new(1.0, 0.0));
                samples.push(TrainingSample { image: 0, position: Pixel::new(x, y), label, displacement: d });
            }
        }
        let set = set_from(img, samples);
        let idx: Vec<usize> = (0..set.samples.len()).collect();
        let node = NodeSamples { set: &set, indices: &idx };
        let f = HaarFeature {
            channel: 0,
            rect_a: Rect::new(0, 0, 1, 1),
            rect_b: Rect::new(0, 0, 1, 1),
            mode: FeatureMode::SingleRectMean,
        };
        let s = best_split_over(node, &[f], &ClassPriors::uniform(), 5, 2, SplitObjective::Classification).unwrap();
        assert_eq!(s.score, 0.0);
        assert!(s.threshold > 0.0 && s.threshold < 1.0);
    }

    #[test]
    fn constant_features_yield_none() {
        let img = MultiChannelImage::new(12, 12, vec![vec![0.5; 144]]).unwrap();
        // interior pixels only, so every window lies inside the image
        let samples = (0..36)
            .map(|i| TrainingSample {
                image: 0,
                position: Pixel::new(3 + i % 6, 3 + i / 6),
                label: if i % 2 == 0 { ClassLabel::Mother } else { ClassLabel::Background },
                displacement: (i % 2 == 0).then_some(Vec2::ZERO),
            })
            .collect();
        let set = set_from(img, samples);
        let idx: Vec<usize> = (0..36).collect();
        let node = NodeSamples { set: &set, indices: &idx };
        let params = ForestParams { features_per_split: 20, min_leaf_samples: 2, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let patch = PatchSpec { patch_radius: 2, channel_count: 1 };
        for obj in [SplitObjective::Classification, SplitObjective::Uniformity] {
            assert!(best_split(node, &ClassPriors::uniform(), &patch, &params, obj, &mut rng).is_none());
        }
    }

    #[test]
    fn too_few_samples_yield_none() {
        let img = MultiChannelImage::new(4, 4, vec![(0..16).map(|i| i as f64 / 16.0).collect()]).unwrap();
        let samples = (0..16)
            .map(|i| TrainingSample {
                image: 0,
                position: Pixel::new(i % 4, i / 4),
                label: ClassLabel::Background,
                displacement: None,
            })
            .collect();
        let set = set_from(img, samples);
        let idx: Vec<usize> = (0..16).collect();
        let node = NodeSamples { set: &set, indices: &idx };
        let params = ForestParams { min_leaf_samples: 9, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let patch = PatchSpec { patch_radius: 1, channel_count: 1 };
        assert!(best_split(node, &ClassPriors::uniform(), &patch, &params, SplitObjective::Classification, &mut rng)
            .is_none());
    }

    #[test]
    fn grid_is_strictly_inside() {
        let g = threshold_grid(0.0, 1.0, 4);
        assert_eq!(g, vec![0.2, 0.4, 0.6000000000000001, 0.8]);
    }
}
