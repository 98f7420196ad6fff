//! Multiclass Hough forest.
//!
//! Each tree routes a pixel to a leaf through Haar-like threshold tests. A leaf
//! stores class posteriors (class frequencies reweighted by inverse class
//! priors) and, per foreground class, the displacement vectors from the
//! training pixels that reached it to their object's center.
//!
//! Internal nodes are grown with one of two objectives: the sample-weighted
//! entropy of the children's posteriors, or the scatter of the foreground
//! displacement vectors around their mean.

mod io;
mod split;
mod train;

pub use io::{load_model, read_model, save_model, write_model, MODEL_FORMAT_VERSION};
pub use split::{best_split, best_split_over, threshold_grid, NodeSamples, SplitCandidate, SplitObjective};
pub use train::{train_forest, train_tree, TrainingSample, TrainingSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{HaarFeature, PatchSpec};
use crate::geometry::Vec2;
use crate::image::IntegralImage;

pub const CLASS_COUNT: usize = 3;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum ClassLabel {
    Background = 0,
    Mother = 1,
    Daughter = 2,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; CLASS_COUNT] = [ClassLabel::Background, ClassLabel::Mother, ClassLabel::Daughter];
    pub const FOREGROUND: [ClassLabel; 2] = [ClassLabel::Mother, ClassLabel::Daughter];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<ClassLabel> {
        ClassLabel::ALL.get(i).copied()
    }

    pub fn is_foreground(self) -> bool {
        self != ClassLabel::Background
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Background => "background",
            ClassLabel::Mother => "mother",
            ClassLabel::Daughter => "daughter",
        }
    }
}

impl std::fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ClassLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "background" => Ok(ClassLabel::Background),
            "mother" => Ok(ClassLabel::Mother),
            "daughter" => Ok(ClassLabel::Daughter),
            other => Err(Error::InvalidInput(format!("unknown class '{other}'"))),
        }
    }
}

/// Prior probability of each class over the training pixel population.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct ClassPriors([f64; CLASS_COUNT]);

impl ClassPriors {
    pub fn new(p: [f64; CLASS_COUNT]) -> Result<Self> {
        let sum: f64 = p.iter().sum();
        if p.iter().any(|v| !(v.is_finite() && *v > 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("invalid class priors {p:?}")));
        }
        Ok(ClassPriors(p))
    }

    /// Relative frequencies of per-class pixel counts; every class must occur.
    pub fn from_counts(counts: [u64; CLASS_COUNT]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::InsufficientData(format!("every class needs training pixels, got {counts:?}")));
        }
        ClassPriors::new(counts.map(|c| c as f64 / total as f64))
    }

    pub fn uniform() -> Self {
        ClassPriors([1.0 / CLASS_COUNT as f64; CLASS_COUNT])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, c: ClassLabel) -> f64 {
        self.0[c.index()]
    }
}

/// `p_c = (n_c / prior_c) / sum_i (n_i / prior_i)`.
pub fn weighted_posterior(counts: &[f64], priors: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; counts.len()];
    weighted_posterior_into(counts, priors, &mut out)?;
    Ok(out)
}

pub(crate) fn weighted_posterior_into(counts: &[f64], priors: &[f64], out: &mut [f64]) -> Result<()> {
    debug_assert_eq!(counts.len(), priors.len());
    let mut total = 0.0;
    for ((o, &n), &p) in out.iter_mut().zip(counts).zip(priors) {
        *o = n / p;
        total += *o;
    }
    if !(total > 0.0) {
        return Err(Error::ZeroCounts);
    }
    for o in out.iter_mut() {
        *o /= total;
    }
    Ok(())
}

/// Shannon entropy `-sum p ln p`, with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

/// Sum of Euclidean distances of the votes from their mean; 0 for an empty list.
pub fn vote_scatter(votes: &[Vec2]) -> f64 {
    if votes.is_empty() {
        return 0.0;
    }
    let (mut sx, mut sy) = (0.0, 0.0);
    for v in votes {
        sx += v.x;
        sy += v.y;
    }
    let n = votes.len() as f64;
    let (mx, my) = (sx / n, sy / n);
    let mut total = 0.0;
    for v in votes {
        let (dx, dy) = (v.x - mx, v.y - my);
        total += (dx * dx + dy * dy).sqrt();
    }
    total
}

#[derive(Clone, Debug, PartialEq)]
pub struct Leaf {
    pub posteriors: [f64; CLASS_COUNT],
    /// Displacements per class; the background entry is always empty.
    pub votes: [Vec<Vec2>; CLASS_COUNT],
    pub raw_counts: [u64; CLASS_COUNT],
}

impl Leaf {
    pub fn sample_count(&self) -> u64 {
        self.raw_counts.iter().sum()
    }

    pub fn posterior(&self, c: ClassLabel) -> f64 {
        self.posteriors[c.index()]
    }

    pub fn votes(&self, c: ClassLabel) -> &[Vec2] {
        &self.votes[c.index()]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Split { feature: HaarFeature, threshold: f64, left: u32, right: u32 },
    Leaf(Leaf),
}

/// A tree stored as a node arena with the root at index 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn single_leaf(leaf: Leaf) -> Self {
        Tree { nodes: vec![Node::Leaf(leaf)] }
    }

    /// Descends from the root: feature value `< threshold` goes left.
    pub fn leaf_for(&self, integrals: &[IntegralImage], x: usize, y: usize) -> &Leaf {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Leaf(l) => return l,
                Node::Split { feature, threshold, left, right } => {
                    i = if feature.evaluate(integrals, x, y) < *threshold { *left } else { *right } as usize;
                }
            }
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Leaf> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf(l) => Some(l),
            _ => None,
        })
    }

    /// Depth of every leaf, root at depth 0.
    pub fn leaf_depths(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, d)) = stack.pop() {
            match &self.nodes[i] {
                Node::Leaf(_) => out.push(d),
                Node::Split { left, right, .. } => {
                    stack.push((*left as usize, d + 1));
                    stack.push((*right as usize, d + 1));
                }
            }
        }
        out
    }

    pub fn depth(&self) -> usize {
        self.leaf_depths().into_iter().max().unwrap_or(0)
    }

    pub fn strip_votes(&mut self) {
        for n in &mut self.nodes {
            if let Node::Leaf(l) = n {
                l.votes = Default::default();
            }
        }
    }
}

/// Forest hyperparameters. Defaults follow the published setup: 8 trees of
/// height at most 19, 500 candidate features with 50 thresholds each, and at
/// least 10 samples per leaf.
#[derive(Clone, Debug, PartialEq)]
pub struct ForestParams {
    pub tree_count: usize,
    pub max_depth: usize,
    pub features_per_split: usize,
    pub thresholds_per_feature: usize,
    pub min_leaf_samples: usize,
    /// Chance that a node with enough foreground votes uses the vote-scatter
    /// objective. Zero trains a plain classification forest.
    pub uniformity_probability: f64,
    /// Background samples drawn per foreground sample in each image.
    pub background_ratio: f64,
    /// Foreground samples farther than this from their object center are rejected.
    pub max_displacement: f64,
    /// Keep displacement votes in the leaves; off yields a classification-only model.
    pub store_votes: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            tree_count: 8,
            max_depth: 19,
            features_per_split: 500,
            thresholds_per_feature: 50,
            min_leaf_samples: 10,
            uniformity_probability: 0.5,
            background_ratio: 20.0,
            max_displacement: 64.0,
            store_votes: true,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.tree_count == 0 {
            return bad("treeCount must be at least 1");
        }
        if self.features_per_split == 0 || self.thresholds_per_feature == 0 {
            return bad("featuresPerSplit and thresholdsPerFeature must be at least 1");
        }
        if self.min_leaf_samples == 0 {
            return bad("minLeafSamples must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.uniformity_probability) {
            return bad("uniformityProbability must lie in [0, 1]");
        }
        if !(self.background_ratio.is_finite() && self.background_ratio >= 0.0) {
            return bad("backgroundRatio must be a non-negative number");
        }
        if !(self.max_displacement.is_finite() && self.max_displacement > 0.0) {
            return bad("maxDisplacement must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HoughForestModel {
    pub trees: Vec<Tree>,
    pub priors: ClassPriors,
    pub patch: PatchSpec,
    pub params: ForestParams,
}

impl HoughForestModel {
    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }

    /// Whether leaves carry displacement votes (false for classification-only models).
    pub fn has_votes(&self) -> bool {
        self.params.store_votes
    }

    /// Tree-averaged class posteriors at a pixel.
    pub fn posterior_at(&self, integrals: &[IntegralImage], x: usize, y: usize) -> [f64; CLASS_COUNT] {
        let mut acc = [0.0; CLASS_COUNT];
        for t in &self.trees {
            let l = t.leaf_for(integrals, x, y);
            for (a, p) in acc.iter_mut().zip(l.posteriors) {
                *a += p;
            }
        }
        let n = self.trees.len() as f64;
        acc.map(|a| a / n)
    }

    /// Drops all stored votes, turning the model into a pure classifier.
    pub fn strip_votes(&mut self) {
        for t in &mut self.trees {
            t.strip_votes();
        }
        self.params.store_votes = false;
    }
}

pub fn predict_leaf<'m>(
    model: &'m HoughForestModel,
    tree: usize,
    integrals: &[IntegralImage],
    x: usize,
    y: usize,
) -> &'m Leaf {
    model.trees[tree].leaf_for(integrals, x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureMode;
    use crate::geometry::Rect;
    use crate::image::MultiChannelImage;

    #[test]
    fn posterior_examples() {
        assert_eq!(weighted_posterior(&[5.0, 5.0], &[0.5, 0.5]).unwrap(), vec![0.5, 0.5]);
        let p = weighted_posterior(&[10.0, 10.0], &[0.005, 0.995]).unwrap();
        let want = 2000.0 / (2000.0 + 10.0 / 0.995);
        assert!((p[0] - want).abs() < 1e-12 && (p[0] - 0.99500).abs() < 1e-5);
        assert_eq!(weighted_posterior(&[0.0, 7.0], &[0.3, 0.7]).unwrap(), vec![0.0, 1.0]);
        assert!(matches!(weighted_posterior(&[0.0, 0.0], &[0.5, 0.5]), Err(Error::ZeroCounts)));
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&[1.0, 0.0, 0.0]), 0.0);
        assert!((entropy(&[0.5, 0.5]) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((entropy(&[0.25, 0.75]) - 0.562335).abs() < 1e-6);
        let u = 1.0 / 3.0;
        assert!((entropy(&[u, u, u]) - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn scatter_examples() {
        assert_eq!(vote_scatter(&[Vec2::new(3.0, 4.0); 5]), 0.0);
        assert_eq!(vote_scatter(&[Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0)]), 2.0);
        assert_eq!(vote_scatter(&[]), 0.0);
    }

    #[test]
    fn priors_validation() {
        assert!(ClassPriors::new([0.2, 0.3, 0.5]).is_ok());
        assert!(ClassPriors::new([0.0, 0.5, 0.5]).is_err());
        assert!(ClassPriors::new([0.2, 0.2, 0.2]).is_err());
        assert!(ClassPriors::from_counts([10, 0, 3]).is_err());
        let p = ClassPriors::from_counts([2, 1, 1]).unwrap();
        assert_eq!(p.as_slice(), &[0.5, 0.25, 0.25]);
    }

    fn leaf(tag: u64) -> Leaf {
        Leaf { posteriors: [1.0, 0.0, 0.0], votes: Default::default(), raw_counts: [tag, 0, 0] }
    }

    #[test]
    fn single_leaf_tree_routes_everything_to_it() {
        let t = Tree::single_leaf(leaf(42));
        let ii = MultiChannelImage::zeros(5, 5, 1).integrals();
        for y in 0..5 {
            for x in 0..5 {
                assert_eq!(t.leaf_for(&ii, x, y).raw_counts[0], 42);
            }
        }
    }

    #[test]
    fn hand_traced_two_level_tree() {
        // channel 0: left column block bright; channel 1: bottom rows bright
        let (w, h) = (6usize, 6usize);
        let c0 = (0..w * h).map(|i| if i % w < 3 { 1.0 } else { 0.0 }).collect();
        let c1 = (0..w * h).map(|i| if i / w >= 3 { 1.0 } else { 0.0 }).collect();
        let ii = MultiChannelImage::new(w, h, vec![c0, c1]).unwrap().integrals();
        let pixel = Rect::new(0, 0, 1, 1);
        let f = |channel| HaarFeature { channel, rect_a: pixel, rect_b: pixel, mode: FeatureMode::SingleRectMean };
        let tree = Tree {
            nodes: vec![
                Node::Split { feature: f(0), threshold: 0.5, left: 1, right: 2 },
                Node::Split { feature: f(1), threshold: 0.5, left: 3, right: 4 },
                Node::Leaf(leaf(2)),
                Node::Leaf(leaf(3)),
                Node::Leaf(leaf(4)),
            ],
        };
        // dark in channel 0 (x >= 3) and dark in channel 1 (y < 3) -> node 3
        assert_eq!(tree.leaf_for(&ii, 4, 1).raw_counts[0], 3);
        assert_eq!(tree.leaf_for(&ii, 4, 4).raw_counts[0], 4);
        assert_eq!(tree.leaf_for(&ii, 1, 1).raw_counts[0], 2);
        assert_eq!(tree.leaf_for(&ii, 1, 5).raw_counts[0], 2);
        assert_eq!(tree.leaf_depths().len(), 3);
        assert_eq!(tree.depth(), 2);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(500))]

        #[test]
        fn posterior_normalized_and_scale_invariant(
            counts in proptest::collection::vec(0.0f64..1000.0, 3),
            raw_priors in proptest::collection::vec(0.001f64..1.0, 3),
            scale in 0.01f64..100.0,
        ) {
            proptest::prop_assume!(counts.iter().sum::<f64>() > 0.0);
            let s: f64 = raw_priors.iter().sum();
            let priors: Vec<f64> = raw_priors.iter().map(|p| p / s).collect();
            let p = weighted_posterior(&counts, &priors).unwrap();
            proptest::prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            proptest::prop_assert!(p.iter().all(|v| *v >= 0.0));
            let scaled: Vec<f64> = counts.iter().map(|c| c * scale).collect();
            let q = weighted_posterior(&scaled, &priors).unwrap();
            for (a, b) in p.iter().zip(&q) {
                proptest::prop_assert!((a - b).abs() < 1e-9);
            }
            let u = [1.0 / 3.0; 3];
            let f = weighted_posterior(&counts, &u).unwrap();
            let total: f64 = counts.iter().sum();
            for (a, c) in f.iter().zip(&counts) {
                proptest::prop_assert!((a - c / total).abs() < 1e-12);
            }
        }

        #[test]
        fn scatter_translation_and_scale(
            pts in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 1..40),
            tx in -100.0f64..100.0, ty in -100.0f64..100.0, s in 0.1f64..10.0,
        ) {
            let v: Vec<Vec2> = pts.iter().map(|&(x, y)| Vec2::new(x, y)).collect();
            let base = vote_scatter(&v);
            proptest::prop_assert!(base >= 0.0);
            let moved: Vec<Vec2> = v.iter().map(|p| *p + Vec2::new(tx, ty)).collect();
            proptest::prop_assert!((vote_scatter(&moved) - base).abs() < 1e-7 * (1.0 + base));
            let scaled: Vec<Vec2> = v.iter().map(|p| *p * s).collect();
            proptest::prop_assert!((vote_scatter(&scaled) - s * base).abs() < 1e-7 * (1.0 + s * base));
        }

        #[test]
        fn entropy_bounds(raw in proptest::collection::vec(0.0f64..1.0, 3)) {
            let s: f64 = raw.iter().sum();
            proptest::prop_assume!(s > 0.0);
            let p: Vec<f64> = raw.iter().map(|v| v / s).collect();
            let h = entropy(&p);
            proptest::prop_assert!(h >= -1e-12 && h <= 3f64.ln() + 1e-12);
        }
    }
}
