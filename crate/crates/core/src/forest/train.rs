use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{
    best_split, weighted_posterior, ClassLabel, ClassPriors, ForestParams, HoughForestModel, Leaf, Node, NodeSamples,
    SplitObjective, Tree, CLASS_COUNT,
};
use crate::error::{Error, Result};
use crate::features::PatchSpec;
use crate::geometry::{Pixel, Vec2};
use crate::image::IntegralImage;

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct TrainingSample {
    /// Index into [`TrainingSet::integrals`].
    pub image: usize,
    pub position: Pixel,
    pub label: ClassLabel,
    /// Offset from `position` to the object center; `None` for background.
    pub displacement: Option<Vec2>,
}

/// Training pixels together with the integral images they are read from.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    /// One table per channel for every training image.
    pub integrals: Vec<Vec<IntegralImage>>,
    pub samples: Vec<TrainingSample>,
    /// Per-class pixel counts over all training images, for the class priors.
    pub pixel_counts: [u64; CLASS_COUNT],
}

impl TrainingSet {
    pub fn new(
        integrals: Vec<Vec<IntegralImage>>,
        samples: Vec<TrainingSample>,
        pixel_counts: [u64; CLASS_COUNT],
    ) -> Result<Self> {
        for s in &samples {
            let Some(ii) = integrals.get(s.image) else {
                return Err(Error::InvalidInput(format!("sample refers to missing image {}", s.image)));
            };
            if s.position.x >= ii[0].width() || s.position.y >= ii[0].height() {
                return Err(Error::InvalidInput(format!("sample position {:?} outside image", s.position)));
            }
            if s.label.is_foreground() != s.displacement.is_some() {
                return Err(Error::InvalidInput("only foreground samples carry displacements".into()));
            }
        }
        Ok(TrainingSet { integrals, samples, pixel_counts })
    }

    pub fn foreground_count(&self) -> usize {
        self.samples.iter().filter(|s| s.label.is_foreground()).count()
    }
}

fn class_counts(set: &TrainingSet, idx: &[usize]) -> [u64; CLASS_COUNT] {
    let mut c = [0u64; CLASS_COUNT];
    for &i in idx {
        c[set.samples[i].label.index()] += 1;
    }
    c
}

fn make_leaf(set: &TrainingSet, idx: &[usize], priors: &ClassPriors, store_votes: bool) -> Result<Leaf> {
    let raw_counts = class_counts(set, idx);
    let p = weighted_posterior(&raw_counts.map(|c| c as f64), priors.as_slice())?;
    let mut votes: [Vec<Vec2>; CLASS_COUNT] = Default::default();
    if store_votes {
        for &i in idx {
            let s = &set.samples[i];
            if let Some(d) = s.displacement {
                votes[s.label.index()].push(d);
            }
        }
    }
    Ok(Leaf { posteriors: [p[0], p[1], p[2]], votes, raw_counts })
}

struct Grower<'a, R> {
    set: &'a TrainingSet,
    priors: &'a ClassPriors,
    patch: &'a PatchSpec,
    params: &'a ForestParams,
    rng: &'a mut R,
    nodes: Vec<Node>,
}

impl<R: Rng> Grower<'_, R> {
    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> Result<u32> {
        let id = self.nodes.len() as u32;
        // placeholder, replaced below
        self.nodes.push(Node::Leaf(Leaf { posteriors: [0.0; CLASS_COUNT], votes: Default::default(), raw_counts: [0; CLASS_COUNT] }));

        let counts = class_counts(self.set, &idx);
        let fg = counts[1] + counts[2];
        let classes_present = counts.iter().filter(|&&c| c > 0).count();
        let min_leaf = self.params.min_leaf_samples;
        let enough_votes = fg as usize >= 2 * min_leaf;

        let objective = if depth >= self.params.max_depth || idx.len() < 2 * min_leaf || fg == 0 {
            None
        } else {
            let coin = self.rng.random::<f64>();
            if enough_votes && coin < self.params.uniformity_probability {
                Some(SplitObjective::Uniformity)
            } else if classes_present > 1 {
                Some(SplitObjective::Classification)
            } else if enough_votes && self.params.uniformity_probability > 0.0 {
                // a class-pure node can still sharpen its votes
                Some(SplitObjective::Uniformity)
            } else {
                None
            }
        };

        let split = objective.and_then(|obj| {
            best_split(NodeSamples { set: self.set, indices: &idx }, self.priors, self.patch, self.params, obj, self.rng)
        });

        let Some(split) = split else {
            self.nodes[id as usize] = Node::Leaf(make_leaf(self.set, &idx, self.priors, self.params.store_votes)?);
            return Ok(id);
        };

        let node = NodeSamples { set: self.set, indices: &idx };
        let (left, right): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| node.feature_value(&split.feature, i) < split.threshold);
        drop(idx);
        let l = self.grow(left, depth + 1)?;
        let r = self.grow(right, depth + 1)?;
        self.nodes[id as usize] = Node::Split { feature: split.feature, threshold: split.threshold, left: l, right: r };
        Ok(id)
    }
}

/// Grows one tree on the samples listed in `indices` (duplicates allowed).
pub fn train_tree<R: Rng>(
    set: &TrainingSet,
    indices: Vec<usize>,
    priors: &ClassPriors,
    patch: &PatchSpec,
    params: &ForestParams,
    rng: &mut R,
) -> Result<Tree> {
    if indices.is_empty() || !indices.iter().any(|&i| set.samples[i].label.is_foreground()) {
        return Err(Error::NoForeground);
    }
    let mut g = Grower { set, priors, patch, params, rng, nodes: Vec::new() };
    g.grow(indices, 0)?;
    Ok(Tree { nodes: g.nodes })
}

pub(crate) fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64 + 1);
    rng
}

/// Trains `tree_count` trees on bootstrap resamples of the sample pool. Trees
/// train in parallel; each owns a seeded stream so the result does not depend
/// on scheduling.
pub fn train_forest(set: &TrainingSet, params: &ForestParams, patch: &PatchSpec) -> Result<HoughForestModel> {
    params.validate()?;
    if !patch.is_valid() {
        return Err(Error::Config("patchRadius must be at least 1".into()));
    }
    if set.foreground_count() == 0 {
        return Err(Error::NoForeground);
    }
    let priors = ClassPriors::from_counts(set.pixel_counts)?;
    let n = set.samples.len();
    let trees = (0..params.tree_count)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(params.seed, t);
            let mut indices: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            // samples are stored image by image; sorting keeps lookups cache-local
            indices.sort_unstable();
            train_tree(set, indices, &priors, patch, params, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HoughForestModel { trees, priors, patch: *patch, params: params.clone() })
}
