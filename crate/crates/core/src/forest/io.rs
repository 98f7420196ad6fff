//! Versioned little-endian binary model files. Layout is documented in
//! `docs/model_format.md`.

use std::fs;
use std::path::Path;

use super::{ClassPriors, ForestParams, HoughForestModel, Leaf, Node, Tree, CLASS_COUNT};
use crate::error::{Error, Result};
use crate::features::{FeatureMode, HaarFeature, PatchSpec};
use crate::geometry::{Rect, Vec2};

pub const MODEL_MAGIC: &[u8; 4] = b"HMDF";
pub const MODEL_FORMAT_VERSION: u32 = 1;

const TAG_SPLIT: u8 = 0;
const TAG_LEAF: u8 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn i32(&mut self, v: i32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn rect(&mut self, r: &Rect) {
        for v in [r.x0, r.y0, r.x1, r.y1] {
            self.i32(v);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::CorruptModel(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn rect(&mut self) -> Result<Rect> {
        Ok(Rect::new(self.i32()?, self.i32()?, self.i32()?, self.i32()?))
    }
    /// Element count, bounded by the bytes left so corrupt files cannot trigger huge allocations.
    fn count(&mut self, min_elem_bytes: usize) -> Result<usize> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_elem_bytes) > self.buf.len() - self.pos {
            return Err(Error::CorruptModel(format!("count {n} exceeds remaining data")));
        }
        Ok(n)
    }
}

pub fn write_model(model: &HoughForestModel) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MODEL_MAGIC);
    w.u32(MODEL_FORMAT_VERSION);
    w.i32(model.patch.patch_radius);
    w.u32(model.patch.channel_count as u32);

    let p = &model.params;
    w.u32(p.tree_count as u32);
    w.u32(p.max_depth as u32);
    w.u32(p.features_per_split as u32);
    w.u32(p.thresholds_per_feature as u32);
    w.u32(p.min_leaf_samples as u32);
    w.f64(p.uniformity_probability);
    w.f64(p.background_ratio);
    w.f64(p.max_displacement);
    w.u8(p.store_votes as u8);
    w.u64(p.seed);
    for &v in model.priors.as_slice() {
        w.f64(v);
    }

    w.u32(model.trees.len() as u32);
    for t in &model.trees {
        w.u32(t.nodes.len() as u32);
        for n in &t.nodes {
            match n {
                Node::Split { feature, threshold, left, right } => {
                    w.u8(TAG_SPLIT);
                    w.u32(feature.channel as u32);
                    w.u8(feature.mode as u8);
                    w.rect(&feature.rect_a);
                    w.rect(&feature.rect_b);
                    w.f64(*threshold);
                    w.u32(*left);
                    w.u32(*right);
                }
                Node::Leaf(l) => {
                    w.u8(TAG_LEAF);
                    for &v in &l.posteriors {
                        w.f64(v);
                    }
                    for &v in &l.raw_counts {
                        w.u64(v);
                    }
                    for votes in &l.votes {
                        w.u32(votes.len() as u32);
                        for v in votes {
                            w.f64(v.x);
                            w.f64(v.y);
                        }
                    }
                }
            }
        }
    }
    w.0
}

pub fn read_model(bytes: &[u8]) -> Result<HoughForestModel> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MODEL_MAGIC {
        return Err(Error::CorruptModel("bad magic".into()));
    }
    let version = r.u32()?;
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::ModelVersion { found: version, expected: MODEL_FORMAT_VERSION });
    }
    let patch = PatchSpec { patch_radius: r.i32()?, channel_count: r.u32()? as usize };
    if !patch.is_valid() {
        return Err(Error::CorruptModel("invalid patch spec".into()));
    }
    let params = ForestParams {
        tree_count: r.u32()? as usize,
        max_depth: r.u32()? as usize,
        features_per_split: r.u32()? as usize,
        thresholds_per_feature: r.u32()? as usize,
        min_leaf_samples: r.u32()? as usize,
        uniformity_probability: r.f64()?,
        background_ratio: r.f64()?,
        max_displacement: r.f64()?,
        store_votes: r.u8()? != 0,
        seed: r.u64()?,
    };
    let priors = ClassPriors::new([r.f64()?, r.f64()?, r.f64()?])
        .map_err(|_| Error::CorruptModel("invalid class priors".into()))?;

    let tree_count = r.count(4)?;
    let mut trees = Vec::with_capacity(tree_count);
    for _ in 0..tree_count {
        let node_count = r.count(1)?;
        if node_count == 0 {
            return Err(Error::CorruptModel("empty tree".into()));
        }
        let mut nodes = Vec::with_capacity(node_count);
        for i in 0..node_count {
            let node = match r.u8()? {
                TAG_SPLIT => {
                    let channel = r.u32()? as usize;
                    let mode = match r.u8()? {
                        0 => FeatureMode::SingleRectMean,
                        1 => FeatureMode::TwoRectMeanDifference,
                        m => return Err(Error::CorruptModel(format!("unknown feature mode {m}"))),
                    };
                    let feature = HaarFeature { channel, mode, rect_a: r.rect()?, rect_b: r.rect()? };
                    if !feature.is_within(&patch) {
                        return Err(Error::CorruptModel("feature outside patch".into()));
                    }
                    let threshold = r.f64()?;
                    let (left, right) = (r.u32()?, r.u32()?);
                    // children always follow their parent, which rules out cycles
                    for c in [left, right] {
                        if c as usize <= i || c as usize >= node_count {
                            return Err(Error::CorruptModel(format!("bad child index {c}")));
                        }
                    }
                    Node::Split { feature, threshold, left, right }
                }
                TAG_LEAF => {
                    let posteriors = [r.f64()?, r.f64()?, r.f64()?];
                    let raw_counts = [r.u64()?, r.u64()?, r.u64()?];
                    let mut votes: [Vec<Vec2>; CLASS_COUNT] = Default::default();
                    for v in votes.iter_mut() {
                        let n = r.count(16)?;
                        v.reserve(n);
                        for _ in 0..n {
                            v.push(Vec2::new(r.f64()?, r.f64()?));
                        }
                    }
                    Node::Leaf(Leaf { posteriors, votes, raw_counts })
                }
                t => return Err(Error::CorruptModel(format!("unknown node tag {t}"))),
            };
            nodes.push(node);
        }
        trees.push(Tree { nodes });
    }
    if r.pos != bytes.len() {
        return Err(Error::CorruptModel("trailing bytes".into()));
    }
    Ok(HoughForestModel { trees, priors, patch, params })
}

pub fn save_model(model: &HoughForestModel, path: &Path) -> Result<()> {
    fs::write(path, write_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<HoughForestModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_model(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_model() -> HoughForestModel {
        let f = HaarFeature {
            channel: 1,
            rect_a: Rect::new(-2, -1, 3, 2),
            rect_b: Rect::new(0, 0, 1, 1),
            mode: FeatureMode::TwoRectMeanDifference,
        };
        let leaf = |p: f64| Leaf {
            posteriors: [1.0 - p, p, 0.0],
            votes: [vec![], vec![Vec2::new(1.5, -2.25)], vec![]],
            raw_counts: [3, 1, 0],
        };
        HoughForestModel {
            trees: vec![Tree {
                nodes: vec![
                    Node::Split { feature: f, threshold: 0.125, left: 1, right: 2 },
                    Node::Leaf(leaf(0.1)),
                    Node::Leaf(leaf(0.7)),
                ],
            }],
            priors: ClassPriors::new([0.9, 0.05, 0.05]).unwrap(),
            patch: PatchSpec { patch_radius: 3, channel_count: 2 },
            params: ForestParams::default(),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let m = sample_model();
        assert_eq!(read_model(&write_model(&m)).unwrap(), m);
    }

    #[test]
    fn version_mismatch() {
        let mut b = write_model(&sample_model());
        b[4..8].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(read_model(&b), Err(Error::ModelVersion { found: 7, expected: 1 })));
    }

    #[test]
    fn truncation_and_garbage_are_corrupt() {
        let b = write_model(&sample_model());
        for cut in [3, 10, b.len() / 2, b.len() - 1] {
            assert!(matches!(read_model(&b[..cut]), Err(Error::CorruptModel(_))), "cut {cut}");
        }
        let mut extra = b.clone();
        extra.push(0);
        assert!(matches!(read_model(&extra), Err(Error::CorruptModel(_))));
        assert!(matches!(read_model(b"nope"), Err(Error::CorruptModel(_))));
    }
}
