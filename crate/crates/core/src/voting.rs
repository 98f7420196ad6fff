//! Hough vote accumulation, smoothing and peak extraction.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forest::{ClassLabel, HoughForestModel, CLASS_COUNT};
use crate::geometry::Pixel;
use crate::image::{write_pgm, IntegralImage, MultiChannelImage};

/// Per-class accumulator of vote mass with the source image's dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct HoughMap {
    pub class: ClassLabel,
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl HoughMap {
    pub fn zeros(class: ClassLabel, width: usize, height: usize) -> Self {
        HoughMap { class, width, height, data: vec![0.0; width * height] }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn at(&self, p: Pixel) -> f64 {
        self.get(p.x, p.y)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Detection {
    pub position: Pixel,
    pub score: f64,
    pub class: ClassLabel,
}

/// Orders by descending score, then row-major position.
pub fn detection_order(a: &Detection, b: &Detection) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then(a.position.row_major().cmp(&b.position.row_major()))
}

const VOTE_CHUNKS: usize = 16;

/// Accumulates votes from every pixel and tree into one map per foreground
/// class (mother, daughter). Each stored vote carries
/// `posterior[c] / votes[c].len()`; votes landing outside the image are
/// dropped, and the result is divided by the number of trees.
pub fn cast_votes(model: &HoughForestModel, image: &MultiChannelImage) -> Result<[HoughMap; 2]> {
    if image.channel_count() != model.patch.channel_count {
        return Err(Error::InvalidInput(format!(
            "model expects {} channels, image has {}",
            model.patch.channel_count,
            image.channel_count()
        )));
    }
    let integrals = image.integrals();
    Ok(cast_votes_with(model, &integrals, image.width(), image.height()))
}

pub(crate) fn cast_votes_with(model: &HoughForestModel, integrals: &[IntegralImage], w: usize, h: usize) -> [HoughMap; 2] {
    let rows_per_chunk = h.div_ceil(VOTE_CHUNKS);
    // fixed row chunks merged in order keep the sum independent of thread count
    let partials: Vec<[Vec<f64>; 2]> = (0..h.div_ceil(rows_per_chunk))
        .into_par_iter()
        .map(|chunk| {
            let mut acc = [vec![0.0; w * h], vec![0.0; w * h]];
            let y_end = ((chunk + 1) * rows_per_chunk).min(h);
            for y in chunk * rows_per_chunk..y_end {
                for x in 0..w {
                    for tree in &model.trees {
                        let leaf = tree.leaf_for(integrals, x, y);
                        for (k, class) in ClassLabel::FOREGROUND.into_iter().enumerate() {
                            let votes = leaf.votes(class);
                            if votes.is_empty() {
                                continue;
                            }
                            let weight = leaf.posterior(class) / votes.len() as f64;
                            if weight == 0.0 {
                                continue;
                            }
                            for v in votes {
                                let tx = (x as f64 + v.x).round();
                                let ty = (y as f64 + v.y).round();
                                if tx >= 0.0 && ty >= 0.0 && (tx as usize) < w && (ty as usize) < h {
                                    acc[k][ty as usize * w + tx as usize] += weight;
                                }
                            }
                        }
                    }
                }
            }
            acc
        })
        .collect();
    let mut maps = [ClassLabel::Mother, ClassLabel::Daughter].map(|c| HoughMap::zeros(c, w, h));
    for part in partials {
        for (m, p) in maps.iter_mut().zip(part) {
            for (d, v) in m.data.iter_mut().zip(p) {
                *d += v;
            }
        }
    }
    let n = model.trees.len() as f64;
    for m in &mut maps {
        m.data.iter_mut().for_each(|v| *v /= n);
    }
    maps
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Symmetric reflection: `-1 -> 0`, `n -> n - 1`.
fn reflect(mut i: i64, n: usize) -> usize {
    let n = n as i64;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

/// Separable Gaussian blur with reflective borders. `sigma == 0` is the identity.
pub fn smooth(map: &HoughMap, sigma: f64) -> HoughMap {
    if !(sigma > 0.0) {
        return map.clone();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let (w, h) = (map.width, map.height);
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (j, kv) in k.iter().enumerate() {
                s += kv * map.data[y * w + reflect(x as i64 + j as i64 - r, w)];
            }
            tmp[y * w + x] = s;
        }
    }
    let mut out = HoughMap::zeros(map.class, w, h);
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (j, kv) in k.iter().enumerate() {
                s += kv * tmp[reflect(y as i64 + j as i64 - r, h) * w + x];
            }
            out.data[y * w + x] = s;
        }
    }
    out
}

/// Local maxima within a Euclidean `radius` that reach `threshold`.
///
/// Equal values are ordered row-major, so within a plateau only the first
/// pixel survives and no two detections are ever within `radius` of each
/// other. Non-positive values never produce detections. The result is sorted
/// by descending score.
pub fn nms(map: &HoughMap, radius: usize, threshold: f64) -> Vec<Detection> {
    let (w, h) = (map.width as i64, map.height as i64);
    let r = radius.max(1) as i64;
    let offsets: Vec<(i64, i64)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| (dx, dy) != (0, 0) && dx * dx + dy * dy <= r * r)
        .collect();
    let mut out = Vec::new();
    for y in 0..h {
        'px: for x in 0..w {
            let v = map.data[(y * w + x) as usize];
            if !(v > 0.0) || v < threshold {
                continue;
            }
            let here = y * w + x;
            for &(dx, dy) in &offsets {
                let (qx, qy) = (x + dx, y + dy);
                if qx < 0 || qy < 0 || qx >= w || qy >= h {
                    continue;
                }
                let q = qy * w + qx;
                let u = map.data[q as usize];
                if u > v || (u == v && q < here) {
                    continue 'px;
                }
            }
            out.push(Detection { position: Pixel::new(x as usize, y as usize), score: v, class: map.class });
        }
    }
    out.sort_by(detection_order);
    out
}

/// Tree-averaged class posterior maps, indexed by class.
pub fn posterior_maps(model: &HoughForestModel, image: &MultiChannelImage) -> [Vec<f64>; CLASS_COUNT] {
    let integrals = image.integrals();
    let (w, h) = (image.width(), image.height());
    let rows: Vec<Vec<[f64; CLASS_COUNT]>> = (0..h)
        .into_par_iter()
        .map(|y| (0..w).map(|x| model.posterior_at(&integrals, x, y)).collect())
        .collect();
    let mut out: [Vec<f64>; CLASS_COUNT] = Default::default();
    for o in out.iter_mut() {
        o.reserve(w * h);
    }
    for row in rows {
        for p in row {
            for c in 0..CLASS_COUNT {
                out[c].push(p[c]);
            }
        }
    }
    out
}

/// Detections from a pixel classification without voting: 4-connected
/// components of pixels whose most probable class is `class`, each reported
/// at its rounded centroid and scored by its mean posterior for `class`.
pub fn component_detections(
    posteriors: &[Vec<f64>; CLASS_COUNT],
    width: usize,
    height: usize,
    class: ClassLabel,
) -> Vec<Detection> {
    let c = class.index();
    let is_class = |i: usize| (0..CLASS_COUNT).all(|o| o == c || posteriors[c][i] > posteriors[o][i]);
    let mut seen = vec![false; width * height];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..width * height {
        if seen[start] || !is_class(start) {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let (mut n, mut sx, mut sy, mut mass) = (0usize, 0.0, 0.0, 0.0);
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % width, i / width);
            n += 1;
            sx += x as f64;
            sy += y as f64;
            mass += posteriors[c][i];
            let mut push = |j: usize| {
                if !seen[j] && is_class(j) {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                push(i - 1);
            }
            if x + 1 < width {
                push(i + 1);
            }
            if y > 0 {
                push(i - width);
            }
            if y + 1 < height {
                push(i + width);
            }
        }
        let pos = Pixel::new((sx / n as f64).round() as usize, (sy / n as f64).round() as usize);
        out.push(Detection { position: pos, score: mass / n as f64, class });
    }
    out.sort_by(detection_order);
    out
}

pub const MAP_MAGIC: &[u8; 4] = b"HMAP";
pub const MAP_FORMAT_VERSION: u32 = 1;

/// Raw layout: magic, version (u32), class (u8), width and height (u32), then
/// row-major f64 values; all little-endian.
pub fn write_map_raw(map: &HoughMap, path: &Path) -> Result<()> {
    let mut b = Vec::with_capacity(17 + 8 * map.data.len());
    b.extend_from_slice(MAP_MAGIC);
    b.extend_from_slice(&MAP_FORMAT_VERSION.to_le_bytes());
    b.push(map.class as u8);
    b.extend_from_slice(&(map.width as u32).to_le_bytes());
    b.extend_from_slice(&(map.height as u32).to_le_bytes());
    for v in &map.data {
        b.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, b).map_err(|e| Error::io(path, e))
}

pub fn read_map_raw(path: &Path) -> Result<HoughMap> {
    let b = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::InvalidInput(format!("{}: {m}", path.display()));
    if b.len() < 17 || &b[..4] != MAP_MAGIC {
        return Err(bad("not a Hough map file"));
    }
    let version = u32::from_le_bytes(b[4..8].try_into().unwrap());
    if version != MAP_FORMAT_VERSION {
        return Err(bad(&format!("unsupported map version {version}")));
    }
    let class = ClassLabel::from_index(b[8] as usize).ok_or_else(|| bad("bad class"))?;
    let width = u32::from_le_bytes(b[9..13].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(b[13..17].try_into().unwrap()) as usize;
    if b.len() != 17 + 8 * width * height {
        return Err(bad("size mismatch"));
    }
    let data = b[17..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(HoughMap { class, width, height, data })
}

/// Debug view: values rescaled so the map maximum becomes white.
pub fn write_map_pgm(map: &HoughMap, path: &Path) -> Result<()> {
    let m = map.max();
    let scaled: Vec<f64> = map.data.iter().map(|v| if m > 0.0 { v / m } else { 0.0 }).collect();
    write_pgm(path, map.width, map.height, &scaled, 255)
}
