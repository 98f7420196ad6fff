//! Annotated frame collections: disk layout and training-sample extraction.
//!
//! On disk a data set is one directory holding `ground_truth.json` and, for
//! every annotated frame, one 16-bit PGM per channel named
//! `<frameId>_c<channel>.pgm`.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::evaluation::{point_in_polygon, GroundTruth, GroundTruthFrame};
use crate::forest::{ClassLabel, TrainingSample, TrainingSet, CLASS_COUNT};
use crate::geometry::{Pixel, Vec2};
use crate::image::{load_frame, save_frame, MultiChannelImage};

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

#[derive(Clone, Debug)]
pub struct Dataset {
    /// Frame id and image, in the order of `ground_truth.frames`.
    pub frames: Vec<(String, MultiChannelImage)>,
    pub ground_truth: GroundTruth,
}

impl Dataset {
    pub fn image(&self, frame_id: &str) -> Option<&MultiChannelImage> {
        self.frames.iter().find(|(id, _)| id == frame_id).map(|(_, img)| img)
    }

    pub fn movies(&self) -> Vec<String> {
        self.ground_truth.movies()
    }

    /// Ground-truth frames and images of the listed movies.
    pub fn frames_of<'a>(&'a self, movies: &'a [String]) -> impl Iterator<Item = (&'a GroundTruthFrame, &'a MultiChannelImage)> {
        self.ground_truth
            .frames
            .iter()
            .zip(&self.frames)
            .filter(move |(f, _)| movies.contains(&f.movie_id))
            .map(|(f, (_, img))| (f, img))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (id, img) in &self.frames {
            save_frame(img, dir, id, u16::MAX)?;
        }
        self.ground_truth.save(&dir.join(GROUND_TRUTH_FILE))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let ground_truth = GroundTruth::load(&dir.join(GROUND_TRUTH_FILE))?;
        let frames = ground_truth
            .frames
            .iter()
            .map(|f| {
                let img = load_frame(dir, &f.frame_id, ground_truth.channels)?;
                if (img.width(), img.height()) != (ground_truth.width, ground_truth.height) {
                    return Err(Error::DimensionMismatch {
                        expected: (ground_truth.width, ground_truth.height),
                        found: (img.width(), img.height()),
                    });
                }
                Ok((f.frame_id.clone(), img))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { frames, ground_truth })
    }
}

/// Per-pixel foreground label and voting target of one annotated frame.
/// Where contours overlap the first one listed wins.
pub fn label_map(frame: &GroundTruthFrame, width: usize, height: usize) -> Vec<Option<(ClassLabel, Vec2)>> {
    let mut out = vec![None; width * height];
    for c in frame.contours.iter().filter(|c| c.class.is_foreground()) {
        let Some(target) = frame.object_center(c.object_id) else { continue };
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &c.polygon {
            x0 = x0.min(v.x);
            y0 = y0.min(v.y);
            x1 = x1.max(v.x);
            y1 = y1.max(v.y);
        }
        let (wf, hf) = (width as f64 - 1.0, height as f64 - 1.0);
        if x1 < 0.0 || y1 < 0.0 || x0 > wf || y0 > hf {
            continue;
        }
        let xs = x0.ceil().max(0.0) as usize..=x1.floor().min(wf) as usize;
        let ys = y0.ceil().max(0.0) as usize..=y1.floor().min(hf) as usize;
        for y in ys {
            for x in xs.clone() {
                let i = y * width + x;
                if out[i].is_none() && point_in_polygon(Vec2::new(x as f64, y as f64), &c.polygon).unwrap_or(false) {
                    out[i] = Some((c.class, target));
                }
            }
        }
    }
    out
}

/// Training samples from the listed movies: every foreground pixel on the
/// `foregroundStride` grid, displaced toward its object's voting target, plus
/// `backgroundRatio` background pixels per foreground sample of each image.
/// Class priors count all pixels of all training frames.
pub fn training_set(ds: &Dataset, movies: &[String], cfg: &PipelineConfig) -> Result<TrainingSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_7A11);
    let stride = cfg.foreground_stride;
    let mut integrals = Vec::new();
    let mut samples = Vec::new();
    let mut counts = [0u64; CLASS_COUNT];
    for (frame, img) in ds.frames_of(movies) {
        let (w, h) = (img.width(), img.height());
        let labels = label_map(frame, w, h);
        counts[ClassLabel::Background.index()] += (w * h) as u64;
        let image = integrals.len();
        let first = samples.len();
        let mut fg = 0usize;
        for (i, l) in labels.iter().enumerate() {
            let Some((class, target)) = *l else { continue };
            counts[class.index()] += 1;
            counts[ClassLabel::Background.index()] -= 1;
            let (x, y) = (i % w, i / w);
            if x % stride != 0 || y % stride != 0 {
                continue;
            }
            let d = target - Vec2::new(x as f64, y as f64);
            if d.norm() > cfg.max_displacement {
                continue;
            }
            samples.push(TrainingSample { image, position: Pixel::new(x, y), label: class, displacement: Some(d) });
            fg += 1;
        }
        if fg == 0 {
            continue;
        }
        let want = (cfg.background_ratio * fg as f64).round() as usize;
        let mut drawn = 0;
        let mut tries = 0;
        while drawn < want && tries < 50 * want + 1000 {
            tries += 1;
            let (x, y) = (rng.random_range(0..w), rng.random_range(0..h));
            if labels[y * w + x].is_none() {
                samples.push(TrainingSample { image, position: Pixel::new(x, y), label: ClassLabel::Background, displacement: None });
                drawn += 1;
            }
        }
        // row-major order within an image keeps feature lookups cache-friendly
        samples[first..].sort_by_key(|s| s.position.row_major());
        integrals.push(img.integrals());
    }
    TrainingSet::new(integrals, samples, counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_dataset, SynthConfig};

    fn small() -> Dataset {
        generate_dataset(&SynthConfig { image_size: 80, cell_count: 5, frame_count: 3, seed: 4, ..Default::default() }, 2).unwrap()
    }

    #[test]
    fn disk_round_trip_quantizes_to_16_bits() {
        let ds = small();
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path()).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(back.ground_truth, ds.ground_truth);
        for ((a, ia), (b, ib)) in ds.frames.iter().zip(&back.frames) {
            assert_eq!(a, b);
            for c in 0..2 {
                for (x, y) in ia.channel(c).iter().zip(ib.channel(c)) {
                    assert!((x - y).abs() <= 0.5 / 65535.0 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn samples_follow_labels() {
        let ds = small();
        let movies = ds.movies();
        let cfg = PipelineConfig { background_ratio: 3.0, ..Default::default() };
        let set = training_set(&ds, &movies, &cfg).unwrap();
        let fg = set.foreground_count();
        assert!(fg > 0);
        let bg = set.samples.len() - fg;
        assert!((bg as f64 - 3.0 * fg as f64).abs() < 1.0 + 0.01 * fg as f64);
        let total: u64 = set.pixel_counts.iter().sum();
        assert_eq!(total as usize, ds.frames.len() * 80 * 80);
        for s in &set.samples {
            if let Some(d) = s.displacement {
                assert!(d.norm() < 30.0);
            }
        }
    }

    #[test]
    fn label_map_marks_contour_interiors() {
        let ds = small();
        let gt = &ds.ground_truth;
        let e = &gt.events[0];
        let f = gt.frame(&e.frame_t).unwrap();
        let map = label_map(f, 80, 80);
        let m = f.object_center(e.mother_object_id).unwrap();
        let (class, target) = map[m.y.round() as usize * 80 + m.x.round() as usize].unwrap();
        assert_eq!(class, ClassLabel::Mother);
        assert_eq!(target, m);
    }
}
