//! Deterministic synthetic time-lapse movies with scripted divisions.
//!
//! Channel 0 shows membranes (a bright elliptical ring per cell), channel 1
//! nuclei (a blob inside each cell). Ordinary cells drift slowly between
//! frames. A scripted division shows a round, brighter mother in frame `t`
//! and, in frame `t + 1`, two smaller touching daughters whose midpoint lies
//! a normally distributed distance away from the mother center. Daughters
//! keep normal brightness and afterwards continue as ordinary cells.
//! Ordinary cells occasionally show a single mother cue (a round outline, or
//! mother-like brightness on an elongated cell) so that neither cue alone
//! identifies a mother.

use std::f64::consts::PI;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::crf::DistanceStats;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::{Contour, GroundTruth, GroundTruthEvent, GroundTruthFrame, GT_FORMAT_VERSION};
use crate::forest::ClassLabel;
use crate::geometry::Vec2;
use crate::image::{MultiChannelImage, MEMBRANE, NUCLEUS};

pub const POLYGON_VERTICES: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase", default)]
pub struct SynthConfig {
    pub image_size: usize,
    pub frame_count: usize,
    /// Cells per frame, including the ones that will divide.
    pub cell_count: usize,
    /// Divisions per movie; each at a distinct frame.
    pub mitosis_event_count: usize,
    pub cell_radius_range: (f64, f64),
    pub mother_brightness_boost: f64,
    /// Distribution of the mother-center to daughter-pair-midpoint distance.
    pub pair_distance: DistanceStats,
    pub noise_sigma: f64,
    /// Per-frame positional jitter of ordinary cells (pixels, standard deviation).
    pub drift_sigma: f64,
    /// Chance per frame that an ordinary cell shows one of the two mother
    /// cues (round outline, boosted brightness) without dividing.
    pub confuser_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            image_size: 112,
            frame_count: 4,
            cell_count: 9,
            mitosis_event_count: 2,
            cell_radius_range: (6.0, 8.0),
            mother_brightness_boost: 1.6,
            pair_distance: DistanceStats { mu: 5.0, sigma: 1.5 },
            noise_sigma: 0.06,
            drift_sigma: 1.0,
            confuser_rate: 0.15,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synth: {m}")));
        let (lo, hi) = self.cell_radius_range;
        if self.image_size < 16 {
            return bad("imageSize must be at least 16");
        }
        if self.frame_count < 2 {
            return bad("frameCount must be at least 2");
        }
        if self.mitosis_event_count > self.frame_count - 1 {
            return bad("mitosisEventCount must not exceed frameCount - 1");
        }
        if self.mitosis_event_count > self.cell_count {
            return bad("mitosisEventCount must not exceed cellCount");
        }
        if !(lo > 0.0 && hi >= lo) {
            return bad("cellRadiusRange must be positive and ordered");
        }
        if !(self.pair_distance.sigma > 0.0 && self.pair_distance.mu >= 0.0) {
            return bad("pairDistance needs sigma > 0 and mu >= 0");
        }
        if !(self.mother_brightness_boost >= 1.0) {
            return bad("motherBrightnessBoost must be at least 1");
        }
        if !(self.noise_sigma >= 0.0 && self.drift_sigma >= 0.0) {
            return bad("noiseSigma and driftSigma must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.confuser_rate) {
            return bad("confuserRate must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Cell {
    center: Vec2,
    /// Semi-axes and orientation of the outline.
    a: f64,
    b: f64,
    angle: f64,
    brightness: f64,
    /// Frame in which this cell appears as a dividing mother.
    divides_at: Option<usize>,
}

impl Cell {
    fn outline(&self) -> Vec<Vec2> {
        let (s, c) = self.angle.sin_cos();
        (0..POLYGON_VERTICES)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / POLYGON_VERTICES as f64;
                let (u, v) = (self.a * t.cos(), self.b * t.sin());
                Vec2::new(self.center.x + u * c - v * s, self.center.y + u * s + v * c)
            })
            .collect()
    }

    fn extent(&self) -> f64 {
        self.a.max(self.b)
    }
}

/// One generated movie: frames in time order plus their annotations.
#[derive(Clone, Debug)]
pub struct SynthMovie {
    pub frames: Vec<MultiChannelImage>,
    pub ground_truth: GroundTruth,
}

pub fn frame_id(movie: &str, index: usize) -> String {
    format!("{movie}_f{index:02}")
}

fn render(cells: &[(Cell, f64)], size: usize, noise: f64, rng: &mut ChaCha8Rng) -> MultiChannelImage {
    let mut img = MultiChannelImage::zeros(size, size, 2);
    let n = size * size;
    let mut membrane = vec![0.06; n];
    let mut nucleus = vec![0.04; n];
    for (cell, boost) in cells {
        let (s, c) = cell.angle.sin_cos();
        let reach = cell.extent() + 3.0;
        let x0 = (cell.center.x - reach).floor().max(0.0) as usize;
        let y0 = (cell.center.y - reach).floor().max(0.0) as usize;
        let x1 = ((cell.center.x + reach).ceil() as usize).min(size - 1);
        let y1 = ((cell.center.y + reach).ceil() as usize).min(size - 1);
        let mean_axis = 0.5 * (cell.a + cell.b);
        let ring = 0.42 * cell.brightness * boost;
        let core = 0.5 * cell.brightness * boost;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (dx, dy) = (x as f64 - cell.center.x, y as f64 - cell.center.y);
                let (u, v) = (dx * c + dy * s, -dx * s + dy * c);
                let rho = ((u / cell.a).powi(2) + (v / cell.b).powi(2)).sqrt();
                let edge = (rho - 1.0) * mean_axis;
                let i = y * size + x;
                membrane[i] += ring * (-edge * edge / (2.0 * 0.8 * 0.8)).exp();
                if rho < 1.0 {
                    membrane[i] += 0.05;
                }
                let rn = rho / 0.45;
                nucleus[i] += core * (-0.5 * rn * rn).exp();
            }
        }
    }
    let gauss = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).expect("valid sigma");
    for (buf, ch) in [(membrane, MEMBRANE), (nucleus, NUCLEUS)] {
        let out = img.channel_mut(ch);
        for (o, v) in out.iter_mut().zip(buf) {
            let e = if noise > 0.0 { gauss.sample(rng) } else { 0.0 };
            *o = (v + e).clamp(0.0, 1.0);
        }
    }
    img
}

fn fits(center: Vec2, reach: f64, placed: &[(Vec2, f64)], size: usize) -> bool {
    let s = size as f64;
    center.x - reach >= 1.0
        && center.y - reach >= 1.0
        && center.x + reach <= s - 2.0
        && center.y + reach <= s - 2.0
        && placed.iter().all(|(c, r)| c.distance(center) > r + reach + 1.0)
}

/// Random non-overlapping layout, or `None` if greedy placement gets stuck.
/// Dividing cells go first: they need room for the daughter pair.
fn place_cells(config: &SynthConfig, event_frames: &[usize], max_shift: f64, rng: &mut ChaCha8Rng) -> Option<Vec<Cell>> {
    let size = config.image_size;
    let (rlo, rhi) = config.cell_radius_range;
    let mut cells: Vec<Cell> = Vec::with_capacity(config.cell_count);
    let mut placed: Vec<(Vec2, f64)> = Vec::new();
    for k in 0..config.cell_count {
        let divides_at = event_frames.get(k).copied();
        let a = rng.random_range(rlo..=rhi);
        let b = if divides_at.is_some() { a } else { a * rng.random_range(0.75..=1.0) };
        let reach = if divides_at.is_some() { a * 1.35 + max_shift + 2.0 } else { a.max(b) + 1.0 };
        let center = (0..500)
            .map(|_| Vec2::new(rng.random_range(0.0..size as f64), rng.random_range(0.0..size as f64)))
            .find(|c| fits(*c, reach, &placed, size))?;
        placed.push((center, reach));
        cells.push(Cell {
            center,
            a,
            b,
            angle: rng.random_range(0.0..PI),
            brightness: rng.random_range(0.85..=1.15),
            divides_at,
        });
    }
    Some(cells)
}

/// Generates one movie named `movie_id`.
pub fn generate_sequence(config: &SynthConfig, movie_id: &str) -> Result<SynthMovie> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let size = config.image_size;
    let pd = config.pair_distance;
    let max_shift = pd.mu + 3.0 * pd.sigma;

    let event_frames: Vec<usize> = {
        let mut v = sample(&mut rng, config.frame_count - 1, config.mitosis_event_count).into_vec();
        v.sort_unstable();
        v
    };

    let mut cells = None;
    for _ in 0..50 {
        cells = place_cells(config, &event_frames, max_shift, &mut rng);
        if cells.is_some() {
            break;
        }
    }
    let mut cells = cells.ok_or(Error::PlacementFailed(config.cell_count))?;

    let drift = Normal::new(0.0, config.drift_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let shift_dist = Normal::new(pd.mu, pd.sigma).expect("valid sigma");
    let mut next_id = 1u32;
    let mut frames = Vec::with_capacity(config.frame_count);
    let mut gt_frames = Vec::with_capacity(config.frame_count);
    let mut events = Vec::new();
    // mother object id and center per cell index for a division in the previous frame
    let mut pending: Vec<(usize, u32, Vec2)> = Vec::new();

    for f in 0..config.frame_count {
        let fid = frame_id(movie_id, f);
        let mut contours = Vec::new();
        let mut drawn: Vec<(Cell, f64)> = Vec::new();

        if f > 0 && config.drift_sigma > 0.0 {
            for cell in &mut cells {
                let d = Vec2::new(drift.sample(&mut rng), drift.sample(&mut rng));
                cell.center = cell.center + d;
                cell.angle += rng.random_range(-0.1..0.1);
            }
        }

        // divisions from the previous frame turn into daughter pairs
        let mut born = Vec::new();
        for (idx, mother_id, mother_center) in pending.drain(..) {
            let mother = cells[idx].clone();
            let shift = loop {
                let s = shift_dist.sample(&mut rng);
                if (0.0..=max_shift).contains(&s) {
                    break s;
                }
            };
            let dir = rng.random_range(0.0..2.0 * PI);
            let mid = mother_center + Vec2::new(dir.cos(), dir.sin()) * shift;
            let axis = rng.random_range(0.0..PI);
            let along = 0.6 * mother.a;
            let across = 0.75 * mother.a;
            let unit = Vec2::new(axis.cos(), axis.sin());
            let pair_id = next_id;
            next_id += 1;
            for side in [-1.0, 1.0] {
                let d = Cell {
                    center: mid + unit * (side * along),
                    a: along,
                    b: across,
                    angle: axis,
                    brightness: mother.brightness * rng.random_range(0.9..=1.1),
                    divides_at: None,
                };
                contours.push(Contour { object_id: pair_id, class: ClassLabel::Daughter, center: d.center, polygon: d.outline() });
                born.push(d);
            }
            events.push(GroundTruthEvent {
                movie_id: movie_id.to_string(),
                frame_t: frame_id(movie_id, f - 1),
                frame_t1: fid.clone(),
                mother_object_id: mother_id,
                daughter_pair_object_id: pair_id,
            });
            cells[idx].divides_at = Some(usize::MAX); // retired
        }
        cells.retain(|c| c.divides_at != Some(usize::MAX));
        cells.extend(born);

        for (idx, cell) in cells.iter().enumerate() {
            if cell.divides_at == Some(f) {
                let r = cell.a.max(cell.b) * 1.05;
                let mother = Cell { a: r, b: r, ..cell.clone() };
                let id = next_id;
                next_id += 1;
                contours.push(Contour { object_id: id, class: ClassLabel::Mother, center: mother.center, polygon: mother.outline() });
                drawn.push((mother, config.mother_brightness_boost));
                pending.push((idx, id, cell.center));
            } else if config.confuser_rate > 0.0 && rng.random_bool(config.confuser_rate) {
                // shows one mother cue but never both: round at normal
                // brightness, or mother-bright but clearly elongated
                let r = cell.a.max(cell.b);
                if rng.random_bool(0.5) {
                    drawn.push((Cell { a: r, b: r, ..cell.clone() }, 1.0));
                } else {
                    drawn.push((Cell { a: r, b: 0.7 * r, ..cell.clone() }, config.mother_brightness_boost));
                }
            } else {
                drawn.push((cell.clone(), 1.0));
            }
        }

        frames.push(render(&drawn, size, config.noise_sigma, &mut rng));
        gt_frames.push(GroundTruthFrame { frame_id: fid, movie_id: movie_id.to_string(), index: f, contours });
    }

    let ground_truth = GroundTruth {
        format_version: GT_FORMAT_VERSION,
        width: size,
        height: size,
        channels: 2,
        frames: gt_frames,
        events,
    };
    Ok(SynthMovie { frames, ground_truth })
}

pub fn movie_name(index: usize) -> String {
    format!("movie{index:03}")
}

/// Seed of movie `index` in a data set generated from `base_seed`.
pub fn movie_seed(base_seed: u64, index: usize) -> u64 {
    base_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64 + 1)
}

/// `movie_count` movies named `movie000`, `movie001`, ...
pub fn generate_dataset(config: &SynthConfig, movie_count: usize) -> Result<Dataset> {
    generate_movies(config, 0..movie_count)
}

/// Movies with the given indices; a movie's content depends only on
/// `config.seed` and its index.
pub fn generate_movies(config: &SynthConfig, indices: impl IntoIterator<Item = usize>) -> Result<Dataset> {
    let mut frames = Vec::new();
    let mut gt = GroundTruth {
        format_version: GT_FORMAT_VERSION,
        width: config.image_size,
        height: config.image_size,
        channels: 2,
        frames: Vec::new(),
        events: Vec::new(),
    };
    for i in indices {
        let name = movie_name(i);
        let cfg = SynthConfig { seed: movie_seed(config.seed, i), ..config.clone() };
        let movie = generate_sequence(&cfg, &name)?;
        for (img, f) in movie.frames.into_iter().zip(&movie.ground_truth.frames) {
            frames.push((f.frame_id.clone(), img));
        }
        gt.frames.extend(movie.ground_truth.frames);
        gt.events.extend(movie.ground_truth.events);
    }
    Ok(Dataset { frames, ground_truth: gt })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::point_in_polygon;

    #[test]
    fn same_seed_same_movie() {
        let c = SynthConfig::default();
        let a = generate_sequence(&c, "m").unwrap();
        let b = generate_sequence(&c, "m").unwrap();
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.ground_truth, b.ground_truth);
        let d = generate_sequence(&SynthConfig { seed: 2, ..c }, "m").unwrap();
        assert_ne!(a.frames, d.frames);
    }

    #[test]
    fn event_count_and_links() {
        for k in 0..=3 {
            let c = SynthConfig { mitosis_event_count: k, seed: 10 + k as u64, ..Default::default() };
            let m = generate_sequence(&c, "m").unwrap();
            assert_eq!(m.ground_truth.events.len(), k);
            m.ground_truth.validate().unwrap();
            for e in &m.ground_truth.events {
                let ft1 = m.ground_truth.frame(&e.frame_t1).unwrap();
                assert_eq!(ft1.object_contours(e.daughter_pair_object_id).count(), 2);
            }
        }
    }

    #[test]
    fn centers_inside_own_polygons_and_pixels_in_range() {
        let m = generate_sequence(&SynthConfig { seed: 3, ..Default::default() }, "m").unwrap();
        for f in &m.ground_truth.frames {
            for c in &f.contours {
                assert!(point_in_polygon(c.center, &c.polygon).unwrap());
            }
        }
        for img in &m.frames {
            for ch in 0..img.channel_count() {
                assert!(img.channel(ch).iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }

    #[test]
    fn mothers_are_brighter_than_other_cells() {
        let d = generate_dataset(&SynthConfig { seed: 5, ..Default::default() }, 6).unwrap();
        let (mut mother, mut other) = (Vec::new(), Vec::new());
        for ((_, img), f) in d.frames.iter().zip(&d.ground_truth.frames) {
            for c in &f.contours {
                let v = img.get(NUCLEUS, c.center.x.round() as usize, c.center.y.round() as usize);
                if c.class == ClassLabel::Mother { mother.push(v) } else { other.push(v) }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&mother) > 1.2 * mean(&other), "{} vs {}", mean(&mother), mean(&other));
    }

    #[test]
    fn pair_distance_follows_config() {
        let c = SynthConfig { frame_count: 5, mitosis_event_count: 4, seed: 77, ..Default::default() };
        let d = generate_dataset(&c, 50).unwrap();
        let gt = &d.ground_truth;
        let dists: Vec<f64> = gt.events.iter().map(|e| {
            let (m, p) = gt.event_centers(e).unwrap();
            m.distance(p)
        }).collect();
        assert_eq!(dists.len(), 200);
        let n = dists.len() as f64;
        let mean = dists.iter().sum::<f64>() / n;
        let se = c.pair_distance.sigma / n.sqrt();
        assert!((mean - c.pair_distance.mu).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn invalid_configs() {
        let base = SynthConfig::default();
        assert!(SynthConfig { mitosis_event_count: 4, ..base.clone() }.validate().is_err());
        assert!(SynthConfig { cell_radius_range: (5.0, 2.0), ..base.clone() }.validate().is_err());
        assert!(SynthConfig { pair_distance: DistanceStats { mu: 3.0, sigma: 0.0 }, ..base.clone() }.validate().is_err());
        let crowded = SynthConfig { image_size: 32, cell_count: 40, ..base };
        assert!(matches!(generate_sequence(&crowded, "m"), Err(Error::PlacementFailed(_))));
    }
}
