use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::ClassLabel;
use crate::geometry::Vec2;

pub const GT_FORMAT_VERSION: u32 = 1;

/// One annotated outline. A daughter pair is two contours sharing an `objectId`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct Contour {
    pub object_id: u32,
    pub class: ClassLabel,
    /// Center of this cell (for a daughter, of the single daughter cell).
    pub center: Vec2,
    pub polygon: Vec<Vec2>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct GroundTruthFrame {
    /// File stem of the frame's channel images.
    pub frame_id: String,
    pub movie_id: String,
    /// Time index within the movie.
    pub index: usize,
    pub contours: Vec<Contour>,
}

impl GroundTruthFrame {
    pub fn object_contours(&self, id: u32) -> impl Iterator<Item = &Contour> {
        self.contours.iter().filter(move |c| c.object_id == id)
    }

    /// Object ids of the given class, ascending.
    pub fn object_ids(&self, class: ClassLabel) -> Vec<u32> {
        let ids: BTreeSet<u32> = self.contours.iter().filter(|c| c.class == class).map(|c| c.object_id).collect();
        ids.into_iter().collect()
    }

    /// The object's voting target: the mother center, or the midpoint of a
    /// daughter pair (mean of its contour centers).
    pub fn object_center(&self, id: u32) -> Option<Vec2> {
        let (mut sum, mut n) = (Vec2::ZERO, 0);
        for c in self.object_contours(id) {
            sum = sum + c.center;
            n += 1;
        }
        (n > 0).then(|| sum * (1.0 / n as f64))
    }
}

/// A mother in `frame_t` linked to its daughter pair in `frame_t1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct GroundTruthEvent {
    pub movie_id: String,
    pub frame_t: String,
    pub frame_t1: String,
    pub mother_object_id: u32,
    pub daughter_pair_object_id: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct GroundTruth {
    pub format_version: u32,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub frames: Vec<GroundTruthFrame>,
    pub events: Vec<GroundTruthEvent>,
}

impl GroundTruth {
    pub fn frame(&self, id: &str) -> Option<&GroundTruthFrame> {
        self.frames.iter().find(|f| f.frame_id == id)
    }

    /// Distinct movie ids, sorted.
    pub fn movies(&self) -> Vec<String> {
        let s: BTreeSet<&str> = self.frames.iter().map(|f| f.movie_id.as_str()).collect();
        s.into_iter().map(String::from).collect()
    }

    /// Frames of one movie in time order.
    pub fn movie_frames(&self, movie: &str) -> Vec<&GroundTruthFrame> {
        let mut v: Vec<&GroundTruthFrame> = self.frames.iter().filter(|f| f.movie_id == movie).collect();
        v.sort_by_key(|f| f.index);
        v
    }

    /// Consecutive frame pairs `(t, t + 1)` of one movie.
    pub fn frame_pairs(&self, movie: &str) -> Vec<(&GroundTruthFrame, &GroundTruthFrame)> {
        let frames = self.movie_frames(movie);
        frames.windows(2).filter(|w| w[1].index == w[0].index + 1).map(|w| (w[0], w[1])).collect()
    }

    pub fn events_between(&self, frame_t: &str, frame_t1: &str) -> Vec<&GroundTruthEvent> {
        self.events.iter().filter(|e| e.frame_t == frame_t && e.frame_t1 == frame_t1).collect()
    }

    /// Mother and daughter-pair centers of an event.
    pub fn event_centers(&self, e: &GroundTruthEvent) -> Option<(Vec2, Vec2)> {
        let m = self.frame(&e.frame_t)?.object_center(e.mother_object_id)?;
        let d = self.frame(&e.frame_t1)?.object_center(e.daughter_pair_object_id)?;
        Some((m, d))
    }

    /// Keeps only the listed movies.
    pub fn subset(&self, movies: &[String]) -> GroundTruth {
        let keep = |m: &String| movies.contains(m);
        GroundTruth {
            frames: self.frames.iter().filter(|f| keep(&f.movie_id)).cloned().collect(),
            events: self.events.iter().filter(|e| keep(&e.movie_id)).cloned().collect(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(format!("ground truth: {m}")));
        if self.format_version != GT_FORMAT_VERSION {
            return bad(format!("unsupported formatVersion {}", self.format_version));
        }
        let mut ids = BTreeSet::new();
        for f in &self.frames {
            if !ids.insert(f.frame_id.as_str()) {
                return bad(format!("duplicate frame id {}", f.frame_id));
            }
            for c in &f.contours {
                if c.polygon.len() < 3 {
                    return bad(format!("contour {} in {} has fewer than 3 vertices", c.object_id, f.frame_id));
                }
                if c.class == ClassLabel::Background {
                    return bad(format!("contour {} in {} is labelled background", c.object_id, f.frame_id));
                }
            }
        }
        for e in &self.events {
            let (Some(ft), Some(ft1)) = (self.frame(&e.frame_t), self.frame(&e.frame_t1)) else {
                return bad(format!("event references unknown frames {} / {}", e.frame_t, e.frame_t1));
            };
            let has = |f: &GroundTruthFrame, id, class| f.object_contours(id).any(|c| c.class == class);
            if !has(ft, e.mother_object_id, ClassLabel::Mother) || !has(ft1, e.daughter_pair_object_id, ClassLabel::Daughter) {
                return bad(format!("event {} -> {} references missing objects", e.frame_t, e.frame_t1));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ground truth serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let gt: GroundTruth = serde_json::from_str(s)?;
        gt.validate()?;
        Ok(gt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}
