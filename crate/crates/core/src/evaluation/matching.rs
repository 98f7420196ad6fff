use std::ops::AddAssign;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ground_truth::{GroundTruthEvent, GroundTruthFrame};
use super::polygon::{convex_hull, point_in_polygon};
use crate::crf::{candidate_order, MitosisCandidate};
use crate::forest::ClassLabel;
use crate::geometry::Vec2;
use crate::voting::{detection_order, Detection};

/// How a multi-contour object (a daughter pair) is hit.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionRule {
    /// Inside one of the object's contours.
    Strict,
    /// Inside one of the contours or inside their joint convex hull.
    #[default]
    Hull,
}

impl FromStr for RegionRule {
    type Err = crate::error::Error;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(RegionRule::Strict),
            "hull" => Ok(RegionRule::Hull),
            _ => Err(crate::error::Error::Config(format!("region rule must be 'strict' or 'hull', got '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MatchResult {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// Matched object id (or event index) per detection, in ranked order.
    pub assignments: Vec<Option<u32>>,
}

impl MatchResult {
    pub fn detections(&self) -> usize {
        self.true_positives + self.false_positives
    }

    pub fn ground_truth(&self) -> usize {
        self.true_positives + self.false_negatives
    }

    pub fn recall(&self) -> f64 {
        if self.ground_truth() == 0 {
            0.0
        } else {
            self.true_positives as f64 / self.ground_truth() as f64
        }
    }

    /// Precision, defined as 1 when nothing was detected.
    pub fn precision(&self) -> f64 {
        if self.detections() == 0 {
            1.0
        } else {
            self.true_positives as f64 / self.detections() as f64
        }
    }
}

impl AddAssign for MatchResult {
    fn add_assign(&mut self, o: MatchResult) {
        self.true_positives += o.true_positives;
        self.false_positives += o.false_positives;
        self.false_negatives += o.false_negatives;
        self.assignments.extend(o.assignments);
    }
}

struct Region {
    id: u32,
    polygons: Vec<Vec<Vec2>>,
    hull: Option<Vec<Vec2>>,
}

impl Region {
    fn of(frame: &GroundTruthFrame, id: u32, rule: RegionRule) -> Region {
        let polygons: Vec<Vec<Vec2>> = frame.object_contours(id).map(|c| c.polygon.clone()).collect();
        let hull = (rule == RegionRule::Hull && polygons.len() > 1).then(|| {
            let pts: Vec<Vec2> = polygons.iter().flatten().copied().collect();
            convex_hull(&pts)
        });
        Region { id, polygons, hull }
    }

    fn contains(&self, p: Vec2) -> bool {
        let hit = |poly: &[Vec2]| point_in_polygon(p, poly).unwrap_or(false);
        self.polygons.iter().any(|poly| hit(poly)) || self.hull.as_deref().is_some_and(hit)
    }
}

/// Matches ranked cell detections against the objects of `class` in one frame.
pub fn match_detections(dets: &[Detection], gt: &GroundTruthFrame, class: ClassLabel, rule: RegionRule) -> MatchResult {
    let regions: Vec<Region> = gt.object_ids(class).into_iter().map(|id| Region::of(gt, id, rule)).collect();
    let mut ranked = dets.to_vec();
    ranked.sort_by(detection_order);
    let mut matched = vec![false; regions.len()];
    let mut out = MatchResult::default();
    for d in &ranked {
        let p = d.position.to_vec2();
        let hit = (d.class == class)
            .then(|| regions.iter().enumerate().position(|(i, r)| !matched[i] && r.contains(p)))
            .flatten();
        match hit {
            Some(i) => {
                matched[i] = true;
                out.true_positives += 1;
                out.assignments.push(Some(regions[i].id));
            }
            None => {
                out.false_positives += 1;
                out.assignments.push(None);
            }
        }
    }
    out.false_negatives = matched.iter().filter(|m| !**m).count();
    out
}

/// Matches ranked mitosis events of one frame pair against its annotated events.
/// Assignments hold the index into `gt_events`.
pub fn match_mitosis(
    events: &[MitosisCandidate],
    gt_events: &[&GroundTruthEvent],
    frame_t: &GroundTruthFrame,
    frame_t1: &GroundTruthFrame,
    rule: RegionRule,
) -> MatchResult {
    let regions: Vec<(Region, Region)> = gt_events
        .iter()
        .map(|e| (Region::of(frame_t, e.mother_object_id, rule), Region::of(frame_t1, e.daughter_pair_object_id, rule)))
        .collect();
    let mut ranked = events.to_vec();
    ranked.sort_by(candidate_order);
    let mut matched = vec![false; regions.len()];
    let mut out = MatchResult::default();
    for ev in &ranked {
        let (m, d) = (ev.mother.position.to_vec2(), ev.daughter_pair.position.to_vec2());
        match regions.iter().enumerate().position(|(i, (rm, rd))| !matched[i] && rm.contains(m) && rd.contains(d)) {
            Some(i) => {
                matched[i] = true;
                out.true_positives += 1;
                out.assignments.push(Some(i as u32));
            }
            None => {
                out.false_positives += 1;
                out.assignments.push(None);
            }
        }
    }
    out.false_negatives = matched.iter().filter(|m| !**m).count();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crf::CrfFeatures;
    use crate::evaluation::Contour;
    use crate::geometry::Pixel;

    fn square(cx: f64, cy: f64, r: f64) -> Vec<Vec2> {
        vec![Vec2::new(cx - r, cy - r), Vec2::new(cx + r, cy - r), Vec2::new(cx + r, cy + r), Vec2::new(cx - r, cy + r)]
    }

    fn contour(id: u32, class: ClassLabel, cx: f64, cy: f64) -> Contour {
        Contour { object_id: id, class, center: Vec2::new(cx, cy), polygon: square(cx, cy, 3.0) }
    }

    fn frame(contours: Vec<Contour>) -> GroundTruthFrame {
        GroundTruthFrame { frame_id: "f".into(), movie_id: "m".into(), index: 0, contours }
    }

    fn det(x: usize, y: usize, score: f64) -> Detection {
        Detection { position: Pixel::new(x, y), score, class: ClassLabel::Mother }
    }

    #[test]
    fn one_inside_is_tp() {
        let f = frame(vec![contour(1, ClassLabel::Mother, 10.0, 10.0)]);
        let r = match_detections(&[det(10, 11, 0.5)], &f, ClassLabel::Mother, RegionRule::Hull);
        assert_eq!((r.true_positives, r.false_positives, r.false_negatives), (1, 0, 0));
    }

    #[test]
    fn second_detection_in_same_contour_is_fp() {
        let f = frame(vec![contour(1, ClassLabel::Mother, 10.0, 10.0)]);
        let r = match_detections(&[det(9, 9, 0.4), det(10, 11, 0.9)], &f, ClassLabel::Mother, RegionRule::Hull);
        assert_eq!((r.true_positives, r.false_positives, r.false_negatives), (1, 1, 0));
        // the higher-scoring one took the object
        assert_eq!(r.assignments, vec![Some(1), None]);
    }

    #[test]
    fn outside_is_fp_and_empty_contour_is_fn() {
        let f = frame(vec![contour(1, ClassLabel::Mother, 10.0, 10.0)]);
        let r = match_detections(&[det(30, 30, 0.9)], &f, ClassLabel::Mother, RegionRule::Hull);
        assert_eq!((r.true_positives, r.false_positives, r.false_negatives), (0, 1, 1));
    }

    #[test]
    fn wrong_class_contour_does_not_count() {
        let f = frame(vec![contour(1, ClassLabel::Daughter, 10.0, 10.0)]);
        let r = match_detections(&[det(10, 10, 0.9)], &f, ClassLabel::Mother, RegionRule::Hull);
        assert_eq!((r.true_positives, r.false_positives, r.false_negatives), (0, 1, 0));
    }

    #[test]
    fn pair_hull_rule() {
        // two daughters 10 px apart; the midpoint falls between them
        let f = frame(vec![contour(5, ClassLabel::Daughter, 10.0, 10.0), contour(5, ClassLabel::Daughter, 20.0, 10.0)]);
        let mid = Detection { position: Pixel::new(15, 10), score: 1.0, class: ClassLabel::Daughter };
        let hull = match_detections(&[mid], &f, ClassLabel::Daughter, RegionRule::Hull);
        let strict = match_detections(&[mid], &f, ClassLabel::Daughter, RegionRule::Strict);
        assert_eq!(hull.true_positives, 1);
        assert_eq!(strict.true_positives, 0);
    }

    fn event(mx: usize, my: usize, dx: usize, dy: usize, score: f64) -> MitosisCandidate {
        MitosisCandidate {
            mother: det(mx, my, 1.0),
            daughter_pair: Detection { position: Pixel::new(dx, dy), score: 1.0, class: ClassLabel::Daughter },
            features: CrfFeatures::default(),
            score,
        }
    }

    fn mitosis_fixture() -> (GroundTruthFrame, GroundTruthFrame, GroundTruthEvent) {
        let ft = frame(vec![contour(1, ClassLabel::Mother, 10.0, 10.0)]);
        let mut ft1 = frame(vec![contour(2, ClassLabel::Daughter, 14.0, 10.0), contour(2, ClassLabel::Daughter, 22.0, 10.0)]);
        ft1.frame_id = "g".into();
        let e = GroundTruthEvent {
            movie_id: "m".into(),
            frame_t: "f".into(),
            frame_t1: "g".into(),
            mother_object_id: 1,
            daughter_pair_object_id: 2,
        };
        (ft, ft1, e)
    }

    #[test]
    fn mitosis_rules() {
        let (ft, ft1, e) = mitosis_fixture();
        let gt = [&e];
        let both = match_mitosis(&[event(10, 10, 18, 10, 1.0)], &gt, &ft, &ft1, RegionRule::Hull);
        assert_eq!((both.true_positives, both.false_positives, both.false_negatives), (1, 0, 0));

        let daughter_out = match_mitosis(&[event(10, 10, 40, 40, 1.0)], &gt, &ft, &ft1, RegionRule::Hull);
        assert_eq!((daughter_out.true_positives, daughter_out.false_positives, daughter_out.false_negatives), (0, 1, 1));

        let mother_out = match_mitosis(&[event(40, 40, 18, 10, 1.0)], &gt, &ft, &ft1, RegionRule::Hull);
        assert_eq!(mother_out.true_positives, 0);

        let none = match_mitosis(&[], &gt, &ft, &ft1, RegionRule::Hull);
        assert_eq!((none.true_positives, none.false_positives, none.false_negatives), (0, 0, 1));

        let dup = match_mitosis(&[event(10, 10, 18, 10, 0.5), event(11, 10, 14, 10, 0.9)], &gt, &ft, &ft1, RegionRule::Hull);
        assert_eq!((dup.true_positives, dup.false_positives, dup.false_negatives), (1, 1, 0));
        assert_eq!(dup.assignments, vec![Some(0), None]);
    }
}
