//! Ground truth, detection matching, precision-recall curves and grouped
//! cross-validation.
//!
//! Matching rules: a detection inside an object of the right class is a true
//! positive if it is the highest-scoring detection to reach that object;
//! further detections inside the same object, and detections inside no
//! object, are false positives. Objects that no detection reaches are false
//! negatives. A mitosis event is a true positive only when its mother position
//! lies in the linked mother contour and its daughter-pair position lies in
//! the linked daughter-pair region.

mod curve;
mod cv;
mod ground_truth;
mod matching;
mod polygon;

pub use curve::{auc, pr_curve, read_curve_csv, write_curve_csv, write_curve_svg, CurvePoint};
pub use cv::{cross_validate, fold_assignment, CvResult, Folds};
pub use ground_truth::{Contour, GroundTruth, GroundTruthEvent, GroundTruthFrame, GT_FORMAT_VERSION};
pub use matching::{match_detections, match_mitosis, MatchResult, RegionRule};
pub use polygon::{convex_hull, point_in_polygon};
