//! Text outputs of the command-line tool. Every file starts with a
//! `# hmd-<kind> v<version>` line followed by a CSV header.

use std::fmt::Write as _;

use crate::crf::MitosisCandidate;
use crate::evaluation::CvResult;
use crate::forest::ClassLabel;
use crate::pipeline::CellDetections;

pub const REPORT_FORMAT_VERSION: u32 = 1;

fn header(kind: &str, columns: &str) -> String {
    format!("# hmd-{kind} v{REPORT_FORMAT_VERSION}\n{columns}\n")
}

/// `frame,class,x,y,score`, one row per detection in frame order.
pub fn detections_csv<'a>(frames: impl IntoIterator<Item = (&'a str, &'a CellDetections)>) -> String {
    let mut s = header("detections", "frame,class,x,y,score");
    for (frame, d) in frames {
        for class in ClassLabel::FOREGROUND {
            for det in d.of(class) {
                writeln!(s, "{frame},{},{},{},{}", class.name(), det.position.x, det.position.y, det.score).unwrap();
            }
        }
    }
    s
}

/// `frameT,motherX,motherY,daughterX,daughterY,score`, ranked within each frame pair.
pub fn events_csv<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a [MitosisCandidate])>) -> String {
    let mut s = header("events", "frameT,motherX,motherY,daughterX,daughterY,score");
    for (frame, events) in pairs {
        for e in events {
            let (m, d) = (e.mother.position, e.daughter_pair.position);
            writeln!(s, "{frame},{},{},{},{},{}", m.x, m.y, d.x, d.y, e.score).unwrap();
        }
    }
    s
}

/// `fold,testMovies,auc` rows followed by a `mean` row. Test movies are
/// separated by `;`.
pub fn auc_summary_csv(target: &str, cv: &CvResult) -> String {
    let mut s = header("auc", "fold,testMovies,auc");
    writeln!(s, "# target {target}").unwrap();
    for (k, (movies, a)) in cv.test_movies.iter().zip(&cv.fold_aucs).enumerate() {
        writeln!(s, "{k},{},{a}", movies.join(";")).unwrap();
    }
    writeln!(s, "mean,,{}", cv.mean_auc).unwrap();
    s
}

/// `model,meanAuc,fold0,fold1,...` with one row per association model.
pub fn ablation_csv(models: &[(&str, Vec<f64>)]) -> String {
    let folds = models.first().map_or(0, |m| m.1.len());
    let cols: Vec<String> = (0..folds).map(|k| format!("fold{k}")).collect();
    let mut s = header("ablation", &format!("model,meanAuc{}{}", if folds > 0 { "," } else { "" }, cols.join(",")));
    for (name, aucs) in models {
        let mean = aucs.iter().sum::<f64>() / aucs.len().max(1) as f64;
        write!(s, "{name},{mean}").unwrap();
        for a in aucs {
            write!(s, ",{a}").unwrap();
        }
        s.push('\n');
    }
    s
}

/// Parses the `mean` row of an AUC summary.
pub fn parse_mean_auc(summary: &str) -> Option<f64> {
    summary.lines().find_map(|l| l.strip_prefix("mean,,")).and_then(|v| v.trim().parse().ok())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pixel;
    use crate::voting::Detection;

    #[test]
    fn detection_rows() {
        let d = CellDetections {
            mothers: vec![Detection { position: Pixel::new(3, 4), score: 0.5, class: ClassLabel::Mother }],
            daughters: vec![],
        };
        let s = detections_csv([("f0", &d)]);
        assert_eq!(s, "# hmd-detections v1\nframe,class,x,y,score\nf0,mother,3,4,0.5\n");
    }

    #[test]
    fn summary_and_ablation() {
        let cv = CvResult {
            test_movies: vec![vec!["a".into()], vec!["b".into(), "c".into()]],
            fold_curves: vec![vec![], vec![]],
            fold_aucs: vec![0.5, 0.75],
            mean_auc: 0.625,
        };
        let s = auc_summary_csv("mother", &cv);
        assert!(s.contains("1,b;c,0.75\n"));
        assert_eq!(parse_mean_auc(&s), Some(0.625));
        let t = ablation_csv(&[("full", vec![0.5, 1.0]), ("mother+daughter", vec![0.25, 0.25])]);
        assert_eq!(t.lines().nth(1), Some("model,meanAuc,fold0,fold1"));
        assert_eq!(t.lines().nth(2), Some("full,0.75,0.5,1"));
    }
}
