//! End-to-end pipeline: training, cell detection, mitosis detection and
//! pooled precision-recall evaluation over held-out movies.

use rayon::prelude::*;

use crate::config::{DetectorMode, PipelineConfig};
use crate::crf::{
    enumerate_candidates, fit_distance_stats, fit_weights, mitosis_score, select_events, CrfComponents, CrfFeatures,
    CrfWeights, DistanceStats, MitosisCandidate, distance_prob,
};
use crate::dataset::{training_set, Dataset};
use crate::error::{Error, Result};
use crate::evaluation::{
    auc, cross_validate, match_detections, match_mitosis, pr_curve, CurvePoint, CvResult, GroundTruthFrame,
    MatchResult,
};
use crate::forest::{train_forest, ClassLabel, HoughForestModel};
use crate::geometry::Pixel;
use crate::image::MultiChannelImage;
use crate::voting::{cast_votes, component_detections, nms, posterior_maps, smooth, Detection, HoughMap};

/// Trains a cell detector on the listed movies.
pub fn train_detector(ds: &Dataset, movies: &[String], cfg: &PipelineConfig, mode: DetectorMode) -> Result<HoughForestModel> {
    let set = training_set(ds, movies, cfg)?;
    train_forest(&set, &cfg.forest_params(mode), &cfg.patch())
}

/// Smoothed mother and daughter-pair Hough maps of one frame.
pub fn vote_maps(model: &HoughForestModel, image: &MultiChannelImage, cfg: &PipelineConfig) -> Result<[HoughMap; 2]> {
    if !model.has_votes() {
        return Err(Error::InvalidInput("model stores no votes; use cf mode".into()));
    }
    let [m, d] = cast_votes(model, image)?;
    Ok([smooth(&m, cfg.smoothing_sigma), smooth(&d, cfg.smoothing_sigma)])
}

/// Scored mother and daughter-pair detections of one frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CellDetections {
    pub mothers: Vec<Detection>,
    pub daughters: Vec<Detection>,
}

impl CellDetections {
    pub fn of(&self, class: ClassLabel) -> &[Detection] {
        match class {
            ClassLabel::Mother => &self.mothers,
            ClassLabel::Daughter => &self.daughters,
            ClassLabel::Background => &[],
        }
    }
}

/// Voting modes take NMS peaks of the smoothed Hough maps; `cf` takes
/// connected components of the pixel classification.
pub fn detect_cells(
    model: &HoughForestModel,
    image: &MultiChannelImage,
    cfg: &PipelineConfig,
    mode: DetectorMode,
) -> Result<CellDetections> {
    if mode.uses_votes() {
        let [m, d] = vote_maps(model, image, cfg)?;
        Ok(CellDetections {
            mothers: nms(&m, cfg.nms_radius, cfg.detection_threshold),
            daughters: nms(&d, cfg.nms_radius, cfg.detection_threshold),
        })
    } else {
        let post = posterior_maps(model, image);
        let (w, h) = (image.width(), image.height());
        let keep = |v: Vec<Detection>| v.into_iter().filter(|d| d.score >= cfg.detection_threshold).collect();
        Ok(CellDetections {
            mothers: keep(component_detections(&post, w, h, ClassLabel::Mother)),
            daughters: keep(component_detections(&post, w, h, ClassLabel::Daughter)),
        })
    }
}

/// Peaks above `candidateFraction` of the map maximum.
fn gated_peaks(map: &HoughMap, cfg: &PipelineConfig) -> Vec<Detection> {
    nms(map, cfg.nms_radius, cfg.candidate_fraction * map.max())
}

/// Unscored mitosis candidates between frame `t` (mother map) and `t + 1`
/// (daughter map).
pub fn mitosis_candidates(
    maps_t: &[HoughMap; 2],
    maps_t1: &[HoughMap; 2],
    stats: &DistanceStats,
    cfg: &PipelineConfig,
) -> Vec<MitosisCandidate> {
    let mothers = gated_peaks(&maps_t[0], cfg);
    let daughters = gated_peaks(&maps_t1[1], cfg);
    let radius = stats.mu + cfg.max_radius_sigmas * stats.sigma;
    enumerate_candidates(&mothers, &daughters, radius, stats)
}

/// Ranked mitosis events for one frame pair; no two share a detection.
pub fn detect_mitosis(
    model: &HoughForestModel,
    weights: &CrfWeights,
    frame_t: &MultiChannelImage,
    frame_t1: &MultiChannelImage,
    cfg: &PipelineConfig,
) -> Result<Vec<MitosisCandidate>> {
    let (mt, mt1) = (vote_maps(model, frame_t, cfg)?, vote_maps(model, frame_t1, cfg)?);
    Ok(events_from_maps(&mt, &mt1, weights, cfg))
}

fn events_from_maps(mt: &[HoughMap; 2], mt1: &[HoughMap; 2], w: &CrfWeights, cfg: &PipelineConfig) -> Vec<MitosisCandidate> {
    select_events(&mitosis_candidates(mt, mt1, &w.stats, cfg), w)
}

/// Smoothed maps of every frame of the listed movies, keyed by frame id.
fn all_maps(
    model: &HoughForestModel,
    ds: &Dataset,
    movies: &[String],
    cfg: &PipelineConfig,
) -> Result<Vec<(String, [HoughMap; 2])>> {
    let frames: Vec<(&GroundTruthFrame, &MultiChannelImage)> = ds.frames_of(movies).collect();
    frames
        .par_iter()
        .map(|(f, img)| Ok((f.frame_id.clone(), vote_maps(model, img, cfg)?)))
        .collect()
}

fn maps_of<'a>(maps: &'a [(String, [HoughMap; 2])], id: &str) -> &'a [HoughMap; 2] {
    &maps.iter().find(|(k, _)| k == id).expect("maps computed for every frame").1
}

struct FramePair<'a> {
    t: &'a GroundTruthFrame,
    t1: &'a GroundTruthFrame,
}

fn frame_pairs<'a>(ds: &'a Dataset, movies: &[String]) -> Vec<FramePair<'a>> {
    let mut out = Vec::new();
    for m in movies {
        for (t, t1) in ds.ground_truth.frame_pairs(m) {
            out.push(FramePair { t, t1 });
        }
    }
    out
}

fn round_pixel(p: crate::geometry::Vec2, w: usize, h: usize) -> Pixel {
    Pixel::new((p.x.round().max(0.0) as usize).min(w - 1), (p.y.round().max(0.0) as usize).min(h - 1))
}

/// Logistic-regression examples for the association weights.
///
/// Each annotated event gives one positive: the Hough values at the
/// annotated mother center and daughter-pair midpoint with the annotated
/// distance. Each frame pair gives up to `hardNegatives` negatives: the
/// candidates that match no event, ranked by their unit-weight score.
pub fn crf_training_examples(
    model: &HoughForestModel,
    ds: &Dataset,
    movies: &[String],
    stats: &DistanceStats,
    cfg: &PipelineConfig,
) -> Result<Vec<(CrfFeatures, bool)>> {
    let maps = all_maps(model, ds, movies, cfg)?;
    let gt = &ds.ground_truth;
    let unit = CrfWeights::new(1.0, 1.0, 1.0, 0.0, *stats);
    let mut out = Vec::new();
    for pair in frame_pairs(ds, movies) {
        let (mt, mt1) = (maps_of(&maps, &pair.t.frame_id), maps_of(&maps, &pair.t1.frame_id));
        let events = gt.events_between(&pair.t.frame_id, &pair.t1.frame_id);
        for e in &events {
            let (m, d) = gt.event_centers(e).ok_or_else(|| Error::InvalidInput("event without contours".into()))?;
            let (w, h) = (mt[0].width, mt[0].height);
            out.push((
                CrfFeatures {
                    h_m: mt[0].at(round_pixel(m, w, h)),
                    h_d: mt1[1].at(round_pixel(d, w, h)),
                    p_dist: distance_prob(m, d, stats),
                },
                true,
            ));
        }
        let mut negatives: Vec<MitosisCandidate> = mitosis_candidates(mt, mt1, stats, cfg)
            .into_iter()
            .filter(|c| match_mitosis(std::slice::from_ref(c), &events, pair.t, pair.t1, cfg.region_rule).true_positives == 0)
            .map(|c| MitosisCandidate { score: mitosis_score(&c.features, &unit), ..c })
            .collect();
        negatives.sort_by(crate::crf::candidate_order);
        out.extend(negatives.into_iter().take(cfg.hard_negatives).map(|c| (c.features, false)));
    }
    Ok(out)
}

/// Distance statistics from the annotated events of the listed movies.
pub fn event_distance_stats(ds: &Dataset, movies: &[String]) -> Result<DistanceStats> {
    let gt = &ds.ground_truth;
    let links: Vec<_> = gt.events.iter().filter(|e| movies.contains(&e.movie_id)).filter_map(|e| gt.event_centers(e)).collect();
    fit_distance_stats(&links)
}

/// Association weights for the full model and each two-component model, in
/// the order of [`CrfComponents::ABLATIONS`].
pub fn train_association(
    model: &HoughForestModel,
    ds: &Dataset,
    movies: &[String],
    cfg: &PipelineConfig,
) -> Result<Vec<(&'static str, CrfWeights)>> {
    let stats = event_distance_stats(ds, movies)?;
    let examples = crf_training_examples(model, ds, movies, &stats, cfg)?;
    CrfComponents::ABLATIONS
        .iter()
        .map(|(name, c)| Ok((*name, fit_weights(&examples, *c, stats)?.weights)))
        .collect()
}

/// Ranked outcomes pooled over many frames: `(score, is true positive)` per
/// detection plus the number of annotated objects.
#[derive(Clone, Debug, Default)]
struct Pooled {
    outcomes: Vec<(f64, bool)>,
    objects: usize,
}

impl Pooled {
    fn add(&mut self, scores: impl IntoIterator<Item = f64>, m: &MatchResult) {
        self.outcomes.extend(scores.into_iter().zip(m.assignments.iter().map(|a| a.is_some())));
        self.objects += m.ground_truth();
    }

    /// Greedy matching in score order makes the result for any threshold the
    /// prefix of the full ranked matching, so one pass serves the whole sweep.
    fn curve(mut self) -> Result<Vec<CurvePoint>> {
        self.outcomes.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut tp_prefix = Vec::with_capacity(self.outcomes.len() + 1);
        tp_prefix.push(0usize);
        for (_, tp) in &self.outcomes {
            tp_prefix.push(tp_prefix.last().unwrap() + *tp as usize);
        }
        let scores: Vec<f64> = self.outcomes.iter().map(|o| o.0).collect();
        let objects = self.objects;
        pr_curve(&scores, |t| {
            let kept = scores.partition_point(|s| *s >= t);
            let tp = tp_prefix[kept];
            MatchResult { true_positives: tp, false_positives: kept - tp, false_negatives: objects - tp, assignments: vec![] }
        })
    }
}

/// Pooled mother and daughter-pair PR curves over every frame of `movies`.
pub fn cell_curves(
    model: &HoughForestModel,
    ds: &Dataset,
    movies: &[String],
    cfg: &PipelineConfig,
    mode: DetectorMode,
) -> Result<[Vec<CurvePoint>; 2]> {
    let frames: Vec<(&GroundTruthFrame, &MultiChannelImage)> = ds.frames_of(movies).collect();
    let dets = frames
        .par_iter()
        .map(|(_, img)| detect_cells(model, img, cfg, mode))
        .collect::<Result<Vec<_>>>()?;
    let mut pooled = [Pooled::default(), Pooled::default()];
    for ((f, _), d) in frames.iter().zip(&dets) {
        for (k, class) in ClassLabel::FOREGROUND.into_iter().enumerate() {
            let m = match_detections(d.of(class), f, class, cfg.region_rule);
            let mut ranked = d.of(class).to_vec();
            ranked.sort_by(crate::voting::detection_order);
            pooled[k].add(ranked.iter().map(|d| d.score), &m);
        }
    }
    let [a, b] = pooled;
    Ok([a.curve()?, b.curve()?])
}

/// Pooled mitosis PR curve for each weight set over every frame pair of `movies`.
pub fn mitosis_curves(
    model: &HoughForestModel,
    weights: &[CrfWeights],
    ds: &Dataset,
    movies: &[String],
    cfg: &PipelineConfig,
) -> Result<Vec<Vec<CurvePoint>>> {
    let maps = all_maps(model, ds, movies, cfg)?;
    let gt = &ds.ground_truth;
    let pairs = frame_pairs(ds, movies);
    weights
        .iter()
        .map(|w| {
            let mut pooled = Pooled::default();
            for p in &pairs {
                let events = events_from_maps(maps_of(&maps, &p.t.frame_id), maps_of(&maps, &p.t1.frame_id), w, cfg);
                let gt_events = gt.events_between(&p.t.frame_id, &p.t1.frame_id);
                let m = match_mitosis(&events, &gt_events, p.t, p.t1, cfg.region_rule);
                pooled.add(events.iter().map(|e| e.score), &m);
            }
            pooled.curve()
        })
        .collect()
}

/// AUCs of one train/test split.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkReport {
    /// Mother and daughter-pair AUC per detector mode.
    pub cells: Vec<(DetectorMode, [f64; 2])>,
    /// Mitosis AUC per association model, full model first.
    pub mitosis: Vec<(&'static str, f64)>,
}

impl BenchmarkReport {
    pub fn cell_auc(&self, mode: DetectorMode, class: ClassLabel) -> f64 {
        let k = if class == ClassLabel::Mother { 0 } else { 1 };
        self.cells.iter().find(|(m, _)| *m == mode).map(|(_, a)| a[k]).unwrap_or(f64::NAN)
    }

    pub fn mitosis_auc(&self, name: &str) -> f64 {
        self.mitosis.iter().find(|(n, _)| *n == name).map(|(_, a)| *a).unwrap_or(f64::NAN)
    }
}

/// Trains on `train`, tests on `test`: all three detector modes and all four
/// association models. The classification forest is trained once; `cf`
/// evaluates it without its votes.
pub fn run_benchmark(ds: &Dataset, train: &[String], test: &[String], cfg: &PipelineConfig) -> Result<BenchmarkReport> {
    let hf = train_detector(ds, train, cfg, DetectorMode::Hf)?;
    let cf_hv = train_detector(ds, train, cfg, DetectorMode::CfHv)?;
    let mut cf = cf_hv.clone();
    cf.strip_votes();
    let mut cells = Vec::new();
    for (mode, model) in [(DetectorMode::Hf, &hf), (DetectorMode::CfHv, &cf_hv), (DetectorMode::Cf, &cf)] {
        let [m, d] = cell_curves(model, ds, test, cfg, mode)?;
        cells.push((mode, [auc(&m)?, auc(&d)?]));
    }
    let assoc = train_association(&hf, ds, train, cfg)?;
    let weights: Vec<CrfWeights> = assoc.iter().map(|(_, w)| *w).collect();
    let curves = mitosis_curves(&hf, &weights, ds, test, cfg)?;
    let mitosis = assoc.iter().zip(&curves).map(|((n, _), c)| Ok((*n, auc(c)?))).collect::<Result<Vec<_>>>()?;
    Ok(BenchmarkReport { cells, mitosis })
}

/// What `eval` measures.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum EvalTarget {
    Mother,
    Daughter,
    Mitosis,
}

impl EvalTarget {
    pub fn name(self) -> &'static str {
        match self {
            EvalTarget::Mother => "mother",
            EvalTarget::Daughter => "daughter",
            EvalTarget::Mitosis => "mitosis",
        }
    }
}

impl std::str::FromStr for EvalTarget {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mother" => Ok(EvalTarget::Mother),
            "daughter" => Ok(EvalTarget::Daughter),
            "mitosis" => Ok(EvalTarget::Mitosis),
            _ => Err(Error::Config(format!("target must be mother, daughter or mitosis, got '{s}'"))),
        }
    }
}

/// PR curve of `target` on `test` for a given detector (and, for mitosis,
/// association weights).
pub fn evaluate_model(
    model: &HoughForestModel,
    weights: Option<&CrfWeights>,
    ds: &Dataset,
    test: &[String],
    cfg: &PipelineConfig,
    mode: DetectorMode,
    target: EvalTarget,
) -> Result<Vec<CurvePoint>> {
    match target {
        EvalTarget::Mother | EvalTarget::Daughter => {
            let [m, d] = cell_curves(model, ds, test, cfg, mode)?;
            Ok(if target == EvalTarget::Mother { m } else { d })
        }
        EvalTarget::Mitosis => {
            let w = weights.ok_or_else(|| Error::InvalidInput("mitosis evaluation needs association weights".into()))?;
            Ok(mitosis_curves(model, std::slice::from_ref(w), ds, test, cfg)?.remove(0))
        }
    }
}

/// Trains everything `target` needs on `train` and returns its PR curve on `test`.
pub fn train_and_evaluate(
    ds: &Dataset,
    train: &[String],
    test: &[String],
    cfg: &PipelineConfig,
    mode: DetectorMode,
    target: EvalTarget,
) -> Result<Vec<CurvePoint>> {
    let model = train_detector(ds, train, cfg, mode)?;
    let weights = match target {
        EvalTarget::Mitosis => Some(train_association(&model, ds, train, cfg)?.remove(0).1),
        _ => None,
    };
    evaluate_model(&model, weights.as_ref(), ds, test, cfg, mode, target)
}

/// Movie-grouped cross-validation of `target` with the configured folds.
pub fn cross_validate_target(ds: &Dataset, cfg: &PipelineConfig, mode: DetectorMode, target: EvalTarget) -> Result<CvResult> {
    cross_validate(&ds.movies(), cfg.fold_spec()?, cfg.seed, |train, test| {
        train_and_evaluate(ds, train, test, cfg, mode, target)
    })
}
