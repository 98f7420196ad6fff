use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hough_mitosis::crf::{CrfComponents, CrfWeights};
use hough_mitosis::evaluation::{match_mitosis, Contour, GroundTruthEvent, GroundTruthFrame, RegionRule};
use hough_mitosis::forest::{predict_leaf, read_model, write_model, HoughForestModel};
use hough_mitosis::geometry::Vec2;
use hough_mitosis::image::MultiChannelImage;
use hough_mitosis::pipeline::{detect_mitosis, train_association, train_detector};
use hough_mitosis::synth::{generate_dataset, generate_movies};
use hough_mitosis::{Dataset, DetectorMode, PipelineConfig};

fn cfg() -> PipelineConfig {
    PipelineConfig { tree_count: 3, features_per_split: 80, background_ratio: 4.0, ..Default::default() }
}

struct Trained {
    model: HoughForestModel,
    weights: CrfWeights,
}

fn trained() -> &'static Trained {
    static T: OnceLock<Trained> = OnceLock::new();
    T.get_or_init(|| {
        let c = cfg();
        let ds = generate_dataset(&c.synth, 8).unwrap();
        let movies = ds.movies();
        let model = train_detector(&ds, &movies, &c, DetectorMode::Hf).unwrap();
        let weights = train_association(&model, &ds, &movies, &c).unwrap()[0].1;
        Trained { model, weights }
    })
}

fn gt_frame<'a>(ds: &'a Dataset, id: &str) -> &'a GroundTruthFrame {
    ds.ground_truth.frame(id).unwrap()
}

#[test]
fn trees_obey_default_depth_and_leaf_size() {
    let t = trained();
    assert_eq!(t.model.tree_count(), 3);
    for tree in &t.model.trees {
        assert!(tree.leaf_depths().iter().all(|d| *d <= 19));
        assert!(tree.leaves().all(|l| l.sample_count() >= 10));
    }
}

#[test]
fn saved_model_predicts_identically() {
    let t = trained();
    let back = read_model(&write_model(&t.model)).unwrap();
    let ds = generate_movies(&cfg().synth, [300]).unwrap();
    let integrals = ds.frames[0].1.integrals();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let (x, y) = (rng.random_range(0..112), rng.random_range(0..112));
        for k in 0..t.model.tree_count() {
            assert_eq!(predict_leaf(&t.model, k, &integrals, x, y), predict_leaf(&back, k, &integrals, x, y));
        }
    }
}

#[test]
fn single_tree_forest_predicts_its_tree() {
    let c = PipelineConfig { tree_count: 1, features_per_split: 30, background_ratio: 2.0, ..Default::default() };
    let ds = generate_dataset(&c.synth, 2).unwrap();
    let model = train_detector(&ds, &ds.movies(), &c, DetectorMode::CfHv).unwrap();
    let integrals = ds.frames[1].1.integrals();
    for (x, y) in [(0, 0), (40, 57), (111, 111), (64, 3)] {
        assert_eq!(model.posterior_at(&integrals, x, y), predict_leaf(&model, 0, &integrals, x, y).posteriors);
    }
}

#[test]
fn blank_frames_give_no_events() {
    let t = trained();
    let blank = MultiChannelImage::zeros(112, 112, 2);
    assert!(detect_mitosis(&t.model, &t.weights, &blank, &blank, &cfg()).unwrap().is_empty());
}

#[test]
fn scripted_division_is_top_event() {
    let t = trained();
    let ds = generate_movies(&cfg().synth, [100]).unwrap();
    for e in &ds.ground_truth.events {
        let events = detect_mitosis(&t.model, &t.weights, ds.image(&e.frame_t).unwrap(), ds.image(&e.frame_t1).unwrap(), &cfg()).unwrap();
        let m = match_mitosis(&events[..1], &[e], gt_frame(&ds, &e.frame_t), gt_frame(&ds, &e.frame_t1), RegionRule::Hull);
        assert_eq!(m.true_positives, 1, "{} -> {}: top event {:?}", e.frame_t, e.frame_t1, events.first());
    }
}

/// Places two frames side by side.
fn beside(a: &MultiChannelImage, b: &MultiChannelImage) -> MultiChannelImage {
    let (w, h) = (a.width(), a.height());
    let channels = (0..a.channel_count())
        .map(|c| {
            let (ca, cb) = (a.channel(c), b.channel(c));
            (0..h).flat_map(|y| ca[y * w..(y + 1) * w].iter().chain(&cb[y * w..(y + 1) * w]).copied()).collect()
        })
        .collect();
    MultiChannelImage::new(2 * w, h, channels).unwrap()
}

fn shifted(contours: &[Contour], dx: f64, id_offset: u32) -> Vec<Contour> {
    contours
        .iter()
        .map(|c| Contour {
            object_id: c.object_id + id_offset,
            class: c.class,
            center: c.center + Vec2::new(dx, 0.0),
            polygon: c.polygon.iter().map(|p| *p + Vec2::new(dx, 0.0)).collect(),
        })
        .collect()
}

#[test]
fn two_disjoint_divisions_give_two_events() {
    let t = trained();
    let ds = generate_movies(&cfg().synth, [101, 102]).unwrap();
    let (ea, eb) = {
        let movies = ds.movies();
        let first = |m: &str| ds.ground_truth.events.iter().find(|e| e.movie_id == m).unwrap().clone();
        (first(&movies[0]), first(&movies[1]))
    };
    let img = |id: &str| ds.image(id).unwrap();
    let (ft, ft1) = (beside(img(&ea.frame_t), img(&eb.frame_t)), beside(img(&ea.frame_t1), img(&eb.frame_t1)));

    let w = 112.0;
    let frame = |a: &str, b: &str, id: &str| GroundTruthFrame {
        frame_id: id.into(),
        movie_id: "pair".into(),
        index: 0,
        contours: [shifted(&gt_frame(&ds, a).contours, 0.0, 0), shifted(&gt_frame(&ds, b).contours, w, 1000)].concat(),
    };
    let (gt, gt1) = (frame(&ea.frame_t, &eb.frame_t, "t"), frame(&ea.frame_t1, &eb.frame_t1, "t1"));
    let link = |e: &GroundTruthEvent, off: u32| GroundTruthEvent {
        movie_id: "pair".into(),
        frame_t: "t".into(),
        frame_t1: "t1".into(),
        mother_object_id: e.mother_object_id + off,
        daughter_pair_object_id: e.daughter_pair_object_id + off,
    };
    let (la, lb) = (link(&ea, 0), link(&eb, 1000));

    let events = detect_mitosis(&t.model, &t.weights, &ft, &ft1, &cfg()).unwrap();
    assert!(events.len() >= 2);
    let top = &events[..2];
    assert_ne!(top[0].mother.position, top[1].mother.position);
    assert_ne!(top[0].daughter_pair.position, top[1].daughter_pair.position);
    let m = match_mitosis(top, &[&la, &lb], &gt, &gt1, RegionRule::Hull);
    assert_eq!(m.true_positives, 2, "{top:?}");
}

#[test]
fn reduced_models_zero_their_missing_term() {
    let t = trained();
    let c = cfg();
    let ds = generate_dataset(&c.synth, 8).unwrap();
    let all = train_association(&t.model, &ds, &ds.movies(), &c).unwrap();
    let names: Vec<&str> = all.iter().map(|(n, _)| *n).collect();
    assert_eq!(names, CrfComponents::ABLATIONS.map(|(n, _)| n));
    assert_eq!(all[1].1.w_md, 0.0);
    assert_eq!(all[2].1.w_m, 0.0);
    assert_eq!(all[3].1.w_d, 0.0);
    assert_eq!(all[0].1, t.weights);
    assert!(all[0].1.w_m > 0.0 && all[0].1.w_d > 0.0 && all[0].1.w_md > 0.0, "{:?}", all[0].1);
}
