//! Joint mother / daughter-pair association.
//!
//! A mitosis candidate pairs a mother detection in frame `t` with a
//! daughter-pair detection in frame `t + 1`. Its score is the log of the
//! unnormalized two-node CRF probability:
//!
//! ```text
//! S = w_m * h_m(m) + w_d * h_d(d) + w_md * p_dist(|m - d|) + bias
//! ```
//!
//! where `h_m`, `h_d` are Hough map values and `p_dist` is a peak-normalized
//! Gaussian of the mother-to-pair distance. The partition function is shared
//! by all candidates and never computed. Weights come from logistic regression.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::voting::Detection;

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceStats {
    pub mu: f64,
    pub sigma: f64,
}

impl DistanceStats {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !(mu.is_finite() && sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidInput(format!("invalid distance stats mu={mu} sigma={sigma}")));
        }
        Ok(DistanceStats { mu, sigma })
    }
}

/// `exp(-(|m - d| - mu)^2 / (2 sigma^2))`, in `(0, 1]`.
pub fn distance_prob(m: Vec2, d: Vec2, stats: &DistanceStats) -> f64 {
    let z = (m.distance(d) - stats.mu) / stats.sigma;
    (-0.5 * z * z).exp()
}

/// Sample mean and standard deviation (n - 1) of mother-to-pair distances.
pub fn fit_distance_stats(links: &[(Vec2, Vec2)]) -> Result<DistanceStats> {
    if links.len() < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 mitosis events, got {}", links.len())));
    }
    let d: Vec<f64> = links.iter().map(|(m, p)| m.distance(*p)).collect();
    let n = d.len() as f64;
    let mu = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1.0);
    if !(var > 0.0) {
        return Err(Error::DegenerateSigma);
    }
    DistanceStats::new(mu, var.sqrt())
}

/// Which potentials take part in the score. Disabled terms keep a zero weight.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct CrfComponents {
    pub mother: bool,
    pub daughter: bool,
    pub distance: bool,
}

impl CrfComponents {
    pub const FULL: Self = CrfComponents { mother: true, daughter: true, distance: true };
    pub const MOTHER_DAUGHTER: Self = CrfComponents { mother: true, daughter: true, distance: false };
    pub const DAUGHTER_DISTANCE: Self = CrfComponents { mother: false, daughter: true, distance: true };
    pub const MOTHER_DISTANCE: Self = CrfComponents { mother: true, daughter: false, distance: true };

    /// The full model followed by the three two-term models.
    pub const ABLATIONS: [(&'static str, Self); 4] = [
        ("full", Self::FULL),
        ("mother+daughter", Self::MOTHER_DAUGHTER),
        ("daughter+distance", Self::DAUGHTER_DISTANCE),
        ("mother+distance", Self::MOTHER_DISTANCE),
    ];

    fn mask(&self) -> [bool; 3] {
        [self.mother, self.daughter, self.distance]
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct CrfWeights {
    pub w_m: f64,
    pub w_d: f64,
    pub w_md: f64,
    pub bias: f64,
    pub stats: DistanceStats,
}

impl CrfWeights {
    pub fn new(w_m: f64, w_d: f64, w_md: f64, bias: f64, stats: DistanceStats) -> Self {
        CrfWeights { w_m, w_d, w_md, bias, stats }
    }

    /// Same weights with the disabled terms zeroed.
    pub fn restricted(&self, c: CrfComponents) -> Self {
        let keep = |on: bool, w: f64| if on { w } else { 0.0 };
        CrfWeights { w_m: keep(c.mother, self.w_m), w_d: keep(c.daughter, self.w_d), w_md: keep(c.distance, self.w_md), ..*self }
    }

    /// Gating radius for candidate pairs: `mu + k * sigma`.
    pub fn max_radius(&self, sigmas: f64) -> f64 {
        self.stats.mu + sigmas * self.stats.sigma
    }
}

pub const WEIGHTS_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
struct WeightsFile {
    format_version: u32,
    #[serde(rename = "w_m")]
    w_m: f64,
    #[serde(rename = "w_d")]
    w_d: f64,
    #[serde(rename = "w_md")]
    w_md: f64,
    bias: f64,
    mu: f64,
    sigma: f64,
}

pub fn weights_to_json(w: &CrfWeights) -> String {
    let f = WeightsFile {
        format_version: WEIGHTS_FORMAT_VERSION,
        w_m: w.w_m,
        w_d: w.w_d,
        w_md: w.w_md,
        bias: w.bias,
        mu: w.stats.mu,
        sigma: w.stats.sigma,
    };
    serde_json::to_string_pretty(&f).expect("weights serialize")
}

pub fn weights_from_json(s: &str) -> Result<CrfWeights> {
    let f: WeightsFile = serde_json::from_str(s)?;
    if f.format_version != WEIGHTS_FORMAT_VERSION {
        return Err(Error::InvalidInput(format!("unsupported weights formatVersion {}", f.format_version)));
    }
    let w = CrfWeights::new(f.w_m, f.w_d, f.w_md, f.bias, DistanceStats::new(f.mu, f.sigma)?);
    if ![w.w_m, w.w_d, w.w_md, w.bias].iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("non-finite CRF weight".into()));
    }
    Ok(w)
}

pub fn save_weights(w: &CrfWeights, path: &Path) -> Result<()> {
    fs::write(path, weights_to_json(w)).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: &Path) -> Result<CrfWeights> {
    weights_from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

/// Inputs of the score: the two Hough values and the distance probability.
#[derive(Copy, Clone, Debug, Default, PartialEq)]
pub struct CrfFeatures {
    pub h_m: f64,
    pub h_d: f64,
    pub p_dist: f64,
}

impl CrfFeatures {
    fn as_array(&self) -> [f64; 3] {
        [self.h_m, self.h_d, self.p_dist]
    }
}

pub fn mitosis_score(f: &CrfFeatures, w: &CrfWeights) -> f64 {
    w.w_m * f.h_m + w.w_d * f.h_d + w.w_md * f.p_dist + w.bias
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct MitosisCandidate {
    pub mother: Detection,
    pub daughter_pair: Detection,
    pub features: CrfFeatures,
    pub score: f64,
}

impl MitosisCandidate {
    fn key(&self) -> ((usize, usize), (usize, usize)) {
        (self.mother.position.row_major(), self.daughter_pair.position.row_major())
    }
}

/// Descending score, ties by mother then daughter position in row-major order.
pub fn candidate_order(a: &MitosisCandidate, b: &MitosisCandidate) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.key().cmp(&b.key()))
}

/// Every mother/daughter pairing closer than `max_radius`, with its features.
/// Scores are left at zero; see [`score_candidates`].
pub fn enumerate_candidates(
    mothers: &[Detection],
    daughters: &[Detection],
    max_radius: f64,
    stats: &DistanceStats,
) -> Vec<MitosisCandidate> {
    let mut out = Vec::new();
    for m in mothers {
        for d in daughters {
            let (pm, pd) = (m.position.to_vec2(), d.position.to_vec2());
            if pm.distance(pd) > max_radius {
                continue;
            }
            let features = CrfFeatures { h_m: m.score, h_d: d.score, p_dist: distance_prob(pm, pd, stats) };
            out.push(MitosisCandidate { mother: *m, daughter_pair: *d, features, score: 0.0 });
        }
    }
    out
}

pub fn score_candidates(candidates: &mut [MitosisCandidate], w: &CrfWeights) {
    for c in candidates {
        c.score = mitosis_score(&c.features, w);
    }
}

/// The highest-scoring candidate under `w`.
pub fn map_inference(candidates: &[MitosisCandidate], w: &CrfWeights) -> Option<MitosisCandidate> {
    candidates
        .iter()
        .map(|c| MitosisCandidate { score: mitosis_score(&c.features, w), ..*c })
        .min_by(candidate_order)
}

/// Repeatedly keeps the best remaining candidate and discards every other
/// candidate that shares its mother or its daughter-pair detection.
pub fn select_events(candidates: &[MitosisCandidate], w: &CrfWeights) -> Vec<MitosisCandidate> {
    let mut scored = candidates.to_vec();
    score_candidates(&mut scored, w);
    scored.sort_by(candidate_order);
    let mut used_m = Vec::new();
    let mut used_d = Vec::new();
    let mut out = Vec::new();
    for c in scored {
        if used_m.contains(&c.mother.position) || used_d.contains(&c.daughter_pair.position) {
            continue;
        }
        used_m.push(c.mother.position);
        used_d.push(c.daughter_pair.position);
        out.push(c);
    }
    out
}

pub const LR_LAMBDA: f64 = 1e-4;
pub const LR_EPOCHS: usize = 2000;
pub const LR_TOLERANCE: f64 = 1e-6;
const LR_STEP: f64 = 1.0;

fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Result of [`fit_weights`] including the per-epoch training loss.
#[derive(Clone, Debug)]
pub struct WeightFit {
    pub weights: CrfWeights,
    pub losses: Vec<f64>,
}

/// L2-regularized logistic regression of `label` on the enabled features,
/// fitted by full-batch gradient descent from zero.
///
/// Features are standardized internally and the weights mapped back, which
/// keeps a fixed step size stable whatever the Hough map scale. Examples are
/// put in a canonical order first so the result does not depend on input order.
pub fn fit_weights(
    triples: &[(CrfFeatures, bool)],
    components: CrfComponents,
    stats: DistanceStats,
) -> Result<WeightFit> {
    let pos = triples.iter().filter(|t| t.1).count();
    if pos == 0 || pos == triples.len() {
        return Err(Error::SingleClass);
    }
    let mut data: Vec<([f64; 3], f64)> =
        triples.iter().map(|(f, y)| (f.as_array(), if *y { 1.0 } else { 0.0 })).collect();
    data.sort_by(|a, b| {
        a.0.iter().zip(&b.0).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal).then(a.1.total_cmp(&b.1))
    });
    let n = data.len() as f64;

    let mask = components.mask();
    let mut mean = [0.0; 3];
    let mut scale = [1.0; 3];
    let mut active = [false; 3];
    for j in 0..3 {
        if !mask[j] {
            continue;
        }
        let m = data.iter().map(|d| d.0[j]).sum::<f64>() / n;
        let var = data.iter().map(|d| (d.0[j] - m).powi(2)).sum::<f64>() / n;
        if var > 0.0 {
            mean[j] = m;
            scale[j] = var.sqrt();
            active[j] = true;
        }
    }
    let z: Vec<([f64; 3], f64)> = data
        .iter()
        .map(|(x, y)| (std::array::from_fn(|j| if active[j] { (x[j] - mean[j]) / scale[j] } else { 0.0 }), *y))
        .collect();

    let loss = |theta: &[f64; 3], b: f64| -> f64 {
        let mut l = 0.0;
        for (x, y) in &z {
            let s = b + theta[0] * x[0] + theta[1] * x[1] + theta[2] * x[2];
            l += log1p_exp(s) - y * s;
        }
        l / n + 0.5 * LR_LAMBDA * theta.iter().map(|t| t * t).sum::<f64>()
    };

    let mut theta = [0.0; 3];
    let mut b = 0.0;
    let mut losses = vec![loss(&theta, b)];
    for _ in 0..LR_EPOCHS {
        let mut g = [0.0; 3];
        let mut gb = 0.0;
        for (x, y) in &z {
            let r = sigmoid(b + theta[0] * x[0] + theta[1] * x[1] + theta[2] * x[2]) - y;
            gb += r;
            for j in 0..3 {
                g[j] += r * x[j];
            }
        }
        gb /= n;
        for j in 0..3 {
            g[j] = if active[j] { g[j] / n + LR_LAMBDA * theta[j] } else { 0.0 };
        }
        let norm = (gb * gb + g.iter().map(|v| v * v).sum::<f64>()).sqrt();
        if norm < LR_TOLERANCE {
            break;
        }
        b -= LR_STEP * gb;
        for j in 0..3 {
            theta[j] -= LR_STEP * g[j];
        }
        losses.push(loss(&theta, b));
    }

    let w: [f64; 3] = std::array::from_fn(|j| if active[j] { theta[j] / scale[j] } else { 0.0 });
    let bias = b - (0..3).map(|j| w[j] * mean[j]).sum::<f64>();
    Ok(WeightFit { weights: CrfWeights::new(w[0], w[1], w[2], bias, stats), losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::ClassLabel;
    use crate::geometry::Pixel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn det(x: usize, y: usize, score: f64, class: ClassLabel) -> Detection {
        Detection { position: Pixel::new(x, y), score, class }
    }

    fn stats() -> DistanceStats {
        DistanceStats::new(10.0, 2.0).unwrap()
    }

    #[test]
    fn distance_prob_examples() {
        let s = stats();
        assert_eq!(distance_prob(Vec2::ZERO, Vec2::new(10.0, 0.0), &s), 1.0);
        assert!((distance_prob(Vec2::ZERO, Vec2::new(0.0, 12.0), &s) - (-0.5f64).exp()).abs() < 1e-12);
        assert!((distance_prob(Vec2::ZERO, Vec2::new(0.0, 12.0), &s) - 0.60653).abs() < 1e-5);
        let mut last = 1.0;
        for k in 1..20 {
            let p = distance_prob(Vec2::ZERO, Vec2::new(10.0 + k as f64, 0.0), &s);
            assert!(p < last && p > 0.0);
            last = p;
        }
        let (a, b) = (Vec2::new(1.0, 2.0), Vec2::new(7.0, -3.0));
        assert_eq!(distance_prob(a, b, &s), distance_prob(b, a, &s));
    }

    #[test]
    fn distance_stats_examples() {
        let link = |d: f64| (Vec2::ZERO, Vec2::new(d, 0.0));
        assert!(matches!(fit_distance_stats(&[link(10.0), link(10.0)]), Err(Error::DegenerateSigma)));
        let s = fit_distance_stats(&[link(8.0), link(12.0)]).unwrap();
        assert!((s.mu - 10.0).abs() < 1e-12 && (s.sigma - 8f64.sqrt()).abs() < 1e-12);
        assert!(matches!(fit_distance_stats(&[link(3.0)]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn score_examples() {
        let f = CrfFeatures { h_m: 0.5, h_d: 0.25, p_dist: 0.8 };
        assert_eq!(mitosis_score(&f, &CrfWeights::new(0.0, 0.0, 0.0, 0.0, stats())), 0.0);
        assert!((mitosis_score(&f, &CrfWeights::new(1.0, 1.0, 1.0, 0.0, stats())) - 1.55).abs() < 1e-12);
        let w = CrfWeights::new(0.7, 0.1, 0.2, -1.0, stats());
        let g = CrfFeatures { h_m: 0.6, ..f };
        assert!(mitosis_score(&g, &w) > mitosis_score(&f, &w));
    }

    #[test]
    fn enumeration_examples() {
        let s = stats();
        let ds = [det(3, 0, 1.0, ClassLabel::Daughter), det(0, 4, 1.0, ClassLabel::Daughter), det(5, 5, 1.0, ClassLabel::Daughter)];
        assert!(enumerate_candidates(&[], &ds, 100.0, &s).is_empty());
        let ms = [det(0, 0, 1.0, ClassLabel::Mother), det(1, 1, 1.0, ClassLabel::Mother)];
        assert_eq!(enumerate_candidates(&ms, &ds, 50.0, &s).len(), 6);
        let far = [det(100, 0, 1.0, ClassLabel::Daughter)];
        assert!(enumerate_candidates(&ms[..1], &far, 50.0, &s).is_empty());
    }

    #[test]
    fn map_inference_ties_and_singletons() {
        let s = stats();
        let w = CrfWeights::new(1.0, 1.0, 0.0, 0.0, s);
        let ms = [det(4, 4, 1.0, ClassLabel::Mother)];
        let ds = [det(9, 4, 2.0, ClassLabel::Daughter)];
        let one = enumerate_candidates(&ms, &ds, 50.0, &s);
        assert_eq!(map_inference(&one, &w).unwrap().daughter_pair.position, Pixel::new(9, 4));
        assert!(map_inference(&[], &w).is_none());

        let ds = [det(9, 4, 2.0, ClassLabel::Daughter), det(2, 1, 2.0, ClassLabel::Daughter)];
        let tied = enumerate_candidates(&ms, &ds, 50.0, &s);
        let mut rev = tied.clone();
        rev.reverse();
        let a = map_inference(&tied, &w).unwrap();
        assert_eq!(a, map_inference(&rev, &w).unwrap());
        assert_eq!(a.daughter_pair.position, Pixel::new(2, 1));
    }

    #[test]
    fn greedy_selection_shares_nothing() {
        let s = stats();
        let w = CrfWeights::new(1.0, 1.0, 0.0, 0.0, s);
        let ms = [det(0, 0, 3.0, ClassLabel::Mother), det(30, 0, 1.0, ClassLabel::Mother)];
        let ds = [det(5, 0, 2.0, ClassLabel::Daughter), det(35, 0, 1.5, ClassLabel::Daughter)];
        let ev = select_events(&enumerate_candidates(&ms, &ds, 100.0, &s), &w);
        assert_eq!(ev.len(), 2);
        assert_eq!((ev[0].mother.position, ev[0].daughter_pair.position), (Pixel::new(0, 0), Pixel::new(5, 0)));
        assert_eq!((ev[1].mother.position, ev[1].daughter_pair.position), (Pixel::new(30, 0), Pixel::new(35, 0)));
    }

    #[test]
    fn weights_json_round_trip() {
        let w = CrfWeights::new(1.25, -0.5, 3.0, -2.0, stats());
        assert_eq!(weights_from_json(&weights_to_json(&w)).unwrap(), w);
        let text = weights_to_json(&w);
        assert!(text.contains("\"formatVersion\": 1") && text.contains("\"w_md\""));
        assert!(weights_from_json(&text.replace("\"formatVersion\": 1", "\"formatVersion\": 9")).is_err());
    }

    fn toy_triples() -> Vec<(CrfFeatures, bool)> {
        (0..10)
            .map(|i| (CrfFeatures { h_m: (i % 2) as f64, h_d: 0.0, p_dist: 0.0 }, i % 2 == 1))
            .collect()
    }

    #[test]
    fn separable_toy_gets_positive_mother_weight() {
        let fit = fit_weights(&toy_triples(), CrfComponents::FULL, stats()).unwrap();
        // coarse grid search over (w_m, bias) on the regularization-free loss
        let loss = |wm: f64, b: f64| -> f64 {
            toy_triples()
                .iter()
                .map(|(f, y)| {
                    let s = wm * f.h_m + b;
                    log1p_exp(s) - if *y { s } else { 0.0 }
                })
                .sum()
        };
        let mut best = (f64::INFINITY, 0.0);
        for i in -40..=40 {
            for j in -40..=40 {
                let (wm, b) = (i as f64 * 0.5, j as f64 * 0.5);
                let l = loss(wm, b);
                if l < best.0 {
                    best = (l, wm);
                }
            }
        }
        assert!(best.1 > 0.0 && fit.weights.w_m > 0.0);
        assert_eq!((fit.weights.w_d, fit.weights.w_md), (0.0, 0.0));
        for (f, y) in toy_triples() {
            assert_eq!(mitosis_score(&f, &fit.weights) > 0.0, y);
        }
        assert!(fit.weights.w_m.is_finite() && fit.weights.bias.is_finite());
    }

    #[test]
    fn loss_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let triples: Vec<_> = (0..200)
            .map(|_| {
                let y = rng.random_bool(0.3);
                let shift = if y { 1.0 } else { 0.0 };
                let f = CrfFeatures {
                    h_m: rng.random::<f64>() * 3.0 + shift,
                    h_d: rng.random::<f64>() * 0.5 + 0.3 * shift,
                    p_dist: rng.random::<f64>(),
                };
                (f, y)
            })
            .collect();
        let fit = fit_weights(&triples, CrfComponents::FULL, stats()).unwrap();
        assert!(fit.losses.len() > 2);
        for w in fit.losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "{} -> {}", w[0], w[1]);
        }
        let mut shuffled = triples.clone();
        shuffled.reverse();
        shuffled.swap(3, 77);
        let again = fit_weights(&shuffled, CrfComponents::FULL, stats()).unwrap();
        assert_eq!(fit.weights, again.weights);

        let reduced = fit_weights(&triples, CrfComponents::MOTHER_DISTANCE, stats()).unwrap();
        assert_eq!(reduced.weights.w_d, 0.0);
    }

    #[test]
    fn single_class_rejected() {
        let t: Vec<_> = toy_triples().into_iter().map(|(f, _)| (f, true)).collect();
        assert!(matches!(fit_weights(&t, CrfComponents::FULL, stats()), Err(Error::SingleClass)));
    }
}
