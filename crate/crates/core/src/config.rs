//! Pipeline configuration: one flat JSON object with camelCase keys. Absent
//! keys take their defaults; unknown keys are rejected.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{Folds, RegionRule};
use crate::features::PatchSpec;
use crate::forest::ForestParams;
use crate::synth::SynthConfig;

/// Which cell detector to build.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorMode {
    /// Hough forest: mixed classification and vote-uniformity splits, detection by voting.
    #[default]
    Hf,
    /// Classification-only splits, detection by voting.
    CfHv,
    /// Classification-only splits, detection from the pixel classification alone.
    Cf,
}

impl DetectorMode {
    pub const ALL: [DetectorMode; 3] = [DetectorMode::Hf, DetectorMode::CfHv, DetectorMode::Cf];

    pub fn name(self) -> &'static str {
        match self {
            DetectorMode::Hf => "hf",
            DetectorMode::CfHv => "cf-hv",
            DetectorMode::Cf => "cf",
        }
    }

    pub fn uses_votes(self) -> bool {
        self != DetectorMode::Cf
    }
}

impl fmt::Display for DetectorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        DetectorMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("mode must be hf, cf-hv or cf, got '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase", default)]
pub struct PipelineConfig {
    // forest
    pub tree_count: usize,
    pub max_depth: usize,
    pub features_per_split: usize,
    pub thresholds_per_feature: usize,
    pub min_leaf_samples: usize,
    pub patch_radius: i32,
    pub uniformity_probability: f64,
    pub background_ratio: f64,
    pub max_displacement: f64,
    /// Keep every n-th foreground pixel in x and y as a training sample.
    pub foreground_stride: usize,
    pub mode: DetectorMode,
    // voting
    pub smoothing_sigma: f64,
    pub nms_radius: usize,
    /// Lowest Hough value reported by cell detection.
    pub detection_threshold: f64,
    // association
    /// Mitosis candidates keep peaks above this fraction of the map maximum.
    pub candidate_fraction: f64,
    /// Candidate pairs farther apart than `mu + maxRadiusSigmas * sigma` are skipped.
    pub max_radius_sigmas: f64,
    /// Non-matching candidates per frame pair used as logistic-regression negatives.
    pub hard_negatives: usize,
    // evaluation
    pub region_rule: RegionRule,
    /// Fold count, or "loo" for leave-one-movie-out.
    pub folds: String,
    /// Movies written by `synth`.
    pub movie_count: usize,
    pub seed: u64,
    pub synth: SynthConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let f = ForestParams::default();
        PipelineConfig {
            tree_count: f.tree_count,
            max_depth: f.max_depth,
            features_per_split: f.features_per_split,
            thresholds_per_feature: f.thresholds_per_feature,
            min_leaf_samples: f.min_leaf_samples,
            patch_radius: PatchSpec::default().patch_radius,
            uniformity_probability: f.uniformity_probability,
            background_ratio: f.background_ratio,
            max_displacement: f.max_displacement,
            foreground_stride: 1,
            mode: DetectorMode::Hf,
            smoothing_sigma: 3.0,
            nms_radius: 10,
            detection_threshold: 0.0,
            candidate_fraction: 0.1,
            max_radius_sigmas: 3.0,
            hard_negatives: 5,
            region_rule: RegionRule::Hull,
            folds: "5".into(),
            movie_count: 25,
            seed: 0,
            synth: SynthConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.forest_params(self.mode).validate()?;
        if !self.patch().is_valid() {
            return Err(Error::Config("patchRadius must be at least 1".into()));
        }
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.max_depth == 0 {
            return bad("maxDepth must be at least 1");
        }
        if self.foreground_stride == 0 {
            return bad("foregroundStride must be at least 1");
        }
        if !(self.smoothing_sigma.is_finite() && self.smoothing_sigma >= 0.0) {
            return bad("smoothingSigma must be non-negative");
        }
        if self.nms_radius == 0 {
            return bad("nmsRadius must be at least 1");
        }
        if !(self.detection_threshold.is_finite() && self.detection_threshold >= 0.0) {
            return bad("detectionThreshold must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.candidate_fraction) {
            return bad("candidateFraction must lie in [0, 1]");
        }
        if !(self.max_radius_sigmas.is_finite() && self.max_radius_sigmas > 0.0) {
            return bad("maxRadiusSigmas must be positive");
        }
        if self.hard_negatives == 0 {
            return bad("hardNegatives must be at least 1");
        }
        self.fold_spec()?;
        self.synth.validate()
    }

    pub fn fold_spec(&self) -> Result<Folds> {
        self.folds.parse()
    }

    pub fn patch(&self) -> PatchSpec {
        PatchSpec { patch_radius: self.patch_radius, channel_count: 2 }
    }

    /// Forest parameters for a detector mode: the classification-forest modes
    /// never use the vote-uniformity objective, and plain CF keeps no votes.
    pub fn forest_params(&self, mode: DetectorMode) -> ForestParams {
        ForestParams {
            tree_count: self.tree_count,
            max_depth: self.max_depth,
            features_per_split: self.features_per_split,
            thresholds_per_feature: self.thresholds_per_feature,
            min_leaf_samples: self.min_leaf_samples,
            uniformity_probability: if mode == DetectorMode::Hf { self.uniformity_probability } else { 0.0 },
            background_ratio: self.background_ratio,
            max_displacement: self.max_displacement,
            store_votes: mode.uses_votes(),
            seed: self.seed,
        }
    }
}
