use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use rayon::prelude::*;

use hough_mitosis::crf::{fit_weights, load_weights, save_weights, CrfComponents, CrfWeights};
use hough_mitosis::evaluation::{auc, fold_assignment, read_curve_csv, write_curve_csv, write_curve_svg, CvResult, Folds};
use hough_mitosis::forest::{load_model, save_model, HoughForestModel};
use hough_mitosis::pipeline::{
    crf_training_examples, cross_validate_target, detect_cells, detect_mitosis, evaluate_model, event_distance_stats,
    mitosis_curves, train_association, train_detector, EvalTarget,
};
use hough_mitosis::report::{ablation_csv, auc_summary_csv, detections_csv, events_csv};
use hough_mitosis::synth::generate_dataset;
use hough_mitosis::{Dataset, DetectorMode, PipelineConfig};

/// Mitosis detection in two-channel time-lapse microscopy.
#[derive(Parser)]
#[command(name = "hmd", version)]
struct Cli {
    /// JSON configuration; absent keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed (the data seed for `synth`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Detector: hf, cf-hv or cf.
    #[arg(long, global = true)]
    mode: Option<DetectorMode>,
    /// Cross-validation folds: a count, or `loo` for leave-one-movie-out.
    #[arg(long, global = true)]
    folds: Option<String>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic movies with ground truth.
    Synth {
        #[arg(long)]
        movies: Option<usize>,
    },
    /// Train a cell detector; writes model.hmdf.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated movie ids to train on (default: all).
        #[arg(long, value_delimiter = ',')]
        movies: Vec<String>,
    },
    /// Detect mother cells and daughter pairs; writes detections.csv.
    Detect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Learn association weights; writes weights.json.
    TrainCrf {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',')]
        movies: Vec<String>,
        /// full, mother+daughter, daughter+distance or mother+distance.
        #[arg(long, default_value = "full")]
        components: String,
    },
    /// Detect mitosis events over consecutive frames; writes events.csv.
    DetectMitosis {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Precision-recall evaluation; writes PR curves and auc.csv.
    ///
    /// With --model the given detector is scored on all movies; otherwise
    /// detectors are trained and tested by movie-grouped cross-validation.
    Eval {
        #[arg(long)]
        data: PathBuf,
        /// mother, daughter or mitosis.
        #[arg(long, default_value = "mother")]
        target: EvalTarget,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Render PR curve CSVs as one SVG plot.
    PrPlot {
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "Precision-recall")]
        title: String,
    },
    /// Compare the full association model with the three two-component models.
    Ablate {
        #[arg(long)]
        data: PathBuf,
    },
}

fn config(cli: &Cli) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(m) = cli.mode {
        cfg.mode = m;
    }
    if let Some(f) = &cli.folds {
        cfg.folds = f.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn movies_or_all(ds: &Dataset, movies: &[String]) -> anyhow::Result<Vec<String>> {
    let all = ds.movies();
    if movies.is_empty() {
        return Ok(all);
    }
    if let Some(m) = movies.iter().find(|m| !all.contains(m)) {
        bail!("movie {m} is not in the data set");
    }
    Ok(movies.to_vec())
}

fn mode_for(model: &HoughForestModel, cfg: &PipelineConfig) -> anyhow::Result<DetectorMode> {
    if cfg.mode.uses_votes() && !model.has_votes() {
        bail!("model stores no votes; detect with --mode cf");
    }
    Ok(cfg.mode)
}

fn components(name: &str) -> anyhow::Result<CrfComponents> {
    CrfComponents::ABLATIONS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, c)| *c)
        .with_context(|| format!("unknown components '{name}'"))
}

fn write_cv(out: &Path, target: EvalTarget, cv: &CvResult) -> anyhow::Result<()> {
    for (k, c) in cv.fold_curves.iter().enumerate() {
        write_curve_csv(c, &out.join(format!("pr_{}_fold{k}.csv", target.name())))?;
    }
    let summary = auc_summary_csv(target.name(), cv);
    write(&out.join("auc.csv"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = config(&cli)?;
    let out = &cli.out;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    match &cli.command {
        Command::Synth { movies } => {
            let mut synth = cfg.synth.clone();
            if let Some(s) = cli.seed {
                synth.seed = s;
            }
            let ds = generate_dataset(&synth, movies.unwrap_or(cfg.movie_count))?;
            ds.save(out)?;
            println!("wrote {} frames, {} events to {}", ds.frames.len(), ds.ground_truth.events.len(), out.display());
        }
        Command::Train { data, movies } => {
            let ds = Dataset::load(data)?;
            let movies = movies_or_all(&ds, movies)?;
            let model = train_detector(&ds, &movies, &cfg, cfg.mode)?;
            let path = out.join("model.hmdf");
            save_model(&model, &path)?;
            println!("trained {} {} trees on {} movies -> {}", model.tree_count(), cfg.mode, movies.len(), path.display());
        }
        Command::Detect { model, data } => {
            let model = load_model(model)?;
            let mode = mode_for(&model, &cfg)?;
            let ds = Dataset::load(data)?;
            let dets = ds
                .frames
                .par_iter()
                .map(|(_, img)| detect_cells(&model, img, &cfg, mode))
                .collect::<Result<Vec<_>, _>>()?;
            let csv = detections_csv(ds.frames.iter().zip(&dets).map(|((id, _), d)| (id.as_str(), d)));
            write(&out.join("detections.csv"), &csv)?;
        }
        Command::TrainCrf { model, data, movies, components: name } => {
            let model = load_model(model)?;
            let ds = Dataset::load(data)?;
            let movies = movies_or_all(&ds, movies)?;
            let stats = event_distance_stats(&ds, &movies)?;
            let examples = crf_training_examples(&model, &ds, &movies, &stats, &cfg)?;
            let fit = fit_weights(&examples, components(name)?, stats)?;
            let w = fit.weights;
            save_weights(&w, &out.join("weights.json"))?;
            println!(
                "w_m={:.4} w_d={:.4} w_md={:.4} bias={:.4} mu={:.3} sigma={:.3} ({} examples)",
                w.w_m, w.w_d, w.w_md, w.bias, w.stats.mu, w.stats.sigma, examples.len()
            );
        }
        Command::DetectMitosis { model, weights, data } => {
            let model = load_model(model)?;
            let w = load_weights(weights)?;
            let ds = Dataset::load(data)?;
            let mut pairs = Vec::new();
            for m in ds.movies() {
                for (t, t1) in ds.ground_truth.frame_pairs(&m) {
                    pairs.push((t.frame_id.clone(), t1.frame_id.clone()));
                }
            }
            let events = pairs
                .par_iter()
                .map(|(t, t1)| detect_mitosis(&model, &w, ds.image(t).unwrap(), ds.image(t1).unwrap(), &cfg))
                .collect::<Result<Vec<_>, _>>()?;
            let csv = events_csv(pairs.iter().zip(&events).map(|((t, _), e)| (t.as_str(), e.as_slice())));
            write(&out.join("events.csv"), &csv)?;
        }
        Command::Eval { data, target, model, weights } => {
            let ds = Dataset::load(data)?;
            match model {
                Some(path) => {
                    let model = load_model(path)?;
                    let mode = mode_for(&model, &cfg)?;
                    let w: Option<CrfWeights> = weights.as_deref().map(load_weights).transpose()?;
                    let movies = ds.movies();
                    let curve = evaluate_model(&model, w.as_ref(), &ds, &movies, &cfg, mode, *target)?;
                    let a = auc(&curve)?;
                    let cv = CvResult { test_movies: vec![movies], fold_curves: vec![curve], fold_aucs: vec![a], mean_auc: a };
                    write_cv(out, *target, &cv)?;
                }
                None => {
                    let cv = cross_validate_target(&ds, &cfg, cfg.mode, *target)?;
                    write_cv(out, *target, &cv)?;
                }
            }
        }
        Command::PrPlot { inputs, title } => {
            let curves = inputs
                .iter()
                .map(|p| {
                    let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                    Ok((name, read_curve_csv(p)?))
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            let path = out.join("pr.svg");
            write_curve_svg(&curves, title, &path)?;
            println!("wrote {}", path.display());
        }
        Command::Ablate { data } => {
            let ds = Dataset::load(data)?;
            let movies = ds.movies();
            let folds: Folds = cfg.fold_spec()?;
            let groups = fold_assignment(&movies, folds, cfg.seed)?;
            let per_fold = groups
                .par_iter()
                .map(|test| {
                    let train: Vec<String> = movies.iter().filter(|m| !test.contains(m)).cloned().collect();
                    let model = train_detector(&ds, &train, &cfg, DetectorMode::Hf)?;
                    let assoc = train_association(&model, &ds, &train, &cfg)?;
                    let w: Vec<CrfWeights> = assoc.iter().map(|(_, w)| *w).collect();
                    let curves = mitosis_curves(&model, &w, &ds, test, &cfg)?;
                    curves.iter().map(|c| auc(c)).collect::<Result<Vec<f64>, _>>()
                })
                .collect::<Result<Vec<_>, hough_mitosis::Error>>()?;
            let rows: Vec<(&str, Vec<f64>)> = CrfComponents::ABLATIONS
                .iter()
                .enumerate()
                .map(|(i, (name, _))| (*name, per_fold.iter().map(|f| f[i]).collect()))
                .collect();
            let table = ablation_csv(&rows);
            write(&out.join("ablation.csv"), &table)?;
            print!("{table}");
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("HMD_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).filter(|n| *n > 0) {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok();
    }
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
