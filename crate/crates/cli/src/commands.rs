use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::Serialize;

use seedtrack::evaluation::{self, embedding_drift, evaluate_masks, misclassified_fg_fraction, SequenceScores};
use seedtrack::feature_store::{self, load_mask, load_sequence, save_mask, save_tensor, BinaryMask, SequenceManifest};
use seedtrack::segmenter::{segment_sequence, ForegroundSeed, Mode, PipelineConfig};
use seedtrack::synthetic::{generate_sequence, SceneSpec};
use seedtrack::{Error, Result};

use crate::{DriftArgs, EvalArgs, SegmentArgs, SynthArgs};

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Manifest {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(io(path))
}

/// Built-in defaults, then the config file, then command-line flags.
pub fn resolve_config(args: &SegmentArgs) -> Result<PipelineConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(io(path))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(a) = args.adapt_every {
        cfg.adapt_every = a;
    }
    if let Some(r) = args.ranking {
        cfg.ranking = r;
    }
    if let Some(n) = args.seed_count {
        cfg.seed_count = n;
    }
    if let Some(s) = args.track_stride {
        cfg.track_stride = s;
    }
    if args.no_crf {
        cfg.use_crf = false;
    }
    if args.semi_supervised {
        cfg.mode = Mode::SemiSupervised;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct RunMetadata<'a> {
    version: &'static str,
    manifest: PathBuf,
    config: &'a PipelineConfig,
    frames: usize,
    height: usize,
    width: usize,
    selected_track: Option<usize>,
    track_scores: &'a [f64],
    foreground_seeds: &'a [ForegroundSeed],
    adaptation_frames: &'a [usize],
    timings_s: Timings,
    #[serde(skip_serializing_if = "Option::is_none")]
    scores: Option<SequenceScores>,
}

#[derive(Serialize)]
struct Timings {
    load: f64,
    segment: f64,
    write: f64,
}

fn mask_name(k: usize) -> String {
    format!("mask_{k:04}.png")
}

fn sequence_name(manifest: &Path) -> String {
    manifest
        .canonicalize()
        .ok()
        .and_then(|p| p.parent().and_then(|d| d.file_name()).map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "sequence".into())
}

pub fn segment(args: &SegmentArgs) -> Result<()> {
    let cfg = resolve_config(args)?;
    let t0 = Instant::now();
    let manifest = SequenceManifest::from_file(&args.manifest)?;
    if cfg.mode == Mode::SemiSupervised && manifest.annotation0.is_none() {
        return Err(Error::MissingGroundTruth(
            "semi-supervised mode needs `annotation0` in the manifest".into(),
        ));
    }
    let seq = load_sequence(&manifest)?;
    let load = t0.elapsed().as_secs_f64();
    info!("loaded {} frames of {}x{}", seq.len(), seq.height(), seq.width());

    let t1 = Instant::now();
    let run = segment_sequence(&seq, &cfg)?;
    let seg = t1.elapsed().as_secs_f64();
    if let Some(t) = run.selected_track {
        info!("selected track {t} (score {:.4})", run.track_scores[t]);
    }

    let t2 = Instant::now();
    fs::create_dir_all(&args.out).map_err(io(&args.out))?;
    for f in &run.frames {
        save_mask(&f.mask, args.out.join(mask_name(f.frame)))?;
        if args.save_prob {
            save_tensor(&f.probability, args.out.join(format!("prob_{:04}.npy", f.frame)))?;
        }
    }
    let scores = if args.eval {
        let gt = seq.full_ground_truth()?;
        let mut scores = evaluate_masks(&sequence_name(&args.manifest), &run.masks(), &gt, None)?;
        if !run.foreground_seeds.is_empty() {
            let pixels: Vec<usize> = run.foreground_seeds.iter().map(|s| s.pixel).collect();
            let masks: Vec<&BinaryMask> = run.foreground_seeds.iter().map(|s| gt[s.frame]).collect();
            scores.seed_accuracy = Some(evaluation::seed_accuracy(&pixels, &masks)?);
        }
        write_scores(&scores, &args.out)?;
        info!("J mean {:.4}, F mean {:.4}", scores.j_mean, scores.f_mean);
        Some(scores)
    } else {
        None
    };
    let meta = RunMetadata {
        version: env!("CARGO_PKG_VERSION"),
        manifest: args.manifest.clone(),
        config: &cfg,
        frames: seq.len(),
        height: seq.height(),
        width: seq.width(),
        selected_track: run.selected_track,
        track_scores: &run.track_scores,
        foreground_seeds: &run.foreground_seeds,
        adaptation_frames: &run.adaptation_frames,
        timings_s: Timings {
            load,
            segment: seg,
            write: t2.elapsed().as_secs_f64(),
        },
        scores,
    };
    write_json(&args.out.join("run.json"), &meta)?;
    info!("wrote {} masks to {}", run.frames.len(), args.out.display());
    Ok(())
}

fn write_scores(scores: &SequenceScores, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let csv = dir.join("scores.csv");
    fs::write(&csv, scores.to_csv()).map_err(io(&csv))?;
    write_json(&dir.join("scores.json"), scores)
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    Ok(files)
}

fn load_masks(files: &[PathBuf]) -> Result<Vec<BinaryMask>> {
    files.iter().map(load_mask).collect()
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let pred_files = png_files(&args.pred)?;
    let gt_files = png_files(&args.gt)?;
    if pred_files.len() != gt_files.len() {
        return Err(Error::InconsistentSequence(format!(
            "{} predicted masks in {} but {} ground-truth masks in {}",
            pred_files.len(),
            args.pred.display(),
            gt_files.len(),
            args.gt.display()
        )));
    }
    if gt_files.is_empty() {
        return Err(Error::MissingGroundTruth(format!("no PNG masks in {}", args.gt.display())));
    }
    let pred = load_masks(&pred_files)?;
    let gt = load_masks(&gt_files)?;
    let gt: Vec<&BinaryMask> = gt.iter().collect();
    let name = args
        .gt
        .canonicalize()
        .ok()
        .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "sequence".into());
    let scores = evaluate_masks(&name, &pred, &gt, args.tolerance)?;
    write_scores(&scores, args.out.as_ref().unwrap_or(&args.pred))?;
    println!("J mean {:.4}  F mean {:.4}  ({} frames)", scores.j_mean, scores.f_mean, scores.frames.len());
    Ok(())
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let mut spec = SceneSpec::preset_with(args.preset, args.embedding_dim, args.seed);
    if let Some(n) = args.frames {
        spec.frames = n;
    }
    let (seq, _) = generate_sequence(&spec)?;
    let manifest = feature_store::write_sequence(&seq, &args.out)?;
    write_json(&args.out.join("scene.json"), &spec)?;
    info!("wrote {} frames to {}", seq.len(), manifest.display());
    Ok(())
}

pub fn drift(args: &DriftArgs) -> Result<()> {
    let manifest = SequenceManifest::from_file(&args.manifest)?;
    if !manifest.has_ground_truth() {
        return Err(Error::MissingGroundTruth("drift analysis needs ground truth for every frame".into()));
    }
    let seq = load_sequence(&manifest)?;
    let gt = seq.full_ground_truth()?;
    let curves = embedding_drift(&seq, &gt)?;
    let wrong = misclassified_fg_fraction(&seq, &gt)?;
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    let mut csv = String::from("frame,d_fg,d_bg,misclassified_fg\n");
    for (k, ((fg, bg), w)) in curves.foreground.iter().zip(&curves.background).zip(&wrong).enumerate() {
        csv.push_str(&format!("{k},{},{},{}\n", cell(*fg), cell(*bg), cell(*w)));
    }
    match &args.out {
        Some(path) => fs::write(path, csv).map_err(io(path)),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}
