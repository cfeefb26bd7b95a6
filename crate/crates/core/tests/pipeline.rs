use seedtrack::crf::CrfParams;
use seedtrack::evaluation::{evaluate_masks, region_similarity};
use seedtrack::feature_store::BinaryMask;
use seedtrack::segmenter::{segment_sequence, Adaptation, Mode, PipelineConfig};
use seedtrack::synthetic::{generate_sequence, Preset, SceneSpec};

fn scene(preset: Preset, frames: usize) -> SceneSpec {
    SceneSpec {
        frames,
        ..SceneSpec::preset(preset)
    }
}

fn no_crf() -> PipelineConfig {
    PipelineConfig {
        use_crf: false,
        ..Default::default()
    }
}

#[test]
fn runs_are_deterministic() {
    let (seq, _) = generate_sequence(&scene(Preset::Clean, 4)).unwrap();
    let a = segment_sequence(&seq, &no_crf()).unwrap();
    let b = segment_sequence(&seq, &no_crf()).unwrap();
    assert_eq!(a.masks(), b.masks());
    assert_eq!(a.track_scores, b.track_scores);
    assert_eq!(a.foreground_seeds, b.foreground_seeds);
}

#[test]
fn foreground_seed_lies_on_moving_object() {
    let (seq, gt) = generate_sequence(&scene(Preset::Noiseless, 5)).unwrap();
    let run = segment_sequence(&seq, &no_crf()).unwrap();
    assert_eq!(run.foreground_seeds.len(), 5);
    for s in &run.foreground_seeds {
        assert!(gt[s.frame].get(s.pixel), "frame {} seed off target", s.frame);
    }
    let scores = evaluate_masks("noiseless", &run.masks(), &gt.iter().collect::<Vec<_>>(), None).unwrap();
    assert!(scores.j_mean > 0.95);
}

#[test]
fn track_stride_limits_tracked_frames() {
    let (seq, gt) = generate_sequence(&scene(Preset::Clean, 7)).unwrap();
    let cfg = PipelineConfig {
        track_stride: 3,
        adapt_every: Adaptation::Every(2),
        ..no_crf()
    };
    let run = segment_sequence(&seq, &cfg).unwrap();
    let frames: Vec<usize> = run.foreground_seeds.iter().map(|s| s.frame).collect();
    // tracked {0, 3, 6} plus adaptation {0, 2, 4, 6}
    assert_eq!(frames, vec![0, 2, 3, 4, 6]);
    assert_eq!(run.adaptation_frames, vec![0, 2, 4, 6]);
    let pool_frames: Vec<usize> = run.frames.iter().map(|f| f.pool_frame).collect();
    assert_eq!(pool_frames, vec![0, 0, 2, 2, 4, 4, 6]);
    for (f, g) in run.frames.iter().zip(&gt) {
        assert!(region_similarity(&f.mask, g).unwrap() > 0.8);
    }
}

#[test]
fn semisupervised_run_uses_frame_zero_pools() {
    let (seq, gt) = generate_sequence(&scene(Preset::Clean, 3)).unwrap();
    let cfg = PipelineConfig {
        mode: Mode::SemiSupervised,
        ..no_crf()
    };
    let run = segment_sequence(&seq, &cfg).unwrap();
    assert!(run.selected_track.is_none());
    assert!(run.frames.iter().all(|f| f.pool_frame == 0));
    assert!(region_similarity(&run.frames[0].mask, &gt[0]).unwrap() > 0.95);
}

#[test]
fn crf_refinement_on_small_scene() {
    let spec = SceneSpec {
        height: 64,
        width: 80,
        frames: 2,
        objects: SceneSpec::preset(Preset::Clean).objects[..1].to_vec(),
        ..SceneSpec::preset(Preset::Clean)
    };
    let (seq, gt) = generate_sequence(&spec).unwrap();
    let cfg = PipelineConfig {
        seed_count: 40,
        crf: CrfParams {
            iterations: 5,
            ..Default::default()
        },
        ..Default::default()
    };
    let run = segment_sequence(&seq, &cfg).unwrap();
    for (f, g) in run.frames.iter().zip(&gt) {
        let raw = BinaryMask::new(64, 80, f.probability.data().iter().map(|&p| p >= 0.5).collect()).unwrap();
        let j_raw = region_similarity(&raw, g).unwrap();
        let j_crf = region_similarity(&f.mask, g).unwrap();
        assert!(j_raw > 0.9 && j_crf > 0.9, "raw {j_raw}, refined {j_crf}");
    }
}
