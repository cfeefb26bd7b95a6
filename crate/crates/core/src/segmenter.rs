//! Per-frame foreground segmentation: the initial foreground region, the
//! foreground/background seed pools, the soft foreground probability and
//! the sequence-level driver with online adaptation.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::crf::{self, CrfParams};
use crate::embedding::{self, squared_distance, SeedSet};
use crate::error::{Error, Result};
use crate::feature_store::{BinaryMask, DenseFeatureFrame, DenseMap, Sequence};
use crate::graph::{self, PixelGraph, RegionLabeling};
use crate::motion::{self, Flow, MotionModel};
use crate::tracking::{self, RankingMode, SeedTrack};

/// How often the seed pools are rebuilt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Adaptation {
    /// Rebuild on every frame index divisible by the stride.
    Every(usize),
    /// Use the frame-0 pools for the whole sequence.
    Never,
}

impl Adaptation {
    pub fn is_adaptation_frame(self, frame: usize) -> bool {
        match self {
            Adaptation::Every(k) => frame.is_multiple_of(k),
            Adaptation::Never => frame == 0,
        }
    }
}

impl Default for Adaptation {
    fn default() -> Self {
        Adaptation::Every(1)
    }
}

impl fmt::Display for Adaptation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Adaptation::Every(k) => write!(f, "{k}"),
            Adaptation::Never => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for Adaptation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "never" | "∞" => Ok(Adaptation::Never),
            n => match n.parse::<usize>() {
                Ok(k) if k >= 1 => Ok(Adaptation::Every(k)),
                _ => Err(Error::Config(format!(
                    "adaptation stride must be a positive integer or 'inf', got {s:?}"
                ))),
            },
        }
    }
}

impl Serialize for Adaptation {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Adaptation::Every(k) => s.serialize_u64(*k as u64),
            Adaptation::Never => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Adaptation {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(u64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(n) => n.to_string().parse(),
            Repr::Text(t) => t.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Unsupervised,
    /// Seed pools come from the first-frame annotation.
    SemiSupervised,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed_count: usize,
    /// Odd side length of the candidate window.
    pub window: usize,
    /// Initial background seeds; `None` means `seed_count / 5`.
    pub background_count: Option<usize>,
    /// Region coverage above which a seed joins the foreground pool.
    pub region_fraction: f64,
    pub bg_objectness: f64,
    pub bg_saliency: f64,
    pub ranking: RankingMode,
    pub adapt_every: Adaptation,
    /// Seeds are tracked on every `track_stride`-th frame.
    pub track_stride: usize,
    pub mode: Mode,
    /// Coverage required for a region to seed the semi-supervised
    /// foreground pool.
    pub semi_region_fraction: f64,
    pub use_crf: bool,
    pub crf: CrfParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed_count: embedding::DEFAULT_SEED_COUNT,
            window: embedding::DEFAULT_WINDOW,
            background_count: None,
            region_fraction: 0.5,
            bg_objectness: 0.3,
            bg_saliency: 0.01,
            ranking: RankingMode::Combined,
            adapt_every: Adaptation::Every(1),
            track_stride: 1,
            mode: Mode::Unsupervised,
            semi_region_fraction: 0.7,
            use_crf: true,
            crf: CrfParams::default(),
        }
    }
}

impl PipelineConfig {
    pub fn effective_background_count(&self) -> usize {
        self.background_count.unwrap_or(self.seed_count / 5).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        unit("bg_objectness", self.bg_objectness)?;
        unit("bg_saliency", self.bg_saliency)?;
        if !(self.region_fraction > 0.0 && self.region_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "region_fraction must lie in (0, 1], got {}",
                self.region_fraction
            )));
        }
        if !(self.semi_region_fraction > 0.0 && self.semi_region_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "semi_region_fraction must lie in (0, 1], got {}",
                self.semi_region_fraction
            )));
        }
        if self.seed_count == 0 {
            return Err(Error::Config("seed_count must be positive".into()));
        }
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(Error::InvalidWindow(self.window));
        }
        if self.track_stride == 0 {
            return Err(Error::Config("track_stride must be positive".into()));
        }
        if self.adapt_every == Adaptation::Every(0) {
            return Err(Error::Config("adapt_every must be positive".into()));
        }
        self.crf.validate()
    }
}

/// Foreground and background reference embeddings built on one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedPools {
    pub frame: usize,
    pub foreground: Vec<Vec<f32>>,
    pub background: Vec<Vec<f32>>,
}

/// Pixels strictly closer (in minimax distance) to the foreground seed than
/// to every background seed.
pub fn initial_foreground(
    graph: &PixelGraph,
    fg_pixel: usize,
    bg_pixels: &[usize],
) -> Result<BinaryMask> {
    if bg_pixels.is_empty() {
        return Err(Error::EmptyBackground);
    }
    let d_fg = graph::bottleneck_distances(graph, &[fg_pixel])?;
    let d_bg = graph::bottleneck_distances(graph, bg_pixels)?;
    let data = d_fg
        .data()
        .iter()
        .zip(d_bg.data())
        .map(|(f, b)| f < b)
        .collect();
    BinaryMask::new(graph.height(), graph.width(), data)
}

/// The foreground seed followed, in index order, by every seed whose region
/// is covered by the initial foreground on more than `fraction` of its area.
pub fn expand_foreground_seeds(
    initial: &BinaryMask,
    regions: &RegionLabeling,
    fg_seed: usize,
    fraction: f64,
) -> Vec<usize> {
    let mut covered = vec![0usize; regions.num_regions()];
    for (p, &l) in regions.labels.iter().enumerate() {
        if initial.get(p) {
            covered[l as usize] += 1;
        }
    }
    let mut pool = vec![fg_seed];
    pool.extend((0..regions.num_regions()).filter(|&j| {
        j != fg_seed && covered[j] as f64 > fraction * regions.counts[j] as f64
    }));
    pool
}

/// Seeds with low objectness or low motion saliency, minus those already in
/// the foreground pool.
pub fn background_seed_pool(
    objectness: &[f64],
    saliency: &[f64],
    max_objectness: f64,
    max_saliency: f64,
    foreground: &[usize],
) -> Result<Vec<usize>> {
    let pool: Vec<usize> = (0..objectness.len())
        .filter(|&s| objectness[s] <= max_objectness || saliency[s] <= max_saliency)
        .filter(|s| !foreground.contains(s))
        .collect();
    if pool.is_empty() {
        Err(Error::EmptyBackground)
    } else {
        Ok(pool)
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn min_sq_distance(v: &[f32], pool: &[Vec<f32>]) -> f64 {
    pool.iter()
        .map(|s| squared_distance(v, s))
        .fold(f64::INFINITY, f64::min)
}

/// `R_FG / (R_FG + R_BG)` per pixel, where each term is the best similarity
/// to the respective pool. Evaluated as
/// `sigmoid(softplus(d²_BG) - softplus(d²_FG))`, which is the same ratio
/// without underflow when both similarities are tiny.
pub fn foreground_probability(emb: &DenseMap, pools: &SeedPools) -> Result<DenseMap> {
    if pools.foreground.is_empty() {
        return Err(Error::EmptyForeground);
    }
    if pools.background.is_empty() {
        return Err(Error::EmptyBackground);
    }
    let e = emb.channels();
    if let Some(bad) = pools
        .foreground
        .iter()
        .chain(&pools.background)
        .find(|v| v.len() != e)
    {
        return Err(Error::DimensionMismatch {
            expected: e,
            found: bad.len(),
        });
    }
    let data: Vec<f32> = (0..emb.num_pixels())
        .into_par_iter()
        .map(|p| {
            let v = emb.pixel(p);
            let d_fg = min_sq_distance(v, &pools.foreground);
            let d_bg = min_sq_distance(v, &pools.background);
            let x = softplus(d_bg) - softplus(d_fg);
            (1.0 / (1.0 + (-x).exp())) as f32
        })
        .collect();
    DenseMap::plane(emb.height(), emb.width(), data)
}

/// Region-mean embeddings from a first-frame annotation. Regions covered
/// by the annotation on at least `fraction` of their area contribute the
/// mean embedding of the covered part to the foreground pool; regions that
/// do not touch it contribute their mean embedding to the background pool.
pub fn semisupervised_seed_pools(
    emb: &DenseMap,
    regions: &RegionLabeling,
    annotation: &BinaryMask,
    fraction: f64,
    frame: usize,
) -> Result<SeedPools> {
    if annotation.height() != emb.height() || annotation.width() != emb.width() {
        return Err(Error::DimensionMismatch {
            expected: emb.num_pixels(),
            found: annotation.height() * annotation.width(),
        });
    }
    let e = emb.channels();
    let n = regions.num_regions();
    let mut covered = vec![0usize; n];
    let mut sum_in = vec![vec![0.0f64; e]; n];
    let mut sum_all = vec![vec![0.0f64; e]; n];
    for (p, &l) in regions.labels.iter().enumerate() {
        let l = l as usize;
        let v = emb.pixel(p);
        let inside = annotation.get(p);
        covered[l] += inside as usize;
        for c in 0..e {
            sum_all[l][c] += v[c] as f64;
            if inside {
                sum_in[l][c] += v[c] as f64;
            }
        }
    }
    let mean = |s: &[f64], count: usize| s.iter().map(|v| (v / count as f64) as f32).collect();
    let mut pools = SeedPools {
        frame,
        foreground: Vec::new(),
        background: Vec::new(),
    };
    for j in 0..n {
        let size = regions.counts[j];
        if size == 0 {
            continue;
        }
        if covered[j] == 0 {
            pools.background.push(mean(&sum_all[j], size));
        } else if covered[j] as f64 >= fraction * size as f64 {
            pools.foreground.push(mean(&sum_in[j], covered[j]));
        }
    }
    if pools.foreground.is_empty() {
        return Err(Error::EmptyForeground);
    }
    if pools.background.is_empty() {
        return Err(Error::EmptyBackground);
    }
    Ok(pools)
}

/// Seeds, regions and motion cues of one frame.
#[derive(Debug, Clone)]
pub struct FrameAnalysis {
    pub seeds: SeedSet,
    pub graph: PixelGraph,
    pub regions: RegionLabeling,
    pub flows: Vec<Flow>,
    pub model: MotionModel,
    pub saliency: Vec<f64>,
}

impl FrameAnalysis {
    pub fn objectness(&self) -> Vec<f64> {
        self.seeds.objectness()
    }
}

pub fn analyze_frame(
    frame: &DenseFeatureFrame,
    index: usize,
    cfg: &PipelineConfig,
) -> Result<FrameAnalysis> {
    let seeds = embedding::propose_seeds(
        &frame.embedding,
        &frame.objectness,
        cfg.window,
        cfg.seed_count,
        index,
    )?;
    let graph = PixelGraph::build(&frame.embedding);
    let pixels = seeds.pixels();
    let regions = graph::assign_regions(&graph, &pixels)?;
    let flows = motion::region_mean_flow(&regions, &frame.flow, &pixels)?;
    let model =
        motion::background_motion_model(&seeds.objectness(), &flows, cfg.effective_background_count())?;
    let saliency = motion::motion_saliency(&flows, &model);
    Ok(FrameAnalysis {
        seeds,
        graph,
        regions,
        flows,
        model,
        saliency,
    })
}

/// Builds the foreground and background pools of one frame from its
/// selected foreground seed.
pub fn build_pools(
    analysis: &FrameAnalysis,
    fg_seed: usize,
    cfg: &PipelineConfig,
) -> Result<SeedPools> {
    let seeds = &analysis.seeds.seeds;
    let initial_bg: Vec<usize> = analysis
        .model
        .background_seeds
        .iter()
        .copied()
        .filter(|&s| s != fg_seed)
        .map(|s| seeds[s].pixel)
        .collect();
    let initial = initial_foreground(&analysis.graph, seeds[fg_seed].pixel, &initial_bg)?;
    let fg = expand_foreground_seeds(&initial, &analysis.regions, fg_seed, cfg.region_fraction);
    let bg = background_seed_pool(
        &analysis.objectness(),
        &analysis.saliency,
        cfg.bg_objectness,
        cfg.bg_saliency,
        &fg,
    )?;
    let embed = |idx: &[usize]| idx.iter().map(|&s| seeds[s].embedding.clone()).collect();
    Ok(SeedPools {
        frame: analysis.seeds.frame,
        foreground: embed(&fg),
        background: embed(&bg),
    })
}

#[derive(Debug, Clone)]
pub struct SegmentationResult {
    pub frame: usize,
    /// Soft foreground probability before any CRF refinement.
    pub probability: DenseMap,
    pub mask: BinaryMask,
    /// Frame whose pools classified this frame.
    pub pool_frame: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ForegroundSeed {
    pub frame: usize,
    pub pixel: usize,
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone)]
pub struct SegmentationRun {
    pub frames: Vec<SegmentationResult>,
    /// Index of the selected track among the frame-0 seeds; `None` in
    /// semi-supervised mode.
    pub selected_track: Option<usize>,
    pub track_scores: Vec<f64>,
    /// Foreground seed on every tracked or adaptation frame.
    pub foreground_seeds: Vec<ForegroundSeed>,
    pub adaptation_frames: Vec<usize>,
}

impl SegmentationRun {
    pub fn masks(&self) -> Vec<BinaryMask> {
        self.frames.iter().map(|f| f.mask.clone()).collect()
    }
}

fn classify(
    frame: &DenseFeatureFrame,
    index: usize,
    pools: &SeedPools,
    cfg: &PipelineConfig,
) -> Result<SegmentationResult> {
    let probability = foreground_probability(&frame.embedding, pools)?;
    let mask = if cfg.use_crf {
        crf::refine(&probability, &frame.rgb, &cfg.crf)?.0
    } else {
        BinaryMask::new(
            probability.height(),
            probability.width(),
            probability.data().iter().map(|&p| p >= 0.5).collect(),
        )?
    };
    Ok(SegmentationResult {
        frame: index,
        probability,
        mask,
        pool_frame: pools.frame,
    })
}

fn classify_all(
    seq: &Sequence,
    pools: &BTreeMap<usize, SeedPools>,
    cfg: &PipelineConfig,
) -> Result<Vec<SegmentationResult>> {
    (0..seq.len())
        .into_par_iter()
        .map(|l| {
            let (_, p) = pools
                .range(..=l)
                .next_back()
                .expect("frame 0 always has pools");
            classify(&seq.frames[l], l, p, cfg).map_err(|e| e.at_frame(l))
        })
        .collect()
}

/// Runs the full pipeline over a sequence.
pub fn segment_sequence(seq: &Sequence, cfg: &PipelineConfig) -> Result<SegmentationRun> {
    cfg.validate()?;
    if seq.is_empty() {
        return Err(Error::InconsistentSequence("sequence has no frames".into()));
    }
    match cfg.mode {
        Mode::Unsupervised => segment_unsupervised(seq, cfg),
        Mode::SemiSupervised => segment_semisupervised(seq, cfg),
    }
}

fn segment_semisupervised(seq: &Sequence, cfg: &PipelineConfig) -> Result<SegmentationRun> {
    let annotation = seq.annotation0.as_ref().ok_or_else(|| {
        Error::MissingGroundTruth("semi-supervised mode needs a frame-0 annotation".into())
    })?;
    let frame0 = &seq.frames[0];
    let pools = (|| {
        let seeds = embedding::propose_seeds(
            &frame0.embedding,
            &frame0.objectness,
            cfg.window,
            cfg.seed_count,
            0,
        )?;
        let graph = PixelGraph::build(&frame0.embedding);
        let regions = graph::assign_regions(&graph, &seeds.pixels())?;
        semisupervised_seed_pools(
            &frame0.embedding,
            &regions,
            annotation,
            cfg.semi_region_fraction,
            0,
        )
    })()
    .map_err(|e| e.at_frame(0))?;
    let pools = BTreeMap::from([(0, pools)]);
    Ok(SegmentationRun {
        frames: classify_all(seq, &pools, cfg)?,
        selected_track: None,
        track_scores: Vec::new(),
        foreground_seeds: Vec::new(),
        adaptation_frames: vec![0],
    })
}

fn segment_unsupervised(seq: &Sequence, cfg: &PipelineConfig) -> Result<SegmentationRun> {
    let n = seq.len();
    let tracked: Vec<usize> = (0..n).step_by(cfg.track_stride).collect();
    let adaptation: Vec<usize> = (0..n)
        .filter(|&k| cfg.adapt_every.is_adaptation_frame(k))
        .collect();
    let mut needed: Vec<usize> = tracked.iter().chain(&adaptation).copied().collect();
    needed.sort_unstable();
    needed.dedup();

    let analyses: BTreeMap<usize, FrameAnalysis> = needed
        .par_iter()
        .map(|&k| {
            analyze_frame(&seq.frames[k], k, cfg)
                .map(|a| (k, a))
                .map_err(|e| e.at_frame(k))
        })
        .collect::<Result<_>>()?;

    let seed_sets: Vec<SeedSet> = tracked.iter().map(|k| analyses[k].seeds.clone()).collect();
    let tracks = tracking::build_tracks(&seed_sets)?;
    let track_scores: Vec<f64> = tracks
        .par_iter()
        .map(|t| {
            tracking::score_track(
                t,
                |f, s| analyses[&f].seeds.seeds[s].objectness as f64,
                |f, s| analyses[&f].saliency[s],
                cfg.ranking,
            )
        })
        .collect();
    let selected = tracking::select_foreground_track(&track_scores)?;
    let track = &tracks[selected];

    let fg_index = |k: usize| -> Result<usize> {
        match track.seed_on(k) {
            Some(s) => Ok(s),
            None => extend_to(track, &analyses[&k].seeds),
        }
    };

    let mut foreground_seeds = Vec::new();
    for &k in &needed {
        let s = &analyses[&k].seeds.seeds[fg_index(k)?];
        foreground_seeds.push(ForegroundSeed {
            frame: k,
            pixel: s.pixel,
            row: s.row,
            col: s.col,
        });
    }

    let pools: BTreeMap<usize, SeedPools> = adaptation
        .par_iter()
        .map(|&k| {
            fg_index(k)
                .and_then(|s| build_pools(&analyses[&k], s, cfg))
                .map(|p| (k, p))
                .map_err(|e| e.at_frame(k))
        })
        .collect::<Result<_>>()?;

    Ok(SegmentationRun {
        frames: classify_all(seq, &pools, cfg)?,
        selected_track: Some(selected),
        track_scores,
        foreground_seeds,
        adaptation_frames: adaptation,
    })
}

/// Foreground seed on an untracked adaptation frame: the seed the track
/// would have been extended to.
fn extend_to(track: &SeedTrack, seeds: &SeedSet) -> Result<usize> {
    tracking::extend_track(track, seeds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::similarity;
    use crate::synthetic::{generate_sequence, Preset, SceneSpec};
    use proptest::prelude::*;

    fn labeling(h: usize, w: usize, labels: Vec<u32>, n: usize) -> RegionLabeling {
        let mut counts = vec![0; n];
        for &l in &labels {
            counts[l as usize] += 1;
        }
        RegionLabeling {
            height: h,
            width: w,
            labels,
            counts,
        }
    }

    #[test]
    fn adaptation_parsing() {
        assert_eq!("inf".parse::<Adaptation>().unwrap(), Adaptation::Never);
        assert_eq!("5".parse::<Adaptation>().unwrap(), Adaptation::Every(5));
        assert!("0".parse::<Adaptation>().is_err());
        let json = serde_json::to_string(&Adaptation::Never).unwrap();
        assert_eq!(json, "\"inf\"");
        assert_eq!(serde_json::from_str::<Adaptation>("10").unwrap(), Adaptation::Every(10));
        assert_eq!(serde_json::from_str::<Adaptation>("\"inf\"").unwrap(), Adaptation::Never);
    }

    #[test]
    fn config_defaults() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.seed_count, 100);
        assert_eq!(cfg.window, 9);
        assert_eq!(cfg.effective_background_count(), 20);
        assert_eq!((cfg.region_fraction, cfg.bg_objectness, cfg.bg_saliency), (0.5, 0.3, 0.01));
        assert_eq!(cfg.semi_region_fraction, 0.7);
        let partial: PipelineConfig = serde_json::from_str(r#"{"seed_count": 50}"#).unwrap();
        assert_eq!(partial.effective_background_count(), 10);
        assert!(PipelineConfig { bg_objectness: 1.5, ..cfg.clone() }.validate().is_err());
        assert!(PipelineConfig { window: 4, ..cfg }.validate().is_err());
    }

    #[test]
    fn constant_embeddings_give_empty_initial_foreground() {
        let g = PixelGraph::from_weights(3, 3, vec![0.0; 6], vec![0.0; 6]).unwrap();
        let m = initial_foreground(&g, 4, &[0]).unwrap();
        assert_eq!(m.count(), 0);
        assert!(matches!(initial_foreground(&g, 4, &[]), Err(Error::EmptyBackground)));
    }

    #[test]
    fn two_blob_initial_foreground() {
        // Left 3 columns are blob A (embedding 0), right 3 columns blob B (embedding 2).
        let (h, w) = (4, 6);
        let data: Vec<f32> = (0..h * w).map(|p| if p % w < 3 { 0.0 } else { 2.0 }).collect();
        let emb = DenseMap::new(h, w, 1, data).unwrap();
        let g = PixelGraph::build(&emb);
        let m = initial_foreground(&g, w + 1, &[2 * w + 4]).unwrap();
        let blob_a = BinaryMask::from_fn(h, w, |_, c| c < 3);
        assert_eq!(m, blob_a);

        // Same answer from exhaustive path enumeration on a 4x4 crop.
        let small: Vec<f32> = (0..16).map(|p| if p % 4 < 2 { 0.0 } else { 2.0 }).collect();
        let g4 = PixelGraph::build(&DenseMap::new(4, 4, 1, small).unwrap());
        let m4 = initial_foreground(&g4, 5, &[10]).unwrap();
        for p in 0..16 {
            let df = crate::synthetic::oracle_minimax(&g4, 5, p).unwrap();
            let db = crate::synthetic::oracle_minimax(&g4, 10, p).unwrap();
            assert_eq!(m4.get(p), df < db);
        }
    }

    #[test]
    fn seed_pixel_in_initial_foreground() {
        let g = PixelGraph::from_weights(1, 3, vec![0.4, 0.1], vec![]).unwrap();
        assert!(initial_foreground(&g, 0, &[2]).unwrap().get(0));
    }

    #[test]
    fn expansion_rules() {
        let regions = labeling(1, 8, vec![0, 0, 1, 1, 2, 2, 2, 2], 3);
        // region 1 fully covered, region 2 exactly half covered
        let initial = BinaryMask::new(1, 8, vec![true, false, true, true, true, true, false, false]).unwrap();
        assert_eq!(expand_foreground_seeds(&initial, &regions, 0, 0.5), vec![0, 1]);
        assert_eq!(expand_foreground_seeds(&initial, &regions, 2, 0.4), vec![2, 0, 1]);
    }

    #[test]
    fn expansion_matches_counting() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let n = 5;
            let labels: Vec<u32> = (0..60).map(|_| rng.random_range(0..n as u32)).collect();
            let regions = labeling(6, 10, labels.clone(), n);
            let initial = BinaryMask::new(6, 10, (0..60).map(|_| rng.random_bool(0.5)).collect()).unwrap();
            let got = expand_foreground_seeds(&initial, &regions, 3, 0.5);
            let mut expected = vec![3];
            for j in 0..n {
                let size = (0..60).filter(|&p| labels[p] as usize == j).count();
                let inter = (0..60).filter(|&p| labels[p] as usize == j && initial.get(p)).count();
                if j != 3 && inter as f64 > 0.5 * size as f64 {
                    expected.push(j);
                }
            }
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn background_pool_examples() {
        let o = [0.2, 0.5, 0.9];
        let m = [0.5, 0.005, 0.5];
        assert_eq!(background_seed_pool(&o, &m, 0.3, 0.01, &[]).unwrap(), vec![0, 1]);
        assert_eq!(background_seed_pool(&[0.3], &[0.5], 0.3, 0.01, &[]).unwrap(), vec![0]);
        assert!(background_seed_pool(&[0.5, 0.9], &[0.2, 0.3], 0.3, 0.01, &[]).is_err());
        assert_eq!(background_seed_pool(&o, &m, 0.3, 0.01, &[1]).unwrap(), vec![0]);
    }

    #[test]
    fn probability_examples() {
        let emb = DenseMap::new(1, 2, 1, vec![0.0, 1.0]).unwrap();
        let pools = SeedPools {
            frame: 0,
            foreground: vec![vec![0.0]],
            background: vec![vec![1.0]],
        };
        let p = foreground_probability(&emb, &pools).unwrap();
        // pixel 0 equals the FG vector: R_FG = 1, R_BG = 2/(1+e)
        let rb = 2.0 / (1.0 + 1f64.exp());
        assert!((p.value(0) as f64 - 1.0 / (1.0 + rb)).abs() < 1e-6);
        assert!((p.value(1) as f64 - rb / (rb + 1.0)).abs() < 1e-6);

        let mid = DenseMap::new(1, 1, 1, vec![0.5]).unwrap();
        assert_eq!(foreground_probability(&mid, &pools).unwrap().value(0), 0.5);

        // R_BG = 0.25 means squared distance ln 7 to the background vector.
        let d = (7.0f64).ln().sqrt() as f32;
        let pools = SeedPools {
            frame: 0,
            foreground: vec![vec![0.0]],
            background: vec![vec![d]],
        };
        let one = DenseMap::new(1, 1, 1, vec![0.0]).unwrap();
        assert!((foreground_probability(&one, &pools).unwrap().value(0) - 0.8).abs() < 1e-6);
    }

    #[test]
    fn probability_matches_naive_double_loop() {
        let spec = SceneSpec { frames: 1, ..SceneSpec::preset(Preset::Clean) };
        let (seq, gt) = generate_sequence(&spec).unwrap();
        let emb = &seq.frames[0].embedding;
        let pick = |want: bool, step: usize| -> Vec<Vec<f32>> {
            (0..emb.num_pixels())
                .filter(|&p| gt[0].get(p) == want)
                .step_by(step)
                .take(6)
                .map(|p| emb.pixel(p).to_vec())
                .collect()
        };
        let pools = SeedPools { frame: 0, foreground: pick(true, 37), background: pick(false, 997) };
        let prob = foreground_probability(emb, &pools).unwrap();
        for p in (0..emb.num_pixels()).step_by(13) {
            let v = emb.pixel(p);
            let mut rf = 0.0f64;
            for s in &pools.foreground {
                rf = rf.max(similarity(v, s).unwrap());
            }
            let mut rb = 0.0f64;
            for s in &pools.background {
                rb = rb.max(similarity(v, s).unwrap());
            }
            let expected = rf / (rf + rb);
            assert!((prob.value(p) as f64 - expected).abs() < 1e-6, "pixel {p}");
        }
    }

    proptest! {
        #[test]
        fn pool_growth_is_monotone(
            pix in proptest::collection::vec(-2.0f32..2.0, 3),
            fg in proptest::collection::vec(-2.0f32..2.0, 6),
            bg in proptest::collection::vec(-2.0f32..2.0, 6),
            extra in proptest::collection::vec(-2.0f32..2.0, 3),
        ) {
            let emb = DenseMap::new(1, 1, 3, pix).unwrap();
            let base = SeedPools { frame: 0, foreground: fg.chunks(3).map(<[f32]>::to_vec).collect(), background: bg.chunks(3).map(<[f32]>::to_vec).collect() };
            let mut more_fg = base.clone();
            more_fg.foreground.push(extra.clone());
            let mut more_bg = base.clone();
            more_bg.background.push(extra);
            let p0 = foreground_probability(&emb, &base).unwrap().value(0);
            prop_assert!(foreground_probability(&emb, &more_fg).unwrap().value(0) >= p0);
            prop_assert!(foreground_probability(&emb, &more_bg).unwrap().value(0) <= p0);
            prop_assert!((0.0..=1.0).contains(&p0));
        }
    }

    #[test]
    fn semisupervised_region_rules() {
        // Regions: 0 inside G, 1 disjoint from G, 2 half covered.
        let regions = labeling(1, 8, vec![0, 0, 1, 1, 1, 2, 2, 2], 3);
        let regions = RegionLabeling { counts: vec![2, 3, 3], ..regions };
        let emb = DenseMap::new(1, 8, 1, vec![1.0, 3.0, 10.0, 11.0, 12.0, 5.0, 6.0, 7.0]).unwrap();
        let gt = BinaryMask::new(1, 8, vec![true, true, false, false, false, true, false, false]).unwrap();
        let pools = semisupervised_seed_pools(&emb, &regions, &gt, 0.7, 0).unwrap();
        assert_eq!(pools.foreground, vec![vec![2.0]]);
        assert_eq!(pools.background, vec![vec![11.0]]);

        let nothing = BinaryMask::new(1, 8, vec![false, false, false, false, false, true, false, false]).unwrap();
        assert!(matches!(
            semisupervised_seed_pools(&emb, &regions, &nothing, 0.7, 0),
            Err(Error::EmptyForeground)
        ));
    }

    #[test]
    fn frame_zero_masks_independent_of_adaptation() {
        let spec = SceneSpec { frames: 4, ..SceneSpec::preset(Preset::Clean) };
        let (seq, _) = generate_sequence(&spec).unwrap();
        let base = PipelineConfig { use_crf: false, ..Default::default() };
        let every = segment_sequence(&seq, &PipelineConfig { adapt_every: Adaptation::Every(1), ..base.clone() }).unwrap();
        let never = segment_sequence(&seq, &PipelineConfig { adapt_every: Adaptation::Never, ..base.clone() }).unwrap();
        assert_eq!(every.frames[0].mask, never.frames[0].mask);
        assert_eq!(every.adaptation_frames, vec![0, 1, 2, 3]);
        assert_eq!(never.adaptation_frames, vec![0]);
        assert!(never.frames.iter().all(|f| f.pool_frame == 0));
        let again = segment_sequence(&seq, &PipelineConfig { adapt_every: Adaptation::Every(1), ..base }).unwrap();
        assert_eq!(every.masks(), again.masks());
    }

    #[test]
    fn semisupervised_requires_annotation() {
        let spec = SceneSpec { frames: 2, ..SceneSpec::preset(Preset::Clean) };
        let (mut seq, _) = generate_sequence(&spec).unwrap();
        seq.annotation0 = None;
        let cfg = PipelineConfig { mode: Mode::SemiSupervised, use_crf: false, ..Default::default() };
        assert!(matches!(segment_sequence(&seq, &cfg), Err(Error::MissingGroundTruth(_))));
    }
}
