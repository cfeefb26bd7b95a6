//! Synthetic feature sequences with known ground truth, and the exhaustive
//! graph oracles used to cross-check the lattice algorithms.
//!
//! Noise is drawn from `rand_distr::StandardNormal` on a ChaCha8 generator
//! seeded with `SceneSpec::seed`, using stream `k` for frame `k`, so each
//! frame can be generated independently and the output is identical for a
//! given seed regardless of thread count.

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_store::{BinaryMask, DenseFeatureFrame, DenseMap, Sequence};
use crate::graph::{PixelGraph, RegionLabeling};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Rectangle { height: usize, width: usize },
    Disk { radius: usize },
}

impl Shape {
    fn extent(&self) -> (usize, usize) {
        match *self {
            Shape::Rectangle { height, width } => (height, width),
            Shape::Disk { radius } => (2 * radius + 1, 2 * radius + 1),
        }
    }

    fn contains(&self, dr: i64, dc: i64) -> bool {
        let (h, w) = self.extent();
        if dr < 0 || dc < 0 || dr >= h as i64 || dc >= w as i64 {
            return false;
        }
        match *self {
            Shape::Rectangle { .. } => true,
            Shape::Disk { radius } => {
                let (y, x) = (dr - radius as i64, dc - radius as i64);
                y * y + x * x <= (radius * radius) as i64
            }
        }
    }
}

/// Things are countable objects; stuff is amorphous background such as
/// water that may still carry apparent motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    #[default]
    Thing,
    Stuff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub shape: Shape,
    /// Top-left corner of the bounding box on frame 0.
    pub top: i64,
    pub left: i64,
    /// Per-frame displacement `(dx, dy)` of the shape, in whole pixels.
    pub velocity: [i64; 2],
    /// Apparent optical flow `(dx, dy)`; defaults to the velocity.
    #[serde(default)]
    pub flow: Option<[f32; 2]>,
    pub centroid: Vec<f32>,
    pub noise: f32,
    pub objectness: f32,
    pub color: [u8; 3],
    #[serde(default)]
    pub kind: ObjectKind,
}

impl ObjectSpec {
    /// Moving things make up the ground truth.
    pub fn is_target(&self) -> bool {
        self.kind == ObjectKind::Thing && self.velocity != [0, 0]
    }

    fn apparent_flow(&self) -> [f32; 2] {
        self.flow
            .unwrap_or([self.velocity[0] as f32, self.velocity[1] as f32])
    }

    fn origin_at(&self, frame: usize) -> (i64, i64) {
        let k = frame as i64;
        (self.top + k * self.velocity[1], self.left + k * self.velocity[0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSpec {
    pub centroid: Vec<f32>,
    pub noise: f32,
    pub objectness: f32,
    pub color: [u8; 3],
    /// Camera-induced flow `(dx, dy)` applied to every background pixel.
    #[serde(default)]
    pub flow: [f32; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub frames: usize,
    pub embedding_dim: usize,
    pub background: BackgroundSpec,
    /// Painted in order; later objects occlude earlier ones.
    pub objects: Vec<ObjectSpec>,
    /// Added cumulatively to every embedding: frame `k` is offset by `k·drift`.
    #[serde(default)]
    pub drift: Option<Vec<f32>>,
    pub objectness_noise: f32,
    pub flow_noise: f32,
    pub color_noise: f32,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// One moving object and a static distractor of identical statistics.
    Clean,
    /// The clean scene without any noise.
    Noiseless,
    /// One moving object whose embeddings drift toward the background.
    Drift,
    /// Noiseless version of the drift scene.
    NoiselessDrift,
    /// A moving object, a static object and moving low-objectness stuff.
    Ranking,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::Clean,
        Preset::Noiseless,
        Preset::Drift,
        Preset::NoiselessDrift,
        Preset::Ranking,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Clean => "clean",
            Preset::Noiseless => "noiseless",
            Preset::Drift => "drift",
            Preset::NoiselessDrift => "noiseless-drift",
            Preset::Ranking => "ranking",
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown preset {s:?}")))
    }
}

/// Scaled basis vector; distinct indices give centroids `scale·√2` apart.
fn basis(dim: usize, index: usize, scale: f32) -> Vec<f32> {
    let mut v = vec![0.0; dim];
    v[index % dim] = scale;
    v
}

const CENTROID_SCALE: f32 = 1.5;
const EMBEDDING_NOISE: f32 = 0.05;

impl SceneSpec {
    /// 96×160, 20 frames, 8-dimensional embeddings.
    pub fn preset(preset: Preset) -> SceneSpec {
        Self::preset_with(preset, 8, 7)
    }

    pub fn preset_with(preset: Preset, embedding_dim: usize, seed: u64) -> SceneSpec {
        let e = embedding_dim.max(4);
        let noisy = !matches!(preset, Preset::Noiseless | Preset::NoiselessDrift);
        let noise = if noisy { EMBEDDING_NOISE } else { 0.0 };
        let background = BackgroundSpec {
            centroid: basis(e, 0, CENTROID_SCALE),
            noise,
            objectness: 0.05,
            color: [96, 112, 88],
            flow: [0.0, 0.0],
        };
        let mover = ObjectSpec {
            shape: Shape::Rectangle {
                height: 24,
                width: 24,
            },
            top: 28,
            left: 16,
            velocity: [2, 1],
            flow: None,
            centroid: basis(e, 1, CENTROID_SCALE),
            noise,
            objectness: 0.9,
            color: [200, 64, 48],
            kind: ObjectKind::Thing,
        };
        let distractor = ObjectSpec {
            shape: Shape::Rectangle {
                height: 24,
                width: 24,
            },
            top: 16,
            left: 112,
            velocity: [0, 0],
            centroid: basis(e, 2, CENTROID_SCALE),
            color: [56, 80, 200],
            ..mover.clone()
        };
        let objects = match preset {
            Preset::Clean | Preset::Noiseless => vec![mover, distractor],
            Preset::Drift | Preset::NoiselessDrift => vec![mover],
            Preset::Ranking => {
                let stuff = ObjectSpec {
                    shape: Shape::Rectangle {
                        height: 20,
                        width: 160,
                    },
                    top: 76,
                    left: 0,
                    velocity: [0, 0],
                    flow: Some([3.0, 0.0]),
                    centroid: basis(e, 3, CENTROID_SCALE),
                    objectness: 0.2,
                    color: [40, 90, 160],
                    kind: ObjectKind::Stuff,
                    ..mover.clone()
                };
                let still = ObjectSpec {
                    objectness: 0.95,
                    ..distractor
                };
                let mover = ObjectSpec {
                    top: 20,
                    ..mover
                };
                vec![stuff, still, mover]
            }
        };
        let drift = match preset {
            Preset::Drift | Preset::NoiselessDrift => {
                // Toward the background centroid, so the object gradually
                // resembles the frame-0 background.
                let dir: Vec<f32> = objects[0]
                    .centroid
                    .iter()
                    .zip(&background.centroid)
                    .map(|(m, b)| b - m)
                    .collect();
                let norm = dir.iter().map(|v| v * v).sum::<f32>().sqrt();
                Some(dir.iter().map(|v| v / norm * DRIFT_PER_FRAME).collect())
            }
            _ => None,
        };
        SceneSpec {
            height: 96,
            width: 160,
            frames: 20,
            embedding_dim: e,
            background,
            objects,
            drift,
            objectness_noise: if noisy { 0.03 } else { 0.0 },
            flow_noise: if noisy { 0.3 } else { 0.0 },
            color_noise: if noisy { 6.0 } else { 0.0 },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Scene(msg));
        if self.height == 0 || self.width == 0 || self.frames == 0 || self.embedding_dim == 0 {
            return bad("image size, frame count and embedding dimension must be positive".into());
        }
        let dims = std::iter::once(("background", &self.background.centroid))
            .chain(self.objects.iter().map(|o| ("object", &o.centroid)))
            .chain(self.drift.iter().map(|d| ("drift", d)));
        for (what, v) in dims {
            if v.len() != self.embedding_dim {
                return bad(format!(
                    "{what} vector has {} entries, expected {}",
                    v.len(),
                    self.embedding_dim
                ));
            }
        }
        for (i, o) in self.objects.iter().enumerate() {
            let (h, w) = o.shape.extent();
            for k in 0..self.frames {
                let (top, left) = o.origin_at(k);
                if top < 0
                    || left < 0
                    || top + h as i64 > self.height as i64
                    || left + w as i64 > self.width as i64
                {
                    return bad(format!("object {i} leaves the image on frame {k}"));
                }
            }
            if !(0.0..=1.0).contains(&o.objectness) {
                return bad(format!("object {i} objectness {} outside [0, 1]", o.objectness));
            }
        }
        Ok(())
    }

    /// Index of the topmost object covering each pixel on `frame`.
    fn layout(&self, frame: usize) -> Vec<Option<usize>> {
        let mut owner = vec![None; self.height * self.width];
        for (i, o) in self.objects.iter().enumerate() {
            let (top, left) = o.origin_at(frame);
            let (h, w) = o.shape.extent();
            for r in 0..h {
                for c in 0..w {
                    if o.shape.contains(r as i64, c as i64) {
                        let (rr, cc) = (top as usize + r, left as usize + c);
                        owner[rr * self.width + cc] = Some(i);
                    }
                }
            }
        }
        owner
    }

    /// Ground truth of `frame`: the union of moving things.
    pub fn ground_truth(&self, frame: usize) -> BinaryMask {
        let layout = self.layout(frame);
        let data = layout
            .iter()
            .map(|o| o.is_some_and(|i| self.objects[i].is_target()))
            .collect();
        BinaryMask::new(self.height, self.width, data).expect("layout covers the image")
    }

    /// Pixels covered by object `index` on `frame`.
    pub fn object_mask(&self, index: usize, frame: usize) -> BinaryMask {
        let data = self.layout(frame).iter().map(|o| *o == Some(index)).collect();
        BinaryMask::new(self.height, self.width, data).expect("layout covers the image")
    }
}

const DRIFT_PER_FRAME: f32 = 0.25;

fn generate_frame(spec: &SceneSpec, k: usize) -> DenseFeatureFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(k as u64);
    let mut gauss = move || -> f32 { rng.sample(StandardNormal) };

    let (h, w, e) = (spec.height, spec.width, spec.embedding_dim);
    let layout = spec.layout(k);
    let mut emb = Vec::with_capacity(h * w * e);
    let mut obj = Vec::with_capacity(h * w);
    let mut flow = Vec::with_capacity(h * w * 2);
    let mut rgb = RgbImage::new(w as u32, h as u32);
    for (p, owner) in layout.iter().enumerate() {
        let (centroid, noise, objectness, color, f) = match owner {
            Some(i) => {
                let o = &spec.objects[*i];
                (&o.centroid, o.noise, o.objectness, o.color, o.apparent_flow())
            }
            None => {
                let b = &spec.background;
                (&b.centroid, b.noise, b.objectness, b.color, b.flow)
            }
        };
        for (c, &m) in centroid.iter().enumerate() {
            let d = spec.drift.as_ref().map_or(0.0, |d| d[c] * k as f32);
            emb.push(m + d + noise * gauss());
        }
        obj.push((objectness + spec.objectness_noise * gauss()).clamp(0.0, 1.0));
        flow.push(f[0] + spec.flow_noise * gauss());
        flow.push(f[1] + spec.flow_noise * gauss());
        let px = color.map(|v| (v as f32 + spec.color_noise * gauss()).round().clamp(0.0, 255.0) as u8);
        rgb.put_pixel((p % w) as u32, (p / w) as u32, Rgb(px));
    }
    DenseFeatureFrame {
        embedding: DenseMap::new(h, w, e, emb).expect("finite embeddings"),
        objectness: DenseMap::plane(h, w, obj).expect("finite objectness"),
        flow: DenseMap::new(h, w, 2, flow).expect("finite flow"),
        rgb,
    }
}

/// Renders every frame of the scene together with its ground truth. The
/// returned sequence also carries the masks and uses frame 0's mask as
/// its first-frame annotation.
pub fn generate_sequence(spec: &SceneSpec) -> Result<(Sequence, Vec<BinaryMask>)> {
    spec.validate()?;
    let frames: Vec<DenseFeatureFrame> = (0..spec.frames)
        .into_par_iter()
        .map(|k| generate_frame(spec, k))
        .collect();
    let gt: Vec<BinaryMask> = (0..spec.frames).map(|k| spec.ground_truth(k)).collect();
    let seq = Sequence::new(
        frames,
        gt.iter().cloned().map(Some).collect(),
        Some(gt[0].clone()),
    )?;
    Ok((seq, gt))
}

pub const MINIMAX_ORACLE_LIMIT: usize = 16;
pub const GEODESIC_ORACLE_LIMIT: usize = 64;

/// Minimax distance between two pixels by enumerating every simple path.
pub fn oracle_minimax(graph: &PixelGraph, src: usize, dst: usize) -> Result<f32> {
    let n = graph.num_pixels();
    if n > MINIMAX_ORACLE_LIMIT {
        return Err(Error::GridTooLarge {
            height: graph.height(),
            width: graph.width(),
            limit: MINIMAX_ORACLE_LIMIT,
        });
    }
    if src >= n || dst >= n {
        return Err(Error::Shape(format!("pixel outside {n}-pixel grid")));
    }
    fn walk(g: &PixelGraph, at: usize, dst: usize, worst: f32, seen: &mut [bool], best: &mut f32) {
        if at == dst {
            *best = best.min(worst);
            return;
        }
        for (next, w) in g.edges(at) {
            if !seen[next] {
                seen[next] = true;
                walk(g, next, dst, worst.max(w), seen, best);
                seen[next] = false;
            }
        }
    }
    let mut seen = vec![false; n];
    seen[src] = true;
    let mut best = f32::INFINITY;
    walk(graph, src, dst, 0.0, &mut seen, &mut best);
    Ok(best)
}

/// Geodesic Voronoi labelling from one independent single-source
/// shortest-path computation per seed; ties go to the lowest seed index.
pub fn oracle_geodesic(graph: &PixelGraph, seeds: &[usize]) -> Result<RegionLabeling> {
    let n = graph.num_pixels();
    if n > GEODESIC_ORACLE_LIMIT {
        return Err(Error::GridTooLarge {
            height: graph.height(),
            width: graph.width(),
            limit: GEODESIC_ORACLE_LIMIT,
        });
    }
    if seeds.is_empty() {
        return Err(Error::EmptySeeds);
    }
    let per_seed: Vec<Vec<f64>> = seeds
        .iter()
        .map(|&s| {
            // array-scan Dijkstra
            let mut dist = vec![f64::INFINITY; n];
            let mut done = vec![false; n];
            dist[s] = 0.0;
            for _ in 0..n {
                let u = (0..n)
                    .filter(|&i| !done[i])
                    .min_by(|&a, &b| dist[a].total_cmp(&dist[b]))
                    .expect("unvisited node remains");
                done[u] = true;
                for (v, w) in graph.edges(u) {
                    let nd = dist[u] + w as f64;
                    if nd < dist[v] {
                        dist[v] = nd;
                    }
                }
            }
            dist
        })
        .collect();
    let labels: Vec<u32> = (0..n)
        .map(|p| {
            let mut best = 0;
            for s in 1..seeds.len() {
                if per_seed[s][p] < per_seed[best][p] {
                    best = s;
                }
            }
            best as u32
        })
        .collect();
    let mut counts = vec![0; seeds.len()];
    for &l in &labels {
        counts[l as usize] += 1;
    }
    Ok(RegionLabeling {
        height: graph.height(),
        width: graph.width(),
        labels,
        counts,
    })
}
