//! Embedding-space primitives: pairwise similarity, the embedding edge map,
//! candidate extraction and diverse seed sampling.

use crate::error::{Error, Result};
use crate::feature_store::DenseMap;

pub const DEFAULT_SEED_COUNT: usize = 100;
pub const DEFAULT_WINDOW: usize = 9;

#[inline]
pub fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

/// Similarity as a function of squared embedding distance, `2 / (1 + e^d²)`.
#[inline]
pub fn similarity_from_sq(d2: f64) -> f64 {
    2.0 / (1.0 + d2.exp())
}

/// Similarity of two embedding vectors, in (0, 1] and equal to 1 only for
/// identical vectors.
pub fn similarity(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(similarity_from_sq(squared_distance(a, b)))
}

/// In-bounds 4-neighbours of `idx` on an `h × w` lattice.
#[inline]
pub(crate) fn neighbors4(idx: usize, h: usize, w: usize) -> impl Iterator<Item = usize> {
    let (r, c) = (idx / w, idx % w);
    let up = (r > 0).then(|| idx - w);
    let down = (r + 1 < h).then(|| idx + w);
    let left = (c > 0).then(|| idx - 1);
    let right = (c + 1 < w).then(|| idx + 1);
    [up, down, left, right].into_iter().flatten()
}

/// Per-pixel maximum of `1 - similarity` to the in-bounds 4-neighbours.
/// High values mark discontinuities in the embedding field.
pub fn edge_map(emb: &DenseMap) -> DenseMap {
    let (h, w) = (emb.height(), emb.width());
    let data = (0..h * w)
        .map(|p| {
            let fp = emb.pixel(p);
            neighbors4(p, h, w)
                .map(|q| 1.0 - similarity_from_sq(squared_distance(fp, emb.pixel(q))))
                .fold(0.0f64, f64::max) as f32
        })
        .collect();
    DenseMap::plane(h, w, data).expect("edge map values are finite")
}

/// Pixels whose edge value is the minimum of the `n × n` window centred on
/// them. Windows are clipped at the image border and ties admit every
/// attaining pixel. Returned in row-major order.
pub fn candidate_points(c: &DenseMap, n: usize) -> Result<Vec<usize>> {
    if n < 3 || n.is_multiple_of(2) {
        return Err(Error::InvalidWindow(n));
    }
    let (h, w) = (c.height(), c.width());
    let half = n / 2;

    // The min over a clipped rectangle separates into a row pass and a
    // column pass.
    let mut row_min = vec![0.0f32; h * w];
    for r in 0..h {
        for col in 0..w {
            let lo = col.saturating_sub(half);
            let hi = (col + half).min(w - 1);
            row_min[r * w + col] = (lo..=hi)
                .map(|cc| c.value(r * w + cc))
                .fold(f32::INFINITY, f32::min);
        }
    }
    let mut out = Vec::new();
    for r in 0..h {
        let lo = r.saturating_sub(half);
        let hi = (r + half).min(h - 1);
        for col in 0..w {
            let window_min = (lo..=hi)
                .map(|rr| row_min[rr * w + col])
                .fold(f32::INFINITY, f32::min);
            if c.value(r * w + col) <= window_min {
                out.push(r * w + col);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Seed {
    /// Row-major pixel index.
    pub pixel: usize,
    pub row: usize,
    pub col: usize,
    pub embedding: Vec<f32>,
    pub objectness: f32,
}

impl Seed {
    pub fn at(pixel: usize, emb: &DenseMap, objectness: &DenseMap) -> Self {
        Seed {
            pixel,
            row: pixel / emb.width(),
            col: pixel % emb.width(),
            embedding: emb.pixel(pixel).to_vec(),
            objectness: objectness.value(pixel),
        }
    }
}

/// Seeds of one frame in selection order.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedSet {
    pub frame: usize,
    pub seeds: Vec<Seed>,
}

impl SeedSet {
    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    pub fn pixels(&self) -> Vec<usize> {
        self.seeds.iter().map(|s| s.pixel).collect()
    }

    pub fn objectness(&self) -> Vec<f64> {
        self.seeds.iter().map(|s| s.objectness as f64).collect()
    }
}

/// Greedy farthest-point sampling in similarity space.
///
/// Starts from the candidate with the highest objectness, then repeatedly
/// adds the candidate whose maximum similarity to the already selected
/// seeds is smallest, until `count` seeds are chosen or candidates run out.
/// Ties go to the lowest pixel index.
pub fn sample_diverse_seeds(
    candidates: &[usize],
    emb: &DenseMap,
    objectness: &DenseMap,
    count: usize,
    frame: usize,
) -> Result<SeedSet> {
    let mut pool = candidates.to_vec();
    pool.sort_unstable();
    pool.dedup();
    if pool.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let target = count.min(pool.len());
    let mut seeds = Vec::with_capacity(target);
    if target == 0 {
        return Ok(SeedSet { frame, seeds });
    }

    // `pool` is sorted, so strict comparisons keep the lowest index on ties.
    let mut first = 0;
    for (i, &p) in pool.iter().enumerate() {
        if objectness.value(p) > objectness.value(pool[first]) {
            first = i;
        }
    }

    let mut taken = vec![false; pool.len()];
    let mut max_sim = vec![f64::NEG_INFINITY; pool.len()];
    let mut current = first;
    loop {
        taken[current] = true;
        let chosen = pool[current];
        seeds.push(Seed::at(chosen, emb, objectness));
        if seeds.len() == target {
            break;
        }
        let fc = emb.pixel(chosen);
        let mut best: Option<usize> = None;
        for i in 0..pool.len() {
            if taken[i] {
                continue;
            }
            let s = similarity_from_sq(squared_distance(emb.pixel(pool[i]), fc));
            if s > max_sim[i] {
                max_sim[i] = s;
            }
            if best.is_none_or(|b| max_sim[i] < max_sim[b]) {
                best = Some(i);
            }
        }
        current = best.expect("remaining candidates exist while below target");
    }
    Ok(SeedSet { frame, seeds })
}

/// Edge map, candidates and diverse seeds for one frame.
pub fn propose_seeds(
    emb: &DenseMap,
    objectness: &DenseMap,
    window: usize,
    count: usize,
    frame: usize,
) -> Result<SeedSet> {
    let edges = edge_map(emb);
    let candidates = candidate_points(&edges, window)?;
    sample_diverse_seeds(&candidates, emb, objectness, count, frame)
}
