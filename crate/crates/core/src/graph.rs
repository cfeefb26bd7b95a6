//! The 4-neighbour embedding graph and its two distance computations:
//! geodesic (sum-of-weights) Voronoi regions and bottleneck (minimax)
//! distances.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::embedding::{neighbors4, squared_distance};
use crate::error::{Error, Result};
use crate::feature_store::DenseMap;

/// Edge weights of a pixel lattice. `horizontal[r * (w - 1) + c]` joins
/// `(r, c)` and `(r, c + 1)`; `vertical[r * w + c]` joins `(r, c)` and
/// `(r + 1, c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelGraph {
    height: usize,
    width: usize,
    horizontal: Vec<f32>,
    vertical: Vec<f32>,
}

impl PixelGraph {
    /// Weights are the Euclidean distances between neighbouring embeddings.
    pub fn build(emb: &DenseMap) -> Self {
        let (h, w) = (emb.height(), emb.width());
        let dist = |a: usize, b: usize| squared_distance(emb.pixel(a), emb.pixel(b)).sqrt() as f32;
        let mut horizontal = Vec::with_capacity(h * w.saturating_sub(1));
        for r in 0..h {
            for c in 0..w.saturating_sub(1) {
                horizontal.push(dist(r * w + c, r * w + c + 1));
            }
        }
        let vertical = (0..h.saturating_sub(1) * w)
            .map(|p| dist(p, p + w))
            .collect();
        PixelGraph {
            height: h,
            width: w,
            horizontal,
            vertical,
        }
    }

    pub fn from_weights(
        height: usize,
        width: usize,
        horizontal: Vec<f32>,
        vertical: Vec<f32>,
    ) -> Result<Self> {
        if horizontal.len() != height * width.saturating_sub(1)
            || vertical.len() != height.saturating_sub(1) * width
        {
            return Err(Error::Shape(format!(
                "{height}x{width} grid needs {} horizontal and {} vertical weights",
                height * width.saturating_sub(1),
                height.saturating_sub(1) * width
            )));
        }
        if horizontal
            .iter()
            .chain(&vertical)
            .any(|w| !w.is_finite() || *w < 0.0)
        {
            return Err(Error::Shape("edge weights must be finite and non-negative".into()));
        }
        Ok(PixelGraph {
            height,
            width,
            horizontal,
            vertical,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn horizontal(&self) -> &[f32] {
        &self.horizontal
    }

    pub fn vertical(&self) -> &[f32] {
        &self.vertical
    }

    /// Weight of the edge between 4-adjacent pixels `a` and `b`.
    pub fn weight(&self, a: usize, b: usize) -> Option<f32> {
        let (lo, hi) = (a.min(b), a.max(b));
        let w = self.width;
        if hi == lo + 1 && lo % w + 1 < w {
            Some(self.horizontal[(lo / w) * (w - 1) + lo % w])
        } else if hi == lo + w && hi < self.num_pixels() {
            Some(self.vertical[lo])
        } else {
            None
        }
    }

    /// Neighbours of `p` together with the connecting edge weight.
    #[inline]
    pub fn edges(&self, p: usize) -> impl Iterator<Item = (usize, f32)> + '_ {
        let (h, w) = (self.height, self.width);
        let (r, c) = (p / w, p % w);
        let up = (r > 0).then(|| (p - w, self.vertical[p - w]));
        let down = (r + 1 < h).then(|| (p + w, self.vertical[p]));
        let left = (c > 0).then(|| (p - 1, self.horizontal[r * (w - 1) + c - 1]));
        let right = (c + 1 < w).then(|| (p + 1, self.horizontal[r * (w - 1) + c]));
        [up, down, left, right].into_iter().flatten()
    }

    pub fn neighbors(&self, p: usize) -> impl Iterator<Item = usize> {
        neighbors4(p, self.height, self.width)
    }
}

/// Geodesic Voronoi partition of the lattice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionLabeling {
    pub height: usize,
    pub width: usize,
    /// Seed index per pixel.
    pub labels: Vec<u32>,
    /// Pixel count per seed.
    pub counts: Vec<usize>,
}

impl RegionLabeling {
    pub fn num_regions(&self) -> usize {
        self.counts.len()
    }

    #[inline]
    pub fn label(&self, p: usize) -> usize {
        self.labels[p] as usize
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Entry<D> {
    dist: D,
    label: u32,
    node: u32,
}

impl<D: PartialOrd> Eq for Entry<D> {}

impl<D: PartialOrd> Ord for Entry<D> {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed for a min-heap on (dist, label).
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.label.cmp(&self.label))
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl<D: PartialOrd> PartialOrd for Entry<D> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Labels every pixel with the seed of smallest shortest-path distance,
/// where path length is the sum of edge weights. Equal distances go to the
/// lowest seed index, so a seed pixel reachable at zero cost from an
/// earlier seed takes that seed's label.
pub fn assign_regions(graph: &PixelGraph, seed_pixels: &[usize]) -> Result<RegionLabeling> {
    if seed_pixels.is_empty() {
        return Err(Error::EmptySeeds);
    }
    let n = graph.num_pixels();
    let mut dist = vec![f64::INFINITY; n];
    let mut label = vec![u32::MAX; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    for (i, &p) in seed_pixels.iter().enumerate() {
        if p >= n {
            return Err(Error::Shape(format!("seed pixel {p} outside {n}-pixel grid")));
        }
        let i = i as u32;
        if dist[p] > 0.0 || i < label[p] {
            dist[p] = 0.0;
            label[p] = i;
            heap.push(Entry {
                dist: 0.0,
                label: i,
                node: p as u32,
            });
        }
    }
    // Entries pop in (distance, label) order, so the first pop of a node
    // fixes its lexicographically smallest (distance, label) pair.
    while let Some(Entry { dist: d, label: l, node }) = heap.pop() {
        let u = node as usize;
        if done[u] || d != dist[u] || l != label[u] {
            continue;
        }
        done[u] = true;
        for (v, w) in graph.edges(u) {
            if done[v] {
                continue;
            }
            let nd = d + w as f64;
            if nd < dist[v] || (nd == dist[v] && l < label[v]) {
                dist[v] = nd;
                label[v] = l;
                heap.push(Entry {
                    dist: nd,
                    label: l,
                    node: v as u32,
                });
            }
        }
    }
    let mut counts = vec![0usize; seed_pixels.len()];
    for &l in &label {
        counts[l as usize] += 1;
    }
    Ok(RegionLabeling {
        height: graph.height(),
        width: graph.width(),
        labels: label,
        counts,
    })
}

/// Minimax distance from the nearest source: the smallest achievable
/// maximum edge weight over all paths from any source to each pixel.
pub fn bottleneck_distances(graph: &PixelGraph, sources: &[usize]) -> Result<DenseMap> {
    if sources.is_empty() {
        return Err(Error::EmptySeeds);
    }
    let n = graph.num_pixels();
    let mut dist = vec![f32::INFINITY; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        if s >= n {
            return Err(Error::Shape(format!("source pixel {s} outside {n}-pixel grid")));
        }
        dist[s] = 0.0;
        heap.push(Entry {
            dist: 0.0f32,
            label: 0,
            node: s as u32,
        });
    }
    while let Some(Entry { dist: d, node, .. }) = heap.pop() {
        let u = node as usize;
        if done[u] {
            continue;
        }
        done[u] = true;
        for (v, w) in graph.edges(u) {
            let nd = d.max(w);
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Entry {
                    dist: nd,
                    label: 0,
                    node: v as u32,
                });
            }
        }
    }
    Ok(DenseMap::plane(graph.height(), graph.width(), dist).expect("grid is connected"))
}
