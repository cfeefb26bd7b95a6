//! Region-averaged optical flow, the background motion model and per-seed
//! motion saliency.

use log::warn;

use crate::error::{Error, Result};
use crate::feature_store::DenseMap;
use crate::graph::RegionLabeling;

pub type Flow = [f64; 2];

#[inline]
fn flow_sq_dist(a: Flow, b: Flow) -> f64 {
    let (dx, dy) = (a[0] - b[0], a[1] - b[1]);
    dx * dx + dy * dy
}

/// Mean flow over each seed's region. A region emptied by zero-cost ties
/// falls back to the flow at its seed pixel.
pub fn region_mean_flow(
    regions: &RegionLabeling,
    flow: &DenseMap,
    seed_pixels: &[usize],
) -> Result<Vec<Flow>> {
    if flow.height() != regions.height || flow.width() != regions.width {
        return Err(Error::DimensionMismatch {
            expected: regions.height * regions.width,
            found: flow.num_pixels(),
        });
    }
    if flow.channels() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: flow.channels(),
        });
    }
    if seed_pixels.len() != regions.num_regions() {
        return Err(Error::DimensionMismatch {
            expected: regions.num_regions(),
            found: seed_pixels.len(),
        });
    }
    let mut sums = vec![[0.0f64; 2]; regions.num_regions()];
    for (p, &l) in regions.labels.iter().enumerate() {
        let v = flow.pixel(p);
        sums[l as usize][0] += v[0] as f64;
        sums[l as usize][1] += v[1] as f64;
    }
    Ok(sums
        .into_iter()
        .zip(&regions.counts)
        .zip(seed_pixels)
        .map(|((s, &n), &seed)| {
            if n == 0 {
                let v = flow.pixel(seed);
                [v[0] as f64, v[1] as f64]
            } else {
                [s[0] / n as f64, s[1] / n as f64]
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionModel {
    /// Indices of the initial background seeds, lowest objectness first.
    pub background_seeds: Vec<usize>,
    /// Region flows of the initial background seeds.
    pub background_flows: Vec<Flow>,
    /// Largest squared distance from any seed flow to its nearest background
    /// flow.
    pub normalizer: f64,
}

/// Indices of the `count` seeds with the lowest objectness; ties keep the
/// lower seed index.
pub fn lowest_objectness(objectness: &[f64], count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..objectness.len()).collect();
    order.sort_by(|&a, &b| objectness[a].total_cmp(&objectness[b]).then(a.cmp(&b)));
    order.truncate(count);
    order
}

fn nearest_background_sq(v: Flow, background: &[Flow]) -> f64 {
    background
        .iter()
        .map(|&b| flow_sq_dist(v, b))
        .fold(f64::INFINITY, f64::min)
}

pub fn background_motion_model(
    objectness: &[f64],
    flows: &[Flow],
    background_count: usize,
) -> Result<MotionModel> {
    if objectness.is_empty() {
        return Err(Error::EmptySeeds);
    }
    if objectness.len() != flows.len() {
        return Err(Error::DimensionMismatch {
            expected: objectness.len(),
            found: flows.len(),
        });
    }
    let background_seeds = lowest_objectness(objectness, background_count.max(1));
    let background_flows: Vec<Flow> = background_seeds.iter().map(|&i| flows[i]).collect();
    let normalizer = flows
        .iter()
        .map(|&v| nearest_background_sq(v, &background_flows))
        .fold(0.0, f64::max);
    Ok(MotionModel {
        background_seeds,
        background_flows,
        normalizer,
    })
}

/// Squared distance to the nearest background flow, normalised so the most
/// salient seed scores 1. Without any motion contrast every score is 0.
pub fn motion_saliency(flows: &[Flow], model: &MotionModel) -> Vec<f64> {
    if model.normalizer <= 0.0 {
        warn!("all region flows coincide with the background model; motion saliency is zero");
        return vec![0.0; flows.len()];
    }
    flows
        .iter()
        .map(|&v| (nearest_background_sq(v, &model.background_flows) / model.normalizer).min(1.0))
        .collect()
}
