//! Fully connected two-label CRF refinement by mean-field inference.
//!
//! The pairwise term is a Potts model weighted by the sum of a spatial
//! Gaussian kernel and a bilateral (position + colour) Gaussian kernel.
//! Messages are computed by exact dense summation over all pixel pairs,
//! optionally truncated to a square window of radius `3θ`.

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_store::{BinaryMask, DenseMap};

pub const BACKGROUND: usize = 0;
pub const FOREGROUND: usize = 1;

const PROB_EPS: f64 = 1e-6;

/// Mean-field settings. The defaults are tuning values for 8-bit RGB frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrfParams {
    pub iterations: usize,
    /// Weight of the spatial smoothness kernel.
    pub smoothness_weight: f64,
    /// Spatial standard deviation of the smoothness kernel, in pixels.
    pub smoothness_xy_std: f64,
    /// Weight of the bilateral appearance kernel.
    pub appearance_weight: f64,
    /// Spatial standard deviation of the appearance kernel, in pixels.
    pub appearance_xy_std: f64,
    /// Colour standard deviation of the appearance kernel, in intensity units.
    pub appearance_rgb_std: f64,
    /// Restrict messages to a window of radius `3θ` around each pixel.
    pub truncate: bool,
}

impl Default for CrfParams {
    fn default() -> Self {
        CrfParams {
            iterations: 10,
            smoothness_weight: 3.0,
            smoothness_xy_std: 3.0,
            appearance_weight: 4.0,
            appearance_xy_std: 60.0,
            appearance_rgb_std: 5.0,
            truncate: false,
        }
    }
}

impl CrfParams {
    pub fn validate(&self) -> Result<()> {
        let weights_ok = self.smoothness_weight >= 0.0 && self.appearance_weight >= 0.0;
        let stds_ok = [
            self.smoothness_xy_std,
            self.appearance_xy_std,
            self.appearance_rgb_std,
        ]
        .iter()
        .all(|s| s.is_finite() && *s > 0.0);
        if !weights_ok || !stds_ok {
            return Err(Error::Config(format!(
                "CRF weights must be >= 0 and standard deviations > 0: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Precomputed pairwise kernel factors for one image.
pub struct CrfKernels {
    height: usize,
    width: usize,
    colors: Vec<[i32; 3]>,
    smoothness_weight: f64,
    appearance_weight: f64,
    smooth_axis: Vec<f64>,
    appear_axis: Vec<f64>,
    // exp(-c² / 2θ_β²) indexed by squared colour distance c².
    color: Vec<f64>,
    radius: usize,
}

impl CrfKernels {
    pub fn new(rgb: &RgbImage, params: &CrfParams) -> Result<Self> {
        params.validate()?;
        let (height, width) = (rgb.height() as usize, rgb.width() as usize);
        let colors = rgb
            .pixels()
            .map(|p| [p.0[0] as i32, p.0[1] as i32, p.0[2] as i32])
            .collect();
        let extent = height.max(width);
        let axis = |std: f64| -> Vec<f64> {
            (0..extent)
                .map(|d| (-((d * d) as f64) / (2.0 * std * std)).exp())
                .collect()
        };
        let color = if params.appearance_weight > 0.0 {
            let s2 = 2.0 * params.appearance_rgb_std * params.appearance_rgb_std;
            (0..=3 * 255 * 255).map(|c2| (-(c2 as f64) / s2).exp()).collect()
        } else {
            Vec::new()
        };
        let radius = if params.truncate {
            (3.0 * params.smoothness_xy_std.max(params.appearance_xy_std)).ceil() as usize
        } else {
            extent
        };
        Ok(CrfKernels {
            height,
            width,
            colors,
            smoothness_weight: params.smoothness_weight,
            appearance_weight: params.appearance_weight,
            smooth_axis: axis(params.smoothness_xy_std),
            appear_axis: axis(params.appearance_xy_std),
            color,
            radius,
        })
    }

    pub fn num_pixels(&self) -> usize {
        self.height * self.width
    }

    /// Kernel value between two distinct pixels.
    #[inline]
    pub fn kernel(&self, i: usize, j: usize) -> f64 {
        let (yi, xi) = (i / self.width, i % self.width);
        let (yj, xj) = (j / self.width, j % self.width);
        let (dy, dx) = (yi.abs_diff(yj), xi.abs_diff(xj));
        let mut k = self.smoothness_weight * self.smooth_axis[dy] * self.smooth_axis[dx];
        if self.appearance_weight > 0.0 {
            k += self.appearance_weight
                * self.appear_axis[dy]
                * self.appear_axis[dx]
                * self.color[color_sq(self.colors[i], self.colors[j])];
        }
        k
    }

    fn message(&self, i: usize, marginals: &[[f64; 2]]) -> [f64; 2] {
        let w = self.width;
        let (yi, xi) = (i / w, i % w);
        let y0 = yi.saturating_sub(self.radius);
        let y1 = (yi + self.radius).min(self.height - 1);
        let x0 = xi.saturating_sub(self.radius);
        let x1 = (xi + self.radius).min(w - 1);
        let ci = self.colors[i];
        let mut acc = [0.0f64; 2];
        for yj in y0..=y1 {
            let dy = yi.abs_diff(yj);
            let sy = self.smoothness_weight * self.smooth_axis[dy];
            let ay = self.appearance_weight * self.appear_axis[dy];
            let row = yj * w;
            for xj in x0..=x1 {
                let j = row + xj;
                if j == i {
                    continue;
                }
                let dx = xi.abs_diff(xj);
                let mut k = sy * self.smooth_axis[dx];
                if ay > 0.0 {
                    k += ay * self.appear_axis[dx] * self.color[color_sq(ci, self.colors[j])];
                }
                let q = marginals[j];
                acc[0] += k * q[0];
                acc[1] += k * q[1];
            }
        }
        acc
    }
}

#[inline]
fn color_sq(a: [i32; 3], b: [i32; 3]) -> usize {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) as usize
}

/// Per-pixel `[background, foreground]` unary energies from a foreground
/// probability map, clamped away from 0 and 1 before the logarithm.
pub fn unaries_from_probability(prob: &DenseMap) -> Vec<[f64; 2]> {
    prob.data()
        .iter()
        .map(|&p| {
            let p = (p as f64).clamp(PROB_EPS, 1.0 - PROB_EPS);
            [-(1.0 - p).ln(), -p.ln()]
        })
        .collect()
}

#[inline]
fn normalize(energy: [f64; 2]) -> [f64; 2] {
    // softmax of -energy
    let m = energy[0].min(energy[1]);
    let a = (-(energy[0] - m)).exp();
    let b = (-(energy[1] - m)).exp();
    let z = a + b;
    [a / z, b / z]
}

pub fn initial_marginals(unaries: &[[f64; 2]]) -> Vec<[f64; 2]> {
    unaries.iter().map(|&u| normalize(u)).collect()
}

/// One synchronous mean-field update under the Potts model.
pub fn meanfield_step(
    marginals: &[[f64; 2]],
    unaries: &[[f64; 2]],
    kernels: &CrfKernels,
) -> Vec<[f64; 2]> {
    (0..marginals.len())
        .into_par_iter()
        .map(|i| {
            let m = kernels.message(i, marginals);
            // A label pays for the kernel mass currently on the other label.
            normalize([unaries[i][0] + m[1], unaries[i][1] + m[0]])
        })
        .collect()
}

/// Runs `params.iterations` mean-field updates from the unary-only
/// initialisation and returns the argmax labelling (ties to foreground)
/// together with the foreground marginals.
pub fn refine(prob: &DenseMap, rgb: &RgbImage, params: &CrfParams) -> Result<(BinaryMask, DenseMap)> {
    let (h, w) = (prob.height(), prob.width());
    if rgb.height() as usize != h || rgb.width() as usize != w {
        return Err(Error::DimensionMismatch {
            expected: h * w,
            found: (rgb.height() * rgb.width()) as usize,
        });
    }
    let kernels = CrfKernels::new(rgb, params)?;
    let unaries = unaries_from_probability(prob);
    let mut q = initial_marginals(&unaries);
    for _ in 0..params.iterations {
        q = meanfield_step(&q, &unaries, &kernels);
    }
    let mask = BinaryMask::new(h, w, q.iter().map(|m| m[FOREGROUND] >= m[BACKGROUND]).collect())?;
    let posterior = DenseMap::plane(h, w, q.iter().map(|m| m[FOREGROUND] as f32).collect())?;
    Ok((mask, posterior))
}
