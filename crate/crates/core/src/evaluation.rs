//! Region similarity (J), boundary measure (F), initial foreground-seed
//! accuracy and embedding-drift analyses.

use std::fmt::Write as _;

use kdtree::distance::squared_euclidean;
use kdtree::KdTree;
use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_store::{BinaryMask, DenseMap, Sequence};

fn check_dims(a: &BinaryMask, b: &BinaryMask) -> Result<()> {
    if a.same_size(b) {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: b.height() * b.width(),
            found: a.height() * a.width(),
        })
    }
}

/// Intersection over union; 1 when both masks are empty.
pub fn region_similarity(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    check_dims(pred, gt)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        inter += (p && g) as usize;
        union += (p || g) as usize;
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

/// Foreground pixels with at least one background or out-of-bounds
/// 4-neighbour.
pub fn boundary_pixels(mask: &BinaryMask) -> Vec<bool> {
    let (h, w) = (mask.height(), mask.width());
    (0..h * w)
        .map(|p| {
            if !mask.get(p) {
                return false;
            }
            let (r, c) = (p / w, p % w);
            r == 0
                || c == 0
                || r + 1 == h
                || c + 1 == w
                || !mask.get(p - w)
                || !mask.get(p + w)
                || !mask.get(p - 1)
                || !mask.get(p + 1)
        })
        .collect()
}

/// Exact squared Euclidean distance to the nearest `true` pixel, by the
/// separable lower-envelope algorithm of Felzenszwalb and Huttenlocher.
/// Pixels with no site anywhere get `f64::INFINITY`.
pub fn squared_distance_transform(sites: &[bool], height: usize, width: usize) -> Vec<f64> {
    let mut grid: Vec<f64> = sites
        .iter()
        .map(|&s| if s { 0.0 } else { f64::INFINITY })
        .collect();
    let mut buf = vec![0.0; height.max(width)];
    let mut out = vec![0.0; height.max(width)];
    for c in 0..width {
        for r in 0..height {
            buf[r] = grid[r * width + c];
        }
        edt_1d(&buf[..height], &mut out[..height]);
        for r in 0..height {
            grid[r * width + c] = out[r];
        }
    }
    for r in 0..height {
        let row = &mut grid[r * width..(r + 1) * width];
        buf[..width].copy_from_slice(row);
        edt_1d(&buf[..width], &mut out[..width]);
        row.copy_from_slice(&out[..width]);
    }
    grid
}

fn edt_1d(f: &[f64], d: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    let mut started = false;
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        if !started {
            v[0] = q;
            z[0] = f64::NEG_INFINITY;
            z[1] = f64::INFINITY;
            started = true;
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0 and the new parabola dominates everywhere.
                v[0] = q;
                z[1] = f64::INFINITY;
                break;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    if !started {
        d.iter_mut().for_each(|x| *x = f64::INFINITY);
        return;
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let diff = q as f64 - p as f64;
        *out = diff * diff + f[p];
    }
}

/// Boundary tolerance in pixels: 0.8% of the image diagonal, rounded up.
pub fn default_tolerance(height: usize, width: usize) -> f64 {
    (0.008 * ((height * height + width * width) as f64).sqrt()).ceil()
}

/// Harmonic mean of boundary precision and recall, matching boundary pixels
/// within Euclidean distance `tol`.
pub fn boundary_measure(pred: &BinaryMask, gt: &BinaryMask, tol: f64) -> Result<f64> {
    check_dims(pred, gt)?;
    let (h, w) = (gt.height(), gt.width());
    let pb = boundary_pixels(pred);
    let gb = boundary_pixels(gt);
    let n_pred = pb.iter().filter(|&&b| b).count();
    let n_gt = gb.iter().filter(|&&b| b).count();
    if n_pred == 0 && n_gt == 0 {
        return Ok(1.0);
    }
    if n_pred == 0 || n_gt == 0 {
        return Ok(0.0);
    }
    let tol2 = tol * tol;
    let dt_gt = squared_distance_transform(&gb, h, w);
    let dt_pred = squared_distance_transform(&pb, h, w);
    let matched = |bound: &[bool], dt: &[f64]| {
        bound
            .iter()
            .zip(dt)
            .filter(|(&b, &d)| b && d <= tol2)
            .count()
    };
    let precision = matched(&pb, &dt_gt) as f64 / n_pred as f64;
    let recall = matched(&gb, &dt_pred) as f64 / n_gt as f64;
    Ok(if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    })
}

/// Fraction of per-frame foreground seed pixels lying inside the
/// corresponding ground-truth mask.
pub fn seed_accuracy(seed_pixels: &[usize], gt: &[&BinaryMask]) -> Result<f64> {
    if seed_pixels.len() != gt.len() {
        return Err(Error::DimensionMismatch {
            expected: gt.len(),
            found: seed_pixels.len(),
        });
    }
    if seed_pixels.is_empty() {
        return Ok(0.0);
    }
    let hits = seed_pixels
        .iter()
        .zip(gt)
        .filter(|(&p, m)| m.get(p))
        .count();
    Ok(hits as f64 / seed_pixels.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub frame: usize,
    pub j: f64,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceScores {
    pub sequence: String,
    pub frames: Vec<FrameScore>,
    pub j_mean: f64,
    pub f_mean: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed_accuracy: Option<f64>,
}

impl SequenceScores {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("sequence,frame,J,F\n");
        for fs in &self.frames {
            let _ = writeln!(s, "{},{},{:.6},{:.6}", self.sequence, fs.frame, fs.j, fs.f);
        }
        s
    }
}

pub fn evaluate_masks(
    sequence: &str,
    pred: &[BinaryMask],
    gt: &[&BinaryMask],
    tol: Option<f64>,
) -> Result<SequenceScores> {
    if pred.len() != gt.len() {
        return Err(Error::InconsistentSequence(format!(
            "{} predicted masks but {} ground-truth masks",
            pred.len(),
            gt.len()
        )));
    }
    let frames = pred
        .par_iter()
        .zip(gt.par_iter())
        .enumerate()
        .map(|(k, (p, g))| {
            let tol = tol.unwrap_or_else(|| default_tolerance(g.height(), g.width()));
            Ok(FrameScore {
                frame: k,
                j: region_similarity(p, g).map_err(|e| e.at_frame(k))?,
                f: boundary_measure(p, g, tol).map_err(|e| e.at_frame(k))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = frames.len().max(1) as f64;
    Ok(SequenceScores {
        sequence: sequence.to_string(),
        j_mean: frames.iter().map(|f| f.j).sum::<f64>() / n,
        f_mean: frames.iter().map(|f| f.f).sum::<f64>() / n,
        frames,
        seed_accuracy: None,
    })
}

struct NearestEmbedding {
    tree: KdTree<f64, (), Vec<f64>>,
}

impl NearestEmbedding {
    fn new(emb: &DenseMap, mask: &BinaryMask, want: bool) -> Option<Self> {
        let mut tree = KdTree::new(emb.channels());
        let mut any = false;
        for p in (0..emb.num_pixels()).filter(|&p| mask.get(p) == want) {
            let point: Vec<f64> = emb.pixel(p).iter().map(|&v| v as f64).collect();
            tree.add(point, ()).expect("finite embedding");
            any = true;
        }
        any.then_some(NearestEmbedding { tree })
    }

    fn nearest_sq(&self, v: &[f32]) -> f64 {
        let q: Vec<f64> = v.iter().map(|&x| x as f64).collect();
        self.tree
            .nearest(&q, 1, &squared_euclidean)
            .expect("finite query")
            .first()
            .map(|(d, _)| *d)
            .unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftCurves {
    /// Mean distance from frame-k foreground embeddings to the nearest
    /// frame-0 foreground embedding; `None` where a region is empty.
    pub foreground: Vec<Option<f64>>,
    pub background: Vec<Option<f64>>,
}

fn mean_nearest(
    emb: &DenseMap,
    mask: &BinaryMask,
    want: bool,
    reference: &NearestEmbedding,
) -> Option<f64> {
    let pixels: Vec<usize> = (0..emb.num_pixels()).filter(|&p| mask.get(p) == want).collect();
    if pixels.is_empty() {
        return None;
    }
    let total: f64 = pixels
        .par_iter()
        .map(|&p| reference.nearest_sq(emb.pixel(p)).sqrt())
        .sum();
    Some(total / pixels.len() as f64)
}

fn references(seq: &Sequence, gt: &[&BinaryMask]) -> Result<(NearestEmbedding, NearestEmbedding)> {
    if gt.len() != seq.len() {
        return Err(Error::MissingGroundTruth(format!(
            "{} masks for {} frames",
            gt.len(),
            seq.len()
        )));
    }
    let e0 = &seq.frames[0].embedding;
    let fg = NearestEmbedding::new(e0, gt[0], true)
        .ok_or_else(|| Error::MissingGroundTruth("frame 0 has no foreground".into()))?;
    let bg = NearestEmbedding::new(e0, gt[0], false)
        .ok_or_else(|| Error::MissingGroundTruth("frame 0 has no background".into()))?;
    Ok((fg, bg))
}

pub fn embedding_drift(seq: &Sequence, gt: &[&BinaryMask]) -> Result<DriftCurves> {
    let (fg_ref, bg_ref) = references(seq, gt)?;
    let mut curves = DriftCurves {
        foreground: Vec::with_capacity(seq.len()),
        background: Vec::with_capacity(seq.len()),
    };
    for (k, frame) in seq.frames.iter().enumerate() {
        let fg = mean_nearest(&frame.embedding, gt[k], true, &fg_ref);
        let bg = mean_nearest(&frame.embedding, gt[k], false, &bg_ref);
        if fg.is_none() || bg.is_none() {
            warn!("frame {k}: empty foreground or background, skipped in drift curves");
        }
        curves.foreground.push(fg);
        curves.background.push(bg);
    }
    Ok(curves)
}

/// Per frame, the fraction of ground-truth foreground pixels whose
/// embedding is strictly closer to some frame-0 background embedding than
/// to every frame-0 foreground embedding.
pub fn misclassified_fg_fraction(seq: &Sequence, gt: &[&BinaryMask]) -> Result<Vec<Option<f64>>> {
    let (fg_ref, bg_ref) = references(seq, gt)?;
    Ok(seq
        .frames
        .iter()
        .enumerate()
        .map(|(k, frame)| {
            let emb = &frame.embedding;
            let pixels: Vec<usize> = (0..emb.num_pixels()).filter(|&p| gt[k].get(p)).collect();
            if pixels.is_empty() {
                warn!("frame {k}: empty foreground, skipped in misclassification curve");
                return None;
            }
            let wrong = pixels
                .par_iter()
                .filter(|&&p| {
                    let v = emb.pixel(p);
                    bg_ref.nearest_sq(v) < fg_ref.nearest_sq(v)
                })
                .count();
            Some(wrong as f64 / pixels.len() as f64)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask(h: usize, w: usize, on: &[(usize, usize)]) -> BinaryMask {
        BinaryMask::from_fn(h, w, |r, c| on.contains(&(r, c)))
    }

    fn rect(h: usize, w: usize, r0: usize, c0: usize, r1: usize, c1: usize) -> BinaryMask {
        BinaryMask::from_fn(h, w, |r, c| r >= r0 && r < r1 && c >= c0 && c < c1)
    }

    #[test]
    fn iou_examples() {
        let a = rect(6, 6, 1, 1, 4, 4);
        assert_eq!(region_similarity(&a, &a).unwrap(), 1.0);
        let p = mask(1, 3, &[(0, 0), (0, 1)]);
        let g = mask(1, 3, &[(0, 1), (0, 2)]);
        assert_eq!(region_similarity(&p, &g).unwrap(), 1.0 / 3.0);
        let d = rect(6, 6, 4, 4, 6, 6);
        assert_eq!(region_similarity(&a, &d).unwrap(), 0.0);
        let e = BinaryMask::empty(6, 6);
        assert_eq!(region_similarity(&e, &e).unwrap(), 1.0);
        assert!(region_similarity(&a, &BinaryMask::empty(5, 6)).is_err());
    }

    #[test]
    fn boundary_identity_and_shift() {
        let a = rect(20, 20, 5, 5, 12, 12);
        assert_eq!(boundary_measure(&a, &a, 1.0).unwrap(), 1.0);
        let shifted = rect(20, 20, 7, 5, 14, 12);
        assert_eq!(boundary_measure(&shifted, &a, 2.0).unwrap(), 1.0);
        assert!(boundary_measure(&shifted, &a, 1.0).unwrap() < 1.0);
        let e = BinaryMask::empty(20, 20);
        assert_eq!(boundary_measure(&e, &e, 1.0).unwrap(), 1.0);
        assert_eq!(boundary_measure(&e, &a, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn boundary_half_shifted_matches_brute_force() {
        // Left half of the square stays, the right half moves 4 px right.
        let gt = rect(10, 10, 2, 1, 8, 5);
        let pred = BinaryMask::from_fn(10, 10, |r, c| (2..8).contains(&r) && ((1..3).contains(&c) || (7..9).contains(&c)));
        let tol = 1.0;
        let got = boundary_measure(&pred, &gt, tol).unwrap();
        let expected = brute_f(&pred, &gt, tol);
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        assert!(got > 0.0 && got < 1.0);
    }

    fn brute_f(pred: &BinaryMask, gt: &BinaryMask, tol: f64) -> f64 {
        let (h, w) = (gt.height() as i64, gt.width() as i64);
        let is_boundary = |m: &BinaryMask, r: i64, c: i64| {
            m.at(r as usize, c as usize)
                && [(-1, 0), (1, 0), (0, -1), (0, 1)].iter().any(|(dr, dc)| {
                    let (rr, cc) = (r + dr, c + dc);
                    rr < 0 || cc < 0 || rr >= h || cc >= w || !m.at(rr as usize, cc as usize)
                })
        };
        let pts = |m: &BinaryMask| {
            let mut v = Vec::new();
            for r in 0..h {
                for c in 0..w {
                    if is_boundary(m, r, c) {
                        v.push((r, c));
                    }
                }
            }
            v
        };
        let (pb, gb) = (pts(pred), pts(gt));
        if pb.is_empty() && gb.is_empty() {
            return 1.0;
        }
        if pb.is_empty() || gb.is_empty() {
            return 0.0;
        }
        let hit = |a: &[(i64, i64)], b: &[(i64, i64)]| {
            a.iter()
                .filter(|p| {
                    b.iter()
                        .map(|q| (((p.0 - q.0).pow(2) + (p.1 - q.1).pow(2)) as f64).sqrt())
                        .fold(f64::INFINITY, f64::min)
                        <= tol
                })
                .count() as f64
                / a.len() as f64
        };
        let (p, r) = (hit(&pb, &gb), hit(&gb, &pb));
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    #[test]
    fn distance_transform_matches_brute_force() {
        let sites: Vec<bool> = (0..9 * 11).map(|i| i % 17 == 3 || i == 50).collect();
        let dt = squared_distance_transform(&sites, 9, 11);
        for p in 0..99 {
            let best = (0..99)
                .filter(|&q| sites[q])
                .map(|q| ((p / 11) as f64 - (q / 11) as f64).powi(2) + ((p % 11) as f64 - (q % 11) as f64).powi(2))
                .fold(f64::INFINITY, f64::min);
            assert_eq!(dt[p], best, "pixel {p}");
        }
        assert!(squared_distance_transform(&[false; 6], 2, 3).iter().all(|d| d.is_infinite()));
    }

    #[test]
    fn seed_accuracy_examples() {
        let g = rect(4, 4, 0, 0, 2, 2);
        let gts = vec![&g; 4];
        assert_eq!(seed_accuracy(&[0, 1, 4, 5], &gts).unwrap(), 1.0);
        assert_eq!(seed_accuracy(&[15, 14, 10, 11], &gts).unwrap(), 0.0);
        assert_eq!(seed_accuracy(&[0, 1, 4, 15], &gts).unwrap(), 0.75);
    }

    #[test]
    fn tolerance_follows_diagonal() {
        assert_eq!(default_tolerance(480, 854), 8.0);
        assert_eq!(default_tolerance(96, 160), 2.0);
    }

    proptest! {
        #[test]
        fn metrics_symmetric_and_reflexive(
            a in proptest::collection::vec(any::<bool>(), 12 * 12),
            b in proptest::collection::vec(any::<bool>(), 12 * 12),
            tol in 0u8..4,
        ) {
            let ma = BinaryMask::new(12, 12, a).unwrap();
            let mb = BinaryMask::new(12, 12, b).unwrap();
            prop_assert_eq!(region_similarity(&ma, &mb).unwrap(), region_similarity(&mb, &ma).unwrap());
            let fab = boundary_measure(&ma, &mb, tol as f64).unwrap();
            let fba = boundary_measure(&mb, &ma, tol as f64).unwrap();
            prop_assert!((fab - fba).abs() < 1e-12);
            prop_assert!((fab - brute_f(&ma, &mb, tol as f64)).abs() < 1e-12);
            prop_assert_eq!(region_similarity(&ma, &ma).unwrap(), 1.0);
            prop_assert_eq!(boundary_measure(&ma, &ma, tol as f64).unwrap(), 1.0);
        }

        #[test]
        fn metrics_translation_invariant(r0 in 2usize..6, c0 in 2usize..6, dr in 0usize..4, dc in 0usize..4) {
            let a = rect(24, 24, r0, c0, r0 + 6, c0 + 5);
            let b = rect(24, 24, r0 + 2, c0 + 1, r0 + 9, c0 + 7);
            let at = rect(24, 24, r0 + dr, c0 + dc, r0 + dr + 6, c0 + dc + 5);
            let bt = rect(24, 24, r0 + 2 + dr, c0 + 1 + dc, r0 + 9 + dr, c0 + 7 + dc);
            prop_assert_eq!(region_similarity(&a, &b).unwrap(), region_similarity(&at, &bt).unwrap());
            prop_assert_eq!(boundary_measure(&a, &b, 1.0).unwrap(), boundary_measure(&at, &bt, 1.0).unwrap());
        }
    }
}
