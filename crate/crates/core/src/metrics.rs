//! Standard depth evaluation metrics and evaluation crops.

use alloc::format;
use alloc::vec::Vec;

use crate::depth::DepthMap;
use crate::error::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

/// Aggregated error metrics over the valid pixels of one or more maps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRecord {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub log10: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    /// Valid pixel count.
    pub t: usize,
}

/// Fractional evaluation region. The named presets follow the conventional
/// indoor/outdoor evaluation crops; coordinates are fractions of the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropSpec {
    pub top: f64,
    pub bottom: f64,
    pub left: f64,
    pub right: f64,
}

impl CropSpec {
    /// Whole image.
    pub const NONE: CropSpec = CropSpec {
        top: 0.0,
        bottom: 1.0,
        left: 0.0,
        right: 1.0,
    };

    /// Indoor-style crop: rows [45, 471), cols [41, 601) of a 480×640 frame,
    /// expressed fractionally.
    pub const EIGEN: CropSpec = CropSpec {
        top: 45.0 / 480.0,
        bottom: 471.0 / 480.0,
        left: 41.0 / 640.0,
        right: 601.0 / 640.0,
    };

    /// Outdoor-style crop with the canonical fractions.
    pub const GARG: CropSpec = CropSpec {
        top: 0.408_108_11,
        bottom: 0.991_891_89,
        left: 0.035_947_71,
        right: 0.964_052_29,
    };

    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..1.0).contains(&self.top)
            && self.top < self.bottom
            && self.bottom <= 1.0
            && (0.0..1.0).contains(&self.left)
            && self.left < self.right
            && self.right <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid crop spec {self:?}")))
        }
    }

    /// Pixel bounds on an H×W map: floor for starts, ceil for ends.
    pub fn bounds(&self, height: usize, width: usize) -> (usize, usize, usize, usize) {
        let r0 = (self.top * height as f64).floor() as usize;
        let r1 = (self.bottom * height as f64).ceil() as usize;
        let c0 = (self.left * width as f64).floor() as usize;
        let c1 = (self.right * width as f64).ceil() as usize;
        (r0, r1.min(height), c0, c1.min(width))
    }
}

/// Extract the cropped subregion of a map.
pub fn apply_crop(map: &DepthMap, crop: &CropSpec) -> Result<DepthMap> {
    crop.validate()?;
    let (r0, r1, c0, c1) = crop.bounds(map.height, map.width);
    if r1 <= r0 || c1 <= c0 {
        return Err(Error::Contract(format!(
            "crop {crop:?} degenerates on a {}×{} map",
            map.height, map.width
        )));
    }
    let (h, w) = (r1 - r0, c1 - c0);
    let mut data = Vec::with_capacity(h * w);
    let mut mask = Vec::with_capacity(h * w);
    for r in r0..r1 {
        for c in c0..c1 {
            data.push(map.at(r, c));
            mask.push(map.valid_at(r, c));
        }
    }
    Ok(DepthMap::with_mask(h, w, data, mask))
}

/// Metric suite over the valid pixels of the cropped region, where validity
/// means the ground-truth mask is set and gt lies in [min_depth, max_depth].
pub fn compute_metrics(
    pred: &DepthMap,
    gt: &DepthMap,
    crop: &CropSpec,
    min_depth: f64,
    max_depth: f64,
) -> Result<MetricsRecord> {
    if (pred.height, pred.width) != (gt.height, gt.width) {
        return Err(Error::dim(
            "compute_metrics",
            format!(
                "{}×{} prediction vs {}×{} ground truth",
                pred.height, pred.width, gt.height, gt.width
            ),
        ));
    }
    let pred = apply_crop(pred, crop)?;
    let gt = apply_crop(gt, crop)?;

    let mut abs_rel = 0.0f64;
    let mut sq_rel = 0.0f64;
    let mut sq = 0.0f64;
    let mut log10 = 0.0f64;
    let mut d1 = 0usize;
    let mut d2 = 0usize;
    let mut d3 = 0usize;
    let mut t = 0usize;
    for i in 0..gt.data.len() {
        if !gt.mask[i] {
            continue;
        }
        let g = gt.data[i] as f64;
        if !(min_depth..=max_depth).contains(&g) {
            continue;
        }
        let d = pred.data[i] as f64;
        t += 1;
        let diff = d - g;
        abs_rel += diff.abs() / g;
        sq_rel += diff * diff / g;
        sq += diff * diff;
        log10 += (d.log10() - g.log10()).abs();
        let ratio = (d / g).max(g / d);
        if ratio < 1.25 {
            d1 += 1;
        }
        if ratio < 1.25 * 1.25 {
            d2 += 1;
        }
        if ratio < 1.25 * 1.25 * 1.25 {
            d3 += 1;
        }
    }
    if t == 0 {
        return Err(Error::EmptyMask("compute_metrics"));
    }
    let n = t as f64;
    Ok(MetricsRecord {
        abs_rel: abs_rel / n,
        sq_rel: sq_rel / n,
        rmse: (sq / n).sqrt(),
        log10: log10 / n,
        delta1: d1 as f64 / n,
        delta2: d2 as f64 / n,
        delta3: d3 as f64 / n,
        t,
    })
}

/// Mean of per-frame records (errors and deltas averaged, pixel counts
/// summed) — the aggregate row of an evaluation run.
pub fn mean_record(records: &[MetricsRecord]) -> Option<MetricsRecord> {
    if records.is_empty() {
        return None;
    }
    let n = records.len() as f64;
    let mut acc = MetricsRecord {
        abs_rel: 0.0,
        sq_rel: 0.0,
        rmse: 0.0,
        log10: 0.0,
        delta1: 0.0,
        delta2: 0.0,
        delta3: 0.0,
        t: 0,
    };
    for r in records {
        acc.abs_rel += r.abs_rel;
        acc.sq_rel += r.sq_rel;
        acc.rmse += r.rmse;
        acc.log10 += r.log10;
        acc.delta1 += r.delta1;
        acc.delta2 += r.delta2;
        acc.delta3 += r.delta3;
        acc.t += r.t;
    }
    acc.abs_rel /= n;
    acc.sq_rel /= n;
    acc.rmse /= n;
    acc.log10 /= n;
    acc.delta1 /= n;
    acc.delta2 /= n;
    acc.delta3 /= n;
    Some(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(vals: &[f32]) -> DepthMap {
        DepthMap::from_data(1, vals.len(), vals.to_vec())
    }

    #[test]
    fn perfect_prediction_is_all_zeros_and_ones() {
        let gt = flat(&[1.0, 2.0, 3.0]);
        let m = compute_metrics(&gt.clone(), &gt, &CropSpec::NONE, 1e-3, 80.0).unwrap();
        assert_eq!(m.abs_rel, 0.0);
        assert_eq!(m.sq_rel, 0.0);
        assert_eq!(m.rmse, 0.0);
        assert_eq!(m.log10, 0.0);
        assert_eq!((m.delta1, m.delta2, m.delta3), (1.0, 1.0, 1.0));
        assert_eq!(m.t, 3);
    }

    #[test]
    fn single_pixel_factor_two() {
        let m = compute_metrics(&flat(&[2.0]), &flat(&[1.0]), &CropSpec::NONE, 1e-3, 80.0)
            .unwrap();
        assert_eq!(m.abs_rel, 1.0);
        assert_eq!(m.sq_rel, 1.0);
        assert_eq!(m.rmse, 1.0);
        assert!((m.log10 - 0.30103).abs() < 1e-5);
        // ratio 2 fails every threshold: 1.25³ = 1.953125 < 2
        assert_eq!((m.delta1, m.delta2, m.delta3), (0.0, 0.0, 0.0));
    }

    #[test]
    fn two_pixel_case_against_per_pixel_arithmetic() {
        // pred {1,3}, gt {2,2}: abs_rel = (0.5 + 0.5)/2, rmse = 1, ratios
        // {2, 1.5} ⇒ δ¹ none, δ²/δ³ catch only the 1.5 (2 > 1.25³).
        let m = compute_metrics(&flat(&[1.0, 3.0]), &flat(&[2.0, 2.0]), &CropSpec::NONE, 1e-3, 80.0)
            .unwrap();
        assert!((m.abs_rel - 0.5).abs() < 1e-12);
        assert!((m.rmse - 1.0).abs() < 1e-12);
        assert_eq!(m.delta1, 0.0);
        assert_eq!(m.delta2, 0.5);
        assert_eq!(m.delta3, 0.5);
    }

    #[test]
    fn scaled_gt_abs_rel_is_exact() {
        let gt = flat(&[1.5, 3.0, 7.5, 20.0]);
        for c in [0.5f32, 0.9, 1.3, 2.0] {
            let pred = DepthMap::from_data(1, 4, gt.data.iter().map(|&v| c * v).collect());
            let m = compute_metrics(&pred, &gt, &CropSpec::NONE, 1e-3, 80.0).unwrap();
            assert!(
                (m.abs_rel - (c as f64 - 1.0).abs()) < 1e-6,
                "c={c}: {}",
                m.abs_rel
            );
        }
    }

    #[test]
    fn garg_crop_indices_on_352() {
        let map = DepthMap::from_data(352, 352, alloc::vec![1.0; 352 * 352]);
        let (r0, r1, c0, c1) = CropSpec::GARG.bounds(map.height, map.width);
        assert_eq!((r0, r1, c0, c1), (143, 350, 12, 340));
        let cropped = apply_crop(&map, &CropSpec::GARG).unwrap();
        assert_eq!((cropped.height, cropped.width), (350 - 143, 340 - 12));
    }

    #[test]
    fn eigen_crop_is_a_strict_subregion() {
        let map = DepthMap::from_data(352, 352, alloc::vec![1.0; 352 * 352]);
        let cropped = apply_crop(&map, &CropSpec::EIGEN).unwrap();
        assert!(cropped.height < 352 && cropped.width < 352);
        assert!(cropped.height > 0 && cropped.width > 0);
    }

    #[test]
    fn none_crop_is_identity() {
        let map = DepthMap::from_data(5, 7, (0..35).map(|v| v as f32 + 1.0).collect());
        let cropped = apply_crop(&map, &CropSpec::NONE).unwrap();
        assert_eq!(cropped, map);
    }

    #[test]
    fn out_of_bounds_gt_is_masked() {
        let gt = flat(&[0.0005, 5.0, 100.0]);
        let m = compute_metrics(&flat(&[1.0, 5.0, 1.0]), &gt, &CropSpec::NONE, 1e-3, 80.0)
            .unwrap();
        assert_eq!(m.t, 1);
        assert_eq!(m.abs_rel, 0.0);
    }

    #[test]
    fn empty_mask_is_an_error() {
        let gt = DepthMap::with_mask(1, 2, alloc::vec![1.0, 2.0], alloc::vec![false, false]);
        let pred = flat(&[1.0, 2.0]);
        assert!(matches!(
            compute_metrics(&pred, &gt, &CropSpec::NONE, 1e-3, 80.0),
            Err(Error::EmptyMask(_))
        ));
    }
}
