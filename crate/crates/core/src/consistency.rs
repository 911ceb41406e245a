//! Pose-based depth consistency evaluation.
//!
//! Temporal scoring reprojects a neighbor frame's depth into the reference
//! frame by forward splatting with a z-buffer (nearest depth wins), then
//! applies the per-pixel score `|d̂ − d| / |d̂ + d|` over jointly valid
//! pixels. Spatial continuity pairs the median predicted depth inside each
//! object box with the labelled physical height.

use alloc::vec::Vec;

use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, ObjectClass, Pose};
use crate::synth::Frame;
#[allow(unused_imports)]
use num_traits::Float;

/// Splat the neighbor's depth map into the reference frame's grid.
///
/// `pose` is the coordinate map from the reference frame to the neighbor
/// frame (`x_neighbor = R·x_ref + t`); each valid neighbor pixel is
/// back-projected, carried through `pose⁻¹`, projected with `k`, and its
/// reference-frame depth written wherever it lands; collisions keep the
/// nearest depth. Pixels that receive nothing stay invalid.
pub fn reproject_depth(d_next: &DepthMap, pose: &Pose, k: &Intrinsics) -> DepthMap {
    let (h, w) = (d_next.height, d_next.width);
    let inv = pose.inverse();
    let mut out = DepthMap::invalid(h, w);
    for r in 0..h {
        for c in 0..w {
            if !d_next.valid_at(r, c) {
                continue;
            }
            let d = d_next.at(r, c) as f64;
            if !(d > 0.0) {
                continue;
            }
            let ray = k.ray(r, c);
            let p_next = [d * ray[0], d * ray[1], d * ray[2]];
            let p_ref = inv.apply(p_next);
            let Some((u, v)) = k.project(p_ref) else {
                continue;
            };
            if u < 0.0 || v < 0.0 {
                continue;
            }
            let (col, row) = (u as usize, v as usize);
            if col >= w || row >= h {
                continue;
            }
            let z = p_ref[2] as f32;
            let idx = row * w + col;
            if !out.mask[idx] || z < out.data[idx] {
                out.data[idx] = z;
                out.mask[idx] = true;
            }
        }
    }
    out
}

/// Per-pixel `|d̂ − d| / |d̂ + d|` on the joint valid mask, plus its mean.
/// Symmetric in its arguments; values lie in [0, 1) for positive depths.
pub fn temporal_inconsistency(d_hat: &DepthMap, d: &DepthMap) -> Result<(DepthMap, f64)> {
    if (d_hat.height, d_hat.width) != (d.height, d.width) {
        return Err(Error::dim(
            "temporal_inconsistency",
            alloc::format!(
                "{}×{} vs {}×{}",
                d_hat.height,
                d_hat.width,
                d.height,
                d.width
            ),
        ));
    }
    let n = d.data.len();
    let mut map = DepthMap::invalid(d.height, d.width);
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for i in 0..n {
        if !(d_hat.mask[i] && d.mask[i]) {
            continue;
        }
        let a = d_hat.data[i] as f64;
        let b = d.data[i] as f64;
        let denom = (a + b).abs();
        let v = if denom == 0.0 { 0.0 } else { (a - b).abs() / denom };
        map.data[i] = v as f32;
        map.mask[i] = true;
        sum += v;
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyMask("temporal_inconsistency"));
    }
    Ok((map, sum / count as f64))
}

/// One scored (frame, neighbor) pair of [`sequence_consistency`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyRow {
    pub frame: usize,
    pub neighbor: usize,
    /// Reprojected prediction vs the reference frame's prediction.
    pub incons_model: f64,
    /// Reprojected prediction vs the reference frame's ground truth.
    pub incons_gt: f64,
    /// Untrained-model baseline, ground-truth referenced.
    pub incons_random: f64,
}

/// Score every frame against its neighbors within `window` offsets.
/// `preds` and `rand_preds` are per-frame predictions of the evaluated model
/// and of a randomly initialized instance (the upper-bound stand-in).
pub fn sequence_consistency(
    frames: &[Frame],
    preds: &[DepthMap],
    rand_preds: &[DepthMap],
    window: usize,
) -> Result<Vec<ConsistencyRow>> {
    if frames.len() < 2 {
        return Err(Error::Config("sequence_consistency needs at least 2 frames".into()));
    }
    if preds.len() != frames.len() || rand_preds.len() != frames.len() {
        return Err(Error::dim(
            "sequence_consistency",
            "one prediction per frame required",
        ));
    }
    let mut rows = Vec::new();
    for t in 0..frames.len() {
        let lo = t.saturating_sub(window);
        let hi = (t + window).min(frames.len() - 1);
        for u in lo..=hi {
            if u == t {
                continue;
            }
            // coordinate map: reference frame t -> neighbor frame u
            let rel = frames[u].pose.inverse().compose(&frames[t].pose);
            let k = &frames[t].intrinsics;
            let hat_model = reproject_depth(&preds[u], &rel, k);
            let hat_rand = reproject_depth(&rand_preds[u], &rel, k);
            let (_, incons_model) = temporal_inconsistency(&hat_model, &preds[t])?;
            let (_, incons_gt) = temporal_inconsistency(&hat_model, &frames[t].depth)?;
            let (_, incons_random) = temporal_inconsistency(&hat_rand, &frames[t].depth)?;
            rows.push(ConsistencyRow {
                frame: t,
                neighbor: u,
                incons_model,
                incons_gt,
                incons_random,
            });
        }
    }
    Ok(rows)
}

/// One (median predicted depth, labelled height) sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuityPair {
    pub class: ObjectClass,
    pub median_depth: f32,
    pub object_height: f32,
}

/// Median over the box region of each prediction, paired with the object
/// height and grouped by class. Boxes with an empty region are skipped and
/// counted. Median of an even-sized sample is the lower middle element.
pub fn continuity_pairs(
    frames: &[Frame],
    preds: &[DepthMap],
) -> Result<(Vec<ContinuityPair>, usize)> {
    if preds.len() != frames.len() {
        return Err(Error::dim(
            "continuity_pairs",
            "one prediction per frame required",
        ));
    }
    let mut pairs = Vec::new();
    let mut skipped = 0usize;
    for (frame, pred) in frames.iter().zip(preds) {
        for b in &frame.boxes {
            if b.is_empty() || b.x1 > pred.width || b.y1 > pred.height {
                skipped += 1;
                continue;
            }
            let mut vals: Vec<f32> = Vec::with_capacity((b.y1 - b.y0) * (b.x1 - b.x0));
            for r in b.y0..b.y1 {
                for c in b.x0..b.x1 {
                    vals.push(pred.at(r, c));
                }
            }
            vals.sort_by(f32::total_cmp);
            pairs.push(ContinuityPair {
                class: b.class,
                median_depth: vals[(vals.len() - 1) / 2],
                object_height: b.object_height,
            });
        }
    }
    pairs.sort_by(|a, b| a.class.cmp(&b.class));
    Ok((pairs, skipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;
    use crate::synth::{default_scene, make_sequence, SceneParams};

    fn k32() -> Intrinsics {
        Intrinsics {
            fx: 32.0,
            fy: 32.0,
            cx: 16.0,
            cy: 16.0,
        }
    }

    #[test]
    fn identity_pose_reprojection_is_exact() {
        let (frames, _) = make_sequence(&default_scene(&SceneParams {
            size: 32,
            frames: 1,
            ..SceneParams::default()
        }))
        .unwrap();
        let d = &frames[0].depth;
        let hat = reproject_depth(d, &Pose::IDENTITY, &frames[0].intrinsics);
        for i in 0..d.data.len() {
            assert!(hat.mask[i]);
            assert_eq!(hat.data[i].to_bits(), d.data[i].to_bits());
        }
    }

    #[test]
    fn forward_translation_shifts_plane_depth() {
        // Plane at 10 m, coordinate map with t_z = 1: the reprojected depth
        // at the principal point is 9 m.
        let d = DepthMap::from_data(32, 32, alloc::vec![10.0; 32 * 32]);
        let pose = Pose::translation_only([0.0, 0.0, 1.0]);
        let hat = reproject_depth(&d, &pose, &k32());
        assert!(hat.valid_at(16, 16));
        assert!((hat.at(16, 16) - 9.0).abs() < 1e-4);
    }

    #[test]
    fn pure_rotation_matches_projective_oracle() {
        let d = DepthMap::from_data(32, 32, alloc::vec![10.0; 32 * 32]);
        let pose = Pose::rotation_y(0.05);
        let k = k32();
        let hat = reproject_depth(&d, &pose, &k);
        let inv = pose.inverse();
        // independent per-pixel recomputation of landing cells and depths
        let mut hits = 0;
        for r in 0..32 {
            for c in 0..32 {
                let ray = k.ray(r, c);
                let p = inv.apply([10.0 * ray[0], 10.0 * ray[1], 10.0 * ray[2]]);
                if let Some((u, v)) = k.project(p) {
                    if u >= 0.0 && v >= 0.0 && (u as usize) < 32 && (v as usize) < 32 {
                        let (col, row) = (u as usize, v as usize);
                        if hat.valid_at(row, col) {
                            hits += 1;
                            assert!(
                                (hat.at(row, col) as f64 - p[2]).abs() < 1e-4
                                    || hat.at(row, col) as f64 <= p[2],
                                "z-buffer must hold the nearest depth"
                            );
                        }
                    }
                }
            }
        }
        assert!(hits > 400, "rotation warp should cover most of the frame");
    }

    #[test]
    fn occluded_splats_keep_the_nearest_depth() {
        // Two source pixels landing on one target: nearest wins.
        let mut d = DepthMap::from_data(2, 2, alloc::vec![5.0, 3.0, 5.0, 5.0]);
        d.mask = alloc::vec![true; 4];
        let k = Intrinsics {
            fx: 0.5,
            fy: 0.5,
            cx: 1.0,
            cy: 1.0,
        };
        // extreme shortening: everything lands on a couple of pixels
        let hat = reproject_depth(&d, &Pose::IDENTITY, &k);
        for i in 0..4 {
            if hat.mask[i] {
                assert!(hat.data[i] <= 5.0);
            }
        }
    }

    #[test]
    fn inconsistency_examples() {
        let a = DepthMap::from_data(1, 1, alloc::vec![3.0]);
        let b = DepthMap::from_data(1, 1, alloc::vec![1.0]);
        let (_, m) = temporal_inconsistency(&a, &b).unwrap();
        assert!((m - 0.5).abs() < 1e-12);
        let (_, swapped) = temporal_inconsistency(&b, &a).unwrap();
        assert_eq!(m, swapped);
        let (_, zero) = temporal_inconsistency(&a, &a).unwrap();
        assert_eq!(zero, 0.0);
    }

    #[test]
    fn inconsistency_bounded_below_one_for_positive_depths() {
        let a = DepthMap::from_data(1, 4, alloc::vec![0.01, 5.0, 80.0, 1.0]);
        let b = DepthMap::from_data(1, 4, alloc::vec![79.0, 0.5, 0.02, 1.0]);
        let (map, mean) = temporal_inconsistency(&a, &b).unwrap();
        for i in 0..4 {
            assert!((0.0..1.0).contains(&(map.data[i] as f64)));
        }
        assert!((0.0..1.0).contains(&mean));
    }

    #[test]
    fn empty_joint_mask_is_an_error() {
        let a = DepthMap::with_mask(1, 2, alloc::vec![1.0, 1.0], alloc::vec![true, false]);
        let b = DepthMap::with_mask(1, 2, alloc::vec![1.0, 1.0], alloc::vec![false, true]);
        assert!(matches!(
            temporal_inconsistency(&a, &b),
            Err(Error::EmptyMask(_))
        ));
    }

    #[test]
    fn gt_sequence_is_self_consistent() {
        // Edge-free scene: the ground truth reprojected with exact poses
        // reproduces itself to float round-off.
        let spec = SceneSpec_plane_only();
        let (frames, _) = make_sequence(&spec).unwrap();
        let gt: Vec<DepthMap> = frames.iter().map(|f| f.depth.clone()).collect();
        let rows = sequence_consistency(&frames, &gt, &gt, 1).unwrap();
        assert_eq!(rows.len(), 2 * (frames.len() - 1));
        for row in rows {
            assert!(row.incons_gt <= 1e-3, "row {row:?}");
            assert!(row.incons_model <= 1e-3);
        }
    }

    fn SceneSpec_plane_only() -> crate::synth::SceneSpec {
        crate::synth::SceneSpec {
            seed: 3,
            width: 32,
            height: 32,
            background_depth: 10.0,
            background_pattern: 9,
            objects: alloc::vec![],
            trajectory: (0..4)
                .map(|k| Pose::translation_only([0.0, 0.0, 0.2 * k as f64]))
                .collect(),
            intrinsics: k32(),
        }
    }

    #[test]
    fn window_zero_yields_no_rows() {
        let (frames, _) = make_sequence(&SceneSpec_plane_only()).unwrap();
        let gt: Vec<DepthMap> = frames.iter().map(|f| f.depth.clone()).collect();
        let rows = sequence_consistency(&frames, &gt, &gt, 0).unwrap();
        assert!(rows.is_empty());
    }

    #[test]
    fn reprojection_round_trip_recovers_plane() {
        let d = DepthMap::from_data(32, 32, alloc::vec![8.0; 32 * 32]);
        let pose = Pose::translation_only([0.05, -0.02, 0.3]);
        let k = k32();
        let there = reproject_depth(&d, &pose, &k);
        let back = reproject_depth(&there, &pose.inverse(), &k);
        for i in 0..back.data.len() {
            if back.mask[i] {
                assert!((back.data[i] - 8.0).abs() < 2e-3, "{}", back.data[i]);
            }
        }
        assert!(back.valid_count() > 600);
    }

    #[test]
    fn constant_prediction_gives_identical_medians() {
        let (mut frames, _) = make_sequence(&default_scene(&SceneParams {
            size: 32,
            frames: 2,
            ..SceneParams::default()
        }))
        .unwrap();
        // ensure at least one box exists per frame
        assert!(frames.iter().all(|f| !f.boxes.is_empty()));
        let preds: Vec<DepthMap> = frames
            .iter()
            .map(|f| DepthMap::from_data(32, 32, alloc::vec![4.25; 32 * 32]))
            .collect();
        let (pairs, skipped) = continuity_pairs(&frames, &preds).unwrap();
        assert_eq!(skipped, 0);
        assert!(pairs.iter().all(|p| p.median_depth == 4.25));
        // enumeration-order invariance: reversing boxes leaves the set equal
        for f in &mut frames {
            f.boxes.reverse();
        }
        let (mut again, _) = continuity_pairs(&frames, &preds).unwrap();
        let mut expect = pairs.clone();
        let keyf = |p: &ContinuityPair| (p.class, p.median_depth.to_bits(), p.object_height.to_bits());
        again.sort_by_key(keyf);
        expect.sort_by_key(keyf);
        assert_eq!(again, expect);
    }

    #[test]
    fn medians_recover_scene_depths() {
        let (frames, _) = make_sequence(&default_scene(&SceneParams {
            size: 48,
            frames: 1,
            objects: 2,
            ..SceneParams::default()
        }))
        .unwrap();
        let gt: Vec<DepthMap> = frames.iter().map(|f| f.depth.clone()).collect();
        let (pairs, _) = continuity_pairs(&frames, &gt).unwrap();
        // fronto-parallel objects: the footprint median is the object depth
        for p in &pairs {
            assert!(p.median_depth > 0.0);
        }
        assert!(!pairs.is_empty());
    }

    #[test]
    fn odd_region_median_is_middle_element() {
        let mut frame_set = make_sequence(&SceneSpec_plane_only()).unwrap().0;
        frame_set.truncate(1);
        frame_set[0].boxes = alloc::vec![BBox {
            frame_id: 0,
            class: ObjectClass::Car,
            x0: 0,
            y0: 0,
            x1: 3,
            y1: 1,
            object_height: 1.0,
        }];
        let pred = DepthMap::from_data(32, 32, {
            let mut d = alloc::vec![5.0f32; 32 * 32];
            d[0] = 9.0;
            d[1] = 2.0;
            d[2] = 4.0;
            d
        });
        let (pairs, _) = continuity_pairs(&frame_set, &[pred]).unwrap();
        assert_eq!(pairs[0].median_depth, 4.0);
    }
}
