//! Procedural scenes with analytic ground truth: textured fronto-parallel
//! rectangles over a background plane, rendered through a pinhole camera
//! along an exact trajectory. Every depth pixel is the nearest-surface
//! ray-plane intersection — no sampling, no noise — so training data,
//! evaluation data and reprojection oracles all share one closed form.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::depth::{DepthMap, ImageBuf};
use crate::error::{Error, Result};
use crate::geometry::{BBox, Intrinsics, ObjectClass, Pose};
#[allow(unused_imports)]
use num_traits::Float;

/// A textured rectangle in the plane `z_world = center[2]`, axis-aligned,
/// fronto-parallel to the untranslated camera.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSpec {
    /// Center in world coordinates (x right, y down, z forward), meters.
    pub center: [f64; 3],
    /// Half extents in meters.
    pub half_w: f64,
    pub half_h: f64,
    /// Albedo pattern id (deterministic checkerboards/stripes/gradients).
    pub pattern: u32,
    pub class: ObjectClass,
}

impl ObjectSpec {
    /// Labelled physical height in meters.
    pub fn height(&self) -> f64 {
        2.0 * self.half_h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    /// Depth of the background plane (meters, world z).
    pub background_depth: f64,
    pub background_pattern: u32,
    /// Objects; occlusion is resolved per pixel by nearest surface.
    pub objects: Vec<ObjectSpec>,
    /// Camera-to-world pose per frame.
    pub trajectory: Vec<Pose>,
    pub intrinsics: Intrinsics,
}

/// One rendered frame: the training/evaluation unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: usize,
    pub rgb: ImageBuf,
    pub depth: DepthMap,
    /// Camera-to-world pose.
    pub pose: Pose,
    pub intrinsics: Intrinsics,
    pub boxes: Vec<BBox>,
}

/// Per-frame rendering notes: objects skipped because the camera reached or
/// passed their plane.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RenderReport {
    pub skipped_objects: Vec<usize>,
}

/// Deterministic albedo in the u8/255 grid, so RGB round-trips bitwise
/// through 8-bit image files. (u, v) are world-plane coordinates in meters.
fn pattern_color(id: u32, u: f64, v: f64) -> [f32; 3] {
    let h = id.wrapping_mul(2_654_435_761);
    let base = [
        64 + (h >> 8) as u8 % 128,
        64 + (h >> 16) as u8 % 128,
        64 + (h >> 24) as u8 % 128,
    ];
    let alt = [
        255 - base[0] / 2,
        base[2].wrapping_add(97),
        255 - base[1] / 2,
    ];
    let quant = |b: [u8; 3]| [b[0] as f32 / 255.0, b[1] as f32 / 255.0, b[2] as f32 / 255.0];
    match id % 4 {
        0 | 1 => {
            let cell = if id % 4 == 0 { 0.5 } else { 0.25 };
            let cu = (u / cell).floor() as i64;
            let cv = (v / cell).floor() as i64;
            if (cu + cv).rem_euclid(2) == 0 {
                quant(base)
            } else {
                quant(alt)
            }
        }
        2 => {
            // horizontal stripes
            if (v / 0.4).floor() as i64 % 2 == 0 {
                quant(base)
            } else {
                quant(alt)
            }
        }
        _ => {
            // coarse gradient along u, quantized to 8 bands
            let m = (u * 2.0) % 8.0;
            let band = (if m < 0.0 { m + 8.0 } else { m }) as u8;
            quant([
                base[0].wrapping_add(band * 16),
                base[1],
                base[2].wrapping_add(band * 8),
            ])
        }
    }
}

/// Render the frame seen from `trajectory[pose_index]`.
pub fn render_scene(spec: &SceneSpec, pose_index: usize) -> Result<(Frame, RenderReport)> {
    let pose = *spec
        .trajectory
        .get(pose_index)
        .ok_or_else(|| Error::Config("pose index outside trajectory".into()))?;
    pose.validate()?;
    spec.intrinsics.validate(spec.width, spec.height)?;
    if spec.background_depth <= 0.0 {
        return Err(Error::Config("background depth must be positive".into()));
    }

    let (w, h) = (spec.width, spec.height);
    let origin = pose.translation;
    let mut report = RenderReport::default();
    for (i, obj) in spec.objects.iter().enumerate() {
        if obj.center[2] - origin[2] <= 1e-9 {
            report.skipped_objects.push(i);
        }
    }

    let mut rgb = ImageBuf::zeros(h, w);
    let mut depth = vec![0.0f32; h * w];
    let mut mask = vec![false; h * w];
    // winner[i]: -1 background, else object index
    let mut winner = vec![i64::MIN; h * w];

    for r in 0..h {
        for c in 0..w {
            let ray_cam = spec.intrinsics.ray(r, c);
            let rot = &pose.rotation;
            let dir = [
                rot[0] * ray_cam[0] + rot[1] * ray_cam[1] + rot[2] * ray_cam[2],
                rot[3] * ray_cam[0] + rot[4] * ray_cam[1] + rot[5] * ray_cam[2],
                rot[6] * ray_cam[0] + rot[7] * ray_cam[1] + rot[8] * ray_cam[2],
            ];
            let mut best = f64::INFINITY;
            let mut best_id = i64::MIN;
            let mut best_uv = (0.0, 0.0);
            for (i, obj) in spec.objects.iter().enumerate() {
                if report.skipped_objects.contains(&i) || dir[2].abs() < 1e-12 {
                    continue;
                }
                let lambda = (obj.center[2] - origin[2]) / dir[2];
                if lambda <= 1e-9 || lambda >= best {
                    continue;
                }
                let px = origin[0] + lambda * dir[0];
                let py = origin[1] + lambda * dir[1];
                if (px - obj.center[0]).abs() <= obj.half_w
                    && (py - obj.center[1]).abs() <= obj.half_h
                {
                    best = lambda;
                    best_id = i as i64;
                    best_uv = (px - obj.center[0], py - obj.center[1]);
                }
            }
            if dir[2].abs() >= 1e-12 {
                let lambda = (spec.background_depth - origin[2]) / dir[2];
                if lambda > 1e-9 && lambda < best {
                    best = lambda;
                    best_id = -1;
                    best_uv = (origin[0] + lambda * dir[0], origin[1] + lambda * dir[1]);
                }
            }
            if best_id != i64::MIN {
                let idx = r * w + c;
                depth[idx] = best as f32;
                mask[idx] = true;
                winner[idx] = best_id;
                let pat = if best_id < 0 {
                    spec.background_pattern
                } else {
                    spec.objects[best_id as usize].pattern
                };
                rgb.set_pixel(r, c, pattern_color(pat, best_uv.0, best_uv.1));
            }
        }
    }

    // Tight pixel boxes over each object's visible footprint.
    let mut boxes = Vec::new();
    for (i, obj) in spec.objects.iter().enumerate() {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0usize, 0usize);
        let mut seen = false;
        for r in 0..h {
            for c in 0..w {
                if winner[r * w + c] == i as i64 {
                    seen = true;
                    x0 = x0.min(c);
                    y0 = y0.min(r);
                    x1 = x1.max(c + 1);
                    y1 = y1.max(r + 1);
                }
            }
        }
        if seen {
            boxes.push(BBox {
                frame_id: pose_index,
                class: obj.class,
                x0,
                y0,
                x1,
                y1,
                object_height: obj.height() as f32,
            });
        }
    }

    Ok((
        Frame {
            index: pose_index,
            rgb,
            depth: DepthMap::with_mask(h, w, depth, mask),
            pose,
            intrinsics: spec.intrinsics,
            boxes,
        },
        report,
    ))
}

/// Render every trajectory pose in order.
pub fn make_sequence(spec: &SceneSpec) -> Result<(Vec<Frame>, Vec<RenderReport>)> {
    if spec.trajectory.is_empty() {
        return Err(Error::Config("trajectory must contain at least one pose".into()));
    }
    let mut frames = Vec::with_capacity(spec.trajectory.len());
    let mut reports = Vec::with_capacity(spec.trajectory.len());
    for i in 0..spec.trajectory.len() {
        let (f, r) = render_scene(spec, i)?;
        frames.push(f);
        reports.push(r);
    }
    Ok((frames, reports))
}

/// Parameters for [`default_scene`].
#[derive(Debug, Clone, PartialEq)]
pub struct SceneParams {
    pub seed: u64,
    pub size: usize,
    pub frames: usize,
    pub objects: usize,
    pub depth_min: f64,
    pub depth_max: f64,
    /// Camera advance per frame (meters along +z).
    pub forward_step: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            seed: 7,
            size: 64,
            frames: 16,
            objects: 3,
            depth_min: 2.0,
            depth_max: 12.0,
            forward_step: 0.15,
        }
    }
}

/// Seeded scene with scattered textured objects and a forward trajectory.
/// Identical parameters produce a bitwise-identical dataset.
pub fn default_scene(p: &SceneParams) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let classes = [ObjectClass::Car, ObjectClass::Cyclist, ObjectClass::Pedestrian];
    let cam_travel = p.forward_step * p.frames as f64;
    let z_lo = p.depth_min + cam_travel + 1.0;
    let z_hi = (p.depth_max * 0.85).max(z_lo + 0.5);
    let mut objects = Vec::with_capacity(p.objects);
    for i in 0..p.objects {
        let z = rng.random_range(z_lo..z_hi);
        // keep footprints on screen across the whole trajectory
        let lateral = 0.25 * z;
        let cx = rng.random_range(-lateral..lateral);
        let cy = rng.random_range(-lateral..lateral);
        let half_w = z * rng.random_range(0.08..0.16);
        let half_h = z * rng.random_range(0.08..0.16);
        objects.push(ObjectSpec {
            center: [cx, cy, z],
            half_w,
            half_h,
            pattern: p.seed as u32 ^ (i as u32 * 7 + 1),
            class: classes[i % classes.len()],
        });
    }
    let trajectory = (0..p.frames)
        .map(|k| Pose::translation_only([0.0, 0.0, k as f64 * p.forward_step]))
        .collect();
    let f = p.size as f64;
    SceneSpec {
        seed: p.seed,
        width: p.size,
        height: p.size,
        background_depth: p.depth_max,
        background_pattern: p.seed as u32 ^ 0xB0,
        objects,
        trajectory,
        intrinsics: Intrinsics {
            fx: f,
            fy: f,
            cx: f / 2.0,
            cy: f / 2.0,
        },
    }
}
