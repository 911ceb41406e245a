//! Dataset directory layout: `manifest.tsv` (one `key<TAB>value` record per
//! line, UTF-8, LF) plus one PPM and one PFM per frame. Poses serialize as
//! the 12 row-major floats of [R|t]; read(write(frames)) is bitwise.

use std::fmt::Write as _;
use std::path::Path;

use mirrordepth_core::geometry::{BBox, Intrinsics, ObjectClass, Pose};
use mirrordepth_core::synth::Frame;

use crate::error::{io_err, parse_err, CliError, Result};
use crate::pfm::{read_pfm, write_pfm};
use crate::ppm::{read_ppm, write_ppm};

pub const MANIFEST: &str = "manifest.tsv";
const FORMAT_TAG: &str = "mirrordepth-dataset/1";

fn pose_to_string(p: &Pose) -> String {
    let r = &p.rotation;
    let t = &p.translation;
    // row-major [R|t]
    format!(
        "{} {} {} {} {} {} {} {} {} {} {} {}",
        r[0], r[1], r[2], t[0], r[3], r[4], r[5], t[1], r[6], r[7], r[8], t[2]
    )
}

fn pose_from_str(s: &str) -> Option<Pose> {
    let v: Vec<f64> = s
        .split_ascii_whitespace()
        .map(|t| t.parse().ok())
        .collect::<Option<_>>()?;
    if v.len() != 12 {
        return None;
    }
    Some(Pose {
        rotation: [v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]],
        translation: [v[3], v[7], v[11]],
    })
}

pub fn write_dataset(frames: &[Frame], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let first = frames
        .first()
        .ok_or_else(|| CliError::Config("cannot write an empty dataset".into()))?;
    let mut m = String::new();
    let _ = writeln!(m, "format\t{FORMAT_TAG}");
    let _ = writeln!(m, "width\t{}", first.rgb.width);
    let _ = writeln!(m, "height\t{}", first.rgb.height);
    let _ = writeln!(m, "frames\t{}", frames.len());
    let k = &first.intrinsics;
    let _ = writeln!(m, "intrinsics\t{} {} {} {}", k.fx, k.fy, k.cx, k.cy);
    for (i, frame) in frames.iter().enumerate() {
        let rgb_name = format!("frame_{i:04}.ppm");
        let depth_name = format!("depth_{i:04}.pfm");
        write_ppm(&frame.rgb, &dir.join(&rgb_name))?;
        write_pfm(&frame.depth, &dir.join(&depth_name))?;
        let _ = writeln!(m, "frame.{i}.rgb\t{rgb_name}");
        let _ = writeln!(m, "frame.{i}.depth\t{depth_name}");
        let _ = writeln!(m, "frame.{i}.pose\t{}", pose_to_string(&frame.pose));
        for (j, b) in frame.boxes.iter().enumerate() {
            let _ = writeln!(
                m,
                "frame.{i}.box.{j}\t{} {} {} {} {} {}",
                b.class.as_str(),
                b.x0,
                b.y0,
                b.x1,
                b.y1,
                b.object_height
            );
        }
    }
    let path = dir.join(MANIFEST);
    std::fs::write(&path, m).map_err(io_err(path))
}

pub fn read_dataset(dir: &Path) -> Result<Vec<Frame>> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;

    let mut width = None;
    let mut height = None;
    let mut count = None;
    let mut intrinsics = None;
    struct Partial {
        rgb: Option<String>,
        depth: Option<String>,
        pose: Option<Pose>,
        boxes: Vec<BBox>,
    }
    let mut partials: Vec<Partial> = Vec::new();

    let mut offset = 0u64;
    for line in text.lines() {
        let line_offset = offset;
        offset += line.len() as u64 + 1;
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('\t').ok_or_else(|| {
            parse_err(&path, line_offset, "expected key<TAB>value")
        })?;
        let bad = |detail: String| parse_err(&path, line_offset, detail);
        match key {
            "format" => {
                if value != FORMAT_TAG {
                    return Err(bad(format!("unsupported format '{value}'")));
                }
            }
            "width" => width = Some(value.parse::<usize>().map_err(|_| bad("bad width".into()))?),
            "height" => {
                height = Some(value.parse::<usize>().map_err(|_| bad("bad height".into()))?)
            }
            "frames" => {
                let n = value.parse::<usize>().map_err(|_| bad("bad frame count".into()))?;
                partials = (0..n)
                    .map(|_| Partial {
                        rgb: None,
                        depth: None,
                        pose: None,
                        boxes: Vec::new(),
                    })
                    .collect();
                count = Some(n);
            }
            "intrinsics" => {
                let v: Vec<f64> = value
                    .split_ascii_whitespace()
                    .map(|t| t.parse().ok())
                    .collect::<Option<_>>()
                    .ok_or_else(|| bad("bad intrinsics".into()))?;
                if v.len() != 4 {
                    return Err(bad("intrinsics need 4 values".into()));
                }
                intrinsics = Some(Intrinsics {
                    fx: v[0],
                    fy: v[1],
                    cx: v[2],
                    cy: v[3],
                });
            }
            k if k.starts_with("frame.") => {
                let rest = &k[6..];
                let (idx_s, field) = rest
                    .split_once('.')
                    .ok_or_else(|| bad(format!("malformed key '{k}'")))?;
                let idx: usize = idx_s.parse().map_err(|_| bad("bad frame index".into()))?;
                let p = partials
                    .get_mut(idx)
                    .ok_or_else(|| bad(format!("frame index {idx} out of range")))?;
                match field {
                    "rgb" => p.rgb = Some(value.to_string()),
                    "depth" => p.depth = Some(value.to_string()),
                    "pose" => {
                        p.pose =
                            Some(pose_from_str(value).ok_or_else(|| bad("bad pose".into()))?)
                    }
                    f if f.starts_with("box.") => {
                        let parts: Vec<&str> = value.split_ascii_whitespace().collect();
                        if parts.len() != 6 {
                            return Err(bad("box needs class + 4 bounds + height".into()));
                        }
                        let class = ObjectClass::parse(parts[0])
                            .map_err(|e| bad(e.to_string()))?;
                        let nums: Vec<usize> = parts[1..5]
                            .iter()
                            .map(|t| t.parse().ok())
                            .collect::<Option<_>>()
                            .ok_or_else(|| bad("bad box bounds".into()))?;
                        let h: f32 =
                            parts[5].parse().map_err(|_| bad("bad box height".into()))?;
                        p.boxes.push(BBox {
                            frame_id: idx,
                            class,
                            x0: nums[0],
                            y0: nums[1],
                            x1: nums[2],
                            y1: nums[3],
                            object_height: h,
                        });
                    }
                    other => return Err(bad(format!("unknown frame field '{other}'"))),
                }
            }
            other => return Err(bad(format!("unknown manifest key '{other}'"))),
        }
    }

    let count = count.ok_or_else(|| parse_err(&path, 0, "missing frame count"))?;
    let (width, height) = (
        width.ok_or_else(|| parse_err(&path, 0, "missing width"))?,
        height.ok_or_else(|| parse_err(&path, 0, "missing height"))?,
    );
    let intrinsics = intrinsics.ok_or_else(|| parse_err(&path, 0, "missing intrinsics"))?;

    let mut frames = Vec::with_capacity(count);
    for (i, p) in partials.into_iter().enumerate() {
        let miss = |what: &str| parse_err(&path, 0, format!("frame {i}: missing {what}"));
        let rgb = read_ppm(&dir.join(p.rgb.ok_or_else(|| miss("rgb"))?))?;
        let depth = read_pfm(&dir.join(p.depth.ok_or_else(|| miss("depth"))?))?;
        if (rgb.width, rgb.height) != (width, height)
            || (depth.width, depth.height) != (width, height)
        {
            return Err(parse_err(
                &path,
                0,
                format!("frame {i}: image sizes disagree with the manifest"),
            ));
        }
        frames.push(Frame {
            index: i,
            rgb,
            depth,
            pose: p.pose.ok_or_else(|| miss("pose"))?,
            intrinsics,
            boxes: p.boxes,
        });
    }
    Ok(frames)
}
