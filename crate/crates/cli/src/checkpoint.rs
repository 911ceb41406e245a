//! MDC1 checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "MDC1" | version: u32 | entry_count: u32 | payload_len: u64
//! entries: name_len u16, name utf-8, dtype u8, rank u8,
//!          dims rank×u32, offset u64, nbytes u64
//! payload bytes | crc32(payload): u32
//! ```
//!
//! dtype 0 holds little-endian f32 tensors, dtype 1 a single u32, dtype 2
//! raw bytes (RNG state). A checkpoint stores every parameter (frozen and
//! trainable), and optionally the optimizer moments, step counters and RNG
//! position needed to resume a run bitwise.

use std::fs;
use std::path::Path;

use mirrordepth_core::model::DepthModel;
use mirrordepth_core::train::{MirrorMode, TrainState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{io_err, CliError, Result};

pub const MAGIC: &[u8; 4] = b"MDC1";
pub const VERSION: u32 = 1;

pub const DTYPE_F32: u8 = 0;
pub const DTYPE_U32: u8 = 1;
pub const DTYPE_BYTES: u8 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub name: String,
    pub dtype: u8,
    pub dims: Vec<u32>,
    pub data: Vec<u8>,
}

impl Entry {
    pub fn f32s(name: impl Into<String>, shape: &[usize], values: &[f32]) -> Entry {
        let mut data = Vec::with_capacity(4 * values.len());
        for v in values {
            data.extend_from_slice(&v.to_le_bytes());
        }
        Entry {
            name: name.into(),
            dtype: DTYPE_F32,
            dims: shape.iter().map(|&d| d as u32).collect(),
            data,
        }
    }

    pub fn u32(name: impl Into<String>, v: u32) -> Entry {
        Entry {
            name: name.into(),
            dtype: DTYPE_U32,
            dims: vec![1],
            data: v.to_le_bytes().to_vec(),
        }
    }

    pub fn bytes(name: impl Into<String>, data: Vec<u8>) -> Entry {
        Entry {
            name: name.into(),
            dtype: DTYPE_BYTES,
            dims: vec![data.len() as u32],
            data,
        }
    }

    pub fn as_f32s(&self) -> Result<Vec<f32>> {
        if self.dtype != DTYPE_F32 || self.data.len() % 4 != 0 {
            return Err(CliError::Checkpoint(format!("{}: not an f32 tensor", self.name)));
        }
        Ok(self
            .data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn as_u32(&self) -> Result<u32> {
        if self.dtype != DTYPE_U32 || self.data.len() != 4 {
            return Err(CliError::Checkpoint(format!("{}: not a u32", self.name)));
        }
        Ok(u32::from_le_bytes(self.data[..4].try_into().unwrap()))
    }

    pub fn shape(&self) -> Vec<usize> {
        self.dims.iter().map(|&d| d as usize).collect()
    }
}

pub fn write_container(path: &Path, entries: &[Entry]) -> Result<()> {
    let mut payload = Vec::new();
    let mut table = Vec::new();
    for e in entries {
        let offset = payload.len() as u64;
        payload.extend_from_slice(&e.data);
        table.push((e, offset));
    }
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    for (e, offset) in table {
        let name = e.name.as_bytes();
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        out.push(e.dtype);
        out.push(e.dims.len() as u8);
        for d in &e.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.extend_from_slice(&offset.to_le_bytes());
        out.extend_from_slice(&(e.data.len() as u64).to_le_bytes());
    }
    out.extend_from_slice(&payload);
    let mut hasher = crc32fast::Hasher::new();
    hasher.update(&payload);
    out.extend_from_slice(&hasher.finalize().to_le_bytes());
    fs::write(path, out).map_err(io_err(path))
}

pub fn read_container(path: &Path) -> Result<Vec<Entry>> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let fail = |msg: &str| CliError::Checkpoint(format!("{}: {msg}", path.display()));
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes
            .get(pos..pos + n)
            .ok_or_else(|| fail("truncated container"))?;
        pos += n;
        Ok(s)
    };
    if take(4)? != MAGIC {
        return Err(fail("bad magic"));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(fail(&format!("unsupported version {version}")));
    }
    let count = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let payload_len = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;

    struct Raw {
        name: String,
        dtype: u8,
        dims: Vec<u32>,
        offset: u64,
        nbytes: u64,
    }
    let mut raws = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(take(name_len)?)
            .map_err(|_| fail("entry name is not utf-8"))?
            .to_string();
        let dtype = take(1)?[0];
        let rank = take(1)?[0] as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(u32::from_le_bytes(take(4)?.try_into().unwrap()));
        }
        let offset = u64::from_le_bytes(take(8)?.try_into().unwrap());
        let nbytes = u64::from_le_bytes(take(8)?.try_into().unwrap());
        raws.push(Raw {
            name,
            dtype,
            dims,
            offset,
            nbytes,
        });
    }
    let payload = take(payload_len)?.to_vec();
    let stored_crc = u32::from_le_bytes(take(4)?.try_into().unwrap());
    let mut hasher = crc32fast::Hasher::new();
    hasher.update(&payload);
    if hasher.finalize() != stored_crc {
        return Err(fail("payload CRC mismatch"));
    }

    // names unique, spans in-bounds and non-overlapping
    let mut seen = std::collections::BTreeSet::new();
    let mut spans: Vec<(u64, u64)> = Vec::with_capacity(raws.len());
    for r in &raws {
        if !seen.insert(r.name.clone()) {
            return Err(fail(&format!("duplicate entry name {}", r.name)));
        }
        let end = r
            .offset
            .checked_add(r.nbytes)
            .ok_or_else(|| fail("entry span overflows"))?;
        if end > payload_len as u64 {
            return Err(fail(&format!("entry {} exceeds the payload", r.name)));
        }
        spans.push((r.offset, end));
    }
    spans.sort_unstable();
    for w in spans.windows(2) {
        if w[1].0 < w[0].1 {
            return Err(fail("overlapping entries"));
        }
    }

    Ok(raws
        .into_iter()
        .map(|r| Entry {
            data: payload[r.offset as usize..(r.offset + r.nbytes) as usize].to_vec(),
            name: r.name,
            dtype: r.dtype,
            dims: r.dims,
        })
        .collect())
}

// ── Model / trainer snapshots ───────────────────────────────────────────

fn rng_entries(rng: &ChaCha8Rng) -> [Entry; 3] {
    [
        Entry::bytes("train.rng.seed", rng.get_seed().to_vec()),
        Entry::bytes("train.rng.word_pos", rng.get_word_pos().to_le_bytes().to_vec()),
        Entry::bytes("train.rng.stream", rng.get_stream().to_le_bytes().to_vec()),
    ]
}

fn rng_from_entries(find: &impl Fn(&str) -> Result<Entry>) -> Result<ChaCha8Rng> {
    let seed_e = find("train.rng.seed")?;
    let seed: [u8; 32] = seed_e
        .data
        .as_slice()
        .try_into()
        .map_err(|_| CliError::Checkpoint("rng seed must be 32 bytes".into()))?;
    let mut rng = ChaCha8Rng::from_seed(seed);
    let stream_e = find("train.rng.stream")?;
    let stream = u64::from_le_bytes(
        stream_e
            .data
            .as_slice()
            .try_into()
            .map_err(|_| CliError::Checkpoint("rng stream must be 8 bytes".into()))?,
    );
    rng.set_stream(stream);
    let pos_e = find("train.rng.word_pos")?;
    let pos = u128::from_le_bytes(
        pos_e
            .data
            .as_slice()
            .try_into()
            .map_err(|_| CliError::Checkpoint("rng word_pos must be 16 bytes".into()))?,
    );
    rng.set_word_pos(pos);
    Ok(rng)
}

/// Save every parameter, and the full trainer state when given.
pub fn save_checkpoint(
    model: &DepthModel<f32>,
    state: Option<&TrainState<f32>>,
    path: &Path,
) -> Result<()> {
    let mut entries = Vec::new();
    for (_, p) in model.store.iter() {
        entries.push(Entry::f32s(format!("param.{}", p.name), &p.shape, &p.data));
    }
    if let Some(st) = state {
        entries.push(Entry::u32("train.step", st.step));
        entries.push(Entry::u32("train.epoch", st.epoch));
        entries.push(Entry::u32("train.total_steps", st.total_steps));
        entries.push(Entry::u32(
            "train.mirror_mode",
            match st.mirror_mode {
                MirrorMode::Converged => 0,
                MirrorMode::Disrupted => 1,
            },
        ));
        entries.push(Entry::u32("opt.t", st.opt.t));
        entries.extend(rng_entries(&st.rng));
        for (i, &id) in st.opt.updated_ids().iter().enumerate() {
            let p = model.store.get(id);
            let (m, v) = st.opt.moments(i);
            entries.push(Entry::f32s(format!("opt.m.{}", p.name), &p.shape, m));
            entries.push(Entry::f32s(format!("opt.v.{}", p.name), &p.shape, v));
        }
    }
    write_container(path, &entries)
}

fn entry_map(entries: Vec<Entry>) -> std::collections::BTreeMap<String, Entry> {
    entries.into_iter().map(|e| (e.name.clone(), e)).collect()
}

/// Restore all parameters into a model built from the matching config.
/// Names and shapes must agree exactly.
pub fn load_params(model: &mut DepthModel<f32>, path: &Path) -> Result<()> {
    let map = entry_map(read_container(path)?);
    let ids: Vec<_> = model.store.iter().map(|(id, _)| id).collect();
    for id in ids {
        let (name, shape) = {
            let p = model.store.get(id);
            (p.name.clone(), p.shape.clone())
        };
        let e = map
            .get(&format!("param.{name}"))
            .ok_or_else(|| CliError::Checkpoint(format!("missing parameter {name}")))?;
        if e.shape() != shape {
            return Err(CliError::Checkpoint(format!(
                "{name}: checkpoint shape {:?} does not match model {:?}",
                e.shape(),
                shape
            )));
        }
        model.store.set_data(id, e.as_f32s()?);
    }
    Ok(())
}

/// Restore trainer state saved next to the parameters. The state must have
/// been freshly built from the same config (same updated-parameter set).
pub fn load_train_state(
    model: &DepthModel<f32>,
    state: &mut TrainState<f32>,
    path: &Path,
) -> Result<()> {
    let map = entry_map(read_container(path)?);
    let find = |name: &str| -> Result<Entry> {
        map.get(name)
            .cloned()
            .ok_or_else(|| CliError::Checkpoint(format!("missing entry {name}")))
    };
    state.step = find("train.step")?.as_u32()?;
    state.epoch = find("train.epoch")?.as_u32()?;
    state.total_steps = find("train.total_steps")?.as_u32()?;
    let mode = find("train.mirror_mode")?.as_u32()?;
    let mode = match mode {
        0 => MirrorMode::Converged,
        1 => MirrorMode::Disrupted,
        other => {
            return Err(CliError::Checkpoint(format!("unknown mirror mode tag {other}")));
        }
    };
    if mode != state.mirror_mode {
        return Err(CliError::Checkpoint(
            "checkpoint mirror mode does not match the configuration".into(),
        ));
    }
    state.opt.t = find("opt.t")?.as_u32()?;
    state.rng = rng_from_entries(&find)?;
    for (i, &id) in state.opt.updated_ids().to_vec().iter().enumerate() {
        let name = &model.store.get(id).name;
        let m = find(&format!("opt.m.{name}"))?.as_f32s()?;
        let v = find(&format!("opt.v.{name}"))?.as_f32s()?;
        state.opt.load_moments(i, m, v);
    }
    Ok(())
}
