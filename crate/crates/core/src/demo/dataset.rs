//! Versioned binary container for subsampled demonstrations.
//!
//! Layout (little endian): magic, version, head count and sizes, episode
//! count, one `u64` byte offset per episode, then the packed episodes.

use std::fs;
use std::path::Path;

use super::subsample::{SubsampleStats, SubsampledEpisode, SubsampledRecord};
use crate::env::items::{Item, Tile, EQUIP_OPTIONS, ITEM_COUNT};
use crate::env::{ComposedAction, Observation, HEAD_COUNT, HEAD_SIZES};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"CCRLDEMO";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub head_sizes: Vec<usize>,
    pub episodes: Vec<SubsampledEpisode>,
}

impl Dataset {
    pub fn new(episodes: Vec<SubsampledEpisode>) -> Self {
        Self {
            head_sizes: HEAD_SIZES.to_vec(),
            episodes,
        }
    }

    pub fn total_records(&self) -> usize {
        self.episodes.iter().map(|e| e.records.len()).sum()
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_action(out: &mut Vec<u8>, a: &ComposedAction) {
    out.extend(a.to_indices().iter().map(|i| *i as u8));
}

fn put_observation(out: &mut Vec<u8>, o: &Observation) {
    put_u32(out, o.view_radius as u32);
    put_u32(out, o.view.len() as u32);
    out.extend(o.view.iter().map(|t| t.index() as u8));
    for c in &o.inventory {
        put_u32(out, *c);
    }
    let eq = o
        .equipped
        .and_then(|e| EQUIP_OPTIONS.iter().position(|t| *t == e))
        .map_or(0, |p| p + 1);
    out.push(eq as u8);
    out.extend_from_slice(&o.time_remaining.to_le_bytes());
    put_action(out, &o.prev_action);
}

fn put_episode(out: &mut Vec<u8>, e: &SubsampledEpisode) {
    put_u64(out, e.source);
    put_u64(out, e.original_length);
    for v in [
        e.stats.noop_dropped,
        e.stats.excluded_dropped,
        e.stats.camera_dropped,
        e.stats.truncated_frames,
    ] {
        put_u64(out, v);
    }
    put_u32(out, e.records.len() as u32);
    for r in &e.records {
        put_observation(out, &r.observation);
        put_action(out, &r.action);
    }
}

pub fn encode_dataset(ds: &Dataset) -> Vec<u8> {
    let mut body = Vec::new();
    let mut offsets = Vec::with_capacity(ds.episodes.len());
    for e in &ds.episodes {
        offsets.push(body.len() as u64);
        put_episode(&mut body, e);
    }
    let mut out = Vec::with_capacity(body.len() + 64 + 8 * offsets.len());
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, ds.head_sizes.len() as u32);
    for s in &ds.head_sizes {
        put_u32(&mut out, *s as u32);
    }
    put_u64(&mut out, ds.episodes.len() as u64);
    for o in offsets {
        put_u64(&mut out, o);
    }
    out.extend_from_slice(&body);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format("demo dataset is truncated"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn action(&mut self) -> Result<ComposedAction> {
        let idx: Vec<usize> = self.take(HEAD_COUNT)?.iter().map(|b| *b as usize).collect();
        ComposedAction::from_indices(&idx).map_err(|e| Error::format(format!("bad action record: {e}")))
    }

    fn observation(&mut self) -> Result<Observation> {
        let view_radius = self.u32()? as usize;
        let cells = self.u32()? as usize;
        if cells != (2 * view_radius + 1).pow(2) {
            return Err(Error::format("observation view size does not match its radius"));
        }
        let view = self
            .take(cells)?
            .iter()
            .map(|b| Tile::from_index(*b as usize).ok_or_else(|| Error::format("unknown tile code")))
            .collect::<Result<Vec<_>>>()?;
        let mut inventory = [0u32; ITEM_COUNT];
        for c in inventory.iter_mut() {
            *c = self.u32()?;
        }
        let eq = self.u8()? as usize;
        let equipped: Option<Item> = match eq {
            0 => None,
            k => Some(*EQUIP_OPTIONS.get(k - 1).ok_or_else(|| Error::format("unknown equipped tool"))?),
        };
        let time_remaining = self.f64()?;
        let prev_action = self.action()?;
        Ok(Observation {
            view,
            view_radius,
            inventory,
            equipped,
            time_remaining,
            prev_action,
        })
    }

    fn episode(&mut self) -> Result<SubsampledEpisode> {
        let source = self.u64()?;
        let original_length = self.u64()?;
        let stats = SubsampleStats {
            noop_dropped: self.u64()?,
            excluded_dropped: self.u64()?,
            camera_dropped: self.u64()?,
            truncated_frames: self.u64()?,
        };
        let n = self.u32()? as usize;
        let mut records = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let observation = self.observation()?;
            let action = self.action()?;
            records.push(SubsampledRecord { observation, action });
        }
        Ok(SubsampledEpisode {
            source,
            original_length,
            records,
            stats,
        })
    }
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::format("not a demo dataset (bad magic)"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format(format!(
            "demo dataset version {version} is not supported (expected {VERSION})"
        )));
    }
    let heads = r.u32()? as usize;
    if heads > 64 {
        return Err(Error::format("implausible head count"));
    }
    let head_sizes = (0..heads).map(|_| r.u32().map(|s| s as usize)).collect::<Result<Vec<_>>>()?;
    if head_sizes != HEAD_SIZES {
        return Err(Error::config(format!(
            "dataset head sizes {head_sizes:?} do not match the action space {HEAD_SIZES:?}"
        )));
    }
    let count = r.u64()? as usize;
    if count > bytes.len() {
        return Err(Error::format("demo dataset is truncated"));
    }
    let offsets = (0..count).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
    let base = r.pos;
    let mut episodes = Vec::with_capacity(count);
    for (i, off) in offsets.iter().enumerate() {
        if base + *off as usize != r.pos {
            return Err(Error::format(format!("episode {i} offset does not match its position")));
        }
        episodes.push(r.episode()?);
    }
    if r.pos != bytes.len() {
        return Err(Error::format("trailing bytes after the last episode"));
    }
    Ok(Dataset { head_sizes, episodes })
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, encode_dataset(ds))?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    decode_dataset(&fs::read(path)?)
}
