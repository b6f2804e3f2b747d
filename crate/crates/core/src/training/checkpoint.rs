//! Binary model snapshots.
//!
//! Layout: the magic `FBWC`, a little-endian `u32` format version, a `u32`
//! length and that many bytes of UTF-8 `key = value` configuration (including
//! `iteration`), then one record per tensor until the end of the file:
//! `u32` name length, name bytes, `u32` rank, `rank` `u32` dimensions and the
//! little-endian `f32` payload. Each parameter is followed by its momentum
//! buffer under the name `<param>@momentum`.

use std::fs;
use std::path::Path;

use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::model::Fbwc;
use crate::params::ParamStore;
use crate::tensor::{Shape, Tensor};

pub const MAGIC: &[u8; 4] = b"FBWC";
pub const VERSION: u32 = 1;
const MOMENTUM_SUFFIX: &str = "@momentum";

/// Configuration, parameters with momentum, and the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub iteration: u64,
    pub store: ParamStore<f32>,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_tensor(out: &mut Vec<u8>, name: &str, t: &Tensor<f32>) {
    put_u32(out, name.len() as u32);
    out.extend_from_slice(name.as_bytes());
    // leading unit axes are implied
    let shape = t.shape();
    let skip = shape.iter().take(3).take_while(|&&d| d == 1).count();
    put_u32(out, (4 - skip) as u32);
    for &d in &shape[skip..] {
        put_u32(out, d as u32);
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }

    fn tensor(&mut self) -> Result<(String, Tensor<f32>)> {
        let len = self.u32()? as usize;
        let name = String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let rank = self.u32()? as usize;
        if !(1..=4).contains(&rank) {
            return Err(Error::Checkpoint(format!("`{name}` has rank {rank}")));
        }
        let mut shape: Shape = [1; 4];
        for d in &mut shape[4 - rank..] {
            *d = self.u32()? as usize;
        }
        let count: usize = shape.iter().product();
        let raw = self.take(count * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok((name, Tensor::new(shape, data)?))
    }
}

impl Checkpoint {
    pub fn new(config: TrainConfig, iteration: u64, store: ParamStore<f32>) -> Self {
        Self {
            config,
            iteration,
            store,
        }
    }

    fn blob(&self) -> String {
        format!("{}iteration = {}\n", self.config.to_text(), self.iteration)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        let blob = self.blob();
        put_u32(&mut out, blob.len() as u32);
        out.extend_from_slice(blob.as_bytes());
        for (name, p) in self.store.iter() {
            put_tensor(&mut out, name, &p.value);
            put_tensor(&mut out, &format!("{name}{MOMENTUM_SUFFIX}"), &p.momentum);
        }
        out
    }

    /// Parses a snapshot and checks it against the layout of the model its
    /// configuration describes.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4).ok() != Some(MAGIC.as_slice()) {
            return Err(Error::Checkpoint("missing FBWC magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::IncompatibleCheckpoint(format!(
                "format version {version}, expected {VERSION}"
            )));
        }
        let len = r.u32()? as usize;
        let blob = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("configuration is not UTF-8".into()))?;
        let mut iteration = None;
        let mut rest = String::new();
        for line in blob.lines() {
            match line.split_once('=') {
                Some((k, v)) if k.trim() == "iteration" => {
                    iteration = Some(v.trim().parse::<u64>().map_err(|_| {
                        Error::Checkpoint(format!("invalid iteration `{}`", v.trim()))
                    })?)
                }
                _ => {
                    rest.push_str(line);
                    rest.push('\n');
                }
            }
        }
        let iteration =
            iteration.ok_or_else(|| Error::Checkpoint("configuration lacks `iteration`".into()))?;
        let config = TrainConfig::from_text(&rest)?;
        let (_, mut store) = Fbwc::new::<f32>(config.model.clone(), 0)?;

        let mut seen = 0usize;
        while !r.done() {
            let (name, t) = r.tensor()?;
            let (base, momentum) = match name.strip_suffix(MOMENTUM_SUFFIX) {
                Some(base) => (base, true),
                None => (name.as_str(), false),
            };
            let p = store.get_mut(base).ok_or_else(|| {
                Error::IncompatibleCheckpoint(format!("unexpected tensor `{name}`"))
            })?;
            if t.shape() != p.value.shape() {
                return Err(Error::IncompatibleCheckpoint(format!(
                    "`{name}` has shape {:?}, model expects {:?}",
                    t.shape(),
                    p.value.shape()
                )));
            }
            if momentum {
                p.momentum = t;
            } else {
                p.value = t;
            }
            seen += 1;
        }
        if seen != 2 * store.len() {
            return Err(Error::IncompatibleCheckpoint(format!(
                "{seen} tensors for {} parameters and buffers",
                store.len()
            )));
        }
        Ok(Self {
            config,
            iteration,
            store,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_bytes(&fs::read(path)?)
    }

    /// The network structure matching the stored parameters.
    pub fn model(&self) -> Result<Fbwc> {
        Ok(Fbwc::new::<f32>(self.config.model.clone(), 0)?.0)
    }
}
