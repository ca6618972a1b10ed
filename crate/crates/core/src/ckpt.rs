//! Versioned binary checkpoints: a magic string, a JSON header, named f64
//! parameter and buffer tensors, optional optimizer moments, and the
//! training history. Everything is little-endian and written through a
//! temp-file rename, so identical state produces byte-identical files and
//! a failed write never leaves a partial checkpoint behind.

use crate::error::{Error, Result};
use crate::nn::{AdamState, Model};
use crate::train::HistoryRow;
use std::io::Write;
use std::path::Path;

pub const MAGIC_SEG: &[u8; 9] = b"CRACKSEG1";
pub const MAGIC_DETECT: &[u8; 9] = b"CRACKDET1";
pub const FORMAT_VERSION: u32 = 1;

/// Raw checkpoint contents before being applied to a model.
pub struct Checkpoint {
    pub header_json: String,
    pub params: Vec<(String, Vec<f64>)>,
    pub buffers: Vec<(String, Vec<f64>)>,
    pub optimizer: Option<AdamState>,
    pub history: Vec<HistoryRow>,
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }

    fn named_tensor(&mut self, name: &str, data: &[f64]) {
        self.u32(name.len() as u32);
        self.bytes(name.as_bytes());
        self.u64(data.len() as u64);
        for &v in data {
            self.f64(v);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::CheckpointCorrupt(format!(
                "truncated: needed {n} bytes at offset {}, file has {}",
                self.pos,
                self.buf.len()
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn named_tensor(&mut self) -> Result<(String, Vec<f64>)> {
        let name_len = self.u32()? as usize;
        if name_len > 4096 {
            return Err(Error::CheckpointCorrupt(format!(
                "implausible tensor name length {name_len}"
            )));
        }
        let name = String::from_utf8(self.take(name_len)?.to_vec())
            .map_err(|_| Error::CheckpointCorrupt("tensor name is not utf-8".into()))?;
        let count = self.u64()? as usize;
        Ok((name, self.f64_vec(count)?))
    }
}

/// Serialize model state. The caller supplies the header as already-encoded
/// JSON so the bytes round-trip exactly.
pub fn save_checkpoint<M: Model>(
    path: &Path,
    magic: &[u8; 9],
    header_json: &str,
    model: &mut M,
    optimizer: Option<&AdamState>,
    history: &[HistoryRow],
) -> Result<()> {
    let mut w = Writer::new();
    w.bytes(magic);
    w.u32(FORMAT_VERSION);
    w.u32(header_json.len() as u32);
    w.bytes(header_json.as_bytes());

    let params = model.params_mut();
    w.u32(params.len() as u32);
    for p in &params {
        w.named_tensor(&p.name, p.data);
    }
    drop(params);

    let buffers = model.buffers_mut();
    w.u32(buffers.len() as u32);
    for b in &buffers {
        w.named_tensor(&b.name, b.data);
    }
    drop(buffers);

    match optimizer {
        Some(state) => {
            w.buf.push(1);
            w.u64(state.step);
            w.u32(state.m.len() as u32);
            for (m, v) in state.m.iter().zip(state.v.iter()) {
                w.u64(m.len() as u64);
                for &x in m {
                    w.f64(x);
                }
                for &x in v {
                    w.f64(x);
                }
            }
        }
        None => w.buf.push(0),
    }

    w.u64(history.len() as u64);
    for row in history {
        w.u64(row.iter);
        w.f64(row.loss);
        w.f64(row.lr);
    }

    let tmp = path.with_extension("tmp");
    {
        let mut file = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        file.write_all(&w.buf).map_err(|e| Error::io(&tmp, e))?;
        file.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Parse a checkpoint without touching any model state.
pub fn load_checkpoint(path: &Path, magic: &[u8; 9]) -> Result<Checkpoint> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader { buf: &buf, pos: 0 };

    let found = r.take(9)?;
    if found != magic {
        return Err(Error::CheckpointMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: String::from_utf8_lossy(found).into_owned(),
        });
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::CheckpointCorrupt(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let header_len = r.u32()? as usize;
    let header_json = String::from_utf8(r.take(header_len)?.to_vec())
        .map_err(|_| Error::CheckpointCorrupt("header is not utf-8".into()))?;

    let n_params = r.u32()? as usize;
    let mut params = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        params.push(r.named_tensor()?);
    }
    let n_buffers = r.u32()? as usize;
    let mut buffers = Vec::with_capacity(n_buffers);
    for _ in 0..n_buffers {
        buffers.push(r.named_tensor()?);
    }

    let optimizer = match r.take(1)?[0] {
        0 => None,
        1 => {
            let step = r.u64()?;
            let n = r.u32()? as usize;
            let mut m = Vec::with_capacity(n);
            let mut v = Vec::with_capacity(n);
            for _ in 0..n {
                let count = r.u64()? as usize;
                m.push(r.f64_vec(count)?);
                v.push(r.f64_vec(count)?);
            }
            Some(AdamState { step, m, v })
        }
        other => {
            return Err(Error::CheckpointCorrupt(format!(
                "bad optimizer flag {other}"
            )))
        }
    };

    let n_rows = r.u64()? as usize;
    let mut history = Vec::with_capacity(n_rows.min(1 << 24));
    for _ in 0..n_rows {
        history.push(HistoryRow {
            iter: r.u64()?,
            loss: r.f64()?,
            lr: r.f64()?,
        });
    }
    if r.pos != buf.len() {
        return Err(Error::CheckpointCorrupt(format!(
            "{} trailing bytes",
            buf.len() - r.pos
        )));
    }
    Ok(Checkpoint {
        header_json,
        params,
        buffers,
        optimizer,
        history,
    })
}

/// Copy checkpoint tensors into a freshly built model, validating names and
/// sizes in order.
pub fn apply_state<M: Model>(model: &mut M, ckpt: &Checkpoint) -> Result<()> {
    let mut params = model.params_mut();
    if params.len() != ckpt.params.len() {
        return Err(Error::CheckpointCorrupt(format!(
            "model has {} parameter tensors, checkpoint has {}",
            params.len(),
            ckpt.params.len()
        )));
    }
    for (dst, (name, data)) in params.iter_mut().zip(ckpt.params.iter()) {
        if dst.name != *name || dst.data.len() != data.len() {
            return Err(Error::CheckpointCorrupt(format!(
                "parameter mismatch: model {}[{}] vs checkpoint {}[{}]",
                dst.name,
                dst.data.len(),
                name,
                data.len()
            )));
        }
        dst.data.copy_from_slice(data);
    }
    drop(params);
    let mut buffers = model.buffers_mut();
    if buffers.len() != ckpt.buffers.len() {
        return Err(Error::CheckpointCorrupt(format!(
            "model has {} buffers, checkpoint has {}",
            buffers.len(),
            ckpt.buffers.len()
        )));
    }
    for (dst, (name, data)) in buffers.iter_mut().zip(ckpt.buffers.iter()) {
        if dst.name != *name || dst.data.len() != data.len() {
            return Err(Error::CheckpointCorrupt(format!(
                "buffer mismatch: model {} vs checkpoint {name}",
                dst.name
            )));
        }
        dst.data.copy_from_slice(data);
    }
    Ok(())
}
