use std::fs;
use std::path::Path;

use gradcore::{Parameter, RunningStats, Scalar, Tensor};

use crate::error::{GanError, Result};
use crate::network::Network;
use crate::trainer::{GanState, RunConfig};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"FGCK";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    put_u64(out, b.len() as u64);
    out.extend_from_slice(b);
}

fn put_values<T: Scalar>(out: &mut Vec<u8>, v: &[T]) {
    put_u64(out, v.len() as u64);
    for &x in v {
        x.write_le(out);
    }
}

fn put_network<T: Scalar>(out: &mut Vec<u8>, net: &Network<T>) {
    put_u32(out, net.params.len() as u32);
    for p in &net.params {
        put_bytes(out, p.name.as_bytes());
        put_u32(out, p.value.ndim() as u32);
        for &d in p.value.shape() {
            put_u64(out, d as u64);
        }
        put_values(out, p.value.data());
        put_values(out, p.adam_m.data());
        put_values(out, p.adam_v.data());
        put_u64(out, p.step_count);
        match &p.spectral_u {
            Some(u) => {
                out.push(1);
                put_values(out, u);
            }
            None => out.push(0),
        }
    }
    put_u32(out, net.stats.len() as u32);
    for s in &net.stats {
        put_values(out, &s.mean);
        put_values(out, &s.var);
    }
}

/// Serializes the full training state: configuration, parameters, Adam
/// moments, running statistics, singular-vector estimates and counters.
pub fn encode_checkpoint<T: Scalar>(state: &GanState<T>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION);
    put_bytes(&mut out, T::NAME.as_bytes());
    put_bytes(&mut out, serde_json::to_string(&state.run)?.as_bytes());
    put_u64(&mut out, state.iteration);
    put_u64(&mut out, state.d_steps);
    put_network(&mut out, &state.g);
    put_network(&mut out, &state.d);
    Ok(out)
}

pub fn save_checkpoint<T: Scalar>(state: &GanState<T>, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, encode_checkpoint(state)?)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let Some(end) = end else {
            return Err(GanError::Format(format!("truncated at byte {} (need {n} more)", self.pos)));
        };
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize> {
        let n = self.u64()?;
        if n > (self.buf.len() - self.pos) as u64 {
            return Err(GanError::Format(format!("length {n} exceeds remaining bytes")));
        }
        Ok(n as usize)
    }

    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.len()?;
        self.take(n)
    }

    fn values<T: Scalar>(&mut self, expected: usize, what: &str) -> Result<Vec<T>> {
        let n = self.u64()? as usize;
        if n != expected {
            return Err(GanError::Format(format!("{what}: {n} values, expected {expected}")));
        }
        let raw = self.take(n.checked_mul(T::BYTES).ok_or_else(|| GanError::Format("overflow".into()))?)?;
        Ok(raw.chunks_exact(T::BYTES).map(T::read_le).collect())
    }
}

fn read_network<T: Scalar>(r: &mut Reader, net: &mut Network<T>) -> Result<()> {
    let n = r.u32()? as usize;
    if n != net.params.len() {
        return Err(GanError::Format(format!("{n} parameters, architecture has {}", net.params.len())));
    }
    for p in net.params.iter_mut() {
        let name = String::from_utf8_lossy(r.bytes()?).into_owned();
        if name != p.name {
            return Err(GanError::Format(format!("parameter {name:?} where {:?} was expected", p.name)));
        }
        let ndim = r.u32()? as usize;
        let shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if shape != p.value.shape() {
            return Err(GanError::Format(format!("{name}: shape {shape:?}, expected {:?}", p.value.shape())));
        }
        let len = p.value.len();
        let value = Tensor::new(shape.clone(), r.values(len, &name)?)?;
        let m = Tensor::new(shape.clone(), r.values(len, &name)?)?;
        let v = Tensor::new(shape, r.values(len, &name)?)?;
        let step_count = r.u64()?;
        let spectral_u = match r.u8()? {
            0 => None,
            1 => {
                let rows = p.spectral_u.as_ref().map(|u| u.len()).unwrap_or(0);
                Some(r.values(rows, &name)?)
            }
            f => return Err(GanError::Format(format!("{name}: bad spectral flag {f}"))),
        };
        if spectral_u.is_some() != p.spectral_u.is_some() {
            return Err(GanError::Format(format!("{name}: spectral state does not match the architecture")));
        }
        *p = Parameter { name, value, grad: None, adam_m: m, adam_v: v, step_count, spectral_u };
    }
    let n = r.u32()? as usize;
    if n != net.stats.len() {
        return Err(GanError::Format(format!("{n} norm layers, architecture has {}", net.stats.len())));
    }
    for s in net.stats.iter_mut() {
        let c = s.channels();
        *s = RunningStats { mean: r.values(c, "running mean")?, var: r.values(c, "running var")? };
    }
    Ok(())
}

/// Scalar type tag and run configuration from a checkpoint header.
pub fn peek_checkpoint(bytes: &[u8]) -> Result<(String, RunConfig)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(GanError::Format(format!("bad magic {magic:?}")));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(GanError::Format(format!("unsupported version {version}")));
    }
    let tag = String::from_utf8_lossy(r.bytes()?).into_owned();
    let run: RunConfig = serde_json::from_slice(r.bytes()?)?;
    Ok((tag, run))
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<GanState<T>> {
    let (tag, run) = peek_checkpoint(bytes)?;
    if tag != T::NAME {
        return Err(GanError::Format(format!("checkpoint holds {tag} values, loading as {}", T::NAME)));
    }
    let mut r = Reader { buf: bytes, pos: 0 };
    r.take(8)?;
    r.bytes()?;
    r.bytes()?;
    let mut state = GanState::<T>::new(run)?;
    state.iteration = r.u64()?;
    state.d_steps = r.u64()?;
    read_network(&mut r, &mut state.g)?;
    read_network(&mut r, &mut state.d)?;
    if r.pos != bytes.len() {
        return Err(GanError::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(state)
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<GanState<T>> {
    decode_checkpoint(&fs::read(path)?)
}
