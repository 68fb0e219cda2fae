//! The voxel volume type and the FLVD container.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{DataError, Result};

pub const COARSE: &str = "coarse_fraction";
pub const TIME: &str = "deposition_time";

const MAGIC: &[u8; 4] = b"FLVD";
const VERSION: u32 = 1;

/// One named per-cell field. `None` marks an empty (air) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub name: String,
    pub values: Vec<Option<f32>>,
}

/// A stratigraphy grid, indexed `x + nx * (y + ny * z)` with z pointing up.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelVolume {
    pub dims: [usize; 3],
    /// Cell size in meters.
    pub cell_size: [f32; 3],
    pub channels: Vec<Channel>,
}

impl VoxelVolume {
    pub fn new(dims: [usize; 3], cell_size: [f32; 3], channels: Vec<Channel>) -> Result<Self> {
        let v = Self { dims, cell_size, channels };
        v.validate()?;
        Ok(v)
    }

    pub fn cells(&self) -> usize {
        self.dims.iter().product()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    pub fn channel(&self, name: &str) -> Option<&Channel> {
        self.channels.iter().find(|c| c.name == name)
    }

    pub fn channel_mut(&mut self, name: &str) -> Option<&mut Channel> {
        self.channels.iter_mut().find(|c| c.name == name)
    }

    pub fn coarse(&self) -> &[Option<f32>] {
        &self.channel(COARSE).expect("validated").values
    }

    pub fn time(&self) -> Option<&[Option<f32>]> {
        self.channel(TIME).map(|c| c.values.as_slice())
    }

    pub fn has_empty_cells(&self) -> bool {
        self.channels.iter().any(|c| c.values.iter().any(Option::is_none))
    }

    /// Number of empty cells at the top of column `(x, y)`, judged on the
    /// coarse channel.
    pub fn empty_top(&self, x: usize, y: usize) -> usize {
        let c = self.coarse();
        (0..self.dims[2]).rev().take_while(|&z| c[self.index(x, y, z)].is_none()).count()
    }

    /// Checks channel sizes, the coarse-fraction range and the
    /// empty-cells-on-top column invariant.
    pub fn validate(&self) -> Result<()> {
        let n = self.cells();
        if n == 0 {
            return Err(DataError::Invalid(format!("empty dims {:?}", self.dims)));
        }
        if self.channel(COARSE).is_none() {
            return Err(DataError::Invalid(format!("missing {COARSE} channel")));
        }
        for ch in &self.channels {
            if ch.values.len() != n {
                return Err(DataError::Invalid(format!("channel {} has {} values for {n} cells", ch.name, ch.values.len())));
            }
            if self.channels.iter().filter(|c| c.name == ch.name).count() > 1 {
                return Err(DataError::Invalid(format!("duplicate channel {}", ch.name)));
            }
        }
        if let Some(bad) = self.coarse().iter().flatten().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(DataError::Invalid(format!("coarse fraction {bad} outside [0, 1]")));
        }
        let [nx, ny, nz] = self.dims;
        for ch in &self.channels {
            for y in 0..ny {
                for x in 0..nx {
                    let mut seen_empty = false;
                    for z in 0..nz {
                        let empty = ch.values[self.index(x, y, z)].is_none();
                        if seen_empty && !empty {
                            return Err(DataError::Invalid(format!(
                                "channel {}: filled cell above an empty one in column ({x}, {y})",
                                ch.name
                            )));
                        }
                        seen_empty |= empty;
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn save_volume(volume: &VoxelVolume, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_volume(volume, &mut f)?;
    f.flush()?;
    Ok(())
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<VoxelVolume> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_volume(&bytes)
}

pub fn write_volume<W: Write>(v: &VoxelVolume, w: &mut W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for d in v.dims {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for s in v.cell_size {
        w.write_all(&s.to_le_bytes())?;
    }
    w.write_all(&(v.channels.len() as u32).to_le_bytes())?;
    for ch in &v.channels {
        w.write_all(&(ch.name.len() as u16).to_le_bytes())?;
        w.write_all(ch.name.as_bytes())?;
    }
    for ch in &v.channels {
        for val in &ch.values {
            w.write_all(&val.unwrap_or(f32::NAN).to_le_bytes())?;
        }
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let found = self.bytes.len() - self.pos;
        if found < n {
            return Err(DataError::Truncated { expected: self.pos + n, found: self.bytes.len() });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_volume(bytes: &[u8]) -> Result<VoxelVolume> {
    let mut c = Cursor { bytes, pos: 0 };
    let magic: [u8; 4] = c.take(4)?.try_into().unwrap();
    if &magic != MAGIC {
        return Err(DataError::BadMagic(magic));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(DataError::BadVersion(version));
    }
    let dims = [c.u32()? as usize, c.u32()? as usize, c.u32()? as usize];
    let cell_size = [c.f32()?, c.f32()?, c.f32()?];
    let n_channels = c.u32()? as usize;
    let mut names = Vec::with_capacity(n_channels.min(64));
    for _ in 0..n_channels {
        let len = u16::from_le_bytes(c.take(2)?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(c.take(len)?)
            .map_err(|e| DataError::Invalid(format!("channel name: {e}")))?
            .to_string();
        names.push(name);
    }
    let cells: usize = dims.iter().product();
    let expected = cells * 4 * n_channels;
    let found = bytes.len() - c.pos;
    if found < expected {
        return Err(DataError::Truncated { expected, found });
    }
    if found > expected {
        return Err(DataError::PayloadMismatch { expected, found });
    }
    let mut channels = Vec::with_capacity(n_channels);
    for name in names {
        let raw = c.take(cells * 4)?;
        let values = raw
            .chunks_exact(4)
            .map(|b| {
                let v = f32::from_le_bytes(b.try_into().unwrap());
                (!v.is_nan()).then_some(v)
            })
            .collect();
        channels.push(Channel { name, values });
    }
    VoxelVolume::new(dims, cell_size, channels)
}
