//! Self-describing little-endian binary container for densities and
//! spatial fields. The layout is documented in `docs/formats.md`.

use super::density::{FreqDensity, Surface, Thickness};
use super::spatial::SpatialField;
use crate::error::{ensure, Error, Result};
use ndarray::{Array2, Array3};
use num_complex::Complex64;
use std::io::{Read, Write};

pub const MAGIC: &[u8; 4] = b"HYPD";
pub const VERSION: u16 = 1;
const KIND_DENSITY: u8 = 1;
const KIND_FIELD: u8 = 2;

struct Writer<W: Write>(W);

impl<W: Write> Writer<W> {
    fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.0.write_all(b).map_err(Error::from)
    }
    fn u8(&mut self, v: u8) -> Result<()> {
        self.bytes(&[v])
    }
    fn u16(&mut self, v: u16) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn c64<'a>(&mut self, it: impl Iterator<Item = &'a Complex64>) -> Result<()> {
        for z in it {
            self.bytes(&(z.re as f32).to_le_bytes())?;
            self.bytes(&(z.im as f32).to_le_bytes())?;
        }
        Ok(())
    }
}

struct Reader<R: Read>(R);

impl<R: Read> Reader<R> {
    fn fill<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b).map_err(|e| Error::Format(format!("truncated container: {e}")))?;
        Ok(b)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.fill::<1>()?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.fill()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.fill()?))
    }
    fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        ensure(v < (1 << 40), || Error::Format(format!("implausible size {v}")))?;
        Ok(v as usize)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.fill()?))
    }
    fn c64(&mut self) -> Result<Complex64> {
        let re = f32::from_le_bytes(self.fill()?);
        let im = f32::from_le_bytes(self.fill()?);
        Ok(Complex64::new(re as f64, im as f64))
    }
    fn header(&mut self, kind: u8) -> Result<()> {
        let m = self.fill::<4>()?;
        ensure(&m == MAGIC, || Error::Format("bad magic".into()))?;
        let v = self.u16()?;
        ensure(v == VERSION, || Error::Format(format!("unsupported version {v}")))?;
        let k = self.u8()?;
        ensure(k == kind, || Error::Format(format!("expected kind {kind}, found {k}")))
    }
}

pub fn write_density<W: Write>(f: &FreqDensity, w: W) -> Result<()> {
    let mut w = Writer(w);
    w.bytes(MAGIC)?;
    w.u16(VERSION)?;
    w.u8(KIND_DENSITY)?;
    w.u64(f.n as u64)?;
    w.f64(f.h())?;
    let s = f.shape();
    for v in [f.origin[0], f.origin[1], s[0], s[1]] {
        w.u64(v as u64)?;
    }
    w.u8(f.surface.id())?;
    let slope = match f.surface {
        Surface::Plane { slope } => slope,
        _ => [0.0, 0.0],
    };
    w.f64(slope[0])?;
    w.f64(slope[1])?;
    match f.thickness {
        None => {
            w.u8(0)?;
            w.f64(0.0)?;
        }
        Some(t) => {
            w.u8(Thickness::RAISED_COSINE)?;
            w.f64(t.width)?;
        }
    }
    w.c64(f.data.iter())
}

pub fn read_density<R: Read>(r: R) -> Result<FreqDensity> {
    let mut r = Reader(r);
    r.header(KIND_DENSITY)?;
    let n = r.usize()?;
    let _h = r.f64()?;
    let origin = [r.usize()?, r.usize()?];
    let shape = [r.usize()?, r.usize()?];
    let id = r.u8()?;
    let slope = [r.f64()?, r.f64()?];
    let surface = Surface::from_id(id, slope)?;
    let profile = r.u8()?;
    let width = r.f64()?;
    let mut f = FreqDensity::zeros(n, origin, shape, surface)?;
    f.thickness = match profile {
        0 => None,
        Thickness::RAISED_COSINE => Some(Thickness { width }),
        p => return Err(Error::Format(format!("unknown thickness profile {p}"))),
    };
    let mut data = Vec::with_capacity(shape[0] * shape[1]);
    for _ in 0..shape[0] * shape[1] {
        data.push(r.c64()?);
    }
    f.data = Array2::from_shape_vec((shape[0], shape[1]), data).map_err(|e| Error::Format(e.to_string()))?;
    Ok(f)
}

pub fn write_field<W: Write>(g: &SpatialField, w: W) -> Result<()> {
    let mut w = Writer(w);
    w.bytes(MAGIC)?;
    w.u16(VERSION)?;
    w.u8(KIND_FIELD)?;
    for d in g.dims() {
        w.u64(d as u64)?;
    }
    for v in [g.x0[0], g.x0[1], g.dx[0], g.dx[1], g.scale] {
        w.f64(v)?;
    }
    match g.period {
        None => {
            w.u8(0)?;
            w.f64(0.0)?;
            w.f64(0.0)?;
        }
        Some(p) => {
            w.u8(1)?;
            w.f64(p[0])?;
            w.f64(p[1])?;
        }
    }
    for z in g.x3.iter().chain(g.w3.iter()) {
        w.f64(*z)?;
    }
    w.c64(g.data.iter())
}

pub fn read_field<R: Read>(r: R) -> Result<SpatialField> {
    let mut r = Reader(r);
    r.header(KIND_FIELD)?;
    let dims = [r.usize()?, r.usize()?, r.usize()?];
    let x0 = [r.f64()?, r.f64()?];
    let dx = [r.f64()?, r.f64()?];
    let scale = r.f64()?;
    let has_period = r.u8()?;
    let p = [r.f64()?, r.f64()?];
    let x3 = (0..dims[0]).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let w3 = (0..dims[0]).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let total = dims[0] * dims[1] * dims[2];
    let data = (0..total).map(|_| r.c64()).collect::<Result<Vec<_>>>()?;
    Ok(SpatialField {
        data: Array3::from_shape_vec((dims[0], dims[1], dims[2]), data).map_err(|e| Error::Format(e.to_string()))?,
        x0,
        dx,
        x3,
        w3,
        period: (has_period == 1).then_some(p),
        scale,
    })
}
