//! Binary file formats. All integers and floats are little-endian.
//!
//! | file        | layout                                                                   |
//! |-------------|--------------------------------------------------------------------------|
//! | mask        | `FLMASK01`, u32 d, u64 N, N^d bytes (0/1)                                 |
//! | grid dump   | `FLGRID01`, u32 version, u32 d, u64 N, N^d f64                            |
//! | kernel      | `FLKERN01`, u32 version, u32 d, u64 N, f64 s, u8 kind, u32 n, (2N)^d × (f64 re, f64 im) |
//! | image       | binary PGM (`P5`), maxval 255, square with power-of-two side             |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{DomainMask, GridFunction};
use crate::kernel::{ConvolutionKernel, QuadKind};
use crate::ProblemParams;

pub const MASK_MAGIC: &[u8; 8] = b"FLMASK01";
pub const GRID_MAGIC: &[u8; 8] = b"FLGRID01";
pub const KERNEL_MAGIC: &[u8; 8] = b"FLKERN01";
pub const GRID_VERSION: u32 = 1;
pub const KERNEL_VERSION: u32 = 1;
/// Bytes before the kernel payload.
pub const KERNEL_HEADER_LEN: usize = 8 + 4 + 4 + 8 + 8 + 1 + 4;

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8], what: &'static str) -> Self {
        Self { buf, pos: 0, what }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format(format!("{} file truncated at byte {}", self.what, self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn magic(&mut self, m: &[u8; 8]) -> Result<()> {
        if self.take(8)? != m {
            return Err(Error::Format(format!(
                "bad magic, expected {}",
                String::from_utf8_lossy(m)
            )));
        }
        Ok(())
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

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn rest(&self) -> usize {
        self.buf.len() - self.pos
    }
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut buf)?;
    Ok(buf)
}

fn lattice_len(d: u32, n: u64, what: &str) -> Result<usize> {
    if !(1..=3).contains(&d) {
        return Err(Error::Format(format!("{what}: unsupported dimension {d}")));
    }
    (n as usize)
        .checked_pow(d)
        .ok_or_else(|| Error::Format(format!("{what}: lattice size overflows")))
}

/// Mask contents as stored on disk; `N` need not satisfy solver constraints.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterMask {
    pub d: usize,
    pub n: usize,
    pub bits: Vec<bool>,
}

pub fn write_mask(path: &Path, mask: &DomainMask) -> Result<()> {
    let p = mask.params();
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MASK_MAGIC)?;
    w.write_all(&(p.d() as u32).to_le_bytes())?;
    w.write_all(&(p.n() as u64).to_le_bytes())?;
    let bytes: Vec<u8> = mask.selected().iter().map(|&b| b as u8).collect();
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

pub fn read_raster_mask(path: &Path) -> Result<RasterMask> {
    let buf = read_all(path)?;
    let mut c = Cursor::new(&buf, "mask");
    c.magic(MASK_MAGIC)?;
    let d = c.u32()?;
    let n = c.u64()?;
    let len = lattice_len(d, n, "mask")?;
    if c.rest() != len {
        return Err(Error::Format(format!(
            "mask declares {len} sites but holds {} bytes",
            c.rest()
        )));
    }
    let bits = c
        .take(len)?
        .iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(Error::Format(format!("mask byte {v} is neither 0 nor 1"))),
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(RasterMask {
        d: d as usize,
        n: n as usize,
        bits,
    })
}

/// Reads a mask file into a [`DomainMask`]; `s` is irrelevant and set to 1.
pub fn read_mask(path: &Path) -> Result<DomainMask> {
    let r = read_raster_mask(path)?;
    let params = ProblemParams::new(r.d, r.n, 1.0)
        .map_err(|e| Error::Format(format!("mask header: {e}")))?;
    DomainMask::new(params, r.bits)
}

pub fn write_grid(path: &Path, u: &GridFunction) -> Result<()> {
    let p = u.params();
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(GRID_MAGIC)?;
    w.write_all(&GRID_VERSION.to_le_bytes())?;
    w.write_all(&(p.d() as u32).to_le_bytes())?;
    w.write_all(&(p.n() as u64).to_le_bytes())?;
    for v in u.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Grid dump contents: `(d, N, values)`.
pub fn read_grid(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let buf = read_all(path)?;
    let mut c = Cursor::new(&buf, "grid");
    c.magic(GRID_MAGIC)?;
    let version = c.u32()?;
    if version != GRID_VERSION {
        return Err(Error::Format(format!("unsupported grid version {version}")));
    }
    let d = c.u32()?;
    let n = c.u64()?;
    let len = lattice_len(d, n, "grid")?;
    if c.rest() != 8 * len {
        return Err(Error::Format(format!(
            "grid declares {len} values but holds {} bytes",
            c.rest()
        )));
    }
    let vals = (0..len).map(|_| c.f64()).collect::<Result<Vec<f64>>>()?;
    Ok((d as usize, n as usize, vals))
}

pub fn save_kernel(k: &ConvolutionKernel, path: &Path) -> Result<()> {
    let p = k.params();
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(KERNEL_MAGIC)?;
    w.write_all(&KERNEL_VERSION.to_le_bytes())?;
    w.write_all(&(p.d() as u32).to_le_bytes())?;
    w.write_all(&(p.n() as u64).to_le_bytes())?;
    w.write_all(&p.s().to_le_bytes())?;
    w.write_all(&[k.quad_kind().code()])?;
    w.write_all(&(k.quad_order() as u32).to_le_bytes())?;
    for v in k.phi_hat() {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_kernel(path: &Path) -> Result<ConvolutionKernel> {
    let buf = read_all(path)?;
    let mut c = Cursor::new(&buf, "kernel");
    c.magic(KERNEL_MAGIC)?;
    let version = c.u32()?;
    if version != KERNEL_VERSION {
        return Err(Error::Format(format!("unsupported kernel version {version}")));
    }
    let d = c.u32()?;
    let n = c.u64()?;
    let s = c.f64()?;
    let kind = c.u8()?;
    let order = c.u32()?;
    let kind = QuadKind::from_code(kind)
        .ok_or_else(|| Error::Format(format!("unknown quadrature kind {kind}")))?;
    let params = ProblemParams::new(d as usize, n as usize, s)
        .map_err(|e| Error::Format(format!("kernel header: {e}")))?;
    let len = params.padded_len();
    if c.rest() != 16 * len {
        return Err(Error::Format(format!(
            "kernel declares N={n} ({len} coefficients) but payload holds {} bytes",
            c.rest()
        )));
    }
    let mut phi = Vec::with_capacity(len);
    for _ in 0..len {
        let re = c.f64()?;
        let im = c.f64()?;
        phi.push(Complex64::new(re, im));
    }
    ConvolutionKernel::new(params, kind, order as usize, phi)
}

/// Reads a binary 8-bit PGM; returns the side and gray values in `[0,1]`.
pub fn read_pgm(path: &Path) -> Result<(usize, Vec<f64>)> {
    let buf = read_all(path)?;
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            match buf.get(pos) {
                Some(b'#') => {
                    while pos < buf.len() && buf[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::Format("PGM header truncated".into())),
            }
        }
        let start = pos;
        while pos < buf.len() && !buf[pos].is_ascii_whitespace() {
            pos += 1;
        }
        Ok(String::from_utf8_lossy(&buf[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err(Error::Format("only binary PGM (P5) images are supported".into()));
    }
    let mut num = |what: &str| -> Result<usize> {
        token()?
            .parse()
            .map_err(|_| Error::Format(format!("PGM {what} is not a number")))
    };
    let w = num("width")?;
    let h = num("height")?;
    let maxval = num("maxval")?;
    if maxval != 255 {
        return Err(Error::Format(format!("PGM maxval must be 255, got {maxval}")));
    }
    if w != h || !w.is_power_of_two() || w < 4 {
        return Err(Error::Format(format!(
            "image must be square with power-of-two side, got {w}x{h}"
        )));
    }
    // exactly one whitespace byte separates the header from the raster
    let start = pos + 1;
    if buf.len() < start + w * h {
        return Err(Error::Format("PGM raster truncated".into()));
    }
    let vals = buf[start..start + w * h]
        .iter()
        .map(|&b| b as f64 / 255.0)
        .collect();
    Ok((w, vals))
}

/// Writes values in `[0,1]` (clamped) as an 8-bit binary PGM.
pub fn write_pgm(path: &Path, side: usize, values: &[f64]) -> Result<()> {
    if values.len() != side * side {
        return Err(Error::Shape(format!(
            "{} values do not form a {side}x{side} image",
            values.len()
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{side} {side}\n255\n")?;
    let bytes: Vec<u8> = values
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}
