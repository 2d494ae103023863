//! On-disk formats: raw little-endian arrays (`DRF1`), intensity volumes
//! (`DRV1`) and 16-bit binary PGM images.
//!
//! ```text
//! DRF1: "DRF1" u32 nx u32 ny u32 components f64 pitch f64 cx f64 cy f64 wavelength
//!       then nx·ny·components f64, row-major, components interleaved
//! DRV1: "DRV1" u32 n_rho u32 n_z i32 ell f64 rc_over_w0 f64 w0 f64 f f64 wavelength f64 power
//!       then rho_axis, z_axis, intensity [iz][irho], all f64
//! ```

use std::io::{Read, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fields::{ComplexField, GridSpec, PhaseMask};
use crate::montecarlo::{Hyperfine, Image, Snapshot};
use crate::propagation::{IntensityVolume, SourceInfo};

/// A plain 2D array of one or two (real, imaginary) components per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct RawArray {
    pub nx: usize,
    pub ny: usize,
    pub components: usize,
    pub pitch: f64,
    pub center: (f64, f64),
    pub wavelength: f64,
    pub data: Vec<f64>,
}

impl RawArray {
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"DRF1")?;
        for v in [self.nx, self.ny, self.components] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        for v in [self.pitch, self.center.0, self.center.1, self.wavelength] {
            w.write_all(&v.to_le_bytes())?;
        }
        write_f64s(&mut w, &self.data)
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        magic(&mut r, b"DRF1")?;
        let nx = read_u32(&mut r)? as usize;
        let ny = read_u32(&mut r)? as usize;
        let components = read_u32(&mut r)? as usize;
        if !(1..=2).contains(&components) {
            return Err(Error::Format(format!("DRF1 with {components} components")));
        }
        let pitch = read_f64(&mut r)?;
        let center = (read_f64(&mut r)?, read_f64(&mut r)?);
        let wavelength = read_f64(&mut r)?;
        let data = read_f64s(&mut r, nx * ny * components)?;
        Ok(Self { nx, ny, components, pitch, center, wavelength, data })
    }

    pub fn from_field(f: &ComplexField) -> Self {
        Self {
            nx: f.grid.n,
            ny: f.grid.n,
            components: 2,
            pitch: f.grid.pitch,
            center: f.grid.center,
            wavelength: f.wavelength,
            data: f.data.iter().flat_map(|c| [c.re, c.im]).collect(),
        }
    }

    pub fn from_mask(m: &PhaseMask) -> Self {
        Self {
            nx: m.grid.n,
            ny: m.grid.n,
            components: 1,
            pitch: m.grid.pitch,
            center: m.grid.center,
            wavelength: 0.0,
            data: m.phase.clone(),
        }
    }

    /// One row per atom: x, y, z (m), hyperfine level (2 or 3), included flag.
    pub fn from_snapshot(s: &Snapshot) -> Self {
        let data = s
            .positions
            .iter()
            .zip(&s.hyperfine)
            .zip(&s.included)
            .flat_map(|((p, h), inc)| {
                let level = if *h == Hyperfine::F3 { 3.0 } else { 2.0 };
                [p[0], p[1], p[2], level, f64::from(u8::from(*inc))]
            })
            .collect();
        Self { nx: 5, ny: s.positions.len(), components: 1, pitch: 0.0, center: (s.time, 0.0), wavelength: 0.0, data }
    }

    pub fn to_field(&self) -> Result<ComplexField> {
        if self.components != 2 || self.nx != self.ny {
            return Err(Error::Format("DRF1 array is not a square complex field".into()));
        }
        let grid = GridSpec { n: self.nx, pitch: self.pitch, center: self.center };
        let data = self.data.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
        Ok(ComplexField { grid, wavelength: self.wavelength, data })
    }
}

pub fn write_volume<W: Write>(v: &IntensityVolume, mut w: W) -> Result<()> {
    w.write_all(b"DRV1")?;
    w.write_all(&(v.n_rho() as u32).to_le_bytes())?;
    w.write_all(&(v.n_z() as u32).to_le_bytes())?;
    w.write_all(&v.source.ell.to_le_bytes())?;
    let s = &v.source;
    for x in [s.rc_over_w0, s.w0, s.f, s.wavelength, s.power] {
        w.write_all(&x.to_le_bytes())?;
    }
    write_f64s(&mut w, &v.rho_axis)?;
    write_f64s(&mut w, &v.z_axis)?;
    write_f64s(&mut w, &v.intensity)
}

/// Reads a `DRV1` volume. Anisotropy is not stored; the volume is marked
/// symmetric with zero anisotropy.
pub fn read_volume<R: Read>(mut r: R) -> Result<IntensityVolume> {
    magic(&mut r, b"DRV1")?;
    let n_rho = read_u32(&mut r)? as usize;
    let n_z = read_u32(&mut r)? as usize;
    let ell = read_u32(&mut r)? as i32;
    let mut h = [0.0; 5];
    for v in &mut h {
        *v = read_f64(&mut r)?;
    }
    let source = SourceInfo { ell, rc_over_w0: h[0], w0: h[1], f: h[2], wavelength: h[3], power: h[4] };
    let rho_axis = read_f64s(&mut r, n_rho)?;
    let z_axis = read_f64s(&mut r, n_z)?;
    let intensity = read_f64s(&mut r, n_rho * n_z)?;
    Ok(IntensityVolume { rho_axis, z_axis, intensity, source, anisotropy: 0.0, symmetric: true })
}

/// 16-bit binary PGM of `values` (row-major, `width` per row), linearly
/// scaled so the largest value maps to 65535. Negative values clip to 0.
pub fn pgm16_scaled(values: &[f64], width: usize, height: usize) -> Result<Vec<u8>> {
    let max = values.iter().copied().fold(0.0, f64::max);
    pgm16_full_scale(values, width, height, max)
}

/// 16-bit PGM with `full_scale` mapped to 65535.
pub fn pgm16_full_scale(values: &[f64], width: usize, height: usize, full_scale: f64) -> Result<Vec<u8>> {
    let scale = if full_scale > 0.0 { 65535.0 / full_scale } else { 0.0 };
    pgm16(values.iter().map(|v| (v * scale).round().clamp(0.0, 65535.0) as u16), width, height, values.len())
}

/// 16-bit PGM of raw atom counts (clipped at 65535).
pub fn pgm16_counts(image: &Image) -> Result<Vec<u8>> {
    pgm16(image.counts.iter().map(|&c| c.min(65535) as u16), image.width, image.height, image.counts.len())
}

fn pgm16(values: impl Iterator<Item = u16>, width: usize, height: usize, len: usize) -> Result<Vec<u8>> {
    if width * height != len || len == 0 {
        return Err(Error::Shape(format!("{width}x{height} image from {len} values")));
    }
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    for v in values {
        out.extend_from_slice(&v.to_be_bytes());
    }
    Ok(out)
}

/// Parses a 16-bit P5 image back into `(width, height, values)`.
pub fn read_pgm16(bytes: &[u8]) -> Result<(usize, usize, Vec<u16>)> {
    let mut fields = Vec::new();
    let mut i = 0;
    while fields.len() < 4 {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(Error::Format("truncated PGM header".into()));
        }
        fields.push(std::str::from_utf8(&bytes[start..i]).map_err(|_| Error::Format("bad PGM header".into()))?);
    }
    if fields[0] != "P5" || fields[3] != "65535" {
        return Err(Error::Format("not a 16-bit P5 image".into()));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad PGM dimension {s}")));
    let (w, h) = (parse(fields[1])?, parse(fields[2])?);
    let body = &bytes[i + 1..];
    if body.len() != 2 * w * h {
        return Err(Error::Format("PGM body length mismatch".into()));
    }
    Ok((w, h, body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()))
}

/// `rho_m,intensity_w_m2` rows of one z-plane.
pub fn rho_slice_csv(v: &IntensityVolume, iz: usize) -> String {
    let mut s = String::from("rho_m,intensity_w_m2\n");
    for (r, i) in v.rho_axis.iter().zip(v.rho_profile(iz)) {
        s.push_str(&format!("{r:.9e},{i:.9e}\n"));
    }
    s
}

/// `z_m,intensity_w_m2` rows at one radius.
pub fn z_slice_csv(v: &IntensityVolume, irho: usize) -> String {
    let mut s = String::from("z_m,intensity_w_m2\n");
    for (z, i) in v.z_axis.iter().zip(v.z_profile(irho)) {
        s.push_str(&format!("{z:.9e},{i:.9e}\n"));
    }
    s
}

fn magic<R: Read>(r: &mut R, want: &[u8; 4]) -> Result<()> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m)?;
    if &m != want {
        return Err(Error::Format(format!("expected {} magic", String::from_utf8_lossy(want))));
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

fn write_f64s<W: Write>(w: &mut W, v: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(v.len() * 8);
    for x in v {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{gaussian_beam, ring_phase_mask};

    #[test]
    fn field_round_trip() {
        let g = GridSpec::new(64, 20e-6).unwrap();
        let f = gaussian_beam(g, 0.2e-3, 0.1, 780e-9).unwrap();
        let mut buf = Vec::new();
        RawArray::from_field(&f).write(&mut buf).unwrap();
        assert_eq!(RawArray::read(buf.as_slice()).unwrap().to_field().unwrap(), f);
        let m = ring_phase_mask(g, 1, 0.1e-3).unwrap();
        let mut buf = Vec::new();
        RawArray::from_mask(&m).write(&mut buf).unwrap();
        assert_eq!(RawArray::read(buf.as_slice()).unwrap().data, m.phase);
    }

    #[test]
    fn volume_round_trip() {
        let v = IntensityVolume {
            rho_axis: vec![0.0, 1e-6, 2e-6],
            z_axis: vec![-1e-3, 1e-3],
            intensity: (0..6).map(f64::from).collect(),
            source: SourceInfo { ell: 2, rc_over_w0: 0.85, w0: 1.7e-3, f: 0.215, wavelength: 779e-9, power: 0.15 },
            anisotropy: 0.0,
            symmetric: true,
        };
        let mut buf = Vec::new();
        write_volume(&v, &mut buf).unwrap();
        assert_eq!(read_volume(buf.as_slice()).unwrap(), v);
        assert!(read_volume(&b"DRF1"[..]).is_err());
    }

    #[test]
    fn pgm_round_trip() {
        let bytes = pgm16_scaled(&[0.0, 1.0, 2.0, 4.0, -1.0, 3.0], 3, 2).unwrap();
        let (w, h, v) = read_pgm16(&bytes).unwrap();
        assert_eq!((w, h), (3, 2));
        assert_eq!(v, vec![0, 16384, 32768, 65535, 0, 49151]);
        assert!(pgm16_scaled(&[1.0; 5], 3, 2).is_err());
    }
}
