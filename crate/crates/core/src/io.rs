//! Point-sample and field file formats.
//!
//! * CSV: `# hyperscope-points v1; d=..; L=..; meta=<json>`, then one point
//!   per line; a trailing weight column appears only when some weight is not 1.
//! * Binary (little endian): `HSPT`, u32 version, u32 d, f64 L, u64 count,
//!   count*d coordinates, count weights, then u64 length + metadata JSON.
//! * Field dump: `HSFD`, u32 version, u32 d, f64 L, u64 grid_n,
//!   u32 components, values, then u64 length + JSON of the remaining fields.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::construct::{Meta, PointConfig};
use crate::error::{Error, Result};
use crate::geom::TorusBox;
use crate::randfield::{CovarianceSpec, GridField};

const CSV_TAG: &str = "# hyperscope-points v1;";
const VERSION: u32 = 1;

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Format(msg.into()))
}

pub fn write_csv<W: Write>(config: &PointConfig, mut out: W) -> Result<()> {
    let meta = serde_json::to_string(&config.meta).map_err(|e| Error::Format(e.to_string()))?;
    writeln!(out, "{CSV_TAG} d={}; L={}; meta={meta}", config.dim(), config.bounds.side())?;
    let weighted = config.weights.iter().any(|&w| w != 1.0);
    let mut line = String::new();
    for (p, w) in config.points().zip(&config.weights) {
        line.clear();
        for (a, x) in p.iter().enumerate() {
            if a > 0 {
                line.push(',');
            }
            line.push_str(&x.to_string());
        }
        if weighted {
            line.push(',');
            line.push_str(&w.to_string());
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_csv<R: BufRead>(input: R) -> Result<PointConfig> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty file".into()))??;
    let rest = header
        .strip_prefix(CSV_TAG)
        .ok_or_else(|| Error::Format("missing hyperscope-points v1 header".into()))?;
    let (mut d, mut side, mut meta) = (None, None, None);
    // meta is last and may itself contain "; "
    let (head, meta_json) = match rest.find("meta=") {
        Some(i) => (&rest[..i], Some(&rest[i + 5..])),
        None => (rest, None),
    };
    for field in head.split(';') {
        let field = field.trim();
        if let Some(v) = field.strip_prefix("d=") {
            d = v.parse::<usize>().ok();
        } else if let Some(v) = field.strip_prefix("L=") {
            side = v.parse::<f64>().ok();
        }
    }
    if let Some(js) = meta_json {
        meta = Some(serde_json::from_str::<Meta>(js.trim()).map_err(|e| Error::Format(format!("meta: {e}")))?);
    }
    let (d, side) = match (d, side) {
        (Some(d), Some(s)) => (d, s),
        _ => return format_err("header lacks d or L"),
    };
    let bounds = TorusBox::new(d, side).map_err(|e| Error::Format(e.to_string()))?;
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    for (ln, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("line {}: {e}", ln + 2)))?;
        match vals.len() {
            n if n == d => weights.push(1.0),
            n if n == d + 1 => weights.push(vals[d]),
            n => return format_err(format!("line {}: expected {d} or {} columns, got {n}", ln + 2, d + 1)),
        }
        coords.extend_from_slice(&vals[..d]);
    }
    let meta = meta.unwrap_or_else(|| Meta {
        constructor: "unknown".into(),
        params: serde_json::Value::Null,
        seed: 0,
        bragg_spacing: None,
    });
    PointConfig::new(bounds, coords, Some(weights), meta).map_err(|e| Error::Format(e.to_string()))
}

fn put_trailer<W: Write, T: Serialize>(out: &mut W, value: &T) -> Result<()> {
    let js = serde_json::to_vec(value).map_err(|e| Error::Format(e.to_string()))?;
    out.write_all(&(js.len() as u64).to_le_bytes())?;
    out.write_all(&js)?;
    Ok(())
}

pub fn write_binary<W: Write>(config: &PointConfig, mut out: W) -> Result<()> {
    out.write_all(b"HSPT")?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(config.dim() as u32).to_le_bytes())?;
    out.write_all(&config.bounds.side().to_le_bytes())?;
    out.write_all(&(config.len() as u64).to_le_bytes())?;
    for x in config.coords.iter().chain(&config.weights) {
        out.write_all(&x.to_le_bytes())?;
    }
    put_trailer(&mut out, &config.meta)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return format_err("truncated file");
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("size overflow".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn trailer<T: for<'de> Deserialize<'de>>(&mut self) -> Result<Option<T>> {
        if self.pos == self.buf.len() {
            return Ok(None);
        }
        let n = self.u64()? as usize;
        let js = self.take(n)?;
        serde_json::from_slice(js).map(Some).map_err(|e| Error::Format(e.to_string()))
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<(usize, f64)> {
        if self.take(4)? != magic {
            return format_err(format!("bad magic, expected {}", String::from_utf8_lossy(magic)));
        }
        let v = self.u32()?;
        if v != VERSION {
            return format_err(format!("unsupported version {v}"));
        }
        let d = self.u32()? as usize;
        let side = f64::from_le_bytes(self.take(8)?.try_into().unwrap());
        Ok((d, side))
    }
}

pub fn read_binary(bytes: &[u8]) -> Result<PointConfig> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let (d, side) = r.header(b"HSPT")?;
    let bounds = TorusBox::new(d, side).map_err(|e| Error::Format(e.to_string()))?;
    let n = r.u64()? as usize;
    let coords = r.f64s(n.checked_mul(d).ok_or_else(|| Error::Format("size overflow".into()))?)?;
    let weights = r.f64s(n)?;
    let meta = r.trailer::<Meta>()?.unwrap_or_else(|| Meta {
        constructor: "unknown".into(),
        params: serde_json::Value::Null,
        seed: 0,
        bragg_spacing: None,
    });
    PointConfig::new(bounds, coords, Some(weights), meta).map_err(|e| Error::Format(e.to_string()))
}

#[derive(Serialize, Deserialize)]
struct FieldTrailer {
    spec: CovarianceSpec,
    seed: u64,
    clip_fraction: f64,
    imag_residue: f64,
    wrap_correction: f64,
}

pub fn write_field<W: Write>(field: &GridField, mut out: W) -> Result<()> {
    out.write_all(b"HSFD")?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(field.dim() as u32).to_le_bytes())?;
    out.write_all(&field.bounds.side().to_le_bytes())?;
    out.write_all(&(field.grid_n as u64).to_le_bytes())?;
    out.write_all(&(field.components as u32).to_le_bytes())?;
    for x in &field.values {
        out.write_all(&x.to_le_bytes())?;
    }
    put_trailer(
        &mut out,
        &FieldTrailer {
            spec: field.spec.clone(),
            seed: field.seed,
            clip_fraction: field.clip_fraction,
            imag_residue: field.imag_residue,
            wrap_correction: field.wrap_correction,
        },
    )
}

pub fn read_field(bytes: &[u8]) -> Result<GridField> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let (d, side) = r.header(b"HSFD")?;
    let bounds = TorusBox::new(d, side).map_err(|e| Error::Format(e.to_string()))?;
    let grid_n = r.u64()? as usize;
    let components = r.u32()? as usize;
    let nodes = grid_n
        .checked_pow(d as u32)
        .and_then(|m| m.checked_mul(components))
        .ok_or_else(|| Error::Format("size overflow".into()))?;
    let values = r.f64s(nodes)?;
    let t: FieldTrailer = r.trailer()?.ok_or_else(|| Error::Format("field dump lacks its trailer".into()))?;
    Ok(GridField {
        bounds,
        grid_n,
        components,
        values,
        spec: t.spec,
        seed: t.seed,
        clip_fraction: t.clip_fraction,
        imag_residue: t.imag_residue,
        wrap_correction: t.wrap_correction,
    })
}
