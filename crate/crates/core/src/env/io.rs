use std::io::{Read, Write};
use std::path::Path;

use super::EsdfGrid;
use crate::error::{Error, Result};
use crate::model::Vec3;

const CACHE_MAGIC: &[u8; 8] = b"ESDFGRD1";

/// Whitespace- or comma-separated `x y z` rows; blank lines and `#`
/// comments are skipped, extra columns ignored.
pub fn parse_xyz(text: &str) -> Result<Vec<Vec3>> {
    let mut pts = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .take(3)
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: n + 1,
                msg: e.to_string(),
            })?;
        if vals.len() < 3 {
            return Err(Error::Parse {
                line: n + 1,
                msg: "expected three coordinates".into(),
            });
        }
        pts.push(Vec3::new(vals[0], vals[1], vals[2]));
    }
    Ok(pts)
}

/// ASCII PLY with a `vertex` element whose properties include x, y, z.
pub fn parse_ply(text: &str) -> Result<Vec<Vec3>> {
    let mut lines = text.lines().enumerate();
    let bad = |line: usize, msg: &str| Error::Parse {
        line,
        msg: msg.to_string(),
    };
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(bad(1, "missing ply magic")),
    }
    let mut vertices = None;
    let mut props: Vec<String> = Vec::new();
    let mut in_vertex = false;
    let mut header_end = None;
    for (n, line) in lines.by_ref() {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["format", fmt, ..] if *fmt != "ascii" => {
                return Err(bad(n + 1, "only ascii PLY is supported"))
            }
            ["element", "vertex", count] => {
                vertices = Some(
                    count
                        .parse::<usize>()
                        .map_err(|e| bad(n + 1, &e.to_string()))?,
                );
                in_vertex = true;
            }
            ["element", ..] => in_vertex = false,
            ["property", .., name] if in_vertex => props.push(name.to_string()),
            ["end_header"] => {
                header_end = Some(n);
                break;
            }
            _ => {}
        }
    }
    let header_end = header_end.ok_or_else(|| bad(0, "missing end_header"))?;
    let count = vertices.ok_or_else(|| bad(header_end + 1, "no vertex element"))?;
    let col = |name: &str| {
        props
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| bad(header_end + 1, &format!("vertex property {name} missing")))
    };
    let (cx, cy, cz) = (col("x")?, col("y")?, col("z")?);
    let mut pts = Vec::with_capacity(count);
    for (n, line) in lines.take(count) {
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(n + 1, &e.to_string()))?;
        if vals.len() < props.len() {
            return Err(bad(n + 1, "short vertex row"));
        }
        pts.push(Vec3::new(vals[cx], vals[cy], vals[cz]));
    }
    if pts.len() != count {
        return Err(bad(
            header_end + 1 + pts.len(),
            "fewer vertices than declared",
        ));
    }
    Ok(pts)
}

/// Loads a point cloud, choosing the parser by extension (`.ply` or text).
pub fn load_points(path: impl AsRef<Path>) -> Result<Vec<Vec3>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let is_ply = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("ply"))
        .unwrap_or(false);
    if is_ply {
        parse_ply(&text)
    } else {
        parse_xyz(&text)
    }
}

impl EsdfGrid {
    /// Binary cache: magic, origin (3 x f64), resolution (f64), dims
    /// (3 x u32), then values as f32, x-fastest, all little-endian.
    pub fn write_cache<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CACHE_MAGIC)?;
        for v in self.origin.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.resolution.to_le_bytes())?;
        for d in self.dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_cache<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(Error::Parse {
                line: 0,
                msg: "not an ESDF cache file".into(),
            });
        }
        let mut f8 = [0u8; 8];
        let mut read_f64 = |r: &mut R| -> Result<f64> {
            r.read_exact(&mut f8)?;
            Ok(f64::from_le_bytes(f8))
        };
        let origin = Vec3::new(read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?);
        let resolution = read_f64(&mut r)?;
        let mut u4 = [0u8; 4];
        let mut dims = [0usize; 3];
        for d in &mut dims {
            r.read_exact(&mut u4)?;
            *d = u32::from_le_bytes(u4) as usize;
        }
        let n = dims[0] * dims[1] * dims[2];
        if n == 0 || !(resolution > 0.0) {
            return Err(Error::EmptyGrid);
        }
        let mut body = vec![0u8; 4 * n];
        r.read_exact(&mut body)?;
        let values = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Ok(Self {
            origin,
            resolution,
            dims,
            values,
        })
    }

    pub fn save_cache(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_cache(std::io::BufWriter::new(f))
    }

    pub fn load_cache(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_cache(std::io::BufReader::new(f))
    }
}
