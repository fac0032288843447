//! Binary field files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "EHMF"  u32 version
//! u8 grid kind (0 disk, 1 annulus)  f64 r_first  f64 r_max  u64 n_r  u64 n_theta
//! f64 gamma  u8 rho kind (0 constant, 1 radial polynomial)  u64 n_coeff  f64 * n_coeff
//! u64 ambient_dim  u64 n_nodes
//! f64 * (n_nodes * ambient_dim), node-major
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{ConformalChart, MapField, PolarGrid, RhoSpec};

pub const MAGIC: &[u8; 4] = b"EHMF";
pub const VERSION: u32 = 1;

/// A field together with the chart it lives on.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldFile {
    pub field: MapField,
    pub chart: ConformalChart,
}

pub fn write_field<W: Write>(mut w: W, field: &MapField, chart: &ConformalChart) -> Result<()> {
    chart.check(field.grid())?;
    let g = field.grid();
    let mut buf = Vec::with_capacity(64 + 8 * field.values().len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(if g.includes_disk() { 0 } else { 1 });
    buf.extend_from_slice(&g.r_first().to_le_bytes());
    buf.extend_from_slice(&g.r_max().to_le_bytes());
    buf.extend_from_slice(&(g.n_r() as u64).to_le_bytes());
    buf.extend_from_slice(&(g.n_theta() as u64).to_le_bytes());
    buf.extend_from_slice(&chart.gamma().to_le_bytes());
    let coeffs: &[f64] = match chart.spec() {
        RhoSpec::Constant { value } => {
            buf.push(0);
            std::slice::from_ref(value)
        }
        RhoSpec::RadialPolynomial { coefficients } => {
            buf.push(1);
            coefficients
        }
    };
    buf.extend_from_slice(&(coeffs.len() as u64).to_le_bytes());
    coeffs.iter().for_each(|c| buf.extend_from_slice(&c.to_le_bytes()));
    buf.extend_from_slice(&(field.dim() as u64).to_le_bytes());
    buf.extend_from_slice(&(g.n_nodes() as u64).to_le_bytes());
    field.values().iter().for_each(|v| buf.extend_from_slice(&v.to_le_bytes()));
    w.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format(format!("truncated file at byte {}", self.at)))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| Error::Format(format!("count {v} too large")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parses a field file. Values are returned exactly as stored.
pub fn read_field<R: Read>(mut r: R) -> Result<FieldFile> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut c = Cursor { bytes: &bytes, at: 0 };
    if c.take(4)? != MAGIC {
        return Err(Error::Format("missing EHMF magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let kind = c.u8()?;
    let (r_first, r_max, n_r, n_theta) = (c.f64()?, c.f64()?, c.u64()?, c.u64()?);
    let grid = match kind {
        0 => PolarGrid::disk(r_first, r_max, n_r, n_theta)?,
        1 => PolarGrid::annulus(r_first, r_max, n_r, n_theta)?,
        k => return Err(Error::Format(format!("unknown grid kind {k}"))),
    };
    let gamma = c.f64()?;
    let rho_kind = c.u8()?;
    let n_coeff = c.u64()?;
    if n_coeff > bytes.len() / 8 {
        return Err(Error::Format(format!("implausible coefficient count {n_coeff}")));
    }
    let coeffs = (0..n_coeff).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
    let spec = match (rho_kind, coeffs.as_slice()) {
        (0, &[value]) => RhoSpec::Constant { value },
        (1, _) => RhoSpec::RadialPolynomial { coefficients: coeffs },
        _ => return Err(Error::Format(format!("bad rho spec (kind {rho_kind}, {n_coeff} coefficients)"))),
    };
    let chart = ConformalChart::new(&grid, gamma, spec)?;
    let dim = c.u64()?;
    let n_nodes = c.u64()?;
    if n_nodes != grid.n_nodes() || dim < 2 {
        return Err(Error::Format(format!(
            "header declares {n_nodes} nodes of dimension {dim}, grid has {} nodes",
            grid.n_nodes()
        )));
    }
    let count = n_nodes
        .checked_mul(dim)
        .filter(|&n| n.checked_mul(8).is_some_and(|b| b == bytes.len() - c.at))
        .ok_or_else(|| Error::Format(format!("payload is {} bytes, expected {n_nodes} x {dim} f64", bytes.len() - c.at)))?;
    let values = (0..count).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
    Ok(FieldFile { field: MapField::from_raw(grid, dim, values), chart })
}

pub fn save_field(path: impl AsRef<Path>, field: &MapField, chart: &ConformalChart) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_field(&mut w, field, chart)?;
    w.flush()?;
    Ok(())
}

pub fn load_field(path: impl AsRef<Path>) -> Result<FieldFile> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_field(std::io::BufReader::new(f))
}
