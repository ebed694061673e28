//! `VWF1` binary field container.
//!
//! Layout: the magic bytes `VWF1`, an 8-byte little-endian header length,
//! a UTF-8 JSON header `{dims, h, fields: [{name, per_site_shape}]}`, then for
//! each field in header order the raw little-endian `f64` payload, site-major
//! and row-major within a site.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Field, Grid, SiteValue};

pub const VWF1_MAGIC: &[u8; 4] = b"VWF1";

/// Upper bound on the JSON header, to reject garbage lengths early.
const MAX_HEADER_LEN: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct FieldRecord {
    pub name: String,
    pub per_site_shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl FieldRecord {
    pub fn from_field<V: SiteValue>(name: &str, field: &Field<V>) -> Self {
        FieldRecord { name: name.to_string(), per_site_shape: V::SHAPE.to_vec(), data: field.to_flat() }
    }

    fn per_site_len(&self) -> usize {
        self.per_site_shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vwf1 {
    pub grid: Grid,
    pub fields: Vec<FieldRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    dims: [usize; 4],
    h: f64,
    fields: Vec<HeaderField>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderField {
    name: String,
    per_site_shape: Vec<usize>,
}

impl Vwf1 {
    pub fn field<V: SiteValue>(&self, name: &str) -> Result<Field<V>> {
        let rec = self
            .fields
            .iter()
            .find(|f| f.name == name)
            .ok_or_else(|| Error::Format(format!("missing field `{name}`")))?;
        if rec.per_site_shape != V::SHAPE {
            return Err(Error::Format(format!(
                "field `{name}` has per-site shape {:?}, expected {:?}",
                rec.per_site_shape,
                V::SHAPE
            )));
        }
        Field::from_flat(self.grid, &rec.data)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            dims: self.grid.dims,
            h: self.grid.h,
            fields: self
                .fields
                .iter()
                .map(|f| HeaderField { name: f.name.clone(), per_site_shape: f.per_site_shape.clone() })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        w.write_all(VWF1_MAGIC)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for f in &self.fields {
            let expected = self.grid.sites() * f.per_site_len();
            if f.data.len() != expected {
                return Err(Error::ShapeMismatch { expected, got: f.data.len() });
            }
            for v in &f.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic, "magic")?;
        if &magic != VWF1_MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}")));
        }
        let mut len = [0u8; 8];
        read_exact(&mut r, &mut len, "header length")?;
        let len = u64::from_le_bytes(len);
        if len > MAX_HEADER_LEN {
            return Err(Error::Format(format!("header length {len} too large")));
        }
        let mut json = vec![0u8; len as usize];
        read_exact(&mut r, &mut json, "header")?;
        let header: Header =
            serde_json::from_slice(&json).map_err(|e| Error::Format(format!("header is not valid JSON: {e}")))?;
        let grid = Grid::new(header.dims, header.h).map_err(|e| Error::Format(e.to_string()))?;

        let mut fields = Vec::with_capacity(header.fields.len());
        for hf in header.fields {
            let count = grid.sites() * hf.per_site_shape.iter().product::<usize>();
            let mut bytes = vec![0u8; count * 8];
            read_exact(&mut r, &mut bytes, &hf.name)?;
            let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            fields.push(FieldRecord { name: hf.name, per_site_shape: hf.per_site_shape, data });
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::Format("trailing bytes after payload".into()));
        }
        Ok(Vwf1 { grid, fields })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Vwf1::read_from(BufReader::new(File::open(path)?))
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated while reading {what}")),
        _ => Error::Io(e),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Configuration;
    use crate::oracle::Generator;

    fn sample() -> Vwf1 {
        let g = Grid::new([3, 3, 4, 3], 0.25).unwrap();
        Generator::new(8).configuration(g, 1.0).to_vwf1()
    }

    #[test]
    fn roundtrip_bytes() {
        let file = sample();
        let mut buf = Vec::new();
        file.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"VWF1");
        let hlen = u64::from_le_bytes(buf[4..12].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&buf[12..12 + hlen]).unwrap();
        assert_eq!(header["dims"], serde_json::json!([3, 3, 4, 3]));
        assert_eq!(header["fields"][0]["per_site_shape"], serde_json::json!([4, 3]));
        let sites = 108;
        assert_eq!(buf.len(), 12 + hlen + 8 * sites * 24);
        // First payload value is A[site 0][k=0][a=0].
        let first = f64::from_le_bytes(buf[12 + hlen..20 + hlen].try_into().unwrap());
        assert_eq!(first, file.fields[0].data[0]);

        let back = Vwf1::read_from(&buf[..]).unwrap();
        assert_eq!(back, file);
        let cfg = Configuration::from_vwf1(&back).unwrap();
        assert_eq!(cfg.to_vwf1(), file);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(Vwf1::read_from(&bad[..]), Err(Error::Format(_))));
        assert!(matches!(Vwf1::read_from(&buf[..buf.len() - 3]), Err(Error::Format(_))));
        assert!(matches!(Vwf1::read_from(&buf[..6]), Err(Error::Format(_))));
        let mut extra = buf.clone();
        extra.push(0);
        assert!(matches!(Vwf1::read_from(&extra[..]), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_shape_mismatch() {
        let mut file = sample();
        file.fields[1].per_site_shape = vec![9];
        assert!(Configuration::from_vwf1(&file).is_err());
    }
}
