//! Binary parameter container shared by the generator and the classifier.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"ECMCKPT\0"  u32 version
//! u64 header length, header JSON (UTF-8)
//! u32 tensor count, then per tensor:
//!   u32 name length, name, u8 dtype (0 = f32, 1 = f64),
//!   u32 rank, u64 dims[rank], raw values
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{EcmError, Result};
use crate::numerics::{DType, ParamSet, Scalar, Tensor};

pub const MAGIC: &[u8; 8] = b"ECMCKPT\0";
pub const VERSION: u32 = 1;

fn bad(msg: impl Into<String>) -> EcmError {
    EcmError::Checkpoint(msg.into())
}

pub fn write_checkpoint<T: Scalar, W: Write>(mut w: W, header: &serde_json::Value, params: &ParamSet<T>) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let header = serde_json::to_vec(header)?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, t) in params.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&[T::DTYPE.code()])?;
        w.write_all(&(t.rank() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        w.write_all(&T::to_le_bytes_vec(t.data()))?;
    }
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| bad("truncated checkpoint"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parses a container, converting stored values to `T` when the dtype differs.
pub fn read_checkpoint<T: Scalar, R: Read>(mut r: R) -> Result<(serde_json::Value, ParamSet<T>)> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(|e| bad(e.to_string()))?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let hlen = c.u64()? as usize;
    let header: serde_json::Value = serde_json::from_slice(c.take(hlen)?).map_err(|e| bad(format!("header: {e}")))?;
    let count = c.u32()? as usize;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let nlen = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(nlen)?).map_err(|_| bad("tensor name is not UTF-8"))?.to_string();
        let dtype = DType::from_code(c.take(1)?[0]).ok_or_else(|| bad(format!("{name}: unknown dtype")))?;
        let rank = c.u32()? as usize;
        let shape = (0..rank).map(|_| c.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = c.take(n.checked_mul(dtype.size()).ok_or_else(|| bad("tensor too large"))?)?;
        let data: Vec<T> = match dtype {
            DType::F32 => raw.chunks_exact(4).map(|b| T::of(f32::from_le_chunk(b) as f64)).collect(),
            DType::F64 => raw.chunks_exact(8).map(|b| T::of(f64::from_le_chunk(b))).collect(),
        };
        let t = Tensor::new(shape, data)?;
        params.insert(name, t)?;
    }
    if c.pos != buf.len() {
        return Err(bad("trailing bytes after last tensor"));
    }
    Ok((header, params))
}

pub fn save_checkpoint<T: Scalar>(path: &Path, header: &serde_json::Value, params: &ParamSet<T>) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| EcmError::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    write_checkpoint(&mut w, header, params).map_err(|e| EcmError::io(path, e))?;
    w.flush().map_err(|e| EcmError::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<(serde_json::Value, ParamSet<T>)> {
    let f = std::fs::File::open(path).map_err(|e| EcmError::io(path, e))?;
    read_checkpoint(std::io::BufReader::new(f))
}

/// Checks that `params` holds exactly the names and shapes of `expected`.
pub fn validate_layout<T: Scalar, U: Scalar>(params: &ParamSet<T>, expected: &ParamSet<U>) -> Result<()> {
    for (name, t) in expected.iter() {
        match params.get(name) {
            None => return Err(bad(format!("missing tensor {name}"))),
            Some(p) if p.shape() != t.shape() => {
                return Err(bad(format!("tensor {name}: shape {:?}, config expects {:?}", p.shape(), t.shape())))
            }
            _ => {}
        }
    }
    if let Some(extra) = params.names().iter().find(|n| !expected.contains(n)) {
        return Err(bad(format!("unexpected tensor {extra}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn sample() -> ParamSet<f32> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut p = ParamSet::new();
        p.insert_uniform("a", &[3, 4], 0.08, &mut rng).unwrap();
        p.insert_uniform("b.c", &[5], 1.0, &mut rng).unwrap();
        p
    }

    #[test]
    fn round_trip_is_lossless() {
        let p = sample();
        let header = serde_json::json!({"kind": "test"});
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &header, &p).unwrap();
        let (h, q) = read_checkpoint::<f32, _>(buf.as_slice()).unwrap();
        assert_eq!(h, header);
        assert_eq!(q, p);
        let (_, wide) = read_checkpoint::<f64, _>(buf.as_slice()).unwrap();
        assert_eq!(wide.get("a").unwrap().cast::<f32>(), *p.get("a").unwrap());
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &serde_json::json!({}), &sample()).unwrap();
        assert!(read_checkpoint::<f32, _>(&buf[..buf.len() - 1]).is_err());
        let mut bad_magic = buf.clone();
        bad_magic[0] = b'X';
        assert!(read_checkpoint::<f32, _>(bad_magic.as_slice()).is_err());
        buf.push(0);
        assert!(read_checkpoint::<f32, _>(buf.as_slice()).is_err());
    }

    #[test]
    fn layout_validation() {
        let p = sample();
        assert!(validate_layout(&p, &p).is_ok());
        let mut q = ParamSet::<f32>::new();
        q.insert("a", Tensor::zeros(&[3, 5])).unwrap();
        q.insert("b.c", Tensor::zeros(&[5])).unwrap();
        assert!(validate_layout(&p, &q).is_err());
    }
}
