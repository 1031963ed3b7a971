//! `MATN` binary tensor records.
//!
//! Layout, all little-endian: magic `b"MATN"`, version `u32`, rank `u32`,
//! `rank` extents as `u32`, then the `f64` payload in row-major order.
//! Several records may be concatenated in one file.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"MATN";
pub const VERSION: u32 = 1;

pub fn write_tensor<W: Write>(w: &mut W, t: &Tensor) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(t.rank() as u32).to_le_bytes())?;
    for &d in t.shape() {
        let d = u32::try_from(d).map_err(|_| TensorError::Format(format!("extent {d} exceeds u32")))?;
        w.write_all(&d.to_le_bytes())?;
    }
    for v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Reads one record; `Ok(None)` at a clean end of input.
pub fn read_tensor<R: Read>(r: &mut R) -> Result<Option<Tensor>> {
    let mut magic = [0u8; 4];
    match r.read_exact(&mut magic) {
        Ok(()) => {}
        Err(e) if e.kind() == ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    if &magic != MAGIC {
        return Err(TensorError::Format(format!("bad magic {magic:?}")));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(TensorError::Format(format!("unsupported version {version}")));
    }
    let rank = read_u32(r)? as usize;
    let shape = (0..rank).map(|_| read_u32(r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    let n: usize = shape.iter().product();
    let mut payload = vec![0u8; n * 8];
    r.read_exact(&mut payload)?;
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Tensor::new(shape, data).map(Some).map_err(|e| TensorError::Format(e.to_string()))
}

pub fn save_all(path: impl AsRef<Path>, tensors: &[&Tensor]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for t in tensors {
        write_tensor(&mut w, t)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_all(path: impl AsRef<Path>) -> Result<Vec<Tensor>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    while let Some(t) = read_tensor(&mut r)? {
        out.push(t);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_bit_exact() {
        let t = Tensor::new(vec![2, 1], vec![1.0, -2.5]).unwrap();
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        let mut expected = b"MATN".to_vec();
        expected.extend(1u32.to_le_bytes());
        expected.extend(2u32.to_le_bytes());
        expected.extend(2u32.to_le_bytes());
        expected.extend(1u32.to_le_bytes());
        expected.extend(1.0f64.to_le_bytes());
        expected.extend((-2.5f64).to_le_bytes());
        assert_eq!(buf, expected);
    }

    #[test]
    fn scalar_and_concatenated_records() {
        let a = Tensor::scalar(3.25);
        let b = Tensor::ones(&[2, 2, 2]);
        let mut buf = Vec::new();
        write_tensor(&mut buf, &a).unwrap();
        write_tensor(&mut buf, &b).unwrap();
        let mut r = buf.as_slice();
        assert_eq!(read_tensor(&mut r).unwrap().unwrap(), a);
        assert_eq!(read_tensor(&mut r).unwrap().unwrap(), b);
        assert!(read_tensor(&mut r).unwrap().is_none());
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut buf = Vec::new();
        write_tensor(&mut buf, &Tensor::ones(&[3])).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_tensor(&mut bad.as_slice()), Err(TensorError::Format(_))));
        buf.truncate(buf.len() - 3);
        assert!(read_tensor(&mut buf.as_slice()).is_err());
    }
}
