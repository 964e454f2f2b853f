//! Raw tensor file format "RDT1".
//!
//! Layout: magic `RDT1`, u32 dtype code (0 = f32, 1 = f64), u32 rank,
//! rank × u64 extents, then the little-endian payload. Bit-exact round trip.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{DType, Elem, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RDT1";

pub fn write_tensor<T: Elem, W: Write>(w: &mut W, t: &Tensor<T>) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&T::DTYPE.code().to_le_bytes())?;
    w.write_all(&(t.rank() as u32).to_le_bytes())?;
    for &e in t.shape() {
        w.write_all(&(e as u64).to_le_bytes())?;
    }
    for &v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tensor<T: Elem, R: Read>(r: &mut R) -> Result<Tensor<T>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::invalid("rdt file", "bad magic bytes"));
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)?;
    let code = u32::from_le_bytes(buf4);
    let dtype = DType::from_code(code)
        .ok_or_else(|| Error::invalid("rdt file", format!("unknown dtype code {code}")))?;
    if dtype != T::DTYPE {
        return Err(Error::invalid(
            "rdt file",
            format!("dtype mismatch: file has {:?}, expected {:?}", dtype, T::DTYPE),
        ));
    }
    r.read_exact(&mut buf4)?;
    let rank = u32::from_le_bytes(buf4) as usize;
    let mut shape = Vec::with_capacity(rank);
    let mut buf8 = [0u8; 8];
    for _ in 0..rank {
        r.read_exact(&mut buf8)?;
        shape.push(u64::from_le_bytes(buf8) as usize);
    }
    let numel: usize = shape.iter().product();
    let width = T::byte_width();
    let mut payload = vec![0u8; numel * width];
    r.read_exact(&mut payload)?;
    let data: Vec<T> = payload
        .chunks_exact(width)
        .map(|c| T::from_le_slice(c))
        .collect();
    Tensor::from_vec(data, &shape)
}

pub fn save<T: Elem>(path: impl AsRef<Path>, t: &Tensor<T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tensor(&mut w, t)?;
    w.flush()?;
    Ok(())
}

pub fn load<T: Elem>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    let mut r = BufReader::new(File::open(path)?);
    read_tensor(&mut r)
}

pub fn to_bytes<T: Elem>(t: &Tensor<T>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_tensor(&mut buf, t)?;
    Ok(buf)
}

pub fn from_bytes<T: Elem>(bytes: &[u8]) -> Result<Tensor<T>> {
    let mut cursor = bytes;
    read_tensor(&mut cursor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let t = Tensor::from_vec(vec![0.0f32, -1.5, 3.25e-8, f32::MIN_POSITIVE], &[2, 2]).unwrap();
        let bytes = to_bytes(&t).unwrap();
        let back: Tensor<f32> = from_bytes(&bytes).unwrap();
        assert_eq!(back.shape(), t.shape());
        for (a, b) in back.data().iter().zip(t.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        // Encoding twice gives identical bytes.
        assert_eq!(bytes, to_bytes(&back).unwrap());
    }

    #[test]
    fn dtype_mismatch_is_an_error() {
        let t = Tensor::from_vec(vec![1.0f64], &[1]).unwrap();
        let bytes = to_bytes(&t).unwrap();
        assert!(from_bytes::<f32>(&bytes).is_err());
    }

    #[test]
    fn header_layout_is_pinned() {
        let t = Tensor::from_vec(vec![1.0f32, 2.0], &[1, 2]).unwrap();
        let bytes = to_bytes(&t).unwrap();
        assert_eq!(&bytes[0..4], b"RDT1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 0); // f32
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2); // rank
        assert_eq!(u64::from_le_bytes(bytes[12..20].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[20..28].try_into().unwrap()), 2);
        assert_eq!(bytes.len(), 28 + 8);
    }
}
