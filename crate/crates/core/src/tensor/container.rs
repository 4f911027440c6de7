//! Flat binary tensor container used for model checkpoints.
//!
//! Layout: magic `PFT1`, then per-tensor records until end of stream:
//! name length (u32 LE), name bytes (UTF-8), rank (u32 LE), extents
//! (u32 LE each), then the float32 payload in little-endian row-major
//! order.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"PFT1";

pub fn write_container<W: Write>(mut w: W, tensors: &[(String, Tensor<f32>)]) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    for (name, t) in tensors {
        let name_bytes = name.as_bytes();
        w.write_all(&(name_bytes.len() as u32).to_le_bytes())?;
        w.write_all(name_bytes)?;
        w.write_all(&(t.rank() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_container<R: Read>(mut r: R, source: &str) -> Result<Vec<(String, Tensor<f32>)>> {
    let bad = |reason: String| Error::Data(format!("{source}: {reason}"));
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(|e| Error::io(source, e))?;
    if buf.len() < 4 || &buf[..4] != MAGIC {
        return Err(bad("missing PFT1 magic".into()));
    }
    let mut pos = 4usize;
    let mut out = Vec::new();
    let take_u32 = |buf: &[u8], pos: &mut usize| -> Result<u32> {
        if *pos + 4 > buf.len() {
            return Err(bad("truncated record header".into()));
        }
        let v = u32::from_le_bytes(buf[*pos..*pos + 4].try_into().unwrap());
        *pos += 4;
        Ok(v)
    };
    while pos < buf.len() {
        let name_len = take_u32(&buf, &mut pos)? as usize;
        if pos + name_len > buf.len() {
            return Err(bad("truncated tensor name".into()));
        }
        let name = std::str::from_utf8(&buf[pos..pos + name_len])
            .map_err(|_| bad("tensor name is not UTF-8".into()))?
            .to_string();
        pos += name_len;
        let rank = take_u32(&buf, &mut pos)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(take_u32(&buf, &mut pos)? as usize);
        }
        let numel: usize = shape.iter().product();
        if pos + numel * 4 > buf.len() {
            return Err(bad(format!("truncated payload for tensor '{name}'")));
        }
        let mut data = Vec::with_capacity(numel);
        for i in 0..numel {
            data.push(f32::from_le_bytes(buf[pos + i * 4..pos + i * 4 + 4].try_into().unwrap()));
        }
        pos += numel * 4;
        let tensor = Tensor::new(shape, data)
            .map_err(|e| bad(format!("tensor '{name}' is malformed: {e}")))?;
        out.push((name, tensor));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_names_shapes_payload() {
        let tensors = vec![
            ("a.weight".to_string(), Tensor::new(vec![2, 3], vec![1.0, -2.0, 0.5, 3.25, 0.0, 9.0]).unwrap()),
            ("b".to_string(), Tensor::scalar(7.5f32)),
        ];
        let mut bytes = Vec::new();
        write_container(&mut bytes, &tensors).unwrap();
        assert_eq!(&bytes[..4], MAGIC);
        let back = read_container(bytes.as_slice(), "mem").unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].0, "a.weight");
        assert_eq!(back[0].1.shape(), &[2, 3]);
        assert_eq!(back[0].1.data(), tensors[0].1.data());
        assert!(back[1].1.is_scalar());
    }

    #[test]
    fn rejects_truncation() {
        let tensors = vec![("x".to_string(), Tensor::new(vec![4], vec![1.0; 4]).unwrap())];
        let mut bytes = Vec::new();
        write_container(&mut bytes, &tensors).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(read_container(bytes.as_slice(), "mem").is_err());
        assert!(read_container(&b"nope"[..], "mem").is_err());
    }
}
