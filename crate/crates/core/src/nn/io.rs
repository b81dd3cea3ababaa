//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic          8 bytes  "GMNETCKP"
//! format_version u32
//! dtype          u8       4 = f32, 8 = f64
//! spec           u32 length + UTF-8 JSON
//! train_meta     u32 length + UTF-8 JSON
//! array count    u32
//! per array:     u16 name length + name, u8 ndim, u32 per dim,
//!                then prod(dims) values of `dtype` width
//! ```
//!
//! Arrays appear in layer order, weight before bias.

use std::path::Path;

use super::network::{Checkpoint, LayerParams, ParamArray, TrainMeta, FORMAT_VERSION};
use super::real::{DType, Real};
use super::spec::NetworkSpec;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"GMNETCKP";

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn encode_checkpoint<T: Real>(ckpt: &Checkpoint<T>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, ckpt.format_version);
    out.push(T::DTYPE.tag());
    for json in [serde_json::to_vec(&ckpt.spec)?, serde_json::to_vec(&ckpt.train_meta)?] {
        put_u32(&mut out, json.len() as u32);
        out.extend_from_slice(&json);
    }
    put_u32(&mut out, (ckpt.params.len() * 2) as u32);
    for array in ckpt.params.iter().flat_map(|p| [&p.weight, &p.bias]) {
        let name = array.name.as_bytes();
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        out.push(array.shape.len() as u8);
        for &d in &array.shape {
            put_u32(&mut out, d as u32);
        }
        for &v in &array.data {
            v.write_le(&mut out);
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::CorruptCheckpoint(format!(
                "truncated at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn json<V: serde::de::DeserializeOwned>(&mut self, what: &str) -> Result<V> {
        let len = self.u32()? as usize;
        serde_json::from_slice(self.take(len)?)
            .map_err(|e| Error::CorruptCheckpoint(format!("bad {what} section: {e}")))
    }
}

/// Stored precision of an encoded checkpoint, without decoding the arrays.
pub fn peek_dtype(bytes: &[u8]) -> Result<DType> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::CorruptCheckpoint("bad magic".into()));
    }
    r.u32()?;
    let tag = r.u8()?;
    DType::from_tag(tag).ok_or_else(|| Error::CorruptCheckpoint(format!("unknown dtype tag {tag}")))
}

pub fn decode_checkpoint<T: Real>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::CorruptCheckpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let tag = r.u8()?;
    let dtype = DType::from_tag(tag).ok_or_else(|| Error::CorruptCheckpoint(format!("unknown dtype tag {tag}")))?;
    if dtype != T::DTYPE {
        return Err(Error::InvalidParameter(format!(
            "checkpoint stores {dtype:?} values, requested {:?}",
            T::DTYPE
        )));
    }
    let spec: NetworkSpec = r.json("spec")?;
    let train_meta: TrainMeta = r.json("train_meta")?;
    let count = r.u32()? as usize;
    if count % 2 != 0 {
        return Err(Error::CorruptCheckpoint(format!("odd array count {count}")));
    }
    let mut arrays = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::CorruptCheckpoint("array name is not UTF-8".into()))?
            .to_string();
        let ndim = r.u8()? as usize;
        let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let width = dtype.width();
        let raw = r.take(n.checked_mul(width).ok_or_else(|| Error::CorruptCheckpoint("array too large".into()))?)?;
        let data = raw.chunks_exact(width).map(T::read_le).collect();
        arrays.push(ParamArray { name, shape, data });
    }
    if r.pos != bytes.len() {
        return Err(Error::CorruptCheckpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }

    let mut params = Vec::with_capacity(count / 2);
    let mut it = arrays.into_iter();
    while let (Some(weight), Some(bias)) = (it.next(), it.next()) {
        let layer = weight
            .name
            .strip_suffix(".weight")
            .ok_or_else(|| Error::CorruptCheckpoint(format!("expected a weight array, found {}", weight.name)))?
            .to_string();
        if bias.name != format!("{layer}.bias") {
            return Err(Error::CorruptCheckpoint(format!("expected {layer}.bias, found {}", bias.name)));
        }
        params.push(LayerParams { layer, weight, bias });
    }
    let ckpt = Checkpoint {
        spec,
        params,
        format_version: version,
        train_meta,
    };
    ckpt.validate()?;
    Ok(ckpt)
}

pub fn save_checkpoint<T: Real>(ckpt: &Checkpoint<T>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_checkpoint(ckpt)?)?;
    Ok(())
}

pub fn load_checkpoint<T: Real>(path: impl AsRef<Path>) -> Result<Checkpoint<T>> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    decode_checkpoint(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::network::init_network;

    fn sample() -> Checkpoint<f32> {
        let mut ck = init_network::<f32>(&NetworkSpec::gammanet_s(16, 16, 3), 4).unwrap();
        ck.train_meta.labels = vec!["a".into(), "b".into(), "c".into()];
        ck.train_meta.extra.insert("task".into(), "asr".into());
        ck
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let bytes = encode_checkpoint(&ck).unwrap();
        assert_eq!(decode_checkpoint::<f32>(&bytes).unwrap(), ck);
        let ck64 = ck.convert::<f64>();
        let bytes64 = encode_checkpoint(&ck64).unwrap();
        assert_eq!(peek_dtype(&bytes64).unwrap(), DType::F64);
        assert_eq!(decode_checkpoint::<f64>(&bytes64).unwrap(), ck64);
    }

    #[test]
    fn truncation_is_a_corrupt_container() {
        let bytes = encode_checkpoint(&sample()).unwrap();
        for cut in [3, 8, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                matches!(decode_checkpoint::<f32>(&bytes[..cut]), Err(Error::CorruptCheckpoint(_))),
                "cut at {cut}"
            );
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(decode_checkpoint::<f32>(&extra), Err(Error::CorruptCheckpoint(_))));
    }

    #[test]
    fn version_is_checked() {
        let mut bytes = encode_checkpoint(&sample()).unwrap();
        bytes[8] = 99;
        assert!(matches!(
            decode_checkpoint::<f32>(&bytes),
            Err(Error::VersionMismatch { found: 99, expected: FORMAT_VERSION })
        ));
    }

    #[test]
    fn precision_is_checked() {
        let bytes = encode_checkpoint(&sample()).unwrap();
        assert!(matches!(decode_checkpoint::<f64>(&bytes), Err(Error::InvalidParameter(_))));
    }
}
