//! Self-describing binary weights file.
//!
//! Layout: magic, format version, depth, width, input length, then each
//! named array (name, shape, values as little-endian 8-byte reals), and a
//! trailing SHA-256 over everything before it.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::tensor::ParamStore;
use crate::{Error, Result};

use super::{array_specs, Model, ModelConfig};

const MAGIC: &[u8; 8] = b"SEIZRWTS";
const VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;

pub fn save_weights(model: &Model, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let config = model.config();
    buf.extend_from_slice(&(config.depth as u32).to_le_bytes());
    buf.extend_from_slice(&(config.width as u32).to_le_bytes());
    buf.extend_from_slice(&(config.input_length as u32).to_le_bytes());
    buf.extend_from_slice(&(model.params().len() as u32).to_le_bytes());
    for (_, array) in model.params().iter() {
        let name = array.name().as_bytes();
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name);
        buf.push(array.shape().len() as u8);
        for dim in array.shape() {
            buf.extend_from_slice(&(*dim as u32).to_le_bytes());
        }
        for v in array.values() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    std::fs::write(path, buf)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::InvalidData("weights file truncated".into()));
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn read_u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn read_u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn read_u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

pub fn load_weights(path: &Path) -> Result<Model> {
    let buf = std::fs::read(path)?;
    if buf.len() < MAGIC.len() + 4 + CHECKSUM_LEN {
        return Err(Error::InvalidData("weights file truncated".into()));
    }
    if &buf[..MAGIC.len()] != MAGIC {
        return Err(Error::InvalidData("not a weights file (bad magic)".into()));
    }
    let body = &buf[..buf.len() - CHECKSUM_LEN];
    let stored = &buf[buf.len() - CHECKSUM_LEN..];
    let digest = Sha256::digest(body);
    if digest.as_slice() != stored {
        return Err(Error::InvalidData("weights file checksum mismatch".into()));
    }

    let mut r = Reader { buf: body, pos: MAGIC.len() };
    let version = r.read_u32()?;
    if version != VERSION {
        return Err(Error::InvalidData(format!(
            "unsupported weights format version {version} (expected {VERSION})"
        )));
    }
    let depth = r.read_u32()? as usize;
    let width = r.read_u32()? as usize;
    let input_length = r.read_u32()? as usize;
    let config = ModelConfig::new(depth, width)?.with_input_length(input_length)?;
    let specs = array_specs(&config);
    let array_count = r.read_u32()? as usize;
    if array_count != specs.len() {
        return Err(Error::InvalidData(format!(
            "weights file lists {array_count} arrays, config expects {}",
            specs.len()
        )));
    }

    let mut params = ParamStore::new();
    for spec in &specs {
        let name_len = r.read_u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::InvalidData("weights file has a non-utf8 array name".into()))?
            .to_string();
        let ndim = r.read_u8()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        let mut count: usize = 1;
        for _ in 0..ndim {
            let dim = r.read_u32()? as usize;
            count = count
                .checked_mul(dim)
                .ok_or_else(|| Error::InvalidData("weights file shape overflows".into()))?;
            shape.push(dim);
        }
        if name != spec.0 || shape != spec.1 {
            return Err(Error::InvalidData(format!(
                "weights file array {name} {shape:?} does not match expected {} {:?}",
                spec.0, spec.1
            )));
        }
        let raw = r.take(count * 8)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params.push(&name, &shape, values, spec.2)?;
    }
    if r.pos != body.len() {
        return Err(Error::InvalidData("weights file has trailing data".into()));
    }
    Model::from_params(config, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;

    fn resign(buf: &mut Vec<u8>) {
        let body_len = buf.len() - CHECKSUM_LEN;
        let digest = Sha256::digest(&buf[..body_len]);
        buf[body_len..].copy_from_slice(&digest);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nano.wts");
        let model = Model::build(ModelConfig::variant(Variant::Nano), 77).unwrap();
        save_weights(&model, &path).unwrap();
        let loaded = load_weights(&path).unwrap();
        assert_eq!(loaded.config(), model.config());
        for ((_, a), (_, b)) in model.params().iter().zip(loaded.params().iter()) {
            assert_eq!(a.name(), b.name());
            assert_eq!(a.shape(), b.shape());
            assert_eq!(a.decays(), b.decays());
            let bits_a: Vec<u64> = a.values().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = b.values().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
    }

    #[test]
    fn truncated_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wts");
        let model = Model::build(ModelConfig::variant(Variant::Nano), 1).unwrap();
        save_weights(&model, &path).unwrap();
        let mut buf = std::fs::read(&path).unwrap();
        buf.truncate(buf.len() / 2);
        std::fs::write(&path, &buf).unwrap();
        assert!(load_weights(&path).is_err());
    }

    #[test]
    fn corrupted_value_rejected_by_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.wts");
        let model = Model::build(ModelConfig::variant(Variant::Nano), 2).unwrap();
        save_weights(&model, &path).unwrap();
        let mut buf = std::fs::read(&path).unwrap();
        let mid = buf.len() / 2;
        buf[mid] ^= 0xff;
        std::fs::write(&path, &buf).unwrap();
        let err = load_weights(&path).unwrap_err();
        assert!(err.to_string().contains("checksum"));
    }

    #[test]
    fn wrong_shape_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.wts");
        let model = Model::build(ModelConfig::variant(Variant::Nano), 3).unwrap();
        save_weights(&model, &path).unwrap();
        let mut buf = std::fs::read(&path).unwrap();
        // first array header sits right after the fixed 24-byte prefix:
        // name_len(2) + "stem.weight"(11) + ndim(1), then the first dim
        let dim_pos = 24 + 2 + 11 + 1;
        buf[dim_pos] = buf[dim_pos].wrapping_add(1);
        resign(&mut buf);
        std::fs::write(&path, &buf).unwrap();
        let err = load_weights(&path).unwrap_err();
        assert!(err.to_string().contains("does not match expected"), "{err}");
    }

    #[test]
    fn bad_magic_and_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.wts");
        let model = Model::build(ModelConfig::variant(Variant::Nano), 4).unwrap();
        save_weights(&model, &path).unwrap();
        let good = std::fs::read(&path).unwrap();

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        std::fs::write(&path, &bad_magic).unwrap();
        assert!(load_weights(&path).unwrap_err().to_string().contains("magic"));

        let mut bad_version = good.clone();
        bad_version[8] = 99;
        resign(&mut bad_version);
        std::fs::write(&path, &bad_version).unwrap();
        assert!(load_weights(&path).unwrap_err().to_string().contains("version"));
    }
}
