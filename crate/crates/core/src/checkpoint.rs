//! Binary checkpoint format ("XCBM").
//!
//! Layout, all integers little-endian u32:
//!
//! ```text
//! magic "XCBM" | version | config_len | config bytes (UTF-8)
//! | tensor count | per tensor: name_len, name bytes, rank, rank dims,
//!   f32 LE payload (product of dims values)
//! ```
//!
//! The config echo is the flat key=value run configuration that produced the
//! weights, so a checkpoint is self-describing.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::profile::NamedParam;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"XCBM";
pub const VERSION: u32 = 1;

#[derive(Debug)]
pub struct CheckpointTensor {
    pub name: String,
    pub dims: Vec<u32>,
    pub data: Vec<f32>,
}

#[derive(Debug)]
pub struct Checkpoint {
    pub config: String,
    pub tensors: Vec<CheckpointTensor>,
}

impl Checkpoint {
    /// Snapshot of a parameter list (buffers included) in its stable order.
    pub fn from_params<S: Scalar>(config: impl Into<String>, params: &[NamedParam<S>]) -> Self {
        let tensors = params
            .iter()
            .map(|p| {
                let s = p.tensor.shape();
                CheckpointTensor {
                    name: p.name.clone(),
                    dims: vec![s.n as u32, s.c as u32, s.h as u32, s.w as u32],
                    data: p.tensor.data().iter().map(|v| v.to_f64c() as f32).collect(),
                }
            })
            .collect();
        Checkpoint {
            config: config.into(),
            tensors,
        }
    }

    /// Copy saved values into matching parameters. The saved and live lists
    /// must agree on order, names and shapes; the first mismatch is named.
    pub fn apply_to<S: Scalar>(&self, params: &[NamedParam<S>]) -> Result<()> {
        if self.tensors.len() != params.len() {
            return Err(Error::config(format!(
                "checkpoint holds {} tensors, model has {}",
                self.tensors.len(),
                params.len()
            )));
        }
        for (t, p) in self.tensors.iter().zip(params) {
            if t.name != p.name {
                return Err(Error::config(format!(
                    "checkpoint tensor '{}' does not match model parameter '{}'",
                    t.name, p.name
                )));
            }
            let s = p.tensor.shape();
            let dims = [s.n as u32, s.c as u32, s.h as u32, s.w as u32];
            if t.dims != dims {
                return Err(Error::config(format!(
                    "shape mismatch for '{}': checkpoint {:?}, model {:?}",
                    t.name, t.dims, dims
                )));
            }
            let mut data = p.tensor.data_mut();
            for (dst, &src) in data.iter_mut().zip(&t.data) {
                *dst = S::from_f64c(src as f64);
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        put_u32(&mut buf, VERSION);
        put_u32(&mut buf, self.config.len() as u32);
        buf.extend_from_slice(self.config.as_bytes());
        put_u32(&mut buf, self.tensors.len() as u32);
        for t in &self.tensors {
            put_u32(&mut buf, t.name.len() as u32);
            buf.extend_from_slice(t.name.as_bytes());
            put_u32(&mut buf, t.dims.len() as u32);
            let mut numel = 1u64;
            for &d in &t.dims {
                put_u32(&mut buf, d);
                numel *= d as u64;
            }
            if numel != t.data.len() as u64 {
                return Err(Error::internal(format!(
                    "tensor '{}' dims {:?} disagree with {} values",
                    t.name,
                    t.dims,
                    t.data.len()
                )));
            }
            for &v in &t.data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(fs::write(path, buf)?)
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let buf = fs::read(path)?;
        let mut pos = 0usize;
        let magic = take(&buf, &mut pos, 4, path, "magic")?;
        if magic != MAGIC {
            return Err(Error::data(format!("{}: not an XCBM checkpoint", path.display())));
        }
        let version = take_u32(&buf, &mut pos, path, "version")?;
        if version != VERSION {
            return Err(Error::data(format!(
                "{}: unsupported checkpoint version {version}",
                path.display()
            )));
        }
        let config = take_string(&buf, &mut pos, path, "config")?;
        let count = take_u32(&buf, &mut pos, path, "tensor count")? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name = take_string(&buf, &mut pos, path, "tensor name")?;
            let rank = take_u32(&buf, &mut pos, path, "rank")? as usize;
            if rank > 8 {
                return Err(Error::data(format!(
                    "{}: implausible rank {rank} for '{name}'",
                    path.display()
                )));
            }
            let mut dims = Vec::with_capacity(rank);
            let mut numel = 1usize;
            for _ in 0..rank {
                let d = take_u32(&buf, &mut pos, path, "dim")?;
                numel = numel
                    .checked_mul(d as usize)
                    .ok_or_else(|| Error::data(format!("{}: dims overflow for '{name}'", path.display())))?;
                dims.push(d);
            }
            let raw = take(&buf, &mut pos, numel * 4, path, "tensor payload")?;
            let data = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            tensors.push(CheckpointTensor { name, dims, data });
        }
        if pos != buf.len() {
            return Err(Error::data(format!(
                "{}: {} trailing bytes after byte {pos}",
                path.display(),
                buf.len() - pos
            )));
        }
        Ok(Checkpoint { config, tensors })
    }
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn take<'a>(buf: &'a [u8], pos: &mut usize, n: usize, path: &Path, what: &str) -> Result<&'a [u8]> {
    if *pos + n > buf.len() {
        return Err(Error::data(format!(
            "{}: truncated reading {what} at byte {pos} (need {n} bytes, have {})",
            path.display(),
            buf.len() - *pos
        )));
    }
    let s = &buf[*pos..*pos + n];
    *pos += n;
    Ok(s)
}

fn take_u32(buf: &[u8], pos: &mut usize, path: &Path, what: &str) -> Result<u32> {
    let b = take(buf, pos, 4, path, what)?;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

fn take_string(buf: &[u8], pos: &mut usize, path: &Path, what: &str) -> Result<String> {
    let len = take_u32(buf, pos, path, what)? as usize;
    if len > 1 << 20 {
        return Err(Error::data(format!(
            "{}: implausible {what} length {len}",
            path.display()
        )));
    }
    let raw = take(buf, pos, len, path, what)?;
    String::from_utf8(raw.to_vec())
        .map_err(|_| Error::data(format!("{}: {what} is not UTF-8", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_network, NetworkConfig};
    use crate::stdc::Variant;
    use tempfile::tempdir;

    fn tiny_model() -> crate::network::Model<f32> {
        let mut cfg = NetworkConfig::new(Variant::Stdc1, 4);
        cfg.decoder_ch = 16;
        build_network(&cfg, 11).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.xcbm");
        let m = tiny_model();
        let ck = Checkpoint::from_params("variant=stdc1\nseed=11\n", &m.params());
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.config, ck.config);
        assert_eq!(back.tensors.len(), ck.tensors.len());
        for (a, b) in ck.tensors.iter().zip(&back.tensors) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.dims, b.dims);
            assert_eq!(
                a.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                b.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
        // applying restores weights exactly
        let m2 = tiny_model();
        for p in m2.params() {
            p.tensor.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        back.apply_to(&m2.params()).unwrap();
        for (a, b) in m.params().iter().zip(m2.params().iter()) {
            assert_eq!(a.tensor.data().as_slice(), b.tensor.data().as_slice());
        }
    }

    #[test]
    fn truncation_is_a_data_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.xcbm");
        let m = tiny_model();
        Checkpoint::from_params("", &m.params()).save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 7]).unwrap();
        let err = Checkpoint::load(&path).unwrap_err().to_string();
        assert!(err.contains("truncated"), "{err}");
    }

    #[test]
    fn mismatch_names_first_offender() {
        let m = tiny_model();
        let ck = Checkpoint::from_params("", &m.params());
        let mut other_cfg = NetworkConfig::new(Variant::Stdc1, 4);
        other_cfg.decoder_ch = 32;
        let other = build_network::<f32>(&other_cfg, 0).unwrap();
        let err = ck.apply_to(&other.params()).unwrap_err().to_string();
        assert!(err.contains("mismatch") || err.contains("does not match"), "{err}");
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.xcbm");
        std::fs::write(&path, b"NOPE\x01\x00\x00\x00").unwrap();
        assert!(Checkpoint::load(&path)
            .unwrap_err()
            .to_string()
            .contains("not an XCBM"));
    }
}
