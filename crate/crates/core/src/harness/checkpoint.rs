//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "OCTNCKPT"
//! version    u32
//! arch hash  64 bytes (hex SHA-256 of the shape-determining config fields)
//! config     u64 length + UTF-8 TOML of the full configuration
//! params     u64 tensor count, then per tensor: u64 length + f64 values
//! buffers    u64 count, then per buffer: u64 length + f64 values + u64 observed
//! checksum   32 bytes SHA-256 of everything above
//! ```
//!
//! Values are widened to `f64`, so `f32` networks round-trip exactly too.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::network::{Network, NetworkConfig};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"OCTNCKPT";
pub const VERSION: u32 = 1;
const HASH_LEN: usize = 64;
const CHECKSUM_LEN: usize = 32;

pub fn encode<T: Scalar>(net: &mut Network<T>) -> Result<Vec<u8>> {
    let cfg = net.config().clone();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(cfg.architecture_hash().as_bytes());
    let toml = cfg.to_toml()?;
    put_u64(&mut out, toml.len() as u64);
    out.extend_from_slice(toml.as_bytes());

    let mut params = Vec::new();
    net.visit_params(&mut |_, p, _| params.push(p.iter().map(|v| v.as_f64()).collect::<Vec<_>>()));
    put_u64(&mut out, params.len() as u64);
    for p in &params {
        put_values(&mut out, p);
    }

    let mut buffers = Vec::new();
    net.visit_buffers(&mut |b, observed| buffers.push((b.iter().map(|v| v.as_f64()).collect::<Vec<_>>(), *observed)));
    put_u64(&mut out, buffers.len() as u64);
    for (b, observed) in &buffers {
        put_values(&mut out, b);
        put_u64(&mut out, *observed);
    }

    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

pub fn save<T: Scalar>(net: &mut Network<T>, path: &Path) -> Result<()> {
    fs::write(path, encode(net)?)?;
    Ok(())
}

/// Checks framing, checksum and version, returning the embedded
/// configuration and a reader positioned at the parameter payload.
fn open(bytes: &[u8]) -> Result<(NetworkConfig, String, Reader<'_>)> {
    let min = MAGIC.len() + 4 + HASH_LEN + 8 + CHECKSUM_LEN;
    if bytes.len() < min || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Format("not a checkpoint file".into()));
    }
    let (body, sum) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    if Sha256::digest(body).as_slice() != sum {
        return Err(Error::Checksum);
    }
    let mut r = Reader { bytes: body, pos: MAGIC.len() };
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Incompatible(format!("checkpoint version {version}, expected {VERSION}")));
    }
    let hash = String::from_utf8(r.take(HASH_LEN)?.to_vec())
        .map_err(|_| Error::Format("architecture hash is not ASCII".into()))?;
    let n = r.u64()? as usize;
    let toml = std::str::from_utf8(r.take(n)?).map_err(|_| Error::Format("embedded config is not UTF-8".into()))?;
    Ok((NetworkConfig::from_toml(toml)?, hash, r))
}

/// Configuration stored in a checkpoint.
pub fn read_config(path: &Path) -> Result<NetworkConfig> {
    Ok(open(&fs::read(path)?)?.0)
}

/// Restores parameters and running statistics into `net`, which must have
/// the architecture the checkpoint was written from.
pub fn decode_into<T: Scalar>(net: &mut Network<T>, bytes: &[u8]) -> Result<()> {
    let (_, hash, mut r) = open(bytes)?;
    let expected = net.config().architecture_hash();
    if hash != expected {
        return Err(Error::Incompatible(format!(
            "checkpoint architecture {} does not match network {}",
            &hash[..12],
            &expected[..12]
        )));
    }
    let mut params = Vec::new();
    for _ in 0..r.u64()? {
        params.push(r.values()?);
    }
    let mut buffers = Vec::new();
    for _ in 0..r.u64()? {
        let v = r.values()?;
        buffers.push((v, r.u64()?));
    }
    if r.pos != r.bytes.len() {
        return Err(Error::Format("trailing bytes in checkpoint payload".into()));
    }

    let mut shapes = Vec::new();
    net.visit_params(&mut |_, p, _| shapes.push(p.len()));
    let mut buf_shapes = Vec::new();
    net.visit_buffers(&mut |b, _| buf_shapes.push(b.len()));
    let fits = shapes.len() == params.len()
        && buf_shapes.len() == buffers.len()
        && shapes.iter().zip(&params).all(|(&n, p)| n == p.len())
        && buf_shapes.iter().zip(&buffers).all(|(&n, (b, _))| n == b.len());
    if !fits {
        return Err(Error::Incompatible("checkpoint tensor layout does not match network".into()));
    }

    let mut i = 0;
    net.visit_params(&mut |_, p, _| {
        p.iter_mut().zip(&params[i]).for_each(|(d, &s)| *d = T::lit(s));
        i += 1;
    });
    let mut j = 0;
    net.visit_buffers(&mut |b, observed| {
        b.iter_mut().zip(&buffers[j].0).for_each(|(d, &s)| *d = T::lit(s));
        *observed = buffers[j].1;
        j += 1;
    });
    Ok(())
}

pub fn load_into<T: Scalar>(net: &mut Network<T>, path: &Path) -> Result<()> {
    decode_into(net, &fs::read(path)?)
}

/// Rebuilds a network from the embedded configuration and restores it.
pub fn load<T: Scalar>(path: &Path) -> Result<Network<T>> {
    let bytes = fs::read(path)?;
    let (cfg, _, _) = open(&bytes)?;
    let mut net = Network::build(&cfg)?;
    decode_into(&mut net, &bytes)?;
    Ok(net)
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_values(out: &mut Vec<u8>, v: &[f64]) {
    put_u64(out, v.len() as u64);
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("checkpoint truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn values(&mut self) -> Result<Vec<f64>> {
        let n = self.u64()? as usize;
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("tensor length overflow".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}
