//! Binary checkpoint container:
//!
//! ```text
//! magic "ZSNETCK1" | u32 version | u8 dtype | u32 len + network config (TOML)
//! u32 n_tensors | per tensor: u32 len + name, u8 rank, u64 dims.., raw LE data
//! u8 has_optimizer | [u32 len + optimizer config (TOML), u64 step, first and second moments]
//! ```
//!
//! All integers are little endian.

use super::{Adam, AdamConfig, EmbedAccdoaNet, NetError, NetworkConfig, ParamSet};
use crate::scalar::{dtype_size, DType, Scalar};
use ndarray::{ArrayD, IxDyn};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"ZSNETCK1";
const VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct Checkpoint<T> {
    pub net: EmbedAccdoaNet<T>,
    pub optimizer: Option<Adam<T>>,
}

fn err(msg: impl Into<String>) -> NetError {
    NetError::Checkpoint(msg.into())
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_tensors<T: Scalar>(out: &mut Vec<u8>, set: &ParamSet<T>, with_names: bool) {
    for (name, v) in set.iter() {
        if with_names {
            put_str(out, name);
            out.push(v.ndim() as u8);
            for &d in v.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
        }
        for &x in v.iter() {
            x.write_le(out);
        }
    }
}

/// Serialises a network and, optionally, its optimizer state.
pub fn write_checkpoint<T: Scalar, W: Write>(w: &mut W, net: &EmbedAccdoaNet<T>, optimizer: Option<&Adam<T>>) -> Result<(), NetError> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(T::DTYPE.tag());
    let cfg = toml::to_string(net.config()).map_err(|e| err(e.to_string()))?;
    put_str(&mut out, &cfg);
    out.extend_from_slice(&(net.params().len() as u32).to_le_bytes());
    put_tensors(&mut out, net.params(), true);
    match optimizer {
        None => out.push(0),
        Some(opt) => {
            out.push(1);
            let oc = toml::to_string(&opt.config).map_err(|e| err(e.to_string()))?;
            put_str(&mut out, &oc);
            out.extend_from_slice(&opt.step.to_le_bytes());
            put_tensors(&mut out, &opt.m, false);
            put_tensors(&mut out, &opt.v, false);
        }
    }
    w.write_all(&out)?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NetError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(err(format!("truncated at byte {}", self.pos))),
        }
    }

    fn u8(&mut self) -> Result<u8, NetError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, NetError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, NetError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String, NetError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| err("invalid UTF-8 string"))
    }

    fn data<T: Scalar>(&mut self, shape: &[usize]) -> Result<ArrayD<T>, NetError> {
        let len: usize = shape.iter().product();
        let size = dtype_size(T::DTYPE);
        let bytes = self.take(len.checked_mul(size).ok_or_else(|| err("tensor too large"))?)?;
        let values = bytes.chunks_exact(size).map(T::read_le).collect();
        ArrayD::from_shape_vec(IxDyn(shape), values).map_err(|e| err(e.to_string()))
    }
}

/// Reads a checkpoint written with the same scalar type.
pub fn read_checkpoint<T: Scalar, R: Read>(r: &mut R) -> Result<Checkpoint<T>, NetError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(MAGIC.len()).ok() != Some(&MAGIC[..]) {
        return Err(err("not a checkpoint file (bad magic)"));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(err(format!("unsupported version {version}")));
    }
    let dtype = DType::from_tag(c.u8()?).ok_or_else(|| err("unknown scalar type tag"))?;
    if dtype != T::DTYPE {
        return Err(err(format!(
            "checkpoint holds {} parameters, {} requested",
            dtype.name(),
            T::DTYPE.name()
        )));
    }
    let config: NetworkConfig = toml::from_str(&c.string()?).map_err(|e| err(format!("config: {e}")))?;
    let n = c.u32()? as usize;
    let mut params = ParamSet::new();
    for _ in 0..n {
        let name = c.string()?;
        let rank = c.u8()? as usize;
        let shape = (0..rank).map(|_| c.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let value = c.data::<T>(&shape)?;
        params.push(name, value);
    }
    let net = EmbedAccdoaNet::from_params(config, params)?;
    let optimizer = match c.u8()? {
        0 => None,
        1 => {
            let oc: AdamConfig = toml::from_str(&c.string()?).map_err(|e| err(format!("optimizer config: {e}")))?;
            let step = c.u64()?;
            let mut opt = Adam::new(oc, net.params());
            opt.step = step;
            for set in [&mut opt.m, &mut opt.v] {
                for v in set.values_mut() {
                    *v = c.data::<T>(&v.shape().to_vec())?;
                }
            }
            Some(opt)
        }
        t => return Err(err(format!("bad optimizer flag {t}"))),
    };
    if c.pos != buf.len() {
        return Err(err(format!("{} trailing bytes", buf.len() - c.pos)));
    }
    Ok(Checkpoint { net, optimizer })
}

pub fn save_checkpoint<T: Scalar>(path: &Path, net: &EmbedAccdoaNet<T>, optimizer: Option<&Adam<T>>) -> Result<(), NetError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(&mut f, net, optimizer)?;
    f.flush()?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>, NetError> {
    read_checkpoint(&mut std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::super::model::tests::tiny_config;
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let net = EmbedAccdoaNet::<f32>::new(tiny_config(), 3).unwrap();
        let mut opt = Adam::new(AdamConfig::default(), net.params());
        opt.step = 17;
        opt.m.values_mut()[0].fill(0.125);
        opt.v.values_mut()[1].fill(1.0 / 3.0);
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &net, Some(&opt)).unwrap();
        let back = read_checkpoint::<f32, _>(&mut bytes.as_slice()).unwrap();
        assert_eq!(back.net.config(), net.config());
        assert_eq!(back.net.params(), net.params());
        let o = back.optimizer.unwrap();
        assert_eq!((o.step, &o.m, &o.v, o.config), (17, &opt.m, &opt.v, opt.config));
        let mut again = Vec::new();
        write_checkpoint(&mut again, &back.net, Some(&o)).unwrap();
        assert_eq!(again, bytes);
    }

    #[test]
    fn file_round_trip_without_optimizer() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let net = EmbedAccdoaNet::<f64>::new(tiny_config(), 4).unwrap();
        save_checkpoint(&path, &net, None).unwrap();
        let back = load_checkpoint::<f64>(&path).unwrap();
        assert_eq!(back.net.params(), net.params());
        assert!(back.optimizer.is_none());
    }

    #[test]
    fn corrupt_or_mismatched_files_are_rejected() {
        let net = EmbedAccdoaNet::<f32>::new(tiny_config(), 3).unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &net, None).unwrap();
        assert!(read_checkpoint::<f64, _>(&mut bytes.as_slice()).is_err());
        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(read_checkpoint::<f32, _>(&mut &truncated[..]), Err(NetError::Checkpoint(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_checkpoint::<f32, _>(&mut bad.as_slice()).is_err());
    }
}
