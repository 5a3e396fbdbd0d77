//! Binary checkpoint files.
//!
//! Layout: the magic bytes `ANOSEQ1\n`, a text header of `key=value` lines
//! ended by an empty line, then for each tensor: name length, name bytes,
//! rank, each dimension (all little-endian `u32`), and the values as
//! little-endian `f32`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{NetError, Result};
use crate::network::Network;
use crate::spec::NetSpec;

pub const MAGIC: &[u8; 8] = b"ANOSEQ1\n";

#[derive(Debug, Clone, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub header: BTreeMap<String, String>,
    pub tensors: Vec<TensorRecord>,
}

fn bad(msg: impl Into<String>) -> NetError {
    NetError::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn push_tensor(&mut self, name: &str, shape: &[usize], values: &[f64]) {
        self.tensors.push(TensorRecord {
            name: name.to_string(),
            shape: shape.to_vec(),
            values: values.iter().map(|&v| v as f32).collect(),
        });
    }

    pub fn tensor(&self, name: &str) -> Option<&TensorRecord> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.header
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| bad(format!("missing header key {key}")))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        let mut header = self.header.clone();
        header.insert("tensor_count".into(), self.tensors.len().to_string());
        for (k, v) in &header {
            if k.contains('=') || k.contains('\n') || v.contains('\n') || k.is_empty() {
                return Err(bad(format!("header entry {k:?} is not representable")));
            }
            writeln!(w, "{k}={v}")?;
        }
        w.write_all(b"\n")?;
        for t in &self.tensors {
            let n: usize = t.shape.iter().product();
            if n != t.values.len() {
                return Err(bad(format!("tensor {} shape/value mismatch", t.name)));
            }
            w.write_all(&(t.name.len() as u32).to_le_bytes())?;
            w.write_all(t.name.as_bytes())?;
            w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
            for &d in &t.shape {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            for &v in &t.values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("bad magic bytes"));
        }
        let mut header = BTreeMap::new();
        loop {
            let mut line = String::new();
            if r.read_line(&mut line)? == 0 {
                return Err(bad("truncated header"));
            }
            let line = line.trim_end_matches('\n');
            if line.is_empty() {
                break;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("malformed header line {line:?}")))?;
            header.insert(k.to_string(), v.to_string());
        }
        let count: usize = header
            .get("tensor_count")
            .ok_or_else(|| bad("missing tensor_count"))?
            .parse()
            .map_err(|_| bad("tensor_count is not an integer"))?;

        let read_u32 = |r: &mut BufReader<R>| -> Result<u32> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b))
        };
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| bad("tensor name is not UTF-8"))?;
            let rank = read_u32(&mut r)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(read_u32(&mut r)? as usize);
            }
            let n: usize = shape.iter().product();
            let mut raw = vec![0u8; n * 4];
            r.read_exact(&mut raw)?;
            let values = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push(TensorRecord {
                name,
                shape,
                values,
            });
        }
        header.remove("tensor_count");
        Ok(Self { header, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(fs::File::open(path)?)
    }
}

impl Network {
    /// Header carries `spec_hash` and the spec itself so loading needs no
    /// outside knowledge of the architecture.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        ck.header.insert("spec_hash".into(), self.spec().hash());
        ck.header.insert("netspec".into(), self.spec().to_json());
        for p in self.params() {
            ck.push_tensor(&p.name, &p.shape, &p.values);
        }
        ck
    }

    /// Rebuilds a network from a checkpoint written by [`Network::to_checkpoint`].
    /// Tensors not belonging to the network are ignored.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Network> {
        let spec: NetSpec = serde_json::from_str(ck.get("netspec")?)
            .map_err(|e| bad(format!("netspec: {e}")))?;
        if spec.hash() != ck.get("spec_hash")? {
            return Err(bad("spec hash mismatch"));
        }
        let mut net = Network::new(spec)?;
        for p in net.params_mut() {
            let t = ck
                .tensor(&p.name)
                .ok_or_else(|| bad(format!("missing tensor {}", p.name)))?;
            if t.shape != p.shape {
                return Err(bad(format!(
                    "tensor {} has shape {:?}, expected {:?}",
                    p.name, t.shape, p.shape
                )));
            }
            for (dst, &src) in p.values.iter_mut().zip(&t.values) {
                *dst = src as f64;
            }
        }
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::spec::{Activation, LayerSpec};

    #[test]
    fn header_layout_is_literal() {
        let mut ck = Checkpoint::default();
        ck.header.insert("spec_hash".into(), "abc".into());
        ck.push_tensor("w", &[2], &[1.0, -2.0]);
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        let expected_prefix = b"ANOSEQ1\nspec_hash=abc\ntensor_count=1\n\n";
        assert_eq!(&buf[..expected_prefix.len()], expected_prefix);
        let rest = &buf[expected_prefix.len()..];
        assert_eq!(&rest[0..4], &1u32.to_le_bytes());
        assert_eq!(&rest[4..5], b"w");
        assert_eq!(&rest[5..9], &1u32.to_le_bytes());
        assert_eq!(&rest[9..13], &2u32.to_le_bytes());
        assert_eq!(&rest[13..17], &1.0f32.to_le_bytes());
        assert_eq!(&rest[17..21], &(-2.0f32).to_le_bytes());
        assert_eq!(rest.len(), 21);
        assert_eq!(Checkpoint::read_from(&buf[..]).unwrap(), ck);
    }

    #[test]
    fn network_round_trip_within_f32() {
        let spec = NetSpec::new(
            vec![
                LayerSpec::Dense {
                    input: 3,
                    output: 8,
                    activation: Activation::Relu,
                },
                LayerSpec::EncoderBlock {
                    width: 8,
                    heads: 2,
                    ff_width: 16,
                },
                LayerSpec::Dense {
                    input: 8,
                    output: 3,
                    activation: Activation::Identity,
                },
            ],
            5,
        );
        let net = Network::new(spec).unwrap();
        let mut buf = Vec::new();
        net.to_checkpoint().write_to(&mut buf).unwrap();
        let back = Network::from_checkpoint(&Checkpoint::read_from(&buf[..]).unwrap()).unwrap();
        let x = Matrix::from_rows(&[[0.1, 0.2, 0.3], [-0.5, 0.0, 1.0]]);
        let a = net.forward(&x).unwrap();
        let b = back.forward(&x).unwrap();
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((u - v).abs() < 1e-5);
        }
    }

    #[test]
    fn corrupted_inputs_rejected() {
        assert!(Checkpoint::read_from(&b"NOTMAGIC"[..]).is_err());
        assert!(Checkpoint::read_from(&b"ANOSEQ1\nspec_hash=x\n"[..]).is_err());
        let net = Network::new(NetSpec::mlp(2, &[], 1, Activation::Relu, Activation::Identity, 0))
            .unwrap();
        let mut ck = net.to_checkpoint();
        ck.header.insert("spec_hash".into(), "deadbeef".into());
        assert!(Network::from_checkpoint(&ck).is_err());
    }
}
