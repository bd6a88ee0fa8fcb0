//! Bit-exact binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   [u8; 8]  = b"RCLABCK1"
//! version u32
//! meta    u32 length + UTF-8 JSON payload (caller-defined metadata)
//! nets    u32 count, then per network:
//!           name    u32 length + UTF-8
//!           layers  u32 count, then per layer:
//!             in u32, out u32, activation u8,
//!             weights out*in f64 LE, bias out f64 LE
//! opts    u32 count, then per optimizer state:
//!           name u32 length + UTF-8
//!           step u64, beta1 f64, beta2 f64, eps f64,
//!           len u32, m blob, v blob (f64 LE each)
//! ```
//!
//! Parameters are stored as raw `f64` bits, so save/load round-trips are
//! bit-exact.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::adam::OptimizerState;
use crate::nn::dense::{Activation, DenseNetwork, Layer};

const MAGIC: &[u8; 8] = b"RCLABCK1";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Named networks and optimizer states plus a JSON metadata string.
#[derive(Debug, Clone, Default)]
pub struct Checkpoint {
    pub meta: String,
    pub nets: BTreeMap<String, DenseNetwork>,
    pub opts: BTreeMap<String, OptimizerState>,
}

impl Checkpoint {
    pub fn new(meta: String) -> Self {
        Checkpoint {
            meta,
            nets: BTreeMap::new(),
            opts: BTreeMap::new(),
        }
    }

    pub fn insert_net(&mut self, name: &str, net: &DenseNetwork) {
        self.nets.insert(name.to_string(), net.clone());
    }

    pub fn insert_opt(&mut self, name: &str, opt: &OptimizerState) {
        self.opts.insert(name.to_string(), opt.clone());
    }

    pub fn net(&self, name: &str) -> Result<DenseNetwork> {
        self.nets
            .get(name)
            .cloned()
            .ok_or_else(|| Error::Checkpoint(format!("missing network '{name}'")))
    }

    pub fn opt(&self, name: &str) -> Result<OptimizerState> {
        self.opts
            .get(name)
            .cloned()
            .ok_or_else(|| Error::Checkpoint(format!("missing optimizer state '{name}'")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        write_str(&mut w, &self.meta)?;

        w.write_all(&(self.nets.len() as u32).to_le_bytes())?;
        for (name, net) in &self.nets {
            write_str(&mut w, name)?;
            w.write_all(&(net.layers.len() as u32).to_le_bytes())?;
            for layer in &net.layers {
                w.write_all(&(layer.in_dim as u32).to_le_bytes())?;
                w.write_all(&(layer.out_dim as u32).to_le_bytes())?;
                w.write_all(&[layer.activation.tag()])?;
                write_f64s(&mut w, &layer.w)?;
                write_f64s(&mut w, &layer.b)?;
            }
        }

        w.write_all(&(self.opts.len() as u32).to_le_bytes())?;
        for (name, opt) in &self.opts {
            write_str(&mut w, name)?;
            w.write_all(&opt.step.to_le_bytes())?;
            w.write_all(&opt.beta1.to_le_bytes())?;
            w.write_all(&opt.beta2.to_le_bytes())?;
            w.write_all(&opt.eps.to_le_bytes())?;
            w.write_all(&(opt.m.len() as u32).to_le_bytes())?;
            write_f64s(&mut w, &opt.m)?;
            write_f64s(&mut w, &opt.v)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint(format!(
                "bad magic in {}",
                path.display()
            )));
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "version {version} unsupported (expected {CHECKPOINT_VERSION})"
            )));
        }
        let meta = read_str(&mut r)?;

        let mut nets = BTreeMap::new();
        for _ in 0..read_u32(&mut r)? {
            let name = read_str(&mut r)?;
            let n_layers = read_u32(&mut r)? as usize;
            let mut layers = Vec::with_capacity(n_layers);
            for _ in 0..n_layers {
                let in_dim = read_u32(&mut r)? as usize;
                let out_dim = read_u32(&mut r)? as usize;
                let mut tag = [0u8; 1];
                r.read_exact(&mut tag)?;
                let activation = Activation::from_tag(tag[0])?;
                let w = read_f64s(&mut r, in_dim * out_dim)?;
                let b = read_f64s(&mut r, out_dim)?;
                layers.push(Layer {
                    w,
                    b,
                    in_dim,
                    out_dim,
                    activation,
                });
            }
            nets.insert(name, DenseNetwork { layers });
        }

        let mut opts = BTreeMap::new();
        for _ in 0..read_u32(&mut r)? {
            let name = read_str(&mut r)?;
            let mut step = [0u8; 8];
            r.read_exact(&mut step)?;
            let beta1 = read_f64(&mut r)?;
            let beta2 = read_f64(&mut r)?;
            let eps = read_f64(&mut r)?;
            let len = read_u32(&mut r)? as usize;
            let m = read_f64s(&mut r, len)?;
            let v = read_f64s(&mut r, len)?;
            opts.insert(
                name,
                OptimizerState {
                    m,
                    v,
                    step: u64::from_le_bytes(step),
                    beta1,
                    beta2,
                    eps,
                },
            );
        }

        Ok(Checkpoint { meta, nets, opts })
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn write_f64s<W: Write>(w: &mut W, xs: &[f64]) -> Result<()> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(read_f64(r)?);
    }
    Ok(out)
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Checkpoint(format!("bad utf8: {e}")))
}
