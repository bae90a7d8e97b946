use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ParamMeta {
    name: String,
    shape: Vec<usize>,
}

/// Named trainable tensors of one model.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Params<T> {
    meta: Vec<ParamMeta>,
    values: Vec<Vec<T>>,
}

/// Gradient buffers matching a [`Params`] layout.
#[derive(Clone, Debug)]
pub struct Grads<T> {
    pub(crate) values: Vec<Vec<T>>,
}

impl<T: Scalar> Grads<T> {
    pub fn zero(&mut self) {
        for g in self.values.iter_mut() {
            g.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn scale(&mut self, s: T) {
        for g in self.values.iter_mut() {
            g.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn get(&self, id: ParamId) -> &[T] {
        &self.values[id.0]
    }

    pub(crate) fn get_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.values[id.0]
    }
}

impl<T: Scalar> Params<T> {
    pub fn new() -> Self {
        Params {
            meta: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], init: Vec<T>) -> ParamId {
        assert_eq!(init.len(), shape.iter().product::<usize>(), "param init length");
        self.meta.push(ParamMeta {
            name: name.into(),
            shape: shape.to_vec(),
        });
        self.values.push(init);
        ParamId(self.values.len() - 1)
    }

    /// He-normal initialization for a weight with the given fan-in.
    pub fn add_he<R: Rng>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        gain: f64,
        rng: &mut R,
    ) -> ParamId {
        let std = gain * (2.0 / fan_in as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        let n = shape.iter().product();
        let init = (0..n).map(|_| T::lit(normal.sample(rng))).collect();
        self.add(name, shape, init)
    }

    pub fn add_const(&mut self, name: impl Into<String>, shape: &[usize], v: f64) -> ParamId {
        let n = shape.iter().product();
        self.add(name, shape, vec![T::lit(v); n])
    }

    pub fn get(&self, id: ParamId) -> &[T] {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.values[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Every tensor id, in creation order.
    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.meta[id.0].name
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn zero_grads(&self) -> Grads<T> {
        Grads {
            values: self.values.iter().map(|v| vec![T::zero(); v.len()]).collect(),
        }
    }

    pub(crate) fn values_mut(&mut self) -> &mut [Vec<T>] {
        &mut self.values
    }

    /// Magic tag, JSON header of names and shapes, little-endian `f32` payload.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.meta).expect("serializable metadata");
        let mut buf = Vec::new();
        buf.extend_from_slice(b"PPW1");
        buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
        buf.extend_from_slice(&header);
        for v in self.values.iter().flatten() {
            buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
        buf
    }

    /// Load values saved by [`Params::to_bytes`]; names and shapes must match.
    pub fn load_bytes(&mut self, buf: &[u8]) -> Result<()> {
        if buf.len() < 8 || &buf[..4] != b"PPW1" {
            return Err(Error::Model("not a weight file".into()));
        }
        let hlen = u32::from_le_bytes(buf[4..8].try_into().unwrap()) as usize;
        let header = buf
            .get(8..8 + hlen)
            .ok_or_else(|| Error::Model("truncated weight header".into()))?;
        let meta: Vec<ParamMeta> = serde_json::from_slice(header)
            .map_err(|e| Error::Model(format!("bad weight header: {e}")))?;
        if meta != self.meta {
            return Err(Error::Model("weight layout does not match the model".into()));
        }
        let mut body = buf[8 + hlen..].chunks_exact(4);
        for v in self.values.iter_mut().flatten() {
            let b = body
                .next()
                .ok_or_else(|| Error::Model("truncated weight payload".into()))?;
            *v = T::lit(f32::from_le_bytes(b.try_into().unwrap()) as f64);
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(Error::io(path))?;
        f.write_all(&self.to_bytes()).map_err(Error::io(path))
    }

    pub fn load(&mut self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(Error::io(path))?;
        self.load_bytes(&buf)
    }
}
