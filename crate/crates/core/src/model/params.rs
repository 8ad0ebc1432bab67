//! Flat parameter storage with named tensor views.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    /// Normal with the given std, resampled outside ±2 std.
    TruncNormal(f64),
}

/// Every trainable tensor of a model, stored contiguously.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    pub data: Vec<f64>,
    pub tensors: Vec<TensorInfo>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], init: Init, rng: &mut impl Rng) -> ParamId {
        let offset = self.data.len();
        let n: usize = shape.iter().product();
        match init {
            Init::Zeros => self.data.extend(std::iter::repeat_n(0.0, n)),
            Init::Ones => self.data.extend(std::iter::repeat_n(1.0, n)),
            Init::TruncNormal(std) => {
                for _ in 0..n {
                    let v = loop {
                        let z: f64 = StandardNormal.sample(rng);
                        if z.abs() <= 2.0 {
                            break z;
                        }
                    };
                    self.data.push(v * std);
                }
            }
        }
        self.tensors.push(TensorInfo { name: name.into(), offset, shape: shape.to_vec() });
        ParamId(self.tensors.len() - 1)
    }

    pub fn info(&self, id: ParamId) -> &TensorInfo {
        &self.tensors[id.0]
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        let t = &self.tensors[id.0];
        &self.data[t.offset..t.offset + t.len()]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        let t = &self.tensors[id.0];
        let (o, n) = (t.offset, t.len());
        &mut self.data[o..o + n]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn zeros_like(&self) -> Grads {
        Grads { data: vec![0.0; self.data.len()] }
    }

    pub fn sha256(&self) -> String {
        let mut h = Sha256::new();
        for v in &self.data {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Name of the tensor holding flat index `i`.
    pub fn tensor_of(&self, i: usize) -> Option<&TensorInfo> {
        self.tensors.iter().find(|t| i >= t.offset && i < t.offset + t.len())
    }
}

/// Gradient buffer laid out like a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub data: Vec<f64>,
}

impl Grads {
    pub fn get_mut(&mut self, store: &ParamStore, id: ParamId) -> &mut [f64] {
        let t = &store.tensors[id.0];
        &mut self.data[t.offset..t.offset + t.len()]
    }

    pub fn get<'a>(&'a self, store: &ParamStore, id: ParamId) -> &'a [f64] {
        let t = &store.tensors[id.0];
        &self.data[t.offset..t.offset + t.len()]
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }
}
