use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};

/// Index of a parameter in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

/// Named learnable matrices. Insertion order is the manifest order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

/// One manifest row: name, shape, and offset (in values) into the flat
/// parameter buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore::default()
    }

    pub fn add_zeros(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        self.add(name, rows, cols, vec![0.0; rows * cols])
    }

    pub fn add_uniform<R: Rng>(&mut self, name: &str, rows: usize, cols: usize, scale: f64, rng: &mut R) -> ParamId {
        let values = (0..rows * cols).map(|_| rng.gen_range(-scale..=scale)).collect();
        self.add(name, rows, cols, values)
    }

    pub fn add(&mut self, name: &str, rows: usize, cols: usize, values: Vec<f64>) -> ParamId {
        assert_eq!(values.len(), rows * cols, "parameter `{name}` shape");
        assert!(self.find(name).is_none(), "duplicate parameter `{name}`");
        self.params.push(Param {
            name: name.into(),
            rows,
            cols,
            values,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn values(&self, id: ParamId) -> &[f64] {
        &self.params[id.0].values
    }

    pub fn values_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.params[id.0].values
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn total_values(&self) -> usize {
        self.params.iter().map(|p| p.values.len()).sum()
    }

    pub fn manifest(&self) -> Vec<ManifestEntry> {
        let mut offset = 0;
        self.params
            .iter()
            .map(|p| {
                let e = ManifestEntry {
                    name: p.name.clone(),
                    rows: p.rows,
                    cols: p.cols,
                    offset,
                };
                offset += p.values.len();
                e
            })
            .collect()
    }

    /// All values concatenated in manifest order.
    pub fn flat_values(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.values.iter().copied()).collect()
    }

    /// Rebuilds a store from a manifest and flat values.
    pub fn from_manifest(manifest: &[ManifestEntry], flat: &[f64]) -> Result<ParamStore> {
        let mut store = ParamStore::new();
        for e in manifest {
            let n = e.rows * e.cols;
            let end = e.offset + n;
            if end > flat.len() {
                return Err(Error::Format(alloc::format!(
                    "parameter `{}` extends past the value buffer",
                    e.name
                )));
            }
            store.add(&e.name, e.rows, e.cols, flat[e.offset..end].to_vec());
        }
        Ok(store)
    }

    /// Copies values from `other`, which must have the same layout.
    pub fn copy_from(&mut self, other: &ParamStore) {
        for (dst, src) in self.params.iter_mut().zip(&other.params) {
            dst.values.copy_from_slice(&src.values);
        }
    }
}

/// Gradient buffers laid out like a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    data: Vec<Vec<f64>>,
}

impl Grads {
    pub fn zeros_like(store: &ParamStore) -> Grads {
        Grads {
            data: store.params.iter().map(|p| vec![0.0; p.values.len()]).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.data[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.data[id.0]
    }

    pub fn zero(&mut self) {
        self.data.iter_mut().for_each(|g| g.iter_mut().for_each(|x| *x = 0.0));
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn global_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().flatten().map(|g| g * g).sum())
    }

    pub fn scale(&mut self, k: f64) {
        self.data.iter_mut().flatten().for_each(|g| *g *= k);
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.iter().map(|v| v.as_slice())
    }
}
