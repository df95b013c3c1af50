use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use super::DiffError;

/// Index of a parameter inside its [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct ParamId(pub usize);

/// A named trainable tensor with its AdamW moment buffers.
///
/// Values and moments are stored in `f32`; all arithmetic on them happens in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f32>,
    pub first_moment: Vec<f32>,
    pub second_moment: Vec<f32>,
}

impl Parameter {
    pub fn numel(&self) -> usize {
        self.value.len()
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            self.shape.clone(),
            self.value.iter().map(|&v| f64::from(v)).collect(),
        )
        .expect("parameter shape invariant")
    }
}

/// Ordered collection of uniquely named parameters plus the optimizer step counter.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
    index: HashMap<String, usize>,
    pub step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        name: &str,
        shape: &[usize],
        value: Vec<f32>,
    ) -> Result<ParamId, DiffError> {
        if self.index.contains_key(name) {
            return Err(DiffError::DuplicateParameter(name.to_string()));
        }
        let n: usize = shape.iter().product();
        if n != value.len() {
            return Err(DiffError::DataLength {
                shape: shape.to_vec(),
                len: value.len(),
            });
        }
        self.index.insert(name.to_string(), self.params.len());
        self.params.push(Parameter {
            name: name.to_string(),
            shape: shape.to_vec(),
            value,
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
        });
        Ok(ParamId(self.params.len() - 1))
    }

    /// Gaussian init with the given standard deviation.
    pub fn insert_normal<R: Rng + ?Sized>(
        &mut self,
        name: &str,
        shape: &[usize],
        std: f64,
        rng: &mut R,
    ) -> Result<ParamId, DiffError> {
        let n: usize = shape.iter().product();
        let dist =
            Normal::new(0.0, std).map_err(|_| DiffError::InvalidConfig(format!("std {std}")))?;
        let value = (0..n).map(|_| dist.sample(rng) as f32).collect();
        self.insert(name, shape, value)
    }

    pub fn insert_constant(
        &mut self,
        name: &str,
        shape: &[usize],
        v: f32,
    ) -> Result<ParamId, DiffError> {
        let n: usize = shape.iter().product();
        self.insert(name, shape, vec![v; n])
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.params.iter().map(Parameter::numel).sum()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    /// Registers every parameter as a differentiable leaf on `tape`.
    pub fn bind<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.params
            .iter()
            .map(|p| tape.leaf(p.to_tensor()))
            .collect()
    }

    /// Registers every parameter as a constant: evaluation without gradients.
    pub fn bind_frozen<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.params
            .iter()
            .map(|p| tape.constant(p.to_tensor()))
            .collect()
    }

    /// Adds `N(0, scale²)` noise to every value.
    pub fn jitter<R: Rng + ?Sized>(&mut self, scale: f64, rng: &mut R) {
        let noise = Normal::new(0.0, scale).expect("finite scale");
        for p in &mut self.params {
            for v in &mut p.value {
                *v += noise.sample(rng) as f32;
            }
        }
    }

    /// Current values as `f64` tensors, in store order.
    pub fn tensors(&self) -> Vec<Tensor> {
        self.params.iter().map(Parameter::to_tensor).collect()
    }

    /// Rebuilds a store from already-validated parameters (checkpoint loading).
    pub(crate) fn from_parts(params: Vec<Parameter>, step: u64) -> Result<Self, DiffError> {
        let mut index = HashMap::with_capacity(params.len());
        for (i, p) in params.iter().enumerate() {
            if index.insert(p.name.clone(), i).is_some() {
                return Err(DiffError::DuplicateParameter(p.name.clone()));
            }
        }
        Ok(Self {
            params,
            index,
            step,
        })
    }
}
