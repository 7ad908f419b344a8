use ndarray::Array2;

use crate::error::{Error, Result};

/// Dense 2-D array that may carry a gradient slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    values: Array2<f64>,
    pub requires_grad: bool,
    grad: Option<Array2<f64>>,
}

impl Tensor {
    pub fn new(values: Array2<f64>, requires_grad: bool) -> Self {
        Self { values, requires_grad, grad: None }
    }

    pub fn from_vec(shape: [usize; 2], values: Vec<f64>) -> Result<Self> {
        let values = Array2::from_shape_vec((shape[0], shape[1]), values).map_err(|e| Error::shape("tensor", e.to_string()))?;
        Ok(Self::new(values, false))
    }

    pub fn shape(&self) -> [usize; 2] {
        let (r, c) = self.values.dim();
        [r, c]
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<f64> {
        &mut self.values
    }

    pub fn grad(&self) -> Option<&Array2<f64>> {
        self.grad.as_ref()
    }

    pub fn set_grad(&mut self, grad: Array2<f64>) -> Result<()> {
        if grad.dim() != self.values.dim() {
            return Err(Error::shape("set_grad", format!("{:?} vs {:?}", grad.dim(), self.values.dim())));
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Named, ordered collection of trainable tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, values: Array2<f64>) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(Tensor::new(values, true));
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names.iter().zip(&self.tensors).enumerate().map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.tensors.iter_mut()
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(|t| t.values.len()).sum()
    }
}
