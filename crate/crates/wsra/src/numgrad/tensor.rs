use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{Result, WsraError};

/// Dense row-major tensor of 64-bit floats.
#[derive(Clone, Debug)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
}

/// Shared handle to a trainable (or frozen) leaf tensor.
pub type Param = Rc<RefCell<Tensor>>;

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != values.len() {
            return Err(WsraError::Shape {
                op: "Tensor::new".into(),
                details: format!("shape {:?} implies {} values, got {}", shape, numel, values.len()),
            });
        }
        Ok(Tensor { shape, values, requires_grad: false, grad: None })
    }

    pub fn scalar(x: f64) -> Self {
        Tensor { shape: vec![1], values: vec![x], requires_grad: false, grad: None }
    }

    pub fn vector(values: Vec<f64>) -> Self {
        let n = values.len();
        Tensor { shape: vec![n], values, requires_grad: false, grad: None }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Tensor { shape, values: vec![0.0; numel], requires_grad: false, grad: None }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1
    }

    pub fn trainable(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    /// Wrap into a shared parameter handle.
    pub fn into_param(self) -> Param {
        Rc::new(RefCell::new(self))
    }

    /// Accumulate a gradient contribution (allocating the buffer on first use).
    pub fn accumulate_grad(&mut self, contribution: &[f64]) {
        debug_assert_eq!(contribution.len(), self.values.len());
        let grad = self.grad.get_or_insert_with(|| vec![0.0; self.values.len()]);
        for (g, c) in grad.iter_mut().zip(contribution) {
            *g += c;
        }
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
