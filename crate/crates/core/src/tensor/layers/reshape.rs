use super::{not_run, Ctx, Layer};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Collapses everything after the batch axis.
pub struct Flatten {
    name: String,
    input_shape: Option<Vec<usize>>,
}

impl Flatten {
    pub fn new(name: impl Into<String>) -> Self {
        Flatten {
            name: name.into(),
            input_shape: None,
        }
    }
}

impl<T: Real> Layer<T> for Flatten {
    fn name(&self) -> &str {
        &self.name
    }

    fn kind(&self) -> &'static str {
        "Flatten"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(vec![input.iter().product()])
    }

    fn forward(&mut self, x: &Tensor<T>, _ctx: &mut Ctx<'_>) -> Result<Tensor<T>> {
        self.input_shape = Some(x.shape().to_vec());
        <Self as Layer<T>>::infer(self, x)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let n = x.batch();
        x.clone().reshape(vec![n, x.len() / n.max(1)])
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self
            .input_shape
            .clone()
            .ok_or_else(|| not_run(&self.name))?;
        dy.clone().reshape(shape)
    }
}

/// Reshapes the per-sample part of a batch to a fixed target.
pub struct Reshape {
    name: String,
    target: Vec<usize>,
    input_shape: Option<Vec<usize>>,
}

impl Reshape {
    pub fn new(name: impl Into<String>, target: Vec<usize>) -> Self {
        Reshape {
            name: name.into(),
            target,
            input_shape: None,
        }
    }
}

impl<T: Real> Layer<T> for Reshape {
    fn name(&self) -> &str {
        &self.name
    }

    fn kind(&self) -> &'static str {
        "Reshape"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let from: usize = input.iter().product();
        let to: usize = self.target.iter().product();
        if from != to {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                dim: "element count",
                expected: to,
                found: from,
            });
        }
        Ok(self.target.clone())
    }

    fn forward(&mut self, x: &Tensor<T>, _ctx: &mut Ctx<'_>) -> Result<Tensor<T>> {
        self.input_shape = Some(x.shape().to_vec());
        <Self as Layer<T>>::infer(self, x)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut shape = vec![x.batch()];
        shape.extend_from_slice(&self.target);
        x.clone().reshape(shape)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self
            .input_shape
            .clone()
            .ok_or_else(|| not_run(&self.name))?;
        dy.clone().reshape(shape)
    }
}
