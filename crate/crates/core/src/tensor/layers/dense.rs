use super::{glorot_uniform, not_run, Ctx, Layer, Param};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{gemm, gemm_tn, transpose, Real, Tensor};

/// Affine map `x·W + b` for `x: N×Din`, `W: Din×Dout`.
pub fn dense<T: Real>(
    x: &Tensor<T>,
    weights: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    const OP: &str = "dense";
    let (n, din) = x.dims2(OP)?;
    let (wdin, dout) = weights.dims2(OP)?;
    if din != wdin {
        return Err(Error::ShapeMismatch {
            op: OP,
            dim: "input features",
            expected: wdin,
            found: din,
        });
    }
    let mut out = match bias {
        Some(b) if b.len() != dout => {
            return Err(Error::ShapeMismatch {
                op: OP,
                dim: "bias length",
                expected: dout,
                found: b.len(),
            })
        }
        Some(b) => b.data().repeat(n),
        None => vec![T::zero(); n * dout],
    };
    gemm(n, din, dout, x.data(), weights.data(), &mut out);
    Tensor::new(vec![n, dout], out)
}

pub struct Dense<T: Real = f32> {
    name: String,
    weights: Param<T>,
    bias: Param<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Real> Dense<T> {
    pub fn new(name: impl Into<String>, din: usize, dout: usize, rng: &mut Rng) -> Self {
        let name = name.into();
        Dense {
            weights: Param::new(
                format!("{name}/kernel"),
                glorot_uniform(&[din, dout], rng),
                true,
            ),
            bias: Param::new(format!("{name}/bias"), Tensor::zeros(vec![dout]), true),
            name,
            cache: None,
        }
    }
}

impl<T: Real> Layer<T> for Dense<T> {
    fn name(&self) -> &str {
        &self.name
    }

    fn kind(&self) -> &'static str {
        "Dense"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let din = self.weights.value.shape()[0];
        match input {
            [d] if *d == din => Ok(vec![self.weights.value.shape()[1]]),
            [d] => Err(Error::ShapeMismatch {
                op: "dense",
                dim: "input features",
                expected: din,
                found: *d,
            }),
            _ => Err(Error::Rank {
                op: "dense",
                expected: 1,
                found: input.len(),
            }),
        }
    }

    fn forward(&mut self, x: &Tensor<T>, _ctx: &mut Ctx<'_>) -> Result<Tensor<T>> {
        let y = self.infer(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        dense(x, &self.weights.value, Some(&self.bias.value))
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.cache.as_ref().ok_or_else(|| not_run(&self.name))?;
        let (n, din) = x.dims2("dense backward")?;
        let dout = self.bias.count();
        if dy.shape() != [n, dout] {
            return Err(Error::ShapeMismatch {
                op: "dense backward",
                dim: "upstream gradient length",
                expected: n * dout,
                found: dy.len(),
            });
        }
        gemm_tn(
            din,
            n,
            dout,
            x.data(),
            dy.data(),
            self.weights.grad.data_mut(),
        );
        for row in dy.data().chunks_exact(dout) {
            for (g, &v) in self.bias.grad.data_mut().iter_mut().zip(row) {
                *g += v;
            }
        }
        let wt = transpose(din, dout, self.weights.value.data());
        let mut dx = vec![T::zero(); n * din];
        gemm(n, dout, din, dy.data(), &wt, &mut dx);
        Tensor::new(vec![n, din], dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weights, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weights, &mut self.bias]
    }
}
