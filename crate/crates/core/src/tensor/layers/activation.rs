use super::{not_run, Ctx, Layer};
use crate::error::Result;
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActivationKind {
    Relu,
    Sigmoid,
}

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Logistic function, evaluated without overflow for large `|x|` and kept
/// strictly inside `(0, 1)` even where the exact value rounds to 0 or 1.
pub fn sigmoid<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid_scalar)
}

fn sigmoid_scalar<T: Real>(v: T) -> T {
    let s = if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    };
    let hi = T::one() - T::epsilon() / T::of(2.0);
    s.max(T::min_positive_value()).min(hi)
}

pub struct Activation<T: Real = f32> {
    name: String,
    kind: ActivationKind,
    output: Option<Tensor<T>>,
}

impl<T: Real> Activation<T> {
    pub fn new(name: impl Into<String>, kind: ActivationKind) -> Self {
        Activation {
            name: name.into(),
            kind,
            output: None,
        }
    }
}

impl<T: Real> Layer<T> for Activation<T> {
    fn name(&self) -> &str {
        &self.name
    }

    fn kind(&self) -> &'static str {
        "Activation"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(input.to_vec())
    }

    fn forward(&mut self, x: &Tensor<T>, _ctx: &mut Ctx<'_>) -> Result<Tensor<T>> {
        let y = self.infer(x)?;
        self.output = Some(y.clone());
        Ok(y)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(match self.kind {
            ActivationKind::Relu => relu(x),
            ActivationKind::Sigmoid => sigmoid(x),
        })
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.output.as_ref().ok_or_else(|| not_run(&self.name))?;
        dy.expect_same_shape(y, "activation backward")?;
        let mut dx = dy.clone();
        for (g, &out) in dx.data_mut().iter_mut().zip(y.data()) {
            *g = match self.kind {
                ActivationKind::Relu if out > T::zero() => *g,
                ActivationKind::Relu => T::zero(),
                ActivationKind::Sigmoid => *g * out * (T::one() - out),
            };
        }
        Ok(dx)
    }
}
