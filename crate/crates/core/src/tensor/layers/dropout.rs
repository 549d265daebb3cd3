use super::{not_run, Ctx, Layer, Mode};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Real, Tensor};

/// Inverted dropout: in training each element is zeroed with probability
/// `rate` and survivors are scaled by `1/(1-rate)`; inference is the identity.
pub fn dropout<T: Real>(x: &Tensor<T>, rate: f64, mode: Mode, rng: &mut Rng) -> Result<Tensor<T>> {
    let mask = mask(x.len(), rate, mode, rng)?;
    Ok(apply(x, mask.as_deref()))
}

fn mask<T: Real>(len: usize, rate: f64, mode: Mode, rng: &mut Rng) -> Result<Option<Vec<T>>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!(
            "dropout rate {rate} outside [0, 1)"
        )));
    }
    if mode == Mode::Infer || rate == 0.0 {
        return Ok(None);
    }
    let keep = T::of(1.0 / (1.0 - rate));
    Ok(Some(
        (0..len)
            .map(|_| {
                if rng.uniform() < rate {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect(),
    ))
}

fn apply<T: Real>(x: &Tensor<T>, mask: Option<&[T]>) -> Tensor<T> {
    match mask {
        None => x.clone(),
        Some(m) => {
            let mut y = x.clone();
            for (v, &s) in y.data_mut().iter_mut().zip(m) {
                *v *= s;
            }
            y
        }
    }
}

pub struct Dropout<T: Real = f32> {
    name: String,
    rate: f64,
    cache: Option<Option<Vec<T>>>,
}

impl<T: Real> Dropout<T> {
    pub fn new(name: impl Into<String>, rate: f64) -> Self {
        Dropout {
            name: name.into(),
            rate,
            cache: None,
        }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

impl<T: Real> Layer<T> for Dropout<T> {
    fn name(&self) -> &str {
        &self.name
    }

    fn kind(&self) -> &'static str {
        "Dropout"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(input.to_vec())
    }

    fn forward(&mut self, x: &Tensor<T>, ctx: &mut Ctx<'_>) -> Result<Tensor<T>> {
        let m = mask(x.len(), self.rate, ctx.mode, ctx.rng)?;
        let y = apply(x, m.as_deref());
        self.cache = Some(m);
        Ok(y)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(x.clone())
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let m = self.cache.as_ref().ok_or_else(|| not_run(&self.name))?;
        Ok(apply(dy, m.as_deref()))
    }
}
