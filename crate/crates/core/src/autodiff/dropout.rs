use rand::Rng;

use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Bernoulli keep-mask scaled by `1 / (1 - rate)`.
///
/// Variational dropout draws one mask per sequence and multiplies it into
/// every time step, so callers create the mask once per BPTT window.
/// A zero rate yields all ones without touching `rng`.
pub fn variational_dropout_mask<T: Real, R: Rng + ?Sized>(
    shape: &[usize],
    rate: f64,
    rng: &mut R,
) -> Result<Tensor<T>> {
    check_rate(rate)?;
    if rate == 0.0 {
        return Ok(Tensor::ones(shape));
    }
    let keep = 1.0 - rate;
    let scale = T::from_f64(1.0 / keep);
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| if rng.gen_bool(keep) { scale } else { T::zero() })
        .collect();
    Tensor::new(shape.to_vec(), data)
}

pub fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::config(format!(
            "dropout rate must lie in [0, 1), got {rate}"
        )));
    }
    Ok(())
}
