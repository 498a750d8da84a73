use crate::error::{domain, Result};
use crate::scalar::Scalar;

use super::bessel::scaled_unchecked;
use super::ModelParams;

/// Density of an observed impact weight `z` given the cumulative Poisson rate `s`.
///
/// For `z = 0` this returns the probability mass `e^(-s)` of observing
/// nothing. For `z > 0` it is the continuous part of the Poisson-mixed
/// Erlang law, `e^(-z/mu - s) sqrt(s/(z mu)) I_1(2 sqrt(z s / mu))`,
/// evaluated in log space.
pub fn event_density<T: Scalar>(z: T, s: T, params: &ModelParams<T>) -> Result<T> {
    if !(z >= T::zero()) || !z.is_finite() {
        return domain(format!("impact weight must be finite and >= 0, got {z}"));
    }
    if !(s > T::zero()) || !s.is_finite() {
        return domain(format!("cumulative rate must be finite and > 0, got {s}"));
    }
    let mu = params.mu;
    if z == T::zero() {
        return Ok((-s).exp());
    }
    let xi = T::lit(2.0) * (z * s / mu).sqrt();
    let log_density =
        -z / mu - s + xi + T::lit(0.5) * (s / (z * mu)).ln() + scaled_unchecked(1, xi).ln();
    Ok(log_density.exp())
}
