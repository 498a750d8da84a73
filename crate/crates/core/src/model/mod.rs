//! Compound Poisson + Erlang detector model and its regularized likelihood.

pub mod bessel;
mod density;
mod likelihood;

pub use bessel::{bessel_i_scaled, log_bessel_ratio_term};
pub use density::event_density;
pub use likelihood::{
    nll, nll_gradient, smooth_cost_scaled, smooth_gradient_scaled, zero_weight_cost, EventNeighborhood,
    LikelihoodEvalContext,
};

use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Default chemical-noise rate assumed by the reconstruction (ions per bin
/// per scan). Large enough that the step `gamma = 2.5e-3` majorizes the
/// curvature at `w = 0` on desk-scale instances; see [`crate::solver::curvature_bound`].
pub const DEFAULT_W0: f64 = 3e-3;
/// Default mean single-impact weight (ADC units).
pub const DEFAULT_MU: f64 = 225.0;

/// Detector and prior constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams<T> {
    /// Mean ADC weight of a single ion impact.
    pub mu: T,
    /// Spurious-impact rate added to every bin, ions per bin per scan.
    pub w0: T,
    /// Weight of the l1 term on the reparameterized rates `w / mu`.
    pub lambda: T,
}

impl<T: Scalar> ModelParams<T> {
    pub fn new(mu: T, w0: T, lambda: T) -> Result<Self> {
        let p = Self { mu, w0, lambda };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > T::zero()) || !self.mu.is_finite() {
            return invalid(format!("mu must be finite and > 0, got {}", self.mu));
        }
        if !(self.w0 > T::zero()) || !self.w0.is_finite() {
            return invalid(format!("w0 must be finite and > 0, got {}", self.w0));
        }
        if !(self.lambda >= T::zero()) || !self.lambda.is_finite() {
            return invalid(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        Ok(())
    }

    /// Chemical-noise rate in reparameterized units, `w0 / mu`.
    pub fn w0_scaled(&self) -> T {
        self.w0 / self.mu
    }
}

impl<T: Scalar> Default for ModelParams<T> {
    fn default() -> Self {
        Self { mu: T::lit(DEFAULT_MU), w0: T::lit(DEFAULT_W0), lambda: T::zero() }
    }
}

/// Per-bin expected ion count per scan.
#[derive(Debug, Clone, PartialEq)]
pub struct RateVector<T> {
    w: Vec<T>,
}

impl<T: Scalar> RateVector<T> {
    pub fn new(w: Vec<T>) -> Result<Self> {
        if w.is_empty() {
            return invalid("rate vector must have at least one bin");
        }
        if let Some((i, v)) = w.iter().enumerate().find(|(_, v)| !(**v >= T::zero()) || !v.is_finite()) {
            return invalid(format!("rate at bin {i} must be finite and >= 0, got {v}"));
        }
        Ok(Self { w })
    }

    pub fn zeros(n: usize) -> Self {
        Self { w: vec![T::zero(); n] }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.w
    }

    pub fn into_vec(self) -> Vec<T> {
        self.w
    }

    pub fn total(&self) -> T {
        self.w.iter().copied().sum()
    }
}

impl<T> std::ops::Index<usize> for RateVector<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.w[i]
    }
}
