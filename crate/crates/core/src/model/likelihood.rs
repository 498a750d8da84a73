//! Generalized (multi-sample event) negative log-likelihood.
//!
//! Rates enter through the reparameterization `w~ = w / mu`, under which the
//! event terms no longer depend on `mu`:
//!
//! ```text
//! l~(w~) = - sum_a [ 1/2 log s_a + log I_1(2 sqrt(z_a s_a)) ],   s_a = sum_{i in N(a)} (w~[i] + w0 / mu)
//! ```
//!
//! Samples outside every event contribute only a linear term. Because every
//! trace sample is either inside an event or not, those linear terms add up
//! to `N ||w||_1` for any event layout and are carried by the l1 penalty, so
//! no zero-weight bookkeeping is needed here. Constants independent of `w`
//! (`1/2 log z_a - 1/2 log mu` and `N w0`) are dropped, which makes cost values
//! comparable only within one run.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;
use crate::schedule::{FiringSchedule, ScanInterval};
use crate::util::tree_sum;

use super::bessel::log_bessel_ratio_unchecked;
use super::{ModelParams, RateVector};

/// Generalized neighborhood of one event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventNeighborhood {
    /// Candidate positions, one per contributing scan, ordered by firing time.
    pub intervals: Vec<ScanInterval>,
    /// The same bins as disjoint sorted inclusive ranges (the neighbor set as a set).
    pub ranges: Vec<(usize, usize)>,
    /// Number of distinct bins.
    pub size: usize,
}

impl EventNeighborhood {
    pub fn from_intervals(intervals: Vec<ScanInterval>) -> Self {
        let mut spans: Vec<(usize, usize)> = intervals.iter().map(|iv| (iv.lo, iv.hi)).collect();
        spans.sort_unstable();
        let mut ranges: Vec<(usize, usize)> = Vec::with_capacity(spans.len());
        for (lo, hi) in spans {
            match ranges.last_mut() {
                Some(last) if lo <= last.1 + 1 => last.1 = last.1.max(hi),
                _ => ranges.push((lo, hi)),
            }
        }
        let size = ranges.iter().map(|(lo, hi)| hi - lo + 1).sum();
        Self { intervals, ranges, size }
    }

    /// Number of candidate positions (contributing scans).
    pub fn degree(&self) -> usize {
        self.intervals.len()
    }

    pub fn bins(&self) -> impl Iterator<Item = usize> + '_ {
        self.ranges.iter().flat_map(|&(lo, hi)| lo..=hi)
    }
}

/// Everything the likelihood needs about the observed events.
#[derive(Debug, Clone)]
pub struct LikelihoodEvalContext<T> {
    /// Event weights `z_a` (ADC units).
    pub weights: Vec<T>,
    pub neighborhoods: Vec<EventNeighborhood>,
    /// Number of spectrum bins.
    pub n: usize,
    /// Number of scans in the acquisition.
    pub num_scans: usize,
}

impl<T: Scalar> LikelihoodEvalContext<T> {
    pub fn new(
        weights: Vec<T>,
        neighborhoods: Vec<EventNeighborhood>,
        n: usize,
        num_scans: usize,
    ) -> Result<Self> {
        if weights.len() != neighborhoods.len() {
            return Err(Error::DimensionMismatch { expected: weights.len(), found: neighborhoods.len() });
        }
        for (a, (z, nb)) in weights.iter().zip(&neighborhoods).enumerate() {
            if !(*z > T::zero()) || !z.is_finite() {
                return invalid(format!("event {a} has non-positive weight {z}"));
            }
            if nb.size == 0 {
                return invalid(format!("event {a} has an empty neighborhood"));
            }
            if let Some(&(_, hi)) = nb.ranges.last() {
                if hi >= n {
                    return invalid(format!("event {a} neighbor {hi} outside [0, {n})"));
                }
            }
        }
        Ok(Self { weights, neighborhoods, n, num_scans })
    }

    pub fn num_events(&self) -> usize {
        self.weights.len()
    }

    /// Cumulative scaled rate `s_a` of every event.
    pub fn cumulative_rates(&self, w_scaled: &[T], w0_scaled: T) -> Vec<T> {
        self.neighborhoods
            .par_iter()
            .map(|nb| {
                let mut s = w0_scaled * T::from_usize_lossy(nb.size);
                for &(lo, hi) in &nb.ranges {
                    s += w_scaled[lo..=hi].iter().copied().sum::<T>();
                }
                s
            })
            .collect()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: len });
        }
        Ok(())
    }
}

/// Smooth part `l~(w~)` evaluated on already reparameterized rates.
pub fn smooth_cost_scaled<T: Scalar>(ctx: &LikelihoodEvalContext<T>, w_scaled: &[T], w0_scaled: T) -> Result<T> {
    ctx.check_len(w_scaled.len())?;
    let s = ctx.cumulative_rates(w_scaled, w0_scaled);
    let terms: Vec<T> = s
        .par_iter()
        .zip(ctx.weights.par_iter())
        .map(|(&s, &z)| -log_bessel_ratio_unchecked(s, z, T::one()).0)
        .collect();
    Ok(tree_sum(&terms))
}

/// Gradient of `l~` with respect to `w~`, written into `out`.
///
/// Per-event derivatives are computed in parallel; the scatter onto bins is a
/// serial pass in event order, so results are bit-identical across runs and
/// thread counts.
pub fn smooth_gradient_scaled<T: Scalar>(
    ctx: &LikelihoodEvalContext<T>,
    w_scaled: &[T],
    w0_scaled: T,
    out: &mut [T],
) -> Result<()> {
    ctx.check_len(w_scaled.len())?;
    ctx.check_len(out.len())?;
    let s = ctx.cumulative_rates(w_scaled, w0_scaled);
    let slopes: Vec<T> = s
        .par_iter()
        .zip(ctx.weights.par_iter())
        .map(|(&s, &z)| log_bessel_ratio_unchecked(s, z, T::one()).1)
        .collect();
    out.iter_mut().for_each(|g| *g = T::zero());
    for (nb, &d) in ctx.neighborhoods.iter().zip(&slopes) {
        for &(lo, hi) in &nb.ranges {
            for g in &mut out[lo..=hi] {
                *g -= d;
            }
        }
    }
    Ok(())
}

/// Regularized NLL `l~(w / mu) + lambda ||w / mu||_1` for rates `w` in ions per scan.
pub fn nll<T: Scalar>(w: &RateVector<T>, ctx: &LikelihoodEvalContext<T>, params: &ModelParams<T>) -> Result<T> {
    ctx.check_len(w.len())?;
    let scaled: Vec<T> = w.as_slice().iter().map(|&v| v / params.mu).collect();
    let smooth = smooth_cost_scaled(ctx, &scaled, params.w0_scaled())?;
    Ok(smooth + params.lambda * tree_sum(&scaled))
}

/// Gradient of the smooth part with respect to the reparameterized rates,
/// evaluated at `w / mu`. The l1 term is left to the solver's threshold.
pub fn nll_gradient<T: Scalar>(
    w: &RateVector<T>,
    ctx: &LikelihoodEvalContext<T>,
    params: &ModelParams<T>,
) -> Result<Vec<T>> {
    ctx.check_len(w.len())?;
    let scaled: Vec<T> = w.as_slice().iter().map(|&v| v / params.mu).collect();
    let mut g = vec![T::zero(); ctx.n];
    smooth_gradient_scaled(ctx, &scaled, params.w0_scaled(), &mut g)?;
    Ok(g)
}

/// Negative log-probability of observing nothing on the sample intervals
/// `zero_intervals`: the sum over those samples of `<A_t, w~ + w0/mu>`.
///
/// Depends only on which samples are covered, not on how they are grouped.
pub fn zero_weight_cost<T: Scalar>(
    w: &RateVector<T>,
    sched: &FiringSchedule,
    zero_intervals: &[(usize, usize)],
    params: &ModelParams<T>,
) -> Result<T> {
    if w.len() != sched.n() {
        return Err(Error::DimensionMismatch { expected: sched.n(), found: w.len() });
    }
    let w0 = params.w0_scaled();
    let mut per_sample = Vec::new();
    for &(t0, t1) in zero_intervals {
        for t in t0..=t1 {
            let nb = sched.sample_neighbors(t)?;
            let v: Vec<T> = nb.indices.iter().map(|&i| w[i] / params.mu + w0).collect();
            per_sample.push((t, tree_sum(&v)));
        }
    }
    // canonical sample order so the grouping of intervals cannot matter
    per_sample.sort_by_key(|&(t, _)| t);
    let v: Vec<T> = per_sample.into_iter().map(|(_, v)| v).collect();
    Ok(tree_sum(&v))
}
