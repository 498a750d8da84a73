//! Sparse maximum-likelihood reconstruction by one-sided iterative soft
//! thresholding, followed by most-likely-neighbor event assignment.
//!
//! The iterate `w` is in ions per bin per scan. The minimized cost is
//!
//! ```text
//! C(w) = l~(w / mu) / N + lambda_hat ||w||_1,    lambda_hat = theta0 / gamma
//! ```
//!
//! which is the model NLL divided by `N` with `lambda = N mu lambda_hat`.
//! Dividing by the scan count keeps gradient magnitudes independent of how
//! long the acquisition ran, and `lambda_hat = 1` is the exact Poisson weight
//! of the zero-weight observations. Each iteration applies
//! `w <- max(w - gamma grad - theta_k, 0)` with `theta_k = theta0 + theta1 / k^2`.

use crate::baselines::{copy_event, Method, Provenance, SpectrumEstimate};
use crate::error::{invalid, Error, Result};
use crate::model::{log_bessel_ratio_term, smooth_cost_scaled, smooth_gradient_scaled, LikelihoodEvalContext, ModelParams, RateVector};
use crate::preprocess::{detect_events, events_to_context, DetectionParams, EventList};
use crate::scalar::Scalar;
use crate::schedule::FiringSchedule;
use crate::simulator::Trace;
use crate::util::tree_sum;

/// Step size and threshold schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams<T> {
    pub gamma: T,
    pub theta0: T,
    pub theta1: T,
    pub max_iters: usize,
    /// Stop once a step at the final threshold `theta0` would move no bin by this much.
    pub tol: T,
}

impl<T: Scalar> Default for SolverParams<T> {
    fn default() -> Self {
        Self { gamma: T::lit(2.5e-3), theta0: T::lit(5e-4), theta1: T::lit(2e-2), max_iters: 30, tol: T::lit(1e-8) }
    }
}

impl<T: Scalar> SolverParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > T::zero()) || !self.gamma.is_finite() {
            return invalid(format!("gamma must be finite and > 0, got {}", self.gamma));
        }
        if !(self.theta0 >= T::zero()) || !(self.theta1 >= T::zero()) {
            return invalid("theta0 and theta1 must be >= 0");
        }
        if self.max_iters == 0 {
            return invalid("max_iters must be >= 1");
        }
        if !(self.tol > T::zero()) {
            return invalid("tol must be > 0");
        }
        Ok(())
    }

    /// Threshold used in iteration `k` (counted from 1).
    pub fn theta(&self, k: usize) -> T {
        let k = T::from_usize_lossy(k);
        self.theta0 + self.theta1 / (k * k)
    }

    /// l1 weight of the limit objective.
    pub fn lambda_hat(&self) -> T {
        self.theta0 / self.gamma
    }
}

/// `out[i] = max(v[i] - theta, 0)`.
pub fn soft_threshold<T: Scalar>(v: &[T], theta: T) -> Vec<T> {
    v.iter().map(|&x| (x - theta).max(T::zero())).collect()
}

/// One row of the cost history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRecord<T> {
    pub iter: usize,
    pub theta: T,
    pub cost: T,
    pub max_delta: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState<T> {
    pub w: RateVector<T>,
    /// Iterations performed.
    pub k: usize,
    /// Row 0 is the starting point `w = 0`; row `k` follows iteration `k`.
    pub cost_history: Vec<IterRecord<T>>,
    pub converged: bool,
}

fn check_ctx<T: Scalar>(ctx: &LikelihoodEvalContext<T>, len: usize) -> Result<()> {
    if len != ctx.n {
        return Err(Error::DimensionMismatch { expected: ctx.n, found: len });
    }
    if ctx.num_scans == 0 {
        return invalid("context has no scans");
    }
    Ok(())
}

/// Smooth part `l~(w / mu) / N` of the solver cost.
pub fn smooth_objective<T: Scalar>(ctx: &LikelihoodEvalContext<T>, w: &[T], mp: &ModelParams<T>) -> Result<T> {
    check_ctx(ctx, w.len())?;
    let scaled: Vec<T> = w.iter().map(|&v| v / mp.mu).collect();
    Ok(smooth_cost_scaled(ctx, &scaled, mp.w0_scaled())? / T::from_usize_lossy(ctx.num_scans))
}

/// Gradient of [`smooth_objective`] with respect to `w`.
pub fn smooth_objective_gradient<T: Scalar>(
    ctx: &LikelihoodEvalContext<T>,
    w: &[T],
    mp: &ModelParams<T>,
) -> Result<Vec<T>> {
    check_ctx(ctx, w.len())?;
    let scaled: Vec<T> = w.iter().map(|&v| v / mp.mu).collect();
    let mut g = vec![T::zero(); w.len()];
    smooth_gradient_scaled(ctx, &scaled, mp.w0_scaled(), &mut g)?;
    let c = T::one() / (mp.mu * T::from_usize_lossy(ctx.num_scans));
    g.iter_mut().for_each(|v| *v *= c);
    Ok(g)
}

/// Upper bound on the largest Hessian eigenvalue of [`smooth_objective`] at `w`.
///
/// Each event contributes `c_a 1_a 1_a^T / (mu^2 N)` with `c_a = v'(s)^2 - z/s`
/// (`v` the log-Bessel term), and `c_a` shrinks as `s` grows, so the bound at
/// `w = 0` holds for every feasible iterate. Descent is guaranteed when
/// `gamma * bound < 1`. The bound is the Collatz-Wielandt ratio after
/// `iters` power iterations.
pub fn curvature_bound<T: Scalar>(
    ctx: &LikelihoodEvalContext<T>,
    w: &[T],
    mp: &ModelParams<T>,
    iters: usize,
) -> Result<T> {
    check_ctx(ctx, w.len())?;
    let scaled: Vec<T> = w.iter().map(|&v| v / mp.mu).collect();
    let s = ctx.cumulative_rates(&scaled, mp.w0_scaled());
    let norm = T::one() / (mp.mu * mp.mu * T::from_usize_lossy(ctx.num_scans));
    let mut curv = Vec::with_capacity(s.len());
    for (&sa, &z) in s.iter().zip(&ctx.weights) {
        let (_, d) = log_bessel_ratio_term(sa, z, T::one())?;
        curv.push((d * d - z / sa).max(T::zero()) * norm);
    }
    let mut covered = vec![false; ctx.n];
    for nb in &ctx.neighborhoods {
        nb.bins().for_each(|i| covered[i] = true);
    }
    let apply = |v: &[T]| {
        let mut hv = vec![T::zero(); v.len()];
        for (nb, &c) in ctx.neighborhoods.iter().zip(&curv) {
            let dot: T = nb.bins().map(|i| v[i]).sum();
            nb.bins().for_each(|i| hv[i] += c * dot);
        }
        hv
    };
    let mut v: Vec<T> = covered.iter().map(|&c| if c { T::one() } else { T::zero() }).collect();
    for _ in 0..iters {
        let hv = apply(&v);
        let top = hv.iter().copied().fold(T::zero(), T::max);
        if !(top > T::zero()) {
            return Ok(T::zero());
        }
        // the floor keeps every covered entry positive for the ratio below
        v = hv.iter().zip(&covered).map(|(&x, &c)| if c { (x / top).max(T::lit(1e-12)) } else { T::zero() }).collect();
    }
    let hv = apply(&v);
    let bound = hv.iter().zip(&v).filter(|(_, &vi)| vi > T::zero()).map(|(&h, &vi)| h / vi).fold(T::zero(), T::max);
    Ok(bound)
}

/// Full cost `C(w)` with l1 weight `lambda_hat`.
pub fn objective<T: Scalar>(ctx: &LikelihoodEvalContext<T>, w: &[T], mp: &ModelParams<T>, lambda_hat: T) -> Result<T> {
    Ok(smooth_objective(ctx, w, mp)? + lambda_hat * tree_sum(w))
}

/// Runs ISTA from `w = 0`.
pub fn ista_solve<T: Scalar>(
    ctx: &LikelihoodEvalContext<T>,
    mp: &ModelParams<T>,
    sp: &SolverParams<T>,
) -> Result<SolverState<T>> {
    ista_solve_with(ctx, mp, sp, |_, _| Ok(()))
}

/// Like [`ista_solve`], calling `observe(k, w)` on the starting point
/// (`k = 0`) and after every iteration.
pub fn ista_solve_with<T, F>(
    ctx: &LikelihoodEvalContext<T>,
    mp: &ModelParams<T>,
    sp: &SolverParams<T>,
    mut observe: F,
) -> Result<SolverState<T>>
where
    T: Scalar,
    F: FnMut(usize, &[T]) -> Result<()>,
{
    mp.validate()?;
    sp.validate()?;
    let n = ctx.n;
    let lambda_hat = sp.lambda_hat();
    let mut w = vec![T::zero(); n];
    let mut history = vec![IterRecord {
        iter: 0,
        theta: sp.theta0 + sp.theta1,
        cost: objective(ctx, &w, mp, lambda_hat)?,
        max_delta: T::zero(),
    }];
    observe(0, &w)?;
    let mut converged = false;
    let mut k = 0;
    loop {
        let g = smooth_objective_gradient(ctx, &w, mp)?;
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient entry {i} at iteration {}", k + 1)));
        }
        // done once w is a fixed point of the final-threshold step
        if k > 0 {
            let residual = w
                .iter()
                .zip(&g)
                .map(|(&wi, &gi)| ((wi - sp.gamma * gi - sp.theta0).max(T::zero()) - wi).abs())
                .fold(T::zero(), T::max);
            if residual < sp.tol {
                converged = true;
                break;
            }
        }
        if k == sp.max_iters {
            break;
        }
        k += 1;
        let theta = sp.theta(k);
        let mut max_delta = T::zero();
        for (wi, &gi) in w.iter_mut().zip(&g) {
            let next = (*wi - sp.gamma * gi - theta).max(T::zero());
            max_delta = max_delta.max((next - *wi).abs());
            *wi = next;
        }
        let cost = objective(ctx, &w, mp, lambda_hat)?;
        if !cost.is_finite() {
            return Err(Error::NonFinite(format!("cost at iteration {k}")));
        }
        history.push(IterRecord { iter: k, theta, cost, max_delta });
        observe(k, &w)?;
    }
    Ok(SolverState { w: RateVector::new(w)?, k, cost_history: history, converged })
}

/// Index of the candidate interval with the largest total rate; ties go to
/// the earliest-firing scan.
pub fn most_likely_interval<T: Scalar>(intervals: &[crate::schedule::ScanInterval], w: &[T]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (j, iv) in intervals.iter().enumerate() {
        let mass: T = w[iv.lo..=iv.hi].iter().copied().sum();
        if best.is_none_or(|(_, m)| mass > m) {
            best = Some((j, mass));
        }
    }
    best.map(|(j, _)| j)
}

/// Copies every event onto its most likely position; the result is the
/// summed (not per-scan) spectrum.
///
/// An event with several candidate positions none of which carries any rate
/// has no evidence for a position and is left out, so the all-zero iterate
/// yields the all-zero spectrum. Otherwise the total equals the total weight
/// of the events.
pub fn assign_events<T: Scalar>(
    ctx: &LikelihoodEvalContext<T>,
    ev: &EventList<T>,
    sched: &FiringSchedule,
    w: &RateVector<T>,
) -> Result<SpectrumEstimate<T>> {
    check_ctx(ctx, w.len())?;
    if ev.len() != ctx.num_events() {
        return Err(Error::DimensionMismatch { expected: ctx.num_events(), found: ev.len() });
    }
    let mut x = vec![T::zero(); ctx.n];
    for (a, (e, nb)) in ev.events.iter().zip(&ctx.neighborhoods).enumerate() {
        let j = most_likely_interval(&nb.intervals, w.as_slice())
            .ok_or_else(|| Error::Domain(format!("event {a} has no candidate positions")))?;
        let iv = nb.intervals[j];
        if nb.degree() > 1 && w.as_slice()[iv.lo..=iv.hi].iter().all(|&v| v == T::zero()) {
            continue;
        }
        copy_event(&mut x, iv.lo, &e.samples, T::one());
    }
    Ok(SpectrumEstimate { x_hat: x, method: Method::Atof, provenance: Provenance::new(Some(sched), &"assign") })
}

/// Per-scan spectrum from assigned events.
pub fn assign_normalized<T: Scalar>(
    ctx: &LikelihoodEvalContext<T>,
    ev: &EventList<T>,
    sched: &FiringSchedule,
    w: &RateVector<T>,
) -> Result<SpectrumEstimate<T>> {
    let mut est = assign_events(ctx, ev, sched, w)?;
    let inv = T::one() / T::from_usize_lossy(sched.num_scans());
    est.x_hat.iter_mut().for_each(|v| *v *= inv);
    Ok(est)
}

/// Detect, solve, assign, and normalize to a per-scan spectrum.
pub fn reconstruct<T: Scalar>(
    trace: &Trace<T>,
    sched: &FiringSchedule,
    dp: &DetectionParams<T>,
    mp: &ModelParams<T>,
    sp: &SolverParams<T>,
) -> Result<(SpectrumEstimate<T>, SolverState<T>)> {
    trace.check_schedule(sched)?;
    dp.validate()?;
    let ev = detect_events(&trace.y, dp);
    let ctx = events_to_context(&ev, sched)?;
    let state = ista_solve(&ctx, mp, sp)?;
    let mut est = assign_normalized(&ctx, &ev, sched, &state.w)?;
    est.provenance = Provenance::new(Some(sched), &(dp, mp, sp));
    Ok((est, state))
}
