//! Numerical self-checks against independent oracles: the Poisson-weighted
//! Erlang series, finite differences, quadrature, and the dense adjacency
//! matrix. Used by `atof selftest` and by the acceptance tests.

use std::fmt;

use rand::Rng;

use crate::model::bessel::{scaled_with_crossover, SERIES_CROSSOVER};
use crate::model::{event_density, smooth_cost_scaled, smooth_gradient_scaled, ModelParams};
use crate::preprocess::{events_to_context, Event, EventList};
use crate::rng;
use crate::schedule::FiringSchedule;

/// Result of one check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    /// Largest error seen (NaN counts as a failure).
    pub worst: f64,
    pub tol: f64,
    pub cases: usize,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.worst <= self.tol
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: worst {:.3e} (tol {:.0e}, {} cases)",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.worst,
            self.tol,
            self.cases
        )
    }
}

fn worst_of(acc: f64, err: f64) -> f64 {
    if err.is_nan() || acc.is_nan() {
        f64::NAN
    } else {
        acc.max(err)
    }
}

fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

/// Log of the truncated series `sum_k Pois(k; s) Erlang(z; k, mu)`, summed in
/// log space so large `s z / mu` neither overflows nor underflows.
pub fn log_density_series(z: f64, s: f64, mu: f64) -> f64 {
    // log t_k = k ln s + (k-1) ln z - k ln mu - ln k! - ln (k-1)!
    let step = (s * z / mu).ln();
    let mut log_t = (s / mu).ln();
    let mut terms = Vec::new();
    let mut peak = f64::NEG_INFINITY;
    for k in 1..1_000_000usize {
        terms.push(log_t);
        peak = peak.max(log_t);
        if log_t < peak - 50.0 {
            break;
        }
        let kf = k as f64;
        log_t += step - kf.ln() - (kf + 1.0).ln();
    }
    let sum: f64 = terms.iter().map(|&t| (t - peak).exp()).sum();
    -z / mu - s + peak + sum.ln()
}

/// Log of the closed form `e^(-z/mu - s) sqrt(s/(z mu)) I_1(2 sqrt(z s/mu))`
/// with an explicit Bessel crossover.
pub fn log_density_bessel(z: f64, s: f64, mu: f64, crossover: f64) -> f64 {
    let xi = 2.0 * (z * s / mu).sqrt();
    -z / mu - s + xi + 0.5 * (s / (z * mu)).ln() + scaled_with_crossover(1, xi, crossover).ln()
}

/// Series against closed form on a 12 x 12 log grid of `s` and `z / mu` in
/// `[1e-6, 1e3]`. The error is relative, on the densities.
pub fn series_vs_bessel(crossover: f64) -> CheckOutcome {
    let mu = 225.0;
    let grid = log_grid(1e-6, 1e3, 12);
    let mut worst = 0.0;
    for &s in &grid {
        for &r in &grid {
            let z = r * mu;
            let d = log_density_series(z, s, mu) - log_density_bessel(z, s, mu, crossover);
            worst = worst_of(worst, d.exp_m1().abs());
        }
    }
    CheckOutcome { name: "series-vs-bessel", worst, tol: 1e-9, cases: grid.len() * grid.len() }
}

/// Random small problem: schedule, disjoint events and matching context.
pub struct SmallInstance {
    pub schedule: FiringSchedule,
    pub events: EventList<f64>,
}

/// Draws a schedule with `n <= max_n` and `N <= max_scans`, then up to
/// `max_events` disjoint events of width 1 to 3 on covered samples.
pub fn small_instance(seed: u64, index: u64, max_n: usize, max_scans: usize, max_events: usize) -> SmallInstance {
    let mut r = rng::stream(seed, "selfcheck", index);
    let n = r.random_range(2..=max_n);
    let scans = r.random_range(1..=max_scans);
    let mut tau = vec![0usize];
    for _ in 1..scans {
        let last = *tau.last().expect("non-empty");
        tau.push(last + r.random_range(1..=n + 2));
    }
    let schedule = FiringSchedule::new(tau, n).expect("valid by construction");
    let len = schedule.trace_len();
    let mut events = Vec::new();
    let mut t = r.random_range(0..=2usize);
    while events.len() < max_events && t < len {
        let width = r.random_range(1..=3usize).min(len - t);
        // gaps between scans are seen by no scan
        if (t..t + width).any(|u| schedule.sample_neighbors(u).map_or(true, |nb| nb.is_empty())) {
            t += width + 1;
            continue;
        }
        let samples: Vec<f64> = (0..width).map(|_| r.random_range(1.0..500.0)).collect();
        events.push(Event::from_samples(t, samples));
        t += width + r.random_range(1..=4usize);
    }
    let events = EventList::new(events, len).expect("disjoint by construction");
    SmallInstance { schedule, events }
}

/// Analytic gradient of the smooth cost against central differences on
/// `count` random instances (`n <= 50`, at most 30 events).
///
/// Per entry the error is `|g - fd| / max(|g|, 1e-6 |g|_inf)`; the step is
/// scaled to the smallest cumulative rate the bin feeds.
pub fn gradient_vs_fd(seed: u64, count: usize) -> CheckOutcome {
    let mut worst = 0.0;
    let mut cases = 0;
    for index in 0..count as u64 {
        let inst = small_instance(seed, index, 50, 6, 30);
        let ctx = events_to_context(&inst.events, &inst.schedule).expect("instance is consistent");
        let mut r = rng::stream(seed, "selfcheck-w", index);
        let w0 = 1e-3 / 225.0;
        let w: Vec<f64> = (0..ctx.n).map(|_| 0.01 * r.random::<f64>().powi(3) + 1e-9).collect();
        let mut g = vec![0.0; ctx.n];
        smooth_gradient_scaled(&ctx, &w, w0, &mut g).expect("finite inputs");
        let s = ctx.cumulative_rates(&w, w0);
        let mut s_min = vec![f64::INFINITY; ctx.n];
        for (nb, &sa) in ctx.neighborhoods.iter().zip(&s) {
            nb.bins().for_each(|i| s_min[i] = s_min[i].min(sa));
        }
        let g_inf = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..ctx.n {
            let h = if s_min[i].is_finite() { 1e-4 * s_min[i] } else { 1e-6 };
            let mut p = w.clone();
            p[i] += h;
            let mut m = w.clone();
            m[i] -= h;
            let fp = smooth_cost_scaled(&ctx, &p, w0).expect("finite inputs");
            let fm = smooth_cost_scaled(&ctx, &m, w0).expect("finite inputs");
            let fd = (fp - fm) / (2.0 * h);
            let scale = g[i].abs().max(1e-6 * g_inf);
            let err = if scale > 0.0 { (g[i] - fd).abs() / scale } else { fd.abs() };
            worst = worst_of(worst, err);
        }
        cases += 1;
    }
    CheckOutcome { name: "gradient-vs-fd", worst, tol: 1e-5, cases }
}

/// `e^(-s) + integral of the density over z > 0` for one `(s, mu)`.
pub fn total_mass(s: f64, mu: f64) -> f64 {
    let p = ModelParams { mu, w0: 1.0, lambda: 0.0 };
    let f = |z: f64| if z > 0.0 { event_density(z, s, &p).unwrap_or(f64::NAN) } else { s / mu * (-s).exp() };
    // the density is negligible beyond sqrt(z/mu) = sqrt(s) + 8
    let upper = mu * (s.sqrt() + 8.0).powi(2);
    let pieces = 64;
    let width = upper / pieces as f64;
    let integral: f64 = (0..pieces)
        .map(|j| {
            let a = j as f64 * width;
            quadrature::double_exponential::integrate(f, a, a + width, 1e-14).integral
        })
        .sum();
    (-s).exp() + integral
}

/// Total probability is one for `(s, mu)` in `{0.5, 1, 5} x {1, 225}`.
pub fn density_normalization() -> CheckOutcome {
    let mut worst = 0.0;
    let mut cases = 0;
    for s in [0.5, 1.0, 5.0] {
        for mu in [1.0, 225.0] {
            worst = worst_of(worst, (total_mass(s, mu) - 1.0).abs());
            cases += 1;
        }
    }
    CheckOutcome { name: "density-normalization", worst, tol: 1e-6, cases }
}

/// Sparse neighbor queries against dense adjacency rows on `count` random
/// schedules (`n <= 100`, `N <= 20`). `worst` counts mismatching rows.
pub fn adjacency_oracle(seed: u64, count: usize) -> CheckOutcome {
    let mut mismatches = 0usize;
    for index in 0..count as u64 {
        let sched = small_instance(seed, 1_000_000 + index, 100, 20, 0).schedule;
        let dense = sched.dense_adjacency().expect("small schedule");
        for (t, row) in dense.iter().enumerate() {
            let want: Vec<usize> = row.iter().enumerate().filter(|(_, &a)| a == 1).map(|(i, _)| i).collect();
            let got = sched.sample_neighbors(t).map(|s| s.indices).unwrap_or_default();
            if got != want {
                mismatches += 1;
            }
        }
    }
    CheckOutcome { name: "adjacency-oracle", worst: mismatches as f64, tol: 0.0, cases: count }
}

/// The four suites run by `atof selftest`.
pub fn run_all(crossover: f64, seed: u64) -> Vec<CheckOutcome> {
    vec![series_vs_bessel(crossover), gradient_vs_fd(seed, 20), density_normalization(), adjacency_oracle(seed, 100)]
}

/// Crossover used when none is given.
pub const DEFAULT_CROSSOVER: f64 = SERIES_CROSSOVER;
