//! Synthetic ground truth, per-scan detector realizations, and trace assembly.
//!
//! Each bin `i` of a scan receives `K_i ~ Poisson(w[i] + w0)` ion impacts.
//! Every impact deposits an `Exp(mu)` weight, spread over a discrete Gaussian
//! pulse centered at `i` plus an integer arrival jitter. Overlapping scans add
//! up sample by sample.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::model::{ModelParams, RateVector};
use crate::rng;
use crate::scalar::Scalar;
use crate::schedule::FiringSchedule;

/// Default detector pulse width (samples).
pub const DEFAULT_PULSE_SIGMA: f64 = 2.0;
/// Default arrival-time jitter standard deviation (samples).
pub const DEFAULT_JITTER_SD: f64 = 0.5;

/// Unit-area discrete Gaussian on `-h..=h` with `h = floor(4 sigma)`.
///
/// Widths below 0.25 collapse to a single-sample delta.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let h = (4.0 * sigma).floor().max(0.0) as isize;
    if h == 0 {
        return vec![1.0];
    }
    let mut k: Vec<f64> = (-h..=h).map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// `P(round(N(0, sd^2)) = k)` for `k` in `-h..=h`, truncated and renormalized.
pub fn jitter_pmf(sd: f64) -> Vec<f64> {
    if sd <= 0.0 {
        return vec![1.0];
    }
    let h = (6.0 * sd).ceil() as isize;
    let cdf = |x: f64| 0.5 * (1.0 + statrs::function::erf::erf(x / (sd * std::f64::consts::SQRT_2)));
    let mut p: Vec<f64> = (-h..=h).map(|k| cdf(k as f64 + 0.5) - cdf(k as f64 - 0.5)).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    p
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// One species: a peak of `rate` ions per scan spread around `center`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak<T> {
    pub center: usize,
    pub rate: T,
    /// Spread of the species on the bin axis (samples).
    pub sigma: T,
}

/// Peak-list description of a spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthSpec<T> {
    pub n: usize,
    /// Chemical-noise rate per bin per scan.
    pub w0: T,
    /// Width of the detector response to a single impact.
    pub pulse_sigma: T,
    pub peaks: Vec<Peak<T>>,
}

impl<T: Scalar> GroundTruthSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return invalid("spectrum needs at least one bin");
        }
        if !(self.w0 > T::zero()) {
            return invalid("w0 must be > 0");
        }
        if !(self.pulse_sigma >= T::zero()) {
            return invalid("pulse_sigma must be >= 0");
        }
        for (k, p) in self.peaks.iter().enumerate() {
            if p.center >= self.n {
                return invalid(format!("peak {k} center {} outside [0, {})", p.center, self.n));
            }
            if !(p.rate > T::zero()) || !p.rate.is_finite() {
                return invalid(format!("peak {k} rate must be > 0"));
            }
            if !(p.sigma > T::zero()) {
                return invalid(format!("peak {k} sigma must be > 0"));
            }
        }
        Ok(())
    }

    /// Random multi-species spectrum: centers uniform away from the edges,
    /// rates log-uniform on `rate_range`, widths uniform on `sigma_range`.
    pub fn synthetic(
        n: usize,
        num_peaks: usize,
        rate_range: (f64, f64),
        sigma_range: (f64, f64),
        w0: f64,
        pulse_sigma: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(rate_range.0 > 0.0 && rate_range.0 <= rate_range.1) {
            return invalid("rate range must satisfy 0 < lo <= hi");
        }
        if !(sigma_range.0 > 0.0 && sigma_range.0 <= sigma_range.1) {
            return invalid("sigma range must satisfy 0 < lo <= hi");
        }
        let margin = (8.0 * (sigma_range.1 + pulse_sigma)).ceil() as usize + 2;
        if n <= 2 * margin {
            return invalid(format!("n = {n} too small for peaks of width {}", sigma_range.1));
        }
        let mut r = rng::stream(seed, "truth", 0);
        let (llo, lhi) = (rate_range.0.ln(), rate_range.1.ln());
        let mut peaks: Vec<Peak<T>> = (0..num_peaks)
            .map(|_| Peak {
                center: r.random_range(margin..n - margin),
                rate: T::lit((llo + (lhi - llo) * r.random::<f64>()).exp()),
                sigma: T::lit(sigma_range.0 + (sigma_range.1 - sigma_range.0) * r.random::<f64>()),
            })
            .collect();
        peaks.sort_by_key(|p| p.center);
        let spec = Self { n, w0: T::lit(w0), pulse_sigma: T::lit(pulse_sigma), peaks };
        spec.validate()?;
        Ok(spec)
    }

    /// Key-value text: `n`, `w0`, `pulse_sigma`, then one `peak = center, rate, sigma` per line.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        let mut s = String::new();
        writeln!(s, "n = {}", self.n).unwrap();
        writeln!(s, "w0 = {:e}", self.w0.as_f64()).unwrap();
        writeln!(s, "pulse_sigma = {}", self.pulse_sigma.as_f64()).unwrap();
        writeln!(s, "# peak = center, rate, sigma").unwrap();
        for p in &self.peaks {
            writeln!(s, "peak = {}, {:e}, {}", p.center, p.rate.as_f64(), p.sigma.as_f64()).unwrap();
        }
        out.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse { line, msg };
        let mut n = None;
        let mut w0 = None;
        let mut pulse_sigma = DEFAULT_PULSE_SIGMA;
        let mut peaks = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| perr(i + 1, format!("expected `key = value`, got {line:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            let num = |s: &str| s.trim().parse::<f64>().map_err(|_| perr(i + 1, format!("bad number {s:?}")));
            match k {
                "n" => n = Some(v.parse::<usize>().map_err(|_| perr(i + 1, format!("bad n {v:?}")))?),
                "w0" => w0 = Some(num(v)?),
                "pulse_sigma" => pulse_sigma = num(v)?,
                "peak" => {
                    let f: Vec<&str> = v.split(',').collect();
                    if f.len() != 3 {
                        return Err(perr(i + 1, "peak needs `center, rate, sigma`".into()));
                    }
                    let center = f[0]
                        .trim()
                        .parse::<usize>()
                        .map_err(|_| perr(i + 1, format!("bad center {:?}", f[0])))?;
                    peaks.push(Peak { center, rate: T::lit(num(f[1])?), sigma: T::lit(num(f[2])?) });
                }
                _ => return Err(perr(i + 1, format!("unknown key {k:?}"))),
            }
        }
        let spec = Self {
            n: n.ok_or_else(|| perr(0, "missing `n`".into()))?,
            w0: T::lit(w0.ok_or_else(|| perr(0, "missing `w0`".into()))?),
            pulse_sigma: T::lit(pulse_sigma),
            peaks,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Adds `amount * kernel` centered at `center`, renormalizing over the
/// in-range part so the full amount lands on the axis.
fn deposit_normalized<T: Scalar>(out: &mut [T], center: usize, amount: f64, kernel: &[f64]) {
    let h = (kernel.len() / 2) as isize;
    let n = out.len() as isize;
    let c = center as isize;
    let inside: f64 = (-h..=h).filter(|d| (0..n).contains(&(c + d))).map(|d| kernel[(d + h) as usize]).sum();
    for d in -h..=h {
        let i = c + d;
        if (0..n).contains(&i) {
            out[i as usize] += T::lit(amount * kernel[(d + h) as usize] / inside);
        }
    }
}

/// Materializes `w[i] = sum_peaks rate * kernel(i - center)`.
pub fn rate_vector_of<T: Scalar>(spec: &GroundTruthSpec<T>) -> Result<RateVector<T>> {
    spec.validate()?;
    let mut w = vec![T::zero(); spec.n];
    for p in &spec.peaks {
        deposit_normalized(&mut w, p.center, p.rate.as_f64(), &gaussian_kernel(p.sigma.as_f64()));
    }
    RateVector::new(w)
}

/// Detector output of one scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRealization<T> {
    pub x: Vec<T>,
}

/// Draws single-scan detector outputs.
#[derive(Debug, Clone)]
pub struct ScanSampler {
    pulse: Vec<f64>,
    jitter_sd: f64,
}

impl ScanSampler {
    pub fn new(pulse_sigma: f64, jitter_sd: f64) -> Result<Self> {
        if !(pulse_sigma >= 0.0) || !(jitter_sd >= 0.0) {
            return invalid("pulse sigma and jitter sd must be >= 0");
        }
        Ok(Self { pulse: gaussian_kernel(pulse_sigma), jitter_sd })
    }

    pub fn pulse(&self) -> &[f64] {
        &self.pulse
    }

    pub fn jitter_sd(&self) -> f64 {
        self.jitter_sd
    }

    /// Draws one scan; `seed` and `index` select the random sub-streams.
    pub fn draw<T: Scalar>(&self, w: &RateVector<T>, params: &ModelParams<T>, seed: u64, index: u64) -> ScanRealization<T> {
        let n = w.len();
        let mut counts = rng::stream(seed, "scans", index);
        let mut jitter = rng::stream(seed, "jitter", index);
        let mu = params.mu.as_f64();
        let w0 = params.w0.as_f64();
        let weight = Exp::new(1.0 / mu).expect("mu > 0");
        let normal = (self.jitter_sd > 0.0).then(|| Normal::new(0.0, self.jitter_sd).expect("sd > 0"));
        let h = (self.pulse.len() / 2) as isize;
        let mut x = vec![0.0f64; n];
        for i in 0..n {
            let rate = w[i].as_f64() + w0;
            if rate <= 0.0 {
                continue;
            }
            let k = Poisson::new(rate).expect("rate > 0").sample(&mut counts) as u64;
            for _ in 0..k {
                let z: f64 = weight.sample(&mut counts);
                let shift = normal.map_or(0, |d| d.sample(&mut jitter).round() as isize);
                let c = i as isize + shift;
                for (d, kv) in (-h..=h).zip(&self.pulse) {
                    let j = c + d;
                    if j >= 0 && (j as usize) < n {
                        x[j as usize] += z * kv;
                    }
                }
            }
        }
        ScanRealization { x: x.into_iter().map(T::lit).collect() }
    }

    /// `num_scans` independent scans, drawn in parallel, ordered by scan index.
    pub fn draw_many<T: Scalar>(
        &self,
        w: &RateVector<T>,
        params: &ModelParams<T>,
        num_scans: usize,
        seed: u64,
    ) -> Vec<ScanRealization<T>> {
        (0..num_scans).into_par_iter().map(|l| self.draw(w, params, seed, l as u64)).collect()
    }

    /// Mean of `count` scans drawn on sub-streams disjoint from any
    /// acquisition (indices from `2^32`). Summed in index order, so the result
    /// does not depend on the thread count.
    pub fn empirical_mean<T: Scalar>(&self, w: &RateVector<T>, params: &ModelParams<T>, count: usize, seed: u64) -> Vec<T> {
        const FIRST: u64 = 1 << 32;
        const CHUNK: usize = 64;
        let mut sum = vec![0.0f64; w.len()];
        for start in (0..count).step_by(CHUNK) {
            let end = (start + CHUNK).min(count);
            let scans: Vec<ScanRealization<T>> =
                (start..end).into_par_iter().map(|k| self.draw(w, params, seed, FIRST + k as u64)).collect();
            for scan in &scans {
                sum.iter_mut().zip(&scan.x).for_each(|(a, b)| *a += b.as_f64());
            }
        }
        let c = count.max(1) as f64;
        sum.into_iter().map(|v| T::lit(v / c)).collect()
    }

    /// Noiseless per-scan expectation `mu * (w + w0)` blurred by the pulse and jitter.
    pub fn expected_spectrum<T: Scalar>(&self, w: &RateVector<T>, params: &ModelParams<T>) -> Vec<T> {
        let kernel = convolve(&self.pulse, &jitter_pmf(self.jitter_sd));
        let h = (kernel.len() / 2) as isize;
        let n = w.len();
        let mu = params.mu.as_f64();
        let w0 = params.w0.as_f64();
        let mut out = vec![0.0f64; n];
        for i in 0..n {
            let a = mu * (w[i].as_f64() + w0);
            for (d, kv) in (-h..=h).zip(&kernel) {
                let j = i as isize + d;
                if j >= 0 && (j as usize) < n {
                    out[j as usize] += a * kv;
                }
            }
        }
        out.into_iter().map(T::lit).collect()
    }
}

/// Convenience wrapper around [`ScanSampler::draw`].
pub fn draw_scan<T: Scalar>(
    w: &RateVector<T>,
    params: &ModelParams<T>,
    pulse_sigma: f64,
    jitter_sd: f64,
    seed: u64,
) -> Result<ScanRealization<T>> {
    Ok(ScanSampler::new(pulse_sigma, jitter_sd)?.draw(w, params, seed, 0))
}

/// Detector trace of overlapping scans.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace<T> {
    pub y: Vec<T>,
    /// Scan length the trace was assembled with.
    pub n: usize,
    pub num_scans: usize,
}

impl<T: Scalar> Trace<T> {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Checks that the trace belongs to `sched`.
    pub fn check_schedule(&self, sched: &FiringSchedule) -> Result<()> {
        if self.y.len() != sched.trace_len() {
            return Err(Error::DimensionMismatch { expected: sched.trace_len(), found: self.y.len() });
        }
        if self.n != sched.n() || self.num_scans != sched.num_scans() {
            return invalid(format!(
                "trace was built for n={} N={}, schedule has n={} N={}",
                self.n,
                self.num_scans,
                sched.n(),
                sched.num_scans()
            ));
        }
        Ok(())
    }

    /// Adds white Gaussian noise and clips at zero.
    pub fn add_white_noise(&mut self, sd: f64, seed: u64) -> Result<()> {
        if !(sd >= 0.0) {
            return invalid("noise sd must be >= 0");
        }
        if sd == 0.0 {
            return Ok(());
        }
        let d = Normal::new(0.0, sd).expect("sd > 0");
        let mut r = rng::stream(seed, "noise", 0);
        for v in &mut self.y {
            *v = (*v + T::lit(d.sample(&mut r))).max(T::zero());
        }
        Ok(())
    }
}

/// Superposition `y[t] = sum_l x_l[t - tau_l]`.
pub fn assemble_trace<T: Scalar>(scans: &[ScanRealization<T>], sched: &FiringSchedule) -> Result<Trace<T>> {
    if scans.len() != sched.num_scans() {
        return Err(Error::DimensionMismatch { expected: sched.num_scans(), found: scans.len() });
    }
    let n = sched.n();
    let mut y = vec![T::zero(); sched.trace_len()];
    for (scan, &tau) in scans.iter().zip(sched.tau()) {
        if scan.x.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: scan.x.len() });
        }
        for (dst, &v) in y[tau..tau + n].iter_mut().zip(&scan.x) {
            *dst += v;
        }
    }
    Ok(Trace { y, n, num_scans: sched.num_scans() })
}

/// Acquisition time and acceleration factor of a schedule.
pub fn acquisition_stats(sched: &FiringSchedule) -> (usize, f64) {
    sched.acquisition_stats()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernels_have_unit_area() {
        for s in [0.1, 0.5, 1.0, 2.0, 3.7] {
            let k = gaussian_kernel(s);
            assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(k.len() % 2, 1);
        }
        assert_eq!(gaussian_kernel(0.2), vec![1.0]);
        let p = jitter_pmf(0.5);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // P(|N(0, 0.25)| < 0.5) = erf(0.5 / (0.5 sqrt 2)) = 0.6827
        assert!((p[p.len() / 2] - 0.682_689_492).abs() < 1e-6);
    }

    fn spec(peaks: Vec<Peak<f64>>) -> GroundTruthSpec<f64> {
        GroundTruthSpec { n: 200, w0: 1e-6, pulse_sigma: 2.0, peaks }
    }

    #[test]
    fn empty_peak_list_gives_zero_rates() {
        let w = rate_vector_of(&spec(vec![])).unwrap();
        assert!(w.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn delta_peak() {
        let w = rate_vector_of(&spec(vec![Peak { center: 50, rate: 3.0, sigma: 0.1 }])).unwrap();
        assert_eq!(w[50], 3.0);
        assert_eq!(w.total(), 3.0);
    }

    #[test]
    fn rate_mass_is_conserved() {
        let peaks = vec![
            Peak { center: 3, rate: 0.7, sigma: 2.5 },
            Peak { center: 100, rate: 1.3, sigma: 1.0 },
            Peak { center: 198, rate: 0.01, sigma: 4.0 },
        ];
        let w = rate_vector_of(&spec(peaks)).unwrap();
        assert!((w.total() - 2.01).abs() < 1e-9);
    }

    #[test]
    fn spec_validation() {
        assert!(rate_vector_of(&spec(vec![Peak { center: 200, rate: 1.0, sigma: 1.0 }])).is_err());
        assert!(rate_vector_of(&spec(vec![Peak { center: 2, rate: 0.0, sigma: 1.0 }])).is_err());
        assert!(rate_vector_of(&spec(vec![Peak { center: 2, rate: 1.0, sigma: 0.0 }])).is_err());
    }

    #[test]
    fn spec_text_round_trip() {
        let s = GroundTruthSpec::<f64>::synthetic(5000, 30, (0.001, 0.5), (0.5, 2.0), 1e-6, 2.0, 9).unwrap();
        let mut buf = Vec::new();
        s.write_text(&mut buf).unwrap();
        let back = GroundTruthSpec::<f64>::read_text(buf.as_slice()).unwrap();
        assert_eq!(back.n, s.n);
        assert_eq!(back.peaks.len(), 30);
        for (a, b) in back.peaks.iter().zip(&s.peaks) {
            assert_eq!(a.center, b.center);
            assert!((a.rate - b.rate).abs() <= 1e-12 * b.rate);
        }
        assert!(GroundTruthSpec::<f64>::read_text("n = 10\nfoo = 1\n".as_bytes()).is_err());
        assert!(GroundTruthSpec::<f64>::read_text("w0 = 1\n".as_bytes()).is_err());
    }

    #[test]
    fn tiny_rates_give_empty_scans() {
        let w = RateVector::<f64>::zeros(100);
        let p = ModelParams { mu: 225.0, w0: 1e-12, lambda: 0.0 };
        let s = draw_scan(&w, &p, 2.0, 0.5, 1).unwrap();
        assert!(s.x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn draws_are_reproducible() {
        let w = rate_vector_of(&spec(vec![Peak { center: 80, rate: 2.0, sigma: 1.0 }])).unwrap();
        let p = ModelParams { mu: 225.0, w0: 1e-3, lambda: 0.0 };
        let sampler = ScanSampler::new(2.0, 0.5).unwrap();
        let a = sampler.draw_many(&w, &p, 8, 42);
        let b = sampler.draw_many(&w, &p, 8, 42);
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn expected_spectrum_mass() {
        let w = rate_vector_of(&spec(vec![Peak { center: 100, rate: 2.0, sigma: 1.0 }])).unwrap();
        let p = ModelParams { mu: 10.0, w0: 1e-6, lambda: 0.0 };
        let e = ScanSampler::new(2.0, 0.5).unwrap().expected_spectrum(&w, &p);
        let total: f64 = e.iter().sum();
        // interior mass is exact; edge bins lose part of their w0 blur
        assert!((total - 10.0 * (2.0 + 200.0 * 1e-6)).abs() < 1e-4);
    }

    #[test]
    fn assembly_single_scan_and_tof() {
        let scans = vec![
            ScanRealization { x: vec![1.0, 0.0, 2.0] },
            ScanRealization { x: vec![0.5, 0.5, 0.0] },
        ];
        let one = assemble_trace(&scans[..1], &FiringSchedule::new(vec![0], 3).unwrap()).unwrap();
        assert_eq!(one.y, vec![1.0, 0.0, 2.0]);
        let tof = assemble_trace(&scans, &FiringSchedule::new(vec![0, 5], 3).unwrap()).unwrap();
        assert_eq!(tof.y, vec![1.0, 0.0, 2.0, 0.0, 0.0, 0.5, 0.5, 0.0]);
        let ovl = assemble_trace(&scans, &FiringSchedule::new(vec![0, 2], 3).unwrap()).unwrap();
        assert_eq!(ovl.y, vec![1.0, 0.0, 2.5, 0.5, 0.0]);
        assert!(assemble_trace(&scans, &FiringSchedule::new(vec![0], 3).unwrap()).is_err());
    }

    #[test]
    fn white_noise_is_clipped() {
        let mut t = Trace { y: vec![0.0f64; 1000], n: 1000, num_scans: 1 };
        t.add_white_noise(1.0, 3).unwrap();
        assert!(t.y.iter().all(|&v| v >= 0.0));
        assert!(t.y.iter().any(|&v| v > 0.0));
    }
}
