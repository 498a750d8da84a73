//! Reference reconstructions: conventional scan averaging and the naive
//! uniform-split estimator for overlapped traces.

use std::fmt;

use crate::error::{invalid, Error, Result};
use crate::preprocess::EventList;
use crate::rng::fnv1a;
use crate::scalar::Scalar;
use crate::schedule::{FiringSchedule, ScanInterval};
use crate::simulator::ScanRealization;

/// Reconstruction method that produced a spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Atof,
    Naive,
    NaivePerSample,
    Average,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Atof => "atof",
            Method::Naive => "naive",
            Method::NaivePerSample => "naive-per-sample",
            Method::Average => "average",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "atof" => Ok(Method::Atof),
            "naive" => Ok(Method::Naive),
            "naive-per-sample" => Ok(Method::NaivePerSample),
            "average" => Ok(Method::Average),
            _ => Err(Error::InvalidParameter(format!(
                "unknown method {s:?} (expected atof, naive, naive-per-sample or average)"
            ))),
        }
    }
}

/// Hashes identifying the inputs a spectrum was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Provenance {
    pub schedule_hash: u64,
    pub params_hash: u64,
}

impl Provenance {
    pub fn new(sched: Option<&FiringSchedule>, params: &impl fmt::Debug) -> Self {
        Self {
            schedule_hash: sched.map_or(0, FiringSchedule::fingerprint),
            params_hash: fnv1a(format!("{params:?}").as_bytes()),
        }
    }
}

/// Reconstructed per-scan spectrum on `n` bins (ADC units per scan).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumEstimate<T> {
    pub x_hat: Vec<T>,
    pub method: Method,
    pub provenance: Provenance,
}

impl<T: Scalar> SpectrumEstimate<T> {
    pub fn len(&self) -> usize {
        self.x_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_hat.is_empty()
    }

    pub fn total(&self) -> T {
        crate::util::tree_sum(&self.x_hat)
    }
}

/// Adds `scale * samples` to `x` starting at bin `lo`; samples that would
/// run past the last bin accumulate there so no weight is lost.
pub(crate) fn copy_event<T: Scalar>(x: &mut [T], lo: usize, samples: &[T], scale: T) {
    let last = x.len() - 1;
    for (d, &v) in samples.iter().enumerate() {
        x[(lo + d).min(last)] += v * scale;
    }
}

/// `x_ave = (1/N) sum_l x^(l)`.
pub fn average_scans<T: Scalar>(scans: &[ScanRealization<T>]) -> Result<SpectrumEstimate<T>> {
    let first = scans.first().ok_or_else(|| Error::InsufficientData("no scans to average".into()))?;
    let n = first.x.len();
    let mut x = vec![T::zero(); n];
    for s in scans {
        if s.x.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: s.x.len() });
        }
        for (a, &b) in x.iter_mut().zip(&s.x) {
            *a += b;
        }
    }
    let inv = T::one() / T::from_usize_lossy(scans.len());
    x.iter_mut().for_each(|v| *v *= inv);
    Ok(SpectrumEstimate { x_hat: x, method: Method::Average, provenance: Provenance::new(None, &scans.len()) })
}

fn check_events<T: Scalar>(ev: &EventList<T>, sched: &FiringSchedule) -> Result<()> {
    if ev.total_samples != sched.trace_len() {
        return Err(Error::DimensionMismatch { expected: sched.trace_len(), found: ev.total_samples });
    }
    Ok(())
}

/// Copies every event onto each of its `deg(a)` candidate positions with
/// weight `1/deg(a)`, then divides by `N`.
pub fn naive_atof<T: Scalar>(ev: &EventList<T>, sched: &FiringSchedule) -> Result<SpectrumEstimate<T>> {
    check_events(ev, sched)?;
    let mut x = vec![T::zero(); sched.n()];
    for e in &ev.events {
        let intervals: Vec<ScanInterval> = sched.event_neighbors(e.t_start, e.t_end)?;
        let share = T::one() / T::from_usize_lossy(intervals.len());
        for iv in &intervals {
            copy_event(&mut x, iv.lo, &e.samples, share);
        }
    }
    let inv = T::one() / T::from_usize_lossy(sched.num_scans());
    x.iter_mut().for_each(|v| *v *= inv);
    Ok(SpectrumEstimate { x_hat: x, method: Method::Naive, provenance: Provenance::new(Some(sched), &"naive") })
}

/// Per-sample form `x[i] = (1/N) sum_t A[t,i] y[t] / deg_t` over the nonzero samples.
pub fn naive_atof_per_sample<T: Scalar>(y: &[T], sched: &FiringSchedule) -> Result<SpectrumEstimate<T>> {
    if y.len() != sched.trace_len() {
        return Err(Error::DimensionMismatch { expected: sched.trace_len(), found: y.len() });
    }
    let mut x = vec![T::zero(); sched.n()];
    for (t, &v) in y.iter().enumerate() {
        if v < T::zero() {
            return invalid(format!("negative trace sample at {t}"));
        }
        if v == T::zero() {
            continue;
        }
        let nb = sched.sample_neighbors(t)?;
        let share = v / T::from_usize_lossy(nb.len());
        for &i in &nb.indices {
            x[i] += share;
        }
    }
    let inv = T::one() / T::from_usize_lossy(sched.num_scans());
    x.iter_mut().for_each(|v| *v *= inv);
    Ok(SpectrumEstimate {
        x_hat: x,
        method: Method::NaivePerSample,
        provenance: Provenance::new(Some(sched), &"naive-per-sample"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::Event;

    fn scan(x: &[f64]) -> ScanRealization<f64> {
        ScanRealization { x: x.to_vec() }
    }

    #[test]
    fn averaging() {
        let one = average_scans(&[scan(&[1.0, 2.0])]).unwrap();
        assert_eq!(one.x_hat, vec![1.0, 2.0]);
        let c = average_scans(&[scan(&[3.0; 4]), scan(&[3.0; 4]), scan(&[3.0; 4])]).unwrap();
        assert_eq!(c.x_hat, vec![3.0; 4]);
        assert!(average_scans::<f64>(&[]).is_err());
        assert!(average_scans(&[scan(&[1.0]), scan(&[1.0, 2.0])]).is_err());
    }

    #[test]
    fn naive_single_scan_is_identity() {
        let s = FiringSchedule::new(vec![0], 6).unwrap();
        let ev = EventList::new(vec![Event::from_samples(1, vec![1.0, 2.0])], 6).unwrap();
        assert_eq!(naive_atof(&ev, &s).unwrap().x_hat, vec![0.0, 1.0, 2.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn naive_two_neighbors_split() {
        // n=4, tau=(0,3,5): event at samples 5..6 (0-based) maps to scan 1 bins 2..3 and scan 2 bins 0..1
        let s = FiringSchedule::new(vec![0, 3, 5], 4).unwrap();
        let ev = EventList::new(vec![Event::from_samples(5, vec![2.0, 4.0])], 9).unwrap();
        let x: SpectrumEstimate<f64> = naive_atof(&ev, &s).unwrap();
        let third = 1.0 / 3.0;
        assert_eq!(x.x_hat, vec![1.0 * third, 2.0 * third, 1.0 * third, 2.0 * third]);
        assert!((x.total() - 6.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn per_sample_form() {
        let s = FiringSchedule::new(vec![0, 3, 5], 4).unwrap();
        let mut y = vec![0.0; 9];
        y[3] = 6.0; // neighbors {3, 0}
        let x = naive_atof_per_sample(&y, &s).unwrap();
        assert_eq!(x.x_hat, vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn method_names_round_trip() {
        for m in [Method::Atof, Method::Naive, Method::NaivePerSample, Method::Average] {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("lasso".parse::<Method>().is_err());
    }
}
