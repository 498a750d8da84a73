//! Comparison of reconstructed spectra against ground truth.

use std::io::Write;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::preprocess::EventList;
use crate::scalar::Scalar;

/// Counts and rates of one comparison. True negatives are not defined for
/// this problem and are not reported.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tpr: f64,
    pub fdr: f64,
    pub fnr: f64,
    /// For every estimate, the truth item that validated it.
    pub assignments: Vec<Option<usize>>,
    /// Truth items that validated more than one estimate.
    pub multi_matched: usize,
}

impl MatchReport {
    /// Rates from counts. With nothing to find, TPR is 1; with nothing
    /// reported, FDR is 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let (tpr, fnr) = if tp + fn_ == 0 {
            (1.0, 0.0)
        } else {
            (tp as f64 / (tp + fn_) as f64, fn_ as f64 / (tp + fn_) as f64)
        };
        let fdr = if tp + fp == 0 { 0.0 } else { fp as f64 / (tp + fp) as f64 };
        Self { tp, fp, fn_, tpr, fdr, fnr, assignments: Vec::new(), multi_matched: 0 }
    }

    fn from_assignments(assignments: Vec<Option<usize>>, num_truth: usize) -> Self {
        let mut hits = vec![0usize; num_truth];
        for k in assignments.iter().flatten() {
            hits[*k] += 1;
        }
        let tp = assignments.iter().filter(|a| a.is_some()).count();
        let fp = assignments.len() - tp;
        let fn_ = hits.iter().filter(|&&h| h == 0).count();
        let mut r = Self::from_counts(tp, fp, fn_);
        r.multi_matched = hits.iter().filter(|&&h| h > 1).count();
        r.assignments = assignments;
        r
    }

    /// One JSON object per estimate: `{"estimate": j, "truth": k}` (`null` when unmatched).
    pub fn write_assignments_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            estimate: usize,
            truth: Option<usize>,
        }
        for (estimate, &truth) in self.assignments.iter().enumerate() {
            serde_json::to_writer(&mut out, &Row { estimate, truth })?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// An estimated event is a true positive when some truth event covers at
/// least half of its width. One truth event may validate several estimates.
pub fn match_events<T: Scalar>(truth: &EventList<T>, est: &EventList<T>) -> Result<MatchReport> {
    if truth.total_samples != est.total_samples {
        return Err(Error::DimensionMismatch { expected: truth.total_samples, found: est.total_samples });
    }
    let assignments = est
        .events
        .iter()
        .map(|e| {
            // truth events are sorted and disjoint: start at the first one ending at or after e.t_start
            let first = truth.events.partition_point(|t| t.t_end < e.t_start);
            truth.events[first..]
                .iter()
                .enumerate()
                .take_while(|(_, t)| t.t_start <= e.t_end)
                .map(|(k, t)| (first + k, e.t_end.min(t.t_end) + 1 - e.t_start.max(t.t_start)))
                .filter(|&(_, overlap)| 2 * overlap >= e.width())
                .max_by_key(|&(k, overlap)| (overlap, std::cmp::Reverse(k)))
                .map(|(k, _)| k)
        })
        .collect();
    Ok(MatchReport::from_assignments(assignments, truth.len()))
}

/// Linear map from sample index to the square-root mass-to-charge scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    /// Flight time per unit of `sqrt(m/z)`.
    pub c: f64,
    /// Seconds per sample.
    pub sample_period: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Self { c: 1.0, sample_period: 1e-3 }
    }
}

impl Calibration {
    pub fn new(c: f64, sample_period: f64) -> Result<Self> {
        if !(c > 0.0) || !(sample_period > 0.0) || !c.is_finite() || !sample_period.is_finite() {
            return invalid("calibration constants must be finite and > 0");
        }
        Ok(Self { c, sample_period })
    }

    /// MCR of a (fractional, 0-based) bin position; bin 0 is the first sample after firing.
    pub fn mcr(&self, position: f64) -> f64 {
        (position + 1.0) * self.sample_period / self.c
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PickedPeak {
    pub mcr: f64,
    pub intensity: f64,
    /// Centroid on the bin axis.
    pub position: f64,
    /// Full width at half maximum (bins, interpolated).
    pub fwhm: f64,
}

/// Peaks sorted by intensity, largest first.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PeakList {
    pub peaks: Vec<PickedPeak>,
}

impl PeakList {
    pub fn new(mut peaks: Vec<PickedPeak>) -> Self {
        peaks.sort_by(|a, b| b.intensity.total_cmp(&a.intensity).then(a.mcr.total_cmp(&b.mcr)));
        Self { peaks }
    }

    pub fn len(&self) -> usize {
        self.peaks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peaks.is_empty()
    }

    pub fn top(&self, k: usize) -> &[PickedPeak] {
        &self.peaks[..k.min(self.peaks.len())]
    }
}

/// Interpolated position where `x` falls to `level` walking away from `apex`
/// in direction `step` (-1 or +1); the axis end if it never does.
fn half_crossing(x: &[f64], apex: usize, level: f64, step: isize) -> f64 {
    let mut i = apex as isize;
    loop {
        let j = i + step;
        if j < 0 || j as usize >= x.len() {
            return i as f64;
        }
        let (a, b) = (x[i as usize], x[j as usize]);
        if b < level {
            return i as f64 + step as f64 * (a - level) / (a - b);
        }
        i = j;
    }
}

/// Simple centroid peak picker.
///
/// Local maxima (plateaus count once, at their middle) of height at least
/// `min_height` are considered from the tallest down; a candidate is kept
/// unless its half-maximum window already holds a taller kept apex. The
/// position is the intensity-weighted centroid over the contiguous window of
/// samples at or above half maximum, and the intensity is the apex height.
pub fn pick_peaks<T: Scalar>(x: &[T], min_height: f64, cal: &Calibration) -> Result<PeakList> {
    if !(min_height > 0.0) {
        return invalid("min_height must be > 0");
    }
    let x: Vec<f64> = x.iter().map(|v| v.as_f64()).collect();
    let n = x.len();
    let mut candidates = Vec::new();
    let mut p = 0;
    while p < n {
        let mut q = p;
        while q + 1 < n && x[q + 1] == x[p] {
            q += 1;
        }
        let v = x[p];
        let left_ok = p == 0 || x[p - 1] < v;
        let right_ok = q + 1 == n || x[q + 1] < v;
        if v >= min_height && left_ok && right_ok {
            candidates.push((p + q) / 2);
        }
        p = q + 1;
    }
    candidates.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    let mut peaks = Vec::new();
    for apex in candidates {
        let h = x[apex];
        let half = 0.5 * h;
        let mut lo = apex;
        while lo > 0 && x[lo - 1] >= half {
            lo -= 1;
        }
        let mut hi = apex;
        while hi + 1 < n && x[hi + 1] >= half {
            hi += 1;
        }
        if kept.iter().any(|&k| (lo..=hi).contains(&k)) {
            continue;
        }
        kept.push(apex);
        let (mut m0, mut m1) = (0.0, 0.0);
        for (i, &v) in x.iter().enumerate().take(hi + 1).skip(lo) {
            m0 += v;
            m1 += v * i as f64;
        }
        let position = m1 / m0;
        let fwhm = half_crossing(&x, apex, half, 1) - half_crossing(&x, apex, half, -1);
        peaks.push(PickedPeak { mcr: cal.mcr(position), intensity: h, position, fwhm });
    }
    Ok(PeakList::new(peaks))
}

/// Matches the `k` most intense peaks of each list: an estimate is a true
/// positive if some kept truth peak lies within `delta_m` on the MCR scale.
pub fn match_peaks(truth: &PeakList, est: &PeakList, k: usize, delta_m: f64) -> Result<MatchReport> {
    if k == 0 {
        return invalid("k must be >= 1");
    }
    if !(delta_m > 0.0) {
        return invalid("delta_m must be > 0");
    }
    let truth = truth.top(k);
    let mut order: Vec<usize> = (0..truth.len()).collect();
    order.sort_by(|&a, &b| truth[a].mcr.total_cmp(&truth[b].mcr));
    let assignments = est
        .top(k)
        .iter()
        .map(|p| {
            let first = order.partition_point(|&t| truth[t].mcr < p.mcr - delta_m);
            order[first..]
                .iter()
                .take_while(|&&t| truth[t].mcr <= p.mcr + delta_m)
                .min_by(|&&a, &&b| {
                    (truth[a].mcr - p.mcr).abs().total_cmp(&(truth[b].mcr - p.mcr).abs()).then(a.cmp(&b))
                })
                .copied()
        })
        .collect();
    Ok(MatchReport::from_assignments(assignments, truth.len()))
}

/// Estimates the mean single-impact weight from rare ions.
///
/// An event belongs to the bin of its apex. Bins that show an event in a
/// fraction of acquisitions strictly between `lo` and `hi` are treated as
/// rare species that almost always produce single-ion events, whose weights
/// are exponential with mean `mu`.
///
/// Detection drops the smallest impacts, which shifts the observed weights
/// up without changing their spread (the exponential is memoryless). The
/// interquartile range of an exponential is `mu ln 3` whatever the shift,
/// so the estimate is `(q75 - q25) / ln 3`.
pub fn estimate_single_ion_weight<T: Scalar>(acquisitions: &[EventList<T>], lo: f64, hi: f64) -> Result<T> {
    if acquisitions.len() < 100 {
        return Err(Error::InsufficientData(format!(
            "need at least 100 acquisitions, got {}",
            acquisitions.len()
        )));
    }
    if !(0.0 < lo && lo < hi && hi < 1.0) {
        return invalid(format!("need 0 < lo < hi < 1, got ({lo}, {hi})"));
    }
    let len = acquisitions[0].total_samples;
    let mut counts = vec![0usize; len];
    for acq in acquisitions {
        if acq.total_samples != len {
            return Err(Error::DimensionMismatch { expected: len, found: acq.total_samples });
        }
        let mut seen = Vec::new();
        for e in &acq.events {
            seen.push(e.apex());
        }
        seen.dedup();
        for b in seen {
            counts[b] += 1;
        }
    }
    let total = acquisitions.len() as f64;
    let rare: Vec<bool> = counts
        .iter()
        .map(|&c| {
            let f = c as f64 / total;
            f > lo && f < hi
        })
        .collect();
    let weights: Vec<T> = acquisitions
        .iter()
        .flat_map(|a| a.events.iter())
        .filter(|e| rare[e.apex()])
        .map(|e| e.z)
        .collect();
    if weights.is_empty() {
        return Err(Error::InsufficientData("no rare-ion bins found".into()));
    }
    let q = |p| crate::util::quantile(&weights, p).expect("non-empty");
    Ok((q(0.75) - q(0.25)) / T::lit(3f64.ln()))
}

/// Empirical CDF of FWHM / height over the peaks picked at `min_height`.
pub fn width_intensity_cdf<T: Scalar>(x: &[T], min_height: f64) -> Result<Vec<(f64, f64)>> {
    let peaks = pick_peaks(x, min_height, &Calibration::default())?;
    let mut ratios: Vec<f64> = peaks.peaks.iter().map(|p| p.fwhm / p.intensity).collect();
    ratios.sort_by(f64::total_cmp);
    let m = ratios.len() as f64;
    Ok(ratios.into_iter().enumerate().map(|(k, r)| (r, (k + 1) as f64 / m)).collect())
}

/// Largest vertical gap between two empirical CDFs given as sorted points.
pub fn kolmogorov_distance(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let eval = |cdf: &[(f64, f64)], x: f64| {
        let k = cdf.partition_point(|&(r, _)| r <= x);
        if k == 0 { 0.0 } else { cdf[k - 1].1 }
    };
    a.iter()
        .chain(b)
        .map(|&(x, _)| (eval(a, x) - eval(b, x)).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::Event;

    fn evs(spans: &[(usize, usize)], len: usize) -> EventList<f64> {
        EventList::new(
            spans.iter().map(|&(a, b)| Event::from_samples(a, vec![1.0; b - a + 1])).collect(),
            len,
        )
        .unwrap()
    }

    #[test]
    fn overlap_rule() {
        let truth = evs(&[(10, 20)], 100);
        let r = match_events(&truth, &evs(&[(12, 18)], 100)).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_), (1, 0, 0));
        let r = match_events(&truth, &evs(&[(15, 30)], 100)).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_), (0, 1, 1));
        // exactly half counts
        let r = match_events(&truth, &evs(&[(17, 24)], 100)).unwrap();
        assert_eq!(r.tp, 1);
        assert!(match_events(&truth, &evs(&[], 99)).is_err());
    }

    #[test]
    fn rates_from_counts() {
        let r = MatchReport::from_counts(8, 2, 2);
        assert_eq!((r.tpr, r.fdr, r.fnr), (0.8, 0.2, 0.2));
        let r = MatchReport::from_counts(0, 0, 0);
        assert_eq!(r.tpr + r.fnr, 1.0);
        assert_eq!(r.fdr, 0.0);
    }

    #[test]
    fn permissive_many_to_one() {
        let truth = evs(&[(10, 20)], 100);
        let r = match_events(&truth, &evs(&[(10, 13), (15, 19)], 100)).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_, r.multi_matched), (2, 0, 0, 1));
    }

    fn pulse_at(n: usize, center: usize, shape: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; n];
        let h = shape.len() / 2;
        for (d, &v) in shape.iter().enumerate() {
            x[center + d - h] += v;
        }
        x
    }

    #[test]
    fn centroid_of_symmetric_pulse() {
        let cal = Calibration::new(2.0, 0.5).unwrap();
        let x = pulse_at(300, 100, &[1.0, 3.0, 5.0, 3.0, 1.0]);
        let p = pick_peaks(&x, 0.5, &cal).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.peaks[0].mcr, cal.mcr(100.0));
        assert_eq!(p.peaks[0].intensity, 5.0);
    }

    #[test]
    fn separated_pulses_and_plateaus() {
        let mut x = pulse_at(50, 10, &[1.0, 2.0, 1.0]);
        x[30] = 4.0;
        x[31] = 4.0;
        let p = pick_peaks(&x, 0.5, &Calibration::default()).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.peaks[0].intensity, 4.0);
        assert_eq!(p.peaks[0].position, 30.5);
        assert_eq!(p.peaks[1].position, 10.0);
        assert!(pick_peaks(&x, 0.0, &Calibration::default()).is_err());
    }

    #[test]
    fn shoulder_inside_window_is_not_a_peak() {
        let x = [0.0, 5.0, 8.0, 10.0, 7.0, 7.5, 6.0, 0.0];
        let p = pick_peaks(&x, 1.0, &Calibration::default()).unwrap();
        assert_eq!(p.len(), 1);
    }

    #[test]
    fn fwhm_ratio() {
        let cdf = width_intensity_cdf(&[0.0, 4.0, 6.0, 8.0, 6.0, 4.0, 0.0], 1.0).unwrap();
        assert_eq!(cdf, vec![(0.5, 1.0)]);
    }

    fn list(mcrs: &[(f64, f64)]) -> PeakList {
        PeakList::new(
            mcrs.iter().map(|&(mcr, intensity)| PickedPeak { mcr, intensity, position: 0.0, fwhm: 1.0 }).collect(),
        )
    }

    #[test]
    fn peak_matching() {
        let truth = list(&[(10.0, 5.0), (20.0, 4.0), (30.0, 3.0)]);
        let r = match_peaks(&truth, &truth, 400, 0.01).unwrap();
        assert_eq!((r.tpr, r.fdr), (1.0, 0.0));
        let est = list(&[(10.05, 5.0), (20.005, 4.0), (40.0, 3.0)]);
        let coarse = match_peaks(&truth, &est, 400, 0.1).unwrap();
        let fine = match_peaks(&truth, &est, 400, 0.01).unwrap();
        assert_eq!((coarse.tp, coarse.fp, coarse.fn_), (2, 1, 1));
        assert_eq!((fine.tp, fine.fp, fine.fn_), (1, 2, 2));
        // only the top peak of each list survives k = 1
        let top = match_peaks(&truth, &est, 1, 0.1).unwrap();
        assert_eq!((top.tp, top.fp, top.fn_), (1, 0, 0));
        assert!(match_peaks(&truth, &est, 0, 0.1).is_err());
    }

    #[test]
    fn rare_ion_estimator_needs_data() {
        let acq = vec![evs(&[], 10); 50];
        assert!(matches!(estimate_single_ion_weight(&acq, 0.001, 0.01), Err(Error::InsufficientData(_))));
        // every acquisition sees an event at bin 3: nothing is rare
        let acq = vec![evs(&[(3, 3)], 10); 200];
        assert!(matches!(estimate_single_ion_weight(&acq, 0.001, 0.01), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn rare_ion_estimator_ignores_a_detection_floor() {
        // 1000 acquisitions, bins 0..100 each hit in 0.5% of them, weights on
        // exponential quantiles shifted by a floor of 30
        let (mu, floor) = (225.0, 30.0);
        let acq: Vec<EventList<f64>> = (0..1000)
            .map(|k| {
                let j = k / 200 * 100 + k % 200;
                let z = floor - mu * (1.0 - (j as f64 + 0.5) / 500.0).ln();
                let events = if k % 200 < 100 { vec![Event::from_samples(k % 200, vec![z])] } else { vec![] };
                EventList::new(events, 200).unwrap()
            })
            .collect();
        let est = estimate_single_ion_weight(&acq, 0.001, 0.01).unwrap();
        assert!((est - mu).abs() / mu < 0.02, "{est}");
    }

    #[test]
    fn ks_distance() {
        let a = [(1.0, 0.5), (2.0, 1.0)];
        assert_eq!(kolmogorov_distance(&a, &a), 0.0);
        let b = [(3.0, 1.0)];
        assert_eq!(kolmogorov_distance(&a, &b), 1.0);
    }
}
