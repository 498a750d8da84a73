//! Event detection: turns a raw trace into a list of impact events.
//!
//! A run of samples at or above `hw` that is at least `d_min` samples long
//! marks a pulse. Its support is the surrounding run of samples at or above
//! `h0`. Everything outside a support is a zero-weight observation.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{EventNeighborhood, LikelihoodEvalContext};
use crate::scalar::Scalar;
use crate::schedule::FiringSchedule;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionParams<T> {
    /// Support threshold.
    pub h0: T,
    /// Width-test threshold.
    pub hw: T,
    /// Minimum run length at `hw`, in samples.
    pub d_min: usize,
}

impl<T: Scalar> DetectionParams<T> {
    pub fn new(h0: T, hw: T, d_min: usize) -> Result<Self> {
        let p = Self { h0, hw, d_min };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h0 > T::zero()) || !(self.h0 <= self.hw) || !self.hw.is_finite() {
            return invalid(format!("need 0 < h0 <= hw, got h0={} hw={}", self.h0, self.hw));
        }
        if self.d_min == 0 {
            return invalid("d_min must be >= 1");
        }
        Ok(())
    }
}

/// One detected impact event on the trace axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event<T> {
    #[serde(rename = "t0")]
    pub t_start: usize,
    #[serde(rename = "t1")]
    pub t_end: usize,
    /// Area under the pulse, the sum of `samples`.
    pub z: T,
    pub samples: Vec<T>,
}

impl<T: Scalar> Event<T> {
    pub fn from_samples(t_start: usize, samples: Vec<T>) -> Self {
        let z = samples.iter().copied().sum();
        Self { t_start, t_end: t_start + samples.len() - 1, z, samples }
    }

    pub fn width(&self) -> usize {
        self.t_end - self.t_start + 1
    }

    /// Position of the largest sample.
    pub fn apex(&self) -> usize {
        let mut best = 0;
        for (k, v) in self.samples.iter().enumerate() {
            if *v > self.samples[best] {
                best = k;
            }
        }
        self.t_start + best
    }
}

/// Sorted, disjoint events of one trace (or spectrum).
#[derive(Debug, Clone, PartialEq)]
pub struct EventList<T> {
    pub events: Vec<Event<T>>,
    /// Length of the axis the events live on.
    pub total_samples: usize,
}

impl<T: Scalar> EventList<T> {
    pub fn new(mut events: Vec<Event<T>>, total_samples: usize) -> Result<Self> {
        events.sort_by_key(|e| e.t_start);
        for e in &events {
            if e.t_start > e.t_end || e.t_end >= total_samples || e.samples.len() != e.width() {
                return invalid(format!("malformed event [{}, {}]", e.t_start, e.t_end));
            }
            if !(e.z > T::zero()) {
                return invalid(format!("event [{}, {}] has non-positive weight", e.t_start, e.t_end));
            }
        }
        if let Some(w) = events.windows(2).find(|w| w[1].t_start <= w[0].t_end) {
            return invalid(format!("events [{}, {}] and [{}, {}] overlap", w[0].t_start, w[0].t_end, w[1].t_start, w[1].t_end));
        }
        Ok(Self { events, total_samples })
    }

    pub fn empty(total_samples: usize) -> Self {
        Self { events: Vec::new(), total_samples }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn total_weight(&self) -> T {
        self.events.iter().map(|e| e.z).sum()
    }

    /// Number of samples in the zero-weight set (not covered by any event).
    pub fn zero_weight_len(&self) -> usize {
        self.total_samples - self.events.iter().map(Event::width).sum::<usize>()
    }

    /// Maximal sample runs not covered by any event.
    pub fn zero_weight_intervals(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut next = 0;
        for e in &self.events {
            if e.t_start > next {
                out.push((next, e.t_start - 1));
            }
            next = e.t_end + 1;
        }
        if next < self.total_samples {
            out.push((next, self.total_samples - 1));
        }
        out
    }

    /// The signal with everything outside events set to zero.
    pub fn to_dense(&self) -> Vec<T> {
        let mut y = vec![T::zero(); self.total_samples];
        for e in &self.events {
            y[e.t_start..=e.t_end].copy_from_slice(&e.samples);
        }
        y
    }

    /// JSON-lines, one `{"t0", "t1", "z", "samples"}` object per event.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()>
    where
        T: Serialize,
    {
        for e in &self.events {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R, total_samples: usize) -> Result<Self>
    where
        T: for<'de> Deserialize<'de>,
    {
        let mut events = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: Event<T> =
                serde_json::from_str(&line).map_err(|err| Error::Parse { line: i + 1, msg: err.to_string() })?;
            events.push(e);
        }
        Self::new(events, total_samples)
    }
}

/// Detects impact events in `y`.
pub fn detect_events<T: Scalar>(y: &[T], p: &DetectionParams<T>) -> EventList<T> {
    let len = y.len();
    let mut supports: Vec<(usize, usize)> = Vec::new();
    let mut t = 0;
    while t < len {
        if y[t] < p.hw {
            t += 1;
            continue;
        }
        let run_start = t;
        while t < len && y[t] >= p.hw {
            t += 1;
        }
        let run_end = t - 1;
        if run_end - run_start + 1 < p.d_min {
            continue;
        }
        let mut lo = run_start;
        while lo > 0 && y[lo - 1] >= p.h0 {
            lo -= 1;
        }
        let mut hi = run_end;
        while hi + 1 < len && y[hi + 1] >= p.h0 {
            hi += 1;
        }
        match supports.last_mut() {
            // touching or shared supports become one event
            Some(last) if lo <= last.1 + 1 => last.1 = last.1.max(hi),
            _ => supports.push((lo, hi)),
        }
        t = t.max(hi + 1);
    }
    let events = supports
        .into_iter()
        .map(|(lo, hi)| Event::from_samples(lo, y[lo..=hi].to_vec()))
        .collect();
    EventList { events, total_samples: len }
}

/// Joins events with the firing schedule into a likelihood context.
pub fn events_to_context<T: Scalar>(ev: &EventList<T>, sched: &FiringSchedule) -> Result<LikelihoodEvalContext<T>> {
    if ev.total_samples != sched.trace_len() {
        return Err(Error::DimensionMismatch { expected: sched.trace_len(), found: ev.total_samples });
    }
    let mut weights = Vec::with_capacity(ev.len());
    let mut neighborhoods = Vec::with_capacity(ev.len());
    for e in &ev.events {
        weights.push(e.z);
        neighborhoods.push(EventNeighborhood::from_intervals(sched.event_neighbors(e.t_start, e.t_end)?));
    }
    LikelihoodEvalContext::new(weights, neighborhoods, sched.n(), sched.num_scans())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dp(h0: f64, hw: f64, d_min: usize) -> DetectionParams<f64> {
        DetectionParams::new(h0, hw, d_min).unwrap()
    }

    #[test]
    fn all_zero_trace() {
        let ev = detect_events(&[0.0; 10], &dp(0.5, 1.0, 1));
        assert!(ev.is_empty());
        assert_eq!(ev.zero_weight_len(), 10);
        assert_eq!(ev.zero_weight_intervals(), vec![(0, 9)]);
    }

    #[test]
    fn triangle_pulse() {
        let y = [0.0, 1.0, 3.0, 5.0, 3.0, 1.0, 0.0];
        let ev = detect_events(&y, &dp(1.0, 3.0, 2));
        assert_eq!(ev.len(), 1);
        let e = &ev.events[0];
        assert_eq!((e.t_start, e.t_end), (1, 5));
        assert_eq!(e.z, 13.0);
        assert_eq!(e.apex(), 3);
    }

    #[test]
    fn four_pulses_three_wide_enough() {
        // widths at hw = 2: 3, 4, 1, 2 samples; d_min = 2 rejects the third
        let y = [
            0.0, 1.0, 3.0, 4.0, 3.0, 1.0, 0.0, //
            0.5, 2.5, 3.0, 3.5, 2.0, 0.5, 0.0, //
            1.0, 6.0, 1.0, 0.0, //
            1.0, 2.0, 2.0, 1.0, 0.0,
        ];
        let ev = detect_events(&y, &dp(0.5, 2.0, 2));
        assert_eq!(ev.len(), 3);
        assert_eq!(ev.zero_weight_len() + ev.events.iter().map(Event::width).sum::<usize>(), y.len());
    }

    #[test]
    fn pulses_sharing_support_merge() {
        let y = [0.0, 3.0, 3.0, 0.6, 3.0, 3.0, 0.0];
        let ev = detect_events(&y, &dp(0.5, 2.0, 2));
        assert_eq!(ev.len(), 1);
        assert_eq!((ev.events[0].t_start, ev.events[0].t_end), (1, 5));
    }

    #[test]
    fn pulse_at_edges() {
        let y = [4.0, 4.0, 0.0, 0.0, 4.0, 4.0];
        let ev = detect_events(&y, &dp(1.0, 2.0, 2));
        assert_eq!(ev.len(), 2);
        assert_eq!(ev.events[1].t_end, 5);
    }

    #[test]
    fn idempotent_on_zeroed_trace() {
        let y = [0.0, 0.3, 1.0, 3.0, 5.0, 3.0, 1.0, 0.2, 2.5, 0.1, 0.0, 2.0, 2.0, 0.9];
        let p = dp(0.5, 2.0, 2);
        let ev = detect_events(&y, &p);
        let again = detect_events(&ev.to_dense(), &p);
        assert_eq!(ev, again);
    }

    #[test]
    fn bad_params() {
        assert!(DetectionParams::new(0.0, 1.0, 1).is_err());
        assert!(DetectionParams::new(2.0, 1.0, 1).is_err());
        assert!(DetectionParams::new(0.5, 1.0, 0).is_err());
    }

    #[test]
    fn context_from_example_schedule() {
        let sched = FiringSchedule::new(vec![0, 3, 5], 4).unwrap();
        let ev = EventList::new(vec![Event::from_samples(5, vec![1.0, 2.0])], 9).unwrap();
        let ctx = events_to_context(&ev, &sched).unwrap();
        assert_eq!(ctx.num_events(), 1);
        assert_eq!(ctx.neighborhoods[0].degree(), 2);
        assert_eq!(ctx.neighborhoods[0].ranges, vec![(0, 3)]);
    }

    #[test]
    fn context_single_scan_degree_one() {
        let sched = FiringSchedule::new(vec![0], 10).unwrap();
        let y = [0.0, 2.0, 2.0, 0.0, 0.0, 3.0, 3.0, 3.0, 0.0, 0.0];
        let ev = detect_events(&y, &dp(1.0, 1.5, 1));
        let ctx = events_to_context(&ev, &sched).unwrap();
        assert_eq!(ctx.num_events(), 2);
        assert!(ctx.neighborhoods.iter().all(|nb| nb.degree() == 1));
    }

    #[test]
    fn context_length_mismatch() {
        let sched = FiringSchedule::new(vec![0], 10).unwrap();
        assert!(events_to_context(&EventList::<f64>::empty(9), &sched).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let ev = EventList::new(
            vec![Event::from_samples(2, vec![1.0, 2.5]), Event::from_samples(7, vec![4.0])],
            10,
        )
        .unwrap();
        let mut buf = Vec::new();
        ev.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("{\"t0\":2,\"t1\":3,\"z\":3.5,\"samples\":[1.0,2.5]}\n"));
        assert_eq!(EventList::<f64>::read_jsonl(buf.as_slice(), 10).unwrap(), ev);
    }

    #[test]
    fn overlapping_events_rejected() {
        let r = EventList::new(vec![Event::from_samples(2, vec![1.0, 2.5]), Event::from_samples(3, vec![4.0])], 10);
        assert!(r.is_err());
    }
}
