//! Firing schedules and the implicit bipartite measurement graph.
//!
//! Sample `t` of the trace is connected to bin `i` of the spectrum when some
//! scan `l` fired at `tau[l] = t - i`. The dense `T x n` adjacency is never
//! built outside of tests; neighbor queries binary-search the firing times.
//!
//! All indices are 0-based: bins are `0..n`, samples `0..T`.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::ops::Range;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::rng;

/// Upper bound on `T * n` for [`FiringSchedule::dense_adjacency`].
pub const DENSE_LIMIT: usize = 10_000_000;

/// Strictly increasing firing times (in samples) of `N` scans of length `n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiringSchedule {
    tau: Vec<usize>,
    n: usize,
}

/// Sorted set of spectrum bins adjacent to one trace sample.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NeighborSet {
    pub indices: Vec<usize>,
}

impl NeighborSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Where an event lands on the spectrum if scan `scan` produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScanInterval {
    pub scan: usize,
    /// First bin (inclusive).
    pub lo: usize,
    /// Last bin (inclusive).
    pub hi: usize,
}

impl ScanInterval {
    pub fn width(&self) -> usize {
        self.hi - self.lo + 1
    }
}

impl FiringSchedule {
    pub fn new(tau: Vec<usize>, n: usize) -> Result<Self> {
        if n == 0 {
            return invalid("scan length n must be >= 1");
        }
        if tau.is_empty() {
            return invalid("schedule needs at least one scan");
        }
        if tau[0] != 0 {
            return invalid(format!("first firing time must be 0, got {}", tau[0]));
        }
        if let Some(w) = tau.windows(2).find(|w| w[1] <= w[0]) {
            return invalid(format!("firing times must be strictly increasing ({} -> {})", w[0], w[1]));
        }
        Ok(Self { tau, n })
    }

    /// Back-to-back scans with a fixed spacing `period` (conventional TOF when `period >= n`).
    pub fn periodic(n: usize, scans: usize, period: usize) -> Result<Self> {
        if period == 0 {
            return invalid("period must be >= 1");
        }
        Self::new((0..scans).map(|l| l * period).collect(), n)
    }

    pub fn tau(&self) -> &[usize] {
        &self.tau
    }

    /// Scan length in samples (number of spectrum bins).
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_scans(&self) -> usize {
        self.tau.len()
    }

    /// Trace length `tau[N-1] + n`.
    pub fn trace_len(&self) -> usize {
        self.tau[self.tau.len() - 1] + self.n
    }

    /// Scans whose span `[tau_l, tau_l + n)` intersects samples `[t_start, t_end]`.
    fn scans_touching(&self, t_start: usize, t_end: usize) -> Range<usize> {
        // tau_l > t_start - n  and  tau_l <= t_end
        let lo = match (t_start + 1).checked_sub(self.n) {
            Some(min_tau) => self.tau.partition_point(|&x| x < min_tau),
            None => 0,
        };
        let hi = self.tau.partition_point(|&x| x <= t_end);
        lo..hi.max(lo)
    }

    /// `{ t - tau_l : 0 <= t - tau_l < n }`, sorted ascending.
    pub fn sample_neighbors(&self, t: usize) -> Result<NeighborSet> {
        let len = self.trace_len();
        if t >= len {
            return Err(Error::OutOfRange { index: t, len });
        }
        // later scans give smaller bins, so walk the range backwards
        let indices = self.scans_touching(t, t).rev().map(|l| t - self.tau[l]).collect();
        Ok(NeighborSet { indices })
    }

    /// Per contributing scan, the clipped bin interval covered by samples
    /// `[t_start, t_end]`, ordered by firing time.
    pub fn event_neighbors(&self, t_start: usize, t_end: usize) -> Result<Vec<ScanInterval>> {
        let len = self.trace_len();
        if t_start > t_end {
            return invalid(format!("event interval [{t_start}, {t_end}] is empty"));
        }
        if t_end >= len {
            return Err(Error::OutOfRange { index: t_end, len });
        }
        Ok(self
            .scans_touching(t_start, t_end)
            .map(|l| {
                let tau = self.tau[l];
                ScanInterval {
                    scan: l,
                    lo: t_start.saturating_sub(tau),
                    hi: (t_end - tau).min(self.n - 1),
                }
            })
            .collect())
    }

    /// Dense 0/1 adjacency, row-major `T x n`. Test oracle only.
    pub fn dense_adjacency(&self) -> Result<Vec<Vec<u8>>> {
        let rows = self.trace_len();
        if rows.saturating_mul(self.n) > DENSE_LIMIT {
            return Err(Error::SizeGuard { rows, cols: self.n, limit: DENSE_LIMIT });
        }
        let mut a = vec![vec![0u8; self.n]; rows];
        for &tau in &self.tau {
            for i in 0..self.n {
                a[tau + i][i] = 1;
            }
        }
        Ok(a)
    }

    /// Acquisition time `T` and acceleration factor `n / mean(dtau)`.
    ///
    /// A single-scan schedule reports an acceleration factor of 1.
    pub fn acquisition_stats(&self) -> (usize, f64) {
        let t = self.trace_len();
        let scans = self.num_scans();
        if scans < 2 {
            return (t, 1.0);
        }
        let mean_dtau = self.tau[scans - 1] as f64 / (scans - 1) as f64;
        (t, self.n as f64 / mean_dtau)
    }

    /// Serializes as a `n=<n> N=<N>` header followed by one firing time per line.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        let mut s = String::with_capacity(self.tau.len() * 8 + 32);
        writeln!(s, "n={} N={}", self.n, self.tau.len()).expect("string write");
        for t in &self.tau {
            writeln!(s, "{t}").expect("string write");
        }
        out.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Parse { line: 1, msg: "missing header".into() })?;
        let header = header?;
        let mut n = None;
        let mut count = None;
        for field in header.split_whitespace() {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: 1, msg: format!("bad header field {field:?}") })?;
            let v: usize = v
                .parse()
                .map_err(|_| Error::Parse { line: 1, msg: format!("bad integer {v:?}") })?;
            match k {
                "n" => n = Some(v),
                "N" => count = Some(v),
                _ => return Err(Error::Parse { line: 1, msg: format!("unknown header key {k:?}") }),
            }
        }
        let (n, count) = match (n, count) {
            (Some(n), Some(c)) => (n, c),
            _ => return Err(Error::Parse { line: 1, msg: "header must be `n=<n> N=<N>`".into() }),
        };
        let mut tau = Vec::with_capacity(count);
        for (i, line) in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            tau.push(line.parse().map_err(|_| Error::Parse {
                line: i + 1,
                msg: format!("bad firing time {line:?}"),
            })?);
        }
        if tau.len() != count {
            return Err(Error::Parse {
                line: tau.len() + 1,
                msg: format!("header announces {count} firing times, found {}", tau.len()),
            });
        }
        Self::new(tau, n)
    }

    /// Stable hash of `(n, tau)` for provenance records.
    pub fn fingerprint(&self) -> u64 {
        let mut bytes = Vec::with_capacity(8 * (self.tau.len() + 1));
        bytes.extend_from_slice(&(self.n as u64).to_le_bytes());
        for t in &self.tau {
            bytes.extend_from_slice(&(*t as u64).to_le_bytes());
        }
        rng::fnv1a(&bytes)
    }
}

/// Random schedule with `tau[0] = 0` and i.i.d. uniform integer gaps on
/// `[max(dtau_min, 1), dtau_max]`.
///
/// A requested minimum gap of 0 is raised to 1: two scans firing on the same
/// sample would make their spectrum columns indistinguishable.
pub fn generate_schedule(
    n: usize,
    num_scans: usize,
    dtau_min: usize,
    dtau_max: usize,
    seed: u64,
) -> Result<FiringSchedule> {
    if num_scans < 1 {
        return invalid("number of scans must be >= 1");
    }
    let lo = dtau_min.max(1);
    if dtau_max < lo {
        return invalid(format!("invalid gap interval [{dtau_min}, {dtau_max}]"));
    }
    let mut r = rng::stream(seed, "schedule", 0);
    let mut tau = Vec::with_capacity(num_scans);
    let mut t = 0usize;
    tau.push(0);
    for _ in 1..num_scans {
        t += r.random_range(lo..=dtau_max);
        tau.push(t);
    }
    FiringSchedule::new(tau, n)
}
