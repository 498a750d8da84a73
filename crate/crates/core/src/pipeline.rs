//! End-to-end experiments: seeded simulation, reconstruction by any method,
//! and evaluation against the noiseless expected spectrum.

use std::fmt;
use std::str::FromStr;

use crate::baselines::{average_scans, naive_atof, Method, Provenance, SpectrumEstimate};
use crate::config::RunConfig;
use crate::error::{invalid, Error, Result};
use crate::evaluate::{match_events, match_peaks, pick_peaks, MatchReport};
use crate::model::{LikelihoodEvalContext, RateVector};
use crate::preprocess::{detect_events, events_to_context, DetectionParams, EventList};
use crate::schedule::{generate_schedule, FiringSchedule};
use crate::simulator::{assemble_trace, rate_vector_of, GroundTruthSpec, ScanRealization, ScanSampler, Trace};
use crate::solver::{assign_normalized, ista_solve, ista_solve_with, SolverParams, SolverState};

/// Everything simulated for one seeded acquisition.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: RunConfig,
    pub spec: GroundTruthSpec<f64>,
    pub w: RateVector<f64>,
    pub schedule: FiringSchedule,
    pub scans: Vec<ScanRealization<f64>>,
    pub trace: Trace<f64>,
    /// Noiseless per-scan spectrum.
    pub expected: Vec<f64>,
    /// Spectrum scored against: `expected`, or a high-N empirical mean when
    /// `evaluation.truth_scans > 0`.
    pub reference: Vec<f64>,
}

/// Loads the configured peak list or draws a synthetic one.
pub fn ground_truth(cfg: &RunConfig) -> Result<GroundTruthSpec<f64>> {
    let s = &cfg.simulation;
    match &s.spec_path {
        Some(path) => {
            let file = std::fs::File::open(path)?;
            let spec = GroundTruthSpec::read_text(std::io::BufReader::new(file))?;
            if spec.n != s.n {
                return Err(Error::DimensionMismatch { expected: s.n, found: spec.n });
            }
            Ok(spec)
        }
        None => GroundTruthSpec::synthetic(
            s.n,
            s.num_peaks,
            (s.rate_min, s.rate_max),
            (s.sigma_min, s.sigma_max),
            s.w0,
            s.pulse_sigma,
            cfg.seed,
        ),
    }
}

impl Experiment {
    pub fn simulate(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let spec = ground_truth(cfg)?;
        Self::simulate_spec(cfg, spec)
    }

    /// Simulates with an explicit ground truth.
    pub fn simulate_spec(cfg: &RunConfig, spec: GroundTruthSpec<f64>) -> Result<Self> {
        let s = &cfg.simulation;
        let w = rate_vector_of(&spec)?;
        let schedule = generate_schedule(s.n, s.num_scans, s.dtau_min, s.dtau_max, cfg.seed)?;
        let sampler = ScanSampler::new(spec.pulse_sigma, s.jitter_sd)?;
        let truth_params = crate::model::ModelParams::new(s.mu, spec.w0, 0.0)?;
        let scans = sampler.draw_many(&w, &truth_params, s.num_scans, cfg.seed);
        let mut trace = assemble_trace(&scans, &schedule)?;
        trace.add_white_noise(s.noise_sd, cfg.seed)?;
        let expected = sampler.expected_spectrum(&w, &truth_params);
        let reference = match cfg.evaluation.truth_scans {
            0 => expected.clone(),
            m => sampler.empirical_mean(&w, &truth_params, m, cfg.seed),
        };
        Ok(Self { config: cfg.clone(), spec, w, schedule, scans, trace, expected, reference })
    }

    pub fn events(&self) -> Result<EventList<f64>> {
        Ok(detect_events(&self.trace.y, &self.config.detection.params()?))
    }

    pub fn truth_events(&self) -> Result<EventList<f64>> {
        Ok(detect_events(&self.reference, &self.config.evaluation.detection()?))
    }
}

/// Events and likelihood context of a trace, reusable across solver runs.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub events: EventList<f64>,
    pub ctx: LikelihoodEvalContext<f64>,
}

impl Prepared {
    pub fn new(trace: &Trace<f64>, sched: &FiringSchedule, dp: &DetectionParams<f64>) -> Result<Self> {
        trace.check_schedule(sched)?;
        let events = detect_events(&trace.y, dp);
        let ctx = events_to_context(&events, sched)?;
        Ok(Self { events, ctx })
    }

    pub fn solve(&self, cfg: &RunConfig, sp: &SolverParams<f64>) -> Result<SolverState<f64>> {
        ista_solve(&self.ctx, &cfg.model.params()?, sp)
    }

    pub fn assign(&self, sched: &FiringSchedule, w: &RateVector<f64>) -> Result<SpectrumEstimate<f64>> {
        assign_normalized(&self.ctx, &self.events, sched, w)
    }
}

/// Runs one reconstruction method on an experiment.
pub fn run_method(
    exp: &Experiment,
    method: Method,
    sp: &SolverParams<f64>,
) -> Result<(SpectrumEstimate<f64>, Option<SolverState<f64>>)> {
    let cfg = &exp.config;
    match method {
        Method::Average => Ok((average_scans(&exp.scans)?, None)),
        Method::Naive => Ok((naive_atof(&exp.events()?, &exp.schedule)?, None)),
        Method::NaivePerSample => {
            let ev = exp.events()?;
            Ok((crate::baselines::naive_atof_per_sample(&ev.to_dense(), &exp.schedule)?, None))
        }
        Method::Atof => {
            let prep = Prepared::new(&exp.trace, &exp.schedule, &cfg.detection.params()?)?;
            let state = prep.solve(cfg, sp)?;
            let mut est = prep.assign(&exp.schedule, &state.w)?;
            est.provenance = Provenance::new(Some(&exp.schedule), &(cfg, sp));
            Ok((est, Some(state)))
        }
    }
}

/// Event-level and peak-level comparison of one spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub events: MatchReport,
    pub peaks: MatchReport,
}

/// Event-level report with estimate events detected at `hw`; the support
/// threshold keeps the configured `h0 / hw` ratio.
pub fn event_report(truth: &EventList<f64>, x_hat: &[f64], cfg: &RunConfig, hw: f64) -> Result<MatchReport> {
    let e = &cfg.evaluation;
    let dp = DetectionParams::new(hw * (e.h0 / e.hw), hw, e.d_min)?;
    match_events(truth, &detect_events(x_hat, &dp))
}

pub fn evaluate_spectrum(truth: &[f64], x_hat: &[f64], cfg: &RunConfig) -> Result<Evaluation> {
    if truth.len() != x_hat.len() {
        return Err(Error::DimensionMismatch { expected: truth.len(), found: x_hat.len() });
    }
    let e = &cfg.evaluation;
    let truth_events = detect_events(truth, &e.detection()?);
    let events = event_report(&truth_events, x_hat, cfg, e.hw)?;
    let cal = e.calibration()?;
    let peaks = match_peaks(
        &pick_peaks(truth, e.min_height, &cal)?,
        &pick_peaks(x_hat, e.min_height, &cal)?,
        e.top_k,
        e.delta_m,
    )?;
    Ok(Evaluation { events, peaks })
}

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVar {
    /// Solver threshold floor (reconstruction reruns, data fixed).
    Theta0,
    /// Spectrum event-detection threshold applied to the estimate.
    Hw,
}

impl FromStr for SweepVar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theta0" => Ok(SweepVar::Theta0),
            "hw" => Ok(SweepVar::Hw),
            _ => Err(Error::InvalidParameter(format!("unknown sweep variable {s:?} (expected theta0 or hw)"))),
        }
    }
}

impl fmt::Display for SweepVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepVar::Theta0 => "theta0",
            SweepVar::Hw => "hw",
        })
    }
}

/// One point of a TPR/FDR curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub value: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tpr: f64,
    pub fdr: f64,
    pub fnr: f64,
    /// Number of events detected in the estimate.
    pub reported: usize,
}

impl CurvePoint {
    fn new(value: f64, r: &MatchReport) -> Self {
        Self { value, tp: r.tp, fp: r.fp, fn_: r.fn_, tpr: r.tpr, fdr: r.fdr, fnr: r.fnr, reported: r.tp + r.fp }
    }
}

/// Event-level TPR/FDR curve of `method` over `values` of `var`, all on the
/// same simulated data. A `theta0` sweep on a method without a solver is
/// rejected.
pub fn curve_sweep(exp: &Experiment, method: Method, var: SweepVar, values: &[f64]) -> Result<Vec<CurvePoint>> {
    if values.len() < 2 {
        return invalid("a sweep needs at least two values");
    }
    let cfg = &exp.config;
    let truth = exp.truth_events()?;
    let base_sp = cfg.solver.params()?;
    match var {
        SweepVar::Hw => {
            let (est, _) = run_method(exp, method, &base_sp)?;
            values
                .iter()
                .map(|&hw| Ok(CurvePoint::new(hw, &event_report(&truth, &est.x_hat, cfg, hw)?)))
                .collect()
        }
        SweepVar::Theta0 => {
            if method != Method::Atof {
                return invalid(format!("method {method} has no theta0 parameter"));
            }
            let prep = Prepared::new(&exp.trace, &exp.schedule, &cfg.detection.params()?)?;
            let hw = cfg.evaluation.hw;
            let points: Vec<Result<CurvePoint>> = {
                use rayon::prelude::*;
                values
                    .par_iter()
                    .map(|&theta0| {
                        let sp = SolverParams { theta0, ..base_sp };
                        let state = prep.solve(cfg, &sp)?;
                        let est = prep.assign(&exp.schedule, &state.w)?;
                        Ok(CurvePoint::new(theta0, &event_report(&truth, &est.x_hat, cfg, hw)?))
                    })
                    .collect()
            };
            points.into_iter().collect()
        }
    }
}

/// Event-level metrics of the assigned spectrum after every solver iteration
/// (row 0 is the all-zero start).
pub fn iteration_curve(exp: &Experiment, sp: &SolverParams<f64>) -> Result<Vec<CurvePoint>> {
    let cfg = &exp.config;
    let truth = exp.truth_events()?;
    let prep = Prepared::new(&exp.trace, &exp.schedule, &cfg.detection.params()?)?;
    let mut rows = Vec::new();
    let hw = cfg.evaluation.hw;
    ista_solve_with(&prep.ctx, &cfg.model.params()?, sp, |k, w| {
        let est = if k == 0 {
            vec![0.0; w.len()]
        } else {
            prep.assign(&exp.schedule, &RateVector::new(w.to_vec())?)?.x_hat
        };
        rows.push(CurvePoint::new(k as f64, &event_report(&truth, &est, cfg, hw)?));
        Ok(())
    })?;
    Ok(rows)
}

/// Writes curve rows as CSV.
pub fn write_curve_csv<W: std::io::Write>(mut out: W, var: &str, rows: &[CurvePoint]) -> Result<()> {
    writeln!(out, "{var},tp,fp,fn,tpr,fdr,fnr,reported")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{},{},{},{}", r.value, r.tp, r.fp, r.fn_, r.tpr, r.fdr, r.fnr, r.reported)?;
    }
    Ok(())
}
