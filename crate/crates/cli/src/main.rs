//! `atof`: simulate accelerated TOF acquisitions, reconstruct spectra, and
//! score them.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use atof::baselines::{average_scans, naive_atof, naive_atof_per_sample, Method};
use atof::config::RunConfig;
use atof::evaluate::width_intensity_cdf;
use atof::io;
use atof::pipeline::{curve_sweep, evaluate_spectrum, iteration_curve, write_curve_csv, Experiment, Prepared, SweepVar};
use atof::preprocess::detect_events;
use atof::schedule::FiringSchedule;
use atof::selfcheck;
use atof::solver::curvature_bound;

const TRACE_FILE: &str = "trace.trc";
const SCHEDULE_FILE: &str = "schedule.txt";
const SCANS_FILE: &str = "scans.scn";
const TRUTH_SPEC_FILE: &str = "truth.txt";
const TRUTH_SPECTRUM_FILE: &str = "truth.spc";

#[derive(Debug, Parser)]
#[command(name = "atof", version, about = "Accelerated time-of-flight simulation and sparse spectrum reconstruction")]
struct Cli {
    /// Run configuration (TOML); defaults apply to anything left out.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Overrides the configured root seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Output directory (default: config out_dir, else ./atof-out).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a ground truth, a schedule, the scans and the trace.
    Simulate,
    /// Estimate a spectrum from simulate outputs.
    Reconstruct {
        #[arg(long, value_name = "NAME", default_value = "atof", value_parser = parse_method)]
        method: Method,
        /// Directory holding the simulate outputs (default: the output directory).
        #[arg(long, value_name = "DIR")]
        input: Option<PathBuf>,
    },
    /// Score an estimated spectrum against a reference spectrum.
    Evaluate {
        #[arg(long, value_name = "PATH")]
        estimate: PathBuf,
        /// Reference spectrum (default: truth.spc in the output directory).
        #[arg(long, value_name = "PATH")]
        truth: Option<PathBuf>,
    },
    /// TPR/FDR curves over one parameter, one CSV per method.
    Sweep {
        #[arg(long = "sweep", value_name = "VAR")]
        var: SweepArg,
        #[arg(long, value_name = "CSV", value_delimiter = ',', required = true, num_args = 1..)]
        values: Vec<f64>,
        /// Restrict to one method.
        #[arg(long, value_name = "NAME", value_parser = parse_method)]
        method: Option<Method>,
    },
    /// Run the numerical self-checks.
    Selftest {
        #[arg(long, hide = true, default_value_t = selfcheck::DEFAULT_CROSSOVER)]
        bessel_crossover: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepArg {
    Theta0,
    Hw,
    /// Solver iteration; values are the iterations to report.
    Iter,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: atof::Error| e.to_string())
}

#[derive(Debug)]
enum Failure {
    Data(String),
    Selftest,
}

impl From<atof::Error> for Failure {
    fn from(e: atof::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Data(msg)) => {
            eprintln!("error: {}", msg.replace('\n', " "));
            ExitCode::from(2)
        }
        Err(Failure::Selftest) => ExitCode::from(3),
    }
}

fn run(cli: Cli) -> Outcome {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cli.out.clone().or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("atof-out"));
    match cli.command {
        Command::Simulate => simulate(&cfg, &out),
        Command::Reconstruct { method, input } => {
            let input = input.unwrap_or_else(|| out.clone());
            reconstruct(&cfg, method, &input, &out)
        }
        Command::Evaluate { estimate, truth } => {
            let truth = truth.unwrap_or_else(|| out.join(TRUTH_SPECTRUM_FILE));
            evaluate(&cfg, &truth, &estimate, &out)
        }
        Command::Sweep { var, values, method } => sweep(&cfg, var, &values, method, &out),
        Command::Selftest { bessel_crossover } => selftest(bessel_crossover, cfg.seed),
    }
}

fn make_dir(dir: &Path) -> Outcome {
    fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))
}

fn simulate(cfg: &RunConfig, out: &Path) -> Outcome {
    let exp = Experiment::simulate(cfg)?;
    make_dir(out)?;
    let mut resolved = cfg.clone();
    resolved.out_dir = Some(out.to_path_buf());
    fs::write(out.join("config.toml"), resolved.to_text()?).map_err(atof::Error::from)?;
    exp.spec.write_text(io::create(&out.join(TRUTH_SPEC_FILE))?)?;
    io::write_spectrum(io::create(&out.join(TRUTH_SPECTRUM_FILE))?, &exp.reference, exp.schedule.num_scans())?;
    exp.schedule.write_text(io::create(&out.join(SCHEDULE_FILE))?)?;
    io::write_trace(io::create(&out.join(TRACE_FILE))?, &exp.trace)?;
    if cfg.simulation.save_scans {
        io::write_scans(io::create(&out.join(SCANS_FILE))?, &exp.scans)?;
    }
    let (t, accel) = exp.schedule.acquisition_stats();
    println!(
        "simulated n={} N={} T={t} acceleration={accel:.2} peaks={} into {}",
        exp.schedule.n(),
        exp.schedule.num_scans(),
        exp.spec.peaks.len(),
        out.display()
    );
    Ok(())
}

fn reconstruct(cfg: &RunConfig, method: Method, input: &Path, out: &Path) -> Outcome {
    let sched = FiringSchedule::read_text(io::open(&input.join(SCHEDULE_FILE))?)?;
    let est = match method {
        Method::Average => {
            let scans = io::read_scans(io::open(&input.join(SCANS_FILE))?)?;
            if scans.len() != sched.num_scans() {
                return Err(atof::Error::DimensionMismatch { expected: sched.num_scans(), found: scans.len() }.into());
            }
            average_scans(&scans)?
        }
        Method::Naive | Method::NaivePerSample | Method::Atof => {
            let trace = io::read_trace(io::open(&input.join(TRACE_FILE))?)?;
            trace.check_schedule(&sched)?;
            let dp = cfg.detection.params()?;
            match method {
                Method::Naive => naive_atof(&detect_events(&trace.y, &dp), &sched)?,
                Method::NaivePerSample => naive_atof_per_sample(&detect_events(&trace.y, &dp).to_dense(), &sched)?,
                _ => {
                    let prep = Prepared::new(&trace, &sched, &dp)?;
                    let mp = cfg.model.params()?;
                    let sp = cfg.solver.params()?;
                    let bound = curvature_bound(&prep.ctx, &vec![0.0; prep.ctx.n], &mp, 50)?;
                    if sp.gamma * bound >= 1.0 {
                        eprintln!(
                            "warning: gamma * curvature = {:.3} >= 1, descent is not guaranteed (raise model.w0 or lower solver.gamma)",
                            sp.gamma * bound
                        );
                    }
                    let state = prep.solve(cfg, &sp)?;
                    make_dir(out)?;
                    io::write_cost_history(io::create(&out.join("cost_history.csv"))?, &state.cost_history)?;
                    println!(
                        "atof: {} events, {} iterations, converged={}, final cost {:.6}",
                        prep.events.len(),
                        state.k,
                        state.converged,
                        state.cost_history.last().map_or(f64::NAN, |r| r.cost)
                    );
                    prep.assign(&sched, &state.w)?
                }
            }
        }
    };
    make_dir(out)?;
    let path = out.join(format!("{}.spc", method.name()));
    io::write_spectrum(io::create(&path)?, &est.x_hat, sched.num_scans())?;
    println!("wrote {} (total {:.4})", path.display(), est.total());
    Ok(())
}

fn evaluate(cfg: &RunConfig, truth: &Path, estimate: &Path, out: &Path) -> Outcome {
    let (truth, _) = io::read_spectrum(io::open(truth)?)?;
    let (est, _) = io::read_spectrum(io::open(estimate)?)?;
    let ev = evaluate_spectrum(&truth, &est, cfg)?;
    make_dir(out)?;
    let mut csv = String::from("level,tp,fp,fn,tpr,fdr,fnr\n");
    for (level, r) in [("events", &ev.events), ("peaks", &ev.peaks)] {
        csv += &format!("{level},{},{},{},{},{},{}\n", r.tp, r.fp, r.fn_, r.tpr, r.fdr, r.fnr);
        println!("{level}: TP {} FP {} FN {}  TPR {:.3} FDR {:.3}", r.tp, r.fp, r.fn_, r.tpr, r.fdr);
    }
    fs::write(out.join("metrics.csv"), csv).map_err(atof::Error::from)?;
    ev.events.write_assignments_jsonl(io::create(&out.join("assignments.jsonl"))?)?;
    let min_height = cfg.evaluation.min_height;
    let mut cdf = String::from("source,ratio,cdf\n");
    for (source, x) in [("truth", &truth), ("estimate", &est)] {
        for (r, p) in width_intensity_cdf(x, min_height)? {
            cdf += &format!("{source},{r},{p}\n");
        }
    }
    fs::write(out.join("width_intensity.csv"), cdf).map_err(atof::Error::from)?;
    Ok(())
}

fn sweep(cfg: &RunConfig, var: SweepArg, values: &[f64], method: Option<Method>, out: &Path) -> Outcome {
    let exp = Experiment::simulate(cfg)?;
    make_dir(out)?;
    let methods = match (var, method) {
        (_, Some(m)) => vec![m],
        (SweepArg::Hw, None) => vec![Method::Atof, Method::Naive, Method::Average],
        (SweepArg::Theta0 | SweepArg::Iter, None) => vec![Method::Atof],
    };
    for m in methods {
        let (name, rows) = match var {
            SweepArg::Theta0 => ("theta0", curve_sweep(&exp, m, SweepVar::Theta0, values)?),
            SweepArg::Hw => ("hw", curve_sweep(&exp, m, SweepVar::Hw, values)?),
            SweepArg::Iter => {
                if m != Method::Atof {
                    return Err(Failure::Data(format!("method {m} has no iterations")));
                }
                if values.iter().any(|v| !(*v >= 0.0) || v.fract() != 0.0) {
                    return Err(Failure::Data("iteration values must be non-negative integers".into()));
                }
                let last = values.iter().copied().fold(0.0, f64::max) as usize;
                let sp = atof::solver::SolverParams { max_iters: last, ..cfg.solver.params()? };
                let mut rows = iteration_curve(&exp, &sp)?;
                rows.retain(|r| values.contains(&r.value));
                ("iter", rows)
            }
        };
        let path = out.join(format!("curve_{name}_{}.csv", m.name()));
        write_curve_csv(io::create(&path)?, name, &rows)?;
        println!("wrote {} ({} rows)", path.display(), rows.len());
    }
    Ok(())
}

fn selftest(crossover: f64, seed: u64) -> Outcome {
    let results = selfcheck::run_all(crossover, seed);
    for r in &results {
        println!("{r}");
    }
    let passed = results.iter().filter(|r| r.passed()).count();
    println!("selftest: {passed}/{} passed", results.len());
    if passed == results.len() {
        Ok(())
    } else {
        Err(Failure::Selftest)
    }
}
