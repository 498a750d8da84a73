//! Run configuration: sectioned `key = value` text (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::evaluate::Calibration;
use crate::model::ModelParams;
use crate::preprocess::DetectionParams;
use crate::solver::SolverParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    /// Peak-list file; when absent a synthetic spectrum is drawn.
    pub spec_path: Option<PathBuf>,
    pub n: usize,
    pub num_scans: usize,
    pub dtau_min: usize,
    pub dtau_max: usize,
    pub num_peaks: usize,
    pub rate_min: f64,
    pub rate_max: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// True chemical-noise rate used to draw scans.
    pub w0: f64,
    pub mu: f64,
    pub pulse_sigma: f64,
    pub jitter_sd: f64,
    pub noise_sd: f64,
    /// Also write the per-scan archive.
    pub save_scans: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            spec_path: None,
            n: 20_000,
            num_scans: 200,
            dtau_min: 1,
            dtau_max: 9_999,
            num_peaks: 200,
            rate_min: 1e-3,
            rate_max: 0.3,
            sigma_min: 0.5,
            sigma_max: 1.5,
            w0: 1e-6,
            mu: 225.0,
            pulse_sigma: 2.0,
            jitter_sd: 0.5,
            noise_sd: 0.0,
            save_scans: true,
        }
    }
}

impl SimulationConfig {
    /// Sets `dtau` bounds so that `E[dtau] = n / factor` (`dtau_min = 1`).
    pub fn set_acceleration(&mut self, factor: f64) -> Result<()> {
        if !(factor >= 1.0) {
            return invalid("acceleration factor must be >= 1");
        }
        if factor == 1.0 {
            self.dtau_min = self.n;
            self.dtau_max = self.n;
        } else {
            self.dtau_min = 1;
            self.dtau_max = ((2.0 * self.n as f64 / factor).round() as usize).saturating_sub(1).max(1);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    pub h0: f64,
    pub hw: f64,
    pub d_min: usize,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self { h0: 0.5, hw: 2.0, d_min: 2 }
    }
}

impl DetectionConfig {
    pub fn params(&self) -> Result<DetectionParams<f64>> {
        DetectionParams::new(self.h0, self.hw, self.d_min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub mu: f64,
    /// Noise floor assumed by the reconstruction.
    pub w0: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { mu: crate::model::DEFAULT_MU, w0: crate::model::DEFAULT_W0 }
    }
}

impl ModelConfig {
    pub fn params(&self) -> Result<ModelParams<f64>> {
        ModelParams::new(self.mu, self.w0, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub gamma: f64,
    pub theta0: f64,
    pub theta1: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let p = SolverParams::<f64>::default();
        Self { gamma: p.gamma, theta0: p.theta0, theta1: p.theta1, max_iters: p.max_iters, tol: p.tol }
    }
}

impl SolverConfig {
    pub fn params(&self) -> Result<SolverParams<f64>> {
        let p = SolverParams {
            gamma: self.gamma,
            theta0: self.theta0,
            theta1: self.theta1,
            max_iters: self.max_iters,
            tol: self.tol,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Reference spectrum: 0 uses the noiseless expectation, otherwise the
    /// mean of this many extra independent scans.
    pub truth_scans: usize,
    /// Event detection on spectra (truth and estimates).
    pub h0: f64,
    pub hw: f64,
    pub d_min: usize,
    pub top_k: usize,
    pub delta_m: f64,
    /// Peak-picking threshold.
    pub min_height: f64,
    pub calibration_c: f64,
    pub sample_period: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            truth_scans: 0,
            h0: 0.5,
            hw: 1.0,
            d_min: 1,
            top_k: 400,
            delta_m: 0.01,
            min_height: 0.5,
            calibration_c: 1.0,
            sample_period: 1e-3,
        }
    }
}

impl EvaluationConfig {
    pub fn detection(&self) -> Result<DetectionParams<f64>> {
        DetectionParams::new(self.h0, self.hw, self.d_min)
    }

    pub fn calibration(&self) -> Result<Calibration> {
        Calibration::new(self.calibration_c, self.sample_period)
    }
}

/// Every parameter of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub simulation: SimulationConfig,
    pub detection: DetectionConfig,
    pub model: ModelConfig,
    pub solver: SolverConfig,
    pub evaluation: EvaluationConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks every section against its module's invariants.
    pub fn validate(&self) -> Result<()> {
        let s = &self.simulation;
        if s.n == 0 || s.num_scans == 0 {
            return invalid("simulation.n and simulation.num_scans must be >= 1");
        }
        if s.dtau_min > s.dtau_max {
            return invalid("simulation.dtau_min must not exceed dtau_max");
        }
        if !(s.rate_min > 0.0 && s.rate_min <= s.rate_max) {
            return invalid("simulation rates must satisfy 0 < rate_min <= rate_max");
        }
        if !(s.sigma_min > 0.0 && s.sigma_min <= s.sigma_max) {
            return invalid("simulation widths must satisfy 0 < sigma_min <= sigma_max");
        }
        if !(s.w0 > 0.0) || !(s.mu > 0.0) {
            return invalid("simulation.w0 and simulation.mu must be > 0");
        }
        if !(s.pulse_sigma >= 0.0) || !(s.jitter_sd >= 0.0) || !(s.noise_sd >= 0.0) {
            return invalid("pulse_sigma, jitter_sd and noise_sd must be >= 0");
        }
        self.detection.params()?;
        self.model.params()?;
        self.solver.params()?;
        let e = &self.evaluation;
        e.detection()?;
        e.calibration()?;
        if e.top_k == 0 || !(e.delta_m > 0.0) || !(e.min_height > 0.0) {
            return invalid("evaluation.top_k, delta_m and min_height must be > 0");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trip() {
        let cfg = RunConfig::default();
        let text = cfg.to_text().unwrap();
        assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let cfg = RunConfig::parse("seed = 7\n[solver]\ntheta0 = 1e-3\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.solver.theta0, 1e-3);
        assert_eq!(cfg.simulation.n, 20_000);
    }

    #[test]
    fn rejects_bad_values_and_unknown_keys() {
        assert!(RunConfig::parse("[solver]\ngamma = -1\n").is_err());
        assert!(RunConfig::parse("[detection]\nh0 = 3\nhw = 2\n").is_err());
        assert!(RunConfig::parse("[solver]\nbogus = 1\n").is_err());
        assert!(RunConfig::parse("[simulation]\ndtau_min = 5\ndtau_max = 4\n").is_err());
    }

    #[test]
    fn acceleration_helper() {
        let mut s = SimulationConfig::default();
        s.set_acceleration(4.0).unwrap();
        assert_eq!((s.dtau_min, s.dtau_max), (1, 9_999));
        s.set_acceleration(1.0).unwrap();
        assert_eq!((s.dtau_min, s.dtau_max), (20_000, 20_000));
        assert!(s.set_acceleration(0.5).is_err());
    }
}
