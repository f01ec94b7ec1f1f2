//! Experiment configuration document (TOML). Every key has a default and
//! unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::OptimizeConfig;
use crate::error::{Error, Result};
use crate::graybox::train::TrainHyper;
use crate::graybox::{Architecture, InputEncoding, PhysicsHeader};
use crate::noise::NoiseConfig;
use crate::pulse::{PulseShape, TimeGrid};
use crate::simulator::SimConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    #[serde(rename = "T_us", alias = "t_us")]
    pub t_us: f64,
    pub steps: usize,
    pub realizations: usize,
    pub seed: u64,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            t_us: 3.2,
            steps: 3000,
            realizations: 2000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub gamma_mhz: f64,
    pub g_mhz: f64,
    pub omega_mhz: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection {
            gamma_mhz: 0.02,
            g_mhz: 0.0,
            omega_mhz: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseSection {
    pub n: usize,
    /// Defaults to `T/(6(n+1))` when absent.
    pub sigma_us: Option<f64>,
    pub a_max_mhz: f64,
}

impl Default for PulseSection {
    fn default() -> Self {
        PulseSection {
            n: 5,
            sigma_us: None,
            a_max_mhz: 100.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingName {
    Waveform,
    Amplitudes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrayboxSection {
    pub encoding: EncodingName,
    pub m_in: usize,
    pub layers: usize,
    pub hidden: usize,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub split: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for GrayboxSection {
    fn default() -> Self {
        let h = TrainHyper::default();
        GrayboxSection {
            encoding: EncodingName::Waveform,
            m_in: 128,
            layers: 2,
            hidden: 60,
            lr: h.lr,
            batch: h.batch,
            epochs: h.epochs,
            split: h.split,
            patience: h.patience,
            seed: h.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlSection {
    pub iters: usize,
    pub restarts: usize,
    pub fd_step: f64,
    pub lr: f64,
    pub init_scale: f64,
}

impl Default for ControlSection {
    fn default() -> Self {
        let o = OptimizeConfig::default();
        ControlSection {
            iters: o.iters,
            restarts: o.restarts,
            fd_step: o.fd_step,
            lr: o.lr,
            init_scale: o.init_scale,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WhiteboxSection {
    pub nodes: usize,
    pub epsilon: f64,
}

impl Default for WhiteboxSection {
    fn default() -> Self {
        WhiteboxSection {
            nodes: crate::whitebox::DEFAULT_NODES,
            epsilon: 0.01,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sim: SimSection,
    pub noise: NoiseSection,
    pub pulses: PulseSection,
    pub graybox: GrayboxSection,
    pub control: ControlSection,
    pub whitebox: WhiteboxSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Accepts a bare config object or any artifact that embeds one under
    /// `"config"`.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut doc: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(inner) = doc.get_mut("config") {
            doc = inner.take();
        }
        let cfg: ExperimentConfig = serde_json::from_value(doc).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML file, a JSON artifact (by extension), or the built-in
    /// defaults for the literal `default`.
    pub fn load(path: &Path) -> Result<Self> {
        if path.as_os_str() == "default" {
            return Ok(Self::default());
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config(e.to_string());
        self.sim_config().map_err(wrap)?;
        self.shape().map_err(wrap)?;
        self.architecture().map_err(wrap)?;
        if !(self.graybox.split > 0.0 && self.graybox.split <= 1.0) {
            return Err(Error::Config(format!("graybox.split must be in (0, 1], got {}", self.graybox.split)));
        }
        if self.graybox.batch == 0 {
            return Err(Error::Config("graybox.batch must be positive".into()));
        }
        if self.control.restarts == 0 || !(self.control.fd_step > 0.0) || !(self.control.lr >= 0.0) {
            return Err(Error::Config("control needs restarts >= 1, fd_step > 0 and lr >= 0".into()));
        }
        if self.whitebox.nodes < 2 || !(self.whitebox.epsilon > 0.0) {
            return Err(Error::Config("whitebox needs nodes >= 2 and epsilon > 0".into()));
        }
        Ok(())
    }

    pub fn noise(&self) -> Result<NoiseConfig> {
        NoiseConfig::new(self.noise.gamma_mhz, self.noise.g_mhz, self.noise.omega_mhz, self.sim.seed)
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.sim.t_us, self.sim.steps)
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        SimConfig::new(self.grid()?, self.sim.realizations, self.noise()?)
    }

    pub fn shape(&self) -> Result<PulseShape> {
        PulseShape::new(self.sim.t_us, self.pulses.n, self.pulses.sigma_us, self.pulses.a_max_mhz)
    }

    pub fn physics(&self) -> Result<PhysicsHeader> {
        Ok(PhysicsHeader {
            shape: self.shape()?,
            grid: self.grid()?,
        })
    }

    pub fn architecture(&self) -> Result<Architecture> {
        let encoding = match self.graybox.encoding {
            EncodingName::Waveform => InputEncoding::Waveform { m_in: self.graybox.m_in },
            EncodingName::Amplitudes => InputEncoding::PulseAmplitudes,
        };
        Architecture::new(encoding, self.graybox.layers, self.graybox.hidden)
    }

    pub fn train_hyper(&self) -> TrainHyper {
        TrainHyper {
            lr: self.graybox.lr,
            batch: self.graybox.batch,
            epochs: self.graybox.epochs,
            split: self.graybox.split,
            patience: self.graybox.patience,
            seed: self.graybox.seed,
        }
    }

    pub fn optimize_config(&self) -> OptimizeConfig {
        OptimizeConfig {
            iters: self.control.iters,
            restarts: self.control.restarts,
            seed: self.sim.seed,
            lr: self.control.lr,
            fd_step: self.control.fd_step,
            init_scale: self.control.init_scale,
        }
    }

    /// Coupling `g = (g/γ)·γ` with everything else unchanged.
    pub fn with_g_over_gamma(&self, ratio: f64) -> Self {
        let mut c = self.clone();
        c.noise.g_mhz = ratio * c.noise.gamma_mhz;
        c
    }

    /// Settings of the desk-scale graybox experiment at strong coupling.
    pub fn graybox_experiment() -> Self {
        let mut c = Self::default().with_g_over_gamma(30.0);
        c.pulses.a_max_mhz = 12.0;
        c.graybox.encoding = EncodingName::Amplitudes;
        c.graybox.lr = 3e-3;
        c.graybox.batch = 64;
        c.graybox.epochs = 40;
        c.control.init_scale = 0.8;
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = ExperimentConfig::default();
        let text = c.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), c);
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), c);
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let c = ExperimentConfig::from_toml("[noise]\ng_mhz = 0.3\n[control]\niters = 5\n").unwrap();
        assert_eq!(c.noise.g_mhz, 0.3);
        assert_eq!(c.noise.gamma_mhz, 0.02);
        assert_eq!(c.control.iters, 5);
        assert_eq!(c.sim.steps, 3000);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(ExperimentConfig::from_toml("[sim]\nbogus = 1\n"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_toml("[extra]\n"), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(ExperimentConfig::from_toml("[noise]\ngamma_mhz = 0.0\n").is_err());
        assert!(ExperimentConfig::from_toml("[sim]\nrealizations = 0\n").is_err());
        assert!(ExperimentConfig::from_toml("[pulses]\nsigma_us = -1.0\n").is_err());
    }

    #[test]
    fn json_artifacts_round_trip() {
        let c = ExperimentConfig::graybox_experiment();
        let doc = serde_json::json!({ "format_version": 1, "config": c });
        assert_eq!(ExperimentConfig::from_json(&doc.to_string()).unwrap(), c);
        assert_eq!(ExperimentConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap(), c);
    }

    #[test]
    fn graybox_experiment_is_valid() {
        let c = ExperimentConfig::graybox_experiment();
        c.validate().unwrap();
        assert!((c.noise.g_mhz - 0.6).abs() < 1e-15);
    }
}
