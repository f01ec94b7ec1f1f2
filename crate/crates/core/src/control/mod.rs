//! Gate-synthesis by Adam descent on the pulse amplitudes.
//!
//! The cost of a pulse sequence `u` for target `G` under a model is
//! `Σ_{(ρ,O)} (Tr[GρG†O] − predicted(ρ,O))²` over the 18 informationally
//! complete pairs. Gradients are central finite differences, so every model
//! variant only has to provide predictions.

pub mod adam;

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graybox::GrayboxModel;
use crate::linalg::{Mat2, C64};
use crate::pauli::{SIGMA_X, SIGMA_Y, SIGMA_Z};
use crate::propagate::{step_unitary, ControlGrid};
use crate::pulse::{PulseSequence, PulseShape};
use crate::simulator::ExpectationTable;
use crate::whitebox::OpenSystemWhitebox;

use adam::{AdamConfig, AdamState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateName {
    I,
    X,
    Y,
    Z,
    H,
    RxPi4,
    Custom,
}

impl GateName {
    pub const STANDARD: [GateName; 6] = [GateName::I, GateName::X, GateName::Y, GateName::Z, GateName::H, GateName::RxPi4];
}

impl fmt::Display for GateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GateName::I => "I",
            GateName::X => "X",
            GateName::Y => "Y",
            GateName::Z => "Z",
            GateName::H => "H",
            GateName::RxPi4 => "Rx(pi/4)",
            GateName::Custom => "custom",
        };
        f.write_str(s)
    }
}

impl FromStr for GateName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_ascii_lowercase();
        Ok(match norm.as_str() {
            "i" | "id" | "identity" => GateName::I,
            "x" => GateName::X,
            "y" => GateName::Y,
            "z" => GateName::Z,
            "h" | "hadamard" => GateName::H,
            "rx(pi/4)" | "rx_pi_4" | "rxpi4" | "rx" => GateName::RxPi4,
            _ => return Err(Error::Config(format!("unknown gate {s:?}"))),
        })
    }
}

/// A target unitary with a name.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetGate {
    pub name: GateName,
    pub matrix: Mat2,
}

impl TargetGate {
    pub fn standard(name: GateName) -> Result<Self> {
        let matrix = match name {
            GateName::I => Mat2::identity(),
            GateName::X => SIGMA_X,
            GateName::Y => SIGMA_Y,
            GateName::Z => SIGMA_Z,
            GateName::H => (SIGMA_X + SIGMA_Z).scale_re(FRAC_1_SQRT_2),
            GateName::RxPi4 => step_unitary(0.0, [std::f64::consts::PI / 8.0, 0.0, 0.0], 1.0),
            GateName::Custom => return Err(Error::invalid("custom gates need a matrix")),
        };
        Ok(TargetGate { name, matrix })
    }

    pub fn custom(matrix: Mat2) -> Result<Self> {
        if matrix.unitarity_defect() > 1e-10 {
            return Err(Error::invalid("target gate is not unitary"));
        }
        Ok(TargetGate {
            name: GateName::Custom,
            matrix,
        })
    }

    pub fn ideal_table(&self) -> ExpectationTable {
        ExpectationTable::ideal(&self.matrix)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "CS-WB")]
    ClosedSystem,
    #[serde(rename = "OS-WB")]
    OpenSystem,
    #[serde(rename = "GB")]
    Graybox,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::ClosedSystem => "CS-WB",
            ModelKind::OpenSystem => "OS-WB",
            ModelKind::Graybox => "GB",
        })
    }
}

/// A dynamics model that predicts expectation tables from pulses.
#[derive(Clone, Debug)]
pub enum ModelHandle {
    /// Noiseless closed-system propagation.
    ClosedSystem(ControlGrid),
    /// Second-order Dyson model with the noise correlator.
    OpenSystem(OpenSystemWhitebox),
    Graybox(Arc<GrayboxModel>),
}

impl ModelHandle {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelHandle::ClosedSystem(_) => ModelKind::ClosedSystem,
            ModelHandle::OpenSystem(_) => ModelKind::OpenSystem,
            ModelHandle::Graybox(_) => ModelKind::Graybox,
        }
    }

    pub fn shape(&self) -> &PulseShape {
        match self {
            ModelHandle::ClosedSystem(c) => c.shape(),
            ModelHandle::OpenSystem(w) => w.control().shape(),
            ModelHandle::Graybox(m) => &m.physics().shape,
        }
    }

    pub fn predict(&self, p: &PulseSequence) -> Result<ExpectationTable> {
        match self {
            ModelHandle::ClosedSystem(c) => Ok(ExpectationTable::ideal(&c.control_unitary(p)?)),
            ModelHandle::OpenSystem(w) => w.predict(p),
            ModelHandle::Graybox(m) => m.predict(p),
        }
    }
}

/// `Σ_18 (ideal − predicted)²`.
pub fn cost_mse(model: &ModelHandle, p: &PulseSequence, gate: &TargetGate) -> Result<f64> {
    let pred = model.predict(p)?;
    Ok(cost_from_tables(&gate.ideal_table(), &pred))
}

fn cost_from_tables(ideal: &ExpectationTable, pred: &ExpectationTable) -> f64 {
    ideal.0.iter().zip(pred.0.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizeConfig {
    pub iters: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Adam step size in MHz.
    pub lr: f64,
    /// Finite-difference step as a fraction of `A_max`.
    pub fd_step: f64,
    /// Initial amplitudes are uniform in `±init_scale·A_max`.
    pub init_scale: f64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            iters: 1000,
            restarts: 10,
            seed: 0,
            lr: 0.2,
            fd_step: 1e-3,
            init_scale: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartResult {
    pub restart: usize,
    pub pulses: PulseSequence,
    pub cost: f64,
    /// Best-so-far cost, starting with the initial cost.
    pub trace: Vec<f64>,
    /// Set when the restart was aborted by a non-finite cost.
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResult {
    pub best: PulseSequence,
    pub best_cost: f64,
    pub best_restart: usize,
    pub restarts: Vec<RestartResult>,
}

impl OptimizeResult {
    pub fn trace(&self) -> &[f64] {
        &self.restarts[self.best_restart].trace
    }
}

/// Initial amplitudes of restart `r`.
pub fn initial_pulses(shape: &PulseShape, cfg: &OptimizeConfig, restart: usize) -> Result<PulseSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(restart as u64);
    let bound = cfg.init_scale * shape.a_max;
    let flat: Vec<f64> = (0..shape.n_params())
        .map(|_| if bound > 0.0 { rng.random_range(-bound..=bound) } else { 0.0 })
        .collect();
    PulseSequence::from_flat_clamped(*shape, &flat)
}

fn run_restart(model: &ModelHandle, gate: &TargetGate, cfg: &OptimizeConfig, restart: usize) -> Result<RestartResult> {
    let shape = *model.shape();
    let ideal = gate.ideal_table();
    let eval = |x: &[f64]| -> Result<f64> {
        let p = PulseSequence::from_flat_clamped(shape, x)?;
        Ok(cost_from_tables(&ideal, &model.predict(&p)?))
    };
    let start = initial_pulses(&shape, cfg, restart)?;
    let mut x = start.to_flat();
    let mut cost = eval(&x)?;
    let mut best_x = x.clone();
    let mut best = cost;
    let mut trace = vec![cost];
    let mut failure = None;
    if !cost.is_finite() {
        failure = Some("initial cost is not finite".to_string());
    }
    let h = cfg.fd_step * shape.a_max;
    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.lr), x.len());
    let mut grad = vec![0.0; x.len()];
    for it in 0..cfg.iters {
        if failure.is_some() {
            break;
        }
        for k in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            grad[k] = (eval(&xp)? - eval(&xm)?) / (2.0 * h);
        }
        if let Err(e) = adam.step(&mut x, &grad) {
            failure = Some(format!("iteration {it}: {e}"));
            break;
        }
        for v in x.iter_mut() {
            *v = v.clamp(-shape.a_max, shape.a_max);
        }
        cost = eval(&x)?;
        if !cost.is_finite() {
            failure = Some(format!("iteration {it}: non-finite cost"));
            break;
        }
        if cost < best {
            best = cost;
            best_x.copy_from_slice(&x);
        }
        trace.push(best);
    }
    Ok(RestartResult {
        restart,
        pulses: PulseSequence::from_flat_clamped(shape, &best_x)?,
        cost: best,
        trace,
        failure,
    })
}

/// Runs `cfg.restarts` independent descents and returns all of them along
/// with the best.
pub fn optimize_pulses(model: &ModelHandle, gate: &TargetGate, cfg: &OptimizeConfig) -> Result<OptimizeResult> {
    if cfg.restarts == 0 {
        return Err(Error::invalid("need at least one restart"));
    }
    if !(cfg.fd_step > 0.0) || !(cfg.lr >= 0.0) {
        return Err(Error::invalid("fd_step must be positive and lr non-negative"));
    }
    let restarts: Vec<RestartResult> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| run_restart(model, gate, cfg, r))
        .collect::<Result<_>>()?;
    let best_restart = restarts
        .iter()
        .filter(|r| r.cost.is_finite())
        .min_by(|a, b| a.cost.total_cmp(&b.cost).then(a.restart.cmp(&b.restart)))
        .map(|r| r.restart)
        .ok_or_else(|| Error::NonFinite("every restart produced a non-finite cost".into()))?;
    Ok(OptimizeResult {
        best: restarts[best_restart].pulses.clone(),
        best_cost: restarts[best_restart].cost,
        best_restart,
        restarts,
    })
}

/// Unit-modulus phase applied to a gate; used to check phase invariance.
pub fn with_global_phase(g: &TargetGate, phase: f64) -> TargetGate {
    TargetGate {
        name: g.name,
        matrix: g.matrix.scale(C64::from_polar(1.0, phase)),
    }
}
