//! End-to-end pipelines behind the command-line subcommands. Each returns
//! plain rows; formatting and persistence live with the caller.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::control::{optimize_pulses, ModelHandle, ModelKind, OptimizeResult, TargetGate};
use crate::error::{Error, Result};
use crate::graybox::GrayboxModel;
use crate::haar::haar_unitary_with;
use crate::noise::{corr2, corr4, NoiseConfig, RtnPath};
use crate::pulse::{PulseSequence, PulseShape};
use crate::simulator::Simulator;
use crate::tomography::{table_fidelity, vo_distance};
use crate::whitebox::{classify_regimes, coupling_grid, dyson2_free, dyson4_free, OpenSystemWhitebox, RegimeBoundaries};

/// Free-evolution coherence at one coupling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherenceRow {
    pub g_over_gamma: f64,
    pub g_mhz: f64,
    pub monte_carlo: f64,
    pub dyson2: f64,
    pub dyson4: f64,
}

pub fn coherence_rows(cfg: &ExperimentConfig, g_over_gamma: &[f64]) -> Result<Vec<CoherenceRow>> {
    let sim = Simulator::new(cfg.sim_config()?, cfg.shape()?)?;
    let noise = cfg.noise()?;
    let gs: Vec<f64> = g_over_gamma.iter().map(|r| r * noise.gamma).collect();
    let mc = sim.coherence_scan(&gs)?;
    gs.iter()
        .zip(mc)
        .map(|(&g, (ratio, x))| {
            Ok(CoherenceRow {
                g_over_gamma: ratio,
                g_mhz: g,
                monte_carlo: x,
                dyson2: dyson2_free(g, &noise, cfg.sim.t_us, cfg.whitebox.nodes)?,
                dyson4: dyson4_free(g, &noise, cfg.sim.t_us, cfg.whitebox.nodes)?,
            })
        })
        .collect()
}

/// `count` evenly spaced ratios over `[0, max]`.
pub fn ratio_grid(max: f64, count: usize) -> Vec<f64> {
    coupling_grid(1.0, max, count)
}

/// Regime boundaries for the configured noise, scanning `g/γ ∈ [0, max_ratio]`.
pub fn regimes(cfg: &ExperimentConfig, max_ratio: f64, points: usize) -> Result<RegimeBoundaries> {
    let noise = cfg.noise()?;
    let grid = coupling_grid(noise.gamma, max_ratio, points);
    classify_regimes(&noise, cfg.sim.t_us, cfg.whitebox.epsilon, &grid[1..], cfg.whitebox.nodes)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorRow {
    pub t1: f64,
    pub t2: f64,
    pub empirical: f64,
    pub std_err: f64,
    pub analytic: f64,
}

impl CorrelatorRow {
    /// Deviation in units of the standard error.
    pub fn z_score(&self) -> f64 {
        (self.empirical - self.analytic) / self.std_err
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourPointCheck {
    pub times: [f64; 4],
    pub empirical: f64,
    pub std_err: f64,
    pub analytic: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorReport {
    pub gamma: f64,
    pub omega: f64,
    pub trajectories: usize,
    pub two_point: Vec<CorrelatorRow>,
    pub four_point: FourPointCheck,
    /// Least-squares ratio `Σ e·a / Σ a²` of empirical to analytic two-point
    /// values.
    pub two_point_ratio: f64,
    pub four_point_ratio: f64,
}

fn noise_value(path: &RtnPath, cfg: &NoiseConfig, t: f64) -> f64 {
    let xi = path.telegraph(t);
    if cfg.is_modulated() {
        xi * (cfg.omega * t + path.phase).cos()
    } else {
        xi
    }
}

fn mean_and_err(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Empirical two-point correlator at `lags` (reference time `t0`) and one
/// four-point value, compared with the analytic forms.
pub fn correlator_check(
    noise: &NoiseConfig,
    horizon: f64,
    trajectories: usize,
    t0: f64,
    lags: &[f64],
    four_times: [f64; 4],
) -> Result<CorrelatorReport> {
    if trajectories < 2 {
        return Err(Error::invalid("need at least two trajectories"));
    }
    if lags.iter().any(|l| !(t0 + l <= horizon && *l >= 0.0)) || four_times.iter().any(|t| *t > horizon) {
        return Err(Error::invalid("sample times must lie inside the horizon"));
    }
    let n_lag = lags.len();
    let samples: Vec<Vec<f64>> = (0..trajectories as u64)
        .into_par_iter()
        .map(|k| {
            let path = RtnPath::sample(noise, horizon, k);
            let b0 = noise_value(&path, noise, t0);
            let mut out: Vec<f64> = lags.iter().map(|l| b0 * noise_value(&path, noise, t0 + l)).collect();
            out.push(four_times.iter().map(|&t| noise_value(&path, noise, t)).product());
            out
        })
        .collect();
    let column = |i: usize| samples.iter().map(|s| s[i]).collect::<Vec<_>>();
    let two_point: Vec<CorrelatorRow> = lags
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let (m, e) = mean_and_err(&column(i));
            CorrelatorRow {
                t1: t0 + l,
                t2: t0,
                empirical: m,
                std_err: e,
                analytic: corr2(t0 + l, t0, noise),
            }
        })
        .collect();
    let mut sorted = four_times;
    sorted.sort_by(|a, b| b.total_cmp(a));
    let (m4, e4) = mean_and_err(&column(n_lag));
    let a4 = corr4(sorted[0], sorted[1], sorted[2], sorted[3], noise)?;
    let num: f64 = two_point.iter().map(|r| r.empirical * r.analytic).sum();
    let den: f64 = two_point.iter().map(|r| r.analytic * r.analytic).sum();
    Ok(CorrelatorReport {
        gamma: noise.gamma,
        omega: noise.omega,
        trajectories,
        two_point,
        four_point: FourPointCheck {
            times: sorted,
            empirical: m4,
            std_err: e4,
            analytic: a4,
        },
        two_point_ratio: num / den,
        four_point_ratio: m4 / a4,
    })
}

/// Ten lags spread over `[0, 0.9·horizon]` starting at `t0 = 0.05·horizon`.
pub fn default_correlator_check(noise: &NoiseConfig, horizon: f64, trajectories: usize) -> Result<CorrelatorReport> {
    let t0 = 0.05 * horizon;
    let lags: Vec<f64> = (0..10).map(|i| 0.1 * horizon * i as f64).collect();
    let four = [0.9 * horizon, 0.65 * horizon, 0.4 * horizon, 0.1 * horizon];
    correlator_check(noise, horizon, trajectories, t0, &lags, four)
}

/// One optimized solution re-scored by Monte Carlo.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateRow {
    pub gate: String,
    pub g_over_gamma: f64,
    pub model: ModelKind,
    pub restart: usize,
    /// Cost on the model the pulses were optimized for.
    pub cost: f64,
    pub fidelity: f64,
}

pub fn mc_fidelity(sim: &Simulator, p: &PulseSequence, gate: &TargetGate) -> Result<f64> {
    table_fidelity(&sim.simulate_ensemble(p)?, &gate.matrix)
}

fn simulator_at(cfg: &ExperimentConfig, shape: PulseShape, g_over_gamma: f64) -> Result<Simulator> {
    Simulator::new(cfg.with_g_over_gamma(g_over_gamma).sim_config()?, shape)
}

fn rescore(
    result: &OptimizeResult,
    gate: &TargetGate,
    kind: ModelKind,
    sim: &Simulator,
    g_over_gamma: f64,
) -> Result<Vec<GateRow>> {
    result
        .restarts
        .iter()
        .map(|r| {
            Ok(GateRow {
                gate: gate.name.to_string(),
                g_over_gamma,
                model: kind,
                restart: r.restart,
                cost: r.cost,
                fidelity: mc_fidelity(sim, &r.pulses, gate)?,
            })
        })
        .collect()
}

/// Closed-system model on the configured grid and pulse shape.
pub fn closed_system_model(cfg: &ExperimentConfig) -> Result<ModelHandle> {
    Ok(ModelHandle::ClosedSystem(crate::propagate::ControlGrid::new(cfg.grid()?, cfg.shape()?)?))
}

pub fn open_system_model(cfg: &ExperimentConfig, g_over_gamma: f64) -> Result<ModelHandle> {
    let c = cfg.with_g_over_gamma(g_over_gamma);
    let control = crate::propagate::ControlGrid::new(c.grid()?, c.shape()?)?;
    Ok(ModelHandle::OpenSystem(OpenSystemWhitebox::new(control, c.noise()?, c.whitebox.nodes)?))
}

/// Which models a gate study optimizes.
#[derive(Clone, Debug, Default)]
pub struct GateStudyModels<'a> {
    pub open_system: bool,
    /// Graybox models, each used only at the coupling it was trained for.
    pub graybox: Vec<&'a GrayboxModel>,
}

fn trained_ratio(model: &GrayboxModel) -> Option<f64> {
    model.training().map(|t| t.g / t.gamma)
}

/// Optimizes each gate on every requested model and re-scores all restarts
/// by Monte Carlo at each coupling. Closed-system pulses are optimized once
/// and re-simulated at every coupling.
pub fn gate_study(
    cfg: &ExperimentConfig,
    gates: &[TargetGate],
    g_over_gamma: &[f64],
    models: &GateStudyModels,
) -> Result<Vec<GateRow>> {
    let shape = cfg.shape()?;
    let opt = cfg.optimize_config();
    let cs = closed_system_model(cfg)?;
    let mut rows = Vec::new();
    for gate in gates {
        let cs_result = optimize_pulses(&cs, gate, &opt)?;
        for &ratio in g_over_gamma {
            let sim = simulator_at(cfg, shape, ratio)?;
            rows.extend(rescore(&cs_result, gate, ModelKind::ClosedSystem, &sim, ratio)?);
            if models.open_system {
                let os = open_system_model(cfg, ratio)?;
                let r = optimize_pulses(&os, gate, &opt)?;
                rows.extend(rescore(&r, gate, ModelKind::OpenSystem, &sim, ratio)?);
            }
            for gb in &models.graybox {
                let matches = trained_ratio(gb).is_some_and(|t| (t - ratio).abs() <= 1e-9 * ratio.abs().max(1.0));
                if !matches {
                    continue;
                }
                if gb.physics().shape != shape {
                    return Err(Error::Config("graybox pulse shape differs from the configured one".into()));
                }
                let handle = ModelHandle::Graybox(std::sync::Arc::new((*gb).clone()));
                let r = optimize_pulses(&handle, gate, &opt)?;
                rows.extend(rescore(&r, gate, ModelKind::Graybox, &sim, ratio)?);
            }
        }
    }
    Ok(rows)
}

/// One Haar-random target compared across graybox and closed-system control.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HaarRow {
    pub target: usize,
    pub gb_cost: f64,
    pub gb_fidelity: f64,
    pub cs_cost: f64,
    pub cs_fidelity: f64,
    /// Distance of the simulated noise operators from identity at the
    /// graybox solution.
    pub vo_distance_mc: f64,
    /// Same distance from the graybox model's own noise operators.
    pub vo_distance_gb: f64,
}

/// Target `i` of the Haar family selected by `seed`.
pub fn haar_target(seed: u64, i: usize) -> Result<TargetGate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    TargetGate::custom(haar_unitary_with(&mut rng))
}

/// Optimizes `n_targets` Haar-random gates on the graybox model and on the
/// closed-system model, then re-scores both at the model's training coupling.
pub fn haar_study(cfg: &ExperimentConfig, model: &GrayboxModel, n_targets: usize, seed: u64) -> Result<Vec<HaarRow>> {
    let shape = cfg.shape()?;
    if model.physics().shape != shape {
        return Err(Error::Config("graybox pulse shape differs from the configured one".into()));
    }
    let ratio = trained_ratio(model).ok_or_else(|| Error::Config("graybox model has no training metadata".into()))?;
    let sim = simulator_at(cfg, shape, ratio)?;
    let opt = cfg.optimize_config();
    let cs = closed_system_model(cfg)?;
    let gb = ModelHandle::Graybox(std::sync::Arc::new(model.clone()));
    (0..n_targets)
        .map(|i| {
            let gate = haar_target(seed, i)?;
            let g = optimize_pulses(&gb, &gate, &opt)?;
            let c = optimize_pulses(&cs, &gate, &opt)?;
            let (table, vo) = sim.simulate_with_vo(&g.best)?;
            let (_, vo_gb) = model.forward(&g.best)?;
            Ok(HaarRow {
                target: i,
                gb_cost: g.best_cost,
                gb_fidelity: table_fidelity(&table, &gate.matrix)?,
                cs_cost: c.best_cost,
                cs_fidelity: mc_fidelity(&sim, &c.best, &gate)?,
                vo_distance_mc: vo_distance(&vo),
                vo_distance_gb: vo_distance(&vo_gb),
            })
        })
        .collect()
}
