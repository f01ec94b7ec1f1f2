//! Random telegraph noise (RTN), optionally modulated by `cos(Ωt + φ)`, and its
//! analytic two- and four-point correlators.
//!
//! Switching events are drawn as exact exponential inter-arrival times, so the
//! sampled process has no time-step bias; trajectories are only projected onto
//! a grid at the very end. Every trajectory owns a ChaCha stream selected by
//! `(seed, trajectory_index)`, which makes generation order-independent.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pulse::TimeGrid;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Switching rate γ (MHz).
    pub gamma: f64,
    /// Coupling strength g (MHz).
    pub g: f64,
    /// Modulation frequency Ω (MHz); zero disables modulation.
    pub omega: f64,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn new(gamma: f64, g: f64, omega: f64, seed: u64) -> Result<Self> {
        let cfg = NoiseConfig {
            gamma,
            g,
            omega,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.g >= 0.0 && self.g.is_finite()) {
            return Err(Error::invalid(format!("g must be non-negative, got {}", self.g)));
        }
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            return Err(Error::invalid(format!("omega must be non-negative, got {}", self.omega)));
        }
        Ok(())
    }

    pub fn is_modulated(&self) -> bool {
        self.omega > 0.0
    }

    pub fn with_g(mut self, g: f64) -> Self {
        self.g = g;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// One continuous-time realization: initial sign, switch instants and phase.
#[derive(Clone, Debug, PartialEq)]
pub struct RtnPath {
    pub initial: f64,
    pub switch_times: Vec<f64>,
    pub phase: f64,
}

impl RtnPath {
    /// Draws a realization on `[0, horizon]`.
    pub fn sample(cfg: &NoiseConfig, horizon: f64, trajectory_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(trajectory_index);
        let initial = if rng.random::<bool>() { 1.0 } else { -1.0 };
        // The phase is always drawn so modulated and unmodulated streams stay aligned.
        let phase = 2.0 * PI * rng.random::<f64>();
        let wait = Exp::new(cfg.gamma).expect("gamma validated positive");
        let mut switch_times = Vec::new();
        let mut t = 0.0;
        loop {
            t += wait.sample(&mut rng);
            if t > horizon {
                break;
            }
            switch_times.push(t);
        }
        RtnPath {
            initial,
            switch_times,
            phase,
        }
    }

    /// ξ(t) = ξ(0)(−1)^{#switches ≤ t}.
    pub fn telegraph(&self, t: f64) -> f64 {
        let n = self.switch_times.partition_point(|&s| s <= t);
        if n % 2 == 0 {
            self.initial
        } else {
            -self.initial
        }
    }

    /// Constant-sign runs of ξ over the grid cells as `(start, end, sign)` with
    /// `end` exclusive. Cells are classified by their midpoint.
    pub fn grid_segments(&self, grid: &TimeGrid) -> Vec<(usize, usize, f64)> {
        let dt = grid.dt();
        let steps = grid.steps();
        let mut segments = Vec::with_capacity(self.switch_times.len() + 1);
        let mut start = 0usize;
        let mut sign = self.initial;
        for &s in &self.switch_times {
            // First cell whose midpoint is at or past the switch.
            let j = ((s / dt - 0.5).ceil().max(0.0) as usize).min(steps);
            if j > start {
                segments.push((start, j, sign));
                start = j;
            }
            sign = -sign;
        }
        if start < steps {
            segments.push((start, steps, sign));
        }
        // Switch pairs landing between two midpoints leave adjacent runs with
        // the same sign; merge them.
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(segments.len());
        for seg in segments {
            match merged.last_mut() {
                Some(last) if last.2 == seg.2 => last.1 = seg.1,
                _ => merged.push(seg),
            }
        }
        merged
    }
}

/// β(t_j) sampled at the grid midpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseTrajectory {
    pub values: Vec<f64>,
    pub phase: f64,
}

pub fn sample_rtn(cfg: &NoiseConfig, grid: &TimeGrid, trajectory_index: u64) -> NoiseTrajectory {
    let path = RtnPath::sample(cfg, grid.total(), trajectory_index);
    let mut values = vec![0.0; grid.steps()];
    for (a, b, s) in path.grid_segments(grid) {
        values[a..b].fill(s);
    }
    if cfg.is_modulated() {
        for (j, v) in values.iter_mut().enumerate() {
            *v *= (cfg.omega * grid.sample_time(j) + path.phase).cos();
        }
    }
    NoiseTrajectory {
        values,
        phase: path.phase,
    }
}

/// Two-point correlator without the g² factor. Arguments in either order.
pub fn corr2(t1: f64, t2: f64, cfg: &NoiseConfig) -> f64 {
    let lag = (t1 - t2).abs();
    let decay = (-2.0 * cfg.gamma * lag).exp();
    if cfg.is_modulated() {
        (cfg.omega * lag).cos() * decay
    } else {
        decay
    }
}

/// Four-point correlator without the g⁴ factor, for `t1 ≥ t2 ≥ t3 ≥ t4`.
///
/// The modulated form is the three-cosine expression without the 1/8 that a
/// direct average over φ would produce.
pub fn corr4(t1: f64, t2: f64, t3: f64, t4: f64, cfg: &NoiseConfig) -> Result<f64> {
    if !(t1 >= t2 && t2 >= t3 && t3 >= t4) {
        return Err(Error::invalid(format!(
            "corr4 requires t1 >= t2 >= t3 >= t4, got ({t1}, {t2}, {t3}, {t4})"
        )));
    }
    let decay = (-2.0 * cfg.gamma * (t1 - t2 + t3 - t4)).exp();
    if !cfg.is_modulated() {
        return Ok(decay);
    }
    let w = cfg.omega;
    let c = (w * (t1 + t2 - t3 - t4)).cos()
        + (w * (t1 - t2 + t3 - t4)).cos()
        + (w * (t1 - t2 - t3 + t4)).cos();
    Ok(c * decay)
}
