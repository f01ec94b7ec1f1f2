//! Monte-Carlo ensemble simulation of the driven qubit under RTN dephasing.
//!
//! Each trajectory evolves under `H(t) = f_x σ_x + f_y σ_y + g β_k(t) σ_z`.
//! For unmodulated noise β is ±1 and piecewise constant, so the trajectory
//! propagator is assembled from two cached cumulative products (one per sign)
//! as `P_s(b)·P_s(a)†` per constant run. Every per-step exponential is the
//! same one the direct product would use; only the association of the
//! products changes. Modulated noise falls back to direct propagation.
//!
//! Per-trajectory results are collected in index order and reduced with a
//! fixed pairwise tree, so outputs do not depend on the worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{tree_sum, Mat2, Rot3};
use crate::noise::{sample_rtn, NoiseConfig, RtnPath};
use crate::pauli::{PauliState, OBSERVABLES, SIGMA};
use crate::propagate::ControlGrid;
use crate::pulse::{PulseSequence, PulseShape, TimeGrid};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub grid: TimeGrid,
    /// Number of noise realizations K.
    pub realizations: usize,
    /// Noise parameters; `noise.seed` is the master seed of the ensemble.
    pub noise: NoiseConfig,
}

impl SimConfig {
    pub fn new(grid: TimeGrid, realizations: usize, noise: NoiseConfig) -> Result<Self> {
        if realizations == 0 {
            return Err(Error::invalid("need at least one noise realization"));
        }
        noise.validate()?;
        Ok(SimConfig {
            grid,
            realizations,
            noise,
        })
    }

    /// Defaults: T = 3.2 μs, 3000 steps, 2000 realizations.
    pub fn standard(noise: NoiseConfig) -> Self {
        SimConfig {
            grid: TimeGrid::new(3.2, 3000).expect("valid"),
            realizations: 2000,
            noise,
        }
    }

    /// 3/√K, the tolerance used for Monte-Carlo comparisons.
    pub fn mc_tolerance(&self) -> f64 {
        3.0 / (self.realizations as f64).sqrt()
    }
}

/// 18 expectations indexed by (state, observable), row-major over the states
/// `[x+, x−, y+, y−, z+, z−]` and observables `[X, Y, Z]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpectationTable(pub [f64; 18]);

impl ExpectationTable {
    pub const LEN: usize = 18;

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let arr: [f64; 18] = values
            .try_into()
            .map_err(|_| Error::Shape(format!("expected 18 expectations, got {}", values.len())))?;
        Ok(ExpectationTable(arr))
    }

    /// Table of the channel `ρ ↦ Σ_k w_k U_k ρ U_k†` given its averaged Bloch
    /// matrix `R[b][a]`.
    pub fn from_bloch(r: &Rot3) -> Self {
        let mut v = [0.0; 18];
        for s in PauliState::ALL {
            for (o, obs) in OBSERVABLES.iter().enumerate() {
                let b = obs.axis().expect("observables are traceless");
                v[s.position() * 3 + o] = s.sign() * r[b][s.axis()];
            }
        }
        ExpectationTable(v)
    }

    /// Noiseless table of a unitary.
    pub fn ideal(u: &Mat2) -> Self {
        Self::from_bloch(&unit_bloch_rotation(u))
    }

    pub fn get(&self, state: PauliState, observable: usize) -> f64 {
        self.0[state.position() * 3 + observable]
    }

    pub fn values(&self) -> &[f64; 18] {
        &self.0
    }

    pub fn mse(&self, other: &ExpectationTable) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / 18.0
    }
}

/// `{V_X, V_Y, V_Z}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseOperatorSet(pub [Mat2; 3]);

impl NoiseOperatorSet {
    pub fn identity() -> Self {
        NoiseOperatorSet([Mat2::identity(); 3])
    }

    /// `Re Tr[ρ_s Õ V_O]` for every (state, observable), with `Õ = U_c† O U_c`.
    pub fn expectations(&self, u_c: &Mat2) -> ExpectationTable {
        let mut v = [0.0; 18];
        for s in PauliState::ALL {
            let rho = s.density();
            for (o, vo) in self.0.iter().enumerate() {
                let o_tilde = u_c.dagger() * SIGMA[o] * *u_c;
                v[s.position() * 3 + o] = (rho * o_tilde * *vo).trace().re;
            }
        }
        ExpectationTable(v)
    }
}

/// Bloch rotation of `U`, with each column renormalised by the first column
/// norm of `U` so diagonal propagators map z exactly onto z.
pub fn unit_bloch_rotation(u: &Mat2) -> Rot3 {
    let m = &u.0;
    let n = m[0][0].norm_sqr() + m[1][0].norm_sqr();
    let mut r = crate::linalg::bloch_rotation(u);
    for row in r.iter_mut() {
        for v in row.iter_mut() {
            *v /= n;
        }
    }
    r
}

fn rot_add(a: &Rot3, b: &Rot3) -> Rot3 {
    crate::linalg::rot3_add(a, b)
}

/// Monte-Carlo engine for one pulse shape and simulation config.
#[derive(Clone, Debug)]
pub struct Simulator {
    cfg: SimConfig,
    control: ControlGrid,
}

impl Simulator {
    pub fn new(cfg: SimConfig, shape: PulseShape) -> Result<Self> {
        cfg.noise.validate()?;
        if cfg.realizations == 0 {
            return Err(Error::invalid("need at least one noise realization"));
        }
        let control = ControlGrid::new(cfg.grid, shape)?;
        Ok(Simulator { cfg, control })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn control(&self) -> &ControlGrid {
        &self.control
    }

    /// Same engine with a different noise configuration.
    pub fn with_noise(&self, noise: NoiseConfig) -> Result<Self> {
        noise.validate()?;
        let mut s = self.clone();
        s.cfg.noise = noise;
        Ok(s)
    }

    /// Final propagator of every trajectory, in trajectory-index order.
    pub fn trajectory_unitaries(&self, p: &PulseSequence) -> Result<Vec<Mat2>> {
        let k = self.cfg.realizations as u64;
        let noise = self.cfg.noise;
        let grid = self.cfg.grid;
        if noise.is_modulated() && noise.g != 0.0 {
            let waveform = self.control.waveform(p)?;
            return Ok((0..k)
                .into_par_iter()
                .map(|idx| {
                    let beta = sample_rtn(&noise, &grid, idx);
                    let z: Vec<f64> = beta.values.iter().map(|b| noise.g * b).collect();
                    self.control.unitary_with_z_samples(&waveform, &z)
                })
                .collect());
        }
        let plus = self.control.path_with_z(p, noise.g)?;
        let minus = if noise.g == 0.0 {
            plus.clone()
        } else {
            self.control.path_with_z(p, -noise.g)?
        };
        let steps = grid.steps();
        Ok((0..k)
            .into_par_iter()
            .map(|idx| {
                let path = RtnPath::sample(&noise, grid.total(), idx);
                let mut u = Mat2::identity();
                for (a, b, s) in path.grid_segments(&grid) {
                    let cum = if s > 0.0 { &plus } else { &minus };
                    let seg = if a == 0 {
                        cum[b]
                    } else {
                        cum[b] * cum[a].dagger()
                    };
                    u = if a == 0 { seg } else { seg * u };
                }
                debug_assert!(steps > 0);
                u
            })
            .collect())
    }

    pub fn simulate_ensemble(&self, p: &PulseSequence) -> Result<ExpectationTable> {
        let us = self.trajectory_unitaries(p)?;
        Ok(self.table_from_unitaries(&us))
    }

    fn table_from_unitaries(&self, us: &[Mat2]) -> ExpectationTable {
        let rots: Vec<Rot3> = us.par_iter().map(unit_bloch_rotation).collect();
        let sum = tree_sum(&rots, [[0.0; 3]; 3], &rot_add);
        let k = us.len() as f64;
        let mut mean = sum;
        for row in mean.iter_mut() {
            for v in row.iter_mut() {
                *v /= k;
            }
        }
        ExpectationTable::from_bloch(&mean)
    }

    /// Noise operators `V_O = ⟨Õ U_I† Õ U_I⟩` with `U_I = U_c†(T) U(T)`.
    pub fn estimate_vo(&self, p: &PulseSequence) -> Result<NoiseOperatorSet> {
        Ok(self.simulate_with_vo(p)?.1)
    }

    /// Expectation table and noise operators from one shared trajectory set.
    pub fn simulate_with_vo(&self, p: &PulseSequence) -> Result<(ExpectationTable, NoiseOperatorSet)> {
        let us = self.trajectory_unitaries(p)?;
        let table = self.table_from_unitaries(&us);
        let u_c = self.control.control_unitary(p)?;
        let u_cd = u_c.dagger();
        let o_tilde: [Mat2; 3] = std::array::from_fn(|o| u_cd * SIGMA[o] * u_c);
        let per_traj: Vec<[Mat2; 3]> = us
            .par_iter()
            .map(|u| {
                let ui = u_cd * *u;
                let uid = ui.dagger();
                std::array::from_fn(|o| o_tilde[o] * uid * o_tilde[o] * ui)
            })
            .collect();
        let sum = tree_sum(&per_traj, [Mat2::zeros(); 3], &|a: &[Mat2; 3], b: &[Mat2; 3]| {
            std::array::from_fn(|o| a[o] + b[o])
        });
        let k = us.len() as f64;
        let vo = NoiseOperatorSet(std::array::from_fn(|o| sum[o].scale_re(1.0 / k)));
        Ok((table, vo))
    }

    /// `(g/γ, ⟨X(T)⟩ from x+)` under free evolution for each coupling.
    pub fn coherence_scan(&self, g_values: &[f64]) -> Result<Vec<(f64, f64)>> {
        let zero = PulseSequence::zeros(*self.control.shape());
        g_values
            .iter()
            .map(|&g| {
                let sim = self.with_noise(self.cfg.noise.with_g(g))?;
                let t = sim.simulate_ensemble(&zero)?;
                Ok((g / self.cfg.noise.gamma, t.get(PauliState::XPlus, 0)))
            })
            .collect()
    }

    /// Direct step-by-step propagation of every trajectory, bypassing the
    /// cached-product path. Used to cross-check the fast path.
    pub fn trajectory_unitaries_direct(&self, p: &PulseSequence) -> Result<Vec<Mat2>> {
        let noise = self.cfg.noise;
        let grid = self.cfg.grid;
        let waveform = self.control.waveform(p)?;
        Ok((0..self.cfg.realizations as u64)
            .into_par_iter()
            .map(|idx| {
                let beta = sample_rtn(&noise, &grid, idx);
                let z: Vec<f64> = beta.values.iter().map(|b| noise.g * b).collect();
                self.control.unitary_with_z_samples(&waveform, &z)
            })
            .collect())
    }
}

/// Convenience wrapper around [`Simulator::simulate_ensemble`].
pub fn simulate_ensemble(p: &PulseSequence, cfg: &SimConfig) -> Result<ExpectationTable> {
    Simulator::new(*cfg, *p.shape())?.simulate_ensemble(p)
}

/// Convenience wrapper around [`Simulator::estimate_vo`].
pub fn estimate_vo(p: &PulseSequence, cfg: &SimConfig) -> Result<NoiseOperatorSet> {
    Simulator::new(*cfg, *p.shape())?.estimate_vo(p)
}

/// Free-evolution coherence for each coupling in `g_values`.
pub fn coherence_scan(g_values: &[f64], shape: PulseShape, cfg: &SimConfig) -> Result<Vec<(f64, f64)>> {
    Simulator::new(*cfg, shape)?.coherence_scan(g_values)
}
