//! Time discretization and Gaussian pulse trains on the x and y control axes.
//!
//! Units: times in μs, amplitudes in MHz, ħ = 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid of `steps` cells over `[0, total]`. Hamiltonians are sampled
/// at cell midpoints and held constant across each cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    total: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(total: f64, steps: usize) -> Result<Self> {
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::invalid(format!("total time must be positive, got {total}")));
        }
        if steps == 0 {
            return Err(Error::invalid("time grid needs at least one step"));
        }
        Ok(TimeGrid { total, steps })
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.total / self.steps as f64
    }

    /// Midpoint of cell `j`.
    pub fn sample_time(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dt()
    }

    /// Left edge of cell `j`; `boundary(steps) == total`.
    pub fn boundary(&self, j: usize) -> f64 {
        j as f64 * self.dt()
    }

    pub fn sample_times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.steps).map(move |j| self.sample_time(j))
    }
}

/// Fixed geometry of a pulse train: `n_pulses` Gaussians centred at
/// `τ_k = kT/(n_pulses + 1)`, all sharing one width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseShape {
    pub total: f64,
    pub n_pulses: usize,
    pub width: f64,
    pub a_max: f64,
}

impl PulseShape {
    /// Default width `T/(6(N_p+1))` keeps ±3σ of each pulse inside its slot.
    pub fn new(total: f64, n_pulses: usize, width: Option<f64>, a_max: f64) -> Result<Self> {
        let width = width.unwrap_or(total / (6.0 * (n_pulses as f64 + 1.0)));
        let shape = PulseShape {
            total,
            n_pulses,
            width,
            a_max,
        };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.total > 0.0) {
            return Err(Error::invalid("pulse train duration must be positive"));
        }
        if self.n_pulses == 0 {
            return Err(Error::invalid("need at least one pulse"));
        }
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(Error::invalid(format!("pulse width must be positive, got {}", self.width)));
        }
        if !(self.a_max > 0.0 && self.a_max.is_finite()) {
            return Err(Error::invalid(format!("a_max must be positive, got {}", self.a_max)));
        }
        Ok(())
    }

    pub fn center(&self, k: usize) -> f64 {
        (k + 1) as f64 * self.total / (self.n_pulses as f64 + 1.0)
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_pulses).map(|k| self.center(k)).collect()
    }

    /// Number of free amplitudes (two axes per pulse).
    pub fn n_params(&self) -> usize {
        2 * self.n_pulses
    }

    /// Envelope of pulse `k` at time `t` with unit amplitude.
    #[inline]
    pub fn envelope(&self, k: usize, t: f64) -> f64 {
        let d = (t - self.center(k)) / self.width;
        (-d * d).exp()
    }
}

/// Amplitudes `A[k][α]` of a pulse train, α = 0 for x and 1 for y.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    shape: PulseShape,
    amplitudes: Vec<[f64; 2]>,
}

impl PulseSequence {
    pub fn new(shape: PulseShape, amplitudes: Vec<[f64; 2]>) -> Result<Self> {
        shape.validate()?;
        if amplitudes.len() != shape.n_pulses {
            return Err(Error::Shape(format!(
                "expected {} pulses, got {}",
                shape.n_pulses,
                amplitudes.len()
            )));
        }
        for (k, a) in amplitudes.iter().enumerate() {
            for v in a {
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("amplitude of pulse {k}")));
                }
                if v.abs() > shape.a_max * (1.0 + 1e-12) {
                    return Err(Error::invalid(format!(
                        "|amplitude| {} of pulse {k} exceeds a_max {}",
                        v.abs(),
                        shape.a_max
                    )));
                }
            }
        }
        Ok(PulseSequence { shape, amplitudes })
    }

    pub fn zeros(shape: PulseShape) -> Self {
        PulseSequence {
            amplitudes: vec![[0.0; 2]; shape.n_pulses],
            shape,
        }
    }

    /// Builds from the flat layout `[x_1..x_N, y_1..y_N]`, clamping each entry
    /// into `[-a_max, a_max]`.
    pub fn from_flat_clamped(shape: PulseShape, flat: &[f64]) -> Result<Self> {
        if flat.len() != shape.n_params() {
            return Err(Error::Shape(format!(
                "expected {} amplitudes, got {}",
                shape.n_params(),
                flat.len()
            )));
        }
        let n = shape.n_pulses;
        let clamp = |v: f64| v.clamp(-shape.a_max, shape.a_max);
        let amplitudes = (0..n).map(|k| [clamp(flat[k]), clamp(flat[n + k])]).collect();
        PulseSequence::new(shape, amplitudes)
    }

    /// Flat layout `[x_1..x_N, y_1..y_N]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.amplitudes.iter().map(|a| a[0]).collect();
        out.extend(self.amplitudes.iter().map(|a| a[1]));
        out
    }

    pub fn shape(&self) -> &PulseShape {
        &self.shape
    }

    pub fn amplitudes(&self) -> &[[f64; 2]] {
        &self.amplitudes
    }

    /// `(f_x(t), f_y(t))`.
    pub fn eval(&self, t: f64) -> [f64; 2] {
        let mut f = [0.0; 2];
        for (k, a) in self.amplitudes.iter().enumerate() {
            if a[0] == 0.0 && a[1] == 0.0 {
                continue;
            }
            let e = self.shape.envelope(k, t);
            f[0] += a[0] * e;
            f[1] += a[1] * e;
        }
        f
    }
}

/// Samples the control waveform at the midpoint of every grid cell.
pub fn waveform_eval(p: &PulseSequence, grid: &TimeGrid) -> Result<Vec<[f64; 2]>> {
    p.shape.validate()?;
    Ok(grid.sample_times().map(|t| p.eval(t)).collect())
}
