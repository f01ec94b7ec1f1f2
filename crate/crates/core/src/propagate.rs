//! Time-ordered propagation of piecewise-constant 2×2 Hamiltonians using the
//! closed-form SU(2) exponential.

use crate::error::{Error, Result};
use crate::linalg::{Mat2, C64};
use crate::pulse::{PulseSequence, PulseShape, TimeGrid};

const HERMITIAN_TOL: f64 = 1e-9;

/// `exp(−i(a0·I + a·σ)dt)`.
#[inline]
pub fn step_unitary(a0: f64, a: [f64; 3], dt: f64) -> Mat2 {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    let (c, s) = if n == 0.0 {
        (1.0, 0.0)
    } else {
        let (sin, cos) = (n * dt).sin_cos();
        (cos, sin / n)
    };
    let mut u = Mat2::new(
        C64::new(c, -s * a[2]),
        C64::new(-s * a[1], -s * a[0]),
        C64::new(s * a[1], -s * a[0]),
        C64::new(c, s * a[2]),
    );
    if a0 != 0.0 {
        let (sin, cos) = (a0 * dt).sin_cos();
        u = u.scale(C64::new(cos, -sin));
    }
    u
}

/// Cumulative products `U(t_j) = exp(−iH_j dt)···exp(−iH_0 dt)`, one entry
/// per sample (later steps multiply on the left).
pub fn propagate(h_samples: &[Mat2], grid: &TimeGrid) -> Result<Vec<Mat2>> {
    if h_samples.len() != grid.steps() {
        return Err(Error::Shape(format!(
            "{} Hamiltonian samples for a {}-step grid",
            h_samples.len(),
            grid.steps()
        )));
    }
    let dt = grid.dt();
    let mut out = Vec::with_capacity(h_samples.len());
    let mut u = Mat2::identity();
    for (index, h) in h_samples.iter().enumerate() {
        let deviation = h.hermiticity_defect();
        if !(deviation <= HERMITIAN_TOL) {
            return Err(Error::NonHermitian {
                index,
                deviation,
                tolerance: HERMITIAN_TOL,
            });
        }
        let c = h.pauli_coefficients();
        u = step_unitary(c[0].re, [c[1].re, c[2].re, c[3].re], dt) * u;
        out.push(u);
    }
    Ok(out)
}

/// Precomputed pulse envelopes on a time grid, shared across the many pulse
/// sequences evaluated during optimization and dataset generation.
#[derive(Clone, Debug)]
pub struct ControlGrid {
    grid: TimeGrid,
    shape: PulseShape,
    // envelopes[j * n_pulses + k]
    envelopes: Vec<f64>,
}

impl ControlGrid {
    pub fn new(grid: TimeGrid, shape: PulseShape) -> Result<Self> {
        shape.validate()?;
        let n = shape.n_pulses;
        let mut envelopes = Vec::with_capacity(grid.steps() * n);
        for t in grid.sample_times() {
            for k in 0..n {
                envelopes.push(shape.envelope(k, t));
            }
        }
        Ok(ControlGrid {
            grid,
            shape,
            envelopes,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn shape(&self) -> &PulseShape {
        &self.shape
    }

    fn check(&self, p: &PulseSequence) -> Result<()> {
        if p.shape() != &self.shape {
            return Err(Error::Shape("pulse shape differs from the control grid".into()));
        }
        Ok(())
    }

    /// `(f_x, f_y)` at every cell midpoint.
    pub fn waveform(&self, p: &PulseSequence) -> Result<Vec<[f64; 2]>> {
        self.check(p)?;
        let n = self.shape.n_pulses;
        let amps = p.amplitudes();
        Ok(self
            .envelopes
            .chunks_exact(n)
            .map(|env| {
                let mut f = [0.0; 2];
                for (e, a) in env.iter().zip(amps) {
                    f[0] += a[0] * e;
                    f[1] += a[1] * e;
                }
                f
            })
            .collect())
    }

    /// Control propagator at every cell boundary: entry `j` is `U_c(j·dt)`,
    /// so the vector has `steps + 1` entries starting from the identity.
    pub fn control_path(&self, p: &PulseSequence) -> Result<Vec<Mat2>> {
        self.path_with_z(p, 0.0)
    }

    /// Final control propagator `U_c(T)`.
    pub fn control_unitary(&self, p: &PulseSequence) -> Result<Mat2> {
        let dt = self.grid.dt();
        let mut u = Mat2::identity();
        for f in self.waveform(p)? {
            u = step_unitary(0.0, [f[0], f[1], 0.0], dt) * u;
        }
        Ok(u)
    }

    /// Boundary propagators for `H = f_x σ_x + f_y σ_y + hz σ_z` with constant `hz`.
    pub fn path_with_z(&self, p: &PulseSequence, hz: f64) -> Result<Vec<Mat2>> {
        let dt = self.grid.dt();
        let mut out = Vec::with_capacity(self.grid.steps() + 1);
        let mut u = Mat2::identity();
        out.push(u);
        for f in self.waveform(p)? {
            u = step_unitary(0.0, [f[0], f[1], hz], dt) * u;
            out.push(u);
        }
        Ok(out)
    }

    /// Final propagator for `H_j = f_x σ_x + f_y σ_y + z_j σ_z` with a
    /// per-step `z_j`.
    pub fn unitary_with_z_samples(&self, waveform: &[[f64; 2]], z: &[f64]) -> Mat2 {
        let dt = self.grid.dt();
        let mut u = Mat2::identity();
        for (f, hz) in waveform.iter().zip(z) {
            u = step_unitary(0.0, [f[0], f[1], *hz], dt) * u;
        }
        u
    }
}
