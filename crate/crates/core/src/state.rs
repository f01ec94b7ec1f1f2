use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat2;
use crate::pauli::{PauliIndex, PauliState};

/// Single-qubit density matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QubitState {
    rho: Mat2,
    label: Option<PauliState>,
}

impl QubitState {
    pub fn new(rho: Mat2) -> Result<Self> {
        if rho.hermiticity_defect() > 1e-9 {
            return Err(Error::invalid("density matrix is not Hermitian"));
        }
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
            return Err(Error::invalid(format!("density matrix trace {tr} != 1")));
        }
        // Smallest eigenvalue of a trace-one 2×2 Hermitian: (1 − |r|)/2.
        let c = rho.pauli_coefficients();
        let r = (c[1].re.powi(2) + c[2].re.powi(2) + c[3].re.powi(2)).sqrt() * 2.0;
        if (1.0 - r) / 2.0 < -1e-12 {
            return Err(Error::invalid("density matrix is not positive semidefinite"));
        }
        Ok(QubitState { rho, label: None })
    }

    pub fn eigenstate(s: PauliState) -> Self {
        QubitState {
            rho: s.density(),
            label: Some(s),
        }
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.rho
    }

    pub fn label(&self) -> Option<PauliState> {
        self.label
    }

    pub fn evolve(&self, u: &Mat2) -> QubitState {
        QubitState {
            rho: *u * self.rho * u.dagger(),
            label: None,
        }
    }
}

/// `Re Tr[U ρ U† O]`.
pub fn expectation(rho: &QubitState, o: PauliIndex, u: &Mat2) -> f64 {
    (*u * rho.rho * u.dagger() * o.matrix()).trace().re
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::SIGMA_X;
    use crate::propagate::step_unitary;
    use std::f64::consts::PI;

    #[test]
    fn eigenstate_expectations() {
        let id = Mat2::identity();
        let xp = QubitState::eigenstate(PauliState::XPlus);
        let zp = QubitState::eigenstate(PauliState::ZPlus);
        assert_eq!(expectation(&xp, PauliIndex::X, &id), 1.0);
        assert_eq!(expectation(&zp, PauliIndex::X, &id), 0.0);
    }

    #[test]
    fn quarter_turn_about_x() {
        // exp(−i(π/4)σ_x) as a single unit-time step.
        let u = step_unitary(0.0, [PI / 4.0, 0.0, 0.0], 1.0);
        let zp = QubitState::eigenstate(PauliState::ZPlus);
        assert!(expectation(&zp, PauliIndex::Z, &u).abs() < 1e-15);
        assert!((expectation(&zp, PauliIndex::Y, &u) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn heisenberg_schrodinger_agree() {
        let u = step_unitary(0.1, [0.3, -1.1, 0.4], 0.9);
        let s = QubitState::eigenstate(PauliState::YMinus);
        for o in [PauliIndex::X, PauliIndex::Y, PauliIndex::Z] {
            let a = expectation(&s, o, &u);
            let b = expectation(&s.evolve(&u), o, &Mat2::identity());
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn invalid_states_rejected() {
        assert!(QubitState::new(SIGMA_X).is_err());
        assert!(QubitState::new(Mat2::identity().scale_re(0.5)).is_ok());
        assert!(QubitState::new(Mat2::hermitian(0.5, [0.6, 0.0, 0.0])).is_err());
    }
}
