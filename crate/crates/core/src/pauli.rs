//! Pauli algebra and the informationally complete set of input states and
//! observables used throughout the toolkit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat2, C64, I, ONE, ZERO};

pub const SIGMA_0: Mat2 = Mat2::identity();
pub const SIGMA_X: Mat2 = Mat2::new(ZERO, ONE, ONE, ZERO);
pub const SIGMA_Y: Mat2 = Mat2::new(ZERO, C64::new(0.0, -1.0), I, ZERO);
pub const SIGMA_Z: Mat2 = Mat2::new(ONE, ZERO, ZERO, C64::new(-1.0, 0.0));

/// σ_x, σ_y, σ_z in that order.
pub const SIGMA: [Mat2; 3] = [SIGMA_X, SIGMA_Y, SIGMA_Z];

/// I, σ_x, σ_y, σ_z.
pub const PAULI_BASIS: [Mat2; 4] = [SIGMA_0, SIGMA_X, SIGMA_Y, SIGMA_Z];

/// Index into {I, σ_x, σ_y, σ_z}.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PauliIndex(u8);

impl PauliIndex {
    pub const I: PauliIndex = PauliIndex(0);
    pub const X: PauliIndex = PauliIndex(1);
    pub const Y: PauliIndex = PauliIndex(2);
    pub const Z: PauliIndex = PauliIndex(3);

    pub fn new(index: usize) -> Result<Self> {
        if index < 4 {
            Ok(PauliIndex(index as u8))
        } else {
            Err(Error::invalid(format!("Pauli index {index} outside 0..4")))
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn matrix(self) -> Mat2 {
        PAULI_BASIS[self.index()]
    }

    /// Bloch axis (0, 1, 2) for σ_x, σ_y, σ_z; `None` for the identity.
    pub fn axis(self) -> Option<usize> {
        self.index().checked_sub(1)
    }
}

/// The observables measured at the final time, in table order.
pub const OBSERVABLES: [PauliIndex; 3] = [PauliIndex::X, PauliIndex::Y, PauliIndex::Z];

/// The six Pauli eigenstates in table order `[x+, x−, y+, y−, z+, z−]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PauliState {
    XPlus,
    XMinus,
    YPlus,
    YMinus,
    ZPlus,
    ZMinus,
}

impl PauliState {
    pub const ALL: [PauliState; 6] = [
        PauliState::XPlus,
        PauliState::XMinus,
        PauliState::YPlus,
        PauliState::YMinus,
        PauliState::ZPlus,
        PauliState::ZMinus,
    ];

    /// Bloch axis of the eigenstate.
    pub fn axis(self) -> usize {
        self.position() / 2
    }

    /// +1 for the positive eigenstate, −1 for the negative one.
    pub fn sign(self) -> f64 {
        if self.position() % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn position(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            PauliState::XPlus => "x+",
            PauliState::XMinus => "x-",
            PauliState::YPlus => "y+",
            PauliState::YMinus => "y-",
            PauliState::ZPlus => "z+",
            PauliState::ZMinus => "z-",
        }
    }

    /// Bloch vector of the state.
    pub fn bloch(self) -> [f64; 3] {
        let mut v = [0.0; 3];
        v[self.axis()] = self.sign();
        v
    }

    /// Density matrix `(I + s σ_a)/2`.
    pub fn density(self) -> Mat2 {
        let v = self.bloch();
        Mat2::hermitian(0.5, [0.5 * v[0], 0.5 * v[1], 0.5 * v[2]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn squares_are_identity() {
        for s in SIGMA {
            assert_eq!(s * s, Mat2::identity());
        }
    }

    #[test]
    fn trace_orthogonality() {
        for (a, sa) in PAULI_BASIS.iter().enumerate() {
            for (b, sb) in PAULI_BASIS.iter().enumerate() {
                let t = (*sa * *sb).trace();
                let expect = if a == b { 2.0 } else { 0.0 };
                assert_eq!(t, C64::new(expect, 0.0));
            }
        }
    }

    #[test]
    fn xy_equals_iz() {
        assert_eq!(SIGMA_X * SIGMA_Y, SIGMA_Z.scale(I));
    }

    #[test]
    fn eigenstates_are_eigenstates() {
        for s in PauliState::ALL {
            let rho = s.density();
            let sigma = SIGMA[s.axis()];
            let ev = (sigma * rho).trace();
            assert!((ev.re - s.sign()).abs() < 1e-15);
        }
    }

    #[test]
    fn index_bounds() {
        assert!(PauliIndex::new(3).is_ok());
        assert!(PauliIndex::new(4).is_err());
        assert_eq!(PauliIndex::I.axis(), None);
        assert_eq!(PauliIndex::Z.axis(), Some(2));
    }
}
