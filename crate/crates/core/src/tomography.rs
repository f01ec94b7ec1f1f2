//! Process tomography in the Pauli basis.
//!
//! A channel is written `Λ(ρ) = Σ_{mn} χ_{mn} σ_m ρ σ_n`. With
//! `E_ij = Tr[σ_j Λ(σ_i)]` and row-major flattening `k = 4i + j`, `l = 4m + n`,
//! the relation is `Ẽ = Aχ̃` with `A_kl = Tr[σ_j σ_m σ_i σ_n]`.

use std::sync::OnceLock;

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat2, C64, ZERO};
use crate::pauli::{PauliState, PAULI_BASIS};
use crate::simulator::{ExpectationTable, NoiseOperatorSet};

type M16 = SMatrix<C64, 16, 16>;

/// `E_ij = Tr[σ_j Λ(σ_i)]` for operator inputs σ_i.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PauliInputTable(pub [[f64; 4]; 4]);

/// 4×4 process matrix in the basis `{I, σx, σy, σz}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessMatrix(pub [[C64; 4]; 4]);

impl ProcessMatrix {
    pub fn hermiticity_defect(&self) -> f64 {
        let mut d = 0.0f64;
        for m in 0..4 {
            for n in 0..4 {
                d = d.max((self.0[m][n] - self.0[n][m].conj()).norm());
            }
        }
        d
    }

    /// `Σ_{mn} χ_{mn} σ_n σ_m`, equal to I for trace-preserving channels.
    pub fn trace_condition(&self) -> Mat2 {
        let mut acc = Mat2::zeros();
        for m in 0..4 {
            for n in 0..4 {
                acc += (PAULI_BASIS[n] * PAULI_BASIS[m]).scale(self.0[m][n]);
            }
        }
        acc
    }

    /// Applies the channel to an operator.
    pub fn apply(&self, rho: &Mat2) -> Mat2 {
        let mut acc = Mat2::zeros();
        for m in 0..4 {
            for n in 0..4 {
                acc += (PAULI_BASIS[m] * *rho * PAULI_BASIS[n]).scale(self.0[m][n]);
            }
        }
        acc
    }

    /// Forward map `χ ↦ E`.
    pub fn to_input_table(&self) -> [[C64; 4]; 4] {
        let mut e = [[ZERO; 4]; 4];
        for (i, row) in e.iter_mut().enumerate() {
            let out = self.apply(&PAULI_BASIS[i]);
            for (j, v) in row.iter_mut().enumerate() {
                *v = (PAULI_BASIS[j] * out).trace();
            }
        }
        e
    }
}

/// Builds `E` from the 18-entry table by linearity over the eigenstate
/// inputs. Column 0 is fixed by trace preservation.
pub fn pauli_input_table(t: &ExpectationTable) -> PauliInputTable {
    use PauliState::*;
    let pairs = [(ZPlus, ZMinus, 1.0), (XPlus, XMinus, -1.0), (YPlus, YMinus, -1.0), (ZPlus, ZMinus, -1.0)];
    let mut e = [[0.0; 4]; 4];
    e[0][0] = 2.0;
    for (i, (a, b, sign)) in pairs.iter().enumerate() {
        for j in 1..4 {
            e[i][j] = t.get(*a, j - 1) + sign * t.get(*b, j - 1);
        }
    }
    PauliInputTable(e)
}

fn build_a_matrix() -> M16 {
    M16::from_fn(|k, l| {
        let (i, j) = (k / 4, k % 4);
        let (m, n) = (l / 4, l % 4);
        (PAULI_BASIS[j] * PAULI_BASIS[m] * PAULI_BASIS[i] * PAULI_BASIS[n]).trace()
    })
}

struct ACache {
    a: M16,
    inv: M16,
}

fn a_cache() -> &'static ACache {
    static CACHE: OnceLock<ACache> = OnceLock::new();
    CACHE.get_or_init(|| {
        let a = build_a_matrix();
        let inv = a.try_inverse().expect("Pauli four-trace matrix is invertible");
        ACache { a, inv }
    })
}

/// The 16×16 matrix `A` and its inverse (computed once).
pub fn build_a() -> (&'static M16, &'static M16) {
    let c = a_cache();
    (&c.a, &c.inv)
}

/// 2-norm condition number of `A`.
pub fn a_condition_number() -> f64 {
    let sv = build_a().0.singular_values();
    sv.max() / sv.min()
}

pub fn reconstruct_chi_complex(e: &[[C64; 4]; 4]) -> Result<ProcessMatrix> {
    let flat = SVector::<C64, 16>::from_fn(|k, _| e[k / 4][k % 4]);
    if flat.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::NonFinite("input table contains non-finite values".into()));
    }
    let chi = build_a().1 * flat;
    Ok(ProcessMatrix(std::array::from_fn(|m| std::array::from_fn(|n| chi[4 * m + n]))))
}

/// `χ̃ = A⁻¹Ẽ`.
pub fn reconstruct_chi(e: &PauliInputTable) -> Result<ProcessMatrix> {
    let c: [[C64; 4]; 4] = std::array::from_fn(|i| std::array::from_fn(|j| C64::new(e.0[i][j], 0.0)));
    reconstruct_chi_complex(&c)
}

/// `χ = cc†` with `c_α = Tr[Gσ_α]/2`.
pub fn chi_target(g: &Mat2) -> ProcessMatrix {
    let c: [C64; 4] = std::array::from_fn(|a| (*g * PAULI_BASIS[a]).trace() * 0.5);
    ProcessMatrix(std::array::from_fn(|m| std::array::from_fn(|n| c[m] * c[n].conj())))
}

/// `Re Tr(χ_a† χ_t)`.
pub fn process_fidelity(actual: &ProcessMatrix, target: &ProcessMatrix) -> f64 {
    let mut acc = ZERO;
    for m in 0..4 {
        for n in 0..4 {
            acc += actual.0[m][n].conj() * target.0[m][n];
        }
    }
    acc.re
}

/// Process fidelity of a measured table against a target unitary.
pub fn table_fidelity(t: &ExpectationTable, g: &Mat2) -> Result<f64> {
    let chi = reconstruct_chi(&pauli_input_table(t))?;
    Ok(process_fidelity(&chi, &chi_target(g)))
}

/// `(1/3)Σ_O ‖V_O − I‖_F`.
pub fn vo_distance(v: &NoiseOperatorSet) -> f64 {
    v.0.iter()
        .map(|m| (*m - Mat2::identity()).frobenius_norm())
        .sum::<f64>()
        / 3.0
}
