//! Fixed-size 2×2 complex matrices and the SO(3) rotations they induce on
//! the Bloch sphere.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// 2×2 complex matrix stored row-major.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat2(pub [[C64; 2]; 2]);

impl Mat2 {
    pub const fn new(a: C64, b: C64, c: C64, d: C64) -> Self {
        Mat2([[a, b], [c, d]])
    }

    pub const fn zeros() -> Self {
        Mat2([[ZERO, ZERO], [ZERO, ZERO]])
    }

    pub const fn identity() -> Self {
        Mat2([[ONE, ZERO], [ZERO, ONE]])
    }

    pub fn scale(&self, s: C64) -> Self {
        let m = &self.0;
        Mat2([[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]])
    }

    pub fn scale_re(&self, s: f64) -> Self {
        let m = &self.0;
        Mat2([[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]])
    }

    pub fn dagger(&self) -> Self {
        let m = &self.0;
        Mat2([
            [m[0][0].conj(), m[1][0].conj()],
            [m[0][1].conj(), m[1][1].conj()],
        ])
    }

    pub fn trace(&self) -> C64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn det(&self) -> C64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|r| r.iter())
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// ‖A − A†‖_F
    pub fn hermiticity_defect(&self) -> f64 {
        (*self - self.dagger()).frobenius_norm()
    }

    /// ‖U†U − I‖_F
    pub fn unitarity_defect(&self) -> f64 {
        (self.dagger() * *self - Mat2::identity()).frobenius_norm()
    }

    pub fn is_finite(&self) -> bool {
        self.0
            .iter()
            .flat_map(|r| r.iter())
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Decomposes a matrix as `c0·I + c·σ` with complex coefficients.
    pub fn pauli_coefficients(&self) -> [C64; 4] {
        let m = &self.0;
        let half = 0.5;
        [
            (m[0][0] + m[1][1]) * half,
            (m[0][1] + m[1][0]) * half,
            (m[0][1] - m[1][0]) * (I * half),
            (m[0][0] - m[1][1]) * half,
        ]
    }

    /// Builds `c0·I + cx·σx + cy·σy + cz·σz`.
    pub fn from_pauli_coefficients(c: [C64; 4]) -> Self {
        Mat2([
            [c[0] + c[3], c[1] - I * c[2]],
            [c[1] + I * c[2], c[0] - c[3]],
        ])
    }

    /// Builds the Hermitian matrix `a0·I + a·σ`.
    pub fn hermitian(a0: f64, a: [f64; 3]) -> Self {
        Mat2([
            [C64::new(a0 + a[2], 0.0), C64::new(a[0], -a[1])],
            [C64::new(a[0], a[1]), C64::new(a0 - a[2], 0.0)],
        ])
    }

    pub fn max_abs_diff(&self, other: &Mat2) -> f64 {
        let mut m = 0.0f64;
        for r in 0..2 {
            for c in 0..2 {
                m = m.max((self.0[r][c] - other.0[r][c]).norm());
            }
        }
        m
    }
}

impl Default for Mat2 {
    fn default() -> Self {
        Mat2::zeros()
    }
}

impl Mul for Mat2 {
    type Output = Mat2;

    #[inline]
    fn mul(self, rhs: Mat2) -> Mat2 {
        let a = &self.0;
        let b = &rhs.0;
        Mat2([
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ])
    }
}

impl Add for Mat2 {
    type Output = Mat2;

    fn add(self, rhs: Mat2) -> Mat2 {
        let a = &self.0;
        let b = &rhs.0;
        Mat2([
            [a[0][0] + b[0][0], a[0][1] + b[0][1]],
            [a[1][0] + b[1][0], a[1][1] + b[1][1]],
        ])
    }
}

impl AddAssign for Mat2 {
    fn add_assign(&mut self, rhs: Mat2) {
        *self = *self + rhs;
    }
}

impl Sub for Mat2 {
    type Output = Mat2;

    fn sub(self, rhs: Mat2) -> Mat2 {
        let a = &self.0;
        let b = &rhs.0;
        Mat2([
            [a[0][0] - b[0][0], a[0][1] - b[0][1]],
            [a[1][0] - b[1][0], a[1][1] - b[1][1]],
        ])
    }
}

impl Neg for Mat2 {
    type Output = Mat2;

    fn neg(self) -> Mat2 {
        self.scale_re(-1.0)
    }
}

/// Real 3×3 matrix, used for Bloch-sphere rotations `R[b][a] = ½Tr[σ_b U σ_a U†]`.
pub type Rot3 = [[f64; 3]; 3];

/// Bloch-sphere image of a unitary: column `a` is the Bloch vector of `Uσ_aU†`.
pub fn bloch_rotation(u: &Mat2) -> Rot3 {
    let ud = u.dagger();
    let mut r = [[0.0; 3]; 3];
    for (a, sigma) in crate::pauli::SIGMA.iter().enumerate() {
        let m = (*u * *sigma * ud).0;
        r[0][a] = m[1][0].re;
        r[1][a] = m[1][0].im;
        r[2][a] = m[0][0].re;
    }
    r
}

pub fn rot3_add(a: &Rot3, b: &Rot3) -> Rot3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][j] + b[i][j];
        }
    }
    out
}

/// Fixed-order pairwise summation. The split points depend only on the slice
/// length, so the rounding pattern is independent of how the items were made.
pub fn tree_sum<T: Copy>(items: &[T], zero: T, add: &impl Fn(&T, &T) -> T) -> T {
    match items.len() {
        0 => zero,
        1 => items[0],
        n => {
            let (l, r) = items.split_at(n / 2);
            add(&tree_sum(l, zero, add), &tree_sum(r, zero, add))
        }
    }
}

pub fn tree_sum_f64(items: &[f64]) -> f64 {
    tree_sum(items, 0.0, &|a, b| a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::{SIGMA, SIGMA_X, SIGMA_Y, SIGMA_Z};

    #[test]
    fn pauli_coefficients_roundtrip() {
        let m = Mat2::new(
            C64::new(1.0, 2.0),
            C64::new(-0.5, 0.25),
            C64::new(3.0, -1.0),
            C64::new(0.0, 0.7),
        );
        let back = Mat2::from_pauli_coefficients(m.pauli_coefficients());
        assert!(back.max_abs_diff(&m) < 1e-15);
    }

    #[test]
    fn identity_rotation() {
        let r = bloch_rotation(&Mat2::identity());
        for (i, row) in r.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert_eq!(*v, if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn x_gate_rotation_flips_y_and_z() {
        let r = bloch_rotation(&SIGMA_X);
        assert_eq!(r[0][0], 1.0);
        assert_eq!(r[1][1], -1.0);
        assert_eq!(r[2][2], -1.0);
        let _ = (SIGMA_Y, SIGMA_Z, SIGMA);
    }

    #[test]
    fn tree_sum_matches_plain_sum_on_integers() {
        let v: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert_eq!(tree_sum_f64(&v), 5050.0);
        assert_eq!(tree_sum_f64(&[]), 0.0);
    }
}
