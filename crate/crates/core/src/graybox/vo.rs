//! Bounded Hermitian block `W = Q·diag(tanh r₁, tanh r₂)·Q†` with
//! `Q = exp(−iθ·σ)`.
//!
//! Writing `w₀ = (μ₁+μ₂)/2`, `d = (μ₁−μ₂)/2` and `n = R_Q ẑ` (the Bloch image
//! of ẑ under Q) gives `W = w₀I + d n·σ`, so for a state with Bloch vector `b`
//! the prediction is `Tr[ρW] = w₀ + d (n·b)`.

use crate::linalg::Mat2;
use crate::propagate::step_unitary;

/// `(sin φ/φ, (φ cos φ − sin φ)/φ³)`, stable near zero.
fn sinc_terms(phi: f64) -> (f64, f64) {
    if phi < 1e-4 {
        let p2 = phi * phi;
        (1.0 - p2 / 6.0, -1.0 / 3.0 + p2 / 30.0)
    } else {
        let (s, c) = phi.sin_cos();
        (s / phi, (phi * c - s) / (phi * phi * phi))
    }
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Axis `n(θ)` and its Jacobian `J[i][k] = ∂n_i/∂θ_k`.
pub fn axis_with_jacobian(theta: [f64; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let phi = (theta[0] * theta[0] + theta[1] * theta[1] + theta[2] * theta[2]).sqrt();
    let (sinc, dsinc) = sinc_terms(phi);
    let a0 = phi.cos();
    let a = [sinc * theta[0], sinc * theta[1], sinc * theta[2]];
    let aa = a[0] * a[0] + a[1] * a[1] + a[2] * a[2];
    let axz = cross(a, [0.0, 0.0, 1.0]);
    let n = [
        2.0 * a[2] * a[0] + 2.0 * a0 * axz[0],
        2.0 * a[2] * a[1] + 2.0 * a0 * axz[1],
        a0 * a0 - aa + 2.0 * a[2] * a[2],
    ];
    // ∂n/∂a0 and ∂n/∂a_j.
    let dn_da0 = [2.0 * axz[0], 2.0 * axz[1], 2.0 * a0];
    let mut dn_da = [[0.0; 3]; 3];
    for (j, col) in dn_da.iter_mut().enumerate() {
        let mut e = [0.0; 3];
        e[j] = 1.0;
        let exz = cross(e, [0.0, 0.0, 1.0]);
        for i in 0..3 {
            let mut v = 2.0 * a[2] * e[i] + 2.0 * a0 * exz[i];
            if j == 2 {
                v += 2.0 * a[i];
            }
            if i == 2 {
                v -= 2.0 * a[j];
            }
            col[i] = v;
        }
    }
    // ∂a0/∂θ_k = −sinc·θ_k;  ∂a_j/∂θ_k = sinc·δ_jk + dsinc·θ_jθ_k.
    let mut jac = [[0.0; 3]; 3];
    for k in 0..3 {
        let da0 = -sinc * theta[k];
        for i in 0..3 {
            let mut v = dn_da0[i] * da0;
            for j in 0..3 {
                let daj = if j == k { sinc } else { 0.0 } + dsinc * theta[j] * theta[k];
                v += dn_da[j][i] * daj;
            }
            jac[i][k] = v;
        }
    }
    (n, jac)
}

/// The five head outputs of one observable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VoParams {
    pub theta: [f64; 3],
    pub r: [f64; 2],
}

impl VoParams {
    pub fn from_slice(v: &[f64]) -> Self {
        VoParams {
            theta: [v[0], v[1], v[2]],
            r: [v[3], v[4]],
        }
    }

    pub fn eigenvalues(&self) -> [f64; 2] {
        [self.r[0].tanh(), self.r[1].tanh()]
    }

    /// `Q diag(μ) Q†` assembled from matrices.
    pub fn matrix(&self) -> Mat2 {
        let q = step_unitary(0.0, self.theta, 1.0);
        let mu = self.eigenvalues();
        let d = Mat2::hermitian(0.5 * (mu[0] + mu[1]), [0.0, 0.0, 0.5 * (mu[0] - mu[1])]);
        q * d * q.dagger()
    }
}

/// Evaluates `w₀ + d(n·b)` for several Bloch vectors and, if `grad_out` is
/// given, accumulates `Σ_s upstream[s]·∂pred_s/∂(θ, r)` into it.
pub struct VoEval {
    n: [f64; 3],
    jac: [[f64; 3]; 3],
    mu: [f64; 2],
}

impl VoEval {
    pub fn new(p: &VoParams) -> Self {
        let (n, jac) = axis_with_jacobian(p.theta);
        VoEval {
            n,
            jac,
            mu: p.eigenvalues(),
        }
    }

    pub fn axis(&self) -> [f64; 3] {
        self.n
    }

    #[inline]
    pub fn predict(&self, b: &[f64; 3]) -> f64 {
        let q = self.n[0] * b[0] + self.n[1] * b[1] + self.n[2] * b[2];
        0.5 * (self.mu[0] + self.mu[1]) + 0.5 * (self.mu[0] - self.mu[1]) * q
    }

    /// Adds `up · ∂pred(b)/∂(θ₁,θ₂,θ₃,r₁,r₂)` into `grad`.
    #[inline]
    pub fn accumulate_grad(&self, b: &[f64; 3], up: f64, grad: &mut [f64]) {
        let q = self.n[0] * b[0] + self.n[1] * b[1] + self.n[2] * b[2];
        let d = 0.5 * (self.mu[0] - self.mu[1]);
        for k in 0..3 {
            let dq = self.jac[0][k] * b[0] + self.jac[1][k] * b[1] + self.jac[2][k] * b[2];
            grad[k] += up * d * dq;
        }
        grad[3] += up * (1.0 - self.mu[0] * self.mu[0]) * 0.5 * (1.0 + q);
        grad[4] += up * (1.0 - self.mu[1] * self.mu[1]) * 0.5 * (1.0 - q);
    }
}
