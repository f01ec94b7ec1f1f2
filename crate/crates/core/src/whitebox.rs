//! Perturbative (Dyson) whitebox models of the noisy qubit.
//!
//! Free evolution: `⟨X(T)⟩ = 1 + g²C₂ (+ g⁴C₄)` from the x+ state, with
//! `C₂ = −4∫∫_{t₂<t₁} ⟨β(t₁)β(t₂)⟩` and `C₄ = 16∫∫∫∫_{t₄<t₃<t₂<t₁} ⟨β₁β₂β₃β₄⟩`.
//!
//! Controlled evolution (second order): the toggling-frame noise direction
//! `y_a(t) = ½Tr[U_c†(t)σ_zU_c(t)σ_a]` is integrated against the two-point
//! correlator into `I`, `I^>` and `I^<`, which weight three trace terms.
//!
//! All time-ordered integrals use nested trapezoid rules on `nodes + 1`
//! equally spaced points. The same triangle weights are shared by the free
//! and controlled paths so that zero control reproduces the free result.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat2, Rot3, C64};
use crate::noise::{corr2, NoiseConfig};
use crate::pauli::{PauliIndex, PauliState, OBSERVABLES, SIGMA};
use crate::propagate::ControlGrid;
use crate::pulse::PulseSequence;
use crate::simulator::{unit_bloch_rotation, ExpectationTable};
use crate::state::QubitState;

pub const DEFAULT_NODES: usize = 300;

/// Cumulative trapezoid: `out[i] = ∫₀^{t_i} f`, `out[0] = 0`.
fn cumtrapz(f: &[C64], h: f64) -> Vec<C64> {
    let mut out = Vec::with_capacity(f.len());
    let mut acc = C64::new(0.0, 0.0);
    out.push(acc);
    for w in f.windows(2) {
        acc += (w[0] + w[1]) * (0.5 * h);
        out.push(acc);
    }
    out
}

/// Nested-trapezoid weight of node pair `(i, j)` with `j ≤ i` on the
/// triangle `0 ≤ t_j ≤ t_i ≤ T`.
#[inline]
fn triangle_weight(i: usize, j: usize, nodes: usize, h: f64) -> f64 {
    if i == 0 {
        return 0.0;
    }
    let outer = if i == nodes { 0.5 * h } else { h };
    let inner = if j == 0 || j == i { 0.5 * h } else { h };
    outer * inner
}

fn check_nodes(nodes: usize) -> Result<()> {
    if nodes < 2 {
        return Err(Error::invalid("quadrature needs at least two intervals"));
    }
    Ok(())
}

/// `C₂ = −4∫₀ᵀ∫₀^{t₁} corr2(t₁,t₂) dt₂ dt₁` by nested trapezoid.
pub fn c2_coefficient(cfg: &NoiseConfig, total: f64, nodes: usize) -> Result<f64> {
    check_nodes(nodes)?;
    let h = total / nodes as f64;
    let lag: Vec<f64> = (0..=nodes).map(|d| corr2(d as f64 * h, 0.0, cfg)).collect();
    let mut acc = 0.0;
    for i in 1..=nodes {
        for j in 0..=i {
            acc += triangle_weight(i, j, nodes, h) * lag[i - j];
        }
    }
    Ok(-4.0 * acc)
}

/// `C₄ = 16∫_{t₄<t₃<t₂<t₁} corr4` by nested trapezoid.
///
/// The correlator is a sum of products of single-time exponentials, so each
/// nesting level reduces to a cumulative integral and the whole simplex costs
/// O(nodes) per term.
pub fn c4_coefficient(cfg: &NoiseConfig, total: f64, nodes: usize) -> Result<f64> {
    check_nodes(nodes)?;
    let h = total / nodes as f64;
    let two_gamma = 2.0 * cfg.gamma;
    // Decay exponent sign per time argument: e^{−2γ(t₁ − t₂ + t₃ − t₄)}.
    let decay = [-two_gamma, two_gamma, -two_gamma, two_gamma];
    let patterns: &[[f64; 4]] = if cfg.is_modulated() {
        &[[1.0, 1.0, -1.0, -1.0], [1.0, -1.0, 1.0, -1.0], [1.0, -1.0, -1.0, 1.0]]
    } else {
        &[[0.0; 4]]
    };
    let times: Vec<f64> = (0..=nodes).map(|i| i as f64 * h).collect();
    let mut total_integral = 0.0;
    for pat in patterns {
        let factor = |k: usize, t: f64| Complex64::new(decay[k], cfg.omega * pat[k]) * t;
        let mut inner: Vec<C64> = times.iter().map(|&t| factor(3, t).exp()).collect();
        for k in (0..3).rev() {
            let cum = cumtrapz(&inner, h);
            inner = times
                .iter()
                .zip(&cum)
                .map(|(&t, c)| factor(k, t).exp() * c)
                .collect();
        }
        total_integral += cumtrapz(&inner, h)[nodes].re;
    }
    Ok(16.0 * total_integral)
}

/// Second-order free-evolution coherence `1 + g²C₂`.
pub fn dyson2_free(g: f64, cfg: &NoiseConfig, total: f64, nodes: usize) -> Result<f64> {
    Ok(1.0 + g * g * c2_coefficient(cfg, total, nodes)?)
}

/// Fourth-order free-evolution coherence `1 + g²C₂ + g⁴C₄`.
pub fn dyson4_free(g: f64, cfg: &NoiseConfig, total: f64, nodes: usize) -> Result<f64> {
    let g2 = g * g;
    Ok(1.0 + g2 * c2_coefficient(cfg, total, nodes)? + g2 * g2 * c4_coefficient(cfg, total, nodes)?)
}

/// Second-order time-ordered integrals over the toggling-frame noise axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DysonIntegrals {
    /// `I[a][a']`, full square.
    pub full: [[f64; 3]; 3],
    /// `I^>[a][a']`: `y_a` at the later time.
    pub gt: [[f64; 3]; 3],
    /// `I^<[a][a']`: `y_a` at the earlier time.
    pub lt: [[f64; 3]; 3],
    pub nodes: usize,
}

/// `y_a(t_i)` at the quadrature nodes, read from the boundary propagators of
/// the control grid.
pub fn noise_axis_samples(path: &[Mat2], nodes: usize) -> Vec<[f64; 3]> {
    let steps = path.len() - 1;
    (0..=nodes)
        .map(|i| {
            let k = ((i as f64) * steps as f64 / nodes as f64).round() as usize;
            let r: Rot3 = unit_bloch_rotation(&path[k.min(steps)]);
            // ½Tr[U†σ_zUσ_a] = ½Tr[σ_z Uσ_aU†] = R[z][a].
            r[2]
        })
        .collect()
}

pub fn dyson_integrals(y: &[[f64; 3]], cfg: &NoiseConfig, total: f64) -> Result<DysonIntegrals> {
    let nodes = y.len().checked_sub(1).ok_or_else(|| Error::invalid("empty node set"))?;
    check_nodes(nodes)?;
    let h = total / nodes as f64;
    let lag: Vec<f64> = (0..=nodes).map(|d| corr2(d as f64 * h, 0.0, cfg)).collect();
    let mut gt = [[0.0; 3]; 3];
    let mut lt = [[0.0; 3]; 3];
    for i in 1..=nodes {
        // v[a'] = Σ_{j≤i} W_ij C(t_i − t_j) y_{a'}(t_j)
        let mut v = [0.0; 3];
        for j in 0..=i {
            let w = triangle_weight(i, j, nodes, h) * lag[i - j];
            for (vb, yb) in v.iter_mut().zip(&y[j]) {
                *vb += w * yb;
            }
        }
        for a in 0..3 {
            for b in 0..3 {
                gt[a][b] += y[i][a] * v[b];
                lt[a][b] += v[a] * y[i][b];
            }
        }
    }
    let mut full = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            full[a][b] = gt[a][b] + lt[a][b];
        }
    }
    Ok(DysonIntegrals { full, gt, lt, nodes })
}

/// Second-order open-system expectation for one (ρ, O) pair given the final
/// control unitary and the integrals.
pub fn dyson2_expectation(
    rho: &QubitState,
    o: PauliIndex,
    u_c: &Mat2,
    integrals: &DysonIntegrals,
    g: f64,
) -> f64 {
    let r = *rho.matrix();
    let o_tilde = u_c.dagger() * o.matrix() * *u_c;
    let mut second = C64::new(0.0, 0.0);
    for a in 0..3 {
        for b in 0..3 {
            let sa = SIGMA[a];
            let sb = SIGMA[b];
            second += (sa * r * sb * o_tilde).trace() * integrals.full[a][b]
                - (sa * sb * r * o_tilde).trace() * integrals.gt[a][b]
                - (r * sa * sb * o_tilde).trace() * integrals.lt[a][b];
        }
    }
    ((r * o_tilde).trace() + second * (g * g)).re
}

/// Controlled second-order whitebox on a fixed pulse shape and grid.
#[derive(Clone, Debug)]
pub struct OpenSystemWhitebox {
    control: ControlGrid,
    noise: NoiseConfig,
    nodes: usize,
}

impl OpenSystemWhitebox {
    pub fn new(control: ControlGrid, noise: NoiseConfig, nodes: usize) -> Result<Self> {
        noise.validate()?;
        check_nodes(nodes)?;
        Ok(OpenSystemWhitebox {
            control,
            noise,
            nodes,
        })
    }

    pub fn noise(&self) -> &NoiseConfig {
        &self.noise
    }

    pub fn control(&self) -> &ControlGrid {
        &self.control
    }

    pub fn integrals(&self, p: &PulseSequence) -> Result<(Mat2, DysonIntegrals)> {
        let path = self.control.control_path(p)?;
        let y = noise_axis_samples(&path, self.nodes);
        let ints = dyson_integrals(&y, &self.noise, self.control.grid().total())?;
        Ok((*path.last().expect("non-empty path"), ints))
    }

    pub fn expectation(&self, p: &PulseSequence, rho: &QubitState, o: PauliIndex) -> Result<f64> {
        let (u_c, ints) = self.integrals(p)?;
        Ok(dyson2_expectation(rho, o, &u_c, &ints, self.noise.g))
    }

    pub fn predict(&self, p: &PulseSequence) -> Result<ExpectationTable> {
        let (u_c, ints) = self.integrals(p)?;
        let mut v = [0.0; 18];
        for s in PauliState::ALL {
            let rho = QubitState::eigenstate(s);
            for (k, o) in OBSERVABLES.iter().enumerate() {
                v[s.position() * 3 + k] = dyson2_expectation(&rho, *o, &u_c, &ints, self.noise.g);
            }
        }
        Ok(ExpectationTable(v))
    }
}

/// Second-order controlled expectation for one (ρ, O) pair.
pub fn dyson2_controlled(
    p: &PulseSequence,
    g: f64,
    control: &ControlGrid,
    noise: &NoiseConfig,
    rho: &QubitState,
    o: PauliIndex,
    nodes: usize,
) -> Result<f64> {
    OpenSystemWhitebox::new(control.clone(), noise.with_g(g), nodes)?.expectation(p, rho, o)
}

/// Regime boundaries in units of γ. `None` marks a boundary not reached on
/// the scanned grid (open-ended regime).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeBoundaries {
    pub weak_end: Option<f64>,
    pub intermediate_end: Option<f64>,
    pub strong_end: Option<f64>,
    pub epsilon: f64,
    pub gamma: f64,
    pub omega: f64,
    pub total_time: f64,
    pub c2: f64,
    pub c4: f64,
    pub nodes: usize,
}

impl RegimeBoundaries {
    pub fn all_finite(&self) -> bool {
        self.weak_end.is_some() && self.intermediate_end.is_some() && self.strong_end.is_some()
    }
}

/// Locates the first grid point where `pred` holds, then bisects the bracket
/// down to `tol`. Returns `None` if `pred` never holds.
fn first_crossing(grid: &[f64], tol: f64, pred: impl Fn(f64) -> bool) -> Option<f64> {
    let idx = grid.iter().position(|&g| pred(g))?;
    if idx == 0 {
        return Some(grid[0]);
    }
    let (mut lo, mut hi) = (grid[idx - 1], grid[idx]);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Splits the coupling axis into weak / intermediate / strong / ultra-strong.
///
/// * weak ends where the order-2 and order-4 coherences differ by more than ε
///   (or at the intermediate boundary, whichever comes first);
/// * intermediate ends where the order-2 coherence leaves [−1, 1];
/// * strong ends where the order-4 coherence leaves [−1, 1], searched from the
///   intermediate boundary onward.
///
/// `g_grid` is in MHz and must be ascending; results are in units of γ.
pub fn classify_regimes(
    cfg: &NoiseConfig,
    total: f64,
    epsilon: f64,
    g_grid: &[f64],
    nodes: usize,
) -> Result<RegimeBoundaries> {
    if g_grid.is_empty() || g_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("coupling grid must be non-empty and strictly ascending"));
    }
    let c2 = c2_coefficient(cfg, total, nodes)?;
    let c4 = c4_coefficient(cfg, total, nodes)?;
    let d2 = |g: f64| 1.0 + g * g * c2;
    let d4 = |g: f64| 1.0 + g * g * c2 + g.powi(4) * c4;
    let tol = 1e-6 * cfg.gamma;

    let intermediate = first_crossing(g_grid, tol, |g| d2(g).abs() > 1.0);
    let weak_cross = first_crossing(g_grid, tol, |g| (d2(g) - d4(g)).abs() > epsilon);
    let weak = match (weak_cross, intermediate) {
        (Some(w), Some(i)) => Some(w.min(i)),
        (w, i) => w.or(i),
    };
    let strong = intermediate.and_then(|start| {
        let tail: Vec<f64> = std::iter::once(start)
            .chain(g_grid.iter().copied().filter(|&g| g > start))
            .collect();
        first_crossing(&tail, tol, |g| d4(g).abs() > 1.0)
    });
    let in_gamma = |g: Option<f64>| g.map(|v| v / cfg.gamma);
    Ok(RegimeBoundaries {
        weak_end: in_gamma(weak),
        intermediate_end: in_gamma(intermediate),
        strong_end: in_gamma(strong),
        epsilon,
        gamma: cfg.gamma,
        omega: cfg.omega,
        total_time: total,
        c2,
        c4,
        nodes,
    })
}

/// `count` evenly spaced couplings over `[0, max_over_gamma·γ]`.
pub fn coupling_grid(gamma: f64, max_over_gamma: f64, count: usize) -> Vec<f64> {
    let n = count.max(2);
    (0..n)
        .map(|i| gamma * max_over_gamma * i as f64 / (n - 1) as f64)
        .collect()
}
