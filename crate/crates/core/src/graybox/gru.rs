//! Gated recurrent layer with explicit backpropagation through time.
//!
//! Gate order in every stacked weight matrix is `[z, r, n]`:
//!
//! ```text
//! z  = σ(W_z x + U_z h + b_z)
//! r  = σ(W_r x + U_r h + b_r)
//! ñ  = tanh(W_n x + U_n (r ⊙ h) + b_n)
//! h' = z ⊙ h + (1 − z) ⊙ ñ
//! ```

/// `y += A x` for row-major `A` (rows × cols).
#[inline]
pub(crate) fn gemv(a: &[f64], cols: usize, x: &[f64], y: &mut [f64]) {
    for (row, yi) in a.chunks_exact(cols).zip(y.iter_mut()) {
        let mut acc = 0.0;
        for (aij, xj) in row.iter().zip(x) {
            acc += aij * xj;
        }
        *yi += acc;
    }
}

/// `y += Aᵀ v`.
#[inline]
pub(crate) fn gemv_t(a: &[f64], cols: usize, v: &[f64], y: &mut [f64]) {
    for (row, vi) in a.chunks_exact(cols).zip(v) {
        if *vi == 0.0 {
            continue;
        }
        for (yj, aij) in y.iter_mut().zip(row) {
            *yj += aij * vi;
        }
    }
}

/// `A += u vᵀ`.
#[inline]
pub(crate) fn ger(a: &mut [f64], cols: usize, u: &[f64], v: &[f64]) {
    for (row, ui) in a.chunks_exact_mut(cols).zip(u) {
        if *ui == 0.0 {
            continue;
        }
        for (aij, vj) in row.iter_mut().zip(v) {
            *aij += ui * vj;
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Borrowed weights of one layer.
#[derive(Clone, Copy)]
pub struct GruWeights<'a> {
    pub input: usize,
    pub hidden: usize,
    /// 3H × input
    pub w: &'a [f64],
    /// 3H × H
    pub u: &'a [f64],
    /// 3H
    pub b: &'a [f64],
}

/// Mutable gradient buffers with the same layout as [`GruWeights`].
pub struct GruGrads<'a> {
    pub w: &'a mut [f64],
    pub u: &'a mut [f64],
    pub b: &'a mut [f64],
}

impl GruWeights<'_> {
    pub fn param_count(input: usize, hidden: usize) -> usize {
        3 * hidden * (input + hidden + 1)
    }
}

/// Activations saved by the forward pass.
#[derive(Clone, Debug, Default)]
pub struct GruTrace {
    /// Hidden states h_0..h_T, each of length H (h_0 = 0).
    pub h: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub n: Vec<f64>,
    pub steps: usize,
}

impl GruTrace {
    /// Outputs h_1..h_T laid out step-major.
    pub fn outputs(&self, hidden: usize) -> &[f64] {
        &self.h[hidden..]
    }

    pub fn last(&self, hidden: usize) -> &[f64] {
        &self.h[self.steps * hidden..]
    }
}

/// Runs the layer over `xs` (steps × input, step-major) from a zero state.
pub fn forward(wt: &GruWeights, xs: &[f64]) -> GruTrace {
    let (d, h) = (wt.input, wt.hidden);
    let steps = xs.len() / d;
    let mut tr = GruTrace {
        h: vec![0.0; (steps + 1) * h],
        z: vec![0.0; steps * h],
        r: vec![0.0; steps * h],
        n: vec![0.0; steps * h],
        steps,
    };
    let (w_zr, w_n) = wt.w.split_at(2 * h * d);
    let (u_zr, u_n) = wt.u.split_at(2 * h * h);
    let mut gx = vec![0.0; 3 * h];
    let mut rh = vec![0.0; h];
    for t in 0..steps {
        let x = &xs[t * d..(t + 1) * d];
        gx.copy_from_slice(wt.b);
        gemv(w_zr, d, x, &mut gx[..2 * h]);
        gemv(w_n, d, x, &mut gx[2 * h..]);
        let (prev, rest) = tr.h.split_at_mut((t + 1) * h);
        let hp = &prev[t * h..];
        gemv(u_zr, h, hp, &mut gx[..2 * h]);
        let z = &mut tr.z[t * h..(t + 1) * h];
        let r = &mut tr.r[t * h..(t + 1) * h];
        for i in 0..h {
            z[i] = sigmoid(gx[i]);
            r[i] = sigmoid(gx[h + i]);
            rh[i] = r[i] * hp[i];
        }
        gemv(u_n, h, &rh, &mut gx[2 * h..]);
        let n = &mut tr.n[t * h..(t + 1) * h];
        let hn = &mut rest[..h];
        for i in 0..h {
            n[i] = gx[2 * h + i].tanh();
            hn[i] = z[i] * hp[i] + (1.0 - z[i]) * n[i];
        }
    }
    tr
}

/// Backpropagates `dh_out` (steps × H, gradient of the loss w.r.t. each
/// output h_t) through the layer, accumulating into `grads` and returning the
/// gradient w.r.t. the inputs (steps × input).
pub fn backward(wt: &GruWeights, xs: &[f64], tr: &GruTrace, dh_out: &[f64], grads: &mut GruGrads) -> Vec<f64> {
    let (d, h) = (wt.input, wt.hidden);
    let steps = tr.steps;
    let mut dxs = vec![0.0; steps * d];
    let mut dh = vec![0.0; h];
    let mut da = vec![0.0; 3 * h];
    let mut rh = vec![0.0; h];
    let mut drh = vec![0.0; h];
    let (u_zr, u_n) = wt.u.split_at(2 * h * h);
    for t in (0..steps).rev() {
        for (a, b) in dh.iter_mut().zip(&dh_out[t * h..(t + 1) * h]) {
            *a += b;
        }
        let x = &xs[t * d..(t + 1) * d];
        let hp = &tr.h[t * h..(t + 1) * h];
        let z = &tr.z[t * h..(t + 1) * h];
        let r = &tr.r[t * h..(t + 1) * h];
        let n = &tr.n[t * h..(t + 1) * h];
        let mut dh_prev = vec![0.0; h];
        for i in 0..h {
            let dz = dh[i] * (hp[i] - n[i]);
            let dn = dh[i] * (1.0 - z[i]);
            dh_prev[i] = dh[i] * z[i];
            da[i] = dz * z[i] * (1.0 - z[i]);
            da[2 * h + i] = dn * (1.0 - n[i] * n[i]);
            rh[i] = r[i] * hp[i];
        }
        // Candidate path through U_n (r ⊙ h).
        drh.fill(0.0);
        gemv_t(u_n, h, &da[2 * h..], &mut drh);
        for i in 0..h {
            da[h + i] = drh[i] * hp[i] * r[i] * (1.0 - r[i]);
            dh_prev[i] += drh[i] * r[i];
        }
        let (gu_zr, gu_n) = grads.u.split_at_mut(2 * h * h);
        ger(gu_n, h, &da[2 * h..], &rh);
        ger(gu_zr, h, &da[..2 * h], hp);
        gemv_t(u_zr, h, &da[..2 * h], &mut dh_prev);
        ger(grads.w, d, &da, x);
        for (g, a) in grads.b.iter_mut().zip(&da) {
            *g += a;
        }
        gemv_t(wt.w, d, &da, &mut dxs[t * d..(t + 1) * d]);
        dh = dh_prev;
    }
    dxs
}
