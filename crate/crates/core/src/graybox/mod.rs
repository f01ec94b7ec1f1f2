//! Graybox dynamics model: a recurrent network maps the control pulses to one
//! bounded Hermitian block `W_O` per observable, which is combined with the
//! exactly computed control propagator.
//!
//! Prediction for state ρ and observable O is `Tr[U_c ρ U_c† W_O]`. At zero
//! coupling `W_O = O`. The equivalent noise operator in the
//! `Tr[ρ Õ V_O]` convention of the simulator is `V_O = U_c†(O W_O)U_c`.

pub mod gru;
pub mod train;
pub mod vo;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat2;
use crate::pauli::{PauliState, SIGMA};
use crate::propagate::ControlGrid;
use crate::pulse::{PulseSequence, PulseShape, TimeGrid};
use crate::simulator::{unit_bloch_rotation, ExpectationTable, NoiseOperatorSet};

use gru::{GruGrads, GruTrace, GruWeights};
use vo::{VoEval, VoParams};

pub const CHECKPOINT_VERSION: u32 = 1;
const CHECKPOINT_KIND: &str = "qgbc-graybox";

/// How pulses are presented to the recurrent stack. Both produce a sequence
/// of 2-vectors normalized by `A_max`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputEncoding {
    /// `(f_x, f_y)(t_j)/A_max` at `m_in` uniformly spaced cell midpoints.
    Waveform { m_in: usize },
    /// `(A_kx, A_ky)/A_max`, one step per pulse.
    PulseAmplitudes,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub encoding: InputEncoding,
    pub layers: usize,
    pub hidden: usize,
    pub head_params: usize,
}

impl Architecture {
    pub const INPUT_DIM: usize = 2;

    pub fn new(encoding: InputEncoding, layers: usize, hidden: usize) -> Result<Self> {
        let a = Architecture {
            encoding,
            layers,
            hidden,
            head_params: 5,
        };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden == 0 {
            return Err(Error::invalid("graybox needs at least one layer and one hidden unit"));
        }
        if self.head_params != 5 {
            return Err(Error::invalid("each observable head has exactly 5 outputs"));
        }
        if let InputEncoding::Waveform { m_in } = self.encoding {
            if m_in == 0 {
                return Err(Error::invalid("waveform input needs m_in >= 1"));
            }
        }
        Ok(())
    }

    fn layer_input(&self, l: usize) -> usize {
        if l == 0 {
            Self::INPUT_DIM
        } else {
            self.hidden
        }
    }

    fn head_outputs(&self) -> usize {
        3 * self.head_params
    }

    /// Named blocks of the flat parameter vector: (name, shape, offset).
    pub fn layout(&self) -> Vec<(String, Vec<usize>, usize)> {
        let h = self.hidden;
        let mut out = Vec::new();
        let mut off = 0;
        let mut push = |name: String, shape: Vec<usize>| {
            let len: usize = shape.iter().product();
            out.push((name, shape, off));
            off += len;
        };
        for l in 0..self.layers {
            push(format!("gru{l}.w_in"), vec![3 * h, self.layer_input(l)]);
            push(format!("gru{l}.w_hid"), vec![3 * h, h]);
            push(format!("gru{l}.bias"), vec![3 * h]);
        }
        push("head.weight".into(), vec![self.head_outputs(), h]);
        push("head.bias".into(), vec![self.head_outputs()]);
        out
    }

    pub fn param_count(&self) -> usize {
        (0..self.layers)
            .map(|l| GruWeights::param_count(self.layer_input(l), self.hidden))
            .sum::<usize>()
            + self.head_outputs() * (self.hidden + 1)
    }
}

/// Physical setting the model was built for; fixes the control propagator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicsHeader {
    pub shape: PulseShape,
    pub grid: TimeGrid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub dataset_hash: String,
    pub hyper: train::TrainHyper,
    pub n_train: usize,
    pub n_val: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub train_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
    pub g: f64,
    pub gamma: f64,
    pub omega: f64,
}

/// Per-pulse inputs the network and the whitebox layer need.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedInput {
    /// Sequence (steps × 2) fed to the recurrent stack.
    pub sequence: Vec<f64>,
    /// Bloch vectors `sign(s)·R_c e_axis(s)` of the six controlled input states.
    pub bloch: [[f64; 3]; 6],
    pub u_c: Mat2,
}

#[derive(Clone, Debug)]
pub struct GrayboxModel {
    arch: Architecture,
    physics: PhysicsHeader,
    params: Vec<f64>,
    training: Option<TrainingMeta>,
    control: ControlGrid,
}

impl PartialEq for GrayboxModel {
    fn eq(&self, other: &Self) -> bool {
        self.arch == other.arch
            && self.physics == other.physics
            && self.params == other.params
            && self.training == other.training
    }
}

struct ForwardTrace {
    layers: Vec<GruTrace>,
    out: Vec<f64>,
}

impl GrayboxModel {
    /// Recurrent weights uniform in ±1/√H, biases zero.
    pub fn new(arch: Architecture, physics: PhysicsHeader, seed: u64) -> Result<Self> {
        arch.validate()?;
        let control = ControlGrid::new(physics.grid, physics.shape)?;
        let bound = 1.0 / (arch.hidden as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; arch.param_count()];
        for (name, shape, off) in arch.layout() {
            if name.ends_with("bias") {
                continue;
            }
            let len: usize = shape.iter().product();
            for v in &mut params[off..off + len] {
                *v = rng.random_range(-bound..bound);
            }
        }
        Ok(GrayboxModel {
            arch,
            physics,
            params,
            training: None,
            control,
        })
    }

    pub fn from_params(arch: Architecture, physics: PhysicsHeader, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.param_count() {
            return Err(Error::Shape(format!(
                "architecture needs {} parameters, got {}",
                arch.param_count(),
                params.len()
            )));
        }
        Ok(GrayboxModel {
            control: ControlGrid::new(physics.grid, physics.shape)?,
            arch,
            physics,
            params,
            training: None,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn physics(&self) -> &PhysicsHeader {
        &self.physics
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn training(&self) -> Option<&TrainingMeta> {
        self.training.as_ref()
    }

    pub fn set_training(&mut self, meta: TrainingMeta) {
        self.training = Some(meta);
    }

    pub fn control(&self) -> &ControlGrid {
        &self.control
    }

    /// Zeroes the output head, making every block `W_O = 0`.
    pub fn zero_head(&mut self) {
        for (name, shape, off) in self.arch.layout() {
            if name.starts_with("head") {
                let len: usize = shape.iter().product();
                self.params[off..off + len].fill(0.0);
            }
        }
    }

    fn check_shape(&self, p: &PulseSequence) -> Result<()> {
        if p.shape() != &self.physics.shape {
            return Err(Error::Shape(format!(
                "pulse shape {:?} does not match model shape {:?}",
                p.shape(),
                self.physics.shape
            )));
        }
        Ok(())
    }

    pub fn encode(&self, p: &PulseSequence) -> Result<Vec<f64>> {
        self.check_shape(p)?;
        let a_max = self.physics.shape.a_max;
        Ok(match self.arch.encoding {
            InputEncoding::PulseAmplitudes => p.amplitudes().iter().flat_map(|a| [a[0] / a_max, a[1] / a_max]).collect(),
            InputEncoding::Waveform { m_in } => {
                let t = self.physics.shape.total;
                (0..m_in)
                    .flat_map(|j| {
                        let f = p.eval((j as f64 + 0.5) * t / m_in as f64);
                        [f[0] / a_max, f[1] / a_max]
                    })
                    .collect()
            }
        })
    }

    pub fn prepare(&self, p: &PulseSequence) -> Result<PreparedInput> {
        let sequence = self.encode(p)?;
        let u_c = self.control.control_unitary(p)?;
        Ok(PreparedInput {
            sequence,
            bloch: controlled_bloch(&u_c),
            u_c,
        })
    }

    fn gru_weights(&self, l: usize) -> GruWeights<'_> {
        let layout = self.arch.layout();
        let w = &layout[3 * l];
        let u = &layout[3 * l + 1];
        let b = &layout[3 * l + 2];
        let len = |s: &Vec<usize>| s.iter().product::<usize>();
        GruWeights {
            input: self.arch.layer_input(l),
            hidden: self.arch.hidden,
            w: &self.params[w.2..w.2 + len(&w.1)],
            u: &self.params[u.2..u.2 + len(&u.1)],
            b: &self.params[b.2..b.2 + len(&b.1)],
        }
    }

    fn head_offsets(&self) -> (usize, usize) {
        let layout = self.arch.layout();
        let n = layout.len();
        (layout[n - 2].2, layout[n - 1].2)
    }

    fn forward_trace(&self, sequence: &[f64]) -> ForwardTrace {
        let h = self.arch.hidden;
        let mut layers = Vec::with_capacity(self.arch.layers);
        for l in 0..self.arch.layers {
            let input: &[f64] = if l == 0 { sequence } else { layers.last().map(|t: &GruTrace| t.outputs(h)).unwrap() };
            let tr = gru::forward(&self.gru_weights(l), input);
            layers.push(tr);
        }
        let last = layers.last().unwrap().last(h);
        let (hw, hb) = self.head_offsets();
        let no = self.arch.head_outputs();
        let mut out = self.params[hb..hb + no].to_vec();
        gru::gemv(&self.params[hw..hw + no * h], h, last, &mut out);
        ForwardTrace { layers, out }
    }

    /// Head outputs for one observable triple.
    pub fn vo_params(&self, input: &PreparedInput) -> [VoParams; 3] {
        let tr = self.forward_trace(&input.sequence);
        std::array::from_fn(|o| VoParams::from_slice(&tr.out[5 * o..5 * o + 5]))
    }

    pub fn predict_prepared(&self, input: &PreparedInput) -> ExpectationTable {
        let params = self.vo_params(input);
        table_from_heads(&params, &input.bloch)
    }

    /// Expectation table and noise operators for a pulse sequence.
    pub fn forward(&self, p: &PulseSequence) -> Result<(ExpectationTable, NoiseOperatorSet)> {
        let input = self.prepare(p)?;
        let heads = self.vo_params(&input);
        let table = table_from_heads(&heads, &input.bloch);
        let u_c = input.u_c;
        let vo = NoiseOperatorSet(std::array::from_fn(|o| u_c.dagger() * (SIGMA[o] * heads[o].matrix()) * u_c));
        Ok((table, vo))
    }

    pub fn predict(&self, p: &PulseSequence) -> Result<ExpectationTable> {
        Ok(self.predict_prepared(&self.prepare(p)?))
    }

    /// Per-record loss `mean_18 (pred − target)²` and, when `grad` is given,
    /// accumulation of `scale · ∂loss/∂params` into it.
    pub fn loss_and_grad(&self, input: &PreparedInput, target: &[f64; 18], grad: Option<(&mut [f64], f64)>) -> f64 {
        let tr = self.forward_trace(&input.sequence);
        let evals: [VoEval; 3] = std::array::from_fn(|o| VoEval::new(&VoParams::from_slice(&tr.out[5 * o..5 * o + 5])));
        let mut loss = 0.0;
        let mut resid = [0.0; 18];
        for (si, b) in input.bloch.iter().enumerate() {
            for (o, e) in evals.iter().enumerate() {
                let r = e.predict(b) - target[si * 3 + o];
                resid[si * 3 + o] = r;
                loss += r * r;
            }
        }
        loss /= 18.0;
        let Some((grad, scale)) = grad else {
            return loss;
        };

        // Head outputs.
        let mut dout = vec![0.0; self.arch.head_outputs()];
        for (si, b) in input.bloch.iter().enumerate() {
            for (o, e) in evals.iter().enumerate() {
                let up = scale * 2.0 * resid[si * 3 + o] / 18.0;
                e.accumulate_grad(b, up, &mut dout[5 * o..5 * o + 5]);
            }
        }
        let h = self.arch.hidden;
        let no = self.arch.head_outputs();
        let (hw, hb) = self.head_offsets();
        let last = tr.layers.last().unwrap().last(h);
        gru::ger(&mut grad[hw..hw + no * h], h, &dout, last);
        for (g, d) in grad[hb..hb + no].iter_mut().zip(&dout) {
            *g += d;
        }
        let mut dlast = vec![0.0; h];
        gru::gemv_t(&self.params[hw..hw + no * h], h, &dout, &mut dlast);

        // Through the stack, top to bottom.
        let layout = self.arch.layout();
        let steps = tr.layers[0].steps;
        let mut dh_out = vec![0.0; steps * h];
        dh_out[(steps - 1) * h..].copy_from_slice(&dlast);
        for l in (0..self.arch.layers).rev() {
            let wt = self.gru_weights(l);
            let input_seq: &[f64] = if l == 0 { &input.sequence } else { tr.layers[l - 1].outputs(h) };
            let (w, u, b) = (&layout[3 * l], &layout[3 * l + 1], &layout[3 * l + 2]);
            let wl = w.1.iter().product::<usize>();
            let ul = u.1.iter().product::<usize>();
            let bl = b.1.iter().product::<usize>();
            debug_assert!(w.2 + wl == u.2 && u.2 + ul == b.2);
            let block = &mut grad[w.2..b.2 + bl];
            let (gw, rest) = block.split_at_mut(wl);
            let (gu, gb) = rest.split_at_mut(ul);
            let mut grads = GruGrads { w: gw, u: gu, b: gb };
            dh_out = gru::backward(&wt, input_seq, &tr.layers[l], &dh_out, &mut grads);
        }
        loss
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let doc = self.to_checkpoint();
        let text = serde_json::to_string_pretty(&doc)?;
        std::fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            position: 0,
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            position: 0,
            source,
        })?;
        let doc: Checkpoint = serde_json::from_str(&text)?;
        Self::from_checkpoint(doc)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let weights = self
            .arch
            .layout()
            .into_iter()
            .map(|(name, shape, off)| {
                let len: usize = shape.iter().product();
                NamedArray {
                    name,
                    shape,
                    values: self.params[off..off + len].to_vec(),
                }
            })
            .collect();
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            kind: CHECKPOINT_KIND.into(),
            architecture: self.arch,
            physics: self.physics,
            weights,
            training: self.training.clone(),
        }
    }

    pub fn from_checkpoint(doc: Checkpoint) -> Result<Self> {
        if doc.kind != CHECKPOINT_KIND || doc.format_version != CHECKPOINT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported checkpoint {} v{}",
                doc.kind, doc.format_version
            )));
        }
        let layout = doc.architecture.layout();
        if layout.len() != doc.weights.len() {
            return Err(Error::Shape("checkpoint weight list does not match architecture".into()));
        }
        let mut params = vec![0.0; doc.architecture.param_count()];
        for ((name, shape, off), arr) in layout.iter().zip(&doc.weights) {
            let len: usize = shape.iter().product();
            if &arr.name != name || &arr.shape != shape || arr.values.len() != len {
                return Err(Error::Shape(format!("checkpoint array {} has unexpected shape", arr.name)));
            }
            params[*off..off + len].copy_from_slice(&arr.values);
        }
        let mut m = GrayboxModel::from_params(doc.architecture, doc.physics, params)?;
        m.training = doc.training;
        Ok(m)
    }
}

/// `sign(s)·R_c e_axis(s)` for the six input states.
pub fn controlled_bloch(u_c: &Mat2) -> [[f64; 3]; 6] {
    let r = unit_bloch_rotation(u_c);
    std::array::from_fn(|si| {
        let s = PauliState::ALL[si];
        let a = s.axis();
        [s.sign() * r[0][a], s.sign() * r[1][a], s.sign() * r[2][a]]
    })
}

fn table_from_heads(heads: &[VoParams; 3], bloch: &[[f64; 3]; 6]) -> ExpectationTable {
    let evals: [VoEval; 3] = std::array::from_fn(|o| VoEval::new(&heads[o]));
    let mut v = [0.0; 18];
    for (si, b) in bloch.iter().enumerate() {
        for (o, e) in evals.iter().enumerate() {
            v[si * 3 + o] = e.predict(b);
        }
    }
    ExpectationTable(v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Versioned, self-describing checkpoint document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub kind: String,
    pub architecture: Architecture,
    pub physics: PhysicsHeader,
    pub weights: Vec<NamedArray>,
    pub training: Option<TrainingMeta>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::haar::haar_unitary;

    fn physics() -> PhysicsHeader {
        PhysicsHeader {
            shape: PulseShape::new(3.2, 5, None, 100.0).unwrap(),
            grid: TimeGrid::new(3.2, 300).unwrap(),
        }
    }

    fn random_pulse(seed: u64, shape: PulseShape) -> PulseSequence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amps = (0..shape.n_pulses)
            .map(|_| [rng.random_range(-shape.a_max..shape.a_max), rng.random_range(-shape.a_max..shape.a_max)])
            .collect();
        PulseSequence::new(shape, amps).unwrap()
    }

    #[test]
    fn layout_is_contiguous() {
        let arch = Architecture::new(InputEncoding::Waveform { m_in: 128 }, 2, 60).unwrap();
        let mut off = 0;
        for (_, shape, o) in arch.layout() {
            assert_eq!(o, off);
            off += shape.iter().product::<usize>();
        }
        assert_eq!(off, arch.param_count());
    }

    #[test]
    fn zero_head_predicts_zero() {
        let arch = Architecture::new(InputEncoding::Waveform { m_in: 16 }, 2, 8).unwrap();
        let mut m = GrayboxModel::new(arch, physics(), 1).unwrap();
        m.zero_head();
        let (t, vo) = m.forward(&random_pulse(3, physics().shape)).unwrap();
        assert!(t.0.iter().all(|v| *v == 0.0));
        assert!(vo.0.iter().all(|v| v.max_abs_diff(&Mat2::zeros()) < 1e-15));
    }

    #[test]
    fn predictions_bounded() {
        let arch = Architecture::new(InputEncoding::PulseAmplitudes, 2, 12).unwrap();
        let mut m = GrayboxModel::new(arch, physics(), 7).unwrap();
        for v in m.params_mut() {
            *v *= 30.0;
        }
        for k in 0..200 {
            let t = m.predict(&random_pulse(k, physics().shape)).unwrap();
            assert!(t.0.iter().all(|v| v.abs() <= 1.0 + 1e-12));
        }
    }

    #[test]
    fn reported_noise_operators_reproduce_predictions() {
        let arch = Architecture::new(InputEncoding::PulseAmplitudes, 1, 6).unwrap();
        let m = GrayboxModel::new(arch, physics(), 2).unwrap();
        let p = random_pulse(9, physics().shape);
        let (t, vo) = m.forward(&p).unwrap();
        let u_c = m.control().control_unitary(&p).unwrap();
        let again = vo.expectations(&u_c);
        for (a, b) in t.0.iter().zip(again.0.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn controlled_bloch_matches_ideal_table() {
        let u = haar_unitary(4);
        let b = controlled_bloch(&u);
        let ideal = ExpectationTable::ideal(&u);
        for si in 0..6 {
            for o in 0..3 {
                assert!((b[si][o] - ideal.0[si * 3 + o]).abs() < 1e-12);
            }
        }
    }

    fn toy_loss(m: &GrayboxModel, inputs: &[(PreparedInput, [f64; 18])]) -> f64 {
        inputs.iter().map(|(i, t)| m.loss_and_grad(i, t, None)).sum()
    }

    #[test]
    fn gradients_match_finite_differences() {
        for encoding in [InputEncoding::Waveform { m_in: 6 }, InputEncoding::PulseAmplitudes] {
            let arch = Architecture::new(encoding, 2, 4).unwrap();
            let mut m = GrayboxModel::new(arch, physics(), 11).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            for v in m.params_mut() {
                *v += rng.random_range(-0.5..0.5);
            }
            let data: Vec<(PreparedInput, [f64; 18])> = (0..3)
                .map(|k| {
                    let input = m.prepare(&random_pulse(20 + k, physics().shape)).unwrap();
                    let target: [f64; 18] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
                    (input, target)
                })
                .collect();
            let mut grad = vec![0.0; arch.param_count()];
            for (i, t) in &data {
                m.loss_and_grad(i, t, Some((&mut grad, 1.0)));
            }
            let h = 1e-5;
            let n = arch.param_count();
            for k in 0..100 {
                let idx = (k * 7919 + 13) % n;
                let orig = m.params()[idx];
                m.params_mut()[idx] = orig + h;
                let fp = toy_loss(&m, &data);
                m.params_mut()[idx] = orig - h;
                let fm = toy_loss(&m, &data);
                m.params_mut()[idx] = orig;
                let fd = (fp - fm) / (2.0 * h);
                let denom = grad[idx].abs().max(fd.abs()).max(1e-6);
                assert!((fd - grad[idx]).abs() / denom < 1e-4, "param {idx}: {fd} vs {}", grad[idx]);
            }
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let arch = Architecture::new(InputEncoding::Waveform { m_in: 8 }, 2, 5).unwrap();
        let m = GrayboxModel::new(arch, physics(), 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        m.save(&path).unwrap();
        let back = GrayboxModel::load(&path).unwrap();
        assert_eq!(back, m);
        let p = random_pulse(1, physics().shape);
        assert_eq!(back.predict(&p).unwrap(), m.predict(&p).unwrap());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let arch = Architecture::new(InputEncoding::PulseAmplitudes, 1, 3).unwrap();
        let m = GrayboxModel::new(arch, physics(), 3).unwrap();
        let other = PulseShape::new(3.2, 4, None, 100.0).unwrap();
        assert!(m.predict(&PulseSequence::zeros(other)).is_err());
    }
}
