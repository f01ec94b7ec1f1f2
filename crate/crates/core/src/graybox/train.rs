//! Minibatch Adam training with early stopping, and per-record evaluation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GrayboxModel, PreparedInput, TrainingMeta};
use crate::control::adam::{AdamConfig, AdamState};
use crate::dataset::DatasetRecord;
use crate::error::{Error, Result};
use crate::stats::Summary;

/// Records per gradient chunk. Chunks are reduced in order, so the result
/// does not depend on how many workers process them.
const GRAD_CHUNK: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHyper {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    /// Fraction of records used for training; the rest validate.
    pub split: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            lr: 1e-3,
            batch: 256,
            epochs: 200,
            split: 0.9,
            patience: 20,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub n_train: usize,
    pub n_val: usize,
}

/// A dataset record turned into network inputs and a target table.
#[derive(Clone, Debug)]
pub struct Example {
    pub input: PreparedInput,
    pub target: [f64; 18],
}

pub fn prepare_examples(model: &GrayboxModel, records: &[DatasetRecord]) -> Result<Vec<Example>> {
    records
        .par_iter()
        .map(|r| {
            let p = r.pulses()?;
            let target = r.table()?.0;
            Ok(Example {
                input: model.prepare(&p)?,
                target,
            })
        })
        .collect()
}

/// Deterministic train/validation split of `n` indices.
pub fn split_indices(n: usize, split: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(split > 0.0 && split <= 1.0) {
        return Err(Error::invalid(format!("split must be in (0, 1], got {split}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((n as f64) * split).round().clamp(1.0, n as f64) as usize;
    let val = idx.split_off(n_train);
    Ok((idx, val))
}

fn losses(model: &GrayboxModel, examples: &[Example], idx: &[usize]) -> Vec<f64> {
    idx.par_iter()
        .map(|&i| model.loss_and_grad(&examples[i].input, &examples[i].target, None))
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Returns per-record losses of the batch and adds the mean-loss gradient
/// into `grad`.
fn batch_gradient(model: &GrayboxModel, examples: &[Example], batch: &[usize], grad: &mut [f64]) -> Vec<f64> {
    let scale = 1.0 / batch.len() as f64;
    let n = grad.len();
    let parts: Vec<(Vec<f64>, Vec<f64>)> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut g = vec![0.0; n];
            let l = chunk
                .iter()
                .map(|&i| model.loss_and_grad(&examples[i].input, &examples[i].target, Some((&mut g, scale))))
                .collect();
            (g, l)
        })
        .collect();
    let mut out = Vec::with_capacity(batch.len());
    for (g, l) in parts {
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
        out.extend(l);
    }
    out
}

/// Trains in place and returns the loss curves. The best-validation weights
/// are restored at the end.
pub fn train_examples(model: &mut GrayboxModel, examples: &[Example], hyper: &TrainHyper) -> Result<TrainReport> {
    if examples.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    if hyper.batch == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    if !(hyper.lr >= 0.0 && hyper.lr.is_finite()) {
        return Err(Error::invalid(format!("learning rate must be finite and non-negative, got {}", hyper.lr)));
    }
    let (train_idx, val_idx) = split_indices(examples.len(), hyper.split, hyper.seed)?;
    let mut adam = AdamState::new(AdamConfig::with_lr(hyper.lr), model.params().len());
    let mut order = train_idx.clone();
    let mut shuffler = ChaCha8Rng::seed_from_u64(hyper.seed ^ 0x7261_696e);
    let mut pos_of = vec![0usize; examples.len()];
    for (k, &i) in train_idx.iter().enumerate() {
        pos_of[i] = k;
    }

    let mut report = TrainReport {
        train_losses: Vec::new(),
        val_losses: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
        n_train: train_idx.len(),
        n_val: val_idx.len(),
    };
    let mut best = f64::INFINITY;
    let mut best_params = model.params().to_vec();
    let mut since_best = 0usize;
    let mut grad = vec![0.0; model.params().len()];
    let mut per_record = vec![0.0; train_idx.len()];

    for epoch in 0..hyper.epochs {
        order.shuffle(&mut shuffler);
        for (b, batch) in order.chunks(hyper.batch).enumerate() {
            grad.fill(0.0);
            let l = batch_gradient(model, examples, batch, &mut grad);
            for (&i, li) in batch.iter().zip(&l) {
                per_record[pos_of[i]] = *li;
            }
            if l.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("training loss at epoch {epoch}, batch {b}")));
            }
            adam.step(model.params_mut(), &grad).map_err(|e| match e {
                Error::NonFinite(m) => Error::NonFinite(format!("epoch {epoch}, batch {b}: {m}")),
                other => other,
            })?;
        }
        report.train_losses.push(mean(&per_record));
        let monitor = if val_idx.is_empty() {
            *report.train_losses.last().unwrap()
        } else {
            let v = mean(&losses(model, examples, &val_idx));
            report.val_losses.push(v);
            v
        };
        if !monitor.is_finite() {
            return Err(Error::NonFinite(format!("monitored loss at epoch {epoch}")));
        }
        if monitor < best {
            best = monitor;
            best_params.copy_from_slice(model.params());
            report.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= hyper.patience {
                report.stopped_early = true;
                break;
            }
        }
    }
    model.params_mut().copy_from_slice(&best_params);
    Ok(report)
}

/// Prepares the records, trains, and stores the training metadata in the
/// model.
pub fn train(
    model: &mut GrayboxModel,
    records: &[DatasetRecord],
    hyper: &TrainHyper,
    dataset_hash: &str,
) -> Result<TrainReport> {
    let examples = prepare_examples(model, records)?;
    let report = train_examples(model, &examples, hyper)?;
    let first = &records[0].meta;
    model.set_training(TrainingMeta {
        dataset_hash: dataset_hash.to_string(),
        hyper: *hyper,
        n_train: report.n_train,
        n_val: report.n_val,
        epochs_run: report.train_losses.len(),
        best_epoch: report.best_epoch,
        train_losses: report.train_losses.clone(),
        val_losses: report.val_losses.clone(),
        g: first.g,
        gamma: first.gamma,
        omega: first.omega,
    });
    Ok(report)
}

/// Per-record MSE distribution of a split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub summary: Summary,
    pub per_record: Vec<f64>,
}

pub fn evaluate_examples(model: &GrayboxModel, examples: &[Example]) -> Result<Evaluation> {
    let idx: Vec<usize> = (0..examples.len()).collect();
    let per_record = losses(model, examples, &idx);
    Ok(Evaluation {
        summary: Summary::of(&per_record)?,
        per_record,
    })
}

pub fn evaluate(model: &GrayboxModel, records: &[DatasetRecord]) -> Result<Evaluation> {
    evaluate_examples(model, &prepare_examples(model, records)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graybox::{Architecture, InputEncoding, PhysicsHeader};
    use crate::pulse::{PulseSequence, PulseShape, TimeGrid};
    use rand::Rng;

    fn model(hidden: usize) -> GrayboxModel {
        let physics = PhysicsHeader {
            shape: PulseShape::new(3.2, 5, None, 20.0).unwrap(),
            grid: TimeGrid::new(3.2, 200).unwrap(),
        };
        let arch = Architecture::new(InputEncoding::PulseAmplitudes, 2, hidden).unwrap();
        GrayboxModel::new(arch, physics, 1).unwrap()
    }

    fn examples(m: &GrayboxModel, n: usize) -> Vec<Example> {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let shape = m.physics().shape;
        (0..n)
            .map(|_| {
                let amps = (0..5).map(|_| [rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)]).collect();
                let p = PulseSequence::new(shape, amps).unwrap();
                let input = m.prepare(&p).unwrap();
                // Representable targets: W_O = m_O·σ with |m_O| < 1.
                let axes: [[f64; 3]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(-0.5..0.5)));
                let target = std::array::from_fn(|k| {
                    let (b, a) = (input.bloch[k / 3], axes[k % 3]);
                    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
                });
                Example { input, target }
            })
            .collect()
    }

    #[test]
    fn zero_learning_rate_keeps_losses_constant() {
        let mut m = model(6);
        let ex = examples(&m, 40);
        let hyper = TrainHyper {
            lr: 0.0,
            batch: 7,
            epochs: 5,
            patience: 100,
            ..TrainHyper::default()
        };
        let before = m.params().to_vec();
        let r = train_examples(&mut m, &ex, &hyper).unwrap();
        assert!(r.train_losses.windows(2).all(|w| w[0] == w[1]));
        assert!(r.val_losses.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(m.params(), &before[..]);
    }

    #[test]
    fn overfits_small_dataset() {
        let mut m = model(16);
        let ex = examples(&m, 32);
        let hyper = TrainHyper {
            lr: 1e-2,
            batch: 32,
            epochs: 3000,
            split: 1.0,
            patience: 3000,
            seed: 0,
        };
        let r = train_examples(&mut m, &ex, &hyper).unwrap();
        let last = *r.train_losses.last().unwrap();
        let ev = evaluate_examples(&m, &ex).unwrap();
        assert!(ev.summary.mean < 1e-3, "final train loss {last}, eval {}", ev.summary.mean);
    }

    #[test]
    fn training_is_deterministic() {
        let hyper = TrainHyper {
            lr: 1e-2,
            batch: 9,
            epochs: 3,
            ..TrainHyper::default()
        };
        let run = || {
            let mut m = model(5);
            let ex = examples(&m, 30);
            train_examples(&mut m, &ex, &hyper).unwrap();
            m.params().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn empty_dataset_rejected() {
        let mut m = model(3);
        assert!(train_examples(&mut m, &[], &TrainHyper::default()).is_err());
    }

    #[test]
    fn evaluation_is_order_invariant() {
        let m = model(4);
        let mut ex = examples(&m, 25);
        let a = evaluate_examples(&m, &ex).unwrap().summary;
        ex.reverse();
        let b = evaluate_examples(&m, &ex).unwrap().summary;
        assert_eq!(a, b);
    }
}
