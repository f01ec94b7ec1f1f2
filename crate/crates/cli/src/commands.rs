use std::path::Path;
use std::sync::Arc;

use qgbc::config::ExperimentConfig;
use qgbc::control::{optimize_pulses, GateName, ModelHandle, ModelKind, TargetGate};
use qgbc::dataset::{file_hash, generate_dataset, read_dataset, AmplitudeLaw, DatasetRecord, DatasetSpec};
use qgbc::experiments::{self, GateStudyModels};
use qgbc::graybox::train::{evaluate_examples, prepare_examples, split_indices, train_examples, Evaluation, Example};
use qgbc::graybox::{GrayboxModel, PhysicsHeader, TrainingMeta};
use qgbc::pulse::PulseSequence;
use qgbc::simulator::Simulator;
use qgbc::stats::Summary;
use qgbc::tomography::{chi_target, pauli_input_table, process_fidelity, reconstruct_chi, vo_distance};
use qgbc::Error;
use serde::{Deserialize, Serialize};

use crate::output::{emit_csv, emit_json, emit_sidecar, Header};
use crate::{Cli, CliError, Command};

pub fn run(cli: Cli) -> Result<(), CliError> {
    qgbc::parallel::init_global_pool()?;
    let cfg = ExperimentConfig::load(&cli.config)?;
    match cli.command {
        Command::CoherenceScan { points, max_ratio, out } => {
            let rows = experiments::coherence_rows(&cfg, &experiments::ratio_grid(max_ratio, points))?;
            emit_csv(&Header::new("coherence-scan", &cfg), &rows, out.as_deref())
        }
        Command::Regimes { max_ratio, points, out } => {
            let b = experiments::regimes(&cfg, max_ratio, points)?;
            emit_json(&Header::new("regimes", &cfg), &b, out.as_deref())
        }
        Command::CorrelatorCheck { trajectories, out } => {
            let r = experiments::default_correlator_check(&cfg.noise()?, cfg.sim.t_us, trajectories)?;
            emit_json(&Header::new("correlator-check", &cfg), &r, out.as_deref())
        }
        Command::Dataset { n, out } => dataset(&cfg, n, &out),
        Command::Train { data, out } => train(&cfg, &data, &out),
        Command::Evaluate { model, data, out } => evaluate(&cfg, &model, &data, out.as_deref()),
        Command::Optimize {
            gate,
            model_kind,
            graybox,
            g_over_gamma,
            out,
        } => optimize(&cfg, &gate, &model_kind, graybox.as_deref(), g_over_gamma, out.as_deref()),
        Command::Tomo {
            gate,
            pulses,
            g_over_gamma,
            out,
        } => tomo(&cfg, &gate, pulses.as_deref(), g_over_gamma, out.as_deref()),
        Command::Fig3 {
            gates,
            g_over_gamma,
            open_system,
            graybox,
            out,
        } => {
            let gates = gates.iter().map(|g| parse_gate(g)).collect::<Result<Vec<_>, _>>()?;
            let models: Vec<GrayboxModel> = graybox.iter().map(|p| GrayboxModel::load(p)).collect::<Result<_, _>>()?;
            let study = GateStudyModels {
                open_system,
                graybox: models.iter().collect(),
            };
            let rows = experiments::gate_study(&cfg, &gates, &g_over_gamma, &study)?;
            emit_csv(&Header::new("fig3", &cfg), &rows, out.as_deref())
        }
        Command::Fig4 {
            graybox,
            targets,
            target_seed,
            out,
        } => {
            let model = GrayboxModel::load(&graybox)?;
            let rows = experiments::haar_study(&cfg, &model, targets, target_seed)?;
            emit_csv(&Header::new("fig4", &cfg), &rows, out.as_deref())
        }
    }
}

fn parse_gate(s: &str) -> Result<TargetGate, CliError> {
    let name: GateName = s.parse()?;
    Ok(TargetGate::standard(name)?)
}

fn dataset(cfg: &ExperimentConfig, n: usize, out: &Path) -> Result<(), CliError> {
    if n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let spec = DatasetSpec {
        sim: cfg.sim_config()?,
        shape: cfg.shape()?,
        law: AmplitudeLaw::Uniform,
    };
    generate_dataset(n, &spec, out)?;
    let summary = serde_json::json!({ "records": n, "sha256": file_hash(out)? });
    emit_sidecar(&Header::new("dataset", cfg), &summary, out)
}

fn physics_of(records: &[DatasetRecord]) -> Result<PhysicsHeader, CliError> {
    let first = &records[0];
    let physics = PhysicsHeader {
        shape: first.shape()?,
        grid: first.sim_config()?.grid,
    };
    if let Some((k, _)) = records.iter().enumerate().find(|(_, r)| {
        r.meta.g != first.meta.g
            || r.meta.gamma != first.meta.gamma
            || r.meta.omega != first.meta.omega
            || r.shape().ok() != Some(physics.shape)
    }) {
        return Err(CliError::Usage(format!("record {k} was generated with different physics than record 0")));
    }
    Ok(physics)
}

fn train(cfg: &ExperimentConfig, data: &Path, out: &Path) -> Result<(), CliError> {
    let records = read_dataset(data)?;
    let physics = physics_of(&records)?;
    let hyper = cfg.train_hyper();
    let mut model = GrayboxModel::new(cfg.architecture()?, physics, cfg.graybox.seed)?;
    let examples = prepare_examples(&model, &records)?;
    let report = train_examples(&mut model, &examples, &hyper)?;
    let meta = &records[0].meta;
    model.set_training(TrainingMeta {
        dataset_hash: file_hash(data)?,
        hyper,
        n_train: report.n_train,
        n_val: report.n_val,
        epochs_run: report.train_losses.len(),
        best_epoch: report.best_epoch,
        train_losses: report.train_losses.clone(),
        val_losses: report.val_losses.clone(),
        g: meta.g,
        gamma: meta.gamma,
        omega: meta.omega,
    });
    model.save(out)?;
    emit_sidecar(&Header::new("train", cfg), &report, out)
}

#[derive(Serialize)]
struct EvaluationReport {
    dataset_hash: String,
    /// True when the dataset is the one the model was trained on, so the
    /// recorded split could be reproduced.
    split_recovered: bool,
    all: Summary,
    train: Option<Evaluation>,
    validation: Option<Evaluation>,
    /// Validation median minus train median.
    median_gap: Option<f64>,
}

fn subset(examples: &[Example], idx: &[usize]) -> Vec<Example> {
    idx.iter().map(|&i| examples[i].clone()).collect()
}

fn evaluate(cfg: &ExperimentConfig, model_path: &Path, data: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let model = GrayboxModel::load(model_path)?;
    let records = read_dataset(data)?;
    let examples = prepare_examples(&model, &records)?;
    let hash = file_hash(data)?;
    let all = evaluate_examples(&model, &examples)?.summary;
    let mut report = EvaluationReport {
        dataset_hash: hash.clone(),
        split_recovered: false,
        all,
        train: None,
        validation: None,
        median_gap: None,
    };
    if let Some(t) = model.training().filter(|t| t.dataset_hash == hash) {
        let (tr, va) = split_indices(examples.len(), t.hyper.split, t.hyper.seed)?;
        report.split_recovered = true;
        report.train = Some(evaluate_examples(&model, &subset(&examples, &tr))?);
        if !va.is_empty() {
            report.validation = Some(evaluate_examples(&model, &subset(&examples, &va))?);
        }
        if let (Some(a), Some(b)) = (&report.train, &report.validation) {
            report.median_gap = Some(b.summary.median - a.summary.median);
        }
    }
    emit_json(&Header::new("evaluate", cfg), &report, out)
}

#[derive(Serialize, Deserialize)]
struct RestartSummary {
    restart: usize,
    cost: f64,
    fidelity: f64,
    failure: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct OptimizeReport {
    gate: String,
    target: [[[f64; 2]; 2]; 2],
    model: ModelKind,
    g_over_gamma: f64,
    iterations: usize,
    best_restart: usize,
    final_cost: f64,
    fidelity: f64,
    amplitudes: Vec<[f64; 2]>,
    a_max: f64,
    init_scale: f64,
    trace: Vec<f64>,
    restarts: Vec<RestartSummary>,
}

fn matrix_parts(g: &TargetGate) -> [[[f64; 2]; 2]; 2] {
    let m = g.matrix.0;
    [
        [[m[0][0].re, m[0][1].re], [m[1][0].re, m[1][1].re]],
        [[m[0][0].im, m[0][1].im], [m[1][0].im, m[1][1].im]],
    ]
}

fn optimize(
    cfg: &ExperimentConfig,
    gate: &str,
    kind: &str,
    graybox: Option<&Path>,
    ratio: Option<f64>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let gate = parse_gate(gate)?;
    let configured = cfg.noise.g_mhz / cfg.noise.gamma_mhz;
    let (model, ratio) = match kind.to_ascii_lowercase().as_str() {
        "cs-wb" | "cs" => (experiments::closed_system_model(cfg)?, ratio.unwrap_or(configured)),
        "os-wb" | "os" => {
            let r = ratio.unwrap_or(configured);
            (experiments::open_system_model(cfg, r)?, r)
        }
        "gb" => {
            let path = graybox.ok_or_else(|| CliError::Usage("--graybox is required for the gb model".into()))?;
            let m = GrayboxModel::load(path)?;
            if m.physics().shape != cfg.shape()? {
                return Err(Error::Config("graybox pulse shape differs from the configured one".into()).into());
            }
            let trained = m.training().map(|t| t.g / t.gamma);
            let r = ratio.or(trained).unwrap_or(configured);
            (ModelHandle::Graybox(Arc::new(m)), r)
        }
        other => return Err(CliError::Usage(format!("unknown model kind {other:?}; expected cs-wb, os-wb or gb"))),
    };
    let opt = cfg.optimize_config();
    let result = optimize_pulses(&model, &gate, &opt)?;
    let sim = Simulator::new(cfg.with_g_over_gamma(ratio).sim_config()?, cfg.shape()?)?;
    let restarts = result
        .restarts
        .iter()
        .map(|r| {
            Ok(RestartSummary {
                restart: r.restart,
                cost: r.cost,
                fidelity: experiments::mc_fidelity(&sim, &r.pulses, &gate)?,
                failure: r.failure.clone(),
            })
        })
        .collect::<Result<Vec<_>, qgbc::Error>>()?;
    let report = OptimizeReport {
        gate: gate.name.to_string(),
        target: matrix_parts(&gate),
        model: model.kind(),
        g_over_gamma: ratio,
        iterations: opt.iters,
        best_restart: result.best_restart,
        final_cost: result.best_cost,
        fidelity: restarts[result.best_restart].fidelity,
        amplitudes: result.best.amplitudes().to_vec(),
        a_max: cfg.pulses.a_max_mhz,
        init_scale: opt.init_scale,
        trace: result.trace().to_vec(),
        restarts,
    };
    emit_json(&Header::new("optimize", cfg), &report, out)
}

#[derive(Serialize)]
struct ChiDocument {
    re: [[f64; 4]; 4],
    im: [[f64; 4]; 4],
}

#[derive(Serialize)]
struct TomoReport {
    gate: String,
    g_over_gamma: f64,
    amplitudes: Vec<[f64; 2]>,
    chi: ChiDocument,
    chi_target: ChiDocument,
    fidelity: f64,
    hermiticity_defect: f64,
    vo_distance: f64,
}

fn chi_doc(chi: &qgbc::tomography::ProcessMatrix) -> ChiDocument {
    ChiDocument {
        re: chi.0.map(|row| row.map(|c| c.re)),
        im: chi.0.map(|row| row.map(|c| c.im)),
    }
}

#[derive(Deserialize)]
struct PulseSource {
    result: PulseAmplitudes,
}

#[derive(Deserialize)]
struct PulseAmplitudes {
    amplitudes: Vec<[f64; 2]>,
}

fn tomo(
    cfg: &ExperimentConfig,
    gate: &str,
    pulses: Option<&Path>,
    ratio: Option<f64>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let gate = parse_gate(gate)?;
    let shape = cfg.shape()?;
    let p = match pulses {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            let src: PulseSource = serde_json::from_str(&text).map_err(Error::from)?;
            PulseSequence::new(shape, src.result.amplitudes)?
        }
        None => PulseSequence::zeros(shape),
    };
    let ratio = ratio.unwrap_or(cfg.noise.g_mhz / cfg.noise.gamma_mhz);
    let sim = Simulator::new(cfg.with_g_over_gamma(ratio).sim_config()?, shape)?;
    let (table, vo) = sim.simulate_with_vo(&p)?;
    let chi = reconstruct_chi(&pauli_input_table(&table))?;
    let target = chi_target(&gate.matrix);
    let report = TomoReport {
        gate: gate.name.to_string(),
        g_over_gamma: ratio,
        amplitudes: p.amplitudes().to_vec(),
        fidelity: process_fidelity(&chi, &target),
        hermiticity_defect: chi.hermiticity_defect(),
        chi: chi_doc(&chi),
        chi_target: chi_doc(&target),
        vo_distance: vo_distance(&vo),
    };
    emit_json(&Header::new("tomo", cfg), &report, out)
}
