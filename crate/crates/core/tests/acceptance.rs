//! Acceptance run: one PASS/FAIL line per criterion, numbers alongside.
//! Exits non-zero if any criterion fails.

use std::time::{Duration, Instant};

use num_complex::Complex64 as C64;
use qgbc::config::ExperimentConfig;
use qgbc::control::{GateName, ModelKind, TargetGate};
use qgbc::dataset::{generate_records, records_hash, AmplitudeLaw, DatasetSpec};
use qgbc::experiments::{
    coherence_rows, correlator_check, gate_study, haar_study, ratio_grid, CorrelatorReport, GateRow, GateStudyModels,
    HaarRow,
};
use qgbc::graybox::train::{train, TrainReport};
use qgbc::graybox::{Architecture, GrayboxModel, InputEncoding};
use qgbc::haar::haar_unitary;
use qgbc::noise::NoiseConfig;
use qgbc::parallel::with_threads;
use qgbc::propagate::ControlGrid;
use qgbc::pulse::{PulseSequence, PulseShape};
use qgbc::simulator::{ExpectationTable, Simulator};
use qgbc::stats::spearman;
use qgbc::tomography::{
    chi_target, pauli_input_table, process_fidelity, reconstruct_chi, reconstruct_chi_complex, table_fidelity,
    ProcessMatrix,
};
use qgbc::whitebox::{classify_regimes, coupling_grid, OpenSystemWhitebox};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GAMMA: f64 = 0.02;

struct Outcome {
    id: &'static str,
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

fn report(o: &Outcome) {
    let tag = if o.pass { "PASS" } else { "FAIL" };
    println!("{tag} [{}] {}: {} ({:.1} s)", o.id, o.name, o.detail, o.elapsed.as_secs_f64());
}

fn run(id: &'static str, name: &'static str, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let t = Instant::now();
    let (pass, detail) = f();
    let o = Outcome {
        id,
        name,
        pass,
        detail,
        elapsed: t.elapsed(),
    };
    report(&o);
    o
}

fn note(line: impl AsRef<str>) {
    println!("      {}", line.as_ref());
}

fn mc_tol(k: usize) -> f64 {
    3.0 / (k as f64).sqrt()
}

fn noiseless_identity() -> (bool, String) {
    let t = Instant::now();
    let cfg = ExperimentConfig::default();
    let sim = Simulator::new(cfg.sim_config().unwrap(), cfg.shape().unwrap()).unwrap();
    let table = sim.simulate_ensemble(&PulseSequence::zeros(cfg.shape().unwrap())).unwrap();
    let f = table_fidelity(&table, &qgbc::linalg::Mat2::identity()).unwrap();
    let secs = t.elapsed().as_secs_f64();
    ((f - 1.0).abs() <= 1e-9 && secs < 1.0, format!("|F − 1| = {:.1e}, {secs:.3} s", (f - 1.0).abs()))
}

/// Lags reach 0.9/γ so the correlator decays to about e^{-1.8}.
fn correlator(omega: f64, trajectories: usize) -> CorrelatorReport {
    let noise = NoiseConfig::new(GAMMA, 0.0, omega, 2).unwrap();
    let horizon = 1.0 / GAMMA;
    let lags: Vec<f64> = (1..=10).map(|i| 0.09 * horizon * i as f64).collect();
    let four = [0.8 * horizon, 0.55 * horizon, 0.35 * horizon, 0.1 * horizon];
    correlator_check(&noise, horizon, trajectories, 0.05 * horizon, &lags, four).unwrap()
}

fn rtn_correlator() -> (bool, String) {
    let t = Instant::now();
    let r = correlator(0.0, 10_000);
    let worst = r.two_point.iter().map(|row| row.z_score().abs()).fold(0.0, f64::max);
    let lags_ok = r.two_point.len() == 10 && worst <= 3.0;
    for omega in [0.5, 1.0] {
        let m = correlator(omega, 10_000);
        note(format!(
            "Ω = {omega} MHz: empirical/analytic two-point ratio {:.4}, four-point ratio {:.4}",
            m.two_point_ratio, m.four_point_ratio
        ));
    }
    let secs = t.elapsed().as_secs_f64();
    (
        lags_ok && secs < 30.0,
        format!("10 lags, max |z| = {worst:.2}, four-point ratio {:.3}, {secs:.1} s", r.four_point_ratio),
    )
}

/// Conditional-coherence ODE integrated with RK4 on `steps` steps.
fn ode_coherence(g: f64, total: f64, steps: usize) -> f64 {
    let h = total / steps as f64;
    let i = C64::i();
    let f = |c: [C64; 2]| [-i * 2.0 * g * c[0] + GAMMA * (c[1] - c[0]), i * 2.0 * g * c[1] + GAMMA * (c[0] - c[1])];
    let axpy = |c: [C64; 2], k: [C64; 2], s: f64| [c[0] + k[0] * s, c[1] + k[1] * s];
    let mut c = [C64::new(0.5, 0.0); 2];
    for _ in 0..steps {
        let k1 = f(c);
        let k2 = f(axpy(c, k1, h / 2.0));
        let k3 = f(axpy(c, k2, h / 2.0));
        let k4 = f(axpy(c, k3, h));
        for s in 0..2 {
            c[s] += (k1[s] + k2[s] * 2.0 + k3[s] * 2.0 + k4[s]) * (h / 6.0);
        }
    }
    (c[0] + c[1]).re
}

fn coherence() -> (bool, String) {
    let t = Instant::now();
    let cfg = ExperimentConfig::default();
    let rows = coherence_rows(&cfg, &ratio_grid(30.0, 20)).unwrap();
    let ode_dev = rows
        .iter()
        .map(|r| (r.monte_carlo - ode_coherence(r.g_mhz, cfg.sim.t_us, 30_000)).abs())
        .fold(0.0, f64::max);
    let b = qgbc::experiments::regimes(&cfg, 40.0, 401).unwrap();
    let weak = b.weak_end.unwrap();
    let weak_rows = coherence_rows(&cfg, &ratio_grid(weak, 12)).unwrap();
    let eps = cfg.whitebox.epsilon;
    let dev = |f: fn(&qgbc::experiments::CoherenceRow) -> f64| {
        weak_rows.iter().map(|r| (r.monte_carlo - f(r)).abs()).fold(0.0, f64::max)
    };
    let d2 = dev(|r| r.dyson2);
    let d4 = dev(|r| r.dyson4);
    let secs = t.elapsed().as_secs_f64();
    (
        ode_dev < 0.02 && d2 <= eps && d4 <= eps && secs < 300.0,
        format!(
            "max |MC − ODE| = {ode_dev:.4} over 20 points; on [0, {weak:.2}γ] max |MC − order 2| = {d2:.4}, \
             |MC − order 4| = {d4:.4}"
        ),
    )
}

fn regimes() -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for omega in [0.0, 0.5, 1.0] {
        let noise = NoiseConfig::new(GAMMA, 0.0, omega, 0).unwrap();
        let b = |points: usize, nodes: usize| {
            classify_regimes(&noise, 3.2, 0.01, &coupling_grid(GAMMA, 40.0, points)[1..], nodes).unwrap()
        };
        let coarse = b(401, 300);
        let fine = b(1601, 600);
        let vals = |r: &qgbc::whitebox::RegimeBoundaries| [r.weak_end, r.intermediate_end, r.strong_end];
        let c = vals(&coarse);
        let f = vals(&fine);
        let finite = coarse.all_finite() && fine.all_finite();
        let ordered = finite && c[0] <= c[1] && c[1] <= c[2];
        let drift = if finite {
            c.iter().zip(&f).map(|(a, b)| (a.unwrap() - b.unwrap()).abs()).fold(0.0, f64::max)
        } else {
            f64::INFINITY
        };
        ok &= finite && ordered && drift <= 1e-3;
        let show = |v: Option<f64>| v.map_or("none".to_string(), |x| format!("{x:.3}"));
        parts.push(format!(
            "Ω={omega}: {}/{}/{} drift {drift:.1e}",
            show(c[0]),
            show(c[1]),
            show(c[2])
        ));
        if omega == 0.0 {
            note(format!(
                "unmodulated weak boundary {} γ against the reference value 5.5 γ (difference {:+.3})",
                show(c[0]),
                c[0].unwrap_or(f64::NAN) - 5.5
            ));
        }
    }
    (ok, parts.join("; "))
}

fn random_pulses(shape: PulseShape, rng: &mut ChaCha8Rng) -> PulseSequence {
    let a = shape.a_max;
    let amps = (0..shape.n_pulses).map(|_| [rng.random_range(-a..a), rng.random_range(-a..a)]).collect();
    PulseSequence::new(shape, amps).unwrap()
}

fn dyson_with_control() -> (bool, String) {
    let t = Instant::now();
    let cfg = ExperimentConfig::default().with_g_over_gamma(0.5);
    let sim = Simulator::new(cfg.sim_config().unwrap(), cfg.shape().unwrap()).unwrap();
    let wb = OpenSystemWhitebox::new(
        ControlGrid::new(cfg.grid().unwrap(), cfg.shape().unwrap()).unwrap(),
        cfg.noise().unwrap(),
        300,
    )
    .unwrap();
    let tol = 0.01f64.max(mc_tol(cfg.sim.realizations));
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let p = random_pulses(cfg.shape().unwrap(), &mut rng);
        let mc = sim.simulate_ensemble(&p).unwrap();
        let wb = wb.predict(&p).unwrap();
        worst = mc.0.iter().zip(wb.0.iter()).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    let secs = t.elapsed().as_secs_f64();
    (
        worst <= tol && secs < 600.0,
        format!("max deviation {worst:.4} over 50 × 18 entries (tolerance {tol:.4})"),
    )
}

fn six_gates() -> Vec<TargetGate> {
    GateName::STANDARD.iter().map(|&g| TargetGate::standard(g).unwrap()).collect()
}

fn rows_for<'a>(rows: &'a [GateRow], gate: &str, ratio: f64, kind: ModelKind) -> Vec<&'a GateRow> {
    rows.iter()
        .filter(|r| r.gate == gate && r.model == kind && (r.g_over_gamma - ratio).abs() < 1e-12)
        .collect()
}

fn closed_system_control() -> (bool, String) {
    let cfg = ExperimentConfig::default();
    let rows = gate_study(&cfg, &six_gates(), &[0.0, 30.0], &GateStudyModels::default()).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for gate in six_gates() {
        let name = gate.name.to_string();
        let at0 = rows_for(&rows, &name, 0.0, ModelKind::ClosedSystem);
        let best = at0.iter().min_by(|a, b| a.cost.total_cmp(&b.cost)).unwrap();
        let at30: Vec<f64> = rows_for(&rows, &name, 30.0, ModelKind::ClosedSystem).iter().map(|r| r.fidelity).collect();
        let spread = at30.iter().cloned().fold(f64::MIN, f64::max) - at30.iter().cloned().fold(f64::MAX, f64::min);
        ok &= best.fidelity >= 0.99 && spread > 0.05 && at30.len() == 10;
        parts.push(format!("{name} F0={:.4} spread30={spread:.3}", best.fidelity));
    }
    (ok, parts.join(", "))
}

struct GrayboxRun {
    report: TrainReport,
    gates: Vec<GateRow>,
    haar: Vec<HaarRow>,
}

/// Dataset, training, six-gate study and Haar study at one configuration.
fn graybox_pipeline(cfg: &ExperimentConfig, records: usize, haar_targets: usize, haar_restarts: usize) -> GrayboxRun {
    let spec = DatasetSpec {
        sim: cfg.sim_config().unwrap(),
        shape: cfg.shape().unwrap(),
        law: AmplitudeLaw::Uniform,
    };
    let data = generate_records(&spec, records).unwrap();
    let mut model = GrayboxModel::new(cfg.architecture().unwrap(), cfg.physics().unwrap(), cfg.graybox.seed).unwrap();
    let report = train(&mut model, &data, &cfg.train_hyper(), &records_hash(&data).unwrap()).unwrap();
    let ratio = cfg.noise.g_mhz / cfg.noise.gamma_mhz;
    let models = GateStudyModels {
        open_system: false,
        graybox: vec![&model],
    };
    let gates = gate_study(cfg, &six_gates(), &[ratio], &models).unwrap();
    let mut hc = cfg.clone();
    hc.control.restarts = haar_restarts;
    let haar = haar_study(&hc, &model, haar_targets, 1).unwrap();
    GrayboxRun { report, gates, haar }
}

fn graybox_checks(run: &GrayboxRun, ratio: f64) -> [(bool, String); 4] {
    let r = &run.report;
    let val = r.val_losses[r.best_epoch];
    let a = (val <= 0.15, format!("validation MSE {val:.4} at epoch {} of {}", r.best_epoch, r.val_losses.len()));

    let mut ok_b = true;
    let mut parts = Vec::new();
    for gate in six_gates() {
        let name = gate.name.to_string();
        let gb = rows_for(&run.gates, &name, ratio, ModelKind::Graybox);
        let best = gb.iter().min_by(|a, b| a.cost.total_cmp(&b.cost)).unwrap();
        let cs = rows_for(&run.gates, &name, ratio, ModelKind::ClosedSystem);
        let cs_mean = cs.iter().map(|r| r.fidelity).sum::<f64>() / cs.len() as f64;
        ok_b &= best.fidelity >= 0.80 && best.fidelity > cs_mean;
        parts.push(format!("{name} GB {:.3} vs CS mean {cs_mean:.3}", best.fidelity));
    }
    let b = (ok_b, parts.join(", "));

    let n = run.haar.len() as f64;
    let wins = run.haar.iter().filter(|h| h.gb_fidelity > h.cs_fidelity).count();
    let gb_mean = run.haar.iter().map(|h| h.gb_fidelity).sum::<f64>() / n;
    let cs_mean = run.haar.iter().map(|h| h.cs_fidelity).sum::<f64>() / n;
    let c = (
        wins as f64 / n >= 0.8,
        format!("GB beats CS on {wins}/{} targets (means {gb_mean:.3} vs {cs_mean:.3})", run.haar.len()),
    );

    let d: Vec<f64> = run.haar.iter().map(|h| h.vo_distance_mc).collect();
    let f: Vec<f64> = run.haar.iter().map(|h| h.gb_fidelity).collect();
    let rho = spearman(&d, &f).unwrap();
    let dgb: Vec<f64> = run.haar.iter().map(|h| h.vo_distance_gb).collect();
    note(format!("Spearman with the model's own noise operators: {:.3}", spearman(&dgb, &f).unwrap()));
    let e = (rho <= -0.5, format!("Spearman(V_O distance, fidelity) = {rho:.3} over {} targets", run.haar.len()));
    [a, b, c, e]
}

fn tomography() -> (bool, String) {
    let mut worst = 0.0f64;
    for k in 0..100u64 {
        let u = haar_unitary(10_000 + k);
        let chi = reconstruct_chi(&pauli_input_table(&ExpectationTable::ideal(&u))).unwrap();
        worst = worst.max((1.0 - process_fidelity(&chi, &chi_target(&u))).abs());
    }
    let cfg = ExperimentConfig::default();
    let sim = Simulator::new(cfg.sim_config().unwrap(), cfg.shape().unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let p = random_pulses(cfg.shape().unwrap(), &mut rng);
        let u = sim.control().control_unitary(&p).unwrap();
        let chi = reconstruct_chi(&pauli_input_table(&sim.simulate_ensemble(&p).unwrap())).unwrap();
        worst = worst.max((1.0 - process_fidelity(&chi, &chi_target(&u))).abs());
    }
    let mut round = 0.0f64;
    for _ in 0..100 {
        let chi = ProcessMatrix(std::array::from_fn(|_| {
            std::array::from_fn(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        }));
        let back = reconstruct_chi_complex(&chi.to_input_table()).unwrap();
        for (ra, rb) in chi.0.iter().zip(back.0.iter()) {
            for (a, b) in ra.iter().zip(rb.iter()) {
                round = round.max((a - b).norm());
            }
        }
    }
    (
        worst <= 1e-6 && round <= 1e-10,
        format!("worst fidelity deficit {worst:.1e} over 200 unitaries; round trip error {round:.1e}"),
    )
}

fn gradient_check() -> (bool, String) {
    let cfg = ExperimentConfig::default();
    let mut worst = 0.0f64;
    for encoding in [InputEncoding::Waveform { m_in: 8 }, InputEncoding::PulseAmplitudes] {
        let arch = Architecture::new(encoding, 2, 5).unwrap();
        let mut m = GrayboxModel::new(arch, cfg.physics().unwrap(), 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for v in m.params_mut() {
            *v += rng.random_range(-0.5..0.5);
        }
        let data: Vec<_> = (0..3)
            .map(|_| {
                let input = m.prepare(&random_pulses(cfg.shape().unwrap(), &mut rng)).unwrap();
                let target: [f64; 18] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
                (input, target)
            })
            .collect();
        let loss = |m: &GrayboxModel| data.iter().map(|(i, t)| m.loss_and_grad(i, t, None)).sum::<f64>();
        let mut grad = vec![0.0; arch.param_count()];
        for (i, t) in &data {
            m.loss_and_grad(i, t, Some((&mut grad, 1.0)));
        }
        let h = 1e-5;
        for idx in 0..arch.param_count() {
            let orig = m.params()[idx];
            m.params_mut()[idx] = orig + h;
            let fp = loss(&m);
            m.params_mut()[idx] = orig - h;
            let fm = loss(&m);
            m.params_mut()[idx] = orig;
            let fd = (fp - fm) / (2.0 * h);
            let denom = grad[idx].abs().max(fd.abs()).max(1e-6);
            worst = worst.max((fd - grad[idx]).abs() / denom);
        }
    }
    (worst <= 1e-4, format!("max relative error {worst:.1e} over every parameter of two toy stacks"))
}

fn reduced_graybox_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::graybox_experiment();
    c.sim.realizations = 200;
    c.sim.steps = 600;
    c.graybox.hidden = 12;
    c.graybox.epochs = 3;
    c.graybox.batch = 32;
    c.control.iters = 40;
    c.control.restarts = 2;
    c
}

fn determinism() -> (bool, String) {
    let pass = |threads: usize| {
        with_threads(threads, || {
            let corr = serde_json::to_string(&correlator(0.5, 10_000)).unwrap();
            let coh = serde_json::to_string(&coherence_rows(&ExperimentConfig::default(), &ratio_grid(30.0, 20)).unwrap())
                .unwrap();
            let run = graybox_pipeline(&reduced_graybox_config(), 300, 3, 2);
            let gb = serde_json::to_string(&(run.report, run.gates, run.haar)).unwrap();
            [corr, coh, gb]
        })
        .unwrap()
    };
    let one = pass(1);
    let four = pass(4);
    let same: Vec<bool> = one.iter().zip(&four).map(|(a, b)| a == b).collect();
    (
        same.iter().all(|&s| s),
        format!(
            "correlator {}, coherence {}, graybox pipeline (reduced) {}",
            same[0], same[1], same[2]
        ),
    )
}

fn main() {
    let start = Instant::now();
    let mut outcomes = vec![
        run("1", "noiseless identity", noiseless_identity),
        run("2", "telegraph correlator", rtn_correlator),
        run("3", "free coherence curve", coherence),
        run("4", "coupling regimes", regimes),
        run("5", "order-2 model with control", dyson_with_control),
        run("6", "closed-system control", closed_system_control),
    ];

    let cfg = ExperimentConfig::graybox_experiment();
    let ratio = cfg.noise.g_mhz / cfg.noise.gamma_mhz;
    let t = Instant::now();
    let gb = graybox_pipeline(&cfg, 10_000, 50, cfg.control.restarts);
    let elapsed = t.elapsed();
    note(format!("graybox pipeline at g/γ = {ratio:.0} took {:.0} s", elapsed.as_secs_f64()));
    let [a, b, c, d] = graybox_checks(&gb, ratio);
    for (id, name, (pass, detail)) in [
        ("7a", "graybox validation error", a),
        ("7b", "graybox six-gate control", b),
        ("7c", "graybox Haar targets", c),
        ("8", "noise-operator diagnostic", d),
    ] {
        let o = Outcome {
            id,
            name,
            pass,
            detail,
            elapsed,
        };
        report(&o);
        outcomes.push(o);
    }

    outcomes.push(run("9", "process tomography", tomography));
    outcomes.push(run("10", "recurrent gradients", gradient_check));
    outcomes.push(run("11", "thread-count determinism", determinism));

    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    println!(
        "acceptance: {} passed, {} failed, {:.0} s total",
        outcomes.len() - failed.len(),
        failed.len(),
        start.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
