use std::f64::consts::PI;

use qgbc::haar::{haar_unitary, haar_unitary_with};
use qgbc::linalg::{Mat2, C64};
use qgbc::noise::NoiseConfig;
use qgbc::pulse::{PulseSequence, PulseShape, TimeGrid};
use qgbc::simulator::{ExpectationTable, SimConfig, Simulator};
use qgbc::tomography::{chi_target, pauli_input_table, process_fidelity, reconstruct_chi, table_fidelity};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent sampler: random global phase times an SU(2) element with
/// `|u₀₀|² ~ U(0, 1)` and independent uniform phases.
fn euler_unitary(rng: &mut ChaCha8Rng) -> Mat2 {
    let c2: f64 = rng.random();
    let (c, s) = (c2.sqrt(), (1.0 - c2).sqrt());
    let phi = 2.0 * PI * rng.random::<f64>();
    let psi = 2.0 * PI * rng.random::<f64>();
    let alpha = 2.0 * PI * rng.random::<f64>();
    let e = |a: f64| C64::from_polar(1.0, a);
    Mat2::new(e(phi) * c, e(psi) * s, -e(-psi) * s, e(-phi) * c).scale(e(alpha))
}

fn pair_fidelity(a: &Mat2, b: &Mat2) -> f64 {
    ((a.dagger() * *b).trace() / 2.0).norm_sqr()
}

fn ks_statistic(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn haar_moments_match_euler_sampler() {
    let n = 100_000;
    let mut r1 = ChaCha8Rng::seed_from_u64(1);
    let mut r2 = ChaCha8Rng::seed_from_u64(2);
    let qr: Vec<Mat2> = (0..n).map(|_| haar_unitary_with(&mut r1)).collect();
    let eu: Vec<Mat2> = (0..n).map(|_| euler_unitary(&mut r2)).collect();
    for set in [&qr, &eu] {
        let tr2 = set.iter().map(|u| (u.trace() / 2.0).norm_sqr()).sum::<f64>() / n as f64;
        assert!((tr2 - 0.25).abs() < 0.01, "E|Tr U/2|² = {tr2}");
        let m2 = set.iter().map(|u| u.0[0][0].norm_sqr().powi(2)).sum::<f64>() / n as f64;
        assert!((m2 - 1.0 / 3.0).abs() < 0.01, "E|u00|⁴ = {m2}");
    }
    let d = ks_statistic(
        qr.iter().map(|u| u.0[0][0].norm_sqr()).collect(),
        eu.iter().map(|u| u.0[0][0].norm_sqr()).collect(),
    );
    // Two-sample KS critical value at α = 0.001 is about 1.95·sqrt(2/n).
    assert!(d < 1.95 * (2.0 / n as f64).sqrt(), "KS statistic {d}");
    let arg = |u: &Mat2| (u.0[0][1] / u.0[0][0]).arg();
    let d_phase = ks_statistic(qr.iter().map(arg).collect(), eu.iter().map(arg).collect());
    assert!(d_phase < 1.95 * (2.0 / n as f64).sqrt(), "phase KS statistic {d_phase}");
}

#[test]
fn random_pair_fidelity_averages_a_quarter() {
    let mean = (0..10_000u64)
        .map(|k| pair_fidelity(&haar_unitary(2 * k), &haar_unitary(2 * k + 1)))
        .sum::<f64>()
        / 10_000.0;
    assert!((mean - 0.25).abs() < 0.02, "{mean}");
}

#[test]
fn noiseless_haar_unitaries_reconstruct_exactly() {
    for k in 0..100u64 {
        let u = haar_unitary(500 + k);
        let chi = reconstruct_chi(&pauli_input_table(&ExpectationTable::ideal(&u))).unwrap();
        let f = process_fidelity(&chi, &chi_target(&u));
        assert!((1.0 - f).abs() < 1e-6, "target {k}: fidelity {f}");
        let v = haar_unitary(900 + k);
        let fv = process_fidelity(&chi_target(&u), &chi_target(&v));
        assert!((fv - pair_fidelity(&u, &v)).abs() < 1e-12);
        assert!((fv - process_fidelity(&chi_target(&v), &chi_target(&u))).abs() < 1e-14);
    }
}

#[test]
fn simulated_pulse_channels_reconstruct_exactly() {
    let noise = NoiseConfig::new(0.02, 0.0, 0.0, 0).unwrap();
    let shape = PulseShape::new(3.2, 5, None, 100.0).unwrap();
    let sim = Simulator::new(SimConfig::new(TimeGrid::new(3.2, 3000).unwrap(), 10, noise).unwrap(), shape).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    for _ in 0..20 {
        let amps = (0..5).map(|_| [rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0)]).collect();
        let p = PulseSequence::new(shape, amps).unwrap();
        let u = sim.control().control_unitary(&p).unwrap();
        let f = table_fidelity(&sim.simulate_ensemble(&p).unwrap(), &u).unwrap();
        assert!((1.0 - f).abs() < 1e-6, "{f}");
    }
}

#[test]
fn noisy_reconstruction_is_trace_preserving() {
    let noise = NoiseConfig::new(0.02, 0.4, 0.0, 3).unwrap();
    let shape = PulseShape::new(3.2, 5, None, 100.0).unwrap();
    let sim = Simulator::new(SimConfig::new(TimeGrid::new(3.2, 3000).unwrap(), 2000, noise).unwrap(), shape).unwrap();
    let p = PulseSequence::new(shape, vec![[10.0, 0.0], [0.0, -20.0], [5.0, 5.0], [0.0, 0.0], [-8.0, 3.0]]).unwrap();
    let chi = reconstruct_chi(&pauli_input_table(&sim.simulate_ensemble(&p).unwrap())).unwrap();
    let tol = 3.0 / 2000f64.sqrt();
    assert!(chi.trace_condition().max_abs_diff(&Mat2::identity()) < tol);
    assert!(chi.hermiticity_defect() < tol);
}
