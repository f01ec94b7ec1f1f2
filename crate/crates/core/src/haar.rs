//! Haar-distributed random unitaries via Gram–Schmidt on a complex Gaussian
//! matrix. Gram–Schmidt leaves R with a positive real diagonal, which is the
//! phase fix that makes Q exactly Haar.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{Mat2, C64};

pub fn haar_unitary(seed: u64) -> Mat2 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    haar_unitary_with(&mut rng)
}

pub fn haar_unitary_with<R: Rng + ?Sized>(rng: &mut R) -> Mat2 {
    let mut gauss = || C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
    let c0 = [gauss(), gauss()];
    let c1 = [gauss(), gauss()];

    let n0 = (c0[0].norm_sqr() + c0[1].norm_sqr()).sqrt();
    let q0 = [c0[0] / n0, c0[1] / n0];
    let proj = q0[0].conj() * c1[0] + q0[1].conj() * c1[1];
    let v = [c1[0] - proj * q0[0], c1[1] - proj * q0[1]];
    let n1 = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    let q1 = [v[0] / n1, v[1] / n1];

    Mat2::new(q0[0], q1[0], q0[1], q1[1])
}
