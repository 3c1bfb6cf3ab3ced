//! Reproducible test realizations.

use crate::kernel::{DiagonalStructure, Realization};
use crate::linalg::{self, c, CMatrix, I};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `p = n = 1`, `theta1 = theta2 = 1`, `beta = -1`, `D = 1`, `l = 1`.
pub fn scalar_worked_case() -> Realization {
    let one = CMatrix::from_element(1, 1, c(1.0, 0.0));
    Realization::new(
        one.clone(),
        one,
        CMatrix::from_element(1, 1, c(-1.0, 0.0)),
        DiagonalStructure::new(vec![1.0]).unwrap(),
        1.0,
    )
    .unwrap()
}

/// All-zero data of the given shape (`S = I`).
pub fn zero_data(n: usize, d: Vec<f64>, length: f64) -> Realization {
    let p = d.len();
    Realization::new(
        linalg::zeros(n, p),
        linalg::zeros(n, p),
        linalg::zeros(n, n),
        DiagonalStructure::new(d).unwrap(),
        length,
    )
    .unwrap()
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        c(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale))
    })
}

/// Random `D` with at least two distinct levels when `p >= 2`, and a repeated
/// level when `p >= 3`.
pub fn random_diag(rng: &mut ChaCha8Rng, p: usize) -> DiagonalStructure {
    let mut d: Vec<f64> = (0..p).map(|_| rng.gen_range(0.5..2.0)).collect();
    if p >= 3 {
        d[2] = d[1];
    }
    d.sort_by(|a, b| b.total_cmp(a));
    if p >= 2 && d[0] == d[p - 1] {
        d[0] *= 1.5;
    }
    DiagonalStructure::new(d).unwrap()
}

/// Random realization satisfying `beta^* - beta = i (T2 - T1) D^-1 (T2 - T1)^*`
/// on `[0, 1]`: `beta = H - (i/2) (T2 - T1) D^-1 (T2 - T1)^*` with `H` Hermitian.
pub fn random_valid(n: usize, p: usize, seed: u64) -> Realization {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let diag = random_diag(&mut rng, p);
    let theta1 = random_matrix(&mut rng, n, p, 0.7);
    let theta2 = random_matrix(&mut rng, n, p, 0.7);
    let h = linalg::hermitian_part(&random_matrix(&mut rng, n, n, 0.8));
    let diff = &theta2 - &theta1;
    let beta = h - &diff * diag.inverse_matrix() * diff.adjoint() * (I * 0.5);
    Realization::new(theta1, theta2, beta, diag, 1.0).unwrap()
}

/// Random realization with `theta1 = theta2` and Hermitian `beta`. Its kernel
/// is continuous across the lines `d_i x = d_j t`, and scaling `theta2` by a
/// real factor keeps that property.
pub fn random_hermitian(n: usize, p: usize, seed: u64) -> Realization {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let diag = random_diag(&mut rng, p);
    let theta = random_matrix(&mut rng, n, p, 0.7);
    let beta = linalg::hermitian_part(&random_matrix(&mut rng, n, n, 0.8));
    Realization::new(theta.clone(), theta, beta, diag, 1.0).unwrap()
}

/// Copy of `r` with `beta` shifted by `eps * i I`, which breaks the identity.
pub fn perturbed_identity(r: &Realization, eps: f64) -> Realization {
    let beta = r.beta() + linalg::identity(r.n()) * Complex64::new(0.0, eps);
    Realization::new(r.theta1().clone(), r.theta2().clone(), beta, r.diag().clone(), r.length()).unwrap()
}
