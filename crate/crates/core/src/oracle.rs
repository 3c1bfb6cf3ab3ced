//! Independent verification machinery.
//!
//! Nothing here goes through the closed-form fundamental solution: `S` is
//! discretized directly from `k`, the fundamental solution is integrated with
//! RK4 from the generators `B C`, and transforms are done by quadrature.

use crate::error::{Error, Result};
use crate::inversion::InverseKernel;
use crate::kernel::Realization;
use crate::linalg::{self, c, expm, frobenius, CMatrix, CVector, I};
use crate::quadrature::{integrate, QuadOptions};
use num_complex::Complex64;
use rayon::prelude::*;

/// Composite midpoint rule on `[0, length]`: nodes `(b + 1/2) w`, weights `w = length / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub length: f64,
    pub weight: f64,
    pub nodes: Vec<f64>,
}

impl Grid {
    pub fn midpoint(length: f64, n: usize) -> Self {
        let weight = length / n as f64;
        let nodes = (0..n).map(|b| (b as f64 + 0.5) * weight).collect();
        Self { length, weight, nodes }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Nyström matrix of `I + (integral operator)` on `p` stacked copies of a
/// grid; unknown `(i, a)` lives at index `i * N + a`.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub p: usize,
    pub grid: Grid,
    pub matrix: CMatrix,
}

impl DiscreteOperator {
    pub fn index(&self, component: usize, node: usize) -> usize {
        component * self.grid.len() + node
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Samples `f` (returning a `p`-vector) at the grid nodes.
    pub fn sample<F>(&self, f: F) -> Result<CVector>
    where
        F: Fn(f64) -> Result<CVector>,
    {
        let n = self.grid.len();
        let mut v = CVector::zeros(self.p * n);
        for (a, &x) in self.grid.nodes.iter().enumerate() {
            let fx = f(x)?;
            for i in 0..self.p {
                v[i * n + a] = fx[i];
            }
        }
        Ok(v)
    }
}

fn assemble<F>(p: usize, n: usize, entry: F) -> CMatrix
where
    F: Fn(usize, usize, usize, usize) -> Complex64 + Sync,
{
    let dim = p * n;
    // Columns are independent; nalgebra stores column-major.
    let cols: Vec<Vec<Complex64>> = (0..dim)
        .into_par_iter()
        .map(|col| {
            let (j, b) = (col / n, col % n);
            (0..dim).map(|row| entry(row / n, row % n, j, b)).collect()
        })
        .collect();
    let flat: Vec<Complex64> = cols.into_iter().flatten().collect();
    CMatrix::from_vec(dim, dim, flat)
}

fn on_line(u: f64, scale: f64) -> bool {
    u.abs() <= 1e-12 * scale.max(1.0)
}

/// Nyström discretization of `S = I + int k(x, t) . dt`.
///
/// The kernel is factored as `k_ij(d_i x - d_j t) = [e_i T2^* e^{i d_i x beta^*}]
/// [e^{-i d_j t beta^*} T1 e_j^*]` for `d_i x > d_j t` (and the adjoint form
/// below), so only `O(pN)` exponentials are needed. On a line `d_i x = d_j t`
/// the Hermitian mean of the two one-sided values is used, which keeps the
/// matrix exactly Hermitian.
pub fn discretize_s(r: &Realization, n: usize) -> Result<DiscreteOperator> {
    if n < 8 {
        return Err(Error::Invalid(format!("grid size must be at least 8, got {n}")));
    }
    let grid = Grid::midpoint(r.length(), n);
    let p = r.p();
    let d = r.diag().d().to_vec();
    let beta_star = r.beta().adjoint();
    let theta1 = r.theta1();
    let theta2_adj = r.theta2().adjoint();

    // left[i][a] = e_i T2^* e^{i d_i x_a beta^*}, right[j][b] = e^{-i d_j x_b beta^*} T1 e_j^*.
    let factors: Vec<(Vec<CMatrix>, Vec<CMatrix>)> = (0..p)
        .into_par_iter()
        .map(|i| -> Result<_> {
            let mut left = Vec::with_capacity(n);
            let mut right = Vec::with_capacity(n);
            for &x in &grid.nodes {
                let s = d[i] * x;
                left.push(theta2_adj.rows(i, 1) * expm(&(&beta_star * c(0.0, s)))?);
                right.push(expm(&(&beta_star * c(0.0, -s)))? * theta1.columns(i, 1));
            }
            Ok((left, right))
        })
        .collect::<Result<_>>()?;
    let k0 = r.theta2().adjoint() * theta1;
    let w = grid.weight;
    let nodes = &grid.nodes;
    let scale = r.a();
    let matrix = assemble(p, n, |i, a, j, b| {
        let u = d[i] * nodes[a] - d[j] * nodes[b];
        let k = if on_line(u, scale) {
            (k0[(i, j)] + k0[(j, i)].conj()) * 0.5
        } else if u > 0.0 {
            (&factors[i].0[a] * &factors[j].1[b])[(0, 0)]
        } else {
            (&factors[j].0[b] * &factors[i].1[a])[(0, 0)].conj()
        };
        let delta = if i == j && a == b { 1.0 } else { 0.0 };
        c(delta, 0.0) + k * w
    });
    Ok(DiscreteOperator { p, grid, matrix })
}

/// Nyström matrix of `I + int T(x, t) . dt` from the explicit inverse kernel.
/// On a line `d_i x = d_j t` the mean of the two branch limits is used.
pub fn discretize_t(k: &InverseKernel, n: usize) -> Result<DiscreteOperator> {
    if n < 8 {
        return Err(Error::Invalid(format!("grid size must be at least 8, got {n}")));
    }
    let r = k.realization();
    let grid = Grid::midpoint(r.length(), n);
    let p = r.p();
    let d = r.diag().d().to_vec();
    let rows: Vec<Vec<CMatrix>> = (0..p)
        .into_par_iter()
        .map(|i| grid.nodes.iter().map(|&x| k.row_factor(i, x)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let cols: Vec<Vec<CMatrix>> = (0..p)
        .into_par_iter()
        .map(|j| grid.nodes.iter().map(|&t| k.col_factor(j, t)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let w = grid.weight;
    let nodes = &grid.nodes;
    let scale = r.a();
    let matrix = assemble(p, n, |i, a, j, b| {
        let u = d[i] * nodes[a] - d[j] * nodes[b];
        let (row, col) = (&rows[i][a], &cols[j][b]);
        let t = if on_line(u, scale) {
            (k.combine(row, col, true) + k.combine(row, col, false)) * 0.5
        } else {
            k.combine(row, col, u > 0.0)
        };
        let delta = if i == j && a == b { 1.0 } else { 0.0 };
        c(delta, 0.0) + t * w
    });
    Ok(DiscreteOperator { p, grid, matrix })
}

/// `|| M - M^* ||_F / max(1, ||M||_F)`.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    frobenius(&(m - m.adjoint())) / frobenius(m).max(1.0)
}

/// Extreme eigenvalues `(min, max)` of a (numerically) Hermitian operator.
pub fn positivity_spectrum(op: &DiscreteOperator) -> Result<(f64, f64)> {
    let defect = hermitian_defect(&op.matrix);
    if defect > 1e-8 {
        return Err(Error::Precondition(format!(
            "operator is not Hermitian (relative defect {defect:.3e})"
        )));
    }
    // Uniform weights: the weighted similarity transform is the identity.
    let ev = linalg::hermitian_eigenvalues(&op.matrix)?;
    Ok((ev[0], ev[ev.len() - 1]))
}

/// `|| T_N S_N - I ||_F`, which is the Hilbert–Schmidt norm of the error kernel.
pub fn composition_residual(t: &DiscreteOperator, s: &DiscreteOperator) -> f64 {
    let prod = linalg::matmul(&t.matrix, &s.matrix);
    frobenius(&(prod - linalg::identity(s.dim())))
}

/// Discretization of `A = i D int_0^x` on the midpoint grid (half weight on
/// the diagonal).
pub fn discretize_a(r: &Realization, grid: &Grid) -> CMatrix {
    let n = grid.len();
    let p = r.p();
    let d = r.diag().d();
    let w = grid.weight;
    let mut m = linalg::zeros(p * n, p * n);
    for i in 0..p {
        for a in 0..n {
            for b in 0..a {
                m[(i * n + a, i * n + b)] = I * (d[i] * w);
            }
            m[(i * n + a, i * n + a)] = I * (0.5 * d[i] * w);
        }
    }
    m
}

/// Rows `(i, a)` hold `[Phi_1(x_a), I_p]` row `i`.
pub fn discretize_pi(r: &Realization, grid: &Grid) -> Result<CMatrix> {
    let n = grid.len();
    let p = r.p();
    let mut m = linalg::zeros(p * n, 2 * p);
    for (a, &x) in grid.nodes.iter().enumerate() {
        let phi = r.phi1_unchecked(x)?;
        for i in 0..p {
            for j in 0..p {
                m[(i * n + a, j)] = phi[(i, j)];
            }
            m[(i * n + a, p + i)] = c(1.0, 0.0);
        }
    }
    Ok(m)
}

/// `|| A S - S A^* - i Pi J Pi^* || / || S ||` at grid level.
pub fn operator_identity_residual(r: &Realization, n: usize) -> Result<f64> {
    let s = discretize_s(r, n)?;
    let a = discretize_a(r, &s.grid);
    let pi = discretize_pi(r, &s.grid)?;
    let j = linalg::j_signature(r.p());
    let rhs = &pi * j * pi.adjoint() * (I * s.grid.weight);
    let lhs = linalg::matmul(&a, &s.matrix) - linalg::matmul(&s.matrix, &a.adjoint());
    Ok(frobenius(&(lhs - rhs)) / frobenius(&s.matrix))
}

/// `B(y) C(y) = e^{-yA} [-T1; T2] D^-1 P_j [T2^*, T1^*] e^{yA}`, built
/// directly from the realization.
fn generator(r: &Realization, y: f64, level_index: usize) -> Result<CMatrix> {
    let n = r.n();
    let diag = r.diag();
    let b0 = linalg::vstack(&(-r.theta1()), r.theta2());
    let c0 = linalg::hstack(&r.theta2().adjoint(), &r.theta1().adjoint());
    let e_plus = linalg::block2x2(
        &expm(&(r.beta().adjoint() * (I * y)))?,
        &linalg::zeros(n, n),
        &linalg::zeros(n, n),
        &expm(&(r.beta() * (I * y)))?,
    );
    let e_minus = linalg::block2x2(
        &expm(&(r.beta().adjoint() * (I * -y)))?,
        &linalg::zeros(n, n),
        &linalg::zeros(n, n),
        &expm(&(r.beta() * (I * -y)))?,
    );
    Ok(e_minus * b0 * diag.inverse_matrix() * diag.projector(level_index)? * c0 * e_plus)
}

/// RK4 solution of `U' = B(y) C(y) U`, `U(0) = I`, with steps aligned to the
/// breakpoints `dt_j l`.
#[derive(Debug, Clone)]
pub struct Rk4Fundamental {
    realization: Realization,
    /// `(start, end, level_index)` per segment.
    segments: Vec<(f64, f64, usize)>,
    nodes: Vec<f64>,
    node_segment: Vec<usize>,
    values: Vec<CMatrix>,
}

fn rk4_step(r: &Realization, level: usize, y: f64, h: f64, u: &CMatrix) -> Result<CMatrix> {
    let g0 = generator(r, y, level)?;
    let gm = generator(r, y + 0.5 * h, level)?;
    let g1 = generator(r, y + h, level)?;
    let hc = c(h, 0.0);
    let k1 = &g0 * u;
    let k2 = &gm * (u + &k1 * (hc * 0.5));
    let k3 = &gm * (u + &k2 * (hc * 0.5));
    let k4 = &g1 * (u + &k3 * hc);
    Ok(u + (k1 + k2 * c(2.0, 0.0) + k3 * c(2.0, 0.0) + k4) * (hc / 6.0))
}

pub fn rk4_fundamental(r: &Realization, steps: usize) -> Result<Rk4Fundamental> {
    if steps < 100 {
        return Err(Error::Invalid(format!("at least 100 RK4 steps required, got {steps}")));
    }
    let diag = r.diag();
    let k = diag.level_count();
    let a = r.a();
    let l = r.length();
    let segments: Vec<(f64, f64, usize)> =
        (2..=k + 1).rev().map(|j| (diag.level(j) * l, diag.level(j - 1) * l, j)).collect();
    let mut nodes = vec![0.0];
    let mut node_segment = Vec::new();
    let mut values = vec![linalg::identity(2 * r.n())];
    for (s_idx, &(start, end, level)) in segments.iter().enumerate() {
        let count = ((end - start) / a * steps as f64).ceil().max(1.0) as usize;
        let h = (end - start) / count as f64;
        for m in 0..count {
            let y = start + m as f64 * h;
            let next = rk4_step(r, level, y, h, values.last().unwrap())?;
            values.push(next);
            nodes.push(if m + 1 == count { end } else { start + (m + 1) as f64 * h });
            node_segment.push(s_idx);
        }
    }
    Ok(Rk4Fundamental { realization: r.clone(), segments, nodes, node_segment, values })
}

impl Rk4Fundamental {
    pub fn eval(&self, y: f64) -> Result<CMatrix> {
        crate::error::check_range("y", y, 0.0, self.realization.a())?;
        let idx = self.nodes.partition_point(|&t| t <= y).saturating_sub(1);
        let idx = idx.min(self.nodes.len() - 2);
        let base = self.nodes[idx];
        let h = y - base;
        if h == 0.0 {
            return Ok(self.values[idx].clone());
        }
        let level = self.segments[self.node_segment[idx]].2;
        rk4_step(&self.realization, level, base, h, &self.values[idx])
    }

    pub fn step_count(&self) -> usize {
        self.values.len() - 1
    }
}

/// `phi(lambda) = (i/2) D + T1^* (beta - lambda I)^-1 T2`, evaluated directly.
fn weyl_direct(r: &Realization, lambda: Complex64) -> Result<CMatrix> {
    let shifted = r.beta() - linalg::identity(r.n()) * lambda;
    Ok(r.diag().matrix() * (I * 0.5) + r.theta1().adjoint() * linalg::solve(&shifted, r.theta2())?)
}

/// Relative difference between `lambda int_0^X e^{i lambda x} s(x)^* dx D`
/// (adaptive quadrature, `X` chosen so the tail is below `1e-10`) and `phi(lambda)`.
pub fn fourier_weyl_check(r: &Realization, lambda: Complex64) -> Result<f64> {
    if lambda.im < 0.1 {
        return Err(Error::Invalid(format!(
            "Im lambda = {} is too small for a truncated transform (need >= 0.1)",
            lambda.im
        )));
    }
    let xmax = (1e10f64).ln() / lambda.im;
    let breaks: Vec<f64> = (1..64).map(|k| xmax * k as f64 / 64.0).collect();
    let res = integrate(
        |x| {
            let s = r.s_function(x).expect("s is defined for x >= 0");
            s.adjoint() * (I * lambda * x).exp()
        },
        0.0,
        xmax,
        &breaks,
        QuadOptions { abs_tol: 1e-13, rel_tol: 1e-12, max_intervals: 20_000 },
    );
    let lhs = res.value * lambda * r.diag().matrix();
    let rhs = weyl_direct(r, lambda)?;
    Ok(frobenius(&(lhs - &rhs)) / frobenius(&rhs))
}

/// `Pi_x^* S_x^-1 Pi_x` on `[0, x]` with `n` nodes.
pub fn pi_s_inv_pi(r: &Realization, x: f64, n: usize) -> Result<CMatrix> {
    let rx = r.with_length(x)?;
    let s = discretize_s(&rx, n)?;
    let pi = discretize_pi(&rx, &s.grid)?;
    // S is Hermitian positive definite for valid data; Cholesky halves the work.
    let x_sol = match s.matrix.clone().cholesky() {
        Some(ch) => ch.solve(&pi),
        None => linalg::solve(&s.matrix, &pi)?,
    };
    Ok(pi.adjoint() * x_sol * c(s.grid.weight, 0.0))
}

/// Central difference of `x -> Pi_x^* S_x^-1 Pi_x`.
pub fn hamiltonian_fd(r: &Realization, x: f64, n: usize, h: f64) -> Result<CMatrix> {
    let plus = pi_s_inv_pi(r, x + h, n)?;
    let minus = pi_s_inv_pi(r, x - h, n)?;
    Ok((plus - minus) / c(2.0 * h, 0.0))
}

/// `W(l, lambda) = I + i lambda J Pi^* S^-1 (I - lambda A)^-1 Pi` at grid level.
pub fn matrizant_resolvent(r: &Realization, lambda: Complex64, n: usize) -> Result<CMatrix> {
    let s = discretize_s(r, n)?;
    let a = discretize_a(r, &s.grid);
    let pi = discretize_pi(r, &s.grid)?;
    let dim = s.dim();
    let resolvent_pi = linalg::solve(&(linalg::identity(dim) - a * lambda), &pi)?;
    let inner = linalg::solve(&s.matrix, &resolvent_pi)?;
    let p = r.p();
    Ok(linalg::identity(2 * p)
        + linalg::j_signature(p) * pi.adjoint() * inner * (I * lambda * s.grid.weight))
}
