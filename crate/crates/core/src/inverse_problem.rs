//! Weyl function of a realization, its Herglotz data, and recovery of the
//! canonical system `W' = i lambda J H W` whose Weyl function it is.

use crate::error::{check_range, Error, Result};
use crate::inversion::InverseKernel;
use crate::kernel::{DiagonalStructure, Realization};
use crate::linalg::{self, c, frobenius, CMatrix, I};
use crate::quadrature::{integrate, QuadOptions};
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;

/// `phi(lambda) = (i/2) D + T1^* (beta - lambda I)^-1 T2` for a realization
/// satisfying the structure identity.
#[derive(Debug, Clone)]
pub struct WeylFunction {
    realization: Realization,
    spectrum: Vec<Complex64>,
}

impl WeylFunction {
    pub fn new(r: &Realization) -> Result<Self> {
        r.validate_identity()?;
        let spectrum = linalg::eigenvalues(r.beta())?;
        Ok(Self { realization: r.clone(), spectrum })
    }

    pub fn realization(&self) -> &Realization {
        &self.realization
    }

    /// Eigenvalues of `beta`.
    pub fn poles(&self) -> &[Complex64] {
        &self.spectrum
    }

    pub fn eval(&self, lambda: Complex64) -> Result<CMatrix> {
        let r = &self.realization;
        if !(lambda.re.is_finite() && lambda.im.is_finite()) {
            return Err(Error::Invalid(format!("lambda = {lambda} is not finite")));
        }
        if self.spectrum.iter().any(|z| (z - lambda).norm() <= 1e-12 * (1.0 + lambda.norm())) {
            return Err(Error::Pole { lambda });
        }
        let shifted = r.beta() - linalg::identity(r.n()) * lambda;
        let resolvent = linalg::solve(&shifted, r.theta2()).map_err(|e| match e {
            linalg::LinalgError::Singular { .. } => Error::Pole { lambda },
            other => other.into(),
        })?;
        Ok(r.diag().matrix() * (I * 0.5) + r.theta1().adjoint() * resolvent)
    }

    /// `Im phi = (phi - phi^*) / 2i`.
    pub fn imag_part(&self, lambda: Complex64) -> Result<CMatrix> {
        let phi = self.eval(lambda)?;
        Ok((&phi - phi.adjoint()) * c(0.0, -0.5))
    }
}

/// Absolutely continuous density and point masses of the measure in the
/// Herglotz representation of `phi`.
#[derive(Debug, Clone)]
pub struct HerglotzData {
    realization: Realization,
    /// `(z_k, nu_k)`, ascending in `z_k`.
    pub jumps: Vec<(f64, CMatrix)>,
}

impl HerglotzData {
    /// `zeta(t) = I - i D^-1 (T2 - T1)^* (t I - beta)^-1 T2`.
    pub fn zeta(&self, t: f64) -> Result<CMatrix> {
        let r = &self.realization;
        if self.jumps.iter().any(|(z, _)| (z - t).abs() <= 1e-12 * (1.0 + t.abs())) {
            return Err(Error::Pole { lambda: c(t, 0.0) });
        }
        let shifted = linalg::identity(r.n()) * c(t, 0.0) - r.beta();
        let res = linalg::solve(&shifted, r.theta2()).map_err(|_| Error::Pole { lambda: c(t, 0.0) })?;
        let diff = r.theta2() - r.theta1();
        Ok(linalg::identity(r.p()) - r.diag().inverse_matrix() * diff.adjoint() * res * I)
    }

    /// `rho(t) = zeta(t)^* D zeta(t) / 2 pi`.
    pub fn density(&self, t: f64) -> Result<CMatrix> {
        let z = self.zeta(t)?;
        Ok(z.adjoint() * self.realization.diag().matrix() * z * c(0.5 / PI, 0.0))
    }
}

/// Herglotz data of `phi`. Real eigenvalues of `beta` (`|Im| <= 1e-10`,
/// clustered within `1e-8`) carry the masses `nu_k = T2^* P_k T2`, `P_k` the
/// spectral projector. A defective real eigenvalue is rejected.
pub fn herglotz_data(w: &WeylFunction) -> Result<HerglotzData> {
    let r = w.realization();
    let beta = r.beta();
    let n = r.n();
    let mut real: Vec<f64> = w.poles().iter().filter(|z| z.im.abs() <= 1e-10).map(|z| z.re).collect();
    real.sort_by(f64::total_cmp);
    let mut clusters: Vec<Vec<f64>> = Vec::new();
    for z in real {
        match clusters.last_mut() {
            Some(cl) if z - cl[cl.len() - 1] <= 1e-8 => cl.push(z),
            _ => clusters.push(vec![z]),
        }
    }
    let tol = 1e-7 * (1.0 + frobenius(beta));
    let mut jumps = Vec::with_capacity(clusters.len());
    for cl in clusters {
        let z = cl.iter().sum::<f64>() / cl.len() as f64;
        let shifted = beta - linalg::identity(n) * c(z, 0.0);
        let right = linalg::null_space(&shifted, tol);
        let left = linalg::null_space(&shifted.adjoint(), tol);
        if right.ncols() != cl.len() || left.ncols() != cl.len() {
            return Err(Error::Unsupported(format!(
                "real eigenvalue {z} of beta has algebraic multiplicity {} but {} independent eigenvectors",
                cl.len(),
                right.ncols()
            )));
        }
        let gram = left.adjoint() * &right;
        let projector = &right
            * linalg::solve(&gram, &left.adjoint()).map_err(|_| {
                Error::Unsupported(format!("real eigenvalue {z} of beta is defective"))
            })?;
        let nu = r.theta2().adjoint() * projector * r.theta2();
        jumps.push((z, nu));
    }
    Ok(HerglotzData { realization: r.clone(), jumps })
}

/// Inverse kernel of `S` restricted to `[0, x]` (fundamental solution
/// rebuilt with `l = x`).
pub fn truncated_kernel(r: &Realization, x: f64) -> Result<InverseKernel> {
    InverseKernel::new(&r.with_length(x)?)
}

/// Points in `(0, x)` where `r -> T_x(x, r)` or its factors are not smooth.
fn vplus_breaks(diag: &DiagonalStructure, x: f64) -> Vec<f64> {
    let d = diag.d();
    let mut out = Vec::new();
    for &dj in d {
        for &di in d {
            out.push(di * x / dj);
        }
        for &level in diag.levels() {
            out.push(level * x / dj);
        }
    }
    out.retain(|&b| b > 0.0 && b < x);
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * x);
    out
}

fn vplus_quad_options() -> QuadOptions {
    QuadOptions { abs_tol: 1e-12, rel_tol: 1e-12, max_intervals: 4000 }
}

/// `(V_+^* F)(x) = F(x) + int_0^x T_x(x, r) F(r) dr` where `k` is the inverse
/// kernel on `[0, x]` and `F` is `p x q`.
pub fn vplus_apply<F>(k: &InverseKernel, f: F) -> Result<CMatrix>
where
    F: Fn(f64) -> Result<CMatrix>,
{
    let r = k.realization();
    let x = r.length();
    let p = r.p();
    let d = r.diag().d().to_vec();
    let fx = f(x)?;
    let rows: Vec<CMatrix> = (0..p).map(|i| k.row_factor(i, x)).collect::<Result<_>>()?;
    let mut failure: Option<Error> = None;
    let res = integrate(
        |t| {
            let eval = || -> Result<CMatrix> {
                let mut tm = linalg::zeros(p, p);
                for j in 0..p {
                    let col = k.col_factor(j, t)?;
                    for i in 0..p {
                        tm[(i, j)] = k.combine(&rows[i], &col, d[i] * x > d[j] * t);
                    }
                }
                Ok(tm * f(t)?)
            };
            eval().unwrap_or_else(|e| {
                failure.get_or_insert(e);
                linalg::zeros(p, fx.ncols())
            })
        },
        0.0,
        x,
        &vplus_breaks(r.diag(), x),
        vplus_quad_options(),
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(fx + res.value)
}

/// `V_+^*` applied to a constant `p x q` matrix at `x`. When `x` differs from
/// the length of `k`, the kernel is rebuilt for `[0, x]`.
pub fn vplus_apply_const(k: &InverseKernel, m: &CMatrix, x: f64) -> Result<CMatrix> {
    let r = k.realization();
    check_range("x", x, 0.0, r.length())?;
    if m.nrows() != r.p() {
        return Err(Error::Invalid(format!("expected {} rows, got {}", r.p(), m.nrows())));
    }
    if x <= 1e-14 {
        return Ok(m.clone());
    }
    if (x - r.length()).abs() <= 1e-14 * x {
        vplus_apply(k, |_| Ok(m.clone()))
    } else {
        vplus_apply(&truncated_kernel(r, x)?, |_| Ok(m.clone()))
    }
}

fn beta_star_inv_theta1(r: &Realization) -> Result<CMatrix> {
    linalg::solve(&r.beta().adjoint(), r.theta1()).map_err(|e| match e {
        linalg::LinalgError::Singular { rcond } => {
            Error::Precondition(format!("beta is singular (reciprocal condition {rcond:.3e})"))
        }
        other => other.into(),
    })
}

/// Row `s` of `gamma_0(x)` in closed form, built from `U` and `P^x` on `[0, x]`:
///
/// ```text
/// e_s (T2^* e^{i d_s x beta^*}
///      + [T2^*, T1^*] e^{d_s x A} U(d_s x) (P^x U(d_1 x)^-1 - U(d_s x)^-1 + I - P^x) [I_n; 0])
///     (beta^*)^-1 T1
/// ```
pub fn gamma0(r: &Realization, x: f64, s: usize) -> Result<CMatrix> {
    check_range("x", x, 0.0, r.length())?;
    if s >= r.p() {
        return Err(Error::Invalid(format!("row {s} outside 0..{}", r.p())));
    }
    let right = beta_star_inv_theta1(r)?;
    if x <= 1e-14 {
        return Ok(r.theta2().adjoint().rows(s, 1) * right);
    }
    gamma0_with(&truncated_kernel(r, x)?, s, &right)
}

fn gamma0_with(k: &InverseKernel, s: usize, right: &CMatrix) -> Result<CMatrix> {
    let r = k.realization();
    let x = r.length();
    let n = r.n();
    let fs = k.fundamental();
    let ds = r.diag().d()[s];
    let pc = k.p_cross();
    let id = linalg::identity(2 * n);
    let middle = pc * fs.u_inv(fs.a())? - fs.u_inv(ds * x)? + &id - pc;
    let top = linalg::vstack(&linalg::identity(n), &linalg::zeros(n, n));
    let row = k.row_factor(s, x)? * middle * top;
    let lead = r.theta2().adjoint().rows(s, 1) * r.exp_i_beta_star(ds * x)?;
    Ok((lead + row) * right)
}

/// `gamma_0(x)` as `V_+^*` applied to rows `e_j T2^* e^{i d_j r beta^*} (beta^*)^-1 T1`,
/// by quadrature.
pub fn gamma0_quadrature(r: &Realization, x: f64) -> Result<CMatrix> {
    let right = beta_star_inv_theta1(r)?;
    let f = |t: f64| -> Result<CMatrix> {
        let d = r.diag().d();
        let mut out = linalg::zeros(r.p(), r.n());
        for j in 0..r.p() {
            out.set_row(j, &(r.theta2().adjoint().rows(j, 1) * r.exp_i_beta_star(d[j] * t)?).row(0));
        }
        Ok(out * &right)
    };
    if x <= 1e-14 {
        return f(0.0);
    }
    vplus_apply(&truncated_kernel(r, x)?, f)
}

/// Which formula `recover_gamma` uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaRoute {
    /// `gamma = V_+^* [Phi_1, I]`, quadrature over `Phi_1`.
    Direct,
    /// `gamma = V_+^* [D/2 + i T2^* (beta^*)^-1 T1, I] - i [gamma_0, 0]`; needs `det beta != 0`.
    Closed,
}

fn gamma_limit_at_zero(r: &Realization) -> CMatrix {
    linalg::hstack(&(r.diag().matrix() * c(0.5, 0.0)), &linalg::identity(r.p()))
}

pub fn recover_gamma_route(r: &Realization, x: f64, route: GammaRoute) -> Result<CMatrix> {
    check_range("x", x, 0.0, r.length())?;
    if x <= 1e-14 {
        return Ok(gamma_limit_at_zero(r));
    }
    let k = truncated_kernel(r, x)?;
    gamma_route_with(&k, route)
}

fn gamma_route_with(k: &InverseKernel, route: GammaRoute) -> Result<CMatrix> {
    let r = k.realization();
    let p = r.p();
    match route {
        GammaRoute::Direct => {
            let rp = r.clone();
            let v = vplus_apply(k, move |t| {
                Ok(linalg::hstack(&rp.phi1(t)?, &linalg::identity(p)))
            })?;
            Ok(v)
        }
        GammaRoute::Closed => {
            let right = beta_star_inv_theta1(r)?;
            let m1 = r.diag().matrix() * c(0.5, 0.0) + r.theta2().adjoint() * &right * I;
            let v = vplus_apply(k, |_| Ok(linalg::hstack(&m1, &linalg::identity(p))))?;
            let mut g0 = linalg::zeros(p, p);
            for s in 0..p {
                g0.set_row(s, &gamma0_with(k, s, &right)?.row(0));
            }
            Ok(v - linalg::hstack(&(g0 * I), &linalg::zeros(p, p)))
        }
    }
}

/// `gamma(x)`; the closed route when `beta` is invertible, the direct one otherwise.
pub fn recover_gamma(r: &Realization, x: f64) -> Result<CMatrix> {
    let route = if linalg::rcond(r.beta())? >= linalg::SINGULAR_RCOND {
        GammaRoute::Closed
    } else {
        GammaRoute::Direct
    };
    recover_gamma_route(r, x, route)
}

/// Sampled `gamma(x)` and `H(x) = gamma(x)^* gamma(x)`.
#[derive(Debug, Clone)]
pub struct HamiltonianGrid {
    pub xs: Vec<f64>,
    pub gamma: Vec<CMatrix>,
    pub h: Vec<CMatrix>,
}

impl HamiltonianGrid {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn p(&self) -> usize {
        self.gamma.first().map_or(0, |g| g.nrows())
    }

    /// `max_x || gamma J gamma^* - D ||_F`.
    pub fn identity_residual(&self, diag: &DiagonalStructure) -> f64 {
        let j = linalg::j_signature(diag.p());
        let dm = diag.matrix();
        self.gamma.iter().map(|g| frobenius(&(g * &j * g.adjoint() - &dm))).fold(0.0, f64::max)
    }

    /// `min_x lambda_min(H(x)) / max(1, ||H(x)||)`.
    pub fn min_relative_eigenvalue(&self) -> Result<f64> {
        let mut worst = f64::INFINITY;
        for h in &self.h {
            let ev = linalg::hermitian_eigenvalues(h)?;
            worst = worst.min(ev[0] / frobenius(h).max(1.0));
        }
        Ok(worst)
    }
}

/// `gamma` and `H` at every `x` in `xs` (all in `[0, l]`). The structure
/// identity is enforced first.
pub fn recover_hamiltonian(r: &Realization, xs: &[f64]) -> Result<HamiltonianGrid> {
    r.validate_identity()?;
    for &x in xs {
        check_range("x", x, 0.0, r.length())?;
    }
    let gamma: Vec<CMatrix> = xs.par_iter().map(|&x| recover_gamma(r, x)).collect::<Result<_>>()?;
    let h = gamma.iter().map(|g| g.adjoint() * g).collect();
    Ok(HamiltonianGrid { xs: xs.to_vec(), gamma, h })
}

/// Both routes at `x`: `(direct, closed)`.
pub fn gamma_both_routes(r: &Realization, x: f64) -> Result<(CMatrix, CMatrix)> {
    check_range("x", x, 0.0, r.length())?;
    if x <= 1e-14 {
        let g = gamma_limit_at_zero(r);
        return Ok((g.clone(), g));
    }
    let k = truncated_kernel(r, x)?;
    Ok((gamma_route_with(&k, GammaRoute::Direct)?, gamma_route_with(&k, GammaRoute::Closed)?))
}

/// `2m + 1` uniform samples of `[0, length]`, the layout `matrizant` expects.
pub fn uniform_samples(length: f64, intervals: usize) -> Vec<f64> {
    (0..=intervals).map(|k| length * k as f64 / intervals as f64).collect()
}

fn check_matrizant_grid(g: &HamiltonianGrid) -> Result<f64> {
    let m = g.len();
    if m < 201 || m % 2 == 0 {
        return Err(Error::Precondition(format!(
            "matrizant needs an odd number (at least 201) of uniform samples, got {m}"
        )));
    }
    let h = (g.xs[m - 1] - g.xs[0]) / (m - 1) as f64;
    let uniform = g.xs[0].abs() <= 1e-14
        && g.xs.iter().enumerate().all(|(k, &x)| (x - k as f64 * h).abs() <= 1e-9 * h.max(1.0));
    if !uniform {
        return Err(Error::Precondition("matrizant samples must be uniform and start at 0".into()));
    }
    Ok(h)
}

/// `W(x_{2k}, lambda)` for the even samples `x_0, x_2, ...`; RK4 with step
/// `2h` uses the odd samples as midpoints.
pub fn matrizant_trajectory(g: &HamiltonianGrid, lambda: Complex64) -> Result<Vec<CMatrix>> {
    let h = check_matrizant_grid(g)?;
    let p = g.p();
    let j = linalg::j_signature(p);
    let gen: Vec<CMatrix> = g.h.iter().map(|hx| &j * hx * (I * lambda)).collect();
    let step = c(2.0 * h, 0.0);
    let mut w = linalg::identity(2 * p);
    let mut out = vec![w.clone()];
    for k in 0..(g.len() - 1) / 2 {
        let (g0, gm, g1) = (&gen[2 * k], &gen[2 * k + 1], &gen[2 * k + 2]);
        let k1 = g0 * &w;
        let k2 = gm * (&w + &k1 * (step * 0.5));
        let k3 = gm * (&w + &k2 * (step * 0.5));
        let k4 = g1 * (&w + &k3 * step);
        w = &w + (k1 + k2 * c(2.0, 0.0) + k3 * c(2.0, 0.0) + k4) * (step / 6.0);
        out.push(w.clone());
    }
    Ok(out)
}

/// `W(l, lambda)` for `W' = i lambda J H W`, `W(0) = I`.
pub fn matrizant(g: &HamiltonianGrid, lambda: Complex64) -> Result<CMatrix> {
    Ok(matrizant_trajectory(g, lambda)?.pop().expect("trajectory is never empty"))
}

/// Residuals of `W(l, conj lambda)^* J W(l, lambda) = J` and
/// `W(l, conj lambda)^* = J W(l, lambda)^-1 J`.
pub fn matrizant_j_relations(g: &HamiltonianGrid, lambda: Complex64) -> Result<(f64, f64)> {
    let w = matrizant(g, lambda)?;
    let wc = matrizant(g, lambda.conj())?;
    let j = linalg::j_signature(g.p());
    let first = frobenius(&(wc.adjoint() * &j * &w - &j));
    let second = frobenius(&(wc.adjoint() - &j * linalg::inverse(&w)? * &j));
    Ok((first, second))
}

#[derive(Debug, Clone)]
pub struct WeylCheck {
    /// `int_0^l tr(v^* W^* H W v) dx`, `v = [I; -i phi]`.
    pub lhs: f64,
    /// `tr(Im phi) / Im lambda`.
    pub rhs: f64,
    /// Smallest eigenvalue of `rhs_matrix - lhs_matrix`, relative to `||rhs_matrix||`.
    pub matrix_margin: f64,
}

impl WeylCheck {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs * (1.0 + 1e-3)
    }
}

/// The Weyl-disc inequality at `lambda` over the whole sampled interval.
pub fn weyl_property_check(g: &HamiltonianGrid, w: &WeylFunction, lambda: Complex64) -> Result<WeylCheck> {
    if lambda.im <= 0.0 {
        return Err(Error::Invalid(format!("Im lambda must be positive, got {}", lambda.im)));
    }
    let traj = matrizant_trajectory(g, lambda)?;
    let h2 = 2.0 * (g.xs[g.len() - 1] - g.xs[0]) / (g.len() - 1) as f64;
    let phi = w.eval(lambda)?;
    let p = g.p();
    let v = linalg::vstack(&linalg::identity(p), &(&phi * (-I)));
    // Trapezoid over the even samples, where the trajectory lives.
    let mut lhs_m = linalg::zeros(p, p);
    let last = traj.len() - 1;
    for (k, wk) in traj.iter().enumerate() {
        let wv = wk * &v;
        let term = wv.adjoint() * &g.h[2 * k] * wv;
        let weight = if k == 0 || k == last { 0.5 * h2 } else { h2 };
        lhs_m += term * c(weight, 0.0);
    }
    let rhs_m = (&phi - phi.adjoint()) * c(0.0, -1.0 / (2.0 * lambda.im));
    let lhs = lhs_m.trace().re;
    let rhs = rhs_m.trace().re;
    let margin = linalg::hermitian_eigenvalues(&(&rhs_m - &lhs_m))?[0] / frobenius(&rhs_m).max(1e-300);
    Ok(WeylCheck { lhs, rhs, matrix_margin: margin })
}

#[derive(Debug, Clone)]
pub struct SimilarityFactor {
    pub l: CMatrix,
    /// `[J gamma^* D^-1/2, -J X~^*]`.
    pub l_inv: CMatrix,
    /// `|| L^-1 H_0 L - J gamma^* gamma ||` with `L^-1` from a dense inverse.
    pub residual: f64,
    /// `|| L l_inv - I ||`.
    pub inverse_defect: f64,
}

/// `L` with `L^-1 diag(D, 0) L = J gamma^* gamma`.
pub fn similarity_factor(gamma: &CMatrix, diag: &DiagonalStructure) -> Result<SimilarityFactor> {
    let p = diag.p();
    if gamma.shape() != (p, 2 * p) {
        return Err(Error::Invalid(format!("gamma must be {p}x{}, got {:?}", 2 * p, gamma.shape())));
    }
    let j = linalg::j_signature(p);
    let dm = diag.matrix();
    let defect = frobenius(&(gamma * &j * gamma.adjoint() - &dm));
    if defect > 1e-6 * frobenius(&dm).max(1.0) {
        return Err(Error::Precondition(format!("gamma J gamma^* differs from D by {defect:.3e}")));
    }
    let null = linalg::null_space(&(gamma * &j), 1e-10);
    if null.ncols() != p {
        return Err(Error::Unsupported(format!(
            "null space of gamma J has dimension {} instead of {p}",
            null.ncols()
        )));
    }
    let x = null.adjoint();
    let gram = -(&x * &j * x.adjoint());
    let x_tilde = linalg::hermitian_inv_sqrt(&gram)? * x;
    let d_inv_sqrt = linalg::real_diag(&diag.d().iter().map(|v| v.powf(-0.5)).collect::<Vec<_>>());
    let l = linalg::vstack(&(&d_inv_sqrt * gamma), &x_tilde);
    let l_inv = linalg::hstack(&(&j * gamma.adjoint() * &d_inv_sqrt), &(-(&j * x_tilde.adjoint())));
    let h0 = linalg::block2x2(&dm, &linalg::zeros(p, p), &linalg::zeros(p, p), &linalg::zeros(p, p));
    let dense_inv = linalg::inverse(&l)?;
    let residual = frobenius(&(dense_inv * h0 * &l - &j * gamma.adjoint() * gamma));
    let inverse_defect = frobenius(&(&l * &l_inv - linalg::identity(2 * p)));
    Ok(SimilarityFactor { l, l_inv, residual, inverse_defect })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn close(a: &CMatrix, b: &CMatrix, tol: f64) -> bool {
        frobenius(&(a - b)) <= tol
    }

    #[test]
    fn weyl_zero_theta1_is_constant() {
        let base = fixtures::random_valid(2, 2, 3);
        let t2 = base.theta2().clone();
        // T1 = 0 needs beta^* - beta = i T2 D^-1 T2^*.
        let beta = linalg::hermitian_part(base.beta())
            - &t2 * base.diag().inverse_matrix() * t2.adjoint() * (I * 0.5);
        let r = Realization::new(linalg::zeros(2, 2), t2, beta, base.diag().clone(), 1.0).unwrap();
        let w = WeylFunction::new(&r).unwrap();
        let want = r.diag().matrix() * (I * 0.5);
        assert!(close(&w.eval(c(0.3, 1.0)).unwrap(), &want, 1e-14));
    }

    #[test]
    fn weyl_scalar_case_and_pole() {
        let w = WeylFunction::new(&fixtures::scalar_worked_case()).unwrap();
        for lam in [c(0.0, 1.0), c(2.0, 0.5), c(-3.0, 0.1)] {
            let want = I * 0.5 - 1.0 / (1.0 + lam);
            assert!((w.eval(lam).unwrap()[(0, 0)] - want).norm() < 1e-14);
        }
        assert!(matches!(w.eval(c(-1.0, 0.0)), Err(Error::Pole { .. })));
    }

    #[test]
    fn weyl_rejects_identity_violation() {
        let r = fixtures::perturbed_identity(&fixtures::random_valid(2, 2, 4), 1e-3);
        assert!(matches!(WeylFunction::new(&r), Err(Error::IdentityViolated { .. })));
    }

    #[test]
    fn weyl_is_herglotz_and_has_the_right_limit() {
        for seed in 0..5 {
            let w = WeylFunction::new(&fixtures::random_valid(3, 2, seed)).unwrap();
            for k in 0..4 {
                let lam = c(-2.0 + k as f64, 0.2 + 0.5 * k as f64);
                let ev = linalg::hermitian_eigenvalues(&w.imag_part(lam).unwrap()).unwrap();
                assert!(ev[0] > 0.0, "seed {seed} lambda {lam}: {ev:?}");
            }
            let far = w.eval(c(0.0, 1e6)).unwrap();
            let want = w.realization().diag().matrix() * (I * 0.5);
            assert!(close(&far, &want, 1e-4));
        }
    }

    #[test]
    fn herglotz_scalar_case() {
        let hd = herglotz_data(&WeylFunction::new(&fixtures::scalar_worked_case()).unwrap()).unwrap();
        assert_eq!(hd.jumps.len(), 1);
        assert!((hd.jumps[0].0 + 1.0).abs() < 1e-12);
        assert!((hd.jumps[0].1[(0, 0)] - 1.0).norm() < 1e-12);
        assert!((hd.density(0.3).unwrap()[(0, 0)] - 0.5 / PI).norm() < 1e-14);
    }

    #[test]
    fn herglotz_zero_theta2() {
        let base = fixtures::random_valid(2, 2, 8);
        let t1 = base.theta1().clone();
        let beta = linalg::hermitian_part(base.beta())
            - &t1 * base.diag().inverse_matrix() * t1.adjoint() * (I * 0.5);
        let r = Realization::new(t1, linalg::zeros(2, 2), beta, base.diag().clone(), 1.0).unwrap();
        let hd = herglotz_data(&WeylFunction::new(&r).unwrap()).unwrap();
        assert!(hd.jumps.is_empty());
        let want = r.diag().matrix() * c(0.5 / PI, 0.0);
        assert!(close(&hd.density(0.7).unwrap(), &want, 1e-14));
    }

    #[test]
    fn herglotz_density_is_psd_and_matches_boundary_values() {
        let r = fixtures::random_valid(3, 2, 11);
        let w = WeylFunction::new(&r).unwrap();
        let hd = herglotz_data(&w).unwrap();
        for k in 0..20 {
            let t = -4.0 + 0.41 * k as f64;
            let rho = hd.density(t).unwrap();
            assert!(linalg::hermitian_eigenvalues(&rho).unwrap()[0] >= -1e-12);
            let boundary = w.imag_part(c(t, 1e-7)).unwrap() * c(1.0 / PI, 0.0);
            assert!(close(&rho, &boundary, 1e-5), "t = {t}");
        }
    }

    #[test]
    fn herglotz_masses_match_contour_residues() {
        // Hermitian beta with T1 = T2: every eigenvalue is real.
        let r = fixtures::random_hermitian(3, 2, 5);
        let w = WeylFunction::new(&r).unwrap();
        let hd = herglotz_data(&w).unwrap();
        assert_eq!(hd.jumps.len(), 3);
        for (z, nu) in &hd.jumps {
            assert!(linalg::hermitian_eigenvalues(nu).unwrap()[0] >= -1e-12);
            // (1 / 2 pi i) contour integral of T2^* (zI - beta)^-1 T2 around z.
            let radius = 1e-3;
            let m = 64;
            let mut acc = linalg::zeros(2, 2);
            for k in 0..m {
                let th = 2.0 * PI * k as f64 / m as f64;
                let e = c(th.cos(), th.sin());
                let zeta = c(*z, 0.0) + e * radius;
                let res = linalg::solve(&(linalg::identity(3) * zeta - r.beta()), r.theta2()).unwrap();
                acc += r.theta2().adjoint() * res * (e * radius / m as f64);
            }
            assert!(close(&acc, nu, 1e-9), "z = {z}");
        }
    }

    #[test]
    fn herglotz_rejects_jordan_block() {
        let beta = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        let t = CMatrix::from_row_slice(2, 1, &[c(1.0, 0.0), c(0.5, 0.0)]);
        // Identity holds with T1 = T2 and beta^* - beta anti-Hermitian zero? Not here,
        // so build the Weyl function without validation to reach the eigen analysis.
        let r = Realization::new(t.clone(), t, beta, DiagonalStructure::new(vec![1.0]).unwrap(), 1.0).unwrap();
        let w = WeylFunction { spectrum: linalg::eigenvalues(r.beta()).unwrap(), realization: r };
        assert!(matches!(herglotz_data(&w), Err(Error::Unsupported(_))));
    }

    #[test]
    fn vplus_trivial_cases() {
        let z = fixtures::zero_data(2, vec![1.5, 1.0], 1.0);
        let k = InverseKernel::new(&z).unwrap();
        let m = CMatrix::from_fn(2, 3, |i, j| c(i as f64, j as f64));
        assert!(close(&vplus_apply_const(&k, &m, 0.7).unwrap(), &m, 1e-14));
        let s = fixtures::scalar_worked_case();
        let k = InverseKernel::new(&s).unwrap();
        let one = linalg::identity(1);
        assert!(close(&vplus_apply_const(&k, &one, 0.0).unwrap(), &one, 0.0));
        let small = vplus_apply_const(&k, &one, 1e-6).unwrap();
        assert!(close(&small, &one, 1e-5));
    }

    #[test]
    fn vplus_scalar_matches_closed_form() {
        // On [0, x] the scalar inverse kernel is -e^{i(r - x)} / (1 + x).
        let s = fixtures::scalar_worked_case();
        let k = InverseKernel::new(&s).unwrap();
        for &x in &[0.25, 0.5, 1.0] {
            let got = vplus_apply_const(&k, &linalg::identity(1), x).unwrap()[(0, 0)];
            let integral = (c(1.0, 0.0) - c(0.0, -x).exp()) * I / (1.0 + x);
            assert!((got - (1.0 + integral)).norm() < 1e-10, "x = {x}: {got}");
        }
    }

    #[test]
    fn gamma0_zero_theta1_vanishes() {
        let base = fixtures::random_valid(2, 2, 3);
        let t2 = base.theta2().clone();
        let beta = linalg::hermitian_part(base.beta())
            - &t2 * base.diag().inverse_matrix() * t2.adjoint() * (I * 0.5);
        let r = Realization::new(linalg::zeros(2, 2), t2, beta, base.diag().clone(), 1.0).unwrap();
        for s in 0..2 {
            assert!(frobenius(&gamma0(&r, 0.6, s).unwrap()) < 1e-14);
        }
    }

    #[test]
    fn gamma0_closed_form_matches_quadrature() {
        for r in [fixtures::scalar_worked_case(), fixtures::random_valid(3, 3, 6)] {
            for &x in &[0.3, 1.0] {
                let quad = gamma0_quadrature(&r, x).unwrap();
                for s in 0..r.p() {
                    let closed = gamma0(&r, x, s).unwrap();
                    assert!(close(&closed, &quad.rows(s, 1).into_owned(), 1e-8), "x = {x}, s = {s}");
                }
            }
        }
    }

    #[test]
    fn gamma_limit_and_routes() {
        let r = fixtures::scalar_worked_case();
        let g0 = recover_gamma(&r, 0.0).unwrap();
        assert!(close(&g0, &CMatrix::from_row_slice(1, 2, &[c(0.5, 0.0), c(1.0, 0.0)]), 0.0));
        for &x in &[0.25, 0.5, 1.0] {
            let (a, b) = gamma_both_routes(&r, x).unwrap();
            assert!(close(&a, &b, 1e-6 * frobenius(&a)), "x = {x}");
        }
        let small = recover_gamma_route(&r, 1e-7, GammaRoute::Direct).unwrap();
        assert!(close(&small, &g0, 1e-6));
    }

    #[test]
    fn zero_data_hamiltonian_is_constant() {
        let r = fixtures::zero_data(2, vec![2.0, 1.0], 1.0);
        let g = recover_hamiltonian(&r, &[0.0, 0.3, 1.0]).unwrap();
        let d = r.diag().matrix();
        let want = linalg::block2x2(
            &(&d * &d * c(0.25, 0.0)),
            &(&d * c(0.5, 0.0)),
            &(&d * c(0.5, 0.0)),
            &linalg::identity(2),
        );
        for h in &g.h {
            assert!(close(h, &want, 1e-13));
        }
    }

    #[test]
    fn recovered_gamma_is_j_isometric() {
        let r = fixtures::random_valid(2, 3, 9);
        let g = recover_hamiltonian(&r, &[0.1, 0.45, 0.8, 1.0]).unwrap();
        assert!(g.identity_residual(r.diag()) <= 1e-7 * frobenius(&r.diag().matrix()));
        assert!(g.min_relative_eigenvalue().unwrap() >= -1e-8);
    }

    #[test]
    fn recovery_rejects_identity_violation() {
        let r = fixtures::perturbed_identity(&fixtures::random_valid(2, 2, 1), 1e-3);
        assert!(matches!(recover_hamiltonian(&r, &[0.5]), Err(Error::IdentityViolated { .. })));
    }

    #[test]
    fn matrizant_trivial_and_grid_checks() {
        let r = fixtures::scalar_worked_case();
        let g = recover_hamiltonian(&r, &uniform_samples(1.0, 200)).unwrap();
        assert!(close(&matrizant(&g, c(0.0, 0.0)).unwrap(), &linalg::identity(2), 0.0));
        let (a, b) = matrizant_j_relations(&g, c(1.0, 0.7)).unwrap();
        assert!(a <= 1e-7 && b <= 1e-6, "{a} {b}");
        let short = recover_hamiltonian(&r, &uniform_samples(1.0, 100)).unwrap();
        assert!(matches!(matrizant(&short, c(1.0, 0.0)), Err(Error::Precondition(_))));
    }

    #[test]
    fn weyl_inequality_zero_and_scalar() {
        let z = fixtures::zero_data(1, vec![1.0], 1.0);
        let g = recover_hamiltonian(&z, &uniform_samples(1.0, 200)).unwrap();
        let chk = weyl_property_check(&g, &WeylFunction::new(&z).unwrap(), c(0.0, 1.0)).unwrap();
        assert!(chk.lhs < chk.rhs && chk.holds());
        let s = fixtures::scalar_worked_case();
        let w = WeylFunction::new(&s).unwrap();
        let mut prev = 0.0;
        for len in [0.5, 1.0] {
            let g = recover_hamiltonian(&s, &uniform_samples(len, 200)).unwrap();
            let chk = weyl_property_check(&g, &w, c(0.0, 1.0)).unwrap();
            assert!(chk.holds() && chk.matrix_margin >= -1e-3, "{chk:?}");
            assert!(chk.lhs >= prev);
            prev = chk.lhs;
        }
        assert!(weyl_property_check(&g, &w, c(1.0, 0.0)).is_err());
    }

    #[test]
    fn similarity_examples() {
        let diag = DiagonalStructure::new(vec![2.0, 1.0]).unwrap();
        let gamma = linalg::hstack(&(diag.matrix() * c(0.5, 0.0)), &linalg::identity(2));
        let f = similarity_factor(&gamma, &diag).unwrap();
        assert!(f.residual <= 1e-8 && f.inverse_defect <= 1e-9);
        let s = fixtures::scalar_worked_case();
        let g = recover_gamma(&s, 0.5).unwrap();
        let f = similarity_factor(&g, s.diag()).unwrap();
        assert!(f.residual <= 1e-7 && f.inverse_defect <= 1e-9);
        let bad = CMatrix::from_row_slice(1, 2, &[c(1.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(similarity_factor(&bad, s.diag()), Err(Error::Precondition(_))));
    }
}
