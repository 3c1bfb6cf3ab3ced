//! Diagonal structure `D`, realization data `(theta1, theta2, beta)` and the
//! kernels built from them.
//!
//! For `x > 0` the kernel is `k(x) = theta2^* exp(i x beta^*) theta1` and
//! `k(-x) = k(x)^*`. The operator acts as `(S f)_i(x) = f_i(x) + sum_j
//! int_0^l k_ij(d_i x - d_j t) f_j(t) dt` on `L^2_p(0, l)`.

use crate::error::{check_range, Error, Result};
use crate::linalg::{self, c, expm, frobenius, CMatrix, I};
use crate::quadrature::{integrate_scalar, QuadOptions};
use num_complex::Complex64;

/// Sorted diagonal `d_1 >= ... >= d_p > 0` together with its distinct levels.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalStructure {
    d: Vec<f64>,
    levels: Vec<f64>,
    multiplicities: Vec<usize>,
    level_of: Vec<usize>,
}

impl DiagonalStructure {
    /// Fails unless `d` is non-empty, positive, finite and non-increasing.
    pub fn new(d: Vec<f64>) -> Result<Self> {
        if d.is_empty() {
            return Err(Error::Invalid("D must have at least one entry".into()));
        }
        if let Some(bad) = d.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Invalid(format!("D entries must be positive and finite, got {bad}")));
        }
        if let Some(w) = d.windows(2).find(|w| w[0] < w[1]) {
            return Err(Error::Invalid(format!(
                "D entries must be non-increasing, found {} before {}",
                w[0], w[1]
            )));
        }
        let mut levels: Vec<f64> = Vec::new();
        let mut multiplicities: Vec<usize> = Vec::new();
        let mut level_of = Vec::with_capacity(d.len());
        for &v in &d {
            if levels.last() != Some(&v) {
                levels.push(v);
                multiplicities.push(0);
            }
            *multiplicities.last_mut().unwrap() += 1;
            level_of.push(levels.len());
        }
        Ok(Self { d, levels, multiplicities, level_of })
    }

    /// Sorts `d` into non-increasing order first. Returns the structure and
    /// `perm` with `perm[new] = old`.
    pub fn sorted(d: &[f64]) -> Result<(Self, Vec<usize>)> {
        let mut perm: Vec<usize> = (0..d.len()).collect();
        perm.sort_by(|&a, &b| d[b].total_cmp(&d[a]));
        let sorted = perm.iter().map(|&k| d[k]).collect();
        Ok((Self::new(sorted)?, perm))
    }

    pub fn p(&self) -> usize {
        self.d.len()
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn d_max(&self) -> f64 {
        self.d[0]
    }

    /// Number of distinct levels `k`.
    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn multiplicities(&self) -> &[usize] {
        &self.multiplicities
    }

    /// Level `j` (1-based); `level(k + 1) == 0`.
    pub fn level(&self, j: usize) -> f64 {
        assert!(j >= 1 && j <= self.levels.len() + 1, "level index {j} out of range");
        if j == self.levels.len() + 1 {
            0.0
        } else {
            self.levels[j - 1]
        }
    }

    /// 1-based level index of component `i` (0-based).
    pub fn level_of(&self, i: usize) -> usize {
        self.level_of[i]
    }

    pub fn matrix(&self) -> CMatrix {
        linalg::real_diag(&self.d)
    }

    pub fn inverse_matrix(&self) -> CMatrix {
        linalg::real_diag(&self.d.iter().map(|v| 1.0 / v).collect::<Vec<_>>())
    }

    /// Whether component `i` is retained by `P_j`, i.e. its level is below `j`.
    pub fn projector_keeps(&self, j: usize, i: usize) -> bool {
        self.level_of[i] < j
    }

    /// `P_j` for `2 <= j <= k + 1`: identity on level blocks `1..j-1`, zero on
    /// the rest, with `P_{k+1} = I_p`.
    pub fn projector(&self, j: usize) -> Result<CMatrix> {
        let k = self.level_count();
        if j < 2 || j > k + 1 {
            return Err(Error::Invalid(format!("projector index {j} outside 2..={}", k + 1)));
        }
        let diag: Vec<f64> = (0..self.p())
            .map(|i| if self.projector_keeps(j, i) { 1.0 } else { 0.0 })
            .collect();
        Ok(linalg::real_diag(&diag))
    }
}

/// State-space data `(theta1, theta2, beta)` with the diagonal `D` and the
/// interval length `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    theta1: CMatrix,
    theta2: CMatrix,
    beta: CMatrix,
    diag: DiagonalStructure,
    length: f64,
}

impl Realization {
    pub fn new(
        theta1: CMatrix,
        theta2: CMatrix,
        beta: CMatrix,
        diag: DiagonalStructure,
        length: f64,
    ) -> Result<Self> {
        let n = beta.nrows();
        let p = diag.p();
        if n == 0 || beta.ncols() != n {
            return Err(Error::Invalid(format!(
                "beta must be a non-empty square matrix, got {}x{}",
                beta.nrows(),
                beta.ncols()
            )));
        }
        for (name, t) in [("theta1", &theta1), ("theta2", &theta2)] {
            if t.shape() != (n, p) {
                return Err(Error::Invalid(format!(
                    "{name} must be {n}x{p}, got {}x{}",
                    t.nrows(),
                    t.ncols()
                )));
            }
        }
        linalg::ensure_finite(&theta1, "theta1")?;
        linalg::ensure_finite(&theta2, "theta2")?;
        linalg::ensure_finite(&beta, "beta")?;
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::Invalid(format!("interval length must be positive, got {length}")));
        }
        Ok(Self { theta1, theta2, beta, diag, length })
    }

    pub fn theta1(&self) -> &CMatrix {
        &self.theta1
    }

    pub fn theta2(&self) -> &CMatrix {
        &self.theta2
    }

    pub fn beta(&self) -> &CMatrix {
        &self.beta
    }

    pub fn diag(&self) -> &DiagonalStructure {
        &self.diag
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn n(&self) -> usize {
        self.beta.nrows()
    }

    pub fn p(&self) -> usize {
        self.diag.p()
    }

    /// `a = d_1 l`.
    pub fn a(&self) -> f64 {
        self.diag.d_max() * self.length
    }

    /// Same data on a different interval length.
    pub fn with_length(&self, length: f64) -> Result<Self> {
        Self::new(self.theta1.clone(), self.theta2.clone(), self.beta.clone(), self.diag.clone(), length)
    }

    /// Same data with `theta2` scaled by `factor`.
    pub fn with_scaled_theta2(&self, factor: Complex64) -> Self {
        let mut r = self.clone();
        r.theta2 *= factor;
        r
    }

    /// `|| beta^* - beta - i (theta2 - theta1) D^-1 (theta2 - theta1)^* ||_F`.
    pub fn identity_residual(&self) -> f64 {
        let diff = &self.theta2 - &self.theta1;
        let rhs = &diff * self.diag.inverse_matrix() * diff.adjoint() * I;
        frobenius(&(self.beta.adjoint() - &self.beta - rhs))
    }

    pub fn identity_tolerance(&self) -> f64 {
        1e-10 * (1.0 + frobenius(&self.beta))
    }

    /// Enforces the identity required by the inverse-problem pipeline.
    pub fn validate_identity(&self) -> Result<()> {
        let residual = self.identity_residual();
        let tol = self.identity_tolerance();
        if residual <= tol {
            Ok(())
        } else {
            Err(Error::IdentityViolated { residual, tol })
        }
    }

    /// Largest imaginary part over the spectrum of `beta`.
    pub fn spectrum_max_imag(&self) -> Result<f64> {
        Ok(linalg::eigenvalues(&self.beta)?
            .iter()
            .map(|z| z.im)
            .fold(f64::NEG_INFINITY, f64::max))
    }

    /// `exp(i x beta^*)`.
    pub fn exp_i_beta_star(&self, x: f64) -> Result<CMatrix> {
        Ok(expm(&(self.beta.adjoint() * c(0.0, x)))?)
    }

    /// `k(x)` for `|x| <= d_1 l`; `k(0)` is the limit from the right.
    pub fn kernel_k(&self, x: f64) -> Result<CMatrix> {
        let a = self.a();
        check_range("kernel argument", x, -a, a)?;
        let positive = self.theta2.adjoint() * self.exp_i_beta_star(x.abs())? * &self.theta1;
        Ok(if x < 0.0 { positive.adjoint() } else { positive })
    }

    /// `(exp(i x beta^*), int_0^x exp(i u beta^*) du)` from one exponential of
    /// the augmented matrix `[[i beta^*, I], [0, 0]]`.
    fn exp_and_integral(&self, x: f64) -> Result<(CMatrix, CMatrix)> {
        let n = self.n();
        let aug = linalg::block2x2(
            &(self.beta.adjoint() * I),
            &linalg::identity(n),
            &linalg::zeros(n, n),
            &linalg::zeros(n, n),
        );
        let e = expm(&(aug * c(x, 0.0)))?;
        Ok((linalg::block(&e, 0, 0, n, n), linalg::block(&e, 0, n, n, n)))
    }

    /// `s(x) = I/2 + D^-1 theta2^* (int_0^x exp(i u beta^*) du) theta1` for `x >= 0`.
    pub fn s_function(&self, x: f64) -> Result<CMatrix> {
        check_range("s argument", x, 0.0, f64::MAX)?;
        let (_, integral) = self.exp_and_integral(x)?;
        let p = self.p();
        Ok(linalg::identity(p) * c(0.5, 0.0)
            + self.diag.inverse_matrix() * self.theta2.adjoint() * integral * &self.theta1)
    }

    /// `s` on the whole line, extended by `s(-x) = -D^-1 s(x)^* D`.
    pub fn s_signed(&self, u: f64) -> Result<CMatrix> {
        if u >= 0.0 {
            self.s_function(u)
        } else {
            let s = self.s_function(-u)?;
            Ok(-(self.diag.inverse_matrix() * s.adjoint() * self.diag.matrix()))
        }
    }

    /// The D-difference kernel `s(x, t)` with entries `s_ij(d_i x - d_j t)`.
    pub fn s_two_point(&self, x: f64, t: f64) -> Result<CMatrix> {
        let p = self.p();
        let d = self.diag.d();
        let mut out = linalg::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                out[(i, j)] = self.s_signed(d[i] * x - d[j] * t)?[(i, j)];
            }
        }
        Ok(out)
    }

    /// `Phi_1(x)` with entries `d_i s_ij(d_i x)`, for `x` in `[0, l]`.
    pub fn phi1(&self, x: f64) -> Result<CMatrix> {
        check_range("Phi_1 argument", x, 0.0, self.length)?;
        self.phi1_unchecked(x.clamp(0.0, self.length))
    }

    /// `Phi_1` without the `[0, l]` domain check (the formula holds for any `x >= 0`).
    pub(crate) fn phi1_unchecked(&self, x: f64) -> Result<CMatrix> {
        let p = self.p();
        let mut out = linalg::zeros(p, p);
        let levels = self.diag.levels().to_vec();
        for level in levels {
            let s = self.s_function(level * x)?;
            for i in (0..p).filter(|&i| self.diag.d()[i] == level) {
                for j in 0..p {
                    out[(i, j)] = s[(i, j)] * level;
                }
            }
        }
        Ok(out)
    }
}

/// `Upsilon_ij(x, t)` for `Q(x, t) = Q1(x) Q2(t)`, evaluated by adaptive
/// quadrature to `1e-9` absolute.
#[allow(clippy::too_many_arguments)]
pub fn upsilon_entry<F1, F2>(
    q1: F1,
    q2: F2,
    diag: &DiagonalStructure,
    length: f64,
    i: usize,
    j: usize,
    x: f64,
    t: f64,
) -> Result<Complex64>
where
    F1: Fn(f64) -> CMatrix,
    F2: Fn(f64) -> CMatrix,
{
    check_range("x", x, 0.0, length)?;
    check_range("t", t, 0.0, length)?;
    let p = diag.p();
    if i >= p || j >= p {
        return Err(Error::Invalid(format!("component index ({i}, {j}) outside 0..{p}")));
    }
    let (di, dj) = (diag.d()[i], diag.d()[j]);
    let lower = di * x + dj * t;
    let upper = (di * (2.0 * length - x) + dj * t).min(di * x + dj * (2.0 * length - t));
    if upper <= lower {
        return Ok(c(0.0, 0.0));
    }
    let integrand = |u: f64| {
        let xi = (u + di * x - dj * t) / (2.0 * di);
        let eta = (u - di * x + dj * t) / (2.0 * dj);
        let left = q1(xi);
        let right = q2(eta);
        (left.row(i) * right.column(j))[(0, 0)]
    };
    let (v, _) = integrate_scalar(integrand, lower, upper, &[], QuadOptions::absolute(1e-9));
    Ok(v / (2.0 * di * dj))
}
