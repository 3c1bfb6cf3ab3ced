//! Closed-form inversion of `S`.
//!
//! Through the change of variables `(E f)_j(z) = f_j(z / d_j)` the operator
//! becomes a semiseparable operator on `[0, a]`, `a = d_1 l`, whose
//! generators are `B(y) = e^{-yA} [-T1; T2] D^-1 P_j` and
//! `C(y) = P_j [T2^*, T1^*] e^{yA}` with `A = i diag(beta^*, beta)`. The
//! fundamental solution `U' = B C U`, `U(0) = I`, is piecewise exponential:
//! on the segment `[dt_j l, dt_{j-1} l]`
//!
//! ```text
//! U(y) = e^{-yA} e^{(y - dt_j l)(A + Y_j)} e^{dt_j l A} U(dt_j l),
//! Y_j  = [-T1; T2] D^-1 P_j [T2^*, T1^*].
//! ```
//!
//! The inverse kernel is assembled from `U` and the projector
//! `P^x = [[0, 0], [U22(a)^-1 U21(a), I]]`.

use crate::error::{check_range, Error, Result};
use crate::kernel::{DiagonalStructure, Realization};
use crate::linalg::{self, c, expm, frobenius, CMatrix, CVector, I};
use num_complex::Complex64;

/// One exponential piece of `U`.
#[derive(Debug, Clone)]
pub struct Segment {
    /// Paper-style level index `j` of the projector `P_j` active here.
    pub level_index: usize,
    pub start: f64,
    pub end: f64,
    pub y: CMatrix,
    pub a_cross: CMatrix,
    /// `e^{start A} U(start)`.
    anchor: CMatrix,
    /// `U(start)^-1 e^{-start A}`.
    anchor_inv: CMatrix,
    u_start: CMatrix,
}

impl Segment {
    pub fn u_start(&self) -> &CMatrix {
        &self.u_start
    }
}

#[derive(Debug, Clone)]
pub struct FundamentalSolution {
    n: usize,
    length: f64,
    a: f64,
    diag: DiagonalStructure,
    curly_a: CMatrix,
    b0: CMatrix,
    c0: CMatrix,
    segments: Vec<Segment>,
}

/// `U^-1 = J~^* U^* J~`, falling back to a direct inverse when the
/// unitarity residual is poor.
fn j_unitary_inverse(u: &CMatrix, jt: &CMatrix) -> Result<CMatrix> {
    let inv = jt.adjoint() * u.adjoint() * jt;
    let id = linalg::identity(u.nrows());
    if frobenius(&(u * &inv - &id)) <= 1e-6 {
        Ok(inv)
    } else {
        Ok(linalg::inverse(u)?)
    }
}

impl FundamentalSolution {
    pub fn new(r: &Realization) -> Result<Self> {
        Self::with_extra_breakpoints(r, &[])
    }

    /// Builds `U` with additional artificial breakpoints inside segments.
    /// The result must not depend on them.
    pub fn with_extra_breakpoints(r: &Realization, extra: &[f64]) -> Result<Self> {
        let n = r.n();
        let diag = r.diag().clone();
        let length = r.length();
        let a = r.a();
        let curly_a = linalg::block2x2(
            &(r.beta().adjoint() * I),
            &linalg::zeros(n, n),
            &linalg::zeros(n, n),
            &(r.beta() * I),
        );
        let b0 = linalg::vstack(&(-r.theta1()), r.theta2());
        let c0 = linalg::hstack(&r.theta2().adjoint(), &r.theta1().adjoint());
        let jt = linalg::j_tilde(n);
        let k = diag.level_count();

        let mut segments = Vec::new();
        let mut u_start = linalg::identity(2 * n);
        for j in (2..=k + 1).rev() {
            let lo = diag.level(j) * length;
            let hi = diag.level(j - 1) * length;
            let y = &b0 * diag.inverse_matrix() * diag.projector(j)? * &c0;
            let a_cross = &curly_a + &y;
            let mut cuts: Vec<f64> = extra.iter().copied().filter(|&t| t > lo && t < hi).collect();
            cuts.sort_by(f64::total_cmp);
            cuts.push(hi);
            let mut start = lo;
            for end in cuts {
                let anchor = expm(&(&curly_a * c(start, 0.0)))? * &u_start;
                let anchor_inv = j_unitary_inverse(&u_start, &jt)? * expm(&(&curly_a * c(-start, 0.0)))?;
                let u_end = expm(&(&curly_a * c(-end, 0.0)))? * expm(&(&a_cross * c(end - start, 0.0)))? * &anchor;
                segments.push(Segment {
                    level_index: j,
                    start,
                    end,
                    y: y.clone(),
                    a_cross: a_cross.clone(),
                    anchor,
                    anchor_inv,
                    u_start: u_start.clone(),
                });
                u_start = u_end;
                start = end;
            }
        }
        Ok(Self { n, length, a, diag, curly_a, b0, c0, segments })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn diag(&self) -> &DiagonalStructure {
        &self.diag
    }

    pub fn curly_a(&self) -> &CMatrix {
        &self.curly_a
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// `[-theta1; theta2]`.
    pub fn b0(&self) -> &CMatrix {
        &self.b0
    }

    /// `[theta2^*, theta1^*]`.
    pub fn c0(&self) -> &CMatrix {
        &self.c0
    }

    /// Breakpoints `dt_j l` (ascending, including `0` and `a`).
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.segments.iter().map(|s| s.start).collect();
        b.push(self.a);
        b
    }

    /// Segment holding `y`; a breakpoint belongs to the segment below it.
    fn segment_index(&self, y: f64) -> Result<usize> {
        check_range("y", y, 0.0, self.a)?;
        Ok(self.segments.iter().position(|s| y <= s.end).unwrap_or(self.segments.len() - 1))
    }

    /// Paper-style level index `j` of the segment containing `y`.
    pub fn level_index_at(&self, y: f64) -> Result<usize> {
        Ok(self.segments[self.segment_index(y)?].level_index)
    }

    /// `e^{yA}`.
    pub fn exp_a(&self, y: f64) -> Result<CMatrix> {
        Ok(expm(&(&self.curly_a * c(y, 0.0)))?)
    }

    /// `e^{yA} U(y)`, the factor that appears next to `C` in the kernels.
    pub fn propagated(&self, y: f64) -> Result<CMatrix> {
        let s = &self.segments[self.segment_index(y)?];
        Ok(expm(&(&s.a_cross * c(y - s.start, 0.0)))? * &s.anchor)
    }

    /// `U(y)^-1 e^{-yA}`, the factor that appears next to `B` in the kernels.
    pub fn propagated_inv(&self, y: f64) -> Result<CMatrix> {
        let s = &self.segments[self.segment_index(y)?];
        Ok(&s.anchor_inv * expm(&(&s.a_cross * c(-(y - s.start), 0.0)))?)
    }

    pub fn u(&self, y: f64) -> Result<CMatrix> {
        Ok(self.exp_a(-y)? * self.propagated(y)?)
    }

    pub fn u_inv(&self, y: f64) -> Result<CMatrix> {
        let u = self.u(y)?;
        j_unitary_inverse(&u, &linalg::j_tilde(self.n))
    }

    /// `(B(y), C(y))` with the projector of the segment containing `y`.
    pub fn bc(&self, y: f64) -> Result<(CMatrix, CMatrix)> {
        let j = self.level_index_at(y)?;
        self.bc_with_level(y, j)
    }

    /// `(B(y), C(y))` with an explicitly chosen projector `P_j`.
    pub fn bc_with_level(&self, y: f64, j: usize) -> Result<(CMatrix, CMatrix)> {
        let proj = self.diag.projector(j)?;
        let b = self.exp_a(-y)? * &self.b0 * self.diag.inverse_matrix() * &proj;
        let cm = proj * &self.c0 * self.exp_a(y)?;
        Ok((b, cm))
    }

    /// `H~(y) = J~^* B(y) C(y)`.
    pub fn h_tilde(&self, y: f64) -> Result<CMatrix> {
        let (b, cm) = self.bc(y)?;
        Ok(linalg::j_tilde(self.n).adjoint() * b * cm)
    }

    pub fn u22(&self) -> Result<CMatrix> {
        let ua = self.u(self.a)?;
        Ok(linalg::block(&ua, self.n, self.n, self.n, self.n))
    }
}

/// `(B(y), C(y))` for a realization at `y` in `[0, d_1 l]`.
pub fn build_bc(r: &Realization, y: f64) -> Result<(CMatrix, CMatrix)> {
    check_range("y", y, 0.0, r.a())?;
    let fs = FundamentalSolution::new(r)?;
    fs.bc(y)
}

#[derive(Debug, Clone)]
pub struct SingularReport {
    pub rcond: f64,
    /// Columns span `Ker U22(a)`.
    pub null_basis: CMatrix,
}

#[derive(Debug, Clone)]
pub enum CrossProjector {
    Invertible(CMatrix),
    Singular(SingularReport),
}

/// `P^x`, or a report carrying `Ker U22(a)` when `U22(a)` is singular.
pub fn p_cross(fs: &FundamentalSolution) -> Result<CrossProjector> {
    let n = fs.n;
    let ua = fs.u(fs.a)?;
    let u21 = linalg::block(&ua, n, 0, n, n);
    let u22 = linalg::block(&ua, n, n, n, n);
    // rcond is scale free (always 1 for n = 1), so also compare sigma_min(U22)
    // with the size of U(a) itself.
    let sv = linalg::singular_values(&u22);
    let (smax, smin) = (sv[0], sv[n - 1]);
    if smin <= linalg::SINGULAR_RCOND * frobenius(&ua).max(1.0) {
        let rcond = if smax > 0.0 { smin / smax } else { 0.0 };
        let basis = linalg::null_space(&u22, linalg::SINGULAR_RCOND * frobenius(&ua).max(1.0) / smax.max(1.0));
        return Ok(CrossProjector::Singular(SingularReport { rcond, null_basis: basis }));
    }
    match linalg::solve(&u22, &u21) {
        Ok(x) => Ok(CrossProjector::Invertible(linalg::block2x2(
            &linalg::zeros(n, n),
            &linalg::zeros(n, n),
            &x,
            &linalg::identity(n),
        ))),
        Err(linalg::LinalgError::Singular { rcond }) => {
            let mut basis = linalg::null_space(&u22, 1e-9);
            if basis.ncols() == 0 {
                // Singular by the condition estimate but no singular value under
                // the cut: keep the least significant right singular vector.
                let svd = u22.clone().svd(false, true);
                let v_t = svd.v_t.expect("right singular vectors requested");
                let kmin = (0..n)
                    .min_by(|&x, &y| svd.singular_values[x].total_cmp(&svd.singular_values[y]))
                    .unwrap();
                basis = CMatrix::from_fn(n, 1, |r, _| v_t[(kmin, r)].conj());
            }
            Ok(CrossProjector::Singular(SingularReport { rcond, null_basis: basis }))
        }
        Err(e) => Err(e.into()),
    }
}

/// Evaluator for the kernel `T_ij(x, t)` of `S^-1 = I + int T`.
#[derive(Debug, Clone)]
pub struct InverseKernel {
    realization: Realization,
    fs: FundamentalSolution,
    p_cross: CMatrix,
    below: CMatrix,
}

impl InverseKernel {
    /// Fails with [`Error::Singular`] when `U22(a)` is singular.
    pub fn new(r: &Realization) -> Result<Self> {
        let fs = FundamentalSolution::new(r)?;
        Self::from_fundamental(r, fs)
    }

    pub fn from_fundamental(r: &Realization, fs: FundamentalSolution) -> Result<Self> {
        match p_cross(&fs)? {
            CrossProjector::Invertible(pc) => {
                let below = linalg::identity(2 * fs.n) - &pc;
                Ok(Self { realization: r.clone(), fs, p_cross: pc, below })
            }
            CrossProjector::Singular(rep) => Err(Error::Singular { length: r.length(), rcond: rep.rcond }),
        }
    }

    pub fn realization(&self) -> &Realization {
        &self.realization
    }

    pub fn fundamental(&self) -> &FundamentalSolution {
        &self.fs
    }

    pub fn p_cross(&self) -> &CMatrix {
        &self.p_cross
    }

    /// `e_i [T2^*, T1^*] e^{d_i x A} U(d_i x)` (a `1 x 2n` row).
    pub fn row_factor(&self, i: usize, x: f64) -> Result<CMatrix> {
        let di = self.realization.diag().d()[i];
        Ok(self.fs.c0.rows(i, 1) * self.fs.propagated(di * x)?)
    }

    /// `U(d_j t)^-1 e^{-d_j t A} [-T1; T2] e_j^*` (a `2n x 1` column).
    pub fn col_factor(&self, j: usize, t: f64) -> Result<CMatrix> {
        let dj = self.realization.diag().d()[j];
        Ok(self.fs.propagated_inv(dj * t)? * self.fs.b0.columns(j, 1))
    }

    /// Combines precomputed factors; `above` selects the `d_i x > d_j t` branch.
    pub fn combine(&self, row: &CMatrix, col: &CMatrix, above: bool) -> Complex64 {
        if above {
            (row * &self.below * col)[(0, 0)]
        } else {
            -(row * &self.p_cross * col)[(0, 0)]
        }
    }

    /// `T_ij(x, t)`. On the line `d_i x = d_j t` the limit from `d_i x > d_j t` is returned.
    pub fn entry(&self, i: usize, j: usize, x: f64, t: f64) -> Result<Complex64> {
        let l = self.realization.length();
        check_range("x", x, 0.0, l)?;
        check_range("t", t, 0.0, l)?;
        let p = self.realization.p();
        if i >= p || j >= p {
            return Err(Error::Invalid(format!("component index ({i}, {j}) outside 0..{p}")));
        }
        let d = self.realization.diag().d();
        let above = d[i] * x >= d[j] * t;
        Ok(self.combine(&self.row_factor(i, x)?, &self.col_factor(j, t)?, above))
    }

    /// `T_ij(x, t)` on an explicit branch, for probing the one-sided limits.
    pub fn entry_branch(&self, i: usize, j: usize, x: f64, t: f64, above: bool) -> Result<Complex64> {
        Ok(self.combine(&self.row_factor(i, x)?, &self.col_factor(j, t)?, above))
    }

    /// The full `p x p` matrix `T(x, t)`.
    pub fn matrix(&self, x: f64, t: f64) -> Result<CMatrix> {
        let p = self.realization.p();
        let mut out = linalg::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                out[(i, j)] = self.entry(i, j, x, t)?;
            }
        }
        Ok(out)
    }
}

/// A function in `Ker S`, pulled back to `L^2_p(0, l)`:
/// `f_j(x) = h_j(d_j x)` with `h(y) = C(y) U(y) [0; g]`.
#[derive(Debug, Clone)]
pub struct KernelFunction {
    fs: FundamentalSolution,
    g: CVector,
}

impl KernelFunction {
    pub fn g(&self) -> &CVector {
        &self.g
    }

    pub fn eval(&self, x: f64) -> Result<CVector> {
        check_range("x", x, 0.0, self.fs.length)?;
        let n = self.fs.n;
        let mut lifted = CVector::zeros(2 * n);
        lifted.rows_mut(n, n).copy_from(&self.g);
        let d = self.fs.diag.d();
        let mut out = CVector::zeros(d.len());
        for j in 0..d.len() {
            let row = self.fs.c0.rows(j, 1) * self.fs.propagated(d[j] * x)?;
            out[j] = (row * &lifted)[(0, 0)];
        }
        Ok(out)
    }
}

/// Basis of `Ker S`; empty when `U22(a)` is invertible.
pub fn kernel_basis(fs: &FundamentalSolution) -> Result<Vec<KernelFunction>> {
    match p_cross(fs)? {
        CrossProjector::Invertible(_) => Ok(Vec::new()),
        CrossProjector::Singular(rep) => Ok(rep
            .null_basis
            .column_iter()
            .map(|g| KernelFunction { fs: fs.clone(), g: g.into_owned() })
            .collect()),
    }
}

/// Like [`kernel_basis`], but keeps every direction whose singular value of
/// `U22(a)` is at most `rel_tol * max(1, sigma_max)`. Useful when `U22(a)` is
/// singular only up to the accuracy of a root search.
pub fn kernel_basis_with_tolerance(fs: &FundamentalSolution, rel_tol: f64) -> Result<Vec<KernelFunction>> {
    let basis = linalg::null_space(&fs.u22()?, rel_tol);
    Ok(basis
        .column_iter()
        .map(|g| KernelFunction { fs: fs.clone(), g: g.into_owned() })
        .collect())
}

/// `det U22(a)` after `T2 -> factor T2`.
pub fn scaled_u22_determinant(r: &Realization, factor: f64) -> Result<Complex64> {
    let fs = FundamentalSolution::new(&r.with_scaled_theta2(c(factor, 0.0)))?;
    Ok(fs.u22()?.determinant())
}

/// Real factor near `start` for which `T2 -> factor T2` makes `U22(a)`
/// singular. Gauss–Newton on the real line for `det U22(a)`, derivative by
/// central differences. Returns the factor and `|det|` there.
pub fn singular_scaling(r: &Realization, start: f64) -> Result<(f64, f64)> {
    let mut cval = start;
    let mut f = scaled_u22_determinant(r, cval)?;
    for _ in 0..60 {
        let h = 1e-6 * (1.0 + cval.abs());
        let df = (scaled_u22_determinant(r, cval + h)? - scaled_u22_determinant(r, cval - h)?) / (2.0 * h);
        if df.norm() == 0.0 {
            break;
        }
        let delta = -(df.conj() * f).re / df.norm_sqr();
        cval += delta;
        f = scaled_u22_determinant(r, cval)?;
        if delta.abs() <= 1e-15 * (1.0 + cval.abs()) {
            break;
        }
    }
    if !cval.is_finite() {
        return Err(Error::Unsupported(format!("no singular scaling found near {start}")));
    }
    Ok((cval, f.norm()))
}

/// `x = z / d_j` when `z < d_j l`, `None` in the zero-extension region.
pub fn e_transform_index(diag: &DiagonalStructure, length: f64, j: usize, z: f64) -> Result<Option<f64>> {
    check_range("z", z, 0.0, diag.d_max() * length)?;
    let dj = *diag
        .d()
        .get(j)
        .ok_or_else(|| Error::Invalid(format!("component {j} outside 0..{}", diag.p())))?;
    Ok(if z < dj * length { Some(z / dj) } else { None })
}
