//! Dense complex matrix substrate.
//!
//! Everything in the crate is expressed through [`CMatrix`], a column-major
//! `nalgebra` matrix of `Complex64`. This module adds the handful of
//! operations nalgebra does not provide in the form we need: a
//! scaling-and-squaring matrix exponential, condition-checked solves, and
//! small helpers for the block structures that recur throughout.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Reciprocal condition numbers below this are treated as singular.
pub const SINGULAR_RCOND: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is singular to working precision (reciprocal condition estimate {rcond:.3e})")]
    Singular { rcond: f64 },
    #[error("non-finite entry encountered in {0}")]
    NonFinite(&'static str),
    #[error("{0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, LinalgError>;

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn zeros(rows: usize, cols: usize) -> CMatrix {
    CMatrix::zeros(rows, cols)
}

/// Builds a complex matrix from row-major entries.
pub fn from_row_major(rows: usize, cols: usize, entries: &[Complex64]) -> Result<CMatrix> {
    if entries.len() != rows * cols {
        return Err(LinalgError::Dimension(format!(
            "{} entries supplied for a {rows}x{cols} matrix",
            entries.len()
        )));
    }
    let m = CMatrix::from_row_slice(rows, cols, entries);
    ensure_finite(&m, "matrix entries")?;
    Ok(m)
}

/// Real diagonal matrix with the given diagonal.
pub fn real_diag(values: &[f64]) -> CMatrix {
    let mut m = zeros(values.len(), values.len());
    for (k, &v) in values.iter().enumerate() {
        m[(k, k)] = c(v, 0.0);
    }
    m
}

pub fn ensure_finite(m: &CMatrix, what: &'static str) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(LinalgError::NonFinite(what))
    }
}

pub fn ensure_square(m: &CMatrix, what: &str) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(LinalgError::Dimension(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Induced 1-norm (maximum absolute column sum).
pub fn norm1(m: &CMatrix) -> f64 {
    m.column_iter()
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Stacks four blocks as `[[a, b], [c, d]]`.
pub fn block2x2(a: &CMatrix, b: &CMatrix, cc: &CMatrix, d: &CMatrix) -> CMatrix {
    assert_eq!(a.nrows(), b.nrows());
    assert_eq!(cc.nrows(), d.nrows());
    assert_eq!(a.ncols(), cc.ncols());
    assert_eq!(b.ncols(), d.ncols());
    let (r1, c1) = a.shape();
    let (r2, c2) = d.shape();
    let mut m = zeros(r1 + r2, c1 + c2);
    m.view_mut((0, 0), (r1, c1)).copy_from(a);
    m.view_mut((0, c1), (r1, c2)).copy_from(b);
    m.view_mut((r1, 0), (r2, c1)).copy_from(cc);
    m.view_mut((r1, c1), (r2, c2)).copy_from(d);
    m
}

pub fn hstack(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert_eq!(a.nrows(), b.nrows());
    let mut m = zeros(a.nrows(), a.ncols() + b.ncols());
    m.view_mut((0, 0), a.shape()).copy_from(a);
    m.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    m
}

pub fn vstack(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert_eq!(a.ncols(), b.ncols());
    let mut m = zeros(a.nrows() + b.nrows(), a.ncols());
    m.view_mut((0, 0), a.shape()).copy_from(a);
    m.view_mut((a.nrows(), 0), b.shape()).copy_from(b);
    m
}

/// Copies the `rows x cols` block starting at `(r0, c0)`.
pub fn block(m: &CMatrix, r0: usize, c0: usize, rows: usize, cols: usize) -> CMatrix {
    m.view((r0, c0), (rows, cols)).into_owned()
}

/// `[[0, -I_n], [I_n, 0]]`.
pub fn j_tilde(n: usize) -> CMatrix {
    let id = identity(n);
    block2x2(&zeros(n, n), &(-&id), &id, &zeros(n, n))
}

/// `[[0, I_p], [I_p, 0]]`.
pub fn j_signature(p: usize) -> CMatrix {
    let id = identity(p);
    block2x2(&zeros(p, p), &id, &id, &zeros(p, p))
}

// Padé coefficients b_0..b_m of the diagonal [m/m] approximant to exp.
const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

// 1-norm bounds below which the corresponding Padé degree meets unit roundoff.
const THETA3: f64 = 1.495585217958292e-2;
const THETA5: f64 = 2.539398330063230e-1;
const THETA7: f64 = 9.504178996162932e-1;
const THETA9: f64 = 2.097847961257068e0;
const THETA13: f64 = 5.371920351148152e0;

fn scale(m: &CMatrix, s: f64) -> CMatrix {
    m.map(|z| z * s)
}

/// Evaluates the odd/even split `(U, V)` of the [m/m] Padé approximant for
/// degrees 3..9 from the ascending even powers `A^2, A^4, ...`.
fn pade_low(a: &CMatrix, b: &[f64], evens: &[CMatrix]) -> (CMatrix, CMatrix) {
    let n = a.nrows();
    let id = identity(n);
    let mut odd = scale(&id, b[1]);
    let mut even = scale(&id, b[0]);
    for (k, pow) in evens.iter().enumerate() {
        let idx = 2 * (k + 1);
        if idx + 1 < b.len() {
            odd += scale(pow, b[idx + 1]);
        }
        if idx < b.len() {
            even += scale(pow, b[idx]);
        }
    }
    (a * odd, even)
}

/// Matrix exponential by scaling and squaring around a diagonal Padé
/// approximant (degrees 3, 5, 7, 9, 13 chosen by the 1-norm).
pub fn expm(m: &CMatrix) -> Result<CMatrix> {
    ensure_square(m, "matrix exponential argument")?;
    ensure_finite(m, "matrix exponential argument")?;
    let n = m.nrows();
    if n == 0 {
        return Ok(zeros(0, 0));
    }
    if n == 1 {
        return Ok(CMatrix::from_element(1, 1, m[(0, 0)].exp()));
    }
    let norm = norm1(m);
    let a2 = m * m;
    let (u, v, squarings) = if norm <= THETA9 {
        let a4 = &a2 * &a2;
        if norm <= THETA3 {
            let (u, v) = pade_low(m, &PADE3, &[a2]);
            (u, v, 0)
        } else if norm <= THETA5 {
            let (u, v) = pade_low(m, &PADE5, &[a2, a4]);
            (u, v, 0)
        } else {
            let a6 = &a4 * &a2;
            if norm <= THETA7 {
                let (u, v) = pade_low(m, &PADE7, &[a2, a4, a6]);
                (u, v, 0)
            } else {
                let a8 = &a6 * &a2;
                let (u, v) = pade_low(m, &PADE9, &[a2, a4, a6, a8]);
                (u, v, 0)
            }
        }
    } else {
        let s = (norm / THETA13).log2().ceil().max(0.0) as i32;
        let factor = 0.5f64.powi(s);
        let a = scale(m, factor);
        let a2 = scale(&a2, factor * factor);
        let a4 = &a2 * &a2;
        let a6 = &a4 * &a2;
        let b = &PADE13;
        let id = identity(n);
        let inner_u = scale(&a6, b[13]) + scale(&a4, b[11]) + scale(&a2, b[9]);
        let u = &a
            * (&a6 * inner_u
                + scale(&a6, b[7])
                + scale(&a4, b[5])
                + scale(&a2, b[3])
                + scale(&id, b[1]));
        let inner_v = scale(&a6, b[12]) + scale(&a4, b[10]) + scale(&a2, b[8]);
        let v = &a6 * inner_v
            + scale(&a6, b[6])
            + scale(&a4, b[4])
            + scale(&a2, b[2])
            + scale(&id, b[0]);
        (u, v, s)
    };
    let numer = &v + &u;
    let denom = &v - &u;
    let mut r = denom
        .lu()
        .solve(&numer)
        .ok_or(LinalgError::Singular { rcond: 0.0 })?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    ensure_finite(&r, "matrix exponential result")?;
    Ok(r)
}

/// Eigenvalues with multiplicity (unordered), via the complex Schur form.
pub fn eigenvalues(m: &CMatrix) -> Result<Vec<Complex64>> {
    ensure_square(m, "eigenvalue argument")?;
    ensure_finite(m, "eigenvalue argument")?;
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = m.clone().try_schur(1e-15, 10_000).ok_or_else(|| {
        LinalgError::Unsupported("Schur iteration did not converge".into())
    })?;
    let (_, t) = schur.unpack();
    Ok((0..t.nrows()).map(|k| t[(k, k)]).collect())
}

/// Ascending real eigenvalues of a Hermitian matrix. Only the Hermitian part
/// of `m` is used.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Result<Vec<f64>> {
    ensure_square(m, "Hermitian eigenvalue argument")?;
    let h = hermitian_part(m);
    let mut vals: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

/// Hermitian eigendecomposition `(values, vectors)` with ascending values.
pub fn hermitian_eigen(m: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    ensure_square(m, "Hermitian eigen argument")?;
    let eig = hermitian_part(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vecs = zeros(m.nrows(), m.ncols());
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((vals, vecs))
}

/// `a * b`. Large products are split into real and imaginary parts so the
/// blocked real kernel does the work (three real products, Gauss' trick).
pub fn matmul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert_eq!(a.ncols(), b.nrows(), "matmul dimension mismatch");
    if a.nrows() * a.ncols() * b.ncols() < 64 * 64 * 64 {
        return a * b;
    }
    let (ar, ai) = (a.map(|z| z.re), a.map(|z| z.im));
    let (br, bi) = (b.map(|z| z.re), b.map(|z| z.im));
    let t1 = &ar * &br;
    let t2 = &ai * &bi;
    let t3 = (&ar + &ai) * (&br + &bi);
    CMatrix::from_fn(a.nrows(), b.ncols(), |r, col| {
        let re = t1[(r, col)] - t2[(r, col)];
        Complex64::new(re, t3[(r, col)] - t1[(r, col)] - t2[(r, col)])
    })
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).map(|z| z * 0.5)
}

/// Estimates the reciprocal 1-norm condition number of `m` from its LU
/// factors (Hager's method, a few power-like sweeps).
fn rcond_estimate(m: &CMatrix, lu: &nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>) -> f64 {
    let n = m.nrows();
    let anorm = norm1(m);
    if anorm == 0.0 {
        return 0.0;
    }
    if n <= 64 {
        return match lu.try_inverse() {
            Some(inv) => {
                let inv_norm = norm1(&inv);
                if inv_norm.is_finite() {
                    1.0 / (anorm * inv_norm)
                } else {
                    0.0
                }
            }
            None => 0.0,
        };
    }
    // ||M^{-1}||_1 = ||M^{-*}||_inf; Hager iterates with solves against M and M^*.
    let lu_adj = m.adjoint().lu();
    let mut x = CVector::from_element(n, c(1.0 / n as f64, 0.0));
    let mut est = 0.0;
    for _ in 0..5 {
        let Some(y) = lu.solve(&x) else { return 0.0 };
        let y_norm: f64 = y.iter().map(|z| z.norm()).sum();
        if !y_norm.is_finite() {
            return 0.0;
        }
        if y_norm <= est {
            break;
        }
        est = y_norm;
        let xi = y.map(|z| if z.norm() > 0.0 { z / z.norm() } else { c(1.0, 0.0) });
        let Some(z) = lu_adj.solve(&xi) else { return 0.0 };
        let (jmax, zmax) = z
            .iter()
            .enumerate()
            .map(|(k, v)| (k, v.norm()))
            .fold((0, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc });
        let ztx: f64 = z.dot(&x).norm();
        if zmax <= ztx {
            break;
        }
        x = CVector::zeros(n);
        x[jmax] = c(1.0, 0.0);
    }
    1.0 / (anorm * est)
}

/// Reciprocal condition estimate of a square matrix.
pub fn rcond(m: &CMatrix) -> Result<f64> {
    ensure_square(m, "condition estimate argument")?;
    let lu = m.clone().lu();
    Ok(rcond_estimate(m, &lu))
}

/// Solves `m * x = rhs`, rejecting matrices whose reciprocal condition
/// estimate falls below [`SINGULAR_RCOND`].
pub fn solve(m: &CMatrix, rhs: &CMatrix) -> Result<CMatrix> {
    ensure_square(m, "system matrix")?;
    if rhs.nrows() != m.nrows() {
        return Err(LinalgError::Dimension(format!(
            "right-hand side has {} rows, system has {}",
            rhs.nrows(),
            m.nrows()
        )));
    }
    ensure_finite(m, "system matrix")?;
    ensure_finite(rhs, "right-hand side")?;
    if m.nrows() == 0 {
        return Ok(rhs.clone());
    }
    let lu = m.clone().lu();
    let rc = rcond_estimate(m, &lu);
    if !(rc >= SINGULAR_RCOND) {
        return Err(LinalgError::Singular { rcond: rc });
    }
    lu.solve(rhs).ok_or(LinalgError::Singular { rcond: rc })
}

/// Inverse with the same singularity policy as [`solve`].
pub fn inverse(m: &CMatrix) -> Result<CMatrix> {
    solve(m, &identity(m.nrows()))
}

/// Orthonormal basis (as columns) of the numerical null space of `m`:
/// right singular vectors whose singular value is at most `tol * max(1, sigma_max)`.
pub fn null_space(m: &CMatrix, tol: f64) -> CMatrix {
    let (rows, cols) = m.shape();
    if cols == 0 {
        return zeros(0, 0);
    }
    // Pad to at least square so the SVD returns a full set of right vectors.
    let padded = if rows < cols { vstack(m, &zeros(cols - rows, cols)) } else { m.clone() };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cut = tol * smax.max(1.0);
    let picked: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] <= cut)
        .collect();
    let mut basis = zeros(cols, picked.len());
    for (dst, &k) in picked.iter().enumerate() {
        let row = v_t.row(k);
        for r in 0..cols {
            basis[(r, dst)] = row[r].conj();
        }
    }
    basis
}

/// Singular values in descending order.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// `h^{-1/2}` for a Hermitian positive definite `h`.
pub fn hermitian_inv_sqrt(h: &CMatrix) -> Result<CMatrix> {
    let (vals, vecs) = hermitian_eigen(h)?;
    let top = vals.iter().copied().fold(0.0, f64::max);
    if vals.iter().any(|&v| v <= 1e-14 * top.max(1e-300)) {
        return Err(LinalgError::Unsupported(
            "inverse square root of a matrix that is not positive definite".into(),
        ));
    }
    let scaled = real_diag(&vals.iter().map(|v| v.powf(-0.5)).collect::<Vec<_>>());
    Ok(&vecs * scaled * vecs.adjoint())
}
