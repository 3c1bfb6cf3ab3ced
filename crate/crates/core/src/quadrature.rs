//! Adaptive Gauss–Kronrod (7/15) quadrature for matrix-valued integrands.

use crate::linalg::{frobenius, CMatrix};
use num_complex::Complex64;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7).
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { abs_tol: 1e-10, rel_tol: 1e-10, max_intervals: 2000 }
    }
}

impl QuadOptions {
    pub fn absolute(abs_tol: f64) -> Self {
        Self { abs_tol, rel_tol: 0.0, ..Self::default() }
    }
}

#[derive(Debug, Clone)]
pub struct QuadResult {
    pub value: CMatrix,
    pub error_estimate: f64,
    pub evaluations: usize,
}

struct Panel {
    a: f64,
    b: f64,
    value: CMatrix,
    error: f64,
}

fn gk15<F>(f: &mut F, a: f64, b: f64) -> (CMatrix, f64)
where
    F: FnMut(f64) -> CMatrix,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = &fc * Complex64::from(WGK[7]);
    let mut gauss = &fc * Complex64::from(WG[3]);
    for k in 0..7 {
        let dx = half * XGK[k];
        let s = f(center - dx) + f(center + dx);
        kronrod += &s * Complex64::from(WGK[k]);
        if k % 2 == 1 {
            gauss += &s * Complex64::from(WG[k / 2]);
        }
    }
    let value = kronrod * Complex64::from(half);
    let gauss = gauss * Complex64::from(half);
    let err = frobenius(&(&value - &gauss));
    (value, err)
}

/// Integrates `f` over `[a, b]`, additionally splitting at `breaks`
/// (points where `f` may be non-smooth). Breaks outside `(a, b)` are ignored.
pub fn integrate<F>(mut f: F, a: f64, b: f64, breaks: &[f64], opts: QuadOptions) -> QuadResult
where
    F: FnMut(f64) -> CMatrix,
{
    let mut cuts: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|&t| t > a && t < b)
        .collect();
    cuts.push(a);
    cuts.push(b);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * (1.0 + y.abs()));

    let mut panels: Vec<Panel> = Vec::new();
    let mut evaluations = 0;
    for w in cuts.windows(2) {
        if w[1] > w[0] {
            let (value, error) = gk15(&mut f, w[0], w[1]);
            evaluations += 15;
            panels.push(Panel { a: w[0], b: w[1], value, error });
        }
    }
    if panels.is_empty() {
        let shape = f(a).shape();
        return QuadResult { value: CMatrix::zeros(shape.0, shape.1), error_estimate: 0.0, evaluations: 1 };
    }

    loop {
        let total: CMatrix = panels.iter().skip(1).fold(panels[0].value.clone(), |acc, p| acc + &p.value);
        let err: f64 = panels.iter().map(|p| p.error).sum();
        let target = opts.abs_tol.max(opts.rel_tol * frobenius(&total));
        if err <= target || panels.len() >= opts.max_intervals {
            return QuadResult { value: total, error_estimate: err, evaluations };
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (k, p)| if p.error > acc.1 { (k, p.error) } else { acc });
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if !(mid > p.a && mid < p.b) {
            // Interval collapsed to roundoff; accept what we have.
            panels.push(p);
            let total: CMatrix = panels.iter().skip(1).fold(panels[0].value.clone(), |acc, p| acc + &p.value);
            let err: f64 = panels.iter().map(|p| p.error).sum();
            return QuadResult { value: total, error_estimate: err, evaluations };
        }
        let (lv, le) = gk15(&mut f, p.a, mid);
        let (rv, re) = gk15(&mut f, mid, p.b);
        evaluations += 30;
        panels.push(Panel { a: p.a, b: mid, value: lv, error: le });
        panels.push(Panel { a: mid, b: p.b, value: rv, error: re });
    }
}

/// Scalar convenience wrapper around [`integrate`].
pub fn integrate_scalar<F>(mut f: F, a: f64, b: f64, breaks: &[f64], opts: QuadOptions) -> (Complex64, f64)
where
    F: FnMut(f64) -> Complex64,
{
    let r = integrate(|t| CMatrix::from_element(1, 1, f(t)), a, b, breaks, opts);
    (r.value[(0, 0)], r.error_estimate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    #[test]
    fn polynomial_is_exact() {
        let (v, _) = integrate_scalar(|t| c(t.powi(5) - 2.0 * t, 0.0), 0.0, 2.0, &[], QuadOptions::default());
        assert!((v - c(64.0 / 6.0 - 4.0, 0.0)).norm() < 1e-13);
    }

    #[test]
    fn oscillatory_exponential() {
        let (v, _) = integrate_scalar(|t| c(0.0, 7.0 * t).exp(), 0.0, 3.0, &[], QuadOptions::absolute(1e-12));
        let want = (c(0.0, 21.0).exp() - c(1.0, 0.0)) / c(0.0, 7.0);
        assert!((v - want).norm() < 1e-11);
    }

    #[test]
    fn jump_handled_by_break() {
        let f = |t: f64| c(if t < 0.3 { 1.0 } else { -2.0 }, 0.0);
        let (v, _) = integrate_scalar(f, 0.0, 1.0, &[0.3], QuadOptions::default());
        assert!((v - c(0.3 - 1.4, 0.0)).norm() < 1e-13);
    }

    #[test]
    fn empty_range_is_zero() {
        let r = integrate(|_| CMatrix::from_element(2, 2, c(1.0, 0.0)), 1.0, 1.0, &[], QuadOptions::default());
        assert_eq!(r.value.shape(), (2, 2));
        assert!(frobenius(&r.value) == 0.0);
    }
}
