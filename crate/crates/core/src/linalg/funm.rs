//! Reference matrix functions used as oracles: exponential by Padé
//! scaling-and-squaring and principal logarithm by eigendecomposition with an
//! inverse scaling-and-squaring fallback on the Schur factor.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{operator_norm, re, scalar_principal_log, schur, CMatrix, ONE, ZERO};
use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

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
const THETA13: f64 = 5.371920351148152;

/// `e^m` via the degree-13 diagonal Padé approximant with scaling and squaring.
pub fn matrix_exp_oracle(m: &CMatrix) -> CMatrix {
    let n = m.dim();
    let norm1 = m.norm_one();
    let s = if norm1 > THETA13 { (norm1 / THETA13).log2().ceil() as i32 } else { 0 };
    let a = m.scale_re(0.5_f64.powi(s));
    let id = CMatrix::identity(n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = |k: usize| re(PADE13[k]);

    let inner_u = &(&a6.scale(b(13)) + &a4.scale(b(11))) + &a2.scale(b(9));
    let tail_u = &(&(&a6.scale(b(7)) + &a4.scale(b(5))) + &a2.scale(b(3))) + &id.scale(b(1));
    let u = &a * &(&(&a6 * &inner_u) + &tail_u);
    let inner_v = &(&a6.scale(b(12)) + &a4.scale(b(10))) + &a2.scale(b(8));
    let tail_v = &(&(&a6.scale(b(6)) + &a4.scale(b(4))) + &a2.scale(b(2))) + &id.scale(b(0));
    let v = &(&a6 * &inner_v) + &tail_v;

    let p = &v + &u;
    let qd = &v - &u;
    // V − U is well conditioned for ‖A‖₁ ≤ θ₁₃.
    let mut r = qd.solve(&p).expect("Padé denominator is nonsingular after scaling");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LogMethod {
    Eigendecomposition,
    InverseScalingSquaring,
}

#[derive(Debug, Clone, Copy)]
pub struct LogOptions {
    /// Distance from an eigenvalue to (−∞, 0] treated as touching the cut.
    pub branch_tol: f64,
    /// Largest eigenvector condition number accepted before falling back.
    pub max_eigvec_cond: f64,
}

impl Default for LogOptions {
    fn default() -> Self {
        LogOptions { branch_tol: 1e-12, max_eigvec_cond: 1e8 }
    }
}

/// Principal matrix logarithm with default options.
pub fn matrix_log_oracle(m: &CMatrix) -> Result<CMatrix> {
    matrix_log_oracle_with(m, &LogOptions::default()).map(|(l, _)| l)
}

pub fn matrix_log_oracle_with(m: &CMatrix, opts: &LogOptions) -> Result<(CMatrix, LogMethod)> {
    let sch = schur(m)?;
    let eig = sch.eigenvalues();
    for z in &eig {
        let dist = if z.re <= 0.0 { z.im.abs() } else { z.norm() };
        if dist <= opts.branch_tol {
            return Err(Error::BranchCutViolation { re: z.re, im: z.im });
        }
    }
    let t = sch.t.inner();
    let log_t = match triangular_eigvecs(t) {
        Some(w) if condition(&w) < opts.max_eigvec_cond => {
            let w = CMatrix(w);
            let logs: Vec<Complex64> =
                eig.iter().map(|&z| scalar_principal_log(z)).collect::<Result<_>>()?;
            let winv = w.inverse()?;
            (&(&w * &CMatrix::diag(&logs)) * &winv, LogMethod::Eigendecomposition)
        }
        _ => (log_triangular_iss(t)?, LogMethod::InverseScalingSquaring),
    };
    let out = &(&sch.q * &log_t.0) * &sch.q.adjoint();
    Ok((out, log_t.1))
}

/// Eigenvectors of an upper triangular matrix by back substitution, one per
/// column. `None` when two diagonal entries coincide with a nonzero coupling.
fn triangular_eigvecs(t: &DMatrix<Complex64>) -> Option<DMatrix<Complex64>> {
    let n = t.nrows();
    let scale = t.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let tiny = 1e3 * f64::EPSILON * scale;
    let mut w = DMatrix::<Complex64>::zeros(n, n);
    for k in 0..n {
        let lam = t[(k, k)];
        w[(k, k)] = ONE;
        for i in (0..k).rev() {
            let mut acc = ZERO;
            for j in (i + 1)..=k {
                acc += t[(i, j)] * w[(j, k)];
            }
            let denom = lam - t[(i, i)];
            if denom.norm() <= tiny {
                if acc.norm() <= tiny {
                    w[(i, k)] = ZERO;
                    continue;
                }
                return None;
            }
            w[(i, k)] = acc / denom;
        }
        let nrm = w.column(k).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for i in 0..=k {
            w[(i, k)] /= re(nrm);
        }
    }
    Some(w)
}

fn condition(w: &DMatrix<Complex64>) -> f64 {
    let sv = w.clone().singular_values();
    let max = sv.iter().fold(0.0_f64, |a, &b| a.max(b));
    let min = sv.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Principal square root of an upper triangular matrix.
fn sqrt_triangular(t: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let n = t.nrows();
    let mut r = DMatrix::<Complex64>::zeros(n, n);
    for i in 0..n {
        r[(i, i)] = t[(i, i)].sqrt();
    }
    for d in 1..n {
        for i in 0..n - d {
            let j = i + d;
            let mut acc = t[(i, j)];
            for k in (i + 1)..j {
                acc -= r[(i, k)] * r[(k, j)];
            }
            r[(i, j)] = acc / (r[(i, i)] + r[(j, j)]);
        }
    }
    r
}

/// log T = 2ᵏ·log(T^{1/2ᵏ}), with log(I + X) from Gauss-Legendre quadrature of
/// ∫₀¹ X(I + τX)⁻¹ dτ (the diagonal Padé approximant in partial fractions).
fn log_triangular_iss(t: &DMatrix<Complex64>) -> Result<CMatrix> {
    let n = t.nrows();
    let id = CMatrix::identity(n);
    let mut cur = CMatrix(t.clone());
    let mut k = 0;
    while operator_norm(&(&cur - &id)) > 0.25 {
        if k >= 64 {
            return Err(Error::InvalidArgument("square-root iteration did not contract".into()));
        }
        cur = CMatrix(sqrt_triangular(cur.inner()));
        k += 1;
    }
    let x = &cur - &id;
    let rule = gauss_legendre(16);
    let mut acc = CMatrix::zeros(n);
    for (node, weight) in rule.nodes.iter().zip(&rule.weights) {
        // Map [−1, 1] → [0, 1].
        let tau = 0.5 * (node + 1.0);
        let w = 0.5 * weight;
        let denom = &id + &x.scale_re(tau);
        let term = denom.solve(&x)?;
        acc = &acc + &term.scale_re(w);
    }
    Ok(acc.scale_re(2f64.powi(k)))
}
