//! Complex Schur decomposition `m = Q·T·Qᴴ` by Householder reduction to
//! Hessenberg form followed by single-shift QR with Wilkinson shifts.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{CMatrix, ONE, ZERO};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Schur {
    /// Unitary factor.
    pub q: CMatrix,
    /// Upper triangular factor; its diagonal holds the eigenvalues.
    pub t: CMatrix,
}

impl Schur {
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        (0..self.t.dim()).map(|i| self.t.get(i, i)).collect()
    }
}

pub fn eigenvalues(m: &CMatrix) -> Result<Vec<Complex64>> {
    Ok(schur(m)?.eigenvalues())
}

pub fn schur(m: &CMatrix) -> Result<Schur> {
    let n = m.dim();
    let mut h = m.inner().clone();
    let mut q = DMatrix::<Complex64>::identity(n, n);
    hessenberg(&mut h, &mut q);
    qr_iterate(&mut h, &mut q)?;
    for j in 0..n {
        for i in (j + 1)..n {
            h[(i, j)] = ZERO;
        }
    }
    Ok(Schur { q: CMatrix(q), t: CMatrix(h) })
}

fn hessenberg(h: &mut DMatrix<Complex64>, q: &mut DMatrix<Complex64>) {
    let n = h.nrows();
    if n < 3 {
        return;
    }
    for k in 0..n - 2 {
        let x: Vec<Complex64> = (k + 1..n).map(|i| h[(i, k)]).collect();
        let alpha_norm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if alpha_norm == 0.0 {
            continue;
        }
        let phase = if x[0].norm() == 0.0 { ONE } else { x[0] / x[0].norm() };
        // v = x + e^{iθ}‖x‖e₁ avoids cancellation in the first component.
        let mut v = x.clone();
        v[0] += phase * alpha_norm;
        let vnorm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        // H ← P·H with P = I − 2vvᴴ/‖v‖².
        for j in 0..n {
            let mut dot = ZERO;
            for (r, vi) in v.iter().enumerate() {
                dot += vi.conj() * h[(k + 1 + r, j)];
            }
            let f = dot * (2.0 / vnorm2);
            for (r, vi) in v.iter().enumerate() {
                h[(k + 1 + r, j)] -= vi * f;
            }
        }
        // H ← H·P and Q ← Q·P.
        for mat in [&mut *h, &mut *q] {
            for i in 0..n {
                let mut dot = ZERO;
                for (r, vi) in v.iter().enumerate() {
                    dot += mat[(i, k + 1 + r)] * vi;
                }
                let f = dot * (2.0 / vnorm2);
                for (r, vi) in v.iter().enumerate() {
                    mat[(i, k + 1 + r)] -= f * vi.conj();
                }
            }
        }
        for i in (k + 2)..n {
            h[(i, k)] = ZERO;
        }
    }
}

/// Rotation `G = [[c, s], [−s̄, c]]` with `G·[x; y] = [r; 0]`.
fn givens(x: Complex64, y: Complex64) -> (f64, Complex64) {
    let ax = x.norm();
    if ax == 0.0 {
        return (0.0, ONE);
    }
    let norm = ax.hypot(y.norm());
    let phase = x / ax;
    (ax / norm, phase * y.conj() / norm)
}

fn qr_iterate(h: &mut DMatrix<Complex64>, q: &mut DMatrix<Complex64>) -> Result<()> {
    let n = h.nrows();
    if n == 1 {
        return Ok(());
    }
    let eps = f64::EPSILON;
    let hnorm = h.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let max_iter = 100 * n;
    let mut hi = n - 1;
    let mut iter = 0usize;
    let mut total = 0usize;

    while hi > 0 {
        let mut l = hi;
        while l > 0 {
            let scale = h[(l - 1, l - 1)].norm() + h[(l, l)].norm();
            let scale = if scale == 0.0 { hnorm } else { scale };
            if h[(l, l - 1)].norm() <= eps * scale {
                h[(l, l - 1)] = ZERO;
                break;
            }
            l -= 1;
        }
        if l == hi {
            hi -= 1;
            iter = 0;
            continue;
        }

        iter += 1;
        total += 1;
        if total > max_iter * n {
            return Err(Error::InvalidArgument("Schur QR iteration did not converge".into()));
        }

        let a = h[(hi - 1, hi - 1)];
        let b = h[(hi - 1, hi)];
        let cc = h[(hi, hi - 1)];
        let d = h[(hi, hi)];
        let mu = if iter.is_multiple_of(11) {
            // Exceptional shift to break cycles.
            d + Complex64::new(cc.norm() * 0.75, 0.0)
        } else {
            let half = (a - d) * 0.5;
            let disc = (half * half + b * cc).sqrt();
            let m1 = (a + d) * 0.5 + disc;
            let m2 = (a + d) * 0.5 - disc;
            if (m1 - d).norm() < (m2 - d).norm() {
                m1
            } else {
                m2
            }
        };

        let mut x = h[(l, l)] - mu;
        let mut y = h[(l + 1, l)];
        for k in l..hi {
            let (cs, sn) = givens(x, y);
            let col_start = if k > l { k - 1 } else { l };
            for j in col_start..n {
                let h1 = h[(k, j)];
                let h2 = h[(k + 1, j)];
                h[(k, j)] = h1 * cs + sn * h2;
                h[(k + 1, j)] = -sn.conj() * h1 + h2 * cs;
            }
            let row_end = (k + 2).min(hi);
            for i in 0..=row_end {
                let h1 = h[(i, k)];
                let h2 = h[(i, k + 1)];
                h[(i, k)] = h1 * cs + h2 * sn.conj();
                h[(i, k + 1)] = -h1 * sn + h2 * cs;
            }
            for i in 0..n {
                let q1 = q[(i, k)];
                let q2 = q[(i, k + 1)];
                q[(i, k)] = q1 * cs + q2 * sn.conj();
                q[(i, k + 1)] = -q1 * sn + q2 * cs;
            }
            if k + 1 < hi {
                x = h[(k + 1, k)];
                y = h[(k + 2, k)];
            }
        }
    }
    Ok(())
}
