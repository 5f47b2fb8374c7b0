//! Dense complex matrix kernel.
//!
//! [`CMatrix`] is a square, finite, complex matrix of dimension at most
//! [`MAX_DIM`]. Everything here is a pure function of its inputs.

mod funm;
mod schur;

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use funm::{matrix_exp_oracle, matrix_log_oracle, matrix_log_oracle_with, LogMethod, LogOptions};
pub use schur::{eigenvalues, schur, Schur};

pub type CVector = DVector<Complex64>;

/// Largest dimension accepted by the matrix constructors.
pub const MAX_DIM: usize = 64;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

#[derive(Clone, PartialEq)]
pub struct CMatrix(DMatrix<Complex64>);

impl CMatrix {
    /// Builds a matrix from row-major entries.
    pub fn new(dim: usize, entries: Vec<Complex64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidMatrix("dimension must be positive".into()));
        }
        if dim > MAX_DIM {
            return Err(Error::InvalidMatrix(format!("dimension {dim} exceeds cap {MAX_DIM}")));
        }
        if entries.len() != dim * dim {
            return Err(Error::InvalidMatrix(format!(
                "expected {} entries for dim {dim}, got {}",
                dim * dim,
                entries.len()
            )));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidMatrix("entries must be finite".into()));
        }
        Ok(CMatrix(DMatrix::from_row_slice(dim, dim, &entries)))
    }

    pub fn from_dmatrix(m: DMatrix<Complex64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidMatrix(format!("{}x{} is not square", m.nrows(), m.ncols())));
        }
        let dim = m.nrows();
        let entries: Vec<Complex64> = m.transpose().iter().copied().collect();
        Self::new(dim, entries)
    }

    /// Real-valued rows, mostly for fixtures and tests.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidMatrix("rows must all have length dim".into()));
        }
        Self::new(dim, rows.iter().flat_map(|r| r.iter().map(|&x| re(x))).collect())
    }

    pub fn identity(dim: usize) -> Self {
        CMatrix(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        CMatrix(DMatrix::zeros(dim, dim))
    }

    pub fn diag(values: &[Complex64]) -> Self {
        CMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(values)))
    }

    pub fn real_diag(values: &[f64]) -> Self {
        Self::diag(&values.iter().map(|&x| re(x)).collect::<Vec<_>>())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.0[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.0[(i, j)] = v;
    }

    pub fn inner(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<Complex64> {
        self.0
    }

    /// Row-major entries.
    pub fn entries(&self) -> Vec<Complex64> {
        self.0.transpose().iter().copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn scale(&self, s: Complex64) -> Self {
        CMatrix(&self.0 * s)
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(re(s))
    }

    /// `self + s·I`.
    pub fn shift(&self, s: Complex64) -> Self {
        let mut m = self.0.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += s;
        }
        CMatrix(m)
    }

    pub fn adjoint(&self) -> Self {
        CMatrix(self.0.adjoint())
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    pub fn mul_vec(&self, v: &CVector) -> CVector {
        &self.0 * v
    }

    pub fn powi(&self, n: u32) -> Self {
        let mut out = CMatrix::identity(self.dim());
        for _ in 0..n {
            out = &out * self;
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        (0..self.dim())
            .map(|j| self.0.column(j).iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.dim())
            .map(|i| self.0.row(i).iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Solves `self · X = rhs` by LU with partial pivoting.
    pub fn solve(&self, rhs: &CMatrix) -> Result<CMatrix> {
        let lu = self.0.clone().lu();
        check_pivots(&lu.u(), self.norm_inf(), ZERO)?;
        lu.solve(&rhs.0)
            .map(CMatrix)
            .ok_or(Error::SingularResolvent { re: 0.0, im: 0.0 })
    }

    pub fn solve_vec(&self, rhs: &CVector) -> Result<CVector> {
        let lu = self.0.clone().lu();
        check_pivots(&lu.u(), self.norm_inf(), ZERO)?;
        lu.solve(rhs).ok_or(Error::SingularResolvent { re: 0.0, im: 0.0 })
    }

    pub fn inverse(&self) -> Result<CMatrix> {
        self.solve(&CMatrix::identity(self.dim()))
    }

    /// Pairwise sum in slice order, so the rounding pattern depends only on
    /// the order of `terms`.
    pub fn pairwise_sum(terms: &[CMatrix]) -> Option<CMatrix> {
        match terms.len() {
            0 => None,
            1 => Some(terms[0].clone()),
            n => {
                let (l, r) = terms.split_at(n / 2);
                let a = Self::pairwise_sum(l)?;
                let b = Self::pairwise_sum(r)?;
                Some(&a + &b)
            }
        }
    }
}

fn check_pivots(u: &DMatrix<Complex64>, scale: f64, lambda: Complex64) -> Result<()> {
    let n = u.nrows();
    let floor = (n as f64) * f64::EPSILON * scale.max(f64::MIN_POSITIVE);
    for i in 0..n {
        if u[(i, i)].norm() <= floor {
            return Err(Error::SingularResolvent { re: lambda.re, im: lambda.im });
        }
    }
    Ok(())
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CMatrix{}", self.dim())?;
        let rows: Vec<Vec<String>> = (0..self.dim())
            .map(|i| {
                (0..self.dim())
                    .map(|j| {
                        let z = self.get(i, j);
                        format!("{:.6e}{:+.6e}i", z.re, z.im)
                    })
                    .collect()
            })
            .collect();
        f.debug_list().entries(rows).finish()
    }
}

impl<'a> Add<&'a CMatrix> for &'a CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        CMatrix(&self.0 + &rhs.0)
    }
}

impl<'a> Sub<&'a CMatrix> for &'a CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        CMatrix(&self.0 - &rhs.0)
    }
}

impl<'a> Mul<&'a CMatrix> for &'a CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        CMatrix(&self.0 * &rhs.0)
    }
}

impl Add for CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: CMatrix) -> CMatrix {
        CMatrix(self.0 + rhs.0)
    }
}

impl Sub for CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: CMatrix) -> CMatrix {
        CMatrix(self.0 - rhs.0)
    }
}

impl Mul for CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: CMatrix) -> CMatrix {
        CMatrix(self.0 * rhs.0)
    }
}

impl Neg for CMatrix {
    type Output = CMatrix;
    fn neg(self) -> CMatrix {
        CMatrix(-self.0)
    }
}

/// Wire form: `{"dim": n, "entries": [[re, im], ...]}`, row-major.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixWire {
    dim: usize,
    entries: Vec<[f64; 2]>,
}

impl Serialize for CMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixWire {
            dim: self.dim(),
            entries: self.entries().iter().map(|z| [z.re, z.im]).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let w = MatrixWire::deserialize(d)?;
        CMatrix::new(w.dim, w.entries.iter().map(|e| c(e[0], e[1])).collect())
            .map_err(serde::de::Error::custom)
    }
}

/// `(λI − m)^{-1}`.
pub fn resolvent(m: &CMatrix, lambda: Complex64) -> Result<CMatrix> {
    let shifted = m.scale_re(-1.0).shift(lambda);
    let lu = shifted.0.clone().lu();
    check_pivots(&lu.u(), shifted.norm_inf(), lambda)?;
    let out = lu
        .solve(&DMatrix::identity(m.dim(), m.dim()))
        .ok_or(Error::SingularResolvent { re: lambda.re, im: lambda.im })?;
    if !out.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::SingularResolvent { re: lambda.re, im: lambda.im });
    }
    Ok(CMatrix(out))
}

/// Induced 2-norm (largest singular value).
pub fn operator_norm(m: &CMatrix) -> f64 {
    if m.dim() == 1 {
        return m.get(0, 0).norm();
    }
    let scale = m.max_abs();
    if scale == 0.0 {
        return 0.0;
    }
    // Scaling keeps the SVD away from overflow for large entries.
    let sv = (m.inner() / re(scale)).singular_values();
    sv.iter().fold(0.0_f64, |a, &b| a.max(b)) * scale
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundMethod {
    Gershgorin,
    OperatorNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralBound {
    pub radius_upper: f64,
    pub method: BoundMethod,
}

/// Certified upper bound on the spectral radius: the smallest of the row and
/// column Gershgorin bounds and the operator norm.
pub fn spectral_radius_upper(m: &CMatrix) -> SpectralBound {
    let gersh = m.norm_inf().min(m.norm_one());
    let op = operator_norm(m);
    if gersh <= op {
        SpectralBound { radius_upper: gersh, method: BoundMethod::Gershgorin }
    } else {
        SpectralBound { radius_upper: op, method: BoundMethod::OperatorNorm }
    }
}

/// Principal logarithm `log|z| + i·arg z` with `arg ∈ (−π, π]`.
pub fn scalar_principal_log(z: Complex64) -> Result<Complex64> {
    if z.re == 0.0 && z.im == 0.0 {
        return Err(Error::ZeroArgument);
    }
    // atan2 returns −π for a negative real with a negative-zero imaginary part.
    let arg = if z.im == 0.0 && z.re < 0.0 { std::f64::consts::PI } else { z.im.atan2(z.re) };
    Ok(Complex64::new(z.norm().ln(), arg))
}

pub fn vec_norm(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, FRAC_PI_2, PI};

    fn rot() -> CMatrix {
        CMatrix::from_real_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]).unwrap()
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(CMatrix::new(0, vec![]).is_err());
        assert!(CMatrix::new(2, vec![ONE; 3]).is_err());
        assert!(CMatrix::new(1, vec![c(f64::NAN, 0.0)]).is_err());
        assert!(CMatrix::new(65, vec![ONE; 65 * 65]).is_err());
    }

    #[test]
    fn resolvent_examples() {
        let m = CMatrix::from_real_rows(&[&[1.0]]).unwrap();
        let r = resolvent(&m, re(2.0)).unwrap();
        assert!((r.get(0, 0) - ONE).norm() < 1e-15);

        let r = resolvent(&CMatrix::zeros(2), ONE).unwrap();
        assert!((&r - &CMatrix::identity(2)).max_abs() < 1e-15);

        // (3I − J)^{-1} = (3I + J)/10 for J² = −I.
        let r = resolvent(&rot(), re(3.0)).unwrap();
        let want = rot().shift(re(3.0)).scale_re(0.1);
        assert!((&r - &want).max_abs() < 1e-15);
    }

    #[test]
    fn resolvent_detects_spectrum() {
        let m = CMatrix::real_diag(&[1.0, 2.0]);
        assert!(matches!(resolvent(&m, re(2.0)), Err(Error::SingularResolvent { .. })));
    }

    #[test]
    fn operator_norm_examples() {
        assert!((operator_norm(&CMatrix::identity(3)) - 1.0).abs() < 1e-14);
        assert!((operator_norm(&CMatrix::real_diag(&[2.0, -3.0])) - 3.0).abs() < 1e-14);
        assert!((operator_norm(&rot()) - 1.0).abs() < 1e-14);
        assert_eq!(operator_norm(&CMatrix::zeros(4)), 0.0);
        // Rank-one u·vᴴ has norm |u||v|.
        let m = CMatrix::from_real_rows(&[&[1.0, 2.0], &[2.0, 4.0]]).unwrap();
        assert!((operator_norm(&m) - 5.0).abs() < 1e-13);
    }

    #[test]
    fn spectral_bound_examples() {
        let b = spectral_radius_upper(&CMatrix::real_diag(&[1.0, 2.0]));
        assert!(b.radius_upper >= 2.0 && b.radius_upper <= 2.0 + 1e-12);
        assert_eq!(spectral_radius_upper(&CMatrix::zeros(3)).radius_upper, 0.0);
        let b = spectral_radius_upper(&rot());
        assert!(b.radius_upper >= 1.0 - 1e-15 && b.radius_upper <= 2f64.sqrt());
        assert_eq!(b.method, BoundMethod::Gershgorin);
    }

    #[test]
    fn principal_log_branch() {
        assert_eq!(scalar_principal_log(ONE).unwrap(), ZERO);
        let l = scalar_principal_log(re(-1.0)).unwrap();
        assert!(l.re.abs() < 1e-16 && (l.im - PI).abs() < 1e-16);
        let l = scalar_principal_log(c(-1.0, -0.0)).unwrap();
        assert_eq!(l.im, PI);
        let l = scalar_principal_log(c(0.0, E)).unwrap();
        assert!((l - c(1.0, FRAC_PI_2)).norm() < 1e-15);
        assert_eq!(scalar_principal_log(ZERO), Err(Error::ZeroArgument));
    }

    #[test]
    fn json_wire_format() {
        let m = CMatrix::new(2, vec![c(1.0, 0.5), ZERO, re(-1.0), c(0.0, 2.0)]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"dim":2,"entries":[[1.0,0.5],[0.0,0.0],[-1.0,0.0],[0.0,2.0]]}"#);
        let back: CMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<CMatrix>(r#"{"dim":2,"entries":[[1,0]]}"#).is_err());
        assert!(serde_json::from_str::<CMatrix>(r#"{"dim":1,"entries":[[1,0]],"x":1}"#).is_err());
    }

    #[test]
    fn pairwise_sum_matches_naive_on_exact_values() {
        let terms: Vec<CMatrix> = (0..7).map(|k| CMatrix::identity(2).scale_re(k as f64)).collect();
        let s = CMatrix::pairwise_sum(&terms).unwrap();
        assert_eq!(s, CMatrix::identity(2).scale_re(21.0));
        assert!(CMatrix::pairwise_sum(&[]).is_none());
    }
}
