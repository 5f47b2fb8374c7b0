//! Circular contours and trapezoidal evaluation of Dunford-Riesz integrals
//! `f(M) = (1/2πi)∮ f(λ)(λI − M)⁻¹ dλ`.
//!
//! On a circle `λ(θ) = c + r·e^{iθ}` the integral becomes the mean of
//! `f(λ)(λI − M)⁻¹·(λ − c)` over θ, and the N-point trapezoidal rule converges
//! geometrically when the integrand is analytic in an annulus around the
//! circle. Node counts double until two successive estimates agree.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::linalg::{self, operator_norm, resolvent, scalar_principal_log, CMatrix};

/// Upper limit on the node count of the doubling loop.
pub const MAX_NODES: usize = 4096;
pub const MIN_NODES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contour {
    pub center: Complex64,
    pub radius: f64,
    /// Initial node count; a power of two, at least [`MIN_NODES`].
    pub nodes: usize,
}

impl Contour {
    pub fn new(center: Complex64, radius: f64, nodes: usize) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidContour(format!("radius must be positive, got {radius}")));
        }
        if !center.re.is_finite() || !center.im.is_finite() {
            return Err(Error::InvalidContour("center must be finite".into()));
        }
        if nodes < MIN_NODES || !nodes.is_power_of_two() {
            return Err(Error::InvalidContour(format!(
                "node count must be a power of two >= {MIN_NODES}, got {nodes}"
            )));
        }
        Ok(Contour { center, radius, nodes })
    }

    pub fn excludes_origin(&self) -> bool {
        self.radius < self.center.norm()
    }

    /// Distance from the center to the branch cut (−∞, 0].
    fn distance_to_cut(&self) -> f64 {
        if self.center.re >= 0.0 {
            self.center.norm()
        } else {
            self.center.im.abs()
        }
    }

    /// `k`-th of `n` equispaced points, starting on the positive real direction.
    pub fn point(&self, k: usize, n: usize) -> Complex64 {
        self.center + self.offset(k, n)
    }

    fn offset(&self, k: usize, n: usize) -> Complex64 {
        Complex64::from_polar(self.radius, 2.0 * PI * k as f64 / n as f64)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContourWire {
    center: [f64; 2],
    radius: f64,
    nodes: usize,
}

impl Serialize for Contour {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ContourWire { center: [self.center.re, self.center.im], radius: self.radius, nodes: self.nodes }
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Contour {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let w = ContourWire::deserialize(d)?;
        Contour::new(Complex64::new(w.center[0], w.center[1]), w.radius, w.nodes)
            .map_err(serde::de::Error::custom)
    }
}

/// Circle about `kappa` that encloses the closed disk of radius
/// `growth_bound` about `kappa` and excludes the origin. The radius is the
/// arithmetic mean of `growth_bound` and `|kappa|`.
pub fn build_contour(kappa: Complex64, growth_bound: f64) -> Result<Contour> {
    if !(growth_bound >= 0.0) {
        return Err(Error::InvalidArgument(format!("growth bound must be nonnegative, got {growth_bound}")));
    }
    let k = kappa.norm();
    if k <= growth_bound {
        return Err(Error::ShiftTooSmall { kappa_abs: k, growth_bound });
    }
    Contour::new(kappa, 0.5 * (growth_bound + k), MIN_NODES)
}

/// Scalar functions available as Dunford integrands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrand {
    One,
    PrincipalLog,
    Exp,
    /// `λⁿ·e^λ`.
    PolyExp(u32),
}

impl Integrand {
    pub fn eval(&self, z: Complex64) -> Result<Complex64> {
        Ok(match self {
            Integrand::One => linalg::ONE,
            Integrand::PrincipalLog => scalar_principal_log(z)?,
            Integrand::Exp => z.exp(),
            Integrand::PolyExp(n) => z.powu(*n) * z.exp(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct DunfordResult {
    pub value: CMatrix,
    pub node_count_used: usize,
    /// ‖estimate at N nodes − estimate at N/2 nodes‖₂.
    pub richardson_gap: f64,
}

fn check_admissible(f: Integrand, m: &CMatrix, c: &Contour) -> Result<()> {
    if f == Integrand::PrincipalLog && c.radius >= c.distance_to_cut() {
        return Err(Error::InvalidContour(
            "the principal-log integrand needs a disk that avoids (-inf, 0]".into(),
        ));
    }
    let off = m.shift(-c.center);
    if linalg::spectral_radius_upper(&off).radius_upper >= c.radius {
        let slack = c.radius * (1.0 + 1e-12);
        for z in linalg::eigenvalues(m)? {
            if (z - c.center).norm() > slack {
                return Err(Error::InvalidContour(format!(
                    "eigenvalue {z} lies outside the circle |λ − {}| = {}",
                    c.center, c.radius
                )));
            }
        }
    }
    Ok(())
}

/// Unnormalised trapezoid term at node `k` of `n`: `f(λ)(λI − M)⁻¹(λ − c)`.
fn node_term(f: Integrand, m: &CMatrix, c: &Contour, k: usize, n: usize) -> Result<CMatrix> {
    let off = c.offset(k, n);
    let lambda = c.center + off;
    let r = resolvent(m, lambda)?;
    Ok(r.scale(f.eval(lambda)? * off))
}

fn combine(terms: &[CMatrix]) -> CMatrix {
    let n = terms.len() as f64;
    CMatrix::pairwise_sum(terms).expect("at least one node").scale_re(1.0 / n)
}

/// Trapezoidal estimate with exactly `n` nodes. Matches the value
/// [`dunford_apply`] returns when it stops at `n` nodes, bit for bit.
pub fn dunford_fixed(f: Integrand, m: &CMatrix, c: &Contour, n: usize) -> Result<CMatrix> {
    check_admissible(f, m, c)?;
    let terms = exec::try_map_indexed(n, |k| node_term(f, m, c, k, n))?;
    Ok(combine(&terms))
}

/// Evaluates `f(m)` by trapezoidal quadrature on `c`, doubling the node
/// count from `c.nodes` until two successive estimates differ by at most `tol`
/// in operator norm.
pub fn dunford_apply(f: Integrand, m: &CMatrix, c: &Contour, tol: f64) -> Result<DunfordResult> {
    dunford_apply_capped(f, m, c, tol, MAX_NODES)
}

pub fn dunford_apply_capped(
    f: Integrand,
    m: &CMatrix,
    c: &Contour,
    tol: f64,
    max_nodes: usize,
) -> Result<DunfordResult> {
    check_admissible(f, m, c)?;
    let mut n = c.nodes;
    let mut terms = exec::try_map_indexed(n, |k| node_term(f, m, c, k, n))?;
    let mut prev = combine(&terms);
    let mut gap = f64::INFINITY;
    while 2 * n <= max_nodes {
        let n2 = 2 * n;
        // Nodes of the doubled rule: even indices are the old nodes.
        let odd = exec::try_map_indexed(n, |j| node_term(f, m, c, 2 * j + 1, n2))?;
        let mut merged = Vec::with_capacity(n2);
        for (e, o) in terms.into_iter().zip(odd) {
            merged.push(e);
            merged.push(o);
        }
        terms = merged;
        n = n2;
        let cur = combine(&terms);
        gap = operator_norm(&(&cur - &prev));
        if gap <= tol {
            return Ok(DunfordResult { value: cur, node_count_used: n, richardson_gap: gap });
        }
        prev = cur;
    }
    Err(Error::NoConvergence { gap, tol, nodes: n })
}

/// `(1/2πi)∮ g(λ) dλ` on `c` by the `n`-point trapezoidal rule.
pub fn scalar_contour_integral<G>(g: G, c: &Contour, n: usize) -> Complex64
where
    G: Fn(Complex64) -> Complex64,
{
    let mut acc = linalg::ZERO;
    for k in 0..n {
        let off = c.offset(k, n);
        acc += g(c.center + off) * off;
    }
    acc / n as f64
}

/// `max_Γ |Log λ|` sampled at `n` nodes.
pub fn max_log_on_contour(c: &Contour, n: usize) -> Result<f64> {
    (0..n).map(|k| scalar_principal_log(c.point(k, n)).map(|z| z.norm())).try_fold(0.0_f64, |a, b| b.map(|b| a.max(b)))
}

/// `max_Γ ‖(λI − m)⁻¹‖` sampled at `n` nodes.
pub fn max_resolvent_on_contour(m: &CMatrix, c: &Contour, n: usize) -> Result<f64> {
    let norms = exec::try_map_indexed(n, |k| resolvent(m, c.point(k, n)).map(|r| operator_norm(&r)))?;
    Ok(exec::max_of(norms))
}
