//! Cauchy problems `u' = A(t)u + f(t)`, `u(s) = u_s`.
//!
//! The series path writes the propagator as `U(t,s) = e^{a(t,s)} − κI` with
//! `e^{a}` summed as a truncated power series, and adds the Duhamel integral
//! `∫ₛᵗ (e^{a(t,τ)} − κI) f(τ) dτ` by adaptive Gauss-Legendre quadrature when
//! forcing is present. An embedded 5(4) Runge-Kutta integrator with dense
//! output serves as the independent oracle.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::contour::{dunford_apply, Contour, Integrand};
use crate::error::{Error, Result};
use crate::evolution::{build_family, EvolutionFamily, GeneratorSpec};
use crate::exec;
use crate::linalg::{spectral_radius_upper, vec_norm, CMatrix, CVector};
use crate::logrep::{exp_series, log_representation, KappaShift};
use crate::quadrature::adaptive_gl;
use crate::scalar::ScalarFn;

/// Relative slack on sampled Hölder quotients.
pub const HOLDER_SLACK: f64 = 0.05;
/// Points in the Hölder validation grid.
pub const HOLDER_GRID: usize = 129;
/// Panel order of the Duhamel quadrature.
pub const DUHAMEL_ORDER: usize = 8;
/// Panel cap of the Duhamel quadrature.
pub const DUHAMEL_MAX_PANELS: usize = 1 << 14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forcing {
    pub components: Vec<ScalarFn>,
    #[serde(rename = "holder_C")]
    pub holder_c: f64,
    pub holder_gamma: f64,
}

impl Forcing {
    pub fn zero(dim: usize) -> Self {
        Forcing { components: vec![ScalarFn::Const(0.0); dim], holder_c: 0.0, holder_gamma: 1.0 }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn eval(&self, t: f64) -> CVector {
        CVector::from_iterator(self.components.len(), self.components.iter().map(|g| Complex64::new(g.eval(t), 0.0)))
    }

    /// Checks the declared constants against sampled quotients on a uniform
    /// grid over `[−T, T]`.
    pub fn validate(&self, horizon: f64) -> Result<()> {
        let bad = |field: &str, message: String| Error::SchemaViolation { field: field.into(), message };
        if self.components.is_empty() {
            return Err(bad("forcing", "needs at least one component".into()));
        }
        if !(self.holder_c >= 0.0) || !self.holder_c.is_finite() {
            return Err(bad("holder_C", format!("{} is not a nonnegative real", self.holder_c)));
        }
        if !(self.holder_gamma > 0.0 && self.holder_gamma <= 1.0) {
            return Err(bad("holder_gamma", format!("{} is outside (0, 1]", self.holder_gamma)));
        }
        let grid = crate::evolution::uniform_grid(-horizon, horizon, HOLDER_GRID);
        let vals: Vec<CVector> = grid.iter().map(|&t| self.eval(t)).collect();
        let limit = self.holder_c * (1.0 + HOLDER_SLACK);
        for i in 0..grid.len() {
            for j in i + 1..grid.len() {
                let q = vec_norm(&(&vals[j] - &vals[i])) / (grid[j] - grid[i]).abs().powf(self.holder_gamma);
                if q > limit + 1e-14 {
                    return Err(bad(
                        "holder_C",
                        format!("quotient {q:.6} at ({}, {}) exceeds {limit:.6}", grid[i], grid[j]),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CauchyProblem {
    pub family: EvolutionFamily,
    pub u_s: CVector,
    pub s: f64,
    pub forcing: Option<Forcing>,
}

impl CauchyProblem {
    pub fn new(spec: GeneratorSpec, u_s: CVector, s: f64, horizon: f64, forcing: Option<Forcing>) -> Result<Self> {
        Self::with_family(build_family(spec, horizon)?, u_s, s, forcing)
    }

    pub fn with_family(family: EvolutionFamily, u_s: CVector, s: f64, forcing: Option<Forcing>) -> Result<Self> {
        let n = family.dim();
        if u_s.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: u_s.len() });
        }
        if u_s.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidArgument("initial value must be finite".into()));
        }
        family.check_time(s)?;
        if let Some(f) = &forcing {
            if f.dim() != n {
                return Err(Error::DimensionMismatch { expected: n, got: f.dim() });
            }
            f.validate(family.horizon)?;
        }
        Ok(CauchyProblem { family, u_s, s, forcing })
    }

    pub fn horizon(&self) -> f64 {
        self.family.horizon
    }

    /// `A(t)u + f(t)`.
    pub fn rhs(&self, t: f64, u: &CVector) -> CVector {
        let mut v = self.family.generator_at(t).mul_vec(u);
        if let Some(f) = &self.forcing {
            v += f.eval(t);
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Series,
    DuhamelSeries,
    OracleRk,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Series => "series",
            Method::DuhamelSeries => "duhamel-series",
            Method::OracleRk => "oracle-rk",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<CVector>,
    pub method: Method,
    pub tol_achieved: f64,
}

impl Trajectory {
    /// `max_k ‖self(t_k) − other(t_k)‖`; the two must share their times.
    pub fn max_deviation(&self, other: &Trajectory) -> Result<f64> {
        if self.times != other.times {
            return Err(Error::InvalidArgument("trajectories are sampled at different times".into()));
        }
        Ok(exec::max_of(self.states.iter().zip(&other.states).map(|(a, b)| vec_norm(&(a - b)))))
    }

    /// CSV with columns `time, re(u_1), im(u_1), …, method, tol_achieved`.
    pub fn to_csv(&self) -> String {
        let dim = self.states.first().map_or(0, |v| v.len());
        let mut out = String::from("time");
        for i in 1..=dim {
            out.push_str(&format!(",re(u_{i}),im(u_{i})"));
        }
        out.push_str(",method,tol_achieved\n");
        for (t, u) in self.times.iter().zip(&self.states) {
            out.push_str(&format!("{t:.17e}"));
            for z in u.iter() {
                out.push_str(&format!(",{:.17e},{:.17e}", z.re, z.im));
            }
            out.push_str(&format!(",{},{:.3e}\n", self.method.as_str(), self.tol_achieved));
        }
        out
    }
}

fn check_output_times(p: &CauchyProblem, times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidArgument("no output times".into()));
    }
    if times.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidArgument("output times must be ascending".into()));
    }
    for &t in times {
        p.family.check_time(t)?;
    }
    Ok(())
}

fn require_commuting(p: &CauchyProblem) -> Result<()> {
    if p.family.spec.is_commuting_class() {
        Ok(())
    } else {
        Err(Error::CommutationViolated)
    }
}

/// `e^{a(t,τ)} − κI` with `a` at `tol / 10` and the series at `tol / 10`.
fn series_propagator(fam: &EvolutionFamily, shift: &KappaShift, t: f64, tau: f64, tol: f64) -> Result<CMatrix> {
    let rep = log_representation(fam, shift, t, tau, tol / 10.0)?;
    Ok(exp_series(&rep.a, tol / 10.0)?.value.shift(-shift.kappa))
}

/// `u(t) = (e^{a(t,s)} − κI)·u_s` at every output time.
pub fn solve_autonomous(p: &CauchyProblem, shift: &KappaShift, tol: f64, output_times: &[f64]) -> Result<Trajectory> {
    if p.forcing.is_some() {
        return Err(Error::InvalidArgument("forced problem: use solve_nonautonomous".into()));
    }
    require_commuting(p)?;
    check_output_times(p, output_times)?;
    let states = exec::try_map_slice(output_times, |&t| {
        Ok::<_, Error>(series_propagator(&p.family, shift, t, p.s, tol)?.mul_vec(&p.u_s))
    })?;
    Ok(Trajectory { times: output_times.to_vec(), states, method: Method::Series, tol_achieved: tol })
}

/// Homogeneous series term plus the Duhamel integral.
pub fn solve_nonautonomous(
    p: &CauchyProblem,
    shift: &KappaShift,
    tol: f64,
    output_times: &[f64],
) -> Result<Trajectory> {
    require_commuting(p)?;
    let forcing = p
        .forcing
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("no forcing: use solve_autonomous".into()))?;
    check_output_times(p, output_times)?;
    let solved = exec::try_map_slice(output_times, |&t| {
        let homogeneous = series_propagator(&p.family, shift, t, p.s, tol)?.mul_vec(&p.u_s);
        let integrand =
            |tau: f64| -> Result<CVector> { Ok(series_propagator(&p.family, shift, t, tau, tol)?.mul_vec(&forcing.eval(tau))) };
        let q = adaptive_gl(&integrand, p.s, t, DUHAMEL_ORDER, tol, DUHAMEL_MAX_PANELS)?;
        Ok::<_, Error>((homogeneous + q.value, q.error_estimate))
    })?;
    let err = exec::max_of(solved.iter().map(|x| x.1));
    Ok(Trajectory {
        times: output_times.to_vec(),
        states: solved.into_iter().map(|x| x.0).collect(),
        method: Method::DuhamelSeries,
        tol_achieved: tol.max(err),
    })
}

/// Dispatches on the presence of forcing.
pub fn solve_series(p: &CauchyProblem, shift: &KappaShift, tol: f64, output_times: &[f64]) -> Result<Trajectory> {
    if p.forcing.is_some() {
        solve_nonautonomous(p, shift, tol, output_times)
    } else {
        solve_autonomous(p, shift, tol, output_times)
    }
}

// Dormand-Prince 5(4).
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// Fifth-order minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
// Dense output.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RkStats {
    pub accepted: usize,
    pub rejected: usize,
}

const MAX_RK_STEPS: usize = 1_000_000;

fn weighted_rms(err: &CVector, y0: &CVector, y1: &CVector, tol: f64) -> f64 {
    let n = err.len() as f64;
    let s: f64 = err
        .iter()
        .zip(y0.iter().zip(y1.iter()))
        .map(|(e, (a, b))| {
            let sc = tol + tol * a.norm().max(b.norm());
            (e.norm() / sc).powi(2)
        })
        .sum();
    (s / n).sqrt()
}

/// Integrates from `s` to each target in `targets` (all on one side of `s`,
/// ordered away from it), writing dense-output states into `out`.
fn dopri_leg(
    p: &CauchyProblem,
    tol: f64,
    targets: &[(usize, f64)],
    out: &mut [Option<CVector>],
    stats: &mut RkStats,
) -> Result<()> {
    let Some(&(_, t_end)) = targets.last() else { return Ok(()) };
    let mut t = p.s;
    let mut y = p.u_s.clone();
    let mut next = 0;
    while next < targets.len() && targets[next].1 == t {
        out[targets[next].0] = Some(y.clone());
        next += 1;
    }
    if next == targets.len() {
        return Ok(());
    }
    let span = t_end - t;
    let dir = span.signum();
    let mut k1 = p.rhs(t, &y);
    // Initial step from the local scale of the solution.
    let d0 = vec_norm(&y).max(1e-5);
    let d1 = vec_norm(&k1).max(1e-5);
    let mut h = dir * (0.01 * d0 / d1).min(span.abs());
    let mut last_rejected = false;
    let mut steps = 0;
    while next < targets.len() {
        steps += 1;
        if steps > MAX_RK_STEPS {
            return Err(Error::StepUnderflow(h.abs()));
        }
        if (t + h - t_end) * dir > 0.0 {
            h = t_end - t;
        }
        if h.abs() < 16.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(Error::StepUnderflow(h.abs()));
        }
        let mut k: Vec<CVector> = Vec::with_capacity(7);
        k.push(k1.clone());
        for i in 1..7 {
            let mut yi = y.clone();
            for (j, kj) in k.iter().enumerate().take(i) {
                if A[i][j] != 0.0 {
                    yi += kj * Complex64::new(h * A[i][j], 0.0);
                }
            }
            k.push(p.rhs(t + C[i] * h, &yi));
        }
        // The seventh stage is evaluated at the fifth-order solution.
        let mut y_new = y.clone();
        for (j, kj) in k.iter().enumerate().take(6) {
            if A[6][j] != 0.0 {
                y_new += kj * Complex64::new(h * A[6][j], 0.0);
            }
        }
        let mut err = CVector::zeros(y.len());
        for (i, ki) in k.iter().enumerate() {
            if E[i] != 0.0 {
                err += ki * Complex64::new(h * E[i], 0.0);
            }
        }
        let e = weighted_rms(&err, &y, &y_new, tol);
        if !e.is_finite() {
            stats.rejected += 1;
            h *= 0.2;
            last_rejected = true;
            continue;
        }
        if e <= 1.0 {
            stats.accepted += 1;
            let t_new = t + h;
            let ydiff = &y_new - &y;
            let bspl = &k[0] * Complex64::new(h, 0.0) - &ydiff;
            let c3 = &ydiff - &k[6] * Complex64::new(h, 0.0) - &bspl;
            let mut c4 = CVector::zeros(y.len());
            for (i, ki) in k.iter().enumerate() {
                if D[i] != 0.0 {
                    c4 += ki * Complex64::new(h * D[i], 0.0);
                }
            }
            while next < targets.len() && (targets[next].1 - t_new) * dir <= 0.0 {
                let (idx, tt) = targets[next];
                let th = (tt - t) / h;
                let th1 = 1.0 - th;
                let v = &y
                    + (&ydiff
                        + (&bspl + (&c3 + &c4 * Complex64::new(th1, 0.0)) * Complex64::new(th, 0.0))
                            * Complex64::new(th1, 0.0))
                        * Complex64::new(th, 0.0);
                out[idx] = Some(if tt == t_new { y_new.clone() } else { v });
                next += 1;
            }
            t = t_new;
            y = y_new;
            k1 = k.swap_remove(6);
            let mut fac = (0.9 * e.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
            if last_rejected {
                fac = fac.min(1.0);
            }
            h *= fac;
            last_rejected = false;
        } else {
            stats.rejected += 1;
            h *= (0.9 * e.powf(-0.2)).clamp(0.2, 1.0);
            last_rejected = true;
        }
    }
    Ok(())
}

/// Adaptive Dormand-Prince integration with dense output, forward and
/// backward from `s` as the output times require. Works for every generator
/// kind.
pub fn oracle_solve(p: &CauchyProblem, tol: f64, output_times: &[f64]) -> Result<Trajectory> {
    oracle_solve_with_stats(p, tol, output_times).map(|x| x.0)
}

pub fn oracle_solve_with_stats(p: &CauchyProblem, tol: f64, output_times: &[f64]) -> Result<(Trajectory, RkStats)> {
    check_output_times(p, output_times)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {tol} must be positive")));
    }
    let mut out: Vec<Option<CVector>> = vec![None; output_times.len()];
    let mut stats = RkStats::default();
    let forward: Vec<(usize, f64)> =
        output_times.iter().copied().enumerate().filter(|&(_, t)| t >= p.s).collect();
    let backward: Vec<(usize, f64)> =
        output_times.iter().copied().enumerate().filter(|&(_, t)| t < p.s).rev().collect();
    dopri_leg(p, tol, &forward, &mut out, &mut stats)?;
    dopri_leg(p, tol, &backward, &mut out, &mut stats)?;
    let states = out.into_iter().map(|v| v.expect("every output time is reached")).collect();
    Ok((Trajectory { times: output_times.to_vec(), states, method: Method::OracleRk, tol_achieved: tol }, stats))
}

fn uniform_step(times: &[f64]) -> Result<f64> {
    if times.len() < 5 {
        return Err(Error::GridTooCoarse(format!("{} points; the stencil needs at least 5", times.len())));
    }
    let h = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    if !(h > 0.0) {
        return Err(Error::GridTooCoarse("times do not increase".into()));
    }
    for (k, t) in times.iter().enumerate() {
        if (t - (times[0] + k as f64 * h)).abs() > 1e-9 * h.max(t.abs()) {
            return Err(Error::GridTooCoarse(format!("time {t} breaks uniform spacing {h}")));
        }
    }
    Ok(h)
}

/// `max ‖D_t u − A(t)u − f(t)‖` over interior times, with `D_t` the
/// fourth-order central difference.
pub fn residual_check(tr: &Trajectory, p: &CauchyProblem) -> Result<f64> {
    let h = uniform_step(&tr.times)?;
    let u = &tr.states;
    let res = exec::map_indexed(u.len() - 4, |j| {
        let i = j + 2;
        let d = (&u[i - 2] - &u[i + 2] + (&u[i + 1] - &u[i - 1]) * Complex64::new(8.0, 0.0))
            * Complex64::new(1.0 / (12.0 * h), 0.0);
        vec_norm(&(d - p.rhs(tr.times[i], &u[i])))
    });
    Ok(exec::max_of(res))
}

/// What [`residual_check`] may return for a trajectory that is accurate to
/// `tr.tol_achieved`: ten times the sum of the stencil truncation error and
/// the state error propagated through the stencil. Truncation has a smooth
/// part, estimated from fifth differences of the data, and a rough part from
/// Hölder forcing: `u'` then inherits the forcing's modulus, and the stencil
/// error is at most `C_H·h^γ·Σ|w_k|·|k|^{1+γ} / (12(1+γ))`.
pub fn residual_bound(tr: &Trajectory, p: &CauchyProblem) -> Result<f64> {
    let h = uniform_step(&tr.times)?;
    let u = &tr.states;
    let mut fifth = 0.0_f64;
    if u.len() >= 6 {
        for i in 0..u.len() - 5 {
            let d = &u[i + 5] - &u[i + 4] * Complex64::new(5.0, 0.0) + &u[i + 3] * Complex64::new(10.0, 0.0)
                - &u[i + 2] * Complex64::new(10.0, 0.0)
                + &u[i + 1] * Complex64::new(5.0, 0.0)
                - &u[i];
            fifth = fifth.max(vec_norm(&d));
        }
    }
    let scale = exec::max_of(u.iter().map(vec_norm));
    let mut truncation = fifth / (30.0 * h);
    if let Some(f) = &p.forcing {
        let g = f.holder_gamma;
        let moments = 2.0 * (8.0 + 2f64.powf(1.0 + g));
        truncation += f.holder_c * h.powf(g) * moments / (12.0 * (1.0 + g));
    }
    let propagated = 1.5 * (tr.tol_achieved + 8.0 * f64::EPSILON * scale) / h;
    Ok(10.0 * (truncation + propagated))
}

/// `(1/2πi)∮ λⁿe^λ (λ − a)⁻¹ dλ` on a circle about `tr(a)/dim` of radius
/// `2ρ + 1/2`, `ρ` bounding the spectrum's distance from the centre.
pub fn dunford_poly_exp(a: &CMatrix, n: u32, tol: f64) -> Result<CMatrix> {
    if n > 3 {
        return Err(Error::InvalidArgument(format!("power {n} is outside 0..=3")));
    }
    let center = a.trace() / a.dim() as f64;
    let rho = spectral_radius_upper(&a.shift(-center)).radius_upper;
    let contour = Contour::new(center, 2.0 * rho + 0.5, crate::contour::MIN_NODES)?;
    Ok(dunford_apply(Integrand::PolyExp(n), a, &contour, tol)?.value)
}

/// Fourth-order finite-difference `n`-th derivative of `t ↦ e^{a(t,s)}`.
/// All stencil points share one quadrature node count.
fn fd_derivative_exp(fam: &EvolutionFamily, shift: &KappaShift, t: f64, s: f64, n: u32, h: f64, tol: f64) -> Result<CMatrix> {
    if !(h >= 1e3 * f64::EPSILON) {
        return Err(Error::StepTooSmall(h));
    }
    let offs = [-2.0, -1.0, 0.0, 1.0, 2.0];
    let weights: [f64; 5] = match n {
        1 => [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0],
        2 => [-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0],
        _ => return Err(Error::InvalidArgument(format!("derivative order {n} is outside 1..=2"))),
    };
    for o in offs {
        fam.check_time(t + o * h)?;
    }
    let contour = shift.contour()?;
    let mats: Vec<CMatrix> = offs
        .iter()
        .map(|o| Ok(fam.evaluate(t + o * h, s)?.shift(shift.kappa)))
        .collect::<Result<_>>()?;
    let first: Vec<_> =
        mats.iter().map(|m| dunford_apply(Integrand::PrincipalLog, m, &contour, tol)).collect::<Result<_>>()?;
    let nodes = first.iter().map(|r| r.node_count_used).max().unwrap_or(contour.nodes);
    let mut acc = CMatrix::zeros(fam.dim());
    for ((r, m), w) in first.into_iter().zip(&mats).zip(weights) {
        if w == 0.0 {
            continue;
        }
        let a = if r.node_count_used == nodes {
            r.value
        } else {
            crate::contour::dunford_fixed(Integrand::PrincipalLog, m, &contour, nodes)?
        };
        acc = &acc + &exp_series(&a, tol)?.value.scale_re(w);
    }
    Ok(acc.scale_re(1.0 / h.powi(n as i32)))
}

/// Step used by the derivative scan at time `t`.
pub fn scan_step(t: f64) -> f64 {
    t / 8.0
}

/// `(t, tⁿ‖D_tⁿ e^{a(t,s)}‖)` over `t_grid`.
pub fn derivative_bound_scan(
    fam: &EvolutionFamily,
    shift: &KappaShift,
    s: f64,
    n: u32,
    t_grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if !(1..=2).contains(&n) {
        return Err(Error::InvalidArgument(format!("derivative order {n} is outside 1..=2")));
    }
    for &t in t_grid {
        if !(t > 0.0) || t > fam.horizon {
            return Err(Error::OutOfHorizon { time: t, horizon: fam.horizon });
        }
    }
    exec::try_map_slice(t_grid, |&t| {
        let d = fd_derivative_exp(fam, shift, t, s, n, scan_step(t), 1e-13)?;
        Ok((t, t.powi(n as i32) * crate::linalg::operator_norm(&d)))
    })
}

/// `max/min` of the scanned values; 1 when all vanish.
pub fn scan_ratio(scan: &[(f64, f64)]) -> f64 {
    let max = scan.iter().map(|x| x.1).fold(0.0_f64, f64::max);
    let min = scan.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    if max == 0.0 {
        1.0
    } else {
        max / min
    }
}

/// `‖D_tⁿ e^{a(t,s)} − (1/2πi)∮ λⁿe^λ (λ − a(t,s))⁻¹ dλ‖`. Reported, never
/// asserted: the two agree only when `a(t,s)` commutes with its derivative
/// in the right way.
pub fn poly_exp_derivative_gap(fam: &EvolutionFamily, shift: &KappaShift, t: f64, s: f64, n: u32) -> Result<f64> {
    let fd = fd_derivative_exp(fam, shift, t, s, n, scan_step(t.abs().max(1e-2)), 1e-13)?;
    let a = log_representation(fam, shift, t, s, 1e-13)?.a;
    Ok(crate::linalg::operator_norm(&(&fd - &dunford_poly_exp(&a, n, 1e-12)?)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolderEstimate {
    pub c: f64,
    pub gamma: f64,
    /// `f` constant on the grid: `(0, 1)` by convention.
    pub degenerate: bool,
}

/// Fits `log ω(δ) ≈ log C + γ log δ` where `ω(δ)` is the largest increment
/// `‖f(t) − f(s)‖` over grid pairs with `|t − s| = δ`. The largest increment
/// per separation, rather than every pair, is what a Hölder bound constrains.
/// `C` is then the smallest constant valid on the grid for the fitted `γ`.
pub fn holder_estimate<F>(f: F, grid: &[f64]) -> Result<HolderEstimate>
where
    F: Fn(f64) -> CVector,
{
    if grid.len() < 17 {
        return Err(Error::GridTooCoarse(format!("{} points; Hölder fit needs at least 17", grid.len())));
    }
    let vals: Vec<CVector> = grid.iter().map(|&t| f(t)).collect();
    // Separations bucketed to 1e-9 relative.
    let mut modulus: std::collections::BTreeMap<i64, (f64, f64)> = std::collections::BTreeMap::new();
    let span = grid.iter().fold(0.0_f64, |m, t| m.max(t.abs())).max(1e-300);
    for i in 0..grid.len() {
        for j in i + 1..grid.len() {
            let delta = (grid[j] - grid[i]).abs();
            if delta == 0.0 {
                continue;
            }
            let key = (delta / span * 1e9).round() as i64;
            let d = vec_norm(&(&vals[j] - &vals[i]));
            let e = modulus.entry(key).or_insert((delta, 0.0));
            e.1 = e.1.max(d);
        }
    }
    let pts: Vec<(f64, f64)> = modulus.values().filter(|p| p.1 > 0.0).map(|&(d, w)| (d.ln(), w.ln())).collect();
    if pts.is_empty() {
        return Ok(HolderEstimate { c: 0.0, gamma: 1.0, degenerate: true });
    }
    let gamma = if pts.len() == 1 {
        1.0
    } else {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        if sxx > 0.0 { sxy / sxx } else { 1.0 }
    };
    let gamma = gamma.clamp(1e-6, 1.0);
    let c = modulus.values().map(|&(d, w)| w / d.powf(gamma)).fold(0.0_f64, f64::max);
    Ok(HolderEstimate { c, gamma, degenerate: false })
}
