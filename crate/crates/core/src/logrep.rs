//! Logarithm representation of generators.
//!
//! For an invertible family with `‖U(t,s)‖ ≤ M·e^{βT}` and a shift
//! `|κ| > M·e^{βT}`, the spectrum of `U(t,s) + κI` stays inside a fixed circle
//! about `κ` that excludes the origin, so
//! `a(t,s) = Log(U(t,s) + κI)` is a bounded Dunford-Riesz integral on one
//! contour for every `(t, s)`. When `A(t)` commutes with `U(t,s)`,
//!
//! ```text
//! ∂ₜa(t,s) = (I − κ(U(t,s) + κI)⁻¹)·A(t)   and   A(t) = (I + κU(s,t))·∂ₜa(t,s).
//! ```
//!
//! [`dt_log`] differentiates the quadrature numerically; [`dt_log_closed_form`]
//! is the independent route through the identity above.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::contour::{self, build_contour, dunford_apply, dunford_fixed, Contour, Integrand};
use crate::error::{Error, Result};
use crate::evolution::EvolutionFamily;
use crate::linalg::{operator_norm, re, scalar_principal_log, CMatrix};

/// Default margin `|κ| / (M·e^{βT})`.
pub const DEFAULT_MARGIN: f64 = 1.5;
/// Default derivative step as a fraction of the horizon.
pub const DEFAULT_STEP_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaShift {
    pub kappa: Complex64,
    /// The `M·e^{βT}` the shift was chosen against.
    pub growth_bound: f64,
    pub margin: f64,
}

/// `κ = margin·M·e^{βT}` on the positive real axis.
pub fn select_kappa(m: f64, beta: f64, horizon: f64, margin: f64) -> Result<KappaShift> {
    if !(margin > 1.0) || !margin.is_finite() {
        return Err(Error::BadMargin(margin));
    }
    let growth_bound = m * (beta * horizon).exp();
    if !(growth_bound >= 0.0) || !growth_bound.is_finite() {
        return Err(Error::InvalidArgument(format!("growth bound {growth_bound} is not finite")));
    }
    Ok(KappaShift { kappa: re(margin * growth_bound), growth_bound, margin })
}

impl KappaShift {
    pub fn for_family(fam: &EvolutionFamily, margin: f64) -> Result<Self> {
        select_kappa(fam.growth_m, fam.growth_beta, fam.horizon, margin)
    }

    /// An explicitly chosen `κ`; must clear the family's growth bound.
    pub fn explicit(kappa: Complex64, growth_bound: f64) -> Result<Self> {
        if kappa.norm() <= growth_bound {
            return Err(Error::ShiftTooSmall { kappa_abs: kappa.norm(), growth_bound });
        }
        let margin = if growth_bound > 0.0 { kappa.norm() / growth_bound } else { f64::INFINITY };
        Ok(KappaShift { kappa, growth_bound, margin })
    }

    pub fn contour(&self) -> Result<Contour> {
        build_contour(self.kappa, self.growth_bound)
    }

    fn check_against(&self, fam: &EvolutionFamily) -> Result<()> {
        let bound = fam.growth_bound();
        if self.kappa.norm() <= bound || self.growth_bound < bound * (1.0 - 1e-12) {
            return Err(Error::ShiftTooSmall { kappa_abs: self.kappa.norm(), growth_bound: bound });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LogRepresentation {
    /// `a(t,s) = Log(U(t,s) + κI)`.
    pub a: CMatrix,
    /// `∂ₜa(t,s)`, once computed.
    pub da_dt: Option<CMatrix>,
    pub t: f64,
    pub s: f64,
    pub shift: KappaShift,
    pub contour: Contour,
    /// Zero when `t == s` (closed form, no quadrature).
    pub nodes_used: usize,
    pub richardson_gap: f64,
}

/// `U(t,s) + κI`.
pub fn shifted_propagator(fam: &EvolutionFamily, shift: &KappaShift, t: f64, s: f64) -> Result<CMatrix> {
    Ok(fam.evaluate(t, s)?.shift(shift.kappa))
}

/// `a(t,s)` by adaptive trapezoidal quadrature to `tol`.
pub fn log_representation(
    fam: &EvolutionFamily,
    shift: &KappaShift,
    t: f64,
    s: f64,
    tol: f64,
) -> Result<LogRepresentation> {
    shift.check_against(fam)?;
    let contour = shift.contour()?;
    if t == s {
        fam.check_time(t)?;
        let l = scalar_principal_log(shift.kappa + 1.0)?;
        return Ok(LogRepresentation {
            a: CMatrix::identity(fam.dim()).scale(l),
            da_dt: None,
            t,
            s,
            shift: *shift,
            contour,
            nodes_used: 0,
            richardson_gap: 0.0,
        });
    }
    let m = shifted_propagator(fam, shift, t, s)?;
    let r = dunford_apply(Integrand::PrincipalLog, &m, &contour, tol)?;
    if !r.value.is_finite() {
        return Err(Error::InvalidArgument("logarithm quadrature produced non-finite entries".into()));
    }
    Ok(LogRepresentation {
        a: r.value,
        da_dt: None,
        t,
        s,
        shift: *shift,
        contour,
        nodes_used: r.node_count_used,
        richardson_gap: r.richardson_gap,
    })
}

impl LogRepresentation {
    /// Fills `da_dt` via [`dt_log`].
    pub fn with_derivative(mut self, fam: &EvolutionFamily, h: f64, tol: f64) -> Result<Self> {
        self.da_dt = Some(dt_log(fam, &self.shift, self.t, self.s, h, tol)?);
        Ok(self)
    }

    /// `(‖a‖, max_Γ|Log λ| · max_Γ‖(λ − U − κ)⁻¹‖ · r)` sampled on the nodes
    /// used (at least 64).
    pub fn boundedness(&self, fam: &EvolutionFamily) -> Result<(f64, f64)> {
        let n = self.nodes_used.max(64);
        let m = shifted_propagator(fam, &self.shift, self.t, self.s)?;
        let log_max = contour::max_log_on_contour(&self.contour, n)?;
        let res_max = contour::max_resolvent_on_contour(&m, &self.contour, n)?;
        Ok((operator_norm(&self.a), log_max * res_max * self.contour.radius))
    }
}

/// Fourth-order central difference of `a(·, s)` at `t` on the stencil
/// `{t ± h, t ± 2h}`. Every stencil node uses the same trapezoidal rule
/// (the largest node count any of them needs at `tol / 10`) so that the
/// quadrature error is a smooth function of `t` and cancels in the
/// difference. Returns the derivative and the node count.
pub fn dt_log_with_nodes(
    fam: &EvolutionFamily,
    shift: &KappaShift,
    t: f64,
    s: f64,
    h: f64,
    tol: f64,
) -> Result<(CMatrix, usize)> {
    if !(h >= 1e3 * f64::EPSILON) {
        return Err(Error::StepTooSmall(h));
    }
    shift.check_against(fam)?;
    fam.check_time(t - 2.0 * h)?;
    fam.check_time(t + 2.0 * h)?;
    let contour = shift.contour()?;
    let times = [t - 2.0 * h, t - h, t + h, t + 2.0 * h];
    let mats: Vec<CMatrix> =
        times.iter().map(|&tk| shifted_propagator(fam, shift, tk, s)).collect::<Result<_>>()?;
    let first: Vec<_> = mats
        .iter()
        .map(|m| dunford_apply(Integrand::PrincipalLog, m, &contour, tol / 10.0))
        .collect::<Result<_>>()?;
    let nodes = first.iter().map(|r| r.node_count_used).max().unwrap_or(contour.nodes);
    let vals: Vec<CMatrix> = first
        .into_iter()
        .zip(&mats)
        .map(|(r, m)| {
            if r.node_count_used == nodes {
                Ok(r.value)
            } else {
                dunford_fixed(Integrand::PrincipalLog, m, &contour, nodes)
            }
        })
        .collect::<Result<_>>()?;
    let num = &(&vals[2].scale_re(8.0) - &vals[1].scale_re(8.0)) + &(&vals[0] - &vals[3]);
    Ok((num.scale_re(1.0 / (12.0 * h)), nodes))
}

/// `∂ₜa(t,s)` by finite differences of the contour quadrature.
pub fn dt_log(fam: &EvolutionFamily, shift: &KappaShift, t: f64, s: f64, h: f64, tol: f64) -> Result<CMatrix> {
    dt_log_with_nodes(fam, shift, t, s, h, tol).map(|(d, _)| d)
}

/// `(I − κ(U(t,s) + κI)⁻¹)·A(t)`.
pub fn dt_log_closed_form(fam: &EvolutionFamily, shift: &KappaShift, t: f64, s: f64) -> Result<CMatrix> {
    if !fam.spec.is_commuting_class() {
        return Err(Error::CommutationViolated);
    }
    let shifted = shifted_propagator(fam, shift, t, s)?;
    let n = fam.dim();
    let left = &CMatrix::identity(n) - &shifted.inverse()?.scale(shift.kappa);
    Ok(&left * &fam.generator_at(t))
}

/// `(I + κU(s,t))·∂ₜa(t,s)`, which equals `A(t)` for commuting generators.
pub fn reconstruct_generator(
    fam: &EvolutionFamily,
    shift: &KappaShift,
    t: f64,
    s: f64,
    h: f64,
    tol: f64,
) -> Result<CMatrix> {
    reconstruct_generator_with_nodes(fam, shift, t, s, h, tol).map(|(a, _)| a)
}

pub fn reconstruct_generator_with_nodes(
    fam: &EvolutionFamily,
    shift: &KappaShift,
    t: f64,
    s: f64,
    h: f64,
    tol: f64,
) -> Result<(CMatrix, usize)> {
    if !fam.spec.is_commuting_class() {
        return Err(Error::CommutationViolated);
    }
    let (da, nodes) = dt_log_with_nodes(fam, shift, t, s, h, tol)?;
    Ok((reconstruct_from_derivative(fam, shift, t, s, &da)?, nodes))
}

/// `(I + κU(s,t))·da` for a precomputed `da ≈ ∂ₜa(t,s)`.
pub fn reconstruct_from_derivative(
    fam: &EvolutionFamily,
    shift: &KappaShift,
    t: f64,
    s: f64,
    da: &CMatrix,
) -> Result<CMatrix> {
    if !fam.spec.is_commuting_class() {
        return Err(Error::CommutationViolated);
    }
    let back = fam.evaluate(s, t)?.scale(shift.kappa);
    let factor = &CMatrix::identity(fam.dim()) + &back;
    Ok(&factor * da)
}

#[derive(Debug, Clone)]
pub struct ExpSeries {
    pub value: CMatrix,
    /// Highest power kept.
    pub terms: usize,
}

/// Cap on the number of series terms.
pub const MAX_SERIES_TERMS: usize = 200;

/// `Σ_{n=0}^{N} aⁿ/n!` with the smallest `N` whose remainder bound
/// `‖a‖^{N+1}·e^{‖a‖}/(N+1)!` is at most `tol`.
pub fn exp_series(a: &CMatrix, tol: f64) -> Result<ExpSeries> {
    let norm = operator_norm(a);
    let mut n = 0usize;
    // ‖a‖^{n+1}/(n+1)! built incrementally.
    let mut ratio = norm;
    let scale = norm.exp();
    while ratio * scale > tol {
        n += 1;
        if n > MAX_SERIES_TERMS {
            return Err(Error::SeriesNotConverged { terms: n, norm });
        }
        ratio *= norm / (n as f64 + 1.0);
    }
    let dim = a.dim();
    let mut term = CMatrix::identity(dim);
    let mut sum = term.clone();
    for k in 1..=n {
        term = (&term * a).scale_re(1.0 / k as f64);
        sum = &sum + &term;
    }
    Ok(ExpSeries { value: sum, terms: n })
}

/// `‖e^{a(t,s)} − (U(t,s) + κI)‖` with `a` at `tol / 10` and the series at `tol`.
pub fn exp_log_roundtrip_check(
    fam: &EvolutionFamily,
    shift: &KappaShift,
    t: f64,
    s: f64,
    tol: f64,
) -> Result<f64> {
    let rep = log_representation(fam, shift, t, s, tol / 10.0)?;
    let e = exp_series(&rep.a, tol / 10.0)?;
    let target = shifted_propagator(fam, shift, t, s)?;
    Ok(operator_norm(&(&e.value - &target)))
}

/// Default derivative step for a family.
pub fn default_step(fam: &EvolutionFamily) -> f64 {
    DEFAULT_STEP_FRACTION * fam.horizon
}
