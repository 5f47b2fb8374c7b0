//! Invertible evolution families `U(t,s)` on `Cⁿ` built from generators with
//! closed-form propagators, plus grid checks of the family axioms.
//!
//! Constant (`A(t) = A`) and separable (`A(t) = g(t)·A`) generators commute
//! with their propagators; `U(t,s) = exp(G(t,s)·A)` with `G(t,s) = ∫ₛᵗ g`.
//! The piecewise kind switches between two constant generators and is the
//! non-commuting fixture used for negative controls.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::linalg::{self, matrix_exp_oracle, operator_norm, CMatrix};
use crate::scalar::ScalarFn;

#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorSpec {
    Constant { a: CMatrix },
    Separable { a: CMatrix, g: ScalarFn },
    /// `A(t) = before` for `t < switch`, `after` otherwise.
    Piecewise { before: CMatrix, after: CMatrix, switch: f64 },
}

impl GeneratorSpec {
    pub fn constant(a: CMatrix) -> Self {
        GeneratorSpec::Constant { a }
    }

    pub fn separable(a: CMatrix, g: ScalarFn) -> Self {
        GeneratorSpec::Separable { a, g }
    }

    pub fn dim(&self) -> usize {
        match self {
            GeneratorSpec::Constant { a } | GeneratorSpec::Separable { a, .. } => a.dim(),
            GeneratorSpec::Piecewise { before, .. } => before.dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let GeneratorSpec::Piecewise { before, after, switch } = self {
            if before.dim() != after.dim() {
                return Err(Error::DimensionMismatch { expected: before.dim(), got: after.dim() });
            }
            if !switch.is_finite() {
                return Err(Error::InvalidArgument("switch time must be finite".into()));
            }
        }
        Ok(())
    }

    /// True for the classes whose generator commutes with `U(t,s)`.
    pub fn is_commuting_class(&self) -> bool {
        !matches!(self, GeneratorSpec::Piecewise { .. })
    }

    /// `A(t)`.
    pub fn generator_at(&self, t: f64) -> CMatrix {
        match self {
            GeneratorSpec::Constant { a } => a.clone(),
            GeneratorSpec::Separable { a, g } => a.scale_re(g.eval(t)),
            GeneratorSpec::Piecewise { before, after, switch } => {
                if t < *switch {
                    before.clone()
                } else {
                    after.clone()
                }
            }
        }
    }

    /// Closed-form propagator; exactly `I` when `t == s`.
    pub fn propagator(&self, t: f64, s: f64) -> CMatrix {
        if t == s {
            return CMatrix::identity(self.dim());
        }
        match self {
            GeneratorSpec::Constant { a } => matrix_exp_oracle(&a.scale_re(t - s)),
            GeneratorSpec::Separable { a, g } => matrix_exp_oracle(&a.scale_re(g.integral(s, t))),
            GeneratorSpec::Piecewise { before, after, switch } => {
                let w = *switch;
                match (t < w, s < w) {
                    (true, true) => matrix_exp_oracle(&before.scale_re(t - s)),
                    (false, false) => matrix_exp_oracle(&after.scale_re(t - s)),
                    (false, true) => {
                        &matrix_exp_oracle(&after.scale_re(t - w)) * &matrix_exp_oracle(&before.scale_re(w - s))
                    }
                    (true, false) => {
                        &matrix_exp_oracle(&before.scale_re(t - w)) * &matrix_exp_oracle(&after.scale_re(w - s))
                    }
                }
            }
        }
    }

    /// `max(0, max Re spec(A)·sup|g|)` over the constant factors.
    pub fn growth_rate(&self, horizon: f64) -> Result<f64> {
        let max_re = |m: &CMatrix| -> Result<f64> {
            Ok(linalg::eigenvalues(m)?.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
        };
        let rate = match self {
            GeneratorSpec::Constant { a } => max_re(a)?,
            GeneratorSpec::Separable { a, g } => {
                // g may change sign, so both A and −A matter.
                let up = max_re(a)?;
                let down = max_re(&a.scale_re(-1.0))?;
                up.max(down) * g.sup_abs(horizon)
            }
            GeneratorSpec::Piecewise { before, after, .. } => max_re(before)?.max(max_re(after)?),
        };
        Ok(rate.max(0.0))
    }
}

#[derive(Debug, Clone)]
pub struct EvolutionFamily {
    pub spec: GeneratorSpec,
    pub horizon: f64,
    pub growth_m: f64,
    pub growth_beta: f64,
    /// Test-only corruption added to entry (0, 0) of every `U(t,s)`, `t ≠ s`.
    pub perturbation: Option<f64>,
}

/// Grid size used to certify growth constants at construction.
pub const GROWTH_GRID: usize = 65;

pub fn build_family(spec: GeneratorSpec, horizon: f64) -> Result<EvolutionFamily> {
    spec.validate()?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    let mut fam = EvolutionFamily { spec, horizon, growth_m: 1.0, growth_beta: 0.0, perturbation: None };
    let (m, beta) = estimate_growth(&fam, GROWTH_GRID)?;
    fam.growth_m = m;
    fam.growth_beta = beta;
    Ok(fam)
}

impl EvolutionFamily {
    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    /// `M·e^{βT}`.
    pub fn growth_bound(&self) -> f64 {
        self.growth_m * (self.growth_beta * self.horizon).exp()
    }

    pub fn with_perturbation(mut self, delta: f64) -> Self {
        self.perturbation = Some(delta);
        self
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        let slack = self.horizon * 1e-12;
        if !t.is_finite() || t.abs() > self.horizon + slack {
            return Err(Error::OutOfHorizon { time: t, horizon: self.horizon });
        }
        Ok(())
    }

    pub fn evaluate(&self, t: f64, s: f64) -> Result<CMatrix> {
        self.check_time(t)?;
        self.check_time(s)?;
        let mut u = self.spec.propagator(t, s);
        if let (Some(d), true) = (self.perturbation, t != s) {
            u.set(0, 0, u.get(0, 0) + linalg::re(d));
        }
        Ok(u)
    }

    pub fn generator_at(&self, t: f64) -> CMatrix {
        self.spec.generator_at(t)
    }

    /// `n` equispaced times covering `[−T, T]`.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        uniform_grid(-self.horizon, self.horizon, n)
    }
}

pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n)
            .map(|k| if k == n - 1 { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformanceReport {
    pub max_cocycle_residual: Option<f64>,
    pub max_inverse_residual: Option<f64>,
    pub max_commutation_residual: Option<f64>,
    pub grid: String,
    pub tol: f64,
    pub pass: bool,
}

/// Values of `U(t_i, t_j)` on a grid, indexed `[i * n + j]`.
fn grid_table(fam: &EvolutionFamily, times: &[f64]) -> Result<Vec<CMatrix>> {
    let n = times.len();
    exec::try_map_indexed(n * n, |k| fam.evaluate(times[k / n], times[k % n]))
}

/// Cocycle `U(t,r)U(r,s) = U(t,s)` over grid triples, inverse
/// `U(s,t)U(t,s) = I` over pairs, and commutation of `U(t,s)` with `U(s,t)`.
pub fn check_semigroup(fam: &EvolutionFamily, grid_points: usize, tol: f64) -> Result<ConformanceReport> {
    if grid_points < 3 {
        return Err(Error::InvalidArgument("semigroup check needs at least 3 grid points".into()));
    }
    let times = fam.grid(grid_points);
    let n = times.len();
    let table = grid_table(fam, &times)?;
    let id = CMatrix::identity(fam.dim());

    let cocycle = exec::map_indexed(n * n * n, |k| {
        let (i, j, l) = (k / (n * n), (k / n) % n, k % n);
        let lhs = &table[i * n + j] * &table[j * n + l];
        operator_norm(&(&lhs - &table[i * n + l]))
    });
    let pairs = exec::map_indexed(n * n, |k| {
        let (i, j) = (k / n, k % n);
        let fwd = &table[i * n + j];
        let back = &table[j * n + i];
        let inv = operator_norm(&(&(back * fwd) - &id));
        let comm = operator_norm(&(&(back * fwd) - &(fwd * back)));
        (inv, comm)
    });
    let max_cocycle = exec::max_of(cocycle);
    let max_inverse = exec::max_of(pairs.iter().map(|p| p.0));
    let max_comm = exec::max_of(pairs.iter().map(|p| p.1));
    Ok(ConformanceReport {
        max_cocycle_residual: Some(max_cocycle),
        max_inverse_residual: Some(max_inverse),
        max_commutation_residual: Some(max_comm),
        grid: format!("uniform {n} points on [-{0}, {0}]; {1} triples", fam.horizon, n * n * n),
        tol,
        pass: max_cocycle <= tol && max_inverse <= tol && max_comm <= tol,
    })
}

/// Max of `‖A(t)U(t,s) − U(t,s)A(t)‖` over grid pairs.
pub fn check_commutation(fam: &EvolutionFamily, grid_points: usize, tol: f64) -> Result<ConformanceReport> {
    if grid_points < 2 {
        return Err(Error::InvalidArgument("commutation check needs at least 2 grid points".into()));
    }
    let times = fam.grid(grid_points);
    let n = times.len();
    let res = exec::try_map_indexed(n * n, |k| {
        let (t, s) = (times[k / n], times[k % n]);
        let u = fam.evaluate(t, s)?;
        let a = fam.generator_at(t);
        Ok::<_, Error>(operator_norm(&(&(&a * &u) - &(&u * &a))))
    })?;
    let max = exec::max_of(res);
    Ok(ConformanceReport {
        max_cocycle_residual: None,
        max_inverse_residual: None,
        max_commutation_residual: Some(max),
        grid: format!("uniform {n} points on [-{0}, {0}]; {1} pairs", fam.horizon, n * n),
        tol,
        pass: max <= tol,
    })
}

/// Growth constants `(M, β)` with `‖U(t,s)‖ ≤ M·e^{βt} ≤ M·e^{βT}` on the
/// grid: `β` from the generator spectrum, `M` the grid maximum of
/// `‖U(t,s)‖·e^{−βt}`.
pub fn estimate_growth(fam: &EvolutionFamily, grid_points: usize) -> Result<(f64, f64)> {
    if grid_points < 3 {
        return Err(Error::InvalidArgument("growth estimate needs at least 3 grid points".into()));
    }
    let beta = fam.spec.growth_rate(fam.horizon)?;
    let times = fam.grid(grid_points);
    let n = times.len();
    let vals = exec::try_map_indexed(n * n, |k| {
        let (t, s) = (times[k / n], times[k % n]);
        fam.evaluate(t, s).map(|u| operator_norm(&u) * (-beta * t).exp())
    })?;
    Ok((exec::max_of(vals), beta))
}

/// Difference-quotient estimate of the generator at `t`: Richardson
/// combination `2·D(h) − D(2h)` of `D(h) = (U(t+h,t) − I)/h`, accurate to O(h²).
pub fn pregenerator_fd(fam: &EvolutionFamily, t: f64, h: f64) -> Result<CMatrix> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    fam.check_time(t - 2.0 * h)?;
    fam.check_time(t + 2.0 * h)?;
    let id = CMatrix::identity(fam.dim());
    let d1 = (&fam.evaluate(t + h, t)? - &id).scale_re(1.0 / h);
    let d2 = (&fam.evaluate(t + 2.0 * h, t)? - &id).scale_re(0.5 / h);
    Ok(&d1.scale_re(2.0) - &d2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::re;
    use std::f64::consts::{E, FRAC_PI_2, PI};

    fn rot() -> CMatrix {
        CMatrix::from_real_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]).unwrap()
    }

    fn scalar_family() -> EvolutionFamily {
        build_family(GeneratorSpec::constant(CMatrix::identity(1)), 1.0).unwrap()
    }

    fn rotation_family() -> EvolutionFamily {
        build_family(GeneratorSpec::constant(rot()), PI).unwrap()
    }

    fn separable_family() -> EvolutionFamily {
        build_family(GeneratorSpec::separable(CMatrix::real_diag(&[1.0, 2.0]), ScalarFn::Cos), 1.0).unwrap()
    }

    #[test]
    fn closed_form_evaluators() {
        let f = scalar_family();
        assert!((f.evaluate(1.0, 0.0).unwrap().get(0, 0) - re(E)).norm() < 1e-15);
        assert!((f.evaluate(0.3, -0.4).unwrap().get(0, 0) - re(0.7f64.exp())).norm() < 1e-14);
        assert_eq!(f.evaluate(0.3, 0.3).unwrap(), CMatrix::identity(1));

        let r = rotation_family();
        for t in [0.0, 0.4, FRAC_PI_2, 2.5, -3.0] {
            let u = r.evaluate(t, 0.0).unwrap();
            let want = CMatrix::from_real_rows(&[&[t.cos(), t.sin()], &[-t.sin(), t.cos()]]).unwrap();
            assert!((&u - &want).max_abs() < 1e-14);
        }
        assert!((&r.evaluate(FRAC_PI_2, 0.0).unwrap() - &rot()).max_abs() < 1e-15);

        let s = separable_family();
        let (t, s0) = (0.8_f64, -0.3_f64);
        let d = t.sin() - s0.sin();
        let want = CMatrix::real_diag(&[d.exp(), (2.0 * d).exp()]);
        assert!((&s.evaluate(t, s0).unwrap() - &want).max_abs() < 1e-13);
    }

    #[test]
    fn horizon_is_enforced() {
        let f = scalar_family();
        assert!(matches!(f.evaluate(1.5, 0.0), Err(Error::OutOfHorizon { .. })));
        assert!(matches!(f.evaluate(0.0, -1.01), Err(Error::OutOfHorizon { .. })));
        assert!(f.evaluate(1.0, -1.0).is_ok());
    }

    #[test]
    fn semigroup_checks() {
        let rep = check_semigroup(&scalar_family(), 7, 1e-12).unwrap();
        assert!(rep.pass, "{rep:?}");
        let rep = check_semigroup(&rotation_family(), 9, 1e-10).unwrap();
        assert!(rep.pass, "{rep:?}");
        let rep = check_semigroup(&separable_family(), 9, 1e-10).unwrap();
        assert!(rep.pass, "{rep:?}");
        let bad = rotation_family().with_perturbation(1e-3);
        let rep = check_semigroup(&bad, 9, 1e-10).unwrap();
        assert!(!rep.pass);
        assert!(rep.max_cocycle_residual.unwrap() > 1e-4);
        assert!(check_semigroup(&bad, 2, 1e-10).is_err());
    }

    #[test]
    fn growth_examples() {
        let (m, b) = estimate_growth(&rotation_family(), 17).unwrap();
        assert!((m - 1.0).abs() < 1e-14 && b == 0.0);

        let (m, b) = estimate_growth(&scalar_family(), 17).unwrap();
        assert_eq!(b, 1.0);
        assert!((m - E).abs() < 1e-14);
        assert!((scalar_family().growth_bound() - E * E).abs() < 1e-13);

        let zero = build_family(GeneratorSpec::constant(CMatrix::zeros(3)), 2.0).unwrap();
        assert_eq!((zero.growth_m, zero.growth_beta), (1.0, 0.0));
    }

    #[test]
    fn growth_certificate_holds_on_finer_grid() {
        for fam in [scalar_family(), rotation_family(), separable_family()] {
            let bound = fam.growth_bound();
            let times = fam.grid(4 * (GROWTH_GRID - 1) + 1);
            for &t in &times {
                for &s in times.iter().step_by(3) {
                    let nu = operator_norm(&fam.evaluate(t, s).unwrap());
                    assert!(nu <= bound * (1.0 + 1e-12), "{t} {s}: {nu} > {bound}");
                    assert!(nu <= fam.growth_m * (fam.growth_beta * t).exp() * (1.0 + 1e-9));
                }
            }
        }
    }

    #[test]
    fn pregenerator_examples() {
        let a = pregenerator_fd(&scalar_family(), 0.0, 1e-4).unwrap();
        assert!((a.get(0, 0) - re(1.0)).norm() < 1e-7);
        let a = pregenerator_fd(&rotation_family(), 0.5, 1e-4).unwrap();
        assert!((&a - &rot()).max_abs() < 1e-7);
        let s = separable_family();
        let a = pregenerator_fd(&s, 0.0, 1e-4).unwrap();
        assert!((&a - &CMatrix::real_diag(&[1.0, 2.0])).max_abs() < 1e-7);
        assert!(matches!(pregenerator_fd(&s, 0.9999, 1e-3), Err(Error::OutOfHorizon { .. })));
    }

    #[test]
    fn pregenerator_is_second_order() {
        let s = separable_family();
        let t = 0.4;
        let exact = s.generator_at(t);
        let errs: Vec<f64> = [1e-2, 1e-3]
            .iter()
            .map(|&h| operator_norm(&(&pregenerator_fd(&s, t, h).unwrap() - &exact)))
            .collect();
        let order = (errs[0] / errs[1]).log10();
        assert!((order - 2.0).abs() < 0.2, "observed order {order}, errors {errs:?}");
        let e4 = operator_norm(&(&pregenerator_fd(&s, t, 1e-4).unwrap() - &exact));
        assert!(e4 < errs[1]);
    }

    #[test]
    fn commutation_checks() {
        for fam in [scalar_family(), rotation_family(), separable_family()] {
            let rep = check_commutation(&fam, 9, 1e-12).unwrap();
            assert!(rep.pass, "{rep:?}");
        }
        let shear = CMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]).unwrap();
        let spec = GeneratorSpec::Piecewise { before: shear, after: rot(), switch: 0.0 };
        assert!(!spec.is_commuting_class());
        let fam = build_family(spec, 1.0).unwrap();
        let rep = check_commutation(&fam, 9, 1e-10).unwrap();
        assert!(!rep.pass);
        assert!(rep.max_commutation_residual.unwrap() > 1e-2);
        // Still a genuine evolution family.
        assert!(check_semigroup(&fam, 9, 1e-10).unwrap().pass);
    }
}
