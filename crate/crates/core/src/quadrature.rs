//! Gauss-Legendre rules and a dyadic adaptive composite integrator for
//! vector-valued integrands.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::exec;
use crate::linalg::{vec_norm, CVector};

#[derive(Debug, Clone)]
pub struct Rule {
    /// Nodes on [−1, 1], ascending.
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// n-point Gauss-Legendre rule by Newton iteration on Pₙ.
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule { nodes, weights }
}

/// (Pₙ(x), Pₙ'(x)) by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Applies `rule` on [a, b].
pub fn panel<F>(rule: &Rule, a: f64, b: f64, f: &F) -> Result<CVector>
where
    F: Fn(f64) -> Result<CVector>,
{
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc: Option<CVector> = None;
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        let v = f(mid + half * x)? * num_complex::Complex64::new(w * half, 0.0);
        acc = Some(match acc {
            None => v,
            Some(s) => s + v,
        });
    }
    Ok(acc.expect("rule has at least one node"))
}

#[derive(Debug, Clone)]
pub struct AdaptiveResult {
    pub value: CVector,
    pub panels: usize,
    /// Sum of accepted local refinement differences.
    pub error_estimate: f64,
}

/// Integrates `f` over [a, b] (either orientation) with composite
/// Gauss-Legendre panels of `order` points, bisecting each panel until its
/// estimate and the sum of its halves differ by at most its share of `tol`.
/// Panels at one refinement level are evaluated concurrently; accepted panels
/// are summed left to right.
pub fn adaptive_gl<F>(
    f: &F,
    a: f64,
    b: f64,
    order: usize,
    tol: f64,
    max_panels: usize,
) -> Result<AdaptiveResult>
where
    F: Fn(f64) -> Result<CVector> + Sync,
{
    let rule = gauss_legendre(order);
    let total = (b - a).abs();
    if total == 0.0 {
        let z = f(a)? * num_complex::Complex64::new(0.0, 0.0);
        return Ok(AdaptiveResult { value: z, panels: 0, error_estimate: 0.0 });
    }
    let root = panel(&rule, a, b, f)?;
    let mut pending: Vec<(f64, f64, CVector)> = vec![(a, b, root)];
    let mut accepted: Vec<(f64, CVector, f64)> = Vec::new();
    let mut panels = 1usize;

    while !pending.is_empty() {
        let evaluated = exec::try_map_indexed(pending.len(), |i| {
            let (lo, hi, _) = &pending[i];
            let mid = 0.5 * (lo + hi);
            let l = panel(&rule, *lo, mid, f)?;
            let r = panel(&rule, mid, *hi, f)?;
            Ok::<_, Error>((l, r))
        })?;
        let mut next = Vec::new();
        for ((lo, hi, whole), (l, r)) in pending.into_iter().zip(evaluated) {
            let mid = 0.5 * (lo + hi);
            let refined = &l + &r;
            let diff = vec_norm(&(&refined - &whole));
            let share = tol * (hi - lo).abs() / total;
            if diff <= share || (hi - lo).abs() <= total * f64::EPSILON * 16.0 {
                accepted.push((lo, refined, diff));
            } else {
                panels += 1;
                next.push((lo, mid, l));
                next.push((mid, hi, r));
            }
        }
        if panels > max_panels {
            return Err(Error::QuadratureStall { panels });
        }
        pending = next;
    }

    if b > a {
        accepted.sort_by(|x, y| x.0.total_cmp(&y.0));
    } else {
        accepted.sort_by(|x, y| y.0.total_cmp(&x.0));
    }
    let error_estimate = accepted.iter().map(|p| p.2).sum();
    let vals: Vec<CVector> = accepted.into_iter().map(|p| p.1).collect();
    let value = pairwise(&vals);
    Ok(AdaptiveResult { value, panels, error_estimate })
}

fn pairwise(v: &[CVector]) -> CVector {
    match v.len() {
        1 => v[0].clone(),
        n => {
            let (l, r) = v.split_at(n / 2);
            pairwise(l) + pairwise(r)
        }
    }
}
