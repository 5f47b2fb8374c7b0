//! Scenario files and the command pipeline behind the `logcalc` binary.
//!
//! A scenario is a JSON object with `"schema": 1`. Parsing goes through
//! `serde_json::Value` first so that syntax errors carry a line and column,
//! unknown keys are reported by name, and type errors name the top-level
//! field they occur in.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cauchy::{
    derivative_bound_scan, dunford_poly_exp, holder_estimate, oracle_solve, poly_exp_derivative_gap, residual_bound,
    residual_check, scan_ratio, solve_autonomous, solve_series, CauchyProblem, Forcing, Trajectory,
};
use crate::error::{Error, Result};
use crate::evolution::{build_family, check_commutation, check_semigroup, uniform_grid, EvolutionFamily, GeneratorSpec};
use crate::exec;
use crate::linalg::{operator_norm, CMatrix, CVector};
use crate::logrep::{
    dt_log_closed_form, dt_log_with_nodes, exp_series, log_representation, reconstruct_from_derivative,
    shifted_propagator, KappaShift,
};
use crate::scalar::ScalarFn;

pub const SCHEMA_VERSION: u64 = 1;
pub const VERSION: &str = concat!("logcalc ", env!("CARGO_PKG_VERSION"));

/// Margins swept by the κ-invariance checks.
pub const INVARIANCE_MARGINS: [f64; 4] = [1.2, 1.5, 3.0, 10.0];
/// Points per axis of the `(t, s)` sweep.
pub const SWEEP_POINTS: usize = 9;
/// Extra seeded random `(t, s)` pairs appended to the sweep.
pub const RANDOM_PAIRS: usize = 8;

/// Known tolerance names, their defaults and meaning.
pub const TOLERANCES: &[(&str, f64, &str)] = &[
    ("dunford", 1e-12, "trapezoid doubling gap for Log(U + κI)"),
    ("reconstruction", 1e-5, "max |A(t) − reconstructed A(t)|"),
    ("closed_form", 1e-6, "max |dt_log − closed-form derivative|"),
    ("roundtrip", 1e-9, "max |exp(a) − (U + κI)|"),
    ("series_terms", 40.0, "largest exp-series truncation at 1e-12"),
    ("semigroup", 1e-10, "cocycle and inverse residuals"),
    ("nonsemigroup", 1e-2, "min cocycle gap of exp(a), must exceed"),
    ("solve", 1e-10, "series solver tolerance"),
    ("series_vs_oracle", 1e-6, "max |series − oracle| over output times"),
    ("kappa_reconstruction", 1e-6, "spread of reconstructed A(t) across margins"),
    ("kappa_solution", 1e-8, "spread of the series solution across margins"),
    ("poly_exp", 1e-8, "|Dunford(λⁿe^λ)(a) − aⁿ·exp(a)|"),
    ("holder_gamma", 0.05, "allowed excess of declared γ over the estimate"),
];

fn default_tolerance(name: &str) -> Option<f64> {
    TOLERANCES.iter().find(|t| t.0 == name).map(|t| t.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    Constant,
    Separable,
    Piecewise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorFragment {
    pub kind: GeneratorKind,
    #[serde(rename = "A")]
    pub a: CMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<ScalarFn>,
    /// Generator after the switch (piecewise only).
    #[serde(rename = "A2", default, skip_serializing_if = "Option::is_none")]
    pub a2: Option<CMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch: Option<f64>,
}

impl GeneratorFragment {
    pub fn to_spec(&self) -> Result<GeneratorSpec> {
        let bad = |m: &str| Error::SchemaViolation { field: "generator".into(), message: m.into() };
        let spec = match self.kind {
            GeneratorKind::Constant => {
                if self.g.is_some() || self.a2.is_some() || self.switch.is_some() {
                    return Err(bad("constant generators take only A"));
                }
                GeneratorSpec::constant(self.a.clone())
            }
            GeneratorKind::Separable => {
                if self.a2.is_some() || self.switch.is_some() {
                    return Err(bad("separable generators take A and g"));
                }
                let g = self.g.clone().ok_or_else(|| bad("separable generators need g"))?;
                GeneratorSpec::separable(self.a.clone(), g)
            }
            GeneratorKind::Piecewise => {
                if self.g.is_some() {
                    return Err(bad("piecewise generators take A, A2 and switch"));
                }
                let after = self.a2.clone().ok_or_else(|| bad("piecewise generators need A2"))?;
                let switch = self.switch.ok_or_else(|| bad("piecewise generators need switch"))?;
                GeneratorSpec::Piecewise { before: self.a.clone(), after, switch }
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KappaPolicy {
    Margin { margin: f64 },
    Explicit { kappa: Complex64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Initial {
    pub s: f64,
    pub u: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub schema: u64,
    pub name: String,
    pub generator: GeneratorFragment,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub kappa_policy: KappaPolicy,
    pub tolerances: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub forcing: Option<Forcing>,
    pub initial: Initial,
    pub output_times: Vec<f64>,
    pub seed: u64,
    /// Corrupts `U(t,s)` for negative controls.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<f64>,
}

const TOP_KEYS: &[&str] = &[
    "schema",
    "name",
    "generator",
    "T",
    "kappa_policy",
    "tolerances",
    "forcing",
    "initial",
    "output_times",
    "seed",
    "perturbation",
];
const REQUIRED_KEYS: &[&str] = &["schema", "name", "generator", "T", "kappa_policy", "initial", "output_times"];

fn schema_err(field: &str, message: impl Into<String>) -> Error {
    Error::SchemaViolation { field: field.into(), message: message.into() }
}

fn check_keys(v: &Value, field: &str, allowed: &[&str]) -> Result<()> {
    let obj = v.as_object().ok_or_else(|| schema_err(field, "expected an object"))?;
    for k in obj.keys() {
        if !allowed.contains(&k.as_str()) {
            return Err(schema_err(k, format!("unknown key in {field}")));
        }
    }
    Ok(())
}

fn field<T: for<'de> Deserialize<'de>>(obj: &serde_json::Map<String, Value>, key: &str) -> Result<T> {
    let v = obj.get(key).cloned().unwrap_or(Value::Null);
    serde_json::from_value(v).map_err(|e| schema_err(key, e.to_string()))
}

/// Parses and validates scenario text.
pub fn parse_scenario_str(text: &str) -> Result<Scenario> {
    let root: Value = serde_json::from_str(text)
        .map_err(|e| Error::ParseError { line: e.line(), column: e.column(), message: e.to_string() })?;
    check_keys(&root, "scenario", TOP_KEYS)?;
    let obj = root.as_object().expect("checked above");
    for k in REQUIRED_KEYS {
        if !obj.contains_key(*k) {
            return Err(schema_err(k, "missing required key"));
        }
    }
    check_keys(&obj["generator"], "generator", &["kind", "A", "g", "A2", "switch"])?;
    check_keys(&obj["kappa_policy"], "kappa_policy", &["margin", "kappa"])?;
    check_keys(&obj["initial"], "initial", &["s", "u"])?;
    if let Some(f) = obj.get("forcing") {
        check_keys(f, "forcing", &["components", "holder_C", "holder_gamma"])?;
    }
    let policy_keys = obj["kappa_policy"].as_object().map_or(0, |m| m.len());
    if policy_keys != 1 {
        return Err(schema_err("kappa_policy", "give exactly one of margin or kappa"));
    }

    let schema: u64 = field(obj, "schema")?;
    if schema != SCHEMA_VERSION {
        return Err(schema_err("schema", format!("unsupported version {schema}")));
    }
    let tolerances: BTreeMap<String, f64> =
        if obj.contains_key("tolerances") { field(obj, "tolerances")? } else { BTreeMap::new() };
    let scenario = Scenario {
        schema,
        name: field(obj, "name")?,
        generator: field(obj, "generator")?,
        horizon: field(obj, "T")?,
        kappa_policy: field(obj, "kappa_policy")?,
        tolerances,
        forcing: if obj.contains_key("forcing") { Some(field(obj, "forcing")?) } else { None },
        initial: field(obj, "initial")?,
        output_times: field(obj, "output_times")?,
        seed: if obj.contains_key("seed") { field(obj, "seed")? } else { 0 },
        perturbation: if obj.contains_key("perturbation") { Some(field(obj, "perturbation")?) } else { None },
    };
    scenario.validate()?;
    Ok(scenario)
}

pub fn parse_scenario(path: &Path) -> Result<Scenario> {
    parse_scenario_str(&fs::read_to_string(path)?)
}

/// Pretty JSON that [`parse_scenario_str`] reads back to an equal value.
pub fn emit_scenario(s: &Scenario) -> String {
    serde_json::to_string_pretty(s).expect("scenario serialises")
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(schema_err("name", "must not be empty"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(schema_err("T", "must be a positive real"));
        }
        for (k, v) in &self.tolerances {
            if default_tolerance(k).is_none() {
                return Err(schema_err(k, "unknown tolerance name"));
            }
            if !(*v > 0.0 && v.is_finite()) {
                return Err(schema_err(k, "tolerances must be positive"));
            }
        }
        if let KappaPolicy::Margin { margin } = self.kappa_policy {
            if !(margin > 1.0 && margin.is_finite()) {
                return Err(Error::BadMargin(margin));
            }
        }
        for &t in self.output_times.iter().chain(std::iter::once(&self.initial.s)) {
            if !t.is_finite() || t.abs() > self.horizon {
                return Err(schema_err("output_times", format!("time {t} lies outside [-T, T]")));
            }
        }
        if self.output_times.is_empty() || self.output_times.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(schema_err("output_times", "must be a nonempty ascending list"));
        }
        let spec = self.generator.to_spec()?;
        if self.initial.u.len() != spec.dim() {
            return Err(schema_err("initial", format!("u has {} entries, generator dimension is {}", self.initial.u.len(), spec.dim())));
        }
        if let Some(f) = &self.forcing {
            if f.dim() != spec.dim() {
                return Err(schema_err("forcing", format!("{} components for dimension {}", f.dim(), spec.dim())));
            }
            f.validate(self.horizon)?;
        }
        Ok(())
    }

    pub fn tolerance(&self, name: &str) -> f64 {
        self.tolerances
            .get(name)
            .copied()
            .or_else(|| default_tolerance(name))
            .unwrap_or_else(|| panic!("unknown tolerance {name}"))
    }

    /// Applies `name=value` overrides.
    pub fn override_tolerance(&mut self, name: &str, value: f64) -> Result<()> {
        if default_tolerance(name).is_none() {
            return Err(schema_err(name, "unknown tolerance name"));
        }
        if !(value > 0.0 && value.is_finite()) {
            return Err(schema_err(name, "tolerances must be positive"));
        }
        self.tolerances.insert(name.to_string(), value);
        Ok(())
    }

    pub fn family(&self) -> Result<EvolutionFamily> {
        let fam = build_family(self.generator.to_spec()?, self.horizon)?;
        Ok(match self.perturbation {
            Some(d) => fam.with_perturbation(d),
            None => fam,
        })
    }

    pub fn shift(&self, fam: &EvolutionFamily) -> Result<KappaShift> {
        match self.kappa_policy {
            KappaPolicy::Margin { margin } => KappaShift::for_family(fam, margin),
            KappaPolicy::Explicit { kappa } => {
                if kappa.im != 0.0 || kappa.re <= 0.0 {
                    return Err(Error::InvalidArgument("explicit κ must lie on the positive real axis".into()));
                }
                KappaShift::explicit(kappa, fam.growth_bound())
            }
        }
    }

    pub fn problem(&self, fam: EvolutionFamily) -> Result<CauchyProblem> {
        let u = CVector::from_vec(self.initial.u.clone());
        CauchyProblem::with_family(fam, u, self.initial.s, self.forcing.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Validate,
    Logrep,
    Solve,
    Check,
    Report,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Logrep => "logrep",
            Command::Solve => "solve",
            Command::Check => "check",
            Command::Report => "report",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub value: f64,
    /// `"<="` or `">"`.
    pub relation: &'static str,
    pub threshold: f64,
    pub pass: bool,
}

impl CheckRecord {
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        CheckRecord { name: name.into(), value, relation: "<=", threshold, pass: value <= threshold }
    }

    pub fn above(name: &str, value: f64, threshold: f64) -> Self {
        CheckRecord { name: name.into(), value, relation: ">", threshold, pass: value > threshold }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRecord {
    pub phase: String,
    pub kind: String,
    pub message: String,
}

fn error_kind(e: &Error) -> String {
    let d = format!("{e:?}");
    d.split(|c: char| !c.is_alphanumeric()).next().unwrap_or("Error").to_string()
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub version: &'static str,
    pub scenario: String,
    pub command: &'static str,
    pub pass: bool,
    pub checks: Vec<CheckRecord>,
    pub errors: Vec<ErrorRecord>,
    /// Provenance: shift, contour, growth constants, node counts, scans.
    pub info: BTreeMap<String, Value>,
    pub timings_ms: BTreeMap<String, f64>,
}

impl RunReport {
    fn new(scenario: &str, command: Command) -> Self {
        RunReport {
            version: VERSION,
            scenario: scenario.into(),
            command: command.as_str(),
            pass: false,
            checks: Vec::new(),
            errors: Vec::new(),
            info: BTreeMap::new(),
            timings_ms: BTreeMap::new(),
        }
    }

    fn finish(&mut self) {
        self.pass = self.errors.is_empty() && self.checks.iter().all(|c| c.pass);
    }

    pub fn check(&self, name: &str) -> Option<&CheckRecord> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Process exit status.
    pub fn exit_code(&self) -> i32 {
        if self.pass {
            0
        } else if self.errors.is_empty() {
            1
        } else {
            2
        }
    }
}

/// Mutable run state shared by the phases.
struct Ctx<'a> {
    scenario: &'a Scenario,
    out: PathBuf,
    report: RunReport,
}

impl Ctx<'_> {
    fn phase<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Option<T> {
        let start = Instant::now();
        let r = f(self);
        self.report.timings_ms.insert(name.into(), start.elapsed().as_secs_f64() * 1e3);
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.report.errors.push(ErrorRecord { phase: name.into(), kind: error_kind(&e), message: e.to_string() });
                None
            }
        }
    }

    fn tol(&self, name: &str) -> f64 {
        self.scenario.tolerance(name)
    }

    fn write(&self, rel: &str, body: &str) -> Result<()> {
        let path = self.out.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, body)?;
        Ok(())
    }

    fn info(&mut self, key: &str, v: Value) {
        self.report.info.insert(key.into(), v);
    }
}

/// Runs `command` on `scenario`, writing artefacts below `out_dir`.
/// Failures become error records; the report is always written.
pub fn run(command: Command, scenario: &Scenario, out_dir: &Path) -> RunReport {
    let mut ctx = Ctx { scenario, out: out_dir.to_path_buf(), report: RunReport::new(&scenario.name, command) };
    let setup = ctx.phase("setup", |c| {
        let fam = c.scenario.family()?;
        c.info(
            "growth",
            json!({"M": fam.growth_m, "beta": fam.growth_beta, "bound": fam.growth_bound(), "horizon": fam.horizon}),
        );
        Ok(fam)
    });
    if let Some(fam) = setup {
        let wants = |cmds: &[Command]| cmds.contains(&command);
        if wants(&[Command::Validate, Command::Check, Command::Report]) {
            ctx.phase("validate", |c| validate_phase(c, &fam));
        }
        if wants(&[Command::Logrep, Command::Check, Command::Report]) {
            ctx.phase("logrep", |c| logrep_phase(c, &fam));
        }
        if wants(&[Command::Solve, Command::Check, Command::Report]) {
            ctx.phase("solve", |c| solve_phase(c, &fam));
        }
        if wants(&[Command::Check, Command::Report]) {
            ctx.phase("invariance", |c| invariance_phase(c, &fam));
            ctx.phase("functional_calculus", |c| poly_exp_phase(c, &fam));
        }
        if command == Command::Report {
            ctx.phase("derivative_scan", |c| scan_phase(c, &fam));
        }
    }
    ctx.report.finish();
    let body = serde_json::to_string_pretty(&ctx.report).expect("report serialises");
    if let Err(e) = ctx.write("report.json", &body) {
        ctx.report.errors.push(ErrorRecord { phase: "write".into(), kind: error_kind(&e), message: e.to_string() });
        ctx.report.finish();
    }
    ctx.report
}

fn validate_phase(c: &mut Ctx, fam: &EvolutionFamily) -> Result<()> {
    let tol = c.tol("semigroup");
    let rep = check_semigroup(fam, SWEEP_POINTS, tol)?;
    c.report.checks.push(CheckRecord::at_most("cocycle", rep.max_cocycle_residual.unwrap_or(f64::NAN), tol));
    c.report.checks.push(CheckRecord::at_most("inverse", rep.max_inverse_residual.unwrap_or(f64::NAN), tol));
    let comm = check_commutation(fam, SWEEP_POINTS, tol)?;
    c.info(
        "commutation",
        json!({"max_residual": comm.max_commutation_residual, "commuting": comm.pass, "grid": comm.grid}),
    );
    c.info("conformance", serde_json::to_value(&rep).expect("serialisable"));
    Ok(())
}

/// Interior grid that leaves room for the derivative stencil.
pub fn sweep_grid(fam: &EvolutionFamily) -> Vec<f64> {
    let edge = fam.horizon - 4.0 * crate::logrep::default_step(fam);
    uniform_grid(-edge, edge, SWEEP_POINTS)
}

/// The `(t, s)` pairs of the sweep: the full grid, then seeded random pairs.
pub fn sweep_pairs(fam: &EvolutionFamily, seed: u64) -> Vec<(f64, f64)> {
    let grid = sweep_grid(fam);
    let mut pairs: Vec<(f64, f64)> = grid.iter().flat_map(|&t| grid.iter().map(move |&s| (t, s))).collect();
    let edge = grid[grid.len() - 1];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..RANDOM_PAIRS {
        pairs.push((rng.gen_range(-edge..=edge), rng.gen_range(-edge..=edge)));
    }
    pairs
}

#[derive(Debug, Clone)]
struct SweepRow {
    t: f64,
    s: f64,
    reconstruction: f64,
    closed_form: f64,
    roundtrip: f64,
    series_terms: usize,
    nodes: usize,
    reconstructed: CMatrix,
}

fn sweep_point(fam: &EvolutionFamily, shift: &KappaShift, t: f64, s: f64, tol: f64) -> Result<SweepRow> {
    let h = crate::logrep::default_step(fam);
    let (da, nodes) = dt_log_with_nodes(fam, shift, t, s, h, tol)?;
    let rec = reconstruct_from_derivative(fam, shift, t, s, &da)?;
    let cf = dt_log_closed_form(fam, shift, t, s)?;
    let rep = log_representation(fam, shift, t, s, tol)?;
    let e = exp_series(&rep.a, 1e-12)?;
    let target = shifted_propagator(fam, shift, t, s)?;
    Ok(SweepRow {
        t,
        s,
        reconstruction: operator_norm(&(&rec - &fam.generator_at(t))),
        closed_form: operator_norm(&(&da - &cf)),
        roundtrip: operator_norm(&(&e.value - &target)),
        series_terms: e.terms,
        nodes: nodes.max(rep.nodes_used),
        reconstructed: rec,
    })
}

fn sweep(fam: &EvolutionFamily, shift: &KappaShift, pairs: &[(f64, f64)], tol: f64) -> Result<Vec<SweepRow>> {
    exec::try_map_slice(pairs, |&(t, s)| sweep_point(fam, shift, t, s, tol))
}

fn logrep_phase(c: &mut Ctx, fam: &EvolutionFamily) -> Result<()> {
    if !fam.spec.is_commuting_class() {
        return Err(Error::CommutationViolated);
    }
    let shift = c.scenario.shift(fam)?;
    let contour = shift.contour()?;
    c.info("kappa", json!({"kappa": [shift.kappa.re, shift.kappa.im], "margin": shift.margin, "growth_bound": shift.growth_bound}));
    c.info("contour", serde_json::to_value(contour).expect("serialisable"));
    let pairs = sweep_pairs(fam, c.scenario.seed);
    let rows = sweep(fam, &shift, &pairs, c.tol("dunford"))?;

    let mut csv = String::from("t,s,kappa,residual_reconstruction,residual_roundtrip,nodes_used\n");
    for r in &rows {
        csv.push_str(&format!(
            "{:.17e},{:.17e},{:.17e},{:.6e},{:.6e},{}\n",
            r.t, r.s, shift.kappa.re, r.reconstruction, r.roundtrip, r.nodes
        ));
    }
    c.write("residuals.csv", &csv)?;

    let max = |f: fn(&SweepRow) -> f64| exec::max_of(rows.iter().map(f));
    c.report.checks.push(CheckRecord::at_most("reconstruction", max(|r| r.reconstruction), c.tol("reconstruction")));
    c.report.checks.push(CheckRecord::at_most("closed_form", max(|r| r.closed_form), c.tol("closed_form")));
    c.report.checks.push(CheckRecord::at_most("roundtrip", max(|r| r.roundtrip), c.tol("roundtrip")));
    c.report.checks.push(CheckRecord::at_most(
        "series_terms",
        rows.iter().map(|r| r.series_terms).max().unwrap_or(0) as f64,
        c.tol("series_terms"),
    ));
    let nodes: Vec<usize> = rows.iter().map(|r| r.nodes).collect();
    c.info("nodes_used", json!({"min": nodes.iter().min(), "max": nodes.iter().max()}));

    // exp(a) is not itself an evolution family.
    let grid = sweep_grid(fam);
    let (t, r, s) = (grid[SWEEP_POINTS - 1], grid[SWEEP_POINTS / 2 + 1], grid[0]);
    let e = |x: f64, y: f64| -> Result<CMatrix> {
        Ok(exp_series(&log_representation(fam, &shift, x, y, c.tol("dunford"))?.a, 1e-12)?.value)
    };
    let gap = operator_norm(&(&(&e(t, r)? * &e(r, s)?) - &e(t, s)?));
    c.report.checks.push(CheckRecord::above("nonsemigroup", gap, c.tol("nonsemigroup")));
    Ok(())
}

fn trajectory_checks(c: &mut Ctx, label: &str, tr: &Trajectory, p: &CauchyProblem) -> Result<()> {
    c.write(&format!("trajectories/{label}.csv"), &tr.to_csv())?;
    match residual_check(tr, p) {
        Ok(res) => {
            let bound = residual_bound(tr, p)?;
            c.report.checks.push(CheckRecord::at_most(&format!("residual_{label}"), res, bound));
        }
        Err(Error::GridTooCoarse(msg)) => {
            c.info(&format!("residual_{label}"), json!({"skipped": msg}));
        }
        Err(e) => return Err(e),
    }
    Ok(())
}

fn solve_phase(c: &mut Ctx, fam: &EvolutionFamily) -> Result<()> {
    let p = c.scenario.problem(fam.clone())?;
    let times = c.scenario.output_times.clone();
    let tol = c.tol("solve");
    let oracle = oracle_solve(&p, tol / 100.0, &times)?;
    trajectory_checks(c, "oracle", &oracle, &p)?;
    let shift = c.scenario.shift(fam)?;
    let series = solve_series(&p, &shift, tol, &times)?;
    trajectory_checks(c, "series", &series, &p)?;
    c.report.checks.push(CheckRecord::at_most("series_vs_oracle", series.max_deviation(&oracle)?, c.tol("series_vs_oracle")));
    c.info("series_tol_achieved", json!(series.tol_achieved));
    if let Some(f) = &p.forcing {
        let grid = uniform_grid(0.0, fam.horizon, 33);
        let est = holder_estimate(|t| f.eval(t), &grid)?;
        c.info("holder_estimate", serde_json::to_value(est).expect("serialisable"));
        // The declared exponent must not claim more regularity than the data show.
        let excess = if est.degenerate { 0.0 } else { (f.holder_gamma - est.gamma).max(0.0) };
        c.report.checks.push(CheckRecord::at_most("holder_gamma", excess, c.tol("holder_gamma")));
    }
    Ok(())
}

fn invariance_phase(c: &mut Ctx, fam: &EvolutionFamily) -> Result<()> {
    if !fam.spec.is_commuting_class() {
        return Err(Error::CommutationViolated);
    }
    let pairs = sweep_pairs(fam, c.scenario.seed);
    let mut per_margin: Vec<Vec<CMatrix>> = Vec::new();
    let mut worst = 0.0_f64;
    for &m in &INVARIANCE_MARGINS {
        let shift = KappaShift::for_family(fam, m)?;
        let rows = sweep(fam, &shift, &pairs, c.tol("dunford"))?;
        worst = worst.max(exec::max_of(rows.iter().map(|r| r.reconstruction)));
        per_margin.push(rows.into_iter().map(|r| r.reconstructed).collect());
    }
    let spread = spread_of(&per_margin);
    c.report.checks.push(CheckRecord::at_most("kappa_reconstruction", spread, c.tol("kappa_reconstruction")));
    c.report.checks.push(CheckRecord::at_most("reconstruction_all_margins", worst, c.tol("reconstruction")));

    // Solution invariance on the homogeneous problem.
    let u = CVector::from_vec(c.scenario.initial.u.clone());
    let p = CauchyProblem::with_family(fam.clone(), u, c.scenario.initial.s, None)?;
    let mut sols: Vec<Vec<CMatrix>> = Vec::new();
    for &m in &INVARIANCE_MARGINS {
        let shift = KappaShift::for_family(fam, m)?;
        let tr = solve_autonomous(&p, &shift, c.tol("solve"), &c.scenario.output_times)?;
        sols.push(tr.states.iter().map(|v| CMatrix::diag(v.as_slice())).collect());
    }
    c.report.checks.push(CheckRecord::at_most("kappa_solution", spread_of(&sols), c.tol("kappa_solution")));
    Ok(())
}

/// Max over items of the largest deviation from the first column.
fn spread_of(sets: &[Vec<CMatrix>]) -> f64 {
    let Some(first) = sets.first() else { return 0.0 };
    exec::max_of(
        sets[1..]
            .iter()
            .flat_map(|set| set.iter().zip(first).map(|(a, b)| (a - b).max_abs())),
    )
}

fn poly_exp_phase(c: &mut Ctx, fam: &EvolutionFamily) -> Result<()> {
    if !fam.spec.is_commuting_class() {
        return Err(Error::CommutationViolated);
    }
    let shift = c.scenario.shift(fam)?;
    let grid = sweep_grid(fam);
    let picks = [0, SWEEP_POINTS / 2, SWEEP_POINTS - 1];
    let tol = c.tol("poly_exp");
    let mut worst = 0.0_f64;
    for &i in &picks {
        for &j in &picks {
            let a = log_representation(fam, &shift, grid[i], grid[j], c.tol("dunford"))?.a;
            let e = exp_series(&a, 1e-14)?.value;
            for n in 0..=3u32 {
                let direct = &a.powi(n) * &e;
                let d = dunford_poly_exp(&a, n, tol / 10.0)?;
                worst = worst.max((&d - &direct).max_abs());
            }
        }
    }
    c.report.checks.push(CheckRecord::at_most("poly_exp", worst, tol));
    Ok(())
}

fn scan_phase(c: &mut Ctx, fam: &EvolutionFamily) -> Result<()> {
    if !fam.spec.is_commuting_class() {
        return Err(Error::CommutationViolated);
    }
    let shift = c.scenario.shift(fam)?;
    let grid: Vec<f64> = (3..=10).map(|k| 2f64.powi(-k)).filter(|&t| 3.0 * t <= fam.horizon).collect();
    let mut csv = String::from("n,t,scaled_norm\n");
    let mut ratios = BTreeMap::new();
    for n in 1..=2u32 {
        let scan = derivative_bound_scan(fam, &shift, 0.0, n, &grid)?;
        for (t, v) in &scan {
            csv.push_str(&format!("{n},{t:.17e},{v:.17e}\n"));
        }
        let gap = poly_exp_derivative_gap(fam, &shift, grid[0], 0.0, n)?;
        ratios.insert(format!("n{n}"), json!({"max_min_ratio": scan_ratio(&scan), "poly_exp_gap": gap}));
    }
    c.write("derivative_scan.csv", &csv)?;
    c.info("derivative_scan", json!(ratios));
    Ok(())
}
