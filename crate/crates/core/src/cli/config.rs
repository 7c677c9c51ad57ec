//! Run configuration: a TOML file, or JSON with the same schema.
//!
//! ```toml
//! [algebroid]
//! builtin = "so3"                 # or m, n, rho, structure (1-based indices)
//!
//! [lagrangian]
//! expr = "(v1^2 + v2^2 + v3^2)/2"
//!
//! [constraints]                   # optional
//! dependent = [2]                 # 1-based fiber indices
//! psi = ["0"]                     # over x.., y.. and the free v names
//!
//! [simulation]
//! t0 = 0.0
//! t1 = 10.0
//! dt = 1e-3
//! method = "rk4"                  # or "adaptive"
//! [simulation.initial]
//! y = [1.0, 0.0, 0.0]
//! v = [0.0, 0.0, 0.0]
//! p = [0.0, 0.0, 1.0]             # or a = [...]
//!
//! [output]
//! path = "trajectory.csv"
//! format = "csv"                  # or "json"
//!
//! [checks]
//! seed = 42
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::algebroid::{base_vars, state_vars, Chart, ChartBuilder, DEFAULT_SEED};
use crate::dynamics::{psi_vars, ConstraintSet, Method, DEFAULT_ADAPTIVE_TOL};
use crate::expr::Expr;
use crate::geometry::DualPoint;
use crate::systems;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ExprText {
    Text(String),
    Number(f64),
}

impl ExprText {
    fn text(&self) -> String {
        match self {
            ExprText::Text(s) => s.clone(),
            ExprText::Number(v) => format!("{v:?}"),
        }
    }
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    algebroid: Option<RawAlgebroid>,
    lagrangian: Option<RawLagrangian>,
    constraints: Option<RawConstraints>,
    simulation: Option<RawSimulation>,
    #[serde(default)]
    output: RawOutput,
    #[serde(default)]
    checks: RawChecks,
    tulczyjew: Option<RawTulczyjew>,
    lagrangian_test: Option<RawLagrangianTest>,
    stabilize: Option<RawStabilize>,
    invariants: Option<RawInvariants>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAlgebroid {
    builtin: Option<String>,
    name: Option<String>,
    m: Option<usize>,
    n: Option<usize>,
    rho: Option<Vec<Vec<ExprText>>>,
    #[serde(default)]
    structure: Vec<RawStructure>,
    labels: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStructure {
    gamma: usize,
    alpha: usize,
    beta: usize,
    expr: ExprText,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLagrangian {
    expr: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstraints {
    dependent: Vec<usize>,
    psi: Vec<ExprText>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulation {
    #[serde(default)]
    t0: f64,
    t1: f64,
    dt: f64,
    #[serde(default)]
    method: Option<String>,
    adaptive_tol: Option<f64>,
    initial: RawInitial,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    x: Option<Vec<f64>>,
    y: Option<Vec<f64>>,
    v: Option<Vec<f64>>,
    p: Option<Vec<f64>>,
    a: Option<Vec<f64>>,
    lambda: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    path: Option<String>,
    format: Option<String>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawChecks {
    seed: Option<u64>,
    samples: Option<usize>,
    structure_tol: Option<f64>,
    energy_tol: Option<f64>,
    momentum_tol: Option<f64>,
    adm_tol: Option<f64>,
    el_tol: Option<f64>,
    constraint_tol: Option<f64>,
    roundtrip_tol: Option<f64>,
    tulczyjew_tol: Option<f64>,
    lagrangian_tol: Option<f64>,
    certificate_tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTulczyjew {
    x: Option<Vec<f64>>,
    y: Vec<f64>,
    p: Vec<f64>,
    pbar: Vec<f64>,
    q: Vec<f64>,
    qbar: Vec<f64>,
    l: Vec<f64>,
    lbar: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLagrangianTest {
    f: String,
    x: Option<Vec<f64>>,
    y: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStabilize {
    source: Option<String>,
    anchor: Option<Vec<Vec<f64>>>,
    equations: Option<Vec<Vec<f64>>>,
    anchor_file: Option<String>,
    equations_file: Option<String>,
    #[serde(default)]
    admissibility: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInvariants {
    trajectory: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone)]
pub enum InitialMomentum {
    P(Vec<f64>),
    Jet(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
    pub method: Method,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub v: Vec<f64>,
    pub momentum: InitialMomentum,
    pub lambda: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Checks {
    pub seed: u64,
    pub samples: usize,
    pub structure_tol: f64,
    pub energy_tol: f64,
    pub momentum_tol: Option<f64>,
    pub adm_tol: f64,
    pub el_tol: f64,
    pub constraint_tol: f64,
    pub roundtrip_tol: f64,
    pub tulczyjew_tol: f64,
    pub lagrangian_tol: f64,
    pub certificate_tol: f64,
}

impl Default for Checks {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            samples: 100,
            structure_tol: 1e-10,
            energy_tol: 1e-8,
            momentum_tol: None,
            adm_tol: 1e-8,
            el_tol: 1e-8,
            constraint_tol: 1e-8,
            roundtrip_tol: 1e-12,
            tulczyjew_tol: 1e-13,
            lagrangian_tol: 1e-9,
            certificate_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LagrangianTest {
    pub f: Expr,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone)]
pub enum StabilizeSource {
    /// Built from the chart and the quadratic Lagrangian.
    Lagrangian { admissibility: bool },
    /// Anchor and augmented equations `[A | b]`, inline or from matrix files.
    Matrices {
        anchor: MatrixSource,
        equations: MatrixSource,
    },
}

#[derive(Debug, Clone)]
pub enum MatrixSource {
    Inline(Vec<Vec<f64>>),
    File(PathBuf),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Directory of the config file; relative input paths resolve against it.
    pub base_dir: PathBuf,
    pub chart: Option<Chart>,
    pub lagrangian: Option<Expr>,
    pub constraints: Option<ConstraintSet>,
    pub simulation: Option<Simulation>,
    pub output_path: String,
    pub output_format: OutputFormat,
    pub checks: Checks,
    pub tulczyjew: Option<DualPoint>,
    pub lagrangian_test: Option<LagrangianTest>,
    pub stabilize: Option<StabilizeSource>,
    pub invariants_trajectory: Option<PathBuf>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config(&text, is_json, base_dir)
}

pub fn parse_config(
    text: &str,
    is_json: bool,
    base_dir: PathBuf,
) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = if is_json {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            message: e.to_string(),
        })?
    } else {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?
    };
    Validator::default().run(raw, base_dir)
}

#[derive(Default)]
struct Validator {
    errors: Vec<String>,
}

impl Validator {
    fn err(&mut self, msg: impl Into<String>) {
        self.errors.push(msg.into());
    }

    fn expr(&mut self, what: &str, text: &str, vars: &[String]) -> Option<Expr> {
        match Expr::parse(text, vars) {
            Ok(e) => Some(e),
            Err(e) => {
                self.err(format!("{what}: {e}"));
                None
            }
        }
    }

    fn len(&mut self, what: &str, v: &[f64], expected: usize, against: &str) -> bool {
        if v.len() != expected {
            self.err(format!(
                "{what} has {} entries but {against} = {expected}",
                v.len()
            ));
            return false;
        }
        true
    }

    fn positive(&mut self, what: &str, v: f64) {
        if !(v > 0.0 && v.is_finite()) {
            self.err(format!("{what} must be positive"));
        }
    }

    fn chart(&mut self, raw: RawAlgebroid) -> Option<Chart> {
        if let Some(name) = &raw.builtin {
            if raw.m.is_some() || raw.n.is_some() || raw.rho.is_some() || !raw.structure.is_empty()
            {
                self.err("algebroid.builtin cannot be combined with m, n, rho or structure");
            }
            let chart = systems::builtin(name);
            if chart.is_none() {
                self.err(format!(
                    "algebroid.builtin `{name}` is unknown (known: {})",
                    systems::BUILTIN_NAMES.join(", ")
                ));
            }
            return chart;
        }
        let (Some(m), Some(n)) = (raw.m, raw.n) else {
            self.err("algebroid needs either builtin or both m and n");
            return None;
        };
        if n == 0 {
            self.err("algebroid.n must be positive");
            return None;
        }
        let vars = base_vars(m);
        let mut b = ChartBuilder::new(raw.name.unwrap_or_else(|| "custom".into()), m, n);
        if let Some(labels) = raw.labels {
            if labels.len() != m {
                self.err(format!(
                    "algebroid.labels has {} entries but algebroid.m = {m}",
                    labels.len()
                ));
            } else {
                b = b.labels(labels);
            }
        }
        let mut ok = true;
        match raw.rho {
            Some(rows) if rows.len() == m => {
                for (i, row) in rows.iter().enumerate() {
                    if row.len() != n {
                        self.err(format!(
                            "algebroid.rho row {} has {} entries but algebroid.n = {n}",
                            i + 1,
                            row.len()
                        ));
                        ok = false;
                        continue;
                    }
                    for (a, e) in row.iter().enumerate() {
                        ok &= self
                            .expr(
                                &format!("algebroid.rho[{}][{}]", i + 1, a + 1),
                                &e.text(),
                                &vars,
                            )
                            .is_some();
                        b = b.anchor(i, a, e.text());
                    }
                }
            }
            Some(rows) => {
                self.err(format!(
                    "algebroid.rho has {} rows but algebroid.m = {m}",
                    rows.len()
                ));
                ok = false;
            }
            None if m > 0 => {
                self.err("algebroid.rho is required when m > 0");
                ok = false;
            }
            None => {}
        }
        for s in &raw.structure {
            let in_range = |k: usize| (1..=n).contains(&k);
            if !(in_range(s.gamma) && in_range(s.alpha) && in_range(s.beta)) || s.alpha == s.beta {
                self.err(format!(
                    "algebroid.structure entry ({}, {}, {}) has invalid indices for n = {n}",
                    s.gamma, s.alpha, s.beta
                ));
                ok = false;
                continue;
            }
            ok &= self
                .expr("algebroid.structure", &s.expr.text(), &vars)
                .is_some();
            b = b.structure(s.gamma - 1, s.alpha - 1, s.beta - 1, s.expr.text());
        }
        if !ok {
            return None;
        }
        match b.build() {
            Ok(c) => Some(c),
            Err(e) => {
                self.err(format!("algebroid: {e}"));
                None
            }
        }
    }

    fn run(mut self, raw: RawConfig, base_dir: PathBuf) -> Result<RunConfig, ConfigError> {
        let chart = raw.algebroid.and_then(|a| self.chart(a));
        let dims = chart.as_ref().map(|c| (c.base_dim(), c.rank()));

        let lagrangian = match (&raw.lagrangian, dims) {
            (Some(l), Some((m, n))) => self.expr("lagrangian.expr", &l.expr, &state_vars(m, n)),
            (Some(_), None) => None,
            (None, _) => None,
        };

        let constraints = match (raw.constraints, &chart) {
            (Some(c), Some(chart)) => {
                let n = chart.rank();
                let mut ok = true;
                if c.dependent.len() != c.psi.len() {
                    self.err(format!(
                        "constraints.dependent has {} entries but constraints.psi has {}",
                        c.dependent.len(),
                        c.psi.len()
                    ));
                    ok = false;
                }
                if c.dependent.iter().any(|&a| a == 0 || a > n) {
                    self.err(format!(
                        "constraints.dependent entries must lie in 1..={n} (algebroid.n)"
                    ));
                    ok = false;
                }
                let dep: Vec<usize> = c.dependent.iter().map(|a| a.saturating_sub(1)).collect();
                if ok {
                    let free: Vec<usize> = (0..n).filter(|a| !dep.contains(a)).collect();
                    let names = psi_vars(chart.base_dim(), n, &free);
                    let exprs: Vec<Option<Expr>> = c
                        .psi
                        .iter()
                        .enumerate()
                        .map(|(k, e)| {
                            self.expr(&format!("constraints.psi[{}]", k + 1), &e.text(), &names)
                        })
                        .collect();
                    if exprs.iter().all(Option::is_some) {
                        match ConstraintSet::new(chart, dep, exprs.into_iter().flatten().collect())
                        {
                            Ok(cs) => Some(cs),
                            Err(e) => {
                                self.err(format!("constraints: {e}"));
                                None
                            }
                        }
                    } else {
                        None
                    }
                } else {
                    None
                }
            }
            (Some(_), None) => None,
            (None, _) => None,
        };

        let simulation = raw
            .simulation
            .and_then(|s| self.simulation(s, dims, constraints.as_ref()));

        let output_format = match raw.output.format.as_deref() {
            None | Some("csv") => OutputFormat::Csv,
            Some("json") => OutputFormat::Json,
            Some(other) => {
                self.err(format!(
                    "output.format must be csv or json, found `{other}`"
                ));
                OutputFormat::Csv
            }
        };
        let output_path = raw.output.path.unwrap_or_else(|| match output_format {
            OutputFormat::Csv => "trajectory.csv".into(),
            OutputFormat::Json => "trajectory.json".into(),
        });

        let checks = self.checks(raw.checks);

        let tulczyjew = match (raw.tulczyjew, dims) {
            (Some(t), Some((m, n))) => {
                let x = t.x.unwrap_or_default();
                let mut ok = self.len("tulczyjew.x", &x, m, "algebroid.m");
                for (name, v) in [
                    ("y", &t.y),
                    ("p", &t.p),
                    ("pbar", &t.pbar),
                    ("q", &t.q),
                    ("qbar", &t.qbar),
                    ("l", &t.l),
                    ("lbar", &t.lbar),
                ] {
                    ok &= self.len(&format!("tulczyjew.{name}"), v, n, "algebroid.n");
                }
                ok.then(|| DualPoint {
                    x,
                    y: t.y,
                    p: t.p,
                    pbar: t.pbar,
                    q: t.q,
                    qbar: t.qbar,
                    l: t.l,
                    lbar: t.lbar,
                })
            }
            _ => None,
        };

        let lagrangian_test = match (raw.lagrangian_test, dims) {
            (Some(t), Some((m, n))) => {
                let x = t.x.unwrap_or_default();
                let ok = self.len("lagrangian_test.x", &x, m, "algebroid.m")
                    & self.len("lagrangian_test.y", &t.y, n, "algebroid.n");
                let f = self.expr("lagrangian_test.f", &t.f, &base_vars(m));
                match (ok, f) {
                    (true, Some(f)) => Some(LagrangianTest { f, x, y: t.y }),
                    _ => None,
                }
            }
            _ => None,
        };

        let stabilize = raw.stabilize.and_then(|s| self.stabilize(s, &base_dir));
        let invariants_trajectory = raw
            .invariants
            .and_then(|i| i.trajectory)
            .map(|p| base_dir.join(p));

        if !self.errors.is_empty() {
            return Err(ConfigError::Invalid(self.errors));
        }
        Ok(RunConfig {
            base_dir,
            chart,
            lagrangian,
            constraints,
            simulation,
            output_path,
            output_format,
            checks,
            tulczyjew,
            lagrangian_test,
            stabilize,
            invariants_trajectory,
        })
    }

    fn simulation(
        &mut self,
        s: RawSimulation,
        dims: Option<(usize, usize)>,
        cons: Option<&ConstraintSet>,
    ) -> Option<Simulation> {
        self.positive("simulation.dt", s.dt);
        if !(s.t1 > s.t0) {
            self.err("simulation.t1 must be greater than simulation.t0");
        }
        let method = match s.method.as_deref() {
            None | Some("rk4") => Method::Rk4,
            Some("adaptive") => {
                let tol = s.adaptive_tol.unwrap_or(DEFAULT_ADAPTIVE_TOL);
                self.positive("simulation.adaptive_tol", tol);
                Method::Adaptive { tol }
            }
            Some(other) => {
                self.err(format!(
                    "simulation.method must be rk4 or adaptive, found `{other}`"
                ));
                Method::Rk4
            }
        };
        let Some((m, n)) = dims else {
            self.err("simulation requires an [algebroid] section");
            return None;
        };
        let i = s.initial;
        let zeros = |k: usize| vec![0.0; k];
        let x = i.x.unwrap_or_else(|| zeros(m));
        let y = i.y.unwrap_or_else(|| zeros(n));
        let v = i.v.unwrap_or_else(|| zeros(n));
        let mut ok = self.len("simulation.initial.x", &x, m, "algebroid.m");
        ok &= self.len("simulation.initial.y", &y, n, "algebroid.n");
        ok &= self.len("simulation.initial.v", &v, n, "algebroid.n");
        let momentum = match (i.p, i.a) {
            (Some(p), None) => {
                ok &= self.len("simulation.initial.p", &p, n, "algebroid.n");
                Some(InitialMomentum::P(p))
            }
            (None, Some(a)) => {
                ok &= self.len("simulation.initial.a", &a, n, "algebroid.n");
                if cons.is_some() {
                    self.err(
                        "simulation.initial.p is required for constrained runs (a is not accepted)",
                    );
                    ok = false;
                }
                Some(InitialMomentum::Jet(a))
            }
            (Some(_), Some(_)) => {
                self.err("simulation.initial must give either p or a, not both");
                None
            }
            (None, None) => {
                self.err("simulation.initial must give p or a");
                None
            }
        };
        let na = cons.map_or(0, ConstraintSet::count);
        let lambda = i.lambda.unwrap_or_else(|| zeros(na));
        if cons.is_some() {
            ok &= self.len(
                "simulation.initial.lambda",
                &lambda,
                na,
                "the constraint count",
            );
        } else if !lambda.is_empty() {
            self.err("simulation.initial.lambda given without [constraints]");
            ok = false;
        }
        if let Some(c) = cons {
            if ok {
                let v_free: Vec<f64> = c.free().iter().map(|&a| v[a]).collect();
                match c.full_v(&x, &y, &v_free) {
                    Ok(full) => {
                        for &a in c.dependent() {
                            if (v[a] - full[a]).abs() > 1e-12 * full[a].abs().max(1.0) {
                                self.err(format!(
                                    "simulation.initial.v{} = {} violates constraints (Psi gives {})",
                                    a + 1,
                                    v[a],
                                    full[a]
                                ));
                                ok = false;
                            }
                        }
                    }
                    Err(e) => {
                        self.err(format!("constraints: {e}"));
                        ok = false;
                    }
                }
            }
        }
        let momentum = momentum?;
        ok.then_some(Simulation {
            t0: s.t0,
            t1: s.t1,
            dt: s.dt,
            method,
            x,
            y,
            v,
            momentum,
            lambda,
        })
    }

    fn checks(&mut self, c: RawChecks) -> Checks {
        let d = Checks::default();
        let mut tol = |name: &str, v: Option<f64>, default: f64| {
            let v = v.unwrap_or(default);
            if !(v > 0.0) {
                self.err(format!("checks.{name} must be positive"));
            }
            v
        };
        let out = Checks {
            seed: c.seed.unwrap_or(d.seed),
            samples: c.samples.unwrap_or(d.samples),
            structure_tol: tol("structure_tol", c.structure_tol, d.structure_tol),
            energy_tol: tol("energy_tol", c.energy_tol, d.energy_tol),
            momentum_tol: c.momentum_tol.map(|v| tol("momentum_tol", Some(v), v)),
            adm_tol: tol("adm_tol", c.adm_tol, d.adm_tol),
            el_tol: tol("el_tol", c.el_tol, d.el_tol),
            constraint_tol: tol("constraint_tol", c.constraint_tol, d.constraint_tol),
            roundtrip_tol: tol("roundtrip_tol", c.roundtrip_tol, d.roundtrip_tol),
            tulczyjew_tol: tol("tulczyjew_tol", c.tulczyjew_tol, d.tulczyjew_tol),
            lagrangian_tol: tol("lagrangian_tol", c.lagrangian_tol, d.lagrangian_tol),
            certificate_tol: tol("certificate_tol", c.certificate_tol, d.certificate_tol),
        };
        if out.samples == 0 {
            self.err("checks.samples must be at least 1");
        }
        out
    }

    fn stabilize(&mut self, s: RawStabilize, base_dir: &Path) -> Option<StabilizeSource> {
        let matrices = s.anchor.is_some()
            || s.anchor_file.is_some()
            || s.equations.is_some()
            || s.equations_file.is_some();
        let source =
            s.source
                .as_deref()
                .unwrap_or(if matrices { "matrices" } else { "lagrangian" });
        match source {
            "lagrangian" => Some(StabilizeSource::Lagrangian {
                admissibility: s.admissibility,
            }),
            "matrices" => {
                let mut pick =
                    |what: &str, inline: Option<Vec<Vec<f64>>>, file: Option<String>| match (
                        inline, file,
                    ) {
                        (Some(m), None) => Some(MatrixSource::Inline(m)),
                        (None, Some(f)) => Some(MatrixSource::File(base_dir.join(f))),
                        _ => {
                            self.err(format!(
                                "stabilize needs exactly one of {what} and {what}_file"
                            ));
                            None
                        }
                    };
                let anchor = pick("anchor", s.anchor, s.anchor_file);
                let equations = pick("equations", s.equations, s.equations_file);
                Some(StabilizeSource::Matrices {
                    anchor: anchor?,
                    equations: equations?,
                })
            }
            other => {
                self.err(format!(
                    "stabilize.source must be lagrangian or matrices, found `{other}`"
                ));
                None
            }
        }
    }
}
