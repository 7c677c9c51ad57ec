//! Command-line front end: configuration loading, subcommand dispatch and
//! trajectory output. The binary only parses arguments and calls [`run`].
//!
//! Exit codes: 0 pass, 1 check failure, 2 usage or configuration error,
//! 3 numerical failure.

pub mod config;
pub mod output;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::algebroid::Chart;
use crate::dynamics::{
    constrained_diagnostics, constrained_residual, diagnostics, el_residual, integrate,
    integrate_constrained, momentum_from_jet, Diagnostics, DynamicsError, ExtState, MomState,
    Trajectory,
};
use crate::expr::Expr;
use crate::geometry::{
    alpha_inverse, alpha_map, build_f_gamma, check_lagrangian_subbundle, DualPoint,
};
use crate::stabilize::{
    self, build_linear_system, parse_matrix, LinearImplicitSystem, StabilizeSummary,
};

pub use config::{load_config, ConfigError, RunConfig};
use config::{InitialMomentum, MatrixSource, OutputFormat, StabilizeSource};
use output::Table;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    CheckStructure,
    CheckInvariants,
    Tulczyjew,
    LagrangianTest,
    Stabilize,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::CheckStructure => "check-structure",
            Command::CheckInvariants => "check-invariants",
            Command::Tulczyjew => "tulczyjew",
            Command::LagrangianTest => "lagrangian-test",
            Command::Stabilize => "stabilize",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// Text for stdout and the process exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<DynamicsError> for Failure {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::Geometry(_) => Failure::Usage(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<crate::geometry::GeometryError> for Failure {
    fn from(e: crate::geometry::GeometryError) -> Self {
        use crate::geometry::GeometryError as G;
        match e {
            G::Lagrangian { .. } | G::NotBaseFunction { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<stabilize::StabilizeError> for Failure {
    fn from(e: stabilize::StabilizeError) -> Self {
        Failure::Usage(e.to_string())
    }
}

struct Report {
    pass: bool,
    text: String,
}

pub fn run(inv: &Invocation) -> Outcome {
    let result = load_config(&inv.config)
        .map_err(Failure::from)
        .and_then(|mut cfg| {
            if let Some(seed) = inv.seed {
                cfg.checks.seed = seed;
            }
            let out_dir = inv.out.clone().unwrap_or_else(|| PathBuf::from("."));
            match inv.command {
                Command::Simulate => simulate(&cfg, &out_dir),
                Command::CheckStructure => check_structure(&cfg),
                Command::CheckInvariants => check_invariants(&cfg, &out_dir),
                Command::Tulczyjew => tulczyjew(&cfg),
                Command::LagrangianTest => lagrangian_test(&cfg),
                Command::Stabilize => run_stabilize(&cfg, inv.out.as_deref()),
            }
        });
    match result {
        Ok(r) => Outcome {
            code: if r.pass { EXIT_PASS } else { EXIT_CHECK_FAILED },
            stdout: r.text,
            stderr: String::new(),
        },
        Err(Failure::Usage(msg)) => Outcome {
            code: EXIT_USAGE,
            stdout: String::new(),
            stderr: format!("error: {msg}\n"),
        },
        Err(Failure::Numerical(msg)) => Outcome {
            code: EXIT_NUMERICAL,
            stdout: String::new(),
            stderr: format!("numerical failure: {msg}\n"),
        },
    }
}

fn need<'a, T>(v: &'a Option<T>, section: &str, cmd: Command) -> Result<&'a T, Failure> {
    v.as_ref()
        .ok_or_else(|| Failure::Usage(format!("{} requires a [{section}] section", cmd.name())))
}

fn fold_max(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, f64::max)
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .map_err(|e| Failure::Usage(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, text)
        .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

/// A simulated trajectory of either kind, as a table plus its summary numbers.
pub struct Simulated {
    pub table: Table,
    pub energy_drift: f64,
    pub max_adm: f64,
    pub max_constraint: f64,
}

/// Runs the `[simulation]` section of a configuration.
pub fn simulate_config(cfg: &RunConfig) -> Result<Simulated, String> {
    simulate_inner(cfg).map_err(|e| match e {
        Failure::Usage(m) | Failure::Numerical(m) => m,
    })
}

fn simulate_inner(cfg: &RunConfig) -> Result<Simulated, Failure> {
    let cmd = Command::Simulate;
    let chart = need(&cfg.chart, "algebroid", cmd)?;
    let lag = need(&cfg.lagrangian, "lagrangian", cmd)?;
    let sim = need(&cfg.simulation, "simulation", cmd)?;
    let summary = |d: &[Diagnostics], drift: f64| {
        (
            drift,
            fold_max(d.iter().map(|d| d.adm_residual)),
            fold_max(d.iter().map(|d| d.constraint_residual)),
        )
    };
    match &cfg.constraints {
        None => {
            let p = match &sim.momentum {
                InitialMomentum::P(p) => p.clone(),
                InitialMomentum::Jet(a) => {
                    momentum_from_jet(chart, lag, &sim.x, &sim.y, &sim.v, a)?
                }
            };
            let s0 = MomState::new(sim.x.clone(), sim.y.clone(), sim.v.clone(), p);
            let traj = integrate(chart, lag, &s0, sim.t0, sim.t1, sim.dt, sim.method)?;
            let (energy_drift, max_adm, max_constraint) =
                summary(&traj.diagnostics, traj.energy_drift());
            Ok(Simulated {
                table: output::unconstrained_table(chart, lag, &traj)?,
                energy_drift,
                max_adm,
                max_constraint,
            })
        }
        Some(cons) => {
            let InitialMomentum::P(p) = &sim.momentum else {
                return Err(Failure::Usage(
                    "constrained runs need simulation.initial.p".into(),
                ));
            };
            let e0 = ExtState {
                x: sim.x.clone(),
                y: sim.y.clone(),
                v_free: cons.free().iter().map(|&a| sim.v[a]).collect(),
                p: p.clone(),
                lambda: sim.lambda.clone(),
            };
            let traj =
                integrate_constrained(chart, lag, cons, &e0, sim.t0, sim.t1, sim.dt, sim.method)?;
            let (energy_drift, max_adm, max_constraint) =
                summary(&traj.diagnostics, traj.energy_drift());
            Ok(Simulated {
                table: output::constrained_table(chart, lag, cons, &traj)?,
                energy_drift,
                max_adm,
                max_constraint,
            })
        }
    }
}

fn render(cfg: &RunConfig, table: &Table) -> String {
    match cfg.output_format {
        OutputFormat::Csv => table.to_csv(),
        OutputFormat::Json => table.to_json(),
    }
}

fn simulate(cfg: &RunConfig, out_dir: &Path) -> Result<Report, Failure> {
    let s = simulate_inner(cfg)?;
    let path = out_dir.join(&cfg.output_path);
    write_file(&path, &render(cfg, &s.table))?;
    let mut text = String::new();
    let _ = writeln!(
        text,
        "wrote {} rows to {}",
        s.table.rows.len(),
        path.display()
    );
    let _ = writeln!(text, "energy drift: {:.3e}", s.energy_drift);
    let _ = writeln!(text, "max admissibility residual: {:.3e}", s.max_adm);
    if cfg.constraints.is_some() {
        let _ = writeln!(text, "max constraint residual: {:.3e}", s.max_constraint);
    }
    Ok(Report { pass: true, text })
}

fn check_structure(cfg: &RunConfig) -> Result<Report, Failure> {
    let chart = need(&cfg.chart, "algebroid", Command::CheckStructure)?;
    let c = &cfg.checks;
    let r = chart.check_structure(c.samples, c.seed, c.structure_tol);
    let text = format!(
        "{}: anchor residual {:.3e}, jacobi residual {:.3e} over {} samples (seed {}, tol {:.1e}): {}\n",
        r.chart,
        r.anchor_residual,
        r.jacobi_residual,
        r.samples,
        r.seed,
        r.tol,
        if r.pass { "PASS" } else { "FAIL" }
    );
    Ok(Report { pass: r.pass, text })
}

struct Line<'a> {
    text: &'a mut String,
    pass: bool,
}

impl Line<'_> {
    fn check(&mut self, name: &str, value: f64, tol: f64) {
        let ok = value < tol;
        self.pass &= ok;
        let _ = writeln!(
            self.text,
            "{name}: {value:.3e} (tol {tol:.1e}) {}",
            if ok { "PASS" } else { "FAIL" }
        );
    }
}

fn stored_mismatch(table: &Table, recomputed: &[Diagnostics], constrained: bool) -> f64 {
    let mut worst = 0.0_f64;
    let mut cmp = |name: &str, f: fn(&Diagnostics) -> f64| {
        let stored = table.column(name).unwrap_or_default();
        for (s, d) in stored.iter().zip(recomputed) {
            worst = worst.max((s - f(d)).abs());
        }
    };
    cmp("energy", |d| d.energy);
    cmp("adm_residual", |d| d.adm_residual);
    if constrained {
        cmp("constraint_residual", |d| d.constraint_residual);
    }
    worst
}

fn check_invariants(cfg: &RunConfig, out_dir: &Path) -> Result<Report, Failure> {
    let cmd = Command::CheckInvariants;
    let chart = need(&cfg.chart, "algebroid", cmd)?;
    let lag = need(&cfg.lagrangian, "lagrangian", cmd)?;
    let path = cfg
        .invariants_trajectory
        .clone()
        .unwrap_or_else(|| out_dir.join(&cfg.output_path));
    let text = fs::read_to_string(&path)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let table = if is_json {
        Table::from_json(&text)
    } else {
        Table::from_csv(&text)
    }
    .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let (m, n) = (chart.base_dim(), chart.rank());
    let c = &cfg.checks;
    let mut out = String::new();
    let _ = writeln!(out, "{}: {} rows", path.display(), table.rows.len());
    let mut line = Line {
        text: &mut out,
        pass: true,
    };
    match &cfg.constraints {
        None => {
            let (times, states) = table
                .mom_states(m, n)
                .map_err(|e| Failure::Usage(e.to_string()))?;
            let diags = diagnostics(chart, lag, &times, &states)?;
            line.check(
                "stored diagnostics mismatch",
                stored_mismatch(&table, &diags, false),
                c.roundtrip_tol,
            );
            let traj = Trajectory {
                times,
                states,
                diagnostics: diags,
            };
            line.check("energy drift", traj.energy_drift(), c.energy_tol);
            line.check(
                "max admissibility residual",
                fold_max(traj.diagnostics.iter().map(|d| d.adm_residual)),
                c.adm_tol,
            );
            line.check(
                "max equation residual",
                fold_max(el_residual(chart, lag, &traj)?),
                c.el_tol,
            );
            if let Some(tol) = c.momentum_tol {
                let norm = |s: &MomState| s.p.iter().map(|v| v * v).sum::<f64>().sqrt();
                let p0 = norm(&traj.states[0]);
                line.check(
                    "momentum norm drift",
                    fold_max(traj.states.iter().map(|s| (norm(s) - p0).abs())),
                    tol,
                );
            }
        }
        Some(cons) => {
            let (times, states) = table
                .ext_states(m, n, cons)
                .map_err(|e| Failure::Usage(e.to_string()))?;
            let diags = constrained_diagnostics(chart, lag, cons, &times, &states)?;
            line.check(
                "stored diagnostics mismatch",
                stored_mismatch(&table, &diags, true),
                c.roundtrip_tol,
            );
            let traj = Trajectory {
                times,
                states,
                diagnostics: diags,
            };
            line.check("energy drift", traj.energy_drift(), c.energy_tol);
            line.check(
                "max admissibility residual",
                fold_max(traj.diagnostics.iter().map(|d| d.adm_residual)),
                c.adm_tol,
            );
            line.check(
                "max constraint residual",
                fold_max(traj.diagnostics.iter().map(|d| d.constraint_residual)),
                c.constraint_tol,
            );
            line.check(
                "max equation residual",
                fold_max(constrained_residual(chart, lag, cons, &traj)?),
                c.el_tol,
            );
        }
    }
    let pass = line.pass;
    Ok(Report { pass, text: out })
}

/// Uniform draw of a dual point with entries in `[-1, 1]`.
pub fn random_dual_point(rng: &mut impl Rng, m: usize, n: usize) -> DualPoint {
    let mut draw = |k: usize| {
        (0..k)
            .map(|_| rng.random_range(-1.0..=1.0))
            .collect::<Vec<f64>>()
    };
    DualPoint {
        x: draw(m),
        y: draw(n),
        p: draw(n),
        pbar: draw(n),
        q: draw(n),
        qbar: draw(n),
        l: draw(n),
        lbar: draw(n),
    }
}

#[derive(Serialize)]
struct TulczyjewOutput {
    chart: String,
    point: Option<DualPoint>,
    image: Option<DualPoint>,
    inverse: Option<DualPoint>,
    roundtrip_error: Option<f64>,
    samples: usize,
    seed: u64,
    max_sample_roundtrip_error: f64,
    tol: f64,
    pass: bool,
}

fn roundtrip(chart: &Chart, d: &DualPoint) -> Result<(DualPoint, f64), Failure> {
    let image = alpha_map(chart, d)?;
    let back = alpha_inverse(chart, &image)?;
    let inv = alpha_inverse(chart, d)?;
    let err = back
        .max_abs_diff(d)
        .max(alpha_map(chart, &inv)?.max_abs_diff(d));
    Ok((image, err))
}

fn tulczyjew(cfg: &RunConfig) -> Result<Report, Failure> {
    let chart = need(&cfg.chart, "algebroid", Command::Tulczyjew)?;
    let c = &cfg.checks;
    let (image, inverse, err) = match &cfg.tulczyjew {
        Some(d) => {
            let (i, e) = roundtrip(chart, d)?;
            let inv = alpha_inverse(chart, d)?;
            (Some(i), Some(inv), Some(e))
        }
        None => (None, None, None),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let mut worst = 0.0_f64;
    for _ in 0..c.samples {
        let d = random_dual_point(&mut rng, chart.base_dim(), chart.rank());
        worst = worst.max(roundtrip(chart, &d)?.1);
    }
    let pass = worst < c.tulczyjew_tol && err.is_none_or(|e| e < c.tulczyjew_tol);
    let out = TulczyjewOutput {
        chart: chart.name().to_string(),
        point: cfg.tulczyjew.clone(),
        image,
        inverse,
        roundtrip_error: err,
        samples: c.samples,
        seed: c.seed,
        max_sample_roundtrip_error: worst,
        tol: c.tulczyjew_tol,
        pass,
    };
    let mut text = serde_json::to_string_pretty(&out).expect("serializable");
    text.push('\n');
    Ok(Report { pass, text })
}

fn lagrangian_test(cfg: &RunConfig) -> Result<Report, Failure> {
    let cmd = Command::LagrangianTest;
    let chart = need(&cfg.chart, "algebroid", cmd)?;
    let t = need(&cfg.lagrangian_test, "lagrangian_test", cmd)?;
    let fg = build_f_gamma(chart, &t.f, &t.x, &t.y)?;
    let r = check_lagrangian_subbundle(chart, &fg.basis, &fg.x, &fg.p, cfg.checks.lagrangian_tol)?;
    let text = format!(
        "rank {} (expected {}), isotropy {:.3e} (tol {:.1e}): {}\n",
        r.rank,
        r.expected_rank,
        r.isotropy,
        r.tol,
        if r.pass { "PASS" } else { "FAIL" }
    );
    Ok(Report { pass: r.pass, text })
}

fn load_matrix(src: &MatrixSource) -> Result<DMatrix<f64>, Failure> {
    match src {
        MatrixSource::Inline(rows) => {
            let cols = rows.first().map_or(0, Vec::len);
            if rows.iter().any(|r| r.len() != cols) {
                return Err(Failure::Usage(
                    "inline matrix rows have different lengths".into(),
                ));
            }
            Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
        }
        MatrixSource::File(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
            Ok(parse_matrix(&text)
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?)
        }
    }
}

/// Builds the linear implicit system described by `[stabilize]`.
pub fn stabilize_system(cfg: &RunConfig) -> Result<LinearImplicitSystem, String> {
    stabilize_system_inner(cfg).map_err(|e| match e {
        Failure::Usage(m) | Failure::Numerical(m) => m,
    })
}

fn stabilize_system_inner(cfg: &RunConfig) -> Result<LinearImplicitSystem, Failure> {
    let cmd = Command::Stabilize;
    match need(&cfg.stabilize, "stabilize", cmd)? {
        StabilizeSource::Lagrangian { admissibility } => {
            let chart = need(&cfg.chart, "algebroid", cmd)?;
            let lag: &Expr = need(&cfg.lagrangian, "lagrangian", cmd)?;
            Ok(build_linear_system(chart, lag, *admissibility)?)
        }
        StabilizeSource::Matrices { anchor, equations } => Ok(
            LinearImplicitSystem::from_augmented(load_matrix(anchor)?, &load_matrix(equations)?)?,
        ),
    }
}

fn fmt_row(v: impl IntoIterator<Item = f64>) -> String {
    let cells: Vec<String> = v.into_iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", cells.join(", "))
}

fn run_stabilize(cfg: &RunConfig, out: Option<&Path>) -> Result<Report, Failure> {
    let sys = stabilize_system_inner(cfg)?;
    let r = stabilize::stabilize(&sys);
    let s = StabilizeSummary::new(&sys, &r);
    let mut text = format!(
        "iterations: {}, dim history: {}\n",
        s.iterations,
        s.history_text()
    );
    match s.s_inf_dim {
        None => text.push_str("S_inf is empty\n"),
        Some(_) => {
            let _ = writeln!(text, "coordinates: {}", s.labels.join(", "));
            let _ = writeln!(
                text,
                "S_inf offset: {}",
                fmt_row(s.s_inf_offset.iter().copied())
            );
            let _ = writeln!(text, "S_inf basis:");
            if s.s_inf_basis.is_empty() {
                text.push_str("  (none)\n");
            }
            for b in &s.s_inf_basis {
                let _ = writeln!(text, "  {}", fmt_row(b.iter().copied()));
            }
        }
    }
    let cert_ok = s.certificate < cfg.checks.certificate_tol;
    let _ = writeln!(
        text,
        "certificate: {:.3e} (tol {:.1e})",
        s.certificate, cfg.checks.certificate_tol
    );
    if let Some(dir) = out {
        let mut json = serde_json::to_string_pretty(&s).expect("serializable");
        json.push('\n');
        write_file(&dir.join("stabilize.json"), &json)?;
    }
    Ok(Report {
        pass: s.s_inf_dim.is_some() && cert_ok,
        text,
    })
}
