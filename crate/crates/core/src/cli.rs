//! Command implementations behind the `l0-control` binary: run configuration,
//! `solve`, `verify`, `sweep` and the oracle runner.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::fixtures;
use crate::functionals::{eval, g_remainder_integral, EvalCache};
use crate::optimality::{
    beta_star, build_cone, check_pc_structure, check_sparsity_structure, envelope_defect,
    pc_stationarity_residual, pmp_residual, ConeKind,
};
use crate::oracle;
use crate::pde::Pde;
use crate::pointwise::{g_scalar, hamiltonian_argmin, j0_scalar, prox_g, prox_j0, CostParams};
use crate::problem::{
    build_problem, parse_key_values, parse_real, read_field_csv, write_field_csv, GridField,
    ProblemConfig, PROBLEM_KEYS,
};
use crate::report::Report;
use crate::soc::{
    check_necessary_soc, check_sufficient_soc, compare_bilinear_forms, measure_quadratic_growth,
    structural_assumption_estimate, SocSettings, Verdict,
};
use crate::solver::{solve_l0, solve_pc, sweep_beta, write_sweep_csv, Solution, SolverSettings};

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    CheckFailed = 1,
    ConfigError = 2,
}

impl Exit {
    pub fn code(self) -> i32 {
        self as i32
    }

    fn from_error(e: &Error) -> Exit {
        if e.is_config() {
            Exit::ConfigError
        } else {
            Exit::CheckFailed
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    L0,
    Pc,
}

impl SolverKind {
    pub fn parse(s: &str) -> Result<SolverKind> {
        match s.trim().to_ascii_lowercase().as_str() {
            "l0" => Ok(SolverKind::L0),
            "pc" => Ok(SolverKind::Pc),
            other => Err(Error::Config(format!("unknown solver `{other}` (expected l0 or pc)"))),
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverKind::L0 => "l0",
            SolverKind::Pc => "pc",
        })
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Trials {
    pub growth: usize,
    pub bilinear: usize,
    pub structural: usize,
    pub rayleigh_starts: usize,
}

impl Default for Trials {
    fn default() -> Self {
        Trials {
            growth: 1000,
            bilinear: 200,
            structural: 200,
            rayleigh_starts: 20,
        }
    }
}

/// Everything a command needs besides the problem itself.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub problem_path: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    /// Absolute `tau` values; `None` uses `{1e-3, 1e-2, 1e-1} sqrt(2 alpha beta)`.
    pub taus: Option<Vec<f64>>,
    pub betas: Vec<f64>,
    pub solver: SolverKind,
    pub solution: Option<PathBuf>,
    pub trials: Trials,
    pub tol: f64,
    pub max_iter: usize,
    /// Growth sampling radius; `None` takes the one suggested by the SOC check.
    pub rho: Option<f64>,
}

/// Run keys accepted in a config file next to the problem keys.
pub const RUN_KEYS: &[&str] = &[
    "seed",
    "tau",
    "betas",
    "solver",
    "tol",
    "max_iter",
    "rho",
    "growth_trials",
    "bilinear_trials",
    "structural_trials",
    "rayleigh_starts",
];

impl RunConfig {
    pub fn new(problem: ProblemConfig) -> RunConfig {
        RunConfig {
            problem,
            problem_path: None,
            out: PathBuf::from("out"),
            seed: 0,
            taus: None,
            betas: Vec::new(),
            solver: SolverKind::L0,
            solution: None,
            trials: Trials::default(),
            tol: 1e-8,
            max_iter: 2000,
            rho: None,
        }
    }

    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = RunConfig::from_text(&text)?;
        cfg.problem_path = Some(path.to_path_buf());
        Ok(cfg)
    }

    pub fn from_text(text: &str) -> Result<RunConfig> {
        let kv = parse_key_values(text)?;
        if let Some(k) = kv
            .keys()
            .find(|k| !PROBLEM_KEYS.contains(&k.as_str()) && !RUN_KEYS.contains(&k.as_str()))
        {
            return Err(Error::Config(format!("unknown key `{k}`")));
        }
        let mut cfg = RunConfig::new(ProblemConfig::from_key_values(&kv)?);
        let count = |k: &str, s: &str| -> Result<usize> {
            s.trim()
                .parse()
                .map_err(|_| Error::Config(format!("`{k}`: expected a count, got `{s}`")))
        };
        for (k, v) in &kv {
            match k.as_str() {
                "seed" => {
                    cfg.seed = v
                        .trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("`seed`: bad value `{v}`")))?
                }
                "tau" => cfg.taus = Some(parse_list(v, "tau")?),
                "betas" => cfg.betas = parse_list(v, "betas")?,
                "solver" => cfg.solver = SolverKind::parse(v)?,
                "tol" => cfg.tol = parse_real(v, "tol")?,
                "max_iter" => cfg.max_iter = count(k, v)?,
                "rho" => cfg.rho = Some(parse_real(v, "rho")?),
                "growth_trials" => cfg.trials.growth = count(k, v)?,
                "bilinear_trials" => cfg.trials.bilinear = count(k, v)?,
                "structural_trials" => cfg.trials.structural = count(k, v)?,
                "rayleigh_starts" => cfg.trials.rayleigh_starts = count(k, v)?,
                _ => {}
            }
        }
        Ok(cfg)
    }

    pub fn solver_settings(&self) -> SolverSettings {
        SolverSettings {
            max_iter: self.max_iter,
            tol: self.tol,
            ..SolverSettings::default()
        }
    }

    fn soc_settings(&self) -> SocSettings {
        SocSettings {
            rayleigh_starts: self.trials.rayleigh_starts,
            ..SocSettings::default()
        }
    }

    fn echo(&self) -> BTreeMap<&'static str, serde_json::Value> {
        let mut m = BTreeMap::new();
        m.insert("seed", json!(self.seed));
        m.insert("solver", json!(self.solver));
        m.insert("tol", json!(self.tol));
        m.insert("max_iter", json!(self.max_iter));
        m.insert("tau", json!(self.taus));
        m.insert("betas", json!(self.betas));
        m.insert("rho", json!(self.rho));
        m.insert("trials", json!(self.trials));
        m.insert(
            "config_file",
            json!(self.problem_path.as_ref().map(|p| p.display().to_string())),
        );
        m
    }

    fn report(&self, command: &str) -> Report {
        let mut r = Report::new(command, &self.problem);
        r.set("run", self.echo());
        r
    }
}

/// Parses a comma-separated list of reals.
pub fn parse_list(s: &str, key: &str) -> Result<Vec<f64>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| parse_real(p, key))
        .collect()
}

fn build(cfg: &RunConfig) -> Result<Pde> {
    Ok(Pde::new(build_problem(&cfg.problem)?))
}

fn prepare_out(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out)?;
    Ok(())
}

fn run_solver(pde: &Pde, cfg: &RunConfig) -> Result<Solution> {
    let u0 = pde.spec().zeros();
    match cfg.solver {
        SolverKind::L0 => solve_l0(pde, &u0, &cfg.solver_settings()),
        SolverKind::Pc => solve_pc(pde, &u0, &cfg.solver_settings()),
    }
}

fn fail(cfg: &RunConfig, command: &str, file: &str, e: &Error) -> Exit {
    eprintln!("{command}: {e}");
    let mut r = cfg.report(command);
    r.set("error", e.to_string());
    if e.is_config() || prepare_out(cfg).is_err() {
        return Exit::from_error(e);
    }
    let _ = r.write(&cfg.out.join(file));
    Exit::from_error(e)
}

#[derive(Serialize)]
struct FirstOrder {
    pmp_max_residual: f64,
    pmp_tie_measure: f64,
    sparsity_violations: usize,
    pc_max_residual: f64,
    pc_structure: Option<crate::optimality::PcStructureReport>,
    envelope_defect: f64,
    beta_star: f64,
}

fn first_order(pde: &Pde, c: &EvalCache, tol: f64) -> Result<FirstOrder> {
    let spec = pde.spec();
    let p = spec.cost_params();
    let pmp = pmp_residual(spec, c);
    let proj_tol = if p.alpha > 0.0 { tol / p.alpha } else { tol };
    Ok(FirstOrder {
        pmp_max_residual: pmp.max_residual,
        pmp_tie_measure: pmp.tie_measure,
        sparsity_violations: check_sparsity_structure(spec, c).violations,
        pc_max_residual: pc_stationarity_residual(spec, c).max_residual,
        pc_structure: p.is_interior_kink().then(|| check_pc_structure(spec, c, proj_tol)),
        envelope_defect: envelope_defect(spec, &c.u),
        beta_star: beta_star(spec, &eval(pde, &spec.zeros())?),
    })
}

/// Solves the configured problem and writes `solution.csv`, `trace.csv` and
/// `solve_report.json` to the output directory.
pub fn cmd_solve(cfg: &RunConfig) -> Exit {
    const FILE: &str = "solve_report.json";
    let pde = match build(cfg) {
        Ok(p) => p,
        Err(e) => return fail(cfg, "solve", FILE, &e),
    };
    if let Err(e) = prepare_out(cfg) {
        return fail(cfg, "solve", FILE, &e);
    }
    let sol = match run_solver(&pde, cfg) {
        Ok(s) => s,
        Err(e) => return fail(cfg, "solve", FILE, &e),
    };
    let mut r = cfg.report("solve");
    let written = write_field_csv(&cfg.out.join("solution.csv"), sol.u())
        .and_then(|_| sol.trace.write_csv(&cfg.out.join("trace.csv")));
    if let Err(e) = written {
        return fail(cfg, "solve", FILE, &e);
    }
    let spec = pde.spec();
    let c = &sol.cache;
    r.set("status", sol.status);
    r.set("iterations", sol.trace.iterations);
    r.set("final_residual", sol.trace.final_residual);
    r.set("final_step", sol.trace.final_step);
    r.set("cycles_detected", sol.trace.cycles_detected);
    r.set(
        "objective",
        json!({ "J": c.j, "J_pc": c.j_pc, "F": c.f, "G": c.g }),
    );
    r.set("support_measure", spec.l0_norm(&c.u));
    match first_order(&pde, c, cfg.tol) {
        Ok(fo) => r.set("first_order", fo),
        Err(e) => r.set("first_order", json!({ "error": e.to_string() })),
    }
    if let Err(e) = r.write(&cfg.out.join(FILE)) {
        return fail(cfg, "solve", FILE, &e);
    }
    if sol.converged() {
        Exit::Success
    } else {
        eprintln!("solve: solver stopped with status {:?}", sol.status);
        Exit::CheckFailed
    }
}

fn default_taus(p: &CostParams) -> Vec<f64> {
    let thr = p.adjoint_threshold();
    [1e-3, 1e-2, 1e-1].iter().map(|f| f * thr).collect()
}

/// Runs every first- and second-order check at a solution and writes
/// `verify_report.json`. Exit 1 only when the first-order certificate of the
/// configured solver fails.
pub fn cmd_verify(cfg: &RunConfig) -> Exit {
    const FILE: &str = "verify_report.json";
    let pde = match build(cfg) {
        Ok(p) => p,
        Err(e) => return fail(cfg, "verify", FILE, &e),
    };
    if let Err(e) = prepare_out(cfg) {
        return fail(cfg, "verify", FILE, &e);
    }
    let spec = pde.spec();
    let p = spec.cost_params();
    let taus = cfg.taus.clone().unwrap_or_else(|| default_taus(&p));
    if p.is_interior_kink() && taus.iter().any(|&t| !(t > 0.0 && t < p.adjoint_threshold())) {
        let e = Error::Config(format!(
            "tau values must lie in (0, {})",
            p.adjoint_threshold()
        ));
        return fail(cfg, "verify", FILE, &e);
    }
    let (cache, source) = match &cfg.solution {
        Some(path) => match read_field_csv(path, spec.grid().clone()).and_then(|u| eval(&pde, &u)) {
            Ok(c) => (c, path.display().to_string()),
            Err(e) => return fail(cfg, "verify", FILE, &e),
        },
        None => match run_solver(&pde, cfg) {
            Ok(s) => (s.cache, format!("solved with {}", cfg.solver)),
            Err(e) => return fail(cfg, "verify", FILE, &e),
        },
    };
    let mut r = cfg.report("verify");
    r.set("solution_source", source);
    r.set("objective", json!({ "J": cache.j, "J_pc": cache.j_pc }));
    r.set("support_measure", spec.l0_norm(&cache.u));
    let fo = match first_order(&pde, &cache, cfg.tol) {
        Ok(f) => f,
        Err(e) => return fail(cfg, "verify", FILE, &e),
    };
    let hard_ok = match cfg.solver {
        SolverKind::L0 => fo.pmp_max_residual <= cfg.tol && fo.sparsity_violations == 0,
        SolverKind::Pc => {
            fo.pc_max_residual <= cfg.tol && fo.pc_structure.as_ref().is_none_or(|l| l.passes)
        }
    };
    r.set("first_order", &fo);
    r.set("first_order_certificate", json!({ "solver": cfg.solver, "passes": hard_ok }));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let soc = cfg.soc_settings();
    let mut section = serde_json::Map::new();
    let mut put = |k: &str, v: serde_json::Value| {
        section.insert(k.to_string(), v);
    };
    let err = |e: Error| json!({ "error": e.to_string() });

    match check_necessary_soc(&pde, &cache, &soc, &mut rng) {
        Ok(n) => {
            if let Some(w) = &n.witness {
                let _ = write_field_csv(&cfg.out.join("necessary_witness.csv"), w);
            }
            put("necessary", json!(n));
        }
        Err(e) => put("necessary", err(e)),
    }
    if let Ok(mask) = build_cone(spec, &cache, ConeKind::CU, 0.0) {
        let _ = mask.write_csv(&cfg.out.join("cone_cu.csv"));
    }

    let mut sufficient = Vec::new();
    let mut radius = None;
    let mut adversarial = Vec::new();
    for &tau in &taus {
        match check_sufficient_soc(&pde, &cache, tau, &soc, &mut rng) {
            Ok(s) => {
                if let Verdict::SufficientHolds { .. } = s.verdict {
                    radius = radius.or(s.growth_radius);
                }
                if let Some(v) = &s.eigenvector {
                    adversarial.push(v.clone());
                }
                sufficient.push(json!(s));
            }
            Err(e) => sufficient.push(err(e)),
        }
    }
    put("sufficient", json!(sufficient));

    let rho = cfg.rho.or(radius);
    match rho {
        Some(rho) => match measure_quadratic_growth(
            &pde,
            &cache,
            rho,
            cfg.trials.growth,
            &adversarial,
            &mut rng,
        ) {
            Ok(g) => put("growth", json!(g)),
            Err(e) => put("growth", err(e)),
        },
        None => put(
            "growth",
            json!({ "skipped": "no sufficient-holds verdict and no rho given" }),
        ),
    }
    match compare_bilinear_forms(&pde, &cache, cfg.trials.bilinear, &mut rng) {
        Ok(b) => put("bilinear", json!(b)),
        Err(e) => put("bilinear", err(e)),
    }
    if p.is_interior_kink() {
        match structural_assumption_estimate(&pde, &cache, &taus, cfg.trials.structural, &mut rng) {
            Ok(s) => put("structural", json!(s)),
            Err(e) => put("structural", err(e)),
        }
    } else {
        put("structural", json!({ "verdict": "delegated-regime" }));
    }
    r.set("second_order", section);
    if let Err(e) = r.write(&cfg.out.join(FILE)) {
        return fail(cfg, "verify", FILE, &e);
    }
    if hard_ok {
        Exit::Success
    } else {
        eprintln!("verify: first-order certificate failed for solver {}", cfg.solver);
        Exit::CheckFailed
    }
}

/// Runs the `beta` sweep and writes `sweep.csv` and `sweep_report.json`.
pub fn cmd_sweep(cfg: &RunConfig) -> Exit {
    const FILE: &str = "sweep_report.json";
    let pde = match build(cfg) {
        Ok(p) => p,
        Err(e) => return fail(cfg, "sweep", FILE, &e),
    };
    let rows = match sweep_beta(&pde, &cfg.betas, &cfg.solver_settings()) {
        Ok(r) => r,
        Err(e) => return fail(cfg, "sweep", FILE, &e),
    };
    if let Err(e) = prepare_out(cfg).and_then(|_| write_sweep_csv(&cfg.out.join("sweep.csv"), &rows)) {
        return fail(cfg, "sweep", FILE, &e);
    }
    let mut r = cfg.report("sweep");
    r.set("rows", &rows);
    let ok = rows.iter().filter(|row| row.succeeded()).count();
    r.set("succeeded_cells", ok);
    if let Err(e) = r.write(&cfg.out.join(FILE)) {
        return fail(cfg, "sweep", FILE, &e);
    }
    if ok > 0 {
        Exit::Success
    } else {
        Exit::CheckFailed
    }
}

/// One line of the oracle table.
#[derive(Debug, Clone, Serialize)]
pub struct OracleRow {
    pub name: String,
    pub samples: usize,
    pub delta: f64,
    pub tol: f64,
    pub pass: bool,
}

impl OracleRow {
    fn new(name: &str, samples: usize, delta: f64, tol: f64) -> OracleRow {
        OracleRow {
            name: name.to_string(),
            samples,
            delta,
            tol,
            pass: delta <= tol,
        }
    }
}

/// Closed-form coefficient of the second-order remainder counterexample:
/// `-(sqrt 2 - 1)^2 / 2`.
pub fn remainder_coefficient() -> f64 {
    -0.5 * (2f64.sqrt() - 1.0).powi(2)
}

fn random_params(rng: &mut impl Rng) -> CostParams {
    CostParams::new(
        rng.random_range(0.0..=10.0),
        10.0 - rng.random_range(0.0..10.0),
        100.0 - rng.random_range(0.0..100.0),
    )
}

fn scalar_candidates(phi: f64, p: &CostParams) -> Vec<f64> {
    let mut c = vec![0.0, p.gamma, -p.gamma];
    if p.alpha > 0.0 {
        c.push(-phi / p.alpha);
    }
    c
}

/// Compares every pointwise routine and the adjoint calculus against the
/// brute-force oracles.
pub fn oracle_table(seed: u64, scale: usize) -> Result<Vec<OracleRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();

    let n = 200 * scale;
    let mut delta = 0.0f64;
    for _ in 0..n {
        let p = random_params(&mut rng);
        let phi = rng.random_range(-50.0..=50.0);
        let h = |u: f64| phi * u + 0.5 * p.alpha * u * u + if u != 0.0 { p.beta } else { 0.0 };
        let (brute, _) = oracle::argmin_brute_force(h, p.gamma, 2001, &scalar_candidates(phi, &p));
        let got = hamiltonian_argmin(phi, &p);
        let worst = got.set.values().iter().map(|&u| (h(u) - brute).abs()).fold(0.0, f64::max);
        delta = delta.max(worst).max((got.value - brute).abs());
    }
    rows.push(OracleRow::new("hamiltonian argmin vs brute force", n, delta, 1e-10));

    let sets = 10 * scale;
    let (mut hull_dev, mut eq_dev) = (0.0f64, 0.0f64);
    for k in 0..sets {
        let mut p = random_params(&mut rng);
        if k % 2 == 0 && p.alpha > 0.0 && p.kink() >= p.gamma {
            // force the interior-kink regime on half of the draws
            p.gamma = 2.0 * p.kink();
        }
        let env = oracle::convex_envelope(&p, 40_001);
        for _ in 0..100 {
            let u = rng.random_range(-p.gamma..=p.gamma);
            hull_dev = hull_dev.max((g_scalar(u, &p) - env.eval(u)).abs());
            let on_eq = u == 0.0 || u.abs() >= p.kink();
            if on_eq {
                eq_dev = eq_dev.max((g_scalar(u, &p) - j0_scalar(u, &p)).abs());
            }
        }
        eq_dev = eq_dev.max((g_scalar(0.0, &p) - j0_scalar(0.0, &p)).abs());
    }
    rows.push(OracleRow::new("convex envelope vs lower hull", sets * 100, hull_dev, 1e-3));
    rows.push(OracleRow::new("envelope equality set", sets * 100, eq_dev, 0.0));

    let m = 50 * scale;
    let (mut dj0, mut dg) = (0.0f64, 0.0f64);
    for _ in 0..m {
        let p = random_params(&mut rng);
        let w = rng.random_range(-50.0..=50.0);
        let t = rng.random_range(0.01..5.0);
        let j0 = |v: f64| 0.5 * p.alpha * v * v + if v != 0.0 { p.beta } else { 0.0 };
        let cands = [0.0, w / (1.0 + t * p.alpha), p.gamma, -p.gamma];
        let brute = oracle::prox_brute_force(j0, w, t, p.gamma, &cands);
        let obj = |v: f64| (v - w) * (v - w) / (2.0 * t) + j0(v);
        let got = prox_j0(w, t, &p).values().iter().map(|&v| obj(v)).fold(f64::NEG_INFINITY, f64::max);
        dj0 = dj0.max((got - brute) / brute.abs().max(1.0));

        let env = oracle::convex_envelope(&p, 200_001);
        let brute = oracle::prox_brute_force(|v| env.eval(v), w, t, p.gamma, &[0.0, p.gamma, -p.gamma]);
        let v = prox_g(w, t, &p);
        let got = (v - w) * (v - w) / (2.0 * t) + env.eval(v);
        dg = dg.max((got - brute) / brute.abs().max(1.0));
    }
    rows.push(OracleRow::new("prox of j0 vs brute force", m, dj0.max(0.0), 1e-9));
    rows.push(OracleRow::new("prox of g vs brute force", m, dg.max(0.0), 1e-5));

    let coef = remainder_coefficient();
    let mut rem_dev = 0.0f64;
    for k in [4usize, 16, 64] {
        rem_dev = rem_dev.max(remainder_example(1024, k)?.relative_error);
    }
    rows.push(OracleRow::new("second-order remainder example, n = 1024", 3, rem_dev, 1e-12));
    let closed = -0.5 * (3.0 - 2.0 * 2f64.sqrt());
    rows.push(OracleRow::new("remainder coefficient closed form", 1, (coef - closed).abs(), 1e-15));

    let pde = fixtures::standard_cubic_1d(127);
    let u = GridField::from_fn(pde.grid().clone(), |x, _| 5.0 * (PI * x).sin());
    let (mut gr, mut hs, mut du) = (0.0f64, 0.0f64, 0.0f64);
    let dirs = 5 * scale;
    for _ in 0..dirs {
        let v = smooth_direction(&u, &mut rng);
        let c = oracle::adjoint_fd_check(&pde, &u, &v)?;
        gr = gr.max(c.gradient_rel);
        hs = hs.max(c.hessian_rel);
        du = du.max(c.duality);
    }
    rows.push(OracleRow::new("gradient vs central difference", dirs, gr, 1e-6));
    rows.push(OracleRow::new("Hessian form vs second difference", dirs, hs, 1e-4));
    rows.push(OracleRow::new("adjoint duality identity", dirs, du, 1e-10));
    Ok(rows)
}

/// Random combination of the first five sine modes on the grid of `like`.
pub fn smooth_direction(like: &GridField, rng: &mut impl Rng) -> GridField {
    let coef: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
    let ext: Vec<f64> = like.grid().extent().to_vec();
    GridField::from_fn(like.grid().clone(), |x, y| {
        let sy = if ext.len() == 2 { (PI * y / ext[1]).sin() } else { 1.0 };
        coef.iter()
            .enumerate()
            .map(|(k, c)| c * ((k + 1) as f64 * PI * x / ext[0]).sin())
            .sum::<f64>()
            * sy
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RemainderExample {
    pub k: usize,
    pub remainder: f64,
    pub h_norm_sq: f64,
    pub predicted: f64,
    pub relative_error: f64,
}

/// Integrated remainder of the envelope on `(0, 1)` with `alpha = beta = 1`,
/// `u = 2` and `h = -1` on `(0, 1/k)`, compared with `coef ||h||^2`.
pub fn remainder_example(n: usize, k: usize) -> Result<RemainderExample> {
    let p = CostParams::new(1.0, 1.0, 10.0);
    let grid = crate::problem::Grid::new_1d(1.0, n)?;
    let grid = std::sync::Arc::new(grid);
    let u = GridField::constant(grid.clone(), 2.0);
    let h = GridField::from_fn(grid, |x, _| if x < 1.0 / k as f64 { -1.0 } else { 0.0 });
    let remainder = g_remainder_integral(&p, &u, &h);
    let h_norm_sq = h.dot(&h);
    let predicted = remainder_coefficient() * h_norm_sq;
    Ok(RemainderExample {
        k,
        remainder,
        h_norm_sq,
        predicted,
        relative_error: ((remainder - predicted) / predicted).abs(),
    })
}

/// Runs the oracle table, prints it, and writes `oracle_report.json`.
pub fn cmd_oracle(cfg: &RunConfig) -> Exit {
    const FILE: &str = "oracle_report.json";
    let rows = match oracle_table(cfg.seed, 10) {
        Ok(r) => r,
        Err(e) => return fail(cfg, "oracle", FILE, &e),
    };
    println!("{:<44} {:>8} {:>12} {:>10}  result", "check", "samples", "delta", "tol");
    for r in &rows {
        println!(
            "{:<44} {:>8} {:>12.3e} {:>10.1e}  {}",
            r.name,
            r.samples,
            r.delta,
            r.tol,
            if r.pass { "ok" } else { "FAIL" }
        );
    }
    println!("remainder coefficient -(sqrt(2)-1)^2/2 = {:.16}", remainder_coefficient());
    let mut r = Report::tool_only("oracle");
    r.set("seed", cfg.seed);
    r.set("rows", &rows);
    r.set("remainder_coefficient", remainder_coefficient());
    if let Err(e) = prepare_out(cfg).and_then(|_| r.write(&cfg.out.join(FILE))) {
        return fail(cfg, "oracle", FILE, &e);
    }
    if rows.iter().all(|r| r.pass) {
        Exit::Success
    } else {
        Exit::CheckFailed
    }
}
