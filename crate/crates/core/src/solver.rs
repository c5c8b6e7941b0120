//! Proximal gradient for the convexified problem, a thresholded active-set
//! iteration on the maximum principle for the original problem, and the
//! `beta` sweep.

use std::collections::VecDeque;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::{eval, EvalCache};
use crate::optimality::{beta_star, envelope_defect, pc_node_residual, TIE_TOL};
use crate::pde::Pde;
use crate::pointwise::{hamiltonian, hamiltonian_argmin, prox_g, CostParams};
use crate::problem::{fmt_num, uad_project, GridField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepRule {
    Fixed(f64),
    /// Start at `1 / L_est` and halve on failed sufficient decrease.
    Backtracking,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverSettings {
    pub max_iter: usize,
    pub tol: f64,
    pub step: StepRule,
    /// Nodes allowed to carry control; `None` means all.
    pub restriction: Option<Vec<bool>>,
    pub cycle_window: usize,
    /// Iteration cap of each reduced solve inside [`solve_l0`].
    pub inner_max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            max_iter: 2000,
            tol: 1e-8,
            step: StepRule::Backtracking,
            restriction: None,
            cycle_window: 10,
            inner_max_iter: 2000,
        }
    }
}

impl SolverSettings {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    /// Restricts controls to the support of `u` (the reduced problem).
    pub fn restricted_to_support(mut self, u: &GridField, zero_tol: f64) -> Self {
        self.restriction = Some(u.values().iter().map(|x| x.abs() > zero_tol).collect());
        self
    }

    fn allowed(&self, i: usize) -> bool {
        self.restriction.as_ref().is_none_or(|r| r[i])
    }

    fn validate(&self, n: usize) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("solver tolerance must be positive".into()));
        }
        if let StepRule::Fixed(t) = self.step {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidArgument("fixed step must be positive".into()));
            }
        }
        if let Some(r) = &self.restriction {
            if r.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "restriction mask has {} entries, grid has {n}",
                    r.len()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub j: f64,
    pub j_pc: f64,
    pub residual: f64,
    /// `||u||_0`
    pub support: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SolveTrace {
    pub rows: Vec<TraceRow>,
    pub final_residual: f64,
    pub iterations: usize,
    pub final_step: f64,
    pub cycles_detected: usize,
}

impl SolveTrace {
    fn push(&mut self, iteration: usize, c: &EvalCache, residual: f64, zero_tol: f64) {
        let support = c.u.grid().cell_volume()
            * c.u.values().iter().filter(|x| x.abs() > zero_tol).count() as f64;
        self.rows.push(TraceRow {
            iteration,
            j: c.j,
            j_pc: c.j_pc,
            residual,
            support,
        });
    }

    /// True if the selected column never increases by more than `slack`.
    pub fn is_nonincreasing(&self, column: impl Fn(&TraceRow) -> f64, slack: f64) -> bool {
        self.rows.windows(2).all(|w| column(&w[1]) <= column(&w[0]) + slack)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["iteration", "J", "J_pc", "residual", "support"])?;
        for r in &self.rows {
            w.write_record([
                r.iteration.to_string(),
                fmt_num(r.j),
                fmt_num(r.j_pc),
                fmt_num(r.residual),
                fmt_num(r.support),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    Cycling { period: usize },
    /// No admissible update decreases the objective.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub cache: EvalCache,
    pub trace: SolveTrace,
    pub status: SolveStatus,
}

impl Solution {
    pub fn u(&self) -> &GridField {
        &self.cache.u
    }

    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    /// Turns a non-converged run into the matching error.
    pub fn into_result(self) -> Result<Solution> {
        let (iterations, residual) = (self.trace.iterations, self.trace.final_residual);
        match self.status {
            SolveStatus::Converged => Ok(self),
            SolveStatus::MaxIterations => Err(Error::MaxIterations { iterations, residual }),
            SolveStatus::Cycling { period } => Err(Error::Cycling {
                period,
                step: self.trace.final_step,
            }),
            SolveStatus::Stalled => Err(Error::NonConvergence { iterations, residual }),
        }
    }
}

fn admissible_start(u0: &GridField, gamma: f64, settings: &SolverSettings) -> GridField {
    let mut u = uad_project(u0, gamma);
    for (i, x) in u.values_mut().iter_mut().enumerate() {
        if !settings.allowed(i) {
            *x = 0.0;
        }
    }
    u
}

/// Power-iteration estimate of the largest eigenvalue of the Hessian of `F`
/// at `c`, with the curvature weight replaced by its absolute value.
pub fn lipschitz_estimate(pde: &Pde, c: &EvalCache) -> f64 {
    let d: Vec<f64> = crate::functionals::hess_weight(pde, c)
        .into_iter()
        .map(f64::abs)
        .collect();
    let lin = c.linearization();
    let n = d.len();
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64 * 0.1).collect();
    let mut lambda = 0.0;
    for _ in 0..50 {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        let mut z = lin.solve(&v);
        z.iter_mut().zip(&d).for_each(|(zi, di)| *zi *= di);
        let hv = lin.solve(&z);
        let next: f64 = hv.iter().zip(&v).map(|(a, b)| a * b).sum();
        v = hv;
        if (next - lambda).abs() <= 1e-6 * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    1.1 * lambda + 1e-12
}

fn initial_step(pde: &Pde, c: &EvalCache, settings: &SolverSettings) -> f64 {
    match settings.step {
        StepRule::Fixed(t) => t,
        StepRule::Backtracking => 1.0 / lipschitz_estimate(pde, c),
    }
}

/// One proximal gradient step with backtracking on the quadratic upper model
/// of `F`. Returns the accepted cache and the step used.
fn prox_step(
    pde: &Pde,
    c: &EvalCache,
    mut t: f64,
    backtrack: bool,
    prox: &impl Fn(usize, f64, f64) -> f64,
) -> Result<(EvalCache, f64)> {
    let w = pde.grid().cell_volume();
    loop {
        let next: Vec<f64> = c
            .u
            .values()
            .iter()
            .zip(c.phi.values())
            .enumerate()
            .map(|(i, (&u, &phi))| prox(i, u - t * phi, t))
            .collect();
        let next = GridField::new(c.u.grid().clone(), next)?;
        let cand = eval(pde, &next)?;
        if !backtrack {
            return Ok((cand, t));
        }
        let d = &next - &c.u;
        let model = c.f + c.phi.dot(&d) + 0.5 / t * d.dot(&d);
        if cand.f <= model + 1e-14 * c.f.abs().max(1.0) + 1e-16 * w {
            return Ok((cand, t));
        }
        t *= 0.5;
        if t < 1e-30 {
            return Err(Error::NonConvergence {
                iterations: 0,
                residual: f64::NAN,
            });
        }
    }
}

fn masked_pc_residual(c: &EvalCache, p: &CostParams, settings: &SolverSettings) -> f64 {
    c.u.values()
        .iter()
        .zip(c.phi.values())
        .enumerate()
        .filter(|(i, _)| settings.allowed(*i))
        .map(|(_, (&u, &phi))| pc_node_residual(u, phi, p))
        .fold(0.0, f64::max)
}

/// Proximal gradient on `F + G` over the admissible set.
pub fn solve_pc(pde: &Pde, u0: &GridField, settings: &SolverSettings) -> Result<Solution> {
    let spec = pde.spec();
    settings.validate(u0.len())?;
    let p = spec.cost_params();
    let ztol = spec.zero_tol();
    let mut c = eval(pde, &admissible_start(u0, p.gamma, settings))?;
    let mut t = initial_step(pde, &c, settings);
    let backtrack = settings.step == StepRule::Backtracking;
    let prox = |i: usize, w: f64, t: f64| {
        if settings.allowed(i) {
            prox_g(w, t, &p)
        } else {
            0.0
        }
    };
    let mut trace = SolveTrace::default();
    let mut residual = masked_pc_residual(&c, &p, settings);
    trace.push(0, &c, residual, ztol);
    let mut status = SolveStatus::MaxIterations;
    for k in 1..=settings.max_iter {
        if residual <= settings.tol {
            status = SolveStatus::Converged;
            break;
        }
        let (next, t_used) = prox_step(pde, &c, t, backtrack, &prox)?;
        t = t_used;
        c = next;
        residual = masked_pc_residual(&c, &p, settings);
        trace.push(k, &c, residual, ztol);
        trace.iterations = k;
    }
    if status == SolveStatus::MaxIterations && residual <= settings.tol {
        status = SolveStatus::Converged;
    }
    trace.final_residual = residual;
    trace.final_step = t;
    Ok(Solution { cache: c, trace, status })
}

/// Node-wise `H(u_i) - min H` on allowed nodes.
fn pmp_violations(c: &EvalCache, p: &CostParams, settings: &SolverSettings) -> Vec<f64> {
    c.u.values()
        .iter()
        .zip(c.phi.values())
        .enumerate()
        .map(|(i, (&u, &phi))| {
            if !settings.allowed(i) {
                return 0.0;
            }
            let best = hamiltonian_argmin(phi, p);
            (hamiltonian(u, phi, p) - best.value).max(0.0)
        })
        .collect()
}

/// Smooth reduced solve: minimizes `F + alpha/2 ||u||^2` with the support
/// frozen, by proximal gradient.
fn reduced_solve(
    pde: &Pde,
    c: EvalCache,
    support: &[bool],
    t0: f64,
    settings: &SolverSettings,
) -> Result<(EvalCache, f64)> {
    let p = pde.spec().cost_params();
    let (alpha, gamma) = (p.alpha, p.gamma);
    let prox = |i: usize, w: f64, t: f64| {
        if support[i] {
            (w / (1.0 + t * alpha)).clamp(-gamma, gamma)
        } else {
            0.0
        }
    };
    let quad = CostParams::new(alpha, 0.0, gamma);
    let residual = |c: &EvalCache| {
        c.u.values()
            .iter()
            .zip(c.phi.values())
            .zip(support)
            .filter(|(_, &s)| s)
            .map(|((&u, &phi), _)| pc_node_residual(u, phi, &quad))
            .fold(0.0, f64::max)
    };
    let tol = 0.1 * settings.tol;
    let backtrack = settings.step == StepRule::Backtracking;
    let (mut c, mut t) = (c, t0);
    for _ in 0..settings.inner_max_iter {
        if residual(&c) <= tol {
            break;
        }
        let (next, t_used) = prox_step(pde, &c, t, backtrack, &prox)?;
        c = next;
        t = t_used;
    }
    Ok((c, t))
}

fn support_key(u: &GridField, zero_tol: f64) -> Vec<i8> {
    u.values()
        .iter()
        .map(|&x| if x.abs() <= zero_tol { 0 } else if x > 0.0 { 1 } else { -1 })
        .collect()
}

/// Iteration on the maximum principle for the original problem.
///
/// Each outer step replaces the controls at the worst-violating nodes by the
/// sparsest pointwise Hamiltonian minimizer, then re-solves the smooth problem
/// on the resulting support. A step is accepted only if `J` decreases; the
/// number of flipped nodes is halved on rejection or when a support pattern
/// repeats inside the cycle window. The result is PMP-stationary, not a
/// certified minimizer.
pub fn solve_l0(pde: &Pde, u0: &GridField, settings: &SolverSettings) -> Result<Solution> {
    let spec = pde.spec();
    let n = u0.len();
    settings.validate(n)?;
    let p = spec.cost_params();
    let ztol = spec.zero_tol();
    let start = eval(pde, &admissible_start(u0, p.gamma, settings))?;
    let mut t = initial_step(pde, &start, settings);
    let support: Vec<bool> = start.u.values().iter().map(|x| x.abs() > ztol).collect();
    let (mut c, t1) = reduced_solve(pde, start, &support, t, settings)?;
    t = t1;

    let mut trace = SolveTrace::default();
    let mut viol = pmp_violations(&c, &p, settings);
    let mut residual = viol.iter().cloned().fold(0.0, f64::max);
    trace.push(0, &c, residual, ztol);
    let mut window: VecDeque<Vec<i8>> = VecDeque::new();
    window.push_back(support_key(&c.u, ztol));
    let mut budget = n;
    let mut status = SolveStatus::MaxIterations;
    let mut k = 0;
    while k < settings.max_iter {
        if residual <= settings.tol {
            status = SolveStatus::Converged;
            break;
        }
        k += 1;
        let mut order: Vec<usize> = (0..n).filter(|&i| viol[i] > settings.tol).collect();
        order.sort_by(|&a, &b| viol[b].total_cmp(&viol[a]).then(a.cmp(&b)));
        order.truncate(budget.max(1));
        let mut u = c.u.clone();
        for &i in &order {
            u.values_mut()[i] = hamiltonian_argmin(c.phi.values()[i], &p).set.sparsest();
        }
        let support: Vec<bool> = u.values().iter().map(|x| x.abs() > ztol).collect();
        let (cand, t_used) = reduced_solve(pde, eval(pde, &u)?, &support, t, settings)?;
        let key = support_key(&cand.u, ztol);
        let repeat = window.iter().rev().position(|w| *w == key);
        let improves = cand.j < c.j - 1e-15 * c.j.abs();
        if !improves || repeat.is_some() {
            if let Some(pos) = repeat {
                trace.cycles_detected += 1;
                if budget == 1 {
                    status = SolveStatus::Cycling { period: pos + 1 };
                    break;
                }
            } else if budget == 1 {
                status = SolveStatus::Stalled;
                break;
            }
            budget = (budget.min(order.len()) / 2).max(1);
            continue;
        }
        t = t_used;
        c = cand;
        budget = (budget * 2).min(n);
        window.push_back(key);
        if window.len() > settings.cycle_window {
            window.pop_front();
        }
        viol = pmp_violations(&c, &p, settings);
        residual = viol.iter().cloned().fold(0.0, f64::max);
        trace.push(k, &c, residual, ztol);
    }
    if status == SolveStatus::MaxIterations && residual <= settings.tol {
        status = SolveStatus::Converged;
    }
    trace.iterations = k;
    trace.final_residual = residual;
    trace.final_step = budget as f64;
    Ok(Solution { cache: c, trace, status })
}

#[derive(Debug, Clone, Serialize)]
pub struct TransferReport {
    pub converged: bool,
    pub pc_residual: f64,
    pub tie_nodes: usize,
    pub tie_measure: f64,
    /// Largest node-wise `|g(u) - j0(u)|`.
    pub envelope_defect: f64,
    pub j: f64,
    pub j_pc: f64,
    pub holds: bool,
}

/// Solves the convexified problem and checks whether its solution transfers
/// to the original problem.
pub fn solve_transfer(pde: &Pde, settings: &SolverSettings) -> Result<(Solution, TransferReport)> {
    let spec = pde.spec();
    if !spec.cost_params().is_interior_kink() {
        return Err(Error::InvalidArgument(
            "transfer check needs the interior-kink regime".into(),
        ));
    }
    let sol = solve_pc(pde, &spec.zeros(), settings)?;
    let report = transfer_report(pde, &sol);
    Ok((sol, report))
}

pub fn transfer_report(pde: &Pde, sol: &Solution) -> TransferReport {
    let spec = pde.spec();
    let thr = spec.cost_params().adjoint_threshold();
    let c = &sol.cache;
    let tie_nodes = c
        .phi
        .values()
        .iter()
        .filter(|f| (f.abs() - thr).abs() <= TIE_TOL)
        .count();
    let envelope_defect = envelope_defect(spec, &c.u);
    let holds = sol.converged()
        && tie_nodes == 0
        && envelope_defect <= 1e-12
        && (c.j - c.j_pc).abs() <= 1e-12;
    TransferReport {
        converged: sol.converged(),
        pc_residual: sol.trace.final_residual,
        tie_nodes,
        tie_measure: tie_nodes as f64 * spec.grid().cell_volume(),
        envelope_defect,
        j: c.j,
        j_pc: c.j_pc,
        holds,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub status: String,
    pub support: Option<f64>,
    pub objective: Option<f64>,
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub beta: f64,
    pub beta_star: f64,
    pub above_beta_star: bool,
    pub l0: SweepCell,
    pub pc: SweepCell,
    /// `J(u_pc) = J_pc(u_pc)` with no ties.
    pub transfer: Option<bool>,
}

impl SweepRow {
    pub fn succeeded(&self) -> bool {
        self.l0.status == "converged" || self.pc.status == "converged"
    }
}

fn status_name(s: SolveStatus) -> String {
    match s {
        SolveStatus::Converged => "converged".into(),
        SolveStatus::MaxIterations => "max-iterations".into(),
        SolveStatus::Cycling { period } => format!("cycling-{period}"),
        SolveStatus::Stalled => "stalled".into(),
    }
}

fn cell(r: &Result<Solution>, objective: impl Fn(&EvalCache) -> f64, ztol: f64) -> SweepCell {
    match r {
        Ok(s) => SweepCell {
            status: status_name(s.status),
            support: Some(l0_measure(&s.cache.u, ztol)),
            objective: Some(objective(&s.cache)),
            residual: Some(s.trace.final_residual),
        },
        Err(e) => SweepCell {
            status: format!("error: {e}"),
            support: None,
            objective: None,
            residual: None,
        },
    }
}

fn l0_measure(u: &GridField, ztol: f64) -> f64 {
    crate::problem::l0_norm(u, ztol)
}

/// Solves both problems along an increasing `beta` grid, warm-starting each
/// chain from the previous cell.
pub fn sweep_beta(pde: &Pde, betas: &[f64], settings: &SolverSettings) -> Result<Vec<SweepRow>> {
    if betas.is_empty() {
        return Err(Error::InvalidArgument("beta grid is empty".into()));
    }
    if betas.windows(2).any(|w| !(w[1] > w[0])) || betas.iter().any(|b| !(*b > 0.0)) {
        return Err(Error::InvalidArgument(
            "beta grid must be positive and strictly increasing".into(),
        ));
    }
    let spec = pde.spec();
    let bstar = beta_star(spec, &eval(pde, &spec.zeros())?);
    let pdes: Vec<Pde> = betas
        .iter()
        .map(|&b| Ok(Pde::new(spec.with_beta(b)?).with_settings(*pde.settings())))
        .collect::<Result<_>>()?;
    let chain = |pc: bool| -> Vec<Result<Solution>> {
        let mut start = spec.zeros();
        let mut out = Vec::with_capacity(pdes.len());
        for q in &pdes {
            let r = if pc {
                solve_pc(q, &start, settings)
            } else {
                solve_l0(q, &start, settings)
            };
            if let Ok(s) = &r {
                start = s.cache.u.clone();
            }
            out.push(r);
        }
        out
    };
    let (l0, pc) = rayon::join(|| chain(false), || chain(true));
    let ztol = spec.zero_tol();
    Ok(betas
        .iter()
        .zip(pdes.iter().zip(l0.iter().zip(&pc)))
        .map(|(&beta, (q, (rl, rp)))| {
            let transfer = match rp {
                Ok(s) if q.spec().cost_params().is_interior_kink() => {
                    Some(transfer_report(q, s).holds)
                }
                _ => None,
            };
            SweepRow {
                beta,
                beta_star: bstar,
                above_beta_star: beta > bstar,
                l0: cell(rl, |c| c.j, ztol),
                pc: cell(rp, |c| c.j_pc, ztol),
                transfer,
            }
        })
        .collect())
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "beta",
        "beta_star",
        "above_beta_star",
        "l0_status",
        "l0_support",
        "J",
        "l0_residual",
        "pc_status",
        "pc_support",
        "J_pc",
        "pc_residual",
        "transfer",
    ])?;
    let opt = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
    for r in rows {
        w.write_record([
            fmt_num(r.beta),
            fmt_num(r.beta_star),
            r.above_beta_star.to_string(),
            r.l0.status.clone(),
            opt(r.l0.support),
            opt(r.l0.objective),
            opt(r.l0.residual),
            r.pc.status.clone(),
            opt(r.pc.support),
            opt(r.pc.objective),
            opt(r.pc.residual),
            r.transfer.map(|b| b.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
