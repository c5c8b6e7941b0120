//! First-order structure: maximum-principle residuals, sparsity checks, the
//! zero-control threshold, stationarity of the convexified problem, and
//! critical cones.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::{g_dir1_integral, EvalCache};
use crate::pde::Pde;
use crate::pointwise::{
    g_dir1, g_scalar, hamiltonian, hamiltonian_argmin, j0_scalar, CaseLabel, CostParams,
};
use crate::problem::{GridField, ProblemSpec};

/// Absolute tolerance for `|phi| = sqrt(2 alpha beta)`.
pub const TIE_TOL: f64 = 1e-9;

fn at_upper_bound(u: f64, gamma: f64) -> bool {
    gamma.is_finite() && u >= gamma * (1.0 - 1e-12)
}

fn at_lower_bound(u: f64, gamma: f64) -> bool {
    gamma.is_finite() && u <= -gamma * (1.0 - 1e-12)
}

#[derive(Debug, Clone, Serialize)]
pub struct PmpReport {
    pub max_residual: f64,
    pub residual: Vec<f64>,
    pub cases: Vec<CaseLabel>,
    pub sparsity_violations: usize,
    /// Measure of the nodes where the Hamiltonian has two minimizers.
    pub tie_measure: f64,
}

/// Node-wise `H(u_i) - min H`; the tracking term cancels.
pub fn pmp_residual(spec: &ProblemSpec, cache: &EvalCache) -> PmpReport {
    let p = spec.cost_params();
    let w = spec.grid().cell_volume();
    let (u, phi) = (cache.u.values(), cache.phi.values());
    let mut residual = Vec::with_capacity(u.len());
    let mut cases = Vec::with_capacity(u.len());
    let mut ties = 0usize;
    for i in 0..u.len() {
        let r = hamiltonian_argmin(phi[i], &p);
        residual.push((hamiltonian(u[i], phi[i], &p) - r.value).max(0.0));
        cases.push(r.case);
        if r.set.len() == 2 {
            ties += 1;
        }
    }
    let max_residual = residual.iter().cloned().fold(0.0, f64::max);
    PmpReport {
        max_residual,
        residual,
        cases,
        sparsity_violations: check_sparsity_structure(spec, cache).violations,
        tie_measure: ties as f64 * w,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SparsityReport {
    pub violations: usize,
    /// Nodes with a small adjoint but nonzero control.
    pub small_adjoint_nodes: Vec<usize>,
    /// Nodes whose nonzero control lies strictly inside the forbidden gap.
    pub gap_nodes: Vec<usize>,
}

/// Checks that small adjoints force zero controls and that nonzero controls
/// stay out of `(0, min(s, gamma))` (or are bang for `alpha = 0`).
pub fn check_sparsity_structure(spec: &ProblemSpec, cache: &EvalCache) -> SparsityReport {
    let p = spec.cost_params();
    let ztol = spec.zero_tol();
    let (u, phi) = (cache.u.values(), cache.phi.values());
    let mut small = Vec::new();
    let mut gap = Vec::new();
    for i in 0..u.len() {
        let nonzero = u[i].abs() > ztol;
        if !nonzero {
            continue;
        }
        if p.alpha > 0.0 {
            if phi[i].abs() < p.adjoint_threshold() - TIE_TOL {
                small.push(i);
            }
            let floor = p.kink().min(p.gamma);
            if u[i].abs() < floor * (1.0 - 1e-9) {
                gap.push(i);
            }
        } else {
            if phi[i].abs() < p.beta / p.gamma - TIE_TOL {
                small.push(i);
            }
            if (u[i].abs() - p.gamma).abs() > 1e-9 * p.gamma {
                gap.push(i);
            }
        }
    }
    let mut all: Vec<usize> = small.iter().chain(&gap).cloned().collect();
    all.sort_unstable();
    all.dedup();
    SparsityReport {
        violations: all.len(),
        small_adjoint_nodes: small,
        gap_nodes: gap,
    }
}

/// `max(||phi_0||_inf^2 / (2 alpha), gamma ||phi_0||_inf)` surrogate from the
/// adjoint at the zero control.
pub fn beta_star(spec: &ProblemSpec, cache_at_zero: &EvalCache) -> f64 {
    let m = cache_at_zero.phi.norm_linf();
    if spec.alpha() > 0.0 {
        m * m / (2.0 * spec.alpha())
    } else {
        spec.gamma() * m
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PcStationarityReport {
    pub max_residual: f64,
    pub residual: Vec<f64>,
}

/// Node-wise violation of `phi v + g'(u; v) >= 0` over feasible `v = +-1`.
pub fn pc_stationarity_residual(spec: &ProblemSpec, cache: &EvalCache) -> PcStationarityReport {
    let p = spec.cost_params();
    let residual: Vec<f64> = cache
        .u
        .values()
        .iter()
        .zip(cache.phi.values())
        .map(|(&u, &phi)| pc_node_residual(u, phi, &p))
        .collect();
    PcStationarityReport {
        max_residual: residual.iter().cloned().fold(0.0, f64::max),
        residual,
    }
}

pub(crate) fn pc_node_residual(u: f64, phi: f64, p: &CostParams) -> f64 {
    let mut r = 0.0f64;
    if !at_upper_bound(u, p.gamma) {
        r = r.max(-phi - g_dir1(u, 1.0, p));
    }
    if !at_lower_bound(u, p.gamma) {
        r = r.max(phi - g_dir1(u, -1.0, p));
    }
    r
}

#[derive(Debug, Clone, Serialize)]
pub struct PcStructureReport {
    /// Violations of the four implications, in order: small adjoint, adjoint
    /// at `-threshold`, adjoint at `+threshold`, large adjoint.
    pub violations: [usize; 4],
    pub tie_nodes: usize,
    pub tie_measure: f64,
    /// Nonzero controls below the kink, checked only when there are no ties.
    pub gap_violations: Option<usize>,
    pub passes: bool,
}

/// Checks the node-wise structure of a stationary point of the convexified
/// problem. `proj_tol` bounds `|u - proj(-phi/alpha)|` on the large-adjoint
/// set.
pub fn check_pc_structure(spec: &ProblemSpec, cache: &EvalCache, proj_tol: f64) -> PcStructureReport {
    let p = spec.cost_params();
    let (thr, s) = (p.adjoint_threshold(), p.kink());
    let ztol = spec.zero_tol();
    let (u, phi) = (cache.u.values(), cache.phi.values());
    let mut v = [0usize; 4];
    let mut ties = 0usize;
    let mut gap = 0usize;
    for i in 0..u.len() {
        let (ui, fi) = (u[i], phi[i]);
        if (fi.abs() - thr).abs() <= TIE_TOL {
            ties += 1;
            let ok = if fi < 0.0 {
                ui >= -ztol && ui <= s * (1.0 + 1e-9)
            } else {
                ui <= ztol && ui >= -s * (1.0 + 1e-9)
            };
            if !ok {
                v[if fi < 0.0 { 1 } else { 2 }] += 1;
            }
        } else if fi.abs() < thr {
            if ui.abs() > ztol {
                v[0] += 1;
            }
        } else {
            let proj = (-fi / p.alpha).clamp(-p.gamma, p.gamma);
            if (ui - proj).abs() > proj_tol {
                v[3] += 1;
            }
        }
        if ui.abs() > ztol && !p.on_quadratic_branch(ui) && ui.abs() < s * (1.0 - 1e-9) {
            gap += 1;
        }
    }
    let gap_violations = (ties == 0).then_some(gap);
    PcStructureReport {
        violations: v,
        tie_nodes: ties,
        tie_measure: ties as f64 * spec.grid().cell_volume(),
        gap_violations,
        passes: v.iter().all(|&c| c == 0) && gap_violations.unwrap_or(0) == 0,
    }
}

/// Largest node-wise `|g(u_i) - j0(u_i)|`.
pub fn envelope_defect(spec: &ProblemSpec, u: &GridField) -> f64 {
    let p = spec.cost_params();
    u.values()
        .iter()
        .map(|&x| (g_scalar(x, &p) - j0_scalar(x, &p)).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeTag {
    ZeroForced,
    NonnegForced,
    NonposForced,
    Free,
}

impl NodeTag {
    fn meet(self, other: NodeTag) -> NodeTag {
        use NodeTag::*;
        match (self, other) {
            (Free, t) | (t, Free) => t,
            (a, b) if a == b => a,
            _ => ZeroForced,
        }
    }

    pub fn admits(self, v: f64) -> bool {
        match self {
            NodeTag::ZeroForced => v == 0.0,
            NodeTag::NonnegForced => v >= 0.0,
            NodeTag::NonposForced => v <= 0.0,
            NodeTag::Free => true,
        }
    }

    pub fn clamp(self, v: f64) -> f64 {
        match self {
            NodeTag::ZeroForced => 0.0,
            NodeTag::NonnegForced => v.max(0.0),
            NodeTag::NonposForced => v.min(0.0),
            NodeTag::Free => v,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NodeTag::ZeroForced => "zero",
            NodeTag::NonnegForced => "nonneg",
            NodeTag::NonposForced => "nonpos",
            NodeTag::Free => "free",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConeKind {
    Tangent,
    /// Critical cone of the original problem.
    CU,
    /// Critical cone of the convexified problem.
    CPc,
    /// `tau`-extended cone.
    DTau,
}

impl ConeKind {
    pub fn name(self) -> &'static str {
        match self {
            ConeKind::Tangent => "tangent",
            ConeKind::CU => "C_u",
            ConeKind::CPc => "C_pc",
            ConeKind::DTau => "D_tau",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConeMask {
    pub kind: ConeKind,
    pub tags: Vec<NodeTag>,
}

impl ConeMask {
    pub fn contains(&self, v: &GridField) -> bool {
        self.tags.iter().zip(v.values()).all(|(t, &x)| t.admits(x))
    }

    /// Node-wise clamp onto the mask.
    pub fn project(&self, v: &GridField) -> GridField {
        let mut out = v.clone();
        for (x, t) in out.values_mut().iter_mut().zip(&self.tags) {
            *x = t.clamp(*x);
        }
        out
    }

    /// Nodes that are not zero-forced.
    pub fn free_nodes(&self) -> Vec<usize> {
        (0..self.tags.len())
            .filter(|&i| self.tags[i] != NodeTag::ZeroForced)
            .collect()
    }

    pub fn has_sign_constraints(&self) -> bool {
        self.tags
            .iter()
            .any(|t| matches!(t, NodeTag::NonnegForced | NodeTag::NonposForced))
    }

    pub fn count(&self, tag: NodeTag) -> usize {
        self.tags.iter().filter(|&&t| t == tag).count()
    }

    pub fn is_trivial(&self) -> bool {
        self.tags.iter().all(|&t| t == NodeTag::ZeroForced)
    }

    /// Writes `node, tag` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["node", "tag"])?;
        for (i, t) in self.tags.iter().enumerate() {
            w.write_record([i.to_string().as_str(), t.name()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn tangent_tags(u: &[f64], gamma: f64) -> Vec<NodeTag> {
    u.iter()
        .map(|&x| {
            if at_lower_bound(x, gamma) {
                NodeTag::NonnegForced
            } else if at_upper_bound(x, gamma) {
                NodeTag::NonposForced
            } else {
                NodeTag::Free
            }
        })
        .collect()
}

/// Builds the requested cone at `cache.u`. `tau` is only read for
/// [`ConeKind::DTau`], where it must lie in `(0, sqrt(2 alpha beta))`.
pub fn build_cone(spec: &ProblemSpec, cache: &EvalCache, kind: ConeKind, tau: f64) -> Result<ConeMask> {
    let p = spec.cost_params();
    let (u, phi) = (cache.u.values(), cache.phi.values());
    let ztol = spec.zero_tol();
    let thr = p.adjoint_threshold();
    let mut tags = tangent_tags(u, p.gamma);
    let n = u.len();
    match kind {
        ConeKind::Tangent => {}
        ConeKind::CU => {
            let tol_eq = 1e-8 * (1.0 + cache.phi.norm_linf());
            for i in 0..n {
                if p.alpha == 0.0 || u[i].abs() <= ztol || (phi[i] + p.alpha * u[i]).abs() > tol_eq {
                    tags[i] = NodeTag::ZeroForced;
                }
            }
        }
        ConeKind::CPc => {
            if p.is_interior_kink() {
                for i in 0..n {
                    let zero = u[i].abs() <= ztol;
                    let t = if phi[i].abs() < thr - TIE_TOL || phi[i].abs() > p.alpha * p.gamma {
                        NodeTag::ZeroForced
                    } else if zero && (phi[i] - thr).abs() <= TIE_TOL {
                        NodeTag::NonposForced
                    } else if zero && (phi[i] + thr).abs() <= TIE_TOL {
                        NodeTag::NonnegForced
                    } else {
                        NodeTag::Free
                    };
                    tags[i] = tags[i].meet(t);
                }
            } else {
                // l1 regime: directions with phi v + g'(u; v) = 0
                for i in 0..n {
                    let plus = (phi[i] + g_dir1(u[i], 1.0, &p)).abs() <= TIE_TOL;
                    let minus = (-phi[i] + g_dir1(u[i], -1.0, &p)).abs() <= TIE_TOL;
                    let t = match (plus, minus) {
                        (true, true) => NodeTag::Free,
                        (true, false) => NodeTag::NonnegForced,
                        (false, true) => NodeTag::NonposForced,
                        (false, false) => NodeTag::ZeroForced,
                    };
                    tags[i] = tags[i].meet(t);
                }
            }
        }
        ConeKind::DTau => {
            if !(tau > 0.0 && tau < thr) {
                return Err(Error::InvalidArgument(format!(
                    "tau must lie in (0, {thr}), got {tau}"
                )));
            }
            for i in 0..n {
                let a = phi[i].abs();
                let zero = u[i].abs() <= ztol;
                let t = if a <= thr - tau || a >= p.alpha * p.gamma + tau {
                    NodeTag::ZeroForced
                } else if zero && (phi[i] + thr).abs() <= TIE_TOL {
                    NodeTag::NonnegForced
                } else if zero && (phi[i] - thr).abs() <= TIE_TOL {
                    NodeTag::NonposForced
                } else {
                    NodeTag::Free
                };
                tags[i] = tags[i].meet(t);
            }
        }
    }
    Ok(ConeMask { kind, tags })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ETauResult {
    pub member: bool,
    /// `F'(u) v + G'(u; v)`
    pub first_order: f64,
    pub z_norm: f64,
    /// `tau ||z_v|| - first_order`; nonnegative for members.
    pub margin: f64,
}

pub fn in_e_tau(pde: &Pde, cache: &EvalCache, v: &GridField, tau: f64) -> ETauResult {
    let p = pde.spec().cost_params();
    let first_order = cache.phi.dot(v) + g_dir1_integral(&p, &cache.u, v);
    let z_norm = cache.z(v).norm_l2();
    let margin = tau * z_norm - first_order;
    ETauResult {
        member: margin >= 0.0,
        first_order,
        z_norm,
        margin,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FirstOrderGrowthReport {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub omega_nodes: usize,
}

/// First-order growth `F'(u)w + G'(u;w) >= tau ||w||_{L1(Omega_{u,w})}`.
pub fn first_order_growth_bound(pde: &Pde, cache: &EvalCache, w: &GridField, tau: f64) -> FirstOrderGrowthReport {
    let spec = pde.spec();
    let p = spec.cost_params();
    let thr = p.adjoint_threshold();
    let ztol = spec.zero_tol();
    let (u, phi, wv) = (cache.u.values(), cache.phi.values(), w.values());
    let lhs = cache.phi.dot(w) + g_dir1_integral(&p, &cache.u, w);
    let mut l1 = 0.0;
    let mut count = 0usize;
    for i in 0..u.len() {
        let zero = u[i].abs() <= ztol;
        let a = phi[i].abs();
        let inside = (zero && (phi[i] + thr).abs() <= TIE_TOL && wv[i] < 0.0)
            || (zero && (phi[i] - thr).abs() <= TIE_TOL && wv[i] > 0.0)
            || (wv[i] != 0.0 && (a <= thr - tau || a >= p.alpha * p.gamma + tau));
        if inside {
            l1 += wv[i].abs();
            count += 1;
        }
    }
    let rhs = tau * spec.grid().cell_volume() * l1;
    FirstOrderGrowthReport {
        lhs,
        rhs,
        slack: lhs - rhs,
        omega_nodes: count,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::functionals::eval;
    use crate::problem::{build_problem, FieldSource, ProblemConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn manufactured() -> (Pde, GridField) {
        let cfg = fixtures::standard_cubic_1d_config(127);
        let thr = (2.0f64 * cfg.alpha * cfg.beta).sqrt();
        fixtures::manufactured_pmp(cfg, |x, _| 2.0 * thr * (2.0 * std::f64::consts::PI * x).sin())
            .unwrap()
    }

    #[test]
    fn manufactured_pmp_point_has_zero_residual() {
        let (pde, u) = manufactured();
        let c = eval(&pde, &u).unwrap();
        let r = pmp_residual(pde.spec(), &c);
        assert!(r.max_residual <= 1e-10, "{}", r.max_residual);
        assert!(r.residual.iter().all(|&x| x >= 0.0));
        assert_eq!(r.sparsity_violations, 0);
        assert_eq!(envelope_defect(pde.spec(), &u), 0.0);
        assert!(pc_stationarity_residual(pde.spec(), &c).max_residual <= 1e-9);
        assert!(check_pc_structure(pde.spec(), &c, 1e-8).passes);
    }

    #[test]
    fn bang_control_with_small_adjoint() {
        let pde = Pde::new(
            build_problem(&ProblemConfig {
                interior: vec![15],
                c0: FieldSource::Constant(1.0),
                ..Default::default()
            })
            .unwrap(),
        );
        let (alpha, beta, gamma) = (1.0, 1.0, 10.0);
        let u = GridField::constant(pde.grid().clone(), gamma);
        let c = eval(&pde, &u).unwrap();
        let r = pmp_residual(pde.spec(), &c);
        let p = pde.spec().cost_params();
        for (i, &phi) in c.phi.values().iter().enumerate() {
            let best = hamiltonian_argmin(phi, &p).value;
            let expect = phi * gamma + 0.5 * alpha * gamma * gamma + beta - best;
            assert!((r.residual[i] - expect).abs() <= 1e-10 * expect);
        }
        assert!(r.max_residual > 50.0);
    }

    #[test]
    fn single_gap_node_is_one_violation() {
        let (pde, mut u) = manufactured();
        let s = pde.spec().cost_params().kink();
        let i = u.values().iter().position(|&x| x == 0.0).unwrap();
        u.values_mut()[i] = 0.5 * s;
        let c = eval(&pde, &u).unwrap();
        let rep = check_sparsity_structure(pde.spec(), &c);
        assert_eq!(rep.violations, 1);
        assert_eq!(rep.gap_nodes, vec![i]);
        let l = check_pc_structure(pde.spec(), &c, 1e-8);
        assert!(!l.passes && l.violations[0] >= 1);
        assert_eq!(l.gap_violations, Some(1));
    }

    #[test]
    fn zero_control_satisfies_sparsity_trivially() {
        let pde = fixtures::standard_cubic_1d(63);
        let c = eval(&pde, &pde.spec().zeros()).unwrap();
        assert_eq!(check_sparsity_structure(pde.spec(), &c).violations, 0);
    }

    #[test]
    fn beta_star_zero_target() {
        let pde = fixtures::lq_interior_kink(&[1.0], 31);
        let spec = pde.spec().clone();
        let cfg = ProblemConfig {
            target: FieldSource::Constant(0.0),
            ..spec.config().clone()
        };
        let pde = Pde::new(build_problem(&cfg).unwrap());
        let c = eval(&pde, &pde.spec().zeros()).unwrap();
        assert_eq!(beta_star(pde.spec(), &c), 0.0);
        assert_eq!(pmp_residual(pde.spec(), &c).max_residual, 0.0);
    }

    #[test]
    fn beta_star_threshold() {
        let pde = fixtures::standard_cubic_1d(63);
        let c0 = eval(&pde, &pde.spec().zeros()).unwrap();
        let b = beta_star(pde.spec(), &c0);
        let m = c0.phi.norm_linf();
        assert!((b - m * m / (2.0 * 0.01)).abs() <= 1e-12 * b);
        let above = Pde::new(pde.spec().with_beta(1.01 * b).unwrap());
        let c = eval(&above, &above.spec().zeros()).unwrap();
        let r = pmp_residual(above.spec(), &c);
        assert_eq!(r.max_residual, 0.0);
        let p = above.spec().cost_params();
        assert!(c.phi.values().iter().all(|&f| hamiltonian_argmin(f, &p).set.values() == vec![0.0]));
        let below = Pde::new(pde.spec().with_beta(0.5 * b).unwrap());
        let c = eval(&below, &below.spec().zeros()).unwrap();
        assert!(pmp_residual(below.spec(), &c).max_residual > 0.0);
    }

    #[test]
    fn pc_residual_branches() {
        let p = CostParams::new(1.0, 2.0, 10.0);
        let thr = p.adjoint_threshold();
        assert_eq!(pc_node_residual(0.0, 0.9 * thr, &p), 0.0);
        assert_eq!(pc_node_residual(0.0, -thr, &p), 0.0);
        assert!((pc_node_residual(0.0, thr + 0.1, &p) - 0.1).abs() < 1e-14);
        assert!((pc_node_residual(0.0, -thr - 0.1, &p) - 0.1).abs() < 1e-14);
        // at the upper bound only decreasing directions are admissible
        assert_eq!(pc_node_residual(10.0, -20.0, &p), 0.0);
        assert!((pc_node_residual(10.0, 5.0, &p) - 15.0).abs() < 1e-12);
    }

    #[test]
    fn cones() {
        let (pde, u) = manufactured();
        let spec = pde.spec();
        let c = eval(&pde, &u).unwrap();
        let cu = build_cone(spec, &c, ConeKind::CU, 0.0).unwrap();
        let cpc = build_cone(spec, &c, ConeKind::CPc, 0.0).unwrap();
        assert!(!cu.is_trivial());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let v = GridField::from_fn(pde.grid().clone(), |_, _| rng.random_range(-1.0..1.0));
            let v = cu.project(&v);
            assert!(cu.contains(&v) && cpc.contains(&v));
        }
        let thr = spec.cost_params().adjoint_threshold();
        assert!(build_cone(spec, &c, ConeKind::DTau, 0.0).is_err());
        assert!(build_cone(spec, &c, ConeKind::DTau, thr).is_err());
        let d = build_cone(spec, &c, ConeKind::DTau, 0.1 * thr).unwrap();
        assert!(cpc.free_nodes().iter().all(|i| d.free_nodes().contains(i)));

        let zero = GridField::zeros(pde.grid().clone());
        let e = in_e_tau(&pde, &c, &zero, 0.1);
        assert!(e.member && e.margin == 0.0);
        let v = cpc.project(&GridField::constant(pde.grid().clone(), 1.0));
        assert!(in_e_tau(&pde, &c, &v, 1e-3).member);
        let l = first_order_growth_bound(&pde, &c, &zero, 0.1 * thr);
        assert_eq!((l.lhs, l.rhs), (0.0, 0.0));
    }

    #[test]
    fn alpha_zero_critical_cone_is_trivial() {
        let pde = Pde::new(
            build_problem(&ProblemConfig {
                interior: vec![31],
                c0: FieldSource::Constant(1.0),
                target: FieldSource::Constant(5.0),
                alpha: 0.0,
                beta: 0.01,
                gamma: 10.0,
                ..Default::default()
            })
            .unwrap(),
        );
        let u = GridField::constant(pde.grid().clone(), 10.0);
        let c = eval(&pde, &u).unwrap();
        assert!(build_cone(pde.spec(), &c, ConeKind::CU, 0.0).unwrap().is_trivial());
        let t = build_cone(pde.spec(), &c, ConeKind::Tangent, 0.0).unwrap();
        assert_eq!(t.count(NodeTag::NonposForced), 31);
    }

    #[test]
    fn mask_csv_roundtrip() {
        let mask = ConeMask {
            kind: ConeKind::Tangent,
            tags: vec![NodeTag::Free, NodeTag::ZeroForced, NodeTag::NonnegForced],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.csv");
        mask.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "node,tag\n0,free\n1,zero\n2,nonneg\n");
    }
}
