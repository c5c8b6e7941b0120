//! Second-order conditions: dense assembly of the quadratic forms on a cone's
//! free subspace, generalized eigenvalues against `||z_v||^2`, sign-constrained
//! refinement, growth sampling, multi-start isolation probes, and the
//! structural band estimate.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::{
    eval, g_dir1_integral, g_tilde_integral, hess_f_apply, hess_weight, random_unit_direction,
    EvalCache,
};
use crate::optimality::{build_cone, in_e_tau, ConeKind, ConeMask, NodeTag};
use crate::pde::Pde;
use crate::pointwise::gtilde_scalar;
use crate::problem::{uad_project, GridField};
use crate::solver::{solve_pc, SolverSettings};

/// Largest free subspace assembled densely.
pub const DENSE_CAP: usize = 4096;
/// Smallest eigenvalue accepted as a positive curvature bound.
pub const DELTA0: f64 = 1e-6;
/// Tolerance on the smallest eigenvalue for the necessary condition.
pub const NECESSARY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormKind {
    /// `F''(u)(v, v) + alpha ||v||^2`
    Necessary,
    /// `F''(u) v^2 + G~(u; v^2)`
    Sufficient,
}

/// How the sign-dependent `G~` term enters a dense (symmetric) form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GtildeMode {
    /// `alpha` only where the mask forces `v` to share the sign of `u`.
    Lower,
    /// `alpha` on every node with `|u| >= s`, whatever the sign of `v`.
    Upper,
    Off,
}

/// `Q` and `M` restricted to the free nodes of a mask, in the basis of nodal
/// unit vectors.
#[derive(Debug, Clone)]
pub struct QuadraticFormAssembly {
    pub kind: FormKind,
    /// Free node indices; column `k` belongs to node `free[k]`.
    pub free: Vec<usize>,
    /// Dense `F''` block.
    pub f2: DMatrix<f64>,
    /// Diagonal added to `f2` to form `Q`.
    pub diag: DVector<f64>,
    pub q: DMatrix<f64>,
    /// Gram matrix of `z_v` in `L^2`.
    pub m: DMatrix<f64>,
    /// Orthonormal factor and triangle of `sqrt(W) Z = U R`.
    u_fac: DMatrix<f64>,
    r_fac: DMatrix<f64>,
    weights: DVector<f64>,
}

impl QuadraticFormAssembly {
    pub fn dim(&self) -> usize {
        self.free.len()
    }

    pub fn symmetry_defect(&self) -> f64 {
        let d = (&self.q - self.q.transpose()).amax();
        d.max((&self.m - self.m.transpose()).amax())
    }

    /// Expands subspace coefficients into a grid field.
    pub fn to_field(&self, like: &GridField, x: &DVector<f64>) -> GridField {
        let mut v = GridField::zeros(like.grid().clone());
        for (k, &i) in self.free.iter().enumerate() {
            v.values_mut()[i] = x[k];
        }
        v
    }

    pub fn from_field(&self, v: &GridField) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.free.iter().map(|&i| v.values()[i]))
    }
}

fn diag_weights(
    pde: &Pde,
    cache: &EvalCache,
    mask: &ConeMask,
    free: &[usize],
    kind: FormKind,
    mode: GtildeMode,
) -> DVector<f64> {
    let p = pde.spec().cost_params();
    let w = pde.grid().cell_volume();
    let u = cache.u.values();
    DVector::from_iterator(
        free.len(),
        free.iter().map(|&i| match kind {
            FormKind::Necessary => p.alpha * w,
            FormKind::Sufficient => {
                let quad = p.is_interior_kink() && p.on_quadratic_branch(u[i]);
                let matched = match mask.tags[i] {
                    NodeTag::NonnegForced => u[i] > 0.0,
                    NodeTag::NonposForced => u[i] < 0.0,
                    _ => false,
                };
                let on = match mode {
                    GtildeMode::Lower => quad && matched,
                    GtildeMode::Upper => quad,
                    GtildeMode::Off => false,
                };
                if on {
                    p.alpha * w
                } else {
                    0.0
                }
            }
        }),
    )
}

/// Assembles the form on the free nodes of `mask`, with the conservative
/// `G~` treatment for the sufficient form.
pub fn assemble_forms(
    pde: &Pde,
    cache: &EvalCache,
    mask: &ConeMask,
    kind: FormKind,
) -> Result<QuadraticFormAssembly> {
    assemble_forms_with(pde, cache, mask, kind, GtildeMode::Lower)
}

pub fn assemble_forms_with(
    pde: &Pde,
    cache: &EvalCache,
    mask: &ConeMask,
    kind: FormKind,
    mode: GtildeMode,
) -> Result<QuadraticFormAssembly> {
    let n = cache.u.len();
    if n > DENSE_CAP {
        return Err(Error::DenseCapExceeded { free: n, cap: DENSE_CAP });
    }
    let free = mask.free_nodes();
    let nf = free.len();
    let w = pde.grid().cell_volume();
    let lin = cache.linearization();
    let cols: Vec<Vec<f64>> = free
        .par_iter()
        .map(|&j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            lin.solve(&e)
        })
        .collect();
    let sw = w.sqrt();
    let z = DMatrix::from_fn(n, nf, |r, c| sw * cols[c][r]);
    let d = DVector::from_vec(hess_weight(pde, cache));
    let dz = DMatrix::from_fn(n, nf, |r, c| d[r] * z[(r, c)]);
    let mut f2 = z.transpose() * &dz;
    let mut m = z.transpose() * &z;
    symmetrize(&mut f2);
    symmetrize(&mut m);
    let diag = diag_weights(pde, cache, mask, &free, kind, mode);
    let mut q = f2.clone();
    for k in 0..nf {
        q[(k, k)] += diag[k];
    }
    let (u_fac, r_fac) = if nf > 0 {
        let qr = z.qr();
        (qr.q(), qr.r())
    } else {
        (DMatrix::zeros(n, 0), DMatrix::zeros(0, 0))
    };
    Ok(QuadraticFormAssembly {
        kind,
        free,
        f2,
        diag,
        q,
        m,
        u_fac,
        r_fac,
        weights: d,
    })
}

fn symmetrize(a: &mut DMatrix<f64>) {
    let t = a.transpose();
    *a += t;
    *a *= 0.5;
}

#[derive(Debug, Clone)]
pub struct PencilEigen {
    pub lambda_min: f64,
    /// `M`-normalized eigenvector in subspace coefficients.
    pub vector: DVector<f64>,
}

fn solve_upper(r: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    r.solve_upper_triangular(b)
}

/// Smallest eigenvalue of `Q x = lambda M x` by whitening with the triangular
/// factor of `Z` (whose Gram matrix is `M`).
pub fn pencil_min_eigen(a: &QuadraticFormAssembly) -> Result<PencilEigen> {
    let nf = a.dim();
    if nf == 0 {
        return Err(Error::InvalidArgument("empty subspace".into()));
    }
    // C = U^T D U + R^{-T} diag R^{-1}
    let du = DMatrix::from_fn(a.u_fac.nrows(), nf, |r, c| a.weights[r] * a.u_fac[(r, c)]);
    let mut c = a.u_fac.transpose() * du;
    let rinv = a
        .r_fac
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::LinearSolve("singular linearized solution operator".into()))?;
    let scaled = DMatrix::from_fn(nf, nf, |r, k| a.diag[r] * rinv[(r, k)]);
    c += rinv.transpose() * scaled;
    symmetrize(&mut c);
    let eig = SymmetricEigen::new(c);
    let (k, &lambda_min) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    let y = eig.eigenvectors.column(k).into_owned();
    let x = solve_upper(&a.r_fac, &y)
        .ok_or_else(|| Error::LinearSolve("singular triangular factor".into()))?;
    Ok(PencilEigen { lambda_min, vector: x })
}

/// Smallest generalized eigenvalue by locally optimal preconditioned
/// minimization of the Rayleigh quotient from `starts` random vectors.
pub fn rayleigh_min(a: &QuadraticFormAssembly, starts: usize, rng: &mut impl Rng) -> Result<PencilEigen> {
    let nf = a.dim();
    if nf == 0 {
        return Err(Error::InvalidArgument("empty subspace".into()));
    }
    let scale = a.q.amax().max(a.m.amax());
    let mut sigma = 0.0;
    let prec = loop {
        if let Some(ch) = (&a.q + &a.m * sigma).cholesky() {
            break ch;
        }
        sigma = if sigma == 0.0 { 1e-8 * scale / a.m.amax() } else { 4.0 * sigma };
        if !sigma.is_finite() {
            return Err(Error::LinearSolve("no positive definite shift found".into()));
        }
    };
    let mut best: Option<PencilEigen> = None;
    for _ in 0..starts.max(1) {
        let x0 = DVector::from_fn(nf, |_, _| rng.random_range(-1.0..1.0));
        let e = lobpcg_single(&a.q, &a.m, x0, |r| prec.solve(r), 500);
        if best.as_ref().is_none_or(|b| e.lambda_min < b.lambda_min) {
            best = Some(e);
        }
    }
    Ok(best.expect("at least one start"))
}

fn m_normalize(m: &DMatrix<f64>, x: &DVector<f64>) -> Option<DVector<f64>> {
    let n2 = x.dot(&(m * x));
    (n2 > 0.0 && n2.is_finite()).then(|| x / n2.sqrt())
}

fn lobpcg_single(
    q: &DMatrix<f64>,
    m: &DMatrix<f64>,
    x0: DVector<f64>,
    prec: impl Fn(&DVector<f64>) -> DVector<f64>,
    max_iter: usize,
) -> PencilEigen {
    let mut x = m_normalize(m, &x0).expect("nonzero start");
    let mut lambda = x.dot(&(q * &x));
    let mut p: Option<DVector<f64>> = None;
    for _ in 0..max_iter {
        let qx = q * &x;
        let mx = m * &x;
        let r = &qx - &mx * lambda;
        if r.norm() <= 1e-13 * (qx.norm() + lambda.abs() * mx.norm()) {
            break;
        }
        let mut basis = vec![x.clone(), prec(&r)];
        if let Some(p) = &p {
            basis.push(p.clone());
        }
        // M-orthonormalize
        let mut ortho: Vec<DVector<f64>> = Vec::new();
        for mut b in basis {
            for _ in 0..2 {
                for o in &ortho {
                    let c = o.dot(&(m * &b));
                    b -= o * c;
                }
            }
            let n2 = b.dot(&(m * &b));
            if n2 > 1e-28 * (1.0 + b.norm_squared() * m.amax()) {
                ortho.push(b / n2.sqrt());
            }
        }
        let k = ortho.len();
        let s = DMatrix::from_columns(&ortho);
        let mut small = s.transpose() * q * &s;
        symmetrize(&mut small);
        let eig = SymmetricEigen::new(small);
        let (j, &mu) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty");
        let y = eig.eigenvectors.column(j);
        let next = &s * y;
        let next = m_normalize(m, &next).unwrap_or(next);
        p = (k > 1).then(|| {
            let mut d = DVector::zeros(x.len());
            for i in 1..k {
                d += &ortho[i] * y[i];
            }
            d
        });
        let done = (mu - lambda).abs() <= 1e-15 * lambda.abs().max(1e-300);
        x = next;
        lambda = mu;
        if done {
            break;
        }
    }
    PencilEigen { lambda_min: lambda, vector: x }
}

/// Serializes as its kebab-case name; `delta` is reported next to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    NecessaryHolds,
    NecessaryFails,
    SufficientHolds { delta: f64 },
    SufficientFailsWitness,
    SufficientInconclusive,
    DelegatedRegime,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::NecessaryHolds => "necessary-holds",
            Verdict::NecessaryFails => "necessary-fails",
            Verdict::SufficientHolds { .. } => "sufficient-holds",
            Verdict::SufficientFailsWitness => "sufficient-fails-witness",
            Verdict::SufficientInconclusive => "sufficient-inconclusive",
            Verdict::DelegatedRegime => "delegated-regime",
        }
    }
}

impl Serialize for Verdict {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Refinement {
    /// Smallest cone-restricted quotient found (not an eigenvalue).
    pub min_quotient: f64,
    pub iterations: usize,
    /// For the sufficient form: whether the witness lies in `E^tau`.
    pub witness_in_e_tau: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SocReport {
    pub form: FormKind,
    pub cone: ConeKind,
    pub tau: Option<f64>,
    pub free_dim: usize,
    pub sign_constrained: bool,
    pub lambda_min: Option<f64>,
    pub lambda_min_rayleigh: Option<f64>,
    /// `|lambda_eig - lambda_rayleigh| / max(1, |lambda_eig|)`
    pub eigen_disagreement: Option<f64>,
    pub delta: Option<f64>,
    pub symmetry_defect: Option<f64>,
    pub refinement: Option<Refinement>,
    pub vacuous: bool,
    pub verdict: Verdict,
    /// Second difference of `J_pc` along the witness, when one exists.
    pub witness_second_difference: Option<f64>,
    /// `J_pc(u + t v) - J_pc(u)` at the step used for the second difference.
    pub witness_decrease: Option<f64>,
    /// Suggested sampling radius for [`measure_quadratic_growth`] after a
    /// sufficient-holds verdict.
    pub growth_radius: Option<f64>,
    #[serde(skip)]
    pub witness: Option<GridField>,
    /// Minimizing eigenvector of the pencil as a control field.
    #[serde(skip)]
    pub eigenvector: Option<GridField>,
}

impl SocReport {
    fn new(form: FormKind, cone: ConeKind, tau: Option<f64>, verdict: Verdict) -> Self {
        SocReport {
            form,
            cone,
            tau,
            free_dim: 0,
            sign_constrained: false,
            lambda_min: None,
            lambda_min_rayleigh: None,
            eigen_disagreement: None,
            delta: None,
            symmetry_defect: None,
            refinement: None,
            vacuous: false,
            verdict,
            witness_second_difference: None,
            witness_decrease: None,
            growth_radius: None,
            witness: None,
            eigenvector: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SocSettings {
    /// Random starts of the Rayleigh cross-check; 0 disables it.
    pub rayleigh_starts: usize,
    pub refine_iter: usize,
}

impl Default for SocSettings {
    fn default() -> Self {
        SocSettings {
            rayleigh_starts: 20,
            refine_iter: 500,
        }
    }
}

fn cross_check(
    rep: &mut SocReport,
    a: &QuadraticFormAssembly,
    lam: f64,
    settings: &SocSettings,
    rng: &mut impl Rng,
) -> Result<()> {
    if settings.rayleigh_starts > 0 {
        let r = rayleigh_min(a, settings.rayleigh_starts, rng)?;
        rep.lambda_min_rayleigh = Some(r.lambda_min);
        rep.eigen_disagreement = Some((lam - r.lambda_min).abs() / lam.abs().max(1.0));
    }
    Ok(())
}

/// Projected gradient on `{x : x^T M x = 1}` intersected with the mask's sign
/// constraints, minimizing `(x^T F'' x + extra(x)) / x^T M x`.
fn refine_on_cone(
    a: &QuadraticFormAssembly,
    tags: &[NodeTag],
    extra: &dyn Fn(&DVector<f64>) -> (f64, DVector<f64>),
    starts: &[DVector<f64>],
    iters: usize,
) -> Option<(f64, DVector<f64>, usize)> {
    let project = |x: &DVector<f64>| -> Option<DVector<f64>> {
        let c = DVector::from_iterator(x.len(), x.iter().zip(tags).map(|(&v, t)| t.clamp(v)));
        m_normalize(&a.m, &c)
    };
    let quotient = |x: &DVector<f64>| {
        let (e, _) = extra(x);
        (x.dot(&(&a.f2 * x)) + e) / x.dot(&(&a.m * x))
    };
    let mut best: Option<(f64, DVector<f64>, usize)> = None;
    for s in starts {
        let Some(mut x) = project(s) else { continue };
        let mut r = quotient(&x);
        let mut eta = 1.0 / a.q.amax().max(1e-300);
        let mut used = 0;
        for it in 0..iters {
            used = it + 1;
            let (_, ge) = extra(&x);
            let grad = (&a.f2 * &x) * 2.0 + ge - (&a.m * &x) * (2.0 * r);
            let mut accepted = false;
            for _ in 0..60 {
                let cand = &x - &grad * eta;
                if let Some(xn) = project(&cand) {
                    let rn = quotient(&xn);
                    if rn <= r - 1e-4 * grad.dot(&(&x - &xn)).abs() && rn < r {
                        x = xn;
                        r = rn;
                        accepted = true;
                        eta *= 2.0;
                        break;
                    }
                }
                eta *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if best.as_ref().is_none_or(|b| r < b.0) {
            best = Some((r, x, used));
        }
    }
    best
}

fn restricted_tags(a: &QuadraticFormAssembly, mask: &ConeMask) -> Vec<NodeTag> {
    a.free.iter().map(|&i| mask.tags[i]).collect()
}

/// Second difference of `J_pc` along `v`; central when both sides are
/// admissible, forward otherwise. Returns `(second difference, J_pc(u+tv) -
/// J_pc(u))`.
fn second_difference(pde: &Pde, cache: &EvalCache, v: &GridField) -> Result<(f64, f64)> {
    let gamma = pde.spec().gamma();
    let t = 1e-3 * cache.u.norm_linf().max(1.0) / v.norm_linf().max(1e-300);
    let inside = |w: &GridField| w.values().iter().all(|x| x.abs() <= gamma);
    let plus = &cache.u + &(v * t);
    let minus = &cache.u - &(v * t);
    let jp = eval(pde, &plus)?.j_pc;
    if inside(&minus) {
        let jm = eval(pde, &minus)?.j_pc;
        Ok(((jp - 2.0 * cache.j_pc + jm) / (t * t), jp - cache.j_pc))
    } else {
        let jpp = eval(pde, &(&cache.u + &(v * (2.0 * t))))?.j_pc;
        Ok(((jpp - 2.0 * jp + cache.j_pc) / (t * t), jp - cache.j_pc))
    }
}

/// Checks `F''(u)(v,v) + alpha ||v||^2 >= 0` on the critical cone of the
/// original problem.
pub fn check_necessary_soc(
    pde: &Pde,
    cache: &EvalCache,
    settings: &SocSettings,
    rng: &mut impl Rng,
) -> Result<SocReport> {
    let spec = pde.spec();
    let mask = build_cone(spec, cache, ConeKind::CU, 0.0)?;
    let mut rep = SocReport::new(FormKind::Necessary, ConeKind::CU, None, Verdict::NecessaryHolds);
    if mask.is_trivial() {
        rep.vacuous = true;
        return Ok(rep);
    }
    let a = assemble_forms(pde, cache, &mask, FormKind::Necessary)?;
    rep.free_dim = a.dim();
    rep.sign_constrained = mask.has_sign_constraints();
    rep.symmetry_defect = Some(a.symmetry_defect());
    let e = pencil_min_eigen(&a)?;
    rep.lambda_min = Some(e.lambda_min);
    rep.eigenvector = Some(a.to_field(&cache.u, &e.vector));
    cross_check(&mut rep, &a, e.lambda_min, settings, rng)?;
    if e.lambda_min >= -NECESSARY_TOL {
        return Ok(rep);
    }
    let tags = restricted_tags(&a, &mask);
    let witness = if rep.sign_constrained {
        let diag = a.diag.clone();
        let extra = move |x: &DVector<f64>| {
            let dx = x.component_mul(&diag);
            (x.dot(&dx), dx * 2.0)
        };
        let starts = vec![e.vector.clone(), -e.vector.clone()];
        let found = refine_on_cone(&a, &tags, &extra, &starts, settings.refine_iter);
        if let Some((r, _, it)) = &found {
            rep.refinement = Some(Refinement {
                min_quotient: *r,
                iterations: *it,
                witness_in_e_tau: None,
            });
        }
        found.filter(|f| f.0 < -NECESSARY_TOL).map(|f| f.1)
    } else {
        Some(e.vector.clone())
    };
    if let Some(x) = witness {
        let v = a.to_field(&cache.u, &x);
        let (d2, dec) = second_difference(pde, cache, &v)?;
        rep.verdict = Verdict::NecessaryFails;
        rep.witness_second_difference = Some(d2);
        rep.witness_decrease = Some(dec);
        rep.witness = Some(v);
    }
    Ok(rep)
}

/// Two-stage check of `F''(u) v^2 + G~(u; v^2) >= delta ||z_v||^2` on
/// `C^tau`.
pub fn check_sufficient_soc(
    pde: &Pde,
    cache: &EvalCache,
    tau: f64,
    settings: &SocSettings,
    rng: &mut impl Rng,
) -> Result<SocReport> {
    let spec = pde.spec();
    let p = spec.cost_params();
    let mut rep = SocReport::new(
        FormKind::Sufficient,
        ConeKind::DTau,
        Some(tau),
        Verdict::SufficientInconclusive,
    );
    if !p.is_interior_kink() {
        rep.verdict = Verdict::DelegatedRegime;
        return Ok(rep);
    }
    let mask = build_cone(spec, cache, ConeKind::DTau, tau)?;
    let radius = 0.1 * p.kink() * spec.grid().measure().sqrt();
    if mask.is_trivial() {
        rep.vacuous = true;
        rep.verdict = Verdict::SufficientHolds { delta: f64::INFINITY };
        rep.growth_radius = Some(radius);
        return Ok(rep);
    }
    let a = assemble_forms(pde, cache, &mask, FormKind::Sufficient)?;
    rep.free_dim = a.dim();
    rep.sign_constrained = mask.has_sign_constraints();
    rep.symmetry_defect = Some(a.symmetry_defect());
    let e = pencil_min_eigen(&a)?;
    rep.lambda_min = Some(e.lambda_min);
    rep.eigenvector = Some(a.to_field(&cache.u, &e.vector));
    cross_check(&mut rep, &a, e.lambda_min, settings, rng)?;
    if e.lambda_min >= DELTA0 {
        rep.delta = Some(e.lambda_min);
        rep.verdict = Verdict::SufficientHolds { delta: e.lambda_min };
        rep.growth_radius = Some(radius);
        return Ok(rep);
    }
    // stage (ii): true sign-dependent G~ along cone directions
    let tags = restricted_tags(&a, &mask);
    let w = pde.grid().cell_volume();
    let u: Vec<f64> = a.free.iter().map(|&i| cache.u.values()[i]).collect();
    let extra = |x: &DVector<f64>| {
        let mut g = DVector::zeros(x.len());
        let mut val = 0.0;
        for k in 0..x.len() {
            let gt = w * gtilde_scalar(u[k], x[k], &p);
            if gt > 0.0 {
                val += gt;
                g[k] = 2.0 * w * p.alpha * x[k];
            }
        }
        (val, g)
    };
    let mut starts = vec![e.vector.clone(), -e.vector.clone()];
    for _ in 0..4 {
        starts.push(DVector::from_fn(a.dim(), |_, _| rng.random_range(-1.0..1.0)));
    }
    if let Some((r, x, it)) = refine_on_cone(&a, &tags, &extra, &starts, settings.refine_iter) {
        let v = a.to_field(&cache.u, &x);
        let member = in_e_tau(pde, cache, &v, tau).member;
        rep.refinement = Some(Refinement {
            min_quotient: r,
            iterations: it,
            witness_in_e_tau: Some(member),
        });
        if r < 0.0 && member {
            let (d2, dec) = second_difference(pde, cache, &v)?;
            rep.verdict = Verdict::SufficientFailsWitness;
            rep.witness_second_difference = Some(d2);
            rep.witness_decrease = Some(dec);
            rep.witness = Some(v);
        }
    }
    Ok(rep)
}

/// Exact `(F''(u) v^2 + G~(u; v^2), ||z_v||^2)` through PDE solves.
pub fn sufficient_form_value(pde: &Pde, cache: &EvalCache, v: &GridField) -> (f64, f64) {
    let p = pde.spec().cost_params();
    let q = hess_f_apply(pde, cache, v, v) + g_tilde_integral(&p, &cache.u, v);
    let z = cache.z(v);
    (q, z.dot(&z))
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthReport {
    pub rho: f64,
    pub samples: usize,
    /// `min (J(u) - J(u_bar)) / ||z_{u-u_bar}||^2`
    pub kappa_j: f64,
    /// Same with `J_pc`.
    pub kappa_pc: f64,
    pub violations: usize,
    /// Samples where the `J` quotient fell below the `J_pc` quotient.
    pub order_breaks: usize,
    pub note: &'static str,
    #[serde(skip)]
    pub witness: Option<GridField>,
}

/// Samples admissible controls in the `L^2` ball of radius `rho` and records
/// the smallest quadratic growth quotients. `adversarial` directions (for
/// instance an eigenvector) are added at several radii.
pub fn measure_quadratic_growth(
    pde: &Pde,
    cache: &EvalCache,
    rho: f64,
    trials: usize,
    adversarial: &[GridField],
    rng: &mut impl Rng,
) -> Result<GrowthReport> {
    let gamma = pde.spec().gamma();
    let mut cands: Vec<GridField> = Vec::with_capacity(trials + 8 * adversarial.len());
    for _ in 0..trials {
        let d = random_unit_direction(&cache.u, rng);
        let r = rho * rng.random_range(0.0..1.0f64);
        cands.push(uad_project(&(&cache.u + &(&d * r)), gamma));
    }
    for a in adversarial {
        let n = a.norm_l2();
        if n == 0.0 {
            continue;
        }
        for f in [1.0, 0.5, 0.1, 0.01] {
            for sgn in [1.0, -1.0] {
                let d = a * (sgn * f * rho / n);
                cands.push(uad_project(&(&cache.u + &d), gamma));
            }
        }
    }
    let results: Vec<Option<(f64, f64)>> = cands
        .par_iter()
        .map(|u| -> Result<Option<(f64, f64)>> {
            let diff = u - &cache.u;
            let z = cache.z(&diff);
            let zz = z.dot(&z);
            if zz == 0.0 {
                return Ok(None);
            }
            let c = eval(pde, u)?;
            Ok(Some(((c.j - cache.j) / zz, (c.j_pc - cache.j_pc) / zz)))
        })
        .collect::<Result<_>>()?;
    let mut rep = GrowthReport {
        rho,
        samples: 0,
        kappa_j: f64::INFINITY,
        kappa_pc: f64::INFINITY,
        violations: 0,
        order_breaks: 0,
        note: "empirical sampling estimate, not a proof",
        witness: None,
    };
    for (u, r) in cands.iter().zip(results) {
        let Some((qj, qpc)) = r else { continue };
        rep.samples += 1;
        rep.kappa_j = rep.kappa_j.min(qj);
        rep.kappa_pc = rep.kappa_pc.min(qpc);
        if qj < 0.0 || qpc < 0.0 {
            rep.violations += 1;
            if rep.witness.is_none() {
                rep.witness = Some(u.clone());
            }
        }
        if qj < qpc - 1e-9 * qpc.abs().max(1.0) {
            rep.order_breaks += 1;
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, Serialize)]
pub struct StationaryPoint {
    pub distance: f64,
    pub j_pc: f64,
    pub converged: bool,
    #[serde(skip)]
    pub u: GridField,
}

#[derive(Debug, Clone, Serialize)]
pub struct IsolationReport {
    pub rho: f64,
    pub starts: usize,
    /// Distinct limits, the reference point first when it was reached.
    pub points: Vec<StationaryPoint>,
    pub pass: bool,
}

/// Runs the convexified solver from random starts in the `L^2` ball around
/// `u_bar` and collects the limits.
pub fn isolated_stationarity_probe(
    pde: &Pde,
    cache: &EvalCache,
    rho: f64,
    trials: usize,
    settings: &SolverSettings,
    rng: &mut impl Rng,
) -> Result<IsolationReport> {
    let gamma = pde.spec().gamma();
    let seeds: Vec<u64> = (0..trials).map(|_| rng.random()).collect();
    let limits: Vec<(GridField, f64, bool)> = seeds
        .par_iter()
        .map(|&seed| -> Result<(GridField, f64, bool)> {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let d = random_unit_direction(&cache.u, &mut r);
            let radius = rho * r.random_range(0.0..1.0f64);
            let start = uad_project(&(&cache.u + &(&d * radius)), gamma);
            let s = solve_pc(pde, &start, settings)?;
            let conv = s.converged();
            Ok((s.cache.u, s.cache.j_pc, conv))
        })
        .collect::<Result<_>>()?;
    let mut points: Vec<StationaryPoint> = Vec::new();
    let mut pass = true;
    for (u, j_pc, converged) in limits {
        let distance = (&u - &cache.u).norm_l2();
        pass &= converged && distance <= 1e-6;
        if !points.iter().any(|p| (&p.u - &u).norm_l2() <= 1e-6) {
            points.push(StationaryPoint {
                distance,
                j_pc,
                converged,
                u,
            });
        }
    }
    points.sort_by(|a, b| a.distance.total_cmp(&b.distance));
    Ok(IsolationReport {
        rho,
        starts: trials,
        points,
        pass,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BilinearReport {
    pub trials: usize,
    /// Smallest `alpha ||v||^2 - G~(u; v^2)` over the samples.
    pub min_gap: f64,
    pub max_gap: f64,
    pub strict_samples: usize,
    /// Nodes contributing to the first strict gap.
    pub witness_nodes: Vec<usize>,
}

/// Compares `alpha ||v||^2` with `G~(u; v^2)` on random directions of the
/// critical cone of the original problem.
pub fn compare_bilinear_forms(
    pde: &Pde,
    cache: &EvalCache,
    trials: usize,
    rng: &mut impl Rng,
) -> Result<BilinearReport> {
    let spec = pde.spec();
    let p = spec.cost_params();
    let mask = build_cone(spec, cache, ConeKind::CU, 0.0)?;
    let mut rep = BilinearReport {
        trials,
        min_gap: f64::INFINITY,
        max_gap: f64::NEG_INFINITY,
        strict_samples: 0,
        witness_nodes: Vec::new(),
    };
    for _ in 0..trials {
        let v = mask.project(&random_unit_direction(&cache.u, rng));
        let gap = p.alpha * v.dot(&v) - g_tilde_integral(&p, &cache.u, &v);
        rep.min_gap = rep.min_gap.min(gap);
        rep.max_gap = rep.max_gap.max(gap);
        if gap > 0.0 {
            rep.strict_samples += 1;
            if rep.witness_nodes.is_empty() {
                rep.witness_nodes = (0..v.len())
                    .filter(|&i| {
                        let (u, x) = (cache.u.values()[i], v.values()[i]);
                        x != 0.0 && gtilde_scalar(u, x, &p) == 0.0
                    })
                    .collect();
            }
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, Serialize)]
pub struct StructuralReport {
    pub eps: Vec<f64>,
    /// Measure of `{thr - eps < |phi| <= thr}` per `eps`.
    pub measures: Vec<f64>,
    /// Smallest `c` with `measure(eps) <= c eps` for every `eps`; infinite
    /// when nodes sit exactly on the threshold.
    pub c: f64,
    pub kappa: Option<f64>,
    pub trials: usize,
    pub min_slack: Option<f64>,
    pub status: &'static str,
}

/// Estimates the constant of the band-measure assumption and tests the
/// resulting first-order growth on random admissible controls.
pub fn structural_assumption_estimate(
    pde: &Pde,
    cache: &EvalCache,
    eps: &[f64],
    trials: usize,
    rng: &mut impl Rng,
) -> Result<StructuralReport> {
    let spec = pde.spec();
    let p = spec.cost_params();
    if !p.is_interior_kink() || !p.gamma.is_finite() {
        return Err(Error::InvalidArgument(
            "structural estimate needs the interior-kink regime and finite gamma".into(),
        ));
    }
    let thr = p.adjoint_threshold();
    let w = spec.grid().cell_volume();
    let dist: Vec<f64> = cache
        .phi
        .values()
        .iter()
        .map(|f| thr - f.abs())
        .filter(|&d| d >= 0.0 && d < thr)
        .collect();
    let measures: Vec<f64> = eps
        .iter()
        .map(|&e| w * dist.iter().filter(|&&d| d < e).count() as f64)
        .collect();
    let mut sorted = dist.clone();
    sorted.sort_by(f64::total_cmp);
    // the band measure jumps to w k just above the k-th smallest distance
    let c = sorted
        .iter()
        .enumerate()
        .map(|(k, &d)| if d == 0.0 { f64::INFINITY } else { w * (k + 1) as f64 / d })
        .fold(0.0, f64::max);
    let mut rep = StructuralReport {
        eps: eps.to_vec(),
        measures,
        c,
        kappa: None,
        trials,
        min_slack: None,
        status: "",
    };
    if c == 0.0 {
        rep.status = "assumption holds vacuously; growth check skipped";
        return Ok(rep);
    }
    if !c.is_finite() {
        rep.status = "adjoint touches the threshold; assumption fails";
        return Ok(rep);
    }
    let kappa = 1.0 / (4.0 * c * p.gamma);
    rep.kappa = Some(kappa);
    let ztol = spec.zero_tol();
    let omega0: Vec<bool> = cache.u.values().iter().map(|x| x.abs() <= ztol).collect();
    let mut min_slack = f64::INFINITY;
    for k in 0..trials {
        let u = if k % 2 == 0 {
            GridField::from_fn(cache.u.grid().clone(), |_, _| rng.random_range(-p.gamma..=p.gamma))
        } else {
            let d = random_unit_direction(&cache.u, rng);
            let r = rng.random_range(0.0..1.0f64) * p.gamma;
            uad_project(&(&cache.u + &(&d * r)), p.gamma)
        };
        let dw = &u - &cache.u;
        let lhs = cache.phi.dot(&dw) + g_dir1_integral(&p, &cache.u, &dw);
        let l1: f64 = w * dw
            .values()
            .iter()
            .zip(&omega0)
            .filter(|(_, &o)| o)
            .map(|(x, _)| x.abs())
            .sum::<f64>();
        min_slack = min_slack.min(lhs - kappa * l1 * l1);
    }
    rep.min_slack = Some(min_slack);
    rep.status = "checked";
    Ok(rep)
}
