//! Reduced functionals `F`, `G`, `J`, `J_pc` and their derivatives by adjoint
//! calculus, plus sampling probes of the local continuity estimates.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pde::{Linearization, Pde};
use crate::pointwise::{g_dir1, g_dir2, g_scalar, gtilde_scalar, taylor_remainder, CostParams};
use crate::problem::GridField;

/// Control, state, adjoint and all objective pieces at one control.
#[derive(Debug, Clone)]
pub struct EvalCache {
    pub u: GridField,
    pub y: GridField,
    pub phi: GridField,
    /// `F(u) = int L(x, y_u)`
    pub f: f64,
    /// `alpha/2 ||u||^2`
    pub l2_cost: f64,
    /// `beta ||u||_0`
    pub l0_cost: f64,
    /// `G(u) = int g(u)`
    pub g: f64,
    pub j: f64,
    pub j_pc: f64,
    lin: Arc<Linearization>,
}

impl EvalCache {
    /// Factorized linearized operator at `y_u`.
    pub fn linearization(&self) -> &Linearization {
        &self.lin
    }

    /// `z_v` at this state.
    pub fn z(&self, v: &GridField) -> GridField {
        self.lin.solve_field(v)
    }
}

pub fn eval(pde: &Pde, u: &GridField) -> Result<EvalCache> {
    let spec = pde.spec();
    let y = pde.solve_state(u)?;
    let lin = pde.linearize(&y)?;
    let phi = pde.adjoint_with(&lin, &y);
    let w = pde.grid().cell_volume();
    let obj = spec.objective();
    let f = w * y.values().iter().enumerate().map(|(i, &yi)| obj.value(i, yi)).sum::<f64>();
    let l2_cost = 0.5 * spec.alpha() * u.dot(u);
    let l0_cost = spec.beta() * spec.l0_norm(u);
    let g = eval_g(&spec.cost_params(), u);
    Ok(EvalCache {
        u: u.clone(),
        y,
        phi,
        f,
        l2_cost,
        l0_cost,
        g,
        j: f + l2_cost + l0_cost,
        j_pc: f + g,
        lin: Arc::new(lin),
    })
}

/// Riesz representative of `F'(u)`: the adjoint state.
pub fn grad_f(cache: &EvalCache) -> &GridField {
    &cache.phi
}

/// Node weights `d2L/dy2 - phi d2a/dy2` of the Hessian form.
pub fn hess_weight(pde: &Pde, cache: &EvalCache) -> Vec<f64> {
    let spec = pde.spec();
    let (a, obj) = (spec.nonlinearity(), spec.objective());
    let (y, phi) = (cache.y.values(), cache.phi.values());
    (0..y.len())
        .map(|i| obj.dyy(i, y[i]) - phi[i] * a.dyy(i, y[i]))
        .collect()
}

/// `F''(u)(v1, v2)`.
pub fn hess_f_apply(pde: &Pde, cache: &EvalCache, v1: &GridField, v2: &GridField) -> f64 {
    let d = hess_weight(pde, cache);
    let z1 = cache.z(v1);
    let z2 = cache.z(v2);
    let w = pde.grid().cell_volume();
    w * (0..d.len())
        .map(|i| d[i] * z1.values()[i] * z2.values()[i])
        .sum::<f64>()
}

pub fn eval_g(p: &CostParams, u: &GridField) -> f64 {
    u.grid().cell_volume() * u.values().iter().map(|&x| g_scalar(x, p)).sum::<f64>()
}

pub fn g_dir1_integral(p: &CostParams, u: &GridField, v: &GridField) -> f64 {
    integrate2(u, v, |a, b| g_dir1(a, b, p))
}

pub fn g_dir2_integral(p: &CostParams, u: &GridField, v: &GridField) -> f64 {
    integrate2(u, v, |a, b| g_dir2(a, b, p))
}

pub fn g_tilde_integral(p: &CostParams, u: &GridField, v: &GridField) -> f64 {
    integrate2(u, v, |a, b| gtilde_scalar(a, b, p))
}

/// Integrated second-order remainder `G(u+h) - G(u) - G'(u;h) - G''(u;h^2)/2`.
pub fn g_remainder_integral(p: &CostParams, u: &GridField, h: &GridField) -> f64 {
    integrate2(u, h, |a, b| taylor_remainder(a, b, p))
}

fn integrate2(u: &GridField, v: &GridField, f: impl Fn(f64, f64) -> f64) -> f64 {
    u.grid().cell_volume()
        * u.values()
            .iter()
            .zip(v.values())
            .map(|(&a, &b)| f(a, b))
            .sum::<f64>()
}

/// Sampled ratios around a reference control.
#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    pub radius: f64,
    pub trials: usize,
    pub max_ratio: f64,
    pub min_ratio: f64,
    pub ratios: Vec<f64>,
    /// Set when a ratio is non-finite or exceeds `1e12`.
    pub unbounded: bool,
}

impl ProbeReport {
    fn from_ratios(radius: f64, ratios: Vec<f64>) -> ProbeReport {
        let max_ratio = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min_ratio = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let unbounded = ratios.iter().any(|r| !r.is_finite() || *r > 1e12);
        ProbeReport {
            radius,
            trials: ratios.len(),
            max_ratio,
            min_ratio,
            ratios,
            unbounded,
        }
    }
}

/// Random direction with unit discrete `L^2` norm.
pub fn random_unit_direction(like: &GridField, rng: &mut impl Rng) -> GridField {
    loop {
        let vals = (0..like.len()).map(|_| rng.sample(StandardNormal)).collect();
        let d = GridField::from_vec_unchecked(like.grid().clone(), vals);
        let n = d.norm_l2();
        if n > 0.0 {
            return &d * (1.0 / n);
        }
    }
}

fn check_trials(trials: usize, radius: f64) -> Result<()> {
    if trials == 0 {
        return Err(Error::InvalidArgument("probe needs at least one trial".into()));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidArgument(format!("probe radius must be positive, got {radius}")));
    }
    Ok(())
}

/// Samples `u = u_bar + r d` with `r` uniform in `(0, radius]` and reports
/// `||F'(u) - F'(u_bar)|| / ||z_{u - u_bar}||`.
pub fn probe_lipschitz_f1(
    pde: &Pde,
    base: &EvalCache,
    radius: f64,
    trials: usize,
    rng: &mut impl Rng,
) -> Result<ProbeReport> {
    check_trials(trials, radius)?;
    let mut ratios = Vec::with_capacity(trials);
    for _ in 0..trials {
        let d = random_unit_direction(&base.u, rng);
        let r = radius * (1.0 - rng.random::<f64>());
        ratios.push(lipschitz_ratio(pde, base, &d, r)?);
    }
    Ok(ProbeReport::from_ratios(radius, ratios))
}

/// The ratio of [`probe_lipschitz_f1`] along a fixed unit direction.
pub fn lipschitz_ratio(pde: &Pde, base: &EvalCache, d: &GridField, r: f64) -> Result<f64> {
    let step = d * r;
    let u = &base.u + &step;
    let c = eval(pde, &u)?;
    let z = base.z(&step);
    Ok((&c.phi - &base.phi).norm_l2() / z.norm_l2())
}

/// Samples as [`probe_lipschitz_f1`] and reports
/// `|(F''(u) - F''(u_bar))(u - u_bar)^2| / ||z_{u - u_bar}||^2`.
pub fn probe_hess_continuity(
    pde: &Pde,
    base: &EvalCache,
    radius: f64,
    trials: usize,
    rng: &mut impl Rng,
) -> Result<ProbeReport> {
    check_trials(trials, radius)?;
    let mut ratios = Vec::with_capacity(trials);
    for _ in 0..trials {
        let d = random_unit_direction(&base.u, rng);
        ratios.push(hess_continuity_ratio(pde, base, &d, radius)?);
    }
    Ok(ProbeReport::from_ratios(radius, ratios))
}

pub fn hess_continuity_ratio(pde: &Pde, base: &EvalCache, d: &GridField, r: f64) -> Result<f64> {
    let step = d * r;
    let c = eval(pde, &(&base.u + &step))?;
    let diff = hess_f_apply(pde, &c, &step, &step) - hess_f_apply(pde, base, &step, &step);
    let z = base.z(&step);
    Ok(diff.abs() / z.dot(&z))
}
