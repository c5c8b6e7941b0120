//! Brute-force reference computations. They share no code with the
//! implementations they check and are deliberately slow.

use serde::Serialize;

use crate::error::Result;
use crate::functionals::{eval, hess_f_apply};
use crate::pde::Pde;
use crate::pointwise::{j0_scalar, CostParams};
use crate::problem::GridField;

/// Minimizes `f` on `[-bound, bound]` by a uniform grid of `n` points plus the
/// given candidates, followed by a ternary refinement around the best grid
/// point. Returns `(value, argmin)`.
pub fn argmin_brute_force(
    f: impl Fn(f64) -> f64,
    bound: f64,
    n: usize,
    candidates: &[f64],
) -> (f64, f64) {
    assert!(n >= 2 && bound.is_finite());
    let step = 2.0 * bound / (n - 1) as f64;
    let mut best = (f64::INFINITY, 0.0);
    let take = |x: f64, best: &mut (f64, f64)| {
        let x = x.clamp(-bound, bound);
        let v = f(x);
        if v < best.0 {
            *best = (v, x);
        }
    };
    for k in 0..n {
        take(-bound + k as f64 * step, &mut best);
    }
    for &c in candidates {
        if c.is_finite() {
            take(c, &mut best);
        }
    }
    let (mut lo, mut hi) = ((best.1 - step).max(-bound), (best.1 + step).min(bound));
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if f(m1) < f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    take(0.5 * (lo + hi), &mut best);
    best
}

/// Piecewise-linear lower convex hull of sampled points.
#[derive(Debug, Clone)]
pub struct Envelope {
    samples: Vec<f64>,
    hull: Vec<(f64, f64)>,
}

impl Envelope {
    pub fn eval(&self, u: f64) -> f64 {
        let h = &self.hull;
        let k = h.partition_point(|&(x, _)| x < u);
        if k == 0 {
            return h[0].1;
        }
        if k == h.len() {
            return h[h.len() - 1].1;
        }
        let (x0, y0) = h[k - 1];
        let (x1, y1) = h[k];
        if x1 == x0 {
            return y0.min(y1);
        }
        y0 + (y1 - y0) * (u - x0) / (x1 - x0)
    }

    /// `(u, envelope(u))` at every sample abscissa.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.samples.iter().map(|&u| (u, self.eval(u)))
    }

    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.hull
    }
}

/// Lower convex hull of `{(u_i, j0(u_i))}` on a uniform sampling of
/// `[-gamma, gamma]` (monotone chain), with `u = 0` always included.
pub fn convex_envelope(p: &CostParams, samples: usize) -> Envelope {
    assert!(p.gamma.is_finite() && samples >= 2);
    let g = p.gamma;
    let mut xs: Vec<f64> = (0..samples)
        .map(|k| -g + 2.0 * g * k as f64 / (samples - 1) as f64)
        .collect();
    xs.push(0.0);
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup();
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for &x in &xs {
        let pt = (x, j0_scalar(x, p));
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.0 - a.0) * (pt.1 - a.1) - (b.1 - a.1) * (pt.0 - a.0);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(pt);
    }
    Envelope { samples: xs, hull }
}

/// Finite-difference checks of the adjoint gradient and Hessian form along
/// one direction.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AdjointCheck {
    /// `|FD - <phi, v>| / max(|<phi, v>|, ||phi||)`, central difference step `1e-4`.
    pub gradient_rel: f64,
    /// `|SD - F''(v, v)| / |F''(v, v)|`, second difference step `1e-2`.
    pub hessian_rel: f64,
    /// `|<phi, v> - <y - y_d, z_v>|`
    pub duality: f64,
}

/// `v` is normalized before use.
pub fn adjoint_fd_check(pde: &Pde, u: &GridField, v: &GridField) -> Result<AdjointCheck> {
    let c = eval(pde, u)?;
    let v = v * (1.0 / v.norm_l2());
    let f_at = |t: f64| -> Result<f64> { Ok(eval(pde, &(u + &(&v * t)))?.f) };

    let t = 1e-4;
    let fd = (f_at(t)? - f_at(-t)?) / (2.0 * t);
    let an = c.phi.dot(&v);
    let gradient_rel = (fd - an).abs() / an.abs().max(c.phi.norm_l2());

    let t = 1e-2;
    let sd = (f_at(t)? - 2.0 * c.f + f_at(-t)?) / (t * t);
    let h = hess_f_apply(pde, &c, &v, &v);
    let hessian_rel = (sd - h).abs() / h.abs();

    let z = c.z(&v);
    let resid = &c.y - &pde.spec().target_field();
    let duality = (an - resid.dot(&z)).abs();
    Ok(AdjointCheck {
        gradient_rel,
        hessian_rel,
        duality,
    })
}

/// Brute-force minimizer of `(v - w)^2 / (2t) + f(v)` on `[-gamma, gamma]`;
/// returns the objective value at the minimizer.
pub fn prox_brute_force(f: impl Fn(f64) -> f64, w: f64, t: f64, gamma: f64, candidates: &[f64]) -> f64 {
    let obj = |v: f64| (v - w) * (v - w) / (2.0 * t) + f(v);
    argmin_brute_force(obj, gamma, 20_001, candidates).0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brute_force_finds_parabola_minimum() {
        let (v, x) = argmin_brute_force(|u| (u - 0.3).powi(2), 1.0, 11, &[]);
        assert!(v < 1e-20 && (x - 0.3).abs() < 1e-9);
    }

    #[test]
    fn hull_of_l0_cost_with_alpha_zero_is_linear() {
        let env = convex_envelope(&CostParams::new(0.0, 2.0, 1.0), 1001);
        assert_eq!(env.vertices().len(), 3);
        assert!((env.eval(0.5) - 1.0).abs() < 1e-14);
    }
}
