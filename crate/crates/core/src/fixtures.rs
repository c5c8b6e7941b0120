//! Reference problem instances used by the tests, the acceptance suite and
//! the CLI examples.

use crate::error::Result;
use crate::expr::Expr;
use crate::pde::Pde;
use crate::pointwise::hamiltonian_argmin;
use crate::problem::{build_problem, FieldSource, GridField, NonlinearityFamily, ProblemConfig};

fn expr(s: &str) -> FieldSource {
    FieldSource::Expr(Expr::parse(s).expect("fixture expression"))
}

fn pde(cfg: &ProblemConfig) -> Pde {
    Pde::new(build_problem(cfg).expect("valid fixture"))
}

/// Cubic nonlinearity on the unit interval, interior-kink regime with
/// `s = 25 < gamma` and a support covering roughly sixty percent of the
/// domain.
pub fn standard_cubic_1d_config(n: usize) -> ProblemConfig {
    ProblemConfig {
        extent: vec![1.0],
        interior: vec![n],
        kappa: FieldSource::Constant(1.0),
        lambda_a: None,
        nonlinearity: NonlinearityFamily::Cubic,
        c0: FieldSource::Constant(1.0),
        c3: FieldSource::Constant(1.0),
        target: expr("20*sin(2*pi*x)"),
        alpha: 0.01,
        beta: 3.125,
        gamma: 200.0,
    }
}

pub fn standard_cubic_1d(n: usize) -> Pde {
    pde(&standard_cubic_1d_config(n))
}

/// Two-dimensional counterpart on the unit square, `n x n` interior nodes.
pub fn standard_cubic_2d_config(n: usize) -> ProblemConfig {
    ProblemConfig {
        extent: vec![1.0, 1.0],
        interior: vec![n, n],
        target: expr("20*sin(2*pi*x)*sin(pi*y)"),
        ..standard_cubic_1d_config(n)
    }
}

pub fn standard_cubic_2d(n: usize) -> Pde {
    pde(&standard_cubic_2d_config(n))
}

/// Same data with a doubled target amplitude.
pub fn strong_target_1d(n: usize) -> Pde {
    pde(&ProblemConfig {
        target: expr("40*sin(2*pi*x)"),
        ..standard_cubic_1d_config(n)
    })
}

/// Linear state equation, interior-kink regime. A convex instance of the
/// convexified problem.
pub fn lq_interior_kink_config(extent: &[f64], n: usize) -> ProblemConfig {
    let (interior, target) = if extent.len() == 1 {
        (vec![n], expr("20*sin(2*pi*x)"))
    } else {
        (vec![n, n], expr("20*sin(2*pi*x)*sin(pi*y)"))
    };
    ProblemConfig {
        extent: extent.to_vec(),
        interior,
        nonlinearity: NonlinearityFamily::Linear,
        c0: FieldSource::Constant(1.0),
        c3: FieldSource::Constant(0.0),
        target,
        alpha: 0.01,
        beta: 3.125,
        gamma: 200.0,
        ..ProblemConfig::default()
    }
}

pub fn lq_interior_kink(extent: &[f64], n: usize) -> Pde {
    pde(&lq_interior_kink_config(extent, n))
}

/// Same as the linear instance but with `gamma < s`, so the envelope is a
/// weighted `L^1` norm.
pub fn l1_regime_1d(n: usize) -> Pde {
    pde(&ProblemConfig {
        gamma: 20.0,
        ..lq_interior_kink_config(&[1.0], n)
    })
}

/// Target chosen so that the zero control is stationary for the convexified
/// problem with adjoint equal to `sqrt(2 alpha beta)` on `[0.35, 0.65]`.
pub fn plateau_1d(n: usize) -> Result<Pde> {
    let base = lq_interior_kink_config(&[1.0], n);
    let thr = (2.0 * base.alpha * base.beta).sqrt();
    let (pde, _) = manufactured_pmp(base, |x, _| thr * (x.min(1.0 - x) / 0.35).min(1.0))?;
    Ok(pde)
}

/// Replaces the target of `cfg` so that `phi` is the adjoint at the control
/// `u_i = ` sparsest pointwise Hamiltonian minimizer for `phi_i`. The returned
/// control satisfies the maximum principle by construction.
pub fn manufactured_pmp(
    mut cfg: ProblemConfig,
    phi: impl FnMut(f64, f64) -> f64,
) -> Result<(Pde, GridField)> {
    let staged = Pde::new(build_problem(&cfg)?);
    let p = staged.spec().cost_params();
    let phi = GridField::from_fn(staged.grid().clone(), phi);
    let u = phi.map(|f| hamiltonian_argmin(f, &p).set.sparsest());
    let y = staged.solve_state(&u)?;
    cfg.target = FieldSource::Values(manufactured_target(&staged, &y, &phi));
    Ok((Pde::new(build_problem(&cfg)?), u))
}

/// `y_d := y - J(y) phi`, so that `phi` is the adjoint at state `y`.
fn manufactured_target(pde: &Pde, y: &GridField, phi: &GridField) -> Vec<f64> {
    let jphi = pde.jacobian(y).matvec(phi.values());
    y.values().iter().zip(&jphi).map(|(a, b)| a - b).collect()
}

/// Stationary point that is not a local minimizer, on `(0, 4)`.
///
/// The control is `3` on `B = [1.5, 2.5]`, `-5` on `[0.5, 1.5)` and
/// `(2.5, 3.5]`, zero elsewhere. The strongly negative flanks keep the state
/// negative on `B` while the adjoint there is `-3`, so with `c3 = 10` on `B`
/// (and zero elsewhere, `c0 = 0`) the curvature weight `1 - 6 c3 phi y` of `F`
/// is strongly negative on `B`. Returns the problem and the stationary control.
pub fn concave_stationary_1d(n: usize) -> Result<(Pde, GridField)> {
    let (alpha, ub, ua, c3) = (1.0, 3.0, 5.0, 10.0);
    let b = |x: f64| (1.5..=2.5).contains(&x);
    let a = |x: f64| (0.5..1.5).contains(&x) || (x > 2.5 && x <= 3.5);
    let s = ub / 1.4;
    let mut cfg = ProblemConfig {
        extent: vec![4.0],
        interior: vec![n],
        nonlinearity: NonlinearityFamily::Cubic,
        c0: FieldSource::Constant(0.0),
        alpha,
        beta: 0.5 * alpha * s * s,
        gamma: 100.0 * s,
        ..ProblemConfig::default()
    };
    let grid = pde(&cfg).grid().clone();
    cfg.c3 = FieldSource::Values((0..grid.len()).map(|i| if b(grid.coords(i).0) { c3 } else { 0.0 }).collect());
    manufactured_pmp(cfg, |x, _| {
        if b(x) {
            -alpha * ub
        } else if a(x) {
            alpha * ua
        } else {
            0.0
        }
    })
}
