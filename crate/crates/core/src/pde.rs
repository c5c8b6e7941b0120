//! Finite-difference elliptic operator and the state, linearized and adjoint
//! solves.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{BandCholesky, BandMatrix};
use crate::problem::{Grid, GridField, ProblemSpec};

/// `-div(kappa grad .)` with homogeneous Dirichlet data on the interior nodes.
#[derive(Debug, Clone)]
pub struct EllipticOperator {
    grid: Arc<Grid>,
    matrix: BandMatrix,
    lambda_a: f64,
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

/// Assembles the 3-point (1D) or 5-point (2D) stencil with harmonic-mean face
/// coefficients.
pub fn assemble_operator(spec: &ProblemSpec) -> EllipticOperator {
    let grid = spec.grid().clone();
    let kappa = spec.kappa();
    let n = grid.len();
    let nx = grid.interior_per_axis()[0];
    let bw = if grid.dim() == 1 { 1 } else { nx };
    let mut a = BandMatrix::zeros(n, bw);
    let mx = nx + 2;
    for i in 0..n {
        let l = grid.lattice_index(i);
        let mut axis = |neighbor: usize, h: f64, coupled: Option<usize>| {
            let c = harmonic(kappa[l], kappa[neighbor]) / (h * h);
            a.add(i, i, c);
            if let Some(j) = coupled {
                if j < i {
                    a.add(i, j, -c);
                }
            }
        };
        let hx = grid.spacing()[0];
        let ix = i % nx;
        axis(l - 1, hx, (ix > 0).then(|| i - 1));
        axis(l + 1, hx, (ix + 1 < nx).then(|| i + 1));
        if grid.dim() == 2 {
            let hy = grid.spacing()[1];
            let ny = grid.interior_per_axis()[1];
            let iy = i / nx;
            axis(l - mx, hy, (iy > 0).then(|| i - nx));
            axis(l + mx, hy, (iy + 1 < ny).then(|| i + nx));
        }
    }
    EllipticOperator {
        grid,
        matrix: a,
        lambda_a: spec.lambda_a(),
    }
}

impl EllipticOperator {
    pub fn matrix(&self) -> &BandMatrix {
        &self.matrix
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn lambda_a(&self) -> f64 {
        self.lambda_a
    }

    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        self.matrix.matvec(y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings {
    /// Residual tolerance in the max norm. A floor proportional to machine
    /// precision times the size of the terms is added automatically.
    pub abs_tol: f64,
    pub max_iter: usize,
    pub armijo: f64,
    pub backtrack: f64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings {
            abs_tol: 1e-12,
            max_iter: 50,
            armijo: 1e-4,
            backtrack: 0.5,
        }
    }
}

/// Factorized Jacobian `A_h + diag(da/dy(., y))` at a fixed state.
#[derive(Debug, Clone)]
pub struct Linearization {
    grid: Arc<Grid>,
    chol: BandCholesky,
    diag: Vec<f64>,
}

impl Linearization {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        self.chol.solve(rhs)
    }

    pub fn solve_field(&self, rhs: &GridField) -> GridField {
        GridField::from_vec_unchecked(self.grid.clone(), self.chol.solve(rhs.values()))
    }

    /// `da/dy(x_i, y_i)`.
    pub fn reaction(&self) -> &[f64] {
        &self.diag
    }
}

/// A problem with its assembled operator; the entry point for all PDE solves.
#[derive(Debug, Clone)]
pub struct Pde {
    spec: ProblemSpec,
    op: EllipticOperator,
    settings: NewtonSettings,
}

/// Report from a state solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonStats {
    pub iterations: usize,
    pub residual: f64,
}

impl Pde {
    pub fn new(spec: ProblemSpec) -> Pde {
        let op = assemble_operator(&spec);
        Pde {
            spec,
            op,
            settings: NewtonSettings::default(),
        }
    }

    pub fn with_settings(mut self, settings: NewtonSettings) -> Pde {
        self.settings = settings;
        self
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn operator(&self) -> &EllipticOperator {
        &self.op
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.spec.grid()
    }

    pub fn settings(&self) -> &NewtonSettings {
        &self.settings
    }

    fn residual(&self, y: &[f64], u: &[f64]) -> Vec<f64> {
        let a = self.spec.nonlinearity();
        let mut r = self.op.apply(y);
        for i in 0..r.len() {
            r[i] += a.value(i, y[i]) - u[i];
        }
        r
    }

    /// Jacobian at `y`, factorized.
    pub fn linearize(&self, y: &GridField) -> Result<Linearization> {
        let a = self.spec.nonlinearity();
        let diag: Vec<f64> = y.values().iter().enumerate().map(|(i, &yi)| a.dy(i, yi)).collect();
        let chol = self.op.matrix.with_diagonal(&diag).cholesky()?;
        Ok(Linearization {
            grid: self.grid().clone(),
            chol,
            diag,
        })
    }

    /// Jacobian at `y` as a band matrix (unfactorized).
    pub fn jacobian(&self, y: &GridField) -> BandMatrix {
        let a = self.spec.nonlinearity();
        let diag: Vec<f64> = y.values().iter().enumerate().map(|(i, &yi)| a.dy(i, yi)).collect();
        self.op.matrix.with_diagonal(&diag)
    }

    /// Solves `A_h y + a(., y) = u` by damped Newton from `y = 0`.
    pub fn solve_state(&self, u: &GridField) -> Result<GridField> {
        self.solve_state_with_stats(u).map(|(y, _)| y)
    }

    pub fn solve_state_with_stats(&self, u: &GridField) -> Result<(GridField, NewtonStats)> {
        let s = &self.settings;
        let a = self.spec.nonlinearity();
        let uv = u.values();
        let n = uv.len();
        let a_norm = self.op.matrix.norm_inf();
        let u_norm = u.norm_linf();
        let mut y = vec![0.0; n];
        let mut r = self.residual(&y, uv);
        let norm2 = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>().sqrt();
        let norm_inf = |r: &[f64]| r.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let tol = |y: &[f64]| {
            let y_norm = norm_inf(y);
            let a_y = (0..n).fold(0.0f64, |m, i| m.max(a.value(i, y[i]).abs()));
            s.abs_tol + 64.0 * f64::EPSILON * (a_norm * y_norm + u_norm + a_y)
        };
        for it in 0..=s.max_iter {
            let res = norm_inf(&r);
            if res <= tol(&y) {
                let field = GridField::from_vec_unchecked(self.grid().clone(), y);
                return Ok((field, NewtonStats { iterations: it, residual: res }));
            }
            if it == s.max_iter {
                return Err(Error::NonConvergence {
                    iterations: it,
                    residual: res,
                });
            }
            let diag: Vec<f64> = (0..n).map(|i| a.dy(i, y[i])).collect();
            let chol = self.op.matrix.with_diagonal(&diag).cholesky()?;
            let mut delta = r.clone();
            chol.solve_in_place(&mut delta);
            let r0 = norm2(&r);
            let mut lambda = 1.0;
            loop {
                let trial: Vec<f64> = (0..n).map(|i| y[i] - lambda * delta[i]).collect();
                let rt = self.residual(&trial, uv);
                if norm2(&rt) <= (1.0 - s.armijo * lambda) * r0 || lambda < 1e-12 {
                    y = trial;
                    r = rt;
                    break;
                }
                lambda *= s.backtrack;
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonConvergence {
                    iterations: it + 1,
                    residual: f64::INFINITY,
                });
            }
        }
        unreachable!()
    }

    /// Solves `(A_h + diag(da/dy(., y))) z = v`.
    pub fn solve_linearized(&self, y: &GridField, v: &GridField) -> Result<GridField> {
        Ok(self.linearize(y)?.solve_field(v))
    }

    /// Solves `(A_h + diag(da/dy(., y))) phi = y - y_d`.
    pub fn solve_adjoint(&self, y: &GridField) -> Result<GridField> {
        let lin = self.linearize(y)?;
        Ok(self.adjoint_with(&lin, y))
    }

    pub(crate) fn adjoint_rhs(&self, y: &GridField) -> GridField {
        let obj = self.spec.objective();
        GridField::from_vec_unchecked(
            self.grid().clone(),
            y.values().iter().enumerate().map(|(i, &yi)| obj.dy(i, yi)).collect(),
        )
    }

    pub(crate) fn adjoint_with(&self, lin: &Linearization, y: &GridField) -> GridField {
        lin.solve_field(&self.adjoint_rhs(y))
    }
}

/// Discrete estimate of `sup ||z_v||_{L2} / ||v||_{L1}`: the maximum over all
/// single-node spikes (exact for this ratio's extreme points) and `trials`
/// random directions.
pub fn estimate_cz(pde: &Pde, y: &GridField, trials: usize, rng: &mut impl Rng) -> Result<f64> {
    if trials == 0 {
        return Err(Error::InvalidArgument("estimate_cz needs at least one trial".into()));
    }
    let lin = pde.linearize(y)?;
    let grid = pde.grid().clone();
    let n = grid.len();
    let w = grid.cell_volume();
    let spikes = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            let z = lin.solve(&e);
            let z2: f64 = z.iter().map(|x| x * x).sum();
            (w * z2).sqrt() / w
        })
        .reduce(|| 0.0, f64::max);
    let mut best = spikes;
    for _ in 0..trials {
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let v = GridField::from_vec_unchecked(grid.clone(), v);
        let z = lin.solve_field(&v);
        best = best.max(z.norm_l2() / v.norm_l1());
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{build_problem, FieldSource, NonlinearityFamily, ProblemConfig};
    use nalgebra::{DMatrix, DVector, SymmetricEigen};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn problem_1d(n: usize, family: NonlinearityFamily, c0: f64, c3: f64) -> ProblemSpec {
        build_problem(&ProblemConfig {
            extent: vec![1.0],
            interior: vec![n],
            nonlinearity: family,
            c0: FieldSource::Constant(c0),
            c3: FieldSource::Constant(c3),
            target: FieldSource::Expr(crate::expr::Expr::parse("sin(3*x)").unwrap()),
            ..Default::default()
        })
        .unwrap()
    }

    fn problem_2d(n: usize, family: NonlinearityFamily) -> ProblemSpec {
        build_problem(&ProblemConfig {
            extent: vec![1.0, 1.0],
            interior: vec![n, n],
            kappa: FieldSource::Expr(crate::expr::Expr::parse("1 + x*y").unwrap()),
            nonlinearity: family,
            c0: FieldSource::Constant(1.0),
            c3: FieldSource::Constant(2.0),
            ..Default::default()
        })
        .unwrap()
    }

    fn dense_solve(a: &BandMatrix, b: &[f64]) -> Vec<f64> {
        let chol = a.to_dense().cholesky().unwrap();
        chol.solve(&DVector::from_column_slice(b)).as_slice().to_vec()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let s: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        d / s.max(1e-300)
    }

    #[test]
    fn stencil_matches_hand_assembly() {
        let p = problem_1d(3, NonlinearityFamily::Linear, 0.0, 0.0);
        let a = assemble_operator(&p).matrix().to_dense();
        let expect = DMatrix::from_row_slice(3, 3, &[32., -16., 0., -16., 32., -16., 0., -16., 32.]);
        assert!((a - expect).norm() < 1e-12);
    }

    #[test]
    fn constant_field_gives_boundary_residuals() {
        let p = problem_1d(7, NonlinearityFamily::Linear, 0.0, 0.0);
        let h = p.grid().spacing()[0];
        let r = assemble_operator(&p).apply(&[2.0; 7]);
        assert!((r[0] - 2.0 / (h * h)).abs() < 1e-9);
        assert!((r[6] - 2.0 / (h * h)).abs() < 1e-9);
        assert!(r[1..6].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn smallest_eigenvalue_near_pi_squared() {
        let p = problem_1d(127, NonlinearityFamily::Linear, 0.0, 0.0);
        let a = assemble_operator(&p).matrix().to_dense();
        let lmin = SymmetricEigen::new(a).eigenvalues.min();
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((lmin - pi2).abs() / pi2 < 0.01);
    }

    #[test]
    fn operator_symmetric_with_five_point_pattern() {
        let p = problem_2d(5, NonlinearityFamily::Linear);
        let a = assemble_operator(&p).matrix().to_dense();
        assert!((&a - a.transpose()).norm() < 1e-12);
        for i in 0..25 {
            let nnz = (0..25).filter(|&j| a[(i, j)] != 0.0).count();
            assert!((3..=5).contains(&nnz));
            assert!(a[(i, i)] > 0.0);
        }
        assert!(SymmetricEigen::new(a).eigenvalues.min() > 0.0);
    }

    #[test]
    fn zero_control_gives_zero_state() {
        for fam in [NonlinearityFamily::Linear, NonlinearityFamily::Cubic, NonlinearityFamily::Arctan] {
            let pde = Pde::new(problem_1d(31, fam, 1.0, 1.0));
            let y = pde.solve_state(&pde.spec().zeros()).unwrap();
            assert!(y.values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn linear_state_matches_direct_solve() {
        let pde = Pde::new(problem_1d(63, NonlinearityFamily::Linear, 0.0, 0.0));
        let u = GridField::from_fn(pde.grid().clone(), |x, _| 10.0 * x * (1.0 - x) - 1.0);
        let y = pde.solve_state(&u).unwrap();
        let direct = dense_solve(pde.operator().matrix(), u.values());
        assert!(rel_err(y.values(), &direct) <= 1e-10);
    }

    #[test]
    fn manufactured_solutions() {
        let cases = [
            Pde::new(problem_1d(255, NonlinearityFamily::Cubic, 1.0, 5.0)),
            Pde::new(problem_1d(255, NonlinearityFamily::Arctan, 3.0, 0.0)),
            Pde::new(problem_2d(31, NonlinearityFamily::Cubic)),
        ];
        for pde in cases {
            let ystar = GridField::from_fn(pde.grid().clone(), |x, y| {
                3.0 * (std::f64::consts::PI * x).sin() * if y > 0.0 { (std::f64::consts::PI * y).sin() } else { 1.0 }
            });
            let a = pde.spec().nonlinearity();
            let mut u = pde.operator().apply(ystar.values());
            for (i, ui) in u.iter_mut().enumerate() {
                *ui += a.value(i, ystar.values()[i]);
            }
            let u = GridField::new(pde.grid().clone(), u).unwrap();
            let (y, stats) = pde.solve_state_with_stats(&u).unwrap();
            assert!((&y - &ystar).norm_linf() <= 1e-9, "{}", (&y - &ystar).norm_linf());
            assert!(stats.iterations <= 10);
        }
    }

    #[test]
    fn maximum_principle() {
        let pde = Pde::new(problem_1d(63, NonlinearityFamily::Linear, 2.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let u = GridField::from_fn(pde.grid().clone(), |_, _| rng.random::<f64>() * 5.0);
            let y = pde.solve_state(&u).unwrap();
            assert!(y.values().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn linearized_and_adjoint_solves() {
        let pde = Pde::new(problem_1d(63, NonlinearityFamily::Linear, 0.0, 0.0));
        let g = pde.grid().clone();
        let y = GridField::from_fn(g.clone(), |x, _| x * x);
        let zero = pde.solve_linearized(&y, &GridField::zeros(g.clone())).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
        let v1 = GridField::from_fn(g.clone(), |x, _| (5.0 * x).cos());
        let v2 = GridField::from_fn(g.clone(), |x, _| x - 0.3);
        let z1 = pde.solve_linearized(&y, &v1).unwrap();
        assert!(rel_err(z1.values(), &dense_solve(pde.operator().matrix(), v1.values())) <= 1e-10);
        let z2 = pde.solve_linearized(&y, &v2).unwrap();
        let z12 = pde.solve_linearized(&y, &(&v1 + &v2)).unwrap();
        assert!((&z12 - &(&z1 + &z2)).norm_linf() <= 1e-12);

        let yd = pde.spec().target_field();
        assert!(pde.solve_adjoint(&yd).unwrap().norm_linf() == 0.0);
        let phi = pde.solve_adjoint(&y).unwrap();
        let rhs = &y - &yd;
        assert!(rel_err(phi.values(), &dense_solve(pde.operator().matrix(), rhs.values())) <= 1e-10);
    }

    #[test]
    fn adjoint_duality() {
        let pde = Pde::new(problem_1d(127, NonlinearityFamily::Cubic, 1.0, 3.0));
        let g = pde.grid().clone();
        let u = GridField::from_fn(g.clone(), |x, _| 20.0 * (2.0 * x).sin());
        let y = pde.solve_state(&u).unwrap();
        let phi = pde.solve_adjoint(&y).unwrap();
        let dl = &y - &pde.spec().target_field();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let v = GridField::from_fn(g.clone(), |_, _| rng.sample(StandardNormal));
            let z = pde.solve_linearized(&y, &v).unwrap();
            let (lhs, rhs) = (phi.dot(&v), dl.dot(&z));
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()));
        }
    }

    #[test]
    fn jacobian_equals_linearized_operator() {
        let pde = Pde::new(problem_2d(6, NonlinearityFamily::Cubic));
        let y = GridField::from_fn(pde.grid().clone(), |x, y| x - y);
        let jac = pde.jacobian(&y);
        let lin = pde.linearize(&y).unwrap();
        let e: Vec<f64> = (0..36).map(|i| (i as f64).sin()).collect();
        let back = jac.matvec(&lin.solve(&e));
        assert!(rel_err(&back, &e) < 1e-12);
    }

    #[test]
    fn cz_estimate_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut est = vec![];
        for n in [63, 127] {
            let pde = Pde::new(problem_1d(n, NonlinearityFamily::Linear, 0.0, 0.0));
            let y = pde.spec().zeros();
            est.push(estimate_cz(&pde, &y, 10, &mut rng).unwrap());
        }
        assert!(est[0].is_finite() && est[0] > 0.0);
        assert!((est[0] - est[1]).abs() / est[1] < 0.1, "{est:?}");

        let pde = Pde::new(problem_1d(31, NonlinearityFamily::Linear, 0.0, 0.0));
        let y = pde.spec().zeros();
        let lin = pde.linearize(&y).unwrap();
        let g = pde.grid().clone();
        let mut e = vec![0.0; 31];
        e[7] = 1.0;
        let spike = GridField::new(g.clone(), e.clone()).unwrap();
        let z = lin.solve_field(&spike);
        let col: f64 = z.values().iter().map(|v| v * v).sum::<f64>().sqrt();
        let h = g.cell_volume();
        assert!((z.norm_l2() / spike.norm_l1() - col * h.sqrt() / h).abs() < 1e-12);
        let doubled = &spike * 2.0;
        let z2 = lin.solve_field(&doubled);
        assert!((z2.norm_l2() / doubled.norm_l1() - z.norm_l2() / spike.norm_l1()).abs() < 1e-12);
        assert!(estimate_cz(&pde, &y, 0, &mut rng).is_err());
    }

    #[test]
    fn discrete_norms_converge() {
        let g = Arc::new(Grid::new_1d(1.0, 255).unwrap());
        let f = GridField::from_fn(g, |x, _| (std::f64::consts::PI * x).sin());
        assert!((f.norm_l2().powi(2) - 0.5).abs() < 1e-4);
        assert!((f.norm_l1() - 2.0 / std::f64::consts::PI).abs() < 1e-4);
        assert!((f.norm_linf() - 1.0).abs() < 1e-4);
    }
}
