//! Acceptance suite. Runs every criterion, prints one line per criterion and
//! exits non-zero if any fails.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use l0_control::cli::{cmd_verify, remainder_example, smooth_direction, Exit, RunConfig};
use l0_control::fixtures;
use l0_control::functionals::{eval, random_unit_direction};
use l0_control::optimality::{
    beta_star, check_pc_structure, check_sparsity_structure, envelope_defect,
    pc_stationarity_residual, pmp_residual,
};
use l0_control::oracle;
use l0_control::pde::Pde;
use l0_control::pointwise::{
    g_dir2, g_scalar, gtilde_scalar, hamiltonian, hamiltonian_argmin, j0_scalar, taylor_remainder,
    taylor_remainder_bound, CostParams,
};
use l0_control::problem::{uad_project, GridField};
use l0_control::soc::{
    check_necessary_soc, check_sufficient_soc, measure_quadratic_growth, SocSettings, Verdict,
};
use l0_control::solver::{solve_l0, solve_pc, solve_transfer, SolverSettings};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn draw_params(rng: &mut ChaCha8Rng) -> CostParams {
    CostParams::new(
        rng.random_range(0.0..=10.0),
        10.0 - rng.random_range(0.0..10.0),
        100.0 - rng.random_range(0.0..100.0),
    )
}

/// Parameters with `sqrt(2 beta / alpha) < gamma <= 100`.
fn draw_kink_params(rng: &mut ChaCha8Rng) -> CostParams {
    loop {
        let a: f64 = rng.random_range(0.05..=10.0);
        let b = 10.0 - rng.random_range(0.0..10.0);
        let s = (2.0 * b / a).sqrt();
        if s < 99.0 {
            return CostParams::new(a, b, rng.random_range(s * 1.01..=100.0f64.max(s * 1.01)));
        }
    }
}

/// Parameters with `gamma <= sqrt(2 beta / alpha)`, including `alpha = 0`.
fn draw_l1_params(rng: &mut ChaCha8Rng) -> CostParams {
    let b = 10.0 - rng.random_range(0.0..10.0);
    if rng.random_bool(0.2) {
        return CostParams::new(0.0, b, 100.0 - rng.random_range(0.0..100.0));
    }
    let a: f64 = rng.random_range(0.05..=10.0);
    let s = (2.0 * b / a).sqrt();
    CostParams::new(a, b, (s * rng.random_range(0.05..1.0)).min(100.0))
}

fn c1_argmin() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let p = draw_params(&mut rng);
        let phi = rng.random_range(-50.0..=50.0);
        let h = |u: f64| hamiltonian(u, phi, &p);
        let mut cands = vec![0.0, p.gamma, -p.gamma];
        if p.alpha > 0.0 {
            cands.push((-phi / p.alpha).clamp(-p.gamma, p.gamma));
        }
        let (brute, _) = oracle::argmin_brute_force(h, p.gamma, 2001, &cands);
        let got = hamiltonian_argmin(phi, &p);
        worst = worst.max((got.value - brute).abs());
        for u in got.set.values() {
            worst = worst.max((h(u) - brute).abs());
        }
    }
    let el = t.elapsed();
    check(
        worst <= 1e-10 && el < Duration::from_secs(10),
        format!(
            "10^4 draws, max objective gap {worst:.2e}, {:.2} s",
            secs(el)
        ),
    )
}

fn c2_envelope() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let (mut hull_dev, mut eq_dev, mut samples, mut eq_samples) = (0.0f64, 0.0f64, 0usize, 0usize);
    for k in 0..100 {
        let p = if k % 2 == 0 {
            draw_kink_params(&mut rng)
        } else {
            draw_l1_params(&mut rng)
        };
        let env = oracle::convex_envelope(&p, 40_001);
        for _ in 0..1000 {
            let u = rng.random_range(-p.gamma..=p.gamma);
            hull_dev = hull_dev.max((g_scalar(u, &p) - env.eval(u)).abs());
            samples += 1;
        }
        let mut eq_points = vec![0.0];
        if p.is_interior_kink() {
            let s = p.kink();
            eq_points.extend([s, -s, p.gamma, -p.gamma]);
            for _ in 0..20 {
                let m = rng.random_range(s..=p.gamma);
                eq_points.extend([m, -m]);
            }
        }
        for u in eq_points {
            eq_dev = eq_dev.max((g_scalar(u, &p) - j0_scalar(u, &p)).abs());
            eq_samples += 1;
        }
    }
    check(
        hull_dev <= 1e-3 && eq_dev == 0.0,
        format!("{samples} samples over 100 sets, hull deviation {hull_dev:.2e}, equality-set deviation {eq_dev:e} on {eq_samples} points"),
    )
}

fn c3_remainder() -> Outcome {
    let coef = -0.5 * (2f64.sqrt() - 1.0).powi(2);
    let n = 1024;
    let h = 1.0 / (n + 1) as f64;
    let mut worst = 0.0f64;
    for k in [4usize, 16, 64] {
        let ex = remainder_example(n, k).map_err(|e| e.to_string())?;
        let nodes = (1..=n).filter(|&i| (i as f64 * h) < 1.0 / k as f64).count();
        let norm_sq = nodes as f64 * h;
        let rel = ((ex.remainder - coef * norm_sq) / (coef * norm_sq)).abs();
        worst = worst.max(rel);
    }
    check(
        worst <= 1e-12,
        format!(
            "k in {{4,16,64}}, n = 1024, coefficient {coef:.12}, max relative error {worst:.2e}"
        ),
    )
}

fn c4_scalar_bounds() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut min_rem = f64::INFINITY;
    for i in 0..100_000 {
        let p = draw_kink_params(&mut rng);
        let s = p.kink();
        let u = match i % 10 {
            0 => s,
            1 => -s,
            _ => rng.random_range(-p.gamma..=p.gamma),
        };
        let h = rng.random_range(-p.gamma..=p.gamma) - u;
        min_rem = min_rem.min(taylor_remainder(u, h, &p) - taylor_remainder_bound(u, h, &p));
    }
    let mut min_gt = f64::INFINITY;
    let mut eq_hits = 0usize;
    for _ in 0..100_000 {
        let p = draw_kink_params(&mut rng);
        let u = rng.random_range(-p.gamma..=p.gamma);
        let v = rng.random_range(-p.gamma..=p.gamma);
        let (gt, d2) = (gtilde_scalar(u, v, &p), g_dir2(u, v, &p));
        min_gt = min_gt.min(d2 - gt);
        if gt > 0.0 && gt == d2 {
            eq_hits += 1;
        }
    }
    // sign-matched cases on the quadratic branch, including the kink itself
    let mut eq_ok = true;
    for _ in 0..1000 {
        let p = draw_kink_params(&mut rng);
        let s = p.kink();
        for u in [
            s,
            -s,
            rng.random_range(s..=p.gamma),
            -rng.random_range(s..=p.gamma),
        ] {
            let v = u.signum() * rng.random_range(1e-3..=p.gamma);
            let (gt, d2) = (gtilde_scalar(u, v, &p), g_dir2(u, v, &p));
            eq_ok &= gt == d2 && gt == p.alpha * v * v;
        }
    }
    check(
        min_rem >= -1e-12 && min_gt >= -1e-12 && eq_hits > 0 && eq_ok,
        format!("remainder slack min {min_rem:.2e}, surrogate slack min {min_gt:.2e}, equality hits {eq_hits}, constructed equality {}",
            if eq_ok { "exact" } else { "violated" }),
    )
}

fn c5_adjoint() -> Outcome {
    let pde = fixtures::standard_cubic_1d(127);
    let u = GridField::from_fn(pde.grid().clone(), |x, _| 5.0 * (PI * x).sin());
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let (mut gr, mut hs, mut du) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..10 {
        let v = smooth_direction(&u, &mut rng);
        let c = oracle::adjoint_fd_check(&pde, &u, &v).map_err(|e| e.to_string())?;
        gr = gr.max(c.gradient_rel);
        hs = hs.max(c.hessian_rel);
        du = du.max(c.duality);
    }
    check(
        gr <= 1e-6 && hs <= 1e-4 && du <= 1e-10,
        format!("10 directions, gradient {gr:.2e}, Hessian {hs:.2e}, duality {du:.2e}"),
    )
}

fn certify(pde: &Pde) -> Result<(bool, String), String> {
    let spec = pde.spec();
    let t = Instant::now();
    let l0 = solve_l0(pde, &spec.zeros(), &SolverSettings::default()).map_err(|e| e.to_string())?;
    let pmp = pmp_residual(spec, &l0.cache).max_residual;
    let sv = check_sparsity_structure(spec, &l0.cache).violations;
    let ed = envelope_defect(spec, l0.u());
    let l0_time = t.elapsed();

    let t = Instant::now();
    let tol = 1e-11;
    let pc = solve_pc(pde, &spec.zeros(), &SolverSettings::default().with_tol(tol))
        .map_err(|e| e.to_string())?;
    let pcr = pc_stationarity_residual(spec, &pc.cache).max_residual;
    let l42 = check_pc_structure(spec, &pc.cache, tol / spec.cost_params().alpha);
    let pc_time = t.elapsed();

    let limit = Duration::from_secs(60);
    let ok = l0.converged()
        && pmp <= 1e-8
        && sv == 0
        && ed <= 1e-12
        && pc.converged()
        && pcr <= 1e-8
        && l42.passes
        && l0_time < limit
        && pc_time < limit;
    Ok((
        ok,
        format!(
            "l0: pmp {pmp:.1e}, sparsity violations {sv}, envelope {ed:.1e}, {:.1} s; pc: residual {pcr:.1e}, implications {:?}, {:.1} s",
            secs(l0_time),
            l42.violations,
            secs(pc_time)
        ),
    ))
}

fn c6_certificates() -> Outcome {
    let (a, da) = certify(&fixtures::standard_cubic_1d(255))?;
    let (b, db) = certify(&fixtures::standard_cubic_2d(31))?;
    check(a && b, format!("1D n=255 [{da}]; 2D 31x31 [{db}]"))
}

fn c7_beta_star() -> Outcome {
    let base = fixtures::standard_cubic_1d(63);
    let bstar = beta_star(
        base.spec(),
        &eval(&base, &base.spec().zeros()).map_err(|e| e.to_string())?,
    );
    let above = Pde::new(
        base.spec()
            .with_beta(1.01 * bstar)
            .map_err(|e| e.to_string())?,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let mut zero_runs = 0;
    for _ in 0..10 {
        let d = random_unit_direction(&above.spec().zeros(), &mut rng);
        let u0 = uad_project(&(&d * 30.0), above.spec().gamma());
        let a = solve_pc(&above, &u0, &SolverSettings::default()).map_err(|e| e.to_string())?;
        let b = solve_l0(&above, &u0, &SolverSettings::default()).map_err(|e| e.to_string())?;
        if a.converged() && b.converged() && a.u().norm_linf() == 0.0 && b.u().norm_linf() == 0.0 {
            zero_runs += 1;
        }
    }
    let strong = fixtures::strong_target_1d(63);
    let sb = beta_star(
        strong.spec(),
        &eval(&strong, &strong.spec().zeros()).map_err(|e| e.to_string())?,
    );
    let below = Pde::new(
        strong
            .spec()
            .with_beta(0.5 * sb)
            .map_err(|e| e.to_string())?,
    );
    let z = below.spec().zeros();
    let pc = solve_pc(&below, &z, &SolverSettings::default()).map_err(|e| e.to_string())?;
    let l0 = solve_l0(&below, &z, &SolverSettings::default()).map_err(|e| e.to_string())?;
    let support = below
        .spec()
        .l0_norm(pc.u())
        .max(below.spec().l0_norm(l0.u()));
    check(
        zero_runs == 10 && support > 0.0,
        format!("beta* = {bstar:.4}: zero from {zero_runs}/10 starts above; support {support:.3} at half the strong-target threshold"),
    )
}

fn c8_transfer() -> Outcome {
    let pde = fixtures::standard_cubic_1d(255);
    let (sol, rep) = solve_transfer(&pde, &SolverSettings::default()).map_err(|e| e.to_string())?;
    let spec = pde.spec();
    let p = spec.cost_params();
    let nodewise = sol
        .u()
        .values()
        .iter()
        .map(|&u| (g_scalar(u, &p) - j0_scalar(u, &p)).abs())
        .fold(0.0, f64::max);
    let gap = (sol.cache.j - sol.cache.j_pc).abs();
    check(
        sol.converged() && rep.tie_nodes == 0 && nodewise <= 1e-12 && gap <= 1e-12,
        format!(
            "tie nodes {}, node-wise envelope gap {nodewise:.1e}, |J - J_pc| {gap:.1e}",
            rep.tie_nodes
        ),
    )
}

fn c9_soc_pipeline() -> Outcome {
    let t = Instant::now();
    let pde = fixtures::lq_interior_kink(&[1.0, 1.0], 31);
    let sol = solve_pc(
        &pde,
        &pde.spec().zeros(),
        &SolverSettings::default().with_tol(1e-10),
    )
    .map_err(|e| e.to_string())?;
    if !sol.converged() {
        return Err("solver did not converge".into());
    }
    let tau = 1e-2 * pde.spec().cost_params().adjoint_threshold();
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let rep = check_sufficient_soc(&pde, &sol.cache, tau, &SocSettings::default(), &mut rng)
        .map_err(|e| e.to_string())?;
    let delta = match rep.verdict {
        Verdict::SufficientHolds { delta } => delta,
        v => return Err(format!("verdict {v:?}")),
    };
    let rho = rep.growth_radius.ok_or("no growth radius")?;
    let adv: Vec<GridField> = rep.eigenvector.iter().cloned().collect();
    let g = measure_quadratic_growth(&pde, &sol.cache, rho, 1000, &adv, &mut rng)
        .map_err(|e| e.to_string())?;
    let dis = rep.eigen_disagreement.unwrap_or(f64::INFINITY);
    let el = t.elapsed();
    check(
        delta > 0.0 && g.violations == 0 && g.samples >= 1000 && dis <= 1e-6 && el < Duration::from_secs(120),
        format!(
            "N = {}, free dim {}, delta {delta:.3e}, growth violations {}/{} at rho {rho:.3}, eigen disagreement {dis:.1e}, {:.1} s",
            pde.grid().len(),
            rep.free_dim,
            g.violations,
            g.samples,
            secs(el)
        ),
    )
}

fn c10_necessary_fails() -> Outcome {
    let (pde, u) = fixtures::concave_stationary_1d(127).map_err(|e| e.to_string())?;
    let c = eval(&pde, &u).map_err(|e| e.to_string())?;
    let pmp = pmp_residual(pde.spec(), &c).max_residual;
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    let rep = check_necessary_soc(&pde, &c, &SocSettings::default(), &mut rng)
        .map_err(|e| e.to_string())?;
    let v = match (&rep.verdict, &rep.witness) {
        (Verdict::NecessaryFails, Some(v)) => v.clone(),
        _ => return Err(format!("verdict {:?}", rep.verdict)),
    };
    // direct evaluation along the witness
    let gamma = pde.spec().gamma();
    let admissible = |w: &GridField| w.values().iter().all(|x| x.abs() <= gamma);
    let jpc = |w: &GridField| eval(&pde, w).map(|e| e.j_pc).map_err(|e| e.to_string());
    let mut worst = f64::NEG_INFINITY;
    for t in [1e-2, 3e-3, 1e-3] {
        let (plus, minus) = (&u + &(&v * t), &u - &(&v * t));
        let d2 = if admissible(&minus) {
            (jpc(&plus)? - 2.0 * c.j_pc + jpc(&minus)?) / (t * t)
        } else {
            (jpc(&(&u + &(&v * (2.0 * t))))? - 2.0 * jpc(&plus)? + c.j_pc) / (t * t)
        };
        worst = worst.max(d2);
    }
    check(
        pmp <= 1e-8 && worst < 0.0,
        format!("pmp residual {pmp:.1e}, lambda {:.3}, largest second difference along witness {worst:.3}",
            rep.lambda_min.unwrap_or(f64::NAN)),
    )
}

fn c11_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |sub: &str| -> Result<Vec<u8>, String> {
        let mut cfg = RunConfig::new(fixtures::standard_cubic_1d_config(63));
        cfg.seed = 7;
        cfg.out = dir.path().join(sub);
        if cmd_verify(&cfg) != Exit::Success {
            return Err(format!("verify exited non-zero in {sub}"));
        }
        let path: PathBuf = cfg.out.join("verify_report.json");
        std::fs::read(path).map_err(|e| e.to_string())
    };
    let (a, b) = (run("a")?, run("b")?);
    check(
        a == b,
        format!("two runs, seed 7, {} bytes, identical: {}", a.len(), a == b),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("scalar minimizer fidelity", c1_argmin),
        ("convex envelope identity", c2_envelope),
        ("envelope remainder example", c3_remainder),
        ("remainder and surrogate bounds", c4_scalar_bounds),
        ("adjoint calculus", c5_adjoint),
        ("solver certificates", c6_certificates),
        ("beta* threshold", c7_beta_star),
        ("transfer to the original problem", c8_transfer),
        ("second-order pipeline soundness", c9_soc_pipeline),
        ("necessary-condition falsification", c10_necessary_fails),
        ("determinism", c11_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (tag, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {tag}  {name}: {detail}", i + 1);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
