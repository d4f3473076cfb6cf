use qcurv_core::*;

fn setup() -> (ModelParams, KernelMatrix) {
    let p = ModelParams::new(2, -0.3).unwrap();
    let g = RadialGrid::new(1024, 1e-7, 1e4, -0.3, 2).unwrap();
    let k = build_kernel(&p, &g).unwrap();
    (p, k)
}

#[test]
fn volume_matches_rearranged_identity() {
    let (p, k) = setup();
    let target = 0.85 * p.lambda_1;
    let (u, rep) = continuation_solve(target, &p, &k, &Schedule::default(), &SolverOptions::default()).unwrap();
    assert!(!rep.infeasible && rep.converged && rep.in_window, "{rep:?}");
    let want = target * (target - p.lambda_1) / (p.lambda_1 * p.alpha);
    assert!((rep.singular_volume - want).abs() < 1e-2 * want, "{} vs {want}", rep.singular_volume);
    assert!((rep.lambda_star - target).abs() < 1e-3 * target);
    // λ = e^{(p/α) u(0)} and ũ(0) = u(0) + log λ.
    assert!((rep.scale.ln() - 0.5 / p.alpha * rep.rho).abs() < 1e-12);
    assert!((u.u0 - (rep.rho + rep.scale.ln())).abs() < 1e-12);
    assert_eq!(rep.stages.len(), 6);
    assert!(rep.stages.iter().all(|s| s.converged));
}

#[test]
fn degenerate_schedule_agrees_on_an_easy_case() {
    let (p, k) = setup();
    let target = 0.9 * p.lambda_1;
    let opts = SolverOptions::default();
    let full = continuation_solve(target, &p, &k, &Schedule::default(), &opts).unwrap().1;
    let short = Schedule {
        eps: vec![0.0],
        delta: vec![0.0],
    };
    let one = continuation_solve(target, &p, &k, &short, &opts).unwrap().1;
    assert_eq!(full.infeasible, one.infeasible);
    assert!(!one.infeasible);
    assert!((full.lambda_star - one.lambda_star).abs() < 1e-6 * target);
}

#[test]
fn below_window_is_flagged() {
    let (p, k) = setup();
    let (_, rep) = continuation_solve(0.5 * p.lambda_1, &p, &k, &Schedule::default(), &SolverOptions::default()).unwrap();
    assert!(rep.infeasible);
    assert!(!rep.in_window);
}
