//! End-to-end acceptance checks. Each test prints a single
//! `ACCEPT-NN <name> ... PASS/FAIL` line (run with `--nocapture` to see
//! them) and asserts the stated thresholds.

use clipgrad::deep_linear::{make_deep_linear, DeepLinearProblem};
use clipgrad::harness::{
    divergence_probe, measure_t_eps_det, measure_t_eps_sto, monte_carlo_runs, slow_progress_probe,
    synthetic_experiment, theorem_bound, Complexity, SyntheticConfig, TheoremId,
};
use clipgrad::objective::{
    make_exp_worstcase, make_quartic, make_slow_growth, parse_objective, Objective,
    SmoothnessConstants,
};
use clipgrad::optimizer::{
    run, step_size_clipped, step_size_normalized, theorem3_params, theorem6_params, RunOptions,
    StepRule, Termination,
};
use clipgrad::oracle::{check_gradient, NoiseDistribution, NoiseModel};
use clipgrad::smoothness::{estimate_local_smoothness, gronwall_check};
use ndarray::Array2;
use rand::{Rng, SeedableRng};

struct Criterion {
    id: u32,
    name: &'static str,
}

impl Criterion {
    fn new(id: u32, name: &'static str) -> Self {
        Self { id, name }
    }

    fn check(&self, ok: bool, detail: &str) {
        let verdict = if ok { "PASS" } else { "FAIL" };
        println!("ACCEPT-{:02} {} ... {} ({})", self.id, self.name, verdict, detail);
        assert!(ok, "ACCEPT-{:02} {} failed: {}", self.id, self.name, detail);
    }
}

#[test]
fn accept_01_synthetic_scan_replication() {
    let c = Criterion::new(1, "synthetic quartic scan replication");
    let result = synthetic_experiment(&SyntheticConfig {
        record_stride: 1000,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let gd = result.gd_scan.best_final_grad_norm;
    let clipped = result.clipped_scan.best_final_grad_norm;
    let detail = format!(
        "gd_final={gd:.3e} clipped_final={clipped:.3e} ratio={:.3e}",
        result.ratio
    );
    c.check(
        clipped <= 1e-5 && gd >= 1e-2 && result.ratio >= 1e4,
        &detail,
    );
}

#[test]
fn accept_02_theorem3_soundness() {
    let c = Criterion::new(2, "clipped-GD hitting time within the closed-form bound");
    let q = make_quartic();
    let constants = SmoothnessConstants::new(0.1, 10.0).unwrap();
    let rule = theorem3_params(&constants).unwrap();
    let delta_f = q.eval(&[30.0]) - q.f_star().unwrap();
    let mut detail = String::new();
    let mut ok = true;
    for eps in [1e-1, 1e-2, 1e-3] {
        let opts = RunOptions::new(10_000_000, eps).with_stride(10_000_000);
        let traj = run(&rule, &q, &[30.0], &opts, None, 0).unwrap();
        let bound = theorem_bound(TheoremId::Thm3, &constants, delta_f, eps, None, None).unwrap();
        match measure_t_eps_det(&traj, eps).unwrap() {
            Complexity::Finite(t) => {
                ok &= (t as f64) <= bound;
                detail.push_str(&format!("eps={eps}: T={t} bound={bound:.3e}; "));
            }
            Complexity::Infinite => {
                ok = false;
                detail.push_str(&format!("eps={eps}: no hit; "));
            }
        }
    }
    c.check(ok, detail.trim_end_matches("; "));
}

#[test]
fn accept_03_divergence_threshold() {
    let c = Criterion::new(3, "fixed GD diverges above the critical step, stays below it");
    let l1 = 2.0;
    let mut ok = true;
    let mut detail = String::new();
    for m in [10.0_f64, 100.0] {
        let h_crit = (2.0 * m.ln() + 2.0) / (m * l1);
        let above = divergence_probe(m, l1, 1.1 * h_crit, 100_000).unwrap();
        let below = divergence_probe(m, l1, 0.9 * h_crit, 100_000).unwrap();
        ok &= above.diverged && !below.diverged;
        detail.push_str(&format!(
            "M={m}: above={} below={}; ",
            above.diverged, below.diverged
        ));
    }
    c.check(ok, detail.trim_end_matches("; "));
}

#[test]
fn accept_04_slow_progress_count() {
    let c = Criterion::new(4, "slow-growth linear region matches the printed count");
    let (m, l1, eps, delta_f) = (10.0_f64, 2.0, 0.1, 1.0);
    let h = (2.0 * m.ln() + 2.0) / (m * l1);
    let probe = slow_progress_probe(m, l1, eps, delta_f, h).unwrap();
    let detail = format!(
        "measured={} closed_form={} lower_bound={:.2}",
        probe.measured, probe.closed_form, probe.lower_bound
    );
    c.check(
        probe.measured == probe.closed_form && (probe.measured as f64) >= probe.lower_bound,
        &detail,
    );
}

#[test]
fn accept_05_theorem6_stochastic_soundness() {
    let c = Criterion::new(5, "stochastic clipped GD within the closed-form bound");
    let q = make_quartic();
    let constants = SmoothnessConstants::new(0.1, 10.0).unwrap();
    let (tau, eps, budget) = (0.01, 0.1, 100_000u64);
    let rule = theorem6_params(&constants, tau, budget).unwrap();
    let noise = NoiseModel::new(tau, NoiseDistribution::UniformBall, 2024).unwrap();
    let opts = RunOptions::new(budget, eps).with_stride(budget);
    let runs = monte_carlo_runs(&rule, &q, &[30.0], &opts, &noise, 20).unwrap();
    let t = measure_t_eps_sto(&runs, eps).unwrap();
    let delta_f = q.eval(&[30.0]);
    let bound = theorem_bound(TheoremId::Thm6, &constants, delta_f, eps, Some(tau), None).unwrap();
    let detail = format!("T_sto={t} bound={bound:.3e} runs=20");
    let ok = matches!(t, Complexity::Finite(v) if (v as f64) <= bound);
    c.check(ok, &detail);
}

#[test]
fn accept_06_clipped_ngd_equivalence() {
    let c = Criterion::new(6, "clipped/NGD step equivalence under the coupling");
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
    let mut failures = 0u32;
    for _ in 0..10_000 {
        let g = 10f64.powf(rng.gen_range(-6.0..6.0)) * rng.gen_range(0.0..1.0f64);
        let eta_n = 10f64.powf(rng.gen_range(-4.0..2.0));
        let beta = 10f64.powf(rng.gen_range(-4.0..2.0));
        let eta_c = eta_n / beta;
        let gamma = eta_n / eta_c;
        let h_c = step_size_clipped(eta_c, gamma, g);
        let h_n = step_size_normalized(eta_n, beta, g).unwrap();
        if !(0.5 * h_c <= h_n * (1.0 + 1e-12) && h_n <= 2.0 * h_c * (1.0 + 1e-12)) {
            failures += 1;
        }
    }
    c.check(failures == 0, &format!("failures={failures}/10000"));
}

#[test]
fn accept_07_descent_property() {
    let c = Criterion::new(7, "per-step descent under the clipped-GD tuning");
    let mut checked = 0u64;
    let mut ok = true;
    for (obj, start) in [
        (make_quartic(), 30.0),
        (make_exp_worstcase(2.0).unwrap(), 3.0),
        (make_exp_worstcase(5.0).unwrap(), 1.5),
        (make_slow_growth(0.1).unwrap(), 11.0),
    ] {
        let constants = obj
            .certified_options()
            .first()
            .cloned()
            .unwrap_or_else(|| obj.constants().unwrap().clone());
        let rule = theorem3_params(&constants).unwrap();
        let traj = run(&rule, &obj, &[start], &RunOptions::new(20_000, 1e-9), None, 0).unwrap();
        for w in traj.iterates.windows(2) {
            let lhs = w[1].f;
            let rhs = w[0].f - w[0].step_size * w[0].grad_norm * w[0].grad_norm / 2.0;
            if lhs > rhs + 1e-12 * rhs.abs().max(1.0) {
                ok = false;
            }
            checked += 1;
        }
    }
    c.check(ok, &format!("steps_checked={checked}"));
}

#[test]
fn accept_08_gronwall_bound() {
    let c = Criterion::new(8, "local gradient-growth bound on all built-ins");
    let objs = [
        make_quartic(),
        make_exp_worstcase(2.0).unwrap(),
        make_exp_worstcase(5.0).unwrap(),
        make_slow_growth(0.1).unwrap(),
    ];
    let mut centers_checked = 0u64;
    let mut ok = true;
    for obj in &objs {
        let constants = obj
            .certified_options()
            .first()
            .cloned()
            .unwrap_or_else(|| obj.constants().unwrap().clone());
        if constants.l1 == 0.0 {
            continue;
        }
        for (i, center) in obj.sample_region(1000, 88).into_iter().enumerate() {
            if !gronwall_check(obj, &center, &constants, 100, i as u64).unwrap() {
                ok = false;
            }
            centers_checked += 1;
        }
    }
    c.check(ok, &format!("centers={centers_checked} x 100 perturbations"));
}

#[test]
fn accept_09_gradient_and_hessian_correctness() {
    let c = Criterion::new(9, "analytic derivatives match finite differences");
    let mut max_grad_err = 0.0_f64;
    let objectives: Vec<Objective> = vec![
        make_quartic(),
        make_exp_worstcase(2.0).unwrap(),
        make_slow_growth(0.1).unwrap(),
        parse_objective("poly:4,0,-2,0,1").unwrap(),
    ];
    for obj in &objectives {
        let points = obj.sample_region(100, 9);
        let report = check_gradient(obj, &points, 1e-5).unwrap();
        max_grad_err = max_grad_err.max(report.max_rel_err);
    }
    // deep linear network: Kronecker-structured gradient and Hessian
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    let dims = [2usize, 3, 2, 2];
    let weights: Vec<Array2<f64>> = dims
        .windows(2)
        .map(|w| Array2::from_shape_fn((w[1], w[0]), |_| rng.gen_range(-1.0..1.0)))
        .collect();
    let x = Array2::from_shape_fn((dims[0], 3), |_| rng.gen_range(-1.0..1.0));
    let y = Array2::from_shape_fn((dims[dims.len() - 1], 3), |_| rng.gen_range(-1.0..1.0));
    let problem = DeepLinearProblem::new(weights, x, y).unwrap();
    let hess_err = max_hessian_block_fd_error(&problem);
    let obj = make_deep_linear(problem);
    let points = obj.sample_region(100, 10);
    let report = check_gradient(&obj, &points, 1e-5).unwrap();
    max_grad_err = max_grad_err.max(report.max_rel_err);
    let detail = format!("max_grad_rel_err={max_grad_err:.2e} max_hess_rel_err={hess_err:.2e}");
    c.check(max_grad_err <= 1e-5 && hess_err <= 1e-4, &detail);
}

/// Worst relative error between every analytic second-derivative block
/// and its central-difference counterpart.
fn max_hessian_block_fd_error(p: &DeepLinearProblem) -> f64 {
    let point: Vec<f64> = p
        .weights()
        .iter()
        .flat_map(|w| w.iter().copied())
        .collect();
    let offsets: Vec<usize> = p
        .weights()
        .iter()
        .scan(0, |acc, w| {
            let cur = *acc;
            *acc += w.len();
            Some(cur)
        })
        .collect();
    let h = 1e-5;
    let mut worst = 0.0_f64;
    for i in 1..=p.layers() {
        for j in i..=p.layers() {
            let analytic = p.hessian_block(&point, i, j).unwrap();
            let (ri, ci) = (offsets[i - 1], p.weights()[i - 1].len());
            let (rj, cj) = (offsets[j - 1], p.weights()[j - 1].len());
            for b in 0..cj {
                let mut plus = point.clone();
                plus[rj + b] += h;
                let mut minus = point.clone();
                minus[rj + b] -= h;
                let gp = p.grad_packed(&plus).unwrap();
                let gm = p.grad_packed(&minus).unwrap();
                for a in 0..ci {
                    let fd = (gp[ri + a] - gm[ri + a]) / (2.0 * h);
                    let err = (analytic[(a, b)] - fd).abs() / analytic[(a, b)].abs().max(1.0);
                    worst = worst.max(err);
                }
            }
        }
    }
    worst
}

#[test]
fn accept_10_estimator_exactness_on_quadratics() {
    let c = Criterion::new(10, "local smoothness estimator exact on quadratics");
    let mut ok = true;
    let mut max_err = 0.0_f64;
    for a in [0.5, 1.0, 7.25] {
        let obj = parse_objective(&format!("poly:0,0,{}", a / 2.0)).unwrap();
        for delta in [0.5, 0.25, 0.1] {
            for (xa, xb) in [(0.0, 1.0), (-3.0, 2.0), (5.0, 5.5)] {
                let l = estimate_local_smoothness(&obj, &[xa], &[xb], delta).unwrap();
                let err = (l - a).abs() / a;
                max_err = max_err.max(err);
                ok &= err <= 1e-12;
            }
        }
    }
    c.check(ok, &format!("max_rel_err={max_err:.2e}"));
}

#[test]
fn accept_11_out_of_scope_ids_rejected() {
    let c = Criterion::new(11, "neural-network benchmarks are excluded from the catalog");
    let rejected = ["lstm", "resnet", "ptb_perplexity", "cifar10"]
        .iter()
        .all(|id| parse_objective(id).is_err());
    let included = parse_objective("quartic").is_ok();
    c.check(
        rejected && included,
        "lstm/resnet/perplexity ids rejected, analytic catalog intact",
    );
}

// keep the divergence-side fixture honest: the run itself must blow up,
// not merely creep past the threshold
#[test]
fn divergence_is_fast_once_triggered() {
    let f = make_exp_worstcase(2.0).unwrap();
    let m: f64 = 10.0;
    let x0 = (m.ln() + 1.0) / 2.0;
    let h = 1.1 * (2.0 * m.ln() + 2.0) / (m * 2.0);
    let traj = run(
        &StepRule::FixedGd { h },
        &f,
        &[x0],
        &RunOptions::new(100_000, 0.0),
        None,
        0,
    )
    .unwrap();
    assert_eq!(traj.terminated_by, Termination::Diverged);
    assert!(traj.total_steps < 100);
}
