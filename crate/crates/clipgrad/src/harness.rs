//! Empirical iteration complexity versus closed-form theorem bounds:
//! first-hitting-time measurement, the divergence and slow-progress
//! probes behind the lower-bound story, step-size scans and the
//! synthetic quartic experiment.

use crate::error::{Error, Result};
use crate::objective::{
    make_exp_worstcase, make_quartic, make_slow_growth, Objective, SmoothnessConstants,
};
use crate::optimizer::{
    run, theorem3_params, RunOptions, StepRule, Termination, Trajectory,
};
use crate::oracle::NoiseModel;
use rayon::prelude::*;

/// Iteration count or the infinity marker for "never within budget".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Complexity {
    Finite(u64),
    Infinite,
}

impl Complexity {
    pub fn is_finite(&self) -> bool {
        matches!(self, Complexity::Finite(_))
    }

    pub fn value(&self) -> Option<u64> {
        match self {
            Complexity::Finite(t) => Some(*t),
            Complexity::Infinite => None,
        }
    }
}

impl std::fmt::Display for Complexity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Complexity::Finite(t) => write!(f, "{t}"),
            Complexity::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TheoremId {
    Thm3,
    Thm4Lower,
    Thm5,
    Thm6,
    Thm7,
}

impl std::fmt::Display for TheoremId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TheoremId::Thm3 => "thm3",
            TheoremId::Thm4Lower => "thm4_lower",
            TheoremId::Thm5 => "thm5",
            TheoremId::Thm6 => "thm6",
            TheoremId::Thm7 => "thm7",
        })
    }
}

impl std::str::FromStr for TheoremId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "thm3" => Ok(Self::Thm3),
            "thm4_lower" => Ok(Self::Thm4Lower),
            "thm5" => Ok(Self::Thm5),
            "thm6" => Ok(Self::Thm6),
            "thm7" => Ok(Self::Thm7),
            other => Err(Error::Parse(format!("unknown theorem id `{other}`"))),
        }
    }
}

/// Measured complexity of one configuration, optionally paired with the
/// closed-form bound it is compared against.
#[derive(Debug, Clone)]
pub struct ComplexityReport {
    pub objective_id: String,
    pub rule: StepRule,
    pub eps: f64,
    pub empirical_t: Complexity,
    pub theorem_id: Option<TheoremId>,
    pub theorem_bound: Option<f64>,
    /// Monte-Carlo repetitions; 1 for deterministic runs.
    pub runs: u64,
    pub success_fraction: f64,
    /// Smallest final gradient norm across the runs (scan figure of merit).
    pub final_grad_norm: f64,
}

impl ComplexityReport {
    pub const CSV_HEADER: &'static str =
        "objective_id,rule_kind,params,eps,empirical_T,theorem_id,theorem_bound,runs,success_fraction";

    pub fn csv_row(&self) -> String {
        let params = self
            .rule
            .params()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(",");
        format!(
            "{},{},\"{}\",{},{},{},{},{},{}",
            self.objective_id,
            self.rule.kind(),
            params,
            self.eps,
            self.empirical_t,
            self.theorem_id.map(|t| t.to_string()).unwrap_or_default(),
            self.theorem_bound.map(|b| b.to_string()).unwrap_or_default(),
            self.runs,
            self.success_fraction,
        )
    }
}

/// First index `t` with `‖∇f(x_t)‖ ≤ eps` along an instrumented
/// trajectory.
pub fn measure_t_eps_det(traj: &Trajectory, eps: f64) -> Result<Complexity> {
    if traj.grad_norms.is_empty() {
        return Err(Error::InvalidParameter(
            "trajectory was not instrumented with gradient norms".into(),
        ));
    }
    Ok(traj
        .first_hit(eps)
        .map_or(Complexity::Infinite, Complexity::Finite))
}

/// Smallest `t` such that at least half the runs have
/// `min_{k ≤ t} ‖∇f(x_k)‖ ≤ eps`; this is the `ceil(n/2)`-th smallest
/// per-run first-hitting time.
pub fn measure_t_eps_sto(runs: &[Trajectory], eps: f64) -> Result<Complexity> {
    if runs.len() < 2 {
        return Err(Error::InvalidParameter(
            "stochastic complexity needs at least two runs".into(),
        ));
    }
    let first = &runs[0];
    for t in runs {
        if t.objective_id != first.objective_id || t.rule != first.rule {
            return Err(Error::InvalidParameter(format!(
                "mismatched run configurations: {}/{} vs {}/{}",
                first.objective_id, first.rule, t.objective_id, t.rule
            )));
        }
        if t.grad_norms.is_empty() {
            return Err(Error::InvalidParameter(
                "trajectory was not instrumented with gradient norms".into(),
            ));
        }
    }
    let mut hits: Vec<u64> = runs.iter().filter_map(|t| t.first_hit(eps)).collect();
    let needed = runs.len().div_ceil(2);
    if hits.len() < needed {
        return Ok(Complexity::Infinite);
    }
    hits.sort_unstable();
    Ok(Complexity::Finite(hits[needed - 1]))
}

/// Evaluates the closed-form complexity bound of the chosen theorem.
///
/// `delta_f = f(x0) − f*`; `tau` and `m` override (or supply) the
/// corresponding constants when the theorem needs them.
pub fn theorem_bound(
    id: TheoremId,
    c: &SmoothnessConstants,
    delta_f: f64,
    eps: f64,
    tau: Option<f64>,
    m: Option<f64>,
) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    if !(delta_f >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "delta_f must be nonnegative, got {delta_f}"
        )));
    }
    let m_value = || m.or(c.m).ok_or(Error::MissingConstant("M"));
    let tau_value = || tau.ok_or(Error::MissingConstant("tau"));
    let (l0, l1) = (c.l0, c.l1);
    Ok(match id {
        TheoremId::Thm3 => {
            if !(l0 > 0.0) {
                return Err(Error::InvalidParameter("thm3 bound needs L0 > 0".into()));
            }
            20.0 * l0 * delta_f / (eps * eps)
                + 20.0 * 1.0_f64.max(l1 * l1) * delta_f / l0
        }
        TheoremId::Thm4Lower => {
            let m = m_value()?;
            if !(m > 1.0) {
                return Err(Error::InvalidParameter("thm4 lower bound needs M > 1".into()));
            }
            l1 * m * (delta_f - 5.0 * eps / 8.0) / (8.0 * eps * eps * (m.ln() + 1.0))
        }
        TheoremId::Thm5 => {
            let m = m_value()?;
            4.0 * (m * l1 + l0) * delta_f / (eps * eps)
        }
        TheoremId::Thm6 => {
            let tau = tau_value()?;
            if !(l1 > 0.0) {
                return Err(Error::InvalidParameter("thm6 bound needs L1 > 0".into()));
            }
            // tau = 0 kills every noise term, including 9*tau*L0^2/L1
            let delta = delta_f
                + (5.0 * l0 + 2.0 * l1 * tau) * tau * tau
                + 9.0 * tau * l0 * l0 / l1;
            delta
                * (128.0 * l1 / eps)
                    .max(4.0 * delta / eps.powi(4))
                    .max((80.0 * l0 + 512.0 * l1 * tau) / (eps * eps))
        }
        TheoremId::Thm7 => {
            let tau = tau_value()?;
            let m = m_value()?;
            let num = delta_f + (5.0 * l0 + 4.0 * l1 * m) * (m + tau) * (m + tau);
            num * num / eps.powi(4)
        }
    })
}

#[derive(Debug, Clone, Copy)]
pub struct DivergenceProbe {
    pub diverged: bool,
    pub steps_to_threshold: Option<u64>,
}

/// Runs fixed-step GD on the exponential worst case from
/// `x0 = (ln M + 1)/L1` and reports whether the iterates blow past the
/// divergence threshold.
pub fn divergence_probe(m: f64, l1: f64, h: f64, budget: u64) -> Result<DivergenceProbe> {
    if !(m > 1.0) {
        return Err(Error::InvalidParameter(format!("M must exceed 1, got {m}")));
    }
    let obj = make_exp_worstcase(l1)?;
    let x0 = (m.ln() + 1.0) / l1;
    let opts = RunOptions::new(budget, 0.0).with_stride(budget.max(1));
    let traj = run(&StepRule::FixedGd { h }, &obj, &[x0], &opts, None, 0)?;
    let diverged = traj.terminated_by == Termination::Diverged;
    Ok(DivergenceProbe {
        diverged,
        steps_to_threshold: diverged.then_some(traj.total_steps),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct SlowProgressProbe {
    /// Consecutive initial steps whose gradient magnitude is exactly
    /// `2 eps` (the linear region of the slow-growth worst case).
    pub measured: u64,
    /// Closed-form count of the linear walk, `ceil((x0−1)/(2 eps h))`.
    pub closed_form: u64,
    /// The printed lower-bound value `delta_f L1 M / (4 eps² (ln M + 1))`.
    pub lower_bound: f64,
}

/// Counts how long fixed-step GD on the slow-growth worst case crawls
/// through the constant-gradient region, starting at
/// `x0 = 1 + delta_f/eps`.
pub fn slow_progress_probe(
    m: f64,
    l1: f64,
    eps: f64,
    delta_f: f64,
    h: f64,
) -> Result<SlowProgressProbe> {
    if !(m > 1.0) {
        return Err(Error::InvalidParameter(format!("M must exceed 1, got {m}")));
    }
    if !(delta_f > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "delta_f must be positive, got {delta_f}"
        )));
    }
    let h_max = (2.0 * m.ln() + 2.0) / (m * l1);
    if !(h > 0.0 && h <= h_max) {
        return Err(Error::InvalidParameter(format!(
            "step h = {h} outside the stable range (0, {h_max}]"
        )));
    }
    let obj = make_slow_growth(eps)?;
    let x0 = 1.0 + delta_f / eps;
    let closed_form = ((x0 - 1.0) / (2.0 * eps * h)).ceil() as u64;
    let budget = closed_form + 16;
    let opts = RunOptions::new(budget, 0.0).with_stride(budget);
    let traj = run(&StepRule::FixedGd { h }, &obj, &[x0], &opts, None, 0)?;
    let target = 2.0 * eps;
    let measured = traj
        .grad_norms
        .iter()
        .take_while(|&&g| g == target)
        .count() as u64;
    Ok(SlowProgressProbe {
        measured,
        closed_form,
        lower_bound: delta_f * l1 * m / (4.0 * eps * eps * (m.ln() + 1.0)),
    })
}

/// A one-parameter rule family scanned over step sizes.
#[derive(Debug, Clone, Copy)]
pub enum ScanFamily {
    /// Fixed-step GD; the scan parameter is `h`.
    FixedGd,
    /// Clipped GD with the clipping threshold `gamma * eta_c` held at
    /// the given value; the scan parameter is `eta_c`.
    ClippedGdWithThreshold(f64),
}

impl ScanFamily {
    pub fn rule(&self, h: f64) -> StepRule {
        match *self {
            ScanFamily::FixedGd => StepRule::FixedGd { h },
            ScanFamily::ClippedGdWithThreshold(threshold) => StepRule::ClippedGd {
                eta_c: h,
                gamma: threshold / h,
            },
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ScanFamily::FixedGd => "fixed_gd",
            ScanFamily::ClippedGdWithThreshold(_) => "clipped_gd",
        }
    }
}

pub const SCAN_HALVINGS: u32 = 40;

#[derive(Debug, Clone)]
pub struct ScanResult {
    pub best_rule: StepRule,
    pub best_final_grad_norm: f64,
    pub reports: Vec<ComplexityReport>,
}

/// Evaluates `h ∈ {h_max, h_max/2, ..., h_max·2⁻⁴⁰}` and picks the
/// candidate with the smallest final gradient norm; ties go to the
/// larger step. Candidates run concurrently; reports keep scan order.
pub fn step_size_scan(
    family: ScanFamily,
    obj: &Objective,
    x0: &[f64],
    h_max: f64,
    budget: u64,
    eps: f64,
) -> Result<ScanResult> {
    if !(h_max > 0.0 && h_max.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "h_max must be positive and finite, got {h_max}"
        )));
    }
    let candidates: Vec<f64> = (0..=SCAN_HALVINGS)
        .map(|i| h_max * 2.0_f64.powi(-(i as i32)))
        .collect();
    let reports: Vec<ComplexityReport> = if budget == 0 {
        // degenerate scan: no steps taken, every candidate reports the
        // initial gradient
        let g0 = obj.grad_norm(x0);
        candidates
            .iter()
            .map(|&h| ComplexityReport {
                objective_id: obj.id().to_string(),
                rule: family.rule(h),
                eps,
                empirical_t: if g0 <= eps {
                    Complexity::Finite(0)
                } else {
                    Complexity::Infinite
                },
                theorem_id: None,
                theorem_bound: None,
                runs: 1,
                success_fraction: if g0 <= eps { 1.0 } else { 0.0 },
                final_grad_norm: g0,
            })
            .collect()
    } else {
        let results: Vec<Result<ComplexityReport>> = candidates
            .par_iter()
            .map(|&h| {
                let rule = family.rule(h);
                let opts = RunOptions::new(budget, eps).with_stride(budget);
                let traj = run(&rule, obj, x0, &opts, None, 0)?;
                let empirical_t = measure_t_eps_det(&traj, eps)?;
                Ok(ComplexityReport {
                    objective_id: obj.id().to_string(),
                    rule,
                    eps,
                    empirical_t,
                    theorem_id: None,
                    theorem_bound: None,
                    runs: 1,
                    success_fraction: if empirical_t.is_finite() { 1.0 } else { 0.0 },
                    final_grad_norm: traj.final_grad_norm,
                })
            })
            .collect();
        results.into_iter().collect::<Result<Vec<_>>>()?
    };
    // first strict improvement wins: candidates are ordered by
    // descending h, so ties resolve toward the larger step
    let best = reports
        .iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| {
            a.final_grad_norm
                .total_cmp(&b.final_grad_norm)
                .then(ia.cmp(ib))
        })
        .map(|(i, _)| i)
        .unwrap();
    Ok(ScanResult {
        best_rule: reports[best].rule.clone(),
        best_final_grad_norm: reports[best].final_grad_norm,
        reports,
    })
}

/// Configuration of the synthetic quartic experiment.
#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub x0: f64,
    /// Clipping threshold `gamma * eta_c` held fixed during the scan.
    pub threshold: f64,
    pub h_max: f64,
    pub budget: u64,
    /// Stride for the exported best-candidate trajectories.
    pub record_stride: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            x0: 30.0,
            threshold: 0.01,
            h_max: 1.0,
            budget: 1_000_000,
            record_stride: 1,
        }
    }
}

#[derive(Debug)]
pub struct SyntheticResult {
    pub gd_scan: ScanResult,
    pub clipped_scan: ScanResult,
    /// `final |f'(GD)| / final |f'(clipped)|` for the best candidates.
    pub ratio: f64,
    pub gd_best_trajectory: Trajectory,
    pub clipped_best_trajectory: Trajectory,
}

/// Scans both algorithms on the quartic and reruns the winners with
/// full logging.
pub fn synthetic_experiment(config: &SyntheticConfig) -> Result<SyntheticResult> {
    let obj = make_quartic();
    let x0 = [config.x0];
    let gd_scan = step_size_scan(
        ScanFamily::FixedGd,
        &obj,
        &x0,
        config.h_max,
        config.budget,
        0.0,
    )?;
    let clipped_scan = step_size_scan(
        ScanFamily::ClippedGdWithThreshold(config.threshold),
        &obj,
        &x0,
        config.h_max,
        config.budget,
        0.0,
    )?;
    let opts = RunOptions::new(config.budget, 0.0).with_stride(config.record_stride);
    let gd_best_trajectory = run(&gd_scan.best_rule, &obj, &x0, &opts, None, 0)?;
    let clipped_best_trajectory = run(&clipped_scan.best_rule, &obj, &x0, &opts, None, 0)?;
    let ratio = gd_scan.best_final_grad_norm / clipped_scan.best_final_grad_norm;
    Ok(SyntheticResult {
        gd_scan,
        clipped_scan,
        ratio,
        gd_best_trajectory,
        clipped_best_trajectory,
    })
}

/// Runs `n` identically configured stochastic trajectories on disjoint
/// rng streams, in parallel, ordered by run index.
pub fn monte_carlo_runs(
    rule: &StepRule,
    obj: &Objective,
    x0: &[f64],
    opts: &RunOptions,
    noise: &NoiseModel,
    n: u64,
) -> Result<Vec<Trajectory>> {
    (0..n)
        .into_par_iter()
        .map(|i| run(rule, obj, x0, opts, Some(noise), i))
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct SlowdownRow {
    pub m: f64,
    /// Fixed GD at its largest stable step for this M.
    pub gd_steps: Complexity,
    /// Clipped GD with the tuning that ignores M.
    pub clipped_steps: Complexity,
}

/// Demonstrates the "arbitrarily slower" gap: on the slow-growth worst
/// case, fixed GD's largest stable step shrinks with M (so its
/// first-hitting time grows ~ M/ln M) while clipped GD is M-independent.
pub fn slowdown_sweep(
    eps: f64,
    delta_f: f64,
    l1: f64,
    ms: &[f64],
    budget: u64,
) -> Result<Vec<SlowdownRow>> {
    let obj = make_slow_growth(eps)?;
    let x0 = [1.0 + delta_f / eps];
    let clipped = theorem3_params(obj.constants().unwrap())?;
    let opts = RunOptions::new(budget, eps).with_stride(budget);
    let clipped_traj = run(&clipped, &obj, &x0, &opts, None, 0)?;
    let clipped_steps = measure_t_eps_det(&clipped_traj, eps)?;
    ms.iter()
        .map(|&m| {
            if !(m > 1.0) {
                return Err(Error::InvalidParameter(format!("M must exceed 1, got {m}")));
            }
            let h = (2.0 * m.ln() + 2.0) / (m * l1);
            let traj = run(&StepRule::FixedGd { h }, &obj, &x0, &opts, None, 0)?;
            Ok(SlowdownRow {
                m,
                gd_steps: measure_t_eps_det(&traj, eps)?,
                clipped_steps,
            })
        })
        .collect()
}
