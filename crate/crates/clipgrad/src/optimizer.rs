//! Update rules (fixed, clipped, normalized, and their stochastic
//! variants), theorem-prescribed hyperparameters, and the trajectory
//! runner.

use crate::error::{Error, Result};
use crate::objective::{Objective, SmoothnessConstants};
use crate::oracle::{stochastic_grad, NoiseModel};
use crate::util::{l2_norm, sub_scaled};

/// A parameterized update policy mapping (iterate, gradient) to a step.
#[derive(Debug, Clone, PartialEq)]
pub enum StepRule {
    FixedGd { h: f64 },
    ClippedGd { eta_c: f64, gamma: f64 },
    NormalizedGd { eta_n: f64, beta: f64 },
    StochasticClippedGd { eta: f64, l1: f64, tau: f64 },
    StochasticGd { h: f64 },
}

impl StepRule {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &str, v: f64| {
            Err(Error::InvalidParameter(format!(
                "step rule parameter {name} must be positive and finite, got {v}"
            )))
        };
        match *self {
            StepRule::FixedGd { h } | StepRule::StochasticGd { h } => {
                if !(h > 0.0 && h.is_finite()) {
                    return bad("h", h);
                }
            }
            StepRule::ClippedGd { eta_c, gamma } => {
                if !(eta_c > 0.0 && eta_c.is_finite()) {
                    return bad("eta_c", eta_c);
                }
                if !(gamma > 0.0 && gamma.is_finite()) {
                    return bad("gamma", gamma);
                }
            }
            StepRule::NormalizedGd { eta_n, beta } => {
                if !(eta_n > 0.0 && eta_n.is_finite()) {
                    return bad("eta_n", eta_n);
                }
                // beta = 0 is tolerated; the step errors only at a
                // stationary point, where the quotient is undefined.
                if !(beta >= 0.0 && beta.is_finite()) {
                    return bad("beta", beta);
                }
            }
            StepRule::StochasticClippedGd { eta, l1, tau } => {
                if !(eta > 0.0 && eta.is_finite()) {
                    return bad("eta", eta);
                }
                if !(l1 > 0.0 && l1.is_finite()) {
                    return bad("L1", l1);
                }
                if !(tau >= 0.0 && tau.is_finite()) {
                    return bad("tau", tau);
                }
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> &'static str {
        match self {
            StepRule::FixedGd { .. } => "fixed_gd",
            StepRule::ClippedGd { .. } => "clipped_gd",
            StepRule::NormalizedGd { .. } => "normalized_gd",
            StepRule::StochasticClippedGd { .. } => "stochastic_clipped_gd",
            StepRule::StochasticGd { .. } => "stochastic_gd",
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(
            self,
            StepRule::StochasticClippedGd { .. } | StepRule::StochasticGd { .. }
        )
    }

    /// Step size for the observed gradient norm. Errors only for
    /// normalized GD at a stationary point with beta = 0.
    pub fn step_size(&self, grad_norm: f64) -> Result<f64> {
        Ok(match *self {
            StepRule::FixedGd { h } | StepRule::StochasticGd { h } => h,
            StepRule::ClippedGd { eta_c, gamma } => step_size_clipped(eta_c, gamma, grad_norm),
            StepRule::NormalizedGd { eta_n, beta } => {
                step_size_normalized(eta_n, beta, grad_norm)?
            }
            StepRule::StochasticClippedGd { eta, l1, tau } => {
                (1.0 / (16.0 * eta * l1 * (grad_norm + tau))).min(eta)
            }
        })
    }

    /// Parameter list in canonical order, for serialization.
    pub fn params(&self) -> Vec<(&'static str, f64)> {
        match *self {
            StepRule::FixedGd { h } | StepRule::StochasticGd { h } => vec![("h", h)],
            StepRule::ClippedGd { eta_c, gamma } => vec![("eta_c", eta_c), ("gamma", gamma)],
            StepRule::NormalizedGd { eta_n, beta } => vec![("eta_n", eta_n), ("beta", beta)],
            StepRule::StochasticClippedGd { eta, l1, tau } => {
                vec![("eta", eta), ("L1", l1), ("tau", tau)]
            }
        }
    }
}

impl std::fmt::Display for StepRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}{{", self.kind())?;
        for (i, (k, v)) in self.params().into_iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{k}={v}")?;
        }
        f.write_str("}")
    }
}

impl std::str::FromStr for StepRule {
    type Err = Error;

    /// Parses the text form `kind{k=v,...}`, e.g.
    /// `clipped_gd{eta_c=1.0,gamma=0.01}`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let open = s
            .find('{')
            .ok_or_else(|| Error::Parse(format!("step rule `{s}` is missing `{{`")))?;
        if !s.ends_with('}') {
            return Err(Error::Parse(format!("step rule `{s}` is missing `}}`")));
        }
        let kind = &s[..open];
        let body = &s[open + 1..s.len() - 1];
        let mut pairs = Vec::new();
        for token in body.split(',').filter(|t| !t.trim().is_empty()) {
            let (k, v) = token
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected `name=value`, got `{token}`")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad numeric value `{}`", v.trim())))?;
            pairs.push((k.trim().to_string(), v));
        }
        let mut take = |name: &str| -> Result<f64> {
            let pos = pairs
                .iter()
                .position(|(k, _)| k.eq_ignore_ascii_case(name))
                .ok_or_else(|| Error::Parse(format!("rule `{kind}` is missing `{name}`")))?;
            Ok(pairs.remove(pos).1)
        };
        let rule = match kind {
            "fixed_gd" => StepRule::FixedGd { h: take("h")? },
            "clipped_gd" => StepRule::ClippedGd {
                eta_c: take("eta_c")?,
                gamma: take("gamma")?,
            },
            "normalized_gd" => StepRule::NormalizedGd {
                eta_n: take("eta_n")?,
                beta: take("beta")?,
            },
            "stochastic_clipped_gd" => StepRule::StochasticClippedGd {
                eta: take("eta")?,
                l1: take("L1")?,
                tau: take("tau")?,
            },
            "stochastic_gd" => StepRule::StochasticGd { h: take("h")? },
            other => return Err(Error::Parse(format!("unknown step rule kind `{other}`"))),
        };
        if let Some((k, _)) = pairs.first() {
            return Err(Error::Parse(format!(
                "unknown parameter `{k}` for rule `{kind}`"
            )));
        }
        rule.validate()?;
        Ok(rule)
    }
}

/// `h_c = min{eta_c, gamma*eta_c/grad_norm}`; returns `eta_c` at a
/// stationary point (the limit value).
pub fn step_size_clipped(eta_c: f64, gamma: f64, grad_norm: f64) -> f64 {
    if grad_norm == 0.0 {
        eta_c
    } else {
        eta_c.min(gamma * eta_c / grad_norm)
    }
}

/// `h_n = eta_n/(grad_norm + beta)`.
pub fn step_size_normalized(eta_n: f64, beta: f64, grad_norm: f64) -> Result<f64> {
    if beta == 0.0 && grad_norm == 0.0 {
        return Err(Error::InvalidParameter(
            "normalized step undefined: beta = 0 at a stationary point".into(),
        ));
    }
    Ok(eta_n / (grad_norm + beta))
}

/// Clipped-GD parameters `eta_c = 1/(10 L0)`,
/// `gamma = min{1/eta_c, 1/(10 L1 eta_c)}`.
pub fn theorem3_params(c: &SmoothnessConstants) -> Result<StepRule> {
    if !(c.l0 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "clipped-GD tuning needs L0 > 0, got {}",
            c.l0
        )));
    }
    let eta_c = 1.0 / (10.0 * c.l0);
    let second = if c.l1 == 0.0 {
        f64::INFINITY
    } else {
        1.0 / (10.0 * c.l1 * eta_c)
    };
    let gamma = (1.0 / eta_c).min(second);
    Ok(StepRule::ClippedGd { eta_c, gamma })
}

/// Fixed-GD step `h = 1/(2 (M L1 + L0))`.
pub fn theorem5_params(c: &SmoothnessConstants) -> Result<StepRule> {
    let m = c.m.ok_or(Error::MissingConstant("M"))?;
    let denom = 2.0 * (m * c.l1 + c.l0);
    if !(denom > 0.0) {
        return Err(Error::InvalidParameter("M*L1 + L0 must be positive".into()));
    }
    Ok(StepRule::FixedGd { h: 1.0 / denom })
}

/// Stochastic clipped-GD parameters:
/// `eta = min{1/(20 L0), 1/(128 L1 tau), 1/sqrt(T)}`; the per-step size
/// `h_k = min{1/(16 eta L1 (‖g_k‖+tau)), eta}` is computed by the rule.
pub fn theorem6_params(c: &SmoothnessConstants, tau: f64, t: u64) -> Result<StepRule> {
    if !(c.l1 > 0.0) {
        return Err(Error::InvalidParameter(
            "stochastic clipped-GD tuning requires L1 > 0".into(),
        ));
    }
    if !(c.l0 > 0.0) {
        return Err(Error::InvalidParameter(
            "stochastic clipped-GD tuning requires L0 > 0".into(),
        ));
    }
    if t == 0 {
        return Err(Error::InvalidParameter("horizon T must be positive".into()));
    }
    let middle = if tau == 0.0 {
        f64::INFINITY
    } else {
        1.0 / (128.0 * c.l1 * tau)
    };
    let eta = (1.0 / (20.0 * c.l0))
        .min(middle)
        .min(1.0 / (t as f64).sqrt());
    Ok(StepRule::StochasticClippedGd { eta, l1: c.l1, tau })
}

/// SGD step `h = min{1/sqrt(T), 1/(L1 (M + tau))}`.
pub fn theorem7_params(c: &SmoothnessConstants, tau: f64, t: u64) -> Result<StepRule> {
    if t == 0 {
        return Err(Error::InvalidParameter("horizon T must be positive".into()));
    }
    let second = if c.l1 == 0.0 {
        f64::INFINITY
    } else {
        let m = c.m.ok_or(Error::MissingConstant("M"))?;
        1.0 / (c.l1 * (m + tau))
    };
    Ok(StepRule::StochasticGd {
        h: (1.0 / (t as f64).sqrt()).min(second),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Budget,
    EpsReached,
    Diverged,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Termination::Budget => "budget",
            Termination::EpsReached => "eps_reached",
            Termination::Diverged => "diverged",
        })
    }
}

/// One logged iterate. `step_size` is the size used to leave this
/// iterate (also evaluated at the terminal one, for the record).
#[derive(Debug, Clone)]
pub struct IterateRecord {
    pub k: u64,
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub step_size: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub objective_id: String,
    pub rule: StepRule,
    /// Iterates recorded at `record_stride`, plus the terminal one.
    pub iterates: Vec<IterateRecord>,
    /// True gradient norm at every step 0..=total_steps.
    pub grad_norms: Vec<f64>,
    pub terminated_by: Termination,
    pub total_steps: u64,
    pub final_x: Vec<f64>,
    pub final_f: f64,
    pub final_grad_norm: f64,
}

impl Trajectory {
    /// Index of the first step with `grad_norm <= eps`, if any.
    pub fn first_hit(&self, eps: f64) -> Option<u64> {
        self.grad_norms
            .iter()
            .position(|&g| g <= eps)
            .map(|i| i as u64)
    }

    /// Minimum gradient norm seen along the run.
    pub fn min_grad_norm(&self) -> f64 {
        self.grad_norms.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_monotone_descent(&self) -> bool {
        self.iterates.windows(2).all(|w| w[1].f <= w[0].f)
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub budget: u64,
    pub eps: f64,
    /// Record every `record_stride`-th iterate (terminal always kept).
    pub record_stride: u64,
    pub divergence_threshold: f64,
    /// Evaluate the true gradient each step for stopping and logging.
    /// With instrumentation off, stochastic runs stop on budget or
    /// divergence only.
    pub instrumented: bool,
}

impl RunOptions {
    pub fn new(budget: u64, eps: f64) -> Self {
        Self {
            budget,
            eps,
            record_stride: 1,
            divergence_threshold: 1e12,
            instrumented: true,
        }
    }

    pub fn with_stride(mut self, stride: u64) -> Self {
        self.record_stride = stride.max(1);
        self
    }

    pub fn without_instrumentation(mut self) -> Self {
        self.instrumented = false;
        self
    }
}

/// Runs a rule on an objective until `grad_norm <= eps`, budget
/// exhaustion, or divergence (non-finite or magnitude above threshold).
///
/// `run_index` selects the rng stream for Monte-Carlo repetitions;
/// deterministic rules ignore it.
pub fn run(
    rule: &StepRule,
    obj: &Objective,
    x0: &[f64],
    opts: &RunOptions,
    noise: Option<&NoiseModel>,
    run_index: u64,
) -> Result<Trajectory> {
    rule.validate()?;
    if opts.budget == 0 {
        return Err(Error::InvalidParameter("budget must be at least 1".into()));
    }
    if !(opts.eps >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "eps must be nonnegative, got {}",
            opts.eps
        )));
    }
    if x0.len() != obj.dim() {
        return Err(Error::DimensionMismatch {
            expected: obj.dim(),
            got: x0.len(),
        });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("x0 must be finite".into()));
    }
    match (rule.is_stochastic(), noise) {
        (true, None) => {
            return Err(Error::InvalidParameter(format!(
                "rule `{}` requires a noise model",
                rule.kind()
            )))
        }
        (false, Some(_)) => {
            return Err(Error::InvalidParameter(format!(
                "rule `{}` is deterministic; remove the noise model",
                rule.kind()
            )))
        }
        _ => {}
    }

    let mut x = x0.to_vec();
    let mut iterates = Vec::new();
    let mut grad_norms = Vec::new();
    let mut k: u64 = 0;
    loop {
        let f = obj.eval(&x);
        // the gradient driving the step: sampled for stochastic rules
        let (g, true_norm) = if rule.is_stochastic() {
            let sample = stochastic_grad(obj, &x, noise.unwrap(), run_index, k, opts.instrumented);
            let true_norm = if opts.instrumented {
                l2_norm(sample.true_grad.as_ref().unwrap())
            } else {
                f64::NAN
            };
            (sample.g, true_norm)
        } else {
            let g = obj.grad(&x);
            let n = l2_norm(&g);
            (g, n)
        };
        let g_norm = l2_norm(&g);
        let h = rule.step_size(g_norm)?;

        let diverged = !f.is_finite()
            || x.iter().any(|v| !v.is_finite())
            || f.abs() > opts.divergence_threshold
            || l2_norm(&x) > opts.divergence_threshold;
        let stopped = if diverged {
            Some(Termination::Diverged)
        } else if opts.instrumented && true_norm <= opts.eps {
            Some(Termination::EpsReached)
        } else if k >= opts.budget {
            Some(Termination::Budget)
        } else {
            None
        };

        if opts.instrumented {
            grad_norms.push(true_norm);
        }
        if k % opts.record_stride == 0 || stopped.is_some() {
            // avoid a duplicate terminal record when both conditions hit
            if iterates.last().map(|r: &IterateRecord| r.k) != Some(k) {
                iterates.push(IterateRecord {
                    k,
                    x: x.clone(),
                    f,
                    grad_norm: if opts.instrumented { true_norm } else { g_norm },
                    step_size: h,
                });
            }
        }
        if let Some(term) = stopped {
            return Ok(Trajectory {
                objective_id: obj.id().to_string(),
                rule: rule.clone(),
                final_f: f,
                final_grad_norm: if opts.instrumented { true_norm } else { g_norm },
                final_x: x,
                iterates,
                grad_norms,
                terminated_by: term,
                total_steps: k,
            });
        }
        x = sub_scaled(&x, h, &g);
        k += 1;
    }
}
