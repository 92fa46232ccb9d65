//! First-order oracles: exact, stochastic with almost-surely bounded
//! noise, and the independent finite-difference checker.
//!
//! Randomness is counter-based: every draw is keyed by
//! `(seed, run, step)`, so parallel Monte-Carlo runs reproduce exactly
//! regardless of scheduling.

use crate::error::{Error, Result};
use crate::objective::Objective;
use crate::util::{l2_norm, mix_stream_key};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseDistribution {
    Zero,
    /// Uniform on the ball of radius tau (for d = 1: uniform on {-tau, +tau},
    /// which attains the bound and stresses the theory hardest).
    UniformBall,
    /// Independent signs scaled to the sphere of radius tau.
    RademacherScaled,
}

impl std::fmt::Display for NoiseDistribution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            NoiseDistribution::Zero => "zero",
            NoiseDistribution::UniformBall => "uniform_ball",
            NoiseDistribution::RademacherScaled => "rademacher_scaled",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for NoiseDistribution {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(Self::Zero),
            "uniform_ball" => Ok(Self::UniformBall),
            "rademacher_scaled" | "symmetric_rademacher_scaled" => Ok(Self::RademacherScaled),
            other => Err(Error::Parse(format!("unknown noise distribution `{other}`"))),
        }
    }
}

/// Almost-surely bounded, symmetric gradient noise.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub tau: f64,
    pub distribution: NoiseDistribution,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(tau: f64, distribution: NoiseDistribution, seed: u64) -> Result<Self> {
        if !(tau >= 0.0) {
            return Err(Error::InvalidParameter(format!("tau must be nonnegative, got {tau}")));
        }
        Ok(Self { tau, distribution, seed })
    }

    pub fn zero() -> Self {
        Self { tau: 0.0, distribution: NoiseDistribution::Zero, seed: 0 }
    }

    /// Draws one perturbation for the (run, step) counter pair.
    /// Every draw has norm at most `tau`.
    pub fn draw(&self, dim: usize, run: u64, step: u64) -> Vec<f64> {
        if self.tau == 0.0 || self.distribution == NoiseDistribution::Zero {
            return vec![0.0; dim];
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix_stream_key(self.seed, run, step));
        let delta = match self.distribution {
            NoiseDistribution::Zero => vec![0.0; dim],
            NoiseDistribution::UniformBall => {
                if dim == 1 {
                    vec![if rng.gen::<bool>() { self.tau } else { -self.tau }]
                } else {
                    // normal direction via Box-Muller, radius ~ tau * U^(1/d)
                    let dir: Vec<f64> = standard_normals(&mut rng, dim);
                    let norm = l2_norm(&dir).max(f64::MIN_POSITIVE);
                    let radius = self.tau * rng.gen::<f64>().powf(1.0 / dim as f64);
                    dir.iter().map(|c| c / norm * radius).collect()
                }
            }
            NoiseDistribution::RademacherScaled => {
                let scale = self.tau / (dim as f64).sqrt();
                (0..dim)
                    .map(|_| if rng.gen::<bool>() { scale } else { -scale })
                    .collect()
            }
        };
        debug_assert!(l2_norm(&delta) <= self.tau * (1.0 + 1e-12));
        delta
    }
}

fn standard_normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    while out.len() < n {
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        out.push(r * theta.cos());
        out.push(r * theta.sin());
    }
    out.truncate(n);
    out
}

/// A stochastic gradient observation. `true_grad` is retained in
/// instrumented mode so noise-bound invariants can be asserted.
#[derive(Debug, Clone)]
pub struct GradientSample {
    pub point: Vec<f64>,
    pub g: Vec<f64>,
    pub true_grad: Option<Vec<f64>>,
}

/// Draws `g = grad(x) + delta` with `‖delta‖ <= tau`, deterministic in
/// `(seed, run, step)`.
pub fn stochastic_grad(
    obj: &Objective,
    x: &[f64],
    noise: &NoiseModel,
    run: u64,
    step: u64,
    instrumented: bool,
) -> GradientSample {
    let true_grad = obj.grad(x);
    let delta = noise.draw(x.len(), run, step);
    let g: Vec<f64> = true_grad.iter().zip(&delta).map(|(a, b)| a + b).collect();
    GradientSample {
        point: x.to_vec(),
        g,
        true_grad: instrumented.then_some(true_grad),
    }
}

/// Central finite differences of `eval`, one coordinate at a time.
pub fn finite_diff_grad(obj: &Objective, x: &[f64], h: f64) -> Vec<f64> {
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut out = Vec::with_capacity(x.len());
    let mut work = x.to_vec();
    for i in 0..x.len() {
        work[i] = x[i] + h;
        let plus = obj.eval(&work);
        work[i] = x[i] - h;
        let minus = obj.eval(&work);
        work[i] = x[i];
        out.push((plus - minus) / (2.0 * h));
    }
    out
}

/// Default step balancing truncation and round-off.
pub fn default_fd_step(x: &[f64]) -> f64 {
    1e-5 * (1.0 + l2_norm(x))
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Relative error `‖grad - fd‖ / (1 + ‖grad‖)` per checked point.
    pub per_point: Vec<f64>,
    pub max_rel_err: f64,
    pub rel_tol: f64,
    /// Set when the point list was empty; the pass is vacuous.
    pub vacuous: bool,
}

impl GradCheckReport {
    pub fn passes(&self) -> bool {
        self.vacuous || self.max_rel_err <= self.rel_tol
    }
}

/// Compares the analytic gradient against central differences at each
/// point.
pub fn check_gradient(obj: &Objective, points: &[Vec<f64>], rel_tol: f64) -> Result<GradCheckReport> {
    if !(rel_tol > 0.0) {
        return Err(Error::InvalidParameter("rel_tol must be positive".into()));
    }
    let per_point: Vec<f64> = points
        .iter()
        .map(|p| {
            let analytic = obj.grad(p);
            let fd = finite_diff_grad(obj, p, default_fd_step(p));
            let diff: Vec<f64> = analytic.iter().zip(&fd).map(|(a, b)| a - b).collect();
            l2_norm(&diff) / (1.0 + l2_norm(&analytic))
        })
        .collect();
    let max_rel_err = per_point.iter().copied().fold(0.0, f64::max);
    Ok(GradCheckReport {
        vacuous: per_point.is_empty(),
        per_point,
        max_rel_err,
        rel_tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{make_quartic, make_polynomial, Objective};

    #[test]
    fn zero_noise_is_exact() {
        let q = make_quartic();
        let noise = NoiseModel::zero();
        let s = stochastic_grad(&q, &[1.0], &noise, 0, 0, true);
        assert_eq!(s.g, vec![4.0]);
        assert_eq!(s.true_grad.unwrap(), vec![4.0]);
    }

    #[test]
    fn bounded_noise_on_quartic() {
        let q = make_quartic();
        let noise = NoiseModel::new(0.5, NoiseDistribution::UniformBall, 42).unwrap();
        for step in 0..1000 {
            let s = stochastic_grad(&q, &[1.0], &noise, 0, step, true);
            assert!(s.g[0] >= 3.5 && s.g[0] <= 4.5, "g = {}", s.g[0]);
        }
    }

    #[test]
    fn draws_are_reproducible_and_symmetric() {
        let noise = NoiseModel::new(1.0, NoiseDistribution::UniformBall, 7).unwrap();
        let a = noise.draw(3, 2, 5);
        let b = noise.draw(3, 2, 5);
        assert_eq!(a, b);
        let c = noise.draw(3, 2, 6);
        assert_ne!(a, c);
        // empirical mean of 10^4 draws within 3 tau / sqrt(10^4)
        let n = 10_000;
        let mut mean = vec![0.0; 3];
        for step in 0..n {
            for (m, d) in mean.iter_mut().zip(noise.draw(3, 0, step)) {
                *m += d;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        assert!(l2_norm(&mean) <= 3.0 * 1.0 / (n as f64).sqrt() * 1.5);
    }

    #[test]
    fn rademacher_attains_the_bound() {
        let noise = NoiseModel::new(0.3, NoiseDistribution::RademacherScaled, 1).unwrap();
        for step in 0..100 {
            let d = noise.draw(4, 0, step);
            assert!((l2_norm(&d) - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn finite_diff_on_quartic() {
        let q = make_quartic();
        let fd = finite_diff_grad(&q, &[2.0], 1e-5);
        assert!((fd[0] - 32.0).abs() < 1e-6);
        let c = make_polynomial(&[5.0]).unwrap();
        assert_eq!(finite_diff_grad(&c, &[1.0], 1e-5), vec![0.0]);
    }

    #[test]
    fn check_gradient_passes_and_catches_faults() {
        let q = make_quartic();
        let points = q.sample_region(100, 3);
        let report = check_gradient(&q, &points, 1e-5).unwrap();
        assert!(report.passes(), "max err {}", report.max_rel_err);

        // corrupt the gradient by +10% on coordinate 0
        let bad = Objective::new(
            "bad_quartic",
            1,
            Some(0.0),
            Box::new(|x: &[f64]| x[0].powi(4)),
            Box::new(|x: &[f64]| vec![4.4 * x[0].powi(3)]),
            None,
            None,
            Some(vec![(-30.0, 30.0)]),
        );
        let report = check_gradient(&bad, &points, 1e-5).unwrap();
        assert!(!report.passes());

        let empty = check_gradient(&q, &[], 1e-5).unwrap();
        assert!(empty.passes() && empty.vacuous);
        assert!(check_gradient(&q, &points, 0.0).is_err());
    }
}
