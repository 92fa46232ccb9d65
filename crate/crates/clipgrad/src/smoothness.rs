//! Trajectory-based local smoothness estimation, envelope verification
//! and the gradient-growth (Grönwall-style) bound check.

use crate::error::{Error, Result};
use crate::objective::{sample_box, Objective, SmoothnessConstants};
use crate::optimizer::Trajectory;
use crate::util::{add_scaled, l2_norm, linspace, mix_stream_key};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DEFAULT_DELTA: f64 = 0.1;
/// Absolute slack absorbing round-off in Hessian-norm evaluation.
pub const ENVELOPE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct ProfileEntry {
    pub k: u64,
    pub grad_norm: f64,
    pub l_hat: f64,
}

/// Per-step local smoothness estimates along a trajectory; the raw data
/// behind gradient-norm-vs-local-smoothness scatter plots.
#[derive(Debug, Clone)]
pub struct SmoothnessProfile {
    pub entries: Vec<ProfileEntry>,
    pub delta: f64,
}

fn gamma_grid(delta: f64) -> Result<Vec<f64>> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    let n = (1.0 / delta).round();
    if (n * delta - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "delta = {delta} must divide 1 so the grid ends at gamma = 1"
        )));
    }
    let n = n as usize;
    Ok((1..=n)
        .map(|i| if i == n { 1.0 } else { i as f64 * delta })
        .collect())
}

/// Local smoothness estimate along the displacement `d = x_k1 - x_k`:
/// `max_{gamma in {delta, 2 delta, ..., 1}} ‖∇f(x_k + gamma d) − ∇f(x_k)‖ / ‖gamma d‖`.
pub fn estimate_local_smoothness(
    obj: &Objective,
    x_k: &[f64],
    x_k1: &[f64],
    delta: f64,
) -> Result<f64> {
    let grid = gamma_grid(delta)?;
    let d: Vec<f64> = x_k1.iter().zip(x_k).map(|(a, b)| a - b).collect();
    let d_norm = l2_norm(&d);
    if d_norm == 0.0 {
        return Err(Error::InvalidParameter(
            "local smoothness estimate needs a nonzero displacement".into(),
        ));
    }
    let g0 = obj.grad(x_k);
    let mut best = 0.0_f64;
    for gamma in grid {
        let g = obj.grad(&add_scaled(x_k, gamma, &d));
        let diff: Vec<f64> = g.iter().zip(&g0).map(|(a, b)| a - b).collect();
        best = best.max(l2_norm(&diff) / (gamma * d_norm));
    }
    Ok(best)
}

/// Estimates local smoothness for every `stride`-th consecutive iterate
/// pair of a trajectory. Pairs with zero displacement are skipped.
pub fn profile_trajectory(
    obj: &Objective,
    traj: &Trajectory,
    delta: f64,
    stride: usize,
) -> Result<SmoothnessProfile> {
    if stride == 0 {
        return Err(Error::InvalidParameter("profile stride must be positive".into()));
    }
    if traj.iterates.len() < 2 {
        return Err(Error::InvalidParameter(
            "profiling needs a trajectory with at least two iterates".into(),
        ));
    }
    gamma_grid(delta)?;
    let mut entries = Vec::new();
    let mut i = 0;
    while i + 1 < traj.iterates.len() {
        let (a, b) = (&traj.iterates[i], &traj.iterates[i + 1]);
        if a.x != b.x {
            let l_hat = estimate_local_smoothness(obj, &a.x, &b.x, delta)?;
            entries.push(ProfileEntry {
                k: a.k,
                grad_norm: a.grad_norm,
                l_hat,
            });
        }
        i += stride;
    }
    Ok(SmoothnessProfile { entries, delta })
}

/// A sampled point where the smoothness envelope fails.
#[derive(Debug, Clone)]
pub struct Violation {
    pub x: Vec<f64>,
    pub hessian_norm: f64,
    pub envelope: f64,
}

/// Samples the region and returns every point where
/// `hessian_norm(x) > L0 + L1 ‖∇f(x)‖ + slack`. Empty means the pair is
/// certified at sample resolution. 1-D regions use a dense uniform
/// grid; higher dimensions a seeded uniform sample.
pub fn verify_envelope(
    obj: &Objective,
    c: &SmoothnessConstants,
    region: &[(f64, f64)],
    n: usize,
) -> Result<Vec<Violation>> {
    if !obj.has_hessian_norm() {
        return Err(Error::InvalidParameter(format!(
            "objective `{}` does not expose a Hessian norm",
            obj.id()
        )));
    }
    if region.len() != obj.dim() {
        return Err(Error::DimensionMismatch {
            expected: obj.dim(),
            got: region.len(),
        });
    }
    if n < 2 {
        return Err(Error::InvalidParameter("need at least 2 sample points".into()));
    }
    let points: Vec<Vec<f64>> = if region.len() == 1 {
        linspace(region[0].0, region[0].1, n)
            .into_iter()
            .map(|x| vec![x])
            .collect()
    } else {
        sample_box(region, n, 0xe27e)
    };
    Ok(points
        .into_iter()
        .filter_map(|p| {
            let h = obj.hessian_norm(&p).unwrap();
            let env = c.envelope(obj.grad_norm(&p));
            (h > env + ENVELOPE_SLACK).then_some(Violation {
                x: p,
                hessian_norm: h,
                envelope: env,
            })
        })
        .collect())
}

/// Checks the local gradient-growth bound: for `n` sampled points `x⁺`
/// with `‖x⁺ − x‖ ≤ min(1/L1, 1)`,
/// `‖∇f(x⁺)‖ ≤ 4 (L0/L1 + ‖∇f(x)‖)`. Returns true iff no violation.
pub fn gronwall_check(
    obj: &Objective,
    x: &[f64],
    c: &SmoothnessConstants,
    n: usize,
    seed: u64,
) -> Result<bool> {
    if !(c.l1 > 0.0) {
        return Err(Error::InvalidParameter(
            "gradient-growth bound requires L1 > 0".into(),
        ));
    }
    if x.len() != obj.dim() {
        return Err(Error::DimensionMismatch {
            expected: obj.dim(),
            got: x.len(),
        });
    }
    let radius = (1.0 / c.l1).min(1.0);
    let bound = 4.0 * (c.l0 / c.l1 + obj.grad_norm(x));
    let mut rng = ChaCha8Rng::seed_from_u64(mix_stream_key(seed, 0, 1));
    let dim = x.len();
    for _ in 0..n {
        // uniform in the cube, rejected to the ball: exact coverage of
        // the admissible neighbourhood
        let xp = loop {
            let d: Vec<f64> = (0..dim).map(|_| rng.gen_range(-radius..=radius)).collect();
            if l2_norm(&d) <= radius {
                break add_scaled(x, 1.0, &d);
            }
        };
        if obj.grad_norm(&xp) > bound * (1.0 + 1e-12) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{
        make_exp_worstcase, make_polynomial, make_quartic, make_slow_growth,
    };
    use crate::optimizer::{run, RunOptions, StepRule};
    use approx::assert_relative_eq;

    fn quadratic(a: f64) -> Objective {
        make_polynomial(&[0.0, 0.0, a / 2.0]).unwrap()
    }

    #[test]
    fn estimator_exact_on_constant_hessian() {
        let q = quadratic(3.0);
        for (xa, xb) in [(0.0, 1.0), (-5.0, 2.5), (10.0, 10.1)] {
            for delta in [0.1, 0.25, 0.5] {
                let l = estimate_local_smoothness(&q, &[xa], &[xb], delta).unwrap();
                assert_relative_eq!(l, 3.0, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn estimator_quartic_enumerated_grid() {
        // d = 1 from x = 1: ratios |4(1+gamma)^3 - 4| / gamma peak at gamma = 1
        let q = make_quartic();
        let l = estimate_local_smoothness(&q, &[1.0], &[2.0], 0.25).unwrap();
        assert_relative_eq!(l, 28.0, max_relative = 1e-12);
    }

    #[test]
    fn estimator_is_bounded_by_segment_hessian_max() {
        let q = make_quartic();
        for (xa, xb) in [(1.0, 2.0), (-3.0, 0.5), (0.1, 0.2), (-10.0, 10.0)] {
            let l = estimate_local_smoothness(&q, &[xa], &[xb], 0.05).unwrap();
            let seg_max = linspace(0.0, 1.0, 10_001)
                .into_iter()
                .map(|t| q.hessian_norm(&[xa + t * (xb - xa)]).unwrap())
                .fold(0.0, f64::max);
            assert!(l <= seg_max * (1.0 + 1e-12), "{l} > {seg_max}");
        }
    }

    #[test]
    fn estimator_input_validation() {
        let q = make_quartic();
        assert!(estimate_local_smoothness(&q, &[1.0], &[1.0], 0.25).is_err());
        assert!(estimate_local_smoothness(&q, &[1.0], &[2.0], 0.0).is_err());
        assert!(estimate_local_smoothness(&q, &[1.0], &[2.0], 1.0).is_err());
        // 0.3 does not divide 1
        assert!(estimate_local_smoothness(&q, &[1.0], &[2.0], 0.3).is_err());
    }

    #[test]
    fn profile_on_quadratic_is_flat() {
        let q = quadratic(1.0);
        let rule = StepRule::FixedGd { h: 0.1 };
        let traj = run(&rule, &q, &[5.0], &RunOptions::new(50, 0.0), None, 0).unwrap();
        let profile = profile_trajectory(&q, &traj, 0.1, 1).unwrap();
        assert!(!profile.entries.is_empty());
        for e in &profile.entries {
            assert_relative_eq!(e.l_hat, 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn profile_on_quartic_decreases_with_gradient() {
        let q = make_quartic();
        let rule: StepRule = "clipped_gd{eta_c=1,gamma=0.01}".parse().unwrap();
        let traj = run(&rule, &q, &[30.0], &RunOptions::new(3000, 1e-3), None, 0).unwrap();
        let profile = profile_trajectory(&q, &traj, 0.1, 1).unwrap();
        for w in profile.entries.windows(2) {
            assert!(w[1].l_hat <= w[0].l_hat * (1.0 + 1e-12));
            assert!(w[1].grad_norm <= w[0].grad_norm);
        }
    }

    #[test]
    fn profile_stride_counts() {
        let q = quadratic(1.0);
        let rule = StepRule::FixedGd { h: 0.01 };
        let traj = run(&rule, &q, &[5.0], &RunOptions::new(100, 0.0), None, 0).unwrap();
        let profile = profile_trajectory(&q, &traj, 0.1, 5).unwrap();
        assert!(profile.entries.len() <= 20);
        assert!(profile.entries.windows(2).all(|w| w[1].k > w[0].k));
        assert!(profile_trajectory(&q, &traj, 0.1, 0).is_err());
    }

    #[test]
    fn envelope_certified_pairs_are_clean() {
        let q = make_quartic();
        for c in q.certified_options() {
            let v = verify_envelope(&q, c, q.valid_region().unwrap(), 10_000).unwrap();
            assert!(v.is_empty(), "unexpected violations: {v:?}");
        }
        for obj in [
            make_exp_worstcase(2.0).unwrap(),
            make_slow_growth(0.1).unwrap(),
        ] {
            let c = obj.constants().unwrap();
            let v = verify_envelope(&obj, c, obj.valid_region().unwrap(), 10_000).unwrap();
            assert!(v.is_empty(), "{}: {v:?}", obj.id());
        }
    }

    #[test]
    fn envelope_flags_the_undersized_intercept() {
        // (0.1, 10) misses on the quartic near |x| = 0.2, where
        // 12 x^2 > 0.1 + 40 |x|^3
        let q = make_quartic();
        let c = q.constants().unwrap();
        let v = verify_envelope(&q, c, &[(-30.0, 30.0)], 10_000).unwrap();
        assert!(!v.is_empty());
        for viol in &v {
            assert!(viol.x[0].abs() < 0.31, "unexpected location {:?}", viol.x);
            assert!(viol.hessian_norm > viol.envelope);
        }
    }

    #[test]
    fn envelope_huge_l1_dominates() {
        let q = make_quartic();
        let c = SmoothnessConstants::new(1.0, 1e12).unwrap();
        let v = verify_envelope(&q, &c, &[(-30.0, 30.0)], 5_000).unwrap();
        assert!(v.is_empty());
    }

    #[test]
    fn envelope_requires_hessian() {
        let p = make_polynomial(&[0.0, 1.0]).unwrap();
        let c = SmoothnessConstants::new(1.0, 0.0).unwrap();
        // polynomials expose a Hessian norm, so build one that doesn't
        let bare = Objective::new(
            "bare",
            1,
            None,
            Box::new(|x: &[f64]| x[0]),
            Box::new(|_: &[f64]| vec![1.0]),
            None,
            None,
            None,
        );
        assert!(verify_envelope(&bare, &c, &[(-1.0, 1.0)], 100).is_err());
        assert!(verify_envelope(&p, &c, &[(-1.0, 1.0)], 100).is_ok());
    }

    #[test]
    fn gronwall_bound_on_quartic_at_one() {
        // bound = 4 (0.1/10 + 4) = 16.04; the gradient on the radius-0.1
        // interval tops out at 4 * 1.1^3 = 5.324
        let q = make_quartic();
        let c = SmoothnessConstants::new(0.1, 10.0).unwrap();
        assert!(gronwall_check(&q, &[1.0], &c, 1000, 0).unwrap());
    }

    #[test]
    fn gronwall_passes_for_all_builtins() {
        let objs = [
            make_quartic(),
            make_exp_worstcase(2.0).unwrap(),
            make_exp_worstcase(5.0).unwrap(),
            make_slow_growth(0.1).unwrap(),
        ];
        for obj in &objs {
            let c = match obj.certified_options().first() {
                Some(c) => c.clone(),
                None => obj.constants().unwrap().clone(),
            };
            if c.l1 == 0.0 {
                continue;
            }
            for (i, center) in obj.sample_region(100, 11).into_iter().enumerate() {
                assert!(
                    gronwall_check(obj, &center, &c, 100, i as u64).unwrap(),
                    "{} violated at {center:?}",
                    obj.id()
                );
            }
        }
    }

    #[test]
    fn gronwall_detects_a_broken_bound() {
        // constants far too small for the quartic: at x = 2 the bound is
        // 4 (0.001/100 + 32) but shrinking L0 and growing L1 tightens the
        // radius, so fake a tiny bound via a scaled objective instead
        let q = make_quartic();
        let c = SmoothnessConstants::new(1e-9, 1e6).unwrap();
        // bound = 4 (1e-15 + |4 x0^3|); at x0 = 0 the bound is ~4e-15 but
        // points within radius 1e-6 have gradient up to 4e-18 — passes.
        // Use a center where the gradient changes fast relative to the
        // bound: impossible for a true envelope, so check the error path
        // and a hand-built liar objective instead.
        assert!(gronwall_check(&q, &[0.0], &c, 100, 0).unwrap());
        let liar = Objective::new(
            "liar",
            1,
            None,
            Box::new(|x: &[f64]| x[0]),
            Box::new(|x: &[f64]| vec![if x[0] == 0.0 { 0.0 } else { 1e6 }]),
            None,
            None,
            None,
        );
        let c = SmoothnessConstants::new(1.0, 1.0).unwrap();
        assert!(!gronwall_check(&liar, &[0.0], &c, 100, 0).unwrap());
        let c0 = SmoothnessConstants::new(1.0, 0.0).unwrap();
        assert!(gronwall_check(&liar, &[0.0], &c0, 100, 0).is_err());
    }
}
