//! Analytic test objectives with exact gradients, Hessian norms and
//! declared `(L0, L1)` smoothness constants.
//!
//! The relaxed smoothness condition reads
//! `‖∇²f(x)‖ ≤ L0 + L1 · ‖∇f(x)‖` on a stated region. Each built-in
//! objective records the constants it was constructed with (`constants`)
//! and, separately, the options that hold exactly on the whole valid
//! region (`certified_options`). The two sets differ for the quartic:
//! the commonly quoted pair (0.1, 10) fails the envelope by up to 0.06
//! near |x| ≈ 0.2, where the tight constant for L1 = 10 is L0 = 0.16.

use crate::error::{Error, Result};
use crate::util::{l2_norm, linspace, mix_stream_key};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type ScalarFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type VectorFn = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Constants of the relaxed smoothness envelope, plus the optional
/// gradient-norm bound `M` over the initial sublevel set.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothnessConstants {
    pub l0: f64,
    pub l1: f64,
    pub m: Option<f64>,
}

impl SmoothnessConstants {
    pub fn new(l0: f64, l1: f64) -> Result<Self> {
        if !(l0 >= 0.0) || !(l1 >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "smoothness constants must be nonnegative, got L0={l0}, L1={l1}"
            )));
        }
        Ok(Self { l0, l1, m: None })
    }

    pub fn with_m(mut self, m: f64) -> Result<Self> {
        if !(m > 0.0) {
            return Err(Error::InvalidParameter(format!("M must be positive, got {m}")));
        }
        self.m = Some(m);
        Ok(self)
    }

    /// Envelope value `L0 + L1 * grad_norm`.
    pub fn envelope(&self, grad_norm: f64) -> f64 {
        self.l0 + self.l1 * grad_norm
    }
}

/// A differentiable objective with analytic gradient and optional
/// Hessian operator norm.
pub struct Objective {
    id: String,
    dim: usize,
    f_star: Option<f64>,
    eval: ScalarFn,
    grad: VectorFn,
    hessian_norm: Option<ScalarFn>,
    constants: Option<SmoothnessConstants>,
    certified_options: Vec<SmoothnessConstants>,
    valid_region: Option<Vec<(f64, f64)>>,
}

impl std::fmt::Debug for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Objective")
            .field("id", &self.id)
            .field("dim", &self.dim)
            .field("f_star", &self.f_star)
            .field("constants", &self.constants)
            .finish()
    }
}

impl Objective {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: impl Into<String>,
        dim: usize,
        f_star: Option<f64>,
        eval: ScalarFn,
        grad: VectorFn,
        hessian_norm: Option<ScalarFn>,
        constants: Option<SmoothnessConstants>,
        valid_region: Option<Vec<(f64, f64)>>,
    ) -> Self {
        Self {
            id: id.into(),
            dim,
            f_star,
            eval,
            grad,
            hessian_norm,
            constants,
            certified_options: Vec::new(),
            valid_region,
        }
    }

    fn with_certified(mut self, options: Vec<SmoothnessConstants>) -> Self {
        self.certified_options = options;
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Global lower bound on the function value; `None` marks objectives
    /// that are unbounded below (usable for smoothness checks only).
    pub fn f_star(&self) -> Option<f64> {
        self.f_star
    }

    pub fn bounded_below(&self) -> bool {
        self.f_star.is_some()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        (self.eval)(x)
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim);
        (self.grad)(x)
    }

    pub fn grad_norm(&self, x: &[f64]) -> f64 {
        l2_norm(&self.grad(x))
    }

    /// Operator norm of the Hessian at `x`, when the objective provides it.
    pub fn hessian_norm(&self, x: &[f64]) -> Option<f64> {
        self.hessian_norm.as_ref().map(|h| h(x))
    }

    pub fn has_hessian_norm(&self) -> bool {
        self.hessian_norm.is_some()
    }

    /// The constants the objective was declared with.
    pub fn constants(&self) -> Option<&SmoothnessConstants> {
        self.constants.as_ref()
    }

    /// Constant pairs that satisfy the envelope exactly on `valid_region`.
    pub fn certified_options(&self) -> &[SmoothnessConstants] {
        &self.certified_options
    }

    pub fn valid_region(&self) -> Option<&[(f64, f64)]> {
        self.valid_region.as_deref()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match &self.valid_region {
            None => true,
            Some(region) => x
                .iter()
                .zip(region)
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi),
        }
    }

    /// Deterministic sample of `n` points in the valid region (or in
    /// `[-1, 1]^d` when no region is declared), keyed by `seed`.
    pub fn sample_region(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let region: Vec<(f64, f64)> = match &self.valid_region {
            Some(r) => r.clone(),
            None => vec![(-1.0, 1.0); self.dim],
        };
        sample_box(&region, n, seed)
    }
}

/// Deterministic uniform sample of a box.
pub fn sample_box(region: &[(f64, f64)], n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_stream_key(seed, 0, 0));
    (0..n)
        .map(|_| {
            region
                .iter()
                .map(|(lo, hi)| rng.gen_range(*lo..=*hi))
                .collect()
        })
        .collect()
}

/// The 1-D objective `f(x) = x^4` on `[-30, 30]`.
///
/// Declared with the pair (L0 = 0.1, L1 = 10); the envelope-exact options
/// on the region are (0.16, 10) and (1.08e4, 0), with M = 4 * 30^3.
pub fn make_quartic() -> Objective {
    let m = 4.0 * 30.0_f64.powi(3);
    let declared = SmoothnessConstants { l0: 0.1, l1: 10.0, m: Some(m) };
    let certified = vec![
        SmoothnessConstants { l0: 0.16, l1: 10.0, m: Some(m) },
        SmoothnessConstants { l0: 1.08e4, l1: 0.0, m: Some(m) },
    ];
    Objective::new(
        "quartic",
        1,
        Some(0.0),
        Box::new(|x: &[f64]| x[0].powi(4)),
        Box::new(|x: &[f64]| vec![4.0 * x[0].powi(3)]),
        Some(Box::new(|x: &[f64]| 12.0 * x[0] * x[0])),
        Some(declared),
        Some(vec![(-30.0, 30.0)]),
    )
    .with_certified(certified)
}

/// The exponentially growing worst-case objective, parameterized by `L1 > 1`.
///
/// Three pieces: `exp(-L1 x)/(L1 e)` for `x < -1/L1`, the matching
/// quadratic on `[-1/L1, 1/L1]`, `exp(L1 x)/(L1 e)` for `x > 1/L1`.
/// Twice continuously differentiable with minimum `1/(2 L1)` at 0.
///
/// Declared constants are (L0 = L1, L1): the quadratic piece has a
/// Hessian of exactly L1 at the vertex where the gradient vanishes, so
/// L0 = L1 is the smallest exact intercept (L0 = 1 would fail there).
pub fn make_exp_worstcase(l1: f64) -> Result<Objective> {
    if !(l1 > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "exp_worstcase requires L1 > 1, got {l1}"
        )));
    }
    let b = 1.0 / l1;
    let eval = move |x: &[f64]| -> f64 {
        let x = x[0];
        if x < -b {
            (-l1 * x).exp() / (l1 * std::f64::consts::E)
        } else if x <= b {
            l1 * x * x / 2.0 + 1.0 / (2.0 * l1)
        } else {
            (l1 * x).exp() / (l1 * std::f64::consts::E)
        }
    };
    let grad = move |x: &[f64]| -> Vec<f64> {
        let x = x[0];
        let g = if x < -b {
            -(-l1 * x).exp() / std::f64::consts::E
        } else if x <= b {
            l1 * x
        } else {
            (l1 * x).exp() / std::f64::consts::E
        };
        vec![g]
    };
    let hess = move |x: &[f64]| -> f64 {
        let x = x[0];
        if x < -b {
            l1 * (-l1 * x).exp() / std::f64::consts::E
        } else if x <= b {
            l1
        } else {
            l1 * (l1 * x).exp() / std::f64::consts::E
        }
    };
    let r = (700.0 / l1).min(30.0);
    let constants = SmoothnessConstants { l0: l1, l1, m: None };
    Ok(Objective::new(
        format!("exp_worstcase:L1={l1}"),
        1,
        Some(1.0 / (2.0 * l1)),
        Box::new(eval),
        Box::new(grad),
        Some(Box::new(hess)),
        Some(constants.clone()),
        Some(vec![(-r, r)]),
    )
    .with_certified(vec![constants]))
}

/// The slowly growing worst-case objective, parameterized by `eps > 0`.
///
/// Linear with slope `±2 eps` outside `[-1, 1]`, a quartic blend inside.
/// Minimum 0 at the origin; the gradient magnitude is exactly `2 eps`
/// on `|x| >= 1`.
pub fn make_slow_growth(eps: f64) -> Result<Objective> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "slow_growth requires eps > 0, got {eps}"
        )));
    }
    let eval = move |x: &[f64]| -> f64 {
        let x = x[0];
        if x < -1.0 {
            -2.0 * eps * (x + 1.0) + 5.0 * eps / 4.0
        } else if x <= 1.0 {
            eps / 4.0 * (6.0 * x * x - x.powi(4))
        } else {
            2.0 * eps * (x - 1.0) + 5.0 * eps / 4.0
        }
    };
    let grad = move |x: &[f64]| -> Vec<f64> {
        let x = x[0];
        let g = if x < -1.0 {
            -2.0 * eps
        } else if x <= 1.0 {
            eps * (3.0 * x - x.powi(3))
        } else {
            2.0 * eps
        };
        vec![g]
    };
    let hess = move |x: &[f64]| -> f64 {
        let x = x[0];
        if (-1.0..=1.0).contains(&x) {
            3.0 * eps * (1.0 - x * x)
        } else {
            0.0
        }
    };
    // The Hessian peaks at 3*eps, so L0 = 1 certifies only for eps <= 1/3.
    let constants = SmoothnessConstants {
        l0: 1.0_f64.max(3.0 * eps),
        l1: 2.0,
        m: Some(2.0 * eps),
    };
    Ok(Objective::new(
        format!("slow_growth:eps={eps}"),
        1,
        Some(0.0),
        Box::new(eval),
        Box::new(grad),
        Some(Box::new(hess)),
        Some(constants.clone()),
        Some(vec![(-100.0, 100.0)]),
    )
    .with_certified(vec![constants]))
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

fn derivative_coeffs(coeffs: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, &c)| c * i as f64)
        .collect()
}

/// Global minimum of an even-degree polynomial with positive leading
/// coefficient, found by bracketing the sign changes of the derivative.
fn poly_min(coeffs: &[f64]) -> f64 {
    let deriv = derivative_coeffs(coeffs);
    let lead = *deriv.last().unwrap();
    let bound = 1.0
        + deriv[..deriv.len() - 1]
            .iter()
            .map(|c| (c / lead).abs())
            .fold(0.0, f64::max);
    let grid = linspace(-bound, bound, 20_001);
    let mut best = f64::INFINITY;
    let mut prev = horner(&deriv, grid[0]);
    for w in grid.windows(2) {
        let cur = horner(&deriv, w[1]);
        if prev == 0.0 {
            best = best.min(horner(coeffs, w[0]));
        } else if prev < 0.0 && cur >= 0.0 {
            // descent-to-ascent crossing: a local minimum lives here
            let (mut lo, mut hi) = (w[0], w[1]);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if horner(&deriv, mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            best = best.min(horner(coeffs, 0.5 * (lo + hi)));
        }
        prev = cur;
    }
    if best.is_finite() {
        best
    } else {
        grid.iter().map(|&x| horner(coeffs, x)).fold(f64::INFINITY, f64::min)
    }
}

/// 1-D polynomial objective from ascending coefficients `a_0 + a_1 x + ...`.
///
/// `f_star` is the analytic minimum when the polynomial is bounded below
/// (even degree, positive leading coefficient, or constant); otherwise the
/// objective is flagged unbounded and convergence runs must reject it.
pub fn make_polynomial(coeffs: &[f64]) -> Result<Objective> {
    if coeffs.is_empty() {
        return Err(Error::InvalidParameter(
            "polynomial needs at least one coefficient".into(),
        ));
    }
    let mut trimmed = coeffs.to_vec();
    while trimmed.len() > 1 && *trimmed.last().unwrap() == 0.0 {
        trimmed.pop();
    }
    let degree = trimmed.len() - 1;
    let f_star = if degree == 0 {
        Some(trimmed[0])
    } else if degree % 2 == 0 && *trimmed.last().unwrap() > 0.0 {
        Some(poly_min(&trimmed))
    } else {
        None
    };
    let id = format!(
        "poly:{}",
        coeffs.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
    );
    let deriv = derivative_coeffs(&trimmed);
    let second = derivative_coeffs(&deriv);
    let p = trimmed.clone();
    let d1 = deriv.clone();
    let d2 = second.clone();
    Ok(Objective::new(
        id,
        1,
        f_star,
        Box::new(move |x: &[f64]| horner(&p, x[0])),
        Box::new(move |x: &[f64]| {
            vec![if d1.is_empty() { 0.0 } else { horner(&d1, x[0]) }]
        }),
        Some(Box::new(move |x: &[f64]| {
            if d2.is_empty() { 0.0 } else { horner(&d2, x[0]).abs() }
        })),
        None,
        Some(vec![(-1e3, 1e3)]),
    ))
}

/// Resolves a catalog id like `quartic`, `exp_worstcase:L1=2.0`,
/// `slow_growth:eps=0.1` or `poly:0,0,0,0,1`.
pub fn parse_objective(spec: &str) -> Result<Objective> {
    let (name, args) = match spec.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (spec, None),
    };
    match name {
        "quartic" => {
            if args.is_some() {
                return Err(Error::Parse("quartic takes no parameters".into()));
            }
            Ok(make_quartic())
        }
        "exp_worstcase" => {
            let l1 = parse_named_param(args, "L1")?;
            make_exp_worstcase(l1)
        }
        "slow_growth" => {
            let eps = parse_named_param(args, "eps")?;
            make_slow_growth(eps)
        }
        "poly" => {
            let args = args.ok_or_else(|| {
                Error::Parse("poly requires a coefficient list, e.g. poly:0,0,0,0,1".into())
            })?;
            let coeffs: Result<Vec<f64>> = args
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Parse(format!("bad polynomial coefficient `{t}`")))
                })
                .collect();
            make_polynomial(&coeffs?)
        }
        other => Err(Error::UnknownObjective(other.to_string())),
    }
}

fn parse_named_param(args: Option<&str>, key: &str) -> Result<f64> {
    let args = args.ok_or_else(|| Error::Parse(format!("missing parameter `{key}`")))?;
    let (k, v) = args
        .split_once('=')
        .ok_or_else(|| Error::Parse(format!("expected `{key}=<value>`, got `{args}`")))?;
    if !k.eq_ignore_ascii_case(key) {
        return Err(Error::Parse(format!("unknown parameter `{k}`, expected `{key}`")));
    }
    v.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("bad value `{v}` for `{key}`")))
}

fn region_inside(inner: &[(f64, f64)], outer: &[(f64, f64)]) -> bool {
    inner.len() == outer.len()
        && inner
            .iter()
            .zip(outer)
            .all(|((ilo, ihi), (olo, ohi))| ilo >= olo && ihi <= ohi)
}

/// Fits `(L0, L1)` so that `hessian_norm(x) <= L0 + L1 * grad_norm(x)` at
/// every grid point, minimizing `L0 + c * L1` with `c` the mean gradient
/// norm over the grid.
///
/// With `L0` eliminated (for fixed `L1` the smallest feasible intercept is
/// `max_k(h_k - g_k L1)` clamped at zero) the problem is a 1-D convex
/// piecewise-linear minimization, solved by ternary search.
pub fn fit_constants(
    obj: &Objective,
    region: &[(f64, f64)],
    grid: usize,
) -> Result<SmoothnessConstants> {
    fit_constants_impl(obj, region, grid, None)
}

/// Same as [`fit_constants`] but with `L1` pinned (e.g. 0 for the
/// classical Lipschitz fit).
pub fn fit_constants_fixed_l1(
    obj: &Objective,
    region: &[(f64, f64)],
    grid: usize,
    l1: f64,
) -> Result<SmoothnessConstants> {
    fit_constants_impl(obj, region, grid, Some(l1))
}

fn fit_constants_impl(
    obj: &Objective,
    region: &[(f64, f64)],
    grid: usize,
    fixed_l1: Option<f64>,
) -> Result<SmoothnessConstants> {
    if !obj.has_hessian_norm() {
        return Err(Error::InvalidParameter(format!(
            "objective `{}` does not expose a Hessian norm",
            obj.id()
        )));
    }
    if grid < 2 {
        return Err(Error::InvalidParameter("fit grid must have at least 2 points".into()));
    }
    if let Some(valid) = obj.valid_region() {
        if !region_inside(region, valid) {
            return Err(Error::RegionOutsideValid(region.to_vec()));
        }
    }
    let points: Vec<Vec<f64>> = if region.len() == 1 {
        linspace(region[0].0, region[0].1, grid)
            .into_iter()
            .map(|x| vec![x])
            .collect()
    } else {
        sample_box(region, grid, 0x5eed)
    };
    let samples: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (obj.grad_norm(p), obj.hessian_norm(p).unwrap()))
        .collect();
    let min_l0 = |l1: f64| -> f64 {
        samples
            .iter()
            .map(|(g, h)| h - g * l1)
            .fold(0.0_f64, f64::max)
    };
    let l1 = match fixed_l1 {
        Some(l1) => {
            if l1 < 0.0 {
                return Err(Error::InvalidParameter("L1 must be nonnegative".into()));
            }
            l1
        }
        None => {
            let c = samples.iter().map(|(g, _)| g).sum::<f64>() / samples.len() as f64;
            let objective = |l1: f64| min_l0(l1) + c * l1;
            let l1_hi = samples
                .iter()
                .filter(|(g, _)| *g > 1e-12)
                .map(|(g, h)| h / g)
                .fold(0.0_f64, f64::max);
            let (mut lo, mut hi) = (0.0, l1_hi);
            for _ in 0..300 {
                let a = lo + (hi - lo) / 3.0;
                let b = hi - (hi - lo) / 3.0;
                if objective(a) <= objective(b) {
                    hi = b;
                } else {
                    lo = a;
                }
            }
            let mid = 0.5 * (lo + hi);
            [0.0, mid, l1_hi]
                .into_iter()
                .min_by(|a, b| objective(*a).total_cmp(&objective(*b)))
                .unwrap()
        }
    };
    SmoothnessConstants::new(min_l0(l1), l1)
}
