//! L2 regression loss of a deep linear network: `‖Y - W_l ... W_1 X‖²`
//! (squared Frobenius norm), with the closed-form Kronecker gradient and
//! mixed second-derivative blocks.
//!
//! Matrices are flattened row-major throughout, so the vec identity in
//! use is `vec(A W B) = (A ⊗ Bᵀ) vec(W)`.

use crate::error::{Error, Result};
use crate::objective::Objective;
use crate::util::{l2_norm, mix_stream_key};
use ndarray::linalg::kron;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// Weights `W_1 .. W_l` plus data `X` and labels `Y`, shape-checked so
/// that `W_l ... W_1 X` conforms with `Y`.
#[derive(Debug, Clone)]
pub struct DeepLinearProblem {
    weights: Vec<Array2<f64>>,
    x: Array2<f64>,
    y: Array2<f64>,
}

impl DeepLinearProblem {
    pub fn new(weights: Vec<Array2<f64>>, x: Array2<f64>, y: Array2<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::ShapeMismatch("need at least one layer".into()));
        }
        let mut cols = x.nrows();
        for (i, w) in weights.iter().enumerate() {
            if w.ncols() != cols {
                return Err(Error::ShapeMismatch(format!(
                    "layer {} expects {} input columns, got {}",
                    i + 1,
                    cols,
                    w.ncols()
                )));
            }
            cols = w.nrows();
        }
        if cols != y.nrows() || x.ncols() != y.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "product shape {}x{} does not match labels {}x{}",
                cols,
                x.ncols(),
                y.nrows(),
                y.ncols()
            )));
        }
        Ok(Self { weights, x, y })
    }

    pub fn layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    /// Total number of scalar parameters across all layers.
    pub fn param_dim(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum()
    }

    /// Row-major concatenation of the layer weights.
    pub fn pack(&self) -> Vec<f64> {
        self.weights
            .iter()
            .flat_map(|w| w.iter().copied())
            .collect()
    }

    fn unpack(&self, point: &[f64]) -> Result<Vec<Array2<f64>>> {
        if point.len() != self.param_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.param_dim(),
                got: point.len(),
            });
        }
        let mut out = Vec::with_capacity(self.weights.len());
        let mut offset = 0;
        for w in &self.weights {
            let (r, c) = w.dim();
            let slice = &point[offset..offset + r * c];
            out.push(Array2::from_shape_vec((r, c), slice.to_vec()).unwrap());
            offset += r * c;
        }
        Ok(out)
    }

    fn residual(&self, ws: &[Array2<f64>]) -> Array2<f64> {
        let mut acc = self.x.clone();
        for w in ws {
            acc = w.dot(&acc);
        }
        acc - &self.y
    }

    pub fn loss_at(&self, point: &[f64]) -> Result<f64> {
        let ws = self.unpack(point)?;
        let r = self.residual(&ws);
        Ok(r.iter().map(|v| v * v).sum())
    }

    pub fn loss(&self) -> f64 {
        self.loss_at(&self.pack()).unwrap()
    }

    /// `A_i = W_l ... W_{i+1}` (identity for `i = l`); layers are 1-based.
    fn suffix(&self, ws: &[Array2<f64>], i: usize) -> Array2<f64> {
        let d_out = ws.last().unwrap().nrows();
        let mut acc = Array2::eye(d_out);
        for w in ws.iter().skip(i).rev() {
            // building W_l ... W_{i+1} left to right from the top
            acc = acc.dot(w);
        }
        acc
    }

    /// `B_i = W_{i-1} ... W_1 X` (just `X` for `i = 1`).
    fn prefix(&self, ws: &[Array2<f64>], i: usize) -> Array2<f64> {
        let mut acc = self.x.clone();
        for w in ws.iter().take(i - 1) {
            acc = w.dot(&acc);
        }
        acc
    }

    /// Per-layer gradient `2 A_iᵀ R B_iᵀ` in matrix form.
    pub fn grad_layers(&self, point: &[f64]) -> Result<Vec<Array2<f64>>> {
        let ws = self.unpack(point)?;
        let r = self.residual(&ws);
        Ok((1..=ws.len())
            .map(|i| {
                let a = self.suffix(&ws, i);
                let b = self.prefix(&ws, i);
                2.0 * a.t().dot(&r).dot(&b.t())
            })
            .collect())
    }

    pub fn grad_packed(&self, point: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .grad_layers(point)?
            .iter()
            .flat_map(|g| g.iter().copied())
            .collect())
    }

    /// Gradient assembled literally as `2 (A_i ⊗ B_iᵀ)ᵀ vec(R)` per layer.
    ///
    /// Forms the dense Kronecker factor, so it is for verification only;
    /// [`grad_packed`](Self::grad_packed) is the equivalent matrix route.
    pub fn grad_via_kronecker(&self, point: &[f64]) -> Result<Vec<f64>> {
        let ws = self.unpack(point)?;
        let r = self.residual(&ws);
        let vec_r = Array1::from_iter(r.iter().copied());
        let mut out = Vec::with_capacity(point.len());
        for i in 1..=ws.len() {
            let a = self.suffix(&ws, i);
            let b = self.prefix(&ws, i);
            let factor = kron(&a, &b.t().to_owned());
            let g = factor.t().dot(&vec_r) * 2.0;
            out.extend(g.iter().copied());
        }
        Ok(out)
    }

    /// Mixed second-derivative block `∂² L / ∂vec(W_i) ∂vec(W_j)` for
    /// `i <= j` (1-based). The curvature term through the weight product
    /// vanishes on the diagonal `i = j`.
    pub fn hessian_block(&self, point: &[f64], i: usize, j: usize) -> Result<Array2<f64>> {
        let ws = self.unpack(point)?;
        let l = ws.len();
        if i == 0 || j == 0 || i > l || j > l || i > j {
            return Err(Error::LayerIndexOutOfRange { i, j, layers: l });
        }
        let a_i = self.suffix(&ws, i);
        let b_i = self.prefix(&ws, i);
        if i == j {
            // Gauss-Newton only: 2 (A_iᵀ A_i ⊗ B_i B_iᵀ)
            return Ok(2.0 * kron(&a_i.t().dot(&a_i), &b_i.dot(&b_i.t())));
        }
        let a_j = self.suffix(&ws, j);
        let b_j = self.prefix(&ws, j);
        let r = self.residual(&ws);
        let term1 = kron(&a_i.t().to_owned(), &b_i).dot(&kron(&a_j, &b_j.t().to_owned()));
        // E = W_{j-1} ... W_{i+1}, identity when j = i + 1
        let mut e = Array2::eye(ws[i].ncols());
        for w in ws.iter().take(j - 1).skip(i) {
            e = w.dot(&e);
        }
        let c_t = b_i.dot(&r.t()).dot(&a_j);
        let (dj, djm1) = ws[j - 1].dim();
        let term2 = kron(&e.t().to_owned(), &c_t).dot(&commutation_matrix(dj, djm1));
        Ok(2.0 * (term1 + term2))
    }
}

/// Permutation matrix sending the row-major vec of an `m x n` matrix to
/// the row-major vec of its transpose.
fn commutation_matrix(m: usize, n: usize) -> Array2<f64> {
    let mut k = Array2::zeros((m * n, m * n));
    for p in 0..m {
        for q in 0..n {
            k[(q * m + p, p * n + q)] = 1.0;
        }
    }
    k
}

/// Largest Hessian singular value estimated by power iteration on
/// finite-difference Hessian-vector products of `grad`.
pub fn spectral_norm_fd<F>(grad: F, x: &[f64], iters: usize, tol: f64) -> f64
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let dim = x.len();
    let step = 1e-5 * (1.0 + l2_norm(x));
    let hvp = |v: &[f64]| -> Vec<f64> {
        let plus: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + step * b).collect();
        let minus: Vec<f64> = x.iter().zip(v).map(|(a, b)| a - step * b).collect();
        let gp = grad(&plus);
        let gm = grad(&minus);
        gp.iter()
            .zip(&gm)
            .map(|(p, m)| (p - m) / (2.0 * step))
            .collect()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(mix_stream_key(0x9e57, dim as u64, 0));
    let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = l2_norm(&v).max(f64::MIN_POSITIVE);
    v.iter_mut().for_each(|c| *c /= norm);
    let mut lambda = 0.0;
    for _ in 0..iters {
        let hv = hvp(&v);
        let next = l2_norm(&hv);
        if next == 0.0 {
            return 0.0;
        }
        v = hv.iter().map(|c| c / next).collect();
        if (next - lambda).abs() <= tol * next.max(1.0) {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// Wraps the problem as an [`Objective`] over the concatenated row-major
/// weight vector. The Hessian norm uses 50 power iterations at 1e-8.
pub fn make_deep_linear(problem: DeepLinearProblem) -> Objective {
    let problem = Arc::new(problem);
    let dim = problem.param_dim();
    let p_eval = Arc::clone(&problem);
    let p_grad = Arc::clone(&problem);
    let p_hess = Arc::clone(&problem);
    Objective::new(
        "deep_linear",
        dim,
        Some(0.0),
        Box::new(move |x: &[f64]| p_eval.loss_at(x).expect("dimension checked")),
        Box::new(move |x: &[f64]| p_grad.grad_packed(x).expect("dimension checked")),
        Some(Box::new(move |x: &[f64]| {
            let p = Arc::clone(&p_hess);
            spectral_norm_fd(move |z| p.grad_packed(z).unwrap(), x, 50, 1e-8)
        })),
        None,
        None,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::finite_diff_grad;
    use approx::assert_relative_eq;

    fn arr(rows: usize, cols: usize, data: &[f64]) -> Array2<f64> {
        Array2::from_shape_vec((rows, cols), data.to_vec()).unwrap()
    }

    fn random_problem(dims: &[usize], n: usize, seed: u64) -> DeepLinearProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gen = |r: usize, c: usize| {
            Array2::from_shape_fn((r, c), |_| rng.gen_range(-1.0..1.0_f64))
        };
        let weights: Vec<Array2<f64>> = dims
            .windows(2)
            .map(|w| gen(w[1], w[0]))
            .collect();
        let x = gen(dims[0], n);
        let y = gen(*dims.last().unwrap(), n);
        DeepLinearProblem::new(weights, x, y).unwrap()
    }

    #[test]
    fn identity_perfect_fit() {
        let x = arr(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let p = DeepLinearProblem::new(vec![Array2::eye(2)], x.clone(), x).unwrap();
        assert_eq!(p.loss(), 0.0);
        assert!(p.grad_packed(&p.pack()).unwrap().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn scalar_chain_matches_finite_differences() {
        // W1 = 2, W2 = 3, X = 1, Y = 0: loss (3*2*1)^2 = 36
        let p = DeepLinearProblem::new(
            vec![arr(1, 1, &[2.0]), arr(1, 1, &[3.0])],
            arr(1, 1, &[1.0]),
            arr(1, 1, &[0.0]),
        )
        .unwrap();
        assert_eq!(p.loss(), 36.0);
        let point = p.pack();
        let grad = p.grad_packed(&point).unwrap();
        // d/dW1 (3 W1)^2 = 2*3*6 = 36
        assert_relative_eq!(grad[0], 36.0, max_relative = 1e-12);
        let obj = make_deep_linear(p.clone());
        let fd = finite_diff_grad(&obj, &point, 1e-6);
        for (a, b) in grad.iter().zip(&fd) {
            assert_relative_eq!(a, b, max_relative = 1e-6);
        }
        // diagonal block is the pure Gauss-Newton term 2 (W2 X)^2
        let h11 = p.hessian_block(&point, 1, 1).unwrap();
        assert_relative_eq!(h11[(0, 0)], 2.0 * (3.0_f64 * 1.0).powi(2), max_relative = 1e-12);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let res = DeepLinearProblem::new(
            vec![arr(2, 2, &[1.0; 4]), arr(1, 3, &[1.0; 3])],
            arr(2, 2, &[1.0; 4]),
            arr(1, 2, &[0.0; 2]),
        );
        assert!(res.is_err());
    }

    #[test]
    fn kronecker_and_matrix_gradients_agree_with_fd() {
        let p = random_problem(&[2, 3, 2, 2], 3, 7);
        let point = p.pack();
        let matrix_route = p.grad_packed(&point).unwrap();
        let kron_route = p.grad_via_kronecker(&point).unwrap();
        for (a, b) in matrix_route.iter().zip(&kron_route) {
            assert_relative_eq!(a, b, max_relative = 1e-12, epsilon = 1e-12);
        }
        let obj = make_deep_linear(p.clone());
        let fd = finite_diff_grad(&obj, &point, 1e-6);
        for (a, b) in matrix_route.iter().zip(&fd) {
            assert_relative_eq!(a, b, max_relative = 1e-5, epsilon = 1e-7);
        }
    }

    fn fd_hessian_block(p: &DeepLinearProblem, point: &[f64], i: usize, j: usize) -> Array2<f64> {
        // block of the full finite-difference Hessian: rows = layer i params,
        // cols = layer j params
        let offsets: Vec<usize> = p
            .weights()
            .iter()
            .scan(0, |acc, w| {
                let cur = *acc;
                *acc += w.len();
                Some(cur)
            })
            .collect();
        let (ri, ci) = (offsets[i - 1], p.weights()[i - 1].len());
        let (rj, cj) = (offsets[j - 1], p.weights()[j - 1].len());
        let h = 1e-5;
        let mut block = Array2::zeros((ci, cj));
        for b in 0..cj {
            let mut plus = point.to_vec();
            plus[rj + b] += h;
            let mut minus = point.to_vec();
            minus[rj + b] -= h;
            let gp = p.grad_packed(&plus).unwrap();
            let gm = p.grad_packed(&minus).unwrap();
            for a in 0..ci {
                block[(a, b)] = (gp[ri + a] - gm[ri + a]) / (2.0 * h);
            }
        }
        block
    }

    #[test]
    fn hessian_blocks_match_finite_differences() {
        let p = random_problem(&[2, 3, 2, 2], 3, 13);
        let point = p.pack();
        for i in 1..=3 {
            for j in i..=3 {
                let analytic = p.hessian_block(&point, i, j).unwrap();
                let fd = fd_hessian_block(&p, &point, i, j);
                for (a, b) in analytic.iter().zip(fd.iter()) {
                    assert_relative_eq!(a, b, max_relative = 1e-4, epsilon = 1e-5);
                }
            }
        }
        assert!(p.hessian_block(&point, 2, 1).is_err());
        assert!(p.hessian_block(&point, 0, 1).is_err());
        assert!(p.hessian_block(&point, 1, 4).is_err());
    }

    #[test]
    fn zero_residual_kills_curvature_term() {
        // make Y equal the network output so R = 0
        let mut p = random_problem(&[2, 2, 2, 2], 2, 29);
        let ws = p.weights.clone();
        let mut out = p.x.clone();
        for w in &ws {
            out = w.dot(&out);
        }
        p.y = out;
        let point = p.pack();
        for i in 1..3 {
            for j in (i + 1)..=3 {
                let full = p.hessian_block(&point, i, j).unwrap();
                // with R = 0 the block reduces to the Gauss-Newton product
                let ws = p.unpack(&point).unwrap();
                let gn = kron(&p.suffix(&ws, i).t().to_owned(), &p.prefix(&ws, i))
                    .dot(&kron(&p.suffix(&ws, j), &p.prefix(&ws, j).t().to_owned()))
                    * 2.0;
                for (a, b) in full.iter().zip(gn.iter()) {
                    assert_relative_eq!(a, b, max_relative = 1e-10, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn spectral_norm_matches_quadratic() {
        // f(x) = 0.5 * 3 x^2 in each coordinate: Hessian = 3 I
        let grad = |x: &[f64]| x.iter().map(|v| 3.0 * v).collect::<Vec<_>>();
        let norm = spectral_norm_fd(grad, &[0.5, -1.0, 2.0], 50, 1e-8);
        assert_relative_eq!(norm, 3.0, max_relative = 1e-6);
    }
}
