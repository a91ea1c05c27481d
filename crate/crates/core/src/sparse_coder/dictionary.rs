//! Dictionary update under per-codeword norm bounds, solved through the
//! Lagrange dual.
//!
//! For multipliers `lambda >= 0` (one per codeword) the primal minimizer is
//! `D = X S^T (S S^T + diag(lambda))^-1` and the dual is
//!
//! ```text
//! g(lambda) = ||X||^2 - tr(X S^T (S S^T + diag(lambda))^-1 S X^T) - C sum(lambda),
//! ```
//!
//! with gradient `||d_l||^2 - C` and Hessian
//! `-2 (M^-1 B^T B M^-1) .* M^-1`, where `M = S S^T + diag(lambda)` and
//! `B = X S^T`. The dual is maximized by projected Newton with Armijo
//! backtracking; coordinate bisection takes over when the Newton system is
//! not usable.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::Dictionary;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAX_NEWTON: usize = 100;
const MAX_BISECTION_SWEEPS: usize = 200;

#[derive(Debug, Clone)]
pub struct DictionaryUpdate<T: Scalar> {
    pub dictionary: Dictionary<T>,
    /// One multiplier per codeword; zero for unused codewords.
    pub multipliers: DVector<T>,
    /// Set when `S S^T + diag(lambda)` had to be ridged.
    pub degenerate: bool,
    /// Set when the previous dictionary was kept because the new solution did
    /// not improve on it.
    pub kept_previous: bool,
}

/// `sum_i ||x_i - D s_i||^2` over columns.
pub fn reconstruction_error<T: Scalar>(
    x: &DMatrix<T>,
    dict: &DMatrix<T>,
    codes: &DMatrix<T>,
) -> Result<T> {
    if dict.nrows() != x.nrows() || dict.ncols() != codes.nrows() || x.ncols() != codes.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "points {}x{}, dictionary {}x{}, codes {}x{}",
            x.nrows(),
            x.ncols(),
            dict.nrows(),
            dict.ncols(),
            codes.nrows(),
            codes.ncols()
        )));
    }
    Ok((x - dict * codes).norm_squared())
}

struct DualProblem<T: Scalar> {
    gram: DMatrix<T>,
    cross: DMatrix<T>,
    cross_gram: DMatrix<T>,
    x_norm: T,
    bound: T,
    ridge: T,
}

struct DualPoint<T: Scalar> {
    inverse: DMatrix<T>,
    dict: DMatrix<T>,
    value: T,
    grad: DVector<T>,
    ridged: bool,
}

impl<T: Scalar> DualProblem<T> {
    fn factor(&self, lambda: &DVector<T>) -> (Cholesky<T, Dyn>, bool) {
        let mut m = self.gram.clone();
        for (l, &v) in lambda.iter().enumerate() {
            m[(l, l)] += v;
        }
        let diag_max = m.diagonal().amax();
        if let Some(ch) = Cholesky::new(m.clone()) {
            let pivot_min = ch.l_dirty().diagonal().min();
            if pivot_min * pivot_min > T::default_epsilon() * T::count(m.nrows()) * diag_max {
                return (ch, false);
            }
        }
        for l in 0..m.nrows() {
            m[(l, l)] += self.ridge;
        }
        let ch = Cholesky::new(m).expect("ridged Gram matrix is positive definite");
        (ch, true)
    }

    fn eval(&self, lambda: &DVector<T>) -> DualPoint<T> {
        let (ch, ridged) = self.factor(lambda);
        let inverse = ch.inverse();
        let dict = &self.cross * &inverse;
        let grad = DVector::from_iterator(
            lambda.len(),
            dict.column_iter().map(|c| c.norm_squared() - self.bound),
        );
        let trace = self.cross_gram.component_mul(&inverse).sum();
        let value = self.x_norm - trace - self.bound * lambda.sum();
        DualPoint {
            inverse,
            dict,
            value,
            grad,
            ridged,
        }
    }

    /// Projected-gradient KKT residual for `lambda >= 0`.
    fn residual(lambda: &DVector<T>, grad: &DVector<T>) -> T {
        lambda
            .iter()
            .zip(grad.iter())
            .fold(T::zero(), |acc, (&l, &g)| {
                let r = if l > T::zero() {
                    g.abs()
                } else {
                    g.max(T::zero())
                };
                acc.max(r)
            })
    }

    fn newton(&self, mut lambda: DVector<T>, tol: T) -> Option<DVector<T>> {
        let u = lambda.len();
        for _ in 0..MAX_NEWTON {
            let p = self.eval(&lambda);
            if Self::residual(&lambda, &p.grad) <= tol {
                return Some(lambda);
            }
            let free: Vec<usize> = (0..u)
                .filter(|&l| lambda[l] > T::zero() || p.grad[l] > T::zero())
                .collect();
            let weighted = &p.inverse * &self.cross_gram * &p.inverse;
            // negated Hessian on the free block
            let neg_h = DMatrix::from_fn(free.len(), free.len(), |a, b| {
                let (i, j) = (free[a], free[b]);
                T::lit(2.0) * weighted[(i, j)] * p.inverse[(i, j)]
            });
            let rhs = DVector::from_iterator(free.len(), free.iter().map(|&l| p.grad[l]));
            let dir = Cholesky::new(neg_h)?.solve(&rhs);

            let mut t = T::one();
            let mut accepted = false;
            for _ in 0..40 {
                let mut trial = lambda.clone();
                for (a, &l) in free.iter().enumerate() {
                    trial[l] = (lambda[l] + t * dir[a]).max(T::zero());
                }
                let q = self.eval(&trial);
                let gain = p.grad.dot(&(&trial - &lambda));
                if q.value >= p.value + T::lit(1e-4) * gain {
                    lambda = trial;
                    accepted = true;
                    break;
                }
                t *= T::lit(0.5);
            }
            if !accepted {
                return None;
            }
        }
        let p = self.eval(&lambda);
        (Self::residual(&lambda, &p.grad) <= tol).then_some(lambda)
    }

    /// Cyclic per-coordinate root finding of `||d_l(lambda_l)||^2 = C`;
    /// each gradient entry is non-increasing in its own multiplier.
    fn bisection(&self, mut lambda: DVector<T>, tol: T) -> Option<DVector<T>> {
        let u = lambda.len();
        let grad_at = |lambda: &DVector<T>, l: usize, v: T| {
            let mut trial = lambda.clone();
            trial[l] = v;
            self.eval(&trial).grad[l]
        };
        for _ in 0..MAX_BISECTION_SWEEPS {
            let p = self.eval(&lambda);
            if Self::residual(&lambda, &p.grad) <= tol {
                return Some(lambda);
            }
            for l in 0..u {
                if grad_at(&lambda, l, T::zero()) <= T::zero() {
                    lambda[l] = T::zero();
                    continue;
                }
                let mut hi = lambda[l].max(T::one());
                while grad_at(&lambda, l, hi) > T::zero() {
                    hi *= T::lit(2.0);
                    if !hi.is_finite() {
                        return None;
                    }
                }
                let mut lo = T::zero();
                for _ in 0..200 {
                    let mid = (lo + hi) * T::lit(0.5);
                    if grad_at(&lambda, l, mid) > T::zero() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= T::default_epsilon() * hi {
                        break;
                    }
                }
                lambda[l] = (lo + hi) * T::lit(0.5);
            }
        }
        None
    }
}

/// Minimizes `sum_i ||x_i - D s_i||^2` subject to `||d_l||^2 <= C`.
///
/// `x` is `d x n` (points as columns) and `codes` is `m x n`. Codewords whose
/// code row is entirely zero are not determined by the data; they keep their
/// value from `previous` (zero when there is none). When `previous` is given
/// and the new dictionary does not reduce the reconstruction error, the
/// previous dictionary is returned.
pub fn dictionary_update<T: Scalar>(
    x: &DMatrix<T>,
    codes: &DMatrix<T>,
    bound: T,
    tol: T,
    previous: Option<&Dictionary<T>>,
) -> Result<DictionaryUpdate<T>> {
    if !(bound > T::zero()) {
        return Err(Error::param("C", "> 0"));
    }
    if !(tol > T::zero()) {
        return Err(Error::param("tol", "> 0"));
    }
    let (d, n) = x.shape();
    let m = codes.nrows();
    if codes.ncols() != n || m == 0 {
        return Err(Error::DimensionMismatch(format!(
            "points are {d}x{n}, codes are {m}x{}",
            codes.ncols()
        )));
    }
    if let Some(prev) = previous {
        if prev.dim() != d || prev.size() != m {
            return Err(Error::DimensionMismatch(format!(
                "previous dictionary is {}x{}, expected {d}x{m}",
                prev.dim(),
                prev.size()
            )));
        }
    }

    let used: Vec<usize> = (0..m)
        .filter(|&l| codes.row(l).iter().any(|v| *v != T::zero()))
        .collect();
    let mut columns = match previous {
        Some(prev) => prev.columns().clone(),
        None => DMatrix::zeros(d, m),
    };
    let mut multipliers = DVector::zeros(m);
    let mut degenerate = false;

    if !used.is_empty() {
        let s_used = codes.select_rows(&used);
        let gram = &s_used * s_used.transpose();
        let cross = x * s_used.transpose();
        let cross_gram = cross.tr_mul(&cross);
        let scale = gram.trace() / T::count(used.len());
        let dual = DualProblem {
            gram,
            cross,
            cross_gram,
            x_norm: x.norm_squared(),
            bound,
            ridge: T::lit(1e-10) * scale.max(T::one()),
        };
        let tol_c = tol * (T::one() + bound);

        // constraint inactive everywhere: unconstrained least squares
        let zero = DVector::zeros(used.len());
        let at_zero = dual.eval(&zero);
        let lambda = if !at_zero.ridged && DualProblem::residual(&zero, &at_zero.grad) <= tol_c {
            zero
        } else {
            let start = DVector::from_element(used.len(), T::one());
            match dual.newton(start.clone(), tol_c) {
                Some(l) => l,
                None => dual.bisection(start, tol_c).ok_or(Error::NonConvergence {
                    routine: "dictionary dual",
                    iterations: MAX_NEWTON + MAX_BISECTION_SWEEPS,
                })?,
            }
        };
        let point = dual.eval(&lambda);
        degenerate = point.ridged;
        for (a, &l) in used.iter().enumerate() {
            let mut col = point.dict.column(a).into_owned();
            let norm2 = col.norm_squared();
            if norm2 > bound {
                col *= (bound / norm2).sqrt();
            }
            columns.set_column(l, &col);
            multipliers[l] = lambda[a];
        }
    }

    // unused codewords inherited from an infeasible previous value get clipped
    for l in 0..m {
        let norm2 = columns.column(l).norm_squared();
        if norm2 > bound {
            let factor = (bound / norm2).sqrt();
            columns.column_mut(l).scale_mut(factor);
        }
    }
    let dictionary = Dictionary::new(columns, bound)?;

    if let Some(prev) = previous {
        let new_err = reconstruction_error(x, dictionary.columns(), codes)?;
        let old_err = reconstruction_error(x, prev.columns(), codes)?;
        if new_err > old_err {
            return Ok(DictionaryUpdate {
                dictionary: prev.clone(),
                multipliers,
                degenerate,
                kept_previous: true,
            });
        }
    }
    Ok(DictionaryUpdate {
        dictionary,
        multipliers,
        degenerate,
        kept_previous: false,
    })
}
