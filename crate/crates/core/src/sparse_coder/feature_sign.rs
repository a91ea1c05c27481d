//! Feature-sign search for `s^T A s - 2 b^T s + c + alpha ||s||_1`.
//!
//! Active-set method: guess the signs of the nonzero coefficients, minimize
//! the resulting smooth quadratic on the active set, then run a discrete
//! line search over the sign changes between the current point and that
//! minimizer. Rank-deficient active blocks are handled through a symmetric
//! eigendecomposition: the range part takes the least-norm Newton step, and
//! a descent component in the null space is followed to the first sign
//! change.

use nalgebra::{DVector, SymmetricEigen};

use super::{QuadL1Problem, SparseCode};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Solves the problem to subgradient tolerance `tol`: on return
/// `|2(As - b)_j| <= alpha + tol` where `s_j = 0` and
/// `|2(As - b)_j + alpha sign(s_j)| <= tol` elsewhere.
pub fn feature_sign_solve<T: Scalar>(problem: &QuadL1Problem<T>, tol: T) -> Result<SparseCode<T>> {
    if !(tol > T::zero()) {
        return Err(Error::param("tol", "> 0"));
    }
    let m = problem.dim();
    let alpha = problem.alpha();
    let max_rounds = 10 * m.max(1);

    let mut x = DVector::<T>::zeros(m);
    let mut theta = vec![T::zero(); m];

    for _ in 0..max_rounds {
        let grad = problem.gradient(&x);
        // most violating zero coefficient
        let candidate = (0..m)
            .filter(|&j| x[j] == T::zero())
            .max_by(|&a, &b| grad[a].abs().partial_cmp(&grad[b].abs()).expect("finite"));
        match candidate {
            Some(j) if grad[j].abs() > alpha + tol => theta[j] = -grad[j].signum(),
            _ => return Ok(SparseCode { values: x }),
        }

        let mut settled = false;
        for _ in 0..max_rounds {
            step(problem, &mut x, &mut theta, tol)?;
            let grad = problem.gradient(&x);
            let worst = (0..m)
                .filter(|&j| theta[j] != T::zero())
                .map(|j| (grad[j] + alpha * theta[j]).abs())
                .fold(T::zero(), T::max);
            if worst <= tol {
                settled = true;
                break;
            }
        }
        if !settled {
            return Err(Error::NonConvergence {
                routine: "feature-sign search",
                iterations: max_rounds,
            });
        }
    }
    Err(Error::NonConvergence {
        routine: "feature-sign search",
        iterations: max_rounds,
    })
}

/// One feature-sign step on the active set `{j : theta_j != 0}`.
fn step<T: Scalar>(
    problem: &QuadL1Problem<T>,
    x: &mut DVector<T>,
    theta: &mut [T],
    tol: T,
) -> Result<()> {
    let active: Vec<usize> = (0..x.len()).filter(|&j| theta[j] != T::zero()).collect();
    let k = active.len();
    let a_hat = problem
        .quadratic()
        .select_rows(&active)
        .select_columns(&active);
    let x_hat = DVector::from_iterator(k, active.iter().map(|&j| x[j]));
    let th = DVector::from_iterator(k, active.iter().map(|&j| theta[j]));
    let half_alpha = problem.alpha() * T::lit(0.5);
    let rhs = DVector::from_iterator(k, active.iter().map(|&j| problem.linear()[j]))
        - th.clone() * half_alpha;
    // minus half the gradient of the sign-consistent quadratic
    let g = &rhs - &a_hat * &x_hat;

    let eig = SymmetricEigen::new(a_hat.clone());
    let top = eig.eigenvalues.amax();
    let neg_tol = T::default_epsilon().sqrt() * top.max(T::one());
    let low = eig.eigenvalues.min();
    if low < -neg_tol {
        return Err(Error::NotPositiveSemidefinite(format!(
            "active block has eigenvalue {low}"
        )));
    }
    let null_tol =
        T::default_epsilon() * T::count(k) * T::lit(100.0) * top.max(T::default_epsilon());

    let mut newton = DVector::zeros(k);
    let mut null_dir = DVector::zeros(k);
    for (e, v) in eig.eigenvalues.iter().zip(eig.eigenvectors.column_iter()) {
        let coef = v.dot(&g);
        if *e > null_tol {
            newton.axpy(coef / *e, &v, T::one());
        } else {
            null_dir.axpy(coef, &v, T::one());
        }
    }

    let objective_at = |xh: &DVector<T>| -> T {
        let mut full = x.clone();
        for (pos, &j) in active.iter().enumerate() {
            full[j] = xh[pos];
        }
        problem.objective(&full)
    };

    let new_hat = if null_dir.amax() * T::lit(8.0) > tol {
        // flat curvature along the null component: the sign-consistent
        // objective decreases linearly until some coefficient reaches zero
        let curvature = null_dir.dot(&(&a_hat * &null_dir));
        let slope = null_dir.dot(&g);
        let mut t = if curvature > T::zero() {
            slope / curvature
        } else {
            T::max_value().expect("bounded scalar")
        };
        let mut hit = None;
        for pos in 0..k {
            let (xv, dv) = (x_hat[pos], null_dir[pos]);
            if xv != T::zero() && xv * dv < T::zero() {
                let tc = -xv / dv;
                if tc < t {
                    t = tc;
                    hit = Some(pos);
                }
            }
        }
        if hit.is_none() && curvature <= T::zero() {
            return Err(Error::Unbounded(
                "descent direction with no curvature and no sign change".into(),
            ));
        }
        let mut next = &x_hat + &null_dir * t;
        if let Some(pos) = hit {
            next[pos] = T::zero();
        }
        next
    } else {
        line_search(&x_hat, &(&x_hat + &newton), objective_at)
    };

    for (pos, &j) in active.iter().enumerate() {
        x[j] = new_hat[pos];
        theta[j] = if new_hat[pos] == T::zero() {
            T::zero()
        } else {
            new_hat[pos].signum()
        };
    }
    Ok(())
}

/// Discrete line search on the segment `[from, to]`: evaluates the endpoint
/// and every point where a nonzero coefficient changes sign, keeping the best.
fn line_search<T: Scalar>(
    from: &DVector<T>,
    to: &DVector<T>,
    objective: impl Fn(&DVector<T>) -> T,
) -> DVector<T> {
    let mut best = to.clone();
    let mut best_val = objective(to);
    for pos in 0..from.len() {
        let (a, b) = (from[pos], to[pos]);
        if a != T::zero() && a.signum() != b.signum() {
            let t = a / (a - b);
            let mut point = from + (to - from) * t;
            // every coordinate crossing at this same t lands on zero
            for q in 0..from.len() {
                let (aq, bq) = (from[q], to[q]);
                if aq != T::zero() && aq.signum() != bq.signum() && aq / (aq - bq) == t {
                    point[q] = T::zero();
                }
            }
            let val = objective(&point);
            if val < best_val {
                best = point;
                best_val = val;
            }
        }
    }
    best
}
