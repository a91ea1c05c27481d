//! Per-neighborhood ridge predictors from codes to scores, and the ranking
//! score system they induce.
//!
//! For neighborhood `i` with local codes `S_i` (`m x k`) and local scores
//! `f_i`, the ridge fit `min_w ||f_i - w^T S_i||^2 + beta ||w||^2` has the
//! closed form `w_i = Phi_i f_i` with `Phi_i = (S_i S_i^T + beta I)^-1 S_i`.
//! Substituting back leaves the quadratic form `f_i^T L_i f_i` with
//!
//! ```text
//! L_i = (I - Phi_i^T S_i)(I - Phi_i^T S_i)^T + beta Phi_i^T Phi_i.
//! ```
//!
//! Summing the scattered blocks gives `M = sum_i H_i L_i H_i^T`, and the
//! scores minimize `h(f) = gamma f^T M f + delta (f - y)^T diag(lambda) (f - y)`.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::dataset_io::QueryIndicator;
use crate::error::{Error, Result};
use crate::neighbors::{gather_local_codes, gather_local_scores, NeighborhoodIndex};
use crate::parallel::Executor;
use crate::scalar::Scalar;

/// Per-neighborhood `Phi_i`, `L_i` and the assembled `M`.
#[derive(Debug, Clone)]
pub struct LocalRankingCache<T: Scalar> {
    pub phi: Vec<DMatrix<T>>,
    pub local: Vec<DMatrix<T>>,
    pub global: DMatrix<T>,
}

/// Solution of the score system.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector<T: Scalar> {
    pub f: DVector<T>,
    pub y: T,
    /// Set when the system was singular and a ridge was added.
    pub ridged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalPredictor<T: Scalar> {
    pub w: DVector<T>,
}

fn check_beta<T: Scalar>(beta: T) -> Result<()> {
    if beta > T::zero() {
        Ok(())
    } else {
        Err(Error::param("beta", "> 0"))
    }
}

/// `Phi_i = (S_i S_i^T + beta I)^-1 S_i` by Cholesky solve.
pub fn compute_phi<T: Scalar>(local_codes: &DMatrix<T>, beta: T) -> Result<DMatrix<T>> {
    check_beta(beta)?;
    let m = local_codes.nrows();
    let mut system = local_codes * local_codes.transpose();
    for l in 0..m {
        system[(l, l)] += beta;
    }
    let chol = Cholesky::new(system)
        .ok_or_else(|| Error::NotPositiveSemidefinite("S S^T + beta I failed to factor".into()))?;
    Ok(chol.solve(local_codes))
}

/// `L_i = (I - Phi^T S)(I - Phi^T S)^T + beta Phi^T Phi`, symmetrized.
pub fn compute_local_l<T: Scalar>(
    local_codes: &DMatrix<T>,
    phi: &DMatrix<T>,
    beta: T,
) -> Result<DMatrix<T>> {
    if phi.shape() != local_codes.shape() {
        return Err(Error::DimensionMismatch(format!(
            "phi is {}x{}, local codes are {}x{}",
            phi.nrows(),
            phi.ncols(),
            local_codes.nrows(),
            local_codes.ncols()
        )));
    }
    let k = local_codes.ncols();
    let residual = DMatrix::identity(k, k) - phi.tr_mul(local_codes);
    let l = &residual * residual.transpose() + phi.tr_mul(phi) * beta;
    Ok((&l + l.transpose()) * T::lit(0.5))
}

/// `M = sum_i H_i L_i H_i^T` by scattering each block through the index.
pub fn assemble_global<T: Scalar>(
    local: &[DMatrix<T>],
    index: &NeighborhoodIndex,
    n: usize,
) -> Result<DMatrix<T>> {
    if local.len() != index.len() || index.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} local blocks, index over {} points, n = {n}",
            local.len(),
            index.len()
        )));
    }
    let k = index.k();
    let mut global = DMatrix::zeros(n, n);
    for (i, block) in local.iter().enumerate() {
        if block.shape() != (k, k) {
            return Err(Error::DimensionMismatch(format!(
                "block {i} is {}x{}, expected {k}x{k}",
                block.nrows(),
                block.ncols()
            )));
        }
        let list = index.neighbors(i);
        for (a, &p) in list.iter().enumerate() {
            for (b, &q) in list.iter().enumerate() {
                global[(p, q)] += block[(a, b)];
            }
        }
    }
    Ok(global)
}

/// Solves `(gamma M + delta diag(lambda)) f = delta y lambda`.
///
/// When the system is singular (e.g. `gamma = 0` leaves non-query rows empty)
/// a ridge of `1e-10 * trace / n` is added and the result is flagged.
pub fn solve_scores<T: Scalar>(
    global: &DMatrix<T>,
    lambda: &QueryIndicator,
    y: T,
    gamma: T,
    delta: T,
) -> Result<ScoreVector<T>> {
    let n = global.nrows();
    if global.ncols() != n || lambda.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "M is {}x{}, query indicator has {} entries",
            global.nrows(),
            global.ncols(),
            lambda.len()
        )));
    }
    if !(gamma >= T::zero()) {
        return Err(Error::param("gamma", ">= 0"));
    }
    if !(delta > T::zero()) {
        return Err(Error::param("delta", "> 0"));
    }
    let mut system = global * gamma;
    let mut rhs = DVector::zeros(n);
    for i in lambda.queries() {
        system[(i, i)] += delta;
        rhs[i] = delta * y;
    }
    let diag_max = system.diagonal().amax();
    let well_posed = Cholesky::new(system.clone()).filter(|ch| {
        let p = ch.l_dirty().diagonal().min();
        p * p > T::default_epsilon() * T::count(n) * diag_max
    });
    let (chol, ridged) = match well_posed {
        Some(ch) => (ch, false),
        None => {
            let eps = T::lit(1e-10) * system.trace() / T::count(n);
            let eps = if eps > T::zero() { eps } else { T::lit(1e-10) };
            for i in 0..n {
                system[(i, i)] += eps;
            }
            let ch = Cholesky::new(system).ok_or_else(|| {
                Error::NotPositiveSemidefinite("ranking system is not positive semidefinite".into())
            })?;
            (ch, true)
        }
    };
    Ok(ScoreVector {
        f: chol.solve(&rhs),
        y,
        ridged,
    })
}

/// `h(f) = gamma f^T M f + delta sum_q (f_q - y)^2`.
pub fn score_objective<T: Scalar>(
    global: &DMatrix<T>,
    lambda: &QueryIndicator,
    f: &DVector<T>,
    y: T,
    gamma: T,
    delta: T,
) -> T {
    let anchor = lambda
        .queries()
        .fold(T::zero(), |acc, q| acc + (f[q] - y) * (f[q] - y));
    gamma * f.dot(&(global * f)) + delta * anchor
}

/// `w_i = Phi_i f_i` for every neighborhood.
pub fn recover_predictors<T: Scalar>(
    phi: &[DMatrix<T>],
    f: &DVector<T>,
    index: &NeighborhoodIndex,
) -> Result<Vec<LocalPredictor<T>>> {
    if phi.len() != index.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} phi blocks for {} neighborhoods",
            phi.len(),
            index.len()
        )));
    }
    phi.iter()
        .enumerate()
        .map(|(i, p)| {
            if p.ncols() != index.k() {
                return Err(Error::DimensionMismatch(format!(
                    "phi block {i} has {} columns, k = {}",
                    p.ncols(),
                    index.k()
                )));
            }
            let fi = gather_local_scores(f, index, i)?;
            Ok(LocalPredictor { w: p * fi })
        })
        .collect()
}

/// `||f_i - w_i^T S_i||^2 + beta ||w_i||^2`.
pub fn local_objective<T: Scalar>(
    local_codes: &DMatrix<T>,
    local_scores: &DVector<T>,
    w: &DVector<T>,
    beta: T,
) -> Result<T> {
    if local_codes.nrows() != w.len() || local_codes.ncols() != local_scores.len() {
        return Err(Error::DimensionMismatch(format!(
            "codes {}x{}, scores {}, predictor {}",
            local_codes.nrows(),
            local_codes.ncols(),
            local_scores.len(),
            w.len()
        )));
    }
    let fit = local_codes.tr_mul(w);
    Ok((local_scores - fit).norm_squared() + w.norm_squared() * beta)
}

/// Builds `Phi_i` and `L_i` for every neighborhood from the current codes.
pub fn build_cache<T: Scalar>(
    codes: &DMatrix<T>,
    index: &NeighborhoodIndex,
    beta: T,
    exec: &Executor,
) -> Result<LocalRankingCache<T>> {
    let blocks = exec.map(index.len(), |i| {
        let local = gather_local_codes(codes, index, i)?;
        let phi = compute_phi(&local, beta)?;
        let l = compute_local_l(&local, &phi, beta)?;
        Ok((phi, l))
    });
    let mut phi = Vec::with_capacity(blocks.len());
    let mut local = Vec::with_capacity(blocks.len());
    for b in blocks {
        let (p, l) = b?;
        phi.push(p);
        local.push(l);
    }
    let global = assemble_global(&local, index, codes.ncols())?;
    Ok(LocalRankingCache { phi, local, global })
}
