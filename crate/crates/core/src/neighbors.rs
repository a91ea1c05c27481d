//! Exact k-nearest-neighbor lists and the neighborhood selections built on them.
//!
//! The neighborhood of point `i` is an ordered list of `k` point indices,
//! starting with `i` itself. Column `j` of the indicator matrix `H_i` is the
//! unit vector of the `j`-th entry, so selecting through the list is the same
//! as multiplying by `H_i` without materializing it.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::parallel::Executor;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborhoodIndex {
    k: usize,
    lists: Vec<Vec<usize>>,
}

impl NeighborhoodIndex {
    /// Wraps precomputed lists after checking length, range, distinctness and
    /// self-first ordering.
    pub fn from_lists(k: usize, lists: Vec<Vec<usize>>) -> Result<Self> {
        let n = lists.len();
        if k == 0 || k > n {
            return Err(Error::param("k", format!("in [1, {n}], got {k}")));
        }
        for (i, list) in lists.iter().enumerate() {
            if list.len() != k {
                return Err(Error::DimensionMismatch(format!(
                    "neighbor list {i} has {} entries, expected {k}",
                    list.len()
                )));
            }
            if list[0] != i {
                return Err(Error::InvalidData(format!(
                    "neighbor list {i} must start with {i}"
                )));
            }
            let mut sorted = list.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != k || sorted[k - 1] >= n {
                return Err(Error::InvalidData(format!(
                    "neighbor list {i} has repeated or out-of-range entries"
                )));
            }
        }
        Ok(NeighborhoodIndex { k, lists })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of points.
    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.lists[i]
    }

    pub fn lists(&self) -> &[Vec<usize>] {
        &self.lists
    }

    /// For every point, the neighborhoods `j` that contain it.
    pub fn owners(&self) -> Vec<Vec<usize>> {
        let mut owners = vec![Vec::new(); self.len()];
        for (j, list) in self.lists.iter().enumerate() {
            for &p in list {
                owners[p].push(j);
            }
        }
        owners
    }

    /// Dense `n x k` indicator matrix `H_i`.
    pub fn indicator<T: Scalar>(&self, i: usize) -> Result<DMatrix<T>> {
        let list = self.list(i)?;
        let mut h = DMatrix::zeros(self.len(), self.k);
        for (col, &p) in list.iter().enumerate() {
            h[(p, col)] = T::one();
        }
        Ok(h)
    }

    fn list(&self, i: usize) -> Result<&[usize]> {
        self.lists
            .get(i)
            .map(Vec::as_slice)
            .ok_or(Error::IndexOutOfRange {
                index: i,
                len: self.len(),
            })
    }
}

/// Exact brute-force kNN under squared Euclidean distance over the rows of
/// `points` (`n x d`). Each list begins with the point itself; ties go to the
/// smaller index.
pub fn build_knn<T: Scalar>(points: &DMatrix<T>, k: usize) -> Result<NeighborhoodIndex> {
    build_knn_with(points, k, &Executor::global())
}

/// [`build_knn`] on an explicit executor.
pub fn build_knn_with<T: Scalar>(
    points: &DMatrix<T>,
    k: usize,
    exec: &Executor,
) -> Result<NeighborhoodIndex> {
    let n = points.nrows();
    if k < 1 {
        return Err(Error::param("k", "at least 1"));
    }
    if k > n {
        return Err(Error::param("k", format!("at most n = {n}, got {k}")));
    }
    let lists = exec.map(n, |i| {
        let xi = points.row(i);
        let mut others: Vec<(T, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| ((points.row(j) - xi).norm_squared(), j))
            .collect();
        let by_distance = |a: &(T, usize), b: &(T, usize)| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(Ordering::Equal)
                .then(a.1.cmp(&b.1))
        };
        if k - 1 < others.len() {
            others.select_nth_unstable_by(k - 1, by_distance);
            others.truncate(k - 1);
        }
        others.sort_unstable_by(by_distance);
        std::iter::once(i)
            .chain(others.into_iter().map(|(_, j)| j))
            .collect()
    });
    Ok(NeighborhoodIndex { k, lists })
}

/// `f_i = f H_i`: the scores of the members of neighborhood `i`, in order.
pub fn gather_local_scores<T: Scalar>(
    f: &DVector<T>,
    index: &NeighborhoodIndex,
    i: usize,
) -> Result<DVector<T>> {
    if f.len() != index.len() {
        return Err(Error::DimensionMismatch(format!(
            "score vector has {} entries, index covers {} points",
            f.len(),
            index.len()
        )));
    }
    let list = index.list(i)?;
    Ok(DVector::from_iterator(
        list.len(),
        list.iter().map(|&p| f[p]),
    ))
}

/// `S_i = S H_i`: the code columns of the members of neighborhood `i`.
pub fn gather_local_codes<T: Scalar>(
    codes: &DMatrix<T>,
    index: &NeighborhoodIndex,
    i: usize,
) -> Result<DMatrix<T>> {
    if codes.ncols() != index.len() {
        return Err(Error::DimensionMismatch(format!(
            "code matrix has {} columns, index covers {} points",
            codes.ncols(),
            index.len()
        )));
    }
    let list = index.list(i)?;
    Ok(codes.select_columns(list.iter()))
}
