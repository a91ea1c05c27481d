//! L1-regularized coding subproblems and the norm-constrained dictionary
//! update.
//!
//! Both the plain coding problem `||x - D s||^2 + alpha ||s||_1` and its
//! ranking-augmented variant are reduced to one canonical form,
//!
//! ```text
//! s^T A s - 2 b^T s + c + alpha ||s||_1,
//! ```
//!
//! solved by [`feature_sign_solve`].

mod dictionary;
mod feature_sign;

pub use dictionary::{dictionary_update, reconstruction_error, DictionaryUpdate};
pub use feature_sign::feature_sign_solve;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dictionary columns (`d x m`) with the per-codeword bound `||d_l||^2 <= C`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary<T: Scalar> {
    columns: DMatrix<T>,
    bound: T,
}

impl<T: Scalar> Dictionary<T> {
    pub fn new(columns: DMatrix<T>, bound: T) -> Result<Self> {
        if !(bound > T::zero()) {
            return Err(Error::param("C", "> 0"));
        }
        if columns.ncols() == 0 || columns.nrows() == 0 {
            return Err(Error::InvalidData("dictionary must be non-empty".into()));
        }
        if columns.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite dictionary entry".into()));
        }
        let slack = Self::slack(bound);
        if let Some(l) = columns
            .column_iter()
            .position(|col| col.norm_squared() > bound + slack)
        {
            return Err(Error::InvalidData(format!(
                "codeword {l} violates the norm bound: {} > {}",
                columns.column(l).norm_squared(),
                bound
            )));
        }
        Ok(Dictionary { columns, bound })
    }

    fn slack(bound: T) -> T {
        T::tolerance(1e-9) * bound.max(T::one())
    }

    pub fn columns(&self) -> &DMatrix<T> {
        &self.columns
    }

    pub fn bound(&self) -> T {
        self.bound
    }

    /// Feature dimension `d`.
    pub fn dim(&self) -> usize {
        self.columns.nrows()
    }

    /// Number of codewords `m`.
    pub fn size(&self) -> usize {
        self.columns.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode<T: Scalar> {
    pub values: DVector<T>,
}

impl<T: Scalar> SparseCode<T> {
    pub fn nnz(&self) -> usize {
        self.values.iter().filter(|v| **v != T::zero()).count()
    }
}

/// `s^T A s - 2 b^T s + c + alpha ||s||_1` with symmetric PSD `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadL1Problem<T: Scalar> {
    a: DMatrix<T>,
    b: DVector<T>,
    c: T,
    alpha: T,
}

impl<T: Scalar> QuadL1Problem<T> {
    /// Checks shapes, symmetry (within 1e-10 relative to the largest entry)
    /// and `alpha >= 0`. The stored matrix is exactly symmetrized.
    pub fn new(a: DMatrix<T>, b: DVector<T>, c: T, alpha: T) -> Result<Self> {
        let m = b.len();
        if a.shape() != (m, m) {
            return Err(Error::DimensionMismatch(format!(
                "quadratic term is {}x{}, linear term has {m} entries",
                a.nrows(),
                a.ncols()
            )));
        }
        if !(alpha >= T::zero()) || !alpha.is_finite() {
            return Err(Error::param("alpha", ">= 0"));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) || !c.is_finite() {
            return Err(Error::InvalidData("non-finite coding problem".into()));
        }
        let scale = T::one() + a.amax();
        let asym = (&a - a.transpose()).amax();
        if asym > T::tolerance(1e-10) * scale {
            return Err(Error::InvalidData(format!(
                "quadratic term is not symmetric (max deviation {asym})"
            )));
        }
        let a = (&a + a.transpose()) * T::lit(0.5);
        Ok(QuadL1Problem { a, b, c, alpha })
    }

    pub fn quadratic(&self) -> &DMatrix<T> {
        &self.a
    }

    pub fn linear(&self) -> &DVector<T> {
        &self.b
    }

    pub fn constant(&self) -> T {
        self.c
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn objective(&self, s: &DVector<T>) -> T {
        let l1 = s.iter().fold(T::zero(), |acc, v| acc + v.abs());
        s.dot(&(&self.a * s)) - T::lit(2.0) * self.b.dot(s) + self.c + self.alpha * l1
    }

    /// Gradient of the smooth part, `2 (A s - b)`.
    pub fn gradient(&self, s: &DVector<T>) -> DVector<T> {
        (&self.a * s - &self.b) * T::lit(2.0)
    }

    /// Largest violation of the subgradient optimality conditions at `s`.
    pub fn optimality_violation(&self, s: &DVector<T>) -> T {
        let g = self.gradient(s);
        s.iter().zip(g.iter()).fold(T::zero(), |worst, (&sj, &gj)| {
            let v = if sj == T::zero() {
                (gj.abs() - self.alpha).max(T::zero())
            } else {
                (gj + self.alpha * sj.signum()).abs()
            };
            worst.max(v)
        })
    }
}

fn check_dims<T: Scalar>(x: &DVector<T>, dict: &Dictionary<T>) -> Result<()> {
    if x.len() != dict.dim() {
        return Err(Error::DimensionMismatch(format!(
            "point has {} features, dictionary has {}",
            x.len(),
            dict.dim()
        )));
    }
    Ok(())
}

/// Canonical form of `||x - D s||^2 + alpha ||s||_1`.
pub fn build_plain_problem<T: Scalar>(
    x: &DVector<T>,
    dict: &Dictionary<T>,
    alpha: T,
) -> Result<QuadL1Problem<T>> {
    check_dims(x, dict)?;
    let d = dict.columns();
    QuadL1Problem::new(d.tr_mul(d), d.tr_mul(x), x.norm_squared(), alpha)
}

/// Canonical form of
/// `||x - D s||^2 + alpha ||s||_1 + gamma * sum_j (f_i - w_j^T s)^2`
/// where `j` runs over the neighborhoods containing the point.
pub fn build_augmented_problem<T: Scalar>(
    x: &DVector<T>,
    dict: &Dictionary<T>,
    alpha: T,
    gamma: T,
    score: T,
    owners: &[DVector<T>],
) -> Result<QuadL1Problem<T>> {
    check_dims(x, dict)?;
    if !(gamma >= T::zero()) {
        return Err(Error::param("gamma", ">= 0"));
    }
    let d = dict.columns();
    let m = dict.size();
    let mut a = d.tr_mul(d);
    let mut b = d.tr_mul(x);
    let mut c = x.norm_squared();
    if gamma > T::zero() && !owners.is_empty() {
        let mut wsum = DVector::zeros(m);
        for w in owners {
            if w.len() != m {
                return Err(Error::DimensionMismatch(format!(
                    "predictor has {} entries, dictionary has {m} codewords",
                    w.len()
                )));
            }
            a.ger(gamma, w, w, T::one());
            wsum += w;
        }
        b.axpy(gamma * score, &wsum, T::one());
        c += gamma * T::count(owners.len()) * score * score;
    }
    QuadL1Problem::new(a, b, c, alpha)
}

/// `sum_i ||x_i - D s_i||^2 + alpha ||s_i||_1` with points and codes stored
/// as columns.
pub fn coding_objective<T: Scalar>(
    x: &DMatrix<T>,
    dict: &Dictionary<T>,
    codes: &DMatrix<T>,
    alpha: T,
) -> Result<T> {
    let l1 = codes.iter().fold(T::zero(), |acc, v| acc + v.abs());
    Ok(reconstruction_error(x, dict.columns(), codes)? + alpha * l1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn unit_dictionary(rng: &mut ChaCha8Rng, d: usize, m: usize) -> Dictionary<f64> {
        let mut cols = rand_mat(rng, d, m);
        for mut c in cols.column_iter_mut() {
            let n = c.norm();
            c /= n;
        }
        Dictionary::new(cols, 1.0).unwrap()
    }

    #[test]
    fn plain_problem_identity() {
        let dict = Dictionary::new(DMatrix::identity(2, 2), 1.0).unwrap();
        let p = build_plain_problem(&DVector::from_vec(vec![1.0, 2.0]), &dict, 0.5).unwrap();
        assert_eq!(p.quadratic(), &DMatrix::identity(2, 2));
        assert_eq!(p.linear().as_slice(), &[1.0, 2.0]);
        assert_eq!(p.constant(), 5.0);
    }

    #[test]
    fn zero_point_gives_zero_code() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dict = unit_dictionary(&mut rng, 3, 5);
        for alpha in [0.0, 0.1, 2.0] {
            let p = build_plain_problem(&DVector::zeros(3), &dict, alpha).unwrap();
            assert_eq!(p.linear(), &DVector::zeros(5));
            let s = feature_sign_solve(&p, 1e-10).unwrap();
            assert_eq!(s.values, DVector::zeros(5));
        }
    }

    #[test]
    fn plain_problem_matches_direct_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dict = unit_dictionary(&mut rng, 4, 6);
        let x = DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
        let p = build_plain_problem(&x, &dict, 0.3).unwrap();
        for _ in 0..100 {
            let s = DVector::from_fn(6, |_, _| rng.random_range(-2.0..2.0));
            let direct = (&x - dict.columns() * &s).norm_squared() + 0.3 * s.lp_norm(1);
            assert!((p.objective(&s) - direct).abs() <= 1e-10 * (1.0 + direct));
        }
    }

    #[test]
    fn augmented_reduces_to_plain() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dict = unit_dictionary(&mut rng, 3, 4);
        let x = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        let plain = build_plain_problem(&x, &dict, 0.2).unwrap();
        let owners = vec![DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0))];
        assert_eq!(
            build_augmented_problem(&x, &dict, 0.2, 1.5, 0.7, &[]).unwrap(),
            plain
        );
        assert_eq!(
            build_augmented_problem(&x, &dict, 0.2, 0.0, 0.7, &owners).unwrap(),
            plain
        );
    }

    #[test]
    fn augmented_scalar_case() {
        let dict = Dictionary::new(DMatrix::<f64>::from_element(1, 1, 1.0), 1.0).unwrap();
        let x = DVector::from_element(1, 1.0);
        let p = build_augmented_problem(&x, &dict, 0.0, 2.0, 3.0, &[DVector::from_element(1, 1.0)])
            .unwrap();
        assert_eq!(p.quadratic()[(0, 0)], 3.0);
        assert_eq!(p.linear()[0], 7.0);
        assert_eq!(p.constant(), 19.0);
        let s = feature_sign_solve(&p, 1e-12).unwrap();
        assert!((s.values[0] - 7.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn augmented_matches_explicit_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let dict = unit_dictionary(&mut rng, 3, 5);
            let x = DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
            let owners: Vec<_> = (0..rng.random_range(0..4))
                .map(|_| DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0)))
                .collect();
            let (gamma, fi, alpha) = (
                rng.random_range(0.0..3.0),
                rng.random_range(-1.0..2.0),
                0.25,
            );
            let p = build_augmented_problem(&x, &dict, alpha, gamma, fi, &owners).unwrap();
            for _ in 0..100 {
                let s = DVector::from_fn(5, |_, _| rng.random_range(-2.0..2.0));
                let explicit = (&x - dict.columns() * &s).norm_squared()
                    + alpha * s.lp_norm(1)
                    + gamma * owners.iter().map(|w| (fi - w.dot(&s)).powi(2)).sum::<f64>();
                assert!((p.objective(&s) - explicit).abs() <= 1e-10 * (1.0 + explicit.abs()));
            }
        }
    }

    #[test]
    fn problem_validation() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(QuadL1Problem::new(a, DVector::zeros(2), 0.0, 0.1).is_err());
        assert!(QuadL1Problem::new(DMatrix::identity(2, 2), DVector::zeros(3), 0.0, 0.1).is_err());
        assert!(QuadL1Problem::new(DMatrix::identity(2, 2), DVector::zeros(2), 0.0, -0.1).is_err());
        let dict = Dictionary::new(DMatrix::identity(2, 2), 1.0).unwrap();
        assert!(build_plain_problem(&DVector::zeros(3), &dict, 0.1).is_err());
    }

    #[test]
    fn dictionary_validation() {
        assert!(Dictionary::new(DMatrix::from_element(2, 1, 1.0), 1.0).is_err());
        assert!(Dictionary::new(DMatrix::from_element(2, 1, 0.5), 0.0).is_err());
        assert!(Dictionary::new(DMatrix::from_element(2, 1, f64::NAN), 1.0).is_err());
        assert!(Dictionary::new(DMatrix::from_element(2, 1, 0.5), 1.0).is_ok());
    }

    #[test]
    fn coding_objective_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = rand_mat(&mut rng, 3, 6);
        let dict = unit_dictionary(&mut rng, 3, 4);
        let zero = DMatrix::zeros(4, 6);
        let v = coding_objective(&x, &dict, &zero, 0.7).unwrap();
        assert!((v - x.norm_squared()).abs() < 1e-12);

        let eye = Dictionary::new(DMatrix::identity(3, 3), 1.0).unwrap();
        assert!(coding_objective(&x, &eye, &x, 0.0).unwrap().abs() < 1e-15);

        let s = rand_mat(&mut rng, 4, 6);
        let mut naive = 0.0;
        for i in 0..6 {
            for r in 0..3 {
                let mut recon = 0.0;
                for l in 0..4 {
                    recon += dict.columns()[(r, l)] * s[(l, i)];
                }
                naive += (x[(r, i)] - recon).powi(2);
            }
            for l in 0..4 {
                naive += 0.3 * s[(l, i)].abs();
            }
        }
        let v = coding_objective(&x, &dict, &s, 0.3).unwrap();
        assert!((v - naive).abs() < 1e-12 * (1.0 + naive));
        assert!(coding_objective(&x, &dict, &DMatrix::zeros(3, 6), 0.3).is_err());
    }
}
