//! Alternating minimization of the joint coding/ranking objective
//!
//! ```text
//! O = sum_i ||x_i - D s_i||^2 + alpha ||s_i||_1
//!   + gamma sum_i (||f_i - w_i^T S_i||^2 + beta ||w_i||^2)
//!   + delta sum_i lambda_i (f_i - y)^2,      ||d_l||^2 <= C.
//! ```
//!
//! One iteration updates, in order: the neighborhood matrices from the
//! previous codes, the scores, the local predictors, every code with the
//! predictors frozen, and the dictionary. With `w` and `f` frozen the code
//! subproblems decouple across points, so they are solved independently.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset_io::{DataSet, QueryIndicator, RankedEntry, RankedResult};
use crate::error::{Error, Result};
use crate::local_ranker::{
    build_cache, recover_predictors, solve_scores, LocalPredictor, ScoreVector,
};
use crate::neighbors::{
    build_knn_with, gather_local_codes, gather_local_scores, NeighborhoodIndex,
};
use crate::parallel::Executor;
use crate::scalar::Scalar;
use crate::sparse_coder::{
    build_augmented_problem, build_plain_problem, coding_objective, dictionary_update,
    feature_sign_solve, Dictionary, QuadL1Problem,
};

/// Model hyperparameters. `m`, `k` and `xi` default from the data shape when
/// left unset.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams<T: Scalar> {
    /// L1 weight on the codes.
    pub alpha: T,
    /// Ridge weight of the local predictors.
    pub beta: T,
    /// Weight of the local ranking term.
    pub gamma: T,
    /// Weight of the query anchoring term.
    pub delta: T,
    /// Anchor score for queries.
    pub y: T,
    /// Codeword squared-norm bound.
    pub c: T,
    /// Dictionary size; `min(2d, n)` when unset.
    pub m: Option<usize>,
    /// Neighborhood size; `min(10, n)` when unset.
    pub k: Option<usize>,
    /// Stopping tolerance on the objective change; `1e-6 n` when unset.
    pub xi: Option<T>,
    /// Maximum number of outer iterations.
    pub max_iter: usize,
    pub seed: u64,
}

impl<T: Scalar> Default for Hyperparams<T> {
    fn default() -> Self {
        Hyperparams {
            alpha: T::lit(0.1),
            beta: T::one(),
            gamma: T::one(),
            delta: T::lit(10.0),
            y: T::one(),
            c: T::one(),
            m: None,
            k: None,
            xi: None,
            max_iter: 50,
            seed: 0,
        }
    }
}

impl<T: Scalar> Hyperparams<T> {
    /// Checks every field against its admissible range.
    pub fn validate(&self) -> Result<()> {
        let finite = |v: T| v.is_finite();
        if !(self.alpha >= T::zero() && finite(self.alpha)) {
            return Err(Error::param("alpha", ">= 0"));
        }
        if !(self.beta > T::zero() && finite(self.beta)) {
            return Err(Error::param("beta", "> 0"));
        }
        if !(self.gamma >= T::zero() && finite(self.gamma)) {
            return Err(Error::param("gamma", ">= 0"));
        }
        if !(self.delta > T::zero() && finite(self.delta)) {
            return Err(Error::param("delta", "> 0"));
        }
        if !(self.y > T::zero() && finite(self.y)) {
            return Err(Error::param("y", "> 0"));
        }
        if !(self.c > T::zero() && finite(self.c)) {
            return Err(Error::param("C", "> 0"));
        }
        if self.m == Some(0) {
            return Err(Error::param("m", ">= 1"));
        }
        if self.k == Some(0) {
            return Err(Error::param("k", ">= 1"));
        }
        if let Some(xi) = self.xi {
            if !(xi > T::zero() && finite(xi)) {
                return Err(Error::param("xi", "> 0"));
            }
        }
        if self.max_iter == 0 {
            return Err(Error::param("T", ">= 1"));
        }
        Ok(())
    }

    pub fn dictionary_size(&self, n: usize, d: usize) -> usize {
        self.m.unwrap_or_else(|| (2 * d).min(n))
    }

    pub fn neighborhood_size(&self, n: usize) -> usize {
        self.k.unwrap_or_else(|| n.min(10))
    }

    pub fn tolerance(&self, n: usize) -> T {
        self.xi.unwrap_or_else(|| T::lit(1e-6) * T::count(n))
    }
}

/// The four terms of the joint objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveBreakdown<T> {
    pub total: T,
    pub coding: T,
    pub ranking: T,
    pub query: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState<T: Scalar> {
    pub dictionary: Dictionary<T>,
    /// Codes as columns, `m x n`.
    pub codes: DMatrix<T>,
    pub scores: ScoreVector<T>,
    pub predictors: Vec<LocalPredictor<T>>,
    pub iteration: usize,
    pub objective: ObjectiveBreakdown<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow<T> {
    pub iteration: usize,
    /// Objective after the full iteration.
    pub objective: ObjectiveBreakdown<T>,
    /// `|O_t - O_{t-1}|`; absent on the first iteration.
    pub delta: Option<T>,
    /// Objective after the score and predictor updates.
    pub after_scores: T,
    /// Objective after the code sweep, predictors still frozen.
    pub after_codes: T,
    /// Objective of the previous iterate.
    pub previous: T,
    pub scores_ridged: bool,
    pub dictionary_degenerate: bool,
}

impl<T: Scalar> TraceRow<T> {
    /// Objective values in update order: previous iterate, after scores and
    /// predictors, after codes, after dictionary.
    pub fn stages(&self) -> [T; 4] {
        [
            self.previous,
            self.after_scores,
            self.after_codes,
            self.objective.total,
        ]
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceTrace<T> {
    pub rows: Vec<TraceRow<T>>,
    pub converged: bool,
}

impl<T: Scalar> ConvergenceTrace<T> {
    /// `(iteration, objective, delta)` triples for the trace file.
    pub fn records(&self) -> impl Iterator<Item = (usize, T, Option<T>)> + '_ {
        self.rows
            .iter()
            .map(|r| (r.iteration, r.objective.total, r.delta))
    }
}

/// Fixed problem data and neighborhood structure shared by every iteration.
pub struct Solver<'a, T: Scalar> {
    data: &'a DataSet<T>,
    points: DMatrix<T>,
    lambda: &'a QueryIndicator,
    hp: Hyperparams<T>,
    index: NeighborhoodIndex,
    owners: Vec<Vec<usize>>,
    exec: Executor,
}

fn in_step(iteration: usize, step: &'static str) -> impl FnOnce(Error) -> Error {
    move |e| Error::Solver {
        iteration,
        step,
        source: Box::new(e),
    }
}

impl<'a, T: Scalar> Solver<'a, T> {
    pub fn new(
        data: &'a DataSet<T>,
        lambda: &'a QueryIndicator,
        hp: Hyperparams<T>,
        exec: Executor,
    ) -> Result<Self> {
        hp.validate()?;
        let n = data.len();
        if lambda.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "query indicator has {} entries for {n} points",
                lambda.len()
            )));
        }
        let k = hp.neighborhood_size(n);
        if k > n {
            return Err(Error::param("k", format!("<= n = {n}, got {k}")));
        }
        let index = build_knn_with(data.points(), k, &exec)?;
        let owners = index.owners();
        Ok(Solver {
            data,
            points: data.columns(),
            lambda,
            hp,
            index,
            owners,
            exec,
        })
    }

    pub fn index(&self) -> &NeighborhoodIndex {
        &self.index
    }

    pub fn hyperparams(&self) -> &Hyperparams<T> {
        &self.hp
    }

    fn code_tolerance(problem: &QuadL1Problem<T>) -> T {
        T::tolerance(1e-10) * (T::one() + problem.quadratic().amax() + problem.linear().amax())
    }

    /// Dictionary from `m` seeded data points (rescaled into the norm ball),
    /// codes from the plain coding problem, scores at `y` on the queries and
    /// zero elsewhere, zero predictors.
    pub fn initialize(&self) -> Result<ModelState<T>> {
        let (n, d) = (self.data.len(), self.data.dim());
        let m = self.hp.dictionary_size(n, d);
        let mut rng = ChaCha8Rng::seed_from_u64(self.hp.seed);
        let mut picks: Vec<usize> = sample(&mut rng, n, m.min(n)).into_vec();
        if m > n {
            log::warn!("dictionary size {m} exceeds the number of points {n}; repeating points");
            while picks.len() < m {
                picks.push(rng.random_range(0..n));
            }
        }
        let mut columns = self.points.select_columns(&picks);
        for mut col in columns.column_iter_mut() {
            let norm2 = col.norm_squared();
            if norm2 > self.hp.c {
                col *= (self.hp.c / norm2).sqrt();
            }
        }
        let dictionary = Dictionary::new(columns, self.hp.c)?;

        let solved = self.exec.map(n, |i| {
            let x = self.points.column(i).into_owned();
            let problem = build_plain_problem(&x, &dictionary, self.hp.alpha)?;
            feature_sign_solve(&problem, Self::code_tolerance(&problem)).map(|s| s.values)
        });
        let mut codes = DMatrix::zeros(m, n);
        for (i, s) in solved.into_iter().enumerate() {
            codes.set_column(i, &s.map_err(in_step(0, "initial codes"))?);
        }

        let f = DVector::from_fn(n, |i, _| self.lambda.weight::<T>(i) * self.hp.y);
        let predictors = vec![
            LocalPredictor {
                w: DVector::zeros(m)
            };
            n
        ];
        let mut state = ModelState {
            dictionary,
            codes,
            scores: ScoreVector {
                f,
                y: self.hp.y,
                ridged: false,
            },
            predictors,
            iteration: 0,
            objective: ObjectiveBreakdown {
                total: T::zero(),
                coding: T::zero(),
                ranking: T::zero(),
                query: T::zero(),
            },
        };
        state.objective = self.objective(&state)?;
        Ok(state)
    }

    pub fn objective(&self, state: &ModelState<T>) -> Result<ObjectiveBreakdown<T>> {
        evaluate_parts(
            &self.points,
            &state.dictionary,
            &state.codes,
            &state.scores.f,
            &state.predictors,
            self.lambda,
            &self.index,
            &self.hp,
        )
    }

    /// One full update sweep; returns the trace row for the new iterate.
    pub fn step(&self, state: &mut ModelState<T>) -> Result<TraceRow<T>> {
        let t = state.iteration + 1;
        let previous = state.objective.total;
        let hp = &self.hp;

        // neighborhood matrices from the previous codes
        let cache = build_cache(&state.codes, &self.index, hp.beta, &self.exec)
            .map_err(in_step(t, "local matrices"))?;

        // scores
        let scores = solve_scores(&cache.global, self.lambda, hp.y, hp.gamma, hp.delta)
            .map_err(in_step(t, "ranking scores"))?;
        if scores.ridged {
            log::debug!("iteration {t}: ranking system ridged");
        }
        state.scores = scores;

        // predictors
        state.predictors = recover_predictors(&cache.phi, &state.scores.f, &self.index)
            .map_err(in_step(t, "local predictors"))?;
        let after_scores = self.objective(state)?.total;

        // codes with predictors and scores frozen
        let solved = self.exec.map(self.data.len(), |i| {
            let owners: Vec<DVector<T>> = self.owners[i]
                .iter()
                .map(|&j| state.predictors[j].w.clone())
                .collect();
            let x = self.points.column(i).into_owned();
            let problem = build_augmented_problem(
                &x,
                &state.dictionary,
                hp.alpha,
                hp.gamma,
                state.scores.f[i],
                &owners,
            )?;
            let candidate = feature_sign_solve(&problem, Self::code_tolerance(&problem))?.values;
            let current = state.codes.column(i).into_owned();
            if problem.objective(&candidate) <= problem.objective(&current) {
                Ok(candidate)
            } else {
                Ok(current)
            }
        });
        for (i, s) in solved.into_iter().enumerate() {
            let s: DVector<T> = s.map_err(in_step(t, "sparse codes"))?;
            state.codes.set_column(i, &s);
        }
        let after_codes = self.objective(state)?.total;

        // dictionary
        let update = dictionary_update(
            &self.points,
            &state.codes,
            hp.c,
            T::tolerance(1e-11),
            Some(&state.dictionary),
        )
        .map_err(in_step(t, "dictionary"))?;
        if update.degenerate {
            log::debug!("iteration {t}: dictionary update ridged");
        }
        state.dictionary = update.dictionary;

        state.iteration = t;
        state.objective = self.objective(state)?;
        let total = state.objective.total;
        if total > previous + T::tolerance(1e-8) * (T::one() + previous.abs()) {
            log::warn!("iteration {t}: objective increased from {previous} to {total}");
        }
        Ok(TraceRow {
            iteration: t,
            objective: state.objective,
            delta: (t > 1).then(|| (total - previous).abs()),
            after_scores,
            after_codes,
            previous,
            scores_ridged: state.scores.ridged,
            dictionary_degenerate: update.degenerate,
        })
    }

    /// Iterates from [`Solver::initialize`] until the objective changes by at
    /// most `xi` between consecutive iterations or `T` iterations have run.
    pub fn fit(&self) -> Result<(ModelState<T>, ConvergenceTrace<T>)> {
        let mut state = self.initialize()?;
        let xi = self.hp.tolerance(self.data.len());
        let mut trace = ConvergenceTrace {
            rows: Vec::new(),
            converged: false,
        };
        for _ in 0..self.hp.max_iter {
            let row = self.step(&mut state)?;
            let done = row.delta.is_some_and(|d| d <= xi);
            trace.rows.push(row);
            if done {
                trace.converged = true;
                break;
            }
        }
        Ok((state, trace))
    }
}

#[allow(clippy::too_many_arguments)]
fn evaluate_parts<T: Scalar>(
    points: &DMatrix<T>,
    dictionary: &Dictionary<T>,
    codes: &DMatrix<T>,
    f: &DVector<T>,
    predictors: &[LocalPredictor<T>],
    lambda: &QueryIndicator,
    index: &NeighborhoodIndex,
    hp: &Hyperparams<T>,
) -> Result<ObjectiveBreakdown<T>> {
    let n = points.ncols();
    if f.len() != n || predictors.len() != n || lambda.len() != n || index.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} points, {} scores, {} predictors, {} query flags, index over {}",
            f.len(),
            predictors.len(),
            lambda.len(),
            index.len()
        )));
    }
    let coding = coding_objective(points, dictionary, codes, hp.alpha)?;
    let mut local_sum = T::zero();
    for (i, p) in predictors.iter().enumerate() {
        let s_i = gather_local_codes(codes, index, i)?;
        let f_i = gather_local_scores(f, index, i)?;
        local_sum += crate::local_ranker::local_objective(&s_i, &f_i, &p.w, hp.beta)?;
    }
    let ranking = hp.gamma * local_sum;
    let anchor = lambda
        .queries()
        .fold(T::zero(), |acc, q| acc + (f[q] - hp.y) * (f[q] - hp.y));
    let query = hp.delta * anchor;
    Ok(ObjectiveBreakdown {
        total: coding + ranking + query,
        coding,
        ranking,
        query,
    })
}

/// The joint objective and its three terms at `state`.
pub fn evaluate_objective<T: Scalar>(
    state: &ModelState<T>,
    data: &DataSet<T>,
    lambda: &QueryIndicator,
    index: &NeighborhoodIndex,
    hp: &Hyperparams<T>,
) -> Result<ObjectiveBreakdown<T>> {
    evaluate_parts(
        &data.columns(),
        &state.dictionary,
        &state.codes,
        &state.scores.f,
        &state.predictors,
        lambda,
        index,
        hp,
    )
}

/// Initial state for `data`; see [`Solver::initialize`].
pub fn initialize<T: Scalar>(
    data: &DataSet<T>,
    lambda: &QueryIndicator,
    hp: &Hyperparams<T>,
) -> Result<ModelState<T>> {
    Solver::new(data, lambda, hp.clone(), Executor::global())?.initialize()
}

/// Runs the alternating optimization on rayon's global pool.
pub fn fit<T: Scalar>(
    data: &DataSet<T>,
    lambda: &QueryIndicator,
    hp: &Hyperparams<T>,
) -> Result<(ModelState<T>, ConvergenceTrace<T>)> {
    fit_with(data, lambda, hp, Executor::global())
}

pub fn fit_with<T: Scalar>(
    data: &DataSet<T>,
    lambda: &QueryIndicator,
    hp: &Hyperparams<T>,
    exec: Executor,
) -> Result<(ModelState<T>, ConvergenceTrace<T>)> {
    Solver::new(data, lambda, hp.clone(), exec)?.fit()
}

/// Points sorted by descending score, ties by index.
pub fn rank<T: Scalar>(
    state: &ModelState<T>,
    data: &DataSet<T>,
    lambda: &QueryIndicator,
    exclude_queries: bool,
) -> Result<RankedResult<T>> {
    let f = &state.scores.f;
    let n = data.len();
    if f.len() != n || lambda.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} scores, {} query flags for {n} points",
            f.len(),
            lambda.len()
        )));
    }
    if let Some(i) = f.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidData(format!("non-finite score at point {i}")));
    }
    let mut order: Vec<usize> = (0..n)
        .filter(|&i| !(exclude_queries && lambda.is_query(i)))
        .collect();
    order.sort_by(|&a, &b| {
        f[b].partial_cmp(&f[a])
            .expect("finite scores")
            .then(a.cmp(&b))
    });
    Ok(RankedResult {
        entries: order
            .into_iter()
            .map(|i| RankedEntry {
                id: data.ids()[i].clone(),
                score: f[i],
                is_query: lambda.is_query(i),
            })
            .collect(),
        queries_excluded: exclude_queries,
    })
}
