//! Joint sparse coding and ranking-score learning for content-based retrieval.
//!
//! Points are encoded as sparse combinations of a norm-bounded dictionary.
//! Inside every k-nearest-neighbor patch a ridge-regularized linear map
//! predicts ranking scores from the codes, and the user's query points anchor
//! their own scores to a constant. Codes, dictionary, predictors and scores
//! are learned together by alternating exact block updates; the final scores
//! rank the dataset against the queries.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the `*F64`
//! aliases below fix the common double-precision case.

// `!(x > 0)` is how parameter checks reject NaN along with the bad range
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset_io;
pub mod error;
pub mod local_ranker;
pub mod neighbors;
pub mod parallel;
pub mod scalar;
pub mod solver;
pub mod sparse_coder;

pub use dataset_io::{
    load_dataset, write_ranking, write_trace, DataSet, QueryIndicator, RankedEntry, RankedResult,
};
pub use error::{Error, Result};
pub use neighbors::{build_knn, NeighborhoodIndex};
pub use parallel::Executor;
pub use scalar::Scalar;
pub use solver::{
    evaluate_objective, fit, fit_with, initialize, rank, ConvergenceTrace, Hyperparams, ModelState,
    ObjectiveBreakdown, Solver, TraceRow,
};
pub use sparse_coder::{Dictionary, QuadL1Problem, SparseCode};

pub type DataSetF64 = DataSet<f64>;
pub type DataSetF32 = DataSet<f32>;
pub type HyperparamsF64 = Hyperparams<f64>;
pub type HyperparamsF32 = Hyperparams<f32>;
pub type ModelStateF64 = ModelState<f64>;
pub type ModelStateF32 = ModelState<f32>;
pub type ConvergenceTraceF64 = ConvergenceTrace<f64>;
pub type DictionaryF64 = Dictionary<f64>;
pub type QuadL1ProblemF64 = QuadL1Problem<f64>;
pub type RankedResultF64 = RankedResult<f64>;
