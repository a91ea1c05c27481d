//! Command implementations behind the `lcrank` binary.

pub mod config;
pub mod generate;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use lcrank::dataset_io::{read_ranking, write_features, write_queries};
use lcrank::{
    fit_with, load_dataset, rank, write_ranking, write_trace, ConvergenceTrace, Executor,
    ModelState, RankedResult,
};

pub use config::{parse_config, ConfigError, FitArgs, HyperFlags, RunConfig};
pub use generate::{cluster_of, generate, Fixture, GenError};

/// Environment variable capping the worker threads; `0` runs sequentially.
pub const THREADS_VAR: &str = "LCRANK_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "lcrank",
    version,
    about = "Joint sparse coding and query ranking"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Learn ranking scores for the queries and write the ranking and trace.
    Fit(FitArgs),
    /// Re-sort an existing ranking CSV, optionally dropping the queries.
    Rank(RankArgs),
    /// Write a seeded Gaussian-mixture dataset and a one-query file.
    Gen(GenArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RankArgs {
    /// Ranking CSV written by `fit`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub exclude_queries: bool,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 40)]
    pub n: usize,
    #[arg(long, default_value_t = 5)]
    pub d: usize,
    #[arg(long, default_value_t = 2)]
    pub clusters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Feature CSV to write.
    #[arg(long)]
    pub data: PathBuf,
    /// Query file to write.
    #[arg(long)]
    pub queries: PathBuf,
}

/// What a successful `fit` produced.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub state: ModelState<f64>,
    pub trace: ConvergenceTrace<f64>,
    pub ranking: RankedResult<f64>,
}

impl FitReport {
    pub fn summary(&self) -> String {
        let o = &self.state.objective;
        let stop = if self.trace.converged {
            "converged"
        } else {
            "iteration limit"
        };
        format!(
            "objective {}\n  coding  {}\n  ranking {}\n  query   {}\niterations {} ({stop})",
            o.total, o.coding, o.ranking, o.query, self.state.iteration
        )
    }
}

/// Executor chosen by [`THREADS_VAR`]; rayon's global pool when unset.
pub fn executor_from_env() -> Result<Executor> {
    match std::env::var(THREADS_VAR) {
        Ok(v) => {
            let threads: usize = v
                .trim()
                .parse()
                .with_context(|| format!("{THREADS_VAR} must be a thread count, got {v:?}"))?;
            Ok(Executor::with_threads(threads))
        }
        Err(std::env::VarError::NotPresent) => Ok(Executor::global()),
        Err(e) => Err(e).context(THREADS_VAR),
    }
}

pub fn cmd_fit(config: &RunConfig) -> Result<FitReport> {
    cmd_fit_with(config, executor_from_env()?)
}

pub fn cmd_fit_with(config: &RunConfig, exec: Executor) -> Result<FitReport> {
    let (data, lambda) =
        load_dataset::<f64>(&config.dataset_path, &config.query_path).context("loading dataset")?;
    log::info!(
        "{} points in {} dimensions, {} queries",
        data.len(),
        data.dim(),
        lambda.queries().count()
    );
    let (state, trace) = fit_with(&data, &lambda, &config.hyperparams, exec).context("fitting")?;
    let ranking = rank(&state, &data, &lambda, config.exclude_queries).context("ranking")?;
    write_ranking(&ranking, &config.output_path).context("writing ranking")?;
    write_trace(trace.records(), &config.trace_path).context("writing trace")?;
    Ok(FitReport {
        state,
        trace,
        ranking,
    })
}

pub fn cmd_rank(args: &RankArgs) -> Result<RankedResult<f64>> {
    let ranking = read_ranking::<f64>(&args.input).context("reading ranking")?;
    let out = ranking.reranked(args.exclude_queries);
    write_ranking(&out, &args.out).context("writing ranking")?;
    Ok(out)
}

pub fn cmd_gen(args: &GenArgs) -> Result<Fixture> {
    let fx = generate(args.n, args.d, args.clusters, args.seed)?;
    write_features(&fx.data, &args.data).context("writing features")?;
    write_queries(&fx.data, &fx.queries, &args.queries).context("writing queries")?;
    Ok(fx)
}

/// Runs one parsed command line, printing results to standard output.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit(args) => {
            let config = parse_config(&args)?;
            let report = cmd_fit(&config)?;
            println!("{}", report.summary());
        }
        Command::Rank(args) => {
            let out = cmd_rank(&args)?;
            println!(
                "{} entries written to {}",
                out.entries.len(),
                args.out.display()
            );
        }
        Command::Gen(args) => {
            let fx = cmd_gen(&args)?;
            println!(
                "{} points written to {}, query {}",
                fx.data.len(),
                args.data.display(),
                fx.queries
                    .queries()
                    .map(|q| fx.data.ids()[q].as_str())
                    .collect::<Vec<_>>()
                    .join(",")
            );
        }
    }
    Ok(())
}
