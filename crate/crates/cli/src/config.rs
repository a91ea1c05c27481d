//! Run configuration: command-line flags layered over a flat `key = value`
//! file layered over the library defaults.

use std::path::{Path, PathBuf};

use clap::{Args, Parser};
use lcrank::Hyperparams;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: expected `key = value`, got {text:?}")]
    Syntax {
        path: PathBuf,
        line: usize,
        text: String,
    },
    #[error("{path}:{line}: unknown key {key:?}")]
    UnknownKey {
        path: PathBuf,
        line: usize,
        key: String,
    },
    #[error("{path}:{line}: key {key:?} given more than once")]
    DuplicateKey {
        path: PathBuf,
        line: usize,
        key: String,
    },
    #[error("{path}:{line}: cannot parse {value:?} as a value for {key}")]
    Value {
        path: PathBuf,
        line: usize,
        key: String,
        value: String,
    },
    #[error("--{0} must not be empty")]
    EmptyPath(&'static str),
    #[error(transparent)]
    Invalid(#[from] lcrank::Error),
}

/// Hyperparameter flags; each overrides the config file key of the same name.
#[derive(Debug, Clone, Default, Args)]
pub struct HyperFlags {
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub y: Option<f64>,
    /// Codeword squared-norm bound.
    #[arg(long = "C", value_name = "C")]
    pub c: Option<f64>,
    /// Dictionary size [default: min(2d, n)].
    #[arg(long)]
    pub m: Option<usize>,
    /// Neighborhood size, the point itself included [default: min(10, n)].
    #[arg(long)]
    pub k: Option<usize>,
    /// Stopping tolerance on the objective change [default: 1e-6 n].
    #[arg(long)]
    pub xi: Option<f64>,
    /// Maximum number of iterations.
    #[arg(long = "T", value_name = "T")]
    pub t: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Arguments of the `fit` subcommand.
#[derive(Debug, Clone, Parser)]
#[command(name = "fit")]
pub struct FitArgs {
    /// Feature CSV with header `id,f1,...,fd`.
    #[arg(long)]
    pub data: PathBuf,
    /// Query ids, one per line.
    #[arg(long)]
    pub queries: PathBuf,
    /// Ranking CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Convergence trace CSV to write.
    #[arg(long)]
    pub trace: PathBuf,
    /// Flat `key = value` file of hyperparameters.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Leave the queries out of the ranking.
    #[arg(long)]
    pub exclude_queries: bool,
    #[command(flatten)]
    pub hyper: HyperFlags,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset_path: PathBuf,
    pub query_path: PathBuf,
    pub output_path: PathBuf,
    pub trace_path: PathBuf,
    pub hyperparams: Hyperparams<f64>,
    pub exclude_queries: bool,
}

/// Keys accepted in a config file.
pub const KEYS: [&str; 11] = [
    "alpha", "beta", "gamma", "delta", "y", "C", "m", "k", "xi", "T", "seed",
];

/// Merges flags over the config file (when given) over the defaults and
/// validates the result.
pub fn parse_config(args: &FitArgs) -> Result<RunConfig, ConfigError> {
    let mut hp = Hyperparams::<f64>::default();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.clone(),
            source,
        })?;
        apply_config_text(&mut hp, &text, path)?;
    }
    apply_flags(&mut hp, &args.hyper);
    hp.validate()?;

    for (name, p) in [
        ("data", &args.data),
        ("queries", &args.queries),
        ("out", &args.out),
        ("trace", &args.trace),
    ] {
        if p.as_os_str().is_empty() {
            return Err(ConfigError::EmptyPath(name));
        }
    }
    Ok(RunConfig {
        dataset_path: args.data.clone(),
        query_path: args.queries.clone(),
        output_path: args.out.clone(),
        trace_path: args.trace.clone(),
        hyperparams: hp,
        exclude_queries: args.exclude_queries,
    })
}

/// Applies config file contents. Blank lines and lines starting with `#`
/// are skipped; `path` is only used in messages.
pub fn apply_config_text(
    hp: &mut Hyperparams<f64>,
    text: &str,
    path: &Path,
) -> Result<(), ConfigError> {
    let mut seen = Vec::new();
    for (pos, raw) in text.lines().enumerate() {
        let line = pos + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            return Err(ConfigError::Syntax {
                path: path.to_path_buf(),
                line,
                text: raw.to_string(),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey {
                path: path.to_path_buf(),
                line,
                key: key.to_string(),
            });
        }
        if seen.contains(&key) {
            return Err(ConfigError::DuplicateKey {
                path: path.to_path_buf(),
                line,
                key: key.to_string(),
            });
        }
        seen.push(key);
        set_key(hp, key, value).ok_or_else(|| ConfigError::Value {
            path: path.to_path_buf(),
            line,
            key: key.to_string(),
            value: value.to_string(),
        })?;
    }
    Ok(())
}

fn set_key(hp: &mut Hyperparams<f64>, key: &str, value: &str) -> Option<()> {
    let real = || value.parse::<f64>().ok();
    let count = || value.parse::<usize>().ok();
    match key {
        "alpha" => hp.alpha = real()?,
        "beta" => hp.beta = real()?,
        "gamma" => hp.gamma = real()?,
        "delta" => hp.delta = real()?,
        "y" => hp.y = real()?,
        "C" => hp.c = real()?,
        "m" => hp.m = Some(count()?),
        "k" => hp.k = Some(count()?),
        "xi" => hp.xi = Some(real()?),
        "T" => hp.max_iter = count()?,
        "seed" => hp.seed = value.parse().ok()?,
        _ => return None,
    }
    Some(())
}

fn apply_flags(hp: &mut Hyperparams<f64>, flags: &HyperFlags) {
    let HyperFlags {
        alpha,
        beta,
        gamma,
        delta,
        y,
        c,
        m,
        k,
        xi,
        t,
        seed,
    } = flags.clone();
    hp.alpha = alpha.unwrap_or(hp.alpha);
    hp.beta = beta.unwrap_or(hp.beta);
    hp.gamma = gamma.unwrap_or(hp.gamma);
    hp.delta = delta.unwrap_or(hp.delta);
    hp.y = y.unwrap_or(hp.y);
    hp.c = c.unwrap_or(hp.c);
    hp.m = m.or(hp.m);
    hp.k = k.or(hp.k);
    hp.xi = xi.or(hp.xi);
    hp.max_iter = t.unwrap_or(hp.max_iter);
    hp.seed = seed.unwrap_or(hp.seed);
}
