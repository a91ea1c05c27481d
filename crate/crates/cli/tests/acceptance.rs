//! Acceptance suite. Every criterion prints one PASS/FAIL line; the process
//! exits nonzero if any criterion fails.
//!
//! Run alone with `cargo test -p lcrank-cli --test acceptance`.

use std::time::Instant;

use clap::Parser;
use lcrank::local_ranker::{compute_local_l, compute_phi, solve_scores};
use lcrank::sparse_coder::{dictionary_update, feature_sign_solve};
use lcrank::{fit_with, rank, Executor, Hyperparams, QuadL1Problem, QueryIndicator};
use lcrank_cli::{cmd_fit, cmd_gen, generate, parse_config, FitArgs, GenArgs};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Outcome);

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, half_width: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-half_width..half_width))
}

fn fixture_hp(seed: u64) -> Hyperparams<f64> {
    Hyperparams {
        m: Some(8),
        k: Some(5),
        seed,
        ..Default::default()
    }
}

/// `f^T L f` against the ridge objective at `w = Phi f`, evaluated by loops.
fn closed_form() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut worst_grad = 0.0f64;
    let mut count = 0;
    for &beta in &[0.1, 1.0, 10.0] {
        for _ in 0..100 {
            let k = rng.random_range(1..=8);
            let m = rng.random_range(1..=6);
            let s = uniform(&mut rng, m, k, 2.0);
            let f = DVector::from_fn(k, |_, _| rng.random_range(-3.0..3.0));
            let phi = compute_phi(&s, beta).unwrap();
            let l = compute_local_l(&s, &phi, beta).unwrap();
            let quad = f.dot(&(&l * &f));

            let w = &phi * &f;
            let mut g = beta * w.norm_squared();
            let mut fit = vec![0.0; k];
            for j in 0..k {
                let pred: f64 = (0..m).map(|r| w[r] * s[(r, j)]).sum();
                fit[j] = pred - f[j];
                g += fit[j] * fit[j];
            }
            // w must be stationary for the ridge objective
            for r in 0..m {
                let grad =
                    2.0 * (0..k).map(|j| s[(r, j)] * fit[j]).sum::<f64>() + 2.0 * beta * w[r];
                worst_grad = worst_grad.max(grad.abs());
            }
            worst = worst.max((quad - g).abs() / g.abs().max(1e-300));
            count += 1;
        }
    }
    outcome(
        worst <= 1e-8 && worst_grad <= 1e-8,
        format!("{count} neighborhoods, max rel err {worst:.2e} (tol 1e-8), max |grad g(w)| {worst_grad:.2e}"),
    )
}

/// Cyclic coordinate descent with exact soft-threshold updates.
fn coordinate_descent(a: &DMatrix<f64>, b: &DVector<f64>, alpha: f64) -> DVector<f64> {
    let m = b.len();
    let mut s = DVector::<f64>::zeros(m);
    for _ in 0..1_000_000 {
        let mut change = 0.0f64;
        for j in 0..m {
            let r = b[j]
                - (0..m)
                    .filter(|&l| l != j)
                    .map(|l| a[(j, l)] * s[l])
                    .sum::<f64>();
            let new = if a[(j, j)] > 0.0 {
                r.signum() * (r.abs() - alpha / 2.0).max(0.0) / a[(j, j)]
            } else {
                0.0
            };
            change = change.max((new - s[j]).abs());
            s[j] = new;
        }
        if change <= 1e-10 {
            break;
        }
    }
    s
}

fn l1_objective(a: &DMatrix<f64>, b: &DVector<f64>, c: f64, alpha: f64, s: &DVector<f64>) -> f64 {
    s.dot(&(a * s)) - 2.0 * b.dot(s) + c + alpha * s.lp_norm(1)
}

fn l1_solver() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut worst_obj, mut worst_sub) = (0.0f64, 0.0f64);
    let mut failures = 0;
    let trials = 240;
    for t in 0..trials {
        let m = rng.random_range(1..=6);
        // every fourth problem has fewer rows than columns, so A is singular
        let rows = if t % 4 == 0 {
            rng.random_range(1..=m)
        } else {
            m + rng.random_range(0..4)
        };
        let basis = uniform(&mut rng, rows, m, 1.5);
        let x = DVector::from_fn(rows, |_, _| rng.random_range(-3.0..3.0));
        let alpha = rng.random_range(0.01..2.0);
        let a = basis.tr_mul(&basis);
        let b = basis.tr_mul(&x);
        let c = x.norm_squared();
        let problem = QuadL1Problem::new(a.clone(), b.clone(), c, alpha).unwrap();
        let s = match feature_sign_solve(&problem, 1e-9) {
            Ok(code) => code.values,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        let oracle = coordinate_descent(&a, &b, alpha);
        let gap =
            (l1_objective(&a, &b, c, alpha, &s) - l1_objective(&a, &b, c, alpha, &oracle)).abs();
        worst_obj = worst_obj.max(gap);
        let grad = (&a * &s - &b) * 2.0;
        for j in 0..m {
            let v = if s[j] == 0.0 {
                (grad[j].abs() - alpha).max(0.0)
            } else {
                (grad[j] + alpha * s[j].signum()).abs()
            };
            worst_sub = worst_sub.max(v);
        }
    }
    outcome(
        failures == 0 && worst_obj <= 1e-6 && worst_sub <= 1e-7,
        format!(
            "{trials} problems, {failures} solver errors, max objective gap {worst_obj:.2e} (tol 1e-6), \
             max subgradient violation {worst_sub:.2e} (tol 1e-7)"
        ),
    )
}

fn ranking_stationarity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    let trials = 30;
    for _ in 0..trials {
        let n = rng.random_range(2..=50);
        let rank_g = rng.random_range(1..=n);
        let g = uniform(&mut rng, n, rank_g, 1.0);
        let m = &g * g.transpose();
        let mut flags: Vec<bool> = (0..n).map(|_| rng.random_bool(0.2)).collect();
        flags[rng.random_range(0..n)] = true;
        let lambda = QueryIndicator::new(flags.clone()).unwrap();
        let (y, gamma, delta) = (
            rng.random_range(0.5..2.0),
            rng.random_range(0.1..3.0),
            rng.random_range(0.5..20.0),
        );
        let f = solve_scores(&m, &lambda, y, gamma, delta).unwrap().f;

        let h = |v: &DVector<f64>| {
            let mut total = 0.0;
            for i in 0..n {
                for j in 0..n {
                    total += gamma * v[i] * m[(i, j)] * v[j];
                }
                if flags[i] {
                    total += delta * (v[i] - y).powi(2);
                }
            }
            total
        };
        let step = 1e-6;
        for i in 0..n {
            let (mut up, mut down) = (f.clone(), f.clone());
            up[i] += step;
            down[i] -= step;
            worst = worst.max(((h(&up) - h(&down)) / (2.0 * step)).abs());
        }
    }
    outcome(
        worst <= 1e-5,
        format!("{trials} systems, max |finite-difference gradient| {worst:.2e} (tol 1e-5)"),
    )
}

/// Projected gradient with step `1 / L` onto the column balls.
fn projected_gradient(x: &DMatrix<f64>, s: &DMatrix<f64>, bound: f64) -> f64 {
    let gram = s * s.transpose();
    let cross = x * s.transpose();
    let lipschitz = 2.0 * gram.symmetric_eigenvalues().max();
    let mut d = DMatrix::<f64>::zeros(x.nrows(), s.nrows());
    let err = |d: &DMatrix<f64>| (x - d * s).norm_squared();
    let mut last = err(&d);
    for _ in 0..2_000_000 {
        let grad = (&d * &gram - &cross) * 2.0;
        d -= grad / lipschitz;
        for mut col in d.column_iter_mut() {
            let norm2 = col.norm_squared();
            if norm2 > bound {
                col *= (bound / norm2).sqrt();
            }
        }
        let now = err(&d);
        if (last - now).abs() <= 1e-15 * (1.0 + now) {
            break;
        }
        last = now;
    }
    err(&d)
}

fn dictionary_kkt() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut feas, mut slack, mut gap) = (0.0f64, 0.0f64, 0.0f64);
    let trials = 40;
    for t in 0..trials {
        let d = rng.random_range(2..=8);
        let m = rng.random_range(1..=6);
        let n = rng.random_range(2 * m..=4 * m + 4);
        let x = uniform(&mut rng, d, n, 3.0);
        // half the trials use sparse codes, as produced by the coder
        let density = if t % 2 == 0 { 1.0 } else { 0.5 };
        let s = DMatrix::from_fn(m, n, |_, _| {
            if rng.random_bool(density) {
                rng.random_range(-2.0..2.0)
            } else {
                0.0
            }
        });
        let bound = rng.random_range(0.2..3.0);
        let up = dictionary_update(&x, &s, bound, 1e-12, None).unwrap();
        let cols = up.dictionary.columns();
        for l in 0..m {
            let norm2 = cols.column(l).norm_squared();
            feas = feas.max(norm2 - bound);
            slack = slack.max((up.multipliers[l] * (norm2 - bound)).abs());
        }
        let ours = (&x - cols * &s).norm_squared();
        gap = gap.max((ours - projected_gradient(&x, &s, bound)).abs());
    }
    outcome(
        feas <= 1e-6 && slack <= 1e-5 && gap <= 1e-5,
        format!(
            "{trials} updates, max norm excess {feas:.2e} (tol 1e-6), max |slackness| {slack:.2e} (tol 1e-5), \
             max objective gap to projected gradient {gap:.2e} (tol 1e-5)"
        ),
    )
}

fn monotone_descent() -> Outcome {
    let fx = generate(40, 5, 2, 7).unwrap();
    let hp = fixture_hp(0);
    let xi = hp.tolerance(40);
    let (_, trace) = fit_with(&fx.data, &fx.queries, &hp, Executor::global()).unwrap();
    let mut stage_rise = f64::NEG_INFINITY;
    for row in &trace.rows {
        let stages = row.stages();
        for pair in stages.windows(2) {
            stage_rise = stage_rise.max(pair[1] - pair[0]);
        }
    }
    let totals: Vec<f64> = trace.rows.iter().map(|r| r.objective.total).collect();
    let total_rise = totals
        .windows(2)
        .map(|p| p[1] - p[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let decreased = totals.last() < totals.first();
    let last_delta = trace.rows.last().and_then(|r| r.delta).unwrap_or(f64::NAN);
    let pass = stage_rise <= 1e-8
        && total_rise <= 1e-8
        && decreased
        && trace.converged
        && trace.rows.len() <= 50;
    outcome(
        pass,
        format!(
            "max stage rise {stage_rise:.2e} (tol 1e-8), max total rise {total_rise:.2e}, total {:.6} -> {:.6}, \
             converged = {} after {} iterations (last |delta O| {last_delta:.3e}, xi {xi:.1e})",
            totals[0],
            totals[totals.len() - 1],
            trace.converged,
            trace.rows.len()
        ),
    )
}

fn retrieval_sanity() -> Outcome {
    let mut misses = 0;
    let mut counts = Vec::new();
    for seed in 0..10u64 {
        let fx = generate(40, 5, 2, seed).unwrap();
        let (state, _) =
            fit_with(&fx.data, &fx.queries, &fixture_hp(seed), Executor::global()).unwrap();
        let ranked = rank(&state, &fx.data, &fx.queries, true).unwrap();
        let position: std::collections::HashMap<&str, usize> = fx
            .data
            .ids()
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let hits = ranked.entries[..19]
            .iter()
            .filter(|e| fx.labels[position[e.id.as_str()]] == 0)
            .count();
        misses += 19 - hits;
        counts.push(hits);
    }
    outcome(
        misses <= 9,
        format!("cluster-0 hits in top 19 per seed {counts:?}, {misses} misses in total (at most 9 allowed)"),
    )
}

fn degenerate_regimes() -> Outcome {
    let fx = generate(40, 5, 2, 7).unwrap();

    let hp = Hyperparams {
        gamma: 0.0,
        ..fixture_hp(0)
    };
    let (state, trace) = fit_with(&fx.data, &fx.queries, &hp, Executor::global()).unwrap();
    let ranking_zero = trace.rows.iter().all(|r| r.objective.ranking == 0.0);
    let anchored = fx
        .queries
        .queries()
        .all(|q| (state.scores.f[q] - hp.y).abs() <= 1e-8);

    // several queries, delta / gamma = 1e4
    let mut flags = fx.queries.as_slice().to_vec();
    flags[3] = true;
    flags[25] = true;
    let many = QueryIndicator::new(flags).unwrap();
    let mut worst_anchor = 0.0f64;
    for lambda in [&fx.queries, &many] {
        let hp = Hyperparams {
            delta: 1e4,
            ..fixture_hp(0)
        };
        let (state, _) = fit_with(&fx.data, lambda, &hp, Executor::global()).unwrap();
        for q in lambda.queries() {
            worst_anchor = worst_anchor.max((state.scores.f[q] - hp.y).abs() / hp.y);
        }
    }

    let mut identity = true;
    for (m, k) in [(1, 1), (3, 5), (6, 8), (8, 2)] {
        let zero = DMatrix::<f64>::zeros(m, k);
        let l = compute_local_l(&zero, &compute_phi(&zero, 0.7).unwrap(), 0.7).unwrap();
        identity &= l == DMatrix::identity(k, k);
    }
    outcome(
        ranking_zero && anchored && worst_anchor <= 1e-2 && identity,
        format!(
            "gamma = 0: ranking term zero in every row = {ranking_zero}, queries at y = {anchored}; \
             delta/gamma = 1e4: max |f_q - y| / y {worst_anchor:.2e} (tol 1e-2); S = 0 gives L = I exactly = {identity}"
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    let gen = GenArgs {
        n: 40,
        d: 5,
        clusters: 2,
        seed: 7,
        data: p("x.csv"),
        queries: p("q.txt"),
    };
    cmd_gen(&gen).unwrap();
    let conf = p("run.conf");
    std::fs::write(&conf, "m = 8\nk = 5\nseed = 3\n").unwrap();

    let mut outputs = Vec::new();
    for run in 0..2 {
        let (out, trace) = (p(&format!("rank{run}.csv")), p(&format!("trace{run}.csv")));
        let args = FitArgs::try_parse_from([
            "fit",
            "--data",
            p("x.csv").to_str().unwrap(),
            "--queries",
            p("q.txt").to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--trace",
            trace.to_str().unwrap(),
            "--config",
            conf.to_str().unwrap(),
        ])
        .unwrap();
        cmd_fit(&parse_config(&args).unwrap()).unwrap();
        outputs.push((std::fs::read(out).unwrap(), std::fs::read(trace).unwrap()));
    }
    let same_rank = outputs[0].0 == outputs[1].0;
    let same_trace = outputs[0].1 == outputs[1].1;
    outcome(
        same_rank && same_trace,
        format!(
            "ranking identical = {same_rank} ({} bytes), trace identical = {same_trace} ({} bytes)",
            outputs[0].0.len(),
            outputs[0].1.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("closed-form local regularizer", closed_form),
        ("L1 solver vs coordinate descent", l1_solver),
        ("ranking stationarity", ranking_stationarity),
        ("dictionary KKT", dictionary_kkt),
        ("surrogate monotone descent", monotone_descent),
        ("retrieval sanity", retrieval_sanity),
        ("degenerate regimes", degenerate_regimes),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (number, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        println!(
            "{verdict} {} {name}: {} [{:.1}s]",
            number + 1,
            result.detail,
            start.elapsed().as_secs_f64()
        );
        failed += usize::from(!result.pass);
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
