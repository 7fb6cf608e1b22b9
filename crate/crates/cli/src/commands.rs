//! Subcommand implementations.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use mobound_core::boosting::{self, TrainConfig};
use mobound_core::bounds::{self, BoundInputs};
use mobound_core::complexity::{self, ComplexityReport, EvalGrid, VectorFunction};
use mobound_core::losses::{check_sbl, SamplerConfig};
use mobound_core::minimax::{self, MinimaxReport};
use mobound_core::trees::SplitCandidates;
use mobound_core::{Dataset, Error, LossKind, Model, SblParams, SblReport, TaskKind};
use serde::{Deserialize, Serialize};

use crate::{CertifyArgs, CheckLossArgs, EstimateRadArgs, MinimaxArgs, SweepGammaArgs, TrainArgs};

type Result<T> = std::result::Result<T, Error>;

/// The given seed, or a fresh one announced on stderr so the run can be
/// repeated.
fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("no --seed given; using generated seed {s}");
        s
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn row(key: &str, value: impl std::fmt::Display) {
    println!("{key:<24}{value}");
}

/// Task layout implied by a loss and output dimension.
fn schema_for(loss: &LossKind, q: usize) -> Result<TaskKind> {
    match loss.base() {
        LossKind::PickAllLabels { k } => Ok(TaskKind::Multilabel { q, k: *k }),
        LossKind::SupNorm { .. } | LossKind::MinimaxPower { .. } => Ok(TaskKind::Regression { q }),
        LossKind::BoundedExponential => Ok(TaskKind::Binary),
        _ => Ok(TaskKind::Multiclass { q }),
    }
}

/// Infers `q` from the largest label index in the last column of the file.
fn infer_schema(loss: &LossKind, path: &Path) -> Result<TaskKind> {
    match loss.base() {
        LossKind::SupNorm { .. } | LossKind::MinimaxPower { .. } => {
            return Err(Error::InvalidParameter("regression data needs --schema regression:Q".into()));
        }
        LossKind::BoundedExponential => return Ok(TaskKind::Binary),
        _ => {}
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?;
    let mut largest = 0usize;
    let mut rows = 0usize;
    for record in rdr.records() {
        let record = record?;
        rows += 1;
        let last = record.iter().next_back().unwrap_or("");
        for part in last.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            if let Ok(j) = part.parse::<usize>() {
                largest = largest.max(j);
            }
        }
    }
    if rows == 0 {
        return Err(Error::EmptyData("no rows".into()));
    }
    let q = largest.max(2);
    let task = schema_for(loss, q)?;
    eprintln!("inferred schema {task}; pass --schema to override");
    Ok(task)
}

pub fn train(a: &TrainArgs) -> Result<()> {
    a.loss.validate()?;
    let task = match a.schema {
        Some(t) => t,
        None => infer_schema(&a.loss, &a.data)?,
    };
    let data = Dataset::load_csv(&a.data, task)?;
    let cfg = TrainConfig {
        rounds: a.rounds,
        shrinkage: a.shrinkage,
        leaves: a.leaves,
        tau: a.tau,
        tau_decay: a.tau_decay,
        min_samples_leaf: a.min_samples_leaf,
        split_candidates: a.quantiles.map_or(SplitCandidates::Exhaustive, SplitCandidates::Quantile),
        beta: a.beta,
        patience: a.patience,
        certify_delta: a.certify_delta,
        seed: resolve_seed(a.seed),
    };
    let (ens, trace) = boosting::train_traced(&data, &a.loss, &cfg)?;
    let model = Model::new(ens, Some(cfg))?;
    row("loss", &a.loss);
    row("schema", task);
    row("examples", data.n());
    row("rounds fitted", model.ensemble.stages.len());
    row("alpha sum", format!("{:.6}", model.ensemble.alpha_sum()));
    row("initial risk", format!("{:.6}", trace.first().copied().unwrap_or(f64::NAN)));
    row("training risk", format!("{:.6}", boosting::empirical_risk(&model.ensemble, &data, &a.loss)?));
    row("model hash", &model.content_hash);
    write_text(&a.out, &model.to_json()?)
}

pub fn certify(a: &CertifyArgs) -> Result<()> {
    let model = Model::from_json(&std::fs::read_to_string(&a.model)?)?;
    let ens = &model.ensemble;
    let loss = a.loss.clone().unwrap_or_else(|| ens.loss.clone());
    let task = match a.schema {
        Some(t) => t,
        None => schema_for(&loss, ens.q)?,
    };
    let data = Dataset::load_csv(&a.data, task)?;
    let cert = bounds::certify(ens, &data, &loss, a.delta, a.c0)?;
    row("loss", &cert.loss);
    row("n", cert.inputs.n);
    row("q", cert.inputs.q);
    row("delta", cert.inputs.delta);
    row("lambda", cert.inputs.lambda);
    row("theta", cert.inputs.theta);
    row("beta", cert.inputs.beta);
    row("B", cert.inputs.loss_bound);
    row("rad_nq", format!("{:.6e}", cert.inputs.rad_nq));
    row("empirical risk", format!("{:.6}", cert.empirical_risk));
    row("gamma", format!("{:.6e}", cert.gamma));
    row("rhat", format!("{:.6e}", cert.rhat));
    row("r0", format!("{:.6e}", cert.r0));
    row("ensemble term", format!("{:.6e}", cert.ensemble_term));
    row("bound (explicit)", format!("{:.6e}", cert.bound_explicit));
    row(&format!("bound (c0 = {})", a.c0), format!("{:.6e}", cert.bound_cform));
    if cert.bound_explicit >= cert.inputs.loss_bound {
        println!("note: the explicit bound exceeds B and is vacuous at this sample size");
    }
    row("model hash", &cert.model_hash);
    if let Some(out) = &a.out {
        write_text(out, &cert.to_json()?)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CheckOutput<'a> {
    seed: u64,
    report: &'a SblReport,
}

pub fn check_loss(a: &CheckLossArgs) -> Result<()> {
    a.loss.validate()?;
    let params = match (a.loss.declared_params(), a.lambda, a.theta) {
        (Ok(p), lambda, theta) => SblParams::new(lambda.unwrap_or(p.lambda), theta.unwrap_or(p.theta), p.bound)?,
        (Err(_), Some(lambda), theta) => SblParams::new(lambda, theta.unwrap_or(0.0), f64::INFINITY)?,
        (Err(e), None, _) => {
            return Err(Error::InvalidParameter(format!("{e}; pass --lambda (and --theta) to test a claim")));
        }
    };
    let seed = resolve_seed(a.seed);
    let rep = check_sbl(&a.loss, &params, a.q, a.trials, &SamplerConfig::default(), seed)?;
    row("loss", &rep.loss);
    row("lambda", rep.lambda);
    row("theta", rep.theta);
    row("q", rep.q);
    row("trials", rep.trials);
    row("seed", seed);
    row("max violation", format!("{:.3e}", rep.max_violation));
    row("tightest lambda", format!("{:.6}", rep.tightest_lambda));
    row("passed", rep.passed);
    if let (false, Some(w)) = (rep.passed, &rep.worst_case) {
        println!("witness: u={:?} v={:?} y={:?} L(u)={} L(v)={}", w.u, w.v, w.y, w.loss_u, w.loss_v);
    }
    if let Some(out) = &a.out {
        write_text(out, &serde_json::to_string_pretty(&CheckOutput { seed, report: &rep })?)?;
    }
    Ok(())
}

/// Grid of the stage trees and their negations on the `n q` projected points.
fn model_grid(model: &Model, data: &Dataset) -> Result<EvalGrid> {
    let ens = &model.ensemble;
    if ens.stages.is_empty() {
        return EvalGrid::from_columns(&[vec![0.0; data.n() * ens.q]]);
    }
    let trees: Vec<&dyn VectorFunction> = ens.stages.iter().map(|s| &s.tree as &dyn VectorFunction).collect();
    let grid = complexity::project_class(&trees, &data.x, ens.q)?;
    let mut columns: Vec<Vec<f64>> = (0..grid.k).map(|c| grid.column(c)).collect();
    let negated: Vec<Vec<f64>> = columns.iter().map(|c| c.iter().map(|v| -v).collect()).collect();
    columns.extend(negated);
    EvalGrid::from_columns(&columns)
}

pub fn estimate_rad(a: &EstimateRadArgs) -> Result<()> {
    let seed = resolve_seed(a.seed);
    let report = if let Some(path) = &a.model {
        let model = Model::from_json(&std::fs::read_to_string(path)?)?;
        let ens = &model.ensemble;
        let task = match a.schema {
            Some(t) => t,
            None => schema_for(&ens.loss, ens.q)?,
        };
        let data = Dataset::load_csv(&a.data, task)?;
        if data.d() != ens.d {
            return Err(Error::DimensionMismatch { expected: ens.d, got: data.d() });
        }
        let grid = model_grid(&model, &data)?;
        let estimate = complexity::empirical_rademacher(&grid, a.draws, seed)?;
        let tau = ens.stages.iter().map(|s| s.tree.tau).fold(0.0, f64::max);
        let leaves = ens.max_leaves();
        let bound = if tau > 0.0 { complexity::tree_class_rad_bound(leaves, tau, ens.d, data.n(), ens.q)? } else { 0.0 };
        ComplexityReport { n: data.n(), d: ens.d, q: ens.q, tau, leaves, seed, estimate, tree_class_bound: bound }
    } else {
        let task = a
            .schema
            .ok_or_else(|| Error::InvalidParameter("--stumps needs --schema to read the data".into()))?;
        let data = Dataset::load_csv(&a.data, task)?;
        let q = task.q();
        let estimate = complexity::exact_stump_rademacher(&data.x, q, a.tau, a.draws, seed)?;
        let bound = complexity::tree_class_rad_bound(2, a.tau, data.d(), data.n(), q)?;
        ComplexityReport { n: data.n(), d: data.d(), q, tau: a.tau, leaves: 2, seed, estimate, tree_class_bound: bound }
    };
    row("points (n q)", report.n * report.q);
    row("leaves", report.leaves);
    row("tau", report.tau);
    row("seed", report.seed);
    row(
        if report.estimate.exact { "rademacher (exact)" } else { "rademacher (MC)" },
        format!("{:.6e}", report.estimate.mean),
    );
    row("standard error", format!("{:.3e}", report.estimate.std_error));
    row("draws", report.estimate.draws);
    row("tree class bound", format!("{:.6e}", report.tree_class_bound));
    if let Some(out) = &a.out {
        write_text(out, &serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}

pub fn minimax(a: &MinimaxArgs) -> Result<()> {
    let seed = resolve_seed(a.seed);
    let mut reports: Vec<MinimaxReport> = Vec::new();
    for &lambda in &a.lambda {
        for &theta in &a.theta {
            for &n in &a.n {
                reports.push(minimax::run_experiment(lambda, theta, n, a.q, a.kappa, a.trials, seed)?);
            }
        }
    }
    println!("{:>8} {:>6} {:>6} {:>20} {:>12} {:>10} {:>12}", "lambda", "theta", "n", "learner", "mean_risk", "se", "envelope");
    for rep in &reports {
        for l in &rep.learners {
            println!(
                "{:>8} {:>6} {:>6} {:>20} {:>12.4e} {:>10.2e} {:>12.4e}",
                rep.lambda,
                rep.theta,
                rep.n,
                l.learner.name(),
                l.mean_risk,
                l.se,
                rep.lower_envelope
            );
        }
    }
    println!("seed {seed}; {}", reports.first().map_or("", |r| r.scope.as_str()));
    if let Some(out) = &a.out {
        let file = BufWriter::new(File::create(out)?);
        minimax::write_sweep_csv(&reports, file)?;
        eprintln!("wrote {}", out.display());
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct GridRow {
    n: usize,
    q: usize,
    delta: f64,
    lambda: f64,
    theta: f64,
    beta: f64,
    #[serde(rename = "B")]
    loss_bound: f64,
    rad_nq: f64,
}

#[derive(Debug, Serialize)]
struct GridResult {
    n: usize,
    q: usize,
    delta: f64,
    lambda: f64,
    theta: f64,
    beta: f64,
    #[serde(rename = "B")]
    loss_bound: f64,
    rad_nq: f64,
    gamma: f64,
    rhat: f64,
    r0: f64,
}

pub fn sweep_gamma(a: &SweepGammaArgs) -> Result<()> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(&a.grid_file)?;
    let sink: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    let mut rows = 0;
    for record in rdr.deserialize::<GridRow>() {
        let r = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Parse { line, msg: e.to_string() }
        })?;
        rows += 1;
        let line = rows + 1;
        let inputs = BoundInputs {
            n: r.n,
            q: r.q,
            delta: r.delta,
            lambda: r.lambda,
            theta: r.theta,
            beta: r.beta,
            loss_bound: r.loss_bound,
            rad_nq: r.rad_nq,
        };
        let eval = || -> Result<(f64, f64, f64)> { Ok((bounds::gamma(&inputs)?, inputs.rhat()?, inputs.r0()?)) };
        let (gamma, rhat, r0) = eval().map_err(|e| Error::AtLine { line, source: Box::new(e) })?;
        w.serialize(GridResult {
            n: r.n,
            q: r.q,
            delta: r.delta,
            lambda: r.lambda,
            theta: r.theta,
            beta: r.beta,
            loss_bound: r.loss_bound,
            rad_nq: r.rad_nq,
            gamma,
            rhat,
            r0,
        })?;
    }
    w.flush()?;
    if rows == 0 {
        return Err(Error::EmptyData("no rows".into()));
    }
    if let Some(p) = &a.out {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}
