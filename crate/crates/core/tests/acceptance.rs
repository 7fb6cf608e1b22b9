//! Acceptance suite: one test per criterion, each printing a single
//! `PASS`/`FAIL` line with the measured quantities and its runtime.
//!
//! Run with `cargo test -p mobound-core --test acceptance -- --nocapture`
//! to see the report lines.

use std::time::{Duration, Instant};

use mobound_core::boosting::{self, TrainConfig};
use mobound_core::bounds::{self, BoundInputs};
use mobound_core::complexity::{self, EvalGrid};
use mobound_core::losses::{check_sbl, SamplerConfig};
use mobound_core::minimax::{self, LearnerKind};
use mobound_core::trees::project_l1_box;
use mobound_core::{Dataset, Label, LossKind, Model, SblParams, TaskKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, name: &str, ok: bool, elapsed: Duration, limit: Duration, detail: &str) {
    let in_time = elapsed <= limit;
    let verdict = if ok && in_time { "PASS" } else { "FAIL" };
    println!(
        "AC{id} {verdict} {name}: {detail} [{:.2}s of {:.0}s]",
        elapsed.as_secs_f64(),
        limit.as_secs_f64()
    );
    assert!(ok, "AC{id} {name} failed: {detail}");
    assert!(in_time, "AC{id} {name} exceeded its runtime budget");
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn ac1_sbl_falsification_suite() {
    let start = Instant::now();
    let mut cases: Vec<(LossKind, usize)> = Vec::new();
    for rho in [0.5, 1.0, 2.0] {
        cases.push((LossKind::SmoothMargin { rho }, 10));
    }
    cases.push((LossKind::MultinomialLogistic, 10));
    for k in [1, 4] {
        cases.push((LossKind::PickAllLabels { k }, 10));
    }
    for gamma in [1.0, 1.5, 2.0] {
        cases.push((LossKind::SupNorm { kappa: 1.0, gamma }, 5));
    }
    cases.push((LossKind::BoundedExponential, 1));
    for theta in [0.0, 0.5] {
        cases.push((LossKind::MinimaxPower { lambda: 1.0, theta }, 3));
    }
    cases.push((LossKind::clipped(LossKind::MultinomialLogistic, 3.0), 10));

    let config = SamplerConfig::default();
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for (i, (loss, q)) in cases.iter().enumerate() {
        let params = loss.declared_params().unwrap();
        let rep = check_sbl(loss, &params, *q, 100_000, &config, 1000 + i as u64).unwrap();
        worst = worst.max(rep.max_violation);
        if !rep.passed {
            failures.push(format!("{loss} violation {:.3e}", rep.max_violation));
        }
    }

    // Any finite lambda with theta = 0 must be refuted for the 0-1 loss.
    let mut zero_one_caught = 0;
    let lambdas = [1.0, 1e3, 1e6];
    for (i, &lambda) in lambdas.iter().enumerate() {
        let params = SblParams::new(lambda, 0.0, 1.0).unwrap();
        let rep = check_sbl(&LossKind::ZeroOne, &params, 10, 100_000, &config, 2000 + i as u64).unwrap();
        if !rep.passed {
            zero_one_caught += 1;
        } else {
            failures.push(format!("zero_one not refuted at lambda {lambda}"));
        }
    }

    let ok = failures.is_empty();
    let detail = format!(
        "{} declared losses, worst violation {worst:.2e}; zero_one refuted at {zero_one_caught}/{} lambdas {}",
        cases.len(),
        lambdas.len(),
        failures.join("; ")
    );
    report(1, "self-bounding Lipschitz falsification", ok, start.elapsed(), Duration::from_secs(60), &detail);
}

#[test]
fn ac2_sandwich() {
    let start = Instant::now();
    let mut r = rng(2);
    let mut violations = 0;
    for _ in 0..10_000 {
        let q = r.gen_range(2..=10);
        let rho = r.gen_range(0.05..3.0);
        let scale = 10f64.powf(r.gen_range(-2.0..1.0));
        let u: Vec<f64> = (0..q).map(|_| r.gen_range(-1.0..1.0) * scale).collect();
        let y = Label::ClassIndex(r.gen_range(1..=q));
        let low = LossKind::ZeroOne.eval(&u, &y).unwrap();
        let mid = LossKind::SmoothMargin { rho }.eval(&u, &y).unwrap();
        let high = LossKind::HardMargin { rho }.eval(&u, &y).unwrap();
        if !(low <= mid && mid <= high) {
            violations += 1;
        }
    }
    let detail = format!("{violations} violations over 10000 draws");
    report(2, "margin sandwich", violations == 0, start.elapsed(), Duration::from_secs(5), &detail);
}

/// Distance in score space to the nearest point where `loss` is not
/// differentiable.
fn kink_distance(loss: &LossKind, u: &[f64], y: &Label) -> f64 {
    let sorted_gap = |vals: &mut Vec<f64>| -> f64 {
        vals.sort_by(|a, b| b.total_cmp(a));
        if vals.len() > 1 {
            vals[0] - vals[1]
        } else {
            f64::INFINITY
        }
    };
    match loss {
        LossKind::SmoothMargin { rho } => {
            let Label::ClassIndex(c) = y else { unreachable!() };
            let mut others: Vec<f64> = u.iter().enumerate().filter(|(j, _)| j + 1 != *c).map(|(_, &v)| v).collect();
            let tie = sorted_gap(&mut others);
            let m = u[c - 1] - others[0];
            tie.min(m.abs()).min((m - rho).abs())
        }
        LossKind::MultinomialLogistic | LossKind::PickAllLabels { .. } => f64::INFINITY,
        LossKind::SupNorm { .. } | LossKind::MinimaxPower { .. } => {
            let Label::RealVector(t) = y else { unreachable!() };
            let mut r: Vec<f64> = u.iter().zip(t).map(|(a, b)| (a - b).abs()).collect();
            let norm = r.iter().copied().fold(0.0, f64::max);
            let mut d = sorted_gap(&mut r).min(norm);
            if let LossKind::MinimaxPower { lambda, theta } = loss {
                // Clip boundary at lambda * norm = 32^(1 - theta).
                let edge = 32f64.powf(1.0 - theta) / lambda;
                d = d.min((norm - edge).abs());
            }
            d
        }
        LossKind::BoundedExponential => u[0].abs(),
        LossKind::Clipped { inner, bound } => {
            let value = inner.eval(u, y).unwrap();
            // The inner losses used here are at most 2-Lipschitz in sup-norm,
            // so the clip boundary is at least half the value gap away.
            kink_distance(inner, u, y).min((value - bound).abs() / 2.0)
        }
        _ => 0.0,
    }
}

fn random_label(loss: &LossKind, q: usize, r: &mut ChaCha8Rng) -> Label {
    match loss.base() {
        LossKind::SmoothMargin { .. } | LossKind::MultinomialLogistic => Label::ClassIndex(r.gen_range(1..=q)),
        LossKind::PickAllLabels { k } => {
            let count = r.gen_range(1..=*k.min(&q));
            let mut idx: Vec<usize> = (1..=q).collect();
            for i in 0..count {
                let j = r.gen_range(i..q);
                idx.swap(i, j);
            }
            Label::from_active(q, &idx[..count]).unwrap()
        }
        LossKind::SupNorm { .. } | LossKind::MinimaxPower { .. } => {
            Label::RealVector((0..q).map(|_| r.gen_range(-3.0..3.0)).collect())
        }
        LossKind::BoundedExponential => Label::BinarySign(if r.gen::<bool>() { 1 } else { -1 }),
        _ => unreachable!(),
    }
}

#[test]
fn ac3_gradient_checks() {
    let start = Instant::now();
    let losses = vec![
        LossKind::SmoothMargin { rho: 0.5 },
        LossKind::SmoothMargin { rho: 1.0 },
        LossKind::SmoothMargin { rho: 2.0 },
        LossKind::MultinomialLogistic,
        LossKind::PickAllLabels { k: 1 },
        LossKind::PickAllLabels { k: 4 },
        LossKind::SupNorm { kappa: 1.0, gamma: 1.0 },
        LossKind::SupNorm { kappa: 1.0, gamma: 1.5 },
        LossKind::SupNorm { kappa: 2.0, gamma: 2.0 },
        LossKind::BoundedExponential,
        LossKind::MinimaxPower { lambda: 1.0, theta: 0.0 },
        LossKind::MinimaxPower { lambda: 8.0, theta: 0.5 },
        LossKind::clipped(LossKind::MultinomialLogistic, 3.0),
    ];
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for (li, loss) in losses.iter().enumerate() {
        assert!(loss.is_differentiable());
        let q = loss.fixed_output_dim().unwrap_or(5);
        let mut r = rng(300 + li as u64);
        let mut accepted = 0;
        let mut attempts = 0;
        while accepted < 1000 {
            attempts += 1;
            assert!(attempts < 1_000_000, "could not find smooth points for {loss}");
            let u: Vec<f64> = (0..q).map(|_| r.gen_range(-3.0..3.0)).collect();
            let y = random_label(loss, q, &mut r);
            if kink_distance(loss, &u, &y) < 1e-3 {
                continue;
            }
            accepted += 1;
            let g = loss.grad(&u, &y).unwrap();
            let mut err: f64 = 0.0;
            for j in 0..q {
                let mut up = u.clone();
                let mut down = u.clone();
                up[j] += h;
                down[j] -= h;
                let fd = (loss.eval(&up, &y).unwrap() - loss.eval(&down, &y).unwrap()) / (2.0 * h);
                err = err.max((g[j] - fd).abs());
            }
            let scale = g.iter().fold(1.0f64, |a, b| a.max(b.abs()));
            let rel = err / scale;
            worst = worst.max(rel);
            if rel > 1e-5 {
                failures.push(format!("{loss} rel err {rel:.2e} at {u:?}"));
            }
        }
    }
    let detail = format!(
        "{} losses x 1000 points, worst relative error {worst:.2e}{}",
        losses.len(),
        failures.first().map(|f| format!("; first failure {f}")).unwrap_or_default()
    );
    report(3, "gradients vs central differences", failures.is_empty(), start.elapsed(), Duration::from_secs(10), &detail);
}

/// Projection onto the `l1` ball by bisection on the soft threshold.
fn project_l1_ball(v: &[f64], tau: f64) -> Vec<f64> {
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    if l1 <= tau {
        return v.to_vec();
    }
    let (mut lo, mut hi) = (0.0, v.iter().fold(0.0f64, |a, b| a.max(b.abs())));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let s: f64 = v.iter().map(|x| (x.abs() - mid).max(0.0)).sum();
        if s > tau {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    v.iter().map(|x| x.signum() * (x.abs() - hi).max(0.0)).collect()
}

/// Dykstra's alternating projections onto the box and the `l1` ball.
fn dykstra_oracle(v: &[f64], tau: f64) -> Vec<f64> {
    let q = v.len();
    let mut x = v.to_vec();
    let mut p = vec![0.0; q];
    let mut r = vec![0.0; q];
    for _ in 0..200_000 {
        let y: Vec<f64> = (0..q).map(|j| (x[j] + p[j]).clamp(-1.0, 1.0)).collect();
        let p_new: Vec<f64> = (0..q).map(|j| x[j] + p[j] - y[j]).collect();
        let z_in: Vec<f64> = (0..q).map(|j| y[j] + r[j]).collect();
        let z = project_l1_ball(&z_in, tau);
        let r_new: Vec<f64> = (0..q).map(|j| z_in[j] - z[j]).collect();
        // The iterate can sit still while the corrections move, so all three
        // must settle before stopping.
        let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(s, t)| (s - t).abs()).fold(0.0, f64::max);
        let change = diff(&z, &x).max(diff(&p_new, &p)).max(diff(&r_new, &r));
        x = z;
        p = p_new;
        r = r_new;
        if change < 1e-15 {
            break;
        }
    }
    x
}

#[test]
fn ac4_projection_oracle() {
    let start = Instant::now();
    let mut r = rng(4);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let q = r.gen_range(1..=6);
        let tau = r.gen_range(0.05..7.0);
        let scale = r.gen_range(0.1..4.0);
        let v: Vec<f64> = (0..q).map(|_| r.gen_range(-1.0..1.0) * scale).collect();
        let w = project_l1_box(&v, tau);
        let o = dykstra_oracle(&v, tau);
        let dist = w.iter().zip(&o).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        worst = worst.max(dist);
    }
    let detail = format!("max l2 distance to Dykstra oracle {worst:.2e} over 10000 instances");
    report(4, "l1-box projection", worst <= 1e-8, start.elapsed(), Duration::from_secs(30), &detail);
}

#[test]
fn ac5_rademacher_mc_vs_exact() {
    let start = Instant::now();
    let mut r = rng(5);
    let mut worst_z: f64 = 0.0;
    let mut misses = 0;
    for g in 0..20 {
        let m = r.gen_range(4..=16);
        let k = r.gen_range(2..=12);
        let columns: Vec<Vec<f64>> = (0..k).map(|_| (0..m).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
        let grid = EvalGrid::from_columns(&columns).unwrap();
        let exact = complexity::empirical_rademacher_exact(&grid).unwrap();
        let mc = complexity::empirical_rademacher_mc(&grid, 2000, 500 + g).unwrap();
        let z = (mc.mean - exact.mean).abs() / mc.std_error;
        worst_z = worst_z.max(z);
        if (mc.mean - exact.mean).abs() > 3.0 * mc.std_error {
            misses += 1;
        }
    }
    let detail = format!("{misses}/20 grids outside 3 SE, largest |z| {worst_z:.2}");
    report(5, "Monte Carlo Rademacher vs enumeration", misses == 0, start.elapsed(), Duration::from_secs(20), &detail);
}

#[test]
fn ac6_stump_class_bound() {
    let start = Instant::now();
    let mut r = rng(6);
    let mut misses = 0;
    let mut tightest: f64 = 0.0;
    for i in 0..50 {
        let n = r.gen_range(2..=16);
        let d = r.gen_range(1..=3);
        let q = r.gen_range(1..=4);
        let tau = 1.0;
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| r.gen_range(0.0..1.0)).collect()).collect();
        let est = complexity::exact_stump_rademacher(&x, q, tau, 2000, 600 + i).unwrap();
        let bound = complexity::tree_class_rad_bound(2, tau, d, n, q).unwrap();
        tightest = tightest.max(est.mean / bound);
        if est.mean > bound + 3.0 * est.std_error {
            misses += 1;
        }
    }
    let detail = format!("{misses}/50 instances above bound + 3 SE, largest estimate/bound {tightest:.3}");
    report(6, "stump Rademacher below class bound", misses == 0, start.elapsed(), Duration::from_secs(60), &detail);
}

fn synthetic(n: usize, r: &mut ChaCha8Rng) -> Dataset {
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..5).map(|_| r.gen_range(0.0..1.0)).collect();
        let class = 1 + ((5.0 * row[0]).floor() as usize).min(4);
        x.push(row);
        y.push(Label::ClassIndex(class));
    }
    Dataset::new(x, y, TaskKind::Multiclass { q: 5 }).unwrap()
}

fn ac7_config(seed: u64) -> TrainConfig {
    TrainConfig { rounds: 50, leaves: 4, tau: 1.0, beta: 2.0, seed, ..TrainConfig::default() }
}

#[test]
fn ac7_certificate_validity() {
    let start = Instant::now();
    let loss = LossKind::clipped(LossKind::MultinomialLogistic, 3.0);
    let mut held = 0;
    let mut min_slack = f64::INFINITY;
    let mut last = (0.0, 0.0, 0.0);
    for seed in 0..100u64 {
        let mut r = rng(7_000 + seed);
        let train = synthetic(2000, &mut r);
        let holdout = synthetic(10_000, &mut r);
        let ens = boosting::train(&train, &loss, &ac7_config(seed)).unwrap();
        let cert = bounds::certify(&ens, &train, &loss, 0.05, 1.0).unwrap();
        let risk = boosting::empirical_risk(&ens, &holdout, &loss).unwrap();
        min_slack = min_slack.min(cert.bound_explicit - risk);
        last = (cert.empirical_risk, risk, cert.bound_explicit);
        if risk <= cert.bound_explicit {
            held += 1;
        }
    }
    let detail = format!(
        "bound held in {held}/100 seeds (need 95), min slack {min_slack:.3}; last seed train {:.4} holdout {:.4} bound {:.2}",
        last.0, last.1, last.2
    );
    report(7, "certificate validity", held >= 95, start.elapsed(), Duration::from_secs(600), &detail);
}

fn loglog_slope(ns: &[usize], values: &[f64]) -> f64 {
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[test]
fn ac8_fast_rate_slope() {
    let start = Instant::now();
    let ns = [250usize, 500, 1000, 2000, 4000];
    let q = 5;
    let slope = |theta: f64| {
        let values: Vec<f64> = ns
            .iter()
            .map(|&n| {
                let inputs = BoundInputs {
                    n,
                    q,
                    delta: 0.05,
                    lambda: 2.0,
                    theta,
                    beta: 1.0,
                    loss_bound: 1.0,
                    rad_nq: 1.0 / ((n * q) as f64).sqrt(),
                };
                bounds::gamma(&inputs).unwrap()
            })
            .collect();
        loglog_slope(&ns, &values)
    };
    let s_half = slope(0.5);
    let s_zero = slope(0.0);
    let ok = (-1.25..=-0.8).contains(&s_half) && (-0.65..=-0.4).contains(&s_zero);
    let detail = format!("slope {s_half:.3} at theta=1/2 (need [-1.25,-0.8]), {s_zero:.3} at theta=0 (need [-0.65,-0.4])");
    report(8, "fast-rate slope of gamma", ok, start.elapsed(), Duration::from_secs(1), &detail);
}

#[test]
fn ac9_minimax_envelope() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut lines = Vec::new();
    for theta in [0.0, 0.5] {
        for n in [20usize, 50, 100] {
            let rep = minimax::run_experiment(1.0, theta, n, 2, 1.0, 1000, 900 + n as u64).unwrap();
            for s in &rep.learners {
                match s.learner {
                    LearnerKind::Oracle => {
                        if s.mean_risk != 0.0 {
                            failures.push(format!("oracle risk {} at n={n} theta={theta}", s.mean_risk));
                        }
                    }
                    _ => {
                        if s.mean_risk + 3.0 * s.se < rep.lower_envelope {
                            failures.push(format!("{} below envelope at n={n} theta={theta}", s.learner.name()));
                        }
                    }
                }
            }
            let erm = rep.learners.iter().find(|s| s.learner == LearnerKind::ErmMatchObserved).unwrap();
            lines.push(format!("n={n},theta={theta}: erm {:.2e} vs env {:.2e}", erm.mean_risk, rep.lower_envelope));
        }
    }
    let detail = format!("{}; {}", lines.join(", "), failures.join("; "));
    report(9, "minimax lower envelope", failures.is_empty(), start.elapsed(), Duration::from_secs(60), &detail);
}

fn deterministic_run(threads: usize) -> (String, String) {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        let mut r = rng(10);
        let train = synthetic(1000, &mut r);
        let loss = LossKind::clipped(LossKind::MultinomialLogistic, 3.0);
        let ens = boosting::train(&train, &loss, &ac7_config(10)).unwrap();
        let model = Model::new(ens, Some(ac7_config(10))).unwrap();
        let cert = bounds::certify(&model.ensemble, &train, &loss, 0.05, 1.0).unwrap();
        (model.to_json().unwrap(), cert.payload_json().unwrap())
    })
}

#[test]
fn ac10_determinism() {
    let start = Instant::now();
    let (m1, c1) = deterministic_run(1);
    let (m2, c2) = deterministic_run(4);
    let (m3, c3) = deterministic_run(4);
    let ok = m1 == m2 && m2 == m3 && c1 == c2 && c2 == c3;
    let detail = format!(
        "model {} bytes, certificate payload {} bytes; identical across 1 and 4 threads: {ok}",
        m1.len(),
        c1.len()
    );
    report(10, "determinism", ok, start.elapsed(), Duration::from_secs(60), &detail);
}
