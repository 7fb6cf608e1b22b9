//! Randomized search for violations of a claimed self-bounding Lipschitz pair.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{eval, Label, LossKind, SblParams};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Sampling knobs for [`check_sbl`].
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    /// Scores are drawn from `[-2*beta_box, 2*beta_box]^q`.
    pub beta_box: f64,
    /// Exact sup-norm distances used for perturbation pairs.
    pub steps: Vec<f64>,
    /// Bisection rounds applied to every pair, moving toward the half with
    /// the larger difference quotient.
    pub refine_steps: usize,
    /// Absolute slack before an excess counts as a violation.
    pub tolerance: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { beta_box: 5.0, steps: vec![1e-3, 1e-1, 1.0], refine_steps: 40, tolerance: 1e-9 }
    }
}

/// The triple attaining the largest excess.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub y: Label,
    pub loss_u: f64,
    pub loss_v: f64,
    /// `|L(u)-L(v)| - lambda * max^theta * ||u-v||_inf`, may be negative.
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SblReport {
    pub loss: String,
    pub lambda: f64,
    pub theta: f64,
    pub q: usize,
    pub trials: usize,
    /// Largest positive excess, 0 when nothing exceeded the claimed bound.
    pub max_violation: f64,
    pub worst_case: Option<Witness>,
    pub passed: bool,
    pub tolerance: f64,
    /// Largest observed `|L(u)-L(v)| / (max^theta * ||u-v||_inf)`: the
    /// smallest lambda consistent with every sampled pair whose loss
    /// difference exceeds `tolerance`.
    pub tightest_lambda: f64,
}

struct Trial {
    index: usize,
    excess: f64,
    ratio: f64,
    u: Vec<f64>,
    v: Vec<f64>,
    y: Label,
    loss_u: f64,
    loss_v: f64,
}

/// Tries to falsify `params` for `loss` on random score pairs in dimension `q`.
///
/// Scalar-output losses ignore `q` and use dimension 1. Each trial draws
/// from its own generator stream, so the report depends only on `seed`.
pub fn check_sbl(
    loss: &LossKind,
    params: &SblParams,
    q: usize,
    trials: usize,
    config: &SamplerConfig,
    seed: u64,
) -> Result<SblReport> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    if !(config.beta_box > 0.0) || config.steps.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidParameter("sampler box and steps must be positive".into()));
    }
    loss.validate()?;
    let q = loss.fixed_output_dim().unwrap_or(q);
    if q == 0 {
        return Err(Error::InvalidParameter("q must be at least 1".into()));
    }

    let best = (0..trials)
        .into_par_iter()
        .map(|t| run_trial(loss, params, q, t, config, seed))
        .try_reduce_with(|a, b| Ok(pick_worse(a, b)))
        .expect("at least one trial")?;
    let ratio = best.ratio;

    let max_violation = best.excess.max(0.0);
    Ok(SblReport {
        loss: loss.to_string(),
        lambda: params.lambda,
        theta: params.theta,
        q,
        trials,
        max_violation,
        passed: max_violation <= config.tolerance,
        worst_case: (best.excess > 0.0).then_some(Witness {
            u: best.u,
            v: best.v,
            y: best.y,
            loss_u: best.loss_u,
            loss_v: best.loss_v,
            excess: best.excess,
        }),
        tolerance: config.tolerance,
        tightest_lambda: ratio,
    })
}

/// Larger excess wins, ties go to the earlier trial, so the reduction order
/// does not matter. The largest ratio is carried along separately.
fn pick_worse(a: Trial, b: Trial) -> Trial {
    let ratio = a.ratio.max(b.ratio);
    let (first, second) = if a.index <= b.index { (a, b) } else { (b, a) };
    let mut worse = if second.excess > first.excess { second } else { first };
    worse.ratio = ratio;
    worse
}

fn sample_label(loss: &LossKind, q: usize, beta_box: f64, rng: &mut ChaCha8Rng) -> Label {
    match loss.base() {
        LossKind::PickAllLabels { k } => {
            let count = rng.gen_range(0..=(*k).min(q));
            let mut y = vec![false; q];
            let picks = rand::seq::index::sample(rng, q, count);
            for j in picks {
                y[j] = true;
            }
            Label::SparseBinary(y)
        }
        LossKind::SupNorm { .. } | LossKind::MinimaxPower { .. } => {
            Label::RealVector((0..q).map(|_| rng.gen_range(-beta_box..=beta_box)).collect())
        }
        LossKind::BoundedExponential => Label::BinarySign(if rng.gen::<bool>() { 1 } else { -1 }),
        _ => Label::ClassIndex(rng.gen_range(1..=q)),
    }
}

/// A score vector at a random scale around a loss-specific centre: the
/// target for regression-type labels, the origin otherwise. Small scales
/// concentrate mass where the loss is small.
fn sample_scores(y: &Label, q: usize, half_width: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let scale = half_width * 10f64.powf(rng.gen_range(-3.0..=0.0));
    let mut u: Vec<f64> = match y {
        Label::RealVector(t) => t.iter().map(|c| c + rng.gen_range(-scale..=scale)).collect(),
        _ => (0..q).map(|_| rng.gen_range(-half_width..=half_width)).collect(),
    };
    if let Label::ClassIndex(c) = y {
        // Half of the draws push the true class ahead to reach the flat region.
        if rng.gen::<bool>() {
            u[c - 1] += rng.gen_range(0.0..=scale);
        }
    }
    u
}

fn perturb(u: &[f64], step: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let pinned = rng.gen_range(0..u.len());
    u.iter()
        .enumerate()
        .map(|(j, &x)| {
            if j == pinned {
                x + if rng.gen::<bool>() { step } else { -step }
            } else {
                x + rng.gen_range(-step..=step)
            }
        })
        .collect()
}

fn sup_dist(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Excess and difference quotient of one pair. Differences at or below
/// `tolerance` are rounding noise and contribute no quotient.
fn assess(lu: f64, lv: f64, dist: f64, params: &SblParams, tolerance: f64) -> (f64, f64) {
    let diff = (lu - lv).abs();
    let scale = lu.max(lv).powf(params.theta) * dist;
    let excess = diff - params.lambda * scale;
    let ratio = if diff <= tolerance {
        0.0
    } else if scale > 0.0 {
        diff / scale
    } else {
        f64::INFINITY
    };
    (excess, ratio)
}

fn run_trial(
    loss: &LossKind,
    params: &SblParams,
    q: usize,
    index: usize,
    config: &SamplerConfig,
    seed: u64,
) -> Result<Trial> {
    let mut rng = stream_rng(seed, index as u64);
    let half_width = 2.0 * config.beta_box;
    let y = sample_label(loss, q, config.beta_box, &mut rng);
    let mode = index % (config.steps.len() + 1);
    let mut u = sample_scores(&y, q, half_width, &mut rng);
    let mut v = if mode == 0 {
        sample_scores(&y, q, half_width, &mut rng)
    } else {
        perturb(&u, config.steps[mode - 1], &mut rng)
    };
    let mut lu = eval(loss, &u, &y)?;
    let mut lv = eval(loss, &v, &y)?;
    let (excess, ratio) = assess(lu, lv, sup_dist(&u, &v), params, config.tolerance);
    let mut best = Trial { index, excess, ratio, u: u.clone(), v: v.clone(), y: y.clone(), loss_u: lu, loss_v: lv };
    let mut max_ratio = ratio;

    for _ in 0..config.refine_steps {
        let w: Vec<f64> = u.iter().zip(&v).map(|(a, b)| 0.5 * (a + b)).collect();
        let lw = eval(loss, &w, &y)?;
        let left = assess(lu, lw, sup_dist(&u, &w), params, config.tolerance);
        let right = assess(lw, lv, sup_dist(&w, &v), params, config.tolerance);
        let go_left = left.1 >= right.1;
        let (ex, ra) = if go_left { left } else { right };
        if go_left {
            v = w;
            lv = lw;
        } else {
            u = w;
            lu = lw;
        }
        max_ratio = max_ratio.max(ra);
        if ex > best.excess {
            best.excess = ex;
            best.u.clone_from(&u);
            best.v.clone_from(&v);
            best.loss_u = lu;
            best.loss_v = lv;
        }
        if sup_dist(&u, &v) == 0.0 {
            break;
        }
    }
    best.ratio = max_ratio;
    Ok(best)
}
