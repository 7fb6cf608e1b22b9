//! Finite lower-bound construction and a simulator for concrete learners.
//!
//! For sample size `n` the input space is reduced to `2n` points indexed
//! `0..2n`, drawn uniformly. A sign vector `sigma` fixes the target
//! `f(r) = (gap * sigma_r, 0, ..., 0)` with `gap = sqrt(kappa / (2n))`, and
//! labels are noiseless. Risk is measured with the loss
//! `min{(lambda ||u - y||_inf)^{1/(1-theta)} / 32, 1}`.
//!
//! Every algorithm must have worst-case expected risk at least
//! `2^-8 (lambda sqrt(kappa/n))^{1/(1-theta)}` on this family. The simulator
//! can only exhibit specific learners, so agreement with that envelope is
//! evidence for, not a proof of, the statement over all algorithms.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::losses::{Label, LossKind};
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    /// Reproduces observed labels and predicts zero on unseen points; one
    /// of many empirical risk minimisers.
    ErmMatchObserved,
    ConstantZero,
    /// Knows `sigma`.
    Oracle,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 3] = [LearnerKind::ErmMatchObserved, LearnerKind::ConstantZero, LearnerKind::Oracle];

    pub fn name(&self) -> &'static str {
        match self {
            LearnerKind::ErmMatchObserved => "erm_match_observed",
            LearnerKind::ConstantZero => "constant_zero",
            LearnerKind::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimaxInstance {
    pub lambda: f64,
    pub theta: f64,
    pub n: usize,
    pub q: usize,
    pub kappa: f64,
    /// `sqrt(kappa / (2n))`.
    pub gap: f64,
    /// Length `2n`, entries `+1`/`-1`.
    pub sigma: Vec<i8>,
}

fn check_params(lambda: f64, theta: f64, n: usize, q: usize, kappa: f64) -> Result<()> {
    if n == 0 || q == 0 {
        return Err(Error::InvalidParameter("n and q must be positive".into()));
    }
    if !(lambda >= 1.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be at least 1, got {lambda}")));
    }
    if !(0.0..=0.5).contains(&theta) {
        return Err(Error::InvalidParameter(format!("theta must lie in [0,1/2], got {theta}")));
    }
    let kappa_max = n as f64 / (lambda * lambda);
    if !(kappa >= 1.0 && kappa <= kappa_max) {
        return Err(Error::InvalidParameter(format!("kappa must lie in [1, n/lambda^2] = [1, {kappa_max}], got {kappa}")));
    }
    Ok(())
}

impl MinimaxInstance {
    pub fn new(lambda: f64, theta: f64, n: usize, q: usize, kappa: f64, sigma: Vec<i8>) -> Result<Self> {
        check_params(lambda, theta, n, q, kappa)?;
        if sigma.len() != 2 * n || sigma.iter().any(|s| *s != 1 && *s != -1) {
            return Err(Error::InvalidParameter(format!("sigma must hold 2n = {} signs", 2 * n)));
        }
        Ok(Self { lambda, theta, n, q, kappa, gap: (kappa / (2.0 * n as f64)).sqrt(), sigma })
    }

    /// Instance with uniformly random signs.
    pub fn random(lambda: f64, theta: f64, n: usize, q: usize, kappa: f64, rng: &mut impl Rng) -> Result<Self> {
        check_params(lambda, theta, n, q, kappa)?;
        let sigma = (0..2 * n).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect();
        Self::new(lambda, theta, n, q, kappa, sigma)
    }

    pub fn support_size(&self) -> usize {
        2 * self.n
    }

    pub fn loss(&self) -> LossKind {
        LossKind::MinimaxPower { lambda: self.lambda, theta: self.theta }
    }

    /// Noiseless label at point `r`.
    pub fn target(&self, r: usize) -> Vec<f64> {
        let mut y = vec![0.0; self.q];
        y[0] = self.gap * f64::from(self.sigma[r]);
        y
    }

    /// `n` i.i.d. pairs of (point index, label).
    pub fn sample_dataset(&self, rng: &mut impl Rng) -> Vec<(usize, Vec<f64>)> {
        (0..self.n)
            .map(|_| {
                let r = rng.gen_range(0..self.support_size());
                (r, self.target(r))
            })
            .collect()
    }

    /// Exact risk of a predictor, averaging over the finite support.
    pub fn true_risk(&self, predictor: impl Fn(usize) -> Vec<f64>) -> Result<f64> {
        let loss = self.loss();
        let mut total = 0.0;
        for r in 0..self.support_size() {
            total += loss.eval(&predictor(r), &Label::RealVector(self.target(r)))?;
        }
        Ok(total / self.support_size() as f64)
    }

    /// Risk of `learner` after observing `sample`.
    pub fn learner_risk(&self, learner: LearnerKind, sample: &[(usize, Vec<f64>)]) -> Result<f64> {
        match learner {
            LearnerKind::ConstantZero => self.true_risk(|_| vec![0.0; self.q]),
            LearnerKind::Oracle => self.true_risk(|r| self.target(r)),
            LearnerKind::ErmMatchObserved => {
                let mut seen = vec![None; self.support_size()];
                for (r, y) in sample {
                    seen[*r] = Some(y.clone());
                }
                self.true_risk(|r| seen[r].clone().unwrap_or_else(|| vec![0.0; self.q]))
            }
        }
    }

    /// Squared norm of the target weights, at most `kappa` by construction.
    pub fn weight_norm_sq(&self) -> f64 {
        self.sigma.len() as f64 * self.gap * self.gap
    }
}

/// `2^-8 (lambda sqrt(kappa/n))^{1/(1-theta)}`.
pub fn lower_envelope(lambda: f64, theta: f64, n: usize, kappa: f64) -> f64 {
    (lambda * (kappa / n as f64).sqrt()).powf(1.0 / (1.0 - theta)) / 256.0
}

/// Expected risk of [`LearnerKind::ErmMatchObserved`]: the chance a point is
/// unseen times the loss at distance `gap`.
pub fn erm_expected_risk(lambda: f64, theta: f64, n: usize, kappa: f64) -> f64 {
    let nf = n as f64;
    let gap = (kappa / (2.0 * nf)).sqrt();
    let unseen = (1.0 - 1.0 / (2.0 * nf)).powf(nf);
    unseen * ((lambda * gap).powf(1.0 / (1.0 - theta)) / 32.0).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearnerSummary {
    pub learner: LearnerKind,
    pub mean_risk: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimaxReport {
    pub lambda: f64,
    pub theta: f64,
    pub n: usize,
    pub q: usize,
    pub kappa: f64,
    pub trials: usize,
    pub seed: u64,
    pub lower_envelope: f64,
    pub erm_expected_risk: f64,
    pub learners: Vec<LearnerSummary>,
    pub scope: String,
}

/// Runs every learner on `trials` independent (sigma, sample) draws.
#[allow(clippy::too_many_arguments)]
pub fn run_experiment(lambda: f64, theta: f64, n: usize, q: usize, kappa: f64, trials: usize, seed: u64) -> Result<MinimaxReport> {
    check_params(lambda, theta, n, q, kappa)?;
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let risks: Vec<[f64; 3]> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, t as u64);
            let inst = MinimaxInstance::random(lambda, theta, n, q, kappa, &mut rng)?;
            let sample = inst.sample_dataset(&mut rng);
            let mut out = [0.0; 3];
            for (slot, learner) in out.iter_mut().zip(LearnerKind::ALL) {
                *slot = inst.learner_risk(learner, &sample)?;
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let k = trials as f64;
    let learners = LearnerKind::ALL
        .iter()
        .enumerate()
        .map(|(c, &learner)| {
            let mean = risks.iter().map(|r| r[c]).sum::<f64>() / k;
            let var = if trials > 1 { risks.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / (k - 1.0) } else { 0.0 };
            LearnerSummary { learner, mean_risk: mean, se: (var / k).sqrt() }
        })
        .collect();
    Ok(MinimaxReport {
        lambda,
        theta,
        n,
        q,
        kappa,
        trials,
        seed,
        lower_envelope: lower_envelope(lambda, theta, n, kappa),
        erm_expected_risk: erm_expected_risk(lambda, theta, n, kappa),
        learners,
        scope: "the lower envelope applies to every algorithm; only the listed learners were simulated".into(),
    })
}

/// Writes sweep rows `lambda,theta,n,kappa,learner,mean_risk,se,lower_envelope`.
pub fn write_sweep_csv<W: Write>(reports: &[MinimaxReport], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["lambda", "theta", "n", "kappa", "learner", "mean_risk", "se", "lower_envelope"])?;
    for rep in reports {
        for l in &rep.learners {
            w.write_record([
                rep.lambda.to_string(),
                rep.theta.to_string(),
                rep.n.to_string(),
                rep.kappa.to_string(),
                l.learner.name().to_string(),
                l.mean_risk.to_string(),
                l.se.to_string(),
                rep.lower_envelope.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
