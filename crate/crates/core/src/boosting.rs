//! Functional gradient boosting of constrained trees under a weight budget.
//!
//! The trained predictor is `f = sum_t alpha_t h_t` with every `h_t` a
//! [`MultiTree`] and `sum_t alpha_t <= beta`, which is exactly the shape the
//! ensemble certificate in [`crate::bounds`] is stated for.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds;
use crate::data::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::losses::{Label, LossKind};
use crate::trees::{fit_tree, MultiTree, SplitCandidates, TreeConfig};

/// Slack on the budget constraint.
pub const BUDGET_SLACK: f64 = 1e-12;

/// Line-search halvings tried per round.
const MAX_HALVINGS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub alpha: f64,
    pub tree: MultiTree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub stages: Vec<Stage>,
    pub beta: f64,
    pub loss: LossKind,
    pub d: usize,
    pub q: usize,
}

impl Ensemble {
    pub fn zero(d: usize, q: usize, beta: f64, loss: LossKind) -> Ensemble {
        Ensemble { stages: Vec::new(), beta, loss, d, q }
    }

    pub fn alpha_sum(&self) -> f64 {
        self.stages.iter().map(|s| s.alpha).sum()
    }

    /// `sum_t alpha_t * tau_t`.
    pub fn alpha_tau_sum(&self) -> f64 {
        self.stages.iter().map(|s| s.alpha * s.tree.tau).sum()
    }

    /// Largest leaf count over stages, 2 for the empty ensemble.
    pub fn max_leaves(&self) -> usize {
        self.stages.iter().map(|s| s.tree.p()).max().unwrap_or(2)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta must be finite and non-negative, got {}", self.beta)));
        }
        let sum = self.alpha_sum();
        if sum > self.beta + BUDGET_SLACK {
            return Err(Error::Budget { sum, beta: self.beta });
        }
        for (t, stage) in self.stages.iter().enumerate() {
            if !(stage.alpha > 0.0) {
                return Err(Error::Data(format!("stage {t} has non-positive weight {}", stage.alpha)));
            }
            stage.tree.validate()?;
            check_dim(self.d, stage.tree.d)?;
            check_dim(self.q, stage.tree.q)?;
        }
        Ok(())
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.d, x.len())?;
        Ok(self.predict_unchecked(x))
    }

    fn predict_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.q];
        for stage in &self.stages {
            for (o, w) in out.iter_mut().zip(stage.tree.predict_unchecked(x)) {
                *o += stage.alpha * w;
            }
        }
        out
    }

    pub fn predict_all(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        for row in x {
            check_dim(self.d, row.len())?;
        }
        Ok(x.par_iter().map(|row| self.predict_unchecked(row)).collect())
    }
}

/// Mean loss of `ens` on `data`.
pub fn empirical_risk(ens: &Ensemble, data: &Dataset, loss: &LossKind) -> Result<f64> {
    if data.n() == 0 {
        return Err(Error::EmptyData("no rows".into()));
    }
    let scores = ens.predict_all(&data.x)?;
    mean_loss(loss, &scores, &data.y)
}

/// Sums in index order so the result does not depend on thread count.
fn mean_loss(loss: &LossKind, scores: &[Vec<f64>], y: &[Label]) -> Result<f64> {
    let values: Vec<f64> = scores
        .par_iter()
        .zip(y)
        .map(|(u, yi)| loss.eval(u, yi))
        .collect::<Result<_>>()?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub rounds: usize,
    /// Multiplies every line-search step.
    pub shrinkage: f64,
    pub leaves: usize,
    /// Leaf l1 budget of the first round.
    pub tau: f64,
    /// Round `t` (0-based) uses `tau * tau_decay^t`.
    pub tau_decay: f64,
    pub min_samples_leaf: usize,
    pub split_candidates: SplitCandidates,
    /// Total weight budget.
    pub beta: f64,
    /// With `certify_delta` set, stop after this many rounds without an
    /// improvement of the certified bound and roll back to the best round.
    pub patience: usize,
    pub certify_delta: Option<f64>,
    /// Recorded for reproducibility; the trainer itself draws no randomness.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rounds: 50,
            shrinkage: 0.1,
            leaves: 2,
            tau: 1.0,
            tau_decay: 1.0,
            min_samples_leaf: 1,
            split_candidates: SplitCandidates::Exhaustive,
            beta: 1.0,
            patience: 5,
            certify_delta: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return bad(format!("shrinkage must lie in (0,1], got {}", self.shrinkage));
        }
        if !(self.tau_decay > 0.0 && self.tau_decay <= 1.0) {
            return bad(format!("tau_decay must lie in (0,1], got {}", self.tau_decay));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be finite and non-negative, got {}", self.beta));
        }
        if let Some(delta) = self.certify_delta {
            if !(delta > 0.0 && delta < 1.0) {
                return bad(format!("certify delta must lie in (0,1), got {delta}"));
            }
        }
        self.tree_config(0).validate()
    }

    fn tree_config(&self, round: usize) -> TreeConfig {
        TreeConfig {
            p: self.leaves,
            tau: self.tau * self.tau_decay.powi(round as i32),
            min_samples_leaf: self.min_samples_leaf,
            split_candidates: self.split_candidates,
        }
    }
}

/// Trains an ensemble; see [`train_traced`].
pub fn train(data: &Dataset, loss: &LossKind, cfg: &TrainConfig) -> Result<Ensemble> {
    train_traced(data, loss, cfg).map(|(ens, _)| ens)
}

/// Trains an ensemble and returns the training risk before the first round
/// and after every accepted round.
///
/// Each round fits a tree to the negative loss gradients and picks its weight
/// by backtracking: `alpha = min(shrinkage * 2^-s, remaining budget)` for
/// `s = 0, 1, ..., 20`, taking the first step that strictly lowers the
/// training risk. Training stops when no step helps or the budget is spent.
pub fn train_traced(data: &Dataset, loss: &LossKind, cfg: &TrainConfig) -> Result<(Ensemble, Vec<f64>)> {
    cfg.validate()?;
    loss.validate()?;
    if !loss.is_differentiable() {
        return Err(Error::NotDifferentiable(loss.to_string()));
    }
    data.validate()?;
    let q = data.q();
    if let Some(fixed) = loss.fixed_output_dim() {
        check_dim(fixed, q)?;
    }
    let n = data.n();
    let mut ens = Ensemble::zero(data.d(), q, cfg.beta, loss.clone());
    let mut scores = vec![vec![0.0; q]; n];
    let mut risk = mean_loss(loss, &scores, &data.y)?;
    let mut trace = vec![risk];
    let weights = vec![1.0; n];

    let certify = |e: &Ensemble, r: f64| -> Result<Option<f64>> {
        match cfg.certify_delta {
            Some(delta) => bounds::certified_bound(e, r, n, delta).map(Some),
            None => Ok(None),
        }
    };
    let mut best = (certify(&ens, risk)?, 0usize);

    for round in 0..cfg.rounds {
        let remaining = cfg.beta - ens.alpha_sum();
        if remaining <= BUDGET_SLACK {
            break;
        }
        let grads: Vec<Vec<f64>> = scores
            .par_iter()
            .zip(&data.y)
            .map(|(u, y)| loss.grad(u, y).map(|g| g.into_iter().map(|v| -v).collect()))
            .collect::<Result<_>>()?;
        let tree = fit_tree(&data.x, &grads, &weights, &cfg.tree_config(round))?;
        let leaf_of: Vec<&[f64]> = data.x.par_iter().map(|x| tree.predict_unchecked(x)).collect();

        let mut accepted = None;
        let mut step = cfg.shrinkage;
        for _ in 0..=MAX_HALVINGS {
            let alpha = step.min(remaining);
            let trial: Vec<Vec<f64>> = scores
                .par_iter()
                .zip(&leaf_of)
                .map(|(u, h)| u.iter().zip(h.iter()).map(|(a, b)| a + alpha * b).collect())
                .collect();
            let trial_risk = mean_loss(loss, &trial, &data.y)?;
            if trial_risk < risk {
                accepted = Some((alpha, trial, trial_risk));
                break;
            }
            step *= 0.5;
        }
        let Some((alpha, trial, trial_risk)) = accepted else { break };
        ens.stages.push(Stage { alpha, tree });
        debug_assert!(ens.alpha_sum() <= cfg.beta + BUDGET_SLACK);
        scores = trial;
        risk = trial_risk;
        trace.push(risk);

        if let Some(bound) = certify(&ens, risk)? {
            let stages = ens.stages.len();
            if best.0.is_none_or(|b| bound < b) {
                best = (Some(bound), stages);
            } else if stages - best.1 >= cfg.patience.max(1) {
                break;
            }
        }
    }

    if cfg.certify_delta.is_some() && best.1 < ens.stages.len() {
        ens.stages.truncate(best.1);
        trace.truncate(best.1 + 1);
    }
    ens.validate()?;
    Ok((ens, trace))
}

/// Current model file layout version.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// A persisted ensemble with the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub format_version: u32,
    pub ensemble: Ensemble,
    pub train_config: Option<TrainConfig>,
    /// Hex SHA-256 of the ensemble's JSON encoding.
    pub content_hash: String,
}

impl Model {
    pub fn new(ensemble: Ensemble, train_config: Option<TrainConfig>) -> Result<Model> {
        ensemble.validate()?;
        let content_hash = content_hash(&ensemble)?;
        Ok(Model { format_version: MODEL_FORMAT_VERSION, ensemble, train_config, content_hash })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses a model and checks its version, shape and hash.
    pub fn from_json(text: &str) -> Result<Model> {
        let model: Model = serde_json::from_str(text)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Data(format!("unsupported model format version {}", model.format_version)));
        }
        model.ensemble.validate()?;
        let expected = content_hash(&model.ensemble)?;
        if expected != model.content_hash {
            return Err(Error::Data("model content hash does not match its stages".into()));
        }
        Ok(model)
    }
}

pub fn content_hash(ens: &Ensemble) -> Result<String> {
    let bytes = serde_json::to_vec(ens)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
