//! Generalization-bound formulas and risk certificates.
//!
//! Notation: `n` examples, `q` outputs, confidence `1 - delta`, a loss that
//! is `(lambda, theta)` self-bounding Lipschitz with values in `[0, B]`, a
//! function class bounded by `beta` in sup-norm and `rad` an upper bound on
//! the worst-case Rademacher complexity of the projected class on `n q`
//! points.
//!
//! Certificates report two numbers. The explicit one combines the local
//! fixed point `rhat` and the confidence radius `r0` with fully specified
//! constants. The C-form uses the compact ensemble term with a user-chosen
//! leading constant `c0` (default 1) whose true value is not pinned down.

use serde::{Deserialize, Serialize};

use crate::boosting::{content_hash, empirical_risk, Ensemble};
use crate::complexity::{log_factor, tree_class_rad_bound, CONTRACTION_CONSTANT};
use crate::data::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::losses::{LossKind, SblParams};

/// Constants of the explicit uniform bound and the ERM bound.
pub const UNIFORM_CONSTANTS: [f64; 2] = [90.0, 4.0];
pub const ERM_CONSTANTS: [f64; 2] = [100.0, 9.0];

/// Current certificate layout version.
pub const CERTIFICATE_SCHEMA_VERSION: u32 = 1;

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("delta must lie in (0,1), got {delta}")))
    }
}

fn check_n(n: usize) -> Result<()> {
    if n >= 3 {
        Ok(())
    } else {
        Err(Error::Domain(format!("log log n needs n >= 3, got {n}")))
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if (0.0..=0.5).contains(&theta) {
        Ok(())
    } else {
        Err(Error::Domain(format!("theta must lie in [0,1/2], got {theta}")))
    }
}

/// `(B/n)(log(1/delta) + log log n)`.
fn confidence_tail(bound: f64, delta: f64, n: usize) -> f64 {
    let nf = n as f64;
    bound / nf * ((1.0 / delta).ln() + nf.ln().ln())
}

/// Confidence radius `B (log(1/delta) + 6 log log n) / n`.
pub fn r0(bound: f64, delta: f64, n: usize) -> Result<f64> {
    check_n(n)?;
    check_delta(delta)?;
    if !(bound > 0.0 && bound.is_finite()) {
        return Err(Error::InvalidParameter(format!("B must be positive and finite, got {bound}")));
    }
    let nf = n as f64;
    Ok(bound * ((1.0 / delta).ln() + 6.0 * nf.ln().ln()) / nf)
}

/// Fixed point of `r -> lambda r^theta (512 sqrt(q) log^{3/2}(e beta n q) rad + n^{-1/2})`.
pub fn rhat(lambda: f64, theta: f64, q: usize, n: usize, beta: f64, rad_nq: f64) -> Result<f64> {
    check_theta(theta)?;
    check_positive(lambda, q, n, beta, rad_nq)?;
    let inner = CONTRACTION_CONSTANT * (q as f64).sqrt() * log_factor(beta, n, q) * rad_nq + 1.0 / (n as f64).sqrt();
    Ok((lambda * inner).powf(1.0 / (1.0 - theta)))
}

fn check_positive(lambda: f64, q: usize, n: usize, beta: f64, rad_nq: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) || q == 0 || n == 0 || !(beta >= 1.0) || !(rad_nq >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need lambda > 0, q, n >= 1, beta >= 1 and rad >= 0 (got lambda={lambda}, q={q}, n={n}, beta={beta}, rad={rad_nq})"
        )));
    }
    Ok(())
}

/// Everything the complexity term of the uniform bound depends on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub n: usize,
    pub q: usize,
    pub delta: f64,
    pub lambda: f64,
    pub theta: f64,
    pub beta: f64,
    /// Loss range bound `B`.
    pub loss_bound: f64,
    pub rad_nq: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        check_n(self.n)?;
        check_delta(self.delta)?;
        check_theta(self.theta)?;
        check_positive(self.lambda, self.q, self.n, self.beta, self.rad_nq)?;
        if !(self.loss_bound >= 1.0 && self.loss_bound.is_finite()) {
            return Err(Error::InvalidParameter(format!("B must be finite and >= 1, got {}", self.loss_bound)));
        }
        Ok(())
    }

    pub fn rhat(&self) -> Result<f64> {
        rhat(self.lambda, self.theta, self.q, self.n, self.beta, self.rad_nq)
    }

    pub fn r0(&self) -> Result<f64> {
        r0(self.loss_bound, self.delta, self.n)
    }
}

/// The complexity term
/// `(lambda (sqrt(q) log^{3/2}(e beta n q) rad + 1/sqrt(n)))^{1/(1-theta)} + (B/n)(log(1/delta) + log log n)`.
pub fn gamma(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    Ok(gamma_main(inputs) + confidence_tail(inputs.loss_bound, inputs.delta, inputs.n))
}

/// First summand of [`gamma`].
pub fn gamma_main(inputs: &BoundInputs) -> f64 {
    let BoundInputs { n, q, lambda, theta, beta, rad_nq, .. } = *inputs;
    let j = lambda * ((q as f64).sqrt() * log_factor(beta, n, q) * rad_nq + 1.0 / (n as f64).sqrt());
    j.powf(1.0 / (1.0 - theta))
}

/// `E + 90 (rhat + r0) + 4 sqrt(E (rhat + r0))`: holds for every member of
/// the class simultaneously.
pub fn bound_uniform_explicit(emp_risk: f64, rhat: f64, r0: f64) -> f64 {
    let s = rhat + r0;
    emp_risk + UNIFORM_CONSTANTS[0] * s + UNIFORM_CONSTANTS[1] * (emp_risk * s).sqrt()
}

/// `E* + 9 sqrt(E* (rhat + r0)) + 100 (rhat + r0)` for an empirical risk
/// minimiser, in terms of the best risk in the class.
pub fn bound_erm_explicit(risk_star: f64, rhat: f64, r0: f64) -> f64 {
    let s = rhat + r0;
    risk_star + ERM_CONSTANTS[1] * (risk_star * s).sqrt() + ERM_CONSTANTS[0] * s
}

/// `E + c0 (sqrt(E C) + C)`.
pub fn bound_cform(emp_risk: f64, complexity: f64, c0: f64) -> f64 {
    emp_risk + c0 * ((emp_risk * complexity).sqrt() + complexity)
}

/// Slow-rate comparison bound for a `lambda`-Lipschitz loss:
/// `E + c2 lambda (sqrt(q) log^{3/2}(e beta n q) rad + 1/sqrt(n)) + B sqrt(log(1/delta)/n)`.
///
/// Requires `inputs.theta == 0`; a self-bounding pair can be converted with
/// [`SblParams::relax_theta`].
pub fn bound_lipschitz_comparison(emp_risk: f64, inputs: &BoundInputs, c2: f64) -> Result<f64> {
    inputs.validate()?;
    if inputs.theta != 0.0 {
        return Err(Error::Domain(format!(
            "the Lipschitz comparison needs theta = 0, got {}; relax the parameters first",
            inputs.theta
        )));
    }
    let nf = inputs.n as f64;
    let j = gamma_main(inputs);
    Ok(emp_risk + c2 * j + inputs.loss_bound * ((1.0 / inputs.delta).ln() / nf).sqrt())
}

/// Bernstein upper bound on an empirical mean of `[0, B]` variables:
/// `mu + sqrt(2 mu B log(1/delta) / n) + B log(1/delta) / n`.
pub fn bernstein_upper(mu: f64, bound: f64, n: usize, delta: f64) -> Result<f64> {
    check_bernstein(mu, bound, n, delta)?;
    let l = (1.0 / delta).ln();
    let nf = n as f64;
    Ok(mu + (2.0 * mu * bound * l / nf).sqrt() + bound * l / nf)
}

/// The looser `2 mu + 3 B log(1/delta) / (2n)`.
pub fn bernstein_coarse(mu: f64, bound: f64, n: usize, delta: f64) -> Result<f64> {
    check_bernstein(mu, bound, n, delta)?;
    Ok(2.0 * mu + 3.0 * bound * (1.0 / delta).ln() / (2.0 * n as f64))
}

fn check_bernstein(mu: f64, bound: f64, n: usize, delta: f64) -> Result<()> {
    if !(mu >= 0.0) || !(bound > 0.0) || n == 0 || !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidParameter("Bernstein needs mu >= 0, B > 0, n >= 1, delta in (0,1]".into()));
    }
    Ok(())
}

/// Parameters of the ensemble complexity term other than the stage weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleTermInputs {
    pub p: usize,
    pub n: usize,
    pub q: usize,
    pub d: usize,
    pub beta: f64,
    pub lambda: f64,
    pub theta: f64,
    pub loss_bound: f64,
    pub delta: f64,
}

/// `(lambda/sqrt(n) (sqrt(p) log^2(3 n q d beta) sum_t alpha_t tau_t + 1))^{1/(1-theta)}
///  + (B/n)(log(1/delta) + log log n)` for stages given as `(alpha_t, tau_t)`.
pub fn ensemble_gamma(alpha_tau: &[(f64, f64)], inputs: &EnsembleTermInputs) -> Result<f64> {
    let EnsembleTermInputs { p, n, q, d, beta, lambda, theta, loss_bound, delta } = *inputs;
    check_n(n)?;
    check_delta(delta)?;
    check_theta(theta)?;
    check_positive(lambda, q, n, beta, 0.0)?;
    if p == 0 || d == 0 || !(loss_bound > 0.0 && loss_bound.is_finite()) {
        return Err(Error::InvalidParameter("need p, d >= 1 and finite B > 0".into()));
    }
    if alpha_tau.iter().any(|&(a, t)| !(a >= 0.0) || !(t >= 0.0)) {
        return Err(Error::InvalidParameter("stage weights and budgets must be non-negative".into()));
    }
    let alpha_sum: f64 = alpha_tau.iter().map(|(a, _)| a).sum();
    if alpha_sum > beta + crate::boosting::BUDGET_SLACK {
        return Err(Error::Budget { sum: alpha_sum, beta });
    }
    let zeta: f64 = alpha_tau.iter().map(|(a, t)| a * t).sum();
    let nf = n as f64;
    let log2 = (3.0 * nf * q as f64 * d as f64 * beta).ln().powi(2);
    let main = (lambda / nf.sqrt() * ((p as f64).sqrt() * log2 * zeta + 1.0)).powf(1.0 / (1.0 - theta));
    Ok(main + confidence_tail(loss_bound, delta, n))
}

/// Parameters the certificate uses for a loss: its declared pair with the
/// bound raised to at least 1. Unbounded losses must be clipped first.
pub fn certificate_params(loss: &LossKind) -> Result<SblParams> {
    let params = loss.declared_params()?;
    if !params.is_bounded() {
        return Err(Error::Domain(format!("loss `{loss}` is unbounded; wrap it as clip({loss},B=...)")));
    }
    check_theta(params.theta)?;
    SblParams::new(params.lambda, params.theta, params.bound.max(1.0))
}

/// Complexity inputs of the explicit bound for an ensemble trained on `n`
/// examples.
pub fn ensemble_bound_inputs(ens: &Ensemble, loss: &LossKind, n: usize, delta: f64) -> Result<BoundInputs> {
    let params = certificate_params(loss)?;
    let zeta = ens.alpha_tau_sum();
    let rad_nq = if zeta > 0.0 { tree_class_rad_bound(ens.max_leaves(), zeta, ens.d, n, ens.q)? } else { 0.0 };
    let inputs = BoundInputs {
        n,
        q: ens.q,
        delta,
        lambda: params.lambda,
        theta: params.theta,
        beta: ens.beta.max(1.0),
        loss_bound: params.bound,
        rad_nq,
    };
    inputs.validate()?;
    Ok(inputs)
}

/// The explicit uniform bound for `ens` given its training risk.
pub fn certified_bound(ens: &Ensemble, emp_risk: f64, n: usize, delta: f64) -> Result<f64> {
    let inputs = ensemble_bound_inputs(ens, &ens.loss, n, delta)?;
    Ok(bound_uniform_explicit(emp_risk, inputs.rhat()?, inputs.r0()?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub stages: usize,
    pub max_leaves: usize,
    pub d: usize,
    pub alpha_sum: f64,
    pub alpha_tau_sum: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub c0: f64,
    pub contraction: f64,
    /// Uniform bound (90, 4) followed by ERM bound (100, 9).
    pub corollary: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub schema_version: u32,
    pub loss: String,
    pub inputs: BoundInputs,
    pub ensemble: EnsembleSummary,
    pub empirical_risk: f64,
    pub gamma: f64,
    pub rhat: f64,
    pub r0: f64,
    /// Explicit-constant uniform bound on the true risk.
    pub bound_explicit: f64,
    /// `E + c0 (sqrt(E C) + C)` with the ensemble term `C`.
    pub bound_cform: f64,
    pub ensemble_term: f64,
    pub constants: Constants,
    pub model_hash: String,
    /// RFC 3339 creation time; the only field that varies between runs.
    pub created: String,
    pub toolkit_version: String,
}

impl Certificate {
    /// JSON without the creation time, for reproducibility comparisons.
    pub fn payload_json(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        if let Some(obj) = value.as_object_mut() {
            obj.remove("created");
        }
        Ok(serde_json::to_string_pretty(&value)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Builds the certificate for `ens` trained on `data`.
///
/// The Rademacher term is always the analytic tree-class bound evaluated at
/// `sum_t alpha_t tau_t`; data-dependent estimates are never used. `beta`
/// and `B` enter as `max(., 1)`.
pub fn certify(ens: &Ensemble, data: &Dataset, loss: &LossKind, delta: f64, c0: f64) -> Result<Certificate> {
    ens.validate()?;
    check_dim(ens.q, data.q())?;
    check_dim(ens.d, data.d())?;
    if !(c0 > 0.0 && c0.is_finite()) {
        return Err(Error::InvalidParameter(format!("c0 must be positive, got {c0}")));
    }
    let n = data.n();
    let inputs = ensemble_bound_inputs(ens, loss, n, delta)?;
    let emp = empirical_risk(ens, data, loss)?;
    let rhat = inputs.rhat()?;
    let r0 = inputs.r0()?;
    let alpha_tau: Vec<(f64, f64)> = ens.stages.iter().map(|s| (s.alpha, s.tree.tau)).collect();
    let ensemble_term = ensemble_gamma(
        &alpha_tau,
        &EnsembleTermInputs {
            p: ens.max_leaves(),
            n,
            q: ens.q,
            d: ens.d,
            beta: inputs.beta,
            lambda: inputs.lambda,
            theta: inputs.theta,
            loss_bound: inputs.loss_bound,
            delta,
        },
    )?;
    let cert = Certificate {
        schema_version: CERTIFICATE_SCHEMA_VERSION,
        loss: loss.to_string(),
        inputs,
        ensemble: EnsembleSummary {
            stages: ens.stages.len(),
            max_leaves: ens.max_leaves(),
            d: ens.d,
            alpha_sum: ens.alpha_sum(),
            alpha_tau_sum: ens.alpha_tau_sum(),
            beta: ens.beta,
        },
        empirical_risk: emp,
        gamma: gamma(&inputs)?,
        rhat,
        r0,
        bound_explicit: bound_uniform_explicit(emp, rhat, r0),
        bound_cform: bound_cform(emp, ensemble_term, c0),
        ensemble_term,
        constants: Constants {
            c0,
            contraction: CONTRACTION_CONSTANT,
            corollary: [UNIFORM_CONSTANTS[0], UNIFORM_CONSTANTS[1], ERM_CONSTANTS[0], ERM_CONSTANTS[1]],
        },
        model_hash: content_hash(ens)?,
        created: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        toolkit_version: crate::VERSION.to_string(),
    };
    if ![cert.gamma, cert.rhat, cert.r0, cert.bound_explicit, cert.bound_cform, cert.ensemble_term]
        .iter()
        .all(|v| v.is_finite())
    {
        return Err(Error::Domain("certificate evaluated to a non-finite value".into()));
    }
    Ok(cert)
}
