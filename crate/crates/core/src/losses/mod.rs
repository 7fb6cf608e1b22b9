//! Loss catalogue for multi-output prediction.
//!
//! Every loss exposes its value, a (sub)gradient in the score vector and
//! the self-bounding Lipschitz parameters it is known to satisfy:
//!
//! ```text
//! |L(u,y) - L(v,y)| <= lambda * max{L(u,y), L(v,y)}^theta * ||u - v||_inf
//! ```
//!
//! `theta = 0` is the ordinary Lipschitz condition in the sup-norm and
//! `theta = 1/2` is the smoothness-like regime that yields fast rates.
//! [`check_sbl`] tries to falsify a claimed pair by random search.
//!
//! Class labels are 1-based throughout, matching the CSV format.

mod check;
mod parse;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

pub use check::{check_sbl, SamplerConfig, SblReport, Witness};

/// Declared self-bounding Lipschitz parameters plus the loss range bound `B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SblParams {
    pub lambda: f64,
    pub theta: f64,
    /// Upper bound on the loss values; `f64::INFINITY` for unbounded losses.
    pub bound: f64,
}

impl SblParams {
    pub fn new(lambda: f64, theta: f64, bound: f64) -> Result<Self> {
        if !(lambda > 0.0) || lambda.is_nan() {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
        }
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::InvalidParameter(format!("theta must lie in [0,1], got {theta}")));
        }
        if !(bound > 0.0) {
            return Err(Error::InvalidParameter(format!("bound must be positive, got {bound}")));
        }
        Ok(Self { lambda, theta, bound })
    }

    pub fn is_bounded(&self) -> bool {
        self.bound.is_finite()
    }

    /// Same loss, smaller exponent: `lambda * B^(theta - theta_new)`.
    ///
    /// Only valid for bounded losses.
    pub fn relax_theta(&self, theta_new: f64) -> Result<SblParams> {
        if !self.is_bounded() {
            return Err(Error::Domain("relaxing theta requires a finite loss bound".into()));
        }
        if !(0.0..=self.theta).contains(&theta_new) {
            return Err(Error::Domain(format!(
                "new theta {theta_new} must lie in [0, {}]",
                self.theta
            )));
        }
        let lambda = self.lambda * self.bound.powf(self.theta - theta_new);
        SblParams::new(lambda, theta_new, self.bound)
    }
}

/// Free-function form of [`SblParams::relax_theta`].
pub fn relax_theta(params: &SblParams, theta_new: f64) -> Result<SblParams> {
    params.relax_theta(theta_new)
}

/// Target value of one example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    /// 1-based class index.
    ClassIndex(usize),
    /// Indicator vector of the active labels.
    SparseBinary(Vec<bool>),
    RealVector(Vec<f64>),
    /// `+1` or `-1`, scalar output.
    BinarySign(i8),
}

impl Label {
    pub fn from_active(q: usize, active: &[usize]) -> Result<Label> {
        let mut y = vec![false; q];
        for &a in active {
            if a == 0 || a > q {
                return Err(Error::Data(format!("label index {a} outside 1..={q}")));
            }
            y[a - 1] = true;
        }
        Ok(Label::SparseBinary(y))
    }

    fn describe(&self) -> String {
        match self {
            Label::ClassIndex(c) => format!("class {c}"),
            Label::SparseBinary(v) => format!("binary vector of length {}", v.len()),
            Label::RealVector(v) => format!("real vector of length {}", v.len()),
            Label::BinarySign(s) => format!("sign {s}"),
        }
    }
}

/// The loss catalogue.
#[derive(Debug, Clone, PartialEq)]
pub enum LossKind {
    /// Cubic smoothing of the margin loss with width `rho`.
    SmoothMargin { rho: f64 },
    /// Softmax cross-entropy.
    MultinomialLogistic,
    /// Sum of the softmax losses of every active label, labels at most `k`-sparse.
    PickAllLabels { k: usize },
    /// `kappa * ||u - y||_inf^gamma`.
    SupNorm { kappa: f64, gamma: f64 },
    /// `min{1, exp(-u*y)}` for a scalar score and a sign label.
    BoundedExponential,
    /// `min{(lambda*||u-y||_inf)^(1/(1-theta)) / 32, 1}`.
    MinimaxPower { lambda: f64, theta: f64 },
    /// `min{L(u,y), B}`.
    Clipped { inner: Box<LossKind>, bound: f64 },
    /// `1{m(u,y) <= 0}`; evaluation only.
    ZeroOne,
    /// `1{m(u,y) <= rho}`; evaluation only.
    HardMargin { rho: f64 },
}

impl LossKind {
    pub fn clipped(inner: LossKind, bound: f64) -> LossKind {
        LossKind::Clipped { inner: Box::new(inner), bound }
    }

    /// Checks parameter ranges, recursively for clipped losses.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match self {
            LossKind::SmoothMargin { rho } | LossKind::HardMargin { rho } => {
                if !(*rho > 0.0 && rho.is_finite()) {
                    return bad(format!("rho must be positive, got {rho}"));
                }
            }
            LossKind::PickAllLabels { k } => {
                if *k == 0 {
                    return bad("k must be at least 1".into());
                }
            }
            LossKind::SupNorm { kappa, gamma } => {
                if !(1.0..=2.0).contains(kappa) {
                    return bad(format!("kappa must lie in [1,2], got {kappa}"));
                }
                if !(1.0..=2.0).contains(gamma) {
                    return bad(format!("gamma must lie in [1,2], got {gamma}"));
                }
            }
            LossKind::MinimaxPower { lambda, theta } => {
                if !(*lambda > 0.0 && lambda.is_finite()) {
                    return bad(format!("lambda must be positive, got {lambda}"));
                }
                if !(0.0..=0.5).contains(theta) {
                    return bad(format!("theta must lie in [0,1/2], got {theta}"));
                }
            }
            LossKind::Clipped { inner, bound } => {
                if !(*bound > 0.0 && bound.is_finite()) {
                    return bad(format!("clip bound must be positive, got {bound}"));
                }
                inner.validate()?;
            }
            LossKind::MultinomialLogistic | LossKind::BoundedExponential | LossKind::ZeroOne => {}
        }
        Ok(())
    }

    /// Losses without a usable gradient (margin indicators).
    pub fn is_differentiable(&self) -> bool {
        match self {
            LossKind::ZeroOne | LossKind::HardMargin { .. } => false,
            LossKind::Clipped { inner, .. } => inner.is_differentiable(),
            _ => true,
        }
    }

    /// The loss with any clipping wrappers removed.
    pub fn base(&self) -> &LossKind {
        match self {
            LossKind::Clipped { inner, .. } => inner.base(),
            other => other,
        }
    }

    /// Output dimension forced by the loss, if any (`Some(1)` for scalar losses).
    pub fn fixed_output_dim(&self) -> Option<usize> {
        match self.base() {
            LossKind::BoundedExponential => Some(1),
            _ => None,
        }
    }

    pub fn eval(&self, u: &[f64], y: &Label) -> Result<f64> {
        eval(self, u, y)
    }

    pub fn grad(&self, u: &[f64], y: &Label) -> Result<Vec<f64>> {
        grad(self, u, y)
    }

    pub fn declared_params(&self) -> Result<SblParams> {
        declared_params(self)
    }

    fn incompatible(&self, y: &Label) -> Error {
        Error::IncompatibleLabel { label: y.describe(), loss: self.to_string() }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossKind::SmoothMargin { rho } => write!(f, "smooth_margin(rho={rho})"),
            LossKind::MultinomialLogistic => write!(f, "logistic"),
            LossKind::PickAllLabels { k } => write!(f, "pick_all_labels(k={k})"),
            LossKind::SupNorm { kappa, gamma } => write!(f, "sup_norm(kappa={kappa},gamma={gamma})"),
            LossKind::BoundedExponential => write!(f, "bounded_exp"),
            LossKind::MinimaxPower { lambda, theta } => {
                write!(f, "minimax_power(lambda={lambda},theta={theta})")
            }
            LossKind::Clipped { inner, bound } => write!(f, "clip({inner},B={bound})"),
            LossKind::ZeroOne => write!(f, "zero_one"),
            LossKind::HardMargin { rho } => write!(f, "hard_margin(rho={rho})"),
        }
    }
}

impl Serialize for LossKind {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LossKind {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `u_y - max_{j != y} u_j` for a 1-based class `y`.
pub fn margin(u: &[f64], y: usize) -> Result<f64> {
    margin_with_rival(u, y).map(|(m, _)| m)
}

/// Margin together with the 0-based index of the strongest competitor
/// (smallest index among ties).
fn margin_with_rival(u: &[f64], y: usize) -> Result<(f64, usize)> {
    let q = u.len();
    if q < 2 {
        return Err(Error::InvalidParameter(format!("margin needs q >= 2, got {q}")));
    }
    if y == 0 || y > q {
        return Err(Error::Data(format!("class {y} outside 1..={q}")));
    }
    let yi = y - 1;
    let mut rival = usize::MAX;
    let mut best = f64::NEG_INFINITY;
    for (j, &uj) in u.iter().enumerate() {
        if j != yi && (rival == usize::MAX || uj > best) {
            best = uj;
            rival = j;
        }
    }
    Ok((u[yi] - best, rival))
}

/// Numerically stable `log(sum_j exp(u_j))`.
fn log_sum_exp(u: &[f64]) -> f64 {
    let max = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + u.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

fn softmax(u: &[f64]) -> Vec<f64> {
    let max = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = u.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the largest `|r_j|`, smallest index among ties.
fn sup_norm_argmax(r: &[f64]) -> (f64, usize) {
    let mut best = 0;
    for j in 1..r.len() {
        if r[j].abs() > r[best].abs() {
            best = j;
        }
    }
    (r.get(best).map_or(0.0, |x| x.abs()), best)
}

fn class_of(loss: &LossKind, u: &[f64], y: &Label) -> Result<usize> {
    match y {
        Label::ClassIndex(c) => {
            if u.len() < 2 {
                return Err(Error::InvalidParameter(format!(
                    "multiclass losses need q >= 2, got {}",
                    u.len()
                )));
            }
            if *c == 0 || *c > u.len() {
                return Err(Error::Data(format!("class {c} outside 1..={}", u.len())));
            }
            Ok(*c)
        }
        _ => Err(loss.incompatible(y)),
    }
}

fn real_target<'a>(loss: &LossKind, u: &[f64], y: &'a Label) -> Result<&'a [f64]> {
    match y {
        Label::RealVector(t) => {
            check_dim(u.len(), t.len())?;
            Ok(t)
        }
        _ => Err(loss.incompatible(y)),
    }
}

fn active_labels<'a>(loss: &LossKind, k: usize, u: &[f64], y: &'a Label) -> Result<&'a [bool]> {
    match y {
        Label::SparseBinary(bits) => {
            check_dim(u.len(), bits.len())?;
            let count = bits.iter().filter(|&&b| b).count();
            if count > k {
                return Err(Error::Data(format!("label has {count} active entries, more than k={k}")));
            }
            Ok(bits)
        }
        _ => Err(loss.incompatible(y)),
    }
}

fn sign_of(loss: &LossKind, u: &[f64], y: &Label) -> Result<f64> {
    match y {
        Label::BinarySign(s) if *s == 1 || *s == -1 => {
            check_dim(1, u.len())?;
            Ok(f64::from(*s))
        }
        Label::BinarySign(s) => Err(Error::Data(format!("sign label must be +1 or -1, got {s}"))),
        _ => Err(loss.incompatible(y)),
    }
}

fn minimax_power_exponent(theta: f64) -> f64 {
    1.0 / (1.0 - theta)
}

/// Evaluates `L(u, y)`.
pub fn eval(loss: &LossKind, u: &[f64], y: &Label) -> Result<f64> {
    match loss {
        LossKind::SmoothMargin { rho } => {
            let m = margin(u, class_of(loss, u, y)?)?;
            Ok(smooth_margin_value(m / rho))
        }
        LossKind::ZeroOne => {
            let m = margin(u, class_of(loss, u, y)?)?;
            Ok(if m <= 0.0 { 1.0 } else { 0.0 })
        }
        LossKind::HardMargin { rho } => {
            let m = margin(u, class_of(loss, u, y)?)?;
            Ok(if m <= *rho { 1.0 } else { 0.0 })
        }
        LossKind::MultinomialLogistic => {
            let c = class_of(loss, u, y)?;
            Ok((log_sum_exp(u) - u[c - 1]).max(0.0))
        }
        LossKind::PickAllLabels { k } => {
            let bits = active_labels(loss, *k, u, y)?;
            let lse = log_sum_exp(u);
            Ok(bits
                .iter()
                .zip(u)
                .filter(|(&b, _)| b)
                .map(|(_, &ul)| (lse - ul).max(0.0))
                .sum())
        }
        LossKind::SupNorm { kappa, gamma } => {
            let t = real_target(loss, u, y)?;
            let r = sup_distance(u, t);
            Ok(kappa * r.powf(*gamma))
        }
        LossKind::BoundedExponential => {
            let s = sign_of(loss, u, y)?;
            Ok((-u[0] * s).exp().min(1.0))
        }
        LossKind::MinimaxPower { lambda, theta } => {
            let t = real_target(loss, u, y)?;
            let r = sup_distance(u, t);
            Ok(((lambda * r).powf(minimax_power_exponent(*theta)) / 32.0).min(1.0))
        }
        LossKind::Clipped { inner, bound } => Ok(eval(inner, u, y)?.min(*bound)),
    }
}

fn sup_distance(u: &[f64], t: &[f64]) -> f64 {
    u.iter().zip(t).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

fn smooth_margin_value(s: f64) -> f64 {
    if s <= 0.0 {
        1.0
    } else if s >= 1.0 {
        0.0
    } else {
        2.0 * s * s * s - 3.0 * s * s + 1.0
    }
}

/// Gradient of `L(., y)` at `u`.
///
/// At non-differentiable points a fixed subgradient is returned: the
/// smallest-index competitor at margin ties, the smallest-index coordinate
/// at sup-norm ties and the zero vector on or beyond a clip boundary.
pub fn grad(loss: &LossKind, u: &[f64], y: &Label) -> Result<Vec<f64>> {
    let q = u.len();
    match loss {
        LossKind::ZeroOne | LossKind::HardMargin { .. } => {
            Err(Error::NotDifferentiable(loss.to_string()))
        }
        LossKind::SmoothMargin { rho } => {
            let c = class_of(loss, u, y)?;
            let (m, rival) = margin_with_rival(u, c)?;
            let s = m / rho;
            let mut g = vec![0.0; q];
            if s > 0.0 && s < 1.0 {
                let dm = (6.0 * s * s - 6.0 * s) / rho;
                g[c - 1] = dm;
                g[rival] = -dm;
            }
            Ok(g)
        }
        LossKind::MultinomialLogistic => {
            let c = class_of(loss, u, y)?;
            let mut g = softmax(u);
            g[c - 1] -= 1.0;
            Ok(g)
        }
        LossKind::PickAllLabels { k } => {
            let bits = active_labels(loss, *k, u, y)?;
            let count = bits.iter().filter(|&&b| b).count() as f64;
            let p = softmax(u);
            Ok(p.iter()
                .zip(bits)
                .map(|(&pj, &b)| count * pj - if b { 1.0 } else { 0.0 })
                .collect())
        }
        LossKind::SupNorm { kappa, gamma } => {
            let t = real_target(loss, u, y)?;
            let r: Vec<f64> = u.iter().zip(t).map(|(a, b)| a - b).collect();
            let (norm, j) = sup_norm_argmax(&r);
            let mut g = vec![0.0; q];
            if norm > 0.0 {
                g[j] = kappa * gamma * norm.powf(gamma - 1.0) * r[j].signum();
            }
            Ok(g)
        }
        LossKind::BoundedExponential => {
            let s = sign_of(loss, u, y)?;
            let margin = u[0] * s;
            Ok(vec![if margin > 0.0 { -s * (-margin).exp() } else { 0.0 }])
        }
        LossKind::MinimaxPower { lambda, theta } => {
            let t = real_target(loss, u, y)?;
            let r: Vec<f64> = u.iter().zip(t).map(|(a, b)| a - b).collect();
            let (norm, j) = sup_norm_argmax(&r);
            let p = minimax_power_exponent(*theta);
            let mut g = vec![0.0; q];
            if norm > 0.0 && (lambda * norm).powf(p) / 32.0 < 1.0 {
                g[j] = lambda.powf(p) * p * norm.powf(p - 1.0) / 32.0 * r[j].signum();
            }
            Ok(g)
        }
        LossKind::Clipped { inner, bound } => {
            if eval(inner, u, y)? < *bound {
                grad(inner, u, y)
            } else {
                Ok(vec![0.0; q])
            }
        }
    }
}

/// The `(lambda, theta, B)` triple each loss is known to satisfy.
///
/// The margin indicators have no finite parameters and return
/// [`Error::NotSelfBounding`].
pub fn declared_params(loss: &LossKind) -> Result<SblParams> {
    match loss {
        LossKind::SmoothMargin { rho } => SblParams::new(4.0 * 6f64.sqrt() / rho, 0.5, 1.0),
        LossKind::MultinomialLogistic => SblParams::new(2.0, 0.5, f64::INFINITY),
        LossKind::PickAllLabels { k } => SblParams::new(2.0 * (*k as f64).sqrt(), 0.5, f64::INFINITY),
        LossKind::SupNorm { kappa, gamma } => {
            let theta = (gamma - 1.0) / gamma;
            SblParams::new((8.0 * kappa).powf(1.0 - theta), theta, f64::INFINITY)
        }
        // Satisfied for every theta in [0,1]; 1/2 is the largest exponent the
        // risk bounds accept.
        LossKind::BoundedExponential => SblParams::new(1.0, 0.5, 1.0),
        LossKind::MinimaxPower { lambda, theta } => SblParams::new(*lambda, *theta, 1.0),
        LossKind::Clipped { inner, bound } => {
            let p = declared_params(inner)?;
            SblParams::new(p.lambda, p.theta, p.bound.min(*bound))
        }
        LossKind::ZeroOne | LossKind::HardMargin { .. } => {
            Err(Error::NotSelfBounding(loss.to_string()))
        }
    }
}
