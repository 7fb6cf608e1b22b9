//! Rademacher complexity estimators and analytic capacity bounds.
//!
//! A multi-output class is scalarised by evaluating every member at every
//! (example, output) pair; [`EvalGrid`] stores those values with one row per
//! pair and one column per member. Empirical Rademacher averages are then
//! `E_sigma max_col (1/m) sum_i sigma_i g_i`.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::boosting::Ensemble;
use crate::error::{check_dim, Error, Result};
use crate::rng::stream_rng;
use crate::trees::MultiTree;

/// Constant of the local contraction bound.
pub const CONTRACTION_CONSTANT: f64 = 512.0;

/// Largest `m` for which all `2^m` sign vectors are enumerated.
pub const MAX_EXACT_POINTS: usize = 20;

/// Per-draw work limit of [`exact_stump_rademacher`].
pub const STUMP_GUARD: f64 = 1e7;

/// A function from `R^d` to `R^q`.
pub trait VectorFunction: Sync {
    fn output_dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>>;
}

impl VectorFunction for MultiTree {
    fn output_dim(&self) -> usize {
        self.q
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.predict(x).map(<[f64]>::to_vec)
    }
}

impl VectorFunction for Ensemble {
    fn output_dim(&self) -> usize {
        self.q
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.predict(x)
    }
}

/// Adapts a closure with a fixed output dimension.
pub struct FnVector<F> {
    pub q: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> Vec<f64> + Sync> VectorFunction for FnVector<F> {
    fn output_dim(&self) -> usize {
        self.q
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let v = (self.f)(x);
        check_dim(self.q, v.len())?;
        Ok(v)
    }
}

/// Values of `K` functions at `m` points, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalGrid {
    pub m: usize,
    pub k: usize,
    pub values: Vec<f64>,
}

impl EvalGrid {
    /// Builds a grid from columns of equal length.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<EvalGrid> {
        let k = columns.len();
        let m = columns.first().map_or(0, Vec::len);
        if k == 0 || m == 0 {
            return Err(Error::EmptyData("grid needs at least one point and one column".into()));
        }
        let mut values = vec![0.0; m * k];
        for (c, col) in columns.iter().enumerate() {
            check_dim(m, col.len())?;
            for (i, v) in col.iter().enumerate() {
                values[i * k + c] = *v;
            }
        }
        let grid = EvalGrid { m, k, values };
        grid.check_finite()?;
        Ok(grid)
    }

    fn check_finite(&self) -> Result<()> {
        if self.values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Data("grid has non-finite entries".into()))
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.k + col]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.m).map(|i| self.get(i, col)).collect()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    /// `max_col (1/m) sum_i sigma_i g_i(col)` for signs given by `sign(i)`.
    fn sup_correlation(&self, sign: impl Fn(usize) -> bool) -> f64 {
        let mut acc = vec![0.0; self.k];
        for i in 0..self.m {
            let row = self.row(i);
            if sign(i) {
                acc.iter_mut().zip(row).for_each(|(a, v)| *a += v);
            } else {
                acc.iter_mut().zip(row).for_each(|(a, v)| *a -= v);
            }
        }
        acc.into_iter().fold(f64::NEG_INFINITY, f64::max) / self.m as f64
    }
}

/// Evaluates each function at each `x_i` and lays out `pi_j(f(x_i))` in row
/// `i*q + j` (0-based).
pub fn project_class(functions: &[&dyn VectorFunction], x: &[Vec<f64>], q: usize) -> Result<EvalGrid> {
    if functions.is_empty() || x.is_empty() || q == 0 {
        return Err(Error::EmptyData("projection needs functions, points and q >= 1".into()));
    }
    let columns: Vec<Vec<f64>> = functions
        .par_iter()
        .map(|f| {
            check_dim(q, f.output_dim())?;
            let mut col = Vec::with_capacity(x.len() * q);
            for xi in x {
                col.extend(f.eval(xi)?);
            }
            Ok(col)
        })
        .collect::<Result<_>>()?;
    EvalGrid::from_columns(&columns)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadEstimate {
    pub mean: f64,
    /// Zero for exact values.
    pub std_error: f64,
    pub draws: usize,
    pub exact: bool,
}

impl RadEstimate {
    fn from_samples(samples: &[f64]) -> RadEstimate {
        let k = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / k;
        let var = if samples.len() > 1 {
            samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (k - 1.0)
        } else {
            0.0
        };
        RadEstimate { mean, std_error: (var / k).sqrt(), draws: samples.len(), exact: false }
    }
}

fn sign_draws(m: usize, draw: usize, seed: u64) -> Vec<bool> {
    let mut rng = stream_rng(seed, draw as u64);
    (0..m).map(|_| rng.gen::<bool>()).collect()
}

/// Monte-Carlo estimate over `draws` independent sign vectors.
pub fn empirical_rademacher_mc(grid: &EvalGrid, draws: usize, seed: u64) -> Result<RadEstimate> {
    if draws == 0 {
        return Err(Error::InvalidParameter("draws must be at least 1".into()));
    }
    if grid.m == 0 || grid.k == 0 {
        return Err(Error::EmptyData("empty grid".into()));
    }
    let samples: Vec<f64> = (0..draws)
        .into_par_iter()
        .map(|t| {
            let s = sign_draws(grid.m, t, seed);
            grid.sup_correlation(|i| s[i])
        })
        .collect();
    Ok(RadEstimate::from_samples(&samples))
}

/// Exact value by enumerating all `2^m` sign vectors (`m <= 20`).
pub fn empirical_rademacher_exact(grid: &EvalGrid) -> Result<RadEstimate> {
    if grid.m == 0 || grid.k == 0 {
        return Err(Error::EmptyData("empty grid".into()));
    }
    if grid.m > MAX_EXACT_POINTS {
        return Err(Error::GuardExceeded((grid.m as f64).exp2()));
    }
    let total = 1usize << grid.m;
    let samples: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|mask| grid.sup_correlation(|i| mask >> i & 1 == 1))
        .collect();
    let mean = samples.iter().sum::<f64>() / total as f64;
    Ok(RadEstimate { mean, std_error: 0.0, draws: total, exact: true })
}

/// Exact enumeration when `m <= 20`, Monte Carlo otherwise.
pub fn empirical_rademacher(grid: &EvalGrid, draws: usize, seed: u64) -> Result<RadEstimate> {
    if grid.m <= MAX_EXACT_POINTS {
        empirical_rademacher_exact(grid)
    } else {
        empirical_rademacher_mc(grid, draws, seed)
    }
}

/// Rademacher average of all stumps with leaf rows in the `l1` ball of
/// radius `tau`, computed exactly per sign draw.
///
/// For a fixed split the supremum of a linear functional over the ball is
/// attained at `±tau` times a basis vector, so each leaf contributes
/// `tau * max_s |sum of signs in that leaf and output s|`. All cuts between
/// distinct feature values are enumerated, including the trivial cut that
/// keeps every point on one side.
pub fn exact_stump_rademacher(x: &[Vec<f64>], q: usize, tau: f64, draws: usize, seed: u64) -> Result<RadEstimate> {
    let n = x.len();
    if n == 0 || q == 0 {
        return Err(Error::EmptyData("stump enumeration needs points and q >= 1".into()));
    }
    if draws == 0 {
        return Err(Error::InvalidParameter("draws must be at least 1".into()));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    let d = x[0].len();
    for row in x {
        check_dim(d, row.len())?;
    }
    let m = n * q;
    let work = (d * (m + 1)) as f64 * (2 * q * 2 * q) as f64;
    if work > STUMP_GUARD {
        return Err(Error::GuardExceeded(work));
    }
    let orders: Vec<Vec<usize>> = (0..d)
        .map(|f| {
            let mut o: Vec<usize> = (0..n).collect();
            o.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
            o
        })
        .collect();

    let samples: Vec<f64> = (0..draws)
        .into_par_iter()
        .map(|t| {
            let signs = sign_draws(m, t, seed);
            let s = |i: usize, j: usize| if signs[i * q + j] { 1.0 } else { -1.0 };
            let mut total = vec![0.0; q];
            for i in 0..n {
                for (j, tj) in total.iter_mut().enumerate() {
                    *tj += s(i, j);
                }
            }
            let peak = |v: &[f64]| v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            // The trivial cut.
            let mut best = peak(&total);
            for (f, order) in orders.iter().enumerate() {
                let mut left = vec![0.0; q];
                for k in 0..n - 1 {
                    let i = order[k];
                    for (j, lj) in left.iter_mut().enumerate() {
                        *lj += s(i, j);
                    }
                    if x[i][f] < x[order[k + 1]][f] {
                        let right_peak = total.iter().zip(&left).fold(0.0f64, |a, (t, l)| a.max((t - l).abs()));
                        best = best.max(peak(&left) + right_peak);
                    }
                }
            }
            tau * best / m as f64
        })
        .collect();
    Ok(RadEstimate::from_samples(&samples))
}

/// Upper bound on the Rademacher complexity of the projected class of
/// trees with `p` leaves and leaf `l1` budget `tau`:
/// `2 tau sqrt(p log(2 max{d n q, q}) / (n q))`.
pub fn tree_class_rad_bound(p: usize, tau: f64, d: usize, n: usize, q: usize) -> Result<f64> {
    if p < 2 || d == 0 || n == 0 || q == 0 || !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tree class bound needs p >= 2 and positive tau, d, n, q (got p={p}, tau={tau}, d={d}, n={n}, q={q})"
        )));
    }
    let m = (n * q) as f64;
    let arg = 2.0 * ((d * n * q) as f64).max(q as f64);
    Ok(2.0 * tau * (p as f64 * arg.ln() / m).sqrt())
}

/// Bound on `log N(eps)` in the sup metric from a worst-case Rademacher
/// complexity: `rad^2 * (4n/eps^2) * log(2 e beta n / eps)`. Only valid
/// for `eps > 2 rad`.
pub fn minoration_cover_bound(epsilon: f64, rad_n: f64, n: usize, beta: f64) -> Result<f64> {
    if !(rad_n >= 0.0) || n == 0 || !(beta > 0.0) {
        return Err(Error::InvalidParameter("minoration needs rad >= 0, n >= 1, beta > 0".into()));
    }
    if !(epsilon > 2.0 * rad_n) || !(epsilon > 0.0) {
        return Err(Error::Domain(format!("epsilon {epsilon} is outside the minoration regime (needs > {})", 2.0 * rad_n)));
    }
    if rad_n == 0.0 {
        return Ok(0.0);
    }
    let nf = n as f64;
    Ok(rad_n * rad_n * 4.0 * nf / (epsilon * epsilon) * (2.0 * std::f64::consts::E * beta * nf / epsilon).ln())
}

/// `2 sum_{k=1}^K (eps_k + eps_{k-1}) sqrt(log N(eps_k) / n) + eps_K` for the
/// sequence `eps_0 > eps_1 > ... > eps_K`.
pub fn dudley_chain_bound(epsilons: &[f64], log_cover: impl Fn(f64) -> Result<f64>, n: usize) -> Result<f64> {
    if epsilons.len() < 2 {
        return Err(Error::InvalidParameter("chaining needs K >= 1".into()));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) || !(epsilons[epsilons.len() - 1] > 0.0) {
        return Err(Error::InvalidParameter("epsilon sequence must be positive and strictly decreasing".into()));
    }
    let mut sum = 0.0;
    for k in 1..epsilons.len() {
        let entropy = log_cover(epsilons[k])?;
        sum += (epsilons[k] + epsilons[k - 1]) * (entropy.max(0.0) / n as f64).sqrt();
    }
    Ok(2.0 * sum + epsilons[epsilons.len() - 1])
}

fn check_local(lambda: f64, theta: f64, r: f64, q: usize, n: usize, beta: f64, rad_nq: f64) -> Result<()> {
    if !(0.0..=0.5).contains(&theta) {
        return Err(Error::Domain(format!("theta must lie in [0,1/2], got {theta}")));
    }
    if !(lambda > 0.0) || !(r > 0.0) || q == 0 || n == 0 || !(beta >= 1.0) || !(rad_nq >= 0.0) {
        return Err(Error::InvalidParameter(
            "local bound needs lambda > 0, r > 0, q, n >= 1, beta >= 1, rad >= 0".into(),
        ));
    }
    Ok(())
}

/// `log^{3/2}(e beta n q)`.
pub(crate) fn log_factor(beta: f64, n: usize, q: usize) -> f64 {
    (std::f64::consts::E * beta * (n * q) as f64).ln().powf(1.5)
}

/// Local Rademacher bound for a loss class restricted to empirical risk
/// `<= r`: `lambda r^theta (512 sqrt(q) log^{3/2}(e beta n q) rad + n^{-1/2})`.
pub fn local_contraction_bound(lambda: f64, theta: f64, r: f64, q: usize, n: usize, beta: f64, rad_nq: f64) -> Result<f64> {
    check_local(lambda, theta, r, q, n, beta, rad_nq)?;
    let inner = CONTRACTION_CONSTANT * (q as f64).sqrt() * log_factor(beta, n, q) * rad_nq + 1.0 / (n as f64).sqrt();
    Ok(lambda * r.powf(theta) * inner)
}

/// Evaluates the chaining argument behind [`local_contraction_bound`]
/// numerically: scales `eps_k = 2^{1+theta} lambda r^theta beta 2^{-k}`,
/// entropies from [`minoration_cover_bound`] on the `n q` projected points,
/// and the stopping index `K = ceil(log2(beta min{1/(2 rad), 8 sqrt n})) - 1`.
/// The result never exceeds the closed form.
pub fn chained_local_bound(lambda: f64, theta: f64, r: f64, q: usize, n: usize, beta: f64, rad_nq: f64) -> Result<f64> {
    check_local(lambda, theta, r, q, n, beta, rad_nq)?;
    let scale = 2f64.powf(1.0 + theta) * lambda * r.powf(theta);
    let cap = if rad_nq > 0.0 { (1.0 / (2.0 * rad_nq)).min(8.0 * (n as f64).sqrt()) } else { 8.0 * (n as f64).sqrt() };
    let k_max = (beta * cap).log2().ceil() as i64 - 1;
    if k_max < 1 {
        // The whole class fits in one ball of radius eps_0.
        return Ok(scale * beta);
    }
    let epsilons: Vec<f64> = (0..=k_max).map(|k| scale * beta * (-k as f64).exp2()).collect();
    dudley_chain_bound(
        &epsilons,
        |eps| minoration_cover_bound(eps / scale, rad_nq, n * q, beta),
        n,
    )
}

/// JSON summary written by the complexity tooling.
#[derive(Debug, Clone, Serialize)]
pub struct ComplexityReport {
    pub n: usize,
    pub d: usize,
    pub q: usize,
    pub tau: f64,
    pub leaves: usize,
    pub seed: u64,
    pub estimate: RadEstimate,
    pub tree_class_bound: f64,
}
