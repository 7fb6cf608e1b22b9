//! Euclidean projection onto `{w : ||w||_1 <= tau, ||w||_inf <= 1}`.

use super::CONSTRAINT_SLACK;

/// Projects `v` onto the intersection of the `l1` ball of radius `tau` and
/// the unit box.
///
/// The KKT conditions give `w_j = sign(v_j) * clamp(|v_j| - mu, 0, 1)` for a
/// single shift `mu >= 0`. The total `phi(mu) = sum_j clamp(|v_j| - mu, 0, 1)`
/// is piecewise linear and non-increasing with kinks at `|v_j|` and
/// `|v_j| - 1`, so `mu` is found exactly by scanning the sorted kinks.
pub fn project_l1_box(v: &[f64], tau: f64) -> Vec<f64> {
    let a: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    let phi = |mu: f64| a.iter().map(|&x| (x - mu).clamp(0.0, 1.0)).sum::<f64>();

    // Inputs already within the constraint slack are returned as is, which
    // makes the map exactly idempotent.
    let mu = if phi(0.0) <= tau + CONSTRAINT_SLACK {
        0.0
    } else {
        let mut kinks: Vec<f64> = a
            .iter()
            .flat_map(|&x| [x, x - 1.0])
            .filter(|&k| k > 0.0)
            .collect();
        kinks.sort_by(f64::total_cmp);
        kinks.dedup();
        let mut lo = 0.0;
        let mut hi = lo;
        for &k in &kinks {
            hi = k;
            if phi(k) <= tau {
                break;
            }
            lo = k;
        }
        // On (lo, hi) each coordinate is either saturated at 1, zero or
        // free with value |v_j| - mu; solve the linear equation directly.
        let mid = 0.5 * (lo + hi);
        let (mut free_sum, mut free, mut saturated) = (0.0, 0usize, 0usize);
        for &x in &a {
            if x - 1.0 >= mid {
                saturated += 1;
            } else if x > mid {
                free_sum += x;
                free += 1;
            }
        }
        if free == 0 {
            hi
        } else {
            ((free_sum + saturated as f64 - tau) / free as f64).clamp(lo, hi)
        }
    };

    v.iter()
        .zip(&a)
        .map(|(&x, &ax)| x.signum() * (ax - mu).clamp(0.0, 1.0))
        .map(|w| if w == 0.0 { 0.0 } else { w })
        .collect()
}
