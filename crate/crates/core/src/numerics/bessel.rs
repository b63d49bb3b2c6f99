//! Integer-order Bessel functions of the first kind.
//!
//! Small arguments use the ascending power series. Everything else uses
//! Miller's downward recurrence normalized with `J_0 + 2 Σ J_{2k} = 1`, which
//! is stable for any order and accurate to ~1e-13 absolute for `x <= 50`.

use crate::error::{Error, Result};

/// Largest |order| accepted by [`bessel_j`].
pub const MAX_ORDER: u64 = 1_000_000;

/// Below this argument the power series is used directly.
const SERIES_CUTOFF: f64 = 0.5;

const RESCALE_ABOVE: f64 = 1e250;
const RESCALE_BY: f64 = 1e-250;

/// `J_order(x)` for integer order.
pub fn bessel_j(order: i64, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::domain(format!("bessel_j: non-finite argument {x}")));
    }
    if order.unsigned_abs() > MAX_ORDER {
        return Err(Error::domain(format!(
            "bessel_j: |order| = {} exceeds {MAX_ORDER}",
            order.unsigned_abs()
        )));
    }
    let n = order.unsigned_abs() as usize;
    // J_{-n}(x) = (-1)^n J_n(x) and J_n(-x) = (-1)^n J_n(x)
    let flips = (order < 0) as usize + (x < 0.0) as usize;
    let sign = if n % 2 == 1 && flips % 2 == 1 {
        -1.0
    } else {
        1.0
    };
    let ax = x.abs();
    let value = if ax == 0.0 {
        if n == 0 {
            1.0
        } else {
            0.0
        }
    } else if ax <= SERIES_CUTOFF {
        series(n, ax)
    } else {
        miller_row(n, ax)[n]
    };
    Ok(sign * value)
}

/// `[J_0(x), J_1(x), …, J_max_order(x)]` from a single recurrence sweep.
pub fn bessel_j_row(max_order: usize, x: f64) -> Result<Vec<f64>> {
    if !x.is_finite() {
        return Err(Error::domain(format!(
            "bessel_j_row: non-finite argument {x}"
        )));
    }
    if max_order as u64 > MAX_ORDER {
        return Err(Error::domain(format!(
            "bessel_j_row: max order {max_order} exceeds {MAX_ORDER}"
        )));
    }
    let ax = x.abs();
    let mut row = if ax == 0.0 {
        let mut r = vec![0.0; max_order + 1];
        r[0] = 1.0;
        r
    } else if ax <= SERIES_CUTOFF {
        (0..=max_order).map(|n| series(n, ax)).collect()
    } else {
        miller_row(max_order, ax)
    };
    if x < 0.0 {
        row.iter_mut().skip(1).step_by(2).for_each(|v| *v = -*v);
    }
    Ok(row)
}

/// Ascending series `Σ_j (-1)^j (x/2)^{2j+n} / (j! (j+n)!)`, for `0 < x <= SERIES_CUTOFF`.
fn series(n: usize, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = 1.0;
    for i in 1..=n {
        term *= half / i as f64;
        if term == 0.0 {
            return 0.0;
        }
    }
    let q = half * half;
    let mut sum = term;
    for j in 1.. {
        term *= -q / (j as f64 * (j + n) as f64);
        sum += term;
        if term.abs() <= f64::EPSILON * 1e-3 * sum.abs() {
            break;
        }
    }
    sum
}

/// Miller downward recurrence for `x > 0`; returns orders `0..=max_order`.
fn miller_row(max_order: usize, x: f64) -> Vec<f64> {
    let base = max_order.max(x.ceil() as usize);
    let mut start = base + 20 + (200.0 * base as f64).sqrt() as usize;
    if start % 2 == 1 {
        start += 1;
    }

    // Values are stored with the number of rescalings applied so far, so a
    // rescale never needs to touch the stored entries.
    let mut stored = vec![(0.0_f64, 0_u32); max_order + 1];
    let mut rescales = 0_u32;

    let two_over_x = 2.0 / x;
    let mut upper = 0.0_f64; // J_{k+1}
    let mut current = 1e-300_f64; // J_k at k = start
    let mut even_sum = 2.0 * current; // start is even
    for k in (1..=start).rev() {
        let lower = k as f64 * two_over_x * current - upper;
        upper = current;
        current = lower;
        if current.abs() > RESCALE_ABOVE {
            current *= RESCALE_BY;
            upper *= RESCALE_BY;
            even_sum *= RESCALE_BY;
            rescales += 1;
        }
        let order = k - 1;
        if order <= max_order {
            stored[order] = (current, rescales);
        }
        if order % 2 == 0 && order > 0 {
            even_sum += 2.0 * current;
        }
    }
    // `current` now holds J_0 (unnormalized) at the final scale.
    let norm = current + even_sum;
    stored
        .into_iter()
        .map(|(mut v, at)| {
            let mut pending = rescales - at;
            while pending > 0 && v != 0.0 {
                v *= RESCALE_BY;
                pending -= 1;
            }
            v / norm
        })
        .collect()
}
