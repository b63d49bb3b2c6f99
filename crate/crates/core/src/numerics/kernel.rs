use serde::{Deserialize, Serialize};

use super::bessel::bessel_j_row;
use super::sum::compensated_sum;
use crate::error::{Error, Result};

/// Largest kernel half-width that [`build_kernel`] will produce.
pub const MAX_HALF_WIDTH: usize = 1_000_000;

/// Smallest truncation tolerance accepted by [`build_kernel`].
pub const MIN_TOLERANCE: f64 = 1e-14;

/// Truncated row of Bessel coefficients `J_{-W}(k) … J_W(k)` defining one kick.
///
/// `leak` is the probability weight discarded by the truncation: the norm a
/// single momentum eigenstate loses in one kick. Superpositions can see
/// interference between kept and discarded orders, so their norm changes by
/// up to [`unitarity_bound`](Self::unitarity_bound), which scales like
/// `sqrt(leak)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KickKernel {
    k: f64,
    half_width: usize,
    coeffs: Vec<f64>,
    leak: f64,
    tail_l1: f64,
}

impl KickKernel {
    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    /// Coefficients indexed `coeffs[W + d] = J_d(k)` for `d` in `-W..=W`.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn leak(&self) -> f64 {
        self.leak
    }

    /// `Σ_{|d|>W} |J_d(k)|`, the operator-norm size of the discarded band.
    pub fn tail_l1(&self) -> f64 {
        self.tail_l1
    }

    /// Bound on `| ‖Kψ‖² - ‖ψ‖² |` for normalized `ψ` away from the basis edges.
    pub fn unitarity_bound(&self) -> f64 {
        2.0 * self.tail_l1 + self.tail_l1 * self.tail_l1
    }

    /// `J_d(k)`, zero outside the retained band.
    pub fn coeff(&self, d: i64) -> f64 {
        if d.unsigned_abs() as usize > self.half_width {
            0.0
        } else {
            self.coeffs[(self.half_width as i64 + d) as usize]
        }
    }

    /// The kernel of the inverse kick, `J_{-d}(k)`.
    pub fn mirrored(&self) -> KickKernel {
        let mut coeffs = self.coeffs.clone();
        coeffs.reverse();
        KickKernel {
            coeffs,
            ..self.clone()
        }
    }
}

/// Builds the smallest kernel whose discarded weight `1 - Σ J_m(k)^2` is at most `tol`.
pub fn build_kernel(k: f64, tol: f64) -> Result<KickKernel> {
    if !k.is_finite() || k < 0.0 {
        return Err(Error::domain(format!(
            "kick strength must be finite and nonnegative, got {k}"
        )));
    }
    if !(MIN_TOLERANCE..1.0).contains(&tol) {
        return Err(Error::domain(format!(
            "kernel tolerance must lie in [{MIN_TOLERANCE:e}, 1), got {tol:e}"
        )));
    }
    if k == 0.0 {
        return Ok(KickKernel {
            k,
            half_width: 0,
            coeffs: vec![1.0],
            leak: 0.0,
            tail_l1: 0.0,
        });
    }
    // |J_m(k)| is appreciable up to |m| ~ k, so anything beyond the cap is hopeless.
    if k >= MAX_HALF_WIDTH as f64 {
        return Err(Error::Capacity(format!(
            "kick strength {k} needs a kernel half-width above {MAX_HALF_WIDTH}"
        )));
    }

    let mut max_order = (k + 30.0 + 10.0 * k.cbrt()).ceil() as usize;
    let (half_width, row) = loop {
        let row = bessel_j_row(max_order.min(MAX_HALF_WIDTH), k)?;
        if let Some(w) = smallest_half_width(&row, tol) {
            break (w, row);
        }
        if max_order >= MAX_HALF_WIDTH {
            return Err(Error::Capacity(format!(
                "kernel for k = {k} at tolerance {tol:e} exceeds half-width {MAX_HALF_WIDTH}"
            )));
        }
        max_order *= 2;
    };

    // orders past the row end are below 1e-20 in magnitude
    let tail_l1 = 2.0 * compensated_sum(row[half_width + 1..].iter().map(|v| v.abs()));
    let row = &row[..=half_width];
    let mut coeffs = Vec::with_capacity(2 * half_width + 1);
    for m in (1..=half_width).rev() {
        let v = row[m];
        coeffs.push(if m % 2 == 1 { -v } else { v });
    }
    coeffs.extend_from_slice(row);
    let kept = compensated_sum(coeffs.iter().map(|c| c * c));
    Ok(KickKernel {
        k,
        half_width,
        coeffs,
        leak: (1.0 - kept).max(0.0),
        tail_l1,
    })
}

fn smallest_half_width(row: &[f64], tol: f64) -> Option<usize> {
    let mut kept = super::sum::CompensatedSum::new();
    kept.add(row[0] * row[0]);
    if 1.0 - kept.value() <= tol {
        return Some(0);
    }
    for (m, v) in row.iter().enumerate().skip(1) {
        kept.add(2.0 * v * v);
        if 1.0 - kept.value() <= tol {
            return Some(m);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_kick_is_identity() {
        let kernel = build_kernel(0.0, 1e-12).unwrap();
        assert_eq!(kernel.half_width(), 0);
        assert_eq!(kernel.coeffs(), &[1.0]);
        assert_eq!(kernel.leak(), 0.0);
    }

    #[test]
    fn parity_is_exact() {
        for &k in &[0.3, 1.0, 5.0, 12.25, 20.0] {
            let kernel = build_kernel(k, 1e-12).unwrap();
            let w = kernel.half_width();
            for m in 0..=w {
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                assert_eq!(kernel.coeffs()[w + m], sign * kernel.coeffs()[w - m]);
            }
        }
    }

    #[test]
    fn leak_bounded_and_half_width_minimal() {
        for &tol in &[1e-4, 1e-8, 1e-10, 1e-14] {
            let kernel = build_kernel(5.0, tol).unwrap();
            assert!(kernel.leak() <= tol);
            assert!(kernel.half_width() >= 5);
            // One fewer order on each side must exceed the tolerance.
            let w = kernel.half_width() as i64;
            let drop = 2.0 * kernel.coeff(w).powi(2);
            assert!(kernel.leak() + drop > tol);
        }
    }

    #[test]
    fn kept_weight_plus_leak_is_one() {
        for &k in &[0.5, 1.0, 5.0, 10.0, 20.0, 45.0] {
            let kernel = build_kernel(k, 1e-12).unwrap();
            let kept = compensated_sum(kernel.coeffs().iter().map(|c| c * c));
            assert!((kept + kernel.leak() - 1.0).abs() <= 2.0 * f64::EPSILON);
        }
    }

    #[test]
    fn mirrored_reverses_band() {
        let kernel = build_kernel(5.0, 1e-10).unwrap();
        let mirror = kernel.mirrored();
        for d in -3..=3 {
            assert_eq!(mirror.coeff(d), kernel.coeff(-d));
        }
        assert_eq!(kernel.coeff(1000), 0.0);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(build_kernel(-1.0, 1e-10), Err(Error::Domain(_))));
        assert!(matches!(
            build_kernel(f64::NAN, 1e-10),
            Err(Error::Domain(_))
        ));
        assert!(matches!(build_kernel(5.0, 1e-15), Err(Error::Domain(_))));
        assert!(matches!(build_kernel(5.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(
            build_kernel(2.0e6, 1e-10),
            Err(Error::Capacity(_))
        ));
    }
}
