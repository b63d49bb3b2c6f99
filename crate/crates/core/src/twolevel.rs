//! Resonantly driven two-level system, with and without intermediate
//! measurements.
//!
//! One step of length `τ` acts on the amplitudes with
//!
//! ```text
//! A(φ) = | cos φ    i sin φ |      φ = Ωτ/2
//!        | i sin φ  cos φ   |
//! ```
//!
//! and `Aⁿ = A(nφ)`. A measurement after each step erases the phases, which
//! leaves a Markov chain on the populations whose n-step matrix has diagonal
//! `(1 + cosⁿ 2φ)/2`. At fixed total time `T = π/Ω` that diagonal tends to one
//! as the number of measurements grows.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{CompensatedSum, RandomPhaseStream};

const NORM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelAmplitudes {
    pub a1: Complex64,
    pub a2: Complex64,
}

impl TwoLevelAmplitudes {
    pub fn new(a1: Complex64, a2: Complex64) -> Result<Self> {
        let state = Self { a1, a2 };
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::domain(format!(
                "two-level amplitudes have norm {norm}, expected 1"
            )));
        }
        Ok(state)
    }

    /// The system prepared in `|1⟩`.
    pub fn ground() -> Self {
        Self {
            a1: Complex64::new(1.0, 0.0),
            a2: Complex64::new(0.0, 0.0),
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.a1.norm_sqr() + self.a2.norm_sqr()
    }

    pub fn populations(&self) -> TwoLevelProbabilities {
        TwoLevelProbabilities {
            p1: self.a1.norm_sqr(),
            p2: self.a2.norm_sqr(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelProbabilities {
    pub p1: f64,
    pub p2: f64,
}

impl TwoLevelProbabilities {
    pub fn new(p1: f64, p2: f64) -> Result<Self> {
        if !(p1 >= 0.0 && p2 >= 0.0) || (p1 + p2 - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::domain(format!(
                "invalid two-level probabilities ({p1}, {p2})"
            )));
        }
        Ok(Self { p1, p2 })
    }

    pub fn ground() -> Self {
        Self { p1: 1.0, p2: 0.0 }
    }
}

/// Half-pulse angle `φ = Ωτ/2` of one evolution step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RabiStep {
    phi: f64,
}

impl RabiStep {
    pub fn new(phi: f64) -> Result<Self> {
        if !phi.is_finite() {
            return Err(Error::domain(format!("non-finite step angle {phi}")));
        }
        Ok(Self { phi })
    }

    /// Step for Rabi frequency `omega` and interval `tau`.
    pub fn from_rabi(omega: f64, tau: f64) -> Result<Self> {
        Self::new(0.5 * omega * tau)
    }

    /// Step when the total time `total_time` is split into `n` intervals.
    pub fn fixed_total_time(omega: f64, total_time: f64, n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("number of intervals must be positive"));
        }
        Self::new(omega * total_time / (2.0 * n as f64))
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }
}

pub fn step_unitary(state: TwoLevelAmplitudes, step: RabiStep) -> TwoLevelAmplitudes {
    rotate(state, step.phi)
}

/// `Aⁿ` applied in closed form.
pub fn evolve_unitary(state: TwoLevelAmplitudes, step: RabiStep, n: u64) -> TwoLevelAmplitudes {
    rotate(state, n as f64 * step.phi)
}

fn rotate(state: TwoLevelAmplitudes, angle: f64) -> TwoLevelAmplitudes {
    let (s, c) = angle.sin_cos();
    let is = Complex64::new(0.0, s);
    TwoLevelAmplitudes {
        a1: state.a1 * c + state.a2 * is,
        a2: state.a1 * is + state.a2 * c,
    }
}

/// `cosⁿ(2φ)`, evaluated through the logarithm for large `n` so that the
/// result underflows gradually instead of snapping to an exact zero.
pub fn measured_contrast(step: RabiStep, n: u64) -> f64 {
    let c = (2.0 * step.phi).cos();
    if n <= 64 || c == 0.0 {
        return c.powi(n as i32);
    }
    let magnitude = (n as f64 * c.abs().ln()).exp();
    if c < 0.0 && n % 2 == 1 {
        -magnitude
    } else {
        magnitude
    }
}

/// Populations after `n` steps with a measurement after each one (`Mⁿ`).
pub fn evolve_measured(
    probs: TwoLevelProbabilities,
    step: RabiStep,
    n: u64,
) -> TwoLevelProbabilities {
    let c = measured_contrast(step, n);
    let (stay, swap) = (0.5 * (1.0 + c), 0.5 * (1.0 - c));
    TwoLevelProbabilities {
        p1: stay * probs.p1 + swap * probs.p2,
        p2: swap * probs.p1 + stay * probs.p2,
    }
}

/// Survival probability in `|1⟩` at `T = π/Ω` when that interval is watched
/// `n` times: `(1 + cosⁿ(π/n))/2`.
pub fn zeno_survival(n: u64) -> f64 {
    let step = RabiStep::new(std::f64::consts::PI / (2.0 * n as f64)).expect("finite angle");
    evolve_measured(TwoLevelProbabilities::ground(), step, n).p1
}

/// Monte Carlo estimate of the measured evolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub probabilities: TwoLevelProbabilities,
    /// Standard error of the `p1` estimate.
    pub p1_std_error: f64,
}

/// Evolves `trajectories` copies with [`step_unitary`], multiplying both
/// amplitudes by independent random phases after every step, and averages
/// the final populations. Trajectory `t` draws from stream `(seed, t)`, so
/// the result does not depend on how trajectories are scheduled.
pub fn simulate_measured_mc(
    state: TwoLevelAmplitudes,
    step: RabiStep,
    n: u64,
    trajectories: usize,
    seed: u64,
) -> Result<McEstimate> {
    if trajectories == 0 {
        return Err(Error::domain("at least one trajectory is required"));
    }
    let finals: Vec<f64> = (0..trajectories as u64)
        .into_par_iter()
        .map(|t| {
            let mut stream = RandomPhaseStream::new(seed, t);
            let mut psi = state;
            for kick in 1..=n {
                psi = step_unitary(psi, step);
                psi.a1 *= Complex64::from_polar(1.0, stream.phase_at(kick, 1));
                psi.a2 *= Complex64::from_polar(1.0, stream.phase_at(kick, 2));
            }
            psi.a1.norm_sqr() / psi.norm_sqr()
        })
        .collect();

    let count = trajectories as f64;
    let mean = finals.iter().copied().collect::<CompensatedSum>().value() / count;
    let var = finals
        .iter()
        .map(|p| (p - mean).powi(2))
        .collect::<CompensatedSum>()
        .value()
        / (count - 1.0).max(1.0);
    Ok(McEstimate {
        probabilities: TwoLevelProbabilities {
            p1: mean,
            p2: 1.0 - mean,
        },
        p1_std_error: (var / count).sqrt(),
    })
}
