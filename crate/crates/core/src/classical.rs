//! Classical kicked rotor (standard map) ensembles.
//!
//! A kick `V = k cos θ Σ_j δ(t - jτ)` changes the action by `k sin θ`; the
//! angle then advances by `H₀'(I) τ`. Kick-then-rotate mirrors the quantum
//! map's convolution-then-phase order.

use std::f64::consts::TAU;
use std::ops::RangeInclusive;

use rayon::prelude::*;

use crate::diagnostics::{least_squares_slope, participation_ratio_of, ObservableRecord};
use crate::error::{Error, Result};
use crate::kickedmap::Hamiltonian;
use crate::numerics::{CompensatedSum, RandomPhaseStream};

const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalEnsemble {
    thetas: Vec<f64>,
    actions: Vec<f64>,
    initial_actions: Vec<f64>,
    k: f64,
    tau: f64,
}

impl ClassicalEnsemble {
    pub fn new(thetas: Vec<f64>, actions: Vec<f64>, k: f64, tau: f64) -> Result<Self> {
        if thetas.is_empty() || thetas.len() != actions.len() {
            return Err(Error::domain(
                "ensemble needs equally long, nonempty angle and action arrays",
            ));
        }
        if !k.is_finite() || !tau.is_finite() || tau <= 0.0 {
            return Err(Error::domain(format!(
                "invalid kick parameters k = {k}, tau = {tau}"
            )));
        }
        if thetas.iter().chain(&actions).any(|v| !v.is_finite()) {
            return Err(Error::domain("ensemble has non-finite coordinates"));
        }
        let thetas = thetas.into_iter().map(wrap_angle).collect();
        Ok(Self {
            thetas,
            initial_actions: actions.clone(),
            actions,
            k,
            tau,
        })
    }

    /// `particles` at `I = 0` with angles uniform on `[0, 2π)` drawn from stream `(seed, 0)`.
    pub fn uniform(particles: usize, k: f64, tau: f64, seed: u64) -> Result<Self> {
        let mut stream = RandomPhaseStream::new(seed, 0);
        let thetas = (0..particles).map(|_| stream.draw_phase()).collect();
        Self::new(thetas, vec![0.0; particles], k, tau)
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn actions(&self) -> &[f64] {
        &self.actions
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// One kick and one free rotation for every particle.
    pub fn step(&mut self, h0: &Hamiltonian) -> Result<()> {
        let (k, tau) = (self.k, self.tau);
        self.thetas
            .par_chunks_mut(CHUNK)
            .zip(self.actions.par_chunks_mut(CHUNK))
            .try_for_each(|(thetas, actions)| {
                for (theta, action) in thetas.iter_mut().zip(actions.iter_mut()) {
                    *action += k * theta.sin();
                    *theta = wrap_angle(*theta + h0.derivative(*action)? * tau);
                }
                Ok(())
            })
    }

    /// `⟨(I - I₀)²⟩` with `I₀` each particle's starting action.
    pub fn mean_square_displacement(&self) -> f64 {
        self.actions
            .iter()
            .zip(&self.initial_actions)
            .map(|(i, i0)| (i - i0).powi(2))
            .collect::<CompensatedSum>()
            .value()
            / self.len() as f64
    }

    fn record(&self, step: usize, reference: i64) -> Result<ObservableRecord> {
        let n = self.len() as f64;
        let mean = self
            .actions
            .iter()
            .copied()
            .collect::<CompensatedSum>()
            .value()
            / n;
        // integer-binned action distribution, for comparison with quantum populations
        let lo = self
            .actions
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b))
            .round() as i64;
        let hi = self
            .actions
            .iter()
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b))
            .round() as i64;
        let mut bins = vec![0usize; (hi - lo + 1) as usize];
        for &a in &self.actions {
            bins[(a.round() as i64 - lo) as usize] += 1;
        }
        let at_reference = if (lo..=hi).contains(&reference) {
            bins[(reference - lo) as usize] as f64 / n
        } else {
            0.0
        };
        Ok(ObservableRecord {
            step,
            time: step as f64 * self.tau,
            norm_deficit: 0.0,
            mean_m: mean,
            second_moment: self.mean_square_displacement(),
            participation_ratio: participation_ratio_of(bins.iter().map(|&c| c as f64 / n))?,
            p_initial: at_reference,
        })
    }

    /// Steps the ensemble `steps` times, recording observables at every kick
    /// and estimating the diffusion coefficient over `fit_range` (in kicks).
    ///
    /// The standard error of the estimate treats particles as independent:
    /// the least-squares slope is a fixed linear combination of the
    /// per-particle squared displacements, so its spread over particles is
    /// accumulated directly.
    pub fn run(
        &mut self,
        h0: &Hamiltonian,
        steps: usize,
        fit_range: RangeInclusive<usize>,
        reference: i64,
    ) -> Result<ClassicalRun> {
        let fit_steps: Vec<usize> = fit_range.filter(|&j| j <= steps).collect();
        if fit_steps.len() < MIN_FIT_POINTS {
            return Err(Error::domain(format!(
                "diffusion fit needs at least {MIN_FIT_POINTS} kicks in range"
            )));
        }
        let times: Vec<f64> = fit_steps.iter().map(|&j| j as f64 * self.tau).collect();
        let t_mean = times.iter().sum::<f64>() / times.len() as f64;
        let sxx: f64 = times.iter().map(|t| (t - t_mean).powi(2)).sum();
        let weight_at = |j: usize| {
            fit_steps
                .binary_search(&j)
                .ok()
                .map(|i| (times[i] - t_mean) / (2.0 * sxx))
        };

        let mut contributions = vec![0.0; self.len()];
        let mut records = Vec::with_capacity(steps + 1);
        records.push(self.record(0, reference)?);
        for j in 1..=steps {
            self.step(h0)?;
            records.push(self.record(j, reference)?);
            if let Some(w) = weight_at(j) {
                contributions
                    .par_iter_mut()
                    .zip(self.actions.par_iter().zip(self.initial_actions.par_iter()))
                    .for_each(|(c, (i, i0))| *c += w * (i - i0).powi(2));
            }
        }
        let n = self.len() as f64;
        let d = contributions
            .iter()
            .copied()
            .collect::<CompensatedSum>()
            .value()
            / n;
        let var = contributions
            .iter()
            .map(|c| (c - d).powi(2))
            .collect::<CompensatedSum>()
            .value()
            / (n - 1.0).max(1.0);
        Ok(ClassicalRun {
            records,
            diffusion: d,
            diffusion_std_error: (var / n).sqrt(),
        })
    }
}

/// Advances a copy of `ens` by one kick.
pub fn classical_step(ens: &ClassicalEnsemble, h0: &Hamiltonian) -> Result<ClassicalEnsemble> {
    let mut next = ens.clone();
    next.step(h0)?;
    Ok(next)
}

fn wrap_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t >= TAU {
        0.0
    } else {
        t
    }
}

#[derive(Debug, Clone)]
pub struct ClassicalRun {
    /// Observables at kicks `0..=steps`; `second_moment` is `⟨(I - I₀)²⟩`.
    pub records: Vec<ObservableRecord>,
    pub diffusion: f64,
    pub diffusion_std_error: f64,
}

pub const MIN_FIT_POINTS: usize = 10;

/// `D` from `⟨ΔI²⟩ = 2 D t`: half the least-squares slope over `fit_range`.
///
/// `msd[j]` is the mean-square displacement at time `times[j]`.
pub fn classical_diffusion(
    times: &[f64],
    msd: &[f64],
    fit_range: RangeInclusive<usize>,
) -> Result<f64> {
    if times.len() != msd.len() {
        return Err(Error::domain("times and displacements differ in length"));
    }
    let end = (*fit_range.end()).min(times.len().saturating_sub(1));
    let start = *fit_range.start();
    if start > end || end - start + 1 < MIN_FIT_POINTS {
        return Err(Error::domain(format!(
            "diffusion fit needs at least {MIN_FIT_POINTS} points in range"
        )));
    }
    Ok(0.5 * least_squares_slope(&times[start..=end], &msd[start..=end])?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn free_rotor_without_kicks() {
        let mut ens = ClassicalEnsemble::new(vec![0.1, 1.0], vec![0.5, -0.25], 0.0, 2.0).unwrap();
        ens.step(&Hamiltonian::Rotor).unwrap();
        assert_eq!(ens.actions(), &[0.5, -0.25]);
        assert!((ens.thetas()[0] - 1.1).abs() < 1e-15);
        assert!((ens.thetas()[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kick_at_quarter_turn() {
        let ens = ClassicalEnsemble::new(vec![FRAC_PI_2], vec![0.0], 5.0, 1.0).unwrap();
        let next = classical_step(&ens, &Hamiltonian::Rotor).unwrap();
        assert_eq!(next.actions()[0], 5.0);
        assert!((next.thetas()[0] - (FRAC_PI_2 + 5.0).rem_euclid(TAU)).abs() < 1e-14);
    }

    #[test]
    fn one_kick_spread_matches_half_k_squared() {
        // oracle: an equispaced angle grid averages sin² exactly to 1/2
        let n = 1000;
        let thetas = (0..n).map(|i| TAU * i as f64 / n as f64).collect();
        let mut ens = ClassicalEnsemble::new(thetas, vec![0.0; n], 5.0, 1.0).unwrap();
        ens.step(&Hamiltonian::Rotor).unwrap();
        assert!((ens.mean_square_displacement() - 12.5).abs() < 1e-10);
    }

    #[test]
    fn diffusion_from_synthetic_series() {
        let times: Vec<f64> = (0..=50).map(|j| j as f64).collect();
        let line: Vec<f64> = times.iter().map(|t| 25.0 / 2.0 * t).collect();
        assert!((classical_diffusion(&times, &line, 0..=50).unwrap() - 6.25).abs() < 1e-12);
        let flat = vec![3.0; 51];
        assert_eq!(classical_diffusion(&times, &flat, 0..=50).unwrap(), 0.0);
        assert!(classical_diffusion(&times, &line, 0..=5).is_err());
        assert!(classical_diffusion(&[1.0; 20], &[2.0; 20], 0..=19).is_err());
    }

    #[test]
    fn rejects_malformed_ensembles() {
        assert!(ClassicalEnsemble::new(vec![], vec![], 1.0, 1.0).is_err());
        assert!(ClassicalEnsemble::new(vec![0.0], vec![0.0, 1.0], 1.0, 1.0).is_err());
        assert!(ClassicalEnsemble::new(vec![0.0], vec![0.0], 1.0, 0.0).is_err());
    }

    #[test]
    fn angles_stay_wrapped() {
        let mut ens = ClassicalEnsemble::uniform(500, 7.0, 1.0, 3).unwrap();
        for _ in 0..20 {
            ens.step(&Hamiltonian::Rotor).unwrap();
        }
        assert!(ens.thetas().iter().all(|t| (0.0..TAU).contains(t)));
    }
}
