//! The kicked-rotor map on a truncated momentum basis.
//!
//! One period takes amplitudes `a_n` to
//! `a'_m = e^{-iβ_m} Σ_n J_{m-n}(k) a_n`, with `β_m = H₀(m) τ` (ħ = 1).
//! The convolution is evaluated directly on the band of the truncated
//! kernel; probability pushed past the basis edges is tracked as a norm
//! deficit and aborts the run once it reaches the spill threshold.

use std::f64::consts::TAU;
use std::ops::RangeInclusive;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, ObservableRecord, ObservableSeries, SeriesMeta};
use crate::error::{Error, Result};
use crate::measurement::{apply_measurement, MeasurementProtocol};
use crate::numerics::{CompensatedSum, KickKernel, RandomPhaseStream};

/// Largest basis half-width accepted by [`hamiltonian_phases`].
pub const MAX_BASIS_HALF_WIDTH: usize = 1 << 20;

/// Default edge occupation above which a run is aborted.
pub const DEFAULT_SPILL_THRESHOLD: f64 = 1e-8;

/// Unperturbed Hamiltonian `H₀(m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hamiltonian {
    /// `H₀(m) = m²/2`
    Rotor,
    /// `H₀(m) = Σ_i c_i m^i`
    Polynomial(Vec<f64>),
    /// `H₀(m_min + i) = values[i]`
    Tabulated { m_min: i64, values: Vec<f64> },
}

impl Hamiltonian {
    pub fn value(&self, m: i64) -> Result<f64> {
        let v = match self {
            Hamiltonian::Rotor => 0.5 * (m as f64) * (m as f64),
            Hamiltonian::Polynomial(c) => horner(c, m as f64),
            Hamiltonian::Tabulated { m_min, values } => {
                let idx = m - m_min;
                if idx < 0 || idx as usize >= values.len() {
                    return Err(Error::domain(format!("H0 table has no entry for m = {m}")));
                }
                values[idx as usize]
            }
        };
        if !v.is_finite() {
            return Err(Error::domain(format!("H0({m}) = {v} is not finite")));
        }
        Ok(v)
    }

    /// `dH₀/dI` at a real action; tables use the slope of their linear interpolant.
    pub fn derivative(&self, action: f64) -> Result<f64> {
        let d = match self {
            Hamiltonian::Rotor => action,
            Hamiltonian::Polynomial(c) => {
                let deriv: Vec<f64> = c
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(i, ci)| i as f64 * ci)
                    .collect();
                horner(&deriv, action)
            }
            Hamiltonian::Tabulated { m_min, values } => {
                let x = action - *m_min as f64;
                let last = values.len() as f64 - 1.0;
                if !(0.0..=last).contains(&x) || values.len() < 2 {
                    return Err(Error::domain(format!(
                        "action {action} outside the H0 table"
                    )));
                }
                let lo = (x.floor() as usize).min(values.len() - 2);
                if x == x.floor() && lo > 0 && (x as usize) < values.len() - 1 {
                    let i = x as usize;
                    0.5 * (values[i + 1] - values[i - 1])
                } else {
                    values[lo + 1] - values[lo]
                }
            }
        };
        if !d.is_finite() {
            return Err(Error::domain(format!("H0'({action}) is not finite")));
        }
        Ok(d)
    }
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// `τ = 4π p/q` for small `q` makes the rotor phases periodic in `m`
/// (quantum resonance). Returns `(p, q)` when that happens.
pub fn quantum_resonance(h0: &Hamiltonian, tau: f64) -> Option<(u64, u64)> {
    if *h0 != Hamiltonian::Rotor || !tau.is_finite() || tau <= 0.0 {
        return None;
    }
    let ratio = tau / (2.0 * TAU);
    (1..=64u64).find_map(|q| {
        let p = (ratio * q as f64).round();
        ((ratio - p / q as f64).abs() < 1e-9).then_some((p as u64, q))
    })
}

/// Free-evolution phases `β_m = H₀(m) τ mod 2π` over `m_min..=m_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct FreePhases {
    m_min: i64,
    beta: Vec<f64>,
    hamiltonian: Hamiltonian,
    tau: f64,
}

impl FreePhases {
    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn m_min(&self) -> i64 {
        self.m_min
    }

    pub fn m_max(&self) -> i64 {
        self.m_min + self.beta.len() as i64 - 1
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn hamiltonian(&self) -> &Hamiltonian {
        &self.hamiltonian
    }

    /// The phases with every `β_m` set to zero.
    pub fn zeroed(&self) -> FreePhases {
        FreePhases {
            beta: vec![0.0; self.beta.len()],
            ..self.clone()
        }
    }
}

/// Tabulates `β_m` on the symmetric basis `-M..=M`.
pub fn hamiltonian_phases(h0: &Hamiltonian, tau: f64, half_width: usize) -> Result<FreePhases> {
    if half_width > MAX_BASIS_HALF_WIDTH {
        return Err(Error::Capacity(format!(
            "basis half-width {half_width} exceeds {MAX_BASIS_HALF_WIDTH}"
        )));
    }
    let m = half_width as i64;
    phases_on_range(h0, tau, -m..=m)
}

/// Tabulates `β_m` on an arbitrary range of momenta.
pub fn phases_on_range(
    h0: &Hamiltonian,
    tau: f64,
    range: RangeInclusive<i64>,
) -> Result<FreePhases> {
    if !tau.is_finite() || tau <= 0.0 {
        return Err(Error::domain(format!(
            "kick period must be positive, got {tau}"
        )));
    }
    if range.is_empty() {
        return Err(Error::domain("empty momentum range"));
    }
    // Reduce in units of full turns so commensurate periods (τ = 4π for the
    // rotor) give exact zeros.
    let turns_per_unit = tau / TAU;
    let beta = range
        .clone()
        .map(|m| {
            let turns = h0.value(m)? * turns_per_unit;
            let phase = TAU * (turns - turns.floor());
            Ok(if phase >= TAU { 0.0 } else { phase })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FreePhases {
        m_min: *range.start(),
        beta,
        hamiltonian: h0.clone(),
        tau,
    })
}

/// Complex amplitudes `a_m` on `m_min..=m_max`.
///
/// Phases written by a measurement are held separately until the next kick,
/// so populations are untouched by measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    m_min: i64,
    amps: Vec<Complex64>,
    pending: Option<Vec<f64>>,
    norm_deficit: f64,
}

impl StateVector {
    /// All weight on `m0`, basis `-M..=M`.
    pub fn delta(half_width: usize, m0: i64) -> Result<Self> {
        let m = half_width as i64;
        if m0.abs() > m {
            return Err(Error::domain(format!(
                "initial momentum {m0} outside basis -{m}..={m}"
            )));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 2 * half_width + 1];
        amps[(m0 + m) as usize] = Complex64::new(1.0, 0.0);
        Ok(Self {
            m_min: -m,
            amps,
            pending: None,
            norm_deficit: 0.0,
        })
    }

    pub fn from_amplitudes(m_min: i64, amps: Vec<Complex64>) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::domain("state vector needs at least one amplitude"));
        }
        if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::domain("state vector has non-finite amplitudes"));
        }
        Ok(Self {
            m_min,
            amps,
            pending: None,
            norm_deficit: 0.0,
        })
    }

    pub fn m_min(&self) -> i64 {
        self.m_min
    }

    pub fn m_max(&self) -> i64 {
        self.m_min + self.amps.len() as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn momenta(&self) -> RangeInclusive<i64> {
        self.m_min..=self.m_max()
    }

    pub fn contains(&self, m: i64) -> bool {
        self.momenta().contains(&m)
    }

    /// Cumulative probability lost to kernel truncation and the basis edges.
    pub fn norm_deficit(&self) -> f64 {
        self.norm_deficit
    }

    pub fn population(&self, m: i64) -> f64 {
        if self.contains(m) {
            self.amps[(m - self.m_min) as usize].norm_sqr()
        } else {
            0.0
        }
    }

    /// `|a_m|²` over the basis.
    pub fn populations(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.amps.iter().map(|a| a.norm_sqr())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.populations().collect::<CompensatedSum>().value()
    }

    /// The amplitudes with any pending measurement phases applied.
    pub fn amplitudes(&self) -> Vec<Complex64> {
        let mut out = self.amps.clone();
        if let Some(pending) = &self.pending {
            for (a, &phi) in out.iter_mut().zip(pending) {
                *a *= Complex64::from_polar(1.0, phi);
            }
        }
        out
    }

    /// `⟨self|other⟩` on a shared basis.
    pub fn overlap(&self, other: &StateVector) -> Result<Complex64> {
        if self.m_min != other.m_min || self.len() != other.len() {
            return Err(Error::Incompatible("states live on different bases".into()));
        }
        let (a, b) = (self.amplitudes(), other.amplitudes());
        let mut re = CompensatedSum::new();
        let mut im = CompensatedSum::new();
        for (x, y) in a.iter().zip(&b) {
            let p = x.conj() * y;
            re.add(p.re);
            im.add(p.im);
        }
        Ok(Complex64::new(re.value(), im.value()))
    }

    /// Multiplies `a_m` by `e^{i phase}` without touching the stored modulus.
    pub(crate) fn rotate_phase(&mut self, index: usize, phase: f64) {
        let len = self.amps.len();
        let pending = self.pending.get_or_insert_with(|| vec![0.0; len]);
        let p = pending[index] + phase;
        pending[index] = if p >= TAU { p - TAU } else { p };
    }

    fn resolve_pending(&mut self) {
        if let Some(pending) = self.pending.take() {
            for (a, phi) in self.amps.iter_mut().zip(pending) {
                if phi != 0.0 {
                    *a *= Complex64::from_polar(1.0, phi);
                }
            }
        }
    }
}

/// One kick of strength `k` followed by free evolution, bound to a basis.
#[derive(Debug, Clone)]
pub struct KickedMap {
    kernel: KickKernel,
    phases: FreePhases,
    rotation: Vec<Complex64>,
    spill_threshold: f64,
}

impl KickedMap {
    pub fn new(kernel: KickKernel, phases: FreePhases) -> Self {
        let rotation = phases
            .beta
            .iter()
            .map(|&b| Complex64::from_polar(1.0, -b))
            .collect();
        Self {
            kernel,
            phases,
            rotation,
            spill_threshold: DEFAULT_SPILL_THRESHOLD,
        }
    }

    pub fn with_spill_threshold(mut self, threshold: f64) -> Self {
        self.spill_threshold = threshold;
        self
    }

    pub fn kernel(&self) -> &KickKernel {
        &self.kernel
    }

    pub fn phases(&self) -> &FreePhases {
        &self.phases
    }

    pub fn spill_threshold(&self) -> f64 {
        self.spill_threshold
    }

    fn check_basis(&self, state: &StateVector) -> Result<()> {
        if state.m_min != self.phases.m_min || state.len() != self.phases.beta.len() {
            return Err(Error::Incompatible(format!(
                "state basis {}..={} does not match phase table {}..={}",
                state.m_min,
                state.m_max(),
                self.phases.m_min,
                self.phases.m_max()
            )));
        }
        Ok(())
    }

    /// Applies one period in place. `kick` only labels a possible overflow error.
    pub fn apply(&self, state: &mut StateVector, kick: usize) -> Result<()> {
        self.check_basis(state)?;
        let before = state.norm_sqr();
        state.resolve_pending();
        let mut out = convolve(&state.amps, &self.kernel);
        for (a, r) in out.iter_mut().zip(&self.rotation) {
            *a *= r;
        }
        state.amps = out;
        self.finish_step(state, before, kick)
    }

    /// Applies the inverse period in place: conjugate phases, then the mirrored kernel.
    pub fn apply_inverse(&self, state: &mut StateVector, kick: usize) -> Result<()> {
        self.check_basis(state)?;
        let before = state.norm_sqr();
        state.resolve_pending();
        for (a, r) in state.amps.iter_mut().zip(&self.rotation) {
            *a *= r.conj();
        }
        state.amps = convolve(&state.amps, &self.kernel.mirrored());
        self.finish_step(state, before, kick)
    }

    fn finish_step(&self, state: &mut StateVector, before: f64, kick: usize) -> Result<()> {
        let after = state.norm_sqr();
        state.norm_deficit += (before - after).max(0.0);
        let last = state.amps.len() - 1;
        let edge = state.amps[0].norm_sqr().max(state.amps[last].norm_sqr());
        if edge > self.spill_threshold {
            return Err(Error::BasisOverflow {
                kick,
                edge_probability: edge,
                threshold: self.spill_threshold,
                half_width: state.amps.len() / 2,
            });
        }
        Ok(())
    }

    /// Runs `steps` kicks on one trajectory, measuring per `protocol` after
    /// each kick with phases from `stream`, and records observables relative
    /// to `reference`.
    pub fn evolve(
        &self,
        mut state: StateVector,
        steps: usize,
        protocol: &MeasurementProtocol,
        stream: &mut RandomPhaseStream,
        reference: i64,
    ) -> Result<Trajectory> {
        if steps > MAX_STEPS {
            return Err(Error::domain(format!("{steps} steps exceeds {MAX_STEPS}")));
        }
        self.check_basis(&state)?;
        if !state.contains(reference) {
            return Err(Error::domain(format!(
                "reference momentum {reference} outside basis"
            )));
        }
        let profile_from = steps - (steps / 4).max(1).min(steps);
        let mut records = Vec::with_capacity(steps + 1);
        records.push(diagnostics::observe(&state, 0, self.phases.tau, reference)?);
        let mut profile = vec![0.0; state.len()];
        let mut profile_count = 0usize;
        for kick in 1..=steps {
            self.apply(&mut state, kick)?;
            if protocol.fires_after(kick as u64) {
                apply_measurement(&mut state, protocol.measured_set(), stream, kick as u64)?;
            }
            records.push(diagnostics::observe(
                &state,
                kick,
                self.phases.tau,
                reference,
            )?);
            if kick > profile_from {
                for (acc, p) in profile.iter_mut().zip(state.populations()) {
                    *acc += p;
                }
                profile_count += 1;
            }
        }
        if profile_count > 0 {
            let scale = 1.0 / profile_count as f64;
            profile.iter_mut().for_each(|p| *p *= scale);
        } else {
            profile = state.populations().collect();
        }
        Ok(Trajectory {
            state,
            records,
            late_profile: profile,
        })
    }

    /// Runs an ensemble of phase-randomized trajectories from a common initial
    /// state and averages their observables.
    ///
    /// Trajectory `t` uses stream `(seed, t)`; results are aggregated in
    /// trajectory order with compensated sums, so the output is identical for
    /// any thread count. Without measurements every trajectory is the same
    /// and only one is run.
    pub fn run_ensemble(
        &self,
        initial: &StateVector,
        settings: &EnsembleSettings,
    ) -> Result<EnsembleRun> {
        if settings.trajectories == 0 {
            return Err(Error::domain("ensemble needs at least one trajectory"));
        }
        let count = if settings.protocol.is_none() {
            1
        } else {
            settings.trajectories
        };
        let run_one = |t: usize| {
            let mut stream = RandomPhaseStream::new(settings.seed, t as u64);
            self.evolve(
                initial.clone(),
                settings.steps,
                &settings.protocol,
                &mut stream,
                settings.reference,
            )
        };
        let trajectories: Vec<Trajectory> = match settings.threads {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::domain(format!("thread pool: {e}")))?
                .install(|| {
                    (0..count)
                        .into_par_iter()
                        .map(run_one)
                        .collect::<Result<_>>()
                })?,
            None => (0..count)
                .into_par_iter()
                .map(run_one)
                .collect::<Result<_>>()?,
        };

        let records =
            diagnostics::average_records(trajectories.iter().map(|t| t.records.as_slice()));
        let late_profile = (0..initial.len())
            .map(|i| {
                trajectories
                    .iter()
                    .map(|t| t.late_profile[i])
                    .collect::<CompensatedSum>()
                    .value()
                    / count as f64
            })
            .collect();
        let trajectory_second_moments = trajectories
            .iter()
            .map(|t| t.records.iter().map(|r| r.second_moment).collect())
            .collect();
        Ok(EnsembleRun {
            series: ObservableSeries::new(
                SeriesMeta {
                    k: self.kernel.k(),
                    tau: self.phases.tau,
                    half_width: initial.len() / 2,
                    protocol: settings.protocol.clone(),
                    seed: settings.seed,
                    trajectories: count,
                },
                records,
            )?,
            late_profile,
            trajectory_second_moments,
        })
    }
}

/// Largest number of kicks in one evolution.
pub const MAX_STEPS: usize = 1_000_000;

/// Output of [`KickedMap::evolve`].
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub state: StateVector,
    /// Observables at kicks `0..=steps`.
    pub records: Vec<ObservableRecord>,
    /// Populations averaged over the final quarter of the kicks.
    pub late_profile: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EnsembleSettings {
    pub steps: usize,
    pub protocol: MeasurementProtocol,
    pub trajectories: usize,
    pub seed: u64,
    pub reference: i64,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub series: ObservableSeries,
    /// Ensemble- and late-time-averaged population profile over the basis.
    pub late_profile: Vec<f64>,
    /// `⟨(m - m0)²⟩` per kick, one row per trajectory.
    pub trajectory_second_moments: Vec<Vec<f64>>,
}

/// Direct truncated convolution `out_i = Σ_d J_d a_{i-d}` with zero padding.
fn convolve(amps: &[Complex64], kernel: &KickKernel) -> Vec<Complex64> {
    let len = amps.len() as i64;
    let w = kernel.half_width() as i64;
    let mut out = vec![Complex64::new(0.0, 0.0); amps.len()];
    for d in -w..=w {
        let c = kernel.coeff(d);
        let lo = d.max(0);
        let hi = (len + d).min(len);
        if lo >= hi {
            continue;
        }
        let dst = &mut out[lo as usize..hi as usize];
        let src = &amps[(lo - d) as usize..(hi - d) as usize];
        for (o, a) in dst.iter_mut().zip(src) {
            o.re += c * a.re;
            o.im += c * a.im;
        }
    }
    out
}

/// `kick_step` with the default spill threshold.
pub fn kick_step(
    state: &StateVector,
    kernel: &KickKernel,
    phases: &FreePhases,
) -> Result<StateVector> {
    let map = KickedMap::new(kernel.clone(), phases.clone());
    let mut next = state.clone();
    map.apply(&mut next, 1)?;
    Ok(next)
}

/// Basis half-width for a run whose spread grows diffusively.
pub fn diffusive_half_width(k: f64, steps: usize) -> usize {
    (4.0 * k * (steps as f64).sqrt()).ceil() as usize + 64
}

/// Basis half-width for a run expected to localize.
pub fn localized_half_width(k: f64) -> usize {
    (8.0 * k * k).ceil() as usize + 64
}

/// The exactly unitary one-period matrix on a ring of `L` momenta.
///
/// The kick `e^{-ik cos θ}` is applied on the `L`-point angle grid, which is
/// the periodic-boundary version of the Bessel convolution (matrix elements
/// tend to `J_{m-n}(k)` when the kernel fits inside the ring). Used as a
/// small-instance oracle.
pub fn periodic_map_matrix(k: f64, phases: &FreePhases) -> DMatrix<Complex64> {
    let l = phases.beta.len();
    let grid: Vec<Complex64> = (0..l)
        .map(|j| Complex64::from_polar(1.0, -k * (TAU * j as f64 / l as f64).cos()))
        .collect();
    // circulant column c_d = (1/L) Σ_j e^{-ik cos θ_j} e^{-i d θ_j}
    let circ: Vec<Complex64> = (0..l)
        .map(|d| {
            grid.iter()
                .enumerate()
                .map(|(j, g)| g * Complex64::from_polar(1.0, -TAU * (d * j) as f64 / l as f64))
                .sum::<Complex64>()
                / l as f64
        })
        .collect();
    let i_pow = |e: i64| match e.rem_euclid(4) {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    };
    DMatrix::from_fn(l, l, |r, c| {
        let d = r as i64 - c as i64;
        Complex64::from_polar(1.0, -phases.beta[r])
            * i_pow(d)
            * circ[d.rem_euclid(l as i64) as usize]
    })
}
