//! Observables of momentum distributions and fits over their time series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kickedmap::StateVector;
use crate::measurement::MeasurementProtocol;
use crate::numerics::CompensatedSum;

/// Observables of one state at one kick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservableRecord {
    pub step: usize,
    pub time: f64,
    pub norm_deficit: f64,
    pub mean_m: f64,
    /// `⟨(m - m0)²⟩`
    pub second_moment: f64,
    pub participation_ratio: f64,
    /// Population of the initial momentum `m0`.
    pub p_initial: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub k: f64,
    pub tau: f64,
    pub half_width: usize,
    pub protocol: MeasurementProtocol,
    pub seed: u64,
    pub trajectories: usize,
}

/// Per-kick observables of a run, averaged over its trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries {
    meta: SeriesMeta,
    records: Vec<ObservableRecord>,
}

impl ObservableSeries {
    pub fn new(meta: SeriesMeta, records: Vec<ObservableRecord>) -> Result<Self> {
        for pair in records.windows(2) {
            if pair[1].step <= pair[0].step {
                return Err(Error::domain("series steps must be strictly increasing"));
            }
            if pair[1].norm_deficit < pair[0].norm_deficit {
                return Err(Error::domain("series norm deficit must be nondecreasing"));
            }
        }
        Ok(Self { meta, records })
    }

    pub fn meta(&self) -> &SeriesMeta {
        &self.meta
    }

    pub fn records(&self) -> &[ObservableRecord] {
        &self.records
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.time).collect()
    }

    pub fn second_moments(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.second_moment).collect()
    }
}

fn weights(state: &StateVector) -> Result<f64> {
    let total = state.norm_sqr();
    if !(total > 0.0) {
        return Err(Error::domain("observable of a state with zero norm"));
    }
    Ok(total)
}

/// `Σ (m - m0)² |a_m|² / Σ |a_m|²`.
pub fn second_moment(state: &StateVector, m0: i64) -> Result<f64> {
    if !state.contains(m0) {
        return Err(Error::domain(format!(
            "reference momentum {m0} outside basis"
        )));
    }
    let total = weights(state)?;
    let acc: CompensatedSum = state
        .momenta()
        .zip(state.populations())
        .map(|(m, p)| {
            let d = (m - m0) as f64;
            d * d * p
        })
        .collect();
    Ok(acc.value() / total)
}

pub fn mean_momentum(state: &StateVector) -> Result<f64> {
    let total = weights(state)?;
    let acc: CompensatedSum = state
        .momenta()
        .zip(state.populations())
        .map(|(m, p)| m as f64 * p)
        .collect();
    Ok(acc.value() / total)
}

/// `(Σ P_m²)^{-1}` of the normalized populations.
pub fn participation_ratio(state: &StateVector) -> Result<f64> {
    let total = weights(state)?;
    participation_ratio_of(state.populations().map(|p| p / total))
}

/// Participation ratio of an already normalized distribution.
pub fn participation_ratio_of<I: IntoIterator<Item = f64>>(probs: I) -> Result<f64> {
    let sum_sq = probs
        .into_iter()
        .map(|p| p * p)
        .collect::<CompensatedSum>()
        .value();
    if !(sum_sq > 0.0) {
        return Err(Error::domain(
            "participation ratio of an empty distribution",
        ));
    }
    Ok(1.0 / sum_sq)
}

pub(crate) fn observe(
    state: &StateVector,
    step: usize,
    tau: f64,
    m0: i64,
) -> Result<ObservableRecord> {
    let total = weights(state)?;
    Ok(ObservableRecord {
        step,
        time: step as f64 * tau,
        norm_deficit: state.norm_deficit(),
        mean_m: mean_momentum(state)?,
        second_moment: second_moment(state, m0)?,
        participation_ratio: participation_ratio(state)?,
        p_initial: state.population(m0) / total,
    })
}

/// Averages equally long record sequences field by field, in input order.
pub fn average_records<'a, I>(runs: I) -> Vec<ObservableRecord>
where
    I: IntoIterator<Item = &'a [ObservableRecord]>,
{
    let runs: Vec<&[ObservableRecord]> = runs.into_iter().collect();
    let Some(first) = runs.first() else {
        return Vec::new();
    };
    let n = runs.len() as f64;
    let mean = |i: usize, f: fn(&ObservableRecord) -> f64| {
        runs.iter()
            .map(|r| f(&r[i]))
            .collect::<CompensatedSum>()
            .value()
            / n
    };
    (0..first.len())
        .map(|i| ObservableRecord {
            step: first[i].step,
            time: first[i].time,
            norm_deficit: mean(i, |r| r.norm_deficit),
            mean_m: mean(i, |r| r.mean_m),
            second_moment: mean(i, |r| r.second_moment),
            participation_ratio: mean(i, |r| r.participation_ratio),
            p_initial: mean(i, |r| r.p_initial),
        })
        .collect()
}

/// Ordinary least-squares slope of `ys` against `xs`.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::domain("slope fit needs two or more paired points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().copied().collect::<CompensatedSum>().value() / n;
    let my = ys.iter().copied().collect::<CompensatedSum>().value() / n;
    let sxx = xs
        .iter()
        .map(|x| (x - mx) * (x - mx))
        .collect::<CompensatedSum>()
        .value();
    let sxy = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .collect::<CompensatedSum>()
        .value();
    if !(sxx > 0.0) {
        return Err(Error::domain("slope fit with no spread in the abscissa"));
    }
    Ok(sxy / sxx)
}

/// Range of `|m - m0|` used by [`localization_length_fit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitWindow {
    pub inner: f64,
    pub outer: f64,
}

impl FitWindow {
    /// `[λ₀, 4λ₀]` with the rough estimate `λ₀ = k²/2`.
    pub fn for_kick_strength(k: f64) -> Self {
        let rough = 0.5 * k * k;
        Self {
            inner: rough,
            outer: 4.0 * rough,
        }
    }
}

/// Fits `P_m ∝ exp(-2|m - m0|/λ)` on the window and returns `λ`.
///
/// `profile[i]` is the probability of momentum `m_min + i`; zero entries are
/// skipped. A profile that does not decay yields [`Error::FitFailure`].
pub fn localization_length_fit(
    profile: &[f64],
    m_min: i64,
    m0: i64,
    window: FitWindow,
) -> Result<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = profile
        .iter()
        .enumerate()
        .filter_map(|(i, &p)| {
            let r = (m_min + i as i64 - m0).unsigned_abs() as f64;
            (r >= window.inner && r <= window.outer && p > 0.0).then(|| (r, p.ln()))
        })
        .unzip();
    if xs.len() < 3 {
        return Err(Error::FitFailure(format!(
            "only {} occupied points in the fit window",
            xs.len()
        )));
    }
    let slope = least_squares_slope(&xs, &ys).map_err(|e| Error::FitFailure(e.to_string()))?;
    if slope >= 0.0 {
        return Err(Error::FitFailure(format!(
            "profile does not decay (log slope {slope:.3e})"
        )));
    }
    Ok(-2.0 / slope)
}

/// Outcome of [`break_time`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BreakTime {
    At(usize),
    NotDetected,
}

pub const BREAK_WINDOW: usize = 20;
pub const DEFAULT_BREAK_THRESHOLD: f64 = 0.5;

/// First step at which the slope of `⟨(m - m0)²⟩` against time over the
/// trailing [`BREAK_WINDOW`] records drops below `threshold * classical_slope`.
pub fn break_time(
    series: &ObservableSeries,
    classical_slope: f64,
    threshold: f64,
) -> Result<BreakTime> {
    let records = series.records();
    if records.len() < 50 {
        return Err(Error::domain(format!(
            "break time needs at least 50 records, got {}",
            records.len()
        )));
    }
    if !(classical_slope > 0.0) {
        return Err(Error::domain("classical slope must be positive"));
    }
    let times = series.times();
    let moments = series.second_moments();
    for end in BREAK_WINDOW..=records.len() {
        let start = end - BREAK_WINDOW;
        let slope = least_squares_slope(&times[start..end], &moments[start..end])?;
        if slope < threshold * classical_slope {
            return Ok(BreakTime::At(records[end - 1].step));
        }
    }
    Ok(BreakTime::NotDetected)
}
