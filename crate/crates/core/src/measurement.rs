//! Measurement as phase randomization.
//!
//! Measuring the population of state `m` leaves `|a_m|²` alone and replaces
//! the amplitude's phase with a uniformly random one. Averaged over
//! trajectories this removes every coherence that involves a measured state,
//! which [`dephase_density`] and [`evolve_density`] compute exactly for
//! small bases.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kickedmap::StateVector;
use crate::numerics::RandomPhaseStream;

const DENSITY_TOLERANCE: f64 = 1e-12;
const UNITARY_TOLERANCE: f64 = 1e-10;

/// Largest basis accepted by the density-matrix routines.
pub const MAX_DENSITY_DIM: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    None,
    Full,
    Subset,
}

/// Which states are measured, and after which kicks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementProtocol {
    pub kind: ProtocolKind,
    /// Measure after every `period`-th kick.
    #[serde(default = "default_period")]
    pub period: u64,
    /// Measured momenta for [`ProtocolKind::Subset`].
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub subset: Vec<i64>,
}

fn default_period() -> u64 {
    1
}

impl Default for MeasurementProtocol {
    fn default() -> Self {
        Self::none()
    }
}

impl MeasurementProtocol {
    pub fn none() -> Self {
        Self {
            kind: ProtocolKind::None,
            period: 1,
            subset: Vec::new(),
        }
    }

    pub fn full(period: u64) -> Result<Self> {
        Self {
            kind: ProtocolKind::Full,
            period,
            subset: Vec::new(),
        }
        .validated()
    }

    pub fn subset(states: Vec<i64>, period: u64) -> Result<Self> {
        Self {
            kind: ProtocolKind::Subset,
            period,
            subset: states,
        }
        .validated()
    }

    pub fn validated(mut self) -> Result<Self> {
        if self.period == 0 {
            return Err(Error::domain("measurement period must be at least 1"));
        }
        match self.kind {
            ProtocolKind::Subset if self.subset.is_empty() => {
                return Err(Error::domain(
                    "subset protocol needs at least one measured state",
                ))
            }
            ProtocolKind::Subset => {
                self.subset.sort_unstable();
                self.subset.dedup();
            }
            _ if !self.subset.is_empty() => {
                return Err(Error::domain(
                    "measured states are only allowed for the subset protocol",
                ))
            }
            _ => {}
        }
        Ok(self)
    }

    pub fn is_none(&self) -> bool {
        self.kind == ProtocolKind::None
    }

    pub fn fires_after(&self, kick: u64) -> bool {
        !self.is_none() && kick.is_multiple_of(self.period)
    }

    pub fn measured_set(&self) -> MeasuredSet<'_> {
        match self.kind {
            ProtocolKind::None => MeasuredSet::Empty,
            ProtocolKind::Full => MeasuredSet::All,
            ProtocolKind::Subset => MeasuredSet::States(&self.subset),
        }
    }
}

/// States hit by one measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasuredSet<'a> {
    Empty,
    All,
    States(&'a [i64]),
}

impl MeasuredSet<'_> {
    fn indices(&self, m_min: i64, len: usize) -> Result<Vec<usize>> {
        match *self {
            MeasuredSet::Empty => Ok(Vec::new()),
            MeasuredSet::All => Ok((0..len).collect()),
            MeasuredSet::States(states) => states
                .iter()
                .map(|&m| {
                    let i = m - m_min;
                    if i < 0 || i as usize >= len {
                        Err(Error::domain(format!(
                            "measured state {m} outside basis {m_min}..={}",
                            m_min + len as i64 - 1
                        )))
                    } else {
                        Ok(i as usize)
                    }
                })
                .collect(),
        }
    }
}

/// Gives each measured amplitude an independent random phase.
///
/// The phase for state `m` at `kick` comes from the stream slot keyed by
/// `(kick, m)`, so it does not depend on which other states are measured.
pub fn apply_measurement(
    state: &mut StateVector,
    measured: MeasuredSet<'_>,
    stream: &mut RandomPhaseStream,
    kick: u64,
) -> Result<()> {
    let m_min = state.m_min();
    match measured {
        MeasuredSet::Empty => {}
        MeasuredSet::All => {
            stream.seek(kick, m_min);
            for i in 0..state.len() {
                state.rotate_phase(i, stream.draw_phase());
            }
        }
        set @ MeasuredSet::States(states) => {
            let indices = set.indices(m_min, state.len())?;
            for (&m, i) in states.iter().zip(indices) {
                state.rotate_phase(i, stream.phase_at(kick, m));
            }
        }
    }
    Ok(())
}

/// [`apply_measurement`] on a bare amplitude vector labelled from `m_min`.
pub fn randomize_phases(
    amps: &mut [Complex64],
    m_min: i64,
    measured: MeasuredSet<'_>,
    stream: &mut RandomPhaseStream,
    kick: u64,
) -> Result<()> {
    let indices = measured.indices(m_min, amps.len())?;
    for i in indices {
        let phase = stream.phase_at(kick, m_min + i as i64);
        amps[i] *= Complex64::from_polar(1.0, phase);
    }
    Ok(())
}

/// Draws a measurement outcome from the Born distribution of `state`.
pub fn sample_projection(state: &StateVector, stream: &mut RandomPhaseStream) -> Result<i64> {
    let total = state.norm_sqr();
    if !(total > 0.0) {
        return Err(Error::domain("cannot sample from a state with zero norm"));
    }
    let target = stream.next_uniform() * total;
    let mut acc = 0.0;
    let mut last_occupied = state.m_min();
    for (m, p) in state.momenta().zip(state.populations()) {
        if p > 0.0 {
            last_occupied = m;
            acc += p;
            if target < acc {
                return Ok(m);
            }
        }
    }
    Ok(last_occupied)
}

/// A density matrix on momenta `m_min..m_min + dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    m_min: i64,
    rho: DMatrix<Complex64>,
}

impl DensityMatrix {
    pub fn new(m_min: i64, rho: DMatrix<Complex64>) -> Result<Self> {
        let dim = rho.nrows();
        if dim == 0 || rho.ncols() != dim || dim > MAX_DENSITY_DIM {
            return Err(Error::domain(format!(
                "density matrix must be square with 1..={MAX_DENSITY_DIM} rows, got {}x{}",
                rho.nrows(),
                rho.ncols()
            )));
        }
        for r in 0..dim {
            for c in 0..dim {
                if (rho[(r, c)] - rho[(c, r)].conj()).norm() > DENSITY_TOLERANCE {
                    return Err(Error::domain("density matrix is not Hermitian"));
                }
            }
            if rho[(r, r)].re < -DENSITY_TOLERANCE {
                return Err(Error::domain(
                    "density matrix has a negative diagonal entry",
                ));
            }
        }
        let trace = rho.trace();
        if (trace - Complex64::new(1.0, 0.0)).norm() > DENSITY_TOLERANCE {
            return Err(Error::domain(format!(
                "density matrix trace is {trace}, expected 1"
            )));
        }
        Ok(Self { m_min, rho })
    }

    /// `|ψ⟩⟨ψ|` for a normalized amplitude vector.
    pub fn from_pure(m_min: i64, amps: &[Complex64]) -> Result<Self> {
        let psi = nalgebra::DVector::from_column_slice(amps);
        Self::new(m_min, &psi * psi.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn m_min(&self) -> i64 {
        self.m_min
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.rho
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.rho[(i, i)].re).collect()
    }

    pub fn trace(&self) -> Complex64 {
        self.rho.trace()
    }

    /// `tr ρ²`; one for pure states.
    pub fn purity(&self) -> f64 {
        (&self.rho * &self.rho).trace().re
    }
}

/// Zeroes every coherence `ρ_mn` (`m ≠ n`) that involves a measured state.
pub fn dephase_density(rho: &DensityMatrix, measured: MeasuredSet<'_>) -> Result<DensityMatrix> {
    let dim = rho.dim();
    let mut hit = vec![false; dim];
    for i in measured.indices(rho.m_min, dim)? {
        hit[i] = true;
    }
    let mut out = rho.rho.clone();
    for r in 0..dim {
        for c in 0..dim {
            if r != c && (hit[r] || hit[c]) {
                out[(r, c)] = Complex64::new(0.0, 0.0);
            }
        }
    }
    Ok(DensityMatrix {
        m_min: rho.m_min,
        rho: out,
    })
}

/// Alternates `ρ → UρU†` with [`dephase_density`] wherever `protocol` measures.
pub fn evolve_density(
    rho: &DensityMatrix,
    unitary: &DMatrix<Complex64>,
    protocol: &MeasurementProtocol,
    steps: usize,
) -> Result<DensityMatrix> {
    let dim = rho.dim();
    if unitary.nrows() != dim || unitary.ncols() != dim {
        return Err(Error::Incompatible(format!(
            "unitary is {}x{}, density matrix is {dim}x{dim}",
            unitary.nrows(),
            unitary.ncols()
        )));
    }
    let defect = unitary.adjoint() * unitary - DMatrix::<Complex64>::identity(dim, dim);
    if defect.iter().any(|e| e.norm() > UNITARY_TOLERANCE) {
        return Err(Error::domain("evolution matrix is not unitary"));
    }
    let adjoint = unitary.adjoint();
    let mut current = rho.clone();
    for kick in 1..=steps as u64 {
        current.rho = unitary * &current.rho * &adjoint;
        if protocol.fires_after(kick) {
            current = dephase_density(&current, protocol.measured_set())?;
        }
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn superposition() -> StateVector {
        let amps = vec![
            Complex64::new(0.3, 0.1),
            Complex64::new(-0.2, 0.5),
            Complex64::new(0.6, -0.2),
            Complex64::new(0.1, 0.3),
        ];
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        StateVector::from_amplitudes(-1, amps.into_iter().map(|a| a / norm).collect()).unwrap()
    }

    #[test]
    fn protocol_validation() {
        assert!(MeasurementProtocol::full(0).is_err());
        assert!(MeasurementProtocol::subset(vec![], 1).is_err());
        let p = MeasurementProtocol::subset(vec![3, 0, 3], 2).unwrap();
        assert_eq!(p.subset, vec![0, 3]);
        assert!(p.fires_after(4) && !p.fires_after(3));
        assert!(!MeasurementProtocol::none().fires_after(1));
    }

    #[test]
    fn empty_measurement_is_noop() {
        let mut state = superposition();
        let before = state.clone();
        let mut stream = RandomPhaseStream::new(1, 0);
        apply_measurement(&mut state, MeasuredSet::Empty, &mut stream, 1).unwrap();
        assert_eq!(state, before);
    }

    #[test]
    fn full_measurement_preserves_populations_bitwise() {
        let mut state = superposition();
        let before: Vec<f64> = state.populations().collect();
        let mut stream = RandomPhaseStream::new(1, 0);
        for kick in 1..=5 {
            apply_measurement(&mut state, MeasuredSet::All, &mut stream, kick).unwrap();
        }
        let after: Vec<f64> = state.populations().collect();
        assert_eq!(before, after);
        // the phases did change
        assert_ne!(state.amplitudes(), superposition().amplitudes());
    }

    #[test]
    fn subset_touches_only_listed_states() {
        let mut state = superposition();
        let original = state.amplitudes();
        let mut stream = RandomPhaseStream::new(4, 2);
        apply_measurement(&mut state, MeasuredSet::States(&[0]), &mut stream, 3).unwrap();
        let now = state.amplitudes();
        for (i, (a, b)) in original.iter().zip(&now).enumerate() {
            if i == 1 {
                assert!((a - b).norm() > 1e-6);
                assert!((a.norm() - b.norm()).abs() < 1e-15);
            } else {
                assert_eq!(a, b);
            }
        }
        assert!(apply_measurement(&mut state, MeasuredSet::States(&[7]), &mut stream, 3).is_err());
    }

    #[test]
    fn subset_phase_matches_full_protocol_slot() {
        let mut full = superposition();
        let mut part = superposition();
        let mut s1 = RandomPhaseStream::new(8, 1);
        let mut s2 = RandomPhaseStream::new(8, 1);
        apply_measurement(&mut full, MeasuredSet::All, &mut s1, 6).unwrap();
        apply_measurement(&mut part, MeasuredSet::States(&[1]), &mut s2, 6).unwrap();
        assert_eq!(full.amplitudes()[2], part.amplitudes()[2]);
    }

    #[test]
    fn projection_of_delta_state() {
        let state = StateVector::delta(5, 3).unwrap();
        let mut stream = RandomPhaseStream::new(2, 0);
        for _ in 0..100 {
            assert_eq!(sample_projection(&state, &mut stream).unwrap(), 3);
        }
        let zero = StateVector::from_amplitudes(0, vec![Complex64::new(0.0, 0.0); 3]).unwrap();
        assert!(sample_projection(&zero, &mut stream).is_err());
    }

    #[test]
    fn projection_is_deterministic() {
        let state = superposition();
        let draw = |seed| {
            let mut s = RandomPhaseStream::new(seed, 0);
            (0..50)
                .map(|_| sample_projection(&state, &mut s).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
    }

    #[test]
    fn dephasing_examples() {
        let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::new(0.25, 0.0),
            Complex64::new(0.75, 0.0),
        ]));
        let rho = DensityMatrix::new(0, diag).unwrap();
        assert_eq!(dephase_density(&rho, MeasuredSet::All).unwrap(), rho);

        let pure = DensityMatrix::from_pure(-1, &superposition().amplitudes()).unwrap();
        let full = dephase_density(&pure, MeasuredSet::All).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                let expected = if r == c {
                    pure.matrix()[(r, c)]
                } else {
                    Complex64::new(0.0, 0.0)
                };
                assert_eq!(full.matrix()[(r, c)], expected);
            }
        }
        // one measured state only cuts its own row and column
        let part = dephase_density(&pure, MeasuredSet::States(&[0])).unwrap();
        assert_eq!(part.matrix()[(1, 2)], Complex64::new(0.0, 0.0));
        assert_eq!(part.matrix()[(0, 2)], pure.matrix()[(0, 2)]);
        assert_eq!(part.trace(), pure.trace());
    }

    #[test]
    fn density_validation() {
        let bad = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(0.5, 0.0),
                Complex64::new(0.1, 0.2),
                Complex64::new(0.1, 0.2),
                Complex64::new(0.5, 0.0),
            ],
        );
        assert!(DensityMatrix::new(0, bad).is_err());
        let big = DMatrix::<Complex64>::identity(65, 65) / Complex64::new(65.0, 0.0);
        assert!(DensityMatrix::new(0, big).is_err());
        let rho =
            DensityMatrix::from_pure(0, &[Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)])
                .unwrap();
        let not_unitary = DMatrix::from_element(2, 2, Complex64::new(1.0, 0.0));
        assert!(matches!(
            evolve_density(&rho, &not_unitary, &MeasurementProtocol::none(), 1),
            Err(Error::Domain(_))
        ));
    }
}
