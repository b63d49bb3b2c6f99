//! Experiment execution and artifact output.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use zeno_rotor::classical::ClassicalEnsemble;
use zeno_rotor::diagnostics::{
    break_time, least_squares_slope, localization_length_fit, BreakTime, FitWindow,
    ObservableRecord, ObservableSeries, SeriesMeta, DEFAULT_BREAK_THRESHOLD,
};
use zeno_rotor::kickedmap::{
    diffusive_half_width, hamiltonian_phases, localized_half_width, EnsembleRun, EnsembleSettings,
    Hamiltonian, KickedMap, StateVector,
};
use zeno_rotor::numerics::build_kernel;
use zeno_rotor::twolevel::{
    evolve_measured, simulate_measured_mc, RabiStep, TwoLevelAmplitudes, TwoLevelProbabilities,
};

use crate::config::{Basis, Experiment, Format, ResolvedConfig, RunConfig};

pub const SERIES_FILE: &str = "series.csv";
pub const CLASSICAL_SERIES_FILE: &str = "classical.csv";
pub const META_FILE: &str = "meta.json";

/// One row of the two-level table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZenoRow {
    pub n: u64,
    pub p1_analytic: f64,
    pub p1_mc: f64,
    pub mc_sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Table {
    Zeno(Vec<ZenoRow>),
    Series(Vec<ObservableRecord>),
}

/// Scalar results of a run, recorded in the metadata.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_second_moment: Option<f64>,
    /// Least-squares slope of the quantum `⟨m²⟩` against time over kicks `1..=steps`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second_moment_slope: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub localization_length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classical_diffusion: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classical_diffusion_std_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub break_time: Option<BreakTime>,
}

/// Contents of `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub version: String,
    pub seed: u64,
    pub config: RunConfig,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_half_width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_leak: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis_half_width: Option<usize>,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub meta: Meta,
    /// Output file name and contents, in write order.
    pub tables: Vec<(&'static str, Table)>,
    /// Ensemble-averaged late-time momentum profile and its lowest momentum.
    pub late_profile: Option<(i64, Vec<f64>)>,
}

/// Runs the configured experiment, in a dedicated thread pool when
/// `threads` is set.
pub fn run_experiment(resolved: &ResolvedConfig) -> Result<RunReport> {
    match resolved.config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("failed to start worker threads")?
            .install(|| dispatch(resolved)),
        None => dispatch(resolved),
    }
}

fn dispatch(resolved: &ResolvedConfig) -> Result<RunReport> {
    let cfg = &resolved.config;
    let mut report = RunReport {
        meta: Meta {
            version: zeno_rotor::VERSION.to_string(),
            seed: cfg.seed,
            config: cfg.clone(),
            warnings: resolved.warnings.clone(),
            kernel_half_width: None,
            kernel_leak: None,
            basis_half_width: None,
            summary: Summary::default(),
        },
        tables: Vec::new(),
        late_profile: None,
    };
    match cfg.experiment {
        Experiment::TwolevelZeno => run_zeno(cfg, &mut report)?,
        Experiment::Kicked => run_kicked(cfg, &mut report)?,
        Experiment::Classical => run_classical(cfg, &mut report)?,
        Experiment::Compare => {
            run_kicked(cfg, &mut report)?;
            run_classical(cfg, &mut report)?;
            let summary = &mut report.meta.summary;
            let d = summary
                .classical_diffusion
                .expect("classical run sets diffusion");
            if let Some((_, Table::Series(quantum))) = report.tables.first() {
                if quantum.len() >= 50 && d > 0.0 {
                    let series = ObservableSeries::new(
                        SeriesMeta {
                            k: physics_k(cfg),
                            tau: physics_tau(cfg),
                            half_width: report.meta.basis_half_width.unwrap_or(0),
                            protocol: cfg.protocol.clone(),
                            seed: cfg.seed,
                            trajectories: 0,
                        },
                        quantum.clone(),
                    )?;
                    summary.break_time =
                        Some(break_time(&series, 2.0 * d, DEFAULT_BREAK_THRESHOLD)?);
                }
            }
        }
    }
    Ok(report)
}

fn physics_k(cfg: &RunConfig) -> f64 {
    cfg.physics.k.expect("resolved kicked config has k")
}

fn physics_tau(cfg: &RunConfig) -> f64 {
    cfg.physics.tau.expect("resolved kicked config has tau")
}

fn physics_h0(cfg: &RunConfig) -> &Hamiltonian {
    cfg.physics
        .h0
        .as_ref()
        .expect("resolved kicked config has h0")
}

fn steps(cfg: &RunConfig) -> usize {
    cfg.steps.expect("resolved kicked config has steps")
}

fn run_zeno(cfg: &RunConfig, report: &mut RunReport) -> Result<()> {
    let omega = cfg.physics.omega.expect("resolved zeno config has omega");
    let total = cfg
        .physics
        .total_time
        .expect("resolved zeno config has total_time");
    let trajectories = cfg
        .ensemble
        .trajectories
        .expect("resolved zeno config has trajectories");
    let mut rows = Vec::new();
    for &n in cfg.physics.n_values.as_deref().unwrap_or_default() {
        let step = RabiStep::fixed_total_time(omega, total, n)?;
        let analytic = evolve_measured(TwoLevelProbabilities::ground(), step, n);
        let mc = simulate_measured_mc(
            TwoLevelAmplitudes::ground(),
            step,
            n,
            trajectories,
            cfg.seed,
        )?;
        rows.push(ZenoRow {
            n,
            p1_analytic: analytic.p1,
            p1_mc: mc.probabilities.p1,
            mc_sigma: mc.p1_std_error,
        });
    }
    report.tables.push((SERIES_FILE, Table::Zeno(rows)));
    Ok(())
}

/// Half-width used for `Basis::Auto`: wide enough for diffusive spreading
/// over the whole run, and no wider than a localized profile needs when
/// nothing is measured.
pub fn auto_half_width(k: f64, steps: usize, measured: bool) -> usize {
    let diffusive = diffusive_half_width(k, steps);
    if measured {
        diffusive
    } else {
        diffusive.min(localized_half_width(k))
    }
}

fn run_kicked(cfg: &RunConfig, report: &mut RunReport) -> Result<()> {
    let (k, tau, steps) = (physics_k(cfg), physics_tau(cfg), steps(cfg));
    let half_width = match cfg.numerics.basis.unwrap_or_default() {
        Basis::Auto => auto_half_width(k, steps, !cfg.protocol.is_none()),
        Basis::HalfWidth(m) => m,
    };
    let kernel = build_kernel(
        k,
        cfg.numerics
            .kernel_tol
            .expect("resolved kicked config has kernel_tol"),
    )?;
    report.meta.kernel_half_width = Some(kernel.half_width());
    report.meta.kernel_leak = Some(kernel.leak());
    report.meta.basis_half_width = Some(half_width);
    let map = KickedMap::new(
        kernel,
        hamiltonian_phases(physics_h0(cfg), tau, half_width)?,
    )
    .with_spill_threshold(
        cfg.numerics
            .spill_threshold
            .expect("resolved kicked config has spill_threshold"),
    );
    let initial = StateVector::delta(half_width, 0)?;
    let run: EnsembleRun = map
        .run_ensemble(
            &initial,
            &EnsembleSettings {
                steps,
                protocol: cfg.protocol.clone(),
                trajectories: cfg
                    .ensemble
                    .trajectories
                    .expect("resolved kicked config has trajectories"),
                seed: cfg.seed,
                reference: 0,
                threads: None,
            },
        )
        .with_context(|| format!("kicked run on basis half-width {half_width} failed"))?;

    let records = run.series.records().to_vec();
    let summary = &mut report.meta.summary;
    summary.final_second_moment = records.last().map(|r| r.second_moment);
    if records.len() >= 3 {
        let times: Vec<f64> = records[1..].iter().map(|r| r.time).collect();
        let moments: Vec<f64> = records[1..].iter().map(|r| r.second_moment).collect();
        summary.second_moment_slope = Some(least_squares_slope(&times, &moments)?);
    }
    if cfg.protocol.is_none() {
        match localization_length_fit(
            &run.late_profile,
            -(half_width as i64),
            0,
            FitWindow::for_kick_strength(k),
        ) {
            Ok(lambda) => summary.localization_length = Some(lambda),
            Err(e) => report
                .meta
                .warnings
                .push(format!("no localization length: {e}")),
        }
    }
    report.late_profile = Some((-(half_width as i64), run.late_profile));
    report.tables.push((SERIES_FILE, Table::Series(records)));
    Ok(())
}

fn run_classical(cfg: &RunConfig, report: &mut RunReport) -> Result<()> {
    let (k, tau, steps) = (physics_k(cfg), physics_tau(cfg), steps(cfg));
    let particles = cfg
        .ensemble
        .particles
        .expect("resolved classical config has particles");
    let mut ensemble = ClassicalEnsemble::uniform(particles, k, tau, cfg.seed)?;
    let run = ensemble.run(physics_h0(cfg), steps, 1..=steps, 0)?;
    report.meta.summary.classical_diffusion = Some(run.diffusion);
    report.meta.summary.classical_diffusion_std_error = Some(run.diffusion_std_error);
    let records = run.records;
    let file = if cfg.experiment == Experiment::Compare {
        CLASSICAL_SERIES_FILE
    } else {
        SERIES_FILE
    };
    if cfg.experiment == Experiment::Classical {
        let summary = &mut report.meta.summary;
        summary.final_second_moment = records.last().map(|r| r.second_moment);
    }
    report.tables.push((file, Table::Series(records)));
    Ok(())
}

/// Writes the report's CSV tables and metadata under `directory`.
pub fn write_artifacts(report: &RunReport, directory: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(directory)
        .with_context(|| format!("cannot create output directory {}", directory.display()))?;
    let formats = &report.meta.config.output.formats;
    let mut written = Vec::new();
    if formats.contains(&Format::Csv) {
        for (name, table) in &report.tables {
            let path = directory.join(name);
            write_table(&path, table)
                .with_context(|| format!("cannot write {}", path.display()))?;
            written.push(path);
        }
    }
    if formats.contains(&Format::Json) {
        let path = directory.join(META_FILE);
        let mut text = serde_json::to_string_pretty(&report.meta)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}

fn write_table(path: &Path, table: &Table) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    match table {
        Table::Zeno(rows) => rows.iter().try_for_each(|r| writer.serialize(r))?,
        Table::Series(rows) => rows.iter().try_for_each(|r| writer.serialize(r))?,
    }
    writer.flush()?;
    Ok(())
}
