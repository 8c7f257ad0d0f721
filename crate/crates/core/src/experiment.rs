//! Configuration-driven experiments: simulate, estimate with any subset of the
//! four estimators, score, and write plot-ready artifacts.
//!
//! Output directory layout:
//!
//! ```text
//! config.json                      fully resolved configuration
//! metrics.json                     algorithm → RMSE summary
//! scenario/                        scenario files (run / reproduce / simulate)
//! <algorithm>/estimates.csv        block,rank,phi_deg,alpha_deg,weight,grid_index
//! <algorithm>/trajectories.csv     block,snapshot,rank,theta_deg
//! <algorithm>/metrics.csv          block,rmse_deg,excluded
//! <algorithm>/surface_0000.csv     spectrum (CBF) or γ map (SBL) per block
//! <algorithm>/sbl_0000.csv         per-iteration SBL diagnostics per block
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::{linspace_inclusive, AngleGrid, SteeringBank, TrajectoryGrid, TrajectoryParams};
use crate::beamform::{cbf_spectrum, tl_cbf_spectrum_with_bank, Spectrum1D, Spectrum2D};
use crate::error::{Error, Result};
use crate::metrics::{associate_and_score, expand_trajectory, TrajectoryErrorReport, DEFAULT_CROSSING_THRESHOLD};
use crate::peaks::{pick_separated_peaks_1d, pick_separated_peaks_2d, TrajectoryEstimate};
use crate::sbl::{run_static_sbl, run_tl_sbl_with_bank, SblConfig, SblDiagnostics};
use crate::sim::{self, presets, Scenario, ScenarioConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Cbf,
    TlCbf,
    Sbl,
    TlSbl,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Cbf, Algorithm::TlCbf, Algorithm::Sbl, Algorithm::TlSbl];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Cbf => "cbf",
            Algorithm::TlCbf => "tl-cbf",
            Algorithm::Sbl => "sbl",
            Algorithm::TlSbl => "tl-sbl",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }

    /// Whether the estimator searches the `(φ, α)` grid.
    pub fn is_trajectory(self) -> bool {
        matches!(self, Algorithm::TlCbf | Algorithm::TlSbl)
    }
}

/// `start..=stop` in steps of `step`, degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl GridSpec {
    pub const fn new(start: f64, stop: f64, step: f64) -> Self {
        GridSpec { start, stop, step }
    }

    fn values(&self, field: &str) -> Result<Vec<f64>> {
        linspace_inclusive(self.start, self.stop, self.step)
            .map_err(|e| Error::validation(field, e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryGridSpec {
    pub phi: GridSpec,
    pub alpha: GridSpec,
}

fn default_theta_grid() -> GridSpec {
    GridSpec::new(-90.0, 90.0, 1.0)
}

fn default_trajectory_grid() -> TrajectoryGridSpec {
    TrajectoryGridSpec {
        phi: GridSpec::new(-90.0, 90.0, 1.0),
        alpha: GridSpec::new(-15.0, 15.0, 1.0),
    }
}

fn default_algorithms() -> Vec<Algorithm> {
    Algorithm::ALL.to_vec()
}

/// SBL settings; `noise_variance` defaults to the scenario's true `σ²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SblSettings {
    #[serde(default)]
    pub noise_variance: Option<f64>,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_tol")]
    pub convergence_tol: f64,
    #[serde(default = "default_floor")]
    pub gamma_floor: f64,
}

fn default_max_iterations() -> usize {
    1000
}

fn default_tol() -> f64 {
    1e-4
}

fn default_floor() -> f64 {
    1e-12
}

impl Default for SblSettings {
    fn default() -> Self {
        SblSettings {
            noise_variance: None,
            max_iterations: default_max_iterations(),
            convergence_tol: default_tol(),
            gamma_floor: default_floor(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSettings {
    #[serde(default = "default_crossing")]
    pub crossing_threshold: f64,
}

fn default_crossing() -> f64 {
    DEFAULT_CROSSING_THRESHOLD
}

impl Default for MetricsSettings {
    fn default() -> Self {
        MetricsSettings {
            crossing_threshold: DEFAULT_CROSSING_THRESHOLD,
        }
    }
}

/// Peak selection. Local maxima closer than `min_separation_deg` (mean
/// absolute DOA difference over the block) to a stronger one are skipped.
/// The default of zero keeps every strict local maximum, so duplicate peaks
/// on one lobe or ridge show up in the scores.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakSettings {
    #[serde(default = "default_separation")]
    pub min_separation_deg: f64,
}

pub const DEFAULT_MIN_SEPARATION_DEG: f64 = 0.0;

fn default_separation() -> f64 {
    DEFAULT_MIN_SEPARATION_DEG
}

impl Default for PeakSettings {
    fn default() -> Self {
        PeakSettings {
            min_separation_deg: DEFAULT_MIN_SEPARATION_DEG,
        }
    }
}

/// Everything one experiment needs. All fields but `scenario` have defaults
/// (the 1° / 1-unit grids over φ ∈ [−90, 90], α ∈ [−15, 15], θ ∈ [−90, 90]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "default_theta_grid")]
    pub theta_grid: GridSpec,
    #[serde(default = "default_trajectory_grid")]
    pub trajectory_grid: TrajectoryGridSpec,
    #[serde(default)]
    pub sbl: SblSettings,
    #[serde(default)]
    pub peaks: PeakSettings,
    #[serde(default)]
    pub metrics: MetricsSettings,
    /// Estimates reported per block; defaults to the number of sources.
    #[serde(default)]
    pub num_estimates: Option<usize>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(scenario: ScenarioConfig) -> Self {
        ExperimentConfig {
            scenario,
            algorithms: default_algorithms(),
            theta_grid: default_theta_grid(),
            trajectory_grid: default_trajectory_grid(),
            sbl: SblSettings::default(),
            peaks: PeakSettings::default(),
            metrics: MetricsSettings::default(),
            num_estimates: None,
            output_dir: None,
        }
    }

    /// Canned configuration for example `id` in `1..=4`.
    pub fn example(id: u8, seed: u64) -> Result<Self> {
        Ok(Self::new(presets::example(id, seed)?))
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            if field == "." || e.inner().is_syntax() || e.inner().is_eof() {
                Error::Json {
                    path: origin.to_string(),
                    source: e.into_inner(),
                }
            } else {
                Error::validation(field, e.into_inner().to_string())
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    /// Pretty JSON with every default filled in.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.algorithms.is_empty() {
            return Err(Error::validation("algorithms", "select at least one algorithm"));
        }
        let mut seen = self.algorithms.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.algorithms.len() {
            return Err(Error::validation("algorithms", "duplicate entries"));
        }
        self.angle_grid()?;
        self.trajectory_grid()?;
        self.sbl_config()?;
        if self.num_estimates == Some(0) {
            return Err(Error::validation("num_estimates", "must be at least 1"));
        }
        if !(self.peaks.min_separation_deg >= 0.0 && self.peaks.min_separation_deg.is_finite()) {
            return Err(Error::validation("peaks.min_separation_deg", "must be finite and non-negative"));
        }
        if !(self.metrics.crossing_threshold >= 0.0) {
            return Err(Error::validation("metrics.crossing_threshold", "must be non-negative"));
        }
        Ok(())
    }

    pub fn angle_grid(&self) -> Result<AngleGrid> {
        AngleGrid::new(self.theta_grid.values("theta_grid")?).map_err(|e| relabel(e, "theta_grid"))
    }

    pub fn trajectory_grid(&self) -> Result<TrajectoryGrid> {
        TrajectoryGrid::new(
            self.trajectory_grid.phi.values("trajectory_grid.phi")?,
            self.trajectory_grid.alpha.values("trajectory_grid.alpha")?,
        )
        .map_err(|e| relabel(e, "trajectory_grid"))
    }

    pub fn sbl_config(&self) -> Result<SblConfig> {
        let noise_variance = match self.sbl.noise_variance {
            Some(v) => v,
            None if self.scenario.snr_db.is_some() => self.scenario.noise_variance(),
            None => {
                return Err(Error::validation(
                    "sbl.noise_variance",
                    "required when the scenario is noiseless",
                ))
            }
        };
        let cfg = SblConfig {
            noise_variance,
            max_iterations: self.sbl.max_iterations,
            convergence_tol: self.sbl.convergence_tol,
            gamma_floor: self.sbl.gamma_floor,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn num_estimates(&self) -> usize {
        self.num_estimates.unwrap_or(self.scenario.num_sources())
    }

    /// The configuration with every optional value made explicit.
    pub fn resolved(&self) -> Result<Self> {
        let mut out = self.clone();
        out.sbl.noise_variance = Some(self.sbl_config()?.noise_variance);
        out.num_estimates = Some(self.num_estimates());
        Ok(out)
    }
}

fn relabel(e: Error, field: &str) -> Error {
    match e {
        Error::Domain(reason) => Error::validation(field, reason),
        Error::Validation { reason, .. } => Error::validation(field, reason),
        other => other,
    }
}

/// Spectrum or γ map of one block.
#[derive(Clone, Debug)]
pub enum Surface {
    Angles(Spectrum1D),
    Trajectories(Spectrum2D),
}

impl Surface {
    pub fn to_csv(&self) -> String {
        match self {
            Surface::Angles(s) => s.to_csv(),
            Surface::Trajectories(s) => s.to_csv(),
        }
    }
}

/// One estimator applied to every block of a scenario.
#[derive(Clone, Debug)]
pub struct AlgorithmRun {
    pub algorithm: Algorithm,
    pub estimates: Vec<Vec<TrajectoryEstimate>>,
    pub surfaces: Vec<Surface>,
    /// Per block; empty for the beamformers.
    pub diagnostics: Vec<SblDiagnostics>,
}

impl AlgorithmRun {
    pub fn non_converged_blocks(&self) -> Vec<usize> {
        self.diagnostics
            .iter()
            .enumerate()
            .filter_map(|(b, d)| (!d.converged).then_some(b))
            .collect()
    }
}

/// Runs every configured estimator on every block.
pub fn estimate(config: &ExperimentConfig, scenario: &Scenario) -> Result<Vec<AlgorithmRun>> {
    config.validate()?;
    let geom = &scenario.config.geometry;
    let k = config.num_estimates();
    let angles = config.angle_grid()?;
    let trajectories = config.trajectory_grid()?;
    let sbl = config.sbl_config()?;
    let len = scenario.config.snapshots_per_block;
    let sep = config.peaks.min_separation_deg;
    let bank = if config.algorithms.iter().any(|a| a.is_trajectory()) {
        Some(SteeringBank::for_trajectories(geom, &trajectories, len)?)
    } else {
        None
    };

    config
        .algorithms
        .iter()
        .map(|&algorithm| {
            let per_block: Vec<(Vec<TrajectoryEstimate>, Surface, Option<SblDiagnostics>)> = scenario
                .blocks
                .par_iter()
                .map(|block| -> Result<_> {
                    Ok(match algorithm {
                        Algorithm::Cbf => {
                            let s = cbf_spectrum(block, &angles, geom)?;
                            (pick_separated_peaks_1d(&s, k, sep)?, Surface::Angles(s), None)
                        }
                        Algorithm::TlCbf => {
                            let bank = bank.as_ref().expect("bank built for trajectory estimators");
                            let s = tl_cbf_spectrum_with_bank(block, &trajectories, bank)?;
                            (pick_separated_peaks_2d(&s, k, len, sep)?, Surface::Trajectories(s), None)
                        }
                        Algorithm::Sbl => {
                            let out = run_static_sbl(block, &angles, geom, &sbl, k)?;
                            let est = pick_separated_peaks_1d(&out.gamma, k, sep)?;
                            (est, Surface::Angles(out.gamma), Some(out.diagnostics))
                        }
                        Algorithm::TlSbl => {
                            let bank = bank.as_ref().expect("bank built for trajectory estimators");
                            let out = run_tl_sbl_with_bank(block, &trajectories, bank, &sbl, k)?;
                            let est = pick_separated_peaks_2d(&out.gamma, k, len, sep)?;
                            (est, Surface::Trajectories(out.gamma), Some(out.diagnostics))
                        }
                    })
                })
                .collect::<Result<_>>()?;
            let mut run = AlgorithmRun {
                algorithm,
                estimates: Vec::with_capacity(per_block.len()),
                surfaces: Vec::with_capacity(per_block.len()),
                diagnostics: Vec::new(),
            };
            for (e, s, d) in per_block {
                run.estimates.push(e);
                run.surfaces.push(s);
                run.diagnostics.extend(d);
            }
            Ok(run)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmMetrics {
    /// `None` when no block could be scored.
    pub rmse_deg: Option<f64>,
    pub scored_blocks: usize,
    pub excluded_blocks: Vec<usize>,
    pub missed_sources: usize,
    #[serde(default)]
    pub non_converged_blocks: Vec<usize>,
}

/// Contents of `metrics.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub crossing_threshold: f64,
    pub algorithms: BTreeMap<Algorithm, AlgorithmMetrics>,
}

impl MetricsSummary {
    pub fn rmse(&self, algorithm: Algorithm) -> Option<f64> {
        self.algorithms.get(&algorithm).and_then(|m| m.rmse_deg)
    }
}

/// Scores each run against the truth table.
pub fn evaluate(
    runs: &[(Algorithm, Vec<Vec<TrajectoryEstimate>>, Vec<usize>)],
    truth: &sim::TruthTable,
    crossing_threshold: f64,
) -> Result<(MetricsSummary, Vec<TrajectoryErrorReport>)> {
    let mut algorithms = BTreeMap::new();
    let mut reports = Vec::with_capacity(runs.len());
    for (algorithm, estimates, non_converged) in runs {
        let report = associate_and_score(estimates, truth, crossing_threshold)?;
        algorithms.insert(
            *algorithm,
            AlgorithmMetrics {
                rmse_deg: report.overall_rmse,
                scored_blocks: report.per_block_rmse.iter().filter(|r| r.is_some()).count(),
                excluded_blocks: report.excluded_blocks.clone(),
                missed_sources: report.missed_sources,
                non_converged_blocks: non_converged.clone(),
            },
        );
        reports.push(report);
    }
    Ok((
        MetricsSummary {
            crossing_threshold,
            algorithms,
        },
        reports,
    ))
}

/// Everything produced by one experiment.
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub scenario: Scenario,
    pub runs: Vec<AlgorithmRun>,
    pub summary: MetricsSummary,
    pub reports: Vec<TrajectoryErrorReport>,
}

impl ExperimentOutput {
    pub fn run(&self, algorithm: Algorithm) -> Option<&AlgorithmRun> {
        self.runs.iter().find(|r| r.algorithm == algorithm)
    }

    pub fn any_non_converged(&self) -> bool {
        self.runs.iter().any(|r| !r.non_converged_blocks().is_empty())
    }
}

/// Estimates and scores an already simulated scenario.
pub fn estimate_and_score(config: &ExperimentConfig, scenario: Scenario) -> Result<ExperimentOutput> {
    let resolved = config.resolved()?;
    let runs = estimate(&resolved, &scenario)?;
    let inputs: Vec<_> = runs
        .iter()
        .map(|r| (r.algorithm, r.estimates.clone(), r.non_converged_blocks()))
        .collect();
    let (summary, reports) = evaluate(&inputs, &scenario.truth, resolved.metrics.crossing_threshold)?;
    Ok(ExperimentOutput {
        config: resolved,
        scenario,
        runs,
        summary,
        reports,
    })
}

/// Simulates, estimates and scores.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let scenario = sim::simulate_trajectory_scenario(&config.scenario)?;
    estimate_and_score(config, scenario)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub const ESTIMATES_HEADER: &str = "block,rank,phi_deg,alpha_deg,weight,grid_index";

fn estimates_csv(estimates: &[Vec<TrajectoryEstimate>]) -> String {
    let mut out = format!("{ESTIMATES_HEADER}\n");
    for (b, block) in estimates.iter().enumerate() {
        for (r, e) in block.iter().enumerate() {
            let _ = writeln!(
                out,
                "{b},{r},{},{},{},{}",
                e.params.phi(),
                e.params.alpha(),
                e.weight,
                e.grid_index
            );
        }
    }
    out
}

fn trajectories_csv(estimates: &[Vec<TrajectoryEstimate>], len: usize) -> Result<String> {
    let mut out = String::from("block,snapshot,rank,theta_deg\n");
    for (b, block) in estimates.iter().enumerate() {
        for (r, e) in block.iter().enumerate() {
            for (l, theta) in expand_trajectory(&e.params, len)?.into_iter().enumerate() {
                let _ = writeln!(out, "{b},{},{r},{theta}", l + 1);
            }
        }
    }
    Ok(out)
}

pub fn write_summary(dir: &Path, summary: &MetricsSummary) -> Result<()> {
    let json = serde_json::to_string_pretty(summary).expect("summary serializes");
    write(&dir.join("metrics.json"), &(json + "\n"))
}

/// Writes all artifacts of an experiment. The scenario is written too unless
/// `with_scenario` is false (when estimating from an existing scenario
/// directory).
pub fn write_artifacts(dir: &Path, output: &ExperimentOutput, with_scenario: bool) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join("config.json"), &output.config.to_json())?;
    if with_scenario {
        sim::write_scenario(&dir.join("scenario"), &output.scenario)?;
    }
    let len = output.scenario.config.snapshots_per_block;
    for (run, report) in output.runs.iter().zip(&output.reports) {
        let sub = dir.join(run.algorithm.name());
        write(&sub.join("estimates.csv"), &estimates_csv(&run.estimates))?;
        write(&sub.join("trajectories.csv"), &trajectories_csv(&run.estimates, len)?)?;
        write(&sub.join("metrics.csv"), &report.to_csv())?;
        for (b, s) in run.surfaces.iter().enumerate() {
            write(&sub.join(format!("surface_{b:04}.csv")), &s.to_csv())?;
        }
        for (b, d) in run.diagnostics.iter().enumerate() {
            write(&sub.join(format!("sbl_{b:04}.csv")), &d.to_csv())?;
        }
    }
    write_summary(dir, &output.summary)
}

/// Reads `<dir>/<algorithm>/estimates.csv` back into per-block estimates.
pub fn read_estimates(path: &Path, num_blocks: usize) -> Result<Vec<Vec<TrajectoryEstimate>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let perr = |line: usize, reason: String| Error::Parse {
        path: path.display().to_string(),
        line,
        reason,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == ESTIMATES_HEADER => {}
        _ => return Err(perr(1, format!("expected header {ESTIMATES_HEADER}"))),
    }
    let mut out = vec![Vec::new(); num_blocks];
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(perr(i + 1, "expected 6 columns".into()));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| perr(i + 1, format!("not a number: {s:?}")));
        let int = |s: &str| s.trim().parse::<usize>().map_err(|_| perr(i + 1, format!("not an index: {s:?}")));
        let b = int(f[0])?;
        if b >= num_blocks {
            return Err(perr(i + 1, format!("block {b} out of range")));
        }
        let params = TrajectoryParams::new(num(f[2])?, num(f[3])?).map_err(|e| perr(i + 1, e.to_string()))?;
        out[b].push(TrajectoryEstimate {
            params,
            weight: num(f[4])?,
            grid_index: int(f[5])?,
        });
    }
    Ok(out)
}
