//! Canned scenarios: a 10-element half-wavelength ULA at 10 dB SNR.
//!
//! Examples 1 and 2 are single 100-snapshot blocks with four linearly moving
//! sources (on and off the default trajectory grid). Examples 3 and 4 are
//! multi-block scenarios with smoothly curving DOA tracks.

use super::{ScenarioConfig, SourceSpec, TrajectoryModel};
use crate::array::{ArrayGeometry, TrajectoryParams};
use crate::error::{Error, Result};

pub const DEFAULT_SENSORS: usize = 10;
pub const DEFAULT_SPACING: f64 = 0.5;
pub const DEFAULT_SNR_DB: f64 = 10.0;

/// On-grid `(φ, α)` pairs of Example 1.
pub const EXAMPLE1_PARAMS: [(f64, f64); 4] = [(-10.0, 1.0), (-30.0, -5.0), (42.0, 7.0), (66.0, -11.0)];
/// Off-grid `(φ, α)` pairs of Example 2.
pub const EXAMPLE2_PARAMS: [(f64, f64); 4] = [(-15.5, 2.5), (-25.5, -6.5), (47.5, 4.5), (71.5, -12.5)];

pub const EXAMPLE3_BLOCKS: usize = 31;
pub const EXAMPLE3_SNAPSHOTS: usize = 50;
/// Largest within-block DOA change of the Example 3 track, degrees.
pub const EXAMPLE3_MAX_BLOCK_CHANGE: f64 = 11.5;
const EXAMPLE3_CENTER: f64 = -10.0;
const EXAMPLE3_AMPLITUDE: f64 = 50.0;

pub const EXAMPLE4_BLOCKS: usize = 52;
pub const EXAMPLE4_SNAPSHOTS: usize = 30;
/// Half the end-to-end separation of the two Example 4 tracks, degrees.
const EXAMPLE4_SPREAD: f64 = 35.0;
/// Common oscillation riding on both Example 4 tracks.
const EXAMPLE4_AMPLITUDE: f64 = 25.0;
const EXAMPLE4_CYCLES: f64 = 4.0;

fn default_geometry() -> ArrayGeometry {
    ArrayGeometry::new(DEFAULT_SENSORS, DEFAULT_SPACING).expect("valid default geometry")
}

fn linear_sources(pairs: &[(f64, f64)]) -> Result<Vec<SourceSpec>> {
    pairs
        .iter()
        .map(|&(phi, alpha)| Ok(SourceSpec::linear(TrajectoryParams::new(phi, alpha)?)))
        .collect()
}

/// Four on-grid linear trajectories in one 100-snapshot block.
pub fn example1(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        geometry: default_geometry(),
        sources: linear_sources(&EXAMPLE1_PARAMS).expect("valid example 1 params"),
        num_blocks: 1,
        snapshots_per_block: 100,
        snr_db: Some(DEFAULT_SNR_DB),
        rng_seed: seed,
    }
}

/// Four off-grid linear trajectories in one 100-snapshot block.
pub fn example2(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        sources: linear_sources(&EXAMPLE2_PARAMS).expect("valid example 2 params"),
        ..example1(seed)
    }
}

/// Largest `|θ(last) − θ(first)|` over consecutive blocks of `len` snapshots.
fn max_block_change(model: &TrajectoryModel, num_blocks: usize, len: usize) -> Result<f64> {
    let mut worst = 0.0f64;
    for b in 0..num_blocks {
        let first = model.doa(b, 1, len)?;
        let last = model.doa(b, len, len)?;
        worst = worst.max((last - first).abs());
    }
    Ok(worst)
}

fn example3_model(rate: f64) -> TrajectoryModel {
    TrajectoryModel::Sinusoidal {
        start: EXAMPLE3_CENTER,
        slope: 0.0,
        amplitude: EXAMPLE3_AMPLITUDE,
        rate,
        phase: 0.0,
    }
}

/// Angular rate of the Example 3 sinusoid for which the steepest block changes
/// by exactly `target` degrees.
fn example3_rate(num_blocks: usize, len: usize, target: f64) -> Result<f64> {
    let f = |rate: f64| max_block_change(&example3_model(rate), num_blocks, len).map(|c| c - target);
    let (mut lo, mut hi) = (1e-9, 1e-3);
    while f(hi)? < 0.0 {
        hi *= 2.0;
        if hi > 1.0 {
            return Err(Error::domain(format!(
                "cannot reach a block change of {target}° with {len}-snapshot blocks"
            )));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One source on a sinusoidal track, 31 blocks of 50 snapshots, whose
/// steepest block spans exactly 11.5°.
pub fn example3(seed: u64) -> ScenarioConfig {
    let rate = example3_rate(EXAMPLE3_BLOCKS, EXAMPLE3_SNAPSHOTS, EXAMPLE3_MAX_BLOCK_CHANGE)
        .expect("example 3 rate");
    ScenarioConfig {
        geometry: default_geometry(),
        sources: vec![SourceSpec::new(example3_model(rate))],
        num_blocks: EXAMPLE3_BLOCKS,
        snapshots_per_block: EXAMPLE3_SNAPSHOTS,
        snr_db: Some(DEFAULT_SNR_DB),
        rng_seed: seed,
    }
}

/// Two sources, 52 blocks of 30 snapshots. Opposite linear drifts
/// (−35° → 35° and 35° → −35°) carry a shared oscillation, so the tracks
/// cross exactly once, at the middle of the scenario.
pub fn example4(seed: u64) -> ScenarioConfig {
    let total = (EXAMPLE4_BLOCKS * EXAMPLE4_SNAPSHOTS) as f64;
    let slope = 2.0 * EXAMPLE4_SPREAD / (total - 1.0);
    let rate = std::f64::consts::TAU * EXAMPLE4_CYCLES / total;
    let track = |start: f64, slope: f64| {
        SourceSpec::new(TrajectoryModel::Sinusoidal {
            start,
            slope,
            amplitude: EXAMPLE4_AMPLITUDE,
            rate,
            phase: 0.0,
        })
    };
    ScenarioConfig {
        geometry: default_geometry(),
        sources: vec![track(-EXAMPLE4_SPREAD, slope), track(EXAMPLE4_SPREAD, -slope)],
        num_blocks: EXAMPLE4_BLOCKS,
        snapshots_per_block: EXAMPLE4_SNAPSHOTS,
        snr_db: Some(DEFAULT_SNR_DB),
        rng_seed: seed,
    }
}

/// Scenario for example `id` in `1..=4`.
pub fn example(id: u8, seed: u64) -> Result<ScenarioConfig> {
    match id {
        1 => Ok(example1(seed)),
        2 => Ok(example2(seed)),
        3 => Ok(example3(seed)),
        4 => Ok(example4(seed)),
        _ => Err(Error::validation("example", format!("unknown example {id}, expected 1..=4"))),
    }
}
