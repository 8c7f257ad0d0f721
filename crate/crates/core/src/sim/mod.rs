//! Synthetic array measurements for static, linearly moving and smoothly
//! moving sources.
//!
//! Every block is `Y = Σₖ Ã(θₖ)·diag(xᵏ) + W`, with circular complex Gaussian
//! amplitudes `xᵏ` and noise `W`. Randomness is drawn from independent ChaCha
//! streams keyed by `(seed, block, stream)`: the noise has its own stream and
//! each source has one, so a block can be regenerated in isolation and adding
//! a source never perturbs the noise realization.

mod io;
pub mod presets;

pub use io::{read_scenario, write_scenario, SCENARIO_FORMAT};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::array::{steering_vector, trajectory_doa, ArrayGeometry, CMatrix, TrajectoryParams, C64};
use crate::error::{Error, Result};

const NOISE_STREAM: u64 = u64::MAX;

/// DOA of a source over the course of a scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectoryModel {
    /// The same linear trajectory in every block.
    Linear { params: TrajectoryParams },
    /// One linear trajectory per block.
    PerBlock { params: Vec<TrajectoryParams> },
    /// `θ(s) = start + slope·s + amplitude·sin(rate·s + phase)` in degrees,
    /// with `s` the 0-based snapshot index counted across the whole scenario
    /// and `rate` in radians per snapshot.
    Sinusoidal {
        start: f64,
        slope: f64,
        amplitude: f64,
        rate: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl TrajectoryModel {
    /// A source fixed at `theta` degrees.
    pub fn constant(theta: f64) -> Self {
        TrajectoryModel::Sinusoidal {
            start: theta,
            slope: 0.0,
            amplitude: 0.0,
            rate: 0.0,
            phase: 0.0,
        }
    }

    /// DOA at snapshot `l` (1-based) of block `block` for blocks of `len`
    /// snapshots.
    pub fn doa(&self, block: usize, l: usize, len: usize) -> Result<f64> {
        let theta = match self {
            TrajectoryModel::Linear { params } => trajectory_doa(params, l, len)?,
            TrajectoryModel::PerBlock { params } => {
                let p = params.get(block).ok_or_else(|| {
                    Error::domain(format!(
                        "per-block trajectory has {} entries, block {block} requested",
                        params.len()
                    ))
                })?;
                trajectory_doa(p, l, len)?
            }
            TrajectoryModel::Sinusoidal {
                start,
                slope,
                amplitude,
                rate,
                phase,
            } => {
                let s = (block * len + l - 1) as f64;
                start + slope * s + amplitude * (rate * s + phase).sin()
            }
        };
        if !theta.is_finite() || theta.abs() > crate::array::MAX_DOA_DEG {
            return Err(Error::domain(format!(
                "trajectory reaches {theta}° at block {block} snapshot {l}"
            )));
        }
        Ok(theta)
    }
}

fn default_power() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub trajectory: TrajectoryModel,
    /// Linear source power `E|s|²`.
    #[serde(default = "default_power")]
    pub power: f64,
    /// Amplitude RNG stream; defaults to the source's position in the list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stream: Option<u64>,
}

impl SourceSpec {
    pub fn new(trajectory: TrajectoryModel) -> Self {
        SourceSpec {
            trajectory,
            power: 1.0,
            stream: None,
        }
    }

    pub fn linear(params: TrajectoryParams) -> Self {
        Self::new(TrajectoryModel::Linear { params })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub geometry: ArrayGeometry,
    pub sources: Vec<SourceSpec>,
    pub num_blocks: usize,
    pub snapshots_per_block: usize,
    /// Per-source, per-sensor SNR in dB relative to unit source power.
    /// `None` simulates noiseless data.
    pub snr_db: Option<f64>,
    pub rng_seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() {
            return Err(Error::validation("scenario.sources", "need at least one source"));
        }
        for (k, s) in self.sources.iter().enumerate() {
            if !(s.power > 0.0 && s.power.is_finite()) {
                return Err(Error::validation(
                    format!("scenario.sources[{k}].power"),
                    format!("must be positive, got {}", s.power),
                ));
            }
        }
        if self.num_blocks == 0 {
            return Err(Error::validation("scenario.num_blocks", "must be at least 1"));
        }
        if self.snapshots_per_block < 2 {
            return Err(Error::validation(
                "scenario.snapshots_per_block",
                format!("must be at least 2, got {}", self.snapshots_per_block),
            ));
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(Error::validation("scenario.snr_db", "must be finite"));
            }
        }
        Ok(())
    }

    /// Noise variance `σ² = 10^(−SNR/10)`; zero when noiseless.
    pub fn noise_variance(&self) -> f64 {
        self.snr_db.map_or(0.0, |snr| 10f64.powf(-snr / 10.0))
    }

    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }
}

/// The `N×L` measurement matrix of one block. Column-major storage makes the
/// slice returned by [`SnapshotBlock::vectorized`] exactly `vec(Y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotBlock {
    y: CMatrix,
    block_index: usize,
}

impl SnapshotBlock {
    pub fn new(y: CMatrix, block_index: usize) -> Self {
        SnapshotBlock { y, block_index }
    }

    pub fn data(&self) -> &CMatrix {
        &self.y
    }

    pub fn block_index(&self) -> usize {
        self.block_index
    }

    pub fn num_sensors(&self) -> usize {
        self.y.nrows()
    }

    pub fn num_snapshots(&self) -> usize {
        self.y.ncols()
    }

    /// Snapshot `l` (0-based) as a contiguous slice of N samples.
    pub fn snapshot(&self, l: usize) -> &[C64] {
        let n = self.y.nrows();
        &self.y.as_slice()[l * n..(l + 1) * n]
    }

    pub fn vectorized(&self) -> &[C64] {
        self.y.as_slice()
    }
}

/// True DOA of every (block, source, snapshot) of a scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthTable {
    num_sources: usize,
    snapshots_per_block: usize,
    /// `[block][source][snapshot]`
    doas: Vec<Vec<Vec<f64>>>,
}

impl TruthTable {
    pub fn new(num_sources: usize, snapshots_per_block: usize) -> Self {
        TruthTable {
            num_sources,
            snapshots_per_block,
            doas: Vec::new(),
        }
    }

    pub fn from_blocks(doas: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let first = doas
            .first()
            .ok_or_else(|| Error::domain("truth table has no blocks"))?;
        let num_sources = first.len();
        let snapshots = first.first().map_or(0, Vec::len);
        if num_sources == 0 || snapshots == 0 {
            return Err(Error::domain("truth table has no sources or snapshots"));
        }
        for (b, block) in doas.iter().enumerate() {
            if block.len() != num_sources || block.iter().any(|s| s.len() != snapshots) {
                return Err(Error::domain(format!("truth block {b} has inconsistent shape")));
            }
        }
        Ok(TruthTable {
            num_sources,
            snapshots_per_block: snapshots,
            doas,
        })
    }

    pub fn push_block(&mut self, per_source: Vec<Vec<f64>>) {
        debug_assert_eq!(per_source.len(), self.num_sources);
        self.doas.push(per_source);
    }

    pub fn num_blocks(&self) -> usize {
        self.doas.len()
    }

    pub fn num_sources(&self) -> usize {
        self.num_sources
    }

    pub fn snapshots_per_block(&self) -> usize {
        self.snapshots_per_block
    }

    /// Per-snapshot DOAs of every source in `block`.
    pub fn block(&self, block: usize) -> &[Vec<f64>] {
        &self.doas[block]
    }

    /// Largest change `|θ(last) − θ(first)|` of any source within any block.
    pub fn max_block_change(&self) -> f64 {
        self.doas
            .iter()
            .flatten()
            .map(|s| (s[s.len() - 1] - s[0]).abs())
            .fold(0.0, f64::max)
    }
}

/// A simulated scenario: measurement blocks plus ground truth.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub blocks: Vec<SnapshotBlock>,
    pub truth: TruthTable,
}

impl Scenario {
    pub fn noise_variance(&self) -> f64 {
        self.config.noise_variance()
    }
}

fn stream_rng(seed: u64, block: usize, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(block as u64).to_le_bytes());
    key[16..24].copy_from_slice(&stream.to_le_bytes());
    key[24..].copy_from_slice(b"tldoa-v1");
    ChaCha8Rng::from_seed(key)
}

/// Draws from `CN(0, variance)`.
fn complex_gaussian(rng: &mut ChaCha8Rng, variance: f64) -> C64 {
    let scale = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re * scale, im * scale)
}

/// Components of one simulated block, kept apart.
#[derive(Clone, Debug)]
pub struct BlockComponents {
    /// `Ã(θₖ)·diag(xᵏ)` for every source.
    pub signals: Vec<CMatrix>,
    pub noise: CMatrix,
    /// True DOAs, `[source][snapshot]`.
    pub doas: Vec<Vec<f64>>,
}

impl BlockComponents {
    pub fn total(&self) -> CMatrix {
        self.signals
            .iter()
            .fold(self.noise.clone(), |acc, s| acc + s)
    }
}

/// Simulates block `block_index` and keeps the per-source signals and the
/// noise separate.
pub fn simulate_block_components(config: &ScenarioConfig, block_index: usize) -> Result<BlockComponents> {
    config.validate()?;
    let n = config.geometry.num_sensors();
    let len = config.snapshots_per_block;

    let mut signals = Vec::with_capacity(config.sources.len());
    let mut doas = Vec::with_capacity(config.sources.len());
    for (k, src) in config.sources.iter().enumerate() {
        let mut rng = stream_rng(config.rng_seed, block_index, src.stream.unwrap_or(k as u64));
        let mut sig = CMatrix::zeros(n, len);
        let mut thetas = Vec::with_capacity(len);
        for l in 0..len {
            let theta = src.trajectory.doa(block_index, l + 1, len)?;
            let amp = complex_gaussian(&mut rng, src.power);
            sig.set_column(l, &(steering_vector(&config.geometry, theta)? * amp));
            thetas.push(theta);
        }
        signals.push(sig);
        doas.push(thetas);
    }

    let sigma2 = config.noise_variance();
    let noise = if sigma2 > 0.0 {
        let mut rng = stream_rng(config.rng_seed, block_index, NOISE_STREAM);
        // column-major fill: sensor index varies fastest
        CMatrix::from_iterator(n, len, (0..n * len).map(|_| complex_gaussian(&mut rng, sigma2)))
    } else {
        CMatrix::zeros(n, len)
    };

    Ok(BlockComponents {
        signals,
        noise,
        doas,
    })
}

/// Simulates one block. Returns the measurements and the true DOAs
/// `[source][snapshot]`.
pub fn simulate_block(config: &ScenarioConfig, block_index: usize) -> Result<(SnapshotBlock, Vec<Vec<f64>>)> {
    let parts = simulate_block_components(config, block_index)?;
    let y = parts.total();
    Ok((SnapshotBlock::new(y, block_index), parts.doas))
}

/// Simulates `num_blocks` consecutive, non-overlapping blocks.
pub fn simulate_trajectory_scenario(config: &ScenarioConfig) -> Result<Scenario> {
    config.validate()?;
    let mut truth = TruthTable::new(config.num_sources(), config.snapshots_per_block);
    let mut blocks = Vec::with_capacity(config.num_blocks);
    for b in 0..config.num_blocks {
        let (block, doas) = simulate_block(config, b)?;
        blocks.push(block);
        truth.push_block(doas);
    }
    Ok(Scenario {
        config: config.clone(),
        blocks,
        truth,
    })
}
