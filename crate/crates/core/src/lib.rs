//! Direction-of-arrival trajectory estimation for moving narrowband sources
//! observed by a uniform linear array.
//!
//! Classic block processing assumes each source sits still for the `L`
//! snapshots of a block. This crate models linear DOA motion inside the block
//! instead, `θˡ = φ + (l−1)/(L−1)·α`, and searches a `(φ, α)` grid with two
//! estimators:
//!
//! * **TL-CBF**: conventional beamforming with per-snapshot steering along the
//!   candidate trajectory ([`beamform::tl_cbf_spectrum`]).
//! * **TL-SBL**: sparse Bayesian learning on the block-sparse lifted model,
//!   with a fixed-point hyperparameter update ([`sbl::run_tl_sbl`]).
//!
//! Static CBF and MMV-SBL baselines, a seeded simulator, error metrics and an
//! experiment harness complete the pipeline.
//!
//! ```
//! use tldoa::array::{ArrayGeometry, TrajectoryGrid, TrajectoryParams};
//! use tldoa::beamform::{pick_peaks_2d, tl_cbf_spectrum};
//! use tldoa::sim::{simulate_block, ScenarioConfig, SourceSpec};
//!
//! let config = ScenarioConfig {
//!     geometry: ArrayGeometry::half_wavelength(10)?,
//!     sources: vec![SourceSpec::linear(TrajectoryParams::new(20.0, -6.0)?)],
//!     num_blocks: 1,
//!     snapshots_per_block: 40,
//!     snr_db: Some(10.0),
//!     rng_seed: 1,
//! };
//! let (block, _truth) = simulate_block(&config, 0)?;
//! let grid = TrajectoryGrid::uniform((-90.0, 90.0, 1.0), (-15.0, 15.0, 1.0))?;
//! let spectrum = tl_cbf_spectrum(&block, &grid, &config.geometry)?;
//! let best = pick_peaks_2d(&spectrum, 1)?;
//! assert_eq!((best[0].params.phi(), best[0].params.alpha()), (20.0, -6.0));
//! # Ok::<(), tldoa::Error>(())
//! ```

pub mod array;
pub mod beamform;
mod error;
pub mod experiment;
pub mod metrics;
pub mod peaks;
pub mod sbl;
pub mod sim;

pub use error::{Error, Result};
