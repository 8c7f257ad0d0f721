//! Runs the guide's code listings as doctests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/signal-model.md")]
pub mod signal_model {}
#[doc = include_str!("../../../book/src/beamforming.md")]
pub mod beamforming {}
#[doc = include_str!("../../../book/src/sbl.md")]
pub mod sbl {}
#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}
#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
