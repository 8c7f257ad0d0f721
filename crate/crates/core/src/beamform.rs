//! Conventional beamforming (CBF) and its trajectory extension (TL-CBF).
//!
//! Both spectra average the per-snapshot matched-filter output power:
//!
//! ```text
//! P(θ)    = (1/L) Σₗ |a(θ)ᴴ yₗ|²
//! P(φ, α) = (1/L) Σₗ |a(φ + (l−1)/(L−1)·α)ᴴ yₗ|²
//! ```
//!
//! so TL-CBF on the `α = 0` column is CBF.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::array::{steered_inner, AngleGrid, ArrayGeometry, SteeringBank, TrajectoryGrid};
use crate::error::{Error, Result};
use crate::sim::SnapshotBlock;

pub use crate::peaks::{pick_peaks_1d, pick_peaks_2d, pick_separated_peaks_1d, pick_separated_peaks_2d};

/// Power per static DOA.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum1D {
    grid: AngleGrid,
    power: Vec<f64>,
}

impl Spectrum1D {
    pub fn new(grid: AngleGrid, power: Vec<f64>) -> Result<Self> {
        if power.len() != grid.len() {
            return Err(Error::domain(format!(
                "spectrum has {} values for {} grid points",
                power.len(),
                grid.len()
            )));
        }
        if power.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::domain("spectrum values must be non-negative"));
        }
        Ok(Spectrum1D { grid, power })
    }

    pub fn grid(&self) -> &AngleGrid {
        &self.grid
    }

    pub fn power(&self) -> &[f64] {
        &self.power
    }

    /// `theta_deg,power` with one row per grid point.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta_deg,power\n");
        for (t, p) in self.grid.thetas().iter().zip(&self.power) {
            let _ = writeln!(out, "{t},{p}");
        }
        out
    }
}

/// Power per `(φ, α)` grid point, stored row-major (φ rows, α columns).
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum2D {
    grid: TrajectoryGrid,
    power: Vec<f64>,
}

impl Spectrum2D {
    pub fn new(grid: TrajectoryGrid, power: Vec<f64>) -> Result<Self> {
        if power.len() != grid.len() {
            return Err(Error::domain(format!(
                "surface has {} values for {} grid points",
                power.len(),
                grid.len()
            )));
        }
        if power.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::domain("surface values must be non-negative"));
        }
        Ok(Spectrum2D { grid, power })
    }

    pub fn grid(&self) -> &TrajectoryGrid {
        &self.grid
    }

    /// Flat row-major values; see [`TrajectoryGrid::flat_index`].
    pub fn power(&self) -> &[f64] {
        &self.power
    }

    pub fn at(&self, i_phi: usize, i_alpha: usize) -> f64 {
        self.power[self.grid.flat_index(i_phi, i_alpha)]
    }

    /// Index and value of the largest entry (lowest index on ties).
    pub fn argmax(&self) -> (usize, f64) {
        self.power
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (m, v)| if v > best.1 { (m, v) } else { best })
    }

    /// Matrix layout: the header row is `phi_deg\alpha_deg` followed by the α
    /// values; each further row is a φ value followed by its powers.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("phi_deg\\alpha_deg");
        for a in self.grid.alphas() {
            let _ = write!(out, ",{a}");
        }
        out.push('\n');
        let cols = self.grid.alphas().len();
        for (i, phi) in self.grid.phis().iter().enumerate() {
            let _ = write!(out, "{phi}");
            for p in &self.power[i * cols..(i + 1) * cols] {
                let _ = write!(out, ",{p}");
            }
            out.push('\n');
        }
        out
    }
}

fn check_block(block: &SnapshotBlock, geom: &ArrayGeometry) -> Result<()> {
    if block.num_sensors() != geom.num_sensors() {
        return Err(Error::domain(format!(
            "block has {} sensors, geometry has {}",
            block.num_sensors(),
            geom.num_sensors()
        )));
    }
    if block.num_snapshots() == 0 {
        return Err(Error::domain("block has no snapshots"));
    }
    Ok(())
}

/// Static CBF spectrum over an angle grid.
pub fn cbf_spectrum(block: &SnapshotBlock, grid: &AngleGrid, geom: &ArrayGeometry) -> Result<Spectrum1D> {
    check_block(block, geom)?;
    if grid.is_empty() {
        return Err(Error::domain("empty angle grid"));
    }
    let len = block.num_snapshots();
    let power = grid
        .thetas()
        .par_iter()
        .map(|&theta| {
            let z = geom.phase_factor(theta);
            let acc: f64 = (0..len).map(|l| steered_inner(z, block.snapshot(l)).norm_sqr()).sum();
            acc / len as f64
        })
        .collect();
    Spectrum1D::new(grid.clone(), power)
}

/// TL-CBF spectrum over a trajectory grid.
pub fn tl_cbf_spectrum(block: &SnapshotBlock, grid: &TrajectoryGrid, geom: &ArrayGeometry) -> Result<Spectrum2D> {
    check_block(block, geom)?;
    let bank = SteeringBank::for_trajectories(geom, grid, block.num_snapshots())?;
    tl_cbf_spectrum_with_bank(block, grid, &bank)
}

/// TL-CBF with a precomputed steering bank, for repeated use on blocks of the
/// same length.
pub fn tl_cbf_spectrum_with_bank(block: &SnapshotBlock, grid: &TrajectoryGrid, bank: &SteeringBank) -> Result<Spectrum2D> {
    let len = block.num_snapshots();
    if bank.snapshots() != len || bank.num_sensors() != block.num_sensors() {
        return Err(Error::domain("steering bank does not match block dimensions"));
    }
    let values: Vec<f64> = (0..bank.points().len())
        .into_par_iter()
        .map(|k| {
            let acc: f64 = bank
                .phases(k)
                .iter()
                .enumerate()
                .map(|(l, &z)| steered_inner(z, block.snapshot(l)).norm_sqr())
                .sum();
            acc / len as f64
        })
        .collect();
    let mut power = vec![0.0; grid.len()];
    for (&m, v) in bank.points().iter().zip(values) {
        power[m] = v;
    }
    Spectrum2D::new(grid.clone(), power)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{steering_vector, trajectory_steering_matrix, CMatrix, TrajectoryParams, C64};

    fn geom() -> ArrayGeometry {
        ArrayGeometry::half_wavelength(10).unwrap()
    }

    #[test]
    fn zero_data_gives_zero_spectrum() {
        let block = SnapshotBlock::new(CMatrix::zeros(10, 5), 0);
        let grid = AngleGrid::uniform(-90.0, 90.0, 1.0).unwrap();
        let s = cbf_spectrum(&block, &grid, &geom()).unwrap();
        assert!(s.power().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn matched_filter_peak_value() {
        let g = geom();
        let a = steering_vector(&g, 20.0).unwrap();
        let amps = [C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(-1.0, 0.0)];
        let y = CMatrix::from_fn(10, 3, |n, l| a[n] * amps[l]);
        let grid = AngleGrid::uniform(-90.0, 90.0, 1.0).unwrap();
        let s = cbf_spectrum(&SnapshotBlock::new(y, 0), &grid, &g).unwrap();
        let (imax, pmax) = s
            .power()
            .iter()
            .enumerate()
            .fold((0, 0.0), |b, (i, &p)| if p > b.1 { (i, p) } else { b });
        assert_eq!(grid.thetas()[imax], 20.0);
        assert!((pmax - 100.0).abs() < 1e-9);
    }

    #[test]
    fn tl_cbf_matches_direct_evaluation() {
        let g = ArrayGeometry::half_wavelength(6).unwrap();
        let y = CMatrix::from_fn(6, 7, |n, l| C64::new((n * l) as f64 * 0.1 - 0.3, (n as f64 - l as f64) * 0.2));
        let block = SnapshotBlock::new(y.clone(), 0);
        let grid = TrajectoryGrid::uniform((-30.0, 30.0, 10.0), (-4.0, 4.0, 2.0)).unwrap();
        let s = tl_cbf_spectrum(&block, &grid, &g).unwrap();
        for m in grid.valid_indices() {
            let a = trajectory_steering_matrix(&g, &grid.params(m).unwrap(), 7).unwrap();
            let direct: f64 = (0..7)
                .map(|l| a.as_matrix().column(l).dotc(&y.column(l)).norm_sqr())
                .sum::<f64>()
                / 7.0;
            assert!((s.power()[m] - direct).abs() < 1e-12 * direct.max(1.0));
        }
    }

    #[test]
    fn noiseless_single_source_argmax_at_truth() {
        let g = geom();
        let truth = TrajectoryParams::new(12.0, -4.0).unwrap();
        let a = trajectory_steering_matrix(&g, &truth, 20).unwrap();
        let y = a.into_matrix();
        let grid = TrajectoryGrid::uniform((-90.0, 90.0, 1.0), (-15.0, 15.0, 1.0)).unwrap();
        let s = tl_cbf_spectrum(&SnapshotBlock::new(y, 0), &grid, &g).unwrap();
        let (m, _) = s.argmax();
        assert_eq!(grid.params(m).unwrap(), truth);
    }

    #[test]
    fn csv_layouts() {
        let grid = TrajectoryGrid::new(vec![-1.0, 1.0], vec![0.0, 2.0]).unwrap();
        let s = Spectrum2D::new(grid, vec![1.0, 2.0, 3.0, 4.5]).unwrap();
        assert_eq!(s.to_csv(), "phi_deg\\alpha_deg,0,2\n-1,1,2\n1,3,4.5\n");
        let s = Spectrum1D::new(AngleGrid::new(vec![0.0, 1.5]).unwrap(), vec![0.25, 1.0]).unwrap();
        assert_eq!(s.to_csv(), "theta_deg,power\n0,0.25\n1.5,1\n");
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let block = SnapshotBlock::new(CMatrix::zeros(4, 5), 0);
        let grid = AngleGrid::uniform(-10.0, 10.0, 1.0).unwrap();
        assert!(cbf_spectrum(&block, &grid, &geom()).is_err());
    }
}
