//! Local-maximum picking on 1-D and 2-D grid surfaces.
//!
//! A peak is a grid point with positive value strictly greater than every
//! available neighbor (two in 1-D, eight in 2-D; boundary points use the
//! neighbors that exist). Peaks are ranked by descending value; ties go to the
//! lower flat grid index.

use serde::{Deserialize, Serialize};

use crate::array::{AngleGrid, TrajectoryGrid, TrajectoryParams};
use crate::beamform::{Spectrum1D, Spectrum2D};
use crate::error::{Error, Result};

/// A trajectory picked off a spectrum or γ surface.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEstimate {
    pub params: TrajectoryParams,
    /// Spectrum power or γ at the grid point.
    pub weight: f64,
    /// Flat index of the grid point.
    pub grid_index: usize,
}

fn rank(mut peaks: Vec<(usize, f64)>, k: usize) -> Vec<(usize, f64)> {
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    peaks.truncate(k);
    peaks
}

pub(crate) fn local_maxima_1d(values: &[f64]) -> Vec<(usize, f64)> {
    let n = values.len();
    (0..n)
        .filter(|&i| {
            let v = values[i];
            v > 0.0 && (i == 0 || v > values[i - 1]) && (i + 1 == n || v > values[i + 1])
        })
        .map(|i| (i, values[i]))
        .collect()
}

pub(crate) fn local_maxima_2d(values: &[f64], rows: usize, cols: usize, valid: impl Fn(usize) -> bool) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            let m = i * cols + j;
            let v = values[m];
            if !(v > 0.0) || !valid(m) {
                continue;
            }
            let mut is_peak = true;
            'scan: for di in -1isize..=1 {
                for dj in -1isize..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (ni, nj) = (i as isize + di, j as isize + dj);
                    if ni < 0 || nj < 0 || ni >= rows as isize || nj >= cols as isize {
                        continue;
                    }
                    if values[ni as usize * cols + nj as usize] >= v {
                        is_peak = false;
                        break 'scan;
                    }
                }
            }
            if is_peak {
                out.push((m, v));
            }
        }
    }
    out
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::domain("number of peaks must be at least 1"));
    }
    Ok(())
}

pub(crate) fn peaks_on_angles(grid: &AngleGrid, values: &[f64], k: usize) -> Result<Vec<TrajectoryEstimate>> {
    check_k(k)?;
    rank(local_maxima_1d(values), k)
        .into_iter()
        .map(|(i, w)| {
            Ok(TrajectoryEstimate {
                params: TrajectoryParams::stationary(grid.thetas()[i])?,
                weight: w,
                grid_index: i,
            })
        })
        .collect()
}

pub(crate) fn peaks_on_trajectories(grid: &TrajectoryGrid, values: &[f64], k: usize) -> Result<Vec<TrajectoryEstimate>> {
    check_k(k)?;
    let (rows, cols) = grid.shape();
    Ok(rank(local_maxima_2d(values, rows, cols, |m| grid.is_valid(m)), k)
        .into_iter()
        .map(|(m, w)| TrajectoryEstimate {
            params: grid.params(m).expect("peaks lie on valid points"),
            weight: w,
            grid_index: m,
        })
        .collect())
}

/// Up to `k` strongest strict local maxima of a 1-D spectrum, as stationary
/// trajectories. Fewer are returned when fewer maxima exist.
pub fn pick_peaks_1d(spectrum: &Spectrum1D, k: usize) -> Result<Vec<TrajectoryEstimate>> {
    peaks_on_angles(spectrum.grid(), spectrum.power(), k)
}

/// Up to `k` strongest strict 8-neighborhood maxima of a 2-D surface.
pub fn pick_peaks_2d(spectrum: &Spectrum2D, k: usize) -> Result<Vec<TrajectoryEstimate>> {
    peaks_on_trajectories(spectrum.grid(), spectrum.power(), k)
}

/// Mean absolute DOA difference between two trajectories over `len` snapshots.
pub fn trajectory_separation(a: &TrajectoryParams, b: &TrajectoryParams, len: usize) -> f64 {
    let (dphi, dalpha) = (a.phi() - b.phi(), a.alpha() - b.alpha());
    if len <= 1 {
        return dphi.abs();
    }
    let step = dalpha / (len - 1) as f64;
    (0..len).map(|l| (dphi + l as f64 * step).abs()).sum::<f64>() / len as f64
}

/// Greedy selection from ranked candidates: a candidate closer than
/// `min_separation` to an already accepted (stronger) one is skipped.
fn separated(ranked: Vec<TrajectoryEstimate>, k: usize, len: usize, min_separation: f64) -> Vec<TrajectoryEstimate> {
    let mut out: Vec<TrajectoryEstimate> = Vec::with_capacity(k);
    for c in ranked {
        if out.len() == k {
            break;
        }
        if out
            .iter()
            .all(|p| trajectory_separation(&p.params, &c.params, len) >= min_separation)
        {
            out.push(c);
        }
    }
    out
}

/// [`pick_peaks_1d`] with peaks closer than `min_separation` degrees to a
/// stronger peak skipped. A zero separation gives [`pick_peaks_1d`].
pub fn pick_separated_peaks_1d(spectrum: &Spectrum1D, k: usize, min_separation: f64) -> Result<Vec<TrajectoryEstimate>> {
    check_separation(min_separation)?;
    let all = peaks_on_angles(spectrum.grid(), spectrum.power(), usize::MAX)?;
    Ok(separated(all, k, 1, min_separation))
}

/// [`pick_peaks_2d`] with maxima whose trajectory stays within
/// `min_separation` degrees (mean over `len` snapshots) of a stronger maximum
/// skipped. The φ–α surface of a short block has a ridge along constant
/// mid-block DOA, and ripple on that ridge yields several strict maxima per
/// source; this drops them.
pub fn pick_separated_peaks_2d(
    spectrum: &Spectrum2D,
    k: usize,
    len: usize,
    min_separation: f64,
) -> Result<Vec<TrajectoryEstimate>> {
    check_separation(min_separation)?;
    let all = peaks_on_trajectories(spectrum.grid(), spectrum.power(), usize::MAX)?;
    Ok(separated(all, k, len, min_separation))
}

fn check_separation(min_separation: f64) -> Result<()> {
    if !(min_separation >= 0.0) || !min_separation.is_finite() {
        return Err(Error::domain("peak separation must be finite and non-negative"));
    }
    Ok(())
}
