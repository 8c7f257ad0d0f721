//! Array geometry, steering vectors and the linear trajectory model.
//!
//! A uniform linear array (ULA) of `N` sensors spaced `d` apart responds to a
//! narrowband plane wave arriving from angle `θ` (measured from broadside) with
//! the steering vector
//!
//! ```text
//! a(θ)[n] = exp(j·2π·n·(d/λ)·sin θ),   n = 0, …, N−1
//! ```
//!
//! A source whose direction changes linearly over an `L`-snapshot block is
//! described by [`TrajectoryParams`] `(φ, α)`: the DOA at snapshot `l` is
//! `φ + (l−1)/(L−1)·α`. Angles are kept in degrees everywhere and converted to
//! radians only inside trigonometric evaluation.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Largest magnitude of a valid direction of arrival, in degrees.
pub const MAX_DOA_DEG: f64 = 90.0;

fn check_doa(theta: f64, what: &str) -> Result<()> {
    if !theta.is_finite() || theta.abs() > MAX_DOA_DEG {
        return Err(Error::domain(format!(
            "{what} = {theta}° is outside [-90, 90]"
        )));
    }
    Ok(())
}

/// A uniform linear array: sensor count and spacing in wavelengths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGeometry")]
pub struct ArrayGeometry {
    num_sensors: usize,
    spacing_over_wavelength: f64,
}

#[derive(Deserialize)]
struct RawGeometry {
    num_sensors: usize,
    spacing_over_wavelength: f64,
}

impl TryFrom<RawGeometry> for ArrayGeometry {
    type Error = Error;

    fn try_from(raw: RawGeometry) -> Result<Self> {
        ArrayGeometry::new(raw.num_sensors, raw.spacing_over_wavelength)
    }
}

impl ArrayGeometry {
    pub fn new(num_sensors: usize, spacing_over_wavelength: f64) -> Result<Self> {
        if num_sensors < 2 {
            return Err(Error::validation(
                "num_sensors",
                format!("need at least 2 sensors, got {num_sensors}"),
            ));
        }
        if !(spacing_over_wavelength > 0.0 && spacing_over_wavelength.is_finite()) {
            return Err(Error::validation(
                "spacing_over_wavelength",
                format!("must be positive, got {spacing_over_wavelength}"),
            ));
        }
        Ok(ArrayGeometry {
            num_sensors,
            spacing_over_wavelength,
        })
    }

    /// `num_sensors` elements at half-wavelength spacing.
    pub fn half_wavelength(num_sensors: usize) -> Result<Self> {
        Self::new(num_sensors, 0.5)
    }

    pub fn num_sensors(&self) -> usize {
        self.num_sensors
    }

    pub fn spacing_over_wavelength(&self) -> f64 {
        self.spacing_over_wavelength
    }

    /// Inter-element phase factor `exp(j·2π·(d/λ)·sin θ)`. Entry `n` of the
    /// steering vector is this factor raised to the `n`-th power.
    pub(crate) fn phase_factor(&self, theta_deg: f64) -> C64 {
        C64::from_polar(
            1.0,
            TAU * self.spacing_over_wavelength * theta_deg.to_radians().sin(),
        )
    }
}

/// Steering vector of the array toward `theta` degrees, as a column of length N.
pub fn steering_vector(geom: &ArrayGeometry, theta: f64) -> Result<CVector> {
    check_doa(theta, "theta")?;
    let step = TAU * geom.spacing_over_wavelength * theta.to_radians().sin();
    Ok(CVector::from_fn(geom.num_sensors, |n, _| {
        C64::from_polar(1.0, step * n as f64)
    }))
}

/// Linear DOA trajectory within a block: `φ` is the DOA at the first snapshot
/// and `α` the total change up to the last one.
///
/// Both endpoints must lie in `[-90, 90]`; since the trajectory is affine in
/// the snapshot index every intermediate DOA then does too.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct TrajectoryParams {
    phi: f64,
    alpha: f64,
}

#[derive(Deserialize)]
struct RawParams {
    phi: f64,
    alpha: f64,
}

impl TryFrom<RawParams> for TrajectoryParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        TrajectoryParams::new(raw.phi, raw.alpha)
    }
}

impl TrajectoryParams {
    pub fn new(phi: f64, alpha: f64) -> Result<Self> {
        check_doa(phi, "phi")?;
        if !alpha.is_finite() {
            return Err(Error::domain(format!("alpha = {alpha} is not finite")));
        }
        check_doa(phi + alpha, "phi + alpha")?;
        Ok(TrajectoryParams { phi, alpha })
    }

    /// A source that stays at `theta` for the whole block.
    pub fn stationary(theta: f64) -> Result<Self> {
        Self::new(theta, 0.0)
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// DOA in degrees at snapshot `l` (1-based) of an `len`-snapshot block.
pub fn trajectory_doa(params: &TrajectoryParams, l: usize, len: usize) -> Result<f64> {
    if len < 2 {
        return Err(Error::domain(format!(
            "block length must be at least 2 to define a slope, got {len}"
        )));
    }
    if l == 0 || l > len {
        return Err(Error::domain(format!(
            "snapshot index {l} outside 1..={len}"
        )));
    }
    let frac = (l - 1) as f64 / (len - 1) as f64;
    Ok(params.phi + frac * params.alpha)
}

/// The `N×L` matrix of steering vectors along a linear trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySteeringMatrix {
    columns: CMatrix,
}

impl TrajectorySteeringMatrix {
    /// Column `l` (0-based) is the steering vector at snapshot `l + 1`.
    pub fn as_matrix(&self) -> &CMatrix {
        &self.columns
    }

    pub fn into_matrix(self) -> CMatrix {
        self.columns
    }
}

pub fn trajectory_steering_matrix(
    geom: &ArrayGeometry,
    params: &TrajectoryParams,
    len: usize,
) -> Result<TrajectorySteeringMatrix> {
    let mut columns = CMatrix::zeros(geom.num_sensors, len);
    for l in 0..len {
        let theta = trajectory_doa(params, l + 1, len)?;
        columns.set_column(l, &steering_vector(geom, theta)?);
    }
    Ok(TrajectorySteeringMatrix { columns })
}

/// Evenly spaced values `start, start+step, …` up to and including `stop`.
pub(crate) fn linspace_inclusive(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !start.is_finite() || !stop.is_finite() || stop < start {
        return Err(Error::domain(format!(
            "bad range start={start} stop={stop} step={step}"
        )));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}

fn check_increasing(values: &[f64], field: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::validation(field, "grid is empty"));
    }
    if values.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::validation(field, "grid must be strictly increasing"));
    }
    Ok(())
}

/// Candidate static DOAs (degrees) for the CBF and SBL baselines.
#[derive(Clone, Debug, PartialEq)]
pub struct AngleGrid {
    thetas: Vec<f64>,
}

impl AngleGrid {
    pub fn new(thetas: Vec<f64>) -> Result<Self> {
        check_increasing(&thetas, "theta grid")?;
        for &t in &thetas {
            check_doa(t, "theta grid entry")?;
        }
        Ok(AngleGrid { thetas })
    }

    pub fn uniform(start: f64, stop: f64, step: f64) -> Result<Self> {
        Self::new(linspace_inclusive(start, stop, step)?)
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }
}

/// Rectangular `(φ, α)` search grid of `M₁×M₂` candidate trajectories.
///
/// Grid points are numbered row-major over φ then α: the flat index of
/// `(i_phi, i_alpha)` is `i_phi·M₂ + i_alpha`. Points whose trajectory leaves
/// `[-90, 90]` are marked invalid at construction and never evaluated; every
/// per-point output (spectra, γ) holds zero there.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryGrid {
    phis: Vec<f64>,
    alphas: Vec<f64>,
    valid: Vec<bool>,
}

impl TrajectoryGrid {
    pub fn new(phis: Vec<f64>, alphas: Vec<f64>) -> Result<Self> {
        check_increasing(&phis, "phi grid")?;
        check_increasing(&alphas, "alpha grid")?;
        for &p in &phis {
            check_doa(p, "phi grid entry")?;
        }
        let valid = phis
            .iter()
            .flat_map(|&p| {
                alphas
                    .iter()
                    .map(move |&a| TrajectoryParams::new(p, a).is_ok())
            })
            .collect::<Vec<_>>();
        if !valid.iter().any(|&v| v) {
            return Err(Error::validation(
                "trajectory grid",
                "no grid point describes a trajectory inside [-90, 90]",
            ));
        }
        Ok(TrajectoryGrid {
            phis,
            alphas,
            valid,
        })
    }

    pub fn uniform(
        phi: (f64, f64, f64),
        alpha: (f64, f64, f64),
    ) -> Result<Self> {
        Self::new(
            linspace_inclusive(phi.0, phi.1, phi.2)?,
            linspace_inclusive(alpha.0, alpha.1, alpha.2)?,
        )
    }

    /// The single-column grid `α = 0` over the given DOAs; TL estimators on
    /// this grid reduce to their static counterparts.
    pub fn stationary(grid: &AngleGrid) -> Result<Self> {
        Self::new(grid.thetas.clone(), vec![0.0])
    }

    pub fn phis(&self) -> &[f64] {
        &self.phis
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// `(M₁, M₂)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.phis.len(), self.alphas.len())
    }

    /// Total number of grid points `M₁·M₂`, valid or not.
    pub fn len(&self) -> usize {
        self.valid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valid.is_empty()
    }

    pub fn flat_index(&self, i_phi: usize, i_alpha: usize) -> usize {
        debug_assert!(i_phi < self.phis.len() && i_alpha < self.alphas.len());
        i_phi * self.alphas.len() + i_alpha
    }

    pub fn unflatten(&self, m: usize) -> (usize, usize) {
        (m / self.alphas.len(), m % self.alphas.len())
    }

    pub fn is_valid(&self, m: usize) -> bool {
        self.valid[m]
    }

    pub fn valid_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.valid
            .iter()
            .enumerate()
            .filter_map(|(m, &v)| v.then_some(m))
    }

    /// Trajectory of grid point `m`, or `None` when the point was excluded.
    pub fn params(&self, m: usize) -> Option<TrajectoryParams> {
        if !self.valid[m] {
            return None;
        }
        let (i, j) = self.unflatten(m);
        Some(TrajectoryParams {
            phi: self.phis[i],
            alpha: self.alphas[j],
        })
    }
}

/// Inter-element phase factors for every valid point of a [`TrajectoryGrid`]
/// at every snapshot of an `L`-snapshot block.
///
/// On a ULA the steering vector is `[1, z, z², …, z^{N−1}]` with
/// `z = exp(j·2π·(d/λ)·sin θ)`, so one complex number per (grid point,
/// snapshot) determines it. Estimators evaluate inner products against
/// steering vectors as polynomials in `z`.
#[derive(Clone, Debug)]
pub struct SteeringBank {
    num_sensors: usize,
    len: usize,
    points: Vec<usize>,
    phases: Vec<C64>,
}

impl SteeringBank {
    pub fn for_trajectories(geom: &ArrayGeometry, grid: &TrajectoryGrid, len: usize) -> Result<Self> {
        if len < 2 {
            return Err(Error::domain(format!(
                "block length must be at least 2, got {len}"
            )));
        }
        let points: Vec<usize> = grid.valid_indices().collect();
        let mut phases = Vec::with_capacity(points.len() * len);
        for &m in &points {
            let params = grid.params(m).expect("valid index");
            for l in 1..=len {
                phases.push(geom.phase_factor(trajectory_doa(&params, l, len)?));
            }
        }
        Ok(SteeringBank {
            num_sensors: geom.num_sensors,
            len,
            points,
            phases,
        })
    }

    /// Bank for static DOAs; the phase is replicated over `len` snapshots.
    pub fn for_angles(geom: &ArrayGeometry, grid: &AngleGrid, len: usize) -> Self {
        let points: Vec<usize> = (0..grid.len()).collect();
        let phases = grid
            .thetas
            .iter()
            .flat_map(|&t| std::iter::repeat_n(geom.phase_factor(t), len))
            .collect();
        SteeringBank {
            num_sensors: geom.num_sensors,
            len,
            points,
            phases,
        }
    }

    pub fn num_sensors(&self) -> usize {
        self.num_sensors
    }

    pub fn snapshots(&self) -> usize {
        self.len
    }

    /// Flat grid indices of the points held, in increasing order.
    pub fn points(&self) -> &[usize] {
        &self.points
    }

    /// Phase factors of the `k`-th held point, one per snapshot.
    pub fn phases(&self, k: usize) -> &[C64] {
        &self.phases[k * self.len..(k + 1) * self.len]
    }

    /// Expanded steering vector of held point `k` at 0-based snapshot `l`.
    pub fn steering(&self, k: usize, l: usize) -> CVector {
        let z = self.phases(k)[l];
        let mut v = CVector::zeros(self.num_sensors);
        let mut p = C64::new(1.0, 0.0);
        for n in 0..self.num_sensors {
            v[n] = p;
            p *= z;
        }
        v
    }
}

/// `a(z)ᴴ·y = Σₙ conj(z)ⁿ·y[n]`, evaluated by Horner's rule.
#[inline]
pub(crate) fn steered_inner(z: C64, y: &[C64]) -> C64 {
    let w = z.conj();
    y.iter().rev().fold(C64::new(0.0, 0.0), |acc, &v| acc * w + v)
}
