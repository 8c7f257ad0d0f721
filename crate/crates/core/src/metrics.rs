//! Trajectory error metrics.
//!
//! Each block's estimates are matched to the true sources by an optimal
//! assignment on the summed per-snapshot absolute DOA error, then scored by
//! per-snapshot RMSE. Blocks where two true sources come within
//! `crossing_threshold` degrees of each other are excluded from the score.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::array::{trajectory_doa, TrajectoryParams};
use crate::error::{Error, Result};
use crate::peaks::TrajectoryEstimate;
use crate::sim::TruthTable;

/// Default separation (degrees) under which two tracks count as crossing.
pub const DEFAULT_CROSSING_THRESHOLD: f64 = 10.0;

/// Per-snapshot error charged against a source when a block produced no
/// estimate at all.
const EMPTY_BLOCK_ERROR: f64 = 180.0;

/// DOAs of a linear trajectory at snapshots `1..=len`.
pub fn expand_trajectory(params: &TrajectoryParams, len: usize) -> Result<Vec<f64>> {
    (1..=len).map(|l| trajectory_doa(params, l, len)).collect()
}

/// Minimum-cost assignment on a square cost matrix (Hungarian method,
/// `O(n³)`). Returns the column assigned to each row.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based potentials; column 0 is a virtual start
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[row_of[j] - 1] = j - 1;
    }
    assignment
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryErrorReport {
    /// RMSE of each block in degrees; `None` for excluded blocks.
    pub per_block_rmse: Vec<Option<f64>>,
    /// RMSE over every scored (block, source, snapshot); `None` when every
    /// block is excluded.
    pub overall_rmse: Option<f64>,
    /// Per block, the true source each kept estimate was matched to.
    pub association: Vec<Vec<usize>>,
    pub excluded_blocks: Vec<usize>,
    pub crossing_threshold: f64,
    /// Scored (block, source) pairs left without an estimate of their own.
    pub missed_sources: usize,
}

impl TrajectoryErrorReport {
    /// `block,rmse_deg,excluded`; excluded blocks have an empty RMSE field.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("block,rmse_deg,excluded\n");
        for (b, r) in self.per_block_rmse.iter().enumerate() {
            match r {
                Some(r) => {
                    let _ = writeln!(out, "{b},{r},0");
                }
                None => {
                    let _ = writeln!(out, "{b},,1");
                }
            }
        }
        out
    }
}

fn is_crossing(block: &[Vec<f64>], threshold: f64) -> bool {
    for i in 0..block.len() {
        for j in i + 1..block.len() {
            if block[i].iter().zip(&block[j]).any(|(a, b)| (a - b).abs() <= threshold) {
                return true;
            }
        }
    }
    false
}

fn abs_cost(est: &[f64], truth: &[f64]) -> f64 {
    est.iter().zip(truth).map(|(e, t)| (e - t).abs()).sum()
}

/// Matches estimates to sources block by block and scores the result.
///
/// At most one estimate per true source is kept per block (the heaviest ones).
/// A source left unmatched because its block returned fewer estimates is
/// scored against the nearest estimate in the block and counted in
/// `missed_sources`.
pub fn associate_and_score(
    estimates: &[Vec<TrajectoryEstimate>],
    truth: &TruthTable,
    crossing_threshold: f64,
) -> Result<TrajectoryErrorReport> {
    if truth.num_blocks() == 0 || truth.num_sources() == 0 {
        return Err(Error::domain("truth table is empty"));
    }
    if estimates.len() != truth.num_blocks() {
        return Err(Error::domain(format!(
            "{} estimate blocks for {} truth blocks",
            estimates.len(),
            truth.num_blocks()
        )));
    }
    if !(crossing_threshold >= 0.0) {
        return Err(Error::domain("crossing threshold must be non-negative"));
    }
    let len = truth.snapshots_per_block();
    let k = truth.num_sources();

    let mut per_block_rmse = Vec::with_capacity(truth.num_blocks());
    let mut association = Vec::with_capacity(truth.num_blocks());
    let mut excluded_blocks = Vec::new();
    let mut missed_sources = 0;
    let (mut sq_sum, mut count) = (0.0, 0usize);

    for (b, block_est) in estimates.iter().enumerate() {
        let block_truth = truth.block(b);

        let mut kept: Vec<&TrajectoryEstimate> = block_est.iter().collect();
        kept.sort_by(|x, y| y.weight.total_cmp(&x.weight));
        kept.truncate(k);
        let tracks = kept
            .iter()
            .map(|e| expand_trajectory(&e.params, len))
            .collect::<Result<Vec<_>>>()?;

        // square cost matrix; rows beyond the estimates are free dummies
        let cost: Vec<Vec<f64>> = (0..k)
            .map(|e| {
                (0..k)
                    .map(|s| tracks.get(e).map_or(0.0, |t| abs_cost(t, &block_truth[s])))
                    .collect()
            })
            .collect();
        let assignment = min_cost_assignment(&cost);
        association.push(assignment[..tracks.len()].to_vec());

        if is_crossing(block_truth, crossing_threshold) {
            excluded_blocks.push(b);
            per_block_rmse.push(None);
            continue;
        }

        let mut block_sq = 0.0;
        for (s, src) in block_truth.iter().enumerate() {
            let matched = assignment[..tracks.len()].iter().position(|&a| a == s);
            let track = match matched {
                Some(e) => Some(&tracks[e]),
                None => {
                    missed_sources += 1;
                    tracks
                        .iter()
                        .min_by(|x, y| abs_cost(x, src).total_cmp(&abs_cost(y, src)))
                }
            };
            block_sq += match track {
                Some(t) => t.iter().zip(src).map(|(e, t)| (e - t).powi(2)).sum::<f64>(),
                None => EMPTY_BLOCK_ERROR.powi(2) * len as f64,
            };
        }
        per_block_rmse.push(Some((block_sq / (k * len) as f64).sqrt()));
        sq_sum += block_sq;
        count += k * len;
    }

    let overall_rmse = (count > 0).then(|| (sq_sum / count as f64).sqrt());
    Ok(TrajectoryErrorReport {
        per_block_rmse,
        overall_rmse,
        association,
        excluded_blocks,
        crossing_threshold,
        missed_sources,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn est(phi: f64, alpha: f64, weight: f64) -> TrajectoryEstimate {
        TrajectoryEstimate {
            params: TrajectoryParams::new(phi, alpha).unwrap(),
            weight,
            grid_index: 0,
        }
    }

    #[test]
    fn expansion_examples() {
        let p = TrajectoryParams::new(5.0, 0.0).unwrap();
        assert_eq!(expand_trajectory(&p, 3).unwrap(), vec![5.0, 5.0, 5.0]);
        let p = TrajectoryParams::new(0.0, 10.0).unwrap();
        let v = expand_trajectory(&p, 11).unwrap();
        for (i, x) in v.iter().enumerate() {
            assert!((x - i as f64).abs() < 1e-12);
        }
        let p = TrajectoryParams::new(66.0, -11.0).unwrap();
        assert_eq!(*expand_trajectory(&p, 100).unwrap().last().unwrap(), 55.0);
    }

    #[test]
    fn perfect_estimates_score_zero() {
        let p = [TrajectoryParams::new(-10.0, 1.0).unwrap(), TrajectoryParams::new(30.0, -2.0).unwrap()];
        let truth = TruthTable::from_blocks(vec![p
            .iter()
            .map(|p| expand_trajectory(p, 20).unwrap())
            .collect()])
        .unwrap();
        let e = vec![vec![est(30.0, -2.0, 1.0), est(-10.0, 1.0, 2.0)]];
        let r = associate_and_score(&e, &truth, 10.0).unwrap();
        assert_eq!(r.overall_rmse, Some(0.0));
        assert!(r.excluded_blocks.is_empty());
        assert_eq!(r.association[0], vec![0, 1]); // heaviest first
    }

    #[test]
    fn static_estimate_of_moving_source_closed_form() {
        let (phi, alpha, len) = (12.0, 6.0, 30usize);
        let truth = TruthTable::from_blocks(vec![vec![expand_trajectory(
            &TrajectoryParams::new(phi, alpha).unwrap(),
            len,
        )
        .unwrap()]])
        .unwrap();
        let r = associate_and_score(&[vec![est(phi, 0.0, 1.0)]], &truth, 10.0).unwrap();
        let closed = alpha.abs()
            * ((0..len)
                .map(|l| (l as f64 / (len - 1) as f64).powi(2))
                .sum::<f64>()
                / len as f64)
                .sqrt();
        assert!((r.overall_rmse.unwrap() - closed).abs() < 1e-12);
    }

    #[test]
    fn surplus_estimates_dropped_by_weight() {
        let truth = TruthTable::from_blocks(vec![vec![vec![0.0; 4]]]).unwrap();
        let e = vec![vec![est(40.0, 0.0, 0.1), est(1.0, 0.0, 5.0)]];
        let r = associate_and_score(&e, &truth, 10.0).unwrap();
        assert!((r.overall_rmse.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shortfall_scores_against_nearest() {
        let truth = TruthTable::from_blocks(vec![vec![vec![0.0; 4], vec![20.0; 4]]]).unwrap();
        let r = associate_and_score(&[vec![est(2.0, 0.0, 1.0)]], &truth, 5.0).unwrap();
        assert_eq!(r.missed_sources, 1);
        let expected = ((4.0 + 18.0f64.powi(2)) / 2.0).sqrt();
        assert!((r.overall_rmse.unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn crossing_blocks_are_excluded() {
        let truth = TruthTable::from_blocks(vec![
            vec![vec![0.0; 3], vec![30.0; 3]],
            vec![vec![0.0; 3], vec![5.0; 3]],
        ])
        .unwrap();
        let e = vec![vec![est(0.0, 0.0, 1.0), est(30.0, 0.0, 1.0)], vec![est(50.0, 0.0, 1.0)]];
        let r = associate_and_score(&e, &truth, 10.0).unwrap();
        assert_eq!(r.excluded_blocks, vec![1]);
        assert_eq!(r.per_block_rmse, vec![Some(0.0), None]);
        assert_eq!(r.overall_rmse, Some(0.0));
        assert_eq!(r.to_csv(), "block,rmse_deg,excluded\n0,0,0\n1,,1\n");
    }

    #[test]
    fn empty_truth_is_rejected() {
        assert!(TruthTable::from_blocks(vec![]).is_err());
        let truth = TruthTable::new(1, 4);
        assert!(associate_and_score(&[], &truth, 10.0).is_err());
    }

    #[test]
    fn hungarian_small_case() {
        let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        let a = min_cost_assignment(&cost);
        let total: f64 = a.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        assert_eq!(total, 5.0);
    }
}
