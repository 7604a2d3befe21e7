//! Continuous-time embeddings of a trace and the convergence diagnostics
//! built on them.
//!
//! For each block the update sequence is the subsequence of records that
//! write the block. Its elapsed times define virtual update times
//! `T_k = Σ_{j<k} dτ_j`; the shift `σ` starts the embedding at the first
//! update `p(σ)` with `T_p ≥ σ`. From there the step clock
//! `t_k = Σ_{j<k} γ_{p+j}` and the weighted clock `τ_k = Σ_{j<k} γ_{p+j} dτ_{p+j}`
//! index piecewise-constant right-continuous maps: `x(t)` and `τ(t)` jump
//! on the `t` grid, `N(s)` jumps on the `τ` grid, and `x̂(s) = x(N(s))`.
//! Maps are evaluated lazily by binary search over the stored grids.

mod diag;

pub use diag::{
    bias_diag, martingale_diag, mean_update_time, stationarity_curve, time_fraction_in_set, write_bias_csv,
    write_martingale_csv, write_stationarity_csv, BiasDiag, GapPoint, MartingaleDiag, UpdateTime, MAX_ENUM_SAMPLES,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::Trace;

/// Embedding of one block's update sequence from shift `σ` on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockInterpolation {
    pub components: Vec<usize>,
    /// `p(σ)`: index (within the block's updates) of the first update at or
    /// after `σ`.
    pub start: usize,
    /// Virtual start time `T_{p+k}` of each remaining update.
    pub times: Vec<f64>,
    pub gammas: Vec<f64>,
    pub dtaus: Vec<f64>,
    /// Block value before update `p + k`; one longer than `gammas`.
    pub values: Vec<Vec<f64>>,
    /// `t_k`, one longer than `gammas`.
    pub step_clock: Vec<f64>,
    /// `τ_k`, one longer than `gammas`.
    pub weighted_clock: Vec<f64>,
}

/// Largest index `k` with `grid[k] ≤ s`, clamped to 0 for `s < grid[0]`.
fn grid_index(grid: &[f64], s: f64) -> usize {
    grid.partition_point(|&g| g <= s).saturating_sub(1)
}

impl BlockInterpolation {
    fn from_sequence(
        components: Vec<usize>,
        times: &[f64],
        gammas: &[f64],
        dtaus: &[f64],
        values: &[Vec<f64>],
        start: usize,
    ) -> Self {
        let gammas = gammas[start..].to_vec();
        let dtaus = dtaus[start..].to_vec();
        let mut step_clock = Vec::with_capacity(gammas.len() + 1);
        let mut weighted_clock = Vec::with_capacity(gammas.len() + 1);
        let (mut t, mut tau) = (0.0, 0.0);
        step_clock.push(t);
        weighted_clock.push(tau);
        for (g, d) in gammas.iter().zip(&dtaus) {
            t += g;
            tau += g * d;
            step_clock.push(t);
            weighted_clock.push(tau);
        }
        Self {
            components,
            start,
            times: times[start..].to_vec(),
            gammas,
            dtaus,
            values: values[start..].to_vec(),
            step_clock,
            weighted_clock,
        }
    }

    /// Number of updates after the shift.
    pub fn len(&self) -> usize {
        self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gammas.is_empty()
    }

    /// `x(t)`.
    pub fn x(&self, t: f64) -> &[f64] {
        &self.values[grid_index(&self.step_clock, t)]
    }

    /// `τ(t)`.
    pub fn tau(&self, t: f64) -> f64 {
        self.weighted_clock[grid_index(&self.step_clock, t)]
    }

    /// `N(s)`.
    pub fn n(&self, s: f64) -> f64 {
        self.step_clock[grid_index(&self.weighted_clock, s)]
    }

    /// `x̂(s) = x(N(s))`.
    pub fn x_hat(&self, s: f64) -> &[f64] {
        self.x(self.n(s))
    }

    /// Drop the first `steps` updates and restart the clocks there.
    pub fn reindex(&self, steps: usize) -> Self {
        let steps = steps.min(self.len());
        let mut out = Self::from_sequence(
            self.components.clone(),
            &self.times,
            &self.gammas,
            &self.dtaus,
            &self.values,
            steps,
        );
        out.start = self.start + steps;
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interpolation {
    pub sigma: f64,
    pub blocks: Vec<BlockInterpolation>,
}

impl Interpolation {
    /// Assemble the full vector `x̂(s)` from the block embeddings.
    pub fn x_hat(&self, s: f64, dim: usize) -> Vec<f64> {
        let mut x = vec![0.0; dim];
        for b in &self.blocks {
            for (&j, &v) in b.components.iter().zip(b.x_hat(s)) {
                x[j] = v;
            }
        }
        x
    }
}

/// Block update subsequence: (start times, γ, dτ, values before each
/// update plus the final value).
type Sequence = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<Vec<f64>>);

fn block_sequence(trace: &Trace, block: &[usize]) -> Result<Sequence> {
    let mut times = Vec::new();
    let mut gammas = Vec::new();
    let mut dtaus = Vec::new();
    let mut current: Vec<f64> = block.iter().map(|&j| trace.x0[j]).collect();
    let mut values = vec![current.clone()];
    let mut clock = 0.0;
    for r in &trace.records {
        let pos: Vec<Option<usize>> = block.iter().map(|j| r.components.binary_search(j).ok()).collect();
        if pos.iter().all(Option::is_none) {
            continue;
        }
        if pos.iter().any(Option::is_none) {
            return Err(Error::Input(format!(
                "record {} writes part of block {block:?}; blocks must match the trace's write sets",
                r.k
            )));
        }
        for (c, p) in current.iter_mut().zip(&pos) {
            *c = r.values[p.expect("checked")];
        }
        times.push(clock);
        clock += r.dtau;
        gammas.push(r.gamma);
        dtaus.push(r.dtau);
        values.push(current.clone());
    }
    Ok((times, gammas, dtaus, values))
}

/// Embed every block of `blocks` from shift `σ`.
pub fn build_interpolation(trace: &Trace, blocks: &[Vec<usize>], sigma: f64) -> Result<Interpolation> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Input(format!("shift {sigma} must be finite and nonnegative")));
    }
    if let Some(&bad) = blocks.iter().flatten().find(|&&j| j >= trace.dim()) {
        return Err(Error::Input(format!("block component {bad} out of range")));
    }
    let seqs: Vec<Sequence> = blocks.iter().map(|b| block_sequence(trace, b)).collect::<Result<_>>()?;
    let span = seqs
        .iter()
        .map(|(t, _, d, _)| t.last().zip(d.last()).map_or(0.0, |(t, d)| t + d))
        .fold(0.0, f64::max);
    if sigma > span {
        return Err(Error::Input(format!("shift {sigma} lies beyond the trace's span {span}")));
    }
    let blocks = blocks
        .iter()
        .zip(&seqs)
        .map(|(b, (times, gammas, dtaus, values))| {
            let start = times.partition_point(|&t| t < sigma);
            BlockInterpolation::from_sequence(b.clone(), times, gammas, dtaus, values, start)
        })
        .collect();
    Ok(Interpolation { sigma, blocks })
}

/// Virtual-time span of the trace: the latest commit time.
pub fn trace_span(trace: &Trace) -> f64 {
    trace.records.iter().map(|r| r.time).fold(0.0, f64::max)
}
