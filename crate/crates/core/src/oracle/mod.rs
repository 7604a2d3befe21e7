//! Problem zoo: nonsmooth objectives with deterministic subgradient
//! selections, minibatch and block-restricted estimators, and stationarity
//! gap oracles.

mod data;
mod dc2d;
mod median;
pub mod minnorm;
mod mlp;
mod partition;
mod pwa2d;
mod spec;

pub use data::{Sample, SampleSet};
pub use dc2d::{Affine2, Dc2d};
pub use median::Median;
pub use mlp::ReluMlp;
pub use partition::BlockPartition;
pub use spec::ProblemSpec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Tolerance for the min-norm-point iterations.
pub const MIN_NORM_TOL: f64 = 1e-10;

/// Which element of the subdifferential is returned at a kink.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionRule {
    /// Derivative of `|t|` at `t = 0`, in `[-1, 1]`.
    pub abs_at_kink: f64,
    /// Derivative of `max(0, t)` at `t = 0`, in `[0, 1]`.
    pub relu_at_kink: f64,
    /// At a tie between affine pieces of a max, average the tied gradients
    /// (`true`) or take the lowest-indexed one.
    pub average_ties: bool,
}

impl Default for SelectionRule {
    fn default() -> Self {
        Self {
            abs_at_kink: 0.0,
            relu_at_kink: 0.0,
            average_ties: true,
        }
    }
}

impl SelectionRule {
    /// The subdifferential midpoints: the bias reference for each primitive.
    pub fn midpoint() -> Self {
        Self {
            abs_at_kink: 0.0,
            relu_at_kink: 0.5,
            average_ties: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.abs_at_kink) {
            return Err(Error::Input("abs selection must lie in [-1, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.relu_at_kink) {
            return Err(Error::Input("relu selection must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub(crate) fn sign(&self, t: f64) -> f64 {
        if t > 0.0 {
            1.0
        } else if t < 0.0 {
            -1.0
        } else {
            self.abs_at_kink
        }
    }

    pub(crate) fn relu_slope(&self, t: f64) -> f64 {
        if t > 0.0 {
            1.0
        } else if t < 0.0 {
            0.0
        } else {
            self.relu_at_kink
        }
    }
}

/// How a stationarity gap is computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GapMethod {
    /// Active-piece enumeration; piecewise-affine problems only.
    Exact,
    /// Goldstein-style: min-norm point of subgradients sampled uniformly in a
    /// ball of the given radius around `x`.
    Sampled { radius: f64, samples: usize, seed: u64 },
}

/// A zoo problem `f(x) = (1/M) Σ_j f_j(x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    Median(Median),
    Dc2d(Dc2d),
    ReluMlp(ReluMlp),
}

impl From<Median> for Problem {
    fn from(p: Median) -> Self {
        Problem::Median(p)
    }
}

impl From<Dc2d> for Problem {
    fn from(p: Dc2d) -> Self {
        Problem::Dc2d(p)
    }
}

impl From<ReluMlp> for Problem {
    fn from(p: ReluMlp) -> Self {
        Problem::ReluMlp(p)
    }
}

impl Problem {
    pub fn id(&self) -> &'static str {
        match self {
            Problem::Median(_) => "median",
            Problem::Dc2d(_) => "dc2d",
            Problem::ReluMlp(_) => "relu-mlp",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Problem::Median(_) => 1,
            Problem::Dc2d(_) => 2,
            Problem::ReluMlp(p) => p.num_params(),
        }
    }

    pub fn num_samples(&self) -> usize {
        match self {
            Problem::Median(p) => p.num_samples(),
            Problem::Dc2d(p) => p.num_samples(),
            Problem::ReluMlp(p) => p.num_samples(),
        }
    }

    pub fn selection(&self) -> SelectionRule {
        match self {
            Problem::Median(p) => p.selection,
            Problem::Dc2d(p) => p.selection,
            Problem::ReluMlp(p) => p.selection,
        }
    }

    pub fn with_selection(&self, rule: SelectionRule) -> Problem {
        let mut out = self.clone();
        match &mut out {
            Problem::Median(p) => p.selection = rule,
            Problem::Dc2d(p) => p.selection = rule,
            Problem::ReluMlp(p) => p.selection = rule,
        }
        out
    }

    /// Goldstein radius used by the exact gap oracle (0 means the Clarke
    /// subdifferential itself).
    pub fn gap_radius(&self) -> f64 {
        match self {
            Problem::Median(p) => p.gap_radius,
            Problem::Dc2d(p) => p.gap_radius,
            Problem::ReluMlp(_) => 0.0,
        }
    }

    pub fn with_gap_radius(&self, radius: f64) -> Problem {
        let mut out = self.clone();
        match &mut out {
            Problem::Median(p) => p.gap_radius = radius,
            Problem::Dc2d(p) => p.gap_radius = radius,
            Problem::ReluMlp(_) => {}
        }
        out
    }

    /// Declared bound `B_g` on every sample subgradient inside
    /// [`Problem::bounding_box`].
    pub fn grad_bound(&self) -> f64 {
        match self {
            Problem::Median(_) => 1.0,
            Problem::Dc2d(p) => p.grad_bound(),
            Problem::ReluMlp(p) => p.grad_bound(),
        }
    }

    /// Compact box on which [`Problem::grad_bound`] holds.
    pub fn bounding_box(&self) -> Vec<(f64, f64)> {
        match self {
            Problem::Median(p) => vec![p.bounding_interval()],
            Problem::Dc2d(_) => vec![(-10.0, 10.0); 2],
            Problem::ReluMlp(p) => vec![(-p.param_box(), p.param_box()); p.num_params()],
        }
    }

    /// The problem's natural coordinate blocks (layers for the MLP).
    pub fn natural_blocks(&self) -> Vec<Vec<usize>> {
        match self {
            Problem::Median(_) => vec![vec![0]],
            Problem::Dc2d(_) => vec![vec![0], vec![1]],
            Problem::ReluMlp(p) => p.layer_blocks(),
        }
    }

    pub fn default_x0(&self) -> Vec<f64> {
        match self {
            Problem::Median(p) => vec![p.default_x0()],
            Problem::Dc2d(p) => p.default_x0().to_vec(),
            Problem::ReluMlp(p) => p.default_x0(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(match self {
            Problem::Median(p) => p.eval(x[0]),
            Problem::Dc2d(p) => p.eval([x[0], x[1]]),
            Problem::ReluMlp(p) => p.eval(x),
        })
    }

    pub fn sample_subgrad(&self, x: &[f64], j: usize) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        self.check_sample(j)?;
        Ok(match self {
            Problem::Median(p) => vec![p.sample_subgrad(x[0], j)],
            Problem::Dc2d(p) => p.sample_subgrad([x[0], x[1]], j).to_vec(),
            Problem::ReluMlp(p) => p.sample_grad(x, j, 0).0,
        })
    }

    /// `(1/|ξ|) Σ_{j∈ξ} g^j(x)`.
    pub fn minibatch_subgrad(&self, x: &[f64], batch: &[usize]) -> Result<Vec<f64>> {
        let all: Vec<usize> = (0..self.dim()).collect();
        let (g, _) = self.block_subgrad_inner(x, batch, &all)?;
        Ok(g)
    }

    /// Block-restricted minibatch subgradient: the components listed in
    /// `block` (in that order) and the flop count of the restricted reverse
    /// pass.
    pub fn block_subgrad(&self, x: &[f64], batch: &[usize], block: &[usize]) -> Result<(Vec<f64>, u64)> {
        if block.is_empty() {
            return Err(Error::Input("block must be nonempty".into()));
        }
        if let Some(&bad) = block.iter().find(|&&j| j >= self.dim()) {
            return Err(Error::Input(format!("block component {bad} out of range")));
        }
        let (full, flops) = self.block_subgrad_inner(x, batch, block)?;
        if block.len() == self.dim() && block.iter().enumerate().all(|(i, &j)| i == j) {
            return Ok((full, flops));
        }
        Ok((block.iter().map(|&j| full[j]).collect(), flops))
    }

    /// Full-length accumulated subgradient where only the components needed
    /// for `block` are guaranteed computed.
    fn block_subgrad_inner(&self, x: &[f64], batch: &[usize], block: &[usize]) -> Result<(Vec<f64>, u64)> {
        check_dim(self.dim(), x.len())?;
        if batch.is_empty() {
            return Err(Error::Input("minibatch must be nonempty".into()));
        }
        for &j in batch {
            self.check_sample(j)?;
        }
        let n = self.dim();
        let mut acc = vec![0.0; n];
        let mut flops = 0u64;
        match self {
            Problem::Median(p) => {
                for &j in batch {
                    acc[0] += p.sample_subgrad(x[0], j);
                }
                flops = (batch.len() * block.len()) as u64;
            }
            Problem::Dc2d(p) => {
                for &j in batch {
                    let g = p.sample_subgrad([x[0], x[1]], j);
                    acc[0] += g[0];
                    acc[1] += g[1];
                }
                flops = (batch.len() * block.len()) as u64;
            }
            Problem::ReluMlp(p) => {
                let stop = p.lowest_layer(block);
                for &j in batch {
                    let (g, f) = p.sample_grad(x, j, stop);
                    for (a, v) in acc.iter_mut().zip(&g) {
                        *a += v;
                    }
                    flops += f;
                }
            }
        }
        let b = batch.len() as f64;
        acc.iter_mut().for_each(|a| *a /= b);
        Ok((acc, flops))
    }

    /// Samples `j` whose `f_j` is nondifferentiable at `x`.
    pub fn kink_samples(&self, x: &[f64]) -> Result<Vec<usize>> {
        check_dim(self.dim(), x.len())?;
        Ok(match self {
            Problem::Median(p) => p.kink_samples(x[0]),
            Problem::Dc2d(p) => p.kink_samples([x[0], x[1]]),
            Problem::ReluMlp(p) => p.kink_samples(x),
        })
    }

    /// `dist(0, ∂f(x))`.
    pub fn clarke_gap(&self, x: &[f64], method: GapMethod) -> Result<f64> {
        let all: Vec<usize> = (0..self.dim()).collect();
        self.block_gap(x, &all, method)
    }

    /// `dist(0, π_block ∂f(x))`: min-norm over the coordinate projection of
    /// the subdifferential onto `block`.
    pub fn block_gap(&self, x: &[f64], block: &[usize], method: GapMethod) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        if block.is_empty() {
            return Err(Error::Input("block must be nonempty".into()));
        }
        if let Some(&bad) = block.iter().find(|&&j| j >= self.dim()) {
            return Err(Error::Input(format!("block component {bad} out of range")));
        }
        match method {
            GapMethod::Exact => match self {
                Problem::Median(p) => Ok(p.gap(x[0])),
                Problem::Dc2d(p) => Ok(p.block_gap([x[0], x[1]], block)),
                Problem::ReluMlp(_) => Err(Error::Unsupported(
                    "relu-mlp has no exact gap oracle; request the sampled fallback".into(),
                )),
            },
            GapMethod::Sampled { radius, samples, seed } => {
                let pts = self.sampled_subgradients(x, radius, samples, seed)?;
                Ok(minnorm::min_norm_projected(&pts, block, MIN_NORM_TOL))
            }
        }
    }

    fn sampled_subgradients(&self, x: &[f64], radius: f64, samples: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        if radius.is_nan() || radius < 0.0 || samples == 0 {
            return Err(Error::Input("sampled gap needs radius >= 0 and at least one sample".into()));
        }
        let all: Vec<usize> = (0..self.num_samples()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.dim();
        let mut pts = vec![self.minibatch_subgrad(x, &all)?];
        for _ in 0..samples {
            // uniform in the ball: gaussian direction, radius ∝ U^{1/n}
            let dir: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
            let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            let r = radius * rng.gen::<f64>().powf(1.0 / n as f64);
            let y: Vec<f64> = x.iter().zip(&dir).map(|(xi, d)| xi + r * d / norm).collect();
            pts.push(self.minibatch_subgrad(&y, &all)?);
        }
        Ok(pts)
    }

    fn check_sample(&self, j: usize) -> Result<()> {
        if j >= self.num_samples() {
            Err(Error::Input(format!(
                "sample index {j} out of range (M = {})",
                self.num_samples()
            )))
        } else {
            Ok(())
        }
    }
}

pub(crate) fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Restricted-backprop savings for `c` processes sharing a reverse pass of
/// `flops` floating point operations, partitioned input-to-output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlopSavings {
    pub per_process: Vec<u64>,
    pub total: u64,
}

/// `c` layer partitions: process `k` (0 = input side) saves `k·F/c`, summing
/// to `F(c−1)/2`.
pub fn flops_saved(flops: u64, c: u64) -> Result<FlopSavings> {
    if c == 0 || flops < c {
        return Err(Error::Input("flops_saved needs c >= 1 and F >= c".into()));
    }
    let per_process: Vec<u64> = (0..c).map(|k| k * flops / c).collect();
    let total = flops * (c - 1) / 2;
    Ok(FlopSavings { per_process, total })
}

/// The main-text variant of the average saving, `F(c−1)(c−2)/c`, reported
/// next to the layered accounting for comparison.
pub fn flops_saved_main_text(flops: u64, c: u64) -> f64 {
    let (f, c) = (flops as f64, c as f64);
    f * (c - 1.0) * (c - 2.0) / c
}
