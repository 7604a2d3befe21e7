use serde::{Deserialize, Serialize};

use super::minnorm::min_norm_projected;
use super::pwa2d::{probe_points, Line};
use super::{SelectionRule, MIN_NORM_TOL};
use crate::error::{Error, Result};

/// `y ↦ slope·y + offset` on the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine2 {
    pub slope: [f64; 2],
    pub offset: f64,
}

impl Affine2 {
    pub const fn new(s1: f64, s2: f64, offset: f64) -> Self {
        Self {
            slope: [s1, s2],
            offset,
        }
    }

    fn at(&self, y: [f64; 2]) -> f64 {
        self.slope[0] * y[0] + self.slope[1] * y[1] + self.offset
    }
}

/// Difference of two maxima of affine pieces on the plane, averaged over
/// per-sample shifts: `f_j(x) = max_i p_i(x − s_j) − max_k q_k(x − s_j)`.
/// An empty concave part is read as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Dc2d {
    top: Vec<Affine2>,
    bottom: Vec<Affine2>,
    shifts: Vec<[f64; 2]>,
    start: [f64; 2],
    pub selection: SelectionRule,
    pub gap_radius: f64,
}

impl Dc2d {
    pub const DEFAULT_GAP_RADIUS: f64 = 1e-3;

    pub fn new(top: Vec<Affine2>, bottom: Vec<Affine2>, shifts: Vec<[f64; 2]>) -> Result<Self> {
        if top.is_empty() {
            return Err(Error::Input("dc2d needs at least one convex piece".into()));
        }
        let shifts = if shifts.is_empty() { vec![[0.0, 0.0]] } else { shifts };
        let finite = top
            .iter()
            .chain(&bottom)
            .all(|p| p.slope.iter().all(|v| v.is_finite()) && p.offset.is_finite())
            && shifts.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Input("dc2d coefficients must be finite".into()));
        }
        Ok(Self {
            top,
            bottom,
            shifts,
            start: [0.0, 0.0],
            selection: SelectionRule::default(),
            gap_radius: Self::DEFAULT_GAP_RADIUS,
        })
    }

    pub fn with_start(mut self, start: [f64; 2]) -> Self {
        self.start = start;
        self
    }

    /// The shipped instance separating the two stationarity notions:
    /// `max(x1 − 2x2, x2 − 2x1, x1 + x2 − 3) − max(0, x1 + x2 − 8)`.
    ///
    /// Minimizer `(1, 1)`. The diagonal `x1 = x2 < 1` is a kink on which
    /// each coordinate is individually minimal (block gaps 0) while the
    /// full subdifferential `conv{(1,−2), (−2,1)}` stays `√0.5` away from 0.
    pub fn separating_instance() -> Self {
        Self::new(
            vec![
                Affine2::new(1.0, -2.0, 0.0),
                Affine2::new(-2.0, 1.0, 0.0),
                Affine2::new(1.0, 1.0, -3.0),
            ],
            vec![Affine2::new(0.0, 0.0, 0.0), Affine2::new(1.0, 1.0, -8.0)],
            vec![],
        )
        .expect("shipped instance is valid")
        .with_start([-1.0, -1.5])
    }

    pub fn top(&self) -> &[Affine2] {
        &self.top
    }

    pub fn bottom(&self) -> &[Affine2] {
        &self.bottom
    }

    pub fn shifts(&self) -> &[[f64; 2]] {
        &self.shifts
    }

    pub fn num_samples(&self) -> usize {
        self.shifts.len()
    }

    pub fn default_x0(&self) -> [f64; 2] {
        self.start
    }

    /// `max_{i,k} ‖p_i' − q_k'‖` bounds every selected sample subgradient.
    pub fn grad_bound(&self) -> f64 {
        let zero = [Affine2::new(0.0, 0.0, 0.0)];
        let bottom: &[Affine2] = if self.bottom.is_empty() { &zero } else { &self.bottom };
        let mut best: f64 = 0.0;
        for p in &self.top {
            for q in bottom {
                best = best.max((p.slope[0] - q.slope[0]).hypot(p.slope[1] - q.slope[1]));
            }
        }
        best.max(f64::MIN_POSITIVE)
    }

    fn max_part(pieces: &[Affine2], y: [f64; 2]) -> f64 {
        pieces.iter().map(|p| p.at(y)).fold(f64::NEG_INFINITY, f64::max)
    }

    fn sample_point(&self, x: [f64; 2], j: usize) -> [f64; 2] {
        [x[0] - self.shifts[j][0], x[1] - self.shifts[j][1]]
    }

    pub fn eval_sample(&self, x: [f64; 2], j: usize) -> f64 {
        let y = self.sample_point(x, j);
        let bottom = if self.bottom.is_empty() {
            0.0
        } else {
            Self::max_part(&self.bottom, y)
        };
        Self::max_part(&self.top, y) - bottom
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        (0..self.num_samples()).map(|j| self.eval_sample(x, j)).sum::<f64>() / self.num_samples() as f64
    }

    /// Selected gradient of a max of affine pieces.
    fn select(&self, pieces: &[Affine2], y: [f64; 2]) -> [f64; 2] {
        if pieces.is_empty() {
            return [0.0, 0.0];
        }
        let best = Self::max_part(pieces, y);
        let tied: Vec<&Affine2> = pieces.iter().filter(|p| p.at(y) == best).collect();
        if self.selection.average_ties {
            let k = tied.len() as f64;
            let s0 = tied.iter().map(|p| p.slope[0]).sum::<f64>() / k;
            let s1 = tied.iter().map(|p| p.slope[1]).sum::<f64>() / k;
            [s0, s1]
        } else {
            tied[0].slope
        }
    }

    pub fn sample_subgrad(&self, x: [f64; 2], j: usize) -> [f64; 2] {
        let y = self.sample_point(x, j);
        let p = self.select(&self.top, y);
        let q = self.select(&self.bottom, y);
        [p[0] - q[0], p[1] - q[1]]
    }

    fn has_kink(pieces: &[Affine2], y: [f64; 2]) -> bool {
        if pieces.len() < 2 {
            return false;
        }
        let best = Self::max_part(pieces, y);
        let tied: Vec<&Affine2> = pieces.iter().filter(|p| p.at(y) == best).collect();
        tied.windows(2).any(|w| w[0].slope != w[1].slope)
    }

    pub fn kink_samples(&self, x: [f64; 2]) -> Vec<usize> {
        (0..self.num_samples())
            .filter(|&j| {
                let y = self.sample_point(x, j);
                Self::has_kink(&self.top, y) || Self::has_kink(&self.bottom, y)
            })
            .collect()
    }

    /// Every pairwise tie line of either part, for every sample shift.
    fn tie_lines(&self) -> Vec<Line> {
        let mut lines = Vec::new();
        for s in &self.shifts {
            for part in [&self.top, &self.bottom] {
                for (a, p) in part.iter().enumerate() {
                    for q in &part[a + 1..] {
                        let n = [p.slope[0] - q.slope[0], p.slope[1] - q.slope[1]];
                        let c = n[0] * s[0] + n[1] * s[1] - (p.offset - q.offset);
                        lines.extend(Line::new(n, c));
                    }
                }
            }
        }
        lines
    }

    /// Full-batch gradients attained within `gap_radius` of `x` (at least
    /// a `1e-9` relative disc, so points exactly on a kink see both sides).
    pub fn nearby_gradients(&self, x: [f64; 2]) -> Vec<Vec<f64>> {
        let r = self.gap_radius.max(1e-9 * (1.0 + x[0].abs().max(x[1].abs())));
        let m = self.num_samples() as f64;
        let mut grads: Vec<Vec<f64>> = Vec::new();
        for p in probe_points(x, r, &self.tie_lines()) {
            let mut g = [0.0, 0.0];
            for j in 0..self.num_samples() {
                let gj = self.sample_subgrad(p, j);
                g[0] += gj[0];
                g[1] += gj[1];
            }
            let g = vec![g[0] / m, g[1] / m];
            if !grads.contains(&g) {
                grads.push(g);
            }
        }
        grads
    }

    pub fn block_gap(&self, x: [f64; 2], block: &[usize]) -> f64 {
        min_norm_projected(&self.nearby_gradients(x), block, MIN_NORM_TOL)
    }
}
