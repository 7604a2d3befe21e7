use super::{SampleSet, SelectionRule};
use crate::error::{Error, Result};

/// `f(x) = (1/M) Σ_j |x − a_j|` on the real line.
#[derive(Debug, Clone, PartialEq)]
pub struct Median {
    values: Vec<f64>,
    pub selection: SelectionRule,
    pub gap_radius: f64,
}

impl Median {
    pub const DEFAULT_GAP_RADIUS: f64 = 1e-3;

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Input("median problem needs at least one value".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("median values must be finite".into()));
        }
        Ok(Self {
            values,
            selection: SelectionRule::default(),
            gap_radius: Self::DEFAULT_GAP_RADIUS,
        })
    }

    /// Uses the first target column of each sample.
    pub fn from_samples(set: &SampleSet) -> Result<Self> {
        let values = set
            .iter()
            .map(|s| {
                s.target
                    .first()
                    .copied()
                    .ok_or_else(|| Error::Input("median sample without a target".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn num_samples(&self) -> usize {
        self.values.len()
    }

    /// A minimizer: the lower middle order statistic.
    pub fn median(&self) -> f64 {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        v[(v.len() - 1) / 2]
    }

    pub fn bounding_interval(&self) -> (f64, f64) {
        let lo = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo - 10.0, hi + 10.0)
    }

    pub fn default_x0(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.values.iter().map(|a| (x - a).abs()).sum::<f64>() / self.values.len() as f64
    }

    pub fn sample_subgrad(&self, x: f64, j: usize) -> f64 {
        self.selection.sign(x - self.values[j])
    }

    pub fn kink_samples(&self, x: f64) -> Vec<usize> {
        (0..self.values.len()).filter(|&j| x == self.values[j]).collect()
    }

    /// Distance from 0 to the interval of subgradients within `gap_radius`.
    pub fn gap(&self, x: f64) -> f64 {
        let (mut lo, mut hi) = (0.0_f64, 0.0_f64);
        for &a in &self.values {
            let t = x - a;
            if t.abs() <= self.gap_radius {
                lo -= 1.0;
                hi += 1.0;
            } else if t > 0.0 {
                lo += 1.0;
                hi += 1.0;
            } else {
                lo -= 1.0;
                hi -= 1.0;
            }
        }
        let m = self.values.len() as f64;
        if lo <= 0.0 && hi >= 0.0 {
            0.0
        } else {
            lo.abs().min(hi.abs()) / m
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abc() -> Median {
        let mut m = Median::new(vec![0.0, 1.0, 5.0]).unwrap();
        m.gap_radius = 0.0;
        m
    }

    #[test]
    fn eval_and_gap_examples() {
        let m = abc();
        assert!((m.eval(1.0) - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.gap(1.0), 0.0);
        assert!((m.gap(2.0) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.gap(100.0), 1.0);
        assert_eq!(m.median(), 1.0);
    }

    #[test]
    fn kinks_are_data_points() {
        let m = abc();
        assert_eq!(m.kink_samples(5.0), vec![2]);
        assert!(m.kink_samples(0.5).is_empty());
    }

    #[test]
    fn radius_widens_the_interval() {
        let mut m = abc();
        assert!(m.gap(1.0005) > 0.0);
        m.gap_radius = 1e-3;
        assert_eq!(m.gap(1.0005), 0.0);
    }
}
