use std::collections::VecDeque;

use crate::error::{check_dim, Error, Result};

/// Recent committed values per component, enough to serve any read with
/// delay at most `staleness`.
///
/// The global counter `k` counts commits. A read at delay `d_j` returns the
/// value component `j` held after commit `k − d_j`; before the history fills
/// that is the initial value.
#[derive(Debug, Clone)]
pub struct HistoryRing {
    staleness: u32,
    counter: u64,
    /// `(iteration at which the value became current, value)`, oldest first.
    history: Vec<VecDeque<(u64, f64)>>,
    versions: Vec<u64>,
}

impl HistoryRing {
    pub fn new(x0: &[f64], staleness: u32) -> Self {
        Self {
            staleness,
            counter: 0,
            history: x0.iter().map(|&v| VecDeque::from([(0, v)])).collect(),
            versions: vec![0; x0.len()],
        }
    }

    pub fn dim(&self) -> usize {
        self.history.len()
    }

    pub fn staleness(&self) -> u32 {
        self.staleness
    }

    /// Commits so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Commits so far to each component.
    pub fn versions(&self) -> &[u64] {
        &self.versions
    }

    pub fn current(&self) -> Vec<f64> {
        self.history.iter().map(|h| h.back().unwrap().1).collect()
    }

    pub fn current_component(&self, j: usize) -> f64 {
        self.history[j].back().unwrap().1
    }

    /// Component `j` as it stood `d` commits ago.
    pub fn stale_component(&self, j: usize, d: u32) -> Result<f64> {
        if d > self.staleness {
            return Err(Error::ModelViolation(format!(
                "read delay {d} on component {j} exceeds the staleness bound {}",
                self.staleness
            )));
        }
        let at = self.counter.saturating_sub(d as u64);
        let h = &self.history[j];
        let idx = h.partition_point(|&(it, _)| it <= at);
        Ok(h[idx - 1].1)
    }

    /// The possibly inconsistent view assembled with per-component delays.
    pub fn stale_view(&self, delays: &[u32]) -> Result<Vec<f64>> {
        check_dim(self.dim(), delays.len())?;
        delays
            .iter()
            .enumerate()
            .map(|(j, &d)| self.stale_component(j, d))
            .collect()
    }

    /// Write `values` to the components in `block` and advance the counter.
    pub fn record_commit(&mut self, block: &[usize], values: &[f64]) -> Result<()> {
        check_dim(block.len(), values.len())?;
        if let Some(&bad) = block.iter().find(|&&j| j >= self.dim()) {
            return Err(Error::Input(format!("commit to component {bad} out of range")));
        }
        self.counter += 1;
        let now = self.counter;
        let keep_from = now.saturating_sub(self.staleness as u64);
        for (&j, &v) in block.iter().zip(values) {
            let h = &mut self.history[j];
            h.push_back((now, v));
            self.versions[j] += 1;
            while h.len() >= 2 && h[1].0 <= keep_from {
                h.pop_front();
            }
        }
        Ok(())
    }
}
