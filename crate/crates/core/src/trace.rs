//! Per-iteration run records shared by the simulator, the threaded
//! executor, and the diagnostics.

use serde::{Deserialize, Serialize};

use crate::cell::CellKind;
use crate::engine::Mode;
use crate::error::{Error, Result};

/// Wall-clock measurements of one threaded update, in nanoseconds since
/// the run started.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WallClock {
    pub read_ns: u64,
    pub commit_ns: u64,
    pub lock_acquired_ns: Option<u64>,
    pub lock_released_ns: Option<u64>,
    /// Wall time since this worker's previous commit, in seconds.
    pub elapsed_s: f64,
}

/// One committed update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Commit order.
    pub k: u64,
    pub core: usize,
    pub mode: Mode,
    /// Components written, ascending.
    pub components: Vec<usize>,
    /// Virtual commit time on the core's clock.
    pub time: f64,
    pub dtau: f64,
    /// Core-local step index `ν`.
    pub local_step: u64,
    pub gamma: f64,
    /// Per-component read delays (length `n`).
    pub delays: Vec<u32>,
    pub batch: Vec<usize>,
    /// Block subgradient estimate used.
    pub y: Vec<f64>,
    /// Applied increments on `components`.
    pub delta: Vec<f64>,
    /// Values of `components` right after the commit.
    pub values: Vec<f64>,
    pub flops: u64,
    /// The vector actually read, when it cannot be rebuilt from the delays
    /// (threaded runs, whose delays count missed writes per component).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall: Option<WallClock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub x0: Vec<f64>,
    pub cell: CellKind,
    pub momentum: f64,
    pub staleness: u32,
    pub records: Vec<TraceRecord>,
    pub final_x: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_elapsed_s: Option<f64>,
}

impl Trace {
    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Iterate after each commit: `iterates()[k]` is the state after `k`
    /// commits (index 0 is `x0`). Memory is `O(len · n)`.
    pub fn iterates(&self) -> Vec<Vec<f64>> {
        let mut x = self.x0.clone();
        let mut out = Vec::with_capacity(self.records.len() + 1);
        out.push(x.clone());
        for r in &self.records {
            for (&j, &v) in r.components.iter().zip(&r.values) {
                x[j] = v;
            }
            out.push(x.clone());
        }
        out
    }

    /// Walk the committed states, calling `f(k, x)` after `k` commits.
    pub fn for_each_iterate(&self, mut f: impl FnMut(usize, &[f64])) {
        let mut x = self.x0.clone();
        f(0, &x);
        for (k, r) in self.records.iter().enumerate() {
            for (&j, &v) in r.components.iter().zip(&r.values) {
                x[j] = v;
            }
            f(k + 1, &x);
        }
    }

    /// Stale view read by record `k`, rebuilt from the committed values.
    pub fn views(&self) -> Result<Vec<Vec<f64>>> {
        let mut ring = crate::sched::HistoryRing::new(&self.x0, self.staleness.max(self.max_delay()));
        let mut out = Vec::with_capacity(self.records.len());
        for r in &self.records {
            match &r.view {
                Some(v) => out.push(v.clone()),
                None => out.push(ring.stale_view(&r.delays)?),
            }
            ring.record_commit(&r.components, &r.values)?;
        }
        Ok(out)
    }

    pub fn max_delay(&self) -> u32 {
        self.records.iter().flat_map(|r| r.delays.iter().copied()).max().unwrap_or(0)
    }

    /// Check record shapes; needed before any audit.
    pub fn check_complete(&self) -> Result<()> {
        let n = self.dim();
        if self.final_x.len() != n {
            return Err(Error::Audit("final iterate has the wrong length".into()));
        }
        for r in &self.records {
            let m = r.components.len();
            if r.delta.len() != m || r.values.len() != m || r.y.len() != m || r.delays.len() != n {
                return Err(Error::Audit(format!("record {} is incomplete", r.k)));
            }
            if r.components.iter().any(|&j| j >= n) {
                return Err(Error::Audit(format!("record {} writes outside the vector", r.k)));
            }
        }
        Ok(())
    }
}
