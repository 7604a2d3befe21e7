use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Update discipline for one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Every core updates the full vector.
    Assm,
    /// Each core updates only its own blocks.
    Passm,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Assm => "assm",
            Mode::Passm => "passm",
        }
    }
}

/// Per-epoch mode sequence with learning-rate multipliers at each
/// full-to-partitioned switch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModePlan {
    pub total_epochs: u32,
    /// Mode of each epoch.
    pub modes: Vec<Mode>,
    /// Epochs at which the mode changes.
    pub switch_epochs: Vec<u32>,
    /// `(epoch, factor)` applied at each full-to-partitioned switch.
    pub multipliers: Vec<(u32, f64)>,
}

impl ModePlan {
    pub fn constant(mode: Mode) -> Self {
        Self {
            total_epochs: 1,
            modes: vec![mode],
            switch_epochs: Vec::new(),
            multipliers: Vec::new(),
        }
    }

    /// Alternate modes starting with the full-vector mode, switching at the
    /// given epochs; the rate is scaled by `1 − 1/c` at every switch into
    /// the partitioned mode.
    pub fn from_switch_epochs(total_epochs: u32, switches: &[u32], c: usize) -> Result<Self> {
        if c < 2 {
            return Err(Error::Config(format!(
                "interleaved plan needs at least two processes (multiplier 1 − 1/{c} = {})",
                1.0 - 1.0 / c.max(1) as f64
            )));
        }
        if total_epochs == 0 {
            return Err(Error::Config("plan needs at least one epoch".into()));
        }
        if switches.windows(2).any(|w| w[0] >= w[1]) || switches.iter().any(|&s| s == 0 || s >= total_epochs) {
            return Err(Error::Config("switch epochs must increase strictly inside (0, total)".into()));
        }
        let factor = 1.0 - 1.0 / c as f64;
        let mut modes = Vec::with_capacity(total_epochs as usize);
        let mut multipliers = Vec::new();
        let mut mode = Mode::Assm;
        let mut next = switches.iter().peekable();
        for e in 0..total_epochs {
            if next.peek() == Some(&&e) {
                next.next();
                mode = match mode {
                    Mode::Assm => {
                        multipliers.push((e, factor));
                        Mode::Passm
                    }
                    Mode::Passm => Mode::Assm,
                };
            }
            modes.push(mode);
        }
        Ok(Self {
            total_epochs,
            modes,
            switch_epochs: switches.to_vec(),
            multipliers,
        })
    }

    pub fn mode_of_epoch(&self, epoch: u32) -> Mode {
        self.modes[(epoch as usize).min(self.modes.len() - 1)]
    }

    /// Epoch of global iteration `k` in a run of `budget` iterations.
    pub fn epoch_of(&self, k: u64, budget: u64) -> u32 {
        if budget == 0 {
            return 0;
        }
        ((k as u128 * self.total_epochs as u128) / budget as u128) as u32
    }

    pub fn mode_at(&self, k: u64, budget: u64) -> Mode {
        self.mode_of_epoch(self.epoch_of(k, budget))
    }

    /// Product of the multipliers applied at or before `epoch`.
    pub fn multiplier_of_epoch(&self, epoch: u32) -> f64 {
        self.multipliers
            .iter()
            .filter(|(e, _)| *e <= epoch)
            .map(|(_, f)| f)
            .product()
    }

    pub fn multiplier_at(&self, k: u64, budget: u64) -> f64 {
        self.multiplier_of_epoch(self.epoch_of(k, budget))
    }

    pub fn assm_fraction(&self) -> f64 {
        self.modes.iter().filter(|&&m| m == Mode::Assm).count() as f64 / self.modes.len() as f64
    }
}

/// Interleaved plan: full-vector updates until half-way to the first
/// dampening epoch, then partitioned updates except for windows of 10% of
/// the epochs centred on each dampening epoch (overlapping windows merge).
pub fn passm_plus_plan(total_epochs: u32, dampen_epochs: &[u32], c: usize) -> Result<ModePlan> {
    if dampen_epochs.is_empty() {
        return Err(Error::Config("interleaved plan needs at least one dampening epoch".into()));
    }
    if dampen_epochs.iter().any(|&d| d == 0 || d >= total_epochs) {
        return Err(Error::Config("dampening epochs must lie inside (0, total)".into()));
    }
    let mut dampen = dampen_epochs.to_vec();
    dampen.sort_unstable();
    dampen.dedup();
    let half = total_epochs as f64 * 0.05;
    let mut assm = vec![false; total_epochs as usize];
    let initial = dampen[0] / 2;
    for e in 0..initial {
        assm[e as usize] = true;
    }
    for &d in &dampen {
        let lo = (d as f64 - half).round().max(0.0) as u32;
        let hi = ((d as f64 + half).round() as u32).min(total_epochs);
        for e in lo..hi {
            assm[e as usize] = true;
        }
    }
    let switches: Vec<u32> = (1..total_epochs)
        .filter(|&e| assm[e as usize] != assm[e as usize - 1])
        .collect();
    if !assm[0] {
        return Err(Error::Config("first dampening epoch too early for an initial full-vector phase".into()));
    }
    ModePlan::from_switch_epochs(total_epochs, &switches, c)
}
