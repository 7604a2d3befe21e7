use serde::{Deserialize, Serialize};

use super::{AsyncConfig, Event};
use crate::error::{Error, Result};

/// Default sliding-window length of the update-fraction monitor.
pub const DEFAULT_WINDOW: usize = 1000;

/// Minimum conditioning count before a frequency is judged.
const MIN_CONDITIONING: u64 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlagKind {
    /// The stream breaks a stated bound of the model.
    Hard,
    /// A diagnostic looks unhealthy; not a proof of violation.
    Soft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    pub kind: FlagKind,
    pub message: String,
}

/// Empirical `P(next block = block | previous event's core = prev_core)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassFrequency {
    pub prev_core: usize,
    pub block: usize,
    pub hits: u64,
    pub trials: u64,
    pub frequency: f64,
    /// `p_min − 3·sqrt(p_min(1 − p_min)/trials)`.
    pub floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub events: usize,
    pub max_delay: u32,
    pub delay_violations: usize,
    pub frequencies: Vec<ClassFrequency>,
    pub window: usize,
    /// Per core: overall fraction of updates `ν(c, K)/K`.
    pub update_fraction: Vec<f64>,
    /// Per core: running minimum over sliding windows of the fraction of
    /// updates in the window. This monitors that every core keeps receiving
    /// a non-vanishing share of the updates.
    pub window_fraction_min: Vec<f64>,
    pub flags: Vec<Flag>,
}

impl ModelReport {
    pub fn has_hard_flag(&self) -> bool {
        self.flags.iter().any(|f| f.kind == FlagKind::Hard)
    }
}

/// Check a stream against the declared bounds of `config`.
pub fn validate_model(events: &[Event], config: &AsyncConfig, window: usize) -> Result<ModelReport> {
    if events.is_empty() {
        return Err(Error::Input("event stream is empty".into()));
    }
    let cores = config.cores();
    let blocks = config.partition.blocks().len();
    let mut flags = Vec::new();

    let mut max_delay = 0;
    let mut delay_violations = 0;
    for e in events {
        let worst = e.delays.iter().copied().max().unwrap_or(0);
        max_delay = max_delay.max(worst);
        if worst > config.staleness {
            delay_violations += 1;
        }
    }
    if delay_violations > 0 {
        flags.push(Flag {
            kind: FlagKind::Hard,
            message: format!(
                "{delay_violations} events read with delay above δ = {} (max {max_delay})",
                config.staleness
            ),
        });
    }

    let mut hits = vec![vec![0u64; blocks]; cores];
    let mut trials = vec![0u64; cores];
    for w in events.windows(2) {
        let prev = w[0].core;
        trials[prev] += 1;
        hits[prev][w[1].block] += 1;
    }
    let p = config.p_min;
    let mut frequencies = Vec::new();
    for c in 0..cores {
        for b in 0..blocks {
            let n = trials[c];
            let frequency = if n > 0 { hits[c][b] as f64 / n as f64 } else { f64::NAN };
            let floor = if n > 0 {
                p - 3.0 * (p * (1.0 - p) / n as f64).sqrt()
            } else {
                f64::NAN
            };
            if n >= MIN_CONDITIONING && frequency < floor {
                flags.push(Flag {
                    kind: FlagKind::Hard,
                    message: format!(
                        "block {b} after core {c}: frequency {frequency:.4} below p_min floor {floor:.4} ({n} trials)"
                    ),
                });
            }
            frequencies.push(ClassFrequency {
                prev_core: c,
                block: b,
                hits: hits[c][b],
                trials: n,
                frequency,
                floor,
            });
        }
    }

    let total = events.len();
    let mut counts = vec![0u64; cores];
    for e in events {
        counts[e.core] += 1;
    }
    let update_fraction: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    let window = window.clamp(1, total);
    let mut in_window = vec![0u64; cores];
    for e in &events[..window] {
        in_window[e.core] += 1;
    }
    let mut window_min: Vec<f64> = in_window.iter().map(|&c| c as f64 / window as f64).collect();
    for i in window..total {
        in_window[events[i].core] += 1;
        in_window[events[i - window].core] -= 1;
        for c in 0..cores {
            window_min[c] = window_min[c].min(in_window[c] as f64 / window as f64);
        }
    }
    for c in 0..cores {
        if window_min[c] < 0.25 * update_fraction[c] || update_fraction[c] == 0.0 {
            flags.push(Flag {
                kind: FlagKind::Soft,
                message: format!(
                    "core {c}: update share fell to {:.4} in some {window}-event window (overall {:.4})",
                    window_min[c], update_fraction[c]
                ),
            });
        }
    }

    Ok(ModelReport {
        events: total,
        max_delay,
        delay_violations,
        frequencies,
        window,
        update_fraction,
        window_fraction_min: window_min,
        flags,
    })
}
