//! Numeric cell arithmetic shared by the simulator and the threaded
//! executor.

use serde::{Deserialize, Serialize};

/// Fixed-point scale: one unit is `2^−32`.
pub const FIXED_SCALE: f64 = 4_294_967_296.0;

/// How committed values are represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    /// Plain `f64`; the commit is `x + delta`.
    Float,
    /// Signed 64-bit fixed point at scale `2^−32`, updated by integer
    /// addition, so concurrent adds commute exactly.
    Fixed,
}

pub fn to_fixed(v: f64) -> i64 {
    (v * FIXED_SCALE).round() as i64
}

pub fn from_fixed(q: i64) -> f64 {
    q as f64 / FIXED_SCALE
}

impl CellKind {
    /// A value as the cell stores it.
    pub fn quantize(self, v: f64) -> f64 {
        match self {
            CellKind::Float => v,
            CellKind::Fixed => from_fixed(to_fixed(v)),
        }
    }

    /// `(applied delta, new value)` for adding `delta` to the stored `current`.
    pub fn add(self, current: f64, delta: f64) -> (f64, f64) {
        match self {
            CellKind::Float => (delta, current + delta),
            CellKind::Fixed => {
                let d = to_fixed(delta);
                (from_fixed(d), from_fixed(to_fixed(current) + d))
            }
        }
    }
}
