use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Real-valued step-size function `γ(s)` of virtual time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum StepSchedule {
    /// `a (b + s)^{−α}`.
    PowerDecay { a: f64, b: f64, alpha: f64 },
    /// `base · factor^{#{t ∈ times : t ≤ s}}`, right-continuous.
    Dampened { base: f64, factor: f64, times: Vec<f64> },
    Constant { value: f64 },
}

impl StepSchedule {
    pub fn check(&self) -> Result<()> {
        let ok = match self {
            StepSchedule::PowerDecay { a, b, alpha } => *a > 0.0 && *b > 0.0 && alpha.is_finite() && a.is_finite() && b.is_finite(),
            StepSchedule::Dampened { base, factor, times } => {
                *base > 0.0
                    && *factor > 0.0
                    && base.is_finite()
                    && factor.is_finite()
                    && times.iter().all(|t| t.is_finite() && *t >= 0.0)
                    && times.windows(2).all(|w| w[0] <= w[1])
            }
            StepSchedule::Constant { value } => *value > 0.0 && value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Schedule(format!("{self:?} does not give γ(s) > 0 for all s ≥ 0")))
        }
    }

    pub fn value(&self, s: f64) -> f64 {
        match self {
            StepSchedule::PowerDecay { a, b, alpha } => a * (b + s).powf(-alpha),
            StepSchedule::Dampened { base, factor, times } => {
                let hits = times.partition_point(|&t| t <= s);
                base * factor.powi(hits as i32)
            }
            StepSchedule::Constant { value } => *value,
        }
    }

    /// Analytic flag: `∫_0^∞ γ = ∞`.
    pub fn integral_divergent(&self) -> bool {
        match self {
            StepSchedule::PowerDecay { alpha, .. } => *alpha <= 1.0,
            StepSchedule::Dampened { .. } | StepSchedule::Constant { .. } => true,
        }
    }

    /// Analytic flag: `γ(s) → 0`.
    pub fn decays_to_zero(&self) -> bool {
        match self {
            StepSchedule::PowerDecay { alpha, .. } => *alpha > 0.0,
            StepSchedule::Dampened { .. } | StepSchedule::Constant { .. } => false,
        }
    }
}

/// Average of `γ` over `[t, t + dtau]`: the step size of an update that
/// started at local time `t` and took `dtau`.
///
/// Closed form for power decay; a dampened schedule uses its value at the
/// start of the interval, so a dampening applies from the first step whose
/// interval begins at or after the boundary.
pub fn discretize_gamma(s: &StepSchedule, t: f64, dtau: f64) -> f64 {
    match s {
        StepSchedule::PowerDecay { a, b, alpha } => {
            let base = b + t;
            let rel = dtau / base;
            if *alpha == 1.0 {
                a * rel.ln_1p() / dtau
            } else {
                let e = 1.0 - alpha;
                a / e * base.powf(e) * (e * rel.ln_1p()).exp_m1() / dtau
            }
        }
        StepSchedule::Dampened { .. } => s.value(t),
        StepSchedule::Constant { value } => *value,
    }
}

/// Outcome of checking a schedule against the step-size conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleReport {
    pub horizon: f64,
    /// (i) `∫γ = ∞`.
    pub divergent_integral: bool,
    /// (ii) analytic decay flag together with `γ(T_h) < γ(0)`.
    pub decays: bool,
    /// (iii) `sup_{0 ≤ t ≤ √s} |γ(s)/γ(s+t) − 1|` at `s = T_h/4, T_h/2, T_h`.
    pub slow_variation: Vec<(f64, f64)>,
    pub slow_variation_decreasing: bool,
    /// Names of the failed conditions.
    pub failures: Vec<String>,
}

impl ScheduleReport {
    pub fn accepted(&self) -> bool {
        self.failures.is_empty()
    }
}

fn slow_variation_sup(s: &StepSchedule, at: f64) -> f64 {
    const GRID: usize = 256;
    let width = at.sqrt();
    let g = s.value(at);
    (0..=GRID)
        .map(|i| {
            let t = width * i as f64 / GRID as f64;
            (g / s.value(at + t) - 1.0).abs()
        })
        .fold(0.0, f64::max)
}

pub fn validate_schedule(s: &StepSchedule, horizon: f64) -> Result<ScheduleReport> {
    s.check()?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Schedule("validation horizon must be positive".into()));
    }
    let divergent_integral = s.integral_divergent();
    let decays = s.decays_to_zero() && s.value(horizon) < s.value(0.0);
    let slow_variation: Vec<(f64, f64)> = [horizon / 4.0, horizon / 2.0, horizon]
        .iter()
        .map(|&at| (at, slow_variation_sup(s, at)))
        .collect();
    let slow_variation_decreasing = slow_variation.windows(2).all(|w| w[1].1 <= w[0].1);
    let mut failures = Vec::new();
    if !divergent_integral {
        failures.push("(i) finite integral: the step sizes are summable".to_string());
    }
    if !decays {
        failures.push("(ii) no decay: γ(s) does not tend to zero".to_string());
    }
    if !slow_variation_decreasing {
        failures.push("(iii) not slowly varying: the ratio sup over [s, s+√s] is not decreasing".to_string());
    }
    Ok(ScheduleReport {
        horizon,
        divergent_integral,
        decays,
        slow_variation,
        slow_variation_decreasing,
        failures,
    })
}
