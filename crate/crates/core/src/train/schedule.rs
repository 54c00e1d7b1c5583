use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Schedule {
    /// Linear decay from `peak` to zero over the run.
    Linear { peak: f64 },
    /// Inverse square-root decay after a linear warmup, scaled by
    /// `d_model^-0.5`.
    Warmup { warmup_steps: usize },
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Schedule::Linear { peak } if !(peak > 0.0 && peak.is_finite()) => {
                Err(Error::config(format!("peak learning rate {peak} must be positive")))
            }
            Schedule::Warmup { warmup_steps: 0 } => Err(Error::config("warmup_steps must be at least 1")),
            _ => Ok(()),
        }
    }
}

/// Learning rate at `step` of a `total_steps` run.
///
/// `Linear`: `peak * max(0, 1 - step / total_steps)`, so step 0 gets the
/// peak. `Warmup`: `d_model^-0.5 * min(step^-0.5, step * warmup^-1.5)` with
/// `step` taken as at least 1.
pub fn schedule_lr(schedule: &Schedule, step: usize, total_steps: usize, d_model: usize) -> f64 {
    match *schedule {
        Schedule::Linear { peak } => {
            if total_steps == 0 {
                return peak;
            }
            peak * (1.0 - step as f64 / total_steps as f64).max(0.0)
        }
        Schedule::Warmup { warmup_steps } => {
            let s = step.max(1) as f64;
            let w = warmup_steps.max(1) as f64;
            (d_model as f64).powf(-0.5) * s.powf(-0.5).min(s * w.powf(-1.5))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_peaks_at_boundary() {
        let s = Schedule::Warmup { warmup_steps: 4000 };
        let peak = 512f64.powf(-0.5) * 4000f64.powf(-0.5);
        assert!((schedule_lr(&s, 4000, 0, 512) - peak).abs() < 1e-15);
        assert!(schedule_lr(&s, 1, 0, 512) < schedule_lr(&s, 2, 0, 512));
        assert!(schedule_lr(&s, 4001, 0, 512) < peak);
        // continuous at the boundary
        assert!((schedule_lr(&s, 3999, 0, 512) - peak).abs() < peak * 1e-3);
    }

    #[test]
    fn linear_decays_to_zero() {
        let s = Schedule::Linear { peak: 3e-4 };
        assert_eq!(schedule_lr(&s, 0, 100, 288), 3e-4);
        assert!((schedule_lr(&s, 50, 100, 288) - 1.5e-4).abs() < 1e-18);
        assert_eq!(schedule_lr(&s, 150, 100, 288), 0.0);
    }

    #[test]
    fn invalid_schedules() {
        assert!(Schedule::Warmup { warmup_steps: 0 }.validate().is_err());
        assert!(Schedule::Linear { peak: 0.0 }.validate().is_err());
    }
}
