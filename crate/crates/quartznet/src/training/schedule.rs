//! Linear warmup followed by cosine annealing.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct ScheduleConfig {
    pub lr_max: f64,
    pub lr_min: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup_steps >= self.total_steps {
            return Err(Error::Config(format!(
                "warmup_steps {} must be below total_steps {}",
                self.warmup_steps, self.total_steps
            )));
        }
        if self.lr_max < self.lr_min || self.lr_max < 0.0 {
            return Err(Error::Config("need lr_max >= lr_min >= 0".into()));
        }
        Ok(())
    }
}

/// Learning rate at `step`:
/// * warmup: `lr_max * step / warmup_steps`
/// * then: `lr_min + 0.5 (lr_max - lr_min) (1 + cos(pi * progress))`
///
/// Steps past `total_steps` stay at `lr_min`.
pub fn lr_at(step: usize, sc: &ScheduleConfig) -> f64 {
    if step < sc.warmup_steps {
        return sc.lr_max * step as f64 / sc.warmup_steps as f64;
    }
    let step = step.min(sc.total_steps);
    let span = (sc.total_steps - sc.warmup_steps) as f64;
    let progress = (step - sc.warmup_steps) as f64 / span;
    sc.lr_min + 0.5 * (sc.lr_max - sc.lr_min) * (1.0 + (std::f64::consts::PI * progress).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sc() -> ScheduleConfig {
        ScheduleConfig {
            lr_max: 0.05,
            lr_min: 0.001,
            warmup_steps: 100,
            total_steps: 1000,
        }
    }

    #[test]
    fn endpoints_are_exact() {
        let sc = sc();
        assert_eq!(lr_at(0, &sc), 0.0);
        assert_eq!(lr_at(100, &sc), 0.05);
        assert!((lr_at(1000, &sc) - 0.001).abs() < 1e-15);
    }

    #[test]
    fn continuous_at_warmup_and_non_increasing_after() {
        let sc = sc();
        let just_before = lr_at(99, &sc);
        let at = lr_at(100, &sc);
        assert!((at - just_before) < 0.05 / 100.0 + 1e-12);
        let mut prev = at;
        for step in 101..=1000 {
            let lr = lr_at(step, &sc);
            assert!(lr <= prev + 1e-15, "step {step}: {lr} > {prev}");
            prev = lr;
        }
    }

    #[test]
    fn clamps_past_the_horizon() {
        let sc = sc();
        assert_eq!(lr_at(5000, &sc), lr_at(1000, &sc));
    }

    #[test]
    fn zero_warmup_starts_at_lr_max() {
        let sc = ScheduleConfig {
            warmup_steps: 0,
            ..sc()
        };
        assert_eq!(lr_at(0, &sc), 0.05);
    }

    #[test]
    fn invalid_config_rejected() {
        let sc = ScheduleConfig {
            warmup_steps: 10,
            total_steps: 10,
            lr_max: 0.1,
            lr_min: 0.0,
        };
        assert!(sc.validate().is_err());
    }
}
