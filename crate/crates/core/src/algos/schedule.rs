use serde::{Deserialize, Serialize};

/// Linear exploration schedule, constant after `anneal_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub finish: f64,
    pub anneal_steps: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            finish: 0.05,
            anneal_steps: 50_000,
        }
    }
}

impl EpsilonSchedule {
    pub fn value(&self, step: u64) -> f64 {
        if self.anneal_steps == 0 || step >= self.anneal_steps {
            return self.finish;
        }
        let frac = step as f64 / self.anneal_steps as f64;
        let eps = self.start + (self.finish - self.start) * frac;
        // guards against rounding past the finish value
        if self.start >= self.finish {
            eps.max(self.finish)
        } else {
            eps.min(self.finish)
        }
    }
}
