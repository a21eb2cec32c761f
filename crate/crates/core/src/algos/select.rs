use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nets::{argmax, masked_argmax};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Exploration {
    /// `outputs` are values: greedy with probability `1 - eps`, else uniform.
    Epsilon(f64),
    /// `outputs` are probabilities: sample.
    Sample,
    /// `outputs` are values or probabilities: take the largest.
    Greedy,
}

/// Picks an action from one row of network outputs. With a mask, invalid
/// actions are excluded first (unless nothing is valid).
pub fn select_action<R: Rng + ?Sized>(outputs: &[f64], exploration: Exploration, mask: Option<&[bool]>, rng: &mut R) -> usize {
    let allowed: Vec<usize> = match mask {
        Some(m) if m.iter().any(|&v| v) => (0..outputs.len()).filter(|&a| m[a]).collect(),
        _ => (0..outputs.len()).collect(),
    };
    let greedy = || match mask {
        Some(m) => masked_argmax(outputs, m),
        None => argmax(outputs),
    };
    match exploration {
        Exploration::Greedy => greedy(),
        Exploration::Epsilon(eps) => {
            if rng.gen::<f64>() < eps {
                allowed[rng.gen_range(0..allowed.len())]
            } else {
                greedy()
            }
        }
        Exploration::Sample => {
            let total: f64 = allowed.iter().map(|&a| outputs[a].max(0.0)).sum();
            if !(total > 0.0) || !total.is_finite() {
                return allowed[rng.gen_range(0..allowed.len())];
            }
            let mut u = rng.gen::<f64>() * total;
            for &a in &allowed {
                let p = outputs[a].max(0.0);
                if u < p {
                    return a;
                }
                u -= p;
            }
            // rounding: last action with positive mass
            *allowed.iter().rev().find(|&&a| outputs[a] > 0.0).expect("positive mass")
        }
    }
}
