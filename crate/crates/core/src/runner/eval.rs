use alloc::vec::Vec;

use rand::Rng;

use super::{greedy_choice, joint_actions, rng_for, stream, team_inputs, Learner, RunSpec};
use crate::autodiff::Array;
use crate::env::{scripted_actions, AgentState, AttackRecord, CombatEnv};
use crate::{Error, Result};

/// Result of a batch of greedy evaluation episodes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalSummary {
    pub episodes: usize,
    pub wins: usize,
    pub returns: Vec<f64>,
    /// Selections by living learners that passed the validity check.
    pub valid_selections: usize,
    pub total_selections: usize,
    /// Attacks issued by the learning team.
    pub attacks: Vec<AttackRecord>,
}

impl EvalSummary {
    pub fn win_rate(&self) -> f64 {
        if self.episodes == 0 {
            0.0
        } else {
            self.wins as f64 / self.episodes as f64
        }
    }

    pub fn mean_return(&self) -> f64 {
        mean(&self.returns)
    }

    /// Half-width of the normal-approximation 95% interval of the mean return.
    pub fn return_ci95(&self) -> f64 {
        let n = self.returns.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean_return();
        let var = self.returns.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / (n - 1) as f64;
        1.96 * libm::sqrt(var / n as f64)
    }

    /// Percentage of valid selections; 100 when nothing was selected.
    pub fn valid_pct(&self) -> f64 {
        if self.total_selections == 0 {
            100.0
        } else {
            100.0 * self.valid_selections as f64 / self.total_selections as f64
        }
    }
}

/// Attack statistics inside one distance band, per attack option.
#[derive(Debug, Clone, PartialEq)]
pub struct DamageBand {
    pub max_distance: u32,
    pub total: usize,
    /// `(option name, count, frequency, mean realized damage)`.
    pub options: Vec<(alloc::string::String, usize, f64, f64)>,
    pub mean_damage: f64,
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Greedy team-0 actions for the current observations and masks (global
/// id order); carries the recurrent state in `hidden`. Dead members get the
/// idle action.
pub fn greedy_actions<R: Rng + ?Sized>(
    learner: &Learner,
    env: &CombatEnv,
    observations: &[Vec<f64>],
    masks: &[Vec<bool>],
    mask_invalid: bool,
    hidden: &mut Option<Array>,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let (_, x) = team_inputs(env, observations, |o, k| learner.input(o, k))?;
    let ids = env.config().team_range(0);
    let team_masks: Vec<Vec<bool>> = ids.clone().map(|i| masks[i].clone()).collect();
    let idle = env.action_space(0).idle();
    let mut chosen = match learner {
        Learner::Value(l) => {
            let (q, next) = l.q_values(&x, hidden.as_ref())?;
            *hidden = next;
            (0..q.rows())
                .map(|r| greedy_choice(q.row_slice(r), &team_masks[r], mask_invalid))
                .collect::<Vec<_>>()
        }
        Learner::Policy(l) => l.act(&x, &team_masks, true, rng)?.0,
    };
    for (slot, id) in ids.enumerate() {
        if !env.agents()[id].alive {
            chosen[slot] = idle;
        }
    }
    Ok(chosen)
}

/// Plays `episodes` greedy episodes against the spec's opponent; no
/// exploration and no learning. Episode seeds come from `seed` alone, so
/// repeated calls with one seed see the same start states.
pub fn evaluate(learner: &Learner, spec: &RunSpec, episodes: usize, seed: u64) -> Result<EvalSummary> {
    if episodes == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    let mut env = CombatEnv::new(spec.env.clone())?;
    let mut rng = rng_for(seed, stream::EVAL);
    let team = env.config().team_range(0);
    let mut out = EvalSummary {
        episodes,
        ..EvalSummary::default()
    };
    for _ in 0..episodes {
        let mut res = env.reset(rng.gen());
        let mut hidden = None;
        let mut ret = 0.0;
        loop {
            let own = greedy_actions(learner, &env, &res.observations, &res.masks, spec.mask_invalid, &mut hidden, &mut rng)?;
            let opp = scripted_actions(&env, 1, spec.opponent, &mut rng);
            res = env.step(&joint_actions(&own, &opp))?;
            ret += res.team_rewards[0];
            for id in team.clone() {
                if let Some(ok) = res.info.action_valid[id] {
                    out.total_selections += 1;
                    out.valid_selections += usize::from(ok);
                }
            }
            out.attacks.extend(res.info.attacks.iter().filter(|a| team.contains(&a.attacker)).cloned());
            if res.terminal {
                out.wins += usize::from(res.info.winner == Some(0));
                break;
            }
        }
        out.returns.push(ret);
    }
    Ok(out)
}

/// State after one tick of a recorded episode. Frame 0 is the reset state
/// and has no actions.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ReplayFrame {
    pub tick: u32,
    pub agents: Vec<AgentState>,
    /// Joint action that produced this frame, global id order.
    pub actions: Vec<usize>,
    pub team_rewards: [f64; 2],
    pub valid: Vec<Option<bool>>,
    pub terminal: bool,
    pub winner: Option<usize>,
}

/// Records the first episode `evaluate` would play with this seed.
pub fn replay_episode(learner: &Learner, spec: &RunSpec, seed: u64) -> Result<Vec<ReplayFrame>> {
    let mut env = CombatEnv::new(spec.env.clone())?;
    let mut rng = rng_for(seed, stream::EVAL);
    let mut res = env.reset(rng.gen());
    let mut frames = alloc::vec![ReplayFrame {
        tick: env.tick(),
        agents: env.agents().to_vec(),
        actions: Vec::new(),
        team_rewards: [0.0; 2],
        valid: Vec::new(),
        terminal: false,
        winner: None,
    }];
    let mut hidden = None;
    while !res.terminal {
        let own = greedy_actions(learner, &env, &res.observations, &res.masks, spec.mask_invalid, &mut hidden, &mut rng)?;
        let opp = scripted_actions(&env, 1, spec.opponent, &mut rng);
        let joint = joint_actions(&own, &opp);
        res = env.step(&joint)?;
        frames.push(ReplayFrame {
            tick: res.info.tick,
            agents: env.agents().to_vec(),
            actions: joint,
            team_rewards: res.team_rewards,
            valid: res.info.action_valid.clone(),
            terminal: res.terminal,
            winner: res.info.winner,
        });
    }
    Ok(frames)
}

impl DamageBand {
    /// Buckets `attacks` with attacker-target distance at most `max_distance`.
    pub fn from_attacks(attacks: &[AttackRecord], option_names: &[alloc::string::String], max_distance: u32) -> Self {
        let inside: Vec<&AttackRecord> = attacks.iter().filter(|a| a.distance <= max_distance).collect();
        let total = inside.len();
        let options = option_names
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let dmg: Vec<f64> = inside.iter().filter(|a| a.option == k).map(|a| f64::from(a.realized)).collect();
                let freq = if total == 0 { 0.0 } else { dmg.len() as f64 / total as f64 };
                (name.clone(), dmg.len(), freq, mean(&dmg))
            })
            .collect();
        let all: Vec<f64> = inside.iter().map(|a| f64::from(a.realized)).collect();
        Self {
            max_distance,
            total,
            options,
            mean_damage: mean(&all),
        }
    }
}
