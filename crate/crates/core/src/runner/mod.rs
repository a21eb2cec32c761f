//! Training, evaluation and probing loops over [`CombatEnv`].
//!
//! Team 0 is always the learning team and team 1 the scripted opponent.
//! Every source of randomness is a ChaCha stream derived from the run seed,
//! so a run is a pure function of its [`RunSpec`] and seed.

mod eval;
mod probe;
mod train;

use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algos::{PolicyAlgo, PolicyConfig, PolicyLearner, ValueAlgo, ValueConfig, ValueLearner};
use crate::autodiff::{Array, ParameterStore};
use crate::env::{CombatEnv, EnvConfig, ScriptedPolicy};
use crate::nets::{masked_argmax, argmax, NetConfig, Network};
use crate::{Error, Result};

pub use eval::{evaluate, greedy_actions, replay_episode, DamageBand, EvalSummary, ReplayFrame};
pub use probe::{damage_histogram, probe_distance, probe_hp_difference, DistancePoint, HpPoint};
pub use train::{MetricsRow, Trainer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Iql,
    Vdn,
    Qmix,
    Ppo,
    A2c,
}

impl Algorithm {
    pub fn is_value(self) -> bool {
        matches!(self, Algorithm::Iql | Algorithm::Vdn | Algorithm::Qmix)
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Iql => "iql",
            Algorithm::Vdn => "vdn",
            Algorithm::Qmix => "qmix",
            Algorithm::Ppo => "ppo",
            Algorithm::A2c => "a2c",
        }
    }

    fn value_algo(self) -> Option<ValueAlgo> {
        match self {
            Algorithm::Iql => Some(ValueAlgo::Iql),
            Algorithm::Vdn => Some(ValueAlgo::Vdn),
            Algorithm::Qmix => Some(ValueAlgo::Qmix),
            _ => None,
        }
    }
}

/// Everything that defines a run except its seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub env: EnvConfig,
    pub net: NetConfig,
    pub algorithm: Algorithm,
    pub value: ValueConfig,
    pub policy: PolicyConfig,
    pub opponent: ScriptedPolicy,
    /// Restrict action choice to the validity mask.
    pub mask_invalid: bool,
    /// Environment steps to train for (summed over rollout workers).
    pub total_steps: u64,
    /// Environment steps between evaluation points.
    pub eval_interval: u64,
    /// Greedy episodes per evaluation point.
    pub eval_episodes: usize,
    /// Environment steps between value updates (feed-forward replay only).
    pub train_every: u64,
    /// Transitions (or episodes, when recurrent) stored before updates start.
    pub warmup: usize,
}

impl RunSpec {
    pub fn new(env: EnvConfig, net: NetConfig, algorithm: Algorithm) -> Self {
        let policy = match algorithm {
            Algorithm::A2c => PolicyConfig::a2c(),
            _ => PolicyConfig::ppo(),
        };
        let value = ValueConfig::new(algorithm.value_algo().unwrap_or(ValueAlgo::Iql));
        Self {
            env,
            net,
            algorithm,
            warmup: value.batch_size,
            value,
            policy,
            opponent: ScriptedPolicy::NearestAttacker,
            mask_invalid: false,
            total_steps: 200_000,
            eval_interval: 10_000,
            eval_episodes: 32,
            train_every: 1,
        }
    }

    /// Checks every field and the compatibility of network, environment and
    /// algorithm without taking a step.
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        if self.eval_interval == 0 {
            return Err(Error::Config("eval_interval must be positive".into()));
        }
        if self.eval_episodes == 0 {
            return Err(Error::Config("eval_episodes must be positive".into()));
        }
        if self.train_every == 0 {
            return Err(Error::Config("train_every must be positive".into()));
        }
        match self.algorithm.value_algo() {
            Some(algo) => {
                if self.value.algo != algo {
                    return Err(Error::Config(format!(
                        "value.algo {:?} disagrees with algorithm {}",
                        self.value.algo,
                        self.algorithm.name()
                    )));
                }
                self.value.validate()?;
            }
            None => {
                let expected = if self.algorithm == Algorithm::Ppo { PolicyAlgo::Ppo } else { PolicyAlgo::A2c };
                if self.policy.algo != expected {
                    return Err(Error::Config(format!(
                        "policy.algo {:?} disagrees with algorithm {}",
                        self.policy.algo,
                        self.algorithm.name()
                    )));
                }
                self.policy.validate()?;
            }
        }
        // builds the networks once, which checks the layouts
        Learner::build(self, 0).map(|_| ())
    }
}

/// The learning side of a run.
#[derive(Debug, Clone)]
pub enum Learner {
    Value(ValueLearner),
    Policy(PolicyLearner),
}

/// Stream ids of the per-run ChaCha generators.
pub(crate) mod stream {
    pub const INIT: u64 = 0;
    pub const EXPLORE: u64 = 1;
    pub const EPISODES: u64 = 2;
    pub const OPPONENT: u64 = 3;
    pub const UPDATE: u64 = 4;
    pub const EVAL: u64 = 5;
}

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl Learner {
    /// Freshly initialised learner for `spec`, parameters drawn from `seed`.
    pub fn build(spec: &RunSpec, seed: u64) -> Result<Self> {
        let env = CombatEnv::new(spec.env.clone())?;
        let obs = env.observation_layout(0);
        let actions = env.action_layout(0);
        let agents = spec.env.team_sizes[0];
        let mut rng = rng_for(seed, stream::INIT);
        match spec.algorithm.value_algo() {
            Some(_) => Ok(Learner::Value(ValueLearner::new(
                spec.value.clone(),
                &spec.net,
                &obs,
                &actions,
                agents,
                env.state_len(),
                spec.mask_invalid,
                &mut rng,
            )?)),
            None => Ok(Learner::Policy(PolicyLearner::new(
                spec.policy.clone(),
                &spec.net,
                &obs,
                &actions,
                agents,
                spec.mask_invalid,
                &mut rng,
            )?)),
        }
    }

    pub fn store(&self) -> &ParameterStore {
        match self {
            Learner::Value(l) => l.store(),
            Learner::Policy(l) => l.store(),
        }
    }

    /// Replaces all parameter values (and the value target) with `values`.
    pub fn load_values(&mut self, values: &ParameterStore) -> Result<()> {
        match self {
            Learner::Value(l) => {
                l.store_mut().copy_values_from(values)?;
                l.sync_target()
            }
            Learner::Policy(l) => l.store_mut().copy_values_from(values),
        }
    }

    /// Restores values and optimizer state, as when resuming a run.
    pub fn load_state(&mut self, store: &ParameterStore) -> Result<()> {
        match self {
            Learner::Value(l) => {
                l.store_mut().copy_state_from(store)?;
                l.sync_target()
            }
            Learner::Policy(l) => l.store_mut().copy_state_from(store),
        }
    }

    /// The acting network (Q-network or actor).
    pub fn network(&self) -> &Network {
        match self {
            Learner::Value(l) => l.network(),
            Learner::Policy(l) => l.actor(),
        }
    }

    pub fn input(&self, obs: &[f64], slot: usize) -> Vec<f64> {
        match self {
            Learner::Value(l) => l.input(obs, slot),
            Learner::Policy(l) => l.input(obs, slot),
        }
    }

    pub fn updates(&self) -> u64 {
        match self {
            Learner::Value(l) => l.updates(),
            Learner::Policy(l) => l.updates(),
        }
    }

    /// Q-values of a value learner for a batch of inputs.
    pub fn q_values(&self, inputs: &Array, hidden: Option<&Array>) -> Result<(Array, Option<Array>)> {
        match self {
            Learner::Value(l) => l.q_values(inputs, hidden),
            Learner::Policy(_) => Err(Error::Unsupported("policy learners have no Q-values".into())),
        }
    }
}

/// Stacks team-0 inputs into a `team x width` matrix.
pub(crate) fn team_inputs<F>(env: &CombatEnv, observations: &[Vec<f64>], input: F) -> Result<(Vec<Vec<f64>>, Array)>
where
    F: Fn(&[f64], usize) -> Vec<f64>,
{
    let ids = env.config().team_range(0);
    let rows: Vec<Vec<f64>> = ids.enumerate().map(|(slot, id)| input(&observations[id], slot)).collect();
    let width = rows.first().map_or(0, Vec::len);
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    let matrix = Array::matrix(rows.len(), width, flat)?;
    Ok((rows, matrix))
}

/// Greedy (or masked greedy) choice over one row of outputs.
pub(crate) fn greedy_choice(row: &[f64], mask: &[bool], masked: bool) -> usize {
    if masked {
        masked_argmax(row, mask)
    } else {
        argmax(row)
    }
}

/// Concatenates team-0 actions (slot order) with scripted team-1 actions.
pub(crate) fn joint_actions(own: &[usize], opponents: &[usize]) -> Vec<usize> {
    let mut v = Vec::with_capacity(own.len() + opponents.len());
    v.extend_from_slice(own);
    v.extend_from_slice(opponents);
    v
}
