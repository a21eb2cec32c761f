use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::select::{select_action, Exploration};
use super::value::{agent_input, defaults};
use crate::autodiff::softmax_in_place;
use crate::autodiff::{optimizer_step, Array, Graph, OptimizerConfig, ParameterStore, Var};
use crate::nets::{ActionLayout, NetConfig, Network, ObservationLayout, Role, Variant};
use crate::{Error, Result};

/// Added to the logits of masked-out actions.
const MASKED_LOGIT: f64 = -1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyAlgo {
    Ppo,
    A2c,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub algo: PolicyAlgo,
    pub gamma: f64,
    /// PPO ratio clip.
    pub clip: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    /// PPO passes over each rollout.
    pub epochs: usize,
    /// Steps each worker collects per update.
    pub rollout_len: usize,
    /// PPO minibatch size in samples (one sample per living agent-step).
    pub minibatch: usize,
    /// Environment copies stepped in lockstep.
    pub workers: usize,
    pub optimizer: OptimizerConfig,
    pub critic_hidden: usize,
    pub agent_id: bool,
}

impl PolicyConfig {
    pub fn ppo() -> Self {
        Self {
            algo: PolicyAlgo::Ppo,
            gamma: defaults::gamma(),
            clip: 0.2,
            value_coef: 0.5,
            entropy_coef: 1e-2,
            epochs: 4,
            rollout_len: 128,
            minibatch: 32,
            workers: 1,
            optimizer: OptimizerConfig::ppo_adam(),
            critic_hidden: 64,
            agent_id: true,
        }
    }

    pub fn a2c() -> Self {
        Self {
            algo: PolicyAlgo::A2c,
            epochs: 1,
            rollout_len: 5,
            workers: 5,
            optimizer: OptimizerConfig::a2c_rmsprop(),
            ..Self::ppo()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(Error::Config(format!("clip {} outside (0, 1)", self.clip)));
        }
        if self.epochs == 0 || self.rollout_len == 0 || self.minibatch == 0 || self.workers == 0 || self.critic_hidden == 0 {
            return Err(Error::Config("epochs, rollout_len, minibatch, workers and critic_hidden must be positive".into()));
        }
        Ok(())
    }
}

/// One joint step of one worker, as collected.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutStep {
    pub inputs: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    /// `log pi_old(a|o)` at collection time.
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub masks: Vec<Vec<bool>>,
    pub alive: Vec<bool>,
    pub next_alive: Vec<bool>,
    pub reward: f64,
    pub terminal: bool,
}

/// One training sample: a living agent at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySample {
    pub input: Vec<f64>,
    pub action: usize,
    pub old_log_prob: f64,
    pub value: f64,
    pub ret: f64,
    pub advantage: f64,
    pub mask: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RolloutBatch {
    pub samples: Vec<PolicySample>,
}

impl RolloutBatch {
    /// Appends one worker's rollout, computing n-step returns backwards from
    /// `bootstrap` (the value of each agent's last observation; ignored where
    /// the agent died or the episode ended).
    pub fn push_worker(&mut self, steps: &[RolloutStep], bootstrap: &[f64], gamma: f64) {
        let Some(first) = steps.first() else { return };
        let n = first.alive.len();
        let mut next_ret = bootstrap.to_vec();
        let mut out: Vec<PolicySample> = Vec::new();
        for step in steps.iter().rev() {
            for i in 0..n {
                let ret = if step.terminal || !step.next_alive[i] {
                    step.reward
                } else {
                    step.reward + gamma * next_ret[i]
                };
                next_ret[i] = ret;
                if step.alive[i] {
                    out.push(PolicySample {
                        input: step.inputs[i].clone(),
                        action: step.actions[i],
                        old_log_prob: step.log_probs[i],
                        value: step.values[i],
                        ret,
                        advantage: ret - step.values[i],
                        mask: step.masks[i].clone(),
                    });
                }
            }
        }
        out.reverse();
        self.samples.extend(out);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Loss terms of one policy update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PolicyLoss {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
}

/// Actor-critic with a shared actor over agents and a separate MLP critic.
#[derive(Debug, Clone)]
pub struct PolicyLearner {
    config: PolicyConfig,
    actor: Network,
    critic: Network,
    store: ParameterStore,
    agents: usize,
    mask_invalid: bool,
    updates: u64,
}

impl PolicyLearner {
    pub fn new<R: Rng + ?Sized>(
        config: PolicyConfig,
        net_config: &NetConfig,
        obs: &ObservationLayout,
        actions: &ActionLayout,
        agents: usize,
        mask_invalid: bool,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        if net_config.recurrent {
            return Err(Error::Config("policy learners use feed-forward actors".into()));
        }
        let layout = if config.agent_id {
            obs.with_env_prefix(agents)
        } else {
            obs.clone()
        };
        let mut store = ParameterStore::new();
        let actor = Network::build(net_config, Role::Policy, &layout, actions, &mut store, "actor", rng)?;
        let critic_cfg = NetConfig::new(Variant::Vanilla).sizes(config.critic_hidden, config.critic_hidden);
        let critic_actions = ActionLayout::new(vec![0], Vec::new(), &layout)?;
        let critic = Network::build(&critic_cfg, Role::Value, &layout, &critic_actions, &mut store, "critic", rng)?;
        Ok(Self {
            config,
            actor,
            critic,
            store,
            agents,
            mask_invalid,
            updates: 0,
        })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn actor(&self) -> &Network {
        &self.actor
    }

    pub fn critic(&self) -> &Network {
        &self.critic
    }

    pub fn store(&self) -> &ParameterStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn input(&self, obs: &[f64], slot: usize) -> Vec<f64> {
        agent_input(obs, slot, self.agents, self.config.agent_id)
    }

    /// Action probabilities per row (masked when mask mode is on).
    pub fn probabilities(&self, inputs: &Array, masks: &[Vec<bool>]) -> Result<Array> {
        let (mut logits, _) = self.actor.evaluate(&self.store, inputs, None)?;
        let cols = logits.cols();
        for (r, row) in logits.data_mut().chunks_mut(cols).enumerate() {
            if self.mask_invalid {
                apply_mask(row, &masks[r]);
            }
            softmax_in_place(row);
        }
        Ok(logits)
    }

    pub fn values(&self, inputs: &Array) -> Result<Vec<f64>> {
        let (v, _) = self.critic.evaluate(&self.store, inputs, None)?;
        Ok(v.into_data())
    }

    /// Samples (or, with `greedy`, takes the mode of) one action per row.
    /// Returns the actions and their log-probabilities.
    pub fn act<R: Rng + ?Sized>(
        &self,
        inputs: &Array,
        masks: &[Vec<bool>],
        greedy: bool,
        rng: &mut R,
    ) -> Result<(Vec<usize>, Vec<f64>)> {
        let probs = self.probabilities(inputs, masks)?;
        let mode = if greedy { Exploration::Greedy } else { Exploration::Sample };
        let mut actions = Vec::with_capacity(probs.rows());
        let mut logp = Vec::with_capacity(probs.rows());
        for r in 0..probs.rows() {
            let row = probs.row_slice(r);
            let mask = self.mask_invalid.then(|| masks[r].as_slice());
            let a = select_action(row, mode, mask, rng);
            actions.push(a);
            logp.push(libm::log(row[a]));
        }
        Ok((actions, logp))
    }

    /// Loss over `samples`, gradient left in the store.
    pub fn compute_loss(&mut self, samples: &[&PolicySample]) -> Result<PolicyLoss> {
        if samples.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let width = self.actor.observation_layout().total_len();
        let n_actions = self.actor.num_actions();
        let n = samples.len();
        let mut x = Vec::with_capacity(n * width);
        for s in samples {
            if s.input.len() != width {
                return Err(Error::ObservationLength { expected: width, got: s.input.len() });
            }
            x.extend_from_slice(&s.input);
        }
        let x = Array::matrix(n, width, x)?;
        let col = |f: &dyn Fn(&PolicySample) -> f64| Array::matrix(n, 1, samples.iter().map(|s| f(s)).collect());
        let adv = col(&|s| s.advantage)?;
        let ret = col(&|s| s.ret)?;
        let old = col(&|s| s.old_log_prob)?;
        let actions: Vec<usize> = samples.iter().map(|s| s.action).collect();
        let bias = if self.mask_invalid {
            let mut b = vec![0.0; n * n_actions];
            for (r, s) in samples.iter().enumerate() {
                apply_mask(&mut b[r * n_actions..(r + 1) * n_actions], &s.mask);
            }
            Some(Array::matrix(n, n_actions, b)?)
        } else {
            None
        };

        let cfg = self.config.clone();
        let parts;
        let grads;
        {
            let mut g = Graph::new(&self.store);
            let xv = g.input(x);
            let mut logits = self.actor.forward(&mut g, xv, None)?.out;
            if let Some(b) = bias {
                let bv = g.input(b);
                logits = g.add(logits, bv)?;
            }
            let logp_all = g.log_softmax(logits);
            let logp = g.gather(logp_all, &actions)?;
            let advv = g.input(adv);
            let policy = match cfg.algo {
                PolicyAlgo::Ppo => {
                    let oldv = g.input(old);
                    let ratio = ppo_surrogate_ratio(&mut g, logp, oldv)?;
                    let s1 = g.mul(ratio, advv)?;
                    let clipped = g.clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
                    let s2 = g.mul(clipped, advv)?;
                    let surr = g.minimum(s1, s2)?;
                    let m = g.mean(surr);
                    g.scale(m, -1.0)
                }
                PolicyAlgo::A2c => {
                    let pg = g.mul(logp, advv)?;
                    let m = g.mean(pg);
                    g.scale(m, -1.0)
                }
            };
            let v = self.critic.forward(&mut g, xv, None)?.out;
            let retv = g.input(ret);
            let d = g.sub(v, retv)?;
            let sq = g.mul(d, d)?;
            let value = g.mean(sq);
            let p = g.softmax(logits);
            let plogp = g.mul(p, logp_all)?;
            let row_neg_ent = g.sum_cols(plogp);
            let neg_ent = g.mean(row_neg_ent);
            let entropy = g.scale(neg_ent, -1.0);
            let value_term = g.scale(value, cfg.value_coef);
            let ent_term = g.scale(entropy, -cfg.entropy_coef);
            let t = g.add(policy, value_term)?;
            let total = g.add(t, ent_term)?;
            parts = PolicyLoss {
                total: g.value(total).item(),
                policy: g.value(policy).item(),
                value: g.value(value).item(),
                entropy: g.value(entropy).item(),
            };
            grads = g.backward(total)?;
        }
        self.store.accumulate(&grads);
        Ok(parts)
    }

    /// One optimisation pass over a rollout: PPO runs `epochs` shuffled
    /// minibatch passes, A2C a single full-batch step. Returns the mean loss.
    pub fn update<R: Rng + ?Sized>(&mut self, batch: &RolloutBatch, rng: &mut R) -> Result<PolicyLoss> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let mut sum = PolicyLoss::default();
        let mut steps = 0usize;
        match self.config.algo {
            PolicyAlgo::A2c => {
                let all: Vec<&PolicySample> = batch.samples.iter().collect();
                sum = self.compute_loss(&all)?;
                optimizer_step(&mut self.store, &self.config.optimizer)?;
                steps = 1;
            }
            PolicyAlgo::Ppo => {
                let mut order: Vec<usize> = (0..batch.len()).collect();
                for _ in 0..self.config.epochs {
                    order.shuffle(rng);
                    for chunk in order.chunks(self.config.minibatch) {
                        let mb: Vec<&PolicySample> = chunk.iter().map(|&i| &batch.samples[i]).collect();
                        let l = self.compute_loss(&mb)?;
                        optimizer_step(&mut self.store, &self.config.optimizer)?;
                        sum.total += l.total;
                        sum.policy += l.policy;
                        sum.value += l.value;
                        sum.entropy += l.entropy;
                        steps += 1;
                    }
                }
            }
        }
        self.updates += 1;
        let k = steps as f64;
        Ok(PolicyLoss {
            total: sum.total / k,
            policy: sum.policy / k,
            value: sum.value / k,
            entropy: sum.entropy / k,
        })
    }
}

fn apply_mask(row: &mut [f64], mask: &[bool]) {
    if !mask.iter().any(|&m| m) {
        return;
    }
    for (v, &ok) in row.iter_mut().zip(mask) {
        if !ok {
            *v += MASKED_LOGIT;
        }
    }
}

/// `exp(log pi - log pi_old)` as a graph node.
fn ppo_surrogate_ratio(g: &mut Graph<'_>, logp: Var, old: Var) -> Result<Var> {
    let d = g.sub(logp, old)?;
    Ok(g.exp(d))
}

/// `pi_theta(a|o) / pi_old(a|o)` from two policy evaluations.
pub fn ppo_ratio(actor: &Network, theta: &ParameterStore, theta_old: &ParameterStore, input: &[f64], action: usize) -> Result<f64> {
    let n = actor.num_actions();
    if action >= n {
        return Err(Error::ActionOutOfRange { action, num_actions: n });
    }
    let prob = |store: &ParameterStore| -> Result<f64> {
        let mut g = Graph::new(store);
        let x = g.input(Array::row(input.to_vec()));
        let p = actor.forward_policy(&mut g, x, None)?;
        Ok(g.value(p.out).data()[action])
    };
    Ok(prob(theta)? / prob(theta_old)?)
}
