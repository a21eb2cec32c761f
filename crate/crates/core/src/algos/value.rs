use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mixer::Mixer;
use super::replay::Transition;
use super::schedule::EpsilonSchedule;
use crate::autodiff::{optimizer_step, Array, Graph, OptimizerConfig, ParameterStore, Var};
use crate::nets::{masked_argmax, ActionLayout, NetConfig, Network, ObservationLayout, Role};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueAlgo {
    Iql,
    Vdn,
    Qmix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValueConfig {
    pub algo: ValueAlgo,
    #[serde(default = "defaults::gamma")]
    pub gamma: f64,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    /// Transitions (feed-forward nets) or episodes (recurrent nets).
    #[serde(default = "defaults::buffer_size")]
    pub buffer_size: usize,
    /// Learner updates between target-network refreshes.
    #[serde(default = "defaults::target_interval")]
    pub target_update_interval: u64,
    #[serde(default)]
    pub epsilon: EpsilonSchedule,
    #[serde(default = "OptimizerConfig::value_rmsprop")]
    pub optimizer: OptimizerConfig,
    #[serde(default = "defaults::mixer_embed")]
    pub mixer_embed: usize,
    /// Prepend an agent-id one-hot to every observation.
    #[serde(default = "defaults::yes")]
    pub agent_id: bool,
}

pub(crate) mod defaults {
    pub fn gamma() -> f64 {
        0.99
    }
    pub fn batch_size() -> usize {
        32
    }
    pub fn buffer_size() -> usize {
        5000
    }
    pub fn target_interval() -> u64 {
        200
    }
    pub fn mixer_embed() -> usize {
        32
    }
    pub fn yes() -> bool {
        true
    }
}

impl ValueConfig {
    pub fn new(algo: ValueAlgo) -> Self {
        Self {
            algo,
            gamma: defaults::gamma(),
            batch_size: defaults::batch_size(),
            buffer_size: defaults::buffer_size(),
            target_update_interval: defaults::target_interval(),
            epsilon: EpsilonSchedule::default(),
            optimizer: OptimizerConfig::value_rmsprop(),
            mixer_embed: defaults::mixer_embed(),
            agent_id: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if self.batch_size == 0 || self.buffer_size == 0 || self.target_update_interval == 0 {
            return Err(Error::Config("batch_size, buffer_size and target_update_interval must be positive".into()));
        }
        Ok(())
    }
}

/// Flattened TD problem: `k` samples of `n` agents, row `s * n + i`.
struct TdBatch {
    k: usize,
    n: usize,
    actions: Vec<usize>,
    rewards: Vec<f64>,
    terminal: Vec<bool>,
    /// Per-sample weight (0 for padding past an episode's end).
    weight: Vec<f64>,
    alive: Vec<bool>,
    next_alive: Vec<bool>,
    /// Target-network max over successor actions, per row.
    target_max: Vec<f64>,
    state: Vec<f64>,
    next_state: Vec<f64>,
}

/// IQL, VDN or QMIX over a shared agent network.
#[derive(Debug, Clone)]
pub struct ValueLearner {
    config: ValueConfig,
    net: Network,
    mixer: Option<Mixer>,
    store: ParameterStore,
    target: ParameterStore,
    agents: usize,
    state_len: usize,
    mask_invalid: bool,
    updates: u64,
}

impl ValueLearner {
    /// `obs` is the environment layout of one agent; the network sees it with
    /// the id one-hot prepended when `config.agent_id` is set.
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        config: ValueConfig,
        net_config: &NetConfig,
        obs: &ObservationLayout,
        actions: &ActionLayout,
        agents: usize,
        state_len: usize,
        mask_invalid: bool,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        if agents == 0 {
            return Err(Error::Config("a learning team needs at least one agent".into()));
        }
        let layout = if config.agent_id {
            obs.with_env_prefix(agents)
        } else {
            obs.clone()
        };
        let mut store = ParameterStore::new();
        let net = Network::build(net_config, Role::Value, &layout, actions, &mut store, "agent", rng)?;
        let mixer = match config.algo {
            ValueAlgo::Qmix => Some(Mixer::build(&mut store, "mixer", agents, state_len, config.mixer_embed, rng)?),
            _ => None,
        };
        let target = store.clone();
        Ok(Self {
            config,
            net,
            mixer,
            store,
            target,
            agents,
            state_len,
            mask_invalid,
            updates: 0,
        })
    }

    pub fn config(&self) -> &ValueConfig {
        &self.config
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn mixer(&self) -> Option<&Mixer> {
        self.mixer.as_ref()
    }

    pub fn store(&self) -> &ParameterStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }

    pub fn target_store(&self) -> &ParameterStore {
        &self.target
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn is_recurrent(&self) -> bool {
        self.net.hidden_size() > 0
    }

    /// Network input for team member `slot`.
    pub fn input(&self, obs: &[f64], slot: usize) -> Vec<f64> {
        agent_input(obs, slot, self.agents, self.config.agent_id)
    }

    /// Copies the online parameters into the target network.
    pub fn sync_target(&mut self) -> Result<()> {
        self.target.copy_values_from(&self.store)
    }

    /// Q-values for a batch of network inputs.
    pub fn q_values(&self, inputs: &Array, hidden: Option<&Array>) -> Result<(Array, Option<Array>)> {
        self.net.evaluate(&self.store, inputs, hidden)
    }

    fn target_max(&self, q: &Array, masks: &[&[bool]]) -> Vec<f64> {
        (0..q.rows())
            .map(|r| {
                let row = q.row_slice(r);
                let a = if self.mask_invalid {
                    masked_argmax(row, masks[r])
                } else {
                    crate::nets::argmax(row)
                };
                row[a]
            })
            .collect()
    }

    fn td_from_transitions(&self, batch: &[&Transition], target_q: &Array) -> TdBatch {
        let n = self.agents;
        let masks: Vec<&[bool]> = batch.iter().flat_map(|t| t.next_masks.iter().map(Vec::as_slice)).collect();
        TdBatch {
            k: batch.len(),
            n,
            actions: batch.iter().flat_map(|t| t.actions.iter().copied()).collect(),
            rewards: batch.iter().map(|t| t.reward).collect(),
            terminal: batch.iter().map(|t| t.terminal).collect(),
            weight: vec![1.0; batch.len()],
            alive: batch.iter().flat_map(|t| t.alive.iter().copied()).collect(),
            next_alive: batch.iter().flat_map(|t| t.next_alive.iter().copied()).collect(),
            target_max: self.target_max(target_q, &masks),
            state: batch.iter().flat_map(|t| t.state.iter().copied()).collect(),
            next_state: batch.iter().flat_map(|t| t.next_state.iter().copied()).collect(),
        }
    }

    fn check_batch(&self, batch: &[&Transition]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        for t in batch {
            if t.num_agents() != self.agents || t.actions.len() != self.agents {
                return Err(Error::shape("transition agents", &[self.agents], &[t.num_agents()]));
            }
            if self.mixer.is_some() && (t.state.len() != self.state_len || t.next_state.len() != self.state_len) {
                return Err(Error::shape("transition state", &[self.state_len], &[t.state.len()]));
            }
        }
        Ok(())
    }

    fn stack(rows: impl Iterator<Item = Vec<f64>>, width: usize) -> Result<Array> {
        let mut data = Vec::new();
        let mut count = 0;
        for r in rows {
            if r.len() != width {
                return Err(Error::ObservationLength { expected: width, got: r.len() });
            }
            data.extend_from_slice(&r);
            count += 1;
        }
        Array::matrix(count, width, data)
    }

    /// TD loss over a batch of transitions (feed-forward networks). Returns
    /// the loss and leaves its gradient in the parameter store.
    pub fn compute_loss(&mut self, batch: &[&Transition]) -> Result<f64> {
        self.check_batch(batch)?;
        if self.is_recurrent() {
            return Err(Error::Unsupported("recurrent networks train on episodes".into()));
        }
        let width = self.net.observation_layout().total_len();
        let x = Self::stack(batch.iter().flat_map(|t| t.obs.iter().cloned()), width)?;
        let xn = Self::stack(batch.iter().flat_map(|t| t.next_obs.iter().cloned()), width)?;
        let (target_q, _) = self.net.evaluate(&self.target, &xn, None)?;
        let td = self.td_from_transitions(batch, &target_q);

        let grads;
        let loss;
        {
            let mut g = Graph::new(&self.store);
            let xv = g.input(x);
            let q = self.net.forward_q(&mut g, xv, None)?.out;
            let chosen = g.gather(q, &td.actions)?;
            let root = self.td_loss(&mut g, chosen, &td)?;
            loss = g.value(root).item();
            grads = g.backward(root)?;
        }
        self.store.accumulate(&grads);
        Ok(loss)
    }

    /// TD loss over whole episodes, unrolling the recurrent state from zero.
    pub fn compute_episode_loss(&mut self, episodes: &[&[Transition]]) -> Result<f64> {
        let flat: Vec<&Transition> = episodes.iter().flat_map(|e| e.iter()).collect();
        self.check_batch(&flat)?;
        let b = episodes.len();
        let n = self.agents;
        let horizon = episodes.iter().map(|e| e.len()).max().unwrap_or(0);
        let width = self.net.observation_layout().total_len();
        let zeros = vec![0.0; width];
        // inputs at step t for every (episode, agent); zeros past the end
        let rows_at = |t: usize, next: bool| -> Result<Array> {
            let mut data = Vec::with_capacity(b * n * width);
            for e in episodes {
                for i in 0..n {
                    let row = match e.get(t) {
                        Some(tr) if next => &tr.next_obs[i],
                        Some(tr) => &tr.obs[i],
                        None => &zeros,
                    };
                    if row.len() != width {
                        return Err(Error::ObservationLength { expected: width, got: row.len() });
                    }
                    data.extend_from_slice(row);
                }
            }
            Array::matrix(b * n, width, data)
        };

        // target unroll over obs_0, next_obs_0, ..., next_obs_{T-1}
        let mut target_q = Vec::with_capacity(horizon);
        let (_, mut h) = self.net.evaluate(&self.target, &rows_at(0, false)?, None)?;
        for t in 0..horizon {
            let (q, h2) = self.net.evaluate(&self.target, &rows_at(t, true)?, h.as_ref())?;
            target_q.push(q);
            h = h2;
        }

        // sample s = t * b + e
        let pad = Transition {
            obs: Vec::new(),
            state: vec![0.0; self.state_len],
            actions: vec![0; n],
            reward: 0.0,
            next_obs: Vec::new(),
            next_state: vec![0.0; self.state_len],
            terminal: true,
            alive: vec![false; n],
            next_alive: vec![false; n],
            masks: Vec::new(),
            next_masks: vec![Vec::new(); n],
        };
        let mut samples: Vec<&Transition> = Vec::with_capacity(horizon * b);
        let mut weight = Vec::with_capacity(horizon * b);
        for t in 0..horizon {
            for e in episodes {
                match e.get(t) {
                    Some(tr) => {
                        samples.push(tr);
                        weight.push(1.0);
                    }
                    None => {
                        samples.push(&pad);
                        weight.push(0.0);
                    }
                }
            }
        }
        let mut tq = Vec::with_capacity(horizon * b * n * self.net.num_actions());
        for q in &target_q {
            tq.extend_from_slice(q.data());
        }
        let target_q = Array::matrix(horizon * b * n, self.net.num_actions(), tq)?;
        let mut td = {
            let n_actions = self.net.num_actions();
            let all_true = vec![true; n_actions];
            let masks: Vec<&[bool]> = samples
                .iter()
                .flat_map(|s| (0..n).map(|i| s.next_masks.get(i).filter(|m| !m.is_empty()).map_or(&all_true[..], Vec::as_slice)))
                .collect();
            TdBatch {
                k: samples.len(),
                n,
                actions: samples.iter().flat_map(|t| t.actions.iter().copied()).collect(),
                rewards: samples.iter().map(|t| t.reward).collect(),
                terminal: samples.iter().map(|t| t.terminal).collect(),
                weight: Vec::new(),
                alive: samples.iter().flat_map(|t| t.alive.iter().copied()).collect(),
                next_alive: samples.iter().flat_map(|t| t.next_alive.iter().copied()).collect(),
                target_max: self.target_max(&target_q, &masks),
                state: samples.iter().flat_map(|t| t.state.iter().copied()).collect(),
                next_state: samples.iter().flat_map(|t| t.next_state.iter().copied()).collect(),
            }
        };
        td.weight = weight;

        let grads;
        let loss;
        {
            let mut g = Graph::new(&self.store);
            let mut chosen = Vec::with_capacity(horizon);
            let mut h: Option<Var> = None;
            for t in 0..horizon {
                let x = rows_at(t, false)?;
                let xv = g.input(x);
                let out = self.net.forward_q(&mut g, xv, h)?;
                let idx = &td.actions[t * b * n..(t + 1) * b * n];
                chosen.push(g.gather(out.out, idx)?);
                h = out.hidden;
            }
            let chosen = if chosen.len() == 1 { chosen[0] } else { g.concat_rows(&chosen)? };
            let root = self.td_loss(&mut g, chosen, &td)?;
            loss = g.value(root).item();
            grads = g.backward(root)?;
        }
        self.store.accumulate(&grads);
        Ok(loss)
    }

    /// Builds the loss node from chosen Q-values (`k*n x 1`).
    fn td_loss(&self, g: &mut Graph<'_>, chosen: Var, td: &TdBatch) -> Result<Var> {
        let (k, n) = (td.k, td.n);
        let gamma = self.config.gamma;
        let live = |b: bool| f64::from(u8::from(b));
        let boot = |s: usize| if td.terminal[s] { 0.0 } else { gamma };
        match self.config.algo {
            ValueAlgo::Iql => {
                let mut y = Vec::with_capacity(k * n);
                let mut w = Vec::with_capacity(k * n);
                for s in 0..k {
                    for i in 0..n {
                        let r = s * n + i;
                        y.push(td.rewards[s] + boot(s) * live(td.next_alive[r]) * td.target_max[r]);
                        w.push(td.weight[s] * live(td.alive[r]));
                    }
                }
                let total: f64 = w.iter().sum();
                if total <= 0.0 {
                    return Err(Error::EmptyBatch);
                }
                w.iter_mut().for_each(|v| *v /= total);
                let yv = g.input(Array::matrix(k * n, 1, y)?);
                let wv = g.input(Array::matrix(k * n, 1, w)?);
                weighted_square(g, chosen, yv, wv)
            }
            ValueAlgo::Vdn | ValueAlgo::Qmix => {
                let alive: Vec<f64> = td.alive.iter().map(|&b| live(b)).collect();
                let q = g.reshape(chosen, k, n)?;
                let mask = g.input(Array::matrix(k, n, alive)?);
                let q = g.mul(q, mask)?;
                let next: Vec<f64> = (0..k * n).map(|r| live(td.next_alive[r]) * td.target_max[r]).collect();
                let (q_tot, next_tot) = match &self.mixer {
                    None => {
                        let next_tot: Vec<f64> = next.chunks(n).map(|c| c.iter().sum()).collect();
                        (g.sum_cols(q), next_tot)
                    }
                    Some(mixer) => {
                        let s = g.input(Array::matrix(k, self.state_len, td.state.clone())?);
                        let q_tot = mixer.forward(g, q, s)?;
                        let mut tg = Graph::new(&self.target);
                        let qn = tg.input(Array::matrix(k, n, next)?);
                        let sn = tg.input(Array::matrix(k, self.state_len, td.next_state.clone())?);
                        let out = mixer.forward(&mut tg, qn, sn)?;
                        (q_tot, tg.value(out).data().to_vec())
                    }
                };
                let y: Vec<f64> = (0..k).map(|s| td.rewards[s] + boot(s) * next_tot[s]).collect();
                let total: f64 = td.weight.iter().sum();
                if total <= 0.0 {
                    return Err(Error::EmptyBatch);
                }
                let w: Vec<f64> = td.weight.iter().map(|v| v / total).collect();
                let yv = g.input(Array::matrix(k, 1, y)?);
                let wv = g.input(Array::matrix(k, 1, w)?);
                weighted_square(g, q_tot, yv, wv)
            }
        }
    }

    /// Applies the accumulated gradient and refreshes the target network on
    /// schedule. Returns the pre-clip gradient norm.
    pub fn apply_update(&mut self) -> Result<f64> {
        let norm = optimizer_step(&mut self.store, &self.config.optimizer)?;
        self.updates += 1;
        if self.updates % self.config.target_update_interval == 0 {
            self.sync_target()?;
        }
        Ok(norm)
    }

    /// One optimisation step on a transition batch; returns the loss.
    pub fn update(&mut self, batch: &[&Transition]) -> Result<f64> {
        let loss = self.compute_loss(batch)?;
        self.apply_update()?;
        Ok(loss)
    }

    /// One optimisation step on an episode batch; returns the loss.
    pub fn update_episodes(&mut self, episodes: &[&[Transition]]) -> Result<f64> {
        let loss = self.compute_episode_loss(episodes)?;
        self.apply_update()?;
        Ok(loss)
    }
}

/// `sum_r w_r (x_r - y_r)^2`.
fn weighted_square(g: &mut Graph<'_>, x: Var, y: Var, w: Var) -> Result<Var> {
    let d = g.sub(x, y)?;
    let sq = g.mul(d, d)?;
    let wsq = g.mul(sq, w)?;
    Ok(g.sum(wsq))
}

/// `[one_hot(slot) | obs]` when `with_id`, else `obs`.
pub fn agent_input(obs: &[f64], slot: usize, agents: usize, with_id: bool) -> Vec<f64> {
    if !with_id {
        return obs.to_vec();
    }
    let mut v = vec![0.0; agents + obs.len()];
    v[slot] = 1.0;
    v[agents..].copy_from_slice(obs);
    v
}
