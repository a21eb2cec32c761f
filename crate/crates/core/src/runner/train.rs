use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::eval::{evaluate, mean};
use super::{joint_actions, rng_for, stream, team_inputs, Learner, RunSpec};
use crate::algos::{select_action, Exploration, PolicyLearner, ReplayBuffer, RolloutBatch, RolloutStep, Transition, ValueLearner};
use crate::autodiff::Array;
use crate::env::{scripted_actions, CombatEnv, StepResult};
use crate::Result;

/// One evaluation point of a training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    pub episode: u64,
    pub win_rate: f64,
    pub mean_return: f64,
    pub valid_pct: f64,
    /// Mean training loss since the previous row (0 before the first update).
    pub loss: f64,
    pub epsilon: f64,
}

struct Worker {
    env: CombatEnv,
    res: StepResult,
}

enum State {
    Value {
        worker: Worker,
        hidden: Option<Array>,
        replay: ReplayBuffer<Transition>,
        episodes: ReplayBuffer<Vec<Transition>>,
        current: Vec<Transition>,
    },
    Policy {
        workers: Vec<Worker>,
    },
}

/// A training run in progress.
pub struct Trainer {
    spec: RunSpec,
    seed: u64,
    learner: Learner,
    state: State,
    steps: u64,
    episodes: u64,
    losses: Vec<f64>,
    explore: ChaCha8Rng,
    starts: ChaCha8Rng,
    opponent: ChaCha8Rng,
    update: ChaCha8Rng,
}

fn team_masks(env: &CombatEnv, masks: &[Vec<bool>]) -> Vec<Vec<bool>> {
    env.config().team_range(0).map(|i| masks[i].clone()).collect()
}

fn team_alive(env: &CombatEnv) -> Vec<bool> {
    env.config().team_range(0).map(|i| env.agents()[i].alive).collect()
}

impl Trainer {
    pub fn new(spec: RunSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let learner = Learner::build(&spec, seed)?;
        let mut starts = rng_for(seed, stream::EPISODES);
        let mut worker = || -> Result<Worker> {
            let mut env = CombatEnv::new(spec.env.clone())?;
            let res = env.reset(starts.gen());
            Ok(Worker { env, res })
        };
        let state = match &learner {
            Learner::Value(_) => State::Value {
                worker: worker()?,
                hidden: None,
                replay: ReplayBuffer::new(spec.value.buffer_size),
                episodes: ReplayBuffer::new(spec.value.buffer_size),
                current: Vec::new(),
            },
            Learner::Policy(_) => State::Policy {
                workers: (0..spec.policy.workers).map(|_| worker()).collect::<Result<_>>()?,
            },
        };
        Ok(Self {
            spec,
            seed,
            learner,
            state,
            steps: 0,
            episodes: 0,
            losses: Vec::new(),
            explore: rng_for(seed, stream::EXPLORE),
            starts,
            opponent: rng_for(seed, stream::OPPONENT),
            update: rng_for(seed, stream::UPDATE),
        })
    }

    pub fn spec(&self) -> &RunSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn learner(&self) -> &Learner {
        &self.learner
    }

    /// Environment steps taken so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Training episodes finished so far.
    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    pub fn epsilon(&self) -> f64 {
        match &self.learner {
            Learner::Value(l) => l.config().epsilon.value(self.steps),
            Learner::Policy(_) => 0.0,
        }
    }

    /// Trains until at least `target` environment steps have been taken.
    pub fn advance(&mut self, target: u64) -> Result<()> {
        while self.steps < target {
            match (&mut self.learner, &mut self.state) {
                (Learner::Value(l), State::Value { worker, hidden, replay, episodes, current }) => {
                    let eps = l.config().epsilon.value(self.steps);
                    let done = value_step(
                        l,
                        &self.spec,
                        worker,
                        hidden,
                        eps,
                        &mut self.explore,
                        &mut self.opponent,
                    )?;
                    self.steps += 1;
                    let (t, terminal) = done;
                    if l.is_recurrent() {
                        current.push(t);
                    } else {
                        replay.push(t);
                    }
                    if terminal {
                        self.episodes += 1;
                        worker.res = worker.env.reset(self.starts.gen());
                        *hidden = None;
                        if l.is_recurrent() {
                            episodes.push(core::mem::take(current));
                        }
                    }
                    let ready = self.spec.warmup.max(l.config().batch_size);
                    if l.is_recurrent() {
                        if terminal && episodes.len() >= ready {
                            let batch: Vec<&[Transition]> = episodes
                                .sample(l.config().batch_size, &mut self.update)
                                .into_iter()
                                .map(Vec::as_slice)
                                .collect();
                            self.losses.push(l.update_episodes(&batch)?);
                        }
                    } else if replay.len() >= ready && self.steps % self.spec.train_every == 0 {
                        let batch = replay.sample(l.config().batch_size, &mut self.update);
                        self.losses.push(l.update(&batch)?);
                    }
                }
                (Learner::Policy(l), State::Policy { workers }) => {
                    let mut batch = RolloutBatch::default();
                    for w in workers.iter_mut() {
                        let (steps, finished) = rollout(l, &self.spec, w, &mut self.explore, &mut self.opponent, &mut self.starts)?;
                        self.episodes += finished;
                        let (_, x) = team_inputs(&w.env, &w.res.observations, |o, k| l.input(o, k))?;
                        let bootstrap = l.values(&x)?;
                        batch.push_worker(&steps, &bootstrap, l.config().gamma);
                        self.steps += steps.len() as u64;
                    }
                    if !batch.is_empty() {
                        self.losses.push(l.update(&batch, &mut self.update)?.total);
                    }
                }
                _ => unreachable!("learner and state kinds always match"),
            }
        }
        Ok(())
    }

    /// Greedy evaluation at the current parameters, summarised as a row.
    pub fn metrics_row(&mut self) -> Result<MetricsRow> {
        let summary = evaluate(&self.learner, &self.spec, self.spec.eval_episodes, self.seed)?;
        let loss = mean(&self.losses);
        self.losses.clear();
        Ok(MetricsRow {
            step: self.steps,
            episode: self.episodes,
            win_rate: summary.win_rate(),
            mean_return: summary.mean_return(),
            valid_pct: summary.valid_pct(),
            loss,
            epsilon: self.epsilon(),
        })
    }

    /// Runs the whole budget, calling `on_row` at every evaluation point.
    /// A zero budget produces no rows.
    pub fn run<F>(&mut self, mut on_row: F) -> Result<()>
    where
        F: FnMut(&MetricsRow, &Learner) -> Result<()>,
    {
        let total = self.spec.total_steps;
        let interval = self.spec.eval_interval;
        let mut next = interval.min(total);
        while next > 0 && self.steps < total {
            self.advance(next)?;
            let row = self.metrics_row()?;
            on_row(&row, &self.learner)?;
            next = (next + interval).min(total);
        }
        Ok(())
    }
}

fn value_step(
    l: &ValueLearner,
    spec: &RunSpec,
    w: &mut Worker,
    hidden: &mut Option<Array>,
    eps: f64,
    explore: &mut ChaCha8Rng,
    opponent: &mut ChaCha8Rng,
) -> Result<(Transition, bool)> {
    let env = &mut w.env;
    let (rows, x) = team_inputs(env, &w.res.observations, |o, k| l.input(o, k))?;
    let (q, next_hidden) = l.q_values(&x, hidden.as_ref())?;
    *hidden = next_hidden;
    let masks = team_masks(env, &w.res.masks);
    let alive = team_alive(env);
    let idle = env.action_space(0).idle();
    let own: Vec<usize> = (0..rows.len())
        .map(|s| {
            if !alive[s] {
                return idle;
            }
            let mask = spec.mask_invalid.then(|| masks[s].as_slice());
            select_action(q.row_slice(s), Exploration::Epsilon(eps), mask, explore)
        })
        .collect();
    let opp = scripted_actions(env, 1, spec.opponent, opponent);
    let state = env.state();
    let res = env.step(&joint_actions(&own, &opp))?;
    let (next_obs, _) = team_inputs(env, &res.observations, |o, k| l.input(o, k))?;
    let t = Transition {
        obs: rows,
        state,
        actions: own,
        reward: res.team_rewards[0],
        next_obs,
        next_state: env.state(),
        terminal: res.terminal,
        alive,
        next_alive: team_alive(env),
        masks,
        next_masks: team_masks(env, &res.masks),
    };
    let terminal = res.terminal;
    w.res = res;
    Ok((t, terminal))
}

/// One worker's rollout of `rollout_len` steps, resetting on episode end.
fn rollout(
    l: &PolicyLearner,
    spec: &RunSpec,
    w: &mut Worker,
    explore: &mut ChaCha8Rng,
    opponent: &mut ChaCha8Rng,
    starts: &mut ChaCha8Rng,
) -> Result<(Vec<RolloutStep>, u64)> {
    let mut steps = Vec::with_capacity(spec.policy.rollout_len);
    let mut finished = 0;
    for _ in 0..spec.policy.rollout_len {
        let (rows, x) = team_inputs(&w.env, &w.res.observations, |o, k| l.input(o, k))?;
        let masks = team_masks(&w.env, &w.res.masks);
        let alive = team_alive(&w.env);
        let (mut actions, log_probs) = l.act(&x, &masks, false, explore)?;
        let values = l.values(&x)?;
        let idle = w.env.action_space(0).idle();
        for (a, &ok) in actions.iter_mut().zip(&alive) {
            if !ok {
                *a = idle;
            }
        }
        let opp = scripted_actions(&w.env, 1, spec.opponent, opponent);
        let res = w.env.step(&joint_actions(&actions, &opp))?;
        steps.push(RolloutStep {
            inputs: rows,
            actions,
            log_probs,
            values,
            masks,
            alive,
            next_alive: team_alive(&w.env),
            reward: res.team_rewards[0],
            terminal: res.terminal,
        });
        if res.terminal {
            finished += 1;
            w.res = w.env.reset(starts.gen());
        } else {
            w.res = res;
        }
    }
    Ok((steps, finished))
}
