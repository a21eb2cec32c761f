//! Two-team grid combat.
//!
//! Each tick resolves as: validity check from the start-of-tick state
//! (invalid actions stand still), simultaneous moves (lowest id wins a
//! contested tile), simultaneous attacks (damage summed per target, capped
//! at its remaining HP), per-tick HP decay, rewards, then termination.

mod action;
mod config;
mod observe;
mod scripted;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nets::ActionLayout;
use crate::{Error, Result};

pub use action::{Action, ActionSpace};
pub use config::{AttackOption, EnvConfig, Metric, Preset, RewardConfig};
pub use scripted::{scripted_actions, ScriptedPolicy};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentState {
    pub team: usize,
    pub x: i32,
    pub y: i32,
    pub hp: u32,
    pub alive: bool,
    /// Always false; the field exists in the mmo observation only.
    pub frozen: bool,
    pub unit_type: usize,
}

impl AgentState {
    pub fn pos(&self) -> (i32, i32) {
        (self.x, self.y)
    }
}

/// One resolved attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRecord {
    pub attacker: usize,
    /// Global id of the attacked agent.
    pub target: usize,
    pub option: usize,
    /// Start-of-tick distance between attacker and target.
    pub distance: u32,
    pub nominal: u32,
    /// HP actually removed (0 for failed attacks).
    pub realized: u32,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepInfo {
    /// Tick count after this step.
    pub tick: u32,
    /// Enemies killed by attacks of each team.
    pub kills: [usize; 2],
    /// Own agents lost, by attacks or decay.
    pub deaths: [usize; 2],
    /// Realized attack damage dealt by each team.
    pub damage: [u32; 2],
    pub failed_attacks: [usize; 2],
    pub valid_actions: [usize; 2],
    pub attempted_actions: [usize; 2],
    /// Per agent: whether its action passed the validity check (`None` when
    /// the agent was dead at the start of the tick).
    pub action_valid: Vec<Option<bool>>,
    pub attacks: Vec<AttackRecord>,
    pub winner: Option<usize>,
    /// Team whose opponents were all eliminated while it had survivors.
    pub eliminated_enemy: [bool; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    /// One observation per agent, global id order; dead agents get zeros.
    pub observations: Vec<Vec<f64>>,
    /// Joint reward of each team, shared by all its members.
    pub team_rewards: [f64; 2],
    /// Validity masks for the next step.
    pub masks: Vec<Vec<bool>>,
    pub terminal: bool,
    pub info: StepInfo,
}

impl StepResult {
    pub fn reward_of(&self, config: &EnvConfig, agent: usize) -> f64 {
        self.team_rewards[config.team_of(agent)]
    }
}

/// Outcome of the validity check for one agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Check {
    Valid(Action),
    InvalidMove,
    InvalidAttack,
}

#[derive(Debug, Clone)]
pub struct CombatEnv {
    config: EnvConfig,
    agents: Vec<AgentState>,
    tick: u32,
    done: bool,
    /// Realized damage each agent received last tick.
    damage_taken: Vec<u32>,
    spaces: [ActionSpace; 2],
}

impl CombatEnv {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let spaces = [ActionSpace::new(&config, 0), ActionSpace::new(&config, 1)];
        let n = config.num_agents();
        let agents = (0..n)
            .map(|i| AgentState {
                team: config.team_of(i),
                x: 0,
                y: 0,
                hp: 0,
                alive: false,
                frozen: false,
                unit_type: config.unit_type(i),
            })
            .collect();
        Ok(Self {
            config,
            agents,
            tick: 0,
            done: true,
            damage_taken: vec![0; n],
            spaces,
        })
    }

    /// An environment in a given mid-episode state.
    pub fn from_state(config: EnvConfig, agents: Vec<AgentState>, tick: u32) -> Result<Self> {
        let mut env = Self::new(config)?;
        if agents.len() != env.config.num_agents() {
            return Err(Error::Config(format!(
                "expected {} agents, got {}",
                env.config.num_agents(),
                agents.len()
            )));
        }
        for (i, a) in agents.iter().enumerate() {
            if a.team != env.config.team_of(i) {
                return Err(Error::Config(format!("agent {i} is on the wrong team")));
            }
            if !env.in_grid(a.pos()) {
                return Err(Error::Config(format!("agent {i} is off the grid")));
            }
            if a.hp > env.config.max_hp || a.alive != (a.hp > 0) {
                return Err(Error::Config(format!("agent {i} has inconsistent hp/alive")));
            }
            if a.alive && agents[..i].iter().any(|b| b.alive && b.pos() == a.pos()) {
                return Err(Error::Config(format!("agent {i} shares a tile")));
            }
        }
        env.agents = agents;
        env.tick = tick;
        env.done = tick >= env.config.max_ticks || env.alive_count(0) == 0 || env.alive_count(1) == 0;
        Ok(env)
    }

    /// Places all agents uniformly at random on distinct tiles at full HP.
    pub fn reset(&mut self, seed: u64) -> StepResult {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = (self.config.width as usize, self.config.height as usize);
        let tiles = rand::seq::index::sample(&mut rng, w * h, self.agents.len());
        for (agent, tile) in self.agents.iter_mut().zip(tiles.iter()) {
            agent.x = (tile % w) as i32;
            agent.y = (tile / w) as i32;
            agent.hp = self.config.max_hp;
            agent.alive = true;
            agent.frozen = false;
        }
        self.tick = 0;
        self.done = false;
        self.damage_taken.iter_mut().for_each(|d| *d = 0);
        StepResult {
            observations: self.observations(),
            team_rewards: [0.0; 2],
            masks: self.masks(),
            terminal: false,
            info: StepInfo {
                action_valid: vec![None; self.agents.len()],
                ..StepInfo::default()
            },
        }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn tick(&self) -> u32 {
        self.tick
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn action_space(&self, team: usize) -> &ActionSpace {
        &self.spaces[team]
    }

    pub fn num_actions(&self, team: usize) -> usize {
        self.spaces[team].num_actions()
    }

    pub fn action_layout(&self, team: usize) -> ActionLayout {
        let teammates = self.config.team_sizes[team] - 1;
        self.spaces[team]
            .layout(teammates, &self.observation_layout(team))
            .expect("preset action layout is well formed")
    }

    pub fn alive_count(&self, team: usize) -> usize {
        self.agents.iter().filter(|a| a.team == team && a.alive).count()
    }

    pub fn team_hp(&self, team: usize) -> u32 {
        self.agents.iter().filter(|a| a.team == team).map(|a| a.hp).sum()
    }

    pub fn distance(&self, a: usize, b: usize) -> u32 {
        self.config.metric.distance(self.agents[a].pos(), self.agents[b].pos())
    }

    /// Global id of opponent `k` of `agent`.
    pub fn opponent_id(&self, agent: usize, k: usize) -> usize {
        let team = self.config.team_of(agent);
        self.config.team_range(1 - team).start + k
    }

    fn in_grid(&self, (x, y): (i32, i32)) -> bool {
        x >= 0 && y >= 0 && (x as u32) < self.config.width && (y as u32) < self.config.height
    }

    fn occupied(&self, pos: (i32, i32)) -> bool {
        self.agents.iter().any(|a| a.alive && a.pos() == pos)
    }

    fn check(&self, agent: usize, id: usize) -> Result<Check> {
        let a = &self.agents[agent];
        let action = self.spaces[a.team].decode(id)?;
        Ok(match action {
            Action::NoOp => Check::InvalidMove,
            Action::Stop => Check::Valid(action),
            Action::Move { dx, dy } => {
                let to = (a.x + dx, a.y + dy);
                if self.in_grid(to) && !self.occupied(to) {
                    Check::Valid(action)
                } else {
                    Check::InvalidMove
                }
            }
            Action::Attack { opponent, option } => {
                let target = self.opponent_id(agent, opponent);
                let range = self.config.attacks[option].range;
                if self.agents[target].alive && self.distance(agent, target) <= range {
                    Check::Valid(action)
                } else {
                    Check::InvalidAttack
                }
            }
        })
    }

    /// True exactly for the actions that would pass the validity check. A
    /// dead agent may only submit the idle action.
    pub fn validity_mask(&self, agent: usize) -> Vec<bool> {
        let space = &self.spaces[self.agents[agent].team];
        if !self.agents[agent].alive {
            let mut m = vec![false; space.num_actions()];
            m[space.idle()] = true;
            return m;
        }
        (0..space.num_actions())
            .map(|id| matches!(self.check(agent, id), Ok(Check::Valid(_))))
            .collect()
    }

    pub fn masks(&self) -> Vec<Vec<bool>> {
        (0..self.agents.len()).map(|i| self.validity_mask(i)).collect()
    }

    /// Advances one tick. `actions` holds one id per agent in global order;
    /// entries of dead agents are ignored.
    pub fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        if self.done {
            return Err(Error::Unsupported("episode is over; call reset".into()));
        }
        let n = self.agents.len();
        if actions.len() != n {
            return Err(Error::shape("step actions", &[n], &[actions.len()]));
        }
        let mut info = StepInfo {
            action_valid: vec![None; n],
            ..StepInfo::default()
        };

        // (1) validity from the start-of-tick state
        let mut checks = vec![None; n];
        for i in 0..n {
            if !self.agents[i].alive {
                continue;
            }
            let c = self.check(i, actions[i])?;
            let team = self.agents[i].team;
            info.attempted_actions[team] += 1;
            let valid = matches!(c, Check::Valid(_));
            info.valid_actions[team] += usize::from(valid);
            info.action_valid[i] = Some(valid);
            if c == Check::InvalidAttack {
                info.failed_attacks[team] += 1;
            }
            checks[i] = Some(c);
        }

        // attack records use start-of-tick distances
        let mut incoming = vec![0u32; n];
        for i in 0..n {
            let Some(c) = checks[i] else { continue };
            if let Ok(Action::Attack { opponent, option }) = self.spaces[self.agents[i].team].decode(actions[i]) {
                let target = self.opponent_id(i, opponent);
                let valid = matches!(c, Check::Valid(_));
                let nominal = self.config.attacks[option].damage;
                if valid {
                    incoming[target] += nominal;
                }
                info.attacks.push(AttackRecord {
                    attacker: i,
                    target,
                    option,
                    distance: self.distance(i, target),
                    nominal,
                    realized: 0,
                    valid,
                });
            }
        }

        // (2) simultaneous moves, lowest id first
        let mut claimed: Vec<(i32, i32)> = Vec::new();
        for i in 0..n {
            if let Some(Check::Valid(Action::Move { dx, dy })) = checks[i] {
                let to = (self.agents[i].x + dx, self.agents[i].y + dy);
                if !claimed.contains(&to) {
                    claimed.push(to);
                    self.agents[i].x = to.0;
                    self.agents[i].y = to.1;
                }
            }
        }

        // (3) simultaneous attacks; realized damage allotted in attacker order
        let mut remaining: Vec<u32> = self.agents.iter().map(|a| a.hp).collect();
        self.damage_taken.iter_mut().for_each(|d| *d = 0);
        for rec in info.attacks.iter_mut().filter(|r| r.valid) {
            let dealt = rec.nominal.min(remaining[rec.target]);
            remaining[rec.target] -= dealt;
            rec.realized = dealt;
            info.damage[self.agents[rec.attacker].team] += dealt;
            self.damage_taken[rec.target] += dealt;
        }
        debug_assert!(incoming
            .iter()
            .zip(&self.agents)
            .zip(&self.damage_taken)
            .all(|((inc, a), d)| *d == (*inc).min(a.hp)));
        for i in 0..n {
            let a = &mut self.agents[i];
            if a.alive && remaining[i] == 0 {
                a.hp = 0;
                a.alive = false;
                info.kills[1 - a.team] += 1;
                info.deaths[a.team] += 1;
            } else {
                a.hp = remaining[i];
            }
        }

        // (4) per-tick decay
        if self.config.hp_decay > 0 {
            for a in self.agents.iter_mut().filter(|a| a.alive) {
                a.hp -= self.config.hp_decay.min(a.hp);
                if a.hp == 0 {
                    a.alive = false;
                    info.deaths[a.team] += 1;
                }
            }
        }
        self.tick += 1;
        info.tick = self.tick;

        // (5) termination
        let alive = [self.alive_count(0), self.alive_count(1)];
        let wiped = alive[0] == 0 || alive[1] == 0;
        let terminal = wiped || self.tick >= self.config.max_ticks;
        for t in 0..2 {
            info.eliminated_enemy[t] = alive[t] > 0 && alive[1 - t] == 0;
        }
        let hp = [self.team_hp(0), self.team_hp(1)];
        if terminal {
            info.winner = if info.eliminated_enemy[0] {
                Some(0)
            } else if info.eliminated_enemy[1] {
                Some(1)
            } else if !wiped && self.config.rewards.hp_difference && hp[0] != hp[1] {
                Some(usize::from(hp[1] > hp[0]))
            } else {
                None
            };
        }

        let r = &self.config.rewards;
        let mut team_rewards = [0.0; 2];
        for t in 0..2 {
            let mut reward = r.per_tick;
            reward += r.damage * f64::from(info.damage[t]);
            reward += r.kill * info.kills[t] as f64;
            reward += r.death * info.deaths[t] as f64;
            reward += r.failed_attack * info.failed_attacks[t] as f64;
            if info.eliminated_enemy[t] {
                reward += r.win;
            }
            if terminal && r.hp_difference {
                reward += f64::from(hp[t]) - f64::from(hp[1 - t]);
            }
            team_rewards[t] = reward;
        }
        self.done = terminal;

        Ok(StepResult {
            observations: self.observations(),
            team_rewards,
            masks: self.masks(),
            terminal,
            info,
        })
    }
}
