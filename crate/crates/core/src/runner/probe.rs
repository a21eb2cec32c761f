use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::eval::{evaluate, DamageBand};
use super::{Learner, RunSpec};
use crate::autodiff::Array;
use crate::env::{AgentState, CombatEnv, EnvConfig, Preset};
use crate::{Error, Result};

/// Attack-action Q-values on the probed opponent at one distance.
#[derive(Debug, Clone, PartialEq)]
pub struct DistancePoint {
    pub distance: u32,
    /// One value per attack option, in option order.
    pub q: Vec<f64>,
}

/// Attack-action Q-values on two opponents at one HP difference.
#[derive(Debug, Clone, PartialEq)]
pub struct HpPoint {
    /// HP of the first opponent minus HP of the second.
    pub delta: i64,
    pub q_first: Vec<f64>,
    pub q_second: Vec<f64>,
}

fn require_value(learner: &Learner) -> Result<()> {
    match learner {
        Learner::Value(_) => Ok(()),
        Learner::Policy(_) => Err(Error::Unsupported("probes need a value network; policy learners have no Q-values".into())),
    }
}

/// Everyone dead at the origin; callers revive the probed agents.
fn blank(config: &EnvConfig) -> Vec<AgentState> {
    (0..config.num_agents())
        .map(|i| AgentState {
            team: config.team_of(i),
            x: 0,
            y: 0,
            hp: 0,
            alive: false,
            frozen: false,
            unit_type: config.unit_type(i),
        })
        .collect()
}

fn revive(a: &mut AgentState, pos: (i32, i32), hp: u32) {
    a.x = pos.0;
    a.y = pos.1;
    a.hp = hp;
    a.alive = hp > 0;
}

/// Q-values of agent 0 for the attacks on opponent slot `k`.
fn attack_q(learner: &Learner, env: &CombatEnv, k: usize) -> Result<Vec<f64>> {
    let input = learner.input(&env.observation(0), 0);
    let (q, _) = learner.q_values(&Array::row(input), None)?;
    let space = env.action_space(0);
    Ok((0..env.config().attacks.len()).map(|o| q.data()[space.attack_id(k, o)]).collect())
}

fn grid_diagonal(config: &EnvConfig) -> u32 {
    config.metric.distance((0, 0), (config.width as i32 - 1, config.height as i32 - 1))
}

/// Observer and opponent positions at distance `d`: both on the central
/// row when it is long enough, otherwise the first tile at that distance.
fn placement(config: &EnvConfig, d: u32) -> Option<((i32, i32), (i32, i32))> {
    let (w, h) = (config.width as i32, config.height as i32);
    let row = h / 2;
    if (d as i32) < w && config.metric.distance((0, row), (d as i32, row)) == d {
        return Some(((0, row), (d as i32, row)));
    }
    for origin in [(0, row), (0, 0)] {
        for y in 0..h {
            for x in 0..w {
                if config.metric.distance(origin, (x, y)) == d && (x, y) != origin {
                    return Some((origin, (x, y)));
                }
            }
        }
    }
    None
}

/// One-vs-one sweep: agent 0 against opponent slot `target`, everyone else
/// dead, both at full HP, for each distance in `distances`.
pub fn probe_distance(learner: &Learner, spec: &RunSpec, target: usize, distances: &[u32]) -> Result<Vec<DistancePoint>> {
    require_value(learner)?;
    let config = &spec.env;
    if target >= config.team_sizes[1] {
        return Err(Error::Config(format!("opponent {target} out of range for {} opponents", config.team_sizes[1])));
    }
    let diag = grid_diagonal(config);
    let opponent = config.team_range(1).start + target;
    let mut out = Vec::with_capacity(distances.len());
    for &d in distances {
        if d == 0 || d > diag {
            return Err(Error::Config(format!("probe distance {d} outside 1..={diag}")));
        }
        let (me, them) = placement(config, d).ok_or_else(|| Error::Config(format!("no tile at distance {d}")))?;
        let mut agents = blank(config);
        revive(&mut agents[0], me, config.max_hp);
        revive(&mut agents[opponent], them, config.max_hp);
        let env = CombatEnv::from_state(config.clone(), agents, 0)?;
        out.push(DistancePoint {
            distance: d,
            q: attack_q(learner, &env, target)?,
        });
    }
    Ok(out)
}

/// One-vs-two sweep: agent 0 on the central row between opponent slots 0
/// and 1, one tile to either side. The weaker opponent loses `|delta|` HP.
pub fn probe_hp_difference(learner: &Learner, spec: &RunSpec, deltas: &[i64]) -> Result<Vec<HpPoint>> {
    require_value(learner)?;
    let config = &spec.env;
    if config.team_sizes[1] < 2 {
        return Err(Error::Config("the HP-difference probe needs two opponents".into()));
    }
    if config.width < 3 {
        return Err(Error::Config("the HP-difference probe needs a grid at least 3 wide".into()));
    }
    let max = i64::from(config.max_hp);
    let row = config.height as i32 / 2;
    let mid = config.width as i32 / 2;
    let first = config.team_range(1).start;
    let mut out = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        if delta.abs() >= max {
            return Err(Error::Config(format!("HP difference {delta} must stay below max HP {max}")));
        }
        let hp_first = (max - (-delta).max(0)) as u32;
        let hp_second = (max - delta.max(0)) as u32;
        let mut agents = blank(config);
        revive(&mut agents[0], (mid, row), config.max_hp);
        revive(&mut agents[first], (mid - 1, row), hp_first);
        revive(&mut agents[first + 1], (mid + 1, row), hp_second);
        let env = CombatEnv::from_state(config.clone(), agents, 0)?;
        out.push(HpPoint {
            delta,
            q_first: attack_q(learner, &env, 0)?,
            q_second: attack_q(learner, &env, 1)?,
        });
    }
    Ok(out)
}

/// Plays greedy evaluation episodes and buckets the learners' attacks with
/// attacker-target distance at most `band`.
pub fn damage_histogram(learner: &Learner, spec: &RunSpec, episodes: usize, seed: u64, band: u32) -> Result<DamageBand> {
    if spec.env.preset != Preset::Mmo || spec.env.attacks.len() < 2 {
        return Err(Error::Unsupported("the damage histogram needs the mmo preset's several attack options".into()));
    }
    let summary = evaluate(learner, spec, episodes, seed)?;
    let names: Vec<String> = spec.env.attacks.iter().map(|a| a.name.clone()).collect();
    Ok(DamageBand::from_attacks(&summary.attacks, &names, band))
}
