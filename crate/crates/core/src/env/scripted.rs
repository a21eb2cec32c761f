use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::Metric;
use super::CombatEnv;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScriptedPolicy {
    /// Uniform over the validity mask.
    RandomValid,
    /// Attack the nearest living enemy with the strongest option in range,
    /// otherwise step towards it.
    NearestAttacker,
}

/// Actions for every member of `team`, in global id order.
pub fn scripted_actions<R: Rng + ?Sized>(env: &CombatEnv, team: usize, policy: ScriptedPolicy, rng: &mut R) -> Vec<usize> {
    env.config()
        .team_range(team)
        .map(|i| {
            if !env.agents()[i].alive {
                return env.action_space(team).idle();
            }
            match policy {
                ScriptedPolicy::RandomValid => random_valid(env, i, rng),
                ScriptedPolicy::NearestAttacker => nearest_attacker(env, i),
            }
        })
        .collect()
}

fn random_valid<R: Rng + ?Sized>(env: &CombatEnv, agent: usize, rng: &mut R) -> usize {
    let valid: Vec<usize> = env
        .validity_mask(agent)
        .iter()
        .enumerate()
        .filter_map(|(a, &ok)| ok.then_some(a))
        .collect();
    valid[rng.gen_range(0..valid.len())]
}

fn nearest_attacker(env: &CombatEnv, agent: usize) -> usize {
    let team = env.config().team_of(agent);
    let space = env.action_space(team);
    let opponents = env.config().team_range(1 - team);
    let first = opponents.start;
    // nearest living enemy, lowest id on ties
    let Some(target) = opponents
        .filter(|&j| env.agents()[j].alive)
        .min_by_key(|&j| (env.distance(agent, j), j))
    else {
        return space.stop();
    };
    let d = env.distance(agent, target);
    let best = env
        .config()
        .attacks
        .iter()
        .enumerate()
        .filter(|(_, o)| o.range >= d)
        .max_by_key(|&(k, o)| (o.damage, core::cmp::Reverse(k)));
    if let Some((option, _)) = best {
        return space.attack_id(target - first, option);
    }

    let goal = env.agents()[target].pos();
    let me = env.agents()[agent].pos();
    let key = |p: (i32, i32)| (env.config().metric.distance(p, goal), Metric::Manhattan.distance(p, goal));
    let mask = env.validity_mask(agent);
    let mut choice = space.stop();
    let mut best_key = key(me);
    for id in space.moves() {
        if !mask[id] {
            continue;
        }
        if let Ok(super::Action::Move { dx, dy }) = space.decode(id) {
            let k = key((me.0 + dx, me.1 + dy));
            if k < best_key {
                best_key = k;
                choice = id;
            }
        }
    }
    choice
}
