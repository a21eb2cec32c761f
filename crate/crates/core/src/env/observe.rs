use alloc::vec;
use alloc::vec::Vec;

use super::config::Preset;
use super::CombatEnv;
use crate::nets::{BlockInfo, BlockKind, ObservationLayout};

/// mmo self fields: ttl, hp, food, water, x, y, damage suffered, frozen.
pub const MMO_SELF: usize = 8;
/// mmo per-agent fields: rel x, rel y, teammate flag, hp, food, water, frozen.
pub const MMO_BLOCK: usize = 7;
/// marines self fields: hp, x, y, unit type.
pub const MARINE_SELF: usize = 4;
/// marines per-unit fields: distance, rel x, rel y, unit type, hp.
pub const MARINE_BLOCK: usize = 5;

/// Per-agent fields of the global state: alive, hp, x, y.
pub const STATE_FIELDS: usize = 4;

impl CombatEnv {
    /// Other agents as observed by a member of `team`: teammates first, then
    /// opponents, each in global id order.
    fn others(&self, agent: usize) -> impl Iterator<Item = usize> + '_ {
        let team = self.config.team_of(agent);
        self.config
            .team_range(team)
            .filter(move |&j| j != agent)
            .chain(self.config.team_range(1 - team))
    }

    pub fn observation_layout(&self, team: usize) -> ObservationLayout {
        let (self_len, block_len) = match self.config.preset {
            Preset::Mmo => (MMO_SELF, MMO_BLOCK),
            Preset::Marines => (MARINE_SELF, MARINE_BLOCK),
        };
        let representative = self.config.team_range(team).start;
        let blocks = self
            .others(representative)
            .map(|j| BlockInfo {
                kind: if self.config.team_of(j) == team {
                    BlockKind::Teammate
                } else {
                    BlockKind::Opponent
                },
                agent_type: self.config.unit_type(j),
            })
            .collect();
        ObservationLayout {
            env_len: 0,
            self_len,
            block_len,
            blocks,
        }
    }

    /// Length of the observation of a member of `team`.
    pub fn observation_len(&self, team: usize) -> usize {
        self.observation_layout(team).total_len()
    }

    fn visible(&self, agent: usize, other: usize) -> bool {
        let o = &self.agents[other];
        o.alive && self.config.sight.is_none_or(|s| self.distance(agent, other) <= s)
    }

    /// Flat observation of `agent`; all zeros when it is dead.
    pub fn observation(&self, agent: usize) -> Vec<f64> {
        let team = self.config.team_of(agent);
        let len = self.observation_len(team);
        let me = &self.agents[agent];
        if !me.alive {
            return vec![0.0; len];
        }
        let w = f64::from(self.config.width);
        let h = f64::from(self.config.height);
        let max_hp = f64::from(self.config.max_hp);
        let pad = self.config.padding;
        let mut out = Vec::with_capacity(len);
        match self.config.preset {
            Preset::Mmo => {
                let ttl = f64::from(self.config.max_ticks.saturating_sub(self.tick)) / f64::from(self.config.max_ticks);
                out.extend_from_slice(&[
                    ttl,
                    f64::from(me.hp) / max_hp,
                    0.0,
                    0.0,
                    f64::from(me.x) / w,
                    f64::from(me.y) / h,
                    f64::from(self.damage_taken[agent]) / max_hp,
                    f64::from(u8::from(me.frozen)),
                ]);
                for j in self.others(agent) {
                    if !self.visible(agent, j) {
                        out.extend_from_slice(&[pad; MMO_BLOCK]);
                        continue;
                    }
                    let o = &self.agents[j];
                    out.extend_from_slice(&[
                        f64::from(o.x - me.x) / w,
                        f64::from(o.y - me.y) / h,
                        f64::from(u8::from(o.team == me.team)),
                        f64::from(o.hp) / max_hp,
                        0.0,
                        0.0,
                        f64::from(u8::from(o.frozen)),
                    ]);
                }
            }
            Preset::Marines => {
                let sight = f64::from(self.config.sight.unwrap_or(self.config.width.max(self.config.height)));
                out.extend_from_slice(&[
                    f64::from(me.hp) / max_hp,
                    f64::from(me.x) / w,
                    f64::from(me.y) / h,
                    me.unit_type as f64,
                ]);
                for j in self.others(agent) {
                    if !self.visible(agent, j) {
                        out.extend_from_slice(&[pad; MARINE_BLOCK]);
                        continue;
                    }
                    let o = &self.agents[j];
                    out.extend_from_slice(&[
                        f64::from(self.distance(agent, j)) / sight,
                        f64::from(o.x - me.x) / sight,
                        f64::from(o.y - me.y) / sight,
                        o.unit_type as f64,
                        f64::from(o.hp) / max_hp,
                    ]);
                }
            }
        }
        debug_assert_eq!(out.len(), len);
        out
    }

    pub fn observations(&self) -> Vec<Vec<f64>> {
        (0..self.agents.len()).map(|i| self.observation(i)).collect()
    }

    /// Global state for centralised mixers: `[alive, hp, x, y]` per agent
    /// followed by the elapsed fraction of the episode.
    pub fn state(&self) -> Vec<f64> {
        let w = f64::from(self.config.width);
        let h = f64::from(self.config.height);
        let max_hp = f64::from(self.config.max_hp);
        let mut s = Vec::with_capacity(self.state_len());
        for a in &self.agents {
            s.extend_from_slice(&[
                f64::from(u8::from(a.alive)),
                f64::from(a.hp) / max_hp,
                f64::from(a.x) / w,
                f64::from(a.y) / h,
            ]);
        }
        s.push(f64::from(self.tick) / f64::from(self.config.max_ticks));
        s
    }

    pub fn state_len(&self) -> usize {
        STATE_FIELDS * self.agents.len() + 1
    }
}
