use alloc::vec::Vec;

use super::config::{EnvConfig, Preset};
use crate::nets::{ActionLayout, ObservationLayout, OutAction};
use crate::{Error, Result};

/// A decoded action id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    /// Only valid for dead agents (marines preset).
    NoOp,
    Stop,
    Move { dx: i32, dy: i32 },
    /// `opponent` indexes the acting agent's opponent team in id order.
    Attack { opponent: usize, option: usize },
}

/// Action id scheme of a preset.
///
/// mmo: `0` stop, `1..=4` left/right/up/down, then `5 + opponent * options + option`.
/// marines: `0` no-op, `1` stop, `2..=5` north/south/east/west, then
/// `6 + opponent * options + option`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionSpace {
    preset: Preset,
    opponents: usize,
    options: usize,
}

const MMO_MOVES: [(i32, i32); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
const MARINE_MOVES: [(i32, i32); 4] = [(0, -1), (0, 1), (1, 0), (-1, 0)];

impl ActionSpace {
    pub fn new(config: &EnvConfig, team: usize) -> Self {
        Self {
            preset: config.preset,
            opponents: config.team_sizes[1 - team],
            options: config.attacks.len(),
        }
    }

    pub fn first_attack(&self) -> usize {
        match self.preset {
            Preset::Mmo => 5,
            Preset::Marines => 6,
        }
    }

    pub fn num_actions(&self) -> usize {
        self.first_attack() + self.opponents * self.options
    }

    /// Action that always passes the validity check for a living agent.
    pub fn stop(&self) -> usize {
        match self.preset {
            Preset::Mmo => 0,
            Preset::Marines => 1,
        }
    }

    /// Action submitted on behalf of dead agents.
    pub fn idle(&self) -> usize {
        0
    }

    pub fn attack_id(&self, opponent: usize, option: usize) -> usize {
        self.first_attack() + opponent * self.options + option
    }

    pub fn decode(&self, id: usize) -> Result<Action> {
        let n = self.num_actions();
        if id >= n {
            return Err(Error::ActionOutOfRange { action: id, num_actions: n });
        }
        let first = self.first_attack();
        if id >= first {
            let k = id - first;
            return Ok(Action::Attack {
                opponent: k / self.options,
                option: k % self.options,
            });
        }
        Ok(match (self.preset, id) {
            (Preset::Mmo, 0) => Action::Stop,
            (Preset::Mmo, m) => {
                let (dx, dy) = MMO_MOVES[m - 1];
                Action::Move { dx, dy }
            }
            (Preset::Marines, 0) => Action::NoOp,
            (Preset::Marines, 1) => Action::Stop,
            (Preset::Marines, m) => {
                let (dx, dy) = MARINE_MOVES[m - 2];
                Action::Move { dx, dy }
            }
        })
    }

    /// Ids of the four moves.
    pub fn moves(&self) -> core::ops::Range<usize> {
        let start = self.stop() + 1;
        start..start + 4
    }

    /// In/out partition: attacks on opponent `k` target observation block
    /// `teammates + k` (teammate blocks come first).
    pub fn layout(&self, teammates: usize, obs: &ObservationLayout) -> Result<ActionLayout> {
        let in_actions: Vec<usize> = (0..self.first_attack()).collect();
        let mut out = Vec::with_capacity(self.opponents * self.options);
        for k in 0..self.opponents {
            for option in 0..self.options {
                out.push(OutAction {
                    id: self.attack_id(k, option),
                    target: teammates + k,
                    variant: option,
                });
            }
        }
        ActionLayout::new(in_actions, out, obs)
    }
}
