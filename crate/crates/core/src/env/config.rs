use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Three attack options, per-tick HP decay, HP-difference terminal reward.
    Mmo,
    /// One attack type; damage, kill and win rewards.
    Marines,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    #[default]
    Chebyshev,
    Manhattan,
}

impl Metric {
    pub fn distance(self, a: (i32, i32), b: (i32, i32)) -> u32 {
        let dx = (a.0 - b.0).unsigned_abs();
        let dy = (a.1 - b.1).unsigned_abs();
        match self {
            Metric::Chebyshev => dx.max(dy),
            Metric::Manhattan => dx + dy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackOption {
    pub name: String,
    pub range: u32,
    pub damage: u32,
}

impl AttackOption {
    pub fn new(name: &str, range: u32, damage: u32) -> Self {
        Self {
            name: name.to_string(),
            range,
            damage,
        }
    }
}

/// Team reward terms. A team's reward for one tick is
/// `damage * dealt + kill * enemies killed + death * own deaths
///  + failed_attack * own invalid attacks + per_tick + win * won`,
/// plus `own HP - enemy HP` on the terminal tick when `hp_difference` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardConfig {
    pub damage: f64,
    pub kill: f64,
    pub death: f64,
    pub failed_attack: f64,
    pub per_tick: f64,
    pub win: f64,
    pub hp_difference: bool,
}

impl RewardConfig {
    pub fn mmo() -> Self {
        Self {
            damage: 0.0,
            kill: 0.0,
            death: -10.0,
            failed_attack: -0.1,
            per_tick: -0.01,
            win: 0.0,
            hp_difference: true,
        }
    }

    pub fn marines() -> Self {
        Self {
            damage: 1.0,
            kill: 10.0,
            death: 0.0,
            failed_attack: 0.0,
            per_tick: 0.0,
            win: 200.0,
            hp_difference: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub preset: Preset,
    pub width: u32,
    pub height: u32,
    /// Agents per team; team 0 holds global ids `0..team_sizes[0]`.
    pub team_sizes: [usize; 2],
    pub max_ticks: u32,
    pub max_hp: u32,
    /// HP every living agent loses at the end of a tick.
    pub hp_decay: u32,
    pub attacks: Vec<AttackOption>,
    /// Other agents farther than this are unseen; `None` sees the whole grid.
    pub sight: Option<u32>,
    /// Fill value for blocks of dead or unseen agents.
    pub padding: f64,
    #[serde(default)]
    pub metric: Metric,
    pub rewards: RewardConfig,
    /// Unit type of each team slot (shared by both teams). Empty means all 0.
    #[serde(default)]
    pub unit_types: Vec<usize>,
}

impl EnvConfig {
    pub fn mmo() -> Self {
        Self {
            preset: Preset::Mmo,
            width: 10,
            height: 10,
            team_sizes: [3, 3],
            max_ticks: 200,
            max_hp: 100,
            hp_decay: 1,
            attacks: vec![
                AttackOption::new("melee", 2, 5),
                AttackOption::new("range", 4, 2),
                AttackOption::new("mage", 10, 1),
            ],
            sight: None,
            padding: 0.0,
            metric: Metric::Chebyshev,
            rewards: RewardConfig::mmo(),
            unit_types: Vec::new(),
        }
    }

    /// `n` versus `n` single-attack skirmish.
    pub fn marines(n: usize) -> Self {
        Self {
            preset: Preset::Marines,
            width: 8,
            height: 8,
            team_sizes: [n, n],
            max_ticks: 60,
            max_hp: 10,
            hp_decay: 0,
            attacks: vec![AttackOption::new("attack", 3, 2)],
            sight: Some(6),
            padding: 0.0,
            metric: Metric::Chebyshev,
            rewards: RewardConfig::marines(),
            unit_types: Vec::new(),
        }
    }

    pub fn num_agents(&self) -> usize {
        self.team_sizes[0] + self.team_sizes[1]
    }

    pub fn team_of(&self, agent: usize) -> usize {
        usize::from(agent >= self.team_sizes[0])
    }

    /// Global ids of a team.
    pub fn team_range(&self, team: usize) -> core::ops::Range<usize> {
        if team == 0 {
            0..self.team_sizes[0]
        } else {
            self.team_sizes[0]..self.num_agents()
        }
    }

    pub fn unit_type(&self, agent: usize) -> usize {
        let slot = agent - self.team_range(self.team_of(agent)).start;
        self.unit_types.get(slot).copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.team_sizes.contains(&0) {
            return Err(Error::Config("team sizes must be at least 1".into()));
        }
        if self.max_ticks == 0 || self.max_hp == 0 {
            return Err(Error::Config("max_ticks and max_hp must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("grid must be non-empty".into()));
        }
        let tiles = self.width as usize * self.height as usize;
        if self.num_agents() > tiles {
            return Err(Error::Config(format!(
                "{} agents do not fit on a {}x{} grid",
                self.num_agents(),
                self.width,
                self.height
            )));
        }
        if self.attacks.is_empty() {
            return Err(Error::Config("at least one attack option is required".into()));
        }
        if let Some(a) = self.attacks.iter().find(|a| a.range == 0 || a.damage == 0) {
            return Err(Error::Config(format!("attack `{}` needs positive range and damage", a.name)));
        }
        if self.sight == Some(0) {
            return Err(Error::Config("sight radius must be positive".into()));
        }
        if !self.padding.is_finite() {
            return Err(Error::Config("padding must be finite".into()));
        }
        let longest = self.team_sizes[0].max(self.team_sizes[1]);
        if !self.unit_types.is_empty() && self.unit_types.len() < longest {
            return Err(Error::Config(format!(
                "unit_types lists {} slots, teams need {longest}",
                self.unit_types.len()
            )));
        }
        Ok(())
    }
}
