//! Argument parsing and dispatch for the `asn` binary.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use asn_core::env::ScriptedPolicy;
use asn_core::runner::Learner;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::checkpoint::Checkpoint;
use crate::commands::{self, parse_list, Adjust};
use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "asn", version, about = "Train, evaluate and probe action semantics networks")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run config. Without one, built-in defaults apply.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run seed. Replaces the config's seed list when training; the
    /// evaluation seed for the other verbs.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Dotted config override, `key=value`. Repeatable.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Restrict learners to valid actions.
    #[arg(long, global = true)]
    pub mask_invalid: Option<OnOff>,
    /// Observation value for absent entities.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub padding: Option<f64>,
}

impl Common {
    /// `--override`s followed by the overrides implied by other flags.
    pub fn overrides(&self) -> Vec<String> {
        let mut out = self.overrides.clone();
        if let Some(m) = self.mask_invalid {
            out.push(format!("mask_invalid={}", m == OnOff::On));
        }
        if let Some(p) = self.padding {
            out.push(format!("env.padding={p:?}"));
        }
        out
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path, &self.overrides())?,
            None => RunConfig::parse("", &self.overrides())?,
        };
        if let Some(seed) = self.seed {
            c.seeds = vec![seed];
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, Args)]
pub struct CheckpointArgs {
    /// Checkpoint file written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train every configured seed into `<out>/seed_<n>/`.
    Train {
        /// Seeds trained in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Greedy evaluation of a checkpoint; prints a JSON summary.
    Evaluate {
        #[command(flatten)]
        ckpt: CheckpointArgs,
        #[arg(long, default_value_t = 32)]
        episodes: usize,
        #[arg(long, value_parser = parse_policy)]
        opponent: Option<ScriptedPolicy>,
    },
    /// Attack Q-values against one opponent over a distance sweep.
    ProbeDistance {
        #[command(flatten)]
        ckpt: CheckpointArgs,
        /// Opponent slot.
        #[arg(long, default_value_t = 0)]
        target: usize,
        /// `a..=b`, `a..b` or a list; defaults to the whole grid.
        #[arg(long)]
        distances: Option<String>,
    },
    /// Attack Q-values on two opponents over an HP-difference sweep.
    ProbeHpdiff {
        #[command(flatten)]
        ckpt: CheckpointArgs,
        /// `a..=b`, `a..b` or a list; defaults to the widest symmetric sweep.
        #[arg(long, allow_hyphen_values = true)]
        deltas: Option<String>,
    },
    /// Attack-option frequency and damage per distance band.
    ProbeDamage {
        #[command(flatten)]
        ckpt: CheckpointArgs,
        #[arg(long, default_value = "2,4,10")]
        bands: String,
        #[arg(long, default_value_t = 32)]
        episodes: usize,
    },
    /// Record one greedy episode to `replay.log`.
    Replay {
        #[command(flatten)]
        ckpt: CheckpointArgs,
    },
}

fn parse_policy(s: &str) -> Result<ScriptedPolicy, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown opponent `{s}` (expected random-valid or nearest-attacker)"))
}

fn loaded(common: &Common, ckpt: &CheckpointArgs, opponent: Option<ScriptedPolicy>) -> Result<(Checkpoint, Learner, u64)> {
    let adjust = Adjust {
        overrides: common.overrides(),
        opponent,
    };
    let (c, l) = commands::load(&ckpt.checkpoint, &adjust)?;
    let seed = common.seed.unwrap_or(c.seed);
    Ok((c, l, seed))
}

fn out_file(out: &Path, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    Ok(out.join(name))
}

pub fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    match cli.command {
        Command::Train { jobs } => {
            let config = common.run_config()?;
            for o in commands::train(&config, &common.out, jobs)? {
                eprintln!("seed {}: {} rows, checkpoints at {:?} in {}", o.seed, o.rows, o.checkpoints, o.dir.display());
            }
        }
        Command::Evaluate { ckpt, episodes, opponent } => {
            let (c, l, seed) = loaded(common, &ckpt, opponent)?;
            let report = commands::evaluate(&c, &l, episodes, seed)?;
            println!("{}", serde_json::to_string(&report)?);
        }
        Command::ProbeDistance { ckpt, target, distances } => {
            let (c, l, _) = loaded(common, &ckpt, None)?;
            let d = match distances {
                Some(s) => parse_list(&s)?,
                None => commands::default_distances(&c.config.run),
            };
            commands::probe_distance(&c, &l, target, &d, &out_file(&common.out, "probe_distance.csv")?)?;
        }
        Command::ProbeHpdiff { ckpt, deltas } => {
            let (c, l, _) = loaded(common, &ckpt, None)?;
            let d = match deltas {
                Some(s) => parse_list(&s)?,
                None => commands::default_deltas(&c.config.run),
            };
            commands::probe_hp_difference(&c, &l, &d, &out_file(&common.out, "probe_hpdiff.csv")?)?;
        }
        Command::ProbeDamage { ckpt, bands, episodes } => {
            let (c, l, seed) = loaded(common, &ckpt, None)?;
            commands::probe_damage(&c, &l, &parse_list(&bands)?, episodes, seed, &out_file(&common.out, "probe_damage.csv")?)?;
        }
        Command::Replay { ckpt } => {
            let (c, l, seed) = loaded(common, &ckpt, None)?;
            commands::replay(&c, &l, seed, &out_file(&common.out, "replay.log")?)?;
        }
    }
    Ok(())
}
