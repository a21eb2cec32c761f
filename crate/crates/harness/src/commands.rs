//! The CLI verbs as library functions.
//!
//! Output files, all version 1:
//!
//! - `seed_<n>/metrics.csv`: see [`crate::metrics`].
//! - `seed_<n>/checkpoints/step_<n>`: see [`crate::checkpoint`].
//! - `seed_<n>/config.toml`: the resolved config of that seed.
//! - `probe_distance.csv`: `distance, q_<option>...`, one row per distance.
//! - `probe_hpdiff.csv`: `delta, q1_<option>..., q2_<option>...`, where `delta`
//!   is opponent 1's HP minus opponent 2's.
//! - `probe_damage.csv`: `band, option, count, frequency, mean_damage`, one
//!   row per option plus an `all` row per band.
//! - `replay.log`: JSON lines. The first line is a header
//!   `{"format":"asn-replay","version":1,...}`; each later line is one
//!   [`ReplayFrame`](asn_core::runner::ReplayFrame).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use asn_core::env::ScriptedPolicy;
use asn_core::runner::{self, Learner, RunSpec, Trainer};
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::metrics::{MetricsRecord, MetricsWriter};

pub const PROBE_FORMAT_VERSION: u32 = 1;
pub const REPLAY_FORMAT_VERSION: u32 = 1;

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

pub fn checkpoint_path(out: &Path, seed: u64, step: u64) -> PathBuf {
    seed_dir(out, seed).join("checkpoints").join(format!("step_{step}"))
}

/// What one seed's training left on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub seed: u64,
    pub dir: PathBuf,
    pub checkpoints: Vec<u64>,
    pub rows: usize,
}

/// Trains every seed of `config` into `out/seed_<n>/`, using up to `jobs`
/// threads. Outputs do not depend on `jobs`.
pub fn train(config: &RunConfig, out: &Path, jobs: usize) -> Result<Vec<TrainOutput>> {
    config.validate()?;
    let seeds = config.seeds.clone();
    let jobs = jobs.clamp(1, seeds.len());
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<TrainOutput>>>> = Mutex::new((0..seeds.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                if k >= seeds.len() {
                    break;
                }
                let r = train_seed(config, seeds[k], out);
                results.lock().expect("no poisoned workers")[k] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("no poisoned workers")
        .into_iter()
        .map(|r| r.expect("every seed ran"))
        .collect()
}

fn train_seed(config: &RunConfig, seed: u64, out: &Path) -> Result<TrainOutput> {
    let mut config = config.clone();
    config.seeds = vec![seed];
    let dir = seed_dir(out, seed);
    std::fs::create_dir_all(dir.join("checkpoints")).with_context(|| format!("creating {}", dir.display()))?;
    std::fs::write(dir.join("config.toml"), config.to_toml()?)?;

    let started = Instant::now();
    let mut trainer = Trainer::new(config.run.clone(), seed)?;
    let mut metrics = MetricsWriter::create(&dir.join("metrics.csv"))?;
    let mut saved = vec![0];
    Checkpoint::new(&config, seed, 0, 0, trainer.learner()).save(&checkpoint_path(out, seed, 0))?;

    let total = config.run.total_steps;
    let interval = config.checkpoint_interval;
    let mut rows = 0;
    trainer.run(|row, learner| {
        let wall = if config.record_wall_clock { started.elapsed().as_secs_f64() } else { 0.0 };
        metrics
            .write(&MetricsRecord::new(&config.run_id, seed, row, wall))
            .map_err(|e| asn_core::Error::Unsupported(format!("{e:#}")))?;
        rows += 1;
        let last = *saved.last().expect("step 0 saved");
        let due = row.step == total || (interval > 0 && row.step / interval > last / interval);
        if due && row.step != last {
            Checkpoint::new(&config, seed, row.step, row.episode, learner)
                .save(&checkpoint_path(out, seed, row.step))
                .map_err(|e| asn_core::Error::Unsupported(format!("{e:#}")))?;
            saved.push(row.step);
        }
        Ok(())
    })?;
    metrics.finish()?;
    Ok(TrainOutput {
        seed,
        dir,
        checkpoints: saved,
        rows,
    })
}

/// Settings a checkpoint-reading verb may change before use.
#[derive(Debug, Clone, Default)]
pub struct Adjust {
    pub overrides: Vec<String>,
    pub opponent: Option<ScriptedPolicy>,
}

/// Loads a checkpoint, re-resolving its config with `adjust` applied.
pub fn load(path: &Path, adjust: &Adjust) -> Result<(Checkpoint, Learner)> {
    let mut ckpt = Checkpoint::load(path)?;
    if !adjust.overrides.is_empty() {
        ckpt.config = RunConfig::parse(&ckpt.config.to_toml()?, &adjust.overrides).context("applying overrides to the checkpoint config")?;
    }
    if let Some(o) = adjust.opponent {
        ckpt.config.run.opponent = o;
    }
    let learner = ckpt.learner()?;
    Ok((ckpt, learner))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub checkpoint_step: u64,
    pub episodes: usize,
    pub seed: u64,
    pub opponent: ScriptedPolicy,
    pub mask_invalid: bool,
    pub wins: usize,
    pub win_rate: f64,
    pub mean_return: f64,
    /// Half-width of the 95% interval of the mean return.
    pub return_ci95: f64,
    pub valid_pct: f64,
}

pub fn evaluate(ckpt: &Checkpoint, learner: &Learner, episodes: usize, seed: u64) -> Result<EvalReport> {
    let spec = &ckpt.config.run;
    let s = runner::evaluate(learner, spec, episodes, seed)?;
    Ok(EvalReport {
        checkpoint_step: ckpt.step,
        episodes,
        seed,
        opponent: spec.opponent,
        mask_invalid: spec.mask_invalid,
        wins: s.wins,
        win_rate: s.win_rate(),
        mean_return: s.mean_return(),
        return_ci95: s.return_ci95(),
        valid_pct: s.valid_pct(),
    })
}

fn option_names(spec: &RunSpec) -> Vec<String> {
    spec.env.attacks.iter().map(|a| a.name.clone()).collect()
}

fn grid_diagonal(spec: &RunSpec) -> u32 {
    let c = &spec.env;
    c.metric.distance((0, 0), (c.width as i32 - 1, c.height as i32 - 1))
}

/// Default probe distances: every distance on the grid.
pub fn default_distances(spec: &RunSpec) -> Vec<u32> {
    (1..=grid_diagonal(spec)).collect()
}

/// Default HP differences: the widest symmetric sweep.
pub fn default_deltas(spec: &RunSpec) -> Vec<i64> {
    let m = i64::from(spec.env.max_hp) - 1;
    (-m..=m).collect()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn fmt(x: f64) -> String {
    format!("{x:?}")
}

pub fn probe_distance(ckpt: &Checkpoint, learner: &Learner, target: usize, distances: &[u32], path: &Path) -> Result<()> {
    let spec = &ckpt.config.run;
    let points = runner::probe_distance(learner, spec, target, distances)?;
    let mut w = csv_writer(path)?;
    let mut header = vec!["distance".to_string()];
    header.extend(option_names(spec).iter().map(|n| format!("q_{n}")));
    w.write_record(&header)?;
    for p in points {
        let mut row = vec![p.distance.to_string()];
        row.extend(p.q.iter().map(|&q| fmt(q)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn probe_hp_difference(ckpt: &Checkpoint, learner: &Learner, deltas: &[i64], path: &Path) -> Result<()> {
    let spec = &ckpt.config.run;
    let points = runner::probe_hp_difference(learner, spec, deltas)?;
    let names = option_names(spec);
    let mut w = csv_writer(path)?;
    let mut header = vec!["delta".to_string()];
    header.extend(names.iter().map(|n| format!("q1_{n}")));
    header.extend(names.iter().map(|n| format!("q2_{n}")));
    w.write_record(&header)?;
    for p in points {
        let mut row = vec![p.delta.to_string()];
        row.extend(p.q_first.iter().chain(&p.q_second).map(|&q| fmt(q)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct DamageRow {
    pub band: u32,
    pub option: String,
    pub count: usize,
    pub frequency: f64,
    pub mean_damage: f64,
}

pub fn damage_rows(ckpt: &Checkpoint, learner: &Learner, bands: &[u32], episodes: usize, seed: u64) -> Result<Vec<DamageRow>> {
    ensure!(!bands.is_empty(), "at least one distance band is needed");
    let mut rows = Vec::new();
    for &band in bands {
        let b = runner::damage_histogram(learner, &ckpt.config.run, episodes, seed, band)?;
        for (option, count, frequency, mean_damage) in b.options {
            rows.push(DamageRow {
                band,
                option,
                count,
                frequency,
                mean_damage,
            });
        }
        rows.push(DamageRow {
            band,
            option: "all".into(),
            count: b.total,
            frequency: if b.total == 0 { 0.0 } else { 1.0 },
            mean_damage: b.mean_damage,
        });
    }
    Ok(rows)
}

pub fn probe_damage(ckpt: &Checkpoint, learner: &Learner, bands: &[u32], episodes: usize, seed: u64, path: &Path) -> Result<()> {
    let rows = damage_rows(ckpt, learner, bands, episodes, seed)?;
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    crate::metrics::write_table(BufWriter::new(file), &rows)
}

#[derive(Serialize)]
struct ReplayHeader<'a> {
    format: &'a str,
    version: u32,
    seed: u64,
    checkpoint_step: u64,
    agents: usize,
    team_sizes: [usize; 2],
    width: u32,
    height: u32,
}

/// Writes the first greedy evaluation episode for `seed` as JSON lines.
pub fn replay(ckpt: &Checkpoint, learner: &Learner, seed: u64, path: &Path) -> Result<usize> {
    let spec = &ckpt.config.run;
    let frames = runner::replay_episode(learner, spec, seed)?;
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    let header = ReplayHeader {
        format: "asn-replay",
        version: REPLAY_FORMAT_VERSION,
        seed,
        checkpoint_step: ckpt.step,
        agents: spec.env.num_agents(),
        team_sizes: spec.env.team_sizes,
        width: spec.env.width,
        height: spec.env.height,
    };
    serde_json::to_writer(&mut w, &header)?;
    writeln!(w)?;
    for f in &frames {
        serde_json::to_writer(&mut w, f)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(frames.len())
}

/// Parses `a..=b`, `a..b` or a comma-separated list.
pub fn parse_list<T>(text: &str) -> Result<Vec<T>>
where
    T: std::str::FromStr + Copy + PartialOrd + std::ops::Add<Output = T> + From<u8>,
    T::Err: std::fmt::Display,
{
    let num = |s: &str| s.trim().parse::<T>().map_err(|e| anyhow::anyhow!("`{}`: {e}", s.trim()));
    let one = T::from(1);
    let (lo, hi, inclusive) = if let Some((a, b)) = text.split_once("..=") {
        (a, b, true)
    } else if let Some((a, b)) = text.split_once("..") {
        (a, b, false)
    } else {
        return text.split(',').filter(|s| !s.trim().is_empty()).map(num).collect();
    };
    let (lo, hi) = (num(lo)?, num(hi)?);
    let mut out = Vec::new();
    let mut v = lo;
    while v < hi || (inclusive && v == hi) {
        out.push(v);
        v = v + one;
    }
    if out.is_empty() {
        bail!("range `{text}` is empty");
    }
    Ok(out)
}
