//! Binary checkpoints, format version 1.
//!
//! All integers are little-endian.
//!
//! ```text
//! magic        8 bytes  "ASNCKPT\0"
//! version      u32
//! config       u64 length + UTF-8 TOML of the resolved RunConfig
//! seed, step, episode   u64 each
//! opt_steps    u64 optimizer steps taken
//! count        u32 parameters, each:
//!   name       u32 length + UTF-8
//!   dims       u32 rank + u64 per dimension
//!   values     f64 per element
//!   slots      u32 optimizer accumulators, each f64 per element
//! sha256       32 bytes over everything above
//! ```

use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use asn_core::autodiff::{Array, ParameterStore};
use asn_core::runner::Learner;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const MAGIC: &[u8; 8] = b"ASNCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub seed: u64,
    pub step: u64,
    pub episode: u64,
    pub params: ParameterStore,
}

impl Checkpoint {
    pub fn new(config: &RunConfig, seed: u64, step: u64, episode: u64, learner: &Learner) -> Self {
        Self {
            config: config.clone(),
            seed,
            step,
            episode,
            params: learner.store().clone(),
        }
    }

    /// Rebuilds the learner the checkpoint was taken from.
    pub fn learner(&self) -> Result<Learner> {
        let mut learner = Learner::build(&self.config.run, self.seed)?;
        learner
            .load_state(&self.params)
            .context("checkpoint parameters do not fit the network its config describes")?;
        Ok(learner)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let config = self.config.to_toml()?;
        out.extend_from_slice(&(config.len() as u64).to_le_bytes());
        out.extend_from_slice(config.as_bytes());
        for v in [self.seed, self.step, self.episode] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.params.step.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (_, p) in self.params.iter() {
            out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
            out.extend_from_slice(p.name.as_bytes());
            out.extend_from_slice(&(p.value.shape().len() as u32).to_le_bytes());
            for &d in p.value.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &x in p.value.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
            out.extend_from_slice(&(p.state.len() as u32).to_le_bytes());
            for &x in p.state.iter().flat_map(|a| a.data()) {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        ensure!(bytes.len() >= MAGIC.len() + 4, "not a checkpoint: file is only {} bytes", bytes.len());
        ensure!(&bytes[..8] == MAGIC, "not a checkpoint: bad magic bytes");
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            bail!("checkpoint format version {version} is not supported (this build reads version {FORMAT_VERSION})");
        }
        ensure!(bytes.len() >= 12 + 32, "checkpoint (format version {version}) is truncated");
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        ensure!(
            Sha256::digest(body).as_slice() == digest,
            "checkpoint (format version {version}) failed its checksum: the file is corrupted or truncated"
        );
        let mut r = Reader { buf: body, pos: 12 };
        let config_len = r.u64()? as usize;
        let text = std::str::from_utf8(r.take(config_len)?).context("config is not UTF-8")?;
        let config = RunConfig::parse(text, &[]).context("checkpoint config")?;
        let seed = r.u64()?;
        let step = r.u64()?;
        let episode = r.u64()?;
        let opt_steps = r.u64()?;
        let count = r.u32()?;
        let mut params = ParameterStore::new();
        params.step = opt_steps;
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?).context("parameter name is not UTF-8")?.to_string();
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            let id = params.insert(&name, Array::new(shape.clone(), data)?)?;
            let slots = r.u32()?;
            for _ in 0..slots {
                let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
                params.get_mut(id).state.push(Array::new(shape.clone(), data)?);
            }
        }
        ensure!(r.pos == body.len(), "checkpoint has {} trailing bytes", body.len() - r.pos);
        Ok(Self {
            config,
            seed,
            step,
            episode,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_bytes()?).with_context(|| format!("writing {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_bytes(&bytes).with_context(|| format!("loading checkpoint {}", path.display()))
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        ensure!(self.pos + n <= self.buf.len(), "checkpoint is truncated at byte {}", self.pos);
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
