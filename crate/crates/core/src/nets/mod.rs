//! Agent networks.
//!
//! Every variant maps a flat observation (laid out per
//! [`ObservationLayout`]) to one output per action id of an
//! [`ActionLayout`]: Q-values for value learners, logits for policy learners.
//! The ASN variants score self/environment actions from an embedding of the
//! whole observation and score each action aimed at agent `j` by the inner
//! product of that embedding with an embedding of block `j` alone.

mod asn;
mod baseline;
mod layout;
mod mlp;

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Array, Graph, ParameterStore, Var};
use crate::{Error, Result};

pub use asn::AsnEmbeddings;
pub use layout::{ActionLayout, BlockInfo, BlockKind, ObservationLayout, OutAction, SplitObservation};

use asn::AsnBody;
use baseline::BaselineBody;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// One sub-module per influenced agent.
    Basic,
    /// One sub-module shared by all influenced agents.
    Homogeneous,
    /// One shared sub-module per unit type.
    Mixed,
    /// Multi-action ASN whose per-action heads share their first layer (ASN-M1).
    MultiActionShared,
    /// Multi-action ASN with fully independent per-action heads (ASN-M).
    MultiActionUnshared,
    Vanilla,
    Dueling,
    Attention,
    EntityAttention,
}

impl Variant {
    pub fn is_asn(self) -> bool {
        matches!(
            self,
            Variant::Basic
                | Variant::Homogeneous
                | Variant::Mixed
                | Variant::MultiActionShared
                | Variant::MultiActionUnshared
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Basic => "basic",
            Variant::Homogeneous => "homogeneous",
            Variant::Mixed => "mixed",
            Variant::MultiActionShared => "multi-action-shared",
            Variant::MultiActionUnshared => "multi-action-unshared",
            Variant::Vanilla => "vanilla",
            Variant::Dueling => "dueling",
            Variant::Attention => "attention",
            Variant::EntityAttention => "entity-attention",
        }
    }
}

/// Pairwise interaction between the self embedding and a target embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interaction {
    #[default]
    InnerProduct,
}

/// Scalar interaction of two embedding vectors.
pub fn interaction(e_self: &[f64], e_other: &[f64], tag: Interaction) -> Result<f64> {
    if e_self.len() != e_other.len() {
        return Err(Error::shape("interaction", &[e_self.len()], &[e_other.len()]));
    }
    match tag {
        Interaction::InnerProduct => Ok(e_self.iter().zip(e_other).map(|(a, b)| a * b).sum()),
    }
}

/// Whether outputs are Q-values or policy logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Value,
    Policy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub variant: Variant,
    /// Width of ASN sub-module layers and of both embeddings.
    #[serde(default = "default_embed")]
    pub embed: usize,
    /// Width of the baseline trunks.
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    /// Adds a GRU after the dense layers of every encoder.
    #[serde(default)]
    pub recurrent: bool,
    #[serde(default)]
    pub interaction: Interaction,
}

fn default_embed() -> usize {
    32
}

fn default_hidden() -> usize {
    64
}

impl NetConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            embed: default_embed(),
            hidden: default_hidden(),
            recurrent: false,
            interaction: Interaction::InnerProduct,
        }
    }

    pub fn recurrent(mut self, on: bool) -> Self {
        self.recurrent = on;
        self
    }

    pub fn sizes(mut self, embed: usize, hidden: usize) -> Self {
        self.embed = embed;
        self.hidden = hidden;
        self
    }
}

/// Output of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct NetOutput {
    /// `rows x num_actions`, column `a` for action id `a`.
    pub out: Var,
    /// Next recurrent state, when the network is recurrent.
    pub hidden: Option<Var>,
}

#[derive(Debug, Clone)]
enum Body {
    Asn(AsnBody),
    Baseline(BaselineBody),
}

/// A network definition. Parameters live in a [`ParameterStore`]; the
/// network only records their ids, so one definition evaluates any clone of
/// the store it was built against.
#[derive(Debug, Clone)]
pub struct Network {
    config: NetConfig,
    role: Role,
    obs: ObservationLayout,
    actions: ActionLayout,
    body: Body,
}

impl Network {
    pub fn build<R: Rng + ?Sized>(
        config: &NetConfig,
        role: Role,
        obs: &ObservationLayout,
        actions: &ActionLayout,
        store: &mut ParameterStore,
        prefix: &str,
        rng: &mut R,
    ) -> Result<Self> {
        actions.validate(obs)?;
        if config.embed == 0 || config.hidden == 0 {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        let body = if config.variant.is_asn() {
            Body::Asn(AsnBody::build(config, obs, actions, store, prefix, rng)?)
        } else {
            Body::Baseline(BaselineBody::build(config, obs, actions, store, prefix, rng)?)
        };
        Ok(Self {
            config: config.clone(),
            role,
            obs: obs.clone(),
            actions: actions.clone(),
            body,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn observation_layout(&self) -> &ObservationLayout {
        &self.obs
    }

    pub fn action_layout(&self) -> &ActionLayout {
        &self.actions
    }

    pub fn num_actions(&self) -> usize {
        self.actions.num_actions()
    }

    /// Width of the recurrent state (0 for feed-forward networks).
    pub fn hidden_size(&self) -> usize {
        match &self.body {
            Body::Asn(b) => b.hidden_size(),
            Body::Baseline(b) => b.hidden_size(),
        }
    }

    fn check_obs(&self, g: &Graph<'_>, obs: Var) -> Result<()> {
        let cols = g.value(obs).cols();
        if cols != self.obs.total_len() {
            return Err(Error::ObservationLength {
                expected: self.obs.total_len(),
                got: cols,
            });
        }
        Ok(())
    }

    fn hidden_or_zeros(&self, g: &mut Graph<'_>, obs: Var, hidden: Option<Var>) -> Result<Option<Var>> {
        let size = self.hidden_size();
        if size == 0 {
            return Ok(None);
        }
        let rows = g.value(obs).rows();
        match hidden {
            Some(h) => {
                let (hr, hc) = g.value(h).dims2();
                if hr != rows || hc != size {
                    return Err(Error::shape("hidden state", &[rows, size], &[hr, hc]));
                }
                Ok(Some(h))
            }
            None => Ok(Some(g.input(Array::zeros(&[rows, size])))),
        }
    }

    /// Raw outputs (Q-values or logits) for a batch of observations.
    pub fn forward(&self, g: &mut Graph<'_>, obs: Var, hidden: Option<Var>) -> Result<NetOutput> {
        self.check_obs(g, obs)?;
        let hidden = self.hidden_or_zeros(g, obs, hidden)?;
        match &self.body {
            Body::Asn(b) => b.forward(g, &self.obs, &self.actions, obs, hidden),
            Body::Baseline(b) => b.forward(g, &self.obs, obs, hidden),
        }
    }

    /// Q-values; fails for policy networks.
    pub fn forward_q(&self, g: &mut Graph<'_>, obs: Var, hidden: Option<Var>) -> Result<NetOutput> {
        if self.role == Role::Policy {
            return Err(Error::Unsupported(format!(
                "{} network was built as a policy; it has no Q-values",
                self.config.variant.name()
            )));
        }
        self.forward(g, obs, hidden)
    }

    /// Action probabilities: a row-wise softmax of the outputs.
    pub fn forward_policy(&self, g: &mut Graph<'_>, obs: Var, hidden: Option<Var>) -> Result<NetOutput> {
        let out = self.forward(g, obs, hidden)?;
        Ok(NetOutput {
            out: g.softmax(out.out),
            hidden: out.hidden,
        })
    }

    /// Alias of [`Network::forward`] restricted to the baseline variants.
    pub fn forward_baseline(&self, g: &mut Graph<'_>, obs: Var, hidden: Option<Var>) -> Result<NetOutput> {
        if self.config.variant.is_asn() {
            return Err(Error::Unsupported(format!("{} is not a baseline", self.config.variant.name())));
        }
        self.forward(g, obs, hidden)
    }

    /// The embeddings `e^i` and `e^{i,j_k}` of an ASN network.
    pub fn embeddings(&self, g: &mut Graph<'_>, obs: Var, hidden: Option<Var>) -> Result<AsnEmbeddings> {
        self.check_obs(g, obs)?;
        let hidden = self.hidden_or_zeros(g, obs, hidden)?;
        match &self.body {
            Body::Asn(b) => b.embeddings(g, &self.obs, obs, hidden),
            Body::Baseline(_) => Err(Error::Unsupported("baselines have no per-target embeddings".into())),
        }
    }

    /// Evaluates raw outputs without keeping the graph. `obs` is
    /// `rows x obs_len`; `hidden` (if any) is `rows x hidden_size`.
    pub fn evaluate(&self, store: &ParameterStore, obs: &Array, hidden: Option<&Array>) -> Result<(Array, Option<Array>)> {
        let mut g = Graph::new(store);
        let x = g.input(obs.clone());
        let h = hidden.map(|h| g.input(h.clone()));
        let out = self.forward(&mut g, x, h)?;
        let next = out.hidden.map(|h| g.value(h).clone());
        Ok((g.value(out.out).clone(), next))
    }

    /// Greedy action per row, lowest id on exact ties.
    pub fn greedy(outputs: &Array) -> Vec<usize> {
        (0..outputs.rows()).map(|r| argmax(outputs.row_slice(r))).collect()
    }
}

/// Index of the maximum, lowest index on exact ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Index of the maximum among entries with `mask[i]`, lowest index on ties.
/// Falls back to the unmasked argmax when nothing is allowed.
pub fn masked_argmax(values: &[f64], mask: &[bool]) -> usize {
    let mut best: Option<usize> = None;
    for (i, (&v, &ok)) in values.iter().zip(mask).enumerate() {
        if ok && best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best.unwrap_or_else(|| argmax(values))
}
