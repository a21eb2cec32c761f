use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::mlp::Encoder;
use super::{ActionLayout, NetConfig, NetOutput, ObservationLayout, Variant};
use crate::autodiff::{Dense, Graph, ParameterStore, Var};
use crate::{Error, Result};

/// Embeddings of one forward pass.
#[derive(Debug, Clone)]
pub struct AsnEmbeddings {
    /// `e^i`, from the full observation.
    pub own: Var,
    /// `(block, [e^{i,j_1}, ..., e^{i,j_m}])` for every targeted block.
    pub targets: Vec<(usize, Vec<Var>)>,
    pub hidden: Option<Var>,
}

/// `O2E^{i,j}`: one encoder head per action aimed at the target.
#[derive(Debug, Clone)]
struct SubModule {
    heads: Vec<Encoder>,
    shared_first: bool,
}

impl SubModule {
    fn build<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        name: &str,
        config: &NetConfig,
        inputs: usize,
        heads: usize,
        shared_first: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let mut out = Vec::with_capacity(heads);
        if shared_first {
            let first = Dense::new(store, &format!("{name}/first"), inputs, config.embed, rng)?;
            for k in 0..heads {
                out.push(Encoder::with_first(store, &format!("{name}/head{k}"), first, config.recurrent, rng)?);
            }
        } else {
            for k in 0..heads {
                out.push(Encoder::build(
                    store,
                    &format!("{name}/head{k}"),
                    inputs,
                    config.embed,
                    config.recurrent,
                    false,
                    rng,
                )?);
            }
        }
        Ok(Self {
            heads: out,
            shared_first,
        })
    }

    fn embed(&self, g: &mut Graph<'_>, block: Var, hiddens: &[Option<Var>]) -> Result<Vec<(Var, Option<Var>)>> {
        let shared = if self.shared_first {
            Some(self.heads[0].first(g, block)?)
        } else {
            None
        };
        self.heads
            .iter()
            .zip(hiddens)
            .map(|(head, &h)| {
                let a = match shared {
                    Some(a) => a,
                    None => head.first(g, block)?,
                };
                head.rest(g, a, h)
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct AsnBody {
    own: Encoder,
    e2a: Dense,
    modules: Vec<SubModule>,
    /// Targeted blocks in ascending order.
    targets: Vec<usize>,
    /// Sub-module serving each entry of `targets`.
    target_module: Vec<usize>,
    variants: usize,
    embed: usize,
    recurrent: bool,
    /// For each out-action in layout order: (index into `targets`, variant).
    out_slots: Vec<(usize, usize)>,
    /// Output column `a` reads concatenated column `perm[a]`; `None` when
    /// the concatenation is already in action-id order.
    perm: Option<Vec<usize>>,
}

impl AsnBody {
    pub fn build<R: Rng + ?Sized>(
        config: &NetConfig,
        obs: &ObservationLayout,
        actions: &ActionLayout,
        store: &mut ParameterStore,
        prefix: &str,
        rng: &mut R,
    ) -> Result<Self> {
        let variant = config.variant;
        let m = actions.num_variants();
        let multi = matches!(variant, Variant::MultiActionShared | Variant::MultiActionUnshared);
        if m > 1 && !multi {
            return Err(Error::Config(format!(
                "{} ASN supports one action per target, the layout has {m}; use a multi-action variant",
                variant.name()
            )));
        }
        let targets = actions.targets();

        let own = Encoder::build(
            store,
            &format!("{prefix}/o2e_self"),
            obs.total_len(),
            config.embed,
            config.recurrent,
            false,
            rng,
        )?;
        let e2a = Dense::new(store, &format!("{prefix}/e2a"), config.embed, actions.in_actions.len(), rng)?;

        let target_module: Vec<usize> = match variant {
            Variant::Basic => (0..targets.len()).collect(),
            Variant::Homogeneous | Variant::MultiActionShared | Variant::MultiActionUnshared => {
                alloc::vec![0; targets.len()]
            }
            Variant::Mixed => {
                let mut types: Vec<usize> = targets.iter().map(|&t| obs.blocks[t].agent_type).collect();
                types.sort_unstable();
                types.dedup();
                if types.len() < 2 {
                    return Err(Error::Config(
                        "mixed ASN needs at least two agent types among targeted agents".into(),
                    ));
                }
                targets
                    .iter()
                    .map(|&t| types.binary_search(&obs.blocks[t].agent_type).expect("type present"))
                    .collect()
            }
            _ => unreachable!("baseline variant in AsnBody"),
        };
        let n_modules = target_module.iter().map(|&i| i + 1).max().unwrap_or(0);
        let heads = m.max(1);
        let shared_first = variant == Variant::MultiActionShared;
        let modules = (0..n_modules)
            .map(|i| {
                SubModule::build(
                    store,
                    &format!("{prefix}/o2e_other{i}"),
                    config,
                    obs.block_len,
                    heads,
                    shared_first,
                    rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;

        let out_slots: Vec<(usize, usize)> = actions
            .out_actions
            .iter()
            .map(|a| (targets.binary_search(&a.target).expect("target listed"), a.variant))
            .collect();
        let mut perm = alloc::vec![0; actions.num_actions()];
        for (pos, &id) in actions.in_actions.iter().enumerate() {
            perm[id] = pos;
        }
        for (pos, a) in actions.out_actions.iter().enumerate() {
            perm[a.id] = actions.in_actions.len() + pos;
        }
        let identity = perm.iter().enumerate().all(|(i, &p)| i == p);

        Ok(Self {
            own,
            e2a,
            modules,
            targets,
            target_module,
            variants: heads,
            embed: config.embed,
            recurrent: config.recurrent,
            out_slots,
            perm: (!identity).then_some(perm),
        })
    }

    pub fn hidden_size(&self) -> usize {
        if self.recurrent {
            self.embed * (1 + self.targets.len() * self.variants)
        } else {
            0
        }
    }

    fn hidden_slice(&self, g: &mut Graph<'_>, hidden: Option<Var>, slot: usize) -> Result<Option<Var>> {
        match hidden {
            Some(h) => Ok(Some(g.slice_cols(h, slot * self.embed, self.embed)?)),
            None => Ok(None),
        }
    }

    pub fn embeddings(
        &self,
        g: &mut Graph<'_>,
        layout: &ObservationLayout,
        obs: Var,
        hidden: Option<Var>,
    ) -> Result<AsnEmbeddings> {
        let h_own = self.hidden_slice(g, hidden, 0)?;
        let (own, h_own_next) = self.own.forward(g, obs, h_own)?;
        let mut next_hidden = Vec::new();
        if let Some(h) = h_own_next {
            next_hidden.push(h);
        }
        let mut targets = Vec::with_capacity(self.targets.len());
        for (t, &block) in self.targets.iter().enumerate() {
            let x = g.slice_cols(obs, layout.block_offset(block), layout.block_len)?;
            let hs = (0..self.variants)
                .map(|k| self.hidden_slice(g, hidden, 1 + t * self.variants + k))
                .collect::<Result<Vec<_>>>()?;
            let module = &self.modules[self.target_module[t]];
            let mut embs = Vec::with_capacity(self.variants);
            for (e, h) in module.embed(g, x, &hs)? {
                embs.push(e);
                if let Some(h) = h {
                    next_hidden.push(h);
                }
            }
            targets.push((block, embs));
        }
        let hidden = if next_hidden.is_empty() {
            None
        } else {
            Some(g.concat_cols(&next_hidden)?)
        };
        Ok(AsnEmbeddings { own, targets, hidden })
    }

    pub fn forward(
        &self,
        g: &mut Graph<'_>,
        layout: &ObservationLayout,
        actions: &ActionLayout,
        obs: Var,
        hidden: Option<Var>,
    ) -> Result<NetOutput> {
        let emb = self.embeddings(g, layout, obs, hidden)?;
        let mut cols = Vec::with_capacity(1 + self.out_slots.len());
        if !actions.in_actions.is_empty() {
            cols.push(self.e2a.forward(g, emb.own)?);
        }
        for &(t, k) in &self.out_slots {
            let e_other = emb.targets[t].1[k];
            cols.push(g.row_dot(emb.own, e_other)?);
        }
        let joined = if cols.len() == 1 { cols[0] } else { g.concat_cols(&cols)? };
        let out = match &self.perm {
            Some(p) => g.select_cols(joined, p)?,
            None => joined,
        };
        Ok(NetOutput {
            out,
            hidden: emb.hidden,
        })
    }
}
