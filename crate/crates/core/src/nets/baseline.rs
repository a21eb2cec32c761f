use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::mlp::Encoder;
use super::{ActionLayout, NetConfig, NetOutput, ObservationLayout, Variant};
use crate::autodiff::{Dense, Graph, ParameterStore, Var};
use crate::Result;

#[derive(Debug, Clone)]
pub(crate) struct BaselineBody {
    variant: Variant,
    /// Attention: logistic weight per input dimension.
    gate: Option<Dense>,
    /// Entity attention: one scorer per entity, `(offset, len, scorer)`.
    entities: Vec<(usize, usize, Dense)>,
    trunk: Encoder,
    head: Dense,
    /// Dueling: state-value head.
    value: Option<Dense>,
    hidden: usize,
}

impl BaselineBody {
    pub fn build<R: Rng + ?Sized>(
        config: &NetConfig,
        obs: &ObservationLayout,
        actions: &ActionLayout,
        store: &mut ParameterStore,
        prefix: &str,
        rng: &mut R,
    ) -> Result<Self> {
        let n_in = obs.total_len();
        let variant = config.variant;
        let gate = if variant == Variant::Attention {
            Some(Dense::new(store, &format!("{prefix}/gate"), n_in, n_in, rng)?)
        } else {
            None
        };
        let mut entities = Vec::new();
        if variant == Variant::EntityAttention {
            let mut spans = Vec::new();
            if obs.own_len() > 0 {
                spans.push((0, obs.own_len()));
            }
            spans.extend((0..obs.num_blocks()).map(|j| (obs.block_offset(j), obs.block_len)));
            for (k, (offset, len)) in spans.into_iter().enumerate() {
                let scorer = Dense::new(store, &format!("{prefix}/score{k}"), len, 1, rng)?;
                entities.push((offset, len, scorer));
            }
        }
        let trunk = Encoder::build(
            store,
            &format!("{prefix}/trunk"),
            n_in,
            config.hidden,
            config.recurrent,
            true,
            rng,
        )?;
        let head = Dense::new(store, &format!("{prefix}/head"), config.hidden, actions.num_actions(), rng)?;
        let value = if variant == Variant::Dueling {
            Some(Dense::new(store, &format!("{prefix}/value"), config.hidden, 1, rng)?)
        } else {
            None
        };
        Ok(Self {
            variant,
            gate,
            entities,
            trunk,
            head,
            value,
            hidden: config.hidden,
        })
    }

    pub fn hidden_size(&self) -> usize {
        if self.trunk.is_recurrent() {
            self.hidden
        } else {
            0
        }
    }

    /// The input after attention gating (identity for vanilla and dueling).
    fn gated_input(&self, g: &mut Graph<'_>, obs: Var) -> Result<Var> {
        if let Some(gate) = &self.gate {
            let w = gate.forward(g, obs)?;
            let w = g.sigmoid(w);
            return g.mul(obs, w);
        }
        if self.entities.is_empty() {
            return Ok(obs);
        }
        let mut parts = Vec::with_capacity(self.entities.len());
        let mut scores = Vec::with_capacity(self.entities.len());
        for &(offset, len, scorer) in &self.entities {
            let part = g.slice_cols(obs, offset, len)?;
            scores.push(scorer.forward(g, part)?);
            parts.push(part);
        }
        let scores = g.concat_cols(&scores)?;
        let weights = g.softmax(scores);
        let mut weighted = Vec::with_capacity(parts.len());
        for (k, part) in parts.into_iter().enumerate() {
            let w = g.slice_cols(weights, k, 1)?;
            weighted.push(g.mul_col(part, w)?);
        }
        g.concat_cols(&weighted)
    }

    pub fn forward(&self, g: &mut Graph<'_>, _layout: &ObservationLayout, obs: Var, hidden: Option<Var>) -> Result<NetOutput> {
        let x = self.gated_input(g, obs)?;
        let (h, next) = self.trunk.forward(g, x, hidden)?;
        let adv = self.head.forward(g, h)?;
        let out = match &self.value {
            // Q = V + A - mean(A)
            Some(v_head) => {
                let v = v_head.forward(g, h)?;
                let n = g.value(adv).cols() as f64;
                let sum = g.sum_cols(adv);
                let mean = g.scale(sum, 1.0 / n);
                let shift = g.sub(v, mean)?;
                g.add_col(adv, shift)?
            }
            None => adv,
        };
        debug_assert!(self.variant != Variant::Dueling || self.value.is_some());
        Ok(NetOutput { out, hidden: next })
    }
}
