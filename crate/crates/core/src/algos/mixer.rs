use alloc::format;

use rand::Rng;

use crate::autodiff::{Array, Dense, Graph, ParameterStore, Var};
use crate::{Error, Result};

/// `Q_tot = sum_i Q_i`.
pub fn vdn_mix(q: &[f64]) -> f64 {
    q.iter().sum()
}

/// Monotonic two-layer mixer whose weights come from hypernetworks of the
/// global state:
///
/// `h = elu(q |W1(s)| + b1(s))`, `Q_tot = h . |w2(s)| + V(s)`,
/// with `W1(s)` read as an `agents x embed` matrix and `V` a two-layer MLP.
#[derive(Debug, Clone)]
pub struct Mixer {
    hyper_w1: Dense,
    hyper_b1: Dense,
    hyper_w2: Dense,
    v1: Dense,
    v2: Dense,
    agents: usize,
    state_len: usize,
    embed: usize,
}

impl Mixer {
    pub fn build<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        prefix: &str,
        agents: usize,
        state_len: usize,
        embed: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if agents == 0 || state_len == 0 || embed == 0 {
            return Err(Error::Config("mixer sizes must be positive".into()));
        }
        Ok(Self {
            hyper_w1: Dense::new(store, &format!("{prefix}/hyper_w1"), state_len, agents * embed, rng)?,
            hyper_b1: Dense::new(store, &format!("{prefix}/hyper_b1"), state_len, embed, rng)?,
            hyper_w2: Dense::new(store, &format!("{prefix}/hyper_w2"), state_len, embed, rng)?,
            v1: Dense::new(store, &format!("{prefix}/v1"), state_len, embed, rng)?,
            v2: Dense::new(store, &format!("{prefix}/v2"), embed, 1, rng)?,
            agents,
            state_len,
            embed,
        })
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn state_len(&self) -> usize {
        self.state_len
    }

    pub fn embed(&self) -> usize {
        self.embed
    }

    /// `q: rows x agents`, `state: rows x state_len` to `rows x 1`.
    pub fn forward(&self, g: &mut Graph<'_>, q: Var, state: Var) -> Result<Var> {
        let (qr, qc) = g.value(q).dims2();
        let (sr, sc) = g.value(state).dims2();
        if qc != self.agents || sc != self.state_len || qr != sr {
            return Err(Error::shape("mixer", &[qr, qc], &[sr, sc]));
        }
        let w1 = self.hyper_w1.forward(g, state)?;
        let w1 = g.abs(w1);
        let b1 = self.hyper_b1.forward(g, state)?;
        let mixed = g.row_vec_mat(q, w1)?;
        let pre = g.add(mixed, b1)?;
        let hidden = g.elu(pre);
        let w2 = self.hyper_w2.forward(g, state)?;
        let w2 = g.abs(w2);
        let out = g.row_dot(hidden, w2)?;
        let v = self.v1.forward(g, state)?;
        let v = g.relu(v);
        let v = self.v2.forward(g, v)?;
        g.add(out, v)
    }

    /// `Q_tot` for one state.
    pub fn mix(&self, store: &ParameterStore, q: &[f64], state: &[f64]) -> Result<f64> {
        if q.len() != self.agents || state.len() != self.state_len {
            return Err(Error::shape("qmix_mix", &[self.agents, self.state_len], &[q.len(), state.len()]));
        }
        let mut g = Graph::new(store);
        let qv = g.input(Array::row(q.to_vec()));
        let sv = g.input(Array::row(state.to_vec()));
        let out = self.forward(&mut g, qv, sv)?;
        Ok(g.value(out).item())
    }
}

/// [`Mixer::mix`] as a free function.
pub fn qmix_mix(mixer: &Mixer, store: &ParameterStore, q: &[f64], state: &[f64]) -> Result<f64> {
    mixer.mix(store, q, state)
}
