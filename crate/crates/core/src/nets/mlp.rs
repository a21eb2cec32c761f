use alloc::format;

use rand::Rng;

use crate::autodiff::{Dense, Graph, GruCell, ParameterStore, Var};
use crate::Result;

/// Two dense layers with a ReLU between them and an optional GRU on top.
///
/// Without the GRU the second layer is linear when `activate_output` is off;
/// with the GRU the second layer is rectified and the GRU state is the output.
#[derive(Debug, Clone)]
pub(crate) struct Encoder {
    l1: Dense,
    l2: Dense,
    gru: Option<GruCell>,
    activate_output: bool,
}

impl Encoder {
    pub fn build<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        name: &str,
        inputs: usize,
        width: usize,
        recurrent: bool,
        activate_output: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let l1 = Dense::new(store, &format!("{name}/l1"), inputs, width, rng)?;
        let l2 = Dense::new(store, &format!("{name}/l2"), width, width, rng)?;
        let gru = if recurrent {
            Some(GruCell::new(store, &format!("{name}/gru"), width, width, rng)?)
        } else {
            None
        };
        Ok(Self {
            l1,
            l2,
            gru,
            activate_output,
        })
    }

    /// Builds an encoder whose first layer is `first` (possibly shared).
    pub fn with_first<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        name: &str,
        first: Dense,
        recurrent: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let width = first.outputs;
        let l2 = Dense::new(store, &format!("{name}/l2"), width, width, rng)?;
        let gru = if recurrent {
            Some(GruCell::new(store, &format!("{name}/gru"), width, width, rng)?)
        } else {
            None
        };
        Ok(Self {
            l1: first,
            l2,
            gru,
            activate_output: false,
        })
    }

    pub fn is_recurrent(&self) -> bool {
        self.gru.is_some()
    }

    /// Output of the first layer after ReLU.
    pub fn first(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let a = self.l1.forward(g, x)?;
        Ok(g.relu(a))
    }

    /// The rest of the encoder from a first-layer activation. Returns the
    /// output and the next hidden state.
    pub fn rest(&self, g: &mut Graph<'_>, a: Var, hidden: Option<Var>) -> Result<(Var, Option<Var>)> {
        let b = self.l2.forward(g, a)?;
        match (&self.gru, hidden) {
            (Some(cell), Some(h)) => {
                let b = g.relu(b);
                let h2 = cell.step(g, b, h)?;
                Ok((h2, Some(h2)))
            }
            (Some(_), None) => Err(crate::Error::Unsupported("recurrent encoder needs a hidden state".into())),
            (None, _) => Ok((if self.activate_output { g.relu(b) } else { b }, None)),
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var, hidden: Option<Var>) -> Result<(Var, Option<Var>)> {
        let a = self.first(g, x)?;
        self.rest(g, a, hidden)
    }
}
