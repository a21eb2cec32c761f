use rand::Rng;

use super::{Graph, ParamId, ParameterStore, Var};
use crate::{Error, Result};

/// Gated recurrent unit.
///
/// With gates ordered `[reset | update | candidate]` along the columns of the
/// packed weights:
///
/// ```text
/// r  = sigmoid(x Wr + br + h Ur + cr)
/// z  = sigmoid(x Wz + bz + h Uz + cz)
/// n  = tanh(x Wn + bn + r * (h Un + cn))
/// h' = (1 - z) * n + z * h
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GruCell {
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub b_input: ParamId,
    pub b_hidden: ParamId,
    pub inputs: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        name: &str,
        inputs: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let h3 = 3 * hidden;
        let w_input = store.init_uniform(&alloc::format!("{name}/wx"), &[inputs, h3], hidden, rng)?;
        let w_hidden = store.init_uniform(&alloc::format!("{name}/wh"), &[hidden, h3], hidden, rng)?;
        let b_input = store.init_uniform(&alloc::format!("{name}/bx"), &[1, h3], hidden, rng)?;
        let b_hidden = store.init_uniform(&alloc::format!("{name}/bh"), &[1, h3], hidden, rng)?;
        Ok(Self {
            w_input,
            w_hidden,
            b_input,
            b_hidden,
            inputs,
            hidden,
        })
    }

    /// One step; `x: rows x inputs`, `h: rows x hidden`.
    pub fn step(&self, g: &mut Graph<'_>, x: Var, h: Var) -> Result<Var> {
        let (xr, xc) = g.value(x).dims2();
        let (hr, hc) = g.value(h).dims2();
        if xc != self.inputs || hc != self.hidden || xr != hr {
            return Err(Error::shape("gru_cell", &[xr, xc], &[hr, hc]));
        }
        let hd = self.hidden;
        let wx = g.param(self.w_input)?;
        let wh = g.param(self.w_hidden)?;
        let bx = g.param(self.b_input)?;
        let bh = g.param(self.b_hidden)?;
        let gx = g.matmul(x, wx)?;
        let gx = g.add_row(gx, bx)?;
        let gh = g.matmul(h, wh)?;
        let gh = g.add_row(gh, bh)?;

        let gx_rz = g.slice_cols(gx, 0, 2 * hd)?;
        let gh_rz = g.slice_cols(gh, 0, 2 * hd)?;
        let rz = g.add(gx_rz, gh_rz)?;
        let rz = g.sigmoid(rz);
        let r = g.slice_cols(rz, 0, hd)?;
        let z = g.slice_cols(rz, hd, hd)?;

        let gx_n = g.slice_cols(gx, 2 * hd, hd)?;
        let gh_n = g.slice_cols(gh, 2 * hd, hd)?;
        let gated = g.mul(r, gh_n)?;
        let n = g.add(gx_n, gated)?;
        let n = g.tanh(n);

        // h' = n + z * (h - n)
        let diff = g.sub(h, n)?;
        let zd = g.mul(z, diff)?;
        g.add(n, zd)
    }
}
