//! Finite-difference cases over every differentiable building block. Each
//! trial draws fresh parameters and inputs and reduces the output to a
//! scalar through random weights, so every output entry contributes.

use asn_core::algos::Mixer;
use asn_core::autodiff::{check_gradients, Array, Dense, Graph, GruCell, ParameterStore, Var};
use asn_core::nets::{ActionLayout, BlockInfo, BlockKind, NetConfig, Network, ObservationLayout, OutAction, Role, Variant};
use asn_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    Dense,
    Activations,
    Softmax,
    InnerProduct,
    Gru,
    Dueling,
    AttentionGate,
    EntityAttention,
    AsnHomogeneous,
    AsnMultiAction,
    QmixMixer,
}

pub const ALL: [Case; 11] = [
    Case::Dense,
    Case::Activations,
    Case::Softmax,
    Case::InnerProduct,
    Case::Gru,
    Case::Dueling,
    Case::AttentionGate,
    Case::EntityAttention,
    Case::AsnHomogeneous,
    Case::AsnMultiAction,
    Case::QmixMixer,
];

impl Case {
    pub fn name(self) -> &'static str {
        match self {
            Case::Dense => "dense",
            Case::Activations => "activations",
            Case::Softmax => "softmax",
            Case::InnerProduct => "inner product",
            Case::Gru => "gru cell",
            Case::Dueling => "dueling combine",
            Case::AttentionGate => "attention gating",
            Case::EntityAttention => "entity attention",
            Case::AsnHomogeneous => "asn homogeneous",
            Case::AsnMultiAction => "asn multi-action",
            Case::QmixMixer => "qmix mixer",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseResult {
    pub case: Case,
    pub trials: usize,
    pub entries: usize,
    pub max_rel_error: f64,
}

/// Values in `[-1, 1]` at least 0.01 away from zero, which keeps kinked
/// activations away from their kink for any step below 0.01.
fn away_from_zero(rng: &mut ChaCha8Rng) -> f64 {
    let v: f64 = rng.gen_range(0.01..1.0);
    if rng.gen_bool(0.5) {
        v
    } else {
        -v
    }
}

fn matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array {
    Array::matrix(rows, cols, (0..rows * cols).map(|_| away_from_zero(rng)).collect()).unwrap()
}

/// `sum(x * c)` for a weight input `c` of the same shape.
fn weighted(g: &mut Graph<'_>, x: Var, c: Var) -> Result<Var> {
    let p = g.mul(x, c)?;
    Ok(g.sum(p))
}

fn toy_layout(m: usize) -> (ObservationLayout, ActionLayout) {
    let block = |kind, agent_type| BlockInfo { kind, agent_type };
    let obs = ObservationLayout {
        env_len: 0,
        self_len: 3,
        block_len: 4,
        blocks: vec![block(BlockKind::Teammate, 0), block(BlockKind::Opponent, 0), block(BlockKind::Opponent, 0)],
    };
    let mut out = Vec::new();
    for (k, target) in [1usize, 2].into_iter().enumerate() {
        for v in 0..m {
            out.push(OutAction {
                id: 3 + k * m + v,
                target,
                variant: v,
            });
        }
    }
    let actions = ActionLayout::new(vec![0, 1, 2], out, &obs).unwrap();
    (obs, actions)
}

fn network_trial(variant: Variant, m: usize, rng: &mut ChaCha8Rng) -> Result<asn_core::autodiff::GradCheck> {
    let (obs, actions) = toy_layout(m);
    let mut store = ParameterStore::new();
    let cfg = NetConfig::new(variant).sizes(4, 5);
    let net = Network::build(&cfg, Role::Value, &obs, &actions, &mut store, "net", rng)?;
    let rows = 2;
    let x = matrix(rng, rows, obs.total_len());
    let c = matrix(rng, rows, actions.num_actions());
    check_gradients(&store, &[x, c], STEP, |g, v| {
        let out = net.forward(g, v[0], None)?;
        weighted(g, out.out, v[1])
    })
}

fn trial(case: Case, rng: &mut ChaCha8Rng) -> Result<asn_core::autodiff::GradCheck> {
    match case {
        Case::Dense => {
            let mut store = ParameterStore::new();
            let d1 = Dense::new(&mut store, "d1", 4, 3, rng)?;
            let d2 = Dense::new(&mut store, "d2", 3, 2, rng)?;
            let (x, c) = (matrix(rng, 3, 4), matrix(rng, 3, 2));
            check_gradients(&store, &[x, c], STEP, |g, v| {
                let h = d1.forward(g, v[0])?;
                let h = g.tanh(h);
                let y = d2.forward(g, h)?;
                weighted(g, y, v[1])
            })
        }
        Case::Activations => {
            let store = ParameterStore::new();
            let inputs: Vec<Array> = (0..12).map(|_| matrix(rng, 2, 3)).collect();
            check_gradients(&store, &inputs, STEP, |g, v| {
                let mut terms = Vec::new();
                let mut push = |g: &mut Graph<'_>, y: Var, c: Var| -> Result<()> {
                    terms.push(weighted(g, y, c)?);
                    Ok(())
                };
                let r = g.relu(v[0]);
                push(g, r, v[1])?;
                let t = g.tanh(v[0]);
                push(g, t, v[2])?;
                let s = g.sigmoid(v[0]);
                push(g, s, v[3])?;
                let e = g.elu(v[0]);
                push(g, e, v[4])?;
                let a = g.abs(v[0]);
                push(g, a, v[5])?;
                let x = g.exp(v[0]);
                push(g, x, v[6])?;
                let positive = g.shift(a, 0.5);
                let l = g.log(positive);
                push(g, l, v[7])?;
                let m = g.minimum(v[0], v[8])?;
                push(g, m, v[9])?;
                let sc = g.scale(v[0], -1.5);
                let cl = g.clamp(sc, -0.5, 0.5);
                push(g, cl, v[10])?;
                let p = g.mul(v[0], v[8])?;
                let d = g.sub(p, v[11])?;
                push(g, d, v[1])?;
                let mut total = terms[0];
                for &t in &terms[1..] {
                    total = g.add(total, t)?;
                }
                Ok(total)
            })
        }
        Case::Softmax => {
            let store = ParameterStore::new();
            let x = matrix(rng, 3, 5).map(|v| 3.0 * v);
            let (c1, c2) = (matrix(rng, 3, 5), matrix(rng, 3, 5));
            check_gradients(&store, &[x, c1, c2], STEP, |g, v| {
                let p = g.softmax(v[0]);
                let a = weighted(g, p, v[1])?;
                let lp = g.log_softmax(v[0]);
                let b = weighted(g, lp, v[2])?;
                g.add(a, b)
            })
        }
        Case::InnerProduct => {
            let mut store = ParameterStore::new();
            let enc = Dense::new(&mut store, "enc", 3, 4, rng)?;
            let (x, y, c) = (matrix(rng, 5, 3), matrix(rng, 5, 4), matrix(rng, 5, 1));
            check_gradients(&store, &[x, y, c], STEP, |g, v| {
                let e = enc.forward(g, v[0])?;
                let d = g.row_dot(e, v[1])?;
                weighted(g, d, v[2])
            })
        }
        Case::Gru => {
            let mut store = ParameterStore::new();
            let cell = GruCell::new(&mut store, "gru", 3, 4, rng)?;
            let (x1, x2, h0, c) = (matrix(rng, 2, 3), matrix(rng, 2, 3), matrix(rng, 2, 4), matrix(rng, 2, 4));
            check_gradients(&store, &[x1, x2, h0, c], STEP, |g, v| {
                let h1 = cell.step(g, v[0], v[2])?;
                let h2 = cell.step(g, v[1], h1)?;
                weighted(g, h2, v[3])
            })
        }
        Case::Dueling => network_trial(Variant::Dueling, 1, rng),
        Case::AttentionGate => network_trial(Variant::Attention, 1, rng),
        Case::EntityAttention => network_trial(Variant::EntityAttention, 1, rng),
        Case::AsnHomogeneous => network_trial(Variant::Homogeneous, 1, rng),
        Case::AsnMultiAction => network_trial(Variant::MultiActionShared, 3, rng),
        Case::QmixMixer => {
            let mut store = ParameterStore::new();
            let mixer = Mixer::build(&mut store, "mixer", 3, 5, 4, rng)?;
            let (q, s, c) = (matrix(rng, 4, 3), matrix(rng, 4, 5), matrix(rng, 4, 1));
            check_gradients(&store, &[q, s, c], STEP, |g, v| {
                let y = mixer.forward(g, v[0], v[1])?;
                weighted(g, y, v[2])
            })
        }
    }
}

/// Runs `trials` independent trials of `case`, seeded from `seed`.
pub fn run(case: Case, trials: usize, seed: u64) -> Result<CaseResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (case as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut out = CaseResult {
        case,
        trials,
        entries: 0,
        max_rel_error: 0.0,
    };
    for _ in 0..trials {
        let r = trial(case, &mut rng)?;
        out.entries += r.entries;
        out.max_rel_error = out.max_rel_error.max(r.max_rel_error);
    }
    Ok(out)
}
