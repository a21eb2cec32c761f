use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockKind {
    Teammate,
    Opponent,
}

/// One per-other-agent block of an observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockInfo {
    pub kind: BlockKind,
    /// Unit type of the observed agent; selects the shared sub-module in the
    /// mixed ASN variant.
    pub agent_type: usize,
}

/// Flat observation layout: `[env | self | block_0 | block_1 | ...]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationLayout {
    pub env_len: usize,
    pub self_len: usize,
    pub block_len: usize,
    pub blocks: Vec<BlockInfo>,
}

/// Borrowed view of one observation split along its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitObservation<'a> {
    /// Environment and self fields, the input of the full-observation pathway.
    pub own: &'a [f64],
    pub blocks: Vec<&'a [f64]>,
}

impl ObservationLayout {
    pub fn total_len(&self) -> usize {
        self.env_len + self.self_len + self.block_len * self.blocks.len()
    }

    /// Length of the leading env + self part.
    pub fn own_len(&self) -> usize {
        self.env_len + self.self_len
    }

    pub fn block_offset(&self, block: usize) -> usize {
        self.own_len() + block * self.block_len
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Same layout with `extra` leading environment fields (e.g. an agent-id
    /// one-hot prepended by a parameter-shared learner).
    pub fn with_env_prefix(&self, extra: usize) -> Self {
        Self {
            env_len: self.env_len + extra,
            ..self.clone()
        }
    }

    pub fn split<'a>(&self, flat: &'a [f64]) -> Result<SplitObservation<'a>> {
        if flat.len() != self.total_len() {
            return Err(Error::ObservationLength {
                expected: self.total_len(),
                got: flat.len(),
            });
        }
        let own = &flat[..self.own_len()];
        let blocks = (0..self.blocks.len())
            .map(|j| {
                let o = self.block_offset(j);
                &flat[o..o + self.block_len]
            })
            .collect();
        Ok(SplitObservation { own, blocks })
    }
}

/// An action that directly affects another agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutAction {
    pub id: usize,
    /// Observation block of the affected agent.
    pub target: usize,
    /// Which of the actions aimed at `target` this is (attack option index).
    pub variant: usize,
}

/// Partition of an agent's actions into self/environment-directed actions
/// and actions aimed at a particular other agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionLayout {
    pub in_actions: Vec<usize>,
    pub out_actions: Vec<OutAction>,
}

impl ActionLayout {
    pub fn new(in_actions: Vec<usize>, out_actions: Vec<OutAction>, obs: &ObservationLayout) -> Result<Self> {
        let layout = Self {
            in_actions,
            out_actions,
        };
        layout.validate(obs)?;
        Ok(layout)
    }

    pub fn validate(&self, obs: &ObservationLayout) -> Result<()> {
        let n = self.num_actions();
        let mut seen = alloc::vec![false; n];
        for id in self.in_actions.iter().copied().chain(self.out_actions.iter().map(|a| a.id)) {
            if id >= n || seen[id] {
                return Err(Error::Layout(format!(
                    "action ids must enumerate 0..{n} exactly once (offending id {id})"
                )));
            }
            seen[id] = true;
        }
        if let Some(a) = self.out_actions.iter().find(|a| a.target >= obs.num_blocks()) {
            return Err(Error::Layout(format!(
                "out-action {} targets block {} but the observation has {} blocks",
                a.id,
                a.target,
                obs.num_blocks()
            )));
        }
        let m = self.num_variants();
        for t in self.targets() {
            let mut variants: Vec<usize> = self.out_actions.iter().filter(|a| a.target == t).map(|a| a.variant).collect();
            variants.sort_unstable();
            if variants != (0..m).collect::<Vec<_>>() {
                return Err(Error::Layout(format!(
                    "target block {t} must carry variants 0..{m} exactly once"
                )));
            }
        }
        Ok(())
    }

    pub fn num_actions(&self) -> usize {
        self.in_actions.len() + self.out_actions.len()
    }

    /// Number of distinct actions aimed at each target (`m`).
    pub fn num_variants(&self) -> usize {
        self.out_actions.iter().map(|a| a.variant + 1).max().unwrap_or(0)
    }

    /// Targeted observation blocks, ascending.
    pub fn targets(&self) -> Vec<usize> {
        let mut t: Vec<usize> = self.out_actions.iter().map(|a| a.target).collect();
        t.sort_unstable();
        t.dedup();
        t
    }

    pub fn out_action(&self, id: usize) -> Option<&OutAction> {
        self.out_actions.iter().find(|a| a.id == id)
    }

    pub fn is_out_action(&self, id: usize) -> bool {
        self.out_action(id).is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn blocks(n: usize) -> Vec<BlockInfo> {
        vec![
            BlockInfo {
                kind: BlockKind::Opponent,
                agent_type: 0
            };
            n
        ]
    }

    #[test]
    fn split_offsets() {
        let layout = ObservationLayout {
            env_len: 2,
            self_len: 3,
            block_len: 4,
            blocks: blocks(2),
        };
        let flat: Vec<f64> = (0..13).map(f64::from).collect();
        let s = layout.split(&flat).unwrap();
        assert_eq!(s.own, &flat[0..5]);
        assert_eq!(s.blocks, vec![&flat[5..9], &flat[9..13]]);
    }

    #[test]
    fn split_without_other_agents() {
        let layout = ObservationLayout {
            env_len: 0,
            self_len: 3,
            block_len: 4,
            blocks: vec![],
        };
        let s = layout.split(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.own.len(), 3);
        assert!(s.blocks.is_empty());
    }

    #[test]
    fn split_length_mismatch() {
        let layout = ObservationLayout {
            env_len: 0,
            self_len: 3,
            block_len: 4,
            blocks: blocks(1),
        };
        assert_eq!(
            layout.split(&[0.0; 6]).unwrap_err(),
            Error::ObservationLength { expected: 7, got: 6 }
        );
    }

    #[test]
    fn mmo_shaped_layout_is_43_long() {
        let layout = ObservationLayout {
            env_len: 0,
            self_len: 8,
            block_len: 7,
            blocks: blocks(5),
        };
        let flat = [0.0; 43];
        let s = layout.split(&flat).unwrap();
        assert_eq!(s.own.len(), 8);
        assert_eq!(s.blocks.len(), 5);
        assert!(s.blocks.iter().all(|b| b.len() == 7));
    }

    #[test]
    fn action_layout_validation() {
        let obs = ObservationLayout {
            env_len: 0,
            self_len: 1,
            block_len: 1,
            blocks: blocks(2),
        };
        let out = vec![
            OutAction { id: 2, target: 0, variant: 0 },
            OutAction { id: 3, target: 1, variant: 0 },
        ];
        assert!(ActionLayout::new(vec![0, 1], out.clone(), &obs).is_ok());
        // overlapping ids
        assert!(ActionLayout::new(vec![0, 2], out.clone(), &obs).is_err());
        // target out of range
        let bad = vec![OutAction { id: 2, target: 5, variant: 0 }];
        assert!(ActionLayout::new(vec![0, 1], bad, &obs).is_err());
    }
}
