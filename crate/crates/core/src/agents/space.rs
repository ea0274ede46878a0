//! Finite action sets of the DU and CU agents.
//!
//! A DU action picks a split point for every splittable traffic type plus a
//! dispatch level; pinned types always run the full chain locally. The CU
//! only picks a dispatch level. Index layout is `split_combo * levels + level`.

use crate::domain::{FunctionChain, SplitPoint, TrafficType};
use crate::env::{Dispatch, NodeAction};

#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpace {
    chain: FunctionChain,
    /// Per traffic type; `None` for the CU.
    pinned: Option<Vec<bool>>,
    levels: usize,
}

impl ActionSpace {
    pub fn du(chain: FunctionChain, types: &[TrafficType], levels: usize) -> Self {
        Self {
            chain,
            pinned: Some(types.iter().map(|t| t.pinned_to_du).collect()),
            levels,
        }
    }

    pub fn cu(chain: FunctionChain, levels: usize) -> Self {
        Self {
            chain,
            pinned: None,
            levels,
        }
    }

    fn split_combos(&self) -> usize {
        let free = self
            .pinned
            .as_ref()
            .map_or(0, |p| p.iter().filter(|&&x| !x).count());
        (self.chain.len() + 1).pow(free as u32)
    }

    pub fn len(&self) -> usize {
        self.split_combos() * self.levels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn decode(&self, index: usize) -> NodeAction {
        debug_assert!(index < self.len());
        let level = index % self.levels;
        let mut combo = index / self.levels;
        let radix = self.chain.len() + 1;
        let splits = match &self.pinned {
            None => Vec::new(),
            Some(pinned) => pinned
                .iter()
                .map(|&p| {
                    if p {
                        self.chain.full()
                    } else {
                        let s = combo % radix;
                        combo /= radix;
                        SplitPoint::new(s, self.chain).expect("split within chain")
                    }
                })
                .collect(),
        };
        NodeAction {
            splits,
            dispatch: Dispatch::Level(level),
        }
    }

    /// Inverse of [`ActionSpace::decode`]; `None` for actions outside the set.
    pub fn encode(&self, action: &NodeAction) -> Option<usize> {
        let Dispatch::Level(level) = action.dispatch else {
            return None;
        };
        if level >= self.levels {
            return None;
        }
        let radix = self.chain.len() + 1;
        let mut combo = 0;
        let mut mult = 1;
        match &self.pinned {
            None if action.splits.is_empty() => {}
            None => return None,
            Some(pinned) => {
                if pinned.len() != action.splits.len() {
                    return None;
                }
                for (&p, s) in pinned.iter().zip(&action.splits) {
                    if p {
                        if *s != self.chain.full() {
                            return None;
                        }
                    } else {
                        combo += s.get() * mult;
                        mult *= radix;
                    }
                }
            }
        }
        Some(combo * self.levels + level)
    }
}
