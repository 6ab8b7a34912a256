//! Per-onset selection budgets and the skyline baseline.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::score::{apply_mask, group_events, LeadSheet, Score};

pub const DEFAULT_UNIFIED_INSTRUMENT: u32 = 0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BudgetMode {
    /// At most `k` events per onset.
    Fixed(u32),
    /// `ceil(rho * n)` events per onset of size `n`.
    Fractional(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChordPolicy {
    /// The onset's chord is always kept and does not use a slot.
    Forced,
    /// The chord competes with the notes for the onset's slots.
    Competing,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionBudget {
    pub mode: BudgetMode,
    pub chord_policy: ChordPolicy,
}

/// What one onset group is allowed to keep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GroupBudget {
    /// Slots filled by selection. Candidates are the notes when the chord is
    /// forced, otherwise the notes and the chord together.
    pub slots: usize,
    pub forced_chord: bool,
}

impl GroupBudget {
    pub fn total(&self) -> usize {
        self.slots + self.forced_chord as usize
    }
}

impl SelectionBudget {
    /// Fixed `k` with forced chords, the skyline-compatible default.
    pub fn fixed(k: u32) -> Self {
        SelectionBudget {
            mode: BudgetMode::Fixed(k),
            chord_policy: ChordPolicy::Forced,
        }
    }

    /// Fractional `rho` with competing chords.
    pub fn fractional(rho: f64) -> Self {
        SelectionBudget {
            mode: BudgetMode::Fractional(rho),
            chord_policy: ChordPolicy::Competing,
        }
    }

    pub fn with_policy(mut self, chord_policy: ChordPolicy) -> Self {
        self.chord_policy = chord_policy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            BudgetMode::Fixed(0) => Err(Error::Config("fixed budget needs k >= 1".into())),
            BudgetMode::Fractional(rho) if !(rho > 0.0 && rho <= 1.0) => Err(Error::Config(
                format!("fractional budget needs rho in (0, 1], got {rho}"),
            )),
            _ => Ok(()),
        }
    }

    pub fn budget_for_group(&self, notes: usize, has_chord: bool) -> GroupBudget {
        let forced_chord = has_chord && self.chord_policy == ChordPolicy::Forced;
        let candidates = notes + (has_chord && !forced_chord) as usize;
        let slots = match self.mode {
            BudgetMode::Fixed(k) => (k as usize).min(candidates),
            BudgetMode::Fractional(rho) => {
                // Guard against 0.1 * 30 = 3.0000000000000004 rounding up.
                let raw = (rho * candidates as f64 - 1e-9).ceil().max(0.0) as usize;
                raw.min(candidates)
            }
        };
        GroupBudget {
            slots,
            forced_chord,
        }
    }
}

impl fmt::Display for SelectionBudget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let policy = match self.chord_policy {
            ChordPolicy::Forced => "forced",
            ChordPolicy::Competing => "competing",
        };
        match self.mode {
            BudgetMode::Fixed(k) => write!(f, "k={k},{policy}"),
            BudgetMode::Fractional(r) => write!(f, "rho={r},{policy}"),
        }
    }
}

/// Picks `slots` candidates with the largest key; ties go to the lower index.
pub fn select_top_by<F>(candidates: &[usize], slots: usize, key: F) -> Vec<usize>
where
    F: Fn(usize) -> f64,
{
    let mut ranked: Vec<usize> = candidates.to_vec();
    ranked.sort_by(|&a, &b| {
        key(b)
            .partial_cmp(&key(a))
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    ranked.truncate(slots);
    ranked
}

/// Keeps the highest notes of every onset. Chords are always kept when
/// forced; when competing they take the first slot of their onset.
pub fn skyline_reduce(score: &Score, budget: &SelectionBudget) -> LeadSheet {
    let mask = skyline_mask(score, budget);
    apply_mask(score, &mask, DEFAULT_UNIFIED_INSTRUMENT).expect("skyline mask keeps sentinels")
}

pub fn skyline_mask(score: &Score, budget: &SelectionBudget) -> Vec<bool> {
    let events = score.events();
    let mut mask = vec![false; events.len()];
    mask[0] = true;
    mask[events.len() - 1] = true;
    for group in group_events(events) {
        let b = budget.budget_for_group(group.note_indices.len(), group.chord_index.is_some());
        let mut slots = b.slots;
        if let Some(c) = group.chord_index {
            if b.forced_chord {
                mask[c] = true;
            } else if slots > 0 {
                mask[c] = true;
                slots -= 1;
            }
        }
        let pitch = |i: usize| events[i].as_note().map_or(0.0, |n| n.pitch as f64);
        for i in select_top_by(&group.note_indices, slots, pitch) {
            mask[i] = true;
        }
    }
    mask
}
