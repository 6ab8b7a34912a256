//! Reconstruction and lead-sheet metrics, all on a 0-100 scale.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::score::{LeadSheet, Score};

/// Sounding pitch sets per position step, chords excluded.
pub fn time_grid(score: &Score, pitch_class: bool, len: usize) -> Vec<BTreeSet<u32>> {
    let mut grid = vec![BTreeSet::new(); len];
    for n in score.notes() {
        let p = if pitch_class { n.pitch % 12 } else { n.pitch };
        let end = (n.end() as usize).min(len);
        for step in &mut grid[(n.start() as usize).min(len)..end] {
            step.insert(p);
        }
    }
    grid
}

fn grid_len(score: &Score) -> usize {
    score.notes().map(|n| n.end() as usize).max().unwrap_or(0)
}

/// Mean per-step F1 between sounding pitch sets. Steps silent in both are
/// skipped; a step silent in only one counts as zero. Two silent scores
/// score 100.
pub fn mute(reference: &Score, hypothesis: &Score, pitch_class: bool) -> f64 {
    let len = grid_len(reference).max(grid_len(hypothesis));
    let a = time_grid(reference, pitch_class, len);
    let b = time_grid(hypothesis, pitch_class, len);
    let mut total = 0.0;
    let mut steps = 0usize;
    for (a, b) in a.iter().zip(&b) {
        if a.is_empty() && b.is_empty() {
            continue;
        }
        let common = a.intersection(b).count();
        total += 2.0 * common as f64 / (a.len() + b.len()) as f64;
        steps += 1;
    }
    if steps == 0 {
        100.0
    } else {
        100.0 * total / steps as f64
    }
}

fn triples(score: &Score, pitch_class: bool) -> BTreeSet<(u32, u32, u32)> {
    score
        .notes()
        .map(|n| (n.beat, n.position, if pitch_class { n.pitch % 12 } else { n.pitch }))
        .collect()
}

/// Jaccard similarity of (beat, position, pitch) note triples.
pub fn jaccard(reference: &Score, hypothesis: &Score, pitch_class: bool) -> f64 {
    let a = triples(reference, pitch_class);
    let b = triples(hypothesis, pitch_class);
    let union = a.union(&b).count();
    if union == 0 {
        return 100.0;
    }
    100.0 * a.intersection(&b).count() as f64 / union as f64
}

/// Percentages of source notes and chords kept; 100 when there are none.
pub fn densities(lead: &LeadSheet) -> (f64, f64) {
    let pct = |kept: usize, total: usize| {
        if total == 0 {
            100.0
        } else {
            100.0 * kept as f64 / total as f64
        }
    };
    (
        pct(lead.kept_note_count(), lead.source.note_count()),
        pct(lead.kept_chord_count(), lead.source.chord_count()),
    )
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mute: f64,
    pub pc_mute: f64,
    pub jaccard: f64,
    pub pc_jaccard: f64,
    pub note_density: f64,
    pub chord_density: f64,
}

impl MetricsReport {
    /// Reconstruction metrics for one pair, densities from the lead sheet
    /// when one is given.
    pub fn for_pair(reference: &Score, hypothesis: &Score, lead: Option<&LeadSheet>) -> Self {
        let (note_density, chord_density) = lead.map(densities).unwrap_or((100.0, 100.0));
        MetricsReport {
            mute: mute(reference, hypothesis, false),
            pc_mute: mute(reference, hypothesis, true),
            jaccard: jaccard(reference, hypothesis, false),
            pc_jaccard: jaccard(reference, hypothesis, true),
            note_density,
            chord_density,
        }
    }

    /// Unweighted mean over pieces.
    pub fn mean(reports: &[MetricsReport]) -> Self {
        if reports.is_empty() {
            return Self::default();
        }
        let n = reports.len() as f64;
        let avg = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        MetricsReport {
            mute: avg(|r| r.mute),
            pc_mute: avg(|r| r.pc_mute),
            jaccard: avg(|r| r.jaccard),
            pc_jaccard: avg(|r| r.pc_jaccard),
            note_density: avg(|r| r.note_density),
            chord_density: avg(|r| r.chord_density),
        }
    }

    pub fn table(&self, label: &str) -> String {
        let header = format!(
            "{:<12} {:>12} {:>13} {:>9} {:>12} {:>9} {:>12}",
            "model", "note density", "chord density", "(R) MuTE", "(R) PC MuTE", "(R) Jac.", "(R) PC Jac."
        );
        let row = format!(
            "{:<12} {:>12.2} {:>13.2} {:>9.2} {:>12.2} {:>9.2} {:>12.2}",
            label,
            self.note_density,
            self.chord_density,
            self.mute,
            self.pc_mute,
            self.jaccard,
            self.pc_jaccard
        );
        format!("{header}\n{row}\n")
    }
}
