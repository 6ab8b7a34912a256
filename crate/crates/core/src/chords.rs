//! Per-beat chord candidates by pitch-class template matching.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::score::{ChordEvent, Score, POSITIONS_PER_BEAT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChordQuality {
    Maj,
    Min,
    Dim,
    Aug,
    Dom7,
    Min7,
    Maj7,
}

impl ChordQuality {
    pub const ALL: [ChordQuality; 7] = [
        ChordQuality::Maj,
        ChordQuality::Min,
        ChordQuality::Dim,
        ChordQuality::Aug,
        ChordQuality::Dom7,
        ChordQuality::Min7,
        ChordQuality::Maj7,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ChordQuality::Maj => "maj",
            ChordQuality::Min => "min",
            ChordQuality::Dim => "dim",
            ChordQuality::Aug => "aug",
            ChordQuality::Dom7 => "dom7",
            ChordQuality::Min7 => "min7",
            ChordQuality::Maj7 => "maj7",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|q| q.name() == name)
    }

    /// Semitone offsets above the root.
    pub fn template(self) -> &'static [u32] {
        match self {
            ChordQuality::Maj => &[0, 4, 7],
            ChordQuality::Min => &[0, 3, 7],
            ChordQuality::Dim => &[0, 3, 6],
            ChordQuality::Aug => &[0, 4, 8],
            ChordQuality::Dom7 => &[0, 4, 7, 10],
            ChordQuality::Min7 => &[0, 3, 7, 10],
            ChordQuality::Maj7 => &[0, 4, 7, 11],
        }
    }
}

/// Duration-weighted pitch-class activity within one beat.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct ChromaVector {
    pub weights: [f64; 12],
}

impl ChromaVector {
    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn is_silent(&self) -> bool {
        self.weights.iter().all(|&w| w == 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChordConfig {
    /// Weight of out-of-template mass subtracted from a candidate's score.
    pub penalty: f64,
    /// Minimum score for a beat to receive a chord, in positions.
    pub threshold: f64,
}

impl Default for ChordConfig {
    fn default() -> Self {
        ChordConfig {
            penalty: 0.5,
            threshold: 6.0,
        }
    }
}

pub fn chroma_for_beat(score: &Score, beat: u32) -> ChromaVector {
    let lo = beat as u64 * POSITIONS_PER_BEAT as u64;
    let hi = lo + POSITIONS_PER_BEAT as u64;
    let mut chroma = ChromaVector::default();
    for n in score.notes() {
        let overlap = n.end().min(hi).saturating_sub(n.start().max(lo));
        if overlap > 0 {
            chroma.weights[(n.pitch % 12) as usize] += overlap as f64;
        }
    }
    chroma
}

/// Best (root, quality, score) for a chroma vector. Ties keep the earlier
/// quality, then the lower root, so a triad wins over a seventh chord that
/// contains it.
pub fn best_chord(chroma: &ChromaVector, config: &ChordConfig) -> (u32, ChordQuality, f64) {
    let total = chroma.total();
    let mut best = (0, ChordQuality::Maj, f64::NEG_INFINITY);
    for quality in ChordQuality::ALL {
        for root in 0..12u32 {
            let inside: f64 = quality
                .template()
                .iter()
                .map(|off| chroma.weights[((root + off) % 12) as usize])
                .sum();
            let s = inside - config.penalty * (total - inside);
            if s > best.2 {
                best = (root, quality, s);
            }
        }
    }
    best
}

pub fn extract_chords(score: &Score, config: &ChordConfig) -> Vec<ChordEvent> {
    (0..score.end_beat())
        .filter_map(|beat| {
            let chroma = chroma_for_beat(score, beat);
            if chroma.is_silent() {
                return None;
            }
            let (root, quality, s) = best_chord(&chroma, config);
            (s >= config.threshold).then_some(ChordEvent {
                beat,
                position: 0,
                root,
                quality,
            })
        })
        .collect()
}

/// Replaces any chords in `score` with freshly extracted ones.
pub fn merge_chords(score: &Score, config: &ChordConfig) -> Result<Score> {
    let plain = score.without_chords();
    let chords = extract_chords(&plain, config);
    plain.with_chords(chords)
}
