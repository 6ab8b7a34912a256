//! Beat-offset and transposition augmentation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::score::{ChordEvent, NoteEvent, Score, MAX_BEAT, NUM_PITCHES};

pub const SHIFT_TRIES: usize = 13;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Largest semitone shift in either direction.
    pub pitch_shift: u32,
    /// Pieces are moved to start anywhere in `[0, max_beat - length]`,
    /// further capped by this when set.
    pub max_beat_offset: Option<u32>,
    pub max_beat: u32,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            pitch_shift: 6,
            max_beat_offset: None,
            max_beat: MAX_BEAT,
        }
    }
}

/// Moves every event by `offset` beats and `shift` semitones. Chord roots
/// shift modulo 12. Returns `None` if a pitch or beat leaves its range.
pub fn transform(score: &Score, offset: u32, shift: i32) -> Option<Score> {
    let notes = score
        .notes()
        .map(|n| {
            let pitch = n.pitch as i32 + shift;
            (0..NUM_PITCHES as i32).contains(&pitch).then_some(NoteEvent {
                beat: n.beat + offset,
                pitch: pitch as u32,
                ..*n
            })
        })
        .collect::<Option<Vec<_>>>()?;
    let chords = score
        .chords()
        .map(|c| ChordEvent {
            beat: c.beat + offset,
            root: (c.root as i32 + shift).rem_euclid(12) as u32,
            ..*c
        })
        .collect();
    Score::from_parts(notes, chords).ok()
}

/// Random beat offset and semitone shift, deterministic in `seed`. Shifts
/// that push a pitch out of range are redrawn up to [`SHIFT_TRIES`] times,
/// then no shift is applied.
pub fn augment(score: &Score, config: &AugmentConfig, seed: u64) -> Score {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let room = config.max_beat.saturating_sub(score.end_beat());
    let room = config.max_beat_offset.map_or(room, |m| room.min(m));
    let offset = rng.random_range(0..=room);
    let span = config.pitch_shift as i32;
    let (lo, hi) = score
        .notes()
        .fold((i32::MAX, i32::MIN), |(lo, hi), n| (lo.min(n.pitch as i32), hi.max(n.pitch as i32)));
    let mut shift = 0;
    for _ in 0..SHIFT_TRIES {
        let s = rng.random_range(-span..=span);
        if score.note_count() == 0 || (lo + s >= 0 && hi + s < NUM_PITCHES as i32) {
            shift = s;
            break;
        }
    }
    transform(score, offset, shift).unwrap_or_else(|| score.clone())
}
