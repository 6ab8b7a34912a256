//! Synthetic melody-over-accompaniment pieces with a planted melody.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chords::{merge_chords, ChordConfig, ChordQuality};
use crate::error::{Error, Result};
use crate::score::{NoteEvent, Score, MAX_BEAT, POSITIONS_PER_BEAT};

/// Instrument classes (program / 2) used by the generator.
pub const MELODY_INSTRUMENT: u32 = 36;
pub const BASS_INSTRUMENT: u32 = 16;
pub const ACCOMPANIMENT_INSTRUMENTS: [u32; 4] = [0, 24, 9, 30];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCorpusConfig {
    pub n_pieces: usize,
    pub beats_per_piece: u32,
    /// Block-chord accompaniment voices, each a three-note chord per beat.
    pub voices: usize,
    /// Melody register, inclusive. It lies above every accompaniment note.
    pub melody_range: (u32, u32),
    /// Probability that a beat's melody also has an off-beat note.
    pub offbeat_rate: f64,
    /// Progressions as (scale degree in semitones, quality), one chord per
    /// two beats, transposed to a random key per piece.
    pub progressions: Vec<Vec<(u32, ChordQuality)>>,
    pub seed: u64,
}

impl Default for SyntheticCorpusConfig {
    fn default() -> Self {
        use ChordQuality::{Maj, Min};
        SyntheticCorpusConfig {
            n_pieces: 60,
            beats_per_piece: 8,
            voices: 3,
            melody_range: (80, 98),
            offbeat_rate: 0.5,
            progressions: vec![
                vec![(0, Maj), (7, Maj), (9, Min), (5, Maj)],
                vec![(2, Min), (7, Maj), (0, Maj), (0, Maj)],
                vec![(0, Maj), (9, Min), (5, Maj), (7, Maj)],
                vec![(9, Min), (5, Maj), (0, Maj), (7, Maj)],
            ],
            seed: 0,
        }
    }
}

impl SyntheticCorpusConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_pieces == 0 || self.beats_per_piece == 0 || self.voices == 0 {
            return bad("n_pieces, beats_per_piece and voices must be positive");
        }
        if self.voices > ACCOMPANIMENT_INSTRUMENTS.len() {
            return bad("at most four accompaniment voices");
        }
        if self.beats_per_piece > MAX_BEAT {
            return bad("piece longer than the beat limit");
        }
        let (lo, hi) = self.melody_range;
        if lo > hi || hi > 127 || lo < 80 {
            return bad("melody range must lie in [80, 127] so it stays on top");
        }
        if !(0.0..=1.0).contains(&self.offbeat_rate) {
            return bad("offbeat_rate must be in [0, 1]");
        }
        if self.progressions.is_empty() || self.progressions.iter().any(|p| p.is_empty()) {
            return bad("need at least one non-empty progression");
        }
        Ok(())
    }
}

/// A generated piece and its planted melody.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticPiece {
    pub score: Score,
    pub melody: Score,
}

fn chord_tones(root: u32, quality: ChordQuality) -> [u32; 3] {
    let t = quality.template();
    [root, root + t[1], root + t[2]]
}

/// One piece. Accompaniment voice `v` plays inversion `v % 3` of the chord
/// starting from a root in `[48, 60)`; the bass doubles the root an octave
/// lower.
fn generate_piece(cfg: &SyntheticCorpusConfig, rng: &mut ChaCha8Rng) -> Result<SyntheticPiece> {
    let key = rng.random_range(0..12u32);
    let prog = &cfg.progressions[rng.random_range(0..cfg.progressions.len())];
    let (lo, hi) = cfg.melody_range;
    let mut pitch = rng.random_range(lo..=hi);
    let mut notes = Vec::new();
    let mut melody = Vec::new();

    for beat in 0..cfg.beats_per_piece {
        let (degree, quality) = prog[(beat / 2) as usize % prog.len()];
        let root = 48 + (key + degree) % 12;
        let tones = chord_tones(root, quality);
        let note = |pitch, position, duration, instrument| NoteEvent {
            beat,
            position,
            pitch,
            duration,
            instrument,
        };
        notes.push(note(root - 12, 0, POSITIONS_PER_BEAT, BASS_INSTRUMENT));
        for v in 0..cfg.voices {
            for (j, &t) in tones.iter().enumerate() {
                let p = if j < v % 3 { t + 12 } else { t };
                notes.push(note(p, 0, POSITIONS_PER_BEAT, ACCOMPANIMENT_INSTRUMENTS[v]));
            }
        }

        // Melody walks by small steps, preferring chord tones on the beat.
        let offbeat = rng.random_bool(cfg.offbeat_rate);
        let target = tones[rng.random_range(0..3)] % 12;
        let mut candidates: Vec<u32> = (lo..=hi).filter(|p| p % 12 == target).collect();
        candidates.sort_by_key(|&p| (p as i64 - pitch as i64).abs());
        pitch = candidates.first().copied().unwrap_or(pitch);
        let first_len = if offbeat { POSITIONS_PER_BEAT / 2 } else { POSITIONS_PER_BEAT };
        let m = note(pitch, 0, first_len, MELODY_INSTRUMENT);
        notes.push(m);
        melody.push(m);
        if offbeat {
            let step: i64 = [-2, -1, 1, 2][rng.random_range(0..4)];
            pitch = (pitch as i64 + step).clamp(lo as i64, hi as i64) as u32;
            let m = note(pitch, POSITIONS_PER_BEAT / 2, POSITIONS_PER_BEAT / 2, MELODY_INSTRUMENT);
            notes.push(m);
            melody.push(m);
        }
    }
    let score = merge_chords(&Score::from_parts(notes, vec![])?, &ChordConfig::default())?;
    Ok(SyntheticPiece {
        score,
        melody: Score::from_parts(melody, vec![])?,
    })
}

/// Deterministic in `config.seed`; piece `i` depends only on the seed and `i`.
pub fn make_synthetic_corpus(config: &SyntheticCorpusConfig) -> Result<Vec<SyntheticPiece>> {
    config.validate()?;
    (0..config.n_pieces)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64 + 1);
            generate_piece(config, &mut rng)
        })
        .collect()
}
