//! Multi-field token encoding of score events.
//!
//! Every event becomes one token with eight fields. Fields that do not apply
//! to an event's type (pitch of a chord, root of a note, anything but the
//! type of a sentinel) hold that field's null symbol, which is the index
//! one past the field's vocabulary.

use serde::{Deserialize, Serialize};

use crate::chords::ChordQuality;
use crate::error::{Error, Result};
use crate::score::{
    ChordEvent, Event, NoteEvent, Score, NUM_INSTRUMENTS, NUM_PITCHES, POSITIONS_PER_BEAT,
};

pub const NUM_FIELDS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Type,
    Beat,
    Position,
    Pitch,
    Duration,
    Instrument,
    Root,
    Quality,
}

impl Field {
    pub const ALL: [Field; NUM_FIELDS] = [
        Field::Type,
        Field::Beat,
        Field::Position,
        Field::Pitch,
        Field::Duration,
        Field::Instrument,
        Field::Root,
        Field::Quality,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::Type => "type",
            Field::Beat => "beat",
            Field::Position => "position",
            Field::Pitch => "pitch",
            Field::Duration => "duration",
            Field::Instrument => "instrument",
            Field::Root => "root",
            Field::Quality => "quality",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

pub const TYPE_SOS: usize = 0;
pub const TYPE_NOTE: usize = 1;
pub const TYPE_CHORD: usize = 2;
pub const TYPE_EOS: usize = 3;

pub type Token = [usize; NUM_FIELDS];

/// Whether `field` carries information for a token of type `kind`.
pub fn is_relevant(field: Field, kind: usize) -> bool {
    match field {
        Field::Type => true,
        Field::Beat | Field::Position => kind == TYPE_NOTE || kind == TYPE_CHORD,
        Field::Pitch | Field::Duration | Field::Instrument => kind == TYPE_NOTE,
        Field::Root | Field::Quality => kind == TYPE_CHORD,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    pub max_beat: u32,
    pub duration_vocab: Vec<u32>,
}

impl Vocab {
    pub fn new(max_beat: u32, duration_vocab: Vec<u32>) -> Self {
        Vocab {
            max_beat,
            duration_vocab,
        }
    }

    /// Number of real symbols in a field, excluding the null symbol.
    pub fn size(&self, field: Field) -> usize {
        match field {
            Field::Type => 4,
            Field::Beat => self.max_beat as usize,
            Field::Position => POSITIONS_PER_BEAT as usize,
            Field::Pitch => NUM_PITCHES as usize,
            Field::Duration => self.duration_vocab.len(),
            Field::Instrument => NUM_INSTRUMENTS as usize,
            Field::Root => 12,
            Field::Quality => ChordQuality::ALL.len(),
        }
    }

    pub fn null(&self, field: Field) -> usize {
        self.size(field)
    }

    /// Index of the nearest vocabulary duration; ties go to the longer one.
    pub fn duration_index(&self, duration: u32) -> usize {
        let v = &self.duration_vocab;
        let i = v.partition_point(|&d| d < duration);
        if i == 0 {
            0
        } else if i == v.len() {
            v.len() - 1
        } else if duration - v[i - 1] < v[i] - duration {
            i - 1
        } else {
            i
        }
    }

    fn empty(&self, kind: usize) -> Token {
        let mut t = [0; NUM_FIELDS];
        for f in Field::ALL {
            t[f.index()] = self.null(f);
        }
        t[Field::Type.index()] = kind;
        t
    }

    /// Encodes one event. With `instrument`, notes take that instrument.
    pub fn encode_event(&self, event: &Event, instrument: Option<u32>, position: usize) -> Result<Token> {
        let check = |field: Field, value: u32| -> Result<usize> {
            if (value as usize) < self.size(field) {
                Ok(value as usize)
            } else {
                Err(Error::Vocab {
                    field: field.name(),
                    position,
                    value: value as usize,
                })
            }
        };
        Ok(match event {
            Event::Sos => self.empty(TYPE_SOS),
            Event::Eos => self.empty(TYPE_EOS),
            Event::Note(n) => {
                let mut t = self.empty(TYPE_NOTE);
                t[Field::Beat.index()] = check(Field::Beat, n.beat)?;
                t[Field::Position.index()] = check(Field::Position, n.position)?;
                t[Field::Pitch.index()] = check(Field::Pitch, n.pitch)?;
                t[Field::Duration.index()] = self.duration_index(n.duration);
                t[Field::Instrument.index()] =
                    check(Field::Instrument, instrument.unwrap_or(n.instrument))?;
                t
            }
            Event::Chord(c) => {
                let mut t = self.empty(TYPE_CHORD);
                t[Field::Beat.index()] = check(Field::Beat, c.beat)?;
                t[Field::Position.index()] = check(Field::Position, c.position)?;
                t[Field::Root.index()] = check(Field::Root, c.root)?;
                t[Field::Quality.index()] = c.quality.index();
                t
            }
        })
    }

    pub fn encode_events(&self, events: &[Event], instrument: Option<u32>) -> Result<Vec<Token>> {
        events
            .iter()
            .enumerate()
            .map(|(i, e)| self.encode_event(e, instrument, i))
            .collect()
    }

    pub fn encode_score(&self, score: &Score) -> Result<Vec<Token>> {
        self.encode_events(score.events(), None)
    }

    /// Checks that every field holds a real symbol or its null symbol.
    pub fn check_token(&self, token: &Token, position: usize) -> Result<()> {
        for f in Field::ALL {
            if token[f.index()] > self.null(f) {
                return Err(Error::Vocab {
                    field: f.name(),
                    position,
                    value: token[f.index()],
                });
            }
        }
        if token[Field::Type.index()] >= self.size(Field::Type) {
            return Err(Error::Vocab {
                field: "type",
                position,
                value: token[0],
            });
        }
        Ok(())
    }

    pub fn decode_token(&self, token: &Token) -> Option<Event> {
        let get = |f: Field| {
            let v = token[f.index()];
            (v < self.size(f)).then_some(v as u32)
        };
        match token[Field::Type.index()] {
            TYPE_SOS => Some(Event::Sos),
            TYPE_EOS => Some(Event::Eos),
            TYPE_NOTE => Some(Event::Note(NoteEvent {
                beat: get(Field::Beat)?,
                position: get(Field::Position)?,
                pitch: get(Field::Pitch)?,
                duration: self.duration_vocab[get(Field::Duration)? as usize],
                instrument: get(Field::Instrument)?,
            })),
            TYPE_CHORD => Some(Event::Chord(ChordEvent {
                beat: get(Field::Beat)?,
                position: get(Field::Position)?,
                root: get(Field::Root)?,
                quality: ChordQuality::from_index(get(Field::Quality)? as usize)?,
            })),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::midi::DEFAULT_DURATION_VOCAB;

    fn vocab() -> Vocab {
        Vocab::new(256, DEFAULT_DURATION_VOCAB.to_vec())
    }

    #[test]
    fn note_and_chord_tokens() {
        let v = vocab();
        let note = Event::Note(NoteEvent {
            beat: 3,
            position: 6,
            pitch: 60,
            duration: 12,
            instrument: 20,
        });
        let t = v.encode_event(&note, None, 0).unwrap();
        assert_eq!(t, [TYPE_NOTE, 3, 6, 60, 8, 20, 12, 7]);
        assert_eq!(v.decode_token(&t), Some(note));
        let unified = v.encode_event(&note, Some(0), 0).unwrap();
        assert_eq!(unified[Field::Instrument.index()], 0);

        let chord = Event::Chord(ChordEvent {
            beat: 1,
            position: 0,
            root: 9,
            quality: ChordQuality::Min,
        });
        let t = v.encode_event(&chord, None, 0).unwrap();
        assert_eq!(t, [TYPE_CHORD, 1, 0, 128, 26, 64, 9, 1]);
        assert_eq!(v.decode_token(&t), Some(chord));
        assert_eq!(v.encode_event(&Event::Eos, None, 0).unwrap()[1], 256);
    }

    #[test]
    fn out_of_range_names_field_and_position() {
        let v = Vocab::new(4, DEFAULT_DURATION_VOCAB.to_vec());
        let note = Event::Note(NoteEvent {
            beat: 9,
            position: 0,
            pitch: 60,
            duration: 12,
            instrument: 0,
        });
        match v.encode_events(&[Event::Sos, note], None).unwrap_err() {
            Error::Vocab { field, position, value } => {
                assert_eq!((field, position, value), ("beat", 1, 9));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn relevance_table() {
        assert!(is_relevant(Field::Pitch, TYPE_NOTE));
        assert!(!is_relevant(Field::Pitch, TYPE_CHORD));
        assert!(is_relevant(Field::Root, TYPE_CHORD));
        assert!(!is_relevant(Field::Beat, TYPE_EOS));
        assert!(is_relevant(Field::Type, TYPE_EOS));
    }
}
