//! In-memory score model: events, ordering, onset grouping and masking.
//!
//! A [`Score`] is always bracketed by exactly one `Sos` and one `Eos` and its
//! events are kept in canonical order: by onset, chords before notes, then by
//! ascending pitch and instrument.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::chords::ChordQuality;
use crate::error::{Error, Result};
use crate::reduction::SelectionBudget;

pub const POSITIONS_PER_BEAT: u32 = 12;
pub const MAX_BEAT: u32 = 256;
pub const MAX_EVENTS: usize = 1024;
pub const NUM_PITCHES: u32 = 128;
pub const NUM_INSTRUMENTS: u32 = 64;
/// Longest representable note, in positions (16 beats).
pub const MAX_DURATION: u32 = 192;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Onset {
    pub beat: u32,
    pub position: u32,
}

impl Onset {
    pub fn new(beat: u32, position: u32) -> Self {
        Onset { beat, position }
    }

    /// Absolute time in positions from the start of the piece.
    pub fn ticks(self) -> u64 {
        self.beat as u64 * POSITIONS_PER_BEAT as u64 + self.position as u64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NoteEvent {
    pub beat: u32,
    pub position: u32,
    pub pitch: u32,
    /// Length in positions (twelfths of a beat).
    pub duration: u32,
    /// Reduced program class, `program / 2`.
    pub instrument: u32,
}

impl NoteEvent {
    pub fn onset(&self) -> Onset {
        Onset::new(self.beat, self.position)
    }

    pub fn start(&self) -> u64 {
        self.onset().ticks()
    }

    pub fn end(&self) -> u64 {
        self.start() + self.duration as u64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChordEvent {
    pub beat: u32,
    pub position: u32,
    /// Pitch class of the root.
    pub root: u32,
    pub quality: ChordQuality,
}

impl ChordEvent {
    pub fn onset(&self) -> Onset {
        Onset::new(self.beat, self.position)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Event {
    Sos,
    Note(NoteEvent),
    Chord(ChordEvent),
    Eos,
}

impl Event {
    pub fn onset(&self) -> Option<Onset> {
        match self {
            Event::Note(n) => Some(n.onset()),
            Event::Chord(c) => Some(c.onset()),
            Event::Sos | Event::Eos => None,
        }
    }

    pub fn is_sentinel(&self) -> bool {
        matches!(self, Event::Sos | Event::Eos)
    }

    pub fn as_note(&self) -> Option<&NoteEvent> {
        match self {
            Event::Note(n) => Some(n),
            _ => None,
        }
    }

    pub fn as_chord(&self) -> Option<&ChordEvent> {
        match self {
            Event::Chord(c) => Some(c),
            _ => None,
        }
    }

    fn sort_key(&self) -> (u8, u32, u32, u8, u32, u32, u32) {
        match self {
            Event::Sos => (0, 0, 0, 0, 0, 0, 0),
            Event::Chord(c) => (1, c.beat, c.position, 0, c.root, c.quality.index() as u32, 0),
            Event::Note(n) => (1, n.beat, n.position, 1, n.pitch, n.instrument, n.duration),
            Event::Eos => (2, 0, 0, 0, 0, 0, 0),
        }
    }
}

/// Canonical event order used everywhere a score is materialized.
pub fn event_order(a: &Event, b: &Event) -> Ordering {
    a.sort_key().cmp(&b.sort_key())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Score {
    events: Vec<Event>,
}

impl Score {
    /// Wraps an already ordered event list, sentinels included.
    pub fn new(events: Vec<Event>) -> Result<Self> {
        let score = Score { events };
        score.validate()?;
        Ok(score)
    }

    /// Sorts notes and chords into canonical order and adds the sentinels.
    pub fn from_parts(notes: Vec<NoteEvent>, chords: Vec<ChordEvent>) -> Result<Self> {
        let mut body: Vec<Event> = chords
            .into_iter()
            .map(Event::Chord)
            .chain(notes.into_iter().map(Event::Note))
            .collect();
        body.sort_by(event_order);
        let mut events = Vec::with_capacity(body.len() + 2);
        events.push(Event::Sos);
        events.extend(body);
        events.push(Event::Eos);
        Score::new(events)
    }

    pub fn empty() -> Self {
        Score {
            events: vec![Event::Sos, Event::Eos],
        }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    /// True when the score holds nothing but the sentinels.
    pub fn is_empty(&self) -> bool {
        self.events.len() == 2
    }

    pub fn resolution(&self) -> u32 {
        POSITIONS_PER_BEAT
    }

    pub fn notes(&self) -> impl Iterator<Item = &NoteEvent> + '_ {
        self.events.iter().filter_map(Event::as_note)
    }

    pub fn chords(&self) -> impl Iterator<Item = &ChordEvent> + '_ {
        self.events.iter().filter_map(Event::as_chord)
    }

    pub fn note_count(&self) -> usize {
        self.notes().count()
    }

    pub fn chord_count(&self) -> usize {
        self.chords().count()
    }

    /// Last beat touched by any note (end exclusive), or the last chord beat.
    pub fn end_beat(&self) -> u32 {
        let note_end = self
            .notes()
            .map(|n| n.end().div_ceil(POSITIONS_PER_BEAT as u64) as u32)
            .max()
            .unwrap_or(0);
        let chord_end = self.chords().map(|c| c.beat + 1).max().unwrap_or(0);
        note_end.max(chord_end)
    }

    /// Returns a copy with the chords replaced.
    pub fn with_chords(&self, chords: Vec<ChordEvent>) -> Result<Score> {
        Score::from_parts(self.notes().copied().collect(), chords)
    }

    pub fn without_chords(&self) -> Score {
        Score::from_parts(self.notes().copied().collect(), Vec::new())
            .expect("dropping chords keeps a valid score valid")
    }

    pub fn validate(&self) -> Result<()> {
        let ev = &self.events;
        if ev.len() < 2 || ev[0] != Event::Sos || ev[ev.len() - 1] != Event::Eos {
            return Err(Error::Validation(
                "score must start with SOS and end with EOS".into(),
            ));
        }
        if ev.len() > MAX_EVENTS {
            return Err(Error::Validation(format!(
                "{} events exceeds the limit of {MAX_EVENTS}",
                ev.len()
            )));
        }
        for (i, e) in ev.iter().enumerate().take(ev.len() - 1).skip(1) {
            match e {
                Event::Sos | Event::Eos => {
                    return Err(Error::Validation(format!("stray sentinel at index {i}")))
                }
                Event::Note(n) => check_note(n, i)?,
                Event::Chord(c) => check_chord(c, i)?,
            }
        }
        for (i, w) in ev.windows(2).enumerate() {
            if event_order(&w[0], &w[1]) == Ordering::Greater {
                return Err(Error::Validation(format!(
                    "events {} and {} are out of order",
                    i,
                    i + 1
                )));
            }
            if let (Event::Chord(a), Event::Chord(b)) = (&w[0], &w[1]) {
                if a.onset() == b.onset() {
                    return Err(Error::Validation(format!(
                        "two chords share onset ({}, {})",
                        a.beat, a.position
                    )));
                }
            }
        }
        Ok(())
    }
}

fn check_note(n: &NoteEvent, i: usize) -> Result<()> {
    let bad = |what: &str| Err(Error::Validation(format!("note at index {i}: {what}")));
    if n.beat >= MAX_BEAT {
        return bad(&format!("beat {} >= {MAX_BEAT}", n.beat));
    }
    if n.position >= POSITIONS_PER_BEAT {
        return bad(&format!("position {} >= {POSITIONS_PER_BEAT}", n.position));
    }
    if n.pitch >= NUM_PITCHES {
        return bad(&format!("pitch {} >= {NUM_PITCHES}", n.pitch));
    }
    if n.duration == 0 || n.duration > MAX_DURATION {
        return bad(&format!("duration {} outside [1, {MAX_DURATION}]", n.duration));
    }
    if n.instrument >= NUM_INSTRUMENTS {
        return bad(&format!("instrument {} >= {NUM_INSTRUMENTS}", n.instrument));
    }
    Ok(())
}

fn check_chord(c: &ChordEvent, i: usize) -> Result<()> {
    if c.beat >= MAX_BEAT || c.position >= POSITIONS_PER_BEAT || c.root >= 12 {
        return Err(Error::Validation(format!(
            "chord at index {i} out of range: beat {}, position {}, root {}",
            c.beat, c.position, c.root
        )));
    }
    Ok(())
}

/// Events sharing one (beat, position) onset, regardless of instrument.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OnsetGroup {
    pub onset: Onset,
    pub note_indices: Vec<usize>,
    pub chord_index: Option<usize>,
}

impl OnsetGroup {
    pub fn len(&self) -> usize {
        self.note_indices.len() + self.chord_index.is_some() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Chord first, then notes, matching score order.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.chord_index.into_iter().chain(self.note_indices.iter().copied())
    }
}

pub fn group_by_onset(score: &Score) -> Result<Vec<OnsetGroup>> {
    score.validate()?;
    Ok(group_events(score.events()))
}

/// Grouping without validation, for event lists already known to be sorted.
pub(crate) fn group_events(events: &[Event]) -> Vec<OnsetGroup> {
    let mut groups: Vec<OnsetGroup> = Vec::new();
    for (i, e) in events.iter().enumerate() {
        let Some(onset) = e.onset() else { continue };
        if groups.last().map(|g| g.onset) != Some(onset) {
            groups.push(OnsetGroup {
                onset,
                note_indices: Vec::new(),
                chord_index: None,
            });
        }
        let group = groups.last_mut().expect("pushed above");
        match e {
            Event::Note(_) => group.note_indices.push(i),
            Event::Chord(_) => group.chord_index = Some(i),
            _ => unreachable!(),
        }
    }
    groups
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LeadSheet {
    pub source: Score,
    pub mask: Vec<bool>,
    pub unified_instrument: u32,
}

impl LeadSheet {
    pub fn kept_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i)
    }

    pub fn kept_note_count(&self) -> usize {
        self.kept_indices()
            .filter(|&i| matches!(self.source.events()[i], Event::Note(_)))
            .count()
    }

    pub fn kept_chord_count(&self) -> usize {
        self.kept_indices()
            .filter(|&i| matches!(self.source.events()[i], Event::Chord(_)))
            .count()
    }

    /// The lead sheet as a standalone score: kept events only, every note on
    /// the unified instrument, duplicates created by unification removed.
    pub fn materialize(&self) -> Score {
        let mut body: Vec<Event> = self
            .kept_indices()
            .filter_map(|i| match self.source.events()[i] {
                Event::Note(mut n) => {
                    n.instrument = self.unified_instrument;
                    Some(Event::Note(n))
                }
                e @ Event::Chord(_) => Some(e),
                _ => None,
            })
            .collect();
        body.sort_by(event_order);
        // Notes differing only in instrument collapse to one; keep the longest.
        let mut deduped: Vec<Event> = Vec::with_capacity(body.len() + 2);
        deduped.push(Event::Sos);
        for e in body {
            if let (Event::Note(n), Some(Event::Note(prev))) = (&e, deduped.last_mut()) {
                if prev.onset() == n.onset() && prev.pitch == n.pitch {
                    prev.duration = prev.duration.max(n.duration);
                    continue;
                }
            }
            deduped.push(e);
        }
        deduped.push(Event::Eos);
        Score::new(deduped).expect("subset of a valid score is valid")
    }
}

pub fn apply_mask(score: &Score, mask: &[bool], unified_instrument: u32) -> Result<LeadSheet> {
    if mask.len() != score.len() {
        return Err(Error::Shape(format!(
            "mask has {} entries for {} events",
            mask.len(),
            score.len()
        )));
    }
    if !mask[0] || !mask[mask.len() - 1] {
        return Err(Error::Validation("SOS and EOS must stay in the mask".into()));
    }
    if unified_instrument >= NUM_INSTRUMENTS {
        return Err(Error::Validation(format!(
            "unified instrument {unified_instrument} >= {NUM_INSTRUMENTS}"
        )));
    }
    Ok(LeadSheet {
        source: score.clone(),
        mask: mask.to_vec(),
        unified_instrument,
    })
}

/// True iff every onset group keeps exactly its budgeted number of events
/// and every force-kept chord is present.
pub fn validate_budget(lead: &LeadSheet, budget: &SelectionBudget) -> bool {
    if lead.mask.len() != lead.source.len() {
        return false;
    }
    let (first, last) = (lead.mask[0], lead.mask[lead.mask.len() - 1]);
    if !first || !last {
        return false;
    }
    group_events(lead.source.events()).iter().all(|g| {
        let b = budget.budget_for_group(g.note_indices.len(), g.chord_index.is_some());
        let kept = g.indices().filter(|&i| lead.mask[i]).count();
        let chord_ok = !b.forced_chord || g.chord_index.is_some_and(|c| lead.mask[c]);
        kept == b.total() && chord_ok
    })
}
