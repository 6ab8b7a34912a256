//! Standard MIDI File reading and writing with grid quantization.
//!
//! Reading accepts format 0 and 1 files with metrical time division. Notes are
//! snapped to twelve positions per beat and to the nearest entry of the
//! duration vocabulary; percussion (channel 10) is dropped.

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::score::{
    ChordEvent, Event, LeadSheet, NoteEvent, Score, MAX_BEAT, MAX_EVENTS, POSITIONS_PER_BEAT,
};

pub const WRITE_TICKS_PER_QUARTER: u16 = 480;
pub const CHORD_BASE_PITCH: u32 = 48;
const PERCUSSION_CHANNEL: u8 = 9;

pub const DEFAULT_DURATION_VOCAB: [u32; 26] = [
    1, 2, 3, 4, 6, 8, 9, 10, 12, 15, 16, 18, 20, 24, 30, 36, 40, 48, 60, 72, 84, 96, 120, 144,
    168, 192,
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizationConfig {
    pub max_beat: u32,
    pub max_events: usize,
    pub duration_vocab: Vec<u32>,
}

impl Default for QuantizationConfig {
    fn default() -> Self {
        QuantizationConfig {
            max_beat: MAX_BEAT,
            max_events: MAX_EVENTS,
            duration_vocab: DEFAULT_DURATION_VOCAB.to_vec(),
        }
    }
}

impl QuantizationConfig {
    pub fn validate(&self) -> Result<()> {
        let v = &self.duration_vocab;
        if v.is_empty() || v[0] < 1 || v.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "duration vocabulary must be strictly increasing and start at >= 1".into(),
            ));
        }
        if *v.last().unwrap() > crate::score::MAX_DURATION {
            return Err(Error::Config("duration vocabulary exceeds 192 positions".into()));
        }
        if self.max_beat == 0 || self.max_beat > MAX_BEAT {
            return Err(Error::Config(format!("max_beat must be in [1, {MAX_BEAT}]")));
        }
        if self.max_events < 2 || self.max_events > MAX_EVENTS {
            return Err(Error::Config(format!("max_events must be in [2, {MAX_EVENTS}]")));
        }
        Ok(())
    }

    /// Nearest vocabulary entry; ties resolve to the longer duration.
    pub fn snap_duration(&self, positions: u32) -> u32 {
        let v = &self.duration_vocab;
        let i = v.partition_point(|&d| d < positions);
        if i == 0 {
            return v[0];
        }
        if i == v.len() {
            return v[v.len() - 1];
        }
        let (lo, hi) = (v[i - 1], v[i]);
        if positions - lo < hi - positions {
            lo
        } else {
            hi
        }
    }

    pub fn duration_index(&self, duration: u32) -> usize {
        let snapped = self.snap_duration(duration);
        self.duration_vocab
            .binary_search(&snapped)
            .expect("snapped value is in the vocabulary")
    }

    /// Snaps durations and truncates to the beat and event limits. The identity
    /// on scores that are already quantized.
    pub fn quantize(&self, score: &Score) -> Score {
        let mut kept = Vec::new();
        let body_limit = self.max_events - 2;
        for e in &score.events()[1..score.len() - 1] {
            if kept.len() == body_limit {
                break;
            }
            match *e {
                Event::Note(mut n) if n.beat < self.max_beat => {
                    n.duration = self.snap_duration(n.duration);
                    kept.push(Event::Note(n));
                }
                Event::Chord(c) if c.beat < self.max_beat => kept.push(Event::Chord(c)),
                _ => {}
            }
        }
        let mut events = Vec::with_capacity(kept.len() + 2);
        events.push(Event::Sos);
        events.extend(kept);
        events.push(Event::Eos);
        // Snapping is monotone and duration is the last sort key, so the
        // order is preserved.
        Score::new(events).expect("quantized events are in range")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RawKind {
    NoteOn { pitch: u8, velocity: u8 },
    NoteOff { pitch: u8 },
    ProgramChange { program: u8 },
    OtherChannel,
    Meta { kind: u8 },
    SysEx,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RawEvent {
    pub tick: u64,
    pub channel: u8,
    pub kind: RawKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawMidiTrack {
    pub events: Vec<RawEvent>,
    pub ticks_per_quarter: u16,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawMidiFile {
    pub format: u16,
    pub ticks_per_quarter: u16,
    pub tracks: Vec<RawMidiTrack>,
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
    /// Offset of `data[0]` in the whole file, for error reporting.
    base: usize,
}

impl<'a> Reader<'a> {
    fn new(data: &'a [u8], base: usize) -> Self {
        Reader { data, pos: 0, base }
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            offset: self.base + self.pos,
            message: message.into(),
        })
    }

    fn done(&self) -> bool {
        self.pos >= self.data.len()
    }

    fn u8(&mut self) -> Result<u8> {
        match self.data.get(self.pos) {
            Some(&b) => {
                self.pos += 1;
                Ok(b)
            }
            None => self.err("unexpected end of chunk"),
        }
    }

    fn peek(&self) -> Result<u8> {
        match self.data.get(self.pos) {
            Some(&b) => Ok(b),
            None => self.err("unexpected end of chunk"),
        }
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return self.err(format!("length {n} runs past end of chunk"));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.bytes(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.bytes(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn varlen(&mut self) -> Result<u32> {
        let mut value = 0u32;
        for _ in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | (b & 0x7f) as u32;
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        self.err("variable-length quantity longer than 4 bytes")
    }
}

/// Low-level chunk and event decoding.
pub fn read_raw(bytes: &[u8]) -> Result<RawMidiFile> {
    let mut r = Reader::new(bytes, 0);
    if r.bytes(4).ok() != Some(b"MThd".as_slice()) {
        return Err(Error::Parse {
            offset: 0,
            message: "missing MThd header".into(),
        });
    }
    let header_len = r.u32()? as usize;
    if header_len < 6 {
        return r.err(format!("header length {header_len} < 6"));
    }
    let header = r.bytes(header_len)?;
    let mut h = Reader::new(header, 8);
    let format = h.u16()?;
    let ntracks = h.u16()?;
    let division = h.u16()?;
    if format > 1 {
        return Err(Error::Parse {
            offset: 8,
            message: format!("unsupported SMF format {format}"),
        });
    }
    if division & 0x8000 != 0 || division == 0 {
        return Err(Error::Parse {
            offset: 12,
            message: "SMPTE or zero time division is not supported".into(),
        });
    }

    let mut tracks = Vec::with_capacity(ntracks as usize);
    while !r.done() && tracks.len() < ntracks as usize {
        let chunk_start = r.pos;
        let id = r.bytes(4)?;
        let len = r.u32()? as usize;
        let body_offset = r.pos;
        let body = match r.bytes(len) {
            Ok(b) => b,
            Err(_) => {
                return Err(Error::Parse {
                    offset: chunk_start + 4,
                    message: format!("chunk length {len} runs past end of file"),
                })
            }
        };
        if id == b"MTrk" {
            tracks.push(read_track(body, body_offset, division)?);
        }
    }
    if tracks.len() < ntracks as usize {
        return Err(Error::Parse {
            offset: r.pos,
            message: format!("header declares {ntracks} tracks, found {}", tracks.len()),
        });
    }
    Ok(RawMidiFile {
        format,
        ticks_per_quarter: division,
        tracks,
    })
}

fn read_track(body: &[u8], base: usize, tpq: u16) -> Result<RawMidiTrack> {
    let mut r = Reader::new(body, base);
    let mut tick = 0u64;
    let mut running: Option<u8> = None;
    let mut events = Vec::new();
    while !r.done() {
        tick += r.varlen()? as u64;
        let status = if r.peek()? & 0x80 != 0 {
            r.u8()?
        } else {
            match running {
                Some(s) => s,
                None => return r.err("data byte without running status"),
            }
        };
        match status {
            0xff => {
                let kind = r.u8()?;
                let len = r.varlen()? as usize;
                r.bytes(len)?;
                events.push(RawEvent {
                    tick,
                    channel: 0,
                    kind: RawKind::Meta { kind },
                });
                if kind == 0x2f {
                    break;
                }
            }
            0xf0 | 0xf7 => {
                let len = r.varlen()? as usize;
                r.bytes(len)?;
                running = None;
                events.push(RawEvent {
                    tick,
                    channel: 0,
                    kind: RawKind::SysEx,
                });
            }
            0x80..=0xef => {
                running = Some(status);
                let channel = status & 0x0f;
                let data1 = r.u8()?;
                let kind = match status & 0xf0 {
                    0x80 => {
                        r.u8()?;
                        RawKind::NoteOff { pitch: data1 }
                    }
                    0x90 => {
                        let velocity = r.u8()?;
                        if velocity == 0 {
                            RawKind::NoteOff { pitch: data1 }
                        } else {
                            RawKind::NoteOn {
                                pitch: data1,
                                velocity,
                            }
                        }
                    }
                    0xc0 => RawKind::ProgramChange { program: data1 },
                    0xd0 => RawKind::OtherChannel,
                    _ => {
                        r.u8()?;
                        RawKind::OtherChannel
                    }
                };
                if data1 & 0x80 != 0 {
                    return r.err("data byte has its high bit set");
                }
                events.push(RawEvent {
                    tick,
                    channel,
                    kind,
                });
            }
            _ => return r.err(format!("unsupported status byte {status:#04x}")),
        }
    }
    Ok(RawMidiTrack {
        events,
        ticks_per_quarter: tpq,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedMidi {
    pub score: Score,
    pub warnings: Vec<String>,
}

pub fn parse_midi(bytes: &[u8], config: &QuantizationConfig) -> Result<Score> {
    parse_midi_with_warnings(bytes, config).map(|p| p.score)
}

/// Rounds ticks to the nearest position, ties rounding up.
fn quantize_ticks(tick: u64, tpq: u64) -> u64 {
    (2 * tick * POSITIONS_PER_BEAT as u64 + tpq) / (2 * tpq)
}

pub fn parse_midi_with_warnings(bytes: &[u8], config: &QuantizationConfig) -> Result<ParsedMidi> {
    config.validate()?;
    let raw = read_raw(bytes)?;
    let tpq = raw.ticks_per_quarter as u64;
    let mut warnings = Vec::new();
    let mut spans: Vec<(u64, u64, u8, u8)> = Vec::new(); // start, end, pitch, program

    for (t, track) in raw.tracks.iter().enumerate() {
        let mut programs = [0u8; 16];
        let mut open: HashMap<(u8, u8), VecDeque<(u64, u8)>> = HashMap::new();
        let end_tick = track.events.last().map_or(0, |e| e.tick);
        for e in &track.events {
            if e.channel == PERCUSSION_CHANNEL {
                continue;
            }
            match e.kind {
                RawKind::ProgramChange { program } => programs[e.channel as usize] = program,
                RawKind::NoteOn { pitch, .. } => open
                    .entry((e.channel, pitch))
                    .or_default()
                    .push_back((e.tick, programs[e.channel as usize])),
                RawKind::NoteOff { pitch } => {
                    if let Some((start, program)) =
                        open.get_mut(&(e.channel, pitch)).and_then(VecDeque::pop_front)
                    {
                        spans.push((start, e.tick, pitch, program));
                    }
                }
                _ => {}
            }
        }
        let mut dangling: Vec<_> = open
            .into_iter()
            .flat_map(|((ch, pitch), q)| q.into_iter().map(move |(s, p)| (ch, pitch, s, p)))
            .collect();
        dangling.sort_unstable();
        for (ch, pitch, start, program) in dangling {
            warnings.push(format!(
                "track {t}: note {pitch} on channel {} at tick {start} never released; closed at track end",
                ch + 1
            ));
            spans.push((start, end_tick.max(start), pitch, program));
        }
    }

    let mut notes = Vec::with_capacity(spans.len());
    for (start, end, pitch, program) in spans {
        let q_start = quantize_ticks(start, tpq);
        let beat = q_start / POSITIONS_PER_BEAT as u64;
        if beat >= config.max_beat as u64 {
            continue;
        }
        let raw_len = quantize_ticks(end - start, tpq).max(1);
        notes.push(NoteEvent {
            beat: beat as u32,
            position: (q_start % POSITIONS_PER_BEAT as u64) as u32,
            pitch: pitch as u32,
            duration: config.snap_duration(raw_len.min(u32::MAX as u64) as u32),
            instrument: (program / 2) as u32,
        });
    }
    notes.sort_by(|a, b| crate::score::event_order(&Event::Note(*a), &Event::Note(*b)));
    let limit = config.max_events - 2;
    if notes.len() > limit {
        warnings.push(format!("truncated {} notes past the event limit", notes.len() - limit));
        notes.truncate(limit);
    }
    Ok(ParsedMidi {
        score: Score::from_parts(notes, Vec::new())?,
        warnings,
    })
}

struct TrackWriter {
    bytes: Vec<u8>,
    last_tick: u64,
}

impl TrackWriter {
    fn new() -> Self {
        TrackWriter {
            bytes: Vec::new(),
            last_tick: 0,
        }
    }

    fn varlen(&mut self, mut v: u32) {
        let mut buf = [0u8; 4];
        let mut n = 0;
        loop {
            buf[n] = (v & 0x7f) as u8;
            n += 1;
            v >>= 7;
            if v == 0 {
                break;
            }
        }
        for i in (0..n).rev() {
            self.bytes.push(buf[i] | if i > 0 { 0x80 } else { 0 });
        }
    }

    fn event(&mut self, tick: u64, data: &[u8]) {
        let delta = tick - self.last_tick;
        self.last_tick = tick;
        self.varlen(delta as u32);
        self.bytes.extend_from_slice(data);
    }

    fn meta(&mut self, tick: u64, kind: u8, payload: &[u8]) {
        let delta = tick - self.last_tick;
        self.last_tick = tick;
        self.varlen(delta as u32);
        self.bytes.extend_from_slice(&[0xff, kind]);
        self.varlen(payload.len() as u32);
        self.bytes.extend_from_slice(payload);
    }

    fn finish(mut self, out: &mut Vec<u8>) {
        let tick = self.last_tick;
        self.meta(tick, 0x2f, &[]);
        out.extend_from_slice(b"MTrk");
        out.extend_from_slice(&(self.bytes.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.bytes);
    }
}

fn ticks(positions: u64) -> u64 {
    positions * (WRITE_TICKS_PER_QUARTER as u64 / POSITIONS_PER_BEAT as u64)
}

/// Channels usable for pitched parts, skipping percussion.
fn channel_for(track: usize) -> u8 {
    let c = (track % 15) as u8;
    if c >= PERCUSSION_CHANNEL {
        c + 1
    } else {
        c
    }
}

fn write_notes(track: &mut TrackWriter, channel: u8, notes: &[(u64, u64, u32)]) {
    // (tick, order, pitch): offs sort before ons at the same tick.
    let mut msgs: Vec<(u64, u8, u32)> = Vec::with_capacity(notes.len() * 2);
    for &(start, end, pitch) in notes {
        msgs.push((ticks(start), 1, pitch));
        msgs.push((ticks(end), 0, pitch));
    }
    msgs.sort_unstable();
    for (tick, order, pitch) in msgs {
        let status = if order == 1 { 0x90 } else { 0x80 } | channel;
        let velocity = if order == 1 { 64 } else { 0 };
        track.event(tick, &[status, pitch as u8, velocity]);
    }
}

/// Writes an SMF format 1 file at 480 ticks per quarter: a tempo track, one
/// track per instrument class and, when the score has chords, a block-chord
/// track voiced in root position upward from C3.
pub fn write_midi(score: &Score) -> Vec<u8> {
    let mut by_instrument: BTreeMap<u32, Vec<(u64, u64, u32)>> = BTreeMap::new();
    for n in score.notes() {
        by_instrument
            .entry(n.instrument)
            .or_default()
            .push((n.start(), n.end(), n.pitch));
    }
    let chords: Vec<ChordEvent> = score.chords().copied().collect();
    let ntracks = 1 + by_instrument.len() + usize::from(!chords.is_empty());

    let mut out = Vec::new();
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&(ntracks as u16).to_be_bytes());
    out.extend_from_slice(&WRITE_TICKS_PER_QUARTER.to_be_bytes());

    let mut tempo = TrackWriter::new();
    tempo.meta(0, 0x51, &[0x07, 0xa1, 0x20]);
    tempo.finish(&mut out);

    for (i, (instrument, notes)) in by_instrument.iter().enumerate() {
        let channel = channel_for(i);
        let mut track = TrackWriter::new();
        track.event(0, &[0xc0 | channel, (instrument * 2) as u8]);
        write_notes(&mut track, channel, notes);
        track.finish(&mut out);
    }

    if !chords.is_empty() {
        let channel = channel_for(by_instrument.len());
        let piece_end = score
            .notes()
            .map(NoteEvent::end)
            .chain(chords.iter().map(|c| c.onset().ticks() + POSITIONS_PER_BEAT as u64))
            .max()
            .unwrap_or(0);
        let mut rendered = Vec::new();
        for (i, c) in chords.iter().enumerate() {
            let start = c.onset().ticks();
            let end = chords.get(i + 1).map_or(piece_end, |next| next.onset().ticks());
            for p in chord_pitches(c) {
                rendered.push((start, end, p));
            }
        }
        let mut track = TrackWriter::new();
        track.meta(0, 0x03, b"Chords");
        track.event(0, &[0xc0 | channel, 0]);
        write_notes(&mut track, channel, &rendered);
        track.finish(&mut out);
    }
    out
}

pub fn chord_pitches(chord: &ChordEvent) -> Vec<u32> {
    chord
        .quality
        .template()
        .iter()
        .map(|off| CHORD_BASE_PITCH + chord.root + off)
        .collect()
}

pub fn write_lead_sheet_midi(lead: &LeadSheet) -> Vec<u8> {
    write_midi(&lead.materialize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chords::ChordQuality;

    fn smf(tpq: u16, track: &[u8]) -> Vec<u8> {
        let mut out = b"MThd".to_vec();
        out.extend_from_slice(&6u32.to_be_bytes());
        out.extend_from_slice(&0u16.to_be_bytes());
        out.extend_from_slice(&1u16.to_be_bytes());
        out.extend_from_slice(&tpq.to_be_bytes());
        out.extend_from_slice(b"MTrk");
        out.extend_from_slice(&(track.len() as u32).to_be_bytes());
        out.extend_from_slice(track);
        out
    }

    #[test]
    fn single_quarter_note() {
        // on at 0, off after 480 ticks (0x83 0x60)
        let bytes = smf(480, &[0x00, 0x90, 60, 100, 0x83, 0x60, 0x80, 60, 0, 0x00, 0xff, 0x2f, 0]);
        let score = parse_midi(&bytes, &QuantizationConfig::default()).unwrap();
        let notes: Vec<_> = score.notes().copied().collect();
        assert_eq!(
            notes,
            vec![NoteEvent {
                beat: 0,
                position: 0,
                pitch: 60,
                duration: 12,
                instrument: 0
            }]
        );
    }

    #[test]
    fn rounding_rule() {
        assert_eq!(quantize_ticks(239, 480), 6);
        assert_eq!(quantize_ticks(20, 480), 1); // exactly half a position rounds up
        assert_eq!(quantize_ticks(19, 480), 0);
    }

    #[test]
    fn running_status_and_velocity_zero_off() {
        // note on 60, running-status note on 64, then both released via vel 0
        let track = [
            0x00, 0x90, 60, 90, 0x00, 64, 90, 0x83, 0x60, 60, 0, 0x00, 64, 0, 0x00, 0xff, 0x2f, 0,
        ];
        let score = parse_midi(&smf(480, &track), &QuantizationConfig::default()).unwrap();
        let pitches: Vec<u32> = score.notes().map(|n| n.pitch).collect();
        assert_eq!(pitches, vec![60, 64]);
        assert!(score.notes().all(|n| n.duration == 12));
    }

    #[test]
    fn empty_file() {
        let score = parse_midi(&smf(480, &[0x00, 0xff, 0x2f, 0]), &QuantizationConfig::default())
            .unwrap();
        assert!(score.is_empty());
    }

    #[test]
    fn program_and_percussion() {
        let track = [
            0x00, 0xc1, 41, // channel 2 -> violin (41 / 2 = 20)
            0x00, 0x91, 67, 80, 0x00, 0x99, 36, 80, // kick on channel 10
            0x83, 0x60, 0x81, 67, 0, 0x00, 0x89, 36, 0, 0x00, 0xff, 0x2f, 0,
        ];
        let score = parse_midi(&smf(480, &track), &QuantizationConfig::default()).unwrap();
        let notes: Vec<_> = score.notes().copied().collect();
        assert_eq!(notes.len(), 1);
        assert_eq!(notes[0].instrument, 20);
    }

    #[test]
    fn dangling_note_is_closed_with_warning() {
        let track = [0x00, 0x90, 60, 100, 0x83, 0x60, 0xff, 0x2f, 0];
        let parsed =
            parse_midi_with_warnings(&smf(480, &track), &QuantizationConfig::default()).unwrap();
        assert_eq!(parsed.warnings.len(), 1);
        assert_eq!(parsed.score.note_count(), 1);
        assert_eq!(parsed.score.notes().next().unwrap().duration, 12);
    }

    #[test]
    fn structural_errors_carry_offsets() {
        let err = parse_midi(b"RIFF0000", &QuantizationConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 0, .. }));

        let mut truncated = smf(480, &[0x00, 0xff, 0x2f, 0]);
        truncated.truncate(truncated.len() - 2);
        let err = parse_midi(&truncated, &QuantizationConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 18, .. }), "{err}");

        let err = parse_midi(&smf(480, &[0x00, 60, 100]), &QuantizationConfig::default())
            .unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 23, .. }), "{err}");
    }

    #[test]
    fn chord_rendering() {
        let chord = ChordEvent {
            beat: 0,
            position: 0,
            root: 0,
            quality: ChordQuality::Maj,
        };
        assert_eq!(chord_pitches(&chord), vec![48, 52, 55]);
        let score = Score::from_parts(vec![], vec![chord]).unwrap();
        let back = parse_midi(&write_midi(&score), &QuantizationConfig::default()).unwrap();
        let pitches: Vec<u32> = back.notes().map(|n| n.pitch).collect();
        assert_eq!(pitches, vec![48, 52, 55]);
    }

    #[test]
    fn empty_lead_sheet_writes_valid_file() {
        let bytes = write_midi(&Score::empty());
        let raw = read_raw(&bytes).unwrap();
        assert_eq!(raw.tracks.len(), 1);
        assert!(parse_midi(&bytes, &QuantizationConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn duration_snapping() {
        let q = QuantizationConfig::default();
        assert_eq!(q.snap_duration(0), 1);
        assert_eq!(q.snap_duration(5), 6); // tie between 4 and 6
        assert_eq!(q.snap_duration(7), 8);
        assert_eq!(q.snap_duration(1000), 192);
        assert_eq!(q.duration_index(12), 8);
    }

    #[test]
    fn truncates_past_max_beat() {
        let mut q = QuantizationConfig::default();
        q.max_beat = 1;
        let track = [0x00, 0x90, 60, 100, 0x87, 0x40, 0x80, 60, 0, 0x00, 0x90, 62, 100, 0x83,
            0x60, 0x80, 62, 0, 0x00, 0xff, 0x2f, 0];
        let score = parse_midi(&smf(480, &track), &q).unwrap();
        assert_eq!(score.note_count(), 1);
    }
}
