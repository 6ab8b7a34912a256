//! JSON interchange for scores and lead sheets.
//!
//! ```json
//! {"resolution":12,"events":[
//!   {"type":"chord","beat":0,"position":0,"root":0,"quality":"maj"},
//!   {"type":"note","beat":0,"position":0,"pitch":60,"duration":12,"instrument":0}]}
//! ```
//!
//! The sentinels are implicit. Lead sheets carry their source score, the
//! full-length mask and the materialized events.

use serde_json::{json, Map, Value};

use crate::chords::ChordQuality;
use crate::error::{Error, Result};
use crate::score::{
    apply_mask, ChordEvent, Event, LeadSheet, NoteEvent, Score, POSITIONS_PER_BEAT,
};

fn event_to_value(e: &Event) -> Option<Value> {
    match e {
        Event::Note(n) => Some(json!({
            "type": "note",
            "beat": n.beat,
            "position": n.position,
            "pitch": n.pitch,
            "duration": n.duration,
            "instrument": n.instrument,
        })),
        Event::Chord(c) => Some(json!({
            "type": "chord",
            "beat": c.beat,
            "position": c.position,
            "root": c.root,
            "quality": c.quality.name(),
        })),
        Event::Sos | Event::Eos => None,
    }
}

pub fn score_to_value(score: &Score) -> Value {
    let events: Vec<Value> = score.events().iter().filter_map(event_to_value).collect();
    json!({ "resolution": POSITIONS_PER_BEAT, "events": events })
}

pub fn score_to_json(score: &Score) -> String {
    score_to_value(score).to_string()
}

pub fn score_from_json(text: &str) -> Result<Score> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Json {
        path: "$".into(),
        message: e.to_string(),
    })?;
    score_from_value(&value, "$")
}

fn json_err<T>(path: &str, message: impl Into<String>) -> Result<T> {
    Err(Error::Json {
        path: path.to_string(),
        message: message.into(),
    })
}

fn object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>> {
    v.as_object()
        .map_or_else(|| json_err(path, "expected an object"), Ok)
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value> {
    obj.get(key)
        .map_or_else(|| json_err(path, format!("missing key \"{key}\"")), Ok)
}

fn uint(obj: &Map<String, Value>, key: &str, path: &str, limit: u64) -> Result<u32> {
    let p = format!("{path}.{key}");
    let Some(v) = field(obj, key, path)?.as_u64() else {
        return json_err(&p, "expected a non-negative integer");
    };
    if v >= limit {
        return json_err(&p, format!("value {v} out of range [0, {limit})"));
    }
    Ok(v as u32)
}

pub fn score_from_value(value: &Value, path: &str) -> Result<Score> {
    use crate::score::{MAX_BEAT, MAX_DURATION, NUM_INSTRUMENTS, NUM_PITCHES};

    let obj = object(value, path)?;
    if let Some(res) = obj.get("resolution") {
        if res.as_u64() != Some(POSITIONS_PER_BEAT as u64) {
            return json_err(&format!("{path}.resolution"), "resolution must be 12");
        }
    }
    let Some(events) = field(obj, "events", path)?.as_array() else {
        return json_err(&format!("{path}.events"), "expected an array");
    };
    let mut notes = Vec::new();
    let mut chords = Vec::new();
    for (i, ev) in events.iter().enumerate() {
        let p = format!("{path}.events[{i}]");
        let o = object(ev, &p)?;
        let kind = field(o, "type", &p)?.as_str().unwrap_or_default();
        let beat = uint(o, "beat", &p, MAX_BEAT as u64)?;
        let position = uint(o, "position", &p, POSITIONS_PER_BEAT as u64)?;
        match kind {
            "note" => {
                let duration = uint(o, "duration", &p, MAX_DURATION as u64 + 1)?;
                if duration == 0 {
                    return json_err(&format!("{p}.duration"), "duration must be >= 1");
                }
                notes.push(NoteEvent {
                    beat,
                    position,
                    pitch: uint(o, "pitch", &p, NUM_PITCHES as u64)?,
                    duration,
                    instrument: uint(o, "instrument", &p, NUM_INSTRUMENTS as u64)?,
                });
            }
            "chord" => {
                let name = field(o, "quality", &p)?.as_str().unwrap_or_default();
                let Some(quality) = ChordQuality::from_name(name) else {
                    return json_err(&format!("{p}.quality"), format!("unknown quality {name:?}"));
                };
                chords.push(ChordEvent {
                    beat,
                    position,
                    root: uint(o, "root", &p, 12)?,
                    quality,
                });
            }
            other => return json_err(&format!("{p}.type"), format!("unknown type {other:?}")),
        }
    }
    Score::from_parts(notes, chords).map_err(|e| Error::Json {
        path: format!("{path}.events"),
        message: e.to_string(),
    })
}

pub fn lead_sheet_to_value(lead: &LeadSheet) -> Value {
    let materialized = score_to_value(&lead.materialize());
    json!({
        "resolution": POSITIONS_PER_BEAT,
        "unified_instrument": lead.unified_instrument,
        "mask": lead.mask,
        "source": score_to_value(&lead.source),
        "events": materialized["events"],
    })
}

pub fn lead_sheet_to_json(lead: &LeadSheet) -> String {
    lead_sheet_to_value(lead).to_string()
}

/// Reads a lead sheet document. A plain score document is accepted as a lead
/// sheet that keeps every event.
pub fn lead_sheet_from_json(text: &str) -> Result<LeadSheet> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Json {
        path: "$".into(),
        message: e.to_string(),
    })?;
    let obj = object(&value, "$")?;
    let unified = match obj.get("unified_instrument") {
        Some(_) => uint(obj, "unified_instrument", "$", crate::score::NUM_INSTRUMENTS as u64)?,
        None => crate::reduction::DEFAULT_UNIFIED_INSTRUMENT,
    };
    let Some(source) = obj.get("source") else {
        let score = score_from_value(&value, "$")?;
        let mask = vec![true; score.len()];
        return apply_mask(&score, &mask, unified);
    };
    let source = score_from_value(source, "$.source")?;
    let Some(mask) = field(obj, "mask", "$")?.as_array() else {
        return json_err("$.mask", "expected an array of booleans");
    };
    let mask: Vec<bool> = mask
        .iter()
        .enumerate()
        .map(|(i, m)| {
            m.as_bool()
                .map_or_else(|| json_err(&format!("$.mask[{i}]"), "expected a boolean"), Ok)
        })
        .collect::<Result<_>>()?;
    apply_mask(&source, &mask, unified).map_err(|e| Error::Json {
        path: "$.mask".into(),
        message: e.to_string(),
    })
}
