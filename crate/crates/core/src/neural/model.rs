//! Score2Lead scorer and Lead2Score reconstructor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, ParamStore, Var};
use super::infer::IncrementalDecoder;
use super::layers::{Builder, DecoderLayer, EncoderLayer, FieldEmbedding, LayerNorm, Linear};
use crate::error::{Error, Result};
use crate::midi::DEFAULT_DURATION_VOCAB;
use crate::score::{ChordEvent, Event, LeadSheet, Score, MAX_BEAT, MAX_EVENTS};
use crate::tokens::{is_relevant, Field, Token, Vocab, TYPE_CHORD, TYPE_EOS, TYPE_NOTE};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: usize,
    pub d_model: usize,
    pub heads: usize,
    pub ff_mult: usize,
    pub max_len: usize,
    pub max_beat: u32,
    pub duration_vocab: Vec<u32>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layers: 2,
            d_model: 64,
            heads: 4,
            ff_mult: 4,
            max_len: MAX_EVENTS,
            max_beat: MAX_BEAT,
            duration_vocab: DEFAULT_DURATION_VOCAB.to_vec(),
        }
    }
}

impl ModelConfig {
    /// Full-size configuration: 4 layers, width 512, 8 heads.
    pub fn full_size() -> Self {
        ModelConfig {
            layers: 4,
            d_model: 512,
            heads: 8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.d_model == 0 || self.heads == 0 || self.ff_mult == 0 {
            return Err(Error::Config("layers, d_model, heads and ff_mult must be positive".into()));
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        if self.max_len < 2 || self.max_len > MAX_EVENTS {
            return Err(Error::Config(format!("max_len must be in [2, {MAX_EVENTS}]")));
        }
        if self.max_beat == 0 || self.max_beat > MAX_BEAT {
            return Err(Error::Config(format!("max_beat must be in [1, {MAX_BEAT}]")));
        }
        if self.duration_vocab.is_empty() || self.duration_vocab.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("duration vocabulary must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn vocab(&self) -> Vocab {
        Vocab::new(self.max_beat, self.duration_vocab.clone())
    }
}

#[derive(Clone, Debug)]
pub struct S2LModel {
    pub embedding: FieldEmbedding,
    pub layers: Vec<EncoderLayer>,
    pub norm: LayerNorm,
    pub head: Linear,
}

impl S2LModel {
    fn new(b: &mut Builder, c: &ModelConfig, vocab: &Vocab) -> Self {
        let d = c.d_model;
        S2LModel {
            embedding: FieldEmbedding::new(b, "s2l.embed", vocab, d, c.max_len),
            layers: (0..c.layers)
                .map(|i| EncoderLayer::new(b, &format!("s2l.layer{i}"), d, c.heads, d * c.ff_mult))
                .collect(),
            norm: LayerNorm::new(b, "s2l.norm", d),
            head: Linear::new(b, "s2l.head", d, 1),
        }
    }

    /// One selection score per event, as an `n x 1` column.
    pub fn scores(&self, g: &mut Graph, tokens: &[Token]) -> Result<Var> {
        let mut x = self.embedding.forward(g, tokens, None)?;
        for layer in &self.layers {
            x = layer.forward(g, x);
        }
        let x = self.norm.forward(g, x);
        Ok(self.head.forward(g, x))
    }
}

#[derive(Clone, Debug)]
pub struct L2SModel {
    pub enc_embedding: FieldEmbedding,
    pub encoder: Vec<EncoderLayer>,
    pub enc_norm: LayerNorm,
    pub dec_embedding: FieldEmbedding,
    pub decoder: Vec<DecoderLayer>,
    pub dec_norm: LayerNorm,
    pub heads: Vec<Linear>,
}

impl L2SModel {
    fn new(b: &mut Builder, c: &ModelConfig, vocab: &Vocab) -> Self {
        let d = c.d_model;
        let ff = d * c.ff_mult;
        L2SModel {
            enc_embedding: FieldEmbedding::new(b, "l2s.enc_embed", vocab, d, c.max_len),
            encoder: (0..c.layers)
                .map(|i| EncoderLayer::new(b, &format!("l2s.enc{i}"), d, c.heads, ff))
                .collect(),
            enc_norm: LayerNorm::new(b, "l2s.enc_norm", d),
            dec_embedding: FieldEmbedding::new(b, "l2s.dec_embed", vocab, d, c.max_len),
            decoder: (0..c.layers)
                .map(|i| DecoderLayer::new(b, &format!("l2s.dec{i}"), d, c.heads, ff))
                .collect(),
            dec_norm: LayerNorm::new(b, "l2s.dec_norm", d),
            heads: Field::ALL
                .iter()
                .map(|f| Linear::new(b, &format!("l2s.head.{}", f.name()), d, vocab.size(*f)))
                .collect(),
        }
    }

    /// Encodes lead-sheet tokens; `gate` scales each event's field embedding.
    pub fn encode(&self, g: &mut Graph, lead: &[Token], gate: Option<Var>) -> Result<Var> {
        let mut x = self.enc_embedding.forward(g, lead, gate)?;
        for layer in &self.encoder {
            x = layer.forward(g, x);
        }
        Ok(self.enc_norm.forward(g, x))
    }

    pub fn decode_hidden(&self, g: &mut Graph, memory: Var, inputs: &[Token]) -> Result<Var> {
        let mut x = self.dec_embedding.forward(g, inputs, None)?;
        for layer in &self.decoder {
            x = layer.forward(g, x, memory);
        }
        Ok(self.dec_norm.forward(g, x))
    }

    pub fn field_logits(&self, g: &mut Graph, hidden: Var) -> Vec<Var> {
        self.heads.iter().map(|h| h.forward(g, hidden)).collect()
    }

    /// Mean over target positions of the summed per-field cross-entropy,
    /// teacher forced. `target` includes both sentinels.
    pub fn nll(&self, g: &mut Graph, lead: &[Token], gate: Option<Var>, target: &[Token]) -> Result<Var> {
        if target.len() < 2 {
            return Err(Error::Shape("target needs at least SOS and EOS".into()));
        }
        let memory = self.encode(g, lead, gate)?;
        let inputs = &target[..target.len() - 1];
        let outputs = &target[1..];
        let hidden = self.decode_hidden(g, memory, inputs)?;
        let logits = self.field_logits(g, hidden);
        let per_pos = 1.0 / outputs.len() as f64;
        let mut total: Option<Var> = None;
        for (f, &field) in Field::ALL.iter().enumerate() {
            let mut targets = vec![0; outputs.len()];
            let mut weights = vec![0.0; outputs.len()];
            for (i, t) in outputs.iter().enumerate() {
                if is_relevant(field, t[0]) {
                    targets[i] = t[f];
                    weights[i] = per_pos;
                }
            }
            if weights.iter().all(|&w| w == 0.0) {
                continue;
            }
            let ce = g.cross_entropy(logits[f], &targets, &weights);
            total = Some(match total {
                Some(t) => g.add(t, ce),
                None => ce,
            });
        }
        Ok(total.expect("type field is always relevant"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeOptions {
    pub top_k: usize,
    pub temperature: f64,
    pub seed: u64,
    /// Upper bound on generated events, sentinels excluded.
    pub max_events: usize,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions {
            top_k: 10,
            temperature: 1.0,
            seed: 0,
            max_events: MAX_EVENTS - 2,
        }
    }
}

/// Both modules and their parameters.
#[derive(Clone, Debug)]
pub struct LeadAe {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub s2l: S2LModel,
    pub l2s: L2SModel,
}

impl LeadAe {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let vocab = config.vocab();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder {
            store: &mut store,
            rng: &mut rng,
        };
        let s2l = S2LModel::new(&mut b, &config, &vocab);
        let l2s = L2SModel::new(&mut b, &config, &vocab);
        Ok(LeadAe {
            config,
            store,
            s2l,
            l2s,
        })
    }

    pub fn vocab(&self) -> Vocab {
        self.config.vocab()
    }

    pub fn s2l_scores(&self, score: &Score) -> Result<Vec<f64>> {
        let tokens = self.vocab().encode_score(score)?;
        let mut g = Graph::new(&self.store);
        let s = self.s2l.scores(&mut g, &tokens)?;
        Ok(g.value(s).to_vec())
    }

    /// Encoder input for a lead sheet: the source events with notes on the
    /// unified instrument, gated by the mask.
    pub fn lead_inputs(&self, lead: &LeadSheet) -> Result<(Vec<Token>, Vec<f64>)> {
        let tokens = self
            .vocab()
            .encode_events(lead.source.events(), Some(lead.unified_instrument))?;
        let gate = lead.mask.iter().map(|&m| m as u8 as f64).collect();
        Ok((tokens, gate))
    }

    pub fn l2s_nll(&self, lead: &LeadSheet, target: &Score) -> Result<f64> {
        let (tokens, gate) = self.lead_inputs(lead)?;
        let target = self.vocab().encode_score(target)?;
        let mut g = Graph::new(&self.store);
        let gate = g.input(gate.len(), 1, gate);
        let loss = self.l2s.nll(&mut g, &tokens, Some(gate), &target)?;
        Ok(g.scalar(loss))
    }

    /// Autoregressive reconstruction with per-field top-k sampling. Types
    /// after SOS are restricted to note, chord or EOS and beats never
    /// decrease.
    pub fn l2s_decode(&self, lead: &LeadSheet, opts: &DecodeOptions) -> Result<Score> {
        let (tokens, gate) = self.lead_inputs(lead)?;
        let vocab = self.vocab();
        let memory = {
            let mut g = Graph::new(&self.store);
            let gate = g.input(gate.len(), 1, gate);
            let m = self.l2s.encode(&mut g, &tokens, Some(gate))?;
            g.value(m).to_vec()
        };
        let limit = opts.max_events.min(self.config.max_len - 1).min(MAX_EVENTS - 2);
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut decoder = IncrementalDecoder::new(&self.l2s, &self.store, &memory, tokens.len());
        let mut hidden = decoder.step(&vocab.encode_event(&Event::Sos, None, 0)?)?;
        let mut notes = Vec::new();
        let mut chords: Vec<ChordEvent> = Vec::new();
        let mut prev_beat = 0usize;

        for _ in 0..limit {
            let logits = decoder.logits(&hidden);
            let mut pick = |field: Field, allowed: &dyn Fn(usize) -> bool| {
                sample_field(&logits[field.index()], allowed, opts, &mut rng)
            };
            let kind = pick(Field::Type, &|t| t == TYPE_NOTE || t == TYPE_CHORD || t == TYPE_EOS);
            if kind == TYPE_EOS {
                break;
            }
            let beat = pick(Field::Beat, &|b| b >= prev_beat);
            let position = pick(Field::Position, &|_| true);
            let mut token = vocab.encode_event(&Event::Sos, None, 0)?;
            token[Field::Type.index()] = kind;
            token[Field::Beat.index()] = beat;
            token[Field::Position.index()] = position;
            if kind == TYPE_NOTE {
                for f in [Field::Pitch, Field::Duration, Field::Instrument] {
                    token[f.index()] = pick(f, &|_| true);
                }
            } else {
                for f in [Field::Root, Field::Quality] {
                    token[f.index()] = pick(f, &|_| true);
                }
            }
            match vocab.decode_token(&token) {
                Some(Event::Note(n)) => notes.push(n),
                Some(Event::Chord(c)) => {
                    if !chords.iter().any(|o| o.onset() == c.onset()) {
                        chords.push(c);
                    }
                }
                _ => unreachable!("decoded type is note or chord"),
            }
            prev_beat = beat;
            hidden = decoder.step(&token)?;
        }
        Score::from_parts(notes, chords)
    }
}

/// Samples from `logits` restricted to `allowed`, keeping only the `top_k`
/// most likely symbols. `top_k == 1` is greedy.
fn sample_field(
    logits: &[f64],
    allowed: &dyn Fn(usize) -> bool,
    opts: &DecodeOptions,
    rng: &mut ChaCha8Rng,
) -> usize {
    let mut cands: Vec<usize> = (0..logits.len()).filter(|&i| allowed(i)).collect();
    if cands.is_empty() {
        // Nothing allowed can only happen for a beat past the vocabulary;
        // stay on the last beat.
        return logits.len() - 1;
    }
    cands.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    cands.truncate(opts.top_k.max(1));
    if cands.len() == 1 {
        return cands[0];
    }
    let t = opts.temperature.max(1e-6);
    let max = logits[cands[0]];
    let weights: Vec<f64> = cands.iter().map(|&i| ((logits[i] - max) / t).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (&i, w) in cands.iter().zip(&weights) {
        if u < *w {
            return i;
        }
        u -= w;
    }
    *cands.last().unwrap()
}
