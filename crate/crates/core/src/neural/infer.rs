//! Tape-free incremental decoding with cached keys and values.
//!
//! Produces the same hidden rows as [`L2SModel::decode_hidden`], one
//! position at a time, in time linear in the prefix length per step.

use super::graph::ParamStore;
use super::layers::{Attention, FeedForward, LayerNorm, Linear, LN_EPS};
use super::model::L2SModel;
use crate::error::{Error, Result};
use crate::tokens::{Field, Token, NUM_FIELDS};

fn linear(store: &ParamStore, l: &Linear, x: &[f64]) -> Vec<f64> {
    let w = store.get(l.weight);
    let mut out = store.get(l.bias).value.clone();
    for (i, &xi) in x.iter().enumerate() {
        let row = &w.value[i * w.cols..(i + 1) * w.cols];
        for (o, &wij) in out.iter_mut().zip(row) {
            *o += xi * wij;
        }
    }
    out
}

fn layer_norm(store: &ParamStore, ln: &LayerNorm, x: &[f64]) -> Vec<f64> {
    let (g, b) = (&store.get(ln.gamma).value, &store.get(ln.beta).value);
    let c = x.len() as f64;
    let mean = x.iter().sum::<f64>() / c;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c;
    let inv = 1.0 / (var + LN_EPS).sqrt();
    x.iter()
        .enumerate()
        .map(|(j, v)| g[j] * ((v - mean) * inv) + b[j])
        .collect()
}

fn feed_forward(store: &ParamStore, ff: &FeedForward, x: &[f64]) -> Vec<f64> {
    let mut h = linear(store, &ff.up, x);
    h.iter_mut().for_each(|v| *v = v.max(0.0));
    linear(store, &ff.down, &h)
}

fn add_assign(x: &mut [f64], y: &[f64]) {
    x.iter_mut().zip(y).for_each(|(a, b)| *a += b);
}

/// Keys and values of every row seen so far, row-major.
#[derive(Clone, Debug, Default)]
struct KvCache {
    keys: Vec<f64>,
    values: Vec<f64>,
    rows: usize,
}

impl KvCache {
    fn push(&mut self, store: &ParamStore, attn: &Attention, x: &[f64]) {
        self.keys.extend(linear(store, &attn.key, x));
        self.values.extend(linear(store, &attn.value, x));
        self.rows += 1;
    }

    fn attend(&self, store: &ParamStore, attn: &Attention, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        let dh = d / attn.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let q = linear(store, &attn.query, x);
        let mut joined = vec![0.0; d];
        let mut weights = vec![0.0; self.rows];
        for h in 0..attn.heads {
            let qh = &q[h * dh..(h + 1) * dh];
            for (r, w) in weights.iter_mut().enumerate() {
                let k = &self.keys[r * d + h * dh..r * d + (h + 1) * dh];
                *w = qh.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() * scale;
            }
            let max = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for w in &mut weights {
                *w = (*w - max).exp();
                sum += *w;
            }
            let out = &mut joined[h * dh..(h + 1) * dh];
            for (r, w) in weights.iter().enumerate() {
                let v = &self.values[r * d + h * dh..r * d + (h + 1) * dh];
                for (o, &vj) in out.iter_mut().zip(v) {
                    *o += w / sum * vj;
                }
            }
        }
        linear(store, &attn.out, &joined)
    }
}

pub struct IncrementalDecoder<'m> {
    model: &'m L2SModel,
    store: &'m ParamStore,
    self_kv: Vec<KvCache>,
    cross_kv: Vec<KvCache>,
    position: usize,
}

impl<'m> IncrementalDecoder<'m> {
    /// `memory` is the encoder output, `rows x d` row-major.
    pub fn new(model: &'m L2SModel, store: &'m ParamStore, memory: &[f64], rows: usize) -> Self {
        let d = memory.len() / rows.max(1);
        let cross_kv = model
            .decoder
            .iter()
            .map(|layer| {
                let mut kv = KvCache::default();
                for r in 0..rows {
                    kv.push(store, &layer.cross_attn, &memory[r * d..(r + 1) * d]);
                }
                kv
            })
            .collect();
        IncrementalDecoder {
            model,
            store,
            self_kv: vec![KvCache::default(); model.decoder.len()],
            cross_kv,
            position: 0,
        }
    }

    /// Feeds the next input token and returns its final hidden row.
    pub fn step(&mut self, token: &Token) -> Result<Vec<f64>> {
        let store = self.store;
        let emb = &self.model.dec_embedding;
        let pos = store.get(emb.positional);
        if self.position >= pos.rows {
            return Err(Error::Shape(format!("decode exceeds max_len {}", pos.rows)));
        }
        let d = pos.cols;
        let mut x = pos.value[self.position * d..(self.position + 1) * d].to_vec();
        for f in 0..NUM_FIELDS {
            let table = store.get(emb.tables[f]);
            if token[f] >= table.rows {
                return Err(Error::Vocab {
                    field: Field::ALL[f].name(),
                    position: self.position,
                    value: token[f],
                });
            }
            add_assign(&mut x, &table.value[token[f] * d..(token[f] + 1) * d]);
        }
        for (l, layer) in self.model.decoder.iter().enumerate() {
            let h = layer_norm(store, &layer.norm_self, &x);
            self.self_kv[l].push(store, &layer.self_attn, &h);
            add_assign(&mut x, &self.self_kv[l].attend(store, &layer.self_attn, &h));
            let h = layer_norm(store, &layer.norm_cross, &x);
            add_assign(&mut x, &self.cross_kv[l].attend(store, &layer.cross_attn, &h));
            let h = layer_norm(store, &layer.norm_ff, &x);
            add_assign(&mut x, &feed_forward(store, &layer.ff, &h));
        }
        self.position += 1;
        Ok(layer_norm(store, &self.model.dec_norm, &x))
    }

    /// Per-field logits for a hidden row.
    pub fn logits(&self, hidden: &[f64]) -> Vec<Vec<f64>> {
        self.model
            .heads
            .iter()
            .map(|h| linear(self.store, h, hidden))
            .collect()
    }
}
