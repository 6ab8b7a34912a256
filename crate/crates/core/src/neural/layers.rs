//! Pre-norm transformer building blocks.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, ParamId, ParamStore, Var};
use crate::error::{Error, Result};
use crate::tokens::{Field, Token, Vocab, NUM_FIELDS};

pub const LN_EPS: f64 = 1e-5;

/// Allocates named, randomly initialized parameters.
pub struct Builder<'a> {
    pub store: &'a mut ParamStore,
    pub rng: &'a mut ChaCha8Rng,
}

impl Builder<'_> {
    fn uniform(&mut self, name: &str, rows: usize, cols: usize, bound: f64) -> ParamId {
        let value = (0..rows * cols)
            .map(|_| self.rng.random_range(-bound..bound))
            .collect();
        self.store.add(name, rows, cols, value)
    }

    fn constant(&mut self, name: &str, rows: usize, cols: usize, v: f64) -> ParamId {
        self.store.add(name, rows, cols, vec![v; rows * cols])
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new(b: &mut Builder, name: &str, fan_in: usize, fan_out: usize) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Linear {
            weight: b.uniform(&format!("{name}.weight"), fan_in, fan_out, bound),
            bias: b.constant(&format!("{name}.bias"), 1, fan_out, 0.0),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let y = g.matmul(x, w);
        g.add_row(y, b)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(b: &mut Builder, name: &str, d: usize) -> Self {
        LayerNorm {
            gamma: b.constant(&format!("{name}.gamma"), 1, d, 1.0),
            beta: b.constant(&format!("{name}.beta"), 1, d, 0.0),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        g.layer_norm(x, gamma, beta, LN_EPS)
    }
}

#[derive(Clone, Debug)]
pub struct Attention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub out: Linear,
    pub heads: usize,
}

impl Attention {
    pub fn new(b: &mut Builder, name: &str, d: usize, heads: usize) -> Self {
        Attention {
            query: Linear::new(b, &format!("{name}.query"), d, d),
            key: Linear::new(b, &format!("{name}.key"), d, d),
            value: Linear::new(b, &format!("{name}.value"), d, d),
            out: Linear::new(b, &format!("{name}.out"), d, d),
            heads,
        }
    }

    /// Multi-head attention of `queries` over `context`.
    pub fn forward(&self, g: &mut Graph, queries: Var, context: Var, causal: bool) -> Var {
        let d = g.shape(queries).1;
        let dh = d / self.heads;
        let q = self.query.forward(g, queries);
        let k = self.key.forward(g, context);
        let v = self.value.forward(g, context);
        let scale = 1.0 / (dh as f64).sqrt();
        let heads: Vec<Var> = (0..self.heads)
            .map(|h| {
                let qh = g.slice_cols(q, h * dh, dh);
                let kh = g.slice_cols(k, h * dh, dh);
                let vh = g.slice_cols(v, h * dh, dh);
                let logits = g.matmul_bt(qh, kh);
                let logits = g.scale(logits, scale);
                let weights = g.softmax(logits, causal);
                g.matmul(weights, vh)
            })
            .collect();
        let joined = if heads.len() == 1 { heads[0] } else { g.concat_cols(&heads) };
        self.out.forward(g, joined)
    }
}

#[derive(Clone, Debug)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn new(b: &mut Builder, name: &str, d: usize, hidden: usize) -> Self {
        FeedForward {
            up: Linear::new(b, &format!("{name}.up"), d, hidden),
            down: Linear::new(b, &format!("{name}.down"), hidden, d),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let h = self.up.forward(g, x);
        let h = g.relu(h);
        self.down.forward(g, h)
    }
}

#[derive(Clone, Debug)]
pub struct EncoderLayer {
    pub norm_attn: LayerNorm,
    pub attn: Attention,
    pub norm_ff: LayerNorm,
    pub ff: FeedForward,
}

impl EncoderLayer {
    pub fn new(b: &mut Builder, name: &str, d: usize, heads: usize, ff: usize) -> Self {
        EncoderLayer {
            norm_attn: LayerNorm::new(b, &format!("{name}.norm_attn"), d),
            attn: Attention::new(b, &format!("{name}.attn"), d, heads),
            norm_ff: LayerNorm::new(b, &format!("{name}.norm_ff"), d),
            ff: FeedForward::new(b, &format!("{name}.ff"), d, ff),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let h = self.norm_attn.forward(g, x);
        let a = self.attn.forward(g, h, h, false);
        let x = g.add(x, a);
        let h = self.norm_ff.forward(g, x);
        let f = self.ff.forward(g, h);
        g.add(x, f)
    }
}

#[derive(Clone, Debug)]
pub struct DecoderLayer {
    pub norm_self: LayerNorm,
    pub self_attn: Attention,
    pub norm_cross: LayerNorm,
    pub cross_attn: Attention,
    pub norm_ff: LayerNorm,
    pub ff: FeedForward,
}

impl DecoderLayer {
    pub fn new(b: &mut Builder, name: &str, d: usize, heads: usize, ff: usize) -> Self {
        DecoderLayer {
            norm_self: LayerNorm::new(b, &format!("{name}.norm_self"), d),
            self_attn: Attention::new(b, &format!("{name}.self_attn"), d, heads),
            norm_cross: LayerNorm::new(b, &format!("{name}.norm_cross"), d),
            cross_attn: Attention::new(b, &format!("{name}.cross_attn"), d, heads),
            norm_ff: LayerNorm::new(b, &format!("{name}.norm_ff"), d),
            ff: FeedForward::new(b, &format!("{name}.ff"), d, ff),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var, memory: Var) -> Var {
        let h = self.norm_self.forward(g, x);
        let a = self.self_attn.forward(g, h, h, true);
        let x = g.add(x, a);
        let h = self.norm_cross.forward(g, x);
        let c = self.cross_attn.forward(g, h, memory, false);
        let x = g.add(x, c);
        let h = self.norm_ff.forward(g, x);
        let f = self.ff.forward(g, h);
        g.add(x, f)
    }
}

/// Sum of per-field embeddings plus a learned absolute position embedding.
#[derive(Clone, Debug)]
pub struct FieldEmbedding {
    pub tables: Vec<ParamId>,
    pub positional: ParamId,
}

impl FieldEmbedding {
    pub fn new(b: &mut Builder, name: &str, vocab: &Vocab, d: usize, max_len: usize) -> Self {
        let tables = Field::ALL
            .iter()
            .map(|&f| b.uniform(&format!("{name}.{}", f.name()), vocab.size(f) + 1, d, 0.1))
            .collect();
        FieldEmbedding {
            tables,
            positional: b.uniform(&format!("{name}.positional"), max_len, d, 0.1),
        }
    }

    /// `out[t] = gate[t] * sum_f E_f[token_f[t]] + P[t]`.
    pub fn forward(&self, g: &mut Graph, tokens: &[Token], gate: Option<Var>) -> Result<Var> {
        let max_len = g.store().get(self.positional).rows;
        if tokens.len() > max_len {
            return Err(Error::Shape(format!(
                "sequence of {} events exceeds max_len {max_len}",
                tokens.len()
            )));
        }
        let mut sum: Option<Var> = None;
        for f in 0..NUM_FIELDS {
            let idx: Vec<usize> = tokens.iter().map(|t| t[f]).collect();
            let table = g.param(self.tables[f]);
            let rows = g.store().get(self.tables[f]).rows;
            if let Some(pos) = idx.iter().position(|&i| i >= rows) {
                return Err(Error::Vocab {
                    field: Field::ALL[f].name(),
                    position: pos,
                    value: idx[pos],
                });
            }
            let e = g.gather(table, &idx)?;
            sum = Some(match sum {
                Some(s) => g.add(s, e),
                None => e,
            });
        }
        let mut x = sum.expect("at least one field");
        if let Some(gate) = gate {
            x = g.scale_rows(x, gate);
        }
        let positions: Vec<usize> = (0..tokens.len()).collect();
        let table = g.param(self.positional);
        let p = g.gather(table, &positions)?;
        Ok(g.add(x, p))
    }
}
