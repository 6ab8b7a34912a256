//! Differentiable per-onset top-k selection.
//!
//! Training uses the relaxed subset sampler: perturb the scores once with
//! Gumbel noise, then run `k` rounds of softmax, each round accumulating its
//! probabilities and pushing the chosen mass out of the next round with
//! `log(1 - alpha)`. The hard mask is the top-k of the relaxed vector, and
//! gradients flow straight through to the relaxed values.
//!
//! Inference selects the exact top-k scores per onset with no noise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reduction::{select_top_by, SelectionBudget};
use crate::score::OnsetGroup;

/// `log(1 - alpha)` is floored at `log(1e-20)`.
pub const LOG_FLOOR: f64 = 1e-20;

/// Identifies one independent stream of Gumbel noise. Noise for event `i` is
/// a pure function of the key and `i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NoiseKey {
    pub seed: u64,
    pub epoch: u64,
    pub sequence: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum NoiseMode {
    Sampled(NoiseKey),
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GumbelConfig {
    pub temperature: f64,
    pub noise: NoiseMode,
}

impl Default for GumbelConfig {
    fn default() -> Self {
        GumbelConfig {
            temperature: 1.0,
            noise: NoiseMode::Zero,
        }
    }
}

impl GumbelConfig {
    pub fn zero_noise(temperature: f64) -> Self {
        GumbelConfig {
            temperature,
            noise: NoiseMode::Zero,
        }
    }

    pub fn sampled(temperature: f64, key: NoiseKey) -> Self {
        GumbelConfig {
            temperature,
            noise: NoiseMode::Sampled(key),
        }
    }

    fn noise_at(&self, index: usize) -> f64 {
        match self.noise {
            NoiseMode::Zero => 0.0,
            NoiseMode::Sampled(key) => gumbel(key, index as u64),
        }
    }
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counter-based uniform draw in the open interval (0, 1).
pub fn counter_uniform(key: NoiseKey, index: u64) -> f64 {
    let mut h = splitmix64(key.seed);
    h = splitmix64(h ^ key.epoch);
    h = splitmix64(h ^ key.sequence);
    h = splitmix64(h ^ index);
    ((h >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

/// Standard Gumbel sample `-ln(-ln u)`.
pub fn gumbel(key: NoiseKey, index: u64) -> f64 {
    -(-counter_uniform(key, index).ln()).ln()
}

/// Forward record of one relaxed top-k evaluation, enough to run the
/// reverse pass.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftTopK {
    /// Accumulated softmax mass; sums to `k`. An entry can exceed 1 when a
    /// low temperature meets scores spread wider than `gap / temperature`,
    /// because a selected key then drops less than the spread and wins again.
    pub output: Vec<f64>,
    alphas: Vec<Vec<f64>>,
    temperature: f64,
}

fn softmax_scaled(keys: &[f64], temperature: f64) -> Vec<f64> {
    let max = keys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = keys.iter().map(|&v| ((v - max) / temperature).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    out
}

impl SoftTopK {
    /// Runs the relaxation on already perturbed keys.
    pub fn forward(keys: &[f64], k: usize, temperature: f64) -> Result<Self> {
        let n = keys.len();
        if n == 0 || k == 0 || k > n {
            return Err(Error::Shape(format!("soft top-k needs 1 <= k <= n, got k={k}, n={n}")));
        }
        if !(temperature > 0.0) {
            return Err(Error::Config(format!("temperature must be > 0, got {temperature}")));
        }
        if k == n {
            return Ok(SoftTopK {
                output: vec![1.0; n],
                alphas: Vec::new(),
                temperature,
            });
        }
        let mut keys = keys.to_vec();
        let mut output = vec![0.0; n];
        let mut alphas = Vec::with_capacity(k);
        for round in 0..k {
            let alpha = softmax_scaled(&keys, temperature);
            for i in 0..n {
                output[i] += alpha[i];
                if round + 1 < k {
                    keys[i] += (1.0 - alpha[i]).max(LOG_FLOOR).ln();
                }
            }
            alphas.push(alpha);
        }
        Ok(SoftTopK {
            output,
            alphas,
            temperature,
        })
    }

    /// Vector-Jacobian product: gradient with respect to the keys (and hence
    /// the scores) given the gradient with respect to `output`.
    pub fn backward(&self, grad_output: &[f64]) -> Vec<f64> {
        let n = self.output.len();
        assert_eq!(grad_output.len(), n, "gradient length mismatch");
        if self.alphas.is_empty() {
            return vec![0.0; n];
        }
        let g_out = grad_output;
        let mut g_keys = vec![0.0; n];
        let rounds = self.alphas.len();
        for (round, alpha) in self.alphas.iter().enumerate().rev() {
            let mut g_alpha = g_out.to_vec();
            if round + 1 < rounds {
                for i in 0..n {
                    let rest = 1.0 - alpha[i];
                    if rest > LOG_FLOOR {
                        g_alpha[i] -= g_keys[i] / rest;
                    }
                }
            }
            let dot: f64 = g_alpha.iter().zip(alpha).map(|(g, a)| g * a).sum();
            for i in 0..n {
                g_keys[i] += alpha[i] * (g_alpha[i] - dot) / self.temperature;
            }
        }
        g_keys
    }
}

/// Relaxed top-k of `scores` under `config`; noise for entry `i` uses index `i`.
pub fn soft_topk(scores: &[f64], k: usize, config: &GumbelConfig) -> Result<Vec<f64>> {
    soft_topk_trace(scores, k, config, 0).map(|t| t.output)
}

/// Like [`soft_topk`], drawing noise for entry `i` at index `offset + i`.
pub fn soft_topk_trace(
    scores: &[f64],
    k: usize,
    config: &GumbelConfig,
    offset: usize,
) -> Result<SoftTopK> {
    let keys: Vec<f64> = scores
        .iter()
        .enumerate()
        .map(|(i, &s)| s + config.noise_at(offset + i))
        .collect();
    SoftTopK::forward(&keys, k, config.temperature)
}

/// Indicator of the `k` largest values; ties go to the lower index.
pub fn hard_topk(values: &[f64], k: usize) -> Vec<bool> {
    let idx: Vec<usize> = (0..values.len()).collect();
    let mut hard = vec![false; values.len()];
    for i in select_top_by(&idx, k, |i| values[i]) {
        hard[i] = true;
    }
    hard
}

/// Hard mask over a sequence together with the relaxed values it was drawn
/// from. Downstream gradients with respect to the hard mask are treated as
/// gradients with respect to `soft`.
#[derive(Clone, Debug)]
pub struct RelaxedMask {
    pub soft: Vec<f64>,
    pub hard: Vec<bool>,
    pub groups: Vec<OnsetGroup>,
    traces: Vec<(Vec<usize>, SoftTopK)>,
}

impl RelaxedMask {
    pub fn hard_values(&self) -> Vec<f64> {
        self.hard.iter().map(|&h| h as u8 as f64).collect()
    }

    /// Gradient with respect to the scores, given the gradient with respect
    /// to the hard mask.
    pub fn backward(&self, grad_mask: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.hard.len()];
        for (indices, trace) in &self.traces {
            let g: Vec<f64> = indices.iter().map(|&i| grad_mask[i]).collect();
            for (&i, v) in indices.iter().zip(trace.backward(&g)) {
                grad[i] += v;
            }
        }
        grad
    }
}

/// Straight-through mask for a single group.
pub fn straight_through(soft: &[f64], k: usize) -> RelaxedMask {
    RelaxedMask {
        soft: soft.to_vec(),
        hard: hard_topk(soft, k),
        groups: Vec::new(),
        traces: Vec::new(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectMode {
    Train,
    Infer,
}

/// Applies the budget to every onset group. Events outside the groups (the
/// sentinels) are always kept, as are forced chords.
pub fn grouped_select(
    scores: &[f64],
    groups: &[OnsetGroup],
    budget: &SelectionBudget,
    config: &GumbelConfig,
    mode: SelectMode,
) -> Result<RelaxedMask> {
    let n = scores.len();
    let mut seen = vec![false; n];
    for g in groups {
        for i in g.indices() {
            if i >= n || seen[i] {
                return Err(Error::Shape(format!(
                    "group index {i} is out of range or repeated for {n} scores"
                )));
            }
            seen[i] = true;
        }
    }
    let mut soft: Vec<f64> = seen.iter().map(|&s| if s { 0.0 } else { 1.0 }).collect();
    let mut hard: Vec<bool> = seen.iter().map(|&s| !s).collect();
    let mut traces = Vec::new();

    for g in groups {
        let b = budget.budget_for_group(g.note_indices.len(), g.chord_index.is_some());
        let mut candidates: Vec<usize> = g.note_indices.clone();
        match g.chord_index {
            Some(c) if b.forced_chord => {
                soft[c] = 1.0;
                hard[c] = true;
            }
            Some(c) => candidates.insert(0, c),
            None => {}
        }
        if b.slots == 0 {
            continue;
        }
        if b.slots == candidates.len() {
            for &i in &candidates {
                soft[i] = 1.0;
                hard[i] = true;
            }
            continue;
        }
        match mode {
            SelectMode::Infer => {
                for i in select_top_by(&candidates, b.slots, |i| scores[i]) {
                    soft[i] = 1.0;
                    hard[i] = true;
                }
            }
            SelectMode::Train => {
                let local: Vec<f64> = candidates.iter().map(|&i| scores[i]).collect();
                // Noise is keyed on the candidate's own sequence index.
                let keys: Vec<f64> = candidates
                    .iter()
                    .zip(&local)
                    .map(|(&i, &s)| s + config.noise_at(i))
                    .collect();
                let trace = SoftTopK::forward(&keys, b.slots, config.temperature)?;
                for (&i, (&s, h)) in candidates
                    .iter()
                    .zip(trace.output.iter().zip(hard_topk(&trace.output, b.slots)))
                {
                    soft[i] = s;
                    hard[i] = h;
                }
                traces.push((candidates, trace));
            }
        }
    }
    Ok(RelaxedMask {
        soft,
        hard,
        groups: groups.to_vec(),
        traces,
    })
}
