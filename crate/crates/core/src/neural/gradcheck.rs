//! Central finite-difference checks of every differentiable path.
//!
//! Each check perturbs every entry of the parameters it covers by `±h` and
//! compares `(f(x+h) - f(x-h)) / 2h` with the reverse-mode gradient. The
//! relative error of one entry is `|a - n| / max(|a|, |n|, floor)`; the
//! floor keeps entries with a vanishing gradient from dividing noise by
//! noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::graph::{Graph, ParamId, ParamStore, Var};
use super::layers::{Attention, Builder};
use super::model::{LeadAe, ModelConfig};
use super::optim::dense_grads;
use crate::error::Result;
use crate::reduction::SelectionBudget;
use crate::score::{group_by_onset, NoteEvent, Score};
use crate::topk::{grouped_select, GumbelConfig, NoiseKey, SelectMode};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
pub const FLOOR: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub entries: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub seed: u64,
    pub tolerance: f64,
    pub results: Vec<CheckResult>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Compares the gradient of `loss` against finite differences over every
/// entry of the parameters in `ids`, or all parameters when `ids` is empty.
pub fn check<F>(name: &str, store: &ParamStore, ids: &[ParamId], loss: F) -> Result<CheckResult>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    let analytic = {
        let mut g = Graph::new(store);
        let out = loss(&mut g)?;
        dense_grads(store, g.backward(out))
    };
    let eval = |s: &ParamStore| -> Result<f64> {
        let mut g = Graph::new(s);
        let out = loss(&mut g)?;
        Ok(g.scalar(out))
    };
    let ids: Vec<ParamId> = if ids.is_empty() {
        (0..store.len()).map(ParamId).collect()
    } else {
        ids.to_vec()
    };
    let mut work = store.clone();
    let mut worst: f64 = 0.0;
    let mut entries = 0;
    for id in ids {
        for i in 0..work.get(id).value.len() {
            let x = work.get(id).value[i];
            work.get_mut(id).value[i] = x + STEP;
            let up = eval(&work)?;
            work.get_mut(id).value[i] = x - STEP;
            let down = eval(&work)?;
            work.get_mut(id).value[i] = x;
            let numeric = (up - down) / (2.0 * STEP);
            worst = worst.max(rel_error(analytic[id.0][i], numeric));
            entries += 1;
        }
    }
    Ok(CheckResult {
        name: name.to_string(),
        entries,
        max_rel_error: worst,
        passed: worst <= TOLERANCE,
    })
}

fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Random values bounded away from zero, so ReLU kinks stay out of reach.
fn away_from_zero(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let v = rng.random_range(0.1..1.0);
            if rng.random::<bool>() { v } else { -v }
        })
        .collect()
}

/// `sum(x * w)` with a fixed random `w`, a generic smooth readout.
fn readout(g: &mut Graph, x: Var, w: &[f64]) -> Var {
    let (r, c) = g.shape(x);
    let w = g.input(r, c, w.to_vec());
    let p = g.mul(x, w);
    g.sum(p)
}

/// Small configuration used by the model-level checks.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        layers: 1,
        d_model: 8,
        heads: 2,
        ff_mult: 4,
        max_len: 16,
        max_beat: 4,
        ..ModelConfig::default()
    }
}

/// A six-event score: two notes and a chord on beat 0, one note on beat 1,
/// plus the sentinels.
pub fn tiny_score(rng: &mut ChaCha8Rng) -> Score {
    let mut notes = Vec::new();
    for (beat, count) in [(0u32, 2usize), (1, 1)] {
        for j in 0..count {
            notes.push(NoteEvent {
                beat,
                position: 0,
                pitch: 60 + 4 * j as u32 + rng.random_range(0..3),
                duration: 12,
                instrument: rng.random_range(0..4),
            });
        }
    }
    let chord = crate::score::ChordEvent {
        beat: 0,
        position: 0,
        root: 0,
        quality: crate::chords::ChordQuality::Maj,
    };
    Score::from_parts(notes, vec![chord]).expect("valid tiny score")
}

pub fn primitive_checks(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut store = ParamStore::new();
    let a = store.add("a", 3, 4, random(&mut rng, 12));
    let b = store.add("b", 4, 2, random(&mut rng, 8));
    let bt = store.add("bt", 2, 4, random(&mut rng, 8));
    let c = store.add("c", 3, 4, random(&mut rng, 12));
    let row = store.add("row", 1, 4, random(&mut rng, 4));
    let col = store.add("col", 3, 1, random(&mut rng, 3));
    let kinked = store.add("kinked", 3, 4, away_from_zero(&mut rng, 12));
    let gamma = store.add("gamma", 1, 4, random(&mut rng, 4));
    let beta = store.add("beta", 1, 4, random(&mut rng, 4));
    let table = store.add("table", 5, 4, random(&mut rng, 20));
    let w32 = random(&mut rng, 6);
    let w34 = random(&mut rng, 12);
    let w33 = random(&mut rng, 9);
    let w36 = random(&mut rng, 18);
    let w44 = random(&mut rng, 16);

    out.push(check("matmul", &store, &[a, b], |g| {
        let (x, y) = (g.param(a), g.param(b));
        let z = g.matmul(x, y);
        Ok(readout(g, z, &w32))
    })?);
    out.push(check("matmul_bt", &store, &[a, bt], |g| {
        let (x, y) = (g.param(a), g.param(bt));
        let z = g.matmul_bt(x, y);
        Ok(readout(g, z, &w32))
    })?);
    out.push(check("add_mul_scale", &store, &[a, c, row, col], |g| {
        let (x, y, r, s) = (g.param(a), g.param(c), g.param(row), g.param(col));
        let z = g.add(x, y);
        let z = g.mul(z, x);
        let z = g.add_row(z, r);
        let z = g.scale_rows(z, s);
        let z = g.scale(z, 0.7);
        Ok(readout(g, z, &w34))
    })?);
    out.push(check("relu", &store, &[kinked], |g| {
        let x = g.param(kinked);
        let z = g.relu(x);
        Ok(readout(g, z, &w34))
    })?);
    for causal in [false, true] {
        out.push(check(
            if causal { "softmax_causal" } else { "softmax" },
            &store,
            &[a],
            |g| {
                let x = g.param(a);
                let logits = g.matmul_bt(x, x);
                let p = g.softmax(logits, causal);
                Ok(readout(g, p, &w33))
            },
        )?);
    }
    out.push(check("layer_norm", &store, &[a, gamma, beta], |g| {
        let (x, ga, be) = (g.param(a), g.param(gamma), g.param(beta));
        let z = g.layer_norm(x, ga, be, 1e-5);
        Ok(readout(g, z, &w34))
    })?);
    out.push(check("gather", &store, &[table], |g| {
        let t = g.param(table);
        let z = g.gather(t, &[4, 0, 4])?;
        Ok(readout(g, z, &w34))
    })?);
    out.push(check("slice_concat", &store, &[a, c], |g| {
        let (x, y) = (g.param(a), g.param(c));
        let left = g.slice_cols(x, 1, 2);
        let z = g.concat_cols(&[left, y]);
        Ok(readout(g, z, &w36))
    })?);
    out.push(check("cross_entropy", &store, &[a], |g| {
        let x = g.param(a);
        Ok(g.cross_entropy(x, &[3, 0, 2], &[0.5, 0.0, 1.5]))
    })?);
    out.push(check("bce_with_logits", &store, &[col], |g| {
        let x = g.param(col);
        Ok(g.bce_with_logits(x, &[1.0, 0.0, 1.0], &[1.0, 2.0, 0.0]))
    })?);

    // Attention over 4 queries and 3 memory rows, both directions.
    let mut attn_store = ParamStore::new();
    let mut init = ChaCha8Rng::seed_from_u64(seed ^ 0xa77e);
    let attn = Attention::new(
        &mut Builder {
            store: &mut attn_store,
            rng: &mut init,
        },
        "attn",
        4,
        2,
    );
    let q = attn_store.add("q", 4, 4, random(&mut rng, 16));
    let m = attn_store.add("m", 3, 4, random(&mut rng, 12));
    out.push(check("self_attention_causal", &attn_store, &[], |g| {
        let x = g.param(q);
        let z = attn.forward(g, x, x, true);
        Ok(readout(g, z, &w44))
    })?);
    out.push(check("cross_attention", &attn_store, &[], |g| {
        let (x, mem) = (g.param(q), g.param(m));
        let z = attn.forward(g, x, mem, false);
        Ok(readout(g, z, &w44))
    })?);

    // Relaxed top-k on two onset groups, through the soft forward path.
    let mut rng_s = ChaCha8Rng::seed_from_u64(seed ^ 0x5c0e);
    let score = tiny_score(&mut rng_s);
    let groups = group_by_onset(&score)?;
    let mut topk_store = ParamStore::new();
    let n = score.len();
    let s = topk_store.add("scores", n, 1, random(&mut rng, n));
    let wn = random(&mut rng, n);
    let budget = SelectionBudget::fractional(0.5);
    let cfg = GumbelConfig::sampled(0.7, NoiseKey { seed, epoch: 0, sequence: 0 });
    out.push(check("soft_topk", &topk_store, &[s], |g| {
        let x = g.param(s);
        let mask = grouped_select(g.value(x), &groups, &budget, &cfg, SelectMode::Train)?;
        let z = g.soft_mask(x, mask);
        Ok(readout(g, z, &wn))
    })?);
    Ok(out)
}

/// Gradient of the straight-through readout equals that of the soft one.
pub fn straight_through_matches_soft(seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x57);
    let score = tiny_score(&mut rng);
    let groups = group_by_onset(&score)?;
    let n = score.len();
    let mut store = ParamStore::new();
    let s = store.add("scores", n, 1, random(&mut rng, n));
    let w = random(&mut rng, n);
    let cfg = GumbelConfig::sampled(1.0, NoiseKey { seed, epoch: 1, sequence: 2 });
    let budget = SelectionBudget::fractional(0.5);
    let grad = |soft: bool| -> Result<Vec<f64>> {
        let mut g = Graph::new(&store);
        let x = g.param(s);
        let mask = grouped_select(g.value(x), &groups, &budget, &cfg, SelectMode::Train)?;
        let z = if soft { g.soft_mask(x, mask) } else { g.topk_mask(x, mask) };
        let out = readout(&mut g, z, &w);
        Ok(dense_grads(&store, g.backward(out)).swap_remove(0))
    };
    let (hard, soft) = (grad(false)?, grad(true)?);
    let worst = hard
        .iter()
        .zip(&soft)
        .map(|(a, b)| rel_error(*a, *b))
        .fold(0.0, f64::max);
    Ok(CheckResult {
        name: "straight_through".into(),
        entries: n,
        max_rel_error: worst,
        passed: worst <= TOLERANCE,
    })
}

pub fn model_checks(seed: u64) -> Result<Vec<CheckResult>> {
    let model = LeadAe::new(tiny_config(), seed)?;
    let vocab = model.vocab();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x40de1);
    let score = tiny_score(&mut rng);
    let tokens = vocab.encode_score(&score)?;
    let n = tokens.len();
    let w = random(&mut rng, n);
    let s2l_ids: Vec<ParamId> = ids_with_prefix(&model.store, "s2l.");
    let l2s_ids: Vec<ParamId> = ids_with_prefix(&model.store, "l2s.");
    let mut out = Vec::new();

    out.push(check("s2l_scores", &model.store, &s2l_ids, |g| {
        let s = model.s2l.scores(g, &tokens)?;
        Ok(readout(g, s, &w))
    })?);

    // Four-event target with a gated lead sheet.
    let short = Score::from_parts(score.notes().take(2).copied().collect(), vec![])?;
    let target = vocab.encode_score(&short)?;
    let lead = vocab.encode_events(short.events(), Some(0))?;
    let gate: Vec<f64> = (0..lead.len()).map(|_| rng.random_range(0.2..1.0)).collect();
    out.push(check("l2s_nll", &model.store, &l2s_ids, |g| {
        let gv = g.input(gate.len(), 1, gate.clone());
        model.l2s.nll(g, &lead, Some(gv), &target)
    })?);

    // Score -> S2L -> relaxed mask -> gated L2S reconstruction loss.
    let groups = group_by_onset(&score)?;
    let lead_full = vocab.encode_events(score.events(), Some(0))?;
    let budget = SelectionBudget::fractional(0.5);
    let cfg = GumbelConfig::sampled(1.0, NoiseKey { seed, epoch: 0, sequence: 0 });
    out.push(check("end_to_end", &model.store, &[], |g| {
        let s = model.s2l.scores(g, &tokens)?;
        let mask = grouped_select(g.value(s), &groups, &budget, &cfg, SelectMode::Train)?;
        let gate = g.soft_mask(s, mask);
        model.l2s.nll(g, &lead_full, Some(gate), &tokens)
    })?);
    Ok(out)
}

pub fn ids_with_prefix(store: &ParamStore, prefix: &str) -> Vec<ParamId> {
    store
        .iter()
        .enumerate()
        .filter(|(_, p)| p.name.starts_with(prefix))
        .map(|(i, _)| ParamId(i))
        .collect()
}

/// Every suite, as reported by the `gradcheck` command.
pub fn run_all(seed: u64) -> Result<GradcheckReport> {
    let mut results = primitive_checks(seed)?;
    results.push(straight_through_matches_soft(seed)?);
    results.extend(model_checks(seed)?);
    Ok(GradcheckReport {
        seed,
        tolerance: TOLERANCE,
        results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_all(results: &[CheckResult]) {
        for r in results {
            assert!(r.passed, "{} max rel error {:e}", r.name, r.max_rel_error);
            assert!(r.entries > 0, "{} checked nothing", r.name);
        }
    }

    #[test]
    fn primitives_pass() {
        assert_all(&primitive_checks(11).unwrap());
    }

    #[test]
    fn straight_through_gradient_is_the_soft_one() {
        assert_all(&[straight_through_matches_soft(5).unwrap()]);
    }

    #[test]
    fn models_pass() {
        assert_all(&model_checks(2).unwrap());
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let mut store = ParamStore::new();
        let a = store.add("a", 1, 3, vec![0.3, -0.2, 0.9]);
        // relu at exactly zero has a one-sided gradient that central
        // differences halve.
        store.get_mut(a).value[1] = 0.0;
        let r = check("kink", &store, &[a], |g| {
            let x = g.param(a);
            let z = g.relu(x);
            Ok(g.sum(z))
        })
        .unwrap();
        assert!(!r.passed);
    }
}
