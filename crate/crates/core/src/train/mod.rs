//! Skyline warm start, joint end-to-end training and early stopping.

pub mod augment;
pub mod corpus;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use augment::{augment, AugmentConfig};
pub use corpus::{make_synthetic_corpus, SyntheticCorpusConfig, SyntheticPiece};

use crate::error::{Error, Result};
use crate::metrics::densities;
use crate::neural::optim::{accumulate, dense_grads, zero_grads};
use crate::neural::{Adam, AdamConfig, Graph, LeadAe, Var};
use crate::reduction::{skyline_mask, SelectionBudget, DEFAULT_UNIFIED_INSTRUMENT};
use crate::score::{apply_mask, group_by_onset, validate_budget, LeadSheet, Score};
use crate::topk::{grouped_select, splitmix64, GumbelConfig, NoiseKey, SelectMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Warmstart,
    Joint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Train, validation and test fractions.
    pub split: [f64; 3],
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub augment: Option<AugmentConfig>,
    pub budget: SelectionBudget,
    pub phase: Phase,
    pub seed: u64,
    /// Relaxed top-k temperature during joint training.
    pub temperature: f64,
    pub adam: AdamConfig,
    /// Worker threads for per-piece gradients. Results do not depend on it.
    pub jobs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            split: [0.8, 0.1, 0.1],
            batch_size: 8,
            max_epochs: 1000,
            patience: 20,
            augment: Some(AugmentConfig::default()),
            budget: SelectionBudget::fractional(0.1),
            phase: Phase::Warmstart,
            seed: 0,
            temperature: 1.0,
            adam: AdamConfig::default(),
            jobs: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.split.iter().any(|&r| !(0.0..=1.0).contains(&r))
            || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return bad(format!("split ratios {:?} must be in [0, 1] and sum to 1", self.split));
        }
        if self.patience == 0 || self.batch_size == 0 || self.jobs == 0 {
            return bad("patience, batch_size and jobs must be at least 1".into());
        }
        if !(self.temperature > 0.0) {
            return bad(format!("temperature must be positive, got {}", self.temperature));
        }
        self.budget.validate()
    }
}

/// Piece indices of each split.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle, then validation and test take their rounded shares.
pub fn split_indices(n: usize, ratios: [f64; 3], seed: u64) -> Split {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((ratios[1] * n as f64).round() as usize).min(n);
    let n_test = ((ratios[2] * n as f64).round() as usize).min(n - n_val);
    let test = idx.split_off(n - n_test);
    let val = idx.split_off(n - n_test - n_val);
    Split {
        train: idx,
        val,
        test,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_nll: f64,
    pub val_nll: f64,
    pub note_density: f64,
    pub chord_density: f64,
    pub elapsed_s: f64,
    /// Score2Lead imitation loss on the validation split, warm start only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_bce: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch, or the input model when no
    /// epoch ran.
    pub model: LeadAe,
    pub log: Vec<EpochLog>,
    pub best_epoch: Option<usize>,
    pub best_val_nll: f64,
}

fn derive_seed(seed: u64, epoch: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(epoch)) ^ index)
}

/// The lead sheet chosen by Score2Lead with deterministic top-k selection.
pub fn learned_lead_sheet(model: &LeadAe, score: &Score, budget: &SelectionBudget) -> Result<LeadSheet> {
    let scores = model.s2l_scores(score)?;
    let groups = group_by_onset(score)?;
    let mask = grouped_select(&scores, &groups, budget, &GumbelConfig::default(), SelectMode::Infer)?;
    let lead = apply_mask(score, &mask.hard, DEFAULT_UNIFIED_INSTRUMENT)?;
    check_budget(&lead, budget)?;
    Ok(lead)
}

pub fn skyline_lead_sheet(score: &Score, budget: &SelectionBudget) -> Result<LeadSheet> {
    apply_mask(score, &skyline_mask(score, budget), DEFAULT_UNIFIED_INSTRUMENT)
}

fn check_budget(lead: &LeadSheet, budget: &SelectionBudget) -> Result<()> {
    if validate_budget(lead, budget) {
        Ok(())
    } else {
        Err(Error::Budget(format!("lead sheet violates {budget}")))
    }
}

/// Fraction of onset groups where the learned selection equals skyline's.
pub fn skyline_agreement(model: &LeadAe, scores: &[Score], budget: &SelectionBudget) -> Result<f64> {
    let (mut same, mut total) = (0usize, 0usize);
    for s in scores {
        let learned = learned_lead_sheet(model, s, budget)?.mask;
        let sky = skyline_mask(s, budget);
        for g in group_by_onset(s)? {
            total += 1;
            same += g.indices().all(|i| learned[i] == sky[i]) as usize;
        }
    }
    Ok(if total == 0 { 1.0 } else { same as f64 / total as f64 })
}

/// Score2Lead imitation of the skyline mask: binary cross-entropy over the
/// events that are actually chosen between, averaged over them.
fn s2l_bce(model: &LeadAe, g: &mut Graph, score: &Score, budget: &SelectionBudget) -> Result<Option<Var>> {
    let target = skyline_mask(score, budget);
    let mut labels = vec![0.0; score.len()];
    let mut weights = vec![0.0; score.len()];
    let mut count = 0usize;
    for grp in group_by_onset(score)? {
        let b = budget.budget_for_group(grp.note_indices.len(), grp.chord_index.is_some());
        let candidates: Vec<usize> = if b.forced_chord {
            grp.note_indices.clone()
        } else {
            grp.indices().collect()
        };
        if b.slots == 0 || b.slots >= candidates.len() {
            continue;
        }
        for i in candidates {
            labels[i] = target[i] as u8 as f64;
            weights[i] = 1.0;
            count += 1;
        }
    }
    if count == 0 {
        return Ok(None);
    }
    weights.iter_mut().for_each(|w| *w /= count as f64);
    let tokens = model.vocab().encode_score(score)?;
    let s = model.s2l.scores(g, &tokens)?;
    Ok(Some(g.bce_with_logits(s, &labels, &weights)))
}

/// Reconstruction NLL of `score` given a fixed lead sheet.
fn gated_nll(model: &LeadAe, g: &mut Graph, lead: &LeadSheet, score: &Score) -> Result<Var> {
    let (tokens, gate) = model.lead_inputs(lead)?;
    let target = model.vocab().encode_score(score)?;
    let gate = g.input(gate.len(), 1, gate);
    model.l2s.nll(g, &tokens, Some(gate), &target)
}

struct Sample {
    nll: f64,
    grads: Vec<Vec<f64>>,
}

fn warmstart_sample(model: &LeadAe, score: &Score, budget: &SelectionBudget) -> Result<Sample> {
    let lead = skyline_lead_sheet(score, budget)?;
    check_budget(&lead, budget)?;
    let mut g = Graph::new(&model.store);
    let nll = gated_nll(model, &mut g, &lead, score)?;
    let nll_value = g.scalar(nll);
    let loss = match s2l_bce(model, &mut g, score, budget)? {
        Some(bce) => g.add(nll, bce),
        None => nll,
    };
    if !g.scalar(loss).is_finite() {
        return Err(Error::Divergence("non-finite warm-start loss".into()));
    }
    Ok(Sample {
        nll: nll_value,
        grads: dense_grads(&model.store, g.backward(loss)),
    })
}

fn joint_sample(model: &LeadAe, score: &Score, budget: &SelectionBudget, gumbel: &GumbelConfig) -> Result<Sample> {
    let vocab = model.vocab();
    let tokens = vocab.encode_score(score)?;
    let lead_tokens = vocab.encode_events(score.events(), Some(DEFAULT_UNIFIED_INSTRUMENT))?;
    let groups = group_by_onset(score)?;
    let mut g = Graph::new(&model.store);
    let s = model.s2l.scores(&mut g, &tokens)?;
    let mask = grouped_select(g.value(s), &groups, budget, gumbel, SelectMode::Train)?;
    check_budget(&apply_mask(score, &mask.hard, DEFAULT_UNIFIED_INSTRUMENT)?, budget)?;
    let gate = g.topk_mask(s, mask);
    let loss = model.l2s.nll(&mut g, &lead_tokens, Some(gate), &tokens)?;
    let nll = g.scalar(loss);
    if !nll.is_finite() {
        return Err(Error::Divergence("non-finite joint loss".into()));
    }
    Ok(Sample {
        nll,
        grads: dense_grads(&model.store, g.backward(loss)),
    })
}

/// Mean reconstruction NLL given Score2Lead's deterministic lead sheets.
pub fn validation_nll(model: &LeadAe, scores: &[Score], budget: &SelectionBudget) -> Result<f64> {
    let mut total = 0.0;
    for s in scores {
        let lead = learned_lead_sheet(model, s, budget)?;
        total += model.l2s_nll(&lead, s)?;
    }
    Ok(total / scores.len().max(1) as f64)
}

/// Mean reconstruction NLL given skyline lead sheets.
pub fn skyline_validation_nll(model: &LeadAe, scores: &[Score], budget: &SelectionBudget) -> Result<f64> {
    let mut total = 0.0;
    for s in scores {
        total += model.l2s_nll(&skyline_lead_sheet(s, budget)?, s)?;
    }
    Ok(total / scores.len().max(1) as f64)
}

fn validation_bce(model: &LeadAe, scores: &[Score], budget: &SelectionBudget) -> Result<f64> {
    let mut total = 0.0;
    for s in scores {
        let mut g = Graph::new(&model.store);
        if let Some(b) = s2l_bce(model, &mut g, s, budget)? {
            total += g.scalar(b);
        }
    }
    Ok(total / scores.len().max(1) as f64)
}

fn mean_densities(model: &LeadAe, scores: &[Score], budget: &SelectionBudget) -> Result<(f64, f64)> {
    let mut acc = (0.0, 0.0);
    for s in scores {
        let (n, c) = densities(&learned_lead_sheet(model, s, budget)?);
        acc = (acc.0 + n, acc.1 + c);
    }
    let k = scores.len().max(1) as f64;
    Ok((acc.0 / k, acc.1 / k))
}

pub fn pretrain_warmstart(model: &LeadAe, train: &[Score], val: &[Score], config: &TrainConfig) -> Result<TrainOutcome> {
    let cfg = TrainConfig { phase: Phase::Warmstart, ..config.clone() };
    train_phase(model, train, val, &cfg, &mut |_| {})
}

pub fn train_joint(model: &LeadAe, train: &[Score], val: &[Score], config: &TrainConfig) -> Result<TrainOutcome> {
    let cfg = TrainConfig { phase: Phase::Joint, ..config.clone() };
    train_phase(model, train, val, &cfg, &mut |_| {})
}

/// Runs `config.phase` with early stopping on validation NLL, calling
/// `on_epoch` after every epoch. Without validation pieces the training
/// NLL is monitored instead.
pub fn train_phase(
    model: &LeadAe,
    train: &[Score],
    val: &[Score],
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Validation("training split is empty".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let start = Instant::now();
    let mut current = model.clone();
    let mut adam = Adam::new(config.adam, &current.store);
    let mut best = TrainOutcome {
        model: model.clone(),
        log: Vec::new(),
        best_epoch: None,
        best_val_nll: f64::INFINITY,
    };
    let budget = &config.budget;

    for epoch in 1..=config.max_epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(config.seed, epoch as u64, u64::MAX)));
        let mut nll_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let samples: Vec<Result<Sample>> = pool.install(|| {
                batch
                    .par_iter()
                    .map(|&i| {
                        let piece = match &config.augment {
                            Some(a) => augment(&train[i], a, derive_seed(config.seed, epoch as u64, i as u64)),
                            None => train[i].clone(),
                        };
                        match config.phase {
                            Phase::Warmstart => warmstart_sample(&current, &piece, budget),
                            Phase::Joint => {
                                let key = NoiseKey {
                                    seed: config.seed,
                                    epoch: epoch as u64,
                                    sequence: i as u64,
                                };
                                joint_sample(&current, &piece, budget, &GumbelConfig::sampled(config.temperature, key))
                            }
                        }
                    })
                    .collect()
            });
            // Summed in batch order, so the result does not depend on
            // thread scheduling.
            let mut grads = zero_grads(&current.store);
            let scale = 1.0 / batch.len() as f64;
            for (s, &i) in samples.into_iter().zip(batch) {
                let s = s.map_err(|e| match e {
                    Error::Divergence(m) => Error::Divergence(format!("epoch {epoch}, piece {i}: {m}")),
                    e => e,
                })?;
                nll_sum += s.nll;
                accumulate(&mut grads, &s.grads, scale);
            }
            adam.update(&mut current.store, &grads);
            if !current.store.all_finite() {
                return Err(Error::Divergence(format!("epoch {epoch}: parameters became non-finite")));
            }
        }
        let train_nll = nll_sum / train.len() as f64;
        let monitored = if val.is_empty() { train } else { val };
        let val_nll = if val.is_empty() {
            train_nll
        } else {
            validation_nll(&current, val, budget)?
        };
        if !val_nll.is_finite() {
            return Err(Error::Divergence(format!("epoch {epoch}: validation NLL is {val_nll}")));
        }
        let (note_density, chord_density) = mean_densities(&current, monitored, budget)?;
        let val_bce = match config.phase {
            Phase::Warmstart => Some(validation_bce(&current, monitored, budget)?),
            Phase::Joint => None,
        };
        let entry = EpochLog {
            epoch,
            train_nll,
            val_nll,
            note_density,
            chord_density,
            elapsed_s: start.elapsed().as_secs_f64(),
            val_bce,
        };
        on_epoch(&entry);
        best.log.push(entry);
        if val_nll < best.best_val_nll {
            best.best_val_nll = val_nll;
            best.best_epoch = Some(epoch);
            best.model = current.clone();
        }
        if epoch - best.best_epoch.unwrap_or(0) >= config.patience {
            break;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::ModelConfig;

    fn tiny_model(seed: u64) -> LeadAe {
        let cfg = ModelConfig {
            layers: 1,
            d_model: 16,
            heads: 2,
            max_len: 64,
            max_beat: 8,
            ..Default::default()
        };
        LeadAe::new(cfg, seed).unwrap()
    }

    fn tiny_corpus(n: usize, seed: u64) -> Vec<Score> {
        let cfg = SyntheticCorpusConfig {
            n_pieces: n,
            beats_per_piece: 2,
            voices: 1,
            seed,
            ..Default::default()
        };
        make_synthetic_corpus(&cfg).unwrap().into_iter().map(|p| p.score).collect()
    }

    fn quick(phase: Phase, epochs: usize) -> TrainConfig {
        TrainConfig {
            batch_size: 2,
            max_epochs: epochs,
            patience: 3,
            augment: None,
            budget: SelectionBudget::fractional(0.4),
            phase,
            adam: AdamConfig { lr: 3e-3, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn split_shares() {
        let s = split_indices(60, [50.0 / 60.0, 5.0 / 60.0, 5.0 / 60.0], 1);
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (50, 5, 5));
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort();
        assert_eq!(all, (0..60).collect::<Vec<_>>());
        let d = split_indices(10, [0.8, 0.1, 0.1], 0);
        assert_eq!((d.train.len(), d.val.len(), d.test.len()), (8, 1, 1));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig { split: [0.8, 0.1, 0.2], ..Default::default() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = TrainConfig { patience: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_epochs_returns_the_input() {
        let m = tiny_model(0);
        let out = pretrain_warmstart(&m, &tiny_corpus(2, 0), &[], &quick(Phase::Warmstart, 0)).unwrap();
        assert_eq!(out.model.store, m.store);
        assert!(out.log.is_empty() && out.best_epoch.is_none());
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let r = pretrain_warmstart(&tiny_model(0), &[], &[], &quick(Phase::Warmstart, 1));
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn overfits_a_single_piece() {
        let corpus = tiny_corpus(1, 4);
        let cfg = TrainConfig { batch_size: 1, patience: 500, ..quick(Phase::Warmstart, 500) };
        let mut last = f64::INFINITY;
        let out = train_phase(&tiny_model(1), &corpus, &[], &cfg, &mut |e| last = e.train_nll).unwrap();
        assert!(last < 0.1 || out.best_val_nll < 0.1, "final train NLL {last}");
    }

    #[test]
    fn early_stopping_respects_patience_and_limits() {
        let corpus = tiny_corpus(4, 2);
        let cfg = TrainConfig { patience: 1, ..quick(Phase::Warmstart, 6) };
        let out = pretrain_warmstart(&tiny_model(2), &corpus[..3], &corpus[3..], &cfg).unwrap();
        assert!(out.log.len() <= 6);
        let best = out.best_epoch.unwrap();
        assert!(out.log.len() <= best + cfg.patience);
        let min = out.log.iter().map(|e| e.val_nll).fold(f64::INFINITY, f64::min);
        assert_eq!(min, out.best_val_nll);
    }

    #[test]
    fn joint_training_is_reproducible_and_thread_independent() {
        let corpus = tiny_corpus(4, 5);
        let cfg = quick(Phase::Joint, 2);
        let run = |jobs| {
            let cfg = TrainConfig { jobs, ..cfg.clone() };
            train_joint(&tiny_model(3), &corpus[..3], &corpus[3..], &cfg).unwrap()
        };
        let (a, b, c) = (run(1), run(1), run(3));
        assert_eq!(a.model.store, b.model.store);
        assert_eq!(a.model.store, c.model.store);
        assert_ne!(a.model.store, tiny_model(3).store);
        for e in &a.log {
            assert!(e.val_bce.is_none());
            assert!((0.0..=100.0).contains(&e.note_density));
        }
    }

    #[test]
    fn epoch_log_serializes_as_one_line() {
        let e = EpochLog {
            epoch: 1,
            train_nll: 2.0,
            val_nll: 2.5,
            note_density: 40.0,
            chord_density: 90.0,
            elapsed_s: 0.5,
            val_bce: None,
        };
        let line = serde_json::to_string(&e).unwrap();
        assert!(!line.contains('\n'));
        assert!(line.starts_with("{\"epoch\":1,\"train_nll\":2.0"));
    }
}
