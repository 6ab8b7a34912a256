//! Python bindings: scores, lead sheets, reductions, metrics and the model.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use leadae::chords::{merge_chords, ChordConfig};
use leadae::metrics::{self, MetricsReport};
use leadae::neural::{checkpoint, gradcheck, DecodeOptions, ModelConfig};
use leadae::reduction::{ChordPolicy, SelectionBudget};
use leadae::score::validate_budget;
use leadae::topk::{GumbelConfig, NoiseKey};
use leadae::train::{self, Phase, SyntheticCorpusConfig, TrainConfig};

create_exception!(leadae, LeadAeError, PyException, "Raised for every library error; the message starts with its category.");

fn err(e: leadae::Error) -> PyErr {
    LeadAeError::new_err(format!("{}: {e}", e.category()))
}

fn budget(k: Option<u32>, rho: Option<f64>, chord_policy: Option<&str>) -> PyResult<SelectionBudget> {
    let base = match (k, rho) {
        (Some(_), Some(_)) => return Err(LeadAeError::new_err("config: give k or rho, not both")),
        (Some(k), None) => SelectionBudget::fixed(k),
        (None, Some(r)) => SelectionBudget::fractional(r),
        (None, None) => SelectionBudget::fixed(1),
    };
    let b = match chord_policy {
        None => base,
        Some("forced") => base.with_policy(ChordPolicy::Forced),
        Some("competing") => base.with_policy(ChordPolicy::Competing),
        Some(other) => return Err(LeadAeError::new_err(format!("config: unknown chord policy `{other}`"))),
    };
    b.validate().map_err(err)?;
    Ok(b)
}

/// A quantized multitrack score.
#[pyclass(module = "leadae", frozen, from_py_object)]
#[derive(Clone)]
pub struct Score(pub leadae::score::Score);

#[pymethods]
impl Score {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        leadae::json::score_from_json(text).map(Score).map_err(err)
    }

    #[staticmethod]
    fn from_midi(data: &[u8]) -> PyResult<Self> {
        leadae::midi::parse_midi(data, &Default::default()).map(Score).map_err(err)
    }

    fn to_json(&self) -> String {
        leadae::json::score_to_json(&self.0)
    }

    fn to_midi(&self) -> Vec<u8> {
        leadae::midi::write_midi(&self.0)
    }

    /// `(beat, position, pitch, duration, instrument)` per note.
    fn notes(&self) -> Vec<(u32, u32, u32, u32, u32)> {
        self.0.notes().map(|n| (n.beat, n.position, n.pitch, n.duration, n.instrument)).collect()
    }

    /// `(beat, position, root, quality)` per chord.
    fn chords(&self) -> Vec<(u32, u32, u32, &'static str)> {
        self.0.chords().map(|c| (c.beat, c.position, c.root, c.quality.name())).collect()
    }

    /// The score with extracted chord symbols merged in.
    fn with_extracted_chords(&self) -> PyResult<Self> {
        merge_chords(&self.0, &ChordConfig::default()).map(Score).map_err(err)
    }

    #[getter]
    fn note_count(&self) -> usize {
        self.0.note_count()
    }

    #[getter]
    fn chord_count(&self) -> usize {
        self.0.chord_count()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __eq__(&self, other: &Score) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!("Score(notes={}, chords={})", self.0.note_count(), self.0.chord_count())
    }
}

/// A selection mask over a source score.
#[pyclass(module = "leadae", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct LeadSheet(pub leadae::score::LeadSheet);

#[pymethods]
impl LeadSheet {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        leadae::json::lead_sheet_from_json(text).map(LeadSheet).map_err(err)
    }

    fn to_json(&self) -> String {
        leadae::json::lead_sheet_to_json(&self.0)
    }

    fn to_midi(&self) -> Vec<u8> {
        leadae::midi::write_lead_sheet_midi(&self.0)
    }

    #[getter]
    fn mask(&self) -> Vec<bool> {
        self.0.mask.clone()
    }

    #[getter]
    fn source(&self) -> Score {
        Score(self.0.source.clone())
    }

    /// Kept events as a standalone score on the unified instrument.
    fn materialize(&self) -> Score {
        Score(self.0.materialize())
    }

    /// `(note_density, chord_density)` in percent.
    fn densities(&self) -> (f64, f64) {
        metrics::densities(&self.0)
    }

    #[pyo3(signature = (k=None, rho=None, chord_policy=None))]
    fn satisfies(&self, k: Option<u32>, rho: Option<f64>, chord_policy: Option<&str>) -> PyResult<bool> {
        Ok(validate_budget(&self.0, &budget(k, rho, chord_policy)?))
    }

    fn __repr__(&self) -> String {
        format!(
            "LeadSheet(notes={}/{}, chords={}/{})",
            self.0.kept_note_count(),
            self.0.source.note_count(),
            self.0.kept_chord_count(),
            self.0.source.chord_count()
        )
    }
}

/// Skyline reduction; defaults to one note per onset with forced chords.
#[pyfunction]
#[pyo3(signature = (score, k=None, rho=None, chord_policy=None))]
fn skyline(score: &Score, k: Option<u32>, rho: Option<f64>, chord_policy: Option<&str>) -> PyResult<LeadSheet> {
    Ok(LeadSheet(leadae::reduction::skyline_reduce(&score.0, &budget(k, rho, chord_policy)?)))
}

/// Relaxed top-k; `seed` adds Gumbel noise.
#[pyfunction]
#[pyo3(signature = (scores, k, temperature=1.0, seed=None))]
fn soft_topk(scores: Vec<f64>, k: usize, temperature: f64, seed: Option<u64>) -> PyResult<Vec<f64>> {
    let cfg = match seed {
        Some(seed) => GumbelConfig::sampled(temperature, NoiseKey { seed, epoch: 0, sequence: 0 }),
        None => GumbelConfig::zero_noise(temperature),
    };
    leadae::topk::soft_topk(&scores, k, &cfg).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (reference, hypothesis, pitch_class=false))]
fn mute(reference: &Score, hypothesis: &Score, pitch_class: bool) -> f64 {
    metrics::mute(&reference.0, &hypothesis.0, pitch_class)
}

#[pyfunction]
#[pyo3(signature = (reference, hypothesis, pitch_class=false))]
fn jaccard(reference: &Score, hypothesis: &Score, pitch_class: bool) -> f64 {
    metrics::jaccard(&reference.0, &hypothesis.0, pitch_class)
}

/// Every metric for one pair, as a JSON object string.
#[pyfunction]
#[pyo3(signature = (reference, hypothesis, lead=None))]
fn metrics_report(reference: &Score, hypothesis: &Score, lead: Option<&LeadSheet>) -> String {
    let r = MetricsReport::for_pair(&reference.0, &hypothesis.0, lead.map(|l| &l.0));
    serde_json::to_string(&r).expect("report serializes")
}

/// `(score, melody)` pairs with a planted melody voice.
#[pyfunction]
#[pyo3(signature = (n_pieces=60, seed=0, beats=8, voices=3))]
fn synthetic_corpus(n_pieces: usize, seed: u64, beats: u32, voices: usize) -> PyResult<Vec<(Score, Score)>> {
    let cfg = SyntheticCorpusConfig { n_pieces, seed, beats_per_piece: beats, voices, ..Default::default() };
    Ok(train::make_synthetic_corpus(&cfg)
        .map_err(err)?
        .into_iter()
        .map(|p| (Score(p.score), Score(p.melody)))
        .collect())
}

/// Runs every finite-difference suite; returns `(passed, report_json)`.
#[pyfunction]
#[pyo3(signature = (seed=0))]
fn run_gradcheck(seed: u64) -> PyResult<(bool, String)> {
    let report = gradcheck::run_all(seed).map_err(err)?;
    Ok((report.passed(), serde_json::to_string(&report).expect("report serializes")))
}

/// Score2Lead and Lead2Score.
#[pyclass(module = "leadae", name = "LeadAe", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct Model(pub leadae::neural::LeadAe);

#[pymethods]
impl Model {
    #[new]
    #[pyo3(signature = (layers=2, d_model=64, heads=4, seed=0))]
    fn new(layers: usize, d_model: usize, heads: usize, seed: u64) -> PyResult<Self> {
        let cfg = ModelConfig { layers, d_model, heads, ..ModelConfig::default() };
        leadae::neural::LeadAe::new(cfg, seed).map(Model).map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        checkpoint::load(path.as_ref()).map(Model).map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        checkpoint::save(&self.0, serde_json::Value::Null, path.as_ref()).map_err(err)
    }

    /// Model configuration as a JSON object string.
    #[getter]
    fn config(&self) -> String {
        serde_json::to_string(&self.0.config).expect("config serializes")
    }

    /// Score2Lead salience per event, sentinels included.
    fn scores(&self, score: &Score) -> PyResult<Vec<f64>> {
        self.0.s2l_scores(&score.0).map_err(err)
    }

    /// Deterministic learned reduction.
    #[pyo3(signature = (score, k=None, rho=None, chord_policy=None))]
    fn reduce(&self, score: &Score, k: Option<u32>, rho: Option<f64>, chord_policy: Option<&str>) -> PyResult<LeadSheet> {
        let b = budget(k, rho, chord_policy)?;
        train::learned_lead_sheet(&self.0, &score.0, &b).map(LeadSheet).map_err(err)
    }

    /// Decodes a full score from a lead sheet.
    #[pyo3(signature = (lead, top_k=10, temperature=1.0, seed=0, max_events=None))]
    fn reconstruct(&self, lead: &LeadSheet, top_k: usize, temperature: f64, seed: u64, max_events: Option<usize>) -> PyResult<Score> {
        let mut opts = DecodeOptions { top_k, temperature, seed, ..Default::default() };
        if let Some(m) = max_events {
            opts.max_events = m;
        }
        self.0.l2s_decode(&lead.0, &opts).map(Score).map_err(err)
    }

    /// Reconstruction NLL of `target` given `lead`.
    fn nll(&self, lead: &LeadSheet, target: &Score) -> PyResult<f64> {
        self.0.l2s_nll(&lead.0, &target.0).map_err(err)
    }

    /// Trains one phase and returns the best model with the epoch log as
    /// JSON lines.
    #[pyo3(signature = (train_set, val_set, phase="warmstart", epochs=10, seed=0, k=None, rho=None, chord_policy=None, augment=true))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        &self,
        py: Python<'_>,
        train_set: Vec<Score>,
        val_set: Vec<Score>,
        phase: &str,
        epochs: usize,
        seed: u64,
        k: Option<u32>,
        rho: Option<f64>,
        chord_policy: Option<&str>,
        augment: bool,
    ) -> PyResult<(Model, Vec<String>)> {
        let phase = match phase {
            "warmstart" => Phase::Warmstart,
            "joint" => Phase::Joint,
            other => return Err(LeadAeError::new_err(format!("config: unknown phase `{other}`"))),
        };
        let mut cfg = TrainConfig { phase, max_epochs: epochs, seed, ..TrainConfig::default() };
        if k.is_some() || rho.is_some() || chord_policy.is_some() {
            cfg.budget = budget(k, rho, chord_policy)?;
        }
        if !augment {
            cfg.augment = None;
        }
        let train: Vec<_> = train_set.into_iter().map(|s| s.0).collect();
        let val: Vec<_> = val_set.into_iter().map(|s| s.0).collect();
        let model = &self.0;
        let outcome = py
            .detach(|| train::train_phase(model, &train, &val, &cfg, &mut |_| {}))
            .map_err(err)?;
        let log = outcome.log.iter().map(|e| serde_json::to_string(e).expect("log serializes")).collect();
        Ok((Model(outcome.model), log))
    }
}

#[pymodule]
#[pyo3(name = "leadae")]
fn leadae_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("LeadAeError", m.py().get_type::<LeadAeError>())?;
    m.add_class::<Score>()?;
    m.add_class::<LeadSheet>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(skyline, m)?)?;
    m.add_function(wrap_pyfunction!(soft_topk, m)?)?;
    m.add_function(wrap_pyfunction!(mute, m)?)?;
    m.add_function(wrap_pyfunction!(jaccard, m)?)?;
    m.add_function(wrap_pyfunction!(metrics_report, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(run_gradcheck, m)?)?;
    Ok(())
}
