//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use leadae::chords::{merge_chords, ChordConfig};
use leadae::json::{lead_sheet_from_json, lead_sheet_to_json, score_from_json, score_to_json};
use leadae::metrics::MetricsReport;
use leadae::midi::{parse_midi_with_warnings, write_lead_sheet_midi, write_midi, QuantizationConfig};
use leadae::neural::{checkpoint, gradcheck, DecodeOptions, LeadAe, ModelConfig};
use leadae::reduction::SelectionBudget;
use leadae::score::{LeadSheet, Score};
use leadae::train::{
    make_synthetic_corpus, skyline_lead_sheet, split_indices, train_phase, learned_lead_sheet, Phase,
    SyntheticCorpusConfig, TrainConfig,
};

use crate::config;
use crate::manifest::{beside, in_dir, Recorder};
use crate::{
    EvalArgs, GradcheckArgs, IngestArgs, ReconstructArgs, ReduceArgs, SkylineArgs, SynthArgs, TrainArgs,
};

pub const EXIT_USAGE: u8 = 2;

#[derive(Debug)]
pub struct CliError {
    pub category: &'static str,
    pub message: String,
    pub code: u8,
}

impl CliError {
    pub fn new(category: &'static str, message: impl Into<String>) -> Self {
        let code = match category {
            "usage" => EXIT_USAGE,
            "io" => 3,
            "parse" => 4,
            "json" => 5,
            "validation" | "vocab" | "shape" => 6,
            "budget" => 7,
            "config" => 8,
            "checkpoint" => 9,
            "divergence" => 10,
            "gradcheck" => 11,
            _ => 1,
        };
        CliError { category, message: message.into(), code }
    }

    pub fn json(path: &Path, e: impl fmt::Display) -> Self {
        Self::new("json", format!("{}: {e}", path.display()))
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Self::new("io", format!("{}: {e}", path.display()))
    }

    /// Library error annotated with the file it concerns.
    fn at(path: &Path, e: leadae::Error) -> Self {
        Self::new(e.category(), format!("{}: {e}", path.display()))
    }
}

impl From<leadae::Error> for CliError {
    fn from(e: leadae::Error) -> Self {
        Self::new(e.category(), e.to_string())
    }
}

type CmdResult = Result<(), CliError>;

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> CmdResult {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    write_bytes(path, format!("{text}\n").as_bytes())
}

fn read_score(path: &Path) -> Result<Score, CliError> {
    score_from_json(&read_text(path)?).map_err(|e| CliError::at(path, e))
}

fn read_lead(path: &Path) -> Result<LeadSheet, CliError> {
    lead_sheet_from_json(&read_text(path)?).map_err(|e| CliError::at(path, e))
}

/// File name without `.json` and a trailing `.lead`.
fn stem(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let name = name.strip_suffix(".json").unwrap_or(&name);
    name.strip_suffix(".lead").unwrap_or(name).to_string()
}

fn is_manifest(path: &Path) -> bool {
    path.file_name()
        .map(|n| {
            let n = n.to_string_lossy();
            n == "manifest.json" || n.ends_with(".manifest.json")
        })
        .unwrap_or(false)
}

/// JSON documents directly inside `dir`, sorted, manifests excluded.
fn list_json(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "json") && !is_manifest(&path) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Refuses to write over an input.
fn ensure_distinct(out: &Path, inputs: &[&Path]) -> CmdResult {
    let canon = |p: &Path| fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
    let o = canon(out);
    match inputs.iter().find(|i| canon(i) == o) {
        Some(i) => Err(CliError::new("validation", format!("output {} would overwrite an input", i.display()))),
        None => Ok(()),
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    if jobs == 0 {
        return Err(CliError::new("config", "--jobs must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::new("config", format!("thread pool: {e}")))
}

fn write_lead(path: &Path, lead: &LeadSheet, rec: &mut Recorder) -> CmdResult {
    write_text(path, &lead_sheet_to_json(lead))?;
    let midi = path.with_extension("mid");
    write_bytes(&midi, &write_lead_sheet_midi(lead))?;
    rec.output(path).output(&midi);
    Ok(())
}

fn write_score(path: &Path, score: &Score, rec: &mut Recorder) -> CmdResult {
    write_text(path, &score_to_json(score))?;
    let midi = path.with_extension("mid");
    write_bytes(&midi, &write_midi(score))?;
    rec.output(path).output(&midi);
    Ok(())
}

pub fn ingest(args: IngestArgs) -> CmdResult {
    let file = config::read_file(args.config.as_deref())?;
    let quant: QuantizationConfig = config::layer(&QuantizationConfig::default(), &file, "quantization")?;
    let chords: ChordConfig = config::layer(&ChordConfig::default(), &file, "chords")?;
    quant.validate()?;
    let mut names = BTreeMap::new();
    for p in &args.inputs {
        let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        if let Some(prev) = names.insert(name.clone(), p) {
            return Err(CliError::new(
                "validation",
                format!("{} and {} both map to {name}.json", prev.display(), p.display()),
            ));
        }
    }
    let parsed: Vec<Result<_, CliError>> = pool(args.jobs)?.install(|| {
        args.inputs
            .par_iter()
            .map(|p| {
                let bytes = fs::read(p).map_err(|e| CliError::io(p, e))?;
                let parsed = parse_midi_with_warnings(&bytes, &quant).map_err(|e| CliError::at(p, e))?;
                let score = if args.chords {
                    merge_chords(&parsed.score, &chords).map_err(|e| CliError::at(p, e))?
                } else {
                    parsed.score
                };
                Ok((score, parsed.warnings))
            })
            .collect()
    });
    let mut rec = Recorder::start("ingest");
    rec.config(json!({"quantization": quant, "chords": args.chords.then_some(chords)}));
    for (input, result) in args.inputs.iter().zip(parsed) {
        let (score, warnings) = result?;
        for w in warnings {
            eprintln!("warning: {}: {w}", input.display());
        }
        let stem = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let out = args.out.join(format!("{stem}.json"));
        write_text(&out, &score_to_json(&score))?;
        rec.input(input).output(&out);
    }
    rec.finish(&in_dir(&args.out))?;
    Ok(())
}

pub fn skyline(args: SkylineArgs) -> CmdResult {
    ensure_distinct(&args.out, &[&args.input])?;
    let budget = args.budget.resolve(SelectionBudget::fixed(1));
    budget.validate()?;
    let score = read_score(&args.input)?;
    let lead = skyline_lead_sheet(&score, &budget)?;
    let mut rec = Recorder::start("skyline");
    rec.config(json!({"budget": budget})).input(&args.input);
    write_lead(&args.out, &lead, &mut rec)?;
    rec.finish(&beside(&args.out))?;
    Ok(())
}

fn load_corpus(dir: &Path) -> Result<(Vec<PathBuf>, Vec<Score>), CliError> {
    let paths = list_json(dir)?;
    if paths.is_empty() {
        return Err(CliError::new("validation", format!("{}: no score documents", dir.display())));
    }
    let scores = paths.iter().map(|p| read_score(p)).collect::<Result<Vec<_>, _>>()?;
    Ok((paths, scores))
}

fn without_elapsed(log: &leadae::train::EpochLog) -> String {
    let mut v = serde_json::to_value(log).expect("log serializes");
    if let Value::Object(m) = &mut v {
        m.remove("elapsed_s");
    }
    v.to_string()
}

pub fn train(args: TrainArgs) -> CmdResult {
    let file = config::read_file(args.config.as_deref())?;
    let mut model_cfg: ModelConfig = config::layer(&ModelConfig::default(), &file, "model")?;
    let mut cfg: TrainConfig = config::layer(&TrainConfig::default(), &file, "train")?;
    let model_overridden = file.get("model").is_some() || args.layers.is_some() || args.d_model.is_some() || args.heads.is_some();
    if let Some(v) = args.layers {
        model_cfg.layers = v;
    }
    if let Some(v) = args.d_model {
        model_cfg.d_model = v;
    }
    if let Some(v) = args.heads {
        model_cfg.heads = v;
    }
    cfg.phase = args.phase.into();
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = args.patience {
        cfg.patience = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.lr {
        cfg.adam.lr = v;
    }
    if let Some(v) = args.temperature {
        cfg.temperature = v;
    }
    if args.no_augment {
        cfg.augment = None;
    }
    cfg.budget = args.budget.resolve(cfg.budget);
    cfg.jobs = args.jobs;
    cfg.validate()?;
    model_cfg.validate()?;

    let mut inputs: Vec<&Path> = vec![&args.corpus];
    let model = match &args.init {
        Some(init) => {
            inputs.push(init);
            if model_overridden {
                checkpoint::load_compatible(init, &model_cfg)
            } else {
                checkpoint::load(init)
            }
            .map_err(|e| CliError::at(init, e))?
        }
        None if cfg.phase == Phase::Joint && !args.from_scratch => {
            return Err(CliError::new("config", "joint training needs --init CHECKPOINT or --from-scratch"));
        }
        None => LeadAe::new(model_cfg, cfg.seed)?,
    };
    ensure_distinct(&args.out, &inputs)?;

    let (paths, scores) = load_corpus(&args.corpus)?;
    let split = split_indices(scores.len(), cfg.split, cfg.seed);
    let pick = |idx: &[usize]| idx.iter().map(|&i| scores[i].clone()).collect::<Vec<_>>();
    let (train_set, val_set) = (pick(&split.train), pick(&split.val));

    let mut log = String::new();
    let outcome = train_phase(&model, &train_set, &val_set, &cfg, &mut |e| {
        eprintln!(
            "epoch {:>4}  train_nll {:.4}  val_nll {:.4}  density {:.1}/{:.1}  {:.1}s",
            e.epoch, e.train_nll, e.val_nll, e.note_density, e.chord_density, e.elapsed_s
        );
        log.push_str(&without_elapsed(e));
        log.push('\n');
    })?;

    let names = |idx: &[usize]| idx.iter().map(|&i| stem(&paths[i])).collect::<Vec<_>>();
    let meta = json!({
        "phase": cfg.phase,
        "budget": cfg.budget,
        "seed": cfg.seed,
        "best_epoch": outcome.best_epoch,
        "best_val_nll": outcome.best_val_nll.is_finite().then_some(outcome.best_val_nll),
        "split": {"train": names(&split.train), "val": names(&split.val), "test": names(&split.test)},
    });
    let bytes = checkpoint::to_bytes(&outcome.model, meta);
    write_bytes(&args.out, &bytes)?;
    let mut log_path = args.out.as_os_str().to_owned();
    log_path.push(".log.jsonl");
    let log_path = PathBuf::from(log_path);
    write_bytes(&log_path, log.as_bytes())?;

    let mut rec = Recorder::start("train");
    rec.config(json!({"model": outcome.model.config, "train": cfg})).seed(cfg.seed);
    for p in &inputs {
        rec.input(p);
    }
    rec.output(&args.out).output(&log_path);
    rec.finish(&beside(&args.out))?;
    match outcome.best_epoch {
        Some(b) => println!("best epoch {b}, val_nll {:.4}", outcome.best_val_nll),
        None => println!("no epoch ran; wrote the initial parameters"),
    }
    Ok(())
}

/// Budget stored in a checkpoint's metadata, if any.
fn checkpoint_budget(path: &Path) -> Result<Option<SelectionBudget>, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let (header, _) = checkpoint::read_header(&bytes).map_err(|e| CliError::at(path, e))?;
    Ok(header.meta.get("budget").and_then(|b| serde_json::from_value(b.clone()).ok()))
}

pub fn reduce(args: ReduceArgs) -> CmdResult {
    let model = checkpoint::load(&args.checkpoint).map_err(|e| CliError::at(&args.checkpoint, e))?;
    let default = checkpoint_budget(&args.checkpoint)?.unwrap_or(SelectionBudget::fixed(1));
    let budget = args.budget.resolve(default);
    budget.validate()?;
    let single = args.inputs.len() == 1;
    let outs: Vec<PathBuf> = if single {
        vec![args.out.clone()]
    } else {
        args.inputs.iter().map(|p| args.out.join(format!("{}.lead.json", stem(p)))).collect()
    };
    let unique: std::collections::BTreeSet<_> = outs.iter().collect();
    if unique.len() != outs.len() {
        return Err(CliError::new("validation", "two inputs share a file stem"));
    }
    let inputs: Vec<&Path> = args.inputs.iter().map(PathBuf::as_path).collect();
    for o in &outs {
        ensure_distinct(o, &inputs)?;
    }
    let leads: Vec<Result<LeadSheet, CliError>> = pool(args.jobs)?.install(|| {
        args.inputs
            .par_iter()
            .map(|p| {
                let score = read_score(p)?;
                learned_lead_sheet(&model, &score, &budget).map_err(|e| CliError::at(p, e))
            })
            .collect()
    });
    let mut rec = Recorder::start("reduce");
    rec.config(json!({"budget": budget})).input(&args.checkpoint);
    for ((input, out), lead) in args.inputs.iter().zip(&outs).zip(leads) {
        rec.input(input);
        write_lead(out, &lead?, &mut rec)?;
    }
    rec.finish(&if single { beside(&args.out) } else { in_dir(&args.out) })?;
    Ok(())
}

pub fn reconstruct(args: ReconstructArgs) -> CmdResult {
    ensure_distinct(&args.out, &[&args.input, &args.checkpoint])?;
    let model = checkpoint::load(&args.checkpoint).map_err(|e| CliError::at(&args.checkpoint, e))?;
    let lead = read_lead(&args.input)?;
    let mut opts = DecodeOptions { top_k: args.topk, temperature: args.temp, seed: args.seed, ..Default::default() };
    if let Some(m) = args.max_events {
        opts.max_events = m;
    }
    let score = model.l2s_decode(&lead, &opts).map_err(|e| CliError::at(&args.input, e))?;
    let mut rec = Recorder::start("reconstruct");
    rec.config(&opts).seed(args.seed).input(&args.input).input(&args.checkpoint);
    write_score(&args.out, &score, &mut rec)?;
    rec.finish(&beside(&args.out))?;
    Ok(())
}

#[derive(Serialize)]
struct PieceReport {
    name: String,
    #[serde(flatten)]
    metrics: MetricsReport,
}

pub fn eval(args: EvalArgs) -> CmdResult {
    let (hyp_dir, leads) = match (&args.hyp, &args.lead) {
        (Some(h), None) => (h, false),
        (None, Some(l)) => (l, true),
        _ => return Err(CliError::new("usage", "give exactly one of --hyp and --lead")),
    };
    let refs = list_json(&args.reference)?;
    if refs.is_empty() {
        return Err(CliError::new("validation", format!("{}: no reference documents", args.reference.display())));
    }
    let hyps: BTreeMap<String, PathBuf> = list_json(hyp_dir)?.into_iter().map(|p| (stem(&p), p)).collect();
    let mut pairs = Vec::new();
    for r in &refs {
        match hyps.get(&stem(r)) {
            Some(h) => pairs.push((r.clone(), h.clone())),
            None => eprintln!("warning: no hypothesis for {}", r.display()),
        }
    }
    if pairs.is_empty() {
        return Err(CliError::new(
            "validation",
            format!("no file in {} matches a reference in {}", hyp_dir.display(), args.reference.display()),
        ));
    }
    let reports: Vec<Result<PieceReport, CliError>> = pool(args.jobs)?.install(|| {
        pairs
            .par_iter()
            .map(|(r, h)| {
                let reference = read_score(r)?;
                let metrics = if leads {
                    let lead = read_lead(h)?;
                    MetricsReport::for_pair(&reference, &lead.materialize(), Some(&lead))
                } else {
                    MetricsReport::for_pair(&reference, &read_score(h)?, None)
                };
                Ok(PieceReport { name: stem(r), metrics })
            })
            .collect()
    });
    let pieces = reports.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mean = MetricsReport::mean(&pieces.iter().map(|p| p.metrics).collect::<Vec<_>>());
    print!("{}", mean.table(&format!("mean (n={})", pieces.len())));
    if let Some(out) = &args.out {
        let report = json!({"mean": mean, "pieces": pieces});
        write_text(out, &serde_json::to_string_pretty(&report).expect("report serializes"))?;
        let mut rec = Recorder::start("eval");
        rec.config(json!({"mode": if leads { "lead" } else { "hyp" }}))
            .input(&args.reference)
            .input(hyp_dir)
            .output(out);
        rec.finish(&beside(out))?;
    }
    Ok(())
}

pub fn gradcheck(args: GradcheckArgs) -> CmdResult {
    let report = gradcheck::run_all(args.seed)?;
    for r in &report.results {
        println!(
            "{:<28} {:>6} entries  max rel error {:.2e}  {}",
            r.name,
            r.entries,
            r.max_rel_error,
            if r.passed { "PASS" } else { "FAIL" }
        );
    }
    if let Some(out) = &args.out {
        write_text(out, &serde_json::to_string_pretty(&report).expect("report serializes"))?;
        let mut rec = Recorder::start("gradcheck");
        rec.config(json!({"tolerance": report.tolerance})).seed(args.seed).output(out);
        rec.finish(&beside(out))?;
    }
    if report.passed() {
        Ok(())
    } else {
        let failed: Vec<_> = report.results.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
        Err(CliError::new("gradcheck", format!("failed: {}", failed.join(", "))))
    }
}

pub fn synth(args: SynthArgs) -> CmdResult {
    let file = config::read_file(args.config.as_deref())?;
    let mut cfg: SyntheticCorpusConfig = config::layer(&SyntheticCorpusConfig::default(), &file, "synth")?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.pieces {
        cfg.n_pieces = n;
    }
    if let Some(b) = args.beats {
        cfg.beats_per_piece = b;
    }
    if let Some(v) = args.voices {
        cfg.voices = v;
    }
    let corpus = make_synthetic_corpus(&cfg)?;
    let mut rec = Recorder::start("synth");
    rec.config(&cfg).seed(cfg.seed);
    for (i, piece) in corpus.iter().enumerate() {
        let name = format!("piece_{i:04}.json");
        let (score, melody) = (args.out.join(&name), args.out.join("melody").join(&name));
        write_text(&score, &score_to_json(&piece.score))?;
        write_text(&melody, &score_to_json(&piece.melody))?;
        rec.output(&score).output(&melody);
    }
    rec.finish(&in_dir(&args.out))?;
    Ok(())
}
