//! Subcommand bodies. Each returns `Status::Partial` when some items failed
//! but output was still produced; errors are fatal.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};
use soundsquat_core::audio::{format_manifest, read_manifest, MelConfig, PhonemeAudioProfile};
use soundsquat_core::evaluation::{
    ablation_compare, build_homophone_sets, coverage, rank_ecdf, write_ecdf_csv, write_report_json, EvalParams,
    EvalReport, HomophoneSet,
};
use soundsquat_core::generator::{
    batch_generate, generate as beam_generate, write_candidates_csv, write_candidates_jsonl, Target, TargetResult,
};
use soundsquat_core::minilang::{self, MiniLangConfig};
use soundsquat_core::model::{split_indices, DataContext, Model, TrainOptions};
use soundsquat_core::phonology::{
    load_wordlist, to_ipa, tokenize_ipa, DictionaryBackend, G2pBackend, GraphemeVocabulary, IpaSequence, PhonemeMap,
    PhonemeVocabulary, ProcessBackend,
};
use soundsquat_core::Scalar;
use soundsquat_probe::clock::{Clock, SimClock, SystemClock};
use soundsquat_probe::pipeline::{CandidateSource, ModelCandidates, StaticCandidates};
use soundsquat_probe::store::ResultStore;
use soundsquat_probe::{run_domain_pipeline, run_package_pipeline, Mode, PipelineOptions, Services};

use crate::config::{require, CliConfig, Dtype, Format};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Done,
    Partial,
}

fn status(partial: bool) -> Status {
    if partial {
        Status::Partial
    } else {
        Status::Done
    }
}

/// Output file, or stdout.
fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            Box::new(BufWriter::new(
                File::create(p).with_context(|| format!("creating {}", p.display()))?,
            ))
        }
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn write_json<S: serde::Serialize>(path: Option<&Path>, value: &S) -> Result<()> {
    let mut out = output(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

fn backend(cfg: &CliConfig, language: &str) -> Result<Box<dyn G2pBackend>> {
    if let Some(cmd) = &cfg.g2p_command {
        let (program, args) = cmd.split_first().ok_or_else(|| anyhow!("g2p_command is empty"))?;
        return Ok(Box::new(ProcessBackend::spawn(program, args, language)?));
    }
    let dict = require(&cfg.paths.dictionary, "pronunciation dictionary")
        .context("no G2P backend: give --dictionary or --g2p-command")?;
    Ok(Box::new(DictionaryBackend::load(dict, language)?))
}

fn load_model<T: Scalar>(cfg: &CliConfig) -> Result<Model<T>> {
    let path = require(&cfg.paths.checkpoint, "checkpoint")?;
    Model::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

pub fn prepare(cfg: &CliConfig) -> Result<Status> {
    let words = load_wordlist(require(&cfg.paths.wordlist, "wordlist")?)?;
    let backend = backend(cfg, &cfg.model_language)?;
    let vocab = PhonemeVocabulary::default_english();
    let mut rows = Vec::new();
    let mut failed = 0;
    for w in &words {
        let ipa =
            to_ipa(w, backend.as_ref(), &cfg.model_language).and_then(|ipa| tokenize_ipa(&ipa, &vocab).map(|_| ipa));
        match ipa {
            Ok(ipa) => rows.push(soundsquat_core::audio::ManifestRow {
                word: w.clone(),
                ipa,
                audio: soundsquat_core::audio::AudioSource::Synth,
            }),
            Err(e) => {
                warn!("skipping {w:?}: {e}");
                failed += 1;
            }
        }
    }
    if rows.is_empty() {
        bail!("no word of {} could be transcribed", words.len());
    }
    let mut out = output(cfg.paths.out.as_deref())?;
    out.write_all(format_manifest(&rows).as_bytes())?;
    out.flush()?;
    info!("{} rows, {failed} skipped", rows.len());
    Ok(status(failed > 0))
}

pub fn train(cfg: &CliConfig) -> Result<Status> {
    match cfg.dtype {
        Dtype::F32 => train_as::<f32>(cfg),
        Dtype::F64 => train_as::<f64>(cfg),
    }
}

#[derive(serde::Serialize)]
struct TrainSummary {
    examples: usize,
    skipped: Vec<(String, String)>,
    train: usize,
    validation: usize,
    test: usize,
    epochs_run: usize,
    best_epoch: Option<usize>,
    best_validation_loss: Option<f64>,
    final_train_loss: Option<f64>,
    train_top1: f64,
    test_top1: Option<f64>,
    checkpoint: String,
}

fn train_as<T: Scalar>(cfg: &CliConfig) -> Result<Status> {
    let manifest = require(&cfg.paths.manifest, "manifest")?;
    let out = cfg
        .paths
        .checkpoint
        .as_deref()
        .ok_or_else(|| anyhow!("no output checkpoint given (--out)"))?;
    let profiles_path = match &cfg.paths.profiles {
        Some(_) => Some(require(&cfg.paths.profiles, "audio profiles")?),
        None => None,
    };
    let rows = read_manifest(manifest)?;
    let phonemes = PhonemeVocabulary::default_english();
    let graphemes = GraphemeVocabulary::default_english();
    let profiles = match profiles_path {
        Some(p) => PhonemeAudioProfile::load(p)?,
        None => PhonemeAudioProfile::synthetic(&phonemes),
    };
    let mel = MelConfig::default();
    let mcfg = cfg.model_config().with_vocab_sizes(phonemes.len(), graphemes.len());
    let ctx = DataContext {
        phonemes: &phonemes,
        graphemes: &graphemes,
        profiles: &profiles,
        mel: &mel,
        max_input_len: mcfg.max_input_len,
        max_output_len: mcfg.max_output_len,
    };
    let (examples, skipped) = ctx.build(&rows);
    for (w, e) in &skipped {
        warn!("skipping {w:?}: {e}");
    }
    if examples.is_empty() {
        bail!("no usable rows in {}", manifest.display());
    }
    let (tr, va, te) = if cfg.train.all_rows.unwrap_or(false) {
        ((0..examples.len()).collect(), Vec::new(), Vec::new())
    } else {
        split_indices(examples.len(), cfg.seed)
    };
    let pick = |idx: &[usize]| idx.iter().map(|&i| examples[i].clone()).collect::<Vec<_>>();
    let (train, val, test) = (pick(&tr), pick(&va), pick(&te));

    let mut model: Model<T> = Model::new(mcfg, phonemes.clone(), graphemes.clone(), mel.clone(), cfg.seed)?;
    model.fit_mel_norm(&train);
    let tcfg = cfg.train_config();
    if train.iter().any(|e| e.mel.is_some() && e.durations.is_none()) {
        info!("training the duration predictor on recorded audio");
        model.train_duration_predictor(&train, &tcfg)?;
    }
    let outcome = model.train(
        &train,
        &val,
        &tcfg,
        TrainOptions {
            metrics_path: cfg.paths.metrics.clone(),
            restore_best: !val.is_empty(),
            ..Default::default()
        },
    )?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    model.save(out)?;
    let summary = TrainSummary {
        examples: examples.len(),
        skipped: skipped.clone(),
        train: train.len(),
        validation: val.len(),
        test: test.len(),
        epochs_run: outcome.metrics.len(),
        best_epoch: outcome.best_epoch,
        best_validation_loss: if val.is_empty() { None } else { outcome.best_val },
        final_train_loss: outcome.metrics.last().map(|m| m.train_total),
        train_top1: model.top1_accuracy(&train)?,
        test_top1: if test.is_empty() {
            None
        } else {
            Some(model.top1_accuracy(&test)?)
        },
        checkpoint: out.display().to_string(),
    };
    write_json(None, &summary)?;
    Ok(status(!skipped.is_empty()))
}

pub fn generate(cfg: &CliConfig, words: &[String], ipas: &[String], lang: Option<&str>) -> Result<Status> {
    match cfg.dtype {
        Dtype::F32 => generate_as::<f32>(cfg, words, ipas, lang),
        Dtype::F64 => generate_as::<f64>(cfg, words, ipas, lang),
    }
}

fn generate_as<T: Scalar>(cfg: &CliConfig, words: &[String], ipas: &[String], lang: Option<&str>) -> Result<Status> {
    let targets_file = match &cfg.paths.targets {
        Some(_) => Some(require(&cfg.paths.targets, "targets file")?),
        None => None,
    };
    if words.is_empty() && ipas.is_empty() && targets_file.is_none() {
        bail!("nothing to generate for: give --word, --ipa or --targets");
    }
    let model: Model<T> = load_model(cfg)?;
    let params = cfg.generation.params();
    let lang = lang.unwrap_or(&cfg.model_language);

    let mut results = Vec::new();
    let mut failures: Vec<(String, String)> = Vec::new();
    let one = |name: &str, seq: &IpaSequence| -> Result<TargetResult> {
        let mut p = params.clone();
        p.exclude.insert(name.to_string());
        Ok(TargetResult {
            target: name.to_string(),
            ipa: seq.surface.clone(),
            candidates: beam_generate(seq, &model, &p)?,
        })
    };
    if !words.is_empty() {
        let backend = backend(cfg, lang)?;
        let map = if lang.eq_ignore_ascii_case(&cfg.model_language) {
            None
        } else {
            Some(PhonemeMap::bundled(lang, &model.phonemes)?)
        };
        for w in words {
            let seq = to_ipa(w, backend.as_ref(), lang).and_then(|ipa| match &map {
                Some(m) => m.map_surface(&ipa),
                None => tokenize_ipa(&ipa, &model.phonemes),
            });
            match seq.map_err(anyhow::Error::from).and_then(|s| one(w, &s)) {
                Ok(r) => results.push(r),
                Err(e) => failures.push((w.clone(), format!("{e:#}"))),
            }
        }
    }
    for ipa in ipas {
        match tokenize_ipa(ipa, &model.phonemes)
            .map_err(anyhow::Error::from)
            .and_then(|s| one(ipa, &s))
        {
            Ok(r) => results.push(r),
            Err(e) => failures.push((ipa.clone(), format!("{e:#}"))),
        }
    }
    if let Some(path) = targets_file {
        let mut targets = Vec::new();
        for line in read_lines(path)? {
            let (name, ipa) = line
                .split_once('\t')
                .ok_or_else(|| anyhow!("{}: expected name<TAB>ipa, got {line:?}", path.display()))?;
            targets.push(Target {
                name: name.trim().to_string(),
                ipa: ipa.trim().to_string(),
            });
        }
        let batch = batch_generate(&targets, &model, &params, cfg.jobs.unwrap_or(1))?;
        results.extend(batch.results);
        failures.extend(batch.failures);
    }
    for (name, e) in &failures {
        warn!("{name}: {e}");
    }
    if results.is_empty() {
        bail!("generation failed for every target");
    }
    let mut out = output(cfg.paths.out.as_deref())?;
    match cfg.format {
        Format::Jsonl => write_candidates_jsonl(&mut out, &results, cfg.generation.top)?,
        Format::Csv => write_candidates_csv(&mut out, &results, cfg.generation.top)?,
    }
    out.flush()?;
    Ok(status(!failures.is_empty()))
}

/// `ipa<TAB>word,word,...` lines.
fn read_sets(path: &Path) -> Result<Vec<HomophoneSet>> {
    read_lines(path)?
        .into_iter()
        .map(|line| {
            let (ipa, members) = line
                .split_once('\t')
                .ok_or_else(|| anyhow!("{}: expected ipa<TAB>members, got {line:?}", path.display()))?;
            let mut members: Vec<String> = members
                .split([',', ' '])
                .filter(|m| !m.is_empty())
                .map(str::to_string)
                .collect();
            members.sort();
            members.dedup();
            if members.len() < 2 {
                bail!("{}: set {ipa:?} needs at least two members", path.display());
            }
            Ok(HomophoneSet {
                ipa: ipa.trim().to_string(),
                members,
            })
        })
        .collect()
}

pub fn eval(cfg: &CliConfig, ecdf: Option<&Path>) -> Result<Status> {
    match cfg.dtype {
        Dtype::F32 => eval_as::<f32>(cfg, ecdf),
        Dtype::F64 => eval_as::<f64>(cfg, ecdf),
    }
}

fn eval_as<T: Scalar>(cfg: &CliConfig, ecdf: Option<&Path>) -> Result<Status> {
    require(&cfg.paths.checkpoint, "checkpoint")?;
    let mut unresolved = 0;
    let (sets, mut reference) = match &cfg.paths.sets {
        Some(_) => {
            let sets = read_sets(require(&cfg.paths.sets, "homophone sets")?)?;
            let members: Vec<String> = sets.iter().flat_map(|s| s.members.clone()).collect();
            (sets, members)
        }
        None => {
            let dict =
                require(&cfg.paths.dictionary, "pronunciation dictionary").context("give --sets or --dictionary")?;
            let words: Vec<String> = read_lines(dict)?
                .iter()
                .filter_map(|l| l.split('\t').next().map(str::to_string))
                .collect();
            let built = build_homophone_sets(&words, backend(cfg, &cfg.model_language)?.as_ref())?;
            unresolved = built.unresolved.len();
            (built.sets, words)
        }
    };
    if cfg.paths.wordlist.is_some() {
        reference = load_wordlist(require(&cfg.paths.wordlist, "wordlist")?)?;
    }
    let model: Model<T> = load_model(cfg)?;
    let params = EvalParams {
        generation: cfg.generation.params(),
        top: cfg.generation.top.unwrap_or(EvalParams::default().top),
        jobs: cfg.jobs.unwrap_or(1),
        ..EvalParams::default()
    };
    let report = coverage(&sets, &model, &params, &reference)?;
    write_report_json(output(cfg.paths.out.as_deref())?, &report)?;
    if let Some(p) = ecdf {
        write_ecdf_csv(output(Some(p))?, &rank_ecdf(&report))?;
    }
    let errors = report.sets.iter().filter(|s| s.error.is_some()).count();
    eprintln!(
        "coverage {:.4} ({} of {} homophones), {} quasi-homophones",
        report.coverage, report.found, report.total, report.quasi_homophones
    );
    Ok(status(errors > 0 || unresolved > 0))
}

pub fn ablate(cfg: &CliConfig, with: &Path, without: &Path) -> Result<Status> {
    let read = |p: &Path| -> Result<EvalReport> {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing report {}", p.display()))
    };
    let (a, b) = (read(with)?, read(without)?);
    let report = ablation_compare(&a, &b)?;
    write_json(cfg.paths.out.as_deref(), &report)?;
    Ok(Status::Done)
}

/// Candidates from a file when one is configured, otherwise from a model.
fn with_source<R>(cfg: &CliConfig, f: impl FnOnce(&dyn CandidateSource) -> Result<R>) -> Result<R> {
    if cfg.paths.candidates.is_some() {
        let path = require(&cfg.paths.candidates, "candidates file")?;
        let text = std::fs::read_to_string(path)?;
        let src = if path.extension().is_some_and(|e| e == "jsonl") {
            StaticCandidates::parse_jsonl(&text)?
        } else {
            StaticCandidates::parse_tsv(&text)?
        };
        return f(&src);
    }
    require(&cfg.paths.checkpoint, "checkpoint").context("give --candidates or --checkpoint")?;
    let backend = backend(cfg, &cfg.model_language)?;
    macro_rules! run {
        ($t:ty) => {{
            let model: Model<$t> = load_model(cfg)?;
            f(&ModelCandidates {
                model: &model,
                backend: backend.as_ref(),
                language: cfg.model_language.clone(),
                map: None,
                params: cfg.generation.params(),
                top: cfg.generation.top,
            })
        }};
    }
    match cfg.dtype {
        Dtype::F32 => run!(f32),
        Dtype::F64 => run!(f64),
    }
}

/// Services and options for a pipeline run. Fixture universes run on
/// simulated time, so backoff and rate limiting cost nothing.
fn probe_setup(cfg: &CliConfig) -> Result<(Services, PipelineOptions, ResultStore)> {
    let mut pc = cfg.probe.clone();
    if let Some(j) = cfg.jobs {
        pc.concurrency = j;
    }
    let results = cfg
        .paths
        .results_dir
        .as_deref()
        .ok_or_else(|| anyhow!("no results directory given (--results)"))?;
    let clock: Arc<dyn Clock> = match pc.mode {
        Mode::Fixture => Arc::new(SimClock::new()),
        Mode::Live => Arc::new(SystemClock),
    };
    let services = Services::from_config(&pc, clock)?;
    let opts = PipelineOptions::from_config(&pc)?;
    let store = ResultStore::create(results)?;
    Ok((services, opts, store))
}

pub fn domains(cfg: &CliConfig) -> Result<Status> {
    let targets = read_lines(require(&cfg.paths.targets, "targets file")?)?;
    let (services, opts, mut store) = probe_setup(cfg)?;
    let summary = with_source(cfg, |src| {
        Ok(run_domain_pipeline(&targets, src, &services, &opts, &mut store)?)
    })?;
    store.finish(&summary)?;
    for f in summary.invalid_targets.iter().chain(&summary.failures) {
        warn!("{}: {}", f.name, f.error);
    }
    write_json(None, &summary)?;
    Ok(status(
        !summary.failures.is_empty() || !summary.invalid_targets.is_empty(),
    ))
}

pub fn pypi(cfg: &CliConfig) -> Result<Status> {
    let packages = read_lines(require(&cfg.paths.packages, "packages file")?)?;
    let (services, opts, mut store) = probe_setup(cfg)?;
    let summary = with_source(cfg, |src| {
        Ok(run_package_pipeline(&packages, src, &services, &opts, &mut store)?)
    })?;
    store.finish(&summary)?;
    for f in &summary.failures {
        warn!("{}: {}", f.name, f.error);
    }
    write_json(None, &summary)?;
    Ok(status(!summary.failures.is_empty()))
}

pub fn minilang(cfg: &CliConfig, words: usize, pairs: usize) -> Result<Status> {
    let dir = cfg
        .paths
        .out
        .as_deref()
        .ok_or_else(|| anyhow!("no output directory given (--out)"))?;
    if 2 * pairs > words {
        bail!("{pairs} planted pairs need at least {} words", 2 * pairs);
    }
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let lex = minilang::generate(&MiniLangConfig {
        words,
        planted_pairs: pairs,
        seed: cfg.seed,
    });
    let write = |name: &str, text: String| -> Result<()> {
        let p = dir.join(name);
        std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
    };
    write("dictionary.tsv", lex.dictionary_tsv())?;
    write("wordlist.txt", lex.words().iter().map(|w| format!("{w}\n")).collect())?;
    write("manifest.tsv", format_manifest(&lex.manifest_rows()))?;
    let mut sets: Vec<String> = lex
        .planted
        .iter()
        .map(|&(a, b)| {
            let (x, y) = (&lex.entries[a], &lex.entries[b]);
            let (lo, hi) = if x.word <= y.word { (x, y) } else { (y, x) };
            format!("{}\t{},{}\n", lo.ipa, lo.word, hi.word)
        })
        .collect();
    sets.sort();
    write("sets.tsv", sets.concat())?;
    println!("{}", dir.display());
    Ok(Status::Done)
}
