//! Beam-search post-processor producing ranked quasi-homophone candidates.

mod beam;
mod output;

use thiserror::Error;

pub use beam::{beam_search, rank_candidates, replay_logprob, BeamNode, Candidate, GenerationParams, NextTokenModel};
pub use output::{write_candidates_csv, write_candidates_jsonl, CandidateRecord};

use crate::model::{Model, ModelError};
use crate::nn::Tensor;
use crate::phonology::{to_ipa, tokenize_ipa, G2pBackend, IpaSequence, PhonemeMap, PhonologyError};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Phonology(#[from] PhonologyError),
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
    #[error("every candidate was excluded")]
    EmptyResult,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// A model bound to one encoded input.
pub struct Session<'m, T: Scalar> {
    model: &'m Model<T>,
    memory: Tensor<T>,
}

impl<'m, T: Scalar> Session<'m, T> {
    pub fn new(model: &'m Model<T>, ipa: &IpaSequence) -> Result<Self, GenerateError> {
        Ok(Self {
            model,
            memory: model.encode(ipa)?,
        })
    }
}

impl<T: Scalar> NextTokenModel for Session<'_, T> {
    fn vocab_size(&self) -> usize {
        self.model.graphemes.len()
    }

    fn bos(&self) -> usize {
        self.model.graphemes.specials().bos
    }

    fn eos(&self) -> usize {
        self.model.graphemes.specials().eos
    }

    fn is_blocked(&self, token: usize) -> bool {
        let s = self.model.graphemes.specials();
        token == s.pad || token == s.bos || token == s.unk
    }

    fn next_log_probs(&self, history: &[usize]) -> Result<Vec<f64>, GenerateError> {
        Ok(self.model.decode_step_log(&self.memory, history)?)
    }

    fn render(&self, tokens: &[usize]) -> String {
        self.model.graphemes.decode(tokens)
    }
}

/// Candidates for one transcription, best first.
pub fn generate<T: Scalar>(
    ipa: &IpaSequence,
    model: &Model<T>,
    params: &GenerationParams,
) -> Result<Vec<Candidate>, GenerateError> {
    params.validate()?;
    model.check_input(&ipa.token_ids)?;
    let session = Session::new(model, ipa)?;
    let depth = params.depth(ipa.len()).min(model.config.max_output_len + 1);
    let nodes = beam_search(&session, depth, params)?;
    let out = rank_candidates(&session, &nodes, &params.exclude);
    if out.is_empty() {
        return Err(GenerateError::EmptyResult);
    }
    Ok(out)
}

/// Transcribe `word` in `language`, map its phonemes into the model's
/// inventory and generate.
pub fn generate_cross<T: Scalar>(
    word: &str,
    language: &str,
    backend: &dyn G2pBackend,
    map: &PhonemeMap,
    model: &Model<T>,
    params: &GenerationParams,
) -> Result<(IpaSequence, Vec<Candidate>), GenerateError> {
    let ipa = to_ipa(word, backend, language)?;
    let seq = map.map_surface(&ipa)?;
    let candidates = generate(&seq, model, params)?;
    Ok((seq, candidates))
}

/// A name to generate for, with its transcription.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Target {
    pub name: String,
    pub ipa: String,
}

#[derive(Debug, Clone)]
pub struct TargetResult {
    pub target: String,
    pub ipa: String,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CountStats {
    pub targets: usize,
    pub total: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub sd: f64,
}

impl CountStats {
    pub fn of(counts: &[usize]) -> Self {
        let n = counts.len();
        if n == 0 {
            return Self {
                targets: 0,
                total: 0,
                mean: 0.0,
                sd: 0.0,
            };
        }
        let total: usize = counts.iter().sum();
        let mean = total as f64 / n as f64;
        let var = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / n as f64;
        Self {
            targets: n,
            total,
            mean,
            sd: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    pub results: Vec<TargetResult>,
    pub failures: Vec<(String, String)>,
    pub stats: CountStats,
}

/// Generate for every target on up to `jobs` threads. Output order follows
/// `targets`; failing targets are reported, never fatal.
pub fn batch_generate<T: Scalar>(
    targets: &[Target],
    model: &Model<T>,
    params: &GenerationParams,
    jobs: usize,
) -> Result<BatchResult, GenerateError> {
    params.validate()?;
    let one = |t: &Target| -> Result<TargetResult, GenerateError> {
        let seq = tokenize_ipa(&t.ipa, &model.phonemes)?;
        let mut p = params.clone();
        p.exclude.insert(t.name.clone());
        Ok(TargetResult {
            target: t.name.clone(),
            ipa: seq.surface.clone(),
            candidates: generate(&seq, model, &p)?,
        })
    };
    let jobs = jobs.max(1).min(targets.len().max(1));
    let mut slots: Vec<Option<Result<TargetResult, GenerateError>>> = (0..targets.len()).map(|_| None).collect();
    if jobs == 1 {
        for (slot, t) in slots.iter_mut().zip(targets) {
            *slot = Some(one(t));
        }
    } else {
        let chunk = targets.len().div_ceil(jobs);
        std::thread::scope(|s| {
            for (slot_chunk, target_chunk) in slots.chunks_mut(chunk).zip(targets.chunks(chunk)) {
                let one = &one;
                s.spawn(move || {
                    for (slot, t) in slot_chunk.iter_mut().zip(target_chunk) {
                        *slot = Some(one(t));
                    }
                });
            }
        });
    }
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (slot, t) in slots.into_iter().zip(targets) {
        match slot.expect("every slot filled") {
            Ok(r) => results.push(r),
            Err(e) => failures.push((t.name.clone(), e.to_string())),
        }
    }
    let counts: Vec<usize> = results.iter().map(|r| r.candidates.len()).collect();
    Ok(BatchResult {
        stats: CountStats::of(&counts),
        results,
        failures,
    })
}
