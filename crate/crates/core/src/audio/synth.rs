//! Deterministic stand-in for a speech synthesizer: each phoneme is a short
//! sum of sinusoids, concatenated with linear fades.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::error::AudioError;
use super::mel::{MelConfig, Waveform};
use crate::phonology::{FeatureTable, IpaSequence, PhonemeVocabulary};

const FADE_MS: f64 = 5.0;
const VOWEL_MS: f64 = 90.0;
const CONSONANT_MS: f64 = 60.0;
const MARK_MS: f64 = 20.0;

/// Per-phoneme frame counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DurationVector(pub Vec<usize>);

impl DurationVector {
    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenProfile {
    pub duration_ms: f64,
    /// `(frequency Hz, amplitude)` pairs.
    pub partials: Vec<(f64, f64)>,
}

/// Sound recipe for every phoneme token.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhonemeAudioProfile {
    tokens: BTreeMap<String, TokenProfile>,
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

impl PhonemeAudioProfile {
    pub fn get(&self, token: &str) -> Option<&TokenProfile> {
        self.tokens.get(token)
    }

    pub fn insert(&mut self, token: impl Into<String>, profile: TokenProfile) {
        self.tokens.insert(token.into(), profile);
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Hash-derived partials for every non-reserved token of `vocab`.
    /// Vowels sit low and last longer, consonants sit higher, stress and
    /// length marks are brief and faint.
    pub fn synthetic(vocab: &PhonemeVocabulary) -> Self {
        let features = FeatureTable::bundled();
        let mut tokens = BTreeMap::new();
        for tok in vocab.symbols() {
            let first: String = tok.chars().next().map(String::from).unwrap_or_default();
            let vowel = features.is_vowel(tok).or_else(|| features.is_vowel(&first));
            let mark = matches!(tok.as_str(), "ˈ" | "ˌ" | "ː");
            let (duration_ms, lo, hi, n, gain) = match (mark, vowel) {
                (true, _) => (MARK_MS, 100.0, 400.0, 1, 0.05),
                (false, Some(true)) => (VOWEL_MS, 150.0, 3500.0, 4, 0.5),
                _ => (CONSONANT_MS, 400.0, 7000.0, 3, 0.35),
            };
            let h = fnv1a(tok);
            let partials = (0..n)
                .map(|k| {
                    let r = splitmix(h.wrapping_add(k as u64));
                    let f = lo + (hi - lo) * (r % 10_000) as f64 / 10_000.0;
                    (f.round(), gain / (k + 1) as f64)
                })
                .collect();
            tokens.insert(tok.clone(), TokenProfile { duration_ms, partials });
        }
        Self { tokens }
    }

    /// Parse `token<TAB>duration_ms<TAB>f1:a1,f2:a2,...` lines.
    pub fn parse(text: &str) -> Result<Self, AudioError> {
        let mut tokens = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |m: &str| AudioError::InvalidProfile(format!("line {}: {m}", i + 1));
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(bad("expected three tab-separated columns"));
            }
            let duration_ms: f64 = cols[1].trim().parse().map_err(|_| bad("bad duration"))?;
            if !(duration_ms > 0.0 && duration_ms.is_finite()) {
                return Err(bad("duration must be positive"));
            }
            let partials = cols[2]
                .split(',')
                .filter(|p| !p.trim().is_empty())
                .map(|p| {
                    let (f, a) = p.split_once(':').ok_or_else(|| bad("partial must be f:a"))?;
                    let f: f64 = f.trim().parse().map_err(|_| bad("bad frequency"))?;
                    let a: f64 = a.trim().parse().map_err(|_| bad("bad amplitude"))?;
                    if !(f > 0.0 && f.is_finite() && a.is_finite()) {
                        return Err(bad("partials must be finite with positive frequency"));
                    }
                    Ok((f, a))
                })
                .collect::<Result<Vec<_>, _>>()?;
            tokens.insert(cols[0].trim().to_string(), TokenProfile { duration_ms, partials });
        }
        Ok(Self { tokens })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AudioError> {
        let text = std::fs::read_to_string(&path).map_err(|e| AudioError::io(&path, e))?;
        Self::parse(&text)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (tok, p) in &self.tokens {
            let partials: Vec<String> = p.partials.iter().map(|(f, a)| format!("{f}:{a}")).collect();
            out.push_str(&format!("{tok}\t{}\t{}\n", p.duration_ms, partials.join(",")));
        }
        out
    }
}

/// Render `tokens` and return the waveform plus the frames each token owns
/// under `cfg` framing.
///
/// The signal carries `window/2` zeros on each side, so frame `t` is centred
/// on speech sample `t·hop` and belongs to the phoneme containing that
/// sample. The durations therefore always sum to the frame count.
pub fn synth_tokens<S: AsRef<str>>(
    tokens: &[S],
    profiles: &PhonemeAudioProfile,
    cfg: &MelConfig,
) -> Result<(Waveform, DurationVector), AudioError> {
    cfg.validate()?;
    let nyquist = cfg.sample_rate as f64 / 2.0;
    let fade_len = cfg.ms_to_samples(FADE_MS);
    let pad = cfg.window / 2;
    let mut samples = vec![0.0; pad];
    let mut bounds = Vec::with_capacity(tokens.len());
    for tok in tokens {
        let tok = tok.as_ref();
        let p = profiles
            .get(tok)
            .ok_or_else(|| AudioError::MissingProfile(tok.to_string()))?;
        if let Some((f, _)) = p.partials.iter().find(|(f, _)| *f >= nyquist) {
            return Err(AudioError::InvalidProfile(format!("{tok}: {f} Hz is above Nyquist")));
        }
        let len = cfg.ms_to_samples(p.duration_ms).max(1);
        let fade = fade_len.min(len / 2);
        for n in 0..len {
            let t = n as f64 / cfg.sample_rate as f64;
            let mut x: f64 = p
                .partials
                .iter()
                .map(|(f, a)| a * (std::f64::consts::TAU * f * t).sin())
                .sum();
            if fade > 0 {
                let edge = n.min(len - 1 - n);
                if edge < fade {
                    x *= edge as f64 / fade as f64;
                }
            }
            samples.push(x);
        }
        bounds.push(samples.len() - pad);
    }
    samples.extend(std::iter::repeat_n(0.0, cfg.window - pad));
    let frames = cfg.frame_count(samples.len());
    let mut d = vec![0usize; tokens.len()];
    let mut k = 0;
    for t in 0..frames {
        let centre = t * cfg.hop;
        while k + 1 < bounds.len() && centre >= bounds[k] {
            k += 1;
        }
        if let Some(slot) = d.get_mut(k) {
            *slot += 1;
        }
    }
    Ok((Waveform::new(samples, cfg.sample_rate)?, DurationVector(d)))
}

pub fn synth_phonemes(
    seq: &IpaSequence,
    vocab: &PhonemeVocabulary,
    profiles: &PhonemeAudioProfile,
    cfg: &MelConfig,
) -> Result<(Waveform, DurationVector), AudioError> {
    synth_tokens(&seq.tokens(vocab), profiles, cfg)
}
