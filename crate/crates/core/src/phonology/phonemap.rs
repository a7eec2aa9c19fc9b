//! Closest-phoneme replacement from a foreign IPA inventory into the model's.

use std::collections::{BTreeMap, HashMap};

use super::error::PhonologyError;
use super::tokenize::{segment, strip_delimiters, IpaSequence};
use super::vocab::PhonemeVocabulary;

const DEFAULT_FEATURES: &str = include_str!("../../data/phoneme_features.tsv");
const MAP_IT: &str = include_str!("../../data/maps/it.tsv");
const MAP_PT: &str = include_str!("../../data/maps/pt.tsv");
const MAP_ES: &str = include_str!("../../data/maps/es.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    Consonant,
    Vowel,
}

/// Articulatory category table used when a symbol has no explicit entry.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    rows: HashMap<String, (Class, [f64; 3])>,
}

impl FeatureTable {
    /// `symbol<TAB>C|V<TAB>f1<TAB>f2<TAB>f3`, `#` comments.
    pub fn parse(text: &str) -> Result<Self, PhonologyError> {
        let mut rows = HashMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')) {
            let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
            let bad = || PhonologyError::InvalidInventory(format!("bad feature row {line:?}"));
            if cols.len() != 5 {
                return Err(bad());
            }
            let class = match cols[1] {
                "C" => Class::Consonant,
                "V" => Class::Vowel,
                _ => return Err(bad()),
            };
            let mut f = [0.0; 3];
            for (slot, col) in f.iter_mut().zip(&cols[2..]) {
                *slot = col.parse().map_err(|_| bad())?;
            }
            rows.insert(cols[0].to_string(), (class, f));
        }
        Ok(Self { rows })
    }

    pub fn bundled() -> Self {
        Self::parse(DEFAULT_FEATURES).expect("bundled feature table is valid")
    }

    /// `Some(true)` for vowels, `Some(false)` for consonants, `None` if absent.
    pub fn is_vowel(&self, symbol: &str) -> Option<bool> {
        self.rows.get(symbol).map(|(c, _)| *c == Class::Vowel)
    }

    /// Nearest in-vocabulary symbol of the same class (Euclidean distance,
    /// ties to the earlier vocabulary token).
    fn nearest(&self, symbol: &str, vocab: &PhonemeVocabulary) -> Option<String> {
        let (class, f) = self.rows.get(symbol)?;
        let mut best: Option<(f64, &str)> = None;
        for tok in vocab.symbols() {
            let Some((c, g)) = self.rows.get(tok.as_str()) else {
                continue;
            };
            if c != class {
                continue;
            }
            let d: f64 = f.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum();
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, tok));
            }
        }
        best.map(|(_, t)| t.to_string())
    }
}

/// Combining marks and spacing modifier letters (aspiration, palatalization, …).
fn is_diacritic(c: char) -> bool {
    matches!(c, '\u{0300}'..='\u{036F}' | '\u{02B0}'..='\u{02FF}' | '\u{1DC0}'..='\u{1DFF}' | '\u{1D2C}'..='\u{1D6A}')
}

fn strip_diacritics(token: &str) -> String {
    token.chars().filter(|&c| !is_diacritic(c)).collect()
}

/// Foreign token → one or more in-vocabulary tokens.
#[derive(Debug, Clone)]
pub struct PhonemeMap {
    entries: BTreeMap<String, Vec<String>>,
    fallback: Option<FeatureTable>,
    vocab: PhonemeVocabulary,
}

impl PhonemeMap {
    /// Parse `foreign<TAB>target [target…]` lines. Every target must be in
    /// `vocab`, and no key may be an in-vocabulary token.
    pub fn from_tsv(text: &str, vocab: &PhonemeVocabulary) -> Result<Self, PhonologyError> {
        let mut entries = BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')) {
            let (key, image) = line
                .split_once('\t')
                .ok_or_else(|| PhonologyError::InvalidInventory(format!("bad map row {line:?}")))?;
            let key = key.trim();
            if vocab.id(key).is_some() {
                return Err(PhonologyError::InvalidInventory(format!(
                    "map key {key:?} is already in the vocabulary"
                )));
            }
            let image: Vec<String> = image.split_whitespace().map(str::to_string).collect();
            if image.is_empty() {
                return Err(PhonologyError::InvalidInventory(format!("empty image for {key:?}")));
            }
            if let Some(bad) = image.iter().find(|t| vocab.id(t).is_none_or(|i| vocab.is_special(i))) {
                return Err(PhonologyError::InvalidInventory(format!(
                    "map image {bad:?} for {key:?} is not in the vocabulary"
                )));
            }
            entries.insert(key.to_string(), image);
        }
        Ok(Self {
            entries,
            fallback: None,
            vocab: vocab.clone(),
        })
    }

    /// Identity map (only the fallback table, if attached, does any work).
    pub fn identity(vocab: &PhonemeVocabulary) -> Self {
        Self {
            entries: BTreeMap::new(),
            fallback: None,
            vocab: vocab.clone(),
        }
    }

    /// Shipped map for `it`, `pt` or `es` (region suffixes ignored), with the
    /// bundled feature fallback attached.
    pub fn bundled(language: &str, vocab: &PhonemeVocabulary) -> Result<Self, PhonologyError> {
        let base = language.split(['-', '_']).next().unwrap_or("").to_ascii_lowercase();
        let text = match base.as_str() {
            "it" => MAP_IT,
            "pt" => MAP_PT,
            "es" => MAP_ES,
            "en" => "",
            other => {
                return Err(PhonologyError::InvalidInventory(format!(
                    "no bundled map for {other:?}"
                )))
            }
        };
        Ok(Self::from_tsv(text, vocab)?.with_fallback(FeatureTable::bundled()))
    }

    pub fn with_fallback(mut self, table: FeatureTable) -> Self {
        self.fallback = Some(table);
        self
    }

    pub fn vocab(&self) -> &PhonemeVocabulary {
        &self.vocab
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    fn in_vocab(&self, t: &str) -> bool {
        self.vocab.id(t).is_some_and(|i| !self.vocab.is_special(i))
    }

    fn lookup(&self, token: &str) -> Option<Vec<String>> {
        if self.in_vocab(token) {
            return Some(vec![token.to_string()]);
        }
        if let Some(image) = self.entries.get(token) {
            return Some(image.clone());
        }
        let bare = strip_diacritics(token);
        if bare.is_empty() {
            return Some(Vec::new());
        }
        if bare != token {
            if self.in_vocab(&bare) {
                return Some(vec![bare]);
            }
            if let Some(image) = self.entries.get(&bare) {
                return Some(image.clone());
            }
        }
        self.fallback.as_ref()?.nearest(&bare, &self.vocab).map(|t| vec![t])
    }

    /// Replace every token; output tokens are all in the vocabulary, so a
    /// second application is the identity.
    pub fn map_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<String>, PhonologyError> {
        let mut out = Vec::with_capacity(tokens.len());
        let mut missing = Vec::new();
        for t in tokens {
            match self.lookup(t.as_ref()) {
                Some(image) => out.extend(image),
                None => missing.push(t.as_ref().to_string()),
            }
        }
        if missing.is_empty() {
            Ok(out)
        } else {
            Err(PhonologyError::UnmappablePhoneme(missing))
        }
    }

    /// Segment a foreign transcription. Longest match runs over vocabulary
    /// tokens, map keys and feature-table symbols; diacritics attach to the
    /// preceding segment.
    pub fn segment_foreign(&self, surface: &str) -> Vec<String> {
        let text = strip_delimiters(surface);
        let table = self.fallback.as_ref();
        let max = self
            .vocab
            .max_token_chars()
            .max(self.entries.keys().map(|k| k.chars().count()).max().unwrap_or(1))
            .max(table.map_or(1, |t| t.rows.keys().map(|k| k.chars().count()).max().unwrap_or(1)));
        let known =
            |t: &str| self.in_vocab(t) || self.entries.contains_key(t) || table.is_some_and(|f| f.rows.contains_key(t));
        let mut out: Vec<String> = Vec::new();
        for (piece, matched) in segment(text, max, known) {
            if piece.trim().is_empty() {
                continue;
            }
            let attach = !matched && piece.chars().all(is_diacritic);
            match out.last_mut() {
                Some(prev) if attach => prev.push_str(piece),
                _ => out.push(piece.to_string()),
            }
        }
        out
    }

    /// Tokenize a foreign transcription and map it into the vocabulary.
    pub fn map_surface(&self, surface: &str) -> Result<IpaSequence, PhonologyError> {
        let pieces = self.segment_foreign(surface);
        if pieces.is_empty() {
            return Err(PhonologyError::EmptyInput);
        }
        let mapped = self.map_tokens(&pieces)?;
        if mapped.is_empty() {
            return Err(PhonologyError::EmptyInput);
        }
        let token_ids = mapped.iter().map(|t| self.vocab.id(t).expect("validated")).collect();
        Ok(IpaSequence {
            token_ids,
            surface: mapped.concat(),
        })
    }
}

/// Map an already tokenized foreign sequence into `map`'s vocabulary.
pub fn map_phonemes<S: AsRef<str>>(tokens: &[S], map: &PhonemeMap) -> Result<IpaSequence, PhonologyError> {
    let mapped = map.map_tokens(tokens)?;
    if mapped.is_empty() {
        return Err(PhonologyError::EmptyInput);
    }
    let token_ids = mapped.iter().map(|t| map.vocab.id(t).expect("validated")).collect();
    Ok(IpaSequence {
        token_ids,
        surface: mapped.concat(),
    })
}
