use std::collections::HashMap;

use sha2::{Digest, Sha256};

use super::error::PhonologyError;

pub const PAD: &str = "<pad>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";

const DEFAULT_PHONEMES: &str = include_str!("../../data/phonemes.txt");
const DEFAULT_GRAPHEMES: &str = include_str!("../../data/graphemes.txt");

/// Indices of the four reserved symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Specials {
    pub pad: usize,
    pub bos: usize,
    pub eos: usize,
    pub unk: usize,
}

/// Ordered, immutable token inventory with the reserved symbols at 0..4.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    specials: Specials,
    max_token_chars: usize,
}

impl Vocabulary {
    fn build<I: IntoIterator<Item = String>>(symbols: I) -> Result<Self, PhonologyError> {
        let mut tokens: Vec<String> = [PAD, BOS, EOS, UNK].iter().map(|s| s.to_string()).collect();
        let mut index: HashMap<String, usize> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        for sym in symbols {
            if sym.is_empty() {
                continue;
            }
            if index.contains_key(&sym) {
                return Err(PhonologyError::InvalidInventory(format!("duplicate token {sym:?}")));
            }
            index.insert(sym.clone(), tokens.len());
            tokens.push(sym);
        }
        if tokens.len() == 4 {
            return Err(PhonologyError::InvalidInventory("no tokens".into()));
        }
        let max_token_chars = tokens[4..].iter().map(|t| t.chars().count()).max().unwrap_or(1);
        Ok(Self {
            tokens,
            index,
            specials: Specials {
                pad: 0,
                bos: 1,
                eos: 2,
                unk: 3,
            },
            max_token_chars,
        })
    }

    /// Parse an inventory file: one token per line, `#` starts a comment line.
    pub fn from_inventory(text: &str) -> Result<Self, PhonologyError> {
        Self::build(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_string),
        )
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn specials(&self) -> Specials {
        self.specials
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn is_special(&self, id: usize) -> bool {
        id < 4
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Non-reserved tokens in order.
    pub fn symbols(&self) -> &[String] {
        &self.tokens[4..]
    }

    pub(crate) fn max_token_chars(&self) -> usize {
        self.max_token_chars
    }

    /// Hex SHA-256 over the newline-joined token list.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.tokens.join("\n").as_bytes());
        hex::encode(h.finalize())
    }
}

/// IPA token inventory, the model's input alphabet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhonemeVocabulary(Vocabulary);

impl PhonemeVocabulary {
    pub fn from_inventory(text: &str) -> Result<Self, PhonologyError> {
        Vocabulary::from_inventory(text).map(Self)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, PhonologyError> {
        let text = std::fs::read_to_string(&path).map_err(|e| PhonologyError::io(&path, e))?;
        Self::from_inventory(&text)
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, PhonologyError> {
        Vocabulary::build(tokens).map(Self)
    }

    /// Shipped US-English inventory (69 IPA tokens + 4 reserved = 73).
    pub fn default_english() -> Self {
        Self::from_inventory(DEFAULT_PHONEMES).expect("bundled phoneme inventory is valid")
    }
}

impl std::ops::Deref for PhonemeVocabulary {
    type Target = Vocabulary;
    fn deref(&self) -> &Vocabulary {
        &self.0
    }
}

/// Output alphabet of single characters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphemeVocabulary(Vocabulary);

impl GraphemeVocabulary {
    pub fn from_inventory(text: &str) -> Result<Self, PhonologyError> {
        let v = Vocabulary::from_inventory(text)?;
        if let Some(bad) = v.symbols().iter().find(|t| t.chars().count() != 1) {
            return Err(PhonologyError::InvalidInventory(format!(
                "grapheme token {bad:?} is not a single character"
            )));
        }
        Ok(Self(v))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, PhonologyError> {
        let text = std::fs::read_to_string(&path).map_err(|e| PhonologyError::io(&path, e))?;
        Self::from_inventory(&text)
    }

    pub fn from_chars(chars: &str) -> Result<Self, PhonologyError> {
        let lines: Vec<String> = chars.chars().map(String::from).collect();
        Self::from_inventory(&lines.join("\n"))
    }

    /// `a`–`z`, hyphen, apostrophe and underscore (29 + 4 reserved = 33).
    pub fn default_english() -> Self {
        Self::from_inventory(DEFAULT_GRAPHEMES).expect("bundled grapheme inventory is valid")
    }

    pub fn char_id(&self, c: char) -> Option<usize> {
        let mut buf = [0u8; 4];
        self.0.id(c.encode_utf8(&mut buf))
    }

    /// Encode a word (lowercased) into character indices.
    pub fn encode(&self, word: &str) -> Result<GraphemeWord, PhonologyError> {
        let surface = word.trim().to_lowercase();
        if surface.is_empty() {
            return Err(PhonologyError::EmptyInput);
        }
        let chars = surface
            .chars()
            .map(|c| self.char_id(c).ok_or(PhonologyError::NotInVocabulary(c)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(GraphemeWord { chars, surface })
    }

    /// Surface string for indices, reserved symbols skipped.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&i| !self.0.is_special(i))
            .filter_map(|&i| self.0.token(i))
            .collect()
    }
}

impl std::ops::Deref for GraphemeVocabulary {
    type Target = Vocabulary;
    fn deref(&self) -> &Vocabulary {
        &self.0
    }
}

/// Written form of one word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphemeWord {
    pub chars: Vec<usize>,
    pub surface: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_sizes() {
        let p = PhonemeVocabulary::default_english();
        let g = GraphemeVocabulary::default_english();
        assert_eq!(p.len(), 73);
        assert_eq!(g.len(), 33);
        for c in 'a'..='z' {
            assert!(g.char_id(c).is_some());
        }
        assert!(g.char_id('-').is_some());
    }

    #[test]
    fn index_is_bijective() {
        let p = PhonemeVocabulary::default_english();
        for (i, t) in p.tokens().iter().enumerate() {
            assert_eq!(p.id(t), Some(i));
            assert_eq!(p.token(i), Some(t.as_str()));
        }
        assert!(p.symbols().iter().all(|t| !t.starts_with('<')));
    }

    #[test]
    fn duplicates_rejected() {
        assert!(PhonemeVocabulary::from_inventory("a\nb\na\n").is_err());
        assert!(GraphemeVocabulary::from_inventory("ab\n").is_err());
    }

    #[test]
    fn encode_decode_word() {
        let g = GraphemeVocabulary::default_english();
        let w = g.encode("Share-Point").unwrap();
        assert_eq!(w.surface, "share-point");
        assert_eq!(g.decode(&w.chars), "share-point");
        assert!(matches!(g.encode("naïve"), Err(PhonologyError::NotInVocabulary('ï'))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = PhonemeVocabulary::from_inventory("a\nb").unwrap();
        let b = PhonemeVocabulary::from_inventory("b\na").unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
