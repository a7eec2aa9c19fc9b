//! Vocabularies, IPA tokenization, grapheme-to-phoneme backends and the
//! cross-language phoneme map.

mod error;
mod g2p;
mod phonemap;
mod tokenize;
mod vocab;
mod wordlist;

pub use error::PhonologyError;
pub use g2p::{to_ipa, DictionaryBackend, G2pBackend, ProcessBackend};
pub use phonemap::{map_phonemes, FeatureTable, PhonemeMap};
pub use tokenize::{strip_delimiters, tokenize_ipa, IpaSequence};
pub use vocab::{GraphemeVocabulary, GraphemeWord, PhonemeVocabulary, Specials, Vocabulary, BOS, EOS, PAD, UNK};
pub use wordlist::{load_wordlist, parse_wordlist};
