//! Seeded synthetic lexicon with ambiguous spelling rules and planted
//! homophone pairs, used as a hermetic training and evaluation corpus.

use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::{AudioSource, ManifestRow};

/// `(phoneme, [(spelling, weight, allowed word-initially)])`.
type Rule = (&'static str, &'static [(&'static str, u32, bool)]);

const ONSETS: &[Rule] = &[
    ("p", &[("p", 1, true)]),
    ("b", &[("b", 1, true)]),
    ("t", &[("t", 1, true)]),
    ("d", &[("d", 1, true)]),
    ("k", &[("c", 5, true), ("k", 3, true), ("ck", 2, false)]),
    ("ɡ", &[("g", 1, true)]),
    ("f", &[("f", 7, true), ("ph", 3, true)]),
    ("v", &[("v", 1, true)]),
    ("s", &[("s", 1, true)]),
    ("z", &[("z", 1, true)]),
    ("m", &[("m", 1, true)]),
    ("n", &[("n", 1, true)]),
    ("l", &[("l", 1, true)]),
    ("ɹ", &[("r", 1, true)]),
    ("w", &[("w", 1, true)]),
    ("h", &[("h", 1, true)]),
    ("ʃ", &[("sh", 1, true)]),
    ("tʃ", &[("ch", 6, true), ("tch", 4, false)]),
    ("dʒ", &[("j", 1, true)]),
];

const VOWELS: &[Rule] = &[
    ("æ", &[("a", 1, true)]),
    ("ɛ", &[("e", 1, true)]),
    ("ɪ", &[("i", 1, true)]),
    ("ɑ", &[("o", 1, true)]),
    ("ʌ", &[("u", 1, true)]),
    ("iː", &[("ee", 5, true), ("ea", 3, true), ("ie", 2, true)]),
    ("eɪ", &[("ay", 4, true), ("ai", 4, true), ("ei", 2, true)]),
    ("oʊ", &[("o", 4, true), ("oa", 3, true), ("ow", 3, true)]),
    ("uː", &[("oo", 5, true), ("ue", 3, true), ("ew", 2, true)]),
    ("aɪ", &[("y", 5, true), ("igh", 5, true)]),
];

const CODAS: &[&str] = &["p", "t", "k", "d", "f", "m", "n", "l", "s", "ʃ", "tʃ"];

fn rule(sym: &str) -> &'static [(&'static str, u32, bool)] {
    ONSETS
        .iter()
        .chain(VOWELS)
        .find(|(s, _)| *s == sym)
        .map(|(_, r)| *r)
        .expect("symbol has a spelling rule")
}

fn is_ambiguous(sym: &str) -> bool {
    rule(sym).len() > 1
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MiniLangConfig {
    pub words: usize,
    pub planted_pairs: usize,
    pub seed: u64,
}

impl Default for MiniLangConfig {
    fn default() -> Self {
        Self {
            words: 500,
            planted_pairs: 30,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MiniEntry {
    pub word: String,
    pub ipa: String,
}

/// Generated lexicon; `planted` holds index pairs into `entries`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MiniLexicon {
    pub entries: Vec<MiniEntry>,
    pub planted: Vec<(usize, usize)>,
}

struct Gen {
    rng: ChaCha8Rng,
}

impl Gen {
    fn phonemes(&mut self) -> Vec<&'static str> {
        let syllables = self.rng.gen_range(1..=3);
        let mut out = Vec::new();
        for _ in 0..syllables {
            out.push(ONSETS.choose(&mut self.rng).unwrap().0);
            out.push(VOWELS.choose(&mut self.rng).unwrap().0);
            if self.rng.gen_bool(0.4) {
                out.push(CODAS.choose(&mut self.rng).unwrap());
            }
        }
        out
    }

    fn spell_one(&mut self, sym: &str, initial: bool) -> &'static str {
        let opts: Vec<_> = rule(sym).iter().filter(|o| o.2 || !initial).collect();
        opts.choose_weighted(&mut self.rng, |o| o.1).unwrap().0
    }

    fn spell(&mut self, phones: &[&str]) -> String {
        phones
            .iter()
            .enumerate()
            .map(|(i, p)| self.spell_one(p, i == 0))
            .collect()
    }

    /// Every spelling of `phones`, for pair construction.
    fn all_spellings(phones: &[&str]) -> Vec<String> {
        let mut acc = vec![String::new()];
        for (i, p) in phones.iter().enumerate() {
            let opts: Vec<&str> = rule(p).iter().filter(|o| o.2 || i != 0).map(|o| o.0).collect();
            acc = acc
                .iter()
                .flat_map(|pre| opts.iter().map(move |o| format!("{pre}{o}")))
                .collect();
        }
        acc
    }
}

fn ipa_of(phones: &[&str]) -> String {
    format!("ˈ{}", phones.concat())
}

/// Build a lexicon of `cfg.words` entries: unique transcriptions and
/// spellings everywhere except the planted pairs, which share a
/// transcription with at most two ambiguous phonemes.
pub fn generate(cfg: &MiniLangConfig) -> MiniLexicon {
    assert!(cfg.planted_pairs * 2 <= cfg.words, "too many planted pairs");
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
    };
    let mut ipas: HashSet<String> = HashSet::new();
    let mut spellings: HashSet<String> = HashSet::new();
    let mut entries = Vec::with_capacity(cfg.words);
    let mut planted = Vec::with_capacity(cfg.planted_pairs);
    while planted.len() < cfg.planted_pairs {
        let phones = g.phonemes();
        let ambiguous = phones.iter().filter(|p| is_ambiguous(p)).count();
        if !(1..=2).contains(&ambiguous) {
            continue;
        }
        let ipa = ipa_of(&phones);
        if ipas.contains(&ipa) {
            continue;
        }
        let mut options: Vec<String> = Gen::all_spellings(&phones)
            .into_iter()
            .filter(|s| !spellings.contains(s))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if options.len() < 2 {
            continue;
        }
        let first = g.spell(&phones);
        let first = if spellings.contains(&first) {
            options.remove(0)
        } else {
            first
        };
        options.retain(|s| *s != first);
        let Some(second) = options.choose(&mut g.rng).cloned() else {
            continue;
        };
        ipas.insert(ipa.clone());
        spellings.insert(first.clone());
        spellings.insert(second.clone());
        planted.push((entries.len(), entries.len() + 1));
        entries.push(MiniEntry {
            word: first,
            ipa: ipa.clone(),
        });
        entries.push(MiniEntry { word: second, ipa });
    }
    while entries.len() < cfg.words {
        let phones = g.phonemes();
        let ipa = ipa_of(&phones);
        let word = g.spell(&phones);
        if ipas.contains(&ipa) || spellings.contains(&word) {
            continue;
        }
        ipas.insert(ipa.clone());
        spellings.insert(word.clone());
        entries.push(MiniEntry { word, ipa });
    }
    // interleave pairs with the rest so splits do not see them as a block
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.shuffle(&mut g.rng);
    let mut position = vec![0; entries.len()];
    for (new, &old) in order.iter().enumerate() {
        position[old] = new;
    }
    let entries = order.iter().map(|&i| entries[i].clone()).collect();
    let planted = planted.iter().map(|&(a, b)| (position[a], position[b])).collect();
    MiniLexicon { entries, planted }
}

impl MiniLexicon {
    pub fn words(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.word.clone()).collect()
    }

    /// `word<TAB>ipa` lines for the dictionary backend.
    pub fn dictionary_tsv(&self) -> String {
        self.entries
            .iter()
            .map(|e| format!("{}\t{}\n", e.word, e.ipa))
            .collect()
    }

    pub fn manifest_rows(&self) -> Vec<ManifestRow> {
        self.entries
            .iter()
            .map(|e| ManifestRow {
                word: e.word.clone(),
                ipa: e.ipa.clone(),
                audio: AudioSource::Synth,
            })
            .collect()
    }
}
