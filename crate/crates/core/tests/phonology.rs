//! Word → IPA → tokens through the public API, with files on disk.

use std::io::Write;

use soundsquat_core::phonology::{
    load_wordlist, map_phonemes, to_ipa, tokenize_ipa, DictionaryBackend, PhonemeMap, PhonemeVocabulary,
    PhonologyError, ProcessBackend,
};

fn file(text: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(text.as_bytes()).unwrap();
    f
}

#[test]
fn by_transcribes_and_tokenizes_with_a_separate_stress_mark() {
    let vocab = PhonemeVocabulary::default_english();
    // A subprocess transcriber that knows one word.
    let script = "while IFS= read -r w; do case \"$w\" in by) echo '/bˈaɪ/';; *) echo;; esac; done";
    let g2p = ProcessBackend::spawn("sh", &["-c".into(), script.into()], "en-us").unwrap();
    let ipa = to_ipa("by", &g2p, "en-us").unwrap();
    assert_eq!(ipa, "/bˈaɪ/");
    let seq = tokenize_ipa(&ipa, &vocab).unwrap();
    assert_eq!(seq.tokens(&vocab), ["b", "ˈ", "aɪ"]);
    assert_eq!(seq.detokenize(&vocab), "bˈaɪ");
}

#[test]
fn dictionary_file_backend() {
    let dict = file("# word\tipa\ncat\tkæt\nBy\tbˈaɪ\n");
    let d = DictionaryBackend::load(dict.path(), "en-us").unwrap();
    assert_eq!(to_ipa("cat", &d, "en-us").unwrap(), "kæt");
    assert_eq!(to_ipa("BY", &d, "en-us").unwrap(), "bˈaɪ");
    assert!(matches!(to_ipa("zzzz", &d, "en-us"), Err(PhonologyError::NotInDictionary(w)) if w == "zzzz"));
    assert!(matches!(
        DictionaryBackend::load("/no/such/dictionary.tsv", "en-us"),
        Err(PhonologyError::BackendUnavailable(_))
    ));
}

#[test]
fn wordlist_is_lowercased_deduplicated_and_ordered() {
    let f = file("By\nby\ncat\n\n");
    assert_eq!(load_wordlist(f.path()).unwrap(), ["by", "cat"]);
    let empty = file("\n  \n");
    assert!(matches!(
        load_wordlist(empty.path()),
        Err(PhonologyError::EmptyWordlist)
    ));
}

#[test]
fn unknown_codepoint_becomes_one_unk() {
    let vocab = PhonemeVocabulary::default_english();
    let seq = tokenize_ipa("bʘt", &vocab).unwrap();
    assert_eq!(seq.token_ids.len(), 3);
    assert_eq!(seq.token_ids[1], vocab.specials().unk);
    assert!(matches!(tokenize_ipa("  ", &vocab), Err(PhonologyError::EmptyInput)));
}

#[test]
fn foreign_inventories_map_into_the_model_vocabulary() {
    let vocab = PhonemeVocabulary::default_english();
    for lang in ["it", "pt", "es"] {
        let map = PhonemeMap::bundled(lang, &vocab).unwrap();
        // In-vocabulary sequences pass through untouched.
        let native = map_phonemes(&["k", "æ", "t"], &map).unwrap();
        assert_eq!(native.tokens(&vocab), ["k", "æ", "t"], "{lang}");
    }
    let pt = PhonemeMap::bundled("pt", &vocab).unwrap();
    let mapped = pt.map_surface("ˈfiʎu").unwrap();
    assert!(
        mapped.token_ids.iter().all(|&t| !vocab.is_special(t)),
        "{:?}",
        mapped.tokens(&vocab)
    );
    // Mapping the output again changes nothing.
    let again = map_phonemes(&mapped.tokens(&vocab), &pt).unwrap();
    assert_eq!(again.token_ids, mapped.token_ids);
}

#[test]
fn hand_built_map_with_a_one_to_many_entry() {
    let vocab = PhonemeVocabulary::default_english();
    let map = PhonemeMap::from_tsv("ʎ\tl j\nɲ\tn j\nʁ\tɹ\n", &vocab).unwrap();
    let seq = map_phonemes(&["ʎ", "a"], &map).unwrap();
    assert_eq!(seq.tokens(&vocab), ["l", "j", "a"]);
    let err = map_phonemes(&["ʘ"], &PhonemeMap::from_tsv("ʎ\tl j\n", &vocab).unwrap());
    assert!(matches!(err, Err(PhonologyError::UnmappablePhoneme(t)) if t == ["ʘ"]));
}
