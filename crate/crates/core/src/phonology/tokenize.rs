use super::error::PhonologyError;
use super::vocab::PhonemeVocabulary;

/// Tokenized phoneme string for one word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IpaSequence {
    pub token_ids: Vec<usize>,
    /// The transcription with surrounding `/…/` or `[…]` delimiters removed.
    pub surface: String,
}

impl IpaSequence {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Concatenated token strings; UNK positions render as `<unk>`.
    pub fn detokenize(&self, vocab: &PhonemeVocabulary) -> String {
        self.token_ids
            .iter()
            .map(|&i| vocab.token(i).unwrap_or(super::vocab::UNK))
            .collect()
    }

    pub fn tokens<'v>(&self, vocab: &'v PhonemeVocabulary) -> Vec<&'v str> {
        self.token_ids
            .iter()
            .map(|&i| vocab.token(i).unwrap_or(super::vocab::UNK))
            .collect()
    }
}

/// Strip whitespace and transcription delimiters.
pub fn strip_delimiters(surface: &str) -> &str {
    let s = surface.trim();
    let s = s
        .strip_prefix('/')
        .and_then(|x| x.strip_suffix('/'))
        .or_else(|| s.strip_prefix('[').and_then(|x| x.strip_suffix(']')))
        .unwrap_or(s);
    s.trim()
}

/// Greedy longest-match segmentation of `text` against `is_token`.
///
/// Characters that start no token come back as single-character segments
/// flagged `false`.
pub(crate) fn segment(text: &str, max_chars: usize, is_token: impl Fn(&str) -> bool) -> Vec<(&str, bool)> {
    let bounds: Vec<usize> = text
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(text.len()))
        .collect();
    let nchars = bounds.len() - 1;
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < nchars {
        let mut matched = None;
        for width in (1..=max_chars.min(nchars - pos)).rev() {
            let piece = &text[bounds[pos]..bounds[pos + width]];
            if is_token(piece) {
                matched = Some((piece, width));
                break;
            }
        }
        match matched {
            Some((piece, width)) => {
                out.push((piece, true));
                pos += width;
            }
            None => {
                out.push((&text[bounds[pos]..bounds[pos + 1]], false));
                pos += 1;
            }
        }
    }
    out
}

/// Split an IPA transcription into vocabulary tokens.
pub fn tokenize_ipa(surface: &str, vocab: &PhonemeVocabulary) -> Result<IpaSequence, PhonologyError> {
    let text = strip_delimiters(surface);
    if text.is_empty() {
        return Err(PhonologyError::EmptyInput);
    }
    let unk = vocab.specials().unk;
    let token_ids = segment(text, vocab.max_token_chars(), |t| {
        vocab.id(t).is_some_and(|i| !vocab.is_special(i))
    })
    .into_iter()
    .filter(|(piece, _)| !piece.trim().is_empty())
    .map(|(piece, known)| if known { vocab.id(piece).unwrap() } else { unk })
    .collect::<Vec<_>>();
    if token_ids.is_empty() {
        return Err(PhonologyError::EmptyInput);
    }
    Ok(IpaSequence {
        token_ids,
        surface: text.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn stress_mark_is_a_token() {
        let v = PhonemeVocabulary::default_english();
        let seq = tokenize_ipa("/bˈaɪ/", &v).unwrap();
        assert_eq!(seq.tokens(&v), vec!["b", "ˈ", "aɪ"]);
        assert_eq!(seq.surface, "bˈaɪ");
    }

    #[test]
    fn empty_input() {
        let v = PhonemeVocabulary::default_english();
        assert!(matches!(tokenize_ipa("", &v), Err(PhonologyError::EmptyInput)));
        assert!(matches!(tokenize_ipa(" // ", &v), Err(PhonologyError::EmptyInput)));
    }

    #[test]
    fn unknown_codepoint_becomes_unk() {
        // hand segmentation of "aʎbc" over {a, b, c, bc, ab}: a | ʎ→UNK | bc
        let v = PhonemeVocabulary::from_inventory("a\nb\nc\nbc\nab").unwrap();
        let seq = tokenize_ipa("aʎbc", &v).unwrap();
        assert_eq!(
            seq.token_ids,
            vec![v.id("a").unwrap(), v.specials().unk, v.id("bc").unwrap()]
        );
        assert_eq!(seq.detokenize(&v), "a<unk>bc");
    }

    #[test]
    fn longest_match_wins() {
        let v = PhonemeVocabulary::default_english();
        let seq = tokenize_ipa("tʃɔːɹ", &v).unwrap();
        assert_eq!(seq.tokens(&v), vec!["tʃ", "ɔːɹ"]);
    }

    fn inventory_without_prefix_clashes() -> PhonemeVocabulary {
        // tokens where no concatenation of two tokens forms a longer token
        PhonemeVocabulary::from_inventory("p\nb\nk\nɡ\næ\nɪ\nʃ\nˈ\naɪ\noʊ\ntʃ").unwrap()
    }

    proptest! {
        #[test]
        fn roundtrip_over_token_concatenations(ids in proptest::collection::vec(4usize..15, 1..12)) {
            let v = inventory_without_prefix_clashes();
            let text: String = ids.iter().map(|&i| v.token(i).unwrap()).collect();
            let seq = tokenize_ipa(&text, &v).unwrap();
            prop_assert_eq!(seq.detokenize(&v), text);
        }
    }
}
