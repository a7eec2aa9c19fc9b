use std::collections::HashSet;
use std::path::Path;

use super::error::PhonologyError;

/// Lowercase, dedupe (first occurrence wins) and drop blank lines.
pub fn parse_wordlist(text: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    text.lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|w| !w.is_empty() && !w.starts_with('#'))
        .filter(|w| seen.insert(w.clone()))
        .collect()
}

pub fn load_wordlist(path: impl AsRef<Path>) -> Result<Vec<String>, PhonologyError> {
    let text = std::fs::read_to_string(&path).map_err(|e| PhonologyError::io(&path, e))?;
    let words = parse_wordlist(&text);
    if words.is_empty() {
        return Err(PhonologyError::EmptyWordlist);
    }
    Ok(words)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dedup_and_lowercase() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.txt");
        std::fs::write(&p, "By\nby\ncat\n\n").unwrap();
        assert_eq!(load_wordlist(&p).unwrap(), vec!["by", "cat"]);
        std::fs::write(&p, "").unwrap();
        assert!(matches!(load_wordlist(&p), Err(PhonologyError::EmptyWordlist)));
        assert!(matches!(
            load_wordlist(dir.path().join("nope")),
            Err(PhonologyError::Io { .. })
        ));
    }
}
