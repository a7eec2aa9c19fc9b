//! Grapheme-to-phoneme backends.
//!
//! Two interchangeable sources: a TSV pronunciation dictionary and a
//! long-lived external process speaking a line protocol (one word in, one
//! transcription out, UTF-8, flushed per line).

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use super::error::PhonologyError;

pub trait G2pBackend: Send + Sync {
    /// Language tag the backend transcribes, e.g. `en-us`.
    fn language(&self) -> &str;

    fn transcribe(&self, word: &str) -> Result<String, PhonologyError>;
}

/// Transcribe `word` with `backend`, which must be configured for `language`.
pub fn to_ipa(word: &str, backend: &dyn G2pBackend, language: &str) -> Result<String, PhonologyError> {
    let word = word.trim();
    if word.is_empty() {
        return Err(PhonologyError::EmptyInput);
    }
    if !backend.language().eq_ignore_ascii_case(language) {
        return Err(PhonologyError::BackendUnavailable(format!(
            "backend serves {}, not {language}",
            backend.language()
        )));
    }
    backend.transcribe(word)
}

/// Word → IPA lookup table read from `word<TAB>ipa` lines.
#[derive(Debug, Clone)]
pub struct DictionaryBackend {
    language: String,
    entries: HashMap<String, String>,
}

impl DictionaryBackend {
    pub fn from_tsv(text: &str, language: &str) -> Self {
        let entries = text
            .lines()
            .filter(|l| !l.trim_start().starts_with('#'))
            .filter_map(|l| {
                let (w, ipa) = l.split_once('\t')?;
                let (w, ipa) = (w.trim().to_lowercase(), ipa.trim());
                (!w.is_empty() && !ipa.is_empty()).then(|| (w, ipa.to_string()))
            })
            .collect();
        Self {
            language: language.to_string(),
            entries,
        }
    }

    pub fn load(path: impl AsRef<Path>, language: &str) -> Result<Self, PhonologyError> {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| PhonologyError::BackendUnavailable(format!("{}: {e}", path.as_ref().display())))?;
        Ok(Self::from_tsv(&text, language))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl G2pBackend for DictionaryBackend {
    fn language(&self) -> &str {
        &self.language
    }

    fn transcribe(&self, word: &str) -> Result<String, PhonologyError> {
        self.entries
            .get(&word.to_lowercase())
            .cloned()
            .ok_or_else(|| PhonologyError::NotInDictionary(word.to_string()))
    }
}

struct Pipe {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// External transcriber kept alive across calls; access is serialized.
pub struct ProcessBackend {
    language: String,
    pipe: Mutex<Pipe>,
}

impl ProcessBackend {
    /// Spawn `program args…`; any `{lang}` in the arguments is replaced by
    /// the language tag.
    pub fn spawn(program: &str, args: &[String], language: &str) -> Result<Self, PhonologyError> {
        let args: Vec<String> = args.iter().map(|a| a.replace("{lang}", language)).collect();
        let mut child = Command::new(program)
            .args(&args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| PhonologyError::BackendUnavailable(format!("{program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self {
            language: language.to_string(),
            pipe: Mutex::new(Pipe { child, stdin, stdout }),
        })
    }
}

impl G2pBackend for ProcessBackend {
    fn language(&self) -> &str {
        &self.language
    }

    fn transcribe(&self, word: &str) -> Result<String, PhonologyError> {
        if word.contains('\n') {
            return Err(PhonologyError::BackendUnavailable("word contains a newline".into()));
        }
        let mut pipe = self.pipe.lock().expect("g2p pipe poisoned");
        let broken = |e: std::io::Error| PhonologyError::BackendUnavailable(e.to_string());
        writeln!(pipe.stdin, "{word}").map_err(broken)?;
        pipe.stdin.flush().map_err(broken)?;
        let mut line = String::new();
        let n = pipe.stdout.read_line(&mut line).map_err(broken)?;
        if n == 0 {
            return Err(PhonologyError::BackendUnavailable("backend closed its output".into()));
        }
        let ipa = line.trim_end_matches(['\n', '\r']).trim().to_string();
        if ipa.is_empty() {
            return Err(PhonologyError::NotInDictionary(word.to_string()));
        }
        Ok(ipa)
    }
}

impl Drop for ProcessBackend {
    fn drop(&mut self) {
        if let Ok(pipe) = self.pipe.get_mut() {
            let _ = pipe.child.kill();
            let _ = pipe.child.wait();
        }
    }
}
