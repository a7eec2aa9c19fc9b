//! Training examples and dataset assembly.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::error::ModelError;
use crate::audio::{
    read_wav, synth_phonemes, to_mel, AudioSource, DurationVector, ManifestRow, MelConfig, MelSpectrogram,
    PhonemeAudioProfile,
};
use crate::phonology::{tokenize_ipa, GraphemeVocabulary, GraphemeWord, IpaSequence, PhonemeVocabulary};

/// One word with its transcription and (optionally) its audio modalities.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub ipa: IpaSequence,
    pub grapheme: GraphemeWord,
    pub mel: Option<MelSpectrogram>,
    pub durations: Option<DurationVector>,
}

impl TrainingExample {
    pub fn word(&self) -> &str {
        &self.grapheme.surface
    }

    /// Durations must cover the phonemes and sum to the frame count.
    pub fn validate(&self) -> Result<(), ModelError> {
        if let Some(d) = &self.durations {
            if d.len() != self.ipa.len() {
                return Err(ModelError::LengthMismatch {
                    expected: self.ipa.len(),
                    got: d.len(),
                });
            }
            if let Some(m) = &self.mel {
                if d.total() != m.n_frames() {
                    return Err(ModelError::FrameMismatch {
                        sum: d.total(),
                        frames: m.n_frames(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Everything needed to turn `(word, ipa)` pairs into examples.
#[derive(Debug, Clone)]
pub struct DataContext<'a> {
    pub phonemes: &'a PhonemeVocabulary,
    pub graphemes: &'a GraphemeVocabulary,
    pub profiles: &'a PhonemeAudioProfile,
    pub mel: &'a MelConfig,
    pub max_input_len: usize,
    pub max_output_len: usize,
}

impl DataContext<'_> {
    fn text_only(&self, word: &str, ipa: &str) -> Result<TrainingExample, ModelError> {
        let ipa = tokenize_ipa(ipa, self.phonemes)?;
        if ipa.len() > self.max_input_len {
            return Err(ModelError::InputTooLong {
                len: ipa.len(),
                max: self.max_input_len,
            });
        }
        let grapheme = self.graphemes.encode(word)?;
        if grapheme.chars.len() > self.max_output_len {
            return Err(ModelError::HistoryTooLong {
                len: grapheme.chars.len(),
                max: self.max_output_len,
            });
        }
        Ok(TrainingExample {
            ipa,
            grapheme,
            mel: None,
            durations: None,
        })
    }

    /// Example with synthetic audio and exact durations.
    pub fn synthetic(&self, word: &str, ipa: &str) -> Result<TrainingExample, ModelError> {
        let mut ex = self.text_only(word, ipa)?;
        let (wave, durations) = synth_phonemes(&ex.ipa, self.phonemes, self.profiles, self.mel)?;
        ex.mel = Some(to_mel(&wave, self.mel)?);
        ex.durations = Some(durations);
        ex.validate()?;
        Ok(ex)
    }

    /// Example from a recording; durations are left for the predictor.
    pub fn recorded(&self, word: &str, ipa: &str, path: &std::path::Path) -> Result<TrainingExample, ModelError> {
        let mut ex = self.text_only(word, ipa)?;
        ex.mel = Some(to_mel(&read_wav(path)?, self.mel)?);
        Ok(ex)
    }

    pub fn from_row(&self, row: &ManifestRow) -> Result<TrainingExample, ModelError> {
        match &row.audio {
            AudioSource::Synth => self.synthetic(&row.word, &row.ipa),
            AudioSource::File(p) => self.recorded(&row.word, &row.ipa, p),
        }
    }

    /// Build examples for every row; failures are collected, not fatal.
    pub fn build(&self, rows: &[ManifestRow]) -> (Vec<TrainingExample>, Vec<(String, String)>) {
        let mut ok = Vec::with_capacity(rows.len());
        let mut skipped = Vec::new();
        for row in rows {
            match self.from_row(row) {
                Ok(ex) => ok.push(ex),
                Err(e) => skipped.push((row.word.clone(), e.to_string())),
            }
        }
        (ok, skipped)
    }
}

/// Seeded 80/10/10 partition of `0..n` into (train, validation, test).
pub fn split_indices(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = n / 10;
    let n_test = n / 10;
    let test = idx.split_off(n - n_test);
    let val = idx.split_off(n - n_test - n_val);
    (idx, val, test)
}
