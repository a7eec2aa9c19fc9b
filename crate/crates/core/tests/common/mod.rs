#![allow(dead_code)]

use soundsquat_core::audio::{MelConfig, PhonemeAudioProfile};
use soundsquat_core::minilang::{generate, MiniLangConfig, MiniLexicon};
use soundsquat_core::model::{DataContext, Model, ModelConfig, TrainingExample};
use soundsquat_core::phonology::{GraphemeVocabulary, PhonemeVocabulary};
use soundsquat_core::Scalar;

pub struct Fixture {
    pub phonemes: PhonemeVocabulary,
    pub graphemes: GraphemeVocabulary,
    pub profiles: PhonemeAudioProfile,
    pub mel: MelConfig,
}

impl Fixture {
    pub fn new() -> Self {
        let phonemes = PhonemeVocabulary::default_english();
        Self {
            profiles: PhonemeAudioProfile::synthetic(&phonemes),
            graphemes: GraphemeVocabulary::default_english(),
            mel: MelConfig::default(),
            phonemes,
        }
    }

    pub fn context(&self) -> DataContext<'_> {
        DataContext {
            phonemes: &self.phonemes,
            graphemes: &self.graphemes,
            profiles: &self.profiles,
            mel: &self.mel,
            max_input_len: 20,
            max_output_len: 26,
        }
    }

    pub fn lexicon(&self, words: usize, seed: u64) -> MiniLexicon {
        generate(&MiniLangConfig {
            words,
            planted_pairs: (words / 20).min(30),
            seed,
        })
    }

    pub fn examples(&self, words: usize, seed: u64) -> Vec<TrainingExample> {
        let (ex, skipped) = self.context().build(&self.lexicon(words, seed).manifest_rows());
        assert!(skipped.is_empty(), "{skipped:?}");
        ex
    }

    pub fn model<T: Scalar>(&self, config: ModelConfig, seed: u64) -> Model<T> {
        Model::new(
            config,
            self.phonemes.clone(),
            self.graphemes.clone(),
            self.mel.clone(),
            seed,
        )
        .unwrap()
    }
}

/// A few thousand parameters; fast enough for finite differences.
pub fn tiny_config(d: usize, feedback: bool) -> ModelConfig {
    ModelConfig {
        d_model: d,
        enc_ffn: 2 * d,
        dec_ffn: 2 * d,
        enc_blocks: 1,
        dec_blocks: 1,
        mel_blocks: 1,
        mel_attn_dim: d,
        mel_conv_kernels: [3, 3],
        mel_conv_filters: [2 * d, d],
        postnet_depth: 1,
        postnet_kernel: 3,
        postnet_filters: d,
        out_kernel: 3,
        dur_kernel: 3,
        dur_filters: d,
        dur_hidden: d,
        audio_feedback: feedback,
        ..ModelConfig::desk()
    }
}
