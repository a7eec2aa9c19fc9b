use serde::{Deserialize, Serialize};

use super::error::ModelError;

/// Architecture hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub enc_heads: usize,
    pub enc_ffn: usize,
    pub enc_dropout: f64,
    pub enc_blocks: usize,
    pub dec_heads: usize,
    pub dec_ffn: usize,
    pub dec_dropout: f64,
    pub dec_blocks: usize,
    pub mel_blocks: usize,
    pub mel_heads: usize,
    /// Self-attention width inside mel decoder blocks; must equal `d_model`
    /// because of the residual connections.
    pub mel_attn_dim: usize,
    /// Kernel sizes of the two convolutions in each mel decoder block.
    pub mel_conv_kernels: [usize; 2],
    /// Filters of those convolutions; the second must equal `d_model`.
    pub mel_conv_filters: [usize; 2],
    pub mel_dropout: f64,
    pub postnet_depth: usize,
    pub postnet_kernel: usize,
    pub postnet_filters: usize,
    pub out_kernel: usize,
    pub n_mels: usize,
    pub audio_feedback: bool,
    pub phoneme_vocab: usize,
    pub grapheme_vocab: usize,
    pub max_input_len: usize,
    pub max_output_len: usize,
    pub dur_kernel: usize,
    pub dur_filters: usize,
    pub dur_hidden: usize,
}

impl ModelConfig {
    /// The published architecture (about 60M parameters).
    pub fn full() -> Self {
        Self {
            d_model: 512,
            enc_heads: 2,
            enc_ffn: 2048,
            enc_dropout: 0.1,
            enc_blocks: 2,
            dec_heads: 2,
            dec_ffn: 2048,
            dec_dropout: 0.1,
            dec_blocks: 2,
            mel_blocks: 2,
            mel_heads: 2,
            mel_attn_dim: 512,
            mel_conv_kernels: [9, 9],
            mel_conv_filters: [1024, 512],
            mel_dropout: 0.1,
            postnet_depth: 6,
            postnet_kernel: 9,
            postnet_filters: 512,
            out_kernel: 9,
            n_mels: 40,
            audio_feedback: true,
            phoneme_vocab: 73,
            grapheme_vocab: 33,
            max_input_len: 20,
            max_output_len: 26,
            dur_kernel: 3,
            dur_filters: 256,
            dur_hidden: 256,
        }
    }

    /// Small model that trains in minutes on one core.
    pub fn desk() -> Self {
        Self {
            d_model: 64,
            enc_ffn: 256,
            dec_ffn: 256,
            mel_attn_dim: 64,
            mel_conv_kernels: [3, 3],
            mel_conv_filters: [128, 64],
            postnet_depth: 2,
            postnet_kernel: 3,
            postnet_filters: 64,
            out_kernel: 3,
            dur_kernel: 3,
            dur_filters: 64,
            dur_hidden: 64,
            ..Self::full()
        }
    }

    pub fn with_vocab_sizes(mut self, phonemes: usize, graphemes: usize) -> Self {
        self.phoneme_vocab = phonemes;
        self.grapheme_vocab = graphemes;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        let d = self.d_model;
        if d == 0 {
            return bad("d_model must be positive".into());
        }
        for (name, heads) in [
            ("enc", self.enc_heads),
            ("dec", self.dec_heads),
            ("mel", self.mel_heads),
        ] {
            if heads == 0 || !d.is_multiple_of(heads) {
                return bad(format!("{name}_heads={heads} must divide d_model={d}"));
            }
        }
        if self.mel_attn_dim != d {
            return bad(format!("mel_attn_dim={} must equal d_model={d}", self.mel_attn_dim));
        }
        if self.mel_conv_filters[1] != d {
            return bad(format!("second mel conv filter count must equal d_model={d}"));
        }
        let kernels = [
            self.mel_conv_kernels[0],
            self.mel_conv_kernels[1],
            self.postnet_kernel,
            self.out_kernel,
            self.dur_kernel,
        ];
        if kernels.iter().any(|k| k % 2 == 0) {
            return bad("convolution kernels must be odd".into());
        }
        for p in [self.enc_dropout, self.dec_dropout, self.mel_dropout] {
            if !(0.0..1.0).contains(&p) {
                return bad(format!("dropout {p} outside [0, 1)"));
            }
        }
        if self.n_mels == 0 || self.phoneme_vocab <= 4 || self.grapheme_vocab <= 4 {
            return bad("n_mels and vocabulary sizes must be positive".into());
        }
        if self.max_input_len == 0 || self.max_output_len == 0 {
            return bad("length limits must be positive".into());
        }
        if self.enc_ffn == 0 || self.dec_ffn == 0 || self.postnet_filters == 0 || self.dur_hidden == 0 {
            return bad("hidden sizes must be positive".into());
        }
        Ok(())
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}
