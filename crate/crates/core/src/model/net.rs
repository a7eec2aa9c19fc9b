//! The network: IPA encoder, grapheme decoder and the mel branch.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::duration::DurationPredictor;
use super::error::ModelError;
use crate::audio::{DurationVector, MelConfig};
use crate::nn::layers::{
    causal_mask, sinusoidal_positions, Conv1d, FeedForward, LayerNorm, Linear, MultiHeadAttention,
};
use crate::nn::{Graph, NodeId, ParamId, ParamStore, Tensor};
use crate::phonology::{GraphemeVocabulary, IpaSequence, PhonemeVocabulary};
use crate::scalar::Scalar;

const POS_TABLE: usize = 512;

/// Per-channel standardization applied to mel targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MelNorm {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl MelNorm {
    pub fn identity(n_mels: usize) -> Self {
        Self {
            mean: vec![0.0; n_mels],
            std: vec![1.0; n_mels],
        }
    }

    /// Statistics over all frames of `mels` (each `[T × n_mels]`).
    pub fn fit<'a>(mels: impl IntoIterator<Item = &'a Tensor<f64>>, n_mels: usize) -> Self {
        let mut sum = vec![0.0; n_mels];
        let mut sq = vec![0.0; n_mels];
        let mut n = 0usize;
        for m in mels {
            for r in 0..m.rows() {
                for (c, &v) in m.row(r).iter().enumerate() {
                    sum[c] += v;
                    sq[c] += v * v;
                }
                n += 1;
            }
        }
        if n == 0 {
            return Self::identity(n_mels);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| (s / n as f64 - m * m).max(0.0).sqrt().max(1e-3))
            .collect();
        Self { mean, std }
    }

    pub fn apply<T: Scalar>(&self, mel: &Tensor<f64>) -> Tensor<T> {
        let cols = mel.cols();
        let data = mel
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| T::lit((v - self.mean[i % cols]) / self.std[i % cols]))
            .collect();
        Tensor::matrix(mel.rows(), cols, data).expect("same shape")
    }

    pub fn invert<T: Scalar>(&self, norm: &Tensor<T>) -> Tensor<f64> {
        let cols = norm.cols();
        let data = norm
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v.as_f64() * self.std[i % cols] + self.mean[i % cols])
            .collect();
        Tensor::matrix(norm.rows(), cols, data).expect("same shape")
    }
}

#[derive(Debug, Clone)]
struct EncoderBlock {
    attn: MultiHeadAttention,
    norm1: LayerNorm,
    ffn: FeedForward,
    norm2: LayerNorm,
}

#[derive(Debug, Clone)]
struct DecoderBlock {
    self_attn: MultiHeadAttention,
    norm1: LayerNorm,
    cross_attn: MultiHeadAttention,
    norm2: LayerNorm,
    ffn: FeedForward,
    norm3: LayerNorm,
}

/// Self-attention followed by a pair of convolutions, each with Add & Norm.
#[derive(Debug, Clone)]
struct MelBlock {
    attn: MultiHeadAttention,
    norm1: LayerNorm,
    conv1: Conv1d,
    conv2: Conv1d,
    norm2: LayerNorm,
}

#[derive(Debug, Clone)]
struct Layers {
    phoneme_emb: ParamId,
    encoder: Vec<EncoderBlock>,
    grapheme_emb: ParamId,
    decoder: Vec<DecoderBlock>,
    out: Linear,
    mel: Vec<MelBlock>,
    postnet: Vec<Conv1d>,
    mel_out: Conv1d,
}

/// The phoneme-to-grapheme model with its mel branch and duration predictor.
#[derive(Debug, Clone)]
pub struct Model<T: Scalar> {
    pub config: ModelConfig,
    pub phonemes: PhonemeVocabulary,
    pub graphemes: GraphemeVocabulary,
    pub mel_config: MelConfig,
    pub mel_norm: MelNorm,
    pub params: ParamStore<T>,
    pub durations: DurationPredictor,
    layers: Layers,
    pos: Tensor<T>,
}

fn add_norm<T: Scalar>(
    g: &mut Graph<'_, T>,
    x: NodeId,
    y: NodeId,
    norm: &LayerNorm,
    dropout: f64,
) -> Result<NodeId, ModelError> {
    let y = g.dropout(y, dropout)?;
    let s = g.add(x, y)?;
    Ok(norm.forward(g, s)?)
}

impl<T: Scalar> Model<T> {
    /// Fresh model with weights drawn from `seed`.
    pub fn new(
        config: ModelConfig,
        phonemes: PhonemeVocabulary,
        graphemes: GraphemeVocabulary,
        mel_config: MelConfig,
        seed: u64,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        mel_config.validate()?;
        if config.phoneme_vocab != phonemes.len() || config.grapheme_vocab != graphemes.len() {
            return Err(ModelError::InvalidConfig(format!(
                "config expects vocabularies of {}/{}, got {}/{}",
                config.phoneme_vocab,
                config.grapheme_vocab,
                phonemes.len(),
                graphemes.len()
            )));
        }
        if config.n_mels != mel_config.n_mels {
            return Err(ModelError::InvalidConfig(format!(
                "model emits {} mel channels, features have {}",
                config.n_mels, mel_config.n_mels
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let c = &config;
        let d = c.d_model;
        let emb_limit = (3.0 / d as f64).sqrt();
        let phoneme_emb = p.add_uniform("enc.emb", &[c.phoneme_vocab, d], emb_limit, &mut rng);
        let encoder = (0..c.enc_blocks)
            .map(|i| {
                let n = format!("enc.{i}");
                EncoderBlock {
                    attn: MultiHeadAttention::new(&mut p, &format!("{n}.attn"), d, c.enc_heads, &mut rng),
                    norm1: LayerNorm::new(&mut p, &format!("{n}.norm1"), d),
                    ffn: FeedForward::new(&mut p, &format!("{n}.ffn"), d, c.enc_ffn, &mut rng),
                    norm2: LayerNorm::new(&mut p, &format!("{n}.norm2"), d),
                }
            })
            .collect();
        let grapheme_emb = p.add_uniform("dec.emb", &[c.grapheme_vocab, d], emb_limit, &mut rng);
        let decoder = (0..c.dec_blocks)
            .map(|i| {
                let n = format!("dec.{i}");
                DecoderBlock {
                    self_attn: MultiHeadAttention::new(&mut p, &format!("{n}.self"), d, c.dec_heads, &mut rng),
                    norm1: LayerNorm::new(&mut p, &format!("{n}.norm1"), d),
                    cross_attn: MultiHeadAttention::new(&mut p, &format!("{n}.cross"), d, c.dec_heads, &mut rng),
                    norm2: LayerNorm::new(&mut p, &format!("{n}.norm2"), d),
                    ffn: FeedForward::new(&mut p, &format!("{n}.ffn"), d, c.dec_ffn, &mut rng),
                    norm3: LayerNorm::new(&mut p, &format!("{n}.norm3"), d),
                }
            })
            .collect();
        let out = Linear::new(&mut p, "dec.out", d, c.grapheme_vocab, &mut rng);
        let [k1, k2] = c.mel_conv_kernels;
        let [f1, f2] = c.mel_conv_filters;
        let mel = (0..c.mel_blocks)
            .map(|i| {
                let n = format!("mel.{i}");
                MelBlock {
                    attn: MultiHeadAttention::new(&mut p, &format!("{n}.attn"), d, c.mel_heads, &mut rng),
                    norm1: LayerNorm::new(&mut p, &format!("{n}.norm1"), d),
                    conv1: Conv1d::new(&mut p, &format!("{n}.conv1"), d, f1, k1, &mut rng),
                    conv2: Conv1d::new(&mut p, &format!("{n}.conv2"), f1, f2, k2, &mut rng),
                    norm2: LayerNorm::new(&mut p, &format!("{n}.norm2"), d),
                }
            })
            .collect();
        let postnet = (0..c.postnet_depth)
            .map(|i| {
                let cin = if i == 0 { d } else { c.postnet_filters };
                Conv1d::new(
                    &mut p,
                    &format!("mel.post.{i}"),
                    cin,
                    c.postnet_filters,
                    c.postnet_kernel,
                    &mut rng,
                )
            })
            .collect();
        let out_in = if c.postnet_depth == 0 { d } else { c.postnet_filters };
        let mel_out = Conv1d::new(&mut p, "mel.out", out_in, c.n_mels, c.out_kernel, &mut rng);
        let durations = DurationPredictor::new(&mut p, c, phonemes.len(), &mut rng);
        Ok(Self {
            mel_norm: MelNorm::identity(c.n_mels),
            pos: sinusoidal_positions(POS_TABLE, d),
            layers: Layers {
                phoneme_emb,
                encoder,
                grapheme_emb,
                decoder,
                out,
                mel,
                postnet,
                mel_out,
            },
            durations,
            params: p,
            config,
            phonemes,
            graphemes,
            mel_config,
        })
    }

    /// Positional table rows `0..len`.
    fn positions(&self, len: usize) -> Tensor<T> {
        let d = self.config.d_model;
        if len <= POS_TABLE {
            Tensor::matrix(len, d, self.pos.data()[..len * d].to_vec()).expect("slice of table")
        } else {
            sinusoidal_positions(len, d)
        }
    }

    fn embed(&self, g: &mut Graph<'_, T>, table: ParamId, ids: &[usize], dropout: f64) -> Result<NodeId, ModelError> {
        let t = g.param(table);
        let e = g.embedding(t, ids)?;
        let e = g.scale(e, T::lit((self.config.d_model as f64).sqrt()))?;
        let pe = g.input(self.positions(ids.len()));
        let x = g.add(e, pe)?;
        Ok(g.dropout(x, dropout)?)
    }

    pub fn check_input(&self, ids: &[usize]) -> Result<(), ModelError> {
        if ids.len() > self.config.max_input_len {
            return Err(ModelError::InputTooLong {
                len: ids.len(),
                max: self.config.max_input_len,
            });
        }
        if ids.is_empty() {
            return Err(crate::phonology::PhonologyError::EmptyInput.into());
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.config.phoneme_vocab) {
            return Err(ModelError::IndexOutOfRange {
                index: bad,
                bound: self.config.phoneme_vocab,
            });
        }
        Ok(())
    }

    /// Encoder memory `[K × d]` as a graph node.
    pub fn encode_node(&self, g: &mut Graph<'_, T>, ids: &[usize]) -> Result<NodeId, ModelError> {
        self.check_input(ids)?;
        let p = self.config.enc_dropout;
        let mut x = self.embed(g, self.layers.phoneme_emb, ids, p)?;
        for b in &self.layers.encoder {
            let a = b.attn.forward(g, x, x, None)?;
            x = add_norm(g, x, a, &b.norm1, p)?;
            let f = b.ffn.forward(g, x, p)?;
            x = add_norm(g, x, f, &b.norm2, p)?;
        }
        Ok(x)
    }

    /// Decoder logits `[L × V]` for teacher-forced `history` (starting at BOS).
    pub fn decode_node(&self, g: &mut Graph<'_, T>, memory: NodeId, history: &[usize]) -> Result<NodeId, ModelError> {
        let bos = self.graphemes.specials().bos;
        if history.first() != Some(&bos) {
            return Err(ModelError::MissingBos);
        }
        // BOS plus up to max_output_len characters plus the EOS step
        if history.len() > self.config.max_output_len + 1 {
            return Err(ModelError::HistoryTooLong {
                len: history.len(),
                max: self.config.max_output_len + 1,
            });
        }
        if let Some(&bad) = history.iter().find(|&&i| i >= self.config.grapheme_vocab) {
            return Err(ModelError::IndexOutOfRange {
                index: bad,
                bound: self.config.grapheme_vocab,
            });
        }
        let p = self.config.dec_dropout;
        let mask = causal_mask(history.len());
        let mut x = self.embed(g, self.layers.grapheme_emb, history, p)?;
        for b in &self.layers.decoder {
            let a = b.self_attn.forward(g, x, x, Some(&mask))?;
            x = add_norm(g, x, a, &b.norm1, p)?;
            let c = b.cross_attn.forward(g, x, memory, None)?;
            x = add_norm(g, x, c, &b.norm2, p)?;
            let f = b.ffn.forward(g, x, p)?;
            x = add_norm(g, x, f, &b.norm3, p)?;
        }
        Ok(self.layers.out.forward(g, x)?)
    }

    /// Mel prediction (standardized units) from regulated memory `[T × d]`.
    pub fn mel_node(&self, g: &mut Graph<'_, T>, regulated: NodeId) -> Result<NodeId, ModelError> {
        let frames = g.value(regulated).rows();
        if frames == 0 {
            return Err(ModelError::InvalidConfig("mel decoder needs at least one frame".into()));
        }
        let p = self.config.mel_dropout;
        let pe = g.input(self.positions(frames));
        let mut x = g.add(regulated, pe)?;
        for b in &self.layers.mel {
            let a = b.attn.forward(g, x, x, None)?;
            x = add_norm(g, x, a, &b.norm1, p)?;
            let h = b.conv1.forward(g, x)?;
            let h = g.relu(h)?;
            let h = g.dropout(h, p)?;
            let h = b.conv2.forward(g, h)?;
            x = add_norm(g, x, h, &b.norm2, p)?;
        }
        for conv in &self.layers.postnet {
            x = conv.forward(g, x)?;
            x = g.relu(x)?;
            x = g.dropout(x, p)?;
        }
        Ok(self.layers.mel_out.forward(g, x)?)
    }

    pub fn encode(&self, ipa: &IpaSequence) -> Result<Tensor<T>, ModelError> {
        self.encode_ids(&ipa.token_ids)
    }

    pub fn encode_ids(&self, ids: &[usize]) -> Result<Tensor<T>, ModelError> {
        let mut g = Graph::new(&self.params);
        let m = self.encode_node(&mut g, ids)?;
        Ok(g.value(m).clone())
    }

    /// Log-probabilities of the next character after `history`.
    pub fn decode_step_log(&self, memory: &Tensor<T>, history: &[usize]) -> Result<Vec<f64>, ModelError> {
        let mut g = Graph::new(&self.params);
        let m = g.input(memory.clone());
        let logits = self.decode_node(&mut g, m, history)?;
        let last = g.slice_rows(logits, history.len() - 1, 1)?;
        let lp = g.log_softmax(last)?;
        Ok(g.value(lp).to_f64_vec())
    }

    /// Next-character distribution after `history`.
    pub fn decode_step(&self, memory: &Tensor<T>, history: &[usize]) -> Result<Vec<f64>, ModelError> {
        Ok(self
            .decode_step_log(memory, history)?
            .into_iter()
            .map(f64::exp)
            .collect())
    }

    pub fn length_regulate(&self, memory: &Tensor<T>, durations: &DurationVector) -> Result<Tensor<T>, ModelError> {
        length_regulate(memory, durations)
    }

    /// Mel prediction in log-mel units from regulated memory.
    pub fn decode_mel(&self, regulated: &Tensor<T>) -> Result<Tensor<f64>, ModelError> {
        let mut g = Graph::new(&self.params);
        let r = g.input(regulated.clone());
        let out = self.mel_node(&mut g, r)?;
        Ok(self.mel_norm.invert(g.value(out)))
    }

    /// Parameter ids of the mel branch (decoder blocks, conv stack, output conv).
    pub fn mel_param_ids(&self) -> Vec<ParamId> {
        self.params
            .ids()
            .filter(|&id| self.params.name(id).starts_with("mel."))
            .collect()
    }

    /// Greedy decode, mainly for accuracy checks.
    pub fn greedy(&self, ipa: &IpaSequence) -> Result<String, ModelError> {
        let memory = self.encode(ipa)?;
        let s = self.graphemes.specials();
        let mut history = vec![s.bos];
        for _ in 0..=self.config.max_output_len {
            let lp = self.decode_step_log(&memory, &history)?;
            let next = lp
                .iter()
                .enumerate()
                .filter(|(i, _)| ![s.pad, s.bos, s.unk].contains(i))
                .fold(
                    (s.eos, f64::NEG_INFINITY),
                    |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) },
                )
                .0;
            if next == s.eos {
                break;
            }
            history.push(next);
        }
        Ok(self.graphemes.decode(&history[1..]))
    }
}

/// Repeat row `i` of `memory` `durations[i]` times.
pub fn length_regulate<T: Scalar>(memory: &Tensor<T>, durations: &DurationVector) -> Result<Tensor<T>, ModelError> {
    if durations.len() != memory.rows() {
        return Err(ModelError::LengthMismatch {
            expected: memory.rows(),
            got: durations.len(),
        });
    }
    let mut g = Graph::standalone();
    let m = g.input(memory.clone());
    let r = g.repeat_rows(m, &durations.0)?;
    Ok(g.value(r).clone())
}
