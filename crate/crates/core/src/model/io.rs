//! Model checkpoints: the tensor container plus a JSON description of the
//! configuration, vocabularies and normalization.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::duration::DurationTable;
use super::error::ModelError;
use super::net::{MelNorm, Model};
use crate::audio::MelConfig;
use crate::nn::checkpoint::{read_checkpoint, write_checkpoint};
use crate::phonology::{GraphemeVocabulary, PhonemeVocabulary};
use crate::scalar::Scalar;

const KIND: &str = "soundsquat-model";

#[derive(Debug, Serialize, Deserialize)]
struct Metadata {
    kind: String,
    config: ModelConfig,
    mel_config: MelConfig,
    mel_norm: MelNorm,
    phonemes: Vec<String>,
    phoneme_hash: String,
    graphemes: Vec<String>,
    grapheme_hash: String,
    duration_table: Option<DurationTable>,
}

impl<T: Scalar> Model<T> {
    fn metadata(&self) -> serde_json::Value {
        serde_json::to_value(Metadata {
            kind: KIND.into(),
            config: self.config.clone(),
            mel_config: self.mel_config.clone(),
            mel_norm: self.mel_norm.clone(),
            phonemes: self.phonemes.symbols().to_vec(),
            phoneme_hash: self.phonemes.hash(),
            graphemes: self.graphemes.symbols().to_vec(),
            grapheme_hash: self.graphemes.hash(),
            duration_table: self.durations.table.clone(),
        })
        .expect("metadata serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        let f = File::create(&tmp).map_err(|e| ModelError::io(&tmp, e))?;
        write_checkpoint(BufWriter::new(f), &self.params, self.metadata())?;
        std::fs::rename(&tmp, path).map_err(|e| ModelError::io(path, e))
    }

    /// Rebuild the model described by a checkpoint and load its weights.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| ModelError::io(path, e))?;
        let ckpt = read_checkpoint(BufReader::new(f))?;
        let meta: Metadata =
            serde_json::from_value(ckpt.metadata.clone()).map_err(|e| ModelError::Incompatible(e.to_string()))?;
        if meta.kind != KIND {
            return Err(ModelError::Incompatible(format!(
                "unexpected checkpoint kind {:?}",
                meta.kind
            )));
        }
        let phonemes = PhonemeVocabulary::from_tokens(meta.phonemes)?;
        let graphemes = GraphemeVocabulary::from_inventory(&meta.graphemes.join("\n"))?;
        if phonemes.hash() != meta.phoneme_hash || graphemes.hash() != meta.grapheme_hash {
            return Err(ModelError::Incompatible("vocabulary hash mismatch".into()));
        }
        let mut model = Model::new(meta.config, phonemes, graphemes, meta.mel_config, 0)?;
        ckpt.restore(&mut model.params)?;
        model.mel_norm = meta.mel_norm;
        model.durations.table = meta.duration_table;
        Ok(model)
    }
}
