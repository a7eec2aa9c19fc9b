//! CTC-trained duration predictor: mel frames → per-frame phoneme posteriors,
//! whose forced alignment yields per-phoneme frame counts.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::error::ModelError;
use crate::audio::DurationVector;
use crate::nn::ctc::ctc_best_path;
use crate::nn::layers::{Conv1d, Linear, Lstm};
use crate::nn::{Graph, NodeId, ParamStore, Tensor};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct DurationPredictor {
    conv: Conv1d,
    lstm: Lstm,
    out: Linear,
    blank: usize,
    /// Mean aligned frames per phoneme id, filled after training.
    pub table: Option<DurationTable>,
}

/// Average frame count per phoneme, read from forced alignments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationTable {
    pub per_token: BTreeMap<usize, f64>,
    pub fallback: f64,
}

impl DurationTable {
    pub fn from_alignments<'a>(pairs: impl IntoIterator<Item = (&'a [usize], &'a DurationVector)>) -> Self {
        let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        let (mut total, mut n) = (0.0, 0usize);
        for (ids, d) in pairs {
            for (&id, &f) in ids.iter().zip(&d.0) {
                let e = acc.entry(id).or_insert((0.0, 0));
                e.0 += f as f64;
                e.1 += 1;
                total += f as f64;
                n += 1;
            }
        }
        Self {
            per_token: acc.into_iter().map(|(k, (s, c))| (k, s / c as f64)).collect(),
            fallback: if n == 0 { 1.0 } else { total / n as f64 },
        }
    }

    /// Durations whose running sum tracks the rounded cumulative means.
    pub fn predict(&self, ids: &[usize]) -> DurationVector {
        let mut cum = 0.0;
        let mut prev = 0usize;
        let d = ids
            .iter()
            .map(|id| {
                cum += self.per_token.get(id).copied().unwrap_or(self.fallback);
                let now = cum.round() as usize;
                let out = now - prev;
                prev = now;
                out
            })
            .collect();
        DurationVector(d)
    }
}

/// `⌊T/K⌋` frames per phoneme with the remainder on the last one.
pub fn uniform_durations(frames: usize, phonemes: usize) -> DurationVector {
    if phonemes == 0 {
        return DurationVector(Vec::new());
    }
    let each = frames / phonemes;
    let mut d = vec![each; phonemes];
    d[phonemes - 1] += frames - each * phonemes;
    DurationVector(d)
}

/// Frames per label from a best path over the blank-interleaved sequence.
/// Blank frames go to the following label, trailing blanks to the last one.
pub fn durations_from_path(path: &[usize], labels: usize) -> DurationVector {
    let mut d = vec![0; labels];
    if labels == 0 {
        return DurationVector(d);
    }
    for &s in path {
        let label = if s % 2 == 1 {
            (s - 1) / 2
        } else {
            (s / 2).min(labels - 1)
        };
        d[label] += 1;
    }
    DurationVector(d)
}

impl DurationPredictor {
    pub(crate) fn new<T: Scalar>(
        p: &mut ParamStore<T>,
        c: &ModelConfig,
        phoneme_vocab: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            conv: Conv1d::new(p, "dur.conv", c.n_mels, c.dur_filters, c.dur_kernel, rng),
            lstm: Lstm::new(p, "dur.lstm", c.dur_filters, c.dur_hidden, rng),
            out: Linear::new(p, "dur.out", c.dur_hidden, phoneme_vocab + 1, rng),
            blank: phoneme_vocab,
            table: None,
        }
    }

    /// CTC blank index (one past the phoneme vocabulary).
    pub fn blank(&self) -> usize {
        self.blank
    }

    /// Frame log-posteriors `[T × (V+1)]` from standardized mel frames.
    pub fn logprobs_node<T: Scalar>(&self, g: &mut Graph<'_, T>, mel: NodeId) -> Result<NodeId, ModelError> {
        let h = self.conv.forward(g, mel)?;
        let h = g.relu(h)?;
        let h = self.lstm.forward(g, h)?;
        let z = self.out.forward(g, h)?;
        Ok(g.log_softmax(z)?)
    }

    /// Forced alignment of `ids` against standardized frames.
    pub fn align<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        ids: &[usize],
        mel: &Tensor<T>,
    ) -> Result<DurationVector, ModelError> {
        let mut g = Graph::new(params);
        let x = g.input(mel.clone());
        let lp = self.logprobs_node(&mut g, x)?;
        let path = ctc_best_path(g.value(lp), ids, self.blank)?;
        Ok(durations_from_path(&path, ids.len()))
    }

    pub fn predict(&self, ids: &[usize]) -> Result<DurationVector, ModelError> {
        self.table
            .as_ref()
            .map(|t| t.predict(ids))
            .ok_or(ModelError::NotTrained)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_rule() {
        assert_eq!(uniform_durations(10, 3).0, vec![3, 3, 4]);
        assert_eq!(uniform_durations(7, 1).0, vec![7]);
        assert_eq!(uniform_durations(2, 3).0, vec![0, 0, 2]);
    }

    #[test]
    fn path_to_durations() {
        // states: b l0 l0 b l1 b  (labels = 2, ext len 5)
        let d = durations_from_path(&[0, 1, 1, 2, 3, 4], 2);
        assert_eq!(d.0, vec![3, 3]);
    }

    #[test]
    fn table_prediction_sums_to_rounded_total() {
        let d1 = DurationVector(vec![2, 3]);
        let d2 = DurationVector(vec![3, 4]);
        let t = DurationTable::from_alignments([(&[5usize, 6][..], &d1), (&[5, 6][..], &d2)]);
        assert_eq!(t.per_token[&5], 2.5);
        let p = t.predict(&[5, 6, 7]);
        // 2.5 + 3.5 + 3.0 (fallback) = 9
        assert_eq!(p.total(), 9);
        assert_eq!(p.len(), 3);
    }
}
