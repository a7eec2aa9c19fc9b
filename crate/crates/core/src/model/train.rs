//! Joint loss and the training loops.

use std::io::Write;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::TrainingExample;
use super::duration::DurationTable;
use super::error::ModelError;
use super::net::{MelNorm, Model};
use crate::nn::ctc::required_frames;
use crate::nn::{AdamState, Graph, NodeId, TensorError, TrainConfig};
use crate::scalar::Scalar;

/// Loss nodes of one example.
#[derive(Debug, Clone, Copy)]
pub struct LossNodes {
    pub total: NodeId,
    pub ce: NodeId,
    pub mel: Option<NodeId>,
}

/// Scalar loss values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLoss {
    pub total: f64,
    pub ce: f64,
    pub mel: f64,
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_total: f64,
    pub train_ce: f64,
    pub train_mel: f64,
    pub val_total: Option<f64>,
    pub lr: f64,
}

pub type StopHook<'a, T> = dyn FnMut(&EpochMetrics, &Model<T>) -> bool + 'a;

#[derive(Default)]
pub struct TrainOptions<'a, T: Scalar> {
    /// Append one JSON line per epoch here.
    pub metrics_path: Option<PathBuf>,
    /// Best-validation checkpoint location.
    pub checkpoint_path: Option<PathBuf>,
    /// Load the best-validation weights back when training ends.
    pub restore_best: bool,
    /// Called after each epoch; returning true stops training.
    pub stop: Option<Box<StopHook<'a, T>>>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub metrics: Vec<EpochMetrics>,
    pub best_epoch: Option<usize>,
    pub best_val: Option<f64>,
}

fn diverged(epoch: usize) -> impl Fn(ModelError) -> ModelError {
    move |e| match e {
        ModelError::Tensor(TensorError::NonFinite { .. }) => ModelError::DivergedLoss { epoch },
        other => other,
    }
}

impl<T: Scalar> Model<T> {
    /// Cross-entropy over teacher-forced characters, plus the mel
    /// reconstruction term when audio feedback is on.
    pub fn joint_loss_node(&self, g: &mut Graph<'_, T>, ex: &TrainingExample) -> Result<LossNodes, ModelError> {
        let s = self.graphemes.specials();
        let memory = self.encode_node(g, &ex.ipa.token_ids)?;
        let mut input = Vec::with_capacity(ex.grapheme.chars.len() + 1);
        input.push(s.bos);
        input.extend_from_slice(&ex.grapheme.chars);
        let mut target = ex.grapheme.chars.clone();
        target.push(s.eos);
        let logits = self.decode_node(g, memory, &input)?;
        let ce = g.cross_entropy(logits, &target, Some(s.pad))?;
        if !self.config.audio_feedback {
            return Ok(LossNodes {
                total: ce,
                ce,
                mel: None,
            });
        }
        let (Some(mel), Some(d)) = (&ex.mel, &ex.durations) else {
            return Err(ModelError::MissingModalities);
        };
        ex.validate()?;
        let regulated = g.repeat_rows(memory, &d.0)?;
        let pred = self.mel_node(g, regulated)?;
        let target = self.mel_norm.apply::<T>(&mel.frames);
        let mask = vec![true; target.rows()];
        let mel_loss = g.l1_l2(pred, &target, &mask)?;
        let total = g.add(ce, mel_loss)?;
        Ok(LossNodes {
            total,
            ce,
            mel: Some(mel_loss),
        })
    }

    /// Evaluation-mode loss of one example.
    pub fn joint_loss(&self, ex: &TrainingExample) -> Result<JointLoss, ModelError> {
        let mut g = Graph::new(&self.params);
        let n = self.joint_loss_node(&mut g, ex)?;
        Ok(JointLoss {
            total: g.value(n.total).item().as_f64(),
            ce: g.value(n.ce).item().as_f64(),
            mel: n.mel.map_or(0.0, |m| g.value(m).item().as_f64()),
        })
    }

    /// Fit the mel standardization to the training spectrograms.
    pub fn fit_mel_norm(&mut self, examples: &[TrainingExample]) {
        self.mel_norm = MelNorm::fit(
            examples.iter().filter_map(|e| e.mel.as_ref().map(|m| &m.frames)),
            self.config.n_mels,
        );
    }

    /// Fraction of examples whose greedy decode reproduces the spelling.
    pub fn top1_accuracy(&self, examples: &[TrainingExample]) -> Result<f64, ModelError> {
        if examples.is_empty() {
            return Ok(0.0);
        }
        let mut hits = 0;
        for ex in examples {
            if self.greedy(&ex.ipa)? == ex.grapheme.surface {
                hits += 1;
            }
        }
        Ok(hits as f64 / examples.len() as f64)
    }

    /// Mini-batch Adam over `train`, validating on `val` after each epoch.
    pub fn train(
        &mut self,
        train: &[TrainingExample],
        val: &[TrainingExample],
        cfg: &TrainConfig,
        mut opts: TrainOptions<'_, T>,
    ) -> Result<TrainOutcome, ModelError> {
        cfg.validate().map_err(ModelError::InvalidConfig)?;
        if train.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        let mut metrics_file = match &opts.metrics_path {
            Some(p) => Some(std::fs::File::create(p).map_err(|e| ModelError::io(p, e))?),
            None => None,
        };
        let mut adam = AdamState::new(&self.params);
        let mut grads = self.params.zeros_like();
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut dropout_rng = Some(ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_d0d0));
        let mut metrics = Vec::with_capacity(cfg.epochs);
        let mut best: Option<(usize, f64, crate::nn::ParamStore<T>)> = None;
        for epoch in 0..cfg.epochs {
            let lr = cfg.lr_at(epoch);
            order.shuffle(&mut shuffle_rng);
            let (mut sum_total, mut sum_ce, mut sum_mel) = (0.0, 0.0, 0.0);
            for batch in order.chunks(cfg.batch_size) {
                grads.zero();
                for &i in batch {
                    let mut g = Graph::new(&self.params).with_dropout_rng(dropout_rng.take().expect("rng"));
                    let result = self.joint_loss_node(&mut g, &train[i]);
                    let step = result.and_then(|n| {
                        let gr = g.backward(n.total)?;
                        gr.accumulate_into(&g, &mut grads);
                        Ok(n)
                    });
                    dropout_rng = g.take_rng();
                    let n = step.map_err(diverged(epoch))?;
                    sum_total += g.value(n.total).item().as_f64();
                    sum_ce += g.value(n.ce).item().as_f64();
                    sum_mel += n.mel.map_or(0.0, |m| g.value(m).item().as_f64());
                }
                grads.scale(T::lit(1.0 / batch.len() as f64));
                if !grads.is_finite() {
                    return Err(ModelError::DivergedLoss { epoch });
                }
                adam.step(&mut self.params, &grads, cfg, lr);
            }
            let n = train.len() as f64;
            let val_total = if val.is_empty() {
                None
            } else {
                let mut s = 0.0;
                for ex in val {
                    s += self.joint_loss(ex).map_err(diverged(epoch))?.total;
                }
                Some(s / val.len() as f64)
            };
            let m = EpochMetrics {
                epoch,
                train_total: sum_total / n,
                train_ce: sum_ce / n,
                train_mel: sum_mel / n,
                val_total,
                lr,
            };
            if !m.train_total.is_finite() || val_total.is_some_and(|v| !v.is_finite()) {
                return Err(ModelError::DivergedLoss { epoch });
            }
            log::info!(
                "epoch {epoch}: train {:.4} (ce {:.4}, mel {:.4}) val {:?}",
                m.train_total,
                m.train_ce,
                m.train_mel,
                m.val_total
            );
            if let Some(f) = metrics_file.as_mut() {
                let line = serde_json::to_string(&m).expect("metrics serialize");
                writeln!(f, "{line}").map_err(|e| ModelError::io(opts.metrics_path.as_ref().unwrap(), e))?;
            }
            let score = val_total.unwrap_or(m.train_total);
            if best.as_ref().is_none_or(|(_, b, _)| score < *b) {
                if let Some(p) = &opts.checkpoint_path {
                    self.save(p)?;
                }
                best = Some((epoch, score, self.params.clone()));
            }
            metrics.push(m);
            let stop = match opts.stop.as_mut() {
                Some(hook) => hook(metrics.last().unwrap(), self),
                None => false,
            };
            if stop {
                break;
            }
        }
        let (best_epoch, best_val) = match best {
            Some((e, v, params)) => {
                if opts.restore_best {
                    self.params = params;
                }
                (Some(e), Some(v))
            }
            None => (None, None),
        };
        Ok(TrainOutcome {
            metrics,
            best_epoch,
            best_val,
        })
    }

    /// Train the duration predictor with CTC on examples that carry audio,
    /// then build the per-phoneme duration table from forced alignments.
    /// Returns the mean loss per epoch.
    pub fn train_duration_predictor(
        &mut self,
        examples: &[TrainingExample],
        cfg: &TrainConfig,
    ) -> Result<Vec<f64>, ModelError> {
        cfg.validate().map_err(ModelError::InvalidConfig)?;
        let usable: Vec<&TrainingExample> = examples
            .iter()
            .filter(|e| {
                e.mel
                    .as_ref()
                    .is_some_and(|m| m.n_frames() >= required_frames(&e.ipa.token_ids))
            })
            .collect();
        if usable.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        let inputs: Vec<_> = usable
            .iter()
            .map(|e| self.mel_norm.apply::<T>(&e.mel.as_ref().unwrap().frames))
            .collect();
        let mut adam = AdamState::new(&self.params);
        let mut grads = self.params.zeros_like();
        let mut order: Vec<usize> = (0..usable.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xd0d0);
        let blank = self.durations.blank();
        let mut losses = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for batch in order.chunks(cfg.batch_size) {
                grads.zero();
                for &i in batch {
                    let mut g = Graph::new(&self.params);
                    let x = g.input(inputs[i].clone());
                    let lp = self.durations.logprobs_node(&mut g, x).map_err(diverged(epoch))?;
                    let loss = g
                        .ctc(lp, &usable[i].ipa.token_ids, blank)
                        .map_err(|e| diverged(epoch)(e.into()))?;
                    total += g.value(loss).item().as_f64();
                    g.backward(loss)?.accumulate_into(&g, &mut grads);
                }
                grads.scale(T::lit(1.0 / batch.len() as f64));
                if !grads.is_finite() {
                    return Err(ModelError::DivergedLoss { epoch });
                }
                adam.step(&mut self.params, &grads, cfg, cfg.lr_at(epoch));
            }
            let mean = total / usable.len() as f64;
            log::info!("duration epoch {epoch}: ctc {mean:.4}");
            losses.push(mean);
        }
        let mut aligned = Vec::with_capacity(usable.len());
        for (e, x) in usable.iter().zip(&inputs) {
            aligned.push(self.durations.align(&self.params, &e.ipa.token_ids, x)?);
        }
        self.durations.table = Some(DurationTable::from_alignments(
            usable
                .iter()
                .zip(&aligned)
                .map(|(e, d)| (e.ipa.token_ids.as_slice(), d)),
        ));
        Ok(losses)
    }

    /// Durations for `ipa` from the trained table.
    pub fn predict_durations(
        &self,
        ipa: &crate::phonology::IpaSequence,
    ) -> Result<crate::audio::DurationVector, ModelError> {
        self.durations.predict(&ipa.token_ids)
    }

    /// Forced alignment of `ipa` against a spectrogram in log-mel units.
    pub fn align(
        &self,
        ipa: &crate::phonology::IpaSequence,
        mel: &crate::audio::MelSpectrogram,
    ) -> Result<crate::audio::DurationVector, ModelError> {
        let x = self.mel_norm.apply::<T>(&mel.frames);
        self.durations.align(&self.params, &ipa.token_ids, &x)
    }
}
