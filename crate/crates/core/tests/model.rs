mod common;

use common::{tiny_config, Fixture};
use proptest::prelude::*;
use soundsquat_core::model::{length_regulate, DurationVector, Model, ModelConfig, ModelError, TrainOptions};
use soundsquat_core::nn::gradcheck::{GradCase, TOLERANCE};
use soundsquat_core::nn::{Graph, Tensor, TrainConfig};
use soundsquat_core::phonology::tokenize_ipa;

#[test]
fn encoder_output_shape_and_determinism() {
    let f = Fixture::new();
    let m: Model<f64> = f.model(tiny_config(8, true), 3);
    let ipa = tokenize_ipa("ˈkæt", &f.phonemes).unwrap();
    let a = m.encode(&ipa).unwrap();
    assert_eq!(a.shape(), &[ipa.len(), 8]);
    assert_eq!(a, m.encode(&ipa).unwrap());
    let swapped = tokenize_ipa("ˈtæk", &f.phonemes).unwrap();
    assert_ne!(a, m.encode(&swapped).unwrap());
}

#[test]
fn desk_config_builds() {
    let f = Fixture::new();
    let m: Model<f32> = f.model(ModelConfig::desk(), 0);
    assert!(m.params.num_scalars() > 100_000);
    assert!(m.params.iter().all(|(_, t)| t.is_finite()));
}

#[test]
fn next_char_distribution_is_normalized_and_causal() {
    let f = Fixture::new();
    let m: Model<f64> = f.model(tiny_config(8, true), 5);
    let ipa = tokenize_ipa("ˈdɔɡ", &f.phonemes).unwrap();
    let mem = m.encode(&ipa).unwrap();
    let s = f.graphemes.specials();
    let word = f.graphemes.encode("dog").unwrap();
    let mut history = vec![s.bos];
    history.extend(&word.chars);
    let mut g = Graph::new(&m.params);
    let memn = g.input(mem.clone());
    let logits = m.decode_node(&mut g, memn, &history).unwrap();
    let full = g.log_softmax(logits).unwrap();
    for k in 1..=history.len() {
        let p = m.decode_step(&mem, &history[..k]).unwrap();
        assert_eq!(p.len(), f.graphemes.len());
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let lp = m.decode_step_log(&mem, &history[..k]).unwrap();
        for (a, b) in lp.iter().zip(g.value(full).row(k - 1)) {
            assert!((a - b).abs() < 1e-9, "position {k} depends on later characters");
        }
    }
}

#[test]
fn decoder_rejects_bad_histories() {
    let f = Fixture::new();
    let m: Model<f64> = f.model(tiny_config(8, true), 5);
    let mem = m.encode(&tokenize_ipa("ˈkæt", &f.phonemes).unwrap()).unwrap();
    assert!(matches!(m.decode_step(&mem, &[5]), Err(ModelError::MissingBos)));
    let long = vec![f.graphemes.specials().bos; 40];
    assert!(matches!(
        m.decode_step(&mem, &long),
        Err(ModelError::HistoryTooLong { .. })
    ));
    let too_long = tokenize_ipa(&"æ".repeat(21), &f.phonemes).unwrap();
    assert!(matches!(
        m.encode(&too_long),
        Err(ModelError::InputTooLong { len: 21, max: 20 })
    ));
}

#[test]
fn length_regulator_examples() {
    let mem = Tensor::<f64>::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    let out = length_regulate(&mem, &DurationVector(vec![2, 0, 1])).unwrap();
    assert_eq!(out.data(), &[1.0, 2.0, 1.0, 2.0, 5.0, 6.0]);
    let none = length_regulate(&mem, &DurationVector(vec![0, 0, 0])).unwrap();
    assert_eq!(none.rows(), 0);
    assert!(matches!(
        length_regulate(&mem, &DurationVector(vec![1, 1])),
        Err(ModelError::LengthMismatch { expected: 3, got: 2 })
    ));
}

proptest! {
    #[test]
    fn length_regulator_frames_equal_duration_sum(d in prop::collection::vec(0usize..12, 1..15)) {
        let mem = Tensor::<f32>::zeros(&[d.len(), 4]);
        let dv = DurationVector(d);
        let out = length_regulate(&mem, &dv).unwrap();
        prop_assert_eq!(out.rows(), dv.total());
    }
}

#[test]
fn mel_decoder_emits_one_frame_per_regulated_row() {
    let f = Fixture::new();
    let m: Model<f32> = f.model(tiny_config(8, true), 1);
    let mem = m.encode(&tokenize_ipa("ˈkæt", &f.phonemes).unwrap()).unwrap();
    let reg = m.length_regulate(&mem, &DurationVector(vec![0, 4, 7, 3])).unwrap();
    let mel = m.decode_mel(&reg).unwrap();
    assert_eq!(mel.shape(), &[14, 40]);
}

#[test]
fn joint_loss_composition() {
    let f = Fixture::new();
    let ex = &f.examples(20, 1)[0];
    let on: Model<f64> = f.model(tiny_config(8, true), 2);
    let l = on.joint_loss(ex).unwrap();
    assert!(l.mel > 0.0 && l.ce > 0.0);
    assert!((l.total - (l.ce + l.mel)).abs() < 1e-12);
    let off: Model<f64> = f.model(tiny_config(8, false), 2);
    let l = off.joint_loss(ex).unwrap();
    assert_eq!(l.total, l.ce);
    assert_eq!(l.mel, 0.0);
    let mut bare = ex.clone();
    bare.mel = None;
    assert!(off.joint_loss(&bare).is_ok());
    assert!(matches!(on.joint_loss(&bare), Err(ModelError::MissingModalities)));
}

#[test]
fn mel_branch_gets_no_gradient_without_feedback() {
    let f = Fixture::new();
    let ex = &f.examples(20, 1)[3];
    for (feedback, expect_zero) in [(false, true), (true, false)] {
        let m: Model<f64> = f.model(tiny_config(8, feedback), 2);
        let mut g = Graph::new(&m.params);
        let n = m.joint_loss_node(&mut g, ex).unwrap();
        let mut grads = m.params.zeros_like();
        g.backward(n.total).unwrap().accumulate_into(&g, &mut grads);
        let mel_ids = m.mel_param_ids();
        assert!(!mel_ids.is_empty());
        let mel_norm: f64 = mel_ids.iter().map(|&id| grads.max_abs(id)).fold(0.0, f64::max);
        assert_eq!(mel_norm == 0.0, expect_zero, "feedback={feedback}");
    }
}

#[test]
fn joint_loss_gradients_match_finite_differences() {
    let f = Fixture::new();
    let ex = f.examples(20, 1)[5].clone();
    let mut m: Model<f64> = f.model(tiny_config(8, true), 4);
    m.fit_mel_norm(std::slice::from_ref(&ex));
    let params = m.params.clone();
    let case = GradCase::new(vec![], move |g, _| {
        m.joint_loss_node(g, &ex).map(|n| n.total).map_err(|e| match e {
            ModelError::Tensor(t) => t,
            other => panic!("{other}"),
        })
    })
    .with_params(params);
    let err = case.max_relative_error().unwrap();
    assert!(err <= TOLERANCE, "relative error {err:e}");
}

#[test]
fn mel_loss_decreases_when_fitting_one_example() {
    let f = Fixture::new();
    let ex = f.examples(20, 1)[0].clone();
    let mut m: Model<f32> = f.model(tiny_config(16, true), 9);
    m.fit_mel_norm(std::slice::from_ref(&ex));
    let before = m.joint_loss(&ex).unwrap().mel;
    let cfg = TrainConfig {
        epochs: 200,
        batch_size: 1,
        ..TrainConfig::desk()
    };
    let out = m
        .train(std::slice::from_ref(&ex), &[], &cfg, TrainOptions::default())
        .unwrap();
    let after = m.joint_loss(&ex).unwrap().mel;
    assert_eq!(out.metrics.len(), 200);
    assert!(after < 0.75 * before, "mel loss {before} -> {after}");
    let head: f64 = out.metrics[..10].iter().map(|m| m.train_mel).sum();
    let tail: f64 = out.metrics[190..].iter().map(|m| m.train_mel).sum();
    assert!(tail < head);
}

#[test]
fn training_is_reproducible_from_the_seed() {
    let f = Fixture::new();
    let ex = f.examples(24, 2);
    let run = || {
        let mut m: Model<f32> = f.model(tiny_config(8, true), 11);
        m.fit_mel_norm(&ex);
        let cfg = TrainConfig {
            epochs: 3,
            seed: 5,
            ..TrainConfig::desk()
        };
        let out = m.train(&ex[..20], &ex[20..], &cfg, TrainOptions::default()).unwrap();
        (out.metrics, m.params)
    };
    let (a, pa) = run();
    let (b, pb) = run();
    assert_eq!(a, b);
    for ((_, x), (_, y)) in pa.iter().zip(pb.iter()) {
        assert_eq!(x, y);
    }
    assert!(a
        .iter()
        .all(|m| m.train_total.is_finite() && m.val_total.unwrap().is_finite()));
}

#[test]
fn metrics_log_and_best_checkpoint_are_written() {
    let f = Fixture::new();
    let ex = f.examples(24, 2);
    let dir = tempfile::tempdir().unwrap();
    let mut m: Model<f32> = f.model(tiny_config(8, false), 11);
    let cfg = TrainConfig {
        epochs: 4,
        ..TrainConfig::desk()
    };
    let opts = TrainOptions {
        metrics_path: Some(dir.path().join("metrics.jsonl")),
        checkpoint_path: Some(dir.path().join("best.ckpt")),
        restore_best: true,
        stop: Some(Box::new(|m, _| m.epoch == 2)),
    };
    let out = m.train(&ex[..20], &ex[20..], &cfg, opts).unwrap();
    assert_eq!(out.metrics.len(), 3);
    let log = std::fs::read_to_string(dir.path().join("metrics.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 3);
    let best: Model<f32> = Model::load(dir.path().join("best.ckpt")).unwrap();
    for ((_, x), (_, y)) in best.params.iter().zip(m.params.iter()) {
        assert_eq!(x, y);
    }
}

#[test]
fn runaway_learning_rate_is_reported() {
    let f = Fixture::new();
    let ex = f.examples(20, 2);
    let mut m: Model<f32> = f.model(tiny_config(8, true), 1);
    let cfg = TrainConfig {
        lr: 1e30,
        epochs: 5,
        ..TrainConfig::desk()
    };
    match m.train(&ex, &[], &cfg, TrainOptions::default()) {
        Err(ModelError::DivergedLoss { .. }) => {}
        other => panic!("expected divergence, got {:?}", other.map(|o| o.metrics.len())),
    }
}

#[test]
fn save_load_round_trip_is_bitwise() {
    let f = Fixture::new();
    let ex = f.examples(20, 3);
    let mut m: Model<f32> = f.model(tiny_config(8, true), 21);
    m.fit_mel_norm(&ex);
    let cfg = TrainConfig {
        epochs: 2,
        ..TrainConfig::desk()
    };
    m.train(&ex, &[], &cfg, TrainOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    m.save(&path).unwrap();
    let back: Model<f32> = Model::load(&path).unwrap();
    assert_eq!(back.config, m.config);
    assert_eq!(back.mel_norm, m.mel_norm);
    let ipa = &ex[0].ipa;
    let (a, b) = (m.encode(ipa).unwrap(), back.encode(ipa).unwrap());
    assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_eq!(m.greedy(ipa).unwrap(), back.greedy(ipa).unwrap());
}

#[test]
fn loading_garbage_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.ckpt");
    std::fs::write(&p, b"not a checkpoint").unwrap();
    assert!(Model::<f32>::load(&p).is_err());
    assert!(Model::<f32>::load(dir.path().join("missing")).is_err());
}

#[test]
fn invalid_configs_are_rejected() {
    let f = Fixture::new();
    let bad_heads = ModelConfig {
        enc_heads: 3,
        ..ModelConfig::desk()
    };
    assert!(Model::<f32>::new(bad_heads, f.phonemes.clone(), f.graphemes.clone(), f.mel.clone(), 0).is_err());
    let bad_vocab = ModelConfig {
        grapheme_vocab: 10,
        ..ModelConfig::desk()
    };
    assert!(Model::<f32>::new(bad_vocab, f.phonemes.clone(), f.graphemes.clone(), f.mel.clone(), 0).is_err());
}

#[test]
fn single_and_double_precision_agree() {
    let f = Fixture::new();
    let m64: Model<f64> = f.model(tiny_config(8, true), 8);
    let m32: Model<f32> = f.model(tiny_config(8, true), 8);
    let ipa = tokenize_ipa("ˈbɜːd", &f.phonemes).unwrap();
    let a = m64.encode(&ipa).unwrap();
    let b = m32.encode(&ipa).unwrap();
    for (x, y) in a.data().iter().zip(b.data()) {
        assert!((x - *y as f64).abs() < 1e-4);
    }
}
