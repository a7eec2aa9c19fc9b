mod common;

use common::{tiny_config, Fixture};
use soundsquat_core::model::{Model, ModelError};
use soundsquat_core::nn::TrainConfig;

/// Relative error of predicted total frames against the synthesized audio.
fn total_error(m: &Model<f32>, ex: &soundsquat_core::model::TrainingExample) -> f64 {
    let predicted = m.predict_durations(&ex.ipa).unwrap().total() as f64;
    let actual = ex.mel.as_ref().unwrap().n_frames() as f64;
    (predicted - actual).abs() / actual
}

#[test]
fn predicted_totals_track_held_out_audio() {
    let f = Fixture::new();
    let train = f.examples(120, 31);
    let held_out = f.examples(40, 32);
    let mut m: Model<f32> = f.model(tiny_config(32, true), 3);
    assert!(matches!(
        m.predict_durations(&train[0].ipa),
        Err(ModelError::NotTrained)
    ));
    m.fit_mel_norm(&train);
    let cfg = TrainConfig {
        epochs: 40,
        ..TrainConfig::desk()
    };
    let losses = m.train_duration_predictor(&train, &cfg).unwrap();
    assert!(losses.last().unwrap() < &losses[0], "{losses:?}");
    let errors: Vec<f64> = held_out.iter().map(|ex| total_error(&m, ex)).collect();
    let within = errors.iter().filter(|&&e| e <= 0.10).count();
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    println!("mean relative error {mean:.4}, {within}/{} within 10%", errors.len());
    assert!(mean <= 0.10);
    assert!(within * 10 >= errors.len() * 9);
}

#[test]
fn alignment_partitions_all_frames() {
    let f = Fixture::new();
    let train = f.examples(30, 33);
    let mut m: Model<f32> = f.model(tiny_config(16, true), 3);
    m.fit_mel_norm(&train);
    m.train_duration_predictor(
        &train,
        &TrainConfig {
            epochs: 2,
            ..TrainConfig::desk()
        },
    )
    .unwrap();
    for ex in &train {
        let d = m.align(&ex.ipa, ex.mel.as_ref().unwrap()).unwrap();
        assert_eq!(d.len(), ex.ipa.len());
        assert_eq!(d.total(), ex.mel.as_ref().unwrap().n_frames());
    }
}
