//! Spectrogram and synthesizer behaviour through the public API.

use proptest::prelude::*;
use soundsquat_core::audio::{
    hz_to_mel, mel_center_hz, synth_phonemes, to_mel, MelConfig, PhonemeAudioProfile, Waveform,
};
use soundsquat_core::phonology::{tokenize_ipa, PhonemeVocabulary};

#[test]
fn community_frames_equal_its_summed_durations() {
    let vocab = PhonemeVocabulary::default_english();
    let profiles = PhonemeAudioProfile::synthetic(&vocab);
    let cfg = MelConfig::default();
    let seq = tokenize_ipa("/kəmjˈuːnᵻɾi/", &vocab).unwrap();
    let (wave, durations) = synth_phonemes(&seq, &vocab, &profiles, &cfg).unwrap();
    let mel = to_mel(&wave, &cfg).unwrap();
    assert_eq!(durations.len(), seq.token_ids.len());
    assert_eq!(durations.total(), mel.n_frames());
    assert_eq!(mel.n_mels(), 40);
}

#[test]
fn tone_lands_in_the_filter_centred_nearest_its_mel() {
    let cfg = MelConfig::default();
    let target = hz_to_mel(440.0);
    let nearest = (0..cfg.n_mels)
        .min_by(|&a, &b| {
            let da = (hz_to_mel(mel_center_hz(&cfg, a)) - target).abs();
            let db = (hz_to_mel(mel_center_hz(&cfg, b)) - target).abs();
            da.total_cmp(&db)
        })
        .unwrap();
    let mel = to_mel(&Waveform::sine(440.0, 1.0, 22050, cfg.sample_rate), &cfg).unwrap();
    for t in 0..mel.n_frames() {
        let row = mel.frames.row(t);
        let peak = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        assert_eq!(peak, nearest, "frame {t}");
    }
}

#[test]
fn synthesis_is_deterministic() {
    let vocab = PhonemeVocabulary::default_english();
    let profiles = PhonemeAudioProfile::synthetic(&vocab);
    let cfg = MelConfig::default();
    let seq = tokenize_ipa("kˈæt", &vocab).unwrap();
    let (a, da) = synth_phonemes(&seq, &vocab, &profiles, &cfg).unwrap();
    let (b, db) = synth_phonemes(&seq, &vocab, &profiles, &cfg).unwrap();
    assert_eq!(da, db);
    let (ma, mb) = (to_mel(&a, &cfg).unwrap(), to_mel(&b, &cfg).unwrap());
    assert!(ma
        .frames
        .data()
        .iter()
        .zip(mb.frames.data())
        .all(|(x, y)| x.to_bits() == y.to_bits()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // Power is quadratic in amplitude, so every above-floor entry moves by ln 4.
    #[test]
    fn doubling_amplitude_adds_ln4(freq in 100.0f64..7000.0, amp in 0.01f64..0.4, len in 1024usize..4096) {
        let cfg = MelConfig::default();
        let one = to_mel(&Waveform::sine(freq, amp, len, cfg.sample_rate), &cfg).unwrap();
        let two = to_mel(&Waveform::sine(freq, 2.0 * amp, len, cfg.sample_rate), &cfg).unwrap();
        let floor = cfg.log_floor.ln();
        for (a, b) in one.frames.data().iter().zip(two.frames.data()) {
            if *a > floor && *b > floor {
                prop_assert!((b - a - 4f64.ln()).abs() < 1e-9, "{a} → {b}");
            }
        }
    }
}
