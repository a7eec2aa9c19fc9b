//! Mel-spectrogram features and the synthetic phoneme synthesizer.

mod error;
mod io;
mod mel;
mod synth;

pub use error::AudioError;
pub use io::{format_manifest, parse_manifest, read_manifest, read_wav, write_wav, AudioSource, ManifestRow};
pub use mel::{
    hann, hz_to_mel, mel_center_hz, mel_filterbank, mel_to_hz, stft_power, to_mel, MelConfig, MelSpectrogram, Waveform,
};
pub use synth::{synth_phonemes, synth_tokens, DurationVector, PhonemeAudioProfile, TokenProfile};
