use std::path::{Path, PathBuf};

use super::error::AudioError;
use super::mel::Waveform;

/// Read a 16-bit PCM mono WAV file, scaling samples to [-1, 1).
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform, AudioError> {
    let path = path.as_ref();
    let wav_err = |source| AudioError::Wav {
        path: path.display().to_string(),
        source,
    };
    let reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(AudioError::WavFormat(format!(
            "{}: need 16-bit integer mono, got {} channel(s) at {} bits",
            path.display(),
            spec.channels,
            spec.bits_per_sample
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<Result<Vec<_>, _>>()
        .map_err(wav_err)?;
    Waveform::new(samples, spec.sample_rate)
}

/// Write 16-bit PCM mono, clipping to the representable range.
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<(), AudioError> {
    let path = path.as_ref();
    let wav_err = |source| AudioError::Wav {
        path: path.display().to_string(),
        source,
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut out = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for &s in &w.samples {
        let v = (s * 32768.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        out.write_sample(v).map_err(wav_err)?;
    }
    out.finalize().map_err(wav_err)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AudioSource {
    Synth,
    File(PathBuf),
}

/// One `word<TAB>ipa<TAB>audio_path|SYNTH` row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub word: String,
    pub ipa: String,
    pub audio: AudioSource,
}

/// Parse manifest text; relative audio paths resolve against `base`.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestRow>, AudioError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |m: &str| AudioError::Manifest {
            line: i + 1,
            message: m.to_string(),
        };
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(err("expected word, ipa and audio columns"));
        }
        if cols[0].is_empty() || cols[1].is_empty() {
            return Err(err("empty word or ipa"));
        }
        let audio = match cols[2] {
            "SYNTH" => AudioSource::Synth,
            "" => return Err(err("empty audio column")),
            p => AudioSource::File(base.join(p)),
        };
        rows.push(ManifestRow {
            word: cols[0].to_string(),
            ipa: cols[1].to_string(),
            audio,
        });
    }
    Ok(rows)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRow>, AudioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| AudioError::io(path, e))?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new(".")))
}

pub fn format_manifest(rows: &[ManifestRow]) -> String {
    rows.iter()
        .map(|r| {
            let audio = match &r.audio {
                AudioSource::Synth => "SYNTH".to_string(),
                AudioSource::File(p) => p.display().to_string(),
            };
            format!("{}\t{}\t{}\n", r.word, r.ipa, audio)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wav_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let w = Waveform::sine(440.0, 0.5, 2000, 22050);
        write_wav(&p, &w).unwrap();
        assert_eq!(std::fs::metadata(&p).unwrap().len(), 44 + 2 * 2000);
        let back = read_wav(&p).unwrap();
        assert_eq!(back.sample_rate, 22050);
        assert!(back
            .samples
            .iter()
            .zip(&w.samples)
            .all(|(a, b)| (a - b).abs() <= 1.0 / 32768.0));
    }

    #[test]
    fn manifest_roundtrip() {
        let text = "# header\nby\tbˈaɪ\tSYNTH\ncat\tkæt\tclips/cat.wav\n";
        let rows = parse_manifest(text, Path::new("/data")).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].audio, AudioSource::File(PathBuf::from("/data/clips/cat.wav")));
        let again = parse_manifest(&format_manifest(&rows), Path::new("/elsewhere")).unwrap();
        assert_eq!(again, rows);
        assert!(matches!(
            parse_manifest("by\tbˈaɪ\n", Path::new(".")),
            Err(AudioError::Manifest { line: 1, .. })
        ));
    }
}
