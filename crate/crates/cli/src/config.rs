//! Effective configuration: built-in defaults, then the TOML file, then
//! command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use soundsquat_core::generator::GenerationParams;
use soundsquat_core::model::ModelConfig;
use soundsquat_core::nn::TrainConfig;
use soundsquat_probe::ProbeConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Desk,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Jsonl,
    Csv,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub wordlist: Option<PathBuf>,
    /// `word<TAB>ipa` pronunciation dictionary used as the G2P backend.
    pub dictionary: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
    pub profiles: Option<PathBuf>,
    pub sets: Option<PathBuf>,
    pub targets: Option<PathBuf>,
    pub packages: Option<PathBuf>,
    pub candidates: Option<PathBuf>,
    pub results_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Paths {
    fn rebase(&mut self, base: &Path) {
        let all = [
            &mut self.wordlist,
            &mut self.dictionary,
            &mut self.manifest,
            &mut self.checkpoint,
            &mut self.metrics,
            &mut self.profiles,
            &mut self.sets,
            &mut self.targets,
            &mut self.packages,
            &mut self.candidates,
            &mut self.results_dir,
            &mut self.out,
        ];
        for p in all.into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

/// Beam-search settings; unset fields keep the library defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationOverrides {
    pub c: Option<usize>,
    pub k: Option<usize>,
    pub extra_depth: Option<usize>,
    /// Candidates written or evaluated per target.
    pub top: Option<usize>,
}

impl GenerationOverrides {
    pub fn params(&self) -> GenerationParams {
        let d = GenerationParams::default();
        GenerationParams {
            c: self.c.unwrap_or(d.c),
            k: self.k.unwrap_or(d.k),
            extra_depth: self.extra_depth.unwrap_or(d.extra_depth),
            exclude: Default::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainOverrides {
    pub lr: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub decay_gamma: Option<f64>,
    pub decay_every: Option<usize>,
    pub audio_feedback: Option<bool>,
    /// Train on every row instead of the 80/10/10 split.
    pub all_rows: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliConfig {
    pub seed: u64,
    pub jobs: Option<usize>,
    /// Language of the model's phoneme inventory.
    pub model_language: String,
    pub preset: Preset,
    pub dtype: Dtype,
    pub format: Format,
    /// External G2P process speaking one word per line, e.g.
    /// `["espeak-ng", "-q", "--ipa", "-v", "en-us"]`.
    pub g2p_command: Option<Vec<String>>,
    pub paths: Paths,
    pub generation: GenerationOverrides,
    pub train: TrainOverrides,
    pub probe: ProbeConfig,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            jobs: None,
            model_language: "en-us".into(),
            preset: Preset::Desk,
            dtype: Dtype::F32,
            format: Format::Jsonl,
            g2p_command: None,
            paths: Paths::default(),
            generation: GenerationOverrides::default(),
            train: TrainOverrides::default(),
            probe: ProbeConfig::default(),
        }
    }
}

impl CliConfig {
    /// Read a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Self = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if let Some(base) = path.parent() {
            cfg.paths.rebase(base);
            cfg.probe.rebase(base);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn model_config(&self) -> ModelConfig {
        let base = match self.preset {
            Preset::Desk => ModelConfig::desk(),
            Preset::Full => ModelConfig::full(),
        };
        ModelConfig {
            audio_feedback: self.train.audio_feedback.unwrap_or(base.audio_feedback),
            ..base
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let base = match self.preset {
            Preset::Desk => TrainConfig::desk(),
            Preset::Full => TrainConfig::full(),
        };
        let t = &self.train;
        TrainConfig {
            lr: t.lr.unwrap_or(base.lr),
            epochs: t.epochs.unwrap_or(base.epochs),
            batch_size: t.batch_size.unwrap_or(base.batch_size),
            decay_gamma: t.decay_gamma.unwrap_or(base.decay_gamma),
            decay_every: t.decay_every.unwrap_or(base.decay_every),
            seed: self.seed,
            ..base
        }
    }
}

/// Fail before any work if a required input is missing.
pub fn require<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    match path {
        None => bail!("no {what} given"),
        Some(p) if !p.exists() => bail!("{what} {} does not exist", p.display()),
        Some(p) => Ok(p),
    }
}
