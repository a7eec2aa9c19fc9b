//! `soundsquat`: one executable for the whole workflow.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{CliConfig, Dtype, Format, Preset};

const PRECEDENCE: &str = "\
Settings are resolved in this order, later winning: built-in defaults, the \
TOML file given with --config, then command-line flags. --dry-run prints the \
resulting configuration and exits.

Exit status: 0 on success, 1 when some items failed (listed on stderr or in \
the output), 2 on fatal errors.";

#[derive(Parser, Debug)]
#[command(name = "soundsquat", version, about = "Generate and verify sound-squatting candidates", after_help = PRECEDENCE)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice (weights, shuffling, dropout, lexicons).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default 1, or 8 for probing).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    dry_run: bool,
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Transcribe a wordlist into a training manifest.
    Prepare(PrepareArgs),
    /// Train a model on a manifest.
    Train(TrainArgs),
    /// Generate candidates for words, transcriptions or a targets file.
    Generate(GenerateArgs),
    /// Homophone coverage of a trained model.
    Eval(EvalArgs),
    /// Compare evaluation reports with and without audio feedback.
    Ablate(AblateArgs),
    /// Probe candidate domains for a list of target sites.
    Domains(DomainsArgs),
    /// Probe candidate package names on a registry.
    Pypi(PypiArgs),
    /// Write a synthetic mini-language with planted homophones.
    Minilang(MinilangArgs),
}

#[derive(Args, Debug, Default)]
struct G2pArgs {
    /// `word<TAB>ipa` pronunciation dictionary.
    #[arg(long)]
    dictionary: Option<PathBuf>,
    /// External transcriber reading one word per line on stdin.
    #[arg(long, value_name = "PROGRAM")]
    g2p_command: Option<String>,
    /// Argument for the transcriber (repeatable); `{lang}` becomes the language tag.
    #[arg(long, value_name = "ARG", allow_hyphen_values = true, requires = "g2p_command")]
    g2p_arg: Vec<String>,
}

#[derive(Args, Debug, Default)]
struct GenArgs {
    /// Children kept per expansion.
    #[arg(long)]
    c: Option<usize>,
    /// Beam width.
    #[arg(long)]
    k: Option<usize>,
    /// Search depth beyond the phoneme count.
    #[arg(long)]
    extra_depth: Option<usize>,
    /// Candidates kept per target.
    #[arg(long)]
    top: Option<usize>,
}

#[derive(Args, Debug)]
struct PrepareArgs {
    #[arg(long)]
    wordlist: Option<PathBuf>,
    #[command(flatten)]
    g2p: G2pArgs,
    /// Manifest to write (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Checkpoint to write.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-epoch JSON-lines metrics log.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Phoneme audio profiles (TSV); synthetic profiles if omitted.
    #[arg(long)]
    profiles: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long, value_enum)]
    dtype: Option<Dtype>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Train without the audio branch.
    #[arg(long)]
    no_audio_feedback: bool,
    /// Use every row for training (no validation or test split).
    #[arg(long)]
    all_rows: bool,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Word to transcribe and generate for (repeatable).
    #[arg(long)]
    word: Vec<String>,
    /// Transcription to generate for directly (repeatable).
    #[arg(long)]
    ipa: Vec<String>,
    /// `name<TAB>ipa` file of targets.
    #[arg(long)]
    targets: Option<PathBuf>,
    /// Language of --word; other than the model's, phonemes are mapped.
    #[arg(long)]
    lang: Option<String>,
    #[command(flatten)]
    g2p: G2pArgs,
    #[command(flatten)]
    gen: GenArgs,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// `ipa<TAB>word,word,...` homophone sets.
    #[arg(long)]
    sets: Option<PathBuf>,
    /// Reference words for quasi-homophones (defaults to the dictionary
    /// words, or to the set members).
    #[arg(long)]
    wordlist: Option<PathBuf>,
    #[command(flatten)]
    g2p: G2pArgs,
    #[command(flatten)]
    gen: GenArgs,
    /// Report file (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Rank ECDF of the model and the random baseline, as CSV.
    #[arg(long)]
    ecdf: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AblateArgs {
    /// Report of the model trained with audio feedback.
    #[arg(long)]
    with: PathBuf,
    /// Report of the model trained without it.
    #[arg(long)]
    without: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ProbeArgs {
    /// Precomputed candidates: `target<TAB>candidate` TSV or generator JSONL.
    #[arg(long)]
    candidates: Option<PathBuf>,
    /// Checkpoint to generate candidates with when --candidates is absent.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[command(flatten)]
    g2p: G2pArgs,
    #[command(flatten)]
    gen: GenArgs,
    /// Directory for records.jsonl and index.json.
    #[arg(long)]
    results: Option<PathBuf>,
    /// Recorded-response universe (implies fixture mode).
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Talk to real resolvers and registries.
    #[arg(long, conflicts_with = "fixtures")]
    live: bool,
    /// Comma-separated TLDs.
    #[arg(long, value_delimiter = ',')]
    tlds: Option<Vec<String>>,
    /// Requests per second across all probes.
    #[arg(long)]
    rate: Option<f64>,
    /// Write null timestamps so reruns are byte-identical.
    #[arg(long)]
    normalize_timestamps: bool,
}

#[derive(Args, Debug)]
struct DomainsArgs {
    /// One target domain per line.
    #[arg(long)]
    targets: Option<PathBuf>,
    #[command(flatten)]
    probe: ProbeArgs,
}

#[derive(Args, Debug)]
struct PypiArgs {
    /// One package name per line.
    #[arg(long)]
    packages: Option<PathBuf>,
    #[command(flatten)]
    probe: ProbeArgs,
}

#[derive(Args, Debug)]
struct MinilangArgs {
    #[arg(long, default_value_t = 500)]
    words: usize,
    #[arg(long, default_value_t = 30)]
    pairs: usize,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn set<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

impl G2pArgs {
    fn apply(&self, cfg: &mut CliConfig) {
        set(&mut cfg.paths.dictionary, self.dictionary.clone());
        if let Some(program) = &self.g2p_command {
            cfg.g2p_command = Some(std::iter::once(program.clone()).chain(self.g2p_arg.iter().cloned()).collect());
        }
    }
}

impl GenArgs {
    fn apply(&self, cfg: &mut CliConfig) {
        let g = &mut cfg.generation;
        set(&mut g.c, self.c);
        set(&mut g.k, self.k);
        set(&mut g.extra_depth, self.extra_depth);
        set(&mut g.top, self.top);
    }
}

impl ProbeArgs {
    fn apply(&self, cfg: &mut CliConfig) {
        self.g2p.apply(cfg);
        self.gen.apply(cfg);
        set(&mut cfg.paths.candidates, self.candidates.clone());
        set(&mut cfg.paths.checkpoint, self.checkpoint.clone());
        set(&mut cfg.paths.results_dir, self.results.clone());
        let p = &mut cfg.probe;
        if let Some(f) = &self.fixtures {
            p.mode = soundsquat_probe::Mode::Fixture;
            p.fixtures_dir = Some(f.clone());
        }
        if self.live {
            p.mode = soundsquat_probe::Mode::Live;
        }
        if let Some(t) = &self.tlds {
            p.tlds = t.clone();
        }
        if let Some(r) = self.rate {
            p.rate_per_second = r;
        }
        p.normalize_timestamps |= self.normalize_timestamps;
    }
}

impl Cli {
    /// Defaults ← config file ← flags.
    fn resolve(&self) -> anyhow::Result<CliConfig> {
        let mut cfg = match &self.config {
            Some(p) => CliConfig::load(p)?,
            None => CliConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        set(&mut cfg.jobs, self.jobs);
        match &self.command {
            Command::Prepare(a) => {
                set(&mut cfg.paths.wordlist, a.wordlist.clone());
                set(&mut cfg.paths.out, a.out.clone());
                a.g2p.apply(&mut cfg);
            }
            Command::Train(a) => {
                set(&mut cfg.paths.manifest, a.manifest.clone());
                set(&mut cfg.paths.checkpoint, a.out.clone());
                set(&mut cfg.paths.metrics, a.metrics.clone());
                set(&mut cfg.paths.profiles, a.profiles.clone());
                if let Some(p) = a.preset {
                    cfg.preset = p;
                }
                if let Some(d) = a.dtype {
                    cfg.dtype = d;
                }
                let t = &mut cfg.train;
                set(&mut t.epochs, a.epochs);
                set(&mut t.lr, a.lr);
                set(&mut t.batch_size, a.batch_size);
                if a.no_audio_feedback {
                    t.audio_feedback = Some(false);
                }
                if a.all_rows {
                    t.all_rows = Some(true);
                }
            }
            Command::Generate(a) => {
                set(&mut cfg.paths.checkpoint, a.checkpoint.clone());
                set(&mut cfg.paths.targets, a.targets.clone());
                set(&mut cfg.paths.out, a.out.clone());
                if let Some(f) = a.format {
                    cfg.format = f;
                }
                a.g2p.apply(&mut cfg);
                a.gen.apply(&mut cfg);
            }
            Command::Eval(a) => {
                set(&mut cfg.paths.checkpoint, a.checkpoint.clone());
                set(&mut cfg.paths.sets, a.sets.clone());
                set(&mut cfg.paths.wordlist, a.wordlist.clone());
                set(&mut cfg.paths.out, a.out.clone());
                a.g2p.apply(&mut cfg);
                a.gen.apply(&mut cfg);
            }
            Command::Ablate(a) => set(&mut cfg.paths.out, a.out.clone()),
            Command::Domains(a) => {
                set(&mut cfg.paths.targets, a.targets.clone());
                a.probe.apply(&mut cfg);
            }
            Command::Pypi(a) => {
                set(&mut cfg.paths.packages, a.packages.clone());
                a.probe.apply(&mut cfg);
            }
            Command::Minilang(a) => set(&mut cfg.paths.out, a.out.clone()),
        }
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let cfg = match cli.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    if cli.dry_run {
        return match cfg.to_toml() {
            Ok(t) => {
                print!("{t}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(2)
            }
        };
    }
    let result = match &cli.command {
        Command::Prepare(_) => commands::prepare(&cfg),
        Command::Train(_) => commands::train(&cfg),
        Command::Generate(a) => commands::generate(&cfg, &a.word, &a.ipa, a.lang.as_deref()),
        Command::Eval(a) => commands::eval(&cfg, a.ecdf.as_deref()),
        Command::Ablate(a) => commands::ablate(&cfg, &a.with, &a.without),
        Command::Domains(_) => commands::domains(&cfg),
        Command::Pypi(_) => commands::pypi(&cfg),
        Command::Minilang(a) => commands::minilang(&cfg, a.words, a.pairs),
    };
    match result {
        Ok(commands::Status::Done) => ExitCode::SUCCESS,
        Ok(commands::Status::Partial) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
