use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_soundsquat"));
    c.env_remove("RUST_LOG");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn soundsquat")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn universe() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../probe/tests/fixtures/universe")
}

/// CLI config wrapping the universe's probe settings.
fn universe_config(dir: &Path) -> PathBuf {
    let u = universe().canonicalize().unwrap();
    let probe = std::fs::read_to_string(u.join("probe.toml")).unwrap().replace(
        "fixtures_dir = \".\"",
        &format!("fixtures_dir = {:?}", u.display().to_string()),
    );
    let path = dir.join("cli.toml");
    std::fs::write(&path, format!("seed = 3\n\n[probe]\n{probe}")).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn missing_checkpoint_is_fatal_and_names_the_path() {
    let o = run(&["generate", "--checkpoint", "/definitely/not/here.json", "--ipa", "ˈbaɪ"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("/definitely/not/here.json"), "{}", stderr(&o));
}

#[test]
fn dry_run_prints_a_loadable_config_for_every_subcommand() {
    let tmp = TempDir::new().unwrap();
    let cases: &[&[&str]] = &[
        &["prepare", "--wordlist", "w.txt"],
        &["train", "--manifest", "m.tsv", "--out", "m.json", "--epochs", "7"],
        &["generate", "--checkpoint", "m.json", "--ipa", "ˈbaɪ", "--k", "16"],
        &["eval", "--checkpoint", "m.json", "--sets", "s.tsv"],
        &["ablate", "--with", "a.json", "--without", "b.json"],
        &["domains", "--targets", "t.txt", "--tlds", "com,net"],
        &["pypi", "--packages", "p.txt", "--rate", "2"],
        &["minilang", "--out", "ml"],
    ];
    for args in cases {
        let mut full = vec!["--dry-run", "--seed", "11"];
        full.extend_from_slice(args);
        let o = run(&full);
        assert_eq!(code(&o), 0, "{args:?}: {}", stderr(&o));
        let path = tmp.path().join("effective.toml");
        std::fs::write(&path, &o.stdout).unwrap();
        // The printed configuration must load back through --config.
        let again = run(&["--config", s(&path), "--dry-run", "minilang", "--out", "x"]);
        assert_eq!(code(&again), 0, "{args:?}: {}", stderr(&again));
        let text = String::from_utf8(o.stdout).unwrap();
        assert!(text.contains("seed = 11"), "{text}");
    }
    let o = run(&[
        "--dry-run",
        "train",
        "--manifest",
        "m.tsv",
        "--out",
        "m.json",
        "--epochs",
        "7",
    ]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("epochs = 7"));
    let o = run(&["--dry-run", "domains", "--targets", "t.txt", "--tlds", "com,net"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("\"net\""));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("bad.toml");
    std::fs::write(&path, "seed = 1\nbeam_width = 9\n").unwrap();
    let o = run(&["--config", s(&path), "--dry-run", "minilang", "--out", "x"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("beam_width"), "{}", stderr(&o));

    std::fs::write(&path, "[probe]\nconcurency = 3\n").unwrap();
    let o = run(&["--config", s(&path), "--dry-run", "minilang", "--out", "x"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn prepare_writes_one_row_per_resolved_word_and_skips_the_rest() {
    let tmp = TempDir::new().unwrap();
    let dict = tmp.path().join("dict.tsv");
    std::fs::write(&dict, "by\tbˈaɪ\nbuy\tbˈaɪ\ncat\tkˈæt\n").unwrap();
    let words = tmp.path().join("words.txt");
    std::fs::write(&words, "by\nbuy\ncat\n").unwrap();
    let out = tmp.path().join("manifest.tsv");

    let o = run(&[
        "prepare",
        "--wordlist",
        s(&words),
        "--dictionary",
        s(&dict),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().any(|l| l.starts_with("cat\tkˈæt")), "{text}");

    std::fs::write(&words, "by\nqqqq\ncat\n").unwrap();
    let o = run(&[
        "prepare",
        "--wordlist",
        s(&words),
        "--dictionary",
        s(&dict),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 1, "a skipped word is a partial failure");
    assert!(stderr(&o).contains("qqqq"));
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 2);

    std::fs::write(&words, "qqqq\n").unwrap();
    let o = run(&[
        "prepare",
        "--wordlist",
        s(&words),
        "--dictionary",
        s(&dict),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 2, "nothing transcribed is fatal");
}

#[test]
fn minilang_output_is_deterministic_per_seed() {
    let tmp = TempDir::new().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    for (dir, seed) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        let o = run(&[
            "--seed",
            seed,
            "minilang",
            "--words",
            "80",
            "--pairs",
            "6",
            "--out",
            s(dir),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in ["dictionary.tsv", "wordlist.txt", "manifest.tsv", "sets.tsv"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    assert_ne!(
        std::fs::read(a.join("dictionary.tsv")).unwrap(),
        std::fs::read(c.join("dictionary.tsv")).unwrap()
    );
    let sets = std::fs::read_to_string(a.join("sets.tsv")).unwrap();
    assert_eq!(sets.lines().count(), 6);
    assert_eq!(
        std::fs::read_to_string(a.join("wordlist.txt")).unwrap().lines().count(),
        80
    );
}

#[test]
fn domain_probe_over_fixtures_is_partial_and_reproducible() {
    let tmp = TempDir::new().unwrap();
    let cfg = universe_config(tmp.path());
    let u = universe();
    let mut records = Vec::new();
    for (dir, jobs) in [("r1", "4"), ("r2", "1")] {
        let results = tmp.path().join(dir);
        let o = run(&[
            "--config",
            s(&cfg),
            "--jobs",
            jobs,
            "domains",
            "--targets",
            s(&u.join("targets.txt")),
            "--candidates",
            s(&u.join("candidates.tsv")),
            "--results",
            s(&results),
        ]);
        // co.uk is not registrable and pornhubb.ru never answers.
        assert_eq!(code(&o), 1, "{}", stderr(&o));
        let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        assert_eq!(summary["candidate_domains"], 20);
        assert_eq!(summary["existing"], 12);
        assert_eq!(summary["failures"][0]["name"], "pornhubb.ru");
        records.push(std::fs::read(results.join("records.jsonl")).unwrap());
        assert!(results.join("index.json").exists());
    }
    assert_eq!(records[0], records[1]);
    assert_eq!(records[0].iter().filter(|&&b| b == b'\n').count(), 19);
}

#[test]
fn package_probe_over_fixtures_matches_the_expected_table() {
    let tmp = TempDir::new().unwrap();
    let cfg = universe_config(tmp.path());
    let u = universe();
    let results = tmp.path().join("pkgs");
    let o = run(&[
        "--config",
        s(&cfg),
        "pypi",
        "--packages",
        s(&u.join("packages.txt")),
        "--candidates",
        s(&u.join("package_candidates.tsv")),
        "--results",
        s(&results),
    ]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["existing"], 6);
    assert_eq!(summary["zero_star_zero_fork"], 3);
    let failed: Vec<&str> = summary["failures"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["name"].as_str().unwrap())
        .collect();
    assert!(failed.contains(&"pandaz") && failed.contains(&"phlask"), "{failed:?}");
}

#[test]
fn train_then_generate_round_trip() {
    let tmp = TempDir::new().unwrap();
    let manifest = tmp.path().join("m.tsv");
    std::fs::write(
        &manifest,
        "by\tbˈaɪ\tSYNTH\nbuy\tbˈaɪ\tSYNTH\ncat\tkˈæt\tSYNTH\nsea\tsˈiː\tSYNTH\n",
    )
    .unwrap();
    let ckpt = tmp.path().join("model.json");
    let metrics = tmp.path().join("metrics.csv");
    let o = run(&[
        "train",
        "--manifest",
        s(&manifest),
        "--out",
        s(&ckpt),
        "--metrics",
        s(&metrics),
        "--epochs",
        "2",
        "--all-rows",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["examples"], 4);
    assert_eq!(summary["epochs_run"], 2);
    assert!(summary["best_validation_loss"].is_null());
    assert!(ckpt.exists() && metrics.exists());

    let gen = |fmt: &str| {
        run(&[
            "generate",
            "--checkpoint",
            s(&ckpt),
            "--ipa",
            "bˈaɪ",
            "--k",
            "8",
            "--top",
            "3",
            "--format",
            fmt,
        ])
    };
    let (a, b) = (gen("jsonl"), gen("jsonl"));
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let lines: Vec<serde_json::Value> = String::from_utf8(a.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(!lines.is_empty() && lines.len() <= 3);
    assert_eq!(lines[0]["rank"], 1);
    let csv = gen("csv");
    assert_eq!(code(&csv), 0);
    assert!(String::from_utf8_lossy(&csv.stdout).starts_with("target,"));

    // An empty transcription alone is fatal; mixed with a good one it is partial.
    let o = run(&["generate", "--checkpoint", s(&ckpt), "--ipa", "//"]);
    assert_eq!(code(&o), 2);
    let o = run(&[
        "generate",
        "--checkpoint",
        s(&ckpt),
        "--ipa",
        "//",
        "--ipa",
        "bˈaɪ",
        "--k",
        "4",
    ]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn prepare_through_an_external_transcriber() {
    let tmp = TempDir::new().unwrap();
    let words = tmp.path().join("words.txt");
    std::fs::write(&words, "by\ncat\n").unwrap();
    // The language tag reaches the transcriber through `{lang}`.
    let script = "while IFS= read -r w; do case \"$w\" in by) echo \"bˈaɪ\";; *) echo;; esac; done; echo $0 >&2";
    let o = run(&[
        "prepare",
        "--wordlist",
        s(&words),
        "--g2p-command",
        "sh",
        "--g2p-arg",
        "-c",
        "--g2p-arg",
        script,
        "--g2p-arg",
        "{lang}",
    ]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    assert_eq!(String::from_utf8_lossy(&o.stdout), "by\tbˈaɪ\tSYNTH\n");
    assert!(stderr(&o).contains("cat"));
}
