//! The CLI end to end on a small simulated cohort.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use trajekt_cli::app::main_with_args;
use trajekt_cli::error::{EXIT_CONFIG, EXIT_DEPENDENCY, EXIT_OK};
use trajekt_cli::manifest::{file_sha256, Manifest, MANIFEST_FILE};
use trajekt_cli::stages::Stage;

const SMALL: &str = r#"
[cluster]
k_max = 8
restarts = 3
[msm]
bootstrap = 20
[survival]
min_size = 20
"#;

struct Workspace {
    _tmp: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        std::fs::write(root.join("small.toml"), SMALL).unwrap();
        let code = trajekt(&root, &["simulate", "--states", "4", "--patients", "200", "--seed", "1", "--out", "input"]);
        assert_eq!(code, EXIT_OK);
        Self { _tmp: tmp, root }
    }

    fn run(&self, out: &str, args: &[&str]) -> i32 {
        let mut all = vec!["--config", "small.toml", "--input", "input", "--output", out, "--k", "4"];
        all.extend_from_slice(args);
        trajekt(&self.root, &all)
    }
}

/// Runs the CLI with paths taken relative to `dir`.
fn trajekt(dir: &Path, args: &[&str]) -> i32 {
    let mut argv = vec!["trajekt".to_string(), "-q".to_string()];
    let mut path_next = false;
    for a in args {
        argv.push(if path_next { dir.join(a).to_string_lossy().into_owned() } else { a.to_string() });
        path_next = matches!(*a, "--config" | "--input" | "--output" | "--out");
    }
    main_with_args(argv)
}

fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn full_run_records_every_artifact() {
    let ws = Workspace::new();
    assert_eq!(ws.run("out", &["run"]), EXIT_OK);
    let out = ws.root.join("out");
    let text = std::fs::read_to_string(out.join(MANIFEST_FILE)).unwrap();
    let manifest: Manifest = serde_json::from_str(&text).unwrap();
    let names: Vec<&str> = manifest.stages.keys().map(String::as_str).collect();
    let mut want: Vec<&str> = Stage::ALL.iter().map(|s| s.name()).collect();
    want.sort();
    assert_eq!(names, want);
    for (stage, entry) in &manifest.stages {
        assert!(!entry.artifacts.is_empty(), "{stage}");
        for (rel, digest) in &entry.artifacts {
            assert_eq!(&file_sha256(&out.join(rel)).unwrap(), digest, "{stage}: {rel}");
        }
    }
    assert!(out.join("report/summary.txt").is_file());
}

#[test]
fn rerunning_later_stages_reproduces_a_full_run() {
    let ws = Workspace::new();
    assert_eq!(ws.run("full", &["run"]), EXIT_OK);
    assert_eq!(ws.run("part", &["run", "--stages", "ingest,cohort,impute,featurize,cluster"]), EXIT_OK);
    for stage in ["msm", "cox", "report"] {
        assert_eq!(ws.run("part", &[stage]), EXIT_OK, "{stage}");
    }
    assert!(snapshot(&ws.root.join("full")) == snapshot(&ws.root.join("part")));
}

#[test]
fn missing_upstream_artifacts_exit_with_dependency_code() {
    let ws = Workspace::new();
    assert_eq!(ws.run("empty", &["msm"]), EXIT_DEPENDENCY);
    assert_eq!(ws.run("empty", &["report"]), EXIT_DEPENDENCY);
}

#[test]
fn configuration_problems_exit_with_config_code() {
    let ws = Workspace::new();
    assert_eq!(trajekt(&ws.root, &["--config", "absent.toml", "ingest"]), EXIT_CONFIG);
    assert_eq!(trajekt(&ws.root, &["run", "--bogus"]), EXIT_CONFIG);
    assert_eq!(ws.run("out", &["run", "--stages", "cohort,nonsense"]), EXIT_CONFIG);
    assert_eq!(ws.run("out", &["cox", "--alpha", "1.5"]), EXIT_CONFIG);
    std::fs::write(ws.root.join("typo.toml"), "[cluster]\nkmax = 3\n").unwrap();
    assert_eq!(trajekt(&ws.root, &["--config", "typo.toml", "ingest"]), EXIT_CONFIG);
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let ws = Workspace::new();
    let again = |name: &str, seed: &str| {
        let code = trajekt(&ws.root, &["simulate", "--states", "4", "--patients", "200", "--seed", seed, "--out", name]);
        assert_eq!(code, EXIT_OK);
        snapshot(&ws.root.join(name))
    };
    let first = snapshot(&ws.root.join("input"));
    assert!(first.keys().any(|p| p.ends_with("truth.json")));
    assert!(again("same", "1") == first);
    assert!(again("other", "2") != first);
}
