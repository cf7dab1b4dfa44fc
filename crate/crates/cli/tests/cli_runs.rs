use proptest::prelude::*;
use std::path::{Path, PathBuf};
use std::process::Command;
use tvqueue_cli::config::{ExperimentConfig, Suite};
use tvqueue_cli::{EXIT_CAPS, EXIT_CONFIG, EXIT_OK, EXIT_REJECTED};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tvqueue"))
}

fn run(args: &[&str]) -> i32 {
    let status = bin().args(args).output().expect("binary runs");
    if !status.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&status.stderr));
    }
    status.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const DRAIN: &str = r#"
[model]
rate = { kind = "constant", level = 0.0, lambda_h = 1.0 }
joint = { kind = "infinite-patience", service = { kind = "exponential", rate = 1.0 } }
g = { kind = "power", exponent = 1.0 }
init = { kind = "workload", x = 3.0 }

[run]
reps = 1
"#;

const BUSY: &str = r#"
[model]
rate = { kind = "sinusoid", base = 0.4, amplitude = 0.2, kappa = 1.0, lambda_h = 0.6 }
joint = { kind = "product", service = { kind = "exponential", rate = 1.0 }, patience = { kind = "exponential", rate = 1.0 } }
g = { kind = "power", exponent = 1.0 }

[run]
reps = 300
seed = 5
"#;

#[test]
fn drain_example_gives_one_exact_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "drain.toml", DRAIN);
    let out = dir.path().join("out");
    assert_eq!(run(&["simulate", "--config", s(&cfg), "--out-dir", s(&out), "--trace"]), EXIT_OK);
    let text = std::fs::read_to_string(out.join("samples.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("rep,duration,A,A_star,eta_star,balk_patience,balk_room"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[1].parse::<f64>().unwrap(), 3.0);
    assert_eq!(row[2].parse::<f64>().unwrap(), 4.5);
    assert!(lines.next().is_none());
    let trace = std::fs::read_to_string(out.join("trace/rep_0.csv")).unwrap();
    assert!(trace.starts_with("time,kind,W_pre,jump,L_pre\n"));
}

#[test]
fn unstable_stability_verdict_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "u.toml",
        r#"
[model]
rate = { kind = "constant", level = 2.0, lambda_h = 2.0 }
joint = { kind = "infinite-patience", service = { kind = "exponential", rate = 1.0 } }
"#,
    );
    let out = dir.path().join("out");
    assert_eq!(run(&["stability", "--config", s(&cfg), "--out-dir", s(&out)]), EXIT_OK);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(v["verdict"], "unstable");
    assert_eq!(v["report"]["rho_eff"], 2.0);
}

#[test]
fn shifted_sample_files_are_rejected_under_strict() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "busy.toml", BUSY);
    let sim = dir.path().join("sim");
    assert_eq!(run(&["simulate", "--config", s(&cfg), "--out-dir", s(&sim), "--reps", "2000"]), EXIT_OK);
    // lower = upper + 1 on every row.
    let text = std::fs::read_to_string(sim.join("samples.csv")).unwrap();
    let mut shifted = String::from("A\n");
    for line in text.lines().skip(1) {
        let a: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        shifted.push_str(&format!("{}\n", a + 1.0));
    }
    let lower = write(dir.path(), "lower.csv", &shifted);
    let files = format!(
        "{BUSY}suite = \"files\"\nfiles = {{ lower = {:?}, upper = {:?} }}\n",
        s(&lower),
        s(&sim.join("samples.csv"))
    );
    let cfg = write(dir.path(), "files.toml", &files);
    let out = dir.path().join("dom");
    assert_eq!(run(&["dominance", "--config", s(&cfg), "--out-dir", s(&out), "--strict"]), EXIT_REJECTED);
    assert_eq!(run(&["dominance", "--config", s(&cfg), "--out-dir", s(&out)]), EXIT_OK);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(v["comparisons"][0]["verdict"]["verdict"], "rejected");

    // The honest direction passes under --strict.
    let files = format!(
        "{BUSY}suite = \"files\"\nfiles = {{ lower = {:?}, upper = {:?} }}\n",
        s(&sim.join("samples.csv")),
        s(&lower)
    );
    let cfg = write(dir.path(), "files2.toml", &files);
    assert_eq!(run(&["dominance", "--config", s(&cfg), "--out-dir", s(&out), "--strict"]), EXIT_OK);
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(run(&["simulate", "--config", "/nonexistent.toml", "--out-dir", s(&out)]), EXIT_CONFIG);
    let over = write(
        dir.path(),
        "over.toml",
        r#"
[model]
rate = { kind = "sinusoid", base = 0.5, amplitude = 0.6, kappa = 1.0, lambda_h = 1.0 }
joint = { kind = "infinite-patience", service = { kind = "exponential", rate = 1.0 } }
"#,
    );
    assert_eq!(run(&["simulate", "--config", s(&over), "--out-dir", s(&out)]), EXIT_CONFIG);
    let cfg = write(dir.path(), "drain.toml", DRAIN);
    // Cycle runs need a periodic rate.
    assert_eq!(run(&["bound", "--config", s(&cfg), "--out-dir", s(&out)]), EXIT_CONFIG);
    assert_eq!(run(&["simulate", "--config", s(&cfg), "--out-dir", s(&out), "--alpha", "0.7"]), EXIT_CONFIG);
    let typo = write(dir.path(), "typo.toml", &DRAIN.replace("reps = 1", "repz = 1"));
    assert_eq!(run(&["simulate", "--config", s(&typo), "--out-dir", s(&out)]), EXIT_CONFIG);
    assert_eq!(run(&["simulate", "--bogus-flag"]), EXIT_CONFIG);
}

#[test]
fn caps_exceeded_exit_four_and_are_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{BUSY}caps = {{ max_events = 3, max_time = 1e7 }}\n");
    let cfg = write(dir.path(), "caps.toml", &text);
    let out = dir.path().join("out");
    assert_eq!(run(&["simulate", "--config", s(&cfg), "--out-dir", s(&out)]), EXIT_CAPS);
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    let incidents = m["cap_incidents"].as_array().unwrap();
    assert!(!incidents.is_empty());
    let rows = std::fs::read_to_string(out.join("samples.csv")).unwrap().lines().count() - 1;
    assert_eq!(rows + incidents.len(), 300);
}

fn files_under(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_string_lossy().into_owned());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn manifest_replay_is_byte_identical_and_indexes_everything() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "busy.toml", BUSY);
    let first = dir.path().join("first");
    assert_eq!(run(&["simulate", "--config", s(&cfg), "--out-dir", s(&first), "--trace", "--threads", "3"]), EXIT_OK);
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(first.join("manifest.json")).unwrap()).unwrap();
    let mut indexed: Vec<String> = m["outputs"].as_array().unwrap().iter().map(|o| o["path"].as_str().unwrap().to_string()).collect();
    indexed.push("manifest.json".into());
    indexed.sort();
    assert_eq!(files_under(&first), indexed);
    assert_eq!(indexed.iter().filter(|p| p.starts_with("trace")).count(), 300);

    let second = dir.path().join("second");
    let manifest = first.join("manifest.json");
    assert_eq!(run(&["simulate", "--config", s(&manifest), "--out-dir", s(&second)]), EXIT_OK);
    assert_eq!(std::fs::read(first.join("samples.csv")).unwrap(), std::fs::read(second.join("samples.csv")).unwrap());
    let m2: serde_json::Value = serde_json::from_slice(&std::fs::read(second.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config_hash"], m2["config_hash"]);
    assert_eq!(m["seed"], 5);
}

#[test]
fn dominance_suites_write_paired_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "busy.toml", &format!("{BUSY}suite = \"rooms\"\nks = [0, 2, \"inf\"]\n"));
    let out = dir.path().join("out");
    assert_eq!(run(&["dominance", "--config", s(&cfg), "--out-dir", s(&out)]), EXIT_OK);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    // Two ladder steps plus lambda-vs-lambda_h at k = 0 and k = 2, each on A and A*.
    assert_eq!(v["comparisons"].as_array().unwrap().len(), 8);
    let paired = std::fs::read_to_string(out.join("paired.csv")).unwrap();
    assert!(paired.starts_with("rep,arm,duration,A,A_star,eta_star,dominance_flag\n"));
    assert_eq!(paired.lines().count() - 1, 300 * (3 + 2 + 2));

    let conj = format!(
        "{BUSY}suite = \"conjecture\"\nupper_rate = {{ kind = \"sinusoid\", base = 0.45, amplitude = 0.15, kappa = 1.0, lambda_h = 0.6 }}\n"
    );
    let cfg = write(dir.path(), "conj.toml", &conj);
    assert_eq!(run(&["dominance", "--config", s(&cfg), "--out-dir", s(&out)]), EXIT_OK);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(v["label"], "conjecture evidence");
    assert!(v["comparisons"].as_array().unwrap().iter().all(|c| c["label"] == "conjecture evidence"));
}

#[test]
fn validate_runs_without_a_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(run(&["validate", "--out-dir", s(&out)]), EXIT_OK);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(v["all_pass"], true);
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in std::fs::read_dir(root).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "toml") {
            let cfg = ExperimentConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            cfg.check().unwrap();
            n += 1;
        }
    }
    assert!(n >= 3);
}

proptest! {
    #[test]
    fn configs_round_trip_through_toml(
        reps in 1u64..1_000_000,
        seed in any::<u64>(),
        alpha in 1e-6f64..0.49,
        base in 0.0f64..1.0,
        amp in 0.0f64..1.0,
        rate in 1e-3f64..1e3,
        trace in any::<bool>(),
        suite in prop::sample::select(vec![Suite::Rates, Suite::Rooms, Suite::AllJoin, Suite::Conjecture]),
    ) {
        let text = format!(
            r#"
[model]
rate = {{ kind = "sinusoid", base = {base:?}, amplitude = {amp:?}, kappa = 1.0, lambda_h = {:?} }}
joint = {{ kind = "gaussian-copula", correlation = 0.3, service = {{ kind = "exponential", rate = {rate:?} }}, patience = {{ kind = "pareto", shape = 1.5, scale = 0.5, atom_at_infinity = 0.25 }} }}
g = {{ kind = "exp-decay", alpha = 0.5 }}

[run]
reps = {reps}
seed = {seed}
alpha = {alpha:?}

[output]
trace = {trace}
"#,
            base + amp
        );
        let mut cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        cfg.run.suite = suite;
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        prop_assert_eq!(&back, &cfg);
        let json = serde_json::to_string(&cfg).unwrap();
        prop_assert_eq!(serde_json::from_str::<ExperimentConfig>(&json).unwrap(), cfg.clone());
        prop_assert_eq!(back.hash(), cfg.hash());
    }
}
