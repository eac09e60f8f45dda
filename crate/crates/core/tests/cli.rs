use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL_CONFIG: &str = "\
seed = 5
[forest]
n_trees = 8
[harness]
retrain_window = 600
segment_length = 500
[decomposition]
period = 120
";

fn spec_text(kind: &str) -> String {
    let shift = match kind {
        "sudden" => "kind = \"sudden\"\na = \"low\"\nb = \"high\"\nswitch_index = 2500",
        _ => "kind = \"recurring\"\na = \"medium\"\nb = \"high\"\nblock_length = 1000\ncycles = 2",
    };
    let (a, b) = if kind == "sudden" { ("low", "high") } else { ("medium", "high") };
    format!(
        "name = \"{kind}_small\"\nrng_seed = 3\n\n[shift]\n{shift}\n\n\
         [[profiles]]\nname = \"{a}\"\npreset = \"{a}\"\nrng_seed = 1\ntotal_samples = 5000\n\n\
         [[profiles]]\nname = \"{b}\"\npreset = \"{b}\"\nrng_seed = 2\ntotal_samples = 5000\n"
    )
}

struct Env {
    dir: tempfile::TempDir,
}

impl Env {
    fn new() -> Self {
        let env = Env {
            dir: tempfile::tempdir().unwrap(),
        };
        fs::write(env.path("config.toml"), SMALL_CONFIG).unwrap();
        fs::write(env.path("sudden.toml"), spec_text("sudden")).unwrap();
        fs::write(env.path("recurring.toml"), spec_text("recurring")).unwrap();
        env
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_agewatch"))
            .args(args)
            .env_remove("AGEWATCH_SEED")
            .current_dir(self.dir.path())
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> Output {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        out
    }
}

fn read(path: impl AsRef<Path>) -> Vec<u8> {
    fs::read(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

fn assert_same_dirs(a: &Path, b: &Path) {
    let mut names: Vec<_> = fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(!names.is_empty());
    for name in names {
        assert_eq!(read(a.join(&name)), read(b.join(&name)), "{name:?} differs");
    }
}

#[test]
fn simulate_is_deterministic_and_honours_seed() {
    let env = Env::new();
    env.ok(&["simulate", "sudden.toml", "-c", "config.toml", "-o", "s1"]);
    env.ok(&["simulate", "sudden.toml", "-c", "config.toml", "-o", "s2"]);
    assert_same_dirs(&env.path("s1"), &env.path("s2"));
    let csv = String::from_utf8(read(env.path("s1/scenario.csv"))).unwrap();
    assert_eq!(csv.lines().next(), Some("elapsed_seconds,memory_used,label"));
    assert_eq!(csv.lines().count(), 5001);

    let seeded = Command::new(env!("CARGO_BIN_EXE_agewatch"))
        .args(["simulate", "sudden.toml", "-o", "s3"])
        .env("AGEWATCH_SEED", "77")
        .current_dir(env.dir.path())
        .output()
        .unwrap();
    assert!(seeded.status.success());
    assert_ne!(read(env.path("s1/scenario.csv")), read(env.path("s3/scenario.csv")));
    let cfg = String::from_utf8(read(env.path("s3/config.toml"))).unwrap();
    assert!(cfg.starts_with("seed = 77"), "{cfg}");
}

#[test]
fn standard_scenario_by_name() {
    let env = Env::new();
    env.ok(&["simulate", "--standard", "gradual_low_high", "-o", "g"]);
    let csv = String::from_utf8(read(env.path("g/scenario.csv"))).unwrap();
    assert_eq!(csv.lines().count(), 20_001);
    let out = env.run(&["simulate", "--standard", "nope", "-o", "g2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sudden_low_high"));
}

#[test]
fn label_pipeline_outputs() {
    let env = Env::new();
    env.ok(&["simulate", "sudden.toml", "-o", "s"]);
    // strip the label column to get a raw memory file
    let raw: String = String::from_utf8(read(env.path("s/scenario.csv")))
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string() + "\n")
        .collect();
    fs::write(env.path("raw.csv"), raw).unwrap();

    env.ok(&["label", "raw.csv", "-c", "config.toml", "-o", "l1"]);
    env.ok(&["label", "raw.csv", "-c", "config.toml", "-o", "l2"]);
    assert_same_dirs(&env.path("l1"), &env.path("l2"));
    let labeled = String::from_utf8(read(env.path("l1/labeled.csv"))).unwrap();
    assert_eq!(labeled.lines().count(), 5001);
    // default warm-up of 600 s at 5 s cadence
    assert_eq!(labeled.lines().filter(|l| l.ends_with(",warmup")).count(), 120);
    assert!(labeled.lines().any(|l| l.ends_with(",1,trend_window")));
    let decomposition = String::from_utf8(read(env.path("l1/decomposition.csv"))).unwrap();
    assert_eq!(decomposition.lines().count(), 5001 - 120);

    env.ok(&["label", "raw.csv", "-c", "config.toml", "--warmup-seconds", "0", "-o", "l3"]);
    let labeled = String::from_utf8(read(env.path("l3/labeled.csv"))).unwrap();
    assert!(!labeled.contains(",warmup"));

    fs::write(env.path("empty.csv"), "elapsed_seconds,memory_used\n").unwrap();
    let out = env.run(&["label", "empty.csv", "-o", "l4"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn train_is_deterministic_and_refuses_single_class() {
    let env = Env::new();
    env.ok(&["simulate", "sudden.toml", "-o", "s"]);
    env.ok(&["train", "s/scenario.csv", "-c", "config.toml", "-o", "t1"]);
    env.ok(&["train", "s/scenario.csv", "-c", "config.toml", "-o", "t2"]);
    assert_same_dirs(&env.path("t1"), &env.path("t2"));
    let kfold = String::from_utf8(read(env.path("t1/kfold.json"))).unwrap();
    assert!(kfold.contains("\"folds\": 5"));

    let one_class: String = String::from_utf8(read(env.path("s/scenario.csv")))
        .unwrap()
        .lines()
        .enumerate()
        .map(|(i, l)| {
            if i == 0 {
                format!("{l}\n")
            } else {
                format!("{},0\n", l.rsplit_once(',').unwrap().0)
            }
        })
        .collect();
    fs::write(env.path("normal.csv"), one_class).unwrap();
    let out = env.run(&["train", "normal.csv", "-o", "t3"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no Aging samples"));
    assert!(!env.path("t3/model.json").exists());
}

#[test]
fn run_outputs_and_static_adaptive_agreement() {
    let env = Env::new();
    env.ok(&["simulate", "sudden.toml", "-o", "s"]);
    fs::write(
        env.path("low.toml"),
        spec_text("sudden").replace("switch_index = 2500", "switch_index = 5000"),
    )
    .unwrap();
    env.ok(&["simulate", "low.toml", "-o", "low"]);
    env.ok(&["train", "low/scenario.csv", "-c", "config.toml", "-o", "t"]);

    let mut columns = Vec::new();
    for mode in ["static", "ddm"] {
        let dir = format!("r_{mode}");
        env.ok(&[
            "run", "s/scenario.csv", "--model", "t/model.json", "--mode", mode, "--svg", "-c", "config.toml", "-o", &dir,
        ]);
        env.ok(&[
            "run", "s/scenario.csv", "--model", "t/model.json", "--mode", mode, "--svg", "-c", "config.toml", "-o",
            &format!("{dir}_again"),
        ]);
        assert_same_dirs(&env.path(&dir), &env.path(&format!("{dir}_again")));
        for f in ["report.json", "events.csv", "plotdata.csv", "plot.svg", "config.toml"] {
            assert!(env.path(&dir).join(f).exists(), "{f}");
        }
        let plot = String::from_utf8(read(env.path(&dir).join("plotdata.csv"))).unwrap();
        let rows: Vec<Vec<String>> = plot
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(String::from).collect())
            .collect();
        columns.push(rows);
    }
    let (stat, ddm) = (&columns[0], &columns[1]);
    assert_eq!(stat.len(), ddm.len());
    let first = ddm
        .iter()
        .position(|r| r[6] == "retrained")
        .expect("ddm retrains on this stream");
    for i in 0..=first {
        assert_eq!(stat[i][4], ddm[i][4], "prediction {i} before the first retrain");
    }
    assert!((first + 1..stat.len()).any(|i| stat[i][4] != ddm[i][4]));
    let events = String::from_utf8(read(env.path("r_ddm/events.csv"))).unwrap();
    assert!(events.lines().any(|l| l.ends_with(",ddm,drift")));

    let out = env.ok(&["report", "r_ddm/report.json"]);
    let table = String::from_utf8(out.stdout).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(table.contains("| ddm |"));
}

#[test]
fn matrix_emits_every_pair() {
    let env = Env::new();
    env.ok(&["simulate", "sudden.toml", "-o", "s"]);
    env.ok(&["train", "s/scenario.csv", "-c", "config.toml", "-o", "t"]);
    let args = |out: &'static str| {
        vec![
            "matrix", "--scenario", "sudden.toml", "--scenario", "recurring.toml", "--model", "t/model.json", "-c",
            "config.toml", "-o", out,
        ]
    };
    env.ok(&args("m1"));
    env.ok(&args("m2"));
    assert_same_dirs(&env.path("m1"), &env.path("m2"));
    let csv = String::from_utf8(read(env.path("m1/matrix.csv"))).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    let out = env.ok(&["report", "m1/matrix.json", "-o", "table.md"]);
    assert!(out.stdout.is_empty());
    assert_eq!(String::from_utf8(read(env.path("table.md"))).unwrap().lines().count(), 2 + 6);
}

#[test]
fn usage_and_input_errors_exit_nonzero() {
    let env = Env::new();
    assert_eq!(env.run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(env.run(&["run", "x.csv", "-o", "o"]).status.code(), Some(2));
    assert_eq!(env.run(&["train", "missing.csv", "-o", "o"]).status.code(), Some(1));
    fs::write(env.path("bad.toml"), "seed = \"abc\"\n").unwrap();
    assert_eq!(
        env.run(&["simulate", "sudden.toml", "-c", "bad.toml", "-o", "o"]).status.code(),
        Some(1)
    );
    env.ok(&["simulate", "sudden.toml", "-o", "s"]);
    fs::write(env.path("model.json"), "{\"format\": \"other\"}").unwrap();
    let out = env.run(&["run", "s/scenario.csv", "--model", "model.json", "-o", "o"]);
    assert_eq!(out.status.code(), Some(1));
}
