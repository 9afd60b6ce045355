use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rand::SeedableRng;
use tempfile::TempDir;

use wenas::cellspace::Genome;
use wenas::lmdata::MarkovSource;
use wenas::rngs::Rng;

fn wenas(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wenas"))
        .current_dir(dir)
        .env_remove("WENAS_THREADS")
        .env_remove("RUST_LOG")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// A small Markov-chain corpus in `dir`.
fn corpus(dir: &Path) {
    let mut rng = Rng::seed_from_u64(3);
    let src = MarkovSource::new(6, &[2.0, 1.5], &mut rng).unwrap();
    for (name, len) in [("train.txt", 2400), ("valid.txt", 600), ("test.txt", 600)] {
        let seq = src.sample(len, &mut rng);
        fs::write(dir.join(name), MarkovSource::render(&seq, 60)).unwrap();
    }
}

const TINY: &[&str] = &[
    "--total-nets", "4", "--net-batch", "2", "--seed-size", "1", "--levels", "4",
    "--epochs-per-round", "1", "--emb-dim", "6", "--hidden-dim", "6",
    "--batch", "4", "--bptt", "6", "--seed", "5",
];

#[test]
fn generate_writes_distinct_genomes_with_run_config() {
    let dir = TempDir::new().unwrap();
    let o = wenas(dir.path(), &["generate", "--levels", "2", "--count", "4", "--seed", "1"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# run-config: {"));
    let genomes: Vec<Genome> = lines.map(|l| Genome::from_json(l).unwrap()).collect();
    assert_eq!(genomes.len(), 4);
    for (i, a) in genomes.iter().enumerate() {
        assert!(!genomes[..i].contains(a));
    }
}

#[test]
fn generate_rejects_more_genomes_than_the_space_holds() {
    let dir = TempDir::new().unwrap();
    let o = wenas(dir.path(), &["generate", "--levels", "2", "--count", "5"]);
    assert_eq!(code(&o), 2);
    let o = wenas(dir.path(), &["generate", "--levels", "2", "--count", "5", "--allow-dup"]);
    assert_eq!(code(&o), 0);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&wenas(dir.path(), &["frobnicate"])), 2);
    assert_eq!(code(&wenas(dir.path(), &["generate", "--levels", "1"])), 2);
    assert_eq!(code(&wenas(dir.path(), &["search", "--dry-run", "--net-batch", "3", "--seed-size", "4"])), 2);
    let o = wenas(dir.path(), &["search", "--dry-run", "--report", "same.csv", "--report-json", "same.csv"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("used twice"));
    assert_eq!(code(&wenas(dir.path(), &["--help"])), 0);
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let o = wenas(dir.path(), &["search", "--corpus", "missing-dir"]);
    assert_eq!(code(&o), 1);
    fs::write(dir.path().join("g.json"), Genome::from_pairs(&[("tanh", 0)]).unwrap().to_json()).unwrap();
    let o = wenas(dir.path(), &["eval", "--genome", "g.json", "--corpus", "missing-dir"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("run.conf"), "# generator settings\nlevels = 3\ncount = 3\nseed = 9\nallow_dup = false\n").unwrap();
    let o = wenas(dir.path(), &["generate", "--config", "run.conf"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let genomes: Vec<Genome> = text.lines().skip(1).map(|l| Genome::from_json(l).unwrap()).collect();
    assert_eq!(genomes.len(), 3);
    assert!(genomes.iter().all(|g| g.levels == 3));
    assert!(text.lines().next().unwrap().contains("run.conf"));

    let o = wenas(dir.path(), &["generate", "--config", "run.conf", "--count", "1"]);
    assert_eq!(stdout(&o).lines().count(), 2);

    fs::write(dir.path().join("bad.conf"), "levels three\n").unwrap();
    assert_eq!(code(&wenas(dir.path(), &["generate", "--config", "bad.conf"])), 2);
}

#[test]
fn search_report_and_eval_round_trip() {
    let dir = TempDir::new().unwrap();
    corpus(dir.path());
    let mut args = vec!["--threads", "1", "search", "--corpus", ".", "--trajectory", "traj.csv"];
    args.extend_from_slice(TINY);
    let o = wenas(dir.path(), &args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("after 2 rounds, 2 epochs"));

    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("genome.json")).unwrap()).unwrap();
    assert_eq!(doc["run_config"]["command"], "search");
    let best = Genome::from_json(&doc.to_string()).unwrap();
    assert_eq!(best.levels, 4);

    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# run-config: "));
    assert_eq!(lines.next().unwrap(), "round,rank,net_index,genome,weight");
    // Round 1 trains 2 networks, round 2 trains 2 more plus 1 seed.
    assert_eq!(lines.count(), 5);
    assert!(dir.path().join("report.json").exists());
    assert!(fs::read_to_string(dir.path().join("traj.csv")).unwrap().starts_with("# run-config: "));

    let o = wenas(dir.path(), &["report", "--report", "report.csv"]);
    assert_eq!(code(&o), 0);
    let summary = stdout(&o);
    assert_eq!(summary.lines().count(), 3);
    assert!(summary.lines().nth(2).unwrap().starts_with("2,3,"));
    let o = wenas(dir.path(), &["report", "--report", "report.csv", "--round", "3"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("1..=2"));

    let o = wenas(
        dir.path(),
        &[
            "eval", "--genome", "genome.json", "--corpus", ".", "--epochs", "1", "--emb-dim", "6",
            "--hidden-dim", "6", "--batch", "4", "--bptt", "6", "--checkpoint", "model.json",
            "--report", "eval.json",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("final valid"));
    let ck = wenas::model::Checkpoint::load(dir.path().join("model.json")).unwrap();
    assert_eq!(ck.genome, best);
    assert_eq!(ck.run_config["command"], "eval");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("eval.json")).unwrap()).unwrap();
    assert_eq!(report["run_config"]["command"], "eval");
}

#[test]
fn eval_accepts_pair_notation() {
    let dir = TempDir::new().unwrap();
    corpus(dir.path());
    fs::write(dir.path().join("cell.txt"), "[('sigmoid', 0), ('tanh', 1)]\n").unwrap();
    let o = wenas(
        dir.path(),
        &["eval", "--genome", "cell.txt", "--corpus", ".", "--epochs", "0", "--emb-dim", "4", "--hidden-dim", "4"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn repeated_search_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    corpus(dir.path());
    let mut args = vec!["--threads", "1", "search", "--corpus", "."];
    args.extend_from_slice(TINY);
    let read = |name: &str| fs::read(dir.path().join(name)).unwrap();
    assert_eq!(code(&wenas(dir.path(), &args)), 0);
    let first = (read("genome.json"), read("report.csv"), read("report.json"));
    assert_eq!(code(&wenas(dir.path(), &args)), 0);
    assert_eq!(first, (read("genome.json"), read("report.csv"), read("report.json")));
}

#[test]
fn threads_fall_back_to_environment() {
    let dir = TempDir::new().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_wenas"))
        .current_dir(dir.path())
        .env("WENAS_THREADS", "many")
        .args(["generate", "--count", "1"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    let o = Command::new(env!("CARGO_BIN_EXE_wenas"))
        .current_dir(dir.path())
        .env("WENAS_THREADS", "1")
        .args(["search", "--dry-run", "--total-nets", "10000", "--net-batch", "100", "--seed-size", "20"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("after 100 rounds, 200 epochs (dry run)"));
}
