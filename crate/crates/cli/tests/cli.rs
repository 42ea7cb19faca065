use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn idlora(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_idlora"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn count_params_lora_and_dora() {
    let dir = TempDir::new().unwrap();
    let o = idlora(dir.path(), &["count-params", "--arch", "llama3-8b", "--method", "lora", "--rank", "8", "--out", "c.json"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("20971520 21.0M"));
    let v = json(&dir.path().join("c.json"));
    assert_eq!(v["report"]["rows"][0]["count"], 20_971_520);
    assert_eq!(v["report"]["rows"][0]["display"], "21.0M");
    assert_eq!(v["provenance"]["command"], "count-params");

    let o = idlora(dir.path(), &["count-params", "--method", "dora", "--rank", "16"]);
    assert!(stdout(&o).contains("43319296 43.3M"));
}

#[test]
fn count_params_flags_the_idlora_gap() {
    let dir = TempDir::new().unwrap();
    let o = idlora(dir.path(), &["count-params", "--method", "idlora", "--rank", "8", "--split", "2", "--out", "c.json", "--csv", "c.csv"]);
    assert_eq!(code(&o), 0);
    let v = json(&dir.path().join("c.json"));
    assert_eq!(v["report"]["rows"][0]["count"], 2_754_304);
    assert!(v["report"]["notes"][0].as_str().unwrap().contains("7.7M"));
    let csv = fs::read_to_string(dir.path().join("c.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "arch,method,r,k,s,count,display");
}

#[test]
fn unknown_architecture_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&idlora(dir.path(), &["count-params", "--arch", "gpt-9"])), 3);
}

#[test]
fn basis_from_identity_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    assert_eq!(code(&idlora(d, &["make-matrix", "--rows", "8", "--cols", "8", "--identity", "--out", "w.idlm"])), 0);
    let run = |out: &str| idlora(d, &["basis", "--input", "w.idlm", "--clusters", "2", "--rank", "2", "--seed", "0", "--out", out, "--report", &format!("{out}.json")]);
    assert_eq!(code(&run("a.idlb")), 0);
    assert_eq!(code(&run("b.idlb")), 0);
    let a = fs::read(d.join("a.idlb")).unwrap();
    assert_eq!(a, fs::read(d.join("b.idlb")).unwrap());
    assert_eq!(fs::read(d.join("a.idlb.json")).unwrap().len(), fs::read(d.join("b.idlb.json")).unwrap().len());
    let rows = json(&d.join("a.idlb.json"))["report"]["row_indices"].clone();
    let mut all: Vec<u64> = rows.as_array().unwrap().iter().flat_map(|r| r.as_array().unwrap().iter().map(|x| x.as_u64().unwrap())).collect();
    all.sort_unstable();
    all.dedup();
    assert_eq!(all.len(), 4);
    assert_eq!(&a[..4], b"IDLB");
}

#[test]
fn single_cluster_basis_and_cluster_report() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    idlora(d, &["make-matrix", "--rows", "10", "--cols", "4", "--seed", "3", "--out", "w.idlm"]);
    assert_eq!(code(&idlora(d, &["basis", "--input", "w.idlm", "--clusters", "1", "--rank", "3", "--out", "b.idlb"])), 0);
    let o = idlora(d, &["cluster", "--input", "w.idlm", "--clusters", "2", "--min-size", "4", "--out", "c.json"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("cluster sizes"));
    let sizes = json(&d.join("c.json"))["report"]["sizes"].clone();
    assert!(sizes.as_array().unwrap().iter().all(|s| s.as_u64().unwrap() >= 4));
    assert_eq!(code(&idlora(d, &["cluster", "--input", "w.idlm", "--clusters", "3", "--min-size", "4"])), 3);
}

#[test]
fn bad_magic_and_missing_input_exit_two() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("bad.idlm"), b"XXXX\x01\0\0\0").unwrap();
    assert_eq!(code(&idlora(dir.path(), &["cluster", "--input", "bad.idlm", "--clusters", "2"])), 2);
    assert_eq!(code(&idlora(dir.path(), &["cluster", "--input", "none.idlm", "--clusters", "2"])), 2);
}

#[test]
fn reconstruction_study_passes_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let run = |out: &str| idlora(d, &["verify-theorem1", "--trials", "20", "--seed", "5", "--out", out, "--csv", &format!("{out}.csv")]);
    assert_eq!(code(&run("a.json")), 0);
    assert_eq!(code(&run("b.json")), 0);
    assert_eq!(fs::read(d.join("a.json")).unwrap(), fs::read(d.join("b.json")).unwrap());
    let v = json(&d.join("a.json"));
    assert_eq!(v["report"]["summary"]["ensembles"], 20);
    assert_eq!(v["provenance"]["seed"], 5);
    assert_eq!(fs::read_to_string(d.join("a.json.csv")).unwrap().lines().count(), 21);
}

#[test]
fn reconstruction_single_cluster_and_zero_trials() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    fs::write(d.join("one.toml"), "ensembles = 5\n[ensemble]\nk_true = 1\n").unwrap();
    let o = idlora(d, &["verify-theorem1", "--config", "one.toml", "--out", "r.json"]);
    assert_eq!(code(&o), 0);
    for e in json(&d.join("r.json"))["report"]["ensembles"].as_array().unwrap() {
        assert!(e["delta"].as_f64().unwrap().abs() < 1e-9);
    }
    assert_eq!(code(&idlora(d, &["verify-theorem1", "--trials", "0"])), 3);
    fs::write(d.join("bad.toml"), "nonsense = 1\n").unwrap();
    assert_eq!(code(&idlora(d, &["verify-theorem1", "--config", "bad.toml"])), 3);
}

#[test]
fn pivot_study_passes_on_rare_cluster_default() {
    let dir = TempDir::new().unwrap();
    let o = idlora(dir.path(), &["verify-theorem2", "--trials", "60", "--out", "p.json", "--csv", "p.csv"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let v = json(&dir.path().join("p.json"));
    assert!(v["report"]["ci_low"].as_f64().unwrap() >= 0.0);
    assert!(v["report"]["local_distribution"].as_str().unwrap().contains("centroid"));
    let csv = fs::read_to_string(dir.path().join("p.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "trial,global_max_error,local_max_error");
}

#[test]
fn gradcheck_default_passes() {
    let dir = TempDir::new().unwrap();
    let o = idlora(dir.path(), &["gradcheck", "--layers", "3", "--out", "g.json"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert_eq!(json(&dir.path().join("g.json"))["report"].as_array().unwrap().len(), 9);
}

#[test]
fn zero_learning_rate_history_is_flat() {
    let dir = TempDir::new().unwrap();
    let o = idlora(dir.path(), &["train", "--method", "lora", "--lr", "0", "--epochs", "3", "--out", "h.csv"]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(dir.path().join("h.csv")).unwrap();
    let losses: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(losses.len(), 4);
    assert!(losses.iter().all(|l| *l == losses[0]));
}

#[test]
fn matched_budget_histories_carry_parameter_counts() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    fs::write(
        d.join("run.toml"),
        "[data]\nd_in = 16\nd_out = 16\n[train]\nepochs = 3\n\
         [[adapter]]\nmethod = \"lora\"\nr = 4\n\
         [[adapter]]\nmethod = \"idlora\"\nr = 6\nk = 2\ns = 2\n",
    )
    .unwrap();
    let o = idlora(d, &["train", "--config", "run.toml", "--out", "h.csv", "--report", "r.json"]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(d.join("h.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "step,loss,seed,method,trainable_params");
    assert!(text.lines().any(|l| l.ends_with(",lora,128")));
    assert!(text.lines().any(|l| l.ends_with(",idlora,30")));
}

#[test]
fn saved_adapter_evaluates_to_final_loss() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let o = idlora(d, &["train", "--method", "idlora", "--rank", "4", "--clusters", "2", "--epochs", "4", "--seed", "2", "--save-adapter", "a.idla", "--report", "r.json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let final_loss = json(&d.join("r.json"))["report"]["runs"][0]["final_loss"].as_f64().unwrap();
    let o = idlora(d, &["eval", "--adapter", "a.idla", "--seed", "2", "--out", "e.json"]);
    assert_eq!(code(&o), 0);
    let mean = json(&d.join("e.json"))["report"]["mean"].as_f64().unwrap();
    assert!((mean - final_loss).abs() <= 1e-12 * final_loss);
    fs::write(d.join("junk.idla"), b"nope").unwrap();
    assert_eq!(code(&idlora(d, &["eval", "--adapter", "junk.idla"])), 2);
}

#[test]
fn divergence_and_bad_threads() {
    let dir = TempDir::new().unwrap();
    let o = idlora(dir.path(), &["train", "--method", "lora", "--lr", "1e9", "--optimizer", "sgd"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("step"));
    let o = Command::new(env!("CARGO_BIN_EXE_idlora"))
        .current_dir(dir.path())
        .env("IDLORA_THREADS", "zero")
        .args(["gradcheck", "--layers", "1"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 3);
}

#[test]
fn thread_cap_does_not_change_reports() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let run = |threads: &str, out: &str| {
        Command::new(env!("CARGO_BIN_EXE_idlora"))
            .current_dir(d)
            .env("IDLORA_THREADS", threads)
            .args(["verify-theorem2", "--trials", "40", "--out", out])
            .output()
            .unwrap()
    };
    assert_eq!(code(&run("1", "a.json")), 0);
    assert_eq!(code(&run("4", "b.json")), 0);
    assert_eq!(fs::read(d.join("a.json")).unwrap(), fs::read(d.join("b.json")).unwrap());
}
