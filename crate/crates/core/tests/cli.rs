//! End-to-end runs of the `bmfim` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bmfim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bmfim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = bmfim(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    bmfim(args).status.code().expect("exited normally")
}

struct Dir(TempDir);

impl Dir {
    fn new() -> Self {
        Dir(TempDir::new().unwrap())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.path().join(name)
    }

    fn file(&self, name: &str, contents: &str) -> String {
        let p = self.path(name);
        fs::write(&p, contents).unwrap();
        s(&p)
    }
}

fn s(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

const TOY: &str = "1 2 3\n1 2\n2 3\n1 3\n";

/// Itemset lines as (labels, measure).
fn itemsets(path: &Path) -> Vec<(Vec<u64>, f64)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            let (items, m) = l.split_once('\t').expect("tab separated");
            let items = items.split(' ').map(|t| t.parse().unwrap()).collect();
            (items, m.parse().unwrap())
        })
        .collect()
}

#[test]
fn mine_writes_every_frequent_itemset() {
    let d = Dir::new();
    let input = d.file("toy.dat", TOY);
    let out = d.path("toy.fis");
    let stdout = ok(&["mine", "--input", &input, "--minsup", "0.5", "--output", &s(&out)]);
    assert!(stdout.contains("length 1: 3"), "{stdout}");
    assert!(stdout.contains("length 2: 3"), "{stdout}");
    assert!(stdout.contains("total: 6"), "{stdout}");

    let sets = itemsets(&out);
    assert_eq!(sets.len(), 6);
    assert!(sets.contains(&(vec![1], 0.75)));
    assert!(sets.contains(&(vec![2, 3], 0.5)));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.contains("1\t0.750000\n"), "{text}");
}

#[test]
fn full_support_keeps_only_universal_items() {
    let d = Dir::new();
    let input = d.file("u.dat", "4 7 9\n7 9\n7\n");
    let out = d.path("u.fis");
    ok(&["mine", "--input", &input, "--minsup", "1.0", "--output", &s(&out)]);
    assert_eq!(itemsets(&out), vec![(vec![7], 1.0)]);
}

#[test]
fn single_component_em_reproduces_item_frequencies() {
    let d = Dir::new();
    let input = d.file("toy.dat", TOY);
    let model = d.path("m.json");
    ok(&[
        "train", "--input", &input, "--method", "em", "--k", "1", "--repeats", "1",
        "--output", &s(&model),
    ]);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(v["K"], 1);
    assert_eq!(v["D"], 3);
    let phi: Vec<f64> = v["bernoulli"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|row| row.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()))
        .collect();
    assert_eq!(phi.len(), 3);
    for p in phi {
        assert!((p - 0.75).abs() < 1e-9, "{p}");
    }
    assert!(d.path("m.trace.csv").exists());
}

#[test]
fn repeats_write_one_model_per_run() {
    let d = Dir::new();
    let input = d.file("toy.dat", TOY);
    let model = d.path("m.json");
    ok(&[
        "train", "--input", &input, "--method", "vb", "--k", "2", "--repeats", "2",
        "--output", &s(&model),
    ]);
    for run in 0..2 {
        assert!(d.path(&format!("m.run{run}.json")).exists());
        assert!(d.path(&format!("m.run{run}.trace.csv")).exists());
    }
}

#[test]
fn bad_invocations_map_to_exit_codes() {
    let d = Dir::new();
    let input = d.file("toy.dat", TOY);
    let model = s(&d.path("m.json"));
    assert_eq!(
        code(&["train", "--input", &input, "--method", "dp-gibbs", "--k", "3", "--output", &model]),
        2
    );
    let missing = s(&d.path("absent.dat"));
    assert_eq!(code(&["mine", "--input", &missing, "--minsup", "0.5", "--output", &model]), 3);
    for bad in ["0", "1.5", "-0.1", "nan"] {
        assert_eq!(code(&["mine", "--input", &input, "--minsup", bad, "--output", &model]), 2, "{bad}");
    }
    let garbage = d.file("bad.dat", "1 2\n3 x\n");
    assert_eq!(code(&["mine", "--input", &garbage, "--minsup", "0.5", "--output", &model]), 3);
    assert_eq!(code(&["mine", "--input", &input]), 2);
}

#[test]
fn models_with_bad_weights_are_rejected() {
    let d = Dir::new();
    let input = d.file("toy.dat", TOY);
    let model = d.path("m.json");
    ok(&[
        "train", "--input", &input, "--method", "em", "--k", "2", "--repeats", "1",
        "--output", &s(&model),
    ]);
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&model).unwrap()).unwrap();
    v["weights"] = serde_json::json!([0.5, 0.4]);
    let broken = d.file("broken.json", &v.to_string());
    let out = s(&d.path("x.fis"));
    let status = code(&["mine-model", "--model", &broken, "--minsup", "0.5", "--output", &out]);
    assert_ne!(status, 0);
    assert!(!d.path("x.fis").exists());
}

#[test]
fn model_mining_shrinks_with_threshold() {
    let d = Dir::new();
    let input = d.file("toy.dat", TOY);
    let model = d.path("m.json");
    ok(&[
        "train", "--input", &input, "--method", "em", "--k", "2", "--repeats", "1",
        "--output", &s(&model),
    ]);
    let mut prev = usize::MAX;
    for theta in ["0.1", "0.3", "0.5", "0.7"] {
        let out = d.path(&format!("m{theta}.fis"));
        ok(&["mine-model", "--model", &s(&model), "--minsup", theta, "--output", &s(&out)]);
        let sets = itemsets(&out);
        assert!(sets.len() <= prev);
        assert!(sets.iter().all(|(_, m)| *m >= theta.parse::<f64>().unwrap() - 5e-7));
        prev = sets.len();
    }
    let out = d.path("none.fis");
    ok(&["mine-model", "--model", &s(&model), "--minsup", "0.9", "--output", &s(&out)]);
    assert!(itemsets(&out).is_empty());
}

#[test]
fn eval_against_itself_is_perfect() {
    let d = Dir::new();
    let input = d.file("toy.dat", TOY);
    let truth = d.path("t.fis");
    ok(&["mine", "--input", &input, "--minsup", "0.5", "--output", &s(&truth)]);
    let prefix = d.path("self");
    let stdout = ok(&[
        "eval", "--truth", &s(&truth), "--minsup", "0.5", "--predicted", &s(&truth),
        "--output", &s(&prefix),
    ]);
    assert!(stdout.contains("missed (N_M): 0"), "{stdout}");
    assert!(stdout.contains("false (N_F): 0"), "{stdout}");
    assert!(stdout.contains("F-: 0"), "{stdout}");
    assert!(stdout.contains("F+: 0"), "{stdout}");
    let csv = fs::read_to_string(d.path("self.report.csv")).unwrap();
    assert!(csv.starts_with("metric,value\n"));
    assert!(csv.contains("e_hat,n/a"), "{csv}");
    let lengths = fs::read_to_string(d.path("self.lengths.csv")).unwrap();
    // Length profiles need model probabilities; none were given.
    assert_eq!(lengths, "length,count,d_hat\n");
}

#[test]
fn eval_scores_model_runs_and_aggregates() {
    let d = Dir::new();
    // Items 1 and 2 always co-occur, item 3 is independent.
    let mut rows = String::new();
    for i in 0..40 {
        rows.push_str(match i % 4 {
            0 => "1 2 3\n",
            1 => "1 2\n",
            2 => "3\n",
            _ => "5\n",
        });
    }
    let input = d.file("corr.dat", &rows);
    let truth = d.path("t.fis");
    ok(&["mine", "--input", &input, "--minsup", "0.2", "--output", &s(&truth)]);
    let model = d.path("m.json");
    ok(&[
        "train", "--input", &input, "--method", "em", "--k", "2", "--repeats", "2",
        "--output", &s(&model),
    ]);
    let prefix = d.path("corr");
    let stdout = ok(&[
        "eval", "--truth", &s(&truth), "--minsup", "0.2",
        "--model", &s(&d.path("m.run0.json")), "--model", &s(&d.path("m.run1.json")),
        "--output", &s(&prefix),
    ]);
    assert!(stdout.contains("E_hat: "));
    assert!(!stdout.contains("E_hat: n/a"));
    for run in 0..2 {
        assert!(d.path(&format!("corr.run{run}.report.txt")).exists());
    }
    let agg = fs::read_to_string(d.path("corr.aggregate.csv")).unwrap();
    assert!(agg.starts_with("metric,mean,std,runs\n"), "{agg}");
    assert!(agg.contains("d_hat_1,"), "{agg}");
}

#[test]
fn eval_rejects_itemsets_below_threshold() {
    let d = Dir::new();
    let input = d.file("toy.dat", TOY);
    let truth = d.path("t.fis");
    ok(&["mine", "--input", &input, "--minsup", "0.5", "--output", &s(&truth)]);
    let out = bmfim(&[
        "eval", "--truth", &s(&truth), "--minsup", "0.7", "--predicted", &s(&truth),
        "--output", &s(&d.path("x")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("threshold mismatch"));
}

#[test]
fn generated_data_round_trips() {
    let d = Dir::new();
    let input = d.file("toy.dat", TOY);
    let model = d.path("m.json");
    ok(&[
        "train", "--input", &input, "--method", "em", "--k", "2", "--repeats", "1",
        "--output", &s(&model),
    ]);
    let empty = d.path("empty.dat");
    ok(&["gen", "--model", &s(&model), "--n", "0", "--output", &s(&empty)]);
    assert_eq!(fs::read_to_string(&empty).unwrap(), "");

    let sample = d.path("sample.dat");
    let stdout = ok(&["gen", "--model", &s(&model), "--n", "500", "--seed", "3", "--output", &s(&sample)]);
    assert!(stdout.contains("500 transactions over 3 items"), "{stdout}");
    assert_eq!(fs::read_to_string(&sample).unwrap().lines().count(), 500);
    let again = d.path("again.dat");
    ok(&["gen", "--model", &s(&model), "--n", "500", "--seed", "3", "--output", &s(&again)]);
    assert_eq!(fs::read(&sample).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn thread_count_does_not_change_results() {
    let d = Dir::new();
    let input = d.file("d.dat", "1 2 3\n1 2\n2 3 4\n4 5\n1 5\n2 4 5\n1 2 4\n3 5\n");
    for method in ["em", "gibbs", "vb", "dp-gibbs", "dp-vb"] {
        let mut outputs = Vec::new();
        for threads in ["1", "4"] {
            let model = d.path(&format!("{method}.{threads}.json"));
            let mut args = vec!["--threads", threads, "train", "--input", &input, "--method", method];
            if method != "dp-gibbs" {
                args.extend(["--k", "3"]);
            }
            let model_s = s(&model);
            args.extend(["--repeats", "1", "--sweeps", "20", "--burn-in", "5", "--output", &model_s]);
            ok(&args);
            let trace = d.path(&format!("{method}.{threads}.trace.csv"));
            outputs.push((fs::read(&model).unwrap(), fs::read(&trace).unwrap()));
        }
        assert!(outputs[0] == outputs[1], "{method} differs across thread counts");
    }
}
