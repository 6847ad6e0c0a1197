use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use kselect::data::{self, SampleDataset};
use kselect::kernels::{self, KernelKind};
use kselect::qp::{self, SolverOptions};
use kselect::Histogram;

fn kselect(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kselect"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn field(stdout: &str, key: &str) -> String {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key},")))
        .unwrap_or_else(|| panic!("no '{key}' in {stdout}"))
        .to_string()
}

fn tiny_samples(dir: &Path, name: &str, dim: usize) {
    let x = (0..6)
        .map(|i| Histogram::new((0..dim).map(|k| ((i * 7 + k * 3) % 5) as f64 + if i % 2 == 0 { 0.5 } else { 0.0 }).collect()).unwrap())
        .collect();
    let y = (0..6).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    data::write_samples(dir.join(name), &SampleDataset::new(x, y).unwrap()).unwrap();
}

#[test]
fn synthetic_pipeline_ranks_held_out_data() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let bins = field(&ok(&kselect(d, &["synth", "--seed", "1", "--output", "train.csv"])), "informative_bins");
    ok(&kselect(d, &["synth", "--seed", "2", "--bins-seed", "1", "--output", "test.csv"]));
    let train = ok(&kselect(d, &["fs-train", "--C", "100", "--input", "train.csv", "--model", "m.json"]));
    let selected: usize = field(&train, "selected_features").parse().unwrap();
    assert!((1..=30).contains(&selected), "{train}");
    assert_eq!(bins.split(' ').count(), 10);
    assert!(d.join("m.json.log.csv").exists());

    ok(&kselect(d, &["fs-predict", "--input", "test.csv", "--model", "m.json", "--output", "scores.csv"]));
    let eval = ok(&kselect(d, &["eval", "--input", "scores.csv", "--output", "pr.csv"]));
    let ap: f64 = field(&eval, "average_precision").parse().unwrap();
    assert!(ap >= 0.95, "AP {ap}");
    let pr = fs::read_to_string(d.join("pr.csv")).unwrap();
    assert!(pr.starts_with("threshold,precision,recall\n"));
}

#[test]
fn singleton_bags_log_the_plain_svm_objective() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let x: Vec<Histogram> = (0..8)
        .map(|i| Histogram::new(vec![(i % 3) as f64 + 0.25, if i < 4 { 2.0 } else { 0.5 }, (i * i % 5) as f64]).unwrap())
        .collect();
    let y: Vec<f64> = (0..8).map(|i| if i < 4 { 1.0 } else { -1.0 }).collect();
    let bags: Vec<_> = x
        .iter()
        .zip(&y)
        .enumerate()
        .map(|(i, (h, &l))| kselect::region_select::Bag::new(i.to_string(), l, vec![h.clone()]).unwrap())
        .collect();
    data::write_bags(d.join("bags.jsonl"), &bags, None).unwrap();
    ok(&kselect(
        d,
        &["rs-train", "--kernel", "intersection", "--C", "2", "--tol", "1e-6", "--input", "bags.jsonl", "--model", "r.json", "--log", "r.csv"],
    ));
    let log = fs::read_to_string(d.join("r.csv")).unwrap();
    let last = log.lines().last().unwrap();
    let logged: f64 = last.split(',').nth(1).unwrap().parse().unwrap();

    let k = kernels::gram(KernelKind::Intersection, &x).unwrap();
    let opts = SolverOptions {
        tol: 1e-6,
        ..Default::default()
    };
    let svm = qp::solve_dual(&k, &y, 2.0, &opts).unwrap();
    assert!((logged - svm.objective).abs() <= 1e-9, "{logged} vs {}", svm.objective);
}

#[test]
fn config_file_sets_defaults_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    tiny_samples(d, "train.csv", 3);
    fs::write(d.join("run.toml"), "kernel = \"linear\"\nC = 3.5\n").unwrap();
    ok(&kselect(d, &["--config", "run.toml", "fs-train", "--input", "train.csv", "--model", "a.json"]));
    let a: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("a.json")).unwrap()).unwrap();
    assert_eq!(a["kernel"], "linear");
    assert_eq!(a["C"], 3.5);

    ok(&kselect(d, &["--config", "run.toml", "fs-train", "--kernel", "chi2", "--input", "train.csv", "--model", "b.json"]));
    let b: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("b.json")).unwrap()).unwrap();
    assert_eq!(b["kernel"], "chi2");
    assert_eq!(b["C"], 3.5);

    fs::write(d.join("bad.toml"), "kernal = \"linear\"\n").unwrap();
    let out = kselect(d, &["--config", "bad.toml", "fs-train", "--input", "train.csv", "--model", "c.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("kernal"), "{}", stderr(&out));
}

#[test]
fn errors_are_categorised_on_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    tiny_samples(d, "train.csv", 3);
    tiny_samples(d, "wide.csv", 4);
    ok(&kselect(d, &["fs-train", "--input", "train.csv", "--model", "m.json"]));

    let cases: [(&[&str], i32, &str); 5] = [
        (&["fs-predict", "--input", "wide.csv", "--model", "m.json"], 1, "error[dimension]"),
        (&["fs-predict", "--input", "missing.csv", "--model", "m.json"], 1, "error[io]"),
        (&["fs-train", "--C", "0", "--input", "train.csv", "--model", "z.json"], 1, "error[input]"),
        (&["fs-train", "--bogus"], 2, "error[usage]"),
        (&["rs-predict", "--mode", "median"], 2, "error[usage]"),
    ];
    for (args, code, prefix) in cases {
        let out = kselect(d, args);
        let err = stderr(&out);
        assert_eq!(out.status.code(), Some(code), "{args:?}: {err}");
        assert!(err.starts_with(prefix), "{args:?}: {err}");
        assert_eq!(err.lines().count(), 1, "{args:?}: {err}");
    }
    let err = stderr(&kselect(d, &["fs-predict", "--input", "missing.csv", "--model", "m.json"]));
    assert!(err.contains("missing.csv"), "{err}");

    fs::write(d.join("broken.csv"), "1,0.5,0.5\n-1,0.5,x\n").unwrap();
    let err = stderr(&kselect(d, &["fs-train", "--input", "broken.csv", "--model", "m2.json"]));
    assert!(err.starts_with("error[parse]") && err.contains("broken.csv:2"), "{err}");

    let help = kselect(d, &["--help"]);
    assert!(help.status.success());
    assert!(ok(&help).contains("fs-train"));
}

#[test]
fn region_pipeline_writes_instance_scores() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let common = ["--n-pos", "10", "--n-neg", "10", "--dim", "12", "--informative", "4", "--task", "instances"];
    let mut args = vec!["synth", "--seed", "3", "--output", "bags.jsonl"];
    args.extend(common);
    ok(&kselect(d, &args));
    let train = ok(&kselect(d, &["rs-train", "--input", "bags.jsonl", "--model", "r.json"]));
    assert!(field(&train, "iterations").parse::<usize>().is_ok());
    let bags = ok(&kselect(
        d,
        &["rs-predict", "--input", "bags.jsonl", "--model", "r.json", "--instance-output", "inst.csv"],
    ));
    assert!(bags.starts_with("bag_id,label,score\n"));
    assert_eq!(bags.lines().count(), 21);
    let inst = fs::read_to_string(d.join("inst.csv")).unwrap();
    assert!(inst.starts_with("bag_id,instance,label,score\n"));
    assert_eq!(inst.lines().count(), 1 + 20 * 5);
    // Ground-truth labels: one signal instance per positive bag.
    assert_eq!(inst.lines().skip(1).filter(|l| l.split(',').nth(2) == Some("1")).count(), 10);
}
