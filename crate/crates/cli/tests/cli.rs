use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn lapgraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lapgraph"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_edges(path: &Path) -> BTreeSet<(usize, usize)> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("i,j,weight"));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap())
        })
        .collect()
}

fn read_matrix(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn f1(est: &BTreeSet<(usize, usize)>, truth: &BTreeSet<(usize, usize)>) -> f64 {
    let tp = est.intersection(truth).count() as f64;
    if tp == 0.0 {
        return 0.0;
    }
    2.0 * tp / (est.len() + truth.len()) as f64
}

fn synth(dir: &Path, graph: &str, p: &str, n: &str, seed: &str) {
    let out = lapgraph(&[
        "synth",
        "--graph",
        graph,
        "--p",
        p,
        "--n",
        n,
        "--seed",
        seed,
        "--output-dir",
        s(dir),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

const ESTIMATE_FILES: [&str; 6] = [
    "omega.csv",
    "weights.csv",
    "laplacian.csv",
    "edges.csv",
    "summary.txt",
    "summary.json",
];

#[test]
fn estimate_writes_consistent_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    synth(&data, "chain", "12", "1e3", "3");

    let manifest: Value = serde_json::from_str(&fs::read_to_string(data.join("manifest.json")).unwrap()).unwrap();
    // kappa = 0 leaves the Laplacian singular.
    assert!(manifest["config"]["min_eigenvalue"].as_f64().unwrap().abs() < 1e-10);
    assert_eq!(read_edges(&data.join("truth_edges.csv")).len(), 11);

    let samples = data.join("samples.csv");
    let res = lapgraph(&["estimate", "--input", s(&samples), "--output-dir", s(&out), "--lambda", "0.05"]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));

    let omega = read_matrix(&out.join("omega.csv"));
    let laplacian = read_matrix(&out.join("laplacian.csv"));
    let weights = read_matrix(&out.join("weights.csv"));
    assert_eq!(omega.len(), 12);
    for i in 0..12 {
        assert!(laplacian[i].iter().sum::<f64>().abs() < 1e-12);
        for j in 0..12 {
            assert_eq!(omega[i][j], omega[j][i]);
            assert!(weights[i][j] >= 0.0);
        }
    }
    let edges = read_edges(&out.join("edges.csv"));
    let listed: Vec<_> = edges.iter().copied().collect();
    let text = fs::read_to_string(out.join("edges.csv")).unwrap();
    let in_file: Vec<(usize, usize)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap())
        })
        .collect();
    assert_eq!(in_file, listed, "edges ascending");
    for &(i, j) in &edges {
        assert!(1 <= i && i < j && j <= 12);
        assert!(weights[i - 1][j - 1] > 0.0);
    }

    let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["edges"].as_u64().unwrap() as usize, edges.len());
    assert_eq!(summary["mode"], "constrained-adaptive-lasso");
    let txt = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(txt.contains(&format!("edges: {}\n", edges.len())));
}

#[test]
fn rerun_and_manifest_replay_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "er", "15", "300", "11");
    let samples = data.join("samples.csv");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let res = lapgraph(&[
            "estimate",
            "--input",
            s(&samples),
            "--output-dir",
            s(dir),
            "--lambda",
            "2e-2",
            "--outer",
            "3",
        ]);
        assert_eq!(code(&res), 0, "{}", stderr(&res));
    }
    for f in ESTIMATE_FILES {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }

    // Replay the canonical argument list into a fresh directory.
    let manifest: Value = serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    let mut args: Vec<String> = manifest["args"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    let c = tmp.path().join("c");
    let pos = args.iter().position(|x| x == "--output-dir").unwrap();
    args[pos + 1] = s(&c).to_string();
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    let res = lapgraph(&argv);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    for f in ESTIMATE_FILES {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(c.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn select_recovers_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    synth(&data, "chain", "20", "2000", "0");
    let res = lapgraph(&["select", "--input", s(&data.join("samples.csv")), "--output-dir", s(&out)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));

    let report = fs::read_to_string(out.join("selection.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(lines.next(), Some("lambda,bic,edges,converged"));
    assert_eq!(lines.count(), 10);

    let est = read_edges(&out.join("edges.csv"));
    let truth = read_edges(&data.join("truth_edges.csv"));
    let score = f1(&est, &truth);
    assert!(score >= 0.95, "F1 {score}");
}

#[test]
fn header_row_names_nodes() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("x.csv");
    let mut text = String::from("alpha,beta,gamma\n");
    for k in 0..50 {
        let t = k as f64 * 0.37;
        text.push_str(&format!("{},{},{}\n", t.sin(), t.sin() + 0.3 * t.cos(), (2.0 * t).cos()));
    }
    fs::write(&input, text).unwrap();
    let out = tmp.path().join("out");
    let res = lapgraph(&["estimate", "--input", s(&input), "--output-dir", s(&out), "--lambda", "0.1", "--standardize"]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    assert_eq!(
        fs::read_to_string(out.join("nodes.csv")).unwrap(),
        "index,name\n1,alpha\n2,beta\n3,gamma\n"
    );
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = s(&out);

    assert_eq!(code(&lapgraph(&["--help"])), 0);
    assert_eq!(code(&lapgraph(&["estimate", "--bogus"])), 1);
    assert_eq!(code(&lapgraph(&["estimate", "--output-dir", o, "--lambda", "0.1"])), 1);

    let missing = lapgraph(&["estimate", "--input", "/nonexistent.csv", "--output-dir", o, "--lambda", "0.1"]);
    assert_eq!(code(&missing), 2);

    let ragged = tmp.path().join("ragged.csv");
    fs::write(&ragged, "1,2,3\n4,5,6\n7,8\n").unwrap();
    let res = lapgraph(&["estimate", "--input", s(&ragged), "--output-dir", o, "--lambda", "0.1"]);
    assert_eq!(code(&res), 2);
    assert!(stderr(&res).contains("line 3"), "{}", stderr(&res));

    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "1,2\n3,oops\n").unwrap();
    let res = lapgraph(&["estimate", "--input", s(&bad), "--output-dir", o, "--lambda", "0.1"]);
    assert_eq!(code(&res), 2);
    assert!(stderr(&res).contains("line 2, column 2"), "{}", stderr(&res));

    let good = tmp.path().join("good.csv");
    fs::write(&good, "1,2\n2,1\n3,5\n").unwrap();
    let res = lapgraph(&["estimate", "--input", s(&good), "--output-dir", o, "--lambda", "0.1", "--mu", "0.5"]);
    assert_eq!(code(&res), 1, "{}", stderr(&res));
    let res = lapgraph(&["estimate", "--input", s(&good), "--output-dir", o, "--lambda", "-1"]);
    assert_eq!(code(&res), 1, "{}", stderr(&res));

    // A zero-variance column leaves the solver without a starting point.
    let flat = tmp.path().join("flat.csv");
    fs::write(&flat, "1,0\n2,0\n3,0\n").unwrap();
    let res = lapgraph(&["estimate", "--input", s(&flat), "--output-dir", o, "--lambda", "0.1"]);
    assert_eq!(code(&res), 3, "{}", stderr(&res));
}

#[test]
fn bench_spec_file_flags_and_threads() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("bench.spec");
    fs::write(&spec, "# small run\ngraph = chain\np = 10\nn = 300\nruns = 5\nlambdas = 0.02,0.05\n").unwrap();

    let mut csvs = Vec::new();
    for threads in ["1", "2"] {
        let out = tmp.path().join(format!("t{threads}"));
        let res = lapgraph(&[
            "bench",
            "--spec",
            s(&spec),
            "--runs",
            "3",
            "--audit",
            "--threads",
            threads,
            "--output-dir",
            s(&out),
        ]);
        assert_eq!(code(&res), 0, "{}", stderr(&res));
        csvs.push(fs::read_to_string(out.join("bench.csv")).unwrap());

        let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["spec"]["runs"], 3, "flag overrides file");
        assert_eq!(summary["audit"]["mm_descent_violations"], 0);
        assert_eq!(summary["run_seconds"].as_array().unwrap().len(), 3);
        let text = fs::read_to_string(out.join("summary.txt")).unwrap();
        assert!(text.contains("runs_succeeded: 3"));
    }
    assert_eq!(csvs[0], csvs[1]);
    let rows: Vec<&str> = csvs[0].lines().collect();
    assert_eq!(rows[0], "lambda,metric,mean,std,runs");
    assert_eq!(rows.len(), 1 + 2 * 7);
    assert!(rows[1].starts_with("0.02,f1,"));

    let bad = tmp.path().join("bad.spec");
    fs::write(&bad, "p = 10\nwidth = 3\n").unwrap();
    let res = lapgraph(&["bench", "--spec", s(&bad), "--output-dir", s(tmp.path())]);
    assert_eq!(code(&res), 2);
    assert!(stderr(&res).contains("line 2"), "{}", stderr(&res));
}
