use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use oodtune::data::read_interchange;
use oodtune::tuner::TuneResult;
use serde_json::json;
use tempfile::TempDir;

fn oodtune(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oodtune"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = oodtune(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    oodtune(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    /// Six-class corpus, a held-out ID test set and two OOD sets.
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let f = Fixture { dir };
        let gen = |name: &str, classes: &str, first: &str, per: &str, stream: &str| {
            ok(&[
                "gen-synth",
                "--out",
                s(&f.path(name)),
                "--classes",
                classes,
                "--first-class",
                first,
                "--dim",
                "6",
                "--per-class",
                per,
                "--separation",
                "4",
                "--stream",
                stream,
                "--seed",
                "5",
            ]);
        };
        gen("corpus.oodf", "6", "0", "60", "0");
        gen("id_test.oodf", "6", "0", "20", "1");
        gen("ood_a.oodf", "2", "6", "40", "2");
        gen("ood_b.oodf", "2", "8", "40", "2");
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self, name: &str, method: &str, m_grid: &[usize]) -> PathBuf {
        let cfg = json!({
            "corpus": "corpus.oodf",
            "seed": 3,
            "method": method,
            "family": "react",
            "simulation": {
                "m_grid": m_grid, "n_variants": 2, "s_pairs": 2, "tune_pair_size": 20,
                "min_train_accuracy": null
            },
            "train": { "hidden_sizes": [16], "epochs": 8 },
            "bo": { "n_init": 4, "n_iter": 3 },
            "baseline": { "s_pairs": 2, "pair_size": 20 }
        });
        let path = self.path(name);
        fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
        path
    }
}

#[test]
fn gen_synth_counts_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.oodf");
    let b = dir.path().join("b.oodf");
    for p in [&a, &b] {
        let out = ok(&[
            "gen-synth",
            "--classes",
            "8",
            "--dim",
            "16",
            "--per-class",
            "300",
            "--seed",
            "0",
            "--out",
            s(p),
        ]);
        assert!(out.contains("class 7: 300"));
    }
    let data = read_interchange(&a).unwrap().into_dataset().unwrap();
    assert_eq!(data.len(), 2400);
    assert_eq!(data.dim(), 16);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn zero_separation_shares_one_blob() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("blob.oodf");
    ok(&[
        "gen-synth",
        "--classes",
        "3",
        "--dim",
        "4",
        "--per-class",
        "2000",
        "--separation",
        "0",
        "--out",
        s(&p),
    ]);
    let data = read_interchange(&p).unwrap().into_dataset().unwrap();
    for (_, rows) in data.indices_by_class() {
        for j in 0..4 {
            let mean =
                rows.iter().map(|&r| data.inputs().get(r, j)).sum::<f64>() / rows.len() as f64;
            assert!(mean.abs() < 0.1, "class mean {mean}");
        }
    }
}

#[test]
fn exit_codes() {
    let f = Fixture::new();
    assert_eq!(code(&["gen-synth", "--classes", "x"]), 2);
    assert_eq!(code(&["no-such-command"]), 2);
    assert_eq!(
        code(&[
            "gen-synth",
            "--classes",
            "0",
            "--dim",
            "2",
            "--per-class",
            "1",
            "--out",
            s(&f.path("z"))
        ]),
        2
    );

    let bad_key = f.path("bad.json");
    fs::write(&bad_key, r#"{"corpus":"corpus.oodf","seed":1,"family":"react","simulation":{"m_grid":[1],"n_variants":1,"s_pairs":1},"extra":true}"#).unwrap();
    assert_eq!(
        code(&["tune", "--config", s(&bad_key), "--out", s(&f.path("o"))]),
        2
    );

    let cfg = f.config("run.json", "ours", &[1]);
    let missing = f.path("missing.json");
    assert_eq!(
        code(&["tune", "--config", s(&missing), "--out", s(&f.path("o"))]),
        3
    );

    fs::write(f.path("corpus.oodf"), b"not an interchange file").unwrap();
    assert_eq!(
        code(&["tune", "--config", s(&cfg), "--out", s(&f.path("o"))]),
        3
    );
}

#[test]
fn pipeline_failure_exits_4() {
    let f = Fixture::new();
    let cfg = f.config("run.json", "ours", &[6]);
    assert_eq!(
        code(&["tune", "--config", s(&cfg), "--out", s(&f.path("o"))]),
        4
    );
}

#[test]
fn tune_is_deterministic_and_reports() {
    let f = Fixture::new();
    let cfg = f.config("run.json", "ours", &[1, 2]);
    let (a, b) = (f.path("a"), f.path("b"));
    ok(&["tune", "--config", s(&cfg), "--out", s(&a)]);
    ok(&[
        "--threads",
        "1",
        "tune",
        "--config",
        s(&cfg),
        "--out",
        s(&b),
    ]);
    let ja = fs::read_to_string(a.join("result.json")).unwrap();
    assert_eq!(ja, fs::read_to_string(b.join("result.json")).unwrap());
    let r = TuneResult::from_json(&ja).unwrap();
    assert_eq!(r.per_m.len(), 2);
    assert_eq!(r.master_seed, 3);
    assert!(a.join("partial_m1.json").exists() && a.join("partial_m2.json").exists());
    assert!(fs::read_to_string(a.join("summary.txt"))
        .unwrap()
        .contains("selected M*="));

    let c = f.path("c");
    ok(&["--seed", "4", "tune", "--config", s(&cfg), "--out", s(&c)]);
    let rc = TuneResult::from_json(&fs::read_to_string(c.join("result.json")).unwrap()).unwrap();
    assert_eq!(rc.master_seed, 4);

    let rep = f.path("report");
    ok(&[
        "export-report",
        "--result",
        s(&a.join("result.json")),
        "--out",
        s(&rep),
    ]);
    let per_m = fs::read_to_string(rep.join("per_m.csv")).unwrap();
    assert!(per_m.starts_with("m,fit_value,revalidated_value,selected,params\n"));
    assert_eq!(per_m.lines().count(), 3);
    let conv = fs::read_to_string(rep.join("convergence.csv")).unwrap();
    assert_eq!(conv.lines().count(), 1 + 2 * 7);
}

#[test]
fn simulate_then_tune_matches_direct_tune() {
    let f = Fixture::new();
    let cfg = f.config("run.json", "ours", &[1, 2]);
    ok(&[
        "simulate",
        "--config",
        s(&cfg),
        "--out",
        s(&f.path("splits")),
    ]);
    ok(&[
        "tune",
        "--config",
        s(&cfg),
        "--out",
        s(&f.path("a")),
        "--splits",
        s(&f.path("splits")),
    ]);
    ok(&["tune", "--config", s(&cfg), "--out", s(&f.path("b"))]);
    assert_eq!(
        fs::read_to_string(f.path("a/result.json")).unwrap(),
        fs::read_to_string(f.path("b/result.json")).unwrap()
    );
}

#[test]
fn gaussian_baseline_lists_every_h() {
    let f = Fixture::new();
    let cfg = f.config("run.json", "gauss", &[1]);
    ok(&["tune", "--config", s(&cfg), "--out", s(&f.path("g"))]);
    let summary = fs::read_to_string(f.path("g/summary.txt")).unwrap();
    for h in ["h=32 ", "h=64 ", "h=128 "] {
        assert!(summary.contains(h), "{summary}");
    }
    assert_eq!(summary.matches("revalidated=").count(), 3);
    assert!(f.path("g/detector.json").exists());
}

#[test]
fn evaluate_and_ablate_agree() {
    let f = Fixture::new();
    let cfg = f.config("run.json", "ours", &[1, 2, 3, 4]);
    let t = f.path("t");
    ok(&["tune", "--config", s(&cfg), "--out", s(&t)]);
    let model = t.join("model.json");
    let det = t.join("detector.json");
    let id = f.path("id_test.oodf");

    let same = ok(&[
        "evaluate",
        "--model",
        s(&model),
        "--detector",
        s(&det),
        "--id",
        s(&id),
        "--ood",
        s(&id),
    ]);
    let row: Vec<&str> = same.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[1], "0.5");

    let two = ok(&[
        "evaluate",
        "--model",
        s(&model),
        "--detector",
        s(&det),
        "--id",
        s(&id),
        "--ood",
        s(&f.path("ood_a.oodf")),
        s(&f.path("ood_b.oodf")),
    ]);
    let eval_rows: Vec<Vec<String>> = two
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    assert_eq!(eval_rows.len(), 2);

    let table = ok(&[
        "ablate-m",
        "--config",
        s(&cfg),
        "--result",
        s(&t.join("result.json")),
        "--id-test",
        s(&id),
        "--ood",
        s(&f.path("ood_a.oodf")),
        s(&f.path("ood_b.oodf")),
    ]);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "m,ood_a,ood_b");
    assert_eq!(lines.len(), 5);
    let r = TuneResult::from_json(&fs::read_to_string(t.join("result.json")).unwrap()).unwrap();
    let at_m_star: Vec<&str> = lines
        .iter()
        .find(|l| l.split(',').next() == Some(r.m_star.to_string().as_str()))
        .unwrap()
        .split(',')
        .collect();
    assert_eq!(at_m_star[1], eval_rows[0][1]);
    assert_eq!(at_m_star[2], eval_rows[1][1]);
}

#[test]
fn duplicated_tuning_sets_have_zero_spread() {
    let f = Fixture::new();
    let run: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(f.config("run.json", "ours", &[1])).unwrap())
            .unwrap();
    let cfg = json!({
        "run": run,
        "id_test": "id_test.oodf",
        "tuning_sets": [
            { "name": "a1", "path": "ood_a.oodf" },
            { "name": "a2", "path": "ood_a.oodf" }
        ],
        "test_sets": [{ "name": "b", "path": "ood_b.oodf" }],
        "families": ["react", "ash_b"]
    });
    let path = f.path("sens.json");
    fs::write(&path, cfg.to_string()).unwrap();
    ok(&[
        "sensitivity",
        "--config",
        s(&path),
        "--out",
        s(&f.path("sens")),
    ]);
    let summary = fs::read_to_string(f.path("sens/summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(lines.next(), Some("detector,test_set,mean_fpr95,std_fpr95"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    assert!(
        rows.iter()
            .all(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap() == 0.0),
        "{summary}"
    );
    assert_eq!(
        fs::read_to_string(f.path("sens/cells.csv"))
            .unwrap()
            .lines()
            .count(),
        5
    );
}
