use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use saesim_core::io::{self, Dtype};
use saesim_core::synthetic::{build_fixture, FixtureConfig};
use serde_json::Value;

fn saesim(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_saesim"));
    cmd.args(args).env_remove(saesim_cli::LEXICON_ENV);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = saesim(args, &[]);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn bundle(dir: &Path, extra: &[&str]) -> PathBuf {
    let out = dir.join("fx");
    let mut args = vec![
        "synthetic",
        "-o",
        s(&out),
        "--n-features",
        "80",
        "--dim",
        "6",
        "--n-tokens",
        "800",
    ];
    args.extend(extra);
    ok(&args);
    out
}

#[test]
fn noise_free_bundle_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    let fx = bundle(dir.path(), &["--noise-sigma", "0"]);
    let out = dir.path().join("r.json");
    ok(&[
        "score",
        "--bundle",
        s(&fx),
        "--metric",
        "svcca",
        "-o",
        s(&out),
    ]);
    let r = json(&out);
    assert!((r["paired_score"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert_eq!(r["p_value"].as_f64().unwrap(), 0.0);
    for key in [
        "metric",
        "paired_score",
        "null_mean",
        "p_value",
        "n_pairs",
        "seed",
    ] {
        assert!(r.get(key).is_some(), "missing {key}");
    }
    assert_eq!(r["params"]["tool_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(r["params"]["config_hash"].as_str().unwrap().len(), 16);
}

#[test]
fn null_samples_flag_plumbs_through() {
    let dir = tempfile::tempdir().unwrap();
    let fx = bundle(dir.path(), &[]);
    let out = dir.path().join("r.json");
    ok(&[
        "score",
        "--bundle",
        s(&fx),
        "--metric",
        "rsa",
        "--null-samples",
        "1000",
        "-o",
        s(&out),
    ]);
    let r = json(&out);
    assert_eq!(r["metric"], "rsa");
    assert_eq!(r["null_samples"], 1000);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let fx = bundle(dir.path(), &[]);
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "seed = 5\nnull_samples = 7\nmetrics = \"rsa\"\nfilters = \"one_to_one\"\n",
    )
    .unwrap();
    let out = dir.path().join("r.json");
    ok(&[
        "score",
        "--bundle",
        s(&fx),
        "--config",
        s(&cfg),
        "--null-samples",
        "9",
        "-o",
        s(&out),
    ]);
    let r = json(&out);
    assert_eq!(r["seed"], 5);
    assert_eq!(r["null_samples"], 9);
    assert_eq!(r["metric"], "rsa");
    assert_eq!(r["filters_applied"], serde_json::json!(["one_to_one"]));

    std::fs::write(&cfg, "sed = 5\n").unwrap();
    let bad = saesim(
        &[
            "score",
            "--bundle",
            s(&fx),
            "--config",
            s(&cfg),
            "-o",
            s(&out),
        ],
        &[],
    );
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn sweep_two_by_two_with_heatmap() {
    let dir = tempfile::tempdir().unwrap();
    let fx = bundle(dir.path(), &["--layers", "2"]);
    let (out, svg) = (dir.path().join("sweep.csv"), dir.path().join("h.svg"));
    ok(&[
        "sweep",
        "--manifest",
        s(&fx),
        "--null-samples",
        "20",
        "-o",
        s(&out),
        "--svg",
        s(&svg),
    ]);
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 8);
    let keys: Vec<(String, String, String)> = rows
        .iter()
        .map(|r| {
            let c: Vec<&str> = r.split(',').collect();
            (c[0].into(), c[1].into(), c[3].into())
        })
        .collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    assert_eq!(keys.iter().filter(|k| k.2 == "svcca").count(), 4);
    let svg = std::fs::read_to_string(&svg).unwrap();
    assert_eq!(svg.matches("<rect").count(), 8);
}

#[test]
fn sweep_error_names_layer_pair() {
    let dir = tempfile::tempdir().unwrap();
    let fx = bundle(dir.path(), &["--layers", "2"]);
    std::fs::write(fx.join("b_L1.weights.npy"), b"not a matrix").unwrap();
    let out = saesim(
        &[
            "sweep",
            "--manifest",
            s(&fx),
            "-o",
            s(&dir.path().join("x.csv")),
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("layer pair (A0, B1)"), "{err}");
    assert!(err.contains("b_L1.weights.npy"), "{err}");
}

#[test]
fn degenerate_pairing_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let fx = dir.path().join("tiny");
    ok(&[
        "synthetic",
        "-o",
        s(&fx),
        "--n-features",
        "2",
        "--dim",
        "2",
        "--n-tokens",
        "50",
    ]);
    let out = saesim(
        &[
            "score",
            "--bundle",
            s(&fx),
            "-o",
            s(&dir.path().join("r.json")),
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn missing_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = saesim(
        &[
            "score",
            "--bundle",
            s(&dir.path().join("nope")),
            "-o",
            "r.json",
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
    let out = saesim(&["score", "--weights-a", "x.npy", "-o", "r.json"], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn subspace_categories_and_lexicon_env() {
    let dir = tempfile::tempdir().unwrap();
    let fx = bundle(
        dir.path(),
        &[
            "--cluster",
            "shared",
            "--cluster-size",
            "20",
            "--n-keywords",
            "3",
        ],
    );
    let out = dir.path().join("sub.json");
    let unknown = saesim(
        &[
            "subspace",
            "--bundle",
            s(&fx),
            "--category",
            "Feelings",
            "-o",
            s(&out),
        ],
        &[],
    );
    assert_eq!(unknown.status.code(), Some(2));

    let lex = dir.path().join("custom.lexicon");
    std::fs::write(&lex, "[[category]]\nname = \"Feelings\"\nkeywords = [\"joy\", \"glee\", \"pride\"]\n[[category]]\nname = \"Countries\"\nkeywords = [\"france\"]\n").unwrap();
    let run = saesim(
        &[
            "subspace",
            "--bundle",
            s(&fx),
            "--category",
            "Feelings,Countries",
            "--null-samples",
            "50",
            "-o",
            s(&out),
        ],
        &[(saesim_cli::LEXICON_ENV, s(&lex))],
    );
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let rows = json(&out);
    let rows = rows.as_array().unwrap();
    let feelings: Vec<&Value> = rows
        .iter()
        .filter(|r| r["category"] == "Feelings")
        .collect();
    assert_eq!(feelings.len(), 4);
    assert!(feelings
        .iter()
        .all(|r| r["size_a"] == 20 && r["status"] == "ok"));
    assert!(feelings
        .iter()
        .any(|r| r["test"] == "random_subsets" && r["params"]["subset_pool"] == "post_nonconcept"));
    let countries: Vec<&Value> = rows
        .iter()
        .filter(|r| r["category"] == "Countries")
        .collect();
    assert_eq!(countries.len(), 1);
    assert_eq!(countries[0]["status"], "too_few_pairs");
    assert!(String::from_utf8_lossy(&run.stderr).contains("warning: category Countries"));
}

/// Files laid out the way an external extractor writes them: f32 NPY,
/// per-layer activations, hand-written manifest.
#[test]
fn extractor_layout_validates_and_scores() {
    let dir = tempfile::tempdir().unwrap();
    let fx = build_fixture(&FixtureConfig {
        n_features: 60,
        dim: 8,
        seed: 2,
        ..Default::default()
    })
    .unwrap();
    let d = dir.path();
    io::write_npy(
        d.join("pythia_L3.weights.npy"),
        fx.space_a.weights(),
        Dtype::F32,
    )
    .unwrap();
    io::write_npy(d.join("pythia_L3.acts.npy"), fx.acts_a.acts(), Dtype::F32).unwrap();
    io::write_npy(
        d.join("other_L5.weights.npy"),
        fx.space_b.weights(),
        Dtype::F32,
    )
    .unwrap();
    io::write_npy(d.join("other_L5.acts.npy"), fx.acts_b.acts(), Dtype::F32).unwrap();
    io::write_token_table(d.join("owt.tokens.jsonl"), &fx.tokens).unwrap();
    let manifest = d.join("dump.toml");
    std::fs::write(
        &manifest,
        r#"tokens = "owt.tokens.jsonl"
[model_a]
id = "pythia-70m"
layers = [{ layer = 3, weights = "pythia_L3.weights.npy", acts = "pythia_L3.acts.npy" }]
[model_b]
id = "pythia-160m"
layers = [{ layer = 5, weights = "other_L5.weights.npy", acts = "other_L5.acts.npy" }]
"#,
    )
    .unwrap();
    let files: Vec<PathBuf> = std::fs::read_dir(d)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    let mut args = vec!["validate"];
    args.extend(files.iter().map(|p| s(p)));
    let v = ok(&args);
    assert_eq!(
        String::from_utf8_lossy(&v.stdout).matches("ok ").count(),
        files.len()
    );

    let out = d.join("r.json");
    ok(&[
        "score",
        "--bundle",
        s(&manifest),
        "--metric",
        "svcca",
        "-o",
        s(&out),
    ]);
    assert!(json(&out)["paired_score"].as_f64().unwrap() > 0.9);
    let v = ok(&["validate", s(&out)]);
    assert!(String::from_utf8_lossy(&v.stdout).contains("1 score reports"));

    std::fs::write(d.join("bad.tokens.jsonl"), "\"a\"\nnot json\n").unwrap();
    let bad = saesim(&["validate", s(&d.join("bad.tokens.jsonl"))], &[]);
    assert_eq!(bad.status.code(), Some(2));
}
