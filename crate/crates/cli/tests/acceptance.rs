//! Acceptance suite. Runs every criterion at its stated tolerance and
//! prints one PASS/FAIL line per criterion; exits non-zero if any fails.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde_json::Value;

use saesim_core::io::default_lexicon;
use saesim_core::metrics::{self, RsaConfig, SvccaConfig};
use saesim_core::model::{filter_names, FeaturePair};
use saesim_core::pairing::{self, StoplistConfig};
use saesim_core::pipeline::{self, ScoreOptions, Side, SubspaceOptions, SubspaceStatus};
use saesim_core::synthetic::{
    build_fixture, gen_space, random_orthogonal, ActivationOptions, ClusterSpec, Fixture,
    FixtureConfig, PlantKind,
};
use saesim_core::{semantic, ActivationSet, Matrix, Metric, PairingMap};

type Check = fn() -> Result<String, String>;

fn main() {
    let criteria: [(&str, Check); 8] = [
        ("metric identities", metric_identities),
        ("rotation invariance", rotation_invariance),
        ("oracle equivalence", oracle_equivalence),
        ("pairing recovery", pairing_recovery),
        ("significance calibration", significance_calibration),
        ("filter semantics", filter_semantics),
        ("semantic subspace pipeline", semantic_subspace),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn metric_identities() -> Result<String, String> {
    let x = gen_space(500, 64, 11).unwrap().weights().clone();
    let t = Instant::now();
    let s = metrics::svcca(&x, &x, &SvccaConfig::default()).unwrap();
    let r = metrics::rsa(&x, &x, &RsaConfig::default()).unwrap();
    let k = metrics::knn_jaccard(&x, &x, metrics::DEFAULT_KNN_K).unwrap();
    let elapsed = t.elapsed();
    ensure((s - 1.0).abs() < 1e-9, || format!("svcca(X,X) = {s}"))?;
    ensure(r == 1.0, || format!("rsa(X,X) = {r}"))?;
    ensure(k == 1.0, || format!("knn_jaccard(X,X) = {k}"))?;
    ensure(elapsed < Duration::from_secs(1), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "svcca err {:.1e}, rsa 1, knn 1, {} ms at 500x64",
        (s - 1.0).abs(),
        elapsed.as_millis()
    ))
}

fn rotation_invariance() -> Result<String, String> {
    let x = gen_space(300, 32, 5).unwrap().weights().clone();
    let full = SvccaConfig {
        variance_retained: 1.0,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (mut worst_svcca, mut worst_rsa) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let q = random_orthogonal(32, &mut rng);
        let xq = x.matmul(&q);
        worst_svcca = worst_svcca.max((metrics::svcca(&x, &xq, &full).unwrap() - 1.0).abs());
        for c in [0.1, 1.0, 10.0] {
            let r = metrics::rsa(&x, &xq.scale(c), &RsaConfig::default()).unwrap();
            worst_rsa = worst_rsa.max((r - 1.0).abs());
        }
    }
    ensure(worst_svcca < 1e-6, || format!("svcca err {worst_svcca:e}"))?;
    ensure(worst_rsa < 1e-9, || format!("rsa err {worst_rsa:e}"))?;
    Ok(format!(
        "20 rotations: max |svcca-1| {worst_svcca:.1e}, max |rsa-1| {worst_rsa:.1e}"
    ))
}

fn oracle_pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

fn oracle_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|v| {
            let less = x.iter().filter(|w| *w < v).count() as f64;
            let equal = x.iter().filter(|w| *w == v).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

fn columns(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.cols()).map(|c| m.column(c)).collect()
}

/// Argmax over every target by direct Pearson; ties go to the lower index,
/// constant columns never pair.
fn dense_argmax(a: &Matrix, b: &Matrix) -> BTreeMap<usize, usize> {
    let (ca, cb) = (columns(a), columns(b));
    let live = |c: &[f64]| c.iter().any(|v| *v != c[0]);
    (0..ca.len())
        .into_par_iter()
        .filter(|&i| live(&ca[i]))
        .filter_map(|i| {
            let mut best: Option<(usize, f64)> = None;
            for (j, col) in cb.iter().enumerate() {
                if !live(col) {
                    continue;
                }
                let r = oracle_pearson(&ca[i], col).unwrap();
                if best.is_none_or(|(_, b)| r > b) {
                    best = Some((j, r));
                }
            }
            best.map(|(j, _)| (i, j))
        })
        .collect()
}

fn random_acts(rng: &mut ChaCha8Rng, n_tokens: usize, n_features: usize, sparse: bool) -> Matrix {
    let mut m = Matrix::from_fn(n_tokens, n_features, |_, _| {
        let v: f64 = rng.sample(StandardNormal);
        if sparse {
            v.max(0.0)
        } else {
            v
        }
    });
    // a few dead features and exact duplicates for ties
    if n_features >= 4 {
        for _ in 0..(n_features / 50).max(1) {
            let f = rng.random_range(0..n_features);
            let c = rng.random_range(-1.0..1.0);
            (0..n_tokens).for_each(|t| m.set(t, f, c));
        }
        for _ in 0..(n_features / 20).max(1) {
            let (src, dst) = (
                rng.random_range(0..n_features),
                rng.random_range(0..n_features),
            );
            let col = m.column(src);
            (0..n_tokens).for_each(|t| m.set(t, dst, col[t]));
        }
    }
    m
}

fn oracle_equivalence() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let blocks = [1, 7, 64, 256, 1024];
    let mut largest = (0, 0);
    for inst in 0..200 {
        let (na, nb) = if inst % 20 == 0 {
            (1000, 1000)
        } else {
            (rng.random_range(1..=300), rng.random_range(1..=300))
        };
        let sparse = inst % 2 == 1;
        let a = random_acts(&mut rng, 500, na, sparse);
        let b = random_acts(&mut rng, 500, nb, sparse);
        let block = blocks[rng.random_range(0..blocks.len())];
        let got = pairing::correlate_argmax(
            &ActivationSet::new(a.clone(), "t").unwrap(),
            &ActivationSet::new(b.clone(), "t").unwrap(),
            block,
        )
        .unwrap();
        let got: BTreeMap<usize, usize> = got.pairs().iter().map(|p| (p.src, p.tgt)).collect();
        let want = dense_argmax(&a, &b);
        ensure(got == want, || {
            let diff = want.iter().find(|(s, t)| got.get(s) != Some(t));
            format!("instance {inst} ({na}x{nb}, block {block}): first mismatch {diff:?}")
        })?;
        largest = largest.max((na, nb));
    }
    let mut worst = 0.0f64;
    let mut checked = 0;
    for case in 0..500 {
        let n = rng.random_range(2..=50);
        let discrete = case % 2 == 0;
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    if discrete {
                        rng.random_range(0..4) as f64
                    } else {
                        rng.random_range(-10.0..10.0)
                    }
                })
                .collect()
        };
        let (x, y) = (draw(&mut rng), draw(&mut rng));
        match (oracle_pearson(&x, &y), metrics::pearson(&x, &y)) {
            (Some(o), Ok(v)) => {
                worst = worst.max((o - v).abs());
                checked += 1;
            }
            (None, Err(_)) => {}
            (o, v) => {
                return Err(format!(
                    "pearson disagreement on case {case}: {o:?} vs {v:?}"
                ))
            }
        }
        let (rx, ry) = (oracle_ranks(&x), oracle_ranks(&y));
        match (oracle_pearson(&rx, &ry), metrics::spearman(&x, &y)) {
            (Some(o), Ok(v)) => {
                worst = worst.max((o - v).abs());
                checked += 1;
            }
            (None, Err(_)) => {}
            (o, v) => {
                return Err(format!(
                    "spearman disagreement on case {case}: {o:?} vs {v:?}"
                ))
            }
        }
    }
    ensure(worst < 1e-12, || format!("scalar oracle error {worst:e}"))?;
    Ok(format!(
        "200 instances up to {}x{} exact; {checked} pearson/spearman values within {worst:.1e}",
        largest.0, largest.1
    ))
}

fn sides(fx: &Fixture) -> (Side, Side) {
    (
        Side::new(fx.space_a.clone(), fx.acts_a.clone(), &fx.tokens, 5).unwrap(),
        Side::new(fx.space_b.clone(), fx.acts_b.clone(), &fx.tokens, 5).unwrap(),
    )
}

fn pairing_recovery() -> Result<String, String> {
    let cfg = FixtureConfig {
        n_features: 500,
        dim: 64,
        rotate: true,
        permute: true,
        noise_sigma: 0.05,
        seed: 7,
        ..Default::default()
    };
    let fx = build_fixture(&cfg).unwrap();
    let p = pairing::correlate_argmax(&fx.acts_a, &fx.acts_b, 1024).unwrap();
    let found: HashMap<usize, usize> = p.pairs().iter().map(|q| (q.src, q.tgt)).collect();
    let hits = fx
        .true_pairing
        .iter()
        .filter(|(s, t)| found.get(s) == Some(t))
        .count();
    let rate = hits as f64 / fx.true_pairing.len() as f64;
    let (a, b) = sides(&fx);
    let opts = ScoreOptions {
        metrics: vec![Metric::Svcca],
        ..Default::default()
    };
    let svcca = pipeline::run_score(&a, &b, &opts).unwrap()[0].paired_score;
    ensure(rate >= 0.99, || format!("recovery {rate}"))?;
    ensure(svcca >= 0.95, || format!("downstream svcca {svcca}"))?;
    Ok(format!(
        "recovered {hits}/500 ({:.1}%), downstream svcca {svcca:.4}",
        100.0 * rate
    ))
}

fn significance_calibration() -> Result<String, String> {
    let t = Instant::now();
    let fixture = |independent: bool, seed: u64| FixtureConfig {
        n_features: 200,
        dim: 16,
        independent,
        activations: ActivationOptions {
            n_tokens: 1000,
            ..Default::default()
        },
        seed,
        ..Default::default()
    };
    let run = |independent: bool, trials: u64| -> Vec<Vec<f64>> {
        (0..trials)
            .into_par_iter()
            .map(|trial| {
                let fx = build_fixture(&fixture(independent, 10_000 + trial)).unwrap();
                let (a, b) = sides(&fx);
                let opts = ScoreOptions {
                    seed: trial,
                    ..Default::default()
                };
                pipeline::run_score(&a, &b, &opts)
                    .unwrap()
                    .iter()
                    .map(|r| r.p_value)
                    .collect()
            })
            .collect()
    };
    let indep = run(true, 200);
    let structured = run(false, 50);
    let elapsed = t.elapsed();
    let metrics = ["svcca", "rsa"];
    let mut detail = vec![];
    for (m, name) in metrics.iter().enumerate() {
        let false_pos = indep.iter().filter(|p| p[m] < 0.05).count();
        let zeros = structured.iter().filter(|p| p[m] == 0.0).count();
        ensure(false_pos as f64 <= 0.12 * 200.0, || {
            format!("{name}: independent p < 0.05 in {false_pos}/200")
        })?;
        ensure(zeros == 50, || {
            format!("{name}: structured p = 0 in {zeros}/50")
        })?;
        detail.push(format!(
            "{name} independent p<0.05 {false_pos}/200, structured p=0 {zeros}/50"
        ));
    }
    ensure(elapsed < Duration::from_secs(300), || {
        format!("took {elapsed:?}")
    })?;
    Ok(detail.join("; "))
}

fn filter_semantics() -> Result<String, String> {
    // whole collision groups go
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let n = rng.random_range(1..60);
        let range = rng.random_range(1..40);
        let pairs: Vec<FeaturePair> = (0..n)
            .map(|s| FeaturePair {
                src: s,
                tgt: rng.random_range(0..range),
                correlation: rng.random_range(-1.0..1.0),
            })
            .collect();
        let pm = PairingMap::new(pairs.clone(), "a", "b", vec![]).unwrap();
        let filtered = pairing::filter_one_to_one(&pm);
        let mut count: HashMap<usize, usize> = HashMap::new();
        pairs
            .iter()
            .for_each(|p| *count.entry(p.tgt).or_default() += 1);
        let expect: Vec<&FeaturePair> = pairs.iter().filter(|p| count[&p.tgt] == 1).collect();
        let got: Vec<&FeaturePair> = filtered.pairs().iter().collect();
        ensure(got == expect, || {
            "one_to_one kept part of a collision group".into()
        })?;
    }
    // stoplist tags removed exactly
    for seed in 0..5 {
        let cfg = FixtureConfig {
            n_features: 150,
            activations: ActivationOptions {
                stoplist_fraction: 0.3,
                ..Default::default()
            },
            seed,
            ..Default::default()
        };
        let fx = build_fixture(&cfg).unwrap();
        let p = pairing::correlate_argmax(&fx.acts_a, &fx.acts_b, 64).unwrap();
        let top_a = semantic::top_activating_tokens(&fx.acts_a, &fx.tokens, 5).unwrap();
        let top_b = semantic::top_activating_tokens(&fx.acts_b, &fx.tokens, 5).unwrap();
        let kept =
            pairing::filter_nonconcept(&p, &top_a, &top_b, &StoplistConfig::default()).unwrap();
        let kept = kept.src_indices();
        let removed: Vec<usize> = p
            .src_indices()
            .into_iter()
            .filter(|s| !kept.contains(s))
            .collect();
        ensure(removed == fx.stoplist_sources, || {
            format!(
                "seed {seed}: removed {removed:?}, planted {:?}",
                fx.stoplist_sources
            )
        })?;
    }
    // stage counts in every report the CLI writes
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("fx");
    let mut outputs = vec![];
    saesim(&[
        "synthetic",
        "-o",
        p(&bundle),
        "--n-features",
        "120",
        "--dim",
        "4",
        "--n-tokens",
        "1000",
        "--layers",
        "2",
        "--stoplist-fraction",
        "0.2",
        "--cluster",
        "shared",
        "--cluster-size",
        "30",
        "--n-keywords",
        "3",
        "--seed",
        "4",
    ])?;
    let score = dir.path().join("score.json");
    saesim(&[
        "score",
        "--bundle",
        p(&bundle),
        "--metrics",
        "svcca,rsa,knn_jaccard,mean_correlation",
        "-o",
        p(&score),
    ])?;
    outputs.push(score);
    let sweep = dir.path().join("sweep.json");
    saesim(&[
        "sweep",
        "--manifest",
        p(&bundle),
        "--null-samples",
        "20",
        "-o",
        p(&sweep),
    ])?;
    outputs.push(sweep);
    let sub = dir.path().join("subspace.json");
    saesim(&[
        "subspace",
        "--bundle",
        p(&bundle),
        "--category",
        "Emotions",
        "--null-samples",
        "50",
        "-o",
        p(&sub),
    ])?;
    outputs.push(sub);
    let mut n_reports = 0;
    for out in &outputs {
        let v: Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
        let items = match v {
            Value::Array(a) => a,
            o => vec![o],
        };
        for r in items.iter().filter(|r| r["status"] != "too_few_pairs") {
            let stages: Vec<(String, u64)> = r["stage_counts"]
                .as_array()
                .ok_or("report without stage_counts")?
                .iter()
                .map(|s| {
                    (
                        s["stage"].as_str().unwrap().to_string(),
                        s["n_pairs"].as_u64().unwrap(),
                    )
                })
                .collect();
            let names: Vec<&str> = stages.iter().map(|s| s.0.as_str()).collect();
            ensure(
                names
                    == [
                        "unfiltered",
                        filter_names::NONCONCEPT,
                        filter_names::SHARED_TOKEN,
                        filter_names::ONE_TO_ONE,
                    ],
                || format!("{}: stages {names:?}", out.display()),
            )?;
            ensure(
                stages.last().unwrap().1 == r["n_pairs"].as_u64().unwrap(),
                || "final stage != n_pairs".into(),
            )?;
            n_reports += 1;
        }
    }
    Ok(format!(
        "collision groups removed whole (200 cases); planted stoplist pairs removed exactly (5 fixtures); stage counts in all {n_reports} CLI reports"
    ))
}

fn semantic_subspace() -> Result<String, String> {
    let lex = default_lexicon();
    let keywords = lex.category("Emotions").unwrap()[..3].to_vec();
    let fixture = |kind: PlantKind, seed: u64| FixtureConfig {
        n_features: 400,
        dim: 4,
        cluster: Some(ClusterSpec {
            kind,
            keywords: keywords.clone(),
            size: 60,
        }),
        seed,
        ..Default::default()
    };
    let opts = |subset_samples: usize| SubspaceOptions {
        score: ScoreOptions {
            metrics: vec![Metric::Svcca],
            ..Default::default()
        },
        shuffle_samples: 1000,
        subset_samples,
    };
    let planted: Vec<(f64, f64)> = (0..5u64)
        .into_par_iter()
        .map(|seed| {
            let fx = build_fixture(&fixture(PlantKind::Shared, seed)).unwrap();
            let (a, b) = sides(&fx);
            let out = pipeline::run_subspace(&a, &b, &lex, "Emotions", &opts(1000)).unwrap();
            match out.status {
                SubspaceStatus::Scored { tests, .. } => {
                    (tests[0].shuffle.p_value, tests[0].random_subsets.p_value)
                }
                SubspaceStatus::TooFewPairs { .. } => (1.0, 1.0),
            }
        })
        .collect();
    ensure(
        planted.iter().all(|&(t1, t2)| t1 == 0.0 && t2 == 0.0),
        || format!("planted (test1, test2) p-values {planted:?}"),
    )?;
    // only Test 1 is judged for unrelated clusters, so Test 2 gets one sample
    let unrelated: Vec<Option<f64>> = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let fx = build_fixture(&fixture(PlantKind::Unrelated, 500 + seed)).unwrap();
            let (a, b) = sides(&fx);
            let out = pipeline::run_subspace(&a, &b, &lex, "Emotions", &opts(1)).unwrap();
            match out.status {
                SubspaceStatus::Scored { tests, .. } => Some(tests[0].shuffle.p_value),
                SubspaceStatus::TooFewPairs { .. } => None,
            }
        })
        .collect();
    let fails = unrelated
        .iter()
        .filter(|p| matches!(p, Some(v) if *v > 0.05))
        .count();
    let scored = unrelated.iter().filter(|p| p.is_some()).count();
    ensure(fails >= 90, || {
        format!("unrelated Test 1 p > 0.05 in {fails}/100 ({scored} scored)")
    })?;
    Ok(format!(
        "planted: Test 1 and Test 2 p = 0 at 1000 nulls in 5/5 fixtures; unrelated: Test 1 p > 0.05 in {fails}/100"
    ))
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_saesim")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn saesim(args: &[&str]) -> Result<Vec<u8>, String> {
    saesim_env(args, None)
}

fn saesim_env(args: &[&str], threads: Option<&str>) -> Result<Vec<u8>, String> {
    let mut cmd = Command::new(bin());
    cmd.args(args);
    if let Some(t) = threads {
        cmd.env("RAYON_NUM_THREADS", t);
    }
    let out = cmd.output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "saesim {args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(out.stdout)
}

fn read_dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

fn determinism() -> Result<String, String> {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| -> PathBuf { dir.path().join(name) };
    let synth = |out: &Path| {
        saesim(&[
            "synthetic",
            "-o",
            p(out),
            "--n-features",
            "100",
            "--dim",
            "4",
            "--n-tokens",
            "800",
            "--layers",
            "2",
            "--stoplist-fraction",
            "0.1",
            "--cluster",
            "shared",
            "--cluster-size",
            "25",
            "--n-keywords",
            "3",
            "--seed",
            "9",
        ])
    };
    synth(&d("b1"))?;
    synth(&d("b2"))?;
    ensure(read_dir_bytes(&d("b1")) == read_dir_bytes(&d("b2")), || {
        "synthetic bundles differ".into()
    })?;
    let bundle = d("b1");
    let mut compared = vec!["synthetic".to_string()];
    let runs: Vec<(&str, Vec<String>)> = vec![
        (
            "score",
            vec![
                "--bundle".into(),
                p(&bundle).into(),
                "--metrics".into(),
                "svcca,rsa,knn_jaccard".into(),
                "--seed".into(),
                "3".into(),
            ],
        ),
        (
            "sweep",
            vec![
                "--manifest".into(),
                p(&bundle).into(),
                "--null-samples".into(),
                "30".into(),
                "--seed".into(),
                "3".into(),
            ],
        ),
        (
            "subspace",
            vec![
                "--bundle".into(),
                p(&bundle).into(),
                "--null-samples".into(),
                "100".into(),
                "--seed".into(),
                "3".into(),
            ],
        ),
    ];
    for (cmd, extra) in &runs {
        for ext in ["json", "csv"] {
            let mut outs = vec![];
            for (i, threads) in [Some("1"), None].into_iter().enumerate() {
                let out = d(&format!("{cmd}{i}.{ext}"));
                let mut args: Vec<&str> = vec![cmd];
                args.extend(extra.iter().map(String::as_str));
                args.extend(["-o", p(&out)]);
                let svg = d(&format!("{cmd}{i}.{ext}.svg"));
                if *cmd == "sweep" {
                    args.extend(["--svg", p(&svg)]);
                }
                saesim_env(&args, threads)?;
                let mut bytes = std::fs::read(&out).unwrap();
                if *cmd == "sweep" {
                    bytes.extend(std::fs::read(&svg).unwrap());
                }
                outs.push(bytes);
            }
            ensure(outs[0] == outs[1], || {
                format!("{cmd} {ext} output differs between runs")
            })?;
            compared.push(format!("{cmd}.{ext}"));
        }
    }
    let files: Vec<String> = read_dir_bytes(&bundle)
        .keys()
        .map(|k| p(&bundle.join(k)).to_string())
        .collect();
    let mut args = vec!["validate"];
    args.extend(files.iter().map(String::as_str));
    let v1 = saesim(&args)?;
    let v2 = saesim(&args)?;
    ensure(v1 == v2, || "validate output differs".into())?;
    compared.push("validate".into());
    Ok(format!(
        "byte-identical across re-runs (1 thread vs pool): {}",
        compared.join(", ")
    ))
}
