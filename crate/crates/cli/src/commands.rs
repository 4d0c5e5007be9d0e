use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use saesim_core::io::{self, Dtype, ReportFormat, ReportRow};
use saesim_core::metrics::MetricConfig;
use saesim_core::pairing::FilterConfig;
use saesim_core::pipeline::{
    self, ScoreOptions, Side, SubspaceOptions, SubspaceOutcome, SubspaceStatus,
};
use saesim_core::significance::{DEFAULT_FULL_SPACE_SAMPLES, DEFAULT_SUBSPACE_SAMPLES, MIN_PAIRS};
use saesim_core::synthetic::{self, ActivationOptions, ClusterSpec, FixtureConfig, PlantKind};
use saesim_core::{ActivationSet, ConceptLexicon, FeatureSpace, Metric, ScoreReport, TokenTable};

use crate::config::{self, FileConfig};
use crate::manifest::{LayerFiles, Manifest, ModelFiles, MANIFEST_FILE};
use crate::{
    heatmap, AnalysisArgs, Cli, Command, InputArgs, ScoreArgs, SubspaceArgs, SweepArgs,
    SyntheticArgs, ValidateArgs, LEXICON_ENV,
};

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Score(a) => cmd_score(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Subspace(a) => cmd_subspace(&a),
        Command::Synthetic(a) => cmd_synthetic(&a),
        Command::Validate(a) => cmd_validate(&a),
    }
}

/// Merges flags over the config file over defaults.
fn score_options(a: &AnalysisArgs, f: &FileConfig, default_null: usize) -> Result<ScoreOptions> {
    let mut opts = ScoreOptions::default();
    if let Some(m) = a.metrics.as_ref().or(f.metrics.as_ref()) {
        opts.metrics = m
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse::<Metric>)
            .collect::<Result<_, _>>()?;
        if opts.metrics.is_empty() {
            bail!(saesim_core::Error::InvalidArgument(
                "no metrics given".into()
            ));
        }
        opts.metrics.dedup();
    }
    if let Some(s) = a.filters.as_ref().or(f.filters.as_ref()) {
        opts.filters = FilterConfig::parse_list(s)?;
    }
    opts.null_samples = a.null_samples.or(f.null_samples).unwrap_or(default_null);
    opts.seed = a.seed.or(f.seed).unwrap_or(0);
    if let Some(v) = a.block_size.or(f.block_size) {
        opts.block_size = v;
    }
    if let Some(v) = a.top_k.or(f.top_k) {
        opts.top_k = v;
    }
    let mc: &mut MetricConfig = &mut opts.metric_cfg;
    if let Some(v) = a.variance_retained.or(f.variance_retained) {
        mc.svcca.variance_retained = v;
    }
    if let Some(v) = a.svcca_epsilon.or(f.svcca_epsilon) {
        mc.svcca.epsilon = v;
    }
    if let Some(v) = a.rdm_metric.as_ref().or(f.rdm_metric.as_ref()) {
        mc.rsa.rdm_metric = v.parse()?;
    }
    if let Some(v) = a.knn_k.or(f.knn_k) {
        mc.knn_k = v;
    }
    mc.svcca.validate()?;
    if opts.null_samples == 0 || opts.block_size == 0 || opts.top_k == 0 {
        bail!(saesim_core::Error::InvalidArgument(
            "null_samples, block_size and top_k must be >= 1".into()
        ));
    }
    Ok(opts)
}

fn output_format(a: &AnalysisArgs, f: &FileConfig, out: &Path) -> Result<ReportFormat> {
    match a.format.as_ref().or(f.format.as_ref()) {
        Some(s) => Ok(s.parse()?),
        None => Ok(ReportFormat::from_path(out)),
    }
}

fn filter_names(f: &FilterConfig) -> String {
    let mut names = vec![];
    if f.nonconcept {
        names.push("nonconcept");
    }
    if f.shared_token {
        names.push("shared_token");
    }
    if f.one_to_one {
        names.push("one_to_one");
    }
    names.join(",")
}

/// Hash of every setting that affects report contents.
pub fn config_hash(command: &str, opts: &ScoreOptions, extra: &BTreeMap<String, String>) -> String {
    let mut canon = opts.params();
    canon.insert("command".into(), command.into());
    let metrics: Vec<&str> = opts.metrics.iter().map(|m| m.as_str()).collect();
    canon.insert("metrics".into(), metrics.join(","));
    canon.insert("filters".into(), filter_names(&opts.filters));
    canon.insert(
        "stoplist".into(),
        opts.filters.stoplist.keywords.join("\u{1f}"),
    );
    canon.insert("null_samples".into(), opts.null_samples.to_string());
    canon.insert("seed".into(), opts.seed.to_string());
    canon.extend(extra.iter().map(|(k, v)| (k.clone(), v.clone())));
    let bytes = serde_json::to_vec(&canon).expect("map serializes");
    hex(&Sha256::digest(&bytes)[..8])
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn stamp(report: &mut ScoreReport, hash: &str) {
    report
        .params
        .insert("tool_version".into(), env!("CARGO_PKG_VERSION").into());
    report.params.insert("config_hash".into(), hash.into());
}

/// Two-decimal display line; files keep six significant digits.
fn display(prefix: &str, r: &ScoreReport) {
    println!(
        "{prefix}{:<16} paired {:.2}  null {:.2}  p {:.2}  pairs {}",
        r.metric.as_str(),
        r.paired_score,
        r.null_mean,
        r.p_value,
        r.n_pairs
    );
}

fn load_side(
    weights: &Path,
    acts: &Path,
    model_id: &str,
    layer: u32,
    tokens: &TokenTable,
    tokens_ref: &str,
    top_k: usize,
) -> Result<Side> {
    let w = io::load_matrix(weights).with_context(|| format!("loading {}", weights.display()))?;
    let space = FeatureSpace::new(w, model_id, layer)
        .with_context(|| format!("weights {}", weights.display()))?;
    let m = io::load_matrix(acts).with_context(|| format!("loading {}", acts.display()))?;
    let acts_set = ActivationSet::new(m, tokens_ref)
        .with_context(|| format!("activations {}", acts.display()))?;
    Side::new(space, acts_set, tokens, top_k)
        .with_context(|| format!("{} / {}", weights.display(), acts.display()))
}

fn load_tokens(path: &Path) -> Result<TokenTable> {
    io::load_token_table(path).with_context(|| format!("loading {}", path.display()))
}

fn pick_layer(model: &ModelFiles, layer: Option<u32>) -> Result<&LayerFiles> {
    match layer {
        Some(l) => model.layer(l).ok_or_else(|| {
            anyhow!(saesim_core::Error::InvalidArgument(format!(
                "model {} has no layer {l} in the manifest",
                model.id
            )))
        }),
        None => Ok(&model.layers[0]),
    }
}

fn load_inputs(input: &InputArgs, top_k: usize) -> Result<(Side, Side)> {
    if let Some(bundle) = &input.bundle {
        let m = Manifest::load(bundle)?;
        let tokens = load_tokens(&m.tokens)?;
        let tref = m.tokens.display().to_string();
        let la = pick_layer(&m.model_a, input.layer_a)?;
        let lb = pick_layer(&m.model_b, input.layer_b)?;
        let a = load_side(
            &la.weights,
            &la.acts,
            &m.model_a.id,
            la.layer,
            &tokens,
            &tref,
            top_k,
        )?;
        let b = load_side(
            &lb.weights,
            &lb.acts,
            &m.model_b.id,
            lb.layer,
            &tokens,
            &tref,
            top_k,
        )?;
        return Ok((a, b));
    }
    let need = |p: &Option<PathBuf>, flag: &str| -> Result<PathBuf> {
        p.clone().ok_or_else(|| {
            anyhow!(saesim_core::Error::InvalidArgument(format!(
                "--{flag} is required without --bundle"
            )))
        })
    };
    let (wa, wb) = (
        need(&input.weights_a, "weights-a")?,
        need(&input.weights_b, "weights-b")?,
    );
    let (aa, ab) = (
        need(&input.acts_a, "acts-a")?,
        need(&input.acts_b, "acts-b")?,
    );
    let tpath = need(&input.tokens, "tokens")?;
    let tokens = load_tokens(&tpath)?;
    let tref = tpath.display().to_string();
    let la = input.layer_a.unwrap_or(0);
    let lb = input.layer_b.unwrap_or(0);
    let a = load_side(&wa, &aa, &input.model_a, la, &tokens, &tref, top_k)?;
    let b = load_side(&wb, &ab, &input.model_b, lb, &tokens, &tref, top_k)?;
    Ok((a, b))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_score(args: &ScoreArgs) -> Result<()> {
    let file = config::load_optional(args.analysis.config.as_deref())?;
    let opts = score_options(&args.analysis, &file, DEFAULT_FULL_SPACE_SAMPLES)?;
    let format = output_format(&args.analysis, &file, &args.out)?;
    let (a, b) = load_inputs(&args.input, opts.top_k)?;
    let mut reports = pipeline::run_score(&a, &b, &opts)?;
    let hash = config_hash("score", &opts, &BTreeMap::new());
    for r in &mut reports {
        stamp(r, &hash);
        display("", r);
    }
    let rows: Vec<ReportRow> = reports.into_iter().map(ReportRow::single).collect();
    io::write_reports(&args.out, &rows, format)?;
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let file = config::load_optional(args.analysis.config.as_deref())?;
    let opts = score_options(&args.analysis, &file, DEFAULT_FULL_SPACE_SAMPLES)?;
    let format = output_format(&args.analysis, &file, &args.out)?;
    let m = Manifest::load(&args.manifest)?;
    let tokens = load_tokens(&m.tokens)?;
    let tref = m.tokens.display().to_string();
    let sorted = |model: &ModelFiles| {
        let mut ls = model.layers.clone();
        ls.sort_by_key(|l| l.layer);
        ls
    };
    let (layers_a, layers_b) = (sorted(&m.model_a), sorted(&m.model_b));
    let load_all = |layers: &[LayerFiles], id: &str| -> Vec<Result<Side>> {
        layers
            .par_iter()
            .map(|l| load_side(&l.weights, &l.acts, id, l.layer, &tokens, &tref, opts.top_k))
            .collect()
    };
    let mut sides_a = load_all(&layers_a, &m.model_a.id);
    let mut sides_b = load_all(&layers_b, &m.model_b.id);
    // report the first failing layer pair in row order
    for (i, la) in layers_a.iter().enumerate() {
        for (j, lb) in layers_b.iter().enumerate() {
            let failed = if sides_a[i].is_err() {
                Some(sides_a.swap_remove(i))
            } else if sides_b[j].is_err() {
                Some(sides_b.swap_remove(j))
            } else {
                None
            };
            if let Some(Err(e)) = failed {
                return Err(e.context(format!("layer pair (A{}, B{})", la.layer, lb.layer)));
            }
        }
    }
    let sides_a: Vec<Side> = sides_a.into_iter().map(Result::unwrap).collect();
    let sides_b: Vec<Side> = sides_b.into_iter().map(Result::unwrap).collect();
    let pairs: Vec<(usize, usize)> = (0..sides_a.len())
        .flat_map(|i| (0..sides_b.len()).map(move |j| (i, j)))
        .collect();
    let results: Vec<Result<Vec<ScoreReport>>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            pipeline::run_score(&sides_a[i], &sides_b[j], &opts).with_context(|| {
                format!(
                    "layer pair (A{}, B{})",
                    layers_a[i].layer, layers_b[j].layer
                )
            })
        })
        .collect();
    let hash = config_hash("sweep", &opts, &BTreeMap::new());
    let mut rows = vec![];
    for (&(i, j), res) in pairs.iter().zip(results) {
        for mut report in res? {
            stamp(&mut report, &hash);
            rows.push(ReportRow {
                layer_a: Some(layers_a[i].layer),
                layer_b: Some(layers_b[j].layer),
                label: None,
                report,
            });
        }
    }
    rows.sort_by(|x, y| {
        (x.layer_a, x.layer_b, x.report.metric.as_str()).cmp(&(
            y.layer_a,
            y.layer_b,
            y.report.metric.as_str(),
        ))
    });
    for r in &rows {
        display(
            &format!(
                "A{:<3} B{:<3} ",
                r.layer_a.unwrap_or(0),
                r.layer_b.unwrap_or(0)
            ),
            &r.report,
        );
    }
    io::write_reports(&args.out, &rows, format)?;
    if let Some(svg) = &args.svg {
        write_text(svg, &heatmap::render(&rows))?;
    }
    Ok(())
}

/// Flag, then config file, then `$SAESIM_LEXICON`, then the shipped lexicon.
fn resolve_lexicon(flag: Option<&Path>, file: Option<&Path>) -> Result<ConceptLexicon> {
    let env = std::env::var_os(LEXICON_ENV).map(PathBuf::from);
    match flag.or(file).or(env.as_deref()) {
        Some(p) => io::load_lexicon(p).with_context(|| format!("loading lexicon {}", p.display())),
        None => Ok(io::default_lexicon()),
    }
}

fn cmd_subspace(args: &SubspaceArgs) -> Result<()> {
    let file = config::load_optional(args.analysis.config.as_deref())?;
    let score = score_options(&args.analysis, &file, DEFAULT_SUBSPACE_SAMPLES)?;
    let format = output_format(&args.analysis, &file, &args.out)?;
    let lexicon = resolve_lexicon(args.lexicon.as_deref(), file.lexicon.as_deref())?;
    let categories: Vec<String> = match args.category.as_ref().or(file.categories.as_ref()) {
        Some(list) => list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect(),
        None => lexicon.category_names().map(String::from).collect(),
    };
    for c in &categories {
        lexicon.category(c)?;
    }
    let opts = SubspaceOptions {
        shuffle_samples: args
            .shuffle_samples
            .or(file.shuffle_samples)
            .unwrap_or(score.null_samples),
        subset_samples: args
            .subset_samples
            .or(file.subset_samples)
            .unwrap_or(score.null_samples),
        score,
    };
    if opts.shuffle_samples == 0 || opts.subset_samples == 0 {
        bail!(saesim_core::Error::InvalidArgument(
            "null sample counts must be >= 1".into()
        ));
    }
    let (a, b) = load_inputs(&args.input, opts.score.top_k)?;
    let outcomes: Vec<SubspaceOutcome> = categories
        .iter()
        .map(|c| {
            pipeline::run_subspace(&a, &b, &lexicon, c, &opts)
                .with_context(|| format!("category {c}"))
        })
        .collect::<Result<_>>()?;
    let extra = BTreeMap::from([
        ("categories".to_string(), categories.join(",")),
        (
            "lexicon_sha256".to_string(),
            hex(&Sha256::digest(io::encode_lexicon(&lexicon).as_bytes())),
        ),
        (
            "shuffle_samples".to_string(),
            opts.shuffle_samples.to_string(),
        ),
        (
            "subset_samples".to_string(),
            opts.subset_samples.to_string(),
        ),
    ]);
    let hash = config_hash("subspace", &opts.score, &extra);
    let mut rows = vec![];
    for mut o in outcomes {
        match &mut o.status {
            SubspaceStatus::TooFewPairs { found } => {
                eprintln!(
                    "warning: category {}: {found} pairs after filters, need {MIN_PAIRS}",
                    o.category
                );
            }
            SubspaceStatus::Scored { tests, .. } => {
                for t in tests.iter_mut() {
                    stamp(&mut t.shuffle, &hash);
                    stamp(&mut t.random_subsets, &hash);
                    display(&format!("{:<14} test1 ", o.category), &t.shuffle);
                    display(&format!("{:<14} test2 ", o.category), &t.random_subsets);
                }
            }
        }
        rows.push(o);
    }
    write_text(&args.out, &encode_subspace(&rows, format))
}

const SUBSPACE_CSV_HEADER: &str = "category,status,test,size_a,size_b,metric,paired_score,null_mean,null_samples,p_value,n_pairs,seed,stage_counts,warning\n";

/// One row per (category, metric, test); categories with too few pairs get
/// a single warning row.
pub fn encode_subspace(outcomes: &[SubspaceOutcome], format: ReportFormat) -> String {
    let mut records: Vec<Map<String, Value>> = vec![];
    for o in outcomes {
        match &o.status {
            SubspaceStatus::TooFewPairs { found } => {
                let mut m = Map::new();
                m.insert("category".into(), json!(o.category));
                m.insert("status".into(), json!("too_few_pairs"));
                m.insert("size_a".into(), json!(o.size_a));
                m.insert("size_b".into(), json!(o.size_b));
                m.insert("n_pairs".into(), json!(found));
                m.insert(
                    "warning".into(),
                    json!(format!("{found} pairs after filters, need {MIN_PAIRS}")),
                );
                records.push(m);
            }
            SubspaceStatus::Scored { tests, .. } => {
                for t in tests {
                    for (name, r) in [
                        ("shuffle", &t.shuffle),
                        ("random_subsets", &t.random_subsets),
                    ] {
                        let mut m = io::report_json(r);
                        m.insert("category".into(), json!(o.category));
                        m.insert("status".into(), json!("ok"));
                        m.insert("test".into(), json!(name));
                        m.insert("size_a".into(), json!(o.size_a));
                        m.insert("size_b".into(), json!(o.size_b));
                        records.push(m);
                    }
                }
            }
        }
    }
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(&records).expect("records serialize");
            s.push('\n');
            s
        }
        ReportFormat::Csv => {
            let mut out = String::from(SUBSPACE_CSV_HEADER);
            let cell = |m: &Map<String, Value>, k: &str| -> String {
                match m.get(k) {
                    None | Some(Value::Null) => String::new(),
                    Some(Value::String(s)) => csv_cell(s),
                    Some(Value::Number(n)) => match n.as_f64() {
                        Some(x) if !n.is_u64() && !n.is_i64() => io::fmt_sig6(x),
                        _ => n.to_string(),
                    },
                    Some(Value::Array(stages)) => csv_cell(
                        &stages
                            .iter()
                            .map(|s| {
                                format!("{}={}", s["stage"].as_str().unwrap_or(""), s["n_pairs"])
                            })
                            .collect::<Vec<_>>()
                            .join(";"),
                    ),
                    Some(v) => csv_cell(&v.to_string()),
                }
            };
            for m in &records {
                let cols: Vec<String> = SUBSPACE_CSV_HEADER
                    .trim_end()
                    .split(',')
                    .map(|k| cell(m, k))
                    .collect();
                out.push_str(&cols.join(","));
                out.push('\n');
            }
            out
        }
    }
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn cmd_synthetic(args: &SyntheticArgs) -> Result<()> {
    let cluster = match args.cluster.as_deref() {
        None => None,
        Some(kind) => {
            let kind = match kind {
                "shared" => PlantKind::Shared,
                "unrelated" => PlantKind::Unrelated,
                other => bail!(saesim_core::Error::InvalidArgument(format!(
                    "--cluster must be shared or unrelated, got {other:?}"
                ))),
            };
            let lexicon = resolve_lexicon(args.lexicon.as_deref(), None)?;
            let mut keywords = lexicon.category(&args.category)?.to_vec();
            if let Some(n) = args.n_keywords {
                keywords.truncate(n.max(1));
            }
            Some(ClusterSpec {
                kind,
                keywords,
                size: args.cluster_size,
            })
        }
    };
    let cfg = FixtureConfig {
        n_features: args.n_features,
        dim: args.dim,
        independent: args.independent,
        rotate: !args.no_rotate,
        permute: !args.no_permute,
        noise_sigma: args.noise_sigma,
        activations: ActivationOptions {
            n_tokens: args.n_tokens,
            snr: args.snr,
            stoplist_fraction: args.stoplist_fraction,
            ..Default::default()
        },
        cluster,
        seed: args.seed,
    };
    let fx = synthetic::build_layered_fixture(&cfg, args.layers)?;
    write_bundle(&args.out, &cfg, &fx)?;
    println!(
        "wrote {} ({} layers, {} features, {} tokens)",
        args.out.display(),
        args.layers,
        args.n_features,
        args.n_tokens
    );
    Ok(())
}

/// Writes a fixture as interchange files plus `manifest.toml` and
/// `truth.json`.
pub fn write_bundle(dir: &Path, cfg: &FixtureConfig, fx: &synthetic::LayeredFixture) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let base = &fx.base;
    io::write_npy(dir.join("a.acts.npy"), base.acts_a.acts(), Dtype::F64)?;
    io::write_npy(dir.join("b.acts.npy"), base.acts_b.acts(), Dtype::F64)?;
    io::write_token_table(dir.join("tokens.tokens.jsonl"), &base.tokens)?;
    let layer_files = |side: &str, spaces: &[FeatureSpace]| -> Result<Vec<LayerFiles>> {
        spaces
            .iter()
            .map(|s| {
                let name = format!("{side}_L{}.weights.npy", s.layer());
                io::write_npy(dir.join(&name), s.weights(), Dtype::F64)?;
                Ok(LayerFiles {
                    layer: s.layer(),
                    weights: name.into(),
                    acts: format!("{side}.acts.npy").into(),
                })
            })
            .collect()
    };
    let manifest = Manifest {
        tokens: "tokens.tokens.jsonl".into(),
        model_a: ModelFiles {
            id: "synthetic-a".into(),
            layers: layer_files("a", &fx.layers_a)?,
        },
        model_b: ModelFiles {
            id: "synthetic-b".into(),
            layers: layer_files("b", &fx.layers_b)?,
        },
    };
    write_text(&dir.join(MANIFEST_FILE), &manifest.encode())?;
    let truth = json!({
        "true_pairing": base.true_pairing,
        "stoplist_sources": base.stoplist_sources,
        "concept_sources": base.concept_sources,
        "concept_targets": base.concept_targets,
        "config": cfg,
        "tool_version": env!("CARGO_PKG_VERSION"),
    });
    let mut text = serde_json::to_string_pretty(&truth)?;
    text.push('\n');
    write_text(&dir.join("truth.json"), &text)
}

fn cmd_validate(args: &ValidateArgs) -> Result<()> {
    let mut failed = 0;
    for path in &args.files {
        match validate_file(path) {
            Ok(summary) => println!("ok   {}: {summary}", path.display()),
            Err(e) => {
                failed += 1;
                println!("FAIL {}: {e:#}", path.display());
            }
        }
    }
    if failed > 0 {
        bail!(saesim_core::Error::InvalidArgument(format!(
            "{failed} of {} files failed validation",
            args.files.len()
        )));
    }
    Ok(())
}

/// Checks one file by its extension and returns a one-line summary.
pub fn validate_file(path: &Path) -> Result<String> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    if name.ends_with(".tokens.jsonl") {
        let t = io::load_token_table(path)?;
        Ok(format!("token table, {} tokens", t.len()))
    } else if name.ends_with(".lexicon") {
        let lex = io::load_lexicon(path)?;
        Ok(format!("lexicon, {} categories", lex.categories().len()))
    } else if name.ends_with(".npy") || name.ends_with(".csv") {
        let m = io::load_matrix(path)?;
        Ok(format!("matrix {}x{}", m.rows(), m.cols()))
    } else if name.ends_with(".toml") || path.is_dir() {
        validate_manifest(path)
    } else if name.ends_with(".json") {
        validate_report(path)
    } else {
        bail!(saesim_core::Error::InvalidArgument(
            "unrecognized file type".into()
        ))
    }
}

fn validate_manifest(path: &Path) -> Result<String> {
    let m = Manifest::load(path)?;
    let tokens = load_tokens(&m.tokens)?;
    for model in [&m.model_a, &m.model_b] {
        for l in &model.layers {
            let w = io::load_matrix(&l.weights)
                .with_context(|| format!("loading {}", l.weights.display()))?;
            let a = io::load_matrix(&l.acts)
                .with_context(|| format!("loading {}", l.acts.display()))?;
            if a.rows() != tokens.len() {
                bail!(saesim_core::Error::TokenCountMismatch {
                    left: a.rows(),
                    right: tokens.len()
                });
            }
            if w.rows() != a.cols() {
                bail!(saesim_core::Error::InvalidArgument(format!(
                    "{} layer {}: {} weight rows but {} activation columns",
                    model.id,
                    l.layer,
                    w.rows(),
                    a.cols()
                )));
            }
        }
    }
    Ok(format!(
        "manifest, {}x{} layers, {} tokens",
        m.model_a.layers.len(),
        m.model_b.layers.len(),
        tokens.len()
    ))
}

fn validate_report(path: &Path) -> Result<String> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let v: Value = serde_json::from_str(&text)
        .map_err(|e| saesim_core::Error::InvalidArgument(format!("not JSON: {e}")))?;
    if let Some(pairs) = v.get("true_pairing").and_then(Value::as_array) {
        return Ok(format!("fixture truth, {} true pairs", pairs.len()));
    }
    let items = match v {
        Value::Array(items) => items,
        obj => vec![obj],
    };
    let mut n = 0;
    for item in items {
        if item.get("status").and_then(Value::as_str) == Some("too_few_pairs") {
            continue;
        }
        serde_json::from_value::<ScoreReport>(item)
            .map_err(|e| saesim_core::Error::InvalidArgument(format!("report {n}: {e}")))?;
        n += 1;
    }
    Ok(format!("{n} score reports"))
}
