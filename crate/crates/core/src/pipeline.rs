//! End-to-end scoring of two feature spaces: standardize, pair, filter,
//! score, compare against a null.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::metrics::MetricConfig;
use crate::model::{
    ActivationSet, ConceptLexicon, FeatureSpace, Metric, PairingMap, ScoreReport, StageCount,
    TokenTable, TopTokenIndex, DEFAULT_TOP_K,
};
use crate::pairing::{self, FilterConfig, Standardized, DEFAULT_BLOCK_SIZE};
use crate::semantic;
use crate::significance::{
    self, NullResult, NullSpec, SubsetPool, DEFAULT_FULL_SPACE_SAMPLES, DEFAULT_SUBSPACE_SAMPLES,
    MIN_PAIRS, RNG_NAME,
};

/// One model layer ready for comparison: weights, activations, their
/// standardized columns and per-feature top tokens.
#[derive(Debug, Clone)]
pub struct Side {
    pub space: FeatureSpace,
    pub acts: ActivationSet,
    pub z: Standardized,
    pub top: TopTokenIndex,
}

impl Side {
    pub fn new(
        space: FeatureSpace,
        acts: ActivationSet,
        tokens: &TokenTable,
        top_k: usize,
    ) -> Result<Side> {
        if space.n_features() != acts.n_features() {
            return Err(Error::InvalidArgument(format!(
                "{}: {} weight rows but {} activation columns",
                space.space_id(),
                space.n_features(),
                acts.n_features()
            )));
        }
        let top = semantic::top_activating_tokens(&acts, tokens, top_k)?;
        let z = pairing::standardize_columns(&acts);
        Ok(Side {
            space,
            acts,
            z,
            top,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreOptions {
    pub metrics: Vec<Metric>,
    pub filters: FilterConfig,
    pub metric_cfg: MetricConfig,
    pub null_samples: usize,
    pub seed: u64,
    pub block_size: usize,
    pub top_k: usize,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions {
            metrics: vec![Metric::Svcca, Metric::Rsa],
            filters: FilterConfig::default(),
            metric_cfg: MetricConfig::default(),
            null_samples: DEFAULT_FULL_SPACE_SAMPLES,
            seed: 0,
            block_size: DEFAULT_BLOCK_SIZE,
            top_k: DEFAULT_TOP_K,
        }
    }
}

impl ScoreOptions {
    /// Parameters recorded in every report.
    pub fn params(&self) -> BTreeMap<String, String> {
        let c = &self.metric_cfg;
        BTreeMap::from([
            ("block_size".to_string(), self.block_size.to_string()),
            ("knn_k".to_string(), c.knn_k.to_string()),
            (
                "rdm_metric".to_string(),
                c.rsa.rdm_metric.as_str().to_string(),
            ),
            ("rng".to_string(), RNG_NAME.to_string()),
            (
                "svcca_epsilon".to_string(),
                format!("{:e}", c.svcca.epsilon),
            ),
            ("top_k".to_string(), self.top_k.to_string()),
            (
                "variance_retained".to_string(),
                c.svcca.variance_retained.to_string(),
            ),
        ])
    }
}

/// Full-space pairing followed by the configured filters.
pub fn pair_full(a: &Side, b: &Side, opts: &ScoreOptions) -> Result<(PairingMap, Vec<StageCount>)> {
    let raw = pairing::pair_standardized(
        &a.z,
        &b.z,
        opts.block_size,
        &a.space.space_id(),
        &b.space.space_id(),
    )?;
    let (filtered, stages) =
        pairing::apply_filters(&raw, Some(&a.top), Some(&b.top), &opts.filters)?;
    if filtered.len() < MIN_PAIRS {
        return Err(Error::TooFewPairs {
            found: filtered.len(),
            required: MIN_PAIRS,
        });
    }
    Ok((filtered, stages))
}

/// Scores one metric on a filtered pairing against the shuffle null.
pub fn score_pairing(
    metric: Metric,
    a: &Side,
    b: &Side,
    pairing: &PairingMap,
    stages: &[StageCount],
    null_samples: usize,
    opts: &ScoreOptions,
) -> Result<ScoreReport> {
    let spec = NullSpec::shuffle(null_samples, opts.seed);
    let result = match metric {
        Metric::MeanCorrelation => significance::null_mean_correlation(&a.z, &b.z, pairing, &spec)?,
        m => significance::null_shuffle(
            m,
            &opts.metric_cfg,
            a.space.weights(),
            b.space.weights(),
            pairing,
            &spec,
        )?,
    };
    let mut params = opts.params();
    params.insert("null_mode".into(), "shuffle_pairing".into());
    Ok(report(metric, &result, pairing, stages, opts.seed, params))
}

fn report(
    metric: Metric,
    result: &NullResult,
    pairing: &PairingMap,
    stages: &[StageCount],
    seed: u64,
    params: BTreeMap<String, String>,
) -> ScoreReport {
    ScoreReport {
        metric,
        paired_score: result.paired_score,
        null_mean: result.null_mean(),
        null_samples: result.null_scores.len(),
        p_value: result.p_value(),
        n_pairs: pairing.len(),
        filters_applied: pairing.filters_applied().to_vec(),
        seed,
        stage_counts: stages.to_vec(),
        params,
    }
}

/// Pairs the full spaces and scores every requested metric.
pub fn run_score(a: &Side, b: &Side, opts: &ScoreOptions) -> Result<Vec<ScoreReport>> {
    opts.metric_cfg.svcca.validate()?;
    let (pairing, stages) = pair_full(a, b, opts)?;
    opts.metrics
        .iter()
        .map(|&m| score_pairing(m, a, b, &pairing, &stages, opts.null_samples, opts))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceOptions {
    pub score: ScoreOptions,
    /// Shuffle-null samples for Test 1.
    pub shuffle_samples: usize,
    /// Random-subset null samples for Test 2.
    pub subset_samples: usize,
}

impl Default for SubspaceOptions {
    fn default() -> Self {
        SubspaceOptions {
            score: ScoreOptions::default(),
            shuffle_samples: DEFAULT_SUBSPACE_SAMPLES,
            subset_samples: DEFAULT_SUBSPACE_SAMPLES,
        }
    }
}

/// Test 1 and Test 2 reports for one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceTests {
    pub metric: Metric,
    pub shuffle: ScoreReport,
    pub random_subsets: ScoreReport,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SubspaceStatus {
    Scored {
        stage_counts: Vec<StageCount>,
        tests: Vec<SubspaceTests>,
    },
    /// Fewer than [`MIN_PAIRS`] pairs survived; reported, not fatal.
    TooFewPairs { found: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceOutcome {
    pub category: String,
    /// Selected concept features on each side.
    pub size_a: usize,
    pub size_b: usize,
    pub status: SubspaceStatus,
}

/// Selects a category's features on both sides, pairs them, and runs
/// Test 1 (shuffled pairings) and Test 2 (random subsets of the same
/// sizes drawn from the features that survive the stoplist).
pub fn run_subspace(
    a: &Side,
    b: &Side,
    lexicon: &ConceptLexicon,
    category: &str,
    opts: &SubspaceOptions,
) -> Result<SubspaceOutcome> {
    let so = &opts.score;
    so.metric_cfg.svcca.validate()?;
    let filters = &so.filters;
    let pool = |top: &TopTokenIndex| -> Vec<usize> {
        if filters.nonconcept {
            semantic::concept_pool(top, &filters.stoplist)
        } else {
            (0..top.n_features()).collect()
        }
    };
    let (pool_a, pool_b) = (pool(&a.top), pool(&b.top));
    let select = |top: &TopTokenIndex, pool: &[usize]| -> Result<Vec<usize>> {
        let sel = semantic::select_concept_features(top, lexicon, category)?;
        Ok(sel
            .into_iter()
            .filter(|f| pool.binary_search(f).is_ok())
            .collect())
    };
    let sel_a = select(&a.top, &pool_a)?;
    let sel_b = select(&b.top, &pool_b)?;
    let mut outcome = SubspaceOutcome {
        category: category.to_string(),
        size_a: sel_a.len(),
        size_b: sel_b.len(),
        status: SubspaceStatus::TooFewPairs { found: 0 },
    };
    let (pairing, stages) = match semantic::match_subspaces(
        &sel_a,
        &sel_b,
        &a.z,
        &b.z,
        Some(&a.top),
        Some(&b.top),
        filters,
        so.block_size,
    ) {
        Ok(v) => v,
        Err(Error::TooFewPairs { found, .. }) => {
            outcome.status = SubspaceStatus::TooFewPairs { found };
            return Ok(outcome);
        }
        Err(e) => return Err(e),
    };
    let subset_pool = SubsetPool {
        space_a: a.space.weights(),
        space_b: b.space.weights(),
        acts_a: &a.z,
        acts_b: &b.z,
        pool_a: &pool_a,
        pool_b: &pool_b,
        block_size: so.block_size,
        one_to_one: filters.one_to_one,
    };
    let subset_spec = NullSpec::random_subsets(opts.subset_samples, so.seed);
    let mut tests = Vec::with_capacity(so.metrics.len());
    for &metric in &so.metrics {
        let mut shuffle = score_pairing(metric, a, b, &pairing, &stages, opts.shuffle_samples, so)?;
        let null = significance::null_random_subsets(
            metric,
            &so.metric_cfg,
            &subset_pool,
            (sel_a.len(), sel_b.len()),
            &subset_spec,
        )?;
        let result = NullResult {
            paired_score: shuffle.paired_score,
            null_scores: null.null_scores,
        };
        let mut params = so.params();
        params.insert("null_mode".into(), "random_subsets".into());
        params.insert("subset_pool".into(), subset_pool_name(filters).into());
        params.insert("subset_redraws".into(), null.redraws.to_string());
        let random_subsets = report(metric, &result, &pairing, &stages, so.seed, params);
        shuffle
            .params
            .insert("subset_pool".into(), subset_pool_name(filters).into());
        tests.push(SubspaceTests {
            metric,
            shuffle,
            random_subsets,
        });
    }
    outcome.status = SubspaceStatus::Scored {
        stage_counts: stages,
        tests,
    };
    Ok(outcome)
}

fn subset_pool_name(filters: &FilterConfig) -> &'static str {
    if filters.nonconcept {
        "post_nonconcept"
    } else {
        "all_features"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::default_lexicon;
    use crate::synthetic::{build_fixture, ClusterSpec, FixtureConfig, PlantKind};

    fn sides(cfg: &FixtureConfig) -> (Side, Side) {
        let fx = build_fixture(cfg).unwrap();
        (
            Side::new(fx.space_a, fx.acts_a, &fx.tokens, 5).unwrap(),
            Side::new(fx.space_b, fx.acts_b, &fx.tokens, 5).unwrap(),
        )
    }

    #[test]
    fn structured_fixture_significant() {
        let cfg = FixtureConfig {
            n_features: 150,
            seed: 3,
            ..Default::default()
        };
        let (a, b) = sides(&cfg);
        let reports = run_score(&a, &b, &ScoreOptions::default()).unwrap();
        for r in &reports {
            assert!(r.paired_score > 0.9, "{r:?}");
            assert_eq!(r.p_value, 0.0);
            assert_eq!(r.stage_counts.len(), 4);
            r.validate().unwrap();
        }
    }

    #[test]
    fn mismatched_inputs_rejected() {
        let cfg = FixtureConfig {
            n_features: 20,
            ..Default::default()
        };
        let fx = build_fixture(&cfg).unwrap();
        let three = fx.acts_b.select_features(&[0, 1, 2]);
        assert!(matches!(
            Side::new(fx.space_b, three, &fx.tokens, 5),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn planted_subspace_significant() {
        let lex = default_lexicon();
        let cfg = FixtureConfig {
            n_features: 400,
            dim: 4,
            cluster: Some(ClusterSpec {
                kind: PlantKind::Shared,
                keywords: lex.category("Emotions").unwrap()[..3].to_vec(),
                size: 60,
            }),
            seed: 1,
            ..Default::default()
        };
        let (a, b) = sides(&cfg);
        let opts = SubspaceOptions {
            score: ScoreOptions {
                metrics: vec![Metric::Svcca],
                ..Default::default()
            },
            shuffle_samples: 200,
            subset_samples: 200,
        };
        let out = run_subspace(&a, &b, &lex, "Emotions", &opts).unwrap();
        assert_eq!((out.size_a, out.size_b), (60, 60));
        let SubspaceStatus::Scored { tests, .. } = out.status else {
            panic!("not scored");
        };
        assert_eq!(tests[0].shuffle.p_value, 0.0);
        assert_eq!(tests[0].random_subsets.p_value, 0.0);
        let absent = run_subspace(&a, &b, &lex, "Countries", &opts).unwrap();
        assert_eq!(absent.status, SubspaceStatus::TooFewPairs { found: 0 });
        assert!(matches!(
            run_subspace(&a, &b, &lex, "Nope", &opts),
            Err(Error::UnknownCategory(_))
        ));
    }
}
