//! Shared domain types and their validity rules.
//!
//! Every type validates on construction and on deserialization, so a value
//! that exists is a value that satisfies its rules. All types are immutable
//! once built.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Decoder weights of one SAE: one row per feature, one column per model
/// dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFeatureSpace")]
pub struct FeatureSpace {
    weights: Matrix,
    model_id: String,
    layer: u32,
}

#[derive(Deserialize)]
struct RawFeatureSpace {
    weights: Matrix,
    model_id: String,
    layer: u32,
}

impl TryFrom<RawFeatureSpace> for FeatureSpace {
    type Error = Error;
    fn try_from(r: RawFeatureSpace) -> Result<Self> {
        FeatureSpace::new(r.weights, r.model_id, r.layer)
    }
}

impl FeatureSpace {
    pub fn new(weights: Matrix, model_id: impl Into<String>, layer: u32) -> Result<Self> {
        if weights.rows() == 0 || weights.cols() == 0 {
            return Err(Error::invariant(
                "FeatureSpace",
                "n_features >= 1 and dim >= 1",
            ));
        }
        if let Some((r, c)) = weights.first_non_finite() {
            return Err(Error::invariant(
                "FeatureSpace",
                format!("every entry finite (row {r}, column {c})"),
            ));
        }
        Ok(FeatureSpace {
            weights,
            model_id: model_id.into(),
            layer,
        })
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn n_features(&self) -> usize {
        self.weights.rows()
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn layer(&self) -> u32 {
        self.layer
    }

    /// Space identifier used in pairing provenance, e.g. `pythia-70m/L3`.
    pub fn space_id(&self) -> String {
        format!("{}/L{}", self.model_id, self.layer)
    }
}

/// Feature activations over a token stream: token rows, feature columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawActivationSet")]
pub struct ActivationSet {
    acts: Matrix,
    token_table_ref: String,
}

#[derive(Deserialize)]
struct RawActivationSet {
    acts: Matrix,
    token_table_ref: String,
}

impl TryFrom<RawActivationSet> for ActivationSet {
    type Error = Error;
    fn try_from(r: RawActivationSet) -> Result<Self> {
        ActivationSet::new(r.acts, r.token_table_ref)
    }
}

impl ActivationSet {
    pub fn new(acts: Matrix, token_table_ref: impl Into<String>) -> Result<Self> {
        if acts.rows() < 2 {
            return Err(Error::invariant(
                "ActivationSet",
                format!("n_tokens >= 2 (got {})", acts.rows()),
            ));
        }
        if acts.cols() == 0 {
            return Err(Error::invariant("ActivationSet", "n_features >= 1"));
        }
        if let Some((r, c)) = acts.first_non_finite() {
            return Err(Error::invariant(
                "ActivationSet",
                format!("every entry finite (token {r}, feature {c})"),
            ));
        }
        Ok(ActivationSet {
            acts,
            token_table_ref: token_table_ref.into(),
        })
    }

    pub fn acts(&self) -> &Matrix {
        &self.acts
    }

    pub fn n_tokens(&self) -> usize {
        self.acts.rows()
    }

    pub fn n_features(&self) -> usize {
        self.acts.cols()
    }

    pub fn token_table_ref(&self) -> &str {
        &self.token_table_ref
    }

    /// Activation column restricted to the given features, in order.
    pub fn select_features(&self, idx: &[usize]) -> ActivationSet {
        ActivationSet {
            acts: self.acts.select_cols(idx),
            token_table_ref: self.token_table_ref.clone(),
        }
    }
}

/// Token strings of the shared dataset, in stream order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenTable {
    tokens: Vec<String>,
}

impl TokenTable {
    pub fn new(tokens: Vec<String>) -> Self {
        TokenTable { tokens }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, i: usize) -> &str {
        &self.tokens[i]
    }

    /// Checks that this table has one token per activation row.
    pub fn check_aligned(&self, acts: &ActivationSet) -> Result<()> {
        if self.len() != acts.n_tokens() {
            return Err(Error::invariant(
                "TokenTable",
                format!(
                    "length {} matches activation rows {}",
                    self.len(),
                    acts.n_tokens()
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeaturePair {
    pub src: usize,
    pub tgt: usize,
    pub correlation: f64,
}

/// Names of the pairing filters as recorded in `filters_applied`.
pub mod filter_names {
    pub const NONCONCEPT: &str = "nonconcept";
    pub const SHARED_TOKEN: &str = "shared_token";
    pub const ONE_TO_ONE: &str = "one_to_one";
}

/// Source-feature to target-feature pairing with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPairingMap")]
pub struct PairingMap {
    pairs: Vec<FeaturePair>,
    src_space_id: String,
    tgt_space_id: String,
    filters_applied: Vec<String>,
}

#[derive(Deserialize)]
struct RawPairingMap {
    pairs: Vec<FeaturePair>,
    src_space_id: String,
    tgt_space_id: String,
    filters_applied: Vec<String>,
}

impl TryFrom<RawPairingMap> for PairingMap {
    type Error = Error;
    fn try_from(r: RawPairingMap) -> Result<Self> {
        PairingMap::new(r.pairs, r.src_space_id, r.tgt_space_id, r.filters_applied)
    }
}

impl PairingMap {
    pub fn new(
        pairs: Vec<FeaturePair>,
        src_space_id: impl Into<String>,
        tgt_space_id: impl Into<String>,
        filters_applied: Vec<String>,
    ) -> Result<Self> {
        let mut seen = HashSet::with_capacity(pairs.len());
        for p in &pairs {
            if !seen.insert(p.src) {
                return Err(Error::invariant(
                    "PairingMap",
                    format!("src_index unique (feature {} repeated)", p.src),
                ));
            }
            if !p.correlation.is_finite() {
                return Err(Error::invariant(
                    "PairingMap",
                    format!("correlation finite (src {})", p.src),
                ));
            }
        }
        if filters_applied
            .iter()
            .any(|f| f == filter_names::ONE_TO_ONE)
        {
            let mut tgts = HashSet::with_capacity(pairs.len());
            for p in &pairs {
                if !tgts.insert(p.tgt) {
                    return Err(Error::invariant(
                        "PairingMap",
                        format!(
                            "tgt_index unique after one-to-one filter (feature {} repeated)",
                            p.tgt
                        ),
                    ));
                }
            }
        }
        Ok(PairingMap {
            pairs,
            src_space_id: src_space_id.into(),
            tgt_space_id: tgt_space_id.into(),
            filters_applied,
        })
    }

    pub fn pairs(&self) -> &[FeaturePair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn src_space_id(&self) -> &str {
        &self.src_space_id
    }

    pub fn tgt_space_id(&self) -> &str {
        &self.tgt_space_id
    }

    pub fn filters_applied(&self) -> &[String] {
        &self.filters_applied
    }

    pub fn src_indices(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.src).collect()
    }

    pub fn tgt_indices(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.tgt).collect()
    }

    /// Keeps the pairs matching `keep` and records `filter` in the
    /// provenance list (once).
    pub(crate) fn retain_with(
        &self,
        filter: &str,
        mut keep: impl FnMut(&FeaturePair) -> bool,
    ) -> Result<PairingMap> {
        let pairs = self.pairs.iter().copied().filter(|p| keep(p)).collect();
        let mut filters = self.filters_applied.clone();
        if !filters.iter().any(|f| f == filter) {
            filters.push(filter.to_string());
        }
        PairingMap::new(
            pairs,
            self.src_space_id.clone(),
            self.tgt_space_id.clone(),
            filters,
        )
    }
}

/// Concept categories and their lowercase keywords.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawConceptLexicon")]
pub struct ConceptLexicon {
    categories: BTreeMap<String, Vec<String>>,
}

#[derive(Deserialize)]
struct RawConceptLexicon {
    categories: BTreeMap<String, Vec<String>>,
}

impl TryFrom<RawConceptLexicon> for ConceptLexicon {
    type Error = Error;
    fn try_from(r: RawConceptLexicon) -> Result<Self> {
        ConceptLexicon::new(r.categories)
    }
}

impl ConceptLexicon {
    /// Rejects categories whose keywords collide after lowercasing.
    /// Keywords are stored lowercased.
    pub fn new(categories: BTreeMap<String, Vec<String>>) -> Result<Self> {
        let mut out = BTreeMap::new();
        for (name, words) in categories {
            let mut seen = HashSet::new();
            let mut kept = Vec::with_capacity(words.len());
            for w in words {
                let lw = w.to_lowercase();
                if !seen.insert(lw.clone()) {
                    return Err(Error::invariant(
                        "ConceptLexicon",
                        format!("keywords unique after lowercasing ({name:?}: {lw:?})"),
                    ));
                }
                kept.push(lw);
            }
            out.insert(name, kept);
        }
        Ok(ConceptLexicon { categories: out })
    }

    pub fn categories(&self) -> &BTreeMap<String, Vec<String>> {
        &self.categories
    }

    pub fn category(&self, name: &str) -> Result<&[String]> {
        self.categories
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownCategory(name.to_string()))
    }

    pub fn category_names(&self) -> impl Iterator<Item = &str> {
        self.categories.keys().map(String::as_str)
    }

    /// All keywords across categories.
    pub fn all_keywords(&self) -> BTreeSet<&str> {
        self.categories
            .values()
            .flatten()
            .map(String::as_str)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopToken {
    pub token: String,
    pub activation: f64,
}

/// Highest-activating tokens of every feature, descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTopTokenIndex")]
pub struct TopTokenIndex {
    k: usize,
    features: Vec<Vec<TopToken>>,
}

#[derive(Deserialize)]
struct RawTopTokenIndex {
    k: usize,
    features: Vec<Vec<TopToken>>,
}

impl TryFrom<RawTopTokenIndex> for TopTokenIndex {
    type Error = Error;
    fn try_from(r: RawTopTokenIndex) -> Result<Self> {
        TopTokenIndex::new(r.k, r.features)
    }
}

pub const DEFAULT_TOP_K: usize = 5;

impl TopTokenIndex {
    /// Each list holds `k` entries, or fewer when the token stream is
    /// shorter than `k`; entries are sorted descending by activation.
    pub fn new(k: usize, features: Vec<Vec<TopToken>>) -> Result<Self> {
        if k == 0 {
            return Err(Error::invariant("TopTokenIndex", "k >= 1"));
        }
        let expected = features.first().map_or(0, Vec::len);
        for (f, list) in features.iter().enumerate() {
            if list.len() > k || list.len() != expected {
                return Err(Error::invariant(
                    "TopTokenIndex",
                    format!(
                        "feature {f} has {} entries, expected {}",
                        list.len(),
                        expected.min(k)
                    ),
                ));
            }
            if list.windows(2).any(|w| w[0].activation < w[1].activation) {
                return Err(Error::invariant(
                    "TopTokenIndex",
                    format!("entries of feature {f} sorted descending"),
                ));
            }
        }
        Ok(TopTokenIndex { k, features })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn get(&self, feature: usize) -> Option<&[TopToken]> {
        self.features.get(feature).map(Vec::as_slice)
    }

    pub fn tokens(&self, feature: usize) -> Option<impl Iterator<Item = &str>> {
        self.get(feature)
            .map(|l| l.iter().map(|t| t.token.as_str()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Svcca,
    Rsa,
    KnnJaccard,
    MeanCorrelation,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::Svcca,
        Metric::Rsa,
        Metric::KnnJaccard,
        Metric::MeanCorrelation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Svcca => "svcca",
            Metric::Rsa => "rsa",
            Metric::KnnJaccard => "knn_jaccard",
            Metric::MeanCorrelation => "mean_correlation",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown metric {s:?}")))
    }
}

/// Number of pairs left after one pipeline stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCount {
    pub stage: String,
    pub n_pairs: usize,
}

/// Outcome of scoring one pairing against its null distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScoreReport")]
pub struct ScoreReport {
    pub metric: Metric,
    pub paired_score: f64,
    pub null_mean: f64,
    pub null_samples: usize,
    pub p_value: f64,
    pub n_pairs: usize,
    pub filters_applied: Vec<String>,
    pub seed: u64,
    /// Pair counts after each stage, starting with the unfiltered pairing.
    pub stage_counts: Vec<StageCount>,
    /// Run parameters (metric config, generator name, tool version, ...).
    pub params: BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct RawScoreReport {
    metric: Metric,
    paired_score: f64,
    null_mean: f64,
    null_samples: usize,
    p_value: f64,
    n_pairs: usize,
    filters_applied: Vec<String>,
    seed: u64,
    #[serde(default)]
    stage_counts: Vec<StageCount>,
    #[serde(default)]
    params: BTreeMap<String, String>,
}

impl TryFrom<RawScoreReport> for ScoreReport {
    type Error = Error;
    fn try_from(r: RawScoreReport) -> Result<Self> {
        let report = ScoreReport {
            metric: r.metric,
            paired_score: r.paired_score,
            null_mean: r.null_mean,
            null_samples: r.null_samples,
            p_value: r.p_value,
            n_pairs: r.n_pairs,
            filters_applied: r.filters_applied,
            seed: r.seed,
            stage_counts: r.stage_counts,
            params: r.params,
        };
        report.validate()?;
        Ok(report)
    }
}

impl ScoreReport {
    pub fn validate(&self) -> Result<()> {
        if self.null_samples == 0 {
            return Err(Error::invariant("ScoreReport", "null_samples >= 1"));
        }
        if !(0.0..=1.0).contains(&self.p_value) {
            return Err(Error::invariant("ScoreReport", "p_value in [0, 1]"));
        }
        let count = self.p_value * self.null_samples as f64;
        if (count - count.round()).abs() > 1e-6 * self.null_samples as f64 {
            return Err(Error::invariant(
                "ScoreReport",
                "p_value = count / null_samples",
            ));
        }
        if !self.paired_score.is_finite() || !self.null_mean.is_finite() {
            return Err(Error::invariant("ScoreReport", "scores finite"));
        }
        if let Some(last) = self.stage_counts.last() {
            if last.n_pairs != self.n_pairs {
                return Err(Error::invariant(
                    "ScoreReport",
                    format!(
                        "n_pairs {} equals final stage count {}",
                        self.n_pairs, last.n_pairs
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// Symmetric pairwise dissimilarities with a zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDissimilarityMatrix")]
pub struct DissimilarityMatrix {
    n: usize,
    entries: Vec<f64>,
}

#[derive(Deserialize)]
struct RawDissimilarityMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl TryFrom<RawDissimilarityMatrix> for DissimilarityMatrix {
    type Error = Error;
    fn try_from(r: RawDissimilarityMatrix) -> Result<Self> {
        DissimilarityMatrix::new(r.n, r.entries)
    }
}

impl DissimilarityMatrix {
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::invariant(
                "DissimilarityMatrix",
                format!("n*n = {} entries (got {})", n * n, entries.len()),
            ));
        }
        for i in 0..n {
            if entries[i * n + i] != 0.0 {
                return Err(Error::invariant(
                    "DissimilarityMatrix",
                    format!("diagonal exactly 0 (index {i})"),
                ));
            }
            for j in 0..i {
                let (a, b) = (entries[i * n + j], entries[j * n + i]);
                if !(a >= 0.0 && b >= 0.0) {
                    return Err(Error::invariant(
                        "DissimilarityMatrix",
                        format!("entries >= 0 ({i}, {j})"),
                    ));
                }
                if (a - b).abs() > 1e-12 {
                    return Err(Error::invariant(
                        "DissimilarityMatrix",
                        format!("symmetric within 1e-12 ({i}, {j})"),
                    ));
                }
            }
        }
        Ok(DissimilarityMatrix { n, entries })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// Strict upper triangle in row-major order.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            out.extend_from_slice(&self.entries[i * n + i + 1..(i + 1) * n]);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn feature_space_rejects_nan_and_empty() {
        let err = FeatureSpace::new(m(&[&[1.0, f64::NAN]]), "a", 0).unwrap_err();
        assert!(err.to_string().contains("finite"), "{err}");
        assert!(FeatureSpace::new(Matrix::zeros(0, 3), "a", 0).is_err());
    }

    #[test]
    fn activation_set_needs_two_tokens() {
        let err = ActivationSet::new(m(&[&[1.0, 2.0]]), "t").unwrap_err();
        assert!(err.to_string().contains("n_tokens >= 2"), "{err}");
    }

    #[test]
    fn pairing_rejects_repeated_source() {
        let p = |src, tgt| FeaturePair {
            src,
            tgt,
            correlation: 0.5,
        };
        let err = PairingMap::new(vec![p(0, 1), p(0, 2)], "a", "b", vec![]).unwrap_err();
        assert!(err.to_string().contains("src_index unique"));
        // repeated targets are fine until the one-to-one filter ran
        assert!(PairingMap::new(vec![p(0, 1), p(1, 1)], "a", "b", vec![]).is_ok());
        assert!(PairingMap::new(
            vec![p(0, 1), p(1, 1)],
            "a",
            "b",
            vec![filter_names::ONE_TO_ONE.into()]
        )
        .is_err());
    }

    #[test]
    fn lexicon_keywords_lowercased_and_unique() {
        let mut cats = BTreeMap::new();
        cats.insert("MonthNames".to_string(), vec!["May".into(), "June".into()]);
        let lex = ConceptLexicon::new(cats.clone()).unwrap();
        assert_eq!(lex.category("MonthNames").unwrap(), ["may", "june"]);
        cats.insert("X".to_string(), vec!["joy".into(), "Joy".into()]);
        assert!(ConceptLexicon::new(cats).is_err());
    }

    #[test]
    fn top_tokens_must_be_sorted() {
        let t = |a| TopToken {
            token: "x".into(),
            activation: a,
        };
        assert!(TopTokenIndex::new(2, vec![vec![t(2.0), t(1.0)]]).is_ok());
        assert!(TopTokenIndex::new(2, vec![vec![t(1.0), t(2.0)]]).is_err());
        assert!(TopTokenIndex::new(1, vec![vec![t(2.0), t(1.0)]]).is_err());
    }

    #[test]
    fn rdm_rules() {
        assert!(DissimilarityMatrix::new(2, vec![0.0, 1.0, 1.0, 0.0]).is_ok());
        assert!(DissimilarityMatrix::new(2, vec![0.0, 1.0, 2.0, 0.0]).is_err());
        assert!(DissimilarityMatrix::new(2, vec![0.1, 1.0, 1.0, 0.0]).is_err());
        assert!(DissimilarityMatrix::new(2, vec![0.0, -1.0, -1.0, 0.0]).is_err());
        let d = DissimilarityMatrix::new(3, vec![0., 1., 2., 1., 0., 3., 2., 3., 0.]).unwrap();
        assert_eq!(d.upper_triangle(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn report_p_value_rules() {
        let mut r = ScoreReport {
            metric: Metric::Svcca,
            paired_score: 0.9,
            null_mean: 0.1,
            null_samples: 100,
            p_value: 0.03,
            n_pairs: 10,
            filters_applied: vec![],
            seed: 1,
            stage_counts: vec![],
            params: BTreeMap::new(),
        };
        assert!(r.validate().is_ok());
        r.p_value = 0.035;
        assert!(r.validate().is_err());
        r.p_value = 1.5;
        assert!(r.validate().is_err());
    }

    #[test]
    fn serde_round_trip_preserves_fields() {
        let fs = FeatureSpace::new(m(&[&[1.0, 2.0], &[3.0, 4.5]]), "pythia-70m", 3).unwrap();
        let back: FeatureSpace =
            serde_json::from_str(&serde_json::to_string(&fs).unwrap()).unwrap();
        assert_eq!(fs, back);

        let pm = PairingMap::new(
            vec![FeaturePair {
                src: 3,
                tgt: 9,
                correlation: -0.25,
            }],
            "a/L1",
            "b/L2",
            vec![filter_names::NONCONCEPT.into()],
        )
        .unwrap();
        let back: PairingMap = serde_json::from_str(&serde_json::to_string(&pm).unwrap()).unwrap();
        assert_eq!(pm, back);

        // invalid JSON payloads are rejected by the same rules
        let bad = r#"{"weights":{"rows":1,"cols":1,"data":[1.0]},"model_id":"a","layer":0}"#;
        assert!(serde_json::from_str::<FeatureSpace>(bad).is_ok());
        let bad = r#"{"n":2,"entries":[0.0,1.0,2.0,0.0]}"#;
        assert!(serde_json::from_str::<DissimilarityMatrix>(bad).is_err());
    }
}
