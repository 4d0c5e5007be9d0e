//! Top-activating tokens, concept-category subspaces, and subspace
//! pairings.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    ActivationSet, ConceptLexicon, PairingMap, StageCount, TokenTable, TopToken, TopTokenIndex,
};
use crate::pairing::{self, FilterConfig, Standardized};
use crate::significance::MIN_PAIRS;

/// The `k` highest activations of every feature across all token
/// positions, descending, ties to the lower position.
pub fn top_activating_tokens(
    acts: &ActivationSet,
    tokens: &TokenTable,
    k: usize,
) -> Result<TopTokenIndex> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    tokens.check_aligned(acts)?;
    let a = acts.acts();
    let per_feature: Vec<Vec<TopToken>> = (0..acts.n_features())
        .into_par_iter()
        .map(|f| {
            // (activation, position), best first
            let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
            for t in 0..acts.n_tokens() {
                let v = a.get(t, f);
                if best.len() == k && v <= best[k - 1].0 {
                    continue;
                }
                let pos = best.iter().position(|&(b, _)| v > b).unwrap_or(best.len());
                best.insert(pos, (v, t));
                best.truncate(k);
            }
            best.into_iter()
                .map(|(activation, t)| TopToken {
                    token: tokens.get(t).to_string(),
                    activation,
                })
                .collect()
        })
        .collect();
    TopTokenIndex::new(k, per_feature)
}

/// Token normalization used for keyword matching.
pub fn normalize_token(token: &str) -> String {
    token.trim().to_lowercase()
}

/// Features with at least one top token equal to a category keyword after
/// normalization. Whole-token matches only.
pub fn select_concept_features(
    top: &TopTokenIndex,
    lexicon: &ConceptLexicon,
    category: &str,
) -> Result<Vec<usize>> {
    let keywords: HashSet<&str> = lexicon
        .category(category)?
        .iter()
        .map(String::as_str)
        .collect();
    Ok((0..top.n_features())
        .filter(|&f| {
            top.tokens(f)
                .into_iter()
                .flatten()
                .any(|t| keywords.contains(normalize_token(t).as_str()))
        })
        .collect())
}

/// Features whose top tokens contain no stoplist token.
pub fn concept_pool(top: &TopTokenIndex, stoplist: &pairing::StoplistConfig) -> Vec<usize> {
    (0..top.n_features())
        .filter(|&f| {
            !top.tokens(f)
                .into_iter()
                .flatten()
                .any(|t| stoplist.contains(t))
        })
        .collect()
}

/// Argmax-correlation pairing computed only between the two subsets, then
/// filtered. Indices in the result are global feature indices.
#[allow(clippy::too_many_arguments)]
pub fn match_subspaces(
    subset_a: &[usize],
    subset_b: &[usize],
    acts_a: &Standardized,
    acts_b: &Standardized,
    top_a: Option<&TopTokenIndex>,
    top_b: Option<&TopTokenIndex>,
    filters: &FilterConfig,
    block_size: usize,
) -> Result<(PairingMap, Vec<StageCount>)> {
    if subset_a.is_empty() || subset_b.is_empty() {
        return Err(Error::TooFewPairs {
            found: 0,
            required: MIN_PAIRS,
        });
    }
    let raw = pairing::pair_feature_subsets(acts_a, acts_b, subset_a, subset_b, block_size)?;
    let (filtered, stages) = pairing::apply_filters(&raw, top_a, top_b, filters)?;
    if filtered.len() < MIN_PAIRS {
        return Err(Error::TooFewPairs {
            found: filtered.len(),
            required: MIN_PAIRS,
        });
    }
    Ok((filtered, stages))
}

/// Per-keyword feature counts for both sides of a pairing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordAudit {
    pub source: BTreeMap<String, usize>,
    pub target: BTreeMap<String, usize>,
}

impl KeywordAudit {
    /// Keywords with a nonzero count on `side`, most frequent first.
    pub fn ranked(side: &BTreeMap<String, usize>) -> Vec<(&str, usize)> {
        let mut v: Vec<(&str, usize)> = side
            .iter()
            .filter(|(_, &c)| c > 0)
            .map(|(k, &c)| (k.as_str(), c))
            .collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        v
    }
}

fn count_keywords(
    features: impl Iterator<Item = usize>,
    top: &TopTokenIndex,
    keywords: &[String],
    side: &'static str,
) -> Result<BTreeMap<String, usize>> {
    let mut counts: BTreeMap<String, usize> = keywords.iter().map(|k| (k.clone(), 0)).collect();
    let wanted: HashSet<&str> = keywords.iter().map(String::as_str).collect();
    for f in features {
        let hits: BTreeSet<String> = top
            .tokens(f)
            .ok_or(Error::MissingTopTokens { side, feature: f })?
            .map(normalize_token)
            .filter(|t| wanted.contains(t.as_str()))
            .collect();
        for kw in hits {
            *counts.get_mut(&kw).expect("keyword present") += 1;
        }
    }
    Ok(counts)
}

/// How many paired features on each side have each category keyword in
/// their top tokens. A feature counts at most once per keyword.
pub fn keyword_audit(
    pairing: &PairingMap,
    top_a: &TopTokenIndex,
    top_b: &TopTokenIndex,
    lexicon: &ConceptLexicon,
    category: &str,
) -> Result<KeywordAudit> {
    let keywords = lexicon.category(category)?;
    let src: BTreeSet<usize> = pairing.src_indices().into_iter().collect();
    let tgt: BTreeSet<usize> = pairing.tgt_indices().into_iter().collect();
    Ok(KeywordAudit {
        source: count_keywords(src.into_iter(), top_a, keywords, "source")?,
        target: count_keywords(tgt.into_iter(), top_b, keywords, "target")?,
    })
}
