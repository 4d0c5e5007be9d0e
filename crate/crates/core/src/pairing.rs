//! Cross-model feature pairing by activation correlation, and the filters
//! applied to the resulting pairing.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{
    filter_names, ActivationSet, FeaturePair, PairingMap, StageCount, TopTokenIndex,
};

/// Tokens marking a feature as non-concept: escaped and raw newline, empty
/// string, space, common punctuation, and BOS/EOS markers.
pub const DEFAULT_STOPLIST: [&str; 11] = [
    "\\n",
    "\n",
    "",
    " ",
    ".",
    ",",
    "!",
    "?",
    "-",
    "<bos>",
    "<|endoftext|>",
];

pub const DEFAULT_BLOCK_SIZE: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoplistConfig {
    pub keywords: Vec<String>,
}

impl Default for StoplistConfig {
    fn default() -> Self {
        StoplistConfig {
            keywords: DEFAULT_STOPLIST.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl StoplistConfig {
    pub fn empty() -> Self {
        StoplistConfig { keywords: vec![] }
    }

    /// Exact match against the raw token.
    pub fn contains(&self, token: &str) -> bool {
        self.keywords.iter().any(|k| k == token)
    }
}

/// Column-standardized activations.
///
/// Stored feature-major: row `f` of `columns` is the z-scored activation
/// trace of feature `f` over all tokens.
#[derive(Debug, Clone)]
pub struct Standardized {
    columns: Matrix,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub dead: Vec<bool>,
}

impl Standardized {
    pub fn n_tokens(&self) -> usize {
        self.columns.cols()
    }

    pub fn n_features(&self) -> usize {
        self.columns.rows()
    }

    /// z-scores of one feature over the token stream.
    pub fn feature(&self, f: usize) -> &[f64] {
        self.columns.row(f)
    }

    /// Tokens × features matrix of z-scores.
    pub fn matrix(&self) -> Matrix {
        self.columns.transpose()
    }

    pub fn live_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.dead
            .iter()
            .enumerate()
            .filter(|(_, d)| !**d)
            .map(|(i, _)| i)
    }

    /// Restriction to the given features, renumbered `0..idx.len()`.
    pub fn select(&self, idx: &[usize]) -> Standardized {
        Standardized {
            columns: self.columns.select_rows(idx),
            mean: idx.iter().map(|&i| self.mean[i]).collect(),
            std: idx.iter().map(|&i| self.std[i]).collect(),
            dead: idx.iter().map(|&i| self.dead[i]).collect(),
        }
    }

    /// Pearson correlation between feature `i` here and feature `j` of
    /// `other`. Dead features correlate 0 with everything.
    pub fn correlation(&self, i: usize, other: &Standardized, j: usize) -> f64 {
        let n = self.n_tokens();
        (dot(self.feature(i), other.feature(j)) / (n - 1) as f64).clamp(-1.0, 1.0)
    }
}

/// Standardizes every feature column to mean 0 and sample standard
/// deviation 1 (denominator `n_tokens - 1`). Constant columns are flagged
/// dead and zeroed.
pub fn standardize_columns(acts: &ActivationSet) -> Standardized {
    let a = acts.acts();
    let (n, f) = a.shape();
    let mut columns = Matrix::zeros(f, n);
    let mut mean = vec![0.0; f];
    let mut std = vec![0.0; f];
    let mut dead = vec![false; f];
    for c in 0..f {
        let col = a.column(c);
        let m = col.iter().sum::<f64>() / n as f64;
        mean[c] = m;
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            dead[c] = true;
            continue;
        }
        let ss: f64 = col.iter().map(|v| (v - m) * (v - m)).sum();
        let s = (ss / (n - 1) as f64).sqrt();
        std[c] = s;
        for (dst, v) in columns.row_mut(c).iter_mut().zip(&col) {
            *dst = (v - m) / s;
        }
    }
    Standardized {
        columns,
        mean,
        std,
        dead,
    }
}

/// Fixed-order dot product with four independent accumulators.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Best targets of one source feature, descending by correlation with
/// ties broken toward the lower target index.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidates {
    pub src: usize,
    pub targets: Vec<(usize, f64)>,
}

fn insert_candidate(best: &mut Vec<(usize, f64)>, k: usize, j: usize, r: f64) {
    // targets are visited in ascending j, so an equal value never displaces
    // an earlier entry
    let pos = best.iter().position(|&(_, v)| r > v).unwrap_or(best.len());
    if pos < k {
        best.insert(pos, (j, r));
        best.truncate(k);
    }
}

/// Top-`k` correlated target features for every live source feature,
/// computed tile by tile without materializing the full correlation
/// matrix. Row blocks run in parallel; the result does not depend on the
/// schedule or the block size.
pub fn correlate_top_k(
    za: &Standardized,
    zb: &Standardized,
    block_size: usize,
    top_k: usize,
) -> Result<Vec<Candidates>> {
    if za.n_tokens() != zb.n_tokens() {
        return Err(Error::TokenCountMismatch {
            left: za.n_tokens(),
            right: zb.n_tokens(),
        });
    }
    if block_size == 0 {
        return Err(Error::InvalidArgument("block_size must be >= 1".into()));
    }
    if top_k == 0 {
        return Err(Error::InvalidArgument("top_k must be >= 1".into()));
    }
    let denom = (za.n_tokens() - 1) as f64;
    let n_a = za.n_features();
    let n_b = zb.n_features();
    let row_starts: Vec<usize> = (0..n_a).step_by(block_size).collect();

    let blocks: Vec<Vec<Candidates>> = row_starts
        .par_iter()
        .map(|&i0| {
            let i1 = (i0 + block_size).min(n_a);
            let mut best: Vec<Vec<(usize, f64)>> = vec![Vec::with_capacity(top_k + 1); i1 - i0];
            for j0 in (0..n_b).step_by(block_size) {
                let j1 = (j0 + block_size).min(n_b);
                for i in i0..i1 {
                    if za.dead[i] {
                        continue;
                    }
                    let zi = za.feature(i);
                    let slot = &mut best[i - i0];
                    for j in j0..j1 {
                        if zb.dead[j] {
                            continue;
                        }
                        let r = (dot(zi, zb.feature(j)) / denom).clamp(-1.0, 1.0);
                        insert_candidate(slot, top_k, j, r);
                    }
                }
            }
            (i0..i1)
                .zip(best)
                .filter(|(i, t)| !za.dead[*i] && !t.is_empty())
                .map(|(src, targets)| Candidates { src, targets })
                .collect()
        })
        .collect();
    Ok(blocks.into_iter().flatten().collect())
}

/// Pairs every live feature of `acts_a` with its most correlated live
/// feature of `acts_b`.
pub fn correlate_argmax(
    acts_a: &ActivationSet,
    acts_b: &ActivationSet,
    block_size: usize,
) -> Result<PairingMap> {
    if acts_a.n_tokens() != acts_b.n_tokens() {
        return Err(Error::TokenCountMismatch {
            left: acts_a.n_tokens(),
            right: acts_b.n_tokens(),
        });
    }
    let za = standardize_columns(acts_a);
    let zb = standardize_columns(acts_b);
    pair_standardized(&za, &zb, block_size, "a", "b")
}

/// Argmax pairing over already standardized activations.
pub fn pair_standardized(
    za: &Standardized,
    zb: &Standardized,
    block_size: usize,
    src_space_id: &str,
    tgt_space_id: &str,
) -> Result<PairingMap> {
    let cands = correlate_top_k(za, zb, block_size, 1)?;
    let pairs = cands
        .into_iter()
        .map(|c| FeaturePair {
            src: c.src,
            tgt: c.targets[0].0,
            correlation: c.targets[0].1,
        })
        .collect();
    PairingMap::new(pairs, src_space_id, tgt_space_id, vec![])
}

/// Argmax pairing restricted to two feature subsets: correlations are
/// computed only between subset members. Result indices are global.
pub fn pair_feature_subsets(
    za: &Standardized,
    zb: &Standardized,
    sub_a: &[usize],
    sub_b: &[usize],
    block_size: usize,
) -> Result<PairingMap> {
    let local = pair_standardized(&za.select(sub_a), &zb.select(sub_b), block_size, "a", "b")?;
    let pairs = local
        .pairs()
        .iter()
        .map(|p| FeaturePair {
            src: sub_a[p.src],
            tgt: sub_b[p.tgt],
            correlation: p.correlation,
        })
        .collect();
    PairingMap::new(pairs, "a", "b", vec![])
}

fn top_tokens<'a>(
    top: &'a TopTokenIndex,
    side: &'static str,
    feature: usize,
) -> Result<impl Iterator<Item = &'a str>> {
    top.tokens(feature)
        .ok_or(Error::MissingTopTokens { side, feature })
}

/// Drops every pair where either feature has a stoplist token among its
/// top tokens.
pub fn filter_nonconcept(
    pairing: &PairingMap,
    top_a: &TopTokenIndex,
    top_b: &TopTokenIndex,
    stoplist: &StoplistConfig,
) -> Result<PairingMap> {
    let mut keep = HashSet::new();
    for p in pairing.pairs() {
        let hit_a = top_tokens(top_a, "source", p.src)?.any(|t| stoplist.contains(t));
        let hit_b = top_tokens(top_b, "target", p.tgt)?.any(|t| stoplist.contains(t));
        if !hit_a && !hit_b {
            keep.insert(p.src);
        }
    }
    pairing.retain_with(filter_names::NONCONCEPT, |p| keep.contains(&p.src))
}

/// Keeps pairs whose two features share at least one top token.
pub fn filter_shared_token(
    pairing: &PairingMap,
    top_a: &TopTokenIndex,
    top_b: &TopTokenIndex,
) -> Result<PairingMap> {
    let mut keep = HashSet::new();
    for p in pairing.pairs() {
        let a: HashSet<&str> = top_tokens(top_a, "source", p.src)?.collect();
        if top_tokens(top_b, "target", p.tgt)?.any(|t| a.contains(t)) {
            keep.insert(p.src);
        }
    }
    pairing.retain_with(filter_names::SHARED_TOKEN, |p| keep.contains(&p.src))
}

/// Removes every pair whose target is shared by two or more sources; the
/// whole collision group goes.
pub fn filter_one_to_one(pairing: &PairingMap) -> PairingMap {
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for p in pairing.pairs() {
        *counts.entry(p.tgt).or_default() += 1;
    }
    pairing
        .retain_with(filter_names::ONE_TO_ONE, |p| counts[&p.tgt] == 1)
        .expect("removing pairs keeps a pairing valid")
}

pub fn mean_paired_correlation(pairing: &PairingMap) -> Result<f64> {
    if pairing.is_empty() {
        return Err(Error::TooFewPairs {
            found: 0,
            required: 1,
        });
    }
    let sum: f64 = pairing.pairs().iter().map(|p| p.correlation).sum();
    Ok(sum / pairing.len() as f64)
}

/// Which filters run, in the fixed order nonconcept, shared-token,
/// one-to-one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub nonconcept: bool,
    pub shared_token: bool,
    pub one_to_one: bool,
    pub stoplist: StoplistConfig,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            nonconcept: true,
            shared_token: true,
            one_to_one: true,
            stoplist: StoplistConfig::default(),
        }
    }
}

impl FilterConfig {
    pub fn none() -> Self {
        FilterConfig {
            nonconcept: false,
            shared_token: false,
            one_to_one: false,
            stoplist: StoplistConfig::default(),
        }
    }

    pub fn one_to_one_only() -> Self {
        FilterConfig {
            one_to_one: true,
            ..FilterConfig::none()
        }
    }

    pub fn needs_top_tokens(&self) -> bool {
        self.nonconcept || self.shared_token
    }

    /// Parses a comma-separated list such as `nonconcept,one_to_one`;
    /// `none` disables everything.
    pub fn parse_list(s: &str) -> Result<Self> {
        let mut cfg = FilterConfig::none();
        for name in s.split(',').map(str::trim).filter(|n| !n.is_empty()) {
            match name {
                filter_names::NONCONCEPT => cfg.nonconcept = true,
                filter_names::SHARED_TOKEN | "shared-token" => cfg.shared_token = true,
                filter_names::ONE_TO_ONE | "one-to-one" => cfg.one_to_one = true,
                "none" => {}
                other => return Err(Error::InvalidArgument(format!("unknown filter {other:?}"))),
            }
        }
        Ok(cfg)
    }
}

/// Runs the configured filters and records the pair count after each
/// stage, starting with the unfiltered count.
pub fn apply_filters(
    pairing: &PairingMap,
    top_a: Option<&TopTokenIndex>,
    top_b: Option<&TopTokenIndex>,
    cfg: &FilterConfig,
) -> Result<(PairingMap, Vec<StageCount>)> {
    let mut stages = vec![StageCount {
        stage: "unfiltered".into(),
        n_pairs: pairing.len(),
    }];
    let mut current = pairing.clone();
    fn need(t: Option<&TopTokenIndex>) -> Result<&TopTokenIndex> {
        t.ok_or_else(|| Error::InvalidArgument("token filters need top-token indices".into()))
    }
    if cfg.nonconcept {
        current = filter_nonconcept(&current, need(top_a)?, need(top_b)?, &cfg.stoplist)?;
        stages.push(StageCount {
            stage: filter_names::NONCONCEPT.into(),
            n_pairs: current.len(),
        });
    }
    if cfg.shared_token {
        current = filter_shared_token(&current, need(top_a)?, need(top_b)?)?;
        stages.push(StageCount {
            stage: filter_names::SHARED_TOKEN.into(),
            n_pairs: current.len(),
        });
    }
    if cfg.one_to_one {
        current = filter_one_to_one(&current);
        stages.push(StageCount {
            stage: filter_names::ONE_TO_ONE.into(),
            n_pairs: current.len(),
        });
    }
    Ok((current, stages))
}
