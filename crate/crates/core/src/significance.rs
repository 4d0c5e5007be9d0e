//! Null distributions from random pairings, and one-sided p-values.
//!
//! Every null sample draws from its own generator: ChaCha8 keyed by the run
//! seed, with the sample index as the stream number. Samples can therefore
//! run in any order or in parallel and still give identical scores.

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metrics::{self, MetricConfig};
use crate::model::{Metric, PairingMap};
use crate::pairing::{self, Standardized};

/// Name recorded in reports for the per-sample generator.
pub const RNG_NAME: &str = "chacha8(key=seed, stream=sample_index)";

pub const DEFAULT_FULL_SPACE_SAMPLES: usize = 100;
pub const DEFAULT_SUBSPACE_SAMPLES: usize = 1000;
/// Fewest surviving pairs any metric is scored on.
pub const MIN_PAIRS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullMode {
    ShufflePairing,
    RandomSubsets,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NullSpec {
    pub n_samples: usize,
    pub seed: u64,
    pub mode: NullMode,
}

impl NullSpec {
    pub fn shuffle(n_samples: usize, seed: u64) -> Self {
        NullSpec {
            n_samples,
            seed,
            mode: NullMode::ShufflePairing,
        }
    }

    pub fn random_subsets(n_samples: usize, seed: u64) -> Self {
        NullSpec {
            n_samples,
            seed,
            mode: NullMode::RandomSubsets,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::invariant("NullSpec", "n_samples >= 1"));
        }
        Ok(())
    }
}

/// Generator for one null sample.
pub fn sample_rng(seed: u64, sample: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sample as u64);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct NullResult {
    pub paired_score: f64,
    pub null_scores: Vec<f64>,
}

impl NullResult {
    pub fn null_mean(&self) -> f64 {
        self.null_scores.iter().sum::<f64>() / self.null_scores.len() as f64
    }

    pub fn p_value(&self) -> f64 {
        p_value(self.paired_score, &self.null_scores).expect("null is non-empty")
    }
}

/// Fraction of null scores at or above the paired score.
pub fn p_value(paired_score: f64, null_scores: &[f64]) -> Result<f64> {
    if null_scores.is_empty() {
        return Err(Error::InvalidArgument("empty null distribution".into()));
    }
    let hits = null_scores.iter().filter(|&&s| s >= paired_score).count();
    Ok(hits as f64 / null_scores.len() as f64)
}

fn run_samples(
    spec: &NullSpec,
    f: impl Fn(usize, &mut ChaCha8Rng) -> Result<f64> + Sync,
) -> Result<Vec<f64>> {
    spec.validate()?;
    (0..spec.n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(spec.seed, i);
            f(i, &mut rng).map_err(|e| Error::NullSample {
                sample: i,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Paired rows of both spaces, in pairing order.
pub fn paired_rows(space_a: &Matrix, space_b: &Matrix, pairing: &PairingMap) -> (Matrix, Matrix) {
    (
        space_a.select_rows(&pairing.src_indices()),
        space_b.select_rows(&pairing.tgt_indices()),
    )
}

/// Scores aligned rows `x`/`y` with `score`, then rescores with the
/// target rows shuffled (Fisher–Yates) once per null sample.
pub fn null_shuffle_with(
    x: &Matrix,
    y: &Matrix,
    spec: &NullSpec,
    score: impl Fn(&Matrix, &Matrix) -> Result<f64> + Sync,
) -> Result<NullResult> {
    if x.rows() < MIN_PAIRS {
        return Err(Error::TooFewPairs {
            found: x.rows(),
            required: MIN_PAIRS,
        });
    }
    let paired_score = score(x, y)?;
    let null_scores = run_samples(spec, |_, rng| {
        let mut order: Vec<usize> = (0..y.rows()).collect();
        order.shuffle(rng);
        score(x, &y.select_rows(&order))
    })?;
    Ok(NullResult {
        paired_score,
        null_scores,
    })
}

/// Shuffle-pairing null for a weight-row metric.
pub fn null_shuffle(
    metric: Metric,
    cfg: &MetricConfig,
    space_a: &Matrix,
    space_b: &Matrix,
    pairing: &PairingMap,
    spec: &NullSpec,
) -> Result<NullResult> {
    let (x, y) = paired_rows(space_a, space_b, pairing);
    null_shuffle_with(&x, &y, spec, |x, y| metrics::score(metric, x, y, cfg))
}

/// Shuffle-pairing null for the mean paired activation correlation: each
/// sample reassigns the paired targets to the sources at random.
pub fn null_mean_correlation(
    za: &Standardized,
    zb: &Standardized,
    pairing: &PairingMap,
    spec: &NullSpec,
) -> Result<NullResult> {
    let paired_score = pairing::mean_paired_correlation(pairing)?;
    let src = pairing.src_indices();
    let tgt = pairing.tgt_indices();
    let null_scores = run_samples(spec, |_, rng| {
        let mut t = tgt.clone();
        t.shuffle(rng);
        let sum: f64 = src
            .iter()
            .zip(&t)
            .map(|(&i, &j)| za.correlation(i, zb, j))
            .sum();
        Ok(sum / src.len() as f64)
    })?;
    Ok(NullResult {
        paired_score,
        null_scores,
    })
}

/// Inputs shared by every random-subset draw.
pub struct SubsetPool<'a> {
    pub space_a: &'a Matrix,
    pub space_b: &'a Matrix,
    pub acts_a: &'a Standardized,
    pub acts_b: &'a Standardized,
    /// Candidate features of each side (already filtered).
    pub pool_a: &'a [usize],
    pub pool_b: &'a [usize],
    pub block_size: usize,
    pub one_to_one: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetNull {
    pub null_scores: Vec<f64>,
    /// Draws discarded because fewer than three pairs survived.
    pub redraws: usize,
}

/// Draw cap per sample before giving up on a degenerate configuration.
const MAX_REDRAWS_PER_SAMPLE: usize = 1000;

/// Pairs two random feature subsets of the given sizes using a correlation
/// matrix between the subsets only, then scores the pairing.
pub fn null_random_subsets(
    metric: Metric,
    cfg: &MetricConfig,
    pool: &SubsetPool<'_>,
    sizes: (usize, usize),
    spec: &NullSpec,
) -> Result<SubsetNull> {
    spec.validate()?;
    let (na, nb) = sizes;
    if na == 0 || nb == 0 || na > pool.pool_a.len() || nb > pool.pool_b.len() {
        return Err(Error::InvalidArgument(format!(
            "subset sizes ({na}, {nb}) impossible for pools of {} and {}",
            pool.pool_a.len(),
            pool.pool_b.len()
        )));
    }
    let draw = |rng: &mut ChaCha8Rng| -> Result<(f64, usize)> {
        let mut redraws = 0;
        loop {
            let sub_a: Vec<usize> = index::sample(rng, pool.pool_a.len(), na)
                .into_iter()
                .map(|k| pool.pool_a[k])
                .collect();
            let sub_b: Vec<usize> = index::sample(rng, pool.pool_b.len(), nb)
                .into_iter()
                .map(|k| pool.pool_b[k])
                .collect();
            let pairing = pair_subsets(pool, &sub_a, &sub_b)?;
            if pairing.len() >= MIN_PAIRS {
                let score = if metric == Metric::MeanCorrelation {
                    pairing::mean_paired_correlation(&pairing)?
                } else {
                    let (x, y) = paired_rows(pool.space_a, pool.space_b, &pairing);
                    metrics::score(metric, &x, &y, cfg)?
                };
                return Ok((score, redraws));
            }
            redraws += 1;
            if redraws >= MAX_REDRAWS_PER_SAMPLE {
                return Err(Error::TooFewPairs {
                    found: pairing.len(),
                    required: MIN_PAIRS,
                });
            }
        }
    };
    let per_sample: Vec<(f64, usize)> = (0..spec.n_samples)
        .into_par_iter()
        .map(|i| {
            draw(&mut sample_rng(spec.seed, i)).map_err(|e| Error::NullSample {
                sample: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    Ok(SubsetNull {
        null_scores: per_sample.iter().map(|p| p.0).collect(),
        redraws: per_sample.iter().map(|p| p.1).sum(),
    })
}

fn pair_subsets(pool: &SubsetPool<'_>, sub_a: &[usize], sub_b: &[usize]) -> Result<PairingMap> {
    let pm =
        pairing::pair_feature_subsets(pool.acts_a, pool.acts_b, sub_a, sub_b, pool.block_size)?;
    Ok(if pool.one_to_one {
        pairing::filter_one_to_one(&pm)
    } else {
        pm
    })
}
