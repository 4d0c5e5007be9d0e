//! Rotation-invariant similarity of two index-aligned row sets.
//!
//! Row `i` of `x` and row `i` of `y` are the decoder directions of one
//! feature pair. Every score here is unchanged by an orthogonal transform
//! of either space's columns.

use nalgebra::{DMatrix, SymmetricEigen, SVD};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{DissimilarityMatrix, Metric};

/// Pearson product-moment correlation, two-pass.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn check_lengths(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument(
            "need at least 2 observations".into(),
        ));
    }
    Ok(())
}

/// 1-based ranks; tied values share the average of their ranks.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(x, y)?;
    let all_tied = |v: &[f64]| v.iter().all(|&a| a == v[0]);
    if all_tied(x) || all_tied(y) {
        return Err(Error::AllTied);
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvccaConfig {
    /// Fraction of total variance the kept singular directions must reach.
    pub variance_retained: f64,
    /// Ridge added to covariance eigenvalues before whitening, relative to
    /// the largest eigenvalue.
    pub epsilon: f64,
}

impl Default for SvccaConfig {
    fn default() -> Self {
        SvccaConfig {
            variance_retained: 0.99,
            epsilon: 1e-10,
        }
    }
}

impl SvccaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.variance_retained > 0.0 && self.variance_retained <= 1.0) {
            return Err(Error::invariant(
                "SvccaConfig",
                "0 < variance_retained <= 1",
            ));
        }
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return Err(Error::invariant("SvccaConfig", "epsilon >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RdmMetric {
    #[default]
    Euclidean,
    OneMinusPearson,
}

impl std::str::FromStr for RdmMetric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(RdmMetric::Euclidean),
            "one_minus_pearson" => Ok(RdmMetric::OneMinusPearson),
            other => Err(Error::InvalidArgument(format!(
                "unknown RDM metric {other:?}"
            ))),
        }
    }
}

impl RdmMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            RdmMetric::Euclidean => "euclidean",
            RdmMetric::OneMinusPearson => "one_minus_pearson",
        }
    }
}

/// RSA settings. The outer comparison is always Spearman.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RsaConfig {
    pub rdm_metric: RdmMetric,
}

pub const DEFAULT_KNN_K: usize = 10;

/// Settings for every weight-row metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub svcca: SvccaConfig,
    pub rsa: RsaConfig,
    pub knn_k: usize,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            svcca: SvccaConfig::default(),
            rsa: RsaConfig::default(),
            knn_k: DEFAULT_KNN_K,
        }
    }
}

fn check_pair(x: &Matrix, y: &Matrix, min_rows: usize) -> Result<()> {
    if x.rows() != y.rows() {
        return Err(Error::InvalidArgument(format!(
            "row sets not aligned: {} vs {} rows",
            x.rows(),
            y.rows()
        )));
    }
    if x.rows() < min_rows {
        return Err(Error::TooFewPairs {
            found: x.rows(),
            required: min_rows,
        });
    }
    Ok(())
}

fn centered(m: &Matrix) -> DMatrix<f64> {
    let mut d = m.to_dmatrix();
    let n = d.nrows() as f64;
    for mut col in d.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
    d
}

/// Leading singular directions of the column-centered data, scaled by their
/// singular values, enough to cover `variance_retained` of the variance.
fn reduce(m: &Matrix, variance_retained: f64) -> Result<DMatrix<f64>> {
    let c = centered(m);
    let (n, d) = c.shape();
    let svd = SVD::new(c, true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });
    let s: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let s_max = s.first().copied().unwrap_or(0.0);
    let tol = s_max * n.max(d) as f64 * f64::EPSILON;
    let rank = s.iter().take_while(|&&v| v > tol).count();
    if rank == 0 {
        return Err(Error::RankZero);
    }
    let total: f64 = s[..rank].iter().map(|v| v * v).sum();
    let mut acc = 0.0;
    let mut keep = rank;
    for (k, v) in s[..rank].iter().enumerate() {
        acc += v * v;
        if acc / total >= variance_retained - 1e-12 {
            keep = k + 1;
            break;
        }
    }
    let mut out = DMatrix::zeros(n, keep);
    for (k, &src) in order[..keep].iter().enumerate() {
        out.set_column(k, &(u.column(src) * s[k]));
    }
    Ok(out)
}

fn inv_sqrt_psd(cov: DMatrix<f64>, epsilon: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(cov);
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let ridge = epsilon * lmax.max(f64::MIN_POSITIVE);
    let inv: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| 1.0 / (l.max(0.0) + ridge).sqrt())
        .collect();
    let v = &eig.eigenvectors;
    let scaled = DMatrix::from_fn(v.nrows(), v.ncols(), |r, c| v[(r, c)] * inv[c]);
    scaled * v.transpose()
}

/// Canonical correlations between the columns of `a` and `b`, descending.
/// Whitened cross-covariance route: singular values of
/// `Σaa^{-1/2} Σab Σbb^{-1/2}`.
pub fn canonical_correlations(a: &DMatrix<f64>, b: &DMatrix<f64>, epsilon: f64) -> Vec<f64> {
    let center = |m: &DMatrix<f64>| {
        let mut m = m.clone();
        let n = m.nrows() as f64;
        for mut col in m.column_iter_mut() {
            let mean = col.sum() / n;
            col.add_scalar_mut(-mean);
        }
        m
    };
    let (a, b) = (center(a), center(b));
    let scale = 1.0 / (a.nrows() as f64 - 1.0).max(1.0);
    let saa = a.transpose() * &a * scale;
    let sbb = b.transpose() * &b * scale;
    let sab = a.transpose() * &b * scale;
    let m = inv_sqrt_psd(saa, epsilon) * sab * inv_sqrt_psd(sbb, epsilon);
    let mut rho: Vec<f64> = m
        .singular_values()
        .iter()
        .map(|&r| r.clamp(0.0, 1.0))
        .collect();
    rho.sort_by(|x, y| y.total_cmp(x));
    rho.truncate(a.ncols().min(b.ncols()));
    rho
}

/// SVCCA: center, keep the leading singular directions of each side, run
/// CCA between the reduced coordinates and average the canonical
/// correlations.
pub fn svcca(x: &Matrix, y: &Matrix, cfg: &SvccaConfig) -> Result<f64> {
    cfg.validate()?;
    check_pair(x, y, 2)?;
    let rx = reduce(x, cfg.variance_retained)?;
    let ry = reduce(y, cfg.variance_retained)?;
    let rho = canonical_correlations(&rx, &ry, cfg.epsilon);
    Ok(rho.iter().sum::<f64>() / rho.len() as f64)
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}

/// Pairwise dissimilarities between the rows of `x`.
pub fn rdm(x: &Matrix, metric: RdmMetric) -> Result<DissimilarityMatrix> {
    let n = x.rows();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .map(|j| match metric {
                    RdmMetric::Euclidean => Ok(euclidean(x.row(i), x.row(j))),
                    RdmMetric::OneMinusPearson => {
                        pearson(x.row(i), x.row(j)).map(|r| (1.0 - r).max(0.0))
                    }
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mut entries = vec![0.0; n * n];
    for (i, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let j = i + 1 + off;
            entries[i * n + j] = v;
            entries[j * n + i] = v;
        }
    }
    DissimilarityMatrix::new(n, entries)
}

/// RSA: Spearman correlation of the two RDMs' upper triangles.
pub fn rsa(x: &Matrix, y: &Matrix, cfg: &RsaConfig) -> Result<f64> {
    check_pair(x, y, 3)?;
    let dx = rdm(x, cfg.rdm_metric)?.upper_triangle();
    let dy = rdm(y, cfg.rdm_metric)?.upper_triangle();
    spearman(&dx, &dy).map_err(|e| match e {
        Error::AllTied => Error::DegenerateRdm,
        other => other,
    })
}

/// Indices of the `k` nearest other rows of every row, by Euclidean
/// distance, ties to the lower index.
pub fn knn_indices(x: &Matrix, k: usize) -> Vec<Vec<usize>> {
    let n = x.rows();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (euclidean(x.row(i), x.row(j)), j))
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

/// Mean Jaccard overlap of each row's k-nearest-neighbor index sets in the
/// two spaces.
pub fn knn_jaccard(x: &Matrix, y: &Matrix, k: usize) -> Result<f64> {
    check_pair(x, y, 2)?;
    let n = x.rows();
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!(
            "k must satisfy 1 <= k < n (k = {k}, n = {n})"
        )));
    }
    let nx = knn_indices(x, k);
    let ny = knn_indices(y, k);
    let mut total = 0.0;
    for (a, b) in nx.iter().zip(&ny) {
        let inter = a.iter().filter(|j| b.contains(j)).count();
        let union = 2 * k - inter;
        total += inter as f64 / union as f64;
    }
    Ok(total / n as f64)
}

/// Scores two aligned row sets with a weight-row metric.
pub fn score(metric: Metric, x: &Matrix, y: &Matrix, cfg: &MetricConfig) -> Result<f64> {
    match metric {
        Metric::Svcca => svcca(x, y, &cfg.svcca),
        Metric::Rsa => rsa(x, y, &cfg.rsa),
        Metric::KnnJaccard => knn_jaccard(x, y, cfg.knn_k),
        Metric::MeanCorrelation => Err(Error::InvalidArgument(
            "mean_correlation is computed from activations, not weight rows".into(),
        )),
    }
}
