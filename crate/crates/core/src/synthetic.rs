//! Seeded synthetic space pairs with known ground truth.
//!
//! A fixture is a source space, a target space derived from it (rotated,
//! permuted, noised) or drawn independently, and token-aligned activations
//! in which paired features share latent firing events. Selected features
//! can be tagged so that their top tokens are stoplist strings or concept
//! keywords, which exercises the token filters and subspace selection.

use std::collections::HashSet;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{ActivationSet, FeatureSpace, TokenTable};
use crate::pairing::DEFAULT_STOPLIST;

pub const SYNTHETIC_MODEL_ID: &str = "synthetic";

/// Feature rows drawn i.i.d. standard normal.
pub fn gen_space(n_features: usize, dim: usize, seed: u64) -> Result<FeatureSpace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = Matrix::from_fn(n_features, dim, |_, _| rng.sample(StandardNormal));
    FeatureSpace::new(w, SYNTHETIC_MODEL_ID, 0)
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of R's diagonal folded into Q.
pub fn random_orthogonal(dim: usize, rng: &mut impl Rng) -> Matrix {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for c in 0..dim {
        if r[(c, c)] < 0.0 {
            q.column_mut(c).neg_mut();
        }
    }
    Matrix::from_dmatrix(&q)
}

/// Applies, in order: optional orthogonal column transform, optional row
/// permutation, Gaussian noise. Returns the new matrix and, for every
/// source row `i`, the row it moved to.
pub fn perturb_matrix(
    m: &Matrix,
    rotate: bool,
    permute: bool,
    noise_sigma: f64,
    seed: u64,
) -> (Matrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rotated = if rotate {
        m.matmul(&random_orthogonal(m.cols(), &mut rng))
    } else {
        m.clone()
    };
    let mut dest: Vec<usize> = (0..m.rows()).collect();
    if permute {
        dest.shuffle(&mut rng);
    }
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for (src, &d) in dest.iter().enumerate() {
        out.row_mut(d).copy_from_slice(rotated.row(src));
    }
    if noise_sigma > 0.0 {
        for r in 0..out.rows() {
            for v in out.row_mut(r) {
                *v += noise_sigma * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    (out, dest)
}

/// [`perturb_matrix`] on a feature space; the true pairing maps source
/// feature `i` to target feature `pairing[i]`.
pub fn perturb_space(
    space: &FeatureSpace,
    rotate: bool,
    permute: bool,
    noise_sigma: f64,
    seed: u64,
) -> Result<(FeatureSpace, Vec<usize>)> {
    if noise_sigma.is_nan() || noise_sigma < 0.0 {
        return Err(Error::InvalidArgument("noise_sigma must be >= 0".into()));
    }
    let (w, pairing) = perturb_matrix(space.weights(), rotate, permute, noise_sigma, seed);
    let fs = FeatureSpace::new(w, space.model_id(), space.layer())?;
    Ok((fs, pairing))
}

/// Features whose top tokens are forced to concept keywords.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConceptPlant {
    pub keywords: Vec<String>,
    pub sources: Vec<usize>,
    pub targets: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationOptions {
    pub n_tokens: usize,
    /// Ratio of shared-signal to private-noise standard deviation; the
    /// expected correlation of a true pair is `snr² / (snr² + 1)`.
    /// Infinity means noise-free.
    pub snr: f64,
    pub seed: u64,
    /// Per-token probability that a latent event fires.
    pub fire_prob: f64,
    pub vocab_size: usize,
    /// Fraction of paired source features tagged with stoplist tokens.
    pub stoplist_fraction: f64,
    pub concept: Option<ConceptPlant>,
    /// Token positions reserved per tagged feature.
    pub spikes_per_tag: usize,
}

impl Default for ActivationOptions {
    fn default() -> Self {
        ActivationOptions {
            n_tokens: 2000,
            snr: 3.0,
            seed: 0,
            fire_prob: 0.05,
            vocab_size: 500,
            stoplist_fraction: 0.0,
            concept: None,
            spikes_per_tag: 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ActivationFixture {
    pub acts_a: ActivationSet,
    pub acts_b: ActivationSet,
    pub tokens: TokenTable,
    /// Source features whose top tokens are stoplist strings.
    pub stoplist_sources: Vec<usize>,
}

struct TagGroup {
    tokens: Vec<String>,
    a_owner: Option<usize>,
    b_owner: Option<usize>,
}

/// Token-aligned activations for two spaces. Paired features share a
/// sparse latent signal; every other feature gets its own.
pub fn gen_paired_activations(
    space_a: &FeatureSpace,
    space_b: &FeatureSpace,
    true_pairing: &[(usize, usize)],
    opts: &ActivationOptions,
) -> Result<ActivationFixture> {
    let (n_a, n_b, n) = (space_a.n_features(), space_b.n_features(), opts.n_tokens);
    if n < 2 {
        return Err(Error::InvalidArgument("n_tokens must be >= 2".into()));
    }
    if opts.snr.is_nan() || opts.snr < 0.0 || !(0.0..=1.0).contains(&opts.stoplist_fraction) {
        return Err(Error::InvalidArgument(
            "snr >= 0 and stoplist_fraction in [0, 1]".into(),
        ));
    }
    let mut partner: Vec<Option<usize>> = vec![None; n_a];
    let mut targeted = vec![false; n_b];
    for &(s, t) in true_pairing {
        if s >= n_a || t >= n_b || partner[s].is_some() || targeted[t] {
            return Err(Error::InvalidArgument(format!(
                "invalid true pair ({s}, {t})"
            )));
        }
        partner[s] = Some(t);
        targeted[t] = true;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (w_sig, w_noise) = if opts.snr.is_infinite() {
        (1.0, 0.0)
    } else {
        (opts.snr, 1.0)
    };
    let p = opts.fire_prob.clamp(1e-6, 1.0);
    // Bernoulli(p) x Exp(1) has variance 2p - p²
    let latent_scale = 1.0 / (2.0 * p - p * p).sqrt();
    let latent = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n)
            .map(|_| {
                if rng.random::<f64>() < p {
                    rng.sample::<f64, _>(Exp1) * latent_scale
                } else {
                    0.0
                }
            })
            .collect()
    };
    let noisy = |rng: &mut ChaCha8Rng, s: &[f64]| -> Vec<f64> {
        s.iter()
            .map(|v| w_sig * v + w_noise * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };

    let mut cols_a: Vec<Vec<f64>> = Vec::with_capacity(n_a);
    let mut cols_b: Vec<Option<Vec<f64>>> = vec![None; n_b];
    for p in &partner {
        let sig = latent(&mut rng);
        cols_a.push(noisy(&mut rng, &sig));
        if let Some(t) = *p {
            cols_b[t] = Some(noisy(&mut rng, &sig));
        }
    }
    let mut cols_b: Vec<Vec<f64>> = cols_b
        .into_iter()
        .map(|c| {
            c.unwrap_or_else(|| {
                let sig = latent(&mut rng);
                noisy(&mut rng, &sig)
            })
        })
        .collect();

    let mut tokens: Vec<String> = (0..n)
        .map(|_| format!("t{:04}", rng.random_range(0..opts.vocab_size.max(1))))
        .collect();

    // tag groups: concept plants first, then stoplist tags
    let mut groups: Vec<TagGroup> = Vec::new();
    let mut concept_sources = HashSet::new();
    if let Some(plant) = &opts.concept {
        if plant.keywords.is_empty() {
            return Err(Error::InvalidArgument(
                "concept plant needs keywords".into(),
            ));
        }
        // one spelling per keyword, exercising whitespace trimming and case folding
        let spelled: Vec<String> = plant
            .keywords
            .iter()
            .enumerate()
            .map(|(i, k)| match i % 3 {
                0 => k.to_string(),
                1 => format!(" {k}"),
                _ => capitalize(k),
            })
            .collect();
        let mut kw = spelled.iter().cycle();
        let targets: HashSet<usize> = plant.targets.iter().copied().collect();
        let mut shared_targets = HashSet::new();
        for &s in &plant.sources {
            if s >= n_a {
                return Err(Error::InvalidArgument(format!(
                    "concept source {s} out of range"
                )));
            }
            concept_sources.insert(s);
            let b_owner = partner[s].filter(|t| targets.contains(t));
            if let Some(t) = b_owner {
                shared_targets.insert(t);
            }
            let toks = (0..opts.spikes_per_tag)
                .map(|_| kw.next().unwrap().clone())
                .collect();
            groups.push(TagGroup {
                tokens: toks,
                a_owner: Some(s),
                b_owner,
            });
        }
        for &t in &plant.targets {
            if t >= n_b {
                return Err(Error::InvalidArgument(format!(
                    "concept target {t} out of range"
                )));
            }
            if !shared_targets.contains(&t) {
                let toks = (0..opts.spikes_per_tag)
                    .map(|_| kw.next().unwrap().clone())
                    .collect();
                groups.push(TagGroup {
                    tokens: toks,
                    a_owner: None,
                    b_owner: Some(t),
                });
            }
        }
    }
    let mut eligible: Vec<usize> = (0..n_a)
        .filter(|s| partner[*s].is_some() && !concept_sources.contains(s))
        .collect();
    eligible.shuffle(&mut rng);
    let n_stop = (opts.stoplist_fraction * eligible.len() as f64).round() as usize;
    let mut stoplist_sources: Vec<usize> = eligible[..n_stop].to_vec();
    stoplist_sources.sort_unstable();
    for (g, &s) in stoplist_sources.iter().enumerate() {
        let toks = (0..opts.spikes_per_tag)
            .map(|r| {
                DEFAULT_STOPLIST[(g * opts.spikes_per_tag + r) % DEFAULT_STOPLIST.len()].to_string()
            })
            .collect();
        groups.push(TagGroup {
            tokens: toks,
            a_owner: Some(s),
            b_owner: partner[s],
        });
    }

    let needed = groups.len() * opts.spikes_per_tag;
    if needed > n / 2 {
        return Err(Error::InvalidArgument(format!(
            "{needed} tag positions do not fit in {n} tokens"
        )));
    }
    let mut positions: Vec<usize> = (0..n).collect();
    positions.shuffle(&mut rng);
    let tag_positions = &positions[..needed];

    let spike = |col: &[f64]| col.iter().cloned().fold(f64::MIN, f64::max).abs() * 1.5 + 1.0;
    let spikes_a: Vec<f64> = cols_a.iter().map(|c| spike(c)).collect();
    let spikes_b: Vec<f64> = cols_b.iter().map(|c| spike(c)).collect();
    for &t in tag_positions {
        cols_a.iter_mut().for_each(|c| c[t] = 0.0);
        cols_b.iter_mut().for_each(|c| c[t] = 0.0);
    }
    let mut pos_iter = tag_positions.iter();
    for g in &groups {
        for tok in &g.tokens {
            let &t = pos_iter.next().expect("positions reserved");
            tokens[t] = tok.clone();
            if let Some(a) = g.a_owner {
                cols_a[a][t] = spikes_a[a];
            }
            if let Some(b) = g.b_owner {
                cols_b[b][t] = spikes_b[b];
            }
        }
    }

    let to_set = |cols: &[Vec<f64>], name: &str| {
        ActivationSet::new(Matrix::from_fn(n, cols.len(), |r, c| cols[c][r]), name)
    };
    Ok(ActivationFixture {
        acts_a: to_set(&cols_a, "tokens")?,
        acts_b: to_set(&cols_b, "tokens")?,
        tokens: TokenTable::new(tokens),
        stoplist_sources,
    })
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantKind {
    /// Concept features on both sides are true partners.
    Shared,
    /// Concept features on the two sides are unrelated.
    Unrelated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub kind: PlantKind,
    pub keywords: Vec<String>,
    pub size: usize,
}

/// Everything needed to build a two-space fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureConfig {
    pub n_features: usize,
    pub dim: usize,
    /// Draw the target space independently instead of perturbing the
    /// source space.
    pub independent: bool,
    pub rotate: bool,
    pub permute: bool,
    pub noise_sigma: f64,
    pub activations: ActivationOptions,
    pub cluster: Option<ClusterSpec>,
    pub seed: u64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        FixtureConfig {
            n_features: 200,
            dim: 16,
            independent: false,
            rotate: true,
            permute: true,
            noise_sigma: 0.05,
            activations: ActivationOptions::default(),
            cluster: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub space_a: FeatureSpace,
    pub space_b: FeatureSpace,
    /// `(source, target)` ground-truth pairs, sorted by source.
    pub true_pairing: Vec<(usize, usize)>,
    pub acts_a: ActivationSet,
    pub acts_b: ActivationSet,
    pub tokens: TokenTable,
    pub stoplist_sources: Vec<usize>,
    pub concept_sources: Vec<usize>,
    pub concept_targets: Vec<usize>,
}

/// Builds a complete fixture. Sub-seeds are derived from `cfg.seed` so the
/// same config always yields the same bytes.
pub fn build_fixture(cfg: &FixtureConfig) -> Result<Fixture> {
    let space_a = gen_space(cfg.n_features, cfg.dim, cfg.seed)?;
    let (space_b, dest) = if cfg.independent {
        let b = gen_space(cfg.n_features, cfg.dim, cfg.seed.wrapping_add(1))?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
        let mut dest: Vec<usize> = (0..cfg.n_features).collect();
        if cfg.permute {
            dest.shuffle(&mut rng);
        }
        (b, dest)
    } else {
        perturb_space(
            &space_a,
            cfg.rotate,
            cfg.permute,
            cfg.noise_sigma,
            cfg.seed.wrapping_add(1),
        )?
    };
    let space_b = FeatureSpace::new(space_b.weights().clone(), SYNTHETIC_MODEL_ID, 1)?;
    let true_pairing: Vec<(usize, usize)> = dest.iter().copied().enumerate().collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(3));
    let mut act_opts = cfg.activations.clone();
    act_opts.seed = cfg.seed.wrapping_add(4);
    let (mut concept_sources, mut concept_targets) = (vec![], vec![]);
    if let Some(cluster) = &cfg.cluster {
        if 2 * cluster.size > cfg.n_features {
            return Err(Error::InvalidArgument(
                "cluster larger than half the space".into(),
            ));
        }
        let mut order: Vec<usize> = (0..cfg.n_features).collect();
        order.shuffle(&mut rng);
        concept_sources = order[..cluster.size].to_vec();
        concept_targets = match cluster.kind {
            PlantKind::Shared => concept_sources.iter().map(|&s| dest[s]).collect(),
            // partners of features outside the source cluster
            PlantKind::Unrelated => order[cluster.size..2 * cluster.size]
                .iter()
                .map(|&s| dest[s])
                .collect(),
        };
        concept_sources.sort_unstable();
        concept_targets.sort_unstable();
        act_opts.concept = Some(ConceptPlant {
            keywords: cluster.keywords.clone(),
            sources: concept_sources.clone(),
            targets: concept_targets.clone(),
        });
    }
    let acts = gen_paired_activations(&space_a, &space_b, &true_pairing, &act_opts)?;
    Ok(Fixture {
        space_a,
        space_b,
        true_pairing,
        acts_a: acts.acts_a,
        acts_b: acts.acts_b,
        tokens: acts.tokens,
        stoplist_sources: acts.stoplist_sources,
        concept_sources,
        concept_targets,
    })
}

/// Several layers per model over one shared activation fixture. Layer `l`
/// of model B is derived from layer `l` of model A, so only same-index
/// layer pairs are geometrically related; every layer pair shares the
/// activation pairing.
#[derive(Debug, Clone)]
pub struct LayeredFixture {
    pub base: Fixture,
    pub layers_a: Vec<FeatureSpace>,
    pub layers_b: Vec<FeatureSpace>,
}

pub fn build_layered_fixture(cfg: &FixtureConfig, n_layers: usize) -> Result<LayeredFixture> {
    if n_layers == 0 {
        return Err(Error::InvalidArgument("n_layers must be >= 1".into()));
    }
    let base = build_fixture(cfg)?;
    let mut layers_a = vec![FeatureSpace::new(
        base.space_a.weights().clone(),
        "synthetic-a",
        0,
    )?];
    let mut layers_b = vec![FeatureSpace::new(
        base.space_b.weights().clone(),
        "synthetic-b",
        0,
    )?];
    for l in 1..n_layers {
        let layer_seed = cfg.seed.wrapping_add(1000 * l as u64);
        let a = gen_space(cfg.n_features, cfg.dim, layer_seed)?;
        let b = if cfg.independent {
            gen_space(cfg.n_features, cfg.dim, layer_seed.wrapping_add(1))?
                .weights()
                .clone()
        } else {
            perturb_matrix(
                a.weights(),
                cfg.rotate,
                false,
                cfg.noise_sigma,
                layer_seed.wrapping_add(1),
            )
            .0
        };
        let mut placed = Matrix::zeros(b.rows(), b.cols());
        for &(src, tgt) in &base.true_pairing {
            placed.row_mut(tgt).copy_from_slice(b.row(src));
        }
        layers_a.push(FeatureSpace::new(
            a.weights().clone(),
            "synthetic-a",
            l as u32,
        )?);
        layers_b.push(FeatureSpace::new(placed, "synthetic-b", l as u32)?);
    }
    Ok(LayeredFixture {
        base,
        layers_a,
        layers_b,
    })
}
