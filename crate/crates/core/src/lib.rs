//! Compare sparse-autoencoder feature spaces across language models.
//!
//! Features of two SAEs are paired by the correlation of their activations
//! over a shared token stream, the paired decoder rows are scored with
//! rotation-invariant similarity metrics, and each score is tested against
//! a null distribution of random pairings.

pub mod error;
pub mod io;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod pairing;
pub mod pipeline;
pub mod semantic;
pub mod significance;
pub mod synthetic;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use model::{
    ActivationSet, ConceptLexicon, DissimilarityMatrix, FeaturePair, FeatureSpace, Metric,
    PairingMap, ScoreReport, StageCount, TokenTable, TopToken, TopTokenIndex,
};
