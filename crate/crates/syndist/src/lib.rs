//! Quantifying syntactic distances between languages from part-of-speech
//! n-gram statistics of Universal Dependencies treebanks.
//!
//! The pipeline goes: CoNLL-U ingestion into 15-symbol POS tag sequences
//! ([`ingest`]), sparse block counting and probability estimation ([`ngram`]),
//! block entropy estimation with a plug-in and an NSB Bayesian estimator
//! ([`entropy`]), predictability-gain curves and surrogate memory tests
//! ([`memory`]), Markov-model language identification ([`markov`]),
//! Jensen-Shannon / Hellinger distance matrices ([`distance`]) and the
//! downstream clustering and geo-linguistic correlation analysis
//! ([`analysis`]). The `syndist` binary orchestrates everything.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod distance;
pub mod entropy;
pub mod error;
pub mod ingest;
pub mod markov;
pub mod memory;
pub mod ngram;
pub mod seed;

pub use error::{Error, Result};
