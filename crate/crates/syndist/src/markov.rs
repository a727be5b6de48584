//! Order-u Markov language models over tag sequences and the
//! held-out language-identification experiment.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::{Corpus, TagSequence, ALPHABET};
use crate::ngram::{
    count_blocks, encode_block, estimate_distribution, estimate_transitions, BlockDistribution,
    TransitionTable,
};
use crate::seed;

/// A language model of order u: the stationary distribution of blocks of
/// size max(u, 1) plus, for u >= 1, order-u transition rows.
#[derive(Debug, Clone)]
pub struct LanguageModel {
    pub language_id: String,
    pub order: usize,
    pub stationary: BlockDistribution,
    pub transitions: Option<TransitionTable>,
}

impl LanguageModel {
    pub fn fit(language_id: &str, corpus: &Corpus, order: usize) -> Result<Self> {
        let stationary = estimate_distribution(&count_blocks(corpus, order.max(1)))?;
        let transitions = if order >= 1 {
            Some(estimate_transitions(&count_blocks(corpus, order + 1))?)
        } else {
            None
        };
        Ok(LanguageModel {
            language_id: language_id.to_string(),
            order,
            stationary,
            transitions,
        })
    }
}

/// log2 probability of a sentence under the model; -inf when any factor is
/// unobserved.
pub fn score_sentence(model: &LanguageModel, sentence: &TagSequence) -> Result<f64> {
    let tags = sentence.tags();
    let u = model.order;
    let min_len = if u == 0 { 1 } else { u + 1 };
    if tags.len() < min_len {
        return Err(Error::SentenceTooShort {
            len: tags.len(),
            order: u,
        });
    }
    if u == 0 {
        let mut score = 0.0;
        for &t in tags {
            score += model.stationary.prob(t as u64).log2();
        }
        return Ok(score);
    }
    let table = model.transitions.as_ref().expect("order >= 1 has a table");
    let initial = encode_block(&tags[..u]).expect("tags are in range");
    let mut score = model.stationary.prob(initial).log2();
    let modulus = (ALPHABET as u64).pow(u as u32 - 1);
    let mut context = initial;
    for &t in &tags[u..] {
        score += table.prob(context, t).log2();
        context = (context % modulus) * ALPHABET as u64 + t as u64;
    }
    Ok(score)
}

/// Outcome of classifying one sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Classification {
    Language(String),
    /// The maximum score is shared (including the all minus-infinity case).
    Tie,
}

/// Assign the sentence to the model with the strictly highest score.
pub fn classify(sentence: &TagSequence, models: &[LanguageModel]) -> Result<Classification> {
    assert!(models.len() >= 2, "need at least two models");
    let order = models[0].order;
    assert!(
        models.iter().all(|m| m.order == order),
        "models must share an order"
    );
    let mut best: Option<(usize, f64)> = None;
    let mut tied = false;
    for (i, model) in models.iter().enumerate() {
        let score = score_sentence(model, sentence)?;
        match best {
            None => best = Some((i, score)),
            Some((_, b)) if score > b => {
                best = Some((i, score));
                tied = false;
            }
            Some((_, b)) if score == b => tied = true,
            _ => {}
        }
    }
    let (idx, _) = best.expect("at least one model");
    if tied {
        Ok(Classification::Tie)
    } else {
        Ok(Classification::Language(models[idx].language_id.clone()))
    }
}

/// Mean and spread of identification accuracy for one language and order.
#[derive(Debug, Clone, Serialize)]
pub struct AccuracyReport {
    pub language_id: String,
    pub order: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub repetitions: usize,
    pub k: usize,
}

/// Per-repetition held-out identification: sample K test sentences per
/// language (length within `length_range`), fit every model on the rest,
/// and score the fraction of strictly-correct classifications. Ties count
/// as incorrect.
pub fn run_identification_experiment(
    corpora: &[Corpus],
    orders: &[usize],
    k: usize,
    repetitions: usize,
    length_range: (usize, usize),
    seed_value: u64,
) -> Result<Vec<AccuracyReport>> {
    assert!(corpora.len() >= 2);
    let (min_len, max_len) = length_range;

    let eligible: Vec<Vec<usize>> = corpora
        .iter()
        .map(|c| {
            (0..c.sentences.len())
                .filter(|&i| {
                    let len = c.sentences[i].len();
                    len >= min_len && len <= max_len
                })
                .collect()
        })
        .collect();
    for (c, e) in corpora.iter().zip(&eligible) {
        if e.len() < k {
            return Err(Error::InsufficientData(format!(
                "{}: {} eligible sentences < K = {k}",
                c.language_id,
                e.len()
            )));
        }
    }

    // accuracy[rep][lang][order]
    let accuracy: Vec<Vec<Vec<f64>>> = (0..repetitions)
        .into_par_iter()
        .map(|rep| {
            let mut rng = seed::derive_rng(seed_value, "identify", rep as u64);
            // Held-out indices per language, drawn without replacement.
            let held_out: Vec<Vec<usize>> = eligible
                .iter()
                .map(|pool| {
                    let mut pool = pool.clone();
                    for i in (1..pool.len()).rev() {
                        let j = rng.gen_range(0..=i);
                        pool.swap(i, j);
                    }
                    pool.truncate(k);
                    pool
                })
                .collect();
            let training: Vec<Corpus> = corpora
                .iter()
                .zip(&held_out)
                .map(|(c, held)| {
                    let held: std::collections::HashSet<usize> = held.iter().copied().collect();
                    let sentences = c
                        .sentences
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| !held.contains(i))
                        .map(|(_, s)| s.clone())
                        .collect();
                    Corpus::new(c.language_id.clone(), sentences)
                })
                .collect();

            let mut per_lang = vec![vec![0.0; orders.len()]; corpora.len()];
            for (oi, &order) in orders.iter().enumerate() {
                let models: Vec<LanguageModel> = training
                    .iter()
                    .map(|c| LanguageModel::fit(&c.language_id, c, order))
                    .collect::<Result<_>>()?;
                for (li, corpus) in corpora.iter().enumerate() {
                    let correct = held_out[li]
                        .iter()
                        .filter(|&&si| {
                            matches!(
                                classify(&corpus.sentences[si], &models),
                                Ok(Classification::Language(ref lang))
                                    if *lang == corpus.language_id
                            )
                        })
                        .count();
                    per_lang[li][oi] = correct as f64 / k as f64;
                }
            }
            Ok(per_lang)
        })
        .collect::<Result<_>>()?;

    let mut reports = Vec::new();
    for (li, corpus) in corpora.iter().enumerate() {
        for (oi, &order) in orders.iter().enumerate() {
            let values: Vec<f64> = accuracy.iter().map(|rep| rep[li][oi]).collect();
            let mean = values.iter().sum::<f64>() / repetitions as f64;
            let std = if repetitions > 1 {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (repetitions - 1) as f64)
                    .sqrt()
            } else {
                0.0
            };
            reports.push(AccuracyReport {
                language_id: corpus.language_id.clone(),
                order,
                mean_accuracy: mean,
                std_accuracy: std,
                repetitions,
                k,
            });
        }
    }
    Ok(reports)
}
