//! Sparse block (n-gram) statistics: base-L block indexing, overlapping
//! block counts within sentences, maximum-likelihood block and transition
//! probability estimates, and whole-sentence subsampling.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Corpus, TagSequence, ALPHABET};
use crate::seed;

/// Encode a block of tag indices as a base-L number, first digit most
/// significant.
pub fn encode_block(digits: &[u8]) -> Result<u64> {
    debug_assert!(!digits.is_empty());
    let mut value = 0u64;
    for &d in digits {
        if (d as usize) >= ALPHABET {
            return Err(Error::DigitOutOfRange {
                digit: d as usize,
                alphabet: ALPHABET,
            });
        }
        value = value * ALPHABET as u64 + d as u64;
    }
    Ok(value)
}

/// Inverse of [`encode_block`] for a block of size `r`.
pub fn decode_block(value: u64, r: usize) -> Vec<u8> {
    let mut digits = vec![0u8; r];
    let mut v = value;
    for i in (0..r).rev() {
        digits[i] = (v % ALPHABET as u64) as u8;
        v /= ALPHABET as u64;
    }
    digits
}

/// Sparse occurrence counts of all overlapping blocks of size `r`.
/// Absent keys mean zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockCounts {
    pub r: usize,
    pub counts: HashMap<u64, u64>,
    pub total: u64,
}

impl BlockCounts {
    pub fn count(&self, block: u64) -> u64 {
        self.counts.get(&block).copied().unwrap_or(0)
    }
}

/// Count the overlapping blocks of size `r` in every sentence. Blocks never
/// cross sentence boundaries; a sentence shorter than `r` contributes none.
pub fn count_blocks(corpus: &Corpus, r: usize) -> BlockCounts {
    assert!(r >= 1, "block size must be >= 1");
    let mut counts = HashMap::new();
    let mut total = 0u64;
    for sentence in &corpus.sentences {
        let tags = sentence.tags();
        if tags.len() < r {
            continue;
        }
        let mut value = encode_block(&tags[..r]).expect("tags are in range");
        *counts.entry(value).or_insert(0) += 1;
        total += 1;
        let modulus = (ALPHABET as u64).pow(r as u32 - 1);
        for &t in &tags[r..] {
            value = (value % modulus) * ALPHABET as u64 + t as u64;
            *counts.entry(value).or_insert(0) += 1;
            total += 1;
        }
    }
    BlockCounts { r, counts, total }
}

/// A normalized probability distribution over the base-L block index space.
/// Unobserved blocks are implicit zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDistribution {
    pub r: usize,
    pub probs: HashMap<u64, f64>,
}

impl BlockDistribution {
    pub fn prob(&self, block: u64) -> f64 {
        self.probs.get(&block).copied().unwrap_or(0.0)
    }
}

/// Maximum-likelihood block probabilities: count / total.
pub fn estimate_distribution(counts: &BlockCounts) -> Result<BlockDistribution> {
    if counts.total == 0 {
        return Err(Error::EmptyCounts);
    }
    let total = counts.total as f64;
    let probs = counts
        .counts
        .iter()
        .map(|(&k, &n)| (k, n as f64 / total))
        .collect();
    Ok(BlockDistribution { r: counts.r, probs })
}

/// Estimated transition probabilities of order `r - 1`: each observed
/// context (block of size r-1) maps to a normalized row over next tags.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTable {
    pub order: usize,
    pub rows: HashMap<u64, Vec<(u8, f64)>>,
}

impl TransitionTable {
    /// Transition probability, zero when the context or continuation was
    /// never observed.
    pub fn prob(&self, context: u64, tag: u8) -> f64 {
        self.rows
            .get(&context)
            .and_then(|row| row.iter().find(|(t, _)| *t == tag))
            .map(|(_, p)| *p)
            .unwrap_or(0.0)
    }
}

/// Estimate order-(r-1) transition probabilities from block counts of size r.
pub fn estimate_transitions(counts: &BlockCounts) -> Result<TransitionTable> {
    assert!(counts.r >= 2, "transitions need block size >= 2");
    if counts.total == 0 {
        return Err(Error::EmptyCounts);
    }
    let mut grouped: HashMap<u64, Vec<(u8, u64)>> = HashMap::new();
    for (&block, &n) in &counts.counts {
        let context = block / ALPHABET as u64;
        let tag = (block % ALPHABET as u64) as u8;
        grouped.entry(context).or_default().push((tag, n));
    }
    let rows = grouped
        .into_iter()
        .map(|(context, mut entries)| {
            entries.sort_unstable_by_key(|&(t, _)| t);
            let denom: u64 = entries.iter().map(|&(_, n)| n).sum();
            let row = entries
                .into_iter()
                .map(|(t, n)| (t, n as f64 / denom as f64))
                .collect();
            (context, row)
        })
        .collect();
    Ok(TransitionTable {
        order: counts.r - 1,
        rows,
    })
}

/// Draw whole sentences uniformly without replacement, closing each sample
/// when its token count first reaches `target_tokens`. Stops after
/// `max_samples` samples or once the remaining sentences cannot reach the
/// target.
pub fn sample_corpus(
    corpus: &Corpus,
    target_tokens: usize,
    max_samples: usize,
    seed_value: u64,
) -> Result<Vec<Corpus>> {
    assert!(target_tokens > 0);
    let mut rng = seed::derive_rng(seed_value, "sample_corpus", 0);
    let mut pool: Vec<usize> = (0..corpus.sentences.len()).collect();
    let mut samples = Vec::new();
    let mut pos = 0;
    // Fisher-Yates once; consuming the shuffled order left to right is the
    // same as drawing without replacement.
    for i in (1..pool.len()).rev() {
        let j = rng.gen_range(0..=i);
        pool.swap(i, j);
    }
    while samples.len() < max_samples {
        let mut tokens = 0usize;
        let mut sentences = Vec::new();
        while tokens < target_tokens && pos < pool.len() {
            let s = corpus.sentences[pool[pos]].clone();
            tokens += s.len();
            sentences.push(s);
            pos += 1;
        }
        if tokens < target_tokens {
            break;
        }
        samples.push(Corpus::new(
            format!("{}#{}", corpus.language_id, samples.len()),
            sentences,
        ));
    }
    if samples.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{}: cannot form a single {target_tokens}-token sample",
            corpus.language_id
        )));
    }
    Ok(samples)
}

/// JSON envelope for serialized block counts.
#[derive(Debug, Serialize, Deserialize)]
pub struct BlockCountsEnvelope {
    pub language_id: String,
    pub r: usize,
    pub l: usize,
    pub total: u64,
    pub counts: Vec<(u64, u64)>,
}

pub fn write_counts_csv(counts: &BlockCounts, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "block_index,count")?;
    let mut entries: Vec<_> = counts.counts.iter().collect();
    entries.sort_unstable_by_key(|&(&k, _)| k);
    for (k, n) in entries {
        writeln!(w, "{k},{n}")?;
    }
    Ok(())
}

pub fn write_counts_json(counts: &BlockCounts, language_id: &str, path: &Path) -> Result<()> {
    let mut entries: Vec<(u64, u64)> = counts.counts.iter().map(|(&k, &n)| (k, n)).collect();
    entries.sort_unstable();
    let envelope = BlockCountsEnvelope {
        language_id: language_id.to_string(),
        r: counts.r,
        l: ALPHABET,
        total: counts.total,
        counts: entries,
    };
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(file, &envelope)?;
    Ok(())
}

/// Counts from a single flat sequence (one-sentence corpus). Test and
/// synthetic-data helper.
pub fn counts_from_sequence(tags: &[u8], r: usize) -> BlockCounts {
    let corpus = Corpus::new("seq", vec![TagSequence::new(tags.to_vec()).unwrap()]);
    count_blocks(&corpus, r)
}
