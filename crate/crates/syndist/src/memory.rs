//! Predictability gain: exact values for known processes, estimated gain
//! curves from counts, order-m surrogate generation and the surrogate
//! p-value test for the hypothesis "memory = m".

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::entropy::{block_entropy, Estimator};
use crate::error::{Error, Result};
use crate::ingest::{Corpus, TagSequence, ALPHABET};
use crate::ngram::{
    count_blocks, encode_block, estimate_transitions, BlockCounts, BlockDistribution,
};
use crate::seed;

const LN_2: f64 = std::f64::consts::LN_2;

/// Exact joint block distributions of a stationary process, dense over the
/// L^r index space, for sizes 1..=max_r.
#[derive(Debug, Clone)]
pub struct JointDistributions {
    pub l: usize,
    /// joints[r-1] has length l^r and sums to 1.
    pub joints: Vec<Vec<f64>>,
}

impl JointDistributions {
    pub fn max_r(&self) -> usize {
        self.joints.len()
    }

    fn joint(&self, r: usize) -> &[f64] {
        &self.joints[r - 1]
    }

    /// Exact joints of a homogeneous order-m chain. `transitions` maps each
    /// of the l^m contexts to a row over next symbols (a single row for
    /// m = 0). The stationary context distribution is found by iteration.
    pub fn from_order_m_chain(l: usize, m: usize, transitions: &[Vec<f64>], max_r: usize) -> Self {
        assert_eq!(transitions.len(), l.pow(m as u32));
        assert!(transitions.iter().all(|row| row.len() == l));
        let top = max_r.max(m + 1);

        // Stationary distribution over m-blocks (a scalar for m = 0).
        let states = l.pow(m as u32);
        let mut pi = vec![1.0 / states as f64; states];
        for _ in 0..20_000 {
            let mut next = vec![0.0; states];
            for (ctx, &p) in pi.iter().enumerate() {
                for (z, &t) in transitions[ctx].iter().enumerate() {
                    let shifted = if m == 0 { 0 } else { (ctx * l + z) % states };
                    next[shifted] += p * t;
                }
            }
            let delta: f64 = next
                .iter()
                .zip(&pi)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            pi = next;
            if delta < 1e-15 {
                break;
            }
        }

        // Joint at the top size: pi over the first m symbols, then chained
        // transitions.
        let mut joint_top = vec![0.0; l.pow(top as u32)];
        for (idx, slot) in joint_top.iter_mut().enumerate() {
            let mut digits = vec![0usize; top];
            let mut v = idx;
            for d in digits.iter_mut().rev() {
                *d = v % l;
                v /= l;
            }
            let mut ctx = 0usize;
            for &d in &digits[..m] {
                ctx = ctx * l + d;
            }
            let mut p = pi[if m == 0 { 0 } else { ctx }];
            for &d in &digits[m..] {
                p *= transitions[ctx][d];
                ctx = if m == 0 { 0 } else { (ctx * l + d) % states };
            }
            *slot = p;
        }

        // Marginalize down from the top.
        let mut joints = vec![Vec::new(); top];
        joints[top - 1] = joint_top;
        for r in (1..top).rev() {
            let upper = &joints[r];
            let mut lower = vec![0.0; l.pow(r as u32)];
            for (idx, &p) in upper.iter().enumerate() {
                lower[idx / l] += p;
            }
            joints[r - 1] = lower;
        }
        joints.truncate(max_r);
        JointDistributions { l, joints }
    }

    /// Marginal and stationarity consistency: dropping the last or the first
    /// symbol of the size-r joint must reproduce the size-(r-1) joint.
    fn check_consistency(&self, tol: f64) -> Result<()> {
        let l = self.l;
        let mut worst = 0.0f64;
        for r in 2..=self.max_r() {
            let upper = self.joint(r);
            let lower = self.joint(r - 1);
            let mut drop_last = vec![0.0; lower.len()];
            let mut drop_first = vec![0.0; lower.len()];
            let suffix_space = lower.len();
            for (idx, &p) in upper.iter().enumerate() {
                drop_last[idx / l] += p;
                drop_first[idx % suffix_space] += p;
            }
            for i in 0..lower.len() {
                worst = worst.max((drop_last[i] - lower[i]).abs());
                worst = worst.max((drop_first[i] - lower[i]).abs());
            }
        }
        if worst > tol {
            return Err(Error::InconsistentMarginals(worst));
        }
        Ok(())
    }

    fn block_entropy_bits(&self, r: usize) -> f64 {
        if r == 0 {
            return 0.0;
        }
        self.joint(r)
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.ln())
            .sum::<f64>()
            / LN_2
    }
}

/// Gain via the block-entropy second difference: -(H_{u+2} - 2H_{u+1} + H_u).
pub fn gain_entropy_form(dists: &JointDistributions, u: usize) -> f64 {
    -(dists.block_entropy_bits(u + 2) - 2.0 * dists.block_entropy_bits(u + 1)
        + dists.block_entropy_bits(u))
}

/// Gain as a conditional relative entropy between the order-(u+1) and
/// order-u predictions.
pub fn gain_kl_form(dists: &JointDistributions, u: usize) -> f64 {
    let l = dists.l;
    let top = dists.joint(u + 2);
    let prefix = dists.joint(u + 1); // x_0..x_u
    let suffix_space = l.pow((u + 1) as u32);
    // p(x_1..x_{u+1}) and p(x_1..x_u) marginalized from the same joints.
    let mut mid_upper = vec![0.0; suffix_space]; // x_1..x_{u+1}
    for (idx, &p) in top.iter().enumerate() {
        mid_upper[idx % suffix_space] += p;
    }
    let mut mid_lower = vec![0.0; suffix_space / l]; // x_1..x_u (scalar 1 for u=0)
    if u == 0 {
        mid_lower = vec![1.0];
    } else {
        for (idx, &p) in prefix.iter().enumerate() {
            mid_lower[idx % (suffix_space / l)] += p;
        }
    }

    let mut acc = 0.0;
    for (idx, &p) in top.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let full_prefix = idx / l; // x_0..x_u
        let suffix = idx % suffix_space; // x_1..x_{u+1}
        let short_ctx = (idx / l) % (suffix_space / l).max(1); // x_1..x_u
        let cond_long = p / prefix[full_prefix];
        let cond_short = mid_upper[suffix] / if u == 0 { 1.0 } else { mid_lower[short_ctx] };
        acc += p * (cond_long / cond_short).ln();
    }
    acc / LN_2
}

/// Exact predictability gain of a stationary process, after verifying that
/// the provided joints are mutually consistent.
pub fn predictability_gain_exact(dists: &JointDistributions, u: usize) -> Result<f64> {
    assert!(dists.max_r() >= u + 2, "need joints up to size u+2");
    dists.check_consistency(1e-9)?;
    Ok(gain_entropy_form(dists, u))
}

/// Estimated gain curve Ĝ_u for u = 0..=r_max-2.
#[derive(Debug, Clone, Serialize)]
pub struct GainCurve {
    pub estimator: Estimator,
    /// values[u] = Ĝ_u in bits.
    pub values: Vec<f64>,
}

fn estimated_entropies(corpus: &Corpus, max_r: usize, estimator: Estimator) -> Result<Vec<f64>> {
    // h[r] for r = 0..=max_r, with H_0 = 0.
    let mut h = vec![0.0; max_r + 1];
    for (r, slot) in h.iter_mut().enumerate().skip(1) {
        *slot = block_entropy(&count_blocks(corpus, r), estimator)?.value;
    }
    Ok(h)
}

/// Gain Ĝ_u of a corpus for a single u.
pub fn estimated_gain(corpus: &Corpus, u: usize, estimator: Estimator) -> Result<f64> {
    let h = estimated_entropies(corpus, u + 2, estimator)?;
    Ok(-(h[u + 2] - 2.0 * h[u + 1] + h[u]))
}

/// The full gain curve up to the corpus's reliability horizon.
pub fn gain_curve(corpus: &Corpus, estimator: Estimator) -> Result<GainCurve> {
    let n1 = count_blocks(corpus, 1).total;
    let rmax = crate::entropy::r_max(n1, ALPHABET)?;
    let h = estimated_entropies(corpus, rmax, estimator)?;
    let values = (0..=rmax - 2)
        .map(|u| -(h[u + 2] - 2.0 * h[u + 1] + h[u]))
        .collect();
    Ok(GainCurve { estimator, values })
}

/// Cumulative-weight sampling table.
#[derive(Debug, Clone)]
struct Sampler {
    items: Vec<u64>,
    cum: Vec<f64>,
}

impl Sampler {
    fn from_weights(pairs: impl Iterator<Item = (u64, f64)>) -> Self {
        let mut entries: Vec<(u64, f64)> = pairs.filter(|&(_, w)| w > 0.0).collect();
        entries.sort_unstable_by_key(|&(item, _)| item);
        let mut cum = Vec::with_capacity(entries.len());
        let mut acc = 0.0;
        let mut items = Vec::with_capacity(entries.len());
        for (item, w) in entries {
            acc += w;
            items.push(item);
            cum.push(acc);
        }
        Sampler { items, cum }
    }

    fn from_counts(counts: &BlockCounts) -> Self {
        Self::from_weights(counts.counts.iter().map(|(&b, &n)| (b, n as f64)))
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> u64 {
        let total = *self.cum.last().expect("sampler is non-empty");
        let x = rng.gen::<f64>() * total;
        let pos = self.cum.partition_point(|&c| c <= x);
        self.items[pos.min(self.items.len() - 1)]
    }
}

/// Generates sentences from an order-m chain: the initial m-block comes from
/// an empirical block distribution, successive tags from transition rows.
pub struct MarkovGenerator {
    pub m: usize,
    /// Initial block sampler over m-blocks (over unigrams for m = 0).
    init: Sampler,
    /// Transition rows as samplers keyed by context.
    rows: HashMap<u64, Sampler>,
    /// Samplers for whole sentences shorter than m+1, keyed by length.
    short: HashMap<usize, Sampler>,
    /// Unigram back-off for contexts with no observed continuation
    /// (sentence-final only); absent for generators built from explicit
    /// transition rows.
    fallback: Option<Sampler>,
}

impl MarkovGenerator {
    /// Fit an order-m generator to a corpus: transitions from (m+1)-block
    /// counts, initial blocks from the empirical m-block distribution, and
    /// dedicated block samplers for the lengths of sentences shorter than
    /// m+1.
    pub fn from_corpus(corpus: &Corpus, m: usize) -> Result<Self> {
        let init = Sampler::from_counts(&count_blocks(corpus, m.max(1)));
        if init.items.is_empty() {
            return Err(Error::InsufficientData(format!(
                "{}: no blocks of size {}",
                corpus.language_id,
                m.max(1)
            )));
        }
        let rows = if m == 0 {
            HashMap::new()
        } else {
            let table = estimate_transitions(&count_blocks(corpus, m + 1))?;
            table
                .rows
                .into_iter()
                .map(|(ctx, row)| {
                    (
                        ctx,
                        Sampler::from_weights(row.into_iter().map(|(t, p)| (t as u64, p))),
                    )
                })
                .collect()
        };
        let mut short = HashMap::new();
        for s in &corpus.sentences {
            if s.len() <= m && !short.contains_key(&s.len()) {
                short.insert(
                    s.len(),
                    Sampler::from_counts(&count_blocks(corpus, s.len())),
                );
            }
        }
        Ok(MarkovGenerator {
            m,
            init,
            rows,
            short,
            fallback: Some(Sampler::from_counts(&count_blocks(corpus, 1))),
        })
    }

    /// Build a generator from explicit dense transition rows over an
    /// `l`-symbol sub-alphabet: `transitions[context][next]` with the
    /// context enumerated in base l. The initial block distribution is
    /// keyed in the usual base-15 block index space. Sentences of length
    /// <= m cannot be generated by this constructor.
    pub fn from_parts(
        m: usize,
        l: usize,
        init: &BlockDistribution,
        transitions: &[Vec<f64>],
    ) -> Self {
        assert_eq!(init.r, m.max(1));
        assert_eq!(transitions.len(), l.pow(m as u32));
        let rows = transitions
            .iter()
            .enumerate()
            .map(|(ctx, row)| {
                // Re-key the base-l context into the base-15 index space.
                let mut digits = vec![0u8; m];
                let mut v = ctx;
                for d in digits.iter_mut().rev() {
                    *d = (v % l) as u8;
                    v /= l;
                }
                let key = if m == 0 {
                    0
                } else {
                    encode_block(&digits).expect("sub-alphabet digits are valid tags")
                };
                (
                    key,
                    Sampler::from_weights(row.iter().enumerate().map(|(t, &p)| (t as u64, p))),
                )
            })
            .collect();
        MarkovGenerator {
            m,
            init: Sampler::from_weights(init.probs.iter().map(|(&b, &p)| (b, p))),
            rows,
            short: HashMap::new(),
            fallback: None,
        }
    }

    fn generate_sentence<R: Rng>(&self, len: usize, rng: &mut R) -> Result<TagSequence> {
        let mut tags = Vec::with_capacity(len);
        if self.m == 0 {
            for _ in 0..len {
                tags.push(self.init.sample(rng) as u8);
            }
            return TagSequence::new(tags);
        }
        if len <= self.m {
            let sampler = self.short.get(&len).ok_or(Error::MissingContext)?;
            return TagSequence::new(crate::ngram::decode_block(sampler.sample(rng), len));
        }
        let initial = self.init.sample(rng);
        tags.extend(crate::ngram::decode_block(initial, self.m));
        let modulus = (ALPHABET as u64).pow(self.m as u32 - 1);
        let mut context = initial;
        for _ in self.m..len {
            let row = self
                .rows
                .get(&context)
                .or(self.fallback.as_ref())
                .ok_or(Error::MissingContext)?;
            let tag = row.sample(rng) as u8;
            tags.push(tag);
            context = (context % modulus) * ALPHABET as u64 + tag as u64;
        }
        TagSequence::new(tags)
    }

    /// Generate one corpus with the given per-sentence lengths.
    pub fn generate<R: Rng>(
        &self,
        language_id: &str,
        lengths: &[usize],
        rng: &mut R,
    ) -> Result<Corpus> {
        let sentences = lengths
            .iter()
            .map(|&len| self.generate_sentence(len, rng))
            .collect::<Result<_>>()?;
        Ok(Corpus::new(language_id, sentences))
    }
}

/// K surrogate corpora matched to the source's per-sentence lengths,
/// generated from order-m transitions estimated on the source.
pub fn generate_surrogates(
    corpus: &Corpus,
    m: usize,
    k: usize,
    seed_value: u64,
) -> Result<Vec<Corpus>> {
    assert!(k >= 1);
    let generator = MarkovGenerator::from_corpus(corpus, m)?;
    let lengths: Vec<usize> = corpus.sentences.iter().map(|s| s.len()).collect();
    (0..k)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::derive_rng(seed_value, "surrogate", i as u64);
            generator.generate(&format!("{}~{}", corpus.language_id, i), &lengths, &mut rng)
        })
        .collect()
}

/// Outcome of the surrogate test for "memory = m".
#[derive(Debug, Clone, Serialize)]
pub struct MemoryTestResult {
    pub m: usize,
    /// Ĝ_m on the real data, bits.
    pub statistic: f64,
    pub surrogate_mean: f64,
    pub surrogate_std: f64,
    /// Fraction of surrogates whose Ĝ_m is at least the real statistic.
    pub p_value: f64,
    pub k: usize,
}

/// Surrogate test: compare Ĝ_m on the real corpus against K size-matched
/// order-m surrogates.
pub fn memory_test(
    corpus: &Corpus,
    m: usize,
    k: usize,
    seed_value: u64,
    estimator: Estimator,
) -> Result<MemoryTestResult> {
    let n1 = count_blocks(corpus, 1).total;
    let rmax = crate::entropy::r_max(n1, ALPHABET)?;
    if rmax < m + 2 {
        return Err(Error::InsufficientData(format!(
            "r_max = {rmax} < m + 2 = {}",
            m + 2
        )));
    }
    let statistic = estimated_gain(corpus, m, estimator)?;
    let surrogates = generate_surrogates(corpus, m, k, seed_value)?;
    let gains: Vec<f64> = surrogates
        .par_iter()
        .map(|s| estimated_gain(s, m, estimator))
        .collect::<Result<_>>()?;
    let mean = gains.iter().sum::<f64>() / k as f64;
    let std = if k > 1 {
        (gains.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt()
    } else {
        0.0
    };
    let exceed = gains.iter().filter(|&&g| g >= statistic).count();
    Ok(MemoryTestResult {
        m,
        statistic,
        surrogate_mean: mean,
        surrogate_std: std,
        p_value: exceed as f64 / k as f64,
        k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn two_state_chain() -> JointDistributions {
        let trans = vec![vec![0.9, 0.1], vec![0.2, 0.8]];
        JointDistributions::from_order_m_chain(2, 1, &trans, 4)
    }

    #[test]
    fn iid_process_has_zero_gain() {
        let trans = vec![vec![0.2, 0.3, 0.5]];
        let dists = JointDistributions::from_order_m_chain(3, 0, &trans, 4);
        for u in 0..=2 {
            assert!(predictability_gain_exact(&dists, u).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn first_order_chain_gain_profile() {
        let dists = two_state_chain();
        let g0 = predictability_gain_exact(&dists, 0).unwrap();
        let g1 = predictability_gain_exact(&dists, 1).unwrap();
        let g2 = predictability_gain_exact(&dists, 2).unwrap();
        assert!(g0 > 0.01, "G_0 = {g0}");
        assert!(g1.abs() < 1e-12, "G_1 = {g1}");
        assert!(g2.abs() < 1e-12, "G_2 = {g2}");
    }

    #[test]
    fn entropy_and_kl_forms_agree() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        for l in 2..=4usize {
            for m in 0..=2usize {
                let contexts = l.pow(m as u32);
                let trans: Vec<Vec<f64>> = (0..contexts)
                    .map(|_| {
                        let raw: Vec<f64> = (0..l).map(|_| rng.gen::<f64>() + 0.05).collect();
                        let sum: f64 = raw.iter().sum();
                        raw.into_iter().map(|x| x / sum).collect()
                    })
                    .collect();
                let dists = JointDistributions::from_order_m_chain(l, m, &trans, 4);
                for u in 0..=2usize {
                    let a = gain_entropy_form(&dists, u);
                    let b = gain_kl_form(&dists, u);
                    assert!((a - b).abs() < 1e-12, "l={l} m={m} u={u}: {a} vs {b}");
                    assert!(b >= -1e-12, "gain must be nonnegative, got {b}");
                }
            }
        }
    }

    #[test]
    fn inconsistent_marginals_detected() {
        let mut dists = two_state_chain();
        dists.joints[0][0] += 0.1;
        assert!(matches!(
            predictability_gain_exact(&dists, 0),
            Err(Error::InconsistentMarginals(_))
        ));
    }

    #[test]
    fn surrogates_preserve_length_multiset() {
        let corpus = Corpus::new(
            "xx",
            vec![
                TagSequence::new(vec![0, 1, 2, 3, 4]).unwrap(),
                TagSequence::new(vec![5, 6, 7, 8, 9, 10, 11]).unwrap(),
            ],
        );
        let surrogates = generate_surrogates(&corpus, 1, 3, 9).unwrap();
        assert_eq!(surrogates.len(), 3);
        for s in &surrogates {
            let lengths: Vec<usize> = s.sentences.iter().map(|x| x.len()).collect();
            assert_eq!(lengths, vec![5, 7]);
        }
    }

    #[test]
    fn surrogates_are_deterministic_under_seed() {
        let corpus = Corpus::new(
            "xx",
            (0..50)
                .map(|i| TagSequence::new(vec![(i % 15) as u8; 12]).unwrap())
                .collect(),
        );
        let a = generate_surrogates(&corpus, 2, 4, 123).unwrap();
        let b = generate_surrogates(&corpus, 2, 4, 123).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn short_sentences_are_drawn_from_their_own_length_blocks() {
        let corpus = Corpus::new(
            "xx",
            vec![
                TagSequence::new(vec![3]).unwrap(),
                TagSequence::new(vec![1, 2]).unwrap(),
                TagSequence::new(vec![0, 1, 2, 3, 4, 5]).unwrap(),
            ],
        );
        let surrogates = generate_surrogates(&corpus, 2, 5, 1).unwrap();
        for s in &surrogates {
            assert_eq!(s.sentences[0].len(), 1);
            assert_eq!(s.sentences[1].len(), 2);
        }
    }

    #[test]
    fn p_value_counting_definition() {
        // K = 1: p is 0 or 1 by the counting rule; with an IID corpus and
        // m = 0 the single surrogate either reaches the real gain or not.
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(77);
        let sentences: Vec<TagSequence> = (0..200)
            .map(|_| TagSequence::new((0..20).map(|_| rng.gen_range(0..15u8)).collect()).unwrap())
            .collect();
        let corpus = Corpus::new("iid", sentences);
        let result = memory_test(&corpus, 0, 1, 5, Estimator::Plugin).unwrap();
        assert!(result.p_value == 0.0 || result.p_value == 1.0);
        assert_eq!(result.k, 1);
    }

    #[test]
    fn synthetic_first_order_chain_gain_curve() {
        // Strong first-order structure: G_0 large, G_1 near zero.
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(21);
        let l = ALPHABET;
        let trans: Vec<Vec<f64>> = (0..l)
            .map(|i| {
                let mut row = vec![0.02 / (l - 1) as f64; l];
                row[(i + 1) % l] = 0.98;
                let sum: f64 = row.iter().sum();
                row.iter().map(|x| x / sum).collect()
            })
            .collect();
        let init = BlockDistribution {
            r: 1,
            probs: (0..l as u64).map(|i| (i, 1.0 / l as f64)).collect(),
        };
        let generator = MarkovGenerator::from_parts(1, l, &init, &trans);
        let lengths = vec![40usize; 2500]; // 1e5 tokens
        let corpus = generator.generate("chain", &lengths, &mut rng).unwrap();
        let test1 = memory_test(&corpus, 1, 30, 10, Estimator::Nsb).unwrap();
        let g0 = estimated_gain(&corpus, 0, Estimator::Nsb).unwrap();
        assert!(g0 > 1.0, "G_0 = {g0}");
        assert!(
            (test1.statistic - test1.surrogate_mean).abs() < 3.0 * test1.surrogate_std,
            "G_1 = {} vs surrogate {} +- {}",
            test1.statistic,
            test1.surrogate_mean,
            test1.surrogate_std
        );
    }
}
