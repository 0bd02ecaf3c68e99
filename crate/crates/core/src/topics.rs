//! Topic interpretation: each topic is summarized by its highest-scoring
//! corpus bi-grams, and topic quality is measured by PMI coherence of the
//! top words against a reference corpus.

use std::collections::HashMap;

use crate::corpus::{EncodedDocument, Vocabulary};
use crate::model::TopicEmbeddings;
use crate::trainer::log_sigmoid;

/// An adjacent ordered word pair and how often it occurs in the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bigram {
    pub first: usize,
    pub second: usize,
    pub count: u64,
}

/// Every adjacent ordered pair occurring at least `min_freq` times
/// (descending count, then ascending ids, for a stable ordering).
pub fn collect_bigrams(docs: &[EncodedDocument], min_freq: u64) -> Vec<Bigram> {
    let mut counts: HashMap<(usize, usize), u64> = HashMap::new();
    for doc in docs {
        for pair in doc.word_ids.windows(2) {
            *counts.entry((pair[0], pair[1])).or_insert(0) += 1;
        }
    }
    let mut bigrams: Vec<Bigram> = counts
        .into_iter()
        .filter(|&(_, count)| count >= min_freq)
        .map(|((first, second), count)| Bigram { first, second, count })
        .collect();
    bigrams.sort_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then(a.first.cmp(&b.first))
            .then(a.second.cmp(&b.second))
    });
    bigrams
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedBigram {
    pub first: usize,
    pub second: usize,
    /// log σ(V[second, z] · U[first, z]) — the positive term of the sampled
    /// objective; the negative-sample terms are constant for ranking
    /// purposes and dropped.
    pub score: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicBigramRanking {
    pub topic: usize,
    pub entries: Vec<RankedBigram>,
}

/// Rank bigrams under one topic: first word as the predicting (input) side,
/// second as the predicted (output) side. Ties break by corpus count, then
/// lexicographically by the words themselves. Bigrams with ids outside the
/// embedding table are skipped.
pub fn rank_topic_bigrams(
    embeddings: &TopicEmbeddings,
    vocab: &Vocabulary,
    bigrams: &[Bigram],
    topic: usize,
    top_n: usize,
) -> TopicBigramRanking {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut entries: Vec<RankedBigram> = bigrams
        .iter()
        .filter(|b| b.first < embeddings.num_words() && b.second < embeddings.num_words())
        .map(|b| RankedBigram {
            first: b.first,
            second: b.second,
            score: log_sigmoid(dot(
                embeddings.output(b.second, topic),
                embeddings.input(b.first, topic),
            )),
            count: b.count,
        })
        .collect();
    entries.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| b.count.cmp(&a.count))
            .then_with(|| vocab.word(a.first).cmp(vocab.word(b.first)))
            .then_with(|| vocab.word(a.second).cmp(vocab.word(b.second)))
    });
    entries.truncate(top_n);
    TopicBigramRanking { topic, entries }
}

/// The distinct words of a ranking's top bigrams, in rank order (first word
/// before second), cut off after `limit` words.
pub fn top_words(ranking: &TopicBigramRanking, limit: usize) -> Vec<usize> {
    let mut words = Vec::with_capacity(limit);
    for entry in &ranking.entries {
        for w in [entry.first, entry.second] {
            if words.len() == limit {
                return words;
            }
            if !words.contains(&w) {
                words.push(w);
            }
        }
    }
    words
}

/// Sliding-window co-occurrence statistics over a reference corpus.
///
/// Each document of length L contributes `L − window + 1` windows (one
/// whole-document window when L is shorter; empty documents contribute
/// none). A window counts each word and each unordered pair at most once.
#[derive(Debug, Clone)]
pub struct CooccurrenceCounts {
    window_size: usize,
    total_windows: u64,
    word_windows: HashMap<usize, u64>,
    pair_windows: HashMap<(usize, usize), u64>,
}

impl CooccurrenceCounts {
    pub fn from_documents(docs: &[EncodedDocument], window_size: usize) -> Self {
        assert!(window_size >= 1, "window size must be at least 1");
        let mut counts = CooccurrenceCounts {
            window_size,
            total_windows: 0,
            word_windows: HashMap::new(),
            pair_windows: HashMap::new(),
        };
        let mut seen: Vec<usize> = Vec::with_capacity(window_size);
        for doc in docs {
            let len = doc.len();
            if len == 0 {
                continue;
            }
            let starts = if len >= window_size { len - window_size + 1 } else { 1 };
            for start in 0..starts {
                let window = &doc.word_ids[start..(start + window_size).min(len)];
                counts.total_windows += 1;
                seen.clear();
                for &w in window {
                    if !seen.contains(&w) {
                        seen.push(w);
                    }
                }
                seen.sort_unstable();
                for (i, &a) in seen.iter().enumerate() {
                    *counts.word_windows.entry(a).or_insert(0) += 1;
                    for &b in &seen[i + 1..] {
                        *counts.pair_windows.entry((a, b)).or_insert(0) += 1;
                    }
                }
            }
        }
        counts
    }

    /// Assemble from precomputed counts (e.g. statistics of an external
    /// reference corpus). Pairs are keyed unordered.
    pub fn from_counts(
        window_size: usize,
        total_windows: u64,
        word_windows: HashMap<usize, u64>,
        pair_windows: HashMap<(usize, usize), u64>,
    ) -> Self {
        let pair_windows = pair_windows
            .into_iter()
            .map(|((a, b), c)| ((a.min(b), a.max(b)), c))
            .collect();
        CooccurrenceCounts { window_size, total_windows, word_windows, pair_windows }
    }

    pub fn window_size(&self) -> usize {
        self.window_size
    }

    pub fn total_windows(&self) -> u64 {
        self.total_windows
    }

    pub fn word_count(&self, word: usize) -> u64 {
        self.word_windows.get(&word).copied().unwrap_or(0)
    }

    pub fn pair_count(&self, a: usize, b: usize) -> u64 {
        self.pair_windows.get(&(a.min(b), a.max(b))).copied().unwrap_or(0)
    }

    /// P(w): fraction of windows containing the word (unsmoothed).
    pub fn word_probability(&self, word: usize) -> f64 {
        self.word_count(word) as f64 / self.total_windows as f64
    }

    /// P(a, b): fraction of windows containing both, with +1 smoothing on
    /// the pair count so no pair ever scores −∞.
    pub fn pair_probability(&self, a: usize, b: usize) -> f64 {
        (self.pair_count(a, b) + 1) as f64 / self.total_windows as f64
    }
}

/// PMI coherence of one topic's top words.
#[derive(Debug, Clone, PartialEq)]
pub struct PmiScore {
    pub topic: usize,
    pub score: f64,
    /// Word pairs that could not be scored because a word never occurs in
    /// the reference corpus (zero marginal).
    pub skipped_pairs: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PmiReport {
    pub per_topic: Vec<PmiScore>,
    pub mean: f64,
}

/// Σ over unordered top-word pairs of log [P(wi, wj) / (P(wi) P(wj))], per
/// topic, using at most the first `top_t` words of each topic's list. Pairs
/// with a zero marginal are skipped and counted rather than poisoning the
/// sum.
pub fn pmi_coherence(
    topic_words: &[Vec<usize>],
    counts: &CooccurrenceCounts,
    top_t: usize,
) -> PmiReport {
    let per_topic: Vec<PmiScore> = topic_words
        .iter()
        .enumerate()
        .map(|(topic, words)| {
            let words = &words[..words.len().min(top_t)];
            let mut score = 0.0;
            let mut skipped = 0u64;
            for (i, &a) in words.iter().enumerate() {
                for &b in &words[i + 1..] {
                    let pa = counts.word_probability(a);
                    let pb = counts.word_probability(b);
                    if pa == 0.0 || pb == 0.0 {
                        skipped += 1;
                        continue;
                    }
                    score += (counts.pair_probability(a, b) / (pa * pb)).ln();
                }
            }
            PmiScore { topic, score, skipped_pairs: skipped }
        })
        .collect();
    let mean = if per_topic.is_empty() {
        0.0
    } else {
        per_topic.iter().map(|s| s.score).sum::<f64>() / per_topic.len() as f64
    };
    PmiReport { per_topic, mean }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TopicEmbeddings;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn doc(ids: &[usize]) -> EncodedDocument {
        EncodedDocument { doc_id: 0, word_ids: ids.to_vec() }
    }

    fn toy_vocab(n: usize) -> Vocabulary {
        Vocabulary::from_entries((0..n).map(|i| (format!("w{i}"), (n - i) as u64)))
    }

    #[test]
    fn bigram_counting_is_adjacent_and_ordered() {
        // [x, y, x, y] → (x,y): 2, (y,x): 1
        let docs = [doc(&[0, 1, 0, 1])];
        let all = collect_bigrams(&docs, 1);
        assert_eq!(
            all,
            vec![
                Bigram { first: 0, second: 1, count: 2 },
                Bigram { first: 1, second: 0, count: 1 },
            ]
        );
        let frequent = collect_bigrams(&docs, 2);
        assert_eq!(frequent, vec![Bigram { first: 0, second: 1, count: 2 }]);
    }

    #[test]
    fn single_token_document_has_no_bigrams() {
        assert!(collect_bigrams(&[doc(&[0])], 1).is_empty());
        assert!(collect_bigrams(&[doc(&[])], 1).is_empty());
    }

    #[test]
    fn bigrams_never_cross_document_boundaries() {
        let docs = [doc(&[0, 1]), doc(&[2, 3])];
        let all = collect_bigrams(&docs, 1);
        assert_eq!(all.len(), 2);
        assert!(all.iter().all(|b| (b.first, b.second) != (1, 2)));
    }

    #[test]
    fn bigram_counts_survive_brute_force_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let docs: Vec<EncodedDocument> = (0..50)
            .map(|i| EncodedDocument {
                doc_id: i,
                word_ids: (0..rng.random_range(0..40)).map(|_| rng.random_range(0..10)).collect(),
            })
            .collect();
        let min_freq = 3;
        let bigrams = collect_bigrams(&docs, min_freq);
        for b in &bigrams {
            let recount: u64 = docs
                .iter()
                .flat_map(|d| d.word_ids.windows(2))
                .filter(|p| p[0] == b.first && p[1] == b.second)
                .count() as u64;
            assert_eq!(recount, b.count);
            assert!(b.count >= min_freq);
        }
        // Nothing frequent was dropped.
        let total_pairs: usize = docs.iter().map(|d| d.len().saturating_sub(1)).sum();
        let kept: u64 = bigrams.iter().map(|b| b.count).sum();
        let dropped_pairs = total_pairs as u64 - kept;
        let all = collect_bigrams(&docs, 1);
        let should_drop: u64 =
            all.iter().filter(|b| b.count < min_freq).map(|b| b.count).sum();
        assert_eq!(dropped_pairs, should_drop);
    }

    #[test]
    fn zero_embeddings_rank_by_tiebreaks() {
        let emb = TopicEmbeddings::zeros(4, 2, 3);
        let vocab = toy_vocab(4);
        let bigrams = vec![
            Bigram { first: 2, second: 3, count: 5 },
            Bigram { first: 0, second: 1, count: 9 },
            Bigram { first: 1, second: 0, count: 5 },
        ];
        let ranking = rank_topic_bigrams(&emb, &vocab, &bigrams, 0, 10);
        // All scores are log σ(0) = log 0.5; order falls to count desc, then words.
        for e in &ranking.entries {
            assert!((e.score - 0.5f64.ln()).abs() < 1e-12);
        }
        let order: Vec<(usize, usize)> =
            ranking.entries.iter().map(|e| (e.first, e.second)).collect();
        assert_eq!(order, vec![(0, 1), (1, 0), (2, 3)]);
    }

    #[test]
    fn ranking_is_monotone_in_the_dot_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut emb = TopicEmbeddings::zeros(6, 2, 4);
        {
            let (u, v) = emb.raw_mut();
            for x in u.iter_mut().chain(v.iter_mut()) {
                *x = rng.random::<f64>() * 2.0 - 1.0;
            }
        }
        let vocab = toy_vocab(6);
        let bigrams: Vec<Bigram> = (0..6)
            .flat_map(|a| (0..6).filter(move |&b| b != a).map(move |b| Bigram {
                first: a,
                second: b,
                count: 1,
            }))
            .collect();
        let ranking = rank_topic_bigrams(&emb, &vocab, &bigrams, 1, usize::MAX);
        let dot = |a: usize, b: usize| {
            emb.input(a, 1).iter().zip(emb.output(b, 1)).map(|(x, y)| x * y).sum::<f64>()
        };
        for pair in ranking.entries.windows(2) {
            assert!(pair[0].score >= pair[1].score);
            assert!(dot(pair[0].first, pair[0].second) >= dot(pair[1].first, pair[1].second));
        }
    }

    #[test]
    fn out_of_table_bigrams_are_skipped() {
        let emb = TopicEmbeddings::zeros(3, 1, 2);
        let vocab = toy_vocab(3);
        let bigrams = vec![
            Bigram { first: 0, second: 1, count: 2 },
            Bigram { first: 0, second: 7, count: 9 },
        ];
        let ranking = rank_topic_bigrams(&emb, &vocab, &bigrams, 0, 10);
        assert_eq!(ranking.entries.len(), 1);
        assert_eq!((ranking.entries[0].first, ranking.entries[0].second), (0, 1));
    }

    #[test]
    fn top_words_are_distinct_and_in_rank_order() {
        let ranking = TopicBigramRanking {
            topic: 0,
            entries: [(1usize, 2usize), (2, 3), (3, 1), (4, 5)]
                .iter()
                .map(|&(first, second)| RankedBigram { first, second, score: 0.0, count: 1 })
                .collect(),
        };
        assert_eq!(top_words(&ranking, 5), vec![1, 2, 3, 4, 5]);
        assert_eq!(top_words(&ranking, 3), vec![1, 2, 3]);
        assert_eq!(top_words(&ranking, 10), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn window_counts_on_a_short_document() {
        // Document shorter than the window: one window covering it all.
        let counts = CooccurrenceCounts::from_documents(&[doc(&[0, 1, 0])], 10);
        assert_eq!(counts.total_windows(), 1);
        assert_eq!(counts.word_count(0), 1); // presence, not frequency
        assert_eq!(counts.word_count(1), 1);
        assert_eq!(counts.pair_count(0, 1), 1);
        assert_eq!(counts.pair_count(1, 0), 1); // symmetric
    }

    #[test]
    fn window_counts_slide_over_long_documents() {
        // len 5, window 3 → windows [0,1,2], [1,2,3], [2,3,4]
        let counts = CooccurrenceCounts::from_documents(&[doc(&[0, 1, 2, 3, 4])], 3);
        assert_eq!(counts.total_windows(), 3);
        assert_eq!(counts.word_count(2), 3); // in every window
        assert_eq!(counts.word_count(0), 1);
        assert_eq!(counts.pair_count(0, 2), 1);
        assert_eq!(counts.pair_count(1, 3), 1);
        assert_eq!(counts.pair_count(0, 4), 0);
    }

    #[test]
    fn perfect_association_is_positive() {
        // Both words in every window.
        let docs = [doc(&[0, 1]), doc(&[1, 0]), doc(&[0, 1])];
        let counts = CooccurrenceCounts::from_documents(&docs, 10);
        let n = counts.total_windows() as f64;
        let report = pmi_coherence(&[vec![0, 1]], &counts, 2);
        assert!(report.per_topic[0].score > 0.0);
        // P(0)=P(1)=1, P(0,1)=(n+1)/n with smoothing.
        let expected = ((n + 1.0) / n).ln();
        assert!((report.per_topic[0].score - expected).abs() < 1e-12);
    }

    #[test]
    fn independent_words_score_near_zero() {
        // Counts constructed so pair/total = (a/total)·(b/total).
        let word_windows: HashMap<usize, u64> = [(0, 1000), (1, 2000)].into();
        let pair_windows: HashMap<(usize, usize), u64> = [((0, 1), 200u64)].into();
        let counts = CooccurrenceCounts::from_counts(10, 10_000, word_windows, pair_windows);
        let report = pmi_coherence(&[vec![0, 1]], &counts, 2);
        assert!(report.per_topic[0].score.abs() < 0.01, "{}", report.per_topic[0].score);
    }

    #[test]
    fn pmi_is_symmetric_and_order_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let docs: Vec<EncodedDocument> = (0..30)
            .map(|i| EncodedDocument {
                doc_id: i,
                word_ids: (0..rng.random_range(3..25)).map(|_| rng.random_range(0..8)).collect(),
            })
            .collect();
        let counts = CooccurrenceCounts::from_documents(&docs, 5);
        let a = pmi_coherence(&[vec![0, 1, 2, 3]], &counts, 4);
        let b = pmi_coherence(&[vec![3, 1, 0, 2]], &counts, 4);
        assert!((a.per_topic[0].score - b.per_topic[0].score).abs() < 1e-12);
        assert!((a.mean - b.mean).abs() < 1e-12);
    }

    #[test]
    fn unseen_words_are_skipped_not_fatal() {
        let counts = CooccurrenceCounts::from_documents(&[doc(&[0, 1, 2])], 10);
        let report = pmi_coherence(&[vec![0, 1, 99]], &counts, 3);
        assert_eq!(report.per_topic[0].skipped_pairs, 2); // (0,99) and (1,99)
        assert!(report.per_topic[0].score.is_finite());
    }

    #[test]
    fn zero_cooccurrence_is_smoothed_not_infinite() {
        // 0 and 3 never share a window.
        let docs = [doc(&[0, 1]), doc(&[2, 3])];
        let counts = CooccurrenceCounts::from_documents(&docs, 2);
        let report = pmi_coherence(&[vec![0, 3]], &counts, 2);
        assert!(report.per_topic[0].score.is_finite());
        assert_eq!(report.per_topic[0].skipped_pairs, 0);
        // P(0,3) = 1/2 smoothed, P(0)=P(3)=1/2 → log(2) exactly.
        assert!((report.per_topic[0].score - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn mean_is_the_average_over_topics() {
        let docs = [doc(&[0, 1, 2, 3])];
        let counts = CooccurrenceCounts::from_documents(&docs, 4);
        let report = pmi_coherence(&[vec![0, 1], vec![2, 3]], &counts, 2);
        let expected = (report.per_topic[0].score + report.per_topic[1].score) / 2.0;
        assert!((report.mean - expected).abs() < 1e-15);
    }
}
