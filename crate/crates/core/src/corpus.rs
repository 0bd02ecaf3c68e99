//! Corpus ingestion: tokenization, vocabulary construction, the negative
//! sampling distribution, and skip-gram enumeration.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("empty vocabulary: no word occurs at least {min_count} times")]
    EmptyVocabulary { min_count: u64 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Lowercase a line, drop punctuation characters, and split on whitespace.
///
/// Any character that is neither alphanumeric nor whitespace is removed, so
/// "well-known." becomes "wellknown". Tokens that end up empty are dropped.
pub fn tokenize(line: &str) -> Vec<String> {
    let cleaned: String = line
        .chars()
        .flat_map(|ch| {
            if ch.is_alphanumeric() || ch.is_whitespace() {
                Some(ch.to_lowercase())
            } else {
                None
            }
        })
        .flatten()
        .collect();
    cleaned.split_whitespace().map(str::to_owned).collect()
}

/// Read a corpus file: UTF-8 plain text, one document per line.
///
/// Empty lines yield empty documents so document ids stay aligned with line
/// numbers.
pub fn read_corpus(path: impl AsRef<Path>) -> io::Result<Vec<Vec<String>>> {
    let reader = BufReader::new(File::open(path)?);
    let mut docs = Vec::new();
    for line in reader.lines() {
        docs.push(tokenize(&line?));
    }
    Ok(docs)
}

/// Dense word <-> id map with per-word occurrence counts.
///
/// Ids are assigned in descending count order, ties broken lexicographically,
/// so id order is also the canonical dump order.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
    counts: Vec<u64>,
    total_tokens: u64,
}

impl Vocabulary {
    /// Build a vocabulary from tokenized documents, keeping exactly the words
    /// that occur at least `min_count` times.
    pub fn from_documents(docs: &[Vec<String>], min_count: u64) -> Result<Self, CorpusError> {
        let mut raw_counts: HashMap<&str, u64> = HashMap::new();
        for doc in docs {
            for token in doc {
                *raw_counts.entry(token.as_str()).or_insert(0) += 1;
            }
        }
        let mut retained: Vec<(&str, u64)> = raw_counts
            .into_iter()
            .filter(|&(_, c)| c >= min_count)
            .collect();
        if retained.is_empty() {
            return Err(CorpusError::EmptyVocabulary { min_count });
        }
        retained.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut vocab = Vocabulary {
            tokens: Vec::with_capacity(retained.len()),
            ids: HashMap::with_capacity(retained.len()),
            counts: Vec::with_capacity(retained.len()),
            total_tokens: 0,
        };
        for (word, count) in retained {
            vocab.push_entry(word.to_owned(), count);
        }
        Ok(vocab)
    }

    /// Reassemble a vocabulary from (word, count) pairs in id order, e.g. when
    /// loading a model file. Counts are taken as-is.
    pub fn from_entries(entries: impl IntoIterator<Item = (String, u64)>) -> Self {
        let mut vocab = Vocabulary {
            tokens: Vec::new(),
            ids: HashMap::new(),
            counts: Vec::new(),
            total_tokens: 0,
        };
        for (word, count) in entries {
            vocab.push_entry(word, count);
        }
        vocab
    }

    fn push_entry(&mut self, word: String, count: u64) {
        self.ids.insert(word.clone(), self.tokens.len());
        self.tokens.push(word);
        self.counts.push(count);
        self.total_tokens += count;
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.ids.get(word).copied()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn count(&self, id: usize) -> u64 {
        self.counts[id]
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    /// Iterate (word, count) in id order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, u64)> + '_ {
        self.tokens
            .iter()
            .zip(self.counts.iter())
            .map(|(w, &c)| (w.as_str(), c))
    }

    /// Encode a tokenized document, dropping out-of-vocabulary tokens.
    pub fn encode<S: AsRef<str>>(&self, doc_id: usize, tokens: &[S]) -> EncodedDocument {
        let word_ids = tokens
            .iter()
            .filter_map(|t| self.id(t.as_ref()))
            .collect();
        EncodedDocument { doc_id, word_ids }
    }

    /// Encode every document of a corpus, preserving document ids.
    pub fn encode_corpus(&self, docs: &[Vec<String>]) -> Vec<EncodedDocument> {
        docs.iter()
            .enumerate()
            .map(|(i, doc)| self.encode(i, doc))
            .collect()
    }

    /// Write the dump format: `word<TAB>count` per line, descending count.
    pub fn write_counts(&self, mut w: impl Write) -> io::Result<()> {
        for (word, count) in self.entries() {
            writeln!(w, "{word}\t{count}")?;
        }
        Ok(())
    }
}

/// A document as a sequence of retained word ids, order preserved.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDocument {
    pub doc_id: usize,
    pub word_ids: Vec<usize>,
}

impl EncodedDocument {
    pub fn len(&self) -> usize {
        self.word_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word_ids.is_empty()
    }
}

/// One ordered (center, context) pair; `position` is the center's index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SkipGram {
    pub center: usize,
    pub context: usize,
    pub position: usize,
}

/// Enumerate every skip-gram of `doc` with the given window, clipped to the
/// document bounds: position ascending, context offset ascending.
pub fn skipgrams(doc: &EncodedDocument, window: usize) -> impl Iterator<Item = SkipGram> + '_ {
    let len = doc.word_ids.len();
    (0..len).flat_map(move |t| {
        let lo = t.saturating_sub(window);
        let hi = (t + window).min(len.saturating_sub(1));
        (lo..=hi).filter(move |&u| u != t).map(move |u| SkipGram {
            center: doc.word_ids[t],
            context: doc.word_ids[u],
            position: t,
        })
    })
}

/// Number of skip-grams a document of length `len` yields with `window`.
pub fn skipgram_count(len: usize, window: usize) -> u64 {
    (0..len)
        .map(|t| (t.min(window) + (len - 1 - t).min(window)) as u64)
        .sum()
}

/// Unigram distribution raised to the 3/4 power, sampled by binary search
/// over cumulative weights.
#[derive(Debug, Clone)]
pub struct NegativeSamplingDistribution {
    cumulative: Vec<f64>,
}

impl NegativeSamplingDistribution {
    pub fn new(vocab: &Vocabulary) -> Self {
        let mut cumulative = Vec::with_capacity(vocab.len());
        let mut acc = 0.0;
        for id in 0..vocab.len() {
            acc += (vocab.count(id) as f64).powf(0.75);
            cumulative.push(acc);
        }
        NegativeSamplingDistribution { cumulative }
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    /// Analytic sampling probability of a word id.
    pub fn probability(&self, id: usize) -> f64 {
        let total = *self.cumulative.last().expect("non-empty distribution");
        let prev = if id == 0 { 0.0 } else { self.cumulative[id - 1] };
        (self.cumulative[id] - prev) / total
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("non-empty distribution");
        let x = rng.random::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= x).min(self.cumulative.len() - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn docs(raw: &[&[&str]]) -> Vec<Vec<String>> {
        raw.iter()
            .map(|d| d.iter().map(|s| s.to_string()).collect())
            .collect()
    }

    #[test]
    fn vocabulary_counts_and_ids() {
        let v = Vocabulary::from_documents(&docs(&[&["a", "a", "b"]]), 1).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.id("a"), Some(0));
        assert_eq!(v.id("b"), Some(1));
        assert_eq!(v.count(0), 2);
        assert_eq!(v.count(1), 1);
        assert_eq!(v.total_tokens(), 3);
    }

    #[test]
    fn vocabulary_min_count_drops_words() {
        let v = Vocabulary::from_documents(&docs(&[&["a", "a", "b"]]), 2).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v.id("a"), Some(0));
        assert_eq!(v.id("b"), None);
    }

    #[test]
    fn vocabulary_tie_break_is_lexicographic() {
        let v = Vocabulary::from_documents(&docs(&[&["b", "a", "c", "a"]]), 1).unwrap();
        assert_eq!(v.id("a"), Some(0));
        assert_eq!(v.id("b"), Some(1));
        assert_eq!(v.id("c"), Some(2));
    }

    #[test]
    fn empty_vocabulary_is_an_error() {
        let err = Vocabulary::from_documents(&docs(&[&["a"]]), 2).unwrap_err();
        assert!(matches!(err, CorpusError::EmptyVocabulary { min_count: 2 }));
    }

    #[test]
    fn min_count_holds_on_random_corpus() {
        // Brute-force recount of every retained word.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let words: Vec<String> = (0..50).map(|i| format!("w{i}")).collect();
        let corpus: Vec<Vec<String>> = (0..200)
            .map(|_| {
                (0..rng.random_range(1..30))
                    .map(|_| words[rng.random_range(0..words.len())].clone())
                    .collect()
            })
            .collect();
        let v = Vocabulary::from_documents(&corpus, 5).unwrap();
        for id in 0..v.len() {
            let word = v.word(id);
            let recount = corpus
                .iter()
                .flatten()
                .filter(|t| t.as_str() == word)
                .count() as u64;
            assert_eq!(recount, v.count(id));
            assert!(recount >= 5);
        }
        // And no dropped word actually reaches the threshold.
        for word in &words {
            if v.id(word).is_none() {
                let recount = corpus.iter().flatten().filter(|t| *t == word).count();
                assert!(recount < 5);
            }
        }
    }

    #[test]
    fn tokenize_lowercases_and_strips_punctuation() {
        assert_eq!(tokenize("Hello, World!"), vec!["hello", "world"]);
        assert_eq!(tokenize("well-known."), vec!["wellknown"]);
        assert_eq!(tokenize("  —  "), Vec::<String>::new());
    }

    #[test]
    fn encode_decode_round_trip() {
        let corpus = docs(&[&["a", "b", "a", "zz", "c"]]);
        let v = Vocabulary::from_documents(&corpus, 1).unwrap();
        let enc = v.encode(0, &corpus[0]);
        let decoded: Vec<&str> = enc.word_ids.iter().map(|&id| v.word(id)).collect();
        assert_eq!(decoded, vec!["a", "b", "a", "zz", "c"]);
    }

    #[test]
    fn encode_drops_unknown_tokens() {
        let corpus = docs(&[&["a", "a", "b"]]);
        let v = Vocabulary::from_documents(&corpus, 2).unwrap();
        let enc = v.encode(3, &["a", "b", "a"]);
        assert_eq!(enc.doc_id, 3);
        assert_eq!(enc.word_ids, vec![0, 0]);
    }

    #[test]
    fn negative_distribution_single_word() {
        let v = Vocabulary::from_documents(&docs(&[&["a"]]), 1).unwrap();
        let d = NegativeSamplingDistribution::new(&v);
        assert_eq!(d.probability(0), 1.0);
    }

    #[test]
    fn negative_distribution_matches_count_power() {
        // counts {a:3, b:1}: P(a) = 3^0.75 / (3^0.75 + 1)
        let v = Vocabulary::from_documents(&docs(&[&["a", "a", "a", "b"]]), 1).unwrap();
        let d = NegativeSamplingDistribution::new(&v);
        let expected = 3f64.powf(0.75) / (3f64.powf(0.75) + 1.0);
        assert!((d.probability(0) - expected).abs() < 1e-12);
        assert!((expected - 0.6951).abs() < 1e-4);

        // counts {a:16, b:1}: 16^0.75 = 8, so P(a) = 8/9
        let mut doc = vec!["a"; 16];
        doc.push("b");
        let v = Vocabulary::from_documents(&docs(&[&doc]), 1).unwrap();
        let d = NegativeSamplingDistribution::new(&v);
        assert!((d.probability(0) - 8.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn negative_sampler_empirical_marginal() {
        // 10-word vocabulary, 10^6 draws, within 1% absolute per word.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let corpus: Vec<Vec<String>> = vec![(0..10)
            .flat_map(|i| std::iter::repeat_n(format!("w{i}"), (i + 1) * 3))
            .collect()];
        let v = Vocabulary::from_documents(&corpus, 1).unwrap();
        let d = NegativeSamplingDistribution::new(&v);
        let n = 1_000_000usize;
        let mut hits = vec![0u64; v.len()];
        for _ in 0..n {
            hits[d.sample(&mut rng)] += 1;
        }
        for (id, &h) in hits.iter().enumerate() {
            let empirical = h as f64 / n as f64;
            assert!(
                (empirical - d.probability(id)).abs() < 0.01,
                "word {id}: empirical {empirical} vs analytic {}",
                d.probability(id)
            );
        }
    }

    #[test]
    fn skipgrams_two_token_document() {
        let doc = EncodedDocument { doc_id: 0, word_ids: vec![4, 9] };
        let pairs: Vec<(usize, usize)> = skipgrams(&doc, 1)
            .map(|sg| (sg.center, sg.context))
            .collect();
        assert_eq!(pairs, vec![(4, 9), (9, 4)]);
    }

    #[test]
    fn skipgrams_single_token_is_empty() {
        let doc = EncodedDocument { doc_id: 0, word_ids: vec![1] };
        assert_eq!(skipgrams(&doc, 5).count(), 0);
        let empty = EncodedDocument { doc_id: 0, word_ids: vec![] };
        assert_eq!(skipgrams(&empty, 5).count(), 0);
    }

    #[test]
    fn skipgrams_clip_to_bounds() {
        let doc = EncodedDocument { doc_id: 0, word_ids: vec![0, 1, 2, 3, 4] };
        assert_eq!(skipgrams(&doc, 2).count(), 14);
        assert_eq!(skipgram_count(5, 2), 14);
    }

    #[test]
    fn skipgram_count_matches_enumeration() {
        // Brute-force window enumeration across lengths and window sizes.
        for len in 0..12usize {
            let doc = EncodedDocument { doc_id: 0, word_ids: (0..len).collect() };
            for window in 1..6usize {
                let mut brute = 0u64;
                for t in 0..len as i64 {
                    for j in -(window as i64)..=(window as i64) {
                        let u = t + j;
                        if j != 0 && u >= 0 && u < len as i64 {
                            brute += 1;
                        }
                    }
                }
                assert_eq!(skipgrams(&doc, window).count() as u64, brute);
                assert_eq!(skipgram_count(len, window), brute);
            }
        }
    }

    #[test]
    fn skipgram_order_is_deterministic() {
        let doc = EncodedDocument { doc_id: 0, word_ids: vec![10, 11, 12] };
        let got: Vec<SkipGram> = skipgrams(&doc, 2).collect();
        let expected = [
            (10, 11, 0),
            (10, 12, 0),
            (11, 10, 1),
            (11, 12, 1),
            (12, 10, 2),
            (12, 11, 2),
        ];
        let expected: Vec<SkipGram> = expected
            .iter()
            .map(|&(center, context, position)| SkipGram { center, context, position })
            .collect();
        assert_eq!(got, expected);
    }
}
