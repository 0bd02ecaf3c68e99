//! Fixed-length document vectors: each token contributes its TF-IDF-weighted,
//! posterior-mixed topic embedding, and the document is the average over its
//! tokens. Includes dense and sparse (SVM-style) writers for the vectors.

use std::collections::HashMap;
use std::io::{self, Write};

use crate::corpus::EncodedDocument;
use crate::inference::Inferencer;

/// Inverse document frequencies over a reference corpus (normally the
/// training split): idf(w) = ln(N / df(w)).
#[derive(Debug, Clone)]
pub struct TfidfWeights {
    idf: Vec<f64>,
}

impl TfidfWeights {
    /// Count document frequencies over `docs`. Words that never occur keep
    /// df = 1, i.e. the maximum idf ln(N) — the natural weight for a rare
    /// word met only at query time.
    pub fn from_documents(docs: &[EncodedDocument], vocab_size: usize) -> Self {
        let mut df = vec![0u64; vocab_size];
        for doc in docs {
            let mut seen: Vec<usize> = doc.word_ids.clone();
            seen.sort_unstable();
            seen.dedup();
            for w in seen {
                df[w] += 1;
            }
        }
        let n = docs.len().max(1) as f64;
        let idf = df.iter().map(|&d| (n / d.max(1) as f64).ln()).collect();
        TfidfWeights { idf }
    }

    pub fn idf(&self, word: usize) -> f64 {
        self.idf[word]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocumentVector {
    pub vector: Vec<f64>,
    /// True when the document had no in-vocabulary tokens; the vector is
    /// then all zeros.
    pub empty: bool,
}

/// Average over tokens of tf(w)·idf(w) · Σ_z p(z|w,context) U[w,z], where tf
/// is the raw count of the word within this document and the posterior comes
/// from the token's own context window under `theta`.
pub fn document_vector(
    inferencer: &Inferencer<'_>,
    doc: &EncodedDocument,
    theta: &[f64],
    weights: &TfidfWeights,
) -> DocumentVector {
    let emb = &inferencer.model().embeddings;
    let dim = emb.dim();
    if doc.word_ids.is_empty() {
        return DocumentVector { vector: vec![0.0; dim], empty: true };
    }
    let mut tf: HashMap<usize, f64> = HashMap::new();
    for &w in &doc.word_ids {
        *tf.entry(w).or_insert(0.0) += 1.0;
    }
    let mut acc = vec![0.0; dim];
    for (position, &w) in doc.word_ids.iter().enumerate() {
        let posterior = inferencer.word_topic_posterior(doc, position, theta);
        let weight = tf[&w] * weights.idf(w);
        if weight == 0.0 {
            continue;
        }
        for (z, &p) in posterior.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let u = emb.input(w, z);
            for (a, &x) in acc.iter_mut().zip(u) {
                *a += weight * p * x;
            }
        }
    }
    let inv = 1.0 / doc.word_ids.len() as f64;
    for a in &mut acc {
        *a *= inv;
    }
    DocumentVector { vector: acc, empty: false }
}

/// `label<TAB>v1 v2 … vs` with six decimal places.
pub fn write_dense(out: &mut impl Write, label: &str, vector: &[f64]) -> io::Result<()> {
    write!(out, "{label}\t")?;
    for (i, v) in vector.iter().enumerate() {
        if i > 0 {
            write!(out, " ")?;
        }
        write!(out, "{v:.6}")?;
    }
    writeln!(out)
}

/// `label idx:val …` with 1-based indices, zeros omitted.
pub fn write_sparse(out: &mut impl Write, label: &str, vector: &[f64]) -> io::Result<()> {
    write!(out, "{label}")?;
    for (i, v) in vector.iter().enumerate() {
        if *v != 0.0 {
            write!(out, " {}:{:.6}", i + 1, v)?;
        }
    }
    writeln!(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;
    use crate::model::{uniform_thetas, Model, ModelConfig, TopicEmbeddings, Variant};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn doc(id: usize, words: &[usize]) -> EncodedDocument {
        EncodedDocument { doc_id: id, word_ids: words.to_vec() }
    }

    fn toy_model(words: usize, k: usize, s: usize, seed: u64) -> Model {
        let vocab = Vocabulary::from_entries(
            (0..words).map(|i| (format!("w{i}"), (words - i) as u64)),
        );
        let mut emb = TopicEmbeddings::zeros(words, k, s);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        {
            let (u, v) = emb.raw_mut();
            for x in u.iter_mut().chain(v.iter_mut()) {
                *x = rng.random::<f64>() * 2.0 - 1.0;
            }
        }
        Model::new(Variant::Same, vocab, emb, uniform_thetas(1, k)).unwrap()
    }

    fn config(k: usize, s: usize, window: usize, negatives: usize) -> ModelConfig {
        ModelConfig {
            num_topics: k,
            dim: s,
            window,
            negatives,
            outer_iters: 2,
            inner_iters: 1,
            initial_learning_rate: 0.025,
            variant: Variant::Same,
            seed: 31,
        }
    }

    #[test]
    fn idf_counts_documents_not_tokens() {
        // Word 0 in all four docs, word 1 in two (twice in one of them),
        // word 2 in one, word 3 in none.
        let docs = [
            doc(0, &[0, 1, 1]),
            doc(1, &[0]),
            doc(2, &[0, 1]),
            doc(3, &[0, 2]),
        ];
        let w = TfidfWeights::from_documents(&docs, 4);
        assert_eq!(w.idf(0), 0.0);
        assert!((w.idf(1) - 2.0f64.ln()).abs() < 1e-15);
        assert!((w.idf(2) - 4.0f64.ln()).abs() < 1e-15);
        assert!((w.idf(3) - 4.0f64.ln()).abs() < 1e-15); // unseen → max idf
    }

    #[test]
    fn one_word_document_is_its_weighted_topic_vector() {
        let model = toy_model(4, 2, 3, 1);
        let cfg = config(2, 3, 4, 2);
        let inferencer = Inferencer::new(&model, &cfg);
        let weights = TfidfWeights::from_documents(&[doc(0, &[2]), doc(1, &[0, 1])], 4);
        // A single token has no context, so its posterior is exactly the
        // document prior; a point mass on topic 0 pins the topic choice.
        let result = document_vector(&inferencer, &doc(0, &[2]), &[1.0, 0.0], &weights);
        assert!(!result.empty);
        let idf = weights.idf(2);
        for (got, &u) in result.vector.iter().zip(model.embeddings.input(2, 0)) {
            assert!((got - idf * u).abs() < 1e-12);
        }
    }

    #[test]
    fn point_mass_prior_forces_the_posterior_topic() {
        // With theta = (0, 1) every token's posterior is (0, 1) no matter
        // what the likelihood says, so the vector is a hand-computable
        // average over topic-1 embeddings.
        let model = toy_model(5, 2, 4, 2);
        let cfg = config(2, 4, 8, 3);
        let inferencer = Inferencer::new(&model, &cfg);
        let train = [doc(0, &[0, 1]), doc(1, &[2, 3]), doc(2, &[0, 4])];
        let weights = TfidfWeights::from_documents(&train, 5);
        let target = doc(5, &[0, 3, 0]);
        let result = document_vector(&inferencer, &target, &[0.0, 1.0], &weights);
        let mut expected = vec![0.0; 4];
        for &w in &target.word_ids {
            let tf = if w == 0 { 2.0 } else { 1.0 };
            for (e, &u) in expected.iter_mut().zip(model.embeddings.input(w, 1)) {
                *e += tf * weights.idf(w) * u;
            }
        }
        for e in &mut expected {
            *e /= 3.0;
        }
        for (got, want) in result.vector.iter().zip(&expected) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn single_topic_vector_is_the_tfidf_average() {
        let model = toy_model(4, 1, 3, 3);
        let cfg = config(1, 3, 4, 2);
        let inferencer = Inferencer::new(&model, &cfg);
        let weights = TfidfWeights::from_documents(&[doc(0, &[0, 1]), doc(1, &[2])], 4);
        let target = doc(3, &[1, 2]);
        let result = document_vector(&inferencer, &target, &[1.0], &weights);
        for (d, got) in result.vector.iter().enumerate() {
            let want = (weights.idf(1) * model.embeddings.input(1, 0)[d]
                + weights.idf(2) * model.embeddings.input(2, 0)[d])
                / 2.0;
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_document_maps_to_the_zero_vector() {
        let model = toy_model(3, 2, 5, 4);
        let cfg = config(2, 5, 4, 2);
        let inferencer = Inferencer::new(&model, &cfg);
        let weights = TfidfWeights::from_documents(&[doc(0, &[0, 1])], 3);
        let result = document_vector(&inferencer, &doc(9, &[]), &[0.5, 0.5], &weights);
        assert!(result.empty);
        assert_eq!(result.vector, vec![0.0; 5]);
    }

    #[test]
    fn full_window_vector_ignores_token_order_without_sampling() {
        // With no negative samples the posterior is a deterministic function
        // of the context multiset, so when the window spans the whole
        // document, permuting tokens cannot change the vector.
        let model = toy_model(6, 3, 4, 5);
        let cfg = config(3, 4, 16, 0);
        let inferencer = Inferencer::new(&model, &cfg);
        let train = [doc(0, &[0, 1, 2]), doc(1, &[3, 4, 5])];
        let weights = TfidfWeights::from_documents(&train, 6);
        let theta = [0.5, 0.2, 0.3];
        let base = doc(7, &[0, 2, 4, 1, 5, 0]);
        let shuffled = doc(7, &[5, 0, 1, 4, 0, 2]);
        let a = document_vector(&inferencer, &base, &theta, &weights);
        let b = document_vector(&inferencer, &shuffled, &theta, &weights);
        for (x, y) in a.vector.iter().zip(&b.vector) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn repeated_runs_are_identical() {
        let model = toy_model(6, 2, 3, 6);
        let cfg = config(2, 3, 4, 3);
        let inferencer = Inferencer::new(&model, &cfg);
        let weights = TfidfWeights::from_documents(&[doc(0, &[0, 1, 2, 3])], 6);
        let target = doc(2, &[1, 4, 2, 5]);
        let theta = [0.6, 0.4];
        let a = document_vector(&inferencer, &target, &theta, &weights);
        let b = document_vector(&inferencer, &target, &theta, &weights);
        assert_eq!(a, b);
    }

    #[test]
    fn dense_writer_format() {
        let mut out = Vec::new();
        write_dense(&mut out, "pos", &[1.0, -0.5, 0.000001]).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "pos\t1.000000 -0.500000 0.000001\n");
    }

    #[test]
    fn sparse_writer_skips_zeros_and_is_one_based() {
        let mut out = Vec::new();
        write_sparse(&mut out, "3", &[0.0, 2.5, 0.0, -1.25]).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "3 2:2.500000 4:-1.250000\n");
    }
}
