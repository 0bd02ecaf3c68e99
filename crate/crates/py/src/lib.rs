//! Python bindings over the core crate: train a model, fold in new
//! documents, query nearest neighbors and contextual similarity, build
//! document vectors, and rank topic bigrams — all from Python.
//!
//! `cargo build -p ste-py` produces `target/debug/libste_py.so`, which
//! imports as the module `ste_py` once it is on the import path under that
//! name (python/smoke_test.py copies and renames it). The `extension-module`
//! feature defers Python symbol resolution to the loading interpreter, for
//! wheel-style packaging; the default build links the system libpython so
//! ordinary cargo builds and test binaries work unchanged.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use ste_core::corpus::Vocabulary;
use ste_core::inference::Inferencer;
use ste_core::model::{Model, ModelConfig, ModelError};
use ste_core::similarity::{ContextualMetric, ContextualWord};
use ste_core::trainer::TrainOptions;
use ste_core::{corpus, docrep, similarity, topics, trainer};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn model_err(e: ModelError) -> PyErr {
    match e {
        ModelError::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// `(position, word, topic posterior, prior_only)` for one in-vocabulary
/// token of a folded-in document.
type TokenPosterior = (usize, String, Vec<f64>, bool);

/// A trained model together with the inference settings (window,
/// negative-sample count, seed, fold-in iteration count) that every
/// posterior computation reuses.
#[pyclass(name = "Model", module = "ste_py")]
struct PyModel {
    model: Model,
    config: ModelConfig,
}

impl PyModel {
    fn inferencer(&self, fold_iters: Option<usize>) -> Inferencer<'_> {
        let inferencer = Inferencer::new(&self.model, &self.config);
        match fold_iters {
            Some(n) => inferencer.with_fold_iters(n),
            None => inferencer,
        }
    }

    fn require_topic(&self, topic: usize) -> PyResult<()> {
        let k = self.model.num_topics();
        if topic >= k {
            return Err(PyValueError::new_err(format!(
                "topic {topic} out of range (model has {k} topics)"
            )));
        }
        Ok(())
    }

    fn require_word(&self, word: &str) -> PyResult<usize> {
        self.model
            .vocab
            .id(word)
            .ok_or_else(|| PyValueError::new_err(format!("word {word:?} not in vocabulary")))
    }
}

#[pymethods]
impl PyModel {
    #[getter]
    fn num_topics(&self) -> usize {
        self.model.num_topics()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.model.dim()
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.model.vocab.len()
    }

    #[getter]
    fn num_documents(&self) -> usize {
        self.model.thetas.len()
    }

    /// "same" or "diff".
    #[getter]
    fn variant(&self) -> &'static str {
        self.model.variant.as_str()
    }

    /// All vocabulary words, ordered by id.
    fn vocab(&self) -> Vec<String> {
        (0..self.model.vocab.len())
            .map(|id| self.model.vocab.word(id).to_owned())
            .collect()
    }

    /// Vocabulary id of `word`, or None when out of vocabulary.
    fn word_id(&self, word: &str) -> Option<usize> {
        self.model.vocab.id(word)
    }

    /// Corpus frequency of `word`.
    fn word_count(&self, word: &str) -> PyResult<u64> {
        Ok(self.model.vocab.count(self.require_word(word)?))
    }

    /// Topic distribution of training document `doc`.
    fn theta(&self, doc: usize) -> PyResult<Vec<f64>> {
        self.model
            .thetas
            .get(doc)
            .cloned()
            .ok_or_else(|| {
                PyValueError::new_err(format!(
                    "document {doc} out of range (model covers {})",
                    self.model.thetas.len()
                ))
            })
    }

    /// Topic distributions of every training document.
    fn thetas(&self) -> Vec<Vec<f64>> {
        self.model.thetas.clone()
    }

    /// Input (center-word) embedding of `word` under `topic`.
    fn input_vector(&self, word: &str, topic: usize) -> PyResult<Vec<f64>> {
        self.require_topic(topic)?;
        let id = self.require_word(word)?;
        Ok(self.model.embeddings.input(id, topic).to_vec())
    }

    /// Output (context-word) embedding of `word` under `topic`.
    fn output_vector(&self, word: &str, topic: usize) -> PyResult<Vec<f64>> {
        self.require_topic(topic)?;
        let id = self.require_word(word)?;
        Ok(self.model.embeddings.output(id, topic).to_vec())
    }

    /// Serialize the model (embeddings, vocabulary, thetas) to `path`.
    fn save(&self, path: &str) -> PyResult<()> {
        self.model.save(path).map_err(model_err)
    }

    /// Load a model saved with [`save`]. Inference settings are not part of
    /// the file, so pass the ones training used; `fold_iters` falls back to
    /// the training default when omitted.
    #[staticmethod]
    #[pyo3(signature = (path, *, window=10, negatives=8, fold_iters=None, seed=1))]
    fn load(
        path: &str,
        window: usize,
        negatives: usize,
        fold_iters: Option<usize>,
        seed: u64,
    ) -> PyResult<Self> {
        let model = Model::load(path).map_err(model_err)?;
        let defaults = ModelConfig::default();
        let config = ModelConfig {
            num_topics: model.num_topics(),
            dim: model.dim(),
            window,
            negatives,
            outer_iters: fold_iters.unwrap_or(defaults.outer_iters),
            variant: model.variant,
            seed,
            ..defaults
        };
        Ok(PyModel { model, config })
    }

    /// Re-estimate a new document's topic distribution with embeddings
    /// frozen. Returns `(theta, posteriors)` where each posterior is
    /// `(position, word, probs, prior_only)` for one in-vocabulary token;
    /// `prior_only` marks tokens whose window carried no usable evidence.
    /// `doc_id` keys the sampling streams, so equal ids reproduce exactly.
    #[pyo3(signature = (tokens, *, doc_id=0, fold_iters=None))]
    fn fold_in(
        &self,
        tokens: Vec<String>,
        doc_id: usize,
        fold_iters: Option<usize>,
    ) -> PyResult<(Vec<f64>, Vec<TokenPosterior>)> {
        let doc = self.model.vocab.encode(doc_id, &tokens);
        let fold = self.inferencer(fold_iters).fold_in(&doc).map_err(value_err)?;
        let posteriors = fold
            .word_posteriors
            .into_iter()
            .map(|wp| {
                (wp.position, self.model.vocab.word(wp.word).to_owned(), wp.probs, wp.prior_only)
            })
            .collect();
        Ok((fold.theta, posteriors))
    }

    /// Closest `(word, topic, cosine)` entries to `word`'s input embedding
    /// under `topic`, best first. Under "same" only the query topic's
    /// subspace is searched; under "diff" every (word, topic) pair competes.
    #[pyo3(signature = (word, topic, *, top_k=10))]
    fn nearest_neighbors(
        &self,
        word: &str,
        topic: usize,
        top_k: usize,
    ) -> PyResult<Vec<(String, usize, f64)>> {
        self.require_topic(topic)?;
        let neighbors =
            similarity::nearest_neighbors(&self.model, word, topic, top_k).map_err(value_err)?;
        Ok(neighbors
            .into_iter()
            .map(|n| (self.model.vocab.word(n.word).to_owned(), n.topic, n.cosine))
            .collect())
    }

    /// Similarity of two words in context: each token list is folded in as
    /// its own document, the target's topic posterior is read off at its
    /// first in-vocabulary occurrence, and the posteriors weight cosines
    /// between topic embeddings. `metric` is "avgsimc" (posterior-weighted
    /// average) or "maxsimc" (cosine under each side's dominant topic).
    #[pyo3(signature = (tokens_a, word_a, tokens_b, word_b, *, metric="avgsimc", fold_iters=None))]
    #[allow(clippy::too_many_arguments)]
    fn contextual_similarity(
        &self,
        tokens_a: Vec<String>,
        word_a: &str,
        tokens_b: Vec<String>,
        word_b: &str,
        metric: &str,
        fold_iters: Option<usize>,
    ) -> PyResult<f64> {
        let metric: ContextualMetric = metric.parse().map_err(value_err)?;
        let inferencer = self.inferencer(fold_iters);
        let mut sides = Vec::with_capacity(2);
        for (doc_id, (tokens, word)) in
            [(tokens_a, word_a), (tokens_b, word_b)].iter().enumerate()
        {
            let target = self.require_word(word)?;
            let doc = self.model.vocab.encode(doc_id, tokens);
            let position = doc.word_ids.iter().position(|&w| w == target).ok_or_else(|| {
                PyValueError::new_err(format!("word {word:?} does not occur in its token list"))
            })?;
            let fold = inferencer.fold_in(&doc).map_err(value_err)?;
            sides.push(ContextualWord::infer(&inferencer, &doc, position, &fold.theta));
        }
        let (b, a) = (sides.pop().unwrap(), sides.pop().unwrap());
        Ok(match metric {
            ContextualMetric::AvgSimC => similarity::avg_sim_c(&self.model.embeddings, &a, &b),
            ContextualMetric::MaxSimC => similarity::max_sim_c(&self.model.embeddings, &a, &b),
        })
    }

    /// Fixed-length vectors for `docs`: each is the average over tokens of
    /// tf·idf-weighted, posterior-mixed input embeddings, after folding the
    /// document in. The idf statistics come from `docs` itself. Documents
    /// with no in-vocabulary tokens map to zero vectors.
    #[pyo3(signature = (docs, *, fold_iters=None))]
    fn document_vectors(
        &self,
        docs: Vec<Vec<String>>,
        fold_iters: Option<usize>,
    ) -> PyResult<Vec<Vec<f64>>> {
        let encoded = self.model.vocab.encode_corpus(&docs);
        let weights = docrep::TfidfWeights::from_documents(&encoded, self.model.vocab.len());
        let inferencer = self.inferencer(fold_iters);
        let mut vectors = Vec::with_capacity(encoded.len());
        for doc in &encoded {
            if doc.is_empty() {
                vectors.push(vec![0.0; self.model.dim()]);
                continue;
            }
            let fold = inferencer.fold_in(doc).map_err(value_err)?;
            vectors.push(docrep::document_vector(&inferencer, doc, &fold.theta, &weights).vector);
        }
        Ok(vectors)
    }

    /// Top bigrams of `docs` under `topic`, as `(first, second, score,
    /// count)` with score = log σ(V[second]·U[first]) in that topic's
    /// subspace. Only adjacent pairs seen at least `min_freq` times count.
    #[pyo3(signature = (docs, topic, *, top_n=10, min_freq=5))]
    fn topic_bigrams(
        &self,
        docs: Vec<Vec<String>>,
        topic: usize,
        top_n: usize,
        min_freq: u64,
    ) -> PyResult<Vec<(String, String, f64, u64)>> {
        self.require_topic(topic)?;
        let encoded = self.model.vocab.encode_corpus(&docs);
        let bigrams = topics::collect_bigrams(&encoded, min_freq);
        let ranking = topics::rank_topic_bigrams(
            &self.model.embeddings,
            &self.model.vocab,
            &bigrams,
            topic,
            top_n,
        );
        Ok(ranking
            .entries
            .into_iter()
            .map(|b| {
                (
                    self.model.vocab.word(b.first).to_owned(),
                    self.model.vocab.word(b.second).to_owned(),
                    b.score,
                    b.count,
                )
            })
            .collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(variant=\"{}\", topics={}, dim={}, vocab={}, documents={})",
            self.model.variant,
            self.model.num_topics(),
            self.model.dim(),
            self.model.vocab.len(),
            self.model.thetas.len(),
        )
    }
}

/// Train a model on tokenized documents. The vocabulary keeps words seen at
/// least `min_count` times; out-of-vocabulary tokens are dropped. With
/// `threads=1` training is deterministic in `seed`; more threads shard
/// documents and race on embedding rows, trading reproducibility for speed.
#[pyfunction]
#[pyo3(signature = (docs, *, num_topics=10, dim=400, window=10, negatives=8,
    outer_iters=15, inner_iters=15, learning_rate=0.025, variant="same",
    seed=1, min_count=5, threads=1))]
#[allow(clippy::too_many_arguments)]
fn train(
    docs: Vec<Vec<String>>,
    num_topics: usize,
    dim: usize,
    window: usize,
    negatives: usize,
    outer_iters: usize,
    inner_iters: usize,
    learning_rate: f64,
    variant: &str,
    seed: u64,
    min_count: u64,
    threads: usize,
) -> PyResult<PyModel> {
    let config = ModelConfig {
        num_topics,
        dim,
        window,
        negatives,
        outer_iters,
        inner_iters,
        initial_learning_rate: learning_rate,
        variant: variant.parse().map_err(value_err)?,
        seed,
    };
    let vocab = Vocabulary::from_documents(&docs, min_count).map_err(value_err)?;
    let encoded = vocab.encode_corpus(&docs);
    let options = TrainOptions { threads, freeze_embeddings: false };
    let (model, _) =
        trainer::train(&encoded, vocab, &config, &options, |_| {}).map_err(value_err)?;
    Ok(PyModel { model, config })
}

/// Lowercase and split `line` the same way corpus loading does: punctuation
/// is stripped, alphanumeric runs become tokens.
#[pyfunction]
fn tokenize(line: &str) -> Vec<String> {
    corpus::tokenize(line)
}

/// Spearman rank correlation of two equally long score lists; ties receive
/// averaged ranks.
#[pyfunction]
fn spearman(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    similarity::spearman(&x, &y).map_err(value_err)
}

#[pymodule]
fn ste_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    Ok(())
}
