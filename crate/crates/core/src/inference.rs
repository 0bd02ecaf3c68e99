//! Inference over a trained model with frozen embeddings: fold-in of unseen
//! documents (re-estimating only the document's topic distribution) and
//! per-word topic posteriors conditioned on the surrounding context.

use thiserror::Error;

use crate::corpus::{skipgrams, EncodedDocument, NegativeSamplingDistribution};
use crate::model::{Model, ModelConfig, Variant};
use crate::trainer::{
    derived_rng, estep_posterior, normalize_log_masses, pair_log_prob_diff, pair_log_prob_same,
    training_negative_stream, NegativeBatch, ThetaAccumulator, STREAM_WORD_POSTERIOR,
};

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("document {doc_id} has no in-vocabulary tokens to infer from")]
    UntypableDocument { doc_id: usize },
}

/// Topic posterior of a single token given its context window.
#[derive(Debug, Clone, PartialEq)]
pub struct WordPosterior {
    pub position: usize,
    pub word: usize,
    pub probs: Vec<f64>,
    /// True when no context word informed this posterior (empty window, or
    /// all evidence underflowed): `probs` is then just the document prior.
    pub prior_only: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldInResult {
    pub theta: Vec<f64>,
    pub word_posteriors: Vec<WordPosterior>,
}

/// Fold-in engine: borrows a trained model, owns the sampling distribution
/// and the inference hyperparameters. Everything here is read-only over the
/// model, so one `Inferencer` can serve many documents (or threads).
pub struct Inferencer<'a> {
    model: &'a Model,
    window: usize,
    negatives: usize,
    seed: u64,
    fold_iters: usize,
    dist: NegativeSamplingDistribution,
}

impl<'a> Inferencer<'a> {
    /// The variant always follows the model; window, negative count, seed and
    /// iteration count are taken from `config` (fold-in reuses `outer_iters`
    /// unless overridden with [`with_fold_iters`](Self::with_fold_iters)).
    pub fn new(model: &'a Model, config: &ModelConfig) -> Self {
        Inferencer {
            model,
            window: config.window,
            negatives: config.negatives,
            seed: config.seed,
            fold_iters: config.outer_iters,
            dist: NegativeSamplingDistribution::new(&model.vocab),
        }
    }

    pub fn with_fold_iters(mut self, fold_iters: usize) -> Self {
        self.fold_iters = fold_iters;
        self
    }

    pub fn model(&self) -> &Model {
        self.model
    }

    /// Re-estimate a new document's topic distribution with the embeddings
    /// frozen: the EM loop of training, minus every parameter update,
    /// starting from a uniform theta. Deterministic given (model, document,
    /// seed); the document's `doc_id` keys its sampling streams.
    pub fn fold_in(&self, doc: &EncodedDocument) -> Result<FoldInResult, InferenceError> {
        if doc.is_empty() {
            return Err(InferenceError::UntypableDocument { doc_id: doc.doc_id });
        }
        let k = self.model.num_topics();
        let mut theta = vec![1.0 / k as f64; k];
        // A single-token document yields no skip-grams: the prior stands.
        if doc.len() >= 2 {
            for iter in 0..self.fold_iters {
                let mut rng = training_negative_stream(self.seed, iter, doc.doc_id);
                let mut acc = ThetaAccumulator::new(k);
                for sg in skipgrams(doc, self.window) {
                    let batch = NegativeBatch::sample(&self.dist, self.negatives, &mut rng);
                    let estep = estep_posterior(
                        &self.model.embeddings,
                        self.model.variant,
                        sg.center,
                        sg.context,
                        &theta,
                        &batch,
                    );
                    acc.accumulate(&estep.posterior, 1.0);
                }
                if let Some(updated) = acc.finalize() {
                    theta = updated;
                }
            }
        }
        let word_posteriors = (0..doc.len())
            .map(|position| self.word_topic_posterior(doc, position, &theta))
            .collect();
        Ok(FoldInResult { theta, word_posteriors })
    }

    /// Topic posterior of the token at `position`: the document prior times
    /// the sampled likelihood of every context word in the window, normalized
    /// over topics in log space.
    ///
    /// Negatives are drawn once per context word from a stream keyed by
    /// (document, position), so repeated evaluation is identical. Under the
    /// `Diff` variant each context word's own topic is unobserved and gets
    /// marginalized out under the document prior.
    pub fn word_topic_posterior(
        &self,
        doc: &EncodedDocument,
        position: usize,
        theta: &[f64],
    ) -> WordPosterior {
        let k = self.model.num_topics();
        let emb = &self.model.embeddings;
        let center = doc.word_ids[position];
        let lo = position.saturating_sub(self.window);
        let hi = (position + self.window).min(doc.len() - 1);

        let mut rng = derived_rng(
            self.seed,
            STREAM_WORD_POSTERIOR,
            doc.doc_id as u64,
            position as u64,
        );
        let contexts: Vec<(usize, NegativeBatch)> = (lo..=hi)
            .filter(|&u| u != position)
            .map(|u| {
                (doc.word_ids[u], NegativeBatch::sample(&self.dist, self.negatives, &mut rng))
            })
            .collect();
        if contexts.is_empty() {
            return WordPosterior {
                position,
                word: center,
                probs: theta.to_vec(),
                prior_only: true,
            };
        }

        let mut masses: Vec<f64> = (0..k)
            .map(|z| {
                let mut lp = theta[z].ln();
                for (context, batch) in &contexts {
                    lp += match self.model.variant {
                        Variant::Same => {
                            pair_log_prob_same(emb, center, *context, z, &batch.negatives)
                        }
                        Variant::Diff => {
                            // log Σ_{z_ctx} theta[z_ctx] · p̂(context | center, z, z_ctx)
                            let terms: Vec<f64> = (0..k)
                                .map(|zx| {
                                    theta[zx].ln()
                                        + pair_log_prob_diff(
                                            emb, center, *context, z, zx, &batch.negatives,
                                        )
                                })
                                .collect();
                            log_sum_exp(&terms)
                        }
                    };
                }
                lp
            })
            .collect();

        if normalize_log_masses(&mut masses) {
            WordPosterior { position, word: center, probs: masses, prior_only: false }
        } else {
            WordPosterior { position, word: center, probs: theta.to_vec(), prior_only: true }
        }
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;
    use crate::model::{uniform_thetas, TopicEmbeddings};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_model(words: usize, k: usize, s: usize, variant: Variant, seed: u64) -> Model {
        let vocab = Vocabulary::from_entries((0..words).map(|i| (format!("w{i}"), 10 - i as u64)));
        let mut emb = TopicEmbeddings::zeros(words, k, s);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        {
            let (u, v) = emb.raw_mut();
            for x in u.iter_mut().chain(v.iter_mut()) {
                *x = rng.random::<f64>() * 2.0 - 1.0;
            }
        }
        Model::new(variant, vocab, emb, uniform_thetas(1, k)).unwrap()
    }

    fn config(k: usize, s: usize, variant: Variant) -> ModelConfig {
        ModelConfig {
            num_topics: k,
            dim: s,
            window: 2,
            negatives: 2,
            outer_iters: 5,
            inner_iters: 1,
            initial_learning_rate: 0.025,
            variant,
            seed: 13,
        }
    }

    #[test]
    fn empty_document_is_untypable() {
        let model = toy_model(5, 2, 3, Variant::Same, 1);
        let inf = Inferencer::new(&model, &config(2, 3, Variant::Same));
        let doc = EncodedDocument { doc_id: 7, word_ids: vec![] };
        let err = inf.fold_in(&doc).unwrap_err();
        assert!(matches!(err, InferenceError::UntypableDocument { doc_id: 7 }));
    }

    #[test]
    fn single_topic_theta_is_immediate() {
        let model = toy_model(5, 1, 3, Variant::Same, 2);
        let inf = Inferencer::new(&model, &config(1, 3, Variant::Same));
        let doc = EncodedDocument { doc_id: 0, word_ids: vec![0, 1, 2, 3] };
        let result = inf.fold_in(&doc).unwrap();
        assert_eq!(result.theta, vec![1.0]);
        for wp in &result.word_posteriors {
            assert_eq!(wp.probs, vec![1.0]);
        }
    }

    #[test]
    fn single_token_document_keeps_uniform_prior() {
        let model = toy_model(5, 4, 3, Variant::Same, 3);
        let inf = Inferencer::new(&model, &config(4, 3, Variant::Same));
        let doc = EncodedDocument { doc_id: 1, word_ids: vec![2] };
        let result = inf.fold_in(&doc).unwrap();
        assert_eq!(result.theta, vec![0.25; 4]);
        assert_eq!(result.word_posteriors.len(), 1);
        assert!(result.word_posteriors[0].prior_only);
        assert_eq!(result.word_posteriors[0].probs, vec![0.25; 4]);
    }

    #[test]
    fn fold_in_is_deterministic() {
        for variant in [Variant::Same, Variant::Diff] {
            let model = toy_model(6, 3, 4, variant, 4);
            let inf = Inferencer::new(&model, &config(3, 4, variant));
            let doc = EncodedDocument { doc_id: 5, word_ids: vec![0, 3, 1, 4, 2, 0] };
            assert_eq!(inf.fold_in(&doc).unwrap(), inf.fold_in(&doc).unwrap());
        }
    }

    #[test]
    fn fold_in_outputs_are_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        for variant in [Variant::Same, Variant::Diff] {
            for trial in 0..20 {
                let model = toy_model(8, 3, 4, variant, 100 + trial);
                let inf = Inferencer::new(&model, &config(3, 4, variant));
                let len = rng.random_range(2..12);
                let doc = EncodedDocument {
                    doc_id: trial as usize,
                    word_ids: (0..len).map(|_| rng.random_range(0..8)).collect(),
                };
                let result = inf.fold_in(&doc).unwrap();
                assert!((result.theta.iter().sum::<f64>() - 1.0).abs() < 1e-10);
                assert!(result.theta.iter().all(|&x| x >= 0.0));
                assert_eq!(result.word_posteriors.len(), doc.len());
                for wp in &result.word_posteriors {
                    assert!((wp.probs.iter().sum::<f64>() - 1.0).abs() < 1e-10);
                    assert!(!wp.prior_only);
                }
            }
        }
    }

    #[test]
    fn degenerate_prior_pins_word_posterior() {
        let model = toy_model(5, 2, 3, Variant::Same, 6);
        let inf = Inferencer::new(&model, &config(2, 3, Variant::Same));
        let doc = EncodedDocument { doc_id: 0, word_ids: vec![0, 1, 2] };
        let wp = inf.word_topic_posterior(&doc, 1, &[1.0, 0.0]);
        assert_eq!(wp.probs, vec![1.0, 0.0]);
    }

    #[test]
    fn zero_embeddings_word_posterior_equals_theta() {
        for variant in [Variant::Same, Variant::Diff] {
            let vocab = Vocabulary::from_entries((0..4).map(|i| (format!("w{i}"), 5)));
            let emb = TopicEmbeddings::zeros(4, 3, 2);
            let model = Model::new(variant, vocab, emb, vec![]).unwrap();
            let inf = Inferencer::new(&model, &config(3, 2, variant));
            let doc = EncodedDocument { doc_id: 0, word_ids: vec![0, 1, 2, 3] };
            let theta = [0.5, 0.3, 0.2];
            let wp = inf.word_topic_posterior(&doc, 2, &theta);
            assert!(!wp.prior_only);
            for (p, t) in wp.probs.iter().zip(&theta) {
                assert!((p - t).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn raising_prior_mass_never_lowers_posterior() {
        // Fixed likelihoods (Same variant; the context and negatives are
        // pinned by the derived stream), prior tilted toward one topic.
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for trial in 0..30 {
            let model = toy_model(8, 3, 4, Variant::Same, 300 + trial);
            let inf = Inferencer::new(&model, &config(3, 4, Variant::Same));
            let doc = EncodedDocument {
                doc_id: trial as usize,
                word_ids: (0..8).map(|_| rng.random_range(0..8)).collect(),
            };
            let base: Vec<f64> = {
                let raw: Vec<f64> = (0..3).map(|_| rng.random::<f64>() + 0.05).collect();
                let sum: f64 = raw.iter().sum();
                raw.into_iter().map(|x| x / sum).collect()
            };
            let z = rng.random_range(0..3);
            let mut tilted = base.clone();
            tilted[z] += 0.5;
            let sum: f64 = tilted.iter().sum();
            for x in &mut tilted {
                *x /= sum;
            }
            let before = inf.word_topic_posterior(&doc, 4, &base);
            let after = inf.word_topic_posterior(&doc, 4, &tilted);
            assert!(after.probs[z] >= before.probs[z] - 1e-12);
        }
    }

    #[test]
    fn word_posterior_is_repeatable_per_position() {
        let model = toy_model(6, 2, 3, Variant::Diff, 8);
        let inf = Inferencer::new(&model, &config(2, 3, Variant::Diff));
        let doc = EncodedDocument { doc_id: 3, word_ids: vec![0, 1, 2, 3, 4, 5] };
        let theta = [0.6, 0.4];
        let a = inf.word_topic_posterior(&doc, 2, &theta);
        let b = inf.word_topic_posterior(&doc, 2, &theta);
        assert_eq!(a, b);
        // Different positions draw different negatives.
        let c = inf.word_topic_posterior(&doc, 3, &theta);
        assert_ne!(a.probs, c.probs);
    }

    #[test]
    fn fold_iters_override_changes_result() {
        let model = toy_model(6, 2, 3, Variant::Same, 9);
        let doc = EncodedDocument { doc_id: 0, word_ids: vec![0, 1, 2, 3, 4, 5] };
        let one = Inferencer::new(&model, &config(2, 3, Variant::Same))
            .with_fold_iters(1)
            .fold_in(&doc)
            .unwrap();
        let many = Inferencer::new(&model, &config(2, 3, Variant::Same))
            .with_fold_iters(30)
            .fold_in(&doc)
            .unwrap();
        assert_ne!(one.theta, many.theta);
    }
}
