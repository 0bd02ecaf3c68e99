//! Skip-gram topical embeddings: joint training of topic-specific word
//! vectors and document topic distributions, with fold-in inference and
//! evaluation utilities (topic readouts, contextual similarity, document
//! vectors).

pub mod corpus;
pub mod docrep;
pub mod inference;
pub mod model;
pub mod similarity;
pub mod topics;
pub mod trainer;

pub use corpus::{
    read_corpus, skipgram_count, skipgrams, tokenize, CorpusError, EncodedDocument,
    NegativeSamplingDistribution, SkipGram, Vocabulary,
};
pub use model::{
    uniform_thetas, Model, ModelConfig, ModelError, TopicEmbeddings, Variant,
};
pub use trainer::{
    estep_posterior, evaluation_negative_stream, log_sigmoid, mean_objective, mstep_update,
    pair_log_prob_diff, pair_log_prob_same, scheduled_learning_rate, sigmoid, train,
    train_from_state, training_negative_stream, EStep, IterationStats, NegativeBatch,
    ObjectiveStats, SkipGramPosterior, ThetaAccumulator, TrainDiagnostics, TrainError,
    TrainOptions,
};
pub use inference::{FoldInResult, InferenceError, Inferencer, WordPosterior};
pub use topics::{
    collect_bigrams, pmi_coherence, rank_topic_bigrams, top_words, Bigram, CooccurrenceCounts,
    PmiReport, PmiScore, RankedBigram, TopicBigramRanking,
};
pub use similarity::{
    avg_sim_c, cosine, eval_scws, max_sim_c, nearest_neighbors, parse_judgments, spearman,
    ContextualMetric, ContextualWord, Neighbor, ScwsOutcome, SimilarityError,
    SimilarityJudgment,
};
pub use docrep::{document_vector, write_dense, write_sparse, DocumentVector, TfidfWeights};
