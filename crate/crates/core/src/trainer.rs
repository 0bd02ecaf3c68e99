//! EM training with negative sampling: per-skip-gram topic posteriors
//! (E-step), gradient ascent on the sampled log-likelihood (M-step), and
//! per-document topic updates after every document pass.

use std::slice;
use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use thiserror::Error;

use crate::corpus::{
    skipgram_count, skipgrams, EncodedDocument, NegativeSamplingDistribution,
};
use crate::model::{uniform_thetas, Model, ModelConfig, ModelError, TopicEmbeddings, Variant};
use crate::corpus::Vocabulary;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("corpus yields no skip-grams to train on")]
    EmptyCorpus,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{location} became non-finite during iteration {iteration}")]
    NonFinite { iteration: usize, location: String },
}

pub(crate) const STREAM_TRAIN_NEGATIVES: u64 = 1;
pub(crate) const STREAM_EVAL_NEGATIVES: u64 = 2;
pub(crate) const STREAM_WORD_POSTERIOR: u64 = 3;

/// A ChaCha generator keyed by (seed, stream id, two coordinates), so every
/// (document, iteration) pair gets its own reproducible sequence no matter
/// how work is scheduled.
pub(crate) fn derived_rng(seed: u64, stream: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&stream.to_le_bytes());
    key[16..24].copy_from_slice(&a.to_le_bytes());
    key[24..32].copy_from_slice(&b.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// The generator that supplies negative samples for one document during one
/// outer iteration. Keyed by document id, not worker, so sampling does not
/// depend on how documents are sharded across threads.
pub fn training_negative_stream(seed: u64, outer_iter: usize, doc_id: usize) -> ChaCha8Rng {
    derived_rng(seed, STREAM_TRAIN_NEGATIVES, outer_iter as u64, doc_id as u64)
}

/// The generator used when scoring a corpus outside the training loop, so
/// before/after objective comparisons see identical negatives.
pub fn evaluation_negative_stream(seed: u64, doc_id: usize) -> ChaCha8Rng {
    derived_rng(seed, STREAM_EVAL_NEGATIVES, 0, doc_id as u64)
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable log σ(x); never returns NaN for finite input.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Linear learning-rate decay from `initial` down to a floor of
/// `1e-4 * initial` over `total` skip-gram updates.
pub fn scheduled_learning_rate(initial: f64, processed: u64, total: u64) -> f64 {
    let remaining = 1.0 - processed as f64 / total.max(1) as f64;
    initial * remaining.max(1e-4)
}

/// The negative word ids drawn for one skip-gram. The true context word
/// carries indicator 1, every entry here carries indicator 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegativeBatch {
    pub negatives: Vec<usize>,
}

impl NegativeBatch {
    pub fn sample<R: Rng + ?Sized>(
        dist: &NegativeSamplingDistribution,
        n: usize,
        rng: &mut R,
    ) -> Self {
        NegativeBatch { negatives: (0..n).map(|_| dist.sample(rng)).collect() }
    }
}

/// Topic posterior for one skip-gram: over K topics shared by both words
/// (`Same`) or over K×K (center topic, context topic) pairs (`Diff`).
#[derive(Debug, Clone, PartialEq)]
pub enum SkipGramPosterior {
    Same(Vec<f64>),
    /// Row-major: `probs[z_center * num_topics + z_context]`.
    Diff { num_topics: usize, probs: Vec<f64> },
}

impl SkipGramPosterior {
    pub fn total_mass(&self) -> f64 {
        match self {
            SkipGramPosterior::Same(p) => p.iter().sum(),
            SkipGramPosterior::Diff { probs, .. } => probs.iter().sum(),
        }
    }

    /// Per-topic mass this skip-gram contributes to its document's topic
    /// distribution: the posterior itself for `Same`; for `Diff`, the two
    /// position marginals averaged so the pair still contributes total mass 1.
    pub fn topic_mass(&self) -> Vec<f64> {
        match self {
            SkipGramPosterior::Same(p) => p.clone(),
            SkipGramPosterior::Diff { num_topics, probs } => {
                let k = *num_topics;
                let mut mass = vec![0.0; k];
                for zc in 0..k {
                    for zx in 0..k {
                        let p = 0.5 * probs[zc * k + zx];
                        mass[zc] += p;
                        mass[zx] += p;
                    }
                }
                mass
            }
        }
    }
}

/// E-step output for one skip-gram.
#[derive(Debug, Clone)]
pub struct EStep {
    pub posterior: SkipGramPosterior,
    /// Expected sampled log-likelihood of the pair under the posterior — the
    /// quantity the M-step pushes uphill.
    pub objective: f64,
    /// True when every unnormalized mass vanished and the posterior fell
    /// back to the prior.
    pub underflow: bool,
}

/// Running numerator/denominator of one document's topic update.
#[derive(Debug, Clone)]
pub struct ThetaAccumulator {
    numerator: Vec<f64>,
    denominator: f64,
}

impl ThetaAccumulator {
    pub fn new(num_topics: usize) -> Self {
        ThetaAccumulator { numerator: vec![0.0; num_topics], denominator: 0.0 }
    }

    /// Add one skip-gram's posterior with multiplicity `weight` (1 when
    /// occurrences are streamed individually).
    pub fn accumulate(&mut self, posterior: &SkipGramPosterior, weight: f64) {
        let mass = posterior.topic_mass();
        for (acc, m) in self.numerator.iter_mut().zip(&mass) {
            *acc += weight * m;
        }
        self.denominator += weight;
    }

    pub fn denominator(&self) -> f64 {
        self.denominator
    }

    /// The updated theta, or `None` when nothing was accumulated (caller
    /// keeps the previous distribution). Each accumulated posterior carries
    /// total mass 1, so the numerator sum equals the denominator up to
    /// rounding; dividing by the exact numerator sum keeps the result
    /// normalized to machine precision.
    pub fn finalize(&self) -> Option<Vec<f64>> {
        if self.denominator <= 0.0 {
            return None;
        }
        let sum: f64 = self.numerator.iter().sum();
        if !(sum.is_finite() && sum > 0.0) {
            return None;
        }
        Some(self.numerator.iter().map(|&x| x / sum).collect())
    }
}

#[inline]
fn row(tensor: &[f64], num_topics: usize, dim: usize, word: usize, topic: usize) -> &[f64] {
    &tensor[(word * num_topics + topic) * dim..][..dim]
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// log σ(V[context, z_ctx] · U[center, z_c]) plus the log σ(−·) terms of the
/// negatives, which stand in for the context word and are therefore scored
/// under the context topic.
#[allow(clippy::too_many_arguments)]
fn pair_log_prob_core(
    u: &[f64],
    v: &[f64],
    num_topics: usize,
    dim: usize,
    center: usize,
    context: usize,
    center_topic: usize,
    context_topic: usize,
    negatives: &[usize],
) -> f64 {
    let u_row = row(u, num_topics, dim, center, center_topic);
    let mut lp = log_sigmoid(dot(row(v, num_topics, dim, context, context_topic), u_row));
    for &neg in negatives {
        lp += log_sigmoid(-dot(row(v, num_topics, dim, neg, context_topic), u_row));
    }
    lp
}

/// Sampled log-likelihood of (center → context) under one shared topic.
pub fn pair_log_prob_same(
    embeddings: &TopicEmbeddings,
    center: usize,
    context: usize,
    topic: usize,
    negatives: &[usize],
) -> f64 {
    let (u, v) = embeddings.raw();
    pair_log_prob_core(
        u, v, embeddings.num_topics(), embeddings.dim(),
        center, context, topic, topic, negatives,
    )
}

/// Sampled log-likelihood of (center → context) with the two words assigned
/// independent topics.
pub fn pair_log_prob_diff(
    embeddings: &TopicEmbeddings,
    center: usize,
    context: usize,
    center_topic: usize,
    context_topic: usize,
    negatives: &[usize],
) -> f64 {
    let (u, v) = embeddings.raw();
    pair_log_prob_core(
        u, v, embeddings.num_topics(), embeddings.dim(),
        center, context, center_topic, context_topic, negatives,
    )
}

/// Exponentiate log masses in place with max-subtraction and normalize.
/// Returns false if the maximum itself is not finite (all masses vanished or
/// went NaN), in which case the contents are untouched garbage and the
/// caller must fall back to the prior.
pub(crate) fn normalize_log_masses(masses: &mut [f64]) -> bool {
    let max = masses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return false;
    }
    let mut sum = 0.0;
    for x in masses.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in masses.iter_mut() {
        *x /= sum;
    }
    true
}

#[allow(clippy::too_many_arguments)]
fn estep_core(
    u: &[f64],
    v: &[f64],
    num_topics: usize,
    dim: usize,
    variant: Variant,
    center: usize,
    context: usize,
    theta: &[f64],
    negatives: &[usize],
) -> EStep {
    let k = num_topics;
    match variant {
        Variant::Same => {
            let log_probs: Vec<f64> = (0..k)
                .map(|z| pair_log_prob_core(u, v, k, dim, center, context, z, z, negatives))
                .collect();
            let mut masses: Vec<f64> = log_probs
                .iter()
                .zip(theta)
                .map(|(&lp, &t)| lp + t.ln())
                .collect();
            let ok = normalize_log_masses(&mut masses);
            if !ok {
                masses.copy_from_slice(theta);
            }
            let objective = dot(&masses, &log_probs);
            EStep { posterior: SkipGramPosterior::Same(masses), objective, underflow: !ok }
        }
        Variant::Diff => {
            let mut log_probs = vec![0.0; k * k];
            for zc in 0..k {
                for zx in 0..k {
                    log_probs[zc * k + zx] =
                        pair_log_prob_core(u, v, k, dim, center, context, zc, zx, negatives);
                }
            }
            let mut masses: Vec<f64> = (0..k * k)
                .map(|i| log_probs[i] + theta[i / k].ln() + theta[i % k].ln())
                .collect();
            let ok = normalize_log_masses(&mut masses);
            if !ok {
                for i in 0..k * k {
                    masses[i] = theta[i / k] * theta[i % k];
                }
            }
            let objective = dot(&masses, &log_probs);
            EStep {
                posterior: SkipGramPosterior::Diff { num_topics: k, probs: masses },
                objective,
                underflow: !ok,
            }
        }
    }
}

/// Topic posterior of one skip-gram given the document's current theta
/// (Bayes rule over the sampled likelihood, computed in log space).
pub fn estep_posterior(
    embeddings: &TopicEmbeddings,
    variant: Variant,
    center: usize,
    context: usize,
    theta: &[f64],
    negatives: &NegativeBatch,
) -> EStep {
    let (u, v) = embeddings.raw();
    estep_core(
        u, v, embeddings.num_topics(), embeddings.dim(),
        variant, center, context, theta, &negatives.negatives,
    )
}

/// Scratch buffers for one gradient step, reused across skip-grams.
struct MStepScratch {
    /// Gradient w.r.t. the center word's input rows: `[topic][dim]`.
    delta_u: Vec<f64>,
    /// Gradient w.r.t. each candidate's output rows: `[candidate][topic][dim]`.
    delta_v: Vec<f64>,
    /// (word id, indicator) — the true context first, then the negatives.
    candidates: Vec<(usize, f64)>,
}

impl MStepScratch {
    fn new(num_topics: usize, dim: usize, max_candidates: usize) -> Self {
        MStepScratch {
            delta_u: vec![0.0; num_topics * dim],
            delta_v: vec![0.0; max_candidates * num_topics * dim],
            candidates: Vec::with_capacity(max_candidates),
        }
    }

    fn load_candidates(&mut self, context: usize, negatives: &[usize]) {
        self.candidates.clear();
        self.candidates.push((context, 1.0));
        self.candidates.extend(negatives.iter().map(|&w| (w, 0.0)));
    }
}

/// Fill `scratch.delta_u` / `scratch.delta_v` with the exact gradient of the
/// posterior-weighted sampled log-likelihood, evaluated at the current
/// parameters. Every coefficient uses pre-update values; the caller applies
/// the deltas afterwards.
fn mstep_deltas(
    u: &[f64],
    v: &[f64],
    num_topics: usize,
    dim: usize,
    center: usize,
    posterior: &SkipGramPosterior,
    scratch: &mut MStepScratch,
) {
    let k = num_topics;
    let s = dim;
    scratch.delta_u[..k * s].fill(0.0);
    scratch.delta_v[..scratch.candidates.len() * k * s].fill(0.0);
    match posterior {
        SkipGramPosterior::Same(post) => {
            for (z, &weight) in post.iter().enumerate() {
                if weight == 0.0 {
                    continue;
                }
                let u_row = row(u, k, s, center, z);
                for (i, &(cand, xi)) in scratch.candidates.iter().enumerate() {
                    let v_row = row(v, k, s, cand, z);
                    let g = (xi - sigmoid(dot(v_row, u_row))) * weight;
                    let du = &mut scratch.delta_u[z * s..(z + 1) * s];
                    let dv = &mut scratch.delta_v[(i * k + z) * s..(i * k + z + 1) * s];
                    for d in 0..s {
                        du[d] += g * v_row[d];
                        dv[d] += g * u_row[d];
                    }
                }
            }
        }
        SkipGramPosterior::Diff { probs, .. } => {
            for zc in 0..k {
                let u_row = row(u, k, s, center, zc);
                for zx in 0..k {
                    let weight = probs[zc * k + zx];
                    if weight == 0.0 {
                        continue;
                    }
                    for (i, &(cand, xi)) in scratch.candidates.iter().enumerate() {
                        let v_row = row(v, k, s, cand, zx);
                        let g = (xi - sigmoid(dot(v_row, u_row))) * weight;
                        let du = &mut scratch.delta_u[zc * s..(zc + 1) * s];
                        let dv = &mut scratch.delta_v[(i * k + zx) * s..(i * k + zx + 1) * s];
                        for d in 0..s {
                            du[d] += g * v_row[d];
                            dv[d] += g * u_row[d];
                        }
                    }
                }
            }
        }
    }
}

/// One gradient-ascent step on a single skip-gram. The context word and each
/// negative get their output rows updated from the pre-update input row; the
/// center word's input rows are updated from the pre-update output rows.
pub fn mstep_update(
    embeddings: &mut TopicEmbeddings,
    center: usize,
    context: usize,
    negatives: &NegativeBatch,
    posterior: &SkipGramPosterior,
    learning_rate: f64,
) {
    let (k, s) = (embeddings.num_topics(), embeddings.dim());
    let mut scratch = MStepScratch::new(k, s, 1 + negatives.negatives.len());
    scratch.load_candidates(context, &negatives.negatives);
    {
        let (u, v) = embeddings.raw();
        mstep_deltas(u, v, k, s, center, posterior, &mut scratch);
    }
    let (u, v) = embeddings.raw_mut();
    for z in 0..k {
        let off = (center * k + z) * s;
        for d in 0..s {
            u[off + d] += learning_rate * scratch.delta_u[z * s + d];
        }
    }
    for (i, &(cand, _)) in scratch.candidates.iter().enumerate() {
        for z in 0..k {
            let off = (cand * k + z) * s;
            for d in 0..s {
                v[off + d] += learning_rate * scratch.delta_v[(i * k + z) * s + d];
            }
        }
    }
}

/// Unsynchronized shared view of the embedding tensors for asynchronous
/// updates: workers race on rows, lost or torn updates are accepted by the
/// training algorithm. With a single worker access is exclusive.
#[derive(Clone, Copy)]
struct TensorView {
    u: *mut f64,
    v: *mut f64,
    len: usize,
}

unsafe impl Send for TensorView {}
unsafe impl Sync for TensorView {}

impl TensorView {
    fn new(embeddings: &mut TopicEmbeddings) -> Self {
        let (u, v) = embeddings.raw_mut();
        let len = u.len();
        TensorView { u: u.as_mut_ptr(), v: v.as_mut_ptr(), len }
    }

    #[inline]
    fn u_all(&self) -> &[f64] {
        unsafe { slice::from_raw_parts(self.u, self.len) }
    }

    #[inline]
    fn v_all(&self) -> &[f64] {
        unsafe { slice::from_raw_parts(self.v, self.len) }
    }

    #[inline]
    fn add_u(&self, index: usize, delta: f64) {
        debug_assert!(index < self.len);
        unsafe { *self.u.add(index) += delta };
    }

    #[inline]
    fn add_v(&self, index: usize, delta: f64) {
        debug_assert!(index < self.len);
        unsafe { *self.v.add(index) += delta };
    }
}

/// How `train` runs, independent of the model hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainOptions {
    /// 1 = deterministic; more workers shard documents and update embedding
    /// rows without synchronization, trading reproducibility for speed.
    pub threads: usize,
    /// Skip all embedding updates and only re-estimate thetas (fold-in).
    pub freeze_embeddings: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { threads: 1, freeze_embeddings: false }
    }
}

/// Progress of one outer iteration.
#[derive(Debug, Clone)]
pub struct IterationStats {
    /// 1-based outer iteration index.
    pub iteration: usize,
    /// Mean per-skip-gram objective observed while sweeping this iteration.
    pub mean_objective: f64,
    pub underflow_posteriors: u64,
    /// Documents too short to produce any skip-gram (theta left unchanged).
    pub skipless_documents: u64,
    pub seconds: f64,
}

/// Mean objective of a corpus under fixed parameters.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveStats {
    pub mean: f64,
    pub skipgrams: u64,
    pub underflow_posteriors: u64,
}

#[derive(Debug, Clone)]
pub struct TrainDiagnostics {
    /// Objective before the first update, scored with the evaluation streams.
    pub initial: ObjectiveStats,
    /// Objective after the last iteration, scored with the same streams.
    pub r#final: ObjectiveStats,
    pub iterations: Vec<IterationStats>,
    pub total_skipgrams: u64,
}

#[derive(Default)]
struct PassStats {
    objective_sum: f64,
    skipgrams: u64,
    underflows: u64,
    skipless_documents: u64,
}

/// Train a fresh model: initialize embeddings and thetas from the config
/// seed, then run the full EM loop. `on_iter` observes each outer iteration
/// (pass `|_| {}` when not needed).
pub fn train(
    docs: &[EncodedDocument],
    vocab: Vocabulary,
    config: &ModelConfig,
    options: &TrainOptions,
    on_iter: impl FnMut(&IterationStats),
) -> Result<(Model, TrainDiagnostics), TrainError> {
    config.validate()?;
    let dist = NegativeSamplingDistribution::new(&vocab);
    let mut embeddings =
        TopicEmbeddings::init(vocab.len(), config.num_topics, config.dim, config.seed);
    let mut thetas = uniform_thetas(docs.len(), config.num_topics);
    let diagnostics =
        train_from_state(docs, &mut embeddings, &mut thetas, &dist, config, options, on_iter)?;
    let model = Model::new(config.variant, vocab, embeddings, thetas)?;
    Ok((model, diagnostics))
}

/// Run the EM loop over existing state. `thetas[i]` belongs to `docs[i]`;
/// each document's `doc_id` keys its sampling streams. Used directly for
/// fold-in (freeze embeddings, re-estimate thetas) and for resuming.
pub fn train_from_state(
    docs: &[EncodedDocument],
    embeddings: &mut TopicEmbeddings,
    thetas: &mut [Vec<f64>],
    dist: &NegativeSamplingDistribution,
    config: &ModelConfig,
    options: &TrainOptions,
    mut on_iter: impl FnMut(&IterationStats),
) -> Result<TrainDiagnostics, TrainError> {
    config.validate()?;
    if thetas.len() != docs.len() {
        return Err(ModelError::DimensionMismatch(format!(
            "{} documents but {} topic distributions",
            docs.len(),
            thetas.len()
        ))
        .into());
    }
    if embeddings.num_topics() != config.num_topics || embeddings.dim() != config.dim {
        return Err(ModelError::DimensionMismatch(format!(
            "embeddings are {}x{} but config wants {}x{}",
            embeddings.num_topics(),
            embeddings.dim(),
            config.num_topics,
            config.dim
        ))
        .into());
    }
    let total_skipgrams: u64 = docs
        .iter()
        .map(|d| skipgram_count(d.len(), config.window))
        .sum();
    if total_skipgrams == 0 {
        return Err(TrainError::EmptyCorpus);
    }

    let initial = mean_objective(docs, embeddings, thetas, dist, config);
    let lr_total = total_skipgrams * config.outer_iters as u64;
    let processed = AtomicU64::new(0);
    let threads = options.threads.max(1);
    let chunk_len = docs.len().div_ceil(threads);
    let mut iterations = Vec::with_capacity(config.outer_iters);

    for outer in 0..config.outer_iters {
        let start = Instant::now();
        let view = TensorView::new(embeddings);
        let pass = thread::scope(|scope| {
            let mut handles = Vec::new();
            for (doc_chunk, theta_chunk) in
                docs.chunks(chunk_len).zip(thetas.chunks_mut(chunk_len))
            {
                let processed = &processed;
                handles.push(scope.spawn(move || {
                    pass_worker(
                        view, doc_chunk, theta_chunk, dist, config, options, outer,
                        processed, lr_total,
                    )
                }));
            }
            let mut total = PassStats::default();
            for handle in handles {
                let stats = handle.join().expect("training worker panicked");
                total.objective_sum += stats.objective_sum;
                total.skipgrams += stats.skipgrams;
                total.underflows += stats.underflows;
                total.skipless_documents += stats.skipless_documents;
            }
            total
        });

        if let Some(location) = embeddings.find_non_finite() {
            return Err(TrainError::NonFinite { iteration: outer + 1, location });
        }
        if let Some(d) = thetas.iter().position(|t| t.iter().any(|x| !x.is_finite())) {
            return Err(TrainError::NonFinite {
                iteration: outer + 1,
                location: format!("theta[document={d}]"),
            });
        }

        let stats = IterationStats {
            iteration: outer + 1,
            mean_objective: pass.objective_sum / pass.skipgrams.max(1) as f64,
            underflow_posteriors: pass.underflows,
            skipless_documents: pass.skipless_documents,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_iter(&stats);
        iterations.push(stats);
    }

    let r#final = mean_objective(docs, embeddings, thetas, dist, config);
    Ok(TrainDiagnostics { initial, r#final, iterations, total_skipgrams })
}

#[allow(clippy::too_many_arguments)]
fn pass_worker(
    view: TensorView,
    docs: &[EncodedDocument],
    thetas: &mut [Vec<f64>],
    dist: &NegativeSamplingDistribution,
    config: &ModelConfig,
    options: &TrainOptions,
    outer: usize,
    processed: &AtomicU64,
    lr_total: u64,
) -> PassStats {
    let (k, s) = (config.num_topics, config.dim);
    let mut scratch = MStepScratch::new(k, s, 1 + config.negatives);
    let mut stats = PassStats::default();

    for (doc, theta) in docs.iter().zip(thetas.iter_mut()) {
        if skipgram_count(doc.len(), config.window) == 0 {
            stats.skipless_documents += 1;
            continue;
        }
        let mut rng = training_negative_stream(config.seed, outer, doc.doc_id);
        let mut acc = ThetaAccumulator::new(k);
        for sg in skipgrams(doc, config.window) {
            let batch = NegativeBatch::sample(dist, config.negatives, &mut rng);
            let estep = estep_core(
                view.u_all(), view.v_all(), k, s,
                config.variant, sg.center, sg.context, theta, &batch.negatives,
            );
            stats.objective_sum += estep.objective;
            stats.skipgrams += 1;
            stats.underflows += estep.underflow as u64;

            if !options.freeze_embeddings {
                let done = processed.fetch_add(1, Ordering::Relaxed);
                let lr = scheduled_learning_rate(config.initial_learning_rate, done, lr_total);
                scratch.load_candidates(sg.context, &batch.negatives);
                for _ in 0..config.inner_iters {
                    mstep_deltas(
                        view.u_all(), view.v_all(), k, s, sg.center,
                        &estep.posterior, &mut scratch,
                    );
                    let u_base = sg.center * k * s;
                    for i in 0..k * s {
                        view.add_u(u_base + i, lr * scratch.delta_u[i]);
                    }
                    for (i, &(cand, _)) in scratch.candidates.iter().enumerate() {
                        let v_base = cand * k * s;
                        for j in 0..k * s {
                            view.add_v(v_base + j, lr * scratch.delta_v[i * k * s + j]);
                        }
                    }
                }
            }
            acc.accumulate(&estep.posterior, 1.0);
        }
        if let Some(updated) = acc.finalize() {
            *theta = updated;
        }
    }
    stats
}

/// Score a corpus under fixed parameters: the mean per-skip-gram expected
/// sampled log-likelihood, with negatives drawn from the evaluation streams
/// so repeated calls are comparable.
pub fn mean_objective(
    docs: &[EncodedDocument],
    embeddings: &TopicEmbeddings,
    thetas: &[Vec<f64>],
    dist: &NegativeSamplingDistribution,
    config: &ModelConfig,
) -> ObjectiveStats {
    let (u, v) = embeddings.raw();
    let (k, s) = (embeddings.num_topics(), embeddings.dim());
    let mut sum = 0.0;
    let mut count = 0u64;
    let mut underflows = 0u64;
    for (doc, theta) in docs.iter().zip(thetas) {
        let mut rng = evaluation_negative_stream(config.seed, doc.doc_id);
        for sg in skipgrams(doc, config.window) {
            let batch = NegativeBatch::sample(dist, config.negatives, &mut rng);
            let estep = estep_core(
                u, v, k, s, config.variant, sg.center, sg.context, theta, &batch.negatives,
            );
            sum += estep.objective;
            count += 1;
            underflows += estep.underflow as u64;
        }
    }
    ObjectiveStats {
        mean: sum / count.max(1) as f64,
        skipgrams: count,
        underflow_posteriors: underflows,
    }
}
