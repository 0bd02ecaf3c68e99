//! Contextual word similarity (AvgSimC / MaxSimC over topic vectors),
//! nearest neighbors, Spearman rank correlation, and the harness that scores
//! a model against human similarity judgments with marked-up contexts.

use std::io::{self, BufRead};

use thiserror::Error;

use crate::corpus::tokenize;
use crate::inference::Inferencer;
use crate::model::{Model, ModelConfig, TopicEmbeddings, Variant};

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error("word {0:?} is not in the vocabulary")]
    UnknownWord(String),
    #[error("rank lists must have equal length of at least 2 (got {x} and {y})")]
    BadRankLists { x: usize, y: usize },
    #[error("rank correlation is undefined when one list is constant")]
    ConstantList,
    #[error("judgment line {line}: {reason}")]
    BadJudgment { line: usize, reason: String },
    #[error("no scorable judgment pairs")]
    NothingToScore,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Cosine similarity; a zero vector on either side scores 0 by definition
/// (there is no direction to compare).
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// A word occurrence with its context-conditioned topic posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextualWord {
    pub word: usize,
    pub posterior: Vec<f64>,
}

impl ContextualWord {
    pub fn new(word: usize, posterior: Vec<f64>) -> Self {
        ContextualWord { word, posterior }
    }

    /// Build from a token position in a document, with the posterior
    /// inferred from the surrounding window under `theta`.
    pub fn infer(
        inferencer: &Inferencer<'_>,
        doc: &crate::corpus::EncodedDocument,
        position: usize,
        theta: &[f64],
    ) -> Self {
        let wp = inferencer.word_topic_posterior(doc, position, theta);
        ContextualWord { word: wp.word, posterior: wp.probs }
    }
}

/// Posterior-weighted average cosine over all topic pairs:
/// Σ_{z1,z2} p(z1|w1,c1) p(z2|w2,c2) cos(U[w1,z1], U[w2,z2]).
pub fn avg_sim_c(embeddings: &TopicEmbeddings, a: &ContextualWord, b: &ContextualWord) -> f64 {
    let mut sim = 0.0;
    for (z1, &p1) in a.posterior.iter().enumerate() {
        if p1 == 0.0 {
            continue;
        }
        for (z2, &p2) in b.posterior.iter().enumerate() {
            if p2 == 0.0 {
                continue;
            }
            sim += p1 * p2 * cosine(embeddings.input(a.word, z1), embeddings.input(b.word, z2));
        }
    }
    sim
}

/// Cosine between each word's single most probable topic vector; argmax ties
/// resolve to the lowest topic index.
pub fn max_sim_c(embeddings: &TopicEmbeddings, a: &ContextualWord, b: &ContextualWord) -> f64 {
    let za = argmax_lowest(&a.posterior);
    let zb = argmax_lowest(&b.posterior);
    cosine(embeddings.input(a.word, za), embeddings.input(b.word, zb))
}

fn argmax_lowest(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub word: usize,
    pub topic: usize,
    pub cosine: f64,
}

/// Top-k (word, topic) pairs by cosine against U[word, topic], excluding the
/// query pair itself. Under `Same` the per-topic subspaces are trained
/// independently and are not mutually comparable, so candidates are
/// restricted to the query topic; `Diff` searches every (word, topic).
pub fn nearest_neighbors(
    model: &Model,
    word: &str,
    topic: usize,
    top_k: usize,
) -> Result<Vec<Neighbor>, SimilarityError> {
    let query_word = model
        .vocab
        .id(word)
        .ok_or_else(|| SimilarityError::UnknownWord(word.to_owned()))?;
    let emb = &model.embeddings;
    let query = emb.input(query_word, topic);
    let topics: Vec<usize> = match model.variant {
        Variant::Same => vec![topic],
        Variant::Diff => (0..emb.num_topics()).collect(),
    };
    let mut neighbors = Vec::new();
    for candidate in 0..emb.num_words() {
        for &z in &topics {
            if candidate == query_word && z == topic {
                continue;
            }
            neighbors.push(Neighbor {
                word: candidate,
                topic: z,
                cosine: cosine(query, emb.input(candidate, z)),
            });
        }
    }
    neighbors.sort_by(|a, b| {
        b.cosine
            .total_cmp(&a.cosine)
            .then(a.word.cmp(&b.word))
            .then(a.topic.cmp(&b.topic))
    });
    neighbors.truncate(top_k);
    Ok(neighbors)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, SimilarityError> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(SimilarityError::BadRankLists { x: x.len(), y: y.len() });
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (&a, &b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(SimilarityError::ConstantList);
    }
    Ok(cov / (vx.sqrt() * vy.sqrt()))
}

/// 1-based ranks; tied values share the average of their rank range.
fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// One human similarity judgment: two target words, each marked
/// `<b>…</b>` inside its own context sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityJudgment {
    pub id: String,
    pub word1: String,
    pub word2: String,
    pub context1: String,
    pub context2: String,
    pub human_score: f64,
}

/// Parse judgment lines: tab-separated
/// `id, word1, pos1, word2, pos2, context1, context2, mean_score`, tolerant
/// of surrounding whitespace and of extra trailing columns. Empty lines are
/// skipped.
pub fn parse_judgments(reader: impl BufRead) -> Result<Vec<SimilarityJudgment>, SimilarityError> {
    let mut judgments = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() < 8 {
            return Err(SimilarityError::BadJudgment {
                line: line_no,
                reason: format!("expected at least 8 tab-separated fields, got {}", fields.len()),
            });
        }
        let human_score: f64 = fields[7].parse().map_err(|_| SimilarityError::BadJudgment {
            line: line_no,
            reason: format!("mean score is not a number: {:?}", fields[7]),
        })?;
        if !(0.0..=10.0).contains(&human_score) {
            return Err(SimilarityError::BadJudgment {
                line: line_no,
                reason: format!("mean score {human_score} outside [0, 10]"),
            });
        }
        for (name, ctx) in [("context1", fields[5]), ("context2", fields[6])] {
            if split_marked(ctx).is_none() {
                return Err(SimilarityError::BadJudgment {
                    line: line_no,
                    reason: format!("{name} has no <b>…</b> target marker"),
                });
            }
        }
        judgments.push(SimilarityJudgment {
            id: fields[0].to_owned(),
            word1: fields[1].to_owned(),
            word2: fields[3].to_owned(),
            context1: fields[5].to_owned(),
            context2: fields[6].to_owned(),
            human_score,
        });
    }
    Ok(judgments)
}

/// Split a context around its `<b>…</b>` marker.
fn split_marked(context: &str) -> Option<(&str, &str, &str)> {
    let open = context.find("<b>")?;
    let rest = &context[open + 3..];
    let close = rest.find("</b>")?;
    Some((&context[..open], &rest[..close], &rest[close + 4..]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContextualMetric {
    AvgSimC,
    MaxSimC,
}

impl std::str::FromStr for ContextualMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "avgsimc" => Ok(ContextualMetric::AvgSimC),
            "maxsimc" => Ok(ContextualMetric::MaxSimC),
            other => Err(format!("unknown metric {other:?} (expected avgsimc or maxsimc)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScwsOutcome {
    /// Spearman correlation between the model's metric and the human scores.
    pub rho: f64,
    pub scored_pairs: usize,
    /// Pairs dropped because a marked target is out of vocabulary (or the
    /// marker text tokenizes to nothing).
    pub skipped_pairs: usize,
}

/// Score every judgment with the chosen metric and correlate against the
/// human scores. Each context sentence is folded in as its own document
/// (document ids 2i and 2i+1 for judgment i, so evaluation is reproducible),
/// and the target's posterior is read off at its marked position.
pub fn eval_scws(
    judgments: &[SimilarityJudgment],
    model: &Model,
    config: &ModelConfig,
    metric: ContextualMetric,
) -> Result<ScwsOutcome, SimilarityError> {
    let inferencer = Inferencer::new(model, config);
    let mut ours = Vec::with_capacity(judgments.len());
    let mut humans = Vec::with_capacity(judgments.len());
    let mut skipped = 0usize;

    for (i, judgment) in judgments.iter().enumerate() {
        let side1 = contextual_target(&inferencer, &judgment.context1, 2 * i);
        let side2 = contextual_target(&inferencer, &judgment.context2, 2 * i + 1);
        let (Some(a), Some(b)) = (side1, side2) else {
            skipped += 1;
            continue;
        };
        let value = match metric {
            ContextualMetric::AvgSimC => avg_sim_c(&model.embeddings, &a, &b),
            ContextualMetric::MaxSimC => max_sim_c(&model.embeddings, &a, &b),
        };
        ours.push(value);
        humans.push(judgment.human_score);
    }

    if ours.len() < 2 {
        return Err(SimilarityError::NothingToScore);
    }
    let rho = spearman(&ours, &humans)?;
    Ok(ScwsOutcome { rho, scored_pairs: ours.len(), skipped_pairs: skipped })
}

/// Fold in one marked-up context sentence and return the target occurrence
/// with its posterior, or `None` when the target cannot be scored.
fn contextual_target(
    inferencer: &Inferencer<'_>,
    context: &str,
    doc_id: usize,
) -> Option<ContextualWord> {
    let vocab = &inferencer.model().vocab;
    let (prefix, marked, suffix) = split_marked(context)?;
    let marked_tokens = tokenize(marked);
    let target = marked_tokens.first()?;
    vocab.id(target)?;

    let mut tokens = tokenize(prefix);
    // The target's position in the encoded document: in-vocabulary prefix
    // tokens come before it, everything out-of-vocabulary is dropped.
    let position = tokens.iter().filter(|t| vocab.id(t).is_some()).count();
    tokens.extend(marked_tokens.iter().cloned());
    tokens.extend(tokenize(suffix));

    let doc = vocab.encode(doc_id, &tokens);
    let fold = inferencer.fold_in(&doc).ok()?;
    let wp = &fold.word_posteriors[position];
    Some(ContextualWord { word: wp.word, posterior: wp.probs.clone() })
}
