//! Learnable model state — topic-specific embedding tensors and per-document
//! topic distributions — plus the on-disk model format.

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::Vocabulary;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("malformed model header: {0}")]
    InvalidHeader(String),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("truncated model payload while reading {0}")]
    TruncatedPayload(&'static str),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Which likelihood ties a skip-gram's two words together.
///
/// `Same` scores center and context under one shared topic; `Diff` lets each
/// word pick its own topic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Same,
    Diff,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Same => "same",
            Variant::Diff => "diff",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, ModelError> {
        match s {
            "same" => Ok(Variant::Same),
            "diff" => Ok(Variant::Diff),
            other => Err(ModelError::InvalidHeader(format!(
                "unknown variant {other:?} (expected \"same\" or \"diff\")"
            ))),
        }
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Number of topics K.
    pub num_topics: usize,
    /// Embedding dimensionality s.
    pub dim: usize,
    /// Context window half-width c.
    pub window: usize,
    /// Negative samples per skip-gram n.
    pub negatives: usize,
    /// EM iterations over the corpus.
    pub outer_iters: usize,
    /// Gradient steps per skip-gram inside one EM step.
    pub inner_iters: usize,
    /// Initial learning rate (decays linearly over training).
    pub initial_learning_rate: f64,
    pub variant: Variant,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            num_topics: 10,
            dim: 400,
            window: 10,
            negatives: 8,
            outer_iters: 15,
            inner_iters: 15,
            initial_learning_rate: 0.025,
            variant: Variant::Same,
            seed: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.num_topics == 0 {
            return bad("num_topics must be >= 1".into());
        }
        if self.dim == 0 {
            return bad("dim must be >= 1".into());
        }
        if self.window == 0 {
            return bad("window must be >= 1".into());
        }
        if self.outer_iters == 0 || self.inner_iters == 0 {
            return bad("iteration counts must be >= 1".into());
        }
        if !(self.initial_learning_rate.is_finite() && self.initial_learning_rate > 0.0) {
            return bad(format!(
                "learning rate must be positive and finite, got {}",
                self.initial_learning_rate
            ));
        }
        Ok(())
    }
}

/// Per-word input and output matrices, stored as two flat `[vocab × K × s]`
/// tensors in word-major, topic-major, dimension-minor order.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicEmbeddings {
    num_words: usize,
    num_topics: usize,
    dim: usize,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl TopicEmbeddings {
    /// Random initialization: input entries i.i.d. uniform in
    /// [-0.5/s, +0.5/s], output entries zero. Deterministic given the seed.
    pub fn init(num_words: usize, num_topics: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = num_words * num_topics * dim;
        let scale = 1.0 / dim as f64;
        let u = (0..n)
            .map(|_| (rng.random::<f64>() - 0.5) * scale)
            .collect();
        TopicEmbeddings { num_words, num_topics, dim, u, v: vec![0.0; n] }
    }

    pub fn zeros(num_words: usize, num_topics: usize, dim: usize) -> Self {
        let n = num_words * num_topics * dim;
        TopicEmbeddings { num_words, num_topics, dim, u: vec![0.0; n], v: vec![0.0; n] }
    }

    pub fn num_words(&self) -> usize {
        self.num_words
    }

    pub fn num_topics(&self) -> usize {
        self.num_topics
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row_offset(&self, word: usize, topic: usize) -> usize {
        (word * self.num_topics + topic) * self.dim
    }

    /// Input vector U[word, topic].
    #[inline]
    pub fn input(&self, word: usize, topic: usize) -> &[f64] {
        let off = self.row_offset(word, topic);
        &self.u[off..off + self.dim]
    }

    /// Output vector V[word, topic].
    #[inline]
    pub fn output(&self, word: usize, topic: usize) -> &[f64] {
        let off = self.row_offset(word, topic);
        &self.v[off..off + self.dim]
    }

    pub fn input_mut(&mut self, word: usize, topic: usize) -> &mut [f64] {
        let off = self.row_offset(word, topic);
        &mut self.u[off..off + self.dim]
    }

    pub fn output_mut(&mut self, word: usize, topic: usize) -> &mut [f64] {
        let off = self.row_offset(word, topic);
        &mut self.v[off..off + self.dim]
    }

    /// Both flat tensors, input first.
    pub fn raw(&self) -> (&[f64], &[f64]) {
        (&self.u, &self.v)
    }

    pub fn raw_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.u, &mut self.v)
    }

    /// Locate the first NaN/Inf entry, if any, as a human-readable position.
    pub fn find_non_finite(&self) -> Option<String> {
        for (name, tensor) in [("U", &self.u), ("V", &self.v)] {
            if let Some(i) = tensor.iter().position(|x| !x.is_finite()) {
                let word = i / (self.num_topics * self.dim);
                let topic = (i / self.dim) % self.num_topics;
                let d = i % self.dim;
                return Some(format!("{name}[word={word}, topic={topic}, dim={d}]"));
            }
        }
        None
    }
}

/// Uniform 1/K topic distribution for each of `num_docs` documents.
pub fn uniform_thetas(num_docs: usize, num_topics: usize) -> Vec<Vec<f64>> {
    vec![vec![1.0 / num_topics as f64; num_topics]; num_docs]
}

/// A trained (or loading) model: embeddings plus the document-topic
/// distributions of the corpus it was fit on.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub variant: Variant,
    pub vocab: Vocabulary,
    pub embeddings: TopicEmbeddings,
    pub thetas: Vec<Vec<f64>>,
}

impl Model {
    pub fn new(
        variant: Variant,
        vocab: Vocabulary,
        embeddings: TopicEmbeddings,
        thetas: Vec<Vec<f64>>,
    ) -> Result<Self, ModelError> {
        if embeddings.num_words() != vocab.len() {
            return Err(ModelError::DimensionMismatch(format!(
                "embeddings cover {} words but vocabulary has {}",
                embeddings.num_words(),
                vocab.len()
            )));
        }
        let k = embeddings.num_topics();
        if let Some(bad) = thetas.iter().position(|t| t.len() != k) {
            return Err(ModelError::DimensionMismatch(format!(
                "theta for document {bad} has {} entries, expected {k}",
                thetas[bad].len()
            )));
        }
        Ok(Model { variant, vocab, embeddings, thetas })
    }

    pub fn num_topics(&self) -> usize {
        self.embeddings.num_topics()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.dim()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    /// Binary format: ASCII header `STE <variant> <vocab> <K> <s>`, one
    /// `word<TAB>count` line per vocabulary entry, the input then output
    /// tensors as little-endian f32, and the per-document topic
    /// distributions (count as little-endian u64, entries as f64).
    ///
    /// Embedding entries are truncated to f32 for compactness; thetas keep
    /// full precision so their normalization survives a round trip.
    pub fn write_to(&self, w: &mut impl Write) -> Result<(), ModelError> {
        let (k, s) = (self.num_topics(), self.dim());
        writeln!(w, "STE {} {} {} {}", self.variant, self.vocab.len(), k, s)?;
        self.vocab.write_counts(&mut *w)?;
        let (u, v) = self.embeddings.raw();
        for tensor in [u, v] {
            for &x in tensor {
                w.write_all(&(x as f32).to_le_bytes())?;
            }
        }
        w.write_all(&(self.thetas.len() as u64).to_le_bytes())?;
        for theta in &self.thetas {
            for &x in theta {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl BufRead) -> Result<Self, ModelError> {
        let mut header = String::new();
        if r.read_line(&mut header)? == 0 {
            return Err(ModelError::TruncatedPayload("header"));
        }
        let fields: Vec<&str> = header.split_whitespace().collect();
        let [magic, variant, vocab_len, k, s] = fields[..] else {
            return Err(ModelError::InvalidHeader(format!(
                "expected 5 header fields, got {}",
                fields.len()
            )));
        };
        if magic != "STE" {
            return Err(ModelError::InvalidHeader(format!(
                "bad magic {magic:?}, expected \"STE\""
            )));
        }
        let variant: Variant = variant.parse()?;
        let parse_dim = |name: &str, field: &str| {
            field.parse::<usize>().map_err(|_| {
                ModelError::InvalidHeader(format!("{name} is not an integer: {field:?}"))
            })
        };
        let vocab_len = parse_dim("vocabulary size", vocab_len)?;
        let k = parse_dim("topic count", k)?;
        let s = parse_dim("dimension", s)?;
        if vocab_len == 0 || k == 0 || s == 0 {
            return Err(ModelError::InvalidConfig(format!(
                "header declares vocab={vocab_len} K={k} s={s}; all must be >= 1"
            )));
        }

        let mut entries = Vec::with_capacity(vocab_len);
        for i in 0..vocab_len {
            let mut line = String::new();
            if r.read_line(&mut line)? == 0 {
                return Err(ModelError::TruncatedPayload("vocabulary block"));
            }
            let line = line.trim_end_matches('\n');
            let (word, count) = line.split_once('\t').ok_or_else(|| {
                ModelError::InvalidHeader(format!("vocabulary line {i} has no tab: {line:?}"))
            })?;
            let count = count.parse::<u64>().map_err(|_| {
                ModelError::InvalidHeader(format!("vocabulary line {i} has bad count: {count:?}"))
            })?;
            entries.push((word.to_owned(), count));
        }
        let vocab = Vocabulary::from_entries(entries);

        let n = vocab_len * k * s;
        let mut embeddings = TopicEmbeddings::zeros(vocab_len, k, s);
        {
            let (u, v) = embeddings.raw_mut();
            read_f32_block(&mut r, u, "input tensor")?;
            read_f32_block(&mut r, v, "output tensor")?;
            debug_assert_eq!(u.len(), n);
        }

        let mut count_buf = [0u8; 8];
        read_exact_or(&mut r, &mut count_buf, "document count")?;
        let num_docs = u64::from_le_bytes(count_buf) as usize;
        let mut thetas = Vec::with_capacity(num_docs);
        let mut buf = [0u8; 8];
        for _ in 0..num_docs {
            let mut theta = Vec::with_capacity(k);
            for _ in 0..k {
                read_exact_or(&mut r, &mut buf, "topic distributions")?;
                theta.push(f64::from_le_bytes(buf));
            }
            thetas.push(theta);
        }

        Model::new(variant, vocab, embeddings, thetas)
    }

    /// Text export: one line per (word, topic) pair — `word#z` followed by
    /// the s components of the input vector.
    pub fn write_text_embeddings(&self, mut w: impl Write) -> io::Result<()> {
        for word in 0..self.vocab.len() {
            for z in 0..self.num_topics() {
                write!(w, "{}#{z}", self.vocab.word(word))?;
                for &x in self.embeddings.input(word, z) {
                    write!(w, " {x:.6}")?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }
}

fn read_exact_or(r: &mut impl Read, buf: &mut [u8], section: &'static str) -> Result<(), ModelError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => ModelError::TruncatedPayload(section),
        _ => ModelError::Io(e),
    })
}

fn read_f32_block(
    r: &mut impl Read,
    out: &mut [f64],
    section: &'static str,
) -> Result<(), ModelError> {
    let mut buf = [0u8; 4];
    for slot in out {
        read_exact_or(r, &mut buf, section)?;
        *slot = f32::from_le_bytes(buf) as f64;
    }
    Ok(())
}
