//! End-to-end similarity model: embed, match, decompose, compose, score.

mod config;
mod train;

pub use config::{parse_kv, ModelConfig};
pub use train::{train, train_with_dev, EpochLog, TrainReport};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::composer::{compose_backward, compose_input, BankGrads, ComposeInput, FeatureVector, FilterBank};
use crate::decomposer::{decompose, Components, DecompOptions};
use crate::embeddings::{embed_sentence, EmbeddingStore, SentenceMatrix};
use crate::error::{Error, Result};
use crate::matcher::{match_sentence, similarity_matrix, MatchResult, SimilarityMatrix};
use crate::numerics::{dot_unchecked, sigmoid};

/// Predictions are clipped to `[EPS_CLIP, 1 - EPS_CLIP]` before taking logs.
pub const EPS_CLIP: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingInstance {
    pub s: Vec<String>,
    pub t: Vec<String>,
    pub label: bool,
}

impl TrainingInstance {
    pub fn new(s: Vec<String>, t: Vec<String>, label: bool) -> Result<Self> {
        if s.is_empty() || t.is_empty() {
            return Err(Error::Empty("training sentence"));
        }
        Ok(TrainingInstance { s, t, label })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub bank: FilterBank,
    /// Weights over `[features(S); features(T)]`.
    pub output_weights: Vec<f64>,
    pub output_bias: f64,
    /// Fingerprint of the embeddings the model was trained with, if known.
    pub embedding_fingerprint: Option<String>,
}

/// Everything upstream of the convolution for one sentence pair.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub s: SentenceMatrix,
    pub t: SentenceMatrix,
    pub similarity: SimilarityMatrix,
    pub s_match: MatchResult,
    pub t_match: MatchResult,
    pub s_parts: Components,
    pub t_parts: Components,
}

/// Cached convolution inputs of one pair. Embeddings are frozen, so these
/// stay valid for the whole training run.
#[derive(Debug, Clone)]
pub struct PreparedPair {
    pub s: ComposeInput,
    pub t: ComposeInput,
}

/// Full trace of one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    pub analysis: Analysis,
    pub s_features: FeatureVector,
    pub t_features: FeatureVector,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub bank: BankGrads,
    pub output_weights: Vec<f64>,
    pub output_bias: f64,
}

impl Gradients {
    pub fn zeros_like(model: &Model) -> Self {
        Gradients {
            bank: BankGrads::zeros_like(&model.bank),
            output_weights: vec![0.0; model.output_weights.len()],
            output_bias: 0.0,
        }
    }

    fn add_assign(&mut self, other: &Gradients) {
        let pairs = [
            (&mut self.bank.weights, &other.bank.weights),
            (&mut self.bank.minus_weights, &other.bank.minus_weights),
            (&mut self.bank.biases, &other.bank.biases),
            (&mut self.output_weights, &other.output_weights),
        ];
        for (a, b) in pairs {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.output_bias += other.output_bias;
    }

    /// Parameter tensors in checkpoint order.
    pub fn tensors(&self) -> [&[f64]; 5] {
        [
            &self.bank.weights,
            &self.bank.minus_weights,
            &self.bank.biases,
            &self.output_weights,
            std::slice::from_ref(&self.output_bias),
        ]
    }
}

/// Names of the parameter tensors, in the order of [`Model::tensors`].
pub const TENSOR_NAMES: [&str; 5] = [
    "filter_weights",
    "filter_minus_weights",
    "filter_biases",
    "output_weights",
    "output_bias",
];

impl Model {
    /// Fresh model: uniform filters from the config seed, zero output layer.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let bank = FilterBank::init_uniform(config.embedding_dim, &config.filters, config.channels, &mut rng)?;
        let output_weights = vec![0.0; 2 * bank.len()];
        Ok(Model {
            config,
            bank,
            output_weights,
            output_bias: 0.0,
            embedding_fingerprint: None,
        })
    }

    pub fn feature_len(&self) -> usize {
        self.bank.len()
    }

    pub fn tensors(&self) -> [&[f64]; 5] {
        [
            &self.bank.weights,
            &self.bank.minus_weights,
            &self.bank.biases,
            &self.output_weights,
            std::slice::from_ref(&self.output_bias),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 5] {
        [
            &mut self.bank.weights,
            &mut self.bank.minus_weights,
            &mut self.bank.biases,
            &mut self.output_weights,
            std::slice::from_mut(&mut self.output_bias),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// Errors if the store's dimension differs from the model's; warns on a fingerprint mismatch.
    pub fn check_store(&self, store: &EmbeddingStore) -> Result<()> {
        if store.dim() != self.config.embedding_dim {
            return Err(Error::shape(
                "filter_weights",
                format!("embedding dim {}", self.config.embedding_dim),
                format!("embedding dim {}", store.dim()),
            ));
        }
        if let Some(fp) = &self.embedding_fingerprint {
            if fp != store.fingerprint() {
                log::warn!("embedding fingerprint differs from the one recorded at training time");
            }
        }
        Ok(())
    }

    /// Matching and decomposition for both directions.
    pub fn analyze<S: AsRef<str>>(&self, store: &EmbeddingStore, s_tokens: &[S], t_tokens: &[S]) -> Result<Analysis> {
        if store.dim() != self.config.embedding_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.embedding_dim,
                actual: store.dim(),
            });
        }
        let s = embed_sentence(store, s_tokens)?;
        let t = embed_sentence(store, t_tokens)?;
        let similarity = similarity_matrix(&s.vectors, &t.vectors)?;
        let strategy = self.config.match_strategy;
        let s_match = match_sentence(&t.vectors, &similarity, strategy)?;
        let t_match = match_sentence(&s.vectors, &similarity.transpose(), strategy)?;
        let opts = DecompOptions {
            clamp_alpha: self.config.clamp_alpha,
        };
        let s_parts = decompose(&s.vectors, &s_match, self.config.decomp, opts)?;
        let t_parts = decompose(&t.vectors, &t_match, self.config.decomp, opts)?;
        Ok(Analysis {
            s,
            t,
            similarity,
            s_match,
            t_match,
            s_parts,
            t_parts,
        })
    }

    fn prepare_analysis(&self, a: &Analysis) -> Result<PreparedPair> {
        Ok(PreparedPair {
            s: ComposeInput::new(&a.s_parts.plus, &a.s_parts.minus, &self.bank)?,
            t: ComposeInput::new(&a.t_parts.plus, &a.t_parts.minus, &self.bank)?,
        })
    }

    pub fn prepare<S: AsRef<str>>(&self, store: &EmbeddingStore, s_tokens: &[S], t_tokens: &[S]) -> Result<PreparedPair> {
        self.prepare_analysis(&self.analyze(store, s_tokens, t_tokens)?)
    }

    /// Prepares every instance (in parallel, order preserved).
    pub fn prepare_all(&self, store: &EmbeddingStore, data: &[TrainingInstance]) -> Result<Vec<PreparedPair>> {
        data.par_iter()
            .map(|x| self.prepare(store, &x.s, &x.t))
            .collect()
    }

    fn logit(&self, fs: &FeatureVector, ft: &FeatureVector) -> f64 {
        let n = self.feature_len();
        self.output_bias
            + dot_unchecked(&self.output_weights[..n], &fs.values)
            + dot_unchecked(&self.output_weights[n..], &ft.values)
    }

    fn forward(&self, pair: &PreparedPair) -> Result<(FeatureVector, FeatureVector, f64)> {
        let fs = compose_input(&pair.s, &self.bank)?;
        let ft = compose_input(&pair.t, &self.bank)?;
        let p = sigmoid(self.logit(&fs, &ft));
        Ok((fs, ft, p))
    }

    pub fn score_prepared(&self, pair: &PreparedPair) -> Result<f64> {
        Ok(self.forward(pair)?.2)
    }

    /// Similarity in `(0, 1)`.
    pub fn score<S: AsRef<str>>(&self, store: &EmbeddingStore, s_tokens: &[S], t_tokens: &[S]) -> Result<f64> {
        self.score_prepared(&self.prepare(store, s_tokens, t_tokens)?)
    }

    /// Forward pass keeping every intermediate.
    pub fn trace<S: AsRef<str>>(&self, store: &EmbeddingStore, s_tokens: &[S], t_tokens: &[S]) -> Result<Trace> {
        let analysis = self.analyze(store, s_tokens, t_tokens)?;
        let prepared = self.prepare_analysis(&analysis)?;
        let (s_features, t_features, score) = self.forward(&prepared)?;
        Ok(Trace {
            analysis,
            s_features,
            t_features,
            score,
        })
    }

    fn instance_gradients(&self, pair: &PreparedPair, label: bool) -> Result<(Gradients, f64)> {
        let (fs, ft, p) = self.forward(pair)?;
        let y = if label { 1.0 } else { 0.0 };
        let dz = p - y;
        let n = self.feature_len();
        let mut g = Gradients::zeros_like(self);
        g.output_bias = dz;
        for (gw, &f) in g.output_weights.iter_mut().zip(fs.values.iter().chain(ft.values.iter())) {
            *gw = dz * f;
        }
        let up_s: Vec<f64> = self.output_weights[..n].iter().map(|u| dz * u).collect();
        let up_t: Vec<f64> = self.output_weights[n..].iter().map(|u| dz * u).collect();
        compose_backward(&up_s, &fs, &pair.s, &self.bank, &mut g.bank)?;
        compose_backward(&up_t, &ft, &pair.t, &self.bank, &mut g.bank)?;
        Ok((g, instance_loss(p, label)))
    }

    /// Gradients of the summed negative log-likelihood over a batch, and that loss.
    pub fn gradients_prepared(&self, batch: &[(&PreparedPair, bool)]) -> Result<(Gradients, f64)> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let parts: Vec<(Gradients, f64)> = batch
            .par_iter()
            .map(|(pair, label)| self.instance_gradients(pair, *label))
            .collect::<Result<_>>()?;
        let mut total = Gradients::zeros_like(self);
        let mut loss = 0.0;
        for (g, l) in &parts {
            total.add_assign(g);
            loss += l;
        }
        Ok((total, loss))
    }

    pub fn gradients(&self, store: &EmbeddingStore, batch: &[TrainingInstance]) -> Result<Gradients> {
        let prepared = self.prepare_all(store, batch)?;
        let pairs: Vec<(&PreparedPair, bool)> = prepared.iter().zip(batch).map(|(p, x)| (p, x.label)).collect();
        Ok(self.gradients_prepared(&pairs)?.0)
    }

    /// Summed negative log-likelihood over a batch.
    pub fn batch_loss(&self, store: &EmbeddingStore, batch: &[TrainingInstance]) -> Result<f64> {
        let prepared = self.prepare_all(store, batch)?;
        let preds = prepared
            .iter()
            .map(|p| self.score_prepared(p))
            .collect::<Result<Vec<_>>>()?;
        let labels: Vec<bool> = batch.iter().map(|x| x.label).collect();
        loss(&preds, &labels)
    }
}

fn instance_loss(p: f64, label: bool) -> f64 {
    let p = p.clamp(EPS_CLIP, 1.0 - EPS_CLIP);
    if label {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Negative log-likelihood `-sum(y ln p + (1 - y) ln(1 - p))`.
pub fn loss(predictions: &[f64], labels: &[bool]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: predictions.len(),
            actual: labels.len(),
        });
    }
    if predictions.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("predictions"));
    }
    Ok(predictions
        .iter()
        .zip(labels)
        .map(|(&p, &y)| instance_loss(p, y))
        .sum())
}
