//! Word-by-word cosine similarity and semantic matching vectors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{check_finite, cosine_unchecked, norm_unchecked, Matrix, EPS_NORM};

/// Weight sums smaller than this in magnitude fall back to the max rule.
pub const EPS_DENOM: f64 = 1e-6;

/// `a[i][j]` is the cosine between row `i` of the source and row `j` of the target.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    a: Matrix,
}

impl SimilarityMatrix {
    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    pub fn source_len(&self) -> usize {
        self.a.rows()
    }

    pub fn target_len(&self) -> usize {
        self.a.cols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a.get(i, j)
    }

    /// Similarity matrix of the reverse direction.
    pub fn transpose(&self) -> SimilarityMatrix {
        SimilarityMatrix {
            a: self.a.transpose(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MatchStrategy {
    Global,
    Local { window: usize },
    Max,
}

impl MatchStrategy {
    pub fn validate(&self) -> Result<()> {
        match self {
            MatchStrategy::Local { window: 0 } => {
                Err(Error::Config("local matching window must be >= 1".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn is_max(&self) -> bool {
        matches!(self, MatchStrategy::Max)
    }
}

impl fmt::Display for MatchStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatchStrategy::Global => f.write_str("global"),
            MatchStrategy::Local { window } => write!(f, "local-{window}"),
            MatchStrategy::Max => f.write_str("max"),
        }
    }
}

/// Parses `max`, `global`, `local` (window 3) or `local-N`.
impl FromStr for MatchStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let strategy = match s {
            "max" => MatchStrategy::Max,
            "global" => MatchStrategy::Global,
            "local" => MatchStrategy::Local { window: 3 },
            other => match other.strip_prefix("local-").map(str::parse::<usize>) {
                Some(Ok(window)) => MatchStrategy::Local { window },
                _ => return Err(Error::Config(format!("unknown match strategy `{other}`"))),
            },
        };
        strategy.validate()?;
        Ok(strategy)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// Row `i` is the matching vector for source word `i`.
    pub matched: Matrix,
    pub best_index: Vec<usize>,
    pub strategy: MatchStrategy,
}

pub fn similarity_matrix(s: &Matrix, t: &Matrix) -> Result<SimilarityMatrix> {
    if s.cols() != t.cols() {
        return Err(Error::DimensionMismatch {
            expected: s.cols(),
            actual: t.cols(),
        });
    }
    check_finite(s.as_slice(), "source sentence")?;
    check_finite(t.as_slice(), "target sentence")?;
    let t_norms: Vec<f64> = t.row_iter().map(norm_unchecked).collect();
    let mut a = Matrix::zeros(s.rows(), t.rows());
    for (i, si) in s.row_iter().enumerate() {
        let ns = norm_unchecked(si);
        for (j, tj) in t.row_iter().enumerate() {
            let v = if ns < EPS_NORM || t_norms[j] < EPS_NORM {
                0.0
            } else {
                cosine_unchecked(si, tj)
            };
            a.set(i, j, v);
        }
    }
    Ok(SimilarityMatrix { a })
}

/// First index of the maximum.
fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

fn weighted_mean(weights: &[f64], t: &Matrix, lo: usize, hi: usize, out: &mut [f64]) -> bool {
    let denom: f64 = weights[lo..=hi].iter().sum();
    if denom.abs() < EPS_DENOM {
        return false;
    }
    out.iter_mut().for_each(|x| *x = 0.0);
    for (j, &w) in weights.iter().enumerate().take(hi + 1).skip(lo) {
        for (o, &x) in out.iter_mut().zip(t.row(j)) {
            *o += w * x;
        }
    }
    out.iter_mut().for_each(|x| *x /= denom);
    true
}

/// Matching vectors for every row of the source against `t`.
///
/// `a` must be the similarity matrix of (source, `t`); for the reverse
/// direction pass the transposed matrix and the source as `t`.
pub fn match_sentence(t: &Matrix, a: &SimilarityMatrix, strategy: MatchStrategy) -> Result<MatchResult> {
    strategy.validate()?;
    if a.target_len() != t.rows() {
        return Err(Error::shape(
            "similarity matrix columns",
            t.rows(),
            a.target_len(),
        ));
    }
    if t.rows() == 0 {
        return Err(Error::Empty("target sentence"));
    }
    let m = a.source_len();
    let n = t.rows();
    let d = t.cols();
    let mut matched = Matrix::zeros(m, d);
    let mut best_index = Vec::with_capacity(m);

    for i in 0..m {
        let weights = a.a.row(i);
        let k = argmax(weights);
        best_index.push(k);
        let out = matched.row_mut(i);
        let averaged = match strategy {
            MatchStrategy::Max => false,
            MatchStrategy::Global => weighted_mean(weights, t, 0, n - 1, out),
            MatchStrategy::Local { window } => {
                let lo = k.saturating_sub(window);
                let hi = (k + window).min(n - 1);
                weighted_mean(weights, t, lo, hi, out)
            }
        };
        if !averaged {
            out.copy_from_slice(t.row(k));
        }
    }
    Ok(MatchResult {
        matched,
        best_index,
        strategy,
    })
}
