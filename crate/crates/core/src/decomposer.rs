//! Splits word vectors into similar (`plus`) and dissimilar (`minus`) parts.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcher::MatchResult;
use crate::numerics::{check_finite, cosine_unchecked, dot_unchecked, norm_unchecked, Matrix, EPS_NORM};

/// Per-entry tolerance of the rigid exact-match test.
pub const EPS_EQ: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecompStrategy {
    Rigid,
    Linear,
    Orthogonal,
}

impl fmt::Display for DecompStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecompStrategy::Rigid => "rigid",
            DecompStrategy::Linear => "linear",
            DecompStrategy::Orthogonal => "orthogonal",
        })
    }
}

impl FromStr for DecompStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rigid" => Ok(DecompStrategy::Rigid),
            "linear" => Ok(DecompStrategy::Linear),
            "orthogonal" => Ok(DecompStrategy::Orthogonal),
            other => Err(Error::Config(format!("unknown decomposition `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DecompOptions {
    /// Clamp the linear split coefficient to `[0, 1]`.
    pub clamp_alpha: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Components {
    pub plus: Matrix,
    pub minus: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecomposedPair {
    pub s: Components,
    pub t: Components,
}

/// Rigid: the whole vector goes to `plus` on an exact match, to `minus` otherwise.
pub fn rigid_row(s: &[f64], s_hat: &[f64], plus: &mut [f64], minus: &mut [f64]) {
    let exact = s.iter().zip(s_hat).all(|(a, b)| (a - b).abs() <= EPS_EQ);
    let (hit, miss) = if exact { (plus, minus) } else { (minus, plus) };
    hit.copy_from_slice(s);
    miss.iter_mut().for_each(|x| *x = 0.0);
}

/// Linear: `plus = alpha * s`, `minus = (1 - alpha) * s` with alpha the cosine.
///
/// `minus` is computed first and `plus` recovered as `s - minus`; since
/// `|alpha| <= 1` both subtractions are exact, so `plus + minus == s`
/// bit-for-bit.
pub fn linear_row(s: &[f64], s_hat: &[f64], clamp_alpha: bool, plus: &mut [f64], minus: &mut [f64]) {
    let mut alpha = cosine_unchecked(s, s_hat);
    if clamp_alpha {
        alpha = alpha.clamp(0.0, 1.0);
    }
    for ((p, m), &x) in plus.iter_mut().zip(minus.iter_mut()).zip(s) {
        *m = x - alpha * x;
        *p = x - *m;
    }
}

/// Orthogonal: `plus` is the projection of `s` onto `s_hat`, `minus` the rejection.
pub fn orthogonal_row(s: &[f64], s_hat: &[f64], plus: &mut [f64], minus: &mut [f64]) {
    if norm_unchecked(s_hat) < EPS_NORM {
        plus.iter_mut().for_each(|x| *x = 0.0);
        minus.copy_from_slice(s);
        return;
    }
    let coef = dot_unchecked(s, s_hat) / dot_unchecked(s_hat, s_hat);
    for (((p, m), &x), &h) in plus.iter_mut().zip(minus.iter_mut()).zip(s).zip(s_hat) {
        *p = coef * h;
        *m = x - *p;
    }
}

pub fn decompose(
    x: &Matrix,
    x_hat: &MatchResult,
    strategy: DecompStrategy,
    options: DecompOptions,
) -> Result<Components> {
    let hat = &x_hat.matched;
    if x.rows() != hat.rows() || x.cols() != hat.cols() {
        return Err(Error::shape(
            "matching vectors",
            format!("{}x{}", x.rows(), x.cols()),
            format!("{}x{}", hat.rows(), hat.cols()),
        ));
    }
    if strategy == DecompStrategy::Rigid && !x_hat.strategy.is_max() {
        return Err(Error::Config(format!(
            "rigid decomposition requires the max matcher, got {}",
            x_hat.strategy
        )));
    }
    check_finite(x.as_slice(), "sentence matrix")?;
    check_finite(hat.as_slice(), "matching vectors")?;

    let d = x.cols();
    let mut plus = Matrix::zeros(x.rows(), d);
    let mut minus = Matrix::zeros(x.rows(), d);
    if d == 0 {
        return Ok(Components { plus, minus });
    }
    let outputs = plus
        .as_mut_slice()
        .chunks_exact_mut(d)
        .zip(minus.as_mut_slice().chunks_exact_mut(d));
    for ((p, m), (s, s_hat)) in outputs.zip(x.row_iter().zip(hat.row_iter())) {
        match strategy {
            DecompStrategy::Rigid => rigid_row(s, s_hat, p, m),
            DecompStrategy::Linear => linear_row(s, s_hat, options.clamp_alpha, p, m),
            DecompStrategy::Orthogonal => orthogonal_row(s, s_hat, p, m),
        }
    }
    Ok(Components { plus, minus })
}
