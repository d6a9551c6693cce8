//! Dense row-major matrices, vector kernels and the Adam optimizer.
//!
//! Everything is `f64`. The public kernels reject NaN/Inf inputs instead of
//! propagating them; hot loops elsewhere in the crate use the unchecked
//! slice helpers after validating their inputs once.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norms below this are treated as zero by [`cosine`].
pub const EPS_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vector(pub Vec<f64>);

impl Vector {
    pub fn zeros(dim: usize) -> Self {
        Vector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Vector(v)
    }
}

impl Deref for Vector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Vector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        check_finite(&data, "matrix data")?;
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Matrix::from_vec(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        // chunks_exact panics on a zero chunk size
        let cols = self.cols.max(1);
        self.data.chunks_exact(cols).take(self.rows)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Returns a copy extended with zero rows up to `rows` (no-op if already that tall).
    pub fn padded_to(&self, rows: usize) -> Matrix {
        let mut out = self.clone();
        if rows > self.rows {
            out.data.resize(rows * self.cols, 0.0);
            out.rows = rows;
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

pub(crate) fn check_finite(xs: &[f64], what: &'static str) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    check_finite(a, "vector operand")?;
    check_finite(b, "vector operand")
}

#[inline]
pub(crate) fn dot_unchecked(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm_unchecked(a: &[f64]) -> f64 {
    dot_unchecked(a, a).sqrt()
}

pub(crate) fn cosine_unchecked(a: &[f64], b: &[f64]) -> f64 {
    let na = norm_unchecked(a);
    let nb = norm_unchecked(b);
    if na < EPS_NORM || nb < EPS_NORM {
        return 0.0;
    }
    (dot_unchecked(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

pub fn dot(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a, b)?;
    Ok(dot_unchecked(a, b))
}

pub fn norm(a: &[f64]) -> Result<f64> {
    check_finite(a, "vector operand")?;
    Ok(norm_unchecked(a))
}

/// Cosine similarity, clamped to `[-1, 1]`; zero when either norm is below [`EPS_NORM`].
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a, b)?;
    Ok(cosine_unchecked(a, b))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        AdamState {
            config,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::shape("adam grads", params.len(), grads.len()));
    }
    if state.m.len() != params.len() {
        return Err(Error::shape("adam state", params.len(), state.m.len()));
    }
    check_finite(grads, "gradients")?;
    check_finite(params, "parameters")?;

    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);

    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn loop_squares(a: &[f64]) -> f64 {
        let mut acc = 0.0;
        for x in a {
            acc += x * x;
        }
        acc
    }

    #[test]
    fn dot_examples() {
        assert_eq!(dot(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(dot(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
    }

    #[test]
    fn dot_rejects_mismatch_and_nan() {
        assert!(matches!(
            dot(&[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            dot(&[f64::NAN], &[1.0]),
            Err(Error::NonFinite(_))
        ));
        assert!(cosine(&[1.0, f64::INFINITY], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn cosine_examples() {
        let v = [0.3, -1.2, 4.0];
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() <= 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        // 1 / sqrt(2) by hand: (1*1 + 1*0) / (sqrt(2) * 1)
        let oracle = 1.0 / 2f64.sqrt();
        assert!((cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap() - oracle).abs() < 1e-15);
        assert!((oracle - 0.707_106_781_186_547_5).abs() < 1e-15);
    }

    #[test]
    fn cosine_zero_vector_is_zero() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[1e-13, 0.0], &[1.0, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn adam_zero_gradient_is_identity() {
        let mut p = vec![0.5, -2.0, 3.25];
        let before = p.clone();
        let mut st = AdamState::new(3, AdamConfig::default());
        for _ in 0..10 {
            adam_step(&mut p, &[0.0; 3], &mut st).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(st.step_count(), 10);
    }

    #[test]
    fn adam_single_step_closed_form() {
        // m_hat = 1, v_hat = 1 after bias correction, so the step is lr / (1 + eps)
        let cfg = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        let mut p = vec![1.0];
        let mut st = AdamState::new(1, cfg);
        adam_step(&mut p, &[1.0], &mut st).unwrap();
        let expected = 1.0 - 0.1 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-12);
        assert!((1.0 - p[0] - 0.1).abs() < 1e-8);
    }

    #[test]
    fn adam_descends_parabola() {
        let cfg = AdamConfig {
            learning_rate: 0.05,
            ..AdamConfig::default()
        };
        let mut x = vec![1.0];
        let mut st = AdamState::new(1, cfg);
        for _ in 0..100 {
            let g = [2.0 * x[0]];
            adam_step(&mut x, &g, &mut st).unwrap();
        }
        assert!(x[0].abs() < 0.5, "x = {}", x[0]);
    }

    #[test]
    fn adam_shape_mismatch() {
        let mut st = AdamState::new(2, AdamConfig::default());
        assert!(adam_step(&mut [0.0, 0.0], &[1.0], &mut st).is_err());
        assert!(adam_step(&mut [0.0], &[1.0], &mut st).is_err());
    }

    #[test]
    fn matrix_shape_checks() {
        assert!(Matrix::from_vec(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::from_vec(1, 1, vec![f64::NAN]).is_err());
        let m = Matrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(m.transpose().row(2), &[3.0, 6.0]);
        let p = m.padded_to(4);
        assert_eq!(p.rows(), 4);
        assert_eq!(p.row(3), &[0.0; 3]);
        assert_eq!(m.padded_to(1), m);
    }

    fn finite_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-100.0f64..100.0, len)
    }

    proptest! {
        #[test]
        fn dot_self_is_squared_norm(a in finite_vec(17)) {
            let d = dot(&a, &a).unwrap();
            let o = loop_squares(&a);
            prop_assert!((d - o).abs() <= 1e-12 * o.max(1.0));
        }

        #[test]
        fn dot_is_symmetric(a in finite_vec(9), b in finite_vec(9)) {
            prop_assert_eq!(dot(&a, &b).unwrap().to_bits(), dot(&b, &a).unwrap().to_bits());
        }

        #[test]
        fn cosine_is_bounded(a in finite_vec(6), b in finite_vec(6)) {
            let c = cosine(&a, &b).unwrap();
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&c));
        }
    }
}
