//! Two-channel n-gram convolution with tanh and max-pooling.
//!
//! Each filter `o` of window `h` holds an `h x d` weight block stored row-major
//! (row `r` multiplies word `i + r` of a patch) and a bias. In the default
//! [`ChannelWeights::Shared`] mode one weight block is applied to both the
//! `plus` and `minus` patches:
//!
//! ```text
//! c[o][i] = tanh(w_o * plus[i..i+h] + w_o * minus[i..i+h] + b_o)
//! feature[o] = max_i c[o][i]
//! ```
//!
//! Sentences shorter than `h` are zero-padded to length `h`, so every filter
//! sees at least one patch.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{check_finite, dot_unchecked, Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FilterGroup {
    pub window: usize,
    pub count: usize,
}

/// Parses `"1:500,2:500,3:500"`.
pub fn parse_filter_groups(s: &str) -> Result<Vec<FilterGroup>> {
    let groups = s
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|part| {
            let (h, n) = part
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("filter group `{part}` is not `h:count`")))?;
            let window = h
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad filter window `{h}`")))?;
            let count = n
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad filter count `{n}`")))?;
            Ok(FilterGroup { window, count })
        })
        .collect::<Result<Vec<_>>>()?;
    validate_groups(&groups)?;
    Ok(groups)
}

pub fn format_filter_groups(groups: &[FilterGroup]) -> String {
    groups
        .iter()
        .map(|g| format!("{}:{}", g.window, g.count))
        .collect::<Vec<_>>()
        .join(",")
}

/// `win-k`: windows `1..=k`, `count` filters each.
pub fn win_groups(max_window: usize, count: usize) -> Vec<FilterGroup> {
    (1..=max_window)
        .map(|window| FilterGroup { window, count })
        .collect()
}

pub fn validate_groups(groups: &[FilterGroup]) -> Result<()> {
    if groups.is_empty() {
        return Err(Error::Config("at least one filter group is required".into()));
    }
    for g in groups {
        if g.window == 0 {
            return Err(Error::Config("filter window must be >= 1".into()));
        }
        if g.count == 0 {
            return Err(Error::Config(format!(
                "filter group with window {} has no filters",
                g.window
            )));
        }
    }
    Ok(())
}

/// Whether the plus and minus channels share one weight block per filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ChannelWeights {
    #[default]
    Shared,
    Separate,
}

impl fmt::Display for ChannelWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChannelWeights::Shared => "shared",
            ChannelWeights::Separate => "separate",
        })
    }
}

impl FromStr for ChannelWeights {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared" => Ok(ChannelWeights::Shared),
            "separate" => Ok(ChannelWeights::Separate),
            other => Err(Error::Config(format!("unknown channel weights `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    dim: usize,
    groups: Vec<FilterGroup>,
    windows: Vec<usize>,
    offsets: Vec<usize>,
    channels: ChannelWeights,
    /// Concatenated `h x d` blocks, applied to the plus channel (and to minus when shared).
    pub weights: Vec<f64>,
    /// Minus-channel blocks; empty in shared mode.
    pub minus_weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl FilterBank {
    /// All-zero bank.
    pub fn zeros(dim: usize, groups: &[FilterGroup], channels: ChannelWeights) -> Result<Self> {
        validate_groups(groups)?;
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be >= 1".into()));
        }
        let mut windows = Vec::new();
        let mut offsets = Vec::new();
        let mut total = 0;
        for g in groups {
            for _ in 0..g.count {
                windows.push(g.window);
                offsets.push(total);
                total += g.window * dim;
            }
        }
        let n = windows.len();
        Ok(FilterBank {
            dim,
            groups: groups.to_vec(),
            windows,
            offsets,
            channels,
            weights: vec![0.0; total],
            minus_weights: match channels {
                ChannelWeights::Shared => Vec::new(),
                ChannelWeights::Separate => vec![0.0; total],
            },
            biases: vec![0.0; n],
        })
    }

    /// Weights uniform in `[-r, r]` with `r = sqrt(6 / (d h + 1))`, zero biases.
    pub fn init_uniform<R: Rng>(
        dim: usize,
        groups: &[FilterGroup],
        channels: ChannelWeights,
        rng: &mut R,
    ) -> Result<Self> {
        let mut bank = FilterBank::zeros(dim, groups, channels)?;
        for o in 0..bank.len() {
            let h = bank.windows[o];
            let r = (6.0 / (dim * h + 1) as f64).sqrt();
            let range = bank.offsets[o]..bank.offsets[o] + h * dim;
            for w in &mut bank.weights[range.clone()] {
                *w = rng.gen_range(-r..=r);
            }
            if channels == ChannelWeights::Separate {
                for w in &mut bank.minus_weights[range] {
                    *w = rng.gen_range(-r..=r);
                }
            }
        }
        Ok(bank)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn groups(&self) -> &[FilterGroup] {
        &self.groups
    }

    pub fn channels(&self) -> ChannelWeights {
        self.channels
    }

    pub fn window(&self, o: usize) -> usize {
        self.windows[o]
    }

    pub fn max_window(&self) -> usize {
        self.windows.iter().copied().max().unwrap_or(1)
    }

    /// Weight block of filter `o` (plus channel).
    pub fn filter(&self, o: usize) -> &[f64] {
        let start = self.offsets[o];
        &self.weights[start..start + self.windows[o] * self.dim]
    }

    fn minus_filter(&self, o: usize) -> &[f64] {
        match self.channels {
            ChannelWeights::Shared => self.filter(o),
            ChannelWeights::Separate => {
                let start = self.offsets[o];
                &self.minus_weights[start..start + self.windows[o] * self.dim]
            }
        }
    }

    pub fn filter_mut(&mut self, o: usize) -> &mut [f64] {
        let start = self.offsets[o];
        let len = self.windows[o] * self.dim;
        &mut self.weights[start..start + len]
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(&self.minus_weights)
            .chain(&self.biases)
            .all(|x| x.is_finite())
    }
}

/// Validated, padded channel matrices for one sentence.
///
/// Built once per sentence and reused across forward and backward passes.
#[derive(Debug, Clone, PartialEq)]
pub struct ComposeInput {
    len: usize,
    dim: usize,
    padded_len: usize,
    /// `plus + minus` (shared mode) or `plus` (separate mode), zero-padded.
    first: Vec<f64>,
    /// Padded `minus`; empty in shared mode.
    second: Vec<f64>,
    channels: ChannelWeights,
}

impl ComposeInput {
    pub fn new(plus: &Matrix, minus: &Matrix, bank: &FilterBank) -> Result<Self> {
        if plus.rows() != minus.rows() || plus.cols() != minus.cols() {
            return Err(Error::shape(
                "minus channel",
                format!("{}x{}", plus.rows(), plus.cols()),
                format!("{}x{}", minus.rows(), minus.cols()),
            ));
        }
        if plus.cols() != bank.dim() {
            return Err(Error::DimensionMismatch {
                expected: bank.dim(),
                actual: plus.cols(),
            });
        }
        if plus.rows() == 0 {
            return Err(Error::Empty("sentence"));
        }
        check_finite(plus.as_slice(), "plus channel")?;
        check_finite(minus.as_slice(), "minus channel")?;

        let len = plus.rows();
        let padded_len = len.max(bank.max_window());
        let (mut first, mut second) = match bank.channels() {
            ChannelWeights::Shared => {
                let sum = plus
                    .as_slice()
                    .iter()
                    .zip(minus.as_slice())
                    .map(|(p, m)| p + m)
                    .collect();
                (sum, Vec::new())
            }
            ChannelWeights::Separate => (plus.as_slice().to_vec(), minus.as_slice().to_vec()),
        };
        first.resize(padded_len * bank.dim(), 0.0);
        if !second.is_empty() {
            second.resize(padded_len * bank.dim(), 0.0);
        }
        Ok(ComposeInput {
            len,
            dim: bank.dim(),
            padded_len,
            first,
            second,
            channels: bank.channels(),
        })
    }

    /// Original sentence length.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of patch positions for a window of `h`.
    pub fn positions(&self, h: usize) -> usize {
        self.len.max(h) - h + 1
    }

    fn patch(buf: &[f64], dim: usize, pos: usize, h: usize) -> &[f64] {
        &buf[pos * dim..(pos + h) * dim]
    }

    fn check(&self, bank: &FilterBank) -> Result<()> {
        if self.dim != bank.dim()
            || self.channels != bank.channels()
            || self.padded_len < self.len.max(bank.max_window())
        {
            return Err(Error::StaleCache(format!(
                "input built for d={} {} channels, bank has d={} {} channels",
                self.dim,
                self.channels,
                bank.dim(),
                bank.channels()
            )));
        }
        Ok(())
    }

    fn pre_activation(&self, bank: &FilterBank, o: usize, pos: usize) -> f64 {
        let h = bank.window(o);
        let mut z = bank.biases[o] + dot_unchecked(bank.filter(o), Self::patch(&self.first, self.dim, pos, h));
        if self.channels == ChannelWeights::Separate {
            z += dot_unchecked(bank.minus_filter(o), Self::patch(&self.second, self.dim, pos, h));
        }
        z
    }
}

/// Pooled features plus the winning patch of every filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vector,
    pub argmax_positions: Vec<usize>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.values.dim() == 0
    }
}

/// Forward pass over a prepared input.
pub fn compose_input(input: &ComposeInput, bank: &FilterBank) -> Result<FeatureVector> {
    input.check(bank)?;
    let n = bank.len();
    let mut values = Vec::with_capacity(n);
    let mut argmax_positions = Vec::with_capacity(n);
    for o in 0..n {
        let positions = input.positions(bank.window(o));
        let mut best = f64::NEG_INFINITY;
        let mut best_pos = 0;
        for pos in 0..positions {
            let c = input.pre_activation(bank, o, pos).tanh();
            if c > best {
                best = c;
                best_pos = pos;
            }
        }
        if !best.is_finite() {
            return Err(Error::NonFinite("pooled feature"));
        }
        values.push(best);
        argmax_positions.push(best_pos);
    }
    Ok(FeatureVector {
        values: Vector(values),
        argmax_positions,
    })
}

pub fn compose(plus: &Matrix, minus: &Matrix, bank: &FilterBank) -> Result<FeatureVector> {
    let input = ComposeInput::new(plus, minus, bank)?;
    compose_input(&input, bank)
}

/// Gradient accumulators shaped like a [`FilterBank`].
#[derive(Debug, Clone, PartialEq)]
pub struct BankGrads {
    pub weights: Vec<f64>,
    pub minus_weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl BankGrads {
    pub fn zeros_like(bank: &FilterBank) -> Self {
        BankGrads {
            weights: vec![0.0; bank.weights.len()],
            minus_weights: vec![0.0; bank.minus_weights.len()],
            biases: vec![0.0; bank.biases.len()],
        }
    }
}

/// Accumulates `d loss / d params` into `grads` given `d loss / d features`.
///
/// Only the winning patch of each filter receives gradient.
pub fn compose_backward(
    grad_out: &[f64],
    features: &FeatureVector,
    input: &ComposeInput,
    bank: &FilterBank,
    grads: &mut BankGrads,
) -> Result<()> {
    input.check(bank)?;
    let n = bank.len();
    if features.len() != n || features.argmax_positions.len() != n {
        return Err(Error::StaleCache(format!(
            "features have {} entries, bank has {n} filters",
            features.len()
        )));
    }
    if grad_out.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: grad_out.len(),
        });
    }
    if grads.weights.len() != bank.weights.len()
        || grads.minus_weights.len() != bank.minus_weights.len()
        || grads.biases.len() != n
    {
        return Err(Error::shape(
            "gradient accumulator",
            bank.weights.len(),
            grads.weights.len(),
        ));
    }
    let d = bank.dim();
    for o in 0..n {
        let h = bank.window(o);
        let pos = features.argmax_positions[o];
        if pos >= input.positions(h) {
            return Err(Error::StaleCache(format!(
                "filter {o} pooled position {pos} out of range"
            )));
        }
        let c = features.values[o];
        let g = grad_out[o] * (1.0 - c * c);
        if g == 0.0 {
            continue;
        }
        grads.biases[o] += g;
        let start = bank.offsets[o];
        let gw = &mut grads.weights[start..start + h * d];
        for (w, &x) in gw.iter_mut().zip(ComposeInput::patch(&input.first, d, pos, h)) {
            *w += g * x;
        }
        if bank.channels() == ChannelWeights::Separate {
            let gw = &mut grads.minus_weights[start..start + h * d];
            for (w, &x) in gw.iter_mut().zip(ComposeInput::patch(&input.second, d, pos, h)) {
                *w += g * x;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    fn bank(dim: usize, spec: &str, seed: u64, channels: ChannelWeights) -> FilterBank {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FilterBank::init_uniform(dim, &parse_filter_groups(spec).unwrap(), channels, &mut rng).unwrap()
    }

    #[test]
    fn zero_input_gives_zero_features() {
        let b = bank(4, "1:2,2:2,3:2", 0, ChannelWeights::Shared);
        let z = Matrix::zeros(5, 4);
        let f = compose(&z, &z, &b).unwrap();
        assert_eq!(f.values.0, vec![0.0; 6]);
    }

    #[test]
    fn hand_enumerated_unigram() {
        let mut b = FilterBank::zeros(2, &[FilterGroup { window: 1, count: 1 }], ChannelWeights::Shared).unwrap();
        b.filter_mut(0).copy_from_slice(&[1.0, 0.0]);
        let plus = Matrix::from_rows(&[[2.0, 0.0], [1.0, 0.0]]).unwrap();
        let minus = Matrix::zeros(2, 2);
        let f = compose(&plus, &minus, &b).unwrap();
        // patch 0: tanh(2), patch 1: tanh(1)
        let oracle = [2.0f64.tanh(), 1.0f64.tanh()];
        assert_eq!(f.values[0], oracle[0].max(oracle[1]));
        assert_eq!(f.values[0], 2.0f64.tanh());
        assert_eq!(f.argmax_positions, vec![0]);
    }

    #[test]
    fn win3_with_500_filters_has_1500_features() {
        let b = FilterBank::zeros(3, &win_groups(3, 500), ChannelWeights::Shared).unwrap();
        let s = Matrix::zeros(7, 3);
        assert_eq!(compose(&s, &s, &b).unwrap().len(), 1500);
    }

    #[test]
    fn short_sentences_are_padded() {
        let b = bank(3, "5:4", 2, ChannelWeights::Shared);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = random_matrix(&mut rng, 2, 3);
        let f = compose(&s, &Matrix::zeros(2, 3), &b).unwrap();
        assert_eq!(f.len(), 4);
        assert!(f.argmax_positions.iter().all(|&p| p == 0));
        // explicitly padded input gives the same features
        let padded = s.padded_to(5);
        let g = compose(&padded, &Matrix::zeros(5, 3), &b).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn groups_parse_and_validate() {
        assert_eq!(
            parse_filter_groups("1:3, 2:4").unwrap(),
            vec![FilterGroup { window: 1, count: 3 }, FilterGroup { window: 2, count: 4 }]
        );
        assert!(parse_filter_groups("").is_err());
        assert!(parse_filter_groups("0:3").is_err());
        assert!(parse_filter_groups("2:0").is_err());
        assert!(parse_filter_groups("2-3").is_err());
        assert_eq!(format_filter_groups(&win_groups(2, 50)), "1:50,2:50");
    }

    #[test]
    fn init_range() {
        let b = bank(10, "1:20,3:20", 5, ChannelWeights::Shared);
        for o in 0..b.len() {
            let r = (6.0 / (10 * b.window(o) + 1) as f64).sqrt();
            assert!(b.filter(o).iter().all(|w| w.abs() <= r));
        }
        assert!(b.biases.iter().all(|&x| x == 0.0));
        assert_eq!(b, bank(10, "1:20,3:20", 5, ChannelWeights::Shared));
    }

    #[test]
    fn shape_errors() {
        let b = bank(3, "1:1", 0, ChannelWeights::Shared);
        assert!(compose(&Matrix::zeros(2, 3), &Matrix::zeros(3, 3), &b).is_err());
        assert!(compose(&Matrix::zeros(2, 4), &Matrix::zeros(2, 4), &b).is_err());
    }

    #[test]
    fn zero_upstream_gradient() {
        let b = bank(4, "1:3,2:3", 1, ChannelWeights::Shared);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_matrix(&mut rng, 5, 4);
        let m = random_matrix(&mut rng, 5, 4);
        let input = ComposeInput::new(&p, &m, &b).unwrap();
        let f = compose_input(&input, &b).unwrap();
        let mut g = BankGrads::zeros_like(&b);
        compose_backward(&[0.0; 6], &f, &input, &b, &mut g).unwrap();
        assert!(g.weights.iter().chain(&g.biases).all(|&x| x == 0.0));
    }

    #[test]
    fn single_patch_gradient_closed_form() {
        let b = bank(3, "2:1", 4, ChannelWeights::Shared);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_matrix(&mut rng, 2, 3);
        let m = random_matrix(&mut rng, 2, 3);
        let input = ComposeInput::new(&p, &m, &b).unwrap();
        let f = compose_input(&input, &b).unwrap();
        let mut g = BankGrads::zeros_like(&b);
        let upstream = 0.7;
        compose_backward(&[upstream], &f, &input, &b, &mut g).unwrap();
        let c = f.values[0];
        for k in 0..6 {
            let x = p.as_slice()[k] + m.as_slice()[k];
            assert!((g.weights[k] - upstream * (1.0 - c * c) * x).abs() < 1e-14);
        }

        // central differences on 0.7 * feature
        let eps = 1e-5;
        for k in 0..6 {
            let mut hi = b.clone();
            hi.weights[k] += eps;
            let mut lo = b.clone();
            lo.weights[k] -= eps;
            let fd = upstream
                * (compose(&p, &m, &hi).unwrap().values[0] - compose(&p, &m, &lo).unwrap().values[0])
                / (2.0 * eps);
            let rel = (fd - g.weights[k]).abs() / fd.abs().max(g.weights[k].abs()).max(1e-8);
            assert!(rel <= 1e-4, "k={k} fd={fd} an={}", g.weights[k]);
        }
    }

    #[test]
    fn losing_patch_has_no_influence() {
        let mut b = FilterBank::zeros(2, &[FilterGroup { window: 1, count: 1 }], ChannelWeights::Shared).unwrap();
        b.filter_mut(0).copy_from_slice(&[1.0, 0.5]);
        let plus = Matrix::from_rows(&[[0.1, 0.1], [2.0, 1.0]]).unwrap();
        let minus = Matrix::zeros(2, 2);
        let f = compose(&plus, &minus, &b).unwrap();
        assert_eq!(f.argmax_positions, vec![1]);
        let mut perturbed = plus.clone();
        perturbed.set(0, 0, 0.1 + 1e-3);
        let g = compose(&perturbed, &minus, &b).unwrap();
        assert!((f.values[0] - g.values[0]).abs() <= 1e-12);

        let input = ComposeInput::new(&plus, &minus, &b).unwrap();
        let mut grads = BankGrads::zeros_like(&b);
        compose_backward(&[1.0], &f, &input, &b, &mut grads).unwrap();
        let c = f.values[0];
        assert_eq!(grads.weights, vec![(1.0 - c * c) * 2.0, (1.0 - c * c) * 1.0]);
    }

    #[test]
    fn stale_cache_is_rejected() {
        let b = bank(3, "1:2", 0, ChannelWeights::Shared);
        let other = bank(3, "1:3", 0, ChannelWeights::Shared);
        let s = Matrix::zeros(3, 3);
        let input = ComposeInput::new(&s, &s, &b).unwrap();
        let f = compose_input(&input, &b).unwrap();
        let mut g = BankGrads::zeros_like(&other);
        assert!(matches!(
            compose_backward(&[1.0; 3], &f, &input, &other, &mut g),
            Err(Error::StaleCache(_))
        ));
        let wide = bank(3, "1:2,2:1", 0, ChannelWeights::Separate);
        assert!(matches!(compose_input(&input, &wide), Err(Error::StaleCache(_))));
    }

    #[test]
    fn separate_channels_gradient_check() {
        let b = bank(3, "1:2,2:2", 8, ChannelWeights::Separate);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = random_matrix(&mut rng, 4, 3);
        let m = random_matrix(&mut rng, 4, 3);
        let input = ComposeInput::new(&p, &m, &b).unwrap();
        let f = compose_input(&input, &b).unwrap();
        let up = [0.3, -1.1, 0.8, 0.5];
        let mut g = BankGrads::zeros_like(&b);
        compose_backward(&up, &f, &input, &b, &mut g).unwrap();
        let objective = |bank: &FilterBank| -> f64 {
            let v = compose(&p, &m, bank).unwrap().values;
            v.iter().zip(&up).map(|(a, b)| a * b).sum()
        };
        let eps = 1e-5;
        for k in 0..b.minus_weights.len() {
            let mut hi = b.clone();
            hi.minus_weights[k] += eps;
            let mut lo = b.clone();
            lo.minus_weights[k] -= eps;
            let fd = (objective(&hi) - objective(&lo)) / (2.0 * eps);
            let an = g.minus_weights[k];
            assert!((fd - an).abs() <= 1e-4 * fd.abs().max(an.abs()).max(1e-6), "k={k}");
        }
    }

    proptest! {
        #[test]
        fn swapping_channels_is_bit_identical(seed in 0u64..500, len in 1usize..7) {
            let b = bank(4, "1:3,2:3,3:3", seed, ChannelWeights::Shared);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_matrix(&mut rng, len, 4);
            let m = random_matrix(&mut rng, len, 4);
            let a = compose(&p, &m, &b).unwrap();
            let c = compose(&m, &p, &b).unwrap();
            let bits = |f: &FeatureVector| f.values.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&a), bits(&c));
            prop_assert_eq!(a.len(), 9);
        }

        #[test]
        fn raising_winner_never_lowers_feature(seed in 0u64..500, bump in 0.0f64..2.0) {
            // unigram filter: raising the winning row along w raises only its pre-activation
            let b = bank(3, "1:1", seed, ChannelWeights::Shared);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_matrix(&mut rng, 4, 3);
            let m = Matrix::zeros(4, 3);
            let f = compose(&p, &m, &b).unwrap();
            let win = f.argmax_positions[0];
            let w = b.filter(0).to_vec();
            let mut raised = p.clone();
            for (x, wk) in raised.row_mut(win).iter_mut().zip(&w) {
                *x += bump * wk;
            }
            let g = compose(&raised, &m, &b).unwrap();
            prop_assert!(g.values[0] >= f.values[0]);
        }
    }
}
