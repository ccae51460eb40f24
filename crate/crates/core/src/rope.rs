//! Rotary position embedding.
//!
//! Coordinates are rotated in adjacent pairs `(x[2i], x[2i+1])` by the angle
//! `pos / base^(2i/dim)`. The inner product of a rotated query and key then
//! depends only on the offset between their positions.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const DEFAULT_BASE: f64 = 10_000.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RopeConfig {
    dim: usize,
    base: f64,
}

impl RopeConfig {
    pub fn new(dim: usize, base: f64) -> Result<Self> {
        if dim == 0 || !dim.is_multiple_of(2) {
            return Err(Error::Config(format!("rope dimension {dim} must be even and nonzero")));
        }
        if !(base > 1.0) {
            return Err(Error::Config(format!("rope base {base} must exceed 1")));
        }
        Ok(RopeConfig { dim, base })
    }

    pub fn with_dim(dim: usize) -> Result<Self> {
        Self::new(dim, DEFAULT_BASE)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    /// Angular frequency of pair `i`.
    #[inline]
    pub fn frequency(&self, pair: usize) -> f64 {
        self.base.powf(-(2.0 * pair as f64) / self.dim as f64)
    }
}

#[inline]
fn rotate_pairs(x: &mut [f64], pos: f64, cfg: &RopeConfig, sign: f64) {
    for i in 0..cfg.dim / 2 {
        let (s, c) = (sign * pos * cfg.frequency(i)).sin_cos();
        let (a, b) = (x[2 * i], x[2 * i + 1]);
        x[2 * i] = a * c - b * s;
        x[2 * i + 1] = a * s + b * c;
    }
}

pub fn rope_rotate(x: &[f64], pos: usize, cfg: &RopeConfig) -> Result<Vec<f64>> {
    if x.len() != cfg.dim {
        return Err(Error::Shape {
            op: "rope_rotate",
            left: (1, x.len()),
            right: (1, cfg.dim),
        });
    }
    let mut out = x.to_vec();
    rotate_pairs(&mut out, pos as f64, cfg, 1.0);
    Ok(out)
}

/// Rotates row `r` as position `r`. `inverse` applies the transpose rotation,
/// which is the backward map.
pub(crate) fn rotate_rows(m: &Matrix, cfg: &RopeConfig, inverse: bool) -> Result<Matrix> {
    if m.cols() != cfg.dim {
        return Err(Error::Shape {
            op: "rope",
            left: m.shape(),
            right: (m.rows(), cfg.dim),
        });
    }
    let sign = if inverse { -1.0 } else { 1.0 };
    let mut out = m.clone();
    for r in 0..out.rows() {
        rotate_pairs(out.row_mut(r), r as f64, cfg, sign);
    }
    Ok(out)
}

/// Closed-form rotary score between a query at position `m` and a key at
/// position `n`, summing the four cos/sin cross terms per pair. Used as an
/// independent check on [`rope_rotate`].
pub fn rope_inner_oracle(q: &[f64], k: &[f64], m: i64, n: i64, cfg: &RopeConfig) -> f64 {
    let offset = (m - n) as f64;
    let mut total = 0.0;
    for i in 0..cfg.dim / 2 {
        let theta = offset / cfg.base.powf(2.0 * i as f64 / cfg.dim as f64);
        let (s, c) = theta.sin_cos();
        let (q0, q1, k0, k1) = (q[2 * i], q[2 * i + 1], k[2 * i], k[2 * i + 1]);
        total += c * q0 * k0 + s * q0 * k1 - s * q1 * k0 + c * q1 * k1;
    }
    total
}
