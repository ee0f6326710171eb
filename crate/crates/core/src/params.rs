//! Flat parameter storage shared by the encoder, decoder and optimisers.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

/// A named matrix inside a flat parameter vector (row-major).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub blocks: Vec<Block>,
}

impl ParamLayout {
    /// Append a block and return its index.
    pub fn push(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> usize {
        let offset = self.len();
        self.blocks.push(Block {
            name: name.into(),
            offset,
            rows,
            cols,
        });
        self.blocks.len() - 1
    }

    pub fn len(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.offset + b.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn block(&self, k: usize) -> &Block {
        &self.blocks[k]
    }
}

/// Whether a forward pass is for training (dropout active) or inference.
pub enum Pass<'r> {
    Eval,
    Train(&'r mut dyn RngCore),
}

impl Pass<'_> {
    pub fn is_training(&self) -> bool {
        matches!(self, Pass::Train(_))
    }

    /// Inverted-dropout multipliers: 0 with probability `rate`, else 1/(1-rate).
    pub fn dropout_mask(&mut self, len: usize, rate: f64) -> Option<Vec<f64>> {
        match self {
            Pass::Train(rng) if rate > 0.0 => {
                let keep = 1.0 / (1.0 - rate);
                Some(
                    (0..len)
                        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
                        .collect(),
                )
            }
            _ => None,
        }
    }
}

pub(crate) fn fill_uniform(values: &mut [f64], bound: f64, rng: &mut dyn RngCore) {
    for v in values {
        *v = rng.gen_range(-bound..=bound);
    }
}

/// y += A x for row-major A (rows × cols).
#[inline]
pub(crate) fn gemv_acc(a: &[f64], rows: usize, cols: usize, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(a.len(), rows * cols);
    for (r, yr) in y.iter_mut().enumerate().take(rows) {
        let row = &a[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for (w, xv) in row.iter().zip(x) {
            acc += w * xv;
        }
        *yr += acc;
    }
}

/// y += Aᵀ x for row-major A (rows × cols).
#[inline]
pub(crate) fn gemv_t_acc(a: &[f64], rows: usize, cols: usize, x: &[f64], y: &mut [f64]) {
    for r in 0..rows {
        let xr = x[r];
        if xr == 0.0 {
            continue;
        }
        let row = &a[r * cols..(r + 1) * cols];
        for (yc, w) in y.iter_mut().zip(row) {
            *yc += w * xr;
        }
    }
}

/// G += u vᵀ for row-major G (u.len() × v.len()).
#[inline]
pub(crate) fn outer_acc(g: &mut [f64], u: &[f64], v: &[f64]) {
    let cols = v.len();
    for (r, &ur) in u.iter().enumerate() {
        if ur == 0.0 {
            continue;
        }
        let row = &mut g[r * cols..(r + 1) * cols];
        for (gc, vc) in row.iter_mut().zip(v) {
            *gc += ur * vc;
        }
    }
}
