//! Bit-packed Boolean tensors, integer and mixed-value tensors, and the
//! popcount kernels behind the Boolean neuron pre-activation.
//!
//! A [`BitTensor`] is stored row-major with its last extent as the row
//! length. Every row starts on a word boundary; bits past the end of a row
//! are always zero. T is stored as 1, F as 0.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::logic::{Connective, MixedVal, TriVal};

pub(crate) type Word = u64;
pub(crate) const WORD_BITS: usize = Word::BITS as usize;

#[inline]
pub(crate) fn words_for(bits: usize) -> usize {
    bits.div_ceil(WORD_BITS)
}

#[inline]
fn tail_mask(cols: usize) -> Word {
    match cols % WORD_BITS {
        0 => Word::MAX,
        r => (1 << r) - 1,
    }
}

fn checked_len(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::ShapeMismatch("tensor shape must have at least one extent".into()));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::ShapeMismatch(format!("shape {shape:?} overflows")))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitTensor {
    shape: Vec<usize>,
    rows: usize,
    cols: usize,
    words_per_row: usize,
    data: Vec<Word>,
}

impl BitTensor {
    pub fn zeros(shape: &[usize]) -> Result<Self> {
        checked_len(shape)?;
        let cols = *shape.last().expect("non-empty shape");
        let rows = shape[..shape.len() - 1].iter().product();
        let words_per_row = words_for(cols);
        Ok(BitTensor {
            shape: shape.to_vec(),
            rows,
            cols,
            words_per_row,
            data: vec![0; rows * words_per_row],
        })
    }

    /// Packs a row-major list of Boolean values.
    pub fn pack(bools: &[bool], shape: &[usize]) -> Result<Self> {
        let len = checked_len(shape)?;
        if bools.len() != len {
            return Err(Error::LengthMismatch {
                expected: len,
                actual: bools.len(),
            });
        }
        let mut t = Self::zeros(shape)?;
        if t.cols > 0 {
            for (r, row) in bools.chunks(t.cols).enumerate() {
                let words = t.row_words_mut(r);
                for (c, &b) in row.iter().enumerate() {
                    words[c / WORD_BITS] |= Word::from(b) << (c % WORD_BITS);
                }
            }
        }
        Ok(t)
    }

    pub fn unpack(&self) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.rows * self.cols);
        for r in 0..self.rows {
            let words = self.row_words(r);
            out.extend((0..self.cols).map(|c| words[c / WORD_BITS] >> (c % WORD_BITS) & 1 == 1));
        }
        out
    }

    /// Builds a tensor from raw packed words, rejecting set padding bits.
    pub fn from_words(shape: &[usize], data: Vec<Word>) -> Result<Self> {
        let mut t = Self::zeros(shape)?;
        if data.len() != t.data.len() {
            return Err(Error::LengthMismatch {
                expected: t.data.len(),
                actual: data.len(),
            });
        }
        t.data = data;
        if !t.padding_is_clear() {
            return Err(Error::Format("bit tensor has non-zero padding bits".into()));
        }
        Ok(t)
    }

    /// I.i.d. fair bits.
    pub fn random(shape: &[usize], rng: &mut impl Rng) -> Result<Self> {
        let mut t = Self::zeros(shape)?;
        let mask = tail_mask(t.cols);
        let wpr = t.words_per_row;
        if wpr > 0 {
            for row in t.data.chunks_mut(wpr) {
                for w in row.iter_mut() {
                    *w = rng.gen();
                }
                row[wpr - 1] &= mask;
            }
        }
        Ok(t)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn words_per_row(&self) -> usize {
        self.words_per_row
    }

    pub fn words(&self) -> &[Word] {
        &self.data
    }

    #[inline]
    pub fn row_words(&self, r: usize) -> &[Word] {
        &self.data[r * self.words_per_row..(r + 1) * self.words_per_row]
    }

    #[inline]
    fn row_words_mut(&mut self, r: usize) -> &mut [Word] {
        &mut self.data[r * self.words_per_row..(r + 1) * self.words_per_row]
    }

    /// Bit at (`row`, `col`) of the tensor viewed as rows × cols.
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        assert!(row < self.rows && col < self.cols, "bit index out of bounds");
        self.data[row * self.words_per_row + col / WORD_BITS] >> (col % WORD_BITS) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        assert!(row < self.rows && col < self.cols, "bit index out of bounds");
        let w = &mut self.data[row * self.words_per_row + col / WORD_BITS];
        let bit = 1 << (col % WORD_BITS);
        if value {
            *w |= bit;
        } else {
            *w &= !bit;
        }
    }

    #[inline]
    pub fn toggle(&mut self, row: usize, col: usize) {
        assert!(row < self.rows && col < self.cols, "bit index out of bounds");
        self.data[row * self.words_per_row + col / WORD_BITS] ^= 1 << (col % WORD_BITS);
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Number of positions where the two tensors differ.
    pub fn hamming(&self, other: &BitTensor) -> Result<usize> {
        self.require_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum())
    }

    pub fn padding_is_clear(&self) -> bool {
        if self.words_per_row == 0 {
            return true;
        }
        let mask = tail_mask(self.cols);
        (0..self.rows).all(|r| self.row_words(r)[self.words_per_row - 1] & !mask == 0)
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose(&self) -> Result<BitTensor> {
        if self.shape.len() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "transpose needs a rank-2 tensor, got shape {:?}",
                self.shape
            )));
        }
        let mut out = BitTensor::zeros(&[self.cols, self.rows])?;
        for r in 0..self.rows {
            for c in 0..self.cols {
                if self.get(r, c) {
                    out.set(c, r, true);
                }
            }
        }
        Ok(out)
    }

    /// Copies the listed rows into a new `[indices.len(), cols]` tensor.
    pub fn select_rows(&self, indices: &[usize]) -> BitTensor {
        let mut data = Vec::with_capacity(indices.len() * self.words_per_row);
        for &i in indices {
            data.extend_from_slice(self.row_words(i));
        }
        BitTensor {
            shape: vec![indices.len(), self.cols],
            rows: indices.len(),
            cols: self.cols,
            words_per_row: self.words_per_row,
            data,
        }
    }

    fn require_same_shape(&self, other: &BitTensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    /// Appends the little-endian encoding: rank (u32), extents (u64 each),
    /// then the packed words (u64 each).
    pub fn write_le(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.shape.len() as u32).to_le_bytes());
        for &d in &self.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &w in &self.data {
            out.extend_from_slice(&w.to_le_bytes());
        }
    }

    /// Reads a tensor written by [`BitTensor::write_le`], advancing `input`.
    pub fn read_le(input: &mut &[u8]) -> Result<BitTensor> {
        let rank = take_u32(input)? as usize;
        if rank == 0 || rank > 8 {
            return Err(Error::Format(format!("bad tensor rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(usize::try_from(take_u64(input)?).map_err(|_| Error::Format("extent too large".into()))?);
        }
        let t = BitTensor::zeros(&shape)?;
        let n = t.data.len();
        if input.len() < n * 8 {
            return Err(Error::Format("truncated tensor data".into()));
        }
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(take_u64(input)?);
        }
        BitTensor::from_words(&shape, data)
    }
}

pub(crate) fn take_u32(input: &mut &[u8]) -> Result<u32> {
    let (head, rest) = input
        .split_first_chunk::<4>()
        .ok_or_else(|| Error::Format("unexpected end of data".into()))?;
    *input = rest;
    Ok(u32::from_le_bytes(*head))
}

pub(crate) fn take_u64(input: &mut &[u8]) -> Result<u64> {
    let (head, rest) = input
        .split_first_chunk::<8>()
        .ok_or_else(|| Error::Format("unexpected end of data".into()))?;
    *input = rest;
    Ok(u64::from_le_bytes(*head))
}

/// Number of positions `i < m` where `kind(w_i, x_i)` is T, over packed
/// words with zero padding.
#[inline]
pub(crate) fn popcount_words(kind: Connective, x: &[Word], w: &[Word], m: usize) -> u32 {
    debug_assert_eq!(x.len(), w.len());
    let it = x.iter().zip(w);
    match kind {
        Connective::And => it.map(|(a, b)| (a & b).count_ones()).sum(),
        Connective::Or => it.map(|(a, b)| (a | b).count_ones()).sum(),
        Connective::Xor => it.map(|(a, b)| (a ^ b).count_ones()).sum(),
        Connective::Xnor => m as u32 - it.map(|(a, b)| (a ^ b).count_ones()).sum::<u32>(),
    }
}

/// Popcount of `kind` applied to two equal-length bit vectors.
pub fn popcount_row_op(kind: Connective, x_row: &BitTensor, w_col: &BitTensor) -> Result<u32> {
    if x_row.rows() != 1 || w_col.rows() != 1 {
        return Err(Error::ShapeMismatch("popcount operands must be single rows".into()));
    }
    if x_row.cols() != w_col.cols() {
        return Err(Error::LengthMismatch {
            expected: x_row.cols(),
            actual: w_col.cols(),
        });
    }
    Ok(popcount_words(kind, x_row.words(), w_col.words(), x_row.cols()))
}

/// Elementwise Boolean connective of two same-shape tensors.
pub fn elementwise_connective(kind: Connective, a: &BitTensor, b: &BitTensor) -> Result<BitTensor> {
    a.require_same_shape(b)?;
    let mut out = a.clone();
    for (o, &w) in out.data.iter_mut().zip(&b.data) {
        *o = match kind {
            Connective::And => *o & w,
            Connective::Or => *o | w,
            Connective::Xor => *o ^ w,
            Connective::Xnor => !(*o ^ w),
        };
    }
    if kind == Connective::Xnor && out.words_per_row > 0 {
        let mask = tail_mask(out.cols);
        let wpr = out.words_per_row;
        for row in out.data.chunks_mut(wpr) {
            row[wpr - 1] &= mask;
        }
    }
    Ok(out)
}

/// `out[k][j] = kind-popcount(x row k, w row j)` for `x: [k, m]`, `w: [n, m]`.
pub(crate) fn popcount_matrix(kind: Connective, x: &BitTensor, w: &BitTensor) -> Vec<i32> {
    debug_assert_eq!(x.cols(), w.cols());
    let (n, m) = (w.rows(), x.cols());
    let mut out = vec![0i32; x.rows() * n];
    if n == 0 {
        return out;
    }
    out.par_chunks_mut(n).enumerate().for_each(|(k, row)| {
        let xr = x.row_words(k);
        for (j, s) in row.iter_mut().enumerate() {
            *s = popcount_words(kind, xr, w.row_words(j), m) as i32;
        }
    });
    out
}

/// Row-major 2-D integer tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntTensor {
    rows: usize,
    cols: usize,
    data: Vec<i32>,
}

impl IntTensor {
    pub fn new(rows: usize, cols: usize, data: Vec<i32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(IntTensor { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn data(&self) -> &[i32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> i32 {
        self.data[r * self.cols + c]
    }
}

/// Row-major 2-D tensor of canonical [`MixedVal`]s, stored as a logic plane
/// and a magnitude plane.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedTensor {
    rows: usize,
    cols: usize,
    logic: Vec<TriVal>,
    magnitude: Vec<f64>,
}

impl MixedTensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        MixedTensor {
            rows,
            cols,
            logic: vec![TriVal::Zero; rows * cols],
            magnitude: vec![0.0; rows * cols],
        }
    }

    pub fn from_vals(rows: usize, cols: usize, vals: &[MixedVal]) -> Result<Self> {
        if vals.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                actual: vals.len(),
            });
        }
        Ok(MixedTensor {
            rows,
            cols,
            logic: vals.iter().map(|v| v.logic()).collect(),
            magnitude: vals.iter().map(|v| v.magnitude()).collect(),
        })
    }

    /// Each real `x` becomes `(p(x), |x|)`. Non-finite input is rejected.
    pub fn from_reals(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                actual: values.len(),
            });
        }
        let vals = values
            .iter()
            .map(|&x| MixedVal::from_real(x))
            .collect::<Result<Vec<_>>>()?;
        Self::from_vals(rows, cols, &vals)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> MixedVal {
        let i = r * self.cols + c;
        MixedVal::canonical(self.logic[i], self.magnitude[i])
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: MixedVal) {
        let i = r * self.cols + c;
        self.logic[i] = v.logic();
        self.magnitude[i] = v.magnitude();
    }

    pub fn logic_plane(&self) -> &[TriVal] {
        &self.logic
    }

    pub fn magnitude_plane(&self) -> &[f64] {
        &self.magnitude
    }

    pub fn iter(&self) -> impl Iterator<Item = MixedVal> + '_ {
        self.logic
            .iter()
            .zip(&self.magnitude)
            .map(|(&l, &m)| MixedVal::canonical(l, m))
    }

    /// Embedded numeric values, row-major.
    pub fn to_reals(&self) -> Vec<f64> {
        self.iter().map(MixedVal::to_real).collect()
    }

    pub fn is_canonical(&self) -> bool {
        self.logic
            .iter()
            .zip(&self.magnitude)
            .all(|(&l, &m)| (l == TriVal::Zero) == (m == 0.0) && m >= 0.0 && m.is_finite())
    }
}
