//! Fixed-length binary vectors and dense GF(2) matrices.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{check_len, Result};

/// A fixed-length string over {0,1}.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BitVector {
    bits: Vec<u8>,
}

impl BitVector {
    pub fn zeros(len: usize) -> Self {
        Self { bits: vec![0; len] }
    }

    /// Builds a vector from arbitrary bytes, mapping every nonzero value to 1.
    pub fn from_bits<I: IntoIterator<Item = u8>>(bits: I) -> Self {
        Self {
            bits: bits.into_iter().map(|b| u8::from(b != 0)).collect(),
        }
    }

    pub fn from_bools<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        Self {
            bits: bits.into_iter().map(u8::from).collect(),
        }
    }

    /// Vector of length `len` with ones at `support`.
    pub fn from_support(len: usize, support: &[usize]) -> Self {
        let mut v = Self::zeros(len);
        for &i in support {
            v.bits[i] = 1;
        }
        v
    }

    /// Low `len` bits of `mask`, bit `i` of the mask becoming element `i`.
    pub fn from_mask(len: usize, mask: u64) -> Self {
        Self::from_bools((0..len).map(|i| (mask >> i) & 1 == 1))
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i] == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        self.bits[i] = u8::from(value);
    }

    pub fn flip(&mut self, i: usize) {
        self.bits[i] ^= 1;
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.bits
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.bits.iter().map(|&b| b == 1)
    }

    pub fn weight(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.bits.iter().all(|&b| b == 0)
    }

    pub fn support(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| (b == 1).then_some(i))
            .collect()
    }

    /// Packs the vector into an integer (element `i` at bit `i`). Only valid for len ≤ 64.
    pub fn to_mask(&self) -> u64 {
        debug_assert!(self.len() <= 64);
        self.bits
            .iter()
            .enumerate()
            .fold(0u64, |m, (i, &b)| m | ((b as u64) << i))
    }

    pub fn xor(&self, other: &Self) -> Result<Self> {
        check_len(self.len(), other.len())?;
        Ok(Self {
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| a ^ b).collect(),
        })
    }

    pub fn xor_assign(&mut self, other: &Self) -> Result<()> {
        check_len(self.len(), other.len())?;
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a ^= b;
        }
        Ok(())
    }

    pub fn or(&self, other: &Self) -> Result<Self> {
        check_len(self.len(), other.len())?;
        Ok(Self {
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| a | b).collect(),
        })
    }

    /// Inner product over GF(2).
    pub fn dot(&self, other: &Self) -> Result<bool> {
        check_len(self.len(), other.len())?;
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .fold(0u8, |acc, (a, b)| acc ^ (a & b))
            == 1)
    }

    pub fn concat(&self, other: &Self) -> Self {
        let mut bits = self.bits.clone();
        bits.extend_from_slice(&other.bits);
        Self { bits }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| b as f64).collect()
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVector(")?;
        for &b in &self.bits {
            write!(f, "{b}")?;
        }
        write!(f, ")")
    }
}

impl FromIterator<bool> for BitVector {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        Self::from_bools(iter)
    }
}

/// Dense binary matrix stored as rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMatrix {
    cols: usize,
    rows: Vec<BitVector>,
}

impl BinaryMatrix {
    pub fn new(cols: usize, rows: Vec<BitVector>) -> Result<Self> {
        for r in &rows {
            check_len(cols, r.len())?;
        }
        Ok(Self { cols, rows })
    }

    pub fn from_supports(cols: usize, supports: &[Vec<usize>]) -> Self {
        Self {
            cols,
            rows: supports
                .iter()
                .map(|s| BitVector::from_support(cols, s))
                .collect(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &BitVector {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[BitVector] {
        &self.rows
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.rows[i].get(j)
    }

    /// `self · v` over GF(2).
    pub fn mul_vec(&self, v: &BitVector) -> Result<BitVector> {
        check_len(self.cols, v.len())?;
        self.rows.iter().map(|r| r.dot(v)).collect()
    }

    /// `self · otherᵀ` over GF(2).
    pub fn mul_transpose(&self, other: &BinaryMatrix) -> Result<BinaryMatrix> {
        check_len(self.cols, other.cols)?;
        let rows = self
            .rows
            .iter()
            .map(|a| other.rows.iter().map(|b| a.dot(b)).collect())
            .collect::<Result<Vec<BitVector>>>()?;
        Ok(BinaryMatrix {
            cols: other.n_rows(),
            rows,
        })
    }

    pub fn is_zero(&self) -> bool {
        self.rows.iter().all(BitVector::is_zero)
    }

    pub fn to_lists(&self) -> Vec<Vec<u8>> {
        self.rows.iter().map(|r| r.as_slice().to_vec()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xor_dot_and_weight() {
        let a = BitVector::from_bits([1, 0, 1, 1]);
        let b = BitVector::from_bits([1, 1, 0, 1]);
        assert_eq!(a.xor(&b).unwrap(), BitVector::from_bits([0, 1, 1, 0]));
        assert!(!a.dot(&b).unwrap());
        assert_eq!(a.weight(), 3);
        assert_eq!(a.support(), vec![0, 2, 3]);
        assert!(a.xor(&BitVector::zeros(3)).is_err());
    }

    #[test]
    fn mask_round_trip() {
        let v = BitVector::from_mask(7, 0b1010011);
        assert_eq!(v.to_mask(), 0b1010011);
        assert_eq!(v.len(), 7);
    }

    #[test]
    fn nonzero_bytes_normalize_to_one() {
        let v = BitVector::from_bits([0, 5, 255]);
        assert_eq!(v.as_slice(), &[0, 1, 1]);
    }

    #[test]
    fn matrix_vector_product() {
        let m = BinaryMatrix::from_supports(3, &[vec![0, 1], vec![1, 2]]);
        let v = BitVector::from_bits([1, 1, 0]);
        assert_eq!(m.mul_vec(&v).unwrap(), BitVector::from_bits([0, 1]));
        let mt = m.mul_transpose(&m).unwrap();
        assert_eq!(mt.to_lists(), vec![vec![0, 1], vec![1, 0]]);
    }
}
