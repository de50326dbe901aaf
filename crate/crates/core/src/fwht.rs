//! Orthonormal Walsh-Hadamard transform in natural (Hadamard) order.
//!
//! `X[k] = N^{-1/2} sum_m (-1)^{<k,m>} x[m]`. The kernel is symmetric and
//! orthonormal, so the same routine is its own inverse.

use thiserror::Error;

use crate::gf2::{parity, BitIndex};
use crate::signal::SparseSpectrum;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FwhtError {
    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),
}

/// `2^n` real samples indexed by the integer value of a `BitIndex`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSignal {
    n: u32,
    values: Vec<f64>,
}

impl DenseSignal {
    pub fn new(values: Vec<f64>) -> Result<Self, FwhtError> {
        let len = values.len();
        if len == 0 || !len.is_power_of_two() {
            return Err(FwhtError::NotPowerOfTwo(len));
        }
        Ok(Self {
            n: len.trailing_zeros(),
            values,
        })
    }

    pub fn zeros(n: u32) -> Self {
        Self {
            n,
            values: vec![0.0; 1usize << n],
        }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, m: BitIndex) -> f64 {
        assert_eq!(m.width(), self.n);
        self.values[m.bits() as usize]
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

/// Unnormalized butterflies: `buf[j] <- sum_l (-1)^{<j,l>} buf[l]`.
pub fn wht_unnormalized_in_place(buf: &mut [f64]) -> Result<(), FwhtError> {
    let len = buf.len();
    if len == 0 || !len.is_power_of_two() {
        return Err(FwhtError::NotPowerOfTwo(len));
    }
    let mut h = 1;
    while h < len {
        for block in buf.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
    Ok(())
}

/// Orthonormal transform of a buffer in place.
pub fn fwht_in_place(buf: &mut [f64]) -> Result<(), FwhtError> {
    wht_unnormalized_in_place(buf)?;
    let scale = 1.0 / (buf.len() as f64).sqrt();
    buf.iter_mut().for_each(|v| *v *= scale);
    Ok(())
}

pub fn fwht(x: &DenseSignal) -> DenseSignal {
    let mut out = x.clone();
    fwht_in_place(&mut out.values).expect("DenseSignal length is a power of two");
    out
}

/// Direct `O(N^2)` evaluation of the transform.
pub fn naive_wht(x: &DenseSignal) -> DenseSignal {
    let len = x.len();
    let scale = 1.0 / (len as f64).sqrt();
    // parity[t] for every t < N, built as parity[t >> 1] ^ (t & 1).
    let mut parity = vec![0u64; len];
    for t in 1..len {
        parity[t] = parity[t >> 1] ^ (t as u64 & 1);
    }
    let values = (0..len)
        .map(|k| {
            // Four partial sums keep the dependency chains short.
            let mut acc = [0.0f64; 4];
            for (m, &v) in x.values.iter().enumerate() {
                acc[m & 3] += f64::from_bits(v.to_bits() ^ (parity[k & m] << 63));
            }
            (acc[0] + acc[1] + acc[2] + acc[3]) * scale
        })
        .collect();
    DenseSignal { n: x.n, values }
}

/// `x[m] = N^{-1/2} sum_k (-1)^{<m,k>} X[k]`, evaluated in `O(K)`.
pub fn synthesize_at(spectrum: &SparseSpectrum, m: BitIndex) -> f64 {
    assert_eq!(m.width(), spectrum.n(), "sample index width mismatch");
    synthesize_bits(spectrum, m.bits())
}

pub(crate) fn synthesize_bits(spectrum: &SparseSpectrum, m: u64) -> f64 {
    let sum: f64 = spectrum
        .iter_bits()
        .map(|(k, v)| if parity(k & m) == 1 { -v } else { v })
        .sum();
    sum * spectrum.inv_sqrt_len()
}

/// Materializes a sparse spectrum as a dense coefficient vector.
pub fn densify(spectrum: &SparseSpectrum) -> DenseSignal {
    let mut out = DenseSignal::zeros(spectrum.n());
    for (k, v) in spectrum.iter_bits() {
        out.values[k as usize] = v;
    }
    out
}
