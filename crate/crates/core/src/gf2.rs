//! Index algebra over GF(2).
//!
//! A [`BitIndex`] is an `n`-tuple of bits naming a time sample `m` or a
//! transform coefficient `k`. Position 0 holds `k[1]`, the least significant
//! bit, so a `BitIndex` and the integer it represents share the same bit
//! layout. Display strings are written most-significant bit first, e.g. the
//! index with only position 2 set prints as `0100` for `n = 4`.
//!
//! Indices are limited to 64 bits. Matrices are general row-major packed
//! words, but the hash-style products (`M^T k`, `M l`) require the relevant
//! side to fit in a single word.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Gf2Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("width {0} exceeds the 64-bit index limit")]
    TooWide(usize),
    #[error("value {value:#x} does not fit in {width} bits")]
    Overflow { value: u64, width: u32 },
    #[error("invalid bit string {0:?}")]
    Parse(String),
    #[error("inconsistent linear system: no solution")]
    Inconsistent,
}

#[inline]
pub fn parity(word: u64) -> u8 {
    (word.count_ones() & 1) as u8
}

#[inline]
fn width_mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

/// An element of `F_2^n` for `n <= 64`, packed into one word.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitIndex {
    bits: u64,
    width: u32,
}

impl BitIndex {
    pub fn new(bits: u64, width: u32) -> Result<Self, Gf2Error> {
        if width > 64 {
            return Err(Gf2Error::TooWide(width as usize));
        }
        if bits & !width_mask(width) != 0 {
            return Err(Gf2Error::Overflow { value: bits, width });
        }
        Ok(Self { bits, width })
    }

    /// Truncates `bits` to `width` instead of failing.
    pub fn masked(bits: u64, width: u32) -> Self {
        assert!(width <= 64, "BitIndex width {width} exceeds 64");
        Self {
            bits: bits & width_mask(width),
            width,
        }
    }

    pub fn zero(width: u32) -> Self {
        Self::masked(0, width)
    }

    /// Unit vector `e_{t+1}` (position `t`, zero-based).
    pub fn unit(position: u32, width: u32) -> Self {
        assert!(position < width);
        Self::masked(1u64 << position, width)
    }

    /// Builds an index from bits listed in position order, `k[1]` first.
    pub fn from_bits_lsb_first(bits: &[u8]) -> Result<Self, Gf2Error> {
        if bits.len() > 64 {
            return Err(Gf2Error::TooWide(bits.len()));
        }
        let mut word = 0u64;
        for (t, &b) in bits.iter().enumerate() {
            match b {
                0 => {}
                1 => word |= 1 << t,
                _ => return Err(Gf2Error::Parse(format!("{bits:?}"))),
            }
        }
        Ok(Self {
            bits: word,
            width: bits.len() as u32,
        })
    }

    /// Parses a string written most-significant bit first (`"0100"`).
    pub fn parse_msb_first(s: &str) -> Result<Self, Gf2Error> {
        let s = s.trim();
        if s.is_empty() || s.len() > 64 {
            return Err(Gf2Error::Parse(s.to_string()));
        }
        let mut word = 0u64;
        for c in s.chars() {
            word <<= 1;
            match c {
                '0' => {}
                '1' => word |= 1,
                _ => return Err(Gf2Error::Parse(s.to_string())),
            }
        }
        Ok(Self {
            bits: word,
            width: s.len() as u32,
        })
    }

    #[inline]
    pub fn bits(self) -> u64 {
        self.bits
    }

    #[inline]
    pub fn width(self) -> u32 {
        self.width
    }

    /// Bit at zero-based position `t` (`k[t+1]`).
    #[inline]
    pub fn bit(self, t: u32) -> u8 {
        ((self.bits >> t) & 1) as u8
    }

    pub fn with_bit(self, t: u32, value: u8) -> Self {
        assert!(t < self.width);
        let bits = (self.bits & !(1u64 << t)) | (u64::from(value & 1) << t);
        Self { bits, ..self }
    }

    pub fn weight(self) -> u32 {
        self.bits.count_ones()
    }

    pub fn to_bits_lsb_first(self) -> Vec<u8> {
        (0..self.width).map(|t| self.bit(t)).collect()
    }

    pub fn to_msb_string(self) -> String {
        (0..self.width)
            .rev()
            .map(|t| if self.bit(t) == 1 { '1' } else { '0' })
            .collect()
    }

    pub fn xor(self, other: Self) -> Result<Self, Gf2Error> {
        check_width(self.width as usize, other.width as usize)?;
        Ok(Self {
            bits: self.bits ^ other.bits,
            width: self.width,
        })
    }
}

impl std::ops::BitXor for BitIndex {
    type Output = BitIndex;

    fn bitxor(self, rhs: Self) -> Self {
        assert_eq!(self.width, rhs.width, "BitIndex width mismatch");
        Self {
            bits: self.bits ^ rhs.bits,
            width: self.width,
        }
    }
}

impl fmt::Display for BitIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_msb_string())
    }
}

impl fmt::Debug for BitIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitIndex({})", self.to_msb_string())
    }
}

fn check_width(expected: usize, found: usize) -> Result<(), Gf2Error> {
    if expected != found {
        return Err(Gf2Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// `sum_t i[t] j[t] mod 2`.
pub fn inner_product(i: BitIndex, j: BitIndex) -> Result<u8, Gf2Error> {
    check_width(i.width as usize, j.width as usize)?;
    Ok(parity(i.bits & j.bits))
}

/// Dense GF(2) matrix, row-major, each row packed into `words_per_row` words.
#[derive(Clone, PartialEq, Eq)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    words_per_row: usize,
    data: Vec<u64>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let words_per_row = cols.div_ceil(64).max(1);
        Self {
            rows,
            cols,
            words_per_row,
            data: vec![0; rows * words_per_row],
        }
    }

    pub fn identity(size: usize) -> Self {
        let mut m = Self::zeros(size, size);
        for i in 0..size {
            m.set(i, i, 1);
        }
        m
    }

    /// Builds an `rows x cols` matrix whose column `t` is the `rows`-bit mask
    /// `columns[t]` (bit `i` of the mask is entry `(i, t)`).
    pub fn from_column_masks(rows: usize, columns: &[u64]) -> Result<Self, Gf2Error> {
        if rows > 64 {
            return Err(Gf2Error::TooWide(rows));
        }
        let mut m = Self::zeros(rows, columns.len());
        for (t, &mask) in columns.iter().enumerate() {
            if rows < 64 && mask >> rows != 0 {
                return Err(Gf2Error::Overflow {
                    value: mask,
                    width: rows as u32,
                });
            }
            for i in 0..rows {
                if (mask >> i) & 1 == 1 {
                    m.set(i, t, 1);
                }
            }
        }
        Ok(m)
    }

    /// Builds a matrix from rows given as `cols`-bit masks (`cols <= 64`).
    pub fn from_row_masks(cols: usize, rows: &[u64]) -> Result<Self, Gf2Error> {
        if cols > 64 {
            return Err(Gf2Error::TooWide(cols));
        }
        let mut m = Self::zeros(rows.len(), cols);
        for (i, &mask) in rows.iter().enumerate() {
            if cols < 64 && mask >> cols != 0 {
                return Err(Gf2Error::Overflow {
                    value: mask,
                    width: cols as u32,
                });
            }
            m.data[i * m.words_per_row] = mask;
        }
        Ok(m)
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
    pub fn get(&self, r: usize, c: usize) -> u8 {
        debug_assert!(r < self.rows && c < self.cols);
        ((self.data[r * self.words_per_row + c / 64] >> (c % 64)) & 1) as u8
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: u8) {
        assert!(r < self.rows && c < self.cols, "index out of bounds");
        let w = &mut self.data[r * self.words_per_row + c / 64];
        if value & 1 == 1 {
            *w |= 1 << (c % 64);
        } else {
            *w &= !(1 << (c % 64));
        }
    }

    fn row_words(&self, r: usize) -> &[u64] {
        &self.data[r * self.words_per_row..(r + 1) * self.words_per_row]
    }

    /// Row `r` as a single mask; requires `cols <= 64`.
    pub fn row_mask(&self, r: usize) -> u64 {
        assert!(self.cols <= 64);
        self.data[r * self.words_per_row]
    }

    /// Column `t` as a single mask over the rows; requires `rows <= 64`.
    pub fn column_mask(&self, t: usize) -> u64 {
        assert!(self.rows <= 64);
        let mut mask = 0u64;
        for i in 0..self.rows {
            mask |= u64::from(self.get(i, t)) << i;
        }
        mask
    }

    pub fn column_masks(&self) -> Vec<u64> {
        (0..self.cols).map(|t| self.column_mask(t)).collect()
    }

    pub fn row_weight(&self, r: usize) -> u32 {
        self.row_words(r).iter().map(|w| w.count_ones()).sum()
    }

    pub fn column_weight(&self, c: usize) -> u32 {
        (0..self.rows).map(|r| u32::from(self.get(r, c))).sum()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                if self.get(r, c) == 1 {
                    t.set(c, r, 1);
                }
            }
        }
        t
    }

    /// `M x` for a vector `x` of length `cols`, returned as a `rows`-bit index.
    pub fn mul_vec(&self, x: &[u8]) -> Result<Vec<u8>, Gf2Error> {
        check_width(self.cols, x.len())?;
        let mut packed = vec![0u64; self.words_per_row];
        for (c, &b) in x.iter().enumerate() {
            if b & 1 == 1 {
                packed[c / 64] |= 1 << (c % 64);
            }
        }
        Ok((0..self.rows)
            .map(|r| {
                let acc = self
                    .row_words(r)
                    .iter()
                    .zip(&packed)
                    .fold(0u64, |acc, (a, b)| acc ^ (a & b));
                parity(acc)
            })
            .collect())
    }

    /// `M^T k`: bit `t` of the result is `<column t of M, k>`.
    pub fn transpose_mul(&self, k: BitIndex) -> Result<BitIndex, Gf2Error> {
        check_width(self.rows, k.width as usize)?;
        if self.cols > 64 {
            return Err(Gf2Error::TooWide(self.cols));
        }
        let mut out = 0u64;
        for t in 0..self.cols {
            out |= u64::from(parity(self.column_mask(t) & k.bits)) << t;
        }
        Ok(BitIndex::masked(out, self.cols as u32))
    }

    /// `M l` for `l` of width `cols`, as a `rows`-bit index.
    pub fn mul_index(&self, l: BitIndex) -> Result<BitIndex, Gf2Error> {
        check_width(self.cols, l.width as usize)?;
        if self.rows > 64 {
            return Err(Gf2Error::TooWide(self.rows));
        }
        let mut out = 0u64;
        for t in 0..self.cols {
            if l.bit(t as u32) == 1 {
                out ^= self.column_mask(t);
            }
        }
        Ok(BitIndex::masked(out, self.rows as u32))
    }

    /// Reduced row echelon form in place; returns the pivot column of each
    /// nonzero row, in order.
    pub fn rref_in_place(&mut self) -> Vec<usize> {
        let mut pivots = Vec::new();
        let mut lead = 0usize;
        for c in 0..self.cols {
            if lead == self.rows {
                break;
            }
            let Some(p) = (lead..self.rows).find(|&r| self.get(r, c) == 1) else {
                continue;
            };
            self.swap_rows(p, lead);
            for r in 0..self.rows {
                if r != lead && self.get(r, c) == 1 {
                    self.xor_row_into(lead, r);
                }
            }
            pivots.push(c);
            lead += 1;
        }
        pivots
    }

    pub fn rank(&self) -> usize {
        self.clone().rref_in_place().len()
    }

    pub fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        let w = self.words_per_row;
        for i in 0..w {
            self.data.swap(a * w + i, b * w + i);
        }
    }

    /// `row[dst] ^= row[src]`.
    pub fn xor_row_into(&mut self, src: usize, dst: usize) {
        let w = self.words_per_row;
        for i in 0..w {
            let v = self.data[src * w + i];
            self.data[dst * w + i] ^= v;
        }
    }

    /// Returns a copy with columns reordered so that new column `i` is old
    /// column `order[i]`.
    pub fn permute_columns(&self, order: &[usize]) -> Self {
        assert_eq!(order.len(), self.cols);
        let mut out = Self::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (i, &c) in order.iter().enumerate() {
                if self.get(r, c) == 1 {
                    out.set(r, i, 1);
                }
            }
        }
        out
    }
}

impl fmt::Debug for BitMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BitMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            let row: String = (0..self.cols)
                .map(|c| if self.get(r, c) == 1 { '1' } else { '0' })
                .collect();
            writeln!(f, "  {row}")?;
        }
        write!(f, "]")
    }
}

/// Free-function form of [`BitMatrix::transpose_mul`].
pub fn mat_transpose_vec(m: &BitMatrix, k: BitIndex) -> Result<BitIndex, Gf2Error> {
    m.transpose_mul(k)
}

/// Solution set `{particular ^ span(basis)}` of `M^T k = j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AffineSolution {
    pub particular: BitIndex,
    pub basis: Vec<BitIndex>,
}

impl AffineSolution {
    pub fn len(&self) -> u64 {
        1u64 << self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Enumerates every member of the coset in Gray-code order.
    pub fn iter(&self) -> impl Iterator<Item = BitIndex> + '_ {
        let count = self.len();
        let mut current = self.particular;
        (0..count).map(move |i| {
            if i > 0 {
                let flip = i.trailing_zeros() as usize;
                current = current ^ self.basis[flip];
            }
            current
        })
    }
}

/// Solves `M^T k = j` for `M` of shape `n x b` (`n <= 64`).
pub fn solve_affine(m: &BitMatrix, j: BitIndex) -> Result<AffineSolution, Gf2Error> {
    let n = m.rows();
    if n > 64 {
        return Err(Gf2Error::TooWide(n));
    }
    check_width(m.cols(), j.width() as usize)?;

    // One equation per column of M: <col_t, k> = j[t].
    let mut eqs: Vec<(u64, u8)> = (0..m.cols()).map(|t| (m.column_mask(t), j.bit(t as u32))).collect();
    let mut pivots: Vec<(usize, usize)> = Vec::new(); // (equation, variable)
    let mut row = 0;
    for var in 0..n {
        let Some(p) = (row..eqs.len()).find(|&r| (eqs[r].0 >> var) & 1 == 1) else {
            continue;
        };
        eqs.swap(row, p);
        let (pm, pr) = eqs[row];
        for (r, eq) in eqs.iter_mut().enumerate() {
            if r != row && (eq.0 >> var) & 1 == 1 {
                eq.0 ^= pm;
                eq.1 ^= pr;
            }
        }
        pivots.push((row, var));
        row += 1;
    }
    if eqs[row..].iter().any(|&(mask, rhs)| mask == 0 && rhs == 1) {
        return Err(Gf2Error::Inconsistent);
    }

    let width = n as u32;
    let mut particular = 0u64;
    for &(r, var) in &pivots {
        particular |= u64::from(eqs[r].1) << var;
    }
    let pivot_vars: u64 = pivots.iter().fold(0, |acc, &(_, v)| acc | (1 << v));
    let basis = (0..n)
        .filter(|&v| (pivot_vars >> v) & 1 == 0)
        .map(|free| {
            let mut vec = 1u64 << free;
            for &(r, var) in &pivots {
                if (eqs[r].0 >> free) & 1 == 1 {
                    vec |= 1 << var;
                }
            }
            BitIndex::masked(vec, width)
        })
        .collect();
    Ok(AffineSolution {
        particular: BitIndex::masked(particular, width),
        basis,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn idx(s: &str) -> BitIndex {
        BitIndex::parse_msb_first(s).unwrap()
    }

    fn naive_transpose_mul(m: &BitMatrix, k: BitIndex) -> Vec<u8> {
        let mut out = vec![0u8; m.cols()];
        for (t, o) in out.iter_mut().enumerate() {
            for i in 0..m.rows() {
                *o ^= m.get(i, t) & k.bit(i as u32);
            }
        }
        out
    }

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> BitMatrix {
        let mut m = BitMatrix::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.set(r, c, rng.random_range(0..2));
            }
        }
        m
    }

    #[test]
    fn inner_product_examples() {
        let a = BitIndex::from_bits_lsb_first(&[1, 0, 1, 0]).unwrap();
        let b = BitIndex::from_bits_lsb_first(&[0, 1, 1, 0]).unwrap();
        assert_eq!(inner_product(a, b).unwrap(), 1);
        assert_eq!(inner_product(idx("1011"), BitIndex::zero(4)).unwrap(), 0);
        assert_eq!(inner_product(idx("1111"), idx("1111")).unwrap(), 0);
    }

    #[test]
    fn inner_product_rejects_length_mismatch() {
        let err = inner_product(idx("101"), idx("1010")).unwrap_err();
        assert_eq!(err, Gf2Error::DimensionMismatch { expected: 3, found: 4 });
    }

    #[test]
    fn display_is_msb_first() {
        let k = BitIndex::unit(2, 4);
        assert_eq!(k.to_string(), "0100");
        assert_eq!(k.bits(), 4);
        assert_eq!(idx("0100"), k);
    }

    #[test]
    fn example_one_hash_groups_bins() {
        // Low two positions selected: printed MSB-first this is [0; I].
        let m1 = BitMatrix::from_column_masks(4, &[0b0001, 0b0010]).unwrap();
        let bin = m1.transpose_mul(idx("0100")).unwrap();
        for s in ["0000", "0100", "1000", "1100"] {
            assert_eq!(m1.transpose_mul(idx(s)).unwrap(), bin);
        }
        assert_eq!(bin, idx("00"));
        assert_ne!(m1.transpose_mul(idx("0001")).unwrap(), bin);
    }

    #[test]
    fn transpose_mul_of_zero_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_matrix(7, 3, &mut rng);
        assert_eq!(m.transpose_mul(BitIndex::zero(7)).unwrap(), BitIndex::zero(3));
    }

    #[test]
    fn transpose_mul_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let m = random_matrix(6, 4, &mut rng);
            for k in 0..64u64 {
                let k = BitIndex::masked(k, 6);
                let fast = m.transpose_mul(k).unwrap().to_bits_lsb_first();
                assert_eq!(fast, naive_transpose_mul(&m, k));
            }
        }
    }

    #[test]
    fn transpose_mul_dimension_error() {
        let m = BitMatrix::zeros(5, 2);
        assert!(m.transpose_mul(BitIndex::zero(4)).is_err());
    }

    #[test]
    fn solve_affine_window() {
        // Window over positions 2..4 of n = 6.
        let m = BitMatrix::from_column_masks(6, &[1 << 2, 1 << 3]).unwrap();
        let sol = solve_affine(&m, idx("10")).unwrap();
        assert_eq!(sol.particular, idx("001000"));
        let mut basis: Vec<_> = sol.basis.iter().map(|b| b.bits()).collect();
        basis.sort();
        assert_eq!(basis, vec![1, 2, 16, 32]);
    }

    #[test]
    fn solve_affine_full_rank_square() {
        let m = BitMatrix::from_column_masks(3, &[0b011, 0b110, 0b001]).unwrap();
        let j = idx("101");
        let sol = solve_affine(&m, j).unwrap();
        assert!(sol.basis.is_empty());
        assert_eq!(m.transpose_mul(sol.particular).unwrap(), j);
    }

    #[test]
    fn solve_affine_inconsistent() {
        let m = BitMatrix::from_column_masks(3, &[0b011, 0b011]).unwrap();
        assert_eq!(solve_affine(&m, idx("01")).unwrap_err(), Gf2Error::Inconsistent);
        assert!(solve_affine(&m, idx("11")).is_ok());
    }

    #[test]
    fn solve_affine_matches_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let m = random_matrix(8, 3, &mut rng);
            let rank = m.rank();
            for jb in 0..8u64 {
                let j = BitIndex::masked(jb, 3);
                let scan: Vec<u64> = (0..256u64)
                    .filter(|&k| m.transpose_mul(BitIndex::masked(k, 8)).unwrap() == j)
                    .collect();
                match solve_affine(&m, j) {
                    Ok(sol) => {
                        assert_eq!(sol.basis.len(), 8 - rank);
                        let mut got: Vec<u64> = sol.iter().map(|k| k.bits()).collect();
                        got.sort();
                        assert_eq!(got, scan);
                    }
                    Err(Gf2Error::Inconsistent) => assert!(scan.is_empty()),
                    Err(e) => panic!("{e}"),
                }
            }
        }
    }

    #[test]
    fn rref_rank_of_identity() {
        assert_eq!(BitMatrix::identity(70).rank(), 70);
        let mut m = BitMatrix::zeros(3, 3);
        m.set(0, 0, 1);
        m.set(1, 0, 1);
        assert_eq!(m.rank(), 1);
    }

    proptest! {
        #[test]
        fn hash_is_linear(cols in proptest::collection::vec(0u64..1024, 1..6), a in 0u64..1024, b in 0u64..1024) {
            let m = BitMatrix::from_column_masks(10, &cols).unwrap();
            let (ka, kb) = (BitIndex::masked(a, 10), BitIndex::masked(b, 10));
            let lhs = m.transpose_mul(ka ^ kb).unwrap();
            let rhs = m.transpose_mul(ka).unwrap() ^ m.transpose_mul(kb).unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn inner_product_symmetric_bilinear(a in 0u64..4096, b in 0u64..4096, c in 0u64..4096) {
            let (a, b, c) = (BitIndex::masked(a, 12), BitIndex::masked(b, 12), BitIndex::masked(c, 12));
            prop_assert_eq!(inner_product(a, b).unwrap(), inner_product(b, a).unwrap());
            prop_assert_eq!(
                inner_product(a ^ b, c).unwrap(),
                inner_product(a, c).unwrap() ^ inner_product(b, c).unwrap()
            );
        }

        #[test]
        fn msb_string_round_trips(v in any::<u64>(), w in 1u32..=64) {
            let k = BitIndex::masked(v, w);
            prop_assert_eq!(BitIndex::parse_msb_first(&k.to_string()).unwrap(), k);
        }
    }
}
