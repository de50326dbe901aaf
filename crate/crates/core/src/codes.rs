//! Rate-1/2 (3,6)-regular LDPC codes with a systematic generator and a
//! parallel Gallager bit-flipping decoder.
//!
//! Codewords are packed into a single word, so `n_block = 2 n_info <= 64`.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::gf2::{parity, BitIndex, BitMatrix};

const VAR_DEGREE: usize = 3;
const CHECK_DEGREE: usize = 6;
const MAX_ATTEMPTS: usize = 1000;
pub const DEFAULT_MAX_ROUNDS: usize = 30;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodeError {
    #[error("information length {0} outside 6..=32")]
    BadLength(usize),
    #[error("no full-rank (3,6)-regular code found after {0} attempts")]
    ConstructionFailed(usize),
    #[error("word has {found} bits, expected {expected}")]
    Length { expected: usize, found: usize },
    #[error("parity-check matrix is not systematic-reducible")]
    Singular,
    #[error("code parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LdpcCode {
    n_info: usize,
    n_block: usize,
    h: BitMatrix,
    check_masks: Vec<u64>,
    var_checks: Vec<Vec<usize>>,
    generator_rows: Vec<u64>,
}

impl LdpcCode {
    /// Wraps a parity-check matrix whose last `rows` columns are independent.
    pub fn from_parity_checks(h: BitMatrix) -> Result<Self, CodeError> {
        let m = h.rows();
        let n_block = h.cols();
        if n_block > 64 || m >= n_block {
            return Err(CodeError::Singular);
        }
        let n_info = n_block - m;
        let generator_rows = systematic_generator(&h)?;
        let check_masks: Vec<u64> = (0..m).map(|r| h.row_mask(r)).collect();
        let var_checks = (0..n_block)
            .map(|v| (0..m).filter(|&r| (check_masks[r] >> v) & 1 == 1).collect())
            .collect();
        Ok(Self {
            n_info,
            n_block,
            h,
            check_masks,
            var_checks,
            generator_rows,
        })
    }

    pub fn n_info(&self) -> usize {
        self.n_info
    }

    pub fn n_block(&self) -> usize {
        self.n_block
    }

    pub fn parity_checks(&self) -> &BitMatrix {
        &self.h
    }

    /// Row `r` of the `n_block x n_info` generator: coded bit `r` of `G k` is
    /// `<row_r, k>`. The first `n_info` rows are unit vectors.
    pub fn generator_rows(&self) -> &[u64] {
        &self.generator_rows
    }

    pub fn generator(&self) -> BitMatrix {
        BitMatrix::from_row_masks(self.n_info, &self.generator_rows).expect("rows fit")
    }

    pub fn syndrome(&self, word: u64) -> u64 {
        self.check_masks
            .iter()
            .enumerate()
            .fold(0, |acc, (r, &mask)| acc | (u64::from(parity(mask & word)) << r))
    }

    pub fn is_codeword(&self, word: BitIndex) -> bool {
        word.width() as usize == self.n_block && self.syndrome(word.bits()) == 0
    }

    /// Sparse text form: header `ldpc n_info=<> n_block=<> checks=<>`, then one
    /// `row col` line per nonzero of `H`.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "ldpc n_info={} n_block={} checks={}\n",
            self.n_info,
            self.n_block,
            self.h.rows()
        );
        for r in 0..self.h.rows() {
            for c in 0..self.h.cols() {
                if self.h.get(r, c) == 1 {
                    writeln!(out, "{r} {c}").expect("writing to String");
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, CodeError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| CodeError::Parse("missing header".into()))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("ldpc") {
            return Err(CodeError::Parse("header must start with `ldpc`".into()));
        }
        let (mut n_info, mut n_block, mut checks) = (None, None, None);
        for f in fields {
            let (key, value) = f
                .split_once('=')
                .ok_or_else(|| CodeError::Parse(format!("bad header field {f:?}")))?;
            let value: usize = value
                .parse()
                .map_err(|_| CodeError::Parse(format!("bad number in {f:?}")))?;
            match key {
                "n_info" => n_info = Some(value),
                "n_block" => n_block = Some(value),
                "checks" => checks = Some(value),
                _ => return Err(CodeError::Parse(format!("unknown header field {key:?}"))),
            }
        }
        let (Some(n_info), Some(n_block), Some(checks)) = (n_info, n_block, checks) else {
            return Err(CodeError::Parse("incomplete header".into()));
        };
        if n_block > 64 || checks + n_info != n_block {
            return Err(CodeError::Parse("inconsistent dimensions".into()));
        }
        let mut h = BitMatrix::zeros(checks, n_block);
        for line in lines {
            let mut parts = line.split_whitespace().map(str::parse::<usize>);
            match (parts.next(), parts.next(), parts.next()) {
                (Some(Ok(r)), Some(Ok(c)), None) if r < checks && c < n_block => h.set(r, c, 1),
                _ => return Err(CodeError::Parse(format!("bad entry line {line:?}"))),
            }
        }
        Self::from_parity_checks(h)
    }
}

/// Reduces `H = [A | S]` with `S` the last `m` columns to `[A' | I]` and
/// returns the generator rows `[I; A']`.
fn systematic_generator(h: &BitMatrix) -> Result<Vec<u64>, CodeError> {
    let m = h.rows();
    let n_block = h.cols();
    let n_info = n_block - m;
    let mut work = h.clone();
    for i in 0..m {
        let col = n_info + i;
        let pivot = (i..m).find(|&r| work.get(r, col) == 1).ok_or(CodeError::Singular)?;
        work.swap_rows(i, pivot);
        for r in 0..m {
            if r != i && work.get(r, col) == 1 {
                work.xor_row_into(i, r);
            }
        }
    }
    let info_mask = if n_info == 64 { u64::MAX } else { (1u64 << n_info) - 1 };
    Ok((0..n_info)
        .map(|t| 1u64 << t)
        .chain((0..m).map(|r| work.row_mask(r) & info_mask))
        .collect())
}

fn count_four_cycles(checks: &[Vec<usize>]) -> usize {
    let mut total = 0;
    for a in 0..checks.len() {
        for b in a + 1..checks.len() {
            let shared = checks[a].iter().filter(|v| checks[b].contains(v)).count();
            total += shared * shared.saturating_sub(1) / 2;
        }
    }
    total
}

fn has_duplicates(check: &[usize]) -> bool {
    let mut seen = HashSet::new();
    !check.iter().all(|v| seen.insert(*v))
}

/// Samples a (3,6)-regular code on `2 n_info` variables and `n_info` checks.
pub fn build_regular_ldpc<R: Rng + ?Sized>(n_info: usize, rng: &mut R) -> Result<LdpcCode, CodeError> {
    if !(6..=32).contains(&n_info) {
        return Err(CodeError::BadLength(n_info));
    }
    let n_block = 2 * n_info;
    let m = n_info;
    for _ in 0..MAX_ATTEMPTS {
        let mut sockets: Vec<usize> = (0..n_block).flat_map(|v| std::iter::repeat_n(v, VAR_DEGREE)).collect();
        sockets.shuffle(rng);
        let mut checks: Vec<Vec<usize>> = sockets.chunks(CHECK_DEGREE).map(<[usize]>::to_vec).collect();
        debug_assert_eq!(checks.len(), m);

        // Edge swaps between random check pairs, accepted when the graph stays
        // simple and the 4-cycle count does not grow.
        let mut cycles = count_four_cycles(&checks);
        let mut dup = checks.iter().filter(|c| has_duplicates(c)).count();
        for _ in 0..4000 {
            if dup == 0 && cycles == 0 {
                break;
            }
            let (a, b) = (rng.random_range(0..m), rng.random_range(0..m));
            if a == b {
                continue;
            }
            let (ia, ib) = (rng.random_range(0..CHECK_DEGREE), rng.random_range(0..CHECK_DEGREE));
            let (va, vb) = (checks[a][ia], checks[b][ib]);
            if va == vb {
                continue;
            }
            checks[a][ia] = vb;
            checks[b][ib] = va;
            let new_dup = checks.iter().filter(|c| has_duplicates(c)).count();
            let new_cycles = count_four_cycles(&checks);
            if new_dup < dup || (new_dup == dup && new_cycles <= cycles) {
                dup = new_dup;
                cycles = new_cycles;
            } else {
                checks[a][ia] = va;
                checks[b][ib] = vb;
            }
        }
        if dup > 0 {
            continue;
        }
        let mut h = BitMatrix::zeros(m, n_block);
        for (r, vars) in checks.iter().enumerate() {
            for &v in vars {
                h.set(r, v, 1);
            }
        }
        let columns: Vec<u64> = (0..n_block).map(|c| h.column_mask(c)).collect();
        if columns.iter().collect::<HashSet<_>>().len() != n_block {
            continue;
        }
        let pivots = h.clone().rref_in_place();
        if pivots.len() != m {
            continue;
        }
        let order: Vec<usize> = (0..n_block)
            .filter(|c| !pivots.contains(c))
            .chain(pivots.iter().copied())
            .collect();
        return LdpcCode::from_parity_checks(h.permute_columns(&order));
    }
    Err(CodeError::ConstructionFailed(MAX_ATTEMPTS))
}

/// `G k`.
pub fn encode(code: &LdpcCode, k: BitIndex) -> Result<BitIndex, CodeError> {
    if k.width() as usize != code.n_info {
        return Err(CodeError::Length {
            expected: code.n_info,
            found: k.width() as usize,
        });
    }
    let word = code
        .generator_rows
        .iter()
        .enumerate()
        .fold(0u64, |acc, (r, &row)| acc | (u64::from(parity(row & k.bits())) << r));
    Ok(BitIndex::masked(word, code.n_block as u32))
}

/// Flips, in parallel, every bit involved in the largest number of failed
/// checks until the syndrome clears. Returns the information prefix, or
/// `None` after `max_rounds` unsuccessful rounds.
pub fn bitflip_decode(code: &LdpcCode, y: BitIndex, max_rounds: usize) -> Option<BitIndex> {
    if y.width() as usize != code.n_block {
        return None;
    }
    let mut word = y.bits();
    let mut counts = vec![0usize; code.n_block];
    for round in 0..=max_rounds {
        let syndrome = code.syndrome(word);
        if syndrome == 0 {
            return Some(BitIndex::masked(word, code.n_info as u32));
        }
        if round == max_rounds {
            break;
        }
        for (v, checks) in code.var_checks.iter().enumerate() {
            counts[v] = checks.iter().filter(|&&r| (syndrome >> r) & 1 == 1).count();
        }
        let top = *counts.iter().max().expect("nonempty block");
        for (v, &count) in counts.iter().enumerate() {
            if count == top {
                word ^= 1 << v;
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn code(seed: u64) -> LdpcCode {
        build_regular_ldpc(14, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn regular_degrees() {
        for seed in 0..5 {
            let c = code(seed);
            let h = c.parity_checks();
            assert_eq!((h.rows(), h.cols()), (14, 28));
            assert!((0..28).all(|v| h.column_weight(v) == 3));
            assert!((0..14).all(|r| h.row_weight(r) == 6));
        }
    }

    #[test]
    fn generator_is_systematic_and_valid() {
        let c = code(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let k = BitIndex::masked(rng.random(), 14);
            let word = encode(&c, k).unwrap();
            assert_eq!(word.bits() & 0x3fff, k.bits());
            assert!(c.is_codeword(word));
        }
        assert_eq!(encode(&c, BitIndex::zero(14)).unwrap(), BitIndex::zero(28));
    }

    #[test]
    fn parity_check_products_vanish() {
        // H (G k) computed by an explicit dense product.
        let c = code(3);
        let h = c.parity_checks();
        let g = c.generator();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let k: Vec<u8> = (0..14).map(|_| rng.random_range(0..2)).collect();
            let word = g.mul_vec(&k).unwrap();
            assert!(h.mul_vec(&word).unwrap().iter().all(|&b| b == 0));
        }
    }

    #[test]
    fn rejects_bad_lengths() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(build_regular_ldpc(5, &mut rng).unwrap_err(), CodeError::BadLength(5));
        assert_eq!(build_regular_ldpc(33, &mut rng).unwrap_err(), CodeError::BadLength(33));
        let c = code(0);
        assert!(encode(&c, BitIndex::zero(13)).is_err());
    }

    #[test]
    fn codeword_decodes_in_round_zero() {
        let c = code(5);
        let k = BitIndex::masked(0x2a5b, 14);
        let word = encode(&c, k).unwrap();
        assert_eq!(bitflip_decode(&c, word, 0), Some(k));
    }

    #[test]
    fn single_flip_corrected() {
        let mut corrected = 0;
        let mut total = 0;
        for seed in 0..50 {
            let c = code(100 + seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..4 {
                let k = BitIndex::masked(rng.random(), 14);
                let word = encode(&c, k).unwrap().bits() ^ (1 << rng.random_range(0..28));
                total += 1;
                if bitflip_decode(&c, BitIndex::masked(word, 28), 20) == Some(k) {
                    corrected += 1;
                }
            }
        }
        assert!(corrected as f64 >= 0.99 * total as f64, "{corrected}/{total}");
    }

    fn block_error_rate(c: &LdpcCode, crossover: f64, trials: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut errors = 0;
        for _ in 0..trials {
            let k = BitIndex::masked(rng.random(), 14);
            let mut word = encode(c, k).unwrap().bits();
            for v in 0..28 {
                if rng.random::<f64>() < crossover {
                    word ^= 1 << v;
                }
            }
            if bitflip_decode(c, BitIndex::masked(word, 28), DEFAULT_MAX_ROUNDS) != Some(k) {
                errors += 1;
            }
        }
        errors as f64 / trials as f64
    }

    #[test]
    fn bsc_block_error_rate() {
        let c = code(7);
        let rate = block_error_rate(&c, 0.02, 10_000, 8);
        assert!(rate <= 0.10, "block error rate {rate}");
    }

    #[test]
    fn block_errors_fall_with_crossover() {
        let c = code(9);
        let rates: Vec<f64> = [0.08, 0.04, 0.01]
            .iter()
            .map(|&p| block_error_rate(&c, p, 4000, 10))
            .collect();
        assert!(rates[0] >= rates[1] && rates[1] >= rates[2], "{rates:?}");
    }

    #[test]
    fn text_round_trip() {
        let c = code(11);
        let text = c.to_text();
        assert!(text.starts_with("ldpc n_info=14 n_block=28 checks=14\n"));
        assert_eq!(text.lines().count(), 1 + 84);
        assert_eq!(LdpcCode::from_text(&text).unwrap(), c);
        assert!(LdpcCode::from_text("ldpc n_info=2 n_block=4 checks=2\n9 9\n").is_err());
    }

    proptest! {
        #[test]
        fn encode_is_linear_and_decodes(a in 0u64..(1 << 14), b in 0u64..(1 << 14), seed in 0u64..20) {
            let c = code(seed);
            let (ka, kb) = (BitIndex::masked(a, 14), BitIndex::masked(b, 14));
            let lhs = encode(&c, ka ^ kb).unwrap();
            let rhs = encode(&c, ka).unwrap() ^ encode(&c, kb).unwrap();
            prop_assert_eq!(lhs, rhs);
            prop_assert_eq!(bitflip_decode(&c, encode(&c, ka).unwrap(), DEFAULT_MAX_ROUNDS), Some(ka));
        }
    }
}
