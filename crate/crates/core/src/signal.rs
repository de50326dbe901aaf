//! Sparse spectra, the random `K`-sparse ensemble and noisy sample access.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustc_hash::FxHashMap;
use thiserror::Error;

use crate::gf2::{BitIndex, Gf2Error};

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("sparsity {k} exceeds the {len} available indices")]
    TooSparse { k: usize, len: u128 },
    #[error("amplitude must be positive, got {0}")]
    BadAmplitude(f64),
    #[error("index width {found} does not match spectrum width {expected}")]
    Width { expected: u32, found: u32 },
    #[error("spectrum parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Gf2(#[from] Gf2Error),
}

/// Coefficient values are drawn from `{+rho, -rho}` or uniformly from
/// `+-[rho/2, 3 rho/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AmplitudeMode {
    #[default]
    Constellation,
    Continuous,
}

/// Map `k -> X[k]` over the support. Entries with value exactly zero are
/// never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSpectrum {
    n: u32,
    entries: BTreeMap<u64, f64>,
}

impl SparseSpectrum {
    pub fn new(n: u32) -> Self {
        assert!(n <= 64, "spectrum width {n} exceeds 64");
        Self {
            n,
            entries: BTreeMap::new(),
        }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub(crate) fn inv_sqrt_len(&self) -> f64 {
        (-0.5 * f64::from(self.n)).exp2()
    }

    fn check(&self, k: BitIndex) -> Result<(), SignalError> {
        if k.width() != self.n {
            return Err(SignalError::Width {
                expected: self.n,
                found: k.width(),
            });
        }
        Ok(())
    }

    /// Sets `X[k] = value`; a zero value removes the entry.
    pub fn insert(&mut self, k: BitIndex, value: f64) -> Result<Option<f64>, SignalError> {
        self.check(k)?;
        if value == 0.0 {
            return Ok(self.entries.remove(&k.bits()));
        }
        Ok(self.entries.insert(k.bits(), value))
    }

    /// `X[k] += delta`, dropping the entry if the result is exactly zero.
    pub fn add(&mut self, k: BitIndex, delta: f64) -> Result<(), SignalError> {
        self.check(k)?;
        let sum = self.entries.get(&k.bits()).copied().unwrap_or(0.0) + delta;
        if sum == 0.0 {
            self.entries.remove(&k.bits());
        } else {
            self.entries.insert(k.bits(), sum);
        }
        Ok(())
    }

    pub fn get(&self, k: BitIndex) -> Option<f64> {
        if k.width() != self.n {
            return None;
        }
        self.entries.get(&k.bits()).copied()
    }

    pub fn remove(&mut self, k: BitIndex) -> Option<f64> {
        self.entries.remove(&k.bits())
    }

    /// Entries in increasing index order.
    pub fn iter(&self) -> impl Iterator<Item = (BitIndex, f64)> + '_ {
        self.entries
            .iter()
            .map(move |(&k, &v)| (BitIndex::masked(k, self.n), v))
    }

    pub(crate) fn iter_bits(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.entries.iter().map(|(&k, &v)| (k, v))
    }

    pub fn support(&self) -> Vec<BitIndex> {
        self.iter().map(|(k, _)| k).collect()
    }

    pub fn energy(&self) -> f64 {
        self.entries.values().map(|v| v * v).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.values().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Text form: header `n=<n> K=<K>`, then one `<msb-first index> <value>`
    /// line per entry.
    pub fn to_text(&self) -> String {
        let mut out = format!("n={} K={}\n", self.n, self.len());
        for (k, v) in self.iter() {
            writeln!(out, "{k} {v}").expect("writing to String");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, SignalError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let parse_err = |line: usize, msg: &str| SignalError::Parse {
            line: line + 1,
            msg: msg.to_string(),
        };
        let (hline, header) = lines.next().ok_or_else(|| parse_err(0, "missing header"))?;
        let mut n = None;
        let mut k = None;
        for field in header.split_whitespace() {
            match field.split_once('=') {
                Some(("n", v)) => n = v.parse::<u32>().ok(),
                Some(("K", v)) => k = v.parse::<usize>().ok(),
                _ => return Err(parse_err(hline, "expected `n=<n> K=<K>`")),
            }
        }
        let (n, k) = n.zip(k).ok_or_else(|| parse_err(hline, "expected `n=<n> K=<K>`"))?;
        if n > 64 {
            return Err(parse_err(hline, "n exceeds 64"));
        }
        let mut spectrum = Self::new(n);
        for (i, line) in lines {
            let mut parts = line.split_whitespace();
            let (Some(idx), Some(val), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(parse_err(i, "expected `<index> <value>`"));
            };
            let idx = BitIndex::parse_msb_first(idx).map_err(|e| parse_err(i, &e.to_string()))?;
            let val: f64 = val.parse().map_err(|_| parse_err(i, "bad value"))?;
            if spectrum.get(idx).is_some() {
                return Err(parse_err(i, "duplicate index"));
            }
            spectrum.insert(idx, val).map_err(|e| parse_err(i, &e.to_string()))?;
        }
        if spectrum.len() != k {
            return Err(parse_err(hline, "entry count does not match K"));
        }
        Ok(spectrum)
    }
}

/// Draws `k` distinct indices uniformly from `F_2^n`, each with a random sign.
pub fn draw_spectrum<R: Rng + ?Sized>(n: u32, k: usize, rho: f64, rng: &mut R) -> Result<SparseSpectrum, SignalError> {
    draw_spectrum_with(n, k, rho, AmplitudeMode::Constellation, rng)
}

pub fn draw_spectrum_with<R: Rng + ?Sized>(
    n: u32,
    k: usize,
    rho: f64,
    mode: AmplitudeMode,
    rng: &mut R,
) -> Result<SparseSpectrum, SignalError> {
    if n > 64 {
        return Err(Gf2Error::TooWide(n as usize).into());
    }
    if rho.is_nan() || rho <= 0.0 {
        return Err(SignalError::BadAmplitude(rho));
    }
    let len = 1u128 << n;
    if k as u128 > len {
        return Err(SignalError::TooSparse { k, len });
    }
    let support: Vec<u64> = if (k as u128) * 2 <= len {
        let mut seen = HashSet::with_capacity(k);
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            let idx = if n == 64 {
                rng.random::<u64>()
            } else {
                rng.random_range(0..1u64 << n)
            };
            if seen.insert(idx) {
                out.push(idx);
            }
        }
        out
    } else {
        index::sample(rng, len as usize, k)
            .into_iter()
            .map(|i| i as u64)
            .collect()
    };
    let mut spectrum = SparseSpectrum::new(n);
    for idx in support {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let magnitude = match mode {
            AmplitudeMode::Constellation => rho,
            AmplitudeMode::Continuous => rng.random_range(0.5 * rho..=1.5 * rho),
        };
        spectrum.entries.insert(idx, sign * magnitude);
    }
    Ok(spectrum)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Noise level giving `SNR = rho^2 / (sigma^2 N / K)`.
pub fn sigma_for_snr(rho: f64, k: usize, len: f64, snr_linear: f64) -> f64 {
    rho * (k as f64 / (len * snr_linear)).sqrt()
}

pub fn snr_for_sigma(rho: f64, k: usize, len: f64, sigma: f64) -> f64 {
    rho * rho / (sigma * sigma * len / k as f64)
}

/// Anything that answers time-domain sample queries.
pub trait SampleSource {
    fn n(&self) -> u32;
    /// Value at sample position `m` (an `n`-bit integer).
    fn sample(&mut self, m: u64) -> f64;
    /// Distinct positions queried so far.
    fn distinct_queries(&self) -> usize;
}

/// `u[m] = x[m] + w[m]` with `w[m] ~ N(0, sigma^2)` attached to the position,
/// so repeated queries of `m` return the same value.
#[derive(Debug, Clone)]
pub struct NoisyAccess {
    spectrum: SparseSpectrum,
    sigma: f64,
    rng: ChaCha8Rng,
    normal: Option<Normal<f64>>,
    /// Flattened support, summed in the same order as `synthesize_at`.
    terms: Vec<(u64, f64)>,
    scale: f64,
    cache: FxHashMap<u64, f64>,
}

impl NoisyAccess {
    pub fn new(spectrum: SparseSpectrum, sigma: f64, seed: u64) -> Self {
        assert!(sigma >= 0.0 && sigma.is_finite(), "sigma must be finite and >= 0");
        let normal = (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("valid sigma"));
        let scale = spectrum.inv_sqrt_len();
        let terms = spectrum.iter_bits().collect();
        Self {
            spectrum,
            sigma,
            rng: ChaCha8Rng::seed_from_u64(seed),
            normal,
            terms,
            scale,
            cache: FxHashMap::default(),
        }
    }

    pub fn spectrum(&self) -> &SparseSpectrum {
        &self.spectrum
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn query(&mut self, m: BitIndex) -> f64 {
        assert_eq!(m.width(), self.spectrum.n(), "sample index width mismatch");
        self.sample(m.bits())
    }
}

impl SampleSource for NoisyAccess {
    fn n(&self) -> u32 {
        self.spectrum.n()
    }

    fn sample(&mut self, m: u64) -> f64 {
        if let Some(&v) = self.cache.get(&m) {
            return v;
        }
        let clean: f64 = self
            .terms
            .iter()
            .map(|&(k, v)| if (k & m).count_ones() & 1 == 1 { -v } else { v })
            .sum::<f64>()
            * self.scale;
        let v = match &self.normal {
            Some(dist) => clean + dist.sample(&mut self.rng),
            None => clean,
        };
        self.cache.insert(m, v);
        v
    }

    fn distinct_queries(&self) -> usize {
        self.cache.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fwht::synthesize_at;
    use proptest::prelude::*;

    #[test]
    fn empty_draw() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(draw_spectrum(8, 0, 1.0, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn rejects_oversized_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            draw_spectrum(3, 9, 1.0, &mut rng),
            Err(SignalError::TooSparse { .. })
        ));
        assert_eq!(draw_spectrum(3, 8, 1.0, &mut rng).unwrap().len(), 8);
    }

    #[test]
    fn same_seed_same_draw() {
        let a = draw_spectrum(14, 40, 1.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = draw_spectrum(14, 40, 1.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|(_, v)| v == 1.0 || v == -1.0));
    }

    #[test]
    fn continuous_amplitudes_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = draw_spectrum_with(10, 50, 2.0, AmplitudeMode::Continuous, &mut rng).unwrap();
        assert!(s.iter().all(|(_, v)| (1.0..=3.0).contains(&v.abs())));
    }

    #[test]
    fn support_is_uniform() {
        // Chi-square over 16 cells of the top four bits; 1% critical value
        // for 15 degrees of freedom is 30.58.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut counts = [0f64; 16];
        let draws = 400;
        for _ in 0..draws {
            for (k, _) in draw_spectrum(14, 40, 1.0, &mut rng).unwrap().iter() {
                counts[(k.bits() >> 10) as usize] += 1.0;
            }
        }
        let expected = (draws * 40) as f64 / 16.0;
        let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
        assert!(chi2 < 30.58, "chi2 = {chi2}");
    }

    #[test]
    fn sigma_examples() {
        assert!((sigma_for_snr(1.0, 16, 16.0, 1.0) - 1.0).abs() < 1e-15);
        let s = sigma_for_snr(1.0, 16, 16384.0, db_to_linear(10.0));
        assert!((s - 9.882117688026186e-3).abs() < 1e-12);
        assert!((snr_for_sigma(1.0, 16, 16384.0, s) - 10.0).abs() < 1e-9);
    }

    #[test]
    fn noiseless_query_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = draw_spectrum(9, 7, 1.0, &mut rng).unwrap();
        let mut access = NoisyAccess::new(s.clone(), 0.0, 1);
        for m in 0..512 {
            let m = BitIndex::masked(m, 9);
            assert_eq!(access.query(m), synthesize_at(&s, m));
        }
    }

    #[test]
    fn repeated_query_returns_cached_sample() {
        let mut access = NoisyAccess::new(SparseSpectrum::new(10), 1.0, 3);
        let a = access.sample(17);
        let b = access.sample(17);
        assert_eq!(a, b);
        assert_eq!(access.distinct_queries(), 1);
    }

    #[test]
    fn noise_moments() {
        let trials = 100_000u64;
        let mut access = NoisyAccess::new(SparseSpectrum::new(20), 1.0, 8);
        let samples: Vec<f64> = (0..trials).map(|m| access.sample(m)).collect();
        let mean = samples.iter().sum::<f64>() / trials as f64;
        let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / trials as f64;
        assert!(mean.abs() < 3.0 / (trials as f64).sqrt());
        assert!((var - 1.0).abs() < 0.05);
    }

    #[test]
    fn ensemble_power_matches_k_rho2_over_n() {
        let (n, k, rho) = (8u32, 6usize, 1.5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut total = 0.0;
        let draws = 200;
        for _ in 0..draws {
            let s = draw_spectrum(n, k, rho, &mut rng).unwrap();
            let mut access = NoisyAccess::new(s, 0.0, 0);
            total += (0..1u64 << n).map(|m| access.sample(m).powi(2)).sum::<f64>() / 256.0;
        }
        let expected = k as f64 * rho * rho / 256.0;
        assert!((total / draws as f64 - expected).abs() / expected < 0.05);
    }

    #[test]
    fn text_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = draw_spectrum_with(12, 9, 1.0, AmplitudeMode::Continuous, &mut rng).unwrap();
        let text = s.to_text();
        assert!(text.starts_with("n=12 K=9\n"));
        assert_eq!(SparseSpectrum::from_text(&text).unwrap(), s);
        assert!(SparseSpectrum::from_text("n=4 K=2\n0100 1\n").is_err());
        assert!(SparseSpectrum::from_text("n=4 K=1\n01x0 1\n").is_err());
    }

    #[test]
    fn add_cancels_to_removal() {
        let mut s = SparseSpectrum::new(4);
        let k = BitIndex::masked(3, 4);
        s.add(k, 1.0).unwrap();
        s.add(k, -1.0).unwrap();
        assert!(s.is_empty());
        assert!(s.insert(BitIndex::masked(3, 5), 1.0).is_err());
    }

    proptest! {
        #[test]
        fn draw_has_exact_sparsity(seed in any::<u64>(), n in 1u32..12, k in 0usize..40) {
            let k = k.min(1 << n);
            let s = draw_spectrum(n, k, 1.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert_eq!(s.len(), k);
        }
    }
}
