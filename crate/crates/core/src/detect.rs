//! Bin classification: decides whether an observation vector `U_c[j]` holds
//! no coefficient, exactly one (and which), or several.
//!
//! Sign bits follow `sgn(x) = 1` for `x < 0` and `0` otherwise, so for a
//! single-ton `sgn(U_p) = <d_p, k> ^ sgn(X[k])`.

use serde::{Deserialize, Serialize};

use crate::codes::{bitflip_decode, DEFAULT_MAX_ROUNDS};
use crate::frontend::{OffsetPlan, SubsamplingPlan, Variant};
use crate::gf2::{parity, solve_affine, BitIndex};
use crate::signal::AmplitudeMode;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Detection {
    ZeroTon,
    SingleTon { k: BitIndex, value: f64 },
    MultiTon,
}

impl Detection {
    pub fn is_single(&self) -> bool {
        matches!(self, Detection::SingleTon { .. })
    }
}

#[inline]
pub fn sgn(x: f64) -> u8 {
    u8::from(x < 0.0)
}

/// Thresholds shared by all detector variants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Verification slack: energy tests compare against `(1 + gamma) nu2`.
    pub gamma: f64,
    /// Per-entry bin noise variance `N sigma^2 / B`.
    pub nu2: f64,
    /// Constellation amplitude.
    pub rho: f64,
    pub amplitude: AmplitudeMode,
    /// Absolute zero tolerance `eps_z` on observation magnitudes.
    pub zero_tol: f64,
    /// Relative tolerance of the noiseless ratio test.
    pub ratio_tol: f64,
    pub max_flip_rounds: usize,
}

impl DetectorConfig {
    /// Exact-arithmetic settings for `sigma = 0`.
    pub fn noiseless(n: u32, rho: f64) -> Self {
        Self {
            gamma: 1.0,
            nu2: 0.0,
            rho,
            amplitude: AmplitudeMode::Constellation,
            zero_tol: 1e-9 * (0.5 * f64::from(n)).exp2() * rho,
            ratio_tol: 1e-6,
            max_flip_rounds: DEFAULT_MAX_ROUNDS,
        }
    }

    /// Settings for a `K`-sparse, `n`-bit problem observed through `2^b` bins
    /// at linear signal-to-noise ratio `snr`. `gamma = min(1, snr/4)`.
    pub fn for_snr(n: u32, b: u32, k: usize, rho: f64, snr: f64) -> Self {
        let nu2 = if snr.is_finite() {
            rho * rho * k as f64 / ((1u64 << b) as f64 * snr)
        } else {
            0.0
        };
        Self {
            gamma: (snr / 4.0).min(1.0),
            nu2,
            ..Self::noiseless(n, rho)
        }
    }

    /// `(1 + gamma) nu2`, floored so exact zero residuals always pass.
    pub fn energy_threshold(&self) -> f64 {
        (1.0 + self.gamma) * self.nu2 + self.zero_tol * self.zero_tol
    }

    fn snap(&self, correlation: f64, len: usize) -> f64 {
        match self.amplitude {
            AmplitudeMode::Constellation => {
                if correlation >= 0.0 {
                    self.rho
                } else {
                    -self.rho
                }
            }
            AmplitudeMode::Continuous => correlation / len as f64,
        }
    }
}

fn mean_energy(u: &[f64]) -> f64 {
    u.iter().map(|v| v * v).sum::<f64>() / u.len() as f64
}

fn correlate(u: &[f64], rows: &[u64], k: u64) -> f64 {
    u.iter()
        .zip(rows)
        .map(|(&v, &d)| if parity(d & k) == 1 { -v } else { v })
        .sum()
}

fn residual(u: &[f64], rows: &[u64], k: u64, value: f64) -> f64 {
    u.iter()
        .zip(rows)
        .map(|(&v, &d)| {
            let s = if parity(d & k) == 1 { -value } else { value };
            (v - s).powi(2)
        })
        .sum::<f64>()
        / u.len() as f64
}

/// Value estimate and residual verification of candidate `k` on `rows`.
fn verify(u: &[f64], rows: &[u64], k: u64, width: u32, cfg: &DetectorConfig) -> Detection {
    let value = cfg.snap(correlate(u, rows, k), u.len());
    if residual(u, rows, k, value) <= cfg.energy_threshold() {
        Detection::SingleTon {
            k: BitIndex::masked(k, width),
            value,
        }
    } else {
        Detection::MultiTon
    }
}

fn majority(bits: impl Iterator<Item = u8>) -> u8 {
    let (ones, total) = bits.fold((0usize, 0usize), |(o, t), b| (o + usize::from(b), t + 1));
    u8::from(2 * ones > total)
}

/// Ratio test on the `[0, e_1, ..., e_n]` offset layout.
pub fn detect_noiseless(u: &[f64], j: u64, c: usize, plan: &SubsamplingPlan, cfg: &DetectorConfig) -> Detection {
    let n = plan.n();
    debug_assert_eq!(u.len(), n as usize + 1);
    if u.iter().all(|v| v.abs() <= cfg.zero_tol) {
        return Detection::ZeroTon;
    }
    let u0 = u[0];
    if u0.abs() <= cfg.zero_tol {
        return Detection::MultiTon;
    }
    if u[1..].iter().any(|v| ((v / u0).abs() - 1.0).abs() > cfg.ratio_tol) {
        return Detection::MultiTon;
    }
    let s0 = sgn(u0);
    let k = u[1..]
        .iter()
        .enumerate()
        .fold(0u64, |acc, (t, &v)| acc | (u64::from(sgn(v) ^ s0) << t));
    if plan.hash(c, k) != j {
        return Detection::MultiTon;
    }
    Detection::SingleTon {
        k: BitIndex::masked(k, n),
        value: u0,
    }
}

/// Exhaustive correlation search over `{k : M_c^T k = j}` with random offsets.
pub fn detect_near_linear(
    u: &[f64],
    j: u64,
    c: usize,
    plan: &SubsamplingPlan,
    offsets: &OffsetPlan,
    cfg: &DetectorConfig,
) -> Detection {
    let rows = offsets.rows(c);
    if mean_energy(u) <= cfg.energy_threshold() {
        return Detection::ZeroTon;
    }
    let Ok(coset) = solve_affine(plan.matrix(c), BitIndex::masked(j, plan.b())) else {
        return Detection::MultiTon;
    };
    let mut best = (f64::NEG_INFINITY, 0u64);
    for k in coset.iter() {
        let score = correlate(u, rows, k.bits()).abs();
        if score > best.0 {
            best = (score, k.bits());
        }
    }
    verify(u, rows, best.1, plan.n(), cfg)
}

/// Majority vote over `P1` base rows and their single-bit modulations.
pub fn detect_nso(
    u: &[f64],
    j: u64,
    c: usize,
    plan: &SubsamplingPlan,
    offsets: &OffsetPlan,
    cfg: &DetectorConfig,
) -> Detection {
    let n = plan.n() as usize;
    let p1 = offsets.params().p1;
    let rows = offsets.rows(c);
    let (base, modulated) = u.split_at(p1);
    if mean_energy(base) <= cfg.energy_threshold() {
        return Detection::ZeroTon;
    }
    let base_signs: Vec<u8> = base.iter().map(|&v| sgn(v)).collect();
    let k = (0..n).fold(0u64, |acc, q| {
        let bit = majority((0..p1).map(|p| sgn(modulated[p * n + q]) ^ base_signs[p]));
        acc | (u64::from(bit) << q)
    });
    if plan.hash(c, k) != j {
        return Detection::MultiTon;
    }
    verify(base, &rows[..p1], k, plan.n(), cfg)
}

/// Sign reference from zero rows, then a channel decode of the coded rows.
pub fn detect_so(
    u: &[f64],
    j: u64,
    c: usize,
    plan: &SubsamplingPlan,
    offsets: &OffsetPlan,
    cfg: &DetectorConfig,
) -> Detection {
    let params = offsets.params();
    let Some(code) = offsets.code() else {
        return Detection::MultiTon;
    };
    let rows = offsets.rows(c);
    let random = &u[..params.p1];
    if mean_energy(random) <= cfg.energy_threshold() {
        return Detection::ZeroTon;
    }
    let zero = &u[params.p1..params.p1 + params.p2];
    let reference = majority(zero.iter().map(|&v| sgn(v)));
    let coded = &u[params.p1 + params.p2..];
    let y = coded
        .iter()
        .enumerate()
        .fold(0u64, |acc, (r, &v)| acc | (u64::from(sgn(v) ^ reference) << r));
    let Some(k) = bitflip_decode(code, BitIndex::masked(y, code.n_block() as u32), cfg.max_flip_rounds) else {
        return Detection::MultiTon;
    };
    if plan.hash(c, k.bits()) != j {
        return Detection::MultiTon;
    }
    verify(random, &rows[..params.p1], k.bits(), plan.n(), cfg)
}

/// Upper bound `exp(-eta * snr / 2)` on the sign-flip probability of a
/// single-ton observation.
pub fn crossover_bound(eta: f64, snr: f64) -> f64 {
    (-eta * snr / 2.0).exp()
}

/// A detector variant bound to its thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detector {
    pub variant: Variant,
    pub config: DetectorConfig,
}

impl Detector {
    pub fn new(variant: Variant, config: DetectorConfig) -> Self {
        Self { variant, config }
    }

    pub fn classify(&self, u: &[f64], j: u64, c: usize, plan: &SubsamplingPlan, offsets: &OffsetPlan) -> Detection {
        match self.variant {
            Variant::Noiseless => detect_noiseless(u, j, c, plan, &self.config),
            Variant::NearLinear => detect_near_linear(u, j, c, plan, offsets, &self.config),
            Variant::Nso => detect_nso(u, j, c, plan, offsets, &self.config),
            Variant::So => detect_so(u, j, c, plan, offsets, &self.config),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::build_regular_ldpc;
    use crate::frontend::{build_offsets, build_plan, observe, OffsetParams, PlanRequest, Profile, Regime};
    use crate::signal::{db_to_linear, sigma_for_snr, NoisyAccess};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn idx(s: &str) -> BitIndex {
        BitIndex::parse_msb_first(s).unwrap()
    }

    fn example_plan() -> SubsamplingPlan {
        build_plan(
            4,
            4,
            PlanRequest::Explicit {
                regime: Regime::Window,
                b: Some(2),
                groups: Some(2),
            },
        )
        .unwrap()
    }

    /// Column of a bin built directly from its members' offset signatures.
    fn column(rows: &[u64], members: &[(u64, f64)]) -> Vec<f64> {
        rows.iter()
            .map(|&d| {
                members
                    .iter()
                    .map(|&(k, x)| if parity(d & k) == 1 { -x } else { x })
                    .sum()
            })
            .collect()
    }

    fn noiseless_rows(n: u32) -> Vec<u64> {
        std::iter::once(0).chain((0..n).map(|t| 1 << t)).collect()
    }

    #[test]
    fn sign_convention() {
        assert_eq!(sgn(-0.5), 1);
        assert_eq!(sgn(0.5), 0);
        assert_eq!(sgn(0.0), 0);
    }

    #[test]
    fn noiseless_single_ton_from_worked_example() {
        let plan = example_plan();
        let cfg = DetectorConfig::noiseless(4, 1.0);
        let u = column(&noiseless_rows(4), &[(idx("0100").bits(), 2.0)]);
        assert_eq!(u, vec![2.0, 2.0, 2.0, -2.0, 2.0]);
        let det = detect_noiseless(&u, 0b00, 0, &plan, &cfg);
        assert_eq!(
            det,
            Detection::SingleTon {
                k: idx("0100"),
                value: 2.0
            }
        );
    }

    #[test]
    fn noiseless_zero_and_multi() {
        let plan = example_plan();
        let cfg = DetectorConfig::noiseless(4, 1.0);
        assert_eq!(detect_noiseless(&[0.0; 5], 0, 0, &plan, &cfg), Detection::ZeroTon);
        let u = column(
            &noiseless_rows(4),
            &[(idx("0110").bits(), 4.0), (idx("1010").bits(), 1.0)],
        );
        assert_eq!(detect_noiseless(&u, 0b10, 0, &plan, &cfg), Detection::MultiTon);
    }

    #[test]
    fn noiseless_rejects_wrong_bin() {
        let plan = example_plan();
        let cfg = DetectorConfig::noiseless(4, 1.0);
        let u = column(&noiseless_rows(4), &[(idx("0100").bits(), 2.0)]);
        assert_eq!(detect_noiseless(&u, 0b01, 0, &plan, &cfg), Detection::MultiTon);
    }

    fn noisy_setup(variant: Variant, seed: u64) -> (SubsamplingPlan, OffsetPlan) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 10;
        let plan = build_plan(
            n,
            64,
            PlanRequest::Explicit {
                regime: Regime::Window,
                b: Some(6),
                groups: Some(1),
            },
        )
        .unwrap();
        let code = build_regular_ldpc(n as usize, &mut rng).unwrap();
        let params = match variant {
            Variant::NearLinear => OffsetParams {
                p1: 3 * n as usize,
                p2: 0,
                p3: 0,
            },
            v => OffsetParams::defaults(v, n),
        };
        let off = build_offsets(variant, &plan, params, Some(&code), &mut rng).unwrap();
        (plan, off)
    }

    #[test]
    fn noiseless_completeness_for_all_variants() {
        for variant in [Variant::NearLinear, Variant::Nso, Variant::So] {
            let (plan, off) = noisy_setup(variant, 1);
            let cfg = DetectorConfig::for_snr(10, 6, 64, 1.0, f64::INFINITY);
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            for _ in 0..50 {
                let k = rng.random_range(0..1024u64);
                let x = if rng.random() { 1.0 } else { -1.0 };
                let u = column(off.rows(0), &[(k, x)]);
                let j = plan.hash(0, k);
                let det = Detector::new(variant, cfg).classify(&u, j, 0, &plan, &off);
                assert_eq!(
                    det,
                    Detection::SingleTon {
                        k: BitIndex::masked(k, 10),
                        value: x
                    },
                    "{variant:?}"
                );
                let zero = vec![0.0; off.p()];
                assert_eq!(
                    Detector::new(variant, cfg).classify(&zero, j, 0, &plan, &off),
                    Detection::ZeroTon
                );
            }
        }
    }

    #[test]
    fn near_linear_zero_ton_with_configured_noise() {
        let (plan, off) = noisy_setup(Variant::NearLinear, 3);
        let cfg = DetectorConfig::for_snr(10, 6, 64, 1.0, 10.0);
        assert!(cfg.nu2 > 0.0);
        assert_eq!(
            detect_near_linear(&vec![0.0; off.p()], 5, 0, &plan, &off, &cfg),
            Detection::ZeroTon
        );
    }

    #[test]
    fn near_linear_continuous_value() {
        let (plan, off) = noisy_setup(Variant::NearLinear, 4);
        let mut cfg = DetectorConfig::for_snr(10, 6, 64, 1.0, f64::INFINITY);
        cfg.amplitude = AmplitudeMode::Continuous;
        let u = column(off.rows(0), &[(77, 2.0)]);
        let det = detect_near_linear(&u, plan.hash(0, 77), 0, &plan, &off, &cfg);
        assert_eq!(
            det,
            Detection::SingleTon {
                k: BitIndex::masked(77, 10),
                value: 2.0
            }
        );
    }

    #[test]
    fn so_removes_negative_sign() {
        let (plan, off) = noisy_setup(Variant::So, 5);
        let cfg = DetectorConfig::for_snr(10, 6, 64, 1.0, f64::INFINITY);
        let u = column(off.rows(0), &[(300, -1.0)]);
        let p = off.params();
        assert!(u[p.p1..p.p1 + p.p2].iter().all(|&v| sgn(v) == 1));
        let det = detect_so(&u, plan.hash(0, 300), 0, &plan, &off, &cfg);
        assert_eq!(
            det,
            Detection::SingleTon {
                k: BitIndex::masked(300, 10),
                value: -1.0
            }
        );
    }

    #[test]
    fn majority_ties_to_zero() {
        assert_eq!(majority([0, 0, 1, 0, 1].into_iter()), 0);
        assert_eq!(majority([1, 1, 0].into_iter()), 1);
        assert_eq!(majority([1, 0].into_iter()), 0);
    }

    #[test]
    fn crossover_examples() {
        assert!((crossover_bound(1.0, 10.0) - 6.737946999085467e-3).abs() < 1e-15);
        assert_eq!(crossover_bound(1.0, f64::INFINITY), 0.0);
    }

    /// Single-ton bins at a fixed per-entry noise level through each detector.
    fn single_ton_success(variant: Variant, n: u32, b: u32, k_total: usize, snr_db: f64, trials: usize) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let snr = db_to_linear(snr_db);
        let plan = build_plan(
            n,
            1 << b,
            PlanRequest::Explicit {
                regime: Regime::Window,
                b: Some(b),
                groups: Some(1),
            },
        )
        .unwrap();
        let cfg = DetectorConfig::for_snr(n, b, k_total, 1.0, snr);
        let noise = Normal::new(0.0, cfg.nu2.sqrt()).unwrap();
        let mut ok = 0;
        for _ in 0..trials {
            let code = (variant == Variant::So).then(|| build_regular_ldpc(n as usize, &mut rng).unwrap());
            let params = match variant {
                Variant::NearLinear => OffsetParams {
                    p1: 3 * n as usize,
                    p2: 0,
                    p3: 0,
                },
                v => OffsetParams::defaults(v, n),
            };
            let off = build_offsets(variant, &plan, params, code.as_ref(), &mut rng).unwrap();
            let k = rng.random_range(0..1u64 << n);
            let x = if rng.random() { 1.0 } else { -1.0 };
            let mut u = column(off.rows(0), &[(k, x)]);
            u.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
            let det = Detector::new(variant, cfg).classify(&u, plan.hash(0, k), 0, &plan, &off);
            if det
                == (Detection::SingleTon {
                    k: BitIndex::masked(k, n),
                    value: x,
                })
            {
                ok += 1;
            }
        }
        ok as f64 / trials as f64
    }

    #[test]
    fn near_linear_monte_carlo() {
        let rate = single_ton_success(Variant::NearLinear, 10, 6, 64, 10.0, 1000);
        assert!(rate >= 0.99, "{rate}");
    }

    #[test]
    fn nso_monte_carlo() {
        let rate = single_ton_success(Variant::Nso, 14, 5, 20, 10.0, 1000);
        assert!(rate >= 0.99, "{rate}");
    }

    #[test]
    fn so_monte_carlo() {
        let rate = single_ton_success(Variant::So, 14, 5, 20, 10.0, 1000);
        assert!(rate >= 0.95, "{rate}");
    }

    #[test]
    fn nso_xor_flip_rate_matches_theta() {
        // Z' = Z_a ^ Z_b for independent flips with probability pe.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let nu = 0.6f64;
        let noise = Normal::new(0.0, nu).unwrap();
        let trials = 200_000;
        let (mut single, mut xored) = (0usize, 0usize);
        for _ in 0..trials {
            let a = sgn(1.0 + noise.sample(&mut rng));
            let b = sgn(1.0 + noise.sample(&mut rng));
            single += usize::from(a);
            xored += usize::from(a ^ b);
        }
        let pe = single as f64 / trials as f64;
        let theta = 2.0 * pe * (1.0 - pe);
        let observed = xored as f64 / trials as f64;
        let sd = (theta * (1.0 - theta) / trials as f64).sqrt();
        assert!((observed - theta).abs() <= 3.0 * sd + 1e-3, "{observed} vs {theta}");
    }

    #[test]
    fn signature_is_multiplicative() {
        let (_, off) = noisy_setup(Variant::NearLinear, 6);
        let (a, b) = (0b1011001110u64, 0b0110110001u64);
        let sa = off.signature(0, a);
        let sb = off.signature(0, b);
        let sab = off.signature(0, a ^ b);
        for i in 0..off.p() {
            assert_eq!(sab[i], sa[i] * sb[i]);
        }
    }

    #[test]
    fn detections_are_hash_consistent_on_real_observations() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 12;
        let k_total = 16;
        let spectrum = crate::signal::draw_spectrum(n, k_total, 1.0, &mut rng).unwrap();
        let plan = build_plan(n, k_total, PlanRequest::Auto(Profile::Benchmark)).unwrap();
        let off = build_offsets(
            Variant::Nso,
            &plan,
            OffsetParams::defaults(Variant::Nso, n),
            None,
            &mut rng,
        )
        .unwrap();
        let snr = db_to_linear(5.0);
        let sigma = sigma_for_snr(1.0, k_total, 4096.0, snr);
        let obs = observe(&mut NoisyAccess::new(spectrum, sigma, 1), &plan, &off).unwrap();
        let det = Detector::new(Variant::Nso, DetectorConfig::for_snr(n, plan.b(), k_total, 1.0, snr));
        for c in 0..plan.groups() {
            for j in 0..plan.bins() {
                if let Detection::SingleTon { k, .. } = det.classify(obs.column(c, j), j as u64, c, &plan, &off) {
                    assert_eq!(plan.hash(c, k.bits()), j as u64);
                }
            }
        }
    }
}
