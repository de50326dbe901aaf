//! Monte-Carlo harness: seeded trials, SNR sweeps and scaling sweeps.
//!
//! Trial `t` of a run with seed `s` draws everything from a ChaCha stream
//! keyed by `(s, t)`, so a grid point is reproducible in isolation and the
//! same spectra are reused across the SNR grid.

use std::io;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codes::{build_regular_ldpc, CodeError};
use crate::detect::{Detector, DetectorConfig};
use crate::frontend::{build_offsets, build_plan, observe, FrontendError, OffsetParams, PlanRequest, Profile, Variant};
use crate::peeling::{decode, default_max_iters, verify_support, DecodeReport};
use crate::signal::{db_to_linear, draw_spectrum, sigma_for_snr, NoisyAccess, SignalError, SparseSpectrum};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl ExperimentError {
    pub fn is_config(&self) -> bool {
        matches!(self, ExperimentError::Config(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Signal length exponent for SNR sweeps.
    pub n: u32,
    /// Inclusive `n` range for scaling sweeps.
    pub n_min: u32,
    pub n_max: u32,
    pub k: Vec<usize>,
    pub snr_db: Vec<f64>,
    /// SNR used by scaling sweeps.
    pub scaling_snr_db: f64,
    pub algorithm: Variant,
    pub trials: usize,
    pub seed: u64,
    pub success_threshold: f64,
    pub rho: f64,
    /// Row-count overrides; unset counts use [`OffsetParams::defaults`].
    pub p1: Option<usize>,
    pub p2: Option<usize>,
    pub p3: Option<usize>,
    pub profile: Profile,
    /// Worker threads; 0 picks the available parallelism.
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 14,
            n_min: 7,
            n_max: 17,
            k: vec![10, 20, 30, 40],
            snr_db: vec![-5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
            scaling_snr_db: 10.0,
            algorithm: Variant::Nso,
            trials: 200,
            seed: 0,
            success_threshold: 0.95,
            rho: 1.0,
            p1: None,
            p2: None,
            p3: None,
            profile: Profile::Benchmark,
            workers: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |msg: String| Err(ExperimentError::Config(msg));
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if self.k.is_empty() || self.k.contains(&0) {
            return bad("K list must be nonempty with every K >= 1".into());
        }
        if self.snr_db.iter().chain([&self.scaling_snr_db]).any(|s| !s.is_finite()) {
            return bad("SNR grid must be finite".into());
        }
        if self.rho.is_nan() || self.rho <= 0.0 {
            return bad("rho must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.success_threshold) {
            return bad("success threshold must lie in [0, 1]".into());
        }
        if self.n_min > self.n_max {
            return bad(format!("n_min {} exceeds n_max {}", self.n_min, self.n_max));
        }
        let (lo, hi) = if self.algorithm == Variant::So {
            (6, 32)
        } else {
            (1, 63)
        };
        for n in [self.n, self.n_min, self.n_max] {
            if !(lo..=hi).contains(&n) {
                return bad(format!("n = {n} outside {lo}..={hi} for {}", self.algorithm));
            }
        }
        Ok(())
    }

    pub fn offset_params(&self, n: u32) -> OffsetParams {
        let d = OffsetParams::defaults(self.algorithm, n);
        OffsetParams {
            p1: self.p1.unwrap_or(d.p1),
            p2: self.p2.unwrap_or(d.p2),
            p3: self.p3.unwrap_or(d.p3),
        }
    }

    fn worker_count(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub success: bool,
    pub values_equal: bool,
    pub samples: usize,
    pub nominal_samples: usize,
    pub runtime_ns: u128,
    pub report: DecodeReport,
}

/// Sample-count formula of the benchmark layouts: `C B (n + 1)` noiseless,
/// `C B P1` near-linear, `C B P1 P2` for `nso` (`2 C B n^2` by default) and
/// `C B (P1 + P2 + P3)` for `so` (`4 C B n` by default).
pub fn nominal_samples(variant: Variant, groups: usize, bins: usize, n: u32, params: OffsetParams) -> usize {
    let per_bin = match variant {
        Variant::Noiseless => n as usize + 1,
        Variant::NearLinear => params.p1,
        Variant::Nso => params.p1 * params.p2,
        Variant::So => params.p1 + params.p2 + params.p3,
    };
    groups * bins * per_bin
}

pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Output of one observe-and-decode pass.
#[derive(Debug, Clone)]
pub struct Recovery {
    pub spectrum: SparseSpectrum,
    pub report: DecodeReport,
    pub samples: usize,
    pub nominal_samples: usize,
    pub runtime_ns: u128,
}

/// Builds plan, offsets and detector for `truth`, then observes and decodes.
/// `k` sizes the plan and may differ from the true sparsity.
pub fn recover<R: Rng>(
    config: &ExperimentConfig,
    truth: &SparseSpectrum,
    k: usize,
    snr_db: f64,
    rng: &mut R,
) -> Result<Recovery, ExperimentError> {
    let variant = config.algorithm;
    let n = truth.n();
    let snr = db_to_linear(snr_db);
    let noiseless = variant == Variant::Noiseless;
    let sigma = if noiseless {
        0.0
    } else {
        sigma_for_snr(config.rho, k, f64::from(n).exp2(), snr)
    };
    let plan = build_plan(n, k, PlanRequest::Auto(config.profile))?;
    let code = if variant == Variant::So {
        Some(build_regular_ldpc(n as usize, rng)?)
    } else {
        None
    };
    let offsets = build_offsets(variant, &plan, config.offset_params(n), code.as_ref(), rng)?;
    let mut access = NoisyAccess::new(truth.clone(), sigma, rng.random());
    let detector_config = if noiseless {
        DetectorConfig::noiseless(n, config.rho)
    } else {
        DetectorConfig::for_snr(n, plan.b(), k, config.rho, snr)
    };
    let detector = Detector::new(variant, detector_config);

    let start = Instant::now();
    let obs = observe(&mut access, &plan, &offsets)?;
    let (spectrum, report) = decode(&obs, &plan, &offsets, &detector, default_max_iters(k));
    let runtime_ns = start.elapsed().as_nanos();

    Ok(Recovery {
        spectrum,
        report,
        samples: obs.samples_distinct(),
        nominal_samples: nominal_samples(variant, plan.groups(), plan.bins(), n, offsets.params()),
        runtime_ns,
    })
}

/// Draws, observes, decodes and verifies one instance.
pub fn run_trial(
    config: &ExperimentConfig,
    n: u32,
    k: usize,
    snr_db: f64,
    trial: u64,
) -> Result<TrialResult, ExperimentError> {
    let mut rng = trial_rng(config.seed, trial);
    let truth = draw_spectrum(n, k, config.rho, &mut rng)?;
    let out = recover(config, &truth, k, snr_db, &mut rng)?;
    let check = verify_support(&out.spectrum, &truth);
    Ok(TrialResult {
        success: check.support_equal,
        values_equal: check.values_equal,
        samples: out.samples,
        nominal_samples: out.nominal_samples,
        runtime_ns: out.runtime_ns,
        report: out.report,
    })
}

/// Runs trials `0..config.trials` for one grid point across worker threads.
pub fn run_trials(
    config: &ExperimentConfig,
    n: u32,
    k: usize,
    snr_db: f64,
) -> Result<Vec<TrialResult>, ExperimentError> {
    let trials = config.trials;
    let workers = config.worker_count().min(trials).max(1);
    let mut results: Vec<Option<Result<TrialResult, ExperimentError>>> = (0..trials).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunk = trials.div_ceil(workers);
        for (w, slots) in results.chunks_mut(chunk).enumerate() {
            scope.spawn(move || {
                for (i, slot) in slots.iter_mut().enumerate() {
                    let trial = (w * chunk + i) as u64;
                    *slot = Some(run_trial(config, n, k, snr_db, trial));
                }
            });
        }
    });
    results.into_iter().map(|r| r.expect("every trial ran")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrRow {
    pub n: u32,
    #[serde(rename = "K")]
    pub k: usize,
    pub snr_db: f64,
    pub algorithm: Variant,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_samples: f64,
    pub mean_runtime_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: u32,
    #[serde(rename = "K")]
    pub k: usize,
    pub algorithm: Variant,
    pub success_rate: f64,
    pub samples: f64,
    pub runtime_ns: f64,
    pub nominal_samples: usize,
    pub below_threshold: bool,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Success rate versus SNR for every `K` at fixed `n`.
pub fn run_snr_sweep(config: &ExperimentConfig) -> Result<Vec<SnrRow>, ExperimentError> {
    config.validate()?;
    let mut rows = Vec::new();
    for &k in &config.k {
        for &snr_db in &config.snr_db {
            let results = run_trials(config, config.n, k, snr_db)?;
            let successes = results.iter().filter(|r| r.success).count();
            rows.push(SnrRow {
                n: config.n,
                k,
                snr_db,
                algorithm: config.algorithm,
                trials: config.trials,
                successes,
                success_rate: successes as f64 / config.trials as f64,
                mean_samples: mean(results.iter().map(|r| r.samples as f64)),
                mean_runtime_ns: mean(results.iter().map(|r| r.runtime_ns as f64)),
            });
        }
    }
    Ok(rows)
}

/// Success rate, samples and runtime over `n_min..=n_max` at the scaling SNR.
pub fn run_scaling_sweep(config: &ExperimentConfig) -> Result<Vec<ScalingRow>, ExperimentError> {
    config.validate()?;
    let mut rows = Vec::new();
    for &k in &config.k {
        for n in config.n_min..=config.n_max {
            if (k as u128) > 1u128 << n {
                continue;
            }
            let results = run_trials(config, n, k, config.scaling_snr_db)?;
            let success_rate = results.iter().filter(|r| r.success).count() as f64 / config.trials as f64;
            rows.push(ScalingRow {
                n,
                k,
                algorithm: config.algorithm,
                success_rate,
                samples: mean(results.iter().map(|r| r.samples as f64)),
                runtime_ns: mean(results.iter().map(|r| r.runtime_ns as f64)),
                nominal_samples: results[0].nominal_samples,
                below_threshold: success_rate < config.success_threshold,
            });
        }
    }
    Ok(rows)
}

pub fn write_csv<T: Serialize, W: io::Write>(rows: &[T], writer: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned, R: io::Read>(reader: R) -> Result<Vec<T>, ExperimentError> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(Into::into)
}
