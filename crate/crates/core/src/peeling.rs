//! Round-based peeling decoder.
//!
//! Each sweep classifies every bin against the live observations, then
//! subtracts all single-tons found in that sweep from every group at once.
//! Decoding stops at the first sweep that finds nothing new.
//!
//! `recovered[k]` accumulates every value peeled at `k`. A detection at an
//! index that is already recovered is counted as a conflict but still
//! applied, so that the live observations always equal the original ones
//! minus the contribution of `recovered`. A spurious peel is therefore
//! undone when its own residue is later detected with the opposite sign.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::detect::{Detection, Detector};
use crate::frontend::{BinObservations, OffsetPlan, SubsamplingPlan};
use crate::gf2::{parity, BitIndex};
use crate::signal::SparseSpectrum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeReport {
    pub sweeps: usize,
    pub peels: usize,
    pub conflicts: usize,
    pub stalled: bool,
    pub residual_energy: f64,
    pub samples_used: usize,
}

impl DecodeReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// One applied peel, in application order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peel {
    pub sweep: usize,
    pub group: usize,
    pub bin: usize,
    pub k: BitIndex,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct DecodeOutcome {
    pub spectrum: SparseSpectrum,
    pub report: DecodeReport,
    pub transcript: Vec<Peel>,
    /// Observations left after the final sweep.
    pub residual: BinObservations,
}

/// Default sweep cap `2K + 10`.
pub fn default_max_iters(k: usize) -> usize {
    2 * k + 10
}

fn subtract(
    live: &mut BinObservations,
    plan: &SubsamplingPlan,
    offsets: &OffsetPlan,
    k: u64,
    value: f64,
) -> Vec<(usize, usize)> {
    let mut touched = Vec::with_capacity(plan.groups());
    for c in 0..plan.groups() {
        let j = plan.hash(c, k) as usize;
        for (u, &d) in live.column_mut(c, j).iter_mut().zip(offsets.rows(c)) {
            *u -= if parity(d & k) == 1 { -value } else { value };
        }
        touched.push((c, j));
    }
    touched
}

fn residual_energy(live: &BinObservations) -> f64 {
    let p = live.p() as f64;
    live.data().iter().map(|v| v * v).sum::<f64>() / p
}

/// Peels `obs` until no single-ton remains or `max_iters` sweeps elapse.
pub fn decode_detailed(
    obs: &BinObservations,
    plan: &SubsamplingPlan,
    offsets: &OffsetPlan,
    detector: &Detector,
    max_iters: usize,
) -> DecodeOutcome {
    let groups = plan.groups();
    let bins = plan.bins();
    let mut live = obs.clone();
    let mut recovered: BTreeMap<u64, f64> = BTreeMap::new();
    let mut transcript = Vec::new();
    let mut report = DecodeReport {
        sweeps: 0,
        peels: 0,
        conflicts: 0,
        stalled: false,
        residual_energy: 0.0,
        samples_used: obs.samples_distinct(),
    };
    // Classification is a pure function of a bin's column, so only bins
    // touched by the previous sweep need to be looked at again.
    let mut dirty: Vec<(usize, usize)> = (0..groups).flat_map(|c| (0..bins).map(move |j| (c, j))).collect();
    let value_tol = detector.config.zero_tol.max(1e-12);

    while report.sweeps < max_iters {
        report.sweeps += 1;
        let mut found: Vec<(usize, usize, u64, f64)> = Vec::new();
        let mut seen: HashMap<u64, f64> = HashMap::new();
        for &(c, j) in &dirty {
            if let Detection::SingleTon { k, value } = detector.classify(live.column(c, j), j as u64, c, plan, offsets)
            {
                match seen.get(&k.bits()) {
                    Some(&first) => {
                        if (first - value).abs() > value_tol {
                            report.conflicts += 1;
                        }
                    }
                    None => {
                        seen.insert(k.bits(), value);
                        found.push((c, j, k.bits(), value));
                    }
                }
            }
        }
        if found.is_empty() {
            break;
        }
        let mut touched: Vec<(usize, usize)> = Vec::new();
        for (c, j, k, value) in found {
            let entry = recovered.entry(k).or_insert(0.0);
            if *entry != 0.0 {
                report.conflicts += 1;
            }
            *entry += value;
            if entry.abs() <= value_tol {
                recovered.remove(&k);
            }
            touched.extend(subtract(&mut live, plan, offsets, k, value));
            report.peels += 1;
            transcript.push(Peel {
                sweep: report.sweeps,
                group: c,
                bin: j,
                k: BitIndex::masked(k, plan.n()),
                value,
            });
        }
        touched.sort_unstable();
        touched.dedup();
        dirty = touched;
    }

    report.residual_energy = residual_energy(&live);
    let cells = (groups * bins) as f64;
    report.stalled = report.residual_energy > cells * detector.config.energy_threshold();

    let mut spectrum = SparseSpectrum::new(plan.n());
    for (k, v) in recovered {
        spectrum
            .insert(BitIndex::masked(k, plan.n()), v)
            .expect("index width matches plan");
    }
    DecodeOutcome {
        spectrum,
        report,
        transcript,
        residual: live,
    }
}

pub fn decode(
    obs: &BinObservations,
    plan: &SubsamplingPlan,
    offsets: &OffsetPlan,
    detector: &Detector,
    max_iters: usize,
) -> (SparseSpectrum, DecodeReport) {
    let out = decode_detailed(obs, plan, offsets, detector, max_iters);
    (out.spectrum, out.report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportCheck {
    pub support_equal: bool,
    pub values_equal: bool,
}

impl SupportCheck {
    pub fn success(&self) -> bool {
        self.support_equal
    }
}

/// Support equality, with value agreement reported separately.
pub fn verify_support(recovered: &SparseSpectrum, truth: &SparseSpectrum) -> SupportCheck {
    let support_equal = recovered.n() == truth.n()
        && recovered.len() == truth.len()
        && recovered.iter().all(|(k, _)| truth.get(k).is_some());
    let values_equal = support_equal
        && recovered.iter().all(|(k, v)| {
            let t = truth.get(k).expect("support checked");
            (v - t).abs() <= 1e-9 * t.abs().max(1.0)
        });
    SupportCheck {
        support_equal,
        values_equal,
    }
}
