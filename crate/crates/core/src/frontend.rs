//! Observation generator: subsampling matrices, offset plans and the bin
//! observations produced by small Walsh-Hadamard transforms.
//!
//! Group `c` reads the `B = 2^b` samples `u[M_c l ^ d]` for every offset row
//! `d`, applies a `B`-point transform and rescales by `sqrt(N)/B`, so that
//!
//! `U_{c,p}[j] = sum_{M_c^T k = j} X[k] (-1)^{<d_{c,p},k>} + W_{c,p}[j]`
//!
//! with `Var(W) = N sigma^2 / B`.

use std::io;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::ETA_TABLE;
use crate::codes::LdpcCode;
use crate::fwht::wht_unnormalized_in_place;
use crate::gf2::{parity, BitIndex, BitMatrix, Gf2Error};
use crate::signal::SampleSource;

/// Largest supported `b`; each group keeps a `2^b` position table.
pub const MAX_BIN_BITS: u32 = 24;

#[derive(Debug, Error)]
pub enum FrontendError {
    #[error("window design needs C*b <= n, got C={groups}, b={b}, n={n}")]
    WindowTooWide { n: u32, b: u32, groups: usize },
    #[error("sparsity exponent {0:.4} exceeds 0.99; no subsampling design applies")]
    TooDense(f64),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("invalid offsets: {0}")]
    InvalidOffsets(String),
    #[error("plan and offsets disagree: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Gf2(#[from] Gf2Error),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// Disjoint `b`-bit windows; group `c` reads positions `cb..(c+1)b`.
    Window,
    /// `n` split into `C` segments; group `c` keeps every segment but the `c`-th.
    CyclicDrop,
    /// Six groups over segments `k1..k6` plus a shared prefix.
    CommonPrefix6,
    /// Eight groups over segments `k1..k8` plus a shared prefix.
    CommonPrefix8,
    /// Eight groups, each dropping one of `k1..k8`, plus a shared prefix.
    CommonPrefixDense,
    /// `C` windows of width `b` spread evenly over `n`, overlapping when
    /// `C*b > n`.
    SlidingWindow,
    /// Independent random full-rank matrices with distinct nonzero rows
    /// where possible.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// `b` from the density-evolution threshold of the chosen `C`.
    Theory,
    /// Three groups with `b = ceil(log2 K)`.
    Benchmark,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanRequest {
    Auto(Profile),
    /// Missing `b` or `groups` are derived from `K` as in the theory profile.
    Explicit {
        regime: Regime,
        b: Option<u32>,
        groups: Option<usize>,
    },
}

/// The `C` hash matrices `M_c` (`n x b`, full column rank).
#[derive(Debug, Clone)]
pub struct SubsamplingPlan {
    n: u32,
    b: u32,
    regime: Regime,
    matrices: Vec<BitMatrix>,
    columns: Vec<Vec<u64>>,
    positions: Vec<Vec<u64>>,
}

fn ceil_log2(x: f64) -> u32 {
    if x <= 1.0 {
        0
    } else {
        x.log2().ceil() as u32
    }
}

fn selection_columns(positions: &[u32]) -> Vec<u64> {
    positions.iter().map(|&t| 1u64 << t).collect()
}

fn range(start: u32, len: u32) -> impl Iterator<Item = u32> {
    start..start + len
}

impl SubsamplingPlan {
    /// Builds a plan from explicit column masks (`columns[c][t]` is column `t`
    /// of `M_c`, an `n`-bit mask).
    pub fn from_columns(n: u32, regime: Regime, columns: Vec<Vec<u64>>) -> Result<Self, FrontendError> {
        if n == 0 || n > 64 {
            return Err(FrontendError::InvalidPlan(format!("n = {n} out of range 1..=64")));
        }
        let b = columns.first().map_or(0, |c| c.len()) as u32;
        if columns.is_empty() {
            return Err(FrontendError::InvalidPlan("no groups".into()));
        }
        if b == 0 || b > n || b > MAX_BIN_BITS {
            return Err(FrontendError::InvalidPlan(format!(
                "b = {b} must be in 1..=min(n, {MAX_BIN_BITS})"
            )));
        }
        let mut matrices = Vec::with_capacity(columns.len());
        let mut positions = Vec::with_capacity(columns.len());
        for (c, cols) in columns.iter().enumerate() {
            if cols.len() as u32 != b {
                return Err(FrontendError::InvalidPlan(format!(
                    "group {c} has {} columns, expected {b}",
                    cols.len()
                )));
            }
            let m = BitMatrix::from_column_masks(n as usize, cols)?;
            if m.rank() != b as usize {
                return Err(FrontendError::InvalidPlan(format!("M_{} is rank deficient", c + 1)));
            }
            positions.push(span_table(cols));
            matrices.push(m);
        }
        Ok(Self {
            n,
            b,
            regime,
            matrices,
            columns,
            positions,
        })
    }

    fn from_selections(n: u32, regime: Regime, keep: Vec<Vec<u32>>) -> Result<Self, FrontendError> {
        let columns = keep.iter().map(|p| selection_columns(p)).collect();
        Self::from_columns(n, regime, columns)
    }

    /// `groups` independent random hashes. When `2^b > n` every vertex gets a
    /// distinct nonzero `b`-bit label (row of `M_c`).
    pub fn random<R: Rng + ?Sized>(n: u32, b: u32, groups: usize, rng: &mut R) -> Result<Self, FrontendError> {
        let columns = (0..groups).map(|_| random_columns(n, b, rng)).collect();
        Self::from_columns(n, Regime::Random, columns)
    }

    /// Appends one more independent random group.
    pub fn push_random_group<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(), FrontendError> {
        let cols = random_columns(self.n, self.b, rng);
        let m = BitMatrix::from_column_masks(self.n as usize, &cols)?;
        self.positions.push(span_table(&cols));
        self.matrices.push(m);
        self.columns.push(cols);
        Ok(())
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn b(&self) -> u32 {
        self.b
    }

    pub fn bins(&self) -> usize {
        1usize << self.b
    }

    pub fn groups(&self) -> usize {
        self.matrices.len()
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn matrix(&self, c: usize) -> &BitMatrix {
        &self.matrices[c]
    }

    /// Bin of coefficient `k` in group `c`, i.e. `M_c^T k`.
    #[inline]
    pub fn hash(&self, c: usize, k: u64) -> u64 {
        self.columns[c]
            .iter()
            .enumerate()
            .fold(0u64, |acc, (t, &col)| acc | (u64::from(parity(col & k)) << t))
    }

    pub fn hash_index(&self, c: usize, k: BitIndex) -> Result<BitIndex, FrontendError> {
        Ok(self.matrices[c].transpose_mul(k)?)
    }

    /// Sample position `M_c l`.
    #[inline]
    pub fn position(&self, c: usize, l: usize) -> u64 {
        self.positions[c][l]
    }
}

fn span_table(columns: &[u64]) -> Vec<u64> {
    let b = columns.len();
    let mut table = vec![0u64; 1 << b];
    for l in 1..table.len() {
        let t = l.trailing_zeros() as usize;
        table[l] = table[l & (l - 1)] ^ columns[t];
    }
    table
}

fn random_columns<R: Rng + ?Sized>(n: u32, b: u32, rng: &mut R) -> Vec<u64> {
    let mask = if b >= 64 { u64::MAX } else { (1u64 << b) - 1 };
    loop {
        let labels: Vec<u64> = if (1u64 << b) > u64::from(n) {
            rand::seq::index::sample(rng, (1usize << b) - 1, n as usize)
                .into_iter()
                .map(|l| l as u64 + 1)
                .collect()
        } else {
            (0..n).map(|_| rng.random::<u64>() & mask).collect()
        };
        let mut cols = vec![0u64; b as usize];
        for (i, &label) in labels.iter().enumerate() {
            for (t, col) in cols.iter_mut().enumerate() {
                *col |= ((label >> t) & 1) << i;
            }
        }
        if BitMatrix::from_column_masks(n as usize, &cols)
            .map(|m| m.rank() == b as usize)
            .unwrap_or(false)
        {
            return cols;
        }
    }
}

fn window_keep(groups: usize, b: u32) -> Vec<Vec<u32>> {
    (0..groups as u32).map(|c| range(c * b, b).collect()).collect()
}

fn sliding_keep(n: u32, groups: usize, b: u32) -> Vec<Vec<u32>> {
    (0..groups)
        .map(|c| {
            let start = if groups == 1 {
                0
            } else {
                (c as f64 * f64::from(n - b) / (groups - 1) as f64).round() as u32
            };
            range(start, b).collect()
        })
        .collect()
}

fn cyclic_drop_keep(n: u32, groups: usize) -> Vec<Vec<u32>> {
    let t = n / groups as u32;
    (0..groups as u32)
        .map(|c| {
            (0..groups as u32)
                .filter(|&s| s != c)
                .flat_map(|s| range(s * t, t))
                .collect()
        })
        .collect()
}

/// Segment layouts sharing the high-order prefix. `segments` lists, per
/// group, which of the `seg_count` equal segments (1-based) are kept.
fn prefix_keep(n: u32, seg_bits: u32, seg_count: u32, segments: &[Vec<u32>]) -> Vec<Vec<u32>> {
    let prefix_start = seg_bits * seg_count;
    segments
        .iter()
        .map(|keep| {
            keep.iter()
                .flat_map(|&s| range((s - 1) * seg_bits, seg_bits))
                .chain(prefix_start..n)
                .collect()
        })
        .collect()
}

fn prefix_layout(regime: Regime) -> (u32, u32, Vec<Vec<u32>>) {
    // (segment count, bits dropped per group in units of b_c, kept segments)
    match regime {
        Regime::CommonPrefix6 => (
            6,
            4,
            vec![vec![2, 3], vec![1, 3], vec![1, 2], vec![5, 6], vec![4, 6], vec![4, 5]],
        ),
        Regime::CommonPrefix8 => {
            let mut keep = Vec::new();
            for base in [0u32, 4] {
                for drop in 1..=4 {
                    keep.push((1..=4).filter(|&s| s != drop).map(|s| s + base).collect());
                }
            }
            (8, 5, keep)
        }
        Regime::CommonPrefixDense => (
            8,
            1,
            (1..=8).map(|drop| (1..=8).filter(|&s| s != drop).collect()).collect(),
        ),
        _ => unreachable!("not a prefix regime"),
    }
}

fn eta_for(groups: usize) -> f64 {
    ETA_TABLE
        .iter()
        .find(|(c, _)| *c == groups)
        .map_or(ETA_TABLE[ETA_TABLE.len() - 1].1, |(_, eta)| *eta)
}

fn theory_b(k: usize, groups: usize) -> u32 {
    ceil_log2(eta_for(groups) * k as f64).max(1)
}

fn build_prefix(n: u32, k: usize, regime: Regime, b: Option<u32>) -> Result<SubsamplingPlan, FrontendError> {
    let (seg_count, divisor, segments) = prefix_layout(regime);
    let max_seg = n / seg_count;
    if max_seg == 0 {
        return Err(FrontendError::InvalidPlan(format!(
            "n = {n} too small for {seg_count} segments"
        )));
    }
    let seg_bits = match b {
        Some(b) => {
            if b > n || !(n - b).is_multiple_of(divisor) || (n - b) / divisor == 0 || (n - b) / divisor > max_seg {
                return Err(FrontendError::InvalidPlan(format!(
                    "b = {b} does not fit a {regime:?} layout on n = {n}"
                )));
            }
            (n - b) / divisor
        }
        None => {
            let target = theory_b(k, segments.len()).min(n);
            ((n - target) / divisor).clamp(1, max_seg)
        }
    };
    SubsamplingPlan::from_selections(n, regime, prefix_keep(n, seg_bits, seg_count, &segments))
}

fn build_windowed(n: u32, b: u32, groups: usize, regime: Regime) -> Result<SubsamplingPlan, FrontendError> {
    if b == 0 || b > n {
        return Err(FrontendError::InvalidPlan(format!("b = {b} must be in 1..={n}")));
    }
    match regime {
        Regime::Window => {
            if groups as u32 * b > n {
                return Err(FrontendError::WindowTooWide { n, b, groups });
            }
            SubsamplingPlan::from_selections(n, regime, window_keep(groups, b))
        }
        _ => SubsamplingPlan::from_selections(n, regime, sliding_keep(n, groups, b)),
    }
}

/// Chooses the hash matrices for an `n`-bit, `K`-sparse problem.
///
/// ```
/// use spright::frontend::{build_plan, PlanRequest, Profile, Regime};
///
/// let plan = build_plan(12, 16, PlanRequest::Auto(Profile::Theory)).unwrap();
/// assert_eq!(plan.regime(), Regime::Window);
/// assert_eq!(plan.groups(), 3);
/// ```
pub fn build_plan(n: u32, k: usize, request: PlanRequest) -> Result<SubsamplingPlan, FrontendError> {
    if n == 0 || n > 64 {
        return Err(FrontendError::InvalidPlan(format!("n = {n} out of range 1..=64")));
    }
    if k == 0 || (n < 64 && k as u128 > 1u128 << n) {
        return Err(FrontendError::InvalidPlan(format!("K = {k} must be in 1..=2^n")));
    }
    match request {
        PlanRequest::Auto(Profile::Benchmark) => {
            let b = ceil_log2(k as f64).max(1);
            let regime = if 3 * b <= n {
                Regime::Window
            } else {
                Regime::SlidingWindow
            };
            build_windowed(n, b, 3, regime)
        }
        PlanRequest::Auto(Profile::Theory) => {
            let delta = (k as f64).ln() / (f64::from(n) * std::f64::consts::LN_2);
            if delta <= 1.0 / 3.0 + 1e-12 {
                let b = theory_b(k, 3).min(n);
                let regime = if 3 * b <= n {
                    Regime::Window
                } else {
                    Regime::SlidingWindow
                };
                build_windowed(n, b, 3, regime)
            } else if delta <= 0.73 {
                build_prefix(n, k, Regime::CommonPrefix6, None)
            } else if delta <= 7.0 / 8.0 {
                build_prefix(n, k, Regime::CommonPrefix8, None)
            } else if delta <= 0.99 {
                build_prefix(n, k, Regime::CommonPrefixDense, None)
            } else {
                Err(FrontendError::TooDense(delta))
            }
        }
        PlanRequest::Explicit { regime, b, groups } => match regime {
            Regime::Window | Regime::SlidingWindow => {
                let groups = groups.unwrap_or(3);
                let b = b.unwrap_or_else(|| theory_b(k, groups));
                build_windowed(n, b, groups, regime)
            }
            Regime::CyclicDrop => {
                let groups = groups.unwrap_or(3);
                if groups < 2 || !n.is_multiple_of(groups as u32) {
                    return Err(FrontendError::InvalidPlan(format!(
                        "cyclic-drop needs C >= 2 dividing n, got C = {groups}, n = {n}"
                    )));
                }
                let derived = n - n / groups as u32;
                if b.is_some_and(|b| b != derived) {
                    return Err(FrontendError::InvalidPlan(format!(
                        "cyclic-drop with C = {groups} fixes b = {derived}"
                    )));
                }
                SubsamplingPlan::from_selections(n, regime, cyclic_drop_keep(n, groups))
            }
            Regime::CommonPrefix6 | Regime::CommonPrefix8 | Regime::CommonPrefixDense => {
                let expected = if regime == Regime::CommonPrefix6 { 6 } else { 8 };
                if groups.is_some_and(|g| g != expected) {
                    return Err(FrontendError::InvalidPlan(format!(
                        "{regime:?} uses exactly {expected} groups"
                    )));
                }
                build_prefix(n, k, regime, b)
            }
            Regime::Random => Err(FrontendError::InvalidPlan(
                "random plans need a generator; use SubsamplingPlan::random".into(),
            )),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Noiseless,
    NearLinear,
    Nso,
    So,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Noiseless => "noiseless",
            Variant::NearLinear => "near-linear",
            Variant::Nso => "nso",
            Variant::So => "so",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "noiseless" => Ok(Variant::Noiseless),
            "near-linear" => Ok(Variant::NearLinear),
            "nso" => Ok(Variant::Nso),
            "so" => Ok(Variant::So),
            other => Err(format!("unknown algorithm {other:?}")),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Row counts. `p1` random rows for every noisy variant; `p2` modulated rows
/// per base row (`nso`, must equal `n`) or zero rows (`so`); `p3` coded rows
/// (`so`, taken from the code's block length).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OffsetParams {
    pub p1: usize,
    pub p2: usize,
    pub p3: usize,
}

impl OffsetParams {
    /// Row counts used in the benchmark experiments for an `n`-bit problem.
    pub fn defaults(variant: Variant, n: u32) -> Self {
        let n = n as usize;
        match variant {
            Variant::Noiseless => Self { p1: 0, p2: 0, p3: 0 },
            Variant::NearLinear => Self {
                p1: 3 * n,
                p2: 0,
                p3: 0,
            },
            Variant::Nso => Self {
                p1: 2 * n,
                p2: n,
                p3: 0,
            },
            Variant::So => Self {
                p1: n,
                p2: n,
                p3: 2 * n,
            },
        }
    }
}

/// Per-group offset rows `d_{c,p}` (each an `n`-bit mask).
#[derive(Debug, Clone)]
pub struct OffsetPlan {
    variant: Variant,
    n: u32,
    params: OffsetParams,
    rows: Vec<Vec<u64>>,
    code: Option<LdpcCode>,
}

impl OffsetPlan {
    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn params(&self) -> OffsetParams {
        self.params
    }

    pub fn groups(&self) -> usize {
        self.rows.len()
    }

    /// Rows per group.
    pub fn p(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self, c: usize) -> &[u64] {
        &self.rows[c]
    }

    pub fn code(&self) -> Option<&LdpcCode> {
        self.code.as_ref()
    }

    /// `D_c` as a `P x n` matrix.
    pub fn matrix(&self, c: usize) -> BitMatrix {
        BitMatrix::from_row_masks(self.n as usize, &self.rows[c]).expect("rows fit in n bits")
    }

    /// Offset signature `s_k[p] = (-1)^{<d_{c,p}, k>}` over a row range.
    pub fn signature(&self, c: usize, k: u64) -> Vec<f64> {
        self.rows[c]
            .iter()
            .map(|&d| if parity(d & k) == 1 { -1.0 } else { 1.0 })
            .collect()
    }
}

fn random_row<R: Rng + ?Sized>(n: u32, rng: &mut R) -> u64 {
    if n >= 64 {
        rng.random()
    } else {
        rng.random_range(0..1u64 << n)
    }
}

/// Builds the offset rows of every group for a detector variant.
pub fn build_offsets<R: Rng + ?Sized>(
    variant: Variant,
    plan: &SubsamplingPlan,
    params: OffsetParams,
    code: Option<&LdpcCode>,
    rng: &mut R,
) -> Result<OffsetPlan, FrontendError> {
    let n = plan.n();
    let groups = plan.groups();
    let mut used = params;
    let rows: Vec<Vec<u64>> = match variant {
        Variant::Noiseless => {
            used = OffsetParams {
                p1: 1,
                p2: n as usize,
                p3: 0,
            };
            let layout: Vec<u64> = std::iter::once(0).chain((0..n).map(|t| 1u64 << t)).collect();
            vec![layout; groups]
        }
        Variant::NearLinear => {
            if params.p1 == 0 {
                return Err(FrontendError::InvalidOffsets("near-linear needs P1 >= 1".into()));
            }
            used = OffsetParams { p2: 0, p3: 0, ..params };
            (0..groups)
                .map(|_| (0..params.p1).map(|_| random_row(n, rng)).collect())
                .collect()
        }
        Variant::Nso => {
            if params.p2 != n as usize {
                return Err(FrontendError::InvalidOffsets(format!(
                    "nso needs P2 = n = {n}, got {}",
                    params.p2
                )));
            }
            if params.p1 == 0 {
                return Err(FrontendError::InvalidOffsets("nso needs P1 >= 1".into()));
            }
            used.p3 = 0;
            (0..groups)
                .map(|_| {
                    let base: Vec<u64> = (0..params.p1).map(|_| random_row(n, rng)).collect();
                    let modulated: Vec<u64> = base
                        .iter()
                        .flat_map(|&d| (0..n).map(move |q| d ^ (1u64 << q)))
                        .collect();
                    base.into_iter().chain(modulated).collect()
                })
                .collect()
        }
        Variant::So => {
            let code = code.ok_or_else(|| FrontendError::InvalidOffsets("so needs a code".into()))?;
            if code.n_info() != n as usize {
                return Err(FrontendError::InvalidOffsets(format!(
                    "code carries {} information bits, expected n = {n}",
                    code.n_info()
                )));
            }
            if params.p1 == 0 || params.p2 == 0 {
                return Err(FrontendError::InvalidOffsets("so needs P1 >= 1 and P2 >= 1".into()));
            }
            used.p3 = code.n_block();
            (0..groups)
                .map(|_| {
                    (0..params.p1)
                        .map(|_| random_row(n, rng))
                        .chain(std::iter::repeat_n(0, params.p2))
                        .chain(code.generator_rows().iter().copied())
                        .collect()
                })
                .collect()
        }
    };
    Ok(OffsetPlan {
        variant,
        n,
        params: used,
        rows,
        code: if variant == Variant::So { code.cloned() } else { None },
    })
}

/// Metadata written next to serialized observations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationHeader {
    pub n: u32,
    pub b: u32,
    #[serde(rename = "C")]
    pub groups: usize,
    #[serde(rename = "P")]
    pub p: usize,
    pub variant: Variant,
}

/// The `C x B x P` tensor `U_{c,p}[j]`, stored in `(c, j, p)` row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct BinObservations {
    header: ObservationHeader,
    data: Vec<f64>,
    samples_distinct: usize,
    samples_nominal: usize,
}

impl BinObservations {
    pub fn zeros(header: ObservationHeader) -> Self {
        let len = header.groups * (1usize << header.b) * header.p;
        let nominal = len;
        Self {
            header,
            data: vec![0.0; len],
            samples_distinct: 0,
            samples_nominal: nominal,
        }
    }

    pub fn header(&self) -> &ObservationHeader {
        &self.header
    }

    pub fn groups(&self) -> usize {
        self.header.groups
    }

    pub fn bins(&self) -> usize {
        1usize << self.header.b
    }

    pub fn p(&self) -> usize {
        self.header.p
    }

    #[inline]
    fn offset(&self, c: usize, j: usize) -> usize {
        (c * self.bins() + j) * self.header.p
    }

    /// Observation vector `U_c[j]` of length `P`.
    pub fn column(&self, c: usize, j: usize) -> &[f64] {
        let o = self.offset(c, j);
        &self.data[o..o + self.header.p]
    }

    pub fn column_mut(&mut self, c: usize, j: usize) -> &mut [f64] {
        let o = self.offset(c, j);
        let p = self.header.p;
        &mut self.data[o..o + p]
    }

    pub fn get(&self, c: usize, j: usize, p: usize) -> f64 {
        self.data[self.offset(c, j) + p]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Distinct sample positions the source had served when observation ended.
    pub fn samples_distinct(&self) -> usize {
        self.samples_distinct
    }

    /// `C * B * P`, counting shared positions once per use.
    pub fn samples_nominal(&self) -> usize {
        self.samples_nominal
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn from_le_bytes(header: ObservationHeader, bytes: &[u8]) -> Result<Self, FrontendError> {
        let mut obs = Self::zeros(header);
        if bytes.len() != obs.data.len() * 8 {
            return Err(FrontendError::Mismatch(format!(
                "expected {} bytes of observations, found {}",
                obs.data.len() * 8,
                bytes.len()
            )));
        }
        for (v, chunk) in obs.data.iter_mut().zip(bytes.chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        }
        Ok(obs)
    }

    /// Writes the raw tensor to `data_path` and the JSON header to `header_path`.
    pub fn write(&self, data_path: &Path, header_path: &Path) -> Result<(), FrontendError> {
        std::fs::write(data_path, self.to_le_bytes())?;
        std::fs::write(header_path, serde_json::to_string_pretty(&self.header)?)?;
        Ok(())
    }

    pub fn read(data_path: &Path, header_path: &Path) -> Result<Self, FrontendError> {
        let header: ObservationHeader = serde_json::from_str(&std::fs::read_to_string(header_path)?)?;
        Self::from_le_bytes(header, &std::fs::read(data_path)?)
    }
}

/// Runs every `(c, p)` subsampled transform.
pub fn observe<S: SampleSource + ?Sized>(
    source: &mut S,
    plan: &SubsamplingPlan,
    offsets: &OffsetPlan,
) -> Result<BinObservations, FrontendError> {
    if source.n() != plan.n() || offsets.n() != plan.n() {
        return Err(FrontendError::Mismatch(format!(
            "widths differ: source {}, plan {}, offsets {}",
            source.n(),
            plan.n(),
            offsets.n()
        )));
    }
    if offsets.groups() != plan.groups() {
        return Err(FrontendError::Mismatch(format!(
            "plan has {} groups, offsets {}",
            plan.groups(),
            offsets.groups()
        )));
    }
    let bins = plan.bins();
    let p_count = offsets.p();
    let mut obs = BinObservations::zeros(ObservationHeader {
        n: plan.n(),
        b: plan.b(),
        groups: plan.groups(),
        p: p_count,
        variant: offsets.variant(),
    });
    let scale = (0.5 * f64::from(plan.n())).exp2() / bins as f64;
    let mut buf = vec![0.0; bins];
    for c in 0..plan.groups() {
        for (p, &d) in offsets.rows(c).iter().enumerate() {
            for (l, slot) in buf.iter_mut().enumerate() {
                *slot = source.sample(plan.position(c, l) ^ d);
            }
            wht_unnormalized_in_place(&mut buf).expect("bin count is a power of two");
            for (j, v) in buf.iter().enumerate() {
                obs.column_mut(c, j)[p] = v * scale;
            }
        }
    }
    obs.samples_distinct = source.distinct_queries();
    Ok(obs)
}
