//! Hypergraph sketching from cut queries.
//!
//! A bipartition `m` of the vertices (bit `v-1` set when vertex `v` is on the
//! right) cuts edge `e` unless every vertex of `e` sits on the same side, so
//!
//! `cut(m) = sum_e (1 - 1_e[m])`, with
//! `1_e[m] = 2^{1-|e|} sum_{S subset e, |S| even} (-1)^{<S, m>}`.
//!
//! The cut function therefore has a sparse unnormalized Walsh spectrum:
//! `s - sum_e 2^{1-|e|}` at the origin and `-2^{1-|e|}` at every nonempty
//! even subset of every edge. Vertex ids are 1-based throughout.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::detect::{Detector, DetectorConfig};
use crate::frontend::{build_offsets, observe, FrontendError, OffsetParams, SubsamplingPlan, Variant};
use crate::gf2::BitIndex;
use crate::peeling::decode;
use crate::signal::{SampleSource, SparseSpectrum};

#[derive(Debug, Error)]
pub enum SketchError {
    #[error("vertex count {0} outside 1..=64")]
    BadVertexCount(usize),
    #[error("edge {0:?} must have at least two distinct vertices in 1..=n")]
    BadEdge(Vec<usize>),
    #[error("duplicate edge {0:?}")]
    DuplicateEdge(Vec<usize>),
    #[error("hypergraph parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("cannot place {needed} vertices of disjoint edges on {n} vertices")]
    TooManyVertices { needed: usize, n: usize },
    #[error(transparent)]
    Frontend(#[from] FrontendError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hypergraph {
    n: u32,
    edges: Vec<u64>,
}

fn mask_to_vertices(mask: u64) -> Vec<usize> {
    (0..64).filter(|t| (mask >> t) & 1 == 1).map(|t| t + 1).collect()
}

impl Hypergraph {
    pub fn new(n: usize, edges: Vec<Vec<usize>>) -> Result<Self, SketchError> {
        if n == 0 || n > 64 {
            return Err(SketchError::BadVertexCount(n));
        }
        let mut masks = Vec::with_capacity(edges.len());
        for e in edges {
            let mut mask = 0u64;
            for &v in &e {
                if v == 0 || v > n || (mask >> (v - 1)) & 1 == 1 {
                    return Err(SketchError::BadEdge(e));
                }
                mask |= 1 << (v - 1);
            }
            if mask.count_ones() < 2 {
                return Err(SketchError::BadEdge(e));
            }
            masks.push(mask);
        }
        Self::from_masks(n as u32, masks)
    }

    pub fn from_masks(n: u32, edges: Vec<u64>) -> Result<Self, SketchError> {
        if n == 0 || n > 64 {
            return Err(SketchError::BadVertexCount(n as usize));
        }
        let mut seen = BTreeSet::new();
        for &e in &edges {
            if e.count_ones() < 2 || (n < 64 && e >> n != 0) {
                return Err(SketchError::BadEdge(mask_to_vertices(e)));
            }
            if !seen.insert(e) {
                return Err(SketchError::DuplicateEdge(mask_to_vertices(e)));
            }
        }
        Ok(Self { n, edges })
    }

    /// `s` vertex-disjoint edges with sizes uniform in `min_size..=max_size`.
    pub fn random_disjoint<R: Rng + ?Sized>(
        n: usize,
        s: usize,
        min_size: usize,
        max_size: usize,
        rng: &mut R,
    ) -> Result<Self, SketchError> {
        assert!(2 <= min_size && min_size <= max_size);
        let sizes: Vec<usize> = (0..s).map(|_| rng.random_range(min_size..=max_size)).collect();
        let needed: usize = sizes.iter().sum();
        if needed > n {
            return Err(SketchError::TooManyVertices { needed, n });
        }
        let mut vertices: Vec<usize> = (1..=n).collect();
        vertices.shuffle(rng);
        let mut pos = 0;
        let edges = sizes
            .iter()
            .map(|&size| {
                let e = vertices[pos..pos + size].to_vec();
                pos += size;
                e
            })
            .collect();
        Self::new(n, edges)
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn edge_masks(&self) -> &[u64] {
        &self.edges
    }

    /// Edges as sorted 1-based vertex lists.
    pub fn edges(&self) -> Vec<Vec<usize>> {
        self.edges.iter().map(|&e| mask_to_vertices(e)).collect()
    }

    pub fn max_edge_size(&self) -> usize {
        self.edges.iter().map(|e| e.count_ones() as usize).max().unwrap_or(0)
    }

    /// Header `n=<n>`, then one edge per line as space-separated vertex ids.
    pub fn to_text(&self) -> String {
        let mut out = format!("n={}\n", self.n);
        for e in self.edges() {
            let line: Vec<String> = e.iter().map(ToString::to_string).collect();
            writeln!(out, "{}", line.join(" ")).expect("writing to String");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, SketchError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let parse_err = |line: usize, msg: String| SketchError::Parse { line: line + 1, msg };
        let (hline, header) = lines.next().ok_or_else(|| parse_err(0, "missing header".into()))?;
        let n: usize = header
            .trim()
            .strip_prefix("n=")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| parse_err(hline, "expected `n=<n>`".into()))?;
        let mut edges = Vec::new();
        for (i, line) in lines {
            let e: Result<Vec<usize>, _> = line.split_whitespace().map(str::parse).collect();
            edges.push(e.map_err(|_| parse_err(i, format!("bad vertex list {line:?}")))?);
        }
        Self::new(n, edges)
    }
}

/// Number of edges with vertices on both sides of `m`.
pub fn cut_value(h: &Hypergraph, m: BitIndex) -> u64 {
    assert_eq!(m.width(), h.n, "partition width mismatch");
    cut_bits(h, m.bits())
}

fn cut_bits(h: &Hypergraph, m: u64) -> u64 {
    h.edges
        .iter()
        .filter(|&&e| {
            let side = m & e;
            side != 0 && side != e
        })
        .count() as u64
}

/// Unnormalized spectrum: `cut(m) = sum_k X[k] (-1)^{<k,m>}`.
pub fn analytic_spectrum(h: &Hypergraph) -> SparseSpectrum {
    let mut acc: HashMap<u64, f64> = HashMap::new();
    for &e in &h.edges {
        let w = (1.0 - f64::from(e.count_ones())).exp2();
        *acc.entry(0).or_insert(0.0) += 1.0 - w;
        // Nonempty submasks of e with even weight.
        let mut sub = e;
        while sub != 0 {
            if sub.count_ones() % 2 == 0 {
                *acc.entry(sub).or_insert(0.0) -= w;
            }
            sub = (sub - 1) & e;
        }
    }
    let mut spectrum = SparseSpectrum::new(h.n);
    for (k, v) in acc {
        spectrum.insert(BitIndex::masked(k, h.n), v).expect("width matches");
    }
    spectrum
}

/// Cached cut-query oracle exposed as a sample source.
pub struct CutSource<F> {
    n: u32,
    oracle: F,
    cache: HashMap<u64, f64>,
}

impl<F: FnMut(u64) -> u64> CutSource<F> {
    pub fn new(n: u32, oracle: F) -> Self {
        Self {
            n,
            oracle,
            cache: HashMap::new(),
        }
    }
}

impl<F: FnMut(u64) -> u64> SampleSource for CutSource<F> {
    fn n(&self) -> u32 {
        self.n
    }

    fn sample(&mut self, m: u64) -> f64 {
        if let Some(&v) = self.cache.get(&m) {
            return v;
        }
        let v = (self.oracle)(m) as f64;
        self.cache.insert(m, v);
        v
    }

    fn distinct_queries(&self) -> usize {
        self.cache.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SketchOptions {
    /// Largest edge size `d`; coefficients are snapped to multiples of `2^{1-d}`.
    pub max_edge_size: usize,
    /// Query allowance as a multiple of `budget * n`.
    pub query_factor: f64,
    pub seed: u64,
}

impl Default for SketchOptions {
    fn default() -> Self {
        Self {
            max_edge_size: 16,
            query_factor: 12.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SketchResult {
    pub spectrum: SparseSpectrum,
    /// Present when the recovered spectrum is exactly that of a set of
    /// vertex-disjoint edges.
    pub edges: Option<Vec<Vec<usize>>>,
    /// Distinct cut queries issued.
    pub queries: usize,
    pub groups: usize,
    /// False when the query allowance ran out before every bin was resolved.
    pub complete: bool,
}

/// Recovers the cut spectrum of an unknown hypergraph on `n` vertices with
/// at most `budget` nonzero coefficients.
///
/// Starts from three random hash groups with `2^b >= budget` bins and
/// identity offsets, and adds groups while the decoder stalls and the
/// allowance `query_factor * budget * n` permits.
pub fn sketch_recover<F: FnMut(u64) -> u64>(
    oracle: F,
    n: u32,
    budget: usize,
    options: SketchOptions,
) -> Result<SketchResult, SketchError> {
    if n == 0 || n > 64 {
        return Err(SketchError::BadVertexCount(n as usize));
    }
    let mut source = CutSource::new(n, oracle);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let b = (budget.max(2) as f64).log2().ceil().clamp(1.0, f64::from(n)) as u32;
    let per_group = (1usize << b) * (n as usize + 1);
    let allowance = (options.query_factor * budget.max(1) as f64 * f64::from(n)).floor() as usize;
    let initial = (allowance / per_group).clamp(1, 3);
    let mut plan = SubsamplingPlan::random(n, b, initial, &mut rng)?;

    let sqrt_n = (0.5 * f64::from(n)).exp2();
    let grid = (1.0 - options.max_edge_size as f64).exp2();
    let mut config = DetectorConfig::noiseless(n, 1.0);
    config.zero_tol = 0.25 * grid * sqrt_n;
    let detector = Detector::new(Variant::Noiseless, config);

    loop {
        let offsets = build_offsets(Variant::Noiseless, &plan, OffsetParams::default(), None, &mut rng)?;
        let obs = observe(&mut source, &plan, &offsets)?;
        let (normalized, report) = decode(&obs, &plan, &offsets, &detector, 2 * budget + 10);
        let complete = !report.stalled;
        let spent = plan.groups() * per_group;
        if complete || spent + per_group > allowance {
            let mut spectrum = SparseSpectrum::new(n);
            for (k, v) in normalized.iter() {
                let snapped = (v / sqrt_n / grid).round() * grid;
                spectrum.insert(k, snapped).expect("width matches");
            }
            let edges = if complete { reconstruct_edges(&spectrum) } else { None };
            return Ok(SketchResult {
                spectrum,
                edges,
                queries: source.distinct_queries(),
                groups: plan.groups(),
                complete,
            });
        }
        plan.push_random_group(&mut rng)?;
    }
}

/// Groups the non-DC supports into connected vertex sets and accepts them
/// as edges only if they reproduce the spectrum exactly.
pub fn reconstruct_edges(spectrum: &SparseSpectrum) -> Option<Vec<Vec<usize>>> {
    let mut components: Vec<u64> = Vec::new();
    for (k, _) in spectrum.iter() {
        let mut merged = k.bits();
        if merged == 0 {
            continue;
        }
        components.retain(|&c| {
            if c & merged != 0 {
                merged |= c;
                false
            } else {
                true
            }
        });
        components.push(merged);
    }
    components.sort_unstable();
    let h = Hypergraph::from_masks(spectrum.n(), components).ok()?;
    (analytic_spectrum(&h) == *spectrum).then(|| h.edges())
}
