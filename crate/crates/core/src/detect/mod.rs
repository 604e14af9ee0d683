//! MIMO detectors.
//!
//! Linear ZF/MMSE, the exact non-linear references (exhaustive ML and a
//! Schnorr–Euchner sphere decoder) and the fixed-candidate parallel
//! detector ([`mpnl`]). All of them report the metric `‖y − H·x‖²`
//! through [`candidate_metric`], so metrics from different detectors are
//! bit-comparable.
//!
//! Ties between equal metrics are broken by the lexicographic order of the
//! candidates' label vectors (stream 0 most significant).

mod linear;
mod mpnl;
mod tree;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, ZERO};
use crate::phy::{Constellation, LLR_CLIP};

pub use linear::{mmse_detect, mmse_estimate, zf_detect, zf_estimate, LinearEstimate};
pub use mpnl::{allocate_expansions, mpnl_detect, mpnl_detect_parallel, mpnl_preprocess, PathPlan};
pub use tree::{ml_candidates, ml_detect, sphere_detect, ML_GUARD};

/// Default number of parallel candidate paths.
pub const DEFAULT_PATHS: usize = 32;

/// One detection problem `y = H·x + n`.
#[derive(Debug, Clone, Copy)]
pub struct DetectorInput<'a> {
    pub h: &'a CMatrix,
    pub y: &'a [Complex64],
    pub noise_var: f64,
    pub constellation: &'a Constellation,
}

impl<'a> DetectorInput<'a> {
    pub fn new(
        h: &'a CMatrix,
        y: &'a [Complex64],
        noise_var: f64,
        constellation: &'a Constellation,
    ) -> Result<Self> {
        if y.len() != h.rows() || h.cols() == 0 {
            return Err(Error::Dimension(format!(
                "y has {} entries for a {}x{} channel",
                y.len(),
                h.rows(),
                h.cols()
            )));
        }
        if !(noise_var > 0.0) {
            return Err(Error::NoiseVariance(noise_var));
        }
        Ok(Self {
            h,
            y,
            noise_var,
            constellation,
        })
    }

    pub fn n_streams(&self) -> usize {
        self.h.cols()
    }

    pub fn m_antennas(&self) -> usize {
        self.h.rows()
    }
}

/// Hard decision, soft bits and metric of one detection.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionOutput {
    /// Constellation label per stream.
    pub hard: Vec<usize>,
    /// Stream-major LLRs, `log2(Q)` per stream, positive favouring 0.
    pub llrs: Vec<f64>,
    /// `‖y − H·hard‖²`.
    pub min_metric: f64,
}

impl DetectionOutput {
    pub fn symbols(&self, c: &Constellation) -> Vec<Complex64> {
        self.hard.iter().map(|&l| c.point(l)).collect()
    }
}

/// Candidate transmit vectors with their metrics, flattened.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateList {
    n_streams: usize,
    labels: Vec<u8>,
    metrics: Vec<f64>,
}

impl CandidateList {
    pub fn new(n_streams: usize) -> Self {
        Self {
            n_streams,
            labels: Vec::new(),
            metrics: Vec::new(),
        }
    }

    pub fn with_capacity(n_streams: usize, cap: usize) -> Self {
        Self {
            n_streams,
            labels: Vec::with_capacity(cap * n_streams),
            metrics: Vec::with_capacity(cap),
        }
    }

    pub fn push(&mut self, labels: &[u8], metric: f64) {
        debug_assert_eq!(labels.len(), self.n_streams);
        self.labels.extend_from_slice(labels);
        self.metrics.push(metric);
    }

    pub fn len(&self) -> usize {
        self.metrics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.metrics.is_empty()
    }

    pub fn n_streams(&self) -> usize {
        self.n_streams
    }

    pub fn candidate(&self, i: usize) -> &[u8] {
        &self.labels[i * self.n_streams..(i + 1) * self.n_streams]
    }

    pub fn metric(&self, i: usize) -> f64 {
        self.metrics[i]
    }

    pub fn metrics(&self) -> &[f64] {
        &self.metrics
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u8], f64)> + '_ {
        self.labels
            .chunks_exact(self.n_streams.max(1))
            .zip(self.metrics.iter().copied())
    }

    /// Index of the best candidate under (metric, labels) ordering.
    pub fn best(&self) -> Option<usize> {
        (0..self.len()).min_by(|&a, &b| {
            cmp_candidates(self.metric(a), self.candidate(a), self.metric(b), self.candidate(b))
        })
    }

    /// Hard decision plus list LLRs.
    pub fn to_output(&self, noise_var: f64, c: &Constellation) -> DetectionOutput {
        let best = self.best().expect("non-empty candidate list");
        DetectionOutput {
            hard: self.candidate(best).iter().map(|&l| l as usize).collect(),
            llrs: llr_from_candidates(self, noise_var, c),
            min_metric: self.metric(best),
        }
    }
}

/// Total order used for every min-metric reduction.
pub(crate) fn cmp_candidates(ma: f64, la: &[u8], mb: f64, lb: &[u8]) -> Ordering {
    ma.total_cmp(&mb).then_with(|| la.cmp(lb))
}

/// Per-stream products `h_rj · s_q`, so candidate metrics are evaluated
/// with one fixed summation order everywhere.
#[derive(Debug, Clone)]
pub(crate) struct MetricTable<'a> {
    y: &'a [Complex64],
    m: usize,
    q: usize,
    /// `[(stream · Q + label) · M + row]`
    prod: Vec<Complex64>,
}

impl<'a> MetricTable<'a> {
    pub fn new(h: &CMatrix, y: &'a [Complex64], c: &Constellation) -> Self {
        let (m, n, q) = (h.rows(), h.cols(), c.order());
        let mut prod = Vec::with_capacity(n * q * m);
        for j in 0..n {
            for s in c.points() {
                for r in 0..m {
                    prod.push(h[(r, j)] * s);
                }
            }
        }
        Self { y, m, q, prod }
    }

    pub fn metric(&self, labels: &[u8]) -> f64 {
        let mut total = 0.0;
        for r in 0..self.m {
            let mut hx = ZERO;
            for (j, &l) in labels.iter().enumerate() {
                hx += self.prod[(j * self.q + l as usize) * self.m + r];
            }
            total += (self.y[r] - hx).norm_sqr();
        }
        total
    }
}

/// `‖y − H·x‖²` for a label vector; the reference metric of every detector.
pub fn candidate_metric(h: &CMatrix, y: &[Complex64], labels: &[usize], c: &Constellation) -> f64 {
    let x: Vec<u8> = labels.iter().map(|&l| l as u8).collect();
    MetricTable::new(h, y, c).metric(&x)
}

/// Max-log LLRs over a candidate list.
///
/// Bits with no counter-hypothesis in the list saturate at `±LLR_CLIP`
/// with the sign of the best candidate's bit.
pub fn llr_from_candidates(list: &CandidateList, noise_var: f64, c: &Constellation) -> Vec<f64> {
    llr_from_candidates_clipped(list, noise_var, c, LLR_CLIP)
}

pub fn llr_from_candidates_clipped(
    list: &CandidateList,
    noise_var: f64,
    c: &Constellation,
    clip: f64,
) -> Vec<f64> {
    let bps = c.bits_per_symbol();
    let n = list.n_streams();
    let mut best = vec![[f64::INFINITY; 2]; n * bps];
    for (labels, metric) in list.iter() {
        for (j, &l) in labels.iter().enumerate() {
            for b in 0..bps {
                let slot = &mut best[j * bps + b][c.bit(l as usize, b) as usize];
                if metric < *slot {
                    *slot = metric;
                }
            }
        }
    }
    let top = list.best().map(|i| list.candidate(i));
    best.iter()
        .enumerate()
        .map(|(k, [m0, m1])| {
            if m0.is_finite() && m1.is_finite() {
                ((m1 - m0) / noise_var).clamp(-clip, clip)
            } else {
                let bit = top.map_or(0, |t| c.bit(t[k / bps] as usize, k % bps));
                if bit == 0 {
                    clip
                } else {
                    -clip
                }
            }
        })
        .collect()
}

/// Detector selection by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Zf,
    Mmse,
    Ml,
    Sphere,
    Mpnl,
}

impl DetectorKind {
    pub fn name(&self) -> &'static str {
        match self {
            DetectorKind::Zf => "zf",
            DetectorKind::Mmse => "mmse",
            DetectorKind::Ml => "ml",
            DetectorKind::Sphere => "sphere",
            DetectorKind::Mpnl => "mpnl",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "zf" => Ok(DetectorKind::Zf),
            "mmse" => Ok(DetectorKind::Mmse),
            "ml" => Ok(DetectorKind::Ml),
            "sphere" => Ok(DetectorKind::Sphere),
            "mpnl" => Ok(DetectorKind::Mpnl),
            _ => Err(Error::UnknownDetector(s.to_string())),
        }
    }
}

/// A detector kind plus its path budget (used by MPNL only).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detector {
    pub kind: DetectorKind,
    pub n_paths: usize,
}

impl Detector {
    pub fn new(kind: DetectorKind) -> Self {
        Self {
            kind,
            n_paths: DEFAULT_PATHS,
        }
    }

    pub fn mpnl(n_paths: usize) -> Self {
        Self {
            kind: DetectorKind::Mpnl,
            n_paths,
        }
    }

    /// Path budget capped at `Q^N`.
    pub fn effective_paths(&self, q: usize, n: usize) -> usize {
        let full = (q as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
        (self.n_paths as u128).min(full) as usize
    }

    pub fn detect(&self, input: &DetectorInput<'_>) -> Result<DetectionOutput> {
        match self.kind {
            DetectorKind::Zf => zf_detect(input),
            DetectorKind::Mmse => Ok(mmse_detect(input)),
            DetectorKind::Ml => ml_detect(input),
            DetectorKind::Sphere => sphere_detect(input),
            DetectorKind::Mpnl => {
                let paths = self.effective_paths(input.constellation.order(), input.n_streams());
                let plan = mpnl_preprocess(input.h, input.noise_var, paths, input.constellation)?;
                Ok(mpnl_detect(&plan, input)?.1)
            }
        }
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            DetectorKind::Mpnl => write!(f, "mpnl{}", self.n_paths),
            k => f.write_str(k.name()),
        }
    }
}
