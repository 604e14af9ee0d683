use num_complex::Complex64;

use super::{cmp_candidates, CandidateList, DetectionOutput, DetectorInput, MetricTable};
use crate::error::{Error, Result};
use crate::linalg::{SortedQr, ZERO};

/// Largest candidate count `ml_detect` will enumerate.
pub const ML_GUARD: u128 = 1 << 16;

fn check_guard(q: usize, n: usize) -> Result<usize> {
    let total = (q as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if total > ML_GUARD {
        return Err(Error::EnumerationGuard(total));
    }
    Ok(total as usize)
}

/// Every candidate vector with its metric, in lexicographic label order.
pub fn ml_candidates(input: &DetectorInput<'_>) -> Result<CandidateList> {
    let c = input.constellation;
    let (q, n) = (c.order(), input.n_streams());
    let total = check_guard(q, n)?;
    let table = MetricTable::new(input.h, input.y, c);
    let mut list = CandidateList::with_capacity(n, total);
    let mut labels = vec![0u8; n];
    for _ in 0..total {
        list.push(&labels, table.metric(&labels));
        // odometer, last stream fastest
        for d in labels.iter_mut().rev() {
            *d += 1;
            if (*d as usize) < q {
                break;
            }
            *d = 0;
        }
    }
    Ok(list)
}

/// Exhaustive maximum-likelihood detection with exact max-log LLRs.
pub fn ml_detect(input: &DetectorInput<'_>) -> Result<DetectionOutput> {
    let list = ml_candidates(input)?;
    Ok(list.to_output(input.noise_var, input.constellation))
}

struct Sphere<'a> {
    r: &'a crate::linalg::CMatrix,
    z: Vec<Complex64>,
    order: &'a [usize],
    points: &'a [Complex64],
    table: MetricTable<'a>,
    /// current path, by tree position
    path: Vec<u8>,
    radius: f64,
    best_metric: f64,
    best: Vec<u8>,
    visited: CandidateList,
    scratch: Vec<u8>,
}

impl Sphere<'_> {
    fn slack(&self, d: f64) -> f64 {
        d * (1.0 + 1e-9) + 1e-12
    }

    fn search(&mut self, layer: usize, partial: f64) {
        let n = self.path.len();
        let mut b = self.z[layer];
        for j in (layer + 1)..n {
            b -= self.r[(layer, j)] * self.points[self.path[j] as usize];
        }
        let rii = self.r[(layer, layer)].re;
        // Schnorr–Euchner: children by increasing partial distance
        let mut children: Vec<(f64, u8)> = self
            .points
            .iter()
            .enumerate()
            .map(|(l, s)| ((b - s * rii).norm_sqr(), l as u8))
            .collect();
        children.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (d, l) in children {
            let pd = partial + d;
            if pd > self.slack(self.radius) {
                break;
            }
            self.path[layer] = l;
            if layer == 0 {
                self.leaf(pd);
            } else {
                self.search(layer - 1, pd);
            }
        }
    }

    fn leaf(&mut self, tree_metric: f64) {
        for (pos, &orig) in self.order.iter().enumerate() {
            self.scratch[orig] = self.path[pos];
        }
        let metric = self.table.metric(&self.scratch);
        self.visited.push(&self.scratch, metric);
        if cmp_candidates(metric, &self.scratch, self.best_metric, &self.best).is_lt() {
            self.best_metric = metric;
            self.best.copy_from_slice(&self.scratch);
        }
        if tree_metric < self.radius {
            self.radius = tree_metric;
        }
    }
}

/// Depth-first Schnorr–Euchner sphere decoder; returns the ML decision.
///
/// Leaves are compared on the same metric as [`ml_detect`], and pruning
/// keeps a relative slack of 1e-9 so rounding in the triangular metric can
/// never cut the ML leaf.
pub fn sphere_detect(input: &DetectorInput<'_>) -> Result<DetectionOutput> {
    let (m, n) = (input.m_antennas(), input.n_streams());
    if m < n {
        return Err(Error::SingularChannel);
    }
    let qr = SortedQr::new(input.h);
    let rmax = (0..n).map(|i| qr.r[(i, i)].re).fold(0.0, f64::max);
    if (0..n).any(|i| qr.r[(i, i)].re <= 1e-6 * rmax) {
        return Err(Error::SingularChannel);
    }
    let mut z = vec![ZERO; n];
    for (k, zk) in z.iter_mut().enumerate() {
        for r in 0..m {
            *zk += qr.q[(r, k)].conj() * input.y[r];
        }
    }
    let c = input.constellation;
    let mut s = Sphere {
        r: &qr.r,
        z,
        order: &qr.order,
        points: c.points(),
        table: MetricTable::new(input.h, input.y, c),
        path: vec![0; n],
        radius: f64::INFINITY,
        best_metric: f64::INFINITY,
        best: vec![u8::MAX; n],
        visited: CandidateList::new(n),
        scratch: vec![0; n],
    };
    s.search(n - 1, 0.0);
    Ok(s.visited.to_output(input.noise_var, c))
}
