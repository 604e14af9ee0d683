//! Massively parallelizable non-linear detection.
//!
//! Work is split in two phases. [`mpnl_preprocess`] looks only at the
//! channel: it orders the streams, factors the channel and decides how
//! many children each tree layer expands, fixing `N_p = ∏ e_i` candidate
//! paths. [`mpnl_detect`] then walks every path on its own: at layer `i`
//! a path takes its `k`-th best child (`k < e_i`) in Schnorr–Euchner
//! order. Paths share nothing, so they can run in any order or in
//! parallel and the result is the same.
//!
//! Layer `i` is row `i` of `R`; the tree is entered at layer `N − 1`
//! (the top) and ends at layer 0 (the bottom).

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CandidateList, DetectionOutput, DetectorInput, MetricTable};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, SortedQr, ZERO};
use crate::phy::Constellation;

/// Channel-time plan shared by every path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPlan {
    /// `ordering[i]` is the stream at layer `i`.
    pub ordering: Vec<usize>,
    pub q_factor: CMatrix,
    pub r_factor: CMatrix,
    /// Children expanded per layer, indexed like `ordering`.
    pub expansions: Vec<usize>,
    /// `∏ expansions`.
    pub n_paths: usize,
    /// Budget asked for; larger than `n_paths` when it was not representable.
    pub requested_paths: usize,
    /// QR of `[H; σI]` instead of `H` (more streams than antennas).
    pub augmented: bool,
    pub warnings: Vec<String>,
    m_antennas: usize,
    constellation_order: usize,
    fingerprint: u64,
}

impl PathPlan {
    pub fn n_streams(&self) -> usize {
        self.ordering.len()
    }

    /// Child rank taken at each layer by path `p`; the top layer is the
    /// most significant digit.
    pub fn ranks(&self, mut p: usize) -> Vec<usize> {
        let n = self.n_streams();
        let mut ranks = vec![0; n];
        for i in 0..n {
            ranks[i] = p % self.expansions[i];
            p /= self.expansions[i];
        }
        ranks
    }
}

fn plan_fingerprint(h: &CMatrix, noise_var: f64, augmented: bool, q: usize) -> u64 {
    let mut f = h.fingerprint() ^ (q as u64).rotate_left(17);
    if augmented {
        f ^= noise_var.to_bits().rotate_left(29);
    }
    f
}

fn smallest_prime_factor(n: usize) -> usize {
    let mut p = 2;
    while p * p <= n {
        if n % p == 0 {
            return p;
        }
        p += 1;
    }
    n
}

fn grow(target: usize, unreliability: &[f64], q: usize, top_bound: usize) -> Option<Vec<usize>> {
    let layers = unreliability.len();
    if target == 1 {
        return Some(vec![1; layers]);
    }
    let p = smallest_prime_factor(target);
    let mut e = grow(target / p, unreliability, q, top_bound)?;
    let mut pick: Option<usize> = None;
    for i in (0..layers).rev() {
        let above = if i + 1 == layers { top_bound } else { e[i + 1] };
        if e[i] * p > q || e[i] * p > above {
            continue;
        }
        let score = unreliability[i] / e[i] as f64;
        // strictly greater keeps the upper layer on ties
        if pick.map_or(true, |j| score > unreliability[j] / e[j] as f64) {
            pick = Some(i);
        }
    }
    e[pick?] *= p;
    Some(e)
}

/// Splits `target` paths over layers (index 0 = bottom).
///
/// Counts stay in `[1, q]`, never increase from the top layer downward
/// (the top layer is also capped by `top_bound`), and each prime factor of
/// the budget goes to the eligible layer with the largest
/// `unreliability / e_i`. The budget `2k` is built from the allocation for
/// `k`, so doubling the budget only ever widens layers. A budget that
/// cannot be met exactly is lowered until it can; the achieved product is
/// returned with the counts.
pub fn allocate_expansions(
    target: usize,
    unreliability: &[f64],
    q: usize,
    top_bound: usize,
) -> (usize, Vec<usize>) {
    let mut t = target.max(1);
    loop {
        if let Some(e) = grow(t, unreliability, q, top_bound) {
            return (t, e);
        }
        t -= 1;
    }
}

/// Channel-time preprocessing.
///
/// Streams are ordered by greedy Gram–Schmidt so the strongest layers sit
/// at the bottom of the tree and the weakest at the top, where the path
/// budget is spent. Layer unreliability is `1/|r_ii|²`. With more streams
/// than antennas the QR runs on `[H; σI]` and the `N − M` top layers are
/// expanded fully, provided the budget reaches `Q^(N−M)`.
pub fn mpnl_preprocess(h: &CMatrix, noise_var: f64, n_paths: usize, c: &Constellation) -> Result<PathPlan> {
    if n_paths == 0 {
        return Err(Error::Config("n_paths must be at least 1".into()));
    }
    let (m, n, q) = (h.rows(), h.cols(), c.order());
    if n > 64 {
        return Err(Error::Dimension(format!("{n} streams exceed the 64-layer limit")));
    }
    let augmented = n > m;
    if augmented && !(noise_var > 0.0) {
        return Err(Error::NoiseVariance(noise_var));
    }
    let a = if augmented {
        let sigma = noise_var.sqrt();
        CMatrix::from_fn(m + n, n, |r, col| {
            if r < m {
                h[(r, col)]
            } else if r - m == col {
                Complex64::new(sigma, 0.0)
            } else {
                ZERO
            }
        })
    } else {
        h.clone()
    };
    let qr = SortedQr::new(&a);
    let unreliability: Vec<f64> = (0..n)
        .map(|i| {
            let r = qr.r[(i, i)].re;
            if r > 0.0 {
                1.0 / (r * r)
            } else {
                f64::MAX
            }
        })
        .collect();

    let mut warnings = Vec::new();
    let deficient = n.saturating_sub(m);
    let forced_paths = (q as u128).checked_pow(deficient as u32).unwrap_or(u128::MAX);
    let (n_eff, expansions) = if deficient > 0 && (n_paths as u128) >= forced_paths {
        let forced = forced_paths as usize;
        let (rest, mut e) = allocate_expansions(n_paths / forced, &unreliability[..m], q, q);
        e.extend(std::iter::repeat(q).take(deficient));
        (rest * forced, e)
    } else {
        if deficient > 0 {
            warnings.push(format!(
                "{n_paths} paths cannot fully expand the {deficient} rank-deficient layers (needs {forced_paths})"
            ));
        }
        allocate_expansions(n_paths, &unreliability, q, q)
    };
    if n_eff != n_paths {
        warnings.push(format!("path budget {n_paths} is not representable; using {n_eff}"));
    }
    for w in &warnings {
        log::debug!("mpnl plan: {w}");
    }
    Ok(PathPlan {
        ordering: qr.order,
        q_factor: qr.q,
        r_factor: qr.r,
        expansions,
        n_paths: n_eff,
        requested_paths: n_paths,
        augmented,
        warnings,
        m_antennas: m,
        constellation_order: q,
        fingerprint: plan_fingerprint(h, noise_var, augmented, q),
    })
}

struct PathWalker<'a> {
    plan: &'a PathPlan,
    z: Vec<Complex64>,
    points: &'a [Complex64],
}

impl PathWalker<'_> {
    /// Labels by tree position for path `p`.
    fn walk(&self, p: usize, path: &mut [u8], children: &mut Vec<(f64, u8)>) {
        let n = path.len();
        let r = &self.plan.r_factor;
        let mut rest = p;
        let mut digits = [0usize; 64];
        for (i, d) in digits.iter_mut().enumerate().take(n) {
            *d = rest % self.plan.expansions[i];
            rest /= self.plan.expansions[i];
        }
        for layer in (0..n).rev() {
            let mut b = self.z[layer];
            for j in (layer + 1)..n {
                b -= r[(layer, j)] * self.points[path[j] as usize];
            }
            let rii = r[(layer, layer)].re;
            let rank = digits[layer];
            children.clear();
            children.extend(
                self.points
                    .iter()
                    .enumerate()
                    .map(|(l, s)| ((b - s * rii).norm_sqr(), l as u8)),
            );
            let by_distance = |a: &(f64, u8), b: &(f64, u8)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            let (_, child, _) = children.select_nth_unstable_by(rank, by_distance);
            path[layer] = child.1;
        }
    }
}

fn prepare<'a>(plan: &'a PathPlan, input: &DetectorInput<'a>) -> Result<PathWalker<'a>> {
    let (m, n) = (input.m_antennas(), input.n_streams());
    let fp = plan_fingerprint(input.h, input.noise_var, plan.augmented, input.constellation.order());
    if fp != plan.fingerprint
        || m != plan.m_antennas
        || n != plan.n_streams()
        || input.constellation.order() != plan.constellation_order
    {
        return Err(Error::PlanMismatch);
    }
    // Qᴴ·[y; 0]: only the first M rows of Q meet y
    let mut z = vec![ZERO; n];
    for (k, zk) in z.iter_mut().enumerate() {
        for r in 0..m {
            *zk += plan.q_factor[(r, k)].conj() * input.y[r];
        }
    }
    Ok(PathWalker {
        plan,
        z,
        points: input.constellation.points(),
    })
}

fn finish(plan: &PathPlan, input: &DetectorInput<'_>, paths: Vec<Vec<u8>>) -> (CandidateList, DetectionOutput) {
    let n = plan.n_streams();
    let table = MetricTable::new(input.h, input.y, input.constellation);
    let mut list = CandidateList::with_capacity(n, paths.len());
    let mut labels = vec![0u8; n];
    for path in paths {
        for (pos, &orig) in plan.ordering.iter().enumerate() {
            labels[orig] = path[pos];
        }
        list.push(&labels, table.metric(&labels));
    }
    let out = list.to_output(input.noise_var, input.constellation);
    (list, out)
}

/// Evaluates the plan's paths one after another.
pub fn mpnl_detect(plan: &PathPlan, input: &DetectorInput<'_>) -> Result<(CandidateList, DetectionOutput)> {
    let walker = prepare(plan, input)?;
    let n = plan.n_streams();
    let mut children = Vec::with_capacity(input.constellation.order());
    let paths = (0..plan.n_paths)
        .map(|p| {
            let mut path = vec![0u8; n];
            walker.walk(p, &mut path, &mut children);
            path
        })
        .collect();
    Ok(finish(plan, input, paths))
}

/// Same as [`mpnl_detect`] with the paths spread over the rayon pool.
pub fn mpnl_detect_parallel(
    plan: &PathPlan,
    input: &DetectorInput<'_>,
) -> Result<(CandidateList, DetectionOutput)> {
    let walker = prepare(plan, input)?;
    let n = plan.n_streams();
    let q = input.constellation.order();
    let paths = (0..plan.n_paths)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(q),
            |children, p| {
                let mut path = vec![0u8; n];
                walker.walk(p, &mut path, children);
                path
            },
        )
        .collect();
    Ok(finish(plan, input, paths))
}
