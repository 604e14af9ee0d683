use num_complex::Complex64;

use super::{candidate_metric, DetectionOutput, DetectorInput};
use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::phy::LLR_CLIP;

/// Pivot threshold, relative to the largest Gram diagonal, below which the
/// channel counts as rank deficient.
const RANK_TOL: f64 = 1e-12;

/// Per-stream output of a linear equalizer.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEstimate {
    /// Raw filter output `W·y`.
    pub x: Vec<Complex64>,
    /// Bias-removed estimate fed to the slicer.
    pub unbiased: Vec<Complex64>,
    /// Effective noise variance of each unbiased estimate.
    pub noise: Vec<f64>,
}

/// `x̃ = (HᴴH)⁻¹Hᴴy` with post-equalization noise `σ²[(HᴴH)⁻¹]_ii`.
pub fn zf_estimate(input: &DetectorInput<'_>) -> Result<LinearEstimate> {
    if input.m_antennas() < input.n_streams() {
        return Err(Error::SingularChannel);
    }
    let chol = Cholesky::new(&input.h.gram(), RANK_TOL)?;
    let x = chol.solve(&input.h.herm_mul_vec(input.y));
    let noise = chol
        .inverse_diagonal()
        .into_iter()
        .map(|d| input.noise_var * d)
        .collect();
    Ok(LinearEstimate {
        unbiased: x.clone(),
        x,
        noise,
    })
}

/// `x̃ = (HᴴH + σ²I)⁻¹Hᴴy`.
///
/// The slicer sees the unbiased estimate `x̃_i/μ_i`, `μ_i = 1 − σ²[(HᴴH + σ²I)⁻¹]_ii`,
/// whose noise variance is `(1 − μ_i)/μ_i` for unit-energy symbols.
pub fn mmse_estimate(input: &DetectorInput<'_>) -> LinearEstimate {
    let n = input.n_streams();
    let mut a = input.h.gram();
    for i in 0..n {
        a[(i, i)] += input.noise_var;
    }
    let chol = Cholesky::new(&a, 0.0).expect("σ² > 0 keeps the MMSE system positive definite");
    let x = chol.solve(&input.h.herm_mul_vec(input.y));
    let diag = chol.inverse_diagonal();
    let mut unbiased = Vec::with_capacity(n);
    let mut noise = Vec::with_capacity(n);
    for (xi, wii) in x.iter().zip(diag) {
        let mu = (1.0 - input.noise_var * wii).max(1e-12);
        unbiased.push(xi / mu);
        noise.push((1.0 - mu) / mu);
    }
    LinearEstimate { x, unbiased, noise }
}

fn slice_and_demap(input: &DetectorInput<'_>, est: &LinearEstimate) -> DetectionOutput {
    let c = input.constellation;
    let hard: Vec<usize> = est.unbiased.iter().map(|&v| c.slice(v)).collect();
    let mut llrs = Vec::with_capacity(hard.len() * c.bits_per_symbol());
    for (v, nv) in est.unbiased.iter().zip(&est.noise) {
        c.demap_into(*v, nv.max(f64::MIN_POSITIVE), LLR_CLIP, &mut llrs);
    }
    DetectionOutput {
        min_metric: candidate_metric(input.h, input.y, &hard, c),
        hard,
        llrs,
    }
}

pub fn zf_detect(input: &DetectorInput<'_>) -> Result<DetectionOutput> {
    let est = zf_estimate(input)?;
    Ok(slice_and_demap(input, &est))
}

pub fn mmse_detect(input: &DetectorInput<'_>) -> DetectionOutput {
    let est = mmse_estimate(input);
    slice_and_demap(input, &est)
}
