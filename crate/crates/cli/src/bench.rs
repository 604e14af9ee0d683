//! Detection throughput against worker count.
//!
//! Every worker count runs the same seeded instances; the digest over all
//! hard decisions, metrics and LLRs must not depend on the worker count.

use std::time::Instant;

use anyhow::{bail, Result};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use nlmimo::channel::{complex_gaussian, noise_var_for_snr, rayleigh_block};
use nlmimo::detect::{DetectionOutput, Detector, DetectorInput};
use nlmimo::linalg::CMatrix;
use nlmimo::phy::Constellation;
use nlmimo::seed;

use crate::config::{BenchSection, RunConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub detector: String,
    pub n_streams: usize,
    pub m_antennas: usize,
    pub modulation_order: usize,
    pub n_paths: usize,
    pub workers: usize,
    pub instances: usize,
    pub median_s: f64,
    pub detections_per_s: f64,
    /// Throughput over the 1-worker throughput.
    pub speedup: f64,
    /// `speedup / workers`.
    pub efficiency: f64,
    pub digest: String,
}

struct Instance {
    h: CMatrix,
    y: Vec<Complex64>,
}

fn instances(b: &BenchSection, c: &Constellation, base: u64) -> Vec<Instance> {
    let nv = noise_var_for_snr(b.n_streams, b.snr_db);
    (0..b.instances)
        .map(|i| {
            let h = rayleigh_block(b.m_antennas, b.n_streams, seed::derive(base, &[i as u64])).at(0, 0).clone();
            let mut rng = seed::rng(base, &[i as u64, 1]);
            let x: Vec<Complex64> = (0..b.n_streams).map(|_| c.point(rng.gen_range(0..c.order()))).collect();
            let y = h
                .mul_vec(&x)
                .into_iter()
                .map(|v| v + complex_gaussian(&mut rng) * nv.sqrt())
                .collect();
            Instance { h, y }
        })
        .collect()
}

fn digest(outputs: &[DetectionOutput]) -> String {
    let mut h = Sha256::new();
    for o in outputs {
        for &l in &o.hard {
            h.update((l as u32).to_le_bytes());
        }
        h.update(o.min_metric.to_bits().to_le_bytes());
        for l in &o.llrs {
            h.update(l.to_bits().to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs every detector at every worker count, median of `repeats` runs.
pub fn run_bench(cfg: &RunConfig) -> Result<Vec<BenchRow>> {
    let b = &cfg.bench;
    if b.instances == 0 || b.repeats == 0 || b.detectors.is_empty() {
        bail!("bench needs instances, repeats and detectors");
    }
    let mut workers = b.workers.clone();
    workers.push(1);
    workers.sort_unstable();
    workers.dedup();
    if workers[0] == 0 {
        bail!("worker counts must be positive");
    }
    let c = Constellation::new(b.modulation_order)?;
    let nv = noise_var_for_snr(b.n_streams, b.snr_db);
    let data = instances(b, &c, cfg.seed);
    let mut rows = Vec::new();
    for name in &b.detectors {
        let det = Detector {
            n_paths: b.n_paths,
            ..cfg.detector(name)?
        };
        let mut base_rate = None;
        let mut reference: Option<String> = None;
        for &w in &workers {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(w).build()?;
            let mut times = Vec::with_capacity(b.repeats);
            let mut outputs = Vec::new();
            for _ in 0..b.repeats {
                let t = Instant::now();
                outputs = pool.install(|| {
                    data.par_iter()
                        .map(|inst| det.detect(&DetectorInput::new(&inst.h, &inst.y, nv, &c)?))
                        .collect::<nlmimo::Result<Vec<_>>>()
                })?;
                times.push(t.elapsed().as_secs_f64());
            }
            times.sort_by(f64::total_cmp);
            let median = times[times.len() / 2];
            let rate = b.instances as f64 / median;
            let base = *base_rate.get_or_insert(rate);
            let d = digest(&outputs);
            match &reference {
                None => reference = Some(d.clone()),
                Some(r) if *r != d => bail!("{det} output differs between 1 and {w} workers"),
                _ => {}
            }
            log::info!("{det} workers={w}: {rate:.0} detections/s");
            rows.push(BenchRow {
                detector: det.to_string(),
                n_streams: b.n_streams,
                m_antennas: b.m_antennas,
                modulation_order: b.modulation_order,
                n_paths: b.n_paths,
                workers: w,
                instances: b.instances,
                median_s: median,
                detections_per_s: rate,
                speedup: rate / base,
                efficiency: rate / base / w as f64,
                digest: d,
            });
        }
    }
    Ok(rows)
}
