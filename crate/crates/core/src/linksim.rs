//! Uplink slot simulation and packet error rate measurement.
//!
//! Every vehicle sends one transport block per slot over the same
//! `rb_per_vehicle` resource blocks (the vehicles are separated spatially),
//! using the 12 data symbols of the slot. The two DMRS symbols carry
//! per-stream pilots on disjoint subcarrier combs.
//!
//! Random streams for a frame depend only on the base seed and a global
//! frame index, so results do not depend on the worker count.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{calibrate_noise, complex_gaussian, ChannelGrid, ClusterProfile, MobilityConfig, SnrRegion};
use crate::detect::{mpnl_detect, mpnl_preprocess, Detector, DetectorInput, DetectorKind};
use crate::error::{Error, Result};
use crate::fec::{BaseMatrix, TransportCodec, MAX_ITERATIONS};
use crate::linalg::{CMatrix, ZERO};
use crate::phy::{Constellation, McsEntry, Numerology, LLR_CLIP};
use crate::seed;

/// Largest stream count a slot carries.
pub const MAX_STREAMS: usize = 12;
/// Largest antenna array examined.
pub const MAX_ANTENNAS: usize = 32;
/// Slot positions of the two DMRS symbols.
pub const DMRS_SYMBOLS: [usize; 2] = [2, 11];
/// Pilot combs per DMRS symbol.
pub const COMBS: usize = 6;

const TAG_NOISE: u64 = 0x4e4f_4953;
const TAG_FRAME: u64 = 0x4652_4d45;

/// Where the detector's channel knowledge comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CsiMode {
    #[default]
    Genie,
    LsDmrs,
}

/// Channel model of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub profile: ClusterProfile,
    pub mobility: MobilityConfig,
    pub region: SnrRegion,
}

impl Default for ChannelSpec {
    fn default() -> Self {
        Self {
            profile: ClusterProfile::tdl_b_like(),
            mobility: MobilityConfig::default(),
            region: SnrRegion::r2(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub numerology: Numerology,
    pub n_streams: usize,
    pub m_antennas: usize,
    pub mcs: McsEntry,
    pub detector: Detector,
    pub channel: ChannelSpec,
    pub rb_per_vehicle: usize,
    pub csi: CsiMode,
    pub seed: u64,
    /// Applied on top of the detectors' own clip.
    pub llr_clip: f64,
    pub max_iterations: usize,
}

impl LinkConfig {
    pub fn new(n_streams: usize, m_antennas: usize, mcs: McsEntry, detector: Detector) -> Self {
        Self {
            numerology: Numerology::default(),
            n_streams,
            m_antennas,
            mcs,
            detector,
            channel: ChannelSpec::default(),
            rb_per_vehicle: 1,
            csi: CsiMode::Genie,
            seed: 0,
            llr_clip: LLR_CLIP,
            max_iterations: MAX_ITERATIONS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.numerology.validate()?;
        if self.n_streams == 0 || self.n_streams > MAX_STREAMS {
            return Err(Error::Config(format!("n_streams {} outside 1..={MAX_STREAMS}", self.n_streams)));
        }
        if self.m_antennas == 0 || self.m_antennas > MAX_ANTENNAS {
            return Err(Error::Config(format!("m_antennas {} outside 1..={MAX_ANTENNAS}", self.m_antennas)));
        }
        if self.rb_per_vehicle == 0 || self.rb_per_vehicle > self.numerology.n_rb {
            return Err(Error::Config(format!("rb_per_vehicle {} outside 1..={}", self.rb_per_vehicle, self.numerology.n_rb)));
        }
        if self.numerology.dmrs_symbols != DMRS_SYMBOLS.len()
            || DMRS_SYMBOLS.iter().any(|&s| s >= self.numerology.symbols_per_slot)
        {
            return Err(Error::Config("slot layout needs 2 DMRS symbols at positions 2 and 11".into()));
        }
        if !(self.llr_clip > 0.0) {
            return Err(Error::Config("llr_clip must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        Ok(())
    }

    pub fn n_subcarriers(&self) -> usize {
        self.rb_per_vehicle * self.numerology.sc_per_rb
    }

    /// Coded bits per transport block.
    pub fn coded_bits(&self) -> usize {
        self.n_subcarriers() * self.numerology.data_symbols * self.mcs.bits_per_symbol()
    }

    pub fn data_symbol_positions(&self) -> Vec<usize> {
        (0..self.numerology.symbols_per_slot)
            .filter(|s| !DMRS_SYMBOLS.contains(s))
            .collect()
    }
}

/// Which stream owns each DMRS resource element.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotBook {
    pub n_streams: usize,
    pub n_subcarriers: usize,
}

impl PilotBook {
    pub fn new(n_streams: usize, n_subcarriers: usize) -> Result<Self> {
        let capacity = COMBS * DMRS_SYMBOLS.len();
        if n_streams == 0 || n_streams > capacity {
            return Err(Error::PilotBook { streams: n_streams, capacity });
        }
        if n_subcarriers < COMBS {
            return Err(Error::Dimension(format!("{n_subcarriers} subcarriers cannot hold {COMBS} combs")));
        }
        Ok(Self { n_streams, n_subcarriers })
    }

    /// DMRS symbol (0 or 1) and comb of a stream.
    pub fn slot_of(&self, stream: usize) -> (usize, usize) {
        (stream / COMBS, stream % COMBS)
    }

    /// Stream transmitting at DMRS symbol `d`, subcarrier `k`, if any.
    pub fn owner(&self, d: usize, k: usize) -> Option<usize> {
        let j = d * COMBS + k % COMBS;
        (j < self.n_streams).then_some(j)
    }

    /// Unit-modulus pilot value.
    pub fn pilot(&self, stream: usize, k: usize) -> Complex64 {
        let phase = std::f64::consts::FRAC_PI_4 * (2 * ((k + 3 * stream) % 4) + 1) as f64;
        Complex64::from_polar(1.0, phase)
    }
}

/// Received DMRS symbols, `[d][subcarrier][antenna]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DmrsObservation {
    pub y: [Vec<Vec<Complex64>>; 2],
}

/// Transmits the pilots of `book` through `grid` with the given noise.
pub fn observe_dmrs<R: Rng + ?Sized>(
    grid: &ChannelGrid,
    book: &PilotBook,
    noise_var: f64,
    rng: &mut R,
) -> DmrsObservation {
    let m = grid.m_antennas();
    let sd = noise_var.sqrt();
    let y = [0, 1].map(|d| {
        (0..book.n_subcarriers)
            .map(|k| {
                let h = grid.at(DMRS_SYMBOLS[d], k);
                (0..m)
                    .map(|r| {
                        let sig = book.owner(d, k).map_or(ZERO, |j| h[(r, j)] * book.pilot(j, k));
                        sig + complex_gaussian(rng) * sd
                    })
                    .collect()
            })
            .collect()
    });
    DmrsObservation { y }
}

/// Least-squares estimate on each stream's comb, nearest pilot subcarrier
/// elsewhere (lower one on ties). The result is constant over the slot.
pub fn estimate_channel_ls(obs: &DmrsObservation, book: &PilotBook) -> Result<ChannelGrid> {
    let nsc = book.n_subcarriers;
    if obs.y.iter().any(|d| d.len() != nsc) {
        return Err(Error::Dimension("DMRS observation does not match the pilot book".into()));
    }
    let m = obs.y[0].first().map_or(0, Vec::len);
    let mut mats = vec![CMatrix::zeros(m, book.n_streams); nsc];
    for j in 0..book.n_streams {
        let (d, comb) = book.slot_of(j);
        let pilots: Vec<usize> = (comb..nsc).step_by(COMBS).collect();
        for (k, h) in mats.iter_mut().enumerate() {
            let kp = *pilots
                .iter()
                .min_by_key(|&&p| (p.abs_diff(k), p))
                .expect("every comb has a pilot");
            let p = book.pilot(j, kp);
            for r in 0..m {
                h[(r, j)] = obs.y[d][kp][r] / p;
            }
        }
    }
    ChannelGrid::new(1, nsc, mats)
}

/// Per-vehicle result of one slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotOutcome {
    /// Converged and bit-exact, per vehicle.
    pub decoded: Vec<bool>,
}

impl SlotOutcome {
    pub fn errors(&self) -> usize {
        self.decoded.iter().filter(|ok| !**ok).count()
    }
}

/// A validated configuration with its transport codec built once.
#[derive(Debug, Clone)]
pub struct LinkSimulator {
    cfg: LinkConfig,
    codec: TransportCodec,
    constellation: Constellation,
    data_symbols: Vec<usize>,
}

impl LinkSimulator {
    pub fn new(cfg: LinkConfig) -> Result<Self> {
        cfg.validate()?;
        let codec = TransportCodec::new(&BaseMatrix::half_rate(), cfg.mcs.code_rate(), cfg.coded_bits())?;
        Ok(Self {
            constellation: cfg.mcs.constellation(),
            data_symbols: cfg.data_symbol_positions(),
            codec,
            cfg,
        })
    }

    pub fn config(&self) -> &LinkConfig {
        &self.cfg
    }

    pub fn codec(&self) -> &TransportCodec {
        &self.codec
    }

    fn check_grid(&self, grid: &ChannelGrid) -> Result<()> {
        let c = &self.cfg;
        let sym_ok = grid.n_symbols() == 1 || grid.n_symbols() == c.numerology.symbols_per_slot;
        let sc_ok = grid.n_subcarriers() == 1 || grid.n_subcarriers() >= c.n_subcarriers();
        if grid.m_antennas() != c.m_antennas || grid.n_streams() != c.n_streams || !sym_ok || !sc_ok {
            return Err(Error::Config(format!(
                "grid {}x{} over {}x{} REs does not match a {}x{} link on {} subcarriers",
                grid.m_antennas(),
                grid.n_streams(),
                grid.n_symbols(),
                grid.n_subcarriers(),
                c.m_antennas,
                c.n_streams,
                c.n_subcarriers()
            )));
        }
        Ok(())
    }

    /// Simulates one slot through `grid` at noise variance `noise_var`.
    pub fn simulate_slot(&self, grid: &ChannelGrid, noise_var: f64, frame_seed: u64) -> Result<SlotOutcome> {
        self.check_grid(grid)?;
        if !(noise_var > 0.0) {
            return Err(Error::NoiseVariance(noise_var));
        }
        let (n, m) = (self.cfg.n_streams, self.cfg.m_antennas);
        let nsc = self.cfg.n_subcarriers();
        let bps = self.constellation.bits_per_symbol();
        let mut rng = seed::rng(frame_seed, &[]);

        let mut info = Vec::with_capacity(n);
        let mut symbols = Vec::with_capacity(n);
        for _ in 0..n {
            let bits: Vec<u8> = (0..self.codec.k()).map(|_| rng.gen_range(0..2)).collect();
            symbols.push(self.constellation.modulate(&self.codec.encode(&bits)?)?);
            info.push(bits);
        }

        let estimate = match self.cfg.csi {
            CsiMode::Genie => None,
            CsiMode::LsDmrs => {
                let book = PilotBook::new(n, nsc)?;
                Some(estimate_channel_ls(&observe_dmrs(grid, &book, noise_var, &mut rng), &book)?)
            }
        };

        let sd = noise_var.sqrt();
        let mut llrs = vec![Vec::with_capacity(self.codec.g()); n];
        let mut x = vec![ZERO; n];
        let mut y = vec![ZERO; m];
        let mut re = 0;
        for &s in &self.data_symbols {
            for k in 0..nsc {
                for (j, xj) in x.iter_mut().enumerate() {
                    *xj = symbols[j][re];
                }
                let h = grid.at(s, k);
                for (r, yr) in y.iter_mut().enumerate() {
                    let mut acc = ZERO;
                    for (j, xj) in x.iter().enumerate() {
                        acc += h[(r, j)] * xj;
                    }
                    *yr = acc + complex_gaussian(&mut rng) * sd;
                }
                let h_det = estimate.as_ref().map_or(h, |e| e.at(s, k));
                let soft = self.detect(h_det, &y, noise_var)?;
                for (j, out) in llrs.iter_mut().enumerate() {
                    out.extend(
                        soft[j * bps..(j + 1) * bps]
                            .iter()
                            .map(|l| l.clamp(-self.cfg.llr_clip, self.cfg.llr_clip)),
                    );
                }
                re += 1;
            }
        }

        let decoded = info
            .iter()
            .zip(&llrs)
            .map(|(bits, l)| {
                let (dec, converged) = self.codec.decode(l, self.cfg.max_iterations)?;
                Ok(converged && &dec == bits)
            })
            .collect::<Result<_>>()?;
        Ok(SlotOutcome { decoded })
    }

    /// Detector LLRs for one resource element; a singular channel (ZF with
    /// too few antennas) yields erasures.
    fn detect(&self, h: &CMatrix, y: &[Complex64], noise_var: f64) -> Result<Vec<f64>> {
        let c = &self.constellation;
        let input = DetectorInput::new(h, y, noise_var, c)?;
        let det = self.cfg.detector;
        let res = match det.kind {
            DetectorKind::Mpnl => {
                let paths = det.effective_paths(c.order(), h.cols());
                mpnl_preprocess(h, noise_var, paths, c)
                    .and_then(|plan| mpnl_detect(&plan, &input))
                    .map(|(_, out)| out)
            }
            _ => det.detect(&input),
        };
        match res {
            Ok(out) => Ok(out.llrs),
            Err(Error::SingularChannel) => Ok(vec![0.0; h.cols() * c.bits_per_symbol()]),
            Err(e) => Err(e),
        }
    }

    /// Noise variance used for channel `index` of a measurement.
    pub fn noise_var_for(&self, grid: &ChannelGrid, index: usize) -> f64 {
        calibrate_noise(&self.cfg.channel.region, grid, seed::derive(self.cfg.seed, &[TAG_NOISE, index as u64]))
    }

    /// Seed of global frame `g` (frame-major over the channel list).
    pub fn frame_seed(&self, global_frame: u64) -> u64 {
        seed::derive(self.cfg.seed, &[TAG_FRAME, global_frame])
    }

    /// Runs frames `first..first + count` of every channel and returns
    /// (transport blocks, errors).
    pub fn run_frames(&self, channels: &[ChannelGrid], first: usize, count: usize) -> Result<(u64, u64)> {
        let nc = channels.len();
        let noise: Vec<f64> = channels.iter().enumerate().map(|(i, g)| self.noise_var_for(g, i)).collect();
        let outcomes: Vec<usize> = (0..nc * count)
            .into_par_iter()
            .map(|job| {
                let (fi, ci) = (first + job / nc, job % nc);
                let global = (fi * nc + ci) as u64;
                self.simulate_slot(&channels[ci], noise[ci], self.frame_seed(global))
                    .map(|o| o.errors())
            })
            .collect::<Result<_>>()?;
        let errors: usize = outcomes.iter().sum();
        Ok(((outcomes.len() * self.cfg.n_streams) as u64, errors as u64))
    }
}

/// Transport-block error statistics.
///
/// `frames` counts transport blocks (one per vehicle per slot), so
/// `per = errors / frames`; `slots` counts simulated slots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerResult {
    pub frames: u64,
    pub errors: u64,
    pub per: f64,
    pub ci95_halfwidth: f64,
    pub slots: u64,
}

impl PerResult {
    pub fn from_counts(frames: u64, errors: u64, slots: u64) -> Self {
        let per = if frames == 0 { 0.0 } else { errors as f64 / frames as f64 };
        let ci = if frames == 0 { 0.0 } else { 1.96 * (per * (1.0 - per) / frames as f64).sqrt() };
        Self {
            frames,
            errors,
            per,
            ci95_halfwidth: ci,
            slots,
        }
    }

    /// 95% Wilson score interval, used for stopping decisions because it
    /// stays honest at zero errors.
    pub fn wilson95(&self) -> (f64, f64) {
        if self.frames == 0 {
            return (0.0, 1.0);
        }
        let z2 = 1.96f64 * 1.96;
        let n = self.frames as f64;
        let p = self.per;
        let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
        let half = 1.96 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n);
        ((centre - half).max(0.0), (centre + half).min(1.0))
    }

    /// True when the interval lies entirely on one side of `threshold`.
    pub fn excludes(&self, threshold: f64) -> bool {
        let (lo, hi) = self.wilson95();
        hi < threshold || lo > threshold
    }
}

/// PER over every frame of every channel.
pub fn measure_per(cfg: &LinkConfig, channels: &[ChannelGrid], frames_per_channel: usize) -> Result<PerResult> {
    let sim = LinkSimulator::new(cfg.clone())?;
    measure_per_with(&sim, channels, frames_per_channel)
}

pub fn measure_per_with(sim: &LinkSimulator, channels: &[ChannelGrid], frames_per_channel: usize) -> Result<PerResult> {
    if frames_per_channel == 0 || channels.is_empty() {
        return Err(Error::Config("need at least one channel and one frame".into()));
    }
    let (tbs, errors) = sim.run_frames(channels, 0, frames_per_channel)?;
    Ok(PerResult::from_counts(tbs, errors, (channels.len() * frames_per_channel) as u64))
}

/// Frame budget for adaptive measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    /// Frames per channel added per round.
    pub batch: usize,
    /// Upper bound on frames per channel.
    pub max_frames_per_channel: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            batch: 2,
            max_frames_per_channel: 200,
        }
    }
}

/// Adds batches until the Wilson interval excludes `threshold` or the
/// budget runs out. The stopping rule only sees whole batches, so the
/// result is deterministic.
pub fn measure_per_adaptive(
    sim: &LinkSimulator,
    channels: &[ChannelGrid],
    budget: Budget,
    threshold: f64,
) -> Result<PerResult> {
    if budget.batch == 0 || budget.max_frames_per_channel == 0 || channels.is_empty() {
        return Err(Error::Config("empty adaptive budget".into()));
    }
    let (mut tbs, mut errors, mut done) = (0, 0, 0);
    loop {
        let count = budget.batch.min(budget.max_frames_per_channel - done);
        let (t, e) = sim.run_frames(channels, done, count)?;
        tbs += t;
        errors += e;
        done += count;
        let res = PerResult::from_counts(tbs, errors, (channels.len() * done) as u64);
        if res.excludes(threshold) || done >= budget.max_frames_per_channel {
            return Ok(res);
        }
    }
}
