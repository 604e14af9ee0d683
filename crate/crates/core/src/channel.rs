//! Fading channel realizations over one slot.
//!
//! Two generators are provided: i.i.d. block Rayleigh (used as a test
//! oracle channel) and clustered tapped-delay-line profiles with classical
//! Doppler, which stand in for the CDL channels of the vehicular
//! scenarios. Both are pure functions of their configuration and seed.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, ZERO};
use crate::phy::Numerology;
use crate::seed;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Spectral bins per Doppler process.
const DOPPLER_BINS: usize = 64;

/// Circularly-symmetric complex Gaussian with unit variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Multipath cluster profile, powers normalized to sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterProfile {
    pub name: String,
    pub delays_s: Vec<f64>,
    pub powers: Vec<f64>,
    /// Rician K of the first cluster; `None` for NLOS profiles.
    pub rician_k_db: Option<f64>,
}

/// Profile as written in config files: delays in ns, powers in dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpec {
    pub name: String,
    pub delays_ns: Vec<f64>,
    pub powers_db: Vec<f64>,
    #[serde(default)]
    pub rician_k_db: Option<f64>,
}

impl ClusterProfile {
    pub fn new(
        name: impl Into<String>,
        delays_s: Vec<f64>,
        powers: Vec<f64>,
        rician_k_db: Option<f64>,
    ) -> Result<Self> {
        if delays_s.is_empty() || delays_s.len() != powers.len() {
            return Err(Error::Profile("delays and powers must be non-empty and equal length".into()));
        }
        if delays_s.iter().any(|&d| !(d >= 0.0)) || delays_s.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Profile("delays must be non-negative and sorted".into()));
        }
        if powers.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::Profile("cluster powers must be positive".into()));
        }
        let total: f64 = powers.iter().sum();
        Ok(Self {
            name: name.into(),
            delays_s,
            powers: powers.iter().map(|p| p / total).collect(),
            rician_k_db,
        })
    }

    pub fn from_spec(spec: &ProfileSpec) -> Result<Self> {
        Self::new(
            spec.name.clone(),
            spec.delays_ns.iter().map(|d| d * 1e-9).collect(),
            spec.powers_db.iter().map(|p| 10f64.powf(p / 10.0)).collect(),
            spec.rician_k_db,
        )
    }

    pub fn is_los(&self) -> bool {
        self.rician_k_db.is_some()
    }

    /// NLOS, six clusters with exponential power decay.
    pub fn tdl_b_like() -> Self {
        Self::from_spec(&ProfileSpec {
            name: "TDL-B-like".into(),
            delays_ns: vec![0.0, 80.0, 190.0, 330.0, 520.0, 780.0],
            powers_db: vec![0.0, -1.6, -3.8, -6.6, -10.4, -15.6],
            rician_k_db: None,
        })
        .unwrap()
    }

    /// LOS first cluster with K = 10 dB plus four NLOS clusters.
    pub fn tdl_d_like() -> Self {
        Self::from_spec(&ProfileSpec {
            name: "TDL-D-like".into(),
            delays_ns: vec![0.0, 120.0, 310.0, 560.0, 900.0],
            powers_db: vec![0.0, -9.0, -12.0, -15.0, -19.0],
            rician_k_db: Some(10.0),
        })
        .unwrap()
    }

    /// Looks up a built-in profile; case, `-` and `_` are interchangeable.
    pub fn builtin(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().replace('_', "-").as_str() {
            "tdl-b-like" | "tdl-b" | "cdl-b" => Some(Self::tdl_b_like()),
            "tdl-d-like" | "tdl-d" | "cdl-d" => Some(Self::tdl_d_like()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobilityConfig {
    pub speed_kmh: f64,
    pub carrier_hz: f64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        Self {
            speed_kmh: 30.0,
            carrier_hz: 3.5e9,
        }
    }
}

impl MobilityConfig {
    pub fn new(speed_kmh: f64, carrier_hz: f64) -> Result<Self> {
        if !(speed_kmh >= 0.0) || !(carrier_hz > 0.0) {
            return Err(Error::Config("speed must be ≥ 0 and carrier > 0".into()));
        }
        Ok(Self {
            speed_kmh,
            carrier_hz,
        })
    }

    /// Maximum Doppler shift `v·f_c/c`.
    pub fn doppler_hz(&self) -> f64 {
        self.speed_kmh / 3.6 * self.carrier_hz / SPEED_OF_LIGHT
    }
}

/// Channel matrices over a slot, indexed `[symbol][subcarrier]`.
///
/// A grid axis of length one is broadcast, so a block-fading grid stores a
/// single matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelGrid {
    n_symbols: usize,
    n_subcarriers: usize,
    m_antennas: usize,
    n_streams: usize,
    mats: Vec<CMatrix>,
}

impl ChannelGrid {
    pub fn new(n_symbols: usize, n_subcarriers: usize, mats: Vec<CMatrix>) -> Result<Self> {
        if n_symbols == 0 || n_subcarriers == 0 || mats.len() != n_symbols * n_subcarriers {
            return Err(Error::Dimension("grid shape does not match matrix count".into()));
        }
        let (m, n) = (mats[0].rows(), mats[0].cols());
        if mats.iter().any(|h| h.rows() != m || h.cols() != n) {
            return Err(Error::Dimension("inconsistent matrix sizes in grid".into()));
        }
        Ok(Self {
            n_symbols,
            n_subcarriers,
            m_antennas: m,
            n_streams: n,
            mats,
        })
    }

    pub fn constant(h: CMatrix) -> Self {
        Self::new(1, 1, vec![h]).unwrap()
    }

    pub fn n_symbols(&self) -> usize {
        self.n_symbols
    }

    pub fn n_subcarriers(&self) -> usize {
        self.n_subcarriers
    }

    pub fn m_antennas(&self) -> usize {
        self.m_antennas
    }

    pub fn n_streams(&self) -> usize {
        self.n_streams
    }

    /// Matrix at a resource element; length-one axes broadcast.
    pub fn at(&self, symbol: usize, subcarrier: usize) -> &CMatrix {
        let s = if self.n_symbols == 1 { 0 } else { symbol };
        let k = if self.n_subcarriers == 1 { 0 } else { subcarrier };
        &self.mats[s * self.n_subcarriers + k]
    }

    pub fn matrices(&self) -> &[CMatrix] {
        &self.mats
    }

    /// The same grid restricted to the first `m` receive antennas.
    pub fn first_antennas(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.m_antennas {
            return Err(Error::Dimension(format!(
                "cannot take {m} of {} antennas",
                self.m_antennas
            )));
        }
        let mats = self
            .mats
            .iter()
            .map(|h| CMatrix::from_fn(m, self.n_streams, |r, c| h[(r, c)]))
            .collect();
        Self::new(self.n_symbols, self.n_subcarriers, mats)
    }

    /// Mean `|h_ij|²` over the whole grid.
    pub fn mean_link_power(&self) -> f64 {
        let total: f64 = self.mats.iter().map(CMatrix::frobenius_sq).sum();
        total / (self.mats.len() * self.m_antennas * self.n_streams) as f64
    }

    /// Writes the fixture format: magic `NLCG`, `u32` version 1, then `u32`
    /// symbols, subcarriers, M, N, then `f64` (re, im) pairs in
    /// `[symbol][subcarrier][row][col]` order. All little endian.
    pub fn write_fixture<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"NLCG")?;
        for v in [1, self.n_symbols, self.n_subcarriers, self.m_antennas, self.n_streams] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        for h in &self.mats {
            for v in h.as_slice() {
                w.write_all(&v.re.to_le_bytes())?;
                w.write_all(&v.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_fixture<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"NLCG" {
            return Err(Error::Io("not a channel grid fixture".into()));
        }
        let mut u = [0u32; 5];
        for v in u.iter_mut() {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            *v = u32::from_le_bytes(b);
        }
        if u[0] != 1 {
            return Err(Error::Io(format!("unsupported fixture version {}", u[0])));
        }
        let [_, ns, nk, m, n] = u.map(|v| v as usize);
        if ns * nk * m * n > (1 << 28) {
            return Err(Error::Io("fixture header is implausibly large".into()));
        }
        let mut mats = Vec::with_capacity(ns * nk);
        let mut buf = [0u8; 8];
        for _ in 0..ns * nk {
            let mut data = Vec::with_capacity(m * n);
            for _ in 0..m * n {
                r.read_exact(&mut buf)?;
                let re = f64::from_le_bytes(buf);
                r.read_exact(&mut buf)?;
                data.push(Complex64::new(re, f64::from_le_bytes(buf)));
            }
            mats.push(CMatrix::from_vec(m, n, data)?);
        }
        Self::new(ns, nk, mats)
    }
}

/// I.i.d. CN(0,1) entries, time-invariant and frequency-flat.
pub fn rayleigh_block(m: usize, n: usize, seed: u64) -> ChannelGrid {
    let mut rng = seed::rng(seed, &[0x52_41_59]);
    ChannelGrid::constant(CMatrix::from_fn(m, n, |_, _| complex_gaussian(&mut rng)))
}

/// Unit-power Gaussian process with the classical Doppler spectrum.
///
/// White complex Gaussian amplitudes are placed on `DOPPLER_BINS`
/// equal-power bins of the Jakes spectrum (bin centres
/// `f_d·cos(π(k + ½)/K)`), so samples are exactly Gaussian and the
/// autocorrelation is the midpoint-rule approximation of `J₀(2π f_d τ)`.
#[derive(Debug, Clone)]
pub struct DopplerProcess {
    freqs: Vec<f64>,
    amps: Vec<Complex64>,
}

impl DopplerProcess {
    pub fn new<R: Rng + ?Sized>(doppler_hz: f64, rng: &mut R) -> Self {
        let k = DOPPLER_BINS;
        let scale = (k as f64).sqrt().recip();
        let freqs = (0..k)
            .map(|i| doppler_hz * (PI * (i as f64 + 0.5) / k as f64).cos())
            .collect();
        let amps = (0..k).map(|_| complex_gaussian(rng) * scale).collect();
        Self { freqs, amps }
    }

    pub fn sample(&self, t: f64) -> Complex64 {
        self.freqs
            .iter()
            .zip(&self.amps)
            .map(|(f, a)| a * Complex64::from_polar(1.0, 2.0 * PI * f * t))
            .sum()
    }
}

/// Clustered TDL channel over `n_subcarriers` adjacent subcarriers and the
/// full slot. Each link (rx, stream) fades independently.
pub fn tdl_generate(
    profile: &ClusterProfile,
    mobility: &MobilityConfig,
    numerology: &Numerology,
    m: usize,
    n: usize,
    n_subcarriers: usize,
    seed: u64,
) -> Result<ChannelGrid> {
    let guard = numerology.guard_s();
    if let Some(&d) = profile.delays_s.last() {
        if d >= guard {
            return Err(Error::DelayExceedsGuard {
                delay_s: d,
                guard_s: guard,
            });
        }
    }
    if m == 0 || n == 0 || n_subcarriers == 0 {
        return Err(Error::Dimension("empty channel grid".into()));
    }
    let fd = mobility.doppler_hz();
    let n_sym = numerology.symbols_per_slot;
    let ts = numerology.symbol_duration_s();
    let n_clusters = profile.powers.len();
    let k_lin = profile.rician_k_db.map(|k| 10f64.powf(k / 10.0));

    // per-cluster phase ramp across subcarriers, shared by every link
    let ramps: Vec<Vec<Complex64>> = profile
        .delays_s
        .iter()
        .map(|tau| {
            (0..n_subcarriers)
                .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 * numerology.scs_hz * tau))
                .collect()
        })
        .collect();

    let mut mats = vec![CMatrix::zeros(m, n); n_sym * n_subcarriers];
    let mut taps = vec![ZERO; n_clusters];
    for col in 0..n {
        // a vehicle moves either towards or away from the radio unit
        let mut vrng = seed::rng(seed, &[0x56_45_48, col as u64]);
        let los_doppler = if vrng.gen::<bool>() { fd } else { -fd };
        for row in 0..m {
            let mut rng = seed::rng(seed, &[0x4c_49_4e_4b, row as u64, col as u64]);
            let procs: Vec<DopplerProcess> =
                (0..n_clusters).map(|_| DopplerProcess::new(fd, &mut rng)).collect();
            let los_phase = rng.gen::<f64>() * 2.0 * PI;
            for s in 0..n_sym {
                let t = s as f64 * ts;
                for (c, tap) in taps.iter_mut().enumerate() {
                    let g = procs[c].sample(t);
                    *tap = match (c, k_lin) {
                        (0, Some(kl)) => {
                            let los = Complex64::from_polar(1.0, los_phase + 2.0 * PI * los_doppler * t);
                            (los * (kl / (kl + 1.0)).sqrt() + g * (1.0 / (kl + 1.0)).sqrt())
                                * profile.powers[c].sqrt()
                        }
                        _ => g * profile.powers[c].sqrt(),
                    };
                }
                for k in 0..n_subcarriers {
                    let v: Complex64 = taps.iter().zip(&ramps).map(|(g, r)| g * r[k]).sum();
                    mats[s * n_subcarriers + k][(row, col)] = v;
                }
            }
        }
    }
    ChannelGrid::new(n_sym, n_subcarriers, mats)
}

/// Coverage region and its average receive SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrRegion {
    pub name: String,
    pub target_snr_db: f64,
    pub jitter_db: f64,
}

impl SnrRegion {
    /// Within 250 m of the radio unit.
    pub fn r1() -> Self {
        Self {
            name: "R1".into(),
            target_snr_db: 20.0,
            jitter_db: 1.0,
        }
    }

    /// 250–500 m from the radio unit.
    pub fn r2() -> Self {
        Self {
            name: "R2".into(),
            target_snr_db: 15.0,
            jitter_db: 1.0,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "R1" | "r1" => Some(Self::r1()),
            "R2" | "r2" => Some(Self::r2()),
            _ => None,
        }
    }

    pub fn fixed(target_snr_db: f64) -> Self {
        Self {
            name: format!("{target_snr_db}dB"),
            target_snr_db,
            jitter_db: 0.0,
        }
    }

    pub fn with_jitter(mut self, jitter_db: f64) -> Self {
        self.jitter_db = jitter_db;
        self
    }

    pub fn draw_snr_db<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.jitter_db > 0.0 {
            self.target_snr_db + rng.gen_range(-self.jitter_db..=self.jitter_db)
        } else {
            self.target_snr_db
        }
    }
}

/// Noise variance for an SNR defined as total received signal power per
/// receive antenna over noise power, with unit transmit power per stream
/// and a normalized grid (so the signal term is `N`).
pub fn noise_var_for_snr(n_streams: usize, snr_db: f64) -> f64 {
    n_streams as f64 / 10f64.powf(snr_db / 10.0)
}

/// Draws the realization's SNR within the region's jitter and returns the
/// matching noise variance.
pub fn calibrate_noise(region: &SnrRegion, grid: &ChannelGrid, seed: u64) -> f64 {
    let mut rng = seed::rng(seed, &[0x53_4e_52]);
    noise_var_for_snr(grid.n_streams(), region.draw_snr_db(&mut rng))
}
