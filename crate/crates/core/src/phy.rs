//! Constellations, the MCS table, slot numerology and bit/symbol mapping.
//!
//! # Mapping convention
//!
//! Every constellation is square QAM built from two Gray-coded PAM axes.
//! For a `2k`-bit label `b0 b1 … b(2k−1)` (b0 first on the wire), bits
//! `b0..b(k−1)` select the in-phase amplitude and `bk..b(2k−1)` the
//! quadrature amplitude. Each axis uses
//!
//! ```text
//! k = 1: a = (1 − 2b0)
//! k = 2: a = (1 − 2b0)·(2 − (1 − 2b1))
//! k = 3: a = (1 − 2b0)·(4 − (1 − 2b1)·(2 − (1 − 2b2)))
//! ```
//!
//! scaled by `1/√2`, `1/√10`, `1/√42` for QPSK, 16-QAM and 64-QAM. So
//! QPSK `00` is `(+1 + 1j)/√2`.
//!
//! # LLR sign
//!
//! A positive LLR means bit 0 is more likely:
//! `LLR_b = (min_{s: b=1} |y − s|² − min_{s: b=0} |y − s|²) / σ²`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default LLR magnitude clip.
pub const LLR_CLIP: f64 = 20.0;

/// Square Gray-mapped QAM constellation with unit average energy.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    order: usize,
    bits: usize,
    /// `points[label]` is the point carrying that label.
    points: Vec<Complex64>,
}

fn axis_amplitude(bits: &[u8]) -> f64 {
    let sign = 1.0 - 2.0 * bits[0] as f64;
    if bits.len() == 1 {
        return sign;
    }
    let inner = axis_amplitude(&bits[1..]);
    sign * ((1usize << (bits.len() - 1)) as f64 - inner)
}

impl Constellation {
    pub fn new(order: usize) -> Result<Self> {
        let bits = match order {
            4 => 2,
            16 => 4,
            64 => 6,
            _ => return Err(Error::ModulationOrder(order)),
        };
        let half = bits / 2;
        let scale = match order {
            4 => 2.0f64,
            16 => 10.0,
            _ => 42.0,
        }
        .sqrt()
        .recip();
        let points = (0..order)
            .map(|label| {
                let b = label_bits(label, bits);
                Complex64::new(axis_amplitude(&b[..half]), axis_amplitude(&b[half..])) * scale
            })
            .collect();
        Ok(Self {
            order,
            bits,
            points,
        })
    }

    pub fn qpsk() -> Self {
        Self::new(4).unwrap()
    }

    pub fn qam16() -> Self {
        Self::new(16).unwrap()
    }

    pub fn qam64() -> Self {
        Self::new(64).unwrap()
    }

    /// Number of points `Q`.
    #[inline]
    pub fn order(&self) -> usize {
        self.order
    }

    /// Bits per symbol, `log2(Q)`.
    #[inline]
    pub fn bits_per_symbol(&self) -> usize {
        self.bits
    }

    /// Points indexed by label.
    #[inline]
    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    #[inline]
    pub fn point(&self, label: usize) -> Complex64 {
        self.points[label]
    }

    /// Bit `b` (0 = first on the wire) of a label.
    #[inline]
    pub fn bit(&self, label: usize, b: usize) -> u8 {
        ((label >> (self.bits - 1 - b)) & 1) as u8
    }

    /// Label of the nearest point, lowest label on ties.
    pub fn slice(&self, y: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (l, p) in self.points.iter().enumerate() {
            let d = (y - p).norm_sqr();
            if d < best_d {
                best = l;
                best_d = d;
            }
        }
        best
    }

    /// Maps bits to symbols.
    pub fn modulate(&self, bits: &[u8]) -> Result<Vec<Complex64>> {
        if bits.len() % self.bits != 0 {
            return Err(Error::BitLength {
                bits: bits.len(),
                per_symbol: self.bits,
            });
        }
        Ok(bits
            .chunks_exact(self.bits)
            .map(|g| self.points[bits_to_label(g)])
            .collect())
    }

    /// Bits carried by a label, first on the wire first.
    pub fn label_to_bits(&self, label: usize) -> Vec<u8> {
        label_bits(label, self.bits)
    }

    /// Max-log LLRs, clipped at [`LLR_CLIP`].
    pub fn demap_llr(&self, y: Complex64, noise_var: f64) -> Result<Vec<f64>> {
        self.demap_llr_clipped(y, noise_var, LLR_CLIP)
    }

    pub fn demap_llr_clipped(&self, y: Complex64, noise_var: f64, clip: f64) -> Result<Vec<f64>> {
        if !(noise_var > 0.0) {
            return Err(Error::NoiseVariance(noise_var));
        }
        let mut out = Vec::with_capacity(self.bits);
        self.demap_into(y, noise_var, clip, &mut out);
        Ok(out)
    }

    pub(crate) fn demap_into(&self, y: Complex64, noise_var: f64, clip: f64, out: &mut Vec<f64>) {
        let mut best = [[f64::INFINITY; 2]; 8];
        for (label, p) in self.points.iter().enumerate() {
            let d = (y - p).norm_sqr();
            for (b, slot) in best.iter_mut().enumerate().take(self.bits) {
                let v = self.bit(label, b) as usize;
                if d < slot[v] {
                    slot[v] = d;
                }
            }
        }
        for slot in best.iter().take(self.bits) {
            let llr = (slot[1] - slot[0]) / noise_var;
            out.push(llr.clamp(-clip, clip));
        }
    }
}

pub(crate) fn label_bits(label: usize, bits: usize) -> Vec<u8> {
    (0..bits)
        .map(|b| ((label >> (bits - 1 - b)) & 1) as u8)
        .collect()
}

pub(crate) fn bits_to_label(bits: &[u8]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | (b & 1) as usize)
}

/// One row of the MCS table. Code rate is `rate_x1024 / 1024`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McsEntry {
    pub index: usize,
    pub modulation_order: usize,
    pub rate_x1024: u32,
}

impl McsEntry {
    pub fn code_rate(&self) -> f64 {
        self.rate_x1024 as f64 / 1024.0
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.modulation_order.trailing_zeros() as usize
    }

    /// Bits/s/Hz, `log2(Q) × code rate`.
    pub fn spectral_efficiency(&self) -> f64 {
        self.bits_per_symbol() as f64 * self.code_rate()
    }

    pub fn constellation(&self) -> Constellation {
        Constellation::new(self.modulation_order).expect("table holds valid orders")
    }
}

// (Q, rate × 1024), patterned on the NR 64QAM table. Index 17 uses 440
// instead of 438 so spectral efficiency is strictly increasing.
const DEFAULT_MCS: [(usize, u32); 28] = [
    (4, 120),
    (4, 157),
    (4, 193),
    (4, 251),
    (4, 308),
    (4, 379),
    (4, 449),
    (4, 526),
    (4, 602),
    (4, 679),
    (16, 340),
    (16, 378),
    (16, 434),
    (16, 490),
    (16, 553),
    (16, 616),
    (16, 658),
    (64, 440),
    (64, 466),
    (64, 517),
    (64, 567),
    (64, 616),
    (64, 666),
    (64, 719),
    (64, 772),
    (64, 822),
    (64, 873),
    (64, 910),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsTable {
    pub entries: Vec<McsEntry>,
}

impl Default for McsTable {
    fn default() -> Self {
        Self {
            entries: DEFAULT_MCS
                .iter()
                .enumerate()
                .map(|(index, &(modulation_order, rate_x1024))| McsEntry {
                    index,
                    modulation_order,
                    rate_x1024,
                })
                .collect(),
        }
    }
}

impl McsTable {
    /// Validates an override table.
    pub fn new(entries: Vec<McsEntry>) -> Result<Self> {
        for (i, e) in entries.iter().enumerate() {
            if e.index != i {
                return Err(Error::Config(format!("MCS entry {i} has index {}", e.index)));
            }
            Constellation::new(e.modulation_order)?;
            if e.rate_x1024 == 0 || e.rate_x1024 >= 1024 {
                return Err(Error::Config(format!("MCS {i}: code rate out of (0,1)")));
            }
        }
        for w in entries.windows(2) {
            if w[1].spectral_efficiency() <= w[0].spectral_efficiency() {
                return Err(Error::Config(format!(
                    "spectral efficiency not increasing at MCS {}",
                    w[1].index
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, index: usize) -> Result<McsEntry> {
        self.entries.get(index).copied().ok_or(Error::McsIndex(index))
    }
}

/// Slot numerology: 30 kHz SCS over 30 MHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Numerology {
    pub scs_hz: f64,
    pub bandwidth_hz: f64,
    pub n_rb: usize,
    pub sc_per_rb: usize,
    pub symbols_per_slot: usize,
    pub data_symbols: usize,
    pub dmrs_symbols: usize,
    pub slot_duration_s: f64,
}

impl Default for Numerology {
    fn default() -> Self {
        Self {
            scs_hz: 30_000.0,
            bandwidth_hz: 30_000_000.0,
            n_rb: 78,
            sc_per_rb: 12,
            symbols_per_slot: 14,
            data_symbols: 12,
            dmrs_symbols: 2,
            slot_duration_s: 0.0005,
        }
    }
}

impl Numerology {
    pub fn validate(&self) -> Result<()> {
        if self.data_symbols + self.dmrs_symbols != self.symbols_per_slot {
            return Err(Error::Config("data + DMRS symbols must fill the slot".into()));
        }
        if (self.n_rb * self.sc_per_rb) as f64 * self.scs_hz > self.bandwidth_hz {
            return Err(Error::Config("resource blocks exceed the bandwidth".into()));
        }
        Ok(())
    }

    /// Cyclic-prefix-equivalent guard: 4.69 µs at 15 kHz, halved per SCS doubling.
    pub fn guard_s(&self) -> f64 {
        144.0 / 2048.0 / self.scs_hz
    }

    pub fn symbol_duration_s(&self) -> f64 {
        self.slot_duration_s / self.symbols_per_slot as f64
    }
}

/// A V2I/V2N service and its uplink rate requirement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UseCase {
    pub name: String,
    pub rate_bps: f64,
}

impl UseCase {
    pub fn new(name: impl Into<String>, rate_bps: f64) -> Result<Self> {
        if !(rate_bps > 0.0) {
            return Err(Error::Config(format!("use case rate must be positive, got {rate_bps}")));
        }
        Ok(Self {
            name: name.into(),
            rate_bps,
        })
    }

    /// The five reference services.
    pub fn defaults() -> Vec<UseCase> {
        [
            ("Teleoperated Driving", 50e6),
            ("Basic Safety", 30e6),
            ("Cooperative Sensing", 25e6),
            ("Cooperative Manouvering", 5e6),
            ("Traffic Efficiency", 2e6),
        ]
        .into_iter()
        .map(|(n, r)| UseCase::new(n, r).unwrap())
        .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all() -> [Constellation; 3] {
        [Constellation::qpsk(), Constellation::qam16(), Constellation::qam64()]
    }

    #[test]
    fn qpsk_anchor_point() {
        let c = Constellation::qpsk();
        let s = c.modulate(&[0, 0]).unwrap();
        let r = 0.5f64.sqrt();
        assert!((s[0] - Complex64::new(r, r)).norm() < 1e-15);
        let s = c.modulate(&[0, 1, 1, 0, 1, 1, 0, 0]).unwrap();
        assert_eq!(s.len(), 4);
        for v in s {
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_average_energy() {
        for c in all() {
            let e: f64 = c.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / c.order() as f64;
            assert!((e - 1.0).abs() < 1e-12, "Q={}", c.order());
        }
    }

    #[test]
    fn gray_neighbours_differ_in_one_bit() {
        for c in all() {
            let pts = c.points();
            let min_d = pts
                .iter()
                .flat_map(|a| pts.iter().map(move |b| (a - b).norm()))
                .filter(|&d| d > 1e-9)
                .fold(f64::INFINITY, f64::min);
            for (a, pa) in pts.iter().enumerate() {
                for (b, pb) in pts.iter().enumerate() {
                    let d = pb - pa;
                    let horiz = (d.re.abs() - min_d).abs() < 1e-9 && d.im.abs() < 1e-9;
                    let vert = (d.im.abs() - min_d).abs() < 1e-9 && d.re.abs() < 1e-9;
                    if horiz || vert {
                        assert_eq!((a ^ b).count_ones(), 1, "Q={} {a} {b}", c.order());
                    }
                }
            }
            // labels are a bijection: all points distinct
            for a in 0..pts.len() {
                for b in 0..a {
                    assert!((pts[a] - pts[b]).norm() > 1e-6);
                }
            }
        }
    }

    #[test]
    fn modulate_rejects_partial_symbol() {
        assert_eq!(
            Constellation::qam16().modulate(&[0, 1, 1]),
            Err(Error::BitLength { bits: 3, per_symbol: 4 })
        );
    }

    #[test]
    fn demap_saturation_and_symmetry() {
        let c = Constellation::qpsk();
        let y = Complex64::new(1.0, 1.0) * (10.0 / 2f64.sqrt());
        for l in c.demap_llr(y, 1.0).unwrap() {
            assert!((l - LLR_CLIP).abs() < 1e-9);
        }
        let far = y * 3.0;
        assert_eq!(c.demap_llr(far, 1.0).unwrap(), vec![LLR_CLIP, LLR_CLIP]);
        assert_eq!(c.demap_llr(Complex64::new(0.0, 0.0), 1.0).unwrap(), vec![0.0, 0.0]);
        assert!(c.demap_llr(y, 0.0).is_err());
    }

    #[test]
    fn demap_recovers_every_label() {
        for c in all() {
            for label in 0..c.order() {
                for nv in [1e-3, 1.0, 10.0] {
                    let llr = c.demap_llr(c.point(label), nv).unwrap();
                    let bits: Vec<u8> = llr.iter().map(|&l| (l < 0.0) as u8).collect();
                    assert_eq!(bits, c.label_to_bits(label));
                }
            }
        }
    }

    #[test]
    fn demap_scales_with_noise_before_clip() {
        let c = Constellation::qam16();
        let y = Complex64::new(0.13, -0.41);
        let base = c.demap_llr_clipped(y, 1.0, f64::INFINITY).unwrap();
        let scaled = c.demap_llr_clipped(y, 0.25, f64::INFINITY).unwrap();
        for (a, b) in base.iter().zip(&scaled) {
            assert!((a / 0.25 - b).abs() < 1e-12);
        }
    }

    fn scale_of(q: usize) -> f64 {
        match q {
            4 => 2f64.sqrt(),
            16 => 10f64.sqrt(),
            _ => 42f64.sqrt(),
        }
    }

    #[test]
    fn slicing_matches_per_axis_nearest() {
        for c in all() {
            for k in 0..400 {
                let y = Complex64::new((k as f64 * 0.37).sin() * 1.4, (k as f64 * 0.73).cos() * 1.4);
                // per-axis nearest level, built independently of the point table
                let axis = |v: f64, k: usize| {
                    let levels = (1usize << k) as f64;
                    let idx = ((v * scale_of(c.order()) + levels - 1.0) / 2.0).round().clamp(0.0, levels - 1.0);
                    (2.0 * idx - levels + 1.0) / scale_of(c.order())
                };
                let k = c.bits_per_symbol() / 2;
                let target = Complex64::new(axis(y.re, k), axis(y.im, k));
                let brute = (0..c.order()).find(|&l| (c.point(l) - target).norm() < 1e-9).unwrap();
                assert_eq!(c.slice(y), brute);
            }
        }
    }

    #[test]
    fn mcs_table_shape() {
        let t = McsTable::default();
        assert_eq!(t.entries.len(), 28);
        for e in &t.entries {
            if e.index <= 9 {
                assert_eq!(e.modulation_order, 4);
            }
        }
        // the default table passes its own validation
        McsTable::new(t.entries.clone()).unwrap();
    }

    #[test]
    fn numerology_defaults() {
        let n = Numerology::default();
        n.validate().unwrap();
        assert_eq!(n.n_rb * 12, 936);
        assert!((n.guard_s() - 2.34e-6).abs() < 0.01e-6);
    }

    #[test]
    fn use_case_table() {
        let u = UseCase::defaults();
        let rates: Vec<f64> = u.iter().map(|u| u.rate_bps / 1e6).collect();
        assert_eq!(rates, vec![50.0, 30.0, 25.0, 5.0, 2.0]);
        assert!(UseCase::new("x", 0.0).is_err());
    }
}
