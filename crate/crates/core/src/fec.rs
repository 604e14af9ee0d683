//! Quasi-cyclic LDPC coding for transport blocks.
//!
//! The mother code is a rate-1/2, 12×24 quasi-cyclic base matrix shipped
//! at lifting size 54 (n = 1296). A transport block of `G` coded bits at
//! target rate `R` lifts the same base matrix to the smallest `Z` whose
//! info and parity parts both fit, with shifts scaled as `⌊p·Z/54⌋`, then
//! shortens info bits and punctures parity bits down to exactly `G`.
//!
//! Decoding is flooding normalized min-sum. LLRs follow the crate-wide
//! convention: positive favours bit 0.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Min-sum normalization factor.
pub const MIN_SUM_SCALE: f64 = 0.8125;

/// Iteration budget used throughout the link simulations.
pub const MAX_ITERATIONS: usize = 10;

/// LLR applied to shortened (known zero) bits.
const SHORTENED_LLR: f64 = 1e3;

const MIN_LIFTING: usize = 8;

/// Rate-1/2 base matrix for Z = 54; `-1` marks an all-zero block.
#[rustfmt::skip]
const BASE_HALF_RATE_Z54: [[i16; 24]; 12] = [
    [40, -1, -1, -1, 22, -1, 49, 23, 43, -1, -1, -1,  1,  0, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [50,  1, -1, -1, 48, 35, -1, -1, 13, -1, 30, -1, -1,  0,  0, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [39, 50, -1, -1,  4, -1,  2, -1, -1, -1, -1, 49, -1, -1,  0,  0, -1, -1, -1, -1, -1, -1, -1, -1],
    [33, -1, -1, 38, 37, -1, -1,  4,  1, -1, -1, -1, -1, -1, -1,  0,  0, -1, -1, -1, -1, -1, -1, -1],
    [45, -1, -1, -1,  0, 22, -1, -1, 20, 42, -1, -1, -1, -1, -1, -1,  0,  0, -1, -1, -1, -1, -1, -1],
    [51, -1, -1, 48, 35, -1, -1, -1, 44, -1, 18, -1, -1, -1, -1, -1, -1,  0,  0, -1, -1, -1, -1, -1],
    [47, 11, -1, -1, -1, 17, -1, -1, 51, -1, -1, -1,  0, -1, -1, -1, -1, -1,  0,  0, -1, -1, -1, -1],
    [ 5, -1, 25, -1,  6, -1, 45, -1, 13, 40, -1, -1, -1, -1, -1, -1, -1, -1, -1,  0,  0, -1, -1, -1],
    [33, -1, -1, 34, 24, -1, -1, -1, 23, -1, -1, 46, -1, -1, -1, -1, -1, -1, -1, -1,  0,  0, -1, -1],
    [ 1, -1, 27, -1,  1, -1, -1, -1, 38, -1, 44, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1,  0,  0, -1],
    [-1, 18, -1, -1, 23, -1, -1,  8,  0, 35, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1,  0,  0],
    [49, -1, 17, -1, 30, -1, -1, -1, 34, -1, -1, 19,  1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1,  0],
];

/// Quasi-cyclic base matrix with its reference lifting size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub z0: usize,
    /// Row-major circulant shifts, `None` for zero blocks.
    pub shifts: Vec<Option<u16>>,
}

impl BaseMatrix {
    /// The shipped rate-1/2 mother code.
    pub fn half_rate() -> Self {
        Self {
            rows: 12,
            cols: 24,
            z0: 54,
            shifts: BASE_HALF_RATE_Z54
                .iter()
                .flatten()
                .map(|&s| (s >= 0).then_some(s as u16))
                .collect(),
        }
    }

    /// Expands to a binary parity-check matrix at lifting size `z`.
    pub fn lift(&self, z: usize) -> ParityCheck {
        let mut rows = vec![Vec::new(); self.rows * z];
        for br in 0..self.rows {
            for bc in 0..self.cols {
                if let Some(p) = self.shifts[br * self.cols + bc] {
                    let shift = (p as usize * z / self.z0) % z;
                    for i in 0..z {
                        rows[br * z + i].push((bc * z + (i + shift) % z) as u32);
                    }
                }
            }
        }
        for r in rows.iter_mut() {
            r.sort_unstable();
        }
        ParityCheck {
            n: self.cols * z,
            rows,
        }
    }
}

/// Sparse binary parity-check matrix stored by rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParityCheck {
    pub n: usize,
    /// Column indices of the ones in each row, sorted.
    pub rows: Vec<Vec<u32>>,
}

impl ParityCheck {
    pub fn m(&self) -> usize {
        self.rows.len()
    }

    pub fn syndrome_is_zero(&self, bits: &[u8]) -> bool {
        self.rows
            .iter()
            .all(|r| r.iter().fold(0u8, |acc, &c| acc ^ bits[c as usize]) == 0)
    }

    /// Parses MacKay's alist format (1-based indices, zero padding allowed).
    pub fn from_alist(text: &str) -> Result<Self> {
        let mut it = text.split_whitespace().map(|t| {
            t.parse::<usize>()
                .map_err(|_| Error::Ldpc(format!("bad alist token '{t}'")))
        });
        let mut next = || it.next().unwrap_or_else(|| Err(Error::Ldpc("truncated alist".into())));
        let n = next()?;
        let m = next()?;
        let max_col = next()?;
        let max_row = next()?;
        let col_w: Vec<usize> = (0..n).map(|_| next()).collect::<Result<_>>()?;
        let row_w: Vec<usize> = (0..m).map(|_| next()).collect::<Result<_>>()?;
        // column lists are redundant with the row lists; read and check them
        let mut from_cols = vec![Vec::new(); m];
        for (c, &w) in col_w.iter().enumerate() {
            for k in 0..max_col {
                let r = next()?;
                if k < w {
                    if r == 0 || r > m {
                        return Err(Error::Ldpc(format!("row index {r} out of range")));
                    }
                    from_cols[r - 1].push(c as u32);
                }
            }
        }
        let mut rows = Vec::with_capacity(m);
        for &w in &row_w {
            let mut row = Vec::with_capacity(w);
            for k in 0..max_row {
                let c = next()?;
                if k < w {
                    if c == 0 || c > n {
                        return Err(Error::Ldpc(format!("column index {c} out of range")));
                    }
                    row.push((c - 1) as u32);
                }
            }
            row.sort_unstable();
            rows.push(row);
        }
        for (a, b) in rows.iter().zip(from_cols.iter_mut()) {
            b.sort_unstable();
            if a != b {
                return Err(Error::Ldpc("alist row and column lists disagree".into()));
            }
        }
        Ok(Self { n, rows })
    }

    pub fn to_alist(&self) -> String {
        let m = self.m();
        let mut cols = vec![Vec::new(); self.n];
        for (r, row) in self.rows.iter().enumerate() {
            for &c in row {
                cols[c as usize].push(r + 1);
            }
        }
        let max_col = cols.iter().map(Vec::len).max().unwrap_or(0);
        let max_row = self.rows.iter().map(Vec::len).max().unwrap_or(0);
        let mut s = String::new();
        let join = |v: &mut dyn Iterator<Item = usize>| v.map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let _ = writeln!(s, "{} {}", self.n, m);
        let _ = writeln!(s, "{max_col} {max_row}");
        let _ = writeln!(s, "{}", join(&mut cols.iter().map(Vec::len)));
        let _ = writeln!(s, "{}", join(&mut self.rows.iter().map(Vec::len)));
        for c in &cols {
            let _ = writeln!(s, "{}", join(&mut c.iter().copied().chain(std::iter::repeat(0)).take(max_col)));
        }
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{}",
                join(&mut r.iter().map(|&c| c as usize + 1).chain(std::iter::repeat(0)).take(max_row))
            );
        }
        s
    }
}

/// An LDPC code with a systematic encoder derived by Gaussian elimination.
#[derive(Debug, Clone)]
pub struct LdpcCode {
    h: ParityCheck,
    info_positions: Vec<usize>,
    parity_positions: Vec<usize>,
    /// For each parity bit, a bitset over info indices.
    parity_eqs: Vec<Vec<u64>>,
    // CSR edge layout for decoding
    check_ptr: Vec<usize>,
    edge_var: Vec<u32>,
}

impl LdpcCode {
    pub fn new(h: ParityCheck) -> Result<Self> {
        let (m, n) = (h.m(), h.n);
        if m == 0 || n <= m || h.rows.iter().flatten().any(|&c| c as usize >= n) {
            return Err(Error::Ldpc("parity-check matrix has invalid shape".into()));
        }
        let words = n.div_ceil(64);
        let mut dense: Vec<Vec<u64>> = h
            .rows
            .iter()
            .map(|r| {
                let mut row = vec![0u64; words];
                for &c in r {
                    row[c as usize / 64] ^= 1 << (c % 64);
                }
                row
            })
            .collect();
        let get = |row: &[u64], c: usize| (row[c / 64] >> (c % 64)) & 1 == 1;
        // RREF, preferring pivots at the right so parity lands at the end
        let mut pivots: Vec<usize> = Vec::new();
        let mut rank = 0;
        for col in (0..n).rev() {
            if rank == m {
                break;
            }
            let Some(found) = (rank..m).find(|&r| get(&dense[r], col)) else {
                continue;
            };
            dense.swap(rank, found);
            let pivot_row = dense[rank].clone();
            for (r, row) in dense.iter_mut().enumerate() {
                if r != rank && get(row, col) {
                    for (a, b) in row.iter_mut().zip(&pivot_row) {
                        *a ^= b;
                    }
                }
            }
            pivots.push(col);
            rank += 1;
        }
        let mut is_parity = vec![false; n];
        for &p in &pivots {
            is_parity[p] = true;
        }
        let info_positions: Vec<usize> = (0..n).filter(|&c| !is_parity[c]).collect();
        let k = info_positions.len();
        let kwords = k.div_ceil(64);
        let parity_eqs = dense[..rank]
            .iter()
            .map(|row| {
                let mut eq = vec![0u64; kwords];
                for (i, &c) in info_positions.iter().enumerate() {
                    if get(row, c) {
                        eq[i / 64] |= 1 << (i % 64);
                    }
                }
                eq
            })
            .collect();
        let mut check_ptr = Vec::with_capacity(m + 1);
        let mut edge_var = Vec::new();
        check_ptr.push(0);
        for r in &h.rows {
            edge_var.extend_from_slice(r);
            check_ptr.push(edge_var.len());
        }
        Ok(Self {
            h,
            info_positions,
            parity_positions: pivots,
            parity_eqs,
            check_ptr,
            edge_var,
        })
    }

    pub fn from_base(base: &BaseMatrix, z: usize) -> Result<Self> {
        Self::new(base.lift(z))
    }

    pub fn n(&self) -> usize {
        self.h.n
    }

    pub fn k(&self) -> usize {
        self.info_positions.len()
    }

    pub fn rate(&self) -> f64 {
        self.k() as f64 / self.n() as f64
    }

    pub fn parity_check(&self) -> &ParityCheck {
        &self.h
    }

    /// Codeword positions carrying info bits, ascending.
    pub fn info_positions(&self) -> &[usize] {
        &self.info_positions
    }

    pub fn parity_positions(&self) -> &[usize] {
        &self.parity_positions
    }
}

/// Systematic encoding: info bits appear verbatim at the info positions.
pub fn ldpc_encode(code: &LdpcCode, info: &[u8]) -> Result<Vec<u8>> {
    if info.len() != code.k() {
        return Err(Error::Ldpc(format!("expected {} info bits, got {}", code.k(), info.len())));
    }
    let mut packed = vec![0u64; info.len().div_ceil(64)];
    for (i, &b) in info.iter().enumerate() {
        if b & 1 == 1 {
            packed[i / 64] |= 1 << (i % 64);
        }
    }
    let mut cw = vec![0u8; code.n()];
    for (&pos, &b) in code.info_positions.iter().zip(info) {
        cw[pos] = b & 1;
    }
    for (&pos, eq) in code.parity_positions.iter().zip(&code.parity_eqs) {
        let ones: u32 = eq.iter().zip(&packed).map(|(a, b)| (a & b).count_ones()).sum();
        cw[pos] = (ones & 1) as u8;
    }
    Ok(cw)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub info: Vec<u8>,
    pub codeword: Vec<u8>,
    /// Zero syndrome reached within the iteration budget.
    pub converged: bool,
    /// 0 when the channel hard decision was already a codeword.
    pub iterations: usize,
}

/// Flooding normalized min-sum with early exit on a zero syndrome.
pub fn ldpc_decode(code: &LdpcCode, llrs: &[f64], max_iter: usize) -> Result<DecodeResult> {
    if llrs.len() != code.n() {
        return Err(Error::Ldpc(format!("expected {} LLRs, got {}", code.n(), llrs.len())));
    }
    if llrs.iter().any(|l| !l.is_finite()) {
        return Err(Error::Ldpc("non-finite LLR".into()));
    }
    let hard = |v: &[f64]| v.iter().map(|&l| (l < 0.0) as u8).collect::<Vec<u8>>();
    let finish = |cw: Vec<u8>, converged, iterations| DecodeResult {
        info: code.info_positions.iter().map(|&p| cw[p]).collect(),
        codeword: cw,
        converged,
        iterations,
    };
    let mut cw = hard(llrs);
    if code.h.syndrome_is_zero(&cw) {
        return Ok(finish(cw, true, 0));
    }
    let mut c2v = vec![0.0f64; code.edge_var.len()];
    let mut total = llrs.to_vec();
    let mut v2c = Vec::new();
    for it in 1..=max_iter {
        for c in 0..code.h.m() {
            let edges = code.check_ptr[c]..code.check_ptr[c + 1];
            v2c.clear();
            let mut sign = false;
            let (mut min1, mut min2, mut argmin) = (f64::INFINITY, f64::INFINITY, usize::MAX);
            for e in edges.clone() {
                let m = total[code.edge_var[e] as usize] - c2v[e];
                v2c.push(m);
                sign ^= m < 0.0;
                let a = m.abs();
                if a < min1 {
                    min2 = min1;
                    min1 = a;
                    argmin = e;
                } else if a < min2 {
                    min2 = a;
                }
            }
            for (e, &m) in edges.zip(&v2c) {
                let mag = if e == argmin { min2 } else { min1 };
                let s = sign ^ (m < 0.0);
                c2v[e] = if s { -MIN_SUM_SCALE * mag } else { MIN_SUM_SCALE * mag };
            }
        }
        total.copy_from_slice(llrs);
        for (e, &v) in code.edge_var.iter().enumerate() {
            total[v as usize] += c2v[e];
        }
        cw = hard(&total);
        if code.h.syndrome_is_zero(&cw) {
            return Ok(finish(cw, true, it));
        }
    }
    Ok(finish(cw, false, max_iter))
}

/// How a transport block is cut from a lifted mother codeword.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateMatch {
    pub target_rate: f64,
    pub lifting: usize,
    /// Transport-block info bits `K`.
    pub k: usize,
    /// Transmitted coded bits `G`.
    pub g: usize,
    /// Codeword positions of the `K` info bits.
    pub info_pattern: Vec<usize>,
    /// Info positions fixed to zero and not sent.
    pub shortened: Vec<usize>,
    /// Codeword positions sent, in transmission order.
    pub transmitted: Vec<usize>,
    pub punctured: usize,
}

impl RateMatch {
    pub fn effective_rate(&self) -> f64 {
        self.k as f64 / self.g as f64
    }

    pub fn method(&self) -> &'static str {
        match (self.shortened.is_empty(), self.punctured == 0) {
            (true, true) => "none",
            (false, true) => "shorten",
            (true, false) => "puncture",
            (false, false) => "shorten+puncture",
        }
    }
}

/// `count` indices out of `0..len`, evenly spread.
fn spread(count: usize, len: usize) -> Vec<usize> {
    (0..count).map(|i| (2 * i + 1) * len / (2 * count)).collect()
}

/// Deepest recovery level used when choosing punctured bits.
const MAX_RECOVERY_LEVEL: usize = 8;

/// Picks `count` parity positions so that erasure peeling can restore them.
///
/// A bit punctured at level `L` owns a check whose other members are all
/// transmitted or punctured at lower levels; members of owned checks are
/// never punctured afterwards. Each step takes the move that protects the
/// fewest fresh parity bits, then the lowest level, which lets recovery
/// follow the parity staircase. If no move is left, the remainder is taken
/// evenly from the unpunctured parity bits.
fn puncture_order(code: &LdpcCode, count: usize) -> Vec<usize> {
    if count == 0 {
        return Vec::new();
    }
    let h = code.parity_check();
    let mut var_checks = vec![Vec::new(); h.n];
    for (c, row) in h.rows.iter().enumerate() {
        for &v in row {
            var_checks[v as usize].push(c);
        }
    }
    let mut is_parity = vec![false; h.n];
    for &p in code.parity_positions() {
        is_parity[p] = true;
    }
    let mut candidates = code.parity_positions.clone();
    candidates.sort_unstable();
    let mut level = vec![0usize; h.n];
    let mut protected = vec![false; h.n];
    let mut chosen = Vec::with_capacity(count);
    while chosen.len() < count {
        let mut best: Option<((usize, usize, usize), usize)> = None;
        for &v in &candidates {
            if level[v] > 0 || protected[v] {
                continue;
            }
            for &c in &var_checks[v] {
                let others = h.rows[c].iter().map(|&u| u as usize).filter(|&u| u != v);
                let lvl = 1 + others.clone().map(|u| level[u]).max().unwrap_or(0);
                if lvl > MAX_RECOVERY_LEVEL {
                    continue;
                }
                let cost = others.filter(|&u| is_parity[u] && level[u] == 0 && !protected[u]).count();
                let key = (cost, lvl, v);
                if best.is_none_or(|(k, _)| key < k) {
                    best = Some((key, c));
                }
            }
        }
        let Some(((_, lvl, v), c)) = best else { break };
        level[v] = lvl;
        for &u in &h.rows[c] {
            protected[u as usize] = true;
        }
        chosen.push(v);
    }
    if chosen.len() < count {
        let rest: Vec<usize> = candidates.iter().copied().filter(|&p| level[p] == 0).collect();
        let need = count - chosen.len();
        chosen.extend(spread(need, rest.len()).into_iter().map(|i| rest[i]));
    }
    chosen
}

/// Encoder/decoder for one transport-block size and rate.
#[derive(Debug, Clone)]
pub struct TransportCodec {
    code: LdpcCode,
    rm: RateMatch,
}

impl TransportCodec {
    pub fn new(base: &BaseMatrix, target_rate: f64, g: usize) -> Result<Self> {
        if !(target_rate > 0.0 && target_rate < 1.0) || g < 2 {
            return Err(Error::RateMatch(format!("rate {target_rate} over {g} bits")));
        }
        let k = ((target_rate * g as f64).round() as usize).clamp(1, g - 1);
        let half = base.cols - base.rows;
        let need = k.max(g - k);
        let z = need.div_ceil(half).max(MIN_LIFTING);
        let code = LdpcCode::from_base(base, z)?;
        Self::with_code(code, target_rate, k, g, z)
    }

    /// Rate-matches onto an already built code.
    pub fn with_code(code: LdpcCode, target_rate: f64, k: usize, g: usize, lifting: usize) -> Result<Self> {
        let kc = code.k();
        let nparity = code.parity_positions.len();
        if k == 0 || k > kc || g < k || g - k > nparity {
            return Err(Error::RateMatch(format!(
                "K={k}, G={g} do not fit a ({}, {kc}) code",
                code.n()
            )));
        }
        let mut short_mask = vec![false; kc];
        for i in spread(kc - k, kc) {
            short_mask[i] = true;
        }
        let info = code.info_positions();
        let shortened: Vec<usize> = (0..kc).filter(|&i| short_mask[i]).map(|i| info[i]).collect();
        let info_pattern: Vec<usize> = (0..kc).filter(|&i| !short_mask[i]).map(|i| info[i]).collect();
        let kept = g - k;
        let mut dropped = vec![false; code.n()];
        for p in puncture_order(&code, nparity - kept) {
            dropped[p] = true;
        }
        let mut parity: Vec<usize> = code.parity_positions.iter().copied().filter(|&p| !dropped[p]).collect();
        parity.sort_unstable();
        let mut transmitted = info_pattern.clone();
        transmitted.extend(parity);
        let rm = RateMatch {
            target_rate,
            lifting,
            k,
            g,
            info_pattern,
            shortened,
            transmitted,
            punctured: nparity - kept,
        };
        Ok(Self { code, rm })
    }

    pub fn rate_match(&self) -> &RateMatch {
        &self.rm
    }

    pub fn code(&self) -> &LdpcCode {
        &self.code
    }

    pub fn k(&self) -> usize {
        self.rm.k
    }

    pub fn g(&self) -> usize {
        self.rm.g
    }

    /// `K` info bits to `G` coded bits.
    pub fn encode(&self, info: &[u8]) -> Result<Vec<u8>> {
        if info.len() != self.rm.k {
            return Err(Error::RateMatch(format!("expected {} info bits, got {}", self.rm.k, info.len())));
        }
        let mut full = vec![0u8; self.code.k()];
        let index: std::collections::HashMap<usize, usize> = self
            .code
            .info_positions()
            .iter()
            .enumerate()
            .map(|(i, &p)| (p, i))
            .collect();
        for (&pos, &b) in self.rm.info_pattern.iter().zip(info) {
            full[index[&pos]] = b;
        }
        let cw = ldpc_encode(&self.code, &full)?;
        Ok(self.rm.transmitted.iter().map(|&p| cw[p]).collect())
    }

    /// `G` LLRs back to `K` info bits.
    pub fn decode(&self, llrs: &[f64], max_iter: usize) -> Result<(Vec<u8>, bool)> {
        if llrs.len() != self.rm.g {
            return Err(Error::RateMatch(format!("expected {} LLRs, got {}", self.rm.g, llrs.len())));
        }
        let mut full = vec![0.0; self.code.n()];
        for (&p, &l) in self.rm.transmitted.iter().zip(llrs) {
            full[p] += l;
        }
        for &p in &self.rm.shortened {
            full[p] = SHORTENED_LLR;
        }
        let res = ldpc_decode(&self.code, &full, max_iter)?;
        let info = self.rm.info_pattern.iter().map(|&p| res.codeword[p]).collect();
        Ok((info, res.converged))
    }
}
