//! Vehicle capacity per use case and RF-chain power savings.
//!
//! A vehicle needing rate `R` at spectral efficiency `SE` occupies
//! `ratio = R / (SE · SCS · SC_RB)` resource blocks. Below one RB the
//! scheduling unit dominates and every RB carries `N` vehicles; otherwise
//! each vehicle takes `⌊ratio⌋` RBs:
//!
//! ```text
//! ratio < 1  →  NRB · N
//! ratio ≥ 1  →  ⌊NRB / ⌊ratio⌋⌋ · N
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phy::{Numerology, UseCase};
use crate::search::SearchCell;

/// Stream cap of the multi-user schedulers considered.
pub const MAX_STREAMS: usize = 12;
/// Power drawn by one uplink RF chain, in watts.
pub const DEFAULT_CHAIN_POWER_W: f64 = 15.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityQuery {
    pub use_case: UseCase,
    /// Bits/s/Hz per vehicle.
    pub se: f64,
    pub numerology: Numerology,
    pub n_streams: usize,
}

impl ConnectivityQuery {
    /// RBs one vehicle needs, before flooring.
    pub fn rb_ratio(&self) -> f64 {
        let rb_hz = self.numerology.scs_hz * self.numerology.sc_per_rb as f64;
        self.use_case.rate_bps / (self.se * rb_hz)
    }
}

/// Maximum concurrently served vehicles.
pub fn max_vehicles(q: &ConnectivityQuery) -> Result<u64> {
    if !(q.se > 0.0) || !q.se.is_finite() {
        return Err(Error::Config(format!("spectral efficiency {} must be positive", q.se)));
    }
    if q.n_streams == 0 {
        return Err(Error::Config("n_streams must be at least 1".into()));
    }
    let nrb = q.numerology.n_rb as u64;
    let n = q.n_streams as u64;
    let ratio = q.rb_ratio();
    if ratio < 1.0 {
        return Ok(nrb * n);
    }
    let per_vehicle = ratio.floor() as u64;
    if per_vehicle > nrb {
        return Err(Error::Unsupportable {
            needed: per_vehicle,
            available: nrb,
        });
    }
    Ok(nrb / per_vehicle * n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerQuery {
    pub m_linear: usize,
    pub m_nonlinear: usize,
    pub p_chain_w: f64,
}

impl PowerQuery {
    pub fn new(m_linear: usize, m_nonlinear: usize, p_chain_w: f64) -> Result<Self> {
        if m_nonlinear > m_linear {
            return Err(Error::Config(format!(
                "non-linear antenna count {m_nonlinear} exceeds linear {m_linear}"
            )));
        }
        if !(p_chain_w >= 0.0) {
            return Err(Error::Config(format!("chain power {p_chain_w} W must be non-negative")));
        }
        Ok(Self {
            m_linear,
            m_nonlinear,
            p_chain_w,
        })
    }
}

/// Watts saved by the RF chains the non-linear receiver does not need.
pub fn power_savings(q: &PowerQuery) -> f64 {
    (q.m_linear - q.m_nonlinear) as f64 * q.p_chain_w
}

/// Largest stream count a detector supports within `budget` antennas,
/// from its search cells at one MCS. `None` if the table has no cells.
pub fn max_streams(cells: &[SearchCell], budget: usize) -> Option<usize> {
    if cells.is_empty() {
        return None;
    }
    Some(
        cells
            .iter()
            .filter(|c| c.min_antennas.is_some_and(|m| m <= budget))
            .map(|c| c.n_streams)
            .max()
            .unwrap_or(0)
            .min(MAX_STREAMS),
    )
}

/// Search results of one detector at the report's MCS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntennaTable {
    pub detector: String,
    pub cells: Vec<SearchCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSe {
    pub region: String,
    pub se: f64,
}

/// One report line: a use case in a region at an antenna budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub use_case: String,
    pub region: String,
    pub antennas: usize,
    pub linear_detector: String,
    pub nonlinear_detector: String,
    pub linear_streams: usize,
    pub nonlinear_streams: usize,
    pub linear_vehicles: u64,
    pub nonlinear_vehicles: u64,
    /// Non-linear over linear vehicles; 1 when both are zero.
    pub gain: f64,
    /// False when a table has no cells or the use case cannot be served.
    pub available: bool,
    pub note: String,
}

fn gain(nl: u64, lin: u64) -> f64 {
    match (nl, lin) {
        (0, 0) => 1.0,
        (_, 0) => f64::INFINITY,
        _ => nl as f64 / lin as f64,
    }
}

/// Vehicles per (use case, region, budget) for both detectors.
pub fn connectivity_report(
    use_cases: &[UseCase],
    se_by_region: &[RegionSe],
    numerology: &Numerology,
    linear: &AntennaTable,
    nonlinear: &AntennaTable,
    budgets: &[usize],
) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for uc in use_cases {
        for r in se_by_region {
            for &m in budgets {
                let mut row = ReportRow {
                    use_case: uc.name.clone(),
                    region: r.region.clone(),
                    antennas: m,
                    linear_detector: linear.detector.clone(),
                    nonlinear_detector: nonlinear.detector.clone(),
                    linear_streams: 0,
                    nonlinear_streams: 0,
                    linear_vehicles: 0,
                    nonlinear_vehicles: 0,
                    gain: 1.0,
                    available: true,
                    note: String::new(),
                };
                let (Some(ls), Some(ns)) = (max_streams(&linear.cells, m), max_streams(&nonlinear.cells, m)) else {
                    row.available = false;
                    row.note = "missing table".into();
                    rows.push(row);
                    continue;
                };
                row.linear_streams = ls;
                row.nonlinear_streams = ns;
                let vehicles = |n: usize| -> Result<u64> {
                    if n == 0 {
                        return Ok(0);
                    }
                    max_vehicles(&ConnectivityQuery {
                        use_case: uc.clone(),
                        se: r.se,
                        numerology: *numerology,
                        n_streams: n,
                    })
                };
                match (vehicles(ls), vehicles(ns)) {
                    (Ok(a), Ok(b)) => {
                        row.linear_vehicles = a;
                        row.nonlinear_vehicles = b;
                        row.gain = gain(b, a);
                    }
                    (Err(e), _) | (_, Err(e)) => {
                        row.available = false;
                        row.note = e.to_string();
                    }
                }
                rows.push(row);
            }
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn query(rate_mbps: f64, se: f64, n: usize) -> ConnectivityQuery {
        ConnectivityQuery {
            use_case: UseCase::new("x", rate_mbps * 1e6).unwrap(),
            se,
            numerology: Numerology::default(),
            n_streams: n,
        }
    }

    fn cell(n: usize, m: Option<usize>) -> SearchCell {
        SearchCell {
            n_streams: n,
            mcs_index: 2,
            detector: "d".into(),
            min_antennas: m,
            measured_per: 0.0,
            frames: 0,
            trace: vec![],
        }
    }

    #[test]
    fn small_rate_uses_every_rb() {
        assert_eq!(max_vehicles(&query(0.1, 2.0, 12)).unwrap(), 936);
    }

    #[test]
    fn floor_branch_examples() {
        let q = query(2.0, 2.0, 12);
        assert!((q.rb_ratio() - 2.0e6 / 720e3).abs() < 1e-12);
        assert_eq!(max_vehicles(&q).unwrap(), 39 * 12);
        assert_eq!(max_vehicles(&query(50.0, 2.0, 12)).unwrap(), 12);
    }

    #[test]
    fn unsupportable_and_bad_inputs() {
        assert!(matches!(
            max_vehicles(&query(200.0, 1.0, 12)),
            Err(Error::Unsupportable { needed: 555, available: 78 })
        ));
        assert!(max_vehicles(&query(1.0, 0.0, 12)).is_err());
        assert!(max_vehicles(&query(1.0, 1.0, 0)).is_err());
    }

    #[test]
    fn continuity_around_one_rb() {
        let rb_hz = 30e3 * 12.0;
        for r in [0.999, 1.0, 1.001] {
            let mut q = query(1.0, 1.0, 4);
            q.use_case.rate_bps = r * rb_hz;
            assert_eq!(max_vehicles(&q).unwrap(), 78 * 4, "ratio {r}");
        }
    }

    #[test]
    fn power_examples() {
        assert_eq!(power_savings(&PowerQuery::new(5, 5, 3.0).unwrap()), 0.0);
        assert_eq!(power_savings(&PowerQuery::new(12, 0, 1.0).unwrap()), 12.0);
        assert!(PowerQuery::new(3, 4, 1.0).is_err());
    }

    #[test]
    fn stream_lookup() {
        let cells = vec![cell(2, Some(2)), cell(4, Some(5)), cell(6, None)];
        assert_eq!(max_streams(&cells, 1), Some(0));
        assert_eq!(max_streams(&cells, 4), Some(2));
        assert_eq!(max_streams(&cells, 32), Some(4));
        assert_eq!(max_streams(&[], 4), None);
        assert_eq!(max_streams(&[cell(16, Some(2))], 4), Some(12));
    }

    #[test]
    fn report_edge_cases() {
        let uc = UseCase::defaults();
        let se = [RegionSe { region: "R1".into(), se: 2.0 }];
        let t = AntennaTable { detector: "a".into(), cells: vec![cell(2, Some(3)), cell(4, Some(6))] };
        let rows = connectivity_report(&uc, &se, &Numerology::default(), &t, &t, &[2, 3, 8]);
        assert_eq!(rows.len(), uc.len() * 3);
        for r in &rows {
            assert_eq!(r.gain, 1.0);
            if r.antennas == 2 {
                assert_eq!((r.linear_vehicles, r.nonlinear_vehicles), (0, 0));
            }
        }
        let empty = AntennaTable { detector: "b".into(), cells: vec![] };
        let rows = connectivity_report(&uc[..1], &se, &Numerology::default(), &t, &empty, &[4]);
        assert!(!rows[0].available);
        let better = AntennaTable { detector: "c".into(), cells: vec![cell(2, Some(2)), cell(4, Some(3))] };
        let rows = connectivity_report(&uc[..1], &se, &Numerology::default(), &t, &better, &[2, 3]);
        assert_eq!(rows[0].gain, f64::INFINITY);
        assert!(rows[1].gain > 1.0);
    }

    proptest! {
        #[test]
        fn monotone_and_bounded(rate in 0.01f64..60.0, se in 0.2f64..6.0, n in 1usize..=12, bump in 0.0f64..5.0) {
            let base = query(rate, se, n);
            if let Ok(v) = max_vehicles(&base) {
                prop_assert!(v <= 78 * n as u64);
                if let Ok(w) = max_vehicles(&query(rate + bump, se, n)) {
                    prop_assert!(w <= v);
                }
                prop_assert!(max_vehicles(&query(rate, se + bump, n)).unwrap() >= v);
                prop_assert!(max_vehicles(&query(rate, se, n + 1)).unwrap() >= v);
                let mut more_rb = base.clone();
                more_rb.numerology.n_rb += 1;
                prop_assert!(max_vehicles(&more_rb).unwrap() >= v);
            }
        }
    }
}
