//! Experiment commands. Each returns plain rows; `main` writes them.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use nlmimo::channel::SnrRegion;
use nlmimo::connectivity::{connectivity_report, power_savings, AntennaTable, PowerQuery, RegionSe, ReportRow};
use nlmimo::detect::Detector;
use nlmimo::linksim::{measure_per, LinkConfig};
use nlmimo::search::{heatmap, FixtureSet, FixtureSpec, SearchCell};

use crate::config::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerRow {
    pub detector: String,
    pub n_streams: usize,
    pub m_antennas: usize,
    pub mcs: usize,
    pub snr_db: f64,
    pub frames: u64,
    pub errors: u64,
    pub per: f64,
    pub ci95_halfwidth: f64,
    pub slots: u64,
}

/// PER against SNR for every configured detector on one fixture set.
pub fn per_sweep(cfg: &RunConfig) -> Result<Vec<PerRow>> {
    let s = &cfg.per_sweep;
    if s.snr_db.is_empty() {
        bail!("empty sweep");
    }
    if s.detectors.is_empty() {
        bail!("no detectors configured");
    }
    let detectors: Vec<Detector> = s.detectors.iter().map(|d| cfg.detector(d)).collect::<Result<_>>()?;
    let template = cfg.link_config(detectors[0])?;
    let spec = FixtureSpec {
        max_antennas: template.m_antennas,
        ..FixtureSpec::for_link(&template, s.n_channels, s.fixture_seed)
    };
    let grids = FixtureSet::generate(&spec, template.n_streams)?.grids;
    let jitter = cfg.channel.jitter_db.unwrap_or(0.0);
    let mut rows = Vec::new();
    for det in detectors {
        for &snr in &s.snr_db {
            let mut link = template.clone();
            link.detector = det;
            link.channel.region = SnrRegion::fixed(snr).with_jitter(jitter);
            let r = measure_per(&link, &grids, s.frames_per_channel)?;
            log::info!("{det} {snr} dB: per {:.4}", r.per);
            rows.push(PerRow {
                detector: det.to_string(),
                n_streams: link.n_streams,
                m_antennas: link.m_antennas,
                mcs: link.mcs.index,
                snr_db: snr,
                frames: r.frames,
                errors: r.errors,
                per: r.per,
                ci95_halfwidth: r.ci95_halfwidth,
                slots: r.slots,
            });
        }
    }
    Ok(rows)
}

/// CSV view of a search cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRow {
    pub streams: usize,
    pub mcs: usize,
    pub detector: String,
    pub min_antennas: String,
    pub per: f64,
    pub frames: u64,
}

impl From<&SearchCell> for SearchRow {
    fn from(c: &SearchCell) -> Self {
        Self {
            streams: c.n_streams,
            mcs: c.mcs_index,
            detector: c.detector.clone(),
            min_antennas: c.min_antennas_label(),
            per: c.measured_per,
            frames: c.frames,
        }
    }
}

fn fixture_spec(cfg: &RunConfig, template: &LinkConfig) -> FixtureSpec {
    FixtureSpec {
        max_antennas: cfg.search.m_max,
        ..FixtureSpec::for_link(template, cfg.search.n_channels, cfg.search.fixture_seed)
    }
}

fn search_fixtures(cfg: &RunConfig, template: &LinkConfig) -> Result<Vec<FixtureSet>> {
    let s = &cfg.search;
    s.streams
        .iter()
        .map(|&n| match &s.fixtures_dir {
            Some(dir) => FixtureSet::load(dir, n, s.n_channels)
                .with_context(|| format!("loading fixtures for N={n} from {}", dir.display())),
            None => Ok(FixtureSet::generate(&fixture_spec(cfg, template), n)?),
        })
        .collect()
}

/// Minimum-antenna heatmap for the given detectors and MCS indices.
pub fn search_cells(cfg: &RunConfig, detectors: &[String], mcs: &[usize]) -> Result<Vec<SearchCell>> {
    let s = &cfg.search;
    if s.streams.is_empty() || mcs.is_empty() || detectors.is_empty() {
        bail!("empty search grid");
    }
    let dets: Vec<Detector> = detectors.iter().map(|d| cfg.detector(d)).collect::<Result<_>>()?;
    let mcs_list = mcs.iter().map(|&i| cfg.mcs(i)).collect::<Result<Vec<_>>>()?;
    let template = cfg.link_config(dets[0])?;
    let fixtures = search_fixtures(cfg, &template)?;
    let settings = cfg.search_settings();
    let mut cells = Vec::new();
    for det in dets {
        cells.extend(heatmap(&template, &s.streams, &mcs_list, det, &fixtures, &settings)?);
    }
    Ok(cells)
}

pub fn search(cfg: &RunConfig) -> Result<Vec<SearchCell>> {
    search_cells(cfg, &cfg.search.detectors, &cfg.search.mcs)
}

/// Antenna savings for each stream count both detectors support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub n_streams: usize,
    pub linear_antennas: usize,
    pub nonlinear_antennas: usize,
    pub savings_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityOutput {
    pub rows: Vec<ReportRow>,
    pub power: Vec<PowerRow>,
}

fn table(cells: &[SearchCell], detector: &Detector, mcs: usize) -> AntennaTable {
    let name = detector.to_string();
    AntennaTable {
        cells: cells
            .iter()
            .filter(|c| c.detector == name && c.mcs_index == mcs)
            .cloned()
            .collect(),
        detector: name,
    }
}

/// Reads the cells of a search JSON document.
pub fn load_search_json(path: &Path) -> Result<Vec<SearchCell>> {
    #[derive(Deserialize)]
    struct Doc {
        rows: Vec<SearchCell>,
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let doc: Doc = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(doc.rows)
}

/// Report rows from ready-made search cells.
pub fn connectivity_from_cells(cfg: &RunConfig, cells: &[SearchCell]) -> Result<ConnectivityOutput> {
    let c = &cfg.connectivity;
    if c.budgets.is_empty() || c.regions.is_empty() {
        bail!("connectivity needs at least one budget and one region");
    }
    let use_cases = cfg.use_cases()?;
    let lin = table(cells, &cfg.detector(&c.linear_detector)?, c.table_mcs);
    let nl = table(cells, &cfg.detector(&c.nonlinear_detector)?, c.table_mcs);
    let regions = c
        .regions
        .iter()
        .map(|r| {
            Ok(RegionSe {
                region: r.name.clone(),
                se: cfg.mcs(r.mcs)?.spectral_efficiency(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = connectivity_report(&use_cases, &regions, &cfg.link.numerology, &lin, &nl, &c.budgets);
    let mut power = Vec::new();
    for l in &lin.cells {
        let Some(n_cell) = nl.cells.iter().find(|x| x.n_streams == l.n_streams) else {
            continue;
        };
        if let (Some(ml), Some(mn)) = (l.min_antennas, n_cell.min_antennas) {
            if mn <= ml {
                power.push(PowerRow {
                    n_streams: l.n_streams,
                    linear_antennas: ml,
                    nonlinear_antennas: mn,
                    savings_w: power_savings(&PowerQuery::new(ml, mn, c.p_chain_w)?),
                });
            }
        }
    }
    Ok(ConnectivityOutput { rows, power })
}

pub fn connectivity(cfg: &RunConfig) -> Result<ConnectivityOutput> {
    let c = &cfg.connectivity;
    let cells = match &c.tables {
        Some(path) => load_search_json(path)?,
        None => search_cells(cfg, &[c.linear_detector.clone(), c.nonlinear_detector.clone()], &[c.table_mcs])?,
    };
    connectivity_from_cells(cfg, &cells)
}

/// Writes the search fixture sets and returns the recipe used.
pub fn gen_fixtures(cfg: &RunConfig, dir: &Path) -> Result<FixtureSpec> {
    let template = cfg.link_config(cfg.detector("mmse")?)?;
    let spec = fixture_spec(cfg, &template);
    for &n in &cfg.search.streams {
        FixtureSet::generate(&spec, n)?.save(dir)?;
    }
    Ok(spec)
}
