//! Run configuration, one TOML file per run.
//!
//! Every section is optional and every field has a default, so an empty
//! file is a valid configuration. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use nlmimo::channel::{ClusterProfile, MobilityConfig, ProfileSpec, SnrRegion};
use nlmimo::detect::{Detector, DetectorKind, DEFAULT_PATHS};
use nlmimo::linksim::{Budget, ChannelSpec, CsiMode, LinkConfig};
use nlmimo::phy::{McsEntry, McsTable, Numerology, UseCase, LLR_CLIP};
use nlmimo::search::{SearchSettings, DEFAULT_CHANNELS, PER_TARGET};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Replaces the built-in MCS table when present.
    pub mcs_table: Option<Vec<McsEntry>>,
    pub link: LinkSection,
    pub channel: ChannelSection,
    pub per_sweep: PerSweepSection,
    pub search: SearchSection,
    pub connectivity: ConnectivitySection,
    pub bench: BenchSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            mcs_table: None,
            link: LinkSection::default(),
            channel: ChannelSection::default(),
            per_sweep: PerSweepSection::default(),
            search: SearchSection::default(),
            connectivity: ConnectivitySection::default(),
            bench: BenchSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkSection {
    pub n_streams: usize,
    pub m_antennas: usize,
    pub mcs: usize,
    pub n_paths: usize,
    pub rb_per_vehicle: usize,
    pub csi: CsiMode,
    pub llr_clip: f64,
    pub max_iterations: usize,
    pub numerology: Numerology,
}

impl Default for LinkSection {
    fn default() -> Self {
        Self {
            n_streams: 4,
            m_antennas: 4,
            mcs: 7,
            n_paths: DEFAULT_PATHS,
            rb_per_vehicle: 1,
            csi: CsiMode::Genie,
            llr_clip: LLR_CLIP,
            max_iterations: nlmimo::fec::MAX_ITERATIONS,
            numerology: Numerology::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    /// Built-in profile name, ignored when `custom_profile` is set.
    pub profile: String,
    pub custom_profile: Option<ProfileSpec>,
    pub speed_kmh: f64,
    pub carrier_hz: f64,
    /// `R1` or `R2`; `snr_db` overrides it.
    pub region: String,
    pub snr_db: Option<f64>,
    pub jitter_db: Option<f64>,
}

impl Default for ChannelSection {
    fn default() -> Self {
        let mob = MobilityConfig::default();
        Self {
            profile: "tdl_b_like".into(),
            custom_profile: None,
            speed_kmh: mob.speed_kmh,
            carrier_hz: mob.carrier_hz,
            region: "R2".into(),
            snr_db: None,
            jitter_db: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerSweepSection {
    pub snr_db: Vec<f64>,
    pub detectors: Vec<String>,
    pub n_channels: usize,
    pub frames_per_channel: usize,
    pub fixture_seed: u64,
}

impl Default for PerSweepSection {
    fn default() -> Self {
        Self {
            snr_db: vec![5.0, 10.0, 15.0, 20.0],
            detectors: vec!["mmse".into(), "mpnl".into()],
            n_channels: DEFAULT_CHANNELS,
            frames_per_channel: 200,
            fixture_seed: 2024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub streams: Vec<usize>,
    pub mcs: Vec<usize>,
    pub detectors: Vec<String>,
    pub n_channels: usize,
    pub fixture_seed: u64,
    /// Load fixtures written by `gen-fixtures` instead of generating them.
    pub fixtures_dir: Option<PathBuf>,
    pub m_min: usize,
    pub m_max: usize,
    pub batch: usize,
    pub max_frames_per_channel: usize,
    pub target_per: f64,
}

impl Default for SearchSection {
    fn default() -> Self {
        let s = SearchSettings::default();
        Self {
            streams: vec![2, 4, 6, 8, 10, 12],
            mcs: vec![2, 7, 12],
            detectors: vec!["mmse".into(), "mpnl".into()],
            n_channels: DEFAULT_CHANNELS,
            fixture_seed: 2024,
            fixtures_dir: None,
            m_min: s.m_min,
            m_max: s.m_max,
            batch: s.budget.batch,
            max_frames_per_channel: s.budget.max_frames_per_channel,
            target_per: PER_TARGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UseCaseSpec {
    pub name: String,
    pub rate_mbps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionMcs {
    pub name: String,
    /// MCS whose spectral efficiency the region's vehicles achieve.
    pub mcs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConnectivitySection {
    /// Subset of the reference use cases by name; all when absent.
    pub use_cases: Option<Vec<String>>,
    pub custom_use_cases: Vec<UseCaseSpec>,
    /// MCS of the antenna tables.
    pub table_mcs: usize,
    pub regions: Vec<RegionMcs>,
    pub budgets: Vec<usize>,
    pub linear_detector: String,
    pub nonlinear_detector: String,
    /// Search JSON written by the `search` command; searched inline when absent.
    pub tables: Option<PathBuf>,
    pub p_chain_w: f64,
}

impl Default for ConnectivitySection {
    fn default() -> Self {
        Self {
            use_cases: None,
            custom_use_cases: Vec::new(),
            table_mcs: 7,
            regions: vec![
                RegionMcs { name: "R1".into(), mcs: 19 },
                RegionMcs { name: "R2".into(), mcs: 13 },
            ],
            budgets: vec![2, 3, 4, 5, 6],
            linear_detector: "mmse".into(),
            nonlinear_detector: "mpnl".into(),
            tables: None,
            p_chain_w: nlmimo::connectivity::DEFAULT_CHAIN_POWER_W,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub n_streams: usize,
    pub m_antennas: usize,
    pub modulation_order: usize,
    pub n_paths: usize,
    pub snr_db: f64,
    pub instances: usize,
    pub repeats: usize,
    pub workers: Vec<usize>,
    pub detectors: Vec<String>,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            n_streams: 8,
            m_antennas: 8,
            modulation_order: 16,
            n_paths: 32,
            snr_db: 20.0,
            instances: 2000,
            repeats: 5,
            workers: vec![1, 4, 8],
            detectors: vec!["mpnl".into(), "mmse".into()],
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).context("invalid configuration")
    }

    /// Reads a config file and returns it with its raw bytes.
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>)> {
        let raw = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let text = std::str::from_utf8(&raw).context("config is not UTF-8")?;
        Ok((Self::from_toml(text)?, raw))
    }

    pub fn mcs_table(&self) -> Result<McsTable> {
        match &self.mcs_table {
            Some(e) => Ok(McsTable::new(e.clone())?),
            None => Ok(McsTable::default()),
        }
    }

    pub fn mcs(&self, index: usize) -> Result<McsEntry> {
        Ok(self.mcs_table()?.get(index)?)
    }

    pub fn detector(&self, name: &str) -> Result<Detector> {
        let kind: DetectorKind = name.parse()?;
        Ok(Detector {
            kind,
            n_paths: self.link.n_paths,
        })
    }

    pub fn channel_spec(&self) -> Result<ChannelSpec> {
        let c = &self.channel;
        let profile = match &c.custom_profile {
            Some(spec) => ClusterProfile::from_spec(spec)?,
            None => ClusterProfile::builtin(&c.profile)
                .with_context(|| format!("unknown channel profile '{}'", c.profile))?,
        };
        let mut region = match c.snr_db {
            Some(snr) => SnrRegion::fixed(snr),
            None => SnrRegion::by_name(&c.region).with_context(|| format!("unknown region '{}'", c.region))?,
        };
        if let Some(j) = c.jitter_db {
            if !(j >= 0.0) {
                bail!("jitter_db must be non-negative");
            }
            region = region.with_jitter(j);
        }
        Ok(ChannelSpec {
            profile,
            mobility: MobilityConfig::new(c.speed_kmh, c.carrier_hz)?,
            region,
        })
    }

    /// The link template; detector and sizes are overridden per job.
    pub fn link_config(&self, detector: Detector) -> Result<LinkConfig> {
        let l = &self.link;
        let cfg = LinkConfig {
            numerology: l.numerology,
            n_streams: l.n_streams,
            m_antennas: l.m_antennas,
            mcs: self.mcs(l.mcs)?,
            detector,
            channel: self.channel_spec()?,
            rb_per_vehicle: l.rb_per_vehicle,
            csi: l.csi,
            seed: self.seed,
            llr_clip: l.llr_clip,
            max_iterations: l.max_iterations,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn search_settings(&self) -> SearchSettings {
        let s = &self.search;
        SearchSettings {
            m_min: s.m_min,
            m_max: s.m_max,
            budget: Budget {
                batch: s.batch,
                max_frames_per_channel: s.max_frames_per_channel,
            },
            target: s.target_per,
        }
    }

    pub fn use_cases(&self) -> Result<Vec<UseCase>> {
        let defaults = UseCase::defaults();
        let mut out = match &self.connectivity.use_cases {
            None => defaults,
            Some(names) => names
                .iter()
                .map(|n| {
                    defaults
                        .iter()
                        .find(|u| u.name.eq_ignore_ascii_case(n))
                        .cloned()
                        .with_context(|| format!("unknown use case '{n}'"))
                })
                .collect::<Result<_>>()?,
        };
        for u in &self.connectivity.custom_use_cases {
            out.push(UseCase::new(u.name.clone(), u.rate_mbps * 1e6)?);
        }
        if out.is_empty() {
            bail!("no use cases selected");
        }
        Ok(out)
    }
}
