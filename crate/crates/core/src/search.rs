//! Minimum-antenna search and the streams × MCS heatmap.
//!
//! Channel fixtures are generated once per stream count at the largest
//! array size; the set for `M` antennas is the first `M` rows of each
//! realization. The same fixtures and frame seeds serve every detector, so
//! detector comparisons are paired.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{tdl_generate, ChannelGrid, ClusterProfile, MobilityConfig};
use crate::detect::Detector;
use crate::error::{Error, Result};
use crate::linksim::{measure_per_adaptive, Budget, LinkConfig, LinkSimulator, PerResult, MAX_ANTENNAS};
use crate::phy::{McsEntry, Numerology};
use crate::seed;

/// PER a configuration must reach to count as supported.
pub const PER_TARGET: f64 = 0.10;
/// Channel realizations per fixture set.
pub const DEFAULT_CHANNELS: usize = 50;

/// Recipe for a seeded fixture set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub profile: ClusterProfile,
    pub mobility: MobilityConfig,
    pub numerology: Numerology,
    pub n_subcarriers: usize,
    pub n_channels: usize,
    pub max_antennas: usize,
    pub seed: u64,
}

impl FixtureSpec {
    /// Fixtures matching a link template.
    pub fn for_link(cfg: &LinkConfig, n_channels: usize, seed: u64) -> Self {
        Self {
            profile: cfg.channel.profile.clone(),
            mobility: cfg.channel.mobility,
            numerology: cfg.numerology,
            n_subcarriers: cfg.n_subcarriers(),
            n_channels,
            max_antennas: MAX_ANTENNAS,
            seed,
        }
    }
}

/// Channel realizations for one stream count at the full array size.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSet {
    pub n_streams: usize,
    pub grids: Vec<ChannelGrid>,
}

impl FixtureSet {
    pub fn generate(spec: &FixtureSpec, n_streams: usize) -> Result<Self> {
        if spec.n_channels == 0 {
            return Err(Error::Config("fixture set needs at least one channel".into()));
        }
        let grids = (0..spec.n_channels)
            .into_par_iter()
            .map(|c| {
                tdl_generate(
                    &spec.profile,
                    &spec.mobility,
                    &spec.numerology,
                    spec.max_antennas,
                    n_streams,
                    spec.n_subcarriers,
                    seed::derive(spec.seed, &[n_streams as u64, c as u64]),
                )
            })
            .collect::<Result<_>>()?;
        Ok(Self { n_streams, grids })
    }

    pub fn from_grids(grids: Vec<ChannelGrid>) -> Result<Self> {
        let first = grids.first().ok_or_else(|| Error::Config("empty fixture set".into()))?;
        let (m, n) = (first.m_antennas(), first.n_streams());
        if grids.iter().any(|g| g.m_antennas() != m || g.n_streams() != n) {
            return Err(Error::Dimension("fixture grids differ in size".into()));
        }
        Ok(Self { n_streams: n, grids })
    }

    pub fn max_antennas(&self) -> usize {
        self.grids.first().map_or(0, ChannelGrid::m_antennas)
    }

    pub fn for_antennas(&self, m: usize) -> Result<Vec<ChannelGrid>> {
        if m == 0 || m > self.max_antennas() {
            return Err(Error::MissingFixtures {
                streams: self.n_streams,
                antennas: m,
            });
        }
        self.grids.iter().map(|g| g.first_antennas(m)).collect()
    }

    fn file_name(n_streams: usize, index: usize) -> String {
        format!("n{n_streams:02}_c{index:03}.nlcg")
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (i, g) in self.grids.iter().enumerate() {
            let f = fs::File::create(dir.join(Self::file_name(self.n_streams, i)))?;
            g.write_fixture(std::io::BufWriter::new(f))?;
        }
        Ok(())
    }

    /// Loads `n_channels` grids written by [`FixtureSet::save`].
    pub fn load(dir: &Path, n_streams: usize, n_channels: usize) -> Result<Self> {
        let grids = (0..n_channels)
            .map(|i| {
                let path = dir.join(Self::file_name(n_streams, i));
                let f = fs::File::open(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
                ChannelGrid::read_fixture(std::io::BufReader::new(f))
            })
            .collect::<Result<Vec<_>>>()?;
        let set = Self::from_grids(grids)?;
        if set.n_streams != n_streams {
            return Err(Error::MissingFixtures {
                streams: n_streams,
                antennas: set.max_antennas(),
            });
        }
        Ok(set)
    }
}

/// Sweep range and measurement budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSettings {
    pub m_min: usize,
    pub m_max: usize,
    pub budget: Budget,
    pub target: f64,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self {
            m_min: 2,
            m_max: MAX_ANTENNAS,
            budget: Budget::default(),
            target: PER_TARGET,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub m_antennas: usize,
    pub result: PerResult,
}

/// Outcome of one minimum-antenna search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchCell {
    pub n_streams: usize,
    pub mcs_index: usize,
    pub detector: String,
    /// `None` when no array size in the sweep reached the target.
    pub min_antennas: Option<usize>,
    /// PER at `min_antennas`, or at the largest size tried.
    pub measured_per: f64,
    pub frames: u64,
    pub trace: Vec<SweepPoint>,
}

impl SearchCell {
    pub fn is_supported(&self) -> bool {
        self.min_antennas.is_some()
    }

    pub fn min_antennas_label(&self) -> String {
        self.min_antennas.map_or_else(|| "unsupported".to_string(), |m| m.to_string())
    }
}

/// Sweeps `M` upward from `m_min` and stops at the first size whose PER
/// is at most the target.
pub fn min_antennas(template: &LinkConfig, fixtures: &FixtureSet, settings: &SearchSettings) -> Result<SearchCell> {
    if settings.m_min == 0 || settings.m_min > settings.m_max {
        return Err(Error::Config(format!("empty antenna sweep {}..={}", settings.m_min, settings.m_max)));
    }
    if fixtures.n_streams != template.n_streams || fixtures.max_antennas() < settings.m_max {
        return Err(Error::MissingFixtures {
            streams: template.n_streams,
            antennas: settings.m_max,
        });
    }
    let mut trace = Vec::new();
    for m in settings.m_min..=settings.m_max {
        let mut cfg = template.clone();
        cfg.m_antennas = m;
        let sim = LinkSimulator::new(cfg)?;
        let result = measure_per_adaptive(&sim, &fixtures.for_antennas(m)?, settings.budget, settings.target)?;
        log::debug!("N={} mcs={} {} M={m}: per {:.4} over {}", template.n_streams, template.mcs.index, template.detector, result.per, result.frames);
        trace.push(SweepPoint { m_antennas: m, result });
        if result.per <= settings.target {
            break;
        }
    }
    let last = trace.last().expect("sweep is non-empty").result;
    let hit = last.per <= settings.target;
    Ok(SearchCell {
        n_streams: template.n_streams,
        mcs_index: template.mcs.index,
        detector: template.detector.to_string(),
        min_antennas: hit.then(|| trace.last().unwrap().m_antennas),
        measured_per: last.per,
        frames: last.frames,
        trace,
    })
}

/// One search per (streams, MCS) pair, in row-major order.
///
/// `fixtures` must hold a set for every stream count.
pub fn heatmap(
    template: &LinkConfig,
    streams: &[usize],
    mcs_list: &[McsEntry],
    detector: Detector,
    fixtures: &[FixtureSet],
    settings: &SearchSettings,
) -> Result<Vec<SearchCell>> {
    let jobs: Vec<(usize, McsEntry)> = streams
        .iter()
        .flat_map(|&n| mcs_list.iter().map(move |&mcs| (n, mcs)))
        .collect();
    jobs.par_iter()
        .map(|&(n, mcs)| {
            let set = fixtures
                .iter()
                .find(|f| f.n_streams == n)
                .ok_or(Error::MissingFixtures {
                    streams: n,
                    antennas: settings.m_max,
                })?;
            let mut cfg = template.clone();
            cfg.n_streams = n;
            cfg.mcs = mcs;
            cfg.detector = detector;
            min_antennas(&cfg, set, settings)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::SnrRegion;
    use crate::detect::DetectorKind;
    use crate::phy::McsTable;

    fn small_spec(n_channels: usize, max_antennas: usize) -> FixtureSpec {
        let cfg = LinkConfig::new(2, 2, McsTable::default().get(0).unwrap(), Detector::new(DetectorKind::Mmse));
        FixtureSpec {
            max_antennas,
            ..FixtureSpec::for_link(&cfg, n_channels, 3)
        }
    }

    fn template(region: SnrRegion, det: Detector) -> LinkConfig {
        let mut c = LinkConfig::new(2, 2, McsTable::default().get(2).unwrap(), det);
        c.channel.region = region;
        c
    }

    fn quick() -> SearchSettings {
        SearchSettings {
            m_max: 4,
            budget: Budget {
                batch: 1,
                max_frames_per_channel: 2,
            },
            ..Default::default()
        }
    }

    #[test]
    fn fixtures_are_nested_and_seeded() {
        let spec = small_spec(3, 6);
        let a = FixtureSet::generate(&spec, 2).unwrap();
        assert_eq!(a, FixtureSet::generate(&spec, 2).unwrap());
        let sub = a.for_antennas(3).unwrap();
        assert_eq!(sub[1].at(4, 5)[(2, 1)], a.grids[1].at(4, 5)[(2, 1)]);
        assert!(matches!(a.for_antennas(7), Err(Error::MissingFixtures { .. })));
    }

    #[test]
    fn fixtures_roundtrip_on_disk() {
        let dir = std::env::temp_dir().join(format!("nlmimo-fx-{}", std::process::id()));
        let set = FixtureSet::generate(&small_spec(2, 3), 2).unwrap();
        set.save(&dir).unwrap();
        assert_eq!(FixtureSet::load(&dir, 2, 2).unwrap(), set);
        assert!(FixtureSet::load(&dir, 2, 3).is_err());
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn noiseless_fixtures_need_two_antennas() {
        let set = FixtureSet::generate(&small_spec(4, 4), 2).unwrap();
        for det in [Detector::new(DetectorKind::Zf), Detector::new(DetectorKind::Mmse), Detector::mpnl(32)] {
            let cell = min_antennas(&template(SnrRegion::fixed(200.0), det), &set, &quick()).unwrap();
            assert_eq!(cell.min_antennas, Some(2), "{det}");
            assert_eq!(cell.trace.len(), 1);
        }
    }

    #[test]
    fn hopeless_snr_is_unsupported() {
        let set = FixtureSet::generate(&small_spec(4, 4), 2).unwrap();
        let cell = min_antennas(&template(SnrRegion::fixed(-20.0), Detector::new(DetectorKind::Mmse)), &set, &quick()).unwrap();
        assert_eq!(cell.min_antennas, None);
        assert_eq!(cell.trace.len(), 3);
        assert_eq!(cell.min_antennas_label(), "unsupported");
        assert!(cell.measured_per > 0.1);
    }

    #[test]
    fn missing_fixtures_error() {
        let set = FixtureSet::generate(&small_spec(2, 3), 2).unwrap();
        let t = template(SnrRegion::fixed(10.0), Detector::new(DetectorKind::Mmse));
        assert!(matches!(min_antennas(&t, &set, &quick()), Err(Error::MissingFixtures { .. })));
    }

    #[test]
    fn single_cell_heatmap_equals_direct_search() {
        let set = FixtureSet::generate(&small_spec(3, 4), 2).unwrap();
        let t = template(SnrRegion::fixed(8.0), Detector::new(DetectorKind::Mmse));
        let direct = min_antennas(&t, &set, &quick()).unwrap();
        let grid = heatmap(&t, &[2], &[t.mcs], t.detector, std::slice::from_ref(&set), &quick()).unwrap();
        assert_eq!(grid, vec![direct]);
    }
}
