use nlmimo::channel::{rayleigh_block, ChannelGrid, SnrRegion};
use nlmimo::detect::{Detector, DetectorKind};
use nlmimo::linksim::{estimate_channel_ls, measure_per, observe_dmrs, CsiMode, LinkConfig, LinkSimulator, PilotBook};
use nlmimo::phy::McsTable;
use nlmimo::search::{FixtureSet, FixtureSpec};
use nlmimo::seed;

fn config(n: usize, m: usize, mcs: usize, det: Detector, snr_db: f64) -> LinkConfig {
    let mut cfg = LinkConfig::new(n, m, McsTable::default().get(mcs).unwrap(), det);
    cfg.channel.region = SnrRegion::fixed(snr_db);
    cfg
}

fn fixtures(cfg: &LinkConfig, count: usize, s: u64) -> Vec<ChannelGrid> {
    let spec = FixtureSpec {
        max_antennas: cfg.m_antennas,
        ..FixtureSpec::for_link(cfg, count, s)
    };
    FixtureSet::generate(&spec, cfg.n_streams).unwrap().grids
}

#[test]
fn batches_pool_to_the_same_counts() {
    let cfg = config(2, 2, 7, Detector::new(DetectorKind::Mmse), 6.0);
    let ch = fixtures(&cfg, 3, 8);
    let sim = LinkSimulator::new(cfg.clone()).unwrap();
    let whole = sim.run_frames(&ch, 0, 6).unwrap();
    let a = sim.run_frames(&ch, 0, 2).unwrap();
    let b = sim.run_frames(&ch, 2, 4).unwrap();
    assert_eq!(whole, (a.0 + b.0, a.1 + b.1));
    let r = measure_per(&cfg, &ch, 6).unwrap();
    assert_eq!((r.frames, r.errors, r.slots), (whole.0, whole.1, 18));
}

#[test]
fn per_decreases_with_snr() {
    let det = Detector::new(DetectorKind::Mmse);
    let base = config(2, 2, 7, det, 0.0);
    let ch = fixtures(&base, 20, 9);
    let pers: Vec<_> = [0.0, 6.0, 12.0, 18.0]
        .iter()
        .map(|&s| measure_per(&config(2, 2, 7, det, s), &ch, 10).unwrap())
        .collect();
    for w in pers.windows(2) {
        assert!(w[1].per <= w[0].per + w[0].ci95_halfwidth, "{pers:?}");
    }
    assert!(pers[0].per > 0.5 && pers[3].per < 0.1, "{pers:?}");
}

#[test]
fn genie_csi_is_no_worse_than_estimated() {
    let det = Detector::new(DetectorKind::Mmse);
    let genie = config(4, 4, 7, det, 8.0);
    let ls = LinkConfig {
        csi: CsiMode::LsDmrs,
        ..genie.clone()
    };
    let ch = fixtures(&genie, 20, 10);
    let g = measure_per(&genie, &ch, 10).unwrap();
    let l = measure_per(&ls, &ch, 10).unwrap();
    assert!(g.per <= l.per, "genie {} ls {}", g.per, l.per);
}

#[test]
fn ls_error_power_tracks_noise() {
    let book = PilotBook::new(6, 48).unwrap();
    let nv = 0.05;
    let (mut err, mut count) = (0.0, 0);
    for t in 0..200 {
        let g = rayleigh_block(4, 6, t);
        let mut rng = seed::rng(t, &[3]);
        let est = estimate_channel_ls(&observe_dmrs(&g, &book, nv, &mut rng), &book).unwrap();
        for k in 0..48 {
            for r in 0..4 {
                for j in 0..6 {
                    err += (est.at(0, k)[(r, j)] - g.at(0, 0)[(r, j)]).norm_sqr();
                    count += 1;
                }
            }
        }
    }
    let mse = err / count as f64;
    assert!(mse > nv / 2.0 && mse < 2.0 * nv, "mse {mse}");
}

#[test]
fn nonlinear_beats_linear_on_small_link() {
    let mmse = config(2, 2, 2, Detector::new(DetectorKind::Mmse), 15.0);
    let ch = fixtures(&mmse, 30, 12);
    let full = LinkConfig {
        detector: Detector::mpnl(16),
        ..mmse.clone()
    };
    let a = measure_per(&mmse, &ch, 10).unwrap();
    let b = measure_per(&full, &ch, 10).unwrap();
    assert!(b.per <= a.per, "mpnl {} mmse {}", b.per, a.per);
}

#[test]
fn overloaded_zf_never_decodes_but_mpnl_can() {
    let zf = config(3, 2, 2, Detector::new(DetectorKind::Zf), 25.0);
    let ch = fixtures(&zf, 5, 13);
    assert_eq!(measure_per(&zf, &ch, 4).unwrap().per, 1.0);
    let nl = LinkConfig {
        detector: Detector::mpnl(32),
        ..zf
    };
    assert!(measure_per(&nl, &ch, 4).unwrap().per < 1.0);
}
