//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass criterion numbers to run a subset:
//! `cargo test --test acceptance -- 5 7`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use nlmimo::channel::{complex_gaussian, noise_var_for_snr, MobilityConfig};
use nlmimo::connectivity::{max_vehicles, power_savings, ConnectivityQuery, PowerQuery};
use nlmimo::detect::{
    ml_detect, mmse_detect, mmse_estimate, mpnl_detect, mpnl_preprocess, sphere_detect, zf_detect,
    DetectorInput,
};
use nlmimo::fec::{ldpc_encode, BaseMatrix, TransportCodec, MAX_ITERATIONS};
use nlmimo::linalg::CMatrix;
use nlmimo::phy::{Constellation, Numerology, UseCase};
use nlmimo::search::SearchCell;
use nlmimo::seed;
use nlmimo_cli::bench::run_bench;
use nlmimo_cli::commands;
use nlmimo_cli::RunConfig;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

struct Problem {
    h: CMatrix,
    y: Vec<Complex64>,
    x: Vec<usize>,
}

fn problem(m: usize, n: usize, c: &Constellation, nv: f64, s: u64) -> Problem {
    let mut rng = seed::rng(s, &[]);
    let h = CMatrix::from_fn(m, n, |_, _| complex_gaussian(&mut rng));
    let x: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c.order())).collect();
    let sym: Vec<Complex64> = x.iter().map(|&l| c.point(l)).collect();
    let y = h
        .mul_vec(&sym)
        .into_iter()
        .map(|v| v + complex_gaussian(&mut rng) * nv.sqrt())
        .collect();
    Problem { h, y, x }
}

fn same(a: &nlmimo::detect::DetectionOutput, b: &nlmimo::detect::DetectionOutput) -> bool {
    a.hard == b.hard && a.min_metric.to_bits() == b.min_metric.to_bits()
}

fn sphere_vs_ml() -> Outcome {
    let t = Instant::now();
    let mut mismatches = 0;
    let mut total = 0;
    for (m, n) in [(2, 2), (4, 4)] {
        for c in [Constellation::qpsk(), Constellation::qam16()] {
            for snr in [0.0, 10.0, 20.0] {
                let nv = noise_var_for_snr(n, snr);
                mismatches += (0..500u64)
                    .into_par_iter()
                    .filter(|&i| {
                        let p = problem(m, n, &c, nv, seed::derive(1, &[n as u64, c.order() as u64, snr as u64, i]));
                        let inp = DetectorInput::new(&p.h, &p.y, nv, &c).unwrap();
                        !same(&ml_detect(&inp).unwrap(), &sphere_detect(&inp).unwrap())
                    })
                    .count();
                total += 500;
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && secs < 60.0,
        format!("{mismatches}/{total} mismatches in {secs:.1}s"),
    )
}

fn mpnl_full_vs_ml() -> Outcome {
    let c = Constellation::qpsk();
    let mut mismatches = 0;
    for n in [2usize, 4] {
        let nv = noise_var_for_snr(n, 10.0);
        let full = 4usize.pow(n as u32);
        mismatches += (0..300u64)
            .into_par_iter()
            .filter(|&i| {
                let p = problem(n, n, &c, nv, seed::derive(2, &[n as u64, i]));
                let inp = DetectorInput::new(&p.h, &p.y, nv, &c).unwrap();
                let plan = mpnl_preprocess(&p.h, nv, full, &c).unwrap();
                !same(&mpnl_detect(&plan, &inp).unwrap().1, &ml_detect(&inp).unwrap())
            })
            .count();
    }
    outcome(mismatches == 0, format!("{mismatches}/600 mismatches"))
}

fn mmse_closed_form() -> Outcome {
    let c = Constellation::qam16();
    let nv = noise_var_for_snr(8, 15.0);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let p = problem(8, 8, &c, nv, seed::derive(3, &[i]));
        let h = DMatrix::from_fn(8, 8, |r, k| p.h[(r, k)]);
        let a = h.adjoint() * &h + DMatrix::identity(8, 8) * Complex64::new(nv, 0.0);
        let want = a.lu().solve(&(h.adjoint() * DVector::from_column_slice(&p.y))).unwrap();
        let got = mmse_estimate(&DetectorInput::new(&p.h, &p.y, nv, &c).unwrap()).x;
        let diff: f64 = got.iter().zip(want.iter()).map(|(g, w)| (g - w).norm_sqr()).sum::<f64>().sqrt();
        worst = worst.max(diff / want.norm());
    }
    outcome(worst <= 1e-10, format!("worst relative error {worst:.2e}"))
}

fn connectivity_value() -> Outcome {
    let q = ConnectivityQuery {
        use_case: UseCase::new("small", 0.5e6).unwrap(),
        se: 2.0,
        numerology: Numerology::default(),
        n_streams: 12,
    };
    let v = max_vehicles(&q);
    outcome(
        q.rb_ratio() < 1.0 && matches!(v, Ok(936)),
        format!("ratio {:.3}, vehicles {v:?}", q.rb_ratio()),
    )
}

/// Uncoded symbol error counts of several detectors on shared instances.
fn uncoded_ser(
    m: usize,
    n: usize,
    snr_db: f64,
    trials: u64,
    tag: u64,
    detectors: &[&(dyn Fn(&DetectorInput<'_>) -> Vec<usize> + Sync)],
) -> Vec<f64> {
    let c = Constellation::qpsk();
    let nv = noise_var_for_snr(n, snr_db);
    let chunks = 250u64;
    let per = trials / chunks;
    let counts = (0..chunks)
        .into_par_iter()
        .map(|ch| {
            let mut e = vec![0u64; detectors.len()];
            for i in 0..per {
                let p = problem(m, n, &c, nv, seed::derive(tag, &[snr_db.to_bits(), ch * per + i]));
                let inp = DetectorInput::new(&p.h, &p.y, nv, &c).unwrap();
                for (k, d) in detectors.iter().enumerate() {
                    e[k] += d(&inp).iter().zip(&p.x).filter(|(a, b)| a != b).count() as u64;
                }
            }
            e
        })
        .reduce(
            || vec![0; detectors.len()],
            |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect(),
        );
    let symbols = (per * chunks * n as u64) as f64;
    counts.into_iter().map(|e| e as f64 / symbols).collect()
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn diversity_direction() -> Outcome {
    let snrs = [14.0, 16.0, 18.0, 20.0, 22.0];
    let ml = |i: &DetectorInput<'_>| ml_detect(i).unwrap().hard;
    let zf = |i: &DetectorInput<'_>| zf_detect(i).unwrap().hard;
    let mut l_ml = Vec::new();
    let mut l_zf = Vec::new();
    for &s in &snrs {
        let ser = uncoded_ser(2, 2, s, 1_000_000, 5, &[&ml, &zf]);
        l_ml.push(ser[0].log10());
        l_zf.push(ser[1].log10());
    }
    let (a, b) = (slope(&snrs, &l_ml), slope(&snrs, &l_zf));
    let ratio = a / b;
    outcome(
        ratio.is_finite() && ratio >= 1.6,
        format!("slopes ml {a:.4} zf {b:.4} per dB, ratio {ratio:.2}"),
    )
}

fn overloaded_support() -> Outcome {
    let trials = 100_000u64;
    let c = Constellation::qpsk();
    let mpnl = |i: &DetectorInput<'_>| {
        let plan = mpnl_preprocess(i.h, i.noise_var, 32, &c).unwrap();
        mpnl_detect(&plan, i).unwrap().1.hard
    };
    let mmse = |i: &DetectorInput<'_>| mmse_detect(i).hard;
    let sers: Vec<Vec<f64>> = [10.0, 20.0, 30.0]
        .iter()
        .map(|&s| uncoded_ser(2, 3, s, trials, 6, &[&mpnl, &mmse]))
        .collect();
    let symbols = (trials * 3) as f64;
    let hw = |p: f64| 1.96 * (p * (1.0 - p) / symbols).sqrt();
    let mp: Vec<f64> = sers.iter().map(|s| s[0]).collect();
    let monotone = mp.windows(2).all(|w| w[0] - hw(w[0]) > w[1] + hw(w[1]));
    let half = sers[2][0] <= 0.5 * sers[2][1];
    outcome(
        monotone && half,
        format!(
            "mpnl SER {:.2e}/{:.2e}/{:.2e}, mmse at 30 dB {:.2e}",
            mp[0], mp[1], mp[2], sers[2][1]
        ),
    )
}

fn grid_config() -> RunConfig {
    RunConfig::from_toml("[search]\nstreams = [2, 4, 6]\nmcs = [2, 7, 12]\ndetectors = [\"mmse\", \"mpnl\"]\n").unwrap()
}

/// Searches the grid on fixtures written to disk and read back.
fn grid_cells() -> anyhow::Result<Vec<SearchCell>> {
    let mut cfg = grid_config();
    let dir = std::env::temp_dir().join(format!("nlmimo-acceptance-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    commands::gen_fixtures(&cfg, &dir)?;
    cfg.search.fixtures_dir = Some(dir.clone());
    let cells = commands::search(&cfg);
    let _ = std::fs::remove_dir_all(&dir);
    cells
}

fn heatmap_dominance(cells: &[SearchCell]) -> Outcome {
    let mut strict = 0;
    let mut below_n = 0;
    let mut violations = Vec::new();
    let mut table = Vec::new();
    for l in cells.iter().filter(|c| c.detector == "mmse") {
        let Some(n) = cells
            .iter()
            .find(|c| c.detector == "mpnl32" && c.n_streams == l.n_streams && c.mcs_index == l.mcs_index)
        else {
            violations.push(format!("missing mpnl cell N={} mcs={}", l.n_streams, l.mcs_index));
            continue;
        };
        // unsupported counts as more antennas than any budget
        let ml = l.min_antennas.unwrap_or(usize::MAX);
        let mn = n.min_antennas.unwrap_or(usize::MAX);
        if mn > ml {
            violations.push(format!("N={} mcs={}", l.n_streams, l.mcs_index));
        }
        strict += usize::from(mn < ml);
        below_n += usize::from(mn < n.n_streams);
        table.push(format!(
            "{}/{}:{}|{}",
            l.n_streams,
            l.mcs_index,
            l.min_antennas_label(),
            n.min_antennas_label()
        ));
    }
    outcome(
        table.len() == 9 && violations.is_empty() && strict >= 1 && below_n >= 1,
        format!(
            "N/mcs:mmse|mpnl {}; strict {strict}, below N {below_n}{}",
            table.join(" "),
            if violations.is_empty() { String::new() } else { format!(", violations {violations:?}") }
        ),
    )
}

fn connectivity_dominance(cells: &[SearchCell]) -> Outcome {
    let report = match commands::connectivity_from_cells(&grid_config(), cells) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("{e:#}")),
    };
    let rows = &report.rows;
    let dominated = rows.iter().all(|r| r.nonlinear_vehicles >= r.linear_vehicles);
    let gains = rows.iter().filter(|r| r.gain > 1.0).count();
    outcome(
        !rows.is_empty() && dominated && 2 * gains >= rows.len(),
        format!("{} rows, mpnl >= mmse in all: {dominated}, gain > 1 in {gains}", rows.len()),
    )
}

fn ldpc_sanity() -> Outcome {
    let c = Constellation::qpsk();
    let codec = TransportCodec::new(&BaseMatrix::half_rate(), 0.5, 576).unwrap();
    let k = codec.k();
    let h = codec.code().parity_check();
    let bits = |s: u64| -> Vec<u8> {
        let mut rng = seed::rng(8, &[s]);
        (0..k).map(|_| rng.gen_range(0..2u8)).collect()
    };
    let mut bad_syndrome = 0;
    let mut bad_roundtrip = 0;
    for s in 0..1000 {
        let info = bits(s);
        let tx = codec.encode(&info).unwrap();
        let mut rng = seed::rng(10, &[s]);
        let full: Vec<u8> = (0..codec.code().k()).map(|_| rng.gen_range(0..2u8)).collect();
        let cw = ldpc_encode(codec.code(), &full).unwrap();
        bad_syndrome += usize::from(!h.syndrome_is_zero(&cw));
        let llrs: Vec<f64> = tx.iter().map(|&b| if b == 0 { 20.0 } else { -20.0 }).collect();
        bad_roundtrip += usize::from(codec.decode(&llrs, MAX_ITERATIONS).unwrap().0 != info);
    }
    let snrs = [0.5, 1.5, 2.5];
    let pers: Vec<f64> = snrs
        .iter()
        .map(|&snr| {
            let nv = 10f64.powf(-snr / 10.0);
            let errors = (0..10_000u64)
                .into_par_iter()
                .filter(|&f| {
                    let info = bits(100_000 + f);
                    let tx = codec.encode(&info).unwrap();
                    let mut rng = seed::rng(9, &[snr.to_bits(), f]);
                    let mut llrs = Vec::with_capacity(tx.len());
                    for pair in tx.chunks(2) {
                        let y = c.modulate(pair).unwrap()[0] + complex_gaussian(&mut rng) * nv.sqrt();
                        llrs.extend(c.demap_llr(y, nv).unwrap());
                    }
                    codec.decode(&llrs, MAX_ITERATIONS).unwrap().0 != info
                })
                .count();
            errors as f64 / 10_000.0
        })
        .collect();
    let decreasing = pers.windows(2).all(|w| w[1] < w[0]);
    outcome(
        bad_syndrome == 0 && bad_roundtrip == 0 && decreasing,
        format!(
            "syndrome failures {bad_syndrome}, roundtrip failures {bad_roundtrip}, PER {:.4}/{:.4}/{:.4} at {snrs:?} dB",
            pers[0], pers[1], pers[2]
        ),
    )
}

fn power_value() -> Outcome {
    let w = power_savings(&PowerQuery::new(21, 7, 15.6).unwrap());
    outcome(w == 218.4, format!("{w} W"))
}

fn parallel_bench() -> Outcome {
    let cfg = RunConfig::from_toml("[bench]\ndetectors = [\"mpnl\"]\nworkers = [1, 4, 8]\n").unwrap();
    let rows = match run_bench(&cfg) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("{e:#}")),
    };
    let identical = rows.iter().all(|r| r.digest == rows[0].digest);
    let s8 = rows.iter().find(|r| r.workers == 8).map_or(0.0, |r| r.speedup);
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    outcome(
        identical && s8 >= 0.6 * 8.0,
        format!("outputs identical across 1/4/8 workers: {identical}; speedup at 8 workers {s8:.2} (need 4.8) on {cpus} cpu(s)"),
    )
}

fn doppler_value() -> Outcome {
    let f = MobilityConfig::new(30.0, 3.5e9).unwrap().doppler_hz();
    outcome((f - 97.24).abs() <= 0.1, format!("{f:.3} Hz"))
}

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let run = |id: u32| wanted.is_empty() || wanted.contains(&id);
    let mut failed = 0;
    let mut report = |id: u32, f: &dyn Fn() -> Outcome| {
        if !run(id) {
            return;
        }
        let t = Instant::now();
        let o = f();
        failed += usize::from(!o.pass);
        println!(
            "criterion {id:>2}: {} ({:.1}s) {}",
            if o.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            o.detail
        );
    };
    report(1, &sphere_vs_ml);
    report(2, &mpnl_full_vs_ml);
    report(3, &mmse_closed_form);
    report(4, &connectivity_value);
    report(5, &diversity_direction);
    report(6, &overloaded_support);
    if run(7) || run(9) {
        let t = Instant::now();
        match grid_cells() {
            Ok(cells) => {
                let secs = t.elapsed().as_secs_f64();
                report(7, &|| {
                    let o = heatmap_dominance(&cells);
                    outcome(o.pass, format!("{}; search took {secs:.0}s", o.detail))
                });
                report(9, &|| connectivity_dominance(&cells));
            }
            Err(e) => {
                report(7, &|| outcome(false, format!("search failed: {e:#}")));
                report(9, &|| outcome(false, format!("search failed: {e:#}")));
            }
        }
    }
    report(8, &ldpc_sanity);
    report(10, &power_value);
    report(11, &parallel_bench);
    report(12, &doppler_value);
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
