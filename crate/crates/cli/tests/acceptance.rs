//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! Run with `cargo test -p pairlab-cli --test acceptance`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use pairlab_core::analytic::{efficiencies_from_rates, heralded_g2_prediction, predicted_cross_corr};
use pairlab_core::cluster::{central_fraction, cluster_spacing, drift_detuning, emission_lines, strain_detuning};
use pairlab_core::correlator::{
    autocorrelation_histogram, cross_correlation_histogram, cross_correlation_histogram_chunked, integrated_window_g2,
    normalize_g2,
};
use pairlab_core::fit::fit_two_sided_exponential;
use pairlab_core::model_core::{
    airy_transmission, coherence_time, filtered_fraction, irf_convolved_autocorr, product_line_fwhm, window_averaged_g2,
};
use pairlab_core::tagio::{self, HEADER_LEN, RECORD_LEN};
use pairlab_core::{
    ArmParams, CombSpec, DetectorParams, Error, EtalonSpec, Experiment, IrfSpec, PairSourceOperatingPoint, RateSummary,
    SourceParams, SpectralLine, StrainModel, StreamSet, TimeTagStream, APD1, APD3,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{Map, Value};

const GRID: [f64; 5] = [5e4, 1e5, 2.5e5, 5e5, 1e6];
const WINDOW_NS: f64 = 8.0;
const SIGMA_NS: f64 = 0.7304;

type Outcome = (bool, String);
type Criterion = (&'static str, &'static str, fn() -> Outcome);

fn rel(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs()
}

fn eq1_sweep() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let rates = GRID.map(|r| r.to_string()).join(",");
    let args = [
        "pairlab", "sweep", "--out-dir", dir.path().to_str().unwrap(), "--rates", &rates,
        "--duration-s", "60", "--window-ns", "8", "--seed", "2024",
    ];
    let start = Instant::now();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = pairlab_cli::run_with(args, &mut out, &mut err);
    let elapsed = start.elapsed().as_secs_f64();
    if code != 0 {
        return (false, format!("sweep exited {code}: {}", String::from_utf8_lossy(&err)));
    }
    let mut reader = csv::Reader::from_path(dir.path().join("sweep.csv")).unwrap();
    let mut ok = elapsed <= 300.0;
    let mut detail = Vec::new();
    for row in reader.deserialize::<(f64, f64, f64, f64)>() {
        let (rate, g2c, sigma, eq1) = row.unwrap();
        let pulls = (g2c - eq1).abs() / sigma;
        ok &= pulls < 3.0;
        if rate <= 5e5 {
            ok &= g2c < 0.01;
        }
        detail.push(format!("{rate:.0}: {g2c:.5}±{sigma:.5} vs {eq1:.5} ({pulls:.1}σ)"));
    }
    ok &= detail.len() == GRID.len();
    (ok, format!("{}; {elapsed:.0} s", detail.join(", ")))
}

fn efficiency_algebra() -> Outcome {
    let rates = RateSummary { n_s: 6.8e4, n_i: 1.7e4, r: 4.6e3, duration_s: 1.0 };
    let e = efficiencies_from_rates(&rates, 0.60, 1.2).unwrap();
    // printed value and one unit in its last digit
    let checks = [
        ("eta_s", e.eta_s, 0.27, 0.01),
        ("eta_i", e.eta_i, 0.067, 0.001),
        ("eta_heralded", e.eta_heralded, 0.45, 0.01),
        ("R", e.r_inferred, 2.1e5, 0.1e5),
        ("r/P", e.r_normalized, 3.8e3, 0.1e3),
    ];
    let ok = checks.iter().all(|&(_, got, want, unit)| (got - want).abs() <= unit);
    let detail = checks.iter().map(|(n, got, ..)| format!("{n} = {got:.4}")).collect::<Vec<_>>().join(", ");
    (ok, detail)
}

fn coherence() -> Outcome {
    let fwhm = product_line_fwhm(226.0, 274.0).unwrap();
    let tau0 = coherence_time(fwhm).unwrap();
    (rel(tau0, 2.0) <= 0.01, format!("product FWHM {fwhm:.2} MHz, tau0 = {tau0:.4} ns"))
}

fn etalon_extinction() -> Outcome {
    let t = airy_transmission(6_400.0, EtalonSpec::new(12.8, 274.0).unwrap()).unwrap();
    let ok = rel(t, 1.2e-3) <= 0.10 && (t - 1.13e-3).abs() <= 0.005e-3;
    (ok, format!("T(FSR/2) = {t:.4e} ({:.1} % from 1.2e-3)", 100.0 * rel(t, 1.2e-3)))
}

fn etalon_filtered_fraction() -> Outcome {
    let source = SpectralLine::new(0.0, 226.0).unwrap();
    let f = filtered_fraction(source, EtalonSpec::new(12.8, 274.0).unwrap(), 200.0).unwrap();
    ((f - 0.68).abs() <= 0.03, format!("filtered fraction over 400 MHz = {f:.4}, target 0.68 ± 0.03"))
}

fn thermal_autocorrelation() -> Outcome {
    let detector = DetectorParams {
        efficiency: 1.0,
        jitter_sigma_ns: SIGMA_NS / std::f64::consts::SQRT_2,
        dead_time_ns: 0.0,
        dark_rate_per_s: 0.0,
    };
    let source = SourceParams { thermal_tau0_ns: Some(2.0), ..SourceParams::default().with_pair_rate(1.5e7) };
    let exp = Experiment {
        source,
        signal_arm: ArmParams { transmission: 0.0, detector, splitter: Some(0.5) },
        idler_arm: ArmParams { transmission: 1.0, detector, splitter: None },
        duration_s: 2.0,
        resolution_ps: 1,
    };
    let set = exp.simulate(77).unwrap();
    let idler = set.channel(APD3).unwrap();
    let hist = autocorrelation_histogram(idler, 162, 20_000, set.duration_s()).unwrap();
    let g0 = normalize_g2(&hist).unwrap().g2[hist.half_bins];
    let window = integrated_window_g2(&hist, 4_000).unwrap();
    let irf = IrfSpec::new(SIGMA_NS).unwrap();
    let (model_g0, model_window) =
        (irf_convolved_autocorr(0.0, 2.0, irf).unwrap(), window_averaged_g2(2.0, irf, 4.0).unwrap());
    let ok = (g0 - 1.607).abs() <= 0.02 && (window - 1.243).abs() <= 0.01;
    (
        ok,
        format!(
            "{} tags: g2(0) = {g0:.4} (model {model_g0:.4}), ±4 ns mean = {window:.4} (model {model_window:.4})",
            idler.len()
        ),
    )
}

fn cross_correlation_curve() -> Outcome {
    let mut worst: f64 = 0.0;
    for &rate in &GRID {
        let op = PairSourceOperatingPoint::from_pair_rate(rate, WINDOW_NS).unwrap();
        let got = predicted_cross_corr(1.338, &op).unwrap();
        let want = 1.338 * 1.338 / heralded_g2_prediction(&op).unwrap();
        worst = worst.max(rel(got, want));
    }
    let at = predicted_cross_corr(1.338, &PairSourceOperatingPoint::from_pair_rate(5e5, WINDOW_NS).unwrap()).unwrap();
    (worst == 0.0 && at > 200.0, format!("max identity deviation {worst:e}, g2_si(5e5/s) = {at:.1}"))
}

fn cluster_structure() -> Outcome {
    let comb = CombSpec { linewidth_s_mhz: 444.0, linewidth_i_mhz: 444.0, ..CombSpec::default() };
    let spacing = cluster_spacing(comb.fsr_s_ghz, comb.fsr_i_ghz).unwrap();
    let lambda = 795e-9;
    let half_nm_ghz = 299_792_458.0 * 0.5e-9 / (lambda * lambda) * 1e-9;
    let lines = emission_lines(&comb, spacing / 2.0).unwrap();
    let central = lines.iter().find(|l| l.detuning_ghz == 0.0).map(|l| l.weight).unwrap_or(0.0);
    let mut others: Vec<_> = lines.iter().filter(|l| l.detuning_ghz != 0.0).collect();
    others.sort_by(|a, b| b.weight.total_cmp(&a.weight));
    let sides_at_fsr = others.len() >= 2
        && others[..2].iter().all(|l| (l.detuning_ghz.abs() - comb.fsr_s_ghz).abs() < 1e-9)
        && others[0].detuning_ghz != others[1].detuning_ghz;
    let dominant = others.first().is_none_or(|l| l.weight < 0.5 * central);
    let fraction = central_fraction(&lines, spacing).unwrap();
    let ok = rel(spacing, half_nm_ghz) <= 0.05 && sides_at_fsr && dominant && (0.60..=0.90).contains(&fraction);
    (
        ok,
        format!(
            "spacing {spacing} GHz vs {half_nm_ghz:.1} GHz, central {central:.3}, next {:.4} at ±{} GHz, central fraction {fraction:.4}",
            others.first().map_or(0.0, |l| l.weight),
            others.first().map_or(0.0, |l| l.detuning_ghz.abs()),
        ),
    )
}

fn delay_shape() -> Outcome {
    let detector = DetectorParams {
        efficiency: 1.0,
        jitter_sigma_ns: SIGMA_NS / std::f64::consts::SQRT_2,
        dead_time_ns: 0.0,
        dark_rate_per_s: 0.0,
    };
    let exp = Experiment {
        source: SourceParams::default().with_pair_rate(1e5),
        signal_arm: ArmParams { transmission: 1.0, detector, splitter: None },
        idler_arm: ArmParams { transmission: 1.0, detector, splitter: None },
        duration_s: 100.0,
        resolution_ps: 1,
    };
    let set = exp.simulate(8).unwrap();
    let (idler, signal) = (set.channel(APD3).unwrap(), set.channel(APD1).unwrap());
    let hist = cross_correlation_histogram(idler, signal, 81, 20_000, set.duration_s()).unwrap();
    let fit = fit_two_sided_exponential(&hist, SIGMA_NS).unwrap();
    let ok = rel(fit.tau_lead_ns, 0.704) <= 0.10 && rel(fit.tau_trail_ns, 1.00) <= 0.10 && fit.tau_trail_ns > fit.tau_lead_ns;
    (
        ok,
        format!(
            "{} pairs: tau_lead = {:.4} ns, tau_trail = {:.4} ns, cusp at {:.3} ns",
            signal.len(),
            fit.tau_lead_ns,
            fit.tau_trail_ns,
            fit.center_ns
        ),
    )
}

fn brute_force(a: &[u64], b: &[u64], res: u64, bin: u64, max_lag: u64) -> Vec<u64> {
    let k_max = max_lag.div_ceil(bin) as i64;
    let mut counts = vec![0u64; (2 * k_max + 1) as usize];
    for &ta in a {
        for &tb in b {
            let k = ((tb as f64 - ta as f64) * res as f64 / bin as f64).round() as i64;
            if k.abs() <= k_max {
                counts[(k + k_max) as usize] += 1;
            }
        }
    }
    counts
}

fn poisson_ticks(rng: &mut ChaCha8Rng, rate_per_ps: f64, n: usize) -> Vec<u64> {
    let mut t = 0.0f64;
    (0..n)
        .map(|_| {
            t += -(1.0 - rng.random::<f64>()).ln() / rate_per_ps;
            t as u64
        })
        .collect()
}

fn correlator() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cases = 1_000;
    let mut mismatches = 0;
    for _ in 0..cases {
        let span = rng.random_range(1..50_000u64);
        let draw = |rng: &mut ChaCha8Rng| {
            let n = rng.random_range(0..=1_000usize);
            let mut v: Vec<u64> = (0..n).map(|_| rng.random_range(0..span)).collect();
            v.sort_unstable();
            v
        };
        let (a, b) = (draw(&mut rng), draw(&mut rng));
        let res = [1u64, 3, 81][rng.random_range(0..3)];
        let bin = rng.random_range(1..500u64);
        let max_lag = bin * rng.random_range(1..40u64) + rng.random_range(0..bin);
        let sa = TimeTagStream::new(0, res, a.clone()).unwrap();
        let sb = TimeTagStream::new(1, res, b.clone()).unwrap();
        let serial = cross_correlation_histogram(&sa, &sb, bin, max_lag, 1.0).unwrap();
        let chunked = cross_correlation_histogram_chunked(&sa, &sb, bin, max_lag, 1.0, rng.random_range(2..9)).unwrap();
        if serial.counts != brute_force(&a, &b, res, bin, max_lag) || chunked != serial {
            mismatches += 1;
        }
    }

    let n = 10_000_000;
    let a = TimeTagStream::new(0, 1, poisson_ticks(&mut rng, 1e-5, n)).unwrap();
    let b = TimeTagStream::new(1, 1, poisson_ticks(&mut rng, 1e-5, n)).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let serial = pool.install(|| cross_correlation_histogram(&a, &b, 162, 50_000, 1.0)).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let chunked = cross_correlation_histogram_chunked(&a, &b, 162, 50_000, 1.0, 8).unwrap();
    let identical = chunked == serial;
    (
        mismatches == 0 && elapsed <= 10.0 && identical,
        format!(
            "{mismatches}/{cases} brute-force mismatches; 1e7 x 1e7 tags in {elapsed:.2} s ({} pairs binned); chunked identical: {identical}",
            serial.total()
        ),
    )
}

fn encode(set: &StreamSet, meta: &Map<String, Value>) -> Vec<u8> {
    let mut buf = Vec::new();
    tagio::write_to(&mut buf, set, meta).unwrap();
    buf
}

fn persistence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut round_trip_failures = 0;
    for i in 0..1_000u64 {
        let channels = rng.random_range(1..8usize);
        let res = rng.random_range(1..1_000u64);
        let data: Vec<Vec<u64>> = (0..channels)
            .map(|_| {
                let mut v: Vec<u64> = (0..rng.random_range(0..100)).map(|_| rng.random_range(0..u64::MAX / 2)).collect();
                v.sort_unstable();
                v
            })
            .collect();
        let set = StreamSet::new(res, rng.random_range(0.0..100.0), data).unwrap();
        let mut meta = Map::new();
        meta.insert("case".into(), Value::from(i));
        let bytes = encode(&set, &meta);
        match tagio::read_from(bytes.as_slice()) {
            Ok((back, m)) if back == set && m["case"] == i && encode(&back, &m) == bytes => {}
            _ => round_trip_failures += 1,
        }
    }

    let hex = concat!(
        "50545431", "0100", "0200", "0200000000000000", "12000000",
        "7b226475726174696f6e5f73223a302e357d",
        "0500000000000000", "00", "000000",
        "0500000000000000", "01", "000000",
        "2c01000000000000", "00", "000000",
    );
    let golden: Vec<u8> = (0..hex.len()).step_by(2).map(|i| u8::from_str_radix(&hex[i..i + 2], 16).unwrap()).collect();
    let golden_ok = tagio::read_from(golden.as_slice())
        .is_ok_and(|(set, _)| set == StreamSet::new(2, 0.5, vec![vec![5, 300], vec![5]]).unwrap());

    let rec = |i: usize| HEADER_LEN + 18 + i * RECORD_LEN;
    let patched = |f: &dyn Fn(&mut Vec<u8>)| {
        let mut v = golden.clone();
        f(&mut v);
        tagio::read_from(v.as_slice())
    };
    let fixtures: Vec<(&str, bool)> = vec![
        ("bad magic", matches!(patched(&|v| v[..4].copy_from_slice(b"XXXX")), Err(Error::Format(_)))),
        ("bad version", matches!(patched(&|v| v[4] = 9), Err(Error::Format(_)))),
        ("zero channels", matches!(patched(&|v| v[6] = 0), Err(Error::Format(_)))),
        ("bad metadata", matches!(patched(&|v| v[HEADER_LEN] = b'['), Err(Error::Format(_)))),
        ("truncated header", matches!(tagio::read_from(&golden[..10]), Err(Error::Corruption { offset: 10, .. }))),
        (
            "truncated record",
            matches!(tagio::read_from(&golden[..golden.len() - 5]), Err(Error::Corruption { offset, .. }) if offset == rec(2) as u64),
        ),
        ("reserved bytes", matches!(patched(&|v| v[rec(0) + 11] = 7), Err(Error::Corruption { .. }))),
        ("unknown channel", matches!(patched(&|v| v[rec(1) + 8] = 5), Err(Error::Data(_)))),
        (
            "non-monotone timestamps",
            matches!(patched(&|v| v[rec(2)..rec(2) + 8].copy_from_slice(&1u64.to_le_bytes())), Err(Error::Data(m)) if m.contains("record 2")),
        ),
    ];
    let failed: Vec<&str> = fixtures.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    (
        round_trip_failures == 0 && golden_ok && failed.is_empty(),
        format!(
            "{round_trip_failures}/1000 round-trip failures, golden fixture {}, {} corruption fixtures, rejected wrongly: {failed:?}",
            if golden_ok { "ok" } else { "WRONG" },
            fixtures.len()
        ),
    )
}

fn drift_and_strain() -> Outcome {
    let drift = drift_detuning(1.0, 10.0).unwrap();
    let target = 226.0 / 20.0;
    let model = StrainModel::default();
    let span = (strain_detuning(120.0, &model).unwrap() - strain_detuning(0.0, &model).unwrap()).abs();
    (
        rel(drift, target) <= 0.15 && span > 2.0,
        format!("drift {drift} MHz/h vs {target} MHz ({:.1} %), strain span {span} GHz over 0-120 V", 100.0 * rel(drift, target)),
    )
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("1", "heralded g2c sweep follows 2p - p^2", eq1_sweep),
        ("2", "efficiency algebra", efficiency_algebra),
        ("3", "coherence time of the product line", coherence),
        ("4a", "etalon extinction at FSR/2", etalon_extinction),
        ("4b", "etalon filtered fraction", etalon_filtered_fraction),
        ("5", "simulated thermal idler autocorrelation", thermal_autocorrelation),
        ("6", "predicted cross-correlation curve", cross_correlation_curve),
        ("7", "cluster structure", cluster_structure),
        ("8", "signal-idler delay shape", delay_shape),
        ("9", "correlator exactness and speed", correlator),
        ("10", "PTT1 persistence", persistence),
        ("11", "drift and strain tuning", drift_and_strain),
    ];
    let mut failures = 0;
    for (id, name, check) in criteria {
        let start = Instant::now();
        let (ok, detail) = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(outcome) => outcome,
            Err(e) => {
                let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
                (false, format!("panicked: {}", msg.unwrap_or_default()))
            }
        };
        failures += usize::from(!ok);
        println!(
            "{} [{id:>3}] {name}: {detail} ({:.1} s)",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
