use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use pairlab_core::analytic::{bayes_g2c, efficiencies_from_rates, heralded_g2_prediction, predicted_cross_corr};
use pairlab_core::cluster::{central_fraction, cluster_spacing, drift_detuning, emission_lines, strain_detuning};
use pairlab_core::correlator::{
    cross_correlation_histogram_chunked, heralded_g2c, peak_offset_ps, stream_summary, write_histogram_csv,
};
use pairlab_core::model_core::{
    airy_transmission, coherence_time, filtered_fraction, irf_convolved_autocorr, product_line_fwhm, window_averaged_g2,
};
use pairlab_core::simulator::simulate_sweep_with;
use pairlab_core::{
    tagio, ChannelRoles, EtalonSpec, HeraldedG2Result, IrfSpec, PairSourceOperatingPoint, RateSummary, SpectralLine,
    StreamSet, TimeTagStream, Window, APD1, APD2, APD3,
};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::{
    ClusterArgs, CorrelateArgs, HeraldArgs, ModelCommand, SimulateArgs, SummaryArgs, SweepArgs, CliError,
};

/// Bin width and reach of the histogram used to place the window automatically.
const PEAK_BIN_PS: u64 = 162;
const PEAK_REACH_PS: u64 = 50_000;

fn emit(out: &mut dyn Write, value: &Value) -> Result<(), CliError> {
    writeln!(out, "{value}")?;
    Ok(())
}

fn ns_to_ps(name: &str, ns: f64) -> Result<i64, CliError> {
    if !ns.is_finite() || ns.abs() * 1e3 > i64::MAX as f64 / 2.0 {
        return Err(CliError::config(format!("--{name} must be finite, got {ns}")));
    }
    Ok((ns * 1e3).round() as i64)
}

fn window_ps(window_ns: f64) -> Result<u64, CliError> {
    let ps = ns_to_ps("window-ns", window_ns)?;
    if ps <= 0 {
        return Err(CliError::config(format!("--window-ns must be > 0, got {window_ns}")));
    }
    Ok(ps as u64)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    let file = File::create(path)
        .map_err(|e| CliError { code: crate::EXIT_DATA, kind: "io".into(), message: format!("{}: {e}", path.display()) })?;
    Ok(BufWriter::new(file))
}

fn load(path: &Path) -> Result<StreamSet, CliError> {
    tagio::read_streams(path).map(|(set, _)| set).map_err(|e| {
        let mut err = CliError::from(e);
        err.message = format!("{}: {}", path.display(), err.message);
        err
    })
}

pub(crate) fn simulate(args: SimulateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(d) = args.duration_s {
        cfg.experiment.duration_s = d;
    }
    if let Some(rate) = args.rate_per_s {
        cfg.experiment.source = cfg.experiment.source.with_pair_rate(rate);
    }
    cfg.validate()?;
    let set = cfg.experiment.simulate(cfg.seed)?;
    tagio::write_streams(&args.out, &set, &cfg.experiment.metadata(cfg.seed, 0))?;
    let singles: Vec<usize> = set.streams().iter().map(TimeTagStream::len).collect();
    emit(
        out,
        &json!({
            "out": args.out,
            "seed": cfg.seed,
            "duration_s": set.duration_s(),
            "resolution_ps": set.resolution_ps(),
            "tags_per_channel": singles,
        }),
    )
}

pub(crate) fn correlate(args: CorrelateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if args.chunks == 0 {
        return Err(CliError::config("--chunks must be >= 1"));
    }
    let max_lag = ns_to_ps("max-lag-ns", args.max_lag_ns)?;
    if max_lag <= 0 {
        return Err(CliError::config(format!("--max-lag-ns must be > 0, got {}", args.max_lag_ns)));
    }
    let set = load(&args.input)?;
    let (a, b) = (set.channel(args.a)?, set.channel(args.b)?);
    let hist = cross_correlation_histogram_chunked(a, b, args.bin_ps, max_lag as u64, set.duration_s(), args.chunks)?;
    let mut file = create(&args.out)?;
    write_histogram_csv(&hist, &mut file)?;
    file.flush()?;
    emit(
        out,
        &json!({
            "out": args.out,
            "a": args.a,
            "b": args.b,
            "bin_width_ps": hist.bin_width_ps,
            "bins": hist.counts.len(),
            "n_a": hist.n_a,
            "n_b": hist.n_b,
            "total": hist.total(),
            "peak_lag_ps": hist.peak_lag_ps(),
            "duration_s": hist.duration_s,
        }),
    )
}

/// Heralded g2c with the window centered on `offset_ps`, or on the peak of
/// the herald correlation with the merged signal channels.
fn heralded(
    herald: &TimeTagStream,
    s1: &TimeTagStream,
    s2: &TimeTagStream,
    width_ps: u64,
    offset_ps: Option<i64>,
) -> Result<HeraldedG2Result, CliError> {
    let offset_ps = match offset_ps {
        Some(o) => o,
        None => {
            let merged = TimeTagStream::merge(u8::MAX, &[s1, s2])?;
            peak_offset_ps(herald, &merged, PEAK_BIN_PS, PEAK_REACH_PS)?
        }
    };
    Ok(heralded_g2c(herald, s1, s2, Window { width_ps, offset_ps })?)
}

pub(crate) fn herald_g2(args: HeraldArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let width = window_ps(args.window_ns)?;
    let offset = args.offset_ns.map(|o| ns_to_ps("offset-ns", o)).transpose()?;
    let set = load(&args.input)?;
    let result = heralded(set.channel(args.herald)?, set.channel(args.s1)?, set.channel(args.s2)?, width, offset)?;
    emit(out, &serde_json::to_value(result).expect("plain data"))
}

pub(crate) fn summary(args: SummaryArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let width = window_ps(args.window_ns)?;
    let offset = args.offset_ns.map(|o| ns_to_ps("offset-ns", o)).transpose()?;
    let set = load(&args.input)?;
    let roles = ChannelRoles { signal: args.signal, idler: args.idler };
    let summary = stream_summary(&set, &roles, width, offset, args.eta_det, args.pump_mw)?;
    emit(out, &serde_json::to_value(summary).expect("plain data"))
}

#[derive(Debug, Clone, Copy)]
struct SweepPoint {
    rate: f64,
    result: HeraldedG2Result,
    eq1: f64,
}

pub(crate) fn sweep(args: SweepArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(d) = args.duration_s {
        cfg.experiment.duration_s = d;
    }
    if let Some(w) = args.window_ns {
        cfg.analysis.window_ns = w;
    }
    if let Some(rates) = args.rates {
        cfg.sweep.rates_per_s = rates;
    }
    cfg.sweep.write_streams |= args.write_streams;
    cfg.validate()?;
    if cfg.sweep.rates_per_s.is_empty() {
        return Err(CliError::config("sweep needs at least one rate"));
    }
    std::fs::create_dir_all(&args.out_dir)?;

    let width = window_ps(cfg.analysis.window_ns)?;
    let offset = cfg.analysis.offset_ns.map(|o| ns_to_ps("offset_ns", o)).transpose()?;
    let stream_path = |i: usize| args.out_dir.join(format!("point_{i:03}.ptt1"));
    let outcome = simulate_sweep_with(&cfg.experiment, &cfg.sweep.rates_per_s, cfg.seed, |i, set| {
        let rate = cfg.sweep.rates_per_s[i];
        if cfg.sweep.write_streams {
            let experiment = pairlab_core::Experiment { source: cfg.experiment.source.with_pair_rate(rate), ..cfg.experiment };
            tagio::write_streams(stream_path(i), &set, &experiment.metadata(cfg.seed, i as u64))?;
        }
        let result = heralded(set.channel(APD3)?, set.channel(APD1)?, set.channel(APD2)?, width, offset)
            .map_err(|e| pairlab_core::Error::Undefined(format!("rate {rate}: {}", e.message)))?;
        let op = PairSourceOperatingPoint::from_pair_rate(rate, cfg.analysis.window_ns)?;
        Ok(SweepPoint { rate, result, eq1: heralded_g2_prediction(&op)? })
    })?;

    let csv_path = args.out_dir.join("sweep.csv");
    let mut file = create(&csv_path)?;
    writeln!(file, "rate,g2c,g2c_err,eq1_prediction")?;
    for p in &outcome {
        writeln!(file, "{},{},{},{}", p.rate, p.result.g2c, p.result.statistical_error, p.eq1)?;
    }
    file.flush()?;

    let points: Vec<Value> = outcome
        .iter()
        .enumerate()
        .map(|(i, p)| {
            json!({
                "rate_per_s": p.rate,
                "g2c": p.result.g2c,
                "g2c_err": p.result.statistical_error,
                "eq1_prediction": p.eq1,
                "n_heralds": p.result.n_heralds,
                "n_double": p.result.n_double,
                "offset_ps": p.result.offset_ps,
                "streams": cfg.sweep.write_streams.then(|| stream_path(i)),
            })
        })
        .collect();
    emit(
        out,
        &json!({
            "csv": csv_path,
            "seed": cfg.seed,
            "duration_s": cfg.experiment.duration_s,
            "window_ns": cfg.analysis.window_ns,
            "points": points,
        }),
    )
}

pub(crate) fn cluster(args: ClusterArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = RunConfig::load(args.config.as_deref())?;
    cfg.validate()?;
    let comb = cfg.comb;
    let lines = emission_lines(&comb, args.span_ghz)?;
    let spacing = if comb.is_degenerate() { None } else { Some(cluster_spacing(comb.fsr_s_ghz, comb.fsr_i_ghz)?) };
    let window = match (args.window_ghz, spacing) {
        (Some(w), _) => w,
        (None, Some(s)) => s,
        (None, None) => 2.0 * args.span_ghz,
    };
    let fraction = central_fraction(&lines, window)?;
    let mut file = create(&args.out)?;
    writeln!(file, "detuning_ghz,weight")?;
    for l in &lines {
        writeln!(file, "{},{}", l.detuning_ghz, l.weight)?;
    }
    file.flush()?;
    emit(
        out,
        &json!({
            "out": args.out,
            "lines": lines.len(),
            "cluster_spacing_ghz": spacing,
            "degenerate": comb.is_degenerate(),
            "window_ghz": window,
            "central_fraction": fraction,
        }),
    )
}

pub(crate) fn model(model: ModelCommand, out: &mut dyn Write) -> Result<(), CliError> {
    let value = match model {
        ModelCommand::Eq1 { rp, window_ns } => {
            let op = PairSourceOperatingPoint::from_pair_rate(rp, window_ns)?;
            json!({ "g2c": heralded_g2_prediction(&op)?, "pairs_per_window": op.pairs_per_window() })
        }
        ModelCommand::Eq2 { g_ss, g_ii, g_si } => json!({ "g2c": bayes_g2c(g_ss, g_ii, g_si)? }),
        ModelCommand::CrossCorr { g_ii, rp, window_ns } => {
            let op = PairSourceOperatingPoint::from_pair_rate(rp, window_ns)?;
            json!({ "g2_si": predicted_cross_corr(g_ii, &op)? })
        }
        ModelCommand::Efficiency { n_s, n_i, r, eta_det, pump_mw } => {
            let rates = RateSummary { n_s, n_i, r, duration_s: 1.0 };
            serde_json::to_value(efficiencies_from_rates(&rates, eta_det, pump_mw)?).expect("plain data")
        }
        ModelCommand::Lineshape { fwhm_a_mhz, fwhm_b_mhz, sigma_ns, window_ns } => {
            let fwhm = product_line_fwhm(fwhm_a_mhz, fwhm_b_mhz)?;
            let tau0 = coherence_time(fwhm)?;
            let irf = IrfSpec::new(sigma_ns)?;
            json!({
                "product_fwhm_mhz": fwhm,
                "tau0_ns": tau0,
                "g2_zero": irf_convolved_autocorr(0.0, tau0, irf)?,
                "g2_window": window_averaged_g2(tau0, irf, window_ns / 2.0)?,
            })
        }
        ModelCommand::Etalon { fsr_ghz, fwhm_mhz, source_fwhm_mhz, window_mhz } => {
            let etalon = EtalonSpec::new(fsr_ghz, fwhm_mhz)?;
            let source = SpectralLine::new(0.0, source_fwhm_mhz)?;
            json!({
                "finesse": etalon.finesse(),
                "extinction": airy_transmission(fsr_ghz * 1e3 / 2.0, etalon)?,
                "filtered_fraction": filtered_fraction(source, etalon, window_mhz / 2.0)?,
            })
        }
        ModelCommand::Drift { hours, rate_mhz_per_h } => {
            json!({ "detuning_mhz": drift_detuning(hours, rate_mhz_per_h)? })
        }
        ModelCommand::Strain { voltage_v, config } => {
            let cfg = RunConfig::load(config.as_deref())?;
            cfg.validate()?;
            json!({
                "detuning_ghz": strain_detuning(voltage_v, &cfg.strain)?,
                "span_ghz": cfg.strain.span_ghz()?,
            })
        }
    };
    emit(out, &value)
}
