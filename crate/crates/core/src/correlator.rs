//! Correlation analysis of time-tag streams.
//!
//! Lags are `t_b − t_a` in picoseconds. Histogram bins are centered on
//! integer multiples of the bin width: a lag `L` falls in bin
//! `k = round(L / w)`, with exact halves rounded away from zero. This keeps
//! bin `0` centered on zero delay and makes the histogram of `(b, a)` the exact
//! mirror of the histogram of `(a, b)`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{efficiencies_from_rates, EfficiencySummary, RateSummary};
use crate::error::{param, require_positive, Error, Result};
use crate::stream::{StreamSet, TimeTagStream};

/// Coincidence window used throughout the heralded analysis: 98 × 81 ps.
pub const DEFAULT_WINDOW_PS: u64 = 7_938;

/// Binned `t_b − t_a` differences with the totals needed for normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationHistogram {
    pub bin_width_ps: u64,
    /// Bins on each side of the zero-lag bin; `counts.len() == 2·half_bins + 1`.
    pub half_bins: usize,
    pub counts: Vec<u64>,
    pub n_a: u64,
    pub n_b: u64,
    pub duration_s: f64,
}

impl CorrelationHistogram {
    /// Covered lag interval `(min, max)` in ps.
    pub fn lag_range_ps(&self) -> (f64, f64) {
        let edge = (self.half_bins as f64 + 0.5) * self.bin_width_ps as f64;
        (-edge, edge)
    }

    pub fn bin_center_ps(&self, index: usize) -> i64 {
        (index as i64 - self.half_bins as i64) * self.bin_width_ps as i64
    }

    pub fn bin_centers_ps(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.counts.len()).map(|i| self.bin_center_ps(i))
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Center of the most populated bin (the first one on ties).
    pub fn peak_lag_ps(&self) -> i64 {
        let (index, _) = self
            .counts
            .iter()
            .enumerate()
            .fold((self.half_bins, 0), |best, (i, &c)| if c > best.1 { (i, c) } else { best });
        self.bin_center_ps(index)
    }

    /// The same histogram with lags negated, i.e. the histogram of `(b, a)`.
    pub fn mirrored(&self) -> Self {
        let mut counts = self.counts.clone();
        counts.reverse();
        Self { counts, n_a: self.n_b, n_b: self.n_a, ..self.clone() }
    }
}

/// Normalized correlation `g²(τ)` with Poisson errors per bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Curve {
    pub lag_ps: Vec<i64>,
    pub g2: Vec<f64>,
    pub g2_err: Vec<f64>,
}

/// Coincidence count for a window centered at `offset_ps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceResult {
    pub count: u64,
    /// Coincidences per second.
    pub rate: f64,
    pub window_ps: u64,
    pub offset_ps: i64,
}

/// Conditional autocorrelation `P_d / (P_s1·P_s2)` from three detectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeraldedG2Result {
    pub p_s1: f64,
    pub p_s2: f64,
    pub p_d: f64,
    pub g2c: f64,
    pub n_heralds: u64,
    pub n_s1: u64,
    pub n_s2: u64,
    pub n_double: u64,
    pub statistical_error: f64,
    pub window_ps: u64,
    pub offset_ps: i64,
}

/// Detection window relative to each herald or reference tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    /// Full width; the window is `offset ± width/2`, both ends inclusive.
    pub width_ps: u64,
    pub offset_ps: i64,
}

impl Window {
    pub fn centered(width_ps: u64) -> Self {
        Self { width_ps, offset_ps: 0 }
    }

    fn validate(&self) -> Result<()> {
        if self.width_ps == 0 {
            return Err(param("coincidence window must be > 0"));
        }
        Ok(())
    }

    /// Whether a lag (ps) falls in the window.
    #[inline]
    pub fn contains(&self, lag_ps: i64) -> bool {
        let d = lag_ps as i128 - self.offset_ps as i128;
        2 * d.abs() <= self.width_ps as i128
    }

    /// Inclusive tick bounds `[lo, hi]` of lags inside the window.
    fn tick_bounds(&self, resolution_ps: u64) -> (i64, i64) {
        let res = resolution_ps as i128;
        let twice_lo = 2 * self.offset_ps as i128 - self.width_ps as i128;
        let twice_hi = 2 * self.offset_ps as i128 + self.width_ps as i128;
        // smallest tick lag L with 2·L·res ≥ twice_lo, largest with 2·L·res ≤ twice_hi
        let lo = div_ceil(twice_lo, 2 * res);
        let hi = div_floor(twice_hi, 2 * res);
        (lo as i64, hi as i64)
    }
}

fn div_floor(a: i128, b: i128) -> i128 {
    let q = a / b;
    if (a % b != 0) && ((a < 0) != (b < 0)) {
        q - 1
    } else {
        q
    }
}

fn div_ceil(a: i128, b: i128) -> i128 {
    -div_floor(-a, b)
}

fn common_resolution(a: &TimeTagStream, b: &TimeTagStream) -> Result<u64> {
    if a.resolution_ps() != b.resolution_ps() {
        return Err(param(format!(
            "stream resolutions differ: {} ps vs {} ps",
            a.resolution_ps(),
            b.resolution_ps()
        )));
    }
    Ok(a.resolution_ps())
}

#[derive(Debug, Clone, Copy)]
struct Binning {
    resolution_ps: i64,
    bin_width_ps: i64,
    half_bins: i64,
    // largest |lag| in ticks that still lands in a bin
    reach_ticks: i64,
}

impl Binning {
    fn new(resolution_ps: u64, bin_width_ps: u64, max_lag_ps: u64) -> Result<Self> {
        if bin_width_ps == 0 {
            return Err(param("bin width must be > 0"));
        }
        if max_lag_ps < bin_width_ps {
            return Err(param(format!("max lag {max_lag_ps} ps is smaller than the bin width {bin_width_ps} ps")));
        }
        let half_bins = max_lag_ps.div_ceil(bin_width_ps);
        if half_bins > 50_000_000 {
            return Err(param("histogram would exceed 10^8 bins"));
        }
        let half_bins = half_bins as i64;
        let (res, w) = (resolution_ps as i64, bin_width_ps as i64);
        // |L|·res must satisfy 2|L|·res < (2K + 1)·w
        let limit = (2 * half_bins + 1) * w;
        let reach_ticks = (limit - 1) / (2 * res);
        Ok(Self { resolution_ps: res, bin_width_ps: w, half_bins, reach_ticks })
    }

    fn len(&self) -> usize {
        (2 * self.half_bins + 1) as usize
    }

    /// Bin index of a lag in ticks, `None` if outside the histogram.
    #[inline]
    fn index(&self, lag_ticks: i64) -> Option<usize> {
        let lag_ps = lag_ticks * self.resolution_ps;
        let k = (2 * lag_ps.abs() + self.bin_width_ps) / (2 * self.bin_width_ps);
        if k > self.half_bins {
            return None;
        }
        let signed = if lag_ps < 0 { -k } else { k };
        Some((signed + self.half_bins) as usize)
    }
}

fn accumulate(a: &[u64], b: &[u64], binning: Binning, counts: &mut [u64]) {
    let reach = binning.reach_ticks as u64;
    let mut lo = 0usize;
    for &ta in a {
        let start = ta.saturating_sub(reach);
        while lo < b.len() && b[lo] < start {
            lo += 1;
        }
        let end = ta.saturating_add(reach);
        for &tb in &b[lo..] {
            if tb > end {
                break;
            }
            let lag = tb as i64 - ta as i64;
            if let Some(i) = binning.index(lag) {
                counts[i] += 1;
            }
        }
    }
}

/// Histogram of all pairwise differences `t_b − t_a` within `±max_lag_ps`,
/// computed in one sliding-window pass over both streams.
pub fn cross_correlation_histogram(
    a: &TimeTagStream,
    b: &TimeTagStream,
    bin_width_ps: u64,
    max_lag_ps: u64,
    duration_s: f64,
) -> Result<CorrelationHistogram> {
    cross_correlation_histogram_chunked(a, b, bin_width_ps, max_lag_ps, duration_s, 1)
}

/// [`cross_correlation_histogram`] split into `chunks` slices of `a` that are
/// histogrammed in parallel and summed. The result does not depend on `chunks`.
pub fn cross_correlation_histogram_chunked(
    a: &TimeTagStream,
    b: &TimeTagStream,
    bin_width_ps: u64,
    max_lag_ps: u64,
    duration_s: f64,
    chunks: usize,
) -> Result<CorrelationHistogram> {
    let resolution = common_resolution(a, b)?;
    let binning = Binning::new(resolution, bin_width_ps, max_lag_ps)?;
    if !(duration_s.is_finite() && duration_s >= 0.0) {
        return Err(param("duration must be finite and >= 0"));
    }
    let (ta, tb) = (a.timestamps(), b.timestamps());
    let chunk_len = ta.len().div_ceil(chunks.max(1)).max(1);
    let counts = if chunks <= 1 || ta.len() <= chunk_len {
        let mut counts = vec![0; binning.len()];
        accumulate(ta, tb, binning, &mut counts);
        counts
    } else {
        ta.par_chunks(chunk_len)
            .map(|part| {
                let first = part[0].saturating_sub(binning.reach_ticks as u64);
                let skip = tb.partition_point(|&t| t < first);
                let mut counts = vec![0; binning.len()];
                accumulate(part, &tb[skip..], binning, &mut counts);
                counts
            })
            .reduce(
                || vec![0; binning.len()],
                |mut acc, part| {
                    acc.iter_mut().zip(part).for_each(|(x, y)| *x += y);
                    acc
                },
            )
    };
    Ok(CorrelationHistogram {
        bin_width_ps,
        half_bins: binning.half_bins as usize,
        counts,
        n_a: ta.len() as u64,
        n_b: tb.len() as u64,
        duration_s,
    })
}

/// Autocorrelation histogram of one stream, excluding each tag paired with itself.
pub fn autocorrelation_histogram(
    a: &TimeTagStream,
    bin_width_ps: u64,
    max_lag_ps: u64,
    duration_s: f64,
) -> Result<CorrelationHistogram> {
    let mut hist = cross_correlation_histogram_chunked(a, a, bin_width_ps, max_lag_ps, duration_s, rayon::current_num_threads())?;
    let zero = hist.half_bins;
    hist.counts[zero] -= a.len() as u64;
    Ok(hist)
}

/// `g2_k = counts_k·T / (n_a·n_b·w)` with errors `√counts_k` scaled the same way.
pub fn normalize_g2(hist: &CorrelationHistogram) -> Result<G2Curve> {
    if !(hist.duration_s > 0.0) {
        return Err(Error::Undefined("histogram duration is zero".into()));
    }
    if hist.n_a == 0 || hist.n_b == 0 {
        return Err(Error::Undefined("cannot normalize: a stream is empty".into()));
    }
    let scale = hist.duration_s / (hist.n_a as f64 * hist.n_b as f64 * hist.bin_width_ps as f64 * 1e-12);
    Ok(G2Curve {
        lag_ps: hist.bin_centers_ps().collect(),
        g2: hist.counts.iter().map(|&c| c as f64 * scale).collect(),
        g2_err: hist.counts.iter().map(|&c| (c as f64).sqrt() * scale).collect(),
    })
}

/// Mean of the normalized `g²` over bins whose centers lie in `±half_window_ps`.
pub fn integrated_window_g2(hist: &CorrelationHistogram, half_window_ps: u64) -> Result<f64> {
    let reach = hist.half_bins as u64 * hist.bin_width_ps;
    if half_window_ps > reach {
        return Err(param(format!(
            "half window {half_window_ps} ps exceeds the histogram reach of {reach} ps"
        )));
    }
    let curve = normalize_g2(hist)?;
    let selected: Vec<f64> = curve
        .lag_ps
        .iter()
        .zip(&curve.g2)
        .filter(|(lag, _)| lag.unsigned_abs() <= half_window_ps)
        .map(|(_, &g)| g)
        .collect();
    Ok(selected.iter().sum::<f64>() / selected.len() as f64)
}

/// One-to-one coincidences between `a` and `b` within `window`.
///
/// Tags of `a` are visited in time order; each takes the unmatched `b` tag
/// nearest to `t_a + offset` inside the window (the earlier one on ties).
/// Every tag takes part in at most one coincidence.
pub fn coincidences(a: &TimeTagStream, b: &TimeTagStream, window: Window, duration_s: f64) -> Result<CoincidenceResult> {
    window.validate()?;
    let resolution = common_resolution(a, b)?;
    let (lo, hi) = window.tick_bounds(resolution);
    let (ta, tb) = (a.timestamps(), b.timestamps());
    let mut used = vec![false; tb.len()];
    let mut start = 0usize;
    let mut count = 0u64;
    for &t in ta {
        let t = t as i64;
        while start < tb.len() && (tb[start] as i64 - t) < lo {
            start += 1;
        }
        let center = 2 * t as i128 * resolution as i128 + 2 * window.offset_ps as i128;
        let mut best: Option<(i128, usize)> = None;
        for (j, &u) in tb.iter().enumerate().skip(start) {
            if u as i64 - t > hi {
                break;
            }
            if used[j] {
                continue;
            }
            let distance = (2 * u as i128 * resolution as i128 - center).abs();
            if best.is_none_or(|(d, _)| distance < d) {
                best = Some((distance, j));
            }
        }
        if let Some((_, j)) = best {
            used[j] = true;
            count += 1;
        }
        while start < tb.len() && used[start] {
            start += 1;
        }
    }
    let rate = if duration_s > 0.0 { count as f64 / duration_s } else { 0.0 };
    Ok(CoincidenceResult { count, rate, window_ps: window.width_ps, offset_ps: window.offset_ps })
}

/// 68.27 % one-sided Poisson upper limit for zero observed events.
const ZERO_COUNT_UPPER: f64 = 1.841;

/// Heralded autocorrelation: for every herald, whether `s1` and/or `s2` have
/// at least one tag inside the window (non-number-resolving detection).
pub fn heralded_g2c(herald: &TimeTagStream, s1: &TimeTagStream, s2: &TimeTagStream, window: Window) -> Result<HeraldedG2Result> {
    window.validate()?;
    let resolution = common_resolution(herald, s1)?;
    common_resolution(herald, s2)?;
    let (lo, hi) = window.tick_bounds(resolution);
    let mut scan1 = WindowScan::new(s1.timestamps());
    let mut scan2 = WindowScan::new(s2.timestamps());
    let (mut n1, mut n2, mut nd) = (0u64, 0u64, 0u64);
    for &t in herald.timestamps() {
        let from = t as i128 + lo as i128;
        let to = t as i128 + hi as i128;
        let hit1 = scan1.any_in(from, to);
        let hit2 = scan2.any_in(from, to);
        n1 += u64::from(hit1);
        n2 += u64::from(hit2);
        nd += u64::from(hit1 && hit2);
    }
    let n = herald.len() as u64;
    if n == 0 {
        return Err(Error::Undefined("no herald events".into()));
    }
    if n1 == 0 || n2 == 0 {
        return Err(Error::Undefined("no heralded detections on one of the signal detectors".into()));
    }
    let nf = n as f64;
    let (p1, p2, pd) = (n1 as f64 / nf, n2 as f64 / nf, nd as f64 / nf);
    let g2c = pd / (p1 * p2);
    let statistical_error = if nd == 0 {
        ZERO_COUNT_UPPER * nf / (n1 as f64 * n2 as f64)
    } else {
        // Delta method for the multinomial counts (n_d ⊂ n_1, n_2):
        // Var(ln g) = (1−P_d)/n_d − (1−P_1)/n_1 − (1−P_2)/n_2 + 2(P_d − P_1P_2)/(N·P_1P_2)
        let var_ln = (1.0 - pd) / nd as f64 - (1.0 - p1) / n1 as f64 - (1.0 - p2) / n2 as f64
            + 2.0 * (pd - p1 * p2) / (nf * p1 * p2);
        g2c * var_ln.max(0.0).sqrt()
    };
    Ok(HeraldedG2Result {
        p_s1: p1,
        p_s2: p2,
        p_d: pd,
        g2c,
        n_heralds: n,
        n_s1: n1,
        n_s2: n2,
        n_double: nd,
        statistical_error,
        window_ps: window.width_ps,
        offset_ps: window.offset_ps,
    })
}

/// Monotone cursor answering "is there a tag in `[from, to]`" for
/// non-decreasing query windows.
struct WindowScan<'a> {
    ticks: &'a [u64],
    next: usize,
}

impl<'a> WindowScan<'a> {
    fn new(ticks: &'a [u64]) -> Self {
        Self { ticks, next: 0 }
    }

    fn any_in(&mut self, from: i128, to: i128) -> bool {
        while self.next < self.ticks.len() && (self.ticks[self.next] as i128) < from {
            self.next += 1;
        }
        self.next < self.ticks.len() && self.ticks[self.next] as i128 <= to
    }
}

/// Position of the cross-correlation peak between `a` and `b`, in ps.
pub fn peak_offset_ps(a: &TimeTagStream, b: &TimeTagStream, bin_width_ps: u64, max_lag_ps: u64) -> Result<i64> {
    let hist = cross_correlation_histogram(a, b, bin_width_ps, max_lag_ps, 0.0)?;
    if hist.total() == 0 {
        return Ok(0);
    }
    Ok(hist.peak_lag_ps())
}

/// Which channels play which role in a heralded measurement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelRoles {
    pub signal: Vec<u8>,
    pub idler: u8,
}

impl Default for ChannelRoles {
    fn default() -> Self {
        Self { signal: vec![crate::stream::APD1, crate::stream::APD2], idler: crate::stream::APD3 }
    }
}

/// Rates, coincidences and derived efficiencies of a measured stream set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSummary {
    pub singles_per_s: Vec<f64>,
    pub coincidence: CoincidenceResult,
    pub rates: RateSummary,
    pub efficiencies: EfficiencySummary,
}

/// Bin width and reach used to locate the herald–signal peak.
const PEAK_SEARCH_BIN_PS: u64 = 162;
const PEAK_SEARCH_REACH_PS: u64 = 50_000;

/// Singles and coincidence rates followed by the efficiency algebra.
///
/// Signal channels are merged into one stream before matching against the
/// idler. With `offset_ps = None` the window is centered on the idler→signal
/// correlation peak.
pub fn stream_summary(
    set: &StreamSet,
    roles: &ChannelRoles,
    window_ps: u64,
    offset_ps: Option<i64>,
    eta_det: f64,
    pump_power_mw: f64,
) -> Result<StreamSummary> {
    require_positive("duration", set.duration_s())?;
    if roles.signal.is_empty() {
        return Err(param("at least one signal channel is required"));
    }
    let idler = set.channel(roles.idler)?;
    let signal_streams = roles.signal.iter().map(|&c| set.channel(c)).collect::<Result<Vec<_>>>()?;
    let signal = TimeTagStream::merge(u8::MAX, &signal_streams)?;
    let offset_ps = match offset_ps {
        Some(o) => o,
        None => peak_offset_ps(idler, &signal, PEAK_SEARCH_BIN_PS, PEAK_SEARCH_REACH_PS)?,
    };
    let coincidence = coincidences(idler, &signal, Window { width_ps: window_ps, offset_ps }, set.duration_s())?;
    let duration = set.duration_s();
    let rates = RateSummary {
        n_s: signal.len() as f64 / duration,
        n_i: idler.len() as f64 / duration,
        r: coincidence.rate,
        duration_s: duration,
    };
    let efficiencies = efficiencies_from_rates(&rates, eta_det, pump_power_mw)?;
    let singles_per_s = set.streams().iter().map(|s| s.len() as f64 / duration).collect();
    Ok(StreamSummary { singles_per_s, coincidence, rates, efficiencies })
}

/// Writes `lag_ps,counts,g2,g2_err` rows. `g2` columns are empty when the
/// histogram cannot be normalized.
pub fn write_histogram_csv<W: Write>(hist: &CorrelationHistogram, mut out: W) -> Result<()> {
    writeln!(out, "lag_ps,counts,g2,g2_err")?;
    let curve = normalize_g2(hist).ok();
    for (i, (lag, count)) in hist.bin_centers_ps().zip(&hist.counts).enumerate() {
        match &curve {
            Some(c) => writeln!(out, "{lag},{count},{},{}", c.g2[i], c.g2_err[i])?,
            None => writeln!(out, "{lag},{count},,")?,
        }
    }
    Ok(())
}
