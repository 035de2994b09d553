//! Closed-form predictions for the heralded source: multi-pair contamination,
//! the Bayes relation between correlation functions, and the rate/efficiency
//! algebra used to characterize a measured source.

use serde::{Deserialize, Serialize};

use crate::error::{param, require_fraction, require_non_negative, require_positive, Error, Result};

/// Operating point of a pair source far below threshold.
///
/// `pair_rate_per_s_mw · pump_power_mw` is the generated pair rate; multiplied
/// by the coincidence window it gives the mean pair number per window `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSourceOperatingPoint {
    pub pair_rate_per_s_mw: f64,
    pub pump_power_mw: f64,
    pub window_ns: f64,
}

impl PairSourceOperatingPoint {
    pub fn new(pair_rate_per_s_mw: f64, pump_power_mw: f64, window_ns: f64) -> Result<Self> {
        let op = Self { pair_rate_per_s_mw, pump_power_mw, window_ns };
        op.validate()?;
        Ok(op)
    }

    /// Operating point from a total pair rate (pairs/s), with the pump power set to 1 mW.
    pub fn from_pair_rate(pairs_per_s: f64, window_ns: f64) -> Result<Self> {
        Self::new(pairs_per_s, 1.0, window_ns)
    }

    pub fn validate(&self) -> Result<()> {
        require_non_negative("pair rate R", self.pair_rate_per_s_mw)?;
        require_positive("pump power", self.pump_power_mw)?;
        require_positive("coincidence window", self.window_ns)?;
        Ok(())
    }

    /// Generated pairs per second.
    pub fn pair_rate(&self) -> f64 {
        self.pair_rate_per_s_mw * self.pump_power_mw
    }

    /// Mean number of pairs per coincidence window, `p = R·P·Δt`.
    pub fn pairs_per_window(&self) -> f64 {
        self.pair_rate() * self.window_ns * 1e-9
    }
}

/// Singles and coincidence rates of a two-arm measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    /// Signal singles, counts/s.
    pub n_s: f64,
    /// Idler singles, counts/s.
    pub n_i: f64,
    /// Detected signal–idler pairs, pairs/s.
    pub r: f64,
    /// Integration time the rates were measured over, s.
    pub duration_s: f64,
}

impl RateSummary {
    pub fn validate(&self) -> Result<()> {
        require_non_negative("n_s", self.n_s)?;
        require_non_negative("n_i", self.n_i)?;
        require_non_negative("r", self.r)?;
        require_non_negative("duration", self.duration_s)?;
        Ok(())
    }
}

/// Efficiencies inferred from a [`RateSummary`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencySummary {
    pub eta_s: f64,
    pub eta_i: f64,
    pub eta_heralded: f64,
    /// Inferred pair generation rate per pump power, pairs/(s·mW).
    pub r_inferred: f64,
    /// Detected pairs per pump power, pairs/(s·mW).
    pub r_normalized: f64,
}

/// Heralded autocorrelation with full efficiency and no dark counts,
/// `g2c = 2p − p²` with `p = R·P·Δt`.
pub fn heralded_g2_prediction(op: &PairSourceOperatingPoint) -> Result<f64> {
    op.validate()?;
    let p = op.pairs_per_window();
    // allow for rounding in R·P·Δt at the p = 1 boundary
    if p > 1.0 + 1e-12 {
        return Err(Error::Domain(format!("R·P·Δt = {p} exceeds one pair per window")));
    }
    let p = p.min(1.0);
    Ok(2.0 * p - p * p)
}

/// Conditional autocorrelation from the unconditioned auto- and cross-correlations,
/// `g2c = g2_ss·g2_ii / g2_si`.
pub fn bayes_g2c(g2_ss: f64, g2_ii: f64, g2_si: f64) -> Result<f64> {
    if !(g2_si > 0.0) || !g2_si.is_finite() {
        return Err(Error::Domain(format!("cross-correlation must be positive, got {g2_si}")));
    }
    require_non_negative("g2_ss", g2_ss)?;
    require_non_negative("g2_ii", g2_ii)?;
    Ok(g2_ss * g2_ii / g2_si)
}

/// Cross-correlation expected at an operating point when the idler
/// autocorrelation stands in for the signal one: `g2_ii² / g2c(p)`.
pub fn predicted_cross_corr(g2_ii: f64, op: &PairSourceOperatingPoint) -> Result<f64> {
    require_non_negative("g2_ii", g2_ii)?;
    let g2c = heralded_g2_prediction(op)?;
    if g2c == 0.0 {
        return Err(Error::Domain("predicted g2c is zero: cross-correlation diverges".into()));
    }
    Ok(g2_ii * g2_ii / g2c)
}

/// Arm efficiencies, heralding efficiency and pair rates from measured rates.
pub fn efficiencies_from_rates(rates: &RateSummary, eta_det: f64, pump_power_mw: f64) -> Result<EfficiencySummary> {
    rates.validate()?;
    if !(eta_det > 0.0 && eta_det <= 1.0) {
        return Err(param(format!("detector efficiency must lie in (0, 1], got {eta_det}")));
    }
    require_positive("pump power", pump_power_mw)?;
    if rates.r == 0.0 {
        return Err(Error::Undefined("no coincidences: efficiencies are undefined".into()));
    }
    if rates.r > rates.n_s.min(rates.n_i) {
        return Err(Error::Inconsistent(format!(
            "coincidence rate {} exceeds a singles rate (n_s {}, n_i {})",
            rates.r, rates.n_s, rates.n_i
        )));
    }
    let eta_s = rates.r / rates.n_i;
    Ok(EfficiencySummary {
        eta_s,
        eta_i: rates.r / rates.n_s,
        eta_heralded: eta_s / eta_det,
        r_inferred: rates.n_i * rates.n_s / (rates.r * pump_power_mw),
        r_normalized: rates.r / pump_power_mw,
    })
}

/// Forward model of the expected rates: thinned pair rate plus darks in each arm,
/// true coincidences plus the flat accidental background `n_s·n_i·Δt`.
///
/// Rates are per second; `duration_s` of the result is a nominal 1 s.
pub fn expected_rates(
    source: &PairSourceOperatingPoint,
    arm_eff_s: f64,
    arm_eff_i: f64,
    dark_s: f64,
    dark_i: f64,
) -> Result<RateSummary> {
    source.validate()?;
    require_fraction("signal arm efficiency", arm_eff_s)?;
    require_fraction("idler arm efficiency", arm_eff_i)?;
    require_non_negative("signal dark rate", dark_s)?;
    require_non_negative("idler dark rate", dark_i)?;
    let rp = source.pair_rate();
    let n_s = arm_eff_s * rp + dark_s;
    let n_i = arm_eff_i * rp + dark_i;
    let accidentals = n_s * n_i * source.window_ns * 1e-9;
    Ok(RateSummary { n_s, n_i, r: arm_eff_s * arm_eff_i * rp + accidentals, duration_s: 1.0 })
}
