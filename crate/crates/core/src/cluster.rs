//! Signal/idler cavity mode combs, cluster structure and the tuning/drift models.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{param, require_non_negative, require_positive, Error, Result};
use crate::model_core::lorentzian_weight;

/// Signal and idler mode combs of a doubly resonant cavity.
///
/// Signal modes sit at `offset_s + m·fsr_s` relative to a reference frequency,
/// idler modes at `offset_i + n·fsr_i` relative to `pump − reference`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CombSpec {
    pub fsr_s_ghz: f64,
    pub fsr_i_ghz: f64,
    pub linewidth_s_mhz: f64,
    pub linewidth_i_mhz: f64,
    pub offset_s_mhz: f64,
    pub offset_i_mhz: f64,
    /// Splits every mismatched side line into a doublet of this spacing. Off by default.
    pub side_line_split_mhz: Option<f64>,
}

/// Signal finesse of the source cavity.
pub const SIGNAL_FINESSE: f64 = 36.0;

impl Default for CombSpec {
    fn default() -> Self {
        let linewidth = 16.0e3 / SIGNAL_FINESSE;
        Self {
            fsr_s_ghz: 16.0,
            fsr_i_ghz: 15.0,
            linewidth_s_mhz: linewidth,
            linewidth_i_mhz: linewidth,
            offset_s_mhz: 0.0,
            offset_i_mhz: 0.0,
            side_line_split_mhz: None,
        }
    }
}

impl CombSpec {
    pub fn validate(&self) -> Result<()> {
        require_positive("fsr_s_ghz", self.fsr_s_ghz)?;
        require_positive("fsr_i_ghz", self.fsr_i_ghz)?;
        require_positive("linewidth_s_mhz", self.linewidth_s_mhz)?;
        require_positive("linewidth_i_mhz", self.linewidth_i_mhz)?;
        if !(self.offset_s_mhz.is_finite() && self.offset_i_mhz.is_finite()) {
            return Err(param("comb offsets must be finite"));
        }
        if let Some(split) = self.side_line_split_mhz {
            require_non_negative("side_line_split_mhz", split)?;
        }
        Ok(())
    }

    /// Equal FSRs: every signal mode is doubly resonant and there is no cluster structure.
    pub fn is_degenerate(&self) -> bool {
        self.fsr_s_ghz == self.fsr_i_ghz
    }

    /// Distance from the energy-conservation partner of `signal_mhz` to the nearest idler mode.
    pub fn mismatch_mhz(&self, signal_mhz: f64) -> f64 {
        let fsr_i = self.fsr_i_ghz * 1e3;
        let partner = -signal_mhz - self.offset_i_mhz;
        let r = partner.rem_euclid(fsr_i);
        r.min(fsr_i - r)
    }
}

/// One emission line of a cluster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterLine {
    pub detuning_ghz: f64,
    pub weight: f64,
}

/// Emission lines of every signal mode within `±span_ghz`, sorted by detuning.
///
/// Each line is weighted by the overlap of its partner frequency with the
/// idler comb, a Lorentzian in the mismatch with the idler linewidth.
pub fn emission_lines(comb: &CombSpec, span_ghz: f64) -> Result<Vec<ClusterLine>> {
    comb.validate()?;
    require_positive("span_ghz", span_ghz)?;
    let fsr_s = comb.fsr_s_ghz * 1e3;
    let span = span_ghz * 1e3;
    let m_lo = ((-span - comb.offset_s_mhz) / fsr_s).ceil() as i64;
    let m_hi = ((span - comb.offset_s_mhz) / fsr_s).floor() as i64;
    let mut lines = Vec::new();
    for m in m_lo..=m_hi {
        let nu = comb.offset_s_mhz + m as f64 * fsr_s;
        let mismatch = comb.mismatch_mhz(nu);
        let weight = lorentzian_weight(mismatch, comb.linewidth_i_mhz)?;
        match comb.side_line_split_mhz {
            Some(split) if split > 0.0 && mismatch >= comb.linewidth_i_mhz => {
                for sign in [-0.5, 0.5] {
                    lines.push(ClusterLine { detuning_ghz: (nu + sign * split) * 1e-3, weight: weight / 2.0 });
                }
            }
            _ => lines.push(ClusterLine { detuning_ghz: nu * 1e-3, weight }),
        }
    }
    lines.sort_by(|a, b| a.detuning_ghz.total_cmp(&b.detuning_ghz));
    Ok(lines)
}

/// Detuning period after which the two combs realign.
pub fn cluster_spacing(fsr_s_ghz: f64, fsr_i_ghz: f64) -> Result<f64> {
    require_positive("fsr_s_ghz", fsr_s_ghz)?;
    require_positive("fsr_i_ghz", fsr_i_ghz)?;
    if fsr_s_ghz == fsr_i_ghz {
        return Err(Error::Domain(format!("equal FSRs ({fsr_s_ghz} GHz) give a degenerate cluster structure")));
    }
    Ok(fsr_s_ghz * fsr_i_ghz / (fsr_s_ghz - fsr_i_ghz).abs())
}

/// Weight of the line nearest zero detuning over the total weight within the
/// full-width `window_ghz` centered on zero.
pub fn central_fraction(lines: &[ClusterLine], window_ghz: f64) -> Result<f64> {
    require_non_negative("window_ghz", window_ghz)?;
    let central = lines
        .iter()
        .min_by(|a, b| a.detuning_ghz.abs().total_cmp(&b.detuning_ghz.abs()))
        .ok_or_else(|| param("central_fraction needs at least one line"))?;
    let half = window_ghz / 2.0;
    let mut total: f64 = lines.iter().filter(|l| l.detuning_ghz.abs() <= half).map(|l| l.weight).sum();
    if central.detuning_ghz.abs() > half {
        total += central.weight;
    }
    if !(total > 0.0) {
        return Err(Error::Undefined("lines carry no weight".into()));
    }
    Ok(central.weight / total)
}

/// Piezo strain tuning of the central emission line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StrainModel {
    /// Voltage at which the piezo touches the crystal mount.
    pub contact_voltage_v: f64,
    pub slope_ghz_per_v: f64,
    /// Cap on the magnitude of the tuning.
    pub max_tuning_ghz: f64,
}

/// Upper end of the piezo voltage scan.
pub const STRAIN_VOLTAGE_MAX_V: f64 = 120.0;

impl Default for StrainModel {
    fn default() -> Self {
        Self { contact_voltage_v: 20.0, slope_ghz_per_v: 0.025, max_tuning_ghz: 2.5 }
    }
}

impl StrainModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.contact_voltage_v.is_finite() && self.slope_ghz_per_v.is_finite()) {
            return Err(param("contact voltage and slope must be finite"));
        }
        require_non_negative("max_tuning_ghz", self.max_tuning_ghz)
    }

    /// Tuning over `[0, STRAIN_VOLTAGE_MAX_V]`, i.e. max minus min detuning.
    pub fn span_ghz(&self) -> Result<f64> {
        let lo = strain_detuning(0.0, self)?;
        let hi = strain_detuning(STRAIN_VOLTAGE_MAX_V, self)?;
        Ok((hi - lo).abs())
    }
}

/// Zero below contact, linear above, clamped to `±max_tuning_ghz`.
pub fn strain_detuning(voltage_v: f64, model: &StrainModel) -> Result<f64> {
    model.validate()?;
    if !voltage_v.is_finite() {
        return Err(param(format!("voltage must be finite, got {voltage_v}")));
    }
    if voltage_v <= model.contact_voltage_v {
        return Ok(0.0);
    }
    let raw = model.slope_ghz_per_v * (voltage_v - model.contact_voltage_v);
    Ok(raw.clamp(-model.max_tuning_ghz, model.max_tuning_ghz))
}

/// Linear free-running drift, MHz after `elapsed_h` hours.
pub fn drift_detuning(elapsed_h: f64, rate_mhz_per_h: f64) -> Result<f64> {
    require_non_negative("elapsed_h", elapsed_h)?;
    if !rate_mhz_per_h.is_finite() {
        return Err(param(format!("drift rate must be finite, got {rate_mhz_per_h}")));
    }
    Ok(rate_mhz_per_h * elapsed_h)
}

/// Linear drift plus a random walk reflected into `±bound_mhz`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriftWalk {
    pub rate_mhz_per_h: f64,
    pub step_h: f64,
    /// Standard deviation of one random-walk step.
    pub step_sigma_mhz: f64,
    pub bound_mhz: f64,
}

impl Default for DriftWalk {
    fn default() -> Self {
        Self { rate_mhz_per_h: 10.0, step_h: 0.1, step_sigma_mhz: 5.0, bound_mhz: 50.0 }
    }
}

/// Samples `(hours, detuning_mhz)` pairs from 0 to `duration_h` inclusive.
pub fn drift_trace(walk: &DriftWalk, duration_h: f64, seed: u64) -> Result<Vec<(f64, f64)>> {
    require_non_negative("duration_h", duration_h)?;
    require_positive("step_h", walk.step_h)?;
    require_non_negative("step_sigma_mhz", walk.step_sigma_mhz)?;
    require_non_negative("bound_mhz", walk.bound_mhz)?;
    let steps = (duration_h / walk.step_h).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut excursion = 0.0f64;
    let mut trace = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = k as f64 * walk.step_h;
        if k > 0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            excursion = reflect(excursion + walk.step_sigma_mhz * z, walk.bound_mhz);
        }
        trace.push((t, drift_detuning(t, walk.rate_mhz_per_h)? + excursion));
    }
    Ok(trace)
}

fn reflect(x: f64, bound: f64) -> f64 {
    if bound == 0.0 {
        return 0.0;
    }
    let period = 4.0 * bound;
    let y = (x + bound).rem_euclid(period);
    if y <= 2.0 * bound { y - bound } else { 3.0 * bound - y }
}
