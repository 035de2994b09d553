//! Seeded Monte Carlo generation of three-detector time-tag streams.
//!
//! Pairs are emitted at times `t` by a homogeneous Poisson process of rate
//! `R·P` (or, in thermal mode, by a Poisson cluster process whose pair
//! correlation is `1 + exp(−2|τ|/τ0)`). The idler of each pair reaches APD3
//! at `t + jitter`, the signal reaches APD1/APD2 at `t + Δ + jitter` where
//! `Δ = t_signal − t_idler` follows a two-sided exponential. Photons are
//! thinned by arm transmission times detector efficiency; dark counts and
//! non-paralyzable dead time are applied per detector.
//!
//! Every run is driven by a ChaCha8 generator seeded from `(seed, stream)`,
//! so identical inputs give bit-identical streams on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{param, require_fraction, require_non_negative, require_positive, Result};
use crate::model_core::{coherence_time, product_line_fwhm, IrfSpec};
use crate::stream::{StreamSet, APD1, APD2, APD3};

/// Identifier of the random generator, recorded in stream metadata.
pub const RNG_ID: &str = "ChaCha8Rng (rand_chacha 0.9), rand_distr 0.5 samplers";

/// Joint source linewidth, MHz.
pub const SOURCE_LINEWIDTH_MHZ: f64 = 226.0;
/// Idler filter etalon linewidth, MHz.
pub const IDLER_ETALON_FWHM_MHZ: f64 = 274.0;

/// Pair source: generation rate and the shape of the signal–idler delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceParams {
    pub pair_rate_per_s_mw: f64,
    pub pump_power_mw: f64,
    /// Decay constant on the signal-early side (`Δ < 0`).
    pub tau_lead_ns: f64,
    /// Decay constant on the signal-late side (`Δ ≥ 0`).
    pub tau_trail_ns: f64,
    /// When set, pairs are emitted in bursts reproducing single-mode thermal
    /// statistics with this coherence time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thermal_tau0_ns: Option<f64>,
}

impl Default for SourceParams {
    fn default() -> Self {
        let idler_fwhm = product_line_fwhm(SOURCE_LINEWIDTH_MHZ, IDLER_ETALON_FWHM_MHZ).expect("positive widths");
        Self {
            pair_rate_per_s_mw: 2.1e5,
            pump_power_mw: 1.2,
            tau_lead_ns: field_decay_time(SOURCE_LINEWIDTH_MHZ),
            tau_trail_ns: field_decay_time(idler_fwhm),
            thermal_tau0_ns: None,
        }
    }
}

/// `1/(2π·Γ)` in ns for Γ in MHz: the amplitude decay time of a Lorentzian line.
pub fn field_decay_time(fwhm_mhz: f64) -> f64 {
    1e3 / (2.0 * std::f64::consts::PI * fwhm_mhz)
}

/// Coherence time of the filtered idler line (≈ 2.0 ns).
pub fn default_idler_tau0_ns() -> f64 {
    let fwhm = product_line_fwhm(SOURCE_LINEWIDTH_MHZ, IDLER_ETALON_FWHM_MHZ).expect("positive widths");
    coherence_time(fwhm).expect("positive width")
}

impl SourceParams {
    pub fn validate(&self) -> Result<()> {
        require_non_negative("pair rate R", self.pair_rate_per_s_mw)?;
        require_non_negative("pump power", self.pump_power_mw)?;
        for (name, tau) in [("tau_lead", self.tau_lead_ns), ("tau_trail", self.tau_trail_ns)] {
            require_positive(name, tau)?;
            if tau >= 100.0 {
                return Err(param(format!("{name} must be < 100 ns, got {tau}")));
            }
        }
        if let Some(tau0) = self.thermal_tau0_ns {
            require_positive("thermal tau0", tau0)?;
        }
        Ok(())
    }

    /// Generated pairs per second.
    pub fn pair_rate(&self) -> f64 {
        self.pair_rate_per_s_mw * self.pump_power_mw
    }

    /// Same source with the pump rescaled so that `R·P` equals `pairs_per_s`.
    pub fn with_pair_rate(&self, pairs_per_s: f64) -> Self {
        let pump = if self.pump_power_mw > 0.0 { self.pump_power_mw } else { 1.0 };
        Self { pair_rate_per_s_mw: pairs_per_s / pump, pump_power_mw: pump, ..*self }
    }
}

/// Single-photon detector model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorParams {
    pub efficiency: f64,
    /// Per-detection Gaussian timing jitter.
    pub jitter_sigma_ns: f64,
    pub dead_time_ns: f64,
    pub dark_rate_per_s: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            efficiency: 0.60,
            // Two detectors combine to the 0.7304 ns detector-pair response.
            jitter_sigma_ns: IrfSpec::detector_pair().sigma_ns / std::f64::consts::SQRT_2,
            dead_time_ns: 22.0,
            dark_rate_per_s: 250.0,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<()> {
        require_fraction("detector efficiency", self.efficiency)?;
        require_non_negative("jitter sigma", self.jitter_sigma_ns)?;
        require_non_negative("dead time", self.dead_time_ns)?;
        require_non_negative("dark rate", self.dark_rate_per_s)?;
        Ok(())
    }
}

/// One arm of the setup: optics transmission, detector, and an optional HBT splitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmParams {
    pub transmission: f64,
    #[serde(default)]
    pub detector: DetectorParams,
    /// Fraction routed to APD1 (the rest goes to APD2). Only meaningful for the signal arm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splitter: Option<f64>,
}

impl ArmParams {
    /// Signal arm giving 27.2 % total detection probability behind a 50/50 HBT splitter.
    pub fn default_signal() -> Self {
        Self { transmission: 0.272 / 0.60, detector: DetectorParams::default(), splitter: Some(0.5) }
    }

    /// Idler arm giving 6.8 % total detection probability.
    pub fn default_idler() -> Self {
        Self { transmission: 0.068 / 0.60, detector: DetectorParams::default(), splitter: None }
    }

    pub fn validate(&self) -> Result<()> {
        require_fraction("arm transmission", self.transmission)?;
        self.detector.validate()?;
        if let Some(split) = self.splitter {
            require_fraction("splitter ratio", split)?;
        }
        Ok(())
    }

    /// Probability that a photon entering the arm is detected.
    pub fn detection_probability(&self) -> f64 {
        self.transmission * self.detector.efficiency
    }
}

/// Full description of a simulated measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Experiment {
    pub source: SourceParams,
    pub signal_arm: ArmParams,
    pub idler_arm: ArmParams,
    pub duration_s: f64,
    pub resolution_ps: u64,
}

impl Default for Experiment {
    fn default() -> Self {
        Self {
            source: SourceParams::default(),
            signal_arm: ArmParams::default_signal(),
            idler_arm: ArmParams::default_idler(),
            duration_s: 10.0,
            resolution_ps: 1,
        }
    }
}

impl Experiment {
    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.signal_arm.validate()?;
        self.idler_arm.validate()?;
        if self.idler_arm.splitter.is_some() {
            return Err(param("the idler arm has a single detector; remove its splitter"));
        }
        require_positive("duration", self.duration_s)?;
        if self.resolution_ps == 0 {
            return Err(param("resolution must be >= 1 ps"));
        }
        // Timestamps must fit in u64 ticks.
        if self.duration_s * 1e12 / self.resolution_ps as f64 >= 9.0e18 {
            return Err(param("duration too long for the stream resolution"));
        }
        Ok(())
    }

    /// Simulates with RNG stream 0 of `seed`.
    pub fn simulate(&self, seed: u64) -> Result<StreamSet> {
        self.simulate_stream(seed, 0)
    }

    /// Simulates with an explicit RNG stream; `(seed, stream)` fully determines the output.
    pub fn simulate_stream(&self, seed: u64, stream: u64) -> Result<StreamSet> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Ok(generate(self, &mut rng))
    }

    /// Metadata block describing a run, embedded in PTT1 headers.
    pub fn metadata(&self, seed: u64, stream: u64) -> Map<String, Value> {
        let mut map = Map::new();
        map.insert("generator".into(), json!("pairlab simulator"));
        map.insert("experiment".into(), serde_json::to_value(self).expect("plain data serializes"));
        map.insert("seed".into(), json!(seed));
        map.insert("rng_stream".into(), json!(stream));
        map.insert("rng".into(), json!(RNG_ID));
        map.insert("duration_s".into(), json!(self.duration_s));
        map.insert("channels".into(), json!(["APD1", "APD2", "APD3"]));
        map
    }
}

/// Draws `Δ = t_signal − t_idler` from the two-sided exponential density
/// `∝ exp(Δ/τ_lead)` for `Δ < 0` and `∝ exp(−Δ/τ_trail)` for `Δ ≥ 0`.
pub fn sample_pair_delay<R: Rng + ?Sized>(source: &SourceParams, rng: &mut R) -> f64 {
    let trail_mass = source.tau_trail_ns / (source.tau_lead_ns + source.tau_trail_ns);
    let magnitude: f64 = Exp1.sample(rng);
    if rng.random::<f64>() < trail_mass {
        magnitude * source.tau_trail_ns
    } else {
        -magnitude * source.tau_lead_ns
    }
}

/// Runs [`Experiment::simulate`] with the source pair rate replaced by each
/// grid value; grid point `i` uses RNG stream `i` of `seed`.
pub fn simulate_sweep(base: &Experiment, rate_grid: &[f64], seed: u64) -> Result<Vec<StreamSet>> {
    simulate_sweep_with(base, rate_grid, seed, |_, set| Ok(set))
}

/// Like [`simulate_sweep`] but hands each stream set to `analyze` as soon as
/// it is generated, so that large runs need not be held in memory together.
/// Grid points run in parallel; results come back in grid order.
pub fn simulate_sweep_with<T, F>(base: &Experiment, rate_grid: &[f64], seed: u64, analyze: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, StreamSet) -> Result<T> + Sync,
{
    if rate_grid.is_empty() {
        return Err(param("rate grid is empty"));
    }
    for &rate in rate_grid {
        require_non_negative("grid pair rate", rate)?;
    }
    rate_grid
        .par_iter()
        .enumerate()
        .map(|(i, &rate)| {
            let experiment = Experiment { source: base.source.with_pair_rate(rate), ..*base };
            let set = experiment.simulate_stream(seed, i as u64)?;
            analyze(i, set)
        })
        .collect()
}

struct Emission {
    idler_p: f64,
    signal_p: f64,
    // P(idler detected | at least one photon detected), etc.
    both: f64,
    signal_only: f64,
}

impl Emission {
    fn new(experiment: &Experiment) -> Self {
        let s = experiment.signal_arm.detection_probability();
        let i = experiment.idler_arm.detection_probability();
        let any = 1.0 - (1.0 - s) * (1.0 - i);
        let (both, signal_only) = if any > 0.0 { (s * i / any, s * (1.0 - i) / any) } else { (0.0, 0.0) };
        Self { idler_p: i, signal_p: s, both, signal_only }
    }

    fn any(&self) -> f64 {
        1.0 - (1.0 - self.signal_p) * (1.0 - self.idler_p)
    }
}

fn generate(experiment: &Experiment, rng: &mut ChaCha8Rng) -> StreamSet {
    let duration_ns = experiment.duration_s * 1e9;
    let emission = Emission::new(experiment);
    // Only pairs with at least one detected photon are generated: thinning a
    // Poisson (or Poisson-cluster) process by an independent mark is exact.
    let detected_pair_rate_per_ns = experiment.source.pair_rate() * 1e-9 * emission.any();

    let mut raw: [Vec<f64>; 3] = Default::default();
    let pair_times = pair_times(&experiment.source, detected_pair_rate_per_ns, duration_ns, rng);
    let source = experiment.source;
    let signal_arm = experiment.signal_arm;
    let idler_jitter = experiment.idler_arm.detector.jitter_sigma_ns;
    for t in pair_times {
        let u: f64 = rng.random();
        let (signal, idler) = if u < emission.both {
            (true, true)
        } else if u < emission.both + emission.signal_only {
            (true, false)
        } else {
            (false, true)
        };
        if idler {
            raw[APD3 as usize].push(t + jitter(idler_jitter, rng));
        }
        if signal {
            let delay = sample_pair_delay(&source, rng);
            let arrival = t + delay + jitter(signal_arm.detector.jitter_sigma_ns, rng);
            let channel = match signal_arm.splitter {
                Some(split) if rng.random::<f64>() >= split => APD2,
                _ => APD1,
            };
            raw[channel as usize].push(arrival);
        }
    }

    let detectors = [
        (APD1, Some(signal_arm.detector)),
        (APD2, signal_arm.splitter.map(|_| signal_arm.detector)),
        (APD3, Some(experiment.idler_arm.detector)),
    ];
    let ticks_per_ns = 1e3 / experiment.resolution_ps as f64;
    let mut channels = Vec::with_capacity(3);
    for (channel, detector) in detectors {
        let mut times = std::mem::take(&mut raw[channel as usize]);
        let Some(detector) = detector else {
            channels.push(Vec::new());
            continue;
        };
        add_dark_counts(&mut times, detector.dark_rate_per_s, duration_ns, rng);
        let mut ticks: Vec<u64> = times
            .into_iter()
            .filter(|&t| (0.0..duration_ns).contains(&t))
            .map(|t| (t * ticks_per_ns).round() as u64)
            .collect();
        ticks.sort_unstable();
        let dead_ticks = (detector.dead_time_ns * ticks_per_ns).round() as u64;
        apply_dead_time(&mut ticks, dead_ticks);
        channels.push(ticks);
    }
    StreamSet::new(experiment.resolution_ps, experiment.duration_s, channels).expect("simulated streams are sorted")
}

fn jitter(sigma: f64, rng: &mut ChaCha8Rng) -> f64 {
    if sigma > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        sigma * z
    } else {
        0.0
    }
}

fn pair_times(source: &SourceParams, rate_per_ns: f64, duration_ns: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if rate_per_ns <= 0.0 {
        return Vec::new();
    }
    let expected = (rate_per_ns * duration_ns) as usize;
    let mut times = Vec::with_capacity(expected + expected / 64 + 16);
    match source.thermal_tau0_ns {
        None => {
            let mut t = 0.0;
            loop {
                let gap: f64 = Exp1.sample(rng);
                t += gap / rate_per_ns;
                if t >= duration_ns {
                    break;
                }
                times.push(t);
            }
        }
        Some(tau0) => thermal_bursts(tau0, rate_per_ns, duration_ns, rng, &mut times),
    }
    times
}

/// Poisson cluster process with parents at rate `1/τ0`, a Poisson(`λ·τ0`)
/// number of pairs per parent, and exponential offsets of mean `τ0/2`. Its
/// pair correlation is exactly `1 + exp(−2|τ|/τ0)`; only non-empty parents
/// are generated.
fn thermal_bursts(tau0: f64, rate_per_ns: f64, duration_ns: f64, rng: &mut ChaCha8Rng, out: &mut Vec<f64>) {
    let mean_per_parent = rate_per_ns * tau0;
    let occupied_rate = (1.0 - (-mean_per_parent).exp()) / tau0;
    let offset_mean = 0.5 * tau0;
    // Start early enough that bursts straddling t = 0 are present.
    let mut parent = -40.0 * tau0;
    loop {
        let gap: f64 = Exp1.sample(rng);
        parent += gap / occupied_rate;
        if parent >= duration_ns {
            break;
        }
        let members = zero_truncated_poisson(mean_per_parent, rng);
        for _ in 0..members {
            let offset: f64 = Exp1.sample(rng);
            let t = parent + offset * offset_mean;
            if (0.0..duration_ns).contains(&t) {
                out.push(t);
            }
        }
    }
}

fn zero_truncated_poisson(mean: f64, rng: &mut ChaCha8Rng) -> u64 {
    if mean > 10.0 {
        let poisson = Poisson::new(mean).expect("finite positive mean");
        loop {
            let k: f64 = poisson.sample(rng);
            if k >= 1.0 {
                return k as u64;
            }
        }
    }
    // Inversion of P(K = k | K ≥ 1) = e^{-m} m^k / (k! (1 − e^{-m})).
    let u: f64 = rng.random::<f64>() * -(-mean).exp_m1();
    let mut k = 1u64;
    let mut term = mean * (-mean).exp();
    let mut cumulative = term;
    while u > cumulative && term > 0.0 {
        k += 1;
        term *= mean / k as f64;
        cumulative += term;
    }
    k
}

fn add_dark_counts(times: &mut Vec<f64>, rate_per_s: f64, duration_ns: f64, rng: &mut ChaCha8Rng) {
    let mean = rate_per_s * duration_ns * 1e-9;
    if mean <= 0.0 {
        return;
    }
    let count: f64 = Poisson::new(mean).expect("finite positive mean").sample(rng);
    times.extend((0..count as u64).map(|_| rng.random::<f64>() * duration_ns));
}

/// Drops every event closer than `dead_ticks` to the previous accepted event.
pub(crate) fn apply_dead_time(ticks: &mut Vec<u64>, dead_ticks: u64) {
    if dead_ticks == 0 || ticks.is_empty() {
        return;
    }
    let mut last = ticks[0];
    let mut kept = 1;
    for i in 1..ticks.len() {
        let t = ticks[i];
        if t - last >= dead_ticks {
            ticks[kept] = t;
            kept += 1;
            last = t;
        }
    }
    ticks.truncate(kept);
}
