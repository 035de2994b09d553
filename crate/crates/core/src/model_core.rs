//! Lineshapes and correlation-function mathematics shared by the other modules.
//!
//! Units: frequencies in MHz (etalon FSR in GHz), times in ns.

use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::error::{param, require_non_negative, require_positive, Result};
use crate::quad;

/// Ratio between the FWHM and the standard deviation of a Gaussian.
pub const GAUSSIAN_FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

/// Measured FWHM of the detector-pair timing cross-correlation, in ns.
pub const DETECTOR_PAIR_JITTER_FWHM_NS: f64 = 1.72;

/// Relative tolerance used by every quadrature in this module.
pub const QUAD_REL_TOL: f64 = 1e-9;

/// A Lorentzian spectral line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralLine {
    pub center_mhz: f64,
    pub fwhm_mhz: f64,
}

impl SpectralLine {
    pub fn new(center_mhz: f64, fwhm_mhz: f64) -> Result<Self> {
        if !center_mhz.is_finite() {
            return Err(param("line center must be finite"));
        }
        require_positive("line fwhm", fwhm_mhz)?;
        Ok(Self { center_mhz, fwhm_mhz })
    }

    /// Peak-normalized weight at absolute frequency `freq_mhz`.
    pub fn weight(&self, freq_mhz: f64) -> f64 {
        lorentzian_unchecked(freq_mhz - self.center_mhz, self.fwhm_mhz)
    }
}

/// A Fabry–Pérot etalon described by its free spectral range and linewidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtalonSpec {
    pub fsr_ghz: f64,
    pub fwhm_mhz: f64,
}

impl EtalonSpec {
    /// The temperature-stabilized idler filter etalon: 12.8 GHz FSR, 274 MHz FWHM.
    pub const IDLER_FILTER: EtalonSpec = EtalonSpec { fsr_ghz: 12.8, fwhm_mhz: 274.0 };

    pub fn new(fsr_ghz: f64, fwhm_mhz: f64) -> Result<Self> {
        let spec = Self { fsr_ghz, fwhm_mhz };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("etalon fsr", self.fsr_ghz)?;
        require_positive("etalon fwhm", self.fwhm_mhz)?;
        if self.fsr_ghz * 1e3 <= self.fwhm_mhz {
            return Err(param(format!(
                "etalon finesse must exceed 1 (fsr {} GHz, fwhm {} MHz)",
                self.fsr_ghz, self.fwhm_mhz
            )));
        }
        Ok(())
    }

    pub fn finesse(&self) -> f64 {
        self.fsr_ghz * 1e3 / self.fwhm_mhz
    }
}

/// Gaussian instrument response function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrfSpec {
    pub sigma_ns: f64,
}

impl IrfSpec {
    pub fn new(sigma_ns: f64) -> Result<Self> {
        require_non_negative("irf sigma", sigma_ns)?;
        Ok(Self { sigma_ns })
    }

    /// Builds the IRF from the FWHM of the measured response.
    pub fn from_fwhm(fwhm_ns: f64) -> Result<Self> {
        Self::new(fwhm_ns / GAUSSIAN_FWHM_PER_SIGMA)
    }

    /// Detector-pair response corresponding to the 1.72 ns measured jitter,
    /// read as a FWHM (sigma ≈ 0.7304 ns).
    pub fn detector_pair() -> Self {
        Self { sigma_ns: DETECTOR_PAIR_JITTER_FWHM_NS / GAUSSIAN_FWHM_PER_SIGMA }
    }

    pub const IDEAL: IrfSpec = IrfSpec { sigma_ns: 0.0 };
}

fn lorentzian_unchecked(detuning: f64, fwhm: f64) -> f64 {
    let x = 2.0 * detuning / fwhm;
    1.0 / (1.0 + x * x)
}

/// Peak-normalized Lorentzian `1 / (1 + (2·detuning/fwhm)²)`.
pub fn lorentzian_weight(detuning_mhz: f64, fwhm_mhz: f64) -> Result<f64> {
    require_positive("fwhm", fwhm_mhz)?;
    Ok(lorentzian_unchecked(detuning_mhz, fwhm_mhz))
}

/// Coherence time `1/(π·Γ)` of Lorentzian light, in ns for Γ in MHz.
pub fn coherence_time(fwhm_mhz: f64) -> Result<f64> {
    require_positive("fwhm", fwhm_mhz)?;
    Ok(1e3 / (std::f64::consts::PI * fwhm_mhz))
}

/// FWHM of the pointwise product of two co-centered Lorentzians.
///
/// With half widths `a` and `b` the half-maximum condition reduces to
/// `x² + (a² + b²)·x − a²b² = 0` in `x = ν²`; the positive root gives the width.
pub fn product_line_fwhm(fwhm_a_mhz: f64, fwhm_b_mhz: f64) -> Result<f64> {
    require_positive("fwhm_a", fwhm_a_mhz)?;
    if !(fwhm_b_mhz > 0.0) {
        return Err(param(format!("fwhm_b must be > 0, got {fwhm_b_mhz}")));
    }
    if fwhm_b_mhz.is_infinite() {
        return Ok(fwhm_a_mhz);
    }
    let a2 = (0.5 * fwhm_a_mhz).powi(2);
    let b2 = (0.5 * fwhm_b_mhz).powi(2);
    let s = a2 + b2;
    // Rationalized root avoids cancellation when one width dominates.
    let x = 2.0 * a2 * b2 / (s + (s * s + 4.0 * a2 * b2).sqrt());
    Ok(2.0 * x.sqrt())
}

/// Ideal single-mode thermal autocorrelation `1 + exp(−2|τ|/τ0)`.
pub fn ideal_thermal_autocorr(tau_ns: f64, tau0_ns: f64) -> Result<f64> {
    require_positive("tau0", tau0_ns)?;
    Ok(1.0 + (-2.0 * tau_ns.abs() / tau0_ns).exp())
}

/// Zero-delay autocorrelation `1 + 1/N` of light spread over `n_modes` modes.
pub fn multimode_autocorr_peak(n_modes: u32) -> Result<f64> {
    if n_modes == 0 {
        return Err(param("number of modes must be >= 1"));
    }
    Ok(1.0 + 1.0 / f64::from(n_modes))
}

/// Scaled complementary error function `exp(z²)·erfc(z)`, for `z ≥ 0`.
pub(crate) fn erfcx(z: f64) -> f64 {
    debug_assert!(z >= 0.0);
    if z < 2.0 {
        return (z * z).exp() * erfc(z);
    }
    // Continued fraction, evaluated backwards:
    // erfcx(z) = 1/√π · 1/(z + (1/2)/(z + 1/(z + (3/2)/(z + ...))))
    let mut tail = z;
    for k in (1..=60).rev() {
        tail = z + (k as f64 * 0.5) / tail;
    }
    1.0 / (tail * std::f64::consts::PI.sqrt())
}

/// Convolution of the one-sided exponential `exp(−x/τ)·[x ≥ 0]` with a
/// unit-area Gaussian of width `sigma` (both in the same time unit).
///
/// `sigma` must be strictly positive; the `sigma = 0` limit is the bare exponential.
pub fn exp_gauss_conv(x: f64, tau: f64, sigma: f64) -> f64 {
    let z = (sigma * sigma / tau - x) / (sigma * std::f64::consts::SQRT_2);
    if z >= 0.0 {
        0.5 * (-x * x / (2.0 * sigma * sigma)).exp() * erfcx(z)
    } else {
        0.5 * (sigma * sigma / (2.0 * tau * tau) - x / tau).exp() * erfc(z)
    }
}

/// Thermal autocorrelation seen through a Gaussian instrument response:
/// `1 + (exp(−2|·|/τ0) ∗ IRF)(τ)`, in closed form via `erfc`.
pub fn irf_convolved_autocorr(tau_ns: f64, tau0_ns: f64, irf: IrfSpec) -> Result<f64> {
    require_positive("tau0", tau0_ns)?;
    require_non_negative("irf sigma", irf.sigma_ns)?;
    if irf.sigma_ns == 0.0 {
        return ideal_thermal_autocorr(tau_ns, tau0_ns);
    }
    let decay = 0.5 * tau0_ns;
    let bunching = exp_gauss_conv(tau_ns, decay, irf.sigma_ns) + exp_gauss_conv(-tau_ns, decay, irf.sigma_ns);
    Ok(1.0 + bunching)
}

/// Mean of [`irf_convolved_autocorr`] over `[−half_window, +half_window]`.
pub fn window_averaged_g2(tau0_ns: f64, irf: IrfSpec, half_window_ns: f64) -> Result<f64> {
    require_positive("tau0", tau0_ns)?;
    require_non_negative("irf sigma", irf.sigma_ns)?;
    if half_window_ns.is_infinite() && half_window_ns > 0.0 {
        return Ok(1.0);
    }
    require_positive("half window", half_window_ns)?;
    let bunching = |t: f64| irf_convolved_autocorr(t, tau0_ns, irf).map_or(f64::NAN, |g| g - 1.0);
    // The integrand is even; integrate one side.
    let area = 2.0 * quad::integrate_with_breaks(bunching, 0.0, half_window_ns, &[tau0_ns, 4.0 * tau0_ns], QUAD_REL_TOL);
    Ok(1.0 + area / (2.0 * half_window_ns))
}

/// Airy transmission of a lossless etalon,
/// `1 / (1 + (2F/π)²·sin²(π·δ/FSR))`.
pub fn airy_transmission(detuning_mhz: f64, etalon: EtalonSpec) -> Result<f64> {
    etalon.validate()?;
    Ok(airy_unchecked(detuning_mhz, etalon))
}

fn airy_unchecked(detuning_mhz: f64, etalon: EtalonSpec) -> f64 {
    let coefficient = (2.0 * etalon.finesse() / std::f64::consts::PI).powi(2);
    let phase = std::f64::consts::PI * detuning_mhz / (etalon.fsr_ghz * 1e3);
    1.0 / (1.0 + coefficient * phase.sin().powi(2))
}

/// Fraction of a Lorentzian source's photons inside `±half_window` that the
/// etalon transmits: `∫L·T / ∫L` over the window. The etalon is assumed
/// co-centered with the source line.
pub fn filtered_fraction(source: SpectralLine, etalon: EtalonSpec, half_window_mhz: f64) -> Result<f64> {
    require_positive("source fwhm", source.fwhm_mhz)?;
    require_positive("half window", half_window_mhz)?;
    if etalon.fwhm_mhz.is_infinite() {
        return Ok(1.0);
    }
    etalon.validate()?;
    let breaks = [source.fwhm_mhz, etalon.fwhm_mhz];
    let line = |d: f64| lorentzian_unchecked(d, source.fwhm_mhz);
    let passed = quad::integrate_with_breaks(|d| line(d) * airy_unchecked(d, etalon), 0.0, half_window_mhz, &breaks, QUAD_REL_TOL);
    let total = quad::integrate_with_breaks(line, 0.0, half_window_mhz, &breaks, QUAD_REL_TOL);
    Ok(passed / total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    // Independent oracle: direct numerical convolution of the ideal bunching
    // term with a Gaussian kernel.
    fn convolved_by_quadrature(tau: f64, tau0: f64, sigma: f64) -> f64 {
        let kernel = |u: f64| {
            let ideal = (-2.0 * u.abs() / tau0).exp();
            let g = (-(tau - u).powi(2) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
            ideal * g
        };
        let span = 12.0 * sigma + 20.0 * tau0;
        1.0 + quad::integrate_with_breaks(kernel, tau - span, tau + span, &[0.0, tau], 1e-12)
    }

    #[test]
    fn lorentzian_examples() {
        assert_eq!(lorentzian_weight(0.0, 226.0).unwrap(), 1.0);
        assert!(close(lorentzian_weight(113.0, 226.0).unwrap(), 0.5, 1e-15));
        assert!(close(lorentzian_weight(1000.0, 444.0).unwrap(), 0.046_969_171_358_755_1, 1e-12));
        assert!(lorentzian_weight(1.0, 0.0).is_err());
        assert!(lorentzian_weight(1.0, -3.0).is_err());
    }

    #[test]
    fn lorentzian_even_and_monotone() {
        let mut prev = f64::INFINITY;
        for i in 0..500 {
            let d = i as f64 * 3.7;
            let w = lorentzian_weight(d, 226.0).unwrap();
            assert_eq!(w, lorentzian_weight(-d, 226.0).unwrap());
            assert!(w < prev);
            prev = w;
        }
    }

    #[test]
    fn coherence_time_examples() {
        assert!(close(coherence_time(159.15).unwrap(), 2.000_062_118_654, 1e-9));
        assert!(close(coherence_time(226.0).unwrap(), 1.408_450_823_822, 1e-9));
        assert!(coherence_time(1e12).unwrap() < 1e-9);
        assert!(coherence_time(0.0).is_err());
    }

    #[test]
    fn product_line_examples() {
        assert!(close(product_line_fwhm(226.0, 274.0).unwrap(), 159.110_342_798_857, 1e-9));
        let equal = product_line_fwhm(100.0, 100.0).unwrap();
        assert!(close(equal, 100.0 * (2f64.sqrt() - 1.0).sqrt(), 1e-10));
        assert!(close(equal, 64.359_425_290_558, 1e-9));
        assert_eq!(product_line_fwhm(100.0, f64::INFINITY).unwrap(), 100.0);
        assert!(close(product_line_fwhm(100.0, 1e9).unwrap(), 100.0, 1e-4));
        assert!(product_line_fwhm(0.0, 1.0).is_err());
        assert!(product_line_fwhm(1.0, -1.0).is_err());
    }

    #[test]
    fn product_line_is_half_maximum_of_product() {
        let (a, b) = (226.0, 274.0);
        let w = product_line_fwhm(a, b).unwrap();
        let at_half = lorentzian_unchecked(0.5 * w, a) * lorentzian_unchecked(0.5 * w, b);
        assert!(close(at_half, 0.5, 1e-12));
    }

    #[test]
    fn product_line_symmetric_and_narrower() {
        for &a in &[1.0, 10.0, 226.0, 500.0, 1e4] {
            for &b in &[2.0, 55.0, 274.0, 3e3] {
                let ab = product_line_fwhm(a, b).unwrap();
                assert!(close(ab, product_line_fwhm(b, a).unwrap(), 1e-9 * ab));
                assert!(ab <= a.min(b));
            }
        }
    }

    #[test]
    fn ideal_autocorr_examples() {
        assert_eq!(ideal_thermal_autocorr(0.0, 2.0).unwrap(), 2.0);
        assert!(close(ideal_thermal_autocorr(1e4, 2.0).unwrap(), 1.0, 1e-15));
        assert!(close(ideal_thermal_autocorr(2.0, 2.0).unwrap(), 1.0 + (-2f64).exp(), 1e-15));
        assert!(close(ideal_thermal_autocorr(-2.0, 2.0).unwrap(), 1.135_335_283_236_613, 1e-12));
        assert!(ideal_thermal_autocorr(0.0, 0.0).is_err());
    }

    #[test]
    fn multimode_examples() {
        assert_eq!(multimode_autocorr_peak(1).unwrap(), 2.0);
        assert!(close(multimode_autocorr_peak(3).unwrap(), 4.0 / 3.0, 1e-15));
        assert!(close(multimode_autocorr_peak(u32::MAX).unwrap(), 1.0, 1e-9));
        assert!(multimode_autocorr_peak(0).is_err());
    }

    #[test]
    fn erfcx_reference_values() {
        // mpmath, 30 digits
        for (z, expect) in [
            (0.5, 0.61569034419292587),
            (1.9, 0.26650937366167266),
            (2.0, 0.25539567631050574),
            (5.0, 0.11070463773306863),
            (30.0, 0.018795888861416751),
        ] {
            assert!(((erfcx(z) - expect) / expect).abs() < 1e-13, "{z}: {}", erfcx(z));
        }
        assert!((erfcx(1e6) * 1e6 * std::f64::consts::PI.sqrt() - 1.0).abs() < 1e-11);
    }

    #[test]
    fn irf_sigma_zero_is_ideal() {
        for i in -100..=100 {
            let tau = i as f64 * 0.137;
            let a = irf_convolved_autocorr(tau, 2.0, IrfSpec::IDEAL).unwrap();
            let b = ideal_thermal_autocorr(tau, 2.0).unwrap();
            assert!(close(a, b, 1e-9));
        }
    }

    #[test]
    fn irf_small_sigma_approaches_ideal() {
        for &tau in &[-3.0, -0.5, 0.7, 2.0] {
            let a = irf_convolved_autocorr(tau, 2.0, IrfSpec::new(1e-4).unwrap()).unwrap();
            assert!(close(a, ideal_thermal_autocorr(tau, 2.0).unwrap(), 1e-3));
        }
    }

    #[test]
    fn irf_closed_form_matches_quadrature() {
        let sigma = 0.7304;
        for i in -40..=40 {
            let tau = i as f64 * 0.25;
            let closed = irf_convolved_autocorr(tau, 2.0, IrfSpec::new(sigma).unwrap()).unwrap();
            let numeric = convolved_by_quadrature(tau, 2.0, sigma);
            assert!(((closed - numeric) / numeric).abs() < 1e-9, "tau {tau}: {closed} vs {numeric}");
        }
    }

    #[test]
    fn irf_examples() {
        let irf = IrfSpec::new(0.7304).unwrap();
        // frozen from an mpmath quadrature oracle
        assert!(close(irf_convolved_autocorr(0.0, 2.0, irf).unwrap(), 1.607_342_455_665, 1e-9));
        assert!(close(irf_convolved_autocorr(1.0, 2.0, irf).unwrap(), 1.418_211_621_356, 1e-9));
        assert!(close(irf_convolved_autocorr(3.0, 2.0, irf).unwrap(), 1.065_000_552_352, 1e-9));
        let wide = IrfSpec::new(1e4).unwrap();
        for &tau in &[0.0, 5.0, -50.0] {
            assert!(close(irf_convolved_autocorr(tau, 2.0, wide).unwrap(), 1.0, 1e-3));
        }
        assert!(irf_convolved_autocorr(0.0, 2.0, IrfSpec { sigma_ns: -1.0 }).is_err());
    }

    #[test]
    fn detector_pair_sigma() {
        assert!(close(IrfSpec::detector_pair().sigma_ns, 0.730_416_748_248, 1e-9));
        assert!(close(IrfSpec::from_fwhm(1.72).unwrap().sigma_ns, 0.730_416_748_248, 1e-9));
    }

    #[test]
    fn bunching_area_is_conserved() {
        // ∫ (g − 1) dτ = τ0 with and without the IRF.
        for &sigma in &[0.0, 0.3, 0.7304, 2.0] {
            let irf = IrfSpec::new(sigma).unwrap();
            let area = quad::integrate_with_breaks(
                |t| irf_convolved_autocorr(t, 2.0, irf).unwrap() - 1.0,
                -80.0,
                80.0,
                &[-2.0, 0.0, 2.0],
                1e-12,
            );
            assert!(close(area, 2.0, 1e-8), "sigma {sigma}: {area}");
        }
    }

    #[test]
    fn window_average_examples() {
        let ideal = window_averaged_g2(2.0, IrfSpec::IDEAL, 4.0).unwrap();
        let analytic = 1.0 + 2.0 * (1.0 - (-4f64).exp()) / 8.0;
        assert!(close(ideal, analytic, 1e-10));
        assert!(close(ideal, 1.245_421_090_278, 1e-9));
        let jitter = window_averaged_g2(2.0, IrfSpec::new(0.7304).unwrap(), 4.0).unwrap();
        assert!(close(jitter, 1.244_021_301_097, 1e-8));
        assert!(close(jitter, 1.243, 0.002));
        assert_eq!(window_averaged_g2(2.0, IrfSpec::IDEAL, f64::INFINITY).unwrap(), 1.0);
        assert!(window_averaged_g2(2.0, IrfSpec::IDEAL, 0.0).is_err());
    }

    #[test]
    fn window_average_tends_to_one() {
        let irf = IrfSpec::new(0.7304).unwrap();
        let mut prev = f64::INFINITY;
        for &h in &[1.0, 4.0, 16.0, 64.0, 1e3, 1e5] {
            let v = window_averaged_g2(2.0, irf, h).unwrap();
            assert!(v < prev && v > 1.0);
            prev = v;
        }
        assert!(prev - 1.0 < 1e-4);
    }

    #[test]
    fn airy_examples() {
        let etalon = EtalonSpec::IDLER_FILTER;
        assert_eq!(airy_transmission(0.0, etalon).unwrap(), 1.0);
        assert!(close(airy_transmission(12_800.0, etalon).unwrap(), 1.0, 1e-12));
        let half = airy_transmission(6_400.0, etalon).unwrap();
        assert!(close(half, 1.129_354_250_98e-3, 1e-12));
        assert!(EtalonSpec::new(0.1, 200.0).is_err());
        assert!(airy_transmission(0.0, EtalonSpec { fsr_ghz: -1.0, fwhm_mhz: 1.0 }).is_err());
    }

    #[test]
    fn airy_is_periodic() {
        let etalon = EtalonSpec::IDLER_FILTER;
        for i in -50..50 {
            let d = i as f64 * 173.3;
            let a = airy_transmission(d, etalon).unwrap();
            let b = airy_transmission(d + 12_800.0, etalon).unwrap();
            assert!(close(a, b, 1e-9));
        }
    }

    #[test]
    fn filtered_fraction_examples() {
        let source = SpectralLine::new(0.0, 226.0).unwrap();
        // frozen from an mpmath quadrature oracle of ∫L·T/∫L over ±200 MHz
        let f = filtered_fraction(source, EtalonSpec::IDLER_FILTER, 200.0).unwrap();
        assert!(close(f, 0.758_799_866_988, 1e-7), "{f}");
        let transparent = EtalonSpec { fsr_ghz: 12.8, fwhm_mhz: f64::INFINITY };
        assert_eq!(filtered_fraction(source, transparent, 200.0).unwrap(), 1.0);
        let tiny = filtered_fraction(source, EtalonSpec::IDLER_FILTER, 1e-3).unwrap();
        assert!(close(tiny, 1.0, 1e-9));
        assert!(filtered_fraction(source, EtalonSpec::IDLER_FILTER, 0.0).is_err());
    }
}
