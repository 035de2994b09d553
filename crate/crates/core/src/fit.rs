//! Fitting a jitter-broadened two-sided exponential to a cross-correlation histogram.

use serde::{Deserialize, Serialize};

use crate::correlator::CorrelationHistogram;
use crate::error::{param, require_non_negative, Error, Result};
use crate::model_core::exp_gauss_conv;

/// Fitted shape of a signal–idler correlation peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSidedExpFit {
    pub tau_lead_ns: f64,
    pub tau_trail_ns: f64,
    /// Position of the exponential cusp before broadening.
    pub center_ns: f64,
    /// Total number of correlated pairs under the peak.
    pub amplitude: f64,
    /// Flat accidental background per bin.
    pub background: f64,
    /// Poisson deviance at the optimum.
    pub deviance: f64,
}

/// Expected counts per unit lag of a unit-area two-sided exponential
/// convolved with a Gaussian of width `sigma_ns`, at `lag_ns − center_ns`.
pub fn two_sided_exp_density(lag_ns: f64, center_ns: f64, tau_lead_ns: f64, tau_trail_ns: f64, sigma_ns: f64) -> f64 {
    let x = lag_ns - center_ns;
    let norm = tau_lead_ns + tau_trail_ns;
    if sigma_ns == 0.0 {
        return if x >= 0.0 { (-x / tau_trail_ns).exp() } else { (x / tau_lead_ns).exp() } / norm;
    }
    (exp_gauss_conv(x, tau_trail_ns, sigma_ns) + exp_gauss_conv(-x, tau_lead_ns, sigma_ns)) / norm
}

/// Maximum-likelihood (Poisson) fit of `background + amplitude·density·bin`
/// to the histogram, with the Gaussian response width `sigma_ns` held fixed.
pub fn fit_two_sided_exponential(hist: &CorrelationHistogram, sigma_ns: f64) -> Result<TwoSidedExpFit> {
    require_non_negative("sigma", sigma_ns)?;
    if hist.counts.len() < 8 {
        return Err(param("histogram too short to fit"));
    }
    let bin_ns = hist.bin_width_ps as f64 * 1e-3;
    let lags: Vec<f64> = hist.bin_centers_ps().map(|l| l as f64 * 1e-3).collect();
    let counts: Vec<f64> = hist.counts.iter().map(|&c| c as f64).collect();

    // Background from the outer fifth of the histogram on each side.
    let edge = (counts.len() / 5).max(1);
    let outer: f64 = counts[..edge].iter().chain(&counts[counts.len() - edge..]).sum();
    let background0 = outer / (2 * edge) as f64;
    let excess: f64 = counts.iter().map(|c| c - background0).sum::<f64>().max(1.0);
    let peak = lags[hist.counts.iter().enumerate().max_by_key(|(_, &c)| c).map(|(i, _)| i).unwrap_or(0)];

    // Parameters: ln τ_lead, ln τ_trail, center, ln amplitude, ln background
    let model = |p: &[f64; 5]| -> Vec<f64> {
        let (tl, tt, c, amp, bg) = (p[0].exp(), p[1].exp(), p[2], p[3].exp(), p[4].exp());
        lags.iter().map(|&l| bg + amp * bin_ns * two_sided_exp_density(l, c, tl, tt, sigma_ns)).collect()
    };
    let deviance = |p: &[f64; 5]| -> f64 {
        model(p)
            .iter()
            .zip(&counts)
            .map(|(&mu, &n)| {
                let mu = mu.max(1e-300);
                2.0 * (mu - n + if n > 0.0 { n * (n / mu).ln() } else { 0.0 })
            })
            .sum()
    };

    let start = [0.0, 0.0, peak, excess.ln(), background0.max(1e-3).ln()];
    let steps = [0.5, 0.5, 0.5, 0.3, 0.5];
    let mut best = nelder_mead(&deviance, start, steps, 4_000, 1e-10);
    // Restart from the optimum to escape a collapsed simplex.
    for _ in 0..3 {
        best = nelder_mead(&deviance, best.0, [0.1, 0.1, 0.1, 0.05, 0.1], 4_000, 1e-12);
    }
    let (p, dev) = best;
    if !dev.is_finite() {
        return Err(Error::Undefined("fit did not converge".into()));
    }
    Ok(TwoSidedExpFit {
        tau_lead_ns: p[0].exp(),
        tau_trail_ns: p[1].exp(),
        center_ns: p[2],
        amplitude: p[3].exp(),
        background: p[4].exp(),
        deviance: dev,
    })
}

/// Downhill simplex minimization with the standard coefficients.
pub(crate) fn nelder_mead<const N: usize, F: Fn(&[f64; N]) -> f64>(
    f: &F,
    start: [f64; N],
    steps: [f64; N],
    max_iter: usize,
    tol: f64,
) -> ([f64; N], f64) {
    let mut simplex: Vec<([f64; N], f64)> = Vec::with_capacity(N + 1);
    simplex.push((start, f(&start)));
    for i in 0..N {
        let mut v = start;
        v[i] += steps[i];
        simplex.push((v, f(&v)));
    }
    let eval = |x: [f64; N]| (x, f(&x));
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[N].1);
        if (worst - best).abs() <= tol * (best.abs() + worst.abs() + 1e-300) {
            break;
        }
        let mut centroid = [0.0; N];
        for (v, _) in &simplex[..N] {
            for i in 0..N {
                centroid[i] += v[i] / N as f64;
            }
        }
        let along = |t: f64| {
            let mut x = [0.0; N];
            for i in 0..N {
                x[i] = centroid[i] + t * (simplex[N].0[i] - centroid[i]);
            }
            x
        };
        let reflected = eval(along(-1.0));
        if reflected.1 < simplex[0].1 {
            let expanded = eval(along(-2.0));
            simplex[N] = if expanded.1 < reflected.1 { expanded } else { reflected };
        } else if reflected.1 < simplex[N - 1].1 {
            simplex[N] = reflected;
        } else {
            let contracted = if reflected.1 < simplex[N].1 { eval(along(-0.5)) } else { eval(along(0.5)) };
            if contracted.1 < simplex[N].1.min(reflected.1) {
                simplex[N] = contracted;
            } else {
                let anchor = simplex[0].0;
                for entry in simplex.iter_mut().skip(1) {
                    let mut x = [0.0; N];
                    for i in 0..N {
                        x[i] = anchor[i] + 0.5 * (entry.0[i] - anchor[i]);
                    }
                    *entry = eval(x);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0]
}
