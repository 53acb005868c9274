//! Photon counting at the detector: Poisson statistics, seeded sampling,
//! maximum-likelihood estimation and Monte Carlo checks of the Cramér-Rao bound.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::field::{EstimationTarget, FieldConfig, ReferenceArm};
use crate::fisher::fisher_report;
use crate::tuner::saturating_reference_set;

/// Relative bracket width at which the likelihood search stops.
pub const MLE_TOLERANCE: f64 = 1e-10;

/// Estimates this close to a bracket edge (relative to its width) count as
/// boundary maxima.
const EDGE_FRACTION: f64 = 1e-8;

fn ln_factorial(n: u64) -> f64 {
    if n < 2 {
        0.0
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

pub fn ln_poisson_pmf(mean: f64, n: u64) -> f64 {
    if mean == 0.0 {
        return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if n == 0 {
        return -mean;
    }
    n as f64 * mean.ln() - mean - ln_factorial(n)
}

/// `e^{−λ}·λⁿ/n!`, evaluated in log space.
pub fn poisson_pmf(mean: f64, n: u64) -> f64 {
    ln_poisson_pmf(mean, n).exp()
}

/// `Σ_{n > n_max} P(n)`.
pub fn upper_tail_mass(mean: f64, n_max: usize) -> f64 {
    if mean == 0.0 {
        return 0.0;
    }
    let first = n_max as u64 + 1;
    if (first as f64) <= mean {
        // tail contains the bulk; complement is accurate enough here
        let head: f64 = (0..first).map(|n| poisson_pmf(mean, n)).sum();
        return (1.0 - head).max(0.0);
    }
    let mut term = poisson_pmf(mean, first);
    let mut total = 0.0;
    let mut n = first;
    while term > 0.0 && term > total * 1e-17 {
        total += term;
        n += 1;
        term *= mean / n as f64;
    }
    total
}

/// Stirling/Gaussian approximation with the `|α_d|² − 1/2` mean shift:
/// `exp(−(n − (λ − 1/2))²/(2λ)) / (√λ·√(2π))`.
pub fn gaussian_approx_pmf(mean: f64, n: u64) -> Result<f64> {
    if !(mean > 0.0) || !mean.is_finite() {
        return Err(Error::InvalidInput(format!(
            "Gaussian approximation needs a positive mean, got {mean}"
        )));
    }
    let offset = n as f64 - (mean - 0.5);
    Ok((-offset * offset / (2.0 * mean)).exp() / (mean.sqrt() * (2.0 * PI).sqrt()))
}

/// Seeded realisation of the photon-number measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountSample {
    pub counts: Vec<u64>,
    pub mean_used: f64,
    pub seed: u64,
}

impl CountSample {
    pub fn from_counts(counts: Vec<u64>, mean_used: f64, seed: u64) -> Self {
        Self {
            counts,
            mean_used,
            seed,
        }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn sample_mean(&self) -> f64 {
        self.total() as f64 / self.len() as f64
    }

    pub fn sample_variance(&self) -> f64 {
        let mean = self.sample_mean();
        let ss: f64 = self
            .counts
            .iter()
            .map(|&c| (c as f64 - mean).powi(2))
            .sum();
        ss / (self.len() as f64 - 1.0)
    }
}

/// Seed of the `index`-th independent stream derived from `seed`.
pub fn trial_seed(seed: u64, index: u64) -> u64 {
    seed.wrapping_add(index)
}

pub fn sample_counts(mean: f64, length: usize, seed: u64) -> Result<CountSample> {
    if !(mean >= 0.0) || !mean.is_finite() {
        return Err(Error::InvalidInput(format!("Poisson mean must be >= 0, got {mean}")));
    }
    if mean == 0.0 {
        return Ok(CountSample::from_counts(vec![0; length], mean, seed));
    }
    let dist = Poisson::new(mean)
        .map_err(|e| Error::InvalidInput(format!("Poisson mean {mean}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = (0..length).map(|_| dist.sample(&mut rng) as u64).collect();
    Ok(CountSample::from_counts(counts, mean, seed))
}

/// Poisson log-likelihood up to the parameter-free `−Σ ln nᵢ!` term.
fn log_likelihood(total: f64, samples: f64, mean: f64) -> f64 {
    if mean == 0.0 {
        return if total == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    total * mean.ln() - samples * mean
}

/// Search window that keeps the likelihood unimodal for valid configurations:
/// `[0.1·m, 10·m]` for mass, `[φ_s − π/2, φ_s + π/2]` for the phase.
pub fn default_bracket(cfg: &FieldConfig, target: EstimationTarget) -> (f64, f64) {
    let truth = cfg.particle.target_value(target);
    match target {
        EstimationTarget::Mass => (0.1 * truth, 10.0 * truth),
        EstimationTarget::ScatterPhase => (truth - PI / 2.0, truth + PI / 2.0),
    }
}

/// Parameter value maximising the Poisson likelihood of `sample`, where the
/// detector mean is `|α_d(μ)|²`. Golden-section search on the bracket.
pub fn mle_estimate(
    sample: &CountSample,
    cfg: &FieldConfig,
    target: EstimationTarget,
    search_bracket: (f64, f64),
) -> Result<f64> {
    let (lo, hi) = search_bracket;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidInput(format!("invalid search bracket [{lo}, {hi}]")));
    }
    if sample.is_empty() {
        return Err(Error::InvalidInput("empty count sample".into()));
    }
    let total = sample.total() as f64;
    let samples = sample.len() as f64;
    let objective =
        |mu: f64| log_likelihood(total, samples, cfg.detector_amplitude_at(target, mu).norm_sqr());

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let width = hi - lo;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (objective(c), objective(d));
    while b - a > MLE_TOLERANCE * width {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = objective(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = objective(d);
        }
    }
    let estimate = 0.5 * (a + b);
    let edge = EDGE_FRACTION * width;
    if estimate - lo <= edge || hi - estimate <= edge {
        return Err(Error::NoInteriorMaximum {
            lo,
            hi,
            at: estimate,
            side: if estimate - lo <= edge { "lower" } else { "upper" },
        });
    }
    Ok(estimate)
}

/// Score `∂_μ ln L` of the sample at `value`.
pub fn score(sample: &CountSample, cfg: &FieldConfig, target: EstimationTarget, value: f64) -> f64 {
    let alpha_d = cfg.detector_amplitude_at(target, value);
    let mut particle = cfg.particle;
    match target {
        EstimationTarget::Mass => particle.mass_kda = value,
        EstimationTarget::ScatterPhase => particle.phi_s = value,
    }
    let dmean = 2.0 * (alpha_d.conj() * particle.derivative(target)).re;
    let mean = alpha_d.norm_sqr();
    dmean * (sample.total() as f64 / mean - sample.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub seed: u64,
    pub sample_mean: f64,
    pub estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrbValidationReport {
    pub target: EstimationTarget,
    pub true_value: f64,
    pub seed: u64,
    pub n_trials: usize,
    pub samples_per_trial: usize,
    pub detector_mean: f64,
    pub cfi_photon_number: f64,
    pub mean_estimate: f64,
    pub bias: f64,
    pub empirical_variance: f64,
    pub crb: f64,
    pub ratio_var_over_crb: f64,
    /// Standard error of the ratio from the χ² law of the sample variance.
    pub ratio_standard_error: f64,
    #[serde(skip)]
    pub trials: Vec<TrialRecord>,
}

/// Repeats the photon-counting experiment `n_trials` times and compares the
/// spread of the MLE with `1/(N·F)`.
///
/// Trial `k` draws from stream `seed + k`, and aggregation runs in trial
/// order, so the report does not depend on the worker count.
pub fn crb_validation(
    cfg: &FieldConfig,
    target: EstimationTarget,
    samples_per_trial: usize,
    n_trials: usize,
    seed: u64,
) -> Result<CrbValidationReport> {
    if samples_per_trial == 0 || n_trials < 2 {
        return Err(Error::InvalidInput(
            "need samples_per_trial >= 1 and n_trials >= 2".into(),
        ));
    }
    let report = fisher_report(cfg, target)?;
    let information = report.cfi_photon_number;
    if !(information > 0.0) {
        return Err(Error::NonPositiveFisher(information));
    }
    let truth = cfg.particle.target_value(target);
    let mean = cfg.detector_amplitude_at(target, truth).norm_sqr();
    let bracket = default_bracket(cfg, target);

    let trials: Vec<TrialRecord> = (0..n_trials as u64)
        .into_par_iter()
        .map(|k| {
            let s = trial_seed(seed, k);
            let sample = sample_counts(mean, samples_per_trial, s)?;
            let estimate = mle_estimate(&sample, cfg, target, bracket)?;
            Ok(TrialRecord {
                trial: k,
                seed: s,
                sample_mean: sample.sample_mean(),
                estimate,
            })
        })
        .collect::<Result<_>>()?;

    let n = trials.len() as f64;
    let mean_estimate = trials.iter().map(|t| t.estimate).sum::<f64>() / n;
    let variance = trials
        .iter()
        .map(|t| (t.estimate - mean_estimate).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    let crb = 1.0 / (samples_per_trial as f64 * information);
    let ratio = variance / crb;
    Ok(CrbValidationReport {
        target,
        true_value: truth,
        seed,
        n_trials,
        samples_per_trial,
        detector_mean: mean,
        cfi_photon_number: information,
        mean_estimate,
        bias: mean_estimate - truth,
        empirical_variance: variance,
        crb,
        ratio_var_over_crb: ratio,
        ratio_standard_error: ratio * (2.0 / (n - 1.0)).sqrt(),
        trials,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSensitivityRow {
    pub scattered_power: f64,
    pub mass_kda: f64,
    pub detector_mean: f64,
    pub dmean_dmass: f64,
    /// `d|α_d|²/d|α_s|²`; absent at `|α_s|² = 0` where it diverges.
    pub dmean_dpower: Option<f64>,
}

/// Detector mean as a function of the scattered photon number `|α_s|²`.
///
/// With `optimize_reference` the reference arm is set once, at the baseline,
/// to the smallest saturating magnitude not below `|α_r|`, taking the first
/// saturating phase. Otherwise the baseline reference (if any) is kept.
pub fn mean_sensitivity_scan(
    cfg_base: &FieldConfig,
    scattered_power_grid: &[f64],
    optimize_reference: bool,
) -> Result<Vec<MeanSensitivityRow>> {
    let mut cfg = *cfg_base;
    if optimize_reference {
        let solution = saturating_reference_set(cfg_base, EstimationTarget::Mass)?;
        let mag = solution.min_mag_i.max(cfg_base.alpha_r.norm());
        let phi = solution
            .solutions_at(mag)
            .first()
            .copied()
            .ok_or_else(|| Error::NotEstimable(format!("no saturating reference phase at |alpha_i| = {mag}")))?;
        cfg.reference = Some(ReferenceArm::new(mag, phi)?);
    }
    let s = cfg.particle.scale_per_kda;
    let unit = crate::field::ComplexAmplitude::from_polar(1.0, cfg.particle.phi_s);
    scattered_power_grid
        .iter()
        .map(|&power| {
            if !(power >= 0.0) || !power.is_finite() {
                return Err(Error::InvalidInput(format!("scattered power must be >= 0, got {power}")));
            }
            let mass = power.sqrt() / s;
            let alpha_d = cfg.detector_amplitude_at(EstimationTarget::Mass, mass);
            let along = (alpha_d.conj() * unit).re;
            let dmean_dmass = 2.0 * s * along;
            let dmean_dpower = if power > 0.0 {
                Some(along / power.sqrt())
            } else {
                // |α_d|² = |c|² + 2√p·Re[c*·e^{iφ}] + p
                let c = cfg.detector_amplitude_at(EstimationTarget::Mass, 0.0);
                ((c.conj() * unit).re.abs() <= cfg.tolerance()).then_some(1.0)
            };
            Ok(MeanSensitivityRow {
                scattered_power: power,
                mass_kda: mass,
                detector_mean: alpha_d.norm_sqr(),
                dmean_dmass,
                dmean_dpower,
            })
        })
        .collect()
}
