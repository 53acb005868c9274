//! Quantum and classical Fisher information of single-mode coherent states.
//!
//! For the pure coherent state at the detector the QFI depends only on the
//! derivative of the scattered label, `4|∂_μ α_s|²`. Phase averaging the
//! source, or equivalently counting photons, keeps only the component of the
//! derivative along the detector label itself:
//!
//! ```text
//! F_p = F_c,photon = 4·Re²[(α_d*/|α_d|)·∂_μ α_s] = 4|∂_μ α_s|²·cos²(ψ − χ)
//! ```
//!
//! with `ψ = arg ∂_μ α_s` and `χ = arg α_d`. The truncated Fock sums in this
//! module recompute the same quantities from their definitions and serve as
//! oracles for the closed forms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{
    detector_amplitude, target_derivative, ComplexAmplitude, EstimationTarget, FieldConfig, Setup,
    ENERGY_TOLERANCE,
};
use crate::photonstats::{ln_poisson_pmf, poisson_pmf, upper_tail_mass};

/// Largest Poisson tail mass a truncated Fock sum may drop.
pub const TAIL_LIMIT: f64 = 1e-12;

/// Default central-difference step for [`cfi_numeric_oracle`], in target units.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherReport {
    pub target: EstimationTarget,
    pub setup: Setup,
    pub qfi_coherent: f64,
    pub qfi_phase_averaged: f64,
    pub cfi_photon_number: f64,
    pub psi: f64,
    pub chi: f64,
    pub saturation_ratio: f64,
}

/// Diagonal of the symmetric logarithmic derivative of a phase-averaged
/// coherent state, together with the Poisson weights it is diagonal against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SldSpectrum {
    pub truncation_n: usize,
    pub diagonal: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SldSpectrum {
    /// `Σ P_n·L_n`, zero for an exact SLD.
    pub fn mean(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.diagonal)
            .map(|(p, l)| p * l)
            .sum()
    }

    /// `Tr(ρ·L²)`.
    pub fn second_moment(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.diagonal)
            .map(|(p, l)| p * l * l)
            .sum()
    }
}

pub fn qfi_coherent(dalpha: ComplexAmplitude) -> f64 {
    4.0 * dalpha.norm_sqr()
}

fn ensure_not_vacuum(alpha_d: ComplexAmplitude, tol: f64) -> Result<()> {
    if !(alpha_d.norm() > tol) {
        return Err(Error::UndefinedPhase(format!(
            "detector field {alpha_d} is the vacuum; the vacuum has no defined phase"
        )));
    }
    Ok(())
}

fn mismatch_angles_tol(
    alpha_d: ComplexAmplitude,
    dalpha: ComplexAmplitude,
    tol: f64,
) -> Result<(f64, f64)> {
    ensure_not_vacuum(alpha_d, tol)?;
    if dalpha.norm() == 0.0 {
        return Err(Error::UndefinedPhase(
            "parameter derivative vanishes; psi is undefined".into(),
        ));
    }
    Ok((dalpha.phase(), alpha_d.phase()))
}

/// `(ψ, χ) = (arg ∂_μ α_s, arg α_d)`, both in `[0, 2π)`.
pub fn mismatch_angles(alpha_d: ComplexAmplitude, dalpha: ComplexAmplitude) -> Result<(f64, f64)> {
    mismatch_angles_tol(alpha_d, dalpha, ENERGY_TOLERANCE)
}

fn photon_number_information(
    alpha_d: ComplexAmplitude,
    dalpha: ComplexAmplitude,
    tol: f64,
) -> Result<f64> {
    ensure_not_vacuum(alpha_d, tol)?;
    let projected = (alpha_d.conj() * dalpha).re / alpha_d.norm();
    Ok(4.0 * projected * projected)
}

/// QFI of the phase-averaged coherent state with label `alpha_d`.
pub fn qfi_phase_averaged(alpha_d: ComplexAmplitude, dalpha: ComplexAmplitude) -> Result<f64> {
    photon_number_information(alpha_d, dalpha, ENERGY_TOLERANCE)
}

/// CFI of photon counting on the coherent state `alpha_d`. Shares its
/// evaluation with [`qfi_phase_averaged`], so the two agree bit for bit.
pub fn cfi_photon_number(alpha_d: ComplexAmplitude, dalpha: ComplexAmplitude) -> Result<f64> {
    photon_number_information(alpha_d, dalpha, ENERGY_TOLERANCE)
}

pub fn fisher_report(cfg: &FieldConfig, target: EstimationTarget) -> Result<FisherReport> {
    let alpha_d = detector_amplitude(cfg)?;
    let dalpha = target_derivative(cfg, target);
    let tol = cfg.tolerance();
    let (psi, chi) = mismatch_angles_tol(alpha_d, dalpha, tol)?;
    let information = photon_number_information(alpha_d, dalpha, tol)?;
    let ratio = (psi - chi).cos().powi(2).clamp(0.0, 1.0);
    Ok(FisherReport {
        target,
        setup: cfg.setup(),
        qfi_coherent: qfi_coherent(dalpha),
        qfi_phase_averaged: information,
        cfi_photon_number: information,
        psi,
        chi,
        saturation_ratio: ratio,
    })
}

/// Truncation satisfying `n ≥ |α|² + 10|α| + 25`.
pub fn recommended_truncation(mean: f64) -> usize {
    (mean + 10.0 * mean.sqrt() + 25.0).ceil() as usize
}

fn check_tail(mean: f64, truncation_n: usize) -> Result<()> {
    let tail = upper_tail_mass(mean, truncation_n);
    if tail > TAIL_LIMIT {
        return Err(Error::TruncationTooSmall {
            truncation: truncation_n,
            tail_mass: tail,
            limit: TAIL_LIMIT,
        });
    }
    Ok(())
}

/// `L_n = −2·Re[α*·∂α]·(1 − n/|α|²)` for `n = 0..=truncation_n`.
pub fn sld_diagonal(
    alpha: ComplexAmplitude,
    dalpha: ComplexAmplitude,
    truncation_n: usize,
) -> Result<SldSpectrum> {
    ensure_not_vacuum(alpha, ENERGY_TOLERANCE)?;
    let mean = alpha.norm_sqr();
    check_tail(mean, truncation_n)?;
    let overlap = (alpha.conj() * dalpha).re;
    let (diagonal, weights) = (0..=truncation_n)
        .map(|n| {
            let l = -2.0 * overlap * (1.0 - n as f64 / mean);
            (l, poisson_pmf(mean, n as u64))
        })
        .unzip();
    Ok(SldSpectrum {
        truncation_n,
        diagonal,
        weights,
    })
}

/// `Σ_n P_n·L_n²` over the truncated Fock basis.
pub fn qfi_phase_averaged_oracle(
    alpha: ComplexAmplitude,
    dalpha: ComplexAmplitude,
    truncation_n: usize,
) -> Result<f64> {
    Ok(sld_diagonal(alpha, dalpha, truncation_n)?.second_moment())
}

/// Photon-counting CFI from its definition, `Σ_n (∂_μ P(n|μ))² / P(n|μ)`,
/// with a central difference in μ. Independent of the closed form.
pub fn cfi_numeric_oracle(
    cfg: &FieldConfig,
    target: EstimationTarget,
    step: f64,
    truncation_n: usize,
) -> Result<f64> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidInput(format!("finite-difference step must be > 0, got {step}")));
    }
    let mu = cfg.particle.target_value(target);
    let tol = cfg.tolerance();
    let mean_at = |value: f64| -> Result<f64> {
        let a = cfg.detector_amplitude_at(target, value);
        if !(a.norm() > tol) {
            return Err(Error::UndefinedPhase(format!(
                "detector field vanishes at {target} = {value}; choose another step"
            )));
        }
        Ok(a.norm_sqr())
    };
    let centre = mean_at(mu)?;
    let plus = mean_at(mu + step)?;
    let minus = mean_at(mu - step)?;
    check_tail(centre.max(plus).max(minus), truncation_n)?;
    // λ₊ − λ₋ = Re[(a₊ − a₋)·conj(a₊ + a₋)], where only the scattered part of a
    // moves. Subtracting the two means directly loses digits to cancellation
    // when the bright fields dwarf the change.
    let swing = cfg.particle.amplitude_at(target, mu + step).to_complex()
        - cfg.particle.amplitude_at(target, mu - step).to_complex();
    let sum = cfg.detector_amplitude_at(target, mu + step).to_complex()
        + cfg.detector_amplitude_at(target, mu - step).to_complex();
    let gap = (swing * sum.conj()).re;

    let mut total = 0.0;
    for n in 0..=truncation_n as u64 {
        let p = ln_poisson_pmf(centre, n).exp();
        if p == 0.0 {
            continue;
        }
        // P(n|μ+h) − P(n|μ−h) = P(n|μ−h)·expm1(Δ ln P), Δ ln P = n·ln(λ₊/λ₋) − (λ₊ − λ₋)
        let dlog = n as f64 * (gap / minus).ln_1p() - gap;
        let dp = ln_poisson_pmf(minus, n).exp() * dlog.exp_m1() / (2.0 * step);
        total += dp * dp / p;
    }
    Ok(total)
}

/// Cramér-Rao bound `1/√(N·F)` on the standard deviation.
pub fn qcrb(fisher_value: f64, repetitions: u64) -> Result<f64> {
    if !(fisher_value > 0.0) || !fisher_value.is_finite() {
        return Err(Error::NonPositiveFisher(fisher_value));
    }
    if repetitions == 0 {
        return Err(Error::InvalidInput("repetitions must be >= 1".into()));
    }
    Ok(1.0 / (repetitions as f64 * fisher_value).sqrt())
}

/// Lower bound on `δm/m` for `n_scattered` scattered photons, read at
/// photon-counting efficiency `saturation_ratio = cos²(ψ − χ)`.
pub fn relative_mass_bound(n_scattered: f64, saturation_ratio: f64) -> Result<f64> {
    if !(n_scattered > 0.0) || !n_scattered.is_finite() {
        return Err(Error::InvalidInput(format!(
            "scattered photon number must be > 0, got {n_scattered}"
        )));
    }
    if !(saturation_ratio <= 1.0 + 1e-12) || saturation_ratio.is_nan() {
        return Err(Error::InvalidInput(format!(
            "saturation ratio must lie in (0, 1], got {saturation_ratio}"
        )));
    }
    if saturation_ratio <= 0.0 {
        return Err(Error::NotEstimable(
            "photon counting carries no mass information (cos(psi - chi) = 0)".into(),
        ));
    }
    Ok(1.0 / (2.0 * (n_scattered * saturation_ratio.min(1.0)).sqrt()))
}
