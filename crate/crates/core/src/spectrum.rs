//! Broadband fields: independent coherent modes on a frequency grid,
//! integrated with a composite trapezoid rule.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{wrap_phase, ComplexAmplitude, EstimationTarget, ENERGY_TOLERANCE};
use crate::fisher::{cfi_photon_number, qfi_coherent};

/// Spectral densities on a frequency grid. `|α(ω)|²` counts photons per unit
/// of the (dimensionless) frequency axis.
///
/// The mass derivative at each point is `s(ω)·e^{iφ_s(ω)}`, the phase
/// derivative `i·α_s(ω)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    omega: Vec<f64>,
    weights: Vec<f64>,
    pub alpha_r: Vec<ComplexAmplitude>,
    pub alpha_s: Vec<ComplexAmplitude>,
    pub alpha_i: Vec<ComplexAmplitude>,
    pub scale_s: Vec<f64>,
    pub phi_s: Vec<f64>,
}

/// One grid point in the CSV/JSON layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralRow {
    pub omega: f64,
    pub weight: f64,
    pub alpha_r_re: f64,
    pub alpha_r_im: f64,
    pub alpha_s_re: f64,
    pub alpha_s_im: f64,
    pub alpha_i_re: f64,
    pub alpha_i_im: f64,
    pub scale_s: f64,
    pub phi_s: f64,
}

/// Composite trapezoid weights; a single point gets weight 1.
pub fn trapezoid_weights(omega: &[f64]) -> Vec<f64> {
    match omega.len() {
        0 => Vec::new(),
        1 => vec![1.0],
        n => (0..n)
            .map(|k| {
                let left = if k > 0 { omega[k] - omega[k - 1] } else { 0.0 };
                let right = if k + 1 < n { omega[k + 1] - omega[k] } else { 0.0 };
                0.5 * (left + right)
            })
            .collect(),
    }
}

fn check_grid(omega: &[f64], weights: &[f64]) -> Result<()> {
    if omega.is_empty() {
        return Err(Error::InvalidInput("spectral grid is empty".into()));
    }
    if weights.len() != omega.len() {
        return Err(Error::InvalidInput(format!(
            "{} weights for {} grid points",
            weights.len(),
            omega.len()
        )));
    }
    if let Some(k) = omega.iter().position(|w| !w.is_finite()) {
        return Err(Error::InvalidInput(format!("omega[{k}] is not finite")));
    }
    if let Some(k) = omega.windows(2).position(|p| p[1] <= p[0]) {
        return Err(Error::InvalidInput(format!(
            "omega grid must be strictly increasing (omega[{}] = {} >= omega[{}] = {})",
            k,
            omega[k],
            k + 1,
            omega[k + 1]
        )));
    }
    if let Some(k) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "weight[{k}] = {} must be finite and > 0",
            weights[k]
        )));
    }
    Ok(())
}

impl SpectralField {
    /// Builds a field with explicit quadrature weights.
    pub fn with_weights(
        omega: Vec<f64>,
        weights: Vec<f64>,
        alpha_r: Vec<ComplexAmplitude>,
        alpha_s: Vec<ComplexAmplitude>,
        alpha_i: Vec<ComplexAmplitude>,
        scale_s: Vec<f64>,
        phi_s: Vec<f64>,
    ) -> Result<Self> {
        check_grid(&omega, &weights)?;
        let n = omega.len();
        for (name, len) in [
            ("alpha_r", alpha_r.len()),
            ("alpha_s", alpha_s.len()),
            ("alpha_i", alpha_i.len()),
            ("scale_s", scale_s.len()),
            ("phi_s", phi_s.len()),
        ] {
            if len != n {
                return Err(Error::InvalidInput(format!(
                    "{name} has {len} entries for {n} grid points"
                )));
            }
        }
        for k in 0..n {
            if !(alpha_r[k].is_finite() && alpha_s[k].is_finite() && alpha_i[k].is_finite()) {
                return Err(Error::InvalidInput(format!("non-finite amplitude at grid point {k}")));
            }
            if !(scale_s[k].is_finite() && scale_s[k] >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "scale_s[{k}] = {} must be finite and >= 0",
                    scale_s[k]
                )));
            }
            if !phi_s[k].is_finite() {
                return Err(Error::InvalidInput(format!("phi_s[{k}] is not finite")));
            }
        }
        Ok(Self {
            omega,
            weights,
            alpha_r,
            alpha_s,
            alpha_i,
            scale_s,
            phi_s: phi_s.into_iter().map(wrap_phase).collect(),
        })
    }

    /// Builds a field integrated with [`trapezoid_weights`].
    pub fn new(
        omega: Vec<f64>,
        alpha_r: Vec<ComplexAmplitude>,
        alpha_s: Vec<ComplexAmplitude>,
        alpha_i: Vec<ComplexAmplitude>,
        scale_s: Vec<f64>,
        phi_s: Vec<f64>,
    ) -> Result<Self> {
        let weights = trapezoid_weights(&omega);
        Self::with_weights(omega, weights, alpha_r, alpha_s, alpha_i, scale_s, phi_s)
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn detector_amplitude(&self, k: usize) -> ComplexAmplitude {
        self.alpha_r[k] + self.alpha_s[k] + self.alpha_i[k]
    }

    pub fn derivative(&self, k: usize, target: EstimationTarget) -> ComplexAmplitude {
        match target {
            EstimationTarget::Mass => ComplexAmplitude::from_polar(self.scale_s[k], self.phi_s[k]),
            EstimationTarget::ScatterPhase => ComplexAmplitude::I * self.alpha_s[k],
        }
    }

    /// Sets the reflected and reference arms to `a·√(1/ω)`, the envelope of a
    /// flat source intensity, with `a` the amplitude at `ω = 1`.
    pub fn with_source_arms(mut self, alpha_r_unit: ComplexAmplitude, alpha_i_unit: ComplexAmplitude) -> Result<Self> {
        if let Some(k) = self.omega.iter().position(|&w| w <= 0.0) {
            return Err(Error::InvalidInput(format!(
                "source envelope needs omega > 0, got omega[{k}] = {}",
                self.omega[k]
            )));
        }
        self.alpha_r = self.omega.iter().map(|&w| alpha_r_unit * w.recip().sqrt()).collect();
        self.alpha_i = self.omega.iter().map(|&w| alpha_i_unit * w.recip().sqrt()).collect();
        Ok(self)
    }

    /// Grid scale used for vacuum detection.
    fn tolerance(&self) -> f64 {
        let scale = (0..self.len())
            .map(|k| self.alpha_r[k].norm() + self.alpha_s[k].norm() + self.alpha_i[k].norm())
            .fold(0.0, f64::max);
        ENERGY_TOLERANCE * scale
    }

    fn integrate(&self, f: impl Fn(usize) -> f64) -> f64 {
        (0..self.len()).map(|k| self.weights[k] * f(k)).sum()
    }

    pub fn to_rows(&self) -> Vec<SpectralRow> {
        (0..self.len())
            .map(|k| SpectralRow {
                omega: self.omega[k],
                weight: self.weights[k],
                alpha_r_re: self.alpha_r[k].re,
                alpha_r_im: self.alpha_r[k].im,
                alpha_s_re: self.alpha_s[k].re,
                alpha_s_im: self.alpha_s[k].im,
                alpha_i_re: self.alpha_i[k].re,
                alpha_i_im: self.alpha_i[k].im,
                scale_s: self.scale_s[k],
                phi_s: self.phi_s[k],
            })
            .collect()
    }

    pub fn from_rows(rows: &[SpectralRow]) -> Result<Self> {
        Self::with_weights(
            rows.iter().map(|r| r.omega).collect(),
            rows.iter().map(|r| r.weight).collect(),
            rows.iter().map(|r| ComplexAmplitude::new(r.alpha_r_re, r.alpha_r_im)).collect(),
            rows.iter().map(|r| ComplexAmplitude::new(r.alpha_s_re, r.alpha_s_im)).collect(),
            rows.iter().map(|r| ComplexAmplitude::new(r.alpha_i_re, r.alpha_i_im)).collect(),
            rows.iter().map(|r| r.scale_s).collect(),
            rows.iter().map(|r| r.phi_s).collect(),
        )
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let rows = rdr.deserialize().collect::<std::result::Result<Vec<SpectralRow>, _>>()?;
        Self::from_rows(&rows)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record([
            "omega", "weight", "alpha_r_re", "alpha_r_im", "alpha_s_re", "alpha_s_im",
            "alpha_i_re", "alpha_i_im", "scale_s", "phi_s",
        ])?;
        for r in self.to_rows() {
            let fields = [
                r.omega, r.weight, r.alpha_r_re, r.alpha_r_im, r.alpha_s_re, r.alpha_s_im,
                r.alpha_i_re, r.alpha_i_im, r.scale_s, r.phi_s,
            ];
            wtr.write_record(fields.iter().map(|v| format!("{v:.16e}")))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        let rows: Vec<SpectralRow> = serde_json::from_reader(reader)?;
        Self::from_rows(&rows)
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, &self.to_rows())?;
        Ok(())
    }

    /// Loads CSV or, for a `.json` extension, the JSON row array.
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::read_json(file),
            _ => Self::read_csv(file),
        }
    }
}

/// Flat scattered intensity over `[omega_lo, omega_hi]` carrying
/// `total_scattered_photons` for a particle of `mass_kda`. The reflected and
/// reference arms start empty; see [`SpectralField::with_source_arms`].
///
/// A single point is one mode holding every photon.
pub fn flat_white_spectrum(
    omega_lo: f64,
    omega_hi: f64,
    points: usize,
    total_scattered_photons: f64,
    mass_kda: f64,
    phi_s: f64,
) -> Result<SpectralField> {
    if !(omega_lo.is_finite() && omega_hi.is_finite() && 0.0 < omega_lo && omega_lo < omega_hi) {
        return Err(Error::InvalidInput(format!(
            "invalid band [{omega_lo}, {omega_hi}]: need 0 < lo < hi"
        )));
    }
    if points == 0 {
        return Err(Error::InvalidInput("spectrum needs at least one point".into()));
    }
    if !(total_scattered_photons.is_finite() && total_scattered_photons >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "scattered photon number must be >= 0, got {total_scattered_photons}"
        )));
    }
    if !(mass_kda.is_finite() && mass_kda >= 0.0) || (mass_kda == 0.0 && total_scattered_photons > 0.0) {
        return Err(Error::InvalidInput(format!(
            "mass {mass_kda} kDa cannot scatter {total_scattered_photons} photons"
        )));
    }
    if !phi_s.is_finite() {
        return Err(Error::InvalidInput("phi_s must be finite".into()));
    }
    let omega: Vec<f64> = if points == 1 {
        vec![0.5 * (omega_lo + omega_hi)]
    } else {
        let step = (omega_hi - omega_lo) / (points - 1) as f64;
        (0..points)
            .map(|k| if k + 1 == points { omega_hi } else { omega_lo + k as f64 * step })
            .collect()
    };
    let span = if points == 1 { 1.0 } else { omega_hi - omega_lo };
    let density = total_scattered_photons / span;
    let scale = if total_scattered_photons > 0.0 { density.sqrt() / mass_kda } else { 0.0 };
    let alpha_s = ComplexAmplitude::from_polar(density.sqrt(), phi_s);
    SpectralField::new(
        omega,
        vec![ComplexAmplitude::ZERO; points],
        vec![alpha_s; points],
        vec![ComplexAmplitude::ZERO; points],
        vec![scale; points],
        vec![phi_s; points],
    )
}

/// `4∫|∂_μ α_s(ω)|² dω`.
pub fn qfi_multifrequency(f: &SpectralField, t: EstimationTarget) -> f64 {
    f.integrate(|k| qfi_coherent(f.derivative(k, t)))
}

/// Per-point photon-counting information; points with zero derivative
/// contribute nothing and may be dark.
fn pointwise_counting_information(f: &SpectralField, k: usize, t: EstimationTarget, tol: f64) -> Result<f64> {
    let dalpha = f.derivative(k, t);
    if dalpha.norm() == 0.0 {
        return Ok(0.0);
    }
    let alpha_d = f.detector_amplitude(k);
    if !(alpha_d.norm() > tol) {
        return Err(Error::UndefinedPhase(format!(
            "detector field is the vacuum at grid point {k} (omega = {})",
            f.omega[k]
        )));
    }
    cfi_photon_number(alpha_d, dalpha)
}

/// `4∫Re²[(α_d*/|α_d|)·∂_μ α_s] dω`, each frequency phase averaged on its own.
pub fn qfi_multifrequency_phase_averaged(f: &SpectralField, t: EstimationTarget) -> Result<f64> {
    let tol = f.tolerance();
    let mut total = 0.0;
    for k in 0..f.len() {
        total += f.weights[k] * pointwise_counting_information(f, k, t, tol)?;
    }
    Ok(total)
}

/// `(δm/m)·√n̄ = ½·√(∫|s|² / ∫|s|²cos²(ψ − χ))`.
pub fn relative_mass_bound_multifrequency(f: &SpectralField) -> Result<f64> {
    if !(scattered_photons(f) > 0.0) {
        return Err(Error::InvalidInput("spectrum scatters no photons".into()));
    }
    let full = qfi_multifrequency(f, EstimationTarget::Mass);
    let counted = qfi_multifrequency_phase_averaged(f, EstimationTarget::Mass)?;
    if !(counted > 0.0) {
        return Err(Error::NotEstimable(
            "photon counting carries no mass information at any frequency".into(),
        ));
    }
    Ok(0.5 * (full / counted).sqrt())
}

/// `∫|α_s(ω)|² dω`.
pub fn scattered_photons(f: &SpectralField) -> f64 {
    f.integrate(|k| f.alpha_s[k].norm_sqr())
}
