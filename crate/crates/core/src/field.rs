//! Coherent-state amplitudes of the two-arm scattering interferometer.
//!
//! All magnitudes are dimensionless coherent-state labels; `|α|²` is a mean
//! photon number. Phases of the scattered field and of the reference arm are
//! measured relative to the reflected field, whose argument defaults to zero.

use std::f64::consts::TAU;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance (in units of `|α_0|`) for the per-arm photon budget.
pub const ENERGY_TOLERANCE: f64 = 1e-12;

/// Reduce an angle to `[0, 2π)`.
pub fn wrap_phase(angle: f64) -> f64 {
    let r = angle.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ComplexAmplitude {
    pub re: f64,
    pub im: f64,
}

impl ComplexAmplitude {
    pub const ZERO: ComplexAmplitude = ComplexAmplitude { re: 0.0, im: 0.0 };
    pub const I: ComplexAmplitude = ComplexAmplitude { re: 0.0, im: 1.0 };

    pub const fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    pub fn real(re: f64) -> Self {
        Self { re, im: 0.0 }
    }

    pub fn from_polar(magnitude: f64, phase: f64) -> Self {
        Complex64::from_polar(magnitude, phase).into()
    }

    pub fn norm(self) -> f64 {
        self.re.hypot(self.im)
    }

    pub fn norm_sqr(self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    /// Principal argument in `(-π, π]`.
    pub fn arg(self) -> f64 {
        self.im.atan2(self.re)
    }

    /// Argument reduced to `[0, 2π)`.
    pub fn phase(self) -> f64 {
        wrap_phase(self.arg())
    }

    pub fn conj(self) -> Self {
        Self::new(self.re, -self.im)
    }

    pub fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

impl From<Complex64> for ComplexAmplitude {
    fn from(z: Complex64) -> Self {
        Self::new(z.re, z.im)
    }
}

impl From<ComplexAmplitude> for Complex64 {
    fn from(z: ComplexAmplitude) -> Self {
        z.to_complex()
    }
}

impl Add for ComplexAmplitude {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.re + rhs.re, self.im + rhs.im)
    }
}

impl Sub for ComplexAmplitude {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.re - rhs.re, self.im - rhs.im)
    }
}

impl Mul for ComplexAmplitude {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        (self.to_complex() * rhs.to_complex()).into()
    }
}

impl Mul<f64> for ComplexAmplitude {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        Self::new(self.re * rhs, self.im * rhs)
    }
}

impl Neg for ComplexAmplitude {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.re, -self.im)
    }
}

impl fmt::Display for ComplexAmplitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{:+}i", self.re, self.im)
    }
}

/// Which parameter of the scattered label is being estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimationTarget {
    #[serde(rename = "mass")]
    Mass,
    #[serde(rename = "phase")]
    ScatterPhase,
}

impl EstimationTarget {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimationTarget::Mass => "mass",
            EstimationTarget::ScatterPhase => "phase",
        }
    }
}

impl fmt::Display for EstimationTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimationTarget {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mass" | "m" => Ok(EstimationTarget::Mass),
            "phase" | "phi_s" | "scatter_phase" => Ok(EstimationTarget::ScatterPhase),
            other => Err(Error::InvalidInput(format!(
                "unknown target {other:?} (expected mass|phase)"
            ))),
        }
    }
}

/// Particle whose scattered label is linear in mass: `α_s = m·s·e^{iφ_s}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParticle")]
pub struct ParticleModel {
    pub mass_kda: f64,
    pub scale_per_kda: f64,
    pub phi_s: f64,
}

#[derive(Deserialize)]
struct RawParticle {
    mass_kda: f64,
    scale_per_kda: f64,
    phi_s: f64,
}

impl TryFrom<RawParticle> for ParticleModel {
    type Error = Error;
    fn try_from(raw: RawParticle) -> Result<Self> {
        ParticleModel::new(raw.mass_kda, raw.scale_per_kda, raw.phi_s)
    }
}

impl ParticleModel {
    pub fn new(mass_kda: f64, scale_per_kda: f64, phi_s: f64) -> Result<Self> {
        if !(mass_kda.is_finite() && mass_kda >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "mass_kda must be finite and >= 0, got {mass_kda}"
            )));
        }
        if !(scale_per_kda.is_finite() && scale_per_kda > 0.0) {
            return Err(Error::InvalidInput(format!(
                "scale_per_kda must be finite and > 0, got {scale_per_kda}"
            )));
        }
        if !phi_s.is_finite() {
            return Err(Error::InvalidInput(format!("phi_s must be finite, got {phi_s}")));
        }
        Ok(Self {
            mass_kda,
            scale_per_kda,
            phi_s: wrap_phase(phi_s),
        })
    }

    pub fn scattered_amplitude(&self) -> ComplexAmplitude {
        self.amplitude_at(EstimationTarget::Mass, self.mass_kda)
    }

    /// Scattered label with the estimated parameter replaced by `value`.
    pub fn amplitude_at(&self, target: EstimationTarget, value: f64) -> ComplexAmplitude {
        match target {
            EstimationTarget::Mass => {
                ComplexAmplitude::from_polar(value * self.scale_per_kda, self.phi_s)
            }
            EstimationTarget::ScatterPhase => {
                ComplexAmplitude::from_polar(self.mass_kda * self.scale_per_kda, value)
            }
        }
    }

    /// `∂_μ α_s`: `s·e^{iφ_s}` for mass, `i·m·s·e^{iφ_s}` for the phase.
    pub fn derivative(&self, target: EstimationTarget) -> ComplexAmplitude {
        match target {
            EstimationTarget::Mass => ComplexAmplitude::from_polar(self.scale_per_kda, self.phi_s),
            EstimationTarget::ScatterPhase => ComplexAmplitude::I * self.scattered_amplitude(),
        }
    }

    pub fn target_value(&self, target: EstimationTarget) -> f64 {
        match target {
            EstimationTarget::Mass => self.mass_kda,
            EstimationTarget::ScatterPhase => self.phi_s,
        }
    }
}

/// Tunable Michelson reference arm, `α_i = |α_i|·e^{iφ_i}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawReference")]
pub struct ReferenceArm {
    pub mag: f64,
    pub phi_i: f64,
}

#[derive(Deserialize)]
struct RawReference {
    mag: f64,
    phi_i: f64,
}

impl TryFrom<RawReference> for ReferenceArm {
    type Error = Error;
    fn try_from(raw: RawReference) -> Result<Self> {
        ReferenceArm::new(raw.mag, raw.phi_i)
    }
}

impl ReferenceArm {
    pub fn new(mag: f64, phi_i: f64) -> Result<Self> {
        if !(mag.is_finite() && mag >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "reference magnitude must be finite and >= 0, got {mag}"
            )));
        }
        if !phi_i.is_finite() {
            return Err(Error::InvalidInput(format!("phi_i must be finite, got {phi_i}")));
        }
        Ok(Self {
            mag,
            phi_i: wrap_phase(phi_i),
        })
    }

    pub fn amplitude(&self) -> ComplexAmplitude {
        ComplexAmplitude::from_polar(self.mag, self.phi_i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Setup {
    #[serde(rename = "iSCAT")]
    Iscat,
    #[serde(rename = "MiSCAT")]
    Miscat,
}

impl fmt::Display for Setup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setup::Iscat => "iSCAT",
            Setup::Miscat => "MiSCAT",
        })
    }
}

/// Complete amplitude set of one measurement configuration.
///
/// An absent reference arm means plain iSCAT.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConfig")]
pub struct FieldConfig {
    pub alpha0_mag: f64,
    pub alpha_r: ComplexAmplitude,
    pub particle: ParticleModel,
    pub reference: Option<ReferenceArm>,
}

#[derive(Deserialize)]
struct RawConfig {
    #[serde(default = "default_alpha0")]
    alpha0_mag: f64,
    alpha_r: ComplexAmplitude,
    particle: ParticleModel,
    #[serde(default)]
    reference: Option<ReferenceArm>,
}

fn default_alpha0() -> f64 {
    1.0
}

impl TryFrom<RawConfig> for FieldConfig {
    type Error = Error;
    fn try_from(raw: RawConfig) -> Result<Self> {
        let cfg = FieldConfig {
            alpha0_mag: raw.alpha0_mag,
            alpha_r: raw.alpha_r,
            particle: raw.particle,
            reference: raw.reference,
        };
        cfg.check_source()?;
        Ok(cfg)
    }
}

impl FieldConfig {
    pub fn iscat(alpha0_mag: f64, alpha_r: ComplexAmplitude, particle: ParticleModel) -> Self {
        Self {
            alpha0_mag,
            alpha_r,
            particle,
            reference: None,
        }
    }

    pub fn miscat(
        alpha0_mag: f64,
        alpha_r: ComplexAmplitude,
        particle: ParticleModel,
        reference: ReferenceArm,
    ) -> Self {
        Self {
            alpha0_mag,
            alpha_r,
            particle,
            reference: Some(reference),
        }
    }

    pub fn with_reference(mut self, reference: Option<ReferenceArm>) -> Self {
        self.reference = reference;
        self
    }

    pub fn setup(&self) -> Setup {
        match self.reference {
            Some(_) => Setup::Miscat,
            None => Setup::Iscat,
        }
    }

    fn check_source(&self) -> Result<()> {
        if !(self.alpha0_mag.is_finite() && self.alpha0_mag > 0.0) {
            return Err(Error::InvalidInput(format!(
                "alpha0_mag must be finite and > 0, got {}",
                self.alpha0_mag
            )));
        }
        if !self.alpha_r.is_finite() {
            return Err(Error::InvalidInput("alpha_r must be finite".into()));
        }
        Ok(())
    }

    /// Absolute tolerance used for budget checks and vacuum detection.
    pub fn tolerance(&self) -> f64 {
        ENERGY_TOLERANCE * self.alpha0_mag
    }

    pub fn reference_amplitude(&self) -> ComplexAmplitude {
        self.reference
            .map(|r| r.amplitude())
            .unwrap_or(ComplexAmplitude::ZERO)
    }

    /// Label of the first arm, `α_r + α_s`.
    pub fn first_arm(&self) -> ComplexAmplitude {
        self.alpha_r + self.particle.scattered_amplitude()
    }

    /// Detector label with the estimated parameter set to `value`, without
    /// budget validation (used when scanning hypothetical parameter values).
    pub fn detector_amplitude_at(&self, target: EstimationTarget, value: f64) -> ComplexAmplitude {
        self.alpha_r + self.particle.amplitude_at(target, value) + self.reference_amplitude()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arm {
    /// Reflected plus scattered field, `|α_r + α_s|`.
    First,
    /// Michelson reference arm, `|α_i|`.
    Reference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyViolation {
    pub arm: Arm,
    pub magnitude: f64,
    pub bound: f64,
}

impl fmt::Display for EnergyViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.arm {
            Arm::First => "first arm |alpha_r + alpha_s|",
            Arm::Reference => "reference arm |alpha_i|",
        };
        write!(
            f,
            "{name} = {} exceeds |alpha_0|/2 = {}",
            self.magnitude, self.bound
        )
    }
}

pub fn scattered_amplitude(particle: &ParticleModel) -> ComplexAmplitude {
    particle.scattered_amplitude()
}

/// Each arm may carry at most half of the source amplitude.
pub fn validate_energy(cfg: &FieldConfig) -> Vec<EnergyViolation> {
    let bound = cfg.alpha0_mag / 2.0;
    let tol = cfg.tolerance();
    let mut out = Vec::new();
    let first = cfg.first_arm().norm();
    if first > bound + tol {
        out.push(EnergyViolation {
            arm: Arm::First,
            magnitude: first,
            bound,
        });
    }
    if let Some(r) = cfg.reference {
        if r.mag > bound + tol {
            out.push(EnergyViolation {
                arm: Arm::Reference,
                magnitude: r.mag,
                bound,
            });
        }
    }
    out
}

/// `α_d = α_r + α_s + α_i`, after checking the photon budget.
pub fn detector_amplitude(cfg: &FieldConfig) -> Result<ComplexAmplitude> {
    let violations = validate_energy(cfg);
    if !violations.is_empty() {
        return Err(Error::ConstraintViolation(violations));
    }
    Ok(cfg.first_arm() + cfg.reference_amplitude())
}

pub fn target_derivative(cfg: &FieldConfig, target: EstimationTarget) -> ComplexAmplitude {
    cfg.particle.derivative(target)
}
