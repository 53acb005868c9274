//! Signal-to-noise ratios of intensity detection with real field amplitudes.
//!
//! Amplitudes are in an arbitrary unit system where intensity is the squared
//! amplitude; values are only comparable with each other.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::EstimationTarget;
use crate::tuner::AxisSampling;

/// Intensities below this fraction of `Σ E²` count as total cancellation.
pub const DEGENERATE_FRACTION: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealFieldTriple {
    pub e_r: f64,
    pub e_s: f64,
    pub e_i: f64,
    pub phi_s: f64,
    pub phi_i: f64,
}

impl RealFieldTriple {
    pub fn new(e_r: f64, e_s: f64, e_i: f64, phi_s: f64, phi_i: f64) -> Result<Self> {
        for (name, v) in [("e_r", e_r), ("e_s", e_s), ("e_i", e_i)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidInput(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        for (name, v) in [("phi_s", phi_s), ("phi_i", phi_i)] {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("{name} must be finite")));
            }
        }
        Ok(Self { e_r, e_s, e_i, phi_s, phi_i })
    }

    pub fn iscat(e_r: f64, e_s: f64, phi_s: f64) -> Result<Self> {
        Self::new(e_r, e_s, 0.0, phi_s, 0.0)
    }
}

fn checked_sqrt(intensity: f64, scale: f64, what: &'static str) -> Result<f64> {
    if intensity <= DEGENERATE_FRACTION * scale {
        return Err(Error::DegenerateDenominator(what));
    }
    Ok(intensity.sqrt())
}

/// `E_r² + 2E_rE_s·cos φ_s + E_s²`.
pub fn intensity_iscat(f: &RealFieldTriple) -> f64 {
    f.e_r * f.e_r + 2.0 * f.e_r * f.e_s * f.phi_s.cos() + f.e_s * f.e_s
}

/// `|E_r + E_s·e^{iφ_s} + E_i·e^{iφ_i}|²` expanded in its six terms.
pub fn intensity_miscat(f: &RealFieldTriple) -> f64 {
    f.e_i * f.e_i
        + 2.0 * f.e_i * f.e_r * f.phi_i.cos()
        + 2.0 * f.e_i * f.e_s * (f.phi_i - f.phi_s).cos()
        + intensity_iscat(f)
}

/// `2E_rE_s·cos φ_s / √I₁`.
pub fn snr_mass_iscat(f: &RealFieldTriple) -> Result<f64> {
    let scale = f.e_r * f.e_r + f.e_s * f.e_s;
    let noise = checked_sqrt(intensity_iscat(f), scale, "iSCAT mass SNR")?;
    Ok(2.0 * f.e_r * f.e_s * f.phi_s.cos() / noise)
}

/// `(2E_rE_s·cos φ_s + 2E_iE_s·cos(φ_i − φ_s)) / √I₂`.
pub fn snr_mass_miscat(f: &RealFieldTriple) -> Result<f64> {
    let scale = f.e_r * f.e_r + f.e_s * f.e_s + f.e_i * f.e_i;
    let noise = checked_sqrt(intensity_miscat(f), scale, "MiSCAT mass SNR")?;
    let signal = 2.0 * f.e_r * f.e_s * f.phi_s.cos() + 2.0 * f.e_i * f.e_s * (f.phi_i - f.phi_s).cos();
    Ok(signal / noise)
}

/// Small-`φ_s` form `2φ_s²E_rE_s / (E_r + E_s)`.
pub fn snr_phase_small_iscat(f: &RealFieldTriple) -> Result<f64> {
    let scale = f.e_r * f.e_r + f.e_s * f.e_s;
    let intensity = f.e_r * f.e_r + 2.0 * f.e_r * f.e_s + f.e_s * f.e_s;
    let noise = checked_sqrt(intensity, scale, "iSCAT phase SNR")?;
    Ok(2.0 * f.phi_s * f.phi_s * f.e_r * f.e_s / noise)
}

/// Small-`φ_s` form `2E_iE_sφ_s·sin φ_i / √(E_i² + 2E_iE_r·cos φ_i + E_r²)`.
pub fn snr_phase_small_miscat(f: &RealFieldTriple) -> Result<f64> {
    let scale = f.e_r * f.e_r + f.e_i * f.e_i;
    let intensity = f.e_i * f.e_i + 2.0 * f.e_i * f.e_r * f.phi_i.cos() + f.e_r * f.e_r;
    let noise = checked_sqrt(intensity, scale, "MiSCAT phase SNR")?;
    Ok(2.0 * f.e_i * f.e_s * f.phi_s * f.phi_i.sin() / noise)
}

/// Largest MiSCAT mass SNR over `steps` equally spaced `φ_i ∈ [0, 2π)`,
/// skipping cancellation points. Returns `(φ_i, SNR)`.
pub fn max_snr_mass_over_phi_i(e_r: f64, e_s: f64, e_i: f64, phi_s: f64, steps: usize) -> Result<Option<(f64, f64)>> {
    let mut best: Option<(f64, f64)> = None;
    for k in 0..steps {
        let phi_i = TAU * k as f64 / steps as f64;
        match snr_mass_miscat(&RealFieldTriple::new(e_r, e_s, e_i, phi_s, phi_i)?) {
            Ok(v) if best.is_none_or(|(_, b)| v > b) => best = Some((phi_i, v)),
            Ok(_) | Err(Error::DegenerateDenominator(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    PhiI,
    PhiS,
}

/// A family of SNR curves. One curve per (`e_i`, fixed angle) pair; the
/// fixed angle is whichever of `φ_s`, `φ_i` is not swept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnrSweep {
    pub mode: EstimationTarget,
    pub e_r: f64,
    pub e_s: f64,
    pub e_i: Vec<f64>,
    pub sweep: SweepVariable,
    pub axis: AxisSampling,
    pub fixed: Vec<f64>,
    /// Plot the SNR on a logarithmic axis.
    #[serde(default)]
    pub log_scale: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrRow {
    pub e_i: f64,
    pub phi_s: f64,
    pub phi_i: f64,
    pub snr_iscat: Option<f64>,
    pub snr_miscat: Option<f64>,
}

fn optional(v: Result<f64>) -> Result<Option<f64>> {
    match v {
        Ok(x) => Ok(Some(x)),
        Err(Error::DegenerateDenominator(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

impl SnrSweep {
    pub fn preset(name: &str) -> Result<Self> {
        let phi_i_axis = AxisSampling::Linear { lo: 0.0, hi: TAU, steps: 361 };
        match name {
            "figsnr1" => Ok(Self {
                mode: EstimationTarget::Mass,
                e_r: 1.0,
                e_s: 0.01,
                e_i: vec![0.0, 0.25, 0.5, 1.0],
                sweep: SweepVariable::PhiI,
                axis: phi_i_axis,
                fixed: vec![PI / 2.0],
                log_scale: false,
            }),
            "figsnr2" => Ok(Self {
                mode: EstimationTarget::ScatterPhase,
                e_r: 1.0,
                e_s: 1e-3,
                e_i: vec![1.0],
                sweep: SweepVariable::PhiI,
                axis: phi_i_axis,
                fixed: vec![1e-4, 1e-3, 1e-2],
                log_scale: true,
            }),
            other => Err(Error::InvalidInput(format!("unknown SNR preset '{other}' (expected figsnr1 or figsnr2)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        RealFieldTriple::new(self.e_r, self.e_s, 0.0, 0.0, 0.0)?;
        for &e_i in &self.e_i {
            RealFieldTriple::new(self.e_r, self.e_s, e_i, 0.0, 0.0)?;
        }
        if self.e_i.is_empty() || self.fixed.is_empty() {
            return Err(Error::InvalidInput("SNR sweep needs at least one e_i and one fixed angle".into()));
        }
        if let Some(v) = self.fixed.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("fixed angle {v} is not finite")));
        }
        self.axis.values()?;
        Ok(())
    }

    /// Rows ordered by `e_i`, then fixed angle, then the swept angle.
    pub fn evaluate(&self) -> Result<Vec<SnrRow>> {
        self.validate()?;
        let axis = self.axis.values()?;
        let mut rows = Vec::with_capacity(self.e_i.len() * self.fixed.len() * axis.len());
        for &e_i in &self.e_i {
            for &fixed in &self.fixed {
                for &x in &axis {
                    let (phi_s, phi_i) = match self.sweep {
                        SweepVariable::PhiI => (fixed, x),
                        SweepVariable::PhiS => (x, fixed),
                    };
                    let f = RealFieldTriple::new(self.e_r, self.e_s, e_i, phi_s, phi_i)?;
                    let (iscat, miscat) = match self.mode {
                        EstimationTarget::Mass => (snr_mass_iscat(&f), snr_mass_miscat(&f)),
                        EstimationTarget::ScatterPhase => (snr_phase_small_iscat(&f), snr_phase_small_miscat(&f)),
                    };
                    rows.push(SnrRow {
                        e_i,
                        phi_s,
                        phi_i,
                        snr_iscat: optional(iscat)?,
                        snr_miscat: optional(miscat)?,
                    });
                }
            }
        }
        Ok(rows)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

/// Long-form CSV; undefined values are empty fields.
pub fn write_snr_csv<W: Write>(rows: &[SnrRow], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["e_i", "phi_s", "phi_i", "snr_iscat", "snr_miscat"])?;
    for r in rows {
        wtr.write_record([
            format!("{:.16e}", r.e_i),
            format!("{:.16e}", r.phi_s),
            format!("{:.16e}", r.phi_i),
            fmt_opt(r.snr_iscat),
            fmt_opt(r.snr_miscat),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
