//! Reference-arm settings that make photon counting quantum optimal, and
//! ratio scans over configuration parameters.
//!
//! Saturation requires `arg(α_first + α_i) ≡ ψ (mod π)`, so admissible
//! reference labels lie on the line `α_i(t) = t·e^{iψ} − α_first`. A circle
//! `|α_i| = R` meets it in zero, one or two points.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{wrap_phase, ComplexAmplitude, EstimationTarget, FieldConfig, ParticleModel, ReferenceArm};
use crate::fisher::fisher_report;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VacuumSetting {
    pub mag_i: f64,
    pub phi_i: f64,
}

/// Closed-form solution set for one configuration and target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationSolution {
    pub target: EstimationTarget,
    pub psi: f64,
    pub first_arm: ComplexAmplitude,
    /// `Re(α_first·e^{−iψ})`: position of the foot of the perpendicular.
    pub along: f64,
    /// `Im(α_first·e^{−iψ})`: signed distance from the line.
    pub across: f64,
    pub min_mag_i: f64,
    /// Phase at the tangency magnitude, absent when that point is the vacuum.
    pub tangent_phi_i: Option<f64>,
    pub bound: f64,
    pub feasible: bool,
    /// Reference setting that cancels the detector field.
    pub vacuum_reference: VacuumSetting,
    pub tolerance: f64,
}

impl SaturationSolution {
    /// Saturating phases at `|α_i| = mag_i`, ascending in `[0, 2π)`. The
    /// vacuum point and magnitudes outside the budget are excluded.
    pub fn solutions_at(&self, mag_i: f64) -> Vec<f64> {
        if !(mag_i >= 0.0) || mag_i > self.bound + self.tolerance {
            return Vec::new();
        }
        let gap = mag_i - self.min_mag_i;
        let ts: Vec<f64> = if gap.abs() <= self.tolerance {
            vec![self.along]
        } else if gap < 0.0 {
            return Vec::new();
        } else {
            let half = (mag_i * mag_i - self.across * self.across).sqrt();
            vec![self.along - half, self.along + half]
        };
        let rotation = ComplexAmplitude::from_polar(1.0, self.psi);
        let mut phases: Vec<f64> = ts
            .into_iter()
            .filter(|t| t.abs() > self.tolerance)
            .map(|t| {
                let alpha_i = rotation * t - self.first_arm;
                if alpha_i.norm() <= self.tolerance {
                    0.0
                } else {
                    alpha_i.phase()
                }
            })
            .collect();
        phases.sort_by(f64::total_cmp);
        phases
    }
}

/// Geometry of the saturating reference set for `cfg` and `t`.
pub fn saturating_reference_set(cfg: &FieldConfig, t: EstimationTarget) -> Result<SaturationSolution> {
    let dalpha = cfg.particle.derivative(t);
    if dalpha.norm() == 0.0 {
        return Err(Error::ZeroDerivative);
    }
    let psi = dalpha.phase();
    let first_arm = cfg.first_arm();
    let rotated = first_arm * ComplexAmplitude::from_polar(1.0, -psi);
    let tolerance = cfg.tolerance();
    let min_mag_i = rotated.im.abs();
    let bound = 0.5 * cfg.alpha0_mag;
    let tangent_phi_i = (rotated.re.abs() > tolerance).then(|| {
        let alpha_i = ComplexAmplitude::from_polar(rotated.re, psi) - first_arm;
        if alpha_i.norm() <= tolerance {
            0.0
        } else {
            alpha_i.phase()
        }
    });
    Ok(SaturationSolution {
        target: t,
        psi,
        first_arm,
        along: rotated.re,
        across: rotated.im,
        min_mag_i,
        tangent_phi_i,
        bound,
        feasible: min_mag_i <= bound + tolerance,
        vacuum_reference: VacuumSetting {
            mag_i: first_arm.norm(),
            phi_i: (-first_arm).phase(),
        },
        tolerance,
    })
}

/// Saturating `φ_i` values at a given reference magnitude.
pub fn phase_solutions(cfg: &FieldConfig, t: EstimationTarget, mag_i: f64) -> Result<Vec<f64>> {
    Ok(saturating_reference_set(cfg, t)?.solutions_at(mag_i))
}

/// Sample points along one scan axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AxisSampling {
    /// `steps` points from `lo` to `hi` inclusive.
    Linear { lo: f64, hi: f64, steps: usize },
    /// `steps` logarithmically spaced points from `lo` to `hi` inclusive.
    Log { lo: f64, hi: f64, steps: usize },
    Values { values: Vec<f64> },
}

impl AxisSampling {
    pub fn values(&self) -> Result<Vec<f64>> {
        let spaced = |lo: f64, hi: f64, steps: usize, map: &dyn Fn(f64) -> f64| -> Result<Vec<f64>> {
            if steps == 0 {
                return Err(Error::InvalidInput("axis needs at least one step".into()));
            }
            if !(lo.is_finite() && hi.is_finite()) || (steps > 1 && !(lo < hi)) {
                return Err(Error::InvalidInput(format!("invalid axis range [{lo}, {hi}]")));
            }
            if steps == 1 {
                return Ok(vec![map(lo)]);
            }
            Ok((0..steps)
                .map(|k| {
                    let u = if k + 1 == steps { hi } else { lo + (hi - lo) * k as f64 / (steps - 1) as f64 };
                    map(u)
                })
                .collect())
        };
        match *self {
            AxisSampling::Linear { lo, hi, steps } => spaced(lo, hi, steps, &|u| u),
            AxisSampling::Log { lo, hi, steps } => {
                if !(lo > 0.0 && hi > 0.0) {
                    return Err(Error::InvalidInput(format!("log axis needs positive bounds, got [{lo}, {hi}]")));
                }
                let mut v = spaced(lo.log10(), hi.log10(), steps, &|u| 10f64.powf(u))?;
                // pin the ends against powf rounding
                v[0] = lo;
                if steps > 1 {
                    v[steps - 1] = hi;
                }
                Ok(v)
            }
            AxisSampling::Values { ref values } => {
                if values.is_empty() {
                    return Err(Error::InvalidInput("axis value list is empty".into()));
                }
                if let Some(v) = values.iter().find(|v| !v.is_finite()) {
                    return Err(Error::InvalidInput(format!("axis value {v} is not finite")));
                }
                Ok(values.clone())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanParam {
    AlphaRMag,
    PhiS,
    AlphaIMag,
    PhiI,
}

impl ScanParam {
    pub fn as_str(self) -> &'static str {
        match self {
            ScanParam::AlphaRMag => "alpha_r_mag",
            ScanParam::PhiS => "phi_s",
            ScanParam::AlphaIMag => "alpha_i_mag",
            ScanParam::PhiI => "phi_i",
        }
    }

    /// `cfg` with this parameter set to `value`. Reference-arm parameters
    /// add a reference arm when the baseline has none.
    pub fn apply(self, cfg: &FieldConfig, value: f64) -> Result<FieldConfig> {
        let mut out = *cfg;
        match self {
            ScanParam::AlphaRMag => {
                if !(value >= 0.0 && value.is_finite()) {
                    return Err(Error::InvalidInput(format!("|alpha_r| must be >= 0, got {value}")));
                }
                out.alpha_r = ComplexAmplitude::from_polar(value, cfg.alpha_r.arg());
            }
            ScanParam::PhiS => {
                let p = cfg.particle;
                out.particle = ParticleModel::new(p.mass_kda, p.scale_per_kda, value)?;
            }
            ScanParam::AlphaIMag => {
                let phi = cfg.reference.map_or(0.0, |r| r.phi_i);
                out.reference = Some(ReferenceArm::new(value, phi)?);
            }
            ScanParam::PhiI => {
                let mag = cfg.reference.map_or(0.0, |r| r.mag);
                out.reference = Some(ReferenceArm::new(mag, value)?);
            }
        }
        Ok(out)
    }
}

impl fmt::Display for ScanParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScanParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha_r_mag" => Ok(ScanParam::AlphaRMag),
            "phi_s" => Ok(ScanParam::PhiS),
            "alpha_i_mag" => Ok(ScanParam::AlphaIMag),
            "phi_i" => Ok(ScanParam::PhiI),
            other => Err(Error::InvalidInput(format!(
                "unknown scan axis '{other}' (expected alpha_r_mag, phi_s, alpha_i_mag or phi_i)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub param: ScanParam,
    #[serde(flatten)]
    pub sampling: AxisSampling,
}

impl AxisSpec {
    pub fn new(param: ScanParam, sampling: AxisSampling) -> Self {
        Self { param, sampling }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanRequest {
    pub x: AxisSpec,
    #[serde(default)]
    pub y: Option<AxisSpec>,
    pub baseline: FieldConfig,
    pub target: EstimationTarget,
}

/// Ratio values indexed `values[iy][ix]`; a one-dimensional scan has a single
/// row. `None` marks cells where the detector field is the vacuum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanGrid {
    pub request: ScanRequest,
    pub x_values: Vec<f64>,
    pub y_values: Vec<f64>,
    pub values: Vec<Vec<Option<f64>>>,
}

/// Serializable description of a grid without its values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanHeader<'a> {
    pub x: &'a AxisSpec,
    pub y: Option<&'a AxisSpec>,
    pub baseline: &'a FieldConfig,
    pub target: EstimationTarget,
    pub shape: [usize; 2],
}

fn cell_config(req: &ScanRequest, x: f64, y: Option<f64>) -> Result<FieldConfig> {
    let cfg = req.x.param.apply(&req.baseline, x)?;
    match (&req.y, y) {
        (Some(axis), Some(v)) => axis.param.apply(&cfg, v),
        _ => Ok(cfg),
    }
}

/// Saturation ratio of a single configuration; `None` at the vacuum.
pub fn ratio_cell(cfg: &FieldConfig, target: EstimationTarget) -> Result<Option<f64>> {
    match fisher_report(cfg, target) {
        Ok(r) => Ok(Some(r.saturation_ratio)),
        Err(Error::UndefinedPhase(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn scan_ratio_grid(req: &ScanRequest) -> Result<ScanGrid> {
    if let Some(y) = &req.y {
        if y.param == req.x.param {
            return Err(Error::InvalidInput(format!("both scan axes set {}", y.param)));
        }
    }
    let x_values = req.x.sampling.values()?;
    let y_values = match &req.y {
        Some(axis) => axis.sampling.values()?,
        None => Vec::new(),
    };
    let rows: Vec<Option<f64>> = if y_values.is_empty() { vec![None] } else { y_values.iter().copied().map(Some).collect() };
    let nx = x_values.len();
    let flat: Vec<Option<f64>> = (0..rows.len() * nx)
        .into_par_iter()
        .map(|k| {
            let cfg = cell_config(req, x_values[k % nx], rows[k / nx])?;
            ratio_cell(&cfg, req.target)
        })
        .collect::<Result<_>>()?;
    let values = flat.chunks(nx).map(<[_]>::to_vec).collect();
    Ok(ScanGrid {
        request: req.clone(),
        x_values,
        y_values,
        values,
    })
}

impl ScanGrid {
    pub fn header(&self) -> ScanHeader<'_> {
        ScanHeader {
            x: &self.request.x,
            y: self.request.y.as_ref(),
            baseline: &self.request.baseline,
            target: self.request.target,
            shape: [self.values.len(), self.x_values.len()],
        }
    }

    pub fn get(&self, ix: usize, iy: usize) -> Option<f64> {
        self.values[iy][ix]
    }

    /// Long form `x,y,ratio,defined`; `y` is empty for a 1-D scan and
    /// `ratio` is empty where undefined.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["x", "y", "ratio", "defined"])?;
        for (iy, row) in self.values.iter().enumerate() {
            let y = self.y_values.get(iy).map(|v| format!("{v:.16e}")).unwrap_or_default();
            for (ix, cell) in row.iter().enumerate() {
                wtr.write_record([
                    format!("{:.16e}", self.x_values[ix]),
                    y.clone(),
                    cell.map(|r| format!("{r:.16e}")).unwrap_or_default(),
                    if cell.is_some() { "1".into() } else { "0".into() },
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Amplitude of the scattered field in the figure presets, relative to `|α_0|`.
pub const FIGURE_SCATTERED_MAG: f64 = 2e-5;
const FIGURE_MASS_KDA: f64 = 66.0;

fn figure_particle(phi_s: f64) -> ParticleModel {
    ParticleModel::new(FIGURE_MASS_KDA, FIGURE_SCATTERED_MAG / FIGURE_MASS_KDA, phi_s).expect("valid preset particle")
}

fn linear(lo: f64, hi: f64, steps: usize) -> AxisSampling {
    AxisSampling::Linear { lo, hi, steps }
}

/// Linear samples with `extra` merged in, so the grid hits a chosen point.
fn linear_with(lo: f64, hi: f64, steps: usize, extra: f64) -> AxisSampling {
    let mut values = linear(lo, hi, steps).values().expect("valid preset axis");
    values.push(extra);
    values.sort_by(f64::total_cmp);
    values.dedup();
    AxisSampling::Values { values }
}

/// Scan requests reproducing the ratio figures.
pub fn preset(name: &str) -> Result<ScanRequest> {
    let phases = AxisSampling::Values {
        values: vec![PI / 3.0, 2.0 * PI / 3.0, 5.0 * PI / 6.0],
    };
    let r_axis = AxisSampling::Log { lo: 1e-8, hi: 1e-1, steps: 301 };
    let full_turn = linear(0.0, TAU, 201);
    let iscat = |phi_s| FieldConfig::iscat(1.0, ComplexAmplitude::real(2.3e-5), figure_particle(phi_s));
    let miscat = |alpha_r: f64, mag_i: f64, phi_s: f64| {
        FieldConfig::miscat(1.0, ComplexAmplitude::real(alpha_r), figure_particle(phi_s), ReferenceArm::new(mag_i, 0.0).expect("valid preset reference"))
    };
    let two_arm_scan = |alpha_r: f64, mag_hi: f64| -> Result<ScanRequest> {
        let baseline = miscat(alpha_r, 0.0, 5.0 * PI / 6.0);
        let vacuum = saturating_reference_set(&baseline, EstimationTarget::Mass)?.vacuum_reference;
        Ok(ScanRequest {
            x: AxisSpec::new(ScanParam::AlphaIMag, linear_with(0.0, mag_hi, 201, vacuum.mag_i)),
            y: Some(AxisSpec::new(ScanParam::PhiI, linear_with(0.0, TAU, 201, vacuum.phi_i))),
            baseline,
            target: EstimationTarget::Mass,
        })
    };
    match name {
        "fig2a" | "fig3a" => Ok(ScanRequest {
            x: AxisSpec::new(ScanParam::AlphaRMag, r_axis),
            y: Some(AxisSpec::new(ScanParam::PhiS, phases)),
            baseline: iscat(2.0 * PI / 3.0),
            target: if name == "fig2a" { EstimationTarget::Mass } else { EstimationTarget::ScatterPhase },
        }),
        "fig2b" => Ok(ScanRequest {
            x: AxisSpec::new(ScanParam::PhiS, full_turn.clone()),
            y: Some(AxisSpec::new(ScanParam::PhiI, full_turn)),
            baseline: miscat(2.3e-5, 4.5e-5, 0.0),
            target: EstimationTarget::Mass,
        }),
        "fig2c" => two_arm_scan(2.3e-5, 5e-5),
        "fig2d" => two_arm_scan(1e-2, 2e-2),
        "fig3b" => Ok(ScanRequest {
            x: AxisSpec::new(ScanParam::PhiS, full_turn.clone()),
            y: Some(AxisSpec::new(ScanParam::PhiI, full_turn)),
            baseline: miscat(0.01, 0.045, 0.0),
            target: EstimationTarget::ScatterPhase,
        }),
        other => Err(Error::InvalidInput(format!(
            "unknown scan preset '{other}' (expected fig2a, fig2b, fig2c, fig2d, fig3a or fig3b)"
        ))),
    }
}

/// Normalises a phase for comparisons across the `2π` seam.
pub fn phase_distance(a: f64, b: f64) -> f64 {
    let d = wrap_phase(a - b);
    d.min(TAU - d)
}
