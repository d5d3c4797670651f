//! Flatness-based inversion of the actuator model and the parameterized
//! feedforward voltage law.
//!
//! With position as flat output, the flux linkage follows from the force
//! balance and the voltage from the electrical equation. The law is
//! parameterized by dimensionless multipliers `theta` applied element-wise to
//! the nominal physical parameters.

use std::io::Write;
use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{d2_reluctance_dz2, d_reluctance_dz, reluctance, PhysicalParams, N_PARAMS};
use crate::trajectory::{Trajectory, TrajectoryPoint};

/// Dimensionless control multipliers, one per uncertain parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ControlParams(pub [f64; N_PARAMS]);

impl ControlParams {
    /// The anchor of every search: all multipliers equal to one.
    pub const NOMINAL: ControlParams = ControlParams([1.0; N_PARAMS]);

    pub fn as_array(&self) -> &[f64; N_PARAMS] {
        &self.0
    }

    /// Effective model parameters `p_nom ⊙ theta`.
    pub fn apply(&self, p_nom: &PhysicalParams) -> PhysicalParams {
        p_nom.scaled(&self.0)
    }
}

impl Default for ControlParams {
    fn default() -> Self {
        Self::NOMINAL
    }
}

impl Index<usize> for ControlParams {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Box constraint on every component of `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThetaBox {
    pub min: f64,
    pub max: f64,
}

impl ThetaBox {
    pub fn validate(&self) -> Result<()> {
        if !(self.min > 0.0 && self.min < 1.0 && self.max > 1.0 && self.max.is_finite()) {
            return Err(Error::Config(format!(
                "theta box must satisfy 0 < min < 1 < max, got [{}, {}]",
                self.min, self.max
            )));
        }
        Ok(())
    }

    /// Clamps every component into the box; the flag reports whether any
    /// component moved.
    pub fn clamp(&self, theta: [f64; N_PARAMS]) -> (ControlParams, bool) {
        let mut clamped = false;
        let mut out = theta;
        for v in out.iter_mut() {
            let c = v.clamp(self.min, self.max);
            if c != *v {
                clamped = true;
                *v = c;
            }
        }
        (ControlParams(out), clamped)
    }

    pub fn contains(&self, theta: &ControlParams) -> bool {
        theta.0.iter().all(|v| *v >= self.min && *v <= self.max)
    }
}

impl Default for ThetaBox {
    fn default() -> Self {
        ThetaBox { min: 0.7, max: 1.3 }
    }
}

/// Initial flux linkage used by a simulated operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PreCharge {
    /// Start at the flux the controller intends at `t0`.
    #[default]
    Ideal,
    /// Start de-energized.
    Zero,
}

/// Flux linkage required to hold the desired position and acceleration.
pub fn flat_flux(z: f64, ddz: f64, p: &PhysicalParams) -> Result<f64> {
    let radicand = -2.0 * (p.k_s * (z - p.z_s) + p.m * ddz) / d_reluctance_dz(z, p);
    if !(radicand >= 0.0) {
        return Err(Error::InfeasibleFlatness { z, zdd: ddz });
    }
    let flux = radicand.sqrt();
    if flux >= p.lambda_sat {
        return Err(Error::SaturationInfeasible {
            z,
            flux,
            lambda_sat: p.lambda_sat,
        });
    }
    Ok(flux)
}

fn flux_rate_given(flux: f64, z: f64, dz: f64, dddz: f64, p: &PhysicalParams) -> Result<f64> {
    if flux == 0.0 {
        return Err(Error::SingularFlatness { z });
    }
    let numerator = -p.k_s * dz - p.m * dddz - 0.5 * flux * flux * d2_reluctance_dz2(z, p) * dz;
    Ok(numerator / (flux * d_reluctance_dz(z, p)))
}

/// Time derivative of [`flat_flux`] along a motion with the given
/// derivatives.
pub fn flat_flux_rate(z: f64, dz: f64, ddz: f64, dddz: f64, p: &PhysicalParams) -> Result<f64> {
    let flux = flat_flux(z, ddz, p)?;
    flux_rate_given(flux, z, dz, dddz, p)
}

/// Voltage that makes the model follow `point` exactly, given effective
/// parameters.
pub fn flat_voltage(point: &TrajectoryPoint, p: &PhysicalParams) -> Result<f64> {
    let flux = flat_flux(point.z, point.ddz, p)?;
    let rate = flux_rate_given(flux, point.z, point.dz, point.dddz, p)?;
    Ok(p.r_coil * reluctance(point.z, flux, p)? * flux + rate)
}

/// Feedforward voltage `u_ff(t, theta)` along the reference trajectory.
pub fn feedforward_voltage(
    t: f64,
    theta: &ControlParams,
    traj: &Trajectory,
    p_nom: &PhysicalParams,
) -> Result<f64> {
    let point = traj.eval(t)?;
    flat_voltage(&point, &theta.apply(p_nom))
}

/// Flux linkage the controller expects at the start of the operation.
pub fn initial_flux(theta: &ControlParams, traj: &Trajectory, p_nom: &PhysicalParams) -> Result<f64> {
    let start = traj.eval(traj.spec().t0)?;
    flat_flux(start.z, start.ddz, &theta.apply(p_nom))
}

/// Uniformly spaced time nodes on `[t0, tf]`, endpoints exact.
pub fn uniform_grid(t0: f64, tf: f64, n: usize) -> Vec<f64> {
    let step = (tf - t0) / (n - 1) as f64;
    (0..n)
        .map(|i| if i + 1 == n { tf } else { t0 + i as f64 * step })
        .collect()
}

/// Feedforward law sampled on a uniform grid, held constant after `tf`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedforwardSignal {
    t0: f64,
    tf: f64,
    values: Vec<f64>,
    hold_value: f64,
}

impl FeedforwardSignal {
    pub fn new(t0: f64, tf: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 || !(tf > t0) {
            return Err(Error::Config("a signal needs at least two samples on t0 < tf".into()));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Config(format!("non-finite voltage sample {bad}")));
        }
        let hold_value = *values.last().unwrap();
        Ok(FeedforwardSignal {
            t0,
            tf,
            values,
            hold_value,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn hold_value(&self) -> f64 {
        self.hold_value
    }

    pub fn times(&self) -> Vec<f64> {
        uniform_grid(self.t0, self.tf, self.values.len())
    }

    /// Piecewise-linear interpolation of the samples; the first sample
    /// before `t0` and the hold value after `tf`.
    pub fn voltage_at(&self, t: f64) -> f64 {
        if t <= self.t0 {
            return self.values[0];
        }
        if t >= self.tf {
            return self.hold_value;
        }
        let intervals = (self.values.len() - 1) as f64;
        let x = (t - self.t0) / (self.tf - self.t0) * intervals;
        let i = (x.floor() as usize).min(self.values.len() - 2);
        let frac = x - i as f64;
        self.values[i] + frac * (self.values[i + 1] - self.values[i])
    }

    /// Two-column CSV: `time_s,voltage_V`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "time_s,voltage_V")?;
        for (t, u) in self.times().iter().zip(&self.values) {
            writeln!(w, "{t},{u}")?;
        }
        Ok(())
    }
}

/// Samples `u_ff(·, theta)` on `n_samples` uniform nodes. Any infeasible
/// node invalidates the whole signal.
pub fn sample_feedforward(
    theta: &ControlParams,
    traj: &Trajectory,
    p_nom: &PhysicalParams,
    n_samples: usize,
) -> Result<FeedforwardSignal> {
    if n_samples < 2 {
        return Err(Error::Config(format!("n_samples must be at least 2, got {n_samples}")));
    }
    let spec = traj.spec();
    let p = theta.apply(p_nom);
    let values = uniform_grid(spec.t0, spec.tf, n_samples)
        .into_iter()
        .map(|t| flat_voltage(&traj.eval(t)?, &p))
        .collect::<Result<Vec<_>>>()?;
    FeedforwardSignal::new(spec.t0, spec.tf, values)
}
