//! Quintic rest-to-rest reference trajectory for a soft landing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary data of a switching operation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySpec {
    /// Start time [s].
    pub t0: f64,
    /// End time [s].
    pub tf: f64,
    /// Start position [m].
    pub z0: f64,
    /// End position [m].
    pub zf: f64,
}

impl TrajectorySpec {
    /// Closing stroke of the reference relay.
    pub const NOMINAL: TrajectorySpec = TrajectorySpec {
        t0: 0.0,
        tf: 3.5e-3,
        z0: 1e-3,
        zf: 0.0,
    };

    pub fn duration(&self) -> f64 {
        self.tf - self.t0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t0.is_finite() && self.tf.is_finite() && self.tf > self.t0) {
            return Err(Error::InvalidTrajectory(format!(
                "need tf > t0, got t0 = {}, tf = {}",
                self.t0, self.tf
            )));
        }
        if !(self.z0.is_finite() && self.zf.is_finite()) || self.z0 == self.zf {
            return Err(Error::InvalidTrajectory(format!(
                "need distinct finite end positions, got z0 = {}, zf = {}",
                self.z0, self.zf
            )));
        }
        Ok(())
    }

    /// Upper end of the stroke, whichever of the two positions it is.
    pub fn upper(&self) -> f64 {
        self.z0.max(self.zf)
    }
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self::NOMINAL
    }
}

/// Desired position and its first three time derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub z: f64,
    pub dz: f64,
    pub ddz: f64,
    pub dddz: f64,
}

/// Fifth-degree polynomial in normalized time `s = (t - t0) / (tf - t0)`
/// with zero velocity and acceleration at both ends.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    spec: TrajectorySpec,
    coefficients: [f64; 6],
}

impl Trajectory {
    pub fn spec(&self) -> &TrajectorySpec {
        &self.spec
    }

    /// Coefficients of `z_d` as a polynomial in normalized time, lowest
    /// degree first.
    pub fn coefficients(&self) -> &[f64; 6] {
        &self.coefficients
    }

    pub fn eval(&self, t: f64) -> Result<TrajectoryPoint> {
        eval_trajectory(self, t)
    }
}

pub fn make_quintic(spec: TrajectorySpec) -> Result<Trajectory> {
    spec.validate()?;
    let d = spec.zf - spec.z0;
    Ok(Trajectory {
        spec,
        coefficients: [spec.z0, 0.0, 0.0, 10.0 * d, -15.0 * d, 6.0 * d],
    })
}

pub fn eval_trajectory(traj: &Trajectory, t: f64) -> Result<TrajectoryPoint> {
    let spec = &traj.spec;
    if !(t >= spec.t0 && t <= spec.tf) {
        return Err(Error::OutOfDomain {
            t,
            t0: spec.t0,
            tf: spec.tf,
        });
    }
    let big_t = spec.duration();
    let s = (t - spec.t0) / big_t;
    let c = &traj.coefficients;

    // Horner on the polynomial and its first three derivatives in s.
    let mut p = [0.0f64; 4];
    for k in (0..6).rev() {
        p[3] = p[3] * s + p[2];
        p[2] = p[2] * s + p[1];
        p[1] = p[1] * s + p[0];
        p[0] = p[0] * s + c[k];
    }
    // p[j] now holds d^j/ds^j divided by j!
    Ok(TrajectoryPoint {
        z: p[0],
        dz: p[1] / big_t,
        ddz: 2.0 * p[2] / (big_t * big_t),
        dddz: 6.0 * p[3] / (big_t * big_t * big_t),
    })
}
