//! Fixed-step simulation of one switching operation against the true plant,
//! with impact detection and the impact-velocity cost.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedforward::FeedforwardSignal;
use crate::model::{state_derivative, ActuatorState, PhysicalParams, StateRate};
use crate::trajectory::TrajectorySpec;

/// Impact speed of the nominal actuator under a constant 30 V activation,
/// from a 0.1 us reference integration.
pub const NOMINAL_BASELINE_COST: f64 = 1.977_453_112_698_815;

/// Voltage of the conventional (uncontrolled) activation.
pub const BASELINE_VOLTAGE: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimOptions {
    /// Integrator step [s].
    pub dt: f64,
    /// Absolute timeout [s]; `None` means three operation durations past `t0`.
    pub t_max: Option<f64>,
    /// Width of the bracket left by the impact bisection [s].
    pub impact_tol: f64,
    /// Cost of an operation without impact or with an invalid input [m/s].
    pub penalty_cost: f64,
    /// Mechanical end stops. Disabling them also disables impact detection.
    pub stops: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            dt: 1e-6,
            t_max: None,
            impact_tol: 1e-9,
            penalty_cost: 2.0 * NOMINAL_BASELINE_COST,
            stops: true,
        }
    }
}

impl SimOptions {
    pub fn resolved_t_max(&self, spec: &TrajectorySpec) -> f64 {
        self.t_max.unwrap_or(spec.t0 + 3.0 * spec.duration())
    }

    pub fn validate(&self, spec: &TrajectorySpec) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.resolved_t_max(spec) > spec.tf) {
            return Err(Error::Config("t_max must exceed tf".into()));
        }
        if !(self.impact_tol > 0.0) {
            return Err(Error::Config("impact_tol must be positive".into()));
        }
        if !(self.penalty_cost > 0.0 && self.penalty_cost.is_finite()) {
            return Err(Error::Config("penalty_cost must be positive".into()));
        }
        Ok(())
    }
}

/// Coil voltage applied during an operation.
#[derive(Debug, Clone, Copy)]
pub enum Drive<'a> {
    Feedforward(&'a FeedforwardSignal),
    Constant(f64),
    /// The controller could not produce a signal for this candidate.
    Invalid,
}

impl Drive<'_> {
    #[inline]
    fn voltage_at(&self, t: f64) -> f64 {
        match self {
            Drive::Feedforward(sig) => sig.voltage_at(t),
            Drive::Constant(u) => *u,
            Drive::Invalid => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t: f64,
    pub z: f64,
    pub v: f64,
    pub lambda: f64,
    pub u: f64,
}

/// Record of one simulated switching operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperationResult {
    pub impact_time: Option<f64>,
    pub impact_velocity: Option<f64>,
    /// `|v_c|` when an impact occurred, otherwise the penalty.
    pub cost: f64,
    /// Smallest remaining distance to the end position during the
    /// operation; zero after an impact.
    pub closest_gap: f64,
    #[serde(skip)]
    pub trace: Option<Vec<TraceSample>>,
}

impl OperationResult {
    pub fn penalty(penalty_cost: f64, closest_gap: f64) -> Self {
        OperationResult {
            impact_time: None,
            impact_velocity: None,
            cost: penalty_cost,
            closest_gap,
            trace: None,
        }
    }

    pub fn impacted(&self) -> bool {
        self.impact_velocity.is_some()
    }

    /// Writes the trace as CSV `t,z,v,lambda,u`; an empty table when no trace
    /// was recorded.
    pub fn write_trace_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,z,v,lambda,u")?;
        for s in self.trace.iter().flatten() {
            writeln!(w, "{},{},{},{},{}", s.t, s.z, s.v, s.lambda, s.u)?;
        }
        Ok(())
    }
}

/// Cost of an operation: the impact speed, or the penalty without impact.
pub fn cost_of(result: &OperationResult, penalty_cost: f64) -> f64 {
    match result.impact_velocity {
        Some(v) => v.abs(),
        None => penalty_cost,
    }
}

fn rates(s: &ActuatorState, u: f64, p: &PhysicalParams, t: f64) -> Result<StateRate> {
    state_derivative(s, u, p).map_err(|e| Error::SimulationDiverged {
        t,
        reason: e.to_string(),
    })
}

#[inline]
fn advance(s: &ActuatorState, r: &StateRate, h: f64) -> ActuatorState {
    ActuatorState {
        z: s.z + h * r.dz,
        v: s.v + h * r.dv,
        lambda: s.lambda + h * r.dlambda,
    }
}

/// One classic fourth-order Runge-Kutta step of length `h` from time `t`.
fn rk4_step(
    s: &ActuatorState,
    t: f64,
    h: f64,
    drive: &Drive,
    p: &PhysicalParams,
) -> Result<ActuatorState> {
    let u_mid = drive.voltage_at(t + 0.5 * h);
    let k1 = rates(s, drive.voltage_at(t), p, t)?;
    let k2 = rates(&advance(s, &k1, 0.5 * h), u_mid, p, t)?;
    let k3 = rates(&advance(s, &k2, 0.5 * h), u_mid, p, t)?;
    let k4 = rates(&advance(s, &k3, h), drive.voltage_at(t + h), p, t)?;
    let w = h / 6.0;
    Ok(ActuatorState {
        z: s.z + w * (k1.dz + 2.0 * k2.dz + 2.0 * k3.dz + k4.dz),
        v: s.v + w * (k1.dv + 2.0 * k2.dv + 2.0 * k3.dv + k4.dv),
        lambda: s.lambda + w * (k1.dlambda + 2.0 * k2.dlambda + 2.0 * k3.dlambda + k4.dlambda),
    })
}

/// Integrates the plant from `init` at `spec.t0` under `drive` until the core
/// crosses the end position `spec.zf` or the timeout expires.
///
/// Motion behind the start stop `spec.z0` is blocked: the position is pinned
/// and any velocity pointing away from the stroke is zeroed. The crossing is
/// located by bisection on the length of a partial step from the last state
/// before impact.
pub fn simulate_operation(
    p_true: &PhysicalParams,
    drive: Drive,
    init: ActuatorState,
    spec: &TrajectorySpec,
    opts: &SimOptions,
    record_trace: bool,
) -> Result<OperationResult> {
    if matches!(drive, Drive::Invalid) {
        return Ok(OperationResult::penalty(opts.penalty_cost, (spec.zf - spec.z0).abs()));
    }
    let dir = (spec.zf - spec.z0).signum();
    let t_max = opts.resolved_t_max(spec);
    let crossed = |s: &ActuatorState| opts.stops && (s.z - spec.zf) * dir >= 0.0;

    let mut trace = record_trace.then(Vec::new);
    let mut s = init;
    let mut gap = (spec.zf - s.z).abs();
    let mut t = spec.t0;
    let mut k: u64 = 0;
    loop {
        if let Some(tr) = trace.as_mut() {
            tr.push(TraceSample {
                t,
                z: s.z,
                v: s.v,
                lambda: s.lambda,
                u: drive.voltage_at(t),
            });
        }
        if t >= t_max {
            let mut res = OperationResult::penalty(opts.penalty_cost, gap);
            res.trace = trace;
            return Ok(res);
        }
        let mut next = rk4_step(&s, t, opts.dt, &drive, p_true)?;
        if !next.is_finite() {
            return Err(Error::SimulationDiverged {
                t,
                reason: "non-finite state".into(),
            });
        }
        if opts.stops && (next.z - spec.z0) * dir < 0.0 {
            next.z = spec.z0;
            if next.v * dir < 0.0 {
                next.v = 0.0;
            }
        }
        if crossed(&next) {
            let (tau, hit) = refine_impact(&s, t, opts.dt, &drive, p_true, spec.zf, opts.impact_tol, &crossed)?;
            if let Some(tr) = trace.as_mut() {
                tr.push(TraceSample {
                    t: t + tau,
                    z: hit.z,
                    v: hit.v,
                    lambda: hit.lambda,
                    u: drive.voltage_at(t + tau),
                });
            }
            return Ok(OperationResult {
                impact_time: Some(t + tau),
                impact_velocity: Some(hit.v),
                cost: hit.v.abs(),
                closest_gap: 0.0,
                trace,
            });
        }
        s = next;
        gap = gap.min((spec.zf - s.z).abs());
        k += 1;
        t = spec.t0 + k as f64 * opts.dt;
    }
}

#[allow(clippy::too_many_arguments)]
fn refine_impact(
    s: &ActuatorState,
    t: f64,
    dt: f64,
    drive: &Drive,
    p: &PhysicalParams,
    z_end: f64,
    tol: f64,
    crossed: &dyn Fn(&ActuatorState) -> bool,
) -> Result<(f64, ActuatorState)> {
    let (mut lo, mut hi) = (0.0, dt);
    let (mut s_lo, mut s_hi) = (*s, rk4_step(s, t, dt, drive, p)?);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let s_mid = rk4_step(s, t, mid, drive, p)?;
        if crossed(&s_mid) {
            hi = mid;
            s_hi = s_mid;
        } else {
            lo = mid;
            s_lo = s_mid;
        }
    }
    // linear interpolation inside the final bracket
    let span = s_hi.z - s_lo.z;
    let frac = if span != 0.0 { ((z_end - s_lo.z) / span).clamp(0.0, 1.0) } else { 1.0 };
    let hit = ActuatorState {
        z: z_end,
        v: s_lo.v + frac * (s_hi.v - s_lo.v),
        lambda: s_lo.lambda + frac * (s_hi.lambda - s_lo.lambda),
    };
    Ok((lo + frac * (hi - lo), hit))
}

/// Cost of a de-energized start under a constant voltage.
pub fn constant_voltage_cost(
    p_true: &PhysicalParams,
    voltage: f64,
    spec: &TrajectorySpec,
    opts: &SimOptions,
) -> Result<f64> {
    let init = ActuatorState::new(spec.z0, 0.0, 0.0);
    Ok(simulate_operation(p_true, Drive::Constant(voltage), init, spec, opts, false)?.cost)
}
