//! Lumped-parameter model of a single-coil reluctance actuator.
//!
//! State is `(z, v, lambda)`: position of the movable core, its velocity and
//! the coil flux linkage. The magnetic circuit is described by a reluctance
//! function with a saturable core term and a fringing gap term.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of uncertain physical parameters (and of control multipliers).
pub const N_PARAMS: usize = 9;

/// Positions below this value are clamped before evaluating the gap term,
/// whose `z * log(kappa6 / z)` factor is singular at zero.
pub const Z_EPS: f64 = 1e-9;

/// Names of the uncertain parameters, in control-vector order.
pub const PARAM_NAMES: [&str; N_PARAMS] = [
    "k_s",
    "z_s",
    "m",
    "kappa1",
    "lambda_sat",
    "kappa3",
    "kappa4",
    "kappa5",
    "kappa6",
];

/// Physical parameters of the actuator.
///
/// The first nine fields are the uncertain parameter vector; `r_coil` is
/// measured precisely and never scaled or perturbed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicalParams {
    /// Spring stiffness [N/m].
    pub k_s: f64,
    /// Spring resting position [m].
    pub z_s: f64,
    /// Moving mass [kg].
    pub m: f64,
    /// Saturable core reluctance gain [1/H].
    pub kappa1: f64,
    /// Saturation flux linkage [Wb].
    pub lambda_sat: f64,
    /// Gap reluctance offset [1/H].
    pub kappa3: f64,
    /// Gap reluctance slope [1/H/m].
    pub kappa4: f64,
    /// Fringing shape factor [1/m].
    pub kappa5: f64,
    /// Fringing length scale [m].
    pub kappa6: f64,
    /// Coil resistance [Ohm].
    #[serde(rename = "R_coil")]
    pub r_coil: f64,
}

impl PhysicalParams {
    /// Nominal values of the reference relay.
    pub const NOMINAL: PhysicalParams = PhysicalParams {
        k_s: 55.0,
        z_s: 0.015,
        m: 1.6e-3,
        kappa1: 1.35,
        lambda_sat: 0.0229,
        kappa3: 3.88,
        kappa4: 7.67e4,
        kappa5: 1320.0,
        kappa6: 9.73e-3,
        r_coil: 50.0,
    };

    /// The uncertain parameters as a vector, in control-vector order.
    pub fn uncertain(&self) -> [f64; N_PARAMS] {
        [
            self.k_s,
            self.z_s,
            self.m,
            self.kappa1,
            self.lambda_sat,
            self.kappa3,
            self.kappa4,
            self.kappa5,
            self.kappa6,
        ]
    }

    pub fn from_uncertain(p: [f64; N_PARAMS], r_coil: f64) -> Self {
        PhysicalParams {
            k_s: p[0],
            z_s: p[1],
            m: p[2],
            kappa1: p[3],
            lambda_sat: p[4],
            kappa3: p[5],
            kappa4: p[6],
            kappa5: p[7],
            kappa6: p[8],
            r_coil,
        }
    }

    /// Element-wise product of the uncertain parameters with `factors`.
    /// The coil resistance is left untouched.
    pub fn scaled(&self, factors: &[f64; N_PARAMS]) -> Self {
        let mut p = self.uncertain();
        for (value, f) in p.iter_mut().zip(factors) {
            *value *= f;
        }
        Self::from_uncertain(p, self.r_coil)
    }

    /// Checks positivity of every field and that the logarithm argument
    /// `kappa6 / z` exceeds one over the whole stroke `[0, z_upper]`.
    pub fn validate(&self, z_upper: f64) -> Result<()> {
        let fields = self.uncertain();
        for (name, value) in PARAM_NAMES.iter().zip(fields) {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParams {
                    name,
                    reason: format!("must be finite and strictly positive, got {value}"),
                });
            }
        }
        if !(self.r_coil.is_finite() && self.r_coil > 0.0) {
            return Err(Error::InvalidParams {
                name: "R_coil",
                reason: format!("must be finite and strictly positive, got {}", self.r_coil),
            });
        }
        if self.kappa6 <= z_upper {
            return Err(Error::InvalidParams {
                name: "kappa6",
                reason: format!("must exceed the stroke limit {z_upper} m, got {}", self.kappa6),
            });
        }
        Ok(())
    }
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self::NOMINAL
    }
}

/// Mechanical and magnetic state of the actuator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorState {
    /// Position [m].
    pub z: f64,
    /// Velocity [m/s].
    pub v: f64,
    /// Flux linkage [Wb].
    pub lambda: f64,
}

impl ActuatorState {
    pub fn new(z: f64, v: f64, lambda: f64) -> Self {
        ActuatorState { z, v, lambda }
    }

    pub fn is_finite(&self) -> bool {
        self.z.is_finite() && self.v.is_finite() && self.lambda.is_finite()
    }
}

/// Time derivative of [`ActuatorState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateRate {
    pub dz: f64,
    pub dv: f64,
    pub dlambda: f64,
}

#[inline]
fn clamp_z(z: f64) -> f64 {
    z.max(Z_EPS)
}

/// `1 + kappa5 * z * ln(kappa6 / z)` and its derivative with respect to `z`.
#[inline]
fn fringing(z: f64, p: &PhysicalParams) -> (f64, f64) {
    let log = (p.kappa6 / z).ln();
    (1.0 + p.kappa5 * z * log, p.kappa5 * (log - 1.0))
}

/// Reluctance of the magnetic circuit [1/H].
pub fn reluctance(z: f64, lambda: f64, p: &PhysicalParams) -> Result<f64> {
    let ratio = lambda.abs() / p.lambda_sat;
    if !(ratio < 1.0) {
        return Err(Error::Saturation {
            flux: lambda,
            lambda_sat: p.lambda_sat,
        });
    }
    let z = clamp_z(z);
    let (g, _) = fringing(z, p);
    Ok(p.kappa1 / (1.0 - ratio) + p.kappa3 + p.kappa4 * z / g)
}

/// Spatial derivative of the reluctance, `kappa4 (1 + kappa5 z) / g^2`.
/// Independent of the flux linkage.
pub fn d_reluctance_dz(z: f64, p: &PhysicalParams) -> f64 {
    let z = clamp_z(z);
    let (g, _) = fringing(z, p);
    p.kappa4 * (1.0 + p.kappa5 * z) / (g * g)
}

/// Second spatial derivative of the reluctance.
pub fn d2_reluctance_dz2(z: f64, p: &PhysicalParams) -> f64 {
    let z = clamp_z(z);
    let (g, dg) = fringing(z, p);
    p.kappa4 * (p.kappa5 * g - 2.0 * (1.0 + p.kappa5 * z) * dg) / (g * g * g)
}

/// Magnetic force on the movable core [N]. Never positive: the coil always
/// attracts the core toward `z = 0`.
pub fn magnetic_force(z: f64, lambda: f64, p: &PhysicalParams) -> f64 {
    -0.5 * lambda * lambda * d_reluctance_dz(z, p)
}

/// Right-hand side of the state equations under coil voltage `u`.
pub fn state_derivative(s: &ActuatorState, u: f64, p: &PhysicalParams) -> Result<StateRate> {
    let rel = reluctance(s.z, s.lambda, p)?;
    let spring = -p.k_s * (s.z - p.z_s);
    Ok(StateRate {
        dz: s.v,
        dv: (spring + magnetic_force(s.z, s.lambda, p)) / p.m,
        dlambda: -p.r_coil * s.lambda * rel + u,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const NOM: PhysicalParams = PhysicalParams::NOMINAL;

    fn rel_err(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn reluctance_at_closed_gap_is_core_plus_offset() {
        let r = reluctance(0.0, 0.0, &NOM).unwrap();
        assert!((r - 5.23).abs() < 1e-4, "{r}");
        // clamp and the explicit tiny position agree
        assert_eq!(r, reluctance(1e-9, 0.0, &NOM).unwrap());
    }

    #[test]
    fn reluctance_at_open_gap() {
        // 1.35 + 3.88 + 76.7 / (1 + 1.32 ln 9.73)
        let expected = 1.35 + 3.88 + 76.7 / (1.0 + 1.32 * (9.73f64).ln());
        let r = reluctance(1e-3, 0.0, &NOM).unwrap();
        assert!(rel_err(r, expected) < 1e-12);
        assert!((r - 24.39).abs() < 5e-3);
    }

    #[test]
    fn reluctance_saturation_is_domain_error() {
        let near = reluctance(1e-3, NOM.lambda_sat * (1.0 - 1e-9), &NOM).unwrap();
        assert!(near > 1e8);
        match reluctance(1e-3, NOM.lambda_sat, &NOM) {
            Err(Error::Saturation { flux, .. }) => assert_eq!(flux, NOM.lambda_sat),
            other => panic!("expected saturation error, got {other:?}"),
        }
        assert!(reluctance(1e-3, -NOM.lambda_sat, &NOM).is_err());
    }

    #[test]
    fn gap_slope_values() {
        let d0 = d_reluctance_dz(1e-9, &NOM);
        assert!(rel_err(d0, NOM.kappa4) < 1e-4, "{d0}");
        let d = d_reluctance_dz(1e-3, &NOM);
        let h = 1e-8;
        let fd = (reluctance(1e-3 + h, 0.0, &NOM).unwrap() - reluctance(1e-3 - h, 0.0, &NOM).unwrap())
            / (2.0 * h);
        assert!(rel_err(d, fd) < 1e-6, "{d} vs {fd}");
        assert!((d - 1.110e4).abs() < 5.0);
    }

    #[test]
    fn gap_curvature_values() {
        let d2 = d2_reluctance_dz2(1e-3, &NOM);
        let h = 1e-8;
        let fd = (d_reluctance_dz(1e-3 + h, &NOM) - d_reluctance_dz(1e-3 - h, &NOM)) / (2.0 * h);
        assert!(rel_err(d2, fd) < 1e-3);
        assert!(rel_err(d2, -3.0e6) < 0.01, "{d2}");
        for z in [2e-4, 5e-4, 9e-4] {
            let h = 1e-6;
            let r = |z| reluctance(z, 0.0, &NOM).unwrap();
            let fd2 = (r(z + h) - 2.0 * r(z) + r(z - h)) / (h * h);
            assert!(rel_err(d2_reluctance_dz2(z, &NOM), fd2) < 0.01, "z = {z}");
        }
    }

    #[test]
    fn derivatives_match_finite_differences_log_spaced() {
        for k in 0..20 {
            let z = 10f64.powf(-6.0 + 3.0 * k as f64 / 19.0);
            let h = z * 1e-5;
            let r = |z| reluctance(z, 0.0, &NOM).unwrap();
            let fd1 = (r(z + h) - r(z - h)) / (2.0 * h);
            let fd2 = (d_reluctance_dz(z + h, &NOM) - d_reluctance_dz(z - h, &NOM)) / (2.0 * h);
            assert!(rel_err(d_reluctance_dz(z, &NOM), fd1) < 1e-3, "z = {z}");
            assert!(rel_err(d2_reluctance_dz2(z, &NOM), fd2) < 1e-3, "z = {z}");
        }
    }

    #[test]
    fn gap_terms_ignore_flux() {
        for z in [1e-9, 1e-4, 5e-4, 1e-3] {
            let r0 = reluctance(z, 0.0, &NOM).unwrap();
            let r1 = reluctance(z, 0.5 * NOM.lambda_sat, &NOM).unwrap();
            // only the core term changes, by exactly kappa1
            assert!(((r1 - r0) - NOM.kappa1).abs() < 1e-12);
        }
    }

    #[test]
    fn force_balances_spring_at_closed_gap() {
        assert_eq!(magnetic_force(5e-4, 0.0, &NOM), 0.0);
        let f = magnetic_force(0.0, 4.638e-3, &NOM);
        assert!((f + 0.825).abs() < 1e-3, "{f}");
        let lambda = (2.0 * NOM.k_s * NOM.z_s / d_reluctance_dz(0.0, &NOM)).sqrt();
        let balance = magnetic_force(0.0, lambda, &NOM) + NOM.k_s * NOM.z_s;
        assert!(balance.abs() < 1e-12);
    }

    #[test]
    fn state_derivative_examples() {
        let s = ActuatorState::new(1e-3, 0.0, 0.0);
        let r = state_derivative(&s, 0.0, &NOM).unwrap();
        assert!((r.dv - 481.25).abs() < 1e-9);
        assert_eq!(state_derivative(&s, 30.0, &NOM).unwrap().dlambda, 30.0);
        let s = ActuatorState::new(4e-4, -0.3, 0.01);
        assert_eq!(state_derivative(&s, 12.0, &NOM).unwrap().dz, -0.3);
    }

    #[test]
    fn validation_rejects_bad_params() {
        assert!(NOM.validate(1e-3).is_ok());
        let mut p = NOM;
        p.m = 0.0;
        assert!(p.validate(1e-3).is_err());
        let mut p = NOM;
        p.kappa6 = 5e-4;
        assert!(matches!(p.validate(1e-3), Err(Error::InvalidParams { name: "kappa6", .. })));
        let mut p = NOM;
        p.r_coil = -1.0;
        assert!(p.validate(1e-3).is_err());
    }

    #[test]
    fn json_uses_field_names() {
        let json = serde_json::to_value(NOM).unwrap();
        assert_eq!(json["R_coil"], 50.0);
        assert_eq!(json["kappa4"], 7.67e4);
        let back: PhysicalParams = serde_json::from_value(json).unwrap();
        assert_eq!(back, NOM);
    }

    #[test]
    fn hadamard_scaling_leaves_resistance() {
        let mut f = [1.0; N_PARAMS];
        f[6] = 1.2;
        let p = NOM.scaled(&f);
        assert_eq!(p.kappa4, NOM.kappa4 * 1.2);
        assert_eq!(p.r_coil, NOM.r_coil);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn params_within(frac: f64) -> impl Strategy<Value = PhysicalParams> {
            proptest::collection::vec(1.0 - frac..1.0 + frac, N_PARAMS).prop_map(|f| {
                let mut a = [0.0; N_PARAMS];
                a.copy_from_slice(&f);
                PhysicalParams::NOMINAL.scaled(&a)
            })
        }

        proptest! {
            #[test]
            fn reluctance_and_slope_positive(p in params_within(0.3), z in 1e-9f64..1e-3, x in 0.0f64..0.9) {
                let lambda = x * p.lambda_sat;
                prop_assert!(reluctance(z, lambda, &p).unwrap() > 0.0);
                prop_assert!(d_reluctance_dz(z, &p) > 0.0);
            }

            #[test]
            fn reluctance_monotone_in_flux(z in 1e-9f64..1e-3, a in 0.0f64..0.95, b in 0.0f64..0.95) {
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                let p = PhysicalParams::NOMINAL;
                prop_assert!(reluctance(z, lo * p.lambda_sat, &p).unwrap() <= reluctance(z, hi * p.lambda_sat, &p).unwrap());
                prop_assert!(reluctance(z, -hi * p.lambda_sat, &p).unwrap() == reluctance(z, hi * p.lambda_sat, &p).unwrap());
            }
        }
    }
}
