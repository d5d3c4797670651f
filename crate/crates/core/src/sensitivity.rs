//! Sensitivity of the feedforward law to the control multipliers, the
//! Fisher information matrix built from it, and the two reduced search
//! parameterizations derived from them.
//!
//! All integrals over `[t0, tf]` use the trapezoid rule on uniform nodes, so
//! the integral-square sensitivity is exactly the diagonal of the Fisher
//! matrix.

use serde::{Deserialize, Serialize};

use crate::eigen::jacobi_eigen;
use crate::error::{Error, Result};
use crate::feedforward::{flat_voltage, uniform_grid, ControlParams, ThetaBox};
use crate::model::{PhysicalParams, N_PARAMS};
use crate::trajectory::Trajectory;

/// Default relative step of the central differences.
pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// Default number of quadrature nodes (5 us spacing on the nominal stroke).
pub const DEFAULT_NODES: usize = 701;

pub type Row = [f64; N_PARAMS];

/// Sensitivity rows `d u_ff / d theta` on uniform quadrature nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityGrid {
    pub times: Vec<f64>,
    pub rows: Vec<Row>,
}

fn trapezoid_weights(times: &[f64]) -> Vec<f64> {
    let n = times.len();
    let step = (times[n - 1] - times[0]) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == 0 || i + 1 == n { 0.5 * step } else { step })
        .collect()
}

impl SensitivityGrid {
    pub fn new(times: Vec<f64>, rows: Vec<Row>) -> Result<Self> {
        if times.len() < 2 || times.len() != rows.len() {
            return Err(Error::Config(format!(
                "sensitivity grid needs >= 2 nodes and one row per node ({} nodes, {} rows)",
                times.len(),
                rows.len()
            )));
        }
        Ok(SensitivityGrid { times, rows })
    }

    /// Trapezoid integral of the element-wise squared rows.
    pub fn integral_square(&self) -> Row {
        let mut out = [0.0; N_PARAMS];
        for (w, row) in trapezoid_weights(&self.times).iter().zip(&self.rows) {
            for (o, s) in out.iter_mut().zip(row) {
                *o += w * s * s;
            }
        }
        out
    }

    /// Trapezoid integral of the outer products of the rows.
    pub fn fisher(&self) -> FisherMatrix {
        let mut f = [[0.0; N_PARAMS]; N_PARAMS];
        for (w, row) in trapezoid_weights(&self.times).iter().zip(&self.rows) {
            for i in 0..N_PARAMS {
                let wi = w * row[i];
                for j in 0..N_PARAMS {
                    f[i][j] += wi * row[j];
                }
            }
        }
        FisherMatrix(f)
    }
}

/// Symmetric positive semidefinite information matrix [V^2 s].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherMatrix(pub [[f64; N_PARAMS]; N_PARAMS]);

impl FisherMatrix {
    pub fn trace(&self) -> f64 {
        (0..N_PARAMS).map(|i| self.0[i][i]).sum()
    }

    pub fn diagonal(&self) -> Row {
        std::array::from_fn(|i| self.0[i][i])
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `x^T F x`.
    pub fn quadratic_form(&self, x: &Row) -> f64 {
        let mut s = 0.0;
        for i in 0..N_PARAMS {
            for j in 0..N_PARAMS {
                s += x[i] * self.0[i][j] * x[j];
            }
        }
        s
    }
}

/// Eigen-decomposition of the Fisher matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenBasis {
    /// Eigenvalues, descending.
    pub values: Row,
    /// `vectors[k]` is the unit eigenvector of `values[k]`; its
    /// largest-magnitude entry is positive.
    pub vectors: [Row; N_PARAMS],
}

/// Central-difference sensitivity of `u_ff(t, ·)` at `theta`.
pub fn sensitivity_row(
    t: f64,
    theta: &ControlParams,
    traj: &Trajectory,
    p_nom: &PhysicalParams,
    h: f64,
) -> Result<Row> {
    let point = traj.eval(t)?;
    let mut row = [0.0; N_PARAMS];
    for (i, out) in row.iter_mut().enumerate() {
        let probe = |sign: f64| {
            let mut th = theta.0;
            th[i] += sign * h;
            flat_voltage(&point, &p_nom.scaled(&th)).map_err(|e| Error::SensitivityInfeasible {
                component: i + 1,
                t,
                source: Box::new(e),
            })
        };
        *out = (probe(1.0)? - probe(-1.0)?) / (2.0 * h);
    }
    Ok(row)
}

pub fn sensitivity_grid(
    theta: &ControlParams,
    traj: &Trajectory,
    p_nom: &PhysicalParams,
    n_nodes: usize,
    h: f64,
) -> Result<SensitivityGrid> {
    if n_nodes < 2 {
        return Err(Error::Config(format!("n_nodes must be at least 2, got {n_nodes}")));
    }
    let spec = traj.spec();
    let times = uniform_grid(spec.t0, spec.tf, n_nodes);
    let rows = times
        .iter()
        .map(|&t| sensitivity_row(t, theta, traj, p_nom, h))
        .collect::<Result<Vec<_>>>()?;
    SensitivityGrid::new(times, rows)
}

/// Integral-square sensitivity of every multiplier.
pub fn integral_square_sensitivity(
    theta: &ControlParams,
    traj: &Trajectory,
    p_nom: &PhysicalParams,
    n_nodes: usize,
) -> Result<Row> {
    Ok(sensitivity_grid(theta, traj, p_nom, n_nodes, DEFAULT_FD_STEP)?.integral_square())
}

pub fn fisher_matrix(
    theta: &ControlParams,
    traj: &Trajectory,
    p_nom: &PhysicalParams,
    n_nodes: usize,
) -> Result<FisherMatrix> {
    Ok(sensitivity_grid(theta, traj, p_nom, n_nodes, DEFAULT_FD_STEP)?.fisher())
}

pub fn sym_eigen(f: &FisherMatrix) -> Result<EigenBasis> {
    let e = jacobi_eigen(&f.0)?;
    Ok(EigenBasis {
        values: e.values,
        vectors: e.vectors,
    })
}

/// Half the integral-square deviation of `u_ff(·, theta)` from the nominal
/// feedforward signal.
pub fn deviation_d(
    theta: &ControlParams,
    traj: &Trajectory,
    p_nom: &PhysicalParams,
    n_nodes: usize,
) -> Result<f64> {
    if n_nodes < 2 {
        return Err(Error::Config(format!("n_nodes must be at least 2, got {n_nodes}")));
    }
    let spec = traj.spec();
    let times = uniform_grid(spec.t0, spec.tf, n_nodes);
    let p = theta.apply(p_nom);
    let p_star = ControlParams::NOMINAL.apply(p_nom);
    let mut acc = 0.0;
    for (w, &t) in trapezoid_weights(&times).iter().zip(&times) {
        let point = traj.eval(t)?;
        let d = flat_voltage(&point, &p)? - flat_voltage(&point, &p_star)?;
        acc += w * d * d;
    }
    Ok(0.5 * acc)
}

/// Everything derived from the nominal sensitivity analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub s_is: Row,
    pub fisher: FisherMatrix,
    pub basis: EigenBasis,
}

/// Sensitivity analysis around the nominal multipliers.
pub fn analyze(traj: &Trajectory, p_nom: &PhysicalParams, n_nodes: usize, h: f64) -> Result<Analysis> {
    let grid = sensitivity_grid(&ControlParams::NOMINAL, traj, p_nom, n_nodes, h)?;
    let fisher = grid.fisher();
    let basis = sym_eigen(&fisher)?;
    Ok(Analysis {
        s_is: grid.integral_square(),
        fisher,
        basis,
    })
}

/// How orthogonal coordinates map back to multipliers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OrthogonalMap {
    /// `theta = theta* + V (phi - phi*)`; the anchor maps to itself.
    #[default]
    Affine,
    /// `theta = V phi`; equals the affine map only when `theta*` lies in the
    /// span of the retained eigenvectors.
    Literal,
}

/// A reduced search space and its map onto the full multiplier vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Reduction {
    /// A subset of the multipliers is searched; the rest stay at one.
    /// `free` is ascending.
    Subset { free: Vec<usize> },
    /// Search along the leading eigenvectors of the Fisher matrix.
    Orthogonal {
        columns: Vec<Row>,
        phi_star: Vec<f64>,
        map: OrthogonalMap,
    },
}

fn check_dim(r: usize) -> Result<()> {
    if !(1..=N_PARAMS).contains(&r) {
        return Err(Error::Config(format!("reduced dimension must be in 1..=9, got {r}")));
    }
    Ok(())
}

/// Keeps the `r` multipliers with the largest integral-square sensitivity;
/// ties go to the lower index.
pub fn make_subset_reduction(s_is: &Row, r: usize) -> Result<Reduction> {
    check_dim(r)?;
    let mut order: Vec<usize> = (0..N_PARAMS).collect();
    order.sort_by(|&a, &b| s_is[b].total_cmp(&s_is[a]).then(a.cmp(&b)));
    let mut free = order[..r].to_vec();
    free.sort_unstable();
    Ok(Reduction::Subset { free })
}

/// Keeps the `r` leading eigenvectors.
pub fn make_orthogonal_reduction(basis: &EigenBasis, r: usize, map: OrthogonalMap) -> Result<Reduction> {
    check_dim(r)?;
    let columns: Vec<Row> = basis.vectors[..r].to_vec();
    let phi_star = columns
        .iter()
        .map(|v| v.iter().zip(ControlParams::NOMINAL.as_array()).map(|(a, b)| a * b).sum())
        .collect();
    Ok(Reduction::Orthogonal { columns, phi_star, map })
}

impl Reduction {
    pub fn dim(&self) -> usize {
        match self {
            Reduction::Subset { free } => free.len(),
            Reduction::Orthogonal { columns, .. } => columns.len(),
        }
    }

    /// Reduced coordinates of the anchor `theta* = 1`.
    pub fn center(&self) -> Vec<f64> {
        match self {
            Reduction::Subset { free } => vec![1.0; free.len()],
            Reduction::Orthogonal { phi_star, .. } => phi_star.clone(),
        }
    }

    /// Full multiplier vector before box clamping.
    pub fn theta_unclamped(&self, x: &[f64]) -> Row {
        assert_eq!(x.len(), self.dim(), "reduced coordinate length");
        let mut theta = *ControlParams::NOMINAL.as_array();
        match self {
            Reduction::Subset { free } => {
                for (&i, &xi) in free.iter().zip(x) {
                    theta[i] = xi;
                }
            }
            Reduction::Orthogonal { columns, phi_star, map } => {
                if *map == OrthogonalMap::Literal {
                    theta = [0.0; N_PARAMS];
                }
                for (k, v) in columns.iter().enumerate() {
                    let c = match map {
                        OrthogonalMap::Affine => x[k] - phi_star[k],
                        OrthogonalMap::Literal => x[k],
                    };
                    for (t, vi) in theta.iter_mut().zip(v) {
                        *t += c * vi;
                    }
                }
            }
        }
        theta
    }

    /// Full multiplier vector for reduced coordinates `x`, clamped into the
    /// box. The flag is set when clamping changed anything.
    pub fn theta_from_reduced(&self, x: &[f64], bounds: &ThetaBox) -> (ControlParams, bool) {
        bounds.clamp(self.theta_unclamped(x))
    }

    pub fn reduced_from_theta(&self, theta: &ControlParams) -> Vec<f64> {
        match self {
            Reduction::Subset { free } => free.iter().map(|&i| theta[i]).collect(),
            Reduction::Orthogonal { columns, phi_star, map } => columns
                .iter()
                .zip(phi_star)
                .map(|(v, ps)| {
                    let dot: f64 = v.iter().zip(theta.as_array()).map(|(a, b)| a * b).sum();
                    match map {
                        // phi* + V^T (theta - 1), computed relative to the anchor
                        OrthogonalMap::Affine => {
                            ps + v.iter().zip(theta.as_array()).map(|(a, b)| a * (b - 1.0)).sum::<f64>()
                        }
                        OrthogonalMap::Literal => dot,
                    }
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{make_quintic, TrajectorySpec};
    use std::sync::OnceLock;

    const NOM: PhysicalParams = PhysicalParams::NOMINAL;

    fn traj() -> Trajectory {
        make_quintic(TrajectorySpec::NOMINAL).unwrap()
    }

    fn nominal() -> &'static Analysis {
        static A: OnceLock<Analysis> = OnceLock::new();
        A.get_or_init(|| analyze(&traj(), &NOM, DEFAULT_NODES, DEFAULT_FD_STEP).unwrap())
    }

    #[test]
    fn richardson_step_refinement() {
        let tr = traj();
        for k in 0..10 {
            let t = 3.5e-3 * (k as f64 + 0.5) / 10.0;
            let a = sensitivity_row(t, &ControlParams::NOMINAL, &tr, &NOM, 1e-5).unwrap();
            let b = sensitivity_row(t, &ControlParams::NOMINAL, &tr, &NOM, 1e-6).unwrap();
            let scale = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() <= 1e-4 * scale, "t = {t}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn rows_finite_and_nonzero() {
        let tr = traj();
        let row = sensitivity_row(1.75e-3, &ControlParams::NOMINAL, &tr, &NOM, DEFAULT_FD_STEP).unwrap();
        assert!(row.iter().all(|v| v.is_finite()));
        assert!(row.iter().any(|v| *v != 0.0));
        // at t0 the core is at rest and the jerk is the only driver of the flux rate
        let row0 = sensitivity_row(0.0, &ControlParams::NOMINAL, &tr, &NOM, DEFAULT_FD_STEP).unwrap();
        assert!(row0[2].is_finite());
    }

    #[test]
    fn infeasible_probe_names_component() {
        let tr = traj();
        let mut th = ControlParams::NOMINAL;
        th.0[2] = 1.3;
        match sensitivity_row(2.8e-3, &th, &tr, &NOM, DEFAULT_FD_STEP) {
            Err(Error::SensitivityInfeasible { component, .. }) => assert_eq!(component, 1),
            other => panic!("expected infeasible probe, got {other:?}"),
        }
    }

    #[test]
    fn least_influential_multipliers() {
        let s = nominal().s_is;
        assert!(s.iter().all(|v| *v >= 0.0));
        let mut order: Vec<usize> = (0..9).collect();
        order.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
        let mut two = [order[0], order[1]];
        two.sort();
        assert_eq!(two, [3, 5]);
        let weak = [6, 7, 8].iter().map(|&i| s[i]).fold(0.0, f64::max);
        let strong = [0, 1, 2, 4].iter().map(|&i| s[i]).fold(f64::INFINITY, f64::min);
        assert!(weak < strong, "{s:?}");
    }

    #[test]
    fn fisher_structure() {
        let a = nominal();
        let f = &a.fisher;
        let norm = f.frobenius_norm();
        for i in 0..9 {
            for j in 0..9 {
                assert!((f.0[i][j] - f.0[j][i]).abs() <= 1e-12 * norm);
            }
        }
        assert_eq!(f.diagonal(), a.s_is);
        let sum: f64 = a.s_is.iter().sum();
        assert!((f.trace() - sum).abs() <= 1e-12 * sum);
        let eig_sum: f64 = a.basis.values.iter().sum();
        assert!((eig_sum - f.trace()).abs() <= 1e-12 * f.trace());
        assert!(a.basis.values.windows(2).all(|w| w[0] >= w[1]));
        assert!(a.basis.values[8] >= -1e-10 * f.trace());
    }

    #[test]
    fn eigen_reconstruction() {
        let a = nominal();
        let b = &a.basis;
        let mut err = 0.0;
        for i in 0..9 {
            for j in 0..9 {
                let r: f64 = (0..9).map(|k| b.values[k] * b.vectors[k][i] * b.vectors[k][j]).sum();
                err += (r - a.fisher.0[i][j]).powi(2);
                let dot: f64 = (0..9).map(|k| b.vectors[i][k] * b.vectors[j][k]).sum();
                assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() <= 1e-12);
            }
        }
        assert!(err.sqrt() <= 1e-10 * a.fisher.frobenius_norm());
    }

    #[test]
    fn quadrature_refinement() {
        let coarse = nominal().fisher;
        let fine = fisher_matrix(&ControlParams::NOMINAL, &traj(), &NOM, 1401).unwrap();
        let mut diff = 0.0;
        for i in 0..9 {
            for j in 0..9 {
                diff += (coarse.0[i][j] - fine.0[i][j]).powi(2);
            }
        }
        assert!(diff.sqrt() < 1e-4 * fine.frobenius_norm());
    }

    #[test]
    fn constant_rows_give_rank_one() {
        let row: Row = [1.0, -2.0, 0.5, 0.0, 3.0, 1.0, 0.25, -1.0, 2.0];
        let times = uniform_grid(0.0, 3.5e-3, 11);
        let grid = SensitivityGrid::new(times, vec![row; 11]).unwrap();
        let f = grid.fisher();
        for i in 0..9 {
            for j in 0..9 {
                assert!((f.0[i][j] - 3.5e-3 * row[i] * row[j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn deviation_zero_at_anchor_and_nonnegative() {
        let tr = traj();
        assert_eq!(deviation_d(&ControlParams::NOMINAL, &tr, &NOM, DEFAULT_NODES).unwrap(), 0.0);
        let mut seed = 99u64;
        let mut checked = 0;
        for _ in 0..100 {
            let th: Row = std::array::from_fn(|_| {
                seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                0.9 + 0.2 * ((seed >> 11) as f64 / (1u64 << 53) as f64)
            });
            if let Ok(d) = deviation_d(&ControlParams(th), &tr, &NOM, 201) {
                assert!(d >= 0.0);
                checked += 1;
            }
        }
        assert!(checked > 50);
    }

    #[test]
    fn directional_deviation_follows_eigenvalues() {
        let a = nominal();
        let tr = traj();
        let eps = 1e-3;
        for k in [0, 1, 8] {
            let th: Row = std::array::from_fn(|i| 1.0 + eps * a.basis.vectors[k][i]);
            let d = deviation_d(&ControlParams(th), &tr, &NOM, DEFAULT_NODES).unwrap();
            let predicted = 0.5 * a.basis.values[k] * eps * eps;
            assert!(((d - predicted) / predicted).abs() < 0.1, "v{}: {d} vs {predicted}", k + 1);
        }
    }

    #[test]
    fn table_subsets() {
        let s = nominal().s_is;
        let sub = |r| match make_subset_reduction(&s, r).unwrap() {
            Reduction::Subset { free } => free,
            _ => unreachable!(),
        };
        assert_eq!(sub(9), (0..9).collect::<Vec<_>>());
        assert_eq!(sub(7), vec![0, 1, 2, 4, 6, 7, 8]);
        assert_eq!(sub(4), vec![0, 1, 2, 4]);
        assert_eq!(sub(2), vec![1, 2]);
        assert!(make_subset_reduction(&s, 0).is_err());
        assert!(make_subset_reduction(&s, 10).is_err());
    }

    #[test]
    fn subset_ties_prefer_lower_index() {
        let s = [1.0; 9];
        assert_eq!(make_subset_reduction(&s, 3).unwrap(), Reduction::Subset { free: vec![0, 1, 2] });
    }

    #[test]
    fn subset_mapping() {
        let red = Reduction::Subset { free: vec![1, 2] };
        let (th, clamped) = red.theta_from_reduced(&[1.05, 0.95], &ThetaBox::default());
        assert!(!clamped);
        let mut expected = [1.0; 9];
        expected[1] = 1.05;
        expected[2] = 0.95;
        assert_eq!(th.0, expected);
        assert_eq!(red.reduced_from_theta(&th), vec![1.05, 0.95]);
        let (_, clamped) = red.theta_from_reduced(&[1.5, 1.0], &ThetaBox::default());
        assert!(clamped);
    }

    #[test]
    fn orthogonal_anchor_and_round_trip() {
        let a = nominal();
        for r in [2, 4, 7, 9] {
            let red = make_orthogonal_reduction(&a.basis, r, OrthogonalMap::Affine).unwrap();
            let center = red.center();
            let (th, clamped) = red.theta_from_reduced(&center, &ThetaBox::default());
            assert!(!clamped);
            for v in th.0 {
                assert!((v - 1.0).abs() < 1e-15);
            }
            let x: Vec<f64> = center.iter().enumerate().map(|(k, c)| c + 0.01 * (k as f64 - 1.5)).collect();
            let back = red.reduced_from_theta(&ControlParams(red.theta_unclamped(&x)));
            for (p, q) in x.iter().zip(&back) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn literal_map_displaces_the_anchor() {
        let a = nominal();
        let red = make_orthogonal_reduction(&a.basis, 2, OrthogonalMap::Literal).unwrap();
        let th = red.theta_unclamped(&red.center());
        assert!(th.iter().any(|v| (v - 1.0).abs() > 1e-3));
        let full = make_orthogonal_reduction(&a.basis, 9, OrthogonalMap::Literal).unwrap();
        for v in full.theta_unclamped(&full.center()) {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn round_trip_both_kinds(r in 1usize..=9, offs in proptest::collection::vec(-0.2f64..0.2, 9)) {
                let a = nominal();
                for red in [
                    make_subset_reduction(&a.s_is, r).unwrap(),
                    make_orthogonal_reduction(&a.basis, r, OrthogonalMap::Affine).unwrap(),
                ] {
                    let x: Vec<f64> = red.center().iter().zip(&offs).map(|(c, o)| c + o).collect();
                    let back = red.reduced_from_theta(&ControlParams(red.theta_unclamped(&x)));
                    for (p, q) in x.iter().zip(&back) {
                        prop_assert!((p - q).abs() < 1e-12);
                    }
                }
            }
        }
    }
}
