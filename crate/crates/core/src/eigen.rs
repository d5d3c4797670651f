//! Cyclic Jacobi eigen-solver for small dense symmetric matrices.

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Eigenpairs of a symmetric `N x N` matrix, eigenvalues in descending order.
///
/// `vectors[k]` is the unit eigenvector belonging to `values[k]`, with its
/// largest-magnitude entry made positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricEigen<const N: usize> {
    pub values: [f64; N],
    pub vectors: [[f64; N]; N],
}

fn frobenius<const N: usize>(a: &[[f64; N]; N]) -> f64 {
    a.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

fn off_diagonal<const N: usize>(a: &[[f64; N]; N]) -> f64 {
    let mut s = 0.0;
    for i in 0..N {
        for j in 0..N {
            if i != j {
                s += a[i][j] * a[i][j];
            }
        }
    }
    s.sqrt()
}

/// Diagonalizes `a` by cyclic Jacobi rotations until the off-diagonal
/// Frobenius norm drops to `1e-14 * ||a||`. Only the symmetric part of `a`
/// is used.
pub fn jacobi_eigen<const N: usize>(a: &[[f64; N]; N]) -> Result<SymmetricEigen<N>> {
    let mut m = [[0.0; N]; N];
    for i in 0..N {
        for j in 0..N {
            m[i][j] = 0.5 * (a[i][j] + a[j][i]);
        }
    }
    // columns of `v` accumulate the rotations
    let mut v = [[0.0; N]; N];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let target = 1e-14 * frobenius(&m);

    let mut converged = off_diagonal(&m) <= target;
    let mut sweeps = 0;
    while !converged {
        if sweeps == MAX_SWEEPS {
            return Err(Error::EigenNoConvergence { sweeps });
        }
        sweeps += 1;
        for p in 0..N {
            for q in p + 1..N {
                let apq = m[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..N {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..N {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
        converged = off_diagonal(&m) <= target;
    }

    let mut order: Vec<usize> = (0..N).collect();
    order.sort_by(|&i, &j| m[j][j].total_cmp(&m[i][i]).then(i.cmp(&j)));
    let mut values = [0.0; N];
    let mut vectors = [[0.0; N]; N];
    for (k, &col) in order.iter().enumerate() {
        values[k] = m[col][col];
        let mut vec = [0.0; N];
        for i in 0..N {
            vec[i] = v[i][col];
        }
        let lead = vec
            .iter()
            .copied()
            .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if lead < 0.0 {
            vec.iter_mut().for_each(|x| *x = -*x);
        }
        vectors[k] = vec;
    }
    Ok(SymmetricEigen { values, vectors })
}
