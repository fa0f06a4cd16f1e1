//! Dominant eigen-structure of the polycyclic action matrices.
//!
//! The functional φ and the test set S(C) are driven by a common left
//! eigenvector of the action family: v1 is computed from the transposed
//! matrices so that (Ψ_k y, v1) = exp(φ(k)) · (y, v1) holds exactly in the
//! eigenbasis. For symmetric actions (the Sol default) left and right
//! eigenvectors coincide.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::descriptor::{GroupDescriptor, EIGEN_TOL};
use crate::error::EigenError;

/// Residual tolerance for the eigenvector equations.
pub const RESIDUAL_TOL: f64 = 1e-8;

#[derive(Clone, Debug, Serialize)]
pub struct EigenData {
    /// eigenvalues[i][j]: eigenvalue of generator i along common direction j,
    /// re-indexed so that direction 0 carries the global maximum.
    pub eigenvalues: Vec<Vec<f64>>,
    /// Global maximum eigenvalue (λ_11 after re-indexing).
    pub lambda11: f64,
    pub log_lambda11: f64,
    /// Dominant common left eigenvector, unit length, all coordinates > 0.
    pub v1: Vec<f64>,
    /// log of each generator's eigenvalue along v1 (the weights of φ).
    pub log_lambda_i1: Vec<f64>,
    /// Residual norms ‖Ψ_iᵀ v1 − λ_{i1} v1‖ per generator.
    pub residuals: Vec<f64>,
}

impl EigenData {
    /// Exponential volume growth iff some eigenvalue exceeds 1.
    pub fn exponential_growth(&self) -> bool {
        self.lambda11 > 1.0 + EIGEN_TOL
    }

    pub fn dot_v1(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.v1).map(|(a, b)| a * b).sum()
    }
}

/// Orthonormal basis of the nullspace of `m` (columns), within tolerance.
fn nullspace(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let v_t = svd.v_t.expect("svd with v requested");
    let mut cols: Vec<DVector<f64>> = Vec::new();
    let maxdim = m.nrows().min(m.ncols());
    for i in 0..maxdim {
        let s = svd.singular_values[i];
        if s <= tol {
            cols.push(v_t.row(i).transpose());
        }
    }
    // Rows of v_t beyond the singular value count also span the nullspace
    // (rectangular case does not arise here: m is square).
    let n = m.ncols();
    let mut out = DMatrix::zeros(n, cols.len());
    for (j, c) in cols.iter().enumerate() {
        out.set_column(j, c);
    }
    out
}

/// Splits the column space of `basis` into eigenspaces of `a` restricted to
/// that space. Returns (eigenvalue, orthonormal sub-basis) pairs.
fn split_block(a: &DMatrix<f64>, basis: &DMatrix<f64>, tol: f64) -> Result<Vec<(f64, DMatrix<f64>)>, EigenError> {
    let dim = basis.ncols();
    if dim == 0 {
        return Ok(Vec::new());
    }
    // Restriction of a to the block in the block's own coordinates.
    let restricted = basis.transpose() * a * basis;
    let eigs = restricted.complex_eigenvalues();
    for ev in eigs.iter() {
        if ev.im.abs() > 1e-7 {
            return Err(EigenError::BadEigenvalue(format!(
                "restricted eigenvalue {ev} is not real"
            )));
        }
    }
    let mut reals: Vec<f64> = eigs.iter().map(|e| e.re).collect();
    reals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    // Cluster equal eigenvalues.
    let mut clusters: Vec<f64> = Vec::new();
    for v in reals {
        if clusters.iter().all(|c| (c - v).abs() > tol) {
            clusters.push(v);
        }
    }
    let mut out = Vec::new();
    for lam in clusters {
        let shifted = &restricted - DMatrix::identity(dim, dim) * lam;
        let ns = nullspace(&shifted, 1e-7 * (1.0 + lam.abs()));
        if ns.ncols() == 0 {
            return Err(EigenError::BadEigenvalue(format!(
                "no eigenvector for eigenvalue {lam} (defective matrix?)"
            )));
        }
        let sub = basis * ns;
        // Re-orthonormalize for numerical hygiene.
        let qr = sub.qr();
        let q = qr.q();
        out.push((lam, q.columns(0, ns.ncols().min(q.ncols())).into_owned()));
    }
    Ok(out)
}

/// Computes eigenvalues of every action matrix and the common dominant left
/// eigenvector v1 (eigenvector of the transposes), sign-normalized so all
/// coordinates are strictly positive.
pub fn compute_eigendata(desc: &GroupDescriptor) -> Result<EigenData, EigenError> {
    let GroupDescriptor::Polycyclic { m, d, matrices } = desc else {
        return Err(EigenError::NotPolycyclic);
    };
    desc.validate()?;
    let transposed: Vec<DMatrix<f64>> = matrices.iter().map(|a| a.transpose().to_f64()).collect();

    // Joint eigenspace refinement over all transposed generators.
    let mut blocks: Vec<(Vec<f64>, DMatrix<f64>)> = vec![(Vec::new(), DMatrix::identity(*d, *d))];
    for a in &transposed {
        let mut next = Vec::new();
        for (tuple, basis) in &blocks {
            for (lam, sub) in split_block(a, basis, 1e-6)? {
                if lam <= EIGEN_TOL {
                    return Err(EigenError::BadEigenvalue(format!(
                        "non-positive eigenvalue {lam}"
                    )));
                }
                let mut t = tuple.clone();
                t.push(lam);
                next.push((t, sub));
            }
        }
        blocks = next;
    }

    // Expand blocks to d directions, each carrying its eigentuple.
    let mut directions: Vec<(Vec<f64>, DVector<f64>)> = Vec::new();
    for (tuple, basis) in &blocks {
        for j in 0..basis.ncols() {
            directions.push((tuple.clone(), basis.column(j).into_owned()));
        }
    }
    if directions.len() != *d {
        return Err(EigenError::BadEigenvalue(format!(
            "joint eigenbasis has {} directions, expected {d}",
            directions.len()
        )));
    }
    // Direction 0 carries the global maximum eigenvalue; remaining
    // directions ordered by their largest eigenvalue, descending.
    directions.sort_by(|a, b| {
        let ma = a.0.iter().cloned().fold(f64::MIN, f64::max);
        let mb = b.0.iter().cloned().fold(f64::MIN, f64::max);
        mb.partial_cmp(&ma).unwrap()
    });

    let lambda11 = directions[0].0.iter().cloned().fold(f64::MIN, f64::max);
    let mut v1 = directions[0].1.clone();
    v1.normalize_mut();
    // Sign normalization: (e_j, v1) > 0 for every j.
    if v1.iter().all(|&c| c < 0.0) {
        v1 = -v1;
    }
    if !v1.iter().all(|&c| c > 0.0) {
        return Err(EigenError::NoPositiveEigenvector);
    }

    let eigenvalues: Vec<Vec<f64>> = (0..*m)
        .map(|i| directions.iter().map(|(t, _)| t[i]).collect())
        .collect();
    let log_lambda_i1: Vec<f64> = (0..*m).map(|i| eigenvalues[i][0].ln()).collect();

    let mut residuals = Vec::with_capacity(*m);
    for (i, a) in transposed.iter().enumerate() {
        let r = (a * &v1) - &v1 * eigenvalues[i][0];
        let res = r.norm();
        if res > RESIDUAL_TOL {
            return Err(EigenError::ResidualTooLarge {
                residual: res,
                tol: RESIDUAL_TOL,
            });
        }
        residuals.push(res);
    }

    Ok(EigenData {
        eigenvalues,
        lambda11,
        log_lambda11: lambda11.ln(),
        v1: v1.iter().cloned().collect(),
        log_lambda_i1,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::{sol, sol_m2, GroupDescriptor};
    use crate::matrix::IntMatrix;

    #[test]
    fn sol_eigen_structure() {
        let eig = compute_eigendata(&sol()).unwrap();
        let golden = (1.0 + 5.0f64.sqrt()) / 2.0;
        let lam_plus = (3.0 + 5.0f64.sqrt()) / 2.0;
        let lam_minus = (3.0 - 5.0f64.sqrt()) / 2.0;
        assert!((eig.lambda11 - lam_plus).abs() < 1e-9, "{}", eig.lambda11);
        assert!((eig.eigenvalues[0][1] - lam_minus).abs() < 1e-9);
        // v1 proportional to (golden, 1), unit length, positive.
        let nrm = (golden * golden + 1.0).sqrt();
        assert!((eig.v1[0] - golden / nrm).abs() < 1e-9);
        assert!((eig.v1[1] - 1.0 / nrm).abs() < 1e-9);
        assert!(eig.exponential_growth());
        assert!((eig.v1[0] - 0.8507).abs() < 1e-4);
    }

    #[test]
    fn identity_action_has_unit_eigenvalues() {
        let desc = GroupDescriptor::Polycyclic {
            m: 1,
            d: 2,
            matrices: vec![IntMatrix::identity(2)],
        };
        let eig = compute_eigendata(&desc).unwrap();
        assert!((eig.lambda11 - 1.0).abs() < 1e-12);
        assert_eq!(eig.log_lambda11, 0.0);
        assert!(!eig.exponential_growth());
    }

    #[test]
    fn m2_squares_eigenvalues_same_v1() {
        let eig1 = compute_eigendata(&sol()).unwrap();
        let eig2 = compute_eigendata(&sol_m2()).unwrap();
        for j in 0..2 {
            let l1 = eig2.eigenvalues[0][j];
            let l2 = eig2.eigenvalues[1][j];
            assert!((l2 - l1 * l1).abs() < 1e-7, "lambda_2{j} = {l2} vs {}", l1 * l1);
        }
        for j in 0..2 {
            assert!((eig1.v1[j] - eig2.v1[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn non_polycyclic_rejected() {
        assert!(matches!(
            compute_eigendata(&crate::descriptor::lattice(2)),
            Err(EigenError::NotPolycyclic)
        ));
    }
}
