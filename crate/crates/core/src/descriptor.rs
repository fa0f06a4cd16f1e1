//! Group family descriptors and their validation.

use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::error::GroupError;
use crate::matrix::IntMatrix;

/// Lamp state group for wreath products.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LampGroup {
    /// Z_q with q >= 2.
    CyclicMod { q: u32 },
    /// Z with integer lamp values.
    Integers,
}

impl LampGroup {
    /// Canonical representative of a lamp value; identity maps to 0.
    #[inline]
    pub fn canon(&self, v: i64) -> i64 {
        match self {
            LampGroup::CyclicMod { q } => v.rem_euclid(*q as i64),
            LampGroup::Integers => v,
        }
    }

    #[inline]
    pub fn add(&self, a: i64, b: i64) -> Result<i64, GroupError> {
        match self {
            LampGroup::CyclicMod { q } => Ok((a + b).rem_euclid(*q as i64)),
            LampGroup::Integers => a.checked_add(b).ok_or(GroupError::Overflow),
        }
    }

    #[inline]
    pub fn neg(&self, a: i64) -> i64 {
        match self {
            LampGroup::CyclicMod { q } => (-a).rem_euclid(*q as i64),
            LampGroup::Integers => -a,
        }
    }
}

/// Which group the walk lives on: Z^d, H wr Z^d, or Z^m acting on Z^d by
/// commuting unimodular matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum GroupDescriptor {
    Lattice {
        d: usize,
    },
    Wreath {
        lamp: LampGroup,
        d: usize,
    },
    Polycyclic {
        m: usize,
        d: usize,
        matrices: Vec<IntMatrix>,
    },
}

/// Tolerance for the numerical eigenvalue check on action matrices.
pub const EIGEN_TOL: f64 = 1e-9;

impl GroupDescriptor {
    pub fn family_name(&self) -> &'static str {
        match self {
            GroupDescriptor::Lattice { .. } => "lattice",
            GroupDescriptor::Wreath { .. } => "wreath",
            GroupDescriptor::Polycyclic { .. } => "polycyclic",
        }
    }

    /// Base dimension d (position lattice for wreath, coordinate part for
    /// polycyclic).
    pub fn d(&self) -> usize {
        match self {
            GroupDescriptor::Lattice { d }
            | GroupDescriptor::Wreath { d, .. }
            | GroupDescriptor::Polycyclic { d, .. } => *d,
        }
    }

    /// Checks all structural invariants. For polycyclic descriptors this
    /// includes determinant +-1, pairwise commutation (exact), and real
    /// strictly positive eigenvalues within `EIGEN_TOL`.
    pub fn validate(&self) -> Result<(), GroupError> {
        match self {
            GroupDescriptor::Lattice { d } => {
                if *d < 1 {
                    return Err(GroupError::InvalidDescriptor("lattice requires d >= 1".into()));
                }
            }
            GroupDescriptor::Wreath { lamp, d } => {
                if *d < 1 {
                    return Err(GroupError::InvalidDescriptor("wreath requires d >= 1".into()));
                }
                if let LampGroup::CyclicMod { q } = lamp {
                    if *q < 2 {
                        return Err(GroupError::InvalidDescriptor(
                            "cyclic lamp group requires q >= 2".into(),
                        ));
                    }
                }
            }
            GroupDescriptor::Polycyclic { m, d, matrices } => {
                if *m < 1 || *d < 1 {
                    return Err(GroupError::InvalidDescriptor(
                        "polycyclic requires m >= 1 and d >= 1".into(),
                    ));
                }
                if matrices.len() != *m {
                    return Err(GroupError::InvalidDescriptor(format!(
                        "expected {m} action matrices, got {}",
                        matrices.len()
                    )));
                }
                for (i, mat) in matrices.iter().enumerate() {
                    if mat.dim() != *d {
                        return Err(GroupError::InvalidDescriptor(format!(
                            "action matrix {i} is {0}x{0}, expected {d}x{d}",
                            mat.dim()
                        )));
                    }
                    let det = mat.det();
                    if !(det.clone().magnitude().is_one()) {
                        return Err(GroupError::InvalidDescriptor(format!(
                            "action matrix {i} has determinant {det}, must be +1 or -1"
                        )));
                    }
                    // Eigenvalues must be real and strictly positive.
                    let eig = mat.to_f64().complex_eigenvalues();
                    for ev in eig.iter() {
                        if ev.im.abs() > EIGEN_TOL {
                            return Err(GroupError::InvalidDescriptor(format!(
                                "action matrix {i} has complex eigenvalue {ev}"
                            )));
                        }
                        if ev.re <= EIGEN_TOL {
                            return Err(GroupError::InvalidDescriptor(format!(
                                "action matrix {i} has non-positive eigenvalue {}",
                                ev.re
                            )));
                        }
                    }
                }
                for i in 0..matrices.len() {
                    for j in (i + 1)..matrices.len() {
                        if !matrices[i].commutes_with(&matrices[j]) {
                            return Err(GroupError::InvalidDescriptor(format!(
                                "action matrices {i} and {j} do not commute"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Z^d lattice.
pub fn lattice(d: usize) -> GroupDescriptor {
    GroupDescriptor::Lattice { d }
}

/// Z_q wr Z^d lamplighter.
pub fn lamplighter(q: u32, d: usize) -> GroupDescriptor {
    GroupDescriptor::Wreath {
        lamp: LampGroup::CyclicMod { q },
        d,
    }
}

/// The Sol-like group Z ⋉ Z^2 with action [[2,1],[1,1]].
pub fn sol() -> GroupDescriptor {
    GroupDescriptor::Polycyclic {
        m: 1,
        d: 2,
        matrices: vec![IntMatrix::from_rows(vec![vec![2, 1], vec![1, 1]]).unwrap()],
    }
}

/// Z^2 ⋉ Z^2 with generators acting by A and A^2.
pub fn sol_m2() -> GroupDescriptor {
    let a = IntMatrix::from_rows(vec![vec![2, 1], vec![1, 1]]).unwrap();
    let a2 = IntMatrix::from_rows(vec![vec![5, 3], vec![3, 2]]).unwrap();
    GroupDescriptor::Polycyclic {
        m: 2,
        d: 2,
        matrices: vec![a, a2],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        lattice(3).validate().unwrap();
        lamplighter(2, 1).validate().unwrap();
        lamplighter(3, 2).validate().unwrap();
        sol().validate().unwrap();
        sol_m2().validate().unwrap();
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(lattice(0).validate().is_err());
        assert!(lamplighter(1, 1).validate().is_err());
    }

    #[test]
    fn rejects_non_unimodular() {
        let desc = GroupDescriptor::Polycyclic {
            m: 1,
            d: 2,
            matrices: vec![IntMatrix::from_rows(vec![vec![2, 0], vec![0, 1]]).unwrap()],
        };
        assert!(desc.validate().is_err());
    }

    #[test]
    fn rejects_negative_eigenvalues() {
        // determinant -1 but eigenvalues +-1
        let desc = GroupDescriptor::Polycyclic {
            m: 1,
            d: 2,
            matrices: vec![IntMatrix::from_rows(vec![vec![0, 1], vec![1, 0]]).unwrap()],
        };
        assert!(desc.validate().is_err());
    }

    #[test]
    fn rejects_non_commuting() {
        let a = IntMatrix::from_rows(vec![vec![1, 1], vec![0, 1]]).unwrap();
        let b = IntMatrix::from_rows(vec![vec![1, 0], vec![1, 1]]).unwrap();
        let desc = GroupDescriptor::Polycyclic {
            m: 2,
            d: 2,
            matrices: vec![a, b],
        };
        let err = desc.validate().unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("commute") || msg.contains("eigenvalue"), "{msg}");
    }

    #[test]
    fn lamp_arithmetic() {
        let z2 = LampGroup::CyclicMod { q: 2 };
        assert_eq!(z2.add(1, 1).unwrap(), 0);
        assert_eq!(z2.canon(-1), 1);
        assert_eq!(z2.neg(1), 1);
        let z = LampGroup::Integers;
        assert_eq!(z.add(3, -5).unwrap(), -2);
        assert_eq!(z.neg(4), -4);
    }
}
