//! Group elements and exact arithmetic for the three families.
//!
//! Conventions, fixed once for the whole crate:
//! - Wreath multiplication: (f, x)(g, z) = (f ⊕ shift_x(g), x + z) where
//!   (shift_x g)(i) = g(i − x). Right-multiplying by a generator whose lamp
//!   sits at offset 0 therefore toggles the lamp at the walker's current
//!   position.
//! - Polycyclic multiplication: (k, x)(l, y) = (k + l, x + Ψ_k(y)) with
//!   Ψ_k = ∏_i A_i^{k_i} evaluated exactly over the integers.
//!
//! Lamp configurations are kept canonically sparse: no stored value equals
//! the lamp identity, so structural equality is group equality.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::Zero;

use crate::descriptor::{GroupDescriptor, LampGroup};
use crate::error::GroupError;
use crate::matrix::BigMatrix;

/// Lattice site of a lamp (d integers).
pub type Site = Vec<i64>;

/// Sparse lamp configuration: site -> non-identity lamp value, ordered
/// lexicographically by site.
pub type LampConfig = BTreeMap<Site, i64>;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum GroupElement {
    Lattice {
        x: Vec<i64>,
    },
    Wreath {
        lamps: LampConfig,
        pos: Vec<i64>,
    },
    Polycyclic {
        k: Vec<i64>,
        x: Vec<BigInt>,
    },
}

impl GroupElement {
    pub fn family_name(&self) -> &'static str {
        match self {
            GroupElement::Lattice { .. } => "lattice",
            GroupElement::Wreath { .. } => "wreath",
            GroupElement::Polycyclic { .. } => "polycyclic",
        }
    }

    pub fn lattice(x: Vec<i64>) -> Self {
        GroupElement::Lattice { x }
    }

    /// Canonically sparsified wreath element; entries equal to the lamp
    /// identity are dropped and values reduced to canonical form.
    pub fn wreath(lamp: &LampGroup, lamps: impl IntoIterator<Item = (Site, i64)>, pos: Vec<i64>) -> Self {
        let mut map = LampConfig::new();
        for (site, v) in lamps {
            let v = lamp.canon(v);
            if v != 0 {
                map.insert(site, v);
            }
        }
        GroupElement::Wreath { lamps: map, pos }
    }

    pub fn polycyclic(k: Vec<i64>, x: Vec<i64>) -> Self {
        GroupElement::Polycyclic {
            k,
            x: x.into_iter().map(BigInt::from).collect(),
        }
    }

    pub fn polycyclic_big(k: Vec<i64>, x: Vec<BigInt>) -> Self {
        GroupElement::Polycyclic { k, x }
    }
}

/// Identity element of the descriptor's group.
pub fn identity(desc: &GroupDescriptor) -> GroupElement {
    match desc {
        GroupDescriptor::Lattice { d } => GroupElement::Lattice { x: vec![0; *d] },
        GroupDescriptor::Wreath { d, .. } => GroupElement::Wreath {
            lamps: LampConfig::new(),
            pos: vec![0; *d],
        },
        GroupDescriptor::Polycyclic { m, d, .. } => GroupElement::Polycyclic {
            k: vec![0; *m],
            x: vec![BigInt::zero(); *d],
        },
    }
}

/// Structural conformance of an element to a descriptor.
pub fn conforms(desc: &GroupDescriptor, a: &GroupElement) -> Result<(), GroupError> {
    let mismatch = || GroupError::FamilyMismatch {
        descriptor: desc.family_name(),
        element: a.family_name(),
    };
    match (desc, a) {
        (GroupDescriptor::Lattice { d }, GroupElement::Lattice { x }) => {
            if x.len() != *d {
                return Err(GroupError::DimensionMismatch { expected: *d, got: x.len() });
            }
        }
        (GroupDescriptor::Wreath { lamp, d }, GroupElement::Wreath { lamps, pos }) => {
            if pos.len() != *d {
                return Err(GroupError::DimensionMismatch { expected: *d, got: pos.len() });
            }
            for (site, v) in lamps {
                if site.len() != *d {
                    return Err(GroupError::DimensionMismatch { expected: *d, got: site.len() });
                }
                if lamp.canon(*v) != *v || *v == 0 {
                    return Err(GroupError::InvalidDescriptor(
                        "lamp configuration is not canonically sparse".into(),
                    ));
                }
            }
        }
        (GroupDescriptor::Polycyclic { m, d, .. }, GroupElement::Polycyclic { k, x }) => {
            if k.len() != *m {
                return Err(GroupError::DimensionMismatch { expected: *m, got: k.len() });
            }
            if x.len() != *d {
                return Err(GroupError::DimensionMismatch { expected: *d, got: x.len() });
            }
        }
        _ => return Err(mismatch()),
    }
    Ok(())
}

fn checked_add_vec(a: &[i64], b: &[i64]) -> Result<Vec<i64>, GroupError> {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| x.checked_add(y).ok_or(GroupError::Overflow))
        .collect()
}

/// Ψ_k(y): the action of k on an integer vector, exact.
///
/// Negative powers use the exact integer inverse; the factor order is
/// irrelevant because the action matrices commute.
pub fn apply_action(desc: &GroupDescriptor, k: &[i64], y: &[BigInt]) -> Result<Vec<BigInt>, GroupError> {
    let GroupDescriptor::Polycyclic { m, d, matrices } = desc else {
        return Err(GroupError::FamilyMismatch {
            descriptor: desc.family_name(),
            element: "action argument",
        });
    };
    if k.len() != *m {
        return Err(GroupError::DimensionMismatch { expected: *m, got: k.len() });
    }
    if y.len() != *d {
        return Err(GroupError::DimensionMismatch { expected: *d, got: y.len() });
    }
    let mut v = y.to_vec();
    for (i, &ki) in k.iter().enumerate() {
        if ki == 0 {
            continue;
        }
        let p: BigMatrix = matrices[i].to_big().pow(ki)?;
        v = p.matvec(&v);
    }
    Ok(v)
}

/// Convenience wrapper for small integer vectors.
pub fn apply_action_i64(desc: &GroupDescriptor, k: &[i64], y: &[i64]) -> Result<Vec<BigInt>, GroupError> {
    let big: Vec<BigInt> = y.iter().map(|&v| BigInt::from(v)).collect();
    apply_action(desc, k, &big)
}

/// Group product a · b under the fixed conventions above.
pub fn multiply(desc: &GroupDescriptor, a: &GroupElement, b: &GroupElement) -> Result<GroupElement, GroupError> {
    conforms(desc, a)?;
    conforms(desc, b)?;
    match (desc, a, b) {
        (GroupDescriptor::Lattice { .. }, GroupElement::Lattice { x: xa }, GroupElement::Lattice { x: xb }) => {
            Ok(GroupElement::Lattice { x: checked_add_vec(xa, xb)? })
        }
        (
            GroupDescriptor::Wreath { lamp, .. },
            GroupElement::Wreath { lamps: fa, pos: xa },
            GroupElement::Wreath { lamps: fb, pos: xb },
        ) => {
            let mut lamps = fa.clone();
            for (site, &v) in fb {
                let shifted = checked_add_vec(site, xa)?;
                merge_lamp(lamp, &mut lamps, shifted, v)?;
            }
            Ok(GroupElement::Wreath {
                lamps,
                pos: checked_add_vec(xa, xb)?,
            })
        }
        (
            GroupDescriptor::Polycyclic { .. },
            GroupElement::Polycyclic { k: ka, x: xa },
            GroupElement::Polycyclic { k: kb, x: xb },
        ) => {
            let shifted = apply_action(desc, ka, xb)?;
            let x = xa.iter().zip(shifted).map(|(a, b)| a + b).collect();
            Ok(GroupElement::Polycyclic {
                k: checked_add_vec(ka, kb)?,
                x,
            })
        }
        _ => unreachable!("conformance checked above"),
    }
}

fn merge_lamp(lamp: &LampGroup, lamps: &mut LampConfig, site: Site, v: i64) -> Result<(), GroupError> {
    match lamps.get(&site) {
        Some(&old) => {
            let sum = lamp.add(old, v)?;
            if sum == 0 {
                lamps.remove(&site);
            } else {
                lamps.insert(site, sum);
            }
        }
        None => {
            let v = lamp.canon(v);
            if v != 0 {
                lamps.insert(site, v);
            }
        }
    }
    Ok(())
}

/// Group inverse. Polycyclic: (k, x)^{-1} = (−k, −Ψ_{−k}(x)).
pub fn inverse(desc: &GroupDescriptor, a: &GroupElement) -> Result<GroupElement, GroupError> {
    conforms(desc, a)?;
    match (desc, a) {
        (GroupDescriptor::Lattice { .. }, GroupElement::Lattice { x }) => Ok(GroupElement::Lattice {
            x: x.iter().map(|&v| -v).collect(),
        }),
        (GroupDescriptor::Wreath { lamp, .. }, GroupElement::Wreath { lamps, pos }) => {
            // (f, x)^{-1} = (shift_{-x}(-f), -x)
            let neg_pos: Vec<i64> = pos.iter().map(|&v| -v).collect();
            let mut inv_lamps = LampConfig::new();
            for (site, &v) in lamps {
                let shifted = checked_add_vec(site, &neg_pos)?;
                inv_lamps.insert(shifted, lamp.neg(v));
            }
            Ok(GroupElement::Wreath {
                lamps: inv_lamps,
                pos: neg_pos,
            })
        }
        (GroupDescriptor::Polycyclic { .. }, GroupElement::Polycyclic { k, x }) => {
            let neg_k: Vec<i64> = k.iter().map(|&v| -v).collect();
            let shifted = apply_action(desc, &neg_k, x)?;
            Ok(GroupElement::Polycyclic {
                k: neg_k,
                x: shifted.into_iter().map(|v| -v).collect(),
            })
        }
        _ => Err(GroupError::FamilyMismatch {
            descriptor: desc.family_name(),
            element: a.family_name(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::{lamplighter, lattice, sol};

    #[test]
    fn lattice_ops() {
        let desc = lattice(2);
        let a = GroupElement::lattice(vec![3, -2]);
        assert_eq!(inverse(&desc, &a).unwrap(), GroupElement::lattice(vec![-3, 2]));
        let b = GroupElement::lattice(vec![1, 1]);
        assert_eq!(
            multiply(&desc, &a, &b).unwrap(),
            GroupElement::lattice(vec![4, -1])
        );
    }

    #[test]
    fn wreath_identity_case() {
        let desc = lamplighter(2, 1);
        let lamp = LampGroup::CyclicMod { q: 2 };
        let id = identity(&desc);
        let a = GroupElement::wreath(&lamp, [(vec![0], 1)], vec![1]);
        assert_eq!(multiply(&desc, &id, &a).unwrap(), a);
        assert_eq!(multiply(&desc, &a, &id).unwrap(), a);
    }

    #[test]
    fn wreath_shift_convention() {
        // ({0->1}, 1) * ({0->1}, 1) = ({0->1, 1->1}, 2): the second factor's
        // lamp lands at the first factor's position.
        let desc = lamplighter(2, 1);
        let lamp = LampGroup::CyclicMod { q: 2 };
        let a = GroupElement::wreath(&lamp, [(vec![0], 1)], vec![1]);
        let expect = GroupElement::wreath(&lamp, [(vec![0], 1), (vec![1], 1)], vec![2]);
        assert_eq!(multiply(&desc, &a, &a).unwrap(), expect);
    }

    #[test]
    fn wreath_lamps_cancel() {
        let desc = lamplighter(2, 1);
        let lamp = LampGroup::CyclicMod { q: 2 };
        let a = GroupElement::wreath(&lamp, [(vec![0], 1)], vec![0]);
        assert_eq!(multiply(&desc, &a, &a).unwrap(), identity(&desc));
    }

    #[test]
    fn wreath_inverse_roundtrip() {
        let desc = lamplighter(3, 2);
        let lamp = LampGroup::CyclicMod { q: 3 };
        let a = GroupElement::wreath(
            &lamp,
            [(vec![0, 0], 1), (vec![2, -1], 2)],
            vec![4, -5],
        );
        let inv = inverse(&desc, &a).unwrap();
        assert_eq!(multiply(&desc, &a, &inv).unwrap(), identity(&desc));
        assert_eq!(multiply(&desc, &inv, &a).unwrap(), identity(&desc));
    }

    #[test]
    fn sol_multiplication() {
        let desc = sol();
        let a = GroupElement::polycyclic(vec![1], vec![0, 0]);
        let b = GroupElement::polycyclic(vec![0], vec![1, 0]);
        // Ψ_1(1,0) = A(1,0) = (2,1)
        assert_eq!(
            multiply(&desc, &a, &b).unwrap(),
            GroupElement::polycyclic(vec![1], vec![2, 1])
        );
    }

    #[test]
    fn sol_inverses() {
        let desc = sol();
        let pure_k = GroupElement::polycyclic(vec![1], vec![0, 0]);
        assert_eq!(
            inverse(&desc, &pure_k).unwrap(),
            GroupElement::polycyclic(vec![-1], vec![0, 0])
        );
        let pure_x = GroupElement::polycyclic(vec![0], vec![1, 0]);
        assert_eq!(
            inverse(&desc, &pure_x).unwrap(),
            GroupElement::polycyclic(vec![0], vec![-1, 0])
        );
        // (1,(1,0))^{-1} = (-1, -A^{-1}(1,0)) = (-1, (-1, 1))
        let g = GroupElement::polycyclic(vec![1], vec![1, 0]);
        let ginv = inverse(&desc, &g).unwrap();
        assert_eq!(ginv, GroupElement::polycyclic(vec![-1], vec![-1, 1]));
        assert_eq!(multiply(&desc, &g, &ginv).unwrap(), identity(&desc));
    }

    #[test]
    fn action_examples() {
        let desc = sol();
        assert_eq!(
            apply_action_i64(&desc, &[0], &[7, -3]).unwrap(),
            vec![BigInt::from(7), BigInt::from(-3)]
        );
        assert_eq!(
            apply_action_i64(&desc, &[2], &[1, 0]).unwrap(),
            vec![BigInt::from(5), BigInt::from(3)]
        );
        assert_eq!(
            apply_action_i64(&desc, &[-1], &[1, 0]).unwrap(),
            vec![BigInt::from(1), BigInt::from(-1)]
        );
    }

    #[test]
    fn action_rejects_wrong_family() {
        let desc = lattice(2);
        assert!(apply_action_i64(&desc, &[1], &[1, 0]).is_err());
    }

    #[test]
    fn family_mismatch_errors() {
        let desc = lattice(2);
        let w = GroupElement::wreath(&LampGroup::CyclicMod { q: 2 }, [], vec![0, 0]);
        assert!(multiply(&desc, &w, &w).is_err());
        assert!(inverse(&desc, &w).is_err());
    }
}
