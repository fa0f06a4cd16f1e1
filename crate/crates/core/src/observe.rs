//! The walk functionals and test-set predicates.
//!
//! Wreath side: F_R (rightmost lit lamp, floored at 0) and the set
//! S(ε) = { (f, x) : x ≥ 1, x − F_R ≥ (2+5ε)·log₂(x) }.
//!
//! Polycyclic side: φ(k, x) = Σ k_i log λ_{i1}, the expanding component
//! (x, v1), and S(C) = { g : φ > 1, φ − ln|(x, v1)| ≥ C·ln φ }, with
//! (x, v1) = 0 treated as ln → −∞ (membership easier).

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::descriptor::GroupDescriptor;
use crate::eigen::EigenData;
use crate::element::GroupElement;
use crate::error::GroupError;

/// A nonzero real stored as (sign, ln|value|), so the expanding component
/// of polycyclic walks never overflows f64 range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SignedLog {
    /// −1, 0, or 1. Zero sign means the value 0 (ln_abs is −∞).
    pub sign: i8,
    pub ln_abs: f64,
}

impl SignedLog {
    pub const ZERO: SignedLog = SignedLog {
        sign: 0,
        ln_abs: f64::NEG_INFINITY,
    };

    pub fn from_f64(v: f64) -> SignedLog {
        if v == 0.0 {
            SignedLog::ZERO
        } else {
            SignedLog {
                sign: if v > 0.0 { 1 } else { -1 },
                ln_abs: v.abs().ln(),
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.sign == 0
    }

    /// self + other, stable in the log domain.
    pub fn add(self, other: SignedLog) -> SignedLog {
        if self.sign == 0 {
            return other;
        }
        if other.sign == 0 {
            return self;
        }
        let m = self.ln_abs.max(other.ln_abs);
        let s = self.sign as f64 * (self.ln_abs - m).exp() + other.sign as f64 * (other.ln_abs - m).exp();
        if s == 0.0 {
            SignedLog::ZERO
        } else {
            SignedLog {
                sign: if s > 0.0 { 1 } else { -1 },
                ln_abs: s.abs().ln() + m,
            }
        }
    }

    pub fn neg(self) -> SignedLog {
        SignedLog {
            sign: -self.sign,
            ln_abs: self.ln_abs,
        }
    }
}

/// (x, v) for an arbitrary-precision integer vector, in the log domain.
/// Entries are scaled by a common power of two before conversion so the
/// result stays finite far beyond f64 range.
pub fn signed_log_dot(x: &[BigInt], v: &[f64]) -> SignedLog {
    assert_eq!(x.len(), v.len());
    let max_bits = x.iter().map(|z| z.bits()).max().unwrap_or(0);
    if max_bits == 0 {
        return SignedLog::ZERO;
    }
    // Keep roughly 500 bits of headroom inside f64's exponent range.
    let shift = max_bits.saturating_sub(500);
    let mut acc = 0.0f64;
    for (z, &vi) in x.iter().zip(v) {
        if z.is_zero() {
            continue;
        }
        let scaled: BigInt = z >> shift;
        let zf = scaled.to_f64().unwrap_or(0.0);
        acc += zf * vi;
    }
    if acc == 0.0 {
        // All contributions vanished under scaling: the dot product is zero
        // to relative precision 2^{-(500-53)}; treat as exact zero.
        return SignedLog::ZERO;
    }
    SignedLog {
        sign: if acc > 0.0 { 1 } else { -1 },
        ln_abs: acc.abs().ln() + shift as f64 * std::f64::consts::LN_2,
    }
}

/// Wreath membership threshold (2+5ε)/ln 2 · ln x, and the guard x ≥ 1.
#[inline]
pub fn wreath_member(epsilon: f64, pos1: i64, f_r: i64) -> bool {
    if pos1 < 1 {
        return false;
    }
    let thr = (2.0 + 5.0 * epsilon) / std::f64::consts::LN_2 * (pos1 as f64).ln();
    (pos1 - f_r) as f64 >= thr
}

/// Polycyclic membership: φ > 1 and φ − ln|w| ≥ C·ln φ (w = 0 counts in).
#[inline]
pub fn polycyclic_member(big_c: f64, phi: f64, w: SignedLog) -> bool {
    if phi <= 1.0 {
        return false;
    }
    w.is_zero() || phi - w.ln_abs >= big_c * phi.ln()
}

/// Test-set predicate over group elements.
#[derive(Clone, Debug)]
pub enum SetPredicate {
    WreathS { epsilon: f64 },
    PolycyclicS { big_c: f64, eig: EigenData },
}

impl SetPredicate {
    pub fn wreath_s(epsilon: f64) -> Result<SetPredicate, GroupError> {
        if !(epsilon > 0.0 && epsilon < 0.4) {
            return Err(GroupError::InvalidDescriptor(format!(
                "epsilon must lie in (0, 0.4), got {epsilon}"
            )));
        }
        Ok(SetPredicate::WreathS { epsilon })
    }

    pub fn polycyclic_s(big_c: f64, eig: EigenData) -> Result<SetPredicate, GroupError> {
        if !(big_c > 0.0) {
            return Err(GroupError::InvalidDescriptor(format!(
                "C must be positive, got {big_c}"
            )));
        }
        Ok(SetPredicate::PolycyclicS { big_c, eig })
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            SetPredicate::WreathS { .. } => "wreath",
            SetPredicate::PolycyclicS { .. } => "polycyclic",
        }
    }
}

/// F_R: max of 0 and the first coordinates of all lit lamp sites.
pub fn f_r(a: &GroupElement) -> Result<i64, GroupError> {
    let GroupElement::Wreath { lamps, .. } = a else {
        return Err(GroupError::FamilyMismatch {
            descriptor: "wreath",
            element: a.family_name(),
        });
    };
    Ok(lamps.keys().map(|site| site[0]).fold(0i64, i64::max))
}

/// φ(g) = Σ_i k_i · log λ_{i1}; depends only on the k-part.
pub fn phi(a: &GroupElement, eig: &EigenData) -> Result<f64, GroupError> {
    let GroupElement::Polycyclic { k, .. } = a else {
        return Err(GroupError::FamilyMismatch {
            descriptor: "polycyclic",
            element: a.family_name(),
        });
    };
    Ok(phi_of_k(k, eig))
}

#[inline]
pub fn phi_of_k(k: &[i64], eig: &EigenData) -> f64 {
    k.iter()
        .zip(&eig.log_lambda_i1)
        .map(|(&ki, &l)| ki as f64 * l)
        .sum()
}

/// Standard inner product with v1.
pub fn ip_v1(x: &[f64], eig: &EigenData) -> Result<f64, GroupError> {
    if x.len() != eig.v1.len() {
        return Err(GroupError::DimensionMismatch {
            expected: eig.v1.len(),
            got: x.len(),
        });
    }
    Ok(eig.dot_v1(x))
}

/// Membership of a group element in the test set.
pub fn contains(pred: &SetPredicate, desc: &GroupDescriptor, a: &GroupElement) -> Result<bool, GroupError> {
    match (pred, a) {
        (SetPredicate::WreathS { epsilon }, GroupElement::Wreath { pos, .. }) => {
            let fr = f_r(a)?;
            Ok(wreath_member(*epsilon, pos[0], fr))
        }
        (SetPredicate::PolycyclicS { big_c, eig }, GroupElement::Polycyclic { k, x }) => {
            let _ = desc;
            let w = signed_log_dot(x, &eig.v1);
            Ok(polycyclic_member(*big_c, phi_of_k(k, eig), w))
        }
        _ => Err(GroupError::FamilyMismatch {
            descriptor: pred.family_name(),
            element: a.family_name(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::{lamplighter, sol, LampGroup};
    use crate::eigen::compute_eigendata;

    fn wreath_elem(lamp_sites: &[i64], pos: i64) -> GroupElement {
        let lamp = LampGroup::CyclicMod { q: 2 };
        GroupElement::wreath(&lamp, lamp_sites.iter().map(|&s| (vec![s], 1)), vec![pos])
    }

    #[test]
    fn f_r_examples() {
        assert_eq!(f_r(&wreath_elem(&[], 5)).unwrap(), 0);
        assert_eq!(f_r(&wreath_elem(&[-5, 2, 7], 0)).unwrap(), 7);
        assert_eq!(f_r(&wreath_elem(&[-4], 0)).unwrap(), 0);
        assert!(f_r(&GroupElement::lattice(vec![0])).is_err());
    }

    #[test]
    fn phi_examples() {
        let eig = compute_eigendata(&sol()).unwrap();
        let id = GroupElement::polycyclic(vec![0], vec![0, 0]);
        assert_eq!(phi(&id, &eig).unwrap(), 0.0);
        let g = GroupElement::polycyclic(vec![3], vec![0, 0]);
        let expect = 3.0 * ((3.0 + 5.0f64.sqrt()) / 2.0).ln();
        assert!((phi(&g, &eig).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 2.8873).abs() < 1e-4);
    }

    #[test]
    fn ip_v1_examples() {
        let eig = compute_eigendata(&sol()).unwrap();
        assert_eq!(ip_v1(&[0.0, 0.0], &eig).unwrap(), 0.0);
        let e1 = ip_v1(&[1.0, 0.0], &eig).unwrap();
        assert!((e1 - 0.8507).abs() < 1e-4);
        let scaled = ip_v1(&[2.0, 0.0], &eig).unwrap();
        assert!((scaled - 2.0 * e1).abs() < 1e-12);
        assert!(ip_v1(&[1.0], &eig).is_err());
    }

    #[test]
    fn wreath_membership_examples() {
        let pred = SetPredicate::wreath_s(0.2).unwrap();
        let desc = lamplighter(2, 1);
        // pos 100, F_R 0: threshold 4.3281 * ln 100 ≈ 19.93
        assert!(contains(&pred, &desc, &wreath_elem(&[], 100)).unwrap());
        // pos 8: threshold ≈ 9.0 > 8
        assert!(!contains(&pred, &desc, &wreath_elem(&[], 8)).unwrap());
        // pos below 1 never belongs
        assert!(!contains(&pred, &desc, &wreath_elem(&[], 0)).unwrap());
        assert!(!contains(&pred, &desc, &wreath_elem(&[], -50)).unwrap());
    }

    #[test]
    fn polycyclic_membership_example() {
        let eig = compute_eigendata(&sol()).unwrap();
        // φ = 10, ln|w| = 3: 7 ≥ 2 ln 10 ≈ 4.61
        assert!(polycyclic_member(
            2.0,
            10.0,
            SignedLog { sign: 1, ln_abs: 3.0 }
        ));
        // φ ≤ 1 excluded
        assert!(!polycyclic_member(2.0, 0.5, SignedLog::ZERO));
        // w = 0 treated as -infinity: member whenever φ > 1
        assert!(polycyclic_member(2.0, 1.5, SignedLog::ZERO));
        let _ = eig;
    }

    #[test]
    fn epsilon_range_enforced() {
        assert!(SetPredicate::wreath_s(0.5).is_err());
        assert!(SetPredicate::wreath_s(0.0).is_err());
        assert!(SetPredicate::wreath_s(0.39).is_ok());
        let eig = compute_eigendata(&sol()).unwrap();
        assert!(SetPredicate::polycyclic_s(0.0, eig.clone()).is_err());
        assert!(SetPredicate::polycyclic_s(2.0, eig).is_ok());
    }

    #[test]
    fn signed_log_addition() {
        let a = SignedLog::from_f64(3.0);
        let b = SignedLog::from_f64(-2.0);
        let c = a.add(b);
        assert_eq!(c.sign, 1);
        assert!((c.ln_abs - 0.0f64).abs() < 1e-12);
        let d = a.add(a.neg());
        assert!(d.is_zero());
        // Huge magnitudes that would overflow plain f64.
        let big = SignedLog { sign: 1, ln_abs: 5000.0 };
        let bigger = big.add(big);
        assert!((bigger.ln_abs - (5000.0 + std::f64::consts::LN_2)).abs() < 1e-12);
    }

    #[test]
    fn signed_log_dot_handles_huge_entries() {
        use num_bigint::BigInt;
        let huge = BigInt::from(3) << 2000usize; // ~ 2^2001.58
        let x = vec![huge.clone(), -huge.clone()];
        let v = vec![0.6, 0.3];
        let w = signed_log_dot(&x, &v);
        // 3*2^2000*(0.6-0.3) = 0.9 * 2^2000
        let expect = (0.9f64).ln() + 2000.0 * std::f64::consts::LN_2;
        assert_eq!(w.sign, 1);
        assert!((w.ln_abs - expect).abs() < 1e-9, "{} vs {expect}", w.ln_abs);
        let zero = signed_log_dot(&[BigInt::from(0), BigInt::from(0)], &v);
        assert!(zero.is_zero());
    }

    #[test]
    fn contains_rejects_family_mismatch() {
        let pred = SetPredicate::wreath_s(0.2).unwrap();
        let desc = sol();
        let g = GroupElement::polycyclic(vec![0], vec![0, 0]);
        assert!(contains(&pred, &desc, &g).is_err());
    }
}
