//! Canonical byte encoding of group elements (format version 1).
//!
//! Layout: version byte, family tag byte, dimensions as LEB128 varints,
//! then family payload with all signed coordinates as zigzag varints.
//! Wreath lamp sites are emitted in lexicographic site order (the canonical
//! order of `LampConfig`), so the encoding is injective and structurally
//! equal elements encode identically regardless of construction order.
//!
//! - lattice (tag 0): d, x_1..x_d
//! - wreath (tag 1): lamp-group tag (0 = cyclic followed by q, 1 = integers),
//!   d, pos_1..pos_d, lamp count, then per lamp: site_1..site_d, value
//! - polycyclic (tag 2): m, d, k_1..k_m, x_1..x_d (arbitrary-precision zigzag)

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::Zero;

use crate::descriptor::{GroupDescriptor, LampGroup};
use crate::element::{conforms, GroupElement};
use crate::error::GroupError;

pub const KEY_VERSION: u8 = 1;

#[inline]
pub fn zigzag64(v: i64) -> u64 {
    ((v << 1) ^ (v >> 63)) as u64
}

pub fn push_varint(out: &mut Vec<u8>, mut v: u64) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

#[inline]
pub fn push_signed(out: &mut Vec<u8>, v: i64) {
    push_varint(out, zigzag64(v));
}

/// Zigzag-map a BigInt to a non-negative BigUint, then LEB128-encode it.
/// Minimal-length encoding, so the map is injective.
pub fn push_signed_big(out: &mut Vec<u8>, v: &BigInt) {
    let u: BigUint = match v.sign() {
        Sign::NoSign => BigUint::zero(),
        Sign::Plus => v.magnitude() << 1u8,
        Sign::Minus => (v.magnitude() << 1u8) - 1u32,
    };
    let bytes = u.to_bytes_le();
    // LEB128 over the little-endian magnitude.
    let mut acc: u32 = 0;
    let mut acc_bits = 0u32;
    let total_bits = u.bits();
    let mut emitted = 0u64;
    if total_bits == 0 {
        out.push(0);
        return;
    }
    for b in bytes {
        acc |= (b as u32) << acc_bits;
        acc_bits += 8;
        while acc_bits >= 7 {
            emitted += 7;
            let chunk = (acc & 0x7f) as u8;
            acc >>= 7;
            acc_bits -= 7;
            if emitted >= total_bits {
                out.push(chunk);
                return;
            }
            out.push(chunk | 0x80);
        }
    }
    if acc_bits > 0 {
        out.push(acc as u8);
    }
}

/// Injective, deterministic canonical key for an element under a descriptor.
pub fn canonical_key(desc: &GroupDescriptor, a: &GroupElement) -> Result<Vec<u8>, GroupError> {
    conforms(desc, a)?;
    let mut out = Vec::with_capacity(16);
    out.push(KEY_VERSION);
    match (desc, a) {
        (GroupDescriptor::Lattice { d }, GroupElement::Lattice { x }) => {
            out.push(0);
            push_varint(&mut out, *d as u64);
            for &v in x {
                push_signed(&mut out, v);
            }
        }
        (GroupDescriptor::Wreath { lamp, d }, GroupElement::Wreath { lamps, pos }) => {
            out.push(1);
            match lamp {
                LampGroup::CyclicMod { q } => {
                    out.push(0);
                    push_varint(&mut out, *q as u64);
                }
                LampGroup::Integers => out.push(1),
            }
            push_varint(&mut out, *d as u64);
            for &v in pos {
                push_signed(&mut out, v);
            }
            push_varint(&mut out, lamps.len() as u64);
            for (site, &v) in lamps {
                for &s in site {
                    push_signed(&mut out, s);
                }
                push_signed(&mut out, v);
            }
        }
        (GroupDescriptor::Polycyclic { m, d, .. }, GroupElement::Polycyclic { k, x }) => {
            out.push(2);
            push_varint(&mut out, *m as u64);
            push_varint(&mut out, *d as u64);
            for &v in k {
                push_signed(&mut out, v);
            }
            for v in x {
                push_signed_big(&mut out, v);
            }
        }
        _ => unreachable!("conformance checked above"),
    }
    Ok(out)
}

pub fn key_hex(desc: &GroupDescriptor, a: &GroupElement) -> Result<String, GroupError> {
    let key = canonical_key(desc, a)?;
    let mut s = String::with_capacity(key.len() * 2);
    for b in key {
        s.push_str(&format!("{b:02x}"));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::{lamplighter, lattice, sol};
    use crate::element::identity;

    #[test]
    fn identity_keys_are_fixed() {
        let d1 = lattice(2);
        assert_eq!(canonical_key(&d1, &identity(&d1)).unwrap(), vec![1, 0, 2, 0, 0]);
        let d2 = lamplighter(2, 1);
        assert_eq!(
            canonical_key(&d2, &identity(&d2)).unwrap(),
            vec![1, 1, 0, 2, 1, 0, 0]
        );
        let d3 = sol();
        assert_eq!(
            canonical_key(&d3, &identity(&d3)).unwrap(),
            vec![1, 2, 1, 2, 0, 0, 0]
        );
    }

    #[test]
    fn insertion_order_does_not_matter() {
        let desc = lamplighter(2, 1);
        let lamp = crate::descriptor::LampGroup::CyclicMod { q: 2 };
        let a = GroupElement::wreath(&lamp, [(vec![3], 1), (vec![-1], 1)], vec![2]);
        let b = GroupElement::wreath(&lamp, [(vec![-1], 1), (vec![3], 1)], vec![2]);
        assert_eq!(
            canonical_key(&desc, &a).unwrap(),
            canonical_key(&desc, &b).unwrap()
        );
    }

    #[test]
    fn bigint_zigzag_roundtrip_distinct() {
        let vals = [
            BigInt::from(0),
            BigInt::from(1),
            BigInt::from(-1),
            BigInt::from(63),
            BigInt::from(64),
            BigInt::from(-64),
            BigInt::from(-65),
            BigInt::parse_bytes(b"123456789012345678901234567890", 10).unwrap(),
            -BigInt::parse_bytes(b"123456789012345678901234567890", 10).unwrap(),
        ];
        let mut keys = std::collections::HashSet::new();
        for v in &vals {
            let mut out = Vec::new();
            push_signed_big(&mut out, v);
            assert!(keys.insert(out), "duplicate encoding for {v}");
        }
    }

    #[test]
    fn small_bigint_matches_i64_zigzag() {
        for v in [-300i64, -65, -64, -1, 0, 1, 63, 64, 127, 128, 300] {
            let mut a = Vec::new();
            push_signed(&mut a, v);
            let mut b = Vec::new();
            push_signed_big(&mut b, &BigInt::from(v));
            assert_eq!(a, b, "value {v}");
        }
    }
}
