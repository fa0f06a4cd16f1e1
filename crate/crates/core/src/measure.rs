//! Finitely supported probability measures with exact rational weights.
//!
//! Weights are exact rationals end to end; floating point appears only in
//! the alias sampler, where the weights are converted once. Atoms are kept
//! deduplicated (by canonical key) and sorted, so equal measures are
//! structurally equal and every serialization is deterministic.

use std::collections::HashMap;
use std::sync::OnceLock;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::alias::AliasTable;
use crate::descriptor::{GroupDescriptor, LampGroup};
use crate::element::{identity, inverse, multiply, GroupElement};
use crate::encode::{canonical_key, key_hex};
use crate::error::MeasureError;
use crate::rng::Rng;

/// Default cap on convolution support size.
pub const DEFAULT_ATOM_CAP: usize = 10_000_000;

#[derive(Debug)]
pub struct Measure {
    desc: GroupDescriptor,
    /// (element, weight), sorted by canonical key; weights positive, sum 1.
    atoms: Vec<(GroupElement, BigRational)>,
    symmetric: bool,
    sampler: OnceLock<AliasTable>,
}

impl Clone for Measure {
    fn clone(&self) -> Self {
        Measure {
            desc: self.desc.clone(),
            atoms: self.atoms.clone(),
            symmetric: self.symmetric,
            sampler: OnceLock::new(),
        }
    }
}

impl PartialEq for Measure {
    fn eq(&self, other: &Self) -> bool {
        self.desc == other.desc && self.atoms == other.atoms
    }
}

/// Exact validation results for a candidate measure.
#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub support: usize,
    pub normalized: bool,
    /// Total mass as an exact rational string "num/den".
    pub total_mass: String,
    pub all_weights_positive: bool,
    pub symmetric: bool,
    /// Number of atoms whose inverse is missing or carries a different weight.
    pub asymmetric_atoms: usize,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.normalized && self.all_weights_positive && self.symmetric
    }
}

fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

fn merge_atoms(
    desc: &GroupDescriptor,
    atoms: impl IntoIterator<Item = (GroupElement, BigRational)>,
) -> Result<Vec<(GroupElement, BigRational)>, MeasureError> {
    let mut map: HashMap<Vec<u8>, (GroupElement, BigRational)> = HashMap::new();
    for (g, w) in atoms {
        if w.is_zero() {
            continue;
        }
        let key = canonical_key(desc, &g)?;
        match map.get_mut(&key) {
            Some((_, acc)) => *acc += w,
            None => {
                map.insert(key, (g, w));
            }
        }
    }
    let mut merged: Vec<(Vec<u8>, (GroupElement, BigRational))> = map.into_iter().collect();
    merged.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(merged.into_iter().map(|(_, gw)| gw).collect())
}

fn check_symmetry(
    desc: &GroupDescriptor,
    atoms: &[(GroupElement, BigRational)],
) -> Result<usize, MeasureError> {
    let mut by_key: HashMap<Vec<u8>, &BigRational> = HashMap::with_capacity(atoms.len());
    for (g, w) in atoms {
        by_key.insert(canonical_key(desc, g)?, w);
    }
    let mut bad = 0usize;
    for (g, w) in atoms {
        let inv = inverse(desc, g)?;
        let key = canonical_key(desc, &inv)?;
        match by_key.get(&key) {
            Some(wi) if *wi == w => {}
            _ => bad += 1,
        }
    }
    Ok(bad)
}

impl Measure {
    /// Build a probability measure; merges duplicate atoms, then requires
    /// positive weights summing to exactly 1.
    pub fn new(
        desc: GroupDescriptor,
        atoms: Vec<(GroupElement, BigRational)>,
    ) -> Result<Measure, MeasureError> {
        let m = Measure::raw(desc, atoms)?;
        let report = m.validate()?;
        if !report.normalized {
            return Err(MeasureError::NotProbability(format!(
                "total mass is {}, expected 1",
                report.total_mass
            )));
        }
        if !report.all_weights_positive {
            return Err(MeasureError::NotProbability("negative weight".into()));
        }
        Ok(m)
    }

    /// Build without the probability checks (still merged and sorted).
    /// Used to carry deliberately broken inputs through `validate`.
    pub fn raw(
        desc: GroupDescriptor,
        atoms: Vec<(GroupElement, BigRational)>,
    ) -> Result<Measure, MeasureError> {
        let merged = merge_atoms(&desc, atoms)?;
        let bad = check_symmetry(&desc, &merged)?;
        Ok(Measure {
            desc,
            atoms: merged,
            symmetric: bad == 0,
            sampler: OnceLock::new(),
        })
    }

    pub fn descriptor(&self) -> &GroupDescriptor {
        &self.desc
    }

    pub fn atoms(&self) -> &[(GroupElement, BigRational)] {
        &self.atoms
    }

    pub fn support(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Exact weight of an element (zero if outside the support).
    pub fn weight(&self, g: &GroupElement) -> Result<BigRational, MeasureError> {
        let key = canonical_key(&self.desc, g)?;
        for (a, w) in &self.atoms {
            if canonical_key(&self.desc, a)? == key {
                return Ok(w.clone());
            }
        }
        Ok(BigRational::zero())
    }

    /// Exact normalization / symmetry / support report.
    pub fn validate(&self) -> Result<ValidationReport, MeasureError> {
        let total: BigRational = self.atoms.iter().map(|(_, w)| w.clone()).sum();
        let asymmetric = check_symmetry(&self.desc, &self.atoms)?;
        Ok(ValidationReport {
            support: self.atoms.len(),
            normalized: total.is_one(),
            total_mass: format!("{}/{}", total.numer(), total.denom()),
            all_weights_positive: self.atoms.iter().all(|(_, w)| w.is_positive()),
            symmetric: asymmetric == 0,
            asymmetric_atoms: asymmetric,
        })
    }

    /// Exact convolution (μ∗ν)(g) = Σ_h μ(h)·ν(h^{-1}g), computed as the
    /// weighted product set with merging.
    pub fn convolve(&self, other: &Measure) -> Result<Measure, MeasureError> {
        self.convolve_with_cap(other, DEFAULT_ATOM_CAP)
    }

    pub fn convolve_with_cap(&self, other: &Measure, cap: usize) -> Result<Measure, MeasureError> {
        if self.desc != other.desc {
            return Err(MeasureError::DescriptorMismatch);
        }
        let mut acc: HashMap<GroupElement, BigRational> =
            HashMap::with_capacity(self.atoms.len().max(other.atoms.len()));
        for (a, wa) in &self.atoms {
            for (b, wb) in &other.atoms {
                let g = multiply(&self.desc, a, b)?;
                let w = wa * wb;
                match acc.get_mut(&g) {
                    Some(total) => *total += w,
                    None => {
                        if acc.len() >= cap {
                            return Err(MeasureError::SupportCapExceeded { cap });
                        }
                        acc.insert(g, w);
                    }
                }
            }
        }
        Measure::new(self.desc.clone(), acc.into_iter().collect())
    }

    /// μ̂(g) = (μ(g) + μ(g^{-1})) / 2.
    pub fn symmetrize(&self) -> Result<Measure, MeasureError> {
        let half = rational(1, 2);
        let mut atoms: Vec<(GroupElement, BigRational)> = Vec::with_capacity(self.atoms.len() * 2);
        for (g, w) in &self.atoms {
            atoms.push((g.clone(), w * &half));
            atoms.push((inverse(&self.desc, g)?, w * &half));
        }
        Measure::new(self.desc.clone(), atoms)
    }

    /// Point mass at the identity.
    pub fn dirac_identity(desc: GroupDescriptor) -> Result<Measure, MeasureError> {
        let id = identity(&desc);
        Measure::new(desc, vec![(id, BigRational::one())])
    }

    fn build_sampler(&self) -> AliasTable {
        let weights: Vec<f64> = self
            .atoms
            .iter()
            .map(|(_, w)| w.to_f64().expect("weight convertible to f64"))
            .collect();
        AliasTable::new(&weights)
    }

    pub fn sampler(&self) -> &AliasTable {
        self.sampler.get_or_init(|| self.build_sampler())
    }

    /// Draw an atom with probability equal to its weight.
    pub fn sample(&self, rng: &mut Rng) -> &GroupElement {
        let idx = self.sampler().sample(rng);
        &self.atoms[idx].0
    }

    /// JSON-friendly document: descriptor plus (canonical key hex,
    /// numerator, denominator) per atom.
    pub fn to_doc(&self) -> Result<MeasureDoc, MeasureError> {
        let mut atoms = Vec::with_capacity(self.atoms.len());
        for (g, w) in &self.atoms {
            atoms.push(AtomDoc {
                key: key_hex(&self.desc, g)?,
                numerator: w.numer().to_string(),
                denominator: w.denom().to_string(),
            });
        }
        Ok(MeasureDoc {
            descriptor: self.desc.clone(),
            support: atoms.len(),
            symmetric: self.symmetric,
            atoms,
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AtomDoc {
    pub key: String,
    pub numerator: String,
    pub denominator: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct MeasureDoc {
    pub descriptor: GroupDescriptor,
    pub support: usize,
    pub symmetric: bool,
    pub atoms: Vec<AtomDoc>,
}

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

fn wreath_parts(desc: &GroupDescriptor) -> Result<(LampGroup, usize), MeasureError> {
    match desc {
        GroupDescriptor::Wreath { lamp, d } => Ok((*lamp, *d)),
        other => Err(MeasureError::FamilyMismatch(format!(
            "expected wreath descriptor, got {}",
            other.family_name()
        ))),
    }
}

fn unit_vec(d: usize, j: usize, sign: i64) -> Vec<i64> {
    let mut v = vec![0i64; d];
    v[j] = sign;
    v
}

/// η: identity with probability 1/2, otherwise a ±1 lamp step at the origin
/// site (atoms merge when the lamp group identifies them, e.g. q = 2).
pub fn eta(desc: &GroupDescriptor) -> Result<Measure, MeasureError> {
    let (lamp, d) = wreath_parts(desc)?;
    let origin = vec![0i64; d];
    let zero_pos = vec![0i64; d];
    let mut atoms = vec![(identity(desc), rational(1, 2))];
    for s in [1i64, -1] {
        atoms.push((
            GroupElement::wreath(&lamp, [(origin.clone(), s)], zero_pos.clone()),
            rational(1, 4),
        ));
    }
    Measure::new(desc.clone(), atoms)
}

/// λ: pure lamplighter moves whose first-coordinate projection is simple
/// random walk. d = 1: ±1 with probability 1/2 each; d > 1: ±e_1 with 1/4
/// each and the remaining 2(d−1) unit moves sharing mass 1/2 uniformly.
pub fn lambda_move(desc: &GroupDescriptor) -> Result<Measure, MeasureError> {
    let (lamp, d) = wreath_parts(desc)?;
    let _ = lamp;
    let mut atoms = Vec::new();
    if d == 1 {
        for s in [1i64, -1] {
            atoms.push((
                GroupElement::wreath(&lamp, [], unit_vec(d, 0, s)),
                rational(1, 2),
            ));
        }
    } else {
        for s in [1i64, -1] {
            atoms.push((
                GroupElement::wreath(&lamp, [], unit_vec(d, 0, s)),
                rational(1, 4),
            ));
        }
        let rest = 2 * (d - 1) as i64;
        for j in 1..d {
            for s in [1i64, -1] {
                atoms.push((
                    GroupElement::wreath(&lamp, [], unit_vec(d, j, s)),
                    rational(1, 2 * rest),
                ));
            }
        }
    }
    Measure::new(desc.clone(), atoms)
}

/// μ = η ∗ λ ∗ η: randomize the current lamp, move, randomize the new lamp.
/// On Z_2 wr Z this is exactly the eight-atom measure of weight 1/8.
pub fn lamplighter_mu(desc: &GroupDescriptor) -> Result<Measure, MeasureError> {
    let e = eta(desc)?;
    let l = lambda_move(desc)?;
    e.convolve(&l)?.convolve(&e)
}

/// ν: with probability 1/2 a lamp-free jump of ±`jump` along the first
/// coordinate, otherwise a μ-step at half weight.
pub fn lamplighter_nu(desc: &GroupDescriptor, jump: i64) -> Result<Measure, MeasureError> {
    if jump < 1 {
        return Err(MeasureError::InvalidParameter(format!(
            "jump must be >= 1, got {jump}"
        )));
    }
    let (lamp, d) = wreath_parts(desc)?;
    let mu = lamplighter_mu(desc)?;
    let half = rational(1, 2);
    let mut atoms: Vec<(GroupElement, BigRational)> = mu
        .atoms()
        .iter()
        .map(|(g, w)| (g.clone(), w * &half))
        .collect();
    for s in [1i64, -1] {
        atoms.push((
            GroupElement::wreath(&lamp, [], unit_vec(d, 0, s * jump)),
            rational(1, 4),
        ));
    }
    Measure::new(desc.clone(), atoms)
}

fn polycyclic_parts(desc: &GroupDescriptor) -> Result<(usize, usize), MeasureError> {
    match desc {
        GroupDescriptor::Polycyclic { m, d, .. } => Ok((*m, *d)),
        other => Err(MeasureError::FamilyMismatch(format!(
            "expected polycyclic descriptor, got {}",
            other.family_name()
        ))),
    }
}

/// Raw μ: (±u_i, ±e_j) with weight 1/(6md) and (±u_i, 0) with weight
/// 1/(6m). Not inverse-closed in general; see `polycyclic_mu`.
pub fn polycyclic_mu_raw(desc: &GroupDescriptor) -> Result<Measure, MeasureError> {
    let (m, d) = polycyclic_parts(desc)?;
    let mut atoms = Vec::new();
    for i in 0..m {
        for si in [1i64, -1] {
            let k = unit_vec(m, i, si);
            atoms.push((
                GroupElement::polycyclic(k.clone(), vec![0; d]),
                rational(1, 6 * m as i64),
            ));
            for j in 0..d {
                for sj in [1i64, -1] {
                    atoms.push((
                        GroupElement::polycyclic(k.clone(), unit_vec(d, j, sj)),
                        rational(1, 6 * (m * d) as i64),
                    ));
                }
            }
        }
    }
    Measure::new(desc.clone(), atoms)
}

/// Symmetrized μ (the raw formula is generally not inverse-closed under the
/// semidirect product law, so the walk measure is its symmetrization).
pub fn polycyclic_mu(desc: &GroupDescriptor) -> Result<Measure, MeasureError> {
    polycyclic_mu_raw(desc)?.symmetrize()
}

/// Raw ν: (±β·u_i, 0) with weight 1/(4m) plus the raw μ at half weight.
pub fn polycyclic_nu_raw(desc: &GroupDescriptor, beta: i64) -> Result<Measure, MeasureError> {
    if beta < 1 {
        return Err(MeasureError::InvalidParameter(format!(
            "beta must be >= 1, got {beta}"
        )));
    }
    let (m, d) = polycyclic_parts(desc)?;
    let mu = polycyclic_mu_raw(desc)?;
    let half = rational(1, 2);
    let mut atoms: Vec<(GroupElement, BigRational)> = mu
        .atoms()
        .iter()
        .map(|(g, w)| (g.clone(), w * &half))
        .collect();
    for i in 0..m {
        for s in [1i64, -1] {
            atoms.push((
                GroupElement::polycyclic(unit_vec(m, i, s * beta), vec![0; d]),
                rational(1, 4 * m as i64),
            ));
        }
    }
    Measure::new(desc.clone(), atoms)
}

/// Symmetrized ν.
pub fn polycyclic_nu(desc: &GroupDescriptor, beta: i64) -> Result<Measure, MeasureError> {
    polycyclic_nu_raw(desc, beta)?.symmetrize()
}

/// Simple random walk on Z^d: uniform on the 2d unit moves.
pub fn srw_lattice(d: usize) -> Result<Measure, MeasureError> {
    let desc = GroupDescriptor::Lattice { d };
    let mut atoms = Vec::new();
    for j in 0..d {
        for s in [1i64, -1] {
            atoms.push((
                GroupElement::lattice(unit_vec(d, j, s)),
                rational(1, 2 * d as i64),
            ));
        }
    }
    Measure::new(desc, atoms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::{lamplighter, sol};

    #[test]
    fn lamplighter_mu_is_eight_atoms_of_one_eighth() {
        let desc = lamplighter(2, 1);
        let mu = lamplighter_mu(&desc).unwrap();
        assert_eq!(mu.support(), 8);
        let eighth = rational(1, 8);
        for (g, w) in mu.atoms() {
            assert_eq!(*w, eighth);
            match g {
                GroupElement::Wreath { lamps, pos } => {
                    assert_eq!(pos[0].abs(), 1);
                    for site in lamps.keys() {
                        assert!(site[0] == 0 || site[0] == pos[0], "lamp outside {{0, x}}");
                    }
                }
                _ => panic!("wrong family"),
            }
        }
        let report = mu.validate().unwrap();
        assert!(report.normalized && report.symmetric);
    }

    #[test]
    fn eta_merges_on_z2() {
        let desc = lamplighter(2, 1);
        let e = eta(&desc).unwrap();
        // +1 and -1 coincide mod 2, so two atoms: identity and lamp flip.
        assert_eq!(e.support(), 2);
        for (_, w) in e.atoms() {
            assert_eq!(*w, rational(1, 2));
        }
    }

    #[test]
    fn eta_on_z3_has_three_atoms() {
        let desc = lamplighter(3, 1);
        let e = eta(&desc).unwrap();
        assert_eq!(e.support(), 3);
    }

    #[test]
    fn delta_convolve_is_identity_op() {
        let desc = lamplighter(2, 1);
        let mu = lamplighter_mu(&desc).unwrap();
        let delta = Measure::dirac_identity(desc).unwrap();
        assert_eq!(delta.convolve(&mu).unwrap(), mu);
        assert_eq!(mu.convolve(&delta).unwrap(), mu);
    }

    #[test]
    fn mu_square_weight_at_identity() {
        // Sum over atom pairs multiplying to the identity: mu is symmetric
        // with eight atoms of weight 1/8, so the value is 8 * (1/8)^2 = 1/8.
        let desc = lamplighter(2, 1);
        let mu = lamplighter_mu(&desc).unwrap();
        let sq = mu.convolve(&mu).unwrap();
        let id = identity(mu.descriptor());
        assert_eq!(sq.weight(&id).unwrap(), rational(1, 8));
    }

    #[test]
    fn convolution_associates() {
        let desc = lamplighter(2, 1);
        let e = eta(&desc).unwrap();
        let l = lambda_move(&desc).unwrap();
        let left = e.convolve(&l).unwrap().convolve(&e).unwrap();
        let right = e.convolve(&l.convolve(&e).unwrap()).unwrap();
        assert_eq!(left, right);
    }

    #[test]
    fn perturbed_measure_reports_not_normalized() {
        let desc = lamplighter(2, 1);
        let mu = lamplighter_mu(&desc).unwrap();
        let mut atoms: Vec<_> = mu.atoms().to_vec();
        atoms[0].1 = rational(1, 8) + rational(1, 1000);
        let raw = Measure::raw(desc, atoms).unwrap();
        let report = raw.validate().unwrap();
        assert!(!report.normalized);
        assert!(Measure::new(raw.descriptor().clone(), raw.atoms().to_vec()).is_err());
    }

    #[test]
    fn raw_polycyclic_mu_is_not_symmetric() {
        let desc = sol();
        let raw = polycyclic_mu_raw(&desc).unwrap();
        assert_eq!(raw.support(), 10);
        let report = raw.validate().unwrap();
        assert!(report.normalized);
        assert!(!report.symmetric);
        assert!(report.asymmetric_atoms > 0);
    }

    #[test]
    fn symmetrized_polycyclic_mu() {
        let desc = sol();
        let raw = polycyclic_mu_raw(&desc).unwrap();
        let sym = polycyclic_mu(&desc).unwrap();
        let report = sym.validate().unwrap();
        assert!(report.normalized && report.symmetric);
        assert!(sym.support() <= 2 * raw.support());
    }

    #[test]
    fn symmetrize_fixes_symmetric_input() {
        let desc = lamplighter(2, 1);
        let mu = lamplighter_mu(&desc).unwrap();
        assert_eq!(mu.symmetrize().unwrap(), mu);
    }

    #[test]
    fn symmetrize_point_mass() {
        let desc = sol();
        let g = GroupElement::polycyclic(vec![1], vec![1, 0]);
        let m = Measure::new(desc.clone(), vec![(g.clone(), BigRational::one())]).unwrap();
        let sym = m.symmetrize().unwrap();
        assert_eq!(sym.support(), 2);
        assert_eq!(sym.weight(&g).unwrap(), rational(1, 2));
        let ginv = inverse(&desc, &g).unwrap();
        assert_eq!(sym.weight(&ginv).unwrap(), rational(1, 2));
    }

    #[test]
    fn polycyclic_nu_masses() {
        let desc = sol();
        let raw = polycyclic_nu_raw(&desc, 4).unwrap();
        let report = raw.validate().unwrap();
        assert!(report.normalized);
        let beta_atom = GroupElement::polycyclic(vec![4], vec![0, 0]);
        assert_eq!(raw.weight(&beta_atom).unwrap(), rational(1, 4));
        let sym = polycyclic_nu(&desc, 4).unwrap();
        assert!(sym.validate().unwrap().ok());
        assert!(polycyclic_nu(&desc, 0).is_err());
    }

    #[test]
    fn nu_wreath_structure() {
        let desc = lamplighter(2, 1);
        let nu = lamplighter_nu(&desc, 8).unwrap();
        // 8 mu atoms at 1/16 plus two jump atoms at 1/4.
        assert_eq!(nu.support(), 10);
        let jump = GroupElement::wreath(&LampGroup::CyclicMod { q: 2 }, [], vec![8]);
        assert_eq!(nu.weight(&jump).unwrap(), rational(1, 4));
        assert!(nu.validate().unwrap().ok());
    }

    #[test]
    fn srw_lattice_structure() {
        let m = srw_lattice(3).unwrap();
        assert_eq!(m.support(), 6);
        assert!(m.validate().unwrap().ok());
    }

    #[test]
    fn sampling_matches_weights() {
        let desc = lamplighter(2, 1);
        let mu = lamplighter_mu(&desc).unwrap();
        let mut rng = Rng::from_seed(2024);
        let n = 1_000_000u64;
        let mut counts: HashMap<Vec<u8>, u64> = HashMap::new();
        for _ in 0..n {
            let g = mu.sample(&mut rng);
            *counts
                .entry(canonical_key(mu.descriptor(), g).unwrap())
                .or_default() += 1;
        }
        let p = 0.125f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        for (g, _) in mu.atoms() {
            let key = canonical_key(mu.descriptor(), g).unwrap();
            let freq = *counts.get(&key).unwrap_or(&0) as f64 / n as f64;
            assert!((freq - p).abs() < 3.0 * sigma, "freq {freq} vs {p}");
        }
    }

    #[test]
    fn nu_jump_frequency() {
        let desc = lamplighter(2, 1);
        let nu = lamplighter_nu(&desc, 8).unwrap();
        let mut rng = Rng::from_seed(7);
        let n = 1_000_000u64;
        let mut plus8 = 0u64;
        for _ in 0..n {
            if let GroupElement::Wreath { pos, .. } = nu.sample(&mut rng) {
                if pos[0] == 8 {
                    plus8 += 1;
                }
            }
        }
        let p = 0.25f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        let freq = plus8 as f64 / n as f64;
        assert!((freq - p).abs() < 3.0 * sigma, "freq {freq}");
    }

    #[test]
    fn convolution_cap_errors() {
        let desc = lamplighter(2, 1);
        let mu = lamplighter_mu(&desc).unwrap();
        let err = mu.convolve_with_cap(&mu, 4).unwrap_err();
        assert!(matches!(err, MeasureError::SupportCapExceeded { cap: 4 }));
    }
}
