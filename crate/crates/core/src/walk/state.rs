//! Mutable per-trajectory walk states, one per group family.
//!
//! The states maintain exactly the quantities the observers need and update
//! them incrementally per step. The polycyclic state keeps the exact
//! x-coordinate as a ledger of increments bucketed by the k-value at which
//! they occurred (x = Σ_k Ψ_k(c_k), re-materialized exactly on demand), and
//! the expanding component (x, v1) in signed log domain alongside it.

use std::collections::{BTreeMap, HashMap};

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;

use crate::descriptor::{GroupDescriptor, LampGroup};
use crate::eigen::EigenData;
use crate::element::GroupElement;
use crate::error::{GroupError, WalkError};
use crate::matrix::{BigMatrix, IntMatrix};
use crate::observe::{phi_of_k, signed_log_dot, SignedLog};

// ---------------------------------------------------------------------------
// Increments
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct WreathIncrement {
    /// Lamp writes as (site offset from current position, lamp value).
    pub toggles: Vec<(Vec<i64>, i64)>,
    pub dpos: Vec<i64>,
}

#[derive(Clone, Debug)]
pub struct PolyIncrement {
    pub dk: Vec<i64>,
    pub y: Vec<i64>,
    pub has_y: bool,
    /// (y, v1) as a signed log constant.
    pub y_dot_v1: SignedLog,
}

#[derive(Clone, Debug)]
pub enum Increments {
    Lattice(Vec<Vec<i64>>),
    Wreath(Vec<WreathIncrement>),
    Poly(Vec<PolyIncrement>),
}

/// Decompose measure atoms into family-specific increments, aligned with
/// the measure's atom order (and therefore with its alias table).
pub fn decompose_increments(
    desc: &GroupDescriptor,
    atoms: &[(GroupElement, num_rational::BigRational)],
    eig: Option<&EigenData>,
) -> Result<Increments, WalkError> {
    match desc {
        GroupDescriptor::Lattice { .. } => {
            let mut v = Vec::with_capacity(atoms.len());
            for (g, _) in atoms {
                let GroupElement::Lattice { x } = g else {
                    return Err(WalkError::BadIncrement("non-lattice atom".into()));
                };
                v.push(x.clone());
            }
            Ok(Increments::Lattice(v))
        }
        GroupDescriptor::Wreath { .. } => {
            let mut v = Vec::with_capacity(atoms.len());
            for (g, _) in atoms {
                let GroupElement::Wreath { lamps, pos } = g else {
                    return Err(WalkError::BadIncrement("non-wreath atom".into()));
                };
                v.push(WreathIncrement {
                    toggles: lamps.iter().map(|(s, &val)| (s.clone(), val)).collect(),
                    dpos: pos.clone(),
                });
            }
            Ok(Increments::Wreath(v))
        }
        GroupDescriptor::Polycyclic { .. } => {
            let eig = eig.ok_or_else(|| {
                WalkError::InvalidConfig("polycyclic walk requires eigendata".into())
            })?;
            let mut v = Vec::with_capacity(atoms.len());
            for (g, _) in atoms {
                let GroupElement::Polycyclic { k, x } = g else {
                    return Err(WalkError::BadIncrement("non-polycyclic atom".into()));
                };
                let mut y = Vec::with_capacity(x.len());
                for c in x {
                    let ci = c.to_i64().ok_or_else(|| {
                        WalkError::BadIncrement("atom x-part exceeds i64".into())
                    })?;
                    y.push(ci);
                }
                let dot: f64 = y.iter().zip(&eig.v1).map(|(&a, &b)| a as f64 * b).sum();
                v.push(PolyIncrement {
                    dk: k.clone(),
                    has_y: y.iter().any(|&c| c != 0),
                    y_dot_v1: SignedLog::from_f64(dot),
                    y,
                });
            }
            Ok(Increments::Poly(v))
        }
    }
}

// ---------------------------------------------------------------------------
// Lattice
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct LatticeState {
    pub pos: Vec<i64>,
    pub m_n: i64,
}

impl LatticeState {
    pub fn new(d: usize) -> Self {
        LatticeState {
            pos: vec![0; d],
            m_n: 0,
        }
    }

    #[inline]
    pub fn apply(&mut self, dx: &[i64]) -> Result<(), GroupError> {
        for (p, &d) in self.pos.iter_mut().zip(dx) {
            *p = p.checked_add(d).ok_or(GroupError::Overflow)?;
        }
        if self.pos[0] > self.m_n {
            self.m_n = self.pos[0];
        }
        Ok(())
    }

    pub fn element(&self) -> GroupElement {
        GroupElement::Lattice { x: self.pos.clone() }
    }
}

// ---------------------------------------------------------------------------
// Wreath, fast path: d = 1, lamp group Z_2
// ---------------------------------------------------------------------------

/// Growable bitmap over an integer interval of sites.
#[derive(Clone, Debug)]
struct BitGrid {
    words: Vec<u64>,
    /// Site index of bit 0 of word 0.
    base: i64,
}

impl BitGrid {
    fn new() -> Self {
        BitGrid {
            words: vec![0; 64],
            base: -(32 * 64),
        }
    }

    #[inline]
    fn ensure(&mut self, site: i64) {
        let mut idx = site - self.base;
        if idx < 0 {
            let grow_words = (((-idx) as usize + 63) / 64 + 256).next_power_of_two();
            let mut new_words = vec![0u64; grow_words + self.words.len()];
            new_words[grow_words..].copy_from_slice(&self.words);
            self.words = new_words;
            self.base -= (grow_words * 64) as i64;
            idx = site - self.base;
        }
        let word = idx as usize / 64;
        if word >= self.words.len() {
            let target = (word + 256).next_power_of_two();
            self.words.resize(target, 0);
        }
    }

    /// Toggle the bit; returns true if now set.
    #[inline]
    fn toggle(&mut self, site: i64) -> bool {
        self.ensure(site);
        let idx = (site - self.base) as usize;
        let (w, b) = (idx / 64, idx % 64);
        self.words[w] ^= 1u64 << b;
        self.words[w] & (1u64 << b) != 0
    }

    /// Largest set site strictly below `below`, if any.
    fn prev_set(&self, below: i64) -> Option<i64> {
        let idx = below - self.base;
        if idx <= 0 {
            return None;
        }
        let idx = (idx - 1).min((self.words.len() * 64 - 1) as i64) as usize;
        let mut w = idx / 64;
        let b = idx % 64;
        let mut mask = if b == 63 { u64::MAX } else { (1u64 << (b + 1)) - 1 };
        loop {
            let word = self.words[w] & mask;
            if word != 0 {
                let top = 63 - word.leading_zeros() as usize;
                return Some(self.base + (w * 64 + top) as i64);
            }
            if w == 0 {
                return None;
            }
            w -= 1;
            mask = u64::MAX;
        }
    }
}

#[derive(Clone, Debug)]
pub struct WreathZ2State {
    pub pos: i64,
    pub m_n: i64,
    grid: BitGrid,
    max_on: Option<i64>,
    pub on_count: usize,
}

/// Increment pre-lowered for the fast path: flip offsets and a scalar move.
#[derive(Clone, Debug)]
pub struct WreathZ2Increment {
    pub flips: Vec<i64>,
    pub dpos: i64,
}

pub fn lower_wreath_z2(incrs: &[WreathIncrement]) -> Vec<WreathZ2Increment> {
    incrs
        .iter()
        .map(|inc| WreathZ2Increment {
            flips: inc.toggles.iter().map(|(s, _)| s[0]).collect(),
            dpos: inc.dpos[0],
        })
        .collect()
}

impl WreathZ2State {
    pub fn new() -> Self {
        WreathZ2State {
            pos: 0,
            m_n: 0,
            grid: BitGrid::new(),
            max_on: None,
            on_count: 0,
        }
    }

    #[inline]
    pub fn apply(&mut self, inc: &WreathZ2Increment) -> Result<(), GroupError> {
        for &off in &inc.flips {
            let site = self.pos.checked_add(off).ok_or(GroupError::Overflow)?;
            if self.grid.toggle(site) {
                self.on_count += 1;
                if self.max_on.map_or(true, |m| site > m) {
                    self.max_on = Some(site);
                }
            } else {
                self.on_count -= 1;
                if self.max_on == Some(site) {
                    self.max_on = if self.on_count == 0 {
                        None
                    } else {
                        self.grid.prev_set(site)
                    };
                }
            }
        }
        self.pos = self.pos.checked_add(inc.dpos).ok_or(GroupError::Overflow)?;
        if self.pos > self.m_n {
            self.m_n = self.pos;
        }
        Ok(())
    }

    #[inline]
    pub fn f_r(&self) -> i64 {
        self.max_on.map_or(0, |m| m.max(0))
    }

    pub fn element(&self, lamp: &LampGroup) -> GroupElement {
        let mut lamps = BTreeMap::new();
        if let Some(max) = self.max_on {
            // Scan downward collecting set bits.
            let mut cur = Some(max);
            while let Some(s) = cur {
                lamps.insert(vec![s], 1i64);
                cur = self.grid.prev_set(s);
            }
        }
        let _ = lamp;
        GroupElement::Wreath {
            lamps,
            pos: vec![self.pos],
        }
    }
}

// ---------------------------------------------------------------------------
// Wreath, general path
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct WreathGeneralState {
    pub pos: Vec<i64>,
    pub m_n: i64,
    pub lamps: BTreeMap<Vec<i64>, i64>,
    /// Multiset of first coordinates of lit sites.
    first_coords: BTreeMap<i64, u32>,
    lamp: LampGroup,
}

impl WreathGeneralState {
    pub fn new(lamp: LampGroup, d: usize) -> Self {
        WreathGeneralState {
            pos: vec![0; d],
            m_n: 0,
            lamps: BTreeMap::new(),
            first_coords: BTreeMap::new(),
            lamp,
        }
    }

    pub fn apply(&mut self, inc: &WreathIncrement) -> Result<(), GroupError> {
        for (off, val) in &inc.toggles {
            let mut site = Vec::with_capacity(off.len());
            for (o, p) in off.iter().zip(&self.pos) {
                site.push(o.checked_add(*p).ok_or(GroupError::Overflow)?);
            }
            let old = self.lamps.get(&site).copied().unwrap_or(0);
            let new = self.lamp.add(old, *val)?;
            if old == 0 && new != 0 {
                self.lamps.insert(site.clone(), new);
                *self.first_coords.entry(site[0]).or_insert(0) += 1;
            } else if old != 0 && new == 0 {
                self.lamps.remove(&site);
                let c = self.first_coords.get_mut(&site[0]).expect("tracked site");
                *c -= 1;
                if *c == 0 {
                    self.first_coords.remove(&site[0]);
                }
            } else if new != 0 {
                self.lamps.insert(site, new);
            }
        }
        for (p, &d) in self.pos.iter_mut().zip(&inc.dpos) {
            *p = p.checked_add(d).ok_or(GroupError::Overflow)?;
        }
        if self.pos[0] > self.m_n {
            self.m_n = self.pos[0];
        }
        Ok(())
    }

    pub fn f_r(&self) -> i64 {
        self.first_coords
            .keys()
            .next_back()
            .copied()
            .unwrap_or(0)
            .max(0)
    }

    pub fn element(&self) -> GroupElement {
        GroupElement::Wreath {
            lamps: self.lamps.clone(),
            pos: self.pos.clone(),
        }
    }
}

// ---------------------------------------------------------------------------
// Polycyclic
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Default, Serialize, PartialEq)]
pub struct IncrementLawStats {
    pub checks: u64,
    pub failures: u64,
    pub max_rel_err: f64,
    /// Largest |ln-domain drift| absorbed at an exact re-synchronization.
    pub max_resync_drift: f64,
    pub resyncs: u64,
}

#[derive(Clone, Debug)]
enum Buckets {
    /// m = 1 fast path: k scalar -> accumulated increment vector.
    M1(HashMap<i64, Vec<i64>>),
    Gen(HashMap<Vec<i64>, Vec<i64>>),
}

#[derive(Clone, Debug)]
pub struct PolyState {
    pub m: usize,
    pub d: usize,
    pub k: Vec<i64>,
    pub phi: f64,
    pub w: SignedLog,
    pub m_n: f64,
    buckets: Buckets,
    eig: EigenData,
    matrices: Vec<IntMatrix>,
    pub law: IncrementLawStats,
    /// Relative tolerance for the increment-law check.
    pub law_tol: f64,
}

impl PolyState {
    pub fn new(desc: &GroupDescriptor, eig: EigenData) -> Result<Self, WalkError> {
        let GroupDescriptor::Polycyclic { m, d, matrices } = desc else {
            return Err(WalkError::InvalidConfig("not a polycyclic descriptor".into()));
        };
        Ok(PolyState {
            m: *m,
            d: *d,
            k: vec![0; *m],
            phi: 0.0,
            w: SignedLog::ZERO,
            m_n: 0.0,
            buckets: if *m == 1 {
                Buckets::M1(HashMap::new())
            } else {
                Buckets::Gen(HashMap::new())
            },
            eig,
            matrices: matrices.clone(),
            law: IncrementLawStats::default(),
            law_tol: 1e-6,
        })
    }

    /// φ before the step is the value used both by the ledger (the increment
    /// enters at the current k) and by the increment law.
    #[inline]
    pub fn apply(&mut self, inc: &PolyIncrement, law_check: bool) -> Result<(), WalkError> {
        let phi_before = self.phi;
        if inc.has_y {
            if law_check {
                self.check_increment_law(inc, phi_before)?;
            }
            match &mut self.buckets {
                Buckets::M1(map) => {
                    let entry = map.entry(self.k[0]).or_insert_with(|| vec![0i64; self.d]);
                    for (e, &y) in entry.iter_mut().zip(&inc.y) {
                        *e += y;
                    }
                }
                Buckets::Gen(map) => {
                    let entry = map
                        .entry(self.k.clone())
                        .or_insert_with(|| vec![0i64; self.d]);
                    for (e, &y) in entry.iter_mut().zip(&inc.y) {
                        *e += y;
                    }
                }
            }
            if !inc.y_dot_v1.is_zero() {
                let delta = SignedLog {
                    sign: inc.y_dot_v1.sign,
                    ln_abs: inc.y_dot_v1.ln_abs + phi_before,
                };
                self.w = self.w.add(delta);
            }
        }
        for (kc, &dk) in self.k.iter_mut().zip(&inc.dk) {
            *kc = kc.checked_add(dk).ok_or(GroupError::Overflow)?;
        }
        self.phi = phi_of_k(&self.k, &self.eig);
        if self.phi > self.m_n {
            self.m_n = self.phi;
        }
        Ok(())
    }

    /// Exact X = Σ_k Ψ_k(c_k) from the increment ledger.
    pub fn materialize(&self) -> Vec<BigInt> {
        let entries: Vec<(Vec<i64>, Vec<BigInt>)> = match &self.buckets {
            Buckets::M1(map) => {
                let mut v: Vec<(Vec<i64>, Vec<BigInt>)> = map
                    .iter()
                    .map(|(&k, c)| (vec![k], c.iter().map(|&x| BigInt::from(x)).collect()))
                    .collect();
                v.sort_by(|a, b| a.0.cmp(&b.0));
                v
            }
            Buckets::Gen(map) => {
                let mut v: Vec<(Vec<i64>, Vec<BigInt>)> = map
                    .iter()
                    .map(|(k, c)| (k.clone(), c.iter().map(|&x| BigInt::from(x)).collect()))
                    .collect();
                v.sort_by(|a, b| a.0.cmp(&b.0));
                v
            }
        };
        if entries.is_empty() {
            return vec![BigInt::zero(); self.d];
        }
        horner_eval(&self.matrices, 0, &entries)
    }

    /// Re-synchronize the float (x, v1) from the exact ledger; records the
    /// drift it absorbed.
    pub fn resync_w(&mut self) {
        let x = self.materialize();
        let exact = signed_log_dot(&x, &self.eig.v1);
        let drift = match (self.w.is_zero(), exact.is_zero()) {
            (true, true) => 0.0,
            (false, false) => (self.w.ln_abs - exact.ln_abs).abs(),
            _ => f64::INFINITY,
        };
        if drift.is_finite() && drift > self.law.max_resync_drift {
            self.law.max_resync_drift = drift;
        }
        self.law.resyncs += 1;
        self.w = exact;
    }

    /// Verify |Δ(x, v1)| = |(y, v1)|·exp(φ before) for this step, with the
    /// left side evaluated exactly: Δx = Ψ_k(y) over the integers.
    fn check_increment_law(&mut self, inc: &PolyIncrement, phi_before: f64) -> Result<(), WalkError> {
        if inc.y_dot_v1.is_zero() {
            return Ok(());
        }
        let y_big: Vec<BigInt> = inc.y.iter().map(|&v| BigInt::from(v)).collect();
        let mut delta = y_big;
        for (i, &ki) in self.k.iter().enumerate() {
            if ki != 0 {
                let p = self.matrices[i]
                    .to_big()
                    .pow(ki)
                    .map_err(WalkError::Group)?;
                delta = p.matvec(&delta);
            }
        }
        let exact = signed_log_dot(&delta, &self.eig.v1);
        let predicted_ln = inc.y_dot_v1.ln_abs + phi_before;
        self.law.checks += 1;
        if exact.is_zero() {
            self.law.failures += 1;
            self.law.max_rel_err = f64::INFINITY;
            return Ok(());
        }
        let rel = ((exact.ln_abs - predicted_ln).exp() - 1.0).abs();
        if rel > self.law.max_rel_err {
            self.law.max_rel_err = rel;
        }
        if rel > self.law_tol || exact.sign != inc.y_dot_v1.sign {
            self.law.failures += 1;
        }
        Ok(())
    }

    pub fn element(&self) -> GroupElement {
        GroupElement::Polycyclic {
            k: self.k.clone(),
            x: self.materialize(),
        }
    }
}

/// Evaluate Σ over ledger entries of Ψ_k(c) by nested Horner along each k
/// coordinate. `entries` must be sorted by k and non-empty; all entries at
/// `level` and beyond share the k-prefix below `level`.
fn horner_eval(matrices: &[IntMatrix], level: usize, entries: &[(Vec<i64>, Vec<BigInt>)]) -> Vec<BigInt> {
    let d = matrices[0].dim();
    if level == matrices.len() {
        // Fully grouped: a single entry remains.
        debug_assert_eq!(entries.len(), 1);
        return entries[0].1.clone();
    }
    // Group runs sharing k[level], recurse, then fold with Horner.
    let mut groups: Vec<(i64, Vec<BigInt>)> = Vec::new();
    let mut start = 0usize;
    while start < entries.len() {
        let kv = entries[start].0[level];
        let mut end = start + 1;
        while end < entries.len() && entries[end].0[level] == kv {
            end += 1;
        }
        let sub = horner_eval(matrices, level + 1, &entries[start..end]);
        groups.push((kv, sub));
        start = end;
    }
    // groups sorted ascending by k; fold from the top down:
    // H = A^{k_top - k_next}(H) + s_next, finally X = A^{k_min}(H).
    let a = &matrices[level];
    let mut iter = groups.into_iter().rev();
    let (mut cur_k, mut acc) = iter.next().expect("non-empty");
    for (kv, s) in iter {
        for _ in 0..(cur_k - kv) {
            acc = small_matvec(a, &acc);
        }
        for (accd, sd) in acc.iter_mut().zip(s) {
            *accd += sd;
        }
        cur_k = kv;
    }
    let base = a
        .to_big()
        .pow(cur_k)
        .expect("action matrices are unimodular");
    let mut out = base.matvec(&acc);
    debug_assert_eq!(out.len(), d);
    if out.len() != d {
        out.resize(d, BigInt::zero());
    }
    out
}

/// A·v for a small integer matrix and a big vector.
#[inline]
fn small_matvec(a: &IntMatrix, v: &[BigInt]) -> Vec<BigInt> {
    let n = a.dim();
    (0..n)
        .map(|i| {
            let mut acc = BigInt::zero();
            for (j, vj) in v.iter().enumerate() {
                let c = a.entry(i, j);
                if c != 0 && !vj.is_zero() {
                    acc += vj * c;
                }
            }
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::{sol, sol_m2};
    use crate::eigen::compute_eigendata;
    use crate::element::{apply_action, identity, multiply};

    #[test]
    fn bitgrid_toggle_and_scan() {
        let mut g = BitGrid::new();
        assert!(g.toggle(5));
        assert!(g.toggle(-1000));
        assert!(g.toggle(70_000));
        assert_eq!(g.prev_set(70_000), Some(5));
        assert_eq!(g.prev_set(5), Some(-1000));
        assert_eq!(g.prev_set(-1000), None);
        assert!(!g.toggle(5)); // off again
        assert_eq!(g.prev_set(70_000), Some(-1000));
        assert_eq!(g.prev_set(100_000), Some(70_000));
    }

    #[test]
    fn wreath_z2_state_tracks_fr() {
        let mut st = WreathZ2State::new();
        // Flip lamp at current position (0), move +1.
        let inc = WreathZ2Increment { flips: vec![0], dpos: 1 };
        st.apply(&inc).unwrap();
        assert_eq!(st.pos, 1);
        assert_eq!(st.f_r(), 0); // lamp at 0
        assert_eq!(st.m_n, 1);
        // Flip lamp at current position (1): F_R = 1.
        st.apply(&WreathZ2Increment { flips: vec![0], dpos: 0 }).unwrap();
        assert_eq!(st.f_r(), 1);
        // Flip it back off: F_R falls back to 0.
        st.apply(&WreathZ2Increment { flips: vec![0], dpos: 0 }).unwrap();
        assert_eq!(st.f_r(), 0);
        assert_eq!(st.on_count, 1);
    }

    #[test]
    fn general_wreath_state_matches_element_ops() {
        use crate::descriptor::lamplighter;
        use crate::measure::lamplighter_mu;
        use crate::rng::Rng;

        let desc = lamplighter(3, 2);
        let mu = lamplighter_mu(&desc).unwrap();
        let incs = match decompose_increments(&desc, mu.atoms(), None).unwrap() {
            Increments::Wreath(v) => v,
            _ => unreachable!(),
        };
        let mut st = WreathGeneralState::new(LampGroup::CyclicMod { q: 3 }, 2);
        let mut elem = identity(&desc);
        let mut rng = Rng::from_seed(11);
        for _ in 0..500 {
            let i = mu.sampler().sample(&mut rng);
            st.apply(&incs[i]).unwrap();
            elem = multiply(&desc, &elem, &mu.atoms()[i].0).unwrap();
        }
        assert_eq!(st.element(), elem);
        assert_eq!(st.f_r(), crate::observe::f_r(&elem).unwrap());
    }

    #[test]
    fn poly_state_ledger_matches_element_ops() {
        let desc = sol();
        let eig = compute_eigendata(&desc).unwrap();
        let mu = crate::measure::polycyclic_mu(&desc).unwrap();
        let incs = match decompose_increments(&desc, mu.atoms(), Some(&eig)).unwrap() {
            Increments::Poly(v) => v,
            _ => unreachable!(),
        };
        let mut st = PolyState::new(&desc, eig).unwrap();
        let mut elem = identity(&desc);
        let mut rng = crate::rng::Rng::from_seed(3);
        for _ in 0..400 {
            let i = mu.sampler().sample(&mut rng);
            st.apply(&incs[i], false).unwrap();
            elem = multiply(&desc, &elem, &mu.atoms()[i].0).unwrap();
        }
        assert_eq!(st.element(), elem);
    }

    #[test]
    fn poly_state_m2_ledger() {
        let desc = sol_m2();
        let eig = compute_eigendata(&desc).unwrap();
        let mu = crate::measure::polycyclic_mu(&desc).unwrap();
        let incs = match decompose_increments(&desc, mu.atoms(), Some(&eig)).unwrap() {
            Increments::Poly(v) => v,
            _ => unreachable!(),
        };
        let mut st = PolyState::new(&desc, eig).unwrap();
        let mut elem = identity(&desc);
        let mut rng = crate::rng::Rng::from_seed(17);
        for _ in 0..200 {
            let i = mu.sampler().sample(&mut rng);
            st.apply(&incs[i], false).unwrap();
            elem = multiply(&desc, &elem, &mu.atoms()[i].0).unwrap();
        }
        assert_eq!(st.element(), elem);
    }

    #[test]
    fn resync_tracks_float_w() {
        let desc = sol();
        let eig = compute_eigendata(&desc).unwrap();
        let mu = crate::measure::polycyclic_mu(&desc).unwrap();
        let incs = match decompose_increments(&desc, mu.atoms(), Some(&eig)).unwrap() {
            Increments::Poly(v) => v,
            _ => unreachable!(),
        };
        let mut st = PolyState::new(&desc, eig).unwrap();
        let mut rng = crate::rng::Rng::from_seed(23);
        for step in 1..=2000u64 {
            let i = mu.sampler().sample(&mut rng);
            st.apply(&incs[i], false).unwrap();
            if step % 500 == 0 {
                st.resync_w();
            }
        }
        assert_eq!(st.law.resyncs, 4);
        assert!(
            st.law.max_resync_drift < 1e-9,
            "drift {}",
            st.law.max_resync_drift
        );
    }

    #[test]
    fn increment_law_holds_on_every_step() {
        let desc = sol();
        let eig = compute_eigendata(&desc).unwrap();
        let mu = crate::measure::polycyclic_mu(&desc).unwrap();
        let incs = match decompose_increments(&desc, mu.atoms(), Some(&eig)).unwrap() {
            Increments::Poly(v) => v,
            _ => unreachable!(),
        };
        let mut st = PolyState::new(&desc, eig).unwrap();
        let mut rng = crate::rng::Rng::from_seed(5);
        for _ in 0..300 {
            let i = mu.sampler().sample(&mut rng);
            st.apply(&incs[i], true).unwrap();
        }
        assert!(st.law.checks > 100);
        assert_eq!(st.law.failures, 0);
        assert!(st.law.max_rel_err <= 1e-6, "err {}", st.law.max_rel_err);
    }

    #[test]
    fn materialize_agrees_with_apply_action() {
        // Single increment at a known k: X = Ψ_k(y).
        let desc = sol();
        let eig = compute_eigendata(&desc).unwrap();
        let mut st = PolyState::new(&desc, eig).unwrap();
        // Walk k to 3 with pure-k increments.
        let pure = PolyIncrement {
            dk: vec![1],
            y: vec![0, 0],
            has_y: false,
            y_dot_v1: SignedLog::ZERO,
        };
        for _ in 0..3 {
            st.apply(&pure, false).unwrap();
        }
        let with_y = PolyIncrement {
            dk: vec![-1],
            y: vec![1, 0],
            has_y: true,
            y_dot_v1: SignedLog::from_f64(st.eig.v1[0]),
        };
        st.apply(&with_y, false).unwrap();
        let expect = apply_action(&desc, &[3], &[BigInt::from(1), BigInt::from(0)]).unwrap();
        assert_eq!(st.materialize(), expect);
        assert_eq!(st.k, vec![2]);
    }
}
