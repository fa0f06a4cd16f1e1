//! Deterministic, parallel simulation of measure-driven walks.
//!
//! A trajectory is ξ_n = ξ_{n−1}·g_n with g_n i.i.d. from the measure
//! (right multiplication, so lamp updates stay local to the walker). The
//! ensemble report is a pure function of the configuration: per-trajectory
//! RNG streams derive from (master_seed, index) alone, trajectories are
//! aggregated in index order with integer sums and pairwise float
//! summation, and thread count only changes how work is scheduled.

pub mod detect;
pub mod series;
pub mod state;

use rayon::prelude::*;
use serde::Serialize;

use crate::descriptor::{GroupDescriptor, LampGroup};
use crate::eigen::{compute_eigendata, EigenData};
use crate::element::{conforms, GroupElement};
use crate::encode::key_hex;
use crate::error::WalkError;
use crate::measure::Measure;
use crate::observe::{SetPredicate, SignedLog};
use crate::rng::Rng;

use detect::{AkDetector, AkOutcome, UnDetector, UnThreshold};
use series::{snapshot_stride, PairwiseSum, SeriesAccumulator, SeriesMean, SeriesSnapshot};
use state::{
    decompose_increments, lower_wreath_z2, IncrementLawStats, Increments, LatticeState, PolyState,
    WreathGeneralState, WreathZ2State,
};

/// Largest final M_n − F_R gap tracked individually in the tail histogram.
pub const MAX_GAP_TRACKED: usize = 64;

const BATCH: u64 = 64;

#[derive(Clone, Debug)]
pub enum ObserverSpec {
    /// Per-step membership counting for a test set.
    SetVisits { name: String, predicate: SetPredicate },
    /// U_n events on the snapshot schedule.
    UnEvents { name: String, threshold: UnThreshold },
    /// A_k events on the schedule k = 4^j, j = 1..=max_level.
    AkEvents { jump: i64, max_level: u32 },
    /// Visit counting for explicit group elements.
    GreenTargets { name: String, targets: Vec<GroupElement> },
    /// Final M_n − F_R tail histogram (wreath only).
    MaxGapFinal,
    /// Exact increment-law checks at the re-synchronization cadence
    /// (polycyclic only).
    IncrementLaw,
}

#[derive(Clone, Debug)]
pub struct WalkConfig {
    pub descriptor: GroupDescriptor,
    pub measure: Measure,
    pub n_steps: u64,
    pub n_trajectories: u64,
    pub master_seed: u64,
    pub window_count: usize,
    /// Cumulative-visit horizons (strictly increasing, each <= n_steps).
    pub horizons: Vec<u64>,
    pub observers: Vec<ObserverSpec>,
    /// Decimated snapshot budget per trajectory.
    pub snapshot_points: u64,
    /// Cadence of exact (x, v1) re-synchronization for polycyclic walks.
    pub exact_check_every: u64,
}

impl WalkConfig {
    pub fn new(descriptor: GroupDescriptor, measure: Measure, n_steps: u64, n_trajectories: u64, master_seed: u64) -> Self {
        WalkConfig {
            descriptor,
            measure,
            n_steps,
            n_trajectories,
            master_seed,
            window_count: 20,
            horizons: Vec::new(),
            observers: Vec::new(),
            snapshot_points: 1000,
            exact_check_every: 10_000,
        }
    }

    pub fn block(&self) -> u64 {
        (self.n_steps / self.window_count.max(1) as u64).max(1)
    }

    pub fn validate(&self) -> Result<(), WalkError> {
        if self.measure.descriptor() != &self.descriptor {
            return Err(WalkError::InvalidConfig(
                "measure descriptor differs from walk descriptor".into(),
            ));
        }
        if self.measure.support() == 0 {
            return Err(WalkError::InvalidConfig("measure has empty support".into()));
        }
        if self.window_count < 2 {
            return Err(WalkError::InvalidConfig("window_count must be >= 2".into()));
        }
        if self.n_trajectories < 1 {
            return Err(WalkError::InvalidConfig("n_trajectories must be >= 1".into()));
        }
        for pair in self.horizons.windows(2) {
            if pair[0] >= pair[1] {
                return Err(WalkError::InvalidConfig(
                    "horizons must be strictly increasing".into(),
                ));
            }
        }
        if let Some(&last) = self.horizons.last() {
            if last > self.n_steps {
                return Err(WalkError::InvalidConfig(
                    "horizons must not exceed n_steps".into(),
                ));
            }
        }
        let family = self.descriptor.family_name();
        for obs in &self.observers {
            match obs {
                ObserverSpec::SetVisits { predicate, .. } => {
                    if predicate.family_name() != family {
                        return Err(WalkError::ObserverMismatch(format!(
                            "{} set predicate on {family} walk",
                            predicate.family_name()
                        )));
                    }
                }
                ObserverSpec::UnEvents { threshold, .. } => {
                    let need = match threshold {
                        UnThreshold::Wreath { .. } => "wreath",
                        UnThreshold::Polycyclic { .. } => "polycyclic",
                    };
                    if need != family {
                        return Err(WalkError::ObserverMismatch(format!(
                            "{need} U_n detector on {family} walk"
                        )));
                    }
                }
                ObserverSpec::AkEvents { jump, .. } => {
                    if family != "wreath" {
                        return Err(WalkError::ObserverMismatch(format!(
                            "A_k detector on {family} walk"
                        )));
                    }
                    if *jump < 1 {
                        return Err(WalkError::InvalidConfig("A_k jump must be >= 1".into()));
                    }
                }
                ObserverSpec::GreenTargets { targets, .. } => {
                    for t in targets {
                        conforms(&self.descriptor, t).map_err(WalkError::Group)?;
                    }
                }
                ObserverSpec::MaxGapFinal => {
                    if family != "wreath" {
                        return Err(WalkError::ObserverMismatch(format!(
                            "max-gap histogram on {family} walk"
                        )));
                    }
                }
                ObserverSpec::IncrementLaw => {
                    if family != "polycyclic" {
                        return Err(WalkError::ObserverMismatch(format!(
                            "increment-law checks on {family} walk"
                        )));
                    }
                    if self.exact_check_every == 0 {
                        return Err(WalkError::InvalidConfig(
                            "exact_check_every must be >= 1 for increment-law checks".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Per-trajectory output
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct SetVisitStats {
    pub name: String,
    pub per_window: Vec<u64>,
    pub total: u64,
    pub second_half: u64,
    pub at_horizon: Vec<u64>,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct UnStats {
    pub name: String,
    pub per_window_true: Vec<u64>,
    pub last_true: Option<u64>,
    pub any_second_half: bool,
    pub true_count: u64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct TargetStats {
    pub name: String,
    pub visits: u64,
    pub at_horizon: Vec<u64>,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct TrajectoryStats {
    pub index: u64,
    /// pos_1 (lattice/wreath) or φ (polycyclic) after the last step.
    pub final_primary: f64,
    /// Running max M_n at the horizon.
    pub final_m: f64,
    /// M_n − F_R at the horizon (wreath only).
    pub final_gap: Option<i64>,
    pub sets: Vec<SetVisitStats>,
    pub uns: Vec<UnStats>,
    pub ak: Vec<AkOutcome>,
    pub targets: Vec<TargetStats>,
    pub series: SeriesSnapshot,
    pub law: Option<IncrementLawStats>,
}

// ---------------------------------------------------------------------------
// Ensemble aggregates
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct SetAggregate {
    pub name: String,
    pub per_window: Vec<u64>,
    pub total_visits: u64,
    pub total_sumsq: u128,
    pub at_horizon: Vec<u64>,
    pub at_horizon_sumsq: Vec<u128>,
    /// Trajectories with zero visits in the final half of the windows.
    pub zero_second_half: u64,
    pub zero_total: u64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct UnAggregate {
    pub name: String,
    pub per_window_true: Vec<u64>,
    pub trajectories_with_any: u64,
    pub any_second_half: u64,
    /// Histogram over windows of each trajectory's last U_n time.
    pub last_window_hist: Vec<u64>,
    pub never: u64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct AkAggregate {
    pub level: u32,
    pub k: u64,
    pub t_k: u64,
    /// Trajectories that reached k^{1/2} within the horizon.
    pub reached: u64,
    /// Of those, trajectories whose deadline n_k + t_k fell inside the horizon.
    pub resolved: u64,
    pub succeeded: u64,
    pub sum_n_k: u64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct TargetAggregate {
    pub name: String,
    pub key: String,
    pub total_visits: u64,
    pub total_sumsq: u128,
    pub at_horizon: Vec<u64>,
    pub at_horizon_sumsq: Vec<u128>,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct EnsembleReport {
    pub n_steps: u64,
    pub n_trajectories: u64,
    pub master_seed: u64,
    pub window_count: usize,
    pub block: u64,
    pub snapshot_stride: u64,
    pub horizons: Vec<u64>,
    pub sets: Vec<SetAggregate>,
    pub uns: Vec<UnAggregate>,
    pub ak: Vec<AkAggregate>,
    pub targets: Vec<TargetAggregate>,
    /// max_gap_tail[α] = number of trajectories with final M_n − F_R >= α.
    pub max_gap_tail: Option<Vec<u64>>,
    pub increment_law: Option<IncrementLawStats>,
    pub final_m_mean: f64,
    pub final_m_max: f64,
    pub series: SeriesMean,
}

/// Windowed recurrence indicator for a set observer.
#[derive(Clone, Debug, Serialize)]
pub struct TailStatistic {
    pub name: String,
    pub per_window_total: Vec<u64>,
    pub first_half_visits: u64,
    pub second_half_visits: u64,
    pub first_half_mean_per_window: f64,
    pub second_half_mean_per_window: f64,
    /// second-half mean / first-half mean; 0 with `zero_visits` when the
    /// set was never visited, +inf when only the second half was.
    pub ratio: f64,
    pub zero_visits: bool,
}

/// Second-half/first-half windowed visit ratio.
pub fn tail_statistic(report: &EnsembleReport, set_name: &str) -> Option<TailStatistic> {
    let agg = report.sets.iter().find(|s| s.name == set_name)?;
    let half = report.window_count / 2;
    let first: u64 = agg.per_window[..half].iter().sum();
    let second: u64 = agg.per_window[half..].iter().sum();
    let first_mean = first as f64 / half.max(1) as f64;
    let second_mean = second as f64 / (report.window_count - half).max(1) as f64;
    let (ratio, zero) = if first == 0 && second == 0 {
        (0.0, true)
    } else if first == 0 {
        (f64::INFINITY, false)
    } else {
        (second_mean / first_mean, false)
    };
    Some(TailStatistic {
        name: set_name.to_string(),
        per_window_total: agg.per_window.clone(),
        first_half_visits: first,
        second_half_visits: second,
        first_half_mean_per_window: first_mean,
        second_half_mean_per_window: second_mean,
        ratio,
        zero_visits: zero,
    })
}

// ---------------------------------------------------------------------------
// Prepared context
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
enum SetKind {
    Wreath { coef: f64 },
    Poly { big_c: f64 },
}

#[derive(Clone, Debug)]
enum TargetMatcher {
    Lattice(Vec<i64>),
    WreathZ2 { pos: i64, sites: Vec<i64> },
    WreathGen {
        pos: Vec<i64>,
        lamps: std::collections::BTreeMap<Vec<i64>, i64>,
    },
    Poly {
        k: Vec<i64>,
        x: Vec<num_bigint::BigInt>,
    },
}

#[derive(Clone, Debug)]
struct PreparedSet {
    name: String,
    kind: SetKind,
}

#[derive(Clone, Debug)]
struct PreparedTarget {
    name: String,
    key: String,
    matcher: TargetMatcher,
}

pub struct EnsembleContext {
    eig: Option<EigenData>,
    incs: Increments,
    z2_incs: Option<Vec<state::WreathZ2Increment>>,
    sets: Vec<PreparedSet>,
    uns: Vec<(String, UnThreshold)>,
    ak_cfg: Option<(i64, u32)>,
    targets: Vec<PreparedTarget>,
    law_enabled: bool,
    max_gap: bool,
    stride: u64,
    block: u64,
}

impl EnsembleContext {
    pub fn new(cfg: &WalkConfig) -> Result<Self, WalkError> {
        cfg.validate()?;
        let eig = match &cfg.descriptor {
            GroupDescriptor::Polycyclic { .. } => Some(compute_eigendata(&cfg.descriptor)?),
            _ => None,
        };
        let incs = decompose_increments(&cfg.descriptor, cfg.measure.atoms(), eig.as_ref())?;
        let z2_incs = match (&cfg.descriptor, &incs) {
            (GroupDescriptor::Wreath { lamp: LampGroup::CyclicMod { q: 2 }, d: 1 }, Increments::Wreath(w)) => {
                Some(lower_wreath_z2(w))
            }
            _ => None,
        };
        let mut sets = Vec::new();
        let mut uns = Vec::new();
        let mut ak_cfg = None;
        let mut targets = Vec::new();
        let mut law_enabled = false;
        let mut max_gap = false;
        for obs in &cfg.observers {
            match obs {
                ObserverSpec::SetVisits { name, predicate } => {
                    let kind = match predicate {
                        SetPredicate::WreathS { epsilon } => SetKind::Wreath {
                            coef: (2.0 + 5.0 * epsilon) / std::f64::consts::LN_2,
                        },
                        SetPredicate::PolycyclicS { big_c, .. } => SetKind::Poly { big_c: *big_c },
                    };
                    sets.push(PreparedSet {
                        name: name.clone(),
                        kind,
                    });
                }
                ObserverSpec::UnEvents { name, threshold } => uns.push((name.clone(), *threshold)),
                ObserverSpec::AkEvents { jump, max_level } => ak_cfg = Some((*jump, *max_level)),
                ObserverSpec::GreenTargets { name, targets: elems } => {
                    for (i, g) in elems.iter().enumerate() {
                        let key = key_hex(&cfg.descriptor, g).map_err(WalkError::Group)?;
                        let matcher = match (g, &cfg.descriptor) {
                            (GroupElement::Lattice { x }, _) => TargetMatcher::Lattice(x.clone()),
                            (
                                GroupElement::Wreath { lamps, pos },
                                GroupDescriptor::Wreath { lamp: LampGroup::CyclicMod { q: 2 }, d: 1 },
                            ) => TargetMatcher::WreathZ2 {
                                pos: pos[0],
                                sites: lamps.keys().map(|s| s[0]).collect(),
                            },
                            (GroupElement::Wreath { lamps, pos }, _) => TargetMatcher::WreathGen {
                                pos: pos.clone(),
                                lamps: lamps.clone(),
                            },
                            (GroupElement::Polycyclic { k, x }, _) => TargetMatcher::Poly {
                                k: k.clone(),
                                x: x.clone(),
                            },
                        };
                        targets.push(PreparedTarget {
                            name: if elems.len() == 1 {
                                name.clone()
                            } else {
                                format!("{name}[{i}]")
                            },
                            key,
                            matcher,
                        });
                    }
                }
                ObserverSpec::MaxGapFinal => max_gap = true,
                ObserverSpec::IncrementLaw => law_enabled = true,
            }
        }
        Ok(EnsembleContext {
            eig,
            incs,
            z2_incs,
            sets,
            uns,
            ak_cfg,
            targets,
            law_enabled,
            max_gap,
            stride: snapshot_stride(cfg.n_steps, cfg.snapshot_points),
            block: cfg.block(),
        })
    }
}

// ---------------------------------------------------------------------------
// Observer bank (per trajectory)
// ---------------------------------------------------------------------------

struct Bank<'c> {
    ctx: &'c EnsembleContext,
    n_steps: u64,
    window_count: usize,
    half: usize,
    horizons: &'c [u64],
    hp: usize,
    set_windows: Vec<Vec<u64>>,
    set_totals: Vec<u64>,
    set_second: Vec<u64>,
    set_horizon: Vec<Vec<u64>>,
    target_visits: Vec<u64>,
    target_horizon: Vec<Vec<u64>>,
    uns: Vec<UnDetector>,
    ak: Option<AkDetector>,
    series: SeriesSnapshot,
}

impl<'c> Bank<'c> {
    fn new(cfg: &WalkConfig, ctx: &'c EnsembleContext) -> Bank<'c> {
        let ns = ctx.sets.len();
        let points = (cfg.n_steps / ctx.stride + 2) as usize;
        Bank {
            ctx,
            n_steps: cfg.n_steps,
            window_count: cfg.window_count,
            half: cfg.window_count / 2,
            horizons: &cfg.horizons,
            hp: 0,
            set_windows: vec![vec![0u64; cfg.window_count]; ns],
            set_totals: vec![0; ns],
            set_second: vec![0; ns],
            set_horizon: vec![Vec::with_capacity(cfg.horizons.len()); ns],
            target_visits: vec![0; ctx.targets.len()],
            target_horizon: vec![Vec::with_capacity(cfg.horizons.len()); ctx.targets.len()],
            uns: ctx
                .uns
                .iter()
                .map(|(_, thr)| UnDetector::new(*thr, cfg.window_count, cfg.n_steps))
                .collect(),
            ak: ctx.ak_cfg.map(|(jump, lv)| AkDetector::new(jump, lv)),
            series: SeriesSnapshot::with_capacity(points),
        }
    }

    #[inline]
    fn window_of(&self, t: u64) -> usize {
        ((t / self.ctx.block) as usize).min(self.window_count - 1)
    }

    #[inline]
    fn is_tick(&self, t: u64) -> bool {
        t % self.ctx.stride == 0 || t == self.n_steps
    }

    /// Horizon bookkeeping; call once per time step after visit counting.
    #[inline]
    fn note_horizons(&mut self, t: u64) {
        while self.hp < self.horizons.len() && self.horizons[self.hp] == t {
            for (i, h) in self.set_horizon.iter_mut().enumerate() {
                h.push(self.set_totals[i]);
            }
            for (i, h) in self.target_horizon.iter_mut().enumerate() {
                h.push(self.target_visits[i]);
            }
            self.hp += 1;
        }
    }

    #[inline]
    fn count_set(&mut self, idx: usize, t: u64, window: usize) {
        self.set_windows[idx][window] += 1;
        self.set_totals[idx] += 1;
        if window >= self.half {
            self.set_second[idx] += 1;
        }
        let _ = t;
    }

    /// Wreath observation at time t (state already advanced). Target
    /// matching happens in the family-specific runners, which can see the
    /// full lamp state.
    #[inline]
    fn observe_wreath(&mut self, t: u64, pos1: i64, f_r: i64, m_n: i64) {
        let window = self.window_of(t);
        if t >= 1 {
            if let Some(ak) = &mut self.ak {
                ak.step(t, pos1);
            }
        }
        if pos1 >= 1 && !self.ctx.sets.is_empty() {
            let gap = (pos1 - f_r) as f64;
            let ln_pos = (pos1 as f64).ln();
            for i in 0..self.ctx.sets.len() {
                let member = match self.ctx.sets[i].kind {
                    SetKind::Wreath { coef } => gap >= coef * ln_pos,
                    SetKind::Poly { .. } => unreachable!("validated"),
                };
                if member {
                    self.count_set(i, t, window);
                }
            }
        }
        if self.is_tick(t) {
            for un in &mut self.uns {
                un.tick(t, window, m_n as f64, f_r as f64);
            }
            self.series.push(t, pos1 as f64, f_r as f64, m_n as f64);
        }
        self.note_horizons(t);
    }

    /// Polycyclic observation at time t.
    #[inline]
    fn observe_poly(&mut self, t: u64, phi: f64, w: SignedLog, m_n: f64) {
        let window = self.window_of(t);
        if phi > 1.0 && !self.ctx.sets.is_empty() {
            let ln_phi = phi.ln();
            for i in 0..self.ctx.sets.len() {
                let member = match self.ctx.sets[i].kind {
                    SetKind::Poly { big_c } => w.is_zero() || phi - w.ln_abs >= big_c * ln_phi,
                    SetKind::Wreath { .. } => unreachable!("validated"),
                };
                if member {
                    self.count_set(i, t, window);
                }
            }
        }
        if self.is_tick(t) {
            for un in &mut self.uns {
                un.tick(t, window, m_n, w.ln_abs);
            }
            self.series.push(t, phi, w.ln_abs, m_n);
        }
        self.note_horizons(t);
    }

    /// Lattice observation at time t.
    #[inline]
    fn observe_lattice(&mut self, t: u64, pos: &[i64], m_n: i64) {
        for (i, tgt) in self.ctx.targets.iter().enumerate() {
            if let TargetMatcher::Lattice(x) = &tgt.matcher {
                if pos == &x[..] {
                    self.target_visits[i] += 1;
                }
            }
        }
        if self.is_tick(t) {
            self.series.push(t, pos[0] as f64, 0.0, m_n as f64);
        }
        self.note_horizons(t);
    }

    fn finish(
        self,
        cfg: &WalkConfig,
        index: u64,
        final_primary: f64,
        final_m: f64,
        final_gap: Option<i64>,
        law: Option<IncrementLawStats>,
    ) -> TrajectoryStats {
        let sets = self
            .ctx
            .sets
            .iter()
            .enumerate()
            .map(|(i, s)| SetVisitStats {
                name: s.name.clone(),
                per_window: self.set_windows[i].clone(),
                total: self.set_totals[i],
                second_half: self.set_second[i],
                at_horizon: self.set_horizon[i].clone(),
            })
            .collect();
        let uns = self
            .ctx
            .uns
            .iter()
            .zip(&self.uns)
            .map(|((name, _), det)| UnStats {
                name: name.clone(),
                per_window_true: det.per_window_true.clone(),
                last_true: det.last_true,
                any_second_half: det.any_second_half,
                true_count: det.true_count,
            })
            .collect();
        let targets = self
            .ctx
            .targets
            .iter()
            .enumerate()
            .map(|(i, t)| TargetStats {
                name: t.name.clone(),
                visits: self.target_visits[i],
                at_horizon: self.target_horizon[i].clone(),
            })
            .collect();
        let _ = cfg;
        TrajectoryStats {
            index,
            final_primary,
            final_m,
            final_gap,
            sets,
            uns,
            ak: self.ak.map(|a| a.finish()).unwrap_or_default(),
            targets,
            series: self.series,
            law,
        }
    }
}

// ---------------------------------------------------------------------------
// Trajectory runners
// ---------------------------------------------------------------------------

fn match_targets_z2(bank: &mut Bank, st: &WreathZ2State) {
    for i in 0..bank.ctx.targets.len() {
        if let TargetMatcher::WreathZ2 { pos, sites } = &bank.ctx.targets[i].matcher {
            if st.pos == *pos
                && st.on_count == sites.len()
                && sites.iter().all(|&s| st.is_on(s))
            {
                bank.target_visits[i] += 1;
            }
        }
    }
}

fn run_wreath_z2(cfg: &WalkConfig, ctx: &EnsembleContext, index: u64) -> Result<TrajectoryStats, WalkError> {
    let incs = ctx.z2_incs.as_ref().expect("fast path prepared");
    let sampler = cfg.measure.sampler();
    let mut rng = Rng::for_trajectory(cfg.master_seed, index);
    let mut st = WreathZ2State::new();
    let mut bank = Bank::new(cfg, ctx);
    let has_targets = !ctx.targets.is_empty();
    if has_targets {
        match_targets_z2(&mut bank, &st);
    }
    bank.observe_wreath(0, st.pos, st.f_r(), st.m_n);
    for t in 1..=cfg.n_steps {
        let a = sampler.sample(&mut rng);
        st.apply(&incs[a]).map_err(WalkError::Group)?;
        if has_targets {
            match_targets_z2(&mut bank, &st);
        }
        bank.observe_wreath(t, st.pos, st.f_r(), st.m_n);
    }
    let gap = st.m_n - st.f_r();
    Ok(bank.finish(cfg, index, st.pos as f64, st.m_n as f64, Some(gap), None))
}

fn run_wreath_general(cfg: &WalkConfig, ctx: &EnsembleContext, index: u64) -> Result<TrajectoryStats, WalkError> {
    let Increments::Wreath(incs) = &ctx.incs else {
        return Err(WalkError::InvalidConfig("increments mismatch".into()));
    };
    let GroupDescriptor::Wreath { lamp, d } = &cfg.descriptor else {
        return Err(WalkError::InvalidConfig("descriptor mismatch".into()));
    };
    let sampler = cfg.measure.sampler();
    let mut rng = Rng::for_trajectory(cfg.master_seed, index);
    let mut st = WreathGeneralState::new(*lamp, *d);
    let mut bank = Bank::new(cfg, ctx);
    observe_wreath_general(&mut bank, 0, &st);
    for t in 1..=cfg.n_steps {
        let a = sampler.sample(&mut rng);
        st.apply(&incs[a]).map_err(WalkError::Group)?;
        observe_wreath_general(&mut bank, t, &st);
    }
    let gap = st.m_n - st.f_r();
    Ok(bank.finish(cfg, index, st.pos[0] as f64, st.m_n as f64, Some(gap), None))
}

fn observe_wreath_general(bank: &mut Bank, t: u64, st: &WreathGeneralState) {
    // Full matching for general wreath targets.
    for i in 0..bank.ctx.targets.len() {
        if let TargetMatcher::WreathGen { pos, lamps } = &bank.ctx.targets[i].matcher {
            if &st.pos == pos && &st.lamps == lamps {
                bank.target_visits[i] += 1;
            }
        }
    }
    bank.observe_wreath(t, st.pos[0], st.f_r(), st.m_n);
}

fn run_lattice(cfg: &WalkConfig, ctx: &EnsembleContext, index: u64) -> Result<TrajectoryStats, WalkError> {
    let Increments::Lattice(incs) = &ctx.incs else {
        return Err(WalkError::InvalidConfig("increments mismatch".into()));
    };
    let sampler = cfg.measure.sampler();
    let mut rng = Rng::for_trajectory(cfg.master_seed, index);
    let mut st = LatticeState::new(cfg.descriptor.d());
    let mut bank = Bank::new(cfg, ctx);
    bank.observe_lattice(0, &st.pos, st.m_n);
    for t in 1..=cfg.n_steps {
        let a = sampler.sample(&mut rng);
        st.apply(&incs[a]).map_err(WalkError::Group)?;
        bank.observe_lattice(t, &st.pos, st.m_n);
    }
    Ok(bank.finish(cfg, index, st.pos[0] as f64, st.m_n as f64, None, None))
}

fn run_poly(cfg: &WalkConfig, ctx: &EnsembleContext, index: u64) -> Result<TrajectoryStats, WalkError> {
    let Increments::Poly(incs) = &ctx.incs else {
        return Err(WalkError::InvalidConfig("increments mismatch".into()));
    };
    let eig = ctx.eig.clone().expect("polycyclic context has eigendata");
    let sampler = cfg.measure.sampler();
    let mut rng = Rng::for_trajectory(cfg.master_seed, index);
    let mut st = PolyState::new(&cfg.descriptor, eig)?;
    let mut bank = Bank::new(cfg, ctx);
    let mut law_pending = false;
    let check_every = cfg.exact_check_every;
    bank.observe_poly(0, st.phi, st.w, st.m_n);
    for t in 1..=cfg.n_steps {
        let a = sampler.sample(&mut rng);
        let inc = &incs[a];
        let do_check = law_pending && inc.has_y;
        st.apply(inc, do_check)?;
        if do_check {
            law_pending = false;
        }
        if ctx.law_enabled && check_every > 0 && t % check_every == 0 {
            st.resync_w();
            law_pending = true;
        }
        // Polycyclic targets: cheap k comparison, exact materialization only
        // on a k-match.
        for i in 0..bank.ctx.targets.len() {
            if let TargetMatcher::Poly { k, x } = &bank.ctx.targets[i].matcher {
                if &st.k == k && &st.materialize() == x {
                    bank.target_visits[i] += 1;
                }
            }
        }
        bank.observe_poly(t, st.phi, st.w, st.m_n);
    }
    // Observe t = 0 target visits were skipped above; handle identity start.
    let law = if ctx.law_enabled { Some(st.law.clone()) } else { None };
    Ok(bank.finish(cfg, index, st.phi, st.m_n, None, law))
}

/// Simulate one trajectory; the result is a pure function of (cfg, index).
pub fn run_trajectory(cfg: &WalkConfig, index: u64) -> Result<TrajectoryStats, WalkError> {
    let ctx = EnsembleContext::new(cfg)?;
    run_trajectory_in(cfg, &ctx, index)
}

fn run_trajectory_in(cfg: &WalkConfig, ctx: &EnsembleContext, index: u64) -> Result<TrajectoryStats, WalkError> {
    if index >= cfg.n_trajectories {
        return Err(WalkError::InvalidConfig(format!(
            "trajectory index {index} out of range"
        )));
    }
    match &cfg.descriptor {
        GroupDescriptor::Lattice { .. } => run_lattice(cfg, ctx, index),
        GroupDescriptor::Wreath { .. } => {
            if ctx.z2_incs.is_some() {
                run_wreath_z2(cfg, ctx, index)
            } else {
                run_wreath_general(cfg, ctx, index)
            }
        }
        GroupDescriptor::Polycyclic { .. } => run_poly(cfg, ctx, index),
    }
}

// ---------------------------------------------------------------------------
// Ensemble aggregation
// ---------------------------------------------------------------------------

struct Aggregator<'c> {
    cfg: &'c WalkConfig,
    ctx: &'c EnsembleContext,
    sets: Vec<SetAggregate>,
    uns: Vec<UnAggregate>,
    ak: Vec<AkAggregate>,
    targets: Vec<TargetAggregate>,
    max_gap_tail: Option<Vec<u64>>,
    law: Option<IncrementLawStats>,
    final_m_sum: PairwiseSum,
    final_m_max: f64,
    series: SeriesAccumulator,
    merged: u64,
}

impl<'c> Aggregator<'c> {
    fn new(cfg: &'c WalkConfig, ctx: &'c EnsembleContext) -> Self {
        let sets = ctx
            .sets
            .iter()
            .map(|s| SetAggregate {
                name: s.name.clone(),
                per_window: vec![0; cfg.window_count],
                total_visits: 0,
                total_sumsq: 0,
                at_horizon: vec![0; cfg.horizons.len()],
                at_horizon_sumsq: vec![0; cfg.horizons.len()],
                zero_second_half: 0,
                zero_total: 0,
            })
            .collect();
        let uns = ctx
            .uns
            .iter()
            .map(|(name, _)| UnAggregate {
                name: name.clone(),
                per_window_true: vec![0; cfg.window_count],
                trajectories_with_any: 0,
                any_second_half: 0,
                last_window_hist: vec![0; cfg.window_count],
                never: 0,
            })
            .collect();
        let ak = ctx
            .ak_cfg
            .map(|(_, max_level)| {
                (1..=max_level)
                    .map(|j| {
                        let k = 4u64.pow(j);
                        AkAggregate {
                            level: j,
                            k,
                            t_k: detect::t_k_of(k),
                            reached: 0,
                            resolved: 0,
                            succeeded: 0,
                            sum_n_k: 0,
                        }
                    })
                    .collect()
            })
            .unwrap_or_default();
        let targets = ctx
            .targets
            .iter()
            .map(|t| TargetAggregate {
                name: t.name.clone(),
                key: t.key.clone(),
                total_visits: 0,
                total_sumsq: 0,
                at_horizon: vec![0; cfg.horizons.len()],
                at_horizon_sumsq: vec![0; cfg.horizons.len()],
            })
            .collect();
        Aggregator {
            cfg,
            ctx,
            sets,
            uns,
            ak,
            targets,
            max_gap_tail: if ctx.max_gap {
                Some(vec![0; MAX_GAP_TRACKED + 1])
            } else {
                None
            },
            law: if ctx.law_enabled {
                Some(IncrementLawStats::default())
            } else {
                None
            },
            final_m_sum: PairwiseSum::new(),
            final_m_max: f64::MIN,
            series: SeriesAccumulator::new(),
            merged: 0,
        }
    }

    fn merge(&mut self, t: &TrajectoryStats) {
        for (agg, s) in self.sets.iter_mut().zip(&t.sets) {
            for (w, v) in agg.per_window.iter_mut().zip(&s.per_window) {
                *w += v;
            }
            agg.total_visits += s.total;
            agg.total_sumsq += (s.total as u128) * (s.total as u128);
            for (i, &h) in s.at_horizon.iter().enumerate() {
                agg.at_horizon[i] += h;
                agg.at_horizon_sumsq[i] += (h as u128) * (h as u128);
            }
            if s.second_half == 0 {
                agg.zero_second_half += 1;
            }
            if s.total == 0 {
                agg.zero_total += 1;
            }
        }
        for (agg, s) in self.uns.iter_mut().zip(&t.uns) {
            for (w, v) in agg.per_window_true.iter_mut().zip(&s.per_window_true) {
                *w += v;
            }
            if s.true_count > 0 {
                agg.trajectories_with_any += 1;
            }
            if s.any_second_half {
                agg.any_second_half += 1;
            }
            match s.last_true {
                Some(t_last) => {
                    let w = ((t_last / self.ctx.block) as usize).min(self.cfg.window_count - 1);
                    agg.last_window_hist[w] += 1;
                }
                None => agg.never += 1,
            }
        }
        for (agg, o) in self.ak.iter_mut().zip(&t.ak) {
            if let Some(n_k) = o.n_k {
                agg.reached += 1;
                agg.sum_n_k += n_k;
            }
            if let Some(success) = o.success {
                agg.resolved += 1;
                if success {
                    agg.succeeded += 1;
                }
            }
        }
        for (agg, s) in self.targets.iter_mut().zip(&t.targets) {
            agg.total_visits += s.visits;
            agg.total_sumsq += (s.visits as u128) * (s.visits as u128);
            for (i, &h) in s.at_horizon.iter().enumerate() {
                agg.at_horizon[i] += h;
                agg.at_horizon_sumsq[i] += (h as u128) * (h as u128);
            }
        }
        if let (Some(tail), Some(gap)) = (&mut self.max_gap_tail, t.final_gap) {
            if gap >= 0 {
                let top = (gap as usize).min(MAX_GAP_TRACKED);
                for entry in tail.iter_mut().take(top + 1) {
                    *entry += 1;
                }
            }
        }
        if let (Some(agg), Some(law)) = (&mut self.law, &t.law) {
            agg.checks += law.checks;
            agg.failures += law.failures;
            agg.resyncs += law.resyncs;
            if law.max_rel_err > agg.max_rel_err {
                agg.max_rel_err = law.max_rel_err;
            }
            if law.max_resync_drift > agg.max_resync_drift {
                agg.max_resync_drift = law.max_resync_drift;
            }
        }
        self.final_m_sum.push(t.final_m);
        if t.final_m > self.final_m_max {
            self.final_m_max = t.final_m;
        }
        self.series.merge(&t.series);
        self.merged += 1;
    }

    fn finish(self) -> EnsembleReport {
        EnsembleReport {
            n_steps: self.cfg.n_steps,
            n_trajectories: self.cfg.n_trajectories,
            master_seed: self.cfg.master_seed,
            window_count: self.cfg.window_count,
            block: self.ctx.block,
            snapshot_stride: self.ctx.stride,
            horizons: self.cfg.horizons.clone(),
            sets: self.sets,
            uns: self.uns,
            ak: self.ak,
            targets: self.targets,
            max_gap_tail: self.max_gap_tail,
            increment_law: self.law,
            final_m_mean: self.final_m_sum.sum() / self.merged.max(1) as f64,
            final_m_max: self.final_m_max,
            series: self.series.finish(),
        }
    }
}

/// Run the whole ensemble on `threads` worker threads. The report is
/// byte-identical for any thread count: trajectories are merged strictly in
/// index order within fixed-size batches.
pub fn run_ensemble(cfg: &WalkConfig, threads: usize) -> Result<EnsembleReport, WalkError> {
    let ctx = EnsembleContext::new(cfg)?;
    // Build the alias table up front so worker threads share it read-only.
    let _ = cfg.measure.sampler();
    let mut agg = Aggregator::new(cfg, &ctx);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| WalkError::InvalidConfig(format!("thread pool: {e}")))?;
    let mut start = 0u64;
    while start < cfg.n_trajectories {
        let end = (start + BATCH).min(cfg.n_trajectories);
        let results: Vec<(u64, Result<TrajectoryStats, WalkError>)> = pool.install(|| {
            (start..end)
                .into_par_iter()
                .map(|i| (i, run_trajectory_in(cfg, &ctx, i)))
                .collect()
        });
        for (i, r) in results {
            let stats = r.map_err(|e| WalkError::Trajectory {
                index: i,
                source: Box::new(e),
            })?;
            agg.merge(&stats);
        }
        start = end;
    }
    Ok(agg.finish())
}
