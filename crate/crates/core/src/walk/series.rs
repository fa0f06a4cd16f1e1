//! Decimated time-series snapshots and deterministic float aggregation.

use serde::Serialize;

/// Pairwise (binary-counter) summation. Values pushed in a fixed order give
/// a bit-deterministic sum with O(log n) rounding error growth, independent
/// of how work was scheduled across threads.
#[derive(Clone, Debug, Default)]
pub struct PairwiseSum {
    partial: Vec<f64>,
    count: u64,
}

impl PairwiseSum {
    pub fn new() -> Self {
        PairwiseSum::default()
    }

    #[inline]
    pub fn push(&mut self, v: f64) {
        let mut x = v;
        let mut c = self.count;
        while c & 1 == 1 {
            x += self.partial.pop().expect("partial stack tracks count bits");
            c >>= 1;
        }
        self.partial.push(x);
        self.count += 1;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Final sum; folds the remaining partials from the most recent level up.
    pub fn sum(&self) -> f64 {
        self.partial.iter().rev().sum()
    }
}

/// Snapshot times for a walk: every `n_steps / points` steps (at least 1),
/// always including t = 0 and t = n_steps.
pub fn snapshot_stride(n_steps: u64, points: u64) -> u64 {
    (n_steps / points.max(1)).max(1)
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct SeriesSnapshot {
    pub times: Vec<u64>,
    /// pos_1 (wreath/lattice) or φ (polycyclic)
    pub primary: Vec<f64>,
    /// F_R (wreath) or ln|(x, v1)| (polycyclic; −inf encoded as NaN-free min)
    pub secondary: Vec<f64>,
    pub running_max: Vec<f64>,
}

impl SeriesSnapshot {
    pub fn with_capacity(n: usize) -> Self {
        SeriesSnapshot {
            times: Vec::with_capacity(n),
            primary: Vec::with_capacity(n),
            secondary: Vec::with_capacity(n),
            running_max: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, t: u64, primary: f64, secondary: f64, running_max: f64) {
        self.times.push(t);
        self.primary.push(primary);
        self.secondary.push(secondary);
        self.running_max.push(running_max);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Ensemble-mean series, aggregated pairwise in trajectory-index order.
#[derive(Debug)]
pub struct SeriesAccumulator {
    times: Vec<u64>,
    primary: Vec<PairwiseSum>,
    secondary: Vec<PairwiseSum>,
    running_max: Vec<PairwiseSum>,
    trajectories: u64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct SeriesMean {
    pub times: Vec<u64>,
    pub primary_mean: Vec<f64>,
    pub secondary_mean: Vec<f64>,
    pub running_max_mean: Vec<f64>,
}

impl SeriesAccumulator {
    pub fn new() -> Self {
        SeriesAccumulator {
            times: Vec::new(),
            primary: Vec::new(),
            secondary: Vec::new(),
            running_max: Vec::new(),
            trajectories: 0,
        }
    }

    pub fn merge(&mut self, snap: &SeriesSnapshot) {
        if self.trajectories == 0 {
            self.times = snap.times.clone();
            self.primary = vec![PairwiseSum::new(); snap.len()];
            self.secondary = vec![PairwiseSum::new(); snap.len()];
            self.running_max = vec![PairwiseSum::new(); snap.len()];
        }
        debug_assert_eq!(self.times, snap.times);
        for (i, acc) in self.primary.iter_mut().enumerate() {
            acc.push(snap.primary[i]);
        }
        for (i, acc) in self.secondary.iter_mut().enumerate() {
            acc.push(snap.secondary[i]);
        }
        for (i, acc) in self.running_max.iter_mut().enumerate() {
            acc.push(snap.running_max[i]);
        }
        self.trajectories += 1;
    }

    pub fn finish(self) -> SeriesMean {
        let n = self.trajectories.max(1) as f64;
        SeriesMean {
            times: self.times,
            primary_mean: self.primary.iter().map(|s| s.sum() / n).collect(),
            secondary_mean: self.secondary.iter().map(|s| s.sum() / n).collect(),
            running_max_mean: self.running_max.iter().map(|s| s.sum() / n).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_integers() {
        let mut p = PairwiseSum::new();
        let mut naive = 0.0;
        for i in 0..1000 {
            p.push(i as f64);
            naive += i as f64;
        }
        assert_eq!(p.sum(), naive);
        assert_eq!(p.count(), 1000);
    }

    #[test]
    fn pairwise_deterministic() {
        let vals: Vec<f64> = (0..257).map(|i| (i as f64) * 0.1 + 1e-3).collect();
        let mut a = PairwiseSum::new();
        let mut b = PairwiseSum::new();
        for &v in &vals {
            a.push(v);
            b.push(v);
        }
        assert_eq!(a.sum().to_bits(), b.sum().to_bits());
    }

    #[test]
    fn stride_examples() {
        assert_eq!(snapshot_stride(1_000_000, 1000), 1000);
        assert_eq!(snapshot_stride(10, 1000), 1);
        assert_eq!(snapshot_stride(0, 1000), 1);
    }
}
