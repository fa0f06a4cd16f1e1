//! Online event detectors for the wreath walks.
//!
//! A_k events on the schedule k = 4^j: upon first reaching position 2^j
//! (= k^{1/2}), the walker must take t_k = ⌊log k / log 4⌋ = j steps of
//! exactly +jump each, i.e. Y_{n_k + t_k} = Y_{n_k} + jump·t_k.
//!
//! U_n events: M_n − F_R ≥ (2+5ε)·log₂(M_n) (wreath) or
//! M_n − ln|(x, v1)| ≥ C·ln(M_n) (polycyclic), evaluated on the decimated
//! snapshot schedule, with M_n ≤ 1 treated as false.

use serde::Serialize;

use crate::observe::SignedLog;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct AkOutcome {
    pub level: u32,
    pub k: u64,
    pub t_k: u64,
    /// First time the walk reached k^{1/2}; None if never within horizon.
    pub n_k: Option<u64>,
    /// Whether the next t_k increments summed to +jump·t_k; None if the
    /// deadline lies beyond the horizon.
    pub success: Option<bool>,
}

#[derive(Clone, Copy, Debug)]
enum AkState {
    Pending,
    Armed { n_k: u64, start: i64, deadline: u64 },
    Done { n_k: u64, success: bool },
}

/// Exact integer t_k = max { t : 4^t <= k }.
pub fn t_k_of(k: u64) -> u64 {
    let mut t = 0u64;
    let mut p = 1u64;
    while p <= k / 4 {
        p *= 4;
        t += 1;
    }
    t
}

#[derive(Clone, Debug)]
pub struct AkDetector {
    jump: i64,
    levels: Vec<(u64, u64, i64)>, // (k, t_k, threshold 2^j)
    states: Vec<AkState>,
    next_unarmed: usize,
}

impl AkDetector {
    /// Levels j = 1..=max_level, k = 4^j.
    pub fn new(jump: i64, max_level: u32) -> AkDetector {
        let levels: Vec<(u64, u64, i64)> = (1..=max_level)
            .map(|j| {
                let k = 4u64.pow(j);
                (k, t_k_of(k), 1i64 << j)
            })
            .collect();
        let states = vec![AkState::Pending; levels.len()];
        AkDetector {
            jump,
            levels,
            states,
            next_unarmed: 0,
        }
    }

    /// Feed the position after step `n` (n >= 1; the walk starts at 0).
    #[inline]
    pub fn step(&mut self, n: u64, pos1: i64) {
        // Arm every level whose threshold is first reached now. Thresholds
        // increase with level, so a prefix pointer suffices.
        while self.next_unarmed < self.levels.len() && pos1 >= self.levels[self.next_unarmed].2 {
            let (_, t_k, _) = self.levels[self.next_unarmed];
            self.states[self.next_unarmed] = if t_k == 0 {
                AkState::Done { n_k: n, success: true }
            } else {
                AkState::Armed {
                    n_k: n,
                    start: pos1,
                    deadline: n + t_k,
                }
            };
            self.next_unarmed += 1;
        }
        // Resolve armed levels whose deadline is reached.
        for (i, st) in self.states.iter_mut().enumerate() {
            if let AkState::Armed { n_k, start, deadline } = *st {
                if n == deadline {
                    let expected = start + self.jump * self.levels[i].1 as i64;
                    *st = AkState::Done {
                        n_k,
                        success: pos1 == expected,
                    };
                }
            }
        }
    }

    pub fn finish(&self) -> Vec<AkOutcome> {
        self.levels
            .iter()
            .zip(&self.states)
            .enumerate()
            .map(|(i, (&(k, t_k, _), st))| {
                let (n_k, success) = match *st {
                    AkState::Pending => (None, None),
                    AkState::Armed { n_k, .. } => (Some(n_k), None),
                    AkState::Done { n_k, success } => (Some(n_k), Some(success)),
                };
                AkOutcome {
                    level: i as u32 + 1,
                    k,
                    t_k,
                    n_k,
                    success,
                }
            })
            .collect()
    }
}

/// Run the detector over a full position trace (positions after each step).
pub fn detect_a_k(positions: &[i64], jump: i64, max_level: u32) -> Vec<AkOutcome> {
    let mut det = AkDetector::new(jump, max_level);
    for (i, &p) in positions.iter().enumerate() {
        det.step(i as u64 + 1, p);
    }
    det.finish()
}

#[derive(Clone, Copy, Debug)]
pub enum UnThreshold {
    Wreath { epsilon: f64 },
    Polycyclic { big_c: f64 },
}

#[derive(Clone, Debug)]
pub struct UnDetector {
    threshold: UnThreshold,
    half_time: u64,
    pub per_window_true: Vec<u64>,
    pub last_true: Option<u64>,
    pub any_second_half: bool,
    pub true_count: u64,
}

impl UnDetector {
    pub fn new(threshold: UnThreshold, windows: usize, n_steps: u64) -> UnDetector {
        UnDetector {
            threshold,
            half_time: n_steps / 2,
            per_window_true: vec![0; windows.max(1)],
            last_true: None,
            any_second_half: false,
            true_count: 0,
        }
    }

    /// Evaluate U_n at a snapshot tick. `m_n` is the running max of pos_1
    /// (wreath) or φ (polycyclic); `gap_input` is F_R (wreath) or ln|w|
    /// (polycyclic, −∞ for w = 0).
    #[inline]
    pub fn tick(&mut self, t: u64, window: usize, m_n: f64, gap_input: f64) {
        let holds = if m_n <= 1.0 {
            false
        } else {
            match self.threshold {
                UnThreshold::Wreath { epsilon } => {
                    m_n - gap_input >= (2.0 + 5.0 * epsilon) / std::f64::consts::LN_2 * m_n.ln()
                }
                UnThreshold::Polycyclic { big_c } => m_n - gap_input >= big_c * m_n.ln(),
            }
        };
        if holds {
            self.per_window_true[window] += 1;
            self.last_true = Some(t);
            self.true_count += 1;
            if t > self.half_time {
                self.any_second_half = true;
            }
        }
    }
}

pub use crate::observe::polycyclic_member as polycyclic_set_member;

/// Convenience for tests: evaluate the polycyclic U_n directly.
pub fn un_polycyclic(big_c: f64, m_n: f64, w: SignedLog) -> bool {
    m_n > 1.0 && (w.is_zero() || m_n - w.ln_abs >= big_c * m_n.ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_k_values() {
        assert_eq!(t_k_of(1), 0);
        assert_eq!(t_k_of(4), 1);
        assert_eq!(t_k_of(15), 1);
        assert_eq!(t_k_of(16), 2);
        assert_eq!(t_k_of(64), 3);
        assert_eq!(t_k_of(256), 4);
        assert_eq!(t_k_of(4u64.pow(13)), 13);
    }

    #[test]
    fn a16_success_and_failure() {
        // k = 16: threshold 4, t_k = 2, jump 8.
        // Path reaching 4 then two +8 steps: success.
        let mut pos = vec![1, 2, 3, 4, 12, 20];
        let out = detect_a_k(&pos, 8, 2);
        assert_eq!(out[1].k, 16);
        assert_eq!(out[1].n_k, Some(4));
        assert_eq!(out[1].success, Some(true));
        // Same prefix but second step wrong: failure.
        pos = vec![1, 2, 3, 4, 12, 11];
        let out = detect_a_k(&pos, 8, 2);
        assert_eq!(out[1].success, Some(false));
        // k = 4 (threshold 2, t_k = 1): armed at n = 2, next step +8.
        assert_eq!(out[0].n_k, Some(2));
        assert_eq!(out[0].success, Some(false)); // 2 -> 3, not +8
    }

    #[test]
    fn unreached_levels_are_none() {
        let out = detect_a_k(&[1, 0, 1, 0], 8, 3);
        assert_eq!(out[1].n_k, None);
        assert_eq!(out[1].success, None);
    }

    #[test]
    fn deadline_beyond_horizon_is_unresolved() {
        // Reaches threshold 2 at the last step; t_k = 1 deadline never comes.
        let out = detect_a_k(&[1, 2], 8, 1);
        assert_eq!(out[0].n_k, Some(2));
        assert_eq!(out[0].success, None);
    }

    #[test]
    fn un_wreath_examples() {
        let mut det = UnDetector::new(UnThreshold::Wreath { epsilon: 0.2 }, 4, 100);
        // M_n = 100, F_R = 0: 100 >= 4.3281 * ln(100) ≈ 19.93 holds.
        det.tick(60, 2, 100.0, 0.0);
        assert_eq!(det.true_count, 1);
        assert!(det.any_second_half);
        assert_eq!(det.last_true, Some(60));
        // M_n <= 1 guard.
        det.tick(61, 2, 1.0, 0.0);
        assert_eq!(det.true_count, 1);
        // Large F_R defeats it.
        det.tick(62, 2, 100.0, 95.0);
        assert_eq!(det.true_count, 1);
    }

    #[test]
    fn un_polycyclic_guard() {
        assert!(!un_polycyclic(2.0, 1.0, SignedLog::ZERO));
        assert!(un_polycyclic(2.0, 10.0, SignedLog { sign: 1, ln_abs: 3.0 }));
        assert!(!un_polycyclic(2.0, 10.0, SignedLog { sign: 1, ln_abs: 9.0 }));
    }
}
