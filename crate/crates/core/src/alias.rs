//! Vose alias method for O(1) sampling from a finite discrete distribution.

use crate::rng::Rng;

#[derive(Clone, Debug)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<u32>,
}

impl AliasTable {
    /// Build from non-negative weights (not necessarily normalized).
    pub fn new(weights: &[f64]) -> AliasTable {
        let n = weights.len();
        assert!(n > 0, "alias table needs at least one weight");
        assert!(n <= u32::MAX as usize);
        let total: f64 = weights.iter().sum();
        assert!(total > 0.0, "alias table needs positive total weight");
        let mut prob: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut alias: Vec<u32> = (0..n as u32).collect();
        let mut small: Vec<u32> = Vec::with_capacity(n);
        let mut large: Vec<u32> = Vec::with_capacity(n);
        for (i, &p) in prob.iter().enumerate() {
            if p < 1.0 {
                small.push(i as u32);
            } else {
                large.push(i as u32);
            }
        }
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            alias[s as usize] = l;
            let leftover = prob[l as usize] + prob[s as usize] - 1.0;
            prob[l as usize] = leftover;
            if leftover < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // Remaining entries keep probability 1 up to rounding.
        for &i in small.iter().chain(large.iter()) {
            prob[i as usize] = 1.0;
        }
        AliasTable { prob, alias }
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    #[inline]
    pub fn sample(&self, rng: &mut Rng) -> usize {
        let i = rng.below(self.prob.len() as u64) as usize;
        if rng.next_f64() < self.prob[i] {
            i
        } else {
            self.alias[i] as usize
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_atom_always_sampled() {
        let t = AliasTable::new(&[1.0]);
        let mut rng = Rng::from_seed(1);
        for _ in 0..100 {
            assert_eq!(t.sample(&mut rng), 0);
        }
    }

    #[test]
    fn frequencies_match_weights() {
        let weights = [0.5, 0.25, 0.125, 0.125];
        let t = AliasTable::new(&weights);
        let mut rng = Rng::from_seed(99);
        let n = 1_000_000u64;
        let mut counts = [0u64; 4];
        for _ in 0..n {
            counts[t.sample(&mut rng)] += 1;
        }
        for (i, &w) in weights.iter().enumerate() {
            let freq = counts[i] as f64 / n as f64;
            let sigma = (w * (1.0 - w) / n as f64).sqrt();
            assert!(
                (freq - w).abs() < 4.0 * sigma,
                "atom {i}: freq {freq} vs weight {w}"
            );
        }
    }

    #[test]
    fn skewed_weights() {
        let weights = [0.999, 0.001];
        let t = AliasTable::new(&weights);
        let mut rng = Rng::from_seed(5);
        let n = 2_000_000u64;
        let mut c1 = 0u64;
        for _ in 0..n {
            if t.sample(&mut rng) == 1 {
                c1 += 1;
            }
        }
        let freq = c1 as f64 / n as f64;
        let sigma = (0.001f64 * 0.999 / n as f64).sqrt();
        assert!((freq - 0.001).abs() < 4.0 * sigma, "freq {freq}");
    }
}
