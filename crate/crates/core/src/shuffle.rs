//! Fisher-Yates permutation, shared by the mixers (batch shuffling) and the
//! clients (route selection). One implementation so both sides provably draw
//! from the same distribution.

use rand::Rng;

/// Uniform random permutation of `0..n` by the classic downward swap:
/// for i from n-1 to 1, draw j in [0, i] and swap positions i and j.
pub fn fisher_yates<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        p.swap(i, j);
    }
    p
}

/// Reorders `items` so output position k holds input `items[perm[k]]`.
pub fn apply<T>(items: Vec<T>, perm: &[usize]) -> Vec<T> {
    debug_assert_eq!(items.len(), perm.len());
    let mut slots: Vec<Option<T>> = items.into_iter().map(Some).collect();
    perm.iter()
        .map(|&src| slots[src].take().expect("perm is a permutation"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use std::collections::HashMap;

    /// Rng that always returns zero, forcing every draw of j to 0.
    struct ZeroRng;

    impl RngCore for ZeroRng {
        fn next_u32(&mut self) -> u32 {
            0
        }
        fn next_u64(&mut self) -> u64 {
            0
        }
        fn fill_bytes(&mut self, dest: &mut [u8]) {
            dest.fill(0);
        }
        fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
            dest.fill(0);
            Ok(())
        }
    }

    #[test]
    fn hand_traced_three_elements() {
        // draws j=0 then j=0: [0,1,2] -swap(2,0)-> [2,1,0] -swap(1,0)-> [1,2,0],
        // so [A,B,C] shuffles to [B,C,A]
        let perm = fisher_yates(3, &mut ZeroRng);
        assert_eq!(perm, vec![1, 2, 0]);
        assert_eq!(apply(vec!["A", "B", "C"], &perm), vec!["B", "C", "A"]);
    }

    #[test]
    fn output_is_a_permutation() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for n in [0, 1, 2, 17, 100] {
            let perm = fisher_yates(n, &mut rng);
            let mut sorted = perm.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn all_permutations_of_four_reachable_and_near_uniform() {
        // 4! = 24 cells; 24000 draws gives expectation 1000 per cell. A loose
        // +/-20% band is far beyond any plausible statistical wobble for a
        // correct implementation while catching off-by-one biases (e.g.
        // gen_range(0..i) instead of 0..=i leaves some cells at zero).
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut counts: HashMap<Vec<usize>, u32> = HashMap::new();
        for _ in 0..24_000 {
            *counts.entry(fisher_yates(4, &mut rng)).or_default() += 1;
        }
        assert_eq!(counts.len(), 24);
        for (perm, c) in counts {
            assert!((800..=1200).contains(&c), "{perm:?} hit {c} times");
        }
    }

    #[test]
    fn same_seed_same_permutation() {
        let a = fisher_yates(50, &mut ChaCha20Rng::seed_from_u64(3));
        let b = fisher_yates(50, &mut ChaCha20Rng::seed_from_u64(3));
        assert_eq!(a, b);
    }
}
