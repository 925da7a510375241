//! Exhaustive comparison of the per-queue routing rule with the aggregate
//! generator, in exact integer arithmetic.
//!
//! For a state `s`, take a representative list of queue lengths whose
//! occupancy vector is `s`, enumerate all `n^d` ordered sample tuples and
//! count where each arrival goes. The aggregate chain predicts
//! `s_{i-1}^d - s_i^d` of the tuples for level `i`.

use serde::Serialize;

use crate::state::{level, StateVector};

/// Transition counts of one state, with arrivals out of `n^d` tuples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InducedCounts {
    /// `arrivals[i - 1]`: tuples routing to level `i`.
    pub arrivals: Vec<u128>,
    /// Tuples whose chosen queue is full.
    pub dropped: u128,
    /// `n^d`.
    pub denominator: u128,
    /// `departures[i - 1]`: servers whose completion lowers `s_i`.
    pub departures: Vec<u64>,
}

/// Queue lengths with occupancy vector `s`, longest first.
pub fn representative_queues(s: &StateVector) -> Vec<u32> {
    let raw = s.as_slice();
    (0..s.n()).map(|k| raw.iter().filter(|&&v| v > k).count() as u32).collect()
}

/// Counts from the per-queue rule (first-sampled shortest wins).
pub fn per_queue_counts(s: &StateVector, d: u32) -> InducedCounts {
    let queues = representative_queues(s);
    let n = queues.len();
    let b = s.b();
    let mut arrivals = vec![0u128; b];
    let mut dropped = 0u128;
    let mut tuple = vec![0usize; d as usize];
    loop {
        let mut best = tuple[0];
        for &j in &tuple[1..] {
            if queues[j] < queues[best] {
                best = j;
            }
        }
        let len = queues[best] as usize;
        if len == b {
            dropped += 1;
        } else {
            arrivals[len] += 1;
        }
        // odometer increment over n^d tuples
        let mut pos = 0;
        loop {
            if pos == tuple.len() {
                let mut departures = vec![0u64; b];
                for &q in &queues {
                    if q > 0 {
                        departures[q as usize - 1] += 1;
                    }
                }
                return InducedCounts { arrivals, dropped, denominator: (n as u128).pow(d), departures };
            }
            tuple[pos] += 1;
            if tuple[pos] < n {
                break;
            }
            tuple[pos] = 0;
            pos += 1;
        }
    }
}

/// Counts predicted by the aggregate generator.
pub fn generator_counts(s: &StateVector, d: u32) -> InducedCounts {
    let n = s.n();
    let raw = s.as_slice();
    let b = raw.len();
    let pow = |v: u32| (v as u128).pow(d);
    let arrivals = (1..=b).map(|i| pow(level(n, raw, i - 1)) - pow(level(n, raw, i))).collect();
    let departures = (1..=b).map(|i| (level(n, raw, i) - level(n, raw, i + 1)) as u64).collect();
    InducedCounts { arrivals, dropped: pow(raw[b - 1]), denominator: pow(n), departures }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_queues_27_tuples() {
        // Lengths (0, 1, 2): empty queue wins unless it is never sampled.
        let s = StateVector::from_queue_lengths(3, 2, &[0, 1, 2]).unwrap();
        let c = per_queue_counts(&s, 3);
        assert_eq!(c.denominator, 27);
        assert_eq!(c.arrivals, vec![27 - 8, 8 - 1]);
        assert_eq!(c.dropped, 1);
        assert_eq!(c, generator_counts(&s, 3));
    }

    #[test]
    fn single_queue_ignores_d() {
        for d in 1..=4 {
            let s = StateVector::new(1, vec![1, 0, 0]).unwrap();
            let c = per_queue_counts(&s, d);
            assert_eq!(c.arrivals, vec![0, 1, 0]);
        }
    }

    #[test]
    fn representative_round_trips() {
        let s = StateVector::new(4, vec![3, 1, 1]).unwrap();
        let q = representative_queues(&s);
        assert_eq!(q, vec![3, 1, 1, 0]);
        assert_eq!(StateVector::from_queue_lengths(4, 3, &q).unwrap(), s);
    }
}
