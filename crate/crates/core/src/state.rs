use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Occupancy vector: `s[i]` counts queues holding at least `i + 1` jobs.
///
/// The server count `n` is carried alongside so that the implicit
/// boundaries `s_0 = n` and `s_{b+1} = 0` are always available.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StateVector {
    n: u32,
    s: Vec<u32>,
}

impl StateVector {
    /// Validates monotonicity `n >= s_1 >= ... >= s_b >= 0`.
    pub fn new(n: u32, s: Vec<u32>) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::InvalidState("buffer size must be at least 1".into()));
        }
        let mut prev = n;
        for (i, &v) in s.iter().enumerate() {
            if v > prev {
                return Err(Error::InvalidState(format!(
                    "s_{} = {} exceeds s_{} = {}",
                    i + 1,
                    v,
                    i,
                    prev
                )));
            }
            prev = v;
        }
        Ok(Self { n, s })
    }

    pub fn zeros(n: u32, b: usize) -> Self {
        Self { n, s: vec![0; b.max(1)] }
    }

    pub fn full(n: u32, b: usize) -> Self {
        Self { n, s: vec![n; b.max(1)] }
    }

    /// Builds the occupancy vector of a list of queue lengths.
    pub fn from_queue_lengths(n: u32, b: usize, lengths: &[u32]) -> Result<Self> {
        if lengths.len() != n as usize {
            return Err(Error::InvalidState(format!(
                "expected {} queue lengths, got {}",
                n,
                lengths.len()
            )));
        }
        let mut s = vec![0u32; b];
        for &q in lengths {
            if q as usize > b {
                return Err(Error::InvalidState(format!("queue length {q} exceeds buffer {b}")));
            }
            for slot in s.iter_mut().take(q as usize) {
                *slot += 1;
            }
        }
        Ok(Self { n, s })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn b(&self) -> usize {
        self.s.len()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.s
    }

    pub fn into_vec(self) -> Vec<u32> {
        self.s
    }

    /// One-indexed access with the boundary conventions `s_0 = n`, `s_{b+1} = 0`.
    #[inline]
    pub fn get(&self, i: usize) -> u32 {
        level(self.n, &self.s, i)
    }

    /// Sum of `s_l` over `l >= from` (one-indexed).
    pub fn tail_sum(&self, from: usize) -> u64 {
        let start = from.max(1) - 1;
        self.s.iter().skip(start).map(|&v| v as u64).sum()
    }

    /// Total number of jobs in the system.
    pub fn total_jobs(&self) -> u64 {
        self.tail_sum(1)
    }

    /// Returns a copy with `s_i` shifted by `delta`, without validation.
    pub(crate) fn shifted(&self, i: usize, delta: i32) -> Self {
        let mut s = self.s.clone();
        s[i - 1] = (s[i - 1] as i64 + delta as i64) as u32;
        Self { n: self.n, s }
    }
}

/// One-indexed level lookup on a raw slice with `s_0 = n`, `s_{b+1} = 0`.
#[inline]
pub fn level(n: u32, s: &[u32], i: usize) -> u32 {
    if i == 0 {
        n
    } else if i > s.len() {
        0
    } else {
        s[i - 1]
    }
}

/// Checks the monotone-cone property of a raw slice.
pub fn is_valid(n: u32, s: &[u32]) -> bool {
    let mut prev = n;
    for &v in s {
        if v > prev {
            return false;
        }
        prev = v;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_non_monotone() {
        assert!(StateVector::new(3, vec![1, 2]).is_err());
        assert!(StateVector::new(3, vec![4, 0]).is_err());
        assert!(StateVector::new(3, vec![3, 3, 0]).is_ok());
    }

    #[test]
    fn boundaries() {
        let s = StateVector::new(5, vec![4, 2]).unwrap();
        assert_eq!(s.get(0), 5);
        assert_eq!(s.get(2), 2);
        assert_eq!(s.get(3), 0);
        assert_eq!(s.tail_sum(2), 2);
        assert_eq!(s.total_jobs(), 6);
    }

    #[test]
    fn from_lengths() {
        let s = StateVector::from_queue_lengths(3, 2, &[0, 1, 2]).unwrap();
        assert_eq!(s.as_slice(), &[2, 1]);
        assert!(StateVector::from_queue_lengths(2, 2, &[3, 0]).is_err());
    }

    proptest! {
        #[test]
        fn validation_matches_sortedness(n in 1u32..6, raw in proptest::collection::vec(0u32..7, 1..5)) {
            let ok = StateVector::new(n, raw.clone()).is_ok();
            let expected = raw.iter().all(|&v| v <= n) && raw.windows(2).all(|w| w[0] >= w[1]);
            prop_assert_eq!(ok, expected);
        }

        #[test]
        fn queue_lengths_always_valid(lengths in proptest::collection::vec(0u32..4, 1..6)) {
            let n = lengths.len() as u32;
            let s = StateVector::from_queue_lengths(n, 3, &lengths).unwrap();
            prop_assert!(is_valid(n, s.as_slice()));
            prop_assert_eq!(s.total_jobs(), lengths.iter().map(|&q| q as u64).sum::<u64>());
        }
    }
}
