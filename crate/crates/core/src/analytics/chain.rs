//! The per-station backoff chain over `(stage, counter)` states, solved
//! numerically.
//!
//! Stage `i` runs from `0` to the retry limit `h`; its counter is drawn
//! uniformly from `[0, W_i - 1]` and decrements by one per slot. At counter
//! zero the station transmits: with probability `p` it collides and moves
//! to stage `i + 1`, otherwise it returns to stage 0. Stage `h` always
//! returns to stage 0 (success or drop).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::MacParams;

#[derive(Debug, Clone)]
pub struct BackoffChain {
    mac: MacParams,
    /// First state index of each stage.
    offsets: Vec<usize>,
    len: usize,
}

#[derive(Debug, Clone)]
pub struct ChainStationary {
    pub distribution: Vec<f64>,
    /// Probability of being at counter zero in any stage.
    pub tau: f64,
    pub b00: f64,
}

impl BackoffChain {
    pub fn new(mac: MacParams) -> Result<Self> {
        mac.validate()?;
        let mut offsets = Vec::with_capacity(mac.h as usize + 1);
        let mut len = 0;
        for stage in mac.stages() {
            offsets.push(len);
            len += mac.window(stage) as usize;
        }
        Ok(BackoffChain { mac, offsets, len })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn index(&self, stage: u32, counter: u32) -> usize {
        debug_assert!(counter < self.mac.window(stage));
        self.offsets[stage as usize] + counter as usize
    }

    /// Row-stochastic transition matrix for collision probability `p`.
    pub fn transition_matrix(&self, p: f64) -> Result<DMatrix<f64>> {
        check_p(p)?;
        let mac = &self.mac;
        let mut t = DMatrix::zeros(self.len, self.len);
        let w0 = mac.w0;
        for stage in mac.stages() {
            for counter in 1..mac.window(stage) {
                t[(self.index(stage, counter), self.index(stage, counter - 1))] = 1.0;
            }
            let from = self.index(stage, 0);
            let back_to_start = if stage < mac.h { 1.0 - p } else { 1.0 };
            for k in 0..w0 {
                t[(from, self.index(0, k))] += back_to_start / w0 as f64;
            }
            if stage < mac.h {
                let next = stage + 1;
                let w = mac.window(next);
                for k in 0..w {
                    t[(from, self.index(next, k))] += p / w as f64;
                }
            }
        }
        Ok(t)
    }

    /// Solves `pi P = pi`, `sum(pi) = 1` directly by LU factorisation.
    pub fn stationary(&self, p: f64) -> Result<ChainStationary> {
        let t = self.transition_matrix(p)?;
        let n = self.len;
        let mut a = t.transpose();
        for i in 0..n {
            a[(i, i)] -= 1.0;
        }
        // One balance equation is redundant; replace it with normalisation.
        for j in 0..n {
            a[(n - 1, j)] = 1.0;
        }
        let mut rhs = DVector::zeros(n);
        rhs[n - 1] = 1.0;
        let pi = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Domain(format!("backoff chain singular at p = {p}")))?;

        let tau = self.mac.stages().map(|i| pi[self.index(i, 0)]).sum();
        let b00 = pi[self.index(0, 0)];
        Ok(ChainStationary {
            distribution: pi.iter().copied().collect(),
            tau,
            b00,
        })
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Domain(format!("collision probability must lie in [0, 1), got {p}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MAC: MacParams = MacParams::TABLE1;

    #[test]
    fn state_space_size() {
        let c = BackoffChain::new(MAC).unwrap();
        assert_eq!(c.len(), 8 + 16 + 32 + 64 + 64 + 64);
    }

    #[test]
    fn rows_are_stochastic() {
        let c = BackoffChain::new(MAC).unwrap();
        let t = c.transition_matrix(0.37).unwrap();
        for r in 0..c.len() {
            let s: f64 = t.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn stationary_vector_is_normalised_and_non_negative() {
        let c = BackoffChain::new(MAC).unwrap();
        for p in [0.0, 0.1, 0.5, 0.9] {
            let s = c.stationary(p).unwrap();
            let total: f64 = s.distribution.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!(s.distribution.iter().all(|&x| x > -1e-14));
        }
    }

    #[test]
    fn zero_collision_chain_gives_two_over_w0_plus_one() {
        let c = BackoffChain::new(MAC).unwrap();
        let s = c.stationary(0.0).unwrap();
        assert!((s.tau - 2.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_p_outside_unit_interval() {
        let c = BackoffChain::new(MAC).unwrap();
        assert!(c.stationary(1.0).is_err());
        assert!(c.stationary(-0.5).is_err());
    }
}
