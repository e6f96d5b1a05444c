//! Bayesian stopping for binary votes.
//!
//! With a uniform prior on the vote proportion, `a - 1` leading votes and
//! `b - 1` runner-up votes give a Beta(a, b) posterior, and the number of
//! leading votes among the `r` unqueried members is Beta-Binomial(r; a, b).
//! All parameters are integers, so every Beta function reduces to
//! factorials, which are kept in log space.

use crate::error::{Error, Result};
use crate::scalar::Probability;

/// `ln k!` for `k = 0..=max`.
#[derive(Debug, Clone)]
pub struct LnFactorial<P> {
    table: Vec<P>,
}

impl<P: Probability> LnFactorial<P> {
    pub fn new(max: usize) -> Self {
        let mut table = Vec::with_capacity(max + 1);
        let mut acc = 0.0f64;
        table.push(P::zero());
        for k in 1..=max {
            acc += (k as f64).ln();
            table.push(P::lit(acc));
        }
        LnFactorial { table }
    }

    pub fn max(&self) -> usize {
        self.table.len() - 1
    }

    #[inline]
    pub fn get(&self, k: usize) -> P {
        self.table[k]
    }

    /// `ln B(x, y)` for positive integers.
    #[inline]
    fn ln_beta(&self, x: usize, y: usize) -> P {
        self.get(x - 1) + self.get(y - 1) - self.get(x + y - 1)
    }

    #[inline]
    fn ln_choose(&self, n: usize, k: usize) -> P {
        self.get(n) - self.get(k) - self.get(n - k)
    }

    /// Beta-Binomial(r; a, b) probability of `j` successes.
    pub fn beta_binomial_pmf(&self, j: usize, r: usize, a: usize, b: usize) -> P {
        let ln_p = self.ln_choose(r, j) + self.ln_beta(j + a, r - j + b) - self.ln_beta(a, b);
        ln_p.exp()
    }
}

/// Posterior probability that the leading class ends with a strict majority
/// of all `m` votes, given `v_lead` and `v_run` votes so far.
///
/// `factorials` must cover `m + 1`.
pub fn prob_leading_wins_with<P: Probability>(v_lead: usize, v_run: usize, m: usize, factorials: &LnFactorial<P>) -> P {
    // Strict majority: v_lead + j > m / 2.
    if 2 * v_lead > m {
        return P::one();
    }
    let n = v_lead + v_run;
    let r = m - n;
    let first = m / 2 + 1 - v_lead;
    if first > r {
        return P::zero();
    }
    let (a, b) = (v_lead + 1, v_run + 1);
    (first..=r).fold(P::zero(), |acc, j| acc + factorials.beta_binomial_pmf(j, r, a, b))
}

/// Posterior probability that the leading class wins the full vote.
pub fn mlee_prob_leading_wins<P: Probability>(v_lead: usize, v_run: usize, m: usize) -> Result<P> {
    if v_lead + v_run > m {
        return Err(Error::validation(format!(
            "{} votes cast exceed the ensemble size {m}",
            v_lead + v_run
        )));
    }
    Ok(prob_leading_wins_with(v_lead, v_run, m, &LnFactorial::new(m + 1)))
}
