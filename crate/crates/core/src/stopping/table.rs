use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Rule, StopConfig, StopRule};
use crate::error::{Error, Result};
use crate::scalar::Probability;

/// Marks vote counts at which no leading tally stops.
pub const NEVER: u32 = u32::MAX;

/// Per-vote-count stopping thresholds for one ensemble size.
///
/// After `n` votes the rule stops iff the leading class holds at least
/// `k_min[n]` of them. Building the table is the only expensive step;
/// lookups are a comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppingTable<P> {
    rule: Rule,
    alpha: P,
    m: usize,
    n_min: usize,
    k_min: Vec<u32>,
}

impl<P: Probability> StoppingTable<P> {
    /// Builds the table. Gaussian rules correct the closed-form threshold
    /// by a step or two for each `n`; MLEE walks the threshold from the previous `n`, so its
    /// total cost stays within `O(m^2)` posterior terms.
    #[allow(clippy::needless_range_loop)]
    pub fn build(cfg: &StopConfig<P>) -> Result<Self> {
        let rule = StopRule::new(cfg)?;
        let m = cfg.ensemble_size;
        let n_min = cfg.min_votes()?;
        if m > NEVER as usize - 1 {
            return Err(Error::validation(format!("ensemble size {m} is too large for a table")));
        }
        let mut k_min = vec![NEVER; m + 1];
        let first = n_min.clamp(1, m);
        match cfg.rule {
            Rule::Full => {}
            Rule::Mlee => {
                let mut k = first.div_ceil(2);
                for n in first..m {
                    let lo = n.div_ceil(2);
                    k = k.clamp(lo, n);
                    let stops = |v: usize| rule.stops(v, n - v);
                    if stops(k) {
                        while k > lo && stops(k - 1) {
                            k -= 1;
                        }
                        k_min[n] = k as u32;
                    } else if let Some(found) = (k + 1..=n).find(|&v| stops(v)) {
                        k = found;
                        k_min[n] = k as u32;
                    }
                }
            }
            _ => {
                let StopRule::Gaussian(glee) = &rule else {
                    unreachable!("non-Gaussian rules are handled above")
                };
                for n in first..m {
                    // Start from the closed-form root and settle on the exact
                    // smallest stopping count; stopping is monotone in v.
                    let lo = n.div_ceil(2);
                    let mut k = glee.closed_form_threshold(n).unwrap_or(n + 1).clamp(lo, n + 1);
                    while k > lo && glee.stops(k - 1, n + 1 - k) {
                        k -= 1;
                    }
                    while k <= n && !glee.stops(k, n - k) {
                        k += 1;
                    }
                    if k <= n {
                        k_min[n] = k as u32;
                    }
                }
            }
        }
        // Every member has voted: any leading tally stands.
        k_min[m] = m.div_ceil(2) as u32;
        Ok(StoppingTable {
            rule: cfg.rule,
            alpha: cfg.alpha,
            m,
            n_min,
            k_min,
        })
    }

    pub fn rule(&self) -> Rule {
        self.rule
    }

    pub fn alpha(&self) -> P {
        self.alpha
    }

    pub fn ensemble_size(&self) -> usize {
        self.m
    }

    pub fn min_votes(&self) -> usize {
        self.n_min
    }

    /// Threshold after `n` votes, or `None` if stopping is impossible there.
    pub fn threshold(&self, n: usize) -> Option<usize> {
        match self.k_min.get(n) {
            Some(&k) if k != NEVER => Some(k as usize),
            _ => None,
        }
    }

    /// Table lookup for `v_lead >= v_run`.
    #[inline]
    pub fn should_stop(&self, v_lead: usize, v_run: usize) -> bool {
        let n = v_lead + v_run;
        match self.k_min.get(n) {
            Some(&k) => k != NEVER && v_lead >= k as usize,
            None => false,
        }
    }

    /// CSV `n,k_min` for `n` in `[n_min, m]`; unreachable thresholds print `never`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,k_min\n");
        for n in self.n_min.min(self.m)..=self.m {
            match self.threshold(n) {
                Some(k) => writeln!(out, "{n},{k}"),
                None => writeln!(out, "{n},never"),
            }
            .expect("writing to a String");
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}
