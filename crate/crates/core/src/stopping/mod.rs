//! Early-stopping rules for lazy ensemble evaluation.
//!
//! Every rule looks only at the leading and runner-up vote counts. The
//! Gaussian rules (GLEE) put a normal-approximation confidence bound on the
//! leading class's vote share and stop once the bound clears one half; they
//! differ in one- versus two-tailed critical values and in whether the
//! bound shrinks by the finite population correction as the unqueried pool
//! empties. MLEE stops once the Beta-Binomial posterior probability that the
//! leading class wins reaches `1 - alpha`. All rules stop when every member
//! has voted.

mod mlee;
mod normal;
mod table;

use std::fmt;
use std::str::FromStr;

pub use mlee::{mlee_prob_leading_wins, prob_leading_wins_with, LnFactorial};
pub use normal::{normal_quantile, upper_critical};
pub use table::{StoppingTable, NEVER};

use crate::error::{Error, Result};
use crate::scalar::Probability;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rule {
    /// One-tailed Gaussian.
    G1,
    /// Two-tailed Gaussian.
    G2,
    /// One-tailed Gaussian with finite population correction.
    G1Fpc,
    /// Two-tailed Gaussian with finite population correction.
    G2Fpc,
    /// Beta-Binomial posterior; binary problems only.
    Mlee,
    /// Never stop early.
    Full,
}

impl Rule {
    /// The five lazy rules, in reporting order.
    pub const LAZY: [Rule; 5] = [Rule::Mlee, Rule::G1, Rule::G2, Rule::G1Fpc, Rule::G2Fpc];

    pub fn is_gaussian(self) -> bool {
        matches!(self, Rule::G1 | Rule::G2 | Rule::G1Fpc | Rule::G2Fpc)
    }

    pub fn one_tailed(self) -> bool {
        matches!(self, Rule::G1 | Rule::G1Fpc)
    }

    pub fn finite_population(self) -> bool {
        matches!(self, Rule::G1Fpc | Rule::G2Fpc)
    }

    pub fn name(self) -> &'static str {
        match self {
            Rule::G1 => "g1",
            Rule::G2 => "g2",
            Rule::G1Fpc => "g1-fpc",
            Rule::G2Fpc => "g2-fpc",
            Rule::Mlee => "mlee",
            Rule::Full => "full",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "g1" => Ok(Rule::G1),
            "g2" => Ok(Rule::G2),
            "g1-fpc" | "g1fpc" | "glee" => Ok(Rule::G1Fpc),
            "g2-fpc" | "g2fpc" => Ok(Rule::G2Fpc),
            "mlee" | "madrid" => Ok(Rule::Mlee),
            "full" => Ok(Rule::Full),
            other => Err(Error::validation(format!("unknown stopping rule `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopConfig<P> {
    pub rule: Rule,
    /// Tolerated probability that the lazy and full predictions differ.
    pub alpha: P,
    pub ensemble_size: usize,
}

impl<P: Probability> StopConfig<P> {
    pub fn new(rule: Rule, alpha: P, ensemble_size: usize) -> Result<Self> {
        let cfg = StopConfig {
            rule,
            alpha,
            ensemble_size,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > P::zero() && self.alpha < P::one()) {
            return Err(Error::validation(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if self.ensemble_size == 0 {
            return Err(Error::validation("ensemble size must be at least 1"));
        }
        Ok(())
    }

    /// Votes required before the rule may stop.
    ///
    /// The Gaussian rules need enough votes for the normal approximation;
    /// the posterior rule is exact and may stop after any vote.
    pub fn min_votes(&self) -> Result<usize> {
        match self.rule {
            r if r.is_gaussian() => min_votes(self.alpha),
            Rule::Mlee => Ok(1),
            _ => Ok(self.ensemble_size),
        }
    }
}

/// Minimum votes before a Gaussian rule may stop: 15 for `alpha >= 1e-2`,
/// 30 for `1e-3 <= alpha < 1e-2`, 45 below.
pub fn min_votes<P: Probability>(alpha: P) -> Result<usize> {
    if !(alpha > P::zero() && alpha < P::one()) {
        return Err(Error::validation(format!("alpha {alpha} outside (0, 1)")));
    }
    // Compare in f64 so that f32 alphas like 1e-3 land in the intended bucket.
    let a = alpha.to_f64().unwrap_or(0.0);
    let a = (a * 1e9).round() / 1e9;
    Ok(if a >= 1e-2 {
        15
    } else if a >= 1e-3 {
        30
    } else {
        45
    })
}

/// A Gaussian rule with its critical value resolved.
#[derive(Debug, Clone, Copy)]
pub struct GleeRule<P> {
    z: P,
    finite_population: bool,
    m: usize,
    n_min: usize,
}

impl<P: Probability> GleeRule<P> {
    pub fn new(cfg: &StopConfig<P>) -> Result<Self> {
        cfg.validate()?;
        if !cfg.rule.is_gaussian() {
            return Err(Error::validation(format!("{} is not a Gaussian rule", cfg.rule)));
        }
        let tail = if cfg.rule.one_tailed() {
            cfg.alpha
        } else {
            cfg.alpha / P::lit(2.0)
        };
        Ok(GleeRule {
            z: upper_critical(tail)?,
            finite_population: cfg.rule.finite_population(),
            m: cfg.ensemble_size,
            n_min: cfg.min_votes()?,
        })
    }

    pub fn critical_value(&self) -> P {
        self.z
    }

    pub fn min_votes(&self) -> usize {
        self.n_min
    }

    /// Finite population correction after `n` votes; 1 while `n <= 0.05 m`.
    pub fn correction(&self, n: usize) -> P {
        if self.finite_population && 20 * n > self.m {
            (P::count(self.m - n) / P::count(self.m - 1)).sqrt()
        } else {
            P::one()
        }
    }

    /// Lower confidence bound on the leading class's vote share.
    pub fn lower_bound(&self, v_lead: usize, v_run: usize) -> P {
        let n = v_lead + v_run;
        let p = P::count(v_lead) / P::count(n);
        let sigma = (p * (P::one() - p)).sqrt();
        let delta = self.z * sigma / P::count(n).sqrt();
        p - self.correction(n) * delta
    }

    pub fn stops(&self, v_lead: usize, v_run: usize) -> bool {
        let n = v_lead + v_run;
        if n >= self.m {
            return true;
        }
        if n < self.n_min || n == 0 {
            return false;
        }
        self.lower_bound(v_lead, v_run) > P::lit(0.5)
    }

    /// Smallest leading count that stops after `n` votes, solved from the
    /// quadratic in the vote share instead of by search. `None` if no
    /// count up to `n` stops.
    pub fn closed_form_threshold(&self, n: usize) -> Option<usize> {
        if n >= self.m {
            return Some(n.div_ceil(2));
        }
        if n < self.n_min || n == 0 {
            return None;
        }
        // p - rho*z*sqrt(p(1-p)/n) > 1/2 with p > 1/2
        //   <=> p > 1/2 + 1/2 * sqrt(c / (1 + c)),  c = rho^2 z^2 / n.
        let rho = self.correction(n).to_f64()?;
        let z = self.z.to_f64()?;
        let c = rho * rho * z * z / n as f64;
        let share = 0.5 + 0.5 * (c / (1.0 + c)).sqrt();
        let k = (share * n as f64).floor() as usize + 1;
        (k <= n).then_some(k.max(n.div_ceil(2)))
    }
}

/// Direct Gaussian stopping test for `v_lead` leading and `v_run` runner-up votes.
pub fn glee_should_stop<P: Probability>(v_lead: usize, v_run: usize, cfg: &StopConfig<P>) -> Result<bool> {
    check_votes(v_lead, v_run, cfg.ensemble_size)?;
    Ok(GleeRule::new(cfg)?.stops(v_lead, v_run))
}

fn check_votes(v_lead: usize, v_run: usize, m: usize) -> Result<()> {
    if v_lead + v_run > m {
        return Err(Error::validation(format!(
            "{} votes cast exceed the ensemble size {m}",
            v_lead + v_run
        )));
    }
    Ok(())
}

/// Any rule, prepared for repeated direct evaluation.
#[derive(Debug, Clone)]
pub enum StopRule<P> {
    Gaussian(GleeRule<P>),
    Posterior {
        factorials: LnFactorial<P>,
        confidence: P,
        m: usize,
    },
    Full {
        m: usize,
    },
}

impl<P: Probability> StopRule<P> {
    pub fn new(cfg: &StopConfig<P>) -> Result<Self> {
        cfg.validate()?;
        Ok(match cfg.rule {
            Rule::Mlee => StopRule::Posterior {
                factorials: LnFactorial::new(cfg.ensemble_size + 1),
                confidence: P::one() - cfg.alpha,
                m: cfg.ensemble_size,
            },
            Rule::Full => StopRule::Full { m: cfg.ensemble_size },
            _ => StopRule::Gaussian(GleeRule::new(cfg)?),
        })
    }

    pub fn stops(&self, v_lead: usize, v_run: usize) -> bool {
        match self {
            StopRule::Gaussian(g) => g.stops(v_lead, v_run),
            StopRule::Posterior {
                factorials,
                confidence,
                m,
            } => {
                let n = v_lead + v_run;
                n >= *m || (n > 0 && prob_leading_wins_with(v_lead, v_run, *m, factorials) >= *confidence)
            }
            StopRule::Full { m } => v_lead + v_run >= *m,
        }
    }
}

/// Direct (table-free) stopping test for any rule.
pub fn should_stop<P: Probability>(v_lead: usize, v_run: usize, cfg: &StopConfig<P>) -> Result<bool> {
    check_votes(v_lead, v_run, cfg.ensemble_size)?;
    Ok(StopRule::new(cfg)?.stops(v_lead, v_run))
}
