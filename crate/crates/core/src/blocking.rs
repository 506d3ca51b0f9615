//! Block partitions of a sequence and the blocking inequality.
//!
//! `{1..N}` is cut into `B = ⌊N/(d+1)⌋` blocks of width `d+1`; block `j`
//! covers `[(j−1)(d+1)+1, j(d+1)]` and `r = N − B(d+1)` trailing indices
//! are left over. The first elements of consecutive blocks are `d+1`
//! indices apart (`d` intervening steps), and the joint law of those first
//! elements is within `B·β(d)` of the product of its marginals in total
//! variation. [`tv_exact_oracle`] computes the left-hand side exactly for
//! small finite chains.

use serde::{Deserialize, Serialize};

use crate::bounds::derive_seed;
use crate::error::{invalid, Error, Result};
use crate::mixing::{beta_coefficient, markov_beta_exact, rng_from_seed, MarkovChain, MixingProfile};

/// Inclusive, 1-based index interval of one block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockRange {
    pub first: u64,
    pub last: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockingPlan {
    pub n_total: u64,
    pub delay: u64,
    pub n_blocks: u64,
    pub remainder: u64,
}

impl BlockingPlan {
    pub fn block_width(&self) -> u64 {
        self.delay + 1
    }

    pub fn block_ranges(&self) -> impl Iterator<Item = BlockRange> + '_ {
        let w = self.block_width();
        (1..=self.n_blocks).map(move |j| BlockRange {
            first: (j - 1) * w + 1,
            last: j * w,
        })
    }

    /// 1-based indices of the block-first elements.
    pub fn first_indices(&self) -> impl Iterator<Item = u64> + '_ {
        self.block_ranges().map(|r| r.first)
    }

    /// Share of the sequence treated as independent, `1/(d+1)`.
    pub fn independent_fraction(&self) -> f64 {
        1.0 / self.block_width() as f64
    }

    /// `independent_fraction` as a percentage rounded to one decimal.
    pub fn fraction_label(&self) -> String {
        format!("≈ {:.1}%", 100.0 * self.independent_fraction())
    }
}

/// `d* = ⌈ln N / c₀⌉` (natural logarithm).
pub fn optimal_delay(n: u64, rate: f64) -> Result<u64> {
    if n == 0 {
        return Err(invalid("N must be >= 1"));
    }
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(invalid(format!("mixing rate c0 must be > 0, got {rate}")));
    }
    Ok(((n as f64).ln() / rate).ceil() as u64)
}

pub fn make_blocks(n: u64, delay: u64) -> Result<BlockingPlan> {
    if n == 0 {
        return Err(invalid("N must be >= 1"));
    }
    let w = delay + 1;
    let n_blocks = n / w;
    Ok(BlockingPlan {
        n_total: n,
        delay,
        n_blocks,
        remainder: n - n_blocks * w,
    })
}

/// Residual dependence penalty `N·β(d)`.
pub fn mixing_term(n: u64, delay: u64, profile: &MixingProfile) -> Result<f64> {
    if delay == 0 {
        return Err(invalid("the mixing term needs a delay d >= 1"));
    }
    Ok(n as f64 * beta_coefficient(profile, delay)?)
}

/// Upper bound `B·β(d)` on the dependence among block-first elements.
pub fn tv_bound(plan: &BlockingPlan, profile: &MixingProfile) -> Result<f64> {
    if plan.n_blocks == 0 {
        return Ok(0.0);
    }
    if plan.delay == 0 {
        return Err(invalid("the blocking bound needs a delay d >= 1"));
    }
    Ok(plan.n_blocks as f64 * beta_coefficient(profile, plan.delay)?)
}

/// Largest joint outcome space [`tv_exact_oracle`] will enumerate.
pub const MAX_ENUMERATION: f64 = 1e7;

/// Exact total-variation distance between the joint law of the `B`
/// block-first elements of the stationary chain and the product of their
/// marginals, by enumerating all `S^B` outcomes.
///
/// Consecutive first elements are `d+1` steps apart, so the joint law is
/// `π(x₁)·Π P^{d+1}(xⱼ, xⱼ₊₁)` and every marginal is `π`.
pub fn tv_exact_oracle(chain: &MarkovChain, plan: &BlockingPlan) -> Result<f64> {
    let s = chain.states();
    let b = plan.n_blocks;
    let outcomes = (s as f64).powf(b as f64);
    if outcomes > MAX_ENUMERATION {
        return Err(Error::Infeasible {
            outcomes,
            limit: MAX_ENUMERATION,
        });
    }
    if b <= 1 {
        return Ok(0.0);
    }
    let step = chain.transition_power(plan.delay + 1);
    let pi = chain.stationary();
    let b = b as usize;

    // Depth-first walk over outcome prefixes carrying the running joint
    // and product probabilities.
    let mut total = 0.0;
    let mut stack: Vec<(usize, usize, f64, f64)> = (0..s).map(|x| (1, x, pi[x], pi[x])).collect();
    while let Some((depth, last, joint, product)) = stack.pop() {
        if depth == b {
            total += (joint - product).abs();
            continue;
        }
        for next in 0..s {
            stack.push((depth + 1, next, joint * step[last][next], product * pi[next]));
        }
    }
    Ok(0.5 * total)
}

/// One row of [`blocking_oracle_suite`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockingCheck {
    pub chain_id: usize,
    pub states: usize,
    pub n_blocks: u64,
    pub delay: u64,
    pub tv_exact: f64,
    pub tv_bound: f64,
    pub pass: bool,
}

/// Largest block count and delay covered by [`blocking_oracle_suite`].
pub const SUITE_MAX_BLOCKS: u64 = 6;
pub const SUITE_MAX_DELAY: u64 = 5;

/// Exact TV against `B·β_exact(d)` for `chains` random chains (alternating
/// 2 and 3 states) and every plan with `B ≤ 6`, `d ∈ 1..=5`.
pub fn blocking_oracle_suite(chains: usize, seed: u64) -> Result<Vec<BlockingCheck>> {
    let mut rows = Vec::new();
    for chain_id in 0..chains {
        let states = 2 + chain_id % 2;
        let mut rng = rng_from_seed(derive_seed(seed, &[chain_id as u64]));
        let chain = MarkovChain::random(states, 0.0, &mut rng)?;
        for delay in 1..=SUITE_MAX_DELAY {
            let beta = markov_beta_exact(&chain, delay)?;
            for n_blocks in 1..=SUITE_MAX_BLOCKS {
                let plan = make_blocks(n_blocks * (delay + 1), delay)?;
                let tv_exact = tv_exact_oracle(&chain, &plan)?;
                let tv_bound = n_blocks as f64 * beta;
                rows.push(BlockingCheck {
                    chain_id,
                    states,
                    n_blocks,
                    delay,
                    tv_exact,
                    tv_bound,
                    pass: tv_exact <= tv_bound + 1e-12,
                });
            }
        }
    }
    Ok(rows)
}
