//! Exchangeable draws by backward-then-forward simulation.
//!
//! From the observed state `x` the chain runs `steps` reverse transitions to
//! an anchor; each of the `draws` outputs then runs `steps` forward
//! transitions from that anchor on its own random stream. Under the null,
//! `x` and the draws are exchangeable.
//!
//! Stream layout below the caller's prefix: `chain / phase / draw`, with
//! phase 0 for the single backward run and phase 1 for the forward fan.

use rayon::prelude::*;

use crate::error::{domain, Result};
use crate::kernels::{run_backward, run_forward, TransitionKernel};
use crate::model::StateVector;
use crate::rng::{RngStream, PHASE_BACKWARD, PHASE_FORWARD};
use crate::statistic::TestStatistic;

/// Streams consumed by one fan.
#[derive(Debug, Clone, PartialEq)]
pub struct FanSeeds {
    /// Stream of the backward run.
    pub backward: RngStream,
    /// Draw `m` (0-based) uses `forward.child(m)`.
    pub forward: RngStream,
}

impl FanSeeds {
    fn for_chain(rng: &RngStream, chain: u64) -> Self {
        let c = rng.child(chain);
        Self {
            backward: c.child(PHASE_BACKWARD),
            forward: c.child(PHASE_FORWARD),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExchangeableFan {
    pub x: StateVector,
    pub anchor: StateVector,
    pub draws: Vec<StateVector>,
    pub steps: usize,
    pub seeds: FanSeeds,
}

impl ExchangeableFan {
    pub fn num_draws(&self) -> usize {
        self.draws.len()
    }

    /// Fan restricted to its first `m` draws, itself a valid fan.
    pub fn truncated(&self, m: usize) -> Self {
        Self {
            draws: self.draws[..m.min(self.draws.len())].to_vec(),
            ..self.clone()
        }
    }
}

pub(crate) fn check_sizes(steps: usize, draws: usize) -> Result<()> {
    if steps == 0 {
        return domain("fan needs at least one step (J >= 1)");
    }
    if draws == 0 {
        return domain("fan needs at least one draw (M >= 1)");
    }
    Ok(())
}

fn fan_for_chain(
    kernel: &dyn TransitionKernel,
    x: &StateVector,
    steps: usize,
    draws: usize,
    rng: &RngStream,
    chain: u64,
) -> ExchangeableFan {
    let seeds = FanSeeds::for_chain(rng, chain);
    let anchor = run_backward(kernel, x, steps, &mut seeds.backward.rng());
    let forward = &seeds.forward;
    let out: Vec<StateVector> = (0..draws as u64)
        .into_par_iter()
        .map(|m| {
            let y = run_forward(kernel, &anchor, steps, &mut forward.child(m).rng());
            StateVector::from_vec_unchecked(y)
        })
        .collect();
    ExchangeableFan {
        x: x.clone(),
        anchor: StateVector::from_vec_unchecked(anchor),
        draws: out,
        steps,
        seeds,
    }
}

/// One anchor and `draws` forward runs; draws are generated in parallel.
pub fn parallel_fan(
    kernel: &dyn TransitionKernel,
    x: &StateVector,
    steps: usize,
    draws: usize,
    rng: &RngStream,
) -> Result<ExchangeableFan> {
    check_sizes(steps, draws)?;
    Ok(fan_for_chain(kernel, x, steps, draws, rng, 0))
}

/// `chains` independent fans, each with its own backward run from `x`.
/// Chain 0 coincides with [`parallel_fan`] on the same stream.
pub fn multi_fan(
    kernel: &dyn TransitionKernel,
    x: &StateVector,
    steps: usize,
    draws: usize,
    chains: usize,
    rng: &RngStream,
) -> Result<Vec<ExchangeableFan>> {
    check_sizes(steps, draws)?;
    if chains == 0 {
        return domain("need at least one chain (S >= 1)");
    }
    Ok((0..chains as u64)
        .map(|s| fan_for_chain(kernel, x, steps, draws, rng, s))
        .collect())
}

/// Statistic values of one fan, without keeping the states.
#[derive(Debug, Clone, PartialEq)]
pub struct FanStatistics {
    pub log_t_x: f64,
    pub log_t_draws: Vec<f64>,
    pub anchor: Vec<f64>,
}

/// Sequential fan-and-evaluate over the same streams as [`multi_fan`].
///
/// Produces exactly the statistics one would get by evaluating `stat` on the
/// materialized fans; intended for simulation loops that already parallelize
/// across replicates.
pub fn fan_statistics(
    kernel: &dyn TransitionKernel,
    stat: &dyn TestStatistic,
    x: &[f64],
    steps: usize,
    draws: usize,
    chains: usize,
    rng: &RngStream,
) -> Result<Vec<FanStatistics>> {
    check_sizes(steps, draws)?;
    if chains == 0 {
        return domain("need at least one chain (S >= 1)");
    }
    Ok((0..chains as u64)
        .map(|s| chain_statistics(kernel, stat, x, steps, draws, rng, s))
        .collect())
}

/// Statistics of chain `chain` alone; sizes are not checked.
pub(crate) fn chain_statistics(
    kernel: &dyn TransitionKernel,
    stat: &dyn TestStatistic,
    x: &[f64],
    steps: usize,
    draws: usize,
    rng: &RngStream,
    chain: u64,
) -> FanStatistics {
    let seeds = FanSeeds::for_chain(rng, chain);
    let anchor = run_backward(kernel, x, steps, &mut seeds.backward.rng());
    let log_t_draws = (0..draws as u64)
        .map(|m| {
            let y = run_forward(kernel, &anchor, steps, &mut seeds.forward.child(m).rng());
            stat.log_t(&y)
        })
        .collect();
    FanStatistics {
        log_t_x: stat.log_t(x),
        log_t_draws,
        anchor,
    }
}
