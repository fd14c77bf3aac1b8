//! Sequential e-processes built from per-time soft-rank e-values.
//!
//! At time `t` the observation `x_t` gets its own fan and e-value `U_t`, and
//! wealth is updated by `1 - λ + λ U_t` with `λ` chosen from `U_1..U_{t-1}`.

use crate::error::{domain, Result};
use crate::evalues::{bc_evalue, bc_evalue_multichain, check_alpha, log_bc_evalue, log_threshold};
use crate::exchangeable::{chain_statistics, check_sizes, multi_fan};
use crate::kernels::TransitionKernel;
use crate::math::{log_add_exp, log_mean_exp};
use crate::model::StateVector;
use crate::rng::RngStream;
use crate::statistic::TestStatistic;

/// Linear-scale cap on stored `U` values.
pub const U_CAP: f64 = 1e300;

const GOLDEN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BettingStrategy {
    Fixed(f64),
    /// Empirical log-optimal fraction over past `U`s; `initial` is used while
    /// the history carries no information.
    Grapa { initial: f64 },
}

impl BettingStrategy {
    pub fn fixed(lambda: f64) -> Result<Self> {
        check_fraction(lambda)?;
        Ok(Self::Fixed(lambda))
    }

    pub fn grapa(initial: f64) -> Result<Self> {
        check_fraction(initial)?;
        Ok(Self::Grapa { initial })
    }

    /// Fraction for the next step given the `U`s seen so far.
    pub fn lambda(&self, u_history: &[f64]) -> Result<f64> {
        match *self {
            Self::Fixed(l) => Ok(l),
            Self::Grapa { initial } => grapa_lambda(u_history, initial),
        }
    }
}

fn check_fraction(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return domain(format!("betting fraction must lie in [0, 1], got {lambda}"));
    }
    Ok(())
}

fn grapa_objective(u: &[f64], lambda: f64) -> f64 {
    u.iter().map(|&x| (1.0 - lambda + lambda * x).ln()).sum::<f64>() / u.len() as f64
}

/// `argmax_{λ ∈ [0,1]} mean_i log(1 - λ + λ U_i)` by golden-section search.
///
/// Returns `initial` for an empty history or when every `U_i = 1`.
pub fn grapa_lambda(u_history: &[f64], initial: f64) -> Result<f64> {
    check_fraction(initial)?;
    if let Some(bad) = u_history.iter().find(|u| !(**u >= 0.0)) {
        return domain(format!("e-values must be nonnegative, got {bad}"));
    }
    if u_history.iter().all(|&u| u == 1.0) {
        return Ok(initial);
    }
    // concave objective: the sign of the slope at each end settles boundary optima
    let slope0: f64 = u_history.iter().map(|u| u - 1.0).sum();
    if slope0 <= 0.0 {
        return Ok(0.0);
    }
    if u_history.iter().all(|&u| u > 0.0) {
        let slope1: f64 = u_history.iter().map(|u| (u - 1.0) / u).sum();
        if slope1 >= 0.0 {
            return Ok(1.0);
        }
    }
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = grapa_objective(u_history, c);
    let mut fd = grapa_objective(u_history, d);
    while b - a > GOLDEN_TOL {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = grapa_objective(u_history, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = grapa_objective(u_history, d);
        }
    }
    Ok((0.5 * (a + b)).clamp(0.0, 1.0))
}

/// Wealth of a betting e-process. `log_wealth_trace[i]` is the log wealth
/// after step `i + 1`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EProcessState {
    pub t: usize,
    pub log_wealth: f64,
    /// Linear `U_i`, capped at [`U_CAP`].
    pub u_history: Vec<f64>,
    pub lambda_history: Vec<f64>,
    pub log_wealth_trace: Vec<f64>,
}

impl EProcessState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn wealth(&self) -> f64 {
        self.log_wealth.exp()
    }

    /// Bets on an already computed `log U_t`.
    pub fn record(&self, log_u: f64, strategy: &BettingStrategy) -> Result<Self> {
        let lambda = strategy.lambda(&self.u_history)?;
        let log_factor = if lambda == 0.0 {
            0.0
        } else if lambda == 1.0 {
            log_u
        } else {
            log_add_exp((1.0 - lambda).ln(), lambda.ln() + log_u)
        };
        let mut next = self.clone();
        next.t += 1;
        next.log_wealth += log_factor;
        next.u_history.push(log_u.exp().min(U_CAP));
        next.lambda_history.push(lambda);
        next.log_wealth_trace.push(next.log_wealth);
        Ok(next)
    }
}

/// Fan sizes for one time step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FanSize {
    pub steps: usize,
    pub draws: usize,
    pub chains: usize,
}

impl FanSize {
    pub fn new(steps: usize, draws: usize, chains: usize) -> Result<Self> {
        check_sizes(steps, draws)?;
        if chains == 0 {
            return domain("need at least one chain (S >= 1)");
        }
        Ok(Self { steps, draws, chains })
    }
}

/// One update: fans for `x_t` on `rng.child(t)`, then a bet.
pub fn step(
    state: &EProcessState,
    x_t: &StateVector,
    stat: &dyn TestStatistic,
    kernel: &dyn TransitionKernel,
    size: FanSize,
    strategy: &BettingStrategy,
    rng: &RngStream,
) -> Result<EProcessState> {
    let t = state.t as u64 + 1;
    let fans = multi_fan(kernel, x_t, size.steps, size.draws, size.chains, &rng.child(t))?;
    let log_u = if fans.len() == 1 {
        bc_evalue(stat, &fans[0]).log_e
    } else {
        bc_evalue_multichain(stat, &fans)?.log_e
    };
    state.record(log_u, strategy)
}

/// Same streams as [`step`] without materializing the fans; for use inside
/// loops that already run in parallel.
pub fn step_sequential(
    state: &EProcessState,
    x_t: &[f64],
    stat: &dyn TestStatistic,
    kernel: &dyn TransitionKernel,
    size: FanSize,
    strategy: &BettingStrategy,
    rng: &RngStream,
) -> Result<EProcessState> {
    let t_rng = rng.child(state.t as u64 + 1);
    let per_chain: Vec<f64> = (0..size.chains as u64)
        .map(|s| {
            let f = chain_statistics(kernel, stat, x_t, size.steps, size.draws, &t_rng, s);
            log_bc_evalue(f.log_t_x, &f.log_t_draws)
        })
        .collect();
    state.record(log_mean_exp(&per_chain), strategy)
}

/// First 1-based time with `log_wealth >= log(1/alpha)`.
pub fn stopping_time(log_wealth_trace: &[f64], alpha: f64) -> Result<Option<usize>> {
    check_alpha(alpha)?;
    let cut = log_threshold(alpha);
    Ok(log_wealth_trace.iter().position(|&w| w >= cut).map(|i| i + 1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunningAverage {
    /// Chain count at rejection.
    pub stop: Option<usize>,
    /// Log of the running mean after each chain, up to the stop.
    pub log_mean_trace: Vec<f64>,
}

/// Running mean of per-chain log e-values, stopping once it reaches `1/alpha`.
pub fn running_average_stop(chain_log_e: &[f64], alpha: f64) -> Result<RunningAverage> {
    check_alpha(alpha)?;
    let cut = log_threshold(alpha);
    let mut acc = f64::NEG_INFINITY;
    let mut trace = Vec::new();
    for (i, &l) in chain_log_e.iter().enumerate() {
        acc = log_add_exp(acc, l);
        let mean = acc - ((i + 1) as f64).ln();
        trace.push(mean);
        if mean >= cut {
            return Ok(RunningAverage {
                stop: Some(i + 1),
                log_mean_trace: trace,
            });
        }
    }
    Ok(RunningAverage {
        stop: None,
        log_mean_trace: trace,
    })
}

/// Adds independent chains for fixed data `x` one at a time, rejecting at
/// the first `S <= max_chains` where the running mean e-value reaches
/// `1/alpha`. Chain `s` uses the same stream as chain `s` of
/// [`multi_fan`](crate::exchangeable::multi_fan).
#[allow(clippy::too_many_arguments)]
pub fn running_average_lrt(
    x: &StateVector,
    stat: &dyn TestStatistic,
    kernel: &dyn TransitionKernel,
    steps: usize,
    draws: usize,
    alpha: f64,
    max_chains: usize,
    rng: &RngStream,
) -> Result<RunningAverage> {
    check_sizes(steps, draws)?;
    check_alpha(alpha)?;
    if max_chains == 0 {
        return domain("need at least one chain (max_S >= 1)");
    }
    let cut = log_threshold(alpha);
    let mut log_e = Vec::new();
    for s in 0..max_chains as u64 {
        let f = chain_statistics(kernel, stat, x, steps, draws, rng, s);
        log_e.push(log_bc_evalue(f.log_t_x, &f.log_t_draws));
        if log_mean_exp(&log_e) >= cut {
            break;
        }
    }
    running_average_stop(&log_e, alpha)
}
