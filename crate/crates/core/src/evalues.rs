//! Soft-rank e-values, Monte Carlo p-values, multi-chain averages,
//! finite composite nulls and confidence regions.
//!
//! With `t_0 = log T(x)` and `t_m = log T(y_m)`,
//!
//! ```text
//! log E = log(M + 1) + t_0 - logsumexp(t_0, t_1, ..., t_M)
//! ```
//!
//! which is at most `log(M + 1)` and is `-inf` whenever `t_0 = -inf`
//! (including the all-zero `0/0 = 0` case).

use rayon::prelude::*;

use crate::error::{config, domain, Result};
use crate::exchangeable::{parallel_fan, ExchangeableFan};
use crate::kernels::TransitionKernel;
use crate::math::{log_mean_exp, log_sum_exp};
use crate::model::StateVector;
use crate::rng::RngStream;
use crate::statistic::TestStatistic;

#[derive(Debug, Clone, PartialEq)]
pub struct EValueResult {
    pub log_e: f64,
    /// Draws per chain.
    pub m: usize,
    /// Number of chains averaged.
    pub s: usize,
    pub statistic_id: String,
    /// Per-chain (or per-null) log e-values, when more than one was combined.
    pub components: Option<Vec<f64>>,
}

impl EValueResult {
    pub fn e(&self) -> f64 {
        self.log_e.exp()
    }

    /// `e >= 1/alpha`, compared in log space.
    pub fn rejects(&self, alpha: f64) -> bool {
        self.log_e >= log_threshold(alpha)
    }
}

/// `log(1/alpha)`.
pub fn log_threshold(alpha: f64) -> f64 {
    (1.0 / alpha).ln()
}

/// Log soft-rank e-value from statistic values.
pub fn log_bc_evalue(log_t_x: f64, log_t_draws: &[f64]) -> f64 {
    if log_t_x == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let m = log_t_draws.len();
    let mut pooled = Vec::with_capacity(m + 1);
    pooled.push(log_t_x);
    pooled.extend_from_slice(log_t_draws);
    let lse = log_sum_exp(&pooled);
    // t_0 is one of the pooled terms, so this is <= log(M + 1) up to rounding
    (((m + 1) as f64).ln() + log_t_x - lse).min(((m + 1) as f64).ln())
}

/// Monte Carlo p-value `(1 + #{m : T(y_m) >= T(x)}) / (M + 1)`.
pub fn gof_pvalue_from_logs(log_t_x: f64, log_t_draws: &[f64]) -> f64 {
    let at_least = log_t_draws.iter().filter(|&&t| t >= log_t_x).count();
    (1 + at_least) as f64 / (log_t_draws.len() + 1) as f64
}

fn fan_logs(stat: &dyn TestStatistic, fan: &ExchangeableFan) -> (f64, Vec<f64>) {
    let draws = fan.draws.iter().map(|y| stat.log_t(y)).collect();
    (stat.log_t(&fan.x), draws)
}

pub fn bc_evalue(stat: &dyn TestStatistic, fan: &ExchangeableFan) -> EValueResult {
    let (tx, ty) = fan_logs(stat, fan);
    EValueResult {
        log_e: log_bc_evalue(tx, &ty),
        m: fan.num_draws(),
        s: 1,
        statistic_id: stat.id().to_string(),
        components: None,
    }
}

pub fn gof_pvalue(stat: &dyn TestStatistic, fan: &ExchangeableFan) -> f64 {
    let (tx, ty) = fan_logs(stat, fan);
    gof_pvalue_from_logs(tx, &ty)
}

/// Average of per-chain e-values, in log space.
pub fn bc_evalue_multichain(
    stat: &dyn TestStatistic,
    fans: &[ExchangeableFan],
) -> Result<EValueResult> {
    if fans.is_empty() {
        return config("multi-chain e-value needs at least one fan");
    }
    let components: Vec<f64> = fans.iter().map(|f| bc_evalue(stat, f).log_e).collect();
    Ok(EValueResult {
        log_e: log_mean_exp(&components),
        m: fans[0].num_draws(),
        s: fans.len(),
        statistic_id: stat.id().to_string(),
        components: Some(components),
    })
}

/// Minimum of per-null e-values; `stats[r]` is evaluated on `fans[r]`, which
/// must come from a kernel stationary for null member `r`.
pub fn composite_null_evalue(
    stats: &[&dyn TestStatistic],
    fans: &[ExchangeableFan],
) -> Result<EValueResult> {
    if stats.is_empty() {
        return config("composite null needs at least one member");
    }
    if stats.len() != fans.len() {
        return config(format!(
            "composite null has {} statistics but {} fans",
            stats.len(),
            fans.len()
        ));
    }
    let components: Vec<f64> = stats
        .iter()
        .zip(fans)
        .map(|(s, f)| bc_evalue(*s, f).log_e)
        .collect();
    let log_e = components.iter().copied().fold(f64::INFINITY, f64::min);
    let ids: Vec<&str> = stats.iter().map(|s| s.id()).collect();
    Ok(EValueResult {
        log_e,
        m: fans[0].num_draws(),
        s: 1,
        statistic_id: format!("min[{}]", ids.join(", ")),
        components: Some(components),
    })
}

#[derive(Debug, Clone)]
pub struct RegionMember<P> {
    pub param: P,
    pub result: EValueResult,
    pub in_region: bool,
}

/// Grid points whose e-value stays below `1/alpha`. All per-point e-values
/// are kept so the region can be recomputed for another alpha.
#[derive(Debug, Clone)]
pub struct ConfidenceRegion<P> {
    pub alpha: f64,
    pub members: Vec<RegionMember<P>>,
}

impl<P: Clone> ConfidenceRegion<P> {
    pub fn region(&self) -> impl Iterator<Item = &P> {
        self.members.iter().filter(|m| m.in_region).map(|m| &m.param)
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let cut = log_threshold(alpha);
        Ok(Self {
            alpha,
            members: self
                .members
                .iter()
                .map(|m| RegionMember {
                    param: m.param.clone(),
                    result: m.result.clone(),
                    in_region: m.result.log_e < cut,
                })
                .collect(),
        })
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return domain(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    Ok(())
}

/// Statistic and kernel for one grid point.
pub type NullComponents = (Box<dyn TestStatistic>, Box<dyn TransitionKernel>);

/// Runs one fan per grid point (point `i` on `rng.child(i)`) and keeps the
/// points with `e < 1/alpha`. Grid points are processed in parallel.
pub fn confidence_region<P, F>(
    grid: &[P],
    builder: F,
    x: &StateVector,
    steps: usize,
    draws: usize,
    alpha: f64,
    rng: &RngStream,
) -> Result<ConfidenceRegion<P>>
where
    P: Clone + Send + Sync,
    F: Fn(&P) -> Result<NullComponents> + Sync,
{
    check_alpha(alpha)?;
    if grid.is_empty() {
        return config("confidence region needs a nonempty grid");
    }
    let cut = log_threshold(alpha);
    let members = grid
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let (stat, kernel) = builder(p)?;
            let fan = parallel_fan(kernel.as_ref(), x, steps, draws, &rng.child(i as u64))?;
            let result = bc_evalue(stat.as_ref(), &fan);
            let in_region = result.log_e < cut;
            Ok(RegionMember {
                param: p.clone(),
                result,
                in_region,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConfidenceRegion { alpha, members })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{ar1_kernel, exact_kernel, Ar1Kernel};
    use crate::model::{gaussian_model, LogModel};
    use crate::statistic::{FnStatistic, ulr_statistic};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn fan_with(x: f64, draws: &[f64]) -> ExchangeableFan {
        let seeds = crate::exchangeable::FanSeeds {
            backward: RngStream::new(0),
            forward: RngStream::new(0),
        };
        ExchangeableFan {
            x: StateVector::scalar(x).unwrap(),
            anchor: StateVector::scalar(x).unwrap(),
            draws: draws.iter().map(|&d| StateVector::scalar(d).unwrap()).collect(),
            steps: 1,
            seeds,
        }
    }

    /// log T(v) = log v, with v <= 0 meaning T = 0.
    fn identity_stat() -> FnStatistic<impl Fn(&[f64]) -> f64 + Send + Sync> {
        FnStatistic::new("identity", |v: &[f64]| if v[0] > 0.0 { v[0].ln() } else { f64::NEG_INFINITY })
    }

    #[test]
    fn hand_arithmetic() {
        let s = identity_stat();
        // 3 * 2 / (2 + 1 + 1) = 1.5
        let r = bc_evalue(&s, &fan_with(2.0, &[1.0, 1.0]));
        assert!((r.e() - 1.5).abs() < 1e-14);
        let all_equal = bc_evalue(&s, &fan_with(3.0, &[3.0; 7]));
        assert!(all_equal.log_e.abs() < 1e-15);
        let max = bc_evalue(&s, &fan_with(0.5, &[0.0; 9]));
        assert!((max.e() - 10.0).abs() < 1e-12);
        let zero = bc_evalue(&s, &fan_with(0.0, &[0.0; 4]));
        assert_eq!(zero.log_e, f64::NEG_INFINITY);
        let zero_x = bc_evalue(&s, &fan_with(0.0, &[1.0; 4]));
        assert_eq!(zero_x.log_e, f64::NEG_INFINITY);
    }

    #[test]
    fn pvalue_ranks() {
        let s = identity_stat();
        let largest: Vec<f64> = (1..=19).map(|i| i as f64).collect();
        assert!((gof_pvalue(&s, &fan_with(100.0, &largest)) - 0.05).abs() < 1e-15);
        assert_eq!(gof_pvalue(&s, &fan_with(0.5, &largest)), 1.0);
        assert_eq!(gof_pvalue(&s, &fan_with(2.0, &[2.0; 5])), 1.0);
    }

    #[test]
    fn multichain_examples() {
        let s = identity_stat();
        let f = fan_with(2.0, &[1.0, 1.0]);
        let single = bc_evalue_multichain(&s, std::slice::from_ref(&f)).unwrap();
        assert_eq!(single.log_e, bc_evalue(&s, &f).log_e);
        assert!(bc_evalue_multichain(&s, &[]).is_err());
        assert!((log_mean_exp(&[2f64.ln(), 2f64.ln()]) - 2f64.ln()).abs() < 1e-15);
        assert!((log_mean_exp(&[4f64.ln(), f64::NEG_INFINITY]) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn composite_examples() {
        let s = identity_stat();
        let f = fan_with(2.0, &[1.0, 1.0]);
        let single = composite_null_evalue(&[&s], std::slice::from_ref(&f)).unwrap();
        assert_eq!(single.log_e, bc_evalue(&s, &f).log_e);
        // e-values 3.0, 1.2 and 7.5 from single-draw fans: 2T/(T + T_y)
        let fans = [fan_with(3.0, &[1.0]), fan_with(3.0, &[2.0]), fan_with(15.0, &[-1.0])];
        let r = composite_null_evalue(&[&s, &s, &s], &fans).unwrap();
        assert!((r.e() - 1.2).abs() < 1e-14);
        assert!(matches!(
            composite_null_evalue(&[&s, &s], &fans),
            Err(crate::Error::Config(_))
        ));
    }

    proptest! {
        #[test]
        fn bounded_by_m_plus_one(tx in -50.0f64..50.0, ty in prop::collection::vec(-50.0f64..50.0, 1..40)) {
            let l = log_bc_evalue(tx, &ty);
            prop_assert!(l <= ((ty.len() + 1) as f64).ln());
            prop_assert!(l.is_finite());
        }

        #[test]
        fn invariant_to_constant_offset(tx in -50.0f64..50.0, ty in prop::collection::vec(-50.0f64..50.0, 1..40), c in -300.0f64..300.0) {
            let shifted: Vec<f64> = ty.iter().map(|v| v + c).collect();
            prop_assert!((log_bc_evalue(tx + c, &shifted) - log_bc_evalue(tx, &ty)).abs() < 1e-12);
        }
    }

    #[test]
    fn offset_invariance_through_statistics() {
        let q: Arc<dyn LogModel> = Arc::new(gaussian_model(1.0, 1.0, 3).unwrap());
        let p: Arc<dyn LogModel> = Arc::new(gaussian_model(0.0, 1.0, 3).unwrap());
        let t = ulr_statistic(q, p.clone());
        let shifted = FnStatistic::new("shifted", |x: &[f64]| t.log_t(x) + 123.456);
        let fan = parallel_fan(
            &exact_kernel(p).unwrap(),
            &StateVector::new(vec![0.2, 1.1, -0.4]).unwrap(),
            1,
            200,
            &RngStream::new(4),
        )
        .unwrap();
        let a = bc_evalue(&t, &fan).log_e;
        let b = bc_evalue(&shifted, &fan).log_e;
        assert!((a - b).abs() < 1e-12);
    }

    fn mean_shift_builder(
        n: usize,
    ) -> impl Fn(&f64) -> Result<NullComponents> + Sync {
        move |theta: &f64| {
            let th = *theta;
            let stat: Box<dyn TestStatistic> = Box::new(FnStatistic::new(
                format!("mle_vs_{th}"),
                move |x: &[f64]| {
                    let m = x.iter().sum::<f64>() / x.len() as f64;
                    0.5 * n as f64 * (m - th).powi(2)
                },
            ));
            let kernel: Box<dyn TransitionKernel> = Box::new(Ar1Kernel::with_center(0.5, th)?);
            Ok((stat, kernel))
        }
    }

    #[test]
    fn region_consistency_and_monotonicity() {
        let grid = vec![-1.0, -0.5, 0.0, 0.5, 1.0];
        let g = gaussian_model(0.0, 1.0, 20).unwrap();
        let x = g.sample(&mut RngStream::new(1).rng()).unwrap();
        let s = RngStream::new(2);
        let r = confidence_region(&grid, mean_shift_builder(20), &x, 1, 99, 0.1, &s).unwrap();
        assert_eq!(r.members.len(), 5);
        for m in &r.members {
            assert_eq!(m.in_region, m.result.e() < 10.0);
        }
        let tighter = r.with_alpha(0.01).unwrap();
        assert!(tighter.region().count() >= r.region().count());
        let rerun = confidence_region(&grid, mean_shift_builder(20), &x, 1, 99, 0.01, &s).unwrap();
        let a: Vec<f64> = tighter.region().copied().collect();
        let b: Vec<f64> = rerun.region().copied().collect();
        assert_eq!(a, b);
        let one = confidence_region(&[0.0], mean_shift_builder(20), &x, 1, 9, 0.1, &s).unwrap();
        assert_eq!(one.members.len(), 1);
        assert!(confidence_region::<f64, _>(&[], mean_shift_builder(20), &x, 1, 9, 0.1, &s).is_err());
        assert!(confidence_region(&grid, mean_shift_builder(20), &x, 1, 9, 1.0, &s).is_err());
        // alpha close to one: every point with e >= ~1 drops out
        let loose = r.with_alpha(0.9999).unwrap();
        for m in &loose.members {
            assert_eq!(m.in_region, m.result.log_e < (1.0f64 / 0.9999).ln());
        }
    }

    #[test]
    fn ar1_kernel_used_for_region_is_valid_for_its_center() {
        // sanity: the centered AR(1) kernel used above leaves N(theta, 1) invariant
        let k = Ar1Kernel::with_center(0.5, 2.0).unwrap();
        let mut rng = RngStream::new(3).rng();
        let mut acc = 0.0;
        let n = 50_000;
        for _ in 0..n {
            let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
            acc += k.step(&[2.0 + z], &mut rng)[0];
        }
        assert!((acc / n as f64 - 2.0).abs() < 5.0 / (n as f64).sqrt());
        let _ = ar1_kernel(0.1).unwrap();
    }
}
