//! Nonnegative test statistics, stored as `log T(x)`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{domain, Result};
use crate::model::SharedModel;

/// Finite stand-in for `log T = +inf` when the denominator density vanishes
/// but the numerator does not.
pub const LOG_T_CAP: f64 = 700.0;

/// A test statistic `T(x) >= 0` evaluated in log space.
///
/// `log_t` returns `-inf` for `T = 0` and never `+inf` or NaN.
pub trait TestStatistic: Send + Sync {
    fn id(&self) -> &str;
    fn log_t(&self, x: &[f64]) -> f64;
}

impl fmt::Debug for dyn TestStatistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TestStatistic({})", self.id())
    }
}

pub type SharedStatistic = Arc<dyn TestStatistic>;

/// `log(num / den)` with the cap and the `0/0 = 0` convention.
fn log_ratio(log_num: f64, log_den: f64) -> f64 {
    if log_num == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else if log_den == f64::NEG_INFINITY {
        LOG_T_CAP
    } else {
        (log_num - log_den).min(LOG_T_CAP)
    }
}

/// Unnormalized likelihood ratio `numerator(x) / denominator(x)`.
#[derive(Debug, Clone)]
pub struct Ulr {
    id: String,
    numerator: SharedModel,
    denominator: SharedModel,
}

pub fn ulr_statistic(numerator: SharedModel, denominator: SharedModel) -> Ulr {
    Ulr {
        id: format!("ulr[{} / {}]", numerator.id(), denominator.id()),
        numerator,
        denominator,
    }
}

impl TestStatistic for Ulr {
    fn id(&self) -> &str {
        &self.id
    }

    fn log_t(&self, x: &[f64]) -> f64 {
        log_ratio(self.numerator.log_density(x), self.denominator.log_density(x))
    }
}

/// Tempered ratio `(numerator(x) / denominator(x))^eta`, `0 < eta < 1`.
#[derive(Debug, Clone)]
pub struct PowerUlr {
    id: String,
    inner: Ulr,
    eta: f64,
}

pub fn power_ulr_statistic(
    numerator: SharedModel,
    denominator: SharedModel,
    eta: f64,
) -> Result<PowerUlr> {
    if !(eta > 0.0 && eta < 1.0) {
        return domain(format!("power eta must lie in (0, 1), got {eta}"));
    }
    let id = format!(
        "power_ulr(eta={eta})[{} / {}]",
        numerator.id(),
        denominator.id()
    );
    Ok(PowerUlr {
        id,
        inner: ulr_statistic(numerator, denominator),
        eta,
    })
}

impl TestStatistic for PowerUlr {
    fn id(&self) -> &str {
        &self.id
    }

    fn log_t(&self, x: &[f64]) -> f64 {
        let l = self.inner.log_t(x);
        if l == f64::NEG_INFINITY {
            l
        } else {
            self.eta * l
        }
    }
}

/// Running mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(mut self, v: f64) -> Self {
        self.count += 1.0;
        let d = v - self.mean;
        self.mean += d / self.count;
        self.m2 += d * (v - self.mean);
        self
    }

    fn variance(&self) -> f64 {
        self.m2 / self.count
    }
}

fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (2.0 * PI * var).ln() - (x - mean).powi(2) / (2.0 * var)
}

/// Plug-in Gaussian fit against `N(0, 1)`.
///
/// For an evaluated point `x` the fit uses the history plus `x` itself:
/// `log T(x) = sum_i [log N(x_i; m, v) - log N(x_i; 0, 1)]` where `m` and `v`
/// are the mean and `1/t` variance of all observations including `x`.
/// A zero fitted variance gives `T = 0`.
#[derive(Debug, Clone)]
pub struct PlugInGaussian {
    id: String,
    history: Moments,
}

pub fn plug_in_gaussian_statistic<S: AsRef<[f64]>>(history: &[S]) -> Result<PlugInGaussian> {
    let mut moments = Moments::default();
    for obs in history {
        for &v in obs.as_ref() {
            if !v.is_finite() {
                return domain("plug-in history contains a non-finite value");
            }
            moments = moments.push(v);
        }
    }
    if moments.count < 1.0 {
        return domain("plug-in statistic needs at least one past observation");
    }
    Ok(PlugInGaussian {
        id: format!("plugin_gaussian(history={})", moments.count),
        history: moments,
    })
}

impl TestStatistic for PlugInGaussian {
    fn id(&self) -> &str {
        &self.id
    }

    fn log_t(&self, x: &[f64]) -> f64 {
        let fit = x.iter().fold(self.history, |m, &v| m.push(v));
        let var = fit.variance();
        if !(var > 0.0) {
            return f64::NEG_INFINITY;
        }
        let l: f64 = x
            .iter()
            .map(|&v| log_normal_pdf(v, fit.mean, var) - log_normal_pdf(v, 0.0, 1.0))
            .sum();
        l.min(LOG_T_CAP)
    }
}

/// Statistic from a plain function of the state.
pub struct FnStatistic<F> {
    id: String,
    f: F,
}

impl<F> FnStatistic<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    pub fn new(id: impl Into<String>, f: F) -> Self {
        Self { id: id.into(), f }
    }
}

impl<F> TestStatistic for FnStatistic<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn id(&self) -> &str {
        &self.id
    }

    fn log_t(&self, x: &[f64]) -> f64 {
        let v = (self.f)(x);
        debug_assert!(!v.is_nan() && v != f64::INFINITY, "{} returned {v}", self.id);
        v
    }
}

/// `log T = 0` everywhere. Its e-value is identically one.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConstantStatistic;

impl TestStatistic for ConstantStatistic {
    fn id(&self) -> &str {
        "constant"
    }

    fn log_t(&self, _x: &[f64]) -> f64 {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gaussian_model, poisson_model};
    use proptest::prelude::*;

    fn g(mean: f64, var: f64, n: usize) -> SharedModel {
        Arc::new(gaussian_model(mean, var, n).unwrap())
    }

    #[test]
    fn ulr_poisson_differs_from_sum_form_by_constant() {
        let n = 5;
        let t = ulr_statistic(
            Arc::new(poisson_model(1.1, n).unwrap()),
            Arc::new(poisson_model(1.0, n).unwrap()),
        );
        let xs = [[0.0, 1.0, 2.0, 0.0, 4.0], [3.0, 3.0, 1.0, 0.0, 0.0], [0.0; 5]];
        let offsets: Vec<f64> = xs
            .iter()
            .map(|x| t.log_t(x) - x.iter().sum::<f64>() * 1.1f64.ln())
            .collect();
        for o in &offsets {
            assert!((o - (-0.1 * n as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn ulr_identity_and_gaussian_shift() {
        let same = ulr_statistic(g(0.0, 1.0, 2), g(0.0, 1.0, 2));
        assert_eq!(same.log_t(&[0.3, -2.0]), 0.0);
        let t = ulr_statistic(g(1.0, 1.0, 1), g(0.0, 1.0, 1));
        assert!((t.log_t(&[1.0]) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn ulr_cap_and_zero_over_zero() {
        let num: SharedModel = Arc::new(poisson_model(1.0, 1).unwrap());
        let den: SharedModel = Arc::new(poisson_model(2.0, 1).unwrap());
        let t = ulr_statistic(num.clone(), den.clone());
        assert_eq!(t.log_t(&[0.5]), f64::NEG_INFINITY);
        let mixed = ulr_statistic(g(0.0, 1.0, 1), num);
        assert_eq!(mixed.log_t(&[0.5]), LOG_T_CAP);
    }

    #[test]
    fn power_ulr() {
        assert!(power_ulr_statistic(g(1.0, 1.0, 1), g(0.0, 1.0, 1), 1.0).is_err());
        assert!(power_ulr_statistic(g(1.0, 1.0, 1), g(0.0, 1.0, 1), 0.0).is_err());
        let t = power_ulr_statistic(g(1.0, 1.0, 1), g(0.0, 1.0, 1), 0.5).unwrap();
        assert!((t.log_t(&[1.0]) - 0.25).abs() < 1e-14);
        let same = power_ulr_statistic(g(0.0, 1.0, 1), g(0.0, 1.0, 1), 0.3).unwrap();
        assert_eq!(same.log_t(&[4.2]), 0.0);
    }

    #[test]
    fn plug_in_examples() {
        let degenerate = plug_in_gaussian_statistic(&[[0.0]]).unwrap();
        assert_eq!(degenerate.log_t(&[0.0]), f64::NEG_INFINITY);
        let fitted_null = plug_in_gaussian_statistic(&[[-1.0]]).unwrap();
        assert!(fitted_null.log_t(&[1.0]).abs() < 1e-14);
        assert!(plug_in_gaussian_statistic::<[f64; 1]>(&[]).is_err());
    }

    #[test]
    fn plug_in_rewards_points_near_a_shifted_history() {
        // history drawn around 3 with spread 0.5; a point at the history mean
        // is far more likely under the fit than under N(0,1)
        let history: Vec<[f64; 1]> = (0..200)
            .map(|i| [3.0 + 0.5 * ((i as f64) * 0.37).sin()])
            .collect();
        let t = plug_in_gaussian_statistic(&history).unwrap();
        assert!(t.log_t(&[3.0]) > 0.0);
        assert!(t.log_t(&[3.0]) > t.log_t(&[0.0]));
    }

    proptest! {
        #[test]
        fn plug_in_matches_direct_formula(hist in prop::collection::vec(-5.0f64..5.0, 1..30), x in -5.0f64..5.0) {
            let h: Vec<[f64; 1]> = hist.iter().map(|v| [*v]).collect();
            let t = plug_in_gaussian_statistic(&h).unwrap();
            let mut all = hist.clone();
            all.push(x);
            let n = all.len() as f64;
            let m = all.iter().sum::<f64>() / n;
            let v = all.iter().map(|a| (a - m).powi(2)).sum::<f64>() / n;
            prop_assume!(v > 1e-6);
            let want = log_normal_pdf(x, m, v) - log_normal_pdf(x, 0.0, 1.0);
            prop_assert!((t.log_t(&[x]) - want).abs() < 1e-8 * want.abs().max(1.0));
        }
    }
}
