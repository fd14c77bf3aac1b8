//! Closed-form AR(1) reference values and quadrature checkers.
//!
//! The AR(1) kernel here has stationary law `N(0, 1)`, so its `J`-step
//! transition is `N(φ^J y, 1 - φ^{2J})`. The alternative is either a mean
//! shift `N(μ, 1)` or a rescaling `N(0, σ²)`. `Δ^J(y0)` is the expected
//! likelihood ratio after `J` forward steps from `y0`; the soft-rank e-value
//! converges to `E(x) / Δ^J(y0)` as `M` grows.
//!
//! All functions return natural logs unless named otherwise.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{domain, Result};
use crate::math::mean_se;
use crate::rng::RngStream;

/// Grid size used by the quadrature checkers.
pub const QUADRATURE_POINTS: usize = 10_000;
/// Half-width, in standard deviations, of the quadrature range.
pub const QUADRATURE_SDS: f64 = 10.0;

fn check_phi(phi: f64) -> Result<()> {
    if !(phi.abs() < 1.0) {
        return domain(format!("AR(1) coefficient must satisfy |phi| < 1, got {phi}"));
    }
    Ok(())
}

fn check_steps(steps: u32) -> Result<()> {
    if steps == 0 {
        return domain("J must be at least 1");
    }
    Ok(())
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return domain(format!("variance must be positive, got {sigma2}"));
    }
    Ok(())
}

/// `φ^J` after validating `φ` and `J`.
fn phi_j(phi: f64, steps: u32) -> Result<f64> {
    check_phi(phi)?;
    check_steps(steps)?;
    Ok(phi.powi(steps as i32))
}

/// `log E(x) = μx - μ²/2` for `N(μ, 1)` against `N(0, 1)`.
pub fn lr_mean_shift(x: f64, mu: f64) -> f64 {
    mu * x - 0.5 * mu * mu
}

/// `log Δ^J(y0) = φ^J μ y0 - φ^{2J} μ²/2`.
pub fn delta_j_mean_shift(y0: f64, phi: f64, mu: f64, steps: u32) -> Result<f64> {
    let r = phi_j(phi, steps)?;
    Ok(r * mu * y0 - 0.5 * r * r * mu * mu)
}

/// `E^Q[log Δ^J] = φ^{2J} μ²/2`.
pub fn epower_delta_mean_shift(phi: f64, mu: f64, steps: u32) -> Result<f64> {
    let r = phi_j(phi, steps)?;
    Ok(0.5 * r * r * mu * mu)
}

/// `log Δ^J` written in terms of the data: with `δ ~ N(0, 1)` independent
/// of `x`, `φ^{2J} μ x + φ^J μ sqrt(1 - φ^{2J}) δ - φ^{2J} μ²/2`.
pub fn delta_j_mean_shift_of_x(x: f64, delta: f64, phi: f64, mu: f64, steps: u32) -> Result<f64> {
    Ok(log_delta_of_x(x, delta, phi_j(phi, steps)?, mu))
}

fn log_delta_of_x(x: f64, delta: f64, r: f64, mu: f64) -> f64 {
    let r2 = r * r;
    r2 * mu * x + r * mu * (1.0 - r2).sqrt() * delta - 0.5 * r2 * mu * mu
}

/// `log E[1/Δ^J | X = x] = -φ^{2J} μ x + φ^{2J} μ² - φ^{4J} μ²/2`.
pub fn inv_delta_conditional_mean(x: f64, phi: f64, mu: f64, steps: u32) -> Result<f64> {
    let r2 = phi_j(phi, steps)?.powi(2);
    Ok(-r2 * mu * x + r2 * mu * mu - 0.5 * r2 * r2 * mu * mu)
}

/// `log E(x) = -log σ - x²(1 - σ²)/(2σ²)` for `N(0, σ²)` against `N(0, 1)`.
pub fn lr_rescale(x: f64, sigma2: f64) -> Result<f64> {
    check_sigma2(sigma2)?;
    Ok(-0.5 * sigma2.ln() - x * x * (1.0 - sigma2) / (2.0 * sigma2))
}

/// One-step rescaling correction with an explicit innovation variance `γ²`.
///
/// Requires `(1 - σ²)/σ² > -1/γ²`; otherwise the defining integral diverges.
pub fn delta1_rescale_with_gamma(y0: f64, phi: f64, gamma2: f64, sigma2: f64) -> Result<f64> {
    check_phi(phi)?;
    check_sigma2(sigma2)?;
    if !(gamma2 > 0.0) {
        return domain(format!("innovation variance must be positive, got {gamma2}"));
    }
    let a = (1.0 - sigma2) / sigma2;
    let denom = 1.0 + gamma2 * a;
    if !(denom > 0.0) {
        return domain(format!(
            "rescaling correction diverges: (1 - s2)/s2 = {a} must exceed -1/gamma2 = {}",
            -1.0 / gamma2
        ));
    }
    Ok(-0.5 * sigma2.ln() - 0.5 * denom.ln() - phi * phi * y0 * y0 * a / (2.0 * denom))
}

/// `log Δ^1(y0)` for the rescaling alternative with `γ² = 1 - φ²`.
pub fn delta1_rescale(y0: f64, phi: f64, sigma2: f64) -> Result<f64> {
    check_phi(phi)?;
    delta1_rescale_with_gamma(y0, phi, 1.0 - phi * phi, sigma2)
}

/// `log Δ^J(y0)` for the rescaling alternative: the one-step form with `φ^J`
/// and `γ² = 1 - φ^{2J}`.
pub fn delta_j_rescale(y0: f64, phi: f64, sigma2: f64, steps: u32) -> Result<f64> {
    let r = phi_j(phi, steps)?;
    delta1_rescale_with_gamma(y0, r, 1.0 - r * r, sigma2)
}

/// `KL(N(φ^J μ, 1), N(0, 1)) = φ^{2J} μ²/2`.
pub fn kl_mixing_mean_shift(phi: f64, mu: f64, steps: u32) -> Result<f64> {
    epower_delta_mean_shift(phi, mu, steps)
}

/// `KL(N(0, φ^{2J}σ² + 1 - φ^{2J}), N(0, 1))
///  = {φ^{2J}(σ² - 1) - log(φ^{2J}σ² + 1 - φ^{2J})}/2`.
pub fn kl_mixing_rescale(phi: f64, sigma2: f64, steps: u32) -> Result<f64> {
    check_sigma2(sigma2)?;
    let r2 = phi_j(phi, steps)?.powi(2);
    let u = r2 * (sigma2 - 1.0);
    Ok(0.5 * (u - u.ln_1p()))
}

/// The mean-shift oracle bundled with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ar1MeanShiftOracle {
    pub phi: f64,
    pub mu: f64,
}

impl Ar1MeanShiftOracle {
    pub fn new(phi: f64, mu: f64) -> Result<Self> {
        check_phi(phi)?;
        if !mu.is_finite() {
            return domain(format!("mean shift must be finite, got {mu}"));
        }
        Ok(Self { phi, mu })
    }

    pub fn log_lr(&self, x: f64) -> f64 {
        lr_mean_shift(x, self.mu)
    }

    pub fn log_delta(&self, y0: f64, steps: u32) -> Result<f64> {
        delta_j_mean_shift(y0, self.phi, self.mu, steps)
    }

    pub fn epower_delta(&self, steps: u32) -> Result<f64> {
        epower_delta_mean_shift(self.phi, self.mu, steps)
    }

    pub fn kl_mixing(&self, steps: u32) -> Result<f64> {
        kl_mixing_mean_shift(self.phi, self.mu, steps)
    }
}

/// Trapezoid rule with `points` equally spaced nodes on `[lo, hi]`.
pub fn trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize) -> f64 {
    assert!(points >= 2 && hi > lo);
    let h = (hi - lo) / (points - 1) as f64;
    let mut acc = 0.5 * (f(lo) + f(hi));
    for i in 1..points - 1 {
        acc += f(lo + i as f64 * h);
    }
    acc * h
}

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// `Δ^J(y0) = ∫ E(y) u^J(y0, y) dy` (linear scale) for the likelihood
/// ratio `E` of `N(q_mean, q_var)` against `N(0, 1)`.
///
/// The integrand is proportional to a normal density; the grid spans `±10`
/// of its standard deviations around its mean. Returns `+inf` when the
/// integral diverges.
pub fn quadrature_delta_forward(
    q_mean: f64,
    q_var: f64,
    y0: f64,
    phi: f64,
    steps: u32,
) -> Result<f64> {
    let r = phi_j(phi, steps)?;
    check_sigma2(q_var)?;
    let (m, v) = (r * y0, 1.0 - r * r);
    let precision = 1.0 / v + 1.0 / q_var - 1.0;
    if !(precision > 0.0) {
        return Ok(f64::INFINITY);
    }
    let center = (m / v + q_mean / q_var) / precision;
    let w = QUADRATURE_SDS / precision.sqrt();
    Ok(trapezoid(
        |y| normal_pdf(y, q_mean, q_var) / normal_pdf(y, 0.0, 1.0) * normal_pdf(y, m, v),
        center - w,
        center + w,
        QUADRATURE_POINTS,
    ))
}

/// `Δ^J(y0) = ∫ q(y) v^J(y, y0) dy / p(y0)` (linear scale) for an
/// alternative `N(q_mean, q_var)` and null `N(0, 1)`, by quadrature over
/// `±10` sd of `q`.
pub fn quadrature_delta_backward(
    q_mean: f64,
    q_var: f64,
    y0: f64,
    phi: f64,
    steps: u32,
) -> Result<f64> {
    let r = phi_j(phi, steps)?;
    check_sigma2(q_var)?;
    let v = 1.0 - r * r;
    let w = QUADRATURE_SDS * q_var.sqrt();
    let num = trapezoid(
        |y| normal_pdf(y, q_mean, q_var) * normal_pdf(y0, r * y, v),
        q_mean - w,
        q_mean + w,
        QUADRATURE_POINTS,
    );
    Ok(num / normal_pdf(y0, 0.0, 1.0))
}

/// `KL(N(m, v), N(0, 1))` by quadrature over `±10` sd of both laws.
///
/// Integrates `p (ρ log ρ - ρ + 1)` with `ρ = q/p`, which has the same
/// integral as `q log ρ` but is nonnegative pointwise, so tiny divergences
/// keep their relative accuracy.
pub fn quadrature_kl_to_standard(m: f64, v: f64) -> Result<f64> {
    check_sigma2(v)?;
    let w = QUADRATURE_SDS * v.sqrt();
    let (lo, hi) = ((m - w).min(-QUADRATURE_SDS), (m + w).max(QUADRATURE_SDS));
    let half_log_v = 0.5 * v.ln();
    Ok(trapezoid(
        |y| {
            let l = -half_log_v - (y - m).powi(2) / (2.0 * v) + 0.5 * y * y;
            let em1 = l.exp_m1();
            normal_pdf(y, 0.0, 1.0) * (l + l * em1 - em1)
        },
        lo,
        hi,
        QUADRATURE_POINTS,
    ))
}

/// `E[1/Δ^J | X = x]` (linear scale) by quadrature over the auxiliary
/// normal in the data representation of `Δ^J`.
pub fn quadrature_inv_delta_conditional(x: f64, phi: f64, mu: f64, steps: u32) -> Result<f64> {
    let r = phi_j(phi, steps)?;
    Ok(trapezoid(
        |d| (-log_delta_of_x(x, d, r, mu)).exp() * normal_pdf(d, 0.0, 1.0),
        -QUADRATURE_SDS,
        QUADRATURE_SDS,
        QUADRATURE_POINTS,
    ))
}

/// Monte Carlo means (with standard errors) of `Δ^J(X)` for `X ~ N(0, 1)`
/// and of `1/Δ^J(X)` for `X ~ N(μ, 1)`. Both are one for an exact
/// e-variable pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaCheck {
    pub mean_delta: f64,
    pub se_delta: f64,
    pub mean_inv_delta: f64,
    pub se_inv_delta: f64,
}

pub fn exact_delta_evariable_check(
    phi: f64,
    mu: f64,
    steps: u32,
    n_mc: usize,
    rng: &RngStream,
) -> Result<DeltaCheck> {
    check_phi(phi)?;
    check_steps(steps)?;
    if n_mc == 0 {
        return domain("Monte Carlo check needs at least one draw");
    }
    let mut under_p = rng.child(0).rng();
    let mut under_q = rng.child(1).rng();
    let mut delta = Vec::with_capacity(n_mc);
    let mut inv = Vec::with_capacity(n_mc);
    for _ in 0..n_mc {
        let x: f64 = under_p.sample(StandardNormal);
        let d: f64 = under_p.sample(StandardNormal);
        delta.push(delta_j_mean_shift_of_x(x, d, phi, mu, steps)?.exp());
        let x = mu + under_q.sample::<f64, _>(StandardNormal);
        let d: f64 = under_q.sample(StandardNormal);
        inv.push((-delta_j_mean_shift_of_x(x, d, phi, mu, steps)?).exp());
    }
    let (mean_delta, se_delta) = mean_se(&delta);
    let (mean_inv_delta, se_inv_delta) = mean_se(&inv);
    Ok(DeltaCheck {
        mean_delta,
        se_delta,
        mean_inv_delta,
        se_inv_delta,
    })
}

/// Monte Carlo mean and standard error of `log Δ^J(Y0)` with
/// `Y0 ~ N(φ^J μ, 1)`, the anchor law when `X ~ N(μ, 1)`.
pub fn delta_epower_check(
    phi: f64,
    mu: f64,
    steps: u32,
    n_mc: usize,
    rng: &RngStream,
) -> Result<(f64, f64)> {
    let r = phi_j(phi, steps)?;
    if n_mc == 0 {
        return domain("Monte Carlo check needs at least one draw");
    }
    let mut g = rng.rng();
    let mut logs = Vec::with_capacity(n_mc);
    for _ in 0..n_mc {
        let y0 = r * mu + g.sample::<f64, _>(StandardNormal);
        logs.push(delta_j_mean_shift(y0, phi, mu, steps)?);
    }
    Ok(mean_se(&logs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn mean_shift_examples() {
        for x in [-3.0, 0.0, 2.5] {
            assert_eq!(lr_mean_shift(x, 0.0), 0.0);
            assert_eq!(delta_j_mean_shift(x, 0.0, 1.0, 1).unwrap(), 0.0);
            assert_eq!(delta_j_mean_shift(x, 0.7, 0.0, 3).unwrap(), 0.0);
        }
        assert_eq!(lr_mean_shift(1.0, 1.0), 0.5);
        assert_eq!(lr_mean_shift(0.0, 2.0), -2.0);
        assert_eq!(delta_j_mean_shift(0.0, 0.5, 1.0, 1).unwrap(), -0.125);
        assert_eq!(epower_delta_mean_shift(0.5, 2.0, 2).unwrap(), 0.125);
        assert_eq!(epower_delta_mean_shift(0.0, 2.0, 1).unwrap(), 0.0);
        assert_eq!(kl_mixing_mean_shift(0.5, 2.0, 1).unwrap(), 0.5);
        let mut prev = f64::INFINITY;
        for j in 1..40 {
            let e = epower_delta_mean_shift(0.9, 1.5, j).unwrap();
            assert!(e < prev);
            prev = e;
        }
        assert!(prev < 1e-3);
        assert!(delta_j_mean_shift(0.0, 1.0, 1.0, 1).is_err());
        assert!(delta_j_mean_shift(0.0, 0.5, 1.0, 0).is_err());
    }

    #[test]
    fn one_step_matches_mgf_form() {
        for &(y0, phi, mu) in &[(0.3, 0.5, 1.0), (-1.7, 0.8, 2.0), (2.2, -0.4, -1.5)] {
            let direct = phi * mu * y0 - phi * phi * mu * mu / 2.0;
            assert_eq!(delta_j_mean_shift(y0, phi, mu, 1).unwrap(), direct);
        }
    }

    #[test]
    fn rescale_examples() {
        for x in [-2.0, 0.0, 1.3] {
            assert_eq!(lr_rescale(x, 1.0).unwrap(), 0.0);
            assert_eq!(delta1_rescale(x, 0.6, 1.0).unwrap(), 0.0);
        }
        assert!((lr_rescale(0.0, 4.0).unwrap() + 2f64.ln()).abs() < 1e-15);
        assert!((lr_rescale(1.0, 0.25).unwrap() - (2f64.ln() - 1.5)).abs() < 1e-15);
        assert!(lr_rescale(1.0, 0.0).is_err());
        for (y0, s2) in [(0.0, 2.0), (1.5, 0.3), (-3.0, 5.0)] {
            assert!(delta1_rescale(y0, 0.0, s2).unwrap().abs() < 1e-14);
        }
        assert!(delta1_rescale_with_gamma(0.7, 0.9, 0.19, 2.0).unwrap().is_finite());
        assert!(matches!(
            delta1_rescale_with_gamma(0.7, 0.9, 3.0, 2.0),
            Err(crate::Error::Domain(_))
        ));
        assert_eq!(kl_mixing_rescale(0.7, 1.0, 2).unwrap(), 0.0);
        assert!(kl_mixing_rescale(0.7, 3.0, 60).unwrap() < 1e-15);
    }

    proptest! {
        #[test]
        fn rescale_side_condition_always_holds_for_stationary_ar1(
            y0 in -5.0f64..5.0, phi in -0.99f64..0.99, s2 in 0.01f64..50.0, j in 1u32..8
        ) {
            prop_assert!(delta_j_rescale(y0, phi, s2, j).unwrap().is_finite());
        }

        #[test]
        fn data_form_matches_anchor_form_in_law(x in -4.0f64..4.0, d in -4.0f64..4.0, phi in -0.95f64..0.95, mu in -3.0f64..3.0, j in 1u32..6) {
            // Y0 = φ^J x + sqrt(1 - φ^{2J}) d
            let r = phi.powi(j as i32);
            let y0 = r * x + (1.0 - r * r).sqrt() * d;
            let a = delta_j_mean_shift(y0, phi, mu, j).unwrap();
            let b = delta_j_mean_shift_of_x(x, d, phi, mu, j).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_shift_delta_matches_both_integrals() {
        for &phi in &[0.0, 0.3, 0.5, 0.8, -0.6, 0.95] {
            for &mu in &[-2.0, 0.5, 1.0, 2.0] {
                for j in [1u32, 2, 5] {
                    for &y0 in &[-2.5, -0.3, 0.0, 1.0, 3.0] {
                        let exact = delta_j_mean_shift(y0, phi, mu, j).unwrap().exp();
                        let fwd =
                            quadrature_delta_forward(mu, 1.0, y0, phi, j).unwrap();
                        assert!(rel(fwd, exact) < 1e-6, "forward phi={phi} mu={mu} j={j} y0={y0}");
                        let bwd = quadrature_delta_backward(mu, 1.0, y0, phi, j).unwrap();
                        assert!(rel(bwd, exact) < 1e-6, "backward phi={phi} mu={mu} j={j} y0={y0}");
                    }
                }
            }
        }
    }

    #[test]
    fn rescale_delta_matches_both_integrals() {
        for &phi in &[0.3, 0.5, 0.8, 0.9] {
            for &s2 in &[0.25, 0.5, 2.0, 4.0] {
                for j in [1u32, 3] {
                    for &y0 in &[-2.0, 0.0, 0.7, 2.5] {
                        let exact = delta_j_rescale(y0, phi, s2, j).unwrap().exp();
                        let fwd = quadrature_delta_forward(0.0, s2, y0, phi, j)
                            .unwrap();
                        assert!(rel(fwd, exact) < 1e-6, "forward phi={phi} s2={s2} j={j} y0={y0}");
                        let bwd = quadrature_delta_backward(0.0, s2, y0, phi, j).unwrap();
                        assert!(rel(bwd, exact) < 1e-6, "backward phi={phi} s2={s2} j={j} y0={y0}");
                    }
                }
            }
        }
    }

    #[test]
    fn kl_forms_match_quadrature() {
        for phi in [0.2f64, 0.5, 0.8] {
            for j in [1u32, 2, 4] {
                let r = phi.powi(j as i32);
                for &mu in &[0.5, 1.0, 2.0] {
                    let q = quadrature_kl_to_standard(r * mu, 1.0).unwrap();
                    assert!(rel(q, kl_mixing_mean_shift(phi, mu, j).unwrap()) < 1e-6);
                }
                for &s2 in &[0.25, 2.0, 4.0] {
                    let q = quadrature_kl_to_standard(0.0, r * r * s2 + 1.0 - r * r).unwrap();
                    let k = kl_mixing_rescale(phi, s2, j).unwrap();
                    assert!(rel(q, k) < 1e-6, "phi={phi} j={j} s2={s2}: {q} vs {k}");
                }
            }
        }
    }

    #[test]
    fn inverse_delta_mean_matches_quadrature() {
        for &(phi, mu, j) in &[(0.5, 2.0, 1u32), (0.8, 1.0, 3), (0.3, -1.5, 2)] {
            for &x in &[-1.0, 0.0, 0.5, 2.0] {
                let q = quadrature_inv_delta_conditional(x, phi, mu, j).unwrap();
                let exact = inv_delta_conditional_mean(x, phi, mu, j).unwrap().exp();
                assert!(rel(q, exact) < 1e-6);
            }
        }
    }

    #[test]
    fn delta_pair_is_exact() {
        for &(phi, mu, j) in &[(0.5, 2.0, 1u32), (0.8, 1.0, 3)] {
            let c = exact_delta_evariable_check(phi, mu, j, 200_000, &RngStream::new(5)).unwrap();
            assert!((c.mean_delta - 1.0).abs() < 5.0 * c.se_delta);
            assert!((c.mean_inv_delta - 1.0).abs() < 5.0 * c.se_inv_delta);
        }
        let c = exact_delta_evariable_check(0.5, 0.0, 1, 10, &RngStream::new(5)).unwrap();
        assert_eq!((c.mean_delta, c.mean_inv_delta), (1.0, 1.0));
        let c = exact_delta_evariable_check(0.0, 2.0, 1, 10, &RngStream::new(5)).unwrap();
        assert_eq!((c.mean_delta, c.mean_inv_delta), (1.0, 1.0));
        assert!(exact_delta_evariable_check(0.5, 1.0, 1, 0, &RngStream::new(5)).is_err());
    }

    #[test]
    fn epower_matches_simulation() {
        for &(phi, mu, j) in &[(0.5, 2.0, 1u32), (0.8, 1.0, 3)] {
            let (m, se) = delta_epower_check(phi, mu, j, 100_000, &RngStream::new(8)).unwrap();
            assert!((m - epower_delta_mean_shift(phi, mu, j).unwrap()).abs() < 5.0 * se);
        }
    }

    #[test]
    fn oracle_struct_delegates() {
        let o = Ar1MeanShiftOracle::new(0.5, 2.0).unwrap();
        assert_eq!(o.log_lr(1.0), lr_mean_shift(1.0, 2.0));
        assert_eq!(o.epower_delta(2).unwrap(), 0.125);
        assert_eq!(o.kl_mixing(1).unwrap(), 0.5);
        assert_eq!(o.log_delta(0.4, 3).unwrap(), delta_j_mean_shift(0.4, 0.5, 2.0, 3).unwrap());
        assert!(Ar1MeanShiftOracle::new(1.0, 0.0).is_err());
    }
}
