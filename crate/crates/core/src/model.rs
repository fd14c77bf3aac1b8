//! Log-density models, normalized and unnormalized.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal, StudentT};
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Result};
use crate::rng::SimRng;

/// A point in the sample space. Entries are always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return domain("state vector must have at least one entry");
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return domain(format!("state entry {i} is not finite"));
        }
        Ok(Self(values))
    }

    pub fn scalar(value: f64) -> Result<Self> {
        Self::new(vec![value])
    }

    /// Wraps kernel output without re-validating it.
    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self(values)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for StateVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for StateVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// A log-density `log g(x)`, possibly known only up to a constant.
///
/// `log_density` returns `-inf` for zero density and never `+inf` or NaN.
/// Models are immutable and shared across threads behind an [`Arc`].
pub trait LogModel: Send + Sync + fmt::Debug {
    fn id(&self) -> &str;

    /// Number of coordinates produced by the sampler.
    fn dim(&self) -> usize;

    fn log_density(&self, x: &[f64]) -> f64;

    fn is_normalized(&self) -> bool;

    fn log_gradient(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }

    fn has_gradient(&self) -> bool {
        false
    }

    /// Exact draw from the normalized law, when one is available.
    fn sample(&self, _rng: &mut SimRng) -> Option<StateVector> {
        None
    }

    fn has_sampler(&self) -> bool {
        false
    }
}

pub type SharedModel = Arc<dyn LogModel>;

/// iid `N(mean, variance)` over `n` coordinates.
#[derive(Debug, Clone)]
pub struct Gaussian {
    id: String,
    mean: f64,
    variance: f64,
    n: usize,
}

impl Gaussian {
    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }
}

pub fn gaussian_model(mean: f64, variance: f64, n: usize) -> Result<Gaussian> {
    if !(variance > 0.0 && variance.is_finite()) {
        return domain(format!("gaussian variance must be positive, got {variance}"));
    }
    if !mean.is_finite() {
        return domain("gaussian mean must be finite");
    }
    if n == 0 {
        return domain("gaussian dimension must be at least 1");
    }
    Ok(Gaussian {
        id: format!("gaussian(mean={mean},variance={variance},n={n})"),
        mean,
        variance,
        n,
    })
}

impl LogModel for Gaussian {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.n
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let norm = -0.5 * (2.0 * PI * self.variance).ln();
        x.iter()
            .map(|v| norm - (v - self.mean).powi(2) / (2.0 * self.variance))
            .sum()
    }

    fn is_normalized(&self) -> bool {
        true
    }

    fn log_gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(x.iter().map(|v| -(v - self.mean) / self.variance).collect())
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn sample(&self, rng: &mut SimRng) -> Option<StateVector> {
        let sd = self.variance.sqrt();
        let v = (0..self.n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                self.mean + sd * z
            })
            .collect();
        Some(StateVector::from_vec_unchecked(v))
    }

    fn has_sampler(&self) -> bool {
        true
    }
}

/// iid `Poisson(rate)` over `n` coordinates.
#[derive(Debug, Clone)]
pub struct PoissonModel {
    id: String,
    rate: f64,
    log_rate: f64,
    n: usize,
    dist: Poisson<f64>,
}

impl PoissonModel {
    pub fn rate(&self) -> f64 {
        self.rate
    }
}

pub fn poisson_model(rate: f64, n: usize) -> Result<PoissonModel> {
    if !(rate > 0.0 && rate.is_finite()) {
        return domain(format!("poisson rate must be positive, got {rate}"));
    }
    if n == 0 {
        return domain("poisson dimension must be at least 1");
    }
    let dist = Poisson::new(rate).map_err(|e| crate::Error::Domain(e.to_string()))?;
    Ok(PoissonModel {
        id: format!("poisson(rate={rate},n={n})"),
        rate,
        log_rate: rate.ln(),
        n,
        dist,
    })
}

impl LogModel for PoissonModel {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.n
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for &k in x {
            if k < 0.0 || k.fract() != 0.0 {
                return f64::NEG_INFINITY;
            }
            total += k * self.log_rate - self.rate - ln_gamma(k + 1.0);
        }
        total
    }

    fn is_normalized(&self) -> bool {
        true
    }

    fn sample(&self, rng: &mut SimRng) -> Option<StateVector> {
        let v = (0..self.n).map(|_| self.dist.sample(rng)).collect();
        Some(StateVector::from_vec_unchecked(v))
    }

    fn has_sampler(&self) -> bool {
        true
    }
}

/// One Student-t expert: location, scale and degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TExpert {
    pub center: f64,
    pub scale: f64,
    pub dof: f64,
}

impl TExpert {
    pub fn new(center: f64, scale: f64, dof: f64) -> Self {
        Self { center, scale, dof }
    }

    fn log_kernel(&self, x: f64) -> f64 {
        let z = (x - self.center) / self.scale;
        -0.5 * (self.dof + 1.0) * (z * z / self.dof).ln_1p()
    }

    fn d_log_kernel(&self, x: f64) -> f64 {
        let d = x - self.center;
        -(self.dof + 1.0) * d / (self.scale * self.scale * self.dof + d * d)
    }
}

/// Product of Student-t experts, iid over `n` coordinates. Unnormalized.
///
/// Every expert kernel is bounded by 1, so the product is dominated by the
/// first expert alone; exact draws come from rejection sampling against that
/// expert's t law.
#[derive(Debug, Clone)]
pub struct ProductOfExperts {
    id: String,
    experts: Vec<TExpert>,
    n: usize,
    proposal: StudentT<f64>,
}

impl ProductOfExperts {
    pub fn experts(&self) -> &[TExpert] {
        &self.experts
    }

    fn log_kernel_1d(&self, x: f64) -> f64 {
        self.experts.iter().map(|e| e.log_kernel(x)).sum()
    }

    fn sample_1d(&self, rng: &mut SimRng) -> f64 {
        let lead = &self.experts[0];
        loop {
            let t: f64 = self.proposal.sample(rng);
            let x = lead.center + lead.scale * t;
            let log_accept: f64 = self.experts[1..].iter().map(|e| e.log_kernel(x)).sum();
            let u: f64 = rng.random();
            if u.ln() < log_accept {
                return x;
            }
        }
    }
}

pub fn poe_student_t_model(experts: &[TExpert], n: usize) -> Result<ProductOfExperts> {
    if experts.is_empty() {
        return domain("product of experts needs at least one expert");
    }
    for (i, e) in experts.iter().enumerate() {
        if !(e.scale > 0.0 && e.dof > 0.0) || !e.center.is_finite() {
            return domain(format!("expert {i} has invalid parameters {e:?}"));
        }
    }
    if n == 0 {
        return domain("product-of-experts dimension must be at least 1");
    }
    let proposal =
        StudentT::new(experts[0].dof).map_err(|e| crate::Error::Domain(e.to_string()))?;
    let desc: Vec<String> = experts
        .iter()
        .map(|e| format!("{}:{}:{}", e.center, e.scale, e.dof))
        .collect();
    Ok(ProductOfExperts {
        id: format!("poe_t({};n={n})", desc.join(",")),
        experts: experts.to_vec(),
        n,
        proposal,
    })
}

impl LogModel for ProductOfExperts {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.n
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        x.iter().map(|&v| self.log_kernel_1d(v)).sum()
    }

    fn is_normalized(&self) -> bool {
        false
    }

    fn log_gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(
            x.iter()
                .map(|&v| self.experts.iter().map(|e| e.d_log_kernel(v)).sum())
                .collect(),
        )
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn sample(&self, rng: &mut SimRng) -> Option<StateVector> {
        let v = (0..self.n).map(|_| self.sample_1d(rng)).collect();
        Some(StateVector::from_vec_unchecked(v))
    }

    fn has_sampler(&self) -> bool {
        true
    }
}
