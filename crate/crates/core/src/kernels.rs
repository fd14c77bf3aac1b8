//! Markov transition kernels with a known stationary law.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{config, domain, Result};
use crate::model::{SharedModel, StateVector};
use crate::rng::{RngStream, SimRng};

/// Default random-walk proposal scale.
pub const DEFAULT_PROPOSAL_SD: f64 = 2.4;

/// One-step Markov transition stationary for some target law.
///
/// `step` is the forward kernel U; `step_backward` the reverse kernel V
/// satisfying detailed balance. Every kernel here is reversible, so the two
/// coincide unless a kernel overrides `step_backward`.
pub trait TransitionKernel: Send + Sync {
    fn id(&self) -> &str;

    fn step(&self, x: &[f64], rng: &mut SimRng) -> Vec<f64>;

    fn step_backward(&self, x: &[f64], rng: &mut SimRng) -> Vec<f64> {
        debug_assert!(self.is_reversible(), "{} needs an explicit reverse kernel", self.id());
        self.step(x, rng)
    }

    fn is_reversible(&self) -> bool;

    /// `log u(from, to)`, when the kernel has a density.
    fn log_transition_density(&self, _from: &[f64], _to: &[f64]) -> Option<f64> {
        None
    }
}

fn std_normal(rng: &mut SimRng) -> f64 {
    StandardNormal.sample(rng)
}

/// Gaussian AR(1) step `y' = c + phi (y - c) + gamma eps` with
/// `gamma^2 = 1 - phi^2`, stationary for iid `N(c, 1)`.
#[derive(Debug, Clone)]
pub struct Ar1Kernel {
    id: String,
    phi: f64,
    gamma: f64,
    center: f64,
}

/// Closed-form J-step law: `N(c + mean_coef (y - c), variance)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ar1Composition {
    pub mean_coef: f64,
    pub variance: f64,
}

pub fn ar1_kernel(phi: f64) -> Result<Ar1Kernel> {
    Ar1Kernel::with_center(phi, 0.0)
}

impl Ar1Kernel {
    pub fn with_center(phi: f64, center: f64) -> Result<Self> {
        if !(phi.abs() < 1.0) {
            return domain(format!("AR(1) coefficient must satisfy |phi| < 1, got {phi}"));
        }
        if !center.is_finite() {
            return domain("AR(1) center must be finite");
        }
        Ok(Self {
            id: format!("ar1(phi={phi},center={center})"),
            phi,
            gamma: (1.0 - phi * phi).sqrt(),
            center,
        })
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn compose(&self, steps: u32) -> Ar1Composition {
        let pj = self.phi.powi(steps as i32);
        Ar1Composition {
            mean_coef: pj,
            variance: 1.0 - pj * pj,
        }
    }

    /// Draw directly from the composed J-step law.
    pub fn sample_composed(&self, x: &[f64], steps: u32, rng: &mut SimRng) -> Vec<f64> {
        let c = self.compose(steps);
        let sd = c.variance.sqrt();
        x.iter()
            .map(|&v| self.center + c.mean_coef * (v - self.center) + sd * std_normal(rng))
            .collect()
    }
}

impl TransitionKernel for Ar1Kernel {
    fn id(&self) -> &str {
        &self.id
    }

    fn step(&self, x: &[f64], rng: &mut SimRng) -> Vec<f64> {
        x.iter()
            .map(|&v| self.center + self.phi * (v - self.center) + self.gamma * std_normal(rng))
            .collect()
    }

    fn is_reversible(&self) -> bool {
        true
    }

    fn log_transition_density(&self, from: &[f64], to: &[f64]) -> Option<f64> {
        let var = self.gamma * self.gamma;
        let norm = -0.5 * (2.0 * PI * var).ln();
        Some(
            from.iter()
                .zip(to)
                .map(|(&a, &b)| {
                    let m = self.center + self.phi * (a - self.center);
                    norm - (b - m).powi(2) / (2.0 * var)
                })
                .sum(),
        )
    }
}

/// Metropolis accept/reject using only the unnormalized target.
fn metropolis_accept(log_ratio: f64, rng: &mut SimRng) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    if log_ratio >= 0.0 {
        return true;
    }
    let u: f64 = rng.random();
    u.ln() < log_ratio
}

/// Gaussian random-walk Metropolis on the full state vector.
#[derive(Debug, Clone)]
pub struct RandomWalkMetropolis {
    id: String,
    target: SharedModel,
    proposal_sd: f64,
}

pub fn rwm_kernel(target: SharedModel, proposal_sd: f64) -> Result<RandomWalkMetropolis> {
    if !(proposal_sd > 0.0 && proposal_sd.is_finite()) {
        return domain(format!("proposal sd must be positive, got {proposal_sd}"));
    }
    Ok(RandomWalkMetropolis {
        id: format!("rwm(sd={proposal_sd})[{}]", target.id()),
        target,
        proposal_sd,
    })
}

impl RandomWalkMetropolis {
    /// One step, also reporting whether the proposal was accepted.
    pub fn step_with_acceptance(&self, x: &[f64], rng: &mut SimRng) -> (Vec<f64>, bool) {
        let proposal: Vec<f64> = x
            .iter()
            .map(|&v| v + self.proposal_sd * std_normal(rng))
            .collect();
        let lp_new = self.target.log_density(&proposal);
        if lp_new == f64::NEG_INFINITY {
            return (x.to_vec(), false);
        }
        let lp_old = self.target.log_density(x);
        let ratio = if lp_old == f64::NEG_INFINITY {
            f64::INFINITY
        } else {
            lp_new - lp_old
        };
        if metropolis_accept(ratio, rng) {
            (proposal, true)
        } else {
            (x.to_vec(), false)
        }
    }
}

impl TransitionKernel for RandomWalkMetropolis {
    fn id(&self) -> &str {
        &self.id
    }

    fn step(&self, x: &[f64], rng: &mut SimRng) -> Vec<f64> {
        self.step_with_acceptance(x, rng).0
    }

    fn is_reversible(&self) -> bool {
        true
    }
}

/// Metropolis-adjusted Langevin: proposal `x + (h/2) grad log g(x) + sqrt(h) xi`.
#[derive(Debug, Clone)]
pub struct Mala {
    id: String,
    target: SharedModel,
    step_size: f64,
}

pub fn mala_kernel(target: SharedModel, step_size: f64) -> Result<Mala> {
    if !(step_size > 0.0 && step_size.is_finite()) {
        return domain(format!("MALA step size must be positive, got {step_size}"));
    }
    if !target.has_gradient() {
        return config(format!("MALA needs a gradient, {} has none", target.id()));
    }
    Ok(Mala {
        id: format!("mala(h={step_size})[{}]", target.id()),
        target,
        step_size,
    })
}

impl Mala {
    /// Mean of the Langevin proposal from `x`.
    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        let grad = self.target.log_gradient(x).expect("checked at construction");
        x.iter()
            .zip(&grad)
            .map(|(&v, &g)| v + 0.5 * self.step_size * g)
            .collect()
    }

    fn log_proposal(&self, from_drift: &[f64], to: &[f64]) -> f64 {
        -from_drift
            .iter()
            .zip(to)
            .map(|(m, y)| (y - m).powi(2))
            .sum::<f64>()
            / (2.0 * self.step_size)
    }

    pub fn step_with_acceptance(&self, x: &[f64], rng: &mut SimRng) -> (Vec<f64>, bool) {
        let lp_old = self.target.log_density(x);
        let drift = self.drift(x);
        let sd = self.step_size.sqrt();
        let proposal: Vec<f64> = drift.iter().map(|&m| m + sd * std_normal(rng)).collect();
        let lp_new = self.target.log_density(&proposal);
        if lp_new == f64::NEG_INFINITY {
            return (x.to_vec(), false);
        }
        let ratio = if lp_old == f64::NEG_INFINITY {
            f64::INFINITY
        } else {
            let back = self.drift(&proposal);
            lp_new + self.log_proposal(&back, x) - lp_old - self.log_proposal(&drift, &proposal)
        };
        if metropolis_accept(ratio, rng) {
            (proposal, true)
        } else {
            (x.to_vec(), false)
        }
    }
}

impl TransitionKernel for Mala {
    fn id(&self) -> &str {
        &self.id
    }

    fn step(&self, x: &[f64], rng: &mut SimRng) -> Vec<f64> {
        self.step_with_acceptance(x, rng).0
    }

    fn is_reversible(&self) -> bool {
        true
    }
}

/// Independent exact draws from the target; ignores the current state.
#[derive(Debug, Clone)]
pub struct ExactKernel {
    id: String,
    target: SharedModel,
}

pub fn exact_kernel(target: SharedModel) -> Result<ExactKernel> {
    if !target.has_sampler() {
        return config(format!("{} has no exact sampler", target.id()));
    }
    Ok(ExactKernel {
        id: format!("exact[{}]", target.id()),
        target,
    })
}

impl TransitionKernel for ExactKernel {
    fn id(&self) -> &str {
        &self.id
    }

    fn step(&self, _x: &[f64], rng: &mut SimRng) -> Vec<f64> {
        self.target
            .sample(rng)
            .expect("checked at construction")
            .into_inner()
    }

    fn is_reversible(&self) -> bool {
        true
    }

    fn log_transition_density(&self, _from: &[f64], to: &[f64]) -> Option<f64> {
        self.target
            .is_normalized()
            .then(|| self.target.log_density(to))
    }
}

/// `steps` forward transitions drawing from an existing generator.
pub fn run_forward(
    kernel: &dyn TransitionKernel,
    start: &[f64],
    steps: usize,
    rng: &mut SimRng,
) -> Vec<f64> {
    let mut y = start.to_vec();
    for _ in 0..steps {
        y = kernel.step(&y, rng);
    }
    y
}

/// `steps` reverse transitions drawing from an existing generator.
pub fn run_backward(
    kernel: &dyn TransitionKernel,
    start: &[f64],
    steps: usize,
    rng: &mut SimRng,
) -> Vec<f64> {
    let mut y = start.to_vec();
    for _ in 0..steps {
        y = kernel.step_backward(&y, rng);
    }
    y
}

/// Applies `steps >= 1` forward transitions; deterministic in `rng`.
pub fn run_steps(
    kernel: &dyn TransitionKernel,
    start: &StateVector,
    steps: usize,
    rng: &RngStream,
) -> Result<StateVector> {
    if steps == 0 {
        return domain("run_steps needs at least one step");
    }
    let mut r = rng.rng();
    Ok(StateVector::from_vec_unchecked(run_forward(
        kernel, start, steps, &mut r,
    )))
}
