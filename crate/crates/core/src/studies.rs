//! Simulation studies: seeded replicate loops producing tidy records.
//!
//! Replicate `r` of a study with base seed `s` draws its data from
//! `RngStream(s)/r/0` and its fans from `RngStream(s)/r/1/...`, so results
//! do not depend on thread count. Replicates run in parallel and are
//! returned in replicate order.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::eprocess::{step_sequential, BettingStrategy, EProcessState, FanSize};
use crate::error::{config, Result};
use crate::evalues::{check_alpha, log_bc_evalue, log_threshold};
use crate::exchangeable::fan_statistics;
use crate::kernels::{
    ar1_kernel, exact_kernel, mala_kernel, rwm_kernel, Ar1Kernel, TransitionKernel,
    DEFAULT_PROPOSAL_SD,
};
use crate::math::{log_add_exp, mean_se, median};
use crate::model::{
    gaussian_model, poe_student_t_model, poisson_model, LogModel, SharedModel, TExpert,
};
use crate::oracles::{delta_j_mean_shift, lr_mean_shift};
use crate::rng::RngStream;
use crate::statistic::{
    plug_in_gaussian_statistic, ulr_statistic, ConstantStatistic, FnStatistic, TestStatistic,
};

/// Float text with 17 significant digits; parses back to the same value.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// A flat record with a fixed column layout.
pub trait Record {
    fn header() -> &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

/// Named table of formatted records.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn from_records<R: Record>(name: &str, records: &[R]) -> Self {
        Self {
            name: name.to_string(),
            header: R::header().iter().map(|h| h.to_string()).collect(),
            rows: records.iter().map(Record::fields).collect(),
        }
    }
}

fn check_count(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return config(format!("{name} must be at least 1"));
    }
    Ok(())
}

fn replicate_streams(seed: u64, r: usize) -> (RngStream, RngStream) {
    let rep = RngStream::new(seed).child(r as u64);
    (rep.child(0), rep.child(1))
}

fn shared<M: LogModel + 'static>(m: M) -> SharedModel {
    Arc::new(m)
}

// ---------------------------------------------------------------------------
// Poisson mean test with exact sampling

#[derive(Debug, Clone, PartialEq)]
pub struct PoissonFig1Config {
    pub replicates: usize,
    pub n: usize,
    pub null_rate: f64,
    pub alt_rate: f64,
    /// Draw counts; each is a prefix of one fan of the largest size.
    pub draws: Vec<usize>,
    pub seed: u64,
}

impl PoissonFig1Config {
    pub fn desk() -> Self {
        Self {
            replicates: 1000,
            n: 100,
            null_rate: 1.0,
            alt_rate: 1.1,
            draws: vec![10, 100, 500, 1000],
            seed: 1,
        }
    }

    pub fn paper() -> Self {
        Self::desk()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoissonFig1Row {
    pub replicate: usize,
    pub m: usize,
    pub log_e_true: f64,
    pub log_e_hat: f64,
}

impl Record for PoissonFig1Row {
    fn header() -> &'static [&'static str] {
        &["replicate", "M", "log_E_true", "log_E_hat"]
    }
    fn fields(&self) -> Vec<String> {
        vec![
            self.replicate.to_string(),
            self.m.to_string(),
            fmt_float(self.log_e_true),
            fmt_float(self.log_e_hat),
        ]
    }
}

pub fn poisson_fig1(cfg: &PoissonFig1Config) -> Result<Vec<PoissonFig1Row>> {
    check_count("replicates", cfg.replicates)?;
    check_count("n", cfg.n)?;
    let m_max = cfg.draws.iter().copied().max().unwrap_or(0);
    check_count("M", cfg.draws.iter().copied().min().unwrap_or(0))?;
    let null = shared(poisson_model(cfg.null_rate, cfg.n)?);
    let alt = shared(poisson_model(cfg.alt_rate, cfg.n)?);
    let kernel = exact_kernel(null.clone())?;
    let stat = ulr_statistic(alt.clone(), null);
    let (log_ratio, rate_gap) = ((cfg.alt_rate / cfg.null_rate).ln(), cfg.alt_rate - cfg.null_rate);
    let per_rep: Vec<Vec<PoissonFig1Row>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let (data, fans) = replicate_streams(cfg.seed, r);
            let x = alt.sample(&mut data.rng()).expect("Poisson sampler");
            let log_e_true = x.iter().sum::<f64>() * log_ratio - rate_gap * cfg.n as f64;
            let f = &fan_statistics(&kernel, &stat, &x, 1, m_max, 1, &fans)?[0];
            Ok(cfg
                .draws
                .iter()
                .map(|&m| PoissonFig1Row {
                    replicate: r,
                    m,
                    log_e_true,
                    log_e_hat: log_bc_evalue(f.log_t_x, &f.log_t_draws[..m]),
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(per_rep.into_iter().flatten().collect())
}

// ---------------------------------------------------------------------------
// AR(1) mean shift: limit bias of the e-value

#[derive(Debug, Clone, PartialEq)]
pub struct Ar1Fig2Config {
    pub replicates: usize,
    pub phis: Vec<f64>,
    pub mu: f64,
    pub steps: usize,
    pub draws: usize,
    pub seed: u64,
}

impl Ar1Fig2Config {
    pub fn desk() -> Self {
        Self {
            replicates: 1000,
            phis: vec![0.3, 0.5, 0.8],
            mu: 1.0,
            steps: 1,
            draws: 1000,
            seed: 2,
        }
    }

    pub fn paper() -> Self {
        Self::desk()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ar1Fig2Row {
    pub replicate: usize,
    pub phi: f64,
    pub x: f64,
    pub y0: f64,
    pub log_e_true: f64,
    pub log_e_hat: f64,
    pub log_delta: f64,
}

impl Record for Ar1Fig2Row {
    fn header() -> &'static [&'static str] {
        &["replicate", "phi", "x", "y0", "log_E_true", "log_E_hat", "log_Delta"]
    }
    fn fields(&self) -> Vec<String> {
        vec![
            self.replicate.to_string(),
            fmt_float(self.phi),
            fmt_float(self.x),
            fmt_float(self.y0),
            fmt_float(self.log_e_true),
            fmt_float(self.log_e_hat),
            fmt_float(self.log_delta),
        ]
    }
}

/// `T(x) = exp(μx)` for scalar data.
fn exp_linear_statistic(mu: f64) -> impl TestStatistic {
    FnStatistic::new(format!("exp({mu}*x)"), move |x: &[f64]| mu * x[0])
}

/// Data are drawn from `N(μ, 1)` once per replicate and shared across `φ`.
pub fn ar1_fig2(cfg: &Ar1Fig2Config) -> Result<Vec<Ar1Fig2Row>> {
    check_count("replicates", cfg.replicates)?;
    let kernels = cfg
        .phis
        .iter()
        .map(|&p| ar1_kernel(p))
        .collect::<Result<Vec<_>>>()?;
    let stat = exp_linear_statistic(cfg.mu);
    let per_rep: Vec<Vec<Ar1Fig2Row>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let (data, fans) = replicate_streams(cfg.seed, r);
            let x = cfg.mu + data.rng().sample::<f64, _>(StandardNormal);
            cfg.phis
                .iter()
                .zip(&kernels)
                .enumerate()
                .map(|(i, (&phi, k))| {
                    let f = &fan_statistics(k, &stat, &[x], cfg.steps, cfg.draws, 1, &fans.child(i as u64))?[0];
                    let y0 = f.anchor[0];
                    Ok(Ar1Fig2Row {
                        replicate: r,
                        phi,
                        x,
                        y0,
                        log_e_true: lr_mean_shift(x, cfg.mu),
                        log_e_hat: log_bc_evalue(f.log_t_x, &f.log_t_draws),
                        log_delta: delta_j_mean_shift(y0, phi, cfg.mu, cfg.steps as u32)?,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_rep.into_iter().flatten().collect())
}

// ---------------------------------------------------------------------------
// AR(1) mean shift: power over steps and draws

#[derive(Debug, Clone, PartialEq)]
pub struct Ar1PowerConfig {
    pub replicates: usize,
    pub phi: f64,
    pub mu: f64,
    pub steps: Vec<usize>,
    /// Draw counts; each is a prefix of one fan of the largest size.
    pub draws: Vec<usize>,
    pub alpha: f64,
    pub seed: u64,
}

impl Ar1PowerConfig {
    pub fn paper() -> Self {
        Self {
            replicates: 2500,
            phi: 0.5,
            mu: 2.0,
            steps: vec![1, 3, 5, 10, 20],
            draws: vec![10, 50, 100, 500, 1000, 2500, 5000],
            alpha: 0.05,
            seed: 3,
        }
    }

    pub fn desk() -> Self {
        Self {
            replicates: 250,
            ..Self::paper()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerRow {
    pub replicate: usize,
    pub j: usize,
    pub m: usize,
    pub log_e_hat: f64,
    pub reject: bool,
}

impl Record for PowerRow {
    fn header() -> &'static [&'static str] {
        &["replicate", "J", "M", "log_E_hat", "reject"]
    }
    fn fields(&self) -> Vec<String> {
        vec![
            self.replicate.to_string(),
            self.j.to_string(),
            self.m.to_string(),
            fmt_float(self.log_e_hat),
            (self.reject as u8).to_string(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactLrRow {
    pub replicate: usize,
    pub x: f64,
    pub log_e_true: f64,
    pub reject: bool,
}

impl Record for ExactLrRow {
    fn header() -> &'static [&'static str] {
        &["replicate", "x", "log_E_true", "reject"]
    }
    fn fields(&self) -> Vec<String> {
        vec![
            self.replicate.to_string(),
            fmt_float(self.x),
            fmt_float(self.log_e_true),
            (self.reject as u8).to_string(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSummaryRow {
    pub j: usize,
    pub m: usize,
    pub power: f64,
    pub se: f64,
    pub lr_power: f64,
}

impl Record for PowerSummaryRow {
    fn header() -> &'static [&'static str] {
        &["J", "M", "power", "se", "lr_power"]
    }
    fn fields(&self) -> Vec<String> {
        vec![
            self.j.to_string(),
            self.m.to_string(),
            fmt_float(self.power),
            fmt_float(self.se),
            fmt_float(self.lr_power),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ar1PowerResult {
    pub rows: Vec<PowerRow>,
    pub exact: Vec<ExactLrRow>,
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

impl Ar1PowerResult {
    /// Rejection indicators of one condition, in replicate order.
    pub fn rejections(&self, j: usize, m: usize) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.j == j && r.m == m)
            .map(|r| indicator(r.reject))
            .collect()
    }

    pub fn lr_rejections(&self) -> Vec<f64> {
        self.exact.iter().map(|r| indicator(r.reject)).collect()
    }

    /// Power and its standard error.
    pub fn power(&self, j: usize, m: usize) -> (f64, f64) {
        mean_se(&self.rejections(j, m))
    }

    pub fn summary(&self, cfg: &Ar1PowerConfig) -> Vec<PowerSummaryRow> {
        let lr_power = mean_se(&self.lr_rejections()).0;
        let mut out = Vec::new();
        for &j in &cfg.steps {
            for &m in &cfg.draws {
                let (power, se) = self.power(j, m);
                out.push(PowerSummaryRow {
                    j,
                    m,
                    power,
                    se,
                    lr_power,
                });
            }
        }
        out
    }
}

/// Data `X ~ N(μ, 1)` are shared across `J`, and each `M` is a prefix of a
/// single fan per `(replicate, J)`.
pub fn ar1_power_fig3(cfg: &Ar1PowerConfig) -> Result<Ar1PowerResult> {
    check_count("replicates", cfg.replicates)?;
    check_alpha(cfg.alpha)?;
    check_count("M", cfg.draws.iter().copied().min().unwrap_or(0))?;
    check_count("J", cfg.steps.iter().copied().min().unwrap_or(0))?;
    let m_max = *cfg.draws.iter().max().expect("nonempty");
    let kernel = ar1_kernel(cfg.phi)?;
    let stat = exp_linear_statistic(cfg.mu);
    let cut = log_threshold(cfg.alpha);
    let per_rep: Vec<(Vec<PowerRow>, ExactLrRow)> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let (data, fans) = replicate_streams(cfg.seed, r);
            let x = cfg.mu + data.rng().sample::<f64, _>(StandardNormal);
            let log_e_true = lr_mean_shift(x, cfg.mu);
            let mut rows = Vec::new();
            for &j in &cfg.steps {
                let f = &fan_statistics(&kernel, &stat, &[x], j, m_max, 1, &fans.child(j as u64))?[0];
                for &m in &cfg.draws {
                    let log_e_hat = log_bc_evalue(f.log_t_x, &f.log_t_draws[..m]);
                    rows.push(PowerRow {
                        replicate: r,
                        j,
                        m,
                        log_e_hat,
                        reject: log_e_hat >= cut,
                    });
                }
            }
            let exact = ExactLrRow {
                replicate: r,
                x,
                log_e_true,
                reject: log_e_true >= cut,
            };
            Ok((rows, exact))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut exact = Vec::new();
    for (r, e) in per_rep {
        rows.extend(r);
        exact.push(e);
    }
    Ok(Ar1PowerResult { rows, exact })
}

// ---------------------------------------------------------------------------
// Sequential product-of-experts test with several chains

#[derive(Debug, Clone, PartialEq)]
pub struct PoeFig4Config {
    pub replicates: usize,
    pub n: usize,
    pub experts: Vec<TExpert>,
    pub alt_mean: f64,
    pub alt_var: f64,
    pub proposal_sd: f64,
    pub steps: usize,
    pub draws: usize,
    pub chains: Vec<usize>,
    pub seed: u64,
}

impl PoeFig4Config {
    pub fn paper() -> Self {
        Self {
            replicates: 500,
            n: 50,
            experts: vec![TExpert::new(-3.0, 1.0, 1.0), TExpert::new(0.0, 1.0, 10.0)],
            alt_mean: 0.0,
            alt_var: 1.0,
            proposal_sd: DEFAULT_PROPOSAL_SD,
            steps: 4,
            draws: 25,
            chains: vec![1, 4, 10],
            seed: 4,
        }
    }

    pub fn desk() -> Self {
        Self {
            replicates: 50,
            ..Self::paper()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoeRow {
    pub replicate: usize,
    pub s: usize,
    pub t: usize,
    pub x: f64,
    pub log_u: f64,
    pub log_wealth: f64,
}

impl Record for PoeRow {
    fn header() -> &'static [&'static str] {
        &["replicate", "S", "t", "x", "log_U", "log_wealth"]
    }
    fn fields(&self) -> Vec<String> {
        vec![
            self.replicate.to_string(),
            self.s.to_string(),
            self.t.to_string(),
            fmt_float(self.x),
            fmt_float(self.log_u),
            fmt_float(self.log_wealth),
        ]
    }
}

/// ULR processes (`λ = 1`) for each chain count on shared data. All chain
/// counts draw from the same per-time streams, so chain `s` is identical
/// across them and smaller `S` are nested in larger ones.
pub fn poe_fig4(cfg: &PoeFig4Config) -> Result<Vec<PoeRow>> {
    check_count("replicates", cfg.replicates)?;
    check_count("n", cfg.n)?;
    let null = shared(poe_student_t_model(&cfg.experts, 1)?);
    let alt = shared(gaussian_model(cfg.alt_mean, cfg.alt_var, 1)?);
    let kernel = rwm_kernel(null.clone(), cfg.proposal_sd)?;
    let stat = ulr_statistic(alt.clone(), null);
    let ulr = BettingStrategy::fixed(1.0)?;
    let sizes = cfg
        .chains
        .iter()
        .map(|&s| FanSize::new(cfg.steps, cfg.draws, s))
        .collect::<Result<Vec<_>>>()?;
    let per_rep: Vec<Vec<PoeRow>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let (data, fans) = replicate_streams(cfg.seed, r);
            let mut g = data.rng();
            let xs: Vec<f64> = (0..cfg.n)
                .map(|_| alt.sample(&mut g).expect("Gaussian sampler")[0])
                .collect();
            let mut rows = Vec::new();
            for size in &sizes {
                let mut state = EProcessState::new();
                for &x in &xs {
                    let prev = state.log_wealth;
                    state = step_sequential(&state, &[x], &stat, &kernel, *size, &ulr, &fans)?;
                    rows.push(PoeRow {
                        replicate: r,
                        s: size.chains,
                        t: state.t,
                        x,
                        log_u: state.log_wealth - prev,
                        log_wealth: state.log_wealth,
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(per_rep.into_iter().flatten().collect())
}

// ---------------------------------------------------------------------------
// Composite alternative: plug-in e-process against universal inference

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeFig5Config {
    pub replicates: usize,
    pub n: usize,
    pub alt_mean: f64,
    pub alt_var: f64,
    pub draws: usize,
    pub initial_lambda: f64,
    pub seed: u64,
}

impl CompositeFig5Config {
    pub fn paper() -> Self {
        Self {
            replicates: 1000,
            n: 200,
            alt_mean: 1.0,
            alt_var: 4.0,
            draws: 1000,
            initial_lambda: 0.5,
            seed: 5,
        }
    }

    pub fn desk() -> Self {
        Self {
            replicates: 100,
            ..Self::paper()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeRow {
    pub replicate: usize,
    pub t: usize,
    pub x: f64,
    pub log_u_bc: f64,
    pub lambda_bc: f64,
    pub log_wealth_bc: f64,
    pub log_d_lr: f64,
    pub lambda_lr: f64,
    pub log_wealth_lr: f64,
}

impl Record for CompositeRow {
    fn header() -> &'static [&'static str] {
        &[
            "replicate",
            "t",
            "x",
            "log_U_bc",
            "lambda_bc",
            "log_wealth_bc",
            "log_D_lr",
            "lambda_lr",
            "log_wealth_lr",
        ]
    }
    fn fields(&self) -> Vec<String> {
        vec![
            self.replicate.to_string(),
            self.t.to_string(),
            fmt_float(self.x),
            fmt_float(self.log_u_bc),
            fmt_float(self.lambda_bc),
            fmt_float(self.log_wealth_bc),
            fmt_float(self.log_d_lr),
            fmt_float(self.lambda_lr),
            fmt_float(self.log_wealth_lr),
        ]
    }
}

fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (x - mean).powi(2) / var)
}

/// Both processes bet with the empirical log-optimal fraction.
///
/// The soft-rank process at time `t` uses the plug-in statistic fitted to
/// `x_1..x_t` (including `x_t`), with `T ≡ 1` at `t = 1` where the fit is
/// degenerate. The universal-inference process uses the fit to `x_1..x_{t-1}`
/// and sets `D_t = 1` until two past points are available.
pub fn composite_fig5(cfg: &CompositeFig5Config) -> Result<Vec<CompositeRow>> {
    check_count("replicates", cfg.replicates)?;
    check_count("n", cfg.n)?;
    check_count("M", cfg.draws)?;
    let null = shared(gaussian_model(0.0, 1.0, 1)?);
    let kernel = exact_kernel(null)?;
    let strategy = BettingStrategy::grapa(cfg.initial_lambda)?;
    let size = FanSize::new(1, cfg.draws, 1)?;
    let sd = cfg.alt_var.sqrt();
    if !(sd > 0.0) {
        return config("alternative variance must be positive");
    }
    let per_rep: Vec<Vec<CompositeRow>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let (data, fans) = replicate_streams(cfg.seed, r);
            let mut g = data.rng();
            let xs: Vec<f64> = (0..cfg.n)
                .map(|_| cfg.alt_mean + sd * g.sample::<f64, _>(StandardNormal))
                .collect();
            let mut bc = EProcessState::new();
            let mut lr = EProcessState::new();
            let mut rows = Vec::with_capacity(cfg.n);
            for t in 1..=cfg.n {
                let x = xs[t - 1];
                let past: Vec<[f64; 1]> = xs[..t - 1].iter().map(|&v| [v]).collect();
                bc = if t == 1 {
                    step_sequential(&bc, &[x], &ConstantStatistic, &kernel, size, &strategy, &fans)?
                } else {
                    let stat = plug_in_gaussian_statistic(&past)?;
                    step_sequential(&bc, &[x], &stat, &kernel, size, &strategy, &fans)?
                };
                let log_d = if t <= 2 {
                    0.0
                } else {
                    let prior = &xs[..t - 1];
                    let k = prior.len() as f64;
                    let mean = prior.iter().sum::<f64>() / k;
                    let var = prior.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k;
                    log_normal_pdf(x, mean, var) - log_normal_pdf(x, 0.0, 1.0)
                };
                lr = lr.record(log_d, &strategy)?;
                rows.push(CompositeRow {
                    replicate: r,
                    t,
                    x,
                    log_u_bc: bc.u_history[t - 1].ln(),
                    lambda_bc: bc.lambda_history[t - 1],
                    log_wealth_bc: bc.log_wealth,
                    log_d_lr: log_d,
                    lambda_lr: lr.lambda_history[t - 1],
                    log_wealth_lr: lr.log_wealth,
                });
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(per_rep.into_iter().flatten().collect())
}

/// Per-replicate stopping times of both processes (`None` if never).
pub fn composite_stopping_times(
    rows: &[CompositeRow],
    alpha: f64,
) -> Result<Vec<(Option<usize>, Option<usize>)>> {
    check_alpha(alpha)?;
    let cut = log_threshold(alpha);
    let mut out: Vec<(Option<usize>, Option<usize>)> = Vec::new();
    let mut current = usize::MAX;
    for row in rows {
        if row.replicate != current {
            current = row.replicate;
            out.push((None, None));
        }
        let last = out.last_mut().expect("pushed above");
        if last.0.is_none() && row.log_wealth_bc >= cut {
            last.0 = Some(row.t);
        }
        if last.1.is_none() && row.log_wealth_lr >= cut {
            last.1 = Some(row.t);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Confidence-region coverage for a Gaussian mean

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageConfig {
    pub replicates: usize,
    pub grid: Vec<f64>,
    pub true_theta: f64,
    pub n: usize,
    pub alpha: f64,
    pub phi: f64,
    pub steps: usize,
    pub draws: usize,
    pub seed: u64,
}

impl CoverageConfig {
    pub fn desk() -> Self {
        Self {
            replicates: 1000,
            grid: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            true_theta: 0.0,
            n: 50,
            alpha: 0.1,
            phi: 0.5,
            steps: 1,
            draws: 100,
            seed: 6,
        }
    }

    pub fn paper() -> Self {
        Self::desk()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRow {
    pub replicate: usize,
    pub theta: f64,
    pub log_e: f64,
    pub in_region: bool,
}

impl Record for CoverageRow {
    fn header() -> &'static [&'static str] {
        &["replicate", "theta", "log_e", "in_region"]
    }
    fn fields(&self) -> Vec<String> {
        vec![
            self.replicate.to_string(),
            fmt_float(self.theta),
            fmt_float(self.log_e),
            (self.in_region as u8).to_string(),
        ]
    }
}

/// Statistic `n (x̄ - θ)² / 2` for the null `N(θ, 1)^n`.
pub fn mean_distance_statistic(theta: f64) -> impl TestStatistic {
    FnStatistic::new(format!("mean_distance(theta={theta})"), move |x: &[f64]| {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        0.5 * n * (m - theta).powi(2)
    })
}

/// Data `N(θ*, 1)^n`; each grid point is tested with an AR(1) kernel
/// centred at that point.
pub fn coverage(cfg: &CoverageConfig) -> Result<Vec<CoverageRow>> {
    check_count("replicates", cfg.replicates)?;
    check_count("n", cfg.n)?;
    check_alpha(cfg.alpha)?;
    if cfg.grid.is_empty() {
        return config("coverage needs a nonempty grid");
    }
    let cut = log_threshold(cfg.alpha);
    let kernels = cfg
        .grid
        .iter()
        .map(|&th| Ar1Kernel::with_center(cfg.phi, th))
        .collect::<Result<Vec<_>>>()?;
    let per_rep: Vec<Vec<CoverageRow>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let (data, fans) = replicate_streams(cfg.seed, r);
            let mut g = data.rng();
            let x: Vec<f64> = (0..cfg.n)
                .map(|_| cfg.true_theta + g.sample::<f64, _>(StandardNormal))
                .collect();
            cfg.grid
                .iter()
                .zip(&kernels)
                .enumerate()
                .map(|(i, (&theta, k))| {
                    let stat = mean_distance_statistic(theta);
                    let f = &fan_statistics(k, &stat, &x, cfg.steps, cfg.draws, 1, &fans.child(i as u64))?[0];
                    let log_e = log_bc_evalue(f.log_t_x, &f.log_t_draws);
                    Ok(CoverageRow {
                        replicate: r,
                        theta,
                        log_e,
                        in_region: log_e < cut,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_rep.into_iter().flatten().collect())
}

// ---------------------------------------------------------------------------
// Null validity sweep

/// Null model, kernel and statistic for one validity cell family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ValidityModel {
    /// `Poisson(1)^n` with exact sampling, ULR against `Poisson(1.1)`.
    PoissonExact { n: usize },
    /// `N(0, 1)` with the AR(1) kernel, ULR against `N(1, 1)`.
    Ar1 { phi: f64 },
    /// Two-expert t product with random-walk Metropolis, ULR against `N(0, 1)`.
    PoeRwm,
}

type ValidityParts = (SharedModel, Box<dyn TransitionKernel>, Box<dyn TestStatistic>);

impl ValidityModel {
    pub fn label(&self) -> String {
        match self {
            Self::PoissonExact { n } => format!("poisson_exact(n={n})"),
            Self::Ar1 { phi } => format!("ar1(phi={phi})"),
            Self::PoeRwm => "poe_rwm".to_string(),
        }
    }

    fn build(&self) -> Result<ValidityParts> {
        Ok(match *self {
            Self::PoissonExact { n } => {
                let p = shared(poisson_model(1.0, n)?);
                let q = shared(poisson_model(1.1, n)?);
                (p.clone(), Box::new(exact_kernel(p.clone())?), Box::new(ulr_statistic(q, p)))
            }
            Self::Ar1 { phi } => {
                let p = shared(gaussian_model(0.0, 1.0, 1)?);
                let q = shared(gaussian_model(1.0, 1.0, 1)?);
                (p.clone(), Box::new(ar1_kernel(phi)?), Box::new(ulr_statistic(q, p)))
            }
            Self::PoeRwm => {
                let p = shared(poe_student_t_model(&PoeFig4Config::paper().experts, 1)?);
                let q = shared(gaussian_model(0.0, 1.0, 1)?);
                (
                    p.clone(),
                    Box::new(rwm_kernel(p.clone(), DEFAULT_PROPOSAL_SD)?),
                    Box::new(ulr_statistic(q, p)),
                )
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidityConfig {
    pub models: Vec<ValidityModel>,
    pub steps: Vec<usize>,
    pub draws: Vec<usize>,
    pub chains: Vec<usize>,
    pub replicates: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl ValidityConfig {
    pub fn desk() -> Self {
        Self {
            models: vec![
                ValidityModel::PoissonExact { n: 10 },
                ValidityModel::Ar1 { phi: 0.3 },
                ValidityModel::Ar1 { phi: 0.5 },
                ValidityModel::Ar1 { phi: 0.8 },
                ValidityModel::PoeRwm,
            ],
            steps: vec![1, 4],
            draws: vec![10, 100],
            chains: vec![1, 4],
            replicates: 2000,
            alpha: 0.05,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidityCell {
    pub model: String,
    pub j: usize,
    pub m: usize,
    pub s: usize,
    pub mean_e: f64,
    pub se_e: f64,
    pub reject_rate: f64,
    pub reject_se: f64,
}

impl Record for ValidityCell {
    fn header() -> &'static [&'static str] {
        &["model", "J", "M", "S", "mean_e", "se_e", "reject_rate", "reject_se"]
    }
    fn fields(&self) -> Vec<String> {
        vec![
            self.model.clone(),
            self.j.to_string(),
            self.m.to_string(),
            self.s.to_string(),
            fmt_float(self.mean_e),
            fmt_float(self.se_e),
            fmt_float(self.reject_rate),
            fmt_float(self.reject_se),
        ]
    }
}

/// Null Monte Carlo mean and rejection rate of the (multi-chain) e-value
/// for every model and `(J, M, S)` combination.
pub fn validity_sweep(cfg: &ValidityConfig) -> Result<Vec<ValidityCell>> {
    check_count("replicates", cfg.replicates)?;
    check_alpha(cfg.alpha)?;
    let cut = log_threshold(cfg.alpha);
    let mut cells = Vec::new();
    for (mi, model) in cfg.models.iter().enumerate() {
        let (null, kernel, stat) = model.build()?;
        for &j in &cfg.steps {
            for &m in &cfg.draws {
                for &s in &cfg.chains {
                    let cell_seed = RngStream::with_path(cfg.seed, &[mi as u64, j as u64, m as u64, s as u64]);
                    let log_e: Vec<f64> = (0..cfg.replicates)
                        .into_par_iter()
                        .map(|r| {
                            let rep = cell_seed.child(r as u64);
                            let x = null.sample(&mut rep.child(0).rng()).expect("null sampler");
                            let fans = fan_statistics(kernel.as_ref(), stat.as_ref(), &x, j, m, s, &rep.child(1))?;
                            let per_chain: Vec<f64> =
                                fans.iter().map(|f| log_bc_evalue(f.log_t_x, &f.log_t_draws)).collect();
                            Ok(per_chain.iter().fold(f64::NEG_INFINITY, |a, &b| log_add_exp(a, b))
                                - (s as f64).ln())
                        })
                        .collect::<Result<_>>()?;
                    let e: Vec<f64> = log_e.iter().map(|l| l.exp()).collect();
                    let rej: Vec<f64> = log_e.iter().map(|&l| indicator(l >= cut)).collect();
                    let (mean_e, se_e) = mean_se(&e);
                    let (reject_rate, _) = mean_se(&rej);
                    cells.push(ValidityCell {
                        model: model.label(),
                        j,
                        m,
                        s,
                        mean_e,
                        se_e,
                        reject_rate,
                        reject_se: (cfg.alpha * (1.0 - cfg.alpha) / cfg.replicates as f64).sqrt(),
                    });
                }
            }
        }
    }
    Ok(cells)
}

// ---------------------------------------------------------------------------
// Rank uniformity of the observed point among its exchangeable draws

#[derive(Debug, Clone, PartialEq)]
pub struct RankTest {
    pub kernel: String,
    pub counts: Vec<usize>,
    pub chi2: f64,
    pub p_value: f64,
}

/// Null kernels checked for exchangeability.
pub fn rank_test_kernels() -> Result<Vec<(SharedModel, Box<dyn TransitionKernel>)>> {
    let gauss = shared(gaussian_model(0.0, 1.0, 1)?);
    let poe = shared(poe_student_t_model(&PoeFig4Config::paper().experts, 1)?);
    Ok(vec![
        (gauss.clone(), Box::new(ar1_kernel(0.5)?)),
        (gauss.clone(), Box::new(exact_kernel(gauss)?)),
        (poe.clone(), Box::new(rwm_kernel(poe.clone(), DEFAULT_PROPOSAL_SD)?)),
        (poe.clone(), Box::new(mala_kernel(poe, 0.5)?)),
    ])
}

/// Rank of `x[0]` among the pooled `x` and `M` draws, uniform on
/// `0..=M` under exchangeability. Ties (rejected Metropolis moves) are
/// broken uniformly at random.
pub fn rank_uniformity(
    null: &dyn LogModel,
    kernel: &dyn TransitionKernel,
    steps: usize,
    draws: usize,
    replicates: usize,
    seed: u64,
) -> Result<RankTest> {
    check_count("replicates", replicates)?;
    let first = FnStatistic::new("first_coordinate", |x: &[f64]| x[0]);
    let base = RngStream::new(seed);
    let ranks: Vec<usize> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let rep = base.child(r as u64);
            let x = null.sample(&mut rep.child(0).rng()).expect("null sampler");
            let f = &fan_statistics(kernel, &first, &x, steps, draws, 1, &rep.child(1))?[0];
            let below = f.log_t_draws.iter().filter(|&&v| v < f.log_t_x).count();
            let ties = f.log_t_draws.iter().filter(|&&v| v == f.log_t_x).count();
            let extra = if ties > 0 {
                rep.child(2).rng().random_range(0..=ties)
            } else {
                0
            };
            Ok(below + extra)
        })
        .collect::<Result<_>>()?;
    let bins = draws + 1;
    let mut counts = vec![0usize; bins];
    for r in ranks {
        counts[r] += 1;
    }
    let expected = replicates as f64 / bins as f64;
    let chi2: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let dist = ChiSquared::new((bins - 1) as f64).map_err(|e| crate::Error::Domain(e.to_string()))?;
    Ok(RankTest {
        kernel: kernel.id().to_string(),
        counts,
        chi2,
        p_value: 1.0 - dist.cdf(chi2),
    })
}

// ---------------------------------------------------------------------------
// Summaries shared by the acceptance checks and the command line

/// Median over replicates of `value(row)` at each time point, for records
/// stored replicate-major with times `1..=n`.
pub fn median_by_time<R>(rows: &[R], n: usize, t_of: impl Fn(&R) -> usize, value: impl Fn(&R) -> f64) -> Vec<f64> {
    let mut by_t = vec![Vec::new(); n];
    for r in rows {
        by_t[t_of(r) - 1].push(value(r));
    }
    by_t.iter().map(|v| median(v)).collect()
}
