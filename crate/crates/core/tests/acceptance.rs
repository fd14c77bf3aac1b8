//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs without the libtest harness so the lines always print.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;

use bcev::eprocess::grapa_lambda;
use bcev::kernels::{ar1_kernel, TransitionKernel};
use bcev::math::{linear_fit, mean_se, median};
use bcev::oracles::{
    delta_epower_check, delta_j_mean_shift, delta_j_rescale, epower_delta_mean_shift,
    exact_delta_evariable_check, inv_delta_conditional_mean, kl_mixing_mean_shift,
    kl_mixing_rescale, quadrature_delta_backward, quadrature_delta_forward,
    quadrature_inv_delta_conditional, quadrature_kl_to_standard,
};
use bcev::rng::RngStream;
use bcev::studies::{
    ar1_fig2, ar1_power_fig3, composite_fig5, composite_stopping_times, coverage, median_by_time,
    poe_fig4, poisson_fig1, rank_test_kernels, rank_uniformity, validity_sweep, Ar1Fig2Config,
    Ar1PowerConfig, CompositeFig5Config, CoverageConfig, PoeFig4Config, PoissonFig1Config,
    ValidityConfig,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn validity_sweep_check() -> Outcome {
    let cells = validity_sweep(&ValidityConfig::desk()).expect("sweep");
    let mut failures = Vec::new();
    let mut worst_mean = f64::NEG_INFINITY;
    let mut worst_rate = f64::NEG_INFINITY;
    for c in &cells {
        let mean_margin = c.mean_e - (1.0 + 3.0 * c.se_e);
        let rate_margin = c.reject_rate - (0.05 + 3.0 * c.reject_se);
        worst_mean = worst_mean.max(c.mean_e);
        worst_rate = worst_rate.max(c.reject_rate);
        if mean_margin > 0.0 || rate_margin > 0.0 {
            failures.push(format!(
                "{} J={} M={} S={}: mean {:.4} (se {:.4}), P(e>=20) {:.4}",
                c.model, c.j, c.m, c.s, c.mean_e, c.se_e, c.reject_rate
            ));
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{} cells; largest mean e {:.4}, largest P(e>=20) {:.4}{}",
            cells.len(),
            worst_mean,
            worst_rate,
            if failures.is_empty() {
                String::new()
            } else {
                format!("; failing: {}", failures.join(" | "))
            }
        ),
    )
}

fn poisson_convergence_check() -> Outcome {
    let cfg = PoissonFig1Config::desk();
    let rows = poisson_fig1(&cfg).expect("poisson study");
    let msd: Vec<f64> = cfg
        .draws
        .iter()
        .map(|&m| {
            let d: Vec<f64> = rows
                .iter()
                .filter(|r| r.m == m)
                .map(|r| (r.log_e_hat - r.log_e_true).powi(2))
                .collect();
            d.iter().sum::<f64>() / d.len() as f64
        })
        .collect();
    let at_max: Vec<&_> = rows.iter().filter(|r| r.m == 1000).collect();
    let x: Vec<f64> = at_max.iter().map(|r| r.log_e_true).collect();
    let y: Vec<f64> = at_max.iter().map(|r| r.log_e_hat).collect();
    let (_, slope, r2) = linear_fit(&x, &y);
    let decreasing = msd.windows(2).all(|w| w[1] < w[0]);
    outcome(
        (0.95..=1.05).contains(&slope) && r2 >= 0.99 && decreasing,
        format!("slope {slope:.4}, R^2 {r2:.5}, mean squared deviation by M {msd:.5?}"),
    )
}

fn ar1_limit_check() -> Outcome {
    let cfg = Ar1Fig2Config::desk();
    let rows = ar1_fig2(&cfg).expect("ar1 study");
    let mut ok = true;
    let mut corrected = Vec::new();
    let mut raw_bias = Vec::new();
    for &phi in &cfg.phis {
        let sel: Vec<&_> = rows.iter().filter(|r| r.phi == phi).collect();
        let c: Vec<f64> = sel
            .iter()
            .map(|r| r.log_delta + r.log_e_hat - r.log_e_true)
            .collect();
        let (m, se) = mean_se(&c);
        ok &= m.abs() <= 0.02;
        corrected.push(format!("phi={phi}: {m:+.4} (se {se:.4})"));
        let b: Vec<f64> = sel.iter().map(|r| r.log_e_hat - r.log_e_true).collect();
        raw_bias.push(mean_se(&b).0);
    }
    let monotone = raw_bias.windows(2).all(|w| w[1] < w[0]);
    outcome(
        ok && monotone,
        format!(
            "corrected mean deviation [{}]; uncorrected bias {raw_bias:.4?}",
            corrected.join(", ")
        ),
    )
}

fn power_check() -> Outcome {
    let cfg = Ar1PowerConfig::desk();
    let res = ar1_power_fig3(&cfg).expect("power study");
    let m_max = *cfg.draws.iter().max().unwrap();
    let paired = |a: &[f64], b: &[f64]| {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        mean_se(&d)
    };
    let (p1, _) = res.power(1, m_max);
    let (p3, _) = res.power(3, m_max);
    let jump = p3 - p1 >= 0.05;
    let mut monotone = true;
    for &j in &cfg.steps {
        for w in cfg.draws.windows(2) {
            let (d, se) = paired(&res.rejections(j, w[1]), &res.rejections(j, w[0]));
            if d < -3.0 * se {
                monotone = false;
            }
        }
    }
    let j_max = *cfg.steps.iter().max().unwrap();
    let (gap, gap_se) = paired(&res.rejections(j_max, m_max), &res.lr_rejections());
    let (p_lr, _) = mean_se(&res.lr_rejections());
    let near_lr = gap.abs() <= 3.0 * gap_se.max(1.0 / cfg.replicates as f64);
    outcome(
        jump && monotone && near_lr,
        format!(
            "M={m_max}: power J=1 {p1:.3}, J=3 {p3:.3}; J={j_max} vs exact LR {:.3} vs {p_lr:.3} \
             (paired se {gap_se:.3}); non-decreasing in M: {monotone}",
            p_lr + gap
        ),
    )
}

fn multichain_check() -> Outcome {
    let cfg = PoeFig4Config {
        replicates: 100,
        n: 25,
        chains: vec![1, 4],
        ..PoeFig4Config::desk()
    };
    let rows = poe_fig4(&cfg).expect("poe study");
    let last = |s: usize| -> Vec<f64> {
        rows.iter()
            .filter(|r| r.s == s && r.t == cfg.n)
            .map(|r| r.log_wealth)
            .collect()
    };
    let (w1, w4) = (last(1), last(4));
    let d: Vec<f64> = w4.iter().zip(&w1).map(|(a, b)| a - b).collect();
    let (m, se) = mean_se(&d);
    outcome(
        m >= -3.0 * se,
        format!(
            "mean final log wealth S=1 {:.3}, S=4 {:.3}; paired difference {m:.3} (se {se:.3})",
            mean_se(&w1).0,
            mean_se(&w4).0
        ),
    )
}

fn exact_delta_check() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, &(phi, mu, j)) in [(0.5, 2.0, 1u32), (0.8, 1.0, 3)].iter().enumerate() {
        let c = exact_delta_evariable_check(phi, mu, j, 1_000_000, &RngStream::new(100 + i as u64))
            .expect("delta check");
        let (lm, lse) = delta_epower_check(phi, mu, j, 1_000_000, &RngStream::new(200 + i as u64))
            .expect("epower check");
        let target = epower_delta_mean_shift(phi, mu, j).unwrap();
        ok &= (c.mean_delta - 1.0).abs() <= 5.0 * c.se_delta;
        ok &= (c.mean_inv_delta - 1.0).abs() <= 5.0 * c.se_inv_delta;
        ok &= (lm - target).abs() <= 5.0 * lse;
        parts.push(format!(
            "(phi={phi}, mu={mu}, J={j}): E_P[D] {:.4}±{:.4}, E_Q[1/D] {:.4}±{:.4}, E[log D] {lm:.4}±{lse:.4} vs {target:.4}",
            c.mean_delta, c.se_delta, c.mean_inv_delta, c.se_inv_delta
        ));
    }
    outcome(ok, parts.join("; "))
}

fn objective(u: &[f64], l: f64) -> f64 {
    u.iter().map(|&x| (1.0 - l + l * x).ln()).sum::<f64>() / u.len() as f64
}

fn grapa_check() -> Outcome {
    let mut g = RngStream::new(300).rng();
    let mut worst_lambda = 0.0f64;
    let mut worst_obj = 0.0f64;
    let grid = 100_000;
    for _ in 0..100 {
        let len = g.random_range(1..=60);
        let shift: f64 = g.random_range(-0.5..0.5);
        let u: Vec<f64> = (0..len)
            .map(|_| (shift + 0.8 * g.sample::<f64, _>(StandardNormal)).exp())
            .collect();
        let l = grapa_lambda(&u, 0.5).unwrap();
        let (mut best_l, mut best_v) = (0.0, f64::NEG_INFINITY);
        for i in 0..=grid {
            let c = i as f64 / grid as f64;
            let v = objective(&u, c);
            if v > best_v {
                best_v = v;
                best_l = c;
            }
        }
        worst_lambda = worst_lambda.max((l - best_l).abs());
        worst_obj = worst_obj.max(best_v - objective(&u, l));
    }
    outcome(
        worst_lambda <= 1e-4 && worst_obj <= 1e-8,
        format!("max |lambda - grid| {worst_lambda:.2e}, max objective shortfall {worst_obj:.2e}"),
    )
}

fn composite_check() -> Outcome {
    let cfg = CompositeFig5Config {
        replicates: 200,
        ..CompositeFig5Config::desk()
    };
    let rows = composite_fig5(&cfg).expect("composite study");
    let stops = composite_stopping_times(&rows, 0.05).unwrap();
    let never = (cfg.n + 1) as f64;
    let tau = |f: fn(&StopPair) -> Option<usize>| -> f64 {
        median(&stops.iter().map(|s| f(s).map_or(never, |t| t as f64)).collect::<Vec<_>>())
    };
    let tau_bc = tau(|s| s.0);
    let tau_lr = tau(|s| s.1);
    let med = median_by_time(&rows, cfg.n, |r| r.t, |r| r.log_wealth_bc);
    let lowest = med.iter().copied().fold(f64::INFINITY, f64::min);
    outcome(
        tau_bc <= tau_lr && lowest >= -1.0,
        format!(
            "median stopping time BC {tau_bc} vs LR {tau_lr}; lowest median BC log wealth {lowest:.3}"
        ),
    )
}

fn coverage_check() -> Outcome {
    let cfg = CoverageConfig::desk();
    let rows = coverage(&cfg).expect("coverage study");
    let miss: Vec<f64> = rows
        .iter()
        .filter(|r| r.theta == cfg.true_theta)
        .map(|r| if r.in_region { 0.0 } else { 1.0 })
        .collect();
    let rate = miss.iter().sum::<f64>() / miss.len() as f64;
    let se = (cfg.alpha * (1.0 - cfg.alpha) / miss.len() as f64).sqrt();
    outcome(
        rate <= cfg.alpha + 3.0 * se,
        format!("miscoverage {rate:.4} over {} replicates (bound {:.4})", miss.len(), cfg.alpha + 3.0 * se),
    )
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn oracle_check() -> Outcome {
    let mut worst = 0.0f64;
    for phi in [0.0f64, 0.3, 0.5, 0.8, 0.95] {
        for j in [1u32, 2, 5] {
            for y0 in [-2.0, 0.0, 1.5] {
                for mu in [0.5, 1.0, 2.0] {
                    let exact = delta_j_mean_shift(y0, phi, mu, j).unwrap().exp();
                    worst = worst.max(rel(quadrature_delta_forward(mu, 1.0, y0, phi, j).unwrap(), exact));
                    worst = worst.max(rel(quadrature_delta_backward(mu, 1.0, y0, phi, j).unwrap(), exact));
                    let inv = inv_delta_conditional_mean(y0, phi, mu, j).unwrap().exp();
                    worst = worst.max(rel(quadrature_inv_delta_conditional(y0, phi, mu, j).unwrap(), inv));
                    let r = phi.powi(j as i32);
                    if r != 0.0 {
                        let kl = kl_mixing_mean_shift(phi, mu, j).unwrap();
                        worst = worst.max(rel(quadrature_kl_to_standard(r * mu, 1.0).unwrap(), kl));
                    }
                }
                for s2 in [0.25, 0.5, 2.0, 4.0] {
                    let exact = delta_j_rescale(y0, phi, s2, j).unwrap().exp();
                    worst = worst.max(rel(quadrature_delta_forward(0.0, s2, y0, phi, j).unwrap(), exact));
                    worst = worst.max(rel(quadrature_delta_backward(0.0, s2, y0, phi, j).unwrap(), exact));
                    let r = phi.powi(j as i32);
                    if r != 0.0 {
                        let kl = kl_mixing_rescale(phi, s2, j).unwrap();
                        let v = r * r * s2 + 1.0 - r * r;
                        worst = worst.max(rel(quadrature_kl_to_standard(0.0, v).unwrap(), kl));
                    }
                }
            }
        }
    }

    let mut g = RngStream::new(400).rng();
    let mut balance = 0.0f64;
    for phi in [0.3, 0.5, 0.8, -0.6] {
        let k = ar1_kernel(phi).unwrap();
        for _ in 0..1000 {
            let x: f64 = 3.0 * g.sample::<f64, _>(StandardNormal);
            let y: f64 = 3.0 * g.sample::<f64, _>(StandardNormal);
            let lp = |v: f64| -0.5 * v * v;
            let a = lp(x) + k.log_transition_density(&[x], &[y]).unwrap();
            let b = lp(y) + k.log_transition_density(&[y], &[x]).unwrap();
            balance = balance.max((a - b).abs());
        }
    }

    let mut ranks = Vec::new();
    let mut ranks_ok = true;
    for (i, (null, kernel)) in rank_test_kernels().unwrap().iter().enumerate() {
        let t = rank_uniformity(null.as_ref(), kernel.as_ref(), 2, 9, 10_000, 500 + i as u64).unwrap();
        ranks_ok &= t.p_value > 0.001;
        ranks.push(format!("{} p={:.3}", t.kernel, t.p_value));
    }
    outcome(
        worst < 1e-6 && balance <= 1e-10 && ranks_ok,
        format!(
            "max quadrature relative error {worst:.2e}; max detailed-balance log gap {balance:.2e}; rank tests [{}]",
            ranks.join(", ")
        ),
    )
}

type Criterion = fn() -> Outcome;
type StopPair = (Option<usize>, Option<usize>);

fn main() {
    let criteria: Vec<(&str, Criterion)> = vec![
        ("1 null validity sweep", validity_sweep_check),
        ("2 exact-sampling convergence (Poisson)", poisson_convergence_check),
        ("3 limit correction (AR(1))", ar1_limit_check),
        ("4 power ordering (AR(1))", power_check),
        ("5 multi-chain e-power (product of experts)", multichain_check),
        ("6 exact correction e-variables", exact_delta_check),
        ("7 GRAPA against grid search", grapa_check),
        ("8 plug-in vs universal-inference e-process", composite_check),
        ("9 confidence region coverage", coverage_check),
        ("10 oracle cross-checks", oracle_check),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let o = check();
        let secs = start.elapsed().as_secs_f64();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {name} [{secs:.1}s]: {}", o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
