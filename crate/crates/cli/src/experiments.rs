//! Named simulation studies.

use bcev::studies::{
    ar1_fig2, ar1_power_fig3, composite_fig5, coverage, poe_fig4, poisson_fig1, validity_sweep,
    Ar1Fig2Config, Ar1PowerConfig, CompositeFig5Config, CoverageConfig, PoeFig4Config,
    PoissonFig1Config, Table, ValidityConfig,
};

use crate::config::RawConfig;
use crate::error::{CliError, CliResult};

pub const NAMES: [&str; 7] = [
    "poisson_fig1",
    "ar1_fig2",
    "ar1_power_fig3",
    "poe_fig4",
    "composite_fig5",
    "coverage",
    "validity",
];

#[derive(Debug, Clone)]
pub enum Study {
    PoissonFig1(PoissonFig1Config),
    Ar1Fig2(Ar1Fig2Config),
    Ar1Power(Ar1PowerConfig),
    PoeFig4(PoeFig4Config),
    CompositeFig5(CompositeFig5Config),
    Coverage(CoverageConfig),
    Validity(ValidityConfig),
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> CliResult<T> {
    v.trim()
        .parse()
        .map_err(|_| CliError::Config(format!("[experiment] {key} = {v:?} is not valid")))
}

impl Study {
    pub fn new(name: &str, paper_scale: bool) -> CliResult<Self> {
        Ok(match (name, paper_scale) {
            ("poisson_fig1", false) => Self::PoissonFig1(PoissonFig1Config::desk()),
            ("poisson_fig1", true) => Self::PoissonFig1(PoissonFig1Config::paper()),
            ("ar1_fig2", false) => Self::Ar1Fig2(Ar1Fig2Config::desk()),
            ("ar1_fig2", true) => Self::Ar1Fig2(Ar1Fig2Config::paper()),
            ("ar1_power_fig3", false) => Self::Ar1Power(Ar1PowerConfig::desk()),
            ("ar1_power_fig3", true) => Self::Ar1Power(Ar1PowerConfig::paper()),
            ("poe_fig4", false) => Self::PoeFig4(PoeFig4Config::desk()),
            ("poe_fig4", true) => Self::PoeFig4(PoeFig4Config::paper()),
            ("composite_fig5", false) => Self::CompositeFig5(CompositeFig5Config::desk()),
            ("composite_fig5", true) => Self::CompositeFig5(CompositeFig5Config::paper()),
            ("coverage", false) => Self::Coverage(CoverageConfig::desk()),
            ("coverage", true) => Self::Coverage(CoverageConfig::paper()),
            ("validity", _) => Self::Validity(ValidityConfig::desk()),
            (other, _) => {
                return Err(CliError::Config(format!(
                    "unknown experiment {other:?}; expected one of {}",
                    NAMES.join(", ")
                )))
            }
        })
    }

    /// Applies an `[experiment]` override.
    pub fn set(&mut self, key: &str, v: &str) -> CliResult<()> {
        let unknown = || {
            Err(CliError::Config(format!(
                "[experiment] {key} does not apply to this experiment"
            )))
        };
        match (self, key) {
            (Self::PoissonFig1(c), "replicates") => c.replicates = parse(key, v)?,
            (Self::PoissonFig1(c), "seed") => c.seed = parse(key, v)?,
            (Self::PoissonFig1(c), "n") => c.n = parse(key, v)?,
            (Self::Ar1Fig2(c), "replicates") => c.replicates = parse(key, v)?,
            (Self::Ar1Fig2(c), "seed") => c.seed = parse(key, v)?,
            (Self::Ar1Power(c), "replicates") => c.replicates = parse(key, v)?,
            (Self::Ar1Power(c), "seed") => c.seed = parse(key, v)?,
            (Self::Ar1Power(c), "alpha") => c.alpha = parse(key, v)?,
            (Self::PoeFig4(c), "replicates") => c.replicates = parse(key, v)?,
            (Self::PoeFig4(c), "seed") => c.seed = parse(key, v)?,
            (Self::PoeFig4(c), "n") => c.n = parse(key, v)?,
            (Self::PoeFig4(c), "proposal_sd") => c.proposal_sd = parse(key, v)?,
            (Self::CompositeFig5(c), "replicates") => c.replicates = parse(key, v)?,
            (Self::CompositeFig5(c), "seed") => c.seed = parse(key, v)?,
            (Self::CompositeFig5(c), "n") => c.n = parse(key, v)?,
            (Self::Coverage(c), "replicates") => c.replicates = parse(key, v)?,
            (Self::Coverage(c), "seed") => c.seed = parse(key, v)?,
            (Self::Coverage(c), "n") => c.n = parse(key, v)?,
            (Self::Coverage(c), "alpha") => c.alpha = parse(key, v)?,
            (Self::Validity(c), "replicates") => c.replicates = parse(key, v)?,
            (Self::Validity(c), "seed") => c.seed = parse(key, v)?,
            (Self::Validity(c), "alpha") => c.alpha = parse(key, v)?,
            _ => return unknown(),
        }
        Ok(())
    }

    /// Effective values of every overridable setting.
    pub fn settings(&self) -> Vec<(&'static str, String)> {
        let s = |v: &dyn ToString| v.to_string();
        match self {
            Self::PoissonFig1(c) => vec![
                ("replicates", s(&c.replicates)),
                ("seed", s(&c.seed)),
                ("n", s(&c.n)),
            ],
            Self::Ar1Fig2(c) => vec![("replicates", s(&c.replicates)), ("seed", s(&c.seed))],
            Self::Ar1Power(c) => vec![
                ("replicates", s(&c.replicates)),
                ("seed", s(&c.seed)),
                ("alpha", s(&c.alpha)),
            ],
            Self::PoeFig4(c) => vec![
                ("replicates", s(&c.replicates)),
                ("seed", s(&c.seed)),
                ("n", s(&c.n)),
                ("proposal_sd", s(&c.proposal_sd)),
            ],
            Self::CompositeFig5(c) => vec![
                ("replicates", s(&c.replicates)),
                ("seed", s(&c.seed)),
                ("n", s(&c.n)),
            ],
            Self::Coverage(c) => vec![
                ("replicates", s(&c.replicates)),
                ("seed", s(&c.seed)),
                ("n", s(&c.n)),
                ("alpha", s(&c.alpha)),
            ],
            Self::Validity(c) => vec![
                ("replicates", s(&c.replicates)),
                ("seed", s(&c.seed)),
                ("alpha", s(&c.alpha)),
            ],
        }
    }

    /// Tables produced by the study; the first is the one printed.
    pub fn run(&self, name: &str) -> CliResult<Vec<Table>> {
        Ok(match self {
            Self::PoissonFig1(c) => vec![Table::from_records(name, &poisson_fig1(c)?)],
            Self::Ar1Fig2(c) => vec![Table::from_records(name, &ar1_fig2(c)?)],
            Self::Ar1Power(c) => {
                let r = ar1_power_fig3(c)?;
                vec![
                    Table::from_records(&format!("{name}_summary"), &r.summary(c)),
                    Table::from_records(name, &r.rows),
                    Table::from_records(&format!("{name}_lr"), &r.exact),
                ]
            }
            Self::PoeFig4(c) => vec![Table::from_records(name, &poe_fig4(c)?)],
            Self::CompositeFig5(c) => vec![Table::from_records(name, &composite_fig5(c)?)],
            Self::Coverage(c) => vec![Table::from_records(name, &coverage(c)?)],
            Self::Validity(c) => vec![Table::from_records(name, &validity_sweep(c)?)],
        })
    }
}

/// Resolves the study from `[experiment]`, a positional name, flags and
/// overrides, and returns it with the manifest that reproduces it.
pub fn resolve(
    raw: &RawConfig,
    name: Option<&str>,
    paper_scale: bool,
    seed: Option<u64>,
) -> CliResult<(String, Study, RawConfig)> {
    let name = name
        .or_else(|| raw.get("experiment", "id"))
        .ok_or_else(|| CliError::Config("no experiment named; pass NAME or set [experiment] id".into()))?
        .to_string();
    let paper = paper_scale
        || match raw.get("experiment", "scale") {
            None | Some("desk") => false,
            Some("paper") => true,
            Some(other) => {
                return Err(CliError::Config(format!(
                    "[experiment] scale = {other:?}; expected desk or paper"
                )))
            }
        };
    let mut study = Study::new(&name, paper)?;
    if let Some(props) = raw.sections.get("experiment") {
        for (k, v) in props {
            if k != "id" && k != "scale" {
                study.set(k, v)?;
            }
        }
    }
    if let Some(s) = seed {
        study.set("seed", &s.to_string())?;
    }
    let mut manifest = raw.clone();
    manifest.set("experiment", "id", name.clone());
    manifest.set("experiment", "scale", if paper { "paper" } else { "desk" });
    for (k, v) in study.settings() {
        manifest.set("experiment", k, v);
    }
    Ok((name, study, manifest))
}
