//! Sectioned `key = value` run configuration.
//!
//! ```ini
//! [experiment]
//! id = coverage
//!
//! [null]
//! model = gaussian        ; gaussian | poisson | poe
//! mean = 0
//! variance = 1
//!
//! [alternative]
//! model = gaussian
//! mean = 1
//!
//! [statistic]
//! type = ulr              ; ulr | power_ulr | plugin_gaussian | mean_distance
//!
//! [kernel]
//! type = ar1              ; ar1 | rwm | mala | exact
//! phi = 0.5
//!
//! [sampling]
//! J = 1
//! M = 100
//! S = 1
//! alpha = 0.05
//! seed = 7
//!
//! [eprocess]
//! strategy = grapa        ; grapa | fixed
//! lambda = 0.5
//!
//! [region]
//! parameter = mean        ; mean | variance | rate
//! grid = -1, -0.5, 0, 0.5, 1
//!
//! [t.10]                  ; from time 10 onward
//! M = 500
//! ```

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use ini::Ini;

use bcev::kernels::{
    ar1_kernel, exact_kernel, mala_kernel, rwm_kernel, Ar1Kernel, TransitionKernel,
    DEFAULT_PROPOSAL_SD,
};
use bcev::model::{gaussian_model, poe_student_t_model, poisson_model, SharedModel, TExpert};
use bcev::statistic::{plug_in_gaussian_statistic, power_ulr_statistic, ulr_statistic, TestStatistic};
use bcev::studies::mean_distance_statistic;

use crate::error::{CliError, CliResult};

/// Raw sections, kept for overrides and for writing manifests.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    pub sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl RawConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Parse(m) => CliError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        check_lines(text)?;
        let ini = Ini::load_from_str(text)
            .map_err(|e| CliError::Parse(format!("line {}: {}", e.line, e.msg)))?;
        let mut sections = BTreeMap::new();
        for (name, props) in ini.iter() {
            let Some(name) = name else {
                if props.iter().next().is_some() {
                    return Err(CliError::Config("keys outside any [section]".into()));
                }
                continue;
            };
            let entry: &mut BTreeMap<String, String> = sections.entry(name.to_string()).or_default();
            for (k, v) in props.iter() {
                entry.insert(k.to_string(), v.trim().to_string());
            }
        }
        Ok(Self { sections })
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    pub fn set(&mut self, section: &str, key: &str, value: impl Into<String>) {
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), value.into());
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    pub fn to_ini_string(&self) -> String {
        let mut ini = Ini::new();
        for (name, props) in &self.sections {
            for (k, v) in props {
                ini.with_section(Some(name.as_str())).set(k.as_str(), v.as_str());
            }
        }
        let mut buf = Vec::new();
        ini.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ini output is utf-8")
    }

    fn required(&self, section: &str, key: &str) -> CliResult<&str> {
        self.get(section, key)
            .ok_or_else(|| CliError::Config(format!("missing [{section}] {key}")))
    }

    pub fn f64_or(&self, section: &str, key: &str, default: f64) -> CliResult<f64> {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => parse_f64(section, key, v),
        }
    }

    pub fn f64_req(&self, section: &str, key: &str) -> CliResult<f64> {
        parse_f64(section, key, self.required(section, key)?)
    }

    pub fn usize_or(&self, section: &str, key: &str, default: usize) -> CliResult<usize> {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| CliError::Config(format!("[{section}] {key} = {v:?} is not a count"))),
        }
    }

    pub fn u64_or(&self, section: &str, key: &str, default: u64) -> CliResult<u64> {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| CliError::Config(format!("[{section}] {key} = {v:?} is not an unsigned integer"))),
        }
    }

    pub fn f64_list(&self, section: &str, key: &str) -> CliResult<Option<Vec<f64>>> {
        self.get(section, key)
            .map(|v| {
                v.split(',')
                    .map(|s| parse_f64(section, key, s.trim()))
                    .collect::<CliResult<Vec<_>>>()
            })
            .transpose()
    }
}

/// Line-level shape check. The ini parser reports errors at end of input,
/// so malformed lines are caught here first to name the right line.
fn check_lines(text: &str) -> CliResult<()> {
    for (i, line) in text.lines().enumerate() {
        let l = line.trim();
        if l.is_empty() || l.starts_with(';') || l.starts_with('#') {
            continue;
        }
        let ok = if l.starts_with('[') {
            l.find(']').is_some_and(|end| {
                let rest = l[end + 1..].trim_start();
                end > 1 && (rest.is_empty() || rest.starts_with(';') || rest.starts_with('#'))
            })
        } else {
            l.find(['=', ':']).is_some_and(|pos| pos > 0)
        };
        if !ok {
            return Err(CliError::Parse(format!(
                "line {}: expected [section] or key = value, found {l:?}",
                i + 1
            )));
        }
    }
    Ok(())
}

fn parse_f64(section: &str, key: &str, v: &str) -> CliResult<f64> {
    v.parse()
        .map_err(|_| CliError::Config(format!("[{section}] {key} = {v:?} is not a number")))
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Gaussian { mean: f64, variance: f64 },
    Poisson { rate: f64 },
    Poe { experts: Vec<TExpert> },
}

impl ModelSpec {
    pub fn from_section(raw: &RawConfig, section: &str) -> CliResult<Self> {
        let kind = raw.required(section, "model")?;
        Ok(match kind {
            "gaussian" => Self::Gaussian {
                mean: raw.f64_or(section, "mean", 0.0)?,
                variance: raw.f64_or(section, "variance", 1.0)?,
            },
            "poisson" => Self::Poisson {
                rate: raw.f64_req(section, "rate")?,
            },
            "poe" => Self::Poe {
                experts: parse_experts(raw.required(section, "experts")?)?,
            },
            other => {
                return Err(CliError::Config(format!(
                    "[{section}] model = {other:?}; expected gaussian, poisson or poe"
                )))
            }
        })
    }

    pub fn build(&self, dim: usize) -> CliResult<SharedModel> {
        Ok(match self {
            Self::Gaussian { mean, variance } => Arc::new(gaussian_model(*mean, *variance, dim)?),
            Self::Poisson { rate } => Arc::new(poisson_model(*rate, dim)?),
            Self::Poe { experts } => Arc::new(poe_student_t_model(experts, dim)?),
        })
    }

    /// Copy with the named parameter replaced.
    pub fn with_parameter(&self, parameter: &str, value: f64) -> CliResult<Self> {
        let mut out = self.clone();
        match (&mut out, parameter) {
            (Self::Gaussian { mean, .. }, "mean") => *mean = value,
            (Self::Gaussian { variance, .. }, "variance") => *variance = value,
            (Self::Poisson { rate }, "rate") => *rate = value,
            (m, p) => {
                return Err(CliError::Config(format!(
                    "region parameter {p:?} does not apply to null model {m:?}"
                )))
            }
        }
        Ok(out)
    }
}

/// `center:scale:dof` triples separated by commas.
pub fn parse_experts(v: &str) -> CliResult<Vec<TExpert>> {
    v.split(',')
        .map(|e| {
            let parts: Vec<&str> = e.trim().split(':').map(str::trim).collect();
            let nums: Option<Vec<f64>> = parts.iter().map(|p| p.parse().ok()).collect();
            match nums.as_deref() {
                Some([c, s, d]) => Ok(TExpert::new(*c, *s, *d)),
                _ => Err(CliError::Config(format!(
                    "expert {e:?} is not center:scale:dof"
                ))),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum StatisticSpec {
    Ulr,
    PowerUlr { eta: f64 },
    PlugInGaussian,
    MeanDistance,
}

impl StatisticSpec {
    pub fn from_raw(raw: &RawConfig) -> CliResult<Self> {
        Ok(match raw.get("statistic", "type").unwrap_or("ulr") {
            "ulr" => Self::Ulr,
            "power_ulr" => Self::PowerUlr {
                eta: raw.f64_req("statistic", "eta")?,
            },
            "plugin_gaussian" => Self::PlugInGaussian,
            "mean_distance" => Self::MeanDistance,
            other => {
                return Err(CliError::Config(format!(
                    "[statistic] type = {other:?}; expected ulr, power_ulr, plugin_gaussian or mean_distance"
                )))
            }
        })
    }

    /// Statistic for one observation. `history` holds earlier observations
    /// and is used only by the plug-in statistic; `None` means that
    /// statistic has nothing to fit yet.
    pub fn build(
        &self,
        null: &ModelSpec,
        alternative: Option<&ModelSpec>,
        dim: usize,
        history: &[Vec<f64>],
    ) -> CliResult<Option<Box<dyn TestStatistic>>> {
        let alt = || -> CliResult<SharedModel> {
            alternative
                .ok_or_else(|| CliError::Config("this statistic needs an [alternative] section".into()))?
                .build(dim)
        };
        Ok(Some(match self {
            Self::Ulr => Box::new(ulr_statistic(alt()?, null.build(dim)?)),
            Self::PowerUlr { eta } => Box::new(power_ulr_statistic(alt()?, null.build(dim)?, *eta)?),
            Self::PlugInGaussian => {
                if history.is_empty() {
                    return Ok(None);
                }
                Box::new(plug_in_gaussian_statistic(history)?)
            }
            Self::MeanDistance => match null {
                ModelSpec::Gaussian { mean, .. } => Box::new(mean_distance_statistic(*mean)),
                _ => {
                    return Err(CliError::Config(
                        "mean_distance needs a gaussian null".into(),
                    ))
                }
            },
        }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    Ar1 { phi: f64 },
    Rwm { proposal_sd: f64 },
    Mala { step_size: f64 },
    Exact,
}

impl KernelSpec {
    /// Kernel settings in `[kernel]`, with keys of `overlay` (a per-time
    /// section) taking precedence.
    pub fn from_raw(raw: &RawConfig, overlay: Option<&str>) -> CliResult<Self> {
        let get = |key: &str| overlay.and_then(|o| raw.get(o, key)).or_else(|| raw.get("kernel", key));
        let num = |key: &str, default: Option<f64>| -> CliResult<f64> {
            match (get(key), default) {
                (Some(v), _) => parse_f64("kernel", key, v),
                (None, Some(d)) => Ok(d),
                (None, None) => Err(CliError::Config(format!("missing [kernel] {key}"))),
            }
        };
        Ok(match get("type").unwrap_or("exact") {
            "ar1" => Self::Ar1 { phi: num("phi", None)? },
            "rwm" => Self::Rwm {
                proposal_sd: num("proposal_sd", Some(DEFAULT_PROPOSAL_SD))?,
            },
            "mala" => Self::Mala {
                step_size: num("step_size", None)?,
            },
            "exact" => Self::Exact,
            other => {
                return Err(CliError::Config(format!(
                    "[kernel] type = {other:?}; expected ar1, rwm, mala or exact"
                )))
            }
        })
    }

    /// Kernel stationary for `null` in dimension `dim`. The AR(1) kernel is
    /// centred at the null mean and needs a unit-variance Gaussian null.
    pub fn build(&self, null: &ModelSpec, dim: usize) -> CliResult<Box<dyn TransitionKernel>> {
        Ok(match self {
            Self::Ar1 { phi } => match null {
                ModelSpec::Gaussian { mean, variance } if *variance == 1.0 => {
                    if *mean == 0.0 {
                        Box::new(ar1_kernel(*phi)?)
                    } else {
                        Box::new(Ar1Kernel::with_center(*phi, *mean)?)
                    }
                }
                _ => {
                    return Err(CliError::Config(
                        "the ar1 kernel needs a gaussian null with variance 1".into(),
                    ))
                }
            },
            Self::Rwm { proposal_sd } => Box::new(rwm_kernel(null.build(dim)?, *proposal_sd)?),
            Self::Mala { step_size } => Box::new(mala_kernel(null.build(dim)?, *step_size)?),
            Self::Exact => Box::new(exact_kernel(null.build(dim)?)?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sampling {
    pub steps: usize,
    pub draws: usize,
    pub chains: usize,
}

impl Sampling {
    pub fn from_raw(raw: &RawConfig, overlay: Option<&str>) -> CliResult<Self> {
        let base = Self {
            steps: raw.usize_or("sampling", "J", 1)?,
            draws: raw.usize_or("sampling", "M", 100)?,
            chains: raw.usize_or("sampling", "S", 1)?,
        };
        let s = match overlay {
            None => base,
            Some(o) => Self {
                steps: raw.usize_or(o, "J", base.steps)?,
                draws: raw.usize_or(o, "M", base.draws)?,
                chains: raw.usize_or(o, "S", base.chains)?,
            },
        };
        if s.steps == 0 || s.draws == 0 || s.chains == 0 {
            return Err(CliError::Config("J, M and S must all be at least 1".into()));
        }
        Ok(s)
    }
}

pub fn alpha(raw: &RawConfig) -> CliResult<f64> {
    let a = raw.f64_or("sampling", "alpha", 0.05)?;
    if !(a > 0.0 && a < 1.0) {
        return Err(CliError::Config(format!("alpha must lie in (0, 1), got {a}")));
    }
    Ok(a)
}

/// Start times of `[t.K]` sections, ascending.
pub fn override_times(raw: &RawConfig) -> CliResult<Vec<usize>> {
    let mut times = Vec::new();
    for name in raw.sections.keys() {
        if let Some(k) = name.strip_prefix("t.") {
            let t: usize = k
                .parse()
                .ok()
                .filter(|&t| t >= 1)
                .ok_or_else(|| CliError::Config(format!("bad override section [{name}]")))?;
            times.push(t);
        }
    }
    times.sort_unstable();
    Ok(times)
}

/// Override section in force at time `t`, if any.
pub fn overlay_at(times: &[usize], t: usize) -> Option<String> {
    times
        .iter()
        .rev()
        .find(|&&k| k <= t)
        .map(|k| format!("t.{k}"))
}
