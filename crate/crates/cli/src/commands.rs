//! Single-shot commands driven by a config file and a data file.

use std::io::{BufRead, Write};
use std::path::PathBuf;

use bcev::eprocess::{step, BettingStrategy, EProcessState, FanSize};
use bcev::evalues::{
    bc_evalue_multichain, confidence_region, gof_pvalue, log_threshold, NullComponents,
};
use bcev::exchangeable::{multi_fan, parallel_fan};
use bcev::model::StateVector;
use bcev::rng::RngStream;
use bcev::statistic::{ConstantStatistic, TestStatistic};
use bcev::studies::{fmt_float, Table};

use crate::config::{
    alpha, overlay_at, override_times, KernelSpec, ModelSpec, RawConfig, Sampling, StatisticSpec,
};
use crate::data::{as_vector, check_uniform, parse_value, read_rows};
use crate::error::{CliError, CliResult};
use crate::output::{table, Output};

/// Everything a command needs besides its own flags.
pub struct Run {
    pub raw: RawConfig,
    pub seed: u64,
    pub data: Option<PathBuf>,
    pub out: Output,
}

impl Run {
    fn data_path(&self) -> CliResult<&PathBuf> {
        self.data
            .as_ref()
            .ok_or_else(|| CliError::Input("--data is required for this command".into()))
    }

    fn null(&self) -> CliResult<ModelSpec> {
        ModelSpec::from_section(&self.raw, "null")
    }

    fn alternative(&self) -> CliResult<Option<ModelSpec>> {
        if self.raw.has_section("alternative") {
            ModelSpec::from_section(&self.raw, "alternative").map(Some)
        } else {
            Ok(None)
        }
    }

    /// Saves `t` and a manifest that reruns the command.
    fn finish(&self, command: &str, t: &Table) -> CliResult<()> {
        self.out.save(t)?;
        let mut raw = self.raw.clone();
        raw.set("sampling", "seed", self.seed.to_string());
        raw.set("run", "command", command);
        if let Some(d) = &self.data {
            let abs = std::fs::canonicalize(d).unwrap_or_else(|_| d.clone());
            raw.set("run", "data", abs.display().to_string());
        }
        self.out.manifest(&t.name, &raw)
    }
}

fn fixed_statistic(
    spec: &StatisticSpec,
    null: &ModelSpec,
    alt: Option<&ModelSpec>,
    dim: usize,
) -> CliResult<Box<dyn TestStatistic>> {
    spec.build(null, alt, dim, &[])?.ok_or_else(|| {
        CliError::Config("plugin_gaussian needs past observations; use it with eprocess".into())
    })
}

fn check_dim(raw: &RawConfig, dim: usize) -> CliResult<()> {
    let declared = raw.usize_or("null", "dim", dim)?;
    if declared != dim {
        return Err(CliError::Config(format!(
            "[null] dim = {declared} but the data has dimension {dim}"
        )));
    }
    Ok(())
}

pub fn evalue(run: &Run) -> CliResult<()> {
    let x = as_vector(read_rows(run.data_path()?)?)?;
    let dim = x.len();
    check_dim(&run.raw, dim)?;
    let null = run.null()?;
    let alt = run.alternative()?;
    let stat = fixed_statistic(&StatisticSpec::from_raw(&run.raw)?, &null, alt.as_ref(), dim)?;
    let kernel = KernelSpec::from_raw(&run.raw, None)?.build(&null, dim)?;
    let s = Sampling::from_raw(&run.raw, None)?;
    let x = StateVector::new(x)?;
    let fans = multi_fan(
        kernel.as_ref(),
        &x,
        s.steps,
        s.draws,
        s.chains,
        &RngStream::new(run.seed),
    )?;
    let r = bc_evalue_multichain(stat.as_ref(), &fans)?;
    let t = table(
        "evalue",
        &["log_e", "e", "M", "S", "J", "seed", "statistic"],
        vec![vec![
            fmt_float(r.log_e),
            fmt_float(r.e()),
            r.m.to_string(),
            r.s.to_string(),
            s.steps.to_string(),
            run.seed.to_string(),
            r.statistic_id,
        ]],
    );
    run.out.print(&t)?;
    run.finish("evalue", &t)
}

pub fn pvalue(run: &Run) -> CliResult<()> {
    let x = as_vector(read_rows(run.data_path()?)?)?;
    let dim = x.len();
    check_dim(&run.raw, dim)?;
    let null = run.null()?;
    let alt = run.alternative()?;
    let stat = fixed_statistic(&StatisticSpec::from_raw(&run.raw)?, &null, alt.as_ref(), dim)?;
    let kernel = KernelSpec::from_raw(&run.raw, None)?.build(&null, dim)?;
    let s = Sampling::from_raw(&run.raw, None)?;
    let fan = parallel_fan(
        kernel.as_ref(),
        &StateVector::new(x)?,
        s.steps,
        s.draws,
        &RngStream::new(run.seed),
    )?;
    let p = gof_pvalue(stat.as_ref(), &fan);
    let t = table(
        "pvalue",
        &["p_value", "M", "J", "seed"],
        vec![vec![
            fmt_float(p),
            s.draws.to_string(),
            s.steps.to_string(),
            run.seed.to_string(),
        ]],
    );
    run.out.print(&t)?;
    run.finish("pvalue", &t)
}

pub fn confregion(run: &Run) -> CliResult<()> {
    let x = as_vector(read_rows(run.data_path()?)?)?;
    let dim = x.len();
    check_dim(&run.raw, dim)?;
    let null = run.null()?;
    let alt = run.alternative()?;
    let stat_spec = StatisticSpec::from_raw(&run.raw)?;
    let kernel_spec = KernelSpec::from_raw(&run.raw, None)?;
    let s = Sampling::from_raw(&run.raw, None)?;
    let a = alpha(&run.raw)?;
    let parameter = run
        .raw
        .get("region", "parameter")
        .ok_or_else(|| CliError::Config("missing [region] parameter".into()))?
        .to_string();
    let grid = run
        .raw
        .f64_list("region", "grid")?
        .ok_or_else(|| CliError::Config("missing [region] grid".into()))?;

    let components = |theta: f64| -> CliResult<NullComponents> {
        let n = null.with_parameter(&parameter, theta)?;
        let stat = fixed_statistic(&stat_spec, &n, alt.as_ref(), dim)?;
        let kernel = kernel_spec.build(&n, dim)?;
        Ok((stat, kernel))
    };
    // Surface configuration problems with their own exit code before the
    // parallel sweep.
    components(grid[0])?;
    let region = confidence_region(
        &grid,
        |theta: &f64| {
            components(*theta).map_err(|e| match e {
                CliError::Core(e) => e,
                other => bcev::Error::Config(other.to_string()),
            })
        },
        &StateVector::new(x)?,
        s.steps,
        s.draws,
        a,
        &RngStream::new(run.seed),
    )?;
    let rows = region
        .members
        .iter()
        .map(|m| {
            vec![
                fmt_float(m.param),
                fmt_float(m.result.log_e),
                fmt_float(m.result.e()),
                m.in_region.to_string(),
                fmt_float(a),
                s.draws.to_string(),
                s.steps.to_string(),
                run.seed.to_string(),
            ]
        })
        .collect();
    let t = table(
        "confregion",
        &["theta", "log_e", "e", "in_region", "alpha", "M", "J", "seed"],
        rows,
    );
    run.out.print(&t)?;
    run.finish("confregion", &t)
}

pub const EPROCESS_HEADER: [&str; 7] = ["t", "x", "log_U", "U", "lambda", "log_wealth", "stopped"];

/// Sequential e-process fed one observation at a time.
struct Sequencer<'a> {
    raw: &'a RawConfig,
    null: ModelSpec,
    alt: Option<ModelSpec>,
    stat: StatisticSpec,
    strategy: BettingStrategy,
    log_cut: f64,
    times: Vec<usize>,
    rng: RngStream,
    state: EProcessState,
    history: Vec<Vec<f64>>,
    stopped: bool,
}

impl<'a> Sequencer<'a> {
    fn new(run: &'a Run) -> CliResult<Self> {
        let raw = &run.raw;
        let lambda = raw.f64_or("eprocess", "lambda", 0.5)?;
        let strategy = match raw.get("eprocess", "strategy").unwrap_or("grapa") {
            "grapa" => BettingStrategy::grapa(lambda)?,
            "fixed" => BettingStrategy::fixed(lambda)?,
            other => {
                return Err(CliError::Config(format!(
                    "[eprocess] strategy = {other:?}; expected grapa or fixed"
                )))
            }
        };
        let times = override_times(raw)?;
        // Validate every override up front so a bad section fails before
        // any output.
        for t in std::iter::once(1).chain(times.iter().copied()) {
            let o = overlay_at(&times, t);
            Sampling::from_raw(raw, o.as_deref())?;
            KernelSpec::from_raw(raw, o.as_deref())?;
        }
        Ok(Self {
            raw,
            null: ModelSpec::from_section(raw, "null")?,
            alt: run.alternative()?,
            stat: StatisticSpec::from_raw(raw)?,
            strategy,
            log_cut: log_threshold(alpha(raw)?),
            times,
            rng: RngStream::new(run.seed),
            state: EProcessState::new(),
            history: Vec::new(),
            stopped: false,
        })
    }

    fn push(&mut self, x: Vec<f64>) -> CliResult<Vec<String>> {
        let dim = x.len();
        if let Some(first) = self.history.first() {
            if first.len() != dim {
                return Err(CliError::Parse(format!(
                    "observation {} has {dim} values, expected {}",
                    self.state.t + 1,
                    first.len()
                )));
            }
        } else {
            check_dim(self.raw, dim)?;
        }
        let t = self.state.t + 1;
        let overlay = overlay_at(&self.times, t);
        let s = Sampling::from_raw(self.raw, overlay.as_deref())?;
        let kernel = KernelSpec::from_raw(self.raw, overlay.as_deref())?.build(&self.null, dim)?;
        let stat: Box<dyn TestStatistic> = self
            .stat
            .build(&self.null, self.alt.as_ref(), dim, &self.history)?
            .unwrap_or_else(|| Box::new(ConstantStatistic));
        let xs = StateVector::new(x.clone())?;
        self.state = step(
            &self.state,
            &xs,
            stat.as_ref(),
            kernel.as_ref(),
            FanSize::new(s.steps, s.draws, s.chains)?,
            &self.strategy,
            &self.rng,
        )?;
        self.stopped |= self.state.log_wealth >= self.log_cut;
        let u = *self.state.u_history.last().expect("one step recorded");
        let lambda = *self.state.lambda_history.last().expect("one step recorded");
        let row = vec![
            t.to_string(),
            join_values(&x),
            fmt_float(u.ln()),
            fmt_float(u),
            fmt_float(lambda),
            fmt_float(self.state.log_wealth),
            self.stopped.to_string(),
        ];
        self.history.push(x);
        Ok(row)
    }
}

/// Vector entries separated by spaces.
fn join_values(x: &[f64]) -> String {
    x.iter().map(|v| fmt_float(*v)).collect::<Vec<_>>().join(" ")
}

pub fn eprocess(run: &Run) -> CliResult<()> {
    let rows = read_rows(run.data_path()?)?;
    check_uniform(&rows)?;
    let mut seq = Sequencer::new(run)?;
    let mut out = Vec::with_capacity(rows.len());
    for x in rows {
        out.push(seq.push(x)?);
    }
    let t = table("eprocess", &EPROCESS_HEADER, out);
    run.out.print(&t)?;
    run.finish("eprocess", &t)
}

/// One scalar per line from `input`; each record is flushed as soon as it
/// is computed. A malformed line produces an error row and stops the run.
pub fn eprocess_stream<R: BufRead, W: Write>(run: &Run, input: R, sink: W) -> CliResult<()> {
    let mut seq = Sequencer::new(run)?;
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(EPROCESS_HEADER)?;
    writer.flush()?;
    let mut rows = Vec::new();
    let mut failure = None;
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| CliError::Input(format!("reading input: {e}")))?;
        let field = line.trim();
        if field.is_empty() || field.starts_with('#') {
            continue;
        }
        let row = match parse_value(field) {
            Ok(v) => seq.push(vec![v])?,
            Err(m) => {
                let t = seq.state.t + 1;
                let mut row = vec![String::new(); EPROCESS_HEADER.len()];
                row[0] = t.to_string();
                row[1] = field.to_string();
                row[6] = "error".to_string();
                failure = Some(CliError::Parse(format!("line {}: {m}", i + 1)));
                row
            }
        };
        writer.write_record(&row)?;
        writer.flush()?;
        rows.push(row);
        if failure.is_some() {
            break;
        }
    }
    let t = table("eprocess_stream", &EPROCESS_HEADER, rows);
    run.finish("eprocess-stream", &t)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
