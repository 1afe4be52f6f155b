use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use fnch_core::abc::{run_gibbs_abc, AbcConfig};
use fnch_core::data::{bundled, load_cohort_tables, CohortTables};
use fnch_core::fnch::{log_pmf_multivariate, log_pmf_univariate, UnivariateFnch};
use fnch_core::mcmc::{run_multivariate_posterior, run_univariate_posterior, UnivariateData, UnivariatePriors};
use fnch_core::output::{
    emit_all_plots, emit_plot_data, fmt_f64, write_draws, write_json, write_pipeline_run, write_step,
    write_summary_csv, PlotKind, RunSummary, SensitivitySummary, SUMMARY_HEADER,
};
use fnch_core::pipeline::{
    sensitivity, simulation_study, step1_istat, step2_almalaurea, step3_timeseries, ElicitationFamily,
    PipelineConfig, SimStudyConfig,
};
use fnch_core::rng::master_stream;
use fnch_core::summary::summarize;
use fnch_core::{ChainDraws, Error, FnchParams, McmcConfig, PosteriorSummary, PriorSpec, Result};
use log::info;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::{Cli, Command, Elicitation, EmitPlotsArgs, FitArgs, PipelineArgs, PmfArgs, SampleArgs, SimulateArgs, Stage, SummarizeArgs, BUILD_ID};

pub fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Error::validation("--jobs must be positive"));
        }
        // Fails only if a pool already exists, which cannot happen this early.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Pmf(a) => pmf(a),
        Command::Sample(a) => sample(a),
        Command::FitMcmc(a) => fit_mcmc(a, config),
        Command::FitAbc(a) => fit_abc(a, config),
        Command::Pipeline(a) => pipeline(a, config),
        Command::Simulate(a) => simulate(a, config),
        Command::Summarize(a) => summarize_draws(a, config),
        Command::EmitPlots(a) => emit_plots(a),
    }
}

/// Reads a JSON config; a previous `run.json` is unwrapped to its `config`.
fn load_config(path: Option<&Path>) -> Result<Option<Value>> {
    let Some(path) = path else { return Ok(None) };
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut value: Value = serde_json::from_reader(BufReader::new(file))?;
    if let Some(obj) = value.as_object_mut() {
        if obj.contains_key("version") && obj.contains_key("config") {
            return Ok(obj.remove("config"));
        }
    }
    Ok(Some(value))
}

fn typed<T: DeserializeOwned + Default>(config: Option<Value>) -> Result<T> {
    match config {
        Some(v) => Ok(serde_json::from_value(v)?),
        None => Ok(T::default()),
    }
}

#[derive(Serialize)]
struct RunRecord<'a, T: Serialize> {
    version: &'a str,
    command: &'a str,
    config: &'a T,
}

/// `run.json`: build id plus the fully resolved config. The output path is
/// left out so that two trees from identical runs compare byte for byte.
fn write_run_record<T: Serialize>(dir: &Path, command: &str, config: &T) -> Result<()> {
    write_json(
        &dir.join("run.json"),
        &RunRecord {
            version: BUILD_ID,
            command,
            config,
        },
    )
}

fn one_weight(w: &[f64], log_w: &[f64]) -> Result<f64> {
    match (w, log_w) {
        ([w], []) if *w > 0.0 && w.is_finite() => Ok(w.ln()),
        ([w], []) => Err(Error::validation(format!("odds ratio must be positive, got {w}"))),
        ([], [lw]) => Ok(*lw),
        ([], []) => Ok(0.0),
        _ => Err(Error::validation("give a single --w or --log-w for two groups")),
    }
}

fn print_value(out: &mut impl Write, v: f64, log: bool) -> Result<()> {
    let v = if log { v } else { v.exp() };
    writeln!(out, "{v}").map_err(|e| Error::io("<stdout>", e))
}

fn pmf(a: PmfArgs) -> Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    if !a.m.is_empty() {
        let log_w = match (a.w.is_empty(), a.log_w.is_empty()) {
            (true, true) => vec![0.0; a.m.len()],
            (false, true) => {
                if let Some(bad) = a.w.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
                    return Err(Error::validation(format!("weights must be positive, got {bad}")));
                }
                a.w.iter().map(|w| w.ln()).collect()
            }
            (true, false) => a.log_w.clone(),
            (false, false) => return Err(Error::validation("give --w or --log-w, not both")),
        };
        if a.y.len() != a.m.len() {
            return Err(Error::validation(format!(
                "composition --y has {} entries for {} groups",
                a.y.len(),
                a.m.len()
            )));
        }
        if let Some(bad) = a.y.iter().find(|v| **v < 0) {
            return Err(Error::validation(format!("counts must be non-negative, got {bad}")));
        }
        let y: Vec<u64> = a.y.iter().map(|v| *v as u64).collect();
        let n: u64 = y.iter().sum();
        if let Some(given) = a.n {
            if given != n as i64 {
                return Err(Error::validation(format!("--n {given} differs from the composition total {n}")));
            }
        }
        let params = FnchParams::new(a.m, n, log_w)?;
        return print_value(&mut out, log_pmf_multivariate(&params, &y)?, a.log);
    }

    let (Some(m1), Some(m2), Some(n)) = (a.m1, a.m2, a.n) else {
        return Err(Error::validation("two-group pmf needs --m1, --m2 and --n (or --m for several groups)"));
    };
    let lw = one_weight(&a.w, &a.log_w)?;
    if a.y.is_empty() {
        let dist = UnivariateFnch::from_signed(m1, m2, n, lw)?;
        writeln!(out, "y,{}", if a.log { "log_pmf" } else { "pmf" }).map_err(|e| Error::io("<stdout>", e))?;
        for y in dist.support().iter() {
            let v = dist.log_pmf(y as i64);
            let v = if a.log { v } else { v.exp() };
            writeln!(out, "{y},{v}").map_err(|e| Error::io("<stdout>", e))?;
        }
        return Ok(());
    }
    for &y in &a.y {
        print_value(&mut out, log_pmf_univariate(m1, m2, n, lw, y)?, a.log)?;
    }
    Ok(())
}

fn sample(a: SampleArgs) -> Result<()> {
    let lw = one_weight(a.w.as_slice(), a.log_w.as_slice())?;
    let dist = UnivariateFnch::new(a.m1, a.m2, a.n, lw)?;
    let mut rng = master_stream(a.seed);
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for _ in 0..a.draws {
        writeln!(out, "{}", dist.sample(&mut rng)).map_err(|e| Error::io("<stdout>", e))?;
    }
    Ok(())
}

fn default_level() -> f64 {
    0.95
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Model {
    Univariate {
        data: UnivariateData,
        priors: UnivariatePriors,
    },
    Multivariate {
        y: Vec<u64>,
        priors: Vec<PriorSpec>,
        log_w: Vec<f64>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct McmcJob {
    model: Model,
    #[serde(default)]
    mcmc: McmcConfig,
    #[serde(default = "default_level")]
    level: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct AbcJob {
    y: Vec<u64>,
    priors: Vec<PriorSpec>,
    log_w: Vec<f64>,
    #[serde(default)]
    abc: AbcConfig,
    #[serde(default = "default_level")]
    level: f64,
}

fn required<T: DeserializeOwned>(config: Option<Value>, command: &str) -> Result<T> {
    let v = config.ok_or_else(|| Error::validation(format!("{command} needs --config describing the model")))?;
    Ok(serde_json::from_value(v)?)
}

fn summary_rows(draws: &ChainDraws, level: f64) -> Result<Vec<(String, PosteriorSummary)>> {
    draws
        .names
        .iter()
        .map(|n| {
            let col = draws.column(n).unwrap_or_default();
            Ok((n.clone(), summarize(&col, level)?))
        })
        .collect()
}

fn write_fit(dir: &Path, label: &str, draws: &ChainDraws, level: f64) -> Result<()> {
    write_draws(dir, "draws", draws)?;
    let rows = summary_rows(draws, level)?;
    write_summary_csv(
        &dir.join("summary.csv"),
        rows.iter().map(|(p, s)| (label.to_string(), p.as_str(), s)),
    )
}

fn fit_mcmc(a: FitArgs, config: Option<Value>) -> Result<()> {
    let mut job: McmcJob = required(config, "fit-mcmc")?;
    if !a.epsilon.is_empty() {
        return Err(Error::validation("--epsilon applies to fit-abc only"));
    }
    apply(&mut job.mcmc.seed, a.seed);
    apply(&mut job.mcmc.iterations, a.iterations);
    apply(&mut job.mcmc.burn_in, a.burn_in);
    apply(&mut job.mcmc.thin, a.thin);
    apply(&mut job.level, a.level);
    write_run_record(&a.out, "fit-mcmc", &job)?;
    let draws = match &job.model {
        Model::Univariate { data, priors } => run_univariate_posterior(*data, priors, &job.mcmc)?,
        Model::Multivariate { y, priors, log_w } => run_multivariate_posterior(y, priors, log_w, &job.mcmc)?,
    };
    info!("fit-mcmc: {} draws", draws.n_draws());
    write_fit(&a.out, "mcmc", &draws, job.level)
}

fn fit_abc(a: FitArgs, config: Option<Value>) -> Result<()> {
    let mut job: AbcJob = required(config, "fit-abc")?;
    apply(&mut job.abc.seed, a.seed);
    apply(&mut job.abc.iterations, a.iterations);
    apply(&mut job.abc.burn_in, a.burn_in);
    apply(&mut job.abc.thin, a.thin);
    apply(&mut job.level, a.level);
    if !a.epsilon.is_empty() {
        job.abc.epsilon = a.epsilon;
    }
    write_run_record(&a.out, "fit-abc", &job)?;
    match run_gibbs_abc(&job.y, &job.priors, &job.log_w, &job.abc) {
        Ok((draws, calibration)) => {
            if let Some(c) = calibration {
                write_json(&a.out.join("calibration.json"), &c)?;
            }
            write_fit(&a.out, "abc", &draws, job.level)
        }
        Err(Error::AttemptsExceeded {
            sweep,
            group,
            attempts,
            partial,
        }) => {
            // Keep what was sampled before the stall, then report it.
            write_draws(&a.out, "draws_partial", &partial)?;
            Err(Error::AttemptsExceeded {
                sweep,
                group,
                attempts,
                partial,
            })
        }
        Err(e) => Err(e),
    }
}

fn apply<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct PipelineJob {
    /// Cohort tables path as given; `None` means the bundled tables.
    data: Option<PathBuf>,
    #[serde(flatten)]
    pipeline: PipelineConfig,
}

fn stage_name(s: Stage) -> &'static str {
    match s {
        Stage::Step1 => "step1",
        Stage::Step2 => "step2",
        Stage::Step3 => "step3",
        Stage::Sensitivity => "sensitivity",
        Stage::All => "all",
    }
}

fn pipeline(a: PipelineArgs, config: Option<Value>) -> Result<()> {
    let mut job: PipelineJob = typed(config)?;
    if a.data.is_some() {
        job.data = a.data;
    }
    let cfg = &mut job.pipeline;
    apply(&mut cfg.seed, a.seed);
    apply(&mut cfg.mcmc.iterations, a.iterations);
    apply(&mut cfg.mcmc.burn_in, a.burn_in);
    apply(&mut cfg.level, a.level);
    if let Some(e) = a.elicitation {
        cfg.elicitation = match e {
            Elicitation::MomentMatchedNormal => ElicitationFamily::MomentMatchedNormal,
            Elicitation::Poisson => ElicitationFamily::Poisson,
        };
    }
    cfg.fix_n |= a.fix_n;
    if !a.alphas.is_empty() {
        cfg.alphas = a.alphas;
    }
    cfg.validate()?;

    let tables: CohortTables = match &job.data {
        Some(p) => load_cohort_tables(p)?,
        None => bundled()?,
    };
    let name = format!("pipeline {}", stage_name(a.stage));
    write_run_record(&a.out, &name, &job)?;
    let cfg = &job.pipeline;
    let out = &a.out;

    if a.stage == Stage::All {
        let run = fnch_core::pipeline::run_all(&tables, cfg)?;
        write_pipeline_run(out, &run)?;
        return Ok(());
    }

    let mut summary = RunSummary::default();
    let step1 = step1_istat(&tables, cfg)?;
    write_step(&out.join("step1"), &step1, false)?;
    summary.step1 = Some((&step1).into());
    if a.stage != Stage::Step1 {
        let step2 = step2_almalaurea(&step1, &tables, cfg)?;
        write_step(&out.join("step2"), &step2, false)?;
        summary.step2 = Some((&step2).into());
        if a.stage == Stage::Step3 {
            for s in step3_timeseries(&step2, &tables, cfg)? {
                write_step(&out.join("step3"), &s, true)?;
                summary.step3.push((&s).into());
            }
        }
        if a.stage == Stage::Sensitivity {
            for &alpha in &cfg.alphas {
                let waves = sensitivity(&step2, &tables, alpha, cfg)?;
                for s in &waves {
                    write_step(&out.join(format!("sensitivity_{alpha}")), s, true)?;
                }
                summary.sensitivity.push(SensitivitySummary {
                    alpha,
                    waves: waves.iter().map(Into::into).collect(),
                });
            }
        }
    }
    write_json(&out.join("results.json"), &summary)?;
    emit_all_plots(&summary, &out.join("plots"))
}

fn simulate(a: SimulateArgs, config: Option<Value>) -> Result<()> {
    let mut cfg: SimStudyConfig = typed(config)?;
    apply(&mut cfg.replicates, a.replicates);
    apply(&mut cfg.seed, a.seed);
    apply(&mut cfg.n_true, a.n_true);
    apply(&mut cfg.level, a.level);
    apply(&mut cfg.mcmc.iterations, a.iterations);
    apply(&mut cfg.mcmc.burn_in, a.burn_in);
    if let Some(g) = a.groups {
        if g != cfg.groups {
            cfg.groups = g;
            cfg.dirichlet_alpha = vec![1.0; g];
        }
    }
    cfg.run_abc &= !a.no_abc;
    cfg.validate()?;
    write_run_record(&a.out, "simulate", &cfg)?;
    let report = simulation_study(&cfg)?;
    fnch_core::output::write_coverage(&a.out, &report)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for m in &report.methods {
        for (p, c) in m.parameters.iter().zip(&m.counts) {
            writeln!(out, "{} {p} {}/{} {}", m.method, c.hits, c.replicates, fmt_f64(c.frequency()))
                .map_err(|e| Error::io("<stdout>", e))?;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
struct SummarizeJob {
    level: f64,
}

impl Default for SummarizeJob {
    fn default() -> Self {
        Self { level: default_level() }
    }
}

fn summarize_draws(a: SummarizeArgs, config: Option<Value>) -> Result<()> {
    let mut job: SummarizeJob = typed(config)?;
    apply(&mut job.level, a.level);
    let file = File::open(&a.draws).map_err(|e| Error::io(&a.draws, e))?;
    let draws = ChainDraws::read_csv(BufReader::new(file))?;
    let label = a
        .draws
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let rows = summary_rows(&draws, job.level)?;
    match &a.out {
        Some(path) => write_summary_csv(path, rows.iter().map(|(p, s)| (label.clone(), p.as_str(), s))),
        None => {
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            let io = |e| Error::io("<stdout>", e);
            writeln!(out, "{}", SUMMARY_HEADER.join(",")).map_err(io)?;
            for (p, s) in &rows {
                let vals = [s.mean, s.sd, s.median, s.hpd_lo, s.hpd_hi].map(fmt_f64).join(",");
                writeln!(out, "{label},{p},{vals}").map_err(io)?;
            }
            Ok(())
        }
    }
}

fn emit_plots(a: EmitPlotsArgs) -> Result<()> {
    let file = File::open(&a.results).map_err(|e| Error::io(&a.results, e))?;
    let run: RunSummary = serde_json::from_reader(BufReader::new(file))?;
    match a.kind {
        Some(k) => {
            let kind: PlotKind = k.parse()?;
            let rows = emit_plot_data(&run, kind, &a.out.join(kind.file_name()))?;
            info!("{kind}: {rows} rows");
            Ok(())
        }
        None => emit_all_plots(&run, &a.out),
    }
}
