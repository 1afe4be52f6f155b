//! The three-step employment case study, its sensitivity reruns, and the
//! MCMC versus Gibbs-ABC simulation study.
//!
//! Step 1 estimates group sizes from the unbiased survey with `w = 1`.
//! Step 2 carries the step-1 moments into priors for the biased survey and
//! estimates the odds ratio. Step 3 reuses the step-2 odds ratio to correct
//! later waves of the biased survey.

use std::collections::BTreeMap;

use log::{info, warn};
use rand::Rng;
use rand_distr::{Beta, Binomial, Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abc::{run_gibbs_abc, AbcConfig, CalibrationReport};
use crate::data::{CellKey, CohortTables, Source};
use crate::error::{Error, Result};
use crate::mcmc::{
    run_multivariate_posterior, run_univariate_posterior, ChainDraws, McmcConfig, ProposalSpec,
    UnivariateData, UnivariatePriors,
};
use crate::prior::{elicit_from_moments, ElicitedMoments, PriorSpec};
use crate::rng::{derive_seed, item_stream};
use crate::summary::{
    coverage_count, quantile, shape_diagnostics, summarize, CoverageCount, PosteriorSummary,
    ShapeDiagnostics,
};

/// Year of the unbiased survey and of the register totals it pairs with.
pub const BASE_YEAR: i32 = 2011;
/// Wave of the biased survey used to estimate the odds ratio.
pub const ODDS_WAVE: i32 = 2012;

/// How step-1 posterior moments become step-2 priors on `M` and `N`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElicitationFamily {
    /// Discretized truncated normal with the step-1 mean and sd.
    MomentMatchedNormal,
    /// Truncated Poisson with the step-1 mean (sd implied by the mean).
    #[default]
    Poisson,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Chain settings shared by every cell; the seed is replaced per cell.
    pub mcmc: McmcConfig,
    pub level: f64,
    pub elicitation: ElicitationFamily,
    /// Fix `N` at the step-1 posterior mean in step 2 instead of estimating it.
    pub fix_n: bool,
    /// Replaces the elicited step-3 log-odds prior for every cell.
    pub log_w_override: Option<PriorSpec>,
    pub alphas: Vec<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            mcmc: McmcConfig {
                iterations: 100_000,
                burn_in: 15_000,
                ..McmcConfig::default()
            },
            level: 0.95,
            elicitation: ElicitationFamily::default(),
            fix_n: false,
            log_w_override: None,
            alphas: vec![0.25, 0.75],
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.mcmc.validate()?;
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::validation(format!("level must lie in (0, 1), got {}", self.level)));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(Error::validation(format!("alpha must lie in (0, 1), got {a}")));
        }
        if let Some(p) = &self.log_w_override {
            p.validate()?;
        }
        Ok(())
    }

    fn chain(&self, key: &str) -> McmcConfig {
        McmcConfig {
            seed: derive_seed(self.seed, key),
            ..self.mcmc.clone()
        }
    }
}

/// Posterior output for one cell (and year).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub key: CellKey,
    pub year: i32,
    pub data: UnivariateData,
    pub priors: UnivariatePriors,
    /// Draw columns `M`, `N`, `log_w`, plus derived `w` and `rate = M / N`.
    pub draws: ChainDraws,
    pub summaries: BTreeMap<String, PosteriorSummary>,
    pub shape: BTreeMap<String, ShapeDiagnostics>,
    /// Posterior mean and sd per parameter, carried into downstream priors.
    pub moments: BTreeMap<String, ElicitedMoments>,
    /// `employed / (employed + unemployed)` of the survey counts.
    pub raw_rate: f64,
}

impl CellResult {
    pub fn label(&self) -> String {
        self.key.to_string()
    }

    pub fn summary(&self, param: &str) -> Option<&PosteriorSummary> {
        self.summaries.get(param)
    }

    /// Posterior probability that the odds ratio exceeds one.
    pub fn prob_w_above_one(&self) -> f64 {
        let col = self.draws.column("log_w").unwrap_or_default();
        if col.is_empty() {
            return f64::NAN;
        }
        col.iter().filter(|v| **v > 0.0).count() as f64 / col.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedCell {
    pub cell: String,
    pub year: i32,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub step: String,
    pub year: i32,
    pub cells: Vec<CellResult>,
    pub skipped: Vec<SkippedCell>,
}

impl StepResult {
    pub fn cell(&self, key: &CellKey) -> Option<&CellResult> {
        self.cells.iter().find(|c| &c.key == key)
    }
}

const SUMMARY_PARAMS: [&str; 5] = ["M", "N", "log_w", "w", "rate"];

/// Appends `w = exp(log_w)` and `rate = M / N` columns.
fn with_derived(mut draws: ChainDraws) -> ChainDraws {
    let (im, in_, il) = (
        draws.index_of("M").expect("M column"),
        draws.index_of("N").expect("N column"),
        draws.index_of("log_w").expect("log_w column"),
    );
    for row in &mut draws.draws {
        let (m, n, lw) = (row[im], row[in_], row[il]);
        row.push(lw.exp());
        row.push(m / n);
    }
    draws.names.extend(["w".to_string(), "rate".to_string()]);
    draws.acceptance.extend([f64::NAN, f64::NAN]);
    draws.burn_in_acceptance.extend([f64::NAN, f64::NAN]);
    draws.final_step_sizes.extend([0.0, 0.0]);
    draws
}

fn fit_cell(
    key: &CellKey,
    year: i32,
    data: UnivariateData,
    priors: UnivariatePriors,
    config: &McmcConfig,
    level: f64,
) -> Result<CellResult> {
    let draws = with_derived(run_univariate_posterior(data, &priors, config)?);
    let mut summaries = BTreeMap::new();
    let mut shape = BTreeMap::new();
    let mut moments = BTreeMap::new();
    for p in SUMMARY_PARAMS {
        let col = draws.column(p).expect("summary column");
        let s = summarize(&col, level)?;
        shape.insert(p.to_string(), shape_diagnostics(&col));
        moments.insert(p.to_string(), ElicitedMoments { mean: s.mean, sd: s.sd });
        summaries.insert(p.to_string(), s);
    }
    Ok(CellResult {
        key: key.clone(),
        year,
        raw_rate: data.employed as f64 / data.n().max(1) as f64,
        data,
        priors,
        draws,
        summaries,
        shape,
        moments,
    })
}

/// Runs every work item on the current rayon pool, keeping input order.
fn run_cells<F>(step: &str, year: i32, items: Vec<(CellKey, F)>) -> StepResult
where
    F: FnOnce() -> Result<CellResult> + Send,
{
    let outcomes: Vec<(CellKey, Result<CellResult>)> = items
        .into_par_iter()
        .map(|(k, job)| (k, job()))
        .collect();
    let mut cells = Vec::new();
    let mut skipped = Vec::new();
    for (k, r) in outcomes {
        match r {
            Ok(c) => cells.push(c),
            Err(e) => {
                warn!("{step} {year} {k}: skipped ({e})");
                skipped.push(SkippedCell {
                    cell: k.to_string(),
                    year,
                    reason: e.to_string(),
                });
            }
        }
    }
    StepResult {
        step: step.to_string(),
        year,
        cells,
        skipped,
    }
}

/// Step-1 priors for one cell: Poisson `N` around the register total,
/// uniform `M` whose upper bound follows `N`, and `w = 1`.
pub fn step1_priors(employed: u64, unemployed: u64, register_total: u64) -> Result<UnivariatePriors> {
    let a = employed as i64 + 1;
    let b = register_total as i64 - unemployed as i64 - 1;
    if a > b {
        return Err(Error::Data(format!(
            "size bounds inverted: a = {a} > b = {b} (register total {register_total})"
        )));
    }
    Ok(UnivariatePriors {
        size: PriorSpec::DiscreteUniform { a, b },
        total: PriorSpec::TruncatedPoisson {
            mean: register_total as f64,
            lower: employed + unemployed + 2,
        },
        log_odds: PriorSpec::Degenerate { value: 0.0 },
        tie_size_to_total: true,
    })
}

/// Step 1 on the unbiased survey of [`BASE_YEAR`].
pub fn step1_istat(tables: &CohortTables, config: &PipelineConfig) -> Result<StepResult> {
    config.validate()?;
    let survey = tables.survey(Source::Istat, BASE_YEAR);
    let register = tables.register(BASE_YEAR);
    if survey.is_empty() {
        return Err(Error::Data(format!("no Istat rows for {BASE_YEAR}")));
    }
    let mut items = Vec::new();
    let mut missing = Vec::new();
    for (key, &(e, u)) in &survey {
        let Some(&total) = register.get(key) else {
            missing.push(key.to_string());
            continue;
        };
        let cfg = config.chain(&format!("step1/{key}"));
        let level = config.level;
        let k = key.clone();
        items.push((key.clone(), move || {
            let data = UnivariateData { employed: e, unemployed: u };
            fit_cell(&k, BASE_YEAR, data, step1_priors(e, u, total)?, &cfg, level)
        }));
    }
    if !missing.is_empty() {
        return Err(Error::Data(format!(
            "no ANS {BASE_YEAR} total for: {}",
            missing.join(", ")
        )));
    }
    info!("step 1: {} cells", items.len());
    Ok(run_cells("step1", BASE_YEAR, items))
}

/// Step-2 priors from step-1 posterior moments of `M` and `N`.
pub fn step2_priors(
    employed: u64,
    unemployed: u64,
    size: ElicitedMoments,
    total: ElicitedMoments,
    family: ElicitationFamily,
    fix_n: bool,
) -> Result<UnivariatePriors> {
    let size_lower = employed as i64 + 1;
    let total_lower = (employed + unemployed + 2) as i64;
    let log_odds = PriorSpec::LogNormalOdds { mu: 0.0, tau2: 1.0 };
    let total_prior = if fix_n {
        let n = total.mean.round().max(total_lower as f64);
        PriorSpec::Degenerate { value: n }
    } else {
        match family {
            ElicitationFamily::MomentMatchedNormal => {
                let upper = ((total.mean + 12.0 * total.sd).ceil() as i64).max(total_lower + 1);
                elicit_from_moments(total, total_lower, upper)?
            }
            ElicitationFamily::Poisson => PriorSpec::TruncatedPoisson {
                mean: total.mean,
                lower: total_lower as u64,
            },
        }
    };
    let size_prior = match family {
        ElicitationFamily::MomentMatchedNormal => {
            let total_upper = match &total_prior {
                PriorSpec::Degenerate { value } => *value as i64,
                PriorSpec::DiscretizedTruncatedNormal { upper, .. } => *upper,
                _ => unreachable!(),
            };
            let upper = total_upper - unemployed as i64 - 1;
            if upper <= size_lower {
                return Err(Error::Data(format!(
                    "elicited size bounds inverted: [{size_lower}, {upper}]"
                )));
            }
            elicit_from_moments(size, size_lower, upper)?
        }
        ElicitationFamily::Poisson => PriorSpec::TruncatedPoisson {
            mean: size.mean,
            lower: size_lower as u64,
        },
    };
    Ok(UnivariatePriors {
        size: size_prior,
        total: total_prior,
        log_odds,
        tie_size_to_total: true,
    })
}

/// Step 2 on the biased survey wave [`ODDS_WAVE`].
pub fn step2_almalaurea(
    step1: &StepResult,
    tables: &CohortTables,
    config: &PipelineConfig,
) -> Result<StepResult> {
    config.validate()?;
    let survey = tables.survey(Source::Almalaurea, ODDS_WAVE);
    if survey.is_empty() {
        return Err(Error::Data(format!("no Almalaurea rows for {ODDS_WAVE}")));
    }
    let missing: Vec<String> = survey
        .keys()
        .filter(|k| step1.cell(k).is_none())
        .map(ToString::to_string)
        .collect();
    if !missing.is_empty() {
        return Err(Error::Data(format!("no step-1 result for: {}", missing.join(", "))));
    }
    let mut items = Vec::new();
    for (key, &(e, u)) in &survey {
        let prev = step1.cell(key).expect("checked above");
        let (size, total) = (prev.moments["M"], prev.moments["N"]);
        let cfg = config.chain(&format!("step2/{key}"));
        let (family, fix_n, level) = (config.elicitation, config.fix_n, config.level);
        let k = key.clone();
        items.push((key.clone(), move || {
            let data = UnivariateData { employed: e, unemployed: u };
            let priors = step2_priors(e, u, size, total, family, fix_n)?;
            fit_cell(&k, ODDS_WAVE, data, priors, &cfg, level)
        }));
    }
    info!("step 2: {} cells", items.len());
    Ok(run_cells("step2", ODDS_WAVE, items))
}

/// Step-3 priors: `N` fixed at the register total, uniform `M`, and the
/// given log-odds prior.
pub fn step3_priors(
    employed: u64,
    unemployed: u64,
    register_total: u64,
    log_odds: PriorSpec,
) -> Result<UnivariatePriors> {
    let a = employed as i64 + 1;
    let b = register_total as i64 - unemployed as i64 - 1;
    if a > b {
        return Err(Error::Data(format!(
            "size bounds inverted: a = {a} > b = {b} (register total {register_total})"
        )));
    }
    Ok(UnivariatePriors {
        size: PriorSpec::DiscreteUniform { a, b },
        total: PriorSpec::Degenerate {
            value: register_total as f64,
        },
        log_odds,
        tie_size_to_total: false,
    })
}

/// Normal log-odds prior matching the step-2 posterior mean and variance of
/// `log w`.
pub fn moment_matched_log_odds(cell: &CellResult) -> Result<PriorSpec> {
    let m = cell.moments.get("log_w").ok_or_else(|| Error::Data("no log_w moments".into()))?;
    let spec = PriorSpec::LogNormalOdds {
        mu: m.mean,
        tau2: m.sd * m.sd,
    };
    spec.validate()?;
    Ok(spec)
}

/// Normal log-odds prior centred on the log of the posterior `alpha`
/// quantile of `w`, with the posterior variance of `log w`.
pub fn quantile_log_odds(cell: &CellResult, alpha: f64) -> Result<PriorSpec> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::validation(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let w = cell.draws.column("w").ok_or_else(|| Error::Data("no w draws".into()))?;
    let sd = cell.moments["log_w"].sd;
    let spec = PriorSpec::LogNormalOdds {
        mu: quantile(&w, alpha)?.ln(),
        tau2: sd * sd,
    };
    spec.validate()?;
    Ok(spec)
}

/// Biased-survey waves with the register year each one pairs with: wave
/// `Y` interviews graduates counted in the register for year `Y - 1`.
pub fn step3_years(tables: &CohortTables) -> Vec<(i32, i32)> {
    tables
        .years(Source::Almalaurea)
        .into_iter()
        .map(|y| (y, y - 1))
        .collect()
}

fn step3_with<F>(
    step: &str,
    step2: &StepResult,
    tables: &CohortTables,
    config: &PipelineConfig,
    log_odds_for: F,
) -> Result<Vec<StepResult>>
where
    F: Fn(&CellResult) -> Result<PriorSpec> + Sync,
{
    config.validate()?;
    let mut results = Vec::new();
    for (wave, reg_year) in step3_years(tables) {
        let survey = tables.survey(Source::Almalaurea, wave);
        let register = tables.register(reg_year);
        let mut items = Vec::new();
        let mut skipped = Vec::new();
        for (key, &(e, u)) in &survey {
            let (Some(prev), Some(&total)) = (step2.cell(key), register.get(key)) else {
                let reason = if register.contains_key(key) {
                    "no step-2 result".to_string()
                } else {
                    format!("no ANS total for {reg_year}")
                };
                skipped.push(SkippedCell {
                    cell: key.to_string(),
                    year: wave,
                    reason,
                });
                continue;
            };
            let log_odds = match &config.log_w_override {
                Some(p) => Ok(p.clone()),
                None => log_odds_for(prev),
            };
            let cfg = config.chain(&format!("{step}/{wave}/{key}"));
            let level = config.level;
            let k = key.clone();
            items.push((key.clone(), move || {
                let data = UnivariateData { employed: e, unemployed: u };
                fit_cell(&k, wave, data, step3_priors(e, u, total, log_odds?)?, &cfg, level)
            }));
        }
        let mut r = run_cells(step, wave, items);
        r.skipped.extend(skipped);
        results.push(r);
    }
    if results.is_empty() {
        warn!("{step}: no biased-survey waves found");
    }
    Ok(results)
}

/// Step 3: employment rates for every bundled wave of the biased survey.
pub fn step3_timeseries(
    step2: &StepResult,
    tables: &CohortTables,
    config: &PipelineConfig,
) -> Result<Vec<StepResult>> {
    step3_with("step3", step2, tables, config, moment_matched_log_odds)
}

/// Step 3 rerun with the log-odds prior recentred on the `alpha` quantile.
pub fn sensitivity(
    step2: &StepResult,
    tables: &CohortTables,
    alpha: f64,
    config: &PipelineConfig,
) -> Result<Vec<StepResult>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::validation(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let step = format!("sensitivity_{alpha}");
    step3_with(&step, step2, tables, config, |c| quantile_log_odds(c, alpha))
}

/// Fraction of the baseline interval covered by the overlap with `other`.
pub fn interval_overlap(base: (f64, f64), other: (f64, f64)) -> f64 {
    let width = base.1 - base.0;
    let overlap = (base.1.min(other.1) - base.0.max(other.0)).max(0.0);
    if width > 0.0 {
        overlap / width
    } else if overlap >= 0.0 && other.0 <= base.0 && base.1 <= other.1 {
        1.0
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimStudyConfig {
    pub n_true: u64,
    pub groups: usize,
    pub replicates: usize,
    pub dirichlet_alpha: Vec<f64>,
    pub beta_params: (f64, f64),
    pub m_upper: u64,
    pub seed: u64,
    pub level: f64,
    pub mcmc: McmcConfig,
    pub abc: AbcConfig,
    pub run_abc: bool,
    /// Forces every capture probability; used for symmetry checks.
    pub fixed_zeta: Option<f64>,
    /// Forces equal true group sizes.
    pub equal_sizes: bool,
}

impl Default for SimStudyConfig {
    fn default() -> Self {
        Self {
            n_true: 10_000,
            groups: 5,
            replicates: 20,
            dirichlet_alpha: vec![1.0; 5],
            beta_params: (1.0, 1.0),
            m_upper: 20_000,
            seed: 0,
            level: 0.95,
            mcmc: McmcConfig {
                iterations: 20_000,
                burn_in: 5_000,
                ..McmcConfig::default()
            },
            abc: AbcConfig::default(),
            run_abc: true,
            fixed_zeta: None,
            equal_sizes: false,
        }
    }
}

impl SimStudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_true == 0 || self.groups < 2 || self.replicates == 0 || self.m_upper == 0 {
            return Err(Error::validation(
                "n_true, replicates and m_upper must be positive and groups at least 2",
            ));
        }
        if self.dirichlet_alpha.len() != self.groups {
            return Err(Error::validation(format!(
                "{} Dirichlet parameters for {} groups",
                self.dirichlet_alpha.len(),
                self.groups
            )));
        }
        if self.dirichlet_alpha.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(Error::validation("Dirichlet parameters must be positive"));
        }
        let (a, b) = self.beta_params;
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::validation("Beta parameters must be positive"));
        }
        if let Some(z) = self.fixed_zeta {
            if !(z > 0.0 && z < 1.0) {
                return Err(Error::validation(format!("fixed_zeta must lie in (0, 1), got {z}")));
            }
        }
        self.mcmc.validate()?;
        if self.run_abc {
            self.abc.validate()?;
        }
        Ok(())
    }
}

/// One simulated dataset with its ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulatedSample {
    pub sizes: Vec<u64>,
    pub zeta: Vec<f64>,
    pub log_w: Vec<f64>,
    pub y: Vec<u64>,
}

/// Splits `total` in proportion to `shares`, rounding by largest remainder
/// so the parts add up exactly.
pub fn largest_remainder(total: u64, shares: &[f64]) -> Vec<u64> {
    let sum: f64 = shares.iter().sum();
    let exact: Vec<f64> = shares.iter().map(|s| s / sum * total as f64).collect();
    let mut parts: Vec<u64> = exact.iter().map(|e| e.floor() as u64).collect();
    let assigned: u64 = parts.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&i, &j| {
        let (ri, rj) = (exact[i] - exact[i].floor(), exact[j] - exact[j].floor());
        rj.total_cmp(&ri).then(i.cmp(&j))
    });
    for &i in order.iter().take(total.saturating_sub(assigned) as usize) {
        parts[i] += 1;
    }
    parts
}

/// Draws one sample: Dirichlet shares, Beta capture probabilities and
/// Binomial counts. Samples with no captures, or with a count the size
/// priors cannot accommodate, are redrawn.
pub fn simulate_sample<R: Rng + ?Sized>(config: &SimStudyConfig, rng: &mut R) -> Result<SimulatedSample> {
    let beta = Beta::new(config.beta_params.0, config.beta_params.1)
        .map_err(|e| Error::validation(format!("beta: {e}")))?;
    for _ in 0..10_000 {
        let sizes = if config.equal_sizes {
            largest_remainder(config.n_true, &vec![1.0; config.groups])
        } else {
            let shares: Vec<f64> = config
                .dirichlet_alpha
                .iter()
                .map(|&a| Gamma::new(a, 1.0).expect("validated shape").sample(rng))
                .collect();
            largest_remainder(config.n_true, &shares)
        };
        let zeta: Vec<f64> = (0..config.groups)
            .map(|_| config.fixed_zeta.unwrap_or_else(|| beta.sample(rng)))
            .collect();
        if zeta.iter().any(|z| *z <= 0.0 || *z >= 1.0) {
            continue;
        }
        let y: Vec<u64> = sizes
            .iter()
            .zip(&zeta)
            .map(|(&m, &z)| Binomial::new(m, z).expect("valid binomial").sample(rng))
            .collect();
        if y.iter().sum::<u64>() == 0 || y.iter().skip(1).any(|&yc| yc + 1 > config.m_upper) {
            info!("simulation: redrawing a sample with counts {y:?}");
            continue;
        }
        let log_w = zeta.iter().map(|z| z.ln() - (1.0 - z).ln()).collect();
        return Ok(SimulatedSample { sizes, zeta, log_w, y });
    }
    Err(Error::validation("could not simulate a usable sample in 10000 attempts"))
}

/// Priors of the simulation study: Poisson at the truth for the first
/// group, uniform from `y_c + 1` to `m_upper` for the rest.
pub fn simulation_priors(sample: &SimulatedSample, m_upper: u64) -> Vec<PriorSpec> {
    let mut priors = vec![PriorSpec::TruncatedPoisson {
        mean: sample.sizes[0] as f64,
        lower: 0,
    }];
    priors.extend(sample.y.iter().skip(1).map(|&yc| PriorSpec::DiscreteUniform {
        a: yc as i64 + 1,
        b: m_upper as i64,
    }));
    priors
}

/// Per-replicate summaries for one method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodReplicate {
    /// Summaries of `M1..MC` then `N`.
    pub summaries: Vec<PosteriorSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub sample: SimulatedSample,
    pub mcmc: Option<MethodReplicate>,
    pub abc: Option<MethodReplicate>,
}

/// Coverage of `M1..MC` and `N` for one method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodCoverage {
    pub method: String,
    pub parameters: Vec<String>,
    pub counts: Vec<CoverageCount>,
    /// Replicates where the method failed and so count as misses.
    pub failures: usize,
}

impl MethodCoverage {
    pub fn of(&self, param: &str) -> Option<CoverageCount> {
        let i = self.parameters.iter().position(|p| p == param)?;
        Some(self.counts[i])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub config: SimStudyConfig,
    pub replicates: Vec<ReplicateResult>,
    pub methods: Vec<MethodCoverage>,
}

impl CoverageReport {
    pub fn method(&self, name: &str) -> Option<&MethodCoverage> {
        self.methods.iter().find(|m| m.method == name)
    }
}

fn summarize_chain(draws: &ChainDraws, level: f64) -> Result<Vec<PosteriorSummary>> {
    draws
        .names
        .iter()
        .map(|n| summarize(&draws.column(n).expect("named column"), level))
        .collect()
}

fn run_replicate(config: &SimStudyConfig, r: usize) -> Result<ReplicateResult> {
    let mut rng = item_stream(config.seed, &format!("sample/{r}"));
    let sample = simulate_sample(config, &mut rng)?;
    let priors = simulation_priors(&sample, config.m_upper);

    let mut mcmc_cfg = config.mcmc.clone();
    mcmc_cfg.seed = derive_seed(config.seed, &format!("mcmc/{r}"));
    if mcmc_cfg.proposals.is_empty() {
        mcmc_cfg.proposals.push(ProposalSpec::IndependentFromPrior);
    }
    let mcmc = match run_multivariate_posterior(&sample.y, &priors, &sample.log_w, &mcmc_cfg) {
        Ok(d) => MethodReplicate {
            summaries: summarize_chain(&d, config.level)?,
            calibration: None,
            failure: None,
        },
        Err(e) if !e.is_validation() => MethodReplicate {
            summaries: Vec::new(),
            calibration: None,
            failure: Some(e.to_string()),
        },
        Err(e) => return Err(e),
    };

    let abc = if config.run_abc {
        let mut abc_cfg = config.abc.clone();
        abc_cfg.seed = derive_seed(config.seed, &format!("abc/{r}"));
        Some(match run_gibbs_abc(&sample.y, &priors, &sample.log_w, &abc_cfg) {
            Ok((d, cal)) => MethodReplicate {
                summaries: summarize_chain(&d, config.level)?,
                calibration: cal,
                failure: None,
            },
            Err(e) if !e.is_validation() => MethodReplicate {
                summaries: Vec::new(),
                calibration: None,
                failure: Some(e.to_string()),
            },
            Err(e) => return Err(e),
        })
    } else {
        None
    };
    Ok(ReplicateResult {
        replicate: r,
        sample,
        mcmc: Some(mcmc),
        abc,
    })
}

fn method_coverage(
    name: &str,
    groups: usize,
    replicates: &[ReplicateResult],
    pick: impl Fn(&ReplicateResult) -> Option<&MethodReplicate>,
) -> Result<MethodCoverage> {
    let mut parameters: Vec<String> = (1..=groups).map(|i| format!("M{i}")).collect();
    parameters.push("N".into());
    let mut counts = Vec::with_capacity(parameters.len());
    let ok: Vec<(&ReplicateResult, &MethodReplicate)> = replicates
        .iter()
        .filter_map(|r| pick(r).map(|m| (r, m)))
        .filter(|(_, m)| m.failure.is_none())
        .collect();
    let attempted = replicates.iter().filter(|r| pick(r).is_some()).count();
    for p in 0..=groups {
        let sums: Vec<PosteriorSummary> = ok.iter().map(|(_, m)| m.summaries[p].clone()).collect();
        let truths: Vec<f64> = ok
            .iter()
            .map(|(r, _)| {
                if p < groups {
                    r.sample.sizes[p] as f64
                } else {
                    r.sample.sizes.iter().sum::<u64>() as f64
                }
            })
            .collect();
        let mut c = coverage_count(&sums, &truths)?;
        c.replicates = attempted;
        counts.push(c);
    }
    Ok(MethodCoverage {
        method: name.to_string(),
        parameters,
        counts,
        failures: attempted - ok.len(),
    })
}

/// Simulation study comparing MCMC and Gibbs-ABC interval coverage.
pub fn simulation_study(config: &SimStudyConfig) -> Result<CoverageReport> {
    config.validate()?;
    let replicates: Vec<ReplicateResult> = (0..config.replicates)
        .into_par_iter()
        .map(|r| run_replicate(config, r))
        .collect::<Result<_>>()?;
    let mut methods = vec![method_coverage("mcmc", config.groups, &replicates, |r| r.mcmc.as_ref())?];
    if config.run_abc {
        methods.push(method_coverage("abc", config.groups, &replicates, |r| r.abc.as_ref())?);
    }
    Ok(CoverageReport {
        config: config.clone(),
        replicates,
        methods,
    })
}

/// Every stage of the case study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineRun {
    pub step1: StepResult,
    pub step2: StepResult,
    pub step3: Vec<StepResult>,
    /// `(alpha, per-wave results)` for each sensitivity rerun.
    pub sensitivity: Vec<(f64, Vec<StepResult>)>,
}

pub fn run_all(tables: &CohortTables, config: &PipelineConfig) -> Result<PipelineRun> {
    let step1 = step1_istat(tables, config)?;
    let step2 = step2_almalaurea(&step1, tables, config)?;
    let step3 = step3_timeseries(&step2, tables, config)?;
    let sensitivity = config
        .alphas
        .iter()
        .map(|&a| Ok((a, sensitivity(&step2, tables, a, config)?)))
        .collect::<Result<_>>()?;
    Ok(PipelineRun {
        step1,
        step2,
        step3,
        sensitivity,
    })
}
