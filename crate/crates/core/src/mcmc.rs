//! Metropolis-within-Gibbs samplers.
//!
//! The univariate sampler targets the joint posterior of the employed group
//! size `M`, the population total `N` and the log odds ratio `log w` given a
//! single list split into `(employed, unemployed)` counts. The multivariate
//! sampler targets the group sizes `M_1..M_C` with fixed weights; each
//! component update uses only the univariate FNCH of its pair with an anchor
//! group, never the full multivariate pmf.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fnch::UnivariateFnch;
use crate::prior::{Prior, PriorSpec};
use crate::rng::master_stream;

/// How a parameter's Metropolis proposal is generated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProposalSpec {
    /// Draw the proposal from the parameter's prior.
    IndependentFromPrior,
    /// Gaussian random walk, rounded to the nearest integer for
    /// integer-valued parameters.
    RoundedGaussianWalk { sd: f64 },
}

impl ProposalSpec {
    fn validate(&self) -> Result<()> {
        if let ProposalSpec::RoundedGaussianWalk { sd } = self {
            if !(*sd > 0.0 && sd.is_finite()) {
                return Err(Error::validation(format!("walk sd must be positive, got {sd}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    /// Total sweeps, burn-in included.
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Initial walk step size per parameter; missing entries fall back to
    /// the prior sd (at least 1 for integer parameters).
    pub rw_sd: Vec<f64>,
    /// Proposal kind per parameter; missing entries mean a rounded Gaussian
    /// walk with the `rw_sd` step.
    pub proposals: Vec<ProposalSpec>,
    /// Tune walk step sizes during burn-in.
    pub adapt: bool,
    pub adapt_window: usize,
    /// Visit parameters in a fresh random order each sweep instead of the
    /// fixed ascending order.
    pub random_scan: bool,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            iterations: 50_000,
            burn_in: 10_000,
            thin: 1,
            seed: 0,
            rw_sd: Vec::new(),
            proposals: Vec::new(),
            adapt: true,
            adapt_window: 50,
            random_scan: false,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::validation("iterations must be positive"));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::validation(format!(
                "burn_in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::validation("thin must be positive"));
        }
        if self.adapt && self.adapt_window == 0 {
            return Err(Error::validation("adapt_window must be positive"));
        }
        if let Some(sd) = self.rw_sd.iter().find(|sd| !(**sd > 0.0 && sd.is_finite())) {
            return Err(Error::validation(format!("rw_sd must be positive, got {sd}")));
        }
        self.proposals.iter().try_for_each(ProposalSpec::validate)
    }

    /// Resolved proposal for parameter `i`.
    pub fn proposal_for(&self, i: usize) -> Option<ProposalSpec> {
        match (self.proposals.get(i), self.rw_sd.get(i)) {
            (Some(p), _) => Some(p.clone()),
            (None, Some(&sd)) => Some(ProposalSpec::RoundedGaussianWalk { sd }),
            (None, None) => None,
        }
    }
}

/// Acceptance bounds that step-size adaptation steers towards.
pub const TARGET_ACCEPTANCE: (f64, f64) = (0.25, 0.5);

/// One adaptation step: grow the walk by 10% when the windowed acceptance
/// exceeds the target band, shrink it by 10% when it falls below.
pub fn adapt_step_size(sd: f64, window_acceptance: f64) -> f64 {
    if window_acceptance > TARGET_ACCEPTANCE.1 {
        sd * 1.1
    } else if window_acceptance < TARGET_ACCEPTANCE.0 {
        sd * 0.9
    } else {
        sd
    }
}

/// Applies [`adapt_step_size`] to every parameter using per-parameter
/// `(accepted, proposed)` counts over the last window.
pub fn adapt_step_sizes(sds: &[f64], window_counts: &[(u64, u64)]) -> Vec<f64> {
    sds.iter()
        .zip(window_counts)
        .map(|(&sd, &(acc, prop))| {
            if prop == 0 {
                sd
            } else {
                adapt_step_size(sd, acc as f64 / prop as f64)
            }
        })
        .collect()
}

/// Per-step attempt statistics recorded by the Gibbs-ABC sampler.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AttemptStats {
    pub total: u64,
    pub max: u64,
    pub steps: u64,
}

impl AttemptStats {
    pub fn record(&mut self, attempts: u64) {
        self.total += attempts;
        self.max = self.max.max(attempts);
        self.steps += 1;
    }

    pub fn mean(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.total as f64 / self.steps as f64
        }
    }
}

/// Posterior draws from one chain plus the metadata needed to reproduce it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainDraws {
    pub names: Vec<String>,
    /// Post-burn-in, thinned rows; one column per name.
    pub draws: Vec<Vec<f64>>,
    /// Post-burn-in acceptance rate per parameter (1 for parameters that
    /// are never moved).
    pub acceptance: Vec<f64>,
    pub burn_in_acceptance: Vec<f64>,
    /// Walk step sizes after adaptation (0 for non-walk parameters).
    pub final_step_sizes: Vec<f64>,
    pub seed: u64,
    pub burn_in: usize,
    pub thin: usize,
    pub config: serde_json::Value,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attempts: Vec<AttemptStats>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Sidecar metadata: everything in [`ChainDraws`] except the draws.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainMetadata {
    pub names: Vec<String>,
    pub n_draws: usize,
    pub acceptance: Vec<f64>,
    pub burn_in_acceptance: Vec<f64>,
    pub final_step_sizes: Vec<f64>,
    pub seed: u64,
    pub burn_in: usize,
    pub thin: usize,
    pub config: serde_json::Value,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attempts: Vec<AttemptStats>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ChainDraws {
    pub fn n_draws(&self) -> usize {
        self.draws.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.index_of(name)?;
        Some(self.draws.iter().map(|row| row[i]).collect())
    }

    pub fn metadata(&self) -> ChainMetadata {
        ChainMetadata {
            names: self.names.clone(),
            n_draws: self.draws.len(),
            acceptance: self.acceptance.clone(),
            burn_in_acceptance: self.burn_in_acceptance.clone(),
            final_step_sizes: self.final_step_sizes.clone(),
            seed: self.seed,
            burn_in: self.burn_in,
            thin: self.thin,
            config: self.config.clone(),
            attempts: self.attempts.clone(),
            notes: self.notes.clone(),
        }
    }

    /// CSV with a `draw` index column followed by one column per parameter.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["draw".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for (i, row) in self.draws.iter().enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(row.iter().map(|v| crate::output::fmt_f64(*v)));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Reads draws written by [`ChainDraws::write_csv`]. Metadata fields are
    /// left empty.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        let skip = usize::from(headers.get(0) == Some("draw"));
        let names: Vec<String> = headers.iter().skip(skip).map(str::to_string).collect();
        if names.is_empty() {
            return Err(Error::Data("draws file has no parameter columns".into()));
        }
        let mut draws = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .skip(skip)
                .map(|v| {
                    v.trim().parse::<f64>().map_err(|_| {
                        Error::Data(format!("row {}: cannot parse '{v}' as a number", line + 2))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != names.len() {
                return Err(Error::Data(format!(
                    "row {} has {} values for {} columns",
                    line + 2,
                    row.len(),
                    names.len()
                )));
            }
            draws.push(row);
        }
        let k = names.len();
        Ok(Self {
            names,
            draws,
            acceptance: vec![f64::NAN; k],
            burn_in_acceptance: vec![f64::NAN; k],
            final_step_sizes: vec![0.0; k],
            seed: 0,
            burn_in: 0,
            thin: 1,
            config: serde_json::Value::Null,
            attempts: Vec::new(),
            notes: Vec::new(),
        })
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Counts {
    accepted: u64,
    proposed: u64,
}

impl Counts {
    fn rate(&self) -> f64 {
        if self.proposed == 0 {
            1.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Move {
    Fixed,
    Independent,
    Walk(f64),
}

/// Proposal mechanics and acceptance bookkeeping for one parameter.
#[derive(Clone, Debug)]
struct Updater {
    mv: Move,
    integer: bool,
    burn: Counts,
    main: Counts,
    window: Counts,
}

impl Updater {
    fn new(prior: &Prior, spec: Option<ProposalSpec>, integer: bool) -> Self {
        let mv = if prior.is_degenerate() {
            Move::Fixed
        } else {
            match spec {
                Some(ProposalSpec::IndependentFromPrior) => Move::Independent,
                Some(ProposalSpec::RoundedGaussianWalk { sd }) => Move::Walk(sd),
                None => Move::Walk(default_step(prior, integer)),
            }
        };
        Self {
            mv,
            integer,
            burn: Counts::default(),
            main: Counts::default(),
            window: Counts::default(),
        }
    }

    fn is_fixed(&self) -> bool {
        self.mv == Move::Fixed
    }

    /// Returns the proposal and `ln q(current | proposal) - ln q(proposal | current)`.
    fn propose<R: Rng + ?Sized>(&self, current: f64, prior: &Prior, rng: &mut R) -> (f64, f64) {
        match self.mv {
            Move::Fixed => (current, 0.0),
            Move::Independent => {
                let x = prior.sample(rng);
                (x, prior.log_density(current) - prior.log_density(x))
            }
            Move::Walk(sd) => {
                let z: f64 = rng.sample(StandardNormal);
                let x = current + sd * z;
                (if self.integer { x.round() } else { x }, 0.0)
            }
        }
    }

    fn record(&mut self, accepted: bool, in_burn_in: bool) {
        let c = if in_burn_in { &mut self.burn } else { &mut self.main };
        c.proposed += 1;
        c.accepted += u64::from(accepted);
        if in_burn_in {
            self.window.proposed += 1;
            self.window.accepted += u64::from(accepted);
        }
    }

    fn end_window(&mut self) {
        if let Move::Walk(sd) = self.mv {
            if self.window.proposed > 0 {
                self.mv = Move::Walk(adapt_step_size(sd, self.window.rate()));
            }
        }
        self.window = Counts::default();
    }

    fn step_size(&self) -> f64 {
        match self.mv {
            Move::Walk(sd) => sd,
            _ => 0.0,
        }
    }
}

fn default_step(prior: &Prior, integer: bool) -> f64 {
    let sd = prior.sd();
    let step = if sd.is_finite() && sd > 0.0 { sd } else { 1.0 };
    if integer {
        step.max(1.0)
    } else {
        step
    }
}

/// Metropolis accept/reject on a log ratio.
fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
}

/// Observed single-list counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnivariateData {
    pub employed: u64,
    pub unemployed: u64,
}

impl UnivariateData {
    pub fn n(&self) -> u64 {
        self.employed + self.unemployed
    }
}

/// Priors for `(M, N, log w)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnivariatePriors {
    pub size: PriorSpec,
    pub total: PriorSpec,
    pub log_odds: PriorSpec,
    /// When set, the upper bound of the size prior is `N - unemployed - 1`
    /// for the current `N` and the size prior is renormalized on that range.
    #[serde(default)]
    pub tie_size_to_total: bool,
}

/// Conditional prior of `M` given `N`, optionally with an upper bound that
/// follows `N`.
struct SizePrior {
    base: Prior,
    tied_offset: Option<i64>,
    lower: i64,
    kernel_max: f64,
    /// `prefix[i] = sum_{k = lower}^{lower + i} exp(kernel(k) - kernel_max)`
    prefix: Vec<f64>,
}

impl SizePrior {
    fn new(base: Prior, tied_offset: Option<i64>) -> Self {
        let lower = base.lower_bound().max(0.0) as i64;
        let kernel_max = base.log_kernel_max();
        Self {
            base,
            tied_offset,
            lower,
            kernel_max,
            prefix: Vec::new(),
        }
    }

    fn upper(&self, total: i64) -> f64 {
        match self.tied_offset {
            Some(off) => (total - off) as f64,
            None => self.base.upper_bound(),
        }
    }

    fn log_norm(&mut self, upper: i64) -> f64 {
        if upper < self.lower {
            return f64::NEG_INFINITY;
        }
        let need = (upper - self.lower) as usize + 1;
        while self.prefix.len() < need {
            let k = self.lower + self.prefix.len() as i64;
            let prev = self.prefix.last().copied().unwrap_or(0.0);
            self.prefix
                .push(prev + (self.base.log_kernel(k) - self.kernel_max).exp());
        }
        self.prefix[need - 1].ln() + self.kernel_max
    }

    fn log_density(&mut self, size: f64, total: f64) -> f64 {
        match self.tied_offset {
            None => self.base.log_density(size),
            Some(off) => {
                let upper = total as i64 - off;
                if size.fract() != 0.0 || size < self.lower as f64 || size > upper as f64 {
                    return f64::NEG_INFINITY;
                }
                self.base.log_kernel(size as i64) - self.log_norm(upper)
            }
        }
    }
}

/// FNCH log-likelihood of the employed count given `(M, N, log w)`.
fn univariate_loglik(data: &UnivariateData, size: f64, total: f64, log_w: f64) -> f64 {
    if size < 0.0 || total < size || !log_w.is_finite() {
        return f64::NEG_INFINITY;
    }
    match UnivariateFnch::with_total(size as u64, total as u64, data.n(), log_w) {
        Ok(d) => d.log_pmf(data.employed as i64),
        Err(_) => f64::NEG_INFINITY,
    }
}

fn config_echo<T: Serialize>(config: &T) -> serde_json::Value {
    serde_json::to_value(config).unwrap_or(serde_json::Value::Null)
}

/// Metropolis-within-Gibbs over `(M, N, log w)` for one single-list cell.
pub fn run_univariate_posterior(
    data: UnivariateData,
    priors: &UnivariatePriors,
    config: &McmcConfig,
) -> Result<ChainDraws> {
    config.validate()?;
    if !priors.size.is_discrete() && !matches!(priors.size, PriorSpec::Degenerate { .. }) {
        return Err(Error::validation("size prior must be a discrete family"));
    }
    if !priors.total.is_discrete() && !matches!(priors.total, PriorSpec::Degenerate { .. }) {
        return Err(Error::validation("total prior must be a discrete family"));
    }
    if config.proposals.len() > 3 || config.rw_sd.len() > 3 {
        return Err(Error::validation("at most three proposals (M, N, log_w)"));
    }
    let size_base = Prior::new(priors.size.clone())?;
    let total_prior = Prior::new(priors.total.clone())?;
    let odds_prior = Prior::new(priors.log_odds.clone())?;
    let tied = (priors.tie_size_to_total && !size_base.is_degenerate())
        .then_some(data.unemployed as i64 + 1);
    let mut size_prior = SizePrior::new(size_base.clone(), tied);

    let proposal = |i: usize| config.proposal_for(i);
    let mut updaters = [
        Updater::new(&size_base, proposal(0), true),
        Updater::new(&total_prior, proposal(1), true),
        Updater::new(&odds_prior, proposal(2), false),
    ];

    // Initial state: N at its prior mean, log w at its prior mean, M at the
    // prior median clipped into [employed + 1, upper].
    let total0 = if total_prior.is_degenerate() {
        total_prior.mean()
    } else {
        total_prior.mean().round()
    };
    let log_w0 = odds_prior.mean();
    let size0 = if size_base.is_degenerate() {
        size_base.mean()
    } else {
        let upper = size_prior.upper(total0 as i64);
        let median = match tied {
            Some(_) => {
                let lo = size_prior.lower as f64;
                let hi = upper;
                size_base.median().min(((lo + hi) / 2.0).floor()).max(lo)
            }
            None => size_base.median(),
        };
        median.max(data.employed as f64 + 1.0).min(upper)
    };
    let mut state = [size0, total0, log_w0];

    let log_target = |s: &[f64; 3], sp: &mut SizePrior| -> f64 {
        let lp = total_prior.log_density(s[1]) + odds_prior.log_density(s[2]);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        let lp = lp + sp.log_density(s[0], s[1]);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        lp + univariate_loglik(&data, s[0], s[1], s[2])
    };
    let mut current = log_target(&state, &mut size_prior);
    if !current.is_finite() {
        return Err(Error::Initialization(format!(
            "zero posterior mass at M = {}, N = {}, log w = {} (employed {}, unemployed {})",
            state[0], state[1], state[2], data.employed, data.unemployed
        )));
    }

    let priors_for_proposal = [&size_base, &total_prior, &odds_prior];
    let mut rng = master_stream(config.seed);
    let mut order = [0usize, 1, 2];
    let mut draws = Vec::with_capacity((config.iterations - config.burn_in) / config.thin + 1);

    for it in 0..config.iterations {
        let in_burn = it < config.burn_in;
        if config.random_scan {
            order.shuffle(&mut rng);
        }
        for &p in &order {
            let upd = &updaters[p];
            if upd.is_fixed() {
                continue;
            }
            let (x, log_q) = upd.propose(state[p], priors_for_proposal[p], &mut rng);
            let accepted = if x == state[p] {
                true
            } else {
                let mut prop = state;
                prop[p] = x;
                let t = log_target(&prop, &mut size_prior);
                if t.is_finite() && accept(t - current + log_q, &mut rng) {
                    state = prop;
                    current = t;
                    true
                } else {
                    false
                }
            };
            updaters[p].record(accepted, in_burn);
        }
        if in_burn && config.adapt && (it + 1) % config.adapt_window == 0 {
            updaters.iter_mut().for_each(Updater::end_window);
        }
        if !in_burn && (it - config.burn_in) % config.thin == 0 {
            draws.push(state.to_vec());
        }
    }

    let mut notes = Vec::new();
    if matches!(updaters[1].mv, Move::Walk(_)) {
        notes.push("N updated with a rounded Gaussian random walk".to_string());
    }
    Ok(ChainDraws {
        names: vec!["M".into(), "N".into(), "log_w".into()],
        draws,
        acceptance: updaters.iter().map(|u| u.main.rate()).collect(),
        burn_in_acceptance: updaters.iter().map(|u| u.burn.rate()).collect(),
        final_step_sizes: updaters.iter().map(Updater::step_size).collect(),
        seed: config.seed,
        burn_in: config.burn_in,
        thin: config.thin,
        config: config_echo(config),
        attempts: Vec::new(),
        notes,
    })
}

/// Anchor group paired with `group` in pair-conditional updates: the first
/// group for everyone else, the second group for the first.
pub fn anchor_of(group: usize) -> usize {
    if group == 0 {
        1
    } else {
        0
    }
}

/// Log of the pair-conditional FNCH likelihood used to update `group`.
pub fn pair_log_likelihood(y: &[u64], sizes: &[f64], log_w: &[f64], group: usize) -> f64 {
    let anchor = anchor_of(group);
    let (mc, ma) = (sizes[group], sizes[anchor]);
    if mc < 0.0 || ma < 0.0 {
        return f64::NEG_INFINITY;
    }
    match UnivariateFnch::new(
        mc as u64,
        ma as u64,
        y[group] + y[anchor],
        log_w[group] - log_w[anchor],
    ) {
        Ok(d) => d.log_pmf(y[group] as i64),
        Err(_) => f64::NEG_INFINITY,
    }
}

pub(crate) fn validate_multivariate(y: &[u64], priors: &[PriorSpec], log_w: &[f64]) -> Result<()> {
    if y.len() < 2 {
        return Err(Error::validation(format!("need at least two groups, got {}", y.len())));
    }
    if priors.len() != y.len() || log_w.len() != y.len() {
        return Err(Error::validation(format!(
            "{} counts, {} priors and {} log-weights must agree",
            y.len(),
            priors.len(),
            log_w.len()
        )));
    }
    if let Some(bad) = log_w.iter().find(|v| !v.is_finite()) {
        return Err(Error::validation(format!("log-weight {bad} is not finite")));
    }
    if let Some(p) = priors
        .iter()
        .find(|p| !p.is_discrete() && !matches!(p, PriorSpec::Degenerate { .. }))
    {
        return Err(Error::validation(format!("group size prior must be discrete, got {p:?}")));
    }
    Ok(())
}

/// Initial group size: prior median clipped to `[y + 1, upper]`.
pub(crate) fn initial_size(prior: &Prior, y: u64) -> f64 {
    if prior.is_degenerate() {
        return prior.mean();
    }
    prior
        .median()
        .max(y as f64 + 1.0)
        .min(prior.upper_bound())
}

/// Metropolis-within-Gibbs over group sizes `M_1..M_C` with fixed weights.
/// Draw columns are `M1..MC` followed by their sum `N`.
pub fn run_multivariate_posterior(
    y: &[u64],
    priors: &[PriorSpec],
    log_w: &[f64],
    config: &McmcConfig,
) -> Result<ChainDraws> {
    config.validate()?;
    validate_multivariate(y, priors, log_w)?;
    let c = y.len();
    if config.proposals.len() > c || config.rw_sd.len() > c {
        return Err(Error::validation(format!("more proposals than the {c} groups")));
    }
    let priors: Vec<Prior> = priors.iter().cloned().map(Prior::new).collect::<Result<_>>()?;
    let mut updaters: Vec<Updater> = priors
        .iter()
        .enumerate()
        .map(|(i, p)| Updater::new(p, config.proposal_for(i), true))
        .collect();
    let mut sizes: Vec<f64> = priors.iter().zip(y).map(|(p, &yc)| initial_size(p, yc)).collect();

    for g in 0..c {
        let lp = priors[g].log_density(sizes[g]) + pair_log_likelihood(y, &sizes, log_w, g);
        if !lp.is_finite() {
            return Err(Error::Initialization(format!(
                "zero posterior mass for group {} at initial sizes {:?}",
                g + 1,
                sizes
            )));
        }
    }

    let mut rng = master_stream(config.seed);
    let mut order: Vec<usize> = (0..c).collect();
    let mut draws = Vec::with_capacity((config.iterations - config.burn_in) / config.thin + 1);
    for it in 0..config.iterations {
        let in_burn = it < config.burn_in;
        if config.random_scan {
            order.shuffle(&mut rng);
        }
        for &g in &order {
            if updaters[g].is_fixed() {
                continue;
            }
            let (x, log_q) = updaters[g].propose(sizes[g], &priors[g], &mut rng);
            let accepted = if x == sizes[g] {
                true
            } else {
                let prior_new = priors[g].log_density(x);
                if prior_new == f64::NEG_INFINITY || x < (y[g] + 1) as f64 {
                    false
                } else {
                    let old = sizes[g];
                    let cur = priors[g].log_density(old) + pair_log_likelihood(y, &sizes, log_w, g);
                    sizes[g] = x;
                    let new = prior_new + pair_log_likelihood(y, &sizes, log_w, g);
                    if new.is_finite() && accept(new - cur + log_q, &mut rng) {
                        true
                    } else {
                        sizes[g] = old;
                        false
                    }
                }
            };
            updaters[g].record(accepted, in_burn);
        }
        if in_burn && config.adapt && (it + 1) % config.adapt_window == 0 {
            updaters.iter_mut().for_each(Updater::end_window);
        }
        if !in_burn && (it - config.burn_in) % config.thin == 0 {
            let mut row = sizes.clone();
            row.push(sizes.iter().sum());
            draws.push(row);
        }
    }

    let mut names: Vec<String> = (1..=c).map(|i| format!("M{i}")).collect();
    names.push("N".into());
    let mut acceptance: Vec<f64> = updaters.iter().map(|u| u.main.rate()).collect();
    let mut burn_acc: Vec<f64> = updaters.iter().map(|u| u.burn.rate()).collect();
    let mut steps: Vec<f64> = updaters.iter().map(Updater::step_size).collect();
    acceptance.push(f64::NAN);
    burn_acc.push(f64::NAN);
    steps.push(0.0);
    Ok(ChainDraws {
        names,
        draws,
        acceptance,
        burn_in_acceptance: burn_acc,
        final_step_sizes: steps,
        seed: config.seed,
        burn_in: config.burn_in,
        thin: config.thin,
        config: config_echo(config),
        attempts: Vec::new(),
        notes: Vec::new(),
    })
}
