//! Likelihood-free Gibbs sampler for group sizes.
//!
//! Each component update draws `M_c` from its prior, simulates a synthetic
//! count from the pair-conditional FNCH with the anchor group, and keeps the
//! draw once the synthetic relative frequency is within `eps_c` of the
//! observed one.

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fnch::UnivariateFnch;
use crate::mcmc::{anchor_of, initial_size, validate_multivariate, AttemptStats, ChainDraws};
use crate::prior::{Prior, PriorSpec};
use crate::rng::{item_stream, master_stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AbcConfig {
    /// Per-group thresholds; empty means calibrate from the prior predictive.
    pub epsilon: Vec<f64>,
    pub calibration_draws: usize,
    pub calibration_quantile: f64,
    pub max_attempts_per_step: u64,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
}

impl Default for AbcConfig {
    fn default() -> Self {
        Self {
            epsilon: Vec::new(),
            calibration_draws: 10_000,
            calibration_quantile: 0.02,
            max_attempts_per_step: 1_000_000,
            iterations: 5_000,
            burn_in: 500,
            thin: 1,
            seed: 0,
        }
    }
}

impl AbcConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(e) = self.epsilon.iter().find(|e| !(**e >= 0.0 && e.is_finite())) {
            return Err(Error::validation(format!("epsilon must be non-negative, got {e}")));
        }
        if self.epsilon.is_empty() && self.calibration_draws < 100 {
            return Err(Error::validation(format!(
                "calibration_draws must be at least 100, got {}",
                self.calibration_draws
            )));
        }
        if !(self.calibration_quantile > 0.0 && self.calibration_quantile <= 1.0) {
            return Err(Error::validation(format!(
                "calibration_quantile must lie in (0, 1], got {}",
                self.calibration_quantile
            )));
        }
        if self.max_attempts_per_step == 0 {
            return Err(Error::validation("max_attempts_per_step must be positive"));
        }
        if self.iterations == 0 || self.burn_in >= self.iterations {
            return Err(Error::validation(format!(
                "need 0 <= burn_in < iterations, got burn_in {} and iterations {}",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::validation("thin must be positive"));
        }
        Ok(())
    }
}

/// Relative frequency of group `c` in a sample of size `n`.
pub fn summary_stat(y_c: u64, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::validation("summary statistic needs n > 0"));
    }
    if y_c > n {
        return Err(Error::validation(format!("count {y_c} exceeds sample size {n}")));
    }
    Ok(y_c as f64 / n as f64)
}

/// Absolute difference of observed and synthetic relative frequencies.
pub fn distance(y_c: u64, x_c: u64, n: u64) -> Result<f64> {
    Ok((summary_stat(y_c, n)? - summary_stat(x_c, n)?).abs())
}

/// Per-group outcome of threshold calibration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupCalibration {
    pub group: usize,
    pub epsilon: f64,
    /// Every prior-predictive distance was the same value.
    pub degenerate: bool,
    /// Prior draws whose pair had an empty FNCH support; these are redrawn.
    pub empty_support_draws: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub draws: usize,
    pub quantile: f64,
    pub groups: Vec<GroupCalibration>,
}

impl CalibrationReport {
    pub fn epsilon(&self) -> Vec<f64> {
        self.groups.iter().map(|g| g.epsilon).collect()
    }
}

/// Inverse empirical CDF (the smallest draw with at least a fraction `p` of
/// the sample at or below it).
fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let k = ((p * sorted.len() as f64 - 1e-9).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

fn pair_fnch(
    y: &[u64],
    log_w: &[f64],
    group: usize,
    size: f64,
    anchor_size: f64,
) -> Option<UnivariateFnch> {
    let a = anchor_of(group);
    if size < 0.0 || anchor_size < 0.0 {
        return None;
    }
    UnivariateFnch::new(
        size as u64,
        anchor_size as u64,
        y[group] + y[a],
        log_w[group] - log_w[a],
    )
    .ok()
}

/// Sets each `eps_c` to the configured quantile of distances between the
/// observed count and synthetic counts simulated with both pair sizes drawn
/// from their priors.
pub fn calibrate_epsilon<R: Rng + ?Sized>(
    y: &[u64],
    priors: &[PriorSpec],
    log_w: &[f64],
    config: &AbcConfig,
    rng: &mut R,
) -> Result<CalibrationReport> {
    validate_multivariate(y, priors, log_w)?;
    if config.calibration_draws < 100 {
        return Err(Error::validation(format!(
            "calibration_draws must be at least 100, got {}",
            config.calibration_draws
        )));
    }
    let n: u64 = y.iter().sum();
    let compiled: Vec<Prior> = priors.iter().cloned().map(Prior::new).collect::<Result<_>>()?;
    let max_tries = config.calibration_draws as u64 * 1000;
    let mut groups = Vec::with_capacity(y.len());
    for c in 0..y.len() {
        let a = anchor_of(c);
        let mut dists = Vec::with_capacity(config.calibration_draws);
        let mut empty = 0u64;
        while dists.len() < config.calibration_draws {
            let (mc, ma) = (compiled[c].sample(rng), compiled[a].sample(rng));
            match pair_fnch(y, log_w, c, mc, ma) {
                Some(d) => dists.push(distance(y[c], d.sample(rng), n)?),
                None => {
                    empty += 1;
                    if empty > max_tries {
                        return Err(Error::validation(format!(
                            "group {}: prior predictive has empty support in {empty} draws",
                            c + 1
                        )));
                    }
                }
            }
        }
        dists.sort_by(f64::total_cmp);
        let degenerate = dists[0] == dists[dists.len() - 1];
        if degenerate {
            warn!("group {}: all calibration distances equal {}", c + 1, dists[0]);
        }
        groups.push(GroupCalibration {
            group: c + 1,
            epsilon: empirical_quantile(&dists, config.calibration_quantile),
            degenerate,
            empty_support_draws: empty,
        });
    }
    Ok(CalibrationReport {
        draws: config.calibration_draws,
        quantile: config.calibration_quantile,
        groups,
    })
}

/// Starting state: the first group at its prior median, every other group
/// where the observed pair odds ratio against the first group equals the
/// pair weight, `(y_c / (M_c - y_c)) / (y_1 / (M_1 - y_1)) = w_c / w_1`.
/// Starting at the prior median instead can leave a group so far from the
/// data that no synthetic draw lands within a small threshold.
pub fn initial_sizes(y: &[u64], priors: &[Prior], log_w: &[f64]) -> Vec<f64> {
    let first = initial_size(&priors[0], y[0]);
    let mut sizes = vec![first];
    for c in 1..y.len() {
        let p = &priors[c];
        let guess = if p.is_degenerate() || y[0] == 0 || first <= y[0] as f64 {
            initial_size(p, y[c])
        } else {
            let yc = y[c] as f64;
            let m = yc + yc * (first - y[0] as f64) * (log_w[0] - log_w[c]).exp() / y[0] as f64;
            let m = m.round().max(p.lower_bound()).min(p.upper_bound());
            if p.log_density(m).is_finite() {
                m
            } else {
                initial_size(p, y[c])
            }
        };
        sizes.push(guess);
    }
    sizes
}

/// Gibbs-ABC over group sizes with fixed weights. Draw columns match
/// [`crate::mcmc::run_multivariate_posterior`]: `M1..MC` then `N`.
///
/// A synthetic count is accepted when its distance is at most `eps_c`, so
/// `eps_c = 0` demands an exact match.
pub fn run_gibbs_abc(
    y: &[u64],
    priors: &[PriorSpec],
    log_w: &[f64],
    config: &AbcConfig,
) -> Result<(ChainDraws, Option<CalibrationReport>)> {
    config.validate()?;
    validate_multivariate(y, priors, log_w)?;
    let c_groups = y.len();
    let n: u64 = y.iter().sum();
    if n == 0 {
        return Err(Error::validation("observed total must be positive"));
    }
    let (epsilon, report) = if config.epsilon.is_empty() {
        let mut cal_rng = item_stream(config.seed, "abc-calibration");
        let report = calibrate_epsilon(y, priors, log_w, config, &mut cal_rng)?;
        (report.epsilon(), Some(report))
    } else if config.epsilon.len() == c_groups {
        (config.epsilon.clone(), None)
    } else {
        return Err(Error::validation(format!(
            "{} thresholds for {c_groups} groups",
            config.epsilon.len()
        )));
    };

    let compiled: Vec<Prior> = priors.iter().cloned().map(Prior::new).collect::<Result<_>>()?;
    let mut sizes = initial_sizes(y, &compiled, log_w);
    let mut rng = master_stream(config.seed);
    let mut attempts = vec![AttemptStats::default(); c_groups];
    let mut names: Vec<String> = (1..=c_groups).map(|i| format!("M{i}")).collect();
    names.push("N".into());
    let mut draws = Vec::with_capacity((config.iterations - config.burn_in) / config.thin + 1);

    let finish = |draws: Vec<Vec<f64>>, attempts: Vec<AttemptStats>| {
        let mut acceptance: Vec<f64> = attempts
            .iter()
            .map(|a| if a.total == 0 { 1.0 } else { a.steps as f64 / a.total as f64 })
            .collect();
        acceptance.push(f64::NAN);
        let mut notes = vec![format!("epsilon = {epsilon:?}")];
        if report.is_some() {
            notes.push("epsilon calibrated from the prior predictive".into());
        }
        ChainDraws {
            names: names.clone(),
            draws,
            burn_in_acceptance: vec![f64::NAN; acceptance.len()],
            final_step_sizes: vec![0.0; acceptance.len()],
            acceptance,
            seed: config.seed,
            burn_in: config.burn_in,
            thin: config.thin,
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            attempts,
            notes,
        }
    };

    for sweep in 0..config.iterations {
        for c in 0..c_groups {
            if compiled[c].is_degenerate() {
                continue;
            }
            let anchor_size = sizes[anchor_of(c)];
            let mut tries = 0u64;
            loop {
                if tries == config.max_attempts_per_step {
                    return Err(Error::AttemptsExceeded {
                        sweep,
                        group: c + 1,
                        attempts: tries,
                        partial: Box::new(finish(draws, attempts)),
                    });
                }
                tries += 1;
                let proposal = compiled[c].sample(&mut rng);
                let Some(d) = pair_fnch(y, log_w, c, proposal, anchor_size) else {
                    continue;
                };
                let x = d.sample(&mut rng);
                if distance(y[c], x, n)? <= epsilon[c] {
                    sizes[c] = proposal;
                    break;
                }
            }
            attempts[c].record(tries);
        }
        if sweep >= config.burn_in && (sweep - config.burn_in) % config.thin == 0 {
            let mut row = sizes.clone();
            row.push(sizes.iter().sum());
            draws.push(row);
        }
    }
    Ok((finish(draws, attempts), report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_and_distance_examples() {
        assert_eq!(summary_stat(0, 10).unwrap(), 0.0);
        assert_eq!(summary_stat(10, 10).unwrap(), 1.0);
        assert_eq!(summary_stat(3, 8).unwrap(), 0.375);
        assert!(summary_stat(1, 0).is_err());
        assert_eq!(distance(5, 5, 10).unwrap(), 0.0);
        assert_eq!(distance(0, 10, 10).unwrap(), 1.0);
        assert_eq!(distance(7, 3, 16).unwrap(), 0.25);
    }

    #[test]
    fn quantile_one_is_the_maximum() {
        let d = [0.1, 0.2, 0.3, 0.7];
        assert_eq!(empirical_quantile(&d, 1.0), 0.7);
        assert_eq!(empirical_quantile(&d, 0.02), 0.1);
        assert_eq!(empirical_quantile(&d, 0.5), 0.2);
    }

    #[test]
    fn degenerate_priors_matching_the_data_give_zero_epsilon() {
        // Both sizes fixed and every unit drawn: the synthetic count is forced.
        let y = [3, 4];
        let priors = [PriorSpec::Degenerate { value: 3.0 }, PriorSpec::Degenerate { value: 4.0 }];
        let cfg = AbcConfig { calibration_draws: 200, ..AbcConfig::default() };
        let mut rng = master_stream(1);
        let rep = calibrate_epsilon(&y, &priors, &[0.0, 0.0], &cfg, &mut rng).unwrap();
        assert_eq!(rep.epsilon(), vec![0.0, 0.0]);
        assert!(rep.groups.iter().all(|g| g.degenerate));
    }

    #[test]
    fn stalled_step_reports_partial_draws() {
        let y = [5, 5];
        let priors = [
            PriorSpec::DiscreteUniform { a: 6, b: 8 },
            PriorSpec::Degenerate { value: 6.0 },
        ];
        // Distance can never be negative, so no attempt is ever accepted
        // unless the synthetic count matches; cap it at a single attempt.
        let cfg = AbcConfig {
            epsilon: vec![0.0, 0.0],
            max_attempts_per_step: 1,
            iterations: 1000,
            burn_in: 0,
            ..AbcConfig::default()
        };
        match run_gibbs_abc(&y, &priors, &[0.0, 0.0], &cfg) {
            Err(Error::AttemptsExceeded { group, partial, .. }) => {
                assert_eq!(group, 1);
                assert_eq!(partial.names.len(), 3);
            }
            other => panic!("expected a stall, got {other:?}"),
        }
    }
}
