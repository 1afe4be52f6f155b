//! Prior families: truncated Poisson and discrete uniform for group sizes,
//! a normal law on the log odds ratio, point masses, and the discretized
//! truncated normal used when a prior is elicited from upstream posterior
//! moments.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StatNormal};

use crate::error::{Error, Result};
use crate::math::{ln_factorial, log_add_exp, log_sum_exp};

/// Largest number of support points a tabulated prior may carry.
const MAX_TABLE_LEN: i64 = 50_000_000;

/// Serializable description of a prior, tagged by `"family"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PriorSpec {
    /// Poisson with the given mean, left-truncated at `lower` (inclusive).
    TruncatedPoisson { mean: f64, lower: u64 },
    /// Uniform on the integers `a..=b`.
    DiscreteUniform { a: i64, b: i64 },
    /// Normal law on the log odds ratio with mean `mu` and variance `tau2`.
    LogNormalOdds { mu: f64, tau2: f64 },
    /// Point mass.
    Degenerate { value: f64 },
    /// Normal density evaluated at the integers `lower..=upper`, renormalized.
    DiscretizedTruncatedNormal {
        mean: f64,
        sd: f64,
        lower: i64,
        upper: i64,
    },
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PriorSpec::TruncatedPoisson { mean, .. } => {
                if !(mean > 0.0 && mean.is_finite()) {
                    return Err(Error::validation(format!(
                        "poisson mean must be positive, got {mean}"
                    )));
                }
            }
            PriorSpec::DiscreteUniform { a, b } => {
                if a > b {
                    return Err(Error::validation(format!(
                        "discrete uniform bounds inverted: a = {a} > b = {b}"
                    )));
                }
            }
            PriorSpec::LogNormalOdds { mu, tau2 } => {
                if !mu.is_finite() || !(tau2 > 0.0 && tau2.is_finite()) {
                    return Err(Error::validation(format!(
                        "log-odds prior needs finite mu and positive tau2, got ({mu}, {tau2})"
                    )));
                }
            }
            PriorSpec::Degenerate { value } => {
                if !value.is_finite() {
                    return Err(Error::validation("degenerate prior value must be finite"));
                }
            }
            PriorSpec::DiscretizedTruncatedNormal {
                mean,
                sd,
                lower,
                upper,
            } => {
                if !mean.is_finite() || !(sd > 0.0 && sd.is_finite()) {
                    return Err(Error::validation(format!(
                        "truncated normal needs finite mean and positive sd, got ({mean}, {sd})"
                    )));
                }
                if lower > upper {
                    return Err(Error::validation(format!(
                        "truncated normal bounds inverted: {lower} > {upper}"
                    )));
                }
                if upper - lower >= MAX_TABLE_LEN {
                    return Err(Error::validation("truncated normal support too wide"));
                }
                let gap = if mean < lower as f64 {
                    lower as f64 - mean
                } else if mean > upper as f64 {
                    mean - upper as f64
                } else {
                    0.0
                };
                let z = gap / sd;
                if 0.5 * z * z > 700.0 {
                    return Err(Error::validation(format!(
                        "mean {mean} lies {z:.1} sd outside [{lower}, {upper}]; renormalized mass underflows"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn is_discrete(&self) -> bool {
        !matches!(
            self,
            PriorSpec::LogNormalOdds { .. } | PriorSpec::Degenerate { .. }
        )
    }
}

/// Posterior moments carried forward into a downstream prior.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElicitedMoments {
    pub mean: f64,
    pub sd: f64,
}

impl ElicitedMoments {
    pub fn new(mean: f64, sd: f64) -> Result<Self> {
        if !mean.is_finite() || !(sd > 0.0 && sd.is_finite()) {
            return Err(Error::validation(format!(
                "elicited moments need finite mean and positive sd, got ({mean}, {sd})"
            )));
        }
        Ok(Self { mean, sd })
    }
}

/// Discretized truncated normal on `lower..=upper` with the given moments.
pub fn elicit_from_moments(moments: ElicitedMoments, lower: i64, upper: i64) -> Result<PriorSpec> {
    let moments = ElicitedMoments::new(moments.mean, moments.sd)?;
    if lower >= upper {
        return Err(Error::validation(format!(
            "elicitation bounds must satisfy lower < upper, got [{lower}, {upper}]"
        )));
    }
    let spec = PriorSpec::DiscretizedTruncatedNormal {
        mean: moments.mean,
        sd: moments.sd,
        lower,
        upper,
    };
    spec.validate()?;
    Ok(spec)
}

#[derive(Clone, Debug)]
enum Compiled {
    Poisson { ln_mean: f64, log_tail: f64 },
    Uniform { log_mass: f64 },
    Normal { sd: f64 },
    Point,
    Table { log_mass: Vec<f64>, cdf: Vec<f64> },
}

/// A validated prior with any tables it needs precomputed.
#[derive(Clone, Debug)]
pub struct Prior {
    spec: PriorSpec,
    compiled: Compiled,
}

fn ln_poisson(k: u64, mean: f64, ln_mean: f64) -> f64 {
    k as f64 * ln_mean - mean - ln_factorial(k)
}

/// `ln P(X >= lower)` for `X ~ Poisson(mean)`.
fn poisson_log_tail(mean: f64, lower: u64) -> f64 {
    if lower == 0 {
        return 0.0;
    }
    let ln_mean = mean.ln();
    if (lower as f64) <= mean {
        let below: f64 = (0..lower).map(|k| ln_poisson(k, mean, ln_mean).exp()).sum();
        (-below.min(1.0)).ln_1p()
    } else {
        let mut acc = f64::NEG_INFINITY;
        let mut k = lower;
        loop {
            let term = ln_poisson(k, mean, ln_mean);
            acc = log_add_exp(acc, term);
            if term < acc - 46.0 {
                break;
            }
            k += 1;
        }
        acc
    }
}

fn normal_log_density(x: f64, mu: f64, sd: f64) -> f64 {
    let z = (x - mu) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

fn as_integer(x: f64) -> Option<i64> {
    (x.is_finite() && x.fract() == 0.0).then_some(x as i64)
}

impl Prior {
    pub fn new(spec: PriorSpec) -> Result<Self> {
        spec.validate()?;
        let compiled = match spec {
            PriorSpec::TruncatedPoisson { mean, lower } => {
                let log_tail = poisson_log_tail(mean, lower);
                if !log_tail.is_finite() {
                    return Err(Error::validation(format!(
                        "poisson({mean}) has no representable mass at or above {lower}"
                    )));
                }
                Compiled::Poisson {
                    ln_mean: mean.ln(),
                    log_tail,
                }
            }
            PriorSpec::DiscreteUniform { a, b } => Compiled::Uniform {
                log_mass: -(((b - a) as f64) + 1.0).ln(),
            },
            PriorSpec::LogNormalOdds { tau2, .. } => Compiled::Normal { sd: tau2.sqrt() },
            PriorSpec::Degenerate { .. } => Compiled::Point,
            PriorSpec::DiscretizedTruncatedNormal {
                mean,
                sd,
                lower,
                upper,
            } => {
                let raw: Vec<f64> = (lower..=upper)
                    .map(|k| {
                        let z = (k as f64 - mean) / sd;
                        -0.5 * z * z
                    })
                    .collect();
                let norm = log_sum_exp(&raw);
                let log_mass: Vec<f64> = raw.iter().map(|v| v - norm).collect();
                let mut acc = 0.0;
                let cdf = log_mass
                    .iter()
                    .map(|lm| {
                        acc += lm.exp();
                        acc
                    })
                    .collect();
                Compiled::Table { log_mass, cdf }
            }
        };
        Ok(Self { spec, compiled })
    }

    pub fn spec(&self) -> &PriorSpec {
        &self.spec
    }

    pub fn is_discrete(&self) -> bool {
        self.spec.is_discrete()
    }

    pub fn is_degenerate(&self) -> bool {
        match self.spec {
            PriorSpec::Degenerate { .. } => true,
            PriorSpec::DiscreteUniform { a, b } => a == b,
            PriorSpec::DiscretizedTruncatedNormal { lower, upper, .. } => lower == upper,
            _ => false,
        }
    }

    /// Smallest value in the support (`-inf` for the normal family).
    pub fn lower_bound(&self) -> f64 {
        match self.spec {
            PriorSpec::TruncatedPoisson { lower, .. } => lower as f64,
            PriorSpec::DiscreteUniform { a, .. } => a as f64,
            PriorSpec::LogNormalOdds { .. } => f64::NEG_INFINITY,
            PriorSpec::Degenerate { value } => value,
            PriorSpec::DiscretizedTruncatedNormal { lower, .. } => lower as f64,
        }
    }

    /// Largest value in the support (`+inf` for Poisson and normal).
    pub fn upper_bound(&self) -> f64 {
        match self.spec {
            PriorSpec::TruncatedPoisson { .. } | PriorSpec::LogNormalOdds { .. } => f64::INFINITY,
            PriorSpec::DiscreteUniform { b, .. } => b as f64,
            PriorSpec::Degenerate { value } => value,
            PriorSpec::DiscretizedTruncatedNormal { upper, .. } => upper as f64,
        }
    }

    /// Log-mass for discrete families, log-density for the normal family,
    /// `0` at a point mass. `-inf` outside the support.
    pub fn log_density(&self, x: f64) -> f64 {
        match (&self.spec, &self.compiled) {
            (&PriorSpec::TruncatedPoisson { mean, lower }, &Compiled::Poisson { ln_mean, log_tail }) => {
                match as_integer(x) {
                    Some(k) if k >= lower as i64 => ln_poisson(k as u64, mean, ln_mean) - log_tail,
                    _ => f64::NEG_INFINITY,
                }
            }
            (&PriorSpec::DiscreteUniform { a, b }, &Compiled::Uniform { log_mass }) => {
                match as_integer(x) {
                    Some(k) if k >= a && k <= b => log_mass,
                    _ => f64::NEG_INFINITY,
                }
            }
            (&PriorSpec::LogNormalOdds { mu, .. }, &Compiled::Normal { sd }) => {
                if x.is_finite() {
                    normal_log_density(x, mu, sd)
                } else {
                    f64::NEG_INFINITY
                }
            }
            (&PriorSpec::Degenerate { value }, _) => {
                if x == value {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            (
                &PriorSpec::DiscretizedTruncatedNormal { lower, upper, .. },
                Compiled::Table { log_mass, .. },
            ) => match as_integer(x) {
                Some(k) if k >= lower && k <= upper => log_mass[(k - lower) as usize],
                _ => f64::NEG_INFINITY,
            },
            _ => unreachable!("compiled prior out of sync with its spec"),
        }
    }

    /// Unnormalized log-mass ignoring any upper bound, for discrete families
    /// whose upper bound is re-imposed by the caller. Bounded above by
    /// [`Prior::log_kernel_max`].
    pub fn log_kernel(&self, k: i64) -> f64 {
        match self.spec {
            PriorSpec::TruncatedPoisson { mean, lower } => {
                if k < lower as i64 {
                    f64::NEG_INFINITY
                } else {
                    ln_poisson(k as u64, mean, mean.ln())
                }
            }
            PriorSpec::DiscreteUniform { a, .. } => {
                if k < a {
                    f64::NEG_INFINITY
                } else {
                    0.0
                }
            }
            PriorSpec::DiscretizedTruncatedNormal {
                mean, sd, lower, ..
            } => {
                if k < lower {
                    f64::NEG_INFINITY
                } else {
                    let z = (k as f64 - mean) / sd;
                    -0.5 * z * z
                }
            }
            PriorSpec::Degenerate { value } => {
                if k as f64 == value {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            PriorSpec::LogNormalOdds { mu, tau2 } => {
                let z = (k as f64 - mu) / tau2.sqrt();
                -0.5 * z * z
            }
        }
    }

    pub fn log_kernel_max(&self) -> f64 {
        match self.spec {
            PriorSpec::TruncatedPoisson { mean, lower } => {
                let peak = (mean.floor() as u64).max(lower);
                ln_poisson(peak, mean, mean.ln())
            }
            _ => 0.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match (&self.spec, &self.compiled) {
            (&PriorSpec::TruncatedPoisson { mean, lower }, &Compiled::Poisson { ln_mean, log_tail }) => {
                if log_tail.exp() >= 0.01 {
                    let dist = Poisson::new(mean).expect("validated poisson mean");
                    loop {
                        let k: f64 = dist.sample(rng);
                        if k >= lower as f64 {
                            return k;
                        }
                    }
                } else {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut k = lower;
                    loop {
                        let p = (ln_poisson(k, mean, ln_mean) - log_tail).exp();
                        acc += p;
                        if u < acc || p < 1e-300 {
                            return k as f64;
                        }
                        k += 1;
                    }
                }
            }
            (&PriorSpec::DiscreteUniform { a, b }, _) => rng.random_range(a..=b) as f64,
            (&PriorSpec::LogNormalOdds { mu, .. }, &Compiled::Normal { sd }) => {
                Normal::new(mu, sd).expect("validated normal").sample(rng)
            }
            (&PriorSpec::Degenerate { value }, _) => value,
            (&PriorSpec::DiscretizedTruncatedNormal { lower, .. }, Compiled::Table { cdf, .. }) => {
                let u: f64 = rng.random::<f64>() * cdf[cdf.len() - 1];
                let idx = cdf.partition_point(|c| *c <= u).min(cdf.len() - 1);
                (lower + idx as i64) as f64
            }
            _ => unreachable!("compiled prior out of sync with its spec"),
        }
    }

    pub fn mean(&self) -> f64 {
        match (&self.spec, &self.compiled) {
            (&PriorSpec::TruncatedPoisson { mean, lower }, &Compiled::Poisson { log_tail, .. }) => {
                if lower == 0 {
                    mean
                } else {
                    mean * (poisson_log_tail(mean, lower - 1) - log_tail).exp()
                }
            }
            (&PriorSpec::DiscreteUniform { a, b }, _) => 0.5 * (a as f64 + b as f64),
            (&PriorSpec::LogNormalOdds { mu, .. }, _) => mu,
            (&PriorSpec::Degenerate { value }, _) => value,
            (&PriorSpec::DiscretizedTruncatedNormal { lower, .. }, Compiled::Table { log_mass, .. }) => {
                log_mass
                    .iter()
                    .enumerate()
                    .map(|(i, lm)| (lower + i as i64) as f64 * lm.exp())
                    .sum()
            }
            _ => unreachable!("compiled prior out of sync with its spec"),
        }
    }

    pub fn sd(&self) -> f64 {
        match (&self.spec, &self.compiled) {
            (&PriorSpec::TruncatedPoisson { mean, lower }, &Compiled::Poisson { log_tail, .. }) => {
                // E[X(X-1)] = mean^2 P(X >= lower - 2) / P(X >= lower)
                let tail = |l: u64| {
                    if l == 0 {
                        0.0
                    } else {
                        poisson_log_tail(mean, l)
                    }
                };
                let m1 = mean * (tail(lower.saturating_sub(1)) - log_tail).exp();
                let f2 = mean * mean * (tail(lower.saturating_sub(2)) - log_tail).exp();
                (f2 + m1 - m1 * m1).max(0.0).sqrt()
            }
            (&PriorSpec::DiscreteUniform { a, b }, _) => {
                let k = (b - a) as f64 + 1.0;
                ((k * k - 1.0) / 12.0).sqrt()
            }
            (PriorSpec::LogNormalOdds { .. }, &Compiled::Normal { sd }) => sd,
            (PriorSpec::Degenerate { .. }, _) => 0.0,
            (&PriorSpec::DiscretizedTruncatedNormal { lower, .. }, Compiled::Table { log_mass, .. }) => {
                let mean = self.mean();
                log_mass
                    .iter()
                    .enumerate()
                    .map(|(i, lm)| {
                        let d = (lower + i as i64) as f64 - mean;
                        d * d * lm.exp()
                    })
                    .sum::<f64>()
                    .sqrt()
            }
            _ => unreachable!("compiled prior out of sync with its spec"),
        }
    }

    /// Smallest support value whose cumulative probability reaches `p`
    /// (discrete families); the usual quantile for the normal family.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::validation(format!("quantile level must lie in (0, 1), got {p}")));
        }
        Ok(match (&self.spec, &self.compiled) {
            (&PriorSpec::TruncatedPoisson { mean, lower }, &Compiled::Poisson { ln_mean, log_tail }) => {
                let mut acc = 0.0;
                let mut k = lower;
                loop {
                    acc += (ln_poisson(k, mean, ln_mean) - log_tail).exp();
                    if acc >= p {
                        break k as f64;
                    }
                    k += 1;
                }
            }
            (&PriorSpec::DiscreteUniform { a, b }, _) => {
                let count = (b - a + 1) as f64;
                let idx = ((p * count).ceil() as i64 - 1).clamp(0, b - a);
                (a + idx) as f64
            }
            (&PriorSpec::LogNormalOdds { mu, .. }, &Compiled::Normal { sd }) => StatNormal::new(mu, sd)
                .map_err(|e| Error::validation(e.to_string()))?
                .inverse_cdf(p),
            (&PriorSpec::Degenerate { value }, _) => value,
            (&PriorSpec::DiscretizedTruncatedNormal { lower, .. }, Compiled::Table { cdf, .. }) => {
                let idx = cdf.partition_point(|c| *c < p).min(cdf.len() - 1);
                (lower + idx as i64) as f64
            }
            _ => unreachable!("compiled prior out of sync with its spec"),
        })
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5).expect("0.5 is a valid level")
    }
}

/// Free-function form of [`Prior::log_density`].
pub fn log_density(spec: &PriorSpec, x: f64) -> Result<f64> {
    Ok(Prior::new(spec.clone())?.log_density(x))
}
