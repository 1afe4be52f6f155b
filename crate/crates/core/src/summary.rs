//! Posterior summaries, HPD intervals and coverage accounting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether draws come from an integer-valued parameter. Controls how the
/// median of an even-length sample is taken.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Integer,
    Continuous,
}

impl ValueKind {
    pub fn detect(draws: &[f64]) -> Self {
        if draws.iter().all(|d| d.fract() == 0.0) {
            ValueKind::Integer
        } else {
            ValueKind::Continuous
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub hpd_lo: f64,
    pub hpd_hi: f64,
    pub level: f64,
    pub n_draws: usize,
    /// Set when a coarse histogram of the draws shows more than one mode,
    /// in which case a single HPD window can be misleading.
    #[serde(default)]
    pub multimodal: bool,
}

impl PosteriorSummary {
    pub fn contains(&self, value: f64) -> bool {
        self.hpd_lo <= value && value <= self.hpd_hi
    }

    pub fn hpd_width(&self) -> f64 {
        self.hpd_hi - self.hpd_lo
    }
}

pub fn summarize(draws: &[f64], level: f64) -> Result<PosteriorSummary> {
    summarize_with(draws, level, ValueKind::detect(draws))
}

pub fn summarize_with(draws: &[f64], level: f64, kind: ValueKind) -> Result<PosteriorSummary> {
    if draws.len() < 2 {
        return Err(Error::validation(format!(
            "need at least 2 draws to summarize, got {}",
            draws.len()
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::validation(format!("level must lie in (0, 1), got {level}")));
    }
    if draws.iter().any(|d| d.is_nan()) {
        return Err(Error::validation("draws contain NaN"));
    }
    let n = draws.len();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;

    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        match kind {
            ValueKind::Integer => sorted[n / 2 - 1],
            ValueKind::Continuous => 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]),
        }
    };
    let (hpd_lo, hpd_hi) = hpd_sorted(&sorted, level);
    Ok(PosteriorSummary {
        mean,
        sd: var.sqrt(),
        median,
        hpd_lo,
        hpd_hi,
        level,
        n_draws: n,
        multimodal: looks_multimodal(&sorted),
    })
}

/// Number of draws an HPD window at `level` must contain.
pub fn hpd_count(n: usize, level: f64) -> usize {
    ((level * n as f64 - 1e-9).ceil() as usize).clamp(1, n)
}

/// Shortest window of consecutive sorted draws holding `hpd_count` draws;
/// ties go to the lowest starting index.
pub fn hpd_sorted(sorted: &[f64], level: f64) -> (f64, f64) {
    let k = hpd_count(sorted.len(), level);
    let mut best = 0;
    let mut best_width = f64::INFINITY;
    for i in 0..=sorted.len() - k {
        let width = sorted[i + k - 1] - sorted[i];
        if width < best_width {
            best_width = width;
            best = i;
        }
    }
    (sorted[best], sorted[best + k - 1])
}

fn looks_multimodal(sorted: &[f64]) -> bool {
    const BINS: usize = 12;
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    if sorted.len() < 200 || hi <= lo {
        return false;
    }
    let mut counts = [0usize; BINS];
    for &d in sorted {
        let b = (((d - lo) / (hi - lo)) * BINS as f64) as usize;
        counts[b.min(BINS - 1)] += 1;
    }
    // A second peak only counts if the valley separating it from the first
    // drops below 60% of the smaller peak.
    let mut peaks = 0;
    let mut peak = 0usize;
    let mut valley = usize::MAX;
    for &c in &counts {
        if peaks == 0 {
            if c > peak {
                peak = c;
            } else if c * 10 < peak * 6 {
                peaks = 1;
                valley = c;
            }
        } else if c < valley {
            valley = c;
        } else if valley * 10 < c * 6 && c * 20 >= sorted.len() {
            return true;
        }
    }
    false
}

/// Type-7 (linear interpolation) empirical quantile.
pub fn quantile(draws: &[f64], p: f64) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::validation("quantile of an empty sample"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::validation(format!("quantile level must lie in [0, 1], got {p}")));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * p;
    let i = h.floor() as usize;
    let frac = h - i as f64;
    Ok(if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    })
}

/// Sample skewness and excess kurtosis, used as a normality diagnostic
/// before moments are carried into a downstream prior.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeDiagnostics {
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

pub fn shape_diagnostics(draws: &[f64]) -> ShapeDiagnostics {
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for d in draws {
        let x = d - mean;
        m2 += x * x;
        m3 += x * x * x;
        m4 += x * x * x * x;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if m2 == 0.0 {
        return ShapeDiagnostics {
            skewness: 0.0,
            excess_kurtosis: 0.0,
        };
    }
    ShapeDiagnostics {
        skewness: m3 / m2.powf(1.5),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
    }
}

/// Effective sample size from autocorrelations truncated by Geyer's initial
/// positive sequence.
pub fn effective_sample_size(draws: &[f64]) -> f64 {
    let n = draws.len();
    if n < 4 {
        return n as f64;
    }
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n as f64;
    if var == 0.0 {
        return n as f64;
    }
    let rho = |lag: usize| {
        draws[..n - lag]
            .iter()
            .zip(&draws[lag..])
            .map(|(a, b)| (a - mean) * (b - mean))
            .sum::<f64>()
            / (n as f64 * var)
    };
    let mut tau = -1.0;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = rho(lag) + rho(lag + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    n as f64 / tau.max(1.0 / n as f64)
}

/// Hit count behind a coverage frequency.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageCount {
    pub hits: usize,
    pub replicates: usize,
}

impl CoverageCount {
    pub fn frequency(&self) -> f64 {
        if self.replicates == 0 {
            0.0
        } else {
            self.hits as f64 / self.replicates as f64
        }
    }
}

pub fn coverage_count(summaries: &[PosteriorSummary], truths: &[f64]) -> Result<CoverageCount> {
    if summaries.len() != truths.len() {
        return Err(Error::validation(format!(
            "{} summaries but {} true values",
            summaries.len(),
            truths.len()
        )));
    }
    let hits = summaries
        .iter()
        .zip(truths)
        .filter(|(s, t)| s.contains(**t))
        .count();
    Ok(CoverageCount {
        hits,
        replicates: summaries.len(),
    })
}

/// Fraction of replicates whose HPD interval contains the true value.
pub fn coverage(summaries: &[PosteriorSummary], truths: &[f64]) -> Result<f64> {
    Ok(coverage_count(summaries, truths)?.frequency())
}
