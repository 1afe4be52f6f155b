//! Fisher's noncentral hypergeometric distribution.
//!
//! The univariate law is the distribution of `Y1` given `Y1 + Y2 = n` for two
//! independent binomials `Y1 ~ Bin(m1, z1)`, `Y2 ~ Bin(m2, z2)`; it depends on
//! the capture probabilities only through the log odds ratio
//! `log_w = logit(z1) - logit(z2)`.
//!
//! Univariate masses are evaluated relative to the mode: starting from the
//! mode with unit mass, neighbouring terms follow from
//!
//! ```text
//! p(y + 1) / p(y) = w (m1 - y)(n - y) / ((y + 1)(m2 - n + y + 1))
//! ```
//!
//! so no term ever exceeds one and the normalizer never overflows, whatever
//! the odds. The multivariate pmf is only available as an enumeration oracle
//! for small instances; samplers work through pair conditionals instead.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, Discrete};

use crate::error::{Error, Result};
use crate::math::{ln_binomial, log_sum_exp};

/// Supports up to this size are tabulated in full before sampling.
pub const FULL_TABLE_MAX: u64 = 4096;

/// Relative mass below which tail terms are dropped when sampling from a
/// support larger than [`FULL_TABLE_MAX`].
pub const SAMPLER_TAIL_CUTOFF: f64 = 1e-15;

/// Relative mass below which terms cannot move an f64 normalizer.
const PMF_TAIL_CUTOFF: f64 = 1e-20;

/// Default cap on `|Z|` for the multivariate enumeration oracle.
pub const DEFAULT_ORACLE_CAP: u128 = 10_000_000;

/// Inclusive range of attainable values of `Y1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnivariateSupport {
    pub lo: u64,
    pub hi: u64,
}

impl UnivariateSupport {
    pub fn len(&self) -> u64 {
        self.hi - self.lo + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, y: u64) -> bool {
        y >= self.lo && y <= self.hi
    }

    pub fn iter(&self) -> impl Iterator<Item = u64> {
        self.lo..=self.hi
    }
}

/// Univariate FNCH law of `Y1` given `Y1 + Y2 = n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnivariateFnch {
    m1: u64,
    m2: u64,
    n: u64,
    log_w: f64,
}

impl UnivariateFnch {
    pub fn new(m1: u64, m2: u64, n: u64, log_w: f64) -> Result<Self> {
        if !log_w.is_finite() {
            return Err(Error::validation(format!(
                "log odds ratio must be finite, got {log_w}"
            )));
        }
        let total = m1.checked_add(m2).ok_or_else(|| {
            Error::validation("group sizes overflow when summed".to_string())
        })?;
        if n > total {
            return Err(Error::EmptySupport { n, total });
        }
        Ok(Self { m1, m2, n, log_w })
    }

    /// Constructor for untrusted signed input (CLI, bindings).
    pub fn from_signed(m1: i64, m2: i64, n: i64, log_w: f64) -> Result<Self> {
        for (name, v) in [("m1", m1), ("m2", m2), ("n", n)] {
            if v < 0 {
                return Err(Error::validation(format!("{name} must be non-negative, got {v}")));
            }
        }
        Self::new(m1 as u64, m2 as u64, n as u64, log_w)
    }

    /// Parameterization by population total `N = m1 + m2`.
    pub fn with_total(m1: u64, total: u64, n: u64, log_w: f64) -> Result<Self> {
        if m1 > total {
            return Err(Error::validation(format!(
                "group size {m1} exceeds population total {total}"
            )));
        }
        Self::new(m1, total - m1, n, log_w)
    }

    pub fn m1(&self) -> u64 {
        self.m1
    }

    pub fn m2(&self) -> u64 {
        self.m2
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn log_w(&self) -> f64 {
        self.log_w
    }

    pub fn support(&self) -> UnivariateSupport {
        UnivariateSupport {
            lo: self.n.saturating_sub(self.m2),
            hi: self.n.min(self.m1),
        }
    }

    /// The same law seen from the second group: `n - Y1` with odds `1 / w`.
    pub fn swapped(&self) -> Self {
        Self {
            m1: self.m2,
            m2: self.m1,
            n: self.n,
            log_w: -self.log_w,
        }
    }

    /// `p(y + 1) / p(y)`, valid for `lo <= y < hi`.
    fn ratio(&self, w: f64, y: u64) -> f64 {
        let num = (self.m1 - y) as f64 * (self.n - y) as f64;
        let den = (y + 1) as f64 * (self.m2 + y + 1 - self.n) as f64;
        w * num / den
    }

    fn log_unnormalized(&self, y: u64) -> f64 {
        ln_binomial(self.m1, y) + ln_binomial(self.m2, self.n - y) + y as f64 * self.log_w
    }

    /// A most probable value.
    pub fn mode(&self) -> u64 {
        let sup = self.support();
        if sup.lo == sup.hi {
            return sup.lo;
        }
        if self.log_w > 700.0 {
            return self.walk_to_mode(sup.hi);
        }
        if self.log_w < -700.0 {
            return self.walk_to_mode(sup.lo);
        }
        let w = self.log_w.exp();
        let (m1, m2, n) = (self.m1 as f64, self.m2 as f64, self.n as f64);
        // Continuous solution of p(y + 1) = p(y):
        // (w - 1) y^2 - (w (m1 + n) + m2 - n + 2) y + w m1 n - (m2 - n + 1) = 0
        let a = w - 1.0;
        let b = w * (m1 + n) + m2 - n + 2.0;
        let c = w * m1 * n - (m2 - n + 1.0);
        let guess = if a.abs() < 1e-12 {
            if b != 0.0 {
                c / b
            } else {
                sup.lo as f64
            }
        } else {
            let disc = b * b - 4.0 * a * c;
            if disc < 0.0 {
                sup.lo as f64
            } else {
                let root = disc.sqrt();
                let r1 = (b - root) / (2.0 * a);
                let r2 = (b + root) / (2.0 * a);
                let (lo, hi) = (sup.lo as f64 - 1.0, sup.hi as f64 + 1.0);
                let dist = |r: f64| {
                    if r < lo {
                        lo - r
                    } else if r > hi {
                        r - hi
                    } else {
                        0.0
                    }
                };
                if dist(r1) <= dist(r2) {
                    r1
                } else {
                    r2
                }
            }
        };
        let start = if guess.is_finite() {
            guess.floor().clamp(sup.lo as f64, sup.hi as f64) as u64
        } else {
            sup.lo
        };
        self.walk_to_mode(start)
    }

    fn walk_to_mode(&self, start: u64) -> u64 {
        let sup = self.support();
        let w = self.log_w.exp();
        let mut y = start;
        while y < sup.hi && self.ratio(w, y) > 1.0 {
            y += 1;
        }
        while y > sup.lo && self.ratio(w, y - 1) < 1.0 {
            y -= 1;
        }
        y
    }

    /// Walks outward from the mode, calling `visit(y, t)` with masses scaled
    /// so that the mode has mass one. A direction stops once a term falls
    /// below `cutoff` times the running sum or underflows to zero. Returns the
    /// mode and the sum of visited terms.
    fn scan<F: FnMut(u64, f64)>(&self, cutoff: f64, mut visit: F) -> (u64, f64) {
        let sup = self.support();
        let mode = self.mode();
        let w = self.log_w.exp();
        visit(mode, 1.0);
        let mut sum = 1.0;

        let mut t = 1.0;
        let mut y = mode;
        while y < sup.hi {
            t *= self.ratio(w, y);
            y += 1;
            if t == 0.0 {
                break;
            }
            visit(y, t);
            sum += t;
            if t < cutoff * sum {
                break;
            }
        }

        let mut t = 1.0;
        let mut y = mode;
        while y > sup.lo {
            t /= self.ratio(w, y - 1);
            y -= 1;
            if t == 0.0 || !t.is_finite() {
                break;
            }
            visit(y, t);
            sum += t;
            if t < cutoff * sum {
                break;
            }
        }
        (mode, sum)
    }

    /// Log-probability of `Y1 = y`; `-inf` outside the support.
    pub fn log_pmf(&self, y: i64) -> f64 {
        let sup = self.support();
        if y < 0 || !sup.contains(y as u64) {
            return f64::NEG_INFINITY;
        }
        let y = y as u64;
        let mut at_y = None;
        let (mode, sum) = self.scan(PMF_TAIL_CUTOFF, |k, t| {
            if k == y {
                at_y = Some(t);
            }
        });
        match at_y {
            Some(t) => t.ln() - sum.ln(),
            None => self.log_unnormalized(y) - self.log_unnormalized(mode) - sum.ln(),
        }
    }

    /// Probability of `Y1 = y`; zero outside the support.
    pub fn pmf(&self, y: i64) -> f64 {
        let sup = self.support();
        if y < 0 || !sup.contains(y as u64) {
            return 0.0;
        }
        let y = y as u64;
        let mut at_y = None;
        let (mode, sum) = self.scan(PMF_TAIL_CUTOFF, |k, t| {
            if k == y {
                at_y = Some(t);
            }
        });
        match at_y {
            Some(t) => t / sum,
            None => (self.log_unnormalized(y) - self.log_unnormalized(mode) - sum.ln()).exp(),
        }
    }

    /// Normalized probabilities over the whole support, indexed from
    /// `support().lo`.
    pub fn pmf_table(&self) -> Vec<f64> {
        let sup = self.support();
        let mut table = vec![0.0; sup.len() as usize];
        let (_, sum) = self.scan(0.0, |k, t| table[(k - sup.lo) as usize] = t);
        for p in &mut table {
            *p /= sum;
        }
        table
    }

    /// Scaled masses on a contiguous window around the mode.
    fn window(&self, cutoff: f64) -> (u64, Vec<f64>, f64) {
        let mut up = Vec::new();
        let mut down = Vec::new();
        let mut mode = 0;
        let (m, sum) = self.scan(cutoff, |k, t| {
            if up.is_empty() {
                mode = k;
                up.push(t);
            } else if k > mode {
                up.push(t);
            } else {
                down.push(t);
            }
        });
        debug_assert_eq!(m, mode);
        let start = mode - down.len() as u64;
        down.reverse();
        down.extend(up);
        (start, down, sum)
    }

    /// Draws one value by inverting the cumulative distribution.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let sup = self.support();
        if sup.lo == sup.hi {
            return sup.lo;
        }
        let cutoff = if sup.len() <= FULL_TABLE_MAX {
            0.0
        } else {
            SAMPLER_TAIL_CUTOFF
        };
        let (start, terms, sum) = self.window(cutoff);
        let u = rng.random::<f64>() * sum;
        let mut acc = 0.0;
        for (i, t) in terms.iter().enumerate() {
            acc += t;
            if u < acc {
                return start + i as u64;
            }
        }
        start + terms.len() as u64 - 1
    }
}

/// `ln P(Y1 = y)` for the univariate FNCH with sizes `(m1, m2)`, draw total
/// `n` and log odds ratio `log_w`.
pub fn log_pmf_univariate(m1: i64, m2: i64, n: i64, log_w: f64, y: i64) -> Result<f64> {
    Ok(UnivariateFnch::from_signed(m1, m2, n, log_w)?.log_pmf(y))
}

/// One draw from the univariate FNCH.
pub fn sample_univariate<R: Rng + ?Sized>(
    rng: &mut R,
    m1: i64,
    m2: i64,
    n: i64,
    log_w: f64,
) -> Result<u64> {
    Ok(UnivariateFnch::from_signed(m1, m2, n, log_w)?.sample(rng))
}

/// Full parameter tuple of a multivariate FNCH.
///
/// Log-weights are stored shifted so that the first entry is zero; weights are
/// only identified up to a common positive factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FnchParams {
    m: Vec<u64>,
    n: u64,
    log_w: Vec<f64>,
}

impl FnchParams {
    pub fn new(m: Vec<u64>, n: u64, log_w: Vec<f64>) -> Result<Self> {
        if m.len() < 2 {
            return Err(Error::validation(format!(
                "need at least two groups, got {}",
                m.len()
            )));
        }
        if log_w.len() != m.len() {
            return Err(Error::validation(format!(
                "{} log-weights for {} groups",
                log_w.len(),
                m.len()
            )));
        }
        if let Some(bad) = log_w.iter().find(|v| !v.is_finite()) {
            return Err(Error::validation(format!("log-weight {bad} is not finite")));
        }
        let total = m
            .iter()
            .try_fold(0u64, |acc, &v| acc.checked_add(v))
            .ok_or_else(|| Error::validation("group sizes overflow when summed"))?;
        if n > total {
            return Err(Error::EmptySupport { n, total });
        }
        let shift = log_w[0];
        let log_w = log_w.into_iter().map(|v| v - shift).collect();
        Ok(Self { m, n, log_w })
    }

    /// Build from positive weights rather than log-weights.
    pub fn from_weights(m: Vec<u64>, n: u64, w: &[f64]) -> Result<Self> {
        if let Some(bad) = w.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::validation(format!("weight {bad} must be positive")));
        }
        Self::new(m, n, w.iter().map(|v| v.ln()).collect())
    }

    pub fn groups(&self) -> usize {
        self.m.len()
    }

    pub fn m(&self) -> &[u64] {
        &self.m
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn log_w(&self) -> &[f64] {
        &self.log_w
    }

    pub fn total(&self) -> u64 {
        self.m.iter().sum()
    }

    /// Number of compositions in the support set, saturating at `u128::MAX`.
    pub fn support_size(&self) -> u128 {
        let n = self.n as usize;
        let mut ways = vec![0u128; n + 1];
        ways[0] = 1;
        for &mc in &self.m {
            let mc = mc.min(self.n) as usize;
            let mut prefix = vec![0u128; n + 2];
            for s in 0..=n {
                prefix[s + 1] = prefix[s].saturating_add(ways[s]);
            }
            for s in 0..=n {
                let lo = s.saturating_sub(mc);
                ways[s] = prefix[s + 1].saturating_sub(prefix[lo]);
            }
        }
        ways[n]
    }

    fn check_counts(&self, y: &[u64]) -> Result<bool> {
        if y.len() != self.m.len() {
            return Err(Error::validation(format!(
                "{} counts for {} groups",
                y.len(),
                self.m.len()
            )));
        }
        let in_bounds = y.iter().zip(&self.m).all(|(yc, mc)| yc <= mc);
        Ok(in_bounds && y.iter().sum::<u64>() == self.n)
    }

    /// Unnormalized log-mass `sum_c ln C(m_c, y_c) + y_c ln w_c`.
    pub fn log_unnormalized(&self, y: &[u64]) -> f64 {
        y.iter()
            .zip(&self.m)
            .zip(&self.log_w)
            .map(|((&yc, &mc), &lw)| ln_binomial(mc, yc) + yc as f64 * lw)
            .sum()
    }

    /// Calls `visit` on every composition in the support set, in
    /// lexicographic order. Refuses when the set is larger than `cap`.
    pub fn enumerate_support<F: FnMut(&[u64])>(&self, cap: u128, mut visit: F) -> Result<()> {
        let size = self.support_size();
        if size > cap {
            return Err(Error::OracleTooLarge { size, cap });
        }
        let c = self.m.len();
        // Largest total the groups after index i can still absorb.
        let mut tail_max = vec![0u64; c + 1];
        for i in (0..c).rev() {
            tail_max[i] = tail_max[i + 1] + self.m[i];
        }
        let mut z = vec![0u64; c];
        fn rec<F: FnMut(&[u64])>(
            i: usize,
            remaining: u64,
            m: &[u64],
            tail_max: &[u64],
            z: &mut Vec<u64>,
            visit: &mut F,
        ) {
            if i == m.len() - 1 {
                if remaining <= m[i] {
                    z[i] = remaining;
                    visit(z);
                }
                return;
            }
            let lo = remaining.saturating_sub(tail_max[i + 1]);
            let hi = remaining.min(m[i]);
            for v in lo..=hi {
                z[i] = v;
                rec(i + 1, remaining - v, m, tail_max, z, visit);
            }
        }
        rec(0, self.n, &self.m, &tail_max, &mut z, &mut visit);
        Ok(())
    }

    /// Log of the normalizing sum over the support set (oracle).
    pub fn log_normalizer_oracle(&self, cap: u128) -> Result<f64> {
        let mut terms = Vec::new();
        self.enumerate_support(cap, |z| terms.push(self.log_unnormalized(z)))?;
        Ok(log_sum_exp(&terms))
    }

    /// Exact multivariate log-pmf by full enumeration of the support set.
    pub fn log_pmf_oracle(&self, y: &[u64], cap: u128) -> Result<f64> {
        if !self.check_counts(y)? {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(self.log_unnormalized(y) - self.log_normalizer_oracle(cap)?)
    }

    /// Univariate parameters of the pair `(a, b)` given every other count.
    pub fn pair(&self, y: &[u64], a: usize, b: usize) -> Result<PairParams> {
        if a == b {
            return Err(Error::validation(format!("pair indices must differ, got {a} twice")));
        }
        let c = self.m.len();
        if a >= c || b >= c {
            return Err(Error::validation(format!(
                "pair ({a}, {b}) out of range for {c} groups"
            )));
        }
        if y.len() != c {
            return Err(Error::validation(format!("{} counts for {c} groups", y.len())));
        }
        Ok(PairParams {
            m_a: self.m[a],
            m_b: self.m[b],
            n_pair: y[a] + y[b],
            log_w_pair: self.log_w[a] - self.log_w[b],
        })
    }
}

/// Multivariate log-pmf through the enumeration oracle with the default cap.
pub fn log_pmf_multivariate(params: &FnchParams, y: &[u64]) -> Result<f64> {
    params.log_pmf_oracle(y, DEFAULT_ORACLE_CAP)
}

/// Univariate FNCH parameters for one pair of groups with all other counts
/// held fixed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairParams {
    pub m_a: u64,
    pub m_b: u64,
    pub n_pair: u64,
    pub log_w_pair: f64,
}

impl PairParams {
    pub fn distribution(&self) -> Result<UnivariateFnch> {
        UnivariateFnch::new(self.m_a, self.m_b, self.n_pair, self.log_w_pair)
    }
}

pub fn conditional_pair_params(
    params: &FnchParams,
    y: &[u64],
    a: usize,
    b: usize,
) -> Result<PairParams> {
    params.pair(y, a, b)
}

/// One group's binomial capture model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinomialCaptureModel {
    pub m: u64,
    pub zeta: f64,
}

impl BinomialCaptureModel {
    pub fn new(m: u64, zeta: f64) -> Result<Self> {
        if !(zeta > 0.0 && zeta < 1.0) {
            return Err(Error::validation(format!(
                "capture probability must lie in (0, 1), got {zeta}"
            )));
        }
        Ok(Self { m, zeta })
    }

    /// `ln(zeta / (1 - zeta))`.
    pub fn log_odds(&self) -> f64 {
        self.zeta.ln() - (-self.zeta).ln_1p()
    }
}

/// Exact table of `P(Y1 = y | Y1 + Y2 = n)` built from the two binomial
/// pmfs directly; index 0 corresponds to `support.lo`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionTable {
    pub support: UnivariateSupport,
    pub probs: Vec<f64>,
}

pub fn binomial_condition_oracle(
    model1: BinomialCaptureModel,
    model2: BinomialCaptureModel,
    n: u64,
) -> Result<ConditionTable> {
    let model1 = BinomialCaptureModel::new(model1.m, model1.zeta)?;
    let model2 = BinomialCaptureModel::new(model2.m, model2.zeta)?;
    let total = model1.m + model2.m;
    if n > total {
        return Err(Error::EmptySupport { n, total });
    }
    let b1 = Binomial::new(model1.zeta, model1.m).map_err(|e| Error::validation(e.to_string()))?;
    let b2 = Binomial::new(model2.zeta, model2.m).map_err(|e| Error::validation(e.to_string()))?;
    let support = UnivariateSupport {
        lo: n.saturating_sub(model2.m),
        hi: n.min(model1.m),
    };
    let logs: Vec<f64> = support
        .iter()
        .map(|y| b1.ln_pmf(y) + b2.ln_pmf(n - y))
        .collect();
    let norm = log_sum_exp(&logs);
    let probs = logs.iter().map(|l| (l - norm).exp()).collect();
    Ok(ConditionTable { support, probs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn central_two_by_two() {
        let lp = log_pmf_univariate(2, 2, 2, 0.0, 1).unwrap();
        assert!(close(lp, (2.0f64 / 3.0).ln(), 1e-14));
        let d = UnivariateFnch::new(2, 2, 2, 0.0).unwrap();
        assert_eq!(d.pmf(1), 0.6666666666666666);
    }

    #[test]
    fn single_pair_with_odds_three() {
        let lp = log_pmf_univariate(1, 1, 1, 3f64.ln(), 1).unwrap();
        assert!(close(lp, 0.75f64.ln(), 1e-14));
    }

    #[test]
    fn out_of_support_is_neg_inf() {
        let d = UnivariateFnch::new(3, 2, 4, 0.3).unwrap();
        assert_eq!(d.support(), UnivariateSupport { lo: 2, hi: 3 });
        assert_eq!(d.log_pmf(1), f64::NEG_INFINITY);
        assert_eq!(d.log_pmf(4), f64::NEG_INFINITY);
        assert_eq!(d.log_pmf(-1), f64::NEG_INFINITY);
        assert_eq!(d.pmf(5), 0.0);
    }

    #[test]
    fn construction_errors() {
        assert!(matches!(
            UnivariateFnch::new(2, 2, 5, 0.0),
            Err(Error::EmptySupport { n: 5, total: 4 })
        ));
        assert!(matches!(
            log_pmf_univariate(-1, 2, 1, 0.0, 0),
            Err(Error::Validation(_))
        ));
        assert!(UnivariateFnch::new(2, 2, 1, f64::NAN).is_err());
    }

    #[test]
    fn mode_is_argmax() {
        for &(m1, m2, n, lw) in &[
            (40u64, 60u64, 30u64, 2.5f64.ln()),
            (5, 500, 100, 4.0),
            (500, 5, 100, -4.0),
            (10, 10, 10, 0.0),
            (1000, 2000, 1500, -0.7),
            (7, 3, 5, 800.0),
            (7, 3, 5, -800.0),
        ] {
            let d = UnivariateFnch::new(m1, m2, n, lw).unwrap();
            let sup = d.support();
            let best = sup
                .iter()
                .max_by(|a, b| {
                    d.log_unnormalized(*a)
                        .partial_cmp(&d.log_unnormalized(*b))
                        .unwrap()
                })
                .unwrap();
            let mode = d.mode();
            assert!(
                close(d.log_unnormalized(mode), d.log_unnormalized(best), 1e-9),
                "mode {mode} vs argmax {best} for {:?}",
                d
            );
        }
    }

    #[test]
    fn extreme_odds_stay_finite() {
        let d = UnivariateFnch::new(7, 3, 5, 800.0).unwrap();
        assert!(close(d.log_pmf(5), 0.0, 1e-12));
        assert!(d.log_pmf(4) < -700.0);
        assert!(d.log_pmf(4).is_finite());
        let table = d.pmf_table();
        assert!(close(table.iter().sum::<f64>(), 1.0, 1e-12));
    }

    #[test]
    fn degenerate_support_sampling() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for lw in [-3.0, 0.0, 5.0] {
            let d = UnivariateFnch::new(3, 0, 2, lw).unwrap();
            for _ in 0..100 {
                assert_eq!(d.sample(&mut rng), 2);
            }
        }
    }

    #[test]
    fn large_support_sample_stays_in_support() {
        let d = UnivariateFnch::new(20_000, 15_000, 9_000, 0.4).unwrap();
        assert!(d.support().len() > FULL_TABLE_MAX);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mean = d
            .pmf_table()
            .iter()
            .enumerate()
            .map(|(i, p)| (d.support().lo + i as u64) as f64 * p)
            .sum::<f64>();
        let draws: Vec<u64> = (0..20_000).map(|_| d.sample(&mut rng)).collect();
        assert!(draws.iter().all(|&v| d.support().contains(v)));
        let emp = draws.iter().sum::<u64>() as f64 / draws.len() as f64;
        assert!((emp - mean).abs() < 1.0, "{emp} vs {mean}");
    }

    #[test]
    fn multivariate_hand_enumeration() {
        let p = FnchParams::from_weights(vec![2, 1, 1], 2, &[1.0, 1.0, 2.0]).unwrap();
        assert_eq!(p.support_size(), 4);
        let lp = log_pmf_multivariate(&p, &[1, 0, 1]).unwrap();
        assert!(close(lp, (4.0f64 / 9.0).ln(), 1e-13));

        let central = FnchParams::from_weights(vec![2, 1, 1], 2, &[1.0; 3]).unwrap();
        let lp = log_pmf_multivariate(&central, &[2, 0, 0]).unwrap();
        assert!(close(lp, (1.0f64 / 6.0).ln(), 1e-13));
        assert_eq!(
            log_pmf_multivariate(&central, &[1, 1, 1]).unwrap(),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn oracle_cap_is_enforced() {
        let p = FnchParams::new(vec![50; 5], 100, vec![0.0; 5]).unwrap();
        let err = p.log_pmf_oracle(&[20; 5], 1000).unwrap_err();
        assert!(matches!(err, Error::OracleTooLarge { cap: 1000, .. }));
    }

    #[test]
    fn support_size_matches_enumeration() {
        let p = FnchParams::new(vec![5, 7, 4, 3], 8, vec![0.0; 4]).unwrap();
        let mut count = 0u128;
        p.enumerate_support(u128::MAX, |_| count += 1).unwrap();
        assert_eq!(count, p.support_size());
    }

    #[test]
    fn weights_are_canonicalized() {
        let p = FnchParams::new(vec![3, 3], 2, vec![2.0, 3.5]).unwrap();
        assert_eq!(p.log_w(), &[0.0, 1.5]);
    }

    #[test]
    fn pair_params_direct_substitution() {
        let p = FnchParams::from_weights(vec![2, 1, 1], 2, &[1.0, 1.0, 2.0]).unwrap();
        let pp = conditional_pair_params(&p, &[1, 0, 1], 0, 2).unwrap();
        assert_eq!((pp.m_a, pp.m_b, pp.n_pair), (2, 1, 2));
        assert!(close(pp.log_w_pair, 0.5f64.ln(), 1e-15));

        let eq = FnchParams::new(vec![4, 5, 6], 6, vec![0.7; 3]).unwrap();
        let pp = eq.pair(&[2, 2, 2], 1, 2).unwrap();
        assert_eq!(pp.log_w_pair, 0.0);

        assert!(matches!(p.pair(&[1, 0, 1], 1, 1), Err(Error::Validation(_))));
        assert!(matches!(p.pair(&[1, 0, 1], 0, 3), Err(Error::Validation(_))));
    }

    #[test]
    fn binomial_condition_small_cases() {
        let half = BinomialCaptureModel::new(1, 0.5).unwrap();
        let t = binomial_condition_oracle(half, half, 1).unwrap();
        assert!(close(t.probs[0], 0.5, 1e-14) && close(t.probs[1], 0.5, 1e-14));

        let hi = BinomialCaptureModel::new(1, 0.75).unwrap();
        let t = binomial_condition_oracle(hi, half, 1).unwrap();
        assert!(close(t.probs[1], 0.75, 1e-14));

        assert!(BinomialCaptureModel::new(3, 1.0).is_err());
        assert!(BinomialCaptureModel::new(3, 0.0).is_err());
        let bad = BinomialCaptureModel { m: 2, zeta: 1.5 };
        assert!(binomial_condition_oracle(bad, half, 1).is_err());
    }
}
