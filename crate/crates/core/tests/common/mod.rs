//! Independent oracles shared by the integration tests. Nothing here calls
//! the library's pmf code.

#![allow(dead_code)]

use std::collections::BTreeMap;

use num_bigint::BigUint;

/// `ln C(n, k)` by direct summation of logs.
pub fn ln_choose(n: i64, k: i64) -> f64 {
    if k < 0 || k > n || n < 0 {
        return f64::NEG_INFINITY;
    }
    let k = k.min(n - k);
    (1..=k).map(|i| ((n - k + i) as f64).ln() - (i as f64).ln()).sum()
}

fn lse(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Univariate FNCH pmf over its whole support by brute-force normalization.
pub fn fnch_table(m1: i64, m2: i64, n: i64, log_w: f64) -> BTreeMap<i64, f64> {
    let lo = (n - m2).max(0);
    let hi = n.min(m1);
    let terms: Vec<f64> = (lo..=hi)
        .map(|y| ln_choose(m1, y) + ln_choose(m2, n - y) + y as f64 * log_w)
        .collect();
    let z = lse(&terms);
    (lo..=hi).zip(terms).map(|(y, t)| (y, (t - z).exp())).collect()
}

pub fn fnch_log_pmf(m1: i64, m2: i64, n: i64, log_w: f64, y: i64) -> f64 {
    fnch_table(m1, m2, n, log_w)
        .get(&y)
        .map_or(f64::NEG_INFINITY, |p| p.ln())
}

/// Exact pmf for a rational weight `num / den`, summing big integers:
/// every term is scaled by `den^n` so the whole sum stays integral.
pub fn fnch_pmf_exact(m1: u64, m2: u64, n: u64, num: u64, den: u64, y: u64) -> f64 {
    let choose = |a: u64, b: u64| -> BigUint {
        let mut r = BigUint::from(1u32);
        for i in 0..b {
            r = r * BigUint::from(a - i) / BigUint::from(i + 1);
        }
        r
    };
    let lo = n.saturating_sub(m2);
    let hi = n.min(m1);
    let term = |k: u64| {
        choose(m1, k) * choose(m2, n - k) * BigUint::from(num).pow(k as u32) * BigUint::from(den).pow((n - k) as u32)
    };
    let total: BigUint = (lo..=hi).map(term).sum();
    let t = term(y);
    // Ratio of two big integers with 60 bits of headroom.
    let scale = BigUint::from(1u64) << 60;
    let q: BigUint = t * scale / total;
    let digits = q.to_u64_digits();
    let mut v = 0.0;
    for d in digits.iter().rev() {
        v = v * 18446744073709551616.0 + *d as f64;
    }
    v / 2f64.powi(60)
}

/// Multivariate FNCH pmf by enumerating every composition.
pub fn multivariate_pmf(m: &[i64], n: i64, log_w: &[f64], y: &[i64]) -> f64 {
    fn rec(m: &[i64], log_w: &[f64], left: i64, acc: f64, out: &mut Vec<f64>) {
        if m.len() == 1 {
            if left <= m[0] {
                out.push(acc + ln_choose(m[0], left) + left as f64 * log_w[0]);
            }
            return;
        }
        for k in 0..=left.min(m[0]) {
            rec(&m[1..], &log_w[1..], left - k, acc + ln_choose(m[0], k) + k as f64 * log_w[0], out);
        }
    }
    let mut terms = Vec::new();
    rec(m, log_w, n, 0.0, &mut terms);
    let z = lse(&terms);
    let own: f64 = m
        .iter()
        .zip(y)
        .zip(log_w)
        .map(|((&mc, &yc), &lw)| ln_choose(mc, yc) + yc as f64 * lw)
        .sum();
    (own - z).exp()
}

/// Discrete distribution over keys, normalized from log weights.
pub fn normalize<K: Ord + Clone>(log_w: &BTreeMap<K, f64>) -> BTreeMap<K, f64> {
    let vals: Vec<f64> = log_w.values().cloned().collect();
    let z = lse(&vals);
    log_w.iter().map(|(k, v)| (k.clone(), (v - z).exp())).collect()
}

pub fn marginal<K: Ord + Clone, J: Ord>(
    joint: &BTreeMap<K, f64>,
    f: impl Fn(&K) -> J,
) -> BTreeMap<J, f64> {
    let mut out = BTreeMap::new();
    for (k, p) in joint {
        *out.entry(f(k)).or_insert(0.0) += p;
    }
    out
}

pub fn empirical(values: &[f64]) -> BTreeMap<i64, f64> {
    let mut out = BTreeMap::new();
    for v in values {
        *out.entry(v.round() as i64).or_insert(0.0) += 1.0 / values.len() as f64;
    }
    out
}

pub fn total_variation(a: &BTreeMap<i64, f64>, b: &BTreeMap<i64, f64>) -> f64 {
    let keys: std::collections::BTreeSet<i64> = a.keys().chain(b.keys()).cloned().collect();
    0.5 * keys
        .iter()
        .map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs())
        .sum::<f64>()
}

/// Log prior mass for the families used in the oracle instances.
#[derive(Clone, Debug)]
pub enum Mass {
    Uniform(i64, i64),
    Point(i64),
    /// Poisson(mean) restricted to `lower..`, unnormalized.
    Poisson(f64, i64),
}

impl Mass {
    pub fn log(&self, k: i64) -> f64 {
        match *self {
            Mass::Uniform(a, b) => {
                if (a..=b).contains(&k) {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            Mass::Point(v) => {
                if k == v {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            Mass::Poisson(mean, lower) => {
                if k < lower {
                    f64::NEG_INFINITY
                } else {
                    k as f64 * mean.ln() - (1..=k).map(|i| (i as f64).ln()).sum::<f64>()
                }
            }
        }
    }

    pub fn range(&self, cap: i64) -> (i64, i64) {
        match *self {
            Mass::Uniform(a, b) => (a, b),
            Mass::Point(v) => (v, v),
            Mass::Poisson(_, lower) => (lower, cap),
        }
    }
}

/// Exact joint posterior of `(M, N)` for one list with fixed `log w`.
/// With `tied`, the size prior is renormalized on `[a, N - y_u - 1]`.
pub fn univariate_posterior(
    ye: i64,
    yu: i64,
    size: &Mass,
    total: &Mass,
    log_w: f64,
    tied: bool,
    n_cap: i64,
) -> BTreeMap<(i64, i64), f64> {
    let (nlo, nhi) = total.range(n_cap);
    let (mlo, mhi) = size.range(n_cap);
    let mut lw = BTreeMap::new();
    for n_tot in nlo..=nhi {
        let upper = if tied { mhi.min(n_tot - yu - 1) } else { mhi };
        if upper < mlo {
            continue;
        }
        let norm = if tied {
            lse(&(mlo..=upper).map(|k| size.log(k)).collect::<Vec<_>>())
        } else {
            0.0
        };
        for m in mlo..=upper {
            if m < ye || n_tot - m < yu {
                continue;
            }
            let l = fnch_log_pmf(m, n_tot - m, ye + yu, log_w, ye);
            let v = total.log(n_tot) + size.log(m) - norm + l;
            if v.is_finite() {
                lw.insert((m, n_tot), v);
            }
        }
    }
    normalize(&lw)
}

/// Exact posterior of group sizes under the full multivariate likelihood.
pub fn multivariate_posterior(y: &[i64], priors: &[Mass], log_w: &[f64], cap: i64) -> BTreeMap<Vec<i64>, f64> {
    let n: i64 = y.iter().sum();
    let ranges: Vec<(i64, i64)> = priors.iter().map(|p| p.range(cap)).collect();
    let mut lw = BTreeMap::new();
    let mut state: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    loop {
        if state.iter().zip(y).all(|(m, yc)| m >= yc) {
            let lp: f64 = priors.iter().zip(&state).map(|(p, &m)| p.log(m)).sum();
            let l = multivariate_pmf(&state, n, log_w, y).ln();
            if (lp + l).is_finite() {
                lw.insert(state.clone(), lp + l);
            }
        }
        let mut i = 0;
        loop {
            if i == state.len() {
                return normalize(&lw);
            }
            if state[i] < ranges[i].1 {
                state[i] += 1;
                break;
            }
            state[i] = ranges[i].0;
            i += 1;
        }
    }
}

/// Stationary law of a systematic-scan Gibbs sampler whose update for group
/// `c` draws `M_c` from `prior_c * P(y_c | pair with anchor)`, the anchor being
/// group 0 for every other group and group 1 for group 0. Power iteration over
/// the product grid.
pub fn pair_gibbs_stationary(y: &[i64], priors: &[Mass], log_w: &[f64], cap: i64) -> BTreeMap<Vec<i64>, f64> {
    let c = y.len();
    let ranges: Vec<(i64, i64)> = priors.iter().map(|p| p.range(cap)).collect();
    let dims: Vec<usize> = ranges.iter().map(|r| (r.1 - r.0 + 1) as usize).collect();
    let total: usize = dims.iter().product();
    let index = |s: &[usize]| s.iter().zip(&dims).rev().fold(0usize, |acc, (v, d)| acc * d + v);
    let unindex = |mut i: usize| {
        let mut s = vec![0usize; c];
        for (k, d) in dims.iter().enumerate() {
            s[k] = i % d;
            i /= d;
        }
        s
    };
    let anchor = |g: usize| if g == 0 { 1 } else { 0 };
    // cond[g][anchor value] = distribution over M_g values
    let cond: Vec<Vec<Vec<f64>>> = (0..c)
        .map(|g| {
            let a = anchor(g);
            (0..dims[a])
                .map(|ai| {
                    let ma = ranges[a].0 + ai as i64;
                    let lw: Vec<f64> = (0..dims[g])
                        .map(|gi| {
                            let mg = ranges[g].0 + gi as i64;
                            priors[g].log(mg)
                                + fnch_log_pmf(mg, ma, y[g] + y[a], log_w[g] - log_w[a], y[g])
                        })
                        .collect();
                    let z = lse(&lw);
                    lw.iter().map(|v| if z.is_finite() { (v - z).exp() } else { 0.0 }).collect()
                })
                .collect()
        })
        .collect();
    let mut p = vec![1.0 / total as f64; total];
    for _ in 0..2000 {
        let before = p.clone();
        for g in 0..c {
            let a = anchor(g);
            let mut next = vec![0.0; total];
            for (i, &mass) in p.iter().enumerate() {
                if mass == 0.0 {
                    continue;
                }
                let mut s = unindex(i);
                let dist = &cond[g][s[a]];
                for (gi, q) in dist.iter().enumerate() {
                    if *q > 0.0 {
                        s[g] = gi;
                        next[index(&s)] += mass * q;
                    }
                }
            }
            p = next;
        }
        let diff: f64 = p.iter().zip(&before).map(|(a, b)| (a - b).abs()).sum();
        if diff < 1e-13 {
            break;
        }
    }
    (0..total)
        .filter(|&i| p[i] > 0.0)
        .map(|i| {
            let s = unindex(i);
            (s.iter().zip(&ranges).map(|(v, r)| r.0 + *v as i64).collect(), p[i])
        })
        .collect()
}
