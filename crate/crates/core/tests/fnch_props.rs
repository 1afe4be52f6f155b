mod common;

use common::*;
use fnch_core::fnch::{
    binomial_condition_oracle, conditional_pair_params, log_pmf_multivariate, log_pmf_univariate,
    sample_univariate, BinomialCaptureModel, FnchParams,
};
use fnch_core::rng::master_stream;
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn univariate_instance() -> impl Strategy<Value = (i64, i64, i64, f64)> {
    (0i64..40, 0i64..40, -4.0f64..4.0).prop_flat_map(|(m1, m2, lw)| {
        (Just(m1), Just(m2), 0..=(m1 + m2), Just(lw))
    })
}

fn multivariate_instance() -> impl Strategy<Value = (Vec<u64>, Vec<f64>, Vec<u64>)> {
    (2usize..5)
        .prop_flat_map(|c| (prop::collection::vec(0u64..7, c), prop::collection::vec(-2.0f64..2.0, c)))
        .prop_flat_map(|(m, lw)| {
            // Any y with y_c <= m_c is a valid point of the support of n = sum y.
            let ys: Vec<_> = m.iter().map(|&mc| 0..=mc).collect();
            (Just(m), Just(lw), ys)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn univariate_pmf_sums_to_one((m1, m2, n, lw) in univariate_instance()) {
        let total: f64 = (0..=n)
            .map(|y| log_pmf_univariate(m1, m2, n, lw, y).unwrap().exp())
            .sum();
        prop_assert!((total - 1.0).abs() < 1e-10, "sum {total}");
    }

    #[test]
    fn univariate_pmf_matches_brute_force((m1, m2, n, lw) in univariate_instance()) {
        for (y, p) in fnch_table(m1, m2, n, lw) {
            let got = log_pmf_univariate(m1, m2, n, lw, y).unwrap().exp();
            prop_assert!((got - p).abs() < 1e-11, "y={y}: {got} vs {p}");
        }
    }

    #[test]
    fn zero_log_odds_is_hypergeometric((m1, m2, n, _lw) in univariate_instance()) {
        for y in 0..=n {
            let got = log_pmf_univariate(m1, m2, n, 0.0, y).unwrap();
            let hyper = ln_choose(m1, y) + ln_choose(m2, n - y) - ln_choose(m1 + m2, n);
            if hyper.is_finite() {
                prop_assert!((got - hyper).abs() < 1e-12, "y={y}: {got} vs {hyper}");
            } else {
                prop_assert_eq!(got, f64::NEG_INFINITY);
            }
        }
    }

    #[test]
    fn swapping_labels_inverts_the_odds((m1, m2, n, lw) in univariate_instance()) {
        for y in 0..=n {
            let a = log_pmf_univariate(m1, m2, n, lw, y).unwrap();
            let b = log_pmf_univariate(m2, m1, n, -lw, n - y).unwrap();
            if a.is_finite() {
                prop_assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            } else {
                prop_assert_eq!(b, f64::NEG_INFINITY);
            }
        }
    }

    #[test]
    fn shifting_every_weight_changes_nothing((m, lw, y) in multivariate_instance(), k in -5.0f64..5.0) {
        let n: u64 = y.iter().sum();
        let shifted: Vec<f64> = lw.iter().map(|v| v + k).collect();
        let a = log_pmf_multivariate(&FnchParams::new(m.clone(), n, lw).unwrap(), &y).unwrap();
        let b = log_pmf_multivariate(&FnchParams::new(m, n, shifted).unwrap(), &y).unwrap();
        prop_assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn multivariate_pmf_matches_enumeration((m, lw, y) in multivariate_instance()) {
        let n: u64 = y.iter().sum();
        let got = log_pmf_multivariate(&FnchParams::new(m.clone(), n, lw.clone()).unwrap(), &y).unwrap().exp();
        let mi: Vec<i64> = m.iter().map(|v| *v as i64).collect();
        let yi: Vec<i64> = y.iter().map(|v| *v as i64).collect();
        let want = multivariate_pmf(&mi, n as i64, &lw, &yi);
        prop_assert!((got - want).abs() < 1e-11, "{got} vs {want}");
    }

    #[test]
    fn multivariate_pmf_sums_to_one((m, lw, _y) in multivariate_instance(), frac in 0.0f64..1.0) {
        let n = (frac * m.iter().sum::<u64>() as f64).floor() as u64;
        let params = FnchParams::new(m, n, lw).unwrap();
        let mut total = 0.0;
        params
            .enumerate_support(1_000_000, |y| total += log_pmf_multivariate(&params, y).unwrap().exp())
            .unwrap();
        prop_assert!((total - 1.0).abs() < 1e-10, "sum {total}");
    }

    #[test]
    fn joint_is_pair_conditional_times_rest((m, lw, y) in multivariate_instance(), a in 0usize..4, b in 0usize..4) {
        let c = m.len();
        let (a, b) = (a % c, b % c);
        prop_assume!(a != b);
        let n: u64 = y.iter().sum();
        let params = FnchParams::new(m, n, lw).unwrap();
        let pair = conditional_pair_params(&params, &y, a, b).unwrap();
        let cond = pair.distribution().unwrap().log_pmf(y[a] as i64);
        // P(Y_a + Y_b = t, rest) by summing the joint over reallocations within the pair.
        let t = y[a] + y[b];
        let mut rest = Vec::new();
        for k in 0..=t {
            let mut z = y.clone();
            z[a] = k;
            z[b] = t - k;
            if z[a] <= params.m()[a] && z[b] <= params.m()[b] {
                rest.push(log_pmf_multivariate(&params, &z).unwrap());
            }
        }
        let rest = fnch_core::math::log_sum_exp(&rest);
        let joint = log_pmf_multivariate(&params, &y).unwrap();
        prop_assert!((joint - (cond + rest)).abs() < 1e-10, "{joint} vs {cond} + {rest}");
    }

    #[test]
    fn binomial_conditioning_matches_the_pmf(
        m1 in 0u64..30, m2 in 0u64..30, z1 in 0.01f64..0.99, z2 in 0.01f64..0.99, frac in 0.0f64..1.0,
    ) {
        let n = (frac * (m1 + m2) as f64).round() as u64;
        let b1 = BinomialCaptureModel::new(m1, z1).unwrap();
        let b2 = BinomialCaptureModel::new(m2, z2).unwrap();
        let table = binomial_condition_oracle(b1, b2, n).unwrap();
        let lw = b1.log_odds() - b2.log_odds();
        for (y, p) in table.support.iter().zip(&table.probs) {
            let got = log_pmf_univariate(m1 as i64, m2 as i64, n as i64, lw, y as i64).unwrap().exp();
            prop_assert!((got - p).abs() < 1e-10, "y={y}: {got} vs {p}");
        }
    }

    #[test]
    fn draws_stay_in_the_support((m1, m2, n, lw) in univariate_instance(), seed in any::<u64>()) {
        let mut rng = master_stream(seed);
        let lo = (n - m2).max(0);
        let hi = n.min(m1);
        for _ in 0..50 {
            let y = sample_univariate(&mut rng, m1, m2, n, lw).unwrap() as i64;
            prop_assert!((lo..=hi).contains(&y));
        }
    }
}

#[test]
fn extended_precision_reference_point() {
    // w = 2.5 = 5/2 exactly, so the big-integer enumerator is exact.
    let got = log_pmf_univariate(40, 60, 30, 2.5f64.ln(), 18).unwrap().exp();
    let want = fnch_pmf_exact(40, 60, 30, 5, 2, 18);
    assert!(((got - want) / want).abs() < 1e-12, "{got} vs {want}");
}

#[test]
fn sampler_passes_chi_square_against_brute_force() {
    let (m1, m2, n, lw) = (40, 60, 30, 2.5f64.ln());
    let table = fnch_table(m1, m2, n, lw);
    let draws = 100_000;
    let mut counts = std::collections::BTreeMap::<i64, f64>::new();
    let mut rng = master_stream(2024);
    for _ in 0..draws {
        *counts.entry(sample_univariate(&mut rng, m1, m2, n, lw).unwrap() as i64).or_default() += 1.0;
    }
    // Pool bins with expected count below 5 into their neighbours.
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for (y, p) in &table {
        acc.0 += p * draws as f64;
        acc.1 += counts.get(y).copied().unwrap_or(0.0);
        if acc.0 >= 5.0 {
            bins.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if let Some(last) = bins.last_mut() {
        last.0 += acc.0;
        last.1 += acc.1;
    }
    let stat: f64 = bins.iter().map(|(e, o)| (o - e).powi(2) / e).sum();
    let crit = ChiSquared::new((bins.len() - 1) as f64).unwrap().inverse_cdf(0.999);
    assert!(stat < crit, "chi-square {stat} >= {crit}");
}

#[test]
fn hypergeometric_sampling_frequency() {
    let mut rng = master_stream(7);
    let hits = (0..100_000)
        .filter(|_| sample_univariate(&mut rng, 2, 2, 2, 0.0).unwrap() == 1)
        .count();
    let f = hits as f64 / 1e5;
    assert!((f - 2.0 / 3.0).abs() < 0.01, "{f}");
}

#[test]
fn four_group_example_two_ways() {
    let m = vec![5u64, 7, 4, 3];
    let w = [1.5f64, 0.7, 2.0, 1.0];
    let lw: Vec<f64> = w.iter().map(|v| v.ln()).collect();
    let y = vec![3u64, 2, 2, 1];
    let params = FnchParams::new(m, 8, lw.clone()).unwrap();
    let got = log_pmf_multivariate(&params, &y).unwrap().exp();
    let want = multivariate_pmf(&[5, 7, 4, 3], 8, &lw, &[3, 2, 2, 1]);
    assert!((got - want).abs() < 1e-12, "{got} vs {want}");

    // Pair (1, 2): the conditional equals joint over the pair's marginal.
    let pair = conditional_pair_params(&params, &y, 0, 1).unwrap();
    let cond = pair.distribution().unwrap().pmf(3);
    let marg: f64 = (0..=5)
        .map(|k| multivariate_pmf(&[5, 7, 4, 3], 8, &lw, &[k, 5 - k, 2, 1]))
        .sum();
    assert!((cond - want / marg).abs() < 1e-12);
}

#[test]
fn binomial_conditioning_reference_table() {
    let b1 = BinomialCaptureModel::new(12, 0.3).unwrap();
    let b2 = BinomialCaptureModel::new(9, 0.6).unwrap();
    let table = binomial_condition_oracle(b1, b2, 10).unwrap();
    // Independent: product of binomial pmfs normalized over the support.
    let lw = (0.3f64 / 0.7).ln() - (0.6f64 / 0.4).ln();
    let expect = fnch_table(12, 9, 10, lw);
    assert_eq!(table.probs.len(), expect.len());
    for (p, (_, q)) in table.probs.iter().zip(&expect) {
        assert!((p - q).abs() < 1e-12);
    }
}
